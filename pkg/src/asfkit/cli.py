"""Batch command-line front end.

Every subcommand writes CSV (header row, LF line endings) and/or JSON into
``--out`` plus a ``<command>.manifest.json`` describing the run. Exit codes:
0 success, 1 computational failure, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys as _sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .blowup import CHARTS, best_chart, blow_down, conjugacy_defect, k2_trajectory, round_trip_residual
from .config import Config, load_config
from .errors import ASFError, ConfigError
from .heteroclinic import find_connection
from .integrator import RunSetup, classify_outcome, empirical_critical, simulate
from .melnikov import (
    evaluate,
    manifold_gap_direct,
    trace_critical_curve,
)
from .system import branches_for, slow_manifold_point
from .tracking import certify_tracking, contraction_check, tracked_manifold

JOBS_ENV = "ASFKIT_JOBS"


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None
        if n < 1:
            raise ConfigError(f"{JOBS_ENV} must be positive")
        return n
    return os.cpu_count() or 1


# ------------------------------------------------------------------ output


class Outputs:
    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.files: list[str] = []

    def _path(self, name: str) -> Path:
        self.dir.mkdir(parents=True, exist_ok=True)
        p = self.dir / name
        self.files.append(str(p))
        return p

    def csv(self, name: str, header, rows) -> Path:
        p = self._path(name)
        with open(p, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(v) for v in r])
        return p

    def json(self, name: str, obj) -> Path:
        p = self._path(name)
        with open(p, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return v


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return v


# ----------------------------------------------------------------- helpers


def _param(args, cfg: Config, name: str) -> float:
    v = getattr(args, name, None)
    return float(cfg["system"][name] if v is None else v)


def _eps(args, cfg: Config) -> float:
    v = getattr(args, "eps", None)
    eps = float(cfg["solver"]["eps"] if v is None else v)
    if not eps > 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    return eps


def _setup(cfg: Config) -> RunSetup:
    s = cfg["solver"]
    return RunSetup(rho=float(cfg["system"]["rho"]), s_probe=s["s_probe"], dist_tol=float(s["dist_tol"]))


def _horizon(args, cfg):
    v = getattr(args, "horizon", None)
    if v is None:
        v = cfg["melnikov"]["horizon"]
    return None if v is None else float(v)


# ---------------------------------------------------------------- commands


def cmd_simulate(args, cfg, out: Outputs) -> dict:
    sys = cfg.system()
    mu, sigma, eps = _param(args, cfg, "mu"), _param(args, cfg, "sigma"), _eps(args, cfg)
    rho = float(cfg["system"]["rho"])
    setup = _setup(cfg)
    s0 = -rho if args.s0 is None else args.s0
    s_end = rho if args.s_end is None else args.s_end
    brs = branches_for(sys, sigma, rho=rho)
    if args.x0 is not None:
        x0 = np.atleast_1d(np.asarray(args.x0, dtype=float))
    else:
        minus = [b for b in brs.values() if b.side == "minus"]
        if not minus:
            raise ConfigError("no minus-side branch configured; pass --x0")
        x0, _ = slow_manifold_point(sys, minus[0], s0, mu, sigma, eps)
    s_probe = setup.s_probe if setup.s_probe is not None else 0.8 * rho
    events = (s_probe,) if s0 < s_probe <= s_end else ()
    tr = simulate(sys, x0, s0, mu, sigma, eps, s_end, cfg.solve_settings(), s_events=events)
    targets = [b for b in brs.values() if b.side == "plus" and b.stability == "attracting"]
    outcome = None
    if events and targets:
        outcome = classify_outcome(tr, targets, s_probe, setup.dist_tol)
    if args.samples:
        if tr.trajectory is None:
            raise ConfigError("--samples needs [solver] dense_output = true")
        t = np.linspace(tr.t[0], tr.t[-1], args.samples)
        x = np.atleast_2d(tr.trajectory(t).reshape(args.samples, -1))
        s = s0 + eps * t
    else:
        t, x, s = tr.t, tr.x, tr.s
    header = ["t", "s"] + [f"x{i}" for i in range(sys.dim)]
    out.csv("simulate.csv", header, ([ti, si, *xi] for ti, si, xi in zip(t, s, x)))
    summary = {
        "mu": mu, "sigma": sigma, "eps": eps, "s0": s0, "s_end": s_end, "x0": x0, "x_end": tr.x[-1],
        "steps": len(tr.t) - 1,
        "outcome": None if outcome is None else {"branch": outcome.label, "distance": outcome.distance,
                                                 "distances": outcome.distances, "s_probe": outcome.s_probe},
    }
    out.json("simulate.json", summary)
    return summary


def cmd_heteroclinic(args, cfg, out):
    sys = cfg.system()
    mu, sigma = _param(args, cfg, "mu"), _param(args, cfg, "sigma")
    phi = find_connection(sys, args.case, mu, sigma, param_bracket=args.bracket, T=_horizon(args, cfg))
    t = phi.grid
    header = ["t"] + [f"x{i}" for i in range(sys.dim)]
    out.csv("heteroclinic.csv", header, ([ti, *np.atleast_1d(xi)] for ti, xi in zip(t, phi.values)))
    summary = phi.as_dict()
    summary["defect"] = phi.defect(sys)
    out.json("heteroclinic.json", summary)
    return summary


def cmd_melnikov(args, cfg, out):
    sys = cfg.system()
    mu, sigma = _param(args, cfg, "mu"), _param(args, cfg, "sigma")
    norm = args.normalization or cfg["melnikov"]["normalization"]
    rep = evaluate(sys, mu, sigma, norm, _horizon(args, cfg))
    summary = rep.as_dict()
    summary["normalization"] = norm
    out.json("melnikov.json", summary)
    return summary


def cmd_critical_curve(args, cfg, out):
    sys = cfg.system()
    mc = cfg["melnikov"]
    bracket = tuple(args.sigma_bracket or mc["sigma_bracket"])
    norm = args.normalization or mc["normalization"]
    rows = trace_critical_curve(sys, args.mu_range, args.points, bracket, norm, _horizon(args, cfg), jobs=args.jobs)
    out.csv("critical_curve.csv", ["mu", "sigma_c", "dGdsigma"], ([r.mu, r.sigma_c, r.dGdsigma] for r in rows))
    failures = [{"mu": r.mu, "error": r.error} for r in rows if r.error]
    summary = {"points": len(rows), "failures": failures, "normalization": norm, "sigma_bracket": bracket,
               "mu_range": list(args.mu_range)}
    out.json("critical_curve.json", summary)
    if len(failures) == len(rows):
        raise ASFError("no point of the critical curve could be computed")
    return summary


def cmd_gap_oracle(args, cfg, out):
    sys = cfg.system()
    mu, sigma = _param(args, cfg, "mu"), _param(args, cfg, "sigma")
    rho = float(cfg["system"]["rho"])
    norm = cfg["melnikov"]["normalization"]
    rep = evaluate(sys, mu, sigma, norm, _horizon(args, cfg))
    G = rep.G_eps
    settings = cfg.solve_settings()
    if not all(e > 0 for e in args.eps):
        raise ConfigError("--eps values must be positive")
    rows = []
    for e in args.eps:
        g = manifold_gap_direct(sys, mu, sigma, e, rho, settings)
        rows.append((e, g.D, g.D / e))
    out.csv("gap_oracle.csv", ["eps", "D", "D/eps"], rows)
    rel = [abs(r[2] - G) / abs(G) if G != 0 else math.inf for r in rows]
    summary = {"mu": mu, "sigma": sigma, "G_eps": G, "normalization": norm, "eps": list(args.eps),
               "relative_error": rel,
               "decreasing": bool(all(b < a for a, b in zip(rel, rel[1:])))}
    out.json("gap_oracle.json", summary)
    return summary


def cmd_tipping_scan(args, cfg, out):
    sys = cfg.system()
    mu, sigma, eps = _param(args, cfg, "mu"), _param(args, cfg, "sigma"), _eps(args, cfg)
    tol = float(args.param_tol if args.param_tol is not None else cfg["solver"]["param_tol"])
    fixed = {"mu": mu, "sigma": sigma}
    res = empirical_critical(sys, args.vary, fixed, eps, args.bracket, cfg.solve_settings(), tol, _setup(cfg))
    rows = sorted(res.evaluations, key=lambda r: r[0])
    out.csv("tipping_scan.csv", ["param", "outcome", "distance"], rows)
    summary = {"vary": args.vary, "fixed": {k: v for k, v in fixed.items() if k != args.vary}, "eps": eps,
               "bracket": list(args.bracket), "final_bracket": list(res.bracket), "param_tol": tol,
               "empirical_critical": res.value, "evaluations": len(res.evaluations)}
    out.json("tipping_scan.json", summary)
    return summary


def cmd_tracking_check(args, cfg, out):
    sys = cfg.system()
    mu, sigma, eps = _param(args, cfg, "mu"), _param(args, cfg, "sigma"), _eps(args, cfg)
    hyp = cfg.tracking_hypotheses()
    cert = certify_tracking(sys, hyp, mu, sigma)
    summary = {"mu": mu, "sigma": sigma, "eps": eps, "certificate": cert.as_dict()}
    if cert.verified:
        settings = cfg.solve_settings()
        man = tracked_manifold(sys, mu, sigma, eps, hyp, settings, cert, n_samples=args.samples)
        header = ["s"] + [f"omega{i}" for i in range(sys.dim)]
        out.csv("tracking_omega.csv", header, ([si, *oi] for si, oi in zip(man.s, man.omega)))
        summary["invariance_defect"] = man.invariance_defect(sys, hyp.M)
        summary["contraction"] = contraction_check(sys, mu, sigma, eps, hyp, cert.l22, settings=settings)
    else:
        summary["note"] = "certificate not verified; omega not computed"
    out.json("tracking_certificate.json", summary)
    return summary


def cmd_charts(args, cfg, out):
    sys = cfg.system()
    mu, sigma = _param(args, cfg, "mu"), _param(args, cfg, "sigma")
    r2 = float(args.r2)
    if r2 < 0:
        raise ConfigError("--r2 must be nonnegative")
    lo, hi = args.s2_range
    if args.x0 is not None:
        x0 = np.atleast_1d(np.asarray(args.x0, dtype=float))
    else:
        x0 = np.atleast_1d(sys.seeds.get("minus", np.zeros(sys.dim))).astype(float)
    t, xs = k2_trajectory(sys, x0, (lo, hi), r2, mu, sigma, n_out=args.points)
    rows, checks = [], []
    for s2, x in zip(t, xs):
        p = best_chart(r2, s2, x)
        xb, s, e = blow_down(p)
        rows.append([s2, p.chart, *p.coords, s, e, *x])
        if r2 > 0:
            for target in CHARTS:
                if target == p.chart:
                    continue
                try:
                    res = round_trip_residual(p, target)
                    conj = conjugacy_defect(sys, p, target, mu, sigma)
                except (ASFError, ValueError):
                    continue
                checks.append([s2, p.chart, target, res, conj])
    header = ["s2", "chart", "c1", "c2", "s", "eps"] + [f"x{i}" for i in range(sys.dim)]
    out.csv("charts_trajectory.csv", header, rows)
    out.csv("charts_roundtrip.csv", ["s2", "chart", "target", "roundtrip_residual", "conjugacy_defect"], checks)
    summary = {"r2": r2, "s2_range": [lo, hi], "mu": mu, "sigma": sigma,
               "max_roundtrip_residual": max((c[3] for c in checks), default=0.0),
               "max_conjugacy_defect": max((c[4] for c in checks), default=0.0)}
    out.json("charts.json", summary)
    return summary


def cmd_validate_config(args, cfg, out):
    sys = cfg.system()
    summary = {"valid": True, "system": sys.name, "dim": sys.dim, "partials_mode": sys.partials_mode,
               "ramp": sys.ramp.name, "config": cfg.as_dict()}
    print(json.dumps(_jsonable({k: v for k, v in summary.items() if k != "config"}), sort_keys=True))
    return summary


COMMANDS = {
    "simulate": cmd_simulate,
    "heteroclinic": cmd_heteroclinic,
    "melnikov": cmd_melnikov,
    "critical-curve": cmd_critical_curve,
    "gap-oracle": cmd_gap_oracle,
    "tipping-scan": cmd_tipping_scan,
    "tracking-check": cmd_tracking_check,
    "charts": cmd_charts,
    "validate-config": cmd_validate_config,
}


# ------------------------------------------------------------------ parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(_sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _positive_int(v):
    n = int(v)
    if n < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML configuration file")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory (default: .)")
    common.add_argument("--jobs", type=_positive_int, default=None,
                        help=f"worker processes for sweeps (default: ${JOBS_ENV} or the number of cores)")

    p = _Parser(prog="asfkit", description="Tipping and tracking in asymptotically slow-fast ODEs.")
    p.add_argument("--version", action="version", version=f"asfkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def params(sp, eps=False):
        sp.add_argument("--mu", type=float)
        sp.add_argument("--sigma", type=float)
        if eps:
            sp.add_argument("--eps", type=float)

    sp = sub.add_parser("simulate", parents=[common], help="integrate the full system (CSV trace)")
    params(sp, eps=True)
    sp.add_argument("--s0", type=float)
    sp.add_argument("--s-end", type=float)
    sp.add_argument("--x0", type=float, nargs="+")
    sp.add_argument("--samples", type=_positive_int, help="resample the trace on a uniform grid")

    sp = sub.add_parser("heteroclinic", parents=[common], help="inner connection (CSV + JSON)")
    params(sp)
    sp.add_argument("--case", choices=("I", "II", "III"), default="I")
    sp.add_argument("--bracket", type=float, nargs=2)
    sp.add_argument("--horizon", type=float)

    sp = sub.add_parser("melnikov", parents=[common], help="Melnikov integrals at one point (JSON)")
    params(sp)
    sp.add_argument("--normalization", choices=("unit-at-zero", "unit-at-one"))
    sp.add_argument("--horizon", type=float)

    sp = sub.add_parser("critical-curve", parents=[common], help="sigma_c over a mu grid (CSV)")
    sp.add_argument("--mu-range", type=float, nargs=2, required=True)
    sp.add_argument("--points", type=_positive_int, required=True)
    sp.add_argument("--sigma-bracket", type=float, nargs=2)
    sp.add_argument("--normalization", choices=("unit-at-zero", "unit-at-one"))
    sp.add_argument("--horizon", type=float)

    sp = sub.add_parser("gap-oracle", parents=[common], help="direct manifold gap D(eps) (CSV)")
    params(sp)
    sp.add_argument("--eps", type=float, nargs="+", default=[1e-3, 5e-4, 2.5e-4])
    sp.add_argument("--horizon", type=float)

    sp = sub.add_parser("tipping-scan", parents=[common], help="empirical critical value by bisection")
    params(sp, eps=True)
    sp.add_argument("--vary", choices=("mu", "sigma"), required=True)
    sp.add_argument("--bracket", type=float, nargs=2, required=True)
    sp.add_argument("--param-tol", type=float)

    sp = sub.add_parser("tracking-check", parents=[common], help="tracking certificate (JSON) and omega (CSV)")
    params(sp, eps=True)
    sp.add_argument("--samples", type=_positive_int, default=401)

    sp = sub.add_parser("charts", parents=[common], help="blow-up chart trajectory and transition checks (CSV)")
    params(sp)
    sp.add_argument("--r2", type=float, default=1e-3, help="radial coordinate (eps) of the K2 trajectory")
    sp.add_argument("--s2-range", type=float, nargs=2, default=[-20.0, 20.0])
    sp.add_argument("--points", type=_positive_int, default=401)
    sp.add_argument("--x0", type=float, nargs="+")

    sp = sub.add_parser("validate-config", parents=[common], help="parse and check a configuration file")
    sp.add_argument("path", nargs="?", type=Path)
    return p


# -------------------------------------------------------------------- main


def run(argv=None) -> int:
    """Run the CLI and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"asfkit: error: {exc}", file=_sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    t0 = time.perf_counter()
    out = Outputs(args.out)
    try:
        if args.command == "validate-config" and args.path is not None:
            args.config = args.path
        if args.jobs is None:
            args.jobs = default_jobs()
        cfg = load_config(args.config)
        summary = COMMANDS[args.command](args, cfg, out)
    except ConfigError as exc:
        print(f"asfkit: config error: {exc}", file=_sys.stderr)
        return 2
    except ASFError as exc:
        hint = getattr(exc, "hint", None)
        print(f"asfkit: {type(exc).__name__}: {exc}" + (f" ({hint})" if hint else ""), file=_sys.stderr)
        return 1
    except ValueError as exc:
        print(f"asfkit: invalid argument: {exc}", file=_sys.stderr)
        return 2
    manifest = {
        "command": args.command,
        "version": __version__,
        "arguments": {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k != "command"},
        "config": cfg.as_dict(),
        "config_source": cfg.source,
        "wall_time_s": time.perf_counter() - t0,
        "outputs": list(out.files),
    }
    if args.command != "validate-config":
        manifest["summary"] = summary
    out.json(f"{args.command}.manifest.json", manifest)
    return 0


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":  # pragma: no cover
    main()
