"""Full-system simulation, outcome classification and empirical critical values."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import SameOutcome, Unresolved
from ..system import SystemDefinition, branches_for, slow_manifold_point
from .core import SolveSettings, Trajectory, solve


@dataclass
class Outcome:
    branch: Optional[str]
    distance: float
    distances: dict
    s_probe: float

    @property
    def resolved(self) -> bool:
        return self.branch is not None

    @property
    def label(self) -> str:
        return self.branch if self.branch is not None else "unresolved"


@dataclass
class SimulationTrace:
    """Solution of ``x' = f(x, gamma(mu s/eps), s, sigma, eps)``, ``s' = eps``."""

    t: np.ndarray
    s: np.ndarray
    x: np.ndarray  # (m, n)
    s0: float
    eps: float
    events: dict = field(default_factory=dict)  # s -> x
    classification: Optional[Outcome] = None
    trajectory: Optional[Trajectory] = None

    def x_at(self, s: float) -> np.ndarray:
        if s in self.events:
            return self.events[s]
        if self.trajectory is not None and self.trajectory.interp is not None:
            return np.atleast_1d(self.trajectory((s - self.s0) / self.eps))
        if not self.s[0] <= s <= self.s[-1]:
            raise ValueError(f"s={s} outside the trace")
        return np.array([np.interp(s, self.s, self.x[:, j]) for j in range(self.x.shape[1])])


def _fields(sys: SystemDefinition, s0: float, mu: float, sigma: float, eps: float, direction: float = 1.0):
    ramp = sys.ramp
    # z = mu*s/eps = mu*s0/eps + direction*mu*t, written to avoid re-dividing by eps
    z0 = mu * s0 / eps

    def fun(t, x):
        s = s0 + direction * eps * t
        return direction * sys.rhs(x, ramp(z0 + direction * mu * t), s, sigma, eps)

    def jac(t, x):
        s = s0 + direction * eps * t
        return direction * np.atleast_2d(sys.jac_x(x, ramp(z0 + direction * mu * t), s, sigma, eps))

    return fun, jac


def simulate(
    sys: SystemDefinition,
    x0,
    s0: float,
    mu: float,
    sigma: float,
    eps: float,
    s_end: float,
    settings: SolveSettings | None = None,
    s_events=(),
) -> SimulationTrace:
    """Integrate the lifted system from ``s0`` to ``s_end``.

    ``s_events`` are slow times where the state is recorded exactly (the
    solver lands on them whatever the dense-output setting).

    Raises
    ------
    StepSizeUnderflow, BlowUp
        From the underlying solver.
    """
    settings = settings or SolveSettings()
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not s_end > s0:
        raise ValueError("s_end must exceed s0")
    fun, jac = _fields(sys, s0, mu, sigma, eps)
    t_end = (s_end - s0) / eps
    ev_s = sorted(float(v) for v in s_events if s0 < v <= s_end)
    ev_t = [(v - s0) / eps for v in ev_s]
    tr = solve(fun, jac, (0.0, t_end), x0, settings, tstops=ev_t)
    s = s0 + eps * tr.t
    s[-1] = s_end
    events = {}
    for v, tv in zip(ev_s, ev_t):
        i = int(np.argmin(np.abs(tr.t - tv)))
        events[v] = tr.y[i].copy()
    return SimulationTrace(tr.t, s, tr.y, float(s0), float(eps), events, None,
                           tr if settings.dense_output else None)


def simulate_backward(sys, x0, s0, mu, sigma, eps, s_end, settings: SolveSettings | None = None) -> np.ndarray:
    """State at ``s_end < s0`` obtained by integrating backward in time."""
    settings = settings or SolveSettings()
    fun, jac = _fields(sys, s0, mu, sigma, eps, direction=-1.0)
    tr = solve(fun, jac, (0.0, (s0 - s_end) / eps), x0, settings)
    return tr.y[-1]


def classify_outcome(trace: SimulationTrace, branches, s_probe: float | None = None, dist_tol: float = 0.1) -> Outcome:
    """Nearest branch at ``s_probe`` if it is within ``dist_tol`` and the runner-up is 3x farther."""
    if isinstance(branches, dict):
        branches = list(branches.values())
    if s_probe is None:
        rho = max(max(abs(b.s_range[0]), abs(b.s_range[1])) for b in branches)
        s_probe = 0.8 * rho
    if not trace.s[0] <= s_probe <= trace.s[-1]:
        raise ValueError(f"s_probe={s_probe} is outside the trace range")
    x = trace.x_at(s_probe)
    dist = {}
    for b in branches:
        lo, hi = b.s_range
        if not lo - 1e-12 <= s_probe <= hi + 1e-12:
            raise ValueError(f"s_probe={s_probe} is outside branch {b.label!r} range")
        dist[b.label] = float(np.linalg.norm(x - np.atleast_1d(b.h(s_probe))))
    ranked = sorted(dist.items(), key=lambda kv: kv[1])
    best, dbest = ranked[0]
    runner = ranked[1][1] if len(ranked) > 1 else math.inf
    ok = dbest <= dist_tol and runner >= 3.0 * dbest
    out = Outcome(best if ok else None, dbest, dist, float(s_probe))
    trace.classification = out
    return out


@dataclass
class RunSetup:
    """Everything needed to run one classified simulation."""

    rho: float = 1.0
    s_probe: float | None = None
    dist_tol: float = 0.1
    start_branch: str | None = None
    branch_step: float = 0.01


def _start_and_targets(sys, sigma, setup: RunSetup):
    brs = branches_for(sys, sigma, rho=setup.rho, step=setup.branch_step)
    minus = [b for b in brs.values() if b.side == "minus"]
    if setup.start_branch is not None:
        start = brs[setup.start_branch]
    elif minus:
        start = minus[0]
    else:
        raise ValueError("system has no minus-side branch to start from")
    targets = [b for b in brs.values() if b.side == "plus" and b.stability == "attracting"]
    if not targets:
        targets = [b for b in brs.values() if b.side == "plus"]
    return start, targets


def run_outcome(sys, mu, sigma, eps, settings: SolveSettings | None = None, setup: RunSetup | None = None,
                x_offset=0.0):
    """Start on the past slow manifold at ``s = -rho`` and classify at ``s_probe``."""
    setup = setup or RunSetup()
    start, targets = _start_and_targets(sys, sigma, setup)
    s0 = -setup.rho
    x0, _ = slow_manifold_point(sys, start, s0, mu, sigma, eps)
    x0 = x0 + x_offset
    s_probe = setup.s_probe if setup.s_probe is not None else 0.8 * setup.rho
    tr = simulate(sys, x0, s0, mu, sigma, eps, s_probe, settings, s_events=(s_probe,))
    out = classify_outcome(tr, targets, s_probe, setup.dist_tol)
    return out, tr


@dataclass
class EmpiricalResult:
    value: float
    bracket: tuple
    vary: str
    eps: float
    evaluations: list  # (param, outcome label, distance)

    def __float__(self):
        return float(self.value)


def empirical_critical(
    sys: SystemDefinition,
    vary: str,
    fixed: dict,
    eps: float,
    bracket,
    settings: SolveSettings | None = None,
    param_tol: float = 1e-4,
    setup: RunSetup | None = None,
) -> EmpiricalResult:
    """Bisect ``vary`` ('mu' or 'sigma') between outcomes until the bracket is below ``param_tol``.

    Raises
    ------
    SameOutcome
        Both bracket ends reach the same branch.
    Unresolved
        A run could not be classified; ``hint`` suggests a smaller eps.
    """
    if vary not in ("mu", "sigma"):
        raise ValueError("vary must be 'mu' or 'sigma'")
    lo, hi = float(bracket[0]), float(bracket[1])
    if not hi > lo:
        raise ValueError("bracket must be increasing")
    evals = []

    def outcome(p):
        params = dict(fixed)
        params[vary] = p
        out, _ = run_outcome(sys, params["mu"], params["sigma"], eps, settings, setup)
        evals.append((p, out.label, out.distance))
        if not out.resolved:
            raise Unresolved(
                f"run at {vary}={p!r} is unresolved (nearest distance {out.distance:.3g})",
                hint=f"retry with a smaller eps, e.g. eps={eps / 2:g}",
            )
        return out.branch

    o_lo, o_hi = outcome(lo), outcome(hi)
    if o_lo == o_hi:
        raise SameOutcome(f"both ends of [{lo}, {hi}] reach {o_lo!r}")
    while hi - lo > param_tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if outcome(mid) == o_lo:
            lo = mid
        else:
            hi = mid
    return EmpiricalResult(0.5 * (lo + hi), (lo, hi), vary, eps, evals)
