"""Grid-based verification of the tracking hypotheses and the persistent manifold.

Suprema and minima are estimated on a sampling grid over
``X x [-rho, rho] x (0, eps0]``; a refinement check (grid doubling) flags
gross under-sampling. The ramp value ``g = gamma(mu s/eps)`` is sampled
including its limits, by clustering ``s`` near 0 (inner window) and taking
``eps`` down to ``eps0 * 1e-8``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NotCertified
from .integrator import SolveSettings, simulate
from .system import SystemDefinition, branches_for


@dataclass(frozen=True)
class TrackingHypotheses:
    """Sampling box and scales for the tracking check.

    ``X`` is a box given as ``(lo, hi)`` for scalar systems or a sequence of
    such pairs. ``M`` is the inner-window half-width in fast time.
    """

    X: tuple
    rho: float = 1.0
    eps0: float = 1e-3
    grid: int = 41
    M: float = 10.0

    def __post_init__(self):
        box = np.asarray(self.X, dtype=float)
        if box.ndim == 1:
            box = box[None, :]
        if box.ndim != 2 or box.shape[1] != 2:
            raise ValueError("X must be (lo, hi) or a list of (lo, hi) pairs")
        if not np.all(np.isfinite(box)) or np.any(box[:, 1] <= box[:, 0]):
            raise ValueError("X must have nonempty interior (lo < hi on every axis)")
        object.__setattr__(self, "X", tuple(tuple(float(v) for v in row) for row in box))
        if not (self.rho > 0 and self.eps0 > 0 and self.M > 0):
            raise ValueError("rho, eps0 and M must be positive")
        if self.M < 1.0 / self.rho:
            raise ValueError("M must be at least 1/rho")
        if int(self.grid) < 3:
            raise ValueError("grid must be at least 3")
        object.__setattr__(self, "grid", int(self.grid))

    @property
    def dim(self) -> int:
        return len(self.X)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm([hi - lo for lo, hi in self.X]))

    def refined(self) -> "TrackingHypotheses":
        return TrackingHypotheses(self.X, self.rho, self.eps0, 2 * self.grid - 1, self.M)


def _slow_samples(hyp: TrackingHypotheses, mu: float):
    """(g, s, eps) triples covering the slow box and the inner window."""
    k = hyp.grid
    eps = np.geomspace(hyp.eps0 * 1e-8, hyp.eps0, max(3, k // 4))
    s_outer = np.linspace(-hyp.rho, hyp.rho, k)
    t_inner = np.linspace(-hyp.M, hyp.M, k)
    out = []
    for e in eps:
        s_all = np.unique(np.concatenate([s_outer, e * t_inner]))
        for s in s_all:
            out.append((mu * s / e, s, e))
    return out


def _x_grid(hyp: TrackingHypotheses, n: int | None = None):
    n = n or hyp.grid
    axes = [np.linspace(lo, hi, n) for lo, hi in hyp.X]
    return [np.array(p) for p in itertools.product(*axes)]


def _boundary(hyp: TrackingHypotheses):
    """(x, outward normal) pairs on the faces of the box."""
    n = hyp.grid
    axes = [np.linspace(lo, hi, n) for lo, hi in hyp.X]
    out = []
    for i, (lo, hi) in enumerate(hyp.X):
        others = [a for j, a in enumerate(axes) if j != i]
        for val, sign in ((lo, -1.0), (hi, 1.0)):
            for rest in itertools.product(*others) if others else [()]:
                x = np.insert(np.array(rest, dtype=float), i, val)
                nrm = np.zeros(hyp.dim)
                nrm[i] = sign
                out.append((x, nrm))
    return out


def check_inflowing(sys: SystemDefinition, hyp: TrackingHypotheses, mu: float, sigma: float) -> float:
    """Minimum of ``-n(x) . f`` over sampled boundary points; positive means inflowing."""
    ramp = sys.ramp
    margin = math.inf
    for z, s, e in _slow_samples(hyp, mu):
        g = ramp(z)
        for x, nrm in _boundary(hyp):
            margin = min(margin, -float(nrm @ np.atleast_1d(sys.rhs(x, g, s, sigma, e))))
    return margin


def _jac_samples(sys, hyp, mu, sigma):
    ramp = sys.ramp
    xs = _x_grid(hyp)
    for z, s, e in _slow_samples(hyp, mu):
        g = ramp(z)
        for x in xs:
            yield x, g, s, e


def log_norm_bound(sys: SystemDefinition, hyp: TrackingHypotheses, mu: float, sigma: float) -> float:
    """Sampled sup of the Euclidean logarithmic norm of ``D_x f``."""
    best = -math.inf
    for x, g, s, e in _jac_samples(sys, hyp, mu, sigma):
        J = np.atleast_2d(sys.jac_x(x, g, s, sigma, e))
        val = float(J[0, 0]) if J.size == 1 else float(np.linalg.eigvalsh(0.5 * (J + J.T))[-1])
        best = max(best, val)
    return best


def lipschitz_constants(sys: SystemDefinition, hyp: TrackingHypotheses, mu: float, sigma: float) -> tuple:
    """``(l21, l23)``: sampled sups of the spectral norm of ``D_x f`` and of ``|df/deps|``."""
    l21 = l23 = 0.0
    for x, g, s, e in _jac_samples(sys, hyp, mu, sigma):
        J = np.atleast_2d(sys.jac_x(x, g, s, sigma, e))
        l21 = max(l21, float(np.linalg.norm(J, 2)))
        l23 = max(l23, float(np.linalg.norm(np.atleast_1d(sys.d_eps(x, g, s, sigma, e)))))
    return l21, l23


@dataclass
class TrackingCertificate:
    l21: float
    l22: float
    l23: float
    inflow_margin: float
    lipschitz_s: float
    lipschitz_eps: float
    contraction_rate: float
    verified: bool
    refinement_change: float = math.nan
    refinement_ok: bool = True
    hypotheses: TrackingHypotheses | None = None

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "l21", "l22", "l23", "inflow_margin", "lipschitz_s", "lipschitz_eps",
            "contraction_rate", "verified", "refinement_change", "refinement_ok")}
        if self.hypotheses is not None:
            h = self.hypotheses
            d["hypotheses"] = {"X": [list(r) for r in h.X], "rho": h.rho, "eps0": h.eps0, "grid": h.grid, "M": h.M}
        return d


def certify_tracking(sys: SystemDefinition, hyp: TrackingHypotheses, mu: float, sigma: float,
                     refine: bool = True) -> TrackingCertificate:
    """Assemble the tracking certificate; ``verified`` iff ``l22 < 0`` and the margin is positive.

    With ``refine`` the log-norm bound is recomputed on the doubled grid and
    ``refinement_ok`` records whether it moved by at most 1%.
    """
    margin = check_inflowing(sys, hyp, mu, sigma)
    l22 = log_norm_bound(sys, hyp, mu, sigma)
    l21, l23 = lipschitz_constants(sys, hyp, mu, sigma)
    change, ok = math.nan, True
    if refine:
        l22_fine = log_norm_bound(sys, hyp.refined(), mu, sigma)
        change = abs(l22_fine - l22) / max(abs(l22), 1e-12)
        ok = change <= 0.01
        l22 = max(l22, l22_fine)
    inv = 1.0 / abs(l22) if l22 != 0 else math.inf
    return TrackingCertificate(
        l21=l21, l22=l22, l23=l23, inflow_margin=margin,
        lipschitz_s=l21 * inv, lipschitz_eps=l23 * inv, contraction_rate=l22,
        verified=bool(l22 < 0 and margin > 0),
        refinement_change=change, refinement_ok=ok, hypotheses=hyp,
    )


@dataclass
class TrackedManifold:
    """Samples of the persistent attracting manifold ``omega(s, eps)``."""

    s: np.ndarray
    omega: np.ndarray  # (m, n)
    eps: float
    mu: float
    sigma: float
    s0: float
    x0: np.ndarray
    burn_in: float
    trace: object = field(repr=False, default=None)

    def at(self, s):
        """``omega`` at slow time(s) ``s`` from the solver's dense output."""
        return self.trace.trajectory((np.asarray(s, dtype=float) - self.s0) / self.eps)

    def inner(self, M: float, n: int = 401):
        """``(s_hat, omega_I)`` on the inner window ``s_hat = s/eps`` in ``[-M, M]``."""
        sh = np.linspace(-M, M, n)
        return sh, np.atleast_2d(self.at(self.eps * sh).reshape(n, -1))

    def invariance_defect(self, sys: SystemDefinition, M: float, n: int = 401, h: float = 1e-3) -> float:
        """Max of ``|d omega_I/d s_hat - f|`` on the inner window, derivative by centered differences
        of the dense output."""
        sh = np.linspace(-M, M, n)
        xp = np.atleast_2d(self.at(self.eps * (sh + h)).reshape(n, -1))
        xm = np.atleast_2d(self.at(self.eps * (sh - h)).reshape(n, -1))
        x = np.atleast_2d(self.at(self.eps * sh).reshape(n, -1))
        d = (xp - xm) / (2 * h)
        worst = 0.0
        for i, v in enumerate(sh):
            s = self.eps * v
            f = np.atleast_1d(sys.rhs(x[i], sys.ramp(self.mu * v), s, self.sigma, self.eps))
            worst = max(worst, float(np.max(np.abs(d[i] - f))))
        return worst


def tracked_manifold(sys: SystemDefinition, mu: float, sigma: float, eps: float, hyp: TrackingHypotheses,
                     settings: SolveSettings | None = None, certificate: TrackingCertificate | None = None,
                     burn_in: float | None = None, n_samples: int = 401, x_offset=0.0,
                     start_branch: str | None = None) -> TrackedManifold:
    """Sample ``omega(s, eps)`` by forward integration from ``h^-(-rho)``.

    Raises
    ------
    NotCertified
        The certificate (computed if not supplied) is not verified.
    """
    cert = certificate if certificate is not None else certify_tracking(sys, hyp, mu, sigma, refine=False)
    if not cert.verified:
        raise NotCertified(f"tracking hypotheses fail (l22={cert.l22:.4g}, inflow margin={cert.inflow_margin:.4g})")
    settings = settings or SolveSettings()
    if not settings.dense_output:
        raise ValueError("tracked_manifold needs dense output")
    rho = hyp.rho
    burn_in = 0.1 * rho if burn_in is None else float(burn_in)
    brs = branches_for(sys, sigma, rho=rho)
    minus = [b for b in brs.values() if b.side == "minus"]
    if start_branch is not None:
        start = brs[start_branch]
    elif minus:
        start = minus[0]
    else:
        raise ValueError("system has no minus-side branch")
    s0 = -rho
    x0 = np.atleast_1d(start.h(s0)) + x_offset
    tr = simulate(sys, x0, s0, mu, sigma, eps, rho, settings)
    s = np.linspace(s0 + burn_in, rho, n_samples)
    om = np.atleast_2d(tr.trajectory((s - s0) / eps).reshape(n_samples, -1))
    return TrackedManifold(s, om, float(eps), float(mu), float(sigma), s0, x0, burn_in, tr)


def contraction_check(sys: SystemDefinition, mu: float, sigma: float, eps: float, hyp: TrackingHypotheses,
                      l22: float, offset: float = 0.1, slack: float = 0.05, settings: SolveSettings | None = None,
                      floor: float = 1e-9, n_samples: int = 2001, t_window: float = 60.0) -> dict:
    """Compare the separation of two trajectories with the ``exp((l22 + slack) t)`` envelope.

    ``t`` is fast time from the start, sampled on ``[0, t_window]``. Samples where the separation is
    below ``floor`` (solver noise) are excluded.
    """
    settings = settings or SolveSettings()
    cert = TrackingCertificate(0, l22, 0, 1.0, 0, 0, l22, l22 < 0)
    a = tracked_manifold(sys, mu, sigma, eps, hyp, settings, cert, burn_in=0.0, n_samples=3)
    b = tracked_manifold(sys, mu, sigma, eps, hyp, settings, cert, burn_in=0.0, n_samples=3, x_offset=offset)
    t = np.linspace(0.0, t_window, n_samples)
    xa = np.atleast_2d(a.trace.trajectory(t).reshape(n_samples, -1))
    xb = np.atleast_2d(b.trace.trajectory(t).reshape(n_samples, -1))
    d = np.linalg.norm(xa - xb, axis=1)
    d0 = d[0]
    keep = d > floor
    env = d0 * np.exp((l22 + slack) * t)
    ratio = np.max(d[keep] / env[keep]) if np.any(keep) else 0.0
    dk = d[keep]
    monotone = bool(np.all(np.diff(dk) <= 1e-12 * d0)) if dk.size > 1 else True
    rates = np.diff(np.log(dk)) / np.diff(t[keep]) if dk.size > 1 else np.array([])
    return {
        "d0": float(d0),
        "max_ratio_to_envelope": float(ratio),
        "within_envelope": bool(ratio <= 1.0 + 1e-9),
        "monotone": monotone,
        "max_empirical_rate": float(np.max(rates)) if rates.size else math.nan,
        "samples_used": int(np.sum(keep)),
        "t_end": float(t[-1]),
    }
