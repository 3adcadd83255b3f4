"""Right-hand sides, their singular limits, and critical-manifold branches.

A system is ``x' = f(x, g, s, sigma, eps)`` with ``g = gamma(mu * s / eps)``
and ``s' = eps``. Freezing ``g`` at 0 (resp. 1) with ``eps = 0`` gives the
past (resp. future) layer fields ``f_minus`` / ``f_plus``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import DegenerateSpectrum, NonFinite, RootNotFound, SideMismatch
from .ramp import RampFunction, builtin_gamma

SIDES = ("minus", "plus")
FD_REL_STEP = 6e-6


def side_gamma(side: str) -> float:
    if side == "minus":
        return 0.0
    if side == "plus":
        return 1.0
    raise ValueError(f"side must be 'minus' or 'plus', got {side!r}")


@dataclass(frozen=True)
class SystemDefinition:
    """Full right-hand side with partial derivatives.

    All callables take ``(x, g, s, sigma, eps)`` with ``x`` an array of shape
    ``(dim,)``. ``rhs`` and the first-order partials in scalar parameters
    return shape ``(dim,)``; ``jac_x`` returns ``(dim, dim)``.
    """

    dim: int
    rhs: Callable
    jac_x: Callable
    d_s: Callable
    d_eps: Callable
    d_gamma: Callable
    d_sigma: Callable
    ramp: RampFunction = field(default_factory=builtin_gamma)
    sigma_box: tuple = (-math.inf, math.inf)
    mu_box: tuple = (0.0, math.inf)
    partials_mode: str = "analytic"
    name: str = "custom"
    params: dict = field(default_factory=dict)
    # seeds for the boundary points p- and p+ at s = 0
    seeds: dict = field(default_factory=dict)
    # named branches: label -> (side, seed)
    branch_seeds: dict = field(default_factory=dict)
    # f depends on sigma affinely (enables the exact-ratio critical-sigma path)
    affine_sigma: bool = False
    # (builder, kwargs) used to rebuild the system in worker processes
    recipe: Optional[tuple] = None

    def __reduce__(self):
        if self.recipe is None:
            raise TypeError(f"system {self.name!r} was built programmatically and cannot be pickled")
        builder, kwargs = self.recipe
        return (_rebuild, (builder, kwargs))

    def with_ramp(self, ramp: RampFunction) -> "SystemDefinition":
        recipe = None
        if self.recipe is not None and ramp.name == "algebraic-sigmoid":
            recipe = self.recipe
        return replace(self, ramp=ramp, recipe=recipe)


def _rebuild(builder, kwargs):
    return BUILDERS[builder](**kwargs)


# ------------------------------------------------------------------ builtins


def tipping_pitchfork(A: float = 0.25) -> SystemDefinition:
    """Past layer ``-x``, future layer ``x(1 - x^2)``, forcing ``A sin s + eps (sigma - g^2)``."""
    A = float(A)

    def rhs(x, g, s, sigma, eps):
        return g * x * (1.0 - x * x) - (1.0 - g) * x + A * math.sin(s) + eps * (sigma - g * g)

    def jac_x(x, g, s, sigma, eps):
        return np.atleast_2d(g * (1.0 - 3.0 * x * x) - (1.0 - g))

    def d_s(x, g, s, sigma, eps):
        return np.full_like(x, A * math.cos(s))

    def d_eps(x, g, s, sigma, eps):
        return np.full_like(x, sigma - g * g)

    def d_gamma(x, g, s, sigma, eps):
        return x * (1.0 - x * x) + x - 2.0 * eps * g

    def d_sigma(x, g, s, sigma, eps):
        return np.full_like(x, eps)

    return SystemDefinition(
        1, rhs, jac_x, d_s, d_eps, d_gamma, d_sigma,
        name="tipping-pitchfork",
        params={"A": A},
        seeds={"minus": np.zeros(1), "plus": np.zeros(1)},
        branch_seeds={
            "S-": ("minus", np.zeros(1)),
            "upper": ("plus", np.ones(1)),
            "middle": ("plus", np.zeros(1)),
            "lower": ("plus", -np.ones(1)),
        },
        affine_sigma=True,
        recipe=("tipping-pitchfork", {"A": A}),
    )


def tracking_cubic(A: float = 0.25) -> SystemDefinition:
    """Past layer ``-x``, future layer ``-x(1 - x^2)``, forcing ``A sin s + eps``."""
    A = float(A)

    def rhs(x, g, s, sigma, eps):
        return -g * x * (1.0 - x * x) - (1.0 - g) * x + A * math.sin(s) + eps

    def jac_x(x, g, s, sigma, eps):
        return np.atleast_2d(-1.0 + 3.0 * g * x * x)

    def d_s(x, g, s, sigma, eps):
        return np.full_like(x, A * math.cos(s))

    def d_eps(x, g, s, sigma, eps):
        return np.ones_like(x)

    def d_gamma(x, g, s, sigma, eps):
        return x * x * x

    def d_sigma(x, g, s, sigma, eps):
        return np.zeros_like(x)

    return SystemDefinition(
        1, rhs, jac_x, d_s, d_eps, d_gamma, d_sigma,
        name="tracking-cubic",
        params={"A": A},
        seeds={"minus": np.zeros(1), "plus": np.zeros(1)},
        branch_seeds={
            "S-": ("minus", np.zeros(1)),
            "upper": ("plus", np.ones(1)),
            "middle": ("plus", np.zeros(1)),
            "lower": ("plus", -np.ones(1)),
        },
        affine_sigma=True,
        recipe=("tracking-cubic", {"A": A}),
    )


# ------------------------------------------------------- finite differences


def _step(v: float) -> float:
    return FD_REL_STEP * max(1.0, abs(v))


def fd_partials(rhs: Callable, dim: int):
    """Centered-difference partials of ``rhs`` in every argument."""

    def jac_x(x, g, s, sigma, eps):
        x = np.asarray(x, dtype=float)
        J = np.empty((dim, dim))
        for j in range(dim):
            h = _step(x[j])
            e = np.zeros(dim)
            e[j] = h
            J[:, j] = (rhs(x + e, g, s, sigma, eps) - rhs(x - e, g, s, sigma, eps)) / (2 * h)
        return J

    def d_s(x, g, s, sigma, eps):
        h = _step(s)
        return (rhs(x, g, s + h, sigma, eps) - rhs(x, g, s - h, sigma, eps)) / (2 * h)

    def d_eps(x, g, s, sigma, eps):
        h = _step(eps)
        return (rhs(x, g, s, sigma, eps + h) - rhs(x, g, s, sigma, eps - h)) / (2 * h)

    def d_gamma(x, g, s, sigma, eps):
        h = _step(g)
        return (rhs(x, g + h, s, sigma, eps) - rhs(x, g - h, s, sigma, eps)) / (2 * h)

    def d_sigma(x, g, s, sigma, eps):
        h = _step(sigma)
        return (rhs(x, g, s, sigma + h, eps) - rhs(x, g, s, sigma - h, eps)) / (2 * h)

    return jac_x, d_s, d_eps, d_gamma, d_sigma


def with_fd_partials(sys: SystemDefinition) -> SystemDefinition:
    """Same system, partials replaced by finite differences."""
    parts = fd_partials(sys.rhs, sys.dim)
    return replace(sys, jac_x=parts[0], d_s=parts[1], d_eps=parts[2], d_gamma=parts[3], d_sigma=parts[4],
                   partials_mode="finite-difference", recipe=None)


def custom_system(
    F_minus: str | None = None,
    F_plus: str | None = None,
    forcing: str | None = None,
    rhs: str | None = None,
    A: float = 0.0,
    mu: float = 1.0,
    seeds: dict | None = None,
    branches: dict | None = None,
    name: str = "custom",
) -> SystemDefinition:
    """Scalar system from expression strings.

    Either ``rhs`` (in x, g, s, sigma, eps, A) or the triple
    ``F_minus``, ``F_plus`` (in x) and ``forcing`` (in g, s, sigma, eps, A),
    combined as ``g F_plus + (1 - g) F_minus + forcing``.
    """
    from .errors import ConfigError
    from .exprparse import compile_expr, parse

    if rhs is not None:
        if any(v is not None for v in (F_minus, F_plus, forcing)):
            raise ConfigError("give either 'rhs' or the F_minus/F_plus/forcing triple, not both")
        full = compile_expr(parse(rhs))

        def scalar(x, g, s, sigma, eps):
            return full({"x": x, "g": g, "s": s, "sigma": sigma, "eps": eps, "A": A, "mu": mu})
    else:
        if F_minus is None or F_plus is None:
            raise ConfigError("custom system needs 'rhs' or both 'F_minus' and 'F_plus'")
        fm, fp = compile_expr(parse(F_minus)), compile_expr(parse(F_plus))
        fg = compile_expr(parse(forcing or "0"))

        def scalar(x, g, s, sigma, eps):
            b = {"x": x, "g": g, "s": s, "sigma": sigma, "eps": eps, "A": A, "mu": mu}
            return g * fp(b) + (1.0 - g) * fm(b) + fg(b)

    def f(x, g, s, sigma, eps):
        return np.array([scalar(float(x[0]), g, s, sigma, eps)])

    parts = fd_partials(f, 1)
    seeds = {k: np.atleast_1d(np.asarray(v, dtype=float)) for k, v in (seeds or {"minus": 0.0, "plus": 0.0}).items()}
    bseeds = {}
    for label, (side, seed) in (branches or {}).items():
        side_gamma(side)
        bseeds[label] = (side, np.atleast_1d(np.asarray(seed, dtype=float)))
    kwargs = dict(F_minus=F_minus, F_plus=F_plus, forcing=forcing, rhs=rhs, A=A, mu=mu,
                  seeds={k: v.tolist() for k, v in seeds.items()},
                  branches={k: (s, v.tolist()) for k, (s, v) in bseeds.items()}, name=name)
    return SystemDefinition(1, f, *parts, partials_mode="finite-difference", name=name, params={"A": A},
                            seeds=seeds, branch_seeds=bseeds, recipe=("custom", kwargs))


BUILDERS = {"tipping-pitchfork": tipping_pitchfork, "tracking-cubic": tracking_cubic, "custom": custom_system}


def builtin_system(name: str, **params) -> SystemDefinition:
    if name not in ("tipping-pitchfork", "tracking-cubic"):
        raise KeyError(f"unknown built-in system {name!r}")
    return BUILDERS[name](**params)


def max_partials_error(sys: SystemDefinition, n_points: int = 100, seed: int = 0, x_scale: float = 1.5) -> float:
    """Largest relative disagreement between ``sys`` partials and finite differences."""
    rng = np.random.default_rng(seed)
    fd = with_fd_partials(sys)
    worst = 0.0
    for _ in range(n_points):
        x = rng.uniform(-x_scale, x_scale, sys.dim)
        g = rng.uniform(0, 1)
        s = rng.uniform(-1, 1)
        sigma = rng.uniform(-1, 1)
        eps = rng.uniform(0, 0.1)
        args = (x, g, s, sigma, eps)
        for name in ("jac_x", "d_s", "d_eps", "d_gamma", "d_sigma"):
            a = np.asarray(getattr(sys, name)(*args), dtype=float)
            b = np.asarray(getattr(fd, name)(*args), dtype=float)
            worst = max(worst, float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a)))))
    return worst


# ---------------------------------------------------------------- evaluation


def eval_full_rhs(sys: SystemDefinition, x, s: float, mu: float, sigma: float, eps: float) -> np.ndarray:
    """``f(x, gamma(mu s / eps), s, sigma, eps)``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.atleast_1d(sys.rhs(x, sys.ramp(mu * s / eps), s, sigma, eps))
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"non-finite right-hand side at x={x}, s={s}")
    return out


def pws_limit(sys: SystemDefinition, side: str, x, s: float, sigma: float) -> np.ndarray:
    """Frozen-layer field ``f_minus`` (s <= 0) or ``f_plus`` (s >= 0)."""
    g = side_gamma(side)
    if (side == "minus" and s > 0) or (side == "plus" and s < 0):
        raise SideMismatch(f"side {side!r} is defined only for s {'<=' if side == 'minus' else '>='} 0, got s={s}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return np.atleast_1d(sys.rhs(x, g, s, sigma, 0.0))


def _layer(sys, side, s, sigma):
    g = side_gamma(side)
    F = lambda x: np.atleast_1d(sys.rhs(x, g, s, sigma, 0.0))  # noqa: E731
    J = lambda x: np.atleast_2d(sys.jac_x(x, g, s, sigma, 0.0))  # noqa: E731
    return F, J


# -------------------------------------------------------------------- Newton


def newton(F, J, x0, tol: float = 1e-10, max_iter: int = 100, step_tol: float = 1e-9) -> np.ndarray:
    """Damped Newton with backtracking on the residual norm.

    Converged when ``|F| <= tol`` and the next Newton step is below
    ``step_tol * (1 + |x|)``; the step test keeps slowly converging
    (degenerate) roots iterating until they are actually resolved.
    """
    x = np.array(x0, dtype=float, copy=True)
    r = F(x)
    nr = float(np.linalg.norm(r))
    for _ in range(max_iter):
        if not np.isfinite(nr):
            break
        Jx = J(x)
        try:
            dx = np.linalg.solve(Jx, -r)
        except np.linalg.LinAlgError:
            dx = -np.linalg.pinv(Jx) @ r
        if nr <= tol and np.linalg.norm(dx) <= step_tol * (1.0 + np.linalg.norm(x)):
            return x
        if nr == 0.0:
            return x
        lam = 1.0
        while True:
            xn = x + lam * dx
            rn = F(xn)
            nrn = float(np.linalg.norm(rn))
            if nrn <= (1.0 - 1e-4 * lam) * nr or lam < 1e-6:
                break
            lam *= 0.5
        if lam < 1e-6 and nrn >= nr:
            if nr <= tol:
                return x
            break
        x, r, nr = xn, rn, nrn
    if nr <= tol:
        return x
    raise RootNotFound(f"Newton failed from {np.asarray(x0).tolist()} (residual {nr:.3e})")


# ------------------------------------------------------------------ branches


def classify_spectrum(eigs) -> str:
    re = np.real(eigs)
    if np.all(re < 0):
        return "attracting"
    if np.all(re > 0):
        return "repelling"
    return "saddle"


@dataclass
class CriticalBranch:
    """Sampled graph ``s -> h(s)`` of a critical-manifold branch."""

    side: str
    label: str
    sigma: float
    s: np.ndarray
    x: np.ndarray  # (m, dim)
    dxds: np.ndarray  # (m, dim)
    sample_stability: list
    eigen_at_boundary: np.ndarray
    fold: bool = False
    residuals: np.ndarray = None
    _spline: CubicHermiteSpline = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.s) >= 2:
            self._spline = CubicHermiteSpline(self.s, self.x, self.dxds, axis=0)

    @property
    def stability(self) -> str:
        kinds = set(self.sample_stability)
        return kinds.pop() if len(kinds) == 1 else "mixed"

    @property
    def s_range(self) -> tuple:
        return float(self.s[0]), float(self.s[-1])

    def h(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.s_range
        if np.any(s < lo - 1e-12) or np.any(s > hi + 1e-12):
            raise ValueError(f"s outside branch range [{lo}, {hi}]")
        if self._spline is None:
            return np.broadcast_to(self.x[0], s.shape + self.x[0].shape).copy()
        return self._spline(np.clip(s, lo, hi))

    def dh(self, s):
        if self._spline is None:
            return self.dxds[0].copy()
        lo, hi = self.s_range
        return self._spline.derivative()(np.clip(s, lo, hi))

    def as_dict(self) -> dict:
        return {
            "label": self.label,
            "side": self.side,
            "stability": self.stability,
            "fold": self.fold,
            "s_range": list(self.s_range),
            "eigen_at_boundary": [complex(e).real if complex(e).imag == 0 else str(complex(e))
                                  for e in self.eigen_at_boundary],
        }


def _branch_slope(sys, side, x, s, sigma):
    g = side_gamma(side)
    J = np.atleast_2d(sys.jac_x(x, g, s, sigma, 0.0))
    fs = np.atleast_1d(sys.d_s(x, g, s, sigma, 0.0))
    return -np.linalg.solve(J, fs), J


def continue_branch(
    sys: SystemDefinition,
    side: str,
    seed_x,
    s_range,
    sigma: float,
    step: float = 0.01,
    root_tol: float = 1e-10,
    label: str | None = None,
    min_step: float = 1e-7,
    cond_switch: float = 1e6,
) -> CriticalBranch:
    """Continue ``f_side(x, s, sigma) = 0`` from ``s_range[0]`` to ``s_range[1]``.

    Natural continuation with a secant predictor and step halving. When the
    Jacobian condition number passes ``cond_switch`` the remaining segment
    uses pseudo-arclength steps; a turn in ``s`` marks a fold and the branch
    is returned truncated (``fold=True``).
    """
    side_gamma(side)
    s0, s1 = float(s_range[0]), float(s_range[1])
    for sv in (s0, s1):
        if (side == "minus" and sv > 0) or (side == "plus" and sv < 0):
            raise SideMismatch(f"s_range {s_range} is not on the {side} side")
    direction = 1.0 if s1 >= s0 else -1.0
    length = abs(s1 - s0)

    F0, J0 = _layer(sys, side, s0, sigma)
    x = newton(F0, J0, np.atleast_1d(np.asarray(seed_x, dtype=float)), tol=root_tol)
    ss, xs = [s0], [x]
    fold = False
    h = min(step, length) if length > 0 else 0.0
    s = s0

    while length > 0 and direction * (s1 - s) > 1e-14:
        J = np.atleast_2d(sys.jac_x(x, side_gamma(side), s, sigma, 0.0))
        if np.linalg.cond(J) > cond_switch:
            tail, fold = _arclength_segment(sys, side, x, s, s1, sigma, step, root_tol)
            for sp, xp in tail:
                ss.append(sp)
                xs.append(xp)
            break
        hs = min(h, abs(s1 - s))
        sn = s + direction * hs
        # secant predictor from the last two samples, tangent on the first step
        if len(xs) >= 2:
            pred = xs[-1] + (xs[-1] - xs[-2]) * (sn - ss[-1]) / (ss[-1] - ss[-2])
        else:
            try:
                slope, _ = _branch_slope(sys, side, x, s, sigma)
                pred = x + slope * (sn - s)
            except np.linalg.LinAlgError:
                pred = x.copy()
        Fn, Jn = _layer(sys, side, sn, sigma)
        try:
            xn = newton(Fn, Jn, pred, tol=root_tol, max_iter=25)
            # a large corrector move means Newton may have hopped to another branch
            ok = np.linalg.norm(xn - pred) <= 0.05 * (1.0 + np.linalg.norm(x))
        except RootNotFound:
            ok = False
        if not ok:
            h *= 0.5
            if h < min_step:
                fold = True
                break
            continue
        s, x = sn, xn
        ss.append(s)
        xs.append(x)
        h = min(step, 1.5 * h)

    ss = np.asarray(ss)
    xs = np.asarray(xs)
    order = np.argsort(ss)
    ss, xs = ss[order], xs[order]
    dx = np.empty_like(xs)
    stab = []
    res = np.empty(len(ss))
    g = side_gamma(side)
    for i, (sv, xv) in enumerate(zip(ss, xs)):
        J = np.atleast_2d(sys.jac_x(xv, g, sv, sigma, 0.0))
        fs = np.atleast_1d(sys.d_s(xv, g, sv, sigma, 0.0))
        try:
            dx[i] = -np.linalg.solve(J, fs)
        except np.linalg.LinAlgError:
            dx[i] = np.nan
        stab.append(classify_spectrum(np.linalg.eigvals(J)))
        res[i] = np.linalg.norm(np.atleast_1d(sys.rhs(xv, g, sv, sigma, 0.0)))
    if not np.all(np.isfinite(dx)):
        # singular Jacobian at a fold endpoint: fall back to secant slopes
        dx = np.gradient(xs, ss, axis=0) if len(ss) > 2 else np.zeros_like(xs)
    ib = int(np.argmin(np.abs(ss)))
    eig_b = np.linalg.eigvals(np.atleast_2d(sys.jac_x(xs[ib], g, ss[ib], sigma, 0.0)))
    return CriticalBranch(side, label or side, float(sigma), ss, xs, dx, stab, eig_b, fold=fold, residuals=res)


def _arclength_segment(sys, side, x, s, s_end, sigma, step, root_tol, max_steps=100000):
    """Pseudo-arclength continuation in (x, s); stops at s_end or at a turn in s."""
    g = side_gamma(side)
    direction = 1.0 if s_end >= s else -1.0
    n = x.size
    out = []

    def G(y):
        return np.atleast_1d(sys.rhs(y[:n], g, y[n], sigma, 0.0))

    def DG(y):
        J = np.atleast_2d(sys.jac_x(y[:n], g, y[n], sigma, 0.0))
        return np.hstack([J, np.atleast_1d(sys.d_s(y[:n], g, y[n], sigma, 0.0))[:, None]])

    def tangent(y, prev=None):
        _, _, vt = np.linalg.svd(DG(y))
        t = vt[-1]
        if prev is None:
            if t[n] * direction < 0:
                t = -t
        elif t @ prev < 0:
            t = -t
        return t

    y = np.append(x, s)
    t = tangent(y)
    h = step
    for _ in range(max_steps):
        pred = y + h * t

        def H(z):
            return np.append(G(z), t @ (z - pred))

        def DH(z):
            return np.vstack([DG(z), t[None, :]])

        try:
            yn = newton(H, DH, pred, tol=root_tol, max_iter=25)
        except RootNotFound:
            h *= 0.5
            if h < 1e-9:
                return out, True
            continue
        tn = tangent(yn, t)
        if tn[n] * direction <= 0:
            return out, True
        if direction * (yn[n] - s_end) >= 0:
            # land exactly on s_end with a natural-parameter solve
            F, J = _layer(sys, side, s_end, sigma)
            try:
                xe = newton(F, J, y[:n] + (yn[:n] - y[:n]) * (s_end - y[n]) / (yn[n] - y[n]), tol=root_tol)
                out.append((s_end, xe))
            except RootNotFound:
                pass
            return out, False
        out.append((float(yn[n]), yn[:n].copy()))
        y, t = yn, tn
        h = min(step, 1.5 * h)
    return out, False


def branches_for(sys: SystemDefinition, sigma: float, rho: float = 1.0, step: float = 0.01,
                 root_tol: float = 1e-10, labels=None) -> dict:
    """Continue every configured branch over ``[-rho, 0]`` or ``[0, rho]``."""
    out = {}
    for label, (side, seed) in sys.branch_seeds.items():
        if labels is not None and label not in labels:
            continue
        rng = (0.0, -rho) if side == "minus" else (0.0, rho)
        out[label] = continue_branch(sys, side, seed, rng, sigma, step=step, root_tol=root_tol, label=label)
    return out


def slow_manifold_point(sys: SystemDefinition, branch: CriticalBranch, s0: float, mu: float, sigma: float,
                        eps: float, root_tol: float = 1e-12) -> tuple[np.ndarray, bool]:
    """Point near the slow manifold over ``branch`` at ``s0``.

    Solves ``f(x, gamma(mu s0/eps), s0, sigma, eps) = eps h'(s0)`` by Newton
    from ``h(s0)``. Returns ``(x, corrected)``; falls back to ``h(s0)`` when
    the solve fails or lands far from the branch.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    h0 = np.atleast_1d(branch.h(s0))
    g = sys.ramp(mu * s0 / eps)
    target = eps * np.atleast_1d(branch.dh(s0))
    F = lambda x: np.atleast_1d(sys.rhs(x, g, s0, sigma, eps)) - target  # noqa: E731
    J = lambda x: np.atleast_2d(sys.jac_x(x, g, s0, sigma, eps))  # noqa: E731
    try:
        x = newton(F, J, h0, tol=root_tol, max_iter=30)
    except RootNotFound:
        return h0, False
    if np.linalg.norm(x - h0) > max(100 * eps, 1e-8) * (1.0 + np.linalg.norm(h0)):
        return h0, False
    return x, True


# ----------------------------------------------------- boundary points / NH


@dataclass
class BoundaryPoint:
    side: str
    x: np.ndarray
    spectrum: np.ndarray
    min_distance_to_imaginary_axis: float
    sigma: float = float("nan")

    def as_dict(self) -> dict:
        return {
            "side": self.side,
            "sigma": self.sigma,
            "x": np.asarray(self.x).tolist(),
            "spectrum": [[float(np.real(e)), float(np.imag(e))] for e in self.spectrum],
            "min_distance_to_imaginary_axis": self.min_distance_to_imaginary_axis,
        }


@dataclass
class NHReport:
    pairs: list  # (BoundaryPoint minus, BoundaryPoint plus) per sigma
    min_distance: float
    has_stable_minus: bool
    has_unstable_plus: bool
    other_roots: dict  # (side, sigma) -> list of roots found by the scan
    degeneracy_tol: float

    @property
    def passed(self) -> bool:
        return self.min_distance >= self.degeneracy_tol

    @property
    def tipping_hypothesis(self) -> bool:
        return self.has_stable_minus and self.has_unstable_plus

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_distance": self.min_distance,
            "has_stable_minus": self.has_stable_minus,
            "has_unstable_plus": self.has_unstable_plus,
            "tipping_hypothesis": self.tipping_hypothesis,
            "pairs": [[a.as_dict(), b.as_dict()] for a, b in self.pairs],
            "other_roots": {f"{k[0]}@{k[1]}": [np.asarray(r).tolist() for r in v] for k, v in self.other_roots.items()},
        }


def boundary_point(sys: SystemDefinition, side: str, sigma: float, seed=None, root_tol: float = 1e-10) -> BoundaryPoint:
    """Root ``p_side`` of the frozen layer field at ``s = 0``, with its spectrum."""
    if seed is None:
        if side not in sys.seeds:
            raise RootNotFound(f"no seed configured for p_{side}")
        seed = sys.seeds[side]
    F, J = _layer(sys, side, 0.0, sigma)
    x = newton(F, J, np.atleast_1d(np.asarray(seed, dtype=float)), tol=root_tol)
    eigs = np.linalg.eigvals(J(x))
    return BoundaryPoint(side, x, eigs, float(np.min(np.abs(np.real(eigs)))), float(sigma))


def scan_roots(sys: SystemDefinition, side: str, s: float, sigma: float, radius: float = 3.0, n: int = 601,
               root_tol: float = 1e-10) -> list:
    """All roots of the frozen layer field found from a coarse grid."""
    F, J = _layer(sys, side, s, sigma)
    roots: list = []
    if sys.dim == 1:
        xs = np.linspace(-radius, radius, n)
        vals = np.array([F(np.array([v]))[0] for v in xs])
        for i in range(n - 1):
            if vals[i] == 0.0:
                roots.append(np.array([xs[i]]))
            elif vals[i] * vals[i + 1] < 0:
                r = brentq(lambda v: F(np.array([v]))[0], xs[i], xs[i + 1], xtol=1e-14)
                roots.append(np.array([r]))
        return roots
    grid = np.linspace(-radius, radius, 5)
    mesh = np.stack(np.meshgrid(*([grid] * sys.dim), indexing="ij"), -1).reshape(-1, sys.dim)
    for seed in mesh:
        try:
            r = newton(F, J, seed, tol=root_tol, max_iter=50)
        except RootNotFound:
            continue
        if all(np.linalg.norm(r - q) > 1e-6 for q in roots):
            roots.append(r)
    return roots


def check_assumption_NH(sys: SystemDefinition, sigma_grid, degeneracy_tol: float = 1e-6, root_tol: float = 1e-10,
                        scan: bool = True) -> NHReport:
    """Locate p-/p+ for each sigma and measure their spectral gap to the imaginary axis.

    Raises
    ------
    RootNotFound
        When Newton from the configured seeds fails.
    DegenerateSpectrum
        When an eigenvalue real part is within ``degeneracy_tol`` of zero.
    """
    pairs = []
    others = {}
    dmin = math.inf
    stable_minus = unstable_plus = True
    for sigma in sigma_grid:
        pm = boundary_point(sys, "minus", sigma, root_tol=root_tol)
        pp = boundary_point(sys, "plus", sigma, root_tol=root_tol)
        for p in (pm, pp):
            if p.min_distance_to_imaginary_axis < degeneracy_tol:
                raise DegenerateSpectrum(
                    f"p_{p.side} at sigma={sigma} has eigenvalue within "
                    f"{p.min_distance_to_imaginary_axis:.3e} of the imaginary axis"
                )
        dmin = min(dmin, pm.min_distance_to_imaginary_axis, pp.min_distance_to_imaginary_axis)
        stable_minus &= bool(np.any(np.real(pm.spectrum) < 0))
        unstable_plus &= bool(np.any(np.real(pp.spectrum) > 0))
        pairs.append((pm, pp))
        if scan:
            for side, p in (("minus", pm), ("plus", pp)):
                others[(side, float(sigma))] = [
                    r for r in scan_roots(sys, side, 0.0, sigma) if np.linalg.norm(r - p.x) > 1e-6
                ]
    return NHReport(pairs, dmin, stable_minus, unstable_plus, others, degeneracy_tol)
