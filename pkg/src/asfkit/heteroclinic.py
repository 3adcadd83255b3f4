"""Connecting orbits of the inner problem ``x' = f(x, gamma(mu t), 0, sigma, 0)``.

Shooting is two-sided: a forward solve from the past endpoint (offset along
its unstable directions) and a backward solve from the future endpoint
(offset along its stable directions) are matched at ``t = 0``. Each solve
runs in the direction in which its endpoint attracts, so errors made at
``t = -T`` or ``t = +T`` are damped rather than amplified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import BlowUp, NoBracket, NoConvergence, UnsupportedShooting
from .system import SystemDefinition, boundary_point

INNER_RTOL = 1e-12
INNER_ATOL = 1e-14


@dataclass
class InnerTrajectory:
    t: np.ndarray
    x: np.ndarray  # (m, n)
    sol: Callable

    def __call__(self, tq):
        out = self.sol(tq)
        return out.T if np.ndim(tq) else out


def _inner_field(sys: SystemDefinition, mu: float, sigma: float):
    ramp = sys.ramp

    def fun(t, x):
        return sys.rhs(x, ramp(mu * t), 0.0, sigma, 0.0)

    def jac(t, x):
        return np.atleast_2d(sys.jac_x(x, ramp(mu * t), 0.0, sigma, 0.0))

    return fun, jac


def integrate_inner(sys: SystemDefinition, x0, t_span, mu: float, sigma: float, rtol: float = INNER_RTOL,
                    atol: float = INNER_ATOL, escape_radius: float = 1e3) -> InnerTrajectory:
    """Solve the inner limit problem over ``t_span`` (either direction).

    Raises
    ------
    BlowUp
        ``|x|`` passed ``escape_radius``.
    """
    fun, _ = _inner_field(sys, mu, sigma)

    def escape(t, x):
        return escape_radius - np.max(np.abs(x))

    escape.terminal = True
    sol = solve_ivp(fun, tuple(map(float, t_span)), np.atleast_1d(np.asarray(x0, dtype=float)), method="DOP853",
                    rtol=rtol, atol=atol, dense_output=True, events=escape)
    if sol.status == 1:
        raise BlowUp(f"inner solution left |x| < {escape_radius} at t={sol.t[-1]:.6g}")
    if sol.status != 0:
        raise NoConvergence(sol.message)
    return InnerTrajectory(sol.t, sol.y.T, sol.sol)


@dataclass
class HeteroclinicSolution:
    """Connection ``phi`` on ``[-T, T]`` between ``x_minus`` and ``x_plus``."""

    grid: np.ndarray
    values: np.ndarray  # (m, n)
    x_minus: np.ndarray
    x_plus: np.ndarray
    case: str
    mu: float
    sigma: float
    T: float
    critical_param: Optional[float] = None
    critical_name: Optional[str] = None
    endpoint_residuals: tuple = (0.0, 0.0)
    decay_rates: tuple = (float("nan"), float("nan"))
    matching_defect: float = 0.0
    multiplicity: int = 1
    spectral_margin: float = float("nan")
    rtol: float = INNER_RTOL
    _sys: Optional[SystemDefinition] = field(default=None, repr=False)
    _forward: Optional[InnerTrajectory] = field(default=None, repr=False)
    _backward: Optional[InnerTrajectory] = field(default=None, repr=False)

    def __post_init__(self):
        self._stationary = bool(np.all(self.values == self.values[0]))

    @property
    def stationary(self) -> bool:
        """True when the connection is a single equilibrium (every sample identical)."""
        return self._stationary

    def sol(self, t):
        """Dense ``phi(t)``: forward piece on ``t <= 0``, backward piece on ``t > 0``."""
        t = np.asarray(t, dtype=float)
        if self.stationary:
            return self.values[0].copy() if t.ndim == 0 else np.tile(self.values[0], (t.size, 1))
        if t.ndim == 0:
            return self._forward(float(t)) if t <= 0 else self._backward(float(t))
        out = np.empty((t.size, self.x_minus.size))
        neg = t <= 0
        if neg.any():
            out[neg] = self._forward(t[neg])
        if (~neg).any():
            out[~neg] = self._backward(t[~neg])
        return out

    def reintegrated(self, rtol: float) -> "HeteroclinicSolution":
        """Copy with both pieces re-solved from the same end states at tolerance ``rtol``."""
        fw = integrate_inner(self._sys, self._forward.x[0], (-self.T, 0.0), self.mu, self.sigma, rtol, rtol * 1e-2)
        bw = integrate_inner(self._sys, self._backward.x[0], (self.T, 0.0), self.mu, self.sigma, rtol, rtol * 1e-2)
        grid = np.concatenate([fw.t, bw.t[::-1][1:]])
        vals = np.concatenate([fw.x, bw.x[::-1][1:]])
        return replace(self, grid=grid, values=vals, rtol=rtol, _forward=fw, _backward=bw)

    def defect(self, sys: SystemDefinition, n: int = 801, h: float = 1e-4) -> float:
        """Max of ``|phi' - f(phi, gamma(mu t), 0, sigma, 0)|`` with ``phi'`` from the interpolant."""
        fun, _ = _inner_field(sys, self.mu, self.sigma)
        ts = np.linspace(-self.T + 2 * h, self.T - 2 * h, n)
        ts = ts[np.abs(ts) > 2 * h]  # the two pieces meet at 0
        worst = 0.0
        for t in ts:
            d = (self.sol(t + h) - self.sol(t - h)) / (2 * h)
            worst = max(worst, float(np.max(np.abs(d - fun(t, self.sol(t))))))
        return worst

    def as_dict(self) -> dict:
        return {
            "case": self.case,
            "mu": self.mu,
            "sigma": self.sigma,
            "T": self.T,
            "critical_param": self.critical_param,
            "critical_name": self.critical_name,
            "x_minus": self.x_minus.tolist(),
            "x_plus": self.x_plus.tolist(),
            "endpoint_residuals": list(self.endpoint_residuals),
            "decay_rates": list(self.decay_rates),
            "matching_defect": self.matching_defect,
            "multiplicity": self.multiplicity,
        }


def _eig_split(J):
    """Real bases of the unstable and stable eigenspaces of ``J``."""
    w, V = np.linalg.eig(J)
    uns = [np.real(V[:, i]) for i in range(len(w)) if np.real(w[i]) > 0 and abs(np.imag(w[i])) < 1e-12]
    stb = [np.real(V[:, i]) for i in range(len(w)) if np.real(w[i]) < 0 and abs(np.imag(w[i])) < 1e-12]
    if any(abs(np.imag(v)) > 1e-12 for v in w):
        raise UnsupportedShooting("complex endpoint eigenvalues are not supported by the shooting setup")

    def orient(v):
        v = v / np.linalg.norm(v)
        k = int(np.argmax(np.abs(v) > 1e-12))
        return v if v[k] > 0 else -v

    return [orient(v) for v in uns], [orient(v) for v in stb], w


def default_horizon(mu: float, margin: float) -> float:
    return 40.0 / min(1.0, mu) / min(1.0, margin)


def _fit_rate(ts, d):
    ok = d > 0
    if ok.sum() < 3:
        return float("nan")
    slope, _ = np.polyfit(ts[ok], np.log(d[ok]), 1)
    return float(slope)


class _Shooter:
    def __init__(self, sys, mu, sigma, T, x_minus, x_plus, eta):
        self.sys, self.mu, self.sigma, self.T = sys, mu, sigma, T
        self.xm, self.xp = x_minus, x_plus
        Jm = np.atleast_2d(sys.jac_x(x_minus, 0.0, 0.0, sigma, 0.0))
        Jp = np.atleast_2d(sys.jac_x(x_plus, 1.0, 0.0, sigma, 0.0))
        self.um, _, self.eig_m = _eig_split(Jm)
        _, self.sp, self.eig_p = _eig_split(Jp)
        # unknowns are amplitudes near t = 0: an offset along a direction with
        # rate lam is placed at the horizon as amplitude * exp(-|lam| T)
        self.scale_m = [math.exp(-min(float(np.real(w)) * T, 600.0)) for w in self.eig_m if np.real(w) > 0]
        self.scale_p = [math.exp(-min(float(-np.real(w)) * T, 600.0)) for w in self.eig_p if np.real(w) < 0]
        self.eta = eta

    def pieces(self, a, b, sigma=None, mu=None):
        sigma = self.sigma if sigma is None else sigma
        mu = self.mu if mu is None else mu
        x0 = self.xm + sum((ai * c * v for ai, c, v in zip(a, self.scale_m, self.um)), np.zeros_like(self.xm))
        x1 = self.xp + sum((bi * c * v for bi, c, v in zip(b, self.scale_p, self.sp)), np.zeros_like(self.xp))
        fw = integrate_inner(self.sys, x0, (-self.T, 0.0), mu, sigma)
        bw = integrate_inner(self.sys, x1, (self.T, 0.0), mu, sigma)
        return fw, bw

    def miss(self, a, b, **kw):
        fw, bw = self.pieces(a, b, **kw)
        return fw.x[-1] - bw.x[-1]


def find_connection(
    sys: SystemDefinition,
    case: str = "I",
    mu: float = 1.0,
    sigma: float = 0.0,
    param_bracket=None,
    T: float | None = None,
    connect_tol: float = 1e-8,
    endpoint_tol: float = 1e-3,
    eta: float = 1e-6,
    max_iter: int = 50,
    scan_points: int = 9,
) -> HeteroclinicSolution:
    """Find the inner connection between ``p_minus`` and ``p_plus``.

    Case ``"I"`` verifies a connection at the given ``(mu, sigma)``. Case
    ``"II"`` solves for ``mu`` and ``"III"`` for ``sigma`` inside
    ``param_bracket`` (the other parameter is held fixed).

    Raises
    ------
    NoBracket
        The matching defect has no sign change over ``param_bracket``.
    NoConvergence
        Matching did not reach ``connect_tol``.
    UnsupportedShooting
        The number of free shooting unknowns does not match the state
        dimension (e.g. several unstable directions at ``p_minus``).
    """
    if case not in ("I", "II", "III"):
        raise ValueError("case must be 'I', 'II' or 'III'")
    if case != "I" and param_bracket is None:
        raise ValueError(f"case {case} needs param_bracket")
    free = {"II": "mu", "III": "sigma"}.get(case)
    if free == "mu" and min(param_bracket) <= 0:
        raise ValueError("mu must stay positive")

    # endpoints are taken at the reference parameters (bracket midpoint for the free one)
    sig_ref = sigma if free != "sigma" else 0.5 * (param_bracket[0] + param_bracket[1])
    mu_ref = mu if free != "mu" else 0.5 * (param_bracket[0] + param_bracket[1])
    pm = boundary_point(sys, "minus", sig_ref)
    pp = boundary_point(sys, "plus", sig_ref)
    margin = min(pm.min_distance_to_imaginary_axis, pp.min_distance_to_imaginary_axis)
    if T is None:
        mu_lo = mu_ref if free != "mu" else min(param_bracket)
        T = default_horizon(mu_lo, margin)

    sh = _Shooter(sys, mu_ref, sig_ref, T, pm.x, pp.x, eta)
    ka, kb = len(sh.um), len(sh.sp)
    if ka > 1 or kb > 1:
        raise UnsupportedShooting(f"{ka} unstable directions at p_minus and {kb} stable at p_plus; "
                                  "only one-dimensional offset families are supported")
    n = sys.dim
    fixed_a = None
    if ka + kb + (1 if free else 0) > n and ka == 1:
        # surplus freedom: pin the past offset at +eta, then -eta
        fixed_a = [eta, -eta]
    multiplicity = 1

    def endpoints_for(p):
        if free == "sigma":
            return boundary_point(sys, "minus", p, seed=pm.x).x, boundary_point(sys, "plus", p, seed=pp.x).x
        return pm.x, pp.x

    def attempt(a_fix):
        nonlocal multiplicity
        na = 0 if a_fix is not None else ka
        n_unknown = na + kb + (1 if free else 0)

        def split(u):
            a = np.array([a_fix]) if a_fix is not None else u[:na]
            return a, u[na:na + kb]

        def residual(u):
            a, b = split(u)
            kw = {}
            if free:
                p = float(u[-1])
                kw[free] = p
                sh.xm, sh.xp = endpoints_for(p)
            return sh.miss(a, b, **kw)

        crit = None
        if n_unknown == 0:
            u = np.zeros(0)
            m = residual(u)
            if np.linalg.norm(m) > connect_tol:
                raise NoConvergence(f"no connection at mu={mu}, sigma={sigma}: "
                                    f"matching defect {np.linalg.norm(m):.3e}")
        elif n == 1 and n_unknown == 1 and free:
            lo, hi = map(float, param_bracket)

            def g(p):
                return float(residual(np.array([p]))[0])

            grid = np.linspace(lo, hi, scan_points)
            vals = np.array([g(p) for p in grid])
            changes = [i for i in range(len(grid) - 1) if vals[i] == 0 or vals[i] * vals[i + 1] < 0]
            if not changes:
                raise NoBracket(f"matching defect keeps sign {np.sign(vals[0]):+.0f} over [{lo}, {hi}]")
            multiplicity = len(changes)
            i = changes[0]
            crit = grid[i] if vals[i] == 0 else brentq(g, grid[i], grid[i + 1], xtol=1e-14,
                                                       rtol=4 * np.finfo(float).eps, maxiter=max_iter * 4)
            u = np.array([crit])
            if abs(g(crit)) > connect_tol:
                raise NoConvergence(f"bracketed root has defect {abs(g(crit)):.3e} > {connect_tol}")
        elif n_unknown == n:
            u = np.zeros(n_unknown)
            if free:
                u[-1] = 0.5 * (param_bracket[0] + param_bracket[1])
            u = _newton_fd(residual, u, connect_tol, max_iter)
            if free:
                crit = float(u[-1])
                if not min(param_bracket) <= crit <= max(param_bracket):
                    raise NoConvergence(f"critical {free}={crit} left the bracket {param_bracket}")
        else:
            raise UnsupportedShooting(f"{n_unknown} shooting unknowns for {n} matching conditions")
        a, b = split(u)
        return a, b, crit

    if fixed_a is None:
        a, b, crit = attempt(None)
    else:
        try:
            a, b, crit = attempt(fixed_a[0])
        except (NoConvergence, NoBracket):
            a, b, crit = attempt(fixed_a[1])

    kw = {free: crit} if free else {}
    if free:
        sh.xm, sh.xp = endpoints_for(crit)
    fw, bw = sh.pieces(a, b, **kw)
    mu_f = crit if free == "mu" else mu
    sig_f = crit if free == "sigma" else sigma
    grid = np.concatenate([fw.t, bw.t[::-1][1:]])
    vals = np.concatenate([fw.x, bw.x[::-1][1:]])
    res = (float(np.linalg.norm(fw.x[0] - sh.xm)), float(np.linalg.norm(bw.x[0] - sh.xp)))

    tail = np.linspace(0.5 * T, T, 20)
    rate_m = _fit_rate(-tail, np.linalg.norm(fw(-tail) - sh.xm, axis=1))
    rate_p = _fit_rate(tail, np.linalg.norm(bw(tail) - sh.xp, axis=1))
    sol = HeteroclinicSolution(
        grid, vals, sh.xm.copy(), sh.xp.copy(), case, float(mu_f), float(sig_f), float(T),
        critical_param=None if crit is None else float(crit), critical_name=free,
        endpoint_residuals=res, decay_rates=(rate_m, rate_p),
        matching_defect=float(np.linalg.norm(fw.x[-1] - bw.x[-1])), multiplicity=multiplicity,
        spectral_margin=float(margin), _sys=sys, _forward=fw, _backward=bw,
    )
    if max(res) > endpoint_tol:
        raise NoConvergence(f"endpoint residuals {res} exceed endpoint_tol={endpoint_tol}; increase T")
    return sol


def _newton_fd(F, u, tol, max_iter, h=1e-7):
    r = F(u)
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol:
            return u
        J = np.empty((r.size, u.size))
        for j in range(u.size):
            e = np.zeros(u.size)
            e[j] = h * max(1.0, abs(u[j]))
            J[:, j] = (F(u + e) - F(u - e)) / (2 * e[j])
        du = np.linalg.lstsq(J, -r, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            un = u + lam * du
            rn = F(un)
            if np.linalg.norm(rn) < np.linalg.norm(r):
                break
            lam *= 0.5
        u, r = un, rn
    if np.linalg.norm(r) <= tol:
        return u
    raise NoConvergence(f"shooting Newton stalled at defect {np.linalg.norm(r):.3e}")
