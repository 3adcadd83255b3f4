"""Adjoint solutions, Melnikov integrals and critical parameters.

The adjoint ``psi' = -(D_x f)^T psi`` along the connection is integrated
backward from ``t = +T`` in log-scaled form: ``psi = u * exp(l)`` with ``|u| = 1``,
so large horizons do not overflow.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import quad_vec, solve_ivp
from scipy.optimize import brentq

from .errors import (
    ASFError,
    DegenerateRoot,
    NoSignChange,
    NotDecaying,
    NoUnstableDirection,
    TailDominates,
)
from .heteroclinic import HeteroclinicSolution, find_connection
from .integrator import SolveSettings, simulate, simulate_backward
from .system import SystemDefinition, branches_for, slow_manifold_point

ADJ_RTOL = 1e-12
ADJ_ATOL = 1e-14
NORMALIZATIONS = ("unit-at-zero", "unit-at-one")


@dataclass
class AdjointSolution:
    """Decaying adjoint solution on ``[-T, T]``."""

    T: float
    normalization: str
    scale: float
    decay_rates: tuple
    _sol: object = field(repr=False, default=None)
    n: int = 1

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        y = self._sol(t)
        u, ell = y[: self.n], y[self.n]
        out = u * np.exp(ell) * self.scale
        return out.T if t.ndim else out

    @property
    def grid(self) -> np.ndarray:
        return np.asarray(self._sol.ts)

    def scaled(self, factor: float) -> "AdjointSolution":
        """Same solution multiplied by ``factor`` (normalization tag becomes 'custom')."""
        return AdjointSolution(self.T, "custom", self.scale * factor, self.decay_rates, self._sol, self.n)


def solve_adjoint(sys: SystemDefinition, phi: HeteroclinicSolution, mu: float | None = None,
                  sigma: float | None = None, normalization: str = "unit-at-zero", T: float | None = None,
                  decay_tol: float = 1e-6, rtol: float = ADJ_RTOL) -> AdjointSolution:
    """Decaying solution of ``psi' = -(D_x f)^T psi`` along ``phi``.

    Starts at ``t = +T`` on the left eigenvector of the (single) positive
    eigenvalue of ``D_x f_plus(p_plus)`` and integrates backward to ``-T``.

    Raises
    ------
    NoUnstableDirection
        ``D_x f_plus(p_plus)`` has no eigenvalue with positive real part.
    NotDecaying
        ``|psi(-T)|`` is not small relative to the maximum over the grid.
    """
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    mu = phi.mu if mu is None else mu
    sigma = phi.sigma if sigma is None else sigma
    T = phi.T if T is None else T
    n = sys.dim
    Jp = np.atleast_2d(sys.jac_x(phi.x_plus, 1.0, 0.0, sigma, 0.0))
    w, V = np.linalg.eig(Jp.T)
    pos = [i for i in range(len(w)) if np.real(w[i]) > 0]
    if not pos:
        raise NoUnstableDirection("D_x f_plus(p_plus) has no eigenvalue with positive real part")
    if len(pos) > 1:
        raise NoUnstableDirection(
            f"{len(pos)} eigenvalues with positive real part at p_plus; only a one-dimensional "
            "decaying adjoint subspace is supported"
        )
    v0 = np.real(V[:, pos[0]])
    v0 = v0 / np.linalg.norm(v0)

    ramp = sys.ramp

    def rhs(t, y):
        u = y[:n]
        J = np.atleast_2d(sys.jac_x(phi.sol(t), ramp(mu * t), 0.0, sigma, 0.0))
        Au = -J.T @ u
        q = float(u @ Au)
        out = np.empty(n + 1)
        out[:n] = Au - q * u
        out[n] = q
        return out

    # loose pre-pass for l(0) so the main pass has l ~ 0 where psi peaks;
    # the relative tolerance then acts where it matters
    pre = solve_ivp(rhs, (T, 0.0), np.append(v0, 0.0), method="DOP853", rtol=1e-6, atol=1e-9)
    y0 = np.append(v0, -float(pre.y[n, -1]))
    sol = solve_ivp(rhs, (T, -T), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-2, dense_output=True)
    if sol.status != 0:
        raise NotDecaying(f"adjoint integration failed: {sol.message}")
    ell = sol.y[n]
    u0 = sol.sol(0.0)[:n]
    ell0 = sol.sol(0.0)[n]
    if normalization == "unit-at-zero":
        k = int(np.argmax(np.abs(u0) > 1e-12))
        sign = 1.0 if u0[k] > 0 else -1.0
        scale = sign * math.exp(-ell0) / float(np.linalg.norm(u0))
    else:
        y1 = sol.sol(1.0)
        u1, ell1 = y1[:n], y1[n]
        k = int(np.argmax(np.abs(u1) > 1e-12))
        sign = 1.0 if u1[k] > 0 else -1.0
        scale = sign * math.exp(-ell1) / float(np.linalg.norm(u1))

    peak = float(np.max(ell))
    rel_minus = math.exp(ell[-1] - peak)
    rel_plus = math.exp(ell[0] - peak)
    if rel_minus > decay_tol or rel_plus > decay_tol:
        raise NotDecaying(
            f"|psi(-T)|/max = {rel_minus:.3e}, |psi(T)|/max = {rel_plus:.3e} exceed decay_tol={decay_tol}"
        )
    # fitted exponential rates on the outer halves, as d log|psi| / d|t|
    tail = np.linspace(0.5 * T, T, 20)
    lp = np.array([sol.sol(t)[n] for t in tail])
    lm = np.array([sol.sol(-t)[n] for t in tail])
    rate_p = float(np.polyfit(tail, lp, 1)[0])
    rate_m = float(np.polyfit(tail, lm, 1)[0])
    return AdjointSolution(float(T), normalization, float(scale), (rate_m, rate_p), sol.sol, n)


# ------------------------------------------------------------------ integrals


@dataclass
class MelnikovReport:
    G_eps: float
    G_mu: Optional[float]
    G_sigma: Optional[float]
    quadrature_error: float
    tail_bound: float
    at: tuple  # (mu, sigma, case)
    components: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "G_eps": self.G_eps,
            "G_mu": self.G_mu,
            "G_sigma": self.G_sigma,
            "quadrature_error": self.quadrature_error,
            "tail_bound": self.tail_bound,
            "mu": self.at[0],
            "sigma": self.at[1],
            "case": self.at[2],
            "components": dict(self.components),
        }


def _integrand(sys, phi, psi, mu, sigma):
    ramp = sys.ramp

    def F(t):
        x = phi.sol(t)
        p = psi(t)
        g = ramp(mu * t)
        args = (x, g, 0.0, sigma, 0.0)
        s_term = t * float(p @ np.atleast_1d(sys.d_s(*args)))
        e_term = float(p @ np.atleast_1d(sys.d_eps(*args)))
        fg = float(p @ np.atleast_1d(sys.d_gamma(*args)))
        mu_term = t * ramp.deriv(mu * t) * fg
        sg_term = float(p @ np.atleast_1d(sys.d_sigma(*args)))
        return np.array([s_term, e_term, mu_term, sg_term])

    return F


def melnikov_integrals(sys: SystemDefinition, phi: HeteroclinicSolution, psi: AdjointSolution,
                       mu: float | None = None, sigma: float | None = None, epsabs: float = 1e-14,
                       epsrel: float = 1e-12, tail_ratio: float = 0.1, data_check: bool = True) -> MelnikovReport:
    """All three Melnikov integrals from one adaptive Gauss-Kronrod pass.

    ``quadrature_error`` is the Gauss-Kronrod estimate plus a data-error
    estimate: the same integrals are taken along a connection and adjoint
    recomputed at ten times looser tolerance, and the largest difference is
    added. ``tail_bound`` bounds the contribution of ``|t| > T`` from the
    fitted exponential decay of ``psi``.

    Raises
    ------
    TailDominates
        ``tail_bound`` exceeds ``tail_ratio * |G_eps|`` while being above
        round-off level and above ``epsabs``.
    """
    mu = phi.mu if mu is None else mu
    sigma = phi.sigma if sigma is None else sigma
    T = min(phi.T, psi.T)
    F = _integrand(sys, phi, psi, mu, sigma)
    if data_check:
        phi_l = phi.reintegrated(10 * phi.rtol)
        psi_l = solve_adjoint(sys, phi_l, mu, sigma, T=psi.T, rtol=10 * ADJ_RTOL, decay_tol=1.0)
        psi_l = psi_l.scaled(1.0) if psi.normalization == "custom" else psi_l
        # match the scale of psi at the normalisation point
        t_ref = 1.0 if psi.normalization == "unit-at-one" else 0.0
        ref, ref_l = psi(t_ref), psi_l(t_ref)
        psi_l = psi_l.scaled(float(np.linalg.norm(ref) / np.linalg.norm(ref_l)) * float(np.sign(ref @ ref_l)))
        F_l = _integrand(sys, phi_l, psi_l, mu, sigma)

        def H(t):
            v = F(t)
            return np.concatenate([v, np.abs(v), F_l(t) - v])
    else:
        def H(t):
            v = F(t)
            return np.concatenate([v, np.abs(v), np.zeros(4)])

    tot = np.zeros(12)
    q_err = 0.0
    for a, b in ((-T, 0.0), (0.0, T)):
        v, e = quad_vec(H, a, b, epsabs=epsabs, epsrel=epsrel, norm="max", limit=2000)
        tot += v
        q_err += e
    vals, absint, diff = tot[:4], tot[4:8], tot[8:]
    q_err = float(q_err + np.max(np.abs(diff)))

    # tails: |integrand(+-T)| / rate with rate the fitted decay of psi
    tail = 0.0
    for t_end, rate in ((-T, psi.decay_rates[0]), (T, psi.decay_rates[1])):
        mag = float(np.max(np.abs(F(t_end))))
        tail += mag / -rate if rate < 0 else mag * T
    g_eps = float(vals[0] + vals[1])
    scale = float(absint[0] + absint[1]) + 1e-300
    if tail > tail_ratio * abs(g_eps) and tail > max(1e-10 * scale, epsabs):
        raise TailDominates(f"tail bound {tail:.3e} dominates |G_eps| = {abs(g_eps):.3e}")
    return MelnikovReport(
        g_eps, float(vals[2]), float(vals[3]), q_err, float(tail), (float(mu), float(sigma), phi.case),
        components={"s_term": float(vals[0]), "eps_term": float(vals[1]),
                    "s_term_abs": float(absint[0]), "eps_term_abs": float(absint[1]),
                    "data_error": float(np.max(np.abs(diff)))},
    )


def G_eps(sys, phi, psi, mu=None, sigma=None) -> MelnikovReport:
    """``int psi . (t df/ds + df/deps) dt`` along the connection."""
    return melnikov_integrals(sys, phi, psi, mu, sigma)


def G_mu(sys, phi, psi, mu_c=None, sigma=None) -> float:
    """``int psi . t gamma'(mu_c t) df/dg dt``."""
    return melnikov_integrals(sys, phi, psi, mu_c, sigma).G_mu


def G_sigma(sys, phi, psi, mu=None, sigma_c=None) -> float:
    """``int psi . df/dsigma dt``."""
    return melnikov_integrals(sys, phi, psi, mu, sigma_c).G_sigma


def evaluate(sys: SystemDefinition, mu: float, sigma: float, normalization: str = "unit-at-zero",
             T: float | None = None, case: str = "I") -> MelnikovReport:
    """Connection, adjoint and integrals at one parameter point."""
    phi = find_connection(sys, case, mu, sigma, T=T)
    psi = solve_adjoint(sys, phi, mu, sigma, normalization=normalization)
    return melnikov_integrals(sys, phi, psi, mu, sigma)


# --------------------------------------------------------- critical parameters


@dataclass
class CriticalParameter:
    kind: str  # "rate" | "bifurcation"
    zeroth_order: float
    first_order_slope: Optional[float] = None
    derivative: Optional[float] = None  # dG_eps / d(parameter) at the root
    report: Optional[MelnikovReport] = None

    def predicted(self, eps: float) -> float:
        slope = 0.0 if self.first_order_slope is None else self.first_order_slope
        return self.zeroth_order + slope * eps

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "zeroth_order": self.zeroth_order,
            "first_order_slope": self.first_order_slope,
            "derivative": self.derivative,
        }


def _g_of(sys, normalization, T, keep=None):
    def g(mu, sigma):
        phi = find_connection(sys, "I", mu, sigma, T=T)
        psi = solve_adjoint(sys, phi, mu, sigma, normalization=normalization)
        if keep is not None:
            keep.append((phi, psi))
        return melnikov_integrals(sys, phi, psi, mu, sigma)

    return g


def _same_data(a, b, n: int = 201) -> bool:
    """Connection and adjoint identical (bitwise on a probe grid) for two parameter values."""
    (pa, qa), (pb, qb) = a, b
    if pa.T != pb.T or not (pa.stationary and pb.stationary) or not np.array_equal(pa.values[0], pb.values[0]):
        return False
    ts = np.linspace(-pa.T, pa.T, n)
    return bool(np.array_equal(qa(ts), qb(ts)))


def critical_sigma_of_mu(sys: SystemDefinition, mu: float, sigma_bracket=(0.0, 1.0),
                         normalization: str = "unit-at-zero", T: float | None = None,
                         nondegeneracy_tol: float = 1e-8, root_tol: float = 1e-12,
                         fast_path: bool = True) -> CriticalParameter:
    """Root of ``sigma -> G_eps(mu, sigma)`` inside ``sigma_bracket``.

    For systems flagged ``affine_sigma`` the root is first taken from the
    exact linear interpolant through the bracket ends and accepted only if
    ``G_eps`` there vanishes within the quadrature error; otherwise a
    bracketed ``brentq`` search runs.

    Raises
    ------
    NoSignChange
        ``G_eps`` has the same sign at both ends.
    DegenerateRoot
        ``|dG_eps/dsigma| <= nondegeneracy_tol`` at the root.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    kept: list = []
    g = _g_of(sys, normalization, T, kept)
    lo, hi = map(float, sigma_bracket)
    r_lo, r_hi = g(mu, lo), g(mu, hi)
    if r_lo.G_eps * r_hi.G_eps > 0:
        raise NoSignChange(f"G_eps keeps sign over sigma in [{lo}, {hi}] at mu={mu}")
    root = None
    rep = None
    deriv = None
    if fast_path and sys.affine_sigma:
        slope = (r_hi.G_eps - r_lo.G_eps) / (hi - lo)
        cand = lo - r_lo.G_eps / slope
        if _same_data(kept[0], kept[1]):
            # phi and psi do not move with sigma, so G_eps is exactly affine
            root, deriv = cand, slope
            w = (cand - lo) / (hi - lo)
            rep = MelnikovReport(
                0.0, (1 - w) * r_lo.G_mu + w * r_hi.G_mu, (1 - w) * r_lo.G_sigma + w * r_hi.G_sigma,
                max(r_lo.quadrature_error, r_hi.quadrature_error), max(r_lo.tail_bound, r_hi.tail_bound),
                (float(mu), float(cand), "I"), {"interpolated": True},
            )
        else:
            rep = g(mu, cand)
            if abs(rep.G_eps) <= 10 * (rep.quadrature_error + rep.tail_bound) + 1e-14:
                root, deriv = cand, slope
    if root is None:
        root = brentq(lambda s: g(mu, s).G_eps, lo, hi, xtol=root_tol, rtol=4 * np.finfo(float).eps)
        rep = g(mu, root)
        h = 1e-4 * max(1.0, abs(root))
        deriv = (g(mu, root + h).G_eps - g(mu, root - h).G_eps) / (2 * h)
    if not abs(deriv) > nondegeneracy_tol:
        raise DegenerateRoot(f"|dG_eps/dsigma| = {abs(deriv):.3e} at sigma_c={root}")
    return CriticalParameter("bifurcation", float(root), None, float(deriv), rep)


def critical_mu_of_sigma(sys: SystemDefinition, sigma: float, mu_bracket=(0.5, 4.0),
                         normalization: str = "unit-at-zero", T: float | None = None,
                         nondegeneracy_tol: float = 1e-8, root_tol: float = 1e-10) -> CriticalParameter:
    """Root of ``mu -> G_eps(mu, sigma)`` inside ``mu_bracket``.

    Raises
    ------
    NoSignChange, DegenerateRoot
        As in :func:`critical_sigma_of_mu`.
    """
    lo, hi = map(float, mu_bracket)
    if not lo > 0:
        raise ValueError("mu bracket must be positive")
    g = _g_of(sys, normalization, T)
    if g(lo, sigma).G_eps * g(hi, sigma).G_eps > 0:
        raise NoSignChange(f"G_eps keeps sign over mu in [{lo}, {hi}] at sigma={sigma}")
    root = brentq(lambda m: g(m, sigma).G_eps, lo, hi, xtol=root_tol, rtol=4 * np.finfo(float).eps)
    h = 1e-4 * max(1.0, abs(root))
    deriv = (g(root + h, sigma).G_eps - g(root - h, sigma).G_eps) / (2 * h)
    if not abs(deriv) > nondegeneracy_tol:
        raise DegenerateRoot(f"|dG_eps/dmu| = {abs(deriv):.3e} at mu_c={root}")
    return CriticalParameter("rate", float(root), None, float(deriv), g(root, sigma))


@dataclass
class CurveRow:
    mu: float
    sigma_c: float
    dGdsigma: float
    error: str = ""


def _curve_point(args):
    sys, mu, bracket, normalization, T = args
    try:
        cp = critical_sigma_of_mu(sys, mu, bracket, normalization, T)
        return CurveRow(mu, cp.zeroth_order, cp.derivative)
    except ASFError as exc:
        return CurveRow(mu, float("nan"), float("nan"), f"{type(exc).__name__}: {exc}")


def trace_critical_curve(sys: SystemDefinition, mu_range, n_points: int, sigma_bracket=(0.0, 1.0),
                         normalization: str = "unit-at-zero", T: float | None = None, jobs: int = 1,
                         warm_width: float = 0.05) -> list:
    """``sigma_c`` on an evenly spaced ``mu`` grid; failed points become NaN rows.

    Sequential runs warm-start each bracket at the previous root
    (``+- warm_width``) and fall back to ``sigma_bracket``; parallel runs use
    ``sigma_bracket`` throughout. Rows are sorted by ``mu``.
    """
    lo, hi = map(float, mu_range)
    if not lo > 0:
        raise ValueError("mu range must exclude mu <= 0")
    if n_points < 1:
        raise ValueError("n_points must be positive")
    mus = np.linspace(lo, hi, n_points) if n_points > 1 else np.array([lo])
    mus = [float(m) for m in mus]
    rows = []
    if jobs > 1 and sys.recipe is not None:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_curve_point, [(sys, m, sigma_bracket, normalization, T) for m in mus]))
    else:
        prev = None
        for m in mus:
            row = None
            if prev is not None and np.isfinite(prev):
                wb = (max(sigma_bracket[0], prev - warm_width), min(sigma_bracket[1], prev + warm_width))
                row = _curve_point((sys, m, wb, normalization, T))
                if row.error:
                    row = None
            if row is None:
                row = _curve_point((sys, m, sigma_bracket, normalization, T))
            rows.append(row)
            prev = row.sigma_c
    return sorted(rows, key=lambda r: r.mu)


def first_order_correction(case: str, G_eps_at_crit: float, G_mu_or_sigma: float, zeroth_order: float = 0.0,
                           nondegeneracy_tol: float = 1e-10) -> CriticalParameter:
    """Slope ``-G_eps / G_mu`` (case II) or ``-G_eps / G_sigma`` (case III).

    Raises
    ------
    DegenerateRoot
        Denominator below ``nondegeneracy_tol`` in magnitude.
    """
    if case not in ("II", "III"):
        raise ValueError("case must be 'II' or 'III'")
    if not abs(G_mu_or_sigma) > nondegeneracy_tol:
        raise DegenerateRoot(f"denominator {G_mu_or_sigma:.3e} below nondegeneracy_tol")
    slope = -float(G_eps_at_crit) / float(G_mu_or_sigma)
    kind = "rate" if case == "II" else "bifurcation"
    return CriticalParameter(kind, float(zeroth_order), slope, float(G_mu_or_sigma))


def critical_with_correction(sys: SystemDefinition, case: str, mu: float = 1.0, sigma: float = 0.0,
                             param_bracket=(0.0, 1.0), normalization: str = "unit-at-zero",
                             T: float | None = None) -> CriticalParameter:
    """Connection parameter of case II/III plus its first-order eps correction."""
    phi = find_connection(sys, case, mu, sigma, param_bracket=param_bracket, T=T)
    psi = solve_adjoint(sys, phi, normalization=normalization)
    rep = melnikov_integrals(sys, phi, psi)
    denom = rep.G_mu if case == "II" else rep.G_sigma
    cp = first_order_correction(case, rep.G_eps, denom, phi.critical_param)
    cp.report = rep
    return cp


# ----------------------------------------------------------------- gap oracle


@dataclass
class GapResult:
    eps: float
    D: float
    x_forward: np.ndarray
    x_backward: np.ndarray
    corrected: tuple


def _landing_branch(brs, sys, sigma):
    from .system import boundary_point

    plus = [b for b in brs.values() if b.side == "plus" and b.stability == "repelling"]
    if not plus:
        plus = [b for b in brs.values() if b.side == "plus"]
    pp = boundary_point(sys, "plus", sigma).x
    return min(plus, key=lambda b: float(np.linalg.norm(b.h(0.0) - pp)))


def manifold_gap_direct(sys: SystemDefinition, mu: float, sigma: float, eps: float, rho: float = 1.0,
                        settings: SolveSettings | None = None, direction=None) -> GapResult:
    """Signed gap at ``s = 0`` between forward- and backward-extended slow manifolds.

    Forward from the past slow manifold at ``s = -rho``, backward from the
    repelling future slow manifold at ``s = +rho``; the difference
    (forward minus backward) is projected on ``direction`` (default: the
    adjoint direction at ``t = 0``, plain difference for scalar systems).
    """
    settings = settings or SolveSettings(rel_tol=1e-12, abs_tol=1e-14)
    brs = branches_for(sys, sigma, rho=rho)
    minus = [b for b in brs.values() if b.side == "minus"][0]
    plus = _landing_branch(brs, sys, sigma)
    xa, ca = slow_manifold_point(sys, minus, -rho, mu, sigma, eps)
    xb, cb = slow_manifold_point(sys, plus, rho, mu, sigma, eps)
    tr = simulate(sys, xa, -rho, mu, sigma, eps, 0.0, settings)
    xf = tr.x[-1]
    xbk = np.atleast_1d(simulate_backward(sys, xb, rho, mu, sigma, eps, 0.0, settings))
    if direction is None:
        if sys.dim == 1:
            direction = np.ones(1)
        else:
            phi = find_connection(sys, "I", mu, sigma)
            direction = solve_adjoint(sys, phi)(0.0)
    direction = np.asarray(direction, dtype=float)
    direction = direction / np.linalg.norm(direction)
    D = float((xf - xbk) @ direction)
    return GapResult(float(eps), D, xf, xbk, (ca, cb))
