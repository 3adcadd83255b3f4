"""Ramp functions gamma: R -> (0, 1) and structural checks on them."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DerivativeMismatch


@dataclass(frozen=True)
class RampFunction:
    """A sigmoid ramp with its derivative.

    Parameters
    ----------
    eval : callable
        Scalar map z -> gamma(z) in (0, 1).
    deriv : callable
        Scalar map z -> gamma'(z).
    asymptotic_order : int
        Exponent l in gamma(z) = O(|z|^-l) as z -> -inf (and 1 - gamma likewise
        as z -> +inf). Metadata only.
    symmetric : bool
        Whether gamma(-z) = 1 - gamma(z).
    """

    eval: Callable[[float], float]
    deriv: Callable[[float], float]
    asymptotic_order: int = 1
    symmetric: bool = False
    name: str = "custom"

    def __post_init__(self):
        if int(self.asymptotic_order) != self.asymptotic_order or self.asymptotic_order < 1:
            raise ValueError("asymptotic_order must be a positive integer")

    def __call__(self, z):
        return self.eval(z)


def _alg_eval(z: float) -> float:
    # Rewritten to avoid cancellation in the left tail; right tail by symmetry.
    z = float(z)
    if math.isinf(z):
        return 0.0 if z < 0 else 1.0
    if z > 0:
        return 1.0 - _alg_eval(-z)
    if z < -1e150:
        return 0.25 / (z * z)
    r = math.hypot(1.0, z)
    return 0.5 / (r * (r - z))


def _alg_deriv(z: float) -> float:
    z = float(z)
    if abs(z) > 1e100:
        return 0.0
    return 0.5 * (1.0 + z * z) ** -1.5


def builtin_gamma() -> RampFunction:
    """The algebraic sigmoid ``0.5 * (1 + z / sqrt(1 + z**2))``.

    Examples
    --------
    >>> g = builtin_gamma()
    >>> g(0.0)
    0.5
    >>> round(g(1.0), 6)
    0.853553
    """
    return RampFunction(_alg_eval, _alg_deriv, asymptotic_order=2, symmetric=True, name="algebraic-sigmoid")


def fd_derivative(fn: Callable[[float], float]) -> Callable[[float], float]:
    """Centered difference with step max(1e-6, 1e-6|z|)."""

    def d(z: float) -> float:
        h = max(1e-6, 1e-6 * abs(z))
        return (fn(z + h) - fn(z - h)) / (2.0 * h)

    return d


def ramp_from_expression(source: str, deriv_source: str | None = None, asymptotic_order: int = 1,
                         symmetric: bool = False) -> RampFunction:
    """Build a ramp from an expression in the variable ``z``."""
    from .exprparse import RAMP_VARIABLES, compile_expr, parse

    f = compile_expr(parse(source, RAMP_VARIABLES))
    ev = lambda z: f({"z": z})  # noqa: E731
    if deriv_source is not None:
        df = compile_expr(parse(deriv_source, RAMP_VARIABLES))
        dv = lambda z: df({"z": z})  # noqa: E731
    else:
        dv = fd_derivative(ev)
    return RampFunction(ev, dv, asymptotic_order=asymptotic_order, symmetric=symmetric, name=f"expr:{source}")


RAMPS = {"algebraic-sigmoid": builtin_gamma}


def ramp_by_name(name: str) -> RampFunction:
    try:
        return RAMPS[name]()
    except KeyError:
        raise KeyError(f"unknown ramp {name!r}; known: {sorted(RAMPS)}") from None


# ---------------------------------------------------------------- validation


@dataclass
class Check:
    name: str
    passed: bool
    residual: float


@dataclass
class RampReport:
    checks: list[Check] = field(default_factory=list)
    fitted_order: float = float("nan")

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "fitted_order": self.fitted_order,
            "checks": {c.name: {"passed": c.passed, "residual": c.residual} for c in self.checks},
        }


def fit_asymptotic_order(gamma: RampFunction, z_small=(1e-3, 1e-1), n: int = 25) -> float:
    """Slope of log gamma(-1/z) against log z for small z > 0."""
    z = np.geomspace(z_small[0], z_small[1], n)
    vals = np.array([gamma.eval(-1.0 / zi) for zi in z])
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        return float("nan")
    slope, _ = np.polyfit(np.log(z), np.log(vals), 1)
    return float(slope)


def check_ramp(gamma: RampFunction, grid, tol: float, z_far: float = 1e6, tail_tol: float = 1e-6) -> RampReport:
    """Check the structural properties of ``gamma`` on ``grid``.

    Raises
    ------
    DerivativeMismatch
        When ``gamma.deriv`` disagrees with a centered difference by more
        than ``100 * tol``.
    """
    grid = np.asarray(list(grid), dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be nonempty")
    if not tol > 0:
        raise ValueError("tol must be positive")
    z = np.sort(grid)
    vals = np.array([gamma.eval(v) for v in z])
    ders = np.array([gamma.deriv(v) for v in z])
    report = RampReport()

    # range (0, 1), reported as the worst excursion
    out = np.maximum(-vals, vals - 1.0)
    on_edge = (vals <= 0.0) | (vals >= 1.0)
    report.checks.append(Check("range", bool(not on_edge.any()), float(max(0.0, out.max()))))

    drop = float(np.max(vals[:-1] - vals[1:], initial=0.0))
    report.checks.append(Check("monotone", drop <= tol, max(0.0, drop)))

    lo, hi = gamma.eval(-z_far), gamma.eval(z_far)
    report.checks.append(Check("limit_minus", abs(lo) <= tail_tol, abs(lo)))
    report.checks.append(Check("limit_plus", abs(1.0 - hi) <= tail_tol, abs(1.0 - hi)))

    if gamma.symmetric:
        sym = max(abs(gamma.eval(-v) + gamma.eval(v) - 1.0) for v in z)
        dsym = max(abs(gamma.deriv(-v) - gamma.deriv(v)) for v in z)
        report.checks.append(Check("symmetry", sym <= tol, sym))
        report.checks.append(Check("deriv_symmetry", dsym <= tol, dsym))

    h = 1e-5
    fd = np.array([(gamma.eval(v + h) - gamma.eval(v - h)) / (2 * h) for v in z])
    err = float(np.max(np.abs(fd - ders) / np.maximum(1.0, np.abs(ders))))
    if err > 100 * tol:
        raise DerivativeMismatch(f"ramp derivative disagrees with finite difference by {err:.3e}")
    report.checks.append(Check("derivative", True, err))

    report.fitted_order = fit_asymptotic_order(gamma)
    dl = abs(report.fitted_order - gamma.asymptotic_order)
    report.checks.append(Check("asymptotic_order", bool(dl <= 0.25), float(dl)))
    return report
