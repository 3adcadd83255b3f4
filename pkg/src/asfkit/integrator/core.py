"""Uniform front end over the implicit (own ESDIRK) and explicit (DOP853) solvers."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import BlowUp, StepSizeUnderflow
from .esdirk import esdirk54

METHODS = ("implicit-adaptive", "explicit-adaptive")


@dataclass(frozen=True)
class SolveSettings:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = np.inf
    method: str = "implicit-adaptive"
    escape_radius: float = 1e3
    dense_output: bool = True

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not self.escape_radius > 0:
            raise ValueError("escape_radius must be positive")

    def as_dict(self) -> dict:
        d = asdict(self)
        if not np.isfinite(d["max_step"]):
            d["max_step"] = "inf"
        return d


@dataclass
class Trajectory:
    """Accepted solver points plus an optional continuous interpolant."""

    t: np.ndarray
    y: np.ndarray  # (m, n)
    method: str
    interp: Optional[Callable] = None
    n_fev: int = 0

    def __call__(self, tq):
        if self.interp is None:
            raise ValueError("trajectory was computed without dense output")
        return self.interp(tq)


def solve(fun, jac, t_span, y0, settings: SolveSettings, tstops=()) -> Trajectory:
    """Integrate ``y' = fun(t, y)`` forward; ``tstops`` are always hit exactly."""
    y0 = np.atleast_1d(np.asarray(y0, dtype=float))
    t0, t1 = float(t_span[0]), float(t_span[1])
    if settings.method == "implicit-adaptive":
        r = esdirk54(
            fun, jac, (t0, t1), y0,
            rtol=settings.rel_tol, atol=settings.abs_tol, max_step=settings.max_step,
            tstops=tstops, escape_radius=settings.escape_radius,
        )
        interp = None
        if settings.dense_output:
            def interp(tq, _r=r):
                out = _r.hermite(tq)
                return out[0] if np.ndim(tq) == 0 else out
        return Trajectory(r.t, r.y, settings.method, interp, r.stats.n_fev)

    R = settings.escape_radius

    def escape(t, y):
        return R - np.max(np.abs(y))

    escape.terminal = True
    stops = sorted(float(s) for s in tstops if t0 < s < t1)
    sol = solve_ivp(
        fun, (t0, t1), y0, method="DOP853", rtol=settings.rel_tol, atol=settings.abs_tol,
        max_step=settings.max_step, dense_output=True, events=escape,
    )
    if sol.status == 1:
        raise BlowUp(f"|x| exceeded escape radius {R} at t={sol.t[-1]:.6g}")
    if sol.status != 0:
        raise StepSizeUnderflow(sol.message)
    t, y = sol.t, sol.y.T
    if stops:
        # merge exact stop values from the solver's own interpolant
        ys = sol.sol(np.array(stops)).T
        t = np.concatenate([t, stops])
        y = np.concatenate([y, ys])
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        keep = np.concatenate([[True], np.diff(t) > 0])
        t, y = t[keep], y[keep]
    interp = None
    if settings.dense_output:
        def interp(tq, _s=sol.sol):
            out = _s(tq)
            return out.T if np.ndim(tq) else out
    return Trajectory(t, y, settings.method, interp, sol.nfev)
