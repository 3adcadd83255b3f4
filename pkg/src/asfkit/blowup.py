"""Blow-up of the switching surface {s = 0, eps = 0} and its three charts.

K1 (entry):  s = -r1,    eps = r1 * eps1
K2 (inner):  s = r2 * s2, eps = r2
K3 (exit):   s = r3,     eps = r3 * eps3

No time rescaling is used in any chart, so vector fields are related by the
plain Jacobian of the transition maps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import OutOfOverlap
from .system import SystemDefinition

CHARTS = ("K1", "K2", "K3")
COORD_NAMES = {"K1": ("r1", "eps1"), "K2": ("r2", "s2"), "K3": ("r3", "eps3")}
DELTA_CHART = 0.5


@dataclass(frozen=True)
class ChartPoint:
    chart: str
    x: np.ndarray
    coords: tuple

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ValueError(f"chart must be one of {CHARTS}")
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        c = tuple(float(v) for v in self.coords)
        if len(c) != 2:
            raise ValueError("coords must have two entries")
        object.__setattr__(self, "coords", c)
        a, b = c
        if a < 0:
            raise ValueError(f"{COORD_NAMES[self.chart][0]} must be nonnegative")
        if self.chart in ("K1", "K3") and b < 0:
            raise ValueError(f"{COORD_NAMES[self.chart][1]} must be nonnegative")

    def vector(self) -> np.ndarray:
        return np.concatenate([self.x, self.coords])

    @classmethod
    def from_vector(cls, chart: str, v) -> "ChartPoint":
        v = np.asarray(v, dtype=float)
        return cls(chart, v[:-2], (v[-2], v[-1]))


def blow_down(p: ChartPoint) -> tuple:
    """``(x, s, eps)`` of a chart point."""
    a, b = p.coords
    if p.chart == "K1":
        return p.x.copy(), -a, a * b
    if p.chart == "K2":
        return p.x.copy(), a * b, a
    return p.x.copy(), a, a * b


def _to_k2(p: ChartPoint) -> tuple:
    a, b = p.coords
    if p.chart == "K2":
        return a, b
    if p.chart == "K1":
        if not b > 0:
            raise OutOfOverlap("K1 -> K2 needs eps1 > 0")
        return a * b, -1.0 / b
    if not b > 0:
        raise OutOfOverlap("K3 -> K2 needs eps3 > 0")
    return a * b, 1.0 / b


def chart_transition(p: ChartPoint, target: str) -> ChartPoint:
    """Express ``p`` in chart ``target``.

    Raises
    ------
    OutOfOverlap
        ``p`` lies outside the overlap of the two charts (K1 and K3 never overlap).
    """
    if target not in CHARTS:
        raise ValueError(f"target must be one of {CHARTS}")
    if target == p.chart:
        return p
    if {p.chart, target} == {"K1", "K3"}:
        raise OutOfOverlap("charts K1 and K3 do not overlap")
    r2, s2 = _to_k2(p)
    if target == "K2":
        return ChartPoint("K2", p.x, (r2, s2))
    if target == "K1":
        if not s2 < 0:
            raise OutOfOverlap("K2 -> K1 needs s2 < 0")
        return ChartPoint("K1", p.x, (-r2 * s2, -1.0 / s2))
    if not s2 > 0:
        raise OutOfOverlap("K2 -> K3 needs s2 > 0")
    return ChartPoint("K3", p.x, (r2 * s2, 1.0 / s2))


def _gamma_k1(sys, mu, eps1):
    return 0.0 if eps1 == 0 else sys.ramp(-mu / eps1)


def _gamma_k3(sys, mu, eps3):
    return 1.0 if eps3 == 0 else sys.ramp(mu / eps3)


def chart_rhs(sys: SystemDefinition, p: ChartPoint, mu: float, sigma: float,
              delta_chart: float = DELTA_CHART) -> np.ndarray:
    """Time derivative of ``(x, coords)`` in the chart of ``p``.

    ``gamma(mu s / eps)`` is composed exactly; on ``eps1 = 0`` (``eps3 = 0``)
    it takes its limit value 0 (1).
    """
    a, b = p.coords
    if p.chart == "K1":
        if b > delta_chart:
            raise ValueError(f"eps1={b} outside [0, {delta_chart}]")
        xd = sys.rhs(p.x, _gamma_k1(sys, mu, b), -a, sigma, a * b)
        cd = (-a * b, b * b)
    elif p.chart == "K2":
        xd = sys.rhs(p.x, sys.ramp(mu * b), a * b, sigma, a)
        cd = (0.0, 1.0)
    else:
        if b > delta_chart:
            raise ValueError(f"eps3={b} outside [0, {delta_chart}]")
        xd = sys.rhs(p.x, _gamma_k3(sys, mu, b), a, sigma, a * b)
        cd = (a * b, -b * b)
    return np.concatenate([np.atleast_1d(xd), cd])


def transition_jacobian(p: ChartPoint, target: str, rel_step: float = 1e-6) -> np.ndarray:
    """Finite-difference Jacobian of the transition map at ``p``.

    Chart coordinates get a step proportional to their value (the maps
    behave like ``1/c`` near ``c = 0``); a coordinate sitting at 0 gets a
    one-sided step so the perturbed point stays in the chart.
    """
    v = p.vector()
    m = v.size
    n = m - 2
    J = np.empty((m, m))
    f0 = chart_transition(p, target).vector()
    for j in range(m):
        e = np.zeros(m)
        if j < n:
            e[j] = rel_step * max(1.0, abs(v[j]))
        elif v[j] != 0.0:
            e[j] = rel_step * abs(v[j])
        else:
            e[j] = rel_step
            fp = chart_transition(ChartPoint.from_vector(p.chart, v + e), target).vector()
            J[:, j] = (fp - f0) / e[j]
            continue
        fp = chart_transition(ChartPoint.from_vector(p.chart, v + e), target).vector()
        fm = chart_transition(ChartPoint.from_vector(p.chart, v - e), target).vector()
        J[:, j] = (fp - fm) / (2 * e[j])
    return J


def conjugacy_defect(sys: SystemDefinition, p: ChartPoint, target: str, mu: float, sigma: float,
                     delta_chart: float = DELTA_CHART) -> float:
    """Relative mismatch between the pushed-forward field and the target-chart field."""
    q = chart_transition(p, target)
    pushed = transition_jacobian(p, target) @ chart_rhs(sys, p, mu, sigma, delta_chart)
    direct = chart_rhs(sys, q, mu, sigma, delta_chart)
    return float(np.max(np.abs(pushed - direct)) / max(1.0, float(np.max(np.abs(direct)))))


def round_trip_residual(p: ChartPoint, target: str) -> float:
    back = chart_transition(chart_transition(p, target), p.chart)
    return float(np.max(np.abs(back.vector() - p.vector())))


def best_chart(r2: float, s2: float, x, delta_chart: float = DELTA_CHART) -> ChartPoint:
    """Express a K2 point in K1 or K3 when it lies in their ``delta_chart`` window."""
    p = ChartPoint("K2", x, (r2, s2))
    if s2 < 0 and -1.0 / s2 <= delta_chart:
        return chart_transition(p, "K1")
    if s2 > 0 and 1.0 / s2 <= delta_chart:
        return chart_transition(p, "K3")
    return p


def k2_trajectory(sys: SystemDefinition, x0, s2_span, r2: float, mu: float, sigma: float,
                  n_out: int = 401, rtol: float = 1e-10, atol: float = 1e-12):
    """Integrate the K2 field (``r2`` fixed, ``s2' = 1``) and sample it on a uniform grid.

    With ``r2 = eps`` this is the full system in fast time; with ``r2 = 0``
    it is the inner limit problem.
    """
    def fun(t, y):
        return np.atleast_1d(sys.rhs(y, sys.ramp(mu * t), r2 * t, sigma, r2))

    t_eval = np.linspace(s2_span[0], s2_span[1], n_out)
    sol = solve_ivp(fun, (float(s2_span[0]), float(s2_span[1])), np.atleast_1d(np.asarray(x0, dtype=float)),
                    method="DOP853", rtol=rtol, atol=atol, t_eval=t_eval)
    return sol.t, sol.y.T
