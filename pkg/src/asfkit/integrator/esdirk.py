"""Seven-stage ESDIRK5(4) with embedded error estimate.

L-stable and stiffly accurate, stage order 2 (Kennedy & Carpenter 2019,
ESDIRK5(4)7L[2]SA2). Implicit stages are solved by simplified Newton with a
Jacobian that is reused across steps until convergence degrades.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..errors import BlowUp, StepSizeUnderflow

GAMMA = 23 / 125

C = np.array([
    0.0, 46 / 125, 7121331996143 / 11335814405378, 49 / 353,
    3706679970760 / 5295570149437, 347 / 382, 1.0,
])

A = np.zeros((7, 7))
A[1, :2] = [GAMMA, GAMMA]
A[2, :3] = [791020047304 / 3561426431547, 791020047304 / 3561426431547, GAMMA]
A[3, :4] = [-158159076358 / 11257294102345, -158159076358 / 11257294102345,
            -85517644447 / 5003708988389, GAMMA]
A[4, :5] = [-1653327111580 / 4048416487981, -1653327111580 / 4048416487981,
            1514767744496 / 9099671765375, 14283835447591 / 12247432691556, GAMMA]
A[5, :6] = [-4540011970825 / 8418487046959, -4540011970825 / 8418487046959,
            -1790937573418 / 7393406387169, 10819093665085 / 7266595846747,
            4109463131231 / 7386972500302, GAMMA]
A[6, :7] = [-188593204321 / 4778616380481, -188593204321 / 4778616380481,
            2809310203510 / 10304234040467, 1021729336898 / 2364210264653,
            870612361811 / 2470410392208, -1307970675534 / 8059683598661, GAMMA]

B = A[6].copy()
B_HAT = np.array([
    -582099335757 / 7214068459310, -582099335757 / 7214068459310,
    615023338567 / 3362626566945, 3192122436311 / 6174152374399,
    6156034052041 / 14430468657929, -1011318518279 / 9693750372484,
    1914490192573 / 13754262428401,
])
E = B - B_HAT

ORDER = 5
ERR_ORDER = 4


class _Linear:
    """Factorisation of ``I - h*gamma*J`` (scalar fast path for n = 1)."""

    def __init__(self, J, hg):
        n = J.shape[0]
        self.scalar = n == 1
        M = np.eye(n) - hg * J
        if self.scalar:
            self.inv = 1.0 / M[0, 0]
        else:
            self.lu = lu_factor(M)

    def solve(self, r):
        if self.scalar:
            return r * self.inv
        return lu_solve(self.lu, r)


@dataclass
class StepStats:
    n_steps: int = 0
    n_rejected: int = 0
    n_fev: int = 0
    n_jev: int = 0
    n_lu: int = 0
    n_newton_fail: int = 0


@dataclass
class ESDIRKResult:
    t: np.ndarray
    y: np.ndarray  # (m, n)
    f: np.ndarray  # (m, n), derivative at each accepted point
    stats: StepStats = field(default_factory=StepStats)
    status: str = "ok"
    message: str = ""

    def hermite(self, tq):
        """Cubic Hermite interpolation between accepted steps."""
        tq = np.atleast_1d(np.asarray(tq, dtype=float))
        i = np.clip(np.searchsorted(self.t, tq, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[i], self.t[i + 1]
        h = (t1 - t0)[:, None]
        th = ((tq - t0) / (t1 - t0))[:, None]
        y0, y1, f0, f1 = self.y[i], self.y[i + 1], self.f[i], self.f[i + 1]
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1


def _rms(v):
    return float(np.sqrt(np.mean(v * v)))


def esdirk54(
    fun,
    jac,
    t_span,
    y0,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    max_step: float = np.inf,
    first_step: float | None = None,
    tstops=(),
    escape_radius: float = np.inf,
    fixed_step: float | None = None,
    min_step: float = 1e-12,
    max_steps: int = 10_000_000,
) -> ESDIRKResult:
    """Integrate ``y' = fun(t, y)`` over ``t_span`` (forward in time).

    ``tstops`` are times the integrator lands on exactly. With ``fixed_step``
    the error control is disabled (used for convergence-order checks).

    Raises
    ------
    StepSizeUnderflow
        Step size dropped below ``min_step`` times the time scale.
    BlowUp
        ``|y|`` exceeded ``escape_radius``.
    """
    t0, t_end = float(t_span[0]), float(t_span[1])
    if not t_end > t0:
        raise ValueError("t_span must be increasing")
    y = np.atleast_1d(np.array(y0, dtype=float))
    n = y.size
    stats = StepStats()
    stops = sorted(float(s) for s in tstops if t0 < s < t_end) + [t_end]
    stop_i = 0

    f0 = np.atleast_1d(fun(t0, y))
    stats.n_fev += 1
    ts, ys, fs = [t0], [y.copy()], [f0.copy()]

    newton_tol = max(10 * np.finfo(float).eps / rtol, min(0.03, rtol**0.5))
    scale_t = max(abs(t_end - t0), 1.0)

    if fixed_step is not None:
        h = float(fixed_step)
    elif first_step is not None:
        h = float(first_step)
    else:
        sc = atol + rtol * np.abs(y)
        d0, d1 = _rms(y / sc), _rms(f0 / sc)
        h = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h = min(h, max_step, t_end - t0)

    t = t0
    J = np.atleast_2d(jac(t, y))
    stats.n_jev += 1
    J_fresh = True
    lin = None
    lin_h = None
    err_prev = 1.0
    K = np.empty((7, n))

    while t < t_end:
        if stats.n_steps > max_steps:
            raise StepSizeUnderflow("maximum number of steps exceeded")
        target = stops[stop_i]
        h = min(h, max_step)
        last = t + h >= target - 1e-12 * scale_t
        if last:
            h = target - t
        if h < min_step * scale_t and not last:
            raise StepSizeUnderflow(f"step size {h:.3e} underflow at t={t:.6g}")

        if lin is None or lin_h != h:
            lin = _Linear(J, h * GAMMA)
            lin_h = h
            stats.n_lu += 1

        K[0] = fs[-1]
        ok = True
        for i in range(1, 7):
            ti = t + C[i] * h
            base = y + h * (A[i, :i] @ K[:i])
            Z = y + C[i] * h * K[0] if i == 1 else base + h * GAMMA * K[i - 1]
            converged = False
            dn_old = None
            for it in range(8):
                fz = np.atleast_1d(fun(ti, Z))
                stats.n_fev += 1
                r = base + h * GAMMA * fz - Z
                dZ = lin.solve(r)
                Z = Z + dZ
                sc = atol + rtol * np.abs(Z)
                dn = _rms(dZ / sc)
                if not np.isfinite(dn):
                    break
                if dn_old is not None:
                    rate = dn / dn_old
                    if rate >= 1.0:
                        break
                    if rate / (1 - rate) * dn < newton_tol:
                        converged = True
                        break
                elif dn < newton_tol * 1e-1:
                    converged = True
                    break
                dn_old = dn
            if not converged:
                ok = False
                break
            K[i] = (Z - base) / (h * GAMMA)

        if not ok:
            stats.n_newton_fail += 1
            if fixed_step is not None and J_fresh:
                raise StepSizeUnderflow(f"Newton failed with fixed step {h:.3e} at t={t:.6g}")
            if not J_fresh:
                J = np.atleast_2d(jac(t, y))
                stats.n_jev += 1
                J_fresh = True
                lin = None
            else:
                h *= 0.5
            continue

        y_new = Z
        if fixed_step is None:
            err = h * (E @ K)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = _rms(err / sc)
            if en > 1.0:
                stats.n_rejected += 1
                h *= max(0.2, 0.9 * en ** (-1.0 / (ERR_ORDER + 1)))
                continue
        if not np.all(np.isfinite(y_new)):
            h *= 0.5
            continue

        t = target if last else t + h
        y = y_new
        f_new = K[6].copy()
        ts.append(t)
        ys.append(y.copy())
        fs.append(f_new)
        stats.n_steps += 1
        if np.max(np.abs(y)) > escape_radius:
            raise BlowUp(f"|x| exceeded escape radius {escape_radius} at t={t:.6g}")
        if last:
            stop_i += 1
        J_fresh = False

        if fixed_step is None:
            en = max(en, 1e-10)
            fac = 0.9 * en ** (-0.7 / (ERR_ORDER + 1)) * err_prev ** (0.4 / (ERR_ORDER + 1))
            fac = min(5.0, max(0.2, fac))
            err_prev = en
            h_next = h * fac
            # keep the factorisation when the step change is small
            if lin_h is not None and 0.9 <= h_next / lin_h <= 1.2 and not last:
                h_next = lin_h
            h = h_next
        else:
            h = float(fixed_step)
        if stats.n_steps % 20 == 0:
            J = np.atleast_2d(jac(t, y))
            stats.n_jev += 1
            J_fresh = True
            lin = None

    return ESDIRKResult(np.array(ts), np.array(ys), np.array(fs), stats)
