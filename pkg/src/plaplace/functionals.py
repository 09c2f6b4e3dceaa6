"""Both sides of the moment, gradient and action estimates, plus fitting helpers.

Left-hand sides are read off solver trajectories; right-hand sides are the
bounds with every unknown constant set to 1.  :func:`fit_constant` then
reports the smallest constant that makes the bound hold on a sample set.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .exponents import PParams
from .measures import RadonMeasure, measure_mass, measure_q_moment
from .radial import annulus_q_moment


@dataclass
class EstimateReport:
    """Aligned LHS / unit-constant RHS samples and the fits derived from them."""

    lhs_samples: list = field(default_factory=list)
    rhs_samples: list = field(default_factory=list)
    fitted_C: float = 0.0
    slope_fits: dict = field(default_factory=dict)

    def add(self, key: dict, lhs: float, rhs: float):
        self.lhs_samples.append((dict(key), float(lhs)))
        self.rhs_samples.append((dict(key), float(rhs)))
        self.fitted_C = fit_constant([v for _, v in self.lhs_samples], [v for _, v in self.rhs_samples])

    def ratios(self) -> np.ndarray:
        return np.array([a[1] / b[1] for a, b in zip(self.lhs_samples, self.rhs_samples)])

    def to_dict(self) -> dict:
        return {
            "samples": [{**k, "lhs": l, "rhs": r} for (k, l), (_, r) in zip(self.lhs_samples, self.rhs_samples)],
            "fitted_C": self.fitted_C,
            "slope_fits": {k: v._asdict() if hasattr(v, "_asdict") else v for k, v in self.slope_fits.items()},
        }


class RateFit(NamedTuple):
    slope: float
    intercept: float
    residual: float


class ActionValue(NamedTuple):
    """Action at ``floor`` and at ``floor / 10``."""

    value: float
    value_floor_tenth: float
    floor: float

    @property
    def sensitivity(self) -> float:
        if self.value == 0.0:
            return 0.0
        return abs(self.value_floor_tenth - self.value) / abs(self.value)


def fit_constant(lhs: Sequence[float], rhs_unit: Sequence[float]) -> float:
    """Smallest ``C`` with ``lhs_i <= C * rhs_i`` for all samples."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs_unit, dtype=float)
    if lhs.shape != rhs.shape or lhs.size == 0:
        raise ValueError("need aligned, non-empty samples")
    if np.any(rhs <= 0.0) or not np.all(np.isfinite(rhs)):
        raise ValueError("right-hand sides must be positive and finite")
    if np.any(lhs < 0.0):
        raise ValueError("left-hand sides must be non-negative")
    return float(np.max(lhs / rhs))


def fit_rate(ts: Sequence[float], ys: Sequence[float]) -> RateFit:
    """Least-squares power law ``y ~ exp(intercept) * t**slope``.

    ``residual`` is the largest absolute log-residual.  Needs at least four
    positive points spanning a decade.
    """
    t = np.asarray(ts, dtype=float)
    y = np.asarray(ys, dtype=float)
    if t.shape != y.shape or t.size < 4:
        raise ValueError("need at least 4 aligned samples")
    if np.any(t <= 0.0) or np.any(y <= 0.0):
        raise ValueError("samples must be positive")
    if t.max() / t.min() < 10.0 * (1.0 - 1e-12):
        raise ValueError("samples must span at least one decade")
    x, z = np.log(t), np.log(y)
    A = np.vstack((x, np.ones_like(x))).T
    (slope, icpt), *_ = np.linalg.lstsq(A, z, rcond=None)
    res = float(np.max(np.abs(z - (slope * x + icpt))))
    return RateFit(float(slope), float(icpt), res)


# moment estimate -----------------------------------------------------------

def _check_window(r, R):
    if not (r > 0.0 and R > r):
        raise ValueError(f"need 0 < r < R, got r={r}, R={R}")


def _snapshots_up_to(traj, t):
    if t > traj.times[-1] * (1.0 + 1e-12) or t < traj.times[0]:
        raise ValueError(f"t={t} outside trajectory range [{traj.times[0]}, {traj.times[-1]}]")
    return [f for ts, f in zip(traj.times, traj.fields) if ts <= t * (1.0 + 1e-12)]


def moment_lhs(traj, r: float, R: float, t: float, q: float | None = None) -> float:
    """``max`` over snapshots at times ``<= t`` of the annulus ``q``-moment."""
    if not (r >= 0.0 and R > r):
        raise ValueError(f"need 0 <= r < R, got r={r}, R={R}")
    q = traj.params.q if q is None else q
    return max(annulus_q_moment(f, r, R, q) for f in _snapshots_up_to(traj, t))


def tail_sup(traj, r: float, t: float | None = None, q: float | None = None) -> float:
    """``max`` over snapshots of the ``q``-moment outside ``B_r``."""
    t = traj.times[-1] if t is None else t
    q = traj.params.q if q is None else q
    R = traj.grid.R_max
    if r >= R:
        return 0.0
    return max(annulus_q_moment(f, r, R, q) for f in _snapshots_up_to(traj, t))


def moment_t_exponent(params: PParams) -> float:
    return 1.0 / (2.0 - params.p)


def moment_rhs(mu0: RadonMeasure, r: float, R: float, t: float, params: PParams) -> float:
    """``M_q(mu0, [r/2, 2R]) + t**(1/(2-p)) * (r**e + R**e)``, ``e = -p(N)/((p-1)(2-p))``."""
    _check_window(r, R)
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    p = params.p
    e = -params.poly / ((p - 1.0) * (2.0 - p))
    return measure_q_moment(mu0, params.q, 0.5 * r, 2.0 * R) + t ** (1.0 / (2.0 - p)) * (r**e + R**e)


def junning_l1_rhs(mu0: RadonMeasure, R: float, t: float, params: PParams) -> float:
    """``mu0(B_{2R}) + R**(-k/(2-p)) * t**(1/(2-p))``."""
    params.require_supercritical()
    if not (R > 0.0 and t > 0.0):
        raise ValueError("R and t must be positive")
    p, k = params.p, params.k
    return measure_mass(mu0, 0.0, 2.0 * R) + R ** (-k / (2.0 - p)) * t ** (1.0 / (2.0 - p))


def junning_sup_rhs(mu0: RadonMeasure, R: float, t: float, params: PParams) -> float:
    """``t**(-N/k) * mu0(B_{4R})**(p/k) + R**(-p/(2-p)) * t**(1/(2-p))``."""
    params.require_supercritical()
    if not (R > 0.0 and t > 0.0):
        raise ValueError("R and t must be positive")
    N, p, k = params.N, params.p, params.k
    m = measure_mass(mu0, 0.0, 4.0 * R)
    return t ** (-N / k) * m ** (p / k) + R ** (-p / (2.0 - p)) * t ** (1.0 / (2.0 - p))


# time-integrated functionals ----------------------------------------------

def _history(traj, t):
    times = np.asarray(traj.history_times)
    if len(times) < 2:
        raise ValueError("trajectory carries no flux history")
    if t < times[0] or t > times[-1] * (1.0 + 1e-12):
        raise ValueError(f"t={t} outside trajectory range [{times[0]}, {times[-1]}]")
    return times


def _time_integral(traj, t, density):
    """Trapezoid rule over stored states of ``density(state)``, cut at ``t``."""
    times = _history(traj, t)
    n = int(np.searchsorted(times, t, side="right"))
    vals = [density(traj.history_states[i]) for i in range(n)]
    total = 0.0
    for i in range(1, n):
        total += 0.5 * (times[i] - times[i - 1]) * (vals[i] + vals[i - 1])
    if n < times.size and t > times[n - 1]:
        # partial interval, integrand interpolated linearly
        nxt = density(traj.history_states[n])
        w = (t - times[n - 1]) / (times[n] - times[n - 1])
        total += 0.5 * (t - times[n - 1]) * (vals[-1] + vals[-1] + w * (nxt - vals[-1]))
    return total


def _dual_volumes(grid, r=0.0, R=None):
    """Volume of each centre-to-centre dual cell, clipped to ``[r, R]``."""
    R = grid.R_max if R is None else R
    c = grid.centers
    lo = np.clip(c[:-1], r, R)
    hi = np.clip(c[1:], r, R)
    return grid.omega / grid.N * (hi**grid.N - lo**grid.N)


def gradient_annulus_lhs(traj, r: float, R: float, t: float) -> float:
    """``int int_{r <= |x| <= R} |grad u|**(p-1)`` from the trajectory start to ``t``.

    The integrand is the recorded face flux density ``|Phi| / A``, which
    equals ``|s|**(p-1)`` wherever the gradient exceeds the regularisation.
    """
    _check_window(r, R)
    op = traj._operator()
    vol = _dual_volumes(traj.grid, r, R)

    def density(u):
        s = op.gradients(u)
        return float(np.dot(np.abs(op.diffusivity(s) * s), vol))

    return _time_integral(traj, t, density)


def gradient_annulus_rhs(mu0: RadonMeasure, r: float, R: float, t: float, params: PParams) -> float:
    """Two-term bound for the annular ``|grad u|**(p-1)`` integral, constants 1.

    ``t**(1/p) r**(-1/(p-1)) (r**a2 + R**a2) M_q(mu0, [r/4, 4R])**(2(p-1)/p)
    + t**(1/(2-p)) r**(-1/(p-1)) (r**a3 + R**a3) (r**a2 + R**a2)``
    with ``a2 = -p(N)/(p(p-1))`` and ``a3 = -2 p(N)/(p(2-p))``.
    """
    _check_window(r, R)
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    p, pN = params.p, params.poly
    a2 = -pN / (p * (p - 1.0))
    a3 = -2.0 * pN / (p * (2.0 - p))
    lead = r ** (-1.0 / (p - 1.0))
    w2 = r**a2 + R**a2
    mq = measure_q_moment(mu0, params.q, 0.25 * r, 4.0 * R)
    first = t ** (1.0 / p) * lead * w2 * mq ** (2.0 * (p - 1.0) / p)
    second = t ** (1.0 / (2.0 - p)) * lead * (r**a3 + R**a3) * w2
    return first + second


def default_floor(traj) -> float:
    """``1e-12 * mass / R_max**N``."""
    m = traj.fields[0].mass()
    return 1e-12 * (m if m > 0.0 else 1.0) / traj.grid.R_max**traj.grid.N


def _action_density(traj, floor):
    op = traj._operator()
    q = traj.params.q
    vol = _dual_volumes(traj.grid)

    def density(u):
        s = op.gradients(u)
        jq = np.abs(op.diffusivity(s) * s) ** q
        ubar = 0.5 * (u[1:] + u[:-1])
        return float(np.dot(jq * np.maximum(ubar + floor, floor) ** (1.0 - q), vol))

    return density


def bb_action(traj, t: float, floor: float | None = None) -> ActionValue:
    """``int int |grad u|**p u**(-1/(p-1))`` from the trajectory start to ``t``.

    Evaluated as ``|Phi/A|**q * (u_face + floor)**(1-q)`` on the dual cells,
    i.e. kinetic energy ``|v|**q u`` of the discrete velocity
    ``v = Phi / (A u)``.  Returned with the value at ``floor / 10``.
    """
    params = traj.params
    if params.p <= params.pN:
        raise ValueError(f"action bound needs p > p_N (p={params.p}, p_N={params.pN:.6g})")
    floor = default_floor(traj) if floor is None else float(floor)
    if not floor > 0.0:
        raise ValueError(f"floor must be positive, got {floor}")
    a = _time_integral(traj, t, _action_density(traj, floor))
    b = _time_integral(traj, t, _action_density(traj, floor / 10.0))
    return ActionValue(a, b, floor)


def bb_action_t_exponent(params: PParams) -> float:
    p = params.p
    return (2.0 * p - 3.0) / ((p - 1.0) * (2.0 - p))


def bb_action_rhs(mu0: RadonMeasure, t: float, params: PParams) -> float:
    """``mu0(B_2)**e + M_q(mu0, |x| >= 1/2)**e + t**((2p-3)/((p-1)(2-p)))``, ``e = 2 - 1/(p-1)``."""
    if params.p <= params.pN:
        raise ValueError(f"action bound needs p > p_N (p={params.p}, p_N={params.pN:.6g})")
    if not t > 0.0:
        raise ValueError(f"t must be positive, got {t}")
    p = params.p
    e = 2.0 - 1.0 / (p - 1.0)
    m = measure_mass(mu0, 0.0, 2.0)
    mq = measure_q_moment(mu0, params.q, 0.5)
    return m**e + mq**e + t ** bb_action_t_exponent(params)


def self_similar_action_exponent(params: PParams) -> float:
    """Growth exponent in ``t`` of the action along a source-type solution: ``N(2-p)/((p-1)k)``."""
    params.require_supercritical()
    p = params.p
    return params.N * (2.0 - p) / ((p - 1.0) * params.k)


def action_density_exact_ratio(params: PParams) -> float:
    """``t**(q-1) * action / W_q^q`` along a source-type solution started from a Dirac mass.

    Equals ``1 / (k**q * (q/k - q + 1))`` and is at least 1 by Hoelder.
    """
    q, k = params.q, params.k
    return 1.0 / (k**q * (q / k - q + 1.0))

