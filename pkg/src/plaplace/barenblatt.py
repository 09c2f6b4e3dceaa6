"""Closed-form source-type (Barenblatt) solution of the singular p-Laplace flow.

For ``p_c < p < 2`` the self-similar solution with a Dirac initial datum is::

    U(x, t) = t**(-N/k) * F(t**(-1/k) |x|),
    F(xi)   = (C + gamma * xi**q) ** (-(p-1)/(2-p)),
    gamma   = ((2-p)/p) * k**(-1/(p-1)),

with a free constant ``C > 0`` fixing the mass.  This ``gamma`` is the
value for which ``U`` satisfies the equation; the mass then scales as
``M(C) = M(1) * C**(-(p-1) k / (p (2-p)))``.  Radial integrals of ``F``
are split into an adaptive quadrature on ``[0, xi*]`` and a binomial series
for the power-law tail beyond ``xi*``, integrated term by term in closed form.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .exponents import PParams
from .radial import Field, RadialGrid, cell_averages, sphere_area

# the tail series needs gamma * xi**q >= TAIL_SPLIT * C
TAIL_SPLIT = 1.0e4
QUAD_EPSREL = 1e-12


class MomentDivergence(ValueError):
    """Raised when an infinite-range radial integral of the profile diverges."""


def profile_gamma(params: PParams) -> float:
    """Coefficient of ``xi**q`` in the profile, fixed by the equation itself."""
    p = params.p
    return (2.0 - p) / p * params.k ** (-1.0 / (p - 1.0))


def mass_scaling_exponent(params: PParams) -> float:
    """``(p-1) k / (p (2-p))``: ``M(lambda C) = lambda**(-this) M(C)``."""
    p = params.p
    return (p - 1.0) * params.k / (p * (2.0 - p))


def _outer_exponent(params: PParams) -> float:
    """``a`` with ``F = (C + gamma xi**q)**(-a)``."""
    return (params.p - 1.0) / (2.0 - params.p)


def _radial_profile_integral(params: PParams, C: float, power: float, cutoff: float) -> float:
    """``omega * int_0^cutoff xi**(N-1+power) F(xi) d xi``."""
    params.require_supercritical()
    N, q = params.N, params.q
    gamma = profile_gamma(params)
    a = _outer_exponent(params)
    omega = sphere_area(N)
    lead = N + power - q * a  # exponent of the leading tail term plus one
    if math.isinf(cutoff) and lead >= 0.0:
        raise MomentDivergence(
            f"moment divergent: tail exponent N + {power:g} - p/(2-p) = {lead:.6g} >= 0"
        )
    if not cutoff > 0.0:
        raise ValueError(f"cutoff must be positive, got {cutoff!r}")

    knee = (C / gamma) ** (1.0 / q)
    xi_star = (TAIL_SPLIT * C / gamma) ** (1.0 / q)
    upper = min(cutoff, xi_star)

    def integrand(xi):
        return xi ** (N - 1 + power) * (C + gamma * xi**q) ** (-a)

    # breakpoints at the knee and geometric multiples keep each piece smooth
    pts = [0.0]
    b = knee
    while b < upper:
        pts.append(b)
        b *= 4.0
    pts.append(upper)
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=QUAD_EPSREL, limit=200)
        total += val

    if cutoff > xi_star:
        total += _tail_series(N, power, q, a, C, gamma, xi_star, cutoff)
    return omega * total


def _tail_series(N, power, q, a, C, gamma, lo, hi) -> float:
    """``int_lo^hi xi**(N-1+power) (gamma xi**q)**(-a) (1 + C/(gamma xi**q))**(-a)``.

    Expands the last factor binomially; the ratio ``C/(gamma xi**q)`` is at
    most ``1/TAIL_SPLIT`` on the range so a handful of terms reach round-off.
    """
    total = 0.0
    coef = 1.0  # binom(-a, j)
    for j in range(60):
        e = N + power - q * (a + j)
        scale = coef * C**j * gamma ** (-a - j)
        if math.isinf(hi):
            piece = -(lo**e) / e
        elif e == 0.0:
            piece = math.log(hi / lo)
        else:
            piece = (hi**e - lo**e) / e
        term = scale * piece
        total += term
        if j > 0 and abs(term) <= 1e-18 * abs(total):
            break
        coef *= (-a - j) / (j + 1.0)
    return total


def mass_of_C(C: float, params: PParams) -> float:
    """Total mass ``omega * int_0^inf r**(N-1) F(r) dr`` of the profile with constant ``C``."""
    if not C > 0.0 or not math.isfinite(C):
        raise ValueError(f"C must be positive and finite, got {C!r}")
    params.require_supercritical()
    if params.N - params.p / (2.0 - params.p) >= 0.0:
        raise MomentDivergence("mass divergent: N - p/(2-p) >= 0")
    return _radial_profile_integral(params, C, 0.0, math.inf)


def calibrate_C(M_target: float, params: PParams) -> float:
    """Profile constant giving total mass ``M_target``.

    Uses the scaling law ``M(C) = M(1) * C**(-e)``, ``e`` from
    :func:`mass_scaling_exponent`, so only one quadrature is needed.
    """
    if not M_target > 0.0 or not math.isfinite(M_target):
        raise ValueError(f"target mass must be positive and finite, got {M_target!r}")
    m1 = mass_of_C(1.0, params)
    return (m1 / M_target) ** (1.0 / mass_scaling_exponent(params))


def q_moment_of_F(params: PParams, cutoff: float = math.inf, C: float = 1.0) -> float:
    """``omega * int_0^cutoff r**(N-1+q) F(r) dr``.

    An infinite cutoff is only accepted when the q-moment converges, i.e.
    when ``N + q - p/(2-p) < 0``; otherwise :class:`MomentDivergence` is raised.
    """
    return _radial_profile_integral(params, C, params.q, cutoff)


@dataclass(frozen=True, eq=False)
class BarenblattSolution:
    params: PParams
    C: float

    def __post_init__(self):
        self.params.require_supercritical()
        if not self.C > 0.0 or not math.isfinite(self.C):
            raise ValueError(f"C must be positive and finite, got {self.C!r}")

    @classmethod
    def from_mass(cls, params: PParams, M: float) -> "BarenblattSolution":
        return cls(params, calibrate_C(M, params))

    @property
    def gamma(self) -> float:
        return profile_gamma(self.params)

    @property
    def a(self) -> float:
        return _outer_exponent(self.params)

    @cached_property
    def M(self) -> float:
        return mass_of_C(self.C, self.params)

    def F(self, xi):
        xi = np.asarray(xi, dtype=float)
        return (self.C + self.gamma * np.abs(xi) ** self.params.q) ** (-self.a)

    def dF(self, xi):
        q = self.params.q
        xi = np.abs(np.asarray(xi, dtype=float))
        base = self.C + self.gamma * xi**q
        return -self.a * self.gamma * q * xi ** (q - 1.0) * base ** (-self.a - 1.0)

    def U(self, r, t):
        t = _check_time(t)
        k, N = self.params.k, self.params.N
        return t ** (-N / k) * self.F(t ** (-1.0 / k) * np.asarray(r, dtype=float))

    def dU(self, r, t):
        """Radial derivative of ``U``."""
        t = _check_time(t)
        k, N = self.params.k, self.params.N
        return t ** (-(N + 1.0) / k) * self.dF(t ** (-1.0 / k) * np.asarray(r, dtype=float))

    def q_moment(self, cutoff: float = math.inf) -> float:
        return q_moment_of_F(self.params, cutoff, self.C)

    def length_scale(self, t: float) -> float:
        """Radius where ``gamma xi**q == C`` at time ``t``: the edge of the core."""
        return (self.C / self.gamma) ** (1.0 / self.params.q) * _check_time(t) ** (1.0 / self.params.k)

    def field(self, grid: RadialGrid, t: float, order: int = 8) -> Field:
        """Cell averages of ``U(., t)`` on ``grid``."""
        if grid.N != self.params.N:
            raise ValueError(f"grid dimension {grid.N} != solution dimension {self.params.N}")
        return cell_averages(grid, lambda r: self.U(r, t), order)


def _check_time(t):
    t = float(t)
    if not t > 0.0 or not math.isfinite(t):
        raise ValueError(f"time must be positive and finite, got {t!r}")
    return t


def profile_F(xi, sol: BarenblattSolution):
    return sol.F(xi)


def evaluate_U(r, t, sol: BarenblattSolution):
    return sol.U(r, t)


# ---------------------------------------------------------------------------
# quadrature oracles used to validate grid-based functionals


def _radial_pieces(sol: BarenblattSolution, t: float, lo: float, hi: float):
    scale = sol.length_scale(t)
    pts = [lo]
    b = scale / 64.0
    while b < hi:
        if b > lo:
            pts.append(b)
        b *= 4.0
    pts.append(hi)
    return pts


def _radial_quad(func, pts):
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(func, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
        total += val
    return total


def annulus_moment_exact(sol: BarenblattSolution, r: float, R: float, t: float, q: float | None = None) -> float:
    """``int_{r<=|x|<=R} |x|**q U(x, t) dx`` by adaptive quadrature (``R`` may be inf)."""
    q = sol.params.q if q is None else q
    N, omega = sol.params.N, sphere_area(sol.params.N)
    pts = _radial_pieces(sol, t, r, R if math.isfinite(R) else 1e6 * sol.length_scale(t))
    val = _radial_quad(lambda x: x ** (N - 1 + q) * sol.U(x, t), pts)
    if math.isinf(R):
        far = pts[-1]
        tail, _ = integrate.quad(lambda x: x ** (N - 1 + q) * sol.U(x, t), far, np.inf, epsabs=0.0, epsrel=1e-10)
        val += tail
    return omega * val


def gradient_annulus_exact(sol: BarenblattSolution, r: float, R: float, t0: float, t1: float) -> float:
    """``int_t0^t1 int_{r<=|x|<=R} |grad U|**(p-1) dx dtau``."""
    p, N = sol.params.p, sol.params.N
    omega = sphere_area(N)

    def inner(tau):
        pts = _radial_pieces(sol, tau, r, R)
        return _radial_quad(lambda x: x ** (N - 1) * np.abs(sol.dU(x, tau)) ** (p - 1.0), pts)

    val, _ = integrate.quad(inner, t0, t1, epsabs=0.0, epsrel=1e-8, limit=100)
    return omega * val


def action_density_integral(sol: BarenblattSolution, tau: float) -> float:
    """``int_{R^N} |grad U|**p U**(-1/(p-1)) dx`` at time ``tau``."""
    p, N = sol.params.p, sol.params.N
    omega = sphere_area(N)
    w = -1.0 / (p - 1.0)

    def g(x):
        return x ** (N - 1) * np.abs(sol.dU(x, tau)) ** p * sol.U(x, tau) ** w

    far = 1e4 * sol.length_scale(tau)
    val = _radial_quad(g, _radial_pieces(sol, tau, 0.0, far))
    # x = far / y maps the power-law tail onto (0, 1]
    tail, _ = integrate.quad(lambda y: g(far / y) * far / (y * y) if y > 0.0 else 0.0, 0.0, 1.0,
                             epsabs=0.0, epsrel=1e-10, limit=200)
    return omega * (val + tail)


def bb_action_exact(sol: BarenblattSolution, t0: float, t1: float) -> float:
    """``int_t0^t1 int |grad U|**p U**(-1/(p-1)) dx dtau``."""
    val, _ = integrate.quad(lambda tau: action_density_integral(sol, tau), t0, t1, epsabs=0.0, epsrel=1e-8, limit=100)
    return val


def beta_profile_integral(params: PParams, C: float, power: float) -> float:
    """Closed form of ``omega * int_0^inf xi**(N-1+power) F(xi) d xi`` via the Beta function.

    Independent of the quadrature path; used to cross-check it.
    """
    N, q = params.N, params.q
    gamma = profile_gamma(params)
    a = _outer_exponent(params)
    s = N + power
    if a - s / q <= 0.0:
        raise MomentDivergence("integral diverges")
    return sphere_area(N) * C ** (-a) * (C / gamma) ** (s / q) * special.beta(s / q, a - s / q) / q
