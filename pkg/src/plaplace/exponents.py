"""Parameter algebra for the singular radial p-Laplace flow.

Everything downstream is parametrised by the space dimension ``N`` and the
diffusion exponent ``p``; this module derives the conjugate exponent and the
critical values that decide which estimates apply.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

REGIMES = ("below_pc", "pc_to_pN", "pN_to_2")


def p_polynomial(N: int, p: float) -> float:
    """Evaluate ``(N+2) p**2 - (3N+3) p + 2N``.

    Its sign decides whether the Barenblatt profile has a finite q-moment.
    """
    N = _check_dim(N)
    p = float(p)
    if not math.isfinite(p):
        raise ValueError(f"p must be finite, got {p!r}")
    return (N + 2) * p * p - (3 * N + 3) * p + 2 * N


def critical_pc(N: int) -> float:
    N = _check_dim(N)
    return 2.0 * N / (N + 1.0)


def critical_pN(N: int) -> float:
    """Largest root of :func:`p_polynomial` in closed form.

    The discriminant ``N**2 - 2N + 9`` is positive for every N.
    """
    N = _check_dim(N)
    a, b, c = N + 2.0, -(3.0 * N + 3.0), 2.0 * N
    disc = b * b - 4.0 * a * c
    # b < 0 so -b + sqrt(disc) adds two positive numbers: no cancellation
    return (-b + math.sqrt(disc)) / (2.0 * a)


def _check_dim(N) -> int:
    if isinstance(N, bool) or int(N) != N:
        raise ValueError(f"dimension must be an integer, got {N!r}")
    N = int(N)
    if N < 2:
        raise ValueError(f"dimension must be >= 2, got {N}")
    return N


@dataclass(frozen=True)
class PParams:
    """Dimension, exponent and derived constants.

    Attributes
    ----------
    N : int
        Spatial dimension, at least 2.
    p : float
        Diffusion exponent in ``(1, 2)``.
    q : float
        Conjugate exponent ``p / (p - 1)``; also the moment and transport order.
    k : float
        Self-similarity exponent ``N (p - 2) + p``.
    p_c : float
        ``2N / (N + 1)``.
    pN : float
        Largest root of :func:`p_polynomial`.
    poly : float
        :func:`p_polynomial` evaluated at ``p``.
    """

    N: int
    p: float
    q: float = field(init=False)
    k: float = field(init=False)
    p_c: float = field(init=False)
    pN: float = field(init=False)
    poly: float = field(init=False)

    def __post_init__(self):
        N = _check_dim(self.N)
        p = float(self.p)
        if not math.isfinite(p) or not 1.0 < p < 2.0:
            raise ValueError(f"p must lie in the open interval (1, 2), got {self.p!r}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", p / (p - 1.0))
        object.__setattr__(self, "k", N * (p - 2.0) + p)
        object.__setattr__(self, "p_c", critical_pc(N))
        object.__setattr__(self, "pN", critical_pN(N))
        object.__setattr__(self, "poly", p_polynomial(N, p))

    @property
    def regime(self) -> str:
        if self.p < self.p_c:
            return "below_pc"
        if self.p < self.pN:
            return "pc_to_pN"
        return "pN_to_2"

    @property
    def supercritical(self) -> bool:
        """True when ``p > p_c`` (source-type solutions exist)."""
        return self.k > 0.0

    @property
    def finite_moment(self) -> bool:
        """True when the Barenblatt profile has a finite q-moment."""
        return self.poly > 0.0

    @property
    def tail_exponent(self) -> float:
        """``N + q - p/(2-p)``, exponent of the q-moment integrand tail plus one."""
        return self.N + self.q - self.p / (2.0 - self.p)

    @property
    def moment_exponent(self) -> float:
        """``p(N) / ((p-1)(2-p))``, the radius exponent in the annulus moment bound."""
        return self.poly / ((self.p - 1.0) * (2.0 - self.p))

    def require_supercritical(self):
        if not self.supercritical:
            raise ValueError(f"p={self.p} must exceed p_c={self.p_c:.6g} for N={self.N}")

    def require_finite_moment(self):
        if not self.poly > 0.0:
            raise ValueError(
                f"p={self.p} must exceed pN={self.pN:.10g} for N={self.N} (finite q-moment range)"
            )

    def to_dict(self) -> dict:
        return {
            "N": self.N, "p": self.p, "q": self.q, "k": self.k,
            "p_c": self.p_c, "pN": self.pN, "poly": self.poly, "regime": self.regime,
        }


def make_params(N: int, p: float) -> PParams:
    return PParams(N, p)
