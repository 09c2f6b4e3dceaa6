"""Radial positive Radon measures and their mollification onto a grid.

A measure is a finite list of atoms ``(radius, mass)`` (an atom at radius
``rho > 0`` is the uniform measure on the sphere ``|x| = rho``) plus an
optional absolutely continuous part given as a :class:`Field`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .radial import Field, RadialGrid, annulus_q_moment, read_field, remap

MIN_CELLS_PER_WIDTH = 4


@dataclass(frozen=True, eq=False)
class RadonMeasure:
    """Atoms plus an optional density, all radial in dimension ``N``."""

    N: int
    atoms: tuple = ()
    density: Field | None = None

    def __post_init__(self):
        atoms = tuple((float(r), float(m)) for r, m in self.atoms)
        for r, m in atoms:
            if not (math.isfinite(r) and r >= 0.0):
                raise ValueError(f"atom radius must be finite and >= 0, got {r!r}")
            if not (math.isfinite(m) and m > 0.0):
                raise ValueError(f"atom mass must be finite and > 0, got {m!r}")
        if self.density is not None and self.density.grid.N != self.N:
            raise ValueError(f"density lives in dimension {self.density.grid.N}, measure in {self.N}")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.N!r}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "N", int(self.N))

    @property
    def total_mass(self) -> float:
        m = sum(a for _, a in self.atoms)
        if self.density is not None:
            m += self.density.mass()
        return float(m)

    @property
    def support_radius(self) -> float:
        """Smallest ``rho`` with the measure carried by ``B_rho`` (up to the density grid)."""
        r = max((a for a, _ in self.atoms), default=0.0)
        if self.density is not None:
            nz = np.nonzero(self.density.values)[0]
            if nz.size:
                r = max(r, float(self.density.grid.faces[nz[-1] + 1]))
        return r

    def to_dict(self) -> dict:
        d = {"N": self.N, "atoms": [list(a) for a in self.atoms]}
        if self.density is not None:
            d["density"] = {"grid": self.density.grid.to_dict(), "values": self.density.values.tolist()}
        return d


def dirac(mass: float = 1.0, N: int = 2) -> RadonMeasure:
    """``mass * delta_0``."""
    return RadonMeasure(N, ((0.0, mass),))


def from_field(f: Field) -> RadonMeasure:
    return RadonMeasure(f.grid.N, (), f)


def measure_q_moment(mu: RadonMeasure, q: float, r: float = 0.0, R: float = math.inf) -> float:
    """``int_{r <= |x| <= R} |x|**q dmu``; ``R = inf`` means no outer limit."""
    if not r < R:
        raise ValueError(f"window needs r < R, got r={r}, R={R}")
    if r < 0.0:
        raise ValueError(f"inner radius must be non-negative, got {r}")
    total = sum(m * rho**q for rho, m in mu.atoms if r <= rho <= R)
    f = mu.density
    if f is not None and r < f.grid.R_max:
        total += annulus_q_moment(f, r, min(R, f.grid.R_max), q)
    return float(total)


def measure_mass(mu: RadonMeasure, r: float = 0.0, R: float = math.inf) -> float:
    return measure_q_moment(mu, 0.0, r, R)


def mollified_tail_bound(mu: RadonMeasure, q: float, R: float, n: int) -> float:
    """Upper bound for ``int_{|x| >= R} |x|**q`` of any ``1/n``-mollification of ``mu``.

    ``2**(q-1) * (M_q(mu, |y| >= (R-1)^+) + n**(-q) * mu(|y| >= (R-1)^+))``.
    """
    lo = max(R - 1.0, 0.0)
    c = 2.0 ** (q - 1.0)
    return c * (measure_q_moment(mu, q, lo) + n ** (-q) * measure_mass(mu, lo))


def _bump(s):
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _smooth_cutoff(r, c: float):
    """1 on ``[0, c]``, 0 beyond ``2c``, smooth in between."""
    x = np.clip(r / c - 1.0, 0.0, 1.0)

    def f(y):
        out = np.zeros_like(y)
        pos = y > 0.0
        out[pos] = np.exp(-1.0 / y[pos])
        return out

    return f(1.0 - x) / (f(x) + f(1.0 - x))


def _atom_cell_masses(grid: RadialGrid, rho: float, width: float, order: int = 12) -> np.ndarray:
    """Shell integrals of the radial bump centred at ``rho``, restricted to its support."""
    lo, hi = max(rho - width, 0.0), rho + width
    a = np.clip(grid.faces[:-1], lo, hi)
    b = np.clip(grid.faces[1:], lo, hi)
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    r = a[:, None] + half[:, None] * (x[None, :] + 1.0)
    vals = _bump((r - rho) / width) * r ** (grid.N - 1)
    return half * (vals @ w)


def mollify(mu: RadonMeasure, n: int, grid: RadialGrid) -> Field:
    """Smooth compactly supported approximation of ``mu`` on ``grid``.

    Each atom is spread by a radial bump of half-width ``1/n`` and rescaled
    so that its mass is exact on the grid.  The density part is transferred
    conservatively.  The result is then multiplied by a smooth cutoff that
    equals 1 up to ``min(n, R_max/2)`` and vanishes beyond twice that radius.

    Raises ``ValueError`` if a cell overlapping an atom's support is wider
    than a quarter of ``1/n``.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if grid.N != mu.N:
        raise ValueError(f"grid dimension {grid.N} != measure dimension {mu.N}")
    width = 1.0 / n
    cut = min(float(n), grid.R_max / 2.0)
    masses = np.zeros(grid.cells)
    for rho, m in mu.atoms:
        if rho - width >= 2.0 * cut:
            continue  # removed by the cutoff
        touched = (grid.faces[1:] > max(rho - width, 0.0)) & (grid.faces[:-1] < rho + width)
        if np.max(grid.widths[touched]) > width / MIN_CELLS_PER_WIDTH:
            raise ValueError(
                f"grid too coarse to mollify at radius {rho:g}: need cells <= {width / MIN_CELLS_PER_WIDTH:.3g}"
            )
        shape = _atom_cell_masses(grid, rho, width)
        masses += m * shape / shape.sum()
    values = masses / grid.shell_volumes
    if mu.density is not None:
        values = values + remap(mu.density, grid).values
    values = values * _smooth_cutoff(grid.centers, cut)
    return Field(grid, values)


def load_measure(path, N: int | None = None) -> RadonMeasure:
    """Read ``{"atoms": [[r, m], ...], "density_csv": path-or-null}``.

    ``N`` comes from the density sidecar, else from an ``"N"`` key, else the
    argument.  A relative ``density_csv`` is resolved against the JSON file.
    """
    path = Path(path)
    spec = json.loads(path.read_text())
    if not isinstance(spec, dict) or "atoms" not in spec:
        raise ValueError("measure JSON needs an 'atoms' list")
    atoms = []
    for item in spec["atoms"]:
        if len(item) != 2:
            raise ValueError(f"atom entries are [radius, mass], got {item!r}")
        atoms.append((float(item[0]), float(item[1])))
    density = None
    if spec.get("density_csv"):
        csv_path = Path(spec["density_csv"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        density = read_field(csv_path)
    dim = density.grid.N if density is not None else spec.get("N", N)
    if dim is None:
        raise ValueError("dimension unknown: give 'N' in the JSON or as an argument")
    if N is not None and int(dim) != N:
        raise ValueError(f"measure dimension {dim} != requested {N}")
    return RadonMeasure(int(dim), tuple(atoms), density)
