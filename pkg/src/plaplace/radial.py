"""Radial meshes, cell-average density fields and exact shell quadrature.

A :class:`RadialGrid` partitions ``[0, R_max]`` into shells of ``R^N``; a
:class:`Field` stores one cell-average density per shell.  Masses and
``|x|^q`` moments are integrated exactly over (possibly clipped) shells, so
quadrature error never competes with discretisation error.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


def sphere_area(N: int) -> float:
    """Surface area of the unit sphere in ``R^N``.

    Uses ``S_1 = 2``, ``S_2 = 2 pi`` and ``S_{N+2} = 2 pi S_N / N``, so no
    general Gamma function is needed.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"dimension must be a positive integer, got {N!r}")
    N = int(N)
    area = 2.0 if N % 2 else 2.0 * math.pi
    for m in range(2 - N % 2, N - 1, 2):
        area *= 2.0 * math.pi / m
    return area


def ball_volume(N: int, R: float) -> float:
    return sphere_area(N) * R**N / N


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Cell-centred radial mesh on ``[0, R_max]`` in dimension ``N``.

    ``faces`` are strictly increasing with ``faces[0] == 0``.
    """

    N: int
    faces: np.ndarray

    def __post_init__(self):
        faces = np.ascontiguousarray(self.faces, dtype=float)
        if faces.ndim != 1 or faces.size < 2:
            raise ValueError("faces must be a 1-D array with at least two entries")
        if not np.all(np.isfinite(faces)):
            raise ValueError("faces must be finite")
        if faces[0] != 0.0:
            raise ValueError("first face must be exactly 0")
        if np.any(np.diff(faces) <= 0.0):
            raise ValueError("faces must be strictly increasing")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"dimension must be a positive integer, got {self.N!r}")
        faces.setflags(write=False)
        object.__setattr__(self, "faces", faces)
        object.__setattr__(self, "N", int(self.N))

    @property
    def cells(self) -> int:
        return self.faces.size - 1

    @property
    def R_max(self) -> float:
        return float(self.faces[-1])

    @cached_property
    def omega(self) -> float:
        return sphere_area(self.N)

    @cached_property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.faces[1:] + self.faces[:-1])

    @cached_property
    def widths(self) -> np.ndarray:
        return np.diff(self.faces)

    @cached_property
    def shell_volumes(self) -> np.ndarray:
        fN = self.faces**self.N
        return self.omega / self.N * (fN[1:] - fN[:-1])

    @cached_property
    def face_areas(self) -> np.ndarray:
        """``omega * r**(N-1)`` at every face, including the two boundaries."""
        return self.omega * self.faces ** (self.N - 1)

    @cached_property
    def center_spacing(self) -> np.ndarray:
        """Centre-to-centre distance across each interior face (length ``cells - 1``)."""
        return np.diff(self.centers)

    @property
    def volume(self) -> float:
        return ball_volume(self.N, self.R_max)

    def shell_moment_weights(self, q: float, r: float = 0.0, R: float | None = None) -> np.ndarray:
        """Exact ``omega * int rho**(N-1+q) d rho`` over each cell clipped to ``[r, R]``."""
        R = self.R_max if R is None else R
        lo = np.clip(self.faces[:-1], r, R)
        hi = np.clip(self.faces[1:], r, R)
        e = self.N + q
        if e <= 0.0:
            raise ValueError(f"moment order {q} is not integrable at the origin in dimension {self.N}")
        return self.omega * (hi**e - lo**e) / e

    def locate(self, r: float) -> int:
        """Index of the cell containing radius ``r`` (last cell for ``r == R_max``)."""
        i = int(np.searchsorted(self.faces, r, side="right")) - 1
        return min(max(i, 0), self.cells - 1)

    def to_dict(self) -> dict:
        return {"N": self.N, "R_max": self.R_max, "faces": self.faces.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RadialGrid":
        grid = cls(int(d["N"]), np.asarray(d["faces"], dtype=float))
        if "R_max" in d and not math.isclose(grid.R_max, float(d["R_max"]), rel_tol=1e-12):
            raise ValueError("R_max does not match the last face")
        return grid


def make_grid(R_max: float, cells: int, stretch: float = 1.0, N: int = 2,
              core: float | None = None) -> RadialGrid:
    """Build a radial mesh of ``cells`` shells covering ``[0, R_max]``.

    With ``stretch == 1`` the mesh is uniform.  Otherwise consecutive cell
    widths grow by the factor ``stretch``, which concentrates resolution
    near the origin.

    ``core`` selects the map ``r = core * sinh(beta * i / cells)`` instead:
    nearly uniform spacing for ``r << core`` and geometric growth beyond.
    Power-law tails then get cells proportional to ``r``.  ``stretch`` must
    be 1 when ``core`` is given.
    """
    R_max = float(R_max)
    stretch = float(stretch)
    if not math.isfinite(R_max) or R_max <= 0.0:
        raise ValueError(f"R_max must be positive and finite, got {R_max!r}")
    if not math.isfinite(stretch) or stretch < 1.0:
        raise ValueError(f"stretch must be finite and >= 1, got {stretch!r}")
    if int(cells) != cells or cells < 8:
        raise ValueError(f"cells must be an integer >= 8, got {cells!r}")
    cells = int(cells)
    if core is not None:
        core = float(core)
        if not math.isfinite(core) or core <= 0.0:
            raise ValueError(f"core must be positive and finite, got {core!r}")
        if stretch != 1.0:
            raise ValueError("core and stretch are mutually exclusive")
        beta = math.asinh(R_max / core)
        faces = core * np.sinh(beta * np.arange(cells + 1) / cells)
    elif stretch == 1.0:
        faces = R_max * np.arange(cells + 1) / cells
    else:
        growth = stretch ** np.arange(cells + 1)
        faces = R_max * (growth - 1.0) / (growth[-1] - 1.0)
    faces[0] = 0.0
    faces[-1] = R_max
    return RadialGrid(N, faces)


@dataclass(frozen=True, eq=False)
class Field:
    """Non-negative cell-average density on a :class:`RadialGrid`."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.cells,):
            raise ValueError(f"expected {self.grid.cells} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        if np.any(values < 0.0):
            raise ValueError(f"field values must be non-negative (min {values.min():.3e})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def _unchecked(cls, grid: RadialGrid, values: np.ndarray) -> "Field":
        # solver states may carry round-off negatives inside the positivity tolerance
        obj = object.__new__(cls)
        values = np.array(values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(obj, "grid", grid)
        object.__setattr__(obj, "values", values)
        return obj

    @property
    def N(self) -> int:
        return self.grid.N

    def mass(self) -> float:
        return total_mass(self)

    def cell_masses(self) -> np.ndarray:
        return self.values * self.grid.shell_volumes


def zeros(grid: RadialGrid) -> Field:
    return Field(grid, np.zeros(grid.cells))


def constant(grid: RadialGrid, c: float) -> Field:
    return Field(grid, np.full(grid.cells, float(c)))


def total_mass(f: Field) -> float:
    return float(np.dot(f.values, f.grid.shell_volumes))


def annulus_q_moment(f: Field, r: float, R: float, q: float) -> float:
    """``int_{r <= |x| <= R} |x|**q u dx`` with partial cells split exactly."""
    if not r < R:
        raise ValueError(f"annulus needs r < R, got r={r}, R={R}")
    if r < 0.0:
        raise ValueError(f"inner radius must be non-negative, got {r}")
    R = min(R, f.grid.R_max)
    if r >= R:
        return 0.0
    return float(np.dot(f.values, f.grid.shell_moment_weights(q, r, R)))


def tail_q_moment(f: Field, r: float, q: float) -> float:
    """``int_{|x| >= r} |x|**q u dx`` over the computational domain."""
    if r < 0.0:
        raise ValueError(f"radius must be non-negative, got {r}")
    if r >= f.grid.R_max:
        return 0.0
    return annulus_q_moment(f, r, f.grid.R_max, q)


_GAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(order: int):
    if order not in _GAUSS_CACHE:
        _GAUSS_CACHE[order] = np.polynomial.legendre.leggauss(order)
    return _GAUSS_CACHE[order]


def shell_integrals(grid: RadialGrid, func, order: int = 8) -> np.ndarray:
    """Gauss-Legendre approximation of ``omega * int_cell func(rho) rho**(N-1) d rho`` per cell.

    ``func`` must accept a NumPy array of radii.
    """
    x, w = _gauss(order)
    a = grid.faces[:-1, None]
    h = grid.widths[:, None]
    rho = a + 0.5 * h * (x[None, :] + 1.0)
    vals = np.asarray(func(rho), dtype=float) * rho ** (grid.N - 1)
    return grid.omega * 0.5 * grid.widths * (vals @ w)


def cell_averages(grid: RadialGrid, func, order: int = 8) -> Field:
    """Field of cell averages of a radial density given as a function of radius."""
    return Field(grid, shell_integrals(grid, func, order) / grid.shell_volumes)


def pair(f: Field, phi, order: int = 8) -> float:
    """``int phi(|x|) u(x) dx`` for a radial test function ``phi``."""
    return float(np.dot(f.values, shell_integrals(f.grid, phi, order)))


def l1_distance(f: Field, g) -> float:
    """``sum_i |f_i - g_i| w_i``; ``g`` may be a Field or an array of cell values."""
    gv = g.values if isinstance(g, Field) else np.asarray(g, dtype=float)
    return float(np.dot(np.abs(f.values - gv), f.grid.shell_volumes))


def cumulative_mass(f: Field, radii) -> np.ndarray:
    """Mass of ``f`` inside ``B_r`` for each ``r`` (exact for piecewise-constant cells)."""
    g = f.grid
    r = np.clip(np.asarray(radii, dtype=float), 0.0, g.R_max)
    inner = np.concatenate(([0.0], np.cumsum(f.cell_masses())))
    i = np.clip(np.searchsorted(g.faces, r, side="right") - 1, 0, g.cells - 1)
    part = f.values[i] * g.omega / g.N * (r**g.N - g.faces[i] ** g.N)
    return inner[i] + part


def remap(f: Field, grid: RadialGrid) -> Field:
    """Conservative transfer of ``f`` onto ``grid``.

    Each target cell receives the mass of ``f`` lying inside it; mass beyond
    the target ``R_max`` is dropped.
    """
    if grid.N != f.grid.N:
        raise ValueError(f"dimension mismatch: {f.grid.N} vs {grid.N}")
    masses = np.diff(cumulative_mass(f, grid.faces))
    return Field(grid, np.maximum(masses, 0.0) / grid.shell_volumes)


def write_field(f: Field, path) -> tuple[Path, Path]:
    """Write ``r_center,value`` CSV plus a JSON sidecar carrying the grid.

    Returns the two paths written.
    """
    path = Path(path)
    sidecar = path.with_suffix(".json")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["r_center", "value"])
        for rc, v in zip(f.grid.centers, f.values):
            writer.writerow([repr(float(rc)), repr(float(v))])
    sidecar.write_text(json.dumps(f.grid.to_dict()))
    return path, sidecar


def read_field(path) -> Field:
    path = Path(path)
    grid = RadialGrid.from_dict(json.loads(path.with_suffix(".json").read_text()))
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if [h.strip() for h in header] != ["r_center", "value"]:
            raise ValueError(f"unexpected CSV header {header!r}")
        rows = [(float(a), float(b)) for a, b in reader]
    if len(rows) != grid.cells:
        raise ValueError(f"CSV has {len(rows)} rows, grid has {grid.cells} cells")
    centers = np.array([r for r, _ in rows])
    if not np.allclose(centers, grid.centers, rtol=1e-12, atol=0.0):
        raise ValueError("CSV radii do not match the sidecar grid")
    return Field(grid, np.array([v for _, v in rows]))
