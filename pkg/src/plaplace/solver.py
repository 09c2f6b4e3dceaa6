"""Conservative finite-volume solver for the radial singular p-Laplace flow.

In radial coordinates the equation reads::

    du/dt = r**(1-N) d/dr ( r**(N-1) |du/dr|**(p-2) du/dr ).

Cell averages are advanced with Heun's method (explicit, two stages).  Face
fluxes use the two-point gradient ``s`` across each interior face and the
regularised diffusivity ``D(s) = (s**2 + eps**2)**((p-2)/2)``, which stays
finite where the gradient vanishes.  Both boundary fluxes are zero, so the
update telescopes and the discrete mass is conserved to round-off.
"""
from __future__ import annotations

import math
from array import array
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .exponents import PParams
from .radial import Field, RadialGrid

POSITIVITY_TOL = 1e-10


class SolverError(RuntimeError):
    """Base class for aborted runs; carries the partial trajectory."""

    def __init__(self, message: str, trajectory: "SolutionTrajectory | None" = None):
        super().__init__(message)
        self.trajectory = trajectory


class SolverInstability(SolverError):
    pass


class StepLimitExceeded(SolverError):
    pass


def default_epsilon(mass: float, R_max: float, N: int) -> float:
    """``1e-5`` times the characteristic gradient ``mass / R_max**(N+1)``."""
    scale = mass / R_max**N / R_max
    return 1e-5 * scale if scale > 0.0 else 1e-5


def default_snapshots(t_start: float, t_end: float, count: int = 20) -> np.ndarray:
    """``count`` log-spaced times ending at ``t_end`` (uniform if ``t_start == 0``).

    Times are measured from ``t_start`` and span two decades of elapsed time.
    """
    span = t_end - t_start
    return t_start + span * np.geomspace(1e-2, 1.0, count)


@dataclass(frozen=True)
class SolverConfig:
    """Run parameters.

    ``epsilon=None`` selects :func:`default_epsilon` from the initial mass.
    ``snapshot_times=None`` selects :func:`default_snapshots`.
    ``history_size`` bounds how many intermediate states are kept for the
    time-integrated functionals.
    """

    params: PParams
    t_end: float
    t_start: float = 0.0
    epsilon: float | None = None
    cfl_safety: float = 0.5
    snapshot_times: Sequence[float] | None = None
    max_steps: int = 5_000_000
    history_size: int = 1500

    def __post_init__(self):
        if not self.params.supercritical:
            raise ValueError(f"solver needs p > p_c (p={self.params.p}, p_c={self.params.p_c:.6g})")
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ValueError("times must be finite")
        if self.t_start < 0.0 or not self.t_end > self.t_start:
            raise ValueError(f"need 0 <= t_start < t_end, got {self.t_start}, {self.t_end}")
        if self.epsilon is not None and not (self.epsilon > 0.0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if not 0.0 < self.cfl_safety <= 1.0:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if int(self.max_steps) < 1:
            raise ValueError("max_steps must be positive")
        if self.snapshot_times is not None:
            ts = np.asarray(self.snapshot_times, dtype=float)
            if ts.ndim != 1 or np.any(np.diff(ts) <= 0.0):
                raise ValueError("snapshot_times must be strictly increasing")
            if ts.size and (ts[0] < self.t_start or ts[-1] > self.t_end):
                raise ValueError("snapshot_times must lie inside [t_start, t_end]")
            object.__setattr__(self, "snapshot_times", tuple(float(t) for t in ts))

    def resolved_epsilon(self, u0: Field) -> float:
        if self.epsilon is not None:
            return float(self.epsilon)
        return default_epsilon(u0.mass(), u0.grid.R_max, u0.grid.N)

    def resolved_snapshots(self) -> np.ndarray:
        if self.snapshot_times is None:
            ts = default_snapshots(self.t_start, self.t_end)
        else:
            ts = np.asarray(self.snapshot_times, dtype=float)
        ts = ts[ts > self.t_start]
        if ts.size == 0 or ts[-1] != self.t_end:
            ts = np.append(ts, self.t_end)
        return ts

    def to_dict(self) -> dict:
        return {
            "N": self.params.N, "p": self.params.p, "t_start": self.t_start, "t_end": self.t_end,
            "epsilon": self.epsilon, "cfl_safety": self.cfl_safety,
            "snapshot_times": None if self.snapshot_times is None else list(self.snapshot_times),
            "max_steps": self.max_steps, "history_size": self.history_size,
        }


class _Operator:
    """Precomputed geometry and the flux-divergence operator for one grid."""

    def __init__(self, grid: RadialGrid, p: float, epsilon: float):
        self.grid = grid
        self.p = p
        self.epsilon = epsilon
        self.eps2 = epsilon * epsilon
        self.expo = 0.5 * (p - 2.0)
        self.inv_h = 1.0 / grid.center_spacing
        self.area = grid.face_areas[1:-1].copy()
        self.w = grid.shell_volumes
        self.inv_w = 1.0 / self.w
        self.coef = self.area * self.inv_h
        m = grid.cells
        self._flux = np.zeros(m + 1)
        self._rate = np.empty(m)

    def gradients(self, u):
        return (u[1:] - u[:-1]) * self.inv_h

    def diffusivity(self, s):
        return (s * s + self.eps2) ** self.expo

    def interior_fluxes(self, u):
        s = self.gradients(u)
        D = self.diffusivity(s)
        return self.area * D * s, D

    def rate(self, u):
        """``du/dt`` and the face diffusivities used."""
        phi, D = self.interior_fluxes(u)
        flux = self._flux
        flux[1:-1] = phi
        rate = np.subtract(flux[1:], flux[:-1], out=self._rate)
        rate *= self.inv_w
        return rate.copy(), D

    def stable_dt(self, D, cfl):
        g = self.coef * D
        denom = np.empty(self.grid.cells)
        denom[:-1] = g
        denom[-1] = 0.0
        denom[1:] += g
        return cfl * float(np.min(self.w / denom))


def stable_dt(f: Field, cfg: SolverConfig, epsilon: float | None = None) -> float:
    """Largest step keeping each forward-Euler stage a convex combination.

    ``dt = cfl * min_i w_i / sum_faces(A_f D_f / h_f)`` where ``D_f`` is the
    secant diffusivity ``(s**2 + eps**2)**((p-2)/2)``.  On a uniform mesh away
    from the origin this is ``cfl * dr**2 / (2 D_max)``.
    """
    eps = cfg.resolved_epsilon(f) if epsilon is None else epsilon
    op = _Operator(f.grid, cfg.params.p, eps)
    D = op.diffusivity(op.gradients(f.values))
    return op.stable_dt(D, cfg.cfl_safety)


def _heun(op: _Operator, u, dt):
    k1, D = op.rate(u)
    u1 = u + dt * k1
    k2, _ = op.rate(u1)
    return u + 0.5 * dt * (k1 + k2), D


def _positivity_floor(mass: float, grid: RadialGrid) -> float:
    return -POSITIVITY_TOL * abs(mass) / grid.volume


def step(f: Field, dt: float, cfg: SolverConfig, epsilon: float | None = None) -> Field:
    """One Heun step of size ``dt``.

    Raises :class:`SolverInstability` on non-finite values or when the
    minimum drops below ``-1e-10 * mass / volume``.
    """
    if f.grid.N != cfg.params.N:
        raise ValueError(f"grid dimension {f.grid.N} != params dimension {cfg.params.N}")
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    eps = cfg.resolved_epsilon(f) if epsilon is None else epsilon
    op = _Operator(f.grid, cfg.params.p, eps)
    new, _ = _heun(op, f.values, dt)
    mass = f.mass()
    if not np.all(np.isfinite(new)) or new.min() < _positivity_floor(mass, f.grid):
        raise SolverInstability(f"unstable update (min {np.nanmin(new):.3e}) with dt={dt:.3e}")
    return Field._unchecked(f.grid, new)


@dataclass(eq=False)
class SolutionTrajectory:
    """Snapshots, stored intermediate states and per-step diagnostics of a run.

    ``history_times`` / ``history_states`` hold the field at a subset of
    accepted steps (every step when the run is short); face gradients and
    fluxes at those steps are reproduced exactly by :meth:`face_gradients`
    and :meth:`face_fluxes`.
    """

    grid: RadialGrid
    params: PParams
    epsilon: float
    config: SolverConfig
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    history_times: list = field(default_factory=list)
    history_states: list = field(default_factory=list)
    step_dt: array = field(default_factory=lambda: array("d"))
    step_min: array = field(default_factory=lambda: array("d"))
    step_mass: array = field(default_factory=lambda: array("d"))
    status: str = "running"

    @property
    def snapshots(self):
        return list(zip(self.times, self.fields))

    @property
    def t_start(self) -> float:
        return self.times[0]

    @property
    def steps(self) -> int:
        return len(self.step_dt)

    def field_at(self, t: float) -> Field:
        for ts, f in zip(self.times, self.fields):
            if math.isclose(ts, t, rel_tol=1e-12, abs_tol=1e-15):
                return f
        raise KeyError(f"no snapshot at t={t}")

    def _operator(self):
        return _Operator(self.grid, self.params.p, self.epsilon)

    def face_gradients(self, index: int) -> np.ndarray:
        return self._operator().gradients(self.history_states[index])

    def face_fluxes(self, index: int) -> np.ndarray:
        """All ``cells + 1`` face fluxes (boundary fluxes are zero) at history entry ``index``."""
        phi, _ = self._operator().interior_fluxes(self.history_states[index])
        return np.concatenate(([0.0], phi, [0.0]))

    def mass_drift(self) -> float:
        """Largest relative deviation of the per-step mass from the initial mass."""
        m0 = self.fields[0].mass()
        if m0 == 0.0:
            return float(np.max(np.abs(self.step_mass))) if len(self.step_mass) else 0.0
        if not len(self.step_mass):
            return 0.0
        return float(np.max(np.abs(np.frombuffer(self.step_mass) - m0)) / abs(m0))

    def diagnostics(self) -> dict:
        dts = np.frombuffer(self.step_dt) if len(self.step_dt) else np.zeros(1)
        mins = np.frombuffer(self.step_min) if len(self.step_min) else np.zeros(1)
        return {
            "status": self.status,
            "steps": self.steps,
            "epsilon": self.epsilon,
            "dt_min": float(dts.min()),
            "dt_max": float(dts.max()),
            "dt_mean": float(dts.mean()),
            "min_value": float(mins.min()),
            "mass_initial": self.fields[0].mass() if self.fields else None,
            "mass_drift": self.mass_drift(),
        }


def _history_marks(t_start: float, t_end: float, size: int) -> np.ndarray:
    span = t_end - t_start
    half = max(size // 2, 2)
    lin = np.linspace(0.0, 1.0, half + 1)[1:]
    geo = np.geomspace(1e-6, 1.0, half)
    return t_start + span * np.unique(np.concatenate((lin, geo)))


def evolve(u0: Field, cfg: SolverConfig) -> SolutionTrajectory:
    """Integrate from ``cfg.t_start`` to ``cfg.t_end``.

    Every snapshot time is hit exactly by clipping the step.  On instability
    or when ``cfg.max_steps`` is exhausted a :class:`SolverError` is raised
    whose ``trajectory`` attribute holds everything computed so far.
    """
    grid = u0.grid
    if grid.N != cfg.params.N:
        raise ValueError(f"grid dimension {grid.N} != params dimension {cfg.params.N}")
    eps = cfg.resolved_epsilon(u0)
    op = _Operator(grid, cfg.params.p, eps)
    traj = SolutionTrajectory(grid, cfg.params, eps, cfg)
    snaps = cfg.resolved_snapshots()
    marks = _history_marks(cfg.t_start, cfg.t_end, cfg.history_size)
    dense_steps = 100  # always keep the first steps: the start is where integrands vary fastest

    u = np.array(u0.values, dtype=float)
    t = cfg.t_start
    mass0 = u0.mass()
    floor = _positivity_floor(mass0, grid)
    w = grid.shell_volumes
    traj.times.append(t)
    traj.fields.append(u0)
    traj.history_times.append(t)
    traj.history_states.append(u.copy())

    if not np.any(u):
        # the zero field is a steady state; no flux, nothing to integrate
        for ts in snaps:
            traj.times.append(float(ts))
            traj.fields.append(Field(grid, np.zeros(grid.cells)))
            traj.history_times.append(float(ts))
            traj.history_states.append(u.copy())
        traj.status = "ok"
        return traj

    k_snap = 0
    k_mark = int(np.searchsorted(marks, t, side="right"))
    n = 0
    while k_snap < snaps.size:
        if n >= cfg.max_steps:
            traj.status = "step_limit"
            raise StepLimitExceeded(f"max_steps={cfg.max_steps} reached at t={t:.6g}", traj)
        k1, D = op.rate(u)
        dt = op.stable_dt(D, cfg.cfl_safety)
        target = snaps[k_snap]
        hit = t + dt >= target
        if hit:
            dt = target - t
        u1 = u + dt * k1
        k2, _ = op.rate(u1)
        u = u + 0.5 * dt * (k1 + k2)
        t = float(target) if hit else t + dt
        n += 1
        umin = float(u.min())
        mass = float(np.dot(u, w))
        traj.step_dt.append(dt)
        traj.step_min.append(umin)
        traj.step_mass.append(mass)
        if not math.isfinite(mass) or umin < floor:
            traj.status = "unstable"
            raise SolverInstability(
                f"positivity/finiteness violated at t={t:.6g} (min {umin:.3e}, floor {floor:.3e})", traj
            )
        record = n <= dense_steps or hit
        if k_mark < marks.size and t >= marks[k_mark]:
            record = True
            k_mark = int(np.searchsorted(marks, t, side="right"))
        if record:
            traj.history_times.append(t)
            traj.history_states.append(u.copy())
        if hit:
            traj.times.append(t)
            traj.fields.append(Field._unchecked(grid, u.copy()))
            k_snap += 1
    traj.status = "ok"
    return traj


def with_times(cfg: SolverConfig, **changes) -> SolverConfig:
    return replace(cfg, **changes)
