"""Named, reproducible experiments.

Each scenario takes a fully materialised configuration (defaults for the
chosen tier deep-merged with the user's JSON) and returns a
:class:`ScenarioResult` with pass/fail criteria, summary numbers and CSV
tables.  Wall-clock measurements go into ``timings`` only, so that the rest
of the report is reproducible bit for bit.
"""
from __future__ import annotations

import copy
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from . import exponents as ex
from .barenblatt import (
    BarenblattSolution,
    MomentDivergence,
    beta_profile_integral,
    bb_action_exact,
    gradient_annulus_exact,
    q_moment_of_F,
)
from .exponents import PParams
from .functionals import (
    EstimateReport,
    bb_action,
    bb_action_rhs,
    fit_constant,
    fit_rate,
    gradient_annulus_lhs,
    gradient_annulus_rhs,
    junning_l1_rhs,
    junning_sup_rhs,
    moment_lhs,
    moment_rhs,
    tail_sup,
)
from .measures import RadonMeasure, dirac, from_field, load_measure, measure_q_moment, mollify
from .radial import Field, annulus_q_moment, read_field, cell_averages, l1_distance, make_grid, pair
from .solver import SolverConfig, SolverError, evolve
from .wasserstein import bb_upper_bound, exact_ot_discrete, wq_radial, wq_to_dirac

TIERS = ("smoke", "full")
TOP_KEYS = {"scenario", "tier", "seed", "output_dir", "params", "grid", "solver", "measure", "options"}


class ConfigError(ValueError):
    pass


@dataclass
class Criterion:
    name: str
    passed: bool
    value: object = None
    threshold: object = None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": bool(self.passed), "value": _jsonable(self.value),
                "threshold": _jsonable(self.threshold), "detail": self.detail}


@dataclass
class ScenarioResult:
    criteria: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def check(self, name, passed, value=None, threshold=None, detail=""):
        self.criteria.append(Criterion(name, bool(passed), value, threshold, detail))

    def table(self, name, columns, rows):
        self.tables[name] = (list(columns), [list(r) for r in rows])

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria)


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


# initial data ---------------------------------------------------------------

def _bump_field(grid, radius, mass):
    f = cell_averages(grid, lambda r: np.where(r < radius, np.exp(-1.0 / np.maximum(1.0 - (r / radius) ** 2, 1e-300)), 0.0))
    return Field(grid, f.values * mass / f.mass())


def _ring_field(N, center, width, radius, mass, cells=120):
    g = make_grid(radius, cells, N=N)
    f = cell_averages(g, lambda r: np.exp(-((r - center) / width) ** 2))
    return Field(g, f.values * mass / f.mass())


def build_family(spec: dict, N: int, grid, base_dir: Path | None = None):
    """Initial measure and the field it is turned into on ``grid``.

    Kinds: ``dirac`` (``mass``, ``n``), ``bump`` (``radius``, ``mass``),
    ``measure`` (``atoms``, optional ``uniform`` / ``ring`` density, ``n``)
    and ``file`` (``path`` to measure JSON, ``n``).
    """
    kind = spec.get("kind")
    if kind == "dirac":
        mu = dirac(float(spec.get("mass", 1.0)), N)
        return mu, mollify(mu, int(spec["n"]), grid)
    if kind == "bump":
        f = _bump_field(grid, float(spec["radius"]), float(spec.get("mass", 1.0)))
        return from_field(f), f
    if kind == "measure":
        density = None
        if "uniform" in spec:
            u = spec["uniform"]
            dg = make_grid(float(u["radius"]), 16, N=N)
            density = Field(dg, np.full(16, float(u["mass"]) / dg.volume))
        elif "ring" in spec:
            r = spec["ring"]
            density = _ring_field(N, float(r["center"]), float(r["width"]), float(r["radius"]), float(r["mass"]))
        elif spec.get("density_csv"):
            path = Path(spec["density_csv"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            density = read_field(path)
        mu = RadonMeasure(N, tuple(tuple(a) for a in spec.get("atoms", [])), density)
        return mu, mollify(mu, int(spec["n"]), grid)
    if kind == "file":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        mu = load_measure(path, N)
        return mu, mollify(mu, int(spec["n"]), grid)
    raise ConfigError(f"unknown initial-data kind {kind!r}")


BROAD_MIXED = {"kind": "measure", "atoms": [[1.0, 0.5]],
               "ring": {"center": 1.5, "width": 0.5, "radius": 3.0, "mass": 0.5}, "n": 10}


def _grid_from(gcfg: dict, N: int):
    if "h0" in gcfg:
        core = float(gcfg["core"])
        cells = int(math.ceil(core * math.asinh(gcfg["R_max"] / core) / gcfg["h0"]))
        return make_grid(gcfg["R_max"], cells, N=N, core=core)
    return make_grid(gcfg["R_max"], gcfg["cells"], gcfg.get("stretch", 1.0), N, gcfg.get("core"))


def _case_params(cases):
    return [PParams(int(c["N"]), float(c["p"]) if "p" in c else ex.critical_pN(int(c["N"])) + float(c["p_above_pN"]))
            for c in cases]


def _scfg(cfg, P, **kw):
    return SolverConfig(P, max_steps=int(cfg["solver"].get("max_steps", 5_000_000)), **kw)


# scenarios ------------------------------------------------------------------

def s_exponents(cfg, rng, res: ScenarioResult):
    opts = cfg["options"]
    rows = []
    ok_order = ok_root = ok_ident = True
    worst_root = worst_ident = 0.0
    for N in opts["dims"]:
        pc, pN = ex.critical_pc(N), ex.critical_pN(N)
        root = abs(ex.p_polynomial(N, pN))
        worst_root = max(worst_root, root)
        ok_order &= 4.0 / 3.0 - 1e-15 <= pc < pN < 2.0
        for p in np.linspace(pc, 2.0, opts["samples"] + 2)[1:-1]:
            P = PParams(N, float(p))
            dev = abs(P.tail_exponent * (p - 1.0) * (2.0 - p) + P.poly)
            worst_ident = max(worst_ident, dev)
        rows.append([N, pc, pN, root])
    ok_root = worst_root <= 1e-12
    ok_ident = worst_ident <= 1e-12
    res.check("critical-ordering", ok_order, detail="4/3 <= p_c < p_N < 2 for every tested N")
    res.check("pN-is-root", ok_root, worst_root, 1e-12)
    res.check("tail-exponent-identity", ok_ident, worst_ident, 1e-12,
              "N + q - p/(2-p) == -p(N)/((p-1)(2-p))")
    res.table("exponents", ["N", "p_c", "p_N", "abs_poly_at_pN"], rows)


def s_barenblatt_accuracy(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    P = PParams(cfg["params"]["N"], cfg["params"]["p"])
    sol = BarenblattSolution.from_mass(P, o["mass"])
    g0 = cfg["grid"]
    eps = cfg["solver"]["epsilon_rel"] * o["mass"] / g0["R_max"] ** (P.N + 1)
    rows, errs = [], []
    first_time = None
    for cells in o["cells"]:
        grid = make_grid(g0["R_max"], cells, N=P.N, core=g0.get("core"))
        u0 = sol.field(grid, o["t0"])
        exact = sol.field(grid, o["t1"])
        scfg = _scfg(cfg, P, t_start=o["t0"], t_end=o["t1"], epsilon=eps,
                            cfl_safety=cfg["solver"]["cfl_safety"], snapshot_times=[o["t1"]], history_size=4)
        t0 = time.perf_counter()
        traj = evolve(u0, scfg)
        el = time.perf_counter() - t0
        first_time = el if first_time is None else first_time
        res.timings[f"evolve_{cells}"] = el
        err = l1_distance(traj.fields[-1], exact) / exact.mass()
        errs.append(err)
        rows.append([cells, err, traj.steps, traj.mass_drift(), abs(u0.mass() / o["mass"] - 1.0)])
    ratio = errs[0] / errs[1] if len(errs) > 1 and errs[1] > 0 else float("inf")
    res.summary.update({"epsilon": eps, "l1_rel": errs, "error_ratio": ratio})
    res.check("l1-relative-error", errs[0] <= o["max_l1_rel"], errs[0], o["max_l1_rel"], f"{o['cells'][0]} cells")
    if len(errs) > 1:
        res.check("refinement-ratio", ratio >= o["min_ratio"], ratio, o["min_ratio"],
                  f"error({o['cells'][0]}) / error({o['cells'][1]})")
    res.check("discrete-mass-calibration", max(r[4] for r in rows) <= 1e-3, max(r[4] for r in rows), 1e-3)
    if o.get("max_runtime_s"):
        res.check("runtime", first_time <= o["max_runtime_s"], None, o["max_runtime_s"],
                  "wall time of the first grid; measured value under timestamp.timings")
    res.table("barenblatt_accuracy", ["cells", "l1_rel", "steps", "mass_drift", "initial_mass_error"], rows)


def s_moment_estimate(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    windows = [(r, R) for r in o["r"] for R in o["R"]]
    sample_rows, slope_rows = [], []
    for case, P in zip(cfg["params"]["cases"], _case_params(cfg["params"]["cases"])):
        tag = f"N{P.N}_p{P.p:g}"
        grid = _grid_from(cfg["grid"], P.N)
        ref = BarenblattSolution.from_mass(P, 1.0)
        t1 = (o["t_end_length"] / ref.length_scale(1.0)) ** P.k
        ts = np.geomspace(t1 / 10 ** o["decades"], t1, o["times"])
        eps = float(case["epsilon"])
        fitted, started = {}, time.perf_counter()
        families = dict(o["families"])
        if o.get("control"):
            families["control"] = o["control"]
        for name, spec in families.items():
            mu, u0 = build_family(spec, P.N, grid)
            traj = evolve(u0, _scfg(cfg, P, t_end=float(ts[-1]), epsilon=eps, cfl_safety=cfg["solver"]["cfl_safety"],
                                           snapshot_times=ts, history_size=4))
            rep = EstimateReport()
            for r, R in windows:
                lhs = [moment_lhs(traj, r, R, t) for t in ts]
                for t, l in zip(ts, lhs):
                    rhs = moment_rhs(mu, r, R, t, P)
                    rep.add({"r": r, "R": R, "t": t}, l, rhs)
                    sample_rows.append([tag, name, r, R, t, l, rhs, l / rhs])
                if name != "control":
                    fit = fit_rate(ts, lhs)
                    rep.slope_fits[f"r{r}_R{R}"] = fit
                    slope_rows.append([tag, name, r, R, fit.slope, 1.0 / (2.0 - P.p), fit.residual])
            fitted[name] = rep.fitted_C
        res.timings[f"moment_{tag}"] = time.perf_counter() - started
        main = {k: v for k, v in fitted.items() if k != "control"}
        spread = max(main.values()) / min(main.values())
        target = 1.0 / (2.0 - P.p)
        slopes = [row[4] for row in slope_rows if row[0] == tag]
        worst = max(abs(s - target) for s in slopes)
        res.summary[tag] = {"fitted_C": fitted, "spread": spread, "t_window": [float(ts[0]), float(ts[-1])],
                            "target_slope": target, "worst_slope_error": worst, "epsilon": eps}
        res.check(f"{tag}:fitted-C-finite", all(math.isfinite(v) and v > 0 for v in main.values()), main)
        res.check(f"{tag}:fitted-C-spread", spread < o["max_spread"], spread, o["max_spread"],
                  "max/min of fitted_C across families")
        res.check(f"{tag}:t-exponent", worst <= o["slope_tol"], worst, o["slope_tol"],
                  f"fitted slope vs 1/(2-p) = {target:.6g}")
        if "control" in fitted:
            res.check(f"{tag}:control-family-bounded", fitted["control"] <= max(main.values()),
                      fitted["control"], max(main.values()), "broad data obey the same constant")
        if o.get("max_runtime_s"):
            res.check(f"{tag}:runtime", res.timings[f"moment_{tag}"] <= o["max_runtime_s"], None, o["max_runtime_s"])
    res.table("moment_samples", ["case", "family", "r", "R", "t", "lhs", "rhs", "ratio"], sample_rows)
    res.table("moment_slopes", ["case", "family", "r", "R", "slope", "target", "residual"], slope_rows)


def s_uniform_integrability(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    rows = []
    for case, P in zip(cfg["params"]["cases"], _case_params(cfg["params"]["cases"])):
        tag = f"N{P.N}_p{P.p:g}"
        res.check(f"{tag}:p-above-pN", P.p > P.pN, P.p, P.pN)
        grid = _grid_from(cfg["grid"], P.N)
        for name, spec in o["families"].items():
            mu, u0 = build_family(spec, P.N, grid)
            mq0 = measure_q_moment(mu, P.q)
            traj = evolve(u0, _scfg(cfg, P, t_end=o["t_end"], epsilon=cfg["solver"]["epsilon"],
                                           cfl_safety=cfg["solver"]["cfl_safety"], history_size=4))
            tails = [tail_sup(traj, r) for r in o["radii"]]
            dec = all(b < a for a, b in zip(tails, tails[1:]))
            ratio = tails[-1] / tails[0] if tails[0] > 0 else float("inf")
            rows.append([tag, name, mq0] + tails + [ratio])
            res.check(f"{tag}:{name}:finite-q-moment", math.isfinite(mq0), mq0)
            res.check(f"{tag}:{name}:monotone", dec, tails)
            res.check(f"{tag}:{name}:tail-ratio", ratio <= o["max_ratio"], ratio, o["max_ratio"],
                      f"sup-tail at r={o['radii'][-1]} over r={o['radii'][0]}")
    res.table("tail_moments", ["case", "family", "initial_q_moment"] + [f"sup_tail_r{r:g}" for r in o["radii"]] + ["ratio"], rows)


def s_moment_threshold(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    step = o["step"]
    flip_rows, cut_rows = [], []
    all_flip = all_root = True
    worst = 0.0
    for N in o["dims"]:
        pc, pN = ex.critical_pc(N), ex.critical_pN(N)
        ps = np.arange(pc + step, 2.0, step)
        tail = np.array([N + p / (p - 1.0) - p / (2.0 - p) for p in ps])
        poly = np.array([ex.p_polynomial(N, p) for p in ps])
        i_tail = np.nonzero(np.diff(np.sign(tail)))[0]
        i_poly = np.nonzero(np.diff(np.sign(poly)))[0]
        same = i_tail.size == 1 and i_poly.size == 1 and i_tail[0] == i_poly[0]
        r_tail = brentq(lambda p: N + p / (p - 1.0) - p / (2.0 - p), ps[i_tail[0]], ps[i_tail[0] + 1], xtol=1e-15) if i_tail.size else float("nan")
        r_poly = brentq(lambda p: ex.p_polynomial(N, p), ps[i_poly[0]], ps[i_poly[0] + 1], xtol=1e-15) if i_poly.size else float("nan")
        err = max(abs(r_tail - pN), abs(r_poly - pN))
        worst = max(worst, err)
        all_flip &= same
        all_root &= err <= 1e-9
        flip_rows.append([N, pN, r_tail, r_poly, int(same)])

        for sign in (+1, -1):
            P = PParams(N, pN + sign * o["offset"])
            cuts = np.geomspace(o["cutoff_min"], o["cutoff_max"], o["cutoffs"])
            part = np.array([q_moment_of_F(P, c) for c in cuts])
            lead = P.tail_exponent
            for c, m in zip(cuts, part):
                cut_rows.append([N, P.p, c, m])
            tag = f"N{N}_{'above' if sign > 0 else 'below'}"
            if sign > 0:
                total = beta_profile_integral(P, 1.0, P.q)
                bounded = bool(np.all(part <= total * (1 + 1e-9)) and np.all(np.diff(part) >= -1e-12 * total))
                fit = fit_rate(cuts[-o["fit_points"]:], total - part[-o["fit_points"]:])
                res.check(f"{tag}:bounded", bounded, float(part[-1]), total, "partial moments stay below the closed form")
                res.check(f"{tag}:remainder-decay", abs(fit.slope - lead) <= 0.1 * abs(lead), fit.slope, lead,
                          "log-log slope of (total - partial) vs cutoff")
            else:
                # increments over geometric cutoffs cancel the additive constant
                k = o["fit_points"]
                fit = fit_rate(cuts[-k:], np.diff(part)[-k:])
                try:
                    q_moment_of_F(P)
                    diverges = False
                except MomentDivergence:
                    diverges = True
                grows = fit.slope > 0 and abs(fit.slope - lead) <= 0.1 * lead
                res.check(f"{tag}:unbounded", grows and diverges, fit.slope, lead,
                          "partial moment grows like cutoff**(N+q-p/(2-p)); infinite cutoff rejected")
    res.check("sign-flip-agreement", all_flip, detail="both tests flip between the same grid neighbours")
    res.check("roots-at-pN", all_root, worst, 1e-9)
    res.table("threshold_roots", ["N", "p_N", "tail_root", "poly_root", "same_grid_flip"], flip_rows)
    res.table("partial_moments", ["N", "p", "cutoff", "partial_q_moment"], cut_rows)


def _window_moments(f, q, windows):
    return [annulus_q_moment(f, a, b, q) for a, b in windows]


def s_mass_conservation(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    windows = [tuple(w) for w in o["windows"]]
    rows, mass_rows = [], []
    worst_drift = worst_change = 0.0
    for P in _case_params(cfg["params"]["cases"]):
        for name, spec in o["families"].items():
            moms, drifts = [], []
            for factor in (1.0, 2.0):
                gcfg = dict(cfg["grid"], R_max=cfg["grid"]["R_max"] * factor)
                grid = _grid_from(gcfg, P.N)
                mu, u0 = build_family(spec, P.N, grid)
                traj = evolve(u0, _scfg(cfg, P, t_end=o["t_end"], epsilon=cfg["solver"]["epsilon"],
                                               cfl_safety=cfg["solver"]["cfl_safety"], history_size=4))
                moms.append(_window_moments(traj.fields[-1], P.q, windows))
                drifts.append(traj.mass_drift())
                if factor == 1.0:
                    m0 = traj.fields[0].mass()
                    mass_rows += [[P.N, P.p, name, t, f.mass(), f.mass() / m0 - 1.0] for t, f in traj.snapshots]
            change = [abs(b / a - 1.0) if a > 0 else 0.0 for a, b in zip(*moms)]
            worst_drift = max(worst_drift, *drifts)
            worst_change = max(worst_change, *change)
            rows.append([P.N, P.p, name, drifts[0], drifts[1]] + moms[0] + change)
    res.summary.update({"max_mass_drift": worst_drift, "max_moment_change": worst_change})
    res.check("mass-drift", worst_drift <= o["max_drift"], worst_drift, o["max_drift"])
    res.check("R_max-doubling", worst_change <= o["max_change"], worst_change, o["max_change"])
    cols = ["N", "p", "family", "drift_R", "drift_2R"] + [f"moment_{a:g}_{b:g}" for a, b in windows] + [f"change_{a:g}_{b:g}" for a, b in windows]
    res.table("mass_conservation", cols, rows)
    res.table("mass_vs_time", ["N", "p", "family", "t", "mass", "relative_drift"], mass_rows)


def s_weak_convergence(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    P = PParams(cfg["params"]["N"], cfg["params"]["p"])
    grid = _grid_from(cfg["grid"], P.N)
    mu, u0 = build_family(o["family"], P.N, grid)
    tests = {"gauss": lambda r: np.exp(-r**2), "hat": lambda r: np.clip(1.0 - r / 3.0, 0.0, None)}
    ts = np.geomspace(o["t_min"], o["t_end"], o["times"])
    traj = evolve(u0, _scfg(cfg, P, t_end=o["t_end"], epsilon=cfg["solver"]["epsilon"],
                                   cfl_safety=cfg["solver"]["cfl_safety"], snapshot_times=ts, history_size=4))
    rows = []
    for t in ts:
        f = traj.field_at(t)
        w = wq_radial(u0, f, P.q)
        rows.append([t, w] + [abs(pair(f, phi) - pair(u0, phi)) for phi in tests.values()])
    arr = np.array(rows)
    mono = bool(np.all(np.diff(arr[:, 1]) > 0))
    res.check("W_q-to-0", mono and arr[0, 1] <= o["max_small_t_fraction"] * arr[-1, 1],
              float(arr[0, 1] / arr[-1, 1]), o["max_small_t_fraction"], "W_q(mu0, mu_t) decreases as t -> 0")
    pair_ok = all(arr[0, 2 + j] <= o["max_small_t_fraction"] * max(arr[-1, 2 + j], 1e-300) for j in range(len(tests)))
    res.check("pairings-to-0", pair_ok, detail="|<phi, u_t> - <phi, u_0>| shrinks with t")
    res.table("weak_convergence", ["t", "W_q"] + [f"pairing_err_{k}" for k in tests], rows)

    # mollified data approach the measure itself
    mrows = []
    fine = _grid_from(o["mollify_grid"], P.N)
    for n in o["mollify_n"]:
        f = mollify(mu, n, fine)
        exact_pairs = [sum(m * phi(np.array(r)) for r, m in mu.atoms) + (pair(mu.density, phi) if mu.density else 0.0)
                       for phi in tests.values()]
        mrows.append([n, wq_radial(f, mu, P.q)] + [abs(pair(f, phi) - e) for phi, e in zip(tests.values(), exact_pairs)])
    marr = np.array(mrows)
    res.check("mollifier-convergence", bool(np.all(np.diff(marr[:, 1]) < 0)), marr[:, 1].tolist(),
              detail="W_q(mollify(mu, n), mu) decreases in n")
    res.table("mollifier_convergence", ["n", "W_q"] + [f"pairing_err_{k}" for k in tests], mrows)


def _trajectory_for(spec, P, grid, cfg, t_end, history):
    """Barenblatt (exact start at ``t0``) or measure-based trajectory."""
    if spec["kind"] == "barenblatt":
        sol = BarenblattSolution.from_mass(P, float(spec["mass"]))
        u0 = sol.field(grid, float(spec["t0"]))
        t0 = float(spec["t0"])
        eps = cfg["solver"]["epsilon_rel"] * sol.M / grid.R_max ** (P.N + 1)
        mu = from_field(u0)
    else:
        sol = None
        _, u0 = build_family(spec, P.N, grid)
        mu = from_field(u0)
        t0 = 0.0
        eps = cfg["solver"]["epsilon_rel"] * u0.mass() / grid.R_max ** (P.N + 1)
    span = float(t_end)
    ts = t0 + span * np.linspace(0.2, 1.0, 5)
    traj = evolve(u0, _scfg(cfg, P, t_start=t0, t_end=t0 + span, epsilon=eps, cfl_safety=cfg["solver"]["cfl_safety"],
                                   snapshot_times=ts, history_size=history))
    return sol, mu, traj, ts


def s_gradient_annulus(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    P = PParams(cfg["params"]["N"], cfg["params"]["p"])
    grid = _grid_from(cfg["grid"], P.N)
    rows, fitted, worst = [], {}, 0.0
    for name, spec in o["families"].items():
        sol, mu, traj, ts = _trajectory_for(spec, P, grid, cfg, o["span"], o["history"])
        rep = EstimateReport()
        for r, R in o["windows"]:
            for t in ts:
                lhs = gradient_annulus_lhs(traj, r, R, t)
                rhs = gradient_annulus_rhs(mu, r, R, t - traj.t_start, P)
                exact = gradient_annulus_exact(sol, r, R, traj.t_start, t) if sol is not None else float("nan")
                rel = abs(lhs / exact - 1.0) if sol is not None else float("nan")
                if sol is not None:
                    worst = max(worst, rel)
                rep.add({"r": r, "R": R, "t": t}, lhs, rhs)
                rows.append([name, r, R, t, lhs, exact, rel, rhs])
        fitted[name] = rep.fitted_C
    spread = max(fitted.values()) / min(fitted.values())
    res.summary.update({"fitted_C": fitted, "spread": spread, "worst_closed_form_error": worst})
    res.check("closed-form-agreement", worst <= o["max_rel_error"], worst, o["max_rel_error"])
    res.check("fitted-C-spread", spread < o["max_spread"], spread, o["max_spread"])
    res.table("gradient_annulus", ["family", "r", "R", "t", "lhs", "closed_form", "rel_error", "rhs_unit"], rows)


def s_bb_action(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    P = PParams(cfg["params"]["N"], cfg["params"]["p"])
    grid = _grid_from(cfg["grid"], P.N)
    rows, fitted, worst, worst_sens = [], {}, 0.0, 0.0
    for name, spec in o["families"].items():
        sol, mu, traj, ts = _trajectory_for(spec, P, grid, cfg, o["span"], o["history"])
        rep = EstimateReport()
        for t in ts:
            act = bb_action(traj, t)
            rhs = bb_action_rhs(mu, t - traj.t_start, P)
            exact = bb_action_exact(sol, traj.t_start, t) if sol is not None else float("nan")
            rel = abs(act.value / exact - 1.0) if sol is not None else float("nan")
            if sol is not None:
                worst = max(worst, rel)
            worst_sens = max(worst_sens, act.sensitivity)
            rep.add({"t": t}, act.value, rhs)
            rows.append([name, t, act.value, act.value_floor_tenth, exact, rel, rhs])
        fitted[name] = rep.fitted_C
    spread = max(fitted.values()) / min(fitted.values())
    res.summary.update({"fitted_C": fitted, "spread": spread, "worst_closed_form_error": worst,
                        "worst_floor_sensitivity": worst_sens})
    res.check("closed-form-agreement", worst <= o["max_rel_error"], worst, o["max_rel_error"])
    res.check("floor-sensitivity", worst_sens <= o["max_floor_sensitivity"], worst_sens, o["max_floor_sensitivity"])
    res.check("fitted-C-spread", spread < o["max_spread"], spread, o["max_spread"])
    res.table("bb_action", ["family", "t", "action", "action_floor_div10", "closed_form", "rel_error", "rhs_unit"], rows)


def _random_atoms(rng, max_units):
    n = int(rng.integers(1, 12))
    units = rng.integers(1, 5, n)
    while units.sum() > max_units:
        units = units[:-1]
    radii = rng.uniform(0.0, 5.0, units.size)
    return list(zip(radii.tolist(), units.tolist()))


def oracle_pairs(rng, count, max_units=48):
    """Seeded random equal-mass atomic radial pairs (masses in integer units)."""
    out = []
    while len(out) < count:
        a = _random_atoms(rng, max_units)
        b = _random_atoms(rng, max_units)
        ua, ub = sum(m for _, m in a), sum(m for _, m in b)
        if ua < ub:
            a.append((float(rng.uniform(0, 5)), ub - ua))
        elif ub < ua:
            b.append((float(rng.uniform(0, 5)), ua - ub))
        if sum(m for _, m in a) > 64:
            continue
        unit = float(rng.choice([0.1, 0.25, 1.0]))
        out.append(([(r, m * unit) for r, m in a], [(r, m * unit) for r, m in b], unit))
    return out


def s_wasserstein_rate(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    # exact assignment oracle vs quantile coupling
    started = time.perf_counter()
    worst = 0.0
    orow = []
    qs, dims = o["oracle_q"], o["oracle_dims"]
    for i, (a, b, unit) in enumerate(oracle_pairs(rng, o["oracle_pairs"])):
        q, N = qs[i % len(qs)], dims[(i // len(qs)) % len(dims)]
        exact = exact_ot_discrete(a, b, q, N, unit)
        quant = wq_radial(RadonMeasure(N, a), RadonMeasure(N, b), q)
        rel = abs(quant - exact) / exact if exact > 0 else abs(quant)
        worst = max(worst, rel)
        orow.append([i, N, q, len(a), len(b), exact, quant, rel])
    res.timings["oracle"] = time.perf_counter() - started
    res.check("oracle-agreement", worst <= o["oracle_tol"], worst, o["oracle_tol"], f"{len(orow)} seeded pairs")
    if o.get("oracle_max_runtime_s"):
        res.check("oracle-runtime", res.timings["oracle"] <= o["oracle_max_runtime_s"], None, o["oracle_max_runtime_s"])
    res.table("oracle", ["pair", "N", "q", "atoms_a", "atoms_b", "exact_assignment", "quantile", "rel_diff"], orow)

    # (a) Dirac data: W_q^q(delta_0, U(t)) = t**(q/k) * M_q(F)
    arows, worst_a, ineq = [], 0.0, True
    for case in o["analytic_cases"]:
        P = _case_params([case])[0]
        sol = BarenblattSolution.from_mass(P, 1.0)
        grid = _grid_from(o["analytic_grid"], P.N)
        ts = np.geomspace(o["analytic_t"][0], o["analytic_t"][1], o["analytic_times"])
        wq = [wq_to_dirac(sol.field(grid, t), P.q) ** P.q for t in ts]
        fit = fit_rate(ts, wq)
        target = P.q / P.k
        err = abs(fit.slope / target - 1.0)
        worst_a = max(worst_a, err)
        arows.append([P.N, P.p, target, fit.slope, err])
    for N in o["threshold_dims"]:
        for p in np.linspace(ex.critical_pN(N), 2.0, 52)[1:-1]:
            P = PParams(N, float(p))
            ineq &= P.q / P.k > P.q - 1.0
    res.check("dirac-slope", worst_a <= o["analytic_slope_tol"], worst_a, o["analytic_slope_tol"], "relative slope error vs q/k")
    res.check("q/k-exceeds-q-1", ineq, detail="checked on a p grid in (p_N, 2) for each dimension")
    res.table("dirac_rate", ["N", "p", "q_over_k", "fitted_slope", "rel_error"], arows)

    # (b, c) computed instances and the dynamic bound
    crows, worst_b, bb_ok, min_margin = [], float("inf"), True, float("inf")
    started = time.perf_counter()
    for case in o["computed_cases"]:
        P = _case_params([case])[0]
        grid = _grid_from(cfg["grid"], P.N)
        t1 = o["computed_t_end"]
        ts = np.geomspace(t1 / 10 ** o["decades"], t1, o["times"])
        for name, spec in o["families"].items():
            mu, u0 = build_family(spec, P.N, grid)
            traj = evolve(u0, _scfg(cfg, P, t_end=t1, epsilon=cfg["solver"]["epsilon"],
                                           cfl_safety=cfg["solver"]["cfl_safety"], snapshot_times=ts,
                                           history_size=o["history"]))
            wq, bound = [], []
            for t in ts:
                w = wq_radial(u0, traj.field_at(t), P.q) ** P.q
                b = bb_upper_bound(traj, t, P)
                wq.append(w)
                bound.append(b)
                crows.append([P.N, P.p, name, t, w, b, b / w])
            fit = fit_rate(ts, wq)
            worst_b = min(worst_b, fit.slope - (P.q - 1.0))
            margin = min(b / w for b, w in zip(bound, wq))
            min_margin = min(min_margin, margin)
            bb_ok &= margin >= 1.0
            res.summary[f"N{P.N}_p{P.p:.6g}_{name}"] = {"slope": fit.slope, "q_minus_1": P.q - 1.0, "min_bound_ratio": margin}
    res.timings["computed"] = time.perf_counter() - started
    if crows:
        res.check("computed-slope", worst_b >= -o["computed_slope_tol"], worst_b, -o["computed_slope_tol"],
                  "min over runs of fitted slope - (q-1)")
        res.check("dynamic-bound-dominates", bb_ok, min_margin, 1.0, "min over samples of bound / W_q^q")
    res.table("wasserstein_rate", ["N", "p", "family", "t", "W_q^q", "bb_bound", "bound_ratio"], crows)


def s_junning(cfg, rng, res: ScenarioResult):
    o = cfg["options"]
    P = PParams(cfg["params"]["N"], cfg["params"]["p"])
    sol = BarenblattSolution.from_mass(P, o["mass"])
    grid = _grid_from(cfg["grid"], P.N)
    mu = dirac(o["mass"], P.N)
    rows, ratios = [], []
    for t in np.geomspace(o["sup_t"][0], o["sup_t"][1], o["times"]):
        f = sol.field(grid, t)
        for R in o["radii"]:
            inside = grid.centers <= R
            measured = float(f.values[inside].max())
            bound = junning_sup_rhs(mu, R, t, P)
            ratios.append(measured / bound)
            rows.append(["sup", t, R, measured, bound, measured / bound])
    worst = float(np.max(ratios))
    res.check("sup-ratio-bounded", worst <= o["max_ratio"], worst, o["max_ratio"],
              "max over t and R of measured sup / bound, Barenblatt data")

    mu_s, u0 = build_family(o["family"], P.N, grid)
    ts = np.geomspace(o["l1_t"][0], o["l1_t"][1], o["times"])
    traj = evolve(u0, _scfg(cfg, P, t_end=float(ts[-1]), epsilon=cfg["solver"]["epsilon"],
                                   cfl_safety=cfg["solver"]["cfl_safety"], snapshot_times=ts, history_size=4))
    lhs, rhs = [], []
    for t in ts:
        for R in o["radii"]:
            val = max(annulus_q_moment(f_, 0.0, R, 0.0) for tt, f_ in traj.snapshots if tt <= t)
            b = junning_l1_rhs(mu_s, R, t, P)
            lhs.append(val)
            rhs.append(b)
            rows.append(["l1", t, R, val, b, val / b])
    c = fit_constant(lhs, rhs)
    res.summary.update({"sup_ratio_max": worst, "l1_fitted_C": c})
    res.check("l1-constant", c <= 1.0 + 1e-9, c, 1.0, "mass is conserved, so C = 1 suffices")
    res.table("junning", ["bound", "t", "R", "measured", "bound_value", "ratio"], rows)


# registry and defaults ------------------------------------------------------

NEAR_ORIGIN = {
    "dirac": {"kind": "dirac", "mass": 1.0, "n": 50},
    "mixed": {"kind": "measure", "atoms": [[0.01, 0.6]], "uniform": {"radius": 0.012, "mass": 1.4}, "n": 100},
    "bump": {"kind": "bump", "radius": 0.02, "mass": 0.5},
}

_BASE = {"seed": 0, "params": {}, "grid": {}, "solver": {"cfl_safety": 0.9}, "measure": None, "options": {}}

DEFAULTS = {
    "exponents-selfcheck": {
        "anchor": "critical exponents p_c, p(N), p_N",
        "smoke": {"options": {"dims": [2, 3, 4, 5, 6], "samples": 50}},
        "full": {"options": {"dims": [2, 3, 4, 5, 6, 7, 8, 9, 10], "samples": 2000}},
    },
    "barenblatt-accuracy": {
        "anchor": "source-type solution",
        "smoke": {"params": {"N": 2, "p": 1.7}, "grid": {"R_max": 160.0, "core": 10.0},
                  "solver": {"epsilon_rel": 1e-5},
                  "options": {"mass": 1.0, "t0": 0.5, "t1": 1.0, "cells": [256, 512], "max_l1_rel": 0.02,
                              "min_ratio": 1.7, "max_runtime_s": None}},
        "full": {"options": {"cells": [2048, 4096], "max_runtime_s": 300.0}},
    },
    "moment-estimate": {
        "anchor": "q-moment estimate on annuli",
        "smoke": {"params": {"cases": [{"N": 2, "p": 1.7, "epsilon": 1e-16}]},
                  "grid": {"R_max": 16.0, "cells": 640, "core": 0.25},
                  "options": {"r": [0.25, 0.5, 1.0], "R": [2.0, 4.0], "times": 8, "decades": 1.5,
                              "t_end_length": 0.002, "families": NEAR_ORIGIN, "control": BROAD_MIXED,
                              "max_spread": 10.0, "slope_tol": 0.15, "max_runtime_s": None}},
        "full": {"params": {"cases": [{"N": 2, "p": 1.7, "epsilon": 1e-16}, {"N": 3, "p": 1.8, "epsilon": 1e-28}]},
                 "options": {"max_runtime_s": 900.0}},
    },
    "uniform-integrability": {
        "anchor": "uniform integrability of |x|^q tails",
        "smoke": {"params": {"cases": [{"N": 2, "p": 1.8}]}, "grid": {"R_max": 32.0, "core": 2.0, "h0": 0.04},
                  "solver": {"epsilon": 1e-8},
                  "options": {"t_end": 0.3, "radii": [1.0, 2.0, 4.0, 8.0], "max_ratio": 0.05,
                              "families": {"dirac": {"kind": "dirac", "mass": 1.0, "n": 5}, "mixed": dict(BROAD_MIXED, n=5)}}},
        "full": {"params": {"cases": [{"N": 2, "p": 1.8}, {"N": 3, "p": 1.85}]}, "grid": {"h0": 0.02},
                 "options": {"families": {"dirac": {"kind": "dirac", "mass": 1.0, "n": 10}, "mixed": BROAD_MIXED}}},
    },
    "moment-threshold": {
        "anchor": "finite q-moment iff p > p_N",
        "smoke": {"options": {"dims": [2, 3], "step": 1e-3, "offset": 0.01, "cutoff_min": 1.0, "cutoff_max": 1e6,
                              "cutoffs": 13, "fit_points": 5}},
        "full": {"options": {"dims": [2, 3, 4, 5, 6]}},
    },
    "mass-conservation": {
        "anchor": "conservation of mass",
        "smoke": {"params": {"cases": [{"N": 2, "p": 1.7}]}, "grid": {"R_max": 16.0, "core": 2.0, "h0": 0.02},
                  "solver": {"epsilon": 1e-6},
                  "options": {"t_end": 0.1, "windows": [[0.25, 1.0], [0.5, 2.0], [1.0, 4.0], [0.0, 2.0]],
                              "max_drift": 1e-12, "max_change": 0.005,
                              "families": {"dirac": {"kind": "dirac", "mass": 1.0, "n": 10}, "mixed": BROAD_MIXED}}},
        "full": {"params": {"cases": [{"N": N, "p": p} for N in (2, 3) for p in (1.55, 1.7, 1.85)]}},
    },
    "weak-convergence": {
        "anchor": "weak convergence to the initial data",
        "smoke": {"params": {"N": 2, "p": 1.75}, "grid": {"R_max": 16.0, "core": 2.0, "h0": 0.02},
                  "solver": {"epsilon": 1e-6},
                  "options": {"family": BROAD_MIXED, "t_min": 1e-4, "t_end": 0.1, "times": 7,
                              "max_small_t_fraction": 0.05, "mollify_n": [4, 8, 16, 32],
                              "mollify_grid": {"R_max": 8.0, "cells": 4096}}},
        "full": {"options": {"mollify_n": [4, 8, 16, 32, 64, 128], "mollify_grid": {"R_max": 8.0, "cells": 16384}}},
    },
    "gradient-annulus": {
        "anchor": "annular gradient estimate",
        "smoke": {"params": {"N": 2, "p": 1.7}, "grid": {"R_max": 160.0, "cells": 512, "core": 10.0},
                  "solver": {"epsilon_rel": 1e-5},
                  "options": {"span": 0.5, "history": 400, "windows": [[0.5, 2.0], [1.0, 4.0]],
                              "max_rel_error": 0.05, "max_spread": 10.0,
                              "families": {"barenblatt_M1": {"kind": "barenblatt", "mass": 1.0, "t0": 0.5},
                                           "barenblatt_M4": {"kind": "barenblatt", "mass": 4.0, "t0": 0.5},
                                           "mixed": dict(BROAD_MIXED, n=3)}}},
        "full": {"grid": {"cells": 1024}, "options": {"history": 1500}},
    },
    "bb-action": {
        "anchor": "time-integrated action bound",
        "smoke": {"params": {"N": 2, "p": 1.7}, "grid": {"R_max": 160.0, "cells": 512, "core": 10.0},
                  "solver": {"epsilon_rel": 1e-5},
                  "options": {"span": 0.5, "history": 400, "max_rel_error": 0.05, "max_floor_sensitivity": 0.01,
                              "max_spread": 10.0,
                              "families": {"barenblatt_M1": {"kind": "barenblatt", "mass": 1.0, "t0": 0.5},
                                           "barenblatt_M4": {"kind": "barenblatt", "mass": 4.0, "t0": 0.5},
                                           "mixed": dict(BROAD_MIXED, n=3)}}},
        "full": {"grid": {"cells": 1024}, "options": {"history": 1500}},
    },
    "wasserstein-rate": {
        "anchor": "Wasserstein rate W_q^q <= C t^(q-1)",
        "smoke": {"grid": {"R_max": 32.0, "cells": 512, "core": 2.0}, "solver": {"epsilon": 1e-8},
                  "options": {"oracle_pairs": 30, "oracle_q": [2.5, 3.0, 4.0], "oracle_dims": [2, 3],
                              "oracle_tol": 1e-9, "oracle_max_runtime_s": None,
                              "analytic_cases": [{"N": 2, "p_above_pN": 0.05}, {"N": 2, "p": 1.85}],
                              "analytic_grid": {"R_max": 1e4, "cells": 2048, "core": 1.0},
                              "analytic_t": [0.1, 1.0], "analytic_times": 6, "analytic_slope_tol": 0.01,
                              "threshold_dims": [2, 3, 4, 5, 6],
                              "computed_cases": [{"N": 2, "p": 1.85}], "computed_t_end": 0.3, "decades": 1.5,
                              "times": 8, "history": 1500, "computed_slope_tol": 0.1,
                              "families": {"bump": {"kind": "bump", "radius": 1.0, "mass": 1.0}}}},
        "full": {"grid": {"cells": 1024},
                 "options": {"oracle_pairs": 200, "oracle_max_runtime_s": 120.0,
                             "analytic_cases": [{"N": 2, "p_above_pN": 0.05}, {"N": 2, "p": 1.75}, {"N": 2, "p": 1.85},
                                                {"N": 3, "p_above_pN": 0.05}, {"N": 3, "p": 1.85}],
                             "computed_cases": [{"N": 2, "p_above_pN": 0.05}, {"N": 2, "p": 1.85}],
                             "times": 10, "history": 3000,
                             "families": {"dirac": {"kind": "dirac", "mass": 1.0, "n": 4},
                                          "bump": {"kind": "bump", "radius": 1.0, "mass": 1.0},
                                          "mixed": BROAD_MIXED}}},
    },
    "junning-diagnostics": {
        "anchor": "a priori L1 and sup bounds",
        "smoke": {"params": {"N": 2, "p": 1.7}, "grid": {"R_max": 64.0, "cells": 512, "core": 2.0},
                  "solver": {"epsilon": 1e-6},
                  "options": {"mass": 1.0, "sup_t": [0.1, 10.0], "l1_t": [0.01, 0.3], "times": 6,
                              "radii": [1.0, 2.0, 4.0], "max_ratio": 1.0,
                              "family": {"kind": "dirac", "mass": 1.0, "n": 10}}},
        "full": {"grid": {"cells": 1024}, "options": {"times": 12}},
    },
}

RUNNERS = {
    "exponents-selfcheck": s_exponents,
    "barenblatt-accuracy": s_barenblatt_accuracy,
    "moment-estimate": s_moment_estimate,
    "uniform-integrability": s_uniform_integrability,
    "moment-threshold": s_moment_threshold,
    "mass-conservation": s_mass_conservation,
    "weak-convergence": s_weak_convergence,
    "gradient-annulus": s_gradient_annulus,
    "bb-action": s_bb_action,
    "wasserstein-rate": s_wasserstein_rate,
    "junning-diagnostics": s_junning,
}


def scenario_names():
    return list(RUNNERS)


def materialize(config: dict, tier: str | None = None) -> dict:
    """Defaults for the tier, deep-merged with ``config``; raises :class:`ConfigError`."""
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(config) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    name = config.get("scenario")
    if name not in RUNNERS:
        raise ConfigError(f"unknown scenario {name!r}; choose from {scenario_names()}")
    tier = tier or config.get("tier", "smoke")
    if tier not in TIERS:
        raise ConfigError(f"tier must be one of {TIERS}, got {tier!r}")
    d = DEFAULTS[name]
    merged = _deep_merge(_BASE, d["smoke"])
    if tier == "full":
        merged = _deep_merge(merged, d["full"])
    user = {k: v for k, v in config.items() if k not in ("scenario", "tier", "output_dir")}
    merged = _deep_merge(merged, user)
    merged["scenario"] = name
    merged["tier"] = tier
    _validate(merged)
    return merged


def _validate(cfg: dict):
    try:
        seed = cfg["seed"]
        if int(seed) != seed or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        params = cfg["params"]
        if "cases" in params:
            _case_params(params["cases"])
        elif params:
            PParams(int(params["N"]), float(params["p"]))
        g = cfg["grid"]
        if g and ("cells" in g or "h0" in g):
            N = int(params.get("N", 2)) if "cases" not in params else int(params["cases"][0]["N"])
            _grid_from(g, N)
        s = cfg["solver"]
        if not 0.0 < float(s.get("cfl_safety", 0.9)) <= 1.0:
            raise ConfigError("solver.cfl_safety must lie in (0, 1]")
        if "max_steps" in s and not (int(s["max_steps"]) == s["max_steps"] and s["max_steps"] >= 1):
            raise ConfigError("solver.max_steps must be a positive integer")
        for key in ("epsilon", "epsilon_rel"):
            if key in s and not float(s[key]) > 0.0:
                raise ConfigError(f"solver.{key} must be positive")
        if cfg.get("measure"):
            spec = dict(cfg["measure"])
            if "atoms" not in spec and not spec.get("density_csv"):
                raise ConfigError("measure needs 'atoms' and/or 'density_csv'")
            N = int(params["cases"][0]["N"]) if "cases" in params else int(params.get("N", 2))
            density = read_field(spec["density_csv"]) if spec.get("density_csv") else None
            RadonMeasure(N, tuple(tuple(a) for a in spec.get("atoms", [])), density)
            if int(spec.get("n", 10)) < 1:
                raise ConfigError("measure.n must be a positive integer")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc


def _apply_measure(cfg: dict):
    """A user ``measure`` section becomes an extra initial-data family where families are used."""
    spec = cfg.get("measure")
    if not spec:
        return
    fam = {"kind": "measure", "atoms": spec.get("atoms", []), "n": int(spec.get("n", 10))}
    if spec.get("density_csv"):
        fam["density_csv"] = spec["density_csv"]
    opts = cfg["options"]
    if "families" in opts:
        opts["families"] = dict(opts["families"], user=fam)
    elif "family" in opts:
        opts["family"] = fam


def run_scenario(cfg: dict) -> ScenarioResult:
    """Run a materialised configuration.  Solver failures propagate as :class:`SolverError`."""
    cfg = copy.deepcopy(cfg)
    _apply_measure(cfg)
    rng = np.random.default_rng(int(cfg["seed"]))
    res = ScenarioResult()
    started = time.perf_counter()
    RUNNERS[cfg["scenario"]](cfg, rng, res)
    res.timings["total"] = time.perf_counter() - started
    return res


__all__ = ["ConfigError", "ScenarioResult", "Criterion", "SolverError", "materialize", "run_scenario",
           "scenario_names", "DEFAULTS", "build_family", "oracle_pairs"]
