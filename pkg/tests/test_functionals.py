import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plaplace.barenblatt import BarenblattSolution, bb_action_exact, gradient_annulus_exact
from plaplace.exponents import PParams
from plaplace.functionals import (
    EstimateReport, action_density_exact_ratio, bb_action, bb_action_rhs, bb_action_t_exponent, fit_constant,
    fit_rate, gradient_annulus_lhs, gradient_annulus_rhs, junning_l1_rhs, junning_sup_rhs, moment_lhs,
    moment_rhs, moment_t_exponent, self_similar_action_exponent, tail_sup,
)
from plaplace.measures import RadonMeasure, dirac
from plaplace.radial import annulus_q_moment, constant, make_grid
from plaplace.solver import SolverConfig, evolve

P17 = PParams(2, 1.7)


@pytest.fixture(scope="module")
def bb_traj():
    sol = BarenblattSolution.from_mass(P17, 1.0)
    g = make_grid(160.0, 1024, N=2, core=10.0)
    cfg = SolverConfig(P17, t_start=0.5, t_end=1.0, epsilon=1e-5 / 160.0**3, cfl_safety=0.9,
                       snapshot_times=[0.75, 1.0], history_size=1500)
    return sol, evolve(sol.field(g, 0.5), cfg)


def test_fit_constant_examples():
    assert fit_constant([1.0], [1.0]) == 1.0
    assert fit_constant([2.0], [1.0]) == 2.0
    assert fit_constant([0.5, 3.0, 1.0], [1.0, 1.0, 1.0]) == 3.0
    with pytest.raises(ValueError):
        fit_constant([1.0], [0.0])
    with pytest.raises(ValueError):
        fit_constant([], [])


def test_fit_rate_examples():
    t = np.geomspace(0.01, 1.0, 9)
    assert fit_rate(t, t**2).slope == pytest.approx(2.0, abs=1e-12)
    f = fit_rate(t, 5 * t**0.5)
    assert f.slope == pytest.approx(0.5, abs=1e-12) and f.intercept == pytest.approx(math.log(5), abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate(t[:3], t[:3])
    with pytest.raises(ValueError):
        fit_rate(np.linspace(1, 2, 5), np.ones(5))


@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(1e-3, 1e3)), min_size=1, max_size=20))
def test_fitted_constant_dominates(pairs):
    rep = EstimateReport()
    for i, (l, r) in enumerate(pairs):
        rep.add({"i": i}, l, r)
    assert np.all(rep.ratios() <= rep.fitted_C * (1 + 1e-15))
    assert len(rep.to_dict()["samples"]) == len(pairs)


def test_moment_rhs_structure():
    mu = dirac(1.0)
    a = moment_rhs(mu, 0.5, 2.0, 1e-30, P17)
    assert a < 1e-40
    t1 = moment_rhs(mu, 0.5, 2.0, 1.0, P17)
    t2 = moment_rhs(mu, 0.5, 2.0, 2.0, P17)
    assert t2 / t1 == pytest.approx(2 ** moment_t_exponent(P17), rel=1e-13)
    rs = [moment_rhs(mu, r, 4.0, 1.0, P17) for r in (0.25, 0.5, 1.0)]
    assert rs[0] > rs[1] > rs[2]
    atom = RadonMeasure(2, ((1.0, 1.0),))
    assert moment_rhs(atom, 1.0, 2.0, 1e-300, P17) == pytest.approx(1.0)


def test_junning_bounds():
    P = PParams(2, 1.5)
    assert P.k / (2 - P.p) == pytest.approx(1.0)
    assert junning_l1_rhs(dirac(3.0), 1e6, 1.0, P17) == pytest.approx(3.0, rel=1e-6)
    t = 0.5
    s = junning_sup_rhs(dirac(2.0), 1.0, t, P17)
    assert s == pytest.approx(t ** (-2 / 1.1) * 2.0 ** (1.7 / 1.1) + t ** (1 / 0.3), rel=1e-13)


def test_moment_lhs_is_running_max():
    g = make_grid(4.0, 40, N=2)
    f1, f2 = constant(g, 1.0), constant(g, 0.5)
    traj = SimpleNamespace(times=[0.0, 1.0], fields=[f1, f2], params=P17, grid=g)
    m1 = annulus_q_moment(f1, 0.5, 2.0, P17.q)
    assert moment_lhs(traj, 0.5, 2.0, 1.0) == pytest.approx(m1)
    single = SimpleNamespace(times=[0.0], fields=[f2], params=P17, grid=g)
    assert moment_lhs(single, 0.5, 2.0, 0.0) == pytest.approx(annulus_q_moment(f2, 0.5, 2.0, P17.q))
    assert moment_lhs(traj, 0.5, 3.0, 1.0) > moment_lhs(traj, 0.5, 2.0, 1.0)
    assert tail_sup(traj, 4.0) == 0.0


def test_gradient_rhs_pieces():
    poly = P17.poly
    assert poly / (P17.p * (P17.p - 1)) == pytest.approx(0.26 / 1.19, rel=1e-12)
    assert gradient_annulus_rhs(dirac(1.0), 0.5, 2.0, 1.0, P17) > 0
    # zero moment on [r/4, 4R] kills the t**(1/p) term
    t1 = gradient_annulus_rhs(dirac(1.0), 0.5, 2.0, 1.0, P17)
    t2 = gradient_annulus_rhs(dirac(1.0), 0.5, 2.0, 2.0, P17)
    assert t2 / t1 == pytest.approx(2 ** (1 / 0.3), rel=1e-12)


def test_action_exponents():
    assert bb_action_t_exponent(P17) == pytest.approx(0.4 / (0.7 * 0.3), rel=1e-14)
    assert bb_action_t_exponent(P17) == pytest.approx(1.9047619047619, rel=1e-12)
    assert self_similar_action_exponent(P17) == pytest.approx(2 * 0.3 / (0.7 * 1.1), rel=1e-14)


def test_action_rhs_dirac():
    P = PParams(2, 1.8)
    e = 2 - 1 / 0.8
    rhs = bb_action_rhs(dirac(1.0), 1e-300, P)
    assert rhs == pytest.approx(1.0, rel=1e-12)
    ratio = (bb_action_rhs(dirac(2.0), 1e-300, P)) / rhs
    assert ratio == pytest.approx(2**e, rel=1e-12)
    with pytest.raises(ValueError):
        bb_action_rhs(dirac(1.0), 1.0, PParams(2, 1.6))


@pytest.mark.parametrize("N,p", [(2, 1.7), (2, 1.85), (3, 1.8)])
def test_source_solution_action_identities(N, p):
    # t^(q-1) * action(0, t) = ratio * W_q^q(delta_0, U(t)) and action(0, t) ~ t^(N(2-p)/((p-1)k))
    P = PParams(N, p)
    sol = BarenblattSolution.from_mass(P, 1.0)
    a1, a2 = bb_action_exact(sol, 0.0, 1.0), bb_action_exact(sol, 0.0, 2.0)
    assert math.log(a2 / a1) / math.log(2) == pytest.approx(self_similar_action_exponent(P), rel=1e-8)
    assert a1 / sol.q_moment() == pytest.approx(action_density_exact_ratio(P), rel=1e-8)
    assert action_density_exact_ratio(P) >= 1.0


def test_gradient_lhs_matches_closed_form(bb_traj):
    sol, traj = bb_traj
    for r, R in ((0.5, 2.0), (1.0, 4.0)):
        got = gradient_annulus_lhs(traj, r, R, 1.0)
        assert got == pytest.approx(gradient_annulus_exact(sol, r, R, 0.5, 1.0), rel=0.02)


def test_action_matches_closed_form(bb_traj):
    sol, traj = bb_traj
    act = bb_action(traj, 1.0)
    assert act.value == pytest.approx(bb_action_exact(sol, 0.5, 1.0), rel=0.05)
    assert act.sensitivity < 0.01


def test_zero_and_constant_trajectories():
    g = make_grid(2.0, 32, N=2)
    cfg = SolverConfig(PParams(2, 1.8), t_end=0.01, epsilon=1e-3)
    traj = evolve(constant(g, 1.0), cfg)
    assert gradient_annulus_lhs(traj, 0.5, 1.5, 0.01) == 0.0
    assert bb_action(traj, 0.01).value == 0.0
