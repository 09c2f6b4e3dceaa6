import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plaplace.barenblatt import BarenblattSolution
from plaplace.exponents import PParams
from plaplace.measures import RadonMeasure, dirac
from plaplace.radial import constant, make_grid
from plaplace.solver import SolverConfig, evolve
from plaplace.functionals import fit_rate
from plaplace.wasserstein import bb_upper_bound, exact_ot_discrete, radial_cdf, wq_radial, wq_to_dirac

atoms = st.lists(st.tuples(st.floats(0.0, 5.0), st.integers(1, 4)), min_size=1, max_size=8)


def _balance(a, b):
    ua, ub = sum(m for _, m in a), sum(m for _, m in b)
    if ua < ub:
        a = a + [(1.0, ub - ua)]
    elif ub < ua:
        b = b + [(1.0, ua - ub)]
    return a, b


def test_cdf_examples():
    c = radial_cdf(dirac(1.0))
    assert c(0.0) == 1.0 and c(5.0) == 1.0
    disc = radial_cdf(RadonMeasure(2, (), constant(make_grid(1.0, 8, N=2), 1.0 / math.pi)))
    r = np.linspace(0, 1, 11)
    assert np.allclose(disc(r), r**2, atol=1e-14)
    mix = radial_cdf(RadonMeasure(2, ((0.5, 1.0),), constant(make_grid(1.0, 8, N=2), 1.0 / math.pi)))
    assert mix(0.49) == pytest.approx(0.49**2) and mix(0.5) == pytest.approx(1.25)
    assert np.all(np.diff(mix(np.linspace(0, 2, 50))) >= 0)


def test_distance_examples():
    mu = RadonMeasure(3, ((2.0, 1.0),))
    assert wq_radial(mu, mu, 3.0) == 0.0
    assert wq_radial(RadonMeasure(3, ((1.0, 1.0),)), RadonMeasure(3, ((3.5, 1.0),)), 2.5) == pytest.approx(2.5)
    assert wq_to_dirac(dirac(1.0), 3.0) == 0.0
    assert wq_to_dirac(RadonMeasure(2, ((3.0, 1.0),)), 2.0) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        wq_radial(dirac(1.0), dirac(2.0), 2.0)
    with pytest.raises(ValueError):
        wq_radial(dirac(1.0), dirac(1.0), 1.0)


def test_uniform_disc_to_dirac():
    f = constant(make_grid(1.0, 16, N=2), 1.0 / math.pi)
    q = 3.0
    assert wq_radial(f, dirac(1.0), q) == pytest.approx((2 / (2 + q)) ** (1 / q), rel=1e-12)


def test_assignment_examples():
    a = [(1.0, 1.0), (3.0, 1.0)]
    b = [(2.0, 1.0), (4.0, 1.0)]
    mono = (2 * 1.0) ** (1 / 2.0)
    assert exact_ot_discrete(a, b, 2.0, 2) == pytest.approx(mono)
    assert exact_ot_discrete(a, a, 3.0, 3) == 0.0
    with pytest.raises(ValueError):
        exact_ot_discrete([(0.0, 1.0)] * 65, [(0.0, 65.0)], 2.0, 2)


def test_32_atoms_per_side():
    rng = np.random.default_rng(7)
    a = list(zip(rng.uniform(0, 4, 32).tolist(), [0.5] * 32))
    b = list(zip(rng.uniform(0, 4, 32).tolist(), [0.5] * 32))
    for N, q in ((2, 2.5), (3, 4.0)):
        exact = exact_ot_discrete(a, b, q, N)
        assert wq_radial(RadonMeasure(N, a), RadonMeasure(N, b), q) == pytest.approx(exact, rel=1e-9)


@given(atoms, atoms, st.sampled_from([2.5, 3.0, 4.0]), st.sampled_from([2, 3]))
def test_matches_assignment(a, b, q, N):
    a, b = _balance(a, b)
    exact = exact_ot_discrete(a, b, q, N)
    quant = wq_radial(RadonMeasure(N, a), RadonMeasure(N, b), q)
    assert quant == pytest.approx(exact, rel=1e-9, abs=1e-12)


@given(atoms, atoms, atoms, st.sampled_from([2.0, 3.0]))
def test_metric_axioms(a, b, c, q):
    tot = max(sum(m for _, m in x) for x in (a, b, c))
    fill = lambda x: x + [(2.0, tot - sum(m for _, m in x))] if sum(m for _, m in x) < tot else x
    A, B, C = (RadonMeasure(2, fill(x)) for x in (a, b, c))
    ab, ba = wq_radial(A, B, q), wq_radial(B, A, q)
    assert ab == pytest.approx(ba, rel=1e-12, abs=1e-14)
    assert ab <= wq_radial(A, C, q) + wq_radial(C, B, q) + 1e-9


@pytest.mark.parametrize("N,p", [(2, 1.75), (3, 1.85)])
def test_barenblatt_dirac_scaling(N, p):
    P = PParams(N, p)
    sol = BarenblattSolution.from_mass(P, 1.0)
    g = make_grid(1e4, 2048, N=N, core=1.0)
    for t in (0.2, 1.0):
        w = wq_to_dirac(sol.field(g, t), P.q)
        assert w == pytest.approx(t ** (1 / P.k) * sol.q_moment() ** (1 / P.q), rel=2e-3)


def test_bb_bound_dominates_and_rate():
    P = PParams(2, 1.85)
    g = make_grid(32.0, 512, N=2, core=2.0)
    from plaplace.radial import cell_averages
    u0 = cell_averages(g, lambda r: np.where(r < 1, np.exp(-1 / np.maximum(1 - r**2, 1e-300)), 0.0))
    ts = np.geomspace(0.3 / 10**1.5, 0.3, 8)
    traj = evolve(u0, SolverConfig(P, t_end=0.3, epsilon=1e-8, cfl_safety=0.9, snapshot_times=ts, history_size=1500))
    bounds = [bb_upper_bound(traj, t) for t in ts]
    direct = [wq_radial(u0, traj.field_at(t), P.q) ** P.q for t in ts]
    assert all(b >= w for b, w in zip(bounds, direct))
    assert fit_rate(ts, bounds).slope >= P.q - 1 - 0.05
