import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from plaplace.measures import (
    RadonMeasure, dirac, from_field, load_measure, measure_mass, measure_q_moment, mollified_tail_bound, mollify,
)
from plaplace.radial import Field, cell_averages, make_grid, pair, write_field


def _mixed():
    g = make_grid(3.0, 60, N=2)
    dens = cell_averages(g, lambda r: np.exp(-4 * (r - 1.5) ** 2))
    return RadonMeasure(2, ((1.0, 0.5), (0.2, 0.25)), Field(g, dens.values * 0.5 / dens.mass()))


def test_validation():
    with pytest.raises(ValueError):
        RadonMeasure(2, ((1.0, -1.0),))
    with pytest.raises(ValueError):
        RadonMeasure(2, ((-1.0, 1.0),))
    with pytest.raises(ValueError):
        RadonMeasure(3, (), Field(make_grid(1.0, 8, N=2), np.ones(8)))


def test_q_moment_examples():
    assert measure_q_moment(dirac(2.0), 3.0) == 0.0
    assert measure_q_moment(RadonMeasure(2, ((2.0, 1.0),)), 3.0, 1.0, 3.0) == pytest.approx(8.0)


def test_mixed_moment_against_brute_force():
    mu = _mixed()
    q = 2.5
    # brute force: midpoint rule with 2e5 points on the density, atoms by hand
    d = mu.density
    r = np.linspace(0, 3, 200001)
    mid = 0.5 * (r[1:] + r[:-1])
    vals = d.values[np.clip(np.searchsorted(d.grid.faces, mid) - 1, 0, d.grid.cells - 1)]
    dens = float(np.sum(2 * math.pi * mid ** (1 + q) * vals * np.diff(r)))
    atoms = 0.5 * 1.0**q + 0.25 * 0.2**q
    assert measure_q_moment(mu, q) == pytest.approx(dens + atoms, rel=1e-6)
    assert measure_mass(mu) == pytest.approx(1.25, rel=1e-13)
    assert mu.total_mass == pytest.approx(1.25, rel=1e-13)


def test_mollified_dirac():
    g = make_grid(2.0, 400, N=2)
    f = mollify(dirac(1.0), 20, g)
    assert f.mass() == pytest.approx(1.0, abs=1e-10)
    assert np.all(f.values[g.faces[:-1] >= 1 / 20] == 0.0)


def test_cutoff_removes_far_atom():
    g = make_grid(40.0, 4000, N=2)
    mu = RadonMeasure(2, ((0.5, 1.0), (30.0, 2.0)))
    f = mollify(mu, 5, g)
    assert f.mass() == pytest.approx(1.0, rel=1e-10)


def test_too_coarse_grid_rejected():
    with pytest.raises(ValueError):
        mollify(dirac(1.0), 50, make_grid(1.0, 16))


@pytest.mark.parametrize("n", [4, 8, 16])
def test_tail_moment_bound(n):
    mu = _mixed()
    g = make_grid(8.0, 4000, N=2)
    f = mollify(mu, n, g)
    q = 3.0
    for R in (1.0, 1.6, 2.5):
        mollified = measure_q_moment(from_field(f), q, R)
        assert mollified <= mollified_tail_bound(mu, q, R, n) * (1 + 1e-12)


def test_weak_convergence_of_mollifiers():
    mu = _mixed()
    phi = lambda r: np.exp(-r**2)
    exact = sum(m * math.exp(-r**2) for r, m in mu.atoms) + pair(mu.density, phi)
    g = make_grid(8.0, 8000, N=2)
    errs = [abs(pair(mollify(mu, n, g), phi) - exact) for n in (5, 10, 20, 40)]
    assert all(b < a for a, b in zip(errs, errs[1:]))


@given(st.lists(st.tuples(st.floats(0, 4), st.floats(0.01, 3)), min_size=1, max_size=6), st.integers(5, 12))
def test_mass_domination(atoms, n):
    mu = RadonMeasure(2, tuple(atoms))
    g = make_grid(16.0, 3000, N=2)
    assert mollify(mu, n, g).mass() <= mu.total_mass + 1e-12


def test_load_measure(tmp_path):
    g = make_grid(2.0, 10, N=3)
    write_field(Field(g, np.ones(10)), tmp_path / "d.csv")
    (tmp_path / "m.json").write_text(json.dumps({"atoms": [[1.0, 2.0]], "density_csv": "d.csv"}))
    mu = load_measure(tmp_path / "m.json")
    assert mu.N == 3 and mu.atoms == ((1.0, 2.0),)
    assert mu.total_mass == pytest.approx(2.0 + 4 * math.pi / 3 * 8, rel=1e-13)
    (tmp_path / "bad.json").write_text(json.dumps({"atoms": [[1.0]]}))
    with pytest.raises(ValueError):
        load_measure(tmp_path / "bad.json", 2)
    (tmp_path / "nodim.json").write_text(json.dumps({"atoms": [[1.0, 1.0]]}))
    with pytest.raises(ValueError):
        load_measure(tmp_path / "nodim.json")
