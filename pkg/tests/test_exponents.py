import math

import pytest
from hypothesis import given, strategies as st

from plaplace.exponents import PParams, critical_pc, critical_pN, p_polynomial


def test_pc_dimension_two():
    assert critical_pc(2) == pytest.approx(4.0 / 3.0, rel=1e-15)


def test_pN_dimension_two_closed_form():
    # quadratic formula on (4, -9, 4)
    expected = (9.0 + math.sqrt(17.0)) / 8.0
    assert critical_pN(2) == pytest.approx(expected, rel=1e-15)
    assert critical_pN(2) == pytest.approx(1.640388203202208, rel=1e-14)
    assert abs(p_polynomial(2, critical_pN(2))) < 1e-14


def test_conjugate_and_k():
    P = PParams(2, 4.0 / 3.0 + 1e-12)
    assert P.q == pytest.approx(4.0, rel=1e-10)
    assert PParams(2, 1.5).k == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("N,p,value", [(2, 2.0, 2.0), (3, 1.2, -1.2)])
def test_polynomial_values(N, p, value):
    assert p_polynomial(N, p) == pytest.approx(value, abs=1e-13)


@pytest.mark.parametrize("bad", [1, 0, 2.5, True])
def test_rejects_bad_dimension(bad):
    with pytest.raises(ValueError):
        critical_pc(bad)


@pytest.mark.parametrize("p", [1.0, 2.0, 0.5, float("nan")])
def test_rejects_bad_p(p):
    with pytest.raises(ValueError):
        PParams(2, p)


def test_regimes_and_guards():
    assert PParams(2, 1.2).regime == "below_pc"
    assert PParams(2, 1.5).regime == "pc_to_pN"
    assert PParams(2, 1.8).regime == "pN_to_2"
    with pytest.raises(ValueError):
        PParams(2, 1.2).require_supercritical()
    with pytest.raises(ValueError):
        PParams(2, 1.5).require_finite_moment()
    PParams(2, 1.8).require_finite_moment()
    assert set(PParams(3, 1.7).to_dict()) >= {"N", "p", "q", "k", "pN"}


@given(st.integers(2, 10), st.floats(0.0, 1.0, exclude_min=True, exclude_max=True))
def test_sign_of_polynomial_tracks_pN(N, frac):
    pc = critical_pc(N)
    p = pc + frac * (2.0 - pc)
    pN = critical_pN(N)
    if abs(p - pN) < 1e-12:
        return
    assert (p_polynomial(N, p) > 0) == (p > pN)


@given(st.integers(2, 10), st.floats(1e-6, 1.0 - 1e-6))
def test_tail_exponent_identity(N, frac):
    p = 1.0 + frac
    P = PParams(N, p)
    assert P.tail_exponent * (p - 1) * (2 - p) == pytest.approx(-P.poly, abs=1e-12)
    assert P.supercritical == (p > P.p_c)


@pytest.mark.parametrize("N", range(2, 11))
def test_ordering(N):
    assert 4.0 / 3.0 <= critical_pc(N) < critical_pN(N) < 2.0
