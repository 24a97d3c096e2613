import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergoshift.gordin_criteria import NormSequence
from ergoshift.torus_gordin import (
    DominationError,
    FourierObservable,
    GeometricOrbit,
    PowerLaw,
    as_function,
    domination_bound,
    evaluate,
    gordin_check_fourier,
    orbit_root,
    pf_apply_fourier,
    pf_apply_grid,
    sobolev_norm,
)


def cosine(k: int, amp: float = 1.0) -> FourierObservable:
    return FourierObservable(1, {(k,): amp / 2, (-k,): amp / 2})


COS2 = cosine(1)
COS4 = cosine(2)


@st.composite
def trig_polys(draw, s=None, max_freq=12):
    s = draw(st.integers(1, 2)) if s is None else s
    n = draw(st.integers(1, 5))
    coeffs = {}
    for _ in range(n):
        m = tuple(draw(st.lists(st.integers(-max_freq, max_freq), min_size=s, max_size=s)))
        if not any(m):
            continue
        a = complex(draw(st.floats(-1, 1)), draw(st.floats(-1, 1)))
        coeffs[m] = a
        coeffs[tuple(-c for c in m)] = a.conjugate()
    mean = draw(st.floats(-1, 1))
    return FourierObservable(s, coeffs, mean)


# ------------------------------------------------------------ operator

def test_halving_and_annihilation():
    assert pf_apply_fourier(COS4, 1).coeffs == COS2.coeffs
    assert pf_apply_fourier(COS2, 1).coeffs == {}
    assert pf_apply_fourier(COS4, 0) is COS4


@pytest.mark.parametrize("y", [0.0, 0.1, 0.37, 0.9])
def test_grid_matches_closed_forms(y):
    assert pf_apply_grid(as_function(COS4), 1, y) == pytest.approx(math.cos(2 * math.pi * y), abs=1e-12)
    assert pf_apply_grid(as_function(COS2), 1, y) == pytest.approx(0.0, abs=1e-12)
    ind = lambda p: (p[:, 0] < 0.5).astype(float)  # noqa: E731
    assert pf_apply_grid(ind, 1, y) == 0.5
    assert pf_apply_grid(lambda p: np.full(len(p), 3.0), 3, y) == 3.0


def test_grid_refuses_above_cap():
    with pytest.raises(ValueError):
        pf_apply_grid(as_function(COS2), 13, [0.1, 0.2], s=2)


@settings(max_examples=60)
@given(trig_polys(), st.integers(0, 6), st.integers(0, 2**32))
def test_spectral_and_grid_agree(f, n, seed):
    if f.s == 2 and n > 6:
        return
    y = np.random.default_rng(seed).random((3, f.s))
    spectral = evaluate(pf_apply_fourier(f, n), y)
    grid = pf_apply_grid(as_function(f), n, y, f.s)
    assert np.max(np.abs(spectral - grid)) <= 1e-10


@given(trig_polys(), st.integers(0, 8))
def test_mean_preserved_and_parseval(f, n):
    g = pf_apply_fourier(f, n)
    assert g.mean == f.mean
    expect = sum(abs(f.coefficient(tuple(c << n for c in q))) ** 2 for q in g.coeffs)
    assert g.centered_norm_sq() == pytest.approx(expect, rel=1e-12, abs=1e-300)


@given(st.lists(st.integers(-64, 64), min_size=1, max_size=3).filter(any))
def test_orbit_partition(m):
    m = tuple(m)
    q, v = orbit_root(m)
    assert any(c % 2 for c in q)
    assert tuple(c << v for c in q) == m


def test_geometric_orbits_shift_with_operator():
    f = FourierObservable.cosine_series(1, 1.0, 0.5)
    g = pf_apply_fourier(f, 2)
    assert g.coefficient((1,)) == pytest.approx(0.5 * 0.25)
    y = np.linspace(0, 1, 7, endpoint=False)
    assert np.allclose(evaluate(g, y), pf_apply_grid(as_function(f), 2, y[:, None]), atol=1e-12)


# ------------------------------------------------------------ membership

def test_single_cosine_orbit_bound():
    rep, orb = gordin_check_fourier(COS4)
    assert rep.member
    assert rep.bound == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert orb.limits[(1,)] == pytest.approx(0.5)
    assert set(orb.roots) == {(1,), (-1,)}
    assert rep.details["all_frequency_bound"] == pytest.approx(1.0)


def test_lacunary_cosine_series_bound():
    f = FourierObservable.cosine_series(1, 1.0, 0.5)
    rep, orb = gordin_check_fourier(f)
    assert orb.limits[(1,)] == pytest.approx(1.0, rel=1e-15)
    assert rep.bound == pytest.approx(math.sqrt(2), rel=1e-15)


def test_separate_orbits_give_centered_norm():
    f = FourierObservable(2, {(1, 0): 0.3, (-1, 0): 0.3, (0, 3): 0.2j, (0, -3): -0.2j, (1, 1): 0.1, (-1, -1): 0.1})
    rep, _ = gordin_check_fourier(f)
    assert rep.bound == pytest.approx(f.centered_norm(), rel=1e-14)


@given(trig_polys(s=1))
def test_finite_spectra_are_members(f):
    rep, orb = gordin_check_fourier(f, horizon=8)
    assert rep.member and math.isfinite(rep.bound)
    assert orb.sup_over_N >= orb.total - 1e-12


def test_power_law_spectrum_member():
    f = FourierObservable(1, power_law=PowerLaw(1.0, 1.5))
    rep, orb = gordin_check_fourier(f)
    assert rep.member
    fac = 1 / (1 - 2**-1.5)
    # odd roots q: b_q = |q|^-1.5 * fac, both signs
    odd = 2 * fac**2 * sum((2 * k + 1) ** -3.0 for k in range(200_000))
    assert rep.bound == pytest.approx(math.sqrt(odd), rel=1e-9)


# ------------------------------------------------------------ domination and Sobolev

def test_domination_bound_values():
    assert domination_bound(COS2, NormSequence(np.array([1.0]))) == pytest.approx(COS2.centered_norm())
    assert domination_bound(COS2, NormSequence.from_rule(lambda n: 2.0**-n)) == pytest.approx(2 * COS2.centered_norm())
    f = FourierObservable.cosine_series(1, 1.0, 0.5)
    b = domination_bound(f, NormSequence.from_rule(lambda n: 2.0**-n))
    assert b == pytest.approx(2 * f.centered_norm(), rel=1e-12)
    assert gordin_check_fourier(f)[0].bound <= b


def test_domination_violation_names_offender():
    f = FourierObservable(1, {(1,): 0.5, (-1,): 0.5, (2,): 0.5, (-2,): 0.5})
    with pytest.raises(DominationError) as err:
        domination_bound(f, NormSequence.from_rule(lambda n: 4.0**-n))
    assert err.value.n == 1


def test_sobolev_values():
    assert sobolev_norm(COS2, 1.0) == pytest.approx(1 / math.sqrt(2))
    assert sobolev_norm(FourierObservable(1), 2.0) == 0.0
    f = FourierObservable(2, {(1, 2): 0.25, (-1, -2): 0.25, (3, 0): 0.1j, (-3, 0): -0.1j})
    assert sobolev_norm(f, 0.0) == pytest.approx(f.centered_norm())


@given(trig_polys(), st.floats(0.05, 3))
def test_sobolev_members(f, alpha):
    if f.centered_norm() == 0:
        return
    assert math.isfinite(sobolev_norm(f, alpha))
    assert gordin_check_fourier(f, 4)[0].member


# ------------------------------------------------------------ validation and JSON

def test_invalid_spectra_rejected():
    with pytest.raises(ValueError):
        FourierObservable(1, {(1,): 1.0})
    with pytest.raises(ValueError):
        FourierObservable(1, {(0,): 1.0})
    with pytest.raises(ValueError):
        GeometricOrbit((1,), 1.0, 1.0)
    with pytest.raises(ValueError):
        PowerLaw(1.0, 0.5)
    with pytest.raises(ValueError):
        FourierObservable(1, {(2,): 0.5, (-2,): 0.5}, orbits=(GeometricOrbit((1,), 0.5, 0.5), GeometricOrbit((-1,), 0.5, 0.5)))


def test_json_round_trip():
    f = FourierObservable(2, {(1, 2): 0.25 + 0.1j, (-1, -2): 0.25 - 0.1j}, mean=0.7)
    g = FourierObservable.from_json(f.to_json())
    assert g.coeffs == f.coeffs and g.mean == f.mean and g.s == 2
    h = FourierObservable.cosine_series(3, 0.8, 0.25)
    assert FourierObservable.from_json(h.to_json()).orbits == h.orbits
