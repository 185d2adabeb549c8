import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatsep.modal import ModeCountError
from oracles import TELESCOPE_GRID, harmonic_fuzz, telescoping_defect
from heatsep.residue_gain import (
    check_harmonic_condition,
    gamma_harmonic,
    gamma_harmonic_series,
    gamma_sobolev,
    harmonic_bound_holds,
    inverse_square_series,
    residue_gain,
)


# ------------------------------------------------------------ harmonic inequality

def test_bound_equality_case():
    assert harmonic_bound_holds([1.0, 1.0], [2.0, 2.0])


def test_bound_zero_vector():
    assert harmonic_bound_holds(np.zeros(5), np.arange(1.0, 6.0))


def test_bound_necessity_witness():
    mu = np.array([2.0, 2.0, 10.0])  # sum of inverses = 1.1
    assert math.isclose(np.sum(1 / mu), 1.1)
    assert not harmonic_bound_holds(1 / mu, mu)


def test_bound_input_validation():
    with pytest.raises(ValueError):
        harmonic_bound_holds([1.0, 2.0], [1.0])
    with pytest.raises(ValueError):
        harmonic_bound_holds([1.0], [0.0])


@pytest.mark.parametrize("mu, expected", [([2.0, 2.0], True), ([1.0], True), ([1.5, 2.9], False)])
def test_check_condition(mu, expected):
    assert check_harmonic_condition(mu) is expected


def test_check_condition_rejects_nonpositive():
    with pytest.raises(ValueError):
        check_harmonic_condition([1.0, -2.0])


def test_sufficiency_fuzz(rng):
    assert harmonic_fuzz(rng) == 0


@settings(max_examples=200, deadline=None)
@given(
    inv=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=30),
    eps=st.floats(1e-3, 0.5),
)
def test_necessity_witness_property(inv, eps):
    inv = np.array(inv)
    inv *= (1 + eps) / inv.sum()
    mu = 1 / inv
    assert not harmonic_bound_holds(1 / mu, mu)


@settings(max_examples=200, deadline=None)
@given(
    z=st.lists(st.floats(-10, 10), min_size=1, max_size=50),
    data=st.data(),
)
def test_sufficiency_property(z, data):
    n = len(z)
    w = np.array(data.draw(st.lists(st.floats(0.01, 1.0), min_size=n, max_size=n)))
    inv = w / w.sum() * data.draw(st.floats(0.05, 1.0))
    assert harmonic_bound_holds(z, 1 / inv)


# ------------------------------------------------------------ residue gain

@pytest.mark.parametrize(
    "sigma, N, gamma",
    [(0.037, 1, 1.156), (0.193, 2, 0.427), (0.278, 3, 0.256),
     (0.327, 4, 0.183), (0.360, 5, 0.142), (0.382, 6, 0.116)],
)
def test_gamma_table(sigma, N, gamma):
    assert gamma_harmonic(0.1, sigma, N).gamma == pytest.approx(gamma, abs=5e-4)


def test_gamma_zero_reaction():
    assert gamma_harmonic(0.0, 0.0, 1).gamma == pytest.approx(math.pi / 3, rel=1e-14)
    br = gamma_harmonic_series(0.0, 0.0, 1)
    assert br.contains(math.pi / 3)


@pytest.mark.parametrize("q, sigma, N", [(0.1, 0.0, 1), (1.1, 0.0, 2), (0.1, 0.278, 3), (8.9, 0.2, 4),
                                         (3.0, 0.9, 2), (24.0, 0.5, 5)])
def test_closed_form_inside_series_bracket(q, sigma, N):
    g = gamma_harmonic(q, sigma, N).gamma
    br = gamma_harmonic_series(q, sigma, N)
    assert br.contains(g, slack=1e-13 * g)
    assert br.upper - br.lower < 1e-6


@pytest.mark.parametrize("d", [1.0, 2.0, 1.0 + 1e-7, 2.0 - 3e-7, 0.5, 1e-4])
def test_near_integer_square_roots(d):
    # s = d^2 close to an eigenvalue below N^2: the cotangent pole is cancelled analytically
    s = d * d
    N = int(math.floor(d)) + 1
    g = gamma_harmonic(s, 0.0, N).gamma
    br = gamma_harmonic_series(s, 0.0, N, terms=10**6)
    assert br.contains(g, slack=1e-12 * g)


@pytest.mark.parametrize("q, sigma, N, expected", [
    (1.1, 0.0, 2, (4 + 1 / math.pi) / 2.9),
    (0.0, 0.0, 1, 2 + 1 / math.pi),
    (1.1, 0.0, 20, (40 + 1 / math.pi) / 398.9),
])
def test_sobolev(q, sigma, N, expected):
    g = gamma_sobolev(q, sigma, N)
    assert g.gamma == pytest.approx(expected, rel=1e-14)
    assert g.Gamma == N


def test_sobolev_known_values():
    assert gamma_sobolev(1.1, 0.0, 2).gamma == pytest.approx(1.4891, abs=1e-4)
    assert gamma_sobolev(1.1, 0.0, 20).gamma == pytest.approx(0.10107, abs=1e-5)


def test_mode_check():
    with pytest.raises(ModeCountError, match=r"N\^2 > q \+ sigma"):
        gamma_harmonic(1.1, 0.0, 1)
    with pytest.raises(ModeCountError):
        gamma_sobolev(0.9, 0.2, 1)
    with pytest.raises(ValueError):
        residue_gain(0.1, 0.0, 1, "fourier")


def test_telescoping_identity():
    worst, count = telescoping_defect(*TELESCOPE_GRID)
    assert count == 100
    assert worst <= 1e-12


@settings(max_examples=100, deadline=None)
@given(q=st.floats(0.01, 20.0), sigma=st.floats(0.0, 2.0), extra=st.integers(0, 6))
def test_monotone_and_dominated(q, sigma, extra):
    N = math.isqrt(math.floor(q + sigma)) + 1 + extra
    g = gamma_harmonic(q, sigma, N).gamma
    assert 0 < gamma_harmonic(q, sigma, N + 1).gamma < g
    assert g <= gamma_sobolev(q, sigma, N).gamma


def test_gain_vanishes_for_many_modes():
    assert gamma_harmonic(1.1, 0.0, 1000).gamma < 1e-3


@pytest.mark.parametrize("q, sigma, N", [(0.1, 0.278, 3), (1.1, 0.0, 2), (0.1, 0.0, 1)])
def test_optimal_weights_saturate_condition(q, sigma, N):
    g = gamma_harmonic(q, sigma, N)
    br = g.inverse_weight_sum()
    assert br.lower - 1e-12 <= 1.0 <= br.upper + 1e-12
    mu = g.mu(np.arange(N, N + 50))
    assert np.all(mu > 0)


def test_sobolev_weights_satisfy_condition():
    g = gamma_sobolev(1.1, 0.0, 4)
    assert g.inverse_weight_sum().upper <= 1.0 + 1e-10


def test_series_requires_modes():
    with pytest.raises(ValueError):
        inverse_square_series(4.0, 2, 10)
    with pytest.raises(ValueError):
        inverse_square_series(0.0, 1, 0)
