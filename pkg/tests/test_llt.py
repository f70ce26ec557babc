import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import poisson

from zrp.llt import (charfn_scan, condition_E_scan, edgeworth, edgeworth_terms, error_table,
                     hermite, llt_normal, llt_poisson, poisson_sup_error, sum_distribution)
from zrp.model import marginal, moments, preset


def brute_terms(j):
    out = set()
    for ks in np.ndindex(*(j // l + 1 for l in range(1, j + 1))):
        if sum((l + 1) * k for l, k in enumerate(ks)) == j:
            out.add((tuple(int(k) for k in ks), int(sum(ks))))
    return out


def test_hermite_values():
    assert hermite(2, 2.0) == 3.0
    assert hermite(3, 1.0) == -2.0
    assert np.all(hermite(0, np.linspace(-3, 3, 7)) == 1)


@given(st.integers(0, 8), st.floats(-5, 5))
def test_hermite_matches_numpy(m, x):
    ref = np.polynomial.hermite_e.hermeval(x, [0] * m + [1])
    assert hermite(m, x) == pytest.approx(ref, rel=1e-10, abs=1e-10)


def test_edgeworth_terms():
    assert set(edgeworth_terms(1)) == {((1,), 1)}
    assert set(edgeworth_terms(2)) == {((2, 0), 2), ((0, 1), 1)}
    assert len(edgeworth_terms(3)) == 3
    for j in range(1, 7):
        assert set(edgeworth_terms(j)) == brute_terms(j)


def test_edgeworth_g0_and_integrals():
    ex = edgeworth(preset("staircase", 4), 1.3, 4)
    z = np.linspace(-3, 3, 13)
    assert np.allclose(ex.g(0, z), np.exp(-z ** 2 / 2) / math.sqrt(2 * math.pi))
    for j in (1, 2):
        assert abs(ex.integral(j)) <= 1e-8


@pytest.mark.parametrize("N,phi", [(1, 0.7), (5, 1.0), (12, 2.5)])
def test_sum_of_poisson_sites(N, phi):
    sd = sum_distribution(preset("linear", N), phi)
    k = np.arange(len(sd.pmf))
    assert np.abs(sd.pmf - poisson.pmf(k, N * phi)).max() <= 1e-12


def test_alternating_sum_is_poisson_three():
    sd = sum_distribution(preset("alternating:1,2", 4), 1.0)
    assert np.abs(sd.pmf - poisson.pmf(np.arange(len(sd.pmf)), 3.0)).max() <= 1e-12


def test_single_site_sum_is_marginal():
    rf = preset("staircase", 1)
    sd = sum_distribution(rf, 1.7)
    m = marginal(rf, 0, 1.7)
    n = min(len(sd.pmf), len(m.pmf))
    assert np.allclose(sd.pmf[:n], m.pmf[:n], atol=1e-15)
    assert sd.pmf.sum() >= 1 - 1e-12


def test_llt_normal_poisson_center():
    out = llt_normal(preset("linear", 50), 50, J=2)
    assert abs(math.sqrt(50) * out["exact"] - 1 / math.sqrt(2 * math.pi)) < 0.03
    assert out["z"] == pytest.approx(0, abs=1e-10)


def test_llt_exact_is_oracle_entry():
    rf = preset("staircase", 8)
    out = llt_normal(rf, 11, J=3)
    assert out["exact"] == sum_distribution(rf, out["phi"]).prob(11)


def test_third_order_improves_most_points():
    rf = preset("staircase", 20)
    phi = 1.0
    mu = 20 * moments(rf, phi).rho_bar
    rs = np.linspace(mu - 6, mu + 6, 10).round().astype(int)
    better = sum(llt_normal(rf, int(r), 3, phi)["abs_err"] <= llt_normal(rf, int(r), 2, phi)["abs_err"]
                 for r in rs)
    assert better >= 8


def test_far_tail_is_small():
    rf = preset("linear", 30)
    sigma = math.sqrt(30.0)
    r = int(round(30 + 6 * sigma))
    for J in (2, 3, 4):
        out = llt_normal(rf, r, J, phi=1.0)
        assert abs(out["approx"]) < 1e-6 and out["exact"] < 1e-6
        assert np.isfinite(out["abs_err"])


@pytest.mark.parametrize("name", ["staircase", "alternating:1,2"])
def test_error_rates(name):
    out = error_table(name, [16, 32, 64, 128], [2, 3])
    for J in (2, 3):
        assert out["slopes"][J] <= -(J - 1) / 2 + 0.3


def test_poisson_regime_linear_is_exact():
    rf = preset("linear", 10)
    for k in range(8):
        assert llt_poisson(rf, 3, k)["abs_err"] <= 1e-12


def test_poisson_regime_rate():
    errs = [N * poisson_sup_error(preset("staircase", N), 3) for N in (20, 40, 80, 160)]
    assert max(errs) <= 1.5 * errs[0]
    for r in (1, 2, 4):
        e = [N * poisson_sup_error(preset("staircase", N), r) for N in (20, 80, 160)]
        assert max(e) <= 1.5 * e[0]


def test_poisson_regime_far_k():
    out = llt_poisson(preset("staircase", 40), 2, 40)
    assert out["approx"] < 1e-8 and out["exact"] < 1e-8


def test_charfn_poisson_closed_form():
    rf = preset("linear", 1)
    phi = 1.0
    out = charfn_scan(rf, 0, phi, [0.0, 1.0, -1.0])
    assert out["modulus"][0] == pytest.approx(1.0, abs=1e-14)
    expect = math.exp(phi * (math.cos(1 / out["sigma"]) - 1))
    assert np.allclose(out["modulus"][1:], expect, atol=1e-12)


@pytest.mark.parametrize("phi", [0.5, 1.0, 2.0])
def test_charfn_bounded_away_from_one(phi):
    for name in ("linear", "staircase"):
        sigma = math.sqrt(moments(preset(name, 1), phi).sigma2[0])
        t = np.linspace(-math.pi * sigma, math.pi * sigma, 401)
        assert charfn_scan(preset(name, 1), 0, phi, t)["max_beyond_delta"] < 1


def test_normalised_moments_bounded():
    rf = preset("staircase", 1)
    for phi in np.geomspace(0.5, 10, 15):
        mt = moments(rf, phi, order=8)
        s2 = mt.central[0][2]
        for k in range(1, 5):
            assert mt.central[0][2 * k] / s2 ** k < 5000


def test_condition_E_linear():
    out = condition_E_scan("linear", [2, 3, 5], 200)
    assert out["inf"] > 0.2 and out["sup"] < 0.5
    assert out["rows"][-1][2] == pytest.approx(1 / math.sqrt(2 * math.pi), abs=0.01)


def test_condition_E_scaled_linear_same_limit():
    a = condition_E_scan("linear", [3], 60)["rows"]
    b = condition_E_scan("linear-theta:2", [3], 60)["rows"]
    assert np.allclose([v for *_, v in a], [v for *_, v in b], rtol=1e-10)


def test_condition_E_smallest_instance():
    v = condition_E_scan("staircase", [2], 1)["rows"][0][2]
    assert 0 < v < math.inf
