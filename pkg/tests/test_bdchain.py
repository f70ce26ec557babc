import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from zrp.bdchain import (BirthDeathChain, check_bdspecgap_conditions,
                         conditional_difference_check, gamma1, gamma1_from_rates,
                         gammabounds_constant, halves, metropolis_chain, miclo_check,
                         modified_measure, single_site_chain, two_site_chain, two_site_logsob,
                         two_site_sweep)
from zrp.errors import ZeroMass
from zrp.lattice import cube, segment
from zrp.model import canonical, preset
from zrp.spectral import build_generator, estimate_constant

from .conftest import rate_families
from .oracles import two_point_ls


def test_binomial_split():
    law = gamma1(canonical(preset("linear", 4), 4, segment(4)), halves(4))
    assert np.allclose(law.gamma1, binom.pmf(range(5), 4, 0.5), atol=1e-14)


def test_no_particles():
    law = gamma1(canonical(preset("linear", 2), 0))
    assert law.gamma1.tolist() == [1.0]


@given(rate_families(), st.integers(0, 6))
@settings(max_examples=20, deadline=None)
def test_gamma1_by_convolution(rf, r):
    n = rf.n_sites
    split = ((0,), tuple(range(1, n)))
    law = gamma1(canonical(rf, r), split)
    direct = gamma1_from_rates(rf, split, r)
    assert abs(law.gamma1.sum() - 1) <= 1e-13
    assert np.allclose(law.gamma1, direct.gamma1, rtol=1e-11, atol=1e-15)


@pytest.mark.parametrize("name", ["linear", "staircase", "alternating:1,2"])
def test_gammabounds_single_constant(name):
    cs = []
    for side in (2, 4, 6):
        for r in (2, 6, 12):
            rf = preset(name, side)
            cs.append(gammabounds_constant(gamma1_from_rates(rf, halves(side), r)))
    assert all(np.isfinite(cs)) and max(cs) < 10


def test_metropolis_binomial():
    ch = metropolis_chain(binom.pmf(range(3), 2, 0.5))
    assert ch.b(0) == 1.0
    assert ch.balance_error() <= 1e-12


def test_metropolis_uniform():
    ch = metropolis_chain(np.full(6, 1 / 6))
    assert np.all(ch.birth == 1) and np.all(ch.death == 1)


@given(st.lists(st.floats(0.01, 10), min_size=2, max_size=12))
@settings(max_examples=40, deadline=None)
def test_metropolis_reversible(w):
    p = np.array(w) / sum(w)
    ch = metropolis_chain(p)
    assert ch.balance_error() <= 1e-12
    assert np.allclose(ch.stationary, p, atol=1e-12)


def test_metropolis_zero_mass():
    with pytest.raises(ZeroMass):
        metropolis_chain([0.5, 0.0, 0.5])


def test_single_site_linear():
    ens = canonical(preset("linear", 2), 2, segment(2))
    ch = single_site_chain(ens, 1)
    assert np.allclose(ch.death, [1, 2]) and np.allclose(ch.birth, [2, 1])
    assert np.allclose(ch.stationary, binom.pmf(range(3), 2, 0.5), atol=1e-14)
    assert ch.d(2) == 2.0


@pytest.mark.parametrize("name,side,r,x", [("staircase", 3, 5, 1), ("alternating:1,2", 3, 4, 0),
                                           ("linear", 4, 3, 2)])
def test_single_site_stationary_is_marginal(name, side, r, x):
    ens = canonical(preset(name, side), r, segment(side))
    ch = single_site_chain(ens, x)
    assert np.abs(ch.stationary - ens.marginal(x)).max() <= 1e-12


def test_bdspecgap_linear_death():
    ch = BirthDeathChain(np.full(5, 2.0), np.arange(1.0, 6.0))
    out = check_bdspecgap_conditions(ch)
    assert (out["J2"], out["J1"], out["J0"]) == (0.0, 1.0, 0.0) and out["admissible"]


def test_bdspecgap_two_site_boundary():
    ens = canonical(preset("linear", 2), 8, segment(2))
    ch = two_site_chain(ens)
    out = check_bdspecgap_conditions(ch)
    assert out["J2"] == pytest.approx(0.5) and out["J1"] == pytest.approx(0.5)
    assert out["boundary"] and not out["admissible"]
    assert ch.gap() > 0


def test_bdspecgap_reports_jump():
    b = np.ones(6)
    b[3:] += 10
    out = check_bdspecgap_conditions(BirthDeathChain(b, np.arange(1.0, 7.0)))
    assert out["J2"] == 10


@pytest.mark.parametrize("name", ["linear", "staircase"])
def test_single_site_gaps_bounded_below(name):
    gaps = []
    for r in range(2, 41, 6):
        ens = canonical(preset(name, 2), r, segment(2))
        ch = single_site_chain(ens, 0)
        if check_bdspecgap_conditions(ch, J0=3.0)["admissible"]:
            gaps.append(ch.gap())
    assert gaps and min(gaps) >= 0.2


def test_miclo_binomial_bounded():
    a0 = [miclo_check(binom.pmf(range(r + 1), r, 0.5))["A0_min"] for r in (8, 16, 32)]
    assert all(a is not None for a in a0)
    assert a0[2] <= a0[0] * 1.25 + 1e-12


def test_miclo_point_mass_fails():
    out = miclo_check(np.eye(9)[4])
    assert not out["passed"]


def test_modified_measure():
    ens = canonical(preset("linear", 2), 10, segment(2))
    law = gamma1(ens, halves(2))
    mm = modified_measure(law, preset("linear", 2), 0.2)
    assert mm.H_vals[mm.r_bar] == 0
    assert abs(mm.gamma1_eps.sum() - 1) <= 1e-12
    lo, hi = mm.equivalence_bounds()
    assert 0 < lo <= hi < math.inf
    assert np.all(np.isfinite(mm.H_vals))
    assert miclo_check(mm)["passed"]


@pytest.mark.parametrize("side,r", [(2, 12), (4, 16)])
def test_H_increments_convex(side, r):
    rf = preset("linear", side)
    mm = modified_measure(gamma1_from_rates(rf, halves(side), r), rf, 0.1)
    lo, hi = mm.I_eps
    inc = np.diff(mm.H_vals[mm.r_bar:hi + 1])
    assert np.all(inc >= -1e-12) and np.all(np.diff(inc) >= -1e-12)
    dec = -np.diff(mm.H_vals[lo:mm.r_bar + 1])[::-1]
    assert np.all(dec >= -1e-12) and np.all(np.diff(dec) >= -1e-12)


def test_conditional_difference_constant():
    ens = canonical(preset("staircase", 2), 3, segment(2))
    out = conditional_difference_check(ens, halves(2), np.ones(len(ens)), 2)
    assert out["lhs"] == pytest.approx(0, abs=1e-15) and out["abs_err"] <= 1e-12


@pytest.mark.parametrize("mirrored", [False, True])
def test_conditional_difference_random(mirrored, rng):
    ens = canonical(preset("staircase", 2), 3, segment(2))
    out = conditional_difference_check(ens, halves(2), rng.normal(size=len(ens)), 2, mirrored)
    assert out["abs_err"] <= 1e-10


@given(rate_families(min_sites=2, max_sites=4), st.integers(1, 5), st.booleans(), st.data())
@settings(max_examples=25, deadline=None)
def test_conditional_difference_identity(rf, r, mirrored, data):
    n = rf.n_sites
    ens = canonical(rf, r, segment(n))
    cut = data.draw(st.integers(1, n - 1))
    split = (tuple(range(cut)), tuple(range(cut, n)))
    r1 = data.draw(st.integers(1, r))
    f = np.random.default_rng(r1).normal(size=len(ens))
    out = conditional_difference_check(ens, split, f, r1, mirrored)
    assert out["abs_err"] <= 1e-10 * max(1, abs(out["lhs"]))


def test_two_site_single_particle_oracle():
    ens = canonical(preset("linear", 2), 1, segment(2))
    assert two_site_logsob(ens) == pytest.approx(two_point_ls(0.5, 0.5), abs=1e-6)


def test_two_site_reduction_matches_full_generator():
    ens = canonical(preset("staircase", 2), 5, segment(2))
    full = estimate_constant(build_generator(ens), "LS", restarts=16).value
    assert two_site_logsob(ens) == pytest.approx(full, rel=1e-6)


def test_two_site_sweep_no_growth():
    out = two_site_sweep(preset("linear", 2), range(1, 21), restarts=4)
    vals = out["logsob"]
    assert np.isfinite(out["sup"])
    assert max(vals[10:]) <= max(vals[:10]) * 1.05
