import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zrp.errors import (MNotSatisfied, NonpositiveRate, NonpositiveTail, NonzeroAtZero,
                        StateSpaceTooLarge, TruncationOverflow)
from zrp.lattice import cube, segment
from zrp.model import (RateFamily, ShiftedSiteRate, SiteRate, build_rate_family, canonical,
                       check_stochastic_domination, grand_canonical_weights, h_factor,
                       load_rate_file, marginal, moments, phi_of_rho, preset, verify_conditions)
from zrp.model.measures import density

from .conftest import rate_families, site_rates
from .oracles import canonical_law, poisson_pmf


# --- rate families ----------------------------------------------------------

def test_linear_rates_evaluate_to_identity():
    rf = preset("linear", 3)
    assert [rf.c(x, 5) for x in range(3)] == [5.0, 5.0, 5.0]


def test_alternating_rates():
    rf = preset("alternating:1,2", 4)
    assert rf.c(0, 3) == 3.0 and rf.c(1, 3) == 6.0


def test_staircase_rates():
    rf = preset("staircase", 1)
    assert [rf.c(0, k) for k in range(6)] == [0, 1.5, 2, 3.5, 4, 5.5]


def test_nonzero_at_zero_rejected():
    with pytest.raises(NonzeroAtZero):
        build_rate_family([{"head": [1.0, 2.0], "tail_theta": 1.0}])


def test_nonpositive_head_rejected():
    with pytest.raises(NonpositiveRate):
        build_rate_family([{"head": [0.0, 0.0], "tail_theta": 1.0}])


def test_nonpositive_tail_rejected():
    with pytest.raises(NonpositiveTail):
        build_rate_family([{"head": [0.0, 1.0], "tail_theta": 0.0}])


def test_head_then_tail():
    rf = build_rate_family([{"head": [0, 2, 3], "tail_theta": 1.5}])
    assert rf.c(0, 2) == 3 and rf.c(0, 3) == 4.5 and rf.c(0, 10) == 15


def test_rate_file_roundtrip(tmp_path):
    path = tmp_path / "rates.ini"
    path.write_text(
        "[DEFAULT]\ntail_theta = 1\n\n"
        "[site a]\nhead = [0, 1]\n\n"
        "[site b]\nhead = [0, 2, 3]\ntail_theta = 2  # faster\n"
        "[site c]\nhead = [0]\ntail_offsets = [0, 0.5]\n")
    rf = load_rate_file(path)
    assert rf.labels == ("a", "b", "c")
    assert rf.c(0, 4) == 4 and rf.c(1, 2) == 3 and rf.c(1, 4) == 8 and rf.c(2, 3) == 3.5


def test_rate_file_errors(tmp_path):
    from zrp.errors import InvalidInput
    path = tmp_path / "bad.ini"
    path.write_text("[site a]\nhead = [1, 2]\ntail_theta = 1\n")
    with pytest.raises(NonzeroAtZero):
        load_rate_file(path)
    with pytest.raises(InvalidInput):
        load_rate_file(tmp_path / "missing.ini")


def test_h_factor():
    assert all(h_factor(preset("linear", 1), 0, k) == 1 for k in range(10))
    assert h_factor(preset("linear-theta:2", 1), 0, 3) == 0.5


@given(rate_families())
@settings(max_examples=30, deadline=None)
def test_h_factor_within_envelope(rf):
    c1, c2 = rf.envelope()
    for x in range(rf.n_sites):
        for k in range(12):
            assert 1 / c2 - 1e-12 <= h_factor(rf, x, k) <= 1 / c1 + 1e-12


def test_shifted_rate_matches_formula():
    base = preset("staircase", 1)[0]
    s = ShiftedSiteRate(base, 1)
    assert s(2) == pytest.approx(2 * 3.5 / 3)
    for k in [0, 1, 5, 200, 1000]:
        assert s(k) == pytest.approx(k * base(k + 1) / (k + 1) if k else 0.0)
    assert np.allclose(s.values(300), [s(k) for k in range(301)])


# --- conditions -----------------------------------------------------------------

def test_conditions_linear():
    rep = verify_conditions(preset("linear", 3))
    assert (rep.a1, rep.k0, rep.a2, rep.B) == (1.0, 1, 1.0, 4.0)
    assert (rep.c1, rep.c2) == (1.0, 1.0)


def test_conditions_queue_rejected():
    queue = build_rate_family([{"head": [0] + [1] * 30, "tail_theta": 1.0}])
    # a single-server queue: the head is flat, so no shift k0 <= 8 increases the rate
    with pytest.raises(MNotSatisfied):
        verify_conditions(queue, k0_max=8)


def test_conditions_staircase():
    rep = verify_conditions(preset("staircase", 2))
    assert rep.a1 == 1.5 and rep.k0 == 2 and rep.a2 == 2.0
    assert rep.B == pytest.approx(1.5 / 2 * 6 + 3)


def test_condition_E_sample():
    rep = verify_conditions(preset("linear", 2), E_sample=[(2, 1), (4, 10), (3, 50)])
    assert 0.3 < rep.E_inf <= rep.E_sup < 0.5
    assert rep.satisfied["E"]


@given(rate_families())
@settings(max_examples=30, deadline=None)
def test_envelope_bounds_rates(rf):
    try:
        rep = verify_conditions(rf)
    except MNotSatisfied:
        return
    for x in range(rf.n_sites):
        for k in range(1, 40):
            assert rep.c1 * k - 1e-9 <= rf.c(x, k) <= rep.c2 * k + 1e-9
    assert rep.B == pytest.approx(rep.a1 / rep.a2 * rep.k0 * (rep.k0 + 1) + rep.k0 + 1)


# --- grand canonical marginals and moments --------------------------------------

def test_poisson_marginal():
    m = marginal(preset("linear", 1), 0, 1.0)
    assert m.Z == pytest.approx(math.e, rel=1e-14)
    assert m.pmf[2] == pytest.approx(0.1839397205857212, rel=1e-12)
    assert m.tail_mass_bound < 1e-14


def test_scaled_rates_give_scaled_poisson():
    m = marginal(preset("linear-theta:2", 1), 0, 1.0)
    ref = poisson_pmf(0.5, len(m.pmf) - 1)
    assert np.allclose(m.pmf, ref, atol=1e-15)


def test_truncation_overflow():
    with pytest.raises(TruncationOverflow):
        marginal(preset("linear", 1), 0, 1e4, k_cap=100)


@given(rate_families(), st.floats(0.05, 20.0))
@settings(max_examples=20, deadline=None)
def test_fugacity_identity_and_normalisation(rf, phi):
    for x in range(rf.n_sites):
        m = marginal(rf, x, phi)
        assert abs(m.pmf.sum() - 1) <= 1e-14
        rates = rf[x].values(len(m.pmf) - 1)
        assert abs(m.pmf @ rates - phi) <= 1e-10 * max(1, phi)


def test_poisson_moments():
    mt = moments(preset("linear", 1), 2.0)
    assert mt.rho[0] == pytest.approx(2.0, rel=1e-13)
    assert mt.sigma2[0] == pytest.approx(2.0, rel=1e-12)
    assert mt.cumulants[0][3] == pytest.approx(2.0, rel=1e-10)


def test_alternating_average_density():
    assert moments(preset("alternating:1,2", 2), 2.0).rho_bar == pytest.approx(1.5, rel=1e-13)


@given(rate_families(), st.floats(0.1, 10.0))
@settings(max_examples=20, deadline=None)
def test_second_cumulant_is_variance(rf, phi):
    mt = moments(rf, phi)
    for x in range(rf.n_sites):
        assert abs(mt.cumulants[x][2] - mt.central[x][2]) <= 1e-12 * max(1, mt.central[x][2])
        assert abs(mt.cumulants[x][1]) <= 1e-12


def test_phi_of_rho_examples():
    assert phi_of_rho(preset("linear", 3), 2.5) == pytest.approx(2.5, rel=1e-12)
    assert phi_of_rho(preset("alternating:1,2", 2), 1.5) == pytest.approx(2.0, rel=1e-12)
    small = [phi_of_rho(preset("linear", 2), rho) for rho in (1e-1, 1e-2, 1e-3)]
    assert small[0] > small[1] > small[2] > 0


@given(rate_families(), st.floats(0.01, 30.0))
@settings(max_examples=20, deadline=None)
def test_phi_of_rho_inverts_density(rf, rho):
    phi = phi_of_rho(rf, rho)
    assert abs(density(rf, phi) - rho) <= 1e-12 * max(1, rho)


def test_density_increasing_in_fugacity():
    rf = preset("staircase", 3)
    vals = [density(rf, phi) for phi in np.geomspace(1e-3, 1e3, 40)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


# --- canonical ensembles -------------------------------------------------------

def test_two_site_ensemble():
    ens = canonical(preset("linear", 2), 2)
    assert [tuple(s) for s in ens.states] == [(2, 0), (1, 1), (0, 2)]
    assert np.allclose(ens.nu, [0.25, 0.5, 0.25], atol=1e-15)
    # detailed balance c_1(1) nu(1,1) = c_2(2) nu(0,2)
    assert 1 * ens.nu[1] / 2 == pytest.approx(2 * ens.nu[2] / 2)


def test_state_count():
    assert len(canonical(preset("linear", 3), 2)) == 6
    assert len(canonical(preset("linear", 4), 7, cube(2, 2))) == math.comb(10, 3)


def test_state_cap():
    with pytest.raises(StateSpaceTooLarge):
        canonical(preset("linear", 10), 20, max_states=1000)


@given(rate_families(), st.integers(0, 5))
@settings(max_examples=25, deadline=None)
def test_canonical_matches_enumeration(rf, r):
    ens = canonical(rf, r)
    states, nu = canonical_law([rf[x] for x in range(rf.n_sites)], r)
    assert [tuple(s) for s in ens.states] == states
    assert np.allclose(ens.nu, nu, rtol=1e-12, atol=1e-15)
    assert abs(ens.nu.sum() - 1) <= 1e-14


@given(rate_families(), st.integers(0, 6))
@settings(max_examples=25, deadline=None)
def test_rank_unrank_bijection(rf, r):
    ens = canonical(rf, r)
    assert np.array_equal(ens.ranks(ens.states), np.arange(len(ens)))
    for i in range(0, len(ens), max(1, len(ens) // 7)):
        assert ens.rank(ens.unrank(i)) == i


@given(rate_families(), st.integers(1, 5), st.floats(0.2, 5.0), st.floats(0.2, 5.0))
@settings(max_examples=25, deadline=None)
def test_conditioning_identity(rf, r, phi_a, phi_b):
    ens = canonical(rf, r)
    for phi in (phi_a, phi_b):
        w = grand_canonical_weights(ens, phi)
        assert np.abs(w / w.sum() - ens.nu).max() <= 1e-12


# --- stochastic domination -----------------------------------------------------

def test_domination_identity():
    ens = canonical(preset("staircase", 2), 3)
    res = check_stochastic_domination(ens, ens)
    assert res.dominated
    ii, jj, q = res.coupling
    assert q.sum() == pytest.approx(1.0)


def test_domination_binomial_pair():
    rf = preset("linear", 2)
    res = check_stochastic_domination(canonical(rf, 2), canonical(rf, 3))
    assert res.dominated and res.max_marginal_error <= 1e-9


def test_domination_wrong_order():
    rf = preset("linear", 2)
    res = check_stochastic_domination(canonical(rf, 3), canonical(rf, 2))
    assert not res.dominated
    assert res.witness.mass_lo > res.witness.mass_hi


def test_domination_failure_has_witness():
    # a slow site 0 concentrates the extra particle there and starves site 1
    slow = build_rate_family([{"head": [0, 1, 50, 50], "tail_theta": 20.0},
                              {"head": [0, 1], "tail_theta": 0.05}])
    lo, hi = canonical(slow, 2), canonical(slow, 3)
    res = check_stochastic_domination(lo, hi)
    if not res.dominated:
        assert res.witness is not None and res.witness.mass_lo > res.witness.mass_hi + 1e-12


@pytest.mark.parametrize("name", ["linear", "staircase", "alternating:1,2"])
def test_domination_consistent_with_monotone_functions(name, rng):
    rf = preset(name, 2)
    rep = verify_conditions(rf)
    lo, hi = canonical(rf, 2), canonical(rf, 2 + math.ceil(rep.B * 2))
    res = check_stochastic_domination(lo, hi)
    assert res.dominated
    R = max(hi.r, lo.r) + 1
    for _ in range(50):
        a = np.cumsum(rng.random(R))
        b = np.cumsum(rng.random(R))
        f_lo = a[lo.states[:, 0]] + b[lo.states[:, 1]]
        f_hi = a[hi.states[:, 0]] + b[hi.states[:, 1]]
        assert lo.nu @ f_lo <= hi.nu @ f_hi + 1e-12


def test_domination_flow_fallback(monkeypatch):
    import zrp.model.domination as dom
    # unscaled masses below the solver tolerance make the LP report infeasibility
    monkeypatch.setattr(dom, "LP_SCALE", 1.0)
    rf = preset("linear", 3)
    lo, hi = canonical(rf, 3, segment(3)), canonical(rf, 15, segment(3))
    res = dom.check_stochastic_domination(lo, hi)
    assert res.dominated and res.max_marginal_error <= 1e-9
    ii, jj, q = res.coupling
    assert np.all(lo.states[ii] <= hi.states[jj])
