"""Rate families, invariant measures, hypotheses on the rates, and stochastic order."""

from .conditions import ConditionReport, domination_threshold, verify_conditions
from .domination import DominationResult, IncreasingEvent, check_stochastic_domination
from .measures import (
    CanonicalEnsemble,
    GrandCanonicalMarginal,
    MomentTable,
    canonical,
    cumulants_from_central,
    density,
    e_statistic,
    grand_canonical_weights,
    log_sum_prob,
    marginal,
    moments,
    n_configurations,
    phi_of_rho,
    sum_pmf,
)
from .rates import (
    RateFamily,
    ShiftedSiteRate,
    SiteRate,
    alternating,
    build_rate_family,
    from_callable,
    h_factor,
    linear,
    load_rate_file,
    preset,
    resolve_rates,
    staircase,
)

__all__ = [
    "CanonicalEnsemble", "ConditionReport", "DominationResult", "GrandCanonicalMarginal",
    "IncreasingEvent", "MomentTable", "RateFamily", "ShiftedSiteRate", "SiteRate", "alternating",
    "build_rate_family", "canonical", "check_stochastic_domination", "cumulants_from_central",
    "density", "domination_threshold", "e_statistic", "from_callable", "grand_canonical_weights",
    "h_factor", "linear", "load_rate_file", "log_sum_prob", "marginal", "moments",
    "n_configurations", "phi_of_rho", "preset", "resolve_rates", "staircase", "sum_pmf", "verify_conditions",
]
