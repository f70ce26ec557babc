"""Checks of the standing hypotheses on the rates: Lipschitz growth (LG),
weak monotonicity (M), the linear envelope, and sampled statistics for (E)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInput, MNotSatisfied
from .measures import e_statistic
from .rates import RateFamily


@dataclass(frozen=True)
class ConditionReport:
    a1: float
    k0: int
    a2: float
    c1: float
    c2: float
    B: float
    E_inf: float = math.nan
    E_sup: float = math.nan
    E_sample: tuple = ()
    m_candidates: dict = field(default_factory=dict)
    satisfied: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "a1": self.a1, "k0": self.k0, "a2": self.a2, "c1": self.c1, "c2": self.c2,
            "B": self.B, "E_inf": self.E_inf, "E_sup": self.E_sup,
            "satisfied": dict(self.satisfied),
        }


def domination_threshold(a1: float, a2: float, k0: int) -> float:
    """``B = (a1/a2) k0 (k0+1) + k0 + 1``; ``M >= B|Λ|`` suffices for domination."""
    return a1 / a2 * k0 * (k0 + 1) + k0 + 1


def _scan_limit(rf: RateFamily) -> int:
    return max(s.scan_limit for s in rf.sites)


def lipschitz_constant(rf: RateFamily) -> float:
    """``sup_{k,x} |c_x(k+1) - c_x(k)|``; exact for periodic tails."""
    K = _scan_limit(rf)
    return float(max(np.abs(np.diff(s.values(K + 1))).max() for s in set(rf.sites)))


def monotonicity_gap(rf: RateFamily, k0: int) -> float:
    """``inf_{k,x} c_x(k+k0) - c_x(k)``."""
    K = _scan_limit(rf)
    return float(min((v[k0:] - v[:-k0]).min()
                     for v in (s.values(K + k0) for s in set(rf.sites))))


def verify_conditions(rf: RateFamily, k0_max: int = 8, E_sample=None) -> ConditionReport:
    """Compute (LG)/(M) constants, the envelope, ``B``, and (E) statistics.

    Among the ``k0 <= k0_max`` with a positive monotonicity gap, the one with
    the smallest ``B`` is reported (ties go to the smaller ``k0``).
    ``E_sample`` is a list of ``(|Λ|, r)`` pairs; the family is tiled to ``|Λ|``
    sites and ``sqrt(r) mu(R = r)`` is evaluated by exact convolution.
    """
    a1 = lipschitz_constant(rf)
    gaps = {k0: monotonicity_gap(rf, k0) for k0 in range(1, k0_max + 1)}
    ok = {k0: g for k0, g in gaps.items() if g > 0}
    if not ok:
        raise MNotSatisfied(f"inf_k c(k+k0) - c(k) <= 0 for every k0 <= {k0_max}")
    k0 = min(ok, key=lambda k: (domination_threshold(a1, ok[k], k), k))
    a2 = ok[k0]
    c1, c2 = rf.envelope()
    B = domination_threshold(a1, a2, k0)

    E_inf = E_sup = math.nan
    sample = ()
    satisfied = {"LG": math.isfinite(a1), "M": True}
    if E_sample is not None:
        sample = tuple((int(n), int(r)) for n, r in E_sample)
        if not sample:
            raise InvalidInput("E_sample is empty")
        if any(n < 2 or r < 1 for n, r in sample):
            raise InvalidInput("E_sample needs sizes >= 2 and r >= 1")
        vals = [e_statistic(rf.tile(n), r) for n, r in sample]
        E_inf, E_sup = min(vals), max(vals)
        satisfied["E"] = E_inf > 0 and math.isfinite(E_sup)
    return ConditionReport(a1, k0, a2, c1, c2, B, E_inf, E_sup, sample, gaps, satisfied)
