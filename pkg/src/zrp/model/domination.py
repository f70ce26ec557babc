"""Stochastic domination between canonical ensembles.

``nu_lo <= nu_hi`` in the componentwise order iff there is a coupling
supported on ``{eta <= xi}``. Feasibility of that transport problem is
decided by linear programming, with a max-flow on the same network as the
fallback when the solver reports infeasibility; a min-cut then produces an
increasing event with ``nu_lo(U) > nu_hi(U)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx
import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix

from ..errors import InvalidInput, PairSpaceTooLarge
from .measures import CanonicalEnsemble

MAX_PAIRS = 5_000_000
# the LP solver's feasibility tolerance is absolute (1e-7); masses are scaled up
# so that small probabilities are not lost in it
LP_SCALE = 1e6


@dataclass
class IncreasingEvent:
    """The up-set generated by ``generators``: all ``zeta >= g`` for some ``g``."""

    generators: np.ndarray
    mass_lo: float
    mass_hi: float

    def contains(self, states: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        return (states[:, None, :] >= self.generators[None, :, :]).all(axis=2).any(axis=1)


@dataclass
class DominationResult:
    dominated: bool
    coupling: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None  # (i_lo, j_hi, mass)
    witness: IncreasingEvent | None = None
    max_marginal_error: float = 0.0


def _order_pairs(lo: np.ndarray, hi: np.ndarray):
    """Index pairs ``(i, j)`` with ``lo[i] <= hi[j]`` componentwise."""
    ii, jj = [], []
    for i, eta in enumerate(lo):
        j = np.nonzero((hi >= eta).all(axis=1))[0]
        ii.append(np.full(len(j), i))
        jj.append(j)
    return np.concatenate(ii), np.concatenate(jj)


def _network(nu_lo, nu_hi, ii, jj) -> nx.DiGraph:
    G = nx.DiGraph()
    for i, p in enumerate(nu_lo.nu):
        G.add_edge("s", ("a", i), capacity=float(p))
    for j, p in enumerate(nu_hi.nu):
        G.add_edge(("b", j), "t", capacity=float(p))
    for i, j in zip(ii, jj):
        G.add_edge(("a", int(i)), ("b", int(j)))  # no capacity attribute = infinite
    return G


def _flow_coupling(G: nx.DiGraph, n_lo: int):
    value, flow = nx.maximum_flow(G, "s", "t")
    ii, jj, q = [], [], []
    for i in range(n_lo):
        for (_, j), m in flow[("a", i)].items():
            if m > 0:
                ii.append(i)
                jj.append(j)
                q.append(m)
    return value, (np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64), np.array(q))


def _witness(nu_lo, nu_hi, G: nx.DiGraph) -> IncreasingEvent | None:
    _, (S, _) = nx.minimum_cut(G, "s", "t")
    gens = sorted(i for kind, i in (n for n in S if n != "s") if kind == "a")
    if not gens:
        return None
    event = IncreasingEvent(nu_lo.states[gens], 0.0, 0.0)
    event.mass_lo = float(nu_lo.nu[event.contains(nu_lo.states)].sum())
    event.mass_hi = float(nu_hi.nu[event.contains(nu_hi.states)].sum())
    return event if event.mass_lo > event.mass_hi else None


def check_stochastic_domination(nu_lo: CanonicalEnsemble, nu_hi: CanonicalEnsemble,
                                max_pairs: int = MAX_PAIRS, tol: float = 1e-9) -> DominationResult:
    """Decide whether ``nu_lo`` is stochastically dominated by ``nu_hi``."""
    if nu_lo.n_sites != nu_hi.n_sites:
        raise InvalidInput("ensembles live on different volumes")
    if nu_lo.r > nu_hi.r:
        # every eta has more particles than any xi, so {R >= r_lo} separates them
        return DominationResult(False, witness=IncreasingEvent(nu_lo.states, 1.0, 0.0))
    if len(nu_lo) * len(nu_hi) > max_pairs:
        raise PairSpaceTooLarge(f"{len(nu_lo)} x {len(nu_hi)} pairs exceed the cap {max_pairs}")

    ii, jj = _order_pairs(nu_lo.states, nu_hi.states)
    n_lo, n_hi, n_var = len(nu_lo), len(nu_hi), len(ii)
    rows = np.concatenate([ii, n_lo + jj])
    cols = np.concatenate([np.arange(n_var), np.arange(n_var)])
    A = coo_matrix((np.ones(2 * n_var), (rows, cols)), shape=(n_lo + n_hi, n_var)).tocsr()
    b = np.concatenate([nu_lo.nu, nu_hi.nu])
    res = linprog(np.zeros(n_var), A_eq=A, b_eq=LP_SCALE * b, bounds=(0, None), method="highs")
    if res.status == 0:
        q = np.clip(res.x, 0, None) / LP_SCALE
        err = float(np.abs(A @ q - b).max())
        if err <= tol:
            keep = q > 0
            return DominationResult(True, (ii[keep], jj[keep], q[keep]), None, err)
    G = _network(nu_lo, nu_hi, ii, jj)
    value, (fi, fj, fq) = _flow_coupling(G, n_lo)
    if value >= 1 - tol:
        err = max(float(np.abs(np.bincount(fi, fq, n_lo) - nu_lo.nu).max()),
                  float(np.abs(np.bincount(fj, fq, n_hi) - nu_hi.nu).max()))
        return DominationResult(True, (fi, fj, fq), None, err)
    return DominationResult(False, witness=_witness(nu_lo, nu_hi, G))
