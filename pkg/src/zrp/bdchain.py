"""Birth-death reductions of the canonical ensemble.

A chain on ``{0..r}`` is given by births ``b(0..r-1)`` and deaths
``d(1..r)``; its stationary law solves ``pi(k) b(k) = pi(k+1) d(k+1)``. Chains
are turned into :class:`~zrp.spectral.GeneratorMatrix` objects so the gap and
log-Sobolev machinery is shared with the full process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import InvalidInput, ZeroMass
from .model.measures import CanonicalEnsemble, canonical, marginal, phi_of_rho
from .model.rates import RateFamily, h_factor
from .spectral import GeneratorMatrix, estimate_constant, generator_from_rates, spectral_gap

A0_GRID = tuple(1.25 ** i for i in range(19)) + (64.0,)


@dataclass
class BirthDeathChain:
    birth: np.ndarray  # b(k), k = 0..r-1
    death: np.ndarray  # d(k), k = 1..r
    kind: str = "birth-death"

    def __post_init__(self):
        self.birth = np.asarray(self.birth, dtype=float)
        self.death = np.asarray(self.death, dtype=float)
        if len(self.birth) != len(self.death):
            raise InvalidInput("need as many birth rates as death rates")
        if (self.birth <= 0).any() or (self.death <= 0).any():
            raise InvalidInput("birth and death rates must be positive on their domains")

    @property
    def r(self) -> int:
        return len(self.birth)

    @property
    def n_states(self) -> int:
        return self.r + 1

    def d(self, k: int) -> float:
        return float(self.death[k - 1])

    def b(self, k: int) -> float:
        return float(self.birth[k])

    @property
    def stationary(self) -> np.ndarray:
        steps = np.log(self.birth) - np.log(self.death)
        logp = np.concatenate([[0.0], np.cumsum(steps)])
        p = np.exp(logp - logsumexp(logp))
        return p / p.sum()

    def balance_error(self) -> float:
        p = self.stationary
        if self.r == 0:
            return 0.0
        return float(np.abs(p[:-1] * self.birth - p[1:] * self.death).max())

    def generator(self) -> GeneratorMatrix:
        n = self.n_states
        k = np.arange(self.r)
        L = sp.coo_matrix((np.concatenate([self.birth, self.death]),
                           (np.concatenate([k, k + 1]), np.concatenate([k + 1, k]))),
                          shape=(n, n)).tocsr()
        L = L - sp.diags(np.asarray(L.sum(axis=1)).ravel())
        return generator_from_rates(L, self.stationary, self.kind)

    def gap(self) -> float:
        return spectral_gap(self.generator()).gap

    def logsob(self, restarts: int = 16, seed: int = 0) -> float:
        gen = self.generator()
        g = spectral_gap(gen)
        ed = estimate_constant(gen, "ED", restarts, seed=seed, gap=g)
        return estimate_constant(gen, "LS", restarts, seed=seed, extra_starts=[ed.density],
                                 gap=g).value

    def dirichlet(self, psi) -> float:
        """``sum_k pi(k) b(k) (psi(k+1) - psi(k))^2``."""
        psi = np.asarray(psi, dtype=float)
        return float((self.stationary[:-1] * self.birth) @ np.diff(psi) ** 2)

    def summary(self) -> dict:
        return {"birth": self.birth.tolist(), "death": self.death.tolist()}

    def report(self, logsob: bool = True, restarts: int = 16, seed: int = 0) -> dict:
        """JSON-ready record ``{kind, r, rates_summary, gap, logsob, conditions}``."""
        return {
            "kind": self.kind,
            "r": self.r,
            "rates_summary": self.summary(),
            "gap": self.gap() if self.r else None,
            "logsob": self.logsob(restarts, seed) if (logsob and self.r) else None,
            "conditions": check_bdspecgap_conditions(self),
        }


# ---------------------------------------------------------------------------
# boundary count law


@dataclass
class BoundaryCountLaw:
    part1: tuple
    part2: tuple
    r: int
    gamma1: np.ndarray

    @property
    def gamma2(self) -> np.ndarray:
        return self.gamma1[::-1].copy()


def _split(n_sites: int, split) -> tuple[tuple, tuple]:
    """``split`` is the first part, or a ``(part1, part2)`` pair covering the volume."""
    split = list(split)
    if len(split) == 2 and all(isinstance(p, (tuple, list)) for p in split):
        if sorted(int(x) for p in split for x in p) != list(range(n_sites)):
            raise InvalidInput("split parts must partition the volume")
        split = split[0]
    part1 = tuple(sorted(int(x) for x in split))
    if not part1 or len(set(part1)) != len(part1) or not set(part1) <= set(range(n_sites)):
        raise InvalidInput("split must be a nonempty set of distinct sites of the volume")
    part2 = tuple(x for x in range(n_sites) if x not in part1)
    if not part2:
        raise InvalidInput("split must leave a nonempty complement")
    return part1, part2


def halves(n_sites: int) -> tuple:
    """First ``ceil(n/2)`` sites, the default split."""
    return tuple(range((n_sites + 1) // 2))


def gamma1(ens: CanonicalEnsemble, split=None) -> BoundaryCountLaw:
    """Law of ``R_1`` (particles in ``split``) under ``ens`` by exact marginalisation."""
    part1, part2 = _split(ens.n_sites, halves(ens.n_sites) if split is None else split)
    return BoundaryCountLaw(part1, part2, ens.r, ens.count_law(part1))


def log_count_weights(rf: RateFamily, sites: Sequence[int], kmax: int) -> np.ndarray:
    """``log sum_{|eta|=k} prod_x 1/c_x(eta_x)!`` on ``sites`` for ``k = 0..kmax``."""
    out = np.full(kmax + 1, -np.inf)
    out[0] = 0.0
    for x in sites:
        lf = -rf[x].log_factorials(kmax)
        new = np.full(kmax + 1, -np.inf)
        for k in range(kmax + 1):
            new[k] = logsumexp(out[:k + 1] + lf[k::-1])
        out = new
    return out


def gamma1_from_rates(rf: RateFamily, split, r: int) -> BoundaryCountLaw:
    """Same law as :func:`gamma1` from half-volume weights, without enumerating states."""
    part1, part2 = _split(rf.n_sites, split)
    w1 = log_count_weights(rf, part1, r)
    w2 = log_count_weights(rf, part2, r)
    logg = w1 + w2[::-1]
    g = np.exp(logg - logsumexp(logg))
    return BoundaryCountLaw(part1, part2, r, g / g.sum())


def gammabounds_constant(law: BoundaryCountLaw | np.ndarray) -> float:
    """Smallest ``C`` with ``C^-1 <= gamma(r1-1)/gamma(r1) * (r-r1+1)/r1 <= C`` for all ``r1``."""
    g = law.gamma1 if isinstance(law, BoundaryCountLaw) else np.asarray(law)
    r = len(g) - 1
    if r == 0:
        return 1.0
    if (g <= 0).any():
        return math.inf
    r1 = np.arange(1, r + 1)
    q = g[:-1] / g[1:] * (r - r1 + 1) / r1
    return float(max(q.max(), 1 / q.min()))


def metropolis_chain(law: BoundaryCountLaw | np.ndarray) -> BirthDeathChain:
    """Births ``min(g(k+1)/g(k), 1)`` and deaths ``min(g(k-1)/g(k), 1)``."""
    g = law.gamma1 if isinstance(law, BoundaryCountLaw) else np.asarray(law, dtype=float)
    if (g <= 0).any():
        raise ZeroMass("the law vanishes somewhere on {0..r}")
    birth = np.minimum(g[1:] / g[:-1], 1.0)
    death = np.minimum(g[:-1] / g[1:], 1.0)
    return BirthDeathChain(birth, death, "metropolis")


def single_site_chain(ens: CanonicalEnsemble, x: int) -> BirthDeathChain:
    """Occupation of ``x``: deaths ``c_x(k)``, births averaged over the neighbours ``y`` of
    ``x`` of the mean of ``c_y`` in the ensemble on the other sites with ``r-k`` particles.
    """
    if ens.r < 1:
        raise InvalidInput("single-site chain needs at least one particle")
    nbrs = ens.lattice.neighbours(x)
    if not nbrs:
        raise InvalidInput(f"site {x} has no neighbours")
    others = [y for y in range(ens.n_sites) if y != x]
    sub_rates = ens.rates.subset(others)
    sub_lat = ens.lattice.induced(others)
    pos = [others.index(y) for y in nbrs]
    birth = np.empty(ens.r)
    for k in range(ens.r):
        sub = canonical(sub_rates, ens.r - k, sub_lat)
        crates = sub.site_rates()
        birth[k] = np.mean([sub.expect(crates[:, p]) for p in pos])
    death = ens.rates[x].values(ens.r)[1:]
    return BirthDeathChain(birth, death, "single-site")


def check_bdspecgap_conditions(chain: BirthDeathChain, J0: float = 0.0,
                               tol: float = 1e-12) -> dict:
    """Fit the hypotheses ``|b(k+1)-b(k)| <= J2`` and ``d(k)-d(j) >= J1(k-j) - J0``.

    ``J1`` is the largest slope of an affine lower envelope allowing offset
    ``J0`` (default 0, the tightest envelope). The chain is admissible when
    ``J1 > J2`` and ``d* = min d > 0``; ``boundary`` marks ``J1 == J2``.
    """
    b, d = chain.birth, np.concatenate([[0.0], chain.death])
    J2 = float(np.abs(np.diff(b)).max()) if len(b) > 1 else 0.0
    r = chain.r
    if r >= 1:
        k = np.arange(r + 1)
        K, Jm = np.meshgrid(k, k, indexing="ij")
        mask = K > Jm
        J1 = float(((d[K] - d[Jm] + J0)[mask] / (K - Jm)[mask]).min())
    else:
        J1 = math.inf
    d_star = float(chain.death.min()) if r else math.inf
    return {
        "J0": J0, "J1": J1, "J2": J2, "d_star": d_star,
        "admissible": bool(J1 > J2 + tol and d_star > 0),
        "boundary": bool(abs(J1 - J2) <= tol),
    }


# ---------------------------------------------------------------------------
# Miclo-type conditions


def _miclo_margins(logg: np.ndarray, r_bar: int, A0: float) -> dict:
    """Log-margins (>= 0 means the condition holds) of the three conditions at ``(r_bar, A0)``."""
    r = len(logg) - 1
    k = np.arange(r + 1)
    scale = A0 * r_bar
    with np.errstate(invalid="ignore"):
        up = np.append(logg[1:], -np.inf) - logg  # log g(k+1)/g(k)
        down = np.insert(logg[:-1], 0, -np.inf) - logg  # log g(k-1)/g(k)
    above, below = k > r_bar, k < r_bar
    m1 = (-(k - r_bar) / scale - up)[above]
    m2 = (-np.abs(k - r_bar) / scale - down)[below]
    dev2 = (k - r_bar) ** 2 / r_bar
    lower = -math.log(A0 * math.sqrt(r_bar)) - A0 * dev2
    upper = math.log(A0 / math.sqrt(r_bar)) - dev2 / A0
    m3 = np.minimum(logg - lower, upper - logg)

    def worst(m):
        m = m[~np.isnan(m)]
        return float(m.min()) if m.size else math.inf

    return {"ratio_above": worst(m1), "ratio_below": worst(m2), "gaussian": worst(m3)}


def miclo_check(law, A0_grid: Sequence[float] = A0_GRID) -> dict:
    """Smallest grid ``A0`` for which some admissible ``r_bar`` meets all three conditions.

    The conditions on a law ``g`` on ``{0..r}``: ratio decay
    ``g(k+1)/g(k) <= exp(-(k-r_bar)/(A0 r_bar))`` above ``r_bar`` and the mirror
    image below, and the two-sided Gaussian envelope
    ``exp(-A0 (k-r_bar)^2/r_bar) / (A0 sqrt(r_bar)) <= g(k) <= A0/sqrt(r_bar) exp(-(k-r_bar)^2/(A0 r_bar))``.
    """
    if isinstance(law, BoundaryCountLaw):
        g = law.gamma1
    elif isinstance(law, ModifiedMeasure):
        g = law.gamma1_eps
    else:
        g = np.asarray(law, dtype=float)
    r = len(g) - 1
    if r < 2:
        raise InvalidInput("Miclo conditions need r >= 2")
    with np.errstate(divide="ignore"):
        logg = np.log(g)
    best = None
    for A0 in sorted(A0_grid):
        for r_bar in range(1, r + 1):
            if not (r_bar / A0 <= r - r_bar <= A0 * r_bar):
                continue
            m = _miclo_margins(logg, r_bar, A0)
            if best is None or min(m.values()) > min(best["margins"].values()):
                best = {"A0": A0, "r_bar": r_bar, "margins": m}
            if min(m.values()) >= 0:
                return {"passed": True, "A0_min": A0, "r_bar": r_bar, "margins": m}
    out = {"passed": False, "A0_min": None, "r_bar": None, "margins": None}
    if best is not None:
        out.update(r_bar=best["r_bar"], margins=best["margins"], closest_A0=best["A0"])
    return out


# ---------------------------------------------------------------------------
# modified boundary measure


@dataclass
class ModifiedMeasure:
    epsilon: float
    r: int
    r_bar: int
    I_eps: tuple  # (lo, hi) inclusive
    H_vals: np.ndarray
    Z_norm: float
    gamma1: np.ndarray
    gamma1_eps: np.ndarray

    def equivalence_bounds(self) -> tuple[float, float]:
        q = self.gamma1_eps / self.gamma1
        return float(q.min()), float(q.max())


def _log_mass(rf: RateFamily, sites, phi: float, k: int) -> float:
    """``k log phi - sum_x log Z_x(phi)``; the configuration-count factor cancels in ``H``."""
    if phi == 0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(phi) - sum(marginal(rf, x, phi).log_Z for x in sites)


def modified_measure(law: BoundaryCountLaw, rf: RateFamily, epsilon: float) -> ModifiedMeasure:
    """Reweight the law on ``I_eps = [eps r, (1-eps) r]`` by ``exp(-H)``.

    ``H(r1)`` is the log of the product of half-volume probabilities of
    ``(R1, R2) = (r1, r-r1)`` at the fugacities matched to those counts,
    divided by the same probabilities at the fugacities matched to
    ``(r_bar, r-r_bar)``. Hence ``H(r_bar) = 0``.
    """
    if not 0 < epsilon < 0.25:
        raise InvalidInput("epsilon must lie in (0, 1/4)")
    r = law.r
    if r < 4:
        raise InvalidInput("modified measure needs r >= 4")
    p1, p2 = law.part1, law.part2
    sub1, sub2 = rf.subset(p1), rf.subset(p2)
    r_bar = math.ceil(r / 2)

    def phi1(k):
        return phi_of_rho(sub1, k / len(p1)) if k > 0 else 0.0

    def phi2(k):
        return phi_of_rho(sub2, k / len(p2)) if k > 0 else 0.0

    b1, b2 = phi1(r_bar), phi2(r - r_bar)
    H = np.empty(r + 1)
    for r1 in range(r + 1):
        num = _log_mass(rf, p1, phi1(r1), r1) + _log_mass(rf, p2, phi2(r - r1), r - r1)
        den = _log_mass(rf, p1, b1, r1) + _log_mass(rf, p2, b2, r - r1)
        H[r1] = num - den
    lo, hi = math.ceil(epsilon * r), math.floor((1 - epsilon) * r)
    inside = np.zeros(r + 1, dtype=bool)
    inside[lo:hi + 1] = True
    g = law.gamma1
    Z = float(np.exp(-H[inside]).sum() / g[inside].sum())
    geps = g.copy()
    geps[inside] = np.exp(-H[inside]) / Z
    return ModifiedMeasure(epsilon, r, r_bar, (lo, hi), H, Z, g.copy(), geps)


# ---------------------------------------------------------------------------
# conditional-difference identity


def _moved(ens: CanonicalEnsemble, src: np.ndarray, frm: int, to: int) -> np.ndarray:
    S = ens.states[src].copy()
    S[:, frm] -= 1
    S[:, to] += 1
    return ens.ranks(S)


def _transfer_terms(ens: CanonicalEnsemble, f: np.ndarray, rows: np.ndarray,
                    into: Sequence[int], out_of: Sequence[int]):
    """At each state in ``rows``: ``G = sum h_x(eta_x) c_y(eta_y)`` and
    ``S = sum h_x(eta_x) c_y(eta_y) (f(eta^{y,x}) - f(eta))`` over ``x in into``, ``y in out_of``.
    """
    rf = ens.rates
    states = ens.states[rows]
    crates = ens.site_rates()[rows]
    G = np.zeros(len(rows))
    S = np.zeros(len(rows))
    for x in into:
        h = np.array([h_factor(rf, x, int(k)) for k in states[:, x]])
        for y in out_of:
            cy = crates[:, y]
            w = h * cy
            G += w
            ok = states[:, y] > 0
            if ok.any():
                tgt = _moved(ens, rows[ok], y, x)
                S[ok] += w[ok] * (f[tgt] - f[rows[ok]])
    return G, S


def conditional_difference_check(ens: CanonicalEnsemble, split, f, r1: int,
                                 mirrored: bool = False) -> dict:
    """Both sides of the exact expression for ``nu(f|R1=r1) - nu(f|R1=r1-1)``.

    Direct form (conditioning on ``R1 = r1-1``)::

        g(r1-1)/g(r1) / (r1 |Λ2|) * [ E(S_12) + Cov(f, G_12) ]

    where particles move from ``y in Λ2`` into ``x in Λ1``. The mirrored form
    conditions on ``R1 = r1``, moves particles from ``Λ1`` into ``Λ2``, has
    prefactor ``g(r1)/g(r1-1) / ((r-r1+1) |Λ1|)`` and the opposite sign.
    """
    f = np.asarray(f, dtype=float)
    part1, part2 = _split(ens.n_sites, split)
    r = ens.r
    if not 1 <= r1 <= r:
        raise InvalidInput("r1 must lie in 1..r")
    R1 = ens.states[:, list(part1)].sum(axis=1)
    g = np.bincount(R1, weights=ens.nu, minlength=r + 1)
    if g[r1] <= 0 or g[r1 - 1] <= 0:
        raise ZeroMass("conditioning event has zero probability")

    def cond_mean(vals, level):
        m = R1 == level
        return float(ens.nu[m] @ vals / g[level])

    lhs = cond_mean(f[R1 == r1], r1) - cond_mean(f[R1 == r1 - 1], r1 - 1)
    if mirrored:
        level, into, out_of = r1, part2, part1
        pref = -g[r1] / g[r1 - 1] / ((r - r1 + 1) * len(part1))
    else:
        level, into, out_of = r1 - 1, part1, part2
        pref = g[r1 - 1] / g[r1] / (r1 * len(part2))
    rows = np.nonzero(R1 == level)[0]
    G, S = _transfer_terms(ens, f, rows, into, out_of)
    fl = f[rows]
    cov = cond_mean(fl * G, level) - cond_mean(fl, level) * cond_mean(G, level)
    rhs = float(pref * (cond_mean(S, level) + cov))
    return {"lhs": float(lhs), "rhs": rhs, "abs_err": abs(float(lhs) - rhs)}


# ---------------------------------------------------------------------------
# two-site process


def two_site_chain(ens: CanonicalEnsemble, topology: str = "nn") -> BirthDeathChain:
    """The two-site process as a chain in ``k = eta_1``: deaths ``q c_1(k)``, births ``q c_2(r-k)``.

    ``q`` is ``1/2`` for nearest-neighbour dynamics and ``1`` on the complete graph.
    """
    if ens.n_sites != 2:
        raise InvalidInput("two-site reduction needs exactly two sites")
    q = 0.5 if topology == "nn" else 1.0
    r = ens.r
    c1 = ens.rates[0].values(r)
    c2 = ens.rates[1].values(r)
    birth = q * c2[r - np.arange(r)]
    death = q * c1[1:]
    return BirthDeathChain(birth, death, "two-site")


def reduced_dirichlet(law: np.ndarray, c1: np.ndarray, psi, q: float = 0.5) -> float:
    """``sum_{k>=1} g(k) q c_1(k) (psi(k-1) - psi(k))^2``."""
    psi = np.asarray(psi, dtype=float)
    return float((law[1:] * q * c1[1:len(law)]) @ np.diff(psi) ** 2)


def two_site_logsob(ens: CanonicalEnsemble, restarts: int = 16, seed: int = 0) -> float:
    """Log-Sobolev constant estimate of the two-site process with ``r`` particles."""
    if ens.r == 0:
        return 0.0
    return two_site_chain(ens).logsob(restarts, seed)


def two_site_sweep(rf: RateFamily, r_values: Sequence[int], restarts: int = 16,
                   seed: int = 0) -> dict:
    vals = [two_site_logsob(canonical(rf, r), restarts, seed) for r in r_values]
    return {"r": list(r_values), "logsob": vals, "sup": max(vals)}
