"""Grand canonical marginals, moments, the density-fugacity map and canonical ensembles."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from ..errors import NoConvergence, StateSpaceTooLarge, TruncationOverflow
from ..lattice import Lattice, segment
from .rates import RateFamily, SiteRate

EPS_TRUNC = 1e-14
K_CAP = 200_000
MAX_STATES = 200_000


@dataclass(frozen=True)
class GrandCanonicalMarginal:
    site: int
    phi: float
    pmf: np.ndarray
    Z: float
    log_Z: float
    K_trunc: int
    tail_mass_bound: float

    def mean(self, fn) -> float:
        return float(self.pmf @ fn(np.arange(self.K_trunc + 1)))


def _truncation_level(site: SiteRate, phi: float, eps: float, k_cap: int) -> tuple[int, float]:
    """Smallest K with sum_{k>K} (phi/c1)^k / k! <= eps (relative to Z >= 1)."""
    c1, _ = site.envelope()
    a = phi / c1
    start = max(site.k_head, int(math.ceil(2 * a)) + 1, 1)
    if start > k_cap:
        raise TruncationOverflow(f"phi={phi} needs more than {k_cap} terms")
    K = np.arange(start, k_cap + 1)
    # geometric bound on the tail beyond K+1 holds because K + 2 > 2a
    log_tail = (K + 1) * math.log(a) - gammaln(K + 2) - np.log1p(-a / (K + 2))
    ok = np.nonzero(log_tail <= math.log(eps))[0]
    if ok.size == 0:
        raise TruncationOverflow(f"phi={phi}: tail bound not met below K={k_cap}")
    i = ok[0]
    return int(K[i]), float(math.exp(log_tail[i]))


@lru_cache(maxsize=4096)
def _site_marginal(site: SiteRate, phi: float, eps: float, k_cap: int):
    if phi == 0.0:
        return np.array([1.0]), 0.0, 0, 0.0
    K, tail = _truncation_level(site, phi, eps, k_cap)
    logw = np.arange(K + 1) * math.log(phi) - site.log_factorials(K)
    log_Z = float(logsumexp(logw))
    pmf = np.exp(logw - log_Z)
    pmf /= pmf.sum()
    pmf.setflags(write=False)
    return pmf, log_Z, K, tail


def marginal(rf: RateFamily, x: int, phi: float, eps_trunc: float = EPS_TRUNC,
             k_cap: int = K_CAP) -> GrandCanonicalMarginal:
    """Law of ``eta_x`` under the grand canonical measure with fugacity ``phi``.

    ``pmf(k) ∝ phi^k / c_x(k)!`` on ``0..K_trunc``, where ``K_trunc`` is the
    first level at which the analytic tail bound drops below ``eps_trunc``.
    ``phi = 0`` gives the point mass at 0.
    """
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    if not 0 < eps_trunc <= 1e-6:
        raise ValueError("eps_trunc must lie in (0, 1e-6]")
    pmf, log_Z, K, tail = _site_marginal(rf[x], float(phi), eps_trunc, k_cap)
    return GrandCanonicalMarginal(x, float(phi), pmf, math.exp(log_Z) if log_Z < 700 else math.inf,
                                  log_Z, K, tail)


@dataclass(frozen=True)
class MomentTable:
    phi: float
    rho: np.ndarray            # per-site mean
    sigma2: np.ndarray         # per-site variance
    central: np.ndarray        # central[x, k] = E(eta_x - rho_x)^k, k = 0..order
    cumulants: np.ndarray      # cumulants[x, m], m = 0..order; column 1 is 0 (centred)
    mean_rate: np.ndarray      # E c_x(eta_x); equals phi
    order: int

    @property
    def rho_bar(self) -> float:
        return float(self.rho.mean())

    @property
    def sigma2_bar(self) -> float:
        return float(self.sigma2.mean())

    def cumulant_bar(self, m: int) -> float:
        """Site average of the ``m``-th cumulant."""
        return float(self.cumulants[:, m].mean())


def cumulants_from_central(central: np.ndarray) -> np.ndarray:
    """Moment-cumulant recursion for a centred variable (``central[0] = 1``)."""
    order = len(central) - 1
    kappa = np.zeros(order + 1)
    for n in range(2, order + 1):
        s = central[n]
        for k in range(2, n - 1):
            s -= math.comb(n - 1, k - 1) * kappa[k] * central[n - k]
        kappa[n] = s
    return kappa


@lru_cache(maxsize=4096)
def _site_moments(site: SiteRate, phi: float, order: int, eps: float):
    pmf, _, K, _ = _site_marginal(site, phi, eps, K_CAP)
    k = np.arange(K + 1, dtype=float)
    rho = float(pmf @ k)
    d = k - rho
    central = np.array([float(pmf @ d ** n) for n in range(order + 1)])
    central[1] = 0.0
    return rho, central, cumulants_from_central(central), float(pmf @ site.values(K))


def moments(rf: RateFamily, phi: float, order: int = 8, sites=None,
            eps_trunc: float = EPS_TRUNC) -> MomentTable:
    """Per-site moments and cumulants of the grand canonical marginals at ``phi``."""
    if not 2 <= order <= 8:
        raise ValueError("order must be between 2 and 8")
    idx = range(rf.n_sites) if sites is None else sites
    rows = [_site_moments(rf[x], float(phi), order, eps_trunc) for x in idx]
    rho = np.array([r[0] for r in rows])
    central = np.stack([r[1] for r in rows])
    cum = np.stack([r[2] for r in rows])
    return MomentTable(float(phi), rho, central[:, 2].copy(), central, cum,
                       np.array([r[3] for r in rows]), order)


def density(rf: RateFamily, phi: float, sites=None) -> float:
    """Average density ``rho_Λ(phi)`` over ``sites`` (default: all)."""
    if phi == 0:
        return 0.0
    return moments(rf, phi, 2, sites).rho_bar


def phi_of_rho(rf: RateFamily, rho: float, sites=None, tol: float = 1e-12,
               max_iter: int = 200) -> float:
    """Invert the strictly increasing map ``phi -> rho_Λ(phi)``.

    Brackets with the envelope constants (growing by a factor 4 when needed),
    solves with Brent's method and polishes with Newton steps using
    ``d rho / d phi = sigma^2 / phi``.
    """
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if rho == 0:
        return 0.0
    sub = rf if sites is None else rf.subset(sites)
    c1, c2 = sub.envelope()
    target_tol = tol * max(1.0, rho)

    def resid(phi):
        return density(sub, phi) - rho

    lo, hi = c1 * rho, c2 * rho
    for _ in range(max_iter):
        if resid(lo) <= 0:
            break
        lo /= 4
    else:
        raise NoConvergence("could not bracket phi from below")
    for _ in range(max_iter):
        if resid(hi) >= 0:
            break
        hi *= 4
    else:
        raise NoConvergence("could not bracket phi from above")
    if resid(lo) == 0:
        return lo
    phi = brentq(resid, lo, hi, xtol=1e-15 * hi, rtol=1e-15, maxiter=max_iter)
    for _ in range(10):
        mt = moments(sub, phi, 2)
        r = mt.rho_bar - rho
        if abs(r) <= target_tol:
            return phi
        phi = phi - r * phi / mt.sigma2_bar
    mt = moments(sub, phi, 2)
    if abs(mt.rho_bar - rho) > target_tol:
        raise NoConvergence(f"phi(rho={rho}) residual {mt.rho_bar - rho:.3e}")
    return phi


def sum_pmf(rf: RateFamily, phi: float, sites=None, eps_trunc: float = EPS_TRUNC) -> np.ndarray:
    """Law of ``R = sum_x eta_x`` under the product of truncated marginals."""
    idx = range(rf.n_sites) if sites is None else sites
    out = np.array([1.0])
    for x in idx:
        out = np.convolve(out, _site_marginal(rf[x], float(phi), eps_trunc, K_CAP)[0])
    return out


def log_sum_prob(rf: RateFamily, phi: float, r: int, sites=None) -> float:
    """``log mu_phi(R = r)`` on ``sites`` (``-inf`` outside the truncated support)."""
    p = sum_pmf(rf, phi, sites)
    if r >= len(p) or p[r] <= 0:
        return -math.inf
    return math.log(p[r])


def e_statistic(rf: RateFamily, r: int) -> float:
    """``sqrt(r) * mu_{phi(r/|Λ|)}(R = r)`` for the volume spanned by ``rf``."""
    phi = phi_of_rho(rf, r / rf.n_sites)
    p = sum_pmf(rf, phi)
    return math.sqrt(r) * (p[r] if r < len(p) else 0.0)


# ---------------------------------------------------------------------------
# canonical ensembles


def n_configurations(n_sites: int, r: int) -> int:
    if n_sites == 0:
        return 1 if r == 0 else 0
    return math.comb(r + n_sites - 1, n_sites - 1)


def _enumerate_desc(n: int, r: int) -> np.ndarray:
    """All occupation vectors with ``n`` sites and ``r`` particles, descending lex order."""
    if n == 1:
        return np.array([[r]], dtype=np.int64)
    blocks = []
    for v in range(r, -1, -1):
        rest = _enumerate_desc(n - 1, r - v)
        blocks.append(np.hstack([np.full((len(rest), 1), v, dtype=np.int64), rest]))
    return np.vstack(blocks)


class CanonicalEnsemble:
    """The law ``nu_{Λ,r}(eta) ∝ prod_x 1/c_x(eta_x)!`` on configurations with ``r`` particles.

    States are stored in descending lexicographic order of occupation
    vectors, so ``(r, 0, .., 0)`` has rank 0 and ``(0, .., 0, r)`` has the last
    rank. ``rank``/``unrank`` are the combinatorial bijections for that order.
    """

    def __init__(self, rates: RateFamily, r: int, lattice: Lattice | None = None,
                 max_states: int = MAX_STATES):
        if r < 0:
            raise ValueError("particle number must be nonnegative")
        n = rates.n_sites
        if lattice is None:
            lattice = segment(n)
        if lattice.n_sites != n:
            raise ValueError(f"lattice has {lattice.n_sites} sites but rates cover {n}")
        size = n_configurations(n, r)
        if size > max_states:
            raise StateSpaceTooLarge(f"{size} configurations exceed the cap {max_states}")
        self.rates = rates
        self.lattice = lattice
        self.r = r
        self.n_sites = n
        self.states = _enumerate_desc(n, r)
        self._counts = np.array([[n_configurations(m, k) for k in range(r + 2)]
                                 for m in range(n + 2)], dtype=np.int64)
        logf = rates.log_factorial_table(r)
        self.log_weights = -logf[np.arange(n), self.states].sum(axis=1)
        self.log_Z = float(logsumexp(self.log_weights))
        nu = np.exp(self.log_weights - self.log_Z)
        self.nu = nu / nu.sum()

    def __len__(self) -> int:
        return len(self.states)

    def __repr__(self) -> str:
        return f"CanonicalEnsemble(n_sites={self.n_sites}, r={self.r}, states={len(self)})"

    def ranks(self, states: np.ndarray) -> np.ndarray:
        """Vectorised rank of each row of ``states`` (all with ``r`` particles)."""
        states = np.atleast_2d(states)
        n = self.n_sites
        rem = self.r - np.cumsum(states, axis=1) + states
        out = np.zeros(len(states), dtype=np.int64)
        for i in range(n - 1):
            K = rem[:, i] - states[:, i] - 1
            valid = K >= 0
            out[valid] += self._counts[n - i, K[valid]]
        return out

    def rank(self, eta) -> int:
        eta = np.asarray(eta, dtype=np.int64)
        if eta.shape != (self.n_sites,) or eta.sum() != self.r or (eta < 0).any():
            raise ValueError(f"{eta.tolist()} is not a configuration of this ensemble")
        return int(self.ranks(eta[None, :])[0])

    def unrank(self, i: int) -> np.ndarray:
        if not 0 <= i < len(self):
            raise IndexError(i)
        eta = np.zeros(self.n_sites, dtype=np.int64)
        rem = self.r
        for pos in range(self.n_sites - 1):
            m = self.n_sites - pos - 1
            v = rem
            # skip blocks with larger values at this position
            while True:
                block = n_configurations(m, rem - v)
                if i < block:
                    break
                i -= block
                v -= 1
            eta[pos] = v
            rem -= v
        eta[-1] = rem
        return eta

    def expect(self, values: np.ndarray) -> float:
        return float(self.nu @ values)

    def site_rates(self) -> np.ndarray:
        """``c_x(eta_x)`` for every state (rows) and site (columns)."""
        table = self.rates.rate_table(self.r)
        return table[np.arange(self.n_sites), self.states]

    def marginal(self, x: int) -> np.ndarray:
        """Law of ``eta_x`` under ``nu`` on ``0..r``."""
        return np.bincount(self.states[:, x], weights=self.nu, minlength=self.r + 1)

    def count_law(self, sites) -> np.ndarray:
        """Law of the number of particles in ``sites`` on ``0..r``."""
        R1 = self.states[:, list(sites)].sum(axis=1)
        return np.bincount(R1, weights=self.nu, minlength=self.r + 1)


def canonical(rf: RateFamily, r: int, lattice: Lattice | None = None,
              max_states: int = MAX_STATES) -> CanonicalEnsemble:
    return CanonicalEnsemble(rf, r, lattice, max_states)


def grand_canonical_weights(ens: CanonicalEnsemble, phi: float) -> np.ndarray:
    """Product-measure probability of each state of ``ens`` at fugacity ``phi``."""
    logp = np.zeros(len(ens))
    for x in range(ens.n_sites):
        m = marginal(ens.rates, x, phi)
        k = ens.states[:, x]
        logp += k * math.log(phi) - ens.rates[x].log_factorials(ens.r)[k] - m.log_Z
    return np.exp(logp)
