"""Local limit theorems for the total particle count under product measures.

The exact law of ``R = sum_x eta_x`` comes from convolving truncated
marginals; it is the oracle for the Edgeworth (normal regime) and Poisson
(small total count) approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

from .errors import FitUnderdetermined, InvalidInput
from .model.measures import EPS_TRUNC, marginal, moments, phi_of_rho, sum_pmf
from .model.rates import RateFamily, resolve_rates

Z_MAX = 6.0


def hermite(m: int, x):
    """Probabilists' Hermite polynomial ``He_m(x)``."""
    if m < 0:
        raise InvalidInput("degree must be nonnegative")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if m == 0:
        return prev if prev.ndim else float(prev)
    for n in range(1, m):
        prev, cur = cur, x * cur - n * prev
    return cur if cur.ndim else float(cur)


@lru_cache(maxsize=None)
def edgeworth_terms(j: int) -> tuple:
    """Solutions ``(k_1..k_j)`` of ``k_1 + 2k_2 + ... + j k_j = j`` with ``a = sum k``."""
    if j < 1:
        raise InvalidInput("j must be at least 1")
    out = []

    def rec(m, left, acc):
        if m > j:
            if left == 0:
                out.append((tuple(acc), sum(acc)))
            return
        for k in range(left // m + 1):
            rec(m + 1, left - m * k, acc + [k])

    rec(1, j, [])
    return tuple(sorted(out))


def normal_density(z):
    return np.exp(-0.5 * np.asarray(z, dtype=float) ** 2) / math.sqrt(2 * math.pi)


@dataclass
class EdgeworthExpansion:
    """``g_0..g_{J-2}`` from normalised cumulants ``lam[m] = kappa_m / sigma^m``.

    Cumulants and variance are site averages, so for independent non-identical
    sites the series is the classical one in powers of ``N^{-1/2}``.
    """

    J: int
    sigma: float
    lam: dict

    def g(self, j: int, z):
        z = np.asarray(z, dtype=float)
        if j == 0:
            return normal_density(z)
        total = np.zeros_like(z)
        for ks, a in edgeworth_terms(j):
            coef = 1.0
            for m, k in enumerate(ks, start=1):
                if k:
                    coef *= (self.lam[m + 2] / math.factorial(m + 2)) ** k / math.factorial(k)
            total = total + coef * hermite(j + 2 * a, z)
        return normal_density(z) * total

    def series(self, z, N: int):
        """``sum_{j=0}^{J-2} N^{-j/2} g_j(z)``."""
        return sum(N ** (-j / 2) * self.g(j, z) for j in range(self.J - 1))

    def integral(self, j: int) -> float:
        return quad(lambda t: float(self.g(j, t)), -np.inf, np.inf, epsabs=1e-12, limit=200)[0]


def edgeworth(rf: RateFamily, phi: float, J: int) -> EdgeworthExpansion:
    if J < 2:
        raise InvalidInput("J must be at least 2")
    mt = moments(rf, phi, order=max(J, 2))
    s2 = mt.sigma2_bar
    lam = {m: mt.cumulant_bar(m) / s2 ** (m / 2) for m in range(3, J + 1)}
    return EdgeworthExpansion(J, math.sqrt(s2), lam)


@dataclass
class SumDistribution:
    rates: RateFamily
    phi: float
    pmf: np.ndarray
    tail_bound: float

    def prob(self, r: int) -> float:
        return float(self.pmf[r]) if 0 <= r < len(self.pmf) else 0.0


def sum_distribution(rf: RateFamily, phi: float, eps_trunc: float = EPS_TRUNC) -> SumDistribution:
    """Law of ``R`` by convolving site marginals in site order."""
    if phi <= 0:
        raise InvalidInput("fugacity must be positive")
    return SumDistribution(rf, phi, sum_pmf(rf, phi, eps_trunc=eps_trunc), eps_trunc * rf.n_sites)


def llt_normal(rf: RateFamily, r: int, J: int = 2, phi: float | None = None) -> dict:
    """Edgeworth approximation of ``mu_phi(R = r)`` against the exact value.

    ``phi`` defaults to the fugacity matching density ``r/N``. ``scaled_err``
    compares ``sqrt(N sigma^2) mu(R=r)`` with the series itself.
    """
    N = rf.n_sites
    phi = phi_of_rho(rf, r / N) if phi is None else phi
    ex = edgeworth(rf, phi, J)
    mt = moments(rf, phi, order=2)
    z = (r - N * mt.rho_bar) / (ex.sigma * math.sqrt(N))
    series = float(ex.series(z, N))
    approx = series / math.sqrt(N * ex.sigma ** 2)
    exact = sum_distribution(rf, phi).prob(r)
    return {"phi": phi, "z": z, "approx": approx, "exact": exact,
            "abs_err": abs(approx - exact),
            "scaled_err": abs(math.sqrt(N) * ex.sigma * exact - series)}


def sup_error(rf: RateFamily, phi: float, J: int, z_max: float = Z_MAX) -> float:
    """``sup_r |sqrt(N sigma^2) mu(R=r) - series(z_r)|`` over integers with ``|z_r| <= z_max``."""
    N = rf.n_sites
    ex = edgeworth(rf, phi, J)
    rho = moments(rf, phi, order=2).rho_bar
    pmf = sum_distribution(rf, phi).pmf
    scale = ex.sigma * math.sqrt(N)
    lo = max(0, math.ceil(N * rho - z_max * scale))
    hi = math.floor(N * rho + z_max * scale)
    rs = np.arange(lo, hi + 1)
    exact = np.where(rs < len(pmf), pmf[np.minimum(rs, len(pmf) - 1)], 0.0)
    z = (rs - N * rho) / scale
    return float(np.abs(scale * exact - ex.series(z, N)).max())


def fit_slope(xs, ys) -> float:
    if len(set(xs)) < 2:
        raise FitUnderdetermined("need at least two distinct sizes to fit a rate")
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def error_table(rates, N_list: Sequence[int], J_list: Sequence[int], phi: float = 1.0) -> dict:
    """Rows ``(N, J, sup_err)`` and the fitted log-log decay slope per ``J``."""
    rows = []
    for J in J_list:
        for N in N_list:
            rows.append((N, J, sup_error(resolve_rates(rates, N), phi, J)))
    slopes = {J: fit_slope([n for n, j, _ in rows if j == J], [e for _, j, e in rows if j == J])
              for J in J_list} if len(set(N_list)) > 1 else {}
    return {"rows": rows, "slopes": slopes}


def llt_poisson(rf: RateFamily, r: int, k: int, phi: float | None = None) -> dict:
    """``mu_phi(R = k)`` against ``r^k e^{-r} / k!`` with ``phi`` matched to density ``r/N``."""
    phi = phi_of_rho(rf, r / rf.n_sites) if phi is None else phi
    exact = sum_distribution(rf, phi).prob(k)
    approx = math.exp(k * math.log(r) - r - gammaln(k + 1)) if r > 0 else float(k == 0)
    return {"phi": phi, "approx": approx, "exact": exact, "abs_err": abs(approx - exact)}


def poisson_sup_error(rf: RateFamily, r: int) -> float:
    """``sup_k |mu(R=k) - r^k e^{-r}/k!|`` over the support of the truncated law."""
    phi = phi_of_rho(rf, r / rf.n_sites)
    pmf = sum_distribution(rf, phi).pmf
    k = np.arange(len(pmf))
    approx = np.exp(k * math.log(r) - r - gammaln(k + 1))
    return float(np.abs(pmf - approx).max())


def charfn_scan(rf: RateFamily, x: int, phi: float, t_grid, delta: float = 0.5) -> dict:
    """``|E exp(i t (eta_x - rho_x)/sigma_x)|`` on ``t_grid`` and its max over ``|t| >= delta``."""
    m = marginal(rf, x, phi)
    k = np.arange(len(m.pmf))
    rho = float(m.pmf @ k)
    sigma = math.sqrt(float(m.pmf @ (k - rho) ** 2))
    t = np.asarray(t_grid, dtype=float)
    if (np.abs(t) > math.pi * sigma + 1e-12).any():
        raise InvalidInput("t_grid must lie in [-pi sigma, pi sigma]")
    vals = np.abs(np.exp(1j * np.outer(t, k - rho) / sigma) @ m.pmf)
    far = np.abs(t) >= delta
    return {"t": t, "modulus": vals, "sigma": sigma,
            "max_beyond_delta": float(vals[far].max()) if far.any() else None}


def condition_E_scan(rates, sizes: Sequence[int], r_max: int) -> dict:
    """``sqrt(r) mu_{phi(r/|Λ|)}(R = r)`` for ``|Λ|`` in ``sizes`` and ``r = 1..r_max``."""
    if any(n < 2 for n in sizes):
        raise InvalidInput("volume sizes must be at least 2")
    rows = []
    for n in sizes:
        rf = resolve_rates(rates, n)
        for r in range(1, r_max + 1):
            phi = phi_of_rho(rf, r / n)
            rows.append((n, r, math.sqrt(r) * sum_distribution(rf, phi).prob(r)))
    vals = [v for *_, v in rows]
    return {"rows": rows, "inf": min(vals), "sup": max(vals)}
