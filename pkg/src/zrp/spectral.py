"""Reversible generators on canonical state spaces and their spectral constants.

Conventions: ``D(f) = nu[f (-L) f]``, entropy uses the natural log, and the
three constants are the best values in

    Var(f) <= C_SG D(f),   H(f) <= C_ED nu[f (-L) log f],   H(f) <= C_LS D(sqrt f).

``C_SG`` is computed exactly from an eigensolve. ``C_ED`` and ``C_LS`` are
suprema of nonconvex ratios; the estimates returned here are the largest
ratios actually attained by some density, hence lower bounds of the true
constants.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from scipy.optimize import minimize
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import logsumexp

from .errors import (DegenerateRatio, EigensolveFailure, FitUnderdetermined, InvalidInput,
                     NegativeDensity, NotIrreducible)
from .lattice import Lattice, cube
from .model.measures import CanonicalEnsemble, canonical
from .model.rates import resolve_rates

DENSE_MAX = 4000
DEGENERATE_TOL = 1e-12

TOPOLOGIES = ("nn", "complete")


@dataclass
class GeneratorMatrix:
    """A reversible rate matrix ``L`` with stationary law ``pi``.

    ``edge_i, edge_j, edge_w`` list each connected unordered pair once with
    conductance ``w = pi_i L_ij = pi_j L_ji``, so ``D(f) = sum w (f_i - f_j)^2``.
    """

    L: sp.csr_matrix
    pi: np.ndarray
    topology: str
    ensemble: CanonicalEnsemble | None = None
    edge_i: np.ndarray = field(init=False, repr=False)
    edge_j: np.ndarray = field(init=False, repr=False)
    edge_w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        off = sp.triu(self.L, k=1).tocoo()
        low = sp.triu(self.L.T, k=1).tocsr()
        back = np.asarray(low[off.row, off.col]).ravel()
        self.edge_i, self.edge_j = off.row.astype(np.int64), off.col.astype(np.int64)
        self.edge_w = 0.5 * (self.pi[off.row] * off.data + self.pi[off.col] * back)

    @property
    def n_states(self) -> int:
        return self.L.shape[0]

    def dense(self) -> np.ndarray:
        return self.L.toarray()

    def dirichlet(self, f: np.ndarray) -> float:
        d = f[self.edge_i] - f[self.edge_j]
        return float(self.edge_w @ (d * d))

    def symmetrized(self) -> sp.csr_matrix:
        """``Pi^{1/2} (-L) Pi^{-1/2}``, symmetric by reversibility."""
        s = np.sqrt(self.pi)
        S = sp.diags(s) @ (-self.L) @ sp.diags(1 / s)
        return ((S + S.T) * 0.5).tocsr()

    def reversibility_error(self) -> float:
        F = sp.diags(self.pi) @ self.L
        return float(abs(F - F.T).max()) if F.nnz else 0.0

    def stationarity_error(self) -> float:
        return float(np.abs(self.L.T @ self.pi).max())

    def row_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.L.sum(axis=1)).ravel()).max())


def _irreducible(L: sp.csr_matrix) -> bool:
    if L.shape[0] == 1:
        return True
    n, _ = connected_components(L, directed=True, connection="strong")
    return n == 1


def build_generator(ens: CanonicalEnsemble, topology: str = "nn") -> GeneratorMatrix:
    """Zero range generator on ``ens``.

    ``nn``: every ordered nearest-neighbour pair ``(x, y)`` moves a particle at
    rate ``c_x(eta_x) / 2``. ``complete``: every ordered pair ``x != y`` of the
    volume moves a particle at rate ``c_x(eta_x)``.
    """
    if topology == "nn":
        pairs, factor = ens.lattice.ordered_edges, 0.5
    elif topology == "complete":
        n = ens.n_sites
        pairs, factor = [(x, y) for x in range(n) for y in range(n) if x != y], 1.0
    else:
        raise InvalidInput(f"unknown topology {topology!r}; use one of {TOPOLOGIES}")
    S = ens.states
    crate = ens.site_rates()
    rows, cols, vals = [], [], []
    for x, y in pairs:
        src = np.nonzero(S[:, x] > 0)[0]
        if src.size == 0:
            continue
        tgt = S[src].copy()
        tgt[:, x] -= 1
        tgt[:, y] += 1
        rows.append(src)
        cols.append(ens.ranks(tgt))
        vals.append(factor * crate[src, x])
    n_states = len(ens)
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n_states, n_states)).tocsr()
    L = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    if not _irreducible(L):
        raise NotIrreducible("transition graph is not strongly connected")
    return GeneratorMatrix(L, ens.nu.copy(), topology, ens)


def generator_from_rates(L, pi, topology: str = "custom") -> GeneratorMatrix:
    L = sp.csr_matrix(L)
    if not _irreducible(L):
        raise NotIrreducible("transition graph is not strongly connected")
    return GeneratorMatrix(L, np.asarray(pi, dtype=float), topology)


# ---------------------------------------------------------------------------
# functionals


def entropy(pi: np.ndarray, f: np.ndarray) -> float:
    """``H(f|pi) = pi[f log f] - pi[f] log pi[f]`` for ``f >= 0``."""
    f = np.asarray(f, dtype=float)
    if (f < 0).any():
        raise NegativeDensity("entropy needs a nonnegative function")
    m = float(pi @ f)
    if m == 0:
        return 0.0
    g = f / m
    pos = g > 0
    return m * float(pi[pos] @ (g[pos] * np.log(g[pos]) - g[pos] + 1) + pi[~pos].sum())


def functionals(gen: GeneratorMatrix, f) -> dict:
    """Mean, variance, entropy, ``D(f)`` and ``D(sqrt f)``.

    Entropy and ``D(sqrt f)`` are ``None`` when ``f`` has negative entries.
    """
    f = np.asarray(f, dtype=float)
    pi = gen.pi
    mean = float(pi @ f)
    out = {
        "mean": mean,
        "variance": float(pi @ (f - mean) ** 2),
        "dirichlet": gen.dirichlet(f),
        "entropy": None,
        "dirichlet_sqrt": None,
    }
    if (f >= 0).all():
        out["entropy"] = entropy(pi, f)
        out["dirichlet_sqrt"] = gen.dirichlet(np.sqrt(f))
    return out


def entropy_dissipation(gen: GeneratorMatrix, f) -> float:
    """``nu[f (-L) log f]`` for a positive ``f``."""
    f = np.asarray(f, dtype=float)
    if (f <= 0).any():
        raise NegativeDensity("entropy dissipation needs a positive function")
    i, j = gen.edge_i, gen.edge_j
    return float(gen.edge_w @ ((f[i] - f[j]) * (np.log(f[i]) - np.log(f[j]))))


# ---------------------------------------------------------------------------
# spectral gap


@dataclass
class GapResult:
    gap: float
    eigenfunction: np.ndarray  # right eigenfunction of -L, normalised in L^2(nu)
    residual: float
    method: str

    @property
    def C_SG(self) -> float:
        return 1.0 / self.gap


def spectral_gap(gen: GeneratorMatrix, dense_max: int = DENSE_MAX,
                 residual_tol: float = 1e-9) -> GapResult:
    """Smallest nonzero eigenvalue of ``-L`` via its symmetrisation.

    Dense ``eigh`` up to ``dense_max`` states, otherwise shift-invert Lanczos
    near zero; the constant mode (``sqrt(pi)`` after symmetrising) is removed
    by overlap before picking the gap.
    """
    n = gen.n_states
    if n < 2:
        raise InvalidInput("a spectral gap needs at least two states")
    S = gen.symmetrized()
    root = np.sqrt(gen.pi)
    if n <= dense_max:
        vals, vecs = eigh(S.toarray())
        method = "dense"
    else:
        scale = float(np.abs(S.diagonal()).mean())
        k = min(4, n - 1)
        try:
            vals, vecs = eigsh(S, k=k, sigma=-1e-3 * scale, which="LM", tol=1e-13)
        except ArpackNoConvergence as exc:
            raise EigensolveFailure(str(exc)) from None
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        method = "shift-invert"
    zero = int(np.argmax(np.abs(vecs.T @ root)))
    keep = [i for i in range(len(vals)) if i != zero]
    i = min(keep, key=lambda t: vals[t])
    lam, w = float(vals[i]), vecs[:, i]
    resid = float(np.linalg.norm(S @ w - lam * w))
    if resid > residual_tol * max(1.0, abs(lam)) or not lam > 0:
        raise EigensolveFailure(f"eigenpair residual {resid:.2e}, eigenvalue {lam:.3e}")
    v = w / root
    v /= math.sqrt(gen.pi @ v ** 2)
    return GapResult(lam, v, resid, method)


# ---------------------------------------------------------------------------
# log-Sobolev and entropy-dissipation constants


def _phi_series(a: np.ndarray) -> np.ndarray:
    """``e^a a - e^a + 1`` computed without cancellation."""
    out = np.empty_like(a)
    small = np.abs(a) < 1e-2
    s = a[small]
    out[small] = s * s * (1 / 2 + s * (1 / 3 + s * (1 / 8 + s * (1 / 30 + s * (1 / 144 + s / 840)))))
    b = a[~small]
    out[~small] = np.exp(b) * b - np.expm1(b)
    return out


class _Ratio:
    """``H / D(sqrt f)`` (LS) or ``H / nu[f(-L)log f]`` (ED) as a function of ``u = log f``."""

    def __init__(self, gen: GeneratorMatrix, kind: str):
        if kind not in ("LS", "ED"):
            raise InvalidInput("kind must be 'LS' or 'ED'")
        self.kind = kind
        self.pi = gen.pi
        self.logpi = np.log(gen.pi)
        self.i, self.j, self.w = gen.edge_i, gen.edge_j, gen.edge_w
        self.n = gen.n_states
        self.n_evals = 0
        self.best = -math.inf
        self.best_u = None
        self.record: list | None = None

    def parts(self, u: np.ndarray):
        a = u - logsumexp(u, b=self.pi)
        if np.abs(np.expm1(a)).max() < DEGENERATE_TOL:
            raise DegenerateRatio("density is within 1e-12 of the constant")
        fh = np.exp(a)
        H = float(self.pi @ _phi_series(a))
        i, j, w = self.i, self.j, self.w
        da = a[i] - a[j]
        gH = self.pi * fh * a
        if self.kind == "LS":
            ds = np.exp(a[j] / 2) * np.expm1(da / 2)
            den = float(w @ (ds * ds))
            s = np.exp(a / 2)
            gD = (np.bincount(i, w * s[i] * ds, self.n) - np.bincount(j, w * s[j] * ds, self.n))
        else:
            df = fh[j] * np.expm1(da)
            den = float(w @ (df * da))
            gD = (np.bincount(i, w * (fh[i] * da + df), self.n)
                  - np.bincount(j, w * (fh[j] * da + df), self.n))
        return H, den, gH, gD, fh

    def value(self, u: np.ndarray) -> float:
        H, den, *_ = self.parts(u)
        return H / den

    def __call__(self, u: np.ndarray):
        self.n_evals += 1
        try:
            H, den, gH, gD, fh = self.parts(u)
        except DegenerateRatio:
            return 0.0, np.zeros_like(u)
        if not den > 0:
            return 0.0, np.zeros_like(u)
        R = H / den
        if self.record is not None:
            self.record.append(fh)
        if R > self.best:
            self.best, self.best_u = R, u.copy()
        grad = (gH * den - H * gD) / den ** 2
        return -R, -grad


def ratio(gen: GeneratorMatrix, f, kind: str = "LS") -> float:
    """The LS or ED ratio at a positive density ``f``."""
    f = np.asarray(f, dtype=float)
    if (f <= 0).any():
        raise NegativeDensity("ratio needs a positive function")
    return _Ratio(gen, kind).value(np.log(f))


@dataclass
class ConstantEstimate:
    kind: str
    value: float
    density: np.ndarray
    restarts: int
    n_evals: int
    restart_values: list
    near_constant_limit: float
    probes: list | None = None

    def diagnostics(self) -> dict:
        return {
            "kind": self.kind, "restarts": self.restarts, "n_evals": self.n_evals,
            "best_restart": int(np.argmax(self.restart_values)) if self.restart_values else None,
            "near_constant_limit": self.near_constant_limit,
        }


def _starts(gen: GeneratorMatrix, gap_vec: np.ndarray, restarts: int, rng, extra) -> list:
    pi, n = gen.pi, gen.n_states
    starts = [np.log1p(1e-3 * gap_vec / np.abs(gap_vec).max())]
    for f in extra:
        starts.append(np.log(np.clip(np.asarray(f, dtype=float), 1e-300, None)))
    delta = 1e-3
    spikes = [int(np.argmin(pi)), int(np.argmax(pi)),
              int(np.argmax(gap_vec)), int(np.argmin(gap_vec))]
    n_spike = min(n, max(4, restarts // 4))
    spikes += [int(s) for s in rng.permutation(n)[:n_spike]]
    for s in dict.fromkeys(spikes):
        if len(starts) >= restarts:
            break
        f = np.full(n, delta)
        f[s] += (1 - delta) / pi[s]
        starts.append(np.log(f))
    while len(starts) < restarts:
        w = rng.dirichlet(np.ones(n))
        starts.append(np.log(np.clip(w / pi, 1e-300, None)))
    return starts[:max(restarts, 1 + len(extra))]


def estimate_constant(gen: GeneratorMatrix, kind: str = "LS", restarts: int = 32,
                      iterations: int = 2000, seed: int = 0, extra_starts: Sequence = (),
                      record: bool = False, gap: GapResult | None = None) -> ConstantEstimate:
    """Multi-start maximisation of the LS or ED ratio over densities.

    Each restart runs L-BFGS on ``u = log f`` (the dual coordinates of the
    entropic mirror map), stopping when the relative improvement drops below
    1e-10. Starts: a small perturbation along the gap eigenfunction, any
    ``extra_starts``, spiked densities and Dirichlet draws from a generator
    seeded with ``seed``. The returned value is the largest ratio evaluated
    anywhere, including the near-constant limit along the gap eigenfunction.
    """
    if gen.n_states < 2:
        raise InvalidInput("need at least two states")
    rng = np.random.default_rng(seed)
    gap = gap or spectral_gap(gen)
    obj = _Ratio(gen, kind)
    if record:
        obj.record = []
    v = gap.eigenfunction
    near = obj(np.log1p(1e-4 * v / np.abs(v).max()))
    near_limit = -near[0]
    values = []
    for u0 in _starts(gen, v, restarts, rng, extra_starts):
        res = minimize(obj, u0, jac=True, method="L-BFGS-B",
                       bounds=[(-60.0, 60.0)] * gen.n_states,
                       options={"maxiter": iterations, "ftol": 1e-10, "gtol": 1e-12})
        values.append(-float(res.fun))
    best_u = obj.best_u
    dens = np.exp(best_u - logsumexp(best_u, b=gen.pi))
    return ConstantEstimate(kind, obj.best, dens, len(values), obj.n_evals, values,
                            near_limit, obj.record)


@dataclass
class SpectralReport:
    gap: float
    C_SG: float
    C_ED_hat: float
    C_LS_hat: float
    diagnostics: dict

    def as_dict(self) -> dict:
        return {"gap": self.gap, "C_SG": self.C_SG, "C_ED_hat": self.C_ED_hat,
                "C_LS_hat": self.C_LS_hat, "diagnostics": self.diagnostics}


def spectral_report(gen: GeneratorMatrix, restarts: int = 32, iterations: int = 2000,
                    seed: int = 0) -> SpectralReport:
    """Gap plus both optimisation estimates; the LS search is also started at the ED optimum."""
    g = spectral_gap(gen)
    ed = estimate_constant(gen, "ED", restarts, iterations, seed, gap=g)
    ls = estimate_constant(gen, "LS", restarts, iterations, seed, extra_starts=[ed.density], gap=g)
    return SpectralReport(g.gap, g.C_SG, ed.value, ls.value,
                          {"gap_method": g.method, "gap_residual": g.residual,
                           "ED": ed.diagnostics(), "LS": ls.diagnostics()})


def rothaus_check(pi: np.ndarray, f, slack: float = 1e-10) -> dict:
    """``H(f) <= H((sqrt f - nu[sqrt f])^2) + 2 Var(sqrt f)``."""
    f = np.asarray(f, dtype=float)
    if (f < 0).any():
        raise NegativeDensity("Rothaus check needs a nonnegative function")
    s = np.sqrt(f)
    m = float(pi @ s)
    lhs = entropy(pi, f)
    rhs = entropy(pi, (s - m) ** 2) + 2 * float(pi @ (s - m) ** 2)
    return {"lhs": lhs, "rhs": rhs, "holds": lhs <= rhs + slack}


# ---------------------------------------------------------------------------
# scaling sweeps


@dataclass
class SweepResult:
    kind: str
    rows: list  # (N, r, constant)
    slope: float
    intercept: float

    def table(self) -> list[dict]:
        return [{"N": N, "r": r, "constant": c, "log_constant": math.log(c)}
                for N, r, c in self.rows]


def fit_loglog(xs, ys) -> tuple[float, float]:
    if len(xs) < 2 or len(set(xs)) < 2:
        raise FitUnderdetermined("need at least two distinct sizes to fit an exponent")
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return float(slope), float(intercept)


def sweep_point(rates, dim: int, N: int, r: int, kind: str, topology: str = "nn",
                restarts: int = 32, seed: int = 0) -> float:
    lat = cube(dim, N)
    ens = canonical(resolve_rates(rates, lat.n_sites), r, lat)
    gen = build_generator(ens, topology)
    g = spectral_gap(gen)
    if kind == "gap":
        return g.C_SG
    if kind == "LS":
        ed = estimate_constant(gen, "ED", restarts, seed=seed, gap=g)
        return estimate_constant(gen, "LS", restarts, seed=seed, extra_starts=[ed.density],
                                 gap=g).value
    if kind == "ED":
        return estimate_constant(gen, "ED", restarts, seed=seed, gap=g).value
    raise InvalidInput(f"unknown sweep kind {kind!r}")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("ZRP_THREADS", "1")))
    except ValueError:
        return 1


def scaling_sweep(rates, dim: int, N_list: Sequence[int],
                  r_rule: Callable[[int], int] = lambda N: N, kind: str = "gap",
                  topology: str = "nn", restarts: int = 32, seed: int = 0,
                  workers: int | None = None) -> SweepResult:
    """Constant per side length ``N`` (``C_SG`` for ``kind='gap'``) and the log-log slope.

    ``rates`` is a preset name, a family to tile, or a callable ``n_sites -> RateFamily``
    (the latter must be picklable when ``workers > 1``).
    """
    N_list = list(N_list)
    if len(set(N_list)) < 2:
        raise FitUnderdetermined("need at least two distinct sizes to fit an exponent")
    rs = [r_rule(N) for N in N_list]
    args = [(rates, dim, N, r, kind, topology, restarts, seed) for N, r in zip(N_list, rs)]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            consts = list(ex.map(sweep_point, *zip(*args)))
    else:
        consts = [sweep_point(*a) for a in args]
    slope, intercept = fit_loglog(N_list, consts)
    return SweepResult(kind, list(zip(N_list, rs, consts)), slope, intercept)


def lattice_for(dim: int, side: int) -> Lattice:
    return cube(dim, side)
