"""Event-driven simulation of zero range dynamics.

Nearest-neighbour dynamics move a particle from ``x`` to each neighbour ``y``
at rate ``c_x(eta_x)/2``; complete-graph dynamics move it to every other
site at rate ``c_x(eta_x)``. In the two-colour process a colour-``i`` particle
leaves ``x`` at rate ``eta_i(x) c(eta(x)) / eta(x)`` per target, so summing
over colours recovers the colour-blind process.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import InsufficientSignal, InvalidInitial, InvalidInput
from .lattice import Lattice, complete_graph
from .model.conditions import verify_conditions
from .model.measures import CanonicalEnsemble, canonical, n_configurations
from .model.rates import RateFamily, ShiftedSiteRate, SiteRate
from .spectral import DENSE_MAX, build_generator, spectral_gap

TOPOLOGIES = ("nn", "complete", "two-colour")


@dataclass
class Trajectory:
    seed: int
    topology: str
    sample_times: np.ndarray
    samples: np.ndarray  # (n_samples, n_sites), colour-blind occupations
    event_times: np.ndarray
    colour_samples: tuple | None = None  # (eta1 samples, eta2 samples)
    final: np.ndarray | None = None

    @property
    def n_events(self) -> int:
        return len(self.event_times)

    def observe(self, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
        return np.asarray(f(self.samples), dtype=float)

    def summary(self) -> dict:
        return {"seed": self.seed, "topology": self.topology, "n_events": self.n_events,
                "T": float(self.sample_times[-1]) if len(self.sample_times) else 0.0,
                "final": self.final.tolist() if self.final is not None else None,
                "mean_occupation": self.samples.mean(axis=0).tolist()}


def occupation(x: int) -> Callable[[np.ndarray], np.ndarray]:
    """Observable ``eta -> eta_x`` acting on rows of a sample array."""
    return lambda S: np.asarray(S)[:, x]


def _check_initial(eta, n: int, r: int | None) -> np.ndarray:
    eta = np.asarray(eta, dtype=np.int64)
    if eta.shape != (n,) or (eta < 0).any():
        raise InvalidInitial(f"initial configuration must be {n} nonnegative integers")
    if r is not None and eta.sum() != r:
        raise InvalidInitial(f"initial configuration holds {eta.sum()} particles, expected {r}")
    return eta


def _jump_structure(lattice: Lattice, topology: str):
    """Per-site multiplicity of targets, rate factor, and target lists."""
    n = lattice.n_sites
    if topology == "complete":
        targets = [[y for y in range(n) if y != x] for x in range(n)]
        factor = 1.0
    else:
        targets = [lattice.neighbours(x) for x in range(n)]
        factor = 0.5
    mult = np.array([len(t) for t in targets], dtype=float) * factor
    return targets, mult


def _gap_guess(rf: RateFamily, lattice: Lattice, r: int, topology: str) -> float:
    if r > 0 and n_configurations(lattice.n_sites, r) <= DENSE_MAX:
        return spectral_gap(build_generator(canonical(rf, r, lattice),
                                            "complete" if topology == "complete" else "nn")).gap
    c1, _ = rf.envelope()
    if topology == "complete":
        return c1
    side = lattice.side or lattice.n_sites
    return c1 * (1 - math.cos(math.pi / side))


def simulate(rf: RateFamily, lattice: Lattice, r: int | None = None, T: float = 1.0,
             seed: int = 0, topology: str = "nn", sample_dt: float | None = None,
             initial=None, colours: tuple | None = None, initial_colours: tuple | None = None,
             max_events: int = 10 ** 7) -> Trajectory:
    """Exact event-driven path on ``[0, T]`` sampled every ``sample_dt``.

    Default initial state: each particle placed independently and uniformly.
    For ``topology='two-colour'`` pass ``colours=(r1, r2)`` or ``initial_colours``;
    spatial moves then follow nearest-neighbour rates. The colour-blind path
    uses the same random stream as the single-colour simulation, so equal seeds
    and equal colour-blind initial states give identical colour-blind paths.
    """
    if topology not in TOPOLOGIES:
        raise InvalidInput(f"unknown topology {topology!r}; use one of {TOPOLOGIES}")
    if not T > 0:
        raise InvalidInput("T must be positive")
    n = lattice.n_sites
    if rf.n_sites != n:
        raise InvalidInput("rate family and lattice disagree on the number of sites")
    init_ss, move_ss, colour_ss = np.random.SeedSequence(seed).spawn(3)
    init_rng = np.random.default_rng(init_ss)
    two = topology == "two-colour"
    if two:
        if initial_colours is not None:
            e1 = _check_initial(initial_colours[0], n, None)
            e2 = _check_initial(initial_colours[1], n, None)
        elif colours is not None:
            e1 = init_rng.multinomial(colours[0], np.full(n, 1 / n))
            e2 = init_rng.multinomial(colours[1], np.full(n, 1 / n))
        else:
            raise InvalidInitial("two-colour dynamics need colour counts or an initial pair")
        eta = e1 + e2
        r = int(eta.sum())
    elif initial is not None:
        eta = _check_initial(initial, n, r)
        r = int(eta.sum())
    else:
        if r is None or r < 0:
            raise InvalidInitial("need a nonnegative particle number or an initial configuration")
        eta = init_rng.multinomial(r, np.full(n, 1 / n))
    eta = eta.astype(np.int64).copy()

    if sample_dt is None:
        sample_dt = 0.1 / _gap_guess(rf, lattice, r, topology) if r > 0 else T
    grid = np.arange(0.0, T + 1e-12 * T, sample_dt)
    samples = np.empty((len(grid), n), dtype=np.int64)
    if two:
        s1, s2 = np.empty_like(samples), np.empty_like(samples)
    targets, mult = _jump_structure(lattice, "complete" if topology == "complete" else "nn")
    table = rf.rate_table(r)
    rng = np.random.default_rng(move_ss)
    crng = np.random.default_rng(colour_ss)
    idx = np.arange(n)
    t, i, events = 0.0, 0, []
    while True:
        w = mult * table[idx, eta]
        total = w.sum()
        t_next = t + rng.exponential(1 / total) if total > 0 else math.inf
        while i < len(grid) and grid[i] < min(t_next, T + 1e-12 * T):
            samples[i] = eta
            if two:
                s1[i], s2[i] = e1, e2
            i += 1
        if t_next > T or len(events) >= max_events:
            break
        t = t_next
        x = int(np.searchsorted(np.cumsum(w), rng.random() * total, side="right"))
        x = min(x, n - 1)
        y = targets[x][int(rng.integers(len(targets[x])))]
        eta[x] -= 1
        eta[y] += 1
        if two:
            if crng.random() * (e1[x] + e2[x]) < e1[x]:
                e1[x] -= 1
                e1[y] += 1
            else:
                e2[x] -= 1
                e2[y] += 1
        events.append(t)
    return Trajectory(seed, topology, grid[:i], samples[:i], np.array(events),
                      (s1[:i], s2[:i]) if two else None, eta.copy())


def observable_series(trajectories: Sequence[Trajectory], f) -> list[dict]:
    """Rows ``{t, mean, var, n}`` of ``f`` across replicas at each common sample time."""
    m = min(len(tr.sample_times) for tr in trajectories)
    vals = np.array([tr.observe(f)[:m] for tr in trajectories])
    t = trajectories[0].sample_times[:m]
    var = vals.var(axis=0, ddof=1) if len(trajectories) > 1 else np.zeros(m)
    return [{"t": float(t[k]), "mean": float(vals[:, k].mean()), "var": float(var[k]),
             "n": len(trajectories)} for k in range(m)]


# ---------------------------------------------------------------------------
# relaxation rate


def _replica(args):
    rf, lattice, r, T, seed, topology, dt, initial = args
    tr = simulate(rf, lattice, r, T, seed, topology, dt, initial=initial)
    return tr.samples


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("ZRP_THREADS", "1")))
    except ValueError:
        return 1


@dataclass
class DecayEstimate:
    lambda_hat: float
    stderr: float
    lags: np.ndarray  # t values, Var[P_t f] = C(2t)
    variance: np.ndarray  # estimated Var[P_t f] on the fit window
    replicas: int
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"lambda_hat": self.lambda_hat, "stderr": self.stderr, "replicas": self.replicas,
                "t": self.lags.tolist(), "var": self.variance.tolist(), **self.diagnostics}


def _autocov(F: np.ndarray, mean: float, max_lag: int) -> np.ndarray:
    """Stationary autocovariance averaged over replicas (rows) and time origins."""
    G = F - mean
    return np.array([(G[:, :G.shape[1] - s] * G[:, s:]).mean() for s in range(max_lag + 1)])


def estimate_decay(rf: RateFamily, lattice: Lattice, r: int, f, replicas: int = 200,
                   T: float | None = None, seed: int = 0, topology: str = "nn",
                   sample_dt: float | None = None, n_batches: int = 40,
                   workers: int | None = None) -> DecayEstimate:
    """Exponential decay rate of ``t -> Var_nu[P_t f]`` from stationary replicas.

    By reversibility ``Var_nu[P_t f] = Cov_nu(f(eta_0), f(eta_{2t}))``; the
    covariance is estimated over replicas and time origins, and ``log`` of it
    is regressed on ``t`` over the window where it stays above ``e^{-2}`` of
    its initial value (two e-foldings). Replicas start from exact draws of
    ``nu`` when the state space is enumerable and otherwise after a burn-in of
    ``10/gap`` time units. The standard error is a delete-one-batch jackknife.
    """
    if replicas < 2:
        raise InvalidInput("need at least two replicas")
    gap = _gap_guess(rf, lattice, r, topology)
    dt = sample_dt or 0.05 / gap
    T = T or 20.0 / gap
    seeds = np.random.SeedSequence(seed).spawn(replicas + 1)
    start_rng = np.random.default_rng(seeds[-1])
    enumerable = n_configurations(lattice.n_sites, r) <= DENSE_MAX
    if enumerable:
        ens = canonical(rf, r, lattice)
        starts = [ens.states[k] for k in start_rng.choice(len(ens), size=replicas, p=ens.nu)]
        mean = None
        burn = 0
    else:
        starts = [None] * replicas
        burn = int(math.ceil(10 / gap / dt))
    args = [(rf, lattice, r, T + burn * dt, int(s.generate_state(1)[0]), topology, dt, st)
            for s, st in zip(seeds[:replicas], starts)]
    workers = workers or default_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            runs = list(ex.map(_replica, args))
    else:
        runs = [_replica(a) for a in args]
    m = min(len(x) for x in runs)
    F = np.array([np.asarray(f(x[burn:m]), dtype=float) for x in runs])
    if enumerable:
        vals = np.asarray(f(ens.states), dtype=float)
        mean = float(ens.nu @ vals)
    else:
        mean = float(F.mean())
    max_lag = F.shape[1] // 2
    C = _autocov(F, mean, max_lag)
    if not C[0] > 0:
        raise InsufficientSignal("observable has no variance along the runs")
    B = max(2, min(n_batches, replicas))
    batches = np.array_split(np.arange(replicas), B)
    jack = np.array([_autocov(np.delete(F, b, axis=0), mean, max_lag) for b in batches])
    se = np.sqrt((B - 1) / B * ((jack - jack.mean(axis=0)) ** 2).sum(axis=0))
    target = C[0] * math.exp(-2)
    end, reached = 0, False
    for s in range(1, max_lag + 1):
        if C[s] <= 0 or C[s] < 3 * se[s]:
            break
        end = s
        if C[s] <= target:
            reached = True
            break
    if not reached or end < 2:
        raise InsufficientSignal("covariance reaches the noise floor before two e-foldings")
    lags = np.arange(end + 1) * dt / 2  # Var[P_t f] at t = lag/2

    def slope(Cw):
        return -float(np.polyfit(lags, np.log(Cw[:end + 1]), 1)[0])

    lam = slope(C)
    jl = []
    for J in jack:
        if (J[:end + 1] > 0).all():
            jl.append(slope(J))
    jl = np.array(jl)
    stderr = float(math.sqrt((len(jl) - 1) / len(jl) * ((jl - jl.mean()) ** 2).sum())) \
        if len(jl) > 1 else math.nan
    return DecayEstimate(lam, stderr, lags, C[:end + 1], replicas,
                         {"sample_dt": dt, "T": T, "window_end": float(lags[-1]),
                          "gap_reference": gap, "batches": B})


# ---------------------------------------------------------------------------
# two-colour process


def colour_rates(c, k1: int, k2: int) -> tuple[float, float]:
    """``(k1 c(k)/k, c(k) - k1 c(k)/k)`` with ``k = k1 + k2`` (both 0 when ``k = 0``)."""
    if k1 < 0 or k2 < 0:
        raise InvalidInput("colour counts must be nonnegative")
    k = k1 + k2
    if k == 0:
        return 0.0, 0.0
    total = float(c(k))
    c1 = k1 * total / k
    return c1, total - c1


def conditioned_rate_family(c: SiteRate, eta2) -> RateFamily:
    """Rates ``c~_x(k) = k c(k + eta2_x) / (k + eta2_x)`` seen by colour 1 given colour 2."""
    eta2 = [int(v) for v in eta2]
    if any(v < 0 for v in eta2):
        raise InvalidInput("eta2 must be nonnegative")
    return RateFamily([c if m == 0 else ShiftedSiteRate(c, m) for m in eta2])


def colour_generator(c: SiteRate, lattice: Lattice, r1: int, r2: int):
    """Generator of the two-colour process and the projection onto colour-blind states.

    Returns ``(L_colour, P, L_blind)`` with ``P[i, j] = 1`` when colour state ``i``
    projects to colour-blind state ``j``.
    """
    n = lattice.n_sites
    rf = RateFamily([c] * n)
    e1 = canonical(rf, r1, lattice)
    e2 = canonical(rf, r2, lattice)
    blind = canonical(rf, r1 + r2, lattice)
    n1, n2 = len(e1), len(e2)
    S1 = np.repeat(e1.states, n2, axis=0)
    S2 = np.tile(e2.states, (n1, 1))

    def index(a, b):
        return e1.ranks(a) * n2 + e2.ranks(b)

    rows, cols, vals = [], [], []
    cv = c.values(r1 + r2)
    tot = S1 + S2
    with np.errstate(invalid="ignore", divide="ignore"):
        per = np.where(tot > 0, cv[tot] / np.maximum(tot, 1), 0.0)
    for x, y in lattice.ordered_edges:
        for colour, S in ((0, S1), (1, S2)):
            src = np.nonzero(S[:, x] > 0)[0]
            if src.size == 0:
                continue
            A, Bm = S1[src].copy(), S2[src].copy()
            M = A if colour == 0 else Bm
            M[:, x] -= 1
            M[:, y] += 1
            rows.append(src)
            cols.append(index(A, Bm))
            vals.append(0.5 * S[src, x] * per[src, x])
    size = n1 * n2
    if rows:
        rows, cols, vals = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(size, size)).tocsr()
    L = (off - sp.diags(np.asarray(off.sum(axis=1)).ravel())).tocsr()
    P = sp.csr_matrix((np.ones(size), (np.arange(size), blind.ranks(tot))),
                      shape=(size, len(blind)))
    return L, P, build_generator(blind, "nn").L


def colour_projection_error(c: SiteRate, lattice: Lattice, r1: int, r2: int) -> float:
    """``max |L_colour P - P L_blind|``: zero when colour-blind functions evolve autonomously."""
    L, P, Lb = colour_generator(c, lattice, r1, r2)
    D = (L @ P - P @ Lb)
    return float(abs(D).max()) if D.nnz else 0.0


# ---------------------------------------------------------------------------
# order-preserving coupling


@dataclass
class CoupledResult:
    order_preserved: bool
    violation_time: float | None
    n_events: int
    M: int
    B: float
    k0: int
    asserted: bool
    eta_mean: np.ndarray
    xi_mean: np.ndarray

    def as_dict(self) -> dict:
        return {"order_preserved": self.order_preserved, "violation_time": self.violation_time,
                "n_events": self.n_events, "M": self.M, "B": self.B, "k0": self.k0,
                "asserted": self.asserted, "eta_mean": self.eta_mean.tolist(),
                "xi_mean": self.xi_mean.tolist()}


def _coupled_moves(ce: np.ndarray, cx: np.ndarray, eta: np.ndarray, xi: np.ndarray):
    """All transitions of the coupled pair as ``(rate, eta move, xi move, violating)``.

    A move is ``(from, to)`` or ``None``. Jumps share the common part of the
    two rates; excess ``eta`` jumps into sites where ``eta = xi`` are paired
    with excess ``xi`` jumps into the same site, in proportion to the excess
    ``xi`` rates, as far as those suffice.
    """
    n = len(eta)
    e = np.maximum(ce - cx, 0.0)
    u = np.maximum(cx - ce, 0.0)
    common = np.minimum(ce, cx)
    moves = []
    for y in range(n):
        src = [x for x in range(n) if x != y]
        for x in src:
            if common[x] > 0:
                moves.append((common[x], (x, y), (x, y), False))
        E = sum(e[x] for x in src)
        U = sum(u[z] for z in src)
        if eta[y] != xi[y]:
            for x in src:
                if e[x] > 0:
                    moves.append((e[x], (x, y), None, False))
                if u[x] > 0:
                    moves.append((u[x], None, (x, y), False))
            continue
        D = max(E, U)
        for x in src:
            if e[x] > 0:
                for z in src:
                    if u[z] > 0:
                        moves.append((e[x] * u[z] / D, (x, y), (z, y), False))
                if E > U:
                    moves.append((e[x] * (1 - U / E), (x, y), None, True))
            if u[x] > 0 and U > E:
                moves.append((u[x] * (1 - E / U), None, (x, y), False))
    return moves


def coupled_order_sim(rf: RateFamily, r: int, M: int, T: float = math.inf,
                      seed: int = 0, n_events: int = 1000, initial=None,
                      k0_max: int = 8) -> CoupledResult:
    """Simulate a coupled pair ``eta <= xi`` of complete-graph processes with ``r`` and ``r+M``
    particles until ``n_events`` jumps or time ``T``.

    Each marginal follows the complete-graph dynamics exactly. Order can only
    fail through an unpaired excess ``eta`` jump onto a site where the two
    configurations agree; the first such event is reported. ``asserted`` says
    whether ``M >= B|Λ|`` and ``k0 <= 2``, the regime where preservation is
    expected; for larger ``k0`` preservation is observed, not guaranteed.
    """
    n = rf.n_sites
    if M < 1:
        raise InvalidInput("M must be at least 1")
    rep = verify_conditions(rf, k0_max)
    ss_init, ss_move = np.random.SeedSequence(seed).spawn(2)
    irng = np.random.default_rng(ss_init)
    if initial is None:
        eta = irng.multinomial(r, np.full(n, 1 / n))
        xi = eta + irng.multinomial(M, np.full(n, 1 / n))
    else:
        eta = _check_initial(initial[0], n, r)
        xi = _check_initial(initial[1], n, r + M)
        if (eta > xi).any():
            raise InvalidInitial("initial pair must satisfy eta <= xi")
    eta, xi = eta.astype(np.int64).copy(), xi.astype(np.int64).copy()
    table = rf.rate_table(r + M)
    idx = np.arange(n)
    rng = np.random.default_rng(ss_move)
    t, k = 0.0, 0
    acc_e, acc_x = np.zeros(n), np.zeros(n)
    violation = None
    while k < n_events:
        moves = _coupled_moves(table[idx, eta], table[idx, xi], eta, xi)
        rates = np.array([m[0] for m in moves])
        total = rates.sum()
        if total <= 0:
            break
        dt = rng.exponential(1 / total)
        if t + dt > T:
            acc_e += (T - t) * eta
            acc_x += (T - t) * xi
            t = T
            break
        acc_e += dt * eta
        acc_x += dt * xi
        t += dt
        j = int(np.searchsorted(np.cumsum(rates), rng.random() * total, side="right"))
        _, me, mx, _ = moves[min(j, len(moves) - 1)]
        if me:
            eta[me[0]] -= 1
            eta[me[1]] += 1
        if mx:
            xi[mx[0]] -= 1
            xi[mx[1]] += 1
        k += 1
        if (eta > xi).any():
            violation = t
            break
    span = t if t > 0 else 1.0
    asserted = M >= rep.B * n and rep.k0 <= 2
    return CoupledResult(violation is None, violation, k, M, rep.B, rep.k0, asserted,
                         acc_e / span, acc_x / span)
