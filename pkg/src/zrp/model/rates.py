"""Site-dependent jump-rate functions.

Each site carries a rate function ``c_x`` stored as a finite head table
``c_x(0..K)`` followed by an exact tail

    c_x(k) = theta_x * k + offsets_x[k mod p]      for k > K,

where the periodic offset table defaults to ``(0,)`` (a purely linear tail).
The offsets make patterns such as ``k + 0.5 * (k mod 2)`` representable
without truncating the function.
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import InvalidInput, NonpositiveRate, NonpositiveTail, NonzeroAtZero


@dataclass(frozen=True)
class SiteRate:
    head: tuple[float, ...]
    theta: float
    offsets: tuple[float, ...] = (0.0,)

    def __post_init__(self):
        head = tuple(float(v) for v in self.head)
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "offsets", tuple(float(v) for v in self.offsets) or (0.0,))
        if not head:
            raise InvalidInput("head table must contain at least c(0)")
        if head[0] != 0.0:
            raise NonzeroAtZero(f"c(0) must be 0, got {head[0]}")
        for k, v in enumerate(head[1:], start=1):
            if not v > 0:
                raise NonpositiveRate(f"c({k}) = {v} is not positive")
        if not self.theta > 0:
            raise NonpositiveTail(f"tail coefficient must be positive, got {self.theta}")
        for k in self._tail_probe():
            if not self(k) > 0:
                raise NonpositiveRate(f"tail gives c({k}) = {self(k)} <= 0")

    @property
    def k_head(self) -> int:
        return len(self.head) - 1

    @property
    def period(self) -> int:
        return len(self.offsets)

    @property
    def scan_limit(self) -> int:
        """Finite ``k`` range beyond which increments of ``c`` repeat."""
        return self.k_head + self.period + 1

    def _tail_probe(self) -> range:
        return range(self.k_head + 1, self.k_head + 1 + self.period)

    def __call__(self, k: int) -> float:
        if k < 0:
            raise ValueError("occupation must be nonnegative")
        if k <= self.k_head:
            return self.head[k]
        return self.theta * k + self.offsets[k % self.period]

    def values(self, kmax: int) -> np.ndarray:
        """``c(0..kmax)`` as an array."""
        k = np.arange(kmax + 1)
        out = self.theta * k + np.asarray(self.offsets)[k % self.period]
        m = min(kmax, self.k_head) + 1
        out[:m] = self.head[:m]
        return out

    def log_factorials(self, kmax: int) -> np.ndarray:
        """``log c(k)!`` for ``k = 0..kmax`` with ``c(0)! = 1``."""
        v = self.values(kmax)
        out = np.zeros(kmax + 1)
        out[1:] = np.cumsum(np.log(v[1:]))
        return out

    def envelope(self) -> tuple[float, float]:
        """``(inf, sup)`` of ``c(k)/k`` over ``k >= 1``."""
        kmax = self.k_head + self.period
        k = np.arange(1, kmax + 1)
        ratios = self.values(kmax)[1:] / k
        return float(min(ratios.min(), self.theta)), float(max(ratios.max(), self.theta))


class ShiftedSiteRate(SiteRate):
    """``c~(k) = k c(k+m) / (k+m)`` for a base rate ``c`` and a fixed shift ``m >= 0``.

    The head stores exact values up to ``k_head``; beyond it values are still
    computed exactly from the base, while ``theta``/``offsets`` record the
    asymptotic tail ``theta k + offsets[(k+m) mod p]`` that the exact values
    approach at rate ``O(m/k)``.
    """

    def __init__(self, base: SiteRate, shift: int, k_head: int | None = None):
        if shift < 0:
            raise InvalidInput("shift must be nonnegative")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "shift", int(shift))
        K = k_head if k_head is not None else base.k_head + shift + 64 * base.period
        p = base.period
        offsets = tuple(base.offsets[(j + shift) % p] for j in range(p))
        super().__init__(tuple(self._exact(k) for k in range(K + 1)), base.theta, offsets)

    def _exact(self, k: int) -> float:
        if k == 0:
            return 0.0
        return k * self.base(k + self.shift) / (k + self.shift)

    @property
    def scan_limit(self) -> int:
        return self.k_head + 1

    def __call__(self, k: int) -> float:
        if k < 0:
            raise ValueError("occupation must be nonnegative")
        return self.head[k] if k <= self.k_head else self._exact(k)

    def values(self, kmax: int) -> np.ndarray:
        k = np.arange(kmax + 1)
        c = self.base.values(kmax + self.shift)[k + self.shift]
        out = np.zeros(kmax + 1)
        out[1:] = k[1:] * c[1:] / (k[1:] + self.shift)
        return out

    def envelope(self) -> tuple[float, float]:
        # c~(k)/k = c(k+m)/(k+m), so the range is that of c(j)/j over j > m
        m = self.shift
        j = np.arange(m + 1, m + self.base.scan_limit + 1)
        ratios = self.base.values(int(j[-1]))[j] / j
        return float(min(ratios.min(), self.theta)), float(max(ratios.max(), self.theta))


class RateFamily:
    """Per-site rate functions ``c_x`` for the sites of a finite volume."""

    def __init__(self, sites: Sequence[SiteRate], labels: Sequence | None = None):
        self.sites = tuple(sites)
        if not self.sites:
            raise InvalidInput("a rate family needs at least one site")
        self.labels = tuple(labels) if labels is not None else tuple(range(len(self.sites)))

    def __len__(self) -> int:
        return len(self.sites)

    def __getitem__(self, x: int) -> SiteRate:
        return self.sites[x]

    def __eq__(self, other) -> bool:
        return isinstance(other, RateFamily) and self.sites == other.sites

    def __hash__(self) -> int:
        return hash(self.sites)

    def __repr__(self) -> str:
        return f"RateFamily({len(self)} sites, {len(set(self.sites))} distinct)"

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def c(self, x: int, k: int) -> float:
        return self.sites[x](k)

    def values(self, x: int, kmax: int) -> np.ndarray:
        return self.sites[x].values(kmax)

    def rate_table(self, kmax: int) -> np.ndarray:
        """Array ``T[x, k] = c_x(k)`` for ``k = 0..kmax``."""
        return np.stack([s.values(kmax) for s in self.sites])

    def log_factorial_table(self, kmax: int) -> np.ndarray:
        return np.stack([s.log_factorials(kmax) for s in self.sites])

    def envelope(self) -> tuple[float, float]:
        lo, hi = zip(*(s.envelope() for s in set(self.sites)))
        return min(lo), max(hi)

    def is_homogeneous(self) -> bool:
        return len(set(self.sites)) == 1

    def distinct(self) -> dict[SiteRate, int]:
        """Multiplicity of each distinct site rate."""
        out: dict[SiteRate, int] = {}
        for s in self.sites:
            out[s] = out.get(s, 0) + 1
        return out

    def subset(self, indices: Iterable[int]) -> "RateFamily":
        indices = list(indices)
        return RateFamily([self.sites[i] for i in indices], [self.labels[i] for i in indices])

    def tile(self, n: int) -> "RateFamily":
        """Repeat the site pattern cyclically to cover ``n`` sites."""
        return RateFamily([self.sites[i % len(self.sites)] for i in range(n)])

    def describe(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "sites": [
                {"head": list(s.head), "tail_theta": s.theta, "tail_offsets": list(s.offsets)}
                for s in self.sites
            ],
        }


def build_rate_family(spec: Sequence[dict] | Sequence[SiteRate]) -> RateFamily:
    """Validate per-site ``{"head": [...], "tail_theta": θ, "tail_offsets": [...]}`` dicts."""
    sites = []
    for entry in spec:
        if isinstance(entry, SiteRate):
            sites.append(entry)
            continue
        sites.append(SiteRate(tuple(entry.get("head", (0.0,))),
                              entry["tail_theta"],
                              tuple(entry.get("tail_offsets", (0.0,)))))
    return RateFamily(sites)


def linear(n: int, theta: float = 1.0) -> RateFamily:
    return RateFamily([SiteRate((0.0,), theta)] * n)


def alternating(n: int, theta1: float, theta2: float) -> RateFamily:
    a, b = SiteRate((0.0,), theta1), SiteRate((0.0,), theta2)
    return RateFamily([a if i % 2 == 0 else b for i in range(n)])


def staircase(n: int) -> RateFamily:
    """``c(k) = k + 0.5 * (k mod 2)`` at every site."""
    return RateFamily([SiteRate((0.0,), 1.0, (0.0, 0.5))] * n)


def from_callable(fn, n: int, k_head: int, theta: float, offsets=(0.0,)) -> RateFamily:
    """Homogeneous family with head ``fn(0..k_head)`` and the given tail."""
    site = SiteRate(tuple(fn(k) for k in range(k_head + 1)), theta, offsets)
    return RateFamily([site] * n)


PRESETS = ("linear", "linear-theta:θ", "alternating:θ1,θ2", "staircase")


def preset(name: str, n: int) -> RateFamily:
    """Named families used by the CLI and the acceptance suite."""
    key, _, arg = name.partition(":")
    try:
        if key == "linear" and not arg:
            return linear(n)
        if key == "linear-theta":
            return linear(n, float(arg))
        if key == "alternating":
            t1, t2 = (float(v) for v in arg.split(","))
            return alternating(n, t1, t2)
        if key == "staircase" and not arg:
            return staircase(n)
    except ValueError as exc:
        raise InvalidInput(f"bad preset arguments in {name!r}: {exc}") from None
    raise InvalidInput(f"unknown rate preset {name!r}; known: {', '.join(PRESETS)}")


def resolve_rates(rates, n: int) -> RateFamily:
    """A family on ``n`` sites from a preset name, a family to tile, or a callable ``n -> RateFamily``."""
    if isinstance(rates, str):
        return preset(rates, n)
    if isinstance(rates, RateFamily):
        return rates if rates.n_sites == n else rates.tile(n)
    return rates(n)


def load_rate_file(path: str | Path) -> RateFamily:
    """Read a rate-family file (grammar in docs/rate_file.md).

    Sections ``[site <label>]`` are read in file order; each holds ``head``,
    ``tail_theta`` and optionally ``tail_offsets``. Keys in ``[DEFAULT]``
    apply to every site.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise InvalidInput(f"cannot read rate file {path}: {exc}") from None

    def parse_list(text, key, section):
        try:
            val = ast.literal_eval(text)
        except (ValueError, SyntaxError):
            raise InvalidInput(f"[{section}] {key}: expected a list, got {text!r}") from None
        if isinstance(val, (int, float)):
            val = [val]
        return [float(v) for v in val]

    sites, labels = [], []
    for section in parser.sections():
        kind, _, label = section.partition(" ")
        if kind != "site":
            raise InvalidInput(f"unknown section [{section}] in {path}")
        sec = parser[section]
        if "tail_theta" not in sec:
            raise InvalidInput(f"[{section}] is missing tail_theta")
        head = parse_list(sec.get("head", "[0]"), "head", section)
        offsets = parse_list(sec.get("tail_offsets", "[0]"), "tail_offsets", section)
        try:
            theta = float(sec["tail_theta"])
        except ValueError:
            raise InvalidInput(f"[{section}] tail_theta is not a number") from None
        sites.append(SiteRate(tuple(head), theta, tuple(offsets)))
        labels.append(label.strip() or len(labels))
    if not sites:
        raise InvalidInput(f"{path} defines no [site ...] sections")
    return RateFamily(sites, labels)


def h_factor(rf: RateFamily, x: int, k: int) -> float:
    """``(k + 1) / c_x(k + 1)``."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    return (k + 1) / rf.c(x, k + 1)
