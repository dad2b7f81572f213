"""Epoch configuration, quorum predicates and exhaustive verification of the
quorum-intersection (bft) assumption."""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional

from . import _accel

MAX_EXHAUSTIVE_N = 12


class ConfigError(ValueError):
    pass


class TooLargeForExhaustiveCheck(ValueError):
    pass


class QuorumModel(Enum):
    COUNT = "count"
    WEIGHTED = "weighted"


@dataclass(frozen=True)
class EpochConfig:
    """One epoch's membership and quorum rule.

    ``byzantine_budget`` is ``f`` (a member count) under the count model and
    the maximum byzantine voting power under the weighted model.
    """

    authors_n: int
    byzantine_budget: int
    quorum_model: QuorumModel = QuorumModel.COUNT
    voting_power: tuple[int, ...] = ()
    epoch_id: int = 0
    unchecked: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if not self.voting_power:
            object.__setattr__(self, "voting_power", (1,) * self.authors_n)
        if not self.unchecked:
            self.check_invariants()

    @classmethod
    def count(cls, n: int, f: int, **kw) -> "EpochConfig":
        return cls(n, f, QuorumModel.COUNT, **kw)

    @classmethod
    def weighted(cls, powers: Iterable[int], byz_power: int, **kw) -> "EpochConfig":
        powers = tuple(powers)
        return cls(len(powers), byz_power, QuorumModel.WEIGHTED, powers, **kw)

    def check_invariants(self) -> None:
        if self.authors_n < 1:
            raise ConfigError("authors_n must be at least 1")
        if len(self.voting_power) != self.authors_n:
            raise ConfigError("voting_power must list one weight per member")
        if any(p < 1 for p in self.voting_power):
            raise ConfigError("all voting powers must be >= 1")
        if self.byzantine_budget < 0:
            raise ConfigError("byzantine budget must be non-negative")
        if self.quorum_model is QuorumModel.COUNT:
            if not self.authors_n > 3 * self.byzantine_budget:
                raise ConfigError(
                    f"count model requires n > 3f (n={self.authors_n}, f={self.byzantine_budget})")
        elif not self.total_power > 3 * self.byzantine_budget:
            raise ConfigError(
                f"weighted model requires total power > 3 * byzantine power "
                f"(total={self.total_power}, byz={self.byzantine_budget})")

    @property
    def total_power(self) -> int:
        return sum(self.voting_power)

    @property
    def count_threshold(self) -> int:
        # ceil(2n/3)
        return (2 * self.authors_n + 2) // 3

    def power(self, members: Iterable[int]) -> int:
        return sum(self.voting_power[m] for m in members)

    def is_quorum(self, members: Iterable[int]) -> bool:
        return is_quorum(members, self)

    def byzantine_admissible(self, members: Iterable[int]) -> bool:
        members = list(members)
        if self.quorum_model is QuorumModel.COUNT:
            return len(members) <= self.byzantine_budget
        return self.power(members) <= self.byzantine_budget


def is_quorum(members: Iterable[int], cfg: EpochConfig) -> bool:
    members = set(members)
    for m in members:
        if not 0 <= m < cfg.authors_n:
            raise ValueError(f"member {m} out of range for n={cfg.authors_n}")
    if cfg.quorum_model is QuorumModel.COUNT:
        return len(members) >= cfg.count_threshold
    # at least two thirds of total power, integer cross-multiplication
    return 3 * cfg.power(members) >= 2 * cfg.total_power


@dataclass(frozen=True)
class HonestyMap:
    """Simulation ground truth; peer logic never consults it."""

    byzantine: frozenset[int] = frozenset()

    def __init__(self, byzantine: Iterable[int] = ()):
        object.__setattr__(self, "byzantine", frozenset(byzantine))

    def is_honest(self, m: int) -> bool:
        return m not in self.byzantine

    def honest_members(self, cfg: EpochConfig) -> list[int]:
        return [m for m in range(cfg.authors_n) if m not in self.byzantine]

    def within_budget(self, cfg: EpochConfig) -> bool:
        return cfg.byzantine_admissible(self.byzantine)


@dataclass(frozen=True)
class Counterexample:
    quorum1: frozenset[int]
    quorum2: frozenset[int]
    byzantine: frozenset[int]

    def __str__(self) -> str:
        def fmt(s):
            return "{" + ",".join(map(str, sorted(s))) + "}"
        return f"quorum1={fmt(self.quorum1)} quorum2={fmt(self.quorum2)} byzantine={fmt(self.byzantine)}"


def mask_members(mask: int) -> frozenset[int]:
    return frozenset(i for i in range(mask.bit_length()) if mask >> i & 1)


def quorum_masks(cfg: EpochConfig, kernels=None) -> list[int]:
    """Bitmasks of all quorums, ascending."""
    k = kernels or _accel.kernels
    n = cfg.authors_n
    if cfg.quorum_model is QuorumModel.COUNT:
        t = cfg.count_threshold
        return [m for m in range(1 << n) if m.bit_count() >= t]
    weights = k.subset_weights(cfg.voting_power)
    total = cfg.total_power
    return [m for m in range(1 << n) if 3 * weights[m] >= 2 * total]


def minimal_quorum_masks(cfg: EpochConfig, kernels=None) -> list[int]:
    qs = quorum_masks(cfg, kernels)
    qset = set(qs)
    n = cfg.authors_n
    return [m for m in qs if not any((m >> i) & 1 and (m & ~(1 << i)) in qset for i in range(n))]


def byzantine_masks(cfg: EpochConfig, kernels=None) -> list[int]:
    """Bitmasks of every byzantine set within budget, ascending."""
    k = kernels or _accel.kernels
    n = cfg.authors_n
    if cfg.quorum_model is QuorumModel.COUNT:
        f = cfg.byzantine_budget
        return [m for m in range(1 << n) if m.bit_count() <= f]
    weights = k.subset_weights(cfg.voting_power)
    return [m for m in range(1 << n) if weights[m] <= cfg.byzantine_budget]


def check_bft_assumption(cfg: EpochConfig, kernels=None) -> Optional[Counterexample]:
    """Exhaustively verify that any two quorums share a member outside every
    admissible byzantine set.

    Returns ``None`` when the assumption holds, otherwise the first
    ``(quorum1, quorum2, byzantine)`` triple that breaks it. Only minimal
    quorums are enumerated: supersets can only enlarge intersections.
    """
    if cfg.authors_n > MAX_EXHAUSTIVE_N:
        raise TooLargeForExhaustiveCheck(
            f"exhaustive check supports n <= {MAX_EXHAUSTIVE_N}, got {cfg.authors_n}")
    k = kernels or _accel.kernels
    qs = array("I", minimal_quorum_masks(cfg, k))
    bs = array("I", byzantine_masks(cfg, k))
    hit = k.find_bft_violation(qs, bs)
    if hit is None:
        return None
    i, j, b = hit
    return Counterexample(mask_members(qs[i]), mask_members(qs[j]), mask_members(bs[b]))


def quorum_intersection_honest(a: Iterable[int], b: Iterable[int], honesty: HonestyMap,
                               cfg: EpochConfig) -> Optional[int]:
    """Lowest-index honest member in both quorums, or ``None`` when the
    intersection is entirely byzantine."""
    a, b = set(a), set(b)
    if not is_quorum(a, cfg) or not is_quorum(b, cfg):
        raise ValueError("both member sets must be quorums")
    for m in sorted(a & b):
        if honesty.is_honest(m):
            return m
    return None
