"""Finite-stage semantics for c.e. sets, c.e. pair relations and limit approximations.

Every oracle is a pure function of the stage: asking twice for the same stage
gives the same answer, and later stages only ever add elements. Oracles are
specified by what *arrives* at each stage; cumulative snapshots are derived.
"""

from __future__ import annotations

import bisect
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Iterator, Sequence

from .errors import BudgetExceeded, ValidationError


class UnionFind:
    """Disjoint sets over arbitrary hashable items, union by size."""

    def __init__(self, items: Iterable[Hashable] = ()):
        self.parent: dict = {}
        self.size: dict = {}
        for item in items:
            self.add(item)

    def add(self, item):
        if item not in self.parent:
            self.parent[item] = item
            self.size[item] = 1

    def find(self, item):
        self.add(item)
        root = item
        while self.parent[root] != root:
            root = self.parent[root]
        # path compression
        while self.parent[item] != root:
            self.parent[item], item = root, self.parent[item]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return ra
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size.pop(rb)
        return ra

    def blocks(self) -> tuple[tuple, ...]:
        groups: dict = {}
        for item in self.parent:
            groups.setdefault(self.find(item), []).append(item)
        return tuple(sorted(tuple(sorted(g)) for g in groups.values()))


class _StagedEnumeration:
    """Shared arrival bookkeeping for set and pair enumerations."""

    def __init__(self, arrivals: Callable[[int], Iterable], budget: int, label: str = ""):
        if budget < 0:
            raise ValueError("budget must be a natural number")
        self._arrivals = arrivals
        self.budget = budget
        self.label = label
        self._order: list = []  # items in arrival order
        self._stages: list[int] = []  # parallel to _order
        self._stage_of: dict = {}
        self._computed = -1

    def __repr__(self):
        return f"{type(self).__name__}({self.label!r}, budget={self.budget})"

    def _check(self, stage: int):
        if stage < 0:
            raise ValueError("stage must be a natural number")
        if stage > self.budget:
            raise BudgetExceeded(
                f"{self.label or 'oracle'}: stage {stage} exceeds budget {self.budget}"
            )

    def _advance(self, stage: int):
        while self._computed < stage:
            s = self._computed + 1
            for item in sorted(set(self._arrivals(s))):
                if item not in self._stage_of:
                    self._stage_of[item] = s
                    self._order.append(item)
                    self._stages.append(s)
            self._computed = s

    def _count_through(self, stage: int) -> int:
        self._check(stage)
        self._advance(stage)
        return bisect.bisect_right(self._stages, stage)

    def enumerate(self, stage: int) -> frozenset:
        """All items enumerated by ``stage`` (inclusive)."""
        return frozenset(self._order[: self._count_through(stage)])

    def arrivals_through(self, stage: int | None = None) -> list[tuple[int, Hashable]]:
        """``(stage, item)`` pairs in arrival order, up to ``stage`` (default: budget)."""
        stage = self.budget if stage is None else stage
        n = self._count_through(stage)
        return list(zip(self._stages[:n], self._order[:n]))

    def arrival_stage(self, item) -> int | None:
        """Stage at which ``item`` is enumerated, or None if not by the budget."""
        self._advance(self.budget)
        return self._stage_of.get(item)

    def clamp(self, stage: int) -> int:
        return min(stage, self.budget)


class EnumerationOracle(_StagedEnumeration):
    """A monotone, stage-indexed enumeration of a c.e. set of naturals.

    ``arrivals(s)`` lists the elements that come in at stage ``s``; anything
    already enumerated is ignored, so monotonicity holds by construction.
    """

    @classmethod
    def from_table(cls, table: dict, budget: int | None = None, label: str = "table"):
        """Build from an explicit cumulative ``stage -> elements`` table.

        Missing stages repeat the previous snapshot. A table that drops an
        element is rejected.
        """
        table = {int(s): v for s, v in table.items()}
        stages = sorted(table)
        problems = []
        prev: set = set()
        snaps = {}
        for s in stages:
            cur = {int(x) for x in table[s]}
            lost = prev - cur
            if lost:
                problems.append(f"stage {s} drops {sorted(lost)}")
            snaps[s] = cur
            prev = cur | prev
        if problems:
            raise ValidationError(f"{label}: table is not monotone", problems)
        last = stages[-1] if stages else 0
        budget = last if budget is None else budget

        def arrivals(s):
            return snaps.get(s, ())

        return cls(arrivals, budget, label)

    def first_above(self, bound: int, stage: int | None = None) -> tuple[int, int] | None:
        """First element exceeding ``bound`` in arrival order, with its stage."""
        for s, x in self.arrivals_through(self.budget if stage is None else self.clamp(stage)):
            if x > bound:
                return s, x
        return None

    def elements(self, stage: int | None = None) -> list[int]:
        """Elements enumerated by ``stage`` (default budget), ascending."""
        stage = self.budget if stage is None else stage
        return sorted(self._order[: self._count_through(stage)])


class PairEnumerationOracle(_StagedEnumeration):
    """A monotone enumeration of ordered pairs, generating a c.e. relation."""

    @classmethod
    def from_table(cls, table: dict, budget: int | None = None, label: str = "pairs"):
        table = {int(s): v for s, v in table.items()}
        snaps: dict[int, set] = {}
        prev: set = set()
        problems = []
        for s in sorted(table):
            cur = {tuple(int(v) for v in p) for p in table[s]}
            if prev - cur:
                problems.append(f"stage {s} drops {sorted(prev - cur)}")
            snaps[s] = cur
            prev |= cur
        if problems:
            raise ValidationError(f"{label}: table is not monotone", problems)
        last = max(snaps) if snaps else 0
        return cls(lambda s: snaps.get(s, ()), last if budget is None else budget, label)


@dataclass(frozen=True)
class LimitApproxOracle:
    """Stagewise guesses ``approx(x, s)``; membership means the guess at the budget."""

    approx: Callable[[int, int], bool]
    budget: int
    label: str = ""

    def member(self, x: int) -> bool:
        return bool(self.approx(x, self.budget))


@dataclass
class OracleRegistry:
    """Finite stand-in for the standard list W_0, W_1, ... ; indices never move."""

    oracles: list = field(default_factory=list)

    def register(self, oracle) -> int:
        self.oracles.append(oracle)
        return len(self.oracles) - 1

    def __getitem__(self, index):
        return self.oracles[index]

    def __len__(self):
        return len(self.oracles)

    def __iter__(self) -> Iterator:
        return iter(self.oracles)


def register(registry: OracleRegistry, oracle) -> int:
    return registry.register(oracle)


def snapshot(oracle: _StagedEnumeration, stage: int) -> frozenset:
    """The set enumerated by ``stage``; raises BudgetExceeded past the budget."""
    return oracle.enumerate(stage)


@dataclass(frozen=True)
class Partition:
    blocks: tuple[tuple[int, ...], ...]
    ignored: int = 0  # enumerated pairs that referenced elements >= horizon

    def block_of(self, x: int) -> tuple[int, ...]:
        for b in self.blocks:
            if x in b:
                return b
        raise KeyError(x)

    def labels(self) -> dict[int, int]:
        """Element -> least member of its block."""
        return {x: b[0] for b in self.blocks for x in b}


def ce_closure(pairs: PairEnumerationOracle, stage: int, horizon: int) -> Partition:
    """Reflexive, symmetric, transitive closure of the pairs enumerated by ``stage``,
    restricted to ``{0, ..., horizon-1}``."""
    uf = UnionFind(range(horizon))
    ignored = 0
    for x, y in pairs.enumerate(stage):
        if x >= horizon or y >= horizon:
            ignored += 1
            continue
        uf.union(x, y)
    return Partition(uf.blocks(), ignored)


# -- stock generators -------------------------------------------------------


def set_oracle(member: Callable[[int], bool], budget: int, delay: int = 0,
               label: str = "") -> EnumerationOracle:
    """Prompt enumeration of a decidable set: ``x`` arrives at stage ``x + 1 + delay``."""

    def arrivals(s):
        x = s - 1 - delay
        return (x,) if x >= 0 and member(x) else ()

    return EnumerationOracle(arrivals, budget, label)


def sequence_oracle(seq: Callable[[int], int] | Sequence[int], budget: int,
                    label: str = "") -> EnumerationOracle:
    """One element per stage: the i-th term arrives at stage i + 1."""
    get = seq.__getitem__ if isinstance(seq, Sequence) else seq
    length = len(seq) if isinstance(seq, Sequence) else math.inf

    def arrivals(s):
        return (get(s - 1),) if 1 <= s <= length else ()

    return EnumerationOracle(arrivals, budget, label)


def identity_oracle(budget: int, delay: int = 0) -> EnumerationOracle:
    label = "identity" if delay == 0 else f"delayed({delay})"
    return set_oracle(lambda x: True, budget, delay, label)


def evens_oracle(budget: int) -> EnumerationOracle:
    return set_oracle(lambda x: x % 2 == 0, budget, label="evens")


def is_square(x: int) -> bool:
    return x >= 0 and math.isqrt(x) ** 2 == x


def squares_oracle(budget: int) -> EnumerationOracle:
    return set_oracle(is_square, budget, label="squares")


def in_bursty_block(x: int) -> bool:
    """Membership in the union of blocks [4^k, 2*4^k)."""
    if x < 1:
        return False
    return (x.bit_length() - 1) % 2 == 0


def block_bursty_oracle(budget: int) -> EnumerationOracle:
    return set_oracle(in_bursty_block, budget, label="block-bursty")


def dyadic_burst_oracle(budget: int, missing: Iterable[int] = ()) -> EnumerationOracle:
    """omega minus ``missing``, released in bursts: everything below 2^j at stage 2^j."""
    missing = frozenset(missing)

    def arrivals(s):
        if s < 1 or s & (s - 1):
            return ()
        return [x for x in range(s // 2 if s > 1 else 0, s) if x not in missing]

    name = "dyadic-bursts" + (f"-minus{sorted(missing)}" if missing else "")
    return EnumerationOracle(arrivals, budget, name)


def relation_pair_oracle(label_of: Callable[[int], Hashable], budget: int, delay: int = 0,
                         label: str = "") -> PairEnumerationOracle:
    """Promptly enumerate a label-defined equivalence: at stage ``x + 1 + delay`` the
    pair (first member seen with x's label, x) arrives."""
    first: dict = {}
    firsts: list = []

    def ensure(upto):
        while len(firsts) <= upto:
            x = len(firsts)
            firsts.append(first.setdefault(label_of(x), x))

    def arrivals(s):
        x = s - 1 - delay
        if x < 0:
            return ()
        ensure(x)
        return ((firsts[x], x),)

    return PairEnumerationOracle(arrivals, budget, label)


def scrambled_pair_oracle(label_of: Callable[[int], Hashable], budget: int, seed: int = 0,
                          chunk: int = 32, label: str = "") -> PairEnumerationOracle:
    """Enumerate the pairs x != y of a label-defined equivalence, visiting the
    naturals in a seeded order that is shuffled within consecutive chunks.

    One natural is visited per stage; a pair arrives when its second member
    is visited.
    """
    rng = random.Random(seed)
    order: list[int] = []
    seen: dict = {}

    def ensure(upto):
        while len(order) <= upto:
            base = len(order)
            block = list(range(base, base + chunk))
            rng.shuffle(block)
            order.extend(block)

    def arrivals(s):
        if s < 1:
            return ()
        ensure(s - 1)
        x = order[s - 1]
        lab = label_of(x)
        prev = seen.setdefault(lab, [])
        out = tuple((min(p, x), max(p, x)) for p in prev)
        prev.append(x)
        return out

    return PairEnumerationOracle(arrivals, budget, label or f"scrambled-pairs({seed})")
