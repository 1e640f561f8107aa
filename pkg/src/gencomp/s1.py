"""s1-functions: validation, extraction from a c.e. structure, and synthesis of a
computable structure realizing a character that possesses one.

An s1-function f(i, s) is nondecreasing in s, converges to m_i for every i,
and has strictly increasing limits. Only finitely many stages are observable,
so a row counts as *stabilized* once it has held its final value for
``patience`` stages.
"""

from __future__ import annotations

import bisect
import heapq
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from .enumeration import PairEnumerationOracle
from .errors import BudgetExhausted, ValidationError
from .structures import EqStructure


@dataclass
class S1Table:
    """Observed values f(i, s) for i <= s <= last_stage."""

    values: dict[tuple[int, int], int]
    last_stage: int
    anchors: list[tuple[int, ...]] = field(default_factory=list)  # a_0^s..a_s^s per stage
    checkpoints: list[int] = field(default_factory=list)  # p_s per stage
    final_counts: list[int] | None = None  # class sizes of the last anchors at the budget

    @classmethod
    def from_function(cls, f: Callable[[int, int], int], stages: int) -> "S1Table":
        return cls({(i, s): int(f(i, s)) for s in range(stages + 1) for i in range(s + 1)}, stages)

    @classmethod
    def from_rows(cls, rows: dict[int, list[int]]) -> "S1Table":
        """``rows[i]`` lists f(i, i), f(i, i+1), ... ; rows must end on a common stage."""
        values = {}
        last = None
        for i, row in rows.items():
            for off, v in enumerate(row):
                values[(i, i + off)] = int(v)
            end = i + len(row) - 1
            if last is not None and end != last:
                raise ValidationError("rows end on different stages", [f"row {i} ends at {end}"])
            last = end
        return cls(values, last if last is not None else -1)

    def f(self, i: int, s: int) -> int:
        return self.values[(i, s)]

    def row(self, i: int) -> list[int]:
        return [self.values[(i, s)] for s in range(i, self.last_stage + 1)]

    def rows(self) -> int:
        return self.last_stage + 1

    def stabilization(self, i: int) -> int:
        """Earliest stage from which row i holds its final observed value."""
        row = self.row(i)
        t = len(row) - 1
        while t > 0 and row[t - 1] == row[-1]:
            t -= 1
        return i + t

    def limits(self, patience: int = 2) -> list[tuple[int, int]]:
        """``(m_i, t_i)`` for the longest prefix of rows stable for ``patience`` stages.

        When the extraction recorded how large each anchor's class had become by
        the budget, a row whose class kept growing afterwards is not stable.
        """
        out = []
        for i in range(self.rows()):
            t = self.stabilization(i)
            if self.last_stage - t < patience:
                break
            if self.final_counts is not None and self.final_counts[i] != self.f(i, self.last_stage):
                break
            out.append((self.f(i, self.last_stage), t))
        return out

    def to_csv(self) -> str:
        lines = ["i,s,f"]
        lines += [f"{i},{s},{v}" for (i, s), v in sorted(self.values.items(), key=lambda kv: (kv[0][1], kv[0][0]))]
        return "\n".join(lines) + "\n"

    def to_json(self) -> dict:
        return {
            "last_stage": self.last_stage,
            "checkpoints": list(self.checkpoints),
            "anchors": [list(a) for a in self.anchors],
            "final_counts": self.final_counts,
        }


@dataclass(frozen=True)
class S1Report:
    valid: bool
    violation: str | None
    limits: list[tuple[int, int]]  # (m_i, t_i) on the stabilized prefix


def validate_s1(t: S1Table, patience: int = 2) -> S1Report:
    """Monotonicity in s everywhere, then strictly increasing stabilized limits."""
    missing = [(i, s) for s in range(t.last_stage + 1) for i in range(s + 1) if (i, s) not in t.values]
    if missing:
        return S1Report(False, f"table is not rectangular: f{missing[0]} missing", [])
    for s in range(t.last_stage):
        for i in range(s + 1):
            if t.f(i, s) > t.f(i, s + 1):
                return S1Report(False, f"f({i},{s}) = {t.f(i, s)} > f({i},{s + 1}) = {t.f(i, s + 1)}", [])
    limits = t.limits(patience)
    for i in range(1, len(limits)):
        if limits[i - 1][0] >= limits[i][0]:
            return S1Report(False, f"limits m_{i - 1} = {limits[i - 1][0]} and m_{i} = {limits[i][0]} "
                                   "are not strictly increasing", limits)
    return S1Report(True, None, limits)


# -- extraction ---------------------------------------------------------------


class _GrowingClosure:
    """Closure of the pairs enumerated by stage p, counting members <= p per class."""

    def __init__(self, E: PairEnumerationOracle, limit: int):
        self._arrivals = E.arrivals_through(limit)
        self.parent: dict[int, int] = {}
        self.cnt: dict[int, int] = {}
        self.mn: dict[int, int] = {}
        self.mx: dict[int, int] = {}
        self.p = -1
        self._seen = 0
        self._heaps: dict[int, list] = {}  # size -> heap of (min member, root), lazily pruned

    def find(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.cnt[x] = 0
            return x
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def _touch(self, r):
        if self.cnt[r]:
            heapq.heappush(self._heaps.setdefault(self.cnt[r], []), (self.mn[r], r))

    def _union(self, x, y):
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return
        if self.cnt[rx] < self.cnt[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.cnt[ry]:
            if self.cnt[rx]:
                self.mn[rx] = min(self.mn[rx], self.mn[ry])
                self.mx[rx] = max(self.mx[rx], self.mx[ry])
            else:
                self.mn[rx], self.mx[rx] = self.mn[ry], self.mx[ry]
        self.cnt[rx] += self.cnt.pop(ry)
        self._touch(rx)

    def advance(self):
        """Move to stage p + 1: merge its pairs, then start counting element p + 1."""
        self.p += 1
        while self._seen < len(self._arrivals) and self._arrivals[self._seen][0] <= self.p:
            x, y = self._arrivals[self._seen][1]
            self._union(x, y)
            self._seen += 1
        r = self.find(self.p)
        self.mn[r] = min(self.mn[r], self.p) if self.cnt[r] else self.p
        self.mx[r] = self.p
        self.cnt[r] += 1
        self._touch(r)

    def count(self, x) -> int:
        return self.cnt[self.find(x)] if x <= self.p else 0

    def newest(self, x) -> int:
        """Largest counted member of x's class."""
        return self.mx[self.find(x)]

    def min_by_size(self) -> dict[int, int]:
        """Least element among classes of each member count."""
        out = {}
        for size, heap in list(self._heaps.items()):
            while heap:
                m, r = heap[0]
                if self.parent.get(r) == r and self.cnt[r] == size and self.mn[r] == m:
                    out[size] = m
                    break
                heapq.heappop(heap)
            if not heap:
                del self._heaps[size]
        return out


def _lex_least_suffix(start: int, prev: int, lower: list[int], by_size: dict[int, int]) -> list[int] | None:
    """Lexicographically least b_start..b_last with strictly increasing counts.

    ``lower[j]`` bounds the count at position j from below, ``prev`` is the
    count of b_{start-1}. Returns None when no such choice exists.
    """
    sizes = sorted(by_size)
    if not sizes:
        return None
    last = len(lower) - 1
    # latest feasible counts, filled from the right
    upper = [0] * (last + 2)
    upper[last + 1] = sizes[-1] + 1
    for j in range(last, start - 1, -1):
        k = bisect.bisect_left(sizes, upper[j + 1]) - 1
        if k < 0 or sizes[k] < lower[j]:
            return None
        upper[j] = sizes[k]
    if upper[start] <= prev:
        return None
    out = []
    for j in range(start, last + 1):
        lo, hi = max(lower[j], prev + 1), upper[j + 1] - 1
        i0, i1 = bisect.bisect_left(sizes, lo), bisect.bisect_right(sizes, hi)
        size = min(sizes[i0:i1], key=by_size.__getitem__)
        out.append(by_size[size])
        prev = size
    return out


def extract_s1(E: PairEnumerationOracle, budget: int, stages: int | None = None) -> S1Table:
    """Run the staged search for anchors a_i^s and checkpoints p_s.

    At stage s+1 the least p > p_s is found together with the lexicographically
    least b_0, ..., b_{s+1} such that f(i, s) <= c(b_i) < c(b_{i+1}), where c
    counts class members <= p at stage p. b_0 = 0 always, and b_i keeps the old
    anchor while none of the classes of a_0..a_i has gained a member above p_s.
    When pairs between old elements arrive late, the kept anchors can stop
    having strictly increasing counts; the kept prefix is then cut before the
    first anchor that caught up with its successor instead of stalling forever. Stops after ``stages`` stages; raises BudgetExhausted carrying the
    partial table if p would pass ``budget`` first. Without ``stages`` the
    search simply runs until the budget and returns what it has.
    """
    limit = min(budget, E.budget)
    G = _GrowingClosure(E, limit)
    G.advance()
    table = S1Table({(0, 0): 1}, 0, anchors=[(0,)], checkpoints=[0])
    anchors = [0]
    s = 0
    while stages is None or s < stages:
        p_s = table.checkpoints[-1]
        lower = [table.f(i, s) for i in range(s + 1)] + [1]
        found = None
        while found is None and G.p < limit:
            G.advance()
            gained = next((j for j in range(s + 1) if G.newest(anchors[j]) > p_s), s + 1)
            forced = [0] + anchors[1:max(gained, 1)]
            counts = [G.count(b) for b in forced]
            # late links among old elements can invert the kept counts; the
            # anchor that caught up with its successor is released with it
            cut = next((max(i - 1, 1) for i in range(1, len(counts)) if counts[i - 1] >= counts[i]),
                       len(counts))
            forced, counts = forced[:cut], counts[:cut]
            suffix = _lex_least_suffix(len(forced), counts[-1], lower, G.min_by_size())
            if suffix is not None:
                found = forced + suffix
        if found is None:
            while G.p < limit:
                G.advance()
            table.final_counts = [G.count(a) for a in anchors]
            if stages is None:
                break
            raise BudgetExhausted(f"s1 search reached budget {limit} at stage {s + 1}", partial=table)
        s += 1
        anchors = found
        for i, b in enumerate(anchors):
            table.values[(i, s)] = G.count(b)
        table.last_stage = s
        table.anchors.append(tuple(anchors))
        table.checkpoints.append(G.p)
    if table.final_counts is None:
        while G.p < limit:
            G.advance()
        table.final_counts = [G.count(a) for a in anchors]
    return table


# -- synthesis ----------------------------------------------------------------


@dataclass(frozen=True)
class CharacterApprox:
    """Stagewise guesses g(k, n, s) at whether (k, n) is in the character."""

    g: Callable[[int, int, int], bool]
    budget: int
    max_size: int
    max_count: int = 64
    label: str = ""

    def counts(self) -> dict[int, int]:
        """Size k -> number of n <= max_count affirmed at the budget."""
        out = {}
        for k in range(1, self.max_size + 1):
            c = sum(1 for n in range(1, self.max_count + 1) if self.g(k, n, self.budget))
            if c:
                out[k] = c
        return out


def empty_character(budget: int = 0) -> CharacterApprox:
    return CharacterApprox(lambda k, n, s: False, budget, 0, 0, "empty")


@dataclass
class Realization:
    structure: EqStructure
    growth: list[dict[int, int]]  # per stage: row -> block size
    limits: list[tuple[int, int]]
    extra_blocks: dict[int, int]  # size -> number of blocks added beyond the s1 rows


def build_from_character(K: CharacterApprox | None, f: S1Table, horizon: int | None = None,
                         patience: int = 2) -> Realization:
    """A computable structure with one class per s1 row plus K's remaining classes.

    Blocks grow monotonically: at every stage, row i's block is topped up with
    fresh naturals until it holds f(i, s) elements. Rows that have not
    stabilized keep an undetermined size. Classes K affirms beyond what the
    rows already supply are appended as contiguous blocks after the last stage.
    """
    report = validate_s1(f, patience)
    if not report.valid:
        raise ValidationError("not an s1-function", [report.violation])
    owner: list[int] = []  # element -> label
    sizes: Counter = Counter()
    growth = []
    for s in range(f.last_stage + 1):
        for i in range(s + 1):
            while sizes[i] < f.f(i, s):
                owner.append(i)
                sizes[i] += 1
        growth.append({i: sizes[i] for i in range(s + 1)})
    limits = report.limits
    declared = {i: m for i, m in enumerate(m for m, _ in limits)}
    extra: dict[int, int] = {}
    next_label = f.last_stage + 1
    if K is not None:
        from_rows = Counter(declared.values())
        for k, c in sorted(K.counts().items()):
            need = max(0, c - from_rows[k])
            if need:
                extra[k] = need
            for _ in range(need):
                owner.extend([next_label] * k)
                declared[next_label] = k
                sizes[next_label] = k
                next_label += 1
    members: dict[int, list[int]] = {}
    for x, lab in enumerate(owner):
        members.setdefault(lab, []).append(x)
    extent = len(owner) if horizon is None else min(len(owner), horizon)
    structure = EqStructure(
        label=owner.__getitem__,
        class_size=declared.get,
        members=lambda lab: tuple(members.get(lab, ())),
        extent=extent,
        provenance="character-realization",
    )
    return Realization(structure, growth, limits, extra)
