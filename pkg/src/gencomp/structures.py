"""Equivalence structures, characters, type sets and the canonical structures.

A structure is given by a total *label* function: x and y are related iff
they lie in the universe and carry equal labels. Each label also knows the
size of its class (``None`` for classes declared infinite), and optionally
its members, which lets finite horizons tell complete classes from ones the
horizon cuts off.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Sequence

import numpy as np

from .density import as_predicate
from .enumeration import UnionFind
from .errors import InvariantViolation


@dataclass(frozen=True)
class EqStructure:
    label: Callable[[int], Hashable]
    class_size: Callable[[Hashable], int | None]
    members: Callable[[Hashable], Iterable[int]] | None = None
    universe: Callable[[int], bool] | None = None
    extent: int | None = None  # universe is cut to {0..extent-1} when set
    provenance: str = ""
    relation: Callable[[int, int], bool] | None = None  # overrides label equality

    def in_universe(self, x: int) -> bool:
        if x < 0 or (self.extent is not None and x >= self.extent):
            return False
        return self.universe is None or bool(self.universe(x))

    def related(self, x: int, y: int) -> bool:
        if not (self.in_universe(x) and self.in_universe(y)):
            return False
        if self.relation is not None:
            return bool(self.relation(x, y))
        return self.label(x) == self.label(y)

    def size_of(self, x: int) -> int | None:
        return self.class_size(self.label(x))

    def class_of(self, x: int, horizon: int | None = None) -> tuple[int, ...]:
        """Members of x's class; infinite classes are cut at ``horizon``."""
        lab = self.label(x)
        if self.members is None:
            if horizon is None:
                raise ValueError("structure has no member enumeration; pass a horizon")
            return tuple(y for y in range(horizon) if self.in_universe(y) and self.label(y) == lab)
        out = []
        finite = self.class_size(lab) is not None
        for y in self.members(lab):
            if not finite and horizon is not None and y >= horizon:
                break
            out.append(y)
        return tuple(out)

    def partner(self, x: int) -> int | None:
        """The other member of a size-two class, else None."""
        if self.size_of(x) != 2:
            return None
        a, b = self.class_of(x)
        return b if a == x else a

    # -- constructors for finite data ---------------------------------------

    @classmethod
    def from_labels(cls, labels: Sequence[Hashable], provenance: str = "labels") -> "EqStructure":
        """Finite structure on {0..len(labels)-1}; every class is complete."""
        labels = tuple(labels)
        sizes = Counter(labels)
        groups: dict = {}
        for x, l in enumerate(labels):
            groups.setdefault(l, []).append(x)
        return cls(
            label=labels.__getitem__,
            class_size=sizes.__getitem__,
            members=lambda l: tuple(groups[l]),
            extent=len(labels),
            provenance=provenance,
        )

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], provenance: str = "blocks") -> "EqStructure":
        blocks = [tuple(sorted(b)) for b in blocks]
        n = sum(len(b) for b in blocks)
        labels: list = [None] * n
        for b in blocks:
            for x in b:
                if x >= n or labels[x] is not None:
                    raise InvariantViolation(f"blocks do not partition {{0..{n - 1}}}")
                labels[x] = b[0]
        return cls.from_labels(labels, provenance)

    @classmethod
    def from_relation(cls, rel: Callable[[int, int], bool], n: int,
                      provenance: str = "relation") -> "EqStructure":
        """Finite structure on {0..n-1} from a decision procedure, checked exhaustively."""
        check_relation(rel, n)
        uf = UnionFind(range(n))
        for x in range(n):
            for y in range(x + 1, n):
                if rel(x, y):
                    uf.union(x, y)
        base = cls.from_blocks(uf.blocks(), provenance)
        return EqStructure(base.label, base.class_size, base.members, None, n, provenance, rel)


def check_relation(rel: Callable[[int, int], bool], n: int) -> None:
    """Exhaustive reflexivity, symmetry and transitivity on {0..n-1}."""
    for x in range(n):
        if not rel(x, x):
            raise InvariantViolation(f"not reflexive at {x}")
    uf = UnionFind(range(n))
    for x in range(n):
        for y in range(x + 1, n):
            r = rel(x, y)
            if r != rel(y, x):
                raise InvariantViolation(f"not symmetric at ({x}, {y})")
            if r:
                uf.union(x, y)
    # transitive iff every pair inside a connected component is related
    for block in uf.blocks():
        for i, x in enumerate(block):
            for y in block[i + 1:]:
                if not rel(x, y):
                    raise InvariantViolation(f"not transitive: {x} and {y} linked but unrelated")


def check_matrix(R: np.ndarray) -> None:
    """Reflexivity, symmetry and transitivity of a boolean relation matrix."""
    if not R.diagonal().all():
        raise InvariantViolation(f"not reflexive at {int(np.argmin(R.diagonal()))}")
    asym = np.argwhere(R != R.T)
    if len(asym):
        raise InvariantViolation(f"not symmetric at {tuple(int(v) for v in asym[0])}")
    Rf = R.astype(np.float32)
    bad = np.argwhere((Rf @ Rf > 0) & ~R)
    if len(bad):
        raise InvariantViolation(f"not transitive: {tuple(int(v) for v in bad[0])} linked but unrelated")


def check_equivalence(S: EqStructure, horizon: int) -> None:
    """Exhaustive equivalence check on the universe below ``horizon``.

    Label-defined structures are compared through integer label codes so that
    the full relation matrix is built in one pass; a relation override is
    queried pair by pair.
    """
    pts = [x for x in range(horizon) if S.in_universe(x)]
    if S.relation is not None:
        check_relation(lambda i, j: S.related(pts[i], pts[j]), len(pts))
        return
    codes: dict = {}
    lab = np.array([codes.setdefault(S.label(x), len(codes)) for x in pts], dtype=np.int64)
    check_matrix(lab[:, None] == lab[None, :])
    classes_at(S, horizon)  # declared sizes must not be exceeded


# -- type sets and characters -------------------------------------------------


@dataclass(frozen=True)
class TypePartition:
    by_size: dict[int, tuple[int, ...]]
    undetermined: tuple[int, ...]
    horizon: int

    def of_size(self, k: int) -> tuple[int, ...]:
        return self.by_size.get(k, ())

    def density(self, k: int) -> Fraction:
        return Fraction(len(self.of_size(k)), self.horizon)


def _groups(S: EqStructure, horizon: int) -> dict:
    groups: dict = {}
    for x in range(horizon):
        if S.in_universe(x):
            groups.setdefault(S.label(x), []).append(x)
    return groups


def classes_at(S: EqStructure, horizon: int) -> tuple[list[tuple[int, ...]], list[tuple[int, ...]]]:
    """Split the classes meeting ``{0..horizon-1}`` into (complete, truncated)."""
    complete, truncated = [], []
    for lab, grp in _groups(S, horizon).items():
        size = S.class_size(lab)
        if size is not None and len(grp) > size:
            raise InvariantViolation(f"class {lab!r} has {len(grp)} members but declared size {size}")
        (complete if size == len(grp) else truncated).append(tuple(grp))
    complete.sort()
    truncated.sort()
    return complete, truncated


def type_sets(S: EqStructure, horizon: int) -> TypePartition:
    complete, truncated = classes_at(S, horizon)
    by_size: dict[int, list[int]] = {}
    for grp in complete:
        by_size.setdefault(len(grp), []).extend(grp)
    return TypePartition(
        {k: tuple(sorted(v)) for k, v in sorted(by_size.items())},
        tuple(sorted(x for g in truncated for x in g)),
        horizon,
    )


@dataclass(frozen=True)
class Character:
    counts: dict[int, int]
    saturated: frozenset[int] = frozenset()  # sizes a truncated class could still reach
    truncated: int = 0

    def pairs(self) -> set[tuple[int, int]]:
        return {(k, n) for k, c in self.counts.items() for n in range(1, c + 1)}

    def to_json(self) -> dict:
        return {
            "counts": {str(k): {"count": c, "saturated": k in self.saturated}
                       for k, c in sorted(self.counts.items())},
            "truncated": self.truncated,
        }


def character_of(S: EqStructure, horizon: int) -> Character:
    complete, truncated = classes_at(S, horizon)
    counts = Counter(len(g) for g in complete)
    smallest_cut = min((len(g) for g in truncated), default=None)
    saturated = frozenset(k for k in counts if smallest_cut is not None and smallest_cut <= k)
    return Character(dict(sorted(counts.items())), saturated, len(truncated))


def snapshot_json(S: EqStructure, horizon: int) -> dict:
    complete, truncated = classes_at(S, horizon)
    return {
        "horizon": horizon,
        "classes": [list(g) for g in complete],
        "undetermined": sorted(x for g in truncated for x in g),
    }


def is_faithful(A, S: EqStructure, horizon: int) -> tuple[bool, tuple[int, int] | None]:
    """Whether every class meeting A (below the horizon) lies inside A.

    Returns ``(True, None)`` or ``(False, (a, b))`` with a in A, b not in A, a ~ b.
    """
    in_A = as_predicate(A)
    for lab, grp in sorted(_groups(S, horizon).items(), key=lambda kv: kv[1][0]):
        inside = [x for x in grp if in_A(x)]
        if inside and len(inside) < len(grp):
            outside = next(x for x in grp if not in_A(x))
            return False, (inside[0], outside)
    return True, None


# -- canonical structures -----------------------------------------------------


def triangular(k: int) -> int:
    return k * (k + 1) // 2


def triangular_index(x: int) -> int:
    """The k with T_k <= x < T_{k+1}."""
    k = (math.isqrt(8 * x + 1) - 1) // 2
    return k


def canonical_all_sizes() -> EqStructure:
    """One class of every finite size: {0}, {1,2}, {3,4,5}, ..."""
    return EqStructure(
        label=triangular_index,
        class_size=lambda k: k + 1,
        members=lambda k: range(triangular(k), triangular(k + 1)),
        provenance="canonical-all-sizes",
    )


def _dense_pairs_label(x: int):
    n = math.isqrt(x)
    r = x - n * n
    if r == 0:
        return ("s", x)
    return ("p", n, (r + 1) // 2)


def _dense_pairs_members(lab):
    if lab[0] == "s":
        return (lab[1],)
    _, n, j = lab
    return (n * n + 2 * j - 1, n * n + 2 * j)


def _sparse_pairs_label(x: int):
    n = math.isqrt(x)
    if n >= 1 and x - n * n <= 1:
        return ("p", n)
    return ("s", x)


def _sparse_pairs_members(lab):
    if lab[0] == "s":
        return (lab[1],)
    n = lab[1]
    return (n * n, n * n + 1)


def canonical_12(mode: str = "dense-pairs") -> EqStructure:
    """(1,2)-structures with computable type sets.

    dense-pairs: singletons exactly at the squares, the gap after n^2 filled
    by the pairs {n^2 + 2j - 1, n^2 + 2j}, 1 <= j <= n.
    sparse-pairs: pairs exactly {n^2, n^2 + 1} for n >= 1, singletons elsewhere.
    """
    if mode == "dense-pairs":
        label, members = _dense_pairs_label, _dense_pairs_members
    elif mode == "sparse-pairs":
        label, members = _sparse_pairs_label, _sparse_pairs_members
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return EqStructure(
        label=label,
        class_size=lambda lab: 1 if lab[0] == "s" else 2,
        members=members,
        provenance=f"canonical-12-{mode}",
    )


def identity_structure() -> EqStructure:
    return EqStructure(label=lambda x: x, class_size=lambda l: 1, members=lambda l: (l,),
                       provenance="identity")


def block_structure(k: int) -> EqStructure:
    """Classes {nk, ..., nk + k - 1}."""
    return EqStructure(
        label=lambda x: x // k,
        class_size=lambda l: k,
        members=lambda l: range(l * k, l * k + k),
        provenance=f"blocks({k})",
    )


def two_class_structure(A) -> EqStructure:
    """Two infinite classes: A and its complement."""
    in_A = as_predicate(A)
    return EqStructure(label=lambda x: bool(in_A(x)), class_size=lambda l: None,
                       provenance="two-classes")


def restrict(S: EqStructure, Y) -> EqStructure:
    """The substructure on ``Y ∩ universe``."""
    in_Y = as_predicate(Y)

    def universe(x):
        return bool(in_Y(x)) and S.in_universe(x)

    def members(lab):
        return (y for y in S.members(lab) if in_Y(y))

    def class_size(lab):
        if S.class_size(lab) is None or S.members is None:
            return None
        return sum(1 for _ in members(lab))

    return EqStructure(
        label=S.label,
        class_size=class_size,
        members=members if S.members is not None else None,
        universe=universe,
        extent=S.extent,
        provenance=f"restrict({S.provenance})",
        relation=S.relation,
    )


# -- A_K ----------------------------------------------------------------------


@dataclass(frozen=True)
class AKCheckpoint:
    n: int  # number of classes (sizes 1..n) below the checkpoint
    elements: int  # T_n
    missing_sizes: int  # m
    members: int  # |A_K ∩ T_n| counted directly
    deficit: Fraction
    bound: Fraction  # 2m/n

    @property
    def ok(self) -> bool:
        return self.deficit <= self.bound


@dataclass(frozen=True)
class AKReport:
    member: Callable[[int], bool]
    checkpoints: list[AKCheckpoint] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checkpoints)


def build_A_K(K, horizon: int) -> AKReport:
    """Elements of the all-sizes structure lying in classes whose size is in K,
    with the deficit bound checked at every triangular checkpoint <= horizon."""
    in_K = as_predicate(K)

    def member(x: int) -> bool:
        return bool(in_K(triangular_index(x) + 1))

    checkpoints = []
    count = m = 0
    n = 1
    while triangular(n) <= horizon:
        lo, hi = triangular(n - 1), triangular(n)
        count += sum(1 for x in range(lo, hi) if member(x))
        m += not in_K(n)
        deficit = Fraction(hi - count, hi)
        checkpoints.append(AKCheckpoint(n, hi, m, count, deficit, Fraction(2 * m, n)))
        n += 1
    return AKReport(member, checkpoints)
