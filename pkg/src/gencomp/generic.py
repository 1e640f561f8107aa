"""Generically and coarsely computable copies of equivalence structures.

Every copy here is a pullback ``x E* y  <=>  f(x) E f(y)`` through a
permutation f that sends a dense computable carrier A onto a chosen set B and
the complement of A onto the complement of B, both in order. Only the part of
f below the horizon is ever materialized.

Properties that cannot be decided (an infinite class, infinitely many classes
of one size, unbounded character, a size of positive density) are declared
by the caller in :class:`ScenarioMetadata` and spot-checked at the horizon.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterator

import numpy as np

from .density import as_predicate, extract_dense_subset
from .enumeration import (
    EnumerationOracle,
    OracleRegistry,
    ce_closure,
    is_square,
    set_oracle,
)
from .errors import BudgetExhausted, PreconditionError, ScenarioError, UnsupportedStructure
from .s1 import CharacterApprox, S1Table, build_from_character
from .structures import (
    EqStructure,
    block_structure,
    build_A_K,
    character_of,
    classes_at,
    identity_structure,
    is_faithful,
    triangular_index,
    two_class_structure,
)

CASES = ("infinite-class", "repeated-size", "s1-subset")


def co_squares(x: int) -> bool:
    return not is_square(x)


@dataclass(frozen=True)
class ScenarioMetadata:
    case: str = "none"
    infinite_label: Hashable | None = None  # label of a declared infinite class
    repeated_size: int | None = None
    positive_density_size: int | None = None

    def __post_init__(self):
        if self.case not in CASES + ("none",):
            raise ScenarioError(f"unknown case tag {self.case!r}")


# -- the transporting permutation ---------------------------------------------


class ClassScanner:
    """Walk the finite classes of S in order of least member."""

    def __init__(self, S: EqStructure):
        if S.members is None:
            raise PreconditionError("structure must list its class members")
        self.S = S
        self._x = 0

    def __iter__(self) -> Iterator[tuple[int, Hashable, tuple[int, ...]]]:
        S = self.S
        x = 0
        while True:
            if S.in_universe(x):
                lab = S.label(x)
                if S.class_size(lab) is not None:
                    mem = tuple(S.members(lab))
                    if mem[0] == x:
                        yield x, lab, mem
                        # contiguous classes can be skipped wholesale
                        if mem[-1] - x + 1 == len(mem):
                            x += len(mem)
                            continue
            x += 1


@dataclass
class TransportPermutation:
    """f on {0..horizon-1}: the i-th element of A goes to ``b_elems[i]``,
    the i-th element outside A to the i-th element outside B."""

    horizon: int
    forward: dict[int, int]
    inverse: dict[int, int]

    @classmethod
    def build(cls, horizon: int, in_A: Callable[[int], bool], b_elems: list[int],
              in_B: Callable[[int], bool]) -> "TransportPermutation":
        a = [x for x in range(horizon) if in_A(x)]
        abar = [x for x in range(horizon) if not in_A(x)]
        if len(b_elems) < len(a):
            raise ScenarioError(f"carrier image has {len(b_elems)} elements, need {len(a)}")
        forward = dict(zip(a, b_elems))
        y = 0
        for x in abar:
            while in_B(y):
                y += 1
            forward[x] = y
            y += 1
        inverse = {v: k for k, v in forward.items()}
        if len(inverse) != len(forward):
            raise ScenarioError("transport map is not injective")
        return cls(horizon, forward, inverse)

    def __call__(self, x: int) -> int:
        return self.forward[x]


def pullback(S: EqStructure, f: TransportPermutation, provenance: str) -> EqStructure:
    """x E* y iff f(x) E f(y), on {0..horizon-1}."""
    return EqStructure(
        label=lambda x: S.label(f.forward[x]),
        class_size=S.class_size,
        members=None,
        extent=f.horizon,
        provenance=provenance,
    )


def transport_report(S: EqStructure, f: TransportPermutation, copy: EqStructure) -> dict:
    """Class-by-class comparison of the copy against S through f.

    A copy class below the horizon whose whole S-image is reached by f must
    have the same size as that S-class; the size multisets then agree.
    """
    groups: dict = {}
    for x in range(f.horizon):
        groups.setdefault(copy.label(x), []).append(x)
    copy_sizes, source_sizes = Counter(), Counter()
    mismatches = 0
    for lab, grp in groups.items():
        size = S.class_size(lab)
        if size is None or S.members is None:
            continue
        mem = list(S.members(lab))
        if all(y in f.inverse for y in mem):
            copy_sizes[len(grp)] += 1
            source_sizes[len(mem)] += 1
            mismatches += len(grp) != len(mem)
    injective = len(set(f.forward.values())) == len(f.forward)
    return {
        "injective": injective,
        "complete_classes": sum(copy_sizes.values()),
        "size_mismatches": mismatches,
        "multisets_equal": copy_sizes == source_sizes,
    }


# -- witnesses -----------------------------------------------------------------


def _codes(labels) -> np.ndarray:
    table: dict = {}
    return np.fromiter((table.setdefault(l, len(table)) for l in labels), dtype=np.int64)


def relation_agreement(xs: list[int], left: Callable, right: Callable) -> tuple[bool, tuple[int, int] | None]:
    """Whether two label functions induce the same relation on ``xs``."""
    if not xs:
        return True, None
    a, b = _codes(left(x) for x in xs), _codes(right(x) for x in xs)
    # the relations agree iff the label pairs are in bijection
    pairs = set(zip(a.tolist(), b.tolist()))
    if len(pairs) == len(set(a.tolist())) == len(set(b.tolist())):
        return True, None
    for i in range(0, len(xs), 512):
        blk = (a[i:i + 512, None] == a[None, :]) != (b[i:i + 512, None] == b[None, :])
        bad = np.argwhere(blk)
        if len(bad):
            r, c = bad[0]
            return False, (xs[i + int(r)], xs[int(c)])
    return True, None


@dataclass
class GenericWitness:
    """Phi decides the relation on its domain D x D, and A is inside D."""

    phi_label: Callable[[int], Hashable]  # Phi(x, y) = [phi_label(x) == phi_label(y)]
    domain_set: Callable[[int], bool]
    A: Callable[[int], bool]
    A_oracle: EnumerationOracle
    copy: EqStructure
    faithful: bool

    def phi(self, x: int, y: int) -> bool | None:
        if not (self.domain_set(x) and self.domain_set(y)):
            return None
        return self.phi_label(x) == self.phi_label(y)

    def verify(self, horizon: int) -> dict:
        """Exhaustive below the horizon: Phi agrees with the copy on its domain,
        and A x A lies in the domain."""
        dom = [x for x in range(horizon) if self.domain_set(x)]
        agree, counter = relation_agreement(dom, self.phi_label, self.copy.label)
        in_dom = all(self.domain_set(x) for x in range(horizon) if self.A(x))
        return {"agreement": agree, "disagreement": counter, "AxA_in_domain": in_dom,
                "domain_size": len(dom)}


@dataclass
class GenericCopy:
    case: str
    copy: EqStructure
    A: Callable[[int], bool]
    S_cmp: EqStructure
    witness: GenericWitness
    perm: TransportPermutation
    faithful_claim: bool
    notes: dict = field(default_factory=dict)

    def verify(self, source: EqStructure) -> dict:
        H = self.perm.horizon
        report = self.witness.verify(H)
        report["transport"] = transport_report(source, self.perm, self.copy)
        ok_copy, cx_copy = is_faithful(self.A, self.copy, H)
        ok_cmp, cx_cmp = is_faithful(self.A, self.S_cmp, H)
        report["faithful_copy"] = ok_copy
        report["faithful_cmp"] = ok_cmp
        report["faithful_counterexample"] = cx_copy or cx_cmp
        return report


def _make_witness(copy: EqStructure, S_cmp: EqStructure, A, budget: int, faithful: bool) -> GenericWitness:
    in_A = as_predicate(A)
    return GenericWitness(
        phi_label=S_cmp.label,
        domain_set=in_A,
        A=in_A,
        A_oracle=set_oracle(in_A, budget, label="carrier"),
        copy=copy,
        faithful=faithful,
    )


def _spot_check(S: EqStructure, meta: ScenarioMetadata, horizon: int) -> None:
    if meta.case == "infinite-class":
        if meta.infinite_label is None or S.class_size(meta.infinite_label) is not None:
            raise ScenarioError("infinite-class case needs a declared infinite class label")
        seen = sum(1 for x in range(horizon) if S.in_universe(x) and S.label(x) == meta.infinite_label)
        if seen < 2:
            raise ScenarioError(f"declared infinite class has {seen} members below {horizon}")
    elif meta.case == "repeated-size":
        k = meta.repeated_size
        if not k or k < 1:
            raise ScenarioError("repeated-size case needs a positive size")
        count = character_of(S, horizon).counts.get(k, 0)
        if count < 2:
            raise ScenarioError(f"only {count} classes of size {k} below {horizon}")
    elif meta.case == "s1-subset":
        if len(character_of(S, horizon).counts) < 3:
            raise ScenarioError("character looks bounded at the horizon")
    else:
        raise UnsupportedStructure("no case of the faithful-copy criterion is declared")


def strongly_generic_copy(S: EqStructure, meta: ScenarioMetadata, horizon: int,
                          carrier: Callable[[int], bool] = co_squares, budget: int | None = None) -> GenericCopy:
    """A copy of S agreeing with a computable relation on a dense computable set.

    infinite-class: the carrier becomes the infinite class; compare with the
    two-class relation. repeated-size(k): the carrier is a union of k-blocks
    (those with non-square index) sent onto every other size-k class of S;
    compare with the block relation. s1-subset (unbounded character): the
    carrier is sent onto one element from the first class of each size;
    compare with equality.
    """
    _spot_check(S, meta, min(horizon, 4000))
    budget = horizon + 1 if budget is None else budget
    if meta.case == "infinite-class":
        lab = meta.infinite_label
        in_B = lambda y: S.in_universe(y) and S.label(y) == lab
        A = carrier
        need = sum(1 for x in range(horizon) if A(x))
        b_elems, y = [], 0
        while len(b_elems) < need:
            if in_B(y):
                b_elems.append(y)
            y += 1
        S_cmp = two_class_structure(A)
        faithful = True
    elif meta.case == "repeated-size":
        k = meta.repeated_size
        A = lambda x: not is_square(x // k)
        need = sum(1 for x in range(horizon) if A(x))
        chosen: list = []
        chosen_labels: set = set()
        b_elems = []
        scan = iter(ClassScanner(S))
        index = 0
        last_min = -1
        # every other size-k class, so that infinitely many stay outside B
        while len(b_elems) < need:
            x, l, mem = next(scan)
            last_min = x
            if len(mem) == k:
                if index % 2 == 0:
                    chosen.append(mem)
                    chosen_labels.add(l)
                    b_elems.extend(mem)
                index += 1
        scan_state = {"index": index, "it": scan, "last": last_min}

        def in_B(y, _labels=chosen_labels, _st=scan_state):
            while _st["last"] < y:
                x, l, mem = next(_st["it"])
                _st["last"] = x
                if len(mem) == k:
                    if _st["index"] % 2 == 0:
                        _labels.add(l)
                    _st["index"] += 1
            return S.in_universe(y) and S.label(y) in _labels

        S_cmp = block_structure(k)
        faithful = True
    elif meta.case == "s1-subset":
        A = carrier
        need = sum(1 for x in range(horizon) if A(x))
        b_elems = []
        sizes: set = set()
        b_set: set = set()
        scan = iter(ClassScanner(S))
        last = -1
        while len(b_elems) < need:
            x, _, mem = next(scan)
            last = x
            if len(mem) not in sizes:
                sizes.add(len(mem))
                b_elems.append(x)
                b_set.add(x)
        state = {"it": scan, "last": last}

        def in_B(y, _st=state):
            while _st["last"] < y:
                x, _, mem = next(_st["it"])
                _st["last"] = x
                if len(mem) not in sizes:
                    sizes.add(len(mem))
                    b_set.add(x)
            return y in b_set

        S_cmp = identity_structure()
        faithful = False
    else:
        raise UnsupportedStructure(f"case {meta.case!r} has no strongly generic copy rule")
    f = TransportPermutation.build(horizon, A, b_elems, in_B)
    copy = pullback(S, f, f"copy({S.provenance})")
    w = _make_witness(copy, S_cmp, A, budget, faithful)
    return GenericCopy(meta.case, copy, A, S_cmp, w, f, faithful)


# -- faithful copies ------------------------------------------------------------


def faithful_generic_copy(S: EqStructure, meta: ScenarioMetadata, horizon: int,
                          K: CharacterApprox | None = None, f: S1Table | None = None,
                          carrier: Callable[[int], bool] = co_squares) -> GenericCopy:
    """A copy of S with a faithful computable substructure on a dense carrier.

    The first two cases reuse :func:`strongly_generic_copy`. For s1-subset the
    carrier holds a computable structure realizing (K, f); each of its
    classes is matched with an unused S-class of the same size, so the
    carrier's image is a union of whole S-classes.
    """
    if meta.case in ("infinite-class", "repeated-size"):
        return strongly_generic_copy(S, meta, horizon, carrier)
    _spot_check(S, meta, min(horizon, 4000))
    if f is None:
        raise PreconditionError("the s1-subset case needs an s1-table")
    real = build_from_character(K, f)
    R0 = real.structure
    complete, _ = classes_at(R0, R0.extent)
    a_elems = [x for x in range(horizon) if carrier(x)]
    # R0's element i sits on the i-th carrier element
    cls_of: dict[int, tuple[int, ...]] = {x: c for c in complete for x in c}
    if any(i not in cls_of for i in range(len(a_elems))):
        raise ScenarioError(f"realized structure has {len(cls_of)} settled elements, "
                            f"carrier needs {len(a_elems)}")
    pool: dict[int, list] = {}
    scan = iter(ClassScanner(S))
    match: dict[tuple[int, ...], tuple[int, ...]] = {}
    for c in sorted({cls_of[i] for i in range(len(a_elems))}):
        m = len(c)
        while not pool.get(m):
            _, _, mem = next(scan)
            pool.setdefault(len(mem), []).append(mem)
        match[c] = pool[m].pop(0)
    b_elems = [match[cls_of[i]][cls_of[i].index(i)] for i in range(len(a_elems))]
    b_set = {y for mem in match.values() for y in mem}
    perm = TransportPermutation.build(horizon, carrier, b_elems, b_set.__contains__)
    copy = pullback(S, perm, f"faithful-copy({S.provenance})")
    carried = {a_elems[i]: i for i in range(len(a_elems))}
    R_label = lambda x: ("R", cls_of[carried[x]][0]) if x in carried else ("out", x)
    R_size = lambda l: len(cls_of[l[1]]) if l[0] == "R" else 1
    R = EqStructure(label=R_label, class_size=R_size, provenance="carried-realization",
                    universe=carrier, extent=horizon)
    w = GenericWitness(
        phi_label=R_label,
        domain_set=carrier,
        A=carrier,
        A_oracle=set_oracle(carrier, horizon + 1, label="carrier"),
        copy=copy,
        faithful=True,
    )
    out = GenericCopy("s1-subset", copy, carrier, R, w, perm, True,
                      notes={"realized_limits": [m for m, _ in real.limits], "matched_classes": len(match)})
    return out


# -- restriction to a computable subset ------------------------------------------


@dataclass
class Restriction:
    Y: Callable[[int], bool]
    covered: int
    structure: EqStructure
    certificate: object
    partial: bool


def restrict_generic_witness(w: GenericWitness, horizon: int, budget: int | None = None,
                             allow_partial: bool = False, min_coverage: int = 0) -> Restriction:
    """Extract a computable Y of upper density one inside A, decide E on Y by Phi.

    When extraction runs out of budget, ``allow_partial`` accepts the certified
    prefix if it covers at least ``min_coverage`` naturals.
    """
    partial = False
    try:
        Y, cert = extract_dense_subset(w.A_oracle, horizon, budget)
    except BudgetExhausted as exc:
        Y, cert = exc.partial
        if not allow_partial or cert.covered < max(min_coverage, 1):
            raise
        partial = True
    covered = min(cert.covered, horizon)
    in_Y = lambda x: x < covered and Y(x)
    structure = EqStructure(
        label=w.phi_label,
        class_size=lambda l: None,
        universe=in_Y,
        extent=covered,
        provenance="restriction",
        relation=lambda x, y: bool(w.phi(x, y)),
    )
    return Restriction(in_Y, covered, structure, cert, partial)


# -- coarse constructions on the all-sizes structure ------------------------------


@dataclass
class FaithfulCoarse:
    R: EqStructure
    A_K: Callable[[int], bool]
    report: dict


def build_faithful_coarse(K, horizon: int) -> FaithfulCoarse:
    """Keep the all-sizes classes with size in K; chop the rest of omega into one
    class of each size in K, taken in increasing order of size."""
    in_K = as_predicate(K)
    top = triangular_index(horizon) + 2
    if all(in_K(k) for k in range(1, top + 1)):
        raise ScenarioError(f"K contains every size up to {top}; it must be co-infinite")
    ak = build_A_K(in_K, horizon)
    member = ak.member
    comp: list[int] = []
    comp_label: dict[int, tuple] = {}
    sizes_iter = (k for k in range(1, 10 ** 9) if in_K(k))
    state = {"x": 0, "cls": 0, "left": next(sizes_iter), "sizes": []}
    state["sizes"].append(state["left"])

    def extend(upto):
        while state["x"] <= upto:
            x = state["x"]
            state["x"] += 1
            if member(x):
                continue
            if state["left"] == 0:
                state["cls"] += 1
                state["left"] = next(sizes_iter)
                state["sizes"].append(state["left"])
            comp.append(x)
            comp_label[x] = ("C", state["cls"])
            state["left"] -= 1

    def label(x):
        if member(x):
            return ("A", triangular_index(x))
        extend(x)
        return comp_label[x]

    def class_size(lab):
        if lab[0] == "A":
            return lab[1] + 1
        while len(state["sizes"]) <= lab[1]:
            extend(state["x"] + 64)
        return state["sizes"][lab[1]]

    R = EqStructure(label=label, class_size=class_size, provenance="faithful-coarse")
    E = EqStructure(label=triangular_index, class_size=lambda k: k + 1,
                    members=lambda k: range(k * (k + 1) // 2, (k + 1) * (k + 2) // 2),
                    provenance="canonical-all-sizes")
    xs = [x for x in range(horizon) if member(x)]
    agree, counter = relation_agreement(xs, triangular_index, label)
    ch = character_of(R, horizon)
    report = {
        "agreement": agree,
        "disagreement": counter,
        "faithful_E": is_faithful(member, E, horizon)[0],
        "faithful_R": is_faithful(member, R, horizon)[0],
        "max_count": max(ch.counts.values(), default=0),
        "sizes_in_K": all(in_K(k) for k in ch.counts),
        "deficit_ok": ak.ok,
        "checkpoints": ak.checkpoints,
    }
    return FaithfulCoarse(R, member, report)


@dataclass
class DiagonalK:
    member: Callable[[int], bool]
    omitted: dict[int, int | None]
    checkpoints: list[dict]

    @property
    def ok(self) -> bool:
        return all(c["ok"] for c in self.checkpoints)


def diagonal_dense_K(registry: OracleRegistry, horizon: int) -> DiagonalK:
    """Omit, for the set at registry index e, its least member above 2^{e+1}."""
    omitted: dict[int, int | None] = {}
    for e, S in enumerate(registry):
        bound = 1 << (e + 1)
        omitted[e] = next((x for x in range(bound + 1, max(horizon, bound + 1) + 1) if S.member(x)), None)
    gone = {x for x in omitted.values() if x is not None}
    member = lambda x: x >= 0 and x not in gone
    checkpoints = []
    i = 0
    while (1 << i) <= horizon:
        n = 1 << i
        count = sum(1 for x in range(n) if member(x))
        checkpoints.append({"i": i, "count": count, "bound": n - i, "ok": count >= n - i,
                            "density": Fraction(count, n)})
        i += 1
    return DiagonalK(member, omitted, checkpoints)


@dataclass
class AntiCoarseStage:
    e: int
    action: str  # "removed", "already-removed", "no-action", "stalled"
    modulus: int
    j: int | None = None
    preserved: int | None = None
    upper_density: Fraction | None = None
    witness_n: int | None = None


@dataclass
class AntiCoarseK:
    stages: list[AntiCoarseStage]
    removed: list[tuple[int, int, int]]  # (modulus, j, preserved)
    witnesses: list[dict]

    def member(self, m: int) -> bool:
        if m < 1:
            return False
        return not any(m % M == j and m != keep for M, j, keep in self.removed)

    @property
    def preserved(self) -> list[int]:
        return [keep for _, _, keep in self.removed]


def _class_sizes(W, budget: int, horizon: int) -> list[int]:
    part = ce_closure(W, W.clamp(budget), horizon)
    out = [0] * horizon
    for b in part.blocks:
        for x in b:
            out[x] = len(b)
    return out


def anti_coarse_K(registry: OracleRegistry, metadata: list[ScenarioMetadata | None], budget: int,
                  horizon: int) -> AntiCoarseK:
    """Build K against the registered c.e. structures, one requirement each.

    Structure e is handled at modulus 2^{e+2}. Unless metadata declares a size
    of positive density, the least residue j whose size class has measured
    upper density >= 2^{-e-2} (maximum over power-of-two checkpoints) is chosen,
    and all sizes congruent to j are removed from K except 2^{e+2} + j. A
    residue class inside an earlier removed one needs no further removal.
    """
    stages: list[AntiCoarseStage] = []
    removed: list[tuple[int, int, int]] = []
    sized: dict[int, tuple[list[int], list[int]]] = {}
    for e, W in enumerate(registry):
        M = 1 << (e + 2)
        meta = metadata[e] if e < len(metadata) else None
        if meta is not None and meta.positive_density_size is not None:
            stages.append(AntiCoarseStage(e, "no-action", M))
            continue
        sizes = _class_sizes(W, budget, 2 * horizon)[:horizon]
        short = _class_sizes(W, budget, horizon)
        sized[e] = (sizes, short)
        residues = np.array(sizes, dtype=np.int64) % M
        counts = np.zeros((M, horizon + 1), dtype=np.int64)
        for j in range(M):
            counts[j, 1:] = np.cumsum(residues == j)
        best = None
        n = 1
        checkpoints = []
        while n <= horizon:
            checkpoints.append(n)
            n <<= 1
        for j in range(M):
            dens = [Fraction(int(counts[j, c]), c) for c in checkpoints]
            up = max(dens)
            if up >= Fraction(1, M):
                # witness at the largest checkpoint that meets the bound
                top = max(c for c, d in zip(checkpoints, dens) if d >= Fraction(1, M))
                best = (j, up, top)
                break
        if best is None:
            stages.append(AntiCoarseStage(e, "stalled", M))
            continue
        j, up, top = best
        keep = M + j
        if any(j % M0 == j0 for M0, j0, _ in removed):
            stages.append(AntiCoarseStage(e, "already-removed", M, j, None, up, top))
            continue
        removed.append((M, j, keep))
        stages.append(AntiCoarseStage(e, "removed", M, j, keep, up, top))
    result = AntiCoarseK(stages, removed, [])
    for st in stages:
        if st.action not in ("removed", "already-removed"):
            continue
        sizes, short = sized[st.e]
        n = st.witness_n
        covered = sum(1 for x in range(n) if result.member(sizes[x]))
        truncated = sum(1 for x in range(n) if sizes[x] != short[x])
        kept = sum(1 for x in range(n) if sizes[x] % st.modulus == st.j and result.member(sizes[x]))
        eps = Fraction(truncated + kept, n)
        coverage = Fraction(covered, n)
        bound = 1 - Fraction(1, st.modulus) + eps
        result.witnesses.append({"e": st.e, "n": n, "coverage": coverage, "epsilon": eps,
                                 "bound": bound, "ok": coverage <= bound})
    return result
