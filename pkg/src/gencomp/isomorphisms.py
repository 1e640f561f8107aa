"""Generic and coarse isomorphisms between (1,2)-structures.

A (1,2)-structure has infinitely many classes of size one and of size two.
Finite ones are stored as a partner array: ``P[x]`` is the other member of
x's class, or -1 for a singleton. Everything is exact below a horizon and
reported as a witness object that can check itself.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np

from .density import as_predicate, density_profile, fmt_rational
from .enumeration import EnumerationOracle, OracleRegistry, PairEnumerationOracle, is_square
from .errors import (
    BudgetExhausted,
    ContainmentError,
    InvariantViolation,
    PreconditionError,
    ScenarioError,
    ScheduleError,
)
from .generic import ClassScanner, relation_agreement
from .structures import EqStructure, canonical_12

FAR = np.iinfo(np.int64).max  # partner beyond every stage we look at


# -- (1,2)-structures as partner arrays ------------------------------------------


def structure_from_partners(P: Sequence[int], provenance: str = "partners") -> EqStructure:
    """Finite (1,2)-structure on {0..len(P)-1}; a pair whose partner lies past
    the end is a truncated size-two class."""
    P = [int(p) for p in P]
    n = len(P)

    def label(x):
        p = P[x]
        return x if p < 0 else min(x, p)

    def members(l):
        p = P[l]
        return (l,) if p < 0 else tuple(sorted((l, p)))

    return EqStructure(
        label=label,
        class_size=lambda l: 1 if P[l] < 0 else 2,
        members=members,
        extent=n,
        provenance=provenance,
    )


def partner_array(S: EqStructure, length: int) -> np.ndarray:
    """``P[x]`` for x < length (cut to the structure's extent); partners at or
    past the end become FAR."""
    if S.extent is not None:
        length = min(length, S.extent)
    P = np.full(length, -1, dtype=np.int64)
    for x in range(length):
        size = S.size_of(x)
        if size == 1:
            continue
        if size != 2:
            raise PreconditionError(f"{S.provenance}: class of {x} has size {size}, not 1 or 2")
        p = S.partner(x)
        P[x] = p if p is not None and p < length else FAR
    return P


def scattered_12(q, length: int, seed: int = 0, block: int = 64) -> EqStructure:
    """A (1,2)-structure whose singletons make up exactly a q fraction of every
    block of ``block`` naturals, placed at seeded positions. Pairs join
    pair-positions chosen at random inside windows that widen like sqrt(x),
    so partners are discovered late but the lag has density zero."""
    q = Fraction(q)
    singles = q * block
    if singles.denominator != 1 or (block - singles) % 2:
        raise PreconditionError(f"q = {q} does not split a block of {block} into singletons and pairs")
    rng = random.Random(seed)
    length = -(-length // block) * block
    is_single = []
    for _ in range(length // block):
        row = [True] * int(singles) + [False] * (block - int(singles))
        rng.shuffle(row)
        is_single.extend(row)
    slots = [x for x in range(length) if not is_single[x]]
    P = [-1] * length
    i = 0
    while i < len(slots):
        w = 2 * (math.isqrt(slots[i] // 4) + 1)
        win = slots[i:i + w]
        rng.shuffle(win)
        for a, b in zip(win[::2], win[1::2]):
            P[a], P[b] = b, a
        i += w
    # an odd window at the end leaves one slot over
    for x in range(length):
        if not is_single[x] and P[x] < 0:
            is_single[x] = True
    return structure_from_partners(P, f"scattered-12(q={q}, seed={seed})")


# -- density-q structures from a dyadic schedule --------------------------------------


def _is_dyadic(q: Fraction) -> bool:
    d = q.denominator
    return d & (d - 1) == 0


@dataclass(frozen=True)
class DyadicSchedule:
    values: tuple[Fraction, ...]
    limit: Fraction | None = None

    def __post_init__(self):
        vals = tuple(Fraction(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ScheduleError("empty schedule")
        for n, q in enumerate(vals):
            if not 0 < q < 1:
                raise ScheduleError(f"q_{n} = {q} is not strictly between 0 and 1")
            if not _is_dyadic(q):
                raise ScheduleError(f"q_{n} = {q} is not dyadic")

    @classmethod
    def from_function(cls, g: Callable[[int], Fraction], length: int, limit=None) -> "DyadicSchedule":
        return cls(tuple(g(n) for n in range(length)), None if limit is None else Fraction(limit))

    def __len__(self):
        return len(self.values)


def build_12_density_q(sched: DyadicSchedule, horizon: int | None = None):
    """Lay out singletons and pairs so that exactly ``q_n * s_n`` of the first
    ``s_n`` naturals are singletons.

    With ``q_0 = i/j`` the first ``2j`` naturals are ``2i`` singletons and then
    pairs. Moving to ``q_{n+1} = i/j`` multiplies ``s`` by j, adding
    ``(i - q_n) s_n`` singletons and ``(j - i - 1 + q_n) s_n`` naturals in
    pairs, interleaved so the share of singletons stays level inside the new
    block. Stops after the first checkpoint at or past ``horizon``.

    Returns ``(structure, checkpoints)``.
    """
    P: list[int] = []

    def add(singles: Fraction, paired: Fraction, n: int, interleave: bool):
        if singles <= 0 or paired <= 0:
            raise ScheduleError(f"step {n}: needs {singles} singletons and {paired} paired naturals")
        if singles.denominator != 1 or paired.denominator != 1 or paired % 2:
            raise ScheduleError(f"step {n}: counts {singles}, {paired} are not whole and even")
        ones, twos = int(singles), int(paired) // 2
        total = ones + 2 * twos
        placed_ones = placed = 0
        while ones or twos:
            # keep the running share of singletons on target inside the block
            behind = placed_ones * total <= int(singles) * placed
            if ones and (not twos or not interleave or behind):
                P.append(-1)
                ones -= 1
                placed_ones += 1
                placed += 1
            else:
                base = len(P)
                P.extend([base + 1, base])
                twos -= 1
                placed += 2

    checkpoints = []
    q0 = sched.values[0]
    add(Fraction(2 * q0.numerator), Fraction(2 * (q0.denominator - q0.numerator)), 0, False)
    s = len(P)
    checkpoints.append({"n": 0, "q_n": q0, "s_n": s, "singletons": sum(p < 0 for p in P)})
    for n in range(1, len(sched)):
        if horizon is not None and s >= horizon:
            break
        prev, q = sched.values[n - 1], sched.values[n]
        i, j = q.numerator, q.denominator
        add((i - prev) * s, (j - i - 1 + prev) * s, n, True)
        s = len(P)
        checkpoints.append({"n": n, "q_n": q, "s_n": s, "singletons": sum(p < 0 for p in P)})
    return structure_from_partners(P, "density-q"), checkpoints


# -- the staged subrelation --------------------------------------------------------


def _approximant(q) -> Callable[[int], Fraction]:
    if callable(q):
        return lambda i: Fraction(q(i))
    q = Fraction(q)
    return lambda i: q


@dataclass
class Subrelation:
    """R_B below ``covered``, the B(1) decision log and per-step checkpoints."""

    structure: EqStructure
    in_B1: np.ndarray
    partners: np.ndarray
    log: list[tuple[int, int, bool, str]]  # (step, x, in B(1), rule)
    checkpoints: list[dict]
    covered: int
    stage: int

    def B1(self, x: int) -> bool:
        return bool(self.in_B1[x])

    def divergence(self, n: int) -> int:
        """|{x < n : x in B(1) but x is paired in A}|."""
        return int(np.count_nonzero(self.in_B1[:n] & (self.partners[:n] >= 0)))

    def records(self) -> list[dict]:
        out = []
        for c in self.checkpoints:
            out.append({k: (fmt_rational(v) if isinstance(v, Fraction) else v) for k, v in c.items()})
        return out


def staged_subrelation(A: EqStructure, q, budget: int, horizon: int) -> Subrelation:
    """Approximate A by a structure B whose type sets are computable.

    Step i+1 takes the least ``(n, s)``, ordered by s then n, with
    ``n > n_i``, ``2^{i+1} <= n <= s``, ``s > s_i`` and
    ``|A^s(1) ∩ n| / n < q_{i+1} + 2^{-(i+1)}``, where ``A^s(1)`` holds the
    x < s with no partner <= s. Then, in order:

    * y in ``[s_i, s)`` whose partner is already in B(1) joins B(1);
    * undecided x in ``[n_i, n)`` join B(1) iff they have no partner <= s.

    Every other x is paired in B with its A-partner, so R_B ⊆ R. Decisions are
    never revised. Runs until ``n_i >= horizon``.
    """
    qf = _approximant(q)
    P = partner_array(A, budget + 1)
    L = len(P)
    if not 0 < qf(0) < 1:
        raise PreconditionError(f"q = {qf(0)} must lie strictly between 0 and 1")
    in_B1 = np.zeros(L, dtype=bool)
    decided = np.zeros(L, dtype=bool)
    true_single = P < 0
    log: list[tuple[int, int, bool, str]] = []
    checkpoints: list[dict] = []
    n_prev, s_prev, i = 1, 1, 0
    seg_start = 0  # the first segment also decides 0

    def result(covered, stage):
        partners = [-1 if in_B1[x] else int(P[x]) for x in range(covered)]
        S = structure_from_partners(partners, f"subrelation({A.provenance})")
        return Subrelation(S, in_B1[:covered].copy(), P[:covered].copy(), log, checkpoints, covered, stage)

    while n_prev < horizon:
        step = i + 1
        qt = qf(step)
        thr = qt + Fraction(1, 1 << step)
        num, den = thr.numerator, thr.denominator
        lo = max(n_prev + 1, 1 << step)
        found = None
        for s in range(max(s_prev + 1, lo), L):
            ind = true_single[:s] | (P[:s] > s)
            cs = np.cumsum(ind)
            ns = np.arange(lo, s + 1, dtype=np.int64)
            ok = cs[ns - 1] * den < num * ns
            if ok.any():
                k = int(np.argmax(ok))
                found = (int(ns[k]), s, int(cs[ns[k] - 1]))
                break
        if found is None:
            raise BudgetExhausted(
                f"step {step}: no (n, s) with s <= {budget} meets the threshold {thr}",
                partial=result(n_prev, s_prev),
            )
        n, s, approx_count = found
        for y in range(s_prev, s):
            p = P[y]
            if not decided[y] and 0 <= p < y and decided[p] and in_B1[p]:
                decided[y] = in_B1[y] = True
                log.append((step, y, True, "partner"))
        for x in range(seg_start, n):
            if decided[x]:
                continue
            single = bool(P[x] < 0 or P[x] > s)
            decided[x] = True
            in_B1[x] = single
            log.append((step, x, single, "segment"))
        ones = int(np.count_nonzero(true_single[:n]))
        q_i = Fraction(ones, n)
        e_i = Fraction(approx_count - ones, n)
        bound = qt - q_i + Fraction(1, 1 << step)
        div = int(np.count_nonzero(in_B1[:n] & ~true_single[:n]))
        lag = sum(c["e_i"] * c["n_i"] for c in checkpoints) + e_i * n
        checkpoints.append({
            "i": step, "n_i": n, "s_i": s, "q_approx": qt, "q_i": q_i,
            "e_i": e_i, "e_bound": bound, "e_ok": e_i < bound,
            "divergence": Fraction(div, n), "divergence_bound": Fraction(2 * lag, n),
            "divergence_ok": div <= 2 * lag,
        })
        seg_start, n_prev, s_prev, i = n, n, s, step
    return result(n_prev, s_prev)


# -- the interleaved bijection ---------------------------------------------------


def _sequence(X) -> list[int]:
    if isinstance(X, EnumerationOracle):
        return [x for _, x in X.arrivals_through()]
    return list(X)


@dataclass
class InterleavedBijection:
    forward: dict[int, int]
    a: list[int]
    b: list[int]
    c: list[int]
    d: list[int]
    warnings: list[str]
    forward_bound: list[tuple[int, int]]  # per n: (|(f[C] \ D) ∩ b_n|, |C ∩ a_n|)
    inverse_bound: list[tuple[int, int]]  # per n: (|(f^-1[D] \ C) ∩ a_n|, |D ∩ b_2n|)

    def __call__(self, x: int) -> int:
        return self.forward[x]

    @property
    def forward_ok(self) -> bool:
        return all(l <= r for l, r in self.forward_bound)

    @property
    def inverse_ok(self) -> bool:
        return all(l <= r for l, r in self.inverse_bound)

    def first_failure(self):
        for n, (l, r) in enumerate(self.forward_bound, 1):
            if l > r:
                return ("forward", n, l, r)
        for n, (l, r) in enumerate(self.inverse_bound, 1):
            if l > r:
                return ("inverse", n, l, r)
        return None


def interleaved_bijection(A, B, C, D, horizon: int, b_limit: int | None = None) -> InterleavedBijection:
    """Map A onto B so that C goes into D up to density zero.

    A and B are decidable (predicates or containers); C ⊆ A and D ⊆ B come
    as enumerations (oracles or sequences, no repetitions). Stage s first
    sends c_s to the least unused d, then a_s to the least unused b. a runs
    over A below ``horizon``; b over B below ``b_limit`` (default 4 * horizon).
    """
    in_A, in_B = as_predicate(A), as_predicate(B)
    a = [x for x in range(horizon) if in_A(x)]
    b_limit = 4 * horizon if b_limit is None else b_limit
    b = [y for y in range(b_limit) if in_B(y)]
    c, d = _sequence(C), _sequence(D)
    if len(set(c)) != len(c) or len(set(d)) != len(d):
        raise PreconditionError("enumerations of C and D must not repeat")
    bad = [x for x in c if not in_A(x)] + [y for y in d if not in_B(y)]
    if bad:
        raise ContainmentError(f"C ⊆ A and D ⊆ B fail at {bad[:5]}")
    f: dict[int, int] = {}
    used: set[int] = set()
    warnings: list[str] = []
    ib = jd = 0
    for s in range(len(a)):
        if s < len(c) and c[s] not in f:
            while jd < len(d) and d[jd] in used:
                jd += 1
            if jd < len(d):
                f[c[s]] = d[jd]
                used.add(d[jd])
            elif not any("D exhausted" in w for w in warnings):
                warnings.append(f"D exhausted at stage {s}; c_{s} waits for its turn in A")
        if a[s] not in f:
            while ib < len(b) and b[ib] in used:
                ib += 1
            if ib == len(b):
                warnings.append(f"B exhausted at stage {s}; f is a bijection only on a_0..a_{s - 1}")
                break
            f[a[s]] = b[ib]
            used.add(b[ib])
    if len(set(f.values())) != len(f):
        raise InvariantViolation("interleaved map is not injective")

    # counting bounds, for n = 1 .. #a
    N = len(a)
    a_arr, b_arr = np.array(a, dtype=np.int64), np.array(b, dtype=np.int64)
    c_set, d_set = set(c), set(d)
    fc_out = np.sort(np.array([f[x] for x in c if x in f and f[x] not in d_set], dtype=np.int64))
    c_sorted = np.sort(np.array(c, dtype=np.int64))
    d_sorted = np.sort(np.array(d, dtype=np.int64))
    pull = np.sort(np.array([x for x, y in f.items() if y in d_set and x not in c_set], dtype=np.int64))
    forward_bound, inverse_bound = [], []
    for n in range(1, N + 1):
        a_n = a_arr[n] if n < N else horizon
        b_n = b_arr[n] if n < len(b) else b_limit
        lhs = int(np.searchsorted(fc_out, b_n))
        rhs = int(np.searchsorted(c_sorted, a_n))
        forward_bound.append((lhs, rhs))
        b_2n = b_arr[2 * n] if 2 * n < len(b) else b_limit
        inverse_bound.append((int(np.searchsorted(pull, a_n)), int(np.searchsorted(d_sorted, b_2n))))
    return InterleavedBijection(f, a, b, c, d, warnings, forward_bound, inverse_bound)


# -- witnesses ------------------------------------------------------------------


@dataclass
class PartialIsoWitness:
    """A partial map theta with an explicit, finite domain table.

    ``stages[x]`` is the stage at which theta(x) converges.
    """

    table: dict[int, int]
    source: EqStructure
    target: EqStructure
    stages: dict[int, int] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def __call__(self, x: int) -> int | None:
        return self.table.get(x)

    def inverse(self) -> "PartialIsoWitness":
        inv = {y: x for x, y in self.table.items()}
        if len(inv) != len(self.table):
            raise InvariantViolation("theta is not injective")
        st = {self.table[x]: s for x, s in self.stages.items()}
        return PartialIsoWitness(inv, self.target, self.source, st, list(self.warnings))

    def compose(self, other: "PartialIsoWitness") -> "PartialIsoWitness":
        """``other ∘ self``, defined where self lands in other's domain."""
        table, stages = {}, {}
        for x, y in self.table.items():
            if y in other.table:
                table[x] = other.table[y]
                stages[x] = max(self.stages.get(x, 0), other.stages.get(y, 0))
        return PartialIsoWitness(table, self.source, other.target, stages,
                                 self.warnings + other.warnings)

    @classmethod
    def merge(cls, forward: "PartialIsoWitness", backward: "PartialIsoWitness") -> "PartialIsoWitness":
        """Combine theta (for f) with psi (for f^-1): phi(a) is theta(a) or the
        b with psi(b) = a, whichever converges first."""
        table, stages = {}, {}
        candidates: dict[int, list[tuple[int, int]]] = {}
        for x, y in forward.table.items():
            candidates.setdefault(x, []).append((forward.stages.get(x, 0), y))
        for y, x in backward.table.items():
            candidates.setdefault(x, []).append((backward.stages.get(y, 0), y))
        for x, opts in candidates.items():
            if len({y for _, y in opts}) > 1:
                raise InvariantViolation(f"theta and psi disagree at {x}: {sorted(opts)}")
            stage, y = min(opts)
            table[x], stages[x] = y, stage
        out = cls(table, forward.source, forward.target, stages, forward.warnings + backward.warnings)
        if len(set(table.values())) != len(table):
            raise InvariantViolation("merged map is not injective")
        return out

    def verify(self, horizon: int, window: int | None = None) -> dict:
        dom = sorted(x for x in self.table if x < horizon)
        injective = len(set(self.table.values())) == len(self.table)
        agree, counter = relation_agreement(dom, self.source.label, lambda x: self.target.label(self.table[x]))
        rng = {y for y in self.table.values() if y < horizon}
        window = window or max(1, horizon // 10)
        dom_set = set(dom)
        dp = density_profile(dom_set, horizon, window, Fraction(1, 20), "domain")
        rp = density_profile(rng, horizon, window, Fraction(1, 20), "range")
        return {
            "injective": injective,
            "preserves_relation": agree,
            "counterexample": counter,
            "domain_size": len(dom),
            "domain_density": dp.values[-1],
            "range_density": rp.values[-1],
            "domain_profile": dp,
            "range_profile": rp,
            "warnings": list(self.warnings),
        }

    def to_json(self, prefix: int = 50) -> dict:
        keys = sorted(self.table)[:prefix]
        return {"table_prefix": [[x, self.table[x]] for x in keys], "domain_size": len(self.table)}


def canonical_pairs(count: int) -> list[tuple[int, int]]:
    """The first ``count`` pairs {n^2 + 2j - 1, n^2 + 2j} in increasing order."""
    out = []
    n = 1
    while len(out) < count:
        for j in range(1, n + 1):
            out.append((n * n + 2 * j - 1, n * n + 2 * j))
            if len(out) == count:
                break
        n += 1
    return out


def generic_iso_char2(source: EqStructure, pairs: PairEnumerationOracle, horizon: int,
                      character: Iterable[int] = (2,)) -> PartialIsoWitness:
    """Match the n-th enumerated pair of ``source`` with the n-th pair of the
    dense-pairs structure, smaller member to smaller member."""
    if set(character) != {2}:
        raise PreconditionError(f"declared generic character {sorted(set(character))} is not {{2}}")
    seen: set = set()
    ordered: list[tuple[int, tuple[int, int]]] = []
    for stage, (x, y) in pairs.arrivals_through():
        if x == y:
            continue
        key = (min(x, y), max(x, y))
        if key not in seen:
            seen.add(key)
            ordered.append((stage, key))
    target = canonical_12("dense-pairs")
    canon = canonical_pairs(len(ordered))
    table, stages = {}, {}
    for (stage, (a, b)), (c, d) in zip(ordered, canon):
        table[a], table[b] = c, d
        stages[a] = stages[b] = stage
    warnings = []
    need = sum(1 for c, d in canonical_pairs(horizon) if d < horizon)
    if len(ordered) < need:
        warnings.append(f"pair enumeration gave {len(ordered)} pairs; the target has {need} below {horizon}")
    return PartialIsoWitness(table, source, target, stages, warnings)


@dataclass
class WeakCoarseWitness:
    """theta is total below the horizon; f is a set bijection that equals
    theta on C, and theta is an isomorphism from C onto its image."""

    theta: dict[int, int]
    C: list[int]
    f: dict[int, int]
    source: EqStructure
    target: EqStructure
    horizon: int
    notes: dict = field(default_factory=dict)

    def verify(self) -> dict:
        H = self.horizon
        f_eq_theta = all(self.f.get(x) == self.theta.get(x) for x in self.C)
        injective = len(set(self.f.values())) == len(self.f)
        agree, counter = relation_agreement(self.C, self.source.label,
                                            lambda x: self.target.label(self.theta[x]))
        image = {self.f[x] for x in self.C}
        return {
            "f_equals_theta_on_C": f_eq_theta,
            "injective": injective,
            "iso_on_C": agree,
            "counterexample": counter,
            "C_density": Fraction(sum(1 for x in self.C if x < H), H),
            "fC_density": Fraction(sum(1 for y in image if y < H), H),
        }

    def f_agreement(self) -> tuple[bool, tuple[int, int] | None]:
        """Whether f preserves the relation on its domain below the horizon."""
        dom = sorted(x for x in self.f if x < self.horizon)
        return relation_agreement(dom, self.source.label, lambda x: self.target.label(self.f[x]))


def _singletons(S: EqStructure, horizon: int) -> np.ndarray:
    return np.fromiter((S.size_of(x) == 1 for x in range(horizon)), dtype=bool, count=horizon)


def coarse_iso_char1(A: EqStructure, B: EqStructure, horizon: int, tolerance=Fraction(1, 20),
                     character: Iterable[int] | None = None, scan_limit: int | None = None) -> WeakCoarseWitness:
    """theta is the identity; C = V is the set of common singletons, thinned
    by the squares when exactly one side has no other singletons.

    f agrees with theta on V and sends every other class of A meeting the
    horizon to the least unused class of B of the same size off V.
    """
    if character is not None and set(character) != {1}:
        raise PreconditionError(f"declared generic character {sorted(set(character))} is not {{1}}")
    H = horizon
    uA, uB = _singletons(A, H), _singletons(B, H)
    for name, u in (("A", uA), ("B", uB)):
        if Fraction(int(u.sum()), H) < 1 - Fraction(tolerance):
            raise PreconditionError(f"{name}(1) has measured density {Fraction(int(u.sum()), H)} at {H}")
    U = uA & uB
    only_A, only_B = int((uA & ~U).sum()), int((uB & ~U).sum())
    V = U.copy()
    trimmed = []
    if (only_A == 0) != (only_B == 0):
        trimmed = [x for x in range(H) if U[x] and is_square(x)]
        V[trimmed] = False
    v_list = [int(x) for x in np.flatnonzero(V)]
    f = {x: x for x in v_list}
    v_set = set(v_list)
    pool: dict[int, list[tuple[int, ...]]] = {}
    scan = iter(ClassScanner(B))
    limit = scan_limit or 4 * H
    done: set[int] = set()
    for x in range(H):
        if x in f or x in done:
            continue
        cls = tuple(A.class_of(x))
        done.update(cls)
        m = len(cls)
        while not pool.get(m):
            low, _, mem = next(scan)
            if low >= limit:
                raise ScenarioError(f"no unused class of size {m} in B below {limit}")
            if not any(y in v_set for y in mem):
                pool.setdefault(len(mem), []).append(tuple(mem))
        img = pool[m].pop(0)
        for u, w in zip(cls, img):
            f[u] = w
    theta = {x: x for x in range(H)}
    return WeakCoarseWitness(theta, v_list, f, A, B, H,
                             notes={"U_size": int(U.sum()), "trimmed": trimmed,
                                    "only_A": only_A, "only_B": only_B})


# -- the final composition ---------------------------------------------------------


def _cross_check(X: np.ndarray, Y: np.ndarray, la: np.ndarray, lb: np.ndarray, same: bool):
    """For all x in X, y in Y with x != y: la[x] == la[y] iff lb[x] == lb[y].
    la, lb are label codes indexed by element; lb already composed with f."""
    pairs = 0
    for i in range(0, len(X), 512):
        xs = X[i:i + 512]
        left = la[xs][:, None] == la[Y][None, :]
        right = lb[xs][:, None] == lb[Y][None, :]
        diff = left != right
        if same:
            diff &= xs[:, None] != Y[None, :]
        pairs += left.size - (int(np.count_nonzero(xs[:, None] == Y[None, :])) if same else 0)
        bad = np.argwhere(diff)
        if len(bad):
            r, c = bad[0]
            return False, (int(xs[r]), int(Y[c])), pairs
    return True, None, pairs


def _label_codes(S: EqStructure, xs: Iterable[int]) -> dict:
    table: dict = {}
    return {x: table.setdefault(S.label(x), len(table)) for x in xs}


def weak_coarse_iso_12(A: EqStructure, B: EqStructure, q, horizon: int, budget: int | None = None,
                       q_B=None, tolerance=Fraction(1, 20)) -> tuple[WeakCoarseWitness, dict]:
    """Compose the staged subrelations C of A and D of B, a pairing g2 of their
    size-two classes and the interleaved bijection g1 of their singletons.

    E = C(2) ∪ (A(1) ∩ g1^-1[B(1)]). Returns the witness (theta = f = g1 ∪ g2
    below the horizon, C = E) and a report of the three case checks, the
    complement identity and the densities.
    """
    if q_B is not None and Fraction(q_B) != Fraction(q if not callable(q) else q(0)):
        raise PreconditionError(f"declared densities differ: {q} vs {q_B}")
    H = horizon
    budget = budget or 4 * H
    qf = _approximant(q)
    for name, S in (("A", A), ("B", B)):
        measured = Fraction(int(_singletons(S, H).sum()), H)
        if abs(measured - qf(0)) > Fraction(tolerance):
            raise PreconditionError(f"{name}(1) measures {float(measured):.4f} at {H}, declared {qf(0)}")
    reach = 2 * H
    SC = staged_subrelation(A, q, budget, reach)
    SD = staged_subrelation(B, q, budget, reach)
    cover = min(SC.covered, SD.covered)

    # g2: k-th pair of C to k-th pair of D, by least member
    def pairs_of(sub: Subrelation):
        P = sub.structure
        return [(x, P.partner(x)) for x in range(sub.covered)
                if P.size_of(x) == 2 and P.partner(x) is not None and P.partner(x) > x]

    pc, pd = pairs_of(SC), pairs_of(SD)
    g2: dict[int, int] = {}
    for (x, y), (u, v) in zip(pc, pd):
        g2[x], g2[y] = u, v
    C1 = [x for x in range(cover) if SC.B1(x)]
    D1 = [y for y in range(SD.covered) if SD.B1(y)]
    A_part = SC.partners
    B_part = SD.partners

    def lag_order(sub: Subrelation, xs):
        # C(1) \ A(1) is enumerated as partners come to light
        found = [(max(x, int(sub.partners[x])), x) for x in xs
                 if sub.partners[x] >= 0 and sub.partners[x] < len(sub.partners)]
        return [x for _, x in sorted(found)]

    c_enum = lag_order(SC, C1)
    d_enum = lag_order(SD, D1)
    c1_set, d1_set = set(C1), set(D1)
    g1 = interleaved_bijection(c1_set, d1_set, c_enum, d_enum, cover, b_limit=SD.covered)
    theta: dict[int, int] = {}
    for x in range(H):
        if x in c1_set:
            if x in g1.forward:
                theta[x] = g1.forward[x]
        elif x in g2:
            theta[x] = g2[x]
    missing = [x for x in range(H) if x not in theta]
    if missing:
        raise BudgetExhausted(f"theta undefined at {missing[:5]} below {H}", partial=theta)

    A_single = A_part < 0
    B_single_at = lambda y: y < len(B_part) and B_part[y] < 0
    E2 = [x for x in range(H) if x not in c1_set]
    E1 = [x for x in range(H) if x in c1_set and A_single[x] and B_single_at(theta[x])]
    E = sorted(E1 + E2)
    e_set = set(E)

    # the complement identity below H
    lhs = {x for x in range(H) if x not in e_set}
    rhs = {x for x in C1 if x < H and not A_single[x]} | \
          {x for x in C1 if x < H and theta[x] in d1_set and not B_single_at(theta[x])}

    la_map = _label_codes(A, range(H))
    images = [theta[x] for x in range(H)]
    lb_map = _label_codes(B, images)
    la = np.array([la_map[x] for x in range(H)], dtype=np.int64)
    lb = np.array([lb_map[theta[x]] for x in range(H)], dtype=np.int64)
    X1, X2 = np.array(E1, dtype=np.int64), np.array(E2, dtype=np.int64)
    cases = {}
    for name, X, Y, same in (("case1", X2, X2, True), ("case2", X1, X2, False), ("case3", X1, X1, True)):
        ok, counter, pairs = _cross_check(X, Y, la, lb, same)
        cases[name] = {"ok": ok, "counterexample": counter, "pairs": pairs}

    # identity on E: R_A and R_C agree there
    rc_ok, rc_counter = relation_agreement(E, A.label, SC.structure.label)
    witness = WeakCoarseWitness(theta, E, dict(theta), A, B, H,
                                notes={"g1_warnings": g1.warnings})
    report = {
        "cases": cases,
        "complement_identity": lhs == rhs,
        "E_density": Fraction(len(E), H),
        "fE_density": Fraction(sum(1 for x in E if theta[x] < H), H),
        "C_matches_A_on_E": rc_ok,
        "C_mismatch": rc_counter,
        "C2_subset_A2": all(A_part[x] >= 0 for x in E2 if x < len(A_part)),
        "g1_forward_bound": g1.forward_ok,
        "g1_inverse_bound": g1.inverse_ok,
        "subrelation_A": SC.records(),
        "subrelation_B": SD.records(),
        "covered": cover,
        "sizes": {"E1": len(E1), "E2": len(E2), "C(1)\\A(1)": len(c_enum), "D(1)\\B(1)": len(d_enum)},
    }
    return witness, report


# -- a sparse simple set and the obstruction demonstration ----------------------------


@dataclass
class SparseSimpleSet:
    oracle: EnumerationOracle
    sources: dict[int, tuple[int, int] | None]  # index -> (stage, element) or None

    @property
    def elements(self) -> list[int]:
        return sorted(v[1] for v in self.sources.values() if v is not None)

    def __contains__(self, x: int) -> bool:
        return x in set(self.elements)

    def density_certificate(self, kmax: int) -> list[dict]:
        """|S ∩ 2^k| <= k for k = 0..kmax."""
        els = self.elements
        out = []
        for k in range(kmax + 1):
            c = sum(1 for x in els if x < (1 << k))
            out.append({"k": k, "count": c, "ok": c <= k})
        return out

    def intersections(self, registry: OracleRegistry) -> list[dict]:
        return [{"index": e, "label": W.label, "witness": None if v is None else v[1]}
                for (e, v), W in zip(sorted(self.sources.items()), registry)]


def sparse_simple_set(registry: OracleRegistry, budget: int) -> SparseSimpleSet:
    """S gets, for each registered W_e, the first element of W_e above 2^e."""
    sources: dict[int, tuple[int, int] | None] = {}
    for e, W in enumerate(registry):
        hit = W.first_above(1 << e)
        sources[e] = hit if hit is not None and hit[0] <= budget else None
    arrivals: dict[int, list[int]] = {}
    for v in sources.values():
        if v is not None:
            arrivals.setdefault(v[0], []).append(v[1])
    oracle = EnumerationOracle(lambda s: arrivals.get(s, ()), budget, "sparse-simple")
    return SparseSimpleSet(oracle, sources)


def pair_up(S: SparseSimpleSet, length: int) -> EqStructure:
    """A (1,2)-structure on {0..length-1} whose size-two classes pair the
    elements of S in enumeration order; an odd one out stays a singleton."""
    order = [x for _, x in S.oracle.arrivals_through() if x < length]
    P = [-1] * length
    for a, b in zip(order[::2], order[1::2]):
        P[a], P[b] = b, a
    return structure_from_partners(P, "pairs-on-sparse-simple")


@dataclass(frozen=True)
class CandidateMap:
    """A partial map phi whose domain is enumerated as ``domain`` (one natural
    per stage, in increasing order, with a fixed delay)."""

    name: str
    phi: Callable[[int], int]
    domain: Callable[[int], bool]
    delay: int = 0


def _image_oracle(cand: CandidateMap, avoid: Callable[[int], bool], budget: int) -> EnumerationOracle:
    def arrivals(s):
        x = s - 1 - cand.delay
        if x >= 0 and cand.domain(x) and not avoid(x):
            return (cand.phi(x),)
        return ()

    return EnumerationOracle(arrivals, budget, f"image({cand.name})")


def thm12_demo(candidates: Sequence[CandidateMap], budget: int, extra: Sequence[EnumerationOracle] = (),
               min_avoiding: int = 50) -> dict:
    """Register the image of each candidate on (ω \\ D) ∩ dom(phi), D the pair set
    of the sparse comparison structure, then build S and the structure on S.

    For every candidate the report lists the obstruction set at the budget,
    how many of its images avoid S and the elements whose image lands in S
    (where phi sends a singleton to a member of a pair).
    """
    comparison = canonical_12("sparse-pairs")
    in_D = lambda x: comparison.size_of(x) == 2
    registry = OracleRegistry()
    for cand in candidates:
        registry.register(_image_oracle(cand, in_D, budget))
    for W in extra:
        registry.register(W)
    S = sparse_simple_set(registry, budget)
    members = set(S.elements)
    A = pair_up(S, budget + 1)
    per = []
    for cand in candidates:
        obstruction = [x for x in range(budget - cand.delay) if cand.domain(x) and not in_D(x)]
        avoiding = [x for x in obstruction if cand.phi(x) not in members]
        hits = [(x, cand.phi(x)) for x in obstruction if cand.phi(x) in members]
        per.append({
            "name": cand.name,
            "obstruction_size": len(obstruction),
            "obstruction_prefix": obstruction[:20],
            "avoiding": len(avoiding),
            "hits": hits,
            "ok": len(avoiding) >= min_avoiding and bool(hits),
        })
    kmax = max(1, budget.bit_length())
    return {
        "S": S.elements,
        "certificate": S.density_certificate(kmax),
        "intersections": S.intersections(registry),
        "structure_pairs": sum(1 for x in range(budget + 1) if A.size_of(x) == 2) // 2,
        "candidates": per,
    }
