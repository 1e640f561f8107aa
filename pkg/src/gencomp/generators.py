"""Named generators for scenario files.

A generator spec is either a string, ``"evens"`` or ``"delayed(7)"``, or a
mapping ``{gen: multiples, m: 3}``. Positional arguments in the string form
are parsed as YAML scalars and bound to the factory's parameters in order.
"""

from __future__ import annotations

import bisect
import inspect
import math
import random
import re
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable

import yaml

from .enumeration import (
    EnumerationOracle,
    PairEnumerationOracle,
    dyadic_burst_oracle,
    in_bursty_block,
    is_square,
    relation_pair_oracle,
    scrambled_pair_oracle,
    set_oracle,
)
from .errors import ValidationError
from .isomorphisms import DyadicSchedule, build_12_density_q, scattered_12
from .structures import (
    EqStructure,
    block_structure,
    canonical_12,
    canonical_all_sizes,
    identity_structure,
    triangular,
    triangular_index,
)

_CALL = re.compile(r"\s*([A-Za-z][\w-]*)\s*(?:\((.*)\))?\s*")


def parse_spec(spec) -> tuple[str, list, dict]:
    if isinstance(spec, str):
        m = _CALL.fullmatch(spec)
        if not m:
            raise ValidationError(f"malformed generator spec {spec!r}", [f"malformed generator spec {spec!r}"])
        args = m.group(2)
        try:
            pos = yaml.safe_load(f"[{args}]") if args and args.strip() else []
        except yaml.YAMLError:
            raise ValidationError(f"bad arguments in {spec!r}", [f"bad arguments in {spec!r}"]) from None
        return m.group(1), pos, {}
    if isinstance(spec, dict) and "gen" in spec:
        kw = dict(spec)
        return kw.pop("gen"), [], kw
    raise ValidationError(f"generator spec must be a string or a mapping with 'gen': {spec!r}",
                          [f"bad generator spec {spec!r}"])


def _bind_problems(factory: Callable, pos: list, kw: dict, context: dict) -> list[str]:
    sig = inspect.signature(factory)
    extra = {k: v for k, v in context.items() if k in sig.parameters and k not in kw}
    try:
        sig.bind(*pos, **kw, **extra)
    except TypeError as exc:
        return [str(exc)]
    return []


def _call(table: dict, kind: str, spec, context: dict):
    name, pos, kw = parse_spec(spec)
    if name not in table:
        raise ValidationError(f"unknown {kind} generator {name!r}", [f"unknown {kind} generator {name!r}"])
    factory = table[name]
    sig = inspect.signature(factory)
    extra = {k: v for k, v in context.items() if k in sig.parameters and k not in kw}
    return factory(*pos, **kw, **extra)


def check_spec(kind: str, spec, context: dict | None = None) -> list[str]:
    """Problems with a spec, without building anything."""
    table = TABLES[kind]
    try:
        name, pos, kw = parse_spec(spec)
    except ValidationError as exc:
        return list(exc.problems)
    if kind == "oracle" and name not in table:
        table = SETS
        kw = {k: v for k, v in kw.items() if k != "delay"}
    if name not in table:
        return [f"unknown {kind} generator {name!r}"]
    out = [f"{kind} {name}: {p}" for p in _bind_problems(table[name], pos, kw, context or {})]
    # nested structure specs
    for key in ("structure",):
        if key in kw:
            out += check_spec("structure", kw[key], context)
    return out


def _frac(v) -> Fraction:
    return Fraction(str(v)) if not isinstance(v, (int, Fraction)) else Fraction(v)


# -- sets ------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _sieve(limit: int) -> bytearray:
    mark = bytearray([1]) * (limit + 1)
    mark[0:2] = b"\x00\x00"
    for p in range(2, math.isqrt(limit) + 1):
        if mark[p]:
            mark[p * p::p] = bytearray(len(mark[p * p::p]))
    return mark


def _is_prime(x: int) -> bool:
    if x < 2:
        return False
    limit = 1 << max(16, x.bit_length() + 1)
    return bool(_sieve(limit)[x])


def _random_set(p="1/2", seed: int = 0) -> Callable[[int], bool]:
    """Each x joins independently with probability p (seeded, so reproducible)."""
    p = _frac(p)
    rng = random.Random(seed)
    bits: list[bool] = []

    def member(x):
        while len(bits) <= x:
            bits.append(rng.random() * p.denominator < p.numerator)
        return x >= 0 and bits[x]

    return member


def _is_cube(x: int) -> bool:
    r = round(x ** (1 / 3)) if x >= 0 else -1
    return any((r + d) ** 3 == x for d in (-1, 0, 1))


SETS: dict[str, Callable] = {
    "omega": lambda: lambda x: x >= 0,
    "empty": lambda: lambda x: False,
    "evens": lambda: lambda x: x % 2 == 0,
    "odds": lambda: lambda x: x % 2 == 1,
    "squares": lambda: is_square,
    "co-squares": lambda: lambda x: not is_square(x),
    "cubes": lambda: _is_cube,
    "triangular": lambda: lambda x: triangular(triangular_index(x)) == x,
    "co-triangular": lambda: lambda x: triangular(triangular_index(x)) != x,
    "powers-of-two": lambda: lambda x: x > 0 and x & (x - 1) == 0,
    "primes": lambda: _is_prime,
    "block-bursty": lambda: in_bursty_block,
    "multiples": lambda m: lambda x, m=m: x % m == 0,
    "residues": lambda m, r: (lambda x, m=m, r=frozenset(r): x % m in r),
    "above": lambda k: lambda x, k=k: x >= k,
    "finite": lambda elements: frozenset(elements).__contains__,
    "random": _random_set,
}


def make_set(spec) -> Callable[[int], bool]:
    return _call(SETS, "set", spec, {})


def enumerate_set(spec, limit: int) -> list[int]:
    pred = make_set(spec)
    return [x for x in range(limit) if pred(x)]


# -- enumeration oracles ------------------------------------------------------------


def _table_oracle(stages: dict, budget: int) -> EnumerationOracle:
    return EnumerationOracle.from_table({int(s): list(v) for s, v in stages.items()}, budget)


ORACLES: dict[str, Callable] = {
    "identity": lambda budget, delay=0: set_oracle(lambda x: True, budget, delay,
                                                   "identity" if not delay else f"delayed({delay})"),
    "delayed": lambda k, budget: set_oracle(lambda x: True, budget, k, f"delayed({k})"),
    "dyadic-bursts": lambda budget, missing=(): dyadic_burst_oracle(budget, missing),
    "table": _table_oracle,
}


def make_oracle(spec, budget: int) -> EnumerationOracle:
    """Stock oracles by name; any named set is enumerated promptly (optional ``delay``)."""
    name, pos, kw = parse_spec(spec)
    if name in ORACLES:
        return _call(ORACLES, "oracle", spec, {"budget": budget})
    if name in SETS:
        delay = kw.pop("delay", 0)
        pred = _call(SETS, "set", {"gen": name, **kw} if not pos else spec, {})
        return set_oracle(pred, budget, delay, name if not delay else f"{name}+{delay}")
    raise ValidationError(f"unknown oracle generator {name!r}", [f"unknown oracle generator {name!r}"])


# -- structures ----------------------------------------------------------------------


def _even_sizes_label(x: int) -> int:
    # class k has size 2(k+1) and occupies [k(k+1), (k+1)(k+2))
    k = (math.isqrt(4 * x + 1) - 1) // 2
    return k


def even_sizes() -> EqStructure:
    return EqStructure(
        label=_even_sizes_label,
        class_size=lambda k: 2 * (k + 1),
        members=lambda k: range(k * (k + 1), (k + 1) * (k + 2)),
        provenance="even-sizes",
    )


def infinite_class() -> EqStructure:
    """The evens form one infinite class; the odds carry the all-sizes layout."""
    def members(l):
        if l == "inf":
            return iter(range(0, 1 << 62, 2))
        return [2 * y + 1 for y in range(triangular(l), triangular(l + 1))]

    return EqStructure(
        label=lambda x: "inf" if x % 2 == 0 else triangular_index(x // 2),
        class_size=lambda l: None if l == "inf" else l + 1,
        members=members,
        provenance="infinite-class",
    )


def layout(slots: list, provenance: str) -> EqStructure:
    """Classes given by a finite label list, then singletons."""
    groups: dict = {}
    for x, l in enumerate(slots):
        groups.setdefault(l, []).append(x)
    n = len(slots)
    return EqStructure(
        label=lambda x: slots[x] if x < n else ("tail", x),
        class_size=lambda l: len(groups[l]) if l in groups else 1,
        members=lambda l: tuple(groups[l]) if l in groups else (l[1],),
        provenance=provenance,
    )


def sized_layout(sizes: list[int]) -> EqStructure:
    return layout([i for i, m in enumerate(sizes) for _ in range(m)], f"sized{list(sizes)[:4]}")


def class_sizes(sizes) -> EqStructure:
    """One class for each positive member of a size set, laid out consecutively
    in increasing order of size; unbounded whenever the set is infinite."""
    in_sizes = make_set(sizes)
    starts = [0]
    seq: list[int] = []
    state = {"k": 0}

    def grow(x):
        while starts[-1] <= x:
            state["k"] += 1
            if in_sizes(state["k"]):
                seq.append(state["k"])
                starts.append(starts[-1] + state["k"])

    def label(x):
        grow(x)
        return bisect.bisect_right(starts, x) - 1

    def members(i):
        while len(seq) <= i:
            grow(starts[-1])
        return range(starts[i], starts[i + 1])

    def size(i):
        members(i)
        return seq[i]

    return EqStructure(label=label, class_size=size, members=members, provenance="class-sizes")


def shuffled_sizes(sizes: list[int], seed: int = 0) -> EqStructure:
    """Classes of the given sizes laid out in a random interleaving."""
    rng = random.Random(seed)
    slots = [i for i, n in enumerate(sizes) for _ in range(n)]
    rng.shuffle(slots)
    return layout(slots, f"shuffled-sizes({seed})")


def locally_shuffled(seed: int = 0, chunk: int = 20) -> EqStructure:
    """The all-sizes layout with positions permuted inside consecutive chunks."""
    rng = random.Random(seed)
    perms: dict[int, list[int]] = {}

    def pos(x):
        c = x // chunk
        if c not in perms:
            p = list(range(chunk))
            rng.shuffle(p)
            perms[c] = p
        return c * chunk + perms[c][x % chunk]

    inverse: dict[int, int] = {}

    def members(k):
        # positions of triangular block k, mapped back through the chunk permutations
        lo, hi = triangular(k), triangular(k + 1)
        for c in range(lo // chunk, (hi - 1) // chunk + 1):
            for x in range(c * chunk, (c + 1) * chunk):
                inverse[pos(x)] = x
        return tuple(sorted(inverse[y] for y in range(lo, hi)))

    return EqStructure(label=lambda x: triangular_index(pos(x)), class_size=lambda k: k + 1,
                       members=members, provenance=f"locally-shuffled({seed})")


def _schedule(values=None, kind: str | None = None, length: int = 12) -> DyadicSchedule:
    if values is not None:
        return DyadicSchedule(tuple(_frac(v) for v in values))
    if kind == "approaching":  # 1/2 - 2^-(n+2), limit 1/2
        return DyadicSchedule.from_function(lambda n: Fraction(1, 2) - Fraction(1, 2 ** (n + 2)), length,
                                            Fraction(1, 2))
    if kind == "swinging":  # 1/2 -+ 2^-(n+2), limit 1/2
        return DyadicSchedule.from_function(
            lambda n: Fraction(1, 2) + (-1) ** n * Fraction(1, 2 ** (n + 2)), length, Fraction(1, 2))
    raise ValidationError("density-q needs explicit values or kind approaching|swinging",
                          ["density-q needs explicit values or kind approaching|swinging"])


def density_q(values=None, kind: str | None = None, length: int = 12, horizon: int = 10000) -> EqStructure:
    S, _ = build_12_density_q(_schedule(values, kind, length), horizon)
    return S


STRUCTURES: dict[str, Callable] = {
    "canonical-all-sizes": canonical_all_sizes,
    "even-sizes": even_sizes,
    "dense-pairs": lambda: canonical_12("dense-pairs"),
    "sparse-pairs": lambda: canonical_12("sparse-pairs"),
    "identity": identity_structure,
    "blocks": block_structure,
    "infinite-class": infinite_class,
    "sized": sized_layout,
    "class-sizes": class_sizes,
    "shuffled-sizes": shuffled_sizes,
    "locally-shuffled": locally_shuffled,
    "scattered-12": lambda q, length, seed=0: scattered_12(_frac(q), length, seed),
    "density-q": density_q,
}


def make_structure(spec, horizon: int = 10000) -> EqStructure:
    return _call(STRUCTURES, "structure", spec, {"horizon": horizon})


# -- pair oracles --------------------------------------------------------------------


def _relation_pairs(structure, budget: int, delay: int = 0, horizon: int = 10000) -> PairEnumerationOracle:
    S = make_structure(structure, horizon)
    return relation_pair_oracle(S.label, budget, delay, f"pairs({S.provenance})")


def _scrambled_pairs(structure, budget: int, seed: int = 0, chunk: int = 32,
                     horizon: int = 10000) -> PairEnumerationOracle:
    S = make_structure(structure, horizon)
    return scrambled_pair_oracle(S.label, budget, seed, chunk, f"scrambled({S.provenance})")


PAIRS: dict[str, Callable] = {
    "relation-pairs": _relation_pairs,
    "scrambled-pairs": _scrambled_pairs,
}


def make_pairs(spec, budget: int, horizon: int = 10000) -> PairEnumerationOracle:
    return _call(PAIRS, "pairs", spec, {"budget": budget, "horizon": horizon})


TABLES: dict[str, dict[str, Any]] = {
    "set": SETS,
    "oracle": ORACLES,
    "structure": STRUCTURES,
    "pairs": PAIRS,
}
