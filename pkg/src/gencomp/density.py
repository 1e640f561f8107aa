"""Prefix densities, the dense-subset extraction, square densities and the
diagonal anti-product set.

All densities are exact :class:`fractions.Fraction` values. Asymptotic claims
are replaced by windowed estimates over a finite horizon.
"""

from __future__ import annotations

import bisect
import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator

from .enumeration import EnumerationOracle, OracleRegistry
from .errors import BudgetExhausted, ContainmentError

Predicate = Callable[[int], bool]


def as_predicate(S) -> Predicate:
    """Accept a callable, a container, or an iterable of naturals."""
    if callable(S):
        return S
    if not hasattr(S, "__contains__"):
        S = frozenset(S)
    return S.__contains__


def count_below(S, n: int) -> int:
    """|S ∩ {0, ..., n-1}|."""
    member = as_predicate(S)
    return sum(1 for x in range(n) if member(x))


def prefix_density(S, n: int) -> Fraction:
    """rho_n(S) = |S ∩ {0..n}| / (n + 1)."""
    return Fraction(count_below(S, n + 1), n + 1)


def fmt_rational(q: Fraction) -> str:
    q = Fraction(q)
    return f"{q.numerator}/{q.denominator}"


@dataclass(frozen=True)
class DensityProfile:
    values: tuple[Fraction, ...]
    window: int
    tolerance: Fraction
    liminf_est: Fraction
    limsup_est: Fraction
    converged: bool
    name: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "rho_n"])
        for n, v in enumerate(self.values):
            w.writerow([n, fmt_rational(v)])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "liminf_est": fmt_rational(self.liminf_est),
            "limsup_est": fmt_rational(self.limsup_est),
            "converged": self.converged,
            "window": self.window,
            "tolerance": fmt_rational(self.tolerance),
            "horizon": len(self.values),
        }


def profile_from_counts(counts: Iterable[int], window: int, tolerance, name: str = "") -> DensityProfile:
    """Profile from running counts: ``counts[n] = |S ∩ {0..n}|``."""
    values = tuple(Fraction(c, n + 1) for n, c in enumerate(counts))
    if not 1 <= window <= len(values):
        raise ValueError("need N >= window >= 1")
    tail = values[-window:]
    lo, hi = min(tail), max(tail)
    tolerance = Fraction(tolerance)
    return DensityProfile(values, window, tolerance, lo, hi, hi - lo <= tolerance, name)


def density_profile(S, N: int, window: int, tolerance, name: str = "") -> DensityProfile:
    member = as_predicate(S)
    counts, c = [], 0
    for n in range(N):
        c += bool(member(n))
        counts.append(c)
    return profile_from_counts(counts, window, tolerance, name)


# -- dense subset of a c.e. set of upper density one ------------------------


@dataclass(frozen=True)
class Segment:
    """Certified segment ``[start, end)`` decided by membership at ``stage``.

    The claimed bound is (2^index - 1) / 2^index.
    """

    index: int
    start: int
    end: int
    stage: int
    members: int

    @property
    def length(self) -> int:
        return self.end - self.start

    @property
    def bound(self) -> Fraction:
        return 1 - Fraction(1, 1 << self.index)

    def meets_bound(self) -> bool:
        return meets_dyadic_bound(self.members, self.length, self.index)


def meets_dyadic_bound(count: int, length: int, exponent: int) -> bool:
    """count / length >= (2^exponent - 1) / 2^exponent, without building 2^exponent."""
    missing = length - count
    if missing <= 0:
        return True
    return exponent <= length.bit_length() and (missing << exponent) <= length


@dataclass
class CheckpointCertificate:
    segments: list[Segment] = field(default_factory=list)

    @property
    def checkpoints(self) -> list[tuple[int, int]]:
        """The (n_k, s_k) pairs, starting from (0, 0)."""
        return [(0, 0)] + [(seg.end, seg.stage) for seg in self.segments]

    @property
    def covered(self) -> int:
        return self.segments[-1].end if self.segments else 0

    def to_records(self) -> list[dict]:
        return [
            {"k": s.index, "n_prev": s.start, "n_k": s.end, "s_k": s.stage,
             "members": s.members, "length": s.length, "bound_exponent": s.index}
            for s in self.segments
        ]


class DenseSubset:
    """Decision procedure for the extracted set B on its certified range."""

    def __init__(self, arrival: list[float], certificate: CheckpointCertificate):
        self._arrival = arrival
        self.certificate = certificate
        self._ends = [s.end for s in certificate.segments]

    @property
    def covered(self) -> int:
        return self.certificate.covered

    def __call__(self, x: int) -> bool:
        i = bisect.bisect_right(self._ends, x)
        if i >= len(self._ends):
            raise BudgetExhausted(f"{x} lies beyond the certified range [0, {self.covered})")
        return self._arrival[x] <= self.certificate.segments[i].stage

    __contains__ = __call__

    def elements(self) -> list[int]:
        return [x for x in range(self.covered) if self(x)]


def _arrival_table(A: EnumerationOracle, size: int) -> list[float]:
    arrival = [float("inf")] * size
    for s, x in A.arrivals_through(A.budget):
        if x < size:
            arrival[x] = s
    return arrival


def extract_dense_subset(A: EnumerationOracle, horizon: int, budget: int | None = None):
    """Run the segment search until the certified range covers ``horizon``.

    Segment k+1 is ``[n_k, n_{k+1})`` where ``s_{k+1}`` is the least stage
    admitting some ``n`` in ``(n_k, s)`` with
    ``|[n_k, n) ∩ A_s| >= (2^{k+1} - 1)/2^{k+1} * (n - n_k)`` and ``n_{k+1}``
    is the least such ``n``. B agrees with ``A_{s_{k+1}}`` on the segment.

    Returns ``(DenseSubset, CheckpointCertificate)``; raises BudgetExhausted
    (with that pair as ``partial``) when the budget runs out first.
    """
    budget = A.budget if budget is None else min(budget, A.budget)
    arrival = _arrival_table(A, budget + 1)
    by_stage: dict[int, list[int]] = {}
    for x, s in enumerate(arrival):
        if s != float("inf"):
            by_stage.setdefault(int(s), []).append(x)

    # A stage can certify a segment only if something arrives at it or the
    # newest candidate element has arrived; other stages are skipped.
    useful = sorted(set(by_stage) | {t for t in range(2, budget + 1) if arrival[t - 2] <= t})

    cert = CheckpointCertificate()
    n_k, k = 0, 0
    while n_k < horizon:
        exponent = k + 1
        found = None
        s = n_k + 2
        # running count of arrived elements of [n_k, s-1) at stage s
        running = sum(1 for x in range(n_k, s - 1) if arrival[x] <= s)
        rescan = True
        while s <= budget:
            if rescan:
                cnt = 0
                for n in range(n_k + 1, s):
                    cnt += arrival[n - 1] <= s
                    if meets_dyadic_bound(cnt, n - n_k, exponent):
                        found = (n, s, cnt)
                        break
                running = cnt  # |[n_k, s-1) ∩ A_s| when nothing was found
            elif meets_dyadic_bound(running, s - 1 - n_k, exponent):
                found = (s - 1, s, running)
            if found:
                break
            i = bisect.bisect_right(useful, s)
            if i < len(useful) and useful[i] > s + 1:
                s = useful[i]
                rescan = True
                continue
            s += 1
            fresh = [x for x in by_stage.get(s, ()) if n_k <= x < s - 2]
            running += len(fresh) + (arrival[s - 2] <= s)
            rescan = bool(fresh)
        if not found:
            raise BudgetExhausted(
                f"segment {exponent} from n={n_k} not certified by stage {budget}",
                partial=(DenseSubset(arrival, cert), cert),
            )
        n, s, cnt = found
        cert.segments.append(Segment(exponent, n_k, n, s, cnt))
        n_k, k = n, k + 1
    return DenseSubset(arrival, cert), cert


# -- squares ----------------------------------------------------------------


def square_density_sweep(A, N: int) -> Iterator[tuple[int, Fraction, Fraction]]:
    """Yield ``(n, delta_A(n), delta_AxA(n))`` for n = 1..N.

    The pair count grows by the L-shaped shell added when n-1 joins the
    square, so it never goes through |A ∩ n| squared.
    """
    member = as_predicate(A)
    single = pairs = 0
    for n in range(1, N + 1):
        x = n - 1
        if member(x):
            pairs += 2 * single + 1  # (x, y), (y, x) for y < x in A, plus (x, x)
            single += 1
        yield n, Fraction(single, n), Fraction(pairs, n * n)


def square_density_check(A, n: int) -> tuple[Fraction, Fraction]:
    """(delta_A(n), delta_{AxA}(n)) over {0..n-1} and {0..n-1}^2."""
    if n < 1:
        raise ValueError("n must be positive")
    last = None
    for last in square_density_sweep(A, n):
        pass
    return last[1], last[2]


# -- diagonal anti-product ---------------------------------------------------


@dataclass(frozen=True)
class DiagonalWitness:
    index: int
    label: str
    first_above: tuple[int, int] | None  # (stage, n_e)
    pair: tuple[int, int] | None  # in W_e x W_e but outside C


class DiagonalSet:
    """Decidable C ⊆ omega x omega avoiding A x A for every registered infinite A."""

    def __init__(self, registry: OracleRegistry):
        self.registry = registry
        self.marks: list[tuple[int, int] | None] = [
            W.first_above(1 << e) for e, W in enumerate(registry)
        ]

    def excluded_by_stage(self, m: int) -> set[int]:
        """The values n_e (e < m) already visible at stage m."""
        return {
            mark[1]
            for e, mark in enumerate(self.marks[: max(m, 0)])
            if mark is not None and mark[0] <= m
        }

    def __call__(self, a: int, b: int) -> bool:
        ex = self.excluded_by_stage(max(a, b))
        return a not in ex and b not in ex

    def count_in_square(self, N: int) -> int:
        """|C ∩ ({0..N-1} x {0..N-1})|, counted shell by shell."""
        # stage at which each n_e becomes active: needs e < m and s_e <= m
        events = sorted(
            (max(e + 1, mark[0]), mark[1])
            for e, mark in enumerate(self.marks)
            if mark is not None
        )
        active: dict[int, int] = {}
        total, ev = 0, 0
        for m in range(N):
            while ev < len(events) and events[ev][0] <= m:
                v = events[ev][1]
                active[v] = active.get(v, 0) + 1
                ev += 1
            shell = 2 * m + 1
            if m in active:
                excluded = shell
            else:
                excluded = 2 * sum(1 for v in active if v < m)
            total += shell - excluded
        return total


def diagonal_antiproduct(registry: OracleRegistry, horizon: int):
    """Build C and report density checkpoints and per-oracle witnesses."""
    C = DiagonalSet(registry)
    checkpoints = []
    i = 0
    while (1 << i) <= horizon:
        N = 1 << i
        count = C.count_in_square(N)
        bound = (N - i) ** 2 if N > i else 0
        checkpoints.append({"i": i, "count": count, "bound": bound, "ok": count >= bound})
        i += 1
    witnesses = []
    for e, W in enumerate(registry):
        mark = C.marks[e]
        pair = None
        if mark is not None:
            s_e, n_e = mark
            for x in W.elements():
                if x > max(s_e, n_e, e) and not C(n_e, x):
                    pair = (n_e, x)
                    break
        witnesses.append(DiagonalWitness(e, W.label, mark, pair))
    return C, {"checkpoints": checkpoints, "witnesses": witnesses}


# -- density transfer --------------------------------------------------------


@dataclass(frozen=True)
class TransferReport:
    relative: tuple[Fraction, ...]  # |C ∩ a_n| / n for n = 1, 2, ...
    prefix: DensityProfile
    relative_tail: Fraction
    prefix_tail: Fraction
    consistent: bool


def density_transfer_check(A, C, N: int, window: int | None = None, tolerance=Fraction(1, 20)) -> TransferReport:
    """Compare |C ∩ a_n| / n (a_n the n-th element of A) with the prefix density of C."""
    in_A, in_C = as_predicate(A), as_predicate(C)
    bad = [x for x in range(N) if in_C(x) and not in_A(x)]
    if bad:
        raise ContainmentError(f"C is not contained in A: {bad[:5]}")
    a = [x for x in range(N) if in_A(x)]
    if not a:
        raise ValueError("A has no elements below the horizon")
    c_prefix = [0]
    for x in range(N):
        c_prefix.append(c_prefix[-1] + bool(in_C(x)))
    relative = tuple(Fraction(c_prefix[a[n]], n) for n in range(1, len(a)))
    window = window or max(1, N // 10)
    prof = profile_from_counts(c_prefix[1:], min(window, N), tolerance, "C")
    rel_tail = max(relative[-min(window, len(relative)):]) if relative else Fraction(0)
    tolerance = Fraction(tolerance)
    consistent = not (rel_tail <= tolerance and prof.limsup_est > tolerance)
    return TransferReport(relative, prof, rel_tail, prof.limsup_est, consistent)
