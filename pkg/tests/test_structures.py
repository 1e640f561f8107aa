import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gencomp.density import prefix_density
from gencomp.errors import InvariantViolation
from gencomp.structures import (
    EqStructure,
    block_structure,
    build_A_K,
    canonical_12,
    canonical_all_sizes,
    character_of,
    check_equivalence,
    check_relation,
    classes_at,
    identity_structure,
    is_faithful,
    restrict,
    snapshot_json,
    triangular,
    triangular_index,
    two_class_structure,
    type_sets,
)


def brute_classes(S, horizon, universe=None):
    """Classes below horizon by pairwise comparison of ``related``."""
    pts = [x for x in range(horizon) if S.in_universe(x) and (universe is None or x in universe)]
    seen, out = set(), []
    for x in pts:
        if x in seen:
            continue
        grp = tuple(y for y in pts if S.related(x, y))
        seen.update(grp)
        out.append(grp)
    return sorted(out)


def test_canonical_all_sizes_examples():
    S = canonical_all_sizes()
    assert S.class_of(4) == (3, 4, 5)
    assert S.class_of(0) == (0,)
    assert S.class_of(6) == (6, 7, 8, 9)
    ts = type_sets(S, 6)
    assert ts.by_size == {1: (0,), 2: (1, 2), 3: (3, 4, 5)}
    assert ts.undetermined == ()
    assert type_sets(S, 8).undetermined == (6, 7)


def test_canonical_all_sizes_one_class_per_size():
    S = canonical_all_sizes()
    complete, truncated = classes_at(S, triangular(60))
    assert sorted(len(c) for c in complete) == list(range(1, 61))
    assert not truncated
    for k in range(1, 61):
        assert sum(len(c) for c in complete if len(c) <= k) == triangular(k)


def test_triangular_index_inverts():
    for k in range(300):
        for x in (triangular(k), triangular(k + 1) - 1):
            assert triangular_index(x) == k


def test_identity_type_sets_and_character():
    S = identity_structure()
    assert type_sets(S, 9).by_size == {1: tuple(range(9))}
    assert character_of(S, 5).counts == {1: 5}


def test_character_examples():
    assert character_of(canonical_all_sizes(), 6).counts == {1: 1, 2: 1, 3: 1}
    two = EqStructure.from_blocks([(0, 1), (2, 3)])
    ch = character_of(two, 4)
    assert ch.counts == {2: 2}
    assert ch.pairs() == {(2, 1), (2, 2)}
    json.dumps(ch.to_json())


def test_character_saturation_flag():
    # horizon 8 cuts {6,7,8,9}; sizes >= 2 could still be reached by it
    ch = character_of(canonical_all_sizes(), 8)
    assert ch.truncated == 1
    assert ch.saturated == frozenset({2, 3})


def test_is_faithful_examples():
    S = canonical_all_sizes()
    assert is_faithful({0, 1, 2}, S, 50) == (True, None)
    assert is_faithful({1}, S, 50) == (False, (1, 2))
    assert is_faithful(set(), S, 50) == (True, None)


def test_canonical_12_examples():
    dense, sparse = canonical_12("dense-pairs"), canonical_12("sparse-pairs")
    assert dense.class_of(0) == (0,)
    assert dense.class_of(5) == (5, 6)
    assert sparse.class_of(4) == (4, 5)
    for S in (dense, sparse):
        ts = type_sets(S, 10001)
        assert set(ts.by_size) == {1, 2}
    with pytest.raises(ValueError):
        canonical_12("overlapping")


def test_canonical_12_square_checkpoints():
    dense, sparse = canonical_12("dense-pairs"), canonical_12("sparse-pairs")
    d2 = lambda x: dense.size_of(x) == 2
    s2 = lambda x: sparse.size_of(x) == 2
    for n in range(2, 100):
        N = n * n
        rho = prefix_density(d2, N)
        # pairs fill [0, n^2] except the n squares 0, 1, 4, ..., (n-1)^2 and n^2 itself
        assert rho == Fraction(N - n, N + 1)
        assert rho >= 1 - Fraction(n + 1, N)
        assert prefix_density(s2, N) <= Fraction(2 * n, N)


@pytest.mark.parametrize("S", [
    canonical_all_sizes(), canonical_12("dense-pairs"), canonical_12("sparse-pairs"),
    identity_structure(), block_structure(3), two_class_structure(lambda x: x % 3 == 0),
], ids=lambda S: S.provenance)
def test_structures_are_equivalences_at_2000(S):
    check_equivalence(S, 2000)


@pytest.mark.parametrize("S", [canonical_all_sizes(), canonical_12("dense-pairs"),
                               canonical_12("sparse-pairs"), block_structure(4)],
                         ids=lambda S: S.provenance)
def test_classes_match_pairwise_recomputation(S):
    complete, truncated = classes_at(S, 300)
    assert sorted(complete + truncated) == brute_classes(S, 300)


def test_check_relation_rejects():
    with pytest.raises(InvariantViolation, match="reflexive"):
        check_relation(lambda x, y: x != y, 3)
    with pytest.raises(InvariantViolation, match="symmetric"):
        check_relation(lambda x, y: x <= y, 3)
    with pytest.raises(InvariantViolation, match="transitive"):
        check_relation(lambda x, y: abs(x - y) <= 1, 4)
    with pytest.raises(InvariantViolation):
        EqStructure.from_relation(lambda x, y: abs(x - y) <= 1, 4)


def test_from_relation_mod():
    S = EqStructure.from_relation(lambda x, y: x % 3 == y % 3, 9)
    assert S.class_of(4) == (1, 4, 7)
    assert character_of(S, 9).counts == {3: 3}


def test_declared_size_overflow_detected():
    bad = EqStructure(label=lambda x: 0, class_size=lambda l: 2)
    with pytest.raises(InvariantViolation):
        type_sets(bad, 5)


def test_snapshot_json_shape():
    snap = snapshot_json(canonical_all_sizes(), 8)
    assert snap["classes"] == [[0], [1, 2], [3, 4, 5]]
    assert snap["undetermined"] == [6, 7]


def test_restrict_examples():
    S = canonical_all_sizes()
    R = restrict(S, lambda x: True)
    assert type_sets(R, 21).by_size == type_sets(S, 21).by_size
    R = restrict(S, {1, 2})
    assert character_of(R, 50).counts == {2: 1}
    R = restrict(S, {1})
    assert character_of(R, 50).counts == {1: 1}
    assert is_faithful({1}, S, 50)[0] is False


@settings(max_examples=60, deadline=None)
@given(st.sets(st.integers(0, 120)),
       st.sampled_from(["all", "dense", "sparse", "blocks"]),
       st.integers(1, 150))
def test_restrict_then_type_sets_matches_brute(Y, which, horizon):
    S = {"all": canonical_all_sizes(), "dense": canonical_12("dense-pairs"),
         "sparse": canonical_12("sparse-pairs"), "blocks": block_structure(5)}[which]
    ts = type_sets(restrict(S, Y), horizon)
    expected: dict = {}
    undetermined = []
    for grp in brute_classes(S, horizon, Y):
        full = [y for y in S.class_of(grp[0]) if y in Y]
        if len(full) == len(grp):
            expected.setdefault(len(grp), []).extend(grp)
        else:
            undetermined.extend(grp)
    assert ts.by_size == {k: tuple(sorted(v)) for k, v in sorted(expected.items())}
    assert ts.undetermined == tuple(sorted(undetermined))
    # pairwise disjoint and covering
    listed = [x for v in ts.by_size.values() for x in v] + list(ts.undetermined)
    assert sorted(listed) == sorted(x for x in Y if x < horizon)


def test_A_K_examples():
    rep = build_A_K({2}, 6)
    assert [x for x in range(6) if rep.member(x)] == [1, 2]
    rep = build_A_K(lambda k: True, 5000)
    assert all(rep.member(x) for x in range(5000))
    assert all(c.deficit == 0 for c in rep.checkpoints)


@pytest.mark.parametrize("K", [
    lambda k: k % 2 == 0,
    lambda k: math.isqrt(k) ** 2 != k,
    lambda k: k not in (1, 2, 3, 10),
    lambda k: k > 5,
])
def test_A_K_deficit_bound(K):
    rep = build_A_K(K, 20000)
    assert rep.checkpoints and rep.ok
    for c in rep.checkpoints:
        n = c.n
        direct = sum(k for k in range(1, n + 1) if K(k))
        assert c.members == direct
        assert c.missing_sizes == sum(1 for k in range(1, n + 1) if not K(k))
        assert c.deficit <= Fraction(2 * c.missing_sizes, n)


def test_check_matrix_rejects():
    import numpy as np
    from gencomp.structures import check_matrix
    chain = np.array([[abs(i - j) <= 1 for j in range(4)] for i in range(4)])
    with pytest.raises(InvariantViolation, match="transitive"):
        check_matrix(chain)
    with pytest.raises(InvariantViolation, match="symmetric"):
        check_matrix(np.triu(np.ones((3, 3), dtype=bool)))
    with pytest.raises(InvariantViolation, match="reflexive"):
        check_matrix(~np.eye(3, dtype=bool))
