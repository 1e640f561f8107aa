import math
from fractions import Fraction

import pytest

from gencomp.enumeration import (
    LimitApproxOracle,
    OracleRegistry,
    identity_oracle,
    relation_pair_oracle,
    set_oracle,
)
from gencomp.errors import BudgetExhausted, ScenarioError, UnsupportedStructure
from gencomp.generic import (
    ScenarioMetadata,
    anti_coarse_K,
    build_faithful_coarse,
    co_squares,
    diagonal_dense_K,
    faithful_generic_copy,
    restrict_generic_witness,
    strongly_generic_copy,
)
from gencomp.s1 import CharacterApprox, S1Table
from gencomp.structures import (
    EqStructure,
    canonical_12,
    canonical_all_sizes,
    character_of,
    check_equivalence,
    is_faithful,
    triangular,
    triangular_index,
)


def evens_infinite():
    """Evens form one infinite class; odds carry the all-sizes layout."""
    def members(l):
        if l == "inf":
            return iter(range(0, 10 ** 12, 2))
        return [2 * y + 1 for y in range(triangular(l), triangular(l + 1))]

    return EqStructure(
        label=lambda x: "inf" if x % 2 == 0 else triangular_index(x // 2),
        class_size=lambda l: None if l == "inf" else l + 1,
        members=members,
        provenance="evens-infinite",
    )


CASES = [
    ("infinite-class", evens_infinite, ScenarioMetadata("infinite-class", infinite_label="inf")),
    ("repeated-size", lambda: canonical_12("dense-pairs"), ScenarioMetadata("repeated-size", repeated_size=2)),
    ("s1-subset", canonical_all_sizes, ScenarioMetadata("s1-subset")),
]


def brute_check(c, S, H):
    """Pairwise: copy(x, y) == S(f(x), f(y)) and Phi agrees on A x A."""
    A = [x for x in range(H) if c.A(x)]
    for x in range(H):
        for y in range(H):
            assert c.copy.related(x, y) == S.related(c.perm(x), c.perm(y))
    for x in A:
        for y in A:
            assert c.witness.phi(x, y) == c.copy.related(x, y)


@pytest.mark.parametrize("name,make,meta", CASES, ids=[c[0] for c in CASES])
def test_strongly_generic_copy_pairwise(name, make, meta):
    S = make()
    c = strongly_generic_copy(S, meta, 250)
    brute_check(c, S, 250)
    assert len(set(c.perm.forward.values())) == 250


@pytest.mark.parametrize("name,make,meta", CASES, ids=[c[0] for c in CASES])
def test_strongly_generic_copy_at_2000(name, make, meta):
    S = make()
    c = strongly_generic_copy(S, meta, 2000)
    rep = c.verify(S)
    assert rep["agreement"] and rep["AxA_in_domain"]
    assert rep["transport"]["injective"] and rep["transport"]["multisets_equal"]
    assert rep["transport"]["size_mismatches"] == 0
    if name == "s1-subset":
        assert not rep["faithful_copy"]
        a, b = rep["faithful_counterexample"]
        assert c.A(a) and not c.A(b) and c.copy.related(a, b)
    else:
        assert rep["faithful_copy"] and rep["faithful_cmp"]


def test_infinite_case_compares_with_two_classes():
    c = strongly_generic_copy(evens_infinite(), CASES[0][2], 400)
    assert all(c.copy.related(2, y) for y in range(400) if co_squares(y))
    assert c.S_cmp.related(0, 1) and not c.S_cmp.related(0, 2)


def test_repeated_size_uses_blocks():
    c = strongly_generic_copy(canonical_12("dense-pairs"), CASES[1][2], 400)
    assert c.S_cmp.class_of(5, 10) == (4, 5)
    # carrier: blocks {2n, 2n+1} with n not a square
    assert not c.A(0) and not c.A(3) and c.A(4) and c.A(5) and not c.A(8)


def test_unbounded_case_meets_each_class_once():
    c = strongly_generic_copy(canonical_all_sizes(), CASES[2][2], 600)
    images = [c.perm(x) for x in range(600) if c.A(x)]
    labels = [triangular_index(y) for y in images]
    assert len(set(labels)) == len(labels)
    assert all(y == triangular(k) for y, k in zip(images, labels))


def test_metadata_mismatch_and_unsupported():
    with pytest.raises(ScenarioError):
        strongly_generic_copy(canonical_all_sizes(), ScenarioMetadata("repeated-size", repeated_size=2), 100)
    with pytest.raises(ScenarioError):
        strongly_generic_copy(canonical_12("sparse-pairs"), ScenarioMetadata("s1-subset"), 100)
    with pytest.raises(UnsupportedStructure):
        faithful_generic_copy(canonical_all_sizes(), ScenarioMetadata(), 100)
    with pytest.raises(ScenarioError):
        ScenarioMetadata("bogus")


def test_faithful_copy_delegates():
    S, meta = CASES[1][1](), CASES[1][2]
    a = strongly_generic_copy(S, meta, 500)
    b = faithful_generic_copy(S, meta, 500)
    assert a.perm.forward == b.perm.forward and a.case == b.case


def even_character():
    K = CharacterApprox(lambda k, n, s: k % 2 == 0 and n == 1, budget=10, max_size=120, max_count=2)
    f = S1Table.from_function(lambda i, s: 2 * (i + 1), 50)
    return K, f


def test_faithful_s1_copy():
    K, f = even_character()
    S = canonical_all_sizes()
    c = faithful_generic_copy(S, ScenarioMetadata("s1-subset"), 2000, K, f)
    rep = c.verify(S)
    assert rep["agreement"] and rep["faithful_copy"] and rep["transport"]["multisets_equal"]
    # the carried classes are exactly the even sizes
    carried = {}
    for x in range(2000):
        if c.A(x):
            carried.setdefault(c.S_cmp.label(x), []).append(x)
    complete = [v for l, v in carried.items() if c.S_cmp.class_size(l) == len(v)]
    assert len(complete) >= 40
    assert all(len(v) % 2 == 0 for v in complete)
    assert is_faithful(c.A, c.copy, 2000) == (True, None)


def test_faithful_s1_copy_pairwise():
    K, f = even_character()
    S = canonical_all_sizes()
    c = faithful_generic_copy(S, ScenarioMetadata("s1-subset"), 200, K, f)
    brute_check(c, S, 200)


# -- restriction ---------------------------------------------------------------


def test_restrict_total_on_omega():
    c = strongly_generic_copy(canonical_12("dense-pairs"), CASES[1][2], 600)
    w = c.witness
    w.A_oracle = identity_oracle(2000)
    w.domain_set = lambda x: True
    w.A = lambda x: True
    r = restrict_generic_witness(w, 500)
    assert not r.partial and r.covered >= 500
    assert all(r.Y(x) for x in range(500))


def test_restrict_case_ii_partial_prefix():
    S = canonical_12("dense-pairs")
    c = strongly_generic_copy(S, CASES[1][2], 3000)
    with pytest.raises(BudgetExhausted):
        restrict_generic_witness(c.witness, 3000)
    r = restrict_generic_witness(c.witness, 3000, allow_partial=True, min_coverage=1000)
    assert r.partial and r.covered >= 1000
    Y = [x for x in range(r.covered) if r.Y(x)]
    assert all(c.A(x) for x in Y)
    check_equivalence(r.structure, 300)
    for x in Y[:200]:
        for y in Y:
            assert r.structure.related(x, y) == (x // 2 == y // 2)
            assert r.structure.related(x, y) == c.copy.related(x, y)


def test_restrict_sparse_carrier_exhausts():
    c = strongly_generic_copy(canonical_12("dense-pairs"), CASES[1][2], 300)
    w = c.witness
    w.A_oracle = set_oracle(lambda x: math.isqrt(x) ** 2 == x, 2000)
    with pytest.raises(BudgetExhausted):
        restrict_generic_witness(w, 1000)


# -- coarse constructions ------------------------------------------------------


def non_square(k):
    return math.isqrt(k) ** 2 != k


def test_faithful_coarse_non_squares():
    fc = build_faithful_coarse(non_square, 10000)
    rep = fc.report
    assert rep["agreement"] and rep["faithful_E"] and rep["faithful_R"]
    assert rep["max_count"] <= 2 and rep["sizes_in_K"] and rep["deficit_ok"]
    ch = character_of(fc.R, 10000)
    assert all(c <= 2 for c in ch.counts.values())


def test_faithful_coarse_pairwise_agreement():
    fc = build_faithful_coarse(non_square, 600)
    A = [x for x in range(600) if fc.A_K(x)]
    for x in A:
        for y in A:
            assert fc.R.related(x, y) == (triangular_index(x) == triangular_index(y))
    check_equivalence(fc.R, 600)


def test_faithful_coarse_complement_layout():
    fc = build_faithful_coarse(non_square, 200)
    comp = [x for x in range(200) if not fc.A_K(x)]
    # sizes 1 and 4 are missing from K, so the complement starts {0}, {6,7,8,9}
    assert comp[:5] == [0, 6, 7, 8, 9]
    assert fc.R.class_size(fc.R.label(0)) == 2  # least size in K
    assert fc.R.related(0, 6) and not fc.R.related(6, 7)


def test_faithful_coarse_rejects_all_sizes():
    with pytest.raises(ScenarioError):
        build_faithful_coarse(lambda k: True, 1000)


def test_diagonal_dense_K_examples():
    reg = OracleRegistry()
    reg.register(LimitApproxOracle(lambda x, s: True, 5))
    d = diagonal_dense_K(reg, 1024)
    assert d.omitted == {0: 3}
    assert not d.member(3) and d.member(2)
    d = diagonal_dense_K(OracleRegistry(), 1024)
    assert all(d.member(x) for x in range(1024))


def test_diagonal_dense_K_many_sets():
    reg = OracleRegistry()
    for m in range(2, 14):
        reg.register(LimitApproxOracle(lambda x, s, m=m: x % m == 0, 5))
    reg.register(LimitApproxOracle(lambda x, s: False, 5))
    d = diagonal_dense_K(reg, 1 << 14)
    assert d.ok
    for e, x in d.omitted.items():
        if x is not None:
            assert x == min(y for y in range((1 << (e + 1)) + 1, 1 << 15) if reg[e].member(y))
    assert d.omitted[len(reg) - 1] is None
    for c in d.checkpoints:
        n = 1 << c["i"]
        assert c["count"] == sum(1 for x in range(n) if d.member(x))
        assert Fraction(c["count"], n) >= Fraction(n - c["i"], n)


def sized_layout(sizes):
    lab = []
    for i, m in enumerate(sizes):
        lab += [i] * m
    return lambda x: lab[x] if x < len(lab) else ("tail", x)


def test_anti_coarse_one_mod_four():
    reg = OracleRegistry()
    reg.register(relation_pair_oracle(sized_layout([1 + 4 * i for i in range(60)]), 20000))
    a = anti_coarse_K(reg, [None], 20000, 4096)
    st = a.stages[0]
    assert st.action == "removed" and st.modulus == 4 and st.j == 1 and st.preserved == 5
    assert [m for m in range(1, 200) if m % 4 == 1 and a.member(m)] == [5]
    assert all(w["ok"] for w in a.witnesses)


def test_anti_coarse_positive_density_no_action():
    reg = OracleRegistry()
    reg.register(relation_pair_oracle(lambda x: x // 2, 5000))
    a = anti_coarse_K(reg, [ScenarioMetadata(positive_density_size=2)], 5000, 2048)
    assert a.stages[0].action == "no-action" and not a.removed
    assert all(a.member(m) for m in range(1, 100))


def test_anti_coarse_many_structures():
    reg = OracleRegistry()
    layouts = [
        [1 + 4 * i for i in range(60)],
        list(range(1, 90)),
        [2 + 8 * i for i in range(40)],
        [3 * i + 1 for i in range(70)],
        list(range(5, 80, 2)),
    ]
    for sizes in layouts:
        reg.register(relation_pair_oracle(sized_layout(sizes), 8000, delay=3))
    a = anti_coarse_K(reg, [None] * len(layouts), 8000, 4096)
    keep = a.preserved
    assert len(keep) == len(set(keep)) == len(a.removed)
    assert all(a.member(m) for m in keep)
    assert all(w["ok"] for w in a.witnesses)
    for M, j, _ in a.removed:
        assert 0 <= j < M
    # residue classes are nested or disjoint, so no removal undoes a preserved element
    for st in a.stages:
        assert st.modulus == 1 << (st.e + 2)
