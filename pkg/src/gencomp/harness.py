"""Scenario runner: load a YAML scenario, run one construction, emit a report.

Every construction declares a fixed list of invariants; a report carries
exactly one check per invariant. Reports hold no timing, so identical
scenario files give byte-identical output.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from .density import (
    density_profile,
    diagonal_antiproduct,
    extract_dense_subset,
    fmt_rational,
    square_density_sweep,
)
from .enumeration import LimitApproxOracle, OracleRegistry, ce_closure, relation_pair_oracle
from .errors import BudgetExhausted, GencompError, InvariantViolation, ValidationError
from .generators import (
    _schedule,
    check_spec,
    make_oracle,
    make_pairs,
    make_set,
    make_structure,
)
from .generic import (
    ScenarioMetadata,
    anti_coarse_K,
    build_faithful_coarse,
    diagonal_dense_K,
    faithful_generic_copy,
    relation_agreement,
    restrict_generic_witness,
    strongly_generic_copy,
)
from .isomorphisms import (
    CandidateMap,
    build_12_density_q,
    coarse_iso_char1,
    generic_iso_char2,
    interleaved_bijection,
    staged_subrelation,
    thm12_demo,
    weak_coarse_iso_12,
)
from .s1 import CharacterApprox, S1Table, build_from_character, extract_s1, validate_s1
from .structures import EqStructure, character_of, is_faithful

log = logging.getLogger(__name__)

HORIZON_CAP = 1_000_000
FORMATS = ("json", "csv-bundle")


# -- scenarios -----------------------------------------------------------------------


@dataclass
class Scenario:
    name: str
    construction: str
    horizon: int
    budget: int
    params: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    tolerance: Fraction = Fraction(1, 20)
    output: dict = field(default_factory=lambda: {"format": "json"})
    source: str | None = None

    @property
    def format(self) -> str:
        return self.output.get("format", "json")


def _as_fraction(v, what: str, problems: list[str]) -> Fraction | None:
    try:
        return Fraction(str(v))
    except (ValueError, ZeroDivisionError):
        problems.append(f"{what}: {v!r} is not a rational")
        return None


def scenario_from_dict(doc, source: str | None = None, horizon: int | None = None,
                       budget: int | None = None) -> Scenario:
    """Validate a parsed document; ValidationError lists every problem found."""
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise ValidationError("scenario must be a mapping", ["scenario must be a mapping"])
    known = {"name", "construction", "horizon", "budget", "params", "metadata", "tolerance", "output"}
    for k in sorted(set(doc) - known):
        problems.append(f"unknown key {k!r}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        problems.append("name is missing")
        name = name or "unnamed"
    cons = doc.get("construction")
    if cons not in CONSTRUCTIONS:
        problems.append(f"unknown construction {cons!r}")
    H = horizon if horizon is not None else doc.get("horizon")
    if not isinstance(H, int) or isinstance(H, bool) or H < 1:
        problems.append(f"horizon must be a positive integer, got {H!r}")
        H = 1
    elif H > HORIZON_CAP:
        problems.append(f"horizon {H} exceeds the cap {HORIZON_CAP}")
    B = budget if budget is not None else doc.get("budget", 2 * H)
    if not isinstance(B, int) or isinstance(B, bool) or B < 0:
        problems.append(f"budget must be a non-negative integer, got {B!r}")
        B = 0
    params = doc.get("params") or {}
    meta = doc.get("metadata") or {}
    if not isinstance(params, dict):
        problems.append("params must be a mapping")
        params = {}
    if not isinstance(meta, dict):
        problems.append("metadata must be a mapping")
        meta = {}
    tol = _as_fraction(doc.get("tolerance", "1/20"), "tolerance", problems) or Fraction(1, 20)
    output = doc.get("output") or {"format": "json"}
    if not isinstance(output, dict) or output.get("format", "json") not in FORMATS:
        problems.append(f"output format must be one of {FORMATS}")
        output = {"format": "json"}
    if cons in CONSTRUCTIONS:
        spec = CONSTRUCTIONS[cons]
        ctx = {"budget": B, "horizon": H}
        for key in spec.required:
            if key not in params:
                problems.append(f"{cons}: missing param {key!r}")
        for key, value in params.items():
            kind = spec.fields.get(key)
            if kind is None:
                problems.append(f"{cons}: unknown param {key!r}")
            elif kind.endswith("s") and kind[:-1] in ("set", "oracle", "structure"):
                if not isinstance(value, list):
                    problems.append(f"{cons}: param {key!r} must be a list")
                    continue
                for v in value:
                    problems += check_spec(kind[:-1], v, ctx)
            elif kind in ("set", "oracle", "structure", "pairs"):
                problems += check_spec(kind, value, ctx)
        if cons in _EXTRA_CHECKS:
            problems += _EXTRA_CHECKS[cons](params)
        if "case" in meta:
            try:
                _metadata(meta)
            except GencompError as exc:
                problems.append(str(exc))
    if problems:
        raise ValidationError(f"{source or name}: {len(problems)} problem(s)", problems)
    return Scenario(name, cons, H, B, params, meta, tol, output, source)


def load_scenario(path, horizon: int | None = None, budget: int | None = None) -> Scenario:
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: not valid YAML", [str(exc)]) from exc
    return scenario_from_dict(doc, str(path), horizon, budget)


def _metadata(meta: dict) -> ScenarioMetadata:
    return ScenarioMetadata(
        case=meta.get("case", "none"),
        infinite_label=meta.get("infinite_label"),
        repeated_size=meta.get("repeated_size"),
        positive_density_size=meta.get("positive_density_size"),
    )


# -- reports -------------------------------------------------------------------------


@dataclass
class Check:
    name: str
    passed: bool
    measured: Any = None


@dataclass
class Report:
    scenario: str
    construction: str
    checks: list[Check] = field(default_factory=list)
    certificates: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)  # name -> DensityProfile
    error: str | None = None

    @property
    def passed(self) -> bool:
        return bool(self.checks) and self.error is None and all(c.passed for c in self.checks)

    @property
    def empty(self) -> bool:
        return not self.checks

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "construction": self.construction,
            "passed": self.passed,
            "error": self.error,
            "invariants": [{"name": c.name, "passed": bool(c.passed), "measured": c.measured}
                           for c in self.checks],
            "summary": {"total": len(self.checks), "passed": sum(bool(c.passed) for c in self.checks)},
            "certificates": self.certificates,
            "profiles": {k: p.summary() for k, p in self.profiles.items()},
        }


def _plain(v):
    if isinstance(v, Fraction):
        return fmt_rational(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, (set, frozenset)):
        return sorted(_plain(x) for x in v)
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if hasattr(v, "__dataclass_fields__"):
        return {k: _plain(getattr(v, k)) for k in v.__dataclass_fields__}
    return v


def render_json(report: Report) -> str:
    return json.dumps(_plain(report.to_dict()), sort_keys=True, indent=2) + "\n"


def emit_report(report: Report, out, fmt: str = "json") -> list[Path]:
    """Write ``<out>/<scenario>.json``, or a directory with summary.json and one
    CSV (columns n, rho_n) per density profile."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "json":
        path = out / f"{report.scenario}.json"
        path.write_text(render_json(report))
        return [path]
    if fmt != "csv-bundle":
        raise ValueError(f"unknown format {fmt!r}")
    base = out / report.scenario
    base.mkdir(parents=True, exist_ok=True)
    written = [base / "summary.json"]
    written[0].write_text(render_json(report))
    for name, prof in sorted(report.profiles.items()):
        p = base / f"{name}.csv"
        p.write_text(prof.to_csv())
        written.append(p)
    return written


def output_dir(flag: str | None) -> Path:
    """The output directory; GENCOMP_OUT overrides the flag."""
    return Path(os.environ.get("GENCOMP_OUT") or flag or "reports")


# -- construction registry ---------------------------------------------------------------


@dataclass(frozen=True)
class Construction:
    name: str
    invariants: tuple[str, ...]
    run: Callable[[Scenario, "Outcome"], None]
    fields: dict
    required: tuple[str, ...] = ()
    summary: str = ""


class Outcome:
    """Collects checks in invariant order, plus certificates and profiles."""

    def __init__(self):
        self.checks: dict[str, Check] = {}
        self.certificates: dict = {}
        self.profiles: dict = {}
        self.stage = "setup"

    def check(self, name: str, passed, measured=None):
        if name in self.checks:
            raise InvariantViolation(f"invariant {name!r} reported twice")
        self.checks[name] = Check(name, bool(passed), measured)

    def profile(self, name: str, member, N: int, tol):
        window = max(1, N // 10)
        self.profiles[name] = density_profile(member, N, window, tol, name)


CONSTRUCTIONS: dict[str, Construction] = {}


def construction(name, invariants, fields, required=(), summary=""):
    def deco(fn):
        CONSTRUCTIONS[name] = Construction(name, tuple(invariants), fn, dict(fields), tuple(required), summary)
        return fn
    return deco


def run_scenario(sc: Scenario) -> Report:
    """Run deterministically. Runtime errors become a report whose checks all
    fail, with the failing stage in ``error``."""
    spec = CONSTRUCTIONS[sc.construction]
    out = Outcome()
    report = Report(sc.name, sc.construction)
    try:
        spec.run(sc, out)
    except GencompError as exc:
        report.error = f"{out.stage}: {type(exc).__name__}: {exc}"
        log.warning("%s failed at %s", sc.name, report.error)
    got = list(out.checks)
    if report.error is None and sorted(got) != sorted(spec.invariants):
        missing = sorted(set(spec.invariants) - set(got))
        extra = sorted(set(got) - set(spec.invariants))
        raise InvariantViolation(f"{sc.construction}: invariants missing {missing}, unexpected {extra}")
    for name in spec.invariants:
        c = out.checks.get(name) or Check(name, False, {"error": report.error})
        report.checks.append(c)
    report.certificates = out.certificates
    report.profiles = out.profiles
    return report


# -- density constructions ------------------------------------------------------------


@construction("lemma2-sweep", ["exact_equality", "brute_crosscheck"],
              {"families": "sets", "brute_limit": "int"}, ("families",),
              "density of A x A equals the square of the density of A, exactly, for every n")
def _lemma2(sc: Scenario, out: Outcome):
    tallies = {}
    brute_ok = True
    limit = sc.params.get("brute_limit", 120)
    for spec in sc.params["families"]:
        label = spec if isinstance(spec, str) else json.dumps(spec, sort_keys=True)
        out.stage = f"sweep {label}"
        member = make_set(spec)
        exact = all(y == x * x for _, x, y in square_density_sweep(member, sc.horizon))
        tallies[label] = exact
        for n in sorted({1, 2, 7, min(limit, sc.horizon)}):
            xs = [a for a in range(n) if member(a)]
            pairs = sum(1 for a in xs for b in xs)
            brute_ok &= Fraction(pairs, n * n) == Fraction(len(xs), n) ** 2
        out.profile(f"family{len(tallies) - 1}", member, min(sc.horizon, 10 ** 5), sc.tolerance)
    ok = sum(tallies.values())
    out.check("exact_equality", ok == len(tallies) > 0, {"tally": f"{ok}/{len(tallies)}", "families": tallies})
    out.check("brute_crosscheck", brute_ok, {"n_max": min(limit, sc.horizon)})


@construction("lemma1-extract", ["segments_meet_bound", "B_subset_A", "covers_horizon"],
              {"oracle": "oracle"}, ("oracle",),
              "computable B of upper density one inside a c.e. A of upper density one")
def _lemma1(sc: Scenario, out: Outcome):
    out.stage = "extract"
    A = make_oracle(sc.params["oracle"], sc.budget)
    try:
        B, cert = extract_dense_subset(A, sc.horizon, sc.budget)
        complete = True
    except BudgetExhausted as exc:
        B, cert = exc.partial
        complete = False
    out.stage = "verify"
    covered = min(cert.covered, sc.horizon)
    in_A = A.enumerate(A.budget)
    elems = [x for x in range(covered) if B(x)]
    out.check("segments_meet_bound", all(s.meets_bound for s in cert.segments), {"segments": len(cert.segments)})
    out.check("B_subset_A", all(x in in_A for x in elems), {"B_size": len(elems), "below": covered})
    out.check("covers_horizon", complete and cert.covered >= sc.horizon, {"covered": cert.covered})
    out.certificates["checkpoints"] = cert.to_records()
    if covered:
        members = set(elems)
        out.profile("B", members.__contains__, covered, sc.tolerance)


@construction("thm1-diagonal", ["density_bound", "witnesses_found"],
              {"oracles": "oracles", "infinite": "list"}, ("oracles",),
              "decidable C of density one with no A x A inside it for infinite registered A")
def _thm1(sc: Scenario, out: Outcome):
    reg = OracleRegistry()
    for spec in sc.params["oracles"]:
        reg.register(make_oracle(spec, sc.budget))
    infinite = sc.params.get("infinite", [True] * len(reg))
    out.stage = "diagonal"
    C, rep = diagonal_antiproduct(reg, sc.horizon)
    cps = rep["checkpoints"]
    wit = rep["witnesses"]
    need = [w for w, inf in zip(wit, infinite) if inf]
    out.check("density_bound", all(c["ok"] for c in cps), {"checkpoints": len(cps)})
    out.check("witnesses_found", all(w.pair is not None for w in need),
              {w.label or str(w.index): w.pair for w in wit})
    out.certificates["checkpoints"] = cps
    out.certificates["witnesses"] = wit


# -- generic copies --------------------------------------------------------------------


def _transport_ok(t: dict) -> bool:
    return t["injective"] and t["multisets_equal"] and t["size_mismatches"] == 0


def _copy_checks(out: Outcome, c, S, faithful_expected: bool | None):
    out.stage = "verify"
    rep = c.verify(S)
    out.check("agreement", rep["agreement"], {"disagreement": rep["disagreement"], "domain": rep["domain_size"]})
    out.check("AxA_in_domain", rep["AxA_in_domain"])
    t = rep["transport"]
    out.check("transport_bijective", _transport_ok(t), {k: t[k] for k in sorted(t) if k != "samples"})
    faithful = rep["faithful_copy"] and rep["faithful_cmp"]
    expect = c.faithful_claim if faithful_expected is None else faithful_expected
    out.check("faithfulness_as_claimed", faithful == expect,
              {"claimed": expect, "faithful": faithful, "counterexample": rep["faithful_counterexample"]})
    out.profile("carrier", c.A, c.perm.horizon, Fraction(1, 20))


_COPY_INVARIANTS = ["agreement", "AxA_in_domain", "transport_bijective", "faithfulness_as_claimed"]


@construction("prop1", _COPY_INVARIANTS, {"structure": "structure", "carrier": "set"}, ("structure",),
              "strongly generically computable copy; case from metadata")
def _prop1(sc: Scenario, out: Outcome):
    S = make_structure(sc.params["structure"], sc.horizon)
    carrier = make_set(sc.params.get("carrier", "co-squares"))
    out.stage = "copy"
    c = strongly_generic_copy(S, _metadata(sc.metadata), sc.horizon, carrier, sc.budget)
    _copy_checks(out, c, S, None)


def _s1_table(spec: dict) -> S1Table:
    a, b, stages = spec.get("a", 1), spec.get("b", 1), spec.get("stages", 50)
    return S1Table.from_function(lambda i, s: a * i + b, stages)


def _character(spec: dict | None) -> CharacterApprox | None:
    if not spec:
        return None
    sizes = make_set(spec.get("sizes", "omega"))
    count = spec.get("count", 1)
    return CharacterApprox(lambda k, n, s: sizes(k) and n <= count, budget=spec.get("budget", 10),
                           max_size=spec.get("max_size", 100), max_count=spec.get("max_count", count + 1))


@construction("thm4", _COPY_INVARIANTS,
              {"structure": "structure", "carrier": "set", "character": "dict", "s1": "dict"}, ("structure",),
              "generically computable copy with a faithful computable substructure")
def _thm4(sc: Scenario, out: Outcome):
    S = make_structure(sc.params["structure"], sc.horizon)
    carrier = make_set(sc.params.get("carrier", "co-squares"))
    K = _character(sc.params.get("character"))
    f = _s1_table(sc.params["s1"]) if "s1" in sc.params else None
    out.stage = "copy"
    c = faithful_generic_copy(S, _metadata(sc.metadata), sc.horizon, K, f, carrier)
    _copy_checks(out, c, S, True)


@construction("thm2-restrict", ["coverage", "Y_subset_A", "phi_matches_copy_on_Y"],
              {"structure": "structure", "extract_from": "oracle", "min_coverage": "int"}, ("structure",),
              "restrict a generic witness to a computable Y of upper density one")
def _thm2(sc: Scenario, out: Outcome):
    S = make_structure(sc.params["structure"], sc.horizon)
    out.stage = "copy"
    c = strongly_generic_copy(S, _metadata(sc.metadata), sc.horizon, budget=sc.budget)
    w = c.witness
    if "extract_from" in sc.params:
        w.A_oracle = make_oracle(sc.params["extract_from"], sc.budget)
    out.stage = "restrict"
    minimum = sc.params.get("min_coverage", 1)
    r = restrict_generic_witness(w, sc.horizon, sc.budget, allow_partial=True, min_coverage=minimum)
    out.stage = "verify"
    Y = [x for x in range(r.covered) if r.Y(x)]
    out.check("coverage", r.covered >= minimum, {"covered": r.covered, "partial": r.partial, "Y_size": len(Y)})
    out.check("Y_subset_A", all(w.domain_set(x) for x in Y))
    agree, cx = relation_agreement(Y, w.phi_label, c.copy.label)
    out.check("phi_matches_copy_on_Y", agree, {"disagreement": cx})
    out.certificates["checkpoints"] = r.certificate.to_records()


@construction("ex1-demo", ["copy_agreement", "infinite_class_on_carrier", "Y_meets_finite_classes",
                           "Y_not_faithful"],
              {"infinite_density": "rational", "seed": "int", "sizes": "set", "Y": "set"}, (),
              "an infinite class plus finite classes: the copy moves the infinite class onto a dense "
              "computable carrier, while a computable Y in the source meets classes partially")
def _ex1(sc: Scenario, out: Outcome):
    H = sc.horizon
    p = sc.params.get("infinite_density", "1/2")
    seed = sc.params.get("seed", 0)
    sizes = make_set(sc.params.get("sizes", {"gen": "above", "k": 2}))
    in_inf = make_set({"gen": "random", "p": str(p), "seed": seed})
    out.stage = "source"
    extent = 8 * H
    size_list = [k for k in range(1, 4 * H) if sizes(k)][: 4 * H]
    labels: list = []
    inf_members: list[int] = []
    groups: dict = {}
    pending: list[int] = []
    nxt = 0
    for x in range(extent):
        if in_inf(x):
            labels.append("inf")
            inf_members.append(x)
            continue
        pending.append(x)
        labels.append(None)
        if len(pending) == size_list[nxt % len(size_list)]:
            for y in pending:
                labels[y] = nxt
            groups[nxt] = tuple(pending)
            pending, nxt = [], nxt + 1
    for y in pending:  # unfinished class at the cut
        labels[y] = ("cut", nxt)
    S = EqStructure(
        label=lambda x: labels[x] if x < extent else ("far", x),
        class_size=lambda l: None if l == "inf" else len(groups.get(l, ())) or None,
        members=lambda l: iter(inf_members) if l == "inf" else groups.get(l, ()),
        provenance="infinite-plus-finite",
    )
    out.stage = "copy"
    meta = ScenarioMetadata("infinite-class", infinite_label="inf")
    c = strongly_generic_copy(S, meta, H, budget=sc.budget)
    rep = c.witness.verify(H)
    out.stage = "verify"
    out.check("copy_agreement", rep["agreement"] and rep["AxA_in_domain"], {"disagreement": rep["disagreement"]})
    carrier = [x for x in range(H) if c.A(x)]
    on_inf = all(c.copy.related(carrier[0], x) for x in carrier)
    out.check("infinite_class_on_carrier", on_inf, {"carrier_size": len(carrier)})
    Y = make_set(sc.params.get("Y", "evens"))
    growth = [sum(1 for x in range(n) if Y(x) and labels[x] != "inf") for n in (H // 4, H // 2, H)]
    out.check("Y_meets_finite_classes", growth[0] < growth[1] < growth[2], {"Y_minus_inf": growth})
    ok, cx = is_faithful(Y, S, H)
    partial = sorted({labels[x] for x in range(H) if Y(x) and labels[x] in groups
                      and not all(Y(y) for y in groups[labels[x]])})
    out.check("Y_not_faithful", not ok, {"counterexample": cx, "finite_classes_met_partially": len(partial)})
    out.profile("carrier", c.A, H, sc.tolerance)
    out.profile("infinite_class", in_inf, H, sc.tolerance)


# -- coarse constructions ------------------------------------------------------------


@construction("faithful-coarse", ["agreement", "faithful_E", "faithful_R", "sizes_in_K", "deficit_bound"],
              {"K": "set"}, ("K",), "coarse computable structure faithful on A_K for co-infinite K")
def _faithful_coarse(sc: Scenario, out: Outcome):
    K = make_set(sc.params["K"])
    out.stage = "build"
    fc = build_faithful_coarse(K, sc.horizon)
    r = fc.report
    out.check("agreement", r["agreement"], {"disagreement": r["disagreement"]})
    out.check("faithful_E", r["faithful_E"])
    out.check("faithful_R", r["faithful_R"], {"max_count": r["max_count"]})
    out.check("sizes_in_K", r["sizes_in_K"])
    out.check("deficit_bound", r["deficit_ok"], {"checkpoints": len(r["checkpoints"])})
    out.certificates["checkpoints"] = r["checkpoints"]
    out.profile("A_K", fc.A_K, sc.horizon, sc.tolerance)


@construction("diagonal-dense-k", ["density_bound", "omitted_least"], {"sets": "sets"}, ("sets",),
              "dense K omitting one element of each registered limit-approximable set")
def _diag_k(sc: Scenario, out: Outcome):
    reg = OracleRegistry()
    preds = [make_set(s) for s in sc.params["sets"]]
    for pred in preds:
        reg.register(LimitApproxOracle(lambda x, s, p=pred: p(x), 5))
    out.stage = "build"
    d = diagonal_dense_K(reg, sc.horizon)
    least = all(
        x is None or x == next(y for y in range((1 << (e + 1)) + 1, sc.horizon + 1) if preds[e](y))
        for e, x in d.omitted.items()
    )
    out.check("density_bound", d.ok, {"checkpoints": len(d.checkpoints)})
    out.check("omitted_least", least, {"omitted": d.omitted})
    out.certificates["checkpoints"] = d.checkpoints


@construction("anti-coarse-k", ["one_preserved_per_action", "coverage_bound"],
              {"structures": "structures", "delay": "int", "positive_density": "list"}, ("structures",),
              "K defeating coarse copies of each registered c.e. structure")
def _anti(sc: Scenario, out: Outcome):
    reg = OracleRegistry()
    delay = sc.params.get("delay", 0)
    for spec in sc.params["structures"]:
        S = make_structure(spec, sc.horizon)
        reg.register(relation_pair_oracle(S.label, sc.budget, delay, S.provenance))
    pos = sc.params.get("positive_density", [])
    meta = [ScenarioMetadata(positive_density_size=k) if k else None for k in pos]
    meta += [None] * (len(reg) - len(meta))
    out.stage = "build"
    a = anti_coarse_K(reg, meta, sc.budget, sc.horizon)
    keep = a.preserved
    acted = [s for s in a.stages if s.action == "removed"]
    out.check("one_preserved_per_action",
              len(keep) == len(set(keep)) == len(acted) and all(a.member(m) for m in keep),
              {"preserved": keep, "actions": [s.action for s in a.stages]})
    out.check("coverage_bound", all(w["ok"] for w in a.witnesses), {"witnesses": len(a.witnesses)})
    out.certificates["stages"] = a.stages
    out.certificates["witnesses"] = a.witnesses


# -- s1 functions -----------------------------------------------------------------------


@construction("s1-roundtrip", ["table_valid", "realized_sizes_match", "character_reproduced"],
              {"structure": "structure", "delay": "int", "patience": "int"}, ("structure",),
              "extract an s1-table from an enumeration, then rebuild a structure from it")
def _s1_roundtrip(sc: Scenario, out: Outcome):
    S = make_structure(sc.params["structure"], sc.horizon)
    E = relation_pair_oracle(S.label, sc.budget, sc.params.get("delay", 0), S.provenance)
    patience = sc.params.get("patience", 2)
    out.stage = "extract"
    try:
        t = extract_s1(E, sc.budget)
    except BudgetExhausted as exc:
        t = exc.partial
    out.stage = "validate"
    r = validate_s1(t, patience)
    out.check("table_valid", r.valid and len(r.limits) > 0, {"violation": r.violation, "limits": len(r.limits)})
    full = ce_closure(E, E.budget, E.budget + 1).labels()
    root_size: dict = {}
    for root in full.values():
        root_size[root] = root_size.get(root, 0) + 1
    mism = [(i, m) for i, (m, _) in enumerate(r.limits) if root_size.get(full.get(t.anchors[-1][i])) != m]
    out.check("realized_sizes_match", not mism, {"mismatches": mism[:10]})
    out.stage = "build"
    real = build_from_character(None, t, patience=patience)
    R = real.structure
    built = character_of(R, R.extent).counts
    limits = [m for m, _ in real.limits]
    same = sorted(k for k, c in built.items() for _ in range(c)) == limits
    sourced = all(m in root_size.values() for m in limits)
    out.check("character_reproduced", same and sourced and bool(limits), {"limits": limits})
    out.certificates["s1_table"] = t.to_json()


# -- (1,2)-structures ----------------------------------------------------------------------


@construction("density-q", ["checkpoints_exact", "reaches_horizon"],
              {"values": "list", "kind": "str", "length": "int"}, (),
              "(1,2)-structure whose singleton share is exactly q_n at each checkpoint")
def _density_q(sc: Scenario, out: Outcome):
    p = sc.params
    sched = _schedule(p.get("values"), p.get("kind"), p.get("length", 12))
    out.stage = "build"
    S, cps = build_12_density_q(sched, sc.horizon)
    exact = all(c["singletons"] == c["q_n"] * c["s_n"] for c in cps)
    out.check("checkpoints_exact", exact and bool(cps), {"checkpoints": len(cps)})
    out.check("reaches_horizon", cps[-1]["s_n"] >= sc.horizon, {"last_s_n": cps[-1]["s_n"]})
    out.certificates["checkpoints"] = cps
    N = min(S.extent or sc.horizon, sc.horizon)
    out.profile("singletons", lambda x: S.size_of(x) == 1, N, sc.tolerance)


@construction("staged-subrelation", ["RB_subset_R", "log_append_only", "e_bound", "divergence_bound"],
              {"structure": "structure", "q": "rational"}, ("structure", "q"),
              "subrelation with computable type sets approximating a (1,2)-structure of density q")
def _subrelation(sc: Scenario, out: Outcome):
    A = make_structure(sc.params["structure"], sc.horizon)
    out.stage = "subrelation"
    sub = staged_subrelation(A, Fraction(str(sc.params["q"])), sc.budget, sc.horizon)
    H = sub.covered
    la = _codes([A.label(x) for x in range(H)])
    lb = _codes([sub.structure.label(x) for x in range(H)])
    bad = None
    for i in range(0, H, 512):
        extra = (lb[i:i + 512, None] == lb[None, :]) & ~(la[i:i + 512, None] == la[None, :])
        if extra.any():
            r, c = np.argwhere(extra)[0]
            bad = (i + int(r), int(c))
            break
    out.check("RB_subset_R", bad is None, {"counterexample": bad, "below": H})
    xs = [x for _, x, _, _ in sub.log]
    steps = [s for s, *_ in sub.log]
    out.check("log_append_only", len(xs) == len(set(xs)) and steps == sorted(steps), {"entries": len(xs)})
    out.check("e_bound", all(c["e_ok"] for c in sub.checkpoints), {"steps": len(sub.checkpoints)})
    out.check("divergence_bound", all(c["divergence_ok"] for c in sub.checkpoints))
    out.certificates["checkpoints"] = sub.records()
    out.profile("B1", sub.B1, H, sc.tolerance)


def _codes(labels) -> np.ndarray:
    index: dict = {}
    return np.array([index.setdefault(l, len(index)) for l in labels], dtype=np.int64)


@construction("interleaved", ["forward_bound", "inverse_bound", "anchored", "injective"],
              {"A": "set", "B": "set", "C": "list", "D": "list", "b_limit": "int"}, ("A", "B"),
              "bijection between dense sets sending C into D with density-zero overflow")
def _interleaved(sc: Scenario, out: Outcome):
    p = sc.params
    C, D = p.get("C", []), p.get("D", [])
    out.stage = "bijection"
    g = interleaved_bijection(make_set(p["A"]), make_set(p["B"]), C, D, sc.horizon, p.get("b_limit"))
    out.check("forward_bound", g.forward_ok, {"first_failure": g.first_failure()})
    out.check("inverse_bound", g.inverse_ok)
    anchored = (g.forward.get(C[0]) == D[0]) if C and D else (
        all(g.forward[x] == y for x, y in zip(g.a, g.b)) if not C and not D else True)
    out.check("anchored", anchored)
    out.check("injective", len(set(g.forward.values())) == len(g.forward), {"mapped": len(g.forward),
                                                                             "warnings": g.warnings})


@construction("weak-coarse-iso", ["case1", "case2", "case3", "complement_identity", "E_density"],
              {"A": "structure", "B": "structure", "q": "rational", "min_E_density": "rational"},
              ("A", "B", "q"), "weakly coarsely computable isomorphism of two (1,2)-structures of density q")
def _weak_coarse(sc: Scenario, out: Outcome):
    p = sc.params
    A = make_structure(p["A"], sc.horizon)
    B = make_structure(p["B"], sc.horizon)
    out.stage = "isomorphism"
    w, rep = weak_coarse_iso_12(A, B, Fraction(str(p["q"])), sc.horizon, sc.budget, tolerance=sc.tolerance)
    for k in ("case1", "case2", "case3"):
        out.check(k, rep["cases"][k]["ok"], rep["cases"][k])
    out.check("complement_identity", rep["complement_identity"])
    floor = Fraction(str(p.get("min_E_density", "9/10")))
    out.check("E_density", rep["E_density"] >= floor, {"E_density": rep["E_density"], "floor": floor,
                                                      "fE_density": rep["fE_density"]})
    out.certificates["subrelation_A"] = rep["subrelation_A"]
    out.certificates["subrelation_B"] = rep["subrelation_B"]
    E = set(w.C)
    out.profile("E", E.__contains__, sc.horizon, sc.tolerance)


@construction("char2-iso", ["injective", "preserves_relation", "domain_density"],
              {"structure": "structure", "pairs": "pairs", "min_density": "rational"}, ("structure", "pairs"),
              "generically computable isomorphism onto dense pairs for generic character {2}")
def _char2(sc: Scenario, out: Outcome):
    S = make_structure(sc.params["structure"], sc.horizon)
    E = make_pairs(sc.params["pairs"], sc.budget, sc.horizon)
    out.stage = "isomorphism"
    w = generic_iso_char2(S, E, sc.horizon)
    v = w.verify(sc.horizon)
    floor = Fraction(str(sc.params.get("min_density", "9/10")))
    out.check("injective", v["injective"])
    out.check("preserves_relation", v["preserves_relation"], {"counterexample": v["counterexample"]})
    out.check("domain_density", v["domain_density"] >= floor,
              {"domain_density": v["domain_density"], "range_density": v["range_density"]})
    out.certificates["warnings"] = v["warnings"]


@construction("char1-iso", ["f_equals_theta_on_C", "injective", "iso_on_C", "C_density"],
              {"A": "structure", "B": "structure", "min_density": "rational"}, ("A", "B"),
              "weakly coarsely computable isomorphism for generic character {1}")
def _char1(sc: Scenario, out: Outcome):
    A = make_structure(sc.params["A"], sc.horizon)
    B = make_structure(sc.params["B"], sc.horizon)
    out.stage = "isomorphism"
    w = coarse_iso_char1(A, B, sc.horizon, sc.tolerance)
    v = w.verify()
    floor = Fraction(str(sc.params.get("min_density", "9/10")))
    out.check("f_equals_theta_on_C", v["f_equals_theta_on_C"])
    out.check("injective", v["injective"])
    out.check("iso_on_C", v["iso_on_C"], {"counterexample": v["counterexample"]})
    out.check("C_density", v["C_density"] >= floor, {"C_density": v["C_density"]})
    out.certificates["notes"] = w.notes


_MAPS = {
    "identity": lambda k=0: (lambda x: x),
    "shift": lambda k=1: (lambda x, k=k: x + k),
    "double": lambda k=0: (lambda x: 2 * x),
    "square": lambda k=0: (lambda x: x * x),
}


@construction("thm12-demo", ["certificate", "avoiding", "hits"],
              {"candidates": "list", "extra": "oracles", "min_avoiding": "int"}, ("candidates",),
              "sparse simple set S; candidate computable maps are forced to misplace elements")
def _thm12(sc: Scenario, out: Outcome):
    cands = []
    for c in sc.params["candidates"]:
        phi = _MAPS[c.get("map", "identity")](c.get("k", 0))
        cands.append(CandidateMap(c.get("name", c.get("map", "identity")), phi,
                                  make_set(c.get("domain", "omega")), c.get("delay", 0)))
    extra = [make_oracle(s, sc.budget) for s in sc.params.get("extra", [])]
    minimum = sc.params.get("min_avoiding", 50)
    out.stage = "sparse-simple-set"
    rep = thm12_demo(cands, sc.budget, extra, minimum)
    out.check("certificate", all(c["ok"] for c in rep["certificate"]), {"kmax": len(rep["certificate"]) - 1})
    out.check("avoiding", all(c["avoiding"] >= minimum for c in rep["candidates"]),
              {c["name"]: c["avoiding"] for c in rep["candidates"]})
    out.check("hits", all(c["hits"] for c in rep["candidates"]),
              {c["name"]: c["hits"][:5] for c in rep["candidates"]})
    out.certificates["S"] = rep["S"]
    out.certificates["density"] = rep["certificate"]
    out.certificates["obstructions"] = [{k: c[k] for k in ("name", "obstruction_size", "obstruction_prefix")}
                                        for c in rep["candidates"]]


def _candidate_problems(params: dict) -> list[str]:
    out = []
    for c in params.get("candidates") or []:
        if not isinstance(c, dict):
            out.append(f"thm12-demo: candidate {c!r} must be a mapping")
        elif c.get("map", "identity") not in _MAPS:
            out.append(f"thm12-demo: unknown map {c.get('map')!r}; known: {sorted(_MAPS)}")
        elif "domain" in c:
            out += check_spec("set", c["domain"])
    return out


_EXTRA_CHECKS = {"thm12-demo": _candidate_problems}
