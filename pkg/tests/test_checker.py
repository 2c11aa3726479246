"""Owned-variable computation and assertion discharge."""

import json

from racefree import corpus
from racefree.checker import (
    check_assertions,
    compute_owned_oracle,
    compute_owned_static,
    emit_report,
    must_hold_locksets,
    report_to_dict,
)
from racefree.concrete import enumerate_executions
from racefree.engine import AnalysisConfig, analyze_fixpoint
from racefree.lang import desugar, eval_bool, parse_program
from racefree.syncfg import build_syncfg


def analyze(p, **kw):
    cfg = AnalysisConfig(**kw)
    return analyze_fixpoint(p, build_syncfg(p), cfg), cfg


# ---------------------------------------------------------------------------
# owned sets


def test_must_hold_locksets(coupled_xy):
    must = must_hold_locksets(coupled_xy)
    assert must[("t1", 1)] == frozenset()
    assert must[("t1", 3)] == frozenset({"m"})
    assert must[("t1", 7)] == frozenset()
    assert must[("t2", 11)] == frozenset({"m"})


def test_static_owned_coupled_xy(coupled_xy):
    owned = compute_owned_static(coupled_xy)
    assert owned.owned("t1", 3) == frozenset({"x", "y"})
    assert owned.owned("t2", 9) == frozenset({"z"})
    assert owned.owned("t2", 11) == frozenset({"x", "y", "z"})
    assert "z" not in owned.owned("t1", 3)


def test_static_owned_single_thread():
    p = desugar(parse_program("var x, y;\nthread t { x := y; }"))
    owned = compute_owned_static(p)
    for loc in p.threads[0].locations:
        assert owned.owned("t", loc) == frozenset({"x", "y"})


def test_static_owned_gap_on_flag_handoff(flag_handoff):
    """x is semantically owned at t2's unprotected accesses but not statically."""
    static = compute_owned_static(flag_handoff)
    assert "x" not in static.owned("t2", 12)
    oracle = compute_owned_oracle(flag_handoff, 12, locations=[("t2", 12)])
    assert "x" in oracle.owned("t2", 12)


def test_static_is_subset_of_oracle_on_corpus():
    for name in corpus.names():
        p = corpus.load(name)
        static = compute_owned_static(p)
        locations = [(t.name, loc) for t in p.threads for loc in sorted(t.locations)]
        oracle = compute_owned_oracle(p, 12, locations=locations)
        for key in locations:
            assert static.table[key] <= oracle.table[key], (name, key)


# ---------------------------------------------------------------------------
# assertion discharge


def test_report_verdicts_per_analysis(coupled_xy, coupled_xy_regions):
    owned = compute_owned_static(coupled_xy)
    expectations = {
        ("regrel", "octagon"): {5: True, 9: True, 11: True},
        ("rel", "octagon"): {5: True, 9: True, 11: False},
        ("valset", "interval"): {5: False, 9: True, 11: False},
    }
    for (analysis, domain), want in expectations.items():
        facts, cfg = analyze(coupled_xy, analysis=analysis, domain=domain,
                             regions=coupled_xy_regions)
        report = check_assertions(coupled_xy, facts, owned, cfg, "coupled_xy")
        got = {a.location: a.proved for a in report.assertions}
        assert got == want, analysis


def test_assert_true_is_proved():
    p = desugar(parse_program("var x;\nthread t { x := 1; assert(true); }"))
    facts, cfg = analyze(p, analysis="rel", domain="octagon")
    report = check_assertions(p, facts, compute_owned_static(p), cfg)
    assert report.assertions[0].proved


def test_unowned_variable_blocks_proof():
    # y written by the other thread with no lock anywhere: never owned at the assert
    src = "var y;\nthread a { assert(y == 0); }\nthread b { y := 1; }"
    p = desugar(parse_program(src))
    facts, cfg = analyze(p, analysis="rel", domain="octagon")
    report = check_assertions(p, facts, compute_owned_static(p), cfg)
    (a,) = report.assertions
    assert not a.proved
    assert a.reason == "unowned variable in condition"


def test_proved_monotone_in_owned_set(flag_handoff):
    facts, cfg = analyze(flag_handoff, analysis="rel", domain="octagon")
    static = compute_owned_static(flag_handoff)
    locs = [(a.thread, a.location) for a in flag_handoff.assertions]
    oracle = compute_owned_oracle(flag_handoff, 12, locations=locs)
    proved_static = {a.location for a in check_assertions(
        flag_handoff, facts, static, cfg).assertions if a.proved}
    proved_oracle = {a.location for a in check_assertions(
        flag_handoff, facts, oracle, cfg).assertions if a.proved}
    assert proved_static <= proved_oracle
    assert 13 in proved_oracle


def test_proved_assertions_hold_in_bounded_executions(coupled_xy, coupled_xy_regions):
    """Desk-scale soundness: Proved conditions hold whenever the thread sits
    at the assert location in any execution up to the test depth."""
    facts, cfg = analyze(coupled_xy, analysis="regrel", domain="octagon",
                         regions=coupled_xy_regions)
    report = check_assertions(coupled_xy, facts, compute_owned_static(coupled_xy), cfg)
    proved = {(a.thread, a.location) for a in report.assertions if a.proved}
    assert proved
    by_loc = {a.location: a for a in coupled_xy.assertions}
    var_order = coupled_xy.variables
    for e in enumerate_executions(coupled_xy, 12):
        state = e.final
        for tid, t in enumerate(coupled_xy.threads):
            loc = state.pc[tid]
            if (t.name, loc) in proved:
                env = dict(zip(var_order, state.phi))
                assert eval_bool(by_loc[loc].cond, env), (t.name, loc, env)


# ---------------------------------------------------------------------------
# report formats


def test_json_schema_shape(coupled_xy, coupled_xy_regions):
    facts, cfg = analyze(coupled_xy, analysis="regrel", domain="octagon",
                         regions=coupled_xy_regions)
    report = check_assertions(coupled_xy, facts, compute_owned_static(coupled_xy),
                              cfg, "coupled_xy")
    report.timing_ms = {"analysis": 0, "total": 0}
    blob = json.loads(emit_report(report, "json"))
    assert blob["program"] == "coupled_xy"
    assert blob["analysis"] == "regrel" and blob["domain"] == "octagon"
    assert {"name", "vars"} <= set(blob["regions"][0])
    entry = blob["assertions"][0]
    assert {"location", "thread", "condition", "proved", "fact", "owned"} <= set(entry)
    assert blob["races"] is None
    assert blob["timing_ms"] == {"analysis": 0, "total": 0}


def test_text_format_lines(coupled_xy, coupled_xy_regions):
    facts, cfg = analyze(coupled_xy, analysis="regrel", domain="octagon",
                         regions=coupled_xy_regions)
    report = check_assertions(coupled_xy, facts, compute_owned_static(coupled_xy), cfg)
    text = emit_report(report, "text")
    assert "loc 11 [t2] assert(x == y): PROVED" in text


def test_unproved_entry_carries_fact_string(coupled_xy):
    facts, cfg = analyze(coupled_xy, analysis="valset", domain="interval")
    report = check_assertions(coupled_xy, facts, compute_owned_static(coupled_xy), cfg)
    unproved = [a for a in report.assertions if not a.proved]
    assert unproved and all(a.fact for a in unproved)


def test_program_without_assertions():
    p = desugar(parse_program("var x;\nthread t { x := 1; }"))
    facts, cfg = analyze(p, analysis="rel", domain="octagon")
    report = check_assertions(p, facts, compute_owned_static(p), cfg)
    assert report.assertions == []
    assert report.all_proved
    assert report_to_dict(report)["assertions"] == []
