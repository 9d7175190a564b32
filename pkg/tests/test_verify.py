from __future__ import annotations

import itertools

import pytest

from brbo.corelang import LbCheck, UbCheck, initial_store
from brbo.decompose import transform_program
from brbo.interp import ResourceLimitError, ViolatedUb, enumerate_paths, eval_cmd, eval_expr, path_in_program, path_ok
from brbo.select import select
from brbo.syntax import parse_expr, parse_program
from brbo.verify import (
    NoViolationUpToBounds,
    PredicateFailed,
    ResourceLimit,
    Violation,
    bounded_verify,
    check_predicate_at,
    input_vectors,
    max_resource,
    noninterference_probe,
    predicate_failures,
    verdict_to_json,
)

from conftest import FIG2A_INPUTS, corpus_text, load, validate

B = "#ts * (#text + #tags * ts#rep + #sep)"


def uniform(p, values):
    return {x: values for x in p.inputs}


def fig2a_weakened():
    return parse_program(corpus_text("fig2a.brbo").replace(f"<= {B})", f"<= {B} - 1)"))


def test_input_vectors_are_lexicographic_and_filtered():
    p = parse_program("program t\ninputs a, b\npre a <= b\nresources #r\nentry l\nedge l -> m : skip\n")
    vecs = list(input_vectors(p, {"a": range(3), "b": range(3)}))
    assert vecs == [{"a": a, "b": b} for a, b in itertools.product(range(3), range(3)) if a <= b]


def test_original_fig2a_passes_small_domain(fig2a):
    v = bounded_verify(fig2a, uniform(fig2a, range(2)), range(4), 400)
    assert isinstance(v, NoViolationUpToBounds)
    assert v.inputs == 32 and v.states > 0 and v.fuel == 400


def test_weakened_bound_gives_replayable_violation():
    p = fig2a_weakened()
    ones = {x: range(1, 2) for x in FIG2A_INPUTS}
    v = bounded_verify(p, ones, range(4), 400)
    assert isinstance(v, Violation)
    assert v.inputs == dict.fromkeys(FIG2A_INPUTS, 1)
    assert isinstance(v.outcome, ViolatedUb)
    # B - 1 = 2 at all-ones inputs, so the failing state has #sb = 3
    assert v.outcome.bound == 2 and v.outcome.actual == 3
    assert path_in_program(p, v.path)
    last = v.path.last
    assert last.loc == p.edges[v.edge].src
    assert eval_cmd(last.store, p.edges[v.edge].cmd) == v.outcome


def test_violation_is_first_in_input_order():
    p = fig2a_weakened()
    v = bounded_verify(p, uniform(p, range(3)), range(4), 400)
    assert isinstance(v, Violation)
    # one outer iteration with everything else 0 makes the bound -1
    assert v.inputs == dict(zip(FIG2A_INPUTS, (1, 0, 0, 0, 0)))
    key = [v.inputs[x] for x in p.inputs]
    earlier = [vec for vec in input_vectors(p, uniform(p, range(3))) if [vec[x] for x in p.inputs] < key]
    assert earlier
    for vec in earlier:
        assert isinstance(bounded_verify(p, {x: [vec[x]] for x in p.inputs}, range(4), 400), NoViolationUpToBounds)


def test_state_cap_gives_resource_limit(fig2a):
    v = bounded_verify(fig2a, uniform(fig2a, range(3)), range(4), 400, cap=50)
    # the cap is shared, so the cheap #ts = 0 vectors run before it trips
    assert v == ResourceLimit(50, 17)
    with pytest.raises(ResourceLimitError):
        max_resource(fig2a, "#sb", dict(zip(FIG2A_INPUTS, (2, 3, 2, 1, 1))), range(4), 400, cap=50)


def test_state_cap_from_environment(fig2a, monkeypatch):
    monkeypatch.setenv("BRBO_STATE_CAP", "10")
    assert isinstance(bounded_verify(fig2a, uniform(fig2a, range(3)), range(4), 400), ResourceLimit)


# --------------------------------------------------------------------------
# max_resource
# --------------------------------------------------------------------------


def test_max_resource_equals_bound_at_reference_inputs(fig2a):
    vec = dict(zip(FIG2A_INPUTS, (2, 3, 2, 1, 1)))
    bound = eval_expr(initial_store(fig2a, vec), parse_expr(B))
    assert bound == 12
    assert max_resource(fig2a, "#sb", vec, range(4), 400) == 12


def test_max_resource_zero_outer_iterations(fig2a):
    for rest in itertools.product(range(3), repeat=4):
        vec = dict(zip(FIG2A_INPUTS, (0, *rest)))
        assert max_resource(fig2a, "#sb", vec, range(4), 400) == 0


def test_max_resource_is_prefix_maximum():
    p = parse_program("program t\ninputs\nresources #r\nentry a\nedge a -> b : use #r (3)\nedge b -> c : use #r (-1)\n")
    assert max_resource(p, "#r", {}, range(1), 10) == 3


def test_max_resource_rejects_unknown_resource(fig2a):
    with pytest.raises(KeyError):
        max_resource(fig2a, "#nope", dict.fromkeys(FIG2A_INPUTS, 0), range(1), 10)


# --------------------------------------------------------------------------
# check_predicate_at
# --------------------------------------------------------------------------


def test_false_predicate_at_reachable_location(fig2a):
    v = check_predicate_at(fig2a, "outer_head", parse_expr("false"), uniform(fig2a, range(1)), range(1), 50)
    assert isinstance(v, Violation)
    assert v.edge is None and v.outcome == PredicateFailed("outer_head", parse_expr("false"))
    assert v.path.last.loc == "outer_head"
    assert path_in_program(fig2a, v.path)


def test_predicate_at_unreachable_location_holds():
    p = load("branches.brbo")
    v = check_predicate_at(p, "orphan", parse_expr("false"), uniform(p, range(3)), range(3), 50)
    assert isinstance(v, NoViolationUpToBounds)


def test_predicate_sees_summaries(fig2a):
    p = transform_program(fig2a, select(fig2a)[0])
    pred = parse_expr("ub#sb_1 <= #text && #sb_1 <= p && cnt#sb_2 >= -1 && lb#sb_3 == 0")
    v = check_predicate_at(p, "inner_body", pred, uniform(p, range(2)), range(3), 400)
    assert isinstance(v, NoViolationUpToBounds)


def test_predicate_unknown_location(fig2a):
    with pytest.raises(KeyError):
        check_predicate_at(fig2a, "nowhere", parse_expr("true"), uniform(fig2a, range(1)), range(1), 5)


def test_predicate_failures_collects_states(fig2a):
    fails, n_in, n_st = predicate_failures(
        fig2a, "inner_body", parse_expr("j == 0"), uniform(fig2a, range(3)), range(3), 400, limit=4
    )
    assert 1 <= len(fails) <= 4
    assert all(st.loc == "inner_body" and st.store.vars["j"] != 0 for _, st in fails)
    assert n_in >= 1 and n_st > 0


# --------------------------------------------------------------------------
# Verifier and independent path re-scan agree
# --------------------------------------------------------------------------


SMALL = [
    ("accumulate.brbo", None),
    ("accumulate.brbo", ("n * k)", "n * k - 1)")),
    ("branches.brbo", None),
    ("nested.brbo", None),
    ("nested.brbo", ("cols))", "cols) - 2)")),
]


def _rescan(p, domain, havoc, fuel) -> bool:
    """True when some enumerated path reaches a failing bound check."""
    for vec in input_vectors(p, domain):
        for ev in enumerate_paths(p, initial_store(p, vec), havoc, fuel):
            for rep in ev.violations:
                e = p.edges[rep.edge]
                assert isinstance(e.cmd, (UbCheck, LbCheck))
                return True
    return False


@pytest.mark.parametrize("name,patch", SMALL)
def test_verifier_agrees_with_path_rescan(name, patch):
    text = corpus_text(name)
    if patch is not None:
        assert patch[0] in text
        text = text.replace(patch[0], patch[1])
    p = parse_program(text)
    domain = uniform(p, range(2))
    v = bounded_verify(p, domain, range(2), 40)
    assert isinstance(v, (NoViolationUpToBounds, Violation))
    assert isinstance(v, Violation) == _rescan(p, domain, range(2), 40)
    if isinstance(v, Violation):
        assert path_ok(v.path) and path_in_program(p, v.path)


def test_soundness_transfers_to_original_bound(fig2a):
    d, _ = select(fig2a)
    dec = transform_program(fig2a, d)
    domain = uniform(fig2a, range(2))
    assert isinstance(bounded_verify(dec, domain, range(3), 400), NoViolationUpToBounds)
    bound = parse_expr(B)
    for vec in input_vectors(fig2a, domain):
        top = max_resource(fig2a, "#sb", vec, range(3), 400)
        assert top <= eval_expr(initial_store(fig2a, vec), bound)


# --------------------------------------------------------------------------
# Non-interference probe
# --------------------------------------------------------------------------


def probe_program(amount: str):
    return parse_program(
        "program t\ninputs n\npre 1 <= n\nresources #r\nentry a\n"
        "edge a -> b : i := 0\nedge b -> c : assume(i < n)\nedge b -> z : assume(i >= n)\n"
        "edge c -> h : h := *\nedge h -> d : assume(0 <= h && h <= 2)\n"
        f"edge d -> e : reset #r\nedge e -> f : use #r ({amount})\nedge f -> b : i := i + 1\n"
    )


def test_probe_constant_segment_has_no_spread():
    p = probe_program("5")
    rep = noninterference_probe(p, "#r", "d", ("i",), 200, 1, {"n": range(1, 4)}, range(3), 60)
    assert rep.segments > 0 and rep.pairs > 0
    assert rep.all_equal and rep.max_difference == 0


def test_probe_high_variable_segment_shows_spread():
    p = probe_program("h")
    rep = noninterference_probe(p, "#r", "d", ("i",), 200, 1, {"n": range(1, 4)}, range(3), 60)
    assert not rep.all_equal
    assert rep.max_difference == 2
    assert set(rep.differences) <= {0, 1, 2}


def test_probe_with_amount_as_low_variable():
    p = probe_program("h")
    rep = noninterference_probe(p, "#r", "d", ("h",), 200, 1, {"n": range(1, 4)}, range(3), 60)
    assert rep.pairs > 0 and rep.all_equal


def test_probe_is_deterministic_and_serializable(fig2a):
    dec = transform_program(fig2a, select(fig2a)[0])
    args = (dec, "#sb_1", "inner_init", ("p",), 100, 3, uniform(dec, range(3)), range(4), 200)
    a, b = noninterference_probe(*args), noninterference_probe(*args)
    assert a.to_json() == b.to_json()
    validate(a.to_json(), "probe.schema.json")


def test_probe_requires_reset():
    p = parse_program("program t\ninputs\nresources #r\nentry a\nedge a -> b : use #r (1)\n")
    with pytest.raises(ValueError):
        noninterference_probe(p, "#r", "a", (), 10, 0, {}, range(1), 5)


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def test_verdicts_match_schema(fig2a):
    verdicts = [
        bounded_verify(fig2a, uniform(fig2a, range(2)), range(2), 100),
        bounded_verify(fig2a, uniform(fig2a, range(3)), range(4), 400, cap=20),
        bounded_verify(fig2a_weakened(), {x: [1] for x in FIG2A_INPUTS}, range(4), 400),
        check_predicate_at(fig2a, "outer_head", parse_expr("false"), uniform(fig2a, range(1)), range(1), 5),
    ]
    kinds = [verdict_to_json(v)["verdict"] for v in verdicts]
    assert kinds == ["no-violation", "resource-limit", "violation", "violation"]
    for v in verdicts:
        validate(verdict_to_json(v), "verdict.schema.json")
