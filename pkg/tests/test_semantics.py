"""One positive and one negative case per evaluation and decomposition rule."""

from __future__ import annotations

import random

import pytest

from brbo.corelang import (
    Assign,
    Assume,
    Havoc,
    IntLit,
    Path,
    Reset,
    Skip,
    State,
    Step,
    Store,
    UbCheck,
    Use,
)
from brbo.decompose import Decomposition, DecompositionError, conforms, decompose_cmd, transform_program
from brbo.interp import BlockedAssume, NondetTape, Progress, TapeExhausted, ViolatedUb, eval_cmd, eval_meta, path_ok
from brbo.syntax import parse_cmd, parse_expr, parse_program


def store(vars_=None, **res):
    """``store({"x": 1}, r=(value, ub, cnt))`` with resource ``#r``."""
    rs, ub, cnt, lb = {}, {}, {}, {}
    for name, (v, u, c) in res.items():
        key = "#" + name
        rs[key], ub[key], cnt[key], lb[key] = v, u, c, 0
    return Store(dict(vars_ or {}), rs, ub, cnt, lb)


def one_step(s, c, post, havoc=None):
    return Path(State("L0", s), (Step(s, c, State("L1", post), 0, havoc),))


# E-Skip

def test_e_skip_positive():
    s = store({"x": 3}, r=(1, 0, -1))
    assert eval_cmd(s, Skip()) == Progress(s)


def test_e_skip_negative():
    s = store({"x": 3}, r=(1, 0, -1))
    assert not path_ok(one_step(s, Skip(), s.with_var("x", 4)))


# E-Assign

def test_e_assign_positive():
    s = store({"p": 0, "l": 3})
    out = eval_cmd(s, parse_cmd("p := l - p"))
    assert out == Progress(s.with_var("p", 3))


def test_e_assign_negative():
    s = store({"p": 0, "l": 3})
    c = parse_cmd("p := l - p")
    assert not path_ok(one_step(s, c, s.with_var("p", 2)))
    assert not path_ok(one_step(s, c, s.with_var("p", 3).with_var("l", 0)))


# E-Assume

def test_e_assume_positive():
    s = store({"i": 0, "n": 2})
    assert eval_cmd(s, parse_cmd("assume(i < n)")) == Progress(s)


def test_e_assume_negative():
    s = store({"i": 1, "n": 1})
    assert eval_cmd(s, parse_cmd("assume(i < n)")) == BlockedAssume()


# Havoc (the nondeterministic assignment)

def test_havoc_consumes_tape():
    s = store({"x": 0})
    tape = NondetTape([7, 8])
    assert eval_cmd(s, Havoc("x"), tape) == Progress(s.with_var("x", 7))
    assert tape.cursor == 1


def test_havoc_without_tape_entry():
    assert eval_cmd(store({"x": 0}), Havoc("x"), NondetTape([])) == TapeExhausted()


# E-Use

def test_e_use_positive():
    s = store(r=(2, 0, -1))
    out = eval_cmd(s, Use("#r", IntLit(-5)))
    assert out.store.res["#r"] == -3
    assert out.store.vars == s.vars and out.store.ub == s.ub and out.store.cnt == s.cnt


def test_e_use_negative():
    s = store({"e": 4}, r=(2, 0, -1))
    c = parse_cmd("use #r (e)")
    assert not path_ok(one_step(s, c, s.with_resource("#r", 5)))
    assert path_ok(one_step(s, c, s.with_resource("#r", 6)))


# E-UBCheck

def test_e_ubcheck_pass():
    s = store(r=(1, 4, 2))
    assert eval_cmd(s, UbCheck(("#r",), IntLit(10))) == Progress(s)
    fresh = store(r=(0, 0, -1))
    assert eval_cmd(fresh, UbCheck(("#r",), IntLit(0))) == Progress(fresh)


def test_e_ubcheck_fail():
    s = store(r=(1, 4, 2))
    assert eval_cmd(s, UbCheck(("#r",), IntLit(8))) == ViolatedUb(("#r",), 8, 9)


# E-Reset

def test_e_reset_positive():
    s = store(r=(5, 3, 0))
    out = eval_cmd(s, Reset("#r")).store
    assert (out.res["#r"], out.ub["#r"], out.cnt["#r"]) == (0, 5, 1)
    assert out.lb["#r"] == 0


def test_e_reset_negative():
    s = store(r=(5, 3, 0))
    keeps_value = Store(s.vars, {"#r": 5}, {"#r": 5}, {"#r": 1}, s.lb)
    assert not path_ok(one_step(s, Reset("#r"), keeps_value))
    no_count = Store(s.vars, {"#r": 0}, {"#r": 5}, {"#r": 0}, s.lb)
    assert not path_ok(one_step(s, Reset("#r"), no_count))


def test_e_reset_keeps_larger_ub_and_tracks_lb():
    s = Store({}, {"#r": -2}, {"#r": 7}, {"#r": 3}, {"#r": 0})
    out = eval_cmd(s, Reset("#r")).store
    assert out.ub["#r"] == 7 and out.lb["#r"] == -2 and out.cnt["#r"] == 4


def reset_algebra_violations(n: int, seed: int) -> tuple[int, list]:
    """Apply a reset to ``n`` random reachable-shaped stores; list broken invariants."""
    rng = random.Random(seed)
    bad = []
    for _ in range(n):
        cnt = rng.randint(-1, 20)
        if cnt == -1:
            # no reset yet; dominating resets mean no use has happened either
            r = ub = lb = 0
        else:
            r = rng.randint(-50, 50)
            ub = rng.randint(0, 50)
            lb = rng.randint(-50, 0)
        s = Store({"x": rng.randint(-5, 5)}, {"#r": r}, {"#r": ub}, {"#r": cnt}, {"#r": lb})
        out = eval_cmd(s, Reset("#r")).store
        checks = {
            "r is 0": out.res["#r"] == 0,
            "ub monotone": out.ub["#r"] >= ub and out.ub["#r"] >= r,
            "cnt + 1": out.cnt["#r"] == cnt + 1,
            "lb monotone": out.lb["#r"] <= lb,
            "vars kept": out.vars == s.vars,
            "sum kept": out.summary_sum(["#r"]) >= s.summary_sum(["#r"]),
        }
        bad += [(name, s) for name, ok in checks.items() if not ok]
    return n, bad


def test_reset_algebra_on_random_stores():
    n, bad = reset_algebra_violations(10_000, seed=2024)
    assert bad == []


def test_summary_can_drop_if_used_before_first_reset():
    # why resets must dominate their uses: cnt = -1 hides earlier usage
    s = Store({}, {"#r": 5}, {"#r": 0}, {"#r": -1}, {"#r": 0})
    out = eval_cmd(s, Reset("#r")).store
    assert out.summary_sum(["#r"]) < s.summary_sum(["#r"])


# Decomposition rules

D3 = Decomposition(
    {"#sb": ("#sb1", "#sb2", "#sb3")},
    {"chunk>chunk_check#0": "#sb1", "rep>rep_check#0": "#sb2"},
)


def test_d_use_positive():
    c = parse_cmd("use #sb (l - p)")
    assert decompose_cmd(D3, "chunk>chunk_check#0", c) == parse_cmd("use #sb1 (l - p)")


def test_d_use_negative():
    with pytest.raises(DecompositionError):
        decompose_cmd(D3, "nowhere>else#0", parse_cmd("use #sb (1)"))


def test_d_ubcheck_positive():
    c = parse_cmd("ub!(#sb <= #ts * (#text + #tags * ts#rep + #sep))")
    assert decompose_cmd(D3, None, c) == UbCheck(("#sb1", "#sb2", "#sb3"), c.bound)


def test_d_ubcheck_negative():
    d = Decomposition({"#a": ("#a1", "#a2"), "#b": ("#b1",)}, {})
    out = decompose_cmd(d, None, UbCheck(("#b",), IntLit(3)))
    assert out.resources == ("#b1",)
    assert "#a1" not in out.resources


def test_d_reset_positive():
    p = parse_program(
        "program t\ninputs\nresources #r\nentry a\n"
        "edge a -> b : use #r (2)\nedge b -> c : use #r (3)\n"
    )
    d = Decomposition({"#r": ("#r1", "#r2")}, {"a>b#0": "#r1", "b>c#0": "#r2"}, {"#r2": ("b",)})
    q = transform_program(p, d)
    assert q.edges[-1].cmd == Reset("#r2")
    assert q.edges[-1].dst == "b"
    assert q.edges[0].dst == q.edges[-1].src
    before = Store({}, {"#r1": 2, "#r2": 0}, {"#r1": 0, "#r2": 0}, {"#r1": -1, "#r2": -1}, {"#r1": 0, "#r2": 0})
    after = eval_cmd(before, Reset("#r2")).store
    assert after.cnt["#r2"] == 0
    orig = Store({}, {"#r": 2}, {}, {}, {})
    assert conforms(orig, after, d).conforming


def test_d_reset_negative():
    with pytest.raises(ValueError):
        decompose_cmd(D3, None, Reset("#sb"))


def test_d_command_positive():
    for text in ["skip", "p := r", "x := *", "assume(i < n)"]:
        c = parse_cmd(text)
        assert decompose_cmd(D3, None, c) == c


def test_d_command_negative():
    c = parse_cmd("use #sb (1)")
    assert decompose_cmd(D3, "rep>rep_check#0", c) != c


def test_meta_predicates_see_summaries():
    s = store({"i": 2}, sb1=(1, 3, 2))
    assert eval_meta(s, parse_expr("cnt#sb1 == i && ub#sb1 == 3 && #sb1 <= 1"))
