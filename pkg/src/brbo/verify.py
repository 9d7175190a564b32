"""Bounded exhaustive checking of bound assertions and location predicates.

Every input vector in a finite domain that satisfies the precondition is
explored over all havoc choices in a finite range, up to a step budget.
Reachable states are deduplicated, so the cost is the number of distinct
states rather than the number of paths.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from .corelang import Expr, Path, Program, Reset, State, Store, initial_store
from .interp import (
    ResourceLimitError,
    Successor,
    ViolatedLb,
    ViolatedUb,
    eval_expr,
    eval_meta,
    explore,
    is_violation,
    sample_path,
    state_cap,
    trace_to_json,
)
from .syntax import format_expr


@dataclass(frozen=True)
class PredicateFailed:
    loc: str
    pred: Expr


@dataclass(frozen=True)
class NoViolationUpToBounds:
    inputs: int
    states: int
    fuel: int

    kind = "no-violation"


@dataclass(frozen=True)
class Violation:
    inputs: dict[str, int]
    path: Path
    edge: int | None  # the failing check edge; None for predicate failures
    outcome: ViolatedUb | ViolatedLb | PredicateFailed
    values: dict

    kind = "violation"


@dataclass(frozen=True)
class ResourceLimit:
    cap: int
    inputs: int

    kind = "resource-limit"


Verdict = NoViolationUpToBounds | Violation | ResourceLimit


def input_vectors(p: Program, input_domain: Mapping[str, Sequence[int]]) -> Iterator[dict[str, int]]:
    """Lexicographic input vectors (in declared input order) satisfying ``p.pre``."""
    names = list(p.inputs)
    for values in itertools.product(*(list(input_domain[x]) for x in names)):
        vec = dict(zip(names, values))
        if eval_expr(Store(vec), p.pre):
            yield vec


def _search(p, input_domain, havoc_domain, fuel, cap, on_state=None, on_blocked=None):
    """Explore every input vector; callbacks see ``(vec, exp, state[, succ])``.

    Returns ``(verdict or None, inputs, states)``; a callback returning a
    verdict stops the search with it.
    """
    cap = state_cap() if cap is None else cap
    n_inputs = 0
    n_states = 0
    for vec in input_vectors(p, input_domain):
        n_inputs += 1
        found: list = []

        def st_cb(exp, st, vec=vec):
            v = on_state(vec, exp, st)
            if v is not None:
                found.append(v)
            return v is not None

        def bl_cb(exp, st, succ, vec=vec):
            v = on_blocked(vec, exp, st, succ)
            if v is not None:
                found.append(v)
            return v is not None

        init = initial_store(p, vec)
        try:
            _, count = explore(
                p,
                init,
                havoc_domain,
                fuel,
                cap - n_states,
                st_cb if on_state is not None else None,
                bl_cb if on_blocked is not None else None,
            )
        except ResourceLimitError:
            return ResourceLimit(cap, n_inputs), n_inputs, cap
        n_states += count
        if found:
            return found[0], n_inputs, n_states
    return None, n_inputs, n_states


def bounded_verify(
    p: Program,
    input_domain: Mapping[str, Sequence[int]],
    havoc_domain: Sequence[int],
    fuel: int,
    cap: int | None = None,
) -> Verdict:
    """Check every ``ub!``/``lb!`` on every state reachable within the bounds.

    The first violation in exploration order (inputs lexicographic, then
    breadth first, edges in list order) is returned with a shortest witness.
    """

    def blocked(vec, exp, st, succ: Successor):
        if is_violation(succ.outcome):
            return Violation(dict(vec), exp.path_to(st), succ.edge, succ.outcome, st.store.to_json())
        return None

    verdict, n_in, n_st = _search(p, input_domain, havoc_domain, fuel, cap, on_blocked=blocked)
    return verdict or NoViolationUpToBounds(n_in, n_st, fuel)


def max_resource(
    p: Program,
    resource: str,
    inputs: Mapping[str, int],
    havoc_domain: Sequence[int],
    fuel: int,
    cap: int | None = None,
) -> int:
    """Largest value of ``resource`` over all states reachable within ``fuel`` steps."""
    if resource not in p.resources:
        raise KeyError(f"undeclared resource {resource!r}")
    best = [initial_store(p, inputs).res[resource]]

    def track(exp, st: State):
        v = st.store.res[resource]
        if v > best[0]:
            best[0] = v

    explore(p, initial_store(p, inputs), havoc_domain, fuel, cap, track)
    return best[0]


def predicate_failures(
    p: Program,
    loc: str,
    pred: Expr,
    input_domain: Mapping[str, Sequence[int]],
    havoc_domain: Sequence[int],
    fuel: int,
    cap: int | None = None,
    limit: int | None = None,
) -> tuple[list[tuple[dict, State]], int, int]:
    """States at ``loc`` where the meta-level ``pred`` is false.

    Returns the failures (at most ``limit`` per run), the number of input
    vectors and the number of states explored.
    """
    if loc not in p.locations:
        raise KeyError(f"unknown location {loc!r}")
    failures: list[tuple[dict, State]] = []

    def check(vec, exp, st):
        if st.loc == loc and not eval_meta(st.store, pred):
            failures.append((dict(vec), st))
            if limit is not None and len(failures) >= limit:
                return True
        return None

    verdict, n_in, n_st = _search(p, input_domain, havoc_domain, fuel, cap, on_state=check)
    if isinstance(verdict, ResourceLimit):
        raise ResourceLimitError(verdict.cap)
    return failures, n_in, n_st


def check_predicate_at(
    p: Program,
    loc: str,
    pred: Expr,
    input_domain: Mapping[str, Sequence[int]],
    havoc_domain: Sequence[int],
    fuel: int,
    cap: int | None = None,
) -> Verdict:
    """Evaluate ``pred`` on every reachable state at ``loc``.

    ``pred`` may mention resources and their summaries (``ub#r``,
    ``cnt#r``, ``lb#r``) next to program variables.
    """
    if loc not in p.locations:
        raise KeyError(f"unknown location {loc!r}")

    def check(vec, exp, st):
        if st.loc == loc and not eval_meta(st.store, pred):
            return Violation(dict(vec), exp.path_to(st), None, PredicateFailed(loc, pred), st.store.meta_env())
        return None

    verdict, n_in, n_st = _search(p, input_domain, havoc_domain, fuel, cap, on_state=check)
    return verdict or NoViolationUpToBounds(n_in, n_st, fuel)


# --------------------------------------------------------------------------
# Non-interference probe
# --------------------------------------------------------------------------


@dataclass
class ProbeReport:
    resource: str
    reset_loc: str
    low_vars: tuple[str, ...]
    segments: int = 0
    pairs: int = 0
    differences: Counter = field(default_factory=Counter)

    @property
    def max_difference(self) -> int:
        return max(self.differences, default=0)

    @property
    def all_equal(self) -> bool:
        return self.pairs > 0 and set(self.differences) == {0}

    def to_json(self) -> dict:
        return {
            "resource": self.resource,
            "reset_loc": self.reset_loc,
            "low_vars": list(self.low_vars),
            "segments": self.segments,
            "pairs": self.pairs,
            "max_difference": self.max_difference,
            "differences": {str(k): v for k, v in sorted(self.differences.items())},
        }


def _segments(p: Program, tr: Path, resource: str, reset_loc: str, low_vars) -> list[tuple[tuple, tuple, int]]:
    """Completed segments of ``tr``: (low values, high values, usage at end)."""
    out = []
    start: Store | None = None
    for s in tr.steps:
        if isinstance(s.cmd, Reset) and s.cmd.resource == resource:
            if start is not None:
                out.append(_segment_key(start, low_vars) + (s.pre.res[resource],))
                start = None
            src = p.edges[s.edge].src if s.edge is not None else None
            if reset_loc in (s.post.loc, src):
                start = s.post.store
    last = tr.last
    if start is not None and not p.out_edges[last.loc]:
        out.append(_segment_key(start, low_vars) + (last.store.res[resource],))
    return out


def _segment_key(st: Store, low_vars) -> tuple[tuple, tuple]:
    low = tuple(st.vars[x] for x in low_vars)
    high = tuple(sorted((k, v) for k, v in st.vars.items() if k not in low_vars))
    return low, high


def noninterference_probe(
    p: Program,
    resource: str,
    reset_loc: str,
    low_vars: Sequence[str],
    trials: int,
    seed: int,
    input_domain: Mapping[str, Sequence[int]],
    havoc_domain: Sequence[int],
    fuel: int,
    max_pairs: int = 10_000,
) -> ProbeReport:
    """Spread of segment usage among segments that start with equal low values.

    Segments begin right after a ``reset resource`` at ``reset_loc`` and end
    at the next reset of the resource or at an exit. Random runs are pooled;
    segments with equal low values but different high values are paired.
    Diagnostic only: a zero spread is evidence, not proof.
    """
    if not any(isinstance(e.cmd, Reset) and e.cmd.resource == resource for e in p.edges):
        raise ValueError(f"no reset of {resource!r} in the program")
    low_vars = tuple(low_vars)
    report = ProbeReport(resource, reset_loc, low_vars)
    rng = random.Random(seed)
    vectors = list(input_vectors(p, input_domain))
    if not vectors:
        return report
    pool: dict[tuple, list[tuple[tuple, int]]] = {}
    for _ in range(trials):
        vec = rng.choice(vectors)
        tr = sample_path(p, initial_store(p, vec), havoc_domain, fuel, rng)
        for low, high, usage in _segments(p, tr, resource, reset_loc, low_vars):
            report.segments += 1
            pool.setdefault(low, []).append((high, usage))
    for low in sorted(pool, key=repr):
        segs = pool[low]
        for (h1, u1), (h2, u2) in itertools.combinations(segs, 2):
            if report.pairs >= max_pairs:
                return report
            if h1 == h2:
                continue
            report.pairs += 1
            report.differences[abs(u1 - u2)] += 1
    return report


def verdict_to_json(v: Verdict) -> dict:
    if isinstance(v, NoViolationUpToBounds):
        return {"verdict": v.kind, "inputs": v.inputs, "states": v.states, "fuel": v.fuel}
    if isinstance(v, ResourceLimit):
        return {"verdict": v.kind, "cap": v.cap, "inputs": v.inputs}
    out = v.outcome
    if isinstance(out, PredicateFailed):
        check = {"kind": "predicate", "loc": out.loc, "pred": format_expr(out.pred)}
    elif isinstance(out, ViolatedUb):
        check = {"kind": "ub", "resources": list(out.resources), "bound": out.bound, "actual": out.actual}
    else:
        check = {"kind": "lb", "bound": out.bound, "actual": out.actual}
    return {
        "verdict": v.kind,
        "inputs": v.inputs,
        "edge": v.edge,
        "check": check,
        "values": v.values,
        "trace": trace_to_json(v.path),
    }
