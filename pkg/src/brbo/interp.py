"""Concrete semantics: expression and command evaluation, program steps,
bounded path enumeration and replay.

Nondeterminism has two sources. ``Havoc`` draws a value (from a tape when
replaying, from an integer range when enumerating) and a location may
have several enabled out-edges, all of which are explored.
"""

from __future__ import annotations

import os
import random
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, Mapping, Sequence

from .corelang import (
    Assign,
    Assume,
    BinOp,
    BoolLit,
    Cmd,
    Expr,
    Havoc,
    IntLit,
    LbCheck,
    Neg,
    Not,
    Path,
    Program,
    Reset,
    Skip,
    State,
    Step,
    Store,
    UbCheck,
    Use,
    Value,
    Var,
)
from .syntax import format_cmd

DEFAULT_STATE_CAP = 10_000_000


def state_cap() -> int:
    return int(os.environ.get("BRBO_STATE_CAP", DEFAULT_STATE_CAP))


class EvaluationError(Exception):
    """An expression referenced a name missing from the store."""


class ResourceLimitError(RuntimeError):
    """Exhaustive exploration visited more nodes than the configured cap."""

    def __init__(self, cap: int):
        self.cap = cap
        super().__init__(f"state cap of {cap} exceeded")


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------

_BINARY: dict[str, Callable[[Value, Value], Value]] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "min": min,
    "max": max,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
    "&&": lambda a, b: a and b,
    "||": lambda a, b: a or b,
}

_compiled: dict[int, tuple[Expr, Callable[[Mapping[str, Value]], Value]]] = {}


def _compile(e: Expr) -> Callable[[Mapping[str, Value]], Value]:
    if isinstance(e, Var):
        name = e.name

        def lookup(env):
            try:
                return env[name]
            except KeyError:
                raise EvaluationError(f"unbound variable {name!r}") from None

        return lookup
    if isinstance(e, (IntLit, BoolLit)):
        v = e.value
        return lambda env: v
    if isinstance(e, Neg):
        f = compile_expr(e.operand)
        return lambda env: -f(env)
    if isinstance(e, Not):
        f = compile_expr(e.operand)
        return lambda env: not f(env)
    if isinstance(e, BinOp):
        op = _BINARY[e.op]
        lf, rf = compile_expr(e.left), compile_expr(e.right)
        return lambda env: op(lf(env), rf(env))
    raise TypeError(f"not an expression: {e!r}")


def compile_expr(e: Expr) -> Callable[[Mapping[str, Value]], Value]:
    """Closure evaluating ``e`` over a name->value mapping (memoized)."""
    hit = _compiled.get(id(e))
    if hit is not None and hit[0] is e:
        return hit[1]
    fn = _compile(e)
    _compiled[id(e)] = (e, fn)
    return fn


def eval_expr(s: Store, e: Expr) -> Value:
    return compile_expr(e)(s.vars)


def eval_meta(s: Store, e: Expr) -> Value:
    """Evaluate a meta-level predicate that may mention resources and summaries."""
    return compile_expr(e)(s.meta_env())


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


class NondetTape:
    """Recorded havoc values, consumed in execution order."""

    def __init__(self, values: Iterable[int] = ()):
        self.values = list(values)
        self.cursor = 0

    def __repr__(self):
        return f"NondetTape({self.values!r}, cursor={self.cursor})"

    def exhausted(self) -> bool:
        return self.cursor >= len(self.values)

    def peek(self) -> int:
        return self.values[self.cursor]

    def next(self) -> int:
        v = self.values[self.cursor]
        self.cursor += 1
        return v


@dataclass(frozen=True)
class Progress:
    store: Store


@dataclass(frozen=True)
class BlockedAssume:
    pass


@dataclass(frozen=True)
class ViolatedUb:
    resources: tuple[str, ...]
    bound: int
    actual: int


@dataclass(frozen=True)
class ViolatedLb:
    bound: int
    actual: int


@dataclass(frozen=True)
class TapeExhausted:
    pass


StepOutcome = Progress | BlockedAssume | ViolatedUb | ViolatedLb | TapeExhausted

_BLOCKED = BlockedAssume()
_EXHAUSTED = TapeExhausted()


def _apply(s: Store, c: Cmd, havoc_value: int | None) -> StepOutcome:
    if isinstance(c, Skip):
        return Progress(s)
    if isinstance(c, Assign):
        return Progress(s.with_var(c.var, compile_expr(c.expr)(s.vars)))
    if isinstance(c, Assume):
        return Progress(s) if compile_expr(c.cond)(s.vars) else _BLOCKED
    if isinstance(c, Havoc):
        if havoc_value is None:
            return _EXHAUSTED
        return Progress(s.with_var(c.var, havoc_value))
    if isinstance(c, Use):
        return Progress(s.with_resource(c.resource, s.res[c.resource] + compile_expr(c.expr)(s.vars)))
    if isinstance(c, UbCheck):
        bound = compile_expr(c.bound)(s.vars)
        total = s.summary_sum(c.resources)
        return Progress(s) if total <= bound else ViolatedUb(c.resources, bound, total)
    if isinstance(c, LbCheck):
        bound = compile_expr(c.bound)(s.vars)
        total = s.lower_sum(c.resources)
        return Progress(s) if bound <= total else ViolatedLb(bound, total)
    if isinstance(c, Reset):
        r = c.resource
        cur = s.res[r]
        res = dict(s.res)
        ub = dict(s.ub)
        cnt = dict(s.cnt)
        lb = dict(s.lb)
        cnt[r] = cnt[r] + 1
        ub[r] = max(ub[r], cur)
        lb[r] = min(lb[r], cur)
        res[r] = 0
        return Progress(Store(s.vars, res, ub, cnt, lb))
    raise TypeError(f"not a command: {c!r}")


def eval_cmd(s: Store, c: Cmd, tape: NondetTape | None = None) -> StepOutcome:
    """One command on one store. ``Havoc`` consumes the next tape entry."""
    if isinstance(c, Havoc):
        if tape is None or tape.exhausted():
            return _EXHAUSTED
        return _apply(s, c, tape.next())
    return _apply(s, c, None)


# --------------------------------------------------------------------------
# Program steps
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Successor:
    """Result of trying one out-edge: ``state`` is ``None`` unless it progressed."""

    edge: int
    outcome: StepOutcome
    state: State | None
    havoc: int | None = None


def step(p: Program, st: State, tape: NondetTape | None = None) -> list[Successor]:
    """Try every out-edge of ``st.loc``.

    Each edge sees the tape at its current cursor; the caller's tape is not
    advanced (use :func:`run` for tape-driven execution).
    """
    out = []
    for i in p.out_edges[st.loc]:
        e = p.edges[i]
        havoc = None
        if isinstance(e.cmd, Havoc) and tape is not None and not tape.exhausted():
            havoc = tape.peek()
        outcome = _apply(st.store, e.cmd, havoc)
        nxt = State(e.dst, outcome.store) if isinstance(outcome, Progress) else None
        out.append(Successor(i, outcome, nxt, havoc))
    return out


def expand(p: Program, st: State, havoc_domain: Sequence[int]) -> list[Successor]:
    """All successors of ``st`` with havocs branching over ``havoc_domain``."""
    out = []
    s = st.store
    for i in p.out_edges[st.loc]:
        e = p.edges[i]
        if isinstance(e.cmd, Havoc):
            for v in havoc_domain:
                post = s.with_var(e.cmd.var, v)
                out.append(Successor(i, Progress(post), State(e.dst, post), v))
            continue
        outcome = _apply(s, e.cmd, None)
        nxt = State(e.dst, outcome.store) if isinstance(outcome, Progress) else None
        out.append(Successor(i, outcome, nxt))
    return out


def _step_record(p: Program, st: State, succ: Successor) -> Step:
    return Step(st.store, p.edges[succ.edge].cmd, succ.state, succ.edge, succ.havoc)


def is_violation(outcome: StepOutcome) -> bool:
    return isinstance(outcome, (ViolatedUb, ViolatedLb))


# --------------------------------------------------------------------------
# Bounded enumeration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ViolationReport:
    """A bound check that failed when taken from the last state of ``path``."""

    path: Path
    edge: int
    outcome: ViolatedUb | ViolatedLb


@dataclass(frozen=True)
class PathEvent:
    path: Path
    violations: tuple[ViolationReport, ...] = ()


def enumerate_paths(
    p: Program,
    init: Store,
    havoc_domain: Sequence[int],
    fuel: int,
    cap: int | None = None,
) -> Iterator[PathEvent]:
    """Every path prefix of at most ``fuel`` steps, depth first.

    Each emitted event carries the checks that failed from the path's last
    state. Raises :class:`ResourceLimitError` past ``cap`` path nodes.
    """
    if fuel < 0:
        raise ValueError("fuel must be non-negative")
    cap = state_cap() if cap is None else cap
    visited = 0
    stack = [Path(State(p.entry, init))]
    while stack:
        tr = stack.pop()
        visited += 1
        if visited > cap:
            raise ResourceLimitError(cap)
        violations = []
        children = []
        if len(tr) < fuel:
            st = tr.last
            for succ in expand(p, st, havoc_domain):
                if succ.state is not None:
                    children.append(tr.extend(_step_record(p, st, succ)))
                elif is_violation(succ.outcome):
                    violations.append(ViolationReport(tr, succ.edge, succ.outcome))
        yield PathEvent(tr, tuple(violations))
        stack.extend(reversed(children))


def path_ok(tr: Path) -> bool:
    """Every step is reproducible by :func:`eval_cmd` with its recorded havoc."""
    prev = tr.init.store
    for s in tr.steps:
        if s.pre != prev:
            return False
        tape = NondetTape([] if s.havoc is None else [s.havoc])
        outcome = eval_cmd(s.pre, s.cmd, tape)
        if not isinstance(outcome, Progress) or outcome.store != s.post.store:
            return False
        prev = s.post.store
    return True


def path_in_program(p: Program, tr: Path) -> bool:
    """``tr`` is well formed and follows edges of ``p`` from its entry."""
    if tr.init.loc != p.entry or not path_ok(tr):
        return False
    loc = tr.init.loc
    for s in tr.steps:
        if s.edge is None or not 0 <= s.edge < len(p.edges):
            return False
        e = p.edges[s.edge]
        if e.src != loc or e.cmd != s.cmd or e.dst != s.post.loc:
            return False
        loc = e.dst
    return True


# --------------------------------------------------------------------------
# State-space exploration (deduplicated), used by the verifier
# --------------------------------------------------------------------------


@dataclass
class Exploration:
    """Breadth-first reachable states within ``fuel`` steps.

    ``parent`` maps each state to the step that first reached it so a
    shortest witness path can be rebuilt.
    """

    program: Program
    root: State
    parent: dict

    def path_to(self, st: State) -> Path:
        steps = []
        cur = st
        while cur != self.root:
            prev, succ = self.parent[cur]
            steps.append(_step_record(self.program, prev, succ))
            cur = prev
        steps.reverse()
        return Path(self.root, tuple(steps))


def explore(
    p: Program,
    init: Store,
    havoc_domain: Sequence[int],
    fuel: int,
    cap: int | None = None,
    on_state: Callable[[Exploration, State], bool | None] | None = None,
    on_blocked: Callable[[Exploration, State, Successor], bool | None] | None = None,
) -> tuple[Exploration, int]:
    """Visit every state reachable within ``fuel`` steps once.

    Callbacks receive the exploration so far (for :meth:`Exploration.path_to`)
    and stop the search early by returning a truthy value. Returns the
    exploration record and the number of states visited.
    """
    cap = state_cap() if cap is None else cap
    root = State(p.entry, init)
    exp = Exploration(p, root, {root: None})
    frontier = deque([(root, 0)])
    count = 0
    while frontier:
        st, depth = frontier.popleft()
        count += 1
        if count > cap:
            raise ResourceLimitError(cap)
        if on_state is not None and on_state(exp, st):
            return exp, count
        if depth >= fuel:
            continue
        for succ in expand(p, st, havoc_domain):
            nxt = succ.state
            if nxt is None:
                if on_blocked is not None and on_blocked(exp, st, succ):
                    return exp, count
                continue
            if nxt not in exp.parent:
                exp.parent[nxt] = (st, succ)
                frontier.append((nxt, depth + 1))
    return exp, count


# --------------------------------------------------------------------------
# Tape-driven and randomized single runs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RunResult:
    path: Path
    outcome: str  # "exit", "fuel", "blocked", "violation", "tape"
    violation: ViolationReport | None = None


def run(p: Program, init: Store, tape: NondetTape, fuel: int) -> RunResult:
    """Deterministic replay: take the first enabled out-edge in edge order."""
    tr = Path(State(p.entry, init))
    while True:
        st = tr.last
        if not p.out_edges[st.loc]:
            return RunResult(tr, "exit")
        if len(tr) >= fuel:
            return RunResult(tr, "fuel")
        succs = step(p, st, tape)
        chosen = next((s for s in succs if s.state is not None), None)
        if chosen is None:
            if any(isinstance(s.outcome, TapeExhausted) for s in succs):
                return RunResult(tr, "tape")
            bad = next((s for s in succs if is_violation(s.outcome)), None)
            if bad is not None:
                return RunResult(tr, "violation", ViolationReport(tr, bad.edge, bad.outcome))
            return RunResult(tr, "blocked")
        if chosen.havoc is not None:
            tape.next()
        tr = tr.extend(_step_record(p, st, chosen))


def sample_path(
    p: Program,
    init: Store,
    havoc_domain: Sequence[int],
    fuel: int,
    rng: random.Random,
    budget: int | None = None,
) -> Path:
    """Random maximal path by randomized depth-first search with backtracking.

    Stops at the first path that reaches an exit location or uses all its
    fuel. If ``budget`` node expansions pass first, returns the longest
    path seen so far.
    """
    budget = 20 * (fuel + 1) if budget is None else budget
    start = Path(State(p.entry, init))
    best = start
    stack: list[tuple[Path, list[Successor]]] = []

    def children(tr: Path) -> list[Successor]:
        succs = [s for s in expand(p, tr.last, havoc_domain) if s.state is not None]
        rng.shuffle(succs)
        return succs

    tr = start
    if not p.out_edges[tr.last.loc] or fuel == 0:
        return tr
    stack.append((tr, children(tr)))
    expansions = 0
    while stack:
        tr, pending = stack[-1]
        if not pending:
            stack.pop()
            continue
        succ = pending.pop()
        nxt = tr.extend(_step_record(p, tr.last, succ))
        if len(nxt) > len(best):
            best = nxt
        if not p.out_edges[nxt.last.loc] or len(nxt) >= fuel:
            return nxt
        expansions += 1
        if expansions > budget:
            break
        stack.append((nxt, children(nxt)))
    return best


# --------------------------------------------------------------------------
# Trace dump
# --------------------------------------------------------------------------


def trace_to_json(tr: Path) -> dict:
    return {
        "states": [{"loc": st.loc, "store": st.store.to_json()} for st in tr.states],
        "cmds": [format_cmd(s.cmd) for s in tr.steps],
        "havocs": tr.havocs,
    }
