"""Classical CFG analyses used by decomposition selection.

* dominators (iterative set-intersection dataflow),
* backward data-dependence slices of use sites, both the flow-insensitive
  variable closure and a flow-sensitive per-location variant,
* flat constant propagation.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .corelang import (
    Assign,
    Assume,
    BinOp,
    Diagnostic,
    Edge,
    Expr,
    Havoc,
    IntLit,
    Program,
    Use,
    Var,
    Value,
    free_vars,
)
from .interp import EvaluationError, compile_expr


# --------------------------------------------------------------------------
# Reachability
# --------------------------------------------------------------------------


def reachable_locations(p: Program) -> list[str]:
    """Locations reachable from the entry, in BFS order."""
    seen = {p.entry: None}
    queue = deque([p.entry])
    while queue:
        loc = queue.popleft()
        for i in p.out_edges.get(loc, ()):
            dst = p.edges[i].dst
            if dst not in seen:
                seen[dst] = None
                queue.append(dst)
    return list(seen)


def prune_unreachable(p: Program) -> tuple[Program, list[Diagnostic]]:
    """Drop edges leaving unreachable locations; report what was removed."""
    reach = set(reachable_locations(p))
    dead = [loc for loc in p.locations if loc not in reach]
    if not dead:
        return p, []
    edges = tuple(e for e in p.edges if e.src in reach)
    pruned = Program(p.name, p.inputs, p.pre, p.resources, p.entry, edges)
    return pruned, [Diagnostic(loc, "unreachable location pruned") for loc in dead]


# --------------------------------------------------------------------------
# Dominators
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DomTree:
    entry: str
    idom: Mapping[str, str]  # entry maps to itself

    def dominators(self, loc: str) -> list[str]:
        """``loc`` and its dominators, innermost first, ending at the entry."""
        chain = [loc]
        while chain[-1] != self.entry:
            chain.append(self.idom[chain[-1]])
        return chain

    def dominates(self, a: str, b: str) -> bool:
        return a in self.dominators(b)

    def common_dominator(self, locs: Iterable[str]) -> str:
        """Deepest location dominating every location in ``locs``."""
        locs = list(locs)
        if not locs:
            raise ValueError("no locations given")
        common = self.dominators(locs[0])
        for loc in locs[1:]:
            doms = set(self.dominators(loc))
            common = [d for d in common if d in doms]
        return common[0]

    def to_json(self) -> dict:
        return {"entry": self.entry, "idom": dict(self.idom)}


def dominator_sets(p: Program, locations: list[str] | None = None) -> dict[str, set[str]]:
    """Iterative fixpoint: dom(n) = {n} | intersection of dom(pred)."""
    locations = reachable_locations(p) if locations is None else locations
    loc_set = set(locations)
    preds: dict[str, list[str]] = {loc: [] for loc in locations}
    for e in p.edges:
        if e.src in loc_set and e.dst in loc_set:
            preds[e.dst].append(e.src)
    dom = {loc: set(locations) for loc in locations}
    dom[p.entry] = {p.entry}
    changed = True
    while changed:
        changed = False
        for loc in locations:
            if loc == p.entry:
                continue
            pds = [dom[q] for q in preds[loc]]
            new = set.intersection(*pds) | {loc} if pds else {loc}
            if new != dom[loc]:
                dom[loc] = new
                changed = True
    return dom


def dominator_tree(p: Program) -> DomTree:
    """Immediate dominators of every location reachable from the entry.

    Unreachable locations are ignored; use :func:`prune_unreachable` to get
    them reported.
    """
    locations = reachable_locations(p)
    dom = dominator_sets(p, locations)
    idom = {p.entry: p.entry}
    for loc in locations:
        if loc == p.entry:
            continue
        strict = dom[loc] - {loc}
        # the immediate dominator is the strict dominator with the most dominators
        idom[loc] = max(strict, key=lambda d: len(dom[d]))
    return DomTree(p.entry, idom)


# --------------------------------------------------------------------------
# Slicing
# --------------------------------------------------------------------------


def _use_edge(p: Program, site: int) -> Edge:
    e = p.edges[site]
    if not isinstance(e.cmd, Use):
        raise ValueError(f"edge {p.edge_ids[site]} is not a use site")
    return e


def backward_slice(p: Program, site: int) -> frozenset[str]:
    """Variables the use expression at ``site`` transitively data-depends on.

    Flow-insensitive closure: start from the expression's variables and add
    the right-hand-side variables of every assignment to a variable already
    in the set. Control dependence is deliberately not followed.
    """
    e = _use_edge(p, site)
    result = set(free_vars(e.cmd.expr))
    defs: dict[str, set[str]] = {}
    for edge in p.edges:
        c = edge.cmd
        if isinstance(c, Assign):
            defs.setdefault(c.var, set()).update(free_vars(c.expr))
        elif isinstance(c, Havoc):
            defs.setdefault(c.var, set())
    work = list(result)
    while work:
        x = work.pop()
        for y in defs.get(x, ()):
            if y not in result:
                result.add(y)
                work.append(y)
    return frozenset(result)


def site_inputs(p: Program, site: int) -> dict[str, frozenset[str]]:
    """Per-location inputs of a use site.

    For every location ``l``, the variables whose value at ``l`` may flow,
    through assignments only, into the use expression at some later
    execution of ``site``. A havoc or an assignment that does not read the
    variable kills it. Backward may-analysis to a fixpoint.
    """
    use = _use_edge(p, site)
    gen = frozenset(free_vars(use.cmd.expr))
    live: dict[str, frozenset[str]] = {loc: frozenset() for loc in p.locations}
    live[use.src] = gen
    work = deque(p.locations)
    queued = set(work)
    while work:
        loc = work.popleft()
        queued.discard(loc)
        acc: set[str] = set(gen) if loc == use.src else set()
        for i in p.out_edges[loc]:
            edge = p.edges[i]
            after = live[edge.dst]
            c = edge.cmd
            if isinstance(c, Assign) and c.var in after:
                acc |= (after - {c.var}) | free_vars(c.expr)
            elif isinstance(c, Havoc):
                acc |= after - {c.var}
            else:
                acc |= after
        new = frozenset(acc)
        if new != live[loc]:
            live[loc] = new
            for j in p.in_edges[loc]:
                src = p.edges[j].src
                if src not in queued:
                    queued.add(src)
                    work.append(src)
    return live


# --------------------------------------------------------------------------
# Constant propagation
# --------------------------------------------------------------------------


class Lattice(enum.Enum):
    BOTTOM = "bot"
    TOP = "top"

    def __repr__(self):
        return self.value


BOTTOM = Lattice.BOTTOM
TOP = Lattice.TOP


@dataclass(frozen=True)
class Const:
    value: Value


LatticeValue = Lattice | Const


def join(a: LatticeValue, b: LatticeValue) -> LatticeValue:
    if a is BOTTOM:
        return b
    if b is BOTTOM:
        return a
    if a == b:
        return a
    return TOP


@dataclass
class ConstMap:
    """Per-location facts; a location absent from ``facts`` is unreachable."""

    variables: tuple[str, ...]
    facts: dict[str, dict[str, LatticeValue]] = field(default_factory=dict)

    def value(self, loc: str, var: str) -> LatticeValue:
        env = self.facts.get(loc)
        if env is None:
            return BOTTOM
        return env.get(var, TOP)

    def is_const(self, loc: str, var: str) -> bool:
        return isinstance(self.value(loc, var), Const)

    def to_json(self) -> dict:
        def enc(v):
            return v.value if isinstance(v, Const) else v.value

        return {loc: {x: enc(v) for x, v in env.items()} for loc, env in self.facts.items()}


def abstract_eval(e: Expr, env: Mapping[str, LatticeValue]) -> LatticeValue:
    vals = {}
    for x in free_vars(e):
        v = env.get(x, TOP)
        if v is BOTTOM:
            return BOTTOM
        if v is TOP:
            return TOP
        vals[x] = v.value
    try:
        return Const(compile_expr(e)(vals))
    except (EvaluationError, TypeError):
        return TOP


def _equalities(cond: Expr) -> list[tuple[str, int]]:
    """``x == n`` conjuncts of a guard."""
    if isinstance(cond, BinOp) and cond.op == "&&":
        return _equalities(cond.left) + _equalities(cond.right)
    if isinstance(cond, BinOp) and cond.op == "==":
        if isinstance(cond.left, Var) and isinstance(cond.right, IntLit):
            return [(cond.left.name, cond.right.value)]
        if isinstance(cond.right, Var) and isinstance(cond.left, IntLit):
            return [(cond.right.name, cond.left.value)]
    return []


def constant_analysis(
    p: Program,
    init_known: Mapping[str, Value] | None = None,
    refine_assumes: bool = False,
) -> ConstMap:
    """Flat constant propagation.

    At the entry, variables in ``init_known`` are constant and everything
    else is unknown. Havoc yields TOP. With ``refine_assumes``, an
    ``assume`` whose guard is constantly false is not propagated and
    ``x == n`` conjuncts make ``x`` constant on the guarded edge.
    """
    init_known = dict(init_known or {})
    variables = p.variables
    entry_env = {x: Const(init_known[x]) if x in init_known else TOP for x in variables}
    facts: dict[str, dict[str, LatticeValue]] = {p.entry: entry_env}
    work = deque([p.entry])
    queued = {p.entry}
    while work:
        loc = work.popleft()
        queued.discard(loc)
        env = facts[loc]
        for i in p.out_edges[loc]:
            edge = p.edges[i]
            c = edge.cmd
            out = env
            if isinstance(c, Assign):
                out = dict(env)
                out[c.var] = abstract_eval(c.expr, env)
            elif isinstance(c, Havoc):
                out = dict(env)
                out[c.var] = TOP
            elif isinstance(c, Assume) and refine_assumes:
                guard = abstract_eval(c.cond, env)
                if guard == Const(False):
                    continue
                eqs = _equalities(c.cond)
                if eqs:
                    out = dict(env)
                    for x, n in eqs:
                        out[x] = Const(n)
            old = facts.get(edge.dst)
            if old is None:
                new = dict(out)
            else:
                new = {x: join(old[x], out[x]) for x in variables}
            if new != old:
                facts[edge.dst] = new
                if edge.dst not in queued:
                    queued.add(edge.dst)
                    work.append(edge.dst)
    return ConstMap(variables, facts)
