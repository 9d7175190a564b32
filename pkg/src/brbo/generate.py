"""Random test inputs: small loop programs and valid decompositions of them.

Programs are built by nesting and sequencing two loop shapes that show up
in string-building code:

* a counted loop ``for i in 0..n`` over an input ``n`` whose body is a
  smaller statement;
* an accumulate-and-flush loop: an accumulator ``p`` grows by bounded
  nondeterministic amounts and is occasionally spent with ``use R (p)`` and
  reset to zero, with a final spend after the loop.

Havocked values are always constrained by an assume, so bounded havoc
domains that include ``0..2`` never block a run.
"""

from __future__ import annotations

import random

from .analyses import dominator_tree, reachable_locations
from .corelang import (
    Assign,
    Assume,
    BinOp,
    Edge,
    Havoc,
    IntLit,
    Not,
    Program,
    Skip,
    UbCheck,
    Use,
    Var,
    conj,
)
from .decompose import Decomposition

MAX_EDGES = 40


def _le(a, b):
    return BinOp("<=", a, b)


def _between(x: str, lo: int, hi: int):
    return conj(_le(IntLit(lo), Var(x)), _le(Var(x), IntLit(hi)))


class _Builder:
    def __init__(self, rng: random.Random, inputs: list[str], resources: list[str]):
        self.rng = rng
        self.inputs = inputs
        self.resources = resources
        self.edges: list[Edge] = []
        self.n_locs = 0
        self.n_vars = 0

    def loc(self) -> str:
        self.n_locs += 1
        return f"L{self.n_locs}"

    def var(self, prefix: str) -> str:
        self.n_vars += 1
        return f"{prefix}{self.n_vars}"

    def emit(self, src: str, cmd, dst: str) -> None:
        self.edges.append(Edge(src, cmd, dst))

    def amount(self, src: str, scope: list[str]):
        """An amount expression, possibly havocking a fresh bounded variable first."""
        roll = self.rng.random()
        if roll < 0.3:
            return src, IntLit(self.rng.randint(1, 3))
        if roll < 0.55:
            return src, Var(self.rng.choice(self.inputs))
        if roll < 0.7 and scope:
            return src, Var(self.rng.choice(scope))
        x = self.var("h")
        mid, dst = self.loc(), self.loc()
        self.emit(src, Havoc(x), mid)
        self.emit(mid, Assume(_between(x, 0, 2)), dst)
        return dst, Var(x)

    def stmt(self, src: str, depth: int, scope: list[str], top: bool = False) -> str:
        kinds = [] if top else ["use", "use"]
        if depth > 0:
            kinds += ["counted", "flush", "seq", "branch"]
        kind = self.rng.choice(kinds or ["use"])
        r = self.rng.choice(self.resources)
        if kind == "use":
            cur, e = self.amount(src, scope)
            dst = self.loc()
            self.emit(cur, Use(r, e), dst)
            return dst
        if kind == "seq":
            mid = self.stmt(src, depth - 1, scope)
            return self.stmt(mid, depth - 1, scope)
        if kind == "branch":
            c = self.var("c")
            head, join = self.loc(), self.loc()
            then_, else_ = self.loc(), self.loc()
            self.emit(src, Havoc(c), head)
            self.emit(head, Assume(BinOp("==", Var(c), IntLit(0))), then_)
            self.emit(head, Assume(Not(BinOp("==", Var(c), IntLit(0)))), else_)
            end_then = self.stmt(then_, depth - 1, scope)
            self.emit(end_then, Skip(), join)
            end_else = self.stmt(else_, depth - 1, scope) if self.rng.random() < 0.5 else else_
            self.emit(end_else, Skip(), join)
            return join
        if kind == "counted":
            i = self.var("i")
            n = self.rng.choice(self.inputs)
            head, body, done = self.loc(), self.loc(), self.loc()
            self.emit(src, Assign(i, IntLit(0)), head)
            self.emit(head, Assume(BinOp("<", Var(i), Var(n))), body)
            self.emit(head, Assume(BinOp(">=", Var(i), Var(n))), done)
            end = self.stmt(body, depth - 1, scope + [i])
            self.emit(end, Assign(i, BinOp("+", Var(i), IntLit(1))), head)
            return done
        # accumulate-and-flush
        i, acc, x = self.var("i"), self.var("p"), self.var("h")
        n = self.rng.choice(self.inputs)
        init, head, body, got, flush, latch, done, out = (self.loc() for _ in range(8))
        self.emit(src, Assign(acc, IntLit(0)), init)
        self.emit(init, Assign(i, IntLit(0)), head)
        self.emit(head, Assume(BinOp("<", Var(i), Var(n))), body)
        self.emit(head, Assume(BinOp(">=", Var(i), Var(n))), done)
        mid = self.loc()
        self.emit(body, Havoc(x), mid)
        self.emit(mid, Assume(_between(x, 0, 2)), got)
        self.emit(got, Assign(acc, BinOp("+", Var(acc), Var(x))), latch)
        self.emit(got, Use(r, Var(acc)), flush)
        self.emit(flush, Assign(acc, IntLit(0)), latch)
        self.emit(latch, Assign(i, BinOp("+", Var(i), IntLit(1))), head)
        self.emit(done, Use(r, Var(acc)), out)
        return out


def random_program(
    rng: random.Random,
    name: str = "rand",
    max_edges: int = MAX_EDGES,
    min_edges: int = 8,
    depth: int = 3,
    n_inputs: int = 2,
    n_resources: int = 1,
    with_check: bool = False,
) -> Program:
    """A random valid program with at least one use and a bounded edge count.

    With ``with_check`` a ``ub!`` comparing all resources against a large
    constant is added before the exit.
    """
    inputs = [f"n{k}" for k in range(1, n_inputs + 1)]
    resources = [f"#R{k}" for k in range(1, n_resources + 1)]
    pre = conj(*(_le(IntLit(0), Var(x)) for x in inputs))
    while True:
        b = _Builder(rng, inputs, resources)
        entry = b.loc()
        end = b.stmt(entry, depth, [], top=True)
        if with_check:
            b.emit(end, UbCheck(tuple(resources), IntLit(10**6)), b.loc())
        if min_edges <= len(b.edges) <= max_edges and any(isinstance(e.cmd, Use) for e in b.edges):
            return Program(name, tuple(inputs), pre, tuple(resources), entry, tuple(b.edges))


def random_decomposition(
    p: Program,
    rng: random.Random,
    max_groups: int = 3,
    max_resets: int = 2,
) -> Decomposition:
    """Random site grouping with random dominating reset placements.

    Each resource gets between 1 and ``max_groups`` non-empty groups; each
    group gets up to ``max_resets`` resets, each at a location dominating
    all of its reachable use sites.
    """
    dom = dominator_tree(p)
    reach = set(reachable_locations(p))
    groups: dict[str, tuple[str, ...]] = {}
    sites: dict[str, str] = {}
    resets: dict[str, tuple[str, ...]] = {}
    for r in p.resources:
        rsites = [p.edge_ids[i] for i, e in enumerate(p.edges) if isinstance(e.cmd, Use) and e.cmd.resource == r]
        k = rng.randint(1, max(1, min(max_groups, len(rsites))))
        labels = [rng.randrange(k) for _ in rsites]
        # renumber to drop empty groups
        order = {lab: j for j, lab in enumerate(dict.fromkeys(labels))}
        n_groups = max(1, len(order))
        names = tuple(f"{r}_{j + 1}" for j in range(n_groups))
        groups[r] = names
        for sid, lab in zip(rsites, labels):
            sites[sid] = names[order[lab]]
        for g in names:
            srcs = [p.edges[p.edge_index(s)].src for s in rsites if sites[s] == g]
            srcs = [s for s in srcs if s in reach]
            candidates = dom.dominators(dom.common_dominator(srcs)) if srcs else sorted(reach)
            n = rng.randint(0, max_resets)
            if n:
                resets[g] = tuple(rng.choice(candidates) for _ in range(n))
    return Decomposition(groups, sites, resets)
