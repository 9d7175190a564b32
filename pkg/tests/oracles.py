"""Independent brute-force oracles used by the property and acceptance tests."""

from __future__ import annotations

import random

from brbo.analyses import Const, backward_slice, constant_analysis
from brbo.corelang import Assign, BoolLit, Edge, Havoc, Program, Skip, Use, initial_store
from brbo.interp import compile_expr, explore
from brbo.verify import input_vectors


def random_cfg(rng: random.Random, max_nodes: int = 12) -> Program:
    """Random CFG of skip edges whose nodes are all reachable from ``n0``."""
    n = rng.randint(1, max_nodes)
    nodes = [f"n{k}" for k in range(n)]
    edges = set()
    for k in range(1, n):
        edges.add((nodes[rng.randrange(k)], nodes[k]))
    for _ in range(rng.randint(0, 2 * n)):
        edges.add((rng.choice(nodes), rng.choice(nodes)))
    if n == 1:
        edges.add(("n0", "n0"))
    ordered = sorted(edges)
    rng.shuffle(ordered)
    return Program("cfg", (), BoolLit(True), (), "n0", tuple(Edge(a, Skip(), b) for a, b in ordered))


def brute_dominators(p: Program) -> dict[str, set[str]]:
    """Dominator sets from all acyclic entry paths: intersect the nodes on each path."""
    succ: dict[str, list[str]] = {}
    for e in p.edges:
        succ.setdefault(e.src, []).append(e.dst)
    dom: dict[str, set[str]] = {}

    def walk(node, on_path: list[str], members: set[str]):
        here = set(on_path)
        dom[node] = here if node not in dom else dom[node] & here
        for nxt in succ.get(node, ()):
            if nxt not in members:
                on_path.append(nxt)
                members.add(nxt)
                walk(nxt, on_path, members)
                members.discard(nxt)
                on_path.pop()

    walk(p.entry, [p.entry], {p.entry})
    return dom


def reachable_without(p: Program, removed: str) -> set[str]:
    seen = set() if removed == p.entry else {p.entry}
    work = list(seen)
    while work:
        loc = work.pop()
        for e in p.edges:
            if e.src == loc and e.dst != removed and e.dst not in seen:
                seen.add(e.dst)
                work.append(e.dst)
    return seen


def constant_violations(p: Program, input_domain, havoc_domain, fuel, cap=None) -> list[tuple]:
    """Reachable states contradicting a ``Const`` fact of the constant analysis."""
    facts = constant_analysis(p)
    bad = []
    for vec in input_vectors(p, input_domain):

        def check(exp, st):
            env = facts.facts.get(st.loc)
            if env is None:
                bad.append((vec, st.loc, "reachable but analysed as unreachable"))
                return
            for x, v in env.items():
                if isinstance(v, Const) and st.store.vars[x] != v.value:
                    bad.append((vec, st.loc, x, v.value, st.store.vars[x]))

        explore(p, initial_store(p, vec), havoc_domain, fuel, cap, on_state=check)
    return bad


def _replay_vars(vars0: dict, steps) -> dict:
    """Replay assignments and havocs only, ignoring guards and checks."""
    env = dict(vars0)
    for s in steps:
        if isinstance(s.cmd, Assign):
            env[s.cmd.var] = compile_expr(s.cmd.expr)(env)
        elif isinstance(s.cmd, Havoc):
            env[s.cmd.var] = s.havoc
    return env


def slice_violations(p: Program, input_domain, havoc_domain, fuel, deltas=(7, -3), cap=None) -> list[tuple]:
    """Executions of a use site whose amount changes when non-slice variables start elsewhere."""
    sites = [i for i, e in enumerate(p.edges) if isinstance(e.cmd, Use)]
    slices = {i: backward_slice(p, i) for i in sites}
    by_src: dict[str, list[int]] = {}
    for i in sites:
        by_src.setdefault(p.edges[i].src, []).append(i)
    bad = []
    for vec in input_vectors(p, input_domain):
        init = initial_store(p, vec)
        exp, _ = explore(p, init, havoc_domain, fuel, cap)
        for st in exp.parent:
            for i in by_src.get(st.loc, ()):
                steps = exp.path_to(st).steps
                amount = compile_expr(p.edges[i].cmd.expr)
                want = amount(_replay_vars(init.vars, steps))
                for delta in deltas:
                    moved = {x: v + delta if x not in slices[i] else v for x, v in init.vars.items()}
                    got = amount(_replay_vars(moved, steps))
                    if got != want:
                        bad.append((vec, p.edge_ids[i], delta, want, got))
    return bad
