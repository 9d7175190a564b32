"""Heuristic choice of amortization groups and reset locations.

1. every use site starts in its own group;
2. two sites of the same resource are merged when, at their deepest common
   dominator, they share an internal input variable that is not provably
   constant there (merging is closed transitively);
3. each group gets one reset at the deepest dominator of its sites where
   all of its internal inputs are constant.

"Inputs" of a site at a location are the variables whose value there may
flow into the site's use expression (see :func:`site_inputs`).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .analyses import ConstMap, DomTree, constant_analysis, dominator_tree, prune_unreachable, site_inputs
from .corelang import Diagnostic, Program, Reset, Use, require_valid
from .decompose import Decomposition


class SelectionError(ValueError):
    pass


class UnionFind:
    """Disjoint sets over hashable items; the representative is the earliest-added member."""

    def __init__(self, items=()):
        self.parent = {}
        self.order = {}
        for x in items:
            self.add(x)

    def add(self, x):
        if x not in self.parent:
            self.parent[x] = x
            self.order[x] = len(self.order)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.order[rb] < self.order[ra]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True

    def classes(self) -> list[list]:
        out: dict = {}
        for x in sorted(self.parent, key=self.order.__getitem__):
            out.setdefault(self.find(x), []).append(x)
        return list(out.values())


@dataclass(frozen=True)
class MergeDecision:
    sites: tuple[str, str]
    dominator: str
    shared: tuple[str, ...]
    nonconstant: tuple[str, ...]

    @property
    def merged(self) -> bool:
        return bool(self.nonconstant)


@dataclass(frozen=True)
class Placement:
    group: str
    location: str
    walked: tuple[tuple[str, tuple[str, ...], tuple[str, ...]], ...]
    warning: str | None = None


@dataclass
class SelectionTrace:
    initial: dict[str, list[str]] = field(default_factory=dict)  # group -> site ids
    merges: list[MergeDecision] = field(default_factory=list)
    placements: list[Placement] = field(default_factory=list)
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def warnings(self) -> list[str]:
        return [f"{pl.group}: {pl.warning}" for pl in self.placements if pl.warning]

    def to_json(self) -> dict:
        return {
            "initial": {g: list(s) for g, s in self.initial.items()},
            "merges": [
                {
                    "sites": list(m.sites),
                    "dominator": m.dominator,
                    "shared": list(m.shared),
                    "nonconstant": list(m.nonconstant),
                    "merged": m.merged,
                }
                for m in self.merges
            ],
            "placements": [
                {
                    "group": pl.group,
                    "location": pl.location,
                    "walked": [
                        {"location": loc, "inputs": list(v), "nonconstant": list(nc)}
                        for loc, v, nc in pl.walked
                    ],
                    "warning": pl.warning,
                }
                for pl in self.placements
            ],
            "diagnostics": [str(d) for d in self.diagnostics],
        }

    def to_text(self) -> str:
        lines = ["initial groups:"]
        for g, sites in self.initial.items():
            lines.append(f"  {g}: {', '.join(sites)}")
        lines.append("merge decisions:")
        for m in self.merges:
            verdict = "merge" if m.merged else "keep apart"
            shared = ", ".join(m.shared) or "-"
            why = f" (not constant: {', '.join(m.nonconstant)})" if m.merged else ""
            lines.append(f"  {m.sites[0]} + {m.sites[1]} at {m.dominator}: shared {shared} -> {verdict}{why}")
        lines.append("resets:")
        for pl in self.placements:
            steps = " -> ".join(
                f"{loc}[{','.join(nc) or 'ok'}]" for loc, _, nc in pl.walked
            )
            lines.append(f"  reset {pl.group} at {pl.location}   walked {steps}")
            if pl.warning:
                lines.append(f"    warning: {pl.warning}")
        for d in self.diagnostics:
            lines.append(f"note: {d}")
        return "\n".join(lines) + "\n"


class _Context:
    """Analyses shared by the selection stages, computed on the reachable program."""

    def __init__(self, p: Program, consts: ConstMap | None = None, refine_assumes: bool = False):
        self.program = p
        self.pruned, self.diagnostics = prune_unreachable(p)
        self.dom: DomTree = dominator_tree(self.pruned)
        self.consts = consts or constant_analysis(self.pruned, refine_assumes=refine_assumes)
        self.internal = p.internal_vars
        self._inputs: dict[str, dict] = {}

    def source(self, sid: str) -> str:
        return self.program.edges[self.program.edge_index(sid)].src

    def reachable(self, sid: str) -> bool:
        return self.source(sid) in self.dom.idom

    def inputs(self, sid: str, loc: str) -> frozenset[str]:
        if sid not in self._inputs:
            self._inputs[sid] = site_inputs(self.pruned, self.pruned.edge_index(sid))
        return self._inputs[sid].get(loc, frozenset()) & self.internal

    def nonconstant(self, loc: str, names) -> tuple[str, ...]:
        return tuple(v for v in sorted(names) if not self.consts.is_const(loc, v))


def _renumber(p: Program, classes_by_resource: dict[str, list[list[str]]]) -> Decomposition:
    groups, sites = {}, {}
    for r in p.resources:
        classes = sorted(classes_by_resource.get(r, []), key=lambda c: p.edge_index(c[0]))
        names = []
        for k, cls in enumerate(classes, start=1):
            g = f"{r}_{k}"
            names.append(g)
            for sid in cls:
                sites[sid] = g
        groups[r] = tuple(names)
    ordered = {sid: sites[sid] for sid in p.edge_ids if sid in sites}
    return Decomposition(groups, ordered)


def initial_groups(p: Program) -> Decomposition:
    """One group per use site, named ``<resource>_<k>`` in edge order."""
    require_valid(p)
    if any(isinstance(e.cmd, Reset) for e in p.edges):
        raise SelectionError("selection expects a program without resets")
    classes: dict[str, list[list[str]]] = {r: [] for r in p.resources}
    for i, e in enumerate(p.edges):
        if isinstance(e.cmd, Use):
            classes[e.cmd.resource].append([p.edge_ids[i]])
    return _renumber(p, classes)


def _site_classes(p: Program, d: Decomposition) -> dict[str, list[list[str]]]:
    out: dict[str, list[list[str]]] = {}
    for r, gs in d.groups.items():
        out[r] = [d.sites_of(g) for g in gs if d.sites_of(g)]
    return out


def merge_groups(
    p: Program,
    d0: Decomposition,
    trace: SelectionTrace | None = None,
    ctx: _Context | None = None,
    order: list[tuple[str, str]] | None = None,
) -> Decomposition:
    """Merge groups whose sites share a non-constant internal input.

    ``order`` overrides the pair examination order (the result does not
    depend on it).
    """
    ctx = ctx or _Context(p)
    uf = UnionFind(sid for sid in p.edge_ids if sid in d0.sites)
    for cls_list in _site_classes(p, d0).values():
        for cls in cls_list:
            for sid in cls[1:]:
                uf.union(cls[0], sid)

    pairs = order if order is not None else _candidate_pairs(p, d0)
    for a, b in pairs:
        if not (ctx.reachable(a) and ctx.reachable(b)):
            continue
        loc = ctx.dom.common_dominator([ctx.source(a), ctx.source(b)])
        shared = ctx.inputs(a, loc) & ctx.inputs(b, loc)
        decision = MergeDecision((a, b), loc, tuple(sorted(shared)), ctx.nonconstant(loc, shared))
        if trace is not None:
            trace.merges.append(decision)
        if decision.merged:
            uf.union(a, b)

    classes: dict[str, list[list[str]]] = {r: [] for r in p.resources}
    for cls in uf.classes():
        r = p.edges[p.edge_index(cls[0])].cmd.resource
        classes[r].append(cls)
    return _renumber(p, classes)


def _candidate_pairs(p: Program, d: Decomposition) -> list[tuple[str, str]]:
    pairs = []
    for r in p.resources:
        sites = [sid for sid in p.edge_ids if sid in d.sites and d.origin(d.sites[sid]) == r]
        for i, a in enumerate(sites):
            for b in sites[i + 1 :]:
                pairs.append((a, b))
    return pairs


def place_resets(
    p: Program,
    d: Decomposition,
    trace: SelectionTrace | None = None,
    ctx: _Context | None = None,
) -> Decomposition:
    """One reset per group at the deepest site dominator where its inputs are constant.

    Falls back to the entry, with a warning, when no dominator qualifies.
    """
    ctx = ctx or _Context(p)
    resets = {}
    for g in d.all_groups:
        sids = d.sites_of(g)
        if not sids:
            raise SelectionError(f"group {g!r} has no use sites")
        live = [s for s in sids if ctx.reachable(s)]
        if not live:
            continue
        start = ctx.dom.common_dominator(ctx.source(s) for s in live)
        walked = []
        chosen, warning = None, None
        for loc in ctx.dom.dominators(start):
            names = frozenset().union(*(ctx.inputs(s, loc) for s in live))
            nonconst = ctx.nonconstant(loc, names)
            walked.append((loc, tuple(sorted(names)), nonconst))
            if not nonconst:
                chosen = loc
                break
        if chosen is None:
            chosen = p.entry
            warning = "non-interference not established; reset placed at entry"
        resets[g] = (chosen,)
        if trace is not None:
            trace.placements.append(Placement(g, chosen, tuple(walked), warning))
    return d.with_resets(resets)


def _with_placeholders(d: Decomposition) -> Decomposition:
    """Give resources without use sites one empty group so bound checks still translate."""
    groups = {r: gs or (f"{r}_1",) for r, gs in d.groups.items()}
    return Decomposition(groups, dict(d.sites), dict(d.resets))


def select(p: Program, refine_assumes: bool = False) -> tuple[Decomposition, SelectionTrace]:
    """Initial groups, then merging, then reset placement."""
    trace = SelectionTrace()
    d0 = initial_groups(p)
    trace.initial = {g: d0.sites_of(g) for g in d0.all_groups}
    ctx = _Context(p, refine_assumes=refine_assumes)
    trace.diagnostics = list(ctx.diagnostics)
    d1 = merge_groups(p, d0, trace, ctx)
    d2 = place_resets(p, d1, trace, ctx)
    return _with_placeholders(d2), trace


def replay_trace(p: Program, trace: SelectionTrace) -> Decomposition:
    """Rebuild the decomposition recorded in ``trace``."""
    uf = UnionFind(sid for sid in p.edge_ids if any(sid in s for s in trace.initial.values()))
    for m in trace.merges:
        if m.merged:
            uf.union(*m.sites)
    classes: dict[str, list[list[str]]] = {r: [] for r in p.resources}
    for cls in uf.classes():
        classes[p.edges[p.edge_index(cls[0])].cmd.resource].append(cls)
    d = _renumber(p, classes).with_resets({pl.group: (pl.location,) for pl in trace.placements})
    return _with_placeholders(d)
