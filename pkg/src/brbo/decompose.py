"""Resource decomposition: amortization groups, reset insertion, and the
lockstep conformance machinery that checks a transformed program against
its original.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .analyses import dominator_tree, reachable_locations
from .corelang import (
    Cmd,
    Diagnostic,
    Edge,
    LbCheck,
    Neg,
    Path,
    Program,
    Reset,
    Skip,
    State,
    Step,
    Store,
    UbCheck,
    Use,
    initial_store,
    require_valid,
)
from .interp import NondetTape, Progress, eval_cmd, eval_expr, sample_path


class DecompositionError(ValueError):
    """A decomposition does not fit the program it is applied to."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


@dataclass(frozen=True)
class Decomposition:
    """Groups per original resource, a group per use site, reset locations per group.

    ``sites`` is keyed by edge id (``src>dst#k``) of the original program.
    """

    groups: Mapping[str, tuple[str, ...]]
    sites: Mapping[str, str]
    resets: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def origin(self, group: str) -> str:
        for r, gs in self.groups.items():
            if group in gs:
                return r
        raise KeyError(group)

    @property
    def all_groups(self) -> list[str]:
        return [g for gs in self.groups.values() for g in gs]

    def sites_of(self, group: str) -> list[str]:
        return [sid for sid, g in self.sites.items() if g == group]

    def with_resets(self, resets: Mapping[str, Sequence[str]]) -> "Decomposition":
        return Decomposition(dict(self.groups), dict(self.sites), {g: tuple(ls) for g, ls in resets.items()})

    def to_json(self) -> dict:
        resets = {}
        for g, locs in self.resets.items():
            resets[g] = locs[0] if len(locs) == 1 else list(locs)
        return {
            "groups": {r: list(gs) for r, gs in self.groups.items()},
            "sites": dict(self.sites),
            "resets": resets,
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Decomposition":
        resets = {}
        for g, locs in data.get("resets", {}).items():
            resets[g] = (locs,) if isinstance(locs, str) else tuple(locs)
        return cls(
            {r: tuple(gs) for r, gs in data["groups"].items()},
            dict(data["sites"]),
            resets,
        )

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def identity_decomposition(p: Program, suffix: str = "_1") -> Decomposition:
    """One fresh group per resource holding all of its use sites, no resets."""
    groups = {r: (r + suffix,) for r in p.resources}
    sites = {
        p.edge_ids[i]: e.cmd.resource + suffix
        for i, e in enumerate(p.edges)
        if isinstance(e.cmd, Use)
    }
    return Decomposition(groups, sites)


def check_decomposition(p: Program, d: Decomposition) -> list[Diagnostic]:
    """Everything :func:`transform_program` requires of ``d``, as diagnostics."""
    diags: list[Diagnostic] = []
    owner: dict[str, str] = {}
    taken = set(p.variables) | set(p.resources)
    for r in p.resources:
        gs = d.groups.get(r)
        if not gs:
            diags.append(Diagnostic("groups", f"resource {r!r} has no groups"))
            continue
        for g in gs:
            if g in owner:
                diags.append(Diagnostic("groups", f"group {g!r} listed twice"))
            owner[g] = r
            if g in taken and not (g == r and len(gs) == 1):
                diags.append(Diagnostic("groups", f"group name {g!r} is not fresh"))
    for r in d.groups:
        if r not in p.resources:
            diags.append(Diagnostic("groups", f"unknown resource {r!r}"))

    site_ids = set(p.edge_ids)
    for sid, g in d.sites.items():
        if sid not in site_ids:
            diags.append(Diagnostic(f"site {sid}", "no such edge"))
            continue
        c = p.edges[p.edge_index(sid)].cmd
        if not isinstance(c, Use):
            diags.append(Diagnostic(f"site {sid}", "edge is not a use"))
        elif owner.get(g) != c.resource:
            diags.append(Diagnostic(f"site {sid}", f"group {g!r} does not belong to {c.resource!r}"))
    for i, e in enumerate(p.edges):
        if isinstance(e.cmd, Use) and p.edge_ids[i] not in d.sites:
            diags.append(Diagnostic(f"site {p.edge_ids[i]}", "use site has no group"))

    if d.resets:
        reach = set(reachable_locations(p))
        dom = dominator_tree(p)
        for g, locs in d.resets.items():
            if g not in owner:
                diags.append(Diagnostic(f"reset {g}", "unknown group"))
                continue
            for loc in locs:
                if loc not in p.locations:
                    diags.append(Diagnostic(f"reset {g}", f"no location {loc!r}"))
                    continue
                for sid in d.sites_of(g):
                    if sid not in site_ids:
                        continue
                    src = p.edges[p.edge_index(sid)].src
                    if src in reach and (loc not in reach or not dom.dominates(loc, src)):
                        diags.append(
                            Diagnostic(
                                f"reset {g}",
                                f"location {loc!r} does not dominate use site {sid}",
                            )
                        )
    return diags


def decompose_cmd(d: Decomposition, site: str | None, c: Cmd) -> Cmd:
    """Rewrite one command of the original program."""
    if isinstance(c, Reset):
        raise ValueError("original programs must not contain resets")
    if isinstance(c, Use):
        if site is None or site not in d.sites:
            raise DecompositionError([Diagnostic(f"site {site}", "use site has no group")])
        return Use(d.sites[site], c.expr)
    if isinstance(c, UbCheck):
        return UbCheck(tuple(g for r in c.resources for g in d.groups[r]), c.bound)
    if isinstance(c, LbCheck):
        return LbCheck(c.bound, tuple(g for r in c.resources for g in d.groups[r]))
    return c


def _fresh_location(taken: set[str], group: str, loc: str) -> str:
    base = f"rst.{group}.{loc}"
    name, k = base, 1
    while name in taken:
        k += 1
        name = f"{base}.{k}"
    return name


def transform_program(p: Program, d: Decomposition) -> Program:
    """Apply ``d`` to ``p``.

    Edges keep their order and index; each reset placement at ``l`` adds a
    fresh location ``l'``, redirects every in-edge of ``l`` to ``l'`` and
    appends the edge ``l' -reset-> l``. A placement at the entry makes
    ``l'`` the new entry.
    """
    require_valid(p)
    if any(isinstance(e.cmd, Reset) for e in p.edges):
        raise ValueError("original programs must not contain resets")
    diags = check_decomposition(p, d)
    if diags:
        raise DecompositionError(diags)

    edges = [
        Edge(e.src, decompose_cmd(d, p.edge_ids[i], e.cmd), e.dst)
        for i, e in enumerate(p.edges)
    ]
    entry = p.entry
    taken = set(p.locations)
    for g in d.all_groups:
        for loc in d.resets.get(g, ()):
            fresh = _fresh_location(taken, g, loc)
            taken.add(fresh)
            edges = [Edge(e.src, e.cmd, fresh) if e.dst == loc else e for e in edges]
            edges.append(Edge(fresh, Reset(g), loc))
            if entry == loc:
                entry = fresh
    return Program(p.name, p.inputs, p.pre, tuple(d.all_groups), entry, tuple(edges))


# --------------------------------------------------------------------------
# Conformance
# --------------------------------------------------------------------------


class StructuralError(ValueError):
    """Stores compared for conformance do not share program variables."""


@dataclass(frozen=True)
class ConformanceReport:
    original: Mapping[str, int]
    summary: Mapping[str, int]
    lower: Mapping[str, int]
    mismatches: tuple[str, ...] = ()

    @property
    def slack(self) -> dict[str, int]:
        return {r: self.summary[r] - self.original[r] for r in self.original}

    @property
    def lower_slack(self) -> dict[str, int]:
        return {r: self.original[r] - self.lower[r] for r in self.original}

    @property
    def conforming(self) -> bool:
        return not self.mismatches and all(v >= 0 for v in self.slack.values())

    @property
    def lower_conforming(self) -> bool:
        return all(v >= 0 for v in self.lower_slack.values())


def conforms(orig: Store, dec: Store, d: Decomposition) -> ConformanceReport:
    """Compare an original store with a decomposed one.

    Conforming when program variables agree and every original resource is
    at most the summed ``cnt*ub + r`` of its groups.
    """
    if set(orig.vars) != set(dec.vars):
        raise StructuralError(
            f"program variables differ: {sorted(set(orig.vars) ^ set(dec.vars))}"
        )
    mismatches = tuple(x for x in orig.vars if orig.vars[x] != dec.vars[x])
    original = {r: orig.res[r] for r in d.groups}
    summary = {r: dec.summary_sum(d.groups[r]) for r in d.groups}
    lower = {r: dec.lower_sum(d.groups[r]) for r in d.groups}
    return ConformanceReport(original, summary, lower, mismatches)


@dataclass(frozen=True)
class Falsification:
    kind: str  # "nonconforming", "lower", "stuck", "misaligned"
    step: int
    detail: str

    def to_json(self) -> dict:
        return {"kind": self.kind, "step": self.step, "detail": self.detail}


@dataclass(frozen=True)
class Reconstruction:
    original: Path
    reports: tuple[ConformanceReport, ...]
    falsifications: tuple[Falsification, ...]


def location_alias(p_orig: Program, p_dec: Program) -> dict[str, str]:
    """Map each transformed location to the original location it stands for."""
    n = len(p_orig.edges)
    nxt = {e.src: e.dst for e in p_dec.edges[n:] if isinstance(e.cmd, Reset)}
    alias = {}
    for loc in p_dec.locations:
        cur = loc
        seen = set()
        while cur in nxt and cur not in seen:
            seen.add(cur)
            cur = nxt[cur]
        alias[loc] = cur
    return alias


def original_store_for(p_orig: Program, dec_init: Store) -> Store:
    """Original-program start store sharing the program variables of ``dec_init``."""
    base = initial_store(p_orig, {x: dec_init.vars[x] for x in p_orig.inputs})
    return Store(dict(dec_init.vars), base.res, base.ub, base.cnt, base.lb)


def reconstruct_original_path(
    p_orig: Program, p_dec: Program, d: Decomposition, tr: Path
) -> Reconstruction:
    """Replay a transformed path on the original program in lockstep.

    Reset steps are erased; every other step replays the original edge with
    the same havoc value. A conformance report is produced for every state
    of ``tr``. Stuck original steps and misalignments are recorded as
    falsifications rather than raised.
    """
    n = len(p_orig.edges)
    alias = location_alias(p_orig, p_dec)
    orig_store = original_store_for(p_orig, tr.init.store)
    loc = p_orig.entry
    orig_path = Path(State(loc, orig_store))
    falsified: list[Falsification] = []

    def report(k: int, dec_store: Store) -> ConformanceReport:
        rep = conforms(orig_store, dec_store, d)
        if not rep.conforming:
            falsified.append(Falsification("nonconforming", k, _describe(rep)))
        if not rep.lower_conforming:
            falsified.append(Falsification("lower", k, f"lower slack {rep.lower_slack}"))
        return rep

    reports = [report(0, tr.init.store)]
    if alias.get(tr.init.loc) != loc:
        falsified.append(Falsification("misaligned", 0, f"start {tr.init.loc} vs {loc}"))

    for k, s in enumerate(tr.steps, start=1):
        if s.edge is None:
            falsified.append(Falsification("misaligned", k, "step has no edge index"))
            break
        if s.edge >= n:
            if not isinstance(s.cmd, Reset) or alias.get(s.post.loc) != loc:
                falsified.append(Falsification("misaligned", k, f"unexpected step {s.cmd}"))
                break
            reports.append(report(k, s.post.store))
            continue
        e = p_orig.edges[s.edge]
        if e.src != loc or alias.get(s.post.loc) != e.dst:
            falsified.append(
                Falsification("misaligned", k, f"edge {p_orig.edge_ids[s.edge]} taken at {loc}")
            )
            break
        tape = NondetTape([] if s.havoc is None else [s.havoc])
        outcome = eval_cmd(orig_store, e.cmd, tape)
        if not isinstance(outcome, Progress):
            falsified.append(Falsification("stuck", k, f"{type(outcome).__name__} on {p_orig.edge_ids[s.edge]}"))
            break
        orig_path = orig_path.extend(
            Step(orig_store, e.cmd, State(e.dst, outcome.store), s.edge, s.havoc)
        )
        orig_store = outcome.store
        loc = e.dst
        reports.append(report(k, s.post.store))
    return Reconstruction(orig_path, tuple(reports), tuple(falsified))


def _describe(rep: ConformanceReport) -> str:
    if rep.mismatches:
        return f"variables differ: {list(rep.mismatches)}"
    bad = {r: (rep.original[r], rep.summary[r]) for r, v in rep.slack.items() if v < 0}
    return "original exceeds summary: " + ", ".join(
        f"{r}={o} > {s}" for r, (o, s) in bad.items()
    )


# --------------------------------------------------------------------------
# Differential harness
# --------------------------------------------------------------------------


@dataclass
class DifftestSummary:
    trials: int = 0
    steps: int = 0
    reports: int = 0
    nonconforming: int = 0
    lower_nonconforming: int = 0
    stuck_original: int = 0
    misaligned: int = 0
    min_slack: int | None = None
    max_slack: int | None = None
    examples: list[dict] = field(default_factory=list)

    @property
    def falsifications(self) -> int:
        return self.nonconforming + self.lower_nonconforming + self.stuck_original + self.misaligned

    def merge(self, other: "DifftestSummary") -> None:
        self.trials += other.trials
        self.steps += other.steps
        self.reports += other.reports
        self.nonconforming += other.nonconforming
        self.lower_nonconforming += other.lower_nonconforming
        self.stuck_original += other.stuck_original
        self.misaligned += other.misaligned
        for attr, pick in (("min_slack", min), ("max_slack", max)):
            a, b = getattr(self, attr), getattr(other, attr)
            setattr(self, attr, b if a is None else a if b is None else pick(a, b))
        self.examples.extend(other.examples[: max(0, 5 - len(self.examples))])

    def to_json(self) -> dict:
        return {
            "trials": self.trials,
            "steps": self.steps,
            "reports": self.reports,
            "falsifications": self.falsifications,
            "nonconforming": self.nonconforming,
            "lower_nonconforming": self.lower_nonconforming,
            "stuck_original": self.stuck_original,
            "misaligned": self.misaligned,
            "min_slack": self.min_slack,
            "max_slack": self.max_slack,
            "examples": self.examples,
        }


def draw_inputs(
    p: Program, input_domain: Mapping[str, range], rng: random.Random, tries: int = 200
) -> dict[str, int] | None:
    """Uniform input vector satisfying the precondition, by rejection."""
    for _ in range(tries):
        vec = {x: rng.choice(input_domain[x]) for x in p.inputs}
        if eval_expr(Store(vec), p.pre):
            return vec
    return None


def corrupt_transform(p_dec: Program, p_orig: Program, kind: str = "drop_use", which: int = 0) -> Program:
    """Deliberately broken transform, for checking the harness catches it.

    ``drop_use`` turns the ``which``-th use into ``skip``; ``negate_use``
    flips the sign of its amount.
    """
    n = len(p_orig.edges)
    uses = [i for i, e in enumerate(p_dec.edges[:n]) if isinstance(e.cmd, Use)]
    if not uses:
        return p_dec
    i = uses[which % len(uses)]
    edges = list(p_dec.edges)
    e = edges[i]
    if kind == "drop_use":
        edges[i] = Edge(e.src, Skip(), e.dst)
    elif kind == "negate_use":
        edges[i] = Edge(e.src, Use(e.cmd.resource, Neg(e.cmd.expr)), e.dst)
    else:
        raise ValueError(f"unknown corruption {kind!r}")
    return Program(p_dec.name, p_dec.inputs, p_dec.pre, p_dec.resources, p_dec.entry, tuple(edges))


def trial_rng(seed: int, index: int) -> random.Random:
    return random.Random(f"{seed}:{index}")


def difftest_program(
    p_orig: Program,
    p_dec: Program,
    d: Decomposition,
    trials: int,
    seed: int,
    input_domain: Mapping[str, range],
    havoc_domain: Sequence[int],
    fuel: int,
) -> DifftestSummary:
    """Run ``trials`` random paths of ``p_dec`` and reconstruct each original."""
    out = DifftestSummary()
    for t in range(trials):
        rng = trial_rng(seed, t)
        vec = draw_inputs(p_orig, input_domain, rng)
        if vec is None:
            continue
        init = initial_store(p_dec, vec)
        tr = sample_path(p_dec, init, havoc_domain, fuel, rng)
        rec = reconstruct_original_path(p_orig, p_dec, d, tr)
        out.trials += 1
        out.steps += len(tr)
        out.reports += len(rec.reports)
        for rep in rec.reports:
            for v in rep.slack.values():
                out.min_slack = v if out.min_slack is None else min(out.min_slack, v)
                out.max_slack = v if out.max_slack is None else max(out.max_slack, v)
        kinds = [f.kind for f in rec.falsifications]
        out.nonconforming += kinds.count("nonconforming")
        out.lower_nonconforming += kinds.count("lower")
        out.stuck_original += kinds.count("stuck")
        out.misaligned += kinds.count("misaligned")
        if rec.falsifications and len(out.examples) < 5:
            out.examples.append(
                {
                    "trial": t,
                    "inputs": vec,
                    "havocs": tr.havocs,
                    "falsifications": [f.to_json() for f in rec.falsifications[:3]],
                }
            )
    return out


def difftest(
    p_orig: Program,
    d: Decomposition,
    trials: int,
    seed: int,
    havoc_domain: Sequence[int],
    fuel: int,
    input_domain: Mapping[str, range] | range | None = None,
) -> DifftestSummary:
    """Transform under ``d`` and check conformance along random runs.

    Every valid decomposition should give zero falsifications.
    """
    p_dec = transform_program(p_orig, d)
    domain = normalize_domain(p_orig, input_domain if input_domain is not None else havoc_domain)
    return difftest_program(p_orig, p_dec, d, trials, seed, domain, havoc_domain, fuel)


def normalize_domain(p: Program, domain: Mapping[str, Iterable[int]] | Iterable[int]) -> dict[str, range]:
    """Per-input value lists from a uniform range or a per-input mapping."""
    if isinstance(domain, Mapping):
        return {x: list(domain[x]) for x in p.inputs}
    values = list(domain)
    return {x: values for x in p.inputs}
