"""Command-line driver.

Exit codes: 0 success or no violation, 1 violation or falsification,
2 usage, parse or decomposition errors, 3 state cap reached.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources as importlib_resources
from pathlib import Path as FsPath

from .analyses import backward_slice, constant_analysis, dominator_tree, prune_unreachable, site_inputs
from .corelang import Program, ProgramError, Reset, Use, initial_store
from .decompose import (
    Decomposition,
    DecompositionError,
    difftest,
    identity_decomposition,
    normalize_domain,
    transform_program,
)
from .interp import NondetTape, ResourceLimitError, run, trace_to_json
from .select import SelectionError, select
from .syntax import ParseError, format_program, parse_expr, parse_program
from .verify import (
    NoViolationUpToBounds,
    ResourceLimit,
    Violation,
    bounded_verify,
    check_predicate_at,
    noninterference_probe,
    verdict_to_json,
)

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Argument helpers
# --------------------------------------------------------------------------


def corpus_dir():
    return importlib_resources.files("brbo") / "corpus"


def corpus_names() -> list[str]:
    return sorted(f.name for f in corpus_dir().iterdir() if f.name.endswith(".brbo"))


def read_source(path: str) -> tuple[str, str]:
    """Text of ``path``; falls back to the bundled corpus by file name or program name."""
    fs = FsPath(path)
    if fs.exists():
        return fs.read_text(), str(fs)
    name = fs.name if fs.suffix else fs.name + ".brbo"
    bundled = corpus_dir() / name
    if bundled.is_file():
        return bundled.read_text(), f"<corpus>/{name}"
    stem = FsPath(name).stem
    for other in corpus_names():
        text = (corpus_dir() / other).read_text()
        if f"\nprogram {stem}\n" in "\n" + text:
            return text, f"<corpus>/{other}"
    raise UsageError(f"{path}: no such file")


def load_program(path: str) -> Program:
    text, where = read_source(path)
    try:
        return parse_program(text)
    except ParseError as exc:
        raise UsageError(f"{where}:{exc}") from exc


def parse_range(text: str) -> range:
    """``lo..hi`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return range(int(lo), int(hi) + 1)
        v = int(text)
        return range(v, v + 1)
    except ValueError:
        raise UsageError(f"bad range {text!r}; expected lo..hi") from None


def parse_domain(p: Program, text: str) -> dict[str, range]:
    """``lo..hi`` for every input, or ``x=lo..hi,y=lo..hi`` covering all inputs."""
    if "=" not in text:
        return normalize_domain(p, parse_range(text))
    out = {}
    for part in text.split(","):
        name, _, rng = part.partition("=")
        name = name.strip()
        if name not in p.inputs:
            raise UsageError(f"{name!r} is not an input of {p.name}")
        out[name] = parse_range(rng.strip())
    missing = [x for x in p.inputs if x not in out]
    if missing:
        raise UsageError(f"no range given for inputs {missing}")
    return out


def parse_assignment(p: Program, text: str) -> dict[str, int]:
    vals = {}
    for part in filter(None, (s.strip() for s in text.split(","))):
        name, _, v = part.partition("=")
        try:
            vals[name.strip()] = int(v)
        except ValueError:
            raise UsageError(f"bad input assignment {part!r}") from None
    missing = [x for x in p.inputs if x not in vals]
    if missing:
        raise UsageError(f"no value given for inputs {missing}")
    return vals


def load_decomposition(path: str) -> Decomposition:
    try:
        return Decomposition.from_json(json.loads(FsPath(path).read_text()))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: cannot read decomposition ({exc})") from exc


def chosen_decomposition(p: Program, args) -> Decomposition | None:
    if getattr(args, "groups", None):
        return load_decomposition(args.groups)
    if getattr(args, "auto", False):
        return select(p)[0]
    if getattr(args, "identity", False):
        return identity_decomposition(p)
    return None


def maybe_transform(p: Program, args) -> Program:
    d = chosen_decomposition(p, args)
    return p if d is None else transform_program(p, d)


def emit(args, payload: dict, text: str) -> None:
    if getattr(args, "format", "text") == "json":
        print(json.dumps(payload, indent=2))
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_parse(args) -> int:
    p = load_program(args.file)
    sys.stdout.write(format_program(p))
    return EXIT_OK


def cmd_run(args) -> int:
    p = maybe_transform(load_program(args.file), args)
    vals = parse_assignment(p, args.inputs)
    tape = NondetTape(int(v) for v in args.tape.split(",") if v.strip()) if args.tape else NondetTape()
    res = run(p, initial_store(p, vals), tape, args.fuel)
    payload = trace_to_json(res.path)
    payload["outcome"] = res.outcome
    print(json.dumps(payload, indent=2))
    return EXIT_VIOLATION if res.outcome == "violation" else EXIT_OK


def cmd_select(args) -> int:
    p = load_program(args.file)
    d, trace = select(p, refine_assumes=args.refine_assumes)
    if args.output:
        FsPath(args.output).write_text(d.dumps() + "\n")
    emit(
        args,
        {"decomposition": d.to_json(), "trace": trace.to_json()},
        d.dumps() + "\n" + trace.to_text(),
    )
    return EXIT_OK


def cmd_transform(args) -> int:
    p = load_program(args.file)
    d = chosen_decomposition(p, args)
    if d is None:
        raise UsageError("transform needs --groups FILE or --auto")
    out = format_program(transform_program(p, d))
    if args.output:
        FsPath(args.output).write_text(out)
    else:
        sys.stdout.write(out)
    return EXIT_OK


def _verdict_text(v) -> str:
    if isinstance(v, NoViolationUpToBounds):
        return f"no violation up to bounds: {v.inputs} input vectors, {v.states} states, fuel {v.fuel}"
    if isinstance(v, ResourceLimit):
        return f"state cap of {v.cap} reached after {v.inputs} input vectors"
    j = verdict_to_json(v)
    lines = [f"violation at inputs {v.inputs}: {json.dumps(j['check'])}"]
    for st, c in zip(j["trace"]["states"], j["trace"]["cmds"] + [""]):
        lines.append(f"  {st['loc']}: {c}")
    return "\n".join(lines)


def _exit_for(v) -> int:
    if isinstance(v, Violation):
        return EXIT_VIOLATION
    if isinstance(v, ResourceLimit):
        return EXIT_LIMIT
    return EXIT_OK


def cmd_verify(args) -> int:
    p = maybe_transform(load_program(args.file), args)
    domain = parse_domain(p, args.inputs)
    havoc = parse_range(args.havoc)
    if args.pred:
        if not args.at:
            raise UsageError("--pred needs --at LOC")
        try:
            pred = parse_expr(args.pred)
        except ParseError as exc:
            raise UsageError(f"--pred: {exc}") from exc
        if args.at not in p.locations:
            raise UsageError(f"unknown location {args.at!r}")
        v = check_predicate_at(p, args.at, pred, domain, havoc, args.fuel, args.cap)
    else:
        v = bounded_verify(p, domain, havoc, args.fuel, args.cap)
    emit(args, verdict_to_json(v), _verdict_text(v))
    return _exit_for(v)


def cmd_difftest(args) -> int:
    p = load_program(args.file)
    d = chosen_decomposition(p, args) or select(p)[0]
    havoc = parse_range(args.havoc)
    domain = parse_domain(p, args.inputs) if args.inputs else normalize_domain(p, havoc)
    s = difftest(p, d, args.trials, args.seed, havoc, args.fuel, input_domain=domain)
    text = (
        f"{s.trials} trials, {s.steps} steps, {s.reports} conformance checks: "
        f"{s.falsifications} falsifications"
    )
    emit(args, s.to_json(), text)
    return EXIT_VIOLATION if s.falsifications else EXIT_OK


def cmd_analyze(args) -> int:
    p = load_program(args.file)
    pruned, diags = prune_unreachable(p)
    dom = dominator_tree(pruned)
    consts = constant_analysis(pruned, refine_assumes=args.refine_assumes)
    sites = {}
    for i, e in enumerate(pruned.edges):
        if isinstance(e.cmd, Use):
            per_loc = site_inputs(pruned, i)
            sites[pruned.edge_ids[i]] = {
                "slice": sorted(backward_slice(pruned, i)),
                "inputs": {loc: sorted(v) for loc, v in per_loc.items() if v},
            }
    payload = {
        "dominators": dom.to_json(),
        "constants": consts.to_json(),
        "sites": sites,
        "diagnostics": [str(d) for d in diags],
    }
    lines = ["immediate dominators:"]
    lines += [f"  {loc} <- {d}" for loc, d in dom.idom.items() if loc != dom.entry]
    lines.append("constants:")
    for loc, env in consts.facts.items():
        known = [f"{x}={v.value}" for x, v in env.items() if consts.is_const(loc, x)]
        lines.append(f"  {loc}: {', '.join(known) or '-'}")
    lines.append("use sites:")
    for sid, info in sites.items():
        lines.append(f"  {sid}: slice {{{', '.join(info['slice'])}}}")
    lines += [f"note: {d}" for d in diags]
    emit(args, payload, "\n".join(lines))
    return EXIT_OK


def cmd_probe_ni(args) -> int:
    p = maybe_transform(load_program(args.file), args)
    if not any(isinstance(e.cmd, Reset) for e in p.edges):
        raise UsageError("program has no resets; pass --auto or --groups FILE")
    havoc = parse_range(args.havoc)
    domain = parse_domain(p, args.inputs)
    low = [x.strip() for x in args.low.split(",") if x.strip()] if args.low else []
    try:
        rep = noninterference_probe(
            p, args.resource, args.reset_loc, low, args.trials, args.seed, domain, havoc, args.fuel
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    text = (
        f"{rep.segments} segments, {rep.pairs} pairs with equal low inputs; "
        f"max difference {rep.max_difference}; histogram {dict(sorted(rep.differences.items()))}"
    )
    emit(args, rep.to_json(), text)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="brbo", description="Selectively amortized resource bounding.")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("file", help="program file (bundled corpus names also resolve)")
        sp.set_defaults(func=func)
        return sp

    def decomp_flags(sp, required=False):
        g = sp.add_mutually_exclusive_group(required=required)
        g.add_argument("--groups", metavar="FILE", help="decomposition JSON to apply")
        g.add_argument("--auto", action="store_true", help="apply the selected decomposition")
        g.add_argument("--identity", action="store_true", help="one group per resource, no resets")

    def fmt(sp):
        sp.add_argument("--format", choices=("json", "text"), default="text")

    add("parse", cmd_parse, "validate and print in canonical form")

    sp = add("run", cmd_run, "run once on a havoc tape and dump the trace")
    sp.add_argument("--inputs", default="", help="x=1,y=2")
    sp.add_argument("--tape", default="", help="comma-separated havoc values")
    sp.add_argument("--fuel", type=int, default=1000)
    decomp_flags(sp)

    sp = add("select", cmd_select, "choose amortization groups and resets")
    sp.add_argument("-o", "--output", help="also write the decomposition JSON here")
    sp.add_argument("--refine-assumes", action="store_true")
    fmt(sp)

    sp = add("transform", cmd_transform, "insert resets and rename uses")
    sp.add_argument("-o", "--output")
    decomp_flags(sp)

    sp = add("verify", cmd_verify, "bounded exhaustive check of ub!/lb! or a predicate")
    sp.add_argument("--inputs", default="0..2", help="lo..hi for all inputs, or x=lo..hi,...")
    sp.add_argument("--havoc", default="0..3")
    sp.add_argument("--fuel", type=int, default=400)
    sp.add_argument("--cap", type=int, default=None, help="state cap (default BRBO_STATE_CAP or 10^7)")
    sp.add_argument("--at", metavar="LOC", help="location for --pred")
    sp.add_argument("--pred", help="predicate over variables, resources and ub#r/cnt#r/lb#r")
    decomp_flags(sp)
    fmt(sp)

    sp = add("difftest", cmd_difftest, "random lockstep conformance testing")
    sp.add_argument("--trials", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--inputs", default=None)
    sp.add_argument("--havoc", default="0..3")
    sp.add_argument("--fuel", type=int, default=200)
    decomp_flags(sp)
    fmt(sp)

    sp = add("analyze", cmd_analyze, "dominators, constants and slices")
    sp.add_argument("--refine-assumes", action="store_true")
    fmt(sp)

    sp = add("probe-ni", cmd_probe_ni, "sample segment pairs with equal low inputs")
    sp.add_argument("--resource", required=True)
    sp.add_argument("--reset-loc", required=True)
    sp.add_argument("--low", default="", help="comma-separated low variables")
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--inputs", default="0..2")
    sp.add_argument("--havoc", default="0..3")
    sp.add_argument("--fuel", type=int, default=200)
    decomp_flags(sp)
    fmt(sp)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"brbo: {exc}", file=sys.stderr)
    except (ParseError, ProgramError, DecompositionError, SelectionError) as exc:
        print(f"brbo: {exc}", file=sys.stderr)
    except ResourceLimitError as exc:
        print(f"brbo: {exc}", file=sys.stderr)
        return EXIT_LIMIT
    return EXIT_USAGE

