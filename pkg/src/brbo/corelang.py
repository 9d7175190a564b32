"""Abstract syntax for the resource-tracking CFG language.

Programs are control-flow graphs whose edges carry commands. Program
expressions range over program variables only; resources and their
summary variables (``ub``, ``cnt``, ``lb``) live in a separate part of the
store and are touched only by resource commands.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Union

Value = Union[int, bool]

ARITH_OPS = ("+", "-", "*", "min", "max")
COMPARE_OPS = ("<", "<=", "==", "!=", ">=", ">")
BOOL_OPS = ("&&", "||")


# --------------------------------------------------------------------------
# Expressions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class BoolLit:
    value: bool


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"

    def __post_init__(self):
        if self.op not in ARITH_OPS + COMPARE_OPS + BOOL_OPS:
            raise ValueError(f"unknown operator {self.op!r}")


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class Not:
    operand: "Expr"


Expr = Union[Var, IntLit, BoolLit, BinOp, Neg, Not]

TRUE = BoolLit(True)


def free_vars(e: Expr) -> frozenset[str]:
    """Syntactic variable set of ``e``."""
    out: set[str] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, BinOp):
            stack.append(node.left)
            stack.append(node.right)
        elif isinstance(node, (Neg, Not)):
            stack.append(node.operand)
    return frozenset(out)


def conj(*parts: Expr) -> Expr:
    """Left-nested conjunction; ``true`` for no parts."""
    if not parts:
        return TRUE
    out = parts[0]
    for p in parts[1:]:
        out = BinOp("&&", out, p)
    return out


def expr_sort(e: Expr, var_sort=lambda name: "int") -> str:
    """Return ``"int"`` or ``"bool"``; raise :class:`TypeError` when ill-typed."""
    if isinstance(e, Var):
        return var_sort(e.name)
    if isinstance(e, IntLit):
        return "int"
    if isinstance(e, BoolLit):
        return "bool"
    if isinstance(e, Neg):
        if expr_sort(e.operand, var_sort) != "int":
            raise TypeError("unary minus expects an int operand")
        return "int"
    if isinstance(e, Not):
        if expr_sort(e.operand, var_sort) != "bool":
            raise TypeError("'!' expects a bool operand")
        return "bool"
    left = expr_sort(e.left, var_sort)
    right = expr_sort(e.right, var_sort)
    if e.op in ARITH_OPS:
        if left != "int" or right != "int":
            raise TypeError(f"'{e.op}' expects int operands")
        return "int"
    if e.op in BOOL_OPS:
        if left != "bool" or right != "bool":
            raise TypeError(f"'{e.op}' expects bool operands")
        return "bool"
    if e.op in ("==", "!="):
        if left != right:
            raise TypeError(f"'{e.op}' compares {left} with {right}")
        return "bool"
    if left != "int" or right != "int":
        raise TypeError(f"'{e.op}' expects int operands")
    return "bool"


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Skip:
    pass


@dataclass(frozen=True)
class Assign:
    var: str
    expr: Expr


@dataclass(frozen=True)
class Assume:
    cond: Expr


@dataclass(frozen=True)
class Havoc:
    var: str


@dataclass(frozen=True)
class Use:
    resource: str
    expr: Expr


@dataclass(frozen=True)
class UbCheck:
    resources: tuple[str, ...]
    bound: Expr


@dataclass(frozen=True)
class LbCheck:
    bound: Expr
    resources: tuple[str, ...]


@dataclass(frozen=True)
class Reset:
    resource: str


Cmd = Union[Skip, Assign, Assume, Havoc, Use, UbCheck, LbCheck, Reset]


def cmd_exprs(c: Cmd) -> tuple[Expr, ...]:
    if isinstance(c, Assign):
        return (c.expr,)
    if isinstance(c, Assume):
        return (c.cond,)
    if isinstance(c, Use):
        return (c.expr,)
    if isinstance(c, (UbCheck, LbCheck)):
        return (c.bound,)
    return ()


def cmd_resources(c: Cmd) -> tuple[str, ...]:
    if isinstance(c, (Use, Reset)):
        return (c.resource,)
    if isinstance(c, (UbCheck, LbCheck)):
        return c.resources
    return ()


def assigned_var(c: Cmd) -> str | None:
    if isinstance(c, (Assign, Havoc)):
        return c.var
    return None


# --------------------------------------------------------------------------
# Programs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Edge:
    src: str
    cmd: Cmd
    dst: str


@dataclass(frozen=True)
class Program:
    name: str
    inputs: tuple[str, ...]
    pre: Expr
    resources: tuple[str, ...]
    entry: str
    edges: tuple[Edge, ...] = ()

    @cached_property
    def locations(self) -> tuple[str, ...]:
        """All locations, entry first, then in order of first mention."""
        seen = {self.entry: None}
        for e in self.edges:
            seen.setdefault(e.src, None)
            seen.setdefault(e.dst, None)
        return tuple(seen)

    @cached_property
    def out_edges(self) -> Mapping[str, tuple[int, ...]]:
        out: dict[str, list[int]] = defaultdict(list)
        for i, e in enumerate(self.edges):
            out[e.src].append(i)
        return {loc: tuple(out.get(loc, ())) for loc in self.locations}

    @cached_property
    def in_edges(self) -> Mapping[str, tuple[int, ...]]:
        inc: dict[str, list[int]] = defaultdict(list)
        for i, e in enumerate(self.edges):
            inc[e.dst].append(i)
        return {loc: tuple(inc.get(loc, ())) for loc in self.locations}

    @cached_property
    def variables(self) -> tuple[str, ...]:
        """Every program variable: inputs, then assigned or read names."""
        names = dict.fromkeys(self.inputs)
        names.update(dict.fromkeys(sorted(free_vars(self.pre))))
        for e in self.edges:
            v = assigned_var(e.cmd)
            if v is not None:
                names.setdefault(v, None)
            for x in cmd_exprs(e.cmd):
                names.update(dict.fromkeys(sorted(free_vars(x))))
        return tuple(names)

    @cached_property
    def internal_vars(self) -> frozenset[str]:
        """Non-input variables; these are the candidates for low inputs."""
        return frozenset(self.variables) - frozenset(self.inputs)

    @cached_property
    def edge_ids(self) -> tuple[str, ...]:
        """Stable textual ids ``src>dst#k``; ``k`` counts parallel edges."""
        counter: dict[tuple[str, str], int] = defaultdict(int)
        ids = []
        for e in self.edges:
            k = counter[e.src, e.dst]
            counter[e.src, e.dst] += 1
            ids.append(f"{e.src}>{e.dst}#{k}")
        return tuple(ids)

    def edge_index(self, edge_id: str) -> int:
        try:
            return self.edge_ids.index(edge_id)
        except ValueError:
            raise KeyError(f"no edge {edge_id!r} in program {self.name!r}") from None


def use_sites(p: Program, resource: str) -> list[int]:
    """Indices of the edges whose command is ``use resource (...)``."""
    return [
        i
        for i, e in enumerate(p.edges)
        if isinstance(e.cmd, Use) and e.cmd.resource == resource
    ]


# --------------------------------------------------------------------------
# Stores, states, paths
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Store:
    """Program variables plus resource and summary maps.

    Treated as immutable; every update builds a new store.
    """

    vars: Mapping[str, Value]
    res: Mapping[str, int] = field(default_factory=dict)
    ub: Mapping[str, int] = field(default_factory=dict)
    cnt: Mapping[str, int] = field(default_factory=dict)
    lb: Mapping[str, int] = field(default_factory=dict)

    def _key(self):
        try:
            return self.__dict__["_k"]
        except KeyError:
            k = (
                frozenset(self.vars.items()),
                frozenset(self.res.items()),
                frozenset(self.ub.items()),
                frozenset(self.cnt.items()),
                frozenset(self.lb.items()),
            )
            object.__setattr__(self, "_k", k)
            return k

    def __eq__(self, other):
        if not isinstance(other, Store):
            return NotImplemented
        return (
            self.vars == other.vars
            and self.res == other.res
            and self.ub == other.ub
            and self.cnt == other.cnt
            and self.lb == other.lb
        )

    def __hash__(self):
        return hash(self._key())

    def with_var(self, name: str, value: Value) -> "Store":
        new_vars = dict(self.vars)
        new_vars[name] = value
        return Store(new_vars, self.res, self.ub, self.cnt, self.lb)

    def with_resource(self, name: str, value: int) -> "Store":
        new_res = dict(self.res)
        new_res[name] = value
        return Store(self.vars, new_res, self.ub, self.cnt, self.lb)

    def summary_sum(self, resources: Iterable[str]) -> int:
        """Sum of ``cnt*ub + r`` over ``resources``."""
        return sum(self.cnt[r] * self.ub[r] + self.res[r] for r in resources)

    def lower_sum(self, resources: Iterable[str]) -> int:
        """Sum of ``cnt*lb + r`` over ``resources``."""
        return sum(self.cnt[r] * self.lb[r] + self.res[r] for r in resources)

    def meta_env(self) -> dict[str, Value]:
        """Flat view for meta-level predicates: ``#sb``, ``ub#sb``, ``cnt#sb``, ``lb#sb``."""
        env: dict[str, Value] = dict(self.vars)
        for r, v in self.res.items():
            env[r] = v
            env["ub" + r] = self.ub[r]
            env["cnt" + r] = self.cnt[r]
            env["lb" + r] = self.lb[r]
        return env

    def to_json(self) -> dict:
        return {
            "vars": dict(self.vars),
            "res": dict(self.res),
            "ub": dict(self.ub),
            "cnt": dict(self.cnt),
            "lb": dict(self.lb),
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Store":
        return cls(
            dict(data["vars"]),
            dict(data.get("res", {})),
            dict(data.get("ub", {})),
            dict(data.get("cnt", {})),
            dict(data.get("lb", {})),
        )

    def __repr__(self):
        parts = [f"{k}={v}" for k, v in self.vars.items()]
        parts += [
            f"{r}={self.res[r]}(ub={self.ub[r]},cnt={self.cnt[r]})" for r in self.res
        ]
        return "Store(" + ", ".join(parts) + ")"


def initial_store(p: Program, inputs: Mapping[str, int]) -> Store:
    """Start-of-program store.

    Inputs take the given values, other program variables start at 0,
    every resource at 0 with ``ub = 0``, ``cnt = -1``, ``lb = 0``.
    """
    missing = [x for x in p.inputs if x not in inputs]
    if missing:
        raise KeyError(f"missing input values for {missing}")
    vars_ = {x: 0 for x in p.variables}
    vars_.update({x: inputs[x] for x in p.inputs})
    rs = p.resources
    return Store(
        vars_,
        {r: 0 for r in rs},
        {r: 0 for r in rs},
        {r: -1 for r in rs},
        {r: 0 for r in rs},
    )


@dataclass(frozen=True)
class State:
    loc: str
    store: Store


@dataclass(frozen=True)
class Step:
    """One executed edge: the store before, the command, and the state after.

    ``edge`` is the index of the executed edge in its program (``None``
    for steps not tied to a program) and ``havoc`` the value a ``Havoc``
    consumed.
    """

    pre: Store
    cmd: Cmd
    post: State
    edge: int | None = None
    havoc: int | None = None


@dataclass(frozen=True)
class Path:
    init: State
    steps: tuple[Step, ...] = ()

    @property
    def last(self) -> State:
        return self.steps[-1].post if self.steps else self.init

    @property
    def states(self) -> list[State]:
        return [self.init] + [s.post for s in self.steps]

    def __len__(self):
        return len(self.steps)

    def extend(self, step: Step) -> "Path":
        return Path(self.init, self.steps + (step,))

    def prefix(self, n: int) -> "Path":
        return Path(self.init, self.steps[:n])

    @property
    def havocs(self) -> list[int]:
        return [s.havoc for s in self.steps if s.havoc is not None]


def path_shape_ok(tr: Path) -> bool:
    """Structural alternation check: each step starts from the previous store."""
    prev = tr.init.store
    for s in tr.steps:
        if s.pre != prev:
            return False
        prev = s.post.store
    return True


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    where: str
    message: str

    def __str__(self):
        return f"{self.where}: {self.message}"


def validate_program(p: Program) -> list[Diagnostic]:
    """Check structural, naming and typing invariants; empty list when valid."""
    diags: list[Diagnostic] = []
    resources = set(p.resources)

    for group, label in ((p.inputs, "input"), (p.resources, "resource")):
        seen = set()
        for name in group:
            if name in seen:
                diags.append(Diagnostic("header", f"duplicate {label} {name!r}"))
            seen.add(name)

    clash = resources & set(p.variables)
    for name in sorted(clash):
        diags.append(
            Diagnostic("header", f"{name!r} is used both as a resource and a variable")
        )

    if p.edges and not any(e.src == p.entry for e in p.edges):
        diags.append(Diagnostic("entry", f"entry {p.entry!r} has no out-edge"))

    def sort_of(where):
        def var_sort(name):
            if name in resources:
                raise TypeError(f"resource {name!r} used in a program expression")
            return "int"

        return var_sort

    def check_expr(where: str, e: Expr, want: str):
        try:
            got = expr_sort(e, sort_of(where))
        except TypeError as exc:
            diags.append(Diagnostic(where, str(exc)))
            return
        if got != want:
            diags.append(Diagnostic(where, f"expected {want} expression, got {got}"))

    check_expr("pre", p.pre, "bool")

    for eid, e in zip(p.edge_ids, p.edges):
        c = e.cmd
        where = f"edge {eid}"
        if isinstance(c, Assign):
            check_expr(where, c.expr, "int")
        elif isinstance(c, Assume):
            check_expr(where, c.cond, "bool")
        elif isinstance(c, Use):
            check_expr(where, c.expr, "int")
        elif isinstance(c, (UbCheck, LbCheck)):
            check_expr(where, c.bound, "int")
            if not c.resources:
                diags.append(Diagnostic(where, "bound check over an empty resource set"))
        var = assigned_var(c)
        if var is not None and var in resources:
            diags.append(Diagnostic(where, f"assignment to resource {var!r}"))
        for r in cmd_resources(c):
            if r not in resources:
                diags.append(Diagnostic(where, f"undeclared resource {r!r}"))
    return diags


class ProgramError(ValueError):
    """Raised when an operation receives a program that fails validation."""

    def __init__(self, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        super().__init__("; ".join(str(d) for d in diagnostics))


def require_valid(p: Program) -> Program:
    diags = validate_program(p)
    if diags:
        raise ProgramError(diags)
    return p
