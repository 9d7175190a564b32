"""Reader and printer for ``.brbo`` program text.

The format is line oriented::

    program replaceTags
    inputs #ts, #text
    pre 0 <= #ts
    resources #sb
    entry L0
    edge L0 -> L1 : use #sb (#text)

``//`` starts a comment. Identifiers may contain ``#`` (``#sb``,
``ts#rep``) and locations may additionally contain ``.``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .corelang import (
    TRUE,
    Assign,
    Assume,
    BinOp,
    BoolLit,
    Cmd,
    Edge,
    Expr,
    Havoc,
    IntLit,
    LbCheck,
    Neg,
    Not,
    Program,
    Reset,
    Skip,
    UbCheck,
    Use,
    Var,
    validate_program,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(f"{where}{message}")


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_#][A-Za-z0-9_#.]*)
  | (?P<op>->|:=|<=|>=|==|!=|&&|\|\||[-+*()<>,:!=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "int", "ident", "op", "eof"
    text: str
    col: int


def tokenize(text: str, line: int = 0) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos + 1))
        pos = m.end()
    tokens.append(Token("eof", "", len(text) + 1))
    return tokens


class _Parser:
    def __init__(self, text: str, line: int = 0):
        self.tokens = tokenize(text, line)
        self.i = 0
        self.line = line

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, self.line, tok.col)

    def accept(self, text: str) -> Token | None:
        if self.tok.text == text and self.tok.kind in ("op", "ident"):
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str, opener: Token | None = None) -> Token:
        t = self.accept(text)
        if t is None:
            if opener is not None:
                raise self.error(f"unclosed '{opener.text}' opened at column {opener.col}", opener)
            found = self.tok.text or "end of line"
            raise self.error(f"expected '{text}', found '{found}'")
        return t

    def ident(self, what: str = "identifier") -> str:
        if self.tok.kind != "ident":
            found = self.tok.text or "end of line"
            raise self.error(f"expected {what}, found '{found}'")
        t = self.tok
        self.i += 1
        return t.text

    def loc(self) -> str:
        if self.tok.kind == "int":
            t = self.tok
            self.i += 1
            return t.text
        return self.ident("location")

    def end(self):
        if self.tok.kind != "eof":
            raise self.error(f"unexpected '{self.tok.text}'")

    # expressions, lowest precedence first

    def expr(self) -> Expr:
        left = self.and_expr()
        while self.accept("||"):
            left = BinOp("||", left, self.and_expr())
        return left

    def and_expr(self) -> Expr:
        left = self.cmp_expr()
        while self.accept("&&"):
            left = BinOp("&&", left, self.cmp_expr())
        return left

    def cmp_expr(self) -> Expr:
        left = self.add_expr()
        t = self.tok
        if t.kind == "op" and t.text in ("<", "<=", "==", "!=", ">=", ">", "="):
            self.i += 1
            op = "==" if t.text == "=" else t.text
            return BinOp(op, left, self.add_expr())
        return left

    def add_expr(self) -> Expr:
        left = self.mul_expr()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            left = BinOp(op, left, self.mul_expr())
        return left

    def mul_expr(self) -> Expr:
        left = self.unary()
        while self.accept("*"):
            left = BinOp("*", left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.accept("-"):
            if self.tok.kind == "int":
                value = int(self.tok.text)
                self.i += 1
                return IntLit(-value)
            return Neg(self.unary())
        if self.accept("!"):
            return Not(self.unary())
        return self.atom()

    def atom(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.i += 1
            return IntLit(int(t.text))
        if t.kind == "op" and t.text == "(":
            self.i += 1
            inner = self.expr()
            self.expect(")", opener=t)
            return inner
        if t.kind == "ident":
            self.i += 1
            if t.text == "true":
                return BoolLit(True)
            if t.text == "false":
                return BoolLit(False)
            if t.text in ("min", "max") and self.tok.text == "(":
                opener = self.tok
                self.i += 1
                a = self.expr()
                self.expect(",", opener=opener)
                b = self.expr()
                self.expect(")", opener=opener)
                return BinOp(t.text, a, b)
            return Var(t.text)
        found = t.text or "end of line"
        raise self.error(f"expected expression, found '{found}'")

    # commands

    def cmd(self) -> Cmd:
        t = self.tok
        if t.kind != "ident":
            raise self.error("expected a command")
        if t.text == "skip":
            self.i += 1
            return Skip()
        if t.text == "assume":
            self.i += 1
            opener = self.expect("(")
            cond = self.expr()
            self.expect(")", opener=opener)
            return Assume(cond)
        if t.text == "use" and self.peek().kind == "ident":
            self.i += 1
            r = self.ident("resource")
            opener = self.expect("(")
            e = self.expr()
            self.expect(")", opener=opener)
            return Use(r, e)
        if t.text == "reset" and self.peek().kind == "ident":
            self.i += 1
            return Reset(self.ident("resource"))
        if t.text == "ub" and self.peek().text == "!":
            self.i += 2
            opener = self.expect("(")
            rs = [self.ident("resource")]
            while self.accept(","):
                rs.append(self.ident("resource"))
            self.expect("<=")
            bound = self.add_expr()
            self.expect(")", opener=opener)
            return UbCheck(tuple(rs), bound)
        if t.text == "lb" and self.peek().text == "!":
            self.i += 2
            opener = self.expect("(")
            bound = self.add_expr()
            self.expect("<=")
            rs = [self.ident("resource")]
            while self.accept(","):
                rs.append(self.ident("resource"))
            self.expect(")", opener=opener)
            return LbCheck(bound, tuple(rs))
        var = self.ident("variable")
        self.expect(":=")
        if self.tok.text == "*" and self.peek().kind == "eof":
            self.i += 1
            return Havoc(var)
        return Assign(var, self.expr())


def parse_expr(text: str) -> Expr:
    p = _Parser(text)
    e = p.expr()
    p.end()
    return e


def parse_cmd(text: str) -> Cmd:
    p = _Parser(text)
    c = p.cmd()
    p.end()
    return c


def _ident_list(p: _Parser) -> tuple[str, ...]:
    names = []
    if p.tok.kind == "eof":
        return ()
    names.append(p.ident())
    while p.accept(","):
        names.append(p.ident())
    p.end()
    return tuple(names)


def parse_program(src: str, check: bool = True) -> Program:
    """Parse program text; with ``check`` also run semantic validation."""
    name = None
    inputs: tuple[str, ...] = ()
    pre: Expr = TRUE
    resources: tuple[str, ...] = ()
    entry = None
    edges: list[Edge] = []
    edge_lines: list[int] = []
    seen: set[str] = set()

    for lineno, raw in enumerate(src.splitlines(), start=1):
        text = raw.split("//", 1)[0]
        if not text.strip():
            continue
        p = _Parser(text, lineno)
        head = p.ident("directive")
        if head in ("program", "inputs", "pre", "resources", "entry"):
            if head in seen:
                raise ParseError(f"duplicate '{head}' line", lineno, 1)
            seen.add(head)
        if head == "program":
            name = p.ident("program name")
            p.end()
        elif head == "inputs":
            inputs = _ident_list(p)
        elif head == "pre":
            pre = p.expr()
            p.end()
        elif head == "resources":
            resources = _ident_list(p)
        elif head == "entry":
            entry = p.loc()
            p.end()
        elif head == "edge":
            src_loc = p.loc()
            p.expect("->")
            dst_loc = p.loc()
            p.expect(":")
            c = p.cmd()
            p.end()
            edges.append(Edge(src_loc, c, dst_loc))
            edge_lines.append(lineno)
        else:
            raise ParseError(f"unknown directive '{head}'", lineno, 1)

    if name is None:
        raise ParseError("missing 'program' line")
    if entry is None:
        if edges:
            raise ParseError("missing 'entry' line")
        entry = "L0"
    prog = Program(name, inputs, pre, resources, entry, tuple(edges))
    if check:
        diags = validate_program(prog)
        if diags:
            d = diags[0]
            line = 0
            if d.where.startswith("edge "):
                line = edge_lines[prog.edge_ids.index(d.where[5:])]
            raise ParseError(f"semantic error: {d.message}", line, 1)
    return prog


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------

_PREC = {
    "||": 1,
    "&&": 2,
    "<": 3,
    "<=": 3,
    "==": 3,
    "!=": 3,
    ">=": 3,
    ">": 3,
    "+": 4,
    "-": 4,
    "*": 5,
}
_UNARY = 6
_ATOM = 7


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC.get(e.op, _ATOM)
    if isinstance(e, (Neg, Not)):
        return _UNARY
    if isinstance(e, IntLit) and e.value < 0:
        return _UNARY
    return _ATOM


def format_expr(e: Expr) -> str:
    if isinstance(e, Var):
        return e.name
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, (Neg, Not)):
        sym = "-" if isinstance(e, Neg) else "!"
        inner = format_expr(e.operand)
        if _prec(e.operand) < _ATOM or isinstance(e.operand, IntLit):
            inner = f"({inner})"
        return sym + inner
    if e.op in ("min", "max"):
        return f"{e.op}({format_expr(e.left)}, {format_expr(e.right)})"
    p = _PREC[e.op]
    left, right = format_expr(e.left), format_expr(e.right)
    # comparisons do not chain, so both sides need strictly higher precedence
    if _prec(e.left) < p or (p == 3 and _prec(e.left) == 3):
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    return f"{left} {e.op} {right}"


def format_cmd(c: Cmd) -> str:
    if isinstance(c, Skip):
        return "skip"
    if isinstance(c, Assign):
        return f"{c.var} := {format_expr(c.expr)}"
    if isinstance(c, Havoc):
        return f"{c.var} := *"
    if isinstance(c, Assume):
        return f"assume({format_expr(c.cond)})"
    if isinstance(c, Use):
        return f"use {c.resource} ({format_expr(c.expr)})"
    if isinstance(c, UbCheck):
        return f"ub!({', '.join(c.resources)} <= {_bound(c.bound)})"
    if isinstance(c, LbCheck):
        return f"lb!({_bound(c.bound)} <= {', '.join(c.resources)})"
    if isinstance(c, Reset):
        return f"reset {c.resource}"
    raise TypeError(f"not a command: {c!r}")


def _bound(e: Expr) -> str:
    text = format_expr(e)
    return f"({text})" if _prec(e) < 4 else text


def format_program(p: Program) -> str:
    lines = [f"program {p.name}", "inputs " + ", ".join(p.inputs)]
    if p.pre != TRUE:
        lines.append(f"pre {format_expr(p.pre)}")
    lines.append("resources " + ", ".join(p.resources))
    lines.append(f"entry {p.entry}")
    for e in p.edges:
        lines.append(f"edge {e.src} -> {e.dst} : {format_cmd(e.cmd)}")
    return "\n".join(line.rstrip() for line in lines) + "\n"
