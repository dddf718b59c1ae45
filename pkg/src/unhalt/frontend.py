"""Surface language for integer programs and its lowering to transition systems.

The language is line-oriented:

    n := 0, b := 0
    while b == 0 and n <= 99 do
        if * then b := -1 else if * then b := 0 else b := 1 fi
        n := n + 1
    od

Statements: `x := expr`, `x := ndet()`, `skip`, `while cond do ... od`,
`if cond then ... [else if cond then ...] [else ...] fi`. A `*` condition is a
nondeterministic branch. `else if` chains extend the same conditional (one
program point). Conditions combine comparisons with `and`, `or`, `not`;
expressions are polynomial (`+ - *`, integer literals, variables).

The maximal leading run of assignments fixes the initial valuation: constant
assignments pin their variable, `ndet()` leaves it unconstrained, and every
variable never assigned in the prefix is unconstrained. Locations are named
l0, l1, ... in statement order (the prefix is not a program point); the added
terminal is `lout`.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .poly import Poly
from .tsys import (
    Assertion,
    Transition,
    TransitionSystem,
    frame_rows,
    prime,
    simplify_assertion,
)

KEYWORDS = {
    "while", "do", "od", "if", "then", "else", "fi",
    "skip", "ndet", "and", "or", "not", "true", "false",
}

NDET_PREFIX = "__ndet_"
TERMINAL_NAME = "lout"

MAX_GUARD_DISJUNCTS = 64


class FrontendError(ValueError):
    pass


# ---------------------------------------------------------------------------
# conditions


@dataclass
class Cmp:
    op: str  # le lt ge gt eq ne
    lhs: Poly
    rhs: Poly


@dataclass
class BoolOp:
    op: str  # "and" | "or"
    args: list


@dataclass
class BoolConst:
    value: bool


STAR = object()  # nondeterministic branch condition

Cond = Union[Cmp, BoolOp, BoolConst]

_NEG = {"le": "gt", "lt": "ge", "ge": "lt", "gt": "le", "eq": "ne", "ne": "eq"}


def negate(cond: Cond) -> Cond:
    if isinstance(cond, BoolConst):
        return BoolConst(not cond.value)
    if isinstance(cond, Cmp):
        return Cmp(_NEG[cond.op], cond.lhs, cond.rhs)
    if isinstance(cond, BoolOp):
        return BoolOp("or" if cond.op == "and" else "and", [negate(a) for a in cond.args])
    raise FrontendError(f"cannot negate {cond!r}")


def cond_dnf(cond: Cond) -> list:
    """Disjunctive normal form as a list of row lists (each row p means p >= 0)."""
    if isinstance(cond, BoolConst):
        return [[]] if cond.value else []
    if isinstance(cond, Cmp):
        d = cond.lhs - cond.rhs
        if cond.op == "ge":
            return [[d]]
        if cond.op == "gt":
            return [[d - 1]]
        if cond.op == "le":
            return [[-d]]
        if cond.op == "lt":
            return [[-d - 1]]
        if cond.op == "eq":
            return [[d, -d]]
        if cond.op == "ne":
            return [[d - 1], [-d - 1]]
        raise FrontendError(f"bad comparison {cond.op!r}")
    if isinstance(cond, BoolOp):
        parts = [cond_dnf(a) for a in cond.args]
        if cond.op == "or":
            out = []
            for p in parts:
                out.extend(p)
            if len(out) > MAX_GUARD_DISJUNCTS:
                raise FrontendError("guard has too many disjuncts")
            return out
        out = [[]]
        for p in parts:
            out = [a + b for a in out for b in p]
            if len(out) > MAX_GUARD_DISJUNCTS:
                raise FrontendError("guard has too many disjuncts")
        return out
    raise FrontendError(f"bad condition {cond!r}")


def _conj(conds: list) -> Cond:
    if not conds:
        return BoolConst(True)
    if len(conds) == 1:
        return conds[0]
    return BoolOp("and", list(conds))


# ---------------------------------------------------------------------------
# statements


@dataclass
class Assign:
    var: str
    expr: Poly
    label: Optional[str] = None


@dataclass
class NdetAssign:
    var: str
    label: Optional[str] = None


@dataclass
class Skip:
    label: Optional[str] = None


@dataclass
class While:
    cond: Cond
    body: list
    label: Optional[str] = None


@dataclass
class If:
    arms: list  # [(cond-or-STAR, [stmt, ...]), ...]
    else_body: Optional[list]
    label: Optional[str] = None


Stmt = Union[Assign, NdetAssign, Skip, While, If]


@dataclass
class Program:
    prefix: list  # leading Assign/NdetAssign statements (not program points)
    body: list
    variables: tuple


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN_RE = re.compile(
    r"""[ \t]+
      | \#[^\n]*
      | (?P<nl>[\n;,])
      | (?P<num>\d+)
      | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<op>:=|<=|>=|==|!=|[-+*<>=()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise FrontendError(f"cannot read input at: {text[pos:pos+20]!r}")
        pos = m.end()
        if m.group("nl"):
            toks.append("\n")
        elif m.group("num"):
            toks.append(int(m.group("num")))
        elif m.group("id") or m.group("op"):
            toks.append(m.group(0))
    toks.append("\n")
    return toks


class _Parser:
    def __init__(self, toks: list):
        self.toks = toks
        self.pos = 0

    def peek(self, skip_nl: bool = True):
        i = self.pos
        while skip_nl and i < len(self.toks) and self.toks[i] == "\n":
            i += 1
        return self.toks[i] if i < len(self.toks) else None

    def next(self, skip_nl: bool = True):
        while skip_nl and self.pos < len(self.toks) and self.toks[self.pos] == "\n":
            self.pos += 1
        if self.pos >= len(self.toks):
            raise FrontendError("unexpected end of input")
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def expect(self, tok: str):
        got = self.next()
        if got != tok:
            raise FrontendError(f"expected {tok!r}, got {got!r}")

    def at_end(self) -> bool:
        return self.peek() is None

    # -- expressions --------------------------------------------------------

    def parse_expr(self) -> Poly:
        out = self.parse_term()
        while self.peek(skip_nl=False) in ("+", "-"):
            op = self.next(skip_nl=False)
            rhs = self.parse_term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def parse_term(self) -> Poly:
        out = self.parse_factor()
        while self.peek(skip_nl=False) == "*":
            self.next(skip_nl=False)
            out = out * self.parse_factor()
        return out

    def parse_factor(self) -> Poly:
        tok = self.next()
        if isinstance(tok, int):
            return Poly.const(tok)
        if tok == "-":
            return -self.parse_factor()
        if tok == "(":
            out = self.parse_expr()
            self.expect(")")
            return out
        if isinstance(tok, str) and tok not in KEYWORDS and tok.isidentifier():
            if tok.startswith(NDET_PREFIX):
                raise FrontendError(f"{NDET_PREFIX}* names are reserved")
            return Poly.var(tok)
        raise FrontendError(f"expected expression, got {tok!r}")

    # -- conditions ---------------------------------------------------------

    _CMP = {"<=": "le", "<": "lt", ">=": "ge", ">": "gt", "==": "eq", "=": "eq", "!=": "ne"}

    def parse_cond(self) -> Cond:
        return self.parse_disj()

    def parse_disj(self) -> Cond:
        out = self.parse_conj()
        while self.peek() == "or":
            self.next()
            rhs = self.parse_conj()
            out = BoolOp("or", [out, rhs])
        return out

    def parse_conj(self) -> Cond:
        out = self.parse_atom()
        while self.peek() == "and":
            self.next()
            rhs = self.parse_atom()
            out = BoolOp("and", [out, rhs])
        return out

    def parse_atom(self) -> Cond:
        tok = self.peek()
        if tok == "not":
            self.next()
            return negate(self.parse_atom())
        if tok == "true":
            self.next()
            return BoolConst(True)
        if tok == "false":
            self.next()
            return BoolConst(False)
        if tok == "(":
            # could be a parenthesized condition or an expression; try cond
            save = self.pos
            self.next()
            try:
                inner = self.parse_cond()
                self.expect(")")
                return inner
            except FrontendError:
                self.pos = save
        lhs = self.parse_expr()
        op = self.next()
        if op not in self._CMP:
            raise FrontendError(f"expected comparison, got {op!r}")
        rhs = self.parse_expr()
        return Cmp(self._CMP[op], lhs, rhs)

    # -- statements ---------------------------------------------------------

    def parse_stmts(self, stop: set) -> list:
        out = []
        while True:
            nxt = self.peek()
            if nxt is None or nxt in stop:
                return out
            out.append(self.parse_stmt(stop))

    def parse_stmt(self, stop: set) -> Stmt:
        tok = self.peek()
        if tok == "skip":
            self.next()
            return Skip()
        if tok == "while":
            self.next()
            cond = self.parse_cond()
            self.expect("do")
            body = self.parse_stmts({"od"})
            self.expect("od")
            return While(cond, body)
        if tok == "if":
            self.next()
            return self.parse_if()
        # assignment
        var = self.next()
        if not (isinstance(var, str) and var.isidentifier() and var not in KEYWORDS):
            raise FrontendError(f"expected statement, got {var!r}")
        if var.startswith(NDET_PREFIX):
            raise FrontendError(f"{NDET_PREFIX}* names are reserved")
        self.expect(":=")
        if self.peek() == "ndet":
            self.next()
            self.expect("(")
            self.expect(")")
            return NdetAssign(var)
        return Assign(var, self.parse_expr())

    def parse_if(self) -> If:
        arms = []
        else_body = None
        while True:
            if self.peek() == "*":
                self.next()
                cond = STAR
            else:
                cond = self.parse_cond()
            self.expect("then")
            body = self.parse_stmts({"else", "fi"})
            arms.append((cond, body))
            if self.peek() == "fi":
                self.next()
                break
            self.expect("else")
            if self.peek() == "if":
                self.next()
                continue
            else_body = self.parse_stmts({"fi"})
            self.expect("fi")
            break
        return If(arms, else_body)


# ---------------------------------------------------------------------------
# program assembly


def _walk(stmts: list):
    for s in stmts:
        yield s
        if isinstance(s, While):
            yield from _walk(s.body)
        elif isinstance(s, If):
            for _, body in s.arms:
                yield from _walk(body)
            if s.else_body:
                yield from _walk(s.else_body)


def assign_labels(body: list) -> list:
    """Name every statement l0, l1, ... in source order; returns the labels."""
    labels = []
    for i, s in enumerate(_walk(body)):
        s.label = f"l{i}"
        labels.append(s.label)
    return labels


def _cond_vars(cond: Cond) -> list:
    if isinstance(cond, Cmp):
        return sorted(cond.lhs.variables() | cond.rhs.variables())
    if isinstance(cond, BoolOp):
        out = []
        for a in cond.args:
            out.extend(_cond_vars(a))
        return out
    return []


def _collect_variables(prefix: list, body: list) -> tuple:
    seen: dict[str, None] = {}

    def add(names):
        for n in names:
            seen.setdefault(n)

    for s in prefix:
        add([s.var])
        if isinstance(s, Assign):
            add(sorted(s.expr.variables()))
    for s in _walk(body):
        if isinstance(s, (Assign, NdetAssign)):
            add([s.var])
            if isinstance(s, Assign):
                add(sorted(s.expr.variables()))
        elif isinstance(s, While):
            add(_cond_vars(s.cond))
        elif isinstance(s, If):
            for cond, _ in s.arms:
                if cond is not STAR:
                    add(_cond_vars(cond))
    return tuple(seen)


def parse_program(text: str) -> Program:
    parser = _Parser(_tokenize(text))
    stmts = parser.parse_stmts(stop=set())
    if not parser.at_end():
        raise FrontendError(f"trailing input at {parser.peek()!r}")
    split = 0
    while split < len(stmts) and isinstance(stmts[split], (Assign, NdetAssign)):
        split += 1
    prefix, body = stmts[:split], stmts[split:]
    assign_labels(body)
    return Program(prefix=prefix, body=body, variables=_collect_variables(prefix, body))


def parse_file(path) -> Program:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_program(fh.read())


# ---------------------------------------------------------------------------
# nondeterministic branching -> nondeterministic assignment


def remove_nondet_branching(prog: Program) -> Program:
    """Replace each `*` branch condition with a fresh ndet-assigned variable.

    A statement `__ndet_k := ndet()` is inserted directly before the
    conditional and the `*` becomes `__ndet_k >= 0`, preserving the set of
    reachable arm choices. Labels are reassigned afterwards.
    """
    counter = itertools.count()

    def rewrite(stmts: list) -> list:
        out = []
        for s in stmts:
            if isinstance(s, While):
                out.append(While(s.cond, rewrite(s.body)))
            elif isinstance(s, If):
                arms = []
                inserted = []
                for cond, body in s.arms:
                    if cond is STAR:
                        nv = f"{NDET_PREFIX}{next(counter)}"
                        inserted.append(NdetAssign(nv))
                        cond = Cmp("ge", Poly.var(nv), Poly.const(0))
                    arms.append((cond, rewrite(body)))
                else_body = rewrite(s.else_body) if s.else_body is not None else None
                out.extend(inserted)
                out.append(If(arms, else_body))
            elif isinstance(s, Assign):
                out.append(Assign(s.var, s.expr))
            elif isinstance(s, NdetAssign):
                out.append(NdetAssign(s.var))
            else:
                out.append(Skip())
        return out

    body = rewrite(prog.body)
    assign_labels(body)
    return Program(prefix=prog.prefix, body=body,
                   variables=_collect_variables(prog.prefix, body))


# ---------------------------------------------------------------------------
# lowering


def _theta_from_prefix(prefix: list) -> Assertion:
    env: dict[str, object] = {}
    for s in prefix:
        if isinstance(s, NdetAssign):
            env[s.var] = None
            continue
        known = {v: Poly.const(val) for v, val in env.items() if isinstance(val, int)}
        value = s.expr.substitute(known)
        if not value.is_const():
            raise FrontendError(
                f"initial assignment to {s.var!r} does not reduce to a constant"
            )
        env[s.var] = value.const_value()
    rows = []
    for v, val in env.items():
        if isinstance(val, int):
            d = Poly.var(v) - Poly.const(val)
            rows.extend([d, -d])
    return Assertion(tuple(rows))


def lower(prog: Program) -> TransitionSystem:
    """Lower a parsed program to a transition system (as written: `*` branches
    become unguarded transitions; use remove_nondet_branching first for the
    assignment form)."""
    variables = prog.variables
    labels = [s.label for s in _walk(prog.body)]
    if TERMINAL_NAME in labels:
        raise FrontendError(f"label collision on {TERMINAL_NAME!r}")
    transitions: list = []

    def guard_transitions(src: str, dst: str, cond: Cond):
        for rows in cond_dnf(cond):
            simplified = simplify_assertion(Assertion(tuple(rows)))
            if simplified is None:
                continue  # contradictory guard disjunct, e.g. u >= 0 and u <= -1
            transitions.append(
                Transition(src, dst, simplified.rows + frame_rows(variables))
            )

    def first_label(stmts: list, cont: str) -> str:
        return stmts[0].label if stmts else cont

    def lower_stmts(stmts: list, next_label: str):
        for i, s in enumerate(stmts):
            cont = stmts[i + 1].label if i + 1 < len(stmts) else next_label
            lower_stmt(s, cont)

    def lower_stmt(s: Stmt, cont: str):
        if isinstance(s, Assign):
            d = Poly.var(prime(s.var)) - s.expr
            rows = (d, -d) + frame_rows(variables, except_for=[s.var])
            transitions.append(Transition(s.label, cont, rows))
        elif isinstance(s, NdetAssign):
            rows = frame_rows(variables, except_for=[s.var])
            transitions.append(Transition(s.label, cont, rows, ndet_var=s.var))
        elif isinstance(s, Skip):
            transitions.append(Transition(s.label, cont, frame_rows(variables)))
        elif isinstance(s, While):
            guard_transitions(s.label, first_label(s.body, s.label), s.cond)
            guard_transitions(s.label, cont, negate(s.cond))
            lower_stmts(s.body, s.label)
        elif isinstance(s, If):
            taken: list = []  # negations of prior real conditions
            for cond, body in s.arms:
                if cond is STAR:
                    arm_guard = _conj(taken)
                else:
                    arm_guard = _conj(taken + [cond])
                    taken = taken + [negate(cond)]
                guard_transitions(s.label, first_label(body, cont), arm_guard)
                lower_stmts(body, cont)
            fall = _conj(taken)
            if s.else_body is not None:
                guard_transitions(s.label, first_label(s.else_body, cont), fall)
                lower_stmts(s.else_body, cont)
            else:
                guard_transitions(s.label, cont, fall)
        else:
            raise FrontendError(f"cannot lower {s!r}")

    lower_stmts(prog.body, TERMINAL_NAME)
    transitions.append(
        Transition(TERMINAL_NAME, TERMINAL_NAME, frame_rows(variables))
    )
    ts = TransitionSystem(
        variables=variables,
        locations=tuple(labels) + (TERMINAL_NAME,),
        init=first_label(prog.body, TERMINAL_NAME),
        terminal=TERMINAL_NAME,
        theta=_theta_from_prefix(prog.prefix),
        transitions=tuple(transitions),
    )
    ts.validate()
    return ts


def compile_program(text: str) -> TransitionSystem:
    """Parse, move nondeterminism into assignments, and lower."""
    return lower(remove_nondet_branching(parse_program(text)))


def compile_file(path) -> TransitionSystem:
    with open(path, "r", encoding="utf-8") as fh:
        return compile_program(fh.read())
