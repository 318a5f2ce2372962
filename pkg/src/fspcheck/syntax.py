"""Lexer, parser and expression machinery for the FSP subset.

The accepted language covers constant/range/set declarations, primitive
process definitions (action prefix, choice, guards, conditionals, STOP,
alphabet extension, indexed local processes), safety-property and progress
declarations, and parallel-composite declarations.  Relabeling ``/{}``,
hiding ``\\{}`` and priority ``<<``/``>>`` are rejected with a diagnostic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional, Union


class FspError(Exception):
    """Base class for all toolkit errors."""

    def __init__(self, message: str, line: int | None = None, col: int | None = None):
        self.message = message
        self.line = line
        self.col = col
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line is not None:
            return f"{self.line}:{self.col}: {self.message}"
        return self.message


class ParseError(FspError):
    """Lexical or syntactic error, with source position."""


class ResolveError(FspError):
    """Unresolved identifier, duplicate declaration, or bad range."""


class EvalError(FspError):
    """Expression evaluation failure (unbound name, div by zero, type mix)."""


KEYWORDS = {"const", "range", "set", "property", "progress", "when", "if", "then", "else", "STOP"}

_PUNCT = [
    "->", "..", "||", "&&", "==", "!=", "<=", ">=",
    "(", ")", "{", "}", "[", "]", "=", ",", ".", "|", "+", "-", "*", "/", "%",
    "<", ">", "!", ":",
]


@dataclass
class Token:
    kind: str  # 'id', 'int', 'kw', or the punctuation text itself
    text: str
    line: int
    col: int
    value: int = 0


def tokenize(source: str) -> list[Token]:
    toks: list[Token] = []
    i = 0
    line = 1
    col = 1
    n = len(source)
    line_has_token = False

    def bump(k: int) -> None:
        nonlocal i, line, col, line_has_token
        for _ in range(k):
            if source[i] == "\n":
                line += 1
                col = 1
                line_has_token = False
            else:
                col += 1
            i += 1

    while i < n:
        c = source[i]
        if c in " \t\r\n":
            bump(1)
            continue
        if source.startswith("//", i):
            while i < n and source[i] != "\n":
                bump(1)
            continue
        if source.startswith("/*", i):
            start_line, start_col = line, col
            bump(2)
            while i < n and not source.startswith("*/", i):
                bump(1)
            if i >= n:
                raise ParseError("unterminated block comment", start_line, start_col)
            bump(2)
            continue
        # Decorative separator rows: a line starting with ---- is a comment.
        if c == "-" and not line_has_token and source.startswith("----", i):
            while i < n and source[i] != "\n":
                bump(1)
            continue
        if source.startswith("<<", i) or source.startswith(">>", i):
            raise ParseError("priority operators << and >> are not supported", line, col)
        if c == "\\":
            raise ParseError("hiding operator \\{..} is not supported", line, col)
        if c.isdigit():
            j = i
            while j < n and source[j].isdigit():
                j += 1
            text = source[i:j]
            toks.append(Token("int", text, line, col, int(text)))
            line_has_token = True
            bump(j - i)
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (source[j].isalnum() or source[j] == "_"):
                j += 1
            text = source[i:j]
            kind = "kw" if text in KEYWORDS else "id"
            toks.append(Token(kind, text, line, col))
            line_has_token = True
            bump(j - i)
            continue
        for p in _PUNCT:
            if source.startswith(p, i):
                toks.append(Token(p, p, line, col))
                line_has_token = True
                bump(len(p))
                break
        else:
            raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# AST
# ---------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class ActionLabel:
    """A concrete event name: dot-joined parts, each with integer indices.

    Two labels are equal iff their canonical text forms are equal; ordering
    is lexicographic on the canonical text.
    """

    parts: tuple[tuple[str, tuple[int, ...]], ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("label needs at least one part")

    @property
    def text(self) -> str:
        return ".".join(
            name + "".join(f"[{k}]" for k in idx) for name, idx in self.parts
        )

    def __str__(self) -> str:
        return self.text

    def __repr__(self) -> str:
        return f"ActionLabel({self.text!r})"

    @staticmethod
    def simple(name: str, *indices: int) -> "ActionLabel":
        return ActionLabel(((name, tuple(indices)),))


def _label_sort_key(label: ActionLabel) -> str:
    return label.text


# Expressions -------------------------------------------------------------

@dataclass(frozen=True)
class IntLit:
    value: int


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # '-' or '!'
    operand: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[IntLit, Name, Unary, Binary]


# Label templates ----------------------------------------------------------

@dataclass(frozen=True)
class NamedDomain:
    name: str


@dataclass(frozen=True)
class ExprRange:
    lo: Expr
    hi: Expr


Domain = Union[NamedDomain, ExprRange]


@dataclass(frozen=True)
class ExprIndex:
    expr: Expr


@dataclass(frozen=True)
class BinderIndex:
    var: str
    domain: Domain


@dataclass(frozen=True)
class RangeIndex:
    lo: Expr
    hi: Expr


IndexSpec = Union[ExprIndex, BinderIndex, RangeIndex]


@dataclass(frozen=True)
class LabelPart:
    name: str
    indices: tuple[IndexSpec, ...]


@dataclass(frozen=True)
class LabelTemplate:
    parts: tuple[LabelPart, ...]

    def binder_names(self) -> tuple[str, ...]:
        return tuple(
            ix.var for part in self.parts for ix in part.indices
            if isinstance(ix, BinderIndex)
        )


# Process bodies ------------------------------------------------------------

_uid_counter = itertools.count()


def _fresh_uid() -> int:
    return next(_uid_counter)


@dataclass
class Stop:
    uid: int = field(default_factory=_fresh_uid, compare=False, repr=False)


@dataclass
class ProcRef:
    name: str
    args: tuple[Expr, ...] = ()
    uid: int = field(default_factory=_fresh_uid, compare=False, repr=False)


@dataclass
class Guarded:
    guard: Optional[Expr]
    label: LabelTemplate
    body: "Body"


@dataclass
class Choice:
    branches: tuple[Guarded, ...]
    uid: int = field(default_factory=_fresh_uid, compare=False, repr=False)


@dataclass
class Conditional:
    cond: Expr
    then_body: "Body"
    else_body: Optional["Body"]
    uid: int = field(default_factory=_fresh_uid, compare=False, repr=False)


Body = Union[Stop, ProcRef, Choice, Conditional]


@dataclass
class Binder:
    name: str
    domain: Domain


@dataclass
class LocalDef:
    name: str
    params: tuple[Binder, ...]
    body: Body


@dataclass
class ProcessDecl:
    name: str
    locals: tuple[LocalDef, ...]
    extension: tuple[LabelTemplate, ...] = ()
    is_property: bool = False

    def local(self, name: str) -> LocalDef:
        for d in self.locals:
            if d.name == name:
                return d
        raise ResolveError(f"process {self.name} has no local definition {name}")


@dataclass
class SpecAST:
    """A parsed and resolved FSP compilation unit."""

    consts: dict[str, Expr] = field(default_factory=dict)
    ranges: dict[str, tuple[Expr, Expr]] = field(default_factory=dict)
    sets: dict[str, tuple[LabelTemplate, ...]] = field(default_factory=dict)
    processes: list[ProcessDecl] = field(default_factory=list)
    progress: dict[str, tuple[LabelTemplate, ...]] = field(default_factory=dict)
    composites: dict[str, tuple[str, ...]] = field(default_factory=dict)
    const_values: dict[str, int] = field(default_factory=dict, compare=False)
    range_values: dict[str, tuple[int, int]] = field(default_factory=dict, compare=False)

    @property
    def properties(self) -> list[ProcessDecl]:
        return [p for p in self.processes if p.is_property]

    def process(self, name: str) -> ProcessDecl:
        for p in self.processes:
            if p.name == name:
                return p
        raise ResolveError(f"no process declaration named {name}")

    def has_process(self, name: str) -> bool:
        return any(p.name == name for p in self.processes)

    def domain_bounds(self, domain: Domain, env: dict[str, int]) -> tuple[int, int]:
        """Concrete (lo, hi) for a binder domain under ``env``."""
        if isinstance(domain, NamedDomain):
            if domain.name in self.range_values:
                return self.range_values[domain.name]
            if domain.name in self.sets:
                raise ResolveError(
                    f"binder domain {domain.name} is a label set; only integer "
                    f"ranges can bind an index variable"
                )
            raise ResolveError(f"unknown range name {domain.name}")
        lo = self.eval(domain.lo, env)
        hi = self.eval(domain.hi, env)
        if not isinstance(lo, int) or not isinstance(hi, int) or isinstance(lo, bool) or isinstance(hi, bool):
            raise EvalError("range bounds must be integers")
        return lo, hi

    def eval(self, e: Expr, env: dict[str, int] | None = None):
        merged = dict(self.const_values)
        if env:
            merged.update(env)
        return eval_expr(e, merged)


# ---------------------------------------------------------------------------
# Expression evaluation
# ---------------------------------------------------------------------------

def _trunc_div(a: int, b: int) -> int:
    if b == 0:
        raise EvalError("division by zero")
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _trunc_mod(a: int, b: int) -> int:
    return a - b * _trunc_div(a, b)


def _need_int(v, what: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise EvalError(f"{what} requires an integer, got {_type_name(v)}")
    return v


def _need_bool(v, what: str) -> bool:
    if not isinstance(v, bool):
        raise EvalError(f"{what} requires a boolean, got {_type_name(v)}")
    return v


def _type_name(v) -> str:
    return "boolean" if isinstance(v, bool) else type(v).__name__


def eval_expr(e: Expr, env: dict[str, int]):
    """Evaluate ``e`` under ``env`` (constants already merged in).

    Arithmetic is over unbounded integers; comparisons and connectives yield
    booleans.  Division and modulo truncate toward zero and reject a zero
    divisor.
    """
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, Name):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound identifier {e.name}") from None
    if isinstance(e, Unary):
        v = eval_expr(e.operand, env)
        if e.op == "-":
            return -_need_int(v, "unary -")
        return not _need_bool(v, "!")
    if isinstance(e, Binary):
        op = e.op
        if op == "&&":
            return _need_bool(eval_expr(e.left, env), "&&") and _need_bool(eval_expr(e.right, env), "&&")
        if op == "||":
            return _need_bool(eval_expr(e.left, env), "||") or _need_bool(eval_expr(e.right, env), "||")
        lv = eval_expr(e.left, env)
        rv = eval_expr(e.right, env)
        if op in ("==", "!="):
            if isinstance(lv, bool) != isinstance(rv, bool):
                raise EvalError("== / != operands must have the same type")
            return (lv == rv) if op == "==" else (lv != rv)
        li = _need_int(lv, op)
        ri = _need_int(rv, op)
        if op == "+":
            return li + ri
        if op == "-":
            return li - ri
        if op == "*":
            return li * ri
        if op == "/":
            return _trunc_div(li, ri)
        if op == "%":
            return _trunc_mod(li, ri)
        if op == "<":
            return li < ri
        if op == "<=":
            return li <= ri
        if op == ">":
            return li > ri
        if op == ">=":
            return li >= ri
    raise EvalError(f"malformed expression node {e!r}")


def compile_expr(e: Expr, consts: dict[str, int]) -> Callable[[dict], object]:
    """Compile ``e`` into a closure over a binder environment.

    Constant names are folded in; the closure performs the same type and
    divisor checks as :func:`eval_expr`.
    """
    if isinstance(e, IntLit):
        v = e.value
        return lambda env: v
    if isinstance(e, Name):
        if e.name in consts:
            c = consts[e.name]
            return lambda env: c
        nm = e.name
        def ref(env, nm=nm):
            try:
                return env[nm]
            except KeyError:
                raise EvalError(f"unbound identifier {nm}") from None
        return ref
    if isinstance(e, Unary):
        f = compile_expr(e.operand, consts)
        if e.op == "-":
            return lambda env: -_need_int(f(env), "unary -")
        return lambda env: not _need_bool(f(env), "!")
    if isinstance(e, Binary):
        op = e.op
        lf = compile_expr(e.left, consts)
        rf = compile_expr(e.right, consts)
        if op == "&&":
            return lambda env: _need_bool(lf(env), "&&") and _need_bool(rf(env), "&&")
        if op == "||":
            return lambda env: _need_bool(lf(env), "||") or _need_bool(rf(env), "||")
        if op == "==":
            def eq(env):
                lv, rv = lf(env), rf(env)
                if isinstance(lv, bool) != isinstance(rv, bool):
                    raise EvalError("== / != operands must have the same type")
                return lv == rv
            return eq
        if op == "!=":
            def ne(env):
                lv, rv = lf(env), rf(env)
                if isinstance(lv, bool) != isinstance(rv, bool):
                    raise EvalError("== / != operands must have the same type")
                return lv != rv
            return ne
        ops: dict[str, Callable[[int, int], object]] = {
            "+": lambda a, b: a + b,
            "-": lambda a, b: a - b,
            "*": lambda a, b: a * b,
            "/": _trunc_div,
            "%": _trunc_mod,
            "<": lambda a, b: a < b,
            "<=": lambda a, b: a <= b,
            ">": lambda a, b: a > b,
            ">=": lambda a, b: a >= b,
        }
        fn = ops[op]
        return lambda env: fn(_need_int(lf(env), op), _need_int(rf(env), op))
    raise EvalError(f"malformed expression node {e!r}")


def expr_names(e: Expr) -> frozenset[str]:
    if isinstance(e, Name):
        return frozenset((e.name,))
    if isinstance(e, Unary):
        return expr_names(e.operand)
    if isinstance(e, Binary):
        return expr_names(e.left) | expr_names(e.right)
    return frozenset()


# ---------------------------------------------------------------------------
# Label expansion
# ---------------------------------------------------------------------------

def _domain_values(domain: Domain, env: dict[str, int], spec: SpecAST) -> range:
    lo, hi = spec.domain_bounds(domain, env)
    if lo > hi:
        raise EvalError(f"empty expansion: range {lo}..{hi} has no values")
    return range(lo, hi + 1)


def expand_label(
    template: LabelTemplate, env: dict[str, int], spec: SpecAST
) -> list[tuple[ActionLabel, dict[str, int]]]:
    """Expand a label template into concrete labels.

    Concrete index expressions contribute a single value; binders and inline
    ranges contribute one label per domain value, binders extending the
    environment of their branch.  The result is the cross product over all
    index positions, enumerated left to right with domains ascending.
    """
    results: list[tuple[ActionLabel, dict[str, int]]] = []

    def walk(part_i: int, idx_i: int, acc: list[tuple[str, list[int]]], env_now: dict[str, int]):
        if part_i == len(template.parts):
            label = ActionLabel(tuple((n, tuple(ix)) for n, ix in acc))
            results.append((label, env_now))
            return
        part = template.parts[part_i]
        if idx_i == 0:
            acc = acc + [(part.name, [])]
        if idx_i == len(part.indices):
            walk(part_i + 1, 0, acc, env_now)
            return
        spec_ix = part.indices[idx_i]
        if isinstance(spec_ix, ExprIndex):
            v = spec.eval(spec_ix.expr, env_now)
            if isinstance(v, bool) or not isinstance(v, int):
                raise EvalError("label index must evaluate to an integer")
            acc2 = acc[:-1] + [(acc[-1][0], acc[-1][1] + [v])]
            walk(part_i, idx_i + 1, acc2, env_now)
        elif isinstance(spec_ix, RangeIndex):
            lo = spec.eval(spec_ix.lo, env_now)
            hi = spec.eval(spec_ix.hi, env_now)
            if lo > hi:
                raise EvalError(f"empty expansion: range {lo}..{hi} has no values")
            for v in range(lo, hi + 1):
                acc2 = acc[:-1] + [(acc[-1][0], acc[-1][1] + [v])]
                walk(part_i, idx_i + 1, acc2, env_now)
        else:
            for v in _domain_values(spec_ix.domain, env_now, spec):
                acc2 = acc[:-1] + [(acc[-1][0], acc[-1][1] + [v])]
                env2 = dict(env_now)
                env2[spec_ix.var] = v
                walk(part_i, idx_i + 1, acc2, env2)

    walk(0, 0, [], dict(env))
    if not results:
        raise EvalError("empty expansion")
    return results


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, what: str | None = None) -> Token:
        t = self.peek()
        if t.kind != kind:
            expected = what or repr(kind)
            raise ParseError(f"expected {expected}, found {t.text!r}", t.line, t.col)
        return self.next()

    def fail(self, message: str) -> ParseError:
        t = self.peek()
        return ParseError(message, t.line, t.col)

    # ---- identifiers -----------------------------------------------------

    def proc_name(self, what: str) -> str:
        t = self.expect("id", what)
        if not t.text[0].isupper():
            raise ParseError(f"{what} must begin with an uppercase letter: {t.text!r}", t.line, t.col)
        return t.text

    def upper_name(self, what: str) -> str:
        return self.proc_name(what)

    # ---- expressions -----------------------------------------------------

    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        e = self.and_expr()
        while self.at("||"):
            self.next()
            e = Binary("||", e, self.and_expr())
        return e

    def and_expr(self) -> Expr:
        e = self.cmp_expr()
        while self.at("&&"):
            self.next()
            e = Binary("&&", e, self.cmp_expr())
        return e

    def cmp_expr(self) -> Expr:
        e = self.add_expr()
        for op in ("==", "!=", "<=", ">=", "<", ">"):
            if self.at(op):
                self.next()
                return Binary(op, e, self.add_expr())
        return e

    def add_expr(self) -> Expr:
        e = self.mul_expr()
        while self.at("+") or self.at("-"):
            op = self.next().text
            e = Binary(op, e, self.mul_expr())
        return e

    def mul_expr(self) -> Expr:
        e = self.unary_expr()
        while self.at("*") or self.at("/") or self.at("%"):
            op = self.next().text
            if op == "/" and self.at("{"):
                raise self.fail("relabeling /{..} is not supported")
            e = Binary(op, e, self.unary_expr())
        return e

    def unary_expr(self) -> Expr:
        if self.at("-"):
            self.next()
            return Unary("-", self.unary_expr())
        if self.at("!"):
            self.next()
            return Unary("!", self.unary_expr())
        return self.primary()

    def primary(self) -> Expr:
        t = self.peek()
        if t.kind == "int":
            self.next()
            return IntLit(t.value)
        if t.kind == "id":
            self.next()
            return Name(t.text)
        if t.kind == "(":
            self.next()
            e = self.expr()
            self.expect(")")
            return e
        raise self.fail(f"expected an expression, found {t.text!r}")

    # ---- labels ------------------------------------------------------------

    def label_template(self) -> LabelTemplate:
        parts = [self.label_part()]
        while self.at("."):
            self.next()
            parts.append(self.label_part())
        return LabelTemplate(tuple(parts))

    def label_part(self) -> LabelPart:
        t = self.expect("id", "an action name")
        if not t.text[0].islower():
            raise ParseError(
                f"action names must begin with a lowercase letter: {t.text!r}", t.line, t.col
            )
        indices: list[IndexSpec] = []
        while self.at("["):
            self.next()
            indices.append(self.index_spec())
            self.expect("]")
        return LabelPart(t.text, tuple(indices))

    def index_spec(self) -> IndexSpec:
        # binder:  ID ':' domain
        if self.peek().kind == "id" and self.peek(1).kind == ":":
            var_tok = self.next()
            self.next()  # ':'
            return BinderIndex(var_tok.text, self.domain())
        e = self.expr()
        if self.at(".."):
            self.next()
            return RangeIndex(e, self.expr())
        return ExprIndex(e)

    def domain(self) -> Domain:
        e = self.expr()
        if self.at(".."):
            self.next()
            return ExprRange(e, self.expr())
        if isinstance(e, Name):
            return NamedDomain(e.name)
        raise self.fail("binder domain must be a range name or lo..hi")

    # ---- process bodies ----------------------------------------------------

    def body(self) -> Body:
        t = self.peek()
        if t.kind == "kw" and t.text == "STOP":
            self.next()
            return Stop()
        if t.kind == "kw" and t.text == "if":
            return self.conditional()
        if t.kind == "(":
            self.next()
            branches = [self.guarded()]
            while self.at("|"):
                self.next()
                branches.append(self.guarded())
            self.expect(")")
            return Choice(tuple(branches))
        if t.kind == "id":
            return self.proc_ref()
        raise self.fail(f"expected a process body, found {t.text!r}")

    def conditional(self) -> Conditional:
        self.expect("kw")  # 'if'
        cond = self.expr()
        t = self.peek()
        if not (t.kind == "kw" and t.text == "then"):
            raise self.fail("expected 'then'")
        self.next()
        then_body = self.body()
        else_body = None
        t = self.peek()
        if t.kind == "kw" and t.text == "else":
            self.next()
            else_body = self.body()
        return Conditional(cond, then_body, else_body)

    def guarded(self) -> Guarded:
        guard = None
        t = self.peek()
        if t.kind == "kw" and t.text == "when":
            self.next()
            guard = self.expr()
        label = self.label_template()
        self.expect("->")
        return Guarded(guard, label, self.body())

    def proc_ref(self) -> ProcRef:
        name = self.proc_name("a process reference")
        args: list[Expr] = []
        while self.at("["):
            self.next()
            args.append(self.expr())
            self.expect("]")
        return ProcRef(name, tuple(args))

    # ---- declarations --------------------------------------------------------

    def binder(self) -> Binder:
        t = self.expect("id", "a parameter name")
        self.expect(":")
        return Binder(t.text, self.domain())

    def local_def(self) -> LocalDef:
        name = self.proc_name("a process name")
        params: list[Binder] = []
        while self.at("["):
            self.next()
            params.append(self.binder())
            self.expect("]")
        seen = set()
        for b in params:
            if b.name in seen:
                raise self.fail(f"duplicate parameter {b.name} in local {name}")
            seen.add(b.name)
        self.expect("=")
        return LocalDef(name, tuple(params), self.body())

    def label_set(self) -> tuple[LabelTemplate, ...]:
        self.expect("{")
        items = [self.label_template()]
        while self.at(","):
            self.next()
            items.append(self.label_template())
        self.expect("}")
        return tuple(items)

    def proc_def(self, is_property: bool) -> ProcessDecl:
        locals_ = [self.local_def()]
        while self.at(","):
            self.next()
            locals_.append(self.local_def())
        extension: tuple[LabelTemplate, ...] = ()
        if self.at("+"):
            self.next()
            extension = self.label_set()
        if self.at("/"):
            raise self.fail("relabeling /{..} is not supported")
        self.expect(".", "'.' to end the process definition")
        return ProcessDecl(locals_[0].name, tuple(locals_), extension, is_property)

    def composite(self) -> tuple[str, tuple[str, ...]]:
        self.expect("||")
        name = self.upper_name("a composite name")
        self.expect("=")
        self.expect("(")
        members = [self.composite_member()]
        while self.at("||"):
            self.next()
            members.append(self.composite_member())
        self.expect(")")
        if self.at("/"):
            raise self.fail("relabeling /{..} is not supported")
        self.expect(".", "'.' to end the composite definition")
        return name, tuple(members)

    def composite_member(self) -> str:
        ref = self.proc_ref()
        if ref.args:
            raise self.fail("composite members must be plain process names")
        return ref.name

    def spec(self) -> SpecAST:
        ast = SpecAST()
        order: list[tuple[str, str]] = []
        while not self.at("eof"):
            t = self.peek()
            if t.kind == "kw" and t.text == "const":
                self.next()
                name = self.upper_name("a constant name")
                self.expect("=")
                self._declare(ast, order, name, t)
                ast.consts[name] = self.expr()
            elif t.kind == "kw" and t.text == "range":
                self.next()
                name = self.upper_name("a range name")
                self.expect("=")
                lo = self.expr()
                self.expect("..")
                self._declare(ast, order, name, t)
                ast.ranges[name] = (lo, self.expr())
            elif t.kind == "kw" and t.text == "set":
                self.next()
                name = self.upper_name("a set name")
                self.expect("=")
                self._declare(ast, order, name, t)
                ast.sets[name] = self.label_set()
            elif t.kind == "kw" and t.text == "progress":
                self.next()
                name = self.upper_name("a progress name")
                self.expect("=")
                self._declare(ast, order, name, t)
                ast.progress[name] = self.label_set()
            elif t.kind == "kw" and t.text == "property":
                self.next()
                decl = self.proc_def(is_property=True)
                self._declare(ast, order, decl.name, t)
                ast.processes.append(decl)
            elif t.kind == "||":
                name, members = self.composite()
                self._declare(ast, order, name, t)
                ast.composites[name] = members
            elif t.kind == "id":
                decl = self.proc_def(is_property=False)
                self._declare(ast, order, decl.name, t)
                ast.processes.append(decl)
            else:
                raise self.fail(f"expected a declaration, found {t.text!r}")
        return ast

    def _declare(self, ast: SpecAST, order: list, name: str, tok: Token) -> None:
        if any(n == name for _, n in order):
            raise ParseError(f"duplicate declaration of {name}", tok.line, tok.col)
        order.append(("decl", name))


# ---------------------------------------------------------------------------
# Resolution
# ---------------------------------------------------------------------------

def _resolve_consts(ast: SpecAST) -> None:
    resolved: dict[str, int] = {}
    visiting: set[str] = set()

    def value_of(name: str) -> int:
        if name in resolved:
            return resolved[name]
        if name not in ast.consts:
            raise ResolveError(f"unresolved identifier {name}")
        if name in visiting:
            raise ResolveError(f"constant definitions form a cycle through {name}")
        visiting.add(name)
        expr = ast.consts[name]
        for dep in sorted(expr_names(expr)):
            value_of(dep)
        v = eval_expr(expr, resolved)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ResolveError(f"constant {name} must be an integer")
        visiting.discard(name)
        resolved[name] = v
        return v

    for name in ast.consts:
        value_of(name)
    ast.const_values = resolved


def _resolve_ranges(ast: SpecAST) -> None:
    for name, (lo_e, hi_e) in ast.ranges.items():
        lo = ast.eval(lo_e)
        hi = ast.eval(hi_e)
        if isinstance(lo, bool) or isinstance(hi, bool) or not isinstance(lo, int) or not isinstance(hi, int):
            raise ResolveError(f"range {name} bounds must be integers")
        if lo > hi:
            raise ResolveError(f"range {name} = {lo}..{hi} is empty (lo > hi)")
        ast.range_values[name] = (lo, hi)


def _check_domain(ast: SpecAST, domain: Domain, scope: set[str], where: str) -> None:
    if isinstance(domain, NamedDomain):
        if domain.name in ast.ranges:
            return
        if domain.name in ast.sets:
            raise ResolveError(
                f"{where}: binder domain {domain.name} is a label set; only "
                f"integer ranges can bind an index variable"
            )
        raise ResolveError(f"{where}: unknown range name {domain.name}")
    _check_expr(ast, domain.lo, scope, where)
    _check_expr(ast, domain.hi, scope, where)


def _check_expr(ast: SpecAST, e: Expr, scope: set[str], where: str) -> None:
    for n in sorted(expr_names(e)):
        if n not in scope and n not in ast.consts:
            raise ResolveError(f"{where}: unresolved identifier {n}")


def _check_template(ast: SpecAST, tmpl: LabelTemplate, scope: set[str], where: str) -> set[str]:
    """Validate a template; returns the scope extended with its binders."""
    scope = set(scope)
    for part in tmpl.parts:
        for ix in part.indices:
            if isinstance(ix, ExprIndex):
                _check_expr(ast, ix.expr, scope, where)
            elif isinstance(ix, RangeIndex):
                _check_expr(ast, ix.lo, scope, where)
                _check_expr(ast, ix.hi, scope, where)
            else:
                _check_domain(ast, ix.domain, scope, where)
                scope.add(ix.var)
    return scope


def _check_body(ast: SpecAST, decl: ProcessDecl, body: Body, scope: set[str], where: str) -> None:
    if isinstance(body, Stop):
        return
    if isinstance(body, ProcRef):
        local = None
        for d in decl.locals:
            if d.name == body.name:
                local = d
                break
        if local is None:
            raise ResolveError(f"{where}: reference to undeclared local {body.name}")
        if len(body.args) != len(local.params):
            raise ResolveError(
                f"{where}: {body.name} takes {len(local.params)} parameter(s), "
                f"got {len(body.args)}"
            )
        for a in body.args:
            _check_expr(ast, a, scope, where)
        return
    if isinstance(body, Conditional):
        _check_expr(ast, body.cond, scope, where)
        _check_body(ast, decl, body.then_body, scope, where)
        if body.else_body is not None:
            _check_body(ast, decl, body.else_body, scope, where)
        return
    for branch in body.branches:
        if branch.guard is not None:
            _check_expr(ast, branch.guard, scope, where)
        inner = _check_template(ast, branch.label, scope, where)
        _check_body(ast, decl, branch.body, inner, where)


def _resolve_processes(ast: SpecAST) -> None:
    for decl in ast.processes:
        for local in decl.locals:
            scope = set()
            for b in local.params:
                _check_domain(ast, b.domain, scope, f"process {decl.name}, local {local.name}")
                scope.add(b.name)
            _check_body(ast, decl, local.body, scope, f"process {decl.name}, local {local.name}")
        for tmpl in decl.extension:
            _check_template(ast, tmpl, set(), f"process {decl.name} alphabet extension")


def _resolve_composites(ast: SpecAST) -> None:
    for name, members in ast.composites.items():
        for m in members:
            if not ast.has_process(m) and m not in ast.composites:
                raise ResolveError(f"composite {name}: unresolved process reference {m}")
        if not members:
            raise ResolveError(f"composite {name} has no components")


def _resolve_toplevel_sets(ast: SpecAST) -> None:
    for name, templates in list(ast.sets.items()) + list(ast.progress.items()):
        for tmpl in templates:
            _check_template(ast, tmpl, set(), f"set {name}")


def parse(source_text: str) -> SpecAST:
    """Parse and resolve an FSP compilation unit.

    Deterministic: byte-identical inputs give structurally identical ASTs.
    Comments (``//``, ``/* */``) and decorative separator rows of dashes are
    ignored.
    """
    ast = _Parser(tokenize(source_text)).spec()
    _resolve_consts(ast)
    _resolve_ranges(ast)
    _resolve_toplevel_sets(ast)
    _resolve_processes(ast)
    _resolve_composites(ast)
    return ast


# ---------------------------------------------------------------------------
# Pretty printer
# ---------------------------------------------------------------------------

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 3, "<=": 3, ">": 3, ">=": 3,
         "+": 4, "-": 4, "*": 5, "/": 5, "%": 5}


def format_expr(e: Expr, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, Name):
        return e.name
    if isinstance(e, Unary):
        return e.op + format_expr(e.operand, 6)
    if isinstance(e, Binary):
        p = _PREC[e.op]
        s = f"{format_expr(e.left, p)} {e.op} {format_expr(e.right, p + 1)}"
        return f"({s})" if p < parent_prec else s
    raise ValueError(f"bad expression node {e!r}")


def format_domain(d: Domain) -> str:
    if isinstance(d, NamedDomain):
        return d.name
    return f"{format_expr(d.lo)}..{format_expr(d.hi)}"


def format_template(t: LabelTemplate) -> str:
    chunks = []
    for part in t.parts:
        s = part.name
        for ix in part.indices:
            if isinstance(ix, ExprIndex):
                s += f"[{format_expr(ix.expr)}]"
            elif isinstance(ix, RangeIndex):
                s += f"[{format_expr(ix.lo)}..{format_expr(ix.hi)}]"
            else:
                s += f"[{ix.var}:{format_domain(ix.domain)}]"
        chunks.append(s)
    return ".".join(chunks)


def format_body(b: Body, indent: int = 1) -> str:
    pad = "  " * indent
    if isinstance(b, Stop):
        return "STOP"
    if isinstance(b, ProcRef):
        return b.name + "".join(f"[{format_expr(a)}]" for a in b.args)
    if isinstance(b, Conditional):
        s = f"if {format_expr(b.cond)} then {format_body(b.then_body, indent)}"
        if b.else_body is not None:
            s += f" else {format_body(b.else_body, indent)}"
        return s
    lines = []
    for branch in b.branches:
        g = f"when {format_expr(branch.guard)} " if branch.guard is not None else ""
        lines.append(f"{g}{format_template(branch.label)} -> {format_body(branch.body, indent + 1)}")
    if len(lines) == 1:
        return "(" + lines[0] + ")"
    sep = f"\n{pad}| "
    return "(" + sep.join(lines) + ")"


def format_spec(ast: SpecAST) -> str:
    """Render a SpecAST as parseable FSP text (round-trip stable)."""
    out: list[str] = []
    for name, e in ast.consts.items():
        out.append(f"const {name} = {format_expr(e)}")
    for name, (lo, hi) in ast.ranges.items():
        out.append(f"range {name} = {format_expr(lo)}..{format_expr(hi)}")
    for name, templates in ast.sets.items():
        out.append(f"set {name} = {{{', '.join(format_template(t) for t in templates)}}}")
    for decl in ast.processes:
        kw = "property " if decl.is_property else ""
        chunks = []
        for local in decl.locals:
            params = "".join(f"[{b.name}:{format_domain(b.domain)}]" for b in local.params)
            chunks.append(f"{local.name}{params} = {format_body(local.body)}")
        text = kw + ",\n".join(chunks)
        if decl.extension:
            text += f"\n  + {{{', '.join(format_template(t) for t in decl.extension)}}}"
        out.append(text + ".")
    for name, templates in ast.progress.items():
        out.append(f"progress {name} = {{{', '.join(format_template(t) for t in templates)}}}")
    for name, members in ast.composites.items():
        out.append(f"||{name} = ({' || '.join(members)}).")
    return "\n\n".join(out) + "\n"
