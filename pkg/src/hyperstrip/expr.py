"""Small closed expression language for coefficient fields.

Expressions are immutable trees built from real constants, the variables
x, t, q and u1..un, unary negation, the binary operations + - * / ^, and
the functions sin, cos, exp, ln, abs, sign.  The named constants pi and e
parse to their numeric values.  Precedence is ^ > unary minus > * / > + -,
and all binary operators associate to the left, so 2^3^2 means (2^3)^2.

``sign`` exists so that differentiation of ``abs`` stays inside the
language: d/dv abs(u) = sign(u) * u', with the convention sign(0) = 0.

Evaluation is strict about domains: ln of a non-positive argument,
division by zero, zero to a negative power and a negative base with a
non-integer exponent all raise DomainError instead of producing NaN.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterator, Mapping, Union

import numpy as np

__all__ = [
    "Expression",
    "Const",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "ExprError",
    "ParseError",
    "DomainError",
    "UnboundVariableError",
    "parse_expression",
    "evaluate",
    "differentiate",
    "substitute",
    "free_variables",
    "numpy_callable",
    "const",
    "var",
    "neg",
    "add",
    "sub",
    "mul",
    "div",
    "pow_",
    "call",
]


class ExprError(Exception):
    """Base class for expression language errors."""


class ParseError(ExprError):
    """Raised on malformed input; carries the byte offset of the problem."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at offset {position})")
        self.position = position


class DomainError(ExprError):
    """Raised when evaluation leaves the real domain (ln(-1), 1/0, ...)."""


class UnboundVariableError(ExprError):
    """Raised when evaluation meets a variable missing from the bindings."""


_FUNCTIONS = ("sin", "cos", "exp", "ln", "abs", "sign")
_NAMED_CONSTANTS = {"pi": math.pi, "e": math.e}
_VAR_PATTERN = re.compile(r"^(x|t|q|u[1-9][0-9]*)$")

# Printing precedence; higher binds tighter.
_PREC_ADD = 1
_PREC_MUL = 2
_PREC_NEG = 3
_PREC_POW = 4
_PREC_ATOM = 5


class Expression:
    """Base node.  Subclasses are frozen dataclasses; trees are immutable."""

    _prec = _PREC_ATOM

    def __str__(self) -> str:
        return _to_string(self)

    def __call__(self, **bindings: float) -> float:
        return evaluate(self, bindings)


@dataclass(frozen=True)
class Const(Expression):
    value: float

    _prec = _PREC_ATOM


@dataclass(frozen=True)
class Var(Expression):
    name: str

    _prec = _PREC_ATOM


@dataclass(frozen=True)
class Neg(Expression):
    arg: Expression

    _prec = _PREC_NEG


@dataclass(frozen=True)
class BinOp(Expression):
    op: str
    left: Expression
    right: Expression

    @property
    def _prec(self) -> int:  # type: ignore[override]
        return {"+": _PREC_ADD, "-": _PREC_ADD, "*": _PREC_MUL, "/": _PREC_MUL, "^": _PREC_POW}[self.op]


@dataclass(frozen=True)
class Call(Expression):
    fn: str
    arg: Expression

    _prec = _PREC_ATOM


# ---------------------------------------------------------------------------
# Smart constructors.  They fold constants and drop obvious identities so
# that symbolic derivatives stay readable; nothing deeper than that.


def const(value: float) -> Const:
    return Const(float(value))


def var(name: str) -> Var:
    if not _VAR_PATTERN.match(name):
        raise ValueError(f"not a valid variable name: {name!r}")
    return Var(name)


def neg(a: Expression) -> Expression:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(b, Neg) and b.arg == a:
        return Const(0.0)
    if isinstance(a, Neg) and a.arg == b:
        return Const(0.0)
    return BinOp("+", a, b)


def sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return neg(b)
    if a == b:
        return Const(0.0)
    return BinOp("-", a, b)


def mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    for first, second in ((a, b), (b, a)):
        if isinstance(first, Const):
            if first.value == 0.0:
                return Const(0.0)
            if first.value == 1.0:
                return second
            if first.value == -1.0:
                return neg(second)
    return BinOp("*", a, b)


def div(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const) and b.value != 0.0:
        if isinstance(a, Const):
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    return BinOp("/", a, b)


def pow_(a: Expression, b: Expression) -> Expression:
    if isinstance(b, Const):
        if b.value == 1.0:
            return a
        if b.value == 0.0:
            return Const(1.0)
        if isinstance(a, Const):
            try:
                return Const(_checked_pow(a.value, b.value))
            except DomainError:
                pass
    return BinOp("^", a, b)


def call(fn: str, arg: Expression) -> Expression:
    if fn not in _FUNCTIONS:
        raise ValueError(f"unknown function: {fn!r}")
    return Call(fn, arg)


# ---------------------------------------------------------------------------
# Parser: hand-rolled tokenizer plus recursive descent.

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "number" | "ident" | "op" | "end"
    text: str
    position: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            bad = len(text) - len(text[pos:].lstrip())
            if bad >= len(text):
                break
            raise ParseError(f"unexpected character {text[bad]!r}", bad)
        for kind in ("number", "ident", "op"):
            value = match.group(kind)
            if value is not None:
                tokens.append(_Token(kind, value, match.start(kind)))
                break
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect_op(self, op: str) -> None:
        token = self.peek()
        if token.kind != "op" or token.text != op:
            raise ParseError(f"expected {op!r}", token.position)
        self.advance()

    # expr := term (("+"|"-") term)*
    def parse_expr(self) -> Expression:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinOp(op, node, self.parse_term())
        return node

    # term := unary (("*"|"/") unary)*
    def parse_term(self) -> Expression:
        node = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            node = BinOp(op, node, self.parse_unary())
        return node

    # unary := "-" unary | power
    def parse_unary(self) -> Expression:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Neg(self.parse_unary())
        return self.parse_power()

    # power := atom ("^" exponent)*   (left fold, so a^b^c = (a^b)^c)
    def parse_power(self) -> Expression:
        node = self.parse_atom()
        while self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            node = BinOp("^", node, self.parse_exponent())
        return node

    # exponent := "-" exponent | atom   (lets x^-2 parse without parens)
    def parse_exponent(self) -> Expression:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Neg(self.parse_exponent())
        return self.parse_atom()

    def parse_atom(self) -> Expression:
        token = self.peek()
        if token.kind == "number":
            self.advance()
            return Const(float(token.text))
        if token.kind == "ident":
            self.advance()
            name = token.text
            if self.peek().kind == "op" and self.peek().text == "(":
                if name not in _FUNCTIONS:
                    raise ParseError(f"unknown function {name!r}", token.position)
                self.advance()
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(name, arg)
            if name in _FUNCTIONS:
                raise ParseError(f"function {name!r} needs an argument list", token.position)
            if name in _NAMED_CONSTANTS:
                return Const(_NAMED_CONSTANTS[name])
            if _VAR_PATTERN.match(name):
                return Var(name)
            raise ParseError(f"unknown identifier {name!r}", token.position)
        if token.kind == "op" and token.text == "(":
            self.advance()
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ParseError("expected a value", token.position)


def parse_expression(text: str) -> Expression:
    """Parse ``text`` into an expression tree.

    Raises ParseError (with byte offset) on malformed input or identifiers
    outside the fixed variable/function/constant vocabulary.
    """
    parser = _Parser(text)
    node = parser.parse_expr()
    trailing = parser.peek()
    if trailing.kind != "end":
        raise ParseError(f"unexpected trailing input {trailing.text!r}", trailing.position)
    return node


# ---------------------------------------------------------------------------
# Printing.  Minimal parentheses; output reparses to an equal-valued tree.


def _to_string(node: Expression) -> str:
    if isinstance(node, Const):
        if node.value < 0 or (node.value == 0 and math.copysign(1.0, node.value) < 0):
            return f"-{_format_number(-node.value)}"
        return _format_number(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        inner = _to_string(node.arg)
        if node.arg._prec < _PREC_NEG:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(node, Call):
        return f"{node.fn}({_to_string(node.arg)})"
    if isinstance(node, BinOp):
        prec = node._prec
        left = _to_string(node.left)
        right = _to_string(node.right)
        if node.left._prec < prec:
            left = f"({left})"
        # Left associativity: the right operand needs parens at equal
        # precedence; unary minus under ^ also needs them.
        if node.right._prec <= prec:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


def _format_number(value: float) -> str:
    if value == math.floor(value) and abs(value) < 1e16:
        return repr(value)
    return repr(value)


# ---------------------------------------------------------------------------
# Evaluation.


def _checked_pow(base: float, exponent: float) -> float:
    if base == 0.0 and exponent < 0.0:
        raise DomainError("zero raised to a negative power")
    if base < 0.0 and exponent != math.floor(exponent):
        raise DomainError(f"negative base {base!r} with non-integer exponent {exponent!r}")
    try:
        return math.pow(base, exponent)
    except OverflowError as err:
        raise DomainError(f"overflow in {base!r} ^ {exponent!r}") from err
    except ValueError as err:
        raise DomainError(str(err)) from err


def evaluate(node: Expression, bindings: Mapping[str, float]) -> float:
    """Evaluate at a point.  All free variables must appear in ``bindings``."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        try:
            return float(bindings[node.name])
        except KeyError:
            raise UnboundVariableError(f"variable {node.name!r} is not bound") from None
    if isinstance(node, Neg):
        return -evaluate(node.arg, bindings)
    if isinstance(node, BinOp):
        left = evaluate(node.left, bindings)
        right = evaluate(node.right, bindings)
        if node.op == "+":
            return left + right
        if node.op == "-":
            return left - right
        if node.op == "*":
            return left * right
        if node.op == "/":
            if right == 0.0:
                raise DomainError("division by zero")
            return left / right
        if node.op == "^":
            return _checked_pow(left, right)
        raise ValueError(f"unknown operator {node.op!r}")
    if isinstance(node, Call):
        value = evaluate(node.arg, bindings)
        if node.fn == "sin":
            return math.sin(value)
        if node.fn == "cos":
            return math.cos(value)
        if node.fn == "exp":
            try:
                return math.exp(value)
            except OverflowError as err:
                raise DomainError(f"overflow in exp({value!r})") from err
        if node.fn == "ln":
            if value <= 0.0:
                raise DomainError(f"ln of non-positive value {value!r}")
            return math.log(value)
        if node.fn == "abs":
            return abs(value)
        if node.fn == "sign":
            return math.copysign(1.0, value) if value != 0.0 else 0.0
        raise ValueError(f"unknown function {node.fn!r}")
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------------------
# Differentiation.  Exact chain rule; ^ with a constant integer exponent is
# handled with the power rule, any other ^ goes through exp(g * ln(f)).


def differentiate(node: Expression, name: str) -> Expression:
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0) if node.name == name else Const(0.0)
    if isinstance(node, Neg):
        return neg(differentiate(node.arg, name))
    if isinstance(node, BinOp):
        f, g = node.left, node.right
        df = differentiate(f, name)
        dg = differentiate(g, name)
        if node.op == "+":
            return add(df, dg)
        if node.op == "-":
            return sub(df, dg)
        if node.op == "*":
            return add(mul(df, g), mul(f, dg))
        if node.op == "/":
            return div(sub(mul(df, g), mul(f, dg)), mul(g, g))
        if node.op == "^":
            if isinstance(g, Const) and g.value == math.floor(g.value):
                # power rule for constant integer exponents
                c = g.value
                if c == 0.0:
                    return Const(0.0)
                return mul(mul(Const(c), pow_(f, Const(c - 1.0))), df)
            # f^g = exp(g ln f): derivative f^g * (dg ln f + g df / f)
            return mul(
                pow_(f, g),
                add(mul(dg, call("ln", f)), div(mul(g, df), f)),
            )
        raise ValueError(f"unknown operator {node.op!r}")
    if isinstance(node, Call):
        inner = differentiate(node.arg, name)
        if node.fn == "sin":
            outer: Expression = call("cos", node.arg)
        elif node.fn == "cos":
            outer = neg(call("sin", node.arg))
        elif node.fn == "exp":
            outer = call("exp", node.arg)
        elif node.fn == "ln":
            return div(inner, node.arg)
        elif node.fn == "abs":
            outer = call("sign", node.arg)
        elif node.fn == "sign":
            # zero almost everywhere; the jump at 0 is outside the language
            return Const(0.0)
        else:
            raise ValueError(f"unknown function {node.fn!r}")
        return mul(outer, inner)
    raise TypeError(f"not an expression node: {node!r}")


def substitute(node: Expression, name: str, replacement: Union[Expression, float]) -> Expression:
    """Replace every occurrence of variable ``name``; folds constants."""
    if not isinstance(replacement, Expression):
        replacement = Const(float(replacement))
    if isinstance(node, Const):
        return node
    if isinstance(node, Var):
        return replacement if node.name == name else node
    if isinstance(node, Neg):
        return neg(substitute(node.arg, name, replacement))
    if isinstance(node, BinOp):
        left = substitute(node.left, name, replacement)
        right = substitute(node.right, name, replacement)
        build = {"+": add, "-": sub, "*": mul, "/": div, "^": pow_}[node.op]
        return build(left, right)
    if isinstance(node, Call):
        return Call(node.fn, substitute(node.arg, name, replacement))
    raise TypeError(f"not an expression node: {node!r}")


def free_variables(node: Expression) -> frozenset[str]:
    names: set[str] = set()

    def walk(e: Expression) -> None:
        if isinstance(e, Var):
            names.add(e.name)
        elif isinstance(e, Neg):
            walk(e.arg)
        elif isinstance(e, BinOp):
            walk(e.left)
            walk(e.right)
        elif isinstance(e, Call):
            walk(e.arg)

    walk(node)
    return frozenset(names)


# ---------------------------------------------------------------------------
# Vectorized evaluation for the numerics layers.  The returned callable
# takes keyword numpy arrays (broadcastable) and returns the broadcast
# result.  Invalid operations raise FloatingPointError instead of yielding
# NaN; callers run inside np.errstate(...="raise").


def numpy_callable(node: Expression) -> Callable[..., np.ndarray]:
    fn = _compile_numpy(node)

    def evaluate_arrays(**bindings: np.ndarray) -> np.ndarray:
        env = {k: np.asarray(v, dtype=float) for k, v in bindings.items()}
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            result = fn(env)
        shape = np.broadcast_shapes(*(a.shape for a in env.values())) if env else ()
        return np.broadcast_to(np.asarray(result, dtype=float), shape) if shape else np.asarray(result, dtype=float)

    return evaluate_arrays


def _compile_numpy(node: Expression) -> Callable[[dict], np.ndarray]:
    if isinstance(node, Const):
        value = node.value
        return lambda env: value
    if isinstance(node, Var):
        name = node.name
        def read(env: dict) -> np.ndarray:
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(f"variable {name!r} is not bound") from None
        return read
    if isinstance(node, Neg):
        arg = _compile_numpy(node.arg)
        return lambda env: np.negative(arg(env))
    if isinstance(node, BinOp):
        left = _compile_numpy(node.left)
        right = _compile_numpy(node.right)
        op = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide, "^": np.power}[node.op]
        return lambda env: op(left(env), right(env))
    if isinstance(node, Call):
        arg = _compile_numpy(node.arg)
        fn = {
            "sin": np.sin,
            "cos": np.cos,
            "exp": np.exp,
            "ln": np.log,
            "abs": np.abs,
            "sign": np.sign,
        }[node.fn]
        return lambda env: fn(arg(env))
    raise TypeError(f"not an expression node: {node!r}")
