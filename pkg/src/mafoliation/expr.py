"""Real-analytic expressions in the real coordinates of C^{n+1}.

Text is parsed into a small tree whose only atoms are real constants and the
real coordinates ``x1 .. x{2n+2}`` (``x{2a-1} = Re z_a``, ``x{2a} = Im z_a``).
Complex conveniences (``z1``, ``i``, ``conj``, ``re``, ``im``, ``abs2``) are
desugared while parsing, so every stored tree is real.  The grammar is
documented in ``docs/grammar.md``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ArityError, DomainError, ExpressionError, OrderError, ParseError, UnknownIdentifierError
from .jet import MAX_EXPRESSION_ORDER, Jet

__all__ = [
    "Const", "Var", "Neg", "Add", "Sub", "Mul", "Div", "Pow", "Func",
    "Expression", "VectorExpression", "parse", "parse_vector", "eval_jet",
    "evaluate", "to_text", "FUNCTIONS",
]

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")
_COMPLEX_FUNCTIONS = ("re", "im", "conj", "abs2")


# ---------------------------------------------------------------- tree nodes

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based real coordinate


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Node"


Node = Union[Const, Var, Neg, Add, Sub, Mul, Div, Pow, Func]
_BINARY = {Add: "+", Sub: "-", Mul: "*", Div: "/"}


def children(node) -> tuple:
    if isinstance(node, (Const, Var)):
        return ()
    if isinstance(node, (Neg, Func)):
        return (node.arg,)
    if isinstance(node, Pow):
        return (node.base,)
    return (node.left, node.right)


def walk(node):
    """Yield every node of the tree (with repetition for shared subtrees)."""
    stack = [node]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(children(n))


def to_text(node) -> str:
    """Fully parenthesised text that parses back to the same tree."""
    if isinstance(node, Const):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 or text.startswith("-") else text
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"(-{to_text(node.arg)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)}^{node.exponent})"
    if isinstance(node, Func):
        return f"{node.name}({to_text(node.arg)})"
    return f"({to_text(node.left)} {_BINARY[type(node)]} {to_text(node.right)})"


# ------------------------------------------------------------------ evaluation

def _apply_function(name, x):
    if isinstance(x, Jet):
        return x.apply(name)
    x = np.asarray(x, dtype=float)
    if name == "log" and np.any(x <= 0):
        raise DomainError("log of a non-positive value")
    if name == "sqrt" and np.any(x < 0):
        raise DomainError("sqrt of a negative value")
    return getattr(np, name)(x)


def _divide(a, b):
    if not isinstance(b, Jet) and np.any(np.asarray(b) == 0):
        raise DomainError("division by zero")
    return a / b


def _power(a, n):
    if isinstance(a, Jet):
        return a**n
    a = np.asarray(a, dtype=float)
    if n < 0 and np.any(a == 0):
        raise DomainError("negative power of zero")
    return a ** float(n)


def evaluate(node, env, memo=None):
    """Evaluate a tree on ``env[i]`` = value of ``x{i+1}``.

    Values may be floats, numpy arrays or :class:`Jet` objects; shared
    subtrees are evaluated once.
    """
    if memo is None:
        memo = {}
    key = id(node)
    hit = memo.get(key)
    if hit is not None:
        return hit[1]
    if isinstance(node, Const):
        out = node.value
    elif isinstance(node, Var):
        out = env[node.index]
    elif isinstance(node, Neg):
        out = -evaluate(node.arg, env, memo)
    elif isinstance(node, Add):
        out = evaluate(node.left, env, memo) + evaluate(node.right, env, memo)
    elif isinstance(node, Sub):
        out = evaluate(node.left, env, memo) - evaluate(node.right, env, memo)
    elif isinstance(node, Mul):
        out = evaluate(node.left, env, memo) * evaluate(node.right, env, memo)
    elif isinstance(node, Div):
        out = _divide(evaluate(node.left, env, memo), evaluate(node.right, env, memo))
    elif isinstance(node, Pow):
        out = _power(evaluate(node.base, env, memo), node.exponent)
    elif isinstance(node, Func):
        out = _apply_function(node.name, evaluate(node.arg, env, memo))
    else:
        raise TypeError(f"not an expression node: {node!r}")
    memo[key] = (node, out)
    return out


# ------------------------------------------------------ complex desugaring

def _neg(a):
    if a is None:
        return None
    if isinstance(a, Const):
        return Const(-a.value)
    return Neg(a)


def _add(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return Add(a, b)


def _sub(a, b):
    if b is None:
        return a
    if a is None:
        return _neg(b)
    return Sub(a, b)


def _mul(a, b):
    if a is None or b is None:
        return None
    return Mul(a, b)


@dataclass(frozen=True)
class _C:
    """A complex intermediate value; ``None`` parts are structural zeros."""

    re: object
    im: object = None

    def __add__(self, o):
        return _C(_add(self.re, o.re), _add(self.im, o.im))

    def __sub__(self, o):
        return _C(_sub(self.re, o.re), _sub(self.im, o.im))

    def __neg__(self):
        return _C(_neg(self.re), _neg(self.im))

    def __mul__(self, o):
        return _C(
            _sub(_mul(self.re, o.re), _mul(self.im, o.im)),
            _add(_mul(self.re, o.im), _mul(self.im, o.re)),
        )

    def divide(self, o, offset):
        if o.re is None and o.im is None:
            raise ParseError("division by a structurally zero expression", offset)
        if o.im is None:
            return _C(None if self.re is None else Div(self.re, o.re),
                      None if self.im is None else Div(self.im, o.re))
        if o.re is None:
            # (a + ib) / (id) = b/d - i a/d
            return _C(None if self.im is None else Div(self.im, o.im),
                      None if self.re is None else _neg(Div(self.re, o.im)))
        den = Add(Pow(o.re, 2), Pow(o.im, 2))
        num_re = _add(_mul(self.re, o.re), _mul(self.im, o.im))
        num_im = _sub(_mul(self.im, o.re), _mul(self.re, o.im))
        return _C(None if num_re is None else Div(num_re, den),
                  None if num_im is None else Div(num_im, den))

    def power(self, n):
        if self.im is None:
            if self.re is None:
                return _C(Const(0.0)) if n > 0 else None
            return _C(Pow(self.re, n))
        if n < 0:
            return None
        if n == 0:
            return _C(Const(1.0))
        result = None
        base = self
        while n:
            if n & 1:
                result = base if result is None else result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def real_node(self):
        return Const(0.0) if self.re is None else self.re


# ------------------------------------------------------------------ tokenizer

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^(),\[\]]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            # offending character: skip whitespace for an accurate offset
            bad = pos
            while bad < n and text[bad].isspace():
                bad += 1
            raise ParseError(f"unexpected character {text[bad]!r}", bad + 1)
        start = m.start(m.lastgroup) + 1
        kind = m.lastgroup
        val = m.group(kind)
        if kind == "op" and val == "**":
            val = "^"
        tokens.append((kind, val, start))
        pos = m.end()
    tokens.append(("eof", "", n + 1))
    return tokens


class _Parser:
    def __init__(self, text, dim):
        if not text or not text.strip():
            raise ParseError("empty expression", 1)
        self.text = text
        self.dim = dim
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, off = self.peek()
        if val != value or kind == "eof":
            found = "end of input" if kind == "eof" else repr(val)
            raise ParseError(f"expected {value!r}, found {found}", off)
        return self.take()

    def finish(self):
        kind, val, off = self.peek()
        if kind != "eof":
            raise ParseError(f"unexpected token {val!r}", off)

    # expr := term (('+'|'-') term)*
    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.term()
            left = left + right if op == "+" else left - right
        return left

    # term := unary (('*'|'/') unary)*
    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, op, off = self.take()
            right = self.unary()
            left = left * right if op == "*" else left.divide(right, off)
        return left

    # unary := ('-'|'+') unary | power
    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return -self.unary()
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    # power := atom ('^' ['-'|'+'] INTEGER)?
    def power(self):
        base = self.atom()
        if self.peek()[1] == "^" and self.peek()[0] == "op":
            self.take()
            sign = 1
            if self.peek()[1] in ("-", "+") and self.peek()[0] == "op":
                sign = -1 if self.take()[1] == "-" else 1
            kind, val, off = self.take()
            if kind != "num" or not re.fullmatch(r"\d+", val):
                raise ParseError("exponent must be an integer literal", off)
            n = sign * int(val)
            out = base.power(n)
            if out is None:
                raise ParseError("negative power of a complex or zero expression", off)
            return out
        return base

    def atom(self):
        kind, val, off = self.take()
        if kind == "num":
            return _C(Const(float(val)))
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if kind == "id":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                return self.call(val, off)
            return self.identifier(val, off)
        found = "end of input" if kind == "eof" else repr(val)
        raise ParseError(f"unexpected {found}", off)

    def identifier(self, name, off):
        if name == "pi":
            return _C(Const(math.pi))
        if name == "i":
            return _C(None, Const(1.0))
        m = re.fullmatch(r"([xz])([1-9]\d*)", name)
        if m:
            k = int(m.group(2))
            if m.group(1) == "x" and k <= 2 * self.dim:
                return _C(Var(k - 1))
            if m.group(1) == "z" and k <= self.dim:
                return _C(Var(2 * k - 2), Var(2 * k - 1))
        if name in FUNCTIONS or name in _COMPLEX_FUNCTIONS:
            raise ParseError(f"function {name!r} needs an argument list", off)
        raise UnknownIdentifierError(f"unknown identifier {name!r}", off)

    def call(self, name, off):
        if name not in FUNCTIONS and name not in _COMPLEX_FUNCTIONS:
            raise UnknownIdentifierError(f"unknown function {name!r}", off)
        self.expect("(")
        args = []
        if self.peek()[1] != ")":
            args.append(self.expr())
            while self.peek()[1] == ",":
                self.take()
                args.append(self.expr())
        self.expect(")")
        if len(args) != 1:
            raise ArityError(f"{name}() takes exactly one argument ({len(args)} given)", off)
        (a,) = args
        if name == "re":
            return _C(a.re)
        if name == "im":
            return _C(a.im)
        if name == "conj":
            return _C(a.re, _neg(a.im))
        if name == "abs2":
            return _C(_add(None if a.re is None else Pow(a.re, 2),
                           None if a.im is None else Pow(a.im, 2)))
        if a.im is not None:
            raise ParseError(f"{name}() requires a real argument", off)
        return _C(Func(name, a.real_node()))


# ------------------------------------------------------------------ public API

@dataclass(frozen=True)
class Expression:
    """A real scalar expression on C^{dim} (``2*dim`` real coordinates)."""

    root: Node
    dim: int

    @property
    def nreal(self) -> int:
        return 2 * self.dim

    def to_text(self) -> str:
        return to_text(self.root)

    def __str__(self):
        return self.to_text()

    def variables(self) -> set:
        return {n.index for n in walk(self.root) if isinstance(n, Var)}

    def __call__(self, point):
        point = np.asarray(point, dtype=float)
        return np.asarray(evaluate(self.root, list(point)), dtype=float) + np.zeros(point.shape[1:])

    def jet(self, point, order: int, max_order: int = MAX_EXPRESSION_ORDER) -> Jet:
        return eval_jet(self, point, order, max_order)

    def __mul__(self, other: "Expression") -> "Expression":
        return Expression(Mul(self.root, other.root), self.dim)


@dataclass(frozen=True)
class VectorExpression:
    """Real components of a vector field on C^{dim} = R^{2 dim}."""

    components: tuple
    dim: int

    def __post_init__(self):
        if len(self.components) != 2 * self.dim:
            raise ExpressionError(
                f"vector field needs {2 * self.dim} real components, got {len(self.components)}"
            )

    def __len__(self):
        return len(self.components)

    def __getitem__(self, k) -> Expression:
        return Expression(self.components[k], self.dim)

    def to_text(self) -> str:
        return "[" + ", ".join(to_text(c) for c in self.components) + "]"

    def __call__(self, point):
        point = np.asarray(point, dtype=float)
        memo = {}
        env = list(point)
        return np.stack([np.asarray(evaluate(c, env, memo), dtype=float) + np.zeros(point.shape[1:])
                         for c in self.components])

    def jets(self, point, order: int) -> list:
        seeds = Jet.seed(point, order)
        return evaluate_vector(self, seeds)

    def scaled(self, factor: Expression) -> "VectorExpression":
        return VectorExpression(tuple(Mul(factor.root, c) for c in self.components), self.dim)


def evaluate_vector(field: VectorExpression, env) -> list:
    memo = {}
    out = []
    for c in field.components:
        v = evaluate(c, env, memo)
        if not isinstance(v, Jet) and isinstance(env[0], Jet):
            v = Jet.constant(np.broadcast_to(v, env[0].batch_shape), env[0].nvars, env[0].order)
        out.append(v)
    return out


def parse(text: str, ambient_complex_dim: int) -> Expression:
    """Parse a real scalar expression on C^{ambient_complex_dim}."""
    p = _Parser(text, ambient_complex_dim)
    value = p.expr()
    p.finish()
    if value.im is not None:
        raise ParseError("expression is complex-valued; wrap it in re() or im()", 1)
    return Expression(value.real_node(), ambient_complex_dim)


def parse_vector(text: str, ambient_complex_dim: int) -> VectorExpression:
    """Parse ``[c1, ..., c_{n+1}]`` (complex components) or ``[x1, ..., x_{2n+2}]`` (real)."""
    p = _Parser(text, ambient_complex_dim)
    p.expect("[")
    items = [p.expr()]
    while p.peek()[1] == ",":
        p.take()
        items.append(p.expr())
    p.expect("]")
    p.finish()
    dim = ambient_complex_dim
    if len(items) == dim:
        comps = []
        for c in items:
            comps.extend([c.real_node(), Const(0.0) if c.im is None else c.im])
    elif len(items) == 2 * dim:
        if any(c.im is not None for c in items):
            raise ParseError("real-component vector fields need real entries", 1)
        comps = [c.real_node() for c in items]
    else:
        raise ArityError(
            f"vector field needs {dim} complex or {2 * dim} real components, got {len(items)}", 1
        )
    return VectorExpression(tuple(comps), dim)


def eval_jet(e: Expression, p, order: int, max_order: int = MAX_EXPRESSION_ORDER) -> Jet:
    """Exact Taylor jet of ``e`` at ``p`` up to ``order``."""
    if order < 0:
        raise OrderError("order must be non-negative")
    if order > max_order:
        raise OrderError(f"order {order} exceeds the configured maximum {max_order}")
    p = np.asarray(p, dtype=float)
    if p.shape[0] != e.nreal:
        raise ValueError(f"point must have {e.nreal} real coordinates")
    seeds = Jet.seed(p, order)
    out = evaluate(e.root, seeds)
    if not isinstance(out, Jet):
        out = Jet.constant(np.broadcast_to(out, p.shape[1:]), e.nreal, order)
    return out
