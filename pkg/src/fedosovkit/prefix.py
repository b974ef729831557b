"""Prefix (s-expression) syntax for scalar expressions.

Grammar::

    expr     = atom | "(" head { expr } ")" ;
    atom     = number | name ;
    number   = [ "-" ] digit { digit } [ ( "/" | "." ) digit { digit } ] ;
    name     = letter { letter | digit | "_" } ;
    head     = "+" | "-" | "*" | "/" | "^" | "d" | name ;

Builtin heads: ``+ - * /`` (n-ary, unary ``-`` negates and unary ``/``
inverts), ``^`` (binary power), ``sqrt exp ln sin cos tan atan2``, and
``d`` for derivatives: ``(d f x y)`` is the mixed partial of f in x then y.
Any other head is an opaque function, e.g. ``(V q)`` or ``(W T H)``.
The names ``hbar``, ``pi`` and ``E`` are reserved. Decimal literals are read
exactly as rationals.

Examples::

    (* 2 L)
    (+ (* 1/2 (^ p 2)) (V q))
    (* (exp (* -2 H (/ hbar))) (- (* 4 H (/ hbar)) 1))
"""
from __future__ import annotations

import re
from fractions import Fraction

import sympy as sp
from sympy.core.function import AppliedUndef

from .errors import ParseError
from .symbolic import _OPAQUE_CACHE, opaque, sym

_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")
_NUMBER = re.compile(r"-?\d+(?:[./]\d+)?$")
_NAME = re.compile(r"[A-Za-z][A-Za-z0-9_]*$")

_UNARY = {
    "sqrt": sp.sqrt,
    "exp": sp.exp,
    "ln": sp.log,
    "log": sp.log,
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "atan": sp.atan,
}


def _tokenize(text: str):
    pos = 0
    out = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            if text[pos:].strip() == "":
                break
            raise ParseError("unexpected character", pos)
        start = m.start(m.lastindex)
        out.append((m.group(m.lastindex), start))
        pos = m.end()
    return out


def parse(text: str, functions: dict | None = None) -> sp.Expr:
    """Parse a prefix-syntax string.

    Args:
        text: Source text.
        functions: Optional mapping from head names to sympy function
            classes, e.g. opaque symbols with derivative rules. Unknown heads
            become formal functions.

    Raises:
        ParseError: With the character position of the problem.
    """
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty input", 0)
    expr, i = _parse(tokens, 0, functions or {}, text)
    if i != len(tokens):
        raise ParseError("trailing input", tokens[i][1])
    return expr


def _parse(tokens, i, functions, text):
    if i >= len(tokens):
        raise ParseError("unexpected end of input", len(text))
    tok, pos = tokens[i]
    if tok == ")":
        raise ParseError("unexpected ')'", pos)
    if tok != "(":
        return _atom(tok, pos), i + 1
    if i + 1 >= len(tokens):
        raise ParseError("unbalanced parenthesis", pos)
    head, hpos = tokens[i + 1]
    if head in ("(", ")"):
        raise ParseError("expected an operator", hpos)
    args = []
    j = i + 2
    while True:
        if j >= len(tokens):
            raise ParseError("unbalanced parenthesis", pos)
        if tokens[j][0] == ")":
            break
        a, j = _parse(tokens, j, functions, text)
        args.append(a)
    return _apply(head, args, hpos, functions), j + 1


def _atom(tok, pos):
    if _NUMBER.match(tok):
        return sp.Rational(Fraction(tok))
    if tok == "pi":
        return sp.pi
    if tok == "E":
        return sp.E
    if _NAME.match(tok):
        return sym(tok)
    raise ParseError(f"bad token {tok!r}", pos)


def _apply(head, args, pos, functions):
    def need(n):
        if len(args) != n:
            raise ParseError(f"'{head}' takes {n} argument(s), got {len(args)}", pos)

    if head == "+":
        return sp.Add(*args)
    if head == "*":
        return sp.Mul(*args)
    if head == "-":
        if not args:
            raise ParseError("'-' needs arguments", pos)
        return -args[0] if len(args) == 1 else args[0] - sp.Add(*args[1:])
    if head == "/":
        if not args:
            raise ParseError("'/' needs arguments", pos)
        return 1 / args[0] if len(args) == 1 else args[0] / sp.Mul(*args[1:])
    if head == "^":
        need(2)
        return args[0] ** args[1]
    if head == "atan2":
        need(2)
        return sp.atan2(*args)
    if head in _UNARY:
        need(1)
        return _UNARY[head](args[0])
    if head == "d":
        if len(args) < 2:
            raise ParseError("'d' needs a function and variables", pos)
        return sp.diff(args[0], *args[1:])
    if not _NAME.match(head):
        raise ParseError(f"unknown operator {head!r}", pos)
    f = functions.get(head) or _OPAQUE_CACHE.get(head)
    if f is None:
        f = opaque(head, formal=True)
    return f(*args)


def to_prefix(e) -> str:
    """Render an expression in prefix syntax; ``parse`` inverts it."""
    e = sp.sympify(e)
    if e.is_Rational:
        return str(e)
    if e.is_Float:
        return str(sp.Rational(str(e)))
    if e is sp.pi:
        return "pi"
    if e is sp.E:
        return "E"
    if e.is_Symbol:
        return e.name
    if e.is_Add:
        return "(+ " + " ".join(to_prefix(a) for a in e.as_ordered_terms()) + ")"
    if e.is_Mul:
        return "(* " + " ".join(to_prefix(a) for a in e.as_ordered_factors()) + ")"
    if e.is_Pow:
        if e.exp == sp.Rational(1, 2):
            return f"(sqrt {to_prefix(e.base)})"
        if e.exp == -1:
            return f"(/ {to_prefix(e.base)})"
        return f"(^ {to_prefix(e.base)} {to_prefix(e.exp)})"
    if isinstance(e, sp.exp):
        return f"(exp {to_prefix(e.args[0])})"
    if isinstance(e, sp.log):
        return f"(ln {to_prefix(e.args[0])})"
    if isinstance(e, sp.Derivative):
        vs = []
        for v, n in e.variable_count:
            vs += [to_prefix(v)] * int(n)
        return f"(d {to_prefix(e.expr)} {' '.join(vs)})"
    if isinstance(e, (sp.sin, sp.cos, sp.tan, sp.atan, sp.atan2)) or isinstance(
            e, AppliedUndef) or isinstance(e, sp.Function):
        name = type(e).__name__
        return f"({name} {' '.join(to_prefix(a) for a in e.args)})"
    raise ValueError(f"cannot render {e!r} in prefix syntax")
