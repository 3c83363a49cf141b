"""Boundary, field and initial condition specifications.

A condition's value descriptor is either absent (natural conditions that
need no number), a constant, or an arithmetic expression over the spatial
coordinates and time.  Expressions are parsed once by a small recursive
descent parser; evaluation costs one tree walk.  The variables x, y, z, t
are available, with x[0], x[1], x[2] accepted as coordinate aliases.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class ConditionError(RuntimeError):
    """Malformed value expression or unresolvable condition target."""


# ---- value descriptors ----------------------------------------------------------


class NoValue:
    """Marker for conditions that carry no number (deck word: None)."""

    def __call__(self, x, t):
        raise ConditionError("condition has no value to evaluate")

    def __repr__(self):
        return "NoValue()"


@dataclass(frozen=True)
class ConstantValue:
    value: float

    def __call__(self, x, t):
        return self.value


class FunctionValue:
    """Compiled arithmetic expression of (x, y, z, t)."""

    def __init__(self, expression):
        self.expression = expression
        self._root = _Parser(expression).parse()

    def __call__(self, x, t):
        env = {"x": float(x[0]), "y": float(x[1]),
               "z": float(x[2]) if len(x) > 2 else 0.0, "t": float(t)}
        return self._root(env)

    def __repr__(self):
        return "FunctionValue(%r)" % self.expression


# ---- expression parsing ---------------------------------------------------------

_FUNCTIONS = {
    "sin": math.sin, "cos": math.cos, "tan": math.tan,
    "exp": math.exp, "log": math.log, "sqrt": math.sqrt, "abs": abs,
}
_CONSTANTS = {"pi": math.pi, "e": math.e}
_COORD_ALIAS = {0: "x", 1: "y", 2: "z"}


class _Parser:
    """expr := term (('+'|'-') term)* ; term := unary (('*'|'/') unary)* ;
    unary := ('+'|'-') unary | power ; power := atom ('^' unary)? ;
    atom := number | name | name '[' digit ']' | name '(' expr ')' | '(' expr ')'
    """

    def __init__(self, text):
        self.text = text
        self.pos = 0

    def parse(self):
        node = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ConditionError("unexpected %r at position %d in %r"
                                 % (self.text[self.pos], self.pos, self.text))
        return node

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self):
        self._skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _take(self, ch):
        if self._peek() == ch:
            self.pos += 1
            return True
        return False

    def _expr(self):
        node = self._term()
        while True:
            if self._take("+"):
                lhs, rhs = node, self._term()
                node = lambda e, a=lhs, b=rhs: a(e) + b(e)
            elif self._take("-"):
                lhs, rhs = node, self._term()
                node = lambda e, a=lhs, b=rhs: a(e) - b(e)
            else:
                return node

    def _term(self):
        node = self._unary()
        while True:
            if self._peek() == "*" and self.text[self.pos:self.pos + 2] != "**":
                self.pos += 1
                lhs, rhs = node, self._unary()
                node = lambda e, a=lhs, b=rhs: a(e) * b(e)
            elif self._take("/"):
                lhs, rhs = node, self._unary()
                node = lambda e, a=lhs, b=rhs: a(e) / b(e)
            else:
                return node

    def _unary(self):
        if self._take("-"):
            inner = self._unary()
            return lambda e, a=inner: -a(e)
        if self._take("+"):
            return self._unary()
        return self._power()

    def _power(self):
        base = self._atom()
        self._skip_ws()
        if self.text[self.pos:self.pos + 2] == "**":
            self.pos += 2
            exponent = self._unary()
            return lambda e, a=base, b=exponent: a(e) ** b(e)
        if self._take("^"):
            exponent = self._unary()
            return lambda e, a=base, b=exponent: a(e) ** b(e)
        return base

    def _atom(self):
        ch = self._peek()
        if ch == "(":
            self.pos += 1
            node = self._expr()
            if not self._take(")"):
                raise ConditionError("missing ')' in %r" % self.text)
            return node
        if ch.isdigit() or ch == ".":
            return self._number()
        if ch.isalpha() or ch == "_":
            return self._name()
        raise ConditionError("unexpected %r at position %d in %r"
                             % (ch or "end of input", self.pos, self.text))

    def _number(self):
        start = self.pos
        seen_exp = False
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c.isdigit() or c == ".":
                self.pos += 1
            elif c in "eE" and not seen_exp:
                seen_exp = True
                self.pos += 1
                if self.pos < len(self.text) and self.text[self.pos] in "+-":
                    self.pos += 1
            else:
                break
        try:
            value = float(self.text[start:self.pos])
        except ValueError:
            raise ConditionError("bad number at position %d in %r"
                                 % (start, self.text))
        return lambda e, v=value: v

    def _name(self):
        start = self.pos
        while self.pos < len(self.text) and (self.text[self.pos].isalnum()
                                             or self.text[self.pos] == "_"):
            self.pos += 1
        name = self.text[start:self.pos]
        if self._take("["):
            idx_ch = self._peek()
            if idx_ch not in "012" or name != "x":
                raise ConditionError("only x[0], x[1], x[2] are indexable")
            self.pos += 1
            if not self._take("]"):
                raise ConditionError("missing ']' in %r" % self.text)
            coord = _COORD_ALIAS[int(idx_ch)]
            return lambda e, n=coord: e[n]
        if self._peek() == "(":
            fn = _FUNCTIONS.get(name)
            if fn is None:
                raise ConditionError("unknown function %r" % name)
            self.pos += 1
            arg = self._expr()
            if not self._take(")"):
                raise ConditionError("missing ')' after %s(" % name)
            return lambda e, f=fn, a=arg: f(a(e))
        if name in _CONSTANTS:
            return lambda e, v=_CONSTANTS[name]: v
        if name in ("x", "y", "z", "t"):
            return lambda e, n=name: e[n]
        raise ConditionError("unknown name %r in %r" % (name, self.text))


def make_value(spec):
    """Build a value descriptor from a deck token: None, a float literal,
    or ('Function', expression)."""
    if spec is None or spec == "None":
        return NoValue()
    if isinstance(spec, (int, float)):
        return ConstantValue(float(spec))
    if isinstance(spec, tuple) and spec[0] == "Function":
        return FunctionValue(spec[1])
    try:
        return ConstantValue(float(spec))
    except (TypeError, ValueError):
        raise ConditionError("cannot interpret condition value %r" % (spec,))


# ---- condition specifications -----------------------------------------------------


@dataclass(frozen=True)
class BoundaryCondition:
    physical_name: str
    dof_type: int               # 1-based declaration index
    condition_type: str
    numerics_id: int
    value: object               # NoValue | ConstantValue | FunctionValue

    def evaluate(self, x, t):
        return self.value(x, t)


@dataclass(frozen=True)
class FieldCondition:
    physical_name: str
    condition_type: str
    numerics_id: int
    value: object

    def evaluate(self, x, t):
        return self.value(x, t)


@dataclass(frozen=True)
class InitialCondition:
    physical_name: str
    target: str                 # "NodalDof" or "CellDof"
    dof_type: int
    value: object

    def evaluate(self, x, t=0.0):
        return self.value(x, t)
