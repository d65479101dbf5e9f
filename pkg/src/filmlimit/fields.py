"""Analytic displacement fields, exact strains and tensor Gauss-Legendre quadrature.

A small expression language describes scalar functions of ``x1, x2, x3``.
Expressions are differentiated symbolically, so strains carry no
finite-difference error.  Vector fields are combined into piecewise fields
with declared jump facets, and integrated cell by cell.
"""

from __future__ import annotations

import functools
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TRACE_TOL = 1e-10
JUMP_FLOOR = 1e-8
DEFAULT_ORDER = 5
DEFAULT_BOX = ((0.0, 1.0), (0.0, 1.0), (-2.0, 1.0))

_FUNCS: dict[str, Callable] = {
    "sin": np.sin,
    "cos": np.cos,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "exp": np.exp,
}
_VARS = {"x1": 0, "x2": 1, "x3": 2}


class DSLSyntaxError(ValueError):
    """Malformed expression source.

    Attributes
    ----------
    position : int
        Zero-based character offset of the offending token.
    """

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownIdentifierError(DSLSyntaxError):
    pass


class NonIntegerExponentError(DSLSyntaxError):
    pass


class DomainError(ValueError):
    """Evaluation outside the validated box, or a non-finite value inside it."""


class MisalignedCellsError(ValueError):
    """Integration cells straddle a piece boundary or knot line."""


# ---------------------------------------------------------------------------
# expression tree


class Expr:
    """Base node of a scalar expression over ``x1, x2, x3``."""

    prec = 9

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n: int):
        return power(self, n)

    def diff(self, i: int) -> "Expr":
        raise NotImplementedError

    def substitute(self, mapping: dict[int, "Expr"]) -> "Expr":
        raise NotImplementedError

    def to_text(self) -> str:
        raise NotImplementedError

    def _build(self) -> Callable:
        raise NotImplementedError

    @functools.cached_property
    def _fn(self) -> Callable:
        return self._build()

    def evaluate(self, x) -> np.ndarray:
        """Evaluate at points ``x`` of shape ``(..., 3)``."""
        x = np.asarray(x, dtype=float)
        out = self._fn(x[..., 0], x[..., 1], x[..., 2])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def is_const(self) -> bool:
        return isinstance(self, Const)

    def __str__(self) -> str:
        return self.to_text()


def _lift(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return Const(float(v))


def _wrap(e: Expr, prec: int, strict: bool = False) -> str:
    s = e.to_text()
    if e.prec < prec or (strict and e.prec == prec):
        return f"({s})"
    return s


@dataclass(frozen=True, eq=True)
class Const(Expr):
    value: float

    @property
    def prec(self):
        return 9 if self.value >= 0 else 3

    def diff(self, i):
        return ZERO

    def substitute(self, mapping):
        return self

    def to_text(self):
        v = self.value
        if v == int(v) and abs(v) < 1e15:
            return str(int(v))
        return repr(v)

    def _build(self):
        v = self.value
        return lambda a, b, c: v


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int

    def diff(self, i):
        return ONE if i == self.index else ZERO

    def substitute(self, mapping):
        return mapping.get(self.index, self)

    def to_text(self):
        return f"x{self.index + 1}"

    def _build(self):
        k = self.index
        return lambda *xs: xs[k]


@dataclass(frozen=True, eq=True)
class Add(Expr):
    a: Expr
    b: Expr
    prec = 1

    def diff(self, i):
        return add(self.a.diff(i), self.b.diff(i))

    def substitute(self, mapping):
        return add(self.a.substitute(mapping), self.b.substitute(mapping))

    def to_text(self):
        return f"{_wrap(self.a, 1)} + {_wrap(self.b, 1, strict=True)}"

    def _build(self):
        fa, fb = self.a._fn, self.b._fn
        return lambda *xs: fa(*xs) + fb(*xs)


@dataclass(frozen=True, eq=True)
class Sub(Expr):
    a: Expr
    b: Expr
    prec = 1

    def diff(self, i):
        return sub(self.a.diff(i), self.b.diff(i))

    def substitute(self, mapping):
        return sub(self.a.substitute(mapping), self.b.substitute(mapping))

    def to_text(self):
        return f"{_wrap(self.a, 1)} - {_wrap(self.b, 1, strict=True)}"

    def _build(self):
        fa, fb = self.a._fn, self.b._fn
        return lambda *xs: fa(*xs) - fb(*xs)


@dataclass(frozen=True, eq=True)
class Mul(Expr):
    a: Expr
    b: Expr
    prec = 2

    def diff(self, i):
        return add(mul(self.a.diff(i), self.b), mul(self.a, self.b.diff(i)))

    def substitute(self, mapping):
        return mul(self.a.substitute(mapping), self.b.substitute(mapping))

    def to_text(self):
        return f"{_wrap(self.a, 2)}*{_wrap(self.b, 2, strict=True)}"

    def _build(self):
        fa, fb = self.a._fn, self.b._fn
        return lambda *xs: fa(*xs) * fb(*xs)


@dataclass(frozen=True, eq=True)
class Div(Expr):
    a: Expr
    b: Expr
    prec = 2

    def diff(self, i):
        num = sub(mul(self.a.diff(i), self.b), mul(self.a, self.b.diff(i)))
        return div(num, power(self.b, 2))

    def substitute(self, mapping):
        return div(self.a.substitute(mapping), self.b.substitute(mapping))

    def to_text(self):
        return f"{_wrap(self.a, 2)}/{_wrap(self.b, 2, strict=True)}"

    def _build(self):
        fa, fb = self.a._fn, self.b._fn
        return lambda *xs: fa(*xs) / fb(*xs)


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    a: Expr
    prec = 3

    def diff(self, i):
        return neg(self.a.diff(i))

    def substitute(self, mapping):
        return neg(self.a.substitute(mapping))

    def to_text(self):
        return f"-{_wrap(self.a, 4)}"

    def _build(self):
        fa = self.a._fn
        return lambda *xs: -fa(*xs)


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    n: int
    prec = 4

    def diff(self, i):
        return mul(mul(Const(float(self.n)), power(self.base, self.n - 1)), self.base.diff(i))

    def substitute(self, mapping):
        return power(self.base.substitute(mapping), self.n)

    def to_text(self):
        return f"{_wrap(self.base, 5)}^{self.n}"

    def _build(self):
        fb, n = self.base._fn, self.n
        if n < 0:
            return lambda *xs: 1.0 / fb(*xs) ** (-n)
        return lambda *xs: fb(*xs) ** n


@dataclass(frozen=True, eq=True)
class Call(Expr):
    name: str
    arg: Expr

    def diff(self, i):
        inner = self.arg.diff(i)
        if inner == ZERO:
            return ZERO
        outer = {
            "sin": lambda a: call("cos", a),
            "cos": lambda a: neg(call("sin", a)),
            "sinh": lambda a: call("cosh", a),
            "cosh": lambda a: call("sinh", a),
            "exp": lambda a: call("exp", a),
        }[self.name](self.arg)
        return mul(outer, inner)

    def substitute(self, mapping):
        return call(self.name, self.arg.substitute(mapping))

    def to_text(self):
        return f"{self.name}({self.arg.to_text()})"

    def _build(self):
        f, fa = _FUNCS[self.name], self.arg._fn
        return lambda *xs: f(fa(*xs))


ZERO = Const(0.0)
ONE = Const(1.0)


# constant-folding constructors


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if a == ZERO:
        return b
    if b == ZERO:
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if b == ZERO:
        return a
    if a == ZERO:
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if a == ZERO or b == ZERO:
        return ZERO
    if a == ONE:
        return b
    if b == ONE:
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const) and b.value != 0.0:
        return Const(a.value / b.value)
    if a == ZERO:
        return ZERO
    if b == ONE:
        return a
    return Div(a, b)


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.a
    return Neg(a)


def power(a: Expr, n: int) -> Expr:
    n = int(n)
    if isinstance(a, Const) and (a.value != 0.0 or n >= 0):
        return Const(a.value**n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    return Pow(a, n)


def call(name: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(float(_FUNCS[name](a.value)))
    return Call(name, a)


def var(i: int) -> Expr:
    return Var(i)


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks, pos = [], 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            bad = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise DSLSyntaxError(f"unexpected character {text[bad]!r}", bad)
        kind = m.lastgroup
        toks.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value: str):
        t = self.take()
        if t[1] != value:
            raise DSLSyntaxError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2])
        return t

    def parse(self) -> Expr:
        e = self.expr()
        t = self.peek()
        if t[0] != "end":
            raise DSLSyntaxError(f"unexpected token {t[1]!r}", t[2])
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.term()
            e = Add(e, rhs) if op == "+" else Sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            rhs = self.factor()
            e = Mul(e, rhs) if op == "*" else Div(e, rhs)
        return e

    def factor(self) -> Expr:
        t = self.peek()
        if t[0] == "op" and t[1] in ("-", "+"):
            self.take()
            inner = self.factor()
            return Neg(inner) if t[1] == "-" else inner
        b = self.base()
        if self.peek()[1] == "^":
            self.take()
            sign = 1
            t = self.peek()
            if t[1] in ("-", "+") and t[0] == "op":
                self.take()
                sign = -1 if t[1] == "-" else 1
                t = self.peek()
            if t[0] != "num" or not t[1].isdigit():
                raise NonIntegerExponentError("exponent must be an integer literal", t[2])
            self.take()
            return Pow(b, sign * int(t[1]))
        return b

    def base(self) -> Expr:
        t = self.take()
        if t[0] == "num":
            return Const(float(t[1]))
        if t[0] == "id":
            if t[1] in _VARS:
                return Var(_VARS[t[1]])
            if t[1] in _FUNCS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(t[1], arg)
            raise UnknownIdentifierError(f"unknown identifier {t[1]!r}", t[2])
        if t[1] == "(":
            e = self.expr()
            self.expect(")")
            return e
        raise DSLSyntaxError(f"unexpected token {t[1] or 'end of input'!r}", t[2])


def parse_expr(text: str) -> Expr:
    """Parse one scalar expression.

    Besides the core grammar, a leading unary sign and a signed integer
    exponent (``x1^-2``) are accepted.
    """
    return _Parser(text).parse()


def as_expr(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, str):
        return parse_expr(v)
    return Const(float(v))


# ---------------------------------------------------------------------------
# generic fields


def _lattice(box, n: int) -> np.ndarray:
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


def _empty_breaks():
    return ((), (), ())


class Field:
    """Vector field on R^3 with an analytic Jacobian.

    Subclasses implement ``value`` (shape ``(..., 3)``) and ``jacobian``
    (shape ``(..., 3, 3)``, entry ``[i, j] = d u_i / d x_j``).  ``breaks``
    lists per axis the coordinates where the field is not smooth; integration
    cells must be aligned with them.
    """

    breaks: tuple = _empty_breaks()

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def strain(self, x) -> np.ndarray:
        return strain(self, x)

    def __add__(self, other: "Field") -> "Field":
        return SumField(self, other)

    def __rmul__(self, c: float) -> "Field":
        return ScaledField(float(c), self)


def strain(u: Field, x) -> np.ndarray:
    """Symmetric gradient ``e_ij = (d_i u_j + d_j u_i) / 2`` at points ``x``."""
    J = u.jacobian(x)
    return 0.5 * (J + np.swapaxes(J, -1, -2))


def _merge_breaks(*bs):
    return tuple(tuple(sorted(set().union(*(b[k] for b in bs)))) for k in range(3))


class SumField(Field):
    def __init__(self, a: Field, b: Field):
        self.a, self.b = a, b
        self.breaks = _merge_breaks(a.breaks, b.breaks)

    def value(self, x):
        return self.a.value(x) + self.b.value(x)

    def jacobian(self, x):
        return self.a.jacobian(x) + self.b.jacobian(x)


class ScaledField(Field):
    def __init__(self, c: float, f: Field):
        self.c, self.f = c, f
        self.breaks = f.breaks

    def value(self, x):
        return self.c * self.f.value(x)

    def jacobian(self, x):
        return self.c * self.f.jacobian(x)


class FunctionField(Field):
    """Field given by plain callables for value and Jacobian."""

    def __init__(self, value_fn, jacobian_fn, breaks=None):
        self._v, self._j = value_fn, jacobian_fn
        self.breaks = breaks if breaks is not None else _empty_breaks()

    def value(self, x):
        return self._v(np.asarray(x, dtype=float))

    def jacobian(self, x):
        return self._j(np.asarray(x, dtype=float))


class ZeroField(Field):
    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (3, 3))


@dataclass(frozen=True)
class VectorField(Field):
    """Three parsed components with symbolic derivatives.

    Parameters
    ----------
    components : tuple of Expr
        ``(u1, u2, u3)``.
    box : tuple of (lo, hi)
        Closed box on which the field was validated.
    """

    components: tuple
    box: tuple = DEFAULT_BOX

    @functools.cached_property
    def derivatives(self) -> tuple:
        return tuple(tuple(c.diff(j) for j in range(3)) for c in self.components)

    def _check(self, x: np.ndarray):
        for k, (lo, hi) in enumerate(self.box):
            tol = 1e-12 * max(1.0, abs(lo), abs(hi))
            if np.any(x[..., k] < lo - tol) or np.any(x[..., k] > hi + tol):
                raise DomainError("evaluation outside validated box")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        return np.stack([c.evaluate(x) for c in self.components], axis=-1)

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        self._check(x)
        rows = [np.stack([d.evaluate(x) for d in row], axis=-1) for row in self.derivatives]
        return np.stack(rows, axis=-2)

    def to_text(self) -> tuple[str, str, str]:
        return tuple(c.to_text() for c in self.components)

    def validate(self, lattice: int = 5) -> "VectorField":
        pts = _lattice(self.box, lattice)
        with np.errstate(all="ignore"):
            vals = [c.evaluate(pts) for c in self.components]
            vals += [d.evaluate(pts) for row in self.derivatives for d in row]
        for v in vals:
            if not np.all(np.isfinite(v)):
                raise DomainError("expression is not finite on the validation lattice")
        return self


def parse_field(u1: str, u2: str, u3: str, box=DEFAULT_BOX, lattice: int = 5) -> VectorField:
    """Parse three component strings into a validated ``VectorField``.

    Examples
    --------
    >>> f = parse_field("sin(x1)*x3", "0", "0")
    >>> float(f.strain([[0.0, 0.0, 2.0]])[0, 0, 0])
    2.0
    """
    comps = tuple(as_expr(s) for s in (u1, u2, u3))
    box = tuple((float(a), float(b)) for a, b in box)
    return VectorField(comps, box).validate(lattice)


def field_from_exprs(comps: Sequence, box=DEFAULT_BOX, lattice: int = 5) -> VectorField:
    comps = tuple(as_expr(c) for c in comps)
    box = tuple((float(a), float(b)) for a, b in box)
    return VectorField(comps, box).validate(lattice)


# ---------------------------------------------------------------------------
# regions


class Region:
    breaks: tuple = _empty_breaks()

    def contains(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True)
class Box(Region):
    lo: tuple
    hi: tuple

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        tol = 1e-12
        return np.all((x >= lo - tol) & (x <= hi + tol), axis=-1)

    @property
    def breaks(self):
        return tuple((self.lo[k], self.hi[k]) for k in range(3))


@dataclass(frozen=True)
class HalfSpace(Region):
    """Points with ``a . x <= b``."""

    a: tuple
    b: float

    def contains(self, x):
        return np.asarray(x, dtype=float) @ np.asarray(self.a, dtype=float) <= self.b + 1e-12

    @property
    def breaks(self):
        a = np.asarray(self.a, dtype=float)
        nz = np.flatnonzero(a)
        if len(nz) != 1:
            return None
        k = int(nz[0])
        out = [(), (), ()]
        out[k] = (self.b / a[k],)
        return tuple(out)


@dataclass(frozen=True)
class PixelPrism(Region):
    """Pixel subset of the planar grid times a vertical interval."""

    Lx: float
    Ly: float
    mask: np.ndarray = field(compare=False)
    z0: float = 0.0
    z1: float = 1.0

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        nx, ny = self.mask.shape
        i = np.clip(np.floor(x[..., 0] / self.Lx * nx).astype(int), 0, nx - 1)
        j = np.clip(np.floor(x[..., 1] / self.Ly * ny).astype(int), 0, ny - 1)
        inside = (x[..., 2] >= self.z0 - 1e-12) & (x[..., 2] <= self.z1 + 1e-12)
        inside &= (x[..., 0] >= -1e-12) & (x[..., 0] <= self.Lx + 1e-12)
        inside &= (x[..., 1] >= -1e-12) & (x[..., 1] <= self.Ly + 1e-12)
        return inside & self.mask[i, j]

    @property
    def breaks(self):
        nx, ny = self.mask.shape
        return (
            tuple(np.linspace(0, self.Lx, nx + 1)),
            tuple(np.linspace(0, self.Ly, ny + 1)),
            (self.z0, self.z1),
        )


class PiecewiseField(Field):
    """Ordered pieces ``(Region, Field)`` plus declared jump facets.

    A point belongs to the first piece whose region contains it.
    """

    def __init__(self, pieces: Sequence, facets=None, domain: Box | None = None):
        self.pieces = list(pieces)
        self.facets = facets
        self.domain = domain
        bs = []
        for reg, f in self.pieces:
            rb = reg.breaks
            if rb is None:
                self.breaks = None
                break
            bs.extend([rb, f.breaks])
        else:
            self.breaks = _merge_breaks(*bs) if bs else _empty_breaks()

    def locate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        idx = np.full(x.shape[:-1], -1, dtype=int)
        for k, (reg, _) in enumerate(self.pieces):
            free = idx < 0
            if not free.any():
                break
            hit = reg.contains(x) & free
            idx[hit] = k
        return idx

    def _dispatch(self, x, attr, tail):
        x = np.asarray(x, dtype=float)
        idx = self.locate(x)
        if np.any(idx < 0):
            raise DomainError("point outside every piece")
        out = np.zeros(x.shape[:-1] + tail)
        for k, (_, f) in enumerate(self.pieces):
            sel = idx == k
            if sel.any():
                out[sel] = getattr(f, attr)(x[sel])
        return out

    def value(self, x):
        return self._dispatch(x, "value", (3,))

    def jacobian(self, x):
        return self._dispatch(x, "jacobian", (3, 3))

    def piece_value(self, k: int, x) -> np.ndarray:
        return self.pieces[k][1].value(np.asarray(x, dtype=float))

    def check_cover(self, lattice: int = 9) -> None:
        if self.domain is None:
            return
        box = tuple(zip(self.domain.lo, self.domain.hi))
        if np.any(self.locate(_lattice(box, lattice)) < 0):
            raise DomainError("pieces do not cover the declared domain")


# ---------------------------------------------------------------------------
# trace validation


@dataclass
class TraceReport:
    ok: bool
    declared_min_gap: float
    undeclared_max_gap: float
    messages: list


def validate_traces(u: PiecewiseField, interfaces: Sequence, declared: Sequence[bool],
                    n: int = 5, trace_tol: float = TRACE_TOL,
                    jump_floor: float = JUMP_FLOOR) -> TraceReport:
    """Compare one-sided traces across interfaces.

    Parameters
    ----------
    interfaces : sequence of (piece_a, piece_b, point_sampler)
        ``point_sampler(n)`` returns points on the shared boundary.
    declared : sequence of bool
        Whether each interface carries a declared jump facet.
    """
    dmin, umax, msgs = math.inf, 0.0, []
    for (a, b, sampler), dec in zip(interfaces, declared):
        pts = sampler(n)
        gap = float(np.max(np.linalg.norm(u.piece_value(a, pts) - u.piece_value(b, pts), axis=-1)))
        if dec:
            dmin = min(dmin, gap)
            if gap < jump_floor:
                msgs.append(f"declared facet between pieces {a},{b} has no jump ({gap:.3g})")
        else:
            umax = max(umax, gap)
            if gap > trace_tol:
                msgs.append(f"undeclared interface between pieces {a},{b} jumps by {gap:.3g}")
    return TraceReport(not msgs, dmin, umax, msgs)


def horizontal_interface_sampler(z: float, lo=(0.0, 0.0), hi=(1.0, 1.0), mask=None):
    """Sampler of points on the plane ``x3 = z`` (optionally restricted to pixels)."""

    def sample(n: int) -> np.ndarray:
        if mask is None:
            xs = np.linspace(lo[0], hi[0], n + 2)[1:-1]
            ys = np.linspace(lo[1], hi[1], n + 2)[1:-1]
            X, Y = np.meshgrid(xs, ys, indexing="ij")
            return np.stack([X.ravel(), Y.ravel(), np.full(X.size, z)], axis=-1)
        nx, ny = mask.shape
        ii, jj = np.nonzero(mask)
        px = (ii + 0.5) * (hi[0] - lo[0]) / nx + lo[0]
        py = (jj + 0.5) * (hi[1] - lo[1]) / ny + lo[1]
        return np.stack([px, py, np.full(px.size, z)], axis=-1)

    return sample


# ---------------------------------------------------------------------------
# quadrature


@functools.lru_cache(maxsize=64)
def gauss_legendre(p: int) -> tuple[np.ndarray, np.ndarray]:
    """``p`` Gauss-Legendre nodes and weights on ``(0, 1)``."""
    if p < 1:
        raise ValueError("quadrature order must be >= 1")
    t, w = np.polynomial.legendre.leggauss(p)
    return 0.5 * (t + 1.0), 0.5 * w


def _check_alignment(edges: Sequence[np.ndarray], breaks) -> None:
    if breaks is None:
        raise MisalignedCellsError("piece boundary is not axis-aligned; cannot align cells")
    for k, e in enumerate(edges):
        lo, hi = e[0], e[-1]
        scale = max(1.0, abs(lo), abs(hi))
        for b in breaks[k] if k < len(breaks) else ():
            if b <= lo + 1e-12 * scale or b >= hi - 1e-12 * scale:
                continue
            if np.min(np.abs(e - b)) > 1e-10 * scale:
                raise MisalignedCellsError(f"break at {b} on axis {k} is not on a cell line")


def cell_edges(lo: Sequence[float], hi: Sequence[float], cells) -> list[np.ndarray]:
    if np.isscalar(cells):
        cells = [int(cells)] * len(lo)
    return [np.linspace(a, b, int(n) + 1) for a, b, n in zip(lo, hi, cells)]


def _rule_on_edges(edges: Sequence[np.ndarray], p):
    ps = [int(p)] * len(edges) if np.isscalar(p) else [int(v) for v in p]
    pts, wts = [], []
    for e, pk in zip(edges, ps):
        t, w = gauss_legendre(pk)
        h = np.diff(e)
        pts.append((e[:-1, None] + h[:, None] * t[None, :]).ravel())
        wts.append((h[:, None] * w[None, :]).ravel())
    return pts, wts


def quadrature_integral(f: Callable[[np.ndarray], np.ndarray], lo: Sequence[float],
                        hi: Sequence[float], cells=1, p: int = DEFAULT_ORDER,
                        breaks=None, edges=None, chunk: int = 400_000) -> float:
    """Tensor Gauss-Legendre integral of ``f`` over a box.

    Parameters
    ----------
    f : callable
        Maps points of shape ``(N, d)`` to values of shape ``(N,)``.
    lo, hi : sequence of float
        Box corners; ``d = len(lo)``.
    cells : int or sequence of int
        Uniform cells per axis.
    p : int or sequence of int
        Nodes per axis and cell; exact for polynomials of degree ``2p-1``.
    breaks : per-axis coordinates or None
        Non-smooth lines; every one inside the box must be a cell line.
    edges : optional explicit cell edges per axis.

    Returns
    -------
    float, or an array when ``f`` returns several columns per point.
    """
    if np.min(p) < 1:
        raise ValueError("quadrature order must be >= 1")
    if edges is None:
        edges = cell_edges(lo, hi, cells)
    if breaks is not None:
        _check_alignment(edges, breaks)
    pts, wts = _rule_on_edges(edges, p)
    d = len(edges)
    # outer loop over the first axis keeps memory bounded and the order fixed
    inner_n = int(np.prod([len(a) for a in pts[1:]])) if d > 1 else 1
    if d > 1:
        grids = np.meshgrid(*pts[1:], indexing="ij")
        inner = np.stack([g.ravel() for g in grids], axis=-1)
        winner = np.ones(1)
        for w in wts[1:]:
            winner = np.multiply.outer(winner, w).ravel()
    step = max(1, chunk // max(inner_n, 1))
    total = None
    for s in range(0, len(pts[0]), step):
        xs = pts[0][s:s + step]
        ws = wts[0][s:s + step]
        if d == 1:
            P = xs[:, None]
            W = ws
        else:
            P = np.concatenate([np.repeat(xs, inner_n)[:, None], np.tile(inner, (len(xs), 1))], axis=1)
            W = np.repeat(ws, inner_n) * np.tile(winner, len(xs))
        part = W @ np.asarray(f(P), dtype=float)
        total = part if total is None else total + part
    if np.ndim(total) == 0:
        return float(total)
    return np.asarray(total)


def integrate_field_density(density: Callable, u: Field, lo, hi, cells, p=DEFAULT_ORDER,
                            chunk: int = 400_000) -> float:
    """Integrate ``density(points, strain)`` with alignment checked against ``u``."""
    edges = cell_edges(lo, hi, cells)
    _check_alignment(edges, u.breaks)

    def integrand(P):
        return density(P, strain(u, P))

    return quadrature_integral(integrand, lo, hi, edges=edges, p=p, chunk=chunk)


def pixel_union_integral(f: Callable, Lx: float, Ly: float, mask: np.ndarray,
                         p: int = DEFAULT_ORDER, sub: int = 1) -> np.ndarray:
    """Per-pixel integrals of a planar integrand; returns an array shaped like ``mask``.

    Unselected pixels get 0.  Summing the result gives the union integral.
    """
    nx, ny = mask.shape
    t, w = gauss_legendre(p)
    hx, hy = Lx / nx, Ly / ny
    ts = ((np.arange(sub)[:, None] + t[None, :]) / sub).ravel()
    ws = np.tile(w / sub, sub)
    ii, jj = np.nonzero(mask)
    out = np.zeros(mask.shape)
    if len(ii) == 0:
        return out
    X = (ii[:, None, None] + ts[None, :, None]) * hx
    Y = (jj[:, None, None] + ts[None, None, :]) * hy
    X, Y = np.broadcast_arrays(X, Y)
    P = np.stack([X.reshape(-1), Y.reshape(-1)], axis=-1)
    vals = np.asarray(f(P), dtype=float).reshape(len(ii), len(ts), len(ts))
    out[ii, jj] = np.einsum("kab,a,b->k", vals, ws, ws) * hx * hy
    return out
