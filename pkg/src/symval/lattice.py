"""
The recursive symbolic lattice.

A lattice element is ``TOP``, ``BOT`` or a symbolic expression whose
children are themselves lattice elements::

    l ::= T | B | e
    e ::= const(i) | arg(i) | mem(o) | global(o)
        | f(l, ..., l) | (op l l) | (op l) | phi(l, ..., l)

Expressions with the same constructor (and the same operator, function
name and arity) are compared and joined field by field.  Anything else
is incomparable and joins to ``TOP``.  No algebraic simplification is
ever performed, so ``(+ const(1) const(2))`` stays as written.

The lattice has infinite height; :func:`truncate` and :func:`widen`
project it onto the finite sublattice of elements with depth <= k.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterator, Union

__all__ = [
    "MemObject", "Top", "Bot", "TOP", "BOT",
    "Primitive", "Const", "Arg", "Mem", "Global",
    "FnCall", "BinOp", "UnOp", "Phi", "Elem",
    "BINOPS", "UNOPS",
    "leq", "join", "meet", "depth", "truncate", "widen",
    "render", "parse_elem", "subterms",
]

BINOPS = ("+", "-", "*", "/", "==", "!=", "<", "<=")
UNOPS = ("-", "!")

# unary operators need their own spelling so (- x y) and (neg x) never clash
_UNOP_NAMES = {"-": "neg", "!": "not"}
_UNOP_BY_NAME = {v: k for k, v in _UNOP_NAMES.items()}


@dataclass(frozen=True, order=True)
class MemObject:
    """An abstract memory cell: a global or an address-taken local."""

    base: str
    offset: int = 0

    def __str__(self) -> str:
        return f"{self.base}+{self.offset}"


class Top:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "TOP"

    def __reduce__(self):
        return (Top, ())


class Bot:
    __slots__ = ()
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "BOT"

    def __reduce__(self):
        return (Bot, ())


TOP = Top()
BOT = Bot()


class Primitive:
    """Base class of the depth-0 symbols: constants and entry-time unknowns."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Primitive):
    value: int


@dataclass(frozen=True)
class Arg(Primitive):
    index: int


@dataclass(frozen=True)
class Mem(Primitive):
    """Initial content of a memory cell that is not a global."""

    obj: MemObject


@dataclass(frozen=True)
class Global(Primitive):
    """Initial content of a global's cell."""

    obj: MemObject


@dataclass(frozen=True)
class FnCall:
    """Uninterpreted call result.  A zero-argument call is a depth-0 leaf."""

    name: str
    args: tuple


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: "Elem"
    rhs: "Elem"


@dataclass(frozen=True)
class UnOp:
    op: str
    operand: "Elem"


@dataclass(frozen=True)
class Phi:
    args: tuple

    def __post_init__(self):
        if not self.args:
            raise ValueError("Phi needs at least one argument")


Elem = Union[Top, Bot, Const, Arg, Mem, Global, FnCall, BinOp, UnOp, Phi]


def _children(l):
    if isinstance(l, BinOp):
        return (l.lhs, l.rhs)
    if isinstance(l, UnOp):
        return (l.operand,)
    if isinstance(l, (FnCall, Phi)):
        return l.args
    return ()


def _same_shape(a, b) -> bool:
    """True when a and b are composites that the order compares field-wise."""
    ta = type(a)
    if ta is not type(b):
        return False
    if ta is BinOp or ta is UnOp:
        return a.op == b.op
    if ta is FnCall:
        return a.name == b.name and len(a.args) == len(b.args)
    if ta is Phi:
        return len(a.args) == len(b.args)
    return False


def _rebuild(template, children):
    if isinstance(template, BinOp):
        return BinOp(template.op, children[0], children[1])
    if isinstance(template, UnOp):
        return UnOp(template.op, children[0])
    if isinstance(template, FnCall):
        return FnCall(template.name, tuple(children))
    return Phi(tuple(children))


def leq(a: Elem, b: Elem) -> bool:
    """Partial order: a is at most as general as b."""
    if a is BOT or b is TOP:
        return True
    if a is TOP or b is BOT:
        return False
    if isinstance(a, Primitive):
        return a == b
    if not _same_shape(a, b):
        return False
    return all(leq(x, y) for x, y in zip(_children(a), _children(b)))


def join(a: Elem, b: Elem) -> Elem:
    """Least upper bound."""
    if a is BOT:
        return b
    if b is BOT:
        return a
    if a is TOP or b is TOP:
        return TOP
    if isinstance(a, Primitive):
        return a if a == b else TOP
    if not _same_shape(a, b):
        return TOP
    return _rebuild(a, [join(x, y) for x, y in zip(_children(a), _children(b))])


def meet(a: Elem, b: Elem) -> Elem:
    """Greatest lower bound; the mirror image of :func:`join`."""
    if a is TOP:
        return b
    if b is TOP:
        return a
    if a is BOT or b is BOT:
        return BOT
    if isinstance(a, Primitive):
        return a if a == b else BOT
    if not _same_shape(a, b):
        return BOT
    return _rebuild(a, [meet(x, y) for x, y in zip(_children(a), _children(b))])


def depth(l: Elem) -> int:
    kids = _children(l)
    if not kids:
        return 0
    return 1 + max(depth(c) for c in kids)


def truncate(l: Elem, k: int) -> Elem:
    """Cut ``l`` down to depth ``k`` by replacing over-deep subterms with TOP.

    The result is always an upper bound of ``l``.
    """
    if k < 0:
        raise ValueError("depth budget must be non-negative")
    kids = _children(l)
    if not kids:
        return l
    if k == 0:
        return TOP
    if depth(l) <= k:
        return l
    return _rebuild(l, [truncate(c, k - 1) for c in kids])


def widen(a: Elem, b: Elem, k: int | None) -> Elem:
    """Depth-bounded widening: the join of a and b, cut to depth k.

    ``k=None`` disables the cut and degenerates to a plain join.
    """
    j = join(a, b)
    return j if k is None else truncate(j, k)


def subterms(l: Elem) -> Iterator[Elem]:
    """Pre-order walk over l and all of its sub-elements."""
    yield l
    for c in _children(l):
        yield from subterms(c)


# ---------------------------------------------------------------------------
# canonical text form
# ---------------------------------------------------------------------------

def render(l: Elem) -> str:
    if l is TOP:
        return "T"
    if l is BOT:
        return "B"
    if isinstance(l, Const):
        return f"const({l.value})"
    if isinstance(l, Arg):
        return f"arg({l.index})"
    if isinstance(l, Mem):
        return f"mem({l.obj})"
    if isinstance(l, Global):
        return f"global({l.obj})"
    if isinstance(l, BinOp):
        return f"({l.op} {render(l.lhs)} {render(l.rhs)})"
    if isinstance(l, UnOp):
        return f"({_UNOP_NAMES[l.op]} {render(l.operand)})"
    if isinstance(l, Phi):
        return "phi(" + ",".join(render(c) for c in l.args) + ")"
    if isinstance(l, FnCall):
        return l.name + "(" + ",".join(render(c) for c in l.args) + ")"
    raise TypeError(f"not a lattice element: {l!r}")


_TOKEN = re.compile(
    r"\s*(?:(?P<int>-?\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>==|!=|<=|[-+*/<!])|(?P<punct>[(),]))"
)


class _ElemParser:
    def __init__(self, text: str):
        self.toks = []
        pos = 0
        text = text.strip()
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m or m.end() == pos:
                raise ValueError(f"bad element text at {pos}: {text!r}")
            kind = m.lastgroup
            self.toks.append((kind, m.group(kind)))
            pos = m.end()
            # a name glued to "(" is a constructor or call head
            if kind == "name" and text.startswith("(", pos):
                self.toks[-1] = ("head", self.toks[-1][1])
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise ValueError(f"expected {value!r}, got {tok[1]!r}")
        self.i += 1
        return tok

    def obj(self) -> MemObject:
        _, base = self.take()
        self.take("+")
        _, off = self.take()
        return MemObject(base, int(off))

    def elem(self) -> Elem:
        kind, val = self.take()
        if kind == "punct" and val == "(":
            kind2, head = self.take()
            if head in _UNOP_BY_NAME:
                inner = self.elem()
                self.take(")")
                return UnOp(_UNOP_BY_NAME[head], inner)
            if head not in BINOPS:
                raise ValueError(f"unknown operator {head!r}")
            lhs = self.elem()
            rhs = self.elem()
            self.take(")")
            return BinOp(head, lhs, rhs)
        if kind == "name" and val in ("T", "B"):
            return TOP if val == "T" else BOT
        if kind != "head":
            raise ValueError(f"unexpected token {val!r}")
        self.take("(")
        if val in ("const", "arg"):
            _, num = self.take()
            self.take(")")
            return Const(int(num)) if val == "const" else Arg(int(num))
        if val in ("mem", "global"):
            o = self.obj()
            self.take(")")
            return Mem(o) if val == "mem" else Global(o)
        args = []
        if self.peek()[1] != ")":
            args.append(self.elem())
            while self.peek()[1] == ",":
                self.take(",")
                args.append(self.elem())
        self.take(")")
        return Phi(tuple(args)) if val == "phi" else FnCall(val, tuple(args))


def parse_elem(text: str) -> Elem:
    """Inverse of :func:`render`."""
    p = _ElemParser(text)
    e = p.elem()
    if p.i != len(p.toks):
        raise ValueError(f"trailing input in {text!r}")
    return e
