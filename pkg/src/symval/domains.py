"""
Abstract program state: local context, memory and points-to relation.

States are treated as immutable values.  Every update returns a fresh
state, and the maps are kept normalised (no BOT values, no empty
points-to sets), so plain ``==`` is the structural state equality used
by the fixpoint engine.

Points-to keys are either variable names (``str``) or memory objects
(:class:`~symval.lattice.MemObject`).  A global's name is a key too:
used as an operand it denotes the address of its own cell.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Union

from . import lattice as L
from .lattice import BOT, MemObject

PtsKey = Union[str, MemObject]

__all__ = [
    "MemObject", "AbstractState", "Scope", "bottom_state", "initial_state",
    "eval_var", "pts_of", "join_state", "leq_state", "widen_state",
    "join_pts", "render_key", "state_to_json",
]


@dataclass(frozen=True)
class Scope:
    """Resolves names inside one function to memory objects."""

    fname: str = ""
    globals: frozenset = frozenset()

    def obj(self, name: str) -> MemObject:
        if name in self.globals or not self.fname:
            return MemObject(name)
        return MemObject(f"{self.fname}.{name}")


@dataclass(frozen=True, eq=True)
class AbstractState:
    sigma: Mapping = field(default_factory=dict)
    mem: Mapping = field(default_factory=dict)
    pts: Mapping = field(default_factory=dict)

    def var(self, name: str) -> L.Elem:
        return self.sigma.get(name, BOT)

    def cell(self, obj: MemObject) -> L.Elem:
        return self.mem.get(obj, BOT)

    def points_to(self, key: PtsKey) -> frozenset:
        return self.pts.get(key, frozenset())

    def set_var(self, name: str, value: L.Elem) -> "AbstractState":
        sigma = dict(self.sigma)
        if value is BOT:
            sigma.pop(name, None)
        else:
            sigma[name] = value
        return AbstractState(sigma, self.mem, self.pts)

    def set_cell(self, obj: MemObject, value: L.Elem) -> "AbstractState":
        mem = dict(self.mem)
        if value is BOT:
            mem.pop(obj, None)
        else:
            mem[obj] = value
        return AbstractState(self.sigma, mem, self.pts)

    def with_pts(self, pts: Mapping) -> "AbstractState":
        return AbstractState(self.sigma, self.mem, {k: v for k, v in pts.items() if v})


def bottom_state() -> AbstractState:
    return AbstractState()


def initial_state(f, p) -> AbstractState:
    """Entry state: parameters are argument symbols, globals hold their initial symbol."""
    sigma = {v: L.Arg(i) for i, v in enumerate(f.params)}
    mem = {}
    pts = {}
    for g in p.globals:
        o = MemObject(g)
        mem[o] = L.Global(o)
        pts[g] = frozenset({o})
    return AbstractState(sigma, mem, pts)


def eval_var(s: AbstractState, operand) -> L.Elem:
    """Abstract value of an operand.  Never modifies ``s``."""
    if isinstance(operand, int):
        return L.Const(operand)
    return s.var(operand)


def pts_of(pts: Mapping, operand) -> frozenset:
    if isinstance(operand, int):
        return frozenset()
    return pts.get(operand, frozenset())


def _join_maps(a: Mapping, b: Mapping, op) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = op(a[k], v) if k in a else v
    return out


def join_pts(a: Mapping, b: Mapping) -> dict:
    return _join_maps(a, b, frozenset.union)


def join_state(a: AbstractState, b: AbstractState) -> AbstractState:
    return AbstractState(
        _join_maps(a.sigma, b.sigma, L.join),
        _join_maps(a.mem, b.mem, L.join),
        join_pts(a.pts, b.pts),
    )


def widen_state(a: AbstractState, b: AbstractState, k: int | None) -> AbstractState:
    """Σ and memory widened pointwise at depth k; points-to sets unioned."""

    def w(x, y):
        return L.widen(x, y, k)

    sigma = {v: w(a.var(v), b.var(v)) for v in set(a.sigma) | set(b.sigma)}
    mem = {o: w(a.cell(o), b.cell(o)) for o in set(a.mem) | set(b.mem)}
    return AbstractState(sigma, mem, join_pts(a.pts, b.pts))


def leq_state(a: AbstractState, b: AbstractState) -> bool:
    return (
        all(L.leq(v, b.var(k)) for k, v in a.sigma.items())
        and all(L.leq(v, b.cell(k)) for k, v in a.mem.items())
        and all(v <= b.points_to(k) for k, v in a.pts.items())
    )


def render_key(k: PtsKey) -> str:
    return str(k)


def state_to_json(s: AbstractState) -> dict:
    return {
        "sigma": {k: L.render(s.sigma[k]) for k in sorted(s.sigma)},
        "mem": {str(o): L.render(s.mem[o]) for o in sorted(s.mem)},
        "pts": {
            render_key(k): sorted(str(o) for o in s.pts[k])
            for k in sorted(s.pts, key=render_key)
        },
    }
