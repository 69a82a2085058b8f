"""
Andersen-style points-to analysis.

Flow-sensitive transfer (one statement at a time)::

    a = &b   OUT(a) = {o_b}
    a = b    OUT(a) = IN(b)
    a = *b   OUT(a) = U { IN(o) | o in IN(b) }
    *a = b   |IN(a)| == 1:  OUT(o) = IN(b)           (strong update)
             |IN(a)| >  1:  OUT(o) = IN(o) U IN(b)   (weak update)

plus ``v = phi(...)`` as the union of its incoming sets.  The
flow-insensitive pre-analysis solves the same constraints for the whole
program at once, with every store treated as a weak update.
"""

from __future__ import annotations

from typing import Mapping

from . import ir
from .domains import Scope, pts_of
from .lattice import MemObject

__all__ = ["pa_transfer", "pa_preanalyze", "PreAnalysis"]


def pa_transfer(pts: Mapping, stmt, scope: Scope | None = None) -> dict:
    """Points-to relation after ``stmt``; ``pts`` is left untouched."""
    scope = scope or Scope()
    out = dict(pts)

    def put(key, value):
        if value:
            out[key] = frozenset(value)
        else:
            out.pop(key, None)

    if isinstance(stmt, ir.AddrOf):
        put(stmt.dst, {scope.obj(stmt.target)})
    elif isinstance(stmt, ir.Assign):
        put(stmt.dst, pts_of(pts, stmt.src))
    elif isinstance(stmt, ir.Load):
        acc = set()
        for o in pts_of(pts, stmt.ptr):
            acc |= pts.get(o, frozenset())
        put(stmt.dst, acc)
    elif isinstance(stmt, ir.Store):
        targets = pts_of(pts, stmt.ptr)
        src = pts_of(pts, stmt.src)
        if len(targets) == 1:
            (o,) = targets
            put(o, src)
        else:
            for o in targets:
                put(o, pts.get(o, frozenset()) | src)
    elif isinstance(stmt, ir.PhiNode):
        acc = set()
        for v, _ in stmt.incoming:
            acc |= pts_of(pts, v)
        put(stmt.dst, acc)
    return out


class PreAnalysis(dict):
    """Whole-program points-to map.

    Variable keys are ``(function, name)`` pairs; object keys are
    :class:`MemObject`.
    """

    def for_function(self, fname: str, globals_=()) -> dict:
        """Project onto one function's namespace (plain variable names)."""
        out = {}
        for k, v in self.items():
            if isinstance(k, tuple):
                if k[0] == fname:
                    out[k[1]] = v
            else:
                out[k] = v
        for g in globals_:
            out[g] = frozenset({MemObject(g)})
        return {k: v for k, v in out.items() if v}


def pa_preanalyze(p: ir.Program) -> PreAnalysis:
    """Flow-insensitive, context-insensitive inclusion-based points-to."""
    globals_ = frozenset(p.globals)
    funcs = {f.name: f for f in p.functions}
    sol: dict = {}

    def key(fname, operand):
        if isinstance(operand, int):
            return None
        if operand in globals_:
            return ("", operand)
        return (fname, operand)

    def get(k) -> frozenset:
        if k is None:
            return frozenset()
        if isinstance(k, tuple) and k[0] == "":
            return frozenset({MemObject(k[1])})
        return sol.get(k, frozenset())

    def add(k, objs) -> bool:
        if k is None or not objs:
            return False
        cur = sol.get(k, frozenset())
        new = cur | objs
        if new != cur:
            sol[k] = new
            return True
        return False

    changed = True
    while changed:
        changed = False
        for f in p.functions:
            scope = Scope(f.name, globals_)
            for b in f.blocks:
                for s in b.statements:
                    if isinstance(s, ir.AddrOf):
                        changed |= add(key(f.name, s.dst), frozenset({scope.obj(s.target)}))
                    elif isinstance(s, ir.Assign):
                        changed |= add(key(f.name, s.dst), get(key(f.name, s.src)))
                    elif isinstance(s, ir.Load):
                        for o in get(key(f.name, s.ptr)):
                            changed |= add(key(f.name, s.dst), get(o))
                    elif isinstance(s, ir.Store):
                        src = get(key(f.name, s.src))
                        for o in get(key(f.name, s.ptr)):
                            changed |= add(o, src)
                    elif isinstance(s, ir.PhiNode):
                        for v, _ in s.incoming:
                            changed |= add(key(f.name, s.dst), get(key(f.name, v)))
                    elif isinstance(s, ir.Call) and s.func in funcs:
                        callee = funcs[s.func]
                        for param, arg in zip(callee.params, s.args):
                            changed |= add((callee.name, param), get(key(f.name, arg)))
                        for cb in callee.blocks:
                            if isinstance(cb.terminator, ir.Return):
                                changed |= add(
                                    key(f.name, s.dst), get(key(callee.name, cb.terminator.value))
                                )
    return PreAnalysis(sol)
