"""
Statement and block transfer functions.

Each rule maps an :class:`AbstractState` to a new one.  Arithmetic only
builds symbols; calls become uninterpreted ``f(e1, ..., en)`` symbols
unless a call handler (the interprocedural engine) takes over.  Loads
and stores consult the points-to relation instead of evaluating the
address operand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from . import ir
from . import lattice as L
from .domains import AbstractState, Scope, eval_var, pts_of
from .pointer import pa_transfer

__all__ = ["TransferContext", "Diagnostic", "transfer_stmt", "transfer_block", "block_trace"]

FLOW_SENSITIVE = "flow-sensitive"
PRE = "pre"


@dataclass(frozen=True)
class Diagnostic:
    function: str
    label: str
    index: int
    code: str

    def __str__(self) -> str:
        return f"{self.function}/{self.label}#{self.index}: {self.code}"


@dataclass
class TransferContext:
    """Everything a transfer rule needs beyond the state itself.

    ``call_handler(state, call, ctx)`` returns the post-call state, or
    None to fall back to the uninterpreted-symbol rule.
    ``diagnostics`` and ``returns`` are sinks; None disables recording.
    """

    scope: Scope = field(default_factory=Scope)
    pointer_mode: str = FLOW_SENSITIVE
    call_handler: Optional[Callable] = None
    diagnostics: Optional[list] = None
    returns: Optional[list] = None
    label: str = ""
    index: int = 0

    def note(self, code: str) -> None:
        if self.diagnostics is not None:
            self.diagnostics.append(Diagnostic(self.scope.fname, self.label, self.index, code))


def _update_pts(s: AbstractState, stmt, ctx: TransferContext) -> AbstractState:
    if ctx.pointer_mode == PRE:
        return s
    return s.with_pts(pa_transfer(s.pts, stmt, ctx.scope))


def transfer_stmt(s: AbstractState, stmt, ctx: TransferContext | None = None) -> AbstractState:
    ctx = ctx or TransferContext()

    if isinstance(stmt, ir.Binary):
        e = L.BinOp(stmt.op, eval_var(s, stmt.lhs), eval_var(s, stmt.rhs))
        return s.set_var(stmt.dst, e)

    if isinstance(stmt, ir.Unary):
        return s.set_var(stmt.dst, L.UnOp(stmt.op, eval_var(s, stmt.operand)))

    if isinstance(stmt, ir.Call):
        if ctx.call_handler is not None:
            out = ctx.call_handler(s, stmt, ctx)
            if out is not None:
                return out
        args = tuple(eval_var(s, a) for a in stmt.args)
        return s.set_var(stmt.dst, L.FnCall(stmt.func, args))

    if isinstance(stmt, ir.Return):
        if ctx.returns is not None:
            ctx.returns.append((eval_var(s, stmt.value), pts_of(s.pts, stmt.value), s))
        return s

    if isinstance(stmt, ir.PhiNode):
        e = L.Phi(tuple(eval_var(s, v) for v, _ in stmt.incoming))
        return _update_pts(s.set_var(stmt.dst, e), stmt, ctx)

    if isinstance(stmt, ir.Assign):
        return _update_pts(s.set_var(stmt.dst, eval_var(s, stmt.src)), stmt, ctx)

    if isinstance(stmt, ir.AddrOf):
        return _update_pts(s, stmt, ctx)

    if isinstance(stmt, ir.Load):
        targets = pts_of(s.pts, stmt.ptr)
        if not targets:
            ctx.note("load-through-empty-points-to")
        e = L.BOT
        for o in sorted(targets):
            e = L.join(e, s.cell(o))
        return _update_pts(s.set_var(stmt.dst, e), stmt, ctx)

    if isinstance(stmt, ir.Store):
        targets = pts_of(s.pts, stmt.ptr)
        e = eval_var(s, stmt.src)
        if not targets:
            ctx.note("store-through-empty-points-to")
        elif len(targets) == 1:
            (o,) = targets
            s = s.set_cell(o, e)
        else:
            for o in sorted(targets):
                s = s.set_cell(o, L.join(s.cell(o), e))
        return _update_pts(s, stmt, ctx)

    if isinstance(stmt, (ir.Branch, ir.Goto)):
        return s

    raise TypeError(f"unknown statement {stmt!r}")


def block_trace(s: AbstractState, block: ir.Block, ctx: TransferContext | None = None) -> list:
    """States after each statement of ``block`` (phis evaluated in parallel).

    Entry ``i`` is the state right after ``block.statements[i]``; every
    phi index maps to the state after the whole phi group.
    """
    ctx = ctx or TransferContext()
    ctx.label = block.label
    phis = block.phis
    states = []
    if phis:
        before = s
        for i, phi in enumerate(phis):
            ctx.index = i
            e = L.Phi(tuple(eval_var(before, v) for v, _ in phi.incoming))
            s = s.set_var(phi.dst, e)
            if ctx.pointer_mode != PRE:
                merged = frozenset().union(*(pts_of(before.pts, v) for v, _ in phi.incoming))
                pts = dict(s.pts)
                pts[phi.dst] = merged
                s = s.with_pts(pts)
        states.extend([s] * len(phis))
    for i, stmt in enumerate(block.statements[len(phis):], start=len(phis)):
        ctx.index = i
        s = transfer_stmt(s, stmt, ctx)
        states.append(s)
    return states


def transfer_block(s: AbstractState, block: ir.Block, ctx: TransferContext | None = None) -> AbstractState:
    trace = block_trace(s, block, ctx)
    return trace[-1] if trace else s
