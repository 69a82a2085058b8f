"""
Worklist fixpoint over one function's CFG.

::

    OUT[B] = bottom for every block
    W = all blocks
    while W:
        B = pop(W)
        IN[B]  = join of OUT[P] over predecessors P   (plus the entry state at the entry block)
        OUT[B] = widen(IN[B], transfer(IN[B]), k)
        if OUT[B] changed: push successors of B

Widening is applied at every block on every visit.  With depth bound k
all values live in a finite sublattice, so the loop terminates.
"""

from __future__ import annotations

import random
from collections import Counter, deque
from dataclasses import dataclass, field

from . import ir
from . import lattice as L
from .domains import AbstractState, Scope, bottom_state, initial_state, join_state, widen_state
from .transfer import FLOW_SENSITIVE, PRE, TransferContext, block_trace, transfer_block

__all__ = [
    "IterationBudgetExceeded", "FunctionResult", "solve_function",
    "widen_state", "default_budget", "point_states",
]


class IterationBudgetExceeded(RuntimeError):
    pass


@dataclass
class FunctionResult:
    name: str
    in_states: dict
    out_states: dict
    return_value: L.Elem = L.BOT
    return_pts: frozenset = frozenset()
    returned: bool = False
    exit_state: AbstractState = field(default_factory=bottom_state)
    diagnostics: list = field(default_factory=list)
    iterations: int = 0
    visits: dict = field(default_factory=dict)


UNBOUNDED_DEPTH = 8


def default_budget(n_blocks: int, k: int | None) -> int:
    """Block visits allowed before giving up.  Without a depth bound the
    chains are infinite, so a fixed stand-in depth keeps terms small."""
    if k is None:
        k = UNBOUNDED_DEPTH
    return 10 * n_blocks * (k + 2)


def solve_function(
    f: ir.Function,
    p: ir.Program,
    cfg: ir.Cfg | None = None,
    k: int | None = 2,
    *,
    pointer_mode: str = FLOW_SENSITIVE,
    frozen_pts: dict | None = None,
    initial: AbstractState | None = None,
    call_handler=None,
    max_iterations: int | None = None,
    rng: random.Random | None = None,
) -> FunctionResult:
    """Run the worklist algorithm on ``f``.

    ``initial`` overrides the entry state (used for callee contexts).
    ``frozen_pts`` is the pre-computed points-to map for ``pointer_mode="pre"``.
    ``rng`` randomises which block is taken off the worklist.
    """
    cfg = cfg or ir.build_cfg(f)
    blocks = {b.label: b for b in f.blocks}
    preds = {l: cfg.predecessors(l) for l in cfg.nodes}
    succs = {l: cfg.successors(l) for l in cfg.nodes}
    scope = Scope(f.name, frozenset(p.globals))

    entry_state = initial if initial is not None else initial_state(f, p)
    if pointer_mode == PRE:
        if frozen_pts is None:
            raise ValueError("pre pointer mode needs frozen_pts")
        entry_state = AbstractState(entry_state.sigma, entry_state.mem, {}).with_pts(frozen_pts)

    def make_ctx(**kw):
        return TransferContext(scope=scope, pointer_mode=pointer_mode, call_handler=call_handler, **kw)

    budget = max_iterations if max_iterations is not None else default_budget(len(blocks), k)
    out_states = {l: bottom_state() for l in cfg.nodes}
    in_states = {l: bottom_state() for l in cfg.nodes}
    work = deque(cfg.nodes)
    queued = set(cfg.nodes)
    visits = Counter()
    iterations = 0

    while work:
        if rng is None:
            label = work.popleft()
        else:
            idx = rng.randrange(len(work))
            label = work[idx]
            del work[idx]
        queued.discard(label)
        iterations += 1
        if iterations > budget:
            raise IterationBudgetExceeded(
                f"{f.name}: no fixpoint after {budget} block visits (k={k})"
            )
        visits[label] += 1

        old = out_states[label]
        st = entry_state if label == cfg.entry else bottom_state()
        for pr in preds[label]:
            st = join_state(st, out_states[pr])
        new = widen_state(st, transfer_block(st, blocks[label], make_ctx()), k)
        in_states[label] = st
        out_states[label] = new
        if new != old:
            for s in succs[label]:
                if s not in queued:
                    queued.add(s)
                    work.append(s)

    diagnostics: list = []
    returns: list = []
    ctx = make_ctx(diagnostics=diagnostics, returns=returns)
    for b in f.blocks:
        transfer_block(in_states[b.label], b, ctx)

    ret = L.BOT
    ret_pts: frozenset = frozenset()
    exit_state = bottom_state()
    for elem, pts, st in returns:
        ret = L.join(ret, elem)
        ret_pts = ret_pts | pts
        exit_state = join_state(exit_state, st)

    return FunctionResult(
        name=f.name,
        in_states=in_states,
        out_states=out_states,
        return_value=ret,
        return_pts=ret_pts,
        returned=bool(returns),
        exit_state=exit_state,
        diagnostics=diagnostics,
        iterations=iterations,
        visits=dict(visits),
    )


def point_states(f: ir.Function, p: ir.Program, result: FunctionResult, *,
                 pointer_mode: str = FLOW_SENSITIVE, call_handler=None) -> dict:
    """State after every statement: ``{(label, index): state}``."""
    scope = Scope(f.name, frozenset(p.globals))
    out = {}
    for b in f.blocks:
        ctx = TransferContext(scope=scope, pointer_mode=pointer_mode, call_handler=call_handler)
        for i, st in enumerate(block_trace(result.in_states[b.label], b, ctx)):
            out[(b.label, i)] = st
    return out
