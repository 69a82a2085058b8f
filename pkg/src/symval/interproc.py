"""
Whole-program analysis.

In ``intra`` mode every function is solved on its own and calls are
uninterpreted symbols.  In ``inter`` mode the analysis starts at an
entry function and evaluates each call to a defined function by running
the callee in the caller's memory context:

* the callee's entry context maps its parameters to the evaluated
  arguments and inherits the caller's memory and points-to facts;
* contexts from different call sites are merged (one summary per
  function), and passes are repeated until no summary changes;
* a call that closes a cycle in the current call chain, and any call to
  an undefined (library) function, falls back to the uninterpreted
  ``f(e1, ..., en)`` symbol.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import ir
from . import lattice as L
from .domains import AbstractState, eval_var, pts_of, widen_state
from .pointer import PreAnalysis, pa_preanalyze
from .solver import FunctionResult, IterationBudgetExceeded, solve_function
from .transfer import FLOW_SENSITIVE, PRE

__all__ = [
    "CallGraph", "build_call_graph", "AnalysisOptions", "AnalysisResult",
    "EntryNotFound", "analyze_program", "InterEngine",
]

INTRA = "intra"
INTER = "inter"


class EntryNotFound(LookupError):
    pass


@dataclass
class CallGraph:
    nodes: list
    edges: list  # (caller, callee, (label, index))
    external: set

    def callees(self, fname: str) -> list:
        return sorted({c for a, c, _ in self.edges if a == fname})

    def has_cycle(self) -> bool:
        return bool(self.recursive())

    def recursive(self) -> set:
        """Functions that can (transitively) call themselves."""
        succ = {n: set(self.callees(n)) for n in self.nodes}
        out = set()
        for start in self.nodes:
            seen, todo = set(), list(succ.get(start, ()))
            while todo:
                n = todo.pop()
                if n == start:
                    out.add(start)
                    break
                if n in seen or n not in succ:
                    continue
                seen.add(n)
                todo.extend(succ[n])
        return out


def build_call_graph(p: ir.Program) -> CallGraph:
    defined = {f.name for f in p.functions}
    edges = []
    external = set()
    for f in p.functions:
        for b in f.blocks:
            for i, s in enumerate(b.statements):
                if isinstance(s, ir.Call):
                    edges.append((f.name, s.func, (b.label, i)))
                    if s.func not in defined:
                        external.add(s.func)
    return CallGraph(sorted(defined) + sorted(external), edges, external)


@dataclass
class AnalysisOptions:
    widen_depth: int | None = 2
    mode: str = INTRA
    entry: str = "main"
    pointer_mode: str = FLOW_SENSITIVE
    max_iterations: int | None = None
    max_passes: int = 50
    order_seed: int | None = None


@dataclass
class AnalysisResult:
    functions: dict
    options: AnalysisOptions
    call_graph: CallGraph
    points_to_pre: PreAnalysis | None = None
    passes: int = 1
    engine: object = None

    @property
    def diagnostics(self) -> list:
        return [d for r in self.functions.values() for d in r.diagnostics]


@dataclass
class _Summary:
    entry: AbstractState
    result: FunctionResult
    pass_id: int


class InterEngine:
    """Context-insensitive evaluation of calls to defined functions."""

    def __init__(self, p: ir.Program, opts: AnalysisOptions, pre: PreAnalysis | None = None):
        self.p = p
        self.opts = opts
        self.pre = pre
        self.funcs = {f.name: f for f in p.functions}
        self.cfgs = {f.name: ir.build_cfg(f) for f in p.functions}
        self.summaries: dict[str, _Summary] = {}
        self.stack: list[str] = []
        self.pass_id = 0
        self.rng = random.Random(opts.order_seed) if opts.order_seed is not None else None

    def solve(self, fname: str, initial: AbstractState | None = None) -> FunctionResult:
        f = self.funcs[fname]
        frozen = self.pre.for_function(fname, self.p.globals) if self.pre is not None else None
        self.stack.append(fname)
        try:
            return solve_function(
                f, self.p, self.cfgs[fname], self.opts.widen_depth,
                pointer_mode=self.opts.pointer_mode,
                frozen_pts=frozen,
                initial=initial,
                call_handler=self.handle_call,
                max_iterations=self.opts.max_iterations,
                rng=self.rng,
            )
        finally:
            self.stack.pop()

    def callee_context(self, s: AbstractState, call: ir.Call) -> AbstractState:
        callee = self.funcs[call.func]
        sigma = {}
        pts = {k: v for k, v in s.pts.items() if not isinstance(k, str) or k in self.p.globals}
        for param, arg in zip(callee.params, call.args):
            e = eval_var(s, arg)
            if e is not L.BOT:
                sigma[param] = e
            arg_pts = pts_of(s.pts, arg)
            if arg_pts:
                pts[param] = arg_pts
        return AbstractState(sigma, dict(s.mem), pts)

    def handle_call(self, s: AbstractState, call: ir.Call, ctx) -> AbstractState | None:
        if call.func not in self.funcs or call.func in self.stack:
            return None
        entry = self.callee_context(s, call)
        summ = self.summaries.get(call.func)
        if summ is not None:
            merged = widen_state(summ.entry, entry, self.opts.widen_depth)
            if merged == summ.entry and summ.pass_id == self.pass_id:
                return self._apply(s, call, summ.result)
            entry = merged
        result = self.solve(call.func, entry)
        self.summaries[call.func] = _Summary(entry, result, self.pass_id)
        return self._apply(s, call, result)

    def _apply(self, s: AbstractState, call: ir.Call, r: FunctionResult) -> AbstractState:
        if not r.returned:
            # callee never returns: nothing flows back but the symbol-free result
            return s.set_var(call.dst, L.BOT)
        ex = r.exit_state
        if self.opts.pointer_mode == PRE:
            pts = dict(s.pts)
        else:
            # caller keeps its own variables; objects and globals come back from the callee
            pts = {k: v for k, v in s.pts.items() if isinstance(k, str) and k not in self.p.globals}
            pts.update({k: v for k, v in ex.pts.items() if not isinstance(k, str) or k in self.p.globals})
            pts[call.dst] = r.return_pts
        out = AbstractState(s.sigma, dict(ex.mem), {})
        return out.with_pts(pts).set_var(call.dst, r.return_value)

    def _snapshot(self):
        return {
            n: (sm.entry, sm.result.return_value, sm.result.return_pts, sm.result.exit_state)
            for n, sm in self.summaries.items()
        }

    def run(self, entry: str) -> dict:
        results = {}
        for _ in range(self.opts.max_passes):
            self.pass_id += 1
            before = self._snapshot()
            results = {entry: self.solve(entry)}
            if self._snapshot() == before:
                break
        else:
            raise IterationBudgetExceeded(f"interprocedural summaries did not stabilise in {self.opts.max_passes} passes")
        for n, sm in sorted(self.summaries.items()):
            if n != entry:
                results[n] = sm.result
        return results


def analyze_program(p: ir.Program, k: int | None = 2, opts: AnalysisOptions | None = None) -> AnalysisResult:
    opts = opts or AnalysisOptions()
    opts.widen_depth = k
    cg = build_call_graph(p)
    pre = pa_preanalyze(p) if opts.pointer_mode == PRE else None

    if opts.mode == INTER:
        if not p.has_function(opts.entry):
            raise EntryNotFound(f"entry function {opts.entry!r} not found")
        engine = InterEngine(p, opts, pre)
        funcs = engine.run(opts.entry)
        return AnalysisResult(funcs, opts, cg, pre, passes=engine.pass_id, engine=engine)

    rng = random.Random(opts.order_seed) if opts.order_seed is not None else None
    funcs = {}
    for f in p.functions:
        frozen = pre.for_function(f.name, p.globals) if pre is not None else None
        funcs[f.name] = solve_function(
            f, p, None, k,
            pointer_mode=opts.pointer_mode,
            frozen_pts=frozen,
            max_iterations=opts.max_iterations,
            rng=rng,
        )
    return AnalysisResult(funcs, opts, cg, pre)
