"""
Concrete execution and concretisation checks.

:func:`run_concrete` is a small-step interpreter for the IR that records
the environment and heap after every statement.  :func:`concretize_member`
decides whether an integer belongs to the set of values a lattice
element stands for, given the concrete inputs.  :func:`soundness_check`
ties them together: run the analysis once, run the program on random
inputs many times, and report every concrete value the abstract state
fails to cover.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Callable

from . import ir
from . import lattice as L
from .lattice import MemObject
from .solver import point_states, solve_function
from .interproc import INTER, INTRA, AnalysisOptions, analyze_program, build_call_graph
from .pointer import pa_preanalyze
from .transfer import FLOW_SENSITIVE, PRE

__all__ = [
    "Trap", "Ptr", "TraceEntry", "ConcreteState", "StubTable", "Binding",
    "run_concrete", "concretize_member", "gamma", "ALL",
    "Violation", "SoundnessReport", "soundness_check", "apply_binop", "apply_unop",
]

SAMPLE_RANGE = (-8, 8)
ENUM_LIMIT = 4096


class Trap(Exception):
    def __init__(self, reason: str, point=None):
        super().__init__(f"{reason} at {point}" if point else reason)
        self.reason = reason
        self.point = point


@dataclass(frozen=True)
class Ptr:
    obj: MemObject
    frame: int  # 0 for globals


@dataclass(frozen=True)
class TraceEntry:
    function: str
    frame: int
    point: tuple  # (label, index)
    env: dict
    heap: dict


@dataclass
class ConcreteState:
    env: dict
    heap: dict
    pc: tuple
    trace: list
    return_value: object = None


def apply_binop(op: str, x: int, y: int) -> int:
    if op == "+":
        return x + y
    if op == "-":
        return x - y
    if op == "*":
        return x * y
    if op == "/":
        if y == 0:
            raise ZeroDivisionError
        q = abs(x) // abs(y)
        return q if (x >= 0) == (y >= 0) else -q
    if op == "==":
        return int(x == y)
    if op == "!=":
        return int(x != y)
    if op == "<":
        return int(x < y)
    if op == "<=":
        return int(x <= y)
    raise ValueError(op)


def apply_unop(op: str, x: int) -> int:
    if op == "-":
        return -x
    if op == "!":
        return int(x == 0)
    raise ValueError(op)


class StubTable(dict):
    """Deterministic integer functions standing in for callees that are not executed."""

    @staticmethod
    def make_stub(seed, name: str) -> Callable:
        r = random.Random(f"{seed}:{name}")
        c0 = r.randint(-5, 5)
        coefs = [r.randint(-3, 3) for _ in range(8)]

        def stub(*args):
            return c0 + sum(c * a for c, a in zip(coefs, args))

        stub.__name__ = f"stub_{name}"
        return stub

    @classmethod
    def for_names(cls, names, seed=0) -> "StubTable":
        return cls({n: cls.make_stub(seed, n) for n in names})

    def lookup(self, name: str) -> Callable:
        if name not in self:
            raise Trap(f"no stub for {name!r}")
        return self[name]


# ---------------------------------------------------------------------------
# interpreter
# ---------------------------------------------------------------------------

class _Machine:
    def __init__(self, p: ir.Program, stubs: StubTable, fuel: int, mode: str, globals_init: dict):
        self.p = p
        self.stubs = stubs
        self.fuel = fuel
        self.mode = mode
        self.funcs = {f.name: f for f in p.functions}
        self.globals = set(p.globals)
        self.heap = {(MemObject(g), 0): globals_init.get(MemObject(g), 0) for g in p.globals}
        self.trace: list[TraceEntry] = []
        self.live = {0}
        self.next_frame = 1
        self.last_env: dict = {}
        self.last_pc = None

    def call(self, fname: str, args: list):
        f = self.funcs[fname]
        if len(args) != len(f.params):
            raise Trap(f"{fname} expects {len(f.params)} args")
        fid = self.next_frame
        self.next_frame += 1
        self.live.add(fid)
        env = dict(zip(f.params, args))
        try:
            return self._run(f, fid, env)
        finally:
            self.live.discard(fid)

    def _val(self, f, fid, env, op, point):
        if isinstance(op, int):
            return op
        if op in env:
            return env[op]
        if op in self.globals:
            return Ptr(MemObject(op), 0)
        raise Trap(f"read of undefined variable {op!r}", point)

    def _int(self, v, point):
        if not isinstance(v, int):
            raise Trap("pointer used as an integer", point)
        return v

    def _cell(self, v, point):
        if not isinstance(v, Ptr):
            raise Trap("dereference of a non-pointer", point)
        if v.frame not in self.live:
            raise Trap("dereference of a dead frame's cell", point)
        return (v.obj, v.frame)

    def _record(self, f, fid, env, point):
        self.trace.append(TraceEntry(f.name, fid, point, dict(env), dict(self.heap)))

    def _run(self, f: ir.Function, fid: int, env: dict):
        labels = [b.label for b in f.blocks]
        idx = 0
        prev = None
        while True:
            b = f.blocks[idx]
            phis = b.phis
            if phis:
                vals = {}
                for phi in phis:
                    src = None
                    for v, l in phi.incoming:
                        if l == prev:
                            src = v
                            break
                    else:
                        raise Trap("phi without an incoming value", (b.label, 0))
                    vals[phi.dst] = self._val(f, fid, env, src, (b.label, 0))
                env.update(vals)
                for i in range(len(phis)):
                    self._record(f, fid, env, (b.label, i))
            jump = None
            for i, s in enumerate(b.statements[len(phis):], start=len(phis)):
                point = (b.label, i)
                self.fuel -= 1
                if self.fuel < 0:
                    raise Trap("out of fuel", point)
                if isinstance(s, ir.Assign):
                    env[s.dst] = self._val(f, fid, env, s.src, point)
                elif isinstance(s, ir.AddrOf):
                    if s.target in self.globals:
                        env[s.dst] = Ptr(MemObject(s.target), 0)
                    else:
                        env[s.dst] = Ptr(f.local_object(s.target), fid)
                elif isinstance(s, ir.Load):
                    cell = self._cell(self._val(f, fid, env, s.ptr, point), point)
                    if cell not in self.heap:
                        raise Trap("read of an uninitialised cell", point)
                    env[s.dst] = self.heap[cell]
                elif isinstance(s, ir.Store):
                    cell = self._cell(self._val(f, fid, env, s.ptr, point), point)
                    self.heap[cell] = self._val(f, fid, env, s.src, point)
                elif isinstance(s, ir.Binary):
                    x = self._int(self._val(f, fid, env, s.lhs, point), point)
                    y = self._int(self._val(f, fid, env, s.rhs, point), point)
                    try:
                        env[s.dst] = apply_binop(s.op, x, y)
                    except ZeroDivisionError:
                        raise Trap("division by zero", point) from None
                elif isinstance(s, ir.Unary):
                    env[s.dst] = apply_unop(s.op, self._int(self._val(f, fid, env, s.operand, point), point))
                elif isinstance(s, ir.Call):
                    args = [self._val(f, fid, env, a, point) for a in s.args]
                    if self.mode == INTER and s.func in self.funcs:
                        env[s.dst] = self.call(s.func, args)
                    else:
                        ints = [self._int(a, point) for a in args]
                        env[s.dst] = self.stubs.lookup(s.func)(*ints)
                elif isinstance(s, ir.Branch):
                    c = self._int(self._val(f, fid, env, s.cond, point), point)
                    jump = s.target if c != 0 else labels[idx + 1]
                elif isinstance(s, ir.Goto):
                    jump = s.target
                elif isinstance(s, ir.Return):
                    v = self._val(f, fid, env, s.value, point)
                    self._record(f, fid, env, point)
                    self.last_env = env
                    self.last_pc = point
                    return v
                self._record(f, fid, env, point)
            prev = b.label
            idx = labels.index(jump)


def run_concrete(
    p: ir.Program,
    f: str,
    args: list,
    stubs: StubTable | None = None,
    fuel: int = 10_000,
    globals_init: dict | None = None,
    mode: str = INTER,
) -> ConcreteState:
    """Execute ``f(*args)``.  Raises :class:`Trap` on undefined behaviour.

    In ``intra`` mode every call is answered by ``stubs``; in ``inter``
    mode only calls to undefined functions are.
    """
    m = _Machine(p, stubs or StubTable(), fuel, mode, globals_init or {})
    ret = m.call(f, list(args))
    return ConcreteState(m.last_env, m.heap, m.last_pc, m.trace, ret)


# ---------------------------------------------------------------------------
# concretisation
# ---------------------------------------------------------------------------

class _All:
    def __repr__(self):
        return "ALL"


ALL = _All()


@dataclass
class Binding:
    """Concrete inputs the primitive symbols refer to."""

    args: list
    globals: dict = field(default_factory=dict)   # MemObject -> int (entry value)
    heap: dict = field(default_factory=dict)      # MemObject -> int (entry value)
    stubs: StubTable = field(default_factory=StubTable)
    opaque: frozenset = frozenset()               # call symbols treated as any value


def gamma(elem: L.Elem, b: Binding):
    """Concrete values of ``elem``: a frozenset, or ALL when not enumerable."""
    if elem is L.TOP:
        return ALL
    if elem is L.BOT:
        return frozenset()
    if isinstance(elem, L.Const):
        return frozenset({elem.value})
    if isinstance(elem, L.Arg):
        if elem.index >= len(b.args) or not isinstance(b.args[elem.index], int):
            return ALL
        return frozenset({b.args[elem.index]})
    if isinstance(elem, L.Global):
        return frozenset({b.globals[elem.obj]}) if elem.obj in b.globals else ALL
    if isinstance(elem, L.Mem):
        return frozenset({b.heap[elem.obj]}) if elem.obj in b.heap else ALL
    if isinstance(elem, L.Phi):
        acc = set()
        for c in elem.args:
            g = gamma(c, b)
            if g is ALL:
                return ALL
            acc |= g
        return frozenset(acc)
    if isinstance(elem, L.BinOp):
        return _combine([elem.lhs, elem.rhs], b, lambda x, y: apply_binop(elem.op, x, y))
    if isinstance(elem, L.UnOp):
        return _combine([elem.operand], b, lambda x: apply_unop(elem.op, x))
    if isinstance(elem, L.FnCall):
        if elem.name in b.opaque or elem.name not in b.stubs:
            return ALL
        return _combine(list(elem.args), b, b.stubs[elem.name])
    raise TypeError(elem)


def _combine(children, b: Binding, fn):
    sets = []
    size = 1
    for c in children:
        g = gamma(c, b)
        if g is ALL:
            return ALL
        sets.append(g)
        size *= len(g)
        if size > ENUM_LIMIT:
            return ALL
    out = set()
    for combo in itertools.product(*sets):
        try:
            out.add(fn(*combo))
        except ZeroDivisionError:
            pass
    return frozenset(out)


def concretize_member(value: int, elem: L.Elem, binding: Binding) -> bool:
    g = gamma(elem, binding)
    return g is ALL or value in g


# ---------------------------------------------------------------------------
# soundness fuzzing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    trial: int
    point: tuple
    what: str          # variable name or cell
    concrete: object
    abstract: str

    def __str__(self) -> str:
        return f"trial {self.trial} at {self.point}: {self.what} = {self.concrete} not in {self.abstract}"


@dataclass
class SoundnessReport:
    function: str
    trials: int = 0
    executed: int = 0
    skipped: int = 0
    checks: int = 0
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return (
            f"{self.function}: {self.executed}/{self.trials} runs checked "
            f"({self.skipped} trapped), {self.checks} facts, {len(self.violations)} violations"
        )


def _abstract_points(p: ir.Program, fname: str, k, mode: str, pointer_mode: str):
    f = p.function(fname)
    if mode == INTER:
        res = analyze_program(p, k, AnalysisOptions(mode=INTER, entry=fname, pointer_mode=pointer_mode))
        engine = res.engine
        fr = res.functions[fname]
        engine.stack.append(fname)
        try:
            pts = point_states(f, p, fr, pointer_mode=pointer_mode, call_handler=engine.handle_call)
        finally:
            engine.stack.pop()
        return fr, pts
    frozen = pa_preanalyze(p).for_function(fname, p.globals) if pointer_mode == PRE else None
    fr = solve_function(f, p, None, k, pointer_mode=pointer_mode, frozen_pts=frozen)
    return fr, point_states(f, p, fr, pointer_mode=pointer_mode)


def soundness_check(
    p: ir.Program,
    f: str = "main",
    trials: int = 100,
    k: int | None = 2,
    mode: str = INTRA,
    *,
    seed: int = 0,
    pointer_mode: str = FLOW_SENSITIVE,
    fuel: int = 2_000,
    stop_after: int | None = None,
) -> SoundnessReport:
    """Check every concrete value seen on random runs against the analysis."""
    rng = random.Random(seed)
    fn = p.function(f)
    cg = build_call_graph(p)
    stubs = StubTable.for_names([n for n in cg.nodes], seed)
    opaque = frozenset(x.name for x in p.functions) if mode == INTER else frozenset()
    fr, points = _abstract_points(p, f, k, mode, pointer_mode)
    report = SoundnessReport(f, trials=trials)
    lo, hi = SAMPLE_RANGE

    for t in range(trials):
        args = [rng.randint(lo, hi) for _ in fn.params]
        ginit = {MemObject(g): rng.randint(lo, hi) for g in p.globals}
        try:
            run = run_concrete(p, f, args, stubs, fuel, ginit, mode)
        except Trap:
            report.skipped += 1
            continue
        report.executed += 1
        binding = Binding(args, ginit, {}, stubs, opaque)

        def check(point, what, concrete, abstract_elem=None, abstract_pts=None):
            report.checks += 1
            if abstract_pts is not None:
                if concrete.obj not in abstract_pts:
                    report.violations.append(
                        Violation(t, point, what, str(concrete.obj), "{" + ",".join(sorted(map(str, abstract_pts))) + "}")
                    )
            elif not concretize_member(concrete, abstract_elem, binding):
                report.violations.append(Violation(t, point, what, concrete, L.render(abstract_elem)))

        root = 1
        for te in run.trace:
            if te.function != f or te.frame != root:
                continue
            st = points[te.point]
            for var, val in te.env.items():
                if isinstance(val, Ptr):
                    if val.frame in (0, root):
                        check(te.point, var, val, abstract_pts=st.points_to(var))
                else:
                    check(te.point, var, val, st.var(var))
            for (obj, frame), val in te.heap.items():
                if frame not in (0, root):
                    continue
                if isinstance(val, Ptr):
                    if val.frame in (0, root):
                        check(te.point, str(obj), val, abstract_pts=st.points_to(obj))
                else:
                    check(te.point, str(obj), val, st.cell(obj))
        if isinstance(run.return_value, int):
            check(run.pc, "return", run.return_value, fr.return_value)
        if stop_after is not None and len(report.violations) >= stop_after:
            break
    return report
