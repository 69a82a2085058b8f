"""Acceptance criteria, one test each.  Every test prints a single
``[ACCEPT n] ... PASS/FAIL`` line, whether or not it passes."""

import io
import itertools
import json
import random
import time

from symval import lattice as L
from symval.cli import main as cli_main
from symval.domains import AbstractState, Scope, initial_state, join_state, leq_state, widen_state
from symval.fuzz import generate_source
from symval.interproc import INTER, INTRA, AnalysisOptions, analyze_program
from symval.ir import (
    AddrOf, Assign, Binary, Block, Call, Goto, Load, PhiNode, Store, Unary, build_cfg, load_program,
)
from symval.lattice import BOT, TOP, Arg, BinOp, Const, FnCall, MemObject, Phi, UnOp
from symval.oracle import soundness_check
from symval.pointer import pa_preanalyze
from symval.solver import solve_function
from symval.transfer import TransferContext, transfer_block, transfer_stmt

from conftest import CORPUS, corpus_files, load


def report(capsys, n, title, ok, detail=""):
    with capsys.disabled():
        print(f"\n[ACCEPT {n}] {title}: {'PASS' if ok else 'FAIL'}{' - ' + detail if detail else ''}")
    assert ok, detail


# ---------------------------------------------------------------------------
# 1. lattice laws
# ---------------------------------------------------------------------------

LEAVES = [TOP, BOT, Const(0), Const(1), Arg(0)]


def _grow(prev):
    out = list(LEAVES)
    for a in prev:
        out.append(UnOp("!", a))
        out.append(FnCall("f", (a,)))
    for a, b in itertools.product(prev, prev):
        out.append(BinOp("+", a, b))
        out.append(Phi((a, b)))
    return out


def _random_deep(rng, d):
    if d == 0 or rng.random() < 0.2:
        return rng.choice(LEAVES)
    r = rng.random()
    if r < 0.3:
        return BinOp("+", _random_deep(rng, d - 1), _random_deep(rng, d - 1))
    if r < 0.5:
        return UnOp("!", _random_deep(rng, d - 1))
    if r < 0.7:
        return FnCall("f", (_random_deep(rng, d - 1),))
    return Phi((_random_deep(rng, d - 1), _random_deep(rng, d - 1)))


def _pair_laws(a, b, bad):
    j, m = L.join(a, b), L.meet(a, b)
    if j != L.join(b, a) or m != L.meet(b, a):
        bad.append(("commutativity", a, b))
    if L.join(a, m) != a or L.meet(a, j) != a:
        bad.append(("absorption", a, b))
    if not (L.leq(a, j) and L.leq(b, j) and L.leq(m, a) and L.leq(m, b)):
        bad.append(("bound", a, b))


def _triple_laws(a, b, c, bad):
    if L.join(L.join(a, b), c) != L.join(a, L.join(b, c)):
        bad.append(("join associativity", a, b, c))
    if L.meet(L.meet(a, b), c) != L.meet(a, L.meet(b, c)):
        bad.append(("meet associativity", a, b, c))
    if L.leq(a, c) and L.leq(b, c) and not L.leq(L.join(a, b), c):
        bad.append(("least upper bound", a, b, c))
    if L.leq(c, a) and L.leq(c, b) and not L.leq(c, L.meet(a, b)):
        bad.append(("greatest lower bound", a, b, c))


def test_1_lattice_laws(capsys):
    t0 = time.perf_counter()
    d1 = _grow(LEAVES)
    d2 = _grow(d1)
    bad = []
    for a in d2:
        if L.join(a, a) != a or L.meet(a, a) != a:
            bad.append(("idempotence", a))
    # every pair with one side of depth <= 1 and the other of depth <= 2
    for a in d1:
        for b in d2:
            _pair_laws(a, b, bad)
    # every triple of depth <= 1 elements
    for a, b, c in itertools.product(d1, repeat=3):
        _triple_laws(a, b, c, bad)
    rng = random.Random(2024)
    for _ in range(200_000):
        _pair_laws(rng.choice(d2), rng.choice(d2), bad)
    for _ in range(100_000):
        _triple_laws(rng.choice(d2), rng.choice(d2), rng.choice(d2), bad)
    # deeper random triples, biased towards sharing a shape by reusing a skeleton
    for _ in range(10_000):
        a = _random_deep(rng, 5)
        b = L.truncate(a, rng.randint(0, 4)) if rng.random() < 0.5 else _random_deep(rng, 5)
        c = _random_deep(rng, 5)
        if L.join(L.join(a, b), c) != L.join(a, L.join(b, c)):
            bad.append(("deep join associativity", a, b, c))
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed <= 60
    report(capsys, 1, "lattice laws", ok,
           f"{len(d2)} elements of depth<=2, {len(bad)} counterexamples, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. micro-examples
# ---------------------------------------------------------------------------

def test_2_micro_examples(capsys):
    checks = {}
    checks["join const 2 const 3"] = L.join(Const(2), Const(3)) is TOP
    checks["widen0 of binop"] = all(
        L.widen(x, BinOp("+", TOP, TOP), 0) is TOP for x in (TOP, BOT, Const(1), Arg(0))
    )
    checks["depth of leaves"] = all(L.depth(x) == 0 for x in (TOP, BOT, Const(1), Arg(0)))
    checks["depth recurrence"] = (
        L.depth(FnCall("f", (TOP, BinOp("+", TOP, Const(1))))) == 2
        and L.depth(Phi((Const(1), UnOp("-", UnOp("-", TOP))))) == 3
        and L.depth(BinOp("+", Arg(0), Phi((TOP, TOP)))) == 2
    )
    stmt = Binary("a", "+", "a", 1)
    s = AbstractState({"a": Arg(0)})
    trace = []
    for _ in range(2):
        s = transfer_stmt(s, stmt, TransferContext())
        trace.append(L.render(s.var("a")))
    checks["growth sequence"] = trace == ["(+ arg(0) const(1))", "(+ (+ arg(0) const(1)) const(1))"]
    p = load(CORPUS / "loop.ir")
    stable = True
    for k in range(4):
        r = solve_function(p.function("main"), p, k=k)
        stable &= all(L.depth(v) <= k for st in r.out_states.values() for v in st.sigma.values())
    checks["loop stabilises for k<=3"] = stable
    failed = [name for name, ok in checks.items() if not ok]
    report(capsys, 2, "micro-examples", not failed, "failed: " + ", ".join(failed) if failed else f"{len(checks)} checks")


# ---------------------------------------------------------------------------
# 3. pointer rules
# ---------------------------------------------------------------------------

POINTER_PROGRAMS = {
    # a = &b
    "address-of": ("global g\nfunc main(a) {\nentry:\n    p = &g\n    return a\n}", "p", {"g+0"}),
    # a = b
    "copy": ("global g\nfunc main(a) {\nentry:\n    p = &g\n    q = p\n    return a\n}", "q", {"g+0"}),
    # a = *b
    "load": ("global g\nglobal gp\nfunc main(a) {\nentry:\n    p = &g\n    *gp = p\n    q = *gp\n    return a\n}",
             "q", {"g+0"}),
}


def _exit_pts(src):
    p = load_program(src)
    r = solve_function(p.function("main"), p, k=2)
    return r.exit_state


def test_3_pointer_rules(capsys):
    checks = {}
    for name, (src, var, expect) in POINTER_PROGRAMS.items():
        checks[name] = {str(o) for o in _exit_pts(src).points_to(var)} == expect
    strong = _exit_pts("""
global g
global h
global gp
func main(a) {
entry:
    p = &g
    *gp = p
    q = &h
    *gp = q
    r = *gp
    return a
}""")
    checks["store, strong update"] = {str(o) for o in strong.points_to(MemObject("gp"))} == {"h+0"}
    checks["stored pointer is not an integer value"] = L.render(strong.var("r")) == "B"
    weak = _exit_pts("""
global g
global h
global k
func main(a, b) {
entry:
    c = a < b
    br c, left
right:
    x = &h
    goto join
left:
    y = &g
    goto join
join:
    p = phi(x:right, y:left)
    q = &k
    *p = q
    *p = a
    r = *h
    return r
}""")
    # both targets keep what they had and gain the stored value
    checks["store, weak update"] = (
        {str(o) for o in weak.points_to(MemObject("h"))} == {"k+0"}
        and {str(o) for o in weak.points_to(MemObject("g"))} == {"k+0"}
        and L.render(weak.var("r")) == "T"
        and L.render(weak.cell(MemObject("g"))) == "T"
    )
    superset = True
    for path in corpus_files():
        p = load(path)
        pre = pa_preanalyze(p)
        for mode in (INTRA, INTER):
            r = analyze_program(p, 2, AnalysisOptions(mode=mode))
            for fname, fr in r.functions.items():
                proj = pre.for_function(fname, p.globals)
                for st in [*fr.in_states.values(), *fr.out_states.values()]:
                    superset &= all(v <= proj.get(k, frozenset()) for k, v in st.pts.items())
    checks["pre-analysis superset on corpus"] = superset
    failed = [name for name, ok in checks.items() if not ok]
    report(capsys, 3, "pointer rules", not failed,
           "failed: " + ", ".join(failed) if failed else f"{len(checks)} checks, {len(corpus_files())} corpus programs")


# ---------------------------------------------------------------------------
# 4. termination
# ---------------------------------------------------------------------------

def _post_fixpoint_ok(p, f, r, k, call_handler=None, initial=None):
    cfg = build_cfg(f)
    init = initial if initial is not None else initial_state(f, p)
    sc = Scope(f.name, frozenset(p.globals))
    for b in f.blocks:
        st = init if b.label == cfg.entry else AbstractState()
        for pr in cfg.predecessors(b.label):
            st = join_state(st, r.out_states[pr])
        out = widen_state(st, transfer_block(st, b, TransferContext(scope=sc, call_handler=call_handler)), k)
        if st != r.in_states[b.label] or out != r.out_states[b.label]:
            return False
    return True


def test_4_termination(capsys):
    t0 = time.perf_counter()
    files = corpus_files()
    bad = []
    runs = 0
    for path in files:
        p = load(path)
        for k in range(4):
            r = analyze_program(p, k, AnalysisOptions(mode=INTRA))
            for f in p.functions:
                runs += 1
                if not _post_fixpoint_ok(p, f, r.functions[f.name], k):
                    bad.append((path.stem, "intra", k, f.name))
            r = analyze_program(p, k, AnalysisOptions(mode=INTER))
            runs += 1
            eng = r.engine
            eng.stack.append("main")
            try:
                if not _post_fixpoint_ok(p, p.function("main"), r.functions["main"], k, eng.handle_call):
                    bad.append((path.stem, "inter", k, "main"))
            finally:
                eng.stack.pop()
    elapsed = time.perf_counter() - t0
    ok = not bad and elapsed <= 10
    report(capsys, 4, "termination", ok, f"{runs} fixpoints, {len(bad)} not stable {bad[:3]}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 5. monotonicity
# ---------------------------------------------------------------------------

OBJS = [MemObject("g"), MemObject("h"), MemObject("main.c")]
VARS = ["x", "y", "z", "p", "q"]
MONO_LEAVES = [Const(0), Const(1), Arg(0), Arg(1), TOP]


def _rand_elem(rng, d=3):
    if d == 0 or rng.random() < 0.35:
        return rng.choice(MONO_LEAVES)
    r = rng.random()
    if r < 0.35:
        return BinOp(rng.choice("+*"), _rand_elem(rng, d - 1), _rand_elem(rng, d - 1))
    if r < 0.55:
        return UnOp("-", _rand_elem(rng, d - 1))
    if r < 0.75:
        return Phi((_rand_elem(rng, d - 1), _rand_elem(rng, d - 1)))
    return FnCall("f", (_rand_elem(rng, d - 1),))


def _generalise(rng, e):
    """A random element above ``e``."""
    if e is BOT:
        return _rand_elem(rng) if rng.random() < 0.7 else BOT
    if rng.random() < 0.15:
        return TOP
    kids = L._children(e)
    if not kids:
        return e
    return L._rebuild(e, tuple(_generalise(rng, c) for c in kids))


def _state_pair(rng, weak=False):
    sigma = {v: _rand_elem(rng) for v in VARS if rng.random() < 0.7}
    mem = {o: _rand_elem(rng) for o in OBJS if rng.random() < 0.7}

    def pts_set():
        if weak:
            return frozenset(rng.sample(OBJS, rng.randint(2, 3)))
        return frozenset(o for o in OBJS if rng.random() < 0.4)

    pts = {k: pts_set() for k in VARS + OBJS if rng.random() < 0.6}
    if weak:
        pts["p"] = pts_set()
    lo = AbstractState(sigma, mem, {}).with_pts(pts)
    hi_sigma = {v: _generalise(rng, lo.var(v)) for v in VARS}
    hi_mem = {o: _generalise(rng, lo.cell(o)) for o in OBJS}
    hi_pts = {}
    for k in VARS + OBJS:
        extra = frozenset(o for o in OBJS if rng.random() < 0.3)
        s = lo.points_to(k) | extra
        if weak and s and len(s) < 2:
            s = s | {OBJS[0], OBJS[1]}
        hi_pts[k] = s
    hi = AbstractState({}, {}, {})
    for v, e in hi_sigma.items():
        hi = hi.set_var(v, e)
    for o, e in hi_mem.items():
        hi = hi.set_cell(o, e)
    return lo, hi.with_pts(hi_pts)


STMT_FORMS = {
    "binary": lambda r: Binary("x", r.choice(L.BINOPS), r.choice(VARS), r.choice(VARS + [2])),
    "unary": lambda r: Unary("x", r.choice(L.UNOPS), r.choice(VARS)),
    "copy": lambda r: Assign("x", r.choice(VARS)),
    "call": lambda r: Call("x", "f", tuple(r.choice(VARS + [1]) for _ in range(r.randint(0, 2)))),
    "address-of": lambda r: AddrOf("x", r.choice(["g", "h", "c"])),
    "phi": lambda r: PhiNode("x", (("y", "a"), (r.choice(VARS), "b"))),
}
MEMORY_FORMS = {
    "load (weak)": lambda r: Load("x", "p"),
    "store (weak)": lambda r: Store("p", r.choice(VARS + [3])),
}


def test_5_monotonicity(capsys):
    rng = random.Random(77)
    sc = Scope("main", frozenset({"g", "h"}))
    ctx = TransferContext(scope=sc)
    violations = {}
    trials = 5000
    for forms, weak in ((STMT_FORMS, False), (MEMORY_FORMS, True)):
        for name, make in forms.items():
            bad = 0
            for _ in range(trials):
                lo, hi = _state_pair(rng, weak)
                assert leq_state(lo, hi)
                stmt = make(rng)
                if isinstance(stmt, PhiNode):
                    blk = Block("b", (stmt,), Goto("b"))
                    a, b = transfer_block(lo, blk, ctx), transfer_block(hi, blk, ctx)
                else:
                    a, b = transfer_stmt(lo, stmt, ctx), transfer_stmt(hi, stmt, ctx)
                bad += not leq_state(a, b)
            violations[name] = bad
    total = sum(violations.values())
    report(capsys, 5, "monotonicity", total == 0,
           f"{trials} trials x {len(violations)} forms, violations {violations}")


# ---------------------------------------------------------------------------
# 6. soundness fuzzing
# ---------------------------------------------------------------------------

def test_6_soundness_fuzzing(capsys):
    t0 = time.perf_counter()
    rng = random.Random(6)
    violations = executed = skipped = 0
    for i in range(500):
        for mode in (INTRA, INTER):
            p = load_program(generate_source(rng, mode))
            for k in (0, 2):
                rep = soundness_check(p, "main", 10, k, mode, seed=i)
                violations += len(rep.violations)
                executed += rep.executed
                skipped += rep.skipped
    elapsed = time.perf_counter() - t0

    import symval.lattice as lattice_mod
    real_join = lattice_mod.join
    lattice_mod.join = lattice_mod.meet
    try:
        mrng = random.Random(6)
        detected = 0
        for i in range(50):
            p = load_program(generate_source(mrng, INTRA))
            detected += not soundness_check(p, "main", 10, 2, INTRA, seed=i).ok
    finally:
        lattice_mod.join = real_join
    ok = violations == 0 and detected > 0 and elapsed <= 300
    report(capsys, 6, "soundness fuzzing", ok,
           f"500 programs x 2 modes x k in {{0,2}}: {executed} runs checked, {skipped} trapped, "
           f"{violations} violations, {elapsed:.0f}s; join->meet mutant caught on {detected}/50 programs")


# ---------------------------------------------------------------------------
# 7. interprocedural
# ---------------------------------------------------------------------------

INLINE_PAIRS = ["inline_inc", "inline_add", "inline_abs", "inline_nested", "inline_loop"]


def test_7_interprocedural(capsys):
    mismatches = []
    for name in INLINE_PAIRS:
        a = load(CORPUS / f"{name}.ir")
        b = load(CORPUS / "inlined" / f"{name}.ir")
        assert not any(isinstance(s, (Load, Store, AddrOf)) for f in a.functions for bl in f.blocks for s in bl.body)
        for k in range(4):
            ra = analyze_program(a, k, AnalysisOptions(mode=INTER)).functions["main"].return_value
            rb = analyze_program(b, k, AnalysisOptions(mode=INTRA)).functions["main"].return_value
            if ra != rb:
                mismatches.append((name, k, L.render(ra), L.render(rb)))
    p = load(CORPUS / "callee_writes.ir")
    g = MemObject("g")
    inter = analyze_program(p, 2, AnalysisOptions(mode=INTER)).functions["main"].exit_state
    intra = analyze_program(p, 2, AnalysisOptions(mode=INTRA)).functions["main"].exit_state
    contrast = (
        L.render(inter.cell(g)) == "(* arg(0) const(2))"
        and L.render(intra.cell(g)) == "const(0)"
        and isinstance(intra.var("x"), FnCall)
        and not isinstance(inter.var("x"), FnCall)
    )
    ok = not mismatches and contrast
    report(capsys, 7, "interprocedural", ok,
           f"{len(INLINE_PAIRS)} inlining pairs x k 0..3, mismatches {mismatches}; "
           f"callee write: inter m[g]={L.render(inter.cell(g))}, intra x={L.render(intra.var('x'))}")


# ---------------------------------------------------------------------------
# 8. determinism
# ---------------------------------------------------------------------------

def _cli(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli_main(list(argv), out, err)
    assert code == 0, err.getvalue()
    return out.getvalue()


def _strip_iterations(doc):
    d = json.loads(doc)
    for f in d["functions"].values():
        f.pop("iterations")
    return d


def test_8_determinism(capsys):
    diffs = []
    for path in corpus_files():
        for mode in (INTRA, INTER):
            base = _cli("analyze", str(path), "--mode", mode)
            if _cli("analyze", str(path), "--mode", mode) != base:
                diffs.append((path.stem, mode, "rerun text"))
            js = _cli("analyze", str(path), "--mode", mode, "--format", "json")
            if _cli("analyze", str(path), "--mode", mode, "--format", "json") != js:
                diffs.append((path.stem, mode, "rerun json"))
            for seed in range(5):
                if _cli("analyze", str(path), "--mode", mode, "--order-seed", str(seed)) != base:
                    diffs.append((path.stem, mode, f"text seed {seed}"))
                sj = _cli("analyze", str(path), "--mode", mode, "--format", "json", "--order-seed", str(seed))
                if _strip_iterations(sj) != _strip_iterations(js):
                    diffs.append((path.stem, mode, f"json states seed {seed}"))
    report(capsys, 8, "determinism", not diffs,
           f"{len(corpus_files())} programs x 2 modes x 5 order seeds, differences {diffs[:5]}")
