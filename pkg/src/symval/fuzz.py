"""Random well-formed programs for soundness fuzzing."""

from __future__ import annotations

import random

from .ir import Program, load_program

SHAPES = ("line", "diamond", "loop", "triangle")
_ARITH = ("+", "-", "*", "/", "==", "!=", "<", "<=")


class _Gen:
    def __init__(self, rng: random.Random, mode: str, budget: int):
        self.rng = rng
        self.mode = mode
        self.budget = budget
        self.n = 0
        self.globals = [f"g{i}" for i in range(rng.randint(0, 2))]
        self.helpers: list[str] = []
        self.lines_helpers: list[str] = []

    def fresh(self, prefix="v"):
        self.n += 1
        return f"{prefix}{self.n}"

    def operand(self, ints):
        if not ints or self.rng.random() < 0.25:
            return str(self.rng.randint(0, 5))
        return self.rng.choice(ints)

    def stmt(self, ints: list, ptrs: list, out: list) -> None:
        """Append one random non-terminator statement, updating the variable pools."""
        if self.budget <= 0:
            return
        self.budget -= 1
        r = self.rng
        targets = list(self.globals) + ptrs
        kinds = ["bin", "bin", "bin", "un", "copy", "call"]
        if self.globals or ptrs:
            kinds += ["addr", "store", "store", "load", "load"]
        else:
            kinds += ["addr"]
        kind = r.choice(kinds)
        if kind == "bin":
            d = self.fresh()
            out.append(f"{d} = {self.operand(ints)} {r.choice(_ARITH)} {self.operand(ints)}")
            ints.append(d)
        elif kind == "un":
            d = self.fresh()
            out.append(f"{d} = {r.choice('-!')}{self.operand(ints)}")
            ints.append(d)
        elif kind == "copy":
            d = self.fresh()
            out.append(f"{d} = {self.operand(ints)}")
            ints.append(d)
        elif kind == "call":
            d = self.fresh()
            if self.mode == "inter" and r.random() < 0.6:
                name = self.helper()
            else:
                name = r.choice(["ext", "lib"])
            out.append(f"{d} = call {name}({self.operand(ints)})")
            ints.append(d)
        elif kind == "addr":
            d = self.fresh("p")
            if self.globals and r.random() < 0.6:
                out.append(f"{d} = &{r.choice(self.globals)}")
            else:
                out.append(f"{d} = &cell{r.randint(0, 1)}")
            ptrs.append(d)
        elif kind == "store":
            out.append(f"*{r.choice(targets)} = {self.operand(ints)}")
        elif kind == "load":
            d = self.fresh()
            out.append(f"{d} = *{r.choice(targets)}")
            ints.append(d)

    def helper(self) -> str:
        if self.helpers and self.rng.random() < 0.5:
            return self.rng.choice(self.helpers)
        name = f"h{len(self.helpers)}"
        self.helpers.append(name)
        body = [f"y = x {self.rng.choice(('+', '*', '-'))} {self.rng.randint(1, 3)}"]
        if self.globals and self.rng.random() < 0.5:
            body.append(f"*{self.rng.choice(self.globals)} = y")
        self.lines_helpers.append(
            f"func {name}(x) {{\nentry:\n" + "".join(f"    {l}\n" for l in body) + "    return y\n}\n"
        )
        return name

    def stmts(self, ints, ptrs, n) -> list:
        out: list = []
        for _ in range(n):
            self.stmt(ints, ptrs, out)
        return out


def generate_source(rng: random.Random, mode: str = "intra", max_stmts: int = 12) -> str:
    """Source of a random program: ``main`` has at most 4 blocks and the
    whole program at most ``max_stmts`` non-terminator statements."""
    while True:
        src = _generate(rng, mode, max_stmts)
        if count_statements(src) <= max_stmts:
            return src


def count_statements(src: str) -> int:
    p = load_program(src)
    return sum(len(b.body) for f in p.functions for b in f.blocks)


def _generate(rng: random.Random, mode: str, max_stmts: int) -> str:
    g = _Gen(rng, mode, max_stmts // 2)
    params = [f"a{i}" for i in range(rng.randint(1, 2))]
    shape = rng.choice(SHAPES)
    ints = list(params)
    ptrs: list = []
    blocks: list[tuple[str, list]] = []

    entry = g.stmts(ints, ptrs, rng.randint(1, 3))
    if shape == "line":
        entry += g.stmts(ints, ptrs, rng.randint(0, 4))
        entry.append(f"return {g.operand(ints)}")
        blocks.append(("entry", entry))

    elif shape in ("diamond", "triangle"):
        c = g.fresh("c")
        entry.append(f"{c} = {g.operand(ints)} < {g.operand(ints)}")
        entry.append(f"br {c}, then")
        blocks.append(("entry", entry))
        base_i, base_p = list(ints), list(ptrs)
        ti, tp = list(base_i), list(base_p)
        then = g.stmts(ti, tp, rng.randint(1, 3))
        tv = g.operand(ti)
        then.append("goto join")
        join = []
        if shape == "diamond":
            ei, ep = list(base_i), list(base_p)
            els = g.stmts(ei, ep, rng.randint(1, 3))
            ev = g.operand(ei)
            els.append("goto join")
            blocks.append(("else", els))
            blocks.append(("then", then))
            m = g.fresh("m")
            join.append(f"{m} = phi({ev}:else, {tv}:then)")
            new_t = [x for x in tp if x not in base_p]
            new_e = [x for x in ep if x not in base_p]
            pool_p = list(base_p)
            if new_t and new_e:
                q = g.fresh("q")
                join.append(f"{q} = phi({new_e[-1]}:else, {new_t[-1]}:then)")
                pool_p.append(q)
        else:
            # entry falls through to "then"; the branch skips straight to join
            entry[-1] = f"br {c}, join"
            blocks.append(("then", then))
            m = g.fresh("m")
            join.append(f"{m} = phi({g.operand(base_i)}:entry, {tv}:then)")
            pool_p = list(base_p)
        ji = base_i + [m]
        join += g.stmts(ji, pool_p, rng.randint(0, 3))
        join.append(f"return {g.operand(ji)}")
        blocks.append(("join", join))

    else:  # loop
        init = g.operand(ints)
        entry.append("goto head")
        blocks.append(("entry", entry))
        i, s, i1, s1 = g.fresh("i"), g.fresh("s"), g.fresh("i"), g.fresh("s")
        t = g.fresh("t")
        bound = rng.randint(0, 3)
        head = [f"{i} = phi(0:entry, {i1}:body)", f"{s} = phi({init}:entry, {s1}:body)",
                f"{t} = {bound} <= {i}", f"br {t}, exit"]
        blocks.append(("head", head))
        bi, bp = ints + [i, s], list(ptrs)
        body = [f"{i1} = {i} + 1"]
        body += g.stmts(bi, bp, rng.randint(0, 3))
        body.append(f"{s1} = {s} {rng.choice(('+', '-', '*'))} {g.operand(bi)}")
        body.append("goto head")
        blocks.append(("body", body))
        ei = ints + [i, s]
        ex = g.stmts(ei, list(ptrs), rng.randint(0, 2))
        ex.append(f"return {g.operand(ei)}")
        blocks.append(("exit", ex))

    lines = [f"global {x}" for x in g.globals]
    lines += g.lines_helpers
    lines.append(f"func main({', '.join(params)}) {{")
    for label, body in blocks:
        lines.append(f"{label}:")
        lines += [f"    {x}" for x in body]
    lines.append("}")
    return "\n".join(lines) + "\n"


def generate_program(rng: random.Random, mode: str = "intra", max_stmts: int = 12) -> Program:
    return load_program(generate_source(rng, mode, max_stmts))
