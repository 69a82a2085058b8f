"""Command-line driver.

::

    symval analyze FILE [--mode intra|inter] [--widen-depth K] [--format text|json] ...
    symval check FILE... [--trials N] [--seed S]
    symval dump-cfg FILE
    symval fmt FILE

Exit codes: 0 success, 1 diagnostics under ``--strict``, 2 parse,
validation or usage errors, 3 soundness violations, 4 iteration budget
exhausted.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import ir
from . import lattice as L
from .domains import render_key, state_to_json
from .interproc import INTER, INTRA, AnalysisOptions, AnalysisResult, EntryNotFound, analyze_program
from .oracle import soundness_check
from .solver import IterationBudgetExceeded
from .transfer import FLOW_SENSITIVE, PRE

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_USAGE = 2
EXIT_UNSOUND = 3
EXIT_BUDGET = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _depth(text: str) -> int | None:
    if text.lower() in ("none", "inf"):
        return None
    k = int(text)
    if k < 0:
        raise argparse.ArgumentTypeError("widen depth must be >= 0")
    return k


def _analysis_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--mode", choices=(INTRA, INTER), default=INTRA)
    sp.add_argument("--entry", default="main", metavar="NAME")
    sp.add_argument("--widen-depth", type=_depth, default=2, metavar="K",
                    help="depth bound for widening ('none' disables truncation)")
    sp.add_argument("--pointer-mode", choices=(FLOW_SENSITIVE, PRE), default=FLOW_SENSITIVE)
    sp.add_argument("--max-iterations", type=int, default=None, metavar="N")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="symval", description="Possible-value analysis for a small SSA language.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="analyze a program and print per-block states")
    a.add_argument("file")
    _analysis_flags(a)
    a.add_argument("--format", choices=("text", "json"), default="text")
    a.add_argument("--stats", action="store_true", help="print iteration counts and block visits")
    a.add_argument("--warnings", action="store_true", help="print diagnostics to stderr")
    a.add_argument("--strict", action="store_true", help="exit 1 when there are diagnostics")
    a.add_argument("--order-seed", type=int, default=None, help="randomise the worklist order")

    c = sub.add_parser("check", help="compare the analysis against concrete runs")
    c.add_argument("files", nargs="+", metavar="FILE")
    _analysis_flags(c)
    c.add_argument("--trials", type=int, default=100)
    c.add_argument("--seed", type=int, default=0)

    d = sub.add_parser("dump-cfg", help="print control-flow edges")
    d.add_argument("file")

    f = sub.add_parser("fmt", help="print the program in canonical form")
    f.add_argument("file")
    return ap


def _load(path: str) -> ir.Program:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except FileNotFoundError:
        raise _Fail(EXIT_USAGE, f"{path}: file not found")
    except OSError as e:
        raise _Fail(EXIT_USAGE, f"{path}: {e.strerror or e}")
    try:
        return ir.load_program(text)
    except ir.IRError as e:
        raise _Fail(EXIT_USAGE, f"{path}: {e}")


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

def result_to_json(r: AnalysisResult) -> dict:
    funcs = {}
    for name in sorted(r.functions):
        fr = r.functions[name]
        funcs[name] = {
            "blocks": {
                label: {"in": state_to_json(fr.in_states[label]), "out": state_to_json(fr.out_states[label])}
                for label in sorted(fr.in_states)
            },
            "return": L.render(fr.return_value),
            "iterations": fr.iterations,
        }
    doc = {
        "functions": funcs,
        "diagnostics": [
            {"function": d.function, "block": d.label, "index": d.index, "code": d.code}
            for d in sorted(r.diagnostics, key=lambda d: (d.function, d.label, d.index, d.code))
        ],
    }
    if r.points_to_pre is not None:
        doc["points_to_pre"] = {
            _pre_key(k): sorted(str(o) for o in v)
            for k, v in sorted(r.points_to_pre.items(), key=lambda kv: _pre_key(kv[0]))
        }
    return doc


def _pre_key(k) -> str:
    if isinstance(k, tuple):
        return f"{k[0]}.{k[1]}"
    return render_key(k)


def _text_state(lines: list, tag: str, st: dict, prev: dict | None) -> None:
    lines.append(f"  {tag}:")
    for v, e in st["sigma"].items():
        lines.append(f"    {v} = {e}")
    mem = st["mem"] if prev is None else {o: e for o, e in st["mem"].items() if prev["mem"].get(o) != e}
    for o, e in mem.items():
        lines.append(f"    [{o}] = {e}")
    for key, objs in st["pts"].items():
        lines.append(f"    {key} -> {{{', '.join(objs)}}}")


def render_result(r: AnalysisResult, fmt: str = "text") -> str:
    """Deterministic report of ``r`` as ``text`` or ``json``."""
    doc = result_to_json(r)
    if fmt == "json":
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown format {fmt!r}")
    lines = []
    for name, fn in doc["functions"].items():
        lines.append(f"func {name}: return {fn['return']}")
        for label, blk in fn["blocks"].items():
            lines.append(f"{label}:")
            _text_state(lines, "in", blk["in"], None)
            # OUT lists only memory cells that changed inside the block
            _text_state(lines, "out", blk["out"], blk["in"])
        lines.append("")
    if "points_to_pre" in doc:
        lines.append("points-to (pre-analysis):")
        for key, objs in doc["points_to_pre"].items():
            lines.append(f"  {key} -> {{{', '.join(objs)}}}")
        lines.append("")
    return "\n".join(lines)


def render_stats(r: AnalysisResult) -> str:
    lines = []
    if r.options.mode == INTER:
        lines.append(f"passes: {r.passes}")
    for name in sorted(r.functions):
        fr = r.functions[name]
        visits = " ".join(f"{l}={fr.visits.get(l, 0)}" for l in sorted(fr.in_states))
        lines.append(f"{name}: iterations={fr.iterations} visits: {visits}")
    return "\n".join(lines) + "\n"


def render_cfg(p: ir.Program) -> str:
    lines = []
    for f in p.functions:
        cfg = ir.build_cfg(f)
        lines.append(f"func {f.name} (entry {cfg.entry}; exits {', '.join(cfg.exits) or '-'})")
        for a, b in cfg.edges:
            lines.append(f"  {a} -> {b}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _options(ns) -> AnalysisOptions:
    return AnalysisOptions(
        widen_depth=ns.widen_depth, mode=ns.mode, entry=ns.entry,
        pointer_mode=ns.pointer_mode, max_iterations=ns.max_iterations,
        order_seed=getattr(ns, "order_seed", None),
    )


def _analyze(p: ir.Program, ns) -> AnalysisResult:
    try:
        return analyze_program(p, ns.widen_depth, _options(ns))
    except EntryNotFound as e:
        raise _Fail(EXIT_USAGE, str(e))
    except IterationBudgetExceeded as e:
        raise _Fail(EXIT_BUDGET, str(e))


def cmd_analyze(ns, out, err) -> int:
    p = _load(ns.file)
    r = _analyze(p, ns)
    out.write(render_result(r, ns.format))
    if ns.stats:
        err.write(render_stats(r))
    diags = r.diagnostics
    if ns.warnings:
        for d in sorted(diags, key=lambda d: (d.function, d.label, d.index, d.code)):
            err.write(f"warning: {d}\n")
    if ns.strict and diags:
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def cmd_check(ns, out, err) -> int:
    total = 0
    for path in ns.files:
        p = _load(path)
        if not p.has_function(ns.entry):
            raise _Fail(EXIT_USAGE, f"{path}: entry function {ns.entry!r} not found")
        try:
            rep = soundness_check(p, ns.entry, ns.trials, ns.widen_depth, ns.mode,
                                  seed=ns.seed, pointer_mode=ns.pointer_mode)
        except IterationBudgetExceeded as e:
            raise _Fail(EXIT_BUDGET, f"{path}: {e}")
        out.write(f"{path}: {rep.summary()}\n")
        for v in rep.violations:
            out.write(f"  {v}\n")
        total += len(rep.violations)
    out.write(f"{total} violations\n")
    return EXIT_UNSOUND if total else EXIT_OK


def cmd_dump_cfg(ns, out, err) -> int:
    out.write(render_cfg(_load(ns.file)))
    return EXIT_OK


def cmd_fmt(ns, out, err) -> int:
    out.write(ir.format_program(_load(ns.file)))
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "check": cmd_check, "dump-cfg": cmd_dump_cfg, "fmt": cmd_fmt}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[ns.command](ns, out, err)
    except _Fail as e:
        err.write(f"symval: {e}\n")
        return e.code


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
