"""
A small SSA language with pointers, its text format and its CFG.

Example::

    global g

    func main(a) {
    entry:
        p = &g
        *p = a
        c = a < 10
        br c, small
    big:
        r1 = a * 2
        goto done
    small:
        r2 = a + 1
        goto done
    done:
        r = phi(r1:big, r2:small)
        return r
    }

``br v, L`` jumps to ``L`` when ``v`` is non-zero and otherwise falls
through to the lexically next block.  Integer literals may appear
wherever an operand is expected.  A global name used as an operand
denotes the address of its cell.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Union

from .lattice import BINOPS, UNOPS, MemObject

Operand = Union[str, int]

KEYWORDS = frozenset(
    {"global", "func", "br", "goto", "return", "call", "phi", "const", "arg", "mem"}
)


class IRError(Exception):
    pass


class ParseError(IRError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class ValidationError(IRError):
    def __init__(self, message: str, where: str = ""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


# ---------------------------------------------------------------------------
# statements
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    dst: str
    src: Operand
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class AddrOf:
    dst: str
    target: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Load:
    dst: str
    ptr: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Store:
    ptr: str
    src: Operand
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Binary:
    dst: str
    op: str
    lhs: Operand
    rhs: Operand
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Unary:
    dst: str
    op: str
    operand: Operand
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    dst: str
    func: str
    args: tuple
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class PhiNode:
    dst: str
    incoming: tuple  # ((operand, label), ...)
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Branch:
    cond: Operand
    target: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Goto:
    target: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Return:
    value: Operand
    line: int = field(default=0, compare=False)


Statement = Union[Assign, AddrOf, Load, Store, Binary, Unary, Call, PhiNode, Branch, Goto, Return]
TERMINATORS = (Branch, Goto, Return)


def defined_var(stmt) -> str | None:
    return getattr(stmt, "dst", None)


def used_operands(stmt) -> list:
    if isinstance(stmt, Assign):
        return [stmt.src]
    if isinstance(stmt, Load):
        return [stmt.ptr]
    if isinstance(stmt, Store):
        return [stmt.ptr, stmt.src]
    if isinstance(stmt, Binary):
        return [stmt.lhs, stmt.rhs]
    if isinstance(stmt, Unary):
        return [stmt.operand]
    if isinstance(stmt, Call):
        return list(stmt.args)
    if isinstance(stmt, PhiNode):
        return [v for v, _ in stmt.incoming]
    if isinstance(stmt, Branch):
        return [stmt.cond]
    if isinstance(stmt, Return):
        return [stmt.value]
    return []


# ---------------------------------------------------------------------------
# program structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Block:
    label: str
    body: tuple
    terminator: Statement | None

    @property
    def statements(self) -> tuple:
        """Body followed by the terminator."""
        if self.terminator is None:
            return self.body
        return self.body + (self.terminator,)

    @property
    def phis(self) -> tuple:
        out = []
        for s in self.body:
            if not isinstance(s, PhiNode):
                break
            out.append(s)
        return tuple(out)


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple
    blocks: tuple
    line: int = field(default=0, compare=False)

    @property
    def entry(self) -> str:
        return self.blocks[0].label

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def address_taken(self, globals_: Iterable[str] = ()) -> list[str]:
        """Locals whose address is taken with ``&``, in first-seen order."""
        gl = set(globals_)
        seen: list[str] = []
        for b in self.blocks:
            for s in b.body:
                if isinstance(s, AddrOf) and s.target not in gl and s.target not in seen:
                    seen.append(s.target)
        return seen

    def local_object(self, name: str) -> MemObject:
        return MemObject(f"{self.name}.{name}")


@dataclass(frozen=True)
class Program:
    globals: tuple
    functions: tuple

    def function(self, name: str) -> Function:
        for f in self.functions:
            if f.name == name:
                return f
        raise KeyError(name)

    def has_function(self, name: str) -> bool:
        return any(f.name == name for f in self.functions)

    def global_object(self, name: str) -> MemObject:
        return MemObject(name)

    def objects(self) -> list[MemObject]:
        """Every memory cell the program can name: globals, then address-taken locals."""
        objs = [MemObject(g) for g in self.globals]
        for f in self.functions:
            objs.extend(f.local_object(x) for x in f.address_taken(self.globals))
        return objs


# ---------------------------------------------------------------------------
# lexer / parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r\n]+)|(?P<comment>\#[^\n]*)"
    r"|(?P<int>\d+)|(?P<ident>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op>==|!=|<=|[-+*/<!=&(){},:])"
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _lex(source: str) -> list[_Tok]:
    toks = []
    pos, line, line_start = 0, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise ParseError(f"unexpected character {source[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group(kind)
        if kind not in ("ws", "comment"):
            if kind == "ident" and text in KEYWORDS:
                kind = "kw"
            toks.append(_Tok(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, source: str):
        self.toks = _lex(source)
        self.i = 0

    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def fail(self, expected: str) -> ParseError:
        t = self.peek()
        got = t.text or "end of input"
        return ParseError(f"expected {expected}, got {got!r}", t.line, t.col)

    def expect(self, text: str) -> _Tok:
        t = self.peek()
        if t.text != text or t.kind == "ident":
            raise self.fail(repr(text))
        self.i += 1
        return t

    def ident(self) -> str:
        t = self.peek()
        if t.kind != "ident":
            raise self.fail("identifier")
        self.i += 1
        return t.text

    def operand(self) -> Operand:
        t = self.peek()
        if t.kind == "int":
            self.i += 1
            return int(t.text)
        if t.kind == "ident":
            self.i += 1
            return t.text
        raise self.fail("operand")

    def program(self) -> Program:
        globals_, funcs = [], []
        while self.peek().kind != "eof":
            t = self.peek()
            if t.text == "global" and t.kind == "kw":
                self.i += 1
                globals_.append(self.ident())
            elif t.text == "func" and t.kind == "kw":
                funcs.append(self.function())
            else:
                raise self.fail("'global' or 'func'")
        if not globals_ and not funcs:
            raise self.fail("'global' or 'func'")
        return Program(tuple(globals_), tuple(funcs))

    def function(self) -> Function:
        line = self.expect("func").line
        name = self.ident()
        self.expect("(")
        params = []
        if self.peek().text != ")":
            params.append(self.ident())
            while self.peek().text == ",":
                self.i += 1
                params.append(self.ident())
        self.expect(")")
        self.expect("{")
        blocks = [self.block()]
        while self.peek().text != "}":
            blocks.append(self.block())
        self.expect("}")
        return Function(name, tuple(params), tuple(blocks), line=line)

    def _at_label(self) -> bool:
        return self.peek().kind == "ident" and self.peek(1).text == ":"

    def block(self) -> Block:
        if not self._at_label():
            raise self.fail("block label")
        label = self.ident()
        self.expect(":")
        stmts = []
        while not self._at_label() and self.peek().text != "}":
            if self.peek().kind == "eof":
                raise self.fail("'}'")
            stmts.append(self.statement())
        term = None
        if stmts and isinstance(stmts[-1], TERMINATORS):
            term = stmts.pop()
        return Block(label, tuple(stmts), term)

    def statement(self) -> Statement:
        t = self.peek()
        line = t.line
        if t.kind == "kw" and t.text == "br":
            self.i += 1
            cond = self.operand()
            self.expect(",")
            return Branch(cond, self.ident(), line=line)
        if t.kind == "kw" and t.text == "goto":
            self.i += 1
            return Goto(self.ident(), line=line)
        if t.kind == "kw" and t.text == "return":
            self.i += 1
            return Return(self.operand(), line=line)
        if t.text == "*" and t.kind == "op":
            self.i += 1
            ptr = self.ident()
            self.expect("=")
            return Store(ptr, self.operand(), line=line)
        if t.kind != "ident":
            raise self.fail("statement")
        dst = self.ident()
        self.expect("=")
        nxt = self.peek()
        if nxt.kind == "op" and nxt.text == "&":
            self.i += 1
            return AddrOf(dst, self.ident(), line=line)
        if nxt.kind == "op" and nxt.text == "*":
            self.i += 1
            return Load(dst, self.ident(), line=line)
        if nxt.kind == "op" and nxt.text in UNOPS:
            self.i += 1
            return Unary(dst, nxt.text, self.operand(), line=line)
        if nxt.kind == "kw" and nxt.text == "call":
            self.i += 1
            fname = self.ident()
            self.expect("(")
            args = []
            if self.peek().text != ")":
                args.append(self.operand())
                while self.peek().text == ",":
                    self.i += 1
                    args.append(self.operand())
            self.expect(")")
            return Call(dst, fname, tuple(args), line=line)
        if nxt.kind == "kw" and nxt.text == "phi":
            self.i += 1
            self.expect("(")
            incoming = [self._incoming()]
            while self.peek().text == ",":
                self.i += 1
                incoming.append(self._incoming())
            self.expect(")")
            return PhiNode(dst, tuple(incoming), line=line)
        lhs = self.operand()
        op = self.peek()
        if op.kind == "op" and op.text in BINOPS and not self._store_follows():
            self.i += 1
            return Binary(dst, op.text, lhs, self.operand(), line=line)
        return Assign(dst, lhs, line=line)

    def _store_follows(self) -> bool:
        # "x = a" followed by "*p = b": the '*' starts a store, not a product
        return (
            self.peek().text == "*"
            and self.peek(1).kind == "ident"
            and self.peek(2).text == "="
        )

    def _incoming(self):
        v = self.operand()
        self.expect(":")
        return (v, self.ident())


def parse_program(source: str) -> Program:
    p = _Parser(source)
    return p.program()


# ---------------------------------------------------------------------------
# CFG
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cfg:
    nodes: tuple
    edges: tuple
    entry: str
    exits: tuple

    def successors(self, label: str) -> list[str]:
        return [b for a, b in self.edges if a == label]

    def predecessors(self, label: str) -> list[str]:
        return [a for a, b in self.edges if b == label]


def build_cfg(f: Function) -> Cfg:
    edges = []
    exits = []
    for i, b in enumerate(f.blocks):
        t = b.terminator
        if isinstance(t, Goto):
            edges.append((b.label, t.target))
        elif isinstance(t, Branch):
            edges.append((b.label, t.target))
            if i + 1 < len(f.blocks):
                edges.append((b.label, f.blocks[i + 1].label))
        elif isinstance(t, Return):
            exits.append(b.label)
    return Cfg(tuple(b.label for b in f.blocks), tuple(edges), f.entry, tuple(exits))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _check_function(f: Function, prog: Program) -> None:
    where = f"func {f.name}"
    globals_ = set(prog.globals)
    funcs = {g.name for g in prog.functions}
    if len(set(f.params)) != len(f.params):
        raise ValidationError("duplicate parameter name", where)

    labels = [b.label for b in f.blocks]
    if len(set(labels)) != len(labels):
        dup = next(l for l in labels if labels.count(l) > 1)
        raise ValidationError(f"duplicate block label {dup!r}", where)
    label_set = set(labels)

    defs: dict[str, str] = {p: "parameter" for p in f.params}
    for b in f.blocks:
        for s in b.statements:
            d = defined_var(s)
            if d is None:
                continue
            if d in globals_ or d in funcs:
                raise ValidationError(f"{d!r} shadows a global or function name", f"{where}/{b.label}")
            if d in defs:
                raise ValidationError(f"duplicate SSA assignment to {d!r}", f"{where}/{b.label}")
            defs[d] = b.label

    for i, b in enumerate(f.blocks):
        bw = f"{where}/{b.label}"
        if b.terminator is None:
            raise ValidationError("block does not end in br/goto/return", bw)
        for s in b.body:
            if isinstance(s, TERMINATORS):
                raise ValidationError("terminator in the middle of a block", bw)
        seen_other = False
        for s in b.body:
            if isinstance(s, PhiNode):
                if seen_other:
                    raise ValidationError("phi after a non-phi statement", bw)
            else:
                seen_other = True
        t = b.terminator
        if isinstance(t, (Goto, Branch)) and t.target not in label_set:
            raise ValidationError(f"dangling label {t.target!r}", bw)
        if isinstance(t, Branch) and i + 1 == len(f.blocks):
            raise ValidationError("br in the last block has no fall-through", bw)
        for s in b.statements:
            for op in used_operands(s):
                if isinstance(op, int):
                    continue
                if op in funcs:
                    raise ValidationError(f"function {op!r} used as a value", bw)
                if op not in defs and op not in globals_:
                    raise ValidationError(f"undefined variable {op!r}", bw)
            if isinstance(s, AddrOf) and s.target in funcs:
                raise ValidationError(f"cannot take the address of function {s.target!r}", bw)
            if isinstance(s, Call) and (s.func in globals_ or s.func in defs):
                raise ValidationError(f"{s.func!r} is not a function", bw)
            if isinstance(s, Call) and s.func in funcs:
                callee = prog.function(s.func)
                if len(callee.params) != len(s.args):
                    raise ValidationError(
                        f"call to {s.func!r} with {len(s.args)} args, expected {len(callee.params)}", bw
                    )

    if not isinstance(f.blocks[-1].terminator, Return):
        raise ValidationError("missing return at the end of the function", where)

    cfg = build_cfg(f)
    reach = {f.entry}
    todo = [f.entry]
    while todo:
        for s in cfg.successors(todo.pop()):
            if s not in reach:
                reach.add(s)
                todo.append(s)
    for l in labels:
        if l not in reach:
            raise ValidationError(f"unreachable block {l!r}", where)

    for b in f.blocks:
        phis = b.phis
        if phis and b.label == f.entry:
            raise ValidationError("phi in the entry block", f"{where}/{b.label}")
        preds = cfg.predecessors(b.label)
        for phi in phis:
            inc = [l for _, l in phi.incoming]
            if len(set(inc)) != len(inc) or set(inc) != set(preds) or len(set(preds)) != len(preds):
                raise ValidationError(
                    f"phi {phi.dst!r} incoming labels {sorted(inc)} != predecessors {sorted(preds)}",
                    f"{where}/{b.label}",
                )


def validate(p: Program) -> None:
    """Raise :class:`ValidationError` unless ``p`` is well-formed SSA."""
    if len(set(p.globals)) != len(p.globals):
        raise ValidationError("duplicate global")
    names = [f.name for f in p.functions]
    if len(set(names)) != len(names):
        raise ValidationError("duplicate function name")
    clash = set(names) & set(p.globals)
    if clash:
        raise ValidationError(f"name used for both a global and a function: {sorted(clash)[0]!r}")
    for f in p.functions:
        _check_function(f, p)


def load_program(source: str) -> Program:
    """Parse and validate."""
    p = parse_program(source)
    validate(p)
    return p


# ---------------------------------------------------------------------------
# pretty printer
# ---------------------------------------------------------------------------

def format_stmt(s: Statement) -> str:
    if isinstance(s, Assign):
        return f"{s.dst} = {s.src}"
    if isinstance(s, AddrOf):
        return f"{s.dst} = &{s.target}"
    if isinstance(s, Load):
        return f"{s.dst} = *{s.ptr}"
    if isinstance(s, Store):
        return f"*{s.ptr} = {s.src}"
    if isinstance(s, Binary):
        return f"{s.dst} = {s.lhs} {s.op} {s.rhs}"
    if isinstance(s, Unary):
        return f"{s.dst} = {s.op}{s.operand}"
    if isinstance(s, Call):
        return f"{s.dst} = call {s.func}(" + ", ".join(str(a) for a in s.args) + ")"
    if isinstance(s, PhiNode):
        return f"{s.dst} = phi(" + ", ".join(f"{v}:{l}" for v, l in s.incoming) + ")"
    if isinstance(s, Branch):
        return f"br {s.cond}, {s.target}"
    if isinstance(s, Goto):
        return f"goto {s.target}"
    if isinstance(s, Return):
        return f"return {s.value}"
    raise TypeError(s)


def format_program(p: Program) -> str:
    out = [f"global {g}" for g in p.globals]
    for f in p.functions:
        if out:
            out.append("")
        out.append(f"func {f.name}(" + ", ".join(f.params) + ") {")
        for b in f.blocks:
            out.append(f"{b.label}:")
            out.extend("    " + format_stmt(s) for s in b.statements)
        out.append("}")
    return "\n".join(out) + "\n"
