"""Frontend for the ``.mhl`` mini-language: lexer, parser, checker, printer.

Programs are a list of ``var`` declarations followed by statements.  The only
control constructs are ``if``/``else``, ``while`` and ``repeat``/``until``.
Integers are 16-bit two's complement words and every operation wraps.

Comparisons are defined by the sign or zero test of a wrapped difference,
which is exactly what the compiled ``SUB`` + ``JN``/``JZ`` sequence computes::

    a <  b   <=>  bit15(a - b)        a >= b  <=>  not bit15(a - b)
    a >  b   <=>  bit15(b - a)        a <= b  <=>  not bit15(b - a)
    a =  b   <=>  (a - b) == 0        a != b  <=>  (a - b) != 0

For operands whose true difference fits in 16 signed bits this coincides with
ordinary signed comparison.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

WORD_MASK = 0xFFFF
MAX_EXPR_DEPTH = 6
DEFAULT_PORT = 0


class LangError(Exception):
    """Base class for frontend errors."""


class LangSyntaxError(LangError):
    def __init__(self, line: int, col: int, expected: str):
        self.line = line
        self.col = col
        self.expected = expected
        super().__init__(f"{line}:{col}: expected {expected}")


class SemanticError(LangError):
    def __init__(self, message: str, name: str, line: int):
        self.name = name
        self.line = line
        super().__init__(f"line {line}: {message}")


class UndeclaredVariable(SemanticError):
    def __init__(self, name: str, line: int):
        super().__init__(f"undeclared variable {name!r}", name, line)


class DuplicateDeclaration(SemanticError):
    def __init__(self, name: str, line: int):
        super().__init__(f"duplicate declaration of {name!r}", name, line)


class KindMismatch(SemanticError):
    pass


class ExpressionTooDeep(SemanticError):
    pass


# ---------------------------------------------------------------- AST nodes
# ``line`` is carried for source maps but excluded from structural equality.


@dataclass(frozen=True)
class Num:
    value: int
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Index:
    name: str
    index: "Expr"
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str  # + - < > = <= >= != and or
    left: "Expr"
    right: "Expr"
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Not:
    operand: "Expr"
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expr"
    line: int = field(default=0, compare=False)


Expr = Union[Num, Var, Index, BinOp, Not, Neg]
LValue = Union[Var, Index]


@dataclass(frozen=True)
class Assign:
    target: LValue
    value: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple
    orelse: tuple = ()
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class RepeatUntil:
    body: tuple
    cond: Expr
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Swap:
    a: LValue
    b: LValue
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Read:
    target: LValue
    port: int = DEFAULT_PORT
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Write:
    value: Expr
    port: int = DEFAULT_PORT
    line: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Halt:
    line: int = field(default=0, compare=False)


Stmt = Union[Assign, If, While, RepeatUntil, Swap, Read, Write, Halt]


@dataclass(frozen=True)
class Decl:
    name: str
    size: int | None = None  # None for scalars
    line: int = field(default=0, compare=False)

    @property
    def kind(self) -> str:
        return "scalar" if self.size is None else "array"


@dataclass(frozen=True)
class Ast:
    declarations: tuple
    statements: tuple


@dataclass(frozen=True)
class SourceProgram:
    text: str
    name: str = "program"

    def __post_init__(self):
        if not self.text:
            raise ValueError("source text must be non-empty")


@dataclass(frozen=True)
class Symbol:
    kind: str  # "scalar" | "array"
    size: int  # words of storage
    line: int


@dataclass
class CheckedProgram:
    ast: Ast
    symbol_table: dict[str, Symbol]
    source_map: dict[tuple[int, ...], int]  # statement path -> source line
    name: str = "program"
    last_line: int = 1


# ---------------------------------------------------------------- lexer

KEYWORDS = {"var", "if", "else", "while", "repeat", "until", "swap", "read", "write", "halt", "and", "or", "not"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>0[xX][0-9A-Fa-f]+|[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><=|>=|!=|≤|≥|≠|[-+<>=;,\[\]{}()])
    """,
    re.VERBOSE,
)

_UNICODE_OPS = {"≤": "<=", "≥": ">=", "≠": "!="}


@dataclass(frozen=True)
class Token:
    kind: str  # num | ident | kw | op | eof
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise LangSyntaxError(line, col, "a token")
        kind = m.lastgroup
        s = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "ident":
            tokens.append(Token("kw" if s in KEYWORDS else "ident", s, line, col))
        elif kind == "num":
            tokens.append(Token("num", s, line, col))
        elif kind == "op":
            tokens.append(Token("op", _UNICODE_OPS.get(s, s), line, col))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


# ---------------------------------------------------------------- parser

_CMP_OPS = ("<", ">", "=", "<=", ">=", "!=")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def error(self, expected: str):
        t = self.tok
        raise LangSyntaxError(t.line, t.col, expected)

    def at(self, text: str) -> bool:
        t = self.tok
        return t.kind in ("op", "kw") and t.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(repr(text))
        t = self.tok
        self.i += 1
        return t

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error("identifier")
        t = self.tok
        self.i += 1
        return t

    def integer(self, limit: int = WORD_MASK) -> int:
        t = self.tok
        if t.kind != "num":
            self.error("integer")
        value = int(t.text, 0) if t.text.lower().startswith("0x") else int(t.text)
        if value > limit:
            self.error(f"integer <= {limit}")
        self.i += 1
        return value

    def program(self) -> Ast:
        decls = []
        while self.at("var"):
            kw = self.expect("var")
            name = self.ident().text
            size = None
            if self.at("["):
                self.i += 1
                size = self.integer(4096)
                if size < 1:
                    self.i -= 1
                    self.error("array size >= 1")
                self.expect("]")
            self.expect(";")
            decls.append(Decl(name, size, line=kw.line))
        stmts = self.block_until_eof()
        return Ast(tuple(decls), stmts)

    def block_until_eof(self) -> tuple:
        stmts = []
        while self.tok.kind != "eof":
            stmts.append(self.statement())
        return tuple(stmts)

    def block(self) -> tuple:
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("'}'")
            stmts.append(self.statement())
        self.expect("}")
        return tuple(stmts)

    def lvalue(self) -> LValue:
        t = self.ident()
        if self.at("["):
            self.i += 1
            idx = self.expr()
            self.expect("]")
            return Index(t.text, idx, line=t.line)
        return Var(t.text, line=t.line)

    def port(self) -> int:
        if self.at(","):
            self.i += 1
            return self.integer(7)
        return DEFAULT_PORT

    def statement(self) -> Stmt:
        t = self.tok
        line = t.line
        if t.kind == "ident":
            target = self.lvalue()
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return Assign(target, value, line=line)
        if t.kind != "kw":
            self.error("statement")
        kw = t.text
        self.i += 1
        if kw == "if":
            cond = self.expr()
            then = self.block()
            orelse = ()
            if self.at("else"):
                self.i += 1
                orelse = self.block()
            return If(cond, then, orelse, line=line)
        if kw == "while":
            cond = self.expr()
            return While(cond, self.block(), line=line)
        if kw == "repeat":
            body = self.block()
            self.expect("until")
            cond = self.expr()
            self.expect(";")
            return RepeatUntil(body, cond, line=line)
        if kw == "swap":
            a = self.lvalue()
            self.expect(",")
            b = self.lvalue()
            self.expect(";")
            return Swap(a, b, line=line)
        if kw == "read":
            target = self.lvalue()
            port = self.port()
            self.expect(";")
            return Read(target, port, line=line)
        if kw == "write":
            value = self.expr()
            port = self.port()
            self.expect(";")
            return Write(value, port, line=line)
        if kw == "halt":
            self.expect(";")
            return Halt(line=line)
        self.i -= 1
        self.error("statement")

    def expr(self) -> Expr:
        left = self.and_expr()
        while self.at("or"):
            t = self.expect("or")
            left = BinOp("or", left, self.and_expr(), line=t.line)
        return left

    def and_expr(self) -> Expr:
        left = self.not_expr()
        while self.at("and"):
            t = self.expect("and")
            left = BinOp("and", left, self.not_expr(), line=t.line)
        return left

    def not_expr(self) -> Expr:
        if self.at("not"):
            t = self.expect("not")
            return Not(self.not_expr(), line=t.line)
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.additive()
        t = self.tok
        if t.kind == "op" and t.text in _CMP_OPS:
            self.i += 1
            return BinOp(t.text, left, self.additive(), line=t.line)
        return left

    def additive(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            t = self.tok
            self.i += 1
            left = BinOp(t.text, left, self.unary(), line=t.line)
        return left

    def unary(self) -> Expr:
        if self.at("-"):
            t = self.expect("-")
            return Neg(self.unary(), line=t.line)
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            return Num(self.integer(), line=t.line)
        if t.kind == "ident":
            return self.lvalue()
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        self.error("expression")


def parse(src: SourceProgram | str | bytes) -> Ast:
    """Parse source text into an :class:`Ast`.

    Any input, including arbitrary bytes, yields either an ``Ast`` or a
    :class:`LangSyntaxError`.
    """
    if isinstance(src, SourceProgram):
        src = src.text
    if isinstance(src, (bytes, bytearray)):
        try:
            src = bytes(src).decode("utf-8")
        except UnicodeDecodeError as exc:
            prefix = bytes(src)[: exc.start].decode("utf-8")
            line = prefix.count("\n") + 1
            raise LangSyntaxError(line, len(prefix) - prefix.rfind("\n"), "valid UTF-8") from None
    tokens = tokenize(src)
    try:
        return _Parser(tokens).program()
    except RecursionError:
        raise LangSyntaxError(1, 1, "less deeply nested input") from None


# ---------------------------------------------------------------- analysis


def expr_depth(e: Expr) -> int:
    if isinstance(e, (Num, Var)):
        return 1
    if isinstance(e, Index):
        return 1 + expr_depth(e.index)
    if isinstance(e, (Not, Neg)):
        return 1 + expr_depth(e.operand)
    return 1 + max(expr_depth(e.left), expr_depth(e.right))


def iter_statements(stmts: tuple, path: tuple = ()) -> Iterator[tuple[tuple[int, ...], Stmt]]:
    """Yield ``(path, stmt)`` for every statement, pre-order."""
    for k, s in enumerate(stmts):
        p = path + (k,)
        yield p, s
        if isinstance(s, If):
            yield from iter_statements(s.then, p + (0,))
            yield from iter_statements(s.orelse, p + (1,))
        elif isinstance(s, (While, RepeatUntil)):
            yield from iter_statements(s.body, p + (0,))


def _stmt_exprs(s: Stmt) -> list[Expr]:
    if isinstance(s, Assign):
        return [s.target, s.value]
    if isinstance(s, (If, While, RepeatUntil)):
        return [s.cond]
    if isinstance(s, Swap):
        return [s.a, s.b]
    if isinstance(s, Read):
        return [s.target]
    if isinstance(s, Write):
        return [s.value]
    return []


def _walk(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Index):
        yield from _walk(e.index)
    elif isinstance(e, (Not, Neg)):
        yield from _walk(e.operand)
    elif isinstance(e, BinOp):
        yield from _walk(e.left)
        yield from _walk(e.right)


def analyze(ast: Ast, name: str = "program", last_line: int | None = None) -> CheckedProgram:
    """Build the symbol table and reject undeclared, duplicate or misused names."""
    symbols: dict[str, Symbol] = {}
    for d in ast.declarations:
        if d.name in symbols:
            raise DuplicateDeclaration(d.name, d.line)
        symbols[d.name] = Symbol(d.kind, d.size or 1, d.line)

    source_map = {}
    max_line = max([d.line for d in ast.declarations] + [1])
    for path, s in iter_statements(ast.statements):
        source_map[path] = s.line
        max_line = max(max_line, s.line)
        for top in _stmt_exprs(s):
            if expr_depth(top) > MAX_EXPR_DEPTH:
                raise ExpressionTooDeep(f"expression deeper than {MAX_EXPR_DEPTH}", "", s.line)
            for e in _walk(top):
                if isinstance(e, (Var, Index)):
                    sym = symbols.get(e.name)
                    if sym is None:
                        raise UndeclaredVariable(e.name, e.line or s.line)
                    want = "array" if isinstance(e, Index) else "scalar"
                    if sym.kind != want:
                        raise KindMismatch(f"{e.name!r} is declared as {sym.kind}", e.name, e.line or s.line)
    return CheckedProgram(ast, symbols, source_map, name=name, last_line=last_line or max_line)


def check_source(src: SourceProgram | str) -> CheckedProgram:
    """``parse`` followed by ``analyze``."""
    if isinstance(src, str):
        src = SourceProgram(src)
    return analyze(parse(src), src.name, last_line=src.text.count("\n") + 1)


# ---------------------------------------------------------------- printer

_PREC = {"or": 1, "and": 2, "not": 3, "<": 4, ">": 4, "=": 4, "<=": 4, ">=": 4, "!=": 4, "+": 5, "-": 5, "neg": 6}


def _fmt_expr(e: Expr, parent: int = 0, right_side: bool = False) -> str:
    if isinstance(e, Num):
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{e.name}[{_fmt_expr(e.index)}]"
    if isinstance(e, Not):
        s = f"not {_fmt_expr(e.operand, _PREC['not'])}"
        return f"({s})" if parent > _PREC["not"] else s
    if isinstance(e, Neg):
        s = f"-{_fmt_expr(e.operand, _PREC['neg'])}"
        return f"({s})" if parent > _PREC["neg"] else s
    p = _PREC[e.op]
    if p == 4:
        # comparisons do not chain
        s = f"{_fmt_expr(e.left, p + 1)} {e.op} {_fmt_expr(e.right, p + 1)}"
    else:
        s = f"{_fmt_expr(e.left, p)} {e.op} {_fmt_expr(e.right, p, True)}"
    if parent > p or (right_side and parent == p):
        return f"({s})"
    return s


def _fmt_port(port: int) -> str:
    return "" if port == DEFAULT_PORT else f", {port}"


def _fmt_block(stmts: tuple, indent: int, out: list[str]):
    pad = "    " * indent
    for s in stmts:
        if isinstance(s, Assign):
            out.append(f"{pad}{_fmt_expr(s.target)} = {_fmt_expr(s.value)};")
        elif isinstance(s, If):
            out.append(f"{pad}if {_fmt_expr(s.cond)} {{")
            _fmt_block(s.then, indent + 1, out)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _fmt_block(s.orelse, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while {_fmt_expr(s.cond)} {{")
            _fmt_block(s.body, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, RepeatUntil):
            out.append(f"{pad}repeat {{")
            _fmt_block(s.body, indent + 1, out)
            out.append(f"{pad}}} until {_fmt_expr(s.cond)};")
        elif isinstance(s, Swap):
            out.append(f"{pad}swap {_fmt_expr(s.a)}, {_fmt_expr(s.b)};")
        elif isinstance(s, Read):
            out.append(f"{pad}read {_fmt_expr(s.target)}{_fmt_port(s.port)};")
        elif isinstance(s, Write):
            out.append(f"{pad}write {_fmt_expr(s.value)}{_fmt_port(s.port)};")
        elif isinstance(s, Halt):
            out.append(f"{pad}halt;")


def pretty_print(ast: Ast, name: str = "program") -> SourceProgram:
    out = []
    for d in ast.declarations:
        out.append(f"var {d.name};" if d.size is None else f"var {d.name}[{d.size}];")
    _fmt_block(ast.statements, 0, out)
    return SourceProgram("\n".join(out) + "\n", name)
