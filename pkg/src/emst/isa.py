"""Instruction set, assembly text format, assembler and disassembler.

Word layout (16 bits)::

    [15:12] opcode
    R  rd [11:9]  rs [8:6]  rt [5:3]
    I  rd [11:9]  simm9 [8:0]
    M  rd [11:9]  rs [8:6]  simm6 [5:0]       LOAD / STORE
    J  addr12 [11:0]
    C  rd [11:9]  addr9 [8:0]                JZ / JN
    P  rd [11:9]  port3 [2:0]                IN / OUT
"""

from __future__ import annotations

import hashlib
import json
import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

MEM_WORDS = 4096
ADDR_MASK = 0xFFF
WORD_MASK = 0xFFFF
IMAGE_MAGIC = b"EMST"
IMAGE_VERSION = 1

OPCODES = {
    "HALT": 0,
    "LOADI": 1,
    "LOAD": 2,
    "STORE": 3,
    "ADD": 4,
    "SUB": 5,
    "AND": 6,
    "OR": 7,
    "XOR": 8,
    "NOT": 9,
    "JMP": 10,
    "JZ": 11,
    "JN": 12,
    "IN": 13,
    "OUT": 14,
}
MNEMONICS = {v: k for k, v in OPCODES.items()}
ILLEGAL_OPCODE = 15

FORMATS = {
    "HALT": "",
    "LOADI": "I",
    "LOAD": "M",
    "STORE": "M",
    "ADD": "R",
    "SUB": "R",
    "AND": "R",
    "OR": "R",
    "XOR": "R",
    "NOT": "R2",
    "JMP": "J",
    "JZ": "C",
    "JN": "C",
    "IN": "P",
    "OUT": "P",
}


class AsmError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class UndefinedLabel(AsmError):
    pass


class DuplicateLabel(AsmError):
    pass


class ImmediateOutOfRange(AsmError):
    pass


class AsmSyntaxError(AsmError):
    pass


class ImageFormatError(Exception):
    pass


def sext(value: int, bits: int) -> int:
    """Sign-extend ``value`` of width ``bits`` to a Python int."""
    value &= (1 << bits) - 1
    return value - (1 << bits) if value >> (bits - 1) else value


def to_signed(word: int) -> int:
    return sext(word, 16)


# ---------------------------------------------------------------- encoding


def encode(mnemonic: str, *operands: int) -> int:
    """Encode one instruction from already-resolved integer operands."""
    op = OPCODES[mnemonic]
    fmt = FORMATS[mnemonic]
    word = op << 12
    if fmt == "":
        return word
    if fmt == "R":
        rd, rs, rt = operands
        return word | _reg(rd) << 9 | _reg(rs) << 6 | _reg(rt) << 3
    if fmt == "R2":
        rd, rs = operands
        return word | _reg(rd) << 9 | _reg(rs) << 6
    if fmt == "I":
        rd, imm = operands
        return word | _reg(rd) << 9 | _signed_field(imm, 9)
    if fmt == "M":
        rd, rs, imm = operands
        return word | _reg(rd) << 9 | _reg(rs) << 6 | _signed_field(imm, 6)
    if fmt == "J":
        (addr,) = operands
        return word | _unsigned_field(addr, 12)
    if fmt == "C":
        rd, addr = operands
        return word | _reg(rd) << 9 | _unsigned_field(addr, 9)
    if fmt == "P":
        rd, port = operands
        return word | _reg(rd) << 9 | _unsigned_field(port, 3)
    raise AssertionError(fmt)


def _reg(r: int) -> int:
    if not 0 <= r < 8:
        raise ImmediateOutOfRange(f"register r{r} does not exist")
    return r


def _signed_field(v: int, bits: int) -> int:
    lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    if not lo <= v <= hi:
        raise ImmediateOutOfRange(f"immediate {v} outside [{lo}, {hi}]")
    return v & ((1 << bits) - 1)


def _unsigned_field(v: int, bits: int) -> int:
    if not 0 <= v < (1 << bits):
        raise ImmediateOutOfRange(f"value {v} outside [0, {(1 << bits) - 1}]")
    return v


@dataclass(frozen=True)
class Decoded:
    mnemonic: str
    operands: tuple[int, ...]


def decode(word: int) -> Decoded | None:
    """Decode a word; ``None`` if it is not the canonical encoding of an instruction."""
    op = word >> 12
    mnemonic = MNEMONICS.get(op)
    if mnemonic is None:
        return None
    fmt = FORMATS[mnemonic]
    rd, rs, rt = (word >> 9) & 7, (word >> 6) & 7, (word >> 3) & 7
    if fmt == "":
        ops = ()
    elif fmt == "R":
        ops = (rd, rs, rt)
    elif fmt == "R2":
        ops = (rd, rs)
    elif fmt == "I":
        ops = (rd, sext(word, 9))
    elif fmt == "M":
        ops = (rd, rs, sext(word, 6))
    elif fmt == "J":
        ops = (word & 0xFFF,)
    elif fmt == "C":
        ops = (rd, word & 0x1FF)
    else:
        ops = (rd, word & 7)
    if encode(mnemonic, *ops) != word:
        return None
    return Decoded(mnemonic, ops)


def mnemonic_of(word: int) -> str:
    """Opcode mnemonic as the hardware sees it (ignores unused bits)."""
    return MNEMONICS.get(word >> 12, "ILLEGAL")


def format_instruction(d: Decoded) -> str:
    fmt = FORMATS[d.mnemonic]
    o = d.operands
    if fmt == "":
        return d.mnemonic
    if fmt == "R":
        return f"{d.mnemonic} r{o[0]}, r{o[1]}, r{o[2]}"
    if fmt == "R2":
        return f"{d.mnemonic} r{o[0]}, r{o[1]}"
    if fmt == "I":
        return f"{d.mnemonic} r{o[0]}, {o[1]}"
    if fmt == "M":
        off = f"+{o[2]}" if o[2] >= 0 else str(o[2])
        return f"{d.mnemonic} r{o[0]}, [r{o[1]}{off}]"
    if fmt == "J":
        return f"{d.mnemonic} {o[0]}"
    return f"{d.mnemonic} r{o[0]}, {o[1]}"


# ---------------------------------------------------------------- assembly program


@dataclass(frozen=True)
class AsmLine:
    """One assembly item: an instruction or a ``.word``/``.space`` directive.

    Operands are kept as text tokens (``"r1"``, ``"5"``, ``"loop"``, ``"[r2+3]"``)
    so that label references survive until assembly.
    """

    mnemonic: str
    operands: tuple[str, ...] = ()
    label: str | None = None
    source_line: int | None = None
    comment: str | None = None

    @property
    def is_directive(self) -> bool:
        return self.mnemonic.startswith(".")

    def size(self) -> int:
        if self.mnemonic == ".space":
            return int(self.operands[0], 0)
        if self.mnemonic == ".word":
            return len(self.operands)
        if self.mnemonic == ".entry" or self.mnemonic == ".label":
            return 0
        return 1

    def render(self) -> str:
        head = f"{self.label}:" if self.label else ""
        body = self.mnemonic
        if self.operands:
            body += " " + ", ".join(self.operands)
        if self.mnemonic == ".label":
            body = ""
        text = f"{head:<12}{body}" if body else head
        notes = []
        if self.source_line is not None:
            notes.append(f"src:{self.source_line}")
        if self.comment:
            notes.append(self.comment)
        if notes:
            text = f"{text:<36}; {' '.join(notes)}"
        return text.rstrip()


@dataclass
class AssemblyProgram:
    lines: list[AsmLine]
    entry: str | int = 0

    @property
    def data_directives(self) -> list[tuple[str | None, int | tuple[int, ...]]]:
        out = []
        for ln in self.lines:
            if ln.mnemonic == ".space":
                out.append((ln.label, int(ln.operands[0], 0)))
            elif ln.mnemonic == ".word":
                out.append((ln.label, tuple(int(x, 0) & WORD_MASK for x in ln.operands)))
        return out

    def render(self) -> str:
        body = [ln.render() for ln in self.lines]
        return "\n".join(body) + "\n"

    def instructions(self) -> list[AsmLine]:
        return [ln for ln in self.lines if not ln.is_directive]


_LINE_RE = re.compile(r"^\s*(?:(?P<label>[A-Za-z_.$][\w.$]*)\s*:)?\s*(?P<body>[^;]*?)\s*(?:;\s?(?P<comment>.*))?$")
_SRC_RE = re.compile(r"\bsrc:(\d+)\b")


def parse_assembly(text: str) -> AssemblyProgram:
    """Parse assembly text. Each item keeps its text line number as ``asm line``."""
    lines = []
    entry: str | int = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        m = _LINE_RE.match(raw)
        if m is None:
            raise AsmSyntaxError(f"cannot parse {raw!r}", lineno)
        label, body, comment = m.group("label"), m.group("body"), m.group("comment")
        src = None
        if comment:
            sm = _SRC_RE.search(comment)
            if sm:
                src = int(sm.group(1))
                comment = (comment[: sm.start()] + comment[sm.end():]).strip() or None
        if not body:
            if label:
                lines.append(AsmLine(".label", (), label, src, comment))
            else:
                # keep line numbering aligned with the text
                lines.append(AsmLine(".label", (), None, None, comment))
            continue
        parts = body.split(None, 1)
        mnemonic = parts[0].upper() if not parts[0].startswith(".") else parts[0].lower()
        operands = tuple(o.strip() for o in _split_operands(parts[1])) if len(parts) > 1 else ()
        if mnemonic == ".entry":
            entry = _int_or_label(operands[0])
        if not mnemonic.startswith(".") and mnemonic not in OPCODES:
            raise AsmSyntaxError(f"unknown mnemonic {parts[0]!r}", lineno)
        lines.append(AsmLine(mnemonic, operands, label, src, comment))
    return AssemblyProgram(lines, entry)


def _split_operands(s: str) -> list[str]:
    return [p for p in (x.strip() for x in s.split(",")) if p]


def _int_or_label(tok: str) -> int | str:
    try:
        return int(tok, 0)
    except ValueError:
        return tok


# ---------------------------------------------------------------- machine image


@dataclass
class MachineImage:
    words: list[int]
    entry_point: int = 0
    source_map: dict[int, tuple[int, int | None]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.words) != MEM_WORDS:
            raise ValueError(f"image must hold {MEM_WORDS} words")
        if not 0 <= self.entry_point < MEM_WORDS:
            raise ValueError("entry point out of range")

    def to_bytes(self) -> bytes:
        head = IMAGE_MAGIC + bytes([IMAGE_VERSION]) + struct.pack(">H", self.entry_point)
        body = struct.pack(f">{MEM_WORDS}H", *self.words)
        smap = {str(a): [asm, src] for a, (asm, src) in sorted(self.source_map.items())}
        blob = json.dumps(smap, separators=(",", ":"), sort_keys=False).encode()
        return head + body + blob

    @classmethod
    def from_bytes(cls, data: bytes) -> "MachineImage":
        if data[:4] != IMAGE_MAGIC:
            raise ImageFormatError("bad magic")
        if len(data) < 7 + 2 * MEM_WORDS or data[4] != IMAGE_VERSION:
            raise ImageFormatError("truncated image or unsupported version")
        (entry,) = struct.unpack(">H", data[5:7])
        words = list(struct.unpack(f">{MEM_WORDS}H", data[7 : 7 + 2 * MEM_WORDS]))
        blob = data[7 + 2 * MEM_WORDS :]
        smap = {}
        if blob:
            try:
                raw = json.loads(blob.decode())
            except (UnicodeDecodeError, json.JSONDecodeError) as exc:
                raise ImageFormatError(f"corrupt source map: {exc}") from None
            smap = {int(a): (v[0], v[1]) for a, v in raw.items()}
        return cls(words, entry, smap)

    def save(self, path: str | Path):
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "MachineImage":
        return cls.from_bytes(Path(path).read_bytes())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    def with_words(self, patch: dict[int, int]) -> "MachineImage":
        words = list(self.words)
        for a, w in patch.items():
            words[a] = w & WORD_MASK
        return MachineImage(words, self.entry_point, dict(self.source_map))


# ---------------------------------------------------------------- assembler

_MEM_RE = re.compile(r"^\[\s*r([0-7])\s*(?:([+-])\s*([\w$.]+))?\s*\]$", re.IGNORECASE)


def layout(prog: AssemblyProgram) -> dict[str, int]:
    """Assign addresses to labels."""
    labels: dict[str, int] = {}
    addr = 0
    for k, ln in enumerate(prog.lines):
        if ln.label:
            if ln.label in labels:
                raise DuplicateLabel(f"label {ln.label!r} defined twice", k + 1)
            labels[ln.label] = addr
        addr += ln.size()
    if addr > MEM_WORDS:
        raise ImmediateOutOfRange(f"program needs {addr} words; memory holds {MEM_WORDS}")
    return labels


def assemble(prog: AssemblyProgram) -> MachineImage:
    """Encode an assembly program bit-exactly into a 4096-word image."""
    labels = layout(prog)

    def value(tok: str, lineno: int) -> int:
        try:
            return int(tok, 0)
        except ValueError:
            pass
        if tok not in labels:
            raise UndefinedLabel(f"undefined label {tok!r}", lineno)
        return labels[tok]

    def reg(tok: str, lineno: int) -> int:
        t = tok.lower()
        if len(t) == 2 and t[0] == "r" and t[1] in "01234567":
            return int(t[1])
        raise AsmSyntaxError(f"expected register, got {tok!r}", lineno)

    words = [0] * MEM_WORDS
    smap = {}
    addr = 0
    for k, ln in enumerate(prog.lines):
        lineno = k + 1
        m = ln.mnemonic
        if m == ".space":
            addr += int(ln.operands[0], 0)
            continue
        if m == ".word":
            for tok in ln.operands:
                words[addr] = value(tok, lineno) & WORD_MASK
                addr += 1
            continue
        if m.startswith("."):
            continue
        fmt = FORMATS[m]
        ops = ln.operands
        expected = {"": 0, "R": 3, "R2": 2, "I": 2, "M": 2, "J": 1, "C": 2, "P": 2}[fmt]
        if len(ops) != expected:
            raise AsmSyntaxError(f"{m} takes {expected} operands", lineno)
        try:
            if fmt == "":
                w = encode(m)
            elif fmt == "R":
                w = encode(m, *(reg(o, lineno) for o in ops))
            elif fmt == "R2":
                w = encode(m, reg(ops[0], lineno), reg(ops[1], lineno))
            elif fmt == "I":
                w = encode(m, reg(ops[0], lineno), value(ops[1], lineno))
            elif fmt == "M":
                mm = _MEM_RE.match(ops[1].replace(" ", ""))
                if mm is None:
                    raise AsmSyntaxError(f"bad memory operand {ops[1]!r}", lineno)
                off = value(mm.group(3), lineno) if mm.group(3) else 0
                if mm.group(2) == "-":
                    off = -off
                w = encode(m, reg(ops[0], lineno), int(mm.group(1)), off)
            elif fmt == "J":
                w = encode(m, value(ops[0], lineno))
            else:
                w = encode(m, reg(ops[0], lineno), value(ops[1], lineno))
        except ImmediateOutOfRange as exc:
            raise ImmediateOutOfRange(str(exc), lineno) from None
        words[addr] = w
        smap[addr] = (lineno, ln.source_line)
        addr += 1
    entry = prog.entry if isinstance(prog.entry, int) else value(prog.entry, None)
    return MachineImage(words, entry, smap)


def disassemble(img: MachineImage) -> AssemblyProgram:
    """Render every word as an instruction, or as ``.word`` if it is not a canonical encoding."""
    lines = []
    if img.entry_point:
        lines.append(AsmLine(".entry", (str(img.entry_point),)))
    for addr, w in enumerate(img.words):
        d = decode(w)
        src = img.source_map.get(addr, (None, None))[1]
        if d is None:
            lines.append(AsmLine(".word", (f"0x{w:04X}",), source_line=src))
        else:
            text = format_instruction(d)
            parts = text.split(None, 1)
            ops = tuple(_split_operands(parts[1])) if len(parts) > 1 else ()
            lines.append(AsmLine(parts[0], ops, source_line=src))
    return AssemblyProgram(lines, img.entry_point)
