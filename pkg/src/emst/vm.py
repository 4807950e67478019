"""Reference interpreter for machine images (the instruction-level machine)."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .isa import ADDR_MASK, MEM_WORDS, WORD_MASK, MachineImage, mnemonic_of, sext

HALTED = "Halted"
CYCLE_LIMIT = "CycleLimitExceeded"
HALTED_ON_INPUT = "HaltedOnInput"
ILLEGAL = "IllegalInstruction"


class InputExhausted(Exception):
    pass


class InputProvider:
    """Scripted per-port input streams with a delivery log.

    ``stream`` is a sequence of ``(port, word)`` pairs (or ``{"port", "word"}``
    dicts) consumed in order per port.
    """

    def __init__(self, stream: Iterable = (), mode: str = "scripted"):
        self.queues: dict[int, list[int]] = {}
        self.stream = []
        for item in stream:
            port, word = (item["port"], item["word"]) if isinstance(item, dict) else item
            if not 0 <= port < 8:
                raise ValueError(f"port {port} out of range")
            self.stream.append((port, word & WORD_MASK))
            self.queues.setdefault(port, []).append(word & WORD_MASK)
        self.pos = {p: 0 for p in self.queues}
        self.log: list[tuple[int, int, int]] = []  # (cycle, port, word)
        self.mode = mode

    def read(self, port: int, cycle: int) -> int:
        q = self.queues.get(port, [])
        i = self.pos.get(port, 0)
        if i >= len(q):
            word = self.more(port)
            if word is None:
                raise InputExhausted(port)
        else:
            word = q[i]
            self.pos[port] = i + 1
        self.log.append((cycle, port, word))
        return word

    def more(self, port: int) -> int | None:
        """Hook for live sources; scripted streams are simply exhausted."""
        return None

    def fresh(self) -> "InputProvider":
        """An unconsumed provider delivering the same words."""
        return InputProvider(self.stream, self.mode)

    def replay_stream(self) -> list[tuple[int, int]]:
        return [(p, w) for _, p, w in self.log]

    def digest(self) -> str:
        return hashlib.sha256(stream_to_json(self.stream).encode()).hexdigest()


def stream_to_json(stream) -> str:
    return json.dumps([{"port": p, "word": w} for p, w in stream], separators=(",", ":"))


def load_input_stream(path: str | Path) -> list[tuple[int, int]]:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, list):
        raise ValueError("input stream must be a JSON array")
    out = []
    for item in raw:
        if not isinstance(item, dict) or set(item) != {"port", "word"}:
            raise ValueError(f"bad input record {item!r}")
        out.append((int(item["port"]), int(item["word"]) & WORD_MASK))
    return out


@dataclass
class MachineState:
    pc: int = 0
    regs: list[int] = field(default_factory=lambda: [0] * 8)
    mem: list[int] = field(default_factory=lambda: [0] * MEM_WORDS)
    halted: bool = False
    cycle: int = 0

    @classmethod
    def from_image(cls, img: MachineImage) -> "MachineState":
        return cls(pc=img.entry_point, mem=list(img.words))

    def copy(self) -> "MachineState":
        return MachineState(self.pc, list(self.regs), list(self.mem), self.halted, self.cycle)

    def key(self) -> tuple:
        return (self.pc, tuple(self.regs), tuple(self.mem), self.halted, self.cycle)


@dataclass(frozen=True)
class ArchEvent:
    cycle: int
    pc: int
    kind: str  # reg | mem | out | in | branch | halt | trap
    target: str
    value: int | str

    def to_json(self) -> str:
        return json.dumps({"c": self.cycle, "pc": self.pc, "k": self.kind, "t": self.target, "v": self.value},
                          separators=(",", ":"))


class Trap(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


def step(s: MachineState, inp: InputProvider) -> tuple[MachineState, list[ArchEvent]]:
    """Execute one instruction in place; returns ``(s, events)``.

    Raises :class:`Trap` for exhausted input and illegal opcodes; the state is
    left as it was before the trapping instruction, marked halted.
    """
    if s.halted:
        raise ValueError("machine is halted")
    pc = s.pc
    w = s.mem[pc]
    op = w >> 12
    rd, rs, rt = (w >> 9) & 7, (w >> 6) & 7, (w >> 3) & 7
    regs = s.regs
    c = s.cycle
    ev: list[ArchEvent] = []
    nxt = (pc + 1) & ADDR_MASK

    def wreg(r: int, v: int):
        if r:
            regs[r] = v & WORD_MASK
            ev.append(ArchEvent(c, pc, "reg", f"r{r}", regs[r]))

    if op == 0:
        s.halted = True
        ev.append(ArchEvent(c, pc, "halt", "", 0))
        nxt = pc
    elif op == 1:
        wreg(rd, sext(w, 9))
    elif op == 2:
        wreg(rd, s.mem[(regs[rs] + sext(w, 6)) & ADDR_MASK])
    elif op == 3:
        a = (regs[rs] + sext(w, 6)) & ADDR_MASK
        s.mem[a] = regs[rd]
        ev.append(ArchEvent(c, pc, "mem", str(a), regs[rd]))
    elif op == 4:
        wreg(rd, regs[rs] + regs[rt])
    elif op == 5:
        wreg(rd, regs[rs] - regs[rt])
    elif op == 6:
        wreg(rd, regs[rs] & regs[rt])
    elif op == 7:
        wreg(rd, regs[rs] | regs[rt])
    elif op == 8:
        wreg(rd, regs[rs] ^ regs[rt])
    elif op == 9:
        wreg(rd, ~regs[rs])
    elif op == 10:
        nxt = w & 0xFFF
        ev.append(ArchEvent(c, pc, "branch", "taken", nxt))
    elif op in (11, 12):
        cond = regs[rd] == 0 if op == 11 else bool(regs[rd] & 0x8000)
        if cond:
            nxt = w & 0x1FF
        ev.append(ArchEvent(c, pc, "branch", "taken" if cond else "not-taken", nxt))
    elif op == 13:
        try:
            v = inp.read(w & 7, c)
        except InputExhausted:
            s.halted = True
            raise Trap(HALTED_ON_INPUT) from None
        ev.append(ArchEvent(c, pc, "in", str(w & 7), v))
        wreg(rd, v)
    elif op == 14:
        ev.append(ArchEvent(c, pc, "out", str(w & 7), regs[rd]))
    else:
        s.halted = True
        raise Trap(ILLEGAL)
    s.pc = nxt
    s.cycle = c + 1
    return s, ev


@dataclass
class RunResult:
    state: MachineState
    events: list[ArchEvent]
    halt_reason: str
    outputs: list[tuple[int, int]]
    deliveries: list[tuple[int, int, int]]
    boundaries: list[tuple] | None = None
    in_cycles: list[int] = field(default_factory=list)  # trace cycle of each input delivery

    def output_words(self, port: int = 0) -> list[int]:
        return [w for p, w in self.outputs if p == port]

    def event_log(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)


def run(img: MachineImage, inp: InputProvider | None = None, max_cycles: int = 1_000_000,
        record_boundaries: bool = False, state: MachineState | None = None) -> RunResult:
    """Step until halt, trap or the cycle cap.  Deterministic in ``(img, inp)``."""
    if max_cycles <= 0:
        raise ValueError("max_cycles must be positive")
    inp = inp if inp is not None else InputProvider()
    s = state if state is not None else MachineState.from_image(img)
    events: list[ArchEvent] = []
    outputs = []
    bounds = [] if record_boundaries else None
    reason = CYCLE_LIMIT
    while s.cycle < max_cycles:
        try:
            _, ev = step(s, inp)
        except Trap as t:
            reason = t.reason
            events.append(ArchEvent(s.cycle, s.pc, "trap", t.reason, 0))
            break
        events.extend(ev)
        for e in ev:
            if e.kind == "out":
                outputs.append((int(e.target), e.value))
        if bounds is not None:
            bounds.append(s.key())
        if s.halted:
            reason = HALTED
            break
    return RunResult(s, events, reason, outputs, list(inp.log), bounds, [c for c, _, _ in inp.log])


def describe(word: int) -> str:
    return mnemonic_of(word)
