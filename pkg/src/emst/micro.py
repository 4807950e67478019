"""Microcoded CPU: a gate-level datapath driven by a behavioral control unit.

The datapath (registers, register file, ALU, bus, immediate decoder and the
branch-qualified PC load) is a :class:`~emst.netlist.Netlist` assembled from
the standard blocks.  The control unit (micro-pc, microcode ROM, halt flag)
and the 4096-word memory are behavioral.  At switch fidelity the whole
datapath is expanded to FETs and settled at switch level.

One clock edge executes one micro-op.  A run starts with ``RESET_EDGES``
edges asserting ``reset`` followed by ``BOOT_EDGES`` edges that load the image
entry point into PC via MDR.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path

from . import blocks
from .isa import MNEMONICS, WORD_MASK, MachineImage
from .netlist import X, GateSim, Netlist
from .switch import PHI1, PHI2, SwitchSim, TransistorNet, expand_to_transistors
from .vm import (CYCLE_LIMIT, HALTED, HALTED_ON_INPUT, ILLEGAL, ArchEvent, InputExhausted, InputProvider,
                 MachineState, RunResult)

RESET_EDGES = 4
BOOT_EDGES = 2
FETCH_LEN = 3
UPC_LIMIT = 16

BUS_SOURCES = ("none", "PC", "MDR", "ALU", "REG", "IMM")
DESTS = ("PC", "MAR", "MDR", "IR", "REG", "A", "B")
ALU_OPS = ("ADD", "SUB", "AND", "OR", "XOR", "NOT", "PASS_B", "INC")
REG_SELS = ("rd", "rs", "rt")
BRANCHES = ("none", "Z", "N", "always")
MEMS = ("none", "read", "write")
IOS = ("none", "in", "out")

MICROCODE_CSV = Path(__file__).with_name("microcode.csv")


class MicroError(Exception):
    pass


class XContamination(MicroError):
    pass


@dataclass(frozen=True)
class MicroOp:
    bus: str = "none"
    dest: frozenset = frozenset()
    alu: str = "ADD"
    mem: str = "none"
    reg_sel: str = "rd"
    branch: str = "none"
    io: str = "none"
    end: bool = False
    halt: bool = False
    trap: bool = False

    def __post_init__(self):
        if self.bus not in BUS_SOURCES or self.alu not in ALU_OPS or self.mem not in MEMS:
            raise MicroError(f"bad control field in {self}")
        if self.reg_sel not in REG_SELS or self.branch not in BRANCHES or self.io not in IOS:
            raise MicroError(f"bad control field in {self}")
        if not set(self.dest) <= set(DESTS):
            raise MicroError(f"bad destination set {sorted(self.dest)}")
        if (self.mem == "read" or self.io == "in") and "MDR" not in self.dest:
            raise MicroError("external data is only latched into MDR")
        if self.mem == "read" and self.io != "none":
            raise MicroError("memory and I/O share the external data port")

    def describe(self) -> str:
        parts = []
        if self.dest:
            parts.append(",".join(d for d in DESTS if d in self.dest) + "<-" + self.bus)
        if self.bus == "ALU" or self.branch in ("Z", "N"):
            parts.append(f"alu={self.alu}")
        if self.bus == "REG":
            parts.append(f"reg={self.reg_sel}")
        if self.mem != "none":
            parts.append(f"mem={self.mem}")
        if self.io != "none":
            parts.append(f"io={self.io}")
        if self.branch != "none":
            parts.append(f"br={self.branch}")
        for flag in ("halt", "trap", "end"):
            if getattr(self, flag):
                parts.append(flag)
        return " ".join(parts) or "nop"


def _op(bus="none", dest=(), **kw) -> MicroOp:
    return MicroOp(bus=bus, dest=frozenset(dest), **kw)


FETCH = (
    _op("PC", ["MAR"]),
    _op("ALU", ["PC", "MDR"], alu="INC", mem="read"),
    _op("MDR", ["IR"]),
)

BOOT = (
    _op(dest=["MDR"], io="in"),  # MDR <- entry point, delivered on the external data port
    _op("MDR", ["PC"]),
)


def _alu3(alu: str) -> tuple:
    return (_op("REG", ["A"], reg_sel="rs"), _op("REG", ["B"], reg_sel="rt"), _op("ALU", ["REG"], alu=alu, end=True))


_EXECUTE = {
    0: (_op(branch="always", halt=True, end=True),),
    1: (_op("IMM", ["REG"], end=True),),
    2: (_op("REG", ["A"], reg_sel="rs"), _op("IMM", ["B"]), _op("ALU", ["MAR"], alu="ADD"),
        _op(dest=["MDR"], mem="read"), _op("MDR", ["REG"], end=True)),
    3: (_op("REG", ["MDR"], reg_sel="rd"), _op("REG", ["A"], reg_sel="rs"), _op("IMM", ["B"]),
        _op("ALU", ["MAR"], alu="ADD"), _op(mem="write", end=True)),
    4: _alu3("ADD"),
    5: _alu3("SUB"),
    6: _alu3("AND"),
    7: _alu3("OR"),
    8: _alu3("XOR"),
    9: (_op("REG", ["A"], reg_sel="rs"), _op("ALU", ["REG"], alu="NOT", end=True)),
    10: (_op("IMM", ["PC"], branch="always", end=True),),
    11: (_op("REG", ["B"], reg_sel="rd"), _op("IMM", ["PC"], alu="PASS_B", branch="Z", end=True)),
    12: (_op("REG", ["B"], reg_sel="rd"), _op("IMM", ["PC"], alu="PASS_B", branch="N", end=True)),
    13: (_op(dest=["MDR"], io="in"), _op("MDR", ["REG"], end=True)),
    14: (_op("REG", ["MDR"], reg_sel="rd"), _op(io="out", end=True)),
    15: (_op(trap=True, end=True),),
}


def microcode_for(opcode: int) -> list[MicroOp]:
    """Fetch prefix followed by the execute sequence; opcode 15 traps."""
    if not 0 <= opcode <= 15:
        raise ValueError(f"opcode {opcode} outside 0..15")
    seq = list(FETCH) + list(_EXECUTE[opcode])
    assert len(seq) <= UPC_LIMIT and seq[-1].end
    return seq


def _opname(opcode: int) -> str:
    return MNEMONICS.get(opcode, "ILLEGAL")


def microcode_table() -> list[dict]:
    rows = []
    for opc in range(16):
        for upc, m in enumerate(microcode_for(opc)):
            rows.append({
                "opcode": opc, "mnemonic": _opname(opc), "upc": upc, "bus": m.bus,
                "dest": "|".join(d for d in DESTS if d in m.dest), "alu": m.alu, "mem": m.mem,
                "reg_sel": m.reg_sel, "branch": m.branch, "io": m.io,
                "end": int(m.end), "halt": int(m.halt), "trap": int(m.trap),
            })
    return rows


def microcode_csv() -> str:
    rows = microcode_table()
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def load_microcode_csv(text: str) -> dict[tuple[int, int], MicroOp]:
    out = {}
    for r in csv.DictReader(io.StringIO(text)):
        out[int(r["opcode"]), int(r["upc"])] = MicroOp(
            bus=r["bus"], dest=frozenset(filter(None, r["dest"].split("|"))), alu=r["alu"], mem=r["mem"],
            reg_sel=r["reg_sel"], branch=r["branch"], io=r["io"], end=r["end"] == "1",
            halt=r["halt"] == "1", trap=r["trap"] == "1")
    return out


# ---------------------------------------------------------------- datapath


def _bits(p: str, w: int) -> list[str]:
    return [f"{p}{i}" for i in range(w)]


CONTROL_INPUTS = (["reset"] + _bits("bus_src", 3) + [f"ld_{d.lower()}" for d in DESTS]
                  + _bits("alu_op", 3) + _bits("reg_sel", 2) + _bits("br", 2) + ["ext_ld"] + _bits("ext", 16))

REG_WIDTHS = {"pc": 12, "mar": 12, "mdr": 16, "ir": 16, "a": 16, "b": 16}


def _alu() -> Netlist:
    n = Netlist("alu", _bits("a", 16) + _bits("b", 16) + _bits("pc", 12) + _bits("op", 3), _bits("y", 16) + ["z", "n"])
    for k in range(3):
        n.add("NOT", f"nop{k}", f"op{k}")
    n.add("AND", "isinc", "op0", "op1", "op2")
    n.add("AND", "issub", "op0", "nop1", "nop2")
    n.add("NOT", "ninc", "isinc")
    n.add("OR", "cin", "issub", "isinc")
    for i in range(16):
        if i < 12:
            n.add("AND", f"la{i}", f"a{i}", "ninc")
            n.add("AND", f"lp{i}", f"pc{i}", "isinc")
            n.add("OR", f"l{i}", f"la{i}", f"lp{i}")
        else:
            n.add("AND", f"l{i}", f"a{i}", "ninc")
        n.add("XOR", f"bx{i}", f"b{i}", "issub")
        n.add("AND", f"r{i}", f"bx{i}", "ninc")
        n.add("AND", f"and{i}", f"a{i}", f"b{i}")
        n.add("OR", f"or{i}", f"a{i}", f"b{i}")
        n.add("XOR", f"xor{i}", f"a{i}", f"b{i}")
        n.add("NOT", f"not{i}", f"a{i}")
    b = {f"a{i}": f"l{i}" for i in range(16)} | {f"b{i}": f"r{i}" for i in range(16)}
    b |= {f"s{i}": f"sum{i}" for i in range(16)} | {"cin": "cin", "cout": "cout"}
    n.instantiate("add", blocks.adder(16, variant=1), **b)
    srcs = ["sum", "sum", "and", "or", "xor", "not", "b", "sum"]
    b = {f"d{j}_{i}": f"{s}{i}" for j, s in enumerate(srcs) for i in range(16)}
    b |= {f"s{k}": f"op{k}" for k in range(3)} | {f"y{i}": f"y{i}" for i in range(16)}
    n.instantiate("sel", blocks.mux(16, 8), **b)
    n.add("NOR", "z", *_bits("y", 16))
    n.add("OR", "n", "y15", "y15")
    return n


def _regfile() -> Netlist:
    """r0 reads as zero; r1..r7 are 16-bit registers written from ``d`` at index ``w``."""
    n = Netlist("regfile", _bits("d", 16) + ["we", "reset"] + _bits("w", 3) + _bits("s", 3), _bits("rd", 16))
    n.add("CONST0", "zero")
    n.instantiate("wdec", blocks.decoder(3), **{f"a{i}": f"w{i}" for i in range(3)},
                  **{f"y{j}": f"wsel{j}" for j in range(8)})
    for k in range(1, 8):
        n.add("AND", f"we{k}", "we", f"wsel{k}")
        n.add("OR", f"ld{k}", f"we{k}", "reset")
        n.instantiate(f"r{k}", blocks.register(16), **{f"d{i}": f"d{i}" for i in range(16)}, load=f"ld{k}",
                      **{f"q{i}": f"r{k}/q{i}" for i in range(16)})
    b = {f"d0_{i}": "zero" for i in range(16)}
    b |= {f"d{k}_{i}": f"r{k}/q{i}" for k in range(1, 8) for i in range(16)}
    b |= {f"s{k}": f"s{k}" for k in range(3)} | {f"y{i}": f"rd{i}" for i in range(16)}
    n.instantiate("read", blocks.mux(16, 8), **b)
    return n


def _immdec() -> Netlist:
    """IR immediate: sext9 (LOADI), sext6 (LOAD/STORE), zext12 (JMP), zext9 (JZ/JN)."""
    n = Netlist("immdec", _bits("ir", 16), _bits("y", 16))
    n.instantiate("opdec", blocks.decoder(4), **{f"a{i}": f"ir{12 + i}" for i in range(4)},
                  **{f"y{j}": f"is{j}" for j in range(16)})
    n.add("OR", "m6", "is2", "is3")
    n.add("OR", "m9z", "is11", "is12")
    n.add("AND", "sg9", "is1", "ir8")
    n.add("AND", "sg6", "m6", "ir5")
    n.add("OR", "sign", "sg9", "sg6")
    n.add("NOR", "n6", "is2", "is3")
    for i in range(6):
        n.add("OR", f"y{i}", f"ir{i}", f"ir{i}")
    for i in range(6, 9):
        n.add("AND", f"k{i}", f"ir{i}", "n6")
        n.add("OR", f"y{i}", f"k{i}", "sg6")
    for i in range(9, 12):
        n.add("AND", f"k{i}", f"ir{i}", "is10")
        n.add("OR", f"y{i}", f"k{i}", "sign")
    for i in range(12, 16):
        n.add("OR", f"y{i}", "sign", "sign")
    return n


def build_datapath() -> Netlist:
    n = Netlist("datapath", list(CONTROL_INPUTS), [])
    n.add("CONST0", "zero")
    n.add("NOT", "nreset", "reset")
    # bus: 0 none, 1 PC, 2 MDR, 3 ALU, 4 REG, 5 IMM
    srcs = [lambda i: "zero", lambda i: f"pc/q{i}" if i < 12 else "zero", lambda i: f"mdr/q{i}",
            lambda i: f"alu/y{i}", lambda i: f"rf/rd{i}", lambda i: f"imm/y{i}"]
    b = {f"d{j}_{i}": s(i) for j, s in enumerate(srcs) for i in range(16)}
    b |= {f"s{k}": f"bus_src{k}" for k in range(3)} | {f"y{i}": f"bus{i}" for i in range(16)}
    n.instantiate("busmux", blocks.mux(16, 6), **b)
    for i in range(16):
        n.add("AND", f"busr{i}", f"bus{i}", "nreset")

    # branch qualification of the PC load
    n.add("NOT", "nbr0", "br0")
    n.add("NOT", "nbr1", "br1")
    n.add("AND", "tz", "br0", "nbr1", "alu/z")
    n.add("AND", "tn", "nbr0", "br1", "alu/n")
    n.add("AND", "talw", "br0", "br1")
    n.add("NOR", "brnone", "br0", "br1")
    n.add("OR", "take", "brnone", "tz", "tn", "talw")
    n.add("AND", "pc_ld", "ld_pc", "take")

    loads = {"pc": "pc_ld", "mar": "ld_mar", "ir": "ld_ir", "a": "ld_a", "b": "ld_b"}
    for reg, ld in loads.items():
        n.add("OR", f"{reg}_load", ld, "reset")
        w = REG_WIDTHS[reg]
        n.instantiate(reg, blocks.register(w), **{f"d{i}": f"busr{i}" for i in range(w)}, load=f"{reg}_load",
                      **{f"q{i}": f"{reg}/q{i}" for i in range(w)})
    # MDR takes external data (memory or I/O) when ext_ld is high, otherwise the bus
    n.add("NOT", "next_ld", "ext_ld")
    for i in range(16):
        n.add("AND", f"mx{i}", f"ext{i}", "ext_ld")
        n.add("AND", f"mb{i}", f"bus{i}", "next_ld")
        n.add("OR", f"mo{i}", f"mx{i}", f"mb{i}")
        n.add("AND", f"md{i}", f"mo{i}", "nreset")
    n.add("OR", "mdr_load", "ld_mdr", "ext_ld", "reset")
    n.instantiate("mdr", blocks.register(16), **{f"d{i}": f"md{i}" for i in range(16)}, load="mdr_load",
                  **{f"q{i}": f"mdr/q{i}" for i in range(16)})

    b = {f"d{j}_{i}": f"ir/q{base + i}" for j, base in enumerate((9, 6, 3)) for i in range(3)}
    b |= {f"s{k}": f"reg_sel{k}" for k in range(2)} | {f"y{i}": f"rix{i}" for i in range(3)}
    n.instantiate("rsel", blocks.mux(3, 3), **b)
    b = {f"d{i}": f"busr{i}" for i in range(16)} | {"we": "ld_reg", "reset": "reset"}
    b |= {f"w{i}": f"ir/q{9 + i}" for i in range(3)} | {f"s{i}": f"rix{i}" for i in range(3)}
    b |= {f"rd{i}": f"rf/rd{i}" for i in range(16)}
    n.instantiate("rf", _regfile(), **b)

    b = {f"a{i}": f"a/q{i}" for i in range(16)} | {f"b{i}": f"b/q{i}" for i in range(16)}
    b |= {f"pc{i}": f"pc/q{i}" for i in range(12)} | {f"op{k}": f"alu_op{k}" for k in range(3)}
    b |= {f"y{i}": f"alu/y{i}" for i in range(16)} | {"z": "alu/z", "n": "alu/n"}
    n.instantiate("alu", _alu(), **b)
    n.instantiate("imm", _immdec(), **{f"ir{i}": f"ir/q{i}" for i in range(16)},
                  **{f"y{i}": f"imm/y{i}" for i in range(16)})

    n.outputs = [f"{r}/q{i}" for r, w in REG_WIDTHS.items() for i in range(w)]
    n.outputs += [f"rf/r{k}/q{i}" for k in range(1, 8) for i in range(16)]
    return n


def control_inputs(m: MicroOp | None, reset: bool = False, ext: int = 0, ext_ld: bool = False) -> dict[str, int]:
    v = {name: 0 for name in CONTROL_INPUTS}
    v["reset"] = int(reset)
    if m is not None:
        src = BUS_SOURCES.index(m.bus)
        for k in range(3):
            v[f"bus_src{k}"] = (src >> k) & 1
        for d in m.dest:
            if d != "MDR" or not ext_ld:
                v[f"ld_{d.lower()}"] = 1
        op = ALU_OPS.index(m.alu)
        for k in range(3):
            v[f"alu_op{k}"] = (op >> k) & 1
        rs = REG_SELS.index(m.reg_sel)
        br = BRANCHES.index(m.branch)
        for k in range(2):
            v[f"reg_sel{k}"] = (rs >> k) & 1
            v[f"br{k}"] = (br >> k) & 1
    if ext_ld:
        v["ext_ld"] = 1
        for i in range(16):
            v[f"ext{i}"] = (ext >> i) & 1
    return v


# ---------------------------------------------------------------- engines


class _GateEngine:
    fidelity = "gate"

    def __init__(self, datapath: Netlist):
        self.sim = GateSim(datapath)

    def apply(self, inputs: dict[str, int]):
        self.sim.set_inputs(inputs)
        self.sim.settle()

    def clock(self) -> list[str]:
        warns = self.sim.clock()
        self.sim.settle()
        return warns

    def word(self, nets: list[str]) -> int | None:
        return self.sim.word(nets)

    def changes(self) -> list[tuple[str, str, int | str]]:
        return [(net, net, "X" if v == X else v) for net, v in self.sim.take_changes()]

    def device_parameters(self) -> dict:
        return {}


class _SwitchEngine:
    fidelity = "switch"

    def __init__(self, tnet: TransistorNet):
        self.tnet = tnet
        self.sim = SwitchSim(tnet)
        self.sim.set_inputs({PHI1: 0, PHI2: 0})

    def apply(self, inputs: dict[str, int]):
        self.sim.set_inputs(inputs)
        self.sim.settle()

    def clock(self) -> list[str]:
        for p1, p2 in ((1, 0), (0, 0), (0, 1), (0, 0)):
            self.sim.set_inputs({PHI1: p1, PHI2: p2})
            self.sim.settle()
        return []

    def word(self, nets: list[str]) -> int | None:
        return self.sim.word(nets)

    def changes(self) -> list[tuple[str, str, int | str]]:
        prov = self.tnet.provenance
        return [(fid, prov[fid], "ON" if s else "OFF") for fid, s in self.sim.take_fet_changes()]

    def device_parameters(self) -> dict:
        return self.tnet.device_parameters()


@lru_cache(maxsize=2)
def _datapath_cached() -> Netlist:
    return build_datapath()


@lru_cache(maxsize=2)
def _transistors_cached() -> TransistorNet:
    return expand_to_transistors(_datapath_cached())


@dataclass
class MicroMachine:
    datapath: Netlist
    fidelity: str
    transistors: TransistorNet | None = None

    def engine(self):
        if self.fidelity == "gate":
            return _GateEngine(self.datapath)
        return _SwitchEngine(self.transistors)

    def microcode_rom(self) -> dict[tuple[int, int], MicroOp]:
        return {(opc, upc): m for opc in range(16) for upc, m in enumerate(microcode_for(opc))}


def build_machine(fidelity: str = "gate", vth: float | None = None) -> MicroMachine:
    if fidelity not in ("gate", "switch"):
        raise ValueError(f"fidelity must be 'gate' or 'switch', got {fidelity!r}")
    dp = _datapath_cached()
    if fidelity == "gate":
        return MicroMachine(dp, "gate")
    t = _transistors_cached()
    if vth is not None:
        t = t.with_thresholds(vth, vth)
    return MicroMachine(dp, "switch", t)


# ---------------------------------------------------------------- running

PC_NETS = _bits("pc/q", 12)
MAR_NETS = _bits("mar/q", 12)
MDR_NETS = _bits("mdr/q", 16)
IR_NETS = _bits("ir/q", 16)
REG_NETS = [None] + [_bits(f"rf/r{k}/q", 16) for k in range(1, 8)]


@dataclass(frozen=True)
class EdgeContext:
    """What the control unit was doing during one clock edge."""

    phase: str  # reset | boot | run
    upc: int | None
    instr_addr: int | None
    opcode: int | None
    micro: MicroOp | None

    @property
    def mnemonic(self) -> str | None:
        if self.phase != "run":
            return self.phase.upper()
        return None if self.opcode is None else _opname(self.opcode)


class MicroRun:
    """Stepwise execution of an image on a :class:`MicroMachine`."""

    def __init__(self, machine: MicroMachine, img: MachineImage, inp: InputProvider | None = None, tracer=None):
        self.machine = machine
        self.img = img
        self.inp = inp if inp is not None else InputProvider()
        self.eng = machine.engine()
        self.mem = list(img.words)
        self.edge = 0
        self.instructions = 0
        self.upc = 0
        self.opcode: int | None = None
        self.fetching = 0
        self.instr_addr = img.entry_point
        self.halted = False
        self.reason: str | None = None
        self.outputs: list[tuple[int, int]] = []
        self.events: list[ArchEvent] = []
        self.tracer = tracer
        self.warnings: list[str] = []
        self.in_edges: list[int] = []  # edge index of every input delivery

    def _word(self, nets, what: str) -> int:
        v = self.eng.word(nets)
        if v is None:
            raise XContamination(f"{what} is X at edge {self.edge}")
        return v

    def _clock(self, inputs: dict[str, int], ctx: EdgeContext):
        self.eng.apply(inputs)
        self.warnings.extend(self.eng.clock())
        if self.tracer is not None:
            self.tracer.record(self.edge, self.eng.changes(), ctx)
        else:
            self.eng.changes()
        self.edge += 1

    def reset(self):
        ctx = EdgeContext("reset", None, None, None, None)
        for _ in range(RESET_EDGES):
            self._clock(control_inputs(None, reset=True), ctx)
        for name, nets in [("PC", PC_NETS)] + [(f"r{k}", REG_NETS[k]) for k in range(1, 8)]:
            self._word(nets, name)
        for k, m in enumerate(BOOT):
            ctx = EdgeContext("boot", k, None, None, m)
            self._clock(control_inputs(m, ext=self.img.entry_point, ext_ld=m.io == "in"), ctx)
        self.upc = 0

    def project(self) -> MachineState:
        pc = self.instr_addr if self.halted else self._word(PC_NETS, "PC")
        regs = [0] + [self._word(REG_NETS[k], f"r{k}") for k in range(1, 8)]
        return MachineState(pc, regs, list(self.mem), self.halted, self.instructions)

    def boundary_key(self) -> tuple:
        pc = self.instr_addr if self.halted else self._word(PC_NETS, "PC")
        regs = (0,) + tuple(self._word(REG_NETS[k], f"r{k}") for k in range(1, 8))
        return (pc, regs, tuple(self.mem), self.halted, self.instructions)

    def step_edge(self) -> bool:
        """Run one micro-op.  Returns True when an instruction completed."""
        if self.halted:
            raise MicroError("machine is halted")
        if self.upc == 0:
            self.instr_addr = self._word(PC_NETS, "PC")
            self.opcode = None
            # provenance only: fetch activity is attributed to the word being fetched
            self.fetching = self.mem[self.instr_addr] >> 12
        if self.upc < FETCH_LEN:
            m = FETCH[self.upc]
        else:
            if self.opcode is None:
                self.opcode = self._word(IR_NETS, "IR") >> 12
            m = microcode_for(self.opcode)[self.upc]
        ctx = EdgeContext("run", self.upc, self.instr_addr, self.fetching if self.opcode is None else self.opcode, m)
        c = self.instructions
        if m.trap:
            self.halted, self.reason = True, ILLEGAL
            self.events.append(ArchEvent(c, self.instr_addr, "trap", ILLEGAL, 0))
            return False
        ext, ext_ld = 0, False
        if m.mem == "read":
            ext, ext_ld = self.mem[self._word(MAR_NETS, "MAR")], True
        elif m.io == "in":
            port = self._word(IR_NETS, "IR") & 7
            try:
                ext = self.inp.read(port, c)
            except InputExhausted:
                self.halted, self.reason = True, HALTED_ON_INPUT
                self.events.append(ArchEvent(c, self.instr_addr, "trap", HALTED_ON_INPUT, 0))
                return False
            ext_ld = True
            self.in_edges.append(self.edge)
            self.events.append(ArchEvent(c, self.instr_addr, "in", str(port), ext))
        elif m.io == "out":
            port = self._word(IR_NETS, "IR") & 7
            val = self._word(MDR_NETS, "MDR")
            self.outputs.append((port, val))
            self.events.append(ArchEvent(c, self.instr_addr, "out", str(port), val))
        if m.mem == "write":
            self.mem[self._word(MAR_NETS, "MAR")] = self._word(MDR_NETS, "MDR") & WORD_MASK
        self._clock(control_inputs(m, ext=ext, ext_ld=ext_ld), ctx)
        if m.halt:
            self.halted, self.reason = True, HALTED
            self.events.append(ArchEvent(c, self.instr_addr, "halt", "", 0))
        if m.end:
            self.instructions += 1
            self.upc = 0
            return True
        self.upc += 1
        if self.upc >= UPC_LIMIT:
            raise MicroError("micro-pc overflow")
        return False


def run_micro(img: MachineImage, inp: InputProvider | None = None, max_edges: int = 5_000_000,
              fidelity: str = "gate", tracer=None, record_boundaries: bool = False,
              machine: MicroMachine | None = None, on_boundary=None) -> RunResult:
    """Reset, boot and execute until halt, trap or ``max_edges`` clock edges.

    The returned :class:`RunResult` carries the projected architectural state;
    ``boundaries`` (if requested) hold the projection after every completed
    instruction, comparable with :func:`emst.vm.run`.  ``on_boundary(run)`` is
    called after every completed instruction and may modify ``run.mem``.
    """
    if max_edges <= 0:
        raise ValueError("max_edges must be positive")
    machine = machine or build_machine(fidelity)
    inp = inp if inp is not None else InputProvider()
    r = MicroRun(machine, img, inp, tracer)
    if tracer is not None:
        tracer.begin(img, inp, machine.fidelity, r.eng.device_parameters())
    try:
        r.reset()
        bounds = [] if record_boundaries else None
        while not r.halted:
            if r.edge >= max_edges:
                r.reason = CYCLE_LIMIT
                break
            done = r.step_edge()
            if done:
                if on_boundary is not None:
                    on_boundary(r)
                if bounds is not None:
                    bounds.append(r.boundary_key())
    finally:
        if tracer is not None:
            tracer.close()
    res = RunResult(r.project(), r.events, r.reason, r.outputs, list(inp.log), bounds)
    res.in_cycles = list(r.in_edges)
    return res


def control_word_fields() -> list[str]:
    return [f.name for f in fields(MicroOp)]
