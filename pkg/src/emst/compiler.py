"""Lower checked ``.mhl`` programs to assembly.

Memory layout of every compiled image::

    0        JMP main
    1        trap: .word 0xF000        (illegal opcode; bounds-check failures jump here)
    2..      branch trampolines        (only when code reaches past address 511)
    ...      constant pool, scalars, arrays
    main:    code, ending in HALT

Registers: r1..r6 hold the expression stack, r7 is scratch for bounds checks
and address arithmetic.  Expressions are at most 6 deep, so the stack never
spills; array stores and swaps spill one address to a compiler temporary only
when the second operand is 6 deep.
"""

from __future__ import annotations

from . import lang
from .isa import AsmLine, AssemblyProgram, MEM_WORDS, assemble, layout, MachineImage
from .lang import Assign, BinOp, CheckedProgram, Halt, If, Index, Neg, Not, Num, Read, RepeatUntil, Swap, Var, While, Write

TRAP_WORD = 0xF000
COND_LIMIT = 512  # JZ/JN carry a 9-bit absolute address
SCRATCH = 7
STACK_TOP = 6


class CapacityExceeded(Exception):
    pass


def _fits_simm9(v: int) -> bool:
    v &= 0xFFFF
    return v <= 255 or v >= 0x10000 - 256


def _s9(v: int) -> int:
    v &= 0xFFFF
    return v - 0x10000 if v >= 0x8000 else v


class _Codegen:
    def __init__(self, prog: CheckedProgram, trampolines: set[str] | None = None):
        self.prog = prog
        self.code: list[AsmLine] = []
        self.pending_label: str | None = None
        self.nlabels = 0
        self.line: int | None = None
        self.consts: dict[int, str] = {}
        self.use_spill = False
        self.trampolines = trampolines  # None: direct conditional branches
        self.addr: dict[str, int] = {}

    # -- emission helpers
    def label(self) -> str:
        self.nlabels += 1
        return f"L{self.nlabels}"

    def place(self, label: str):
        if self.pending_label is not None:
            self.code.append(AsmLine(".label", (), self.pending_label, self.line))
        self.pending_label = label

    def emit(self, mnemonic: str, *ops):
        self.code.append(AsmLine(mnemonic, tuple(str(o) for o in ops), self.pending_label, self.line))
        self.pending_label = None

    def cond_jump(self, mnemonic: str, reg: str, target: str):
        if self.trampolines is not None and target != "trap":
            self.trampolines.add(target)
            target = f"T_{target}"
        self.emit(mnemonic, reg, target)

    def const_label(self, value: int) -> str:
        value &= 0xFFFF
        if value not in self.consts:
            self.consts[value] = f"k_{value:04x}"
        return self.consts[value]

    # -- addresses are resolved by a first layout pass; see compile()
    def load_word(self, rk: int, label: str):
        """rk <- mem[label]"""
        a = self.addr.get(label, 0)
        if a < 32:
            self.emit("LOAD", f"r{rk}", f"[r0+{label}]")
        elif a < 256:
            self.emit("LOADI", f"r{rk}", label)
            self.emit("LOAD", f"r{rk}", f"[r{rk}+0]")
        else:
            raise CapacityExceeded("data must live below address 256")

    def store_word(self, rv: int, label: str):
        a = self.addr.get(label, 0)
        if a < 32:
            self.emit("STORE", f"r{rv}", f"[r0+{label}]")
        else:
            self.emit("LOADI", f"r{SCRATCH}", label)
            self.emit("STORE", f"r{rv}", f"[r{SCRATCH}+0]")

    def load_const(self, rk: int, value: int):
        if _fits_simm9(value):
            self.emit("LOADI", f"r{rk}", _s9(value))
        else:
            self.load_word(rk, self.const_label(value))

    # -- expressions
    def expr(self, e, k: int):
        """Evaluate ``e`` into r<k>, using registers r<k>..r6 and r7 as scratch."""
        if isinstance(e, Num):
            self.load_const(k, e.value)
        elif isinstance(e, Var):
            self.load_word(k, f"v_{e.name}")
        elif isinstance(e, Index):
            self.element_address(e, k)
            self.emit("LOAD", f"r{k}", f"[r{k}+{self._offset(e.name)}]")
        elif isinstance(e, Neg):
            self.expr(e.operand, k)
            self.emit("SUB", f"r{k}", "r0", f"r{k}")
        elif isinstance(e, Not):
            self.expr(e.operand, k)
            self.bool_from_flag("JZ", k, k)
        elif e.op in ("+", "-"):
            self.expr(e.left, k)
            self.expr(e.right, k + 1)
            self.emit("ADD" if e.op == "+" else "SUB", f"r{k}", f"r{k}", f"r{k + 1}")
        elif e.op in ("and", "or"):
            self.expr(e.left, k)
            self.expr(e.right, k + 1)
            t, f, end = self.label(), self.label(), self.label()
            if e.op == "and":
                self.cond_jump("JZ", f"r{k}", f)
                self.cond_jump("JZ", f"r{k + 1}", f)
                self.emit("LOADI", f"r{k}", 1)
                self.emit("JMP", end)
                self.place(f)
                self.emit("LOADI", f"r{k}", 0)
            else:
                skip = self.label()
                self.cond_jump("JZ", f"r{k}", skip)
                self.emit("JMP", t)
                self.place(skip)
                self.cond_jump("JZ", f"r{k + 1}", f)
                self.place(t)
                self.emit("LOADI", f"r{k}", 1)
                self.emit("JMP", end)
                self.place(f)
                self.emit("LOADI", f"r{k}", 0)
            self.place(end)
        else:
            flag, negate = self.compare_into(e, k)
            self.bool_from_flag(flag, k, k, negate)

    def compare_into(self, e: BinOp, k: int) -> tuple[str, bool]:
        """Leave the tested difference in r<k>; return (branch mnemonic, negate)."""
        self.expr(e.left, k)
        self.expr(e.right, k + 1)
        if e.op in (">", "<="):
            self.emit("SUB", f"r{k}", f"r{k + 1}", f"r{k}")
        else:
            self.emit("SUB", f"r{k}", f"r{k}", f"r{k + 1}")
        return {"<": ("JN", False), ">": ("JN", False), ">=": ("JN", True), "<=": ("JN", True),
                "=": ("JZ", False), "!=": ("JZ", True)}[e.op]

    def bool_from_flag(self, flag: str, src: int, dst: int, negate: bool = False):
        t, end = self.label(), self.label()
        self.cond_jump(flag, f"r{src}", t)
        self.emit("LOADI", f"r{dst}", 1 if negate else 0)
        self.emit("JMP", end)
        self.place(t)
        self.emit("LOADI", f"r{dst}", 0 if negate else 1)
        self.place(end)

    def _offset(self, name: str) -> str:
        base = self.addr.get(f"v_{name}", 0)
        return f"v_{name}" if base < 32 else "0"

    def element_address(self, e: Index, k: int):
        """r<k> <- checked index (plus base when the base does not fit an offset)."""
        size = self.prog.symbol_table[e.name].size
        self.expr(e.index, k)
        self.cond_jump("JN", f"r{k}", "trap")
        self.load_const(SCRATCH, size - 1)
        self.emit("SUB", f"r{SCRATCH}", f"r{SCRATCH}", f"r{k}")
        self.cond_jump("JN", f"r{SCRATCH}", "trap")
        if self.addr.get(f"v_{e.name}", 0) >= 32:
            self.emit("LOADI", f"r{SCRATCH}", f"v_{e.name}")
            self.emit("ADD", f"r{k}", f"r{k}", f"r{SCRATCH}")

    def lvalue_address(self, lv, k: int) -> str:
        """Prepare r<k> so that ``[r<k>+offset]`` addresses ``lv``; returns the offset text."""
        if isinstance(lv, Var):
            base = f"v_{lv.name}"
            if self.addr.get(base, 0) < 32:
                self.emit("LOADI", f"r{k}", 0)
                return base
            self.emit("LOADI", f"r{k}", base)
            return "0"
        self.element_address(lv, k)
        return self._offset(lv.name)

    def spill_slot(self) -> str:
        self.use_spill = True
        return "t_spill"

    # -- conditions
    def branch(self, e, target: str, when: bool):
        """Jump to ``target`` iff truth(e) == when; otherwise fall through."""
        if isinstance(e, Not):
            self.branch(e.operand, target, not when)
            return
        if isinstance(e, BinOp) and e.op in ("<", ">", "=", "<=", ">=", "!="):
            flag, negate = self.compare_into(e, 1)
            direct = when != negate
        else:
            self.expr(e, 1)
            flag, direct = "JZ", not when
        if direct:
            self.cond_jump(flag, "r1", target)
        else:
            skip = self.label()
            self.cond_jump(flag, "r1", skip)
            self.emit("JMP", target)
            self.place(skip)

    # -- statements
    def block(self, stmts):
        for s in stmts:
            self.stmt(s)

    def stmt(self, s):
        self.line = s.line
        if isinstance(s, Assign):
            if isinstance(s.target, Var):
                self.expr(s.value, 1)
                self.store_word(1, f"v_{s.target.name}")
            else:
                off = self.lvalue_address(s.target, 1)
                if lang.expr_depth(s.value) < STACK_TOP:
                    self.expr(s.value, 2)
                    self.emit("STORE", "r2", f"[r1+{off}]")
                else:
                    slot = self.spill_slot()
                    self.store_word(1, slot)
                    self.expr(s.value, 1)
                    self.load_word(2, slot)
                    self.emit("STORE", "r1", f"[r2+{off}]")
        elif isinstance(s, If):
            else_l, end_l = self.label(), self.label()
            self.branch(s.cond, else_l, False)
            self.block(s.then)
            if s.orelse:
                self.line = s.line
                self.emit("JMP", end_l)
                self.place(else_l)
                self.block(s.orelse)
                self.place(end_l)
            else:
                self.place(else_l)
        elif isinstance(s, While):
            top, end = self.label(), self.label()
            self.place(top)
            self.branch(s.cond, end, False)
            self.block(s.body)
            self.line = s.line
            self.emit("JMP", top)
            self.place(end)
        elif isinstance(s, RepeatUntil):
            top = self.label()
            self.place(top)
            self.block(s.body)
            self.line = s.line
            self.branch(s.cond, top, False)
        elif isinstance(s, Swap):
            off_a = self.lvalue_address(s.a, 1)
            depth_b = lang.expr_depth(s.b.index) + 1 if isinstance(s.b, Index) else 1
            if depth_b < STACK_TOP:
                off_b = self.lvalue_address(s.b, 2)
                ra, rb = 1, 2
            else:
                slot = self.spill_slot()
                self.store_word(1, slot)
                off_b = self.lvalue_address(s.b, 1)
                self.load_word(2, slot)
                ra, rb = 2, 1
            self.emit("LOAD", "r3", f"[r{ra}+{off_a}]")
            self.emit("LOAD", "r4", f"[r{rb}+{off_b}]")
            self.emit("STORE", "r4", f"[r{ra}+{off_a}]")
            self.emit("STORE", "r3", f"[r{rb}+{off_b}]")
        elif isinstance(s, Read):
            if isinstance(s.target, Var):
                self.emit("IN", "r1", s.port)
                self.store_word(1, f"v_{s.target.name}")
            else:
                off = self.lvalue_address(s.target, 1)
                self.emit("IN", "r2", s.port)
                self.emit("STORE", "r2", f"[r1+{off}]")
        elif isinstance(s, Write):
            self.expr(s.value, 1)
            self.emit("OUT", "r1", s.port)
        elif isinstance(s, Halt):
            self.emit("HALT")
        else:  # pragma: no cover
            raise TypeError(s)

    def program(self) -> list[AsmLine]:
        self.line = 1
        self.place("main")
        self.block(self.prog.ast.statements)
        self.line = self.prog.last_line
        self.emit("HALT")
        return self.code


def _data_section(prog: CheckedProgram, consts: dict[int, str], spill: bool) -> list[AsmLine]:
    data = [AsmLine(".word", (f"0x{v:04X}",), label) for v, label in sorted(consts.items(), key=lambda kv: kv[1])]
    if spill:
        data.append(AsmLine(".space", ("1",), "t_spill"))
    scalars = [(n, s) for n, s in prog.symbol_table.items() if s.kind == "scalar"]
    arrays = [(n, s) for n, s in prog.symbol_table.items() if s.kind == "array"]
    for name, sym in scalars + arrays:
        data.append(AsmLine(".space", (str(sym.size),), f"v_{name}"))
    return data


def _assemble_layout(prog: CheckedProgram, gen: _Codegen, trampolines: list[str]) -> list[AsmLine]:
    head = [AsmLine("JMP", ("main",), None, 1), AsmLine(".word", (f"0x{TRAP_WORD:04X}",), "trap")]
    head += [AsmLine("JMP", (t,), f"T_{t}") for t in trampolines]
    return head + _data_section(prog, gen.consts, gen.use_spill) + gen.code


def compile_program(prog: CheckedProgram) -> AssemblyProgram:
    """Compile to assembly.  Every emitted instruction carries its source line."""
    # Pass 1 discovers constants, spills and code size with provisional addresses;
    # pass 2 regenerates with final data addresses (which decide the addressing modes).
    gen = _Codegen(prog)
    gen.program()
    for _ in range(4):
        lines = _assemble_layout(prog, gen, [])
        addrs = layout(AssemblyProgram(lines))
        new = _Codegen(prog)
        new.addr = addrs
        new.consts = dict(gen.consts)
        new.use_spill = gen.use_spill
        new.program()
        stable = new.consts == gen.consts and new.use_spill == gen.use_spill
        gen = new
        if stable:
            break
    lines = _assemble_layout(prog, gen, [])
    addrs = layout(AssemblyProgram(lines))
    if any(addrs.get(ln.operands[1], 0) >= COND_LIMIT for ln in lines if ln.mnemonic in ("JZ", "JN")):
        targets: set[str] = set()
        tgen = _Codegen(prog, trampolines=targets)
        tgen.addr, tgen.consts, tgen.use_spill = gen.addr, gen.consts, gen.use_spill
        tgen.program()
        order = sorted(targets, key=lambda t: int(t[1:]) if t[1:].isdigit() else 0)
        # trampolines shift the data section; recompute addressing once more
        lines = _assemble_layout(prog, tgen, order)
        tgen2 = _Codegen(prog, trampolines=set())
        tgen2.addr = layout(AssemblyProgram(lines))
        tgen2.consts, tgen2.use_spill = tgen.consts, tgen.use_spill
        tgen2.program()
        lines = _assemble_layout(prog, tgen2, order)
        addrs = layout(AssemblyProgram(lines))
        if any(addrs[f"T_{t}"] >= COND_LIMIT for t in order):
            raise CapacityExceeded("too many branch targets for the low trampoline area")
    total = sum(ln.size() for ln in lines)
    if total > MEM_WORDS:
        raise CapacityExceeded(f"program and data need {total} words; memory holds {MEM_WORDS}")
    # data addressing assumes the data section sits below 256
    data_end = max((addrs[ln.label] + ln.size() for ln in lines if ln.label and ln.label.startswith(("v_", "k_", "t_"))), default=0)
    if data_end > 256:
        raise CapacityExceeded("constants and variables must fit below address 256")
    return AssemblyProgram(lines, 0)


def build_image(source: str | lang.SourceProgram) -> tuple[CheckedProgram, AssemblyProgram, MachineImage]:
    """Convenience: check, compile and assemble a source text."""
    checked = lang.check_source(source)
    asm = compile_program(checked)
    return checked, asm, assemble(asm)
