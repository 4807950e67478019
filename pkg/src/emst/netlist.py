"""Gate-level netlists: three-valued evaluation, settling, clocking, equivalence.

Logic values are the ints ``0``, ``1`` and ``X`` (= 2).  A gate is identified
by its output net, so gate ids and driven net names coincide.
"""

from __future__ import annotations

import itertools
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

X = 2
LOGIC_CHARS = {0: "0", 1: "1", X: "X"}

KINDS = ("AND", "OR", "NOT", "NAND", "NOR", "XOR", "DFF", "CONST0", "CONST1")
SEQUENTIAL = ("DFF",)
_ARITY = {"NOT": (1, 1), "DFF": (1, 1), "CONST0": (0, 0), "CONST1": (0, 0)}
MAX_EQUIV_INPUTS = 20


class NetlistError(Exception):
    pass


class CombinationalCycle(NetlistError):
    pass


class ArityError(NetlistError):
    pass


def _check_arity(kind: str, n: int):
    if kind not in KINDS:
        raise NetlistError(f"unknown gate kind {kind!r}")
    lo, hi = _ARITY.get(kind, (2, 64))
    if not lo <= n <= hi:
        raise ArityError(f"{kind} takes {lo}..{hi} inputs, got {n}")


# ---------------------------------------------------------------- evaluation


def _and(vals) -> int:
    r = 1
    for v in vals:
        if v == 0:
            return 0
        if v != 1:
            r = X
    return r


def _or(vals) -> int:
    r = 0
    for v in vals:
        if v == 1:
            return 1
        if v != 0:
            r = X
    return r


def _not(v: int) -> int:
    return X if v == X else 1 - v


def _xor(vals) -> int:
    r = 0
    for v in vals:
        if v == X:
            return X
        r ^= v
    return r


def eval_gate(kind: str, inputs) -> int:
    """Boolean gate function lifted to {0, 1, X} (X only when the inputs do not decide)."""
    _check_arity(kind, len(inputs))
    if kind == "AND":
        return _and(inputs)
    if kind == "OR":
        return _or(inputs)
    if kind == "NAND":
        return _not(_and(inputs))
    if kind == "NOR":
        return _not(_or(inputs))
    if kind == "XOR":
        return _xor(inputs)
    if kind == "NOT":
        return _not(inputs[0])
    if kind == "CONST0":
        return 0
    if kind == "CONST1":
        return 1
    raise NetlistError("DFF has no combinational function")


_FAST = {
    "AND": _and,
    "OR": _or,
    "NAND": lambda v: _not(_and(v)),
    "NOR": lambda v: _not(_or(v)),
    "XOR": _xor,
    "NOT": lambda v: _not(v[0]),
    "CONST0": lambda v: 0,
    "CONST1": lambda v: 1,
}


# ---------------------------------------------------------------- structure


@dataclass(frozen=True)
class Gate:
    id: str
    kind: str
    inputs: tuple[str, ...]

    @property
    def output(self) -> str:
        return self.id


@dataclass
class Instance:
    name: str
    netlist: "Netlist"
    bindings: dict[str, str]  # child port -> parent net


@dataclass
class Netlist:
    name: str
    inputs: list[str] = field(default_factory=list)
    outputs: list[str] = field(default_factory=list)
    gates: list[Gate] = field(default_factory=list)
    instances: list[Instance] = field(default_factory=list)

    # -- construction helpers
    def add(self, kind: str, out: str, *ins: str) -> str:
        _check_arity(kind, len(ins))
        self.gates.append(Gate(out, kind, tuple(ins)))
        return out

    def instantiate(self, name: str, child: "Netlist", **bindings: str):
        self.instances.append(Instance(name, child, dict(bindings)))

    # -- queries
    @property
    def is_sequential(self) -> bool:
        flat = self.flatten()
        return any(g.kind in SEQUENTIAL for g in flat.gates)

    def flatten(self, prefix: str = "") -> "Netlist":
        """Inline every instance, renaming its internal nets to ``<inst>/<net>``."""
        if not self.instances and not prefix:
            return self
        gates = [Gate(prefix + g.id, g.kind, tuple(prefix + i for i in g.inputs)) for g in self.gates]
        for inst in self.instances:
            child = inst.netlist.flatten()
            ports = set(child.inputs) | set(child.outputs)
            missing = ports - set(inst.bindings)
            if missing:
                raise NetlistError(f"instance {inst.name}: unbound ports {sorted(missing)}")
            mapping = {p: prefix + inst.bindings[p] for p in ports}
            sub = f"{prefix}{inst.name}/"

            def rename(n, mapping=mapping, sub=sub):
                return mapping.get(n, sub + n)

            for g in child.gates:
                gates.append(Gate(rename(g.id), g.kind, tuple(rename(i) for i in g.inputs)))
        return Netlist(self.name, [prefix + i for i in self.inputs], [prefix + o for o in self.outputs], gates)

    def gate_count(self) -> int:
        return len(self.flatten().gates)

    def kind_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = defaultdict(int)
        for g in self.flatten().gates:
            hist[g.kind] += 1
        return dict(hist)

    def validate(self) -> "Netlist":
        """Check single drivers, declared nets and acyclicity; returns the flat netlist."""
        flat = self.flatten()
        drivers: dict[str, str] = {}
        for i in flat.inputs:
            if i in drivers:
                raise NetlistError(f"input {i!r} declared twice")
            drivers[i] = "<input>"
        for g in flat.gates:
            _check_arity(g.kind, len(g.inputs))
            if g.id in drivers:
                raise NetlistError(f"net {g.id!r} has more than one driver")
            drivers[g.id] = g.kind
        for g in flat.gates:
            for i in g.inputs:
                if i not in drivers:
                    raise NetlistError(f"net {i!r} (input of {g.id}) is undriven")
        for o in flat.outputs:
            if o not in drivers:
                raise NetlistError(f"output {o!r} is undriven")
        _topo_levels(flat)
        return flat


def _topo_levels(flat: Netlist) -> dict[str, int]:
    """Combinational level of every gate; DFFs and inputs are level 0 sources."""
    by_id = {g.id: g for g in flat.gates}
    level: dict[str, int] = {}
    state: dict[str, int] = {}
    for start in by_id:
        if start in level:
            continue
        stack = [(start, 0)]
        while stack:
            node, k = stack.pop()
            g = by_id.get(node)
            if g is None or g.kind in SEQUENTIAL:
                level[node] = 0
                continue
            if k == 0:
                if node in level:
                    continue
                if state.get(node) == 1:
                    raise CombinationalCycle(f"combinational cycle through {node!r}")
                state[node] = 1
            if k < len(g.inputs):
                stack.append((node, k + 1))
                child = g.inputs[k]
                if child not in level:
                    cg = by_id.get(child)
                    if cg is not None and cg.kind not in SEQUENTIAL and state.get(child) == 1:
                        raise CombinationalCycle(f"combinational cycle through {child!r}")
                    stack.append((child, 0))
            else:
                level[node] = 1 + max((level.get(i, 0) for i in g.inputs), default=0)
                state[node] = 2
    return level


# ---------------------------------------------------------------- simulation


class GateSim:
    """Event-driven three-valued simulator of a flattened netlist.

    ``values`` holds the current value of every net; DFF outputs hold state.
    ``settle`` propagates changes in level order so each gate is evaluated at
    most once per call.
    """

    def __init__(self, netlist: Netlist):
        flat = netlist.validate()
        self.netlist = flat
        levels = _topo_levels(flat)
        self.nets = sorted(set(flat.inputs) | {g.id for g in flat.gates})
        self.index = {n: k for k, n in enumerate(self.nets)}
        self.values = [X] * len(self.nets)
        self.comb = [g for g in flat.gates if g.kind not in SEQUENTIAL]
        self.dffs = [g for g in flat.gates if g.kind in SEQUENTIAL]
        idx = self.index
        self.g_out = [idx[g.id] for g in self.comb]
        self.g_in = [tuple(idx[i] for i in g.inputs) for g in self.comb]
        self.g_fn = [_FAST[g.kind] for g in self.comb]
        self.g_level = [levels[g.id] for g in self.comb]
        self.max_level = max(self.g_level, default=0)
        self.fanout: list[list[int]] = [[] for _ in self.nets]
        for k, ins in enumerate(self.g_in):
            for i in ins:
                self.fanout[i].append(k)
        self.dff_q = [idx[g.id] for g in self.dffs]
        self.dff_d = [idx[g.inputs[0]] for g in self.dffs]
        self.dirty: set[int] = set(range(len(self.comb)))
        self.changed: dict[int, int] = {}  # net -> value before the current observation window
        self.warnings: list[str] = []

    def get(self, net: str) -> int:
        return self.values[self.index[net]]

    def word(self, nets: list[str]) -> int | None:
        """Integer from little-endian bit nets, or None if any bit is X."""
        v = 0
        for k, n in enumerate(nets):
            b = self.values[self.index[n]]
            if b == X:
                return None
            v |= b << k
        return v

    def _set(self, i: int, v: int):
        old = self.values[i]
        if old != v:
            if i not in self.changed:
                self.changed[i] = old
            self.values[i] = v
            self.dirty.update(self.fanout[i])

    def set_inputs(self, assignment: dict[str, int]):
        for net, v in assignment.items():
            self._set(self.index[net], v)

    def set_state(self, state: dict[str, int]):
        for net, v in state.items():
            self._set(self.index[net], v)

    def settle(self):
        buckets: list[list[int]] = [[] for _ in range(self.max_level + 1)]
        for k in self.dirty:
            buckets[self.g_level[k]].append(k)
        self.dirty = set()
        values, g_in, g_fn, g_out, fanout, lv = self.values, self.g_in, self.g_fn, self.g_out, self.fanout, self.g_level
        seen: set[int] = set()
        for level in range(self.max_level + 1):
            for k in buckets[level]:
                if k in seen:
                    continue
                seen.add(k)
                v = g_fn[k]([values[i] for i in g_in[k]])
                o = g_out[k]
                if values[o] != v:
                    if o not in self.changed:
                        self.changed[o] = values[o]
                    values[o] = v
                    for j in fanout[o]:
                        if j not in seen:
                            buckets[lv[j]].append(j)

    def clock(self) -> list[str]:
        """Two-phase capture: every DFF samples its settled D input, then all update."""
        captured = [self.values[d] for d in self.dff_d]
        warns = []
        for q, v, g in zip(self.dff_q, captured, self.dffs):
            if v == X:
                warns.append(f"DFF {g.id} captured X")
            self._set(q, v)
        self.warnings.extend(warns)
        return warns

    def take_changes(self) -> list[tuple[str, int]]:
        """Nets whose value differs from the start of the window, sorted by name."""
        out = [(self.nets[i], self.values[i]) for i, old in self.changed.items() if self.values[i] != old]
        self.changed = {}
        out.sort()
        return out

    def state(self) -> dict[str, int]:
        return {g.id: self.values[q] for g, q in zip(self.dffs, self.dff_q)}


def settle(n: Netlist, inputs: dict[str, int], state: dict[str, int] | None = None) -> dict[str, int]:
    """Fixpoint of combinational evaluation with DFF outputs held at ``state``."""
    sim = GateSim(n)
    missing = set(sim.netlist.inputs) - set(inputs)
    if missing:
        raise NetlistError(f"unassigned inputs {sorted(missing)}")
    sim.set_inputs(inputs)
    if state:
        sim.set_state(state)
    sim.settle()
    return dict(zip(sim.nets, sim.values))


def clock_edge(n: Netlist, inputs: dict[str, int], state: dict[str, int] | None = None
               ) -> tuple[dict[str, int], list[str]]:
    """Settle, then let every DFF capture its D value; returns ``(new_state, warnings)``."""
    sim = GateSim(n)
    sim.set_inputs(inputs)
    if state:
        sim.set_state(state)
    sim.settle()
    warns = sim.clock()
    return sim.state(), warns


# ---------------------------------------------------------------- equivalence


@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    counterexample: dict[str, int] | None = None
    outputs_a: dict[str, int] | None = None
    outputs_b: dict[str, int] | None = None

    def __bool__(self) -> bool:
        return self.equivalent


def _cut(flat: Netlist) -> Netlist:
    """Turn DFF outputs into pseudo-inputs and DFF D pins into pseudo-outputs."""
    dffs = [g for g in flat.gates if g.kind in SEQUENTIAL]
    gates = [g for g in flat.gates if g.kind not in SEQUENTIAL]
    gates += [Gate(f"{g.id}.next", "OR", (g.inputs[0], g.inputs[0])) for g in dffs]
    return Netlist(flat.name, flat.inputs + [g.id for g in dffs], flat.outputs + [f"{g.id}.next" for g in dffs], gates)


def _eval_rows(flat: Netlist, inputs: list[str], rows: np.ndarray, nbits: int) -> dict[str, np.ndarray]:
    """Bit-parallel two-valued evaluation over a block of row indices."""
    vals: dict[str, np.ndarray] = {}
    for k, name in enumerate(inputs):
        vals[name] = ((rows >> (nbits - 1 - k)) & 1).astype(bool)
    levels = _topo_levels(flat)
    for g in sorted(flat.gates, key=lambda g: (levels[g.id], g.id)):
        ins = [vals[i] for i in g.inputs]
        if g.kind == "CONST0":
            v = np.zeros(rows.shape, bool)
        elif g.kind == "CONST1":
            v = np.ones(rows.shape, bool)
        elif g.kind == "NOT":
            v = ~ins[0]
        else:
            base = g.kind.removeprefix("N") if g.kind in ("NAND", "NOR") else g.kind
            op = {"AND": np.logical_and, "OR": np.logical_or, "XOR": np.logical_xor}[base]
            v = ins[0]
            for x in ins[1:]:
                v = op(v, x)
            if g.kind in ("NAND", "NOR"):
                v = ~v
        vals[g.id] = v
    return vals


def equivalent(a: Netlist, b: Netlist, cut_dffs: bool = False, block: int = 1 << 16) -> EquivalenceResult:
    """Exhaustive comparison over all input rows.

    Rows are enumerated in lexicographic order of the input values (first input
    most significant); the first differing row is returned as the counterexample.
    Sequential netlists are rejected unless ``cut_dffs``, which compares the
    next-state and output functions with DFF outputs as free inputs.
    """
    fa, fb = a.validate(), b.validate()
    if cut_dffs:
        fa, fb = _cut(fa), _cut(fb)
    elif any(g.kind in SEQUENTIAL for g in fa.gates + fb.gates):
        raise NetlistError("equivalence checking needs combinational netlists")
    if set(fa.inputs) != set(fb.inputs) or set(fa.outputs) != set(fb.outputs):
        raise NetlistError("port signatures differ")
    inputs = list(fa.inputs)
    k = len(inputs)
    if k > MAX_EQUIV_INPUTS:
        raise NetlistError(f"{k} inputs exceed the exhaustive limit of {MAX_EQUIV_INPUTS}")
    total = 1 << k
    for start in range(0, total, block):
        rows = np.arange(start, min(total, start + block), dtype=np.int64)
        va = _eval_rows(fa, inputs, rows, k)
        vb = _eval_rows(fb, inputs, rows, k)
        diff = np.zeros(rows.shape, bool)
        for o in fa.outputs:
            diff |= va[o] != vb[o]
        hits = np.flatnonzero(diff)
        if hits.size:
            j = int(hits[0])
            row = {n: int(va[n][j]) for n in inputs}
            return EquivalenceResult(False, row, {o: int(va[o][j]) for o in fa.outputs},
                                     {o: int(vb[o][j]) for o in fa.outputs})
    return EquivalenceResult(True)


def truth_table(n: Netlist) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Row-by-row truth table via the three-valued simulator (slow, for oracles)."""
    flat = n.validate()
    rows = []
    for bits in itertools.product((0, 1), repeat=len(flat.inputs)):
        vals = settle(flat, dict(zip(flat.inputs, bits)))
        rows.append((bits, tuple(vals[o] for o in flat.outputs)))
    return rows


# ---------------------------------------------------------------- text format

_GATE_RE = re.compile(r"^(?P<out>[^\s=]+)\s*=\s*(?P<kind>[A-Z0-9]+)\s*\((?P<ins>[^)]*)\)$")


def dumps(n: Netlist) -> str:
    """Deterministic text form; gates sorted by output net."""
    lines = [f".model {n.name}", ".inputs " + " ".join(n.inputs), ".outputs " + " ".join(n.outputs)]
    for inst in sorted(n.instances, key=lambda i: i.name):
        binds = " ".join(f"{p}={net}" for p, net in sorted(inst.bindings.items()))
        lines.append(f".inst {inst.name} {inst.netlist.name}.net {binds}")
    for g in sorted(n.gates, key=lambda g: g.id):
        lines.append(f"{g.id} = {g.kind}({', '.join(g.inputs)})")
    return "\n".join(lines) + "\n"


def loads(text: str, base: Path | None = None, _seen: tuple = ()) -> Netlist:
    n = Netlist("top")
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".model"):
            n.name = line.split(None, 1)[1].strip()
        elif line.startswith(".inputs"):
            n.inputs.extend(line.split()[1:])
        elif line.startswith(".outputs"):
            n.outputs.extend(line.split()[1:])
        elif line.startswith(".inst"):
            parts = line.split()
            if len(parts) < 3:
                raise NetlistError(f"line {lineno}: .inst needs a name and a file")
            name, fname = parts[1], parts[2]
            path = (base or Path(".")) / fname
            if path.resolve() in _seen:
                raise NetlistError(f"line {lineno}: recursive instantiation of {fname}")
            child = loads(path.read_text(), path.parent, _seen + (path.resolve(),))
            binds = {}
            for p in parts[3:]:
                port, _, net = p.partition("=")
                binds[port] = net
            n.instances.append(Instance(name, child, binds))
        else:
            m = _GATE_RE.match(line)
            if m is None:
                raise NetlistError(f"line {lineno}: cannot parse {raw!r}")
            ins = [s.strip() for s in m.group("ins").split(",") if s.strip()]
            try:
                n.add(m.group("kind"), m.group("out"), *ins)
            except NetlistError as exc:
                raise NetlistError(f"line {lineno}: {exc}") from None
    return n


def load(path: str | Path) -> Netlist:
    p = Path(path)
    return loads(p.read_text(), p.parent, (p.resolve(),))


def dump_tree(n: Netlist, directory: str | Path) -> Path:
    """Write ``n`` and every distinct child netlist as ``<name>.net`` files."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for inst in n.instances:
        dump_tree(inst.netlist, d)
    path = d / f"{n.name}.net"
    path.write_text(dumps(n))
    return path
