"""Switch-level CMOS: gate expansion into FETs and rail-connectivity settling.

A FET conducts according to the threshold rule

    n-type:  ON  iff  V_gate > V_th
    p-type:  ON  iff  V_gate < V_dd - V_th

(the threshold itself is OFF).  Net values are resolved per channel-connected
component: a net is 1 when ON transistors connect it to a 1 source and nothing
can possibly connect it to a 0 source, 0 symmetrically, X on contention or
uncertainty, and Z when it is connected to no source at all.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .netlist import SEQUENTIAL, X, Netlist

Z = 3
VALUE_CHARS = {0: "0", 1: "1", X: "X", Z: "Z"}
ON, OFF, UNKNOWN = 1, 0, 2
STATE_NAMES = {ON: "ON", OFF: "OFF", UNKNOWN: "UNKNOWN"}

VDD, GND = "VDD", "GND"
PHI1, PHI2 = "clk/phi1", "clk/phi2"

DEFAULT_VDD = 1.0
DEFAULT_VTH_FRACTION = 0.4

# FETs per gate kind as a function of fan-in k
FET_COUNTS = {
    "NOT": lambda k: 2,
    "NAND": lambda k: 2 * k,
    "NOR": lambda k: 2 * k,
    "AND": lambda k: 2 * k + 2,
    "OR": lambda k: 2 * k + 2,
    "XOR": lambda k: 16 * (k - 1),
    "CONST0": lambda k: 2,
    "CONST1": lambda k: 2,
    "DFF": lambda k: 34,
}


class SwitchError(Exception):
    pass


class OscillationError(SwitchError):
    pass


class UnsupportedGate(SwitchError):
    pass


@dataclass(frozen=True)
class FetDevice:
    id: str
    polarity: str  # "n" | "p"
    gate: str
    source: str
    drain: str
    vth: float

    def __post_init__(self):
        if self.polarity not in ("n", "p"):
            raise ValueError(f"polarity must be 'n' or 'p', got {self.polarity!r}")
        if not self.vth > 0:
            raise ValueError("threshold voltage must be positive")

    def nominal(self, vdd: float) -> bool:
        """Whether the threshold lies strictly inside the supply range."""
        return 0 < self.vth < vdd


def switch_state(f: FetDevice, v_gate: float, vdd: float = DEFAULT_VDD) -> int:
    """ON or OFF for a gate voltage within the rails."""
    if not 0 <= v_gate <= vdd:
        raise SwitchError(f"gate voltage {v_gate} outside [0, {vdd}]")
    if f.polarity == "n":
        return ON if v_gate > f.vth else OFF
    return ON if v_gate < vdd - f.vth else OFF


@dataclass
class TransistorNet:
    fets: list[FetDevice]
    nets: set[str]
    inputs: list[str]
    outputs: list[str]
    vdd: float = DEFAULT_VDD
    provenance: dict[str, str] = field(default_factory=dict)  # fet id -> gate id
    clocked: bool = False

    def validate(self):
        for f in self.fets:
            for n in (f.gate, f.source, f.drain):
                if n not in self.nets:
                    raise SwitchError(f"{f.id}: undeclared net {n!r}")
        for o in self.outputs:
            if o in (VDD, GND):
                raise SwitchError("rails cannot be outputs")
        missing = [f.id for f in self.fets if f.id not in self.provenance]
        if missing:
            raise SwitchError(f"FETs without provenance: {missing[:3]}")
        return self

    def with_thresholds(self, vth_n: float | None = None, vth_p: float | None = None) -> "TransistorNet":
        """Same structure with every n- (or p-) FET threshold replaced."""
        fets = []
        for f in self.fets:
            v = vth_n if f.polarity == "n" and vth_n is not None else vth_p if f.polarity == "p" and vth_p is not None else f.vth
            fets.append(FetDevice(f.id, f.polarity, f.gate, f.source, f.drain, v))
        return TransistorNet(fets, set(self.nets), list(self.inputs), list(self.outputs), self.vdd,
                             dict(self.provenance), self.clocked)

    def dumps(self) -> str:
        lines = [".inputs " + " ".join(self.inputs), ".outputs " + " ".join(self.outputs), f".vdd {self.vdd:g}"]
        for f in sorted(self.fets, key=lambda f: f.id):
            lines.append(f"{f.id} = FET({f.polarity}, {f.gate}, {f.source}, {f.drain}, {f.vth:g})")
        return "\n".join(lines) + "\n"

    def device_parameters(self) -> dict:
        vn = sorted({f.vth for f in self.fets if f.polarity == "n"})
        vp = sorted({f.vth for f in self.fets if f.polarity == "p"})
        return {"vdd": self.vdd, "vth_n": vn, "vth_p": vp}


# ---------------------------------------------------------------- expansion


class _Expander:
    def __init__(self, vdd: float, vth_n: float, vth_p: float):
        self.fets: list[FetDevice] = []
        self.nets: set[str] = {VDD, GND}
        self.prov: dict[str, str] = {}
        self.vdd, self.vth_n, self.vth_p = vdd, vth_n, vth_p

    def fet(self, owner: str, fid: str, pol: str, g: str, s: str, d: str):
        self.nets.update((g, s, d))
        vth = self.vth_n if pol == "n" else self.vth_p
        self.fets.append(FetDevice(fid, pol, g, s, d, vth))
        self.prov[fid] = owner

    def inv(self, owner: str, p: str, a: str, y: str):
        self.fet(owner, f"{p}/p0", "p", a, VDD, y)
        self.fet(owner, f"{p}/n0", "n", a, y, GND)

    def nand(self, owner: str, p: str, ins, y: str):
        for k, a in enumerate(ins):
            self.fet(owner, f"{p}/p{k}", "p", a, VDD, y)
        node = y
        for k, a in enumerate(ins):
            nxt = GND if k == len(ins) - 1 else f"{p}/s{k + 1}"
            self.fet(owner, f"{p}/n{k}", "n", a, node, nxt)
            node = nxt

    def nor(self, owner: str, p: str, ins, y: str):
        for k, a in enumerate(ins):
            self.fet(owner, f"{p}/n{k}", "n", a, y, GND)
        node = y
        for k, a in enumerate(ins):
            nxt = VDD if k == len(ins) - 1 else f"{p}/s{k + 1}"
            self.fet(owner, f"{p}/p{k}", "p", a, nxt, node)
            node = nxt

    def xor2(self, owner: str, p: str, a: str, b: str, y: str):
        self.nand(owner, f"{p}/q1", (a, b), f"{p}/t1")
        self.nand(owner, f"{p}/q2", (a, f"{p}/t1"), f"{p}/t2")
        self.nand(owner, f"{p}/q3", (b, f"{p}/t1"), f"{p}/t3")
        self.nand(owner, f"{p}/q4", (f"{p}/t2", f"{p}/t3"), y)

    def dff(self, owner: str, d: str, q: str):
        # master latch transparent on phi1, slave on phi2; NAND-based gated D latches
        p = owner
        self.inv(owner, f"{p}/dn", d, f"{p}/nd")
        self.nand(owner, f"{p}/ms", (d, PHI1), f"{p}/s1")
        self.nand(owner, f"{p}/mr", (f"{p}/nd", PHI1), f"{p}/r1")
        self.nand(owner, f"{p}/mq", (f"{p}/s1", f"{p}/mb"), f"{p}/m")
        self.nand(owner, f"{p}/mqb", (f"{p}/r1", f"{p}/m"), f"{p}/mb")
        self.nand(owner, f"{p}/ss", (f"{p}/m", PHI2), f"{p}/s2")
        self.nand(owner, f"{p}/sr", (f"{p}/mb", PHI2), f"{p}/r2")
        self.nand(owner, f"{p}/sq", (f"{p}/s2", f"{p}/qb"), q)
        self.nand(owner, f"{p}/sqb", (f"{p}/r2", q), f"{p}/qb")

    def gate(self, gid: str, kind: str, ins: tuple[str, ...]):
        y = gid
        if kind == "NOT":
            self.inv(gid, f"{gid}/inv", ins[0], y)
        elif kind == "NAND":
            self.nand(gid, f"{gid}/nand", ins, y)
        elif kind == "NOR":
            self.nor(gid, f"{gid}/nor", ins, y)
        elif kind == "AND":
            self.nand(gid, f"{gid}/nand", ins, f"{gid}/t")
            self.inv(gid, f"{gid}/inv", f"{gid}/t", y)
        elif kind == "OR":
            self.nor(gid, f"{gid}/nor", ins, f"{gid}/t")
            self.inv(gid, f"{gid}/inv", f"{gid}/t", y)
        elif kind == "XOR":
            acc = ins[0]
            for k, b in enumerate(ins[1:], 1):
                out = y if k == len(ins) - 1 else f"{gid}/x{k}"
                self.xor2(gid, f"{gid}/xor{k}", acc, b, out)
                acc = out
        elif kind == "CONST0":
            self.inv(gid, f"{gid}/tie", VDD, y)
        elif kind == "CONST1":
            self.inv(gid, f"{gid}/tie", GND, y)
        elif kind == "DFF":
            self.dff(gid, ins[0], y)
        else:
            raise UnsupportedGate(f"no CMOS mapping for {kind!r}")


def expand_to_transistors(n: Netlist, vdd: float = DEFAULT_VDD, vth_n: float | None = None,
                          vth_p: float | None = None) -> TransistorNet:
    """Static-CMOS expansion of every gate; DFFs become master/slave NAND latches on two clock phases."""
    flat = n.validate()
    vth_n = DEFAULT_VTH_FRACTION * vdd if vth_n is None else vth_n
    vth_p = DEFAULT_VTH_FRACTION * vdd if vth_p is None else vth_p
    ex = _Expander(vdd, vth_n, vth_p)
    ex.nets.update(flat.inputs)
    for g in flat.gates:
        ex.gate(g.id, g.kind, g.inputs)
        ex.nets.add(g.id)
    clocked = any(g.kind in SEQUENTIAL for g in flat.gates)
    inputs = list(flat.inputs) + ([PHI1, PHI2] if clocked else [])
    ex.nets.update(inputs)
    return TransistorNet(ex.fets, ex.nets, inputs, list(flat.outputs), vdd, ex.prov, clocked).validate()


# ---------------------------------------------------------------- settling


@dataclass
class _Component:
    nets: list[int]
    fets: list[int]
    sources: list[int]  # driven nets (rails, inputs) touching the component
    cache: dict = field(default_factory=dict)


class SwitchSim:
    """Incremental switch-level simulator over channel-connected components."""

    def __init__(self, t: TransistorNet):
        self.t = t
        self.vdd = t.vdd
        names = sorted(t.nets)
        self.nets = names
        self.index = {n: k for k, n in enumerate(names)}
        idx = self.index
        nnets = len(names)
        self.values = [X] * nnets
        self.driven = [False] * nnets
        for n in (VDD, GND, *t.inputs):
            self.driven[idx[n]] = True
        self.values[idx[VDD]] = 1
        self.values[idx[GND]] = 0

        self.fets = t.fets
        self.f_gate = [idx[f.gate] for f in t.fets]
        self.f_a = [idx[f.source] for f in t.fets]
        self.f_b = [idx[f.drain] for f in t.fets]
        # state lookup by gate value: 0, 1, X, Z
        self.f_table = []
        for f in t.fets:
            lo, hi = switch_state(f, 0.0, self.vdd), switch_state(f, self.vdd, self.vdd)
            unk = lo if lo == hi else UNKNOWN
            self.f_table.append((lo, hi, unk, unk))
        self.f_state = [tab[self.values[g]] for tab, g in zip(self.f_table, self.f_gate)]
        self.gate_fanout: list[list[int]] = [[] for _ in range(nnets)]
        for k, g in enumerate(self.f_gate):
            self.gate_fanout[g].append(k)

        # channel-connected components over undriven nets
        parent = list(range(nnets))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in zip(self.f_a, self.f_b):
            if not self.driven[a] and not self.driven[b]:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
        groups: dict[int, list[int]] = {}
        for k in range(nnets):
            if not self.driven[k]:
                groups.setdefault(find(k), []).append(k)
        self.comp_of = [-1] * nnets
        self.comps: list[_Component] = []
        for root in sorted(groups, key=lambda r: min(groups[r])):
            c = len(self.comps)
            for k in groups[root]:
                self.comp_of[k] = c
            self.comps.append(_Component(groups[root], [], []))
        self.fet_comp = []
        for k, (a, b) in enumerate(zip(self.f_a, self.f_b)):
            c = self.comp_of[a] if not self.driven[a] else self.comp_of[b]
            self.fet_comp.append(c)
            if c >= 0:
                self.comps[c].fets.append(k)
        for comp in self.comps:
            srcs = set()
            for k in comp.fets:
                for n in (self.f_a[k], self.f_b[k]):
                    if self.driven[n]:
                        srcs.add(n)
            comp.sources = sorted(srcs)
        self.pending: set[int] = set(range(len(self.comps)))
        self.fet_changed: dict[int, int] = {}  # fet -> state at window start
        self.net_changed: dict[int, int] = {}
        self.x_nets: dict[int, str] = {}
        self.evaluations = 0

    # -- driving
    def set_inputs(self, assignment: dict[str, int]):
        for net, v in assignment.items():
            k = self.index[net]
            if not self.driven[k]:
                raise SwitchError(f"{net!r} is not a primary input")
            if v not in (0, 1):
                raise SwitchError(f"input {net!r} must be 0 or 1")
            self._set_net(k, v)

    def _set_net(self, k: int, v: int):
        old = self.values[k]
        if old == v:
            return
        if k not in self.net_changed:
            self.net_changed[k] = old
        self.values[k] = v
        if self.driven[k]:
            for c in self._comps_touching_source(k):
                self.pending.add(c)
        for f in self.gate_fanout[k]:
            s = self.f_table[f][v]
            if s != self.f_state[f]:
                if f not in self.fet_changed:
                    self.fet_changed[f] = self.f_state[f]
                self.f_state[f] = s
                c = self.fet_comp[f]
                if c >= 0:
                    self.pending.add(c)

    def _comps_touching_source(self, k: int) -> list[int]:
        cache = getattr(self, "_src_comps", None)
        if cache is None:
            cache = {}
            for c, comp in enumerate(self.comps):
                for s in comp.sources:
                    cache.setdefault(s, []).append(c)
            self._src_comps = cache
        return cache.get(k, [])

    # -- resolution
    def _resolve(self, comp: _Component) -> tuple[int, ...]:
        key = tuple(self.f_state[f] for f in comp.fets) + tuple(self.values[s] for s in comp.sources)
        hit = comp.cache.get(key)
        if hit is not None:
            return hit
        local = {n: i for i, n in enumerate(comp.nets)}
        nn = len(comp.nets)
        adj_on: list[list[int]] = [[] for _ in range(nn)]
        adj_maybe: list[list[int]] = [[] for _ in range(nn)]
        seeds_on = {0: [], 1: [], X: []}
        seeds_maybe = {0: [], 1: [], X: []}
        for f in comp.fets:
            st = self.f_state[f]
            if st == OFF:
                continue
            a, b = self.f_a[f], self.f_b[f]
            for u, v in ((a, b), (b, a)):
                if u in local:
                    if v in local:
                        adj_maybe[local[u]].append(local[v])
                        if st == ON:
                            adj_on[local[u]].append(local[v])
                    else:
                        sv = self.values[v]
                        sv = X if sv == Z else sv
                        seeds_maybe[sv].append(local[u])
                        if st == ON:
                            seeds_on[sv].append(local[u])

        def reach(seeds, adj):
            seen = [False] * nn
            dq = deque(seeds)
            for s in seeds:
                seen[s] = True
            while dq:
                u = dq.popleft()
                for v in adj[u]:
                    if not seen[v]:
                        seen[v] = True
                        dq.append(v)
            return seen

        d1, d0 = reach(seeds_on[1], adj_on), reach(seeds_on[0], adj_on)
        p1, p0, px = reach(seeds_maybe[1], adj_maybe), reach(seeds_maybe[0], adj_maybe), reach(seeds_maybe[X], adj_maybe)
        out = []
        for i in range(nn):
            if d1[i] and d0[i]:
                out.append(-1)  # contention
            elif d1[i]:
                out.append(1 if not (p0[i] or px[i]) else X)
            elif d0[i]:
                out.append(0 if not (p1[i] or px[i]) else X)
            elif p1[i] or p0[i] or px[i]:
                out.append(X)
            else:
                out.append(Z)
        res = tuple(out)
        comp.cache[key] = res
        return res

    def settle(self, limit: int | None = None):
        limit = 4 * len(self.fets) + 16 if limit is None else limit
        queue = deque(sorted(self.pending))
        queued = set(self.pending)
        self.pending = set()
        count = 0
        while queue:
            c = queue.popleft()
            queued.discard(c)
            count += 1
            if count > limit:
                raise OscillationError(f"no fixpoint after {limit} component evaluations")
            comp = self.comps[c]
            res = self._resolve(comp)
            for n, v in zip(comp.nets, res):
                if v == -1:
                    v = X
                    self.x_nets[n] = "contention"
                elif v == X:
                    self.x_nets[n] = "unknown"
                else:
                    self.x_nets.pop(n, None)
                if self.values[n] != v:
                    self._set_net(n, v)
            for c2 in self.pending:
                if c2 not in queued:
                    queued.add(c2)
                    queue.append(c2)
            self.pending = set()
        self.evaluations += count

    # -- observation
    def get(self, net: str) -> int:
        return self.values[self.index[net]]

    def word(self, nets: list[str]) -> int | None:
        v = 0
        for k, n in enumerate(nets):
            b = self.values[self.index[n]]
            if b not in (0, 1):
                return None
            v |= b << k
        return v

    def diagnostics(self) -> list[tuple[str, str]]:
        return sorted((self.nets[k], why) for k, why in self.x_nets.items())

    def take_fet_changes(self) -> list[tuple[str, int]]:
        """FETs whose ON/OFF state differs from the start of the window."""
        out = []
        for f, old in self.fet_changed.items():
            new = self.f_state[f]
            if new != old and new != UNKNOWN:
                out.append((self.fets[f].id, new))
        self.fet_changed = {}
        self.net_changed = {}
        out.sort()
        return out


@dataclass
class SwitchResult:
    values: dict[str, int]
    diagnostics: list[tuple[str, str]]

    def __getitem__(self, net: str) -> int:
        return self.values[net]


def settle_switch_net(t: TransistorNet, inputs: dict[str, int]) -> SwitchResult:
    """Resolve every net of ``t`` for fully assigned 0/1 primary inputs."""
    missing = [i for i in t.inputs if i not in inputs]
    if missing:
        raise SwitchError(f"unassigned inputs {missing}")
    sim = SwitchSim(t)
    sim.set_inputs(inputs)
    sim.settle()
    return SwitchResult(dict(zip(sim.nets, sim.values)), sim.diagnostics())
