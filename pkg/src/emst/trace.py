"""Switching-event traces: streaming writer, reader, provenance, diffing.

A trace is JSON Lines.  The first line is ``{"hdr": {...}}``; every further
line is one event with keys in the fixed order ``c id s g u ia op src``:

    c    clock edge index (reset edges first)
    id   FET id (switch), net id (gate) or architectural target (isa)
    s    new state: "ON"/"OFF", a logic value, or a word
    g    originating gate id (or event kind at isa fidelity)
    u    micro-pc, null during reset
    ia   address of the instruction in progress, null before boot completes
    op   mnemonic (or RESET / BOOT)
    src  source line, null when unknown

Events within one edge are sorted by id, so the file is ordered by (c, id).
The trace identity is the SHA-256 of the file bytes.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

from . import micro
from .isa import MachineImage, mnemonic_of
from .vm import InputProvider, MachineState, Trap, step

FORMAT_VERSION = 1
REPORT_SCHEMA = 1
GRANULARITY = {"switch": "fet", "gate": "net", "isa": "arch"}
_KEYS = ("c", "id", "s", "g", "u", "ia", "op", "src")


class TraceError(Exception):
    pass


class IncompatibleTraces(TraceError):
    pass


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


def microcode_digest() -> str:
    return hashlib.sha256(micro.microcode_csv().encode()).hexdigest()


class Tracer:
    """Streaming trace sink.

    ``sink`` is a path or a binary file object.  ``prefix`` keeps only events
    whose id starts with it.  The running SHA-256 is available as
    :attr:`digest` once the tracer is closed.
    """

    def __init__(self, sink: str | Path | io.BufferedIOBase, prefix: str | None = None, extra: dict | None = None):
        if isinstance(sink, (str, Path)):
            self.path: Path | None = Path(sink)
            self._fh = open(self.path, "wb")
            self._own = True
        else:
            self.path = None
            self._fh = sink
            self._own = False
        self.prefix = prefix
        self.extra = dict(extra or {})
        self._sha = hashlib.sha256()
        self.events = 0
        self.digest: str | None = None
        self._srcmap: dict[int, tuple[int, int | None]] = {}
        self._open = False

    def _write(self, line: str):
        data = (line + "\n").encode("utf-8")
        self._sha.update(data)
        self._fh.write(data)

    def begin(self, img: MachineImage, inp: InputProvider, fidelity: str, device: dict):
        self._srcmap = dict(img.source_map)
        hdr = {
            "format": FORMAT_VERSION,
            "image": img.digest(),
            "input": inp.digest(),
            "fidelity": fidelity,
            "granularity": GRANULARITY[fidelity],
            "device": device,
            "microcode": microcode_digest(),
            "reset_edges": micro.RESET_EDGES if fidelity != "isa" else 0,
            "boot_edges": micro.BOOT_EDGES if fidelity != "isa" else 0,
            "filter": self.prefix,
        }
        hdr.update(self.extra)
        hdr["srcmap"] = {str(a): [asm, src] for a, (asm, src) in sorted(self._srcmap.items())}
        self._write(_dumps({"hdr": hdr}))
        self._open = True

    def _src(self, ia: int | None) -> int | None:
        if ia is None:
            return None
        hit = self._srcmap.get(ia)
        return None if hit is None else hit[1]

    def record(self, cycle: int, changes, ctx: "micro.EdgeContext"):
        """Write one edge's changes ``[(id, gate_id, state)]`` with the control context."""
        ia = ctx.instr_addr
        src = self._src(ia)
        for ident, gate, state in sorted(changes):
            if self.prefix and not ident.startswith(self.prefix):
                continue
            self._write(_dumps({"c": cycle, "id": ident, "s": state, "g": gate, "u": ctx.upc, "ia": ia,
                                "op": ctx.mnemonic, "src": src}))
            self.events += 1

    def record_arch(self, cycle: int, ident: str, state, kind: str, ia: int, op: str):
        if self.prefix and not ident.startswith(self.prefix):
            return
        self._write(_dumps({"c": cycle, "id": ident, "s": state, "g": kind, "u": None, "ia": ia, "op": op,
                            "src": self._src(ia)}))
        self.events += 1

    def close(self):
        if self.digest is None:
            self._fh.flush()
            if self._own:
                self._fh.close()
            self.digest = self._sha.hexdigest()


# ---------------------------------------------------------------- producing traces


def attach_tracer(sink, prefix: str | None = None, extra: dict | None = None) -> Tracer:
    """A tracer handle to pass to :func:`emst.micro.run_micro` or :func:`trace_run`."""
    return Tracer(sink, prefix, extra)


def _trace_isa(img: MachineImage, inp: InputProvider, tracer: Tracer, max_cycles: int, on_boundary=None):
    from .vm import CYCLE_LIMIT, HALTED, RunResult

    tracer.begin(img, inp, "isa", {})
    s = MachineState.from_image(img)
    events, outputs = [], []
    reason = CYCLE_LIMIT
    try:
        while s.cycle < max_cycles:
            pc, op = s.pc, mnemonic_of(s.mem[s.pc])
            try:
                _, ev = step(s, inp)
            except Trap as t:
                reason = t.reason
                tracer.record_arch(s.cycle, f"trap/{t.reason}", 1, "trap", pc, op)
                break
            recs = sorted((f"{e.kind}/{e.target}" if e.target else e.kind, e.value, e.kind) for e in ev)
            for ident, value, kind in recs:
                tracer.record_arch(s.cycle - 1, ident, value, kind, pc, op)
            events.extend(ev)
            outputs.extend((int(e.target), e.value) for e in ev if e.kind == "out")
            if s.halted:
                reason = HALTED
                break
            if on_boundary is not None:
                on_boundary(s)
    finally:
        tracer.close()
    res = RunResult(s, events, reason, outputs, list(inp.log))
    res.in_cycles = [c for c, _, _ in inp.log]
    return res


def trace_run(img: MachineImage, stream, fidelity: str, sink, prefix: str | None = None,
              max_cycles: int = 5_000_000, extra: dict | None = None, inp: InputProvider | None = None,
              on_boundary=None):
    """Run ``img`` at ``fidelity`` with a tracer on ``sink``; returns ``(RunResult, Tracer)``.

    ``on_boundary`` receives the machine (a :class:`MachineState` or a
    :class:`emst.micro.MicroRun`) after each completed instruction.
    """
    inp = inp if inp is not None else InputProvider(stream)
    tracer = attach_tracer(sink, prefix, extra)
    if fidelity == "isa":
        return _trace_isa(img, inp, tracer, max_cycles, on_boundary), tracer
    res = micro.run_micro(img, inp, max_edges=max_cycles, fidelity=fidelity, tracer=tracer,
                          on_boundary=on_boundary)
    return res, tracer


# ---------------------------------------------------------------- reading


@dataclass
class Trace:
    """A trace on disk (or in memory); events are read lazily."""

    header: dict
    _data: Path | bytes

    @classmethod
    def open(cls, src: str | Path | bytes) -> "Trace":
        first = _first_line(src)
        try:
            hdr = json.loads(first)["hdr"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise TraceError("missing trace header") from None
        if hdr.get("format") != FORMAT_VERSION:
            raise TraceError(f"unsupported trace format {hdr.get('format')!r}")
        return cls(hdr, src if isinstance(src, bytes) else Path(src))

    def lines(self) -> Iterator[str]:
        fh = io.BytesIO(self._data) if isinstance(self._data, bytes) else open(self._data, "rb")
        with fh:
            fh.readline()
            for raw in fh:
                yield raw.decode("utf-8").rstrip("\n")

    def __iter__(self) -> Iterator[dict]:
        for line in self.lines():
            yield json.loads(line)

    def event(self, index: int) -> dict:
        if index < 0:
            raise IndexError("event index out of range")
        for k, line in enumerate(self.lines()):
            if k == index:
                return json.loads(line)
        raise IndexError("event index out of range")

    def digest(self) -> str:
        h = hashlib.sha256()
        if isinstance(self._data, bytes):
            h.update(self._data)
        else:
            with open(self._data, "rb") as fh:
                for chunk in iter(lambda: fh.read(1 << 20), b""):
                    h.update(chunk)
        return h.hexdigest()

    def __len__(self) -> int:
        return sum(1 for _ in self.lines())


def _first_line(src) -> str:
    if isinstance(src, bytes):
        return src.split(b"\n", 1)[0].decode("utf-8")
    with open(src, "rb") as fh:
        return fh.readline().decode("utf-8")


def read_trace(src) -> Trace:
    return Trace.open(src)


def file_digest(path: str | Path) -> str:
    return Trace.open(path).digest()


# ---------------------------------------------------------------- provenance


@dataclass(frozen=True)
class ProvenanceChain:
    event: int
    cycle: int
    fet: str | None
    gate: str
    micro_pc: int | None
    micro_op: str | None
    instr_addr: int | None
    mnemonic: str | None
    asm_line: int | None
    source_line: int | None
    phase: str

    def links(self) -> list[str]:
        out = []
        if self.fet:
            out.append(f"fet {self.fet}")
        out.append(f"gate {self.gate}")
        if self.micro_pc is not None:
            out.append(f"micro-op {self.micro_pc}: {self.micro_op}")
        if self.instr_addr is not None:
            out.append(f"instruction {self.instr_addr:#05x} {self.mnemonic}")
        if self.asm_line is not None:
            out.append(f"assembly line {self.asm_line}")
        if self.source_line is not None:
            out.append(f"source line {self.source_line}")
        if self.phase != "run":
            out.append(self.phase)
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def _resolve(hdr: dict, ev: dict, index: int) -> ProvenanceChain:
    smap = hdr.get("srcmap", {})
    granularity = hdr.get("granularity")
    op = ev["op"]
    phase = op.lower() if op in ("RESET", "BOOT") else "run"
    ia = ev["ia"]
    asm = src = None
    if ia is not None and phase == "run":
        hit = smap.get(str(ia))
        if hit is not None:
            asm, src = hit
    upc = ev["u"]
    mop = None
    if upc is not None:
        if phase == "boot":
            mop = micro.BOOT[upc].describe()
        elif upc < micro.FETCH_LEN:
            mop = "fetch " + micro.FETCH[upc].describe()
        else:
            opcode = next((k for k in range(16) if micro._opname(k) == op), 15)
            mop = micro.microcode_for(opcode)[upc].describe()
    return ProvenanceChain(index, ev["c"], ev["id"] if granularity == "fet" else None, ev["g"], upc, mop,
                           ia if phase == "run" else None, op if phase == "run" else None, asm, src, phase)


def provenance_of(t: Trace | str | Path, index: int) -> ProvenanceChain:
    t = t if isinstance(t, Trace) else Trace.open(t)
    return _resolve(t.header, t.event(index), index)


# ---------------------------------------------------------------- diffing


@dataclass
class TraceDiff:
    identical: bool
    first_divergence_cycle: int | None = None
    per_cycle: dict[int, int] = field(default_factory=dict)
    events_a: int = 0
    events_b: int = 0
    first_event: dict | None = None  # {"trace": "a"|"b", "index": int, "record": {...}}

    @property
    def total(self) -> int:
        return sum(self.per_cycle.values())

    def summary(self) -> dict:
        return {"identical": self.identical, "first_divergence_cycle": self.first_divergence_cycle,
                "differing_cycles": len(self.per_cycle), "symmetric_difference": self.total,
                "events_a": self.events_a, "events_b": self.events_b}

    def to_dict(self) -> dict:
        d = self.summary()
        d["per_cycle"] = {str(c): n for c, n in sorted(self.per_cycle.items())}
        d["first_event"] = self.first_event
        return d

    def text(self) -> str:
        if self.identical:
            return "Identical"
        return (f"Divergent: first divergence at cycle {self.first_divergence_cycle}; "
                f"{len(self.per_cycle)} differing cycles, {self.total} events in the symmetric difference")


_COMPAT = ("fidelity", "granularity", "device", "filter", "format")


def _groups(t: Trace):
    """Yield ``(cycle, [(line, index)])`` in file order."""
    cur, buf = None, []
    for k, line in enumerate(t.lines()):
        c = int(line[5:line.index(",")])  # records start with {"c":
        if c != cur and buf:
            yield cur, buf
            buf = []
        cur = c
        buf.append((line, k))
    if buf:
        yield cur, buf


def diff_traces(a: Trace | str | Path, b: Trace | str | Path) -> TraceDiff:
    a = a if isinstance(a, Trace) else Trace.open(a)
    b = b if isinstance(b, Trace) else Trace.open(b)
    for key in _COMPAT:
        if a.header.get(key) != b.header.get(key):
            raise IncompatibleTraces(f"headers differ in {key!r}: {a.header.get(key)!r} vs {b.header.get(key)!r}")
    ga, gb = _groups(a), _groups(b)
    d = TraceDiff(True)
    ia = next(ga, None)
    ib = next(gb, None)
    while ia is not None or ib is not None:
        ca = ia[0] if ia is not None else None
        cb = ib[0] if ib is not None else None
        if cb is None or (ca is not None and ca < cb):
            c, la, lb = ca, ia[1], []
            ia = next(ga, None)
        elif ca is None or cb < ca:
            c, la, lb = cb, [], ib[1]
            ib = next(gb, None)
        else:
            c, la, lb = ca, ia[1], ib[1]
            ia, ib = next(ga, None), next(gb, None)
        d.events_a += len(la)
        d.events_b += len(lb)
        if [x for x, _ in la] == [x for x, _ in lb]:
            continue
        sa, sb = {x for x, _ in la}, {x for x, _ in lb}
        sym = sa ^ sb
        if not sym:
            # same set in a different order cannot happen for sorted records, but stay exact
            sym = {la[0][0]}
        d.per_cycle[c] = len(sym)
        if d.identical:
            d.identical = False
            d.first_divergence_cycle = c
            cand = [(json.loads(x)["id"], "a", k, x) for x, k in la if x in sym]
            cand += [(json.loads(x)["id"], "b", k, x) for x, k in lb if x in sym]
            _, which, k, x = min(cand)
            d.first_event = {"trace": which, "index": k, "record": json.loads(x)}
    return d


# ---------------------------------------------------------------- counterfactuals


def counterfactual_report(image_a: MachineImage, image_b: MachineImage, stream, fidelity: str = "gate",
                          max_cycles: int = 5_000_000, workdir: str | Path | None = None,
                          prefix: str | None = None) -> dict:
    """Run both images on the same input with tracing and diff the traces."""
    sinks = []
    for tag in ("a", "b"):
        sinks.append(Path(workdir) / f"{tag}.trace.jsonl" if workdir is not None else io.BytesIO())
    results, traces = [], []
    for img, sink in zip((image_a, image_b), sinks):
        res, tr = trace_run(img, stream, fidelity, sink, prefix, max_cycles)
        results.append(res)
        traces.append(Trace.open(sink if isinstance(sink, Path) else sink.getvalue()))
    d = diff_traces(*traces)
    prov = None
    if d.first_event is not None:
        t = traces[0] if d.first_event["trace"] == "a" else traces[1]
        prov = _resolve(t.header, d.first_event["record"], d.first_event["index"]).to_dict()
    return {
        "schema": REPORT_SCHEMA,
        "fidelity": fidelity,
        "runs": [{"image": img.digest(), "trace": t.digest(), "halt": r.halt_reason,
                  "outputs": [[p, w] for p, w in r.outputs]}
                 for img, t, r in zip((image_a, image_b), traces, results)],
        "diff": d.to_dict(),
        "provenance": prov,
    }


def report_text(rep: dict) -> str:
    lines = []
    for tag, r in zip("ab", rep["runs"]):
        lines.append(f"run {tag}: {r['halt']} outputs={[w for _, w in r['outputs']]} trace={r['trace'][:16]}")
    d = rep["diff"]
    lines.append("Identical" if d["identical"] else
                 f"Divergent at cycle {d['first_divergence_cycle']} "
                 f"({d['differing_cycles']} cycles, {d['symmetric_difference']} events differ)")
    if rep["provenance"]:
        p = rep["provenance"]
        chain = ProvenanceChain(**p).links()
        lines.append("first divergent event: " + " -> ".join(chain))
    return "\n".join(lines) + "\n"
