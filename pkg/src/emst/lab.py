"""Supervenience experiments: run scenario pairs and judge whether the later
trace is fixed by the initial machine state.

Five scenario kinds are supported:

    FixedProgram   same image and scripted input twice; expected to hold
    DelayedLoad    an idle machine receives the image at different cycles
    Interactive    same image, different scripted input streams
    Adaptive       the OneMax guest seeded from port 1 with different seeds
    Entropy        a guest branching on entropy-port words (record/replay)

Verdicts come from trace digests alone: ``DiachronicHolds`` iff every run's
trace (event stream) is identical.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import secrets
import tempfile
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

from . import compiler, lang, micro
from .isa import MEM_WORDS, WORD_MASK, MachineImage, encode
from .trace import Trace, _trace_isa, attach_tracer, diff_traces
from .vm import InputProvider, MachineState, load_input_stream

SCENARIO_SCHEMA = 1
KINDS = ("FixedProgram", "DelayedLoad", "Interactive", "Adaptive", "Entropy")
HOLDS, FAILS = "DiachronicHolds", "DiachronicFails"
ENTROPY_PORT = 2
SEED_PORT = 1
ENTROPY_FORMAT = 1

NARRATIVE = {
    "FixedProgram": "Closed system: the program and every input are present at the start, so each later state "
                    "is fixed by the initial one and replays agree event for event.",
    "DelayedLoad": "The program arrives from outside after start-up. The state before the load does not fix what "
                   "happens next; the traces part at the earlier load.",
    "Interactive": "Data arrives while the program runs. Runs from the same initial state part where the "
                   "streams first differ.",
    "Adaptive": "A search seeded from the start-cycle register. Different seeds give different paths through "
                "the search even when both reach the same optimum.",
    "Entropy": "The guest branches on draws from an entropy source outside the machine. Replays of one "
               "recording agree; different draws part at the first differing word.",
}


class ScenarioError(Exception):
    pass


# ---------------------------------------------------------------- guests


def corpus_names() -> list[str]:
    return sorted(p.name for p in resources.files("emst").joinpath("corpus").iterdir() if p.name.endswith(".mhl"))


def corpus_source(name: str) -> lang.SourceProgram:
    if not name.endswith(".mhl"):
        name += ".mhl"
    text = resources.files("emst").joinpath("corpus").joinpath(name).read_text()
    return lang.SourceProgram(text, name[:-4])


_GA = """\
# OneMax hill climbing: four 16-bit genomes, single-bit mutations
# drawn from a linear congruential generator seeded on port 1
var g[4];
var f[4];
var x;
var gen;
var best;
var k;
var j;
var t;
var b;
var m;
read x, 1;
best = 0;
k = 0;
while k < 4 {{
    x = x + x + x + x + x + 1;
    g[k] = {init};
    t = g[k];
    f[k] = 0;
    j = 0;
    while j < 16 {{
        if t < 0 {{ f[k] = f[k] + 1; }}
        t = t + t;
        j = j + 1;
    }}
    if f[k] > best {{ best = f[k]; }}
    k = k + 1;
}}
gen = 0;
while best < 16 and gen < {cap} {{
    gen = gen + 1;
    k = 0;
    while k < 4 {{
        # next LCG state; its top four bits choose the bit to flip
        x = x + x + x + x + x + 1;
        t = x;
        b = 0;
        j = 0;
        while j < 4 {{
            b = b + b;
            if t < 0 {{ b = b + 1; }}
            t = t + t;
            j = j + 1;
        }}
        m = 1;
        j = 0;
        while j < b {{
            m = m + m;
            j = j + 1;
        }}
        # shift bit b of the genome into the sign position
        t = g[k];
        j = b;
        while j < 15 {{
            t = t + t;
            j = j + 1;
        }}
        # a clear bit flips to one (fitness + 1); flipping a set bit would lose, so it is rejected
        if t >= 0 {{
            g[k] = g[k] + m;
            f[k] = f[k] + 1;
            if f[k] > best {{ best = f[k]; }}
        }}
        k = k + 1;
    }}
}}
write gen;
write best;
k = 0;
while k < 4 {{
    write g[k], 1;
    k = k + 1;
}}
halt;
"""


def ga_guest_program(initial_genome: int | None = None, generation_cap: int = 200) -> lang.SourceProgram:
    """OneMax guest.  Port 0 receives the generation count then the best
    fitness; port 1 receives the final population.  With ``initial_genome``
    every individual starts from that word instead of an LCG draw."""
    if not 1 <= generation_cap <= 32767:
        raise ValueError("generation cap must lie in 1..32767")
    init = "x" if initial_genome is None else str(initial_genome & WORD_MASK)
    return lang.SourceProgram(_GA.format(init=init, cap=generation_cap), "onemax")


# ---------------------------------------------------------------- entropy


class LiveEntropy(InputProvider):
    """Scripted ports plus a live entropy port drawing from the OS."""

    def __init__(self, stream=(), port: int = ENTROPY_PORT):
        super().__init__(stream, mode="record")
        self.port = port
        self.recorded: list[int] = []

    def more(self, port: int) -> int | None:
        if port != self.port:
            return None
        w = secrets.randbits(16)
        self.recorded.append(w)
        return w

    def save(self, path: str | Path):
        write_entropy_file(path, self.recorded)


def write_entropy_file(path: str | Path, words: list[int]):
    doc = {"format": ENTROPY_FORMAT, "port": ENTROPY_PORT, "words": [w & WORD_MASK for w in words]}
    Path(path).write_text(json.dumps(doc, separators=(",", ":")) + "\n")


def read_entropy_file(path: str | Path) -> list[int]:
    try:
        doc = json.loads(Path(path).read_text())
        if doc["format"] != ENTROPY_FORMAT or doc["port"] != ENTROPY_PORT:
            raise ValueError("unsupported entropy file")
        words = doc["words"]
        if not all(isinstance(w, int) and 0 <= w <= WORD_MASK for w in words):
            raise ValueError("entropy words must be 16-bit")
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise ScenarioError(f"corrupt entropy file {path}: {exc}") from None
    return words


def entropy_source(mode: str, file: str | Path | None = None, stream=()) -> InputProvider:
    """``replay`` delivers the words of ``file`` on port 2; ``record`` draws live words."""
    if mode == "replay":
        if file is None:
            raise ScenarioError("replay needs an entropy file")
        words = read_entropy_file(file)
        return InputProvider(list(stream) + [(ENTROPY_PORT, w) for w in words], mode="replay")
    if mode == "record":
        return LiveEntropy(stream)
    raise ValueError(f"unknown entropy mode {mode!r}")


# ---------------------------------------------------------------- scenarios


@dataclass
class RunSpec:
    name: str
    image: MachineImage
    stream: list[tuple[int, int]] = field(default_factory=list)
    load_cycle: int | None = None
    entropy_file: str | None = None
    live: bool = False
    record_to: str | None = None


@dataclass
class Scenario:
    name: str
    kind: str
    runs: list[RunSpec]
    fidelity: str = "isa"
    max_cycles: int = 1_000_000

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScenarioError(f"unknown scenario kind {self.kind!r}")
        if self.fidelity not in ("isa", "gate", "switch"):
            raise ScenarioError(f"unknown fidelity {self.fidelity!r}")
        if len(self.runs) < 2:
            raise ScenarioError("a scenario needs at least two runs")
        if self.kind == "FixedProgram":
            first = self.runs[0]
            for r in self.runs[1:]:
                if r.image.to_bytes() != first.image.to_bytes() or r.stream != first.stream:
                    raise ScenarioError("FixedProgram runs must share one image and one scripted input")
            if any(r.live or r.entropy_file for r in self.runs):
                raise ScenarioError("FixedProgram inputs must be fully scripted")
        if self.kind == "DelayedLoad":
            for r in self.runs:
                if r.load_cycle is None or r.load_cycle < 1:
                    raise ScenarioError("DelayedLoad runs need load_cycle >= 1")
                if r.image.entry_point != 0:
                    raise ScenarioError("DelayedLoad images must enter at address 0")
        if self.kind == "Entropy":
            for r in self.runs:
                if not (r.entropy_file or r.live):
                    raise ScenarioError("Entropy runs need an entropy file or a live source")


@dataclass
class RunOutcome:
    name: str
    trace_digest: str
    events_digest: str
    halt: str
    outputs: list[tuple[int, int]]
    deliveries: list[tuple[int, int, int]]
    in_cycles: list[int]
    entropy_mode: str | None
    load_cycle: int | None
    load_trace_cycle: int | None = None


@dataclass
class ScenarioReport:
    scenario: str
    kind: str
    fidelity: str
    runs: list[RunOutcome]
    diffs: list[dict]
    verdict: str
    first_divergence: int | None
    witness: int | None
    witness_reason: str | None
    narrative: str

    def to_dict(self) -> dict:
        return {
            "schema": SCENARIO_SCHEMA,
            "scenario": self.scenario,
            "kind": self.kind,
            "fidelity": self.fidelity,
            "verdict": self.verdict,
            "first_divergence": self.first_divergence,
            "witness": self.witness,
            "witness_reason": self.witness_reason,
            "runs": [{"name": r.name, "trace": r.trace_digest, "events": r.events_digest, "halt": r.halt,
                      "outputs": [[p, w] for p, w in r.outputs], "inputs": len(r.deliveries),
                      "entropy": r.entropy_mode, "load_cycle": r.load_cycle} for r in self.runs],
            "diffs": self.diffs,
            "narrative": self.narrative,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def text(self) -> str:
        lines = [f"scenario {self.scenario} ({self.kind}, {self.fidelity})"]
        for r in self.runs:
            outs = [w for p, w in r.outputs if p == 0]
            lines.append(f"  run {r.name}: {r.halt}, trace {r.trace_digest[:16]}, port-0 outputs {outs}")
        for d in self.diffs:
            state = "identical" if d["identical"] else f"diverge at cycle {d['first_divergence_cycle']}"
            lines.append(f"  {d['a']} vs {d['b']}: {state}")
        verdict = self.verdict
        if self.verdict == FAILS:
            verdict += f" (first divergence {self.first_divergence}, witness {self.witness}: {self.witness_reason})"
        lines.append(f"  verdict: {verdict}")
        lines.append(f"  {self.narrative}")
        return "\n".join(lines) + "\n"


def idle_image() -> MachineImage:
    """A machine with nothing loaded: word 0 jumps to itself."""
    words = [0] * MEM_WORDS
    words[0] = encode("JMP", 0)
    return MachineImage(words, 0, {})


def _events_digest(path: Path) -> str:
    h = hashlib.sha256()
    for line in Trace.open(path).lines():
        h.update(line.encode() + b"\n")
    return h.hexdigest()


def _execute(s: Scenario, spec: RunSpec, path: Path) -> RunOutcome:
    entropy_mode = None
    if spec.live:
        inp = entropy_source("record", stream=spec.stream)
        entropy_mode = "record"
    elif spec.entropy_file:
        inp = entropy_source("replay", spec.entropy_file, spec.stream)
        entropy_mode = "replay"
    else:
        inp = InputProvider(spec.stream)
    extra = {"scenario": s.name}
    if entropy_mode:
        extra["entropy"] = entropy_mode
    img = spec.image
    loaded: list[int] = []
    if s.kind == "DelayedLoad":
        extra["load_cycle"] = spec.load_cycle
        program = spec.image
        img = idle_image()

        def hook(m):
            # m is a MachineState (isa) or a MicroRun; both expose a mutable mem
            isa_level = isinstance(m, MachineState)
            n = m.cycle if isa_level else m.instructions
            if n == spec.load_cycle:
                m.mem[:] = list(program.words)
                cyc = m.cycle if isa_level else m.edge
                loaded.append(cyc)
                tracer.record_arch(cyc, "load", program.digest()[:16], "load", None, "LOAD")
    else:
        hook = None

    tracer = attach_tracer(path, None, extra)
    if s.fidelity == "isa":
        res = _trace_isa(img, inp, tracer, s.max_cycles, hook)
    else:
        res = micro.run_micro(img, inp, max_edges=s.max_cycles, fidelity=s.fidelity, tracer=tracer,
                              on_boundary=hook)
    if spec.live and spec.record_to:
        inp.save(spec.record_to)
    return RunOutcome(spec.name, tracer.digest, _events_digest(path), res.halt_reason, list(res.outputs),
                      list(res.deliveries), list(res.in_cycles), entropy_mode, spec.load_cycle,
                      loaded[0] if loaded else None)


def _first_input_difference(a: RunOutcome, b: RunOutcome) -> int | None:
    """Trace cycle of the first delivery whose (port, word) differs between the runs."""
    for k, (da, db) in enumerate(zip(a.deliveries, b.deliveries)):
        if da[1:] != db[1:]:
            return min(a.in_cycles[k], b.in_cycles[k])
    n = min(len(a.deliveries), len(b.deliveries))
    if len(a.deliveries) != len(b.deliveries):
        longer = a if len(a.deliveries) > n else b
        return longer.in_cycles[n]
    return None


def run_scenario(s: Scenario, workdir: str | Path | None = None) -> ScenarioReport:
    """Execute every run of ``s``, diff all pairs and derive the verdict."""
    with tempfile.TemporaryDirectory() as tmp:
        base = Path(workdir) if workdir is not None else Path(tmp)
        base.mkdir(parents=True, exist_ok=True)
        paths = [base / f"{s.name}.{r.name}.trace.jsonl" for r in s.runs]
        outcomes = [_execute(s, r, p) for r, p in zip(s.runs, paths)]
        diffs, first = [], None
        for (i, a), (j, b) in combinations(enumerate(outcomes), 2):
            d = diff_traces(paths[i], paths[j])
            entry = {"a": a.name, "b": b.name, **d.summary()}
            diffs.append(entry)
            if not d.identical and (first is None or d.first_divergence_cycle < first):
                first = d.first_divergence_cycle

    holds = all(d["identical"] for d in diffs)
    witness = reason = None
    if not holds:
        witness, reason = _witness(s, outcomes, first)
    return ScenarioReport(s.name, s.kind, s.fidelity, outcomes, diffs, HOLDS if holds else FAILS,
                          first, witness, reason, NARRATIVE[s.kind])


def _witness(s: Scenario, outcomes: list[RunOutcome], first: int) -> tuple[int, str]:
    if s.kind == "DelayedLoad":
        return _load_cycle_in_trace(s, outcomes), "earliest external program load"
    cands = []
    for a, b in combinations(outcomes, 2):
        c = _first_input_difference(a, b)
        if c is not None:
            cands.append(c)
    if cands:
        label = {"Adaptive": "first differing seed delivery", "Entropy": "first differing entropy word"}
        return min(cands), label.get(s.kind, "first differing input consumption")
    return first, "first divergent trace event"


def _load_cycle_in_trace(s: Scenario, outcomes: list[RunOutcome]) -> int:
    cycles = [o.load_trace_cycle for o in outcomes if o.load_trace_cycle is not None]
    if not cycles:
        raise ScenarioError("no run reached its load cycle")
    return min(cycles)


# ---------------------------------------------------------------- scenario files


def _parse_stream(text: str) -> list[tuple[int, int]]:
    out = []
    for tok in text.replace("\n", ",").split(","):
        tok = tok.strip()
        if not tok:
            continue
        port, _, word = tok.rpartition(":")
        out.append((int(port) if port else 0, int(word, 0) & WORD_MASK))
    return out


def _load_program(ref: str, base: Path) -> MachineImage:
    if ref == "ga" or ref.startswith("ga:"):
        _, _, init = ref.partition(":")
        src = ga_guest_program(int(init, 0) if init else None)
        return compiler.build_image(src)[2]
    if ref.startswith("corpus:"):
        return compiler.build_image(corpus_source(ref[7:]))[2]
    path = (base / ref) if not Path(ref).is_absolute() else Path(ref)
    if path.suffix == ".mhl":
        return compiler.build_image(lang.SourceProgram(path.read_text(), path.stem))[2]
    return MachineImage.load(path)


def load_scenario(path: str | Path, seedless: bool = False) -> Scenario:
    """Read an INI scenario file (schema 1).

    ``[scenario]`` holds ``schema``, ``name``, ``kind``, ``fidelity``,
    ``max_cycles`` and a default ``program``.  Each ``[run.<name>]`` section may
    set ``program``, ``input`` (``word`` or ``port:word`` items, comma
    separated), ``input_file`` (JSON stream), ``seed`` (delivered on port 1),
    ``load_cycle``, ``entropy_file`` and ``live`` / ``record_to``.
    """
    path = Path(path)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        if not cp.read(path):
            raise ScenarioError(f"cannot read {path}")
    except configparser.Error as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from None
    if "scenario" not in cp:
        raise ScenarioError("missing [scenario] section")
    sec = cp["scenario"]
    if sec.getint("schema", SCENARIO_SCHEMA) != SCENARIO_SCHEMA:
        raise ScenarioError(f"unsupported scenario schema {sec.get('schema')}")
    base = path.parent
    default_prog = sec.get("program")
    runs = []
    for name in cp.sections():
        if not name.startswith("run."):
            continue
        r = cp[name]
        ref = r.get("program", default_prog)
        if ref is None:
            raise ScenarioError(f"[{name}] has no program")
        stream = []
        if "seed" in r:
            stream.append((SEED_PORT, int(r["seed"], 0) & WORD_MASK))
        if "input_file" in r:
            stream += load_input_stream(base / r["input_file"])
        if "input" in r:
            stream += _parse_stream(r["input"])
        live = r.getboolean("live", False)
        if live and seedless:
            raise ScenarioError("live entropy refused under --seedless")
        ef = r.get("entropy_file")
        runs.append(RunSpec(name[4:], _load_program(ref, base), stream,
                            r.getint("load_cycle") if "load_cycle" in r else None,
                            str(base / ef) if ef else None, live,
                            str(base / r["record_to"]) if "record_to" in r else None))
    return Scenario(sec.get("name", path.stem), sec.get("kind", ""), runs, sec.get("fidelity", "isa"),
                    sec.getint("max_cycles", 1_000_000))
