"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 input error, 3 runtime trap, 4 verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import FORMAT_VERSIONS, __version__, blocks, compiler, isa, lab, lang, netlist, physics, trace
from .vm import HALTED, InputProvider, load_input_stream, run

OK, USAGE, INPUT_ERROR, TRAP, VERIFY_FAIL = 0, 1, 2, 3, 4
LEVELS = {"isa": "isa", "micro": "gate", "gate": "gate", "switch": "switch"}

INPUT_ERRORS = (lang.LangError, isa.AsmError, isa.ImageFormatError, netlist.NetlistError, trace.TraceError,
                lab.ScenarioError, physics.PhysicsError, compiler.CapacityExceeded, OSError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_image(path: str) -> isa.MachineImage:
    p = Path(path)
    if p.suffix == ".mhl":
        return compiler.build_image(lang.SourceProgram(p.read_text(), p.stem))[2]
    if p.suffix in (".asm", ".s"):
        return isa.assemble(isa.parse_assembly(p.read_text()))
    return isa.MachineImage.load(p)


def _read_stream(path: str | None) -> list[tuple[int, int]]:
    if path is None:
        return []
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, list) and all(isinstance(v, int) for v in raw):
        return [(0, v & isa.WORD_MASK) for v in raw]
    return load_input_stream(path)


# ---------------------------------------------------------------- subcommands


def cmd_compile(a) -> int:
    src = lang.SourceProgram(Path(a.source).read_text(), Path(a.source).stem)
    _, asm, _ = compiler.build_image(src)
    _emit(asm.render(), a.out)
    return OK


def cmd_asm(a) -> int:
    img = isa.assemble(isa.parse_assembly(Path(a.source).read_text()))
    out = a.out or str(Path(a.source).with_suffix(".img"))
    img.save(out)
    if a.json:
        print(json.dumps({"image": out, "digest": img.digest(), "entry": img.entry_point}))
    return OK


def cmd_disasm(a) -> int:
    _emit(isa.disassemble(isa.MachineImage.load(a.image)).render(), a.out)
    return OK


def _run_level(img, stream, level: str, max_cycles: int):
    fid = LEVELS[level]
    if fid == "isa":
        return run(img, InputProvider(stream), max_cycles)
    from .micro import run_micro

    return run_micro(img, InputProvider(stream), max_edges=max_cycles, fidelity=fid)


def cmd_run(a) -> int:
    img = _read_image(a.image)
    stream = _read_stream(a.input)
    res = _run_level(img, stream, a.level, a.max_cycles)
    if a.json:
        doc = {"level": a.level, "halt": res.halt_reason, "outputs": [[p, w] for p, w in res.outputs],
               "pc": res.state.pc, "regs": res.state.regs, "instructions": res.state.cycle}
        _emit(json.dumps(doc) + "\n", a.out)
    else:
        lines = [f"out[{p}] {w}" for p, w in res.outputs] + [f"halt {res.halt_reason}"]
        _emit("\n".join(lines) + "\n", a.out)
    return OK if res.halt_reason == HALTED else TRAP


def cmd_trace(a) -> int:
    img = _read_image(a.image)
    stream = _read_stream(a.input)
    out = a.out or "run.trace.jsonl"
    res, tr = trace.trace_run(img, stream, a.fidelity, out, a.filter, a.max_cycles)
    msg = {"trace": out, "sha256": tr.digest, "events": tr.events, "halt": res.halt_reason}
    print(json.dumps(msg) if a.json else f"{out} {tr.digest} ({tr.events} events, {res.halt_reason})")
    return OK if res.halt_reason == HALTED else TRAP


def cmd_diff(a) -> int:
    d = trace.diff_traces(a.a, a.b)
    if a.json:
        _emit(json.dumps(d.to_dict()) + "\n", a.out)
    else:
        text = d.text()
        if d.first_event is not None:
            t = trace.Trace.open(a.a if d.first_event["trace"] == "a" else a.b)
            chain = trace.provenance_of(t, d.first_event["index"])
            text += "\nfirst divergent event: " + " -> ".join(chain.links())
        _emit(text + "\n", a.out)
    return OK


def cmd_equiv(a) -> int:
    if a.block:
        na = blocks.synthesize_block(a.block, a.width, a.ways, 0)
        nb = blocks.synthesize_block(a.block, a.width, a.ways, 1)
    else:
        if not (a.a and a.b):
            raise UsageError("equiv needs two netlist files or --block")
        na, nb = netlist.load(a.a), netlist.load(a.b)
    r = netlist.equivalent(na, nb, cut_dffs=a.cut_dffs)
    if a.json:
        print(json.dumps({"equivalent": r.equivalent, "counterexample": r.counterexample,
                          "gates": [na.gate_count(), nb.gate_count()]}))
    elif r.equivalent:
        print(f"equivalent ({na.gate_count()} vs {nb.gate_count()} gates)")
    else:
        print(f"NOT equivalent; counterexample {r.counterexample}")
        print(f"  {r.outputs_a}\n  {r.outputs_b}")
    return OK if r.equivalent else VERIFY_FAIL


def _zone(a, n: int) -> np.ndarray:
    return np.linspace(-np.pi / a, np.pi / a, n)


def cmd_device(a) -> int:
    kind = a.kernel
    if kind == "band":
        k = np.array(a.k) if a.k else _zone(a.a, a.points)
        rows = physics.band_energies(a.eps0, a.t, a.a, k).rows()
    elif kind == "phonon":
        k = np.array(a.k) if a.k else _zone(a.a, a.points)
        rows = physics.phonon_dispersion(a.K, a.M, a.a, k).rows()
    elif kind == "drude":
        sigma = physics.drude_conductivity(physics.DrudeParams(a.n, a.tau, a.m))
        rows = [("n (1/m^3)", "tau (s)", "m (kg)", "sigma (S/m)"), (a.n, a.tau, a.m, sigma)]
    else:
        j = physics.JunctionParams(a.Na, a.Nd, a.eps, a.Vbi, a.Vapplied)
        if kind == "depletion":
            w, xn, xp = physics.depletion_width(j)
            rows = [("W (m)", "x_n (m)", "x_p (m)"), (w, xn, xp)]
        else:
            rows = physics.poisson_depletion_profile(j, a.points).rows()
    _emit(physics.to_csv(rows), a.out)
    return OK


def cmd_lab(a) -> int:
    s = lab.load_scenario(a.scenario, seedless=a.seedless)
    if a.fidelity:
        s.fidelity = a.fidelity
    if a.max_cycles:
        s.max_cycles = a.max_cycles
    rep = lab.run_scenario(s, a.trace_dir)
    _emit(rep.to_json() if a.json else rep.text(), a.out)
    return OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-o", "--out", help="output file (default: stdout or a derived name)")
    common.add_argument("--json", action="store_true", help="machine-readable output")
    common.add_argument("--max-cycles", type=_positive, default=None,
                        help="instruction (isa) or clock-edge (micro/switch) cap")
    common.add_argument("--seedless", action="store_true", help="refuse live entropy sources")

    p = _Parser(prog="emst", description="Layered toy computer: compile, run, trace and compare across levels.")
    p.add_argument("--version", action="store_true", help="print package and file-format versions")
    sub = p.add_subparsers(dest="cmd", parser_class=_Parser)

    s = sub.add_parser("compile", parents=[common], help="mini-language source to assembly")
    s.add_argument("source")
    s.set_defaults(fn=cmd_compile)

    s = sub.add_parser("asm", parents=[common], help="assembly to machine image")
    s.add_argument("source")
    s.set_defaults(fn=cmd_asm)

    s = sub.add_parser("disasm", parents=[common], help="machine image to assembly")
    s.add_argument("image")
    s.set_defaults(fn=cmd_disasm)

    s = sub.add_parser("run", parents=[common], help="execute an image (.img, .asm or .mhl)")
    s.add_argument("image")
    s.add_argument("--level", choices=["isa", "micro", "switch"], default="isa")
    s.add_argument("--input", help="JSON input stream")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("trace", parents=[common], help="run with a switching-event tracer")
    s.add_argument("image")
    s.add_argument("--fidelity", choices=["isa", "gate", "switch"], default="switch")
    s.add_argument("--input", help="JSON input stream")
    s.add_argument("--filter", help="keep events whose id starts with this prefix")
    s.set_defaults(fn=cmd_trace)

    s = sub.add_parser("diff", parents=[common], help="compare two traces")
    s.add_argument("a")
    s.add_argument("b")
    s.set_defaults(fn=cmd_diff)

    s = sub.add_parser("equiv", parents=[common], help="exhaustive netlist equivalence")
    s.add_argument("a", nargs="?")
    s.add_argument("b", nargs="?")
    s.add_argument("--cut-dffs", action="store_true", help="compare sequential netlists by their next-state logic")
    s.add_argument("--block", choices=blocks.BLOCK_KINDS, help="compare the two built-in realizations of a block")
    s.add_argument("--width", type=_positive, default=4)
    s.add_argument("--ways", type=_positive, default=2)
    s.set_defaults(fn=cmd_equiv)

    s = sub.add_parser("device", parents=[common], help="device-physics kernels as CSV")
    dev = s.add_subparsers(dest="kernel", required=True, parser_class=_Parser)
    d = dev.add_parser("band", parents=[common])
    d.add_argument("--eps0", type=float, default=0.0)
    d.add_argument("--t", type=float, default=1.0)
    d.add_argument("--a", type=float, default=3e-10)
    d.add_argument("--points", type=_positive, default=65)
    d.add_argument("--k", type=_floats)
    d = dev.add_parser("phonon", parents=[common])
    d.add_argument("--K", type=float, default=10.0)
    d.add_argument("--M", type=float, default=4.66e-26)
    d.add_argument("--a", type=float, default=3e-10)
    d.add_argument("--points", type=_positive, default=65)
    d.add_argument("--k", type=_floats)
    d = dev.add_parser("drude", parents=[common])
    d.add_argument("--n", type=float, default=1e28)
    d.add_argument("--tau", type=float, default=1e-14)
    d.add_argument("--m", type=float, default=physics.M_E)
    for name in ("depletion", "poisson"):
        d = dev.add_parser(name, parents=[common])
        d.add_argument("--Na", type=float, default=1e22)
        d.add_argument("--Nd", type=float, default=1e22)
        d.add_argument("--eps", type=float, default=1.04e-10)
        d.add_argument("--Vbi", type=float, default=0.7)
        d.add_argument("--Vapplied", type=float, default=0.0)
        if name == "poisson":
            d.add_argument("--points", type=_positive, default=512)
    s.set_defaults(fn=cmd_device)

    s = sub.add_parser("lab", parents=[common], help="run a supervenience scenario file")
    s.add_argument("scenario")
    s.add_argument("--fidelity", choices=["isa", "gate", "switch"], help="override the scenario's fidelity")
    s.add_argument("--trace-dir", help="keep run traces in this directory")
    s.set_defaults(fn=cmd_lab)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except UsageError as exc:
        print(f"emst: {exc}", file=sys.stderr)
        return USAGE
    if a.version:
        print(f"emst {__version__}")
        for k, v in FORMAT_VERSIONS.items():
            print(f"  {k} format {v}")
        return OK
    if a.cmd is None:
        parser.print_help(sys.stderr)
        return USAGE
    if getattr(a, "max_cycles", None) is None:
        a.max_cycles = 1_000_000 if a.cmd in ("run",) and getattr(a, "level", "isa") == "isa" else 5_000_000
        if a.cmd == "lab":
            a.max_cycles = None
    try:
        return a.fn(a)
    except UsageError as exc:
        print(f"emst: {exc}", file=sys.stderr)
        return USAGE
    except INPUT_ERRORS as exc:
        print(f"emst: {type(exc).__name__}: {exc}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
