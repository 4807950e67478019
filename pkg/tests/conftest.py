import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from emst import compiler, lab  # noqa: E402
from emst.vm import InputProvider, run  # noqa: E402

BUBBLE_DATA = [5, 1, 4, 2, 8]

# port-0 words for each corpus program, with port-2 words for the entropy guest
CORPUS_INPUTS = {
    "bubblesort": {0: BUBBLE_DATA},
    "bubblesort_desc": {0: BUBBLE_DATA},
    "sum": {0: [3, 9, 0xFFFE, 40, 0]},
    "fib": {},
    "gcd": {0: [84, 36]},
    "maxmin": {0: [3, 0xFFF0, 77, 5, 0x7FFF, 0, 12, 0x8001]},
    "reverse": {0: [10, 20, 30, 40, 50, 60]},
    "popcount": {0: [0xFFFF, 0x0001, 0x8000, 0x5555, 0]},
    "entropy": {2: [0x8000, 1, 0xFFFF, 0x1234, 0x9000, 0, 0x7FFF, 0xC000]},
}


def stream_of(inputs: dict[int, list[int]]) -> list[tuple[int, int]]:
    return [(p, w) for p, ws in sorted(inputs.items()) for w in ws]


@pytest.fixture(scope="session")
def corpus():
    """name -> (checked, asm, image, stream)"""
    out = {}
    for fname in lab.corpus_names():
        name = fname.removesuffix(".mhl")
        chk, asm, img = compiler.build_image(lab.corpus_source(name))
        out[name] = (chk, asm, img, stream_of(CORPUS_INPUTS[name]))
    return out


@pytest.fixture(scope="session")
def bubble(corpus):
    return corpus["bubblesort"]


@pytest.fixture(scope="session")
def bubble_isa(bubble):
    _, _, img, stream = bubble
    return run(img, InputProvider(stream), record_boundaries=True)


@pytest.fixture(scope="session")
def bubble_gate(bubble):
    from emst.micro import run_micro

    import time

    _, _, img, stream = bubble
    t0 = time.perf_counter()
    res = run_micro(img, InputProvider(stream), fidelity="gate", record_boundaries=True)
    res.elapsed = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def bubble_switch(bubble):
    import time

    from emst.micro import run_micro

    _, _, img, stream = bubble
    t0 = time.perf_counter()
    res = run_micro(img, InputProvider(stream), fidelity="switch", record_boundaries=True)
    res.elapsed = time.perf_counter() - t0
    return res


@pytest.fixture(scope="session")
def bubble_gate_trace(bubble, tmp_path_factory):
    from emst.trace import trace_run

    _, _, img, stream = bubble
    p = tmp_path_factory.mktemp("gtrace") / "bubble.gate.trace.jsonl"
    res, tr = trace_run(img, stream, "gate", p)
    return p, res, tr


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
