import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from emst import isa
from emst.isa import MachineImage, encode
from emst.vm import CYCLE_LIMIT, HALTED, HALTED_ON_INPUT, ILLEGAL, InputProvider, MachineState, load_input_stream, run, step


def image(*words, entry=0):
    w = list(words) + [0] * (isa.MEM_WORDS - len(words))
    return MachineImage(w, entry, {})


def run_words(*words, inputs=(), **kw):
    return run(image(*words), InputProvider(inputs), **kw)


def test_loadi_sign_extends():
    res = run_words(encode("LOADI", 1, -3), encode("HALT"))
    assert res.state.regs[1] == 0xFFFD


def test_r0_stays_zero():
    res = run_words(encode("LOADI", 0, 7), encode("ADD", 0, 0, 0), encode("HALT"))
    assert res.state.regs[0] == 0


@given(st.integers(0, 0xFFFF), st.integers(0, 0xFFFF))
def test_alu_ops_wrap(a, b):
    img = image(encode("LOAD", 1, 0, 20), encode("LOAD", 2, 0, 21),
                encode("ADD", 3, 1, 2), encode("SUB", 4, 1, 2), encode("AND", 5, 1, 2),
                encode("XOR", 6, 1, 2), encode("NOT", 7, 1), encode("HALT"))
    img.words[20], img.words[21] = a, b
    r = run(img).state.regs
    assert r[3:] == [(a + b) & 0xFFFF, (a - b) & 0xFFFF, a & b, a ^ b, ~a & 0xFFFF]


def test_or():
    assert run_words(encode("LOADI", 1, 5), encode("LOADI", 2, 10), encode("OR", 3, 1, 2),
                     encode("HALT")).state.regs[3] == 15


def test_store_and_load_offsets():
    res = run_words(encode("LOADI", 1, 40), encode("LOADI", 2, 9), encode("STORE", 2, 1, -3),
                    encode("LOAD", 3, 1, -3), encode("HALT"))
    assert res.state.mem[37] == 9 and res.state.regs[3] == 9


def test_branches():
    # r1 = -1; JN taken to 4; JZ on r0 taken to 6; OUT r1
    res = run_words(encode("LOADI", 1, -1), encode("JN", 1, 4), encode("HALT"), encode("HALT"),
                    encode("JZ", 1, 2), encode("JZ", 0, 6), encode("OUT", 1, 3), encode("HALT"))
    assert res.outputs == [(3, 0xFFFF)]
    assert res.state.cycle == 6


def test_in_out_ports():
    res = run_words(encode("IN", 1, 2), encode("IN", 2, 0), encode("OUT", 2, 5), encode("HALT"),
                    inputs=[(0, 11), (2, 22)])
    assert res.state.regs[1:3] == [22, 11]
    assert res.outputs == [(5, 11)]
    assert [(p, w) for _, p, w in res.deliveries] == [(2, 22), (0, 11)]


def test_halt_keeps_pc_and_counts_cycle():
    res = run_words(encode("LOADI", 1, 1), encode("HALT"))
    assert res.halt_reason == HALTED
    assert res.state.pc == 1 and res.state.cycle == 2 and res.state.halted


def test_input_exhaustion_traps_without_side_effects():
    res = run_words(encode("LOADI", 1, 1), encode("IN", 1, 0), encode("HALT"))
    assert res.halt_reason == HALTED_ON_INPUT
    assert res.state.pc == 1 and res.state.cycle == 1 and res.state.regs[1] == 1


def test_illegal_opcode():
    res = run_words(0xF000)
    assert res.halt_reason == ILLEGAL and res.state.pc == 0 and res.state.cycle == 0


def test_cycle_limit():
    res = run_words(encode("JMP", 0), max_cycles=50)
    assert res.halt_reason == CYCLE_LIMIT and res.state.cycle == 50


def test_step_on_halted_machine():
    s = MachineState(halted=True)
    with pytest.raises(ValueError):
        step(s, InputProvider())


def test_run_is_deterministic(bubble):
    _, _, img, stream = bubble
    a = run(img, InputProvider(stream), record_boundaries=True)
    b = run(img, InputProvider(stream), record_boundaries=True)
    assert a.event_log() == b.event_log()
    assert a.boundaries == b.boundaries


def test_bubble_sort_output(bubble_isa):
    assert bubble_isa.output_words() == [1, 2, 4, 5, 8]
    assert bubble_isa.halt_reason == HALTED


def test_input_stream_file(tmp_path):
    p = tmp_path / "in.json"
    p.write_text(json.dumps([{"port": 1, "word": 5}, {"port": 0, "word": 7}]))
    assert load_input_stream(p) == [(1, 5), (0, 7)]
    p.write_text(json.dumps([[0, 1]]))
    with pytest.raises(ValueError):
        load_input_stream(p)


def test_bad_port_rejected():
    with pytest.raises(ValueError):
        InputProvider([(9, 1)])


def test_provider_fresh_and_digest():
    p = InputProvider([(0, 1), (0, 2)])
    p.read(0, 0)
    q = p.fresh()
    assert q.read(0, 0) == 1
    assert p.digest() == q.digest()
