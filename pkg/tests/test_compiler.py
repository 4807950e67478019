import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emst import compiler, isa, lang
from emst.isa import layout
from emst.vm import InputProvider, run

from conftest import CORPUS_INPUTS, stream_of
from oracles import interpret
from progen import random_inputs, random_program


def compiled_vs_oracle(src, inputs):
    chk, asm, img = compiler.build_image(src)
    reason, outs, mem = interpret(chk, inputs)
    res = run(img, InputProvider(stream_of(inputs)), 500_000)
    addrs = layout(asm)
    vmem = {n: res.state.mem[addrs[f"v_{n}"]:addrs[f"v_{n}"] + s.size] for n, s in chk.symbol_table.items()}
    return (reason, outs, mem), (res.halt_reason, res.outputs, vmem)


@pytest.mark.parametrize("name", sorted(CORPUS_INPUTS))
def test_corpus_matches_oracle(corpus, name):
    chk = corpus[name][0]
    expect, got = compiled_vs_oracle(lang.pretty_print(chk.ast, name), CORPUS_INPUTS[name])
    assert got == expect
    assert got[0] == "Halted"


@settings(max_examples=80, deadline=None)
@given(st.integers(10_000, 2**31))
def test_random_programs_match_oracle(seed):
    expect, got = compiled_vs_oracle(random_program(seed), random_inputs(seed))
    assert got == expect


def test_layout_head(bubble):
    _, asm, img, _ = bubble
    assert img.words[0] == isa.encode("JMP", layout(asm)["main"])
    assert img.words[1] == compiler.TRAP_WORD
    assert layout(asm)["main"] == 11


def test_data_below_256(corpus):
    for _, asm, _, _ in corpus.values():
        addrs = layout(asm)
        assert all(a < 256 for lbl, a in addrs.items() if lbl.startswith(("v_", "k_")))


def test_every_instruction_has_a_source_line(corpus):
    for chk, asm, img, _ in corpus.values():
        code_start = layout(asm)["main"]
        for addr in range(code_start, code_start + 10):
            assert img.source_map[addr][1] >= 1


def test_large_constants_use_pool():
    _, asm, img = compiler.build_image("var x;\nx = 30000;\nwrite x;\n")
    assert 30000 in img.words
    assert run(img).outputs == [(0, 30000)]


def test_out_of_range_index_traps():
    _, _, img = compiler.build_image("var A[2];\nvar i;\ni = 2;\nA[i] = 1;\nwrite 9;\n")
    res = run(img)
    assert res.halt_reason == "IllegalInstruction"
    assert res.outputs == []


def test_negative_index_traps():
    _, _, img = compiler.build_image("var A[2];\nwrite A[-1];\n")
    assert run(img).halt_reason == "IllegalInstruction"


def test_long_program_uses_trampolines():
    body = "".join(f"if x > {k} {{ x = x - {k}; }}\n" for k in range(1, 80))
    src = "var x;\nread x;\n" + body + "write x;\n"
    chk, asm, img = compiler.build_image(src)
    assert len([w for w in img.words if w]) > 512
    expect, got = compiled_vs_oracle(src, {0: [5000]})
    assert got == expect


def test_data_capacity():
    with pytest.raises(compiler.CapacityExceeded):
        compiler.build_image("var A[300];\nA[0] = 1;\n")


def test_deep_array_store_spills():
    src = "var A[3];\nvar x;\nx = 2;\nA[x - 1] = -(-(-(-(-(x)))));\nwrite A[1];\n"
    _, asm, _ = compiler.build_image(src)
    assert "t_spill" in layout(asm)
    expect, got = compiled_vs_oracle(src, {})
    assert got == expect and got[1] == [(0, 0xFFFE)]


def test_compile_is_deterministic(bubble):
    chk = bubble[0]
    a = compiler.compile_program(chk).render()
    b = compiler.compile_program(chk).render()
    assert a == b
