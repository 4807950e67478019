import json
from pathlib import Path

import pytest

from emst import FORMAT_VERSIONS, isa
from emst.cli import main
from emst.lab import corpus_source

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    Path("bs.mhl").write_text(corpus_source("bubblesort").text)
    Path("data.json").write_text(json.dumps([{"port": 0, "word": w} for w in [5, 1, 4, 2, 8]]))
    return tmp_path


def test_compile_asm_disasm_round_trip(work):
    assert main(["compile", "bs.mhl", "-o", "bs.asm"]) == 0
    assert main(["asm", "bs.asm", "-o", "bs.img"]) == 0
    data = Path("bs.img").read_bytes()
    assert data[:4] == b"EMST"
    assert main(["disasm", "bs.img", "-o", "back.asm"]) == 0
    assert main(["asm", "back.asm", "-o", "back.img"]) == 0
    assert isa.MachineImage.load("back.img").words == isa.MachineImage.load("bs.img").words


def test_artifacts_byte_identical(work):
    for k in (1, 2):
        assert main(["compile", "bs.mhl", "-o", f"a{k}.asm"]) == 0
        assert main(["asm", f"a{k}.asm", "-o", f"a{k}.img"]) == 0
        assert main(["trace", f"a{k}.img", "--fidelity", "isa", "--input", "data.json", "-o", f"t{k}.jsonl"]) == 0
    for ext in ("asm", "img"):
        assert Path(f"a1.{ext}").read_bytes() == Path(f"a2.{ext}").read_bytes()
    assert Path("t1.jsonl").read_bytes() == Path("t2.jsonl").read_bytes()


def test_run_prints_sorted_values(work, capsys):
    main(["compile", "bs.mhl", "-o", "bs.asm"])
    main(["asm", "bs.asm", "-o", "bs.img"])
    capsys.readouterr()
    assert main(["run", "bs.img", "--level", "isa", "--input", "data.json"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["out[0] 1", "out[0] 2", "out[0] 4", "out[0] 5", "out[0] 8", "halt Halted"]


def test_run_json_and_plain_list_input(work, capsys):
    Path("plain.json").write_text("[3, 2, 1, 9, 0]")
    assert main(["run", "bs.mhl", "--input", "plain.json", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [w for _, w in doc["outputs"]] == [0, 1, 2, 3, 9]


@pytest.mark.slow
def test_levels_print_same_outputs(work, capsys):
    Path("small.mhl").write_text("var x;\nvar y;\nread x;\nread y;\nif x > y { write x - y; } else { write y - x; }\n")
    Path("two.json").write_text("[7, 19]")
    outs = []
    for level in ("isa", "micro", "switch"):
        assert main(["run", "small.mhl", "--level", level, "--input", "two.json"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1] == outs[2] == "out[0] 12\nhalt Halted\n"


def test_diff_identical(work, capsys):
    main(["trace", "bs.mhl", "--fidelity", "isa", "--input", "data.json", "-o", "a.trace.jsonl"])
    capsys.readouterr()
    assert main(["diff", "a.trace.jsonl", "a.trace.jsonl"]) == 0
    assert capsys.readouterr().out.strip() == "Identical"


def test_diff_divergent_shows_provenance(work, capsys):
    Path("desc.mhl").write_text(corpus_source("bubblesort_desc").text)
    main(["trace", "bs.mhl", "--fidelity", "isa", "--input", "data.json", "-o", "a.jsonl"])
    main(["trace", "desc.mhl", "--fidelity", "isa", "--input", "data.json", "-o", "b.jsonl"])
    capsys.readouterr()
    assert main(["diff", "a.jsonl", "b.jsonl"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("Divergent") and "source line 18" in out
    assert main(["diff", "a.jsonl", "b.jsonl", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["identical"] is False


def test_equiv_blocks(capsys):
    assert main(["equiv", "--block", "adder", "--width", "3"]) == 0
    assert "equivalent" in capsys.readouterr().out


def test_equiv_files_and_failure(tmp_path, capsys):
    (tmp_path / "a.net").write_text(".inputs p q\n.outputs y\ny = AND(p, q)\n")
    (tmp_path / "b.net").write_text(".inputs p q\n.outputs y\nt = NAND(p, q)\ny = NOT(t)\n")
    (tmp_path / "c.net").write_text(".inputs p q\n.outputs y\ny = OR(p, q)\n")
    assert main(["equiv", str(tmp_path / "a.net"), str(tmp_path / "b.net")]) == 0
    assert main(["equiv", str(tmp_path / "a.net"), str(tmp_path / "c.net")]) == 4
    assert "counterexample" in capsys.readouterr().out


@pytest.mark.parametrize("kernel, head", [("band", "k (1/m),E (eV)"), ("phonon", "k (1/m),omega (rad/s)"),
                                          ("drude", "n (1/m^3),tau (s),m (kg),sigma (S/m)"),
                                          ("depletion", "W (m),x_n (m),x_p (m)"), ("poisson", "x (m),V (V),rho (C/m^3)")])
def test_device_csv(kernel, head, capsys):
    assert main(["device", kernel]) == 0
    assert capsys.readouterr().out.splitlines()[0] == head


def test_device_input_error(capsys):
    assert main(["device", "drude", "--n", "-1"]) == 2
    assert main(["device", "depletion", "--Vapplied", "0.9"]) == 2


def test_lab_json(capsys):
    assert main(["lab", str(SCENARIOS / "interactive.ini"), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["verdict"] == "DiachronicFails" and doc["witness"] == 45


def test_lab_seedless(tmp_path, capsys):
    p = tmp_path / "live.ini"
    p.write_text("[scenario]\nkind = Entropy\nprogram = corpus:entropy\n[run.a]\nlive = true\n[run.b]\nlive = true\n")
    assert main(["lab", str(p), "--seedless"]) == 2


def test_version(capsys):
    assert main(["--version"]) == 0
    out = capsys.readouterr().out
    for k in ("image", "netlist", "trace", "scenario"):
        assert f"{k} format {FORMAT_VERSIONS[k]}" in out


@pytest.mark.parametrize("argv", [[], ["bogus"], ["run"], ["run", "x.img", "--level", "quantum"],
                                  ["run", "x.img", "--max-cycles", "0"], ["equiv"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1


def test_input_errors(work):
    assert main(["run", "missing.img"]) == 2
    Path("bad.mhl").write_text("var x;\nx = ;\n")
    assert main(["compile", "bad.mhl"]) == 2
    Path("junk.img").write_bytes(b"nope")
    assert main(["disasm", "junk.img"]) == 2


def test_runtime_trap_exit_code(work):
    assert main(["run", "bs.mhl"]) == 3
    assert main(["run", "bs.mhl", "--input", "data.json", "--max-cycles", "10"]) == 3
