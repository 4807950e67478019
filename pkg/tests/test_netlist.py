import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from emst import blocks, netlist
from emst.netlist import X, Netlist

from oracles import truth_rows

BINARY = ["AND", "OR", "NAND", "NOR", "XOR"]


@given(st.sampled_from(BINARY), st.lists(st.sampled_from([0, 1, X]), min_size=2, max_size=4))
def test_three_valued_gates_are_conservative(kind, vals):
    """X appears only when some completion of the unknown inputs disagrees."""
    out = netlist.eval_gate(kind, vals)
    unknown = [i for i, v in enumerate(vals) if v == X]
    seen = set()
    for fill in itertools.product([0, 1], repeat=len(unknown)):
        v = list(vals)
        for i, b in zip(unknown, fill):
            v[i] = b
        seen.add(netlist.eval_gate(kind, v))
    assert out == (seen.pop() if len(seen) == 1 else X)


def test_arity_checked():
    with pytest.raises(netlist.ArityError):
        Netlist("n").add("NOT", "y", "a", "b")
    with pytest.raises(netlist.NetlistError):
        Netlist("n").add("MAJ", "y", "a", "b", "c")


def test_validation_errors():
    n = Netlist("n", ["a"], ["y"])
    n.add("NOT", "y", "b")
    with pytest.raises(netlist.NetlistError):
        n.validate()
    n = Netlist("n", ["a"], ["y"])
    n.add("NOT", "y", "a")
    n.add("NOT", "y", "a")
    with pytest.raises(netlist.NetlistError):
        n.validate()
    n = Netlist("n", ["a"], ["y"])
    n.add("AND", "y", "a", "z")
    n.add("NOT", "z", "y")
    with pytest.raises(netlist.CombinationalCycle):
        n.validate()


def test_dff_breaks_cycles():
    n = Netlist("t", [], ["q"])
    n.add("NOT", "nq", "q")
    n.add("DFF", "q", "nq")
    state = {"q": 0}
    seq = []
    for _ in range(4):
        state, _ = netlist.clock_edge(n, {}, state)
        seq.append(state["q"])
    assert seq == [1, 0, 1, 0]


def test_uninitialised_dff_captures_x():
    n = Netlist("t", [], ["q"])
    n.add("NOT", "nq", "q")
    n.add("DFF", "q", "nq")
    state, warns = netlist.clock_edge(n, {})
    assert state["q"] == X and warns


def test_hierarchy_flattening_names():
    top = Netlist("top", ["x0", "x1", "y0", "y1", "c"], ["z0", "z1", "co"])
    top.instantiate("u", blocks.adder(2), a0="x0", a1="x1", b0="y0", b1="y1", cin="c", s0="z0", s1="z1", cout="co")
    flat = top.flatten()
    assert any(g.id.startswith("u/") for g in flat.gates)
    v = netlist.settle(top, {"x0": 1, "x1": 1, "y0": 1, "y1": 0, "c": 1})
    assert (v["z0"], v["z1"], v["co"]) == (1, 0, 1)


def test_text_round_trip(tmp_path):
    n = blocks.comparator(3, 1)
    again = netlist.loads(netlist.dumps(n))
    assert netlist.dumps(again) == netlist.dumps(n)
    assert netlist.equivalent(n, again)


def test_hierarchical_files(tmp_path):
    top = Netlist("top", ["x0", "y0", "c"], ["z0", "co"])
    top.instantiate("u", blocks.adder(1), a0="x0", b0="y0", cin="c", s0="z0", cout="co")
    path = netlist.dump_tree(top, tmp_path)
    loaded = netlist.load(path)
    assert netlist.equivalent(loaded, top)


def test_parse_error_line_number():
    with pytest.raises(netlist.NetlistError, match="line 3"):
        netlist.loads(".inputs a\n.outputs y\ny = ???\n")


def test_equivalence_counterexample_is_first_row():
    a = Netlist("a", ["p", "q"], ["y"])
    a.add("AND", "y", "p", "q")
    b = Netlist("b", ["p", "q"], ["y"])
    b.add("OR", "y", "p", "q")
    r = netlist.equivalent(a, b)
    assert not r and r.counterexample == {"p": 0, "q": 1}


def test_equivalence_rejects_sequential_without_cut():
    with pytest.raises(netlist.NetlistError):
        netlist.equivalent(blocks.register(2), blocks.register(2, 1))
    assert netlist.equivalent(blocks.register(2), blocks.register(2, 1), cut_dffs=True)


def test_equivalence_needs_same_ports():
    with pytest.raises(netlist.NetlistError):
        netlist.equivalent(blocks.adder(2), blocks.adder(3))


def test_truth_table_matches_oracle():
    n = blocks.decoder(2, 1)
    flat = n.flatten()
    rows = [outs for _, outs in netlist.truth_table(n)]
    assert rows == truth_rows(flat.gates, flat.inputs, flat.outputs)
