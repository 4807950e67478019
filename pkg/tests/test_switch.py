import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from emst import blocks, netlist, switch
from emst.netlist import X, Netlist
from emst.switch import GND, OFF, ON, PHI1, PHI2, VDD, FetDevice, SwitchSim, TransistorNet

COMB_KINDS = [("NOT", 1), ("NAND", 2), ("NAND", 3), ("NAND", 4), ("NOR", 2), ("NOR", 3), ("AND", 2), ("AND", 3),
              ("OR", 2), ("OR", 4), ("XOR", 2), ("XOR", 3), ("CONST0", 0), ("CONST1", 0)]


def single_gate(kind, k):
    ins = [f"i{j}" for j in range(k)]
    n = Netlist(kind, ins, ["y"])
    n.add(kind, "y", *ins)
    return n


@pytest.mark.parametrize("kind, k", COMB_KINDS)
def test_gate_kinds_agree_exhaustively(kind, k):
    n = single_gate(kind, k)
    t = switch.expand_to_transistors(n)
    assert len(t.fets) == switch.FET_COUNTS[kind](k)
    for row in itertools.product([0, 1], repeat=k):
        inputs = {f"i{j}": b for j, b in enumerate(row)}
        gate = netlist.settle(n, inputs)["y"]
        res = switch.settle_switch_net(t, inputs)
        assert res["y"] == gate
        assert res.diagnostics == []


def clock(sim):
    for p1, p2 in ((1, 0), (0, 0), (0, 1), (0, 0)):
        sim.set_inputs({PHI1: p1, PHI2: p2})
        sim.settle()


def test_dff_master_slave():
    n = Netlist("ff", ["d"], ["q"])
    n.add("DFF", "q", "d")
    t = switch.expand_to_transistors(n)
    assert t.clocked and len(t.fets) == switch.FET_COUNTS["DFF"](1)
    sim = SwitchSim(t)
    sim.set_inputs({PHI1: 0, PHI2: 0, "d": 1})
    sim.settle()
    assert sim.get("q") == X
    seq = []
    for d in [1, 0, 0, 1, 1, 0]:
        sim.set_inputs({"d": d})
        sim.settle()
        clock(sim)
        seq.append(sim.get("q"))
    assert seq == [1, 0, 0, 1, 1, 0]


@pytest.mark.parametrize("kind, w", [("adder", 2), ("comparator", 2), ("mux", 1), ("decoder", 3)])
def test_blocks_agree_exhaustively(kind, w):
    n = blocks.synthesize_block(kind, w, 4, 1)
    t = switch.expand_to_transistors(n)
    flat = n.flatten()
    sim = SwitchSim(t)
    for row in itertools.product([0, 1], repeat=len(flat.inputs)):
        inputs = dict(zip(flat.inputs, row))
        want = netlist.settle(n, inputs)
        sim.set_inputs(inputs)
        sim.settle()
        assert [sim.get(o) for o in flat.outputs] == [want[o] for o in flat.outputs]


def test_register_agrees_over_random_sequence():
    import random

    n = blocks.register(3, 1)
    flat = n.flatten()
    t = switch.expand_to_transistors(n)
    sim = SwitchSim(t)
    gsim = netlist.GateSim(n)
    sim.set_inputs({PHI1: 0, PHI2: 0})
    r = random.Random(7)
    for k in range(40):
        inputs = {i: r.randint(0, 1) for i in flat.inputs}
        if k == 0:
            inputs["load"] = 1
        sim.set_inputs(inputs)
        sim.settle()
        clock(sim)
        gsim.set_inputs(inputs)
        gsim.settle()
        gsim.clock()
        gsim.settle()
        assert [sim.get(q) for q in flat.outputs] == [gsim.get(q) for q in flat.outputs]


# ---------------------------------------------------------------- device model

def test_threshold_boundary_is_off():
    nf = FetDevice("n", "n", "g", "a", "b", 0.4)
    pf = FetDevice("p", "p", "g", "a", "b", 0.4)
    assert switch.switch_state(nf, 0.4) == OFF
    assert switch.switch_state(nf, 0.4000001) == ON
    assert switch.switch_state(pf, 0.6) == OFF
    assert switch.switch_state(pf, 0.5999999) == ON


@given(st.floats(0.01, 0.99), st.floats(0.0, 1.0))
def test_switch_state_monotone(vth, vg):
    nf = FetDevice("n", "n", "g", "a", "b", vth)
    pf = FetDevice("p", "p", "g", "a", "b", vth)
    assert (switch.switch_state(nf, vg) == ON) == (vg > vth)
    assert (switch.switch_state(pf, vg) == ON) == (vg < 1.0 - vth)


def test_gate_voltage_outside_rails():
    with pytest.raises(switch.SwitchError):
        switch.switch_state(FetDevice("n", "n", "g", "a", "b", 0.4), 1.5)


def test_bad_device_parameters():
    with pytest.raises(ValueError):
        FetDevice("n", "q", "g", "a", "b", 0.4)
    with pytest.raises(ValueError):
        FetDevice("n", "n", "g", "a", "b", 0.0)


def test_threshold_above_supply_breaks_logic():
    n = single_gate("NAND", 2)
    t = switch.expand_to_transistors(n).with_thresholds(1.0, 1.0)
    assert not any(f.nominal(t.vdd) for f in t.fets)
    res = switch.settle_switch_net(t, {"i0": 0, "i1": 1})
    assert res["y"] not in (0, 1)


def test_contention_reported_as_x():
    fets = [FetDevice("pu", "p", "a", VDD, "y", 0.4), FetDevice("pd", "n", "b", "y", GND, 0.4)]
    t = TransistorNet(fets, {VDD, GND, "a", "b", "y"}, ["a", "b"], ["y"], provenance={"pu": "g", "pd": "g"})
    res = switch.settle_switch_net(t.validate(), {"a": 0, "b": 1})
    assert res["y"] == X
    assert ("y", "contention") in res.diagnostics
    assert switch.settle_switch_net(t, {"a": 0, "b": 0})["y"] == 1
    assert switch.settle_switch_net(t, {"a": 1, "b": 1})["y"] == 0


def test_ring_oscillator_detected():
    n = Netlist("ring", ["en"], ["y"])
    n.add("NAND", "a", "en", "y")
    n.add("NOT", "b", "a")
    n.add("NOT", "y", "b")
    # the gate-level netlist is cyclic, so expand the cells by hand
    ex = switch._Expander(1.0, 0.4, 0.4)
    ex.nand("a", "a/nand", ("en", "y"), "a")
    ex.inv("b", "b/inv", "a", "b")
    ex.inv("y", "y/inv", "b", "y")
    nets = set(ex.nets) | {"en", "a", "b", "y"}
    t = TransistorNet(ex.fets, nets, ["en"], ["y"], provenance=ex.prov).validate()
    sim = SwitchSim(t)
    sim.set_inputs({"en": 0})
    sim.settle()
    assert sim.get("y") == 1
    sim.set_inputs({"en": 1})
    with pytest.raises(switch.OscillationError):
        sim.settle()


def test_unassigned_inputs():
    t = switch.expand_to_transistors(single_gate("NOT", 1))
    with pytest.raises(switch.SwitchError):
        switch.settle_switch_net(t, {})


def test_fet_provenance_and_dump():
    n = blocks.adder(1)
    t = switch.expand_to_transistors(n)
    gates = {g.id for g in n.flatten().gates}
    assert set(t.provenance.values()) <= gates
    text = t.dumps()
    assert text == switch.expand_to_transistors(n).dumps()
    assert "FET(n," in text and "FET(p," in text


def test_fet_change_stream():
    t = switch.expand_to_transistors(single_gate("NOT", 1))
    sim = SwitchSim(t)
    sim.set_inputs({"i0": 0})
    sim.settle()
    sim.take_fet_changes()
    sim.set_inputs({"i0": 1})
    sim.settle()
    changes = dict(sim.take_fet_changes())
    assert len(changes) == 2 and set(changes.values()) == {ON, OFF}
