"""Standard combinational and sequential blocks built from primitive gates.

Every block comes in at least two structurally distinct realizations
(``variant=0`` and ``variant=1``) with different gate counts but the same
behavior; ``netlist.equivalent`` is expected to prove each pair equal.

Port conventions (bit 0 is least significant):

    adder(w)        a0.. b0.. cin        -> s0.. cout
    comparator(w)   a0.. b0..            -> eq lt gt        (unsigned)
    mux(w, ways)    d<j>_<i>.. s0..      -> y0..            (selects beyond ways give 0)
    decoder(w)      a0..                 -> y0..y<2^w-1>
    register(w)     d0.. load            -> q0..            (DFFs q<i>)
    counter(w)      en                   -> q0..            (DFFs q<i>)
"""

from __future__ import annotations

from .netlist import Netlist

BLOCK_KINDS = ("adder", "comparator", "mux", "decoder", "register", "counter")
VARIANTS = (0, 1)


class UnsupportedWidth(ValueError):
    pass


def _bits(prefix: str, w: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(w)]


def _sel_bits(ways: int) -> int:
    return max(1, (ways - 1).bit_length())


# ---------------------------------------------------------------- adders


def full_adder(n: Netlist, p: str, a: str, b: str, c: str, s: str, cout: str, variant: int = 0):
    if variant == 0:
        n.add("XOR", f"{p}x", a, b)
        n.add("XOR", s, f"{p}x", c)
        n.add("AND", f"{p}g", a, b)
        n.add("AND", f"{p}t", f"{p}x", c)
        n.add("OR", cout, f"{p}g", f"{p}t")
    else:
        n.add("NAND", f"{p}n1", a, b)
        n.add("NAND", f"{p}n2", a, f"{p}n1")
        n.add("NAND", f"{p}n3", b, f"{p}n1")
        n.add("NAND", f"{p}x", f"{p}n2", f"{p}n3")
        n.add("NAND", f"{p}n5", f"{p}x", c)
        n.add("NAND", f"{p}n6", f"{p}x", f"{p}n5")
        n.add("NAND", f"{p}n7", c, f"{p}n5")
        n.add("NAND", s, f"{p}n6", f"{p}n7")
        n.add("NAND", cout, f"{p}n5", f"{p}n1")


def adder(w: int, variant: int = 0) -> Netlist:
    a, b, s = _bits("a", w), _bits("b", w), _bits("s", w)
    n = Netlist(f"adder{w}_v{variant}", a + b + ["cin"], s + ["cout"])
    carry = "cin"
    for i in range(w):
        nxt = "cout" if i == w - 1 else f"c{i + 1}"
        full_adder(n, f"fa{i}/", a[i], b[i], carry, s[i], nxt, variant)
        carry = nxt
    return n


# ---------------------------------------------------------------- comparator


def comparator(w: int, variant: int = 0) -> Netlist:
    a, b = _bits("a", w), _bits("b", w)
    n = Netlist(f"comparator{w}_v{variant}", a + b, ["eq", "lt", "gt"])
    if variant == 0:
        lt_terms, gt_terms, prefix = [], [], None
        for i in reversed(range(w)):
            n.add("NOT", f"na{i}", a[i])
            n.add("NOT", f"nb{i}", b[i])
            n.add("XOR", f"d{i}", a[i], b[i])
            lt_in = [f"na{i}", b[i]] + ([prefix] if prefix else [])
            gt_in = [a[i], f"nb{i}"] + ([prefix] if prefix else [])
            lt_terms.append(n.add("AND", f"lt{i}", *lt_in))
            gt_terms.append(n.add("AND", f"gt{i}", *gt_in))
            n.add("NOT", f"e{i}", f"d{i}")
            if prefix is None:
                prefix = f"e{i}"
            else:
                prefix = n.add("AND", f"p{i}", prefix, f"e{i}")
        _or_into(n, "eq", [prefix], const_if_empty=1)
        _or_into(n, "lt", lt_terms)
        _or_into(n, "gt", gt_terms)
    else:
        # a - b = a + ~b + 1: no final carry means a borrow, i.e. a < b
        for i in range(w):
            n.add("NOT", f"nb{i}", b[i])
        n.add("CONST1", "one")
        carry = "one"
        for i in range(w):
            full_adder(n, f"sub{i}/", a[i], f"nb{i}", carry, f"diff{i}", f"c{i + 1}", 0)
            carry = f"c{i + 1}"
        n.add("NOT", "lt", carry)
        if w == 1:
            n.add("NOT", "eq", "diff0")
        else:
            n.add("NOR", "eq", *[f"diff{i}" for i in range(w)])
        n.add("NOR", "gt", "lt", "eq")
    return n


def _or_into(n: Netlist, out: str, terms: list[str], const_if_empty: int = 0):
    if not terms:
        n.add("CONST1" if const_if_empty else "CONST0", out)
    elif len(terms) == 1:
        n.add("AND", out, terms[0], terms[0])
    else:
        n.add("OR", out, *terms)


# ---------------------------------------------------------------- decoder / mux


def _decode_into(n: Netlist, p: str, bits: list[str], outs: list[str]):
    """outs[j] = (bits == j) as an AND of literals; inverters named ``<p>n<i>``."""
    for i, bit in enumerate(bits):
        n.add("NOT", f"{p}n{i}", bit)
    for j, out in enumerate(outs):
        lits = [bits[i] if (j >> i) & 1 else f"{p}n{i}" for i in range(len(bits))]
        if len(lits) == 1:
            lits = lits * 2
        n.add("AND", out, *lits)


def decoder(w: int, variant: int = 0) -> Netlist:
    a = _bits("a", w)
    ys = _bits("y", 1 << w)
    n = Netlist(f"decoder{w}_v{variant}", a, ys)
    if variant == 0:
        _decode_into(n, "", a, ys)
    elif w == 1:
        n.add("NOR", "y0", "a0", "a0")
        n.add("NOT", "y1", "y0")
    else:
        lo, hi = w // 2, w - w // 2
        lo_outs = [f"lo{j}" for j in range(1 << lo)]
        hi_outs = [f"hi{j}" for j in range(1 << hi)]
        _decode_into(n, "l", a[:lo], lo_outs)
        _decode_into(n, "h", a[lo:], hi_outs)
        for j in range(1 << w):
            n.add("AND", ys[j], lo_outs[j & ((1 << lo) - 1)], hi_outs[j >> lo])
    return n


def mux(w: int, ways: int, variant: int = 0) -> Netlist:
    if ways < 2:
        raise UnsupportedWidth("a multiplexer needs at least two ways")
    k = _sel_bits(ways)
    sel = _bits("s", k)
    data = [[f"d{j}_{i}" for i in range(w)] for j in range(ways)]
    ys = _bits("y", w)
    n = Netlist(f"mux{w}x{ways}_v{variant}", [d for way in data for d in way] + sel, ys)
    if variant == 0:
        dec = [f"sel{j}" for j in range(1 << k)]
        _decode_into(n, "s", sel, dec)
        for i in range(w):
            terms = [n.add("AND", f"t{j}_{i}", dec[j], data[j][i]) for j in range(ways)]
            n.add("OR", ys[i], *terms)
    else:
        for lvl in range(k):
            n.add("NOT", f"ns{lvl}", sel[lvl])
        n.add("CONST0", "zero")
        for i in range(w):
            layer = [data[j][i] if j < ways else "zero" for j in range(1 << k)]
            for lvl in range(k):
                nxt = []
                for m in range(len(layer) // 2):
                    p = f"m{lvl}_{m}_{i}"
                    out = ys[i] if len(layer) == 2 else p
                    n.add("NAND", f"{p}a", layer[2 * m], f"ns{lvl}")
                    n.add("NAND", f"{p}b", layer[2 * m + 1], sel[lvl])
                    nxt.append(n.add("NAND", out, f"{p}a", f"{p}b"))
                layer = nxt
    return n


# ---------------------------------------------------------------- sequential


def register(w: int, variant: int = 0) -> Netlist:
    d, q = _bits("d", w), _bits("q", w)
    n = Netlist(f"register{w}_v{variant}", d + ["load"], list(q))
    if variant == 0:
        n.add("NOT", "nload", "load")
        for i in range(w):
            n.add("AND", f"ld{i}", "load", d[i])
            n.add("AND", f"hd{i}", "nload", q[i])
            n.add("OR", f"nx{i}", f"ld{i}", f"hd{i}")
            n.add("DFF", q[i], f"nx{i}")
    else:
        for i in range(w):
            n.add("XOR", f"df{i}", d[i], q[i])
            n.add("AND", f"fl{i}", "load", f"df{i}")
            n.add("XOR", f"nx{i}", q[i], f"fl{i}")
            n.add("DFF", q[i], f"nx{i}")
    return n


def counter(w: int, variant: int = 0) -> Netlist:
    q = _bits("q", w)
    n = Netlist(f"counter{w}_v{variant}", ["en"], list(q))
    if variant == 0:
        carry = "en"
        for i in range(w):
            n.add("XOR", f"nx{i}", q[i], carry)
            if i < w - 1:
                carry = n.add("AND", f"c{i + 1}", q[i], carry)
            n.add("DFF", q[i], f"nx{i}")
    else:
        n.add("NOT", "nen", "en")
        n.add("NOT", "nq0", q[0])
        n.add("AND", "k0", q[0], "nen")
        n.add("AND", "t0", "nq0", "en")
        n.add("OR", "nx0", "k0", "t0")
        n.add("DFF", q[0], "nx0")
        for i in range(1, w):
            n.add("NAND", f"nt{i}", "en", *q[:i])
            n.add("NOT", f"t{i}", f"nt{i}")
            n.add("XOR", f"nx{i}", q[i], f"t{i}")
            n.add("DFF", q[i], f"nx{i}")
    return n


def synthesize_block(kind: str, width: int, ways: int = 2, variant: int = 0) -> Netlist:
    """Build a standard block; ``ways`` is used by ``mux`` only."""
    if not 1 <= width <= 16:
        raise UnsupportedWidth(f"width {width} outside 1..16")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant}")
    if kind == "adder":
        return adder(width, variant)
    if kind == "comparator":
        return comparator(width, variant)
    if kind == "mux":
        return mux(width, ways, variant)
    if kind == "decoder":
        return decoder(width, variant)
    if kind == "register":
        return register(width, variant)
    if kind == "counter":
        return counter(width, variant)
    raise ValueError(f"unknown block kind {kind!r}")
