"""Random terminating ``.mhl`` programs for differential testing.

Loops only run over reserved counters that their bodies never assign, so every
generated program halts (or traps) within a small number of steps.
"""

from __future__ import annotations

import random

SCALARS = ["x", "y", "z", "w"]
ARRAYS = {"A": 4, "B": 3}
CMP = ["<", ">", "=", "<=", ">=", "!="]
ARITH = ["+", "-"]
MAX_DEPTH = 6


class Gen:
    def __init__(self, seed: int):
        self.r = random.Random(seed)
        self.loop_depth = 0

    def const(self) -> str:
        r = self.r.random()
        if r < 0.6:
            return str(self.r.randint(0, 40))
        if r < 0.85:
            return str(self.r.randint(0, 0xFFFF))
        return self.r.choice(["255", "256", "32767", "32768", "65535", "0x8000"])

    def index_expr(self, depth: int, size: int) -> str:
        # mostly in range, occasionally an arbitrary expression that may trap
        if self.r.random() < 0.9 or depth <= 1:
            return str(self.r.randrange(size))
        return self.expr(depth)

    def expr(self, depth: int) -> str:
        """An expression of depth at most ``depth``."""
        r = self.r.random()
        if depth <= 1 or r < 0.25:
            return self.const() if self.r.random() < 0.5 else self.r.choice(SCALARS)
        if r < 0.35:
            name = self.r.choice(list(ARRAYS))
            return f"{name}[{self.index_expr(depth - 1, ARRAYS[name])}]"
        if r < 0.42:
            return f"-({self.expr(depth - 1)})"
        if r < 0.48:
            return f"(not ({self.expr(depth - 1)}))"
        op = self.r.choice(ARITH * 3 + CMP + ["and", "or"])
        return f"({self.expr(depth - 1)} {op} {self.expr(depth - 1)})"

    def lvalue(self) -> str:
        if self.r.random() < 0.6:
            return self.r.choice(SCALARS)
        name = self.r.choice(list(ARRAYS))
        return f"{name}[{self.index_expr(MAX_DEPTH - 1, ARRAYS[name])}]"

    def stmt(self, budget: int, indent: str) -> list[str]:
        r = self.r.random()
        if budget > 1 and r < 0.15:
            out = [f"{indent}if {self.expr(self.r.randint(1, MAX_DEPTH))} {{"]
            out += self.block(budget // 2, indent + "  ")
            if self.r.random() < 0.5:
                out.append(f"{indent}}} else {{")
                out += self.block(budget // 2, indent + "  ")
            out.append(f"{indent}}}")
            return out
        if budget > 1 and r < 0.25 and self.loop_depth < 2:
            c = f"c{self.loop_depth}"
            n = self.r.randint(0, 4)
            self.loop_depth += 1
            body = self.block(budget // 2, indent + "  ")
            self.loop_depth -= 1
            if self.r.random() < 0.5:
                return [f"{indent}{c} = 0;", f"{indent}while {c} < {n} {{", *body,
                        f"{indent}  {c} = {c} + 1;", f"{indent}}}"]
            return [f"{indent}{c} = 0;", f"{indent}repeat {{", *body,
                    f"{indent}  {c} = {c} + 1;", f"{indent}}} until {c} >= {n};"]
        if r < 0.32:
            return [f"{indent}swap {self.lvalue()}, {self.lvalue()};"]
        if r < 0.40:
            port = self.r.choice(["", ", 3"])
            return [f"{indent}read {self.lvalue()}{port};"]
        if r < 0.55:
            port = self.r.choice(["", "", ", 5"])
            return [f"{indent}write {self.expr(self.r.randint(1, MAX_DEPTH))}{port};"]
        if r < 0.56:
            return [f"{indent}halt;"]
        return [f"{indent}{self.lvalue()} = {self.expr(self.r.randint(1, MAX_DEPTH))};"]

    def block(self, budget: int, indent: str) -> list[str]:
        out = []
        for _ in range(self.r.randint(1, max(1, budget))):
            out += self.stmt(budget, indent)
        return out

    def program(self) -> str:
        decls = [f"var {s};" for s in SCALARS] + [f"var {a}[{n}];" for a, n in ARRAYS.items()]
        decls += ["var c0;", "var c1;"]
        body = self.block(self.r.randint(3, 12), "")
        body += [f"write {s};" for s in SCALARS]
        return "\n".join(decls + body) + "\n"


def random_program(seed: int) -> str:
    return Gen(seed).program()


def random_inputs(seed: int) -> dict[int, list[int]]:
    r = random.Random(seed ^ 0x5EED)
    return {0: [r.randint(0, 0xFFFF) for _ in range(r.randint(0, 6))],
            3: [r.randint(0, 0xFFFF) for _ in range(r.randint(0, 3))]}
