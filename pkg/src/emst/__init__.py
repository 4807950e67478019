"""A layered toy computer: mini-language, compiler, instruction set, microcoded
gate-level CPU and switch-level CMOS, with cross-level tracing."""

__version__ = "0.1.0"

FORMAT_VERSIONS = {"image": 1, "netlist": 1, "trace": 1, "scenario": 1, "report": 1}
