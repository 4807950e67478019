import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emst import lang
from emst.lang import BinOp, Index, Num, Var

from progen import random_program


def test_parse_basic_program():
    ast = lang.parse("var x;\nvar A[3];\nx = 1 + 2;\nA[x - 1] = -x;\nwrite A[2], 4;\n")
    assert [d.name for d in ast.declarations] == ["x", "A"]
    assert ast.declarations[1].size == 3
    a = ast.statements[0]
    assert a.target == Var("x") and a.value == BinOp("+", Num(1), Num(2))
    assert ast.statements[2].port == 4


def test_statement_lines_recorded():
    chk = lang.check_source("var x;\n\nx = 1;\nif x > 0 {\n  write x;\n}\n")
    assert chk.source_map == {(0,): 3, (1,): 4, (1, 0, 0): 5}


def test_unicode_comparisons_accepted():
    a = lang.parse("var x;\nif x ≤ 2 and x ≠ 1 { halt; }\n")
    b = lang.parse("var x;\nif x <= 2 and x != 1 { halt; }\n")
    assert a == b


def test_precedence():
    e = lang.parse("var a;\na = 1 + 2 < 3 and not a or 0;\n").statements[0].value
    assert e.op == "or"
    assert e.left.op == "and"
    assert e.left.left.op == "<"


@pytest.mark.parametrize("text, exc", [
    ("var x;\nx = ;\n", lang.LangSyntaxError),
    ("var x;\nx = 1\n", lang.LangSyntaxError),
    ("x = 1;\n", lang.UndeclaredVariable),
    ("var x;\nvar x;\n", lang.DuplicateDeclaration),
    ("var A[2];\nA = 1;\n", lang.KindMismatch),
    ("var x;\nx[0] = 1;\n", lang.KindMismatch),
    ("var x;\nx = -(-(-(-(-(-(x))))));\n", lang.ExpressionTooDeep),
    ("var x;\nwhile x { }\n", None),
])
def test_errors(text, exc):
    if exc is None:
        lang.check_source(text)
    else:
        with pytest.raises(exc):
            lang.check_source(text)


def test_syntax_error_position():
    with pytest.raises(lang.LangSyntaxError) as ei:
        lang.parse("var x;\nx = 1 +;\n")
    assert (ei.value.line, ei.value.col) == (2, 8)


def test_depth_limit_is_six():
    ok = "var x;\nx = -(-(-(-(-(x)))));\n"
    assert lang.expr_depth(lang.parse(ok).statements[0].value) == 6
    lang.check_source(ok)


def test_empty_source_rejected():
    with pytest.raises(ValueError):
        lang.SourceProgram("")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_pretty_print_round_trip(seed):
    ast = lang.parse(random_program(seed))
    again = lang.parse(lang.pretty_print(ast))
    assert again == ast


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_pretty_print_is_a_fixed_point(seed):
    once = lang.pretty_print(lang.parse(random_program(seed))).text
    assert lang.pretty_print(lang.parse(once)).text == once


def test_index_node():
    e = lang.parse("var A[4];\nvar i;\ni = A[i + 1];\n").statements[0].value
    assert isinstance(e, Index) and e.index == BinOp("+", Var("i"), Num(1))
