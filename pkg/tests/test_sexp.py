import pytest

from unhalt import sexp


def test_roundtrip_nested():
    form = ["system", ["vars", "x", "y"], ["init", "l0"], [">=", ["+", "x", -3], 0]]
    assert sexp.loads_one(sexp.dumps(form)) == form


def test_atoms():
    assert sexp.loads("42 -7 foo x'") == [42, -7, "foo", "x'"]


def test_comments_ignored():
    assert sexp.loads("; header\n(a 1) ; tail\n") == [["a", 1]]


def test_unbalanced():
    with pytest.raises(sexp.SexpError):
        sexp.loads("(a (b)")
    with pytest.raises(sexp.SexpError):
        sexp.loads("a))")


def test_loads_one_rejects_many():
    with pytest.raises(sexp.SexpError):
        sexp.loads_one("(a) (b)")


def test_pretty_parses_back():
    form = ["certificate", ["kind", "check1"], [["deep", i] for i in range(20)]]
    text = sexp.pretty(form, width=40)
    assert sexp.loads_one(text) == form
    assert "\n" in text
