import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from carnot.group import AntisymmetryViolation, engel, heisenberg, validate_algebra
from carnot.io import (
    REPORT_SCHEMA,
    DuplicateBracket,
    ExpressionError,
    GroupFileSyntaxError,
    IndexOutOfRange,
    Report,
    fixture_path,
    format_group,
    jsonable,
    load_atlas,
    load_expression,
    load_group,
    parse_group_file,
    parse_group_text,
    parse_sexpr,
    validate_report,
)
from carnot.symbol import symbol


def test_bundled_groups():
    assert parse_group_file("heisenberg1.grp").brackets == heisenberg().to_data().brackets
    assert parse_group_file("engel.grp").brackets == engel().to_data().brackets
    assert load_group("abelian2.grp").Q == 2


def test_fractions_and_comments():
    d = parse_group_text("dimension 3  # three\nstrata [2,1]\nbracket 2 1 -> {3: -1/2}\n")
    assert d.brackets == {(2, 1): {3: -0.5}}
    assert validate_algebra(d).structure[0, 1, 2] == 0.5


def test_malformed_stratum_line_reports_line():
    with pytest.raises(GroupFileSyntaxError) as exc:
        parse_group_text("dimension 3\n\nstrata 2, 1\n")
    assert exc.value.lineno == 3


@pytest.mark.parametrize("text,err", [
    ("dimension 3\nstrata [2, 1]\nbracket 1 2 -> {3: 1}\nbracket 2 1 -> {3: -1}\n", DuplicateBracket),
    ("dimension 3\nstrata [2, 1]\nbracket 1 2 -> {3: 1, 3: 2}\n", DuplicateBracket),
    ("dimension 3\nstrata [2, 1]\nbracket 1 4 -> {3: 1}\n", IndexOutOfRange),
    ("dimension 3\nstrata [2, 1]\nbracket 1 2 -> {0: 1}\n", IndexOutOfRange),
    ("dimension 3\nstrata [2, 1]\nbracket 1 2 => {3: 1}\n", GroupFileSyntaxError),
    ("dimension 3\nstrata [2, 1]\nlie 1 2\n", GroupFileSyntaxError),
])
def test_parser_errors(text, err):
    with pytest.raises(err):
        parse_group_text(text)


def test_parsed_but_invalid_algebra():
    with pytest.raises(AntisymmetryViolation):
        validate_algebra(parse_group_text("dimension 3\nstrata [2, 1]\nbracket 1 1 -> {3: 1}\n"))


@given(st.dictionaries(st.sampled_from([(1, 2), (1, 3), (2, 3)]),
                       st.dictionaries(st.integers(1, 4), st.floats(-5, 5, allow_nan=False), max_size=2),
                       max_size=3))
def test_format_roundtrip(brackets):
    from carnot.group import GroupData

    d = GroupData(4, [2, 1, 1], brackets, "g")
    back = parse_group_text(format_group(d))
    assert back.brackets == d.brackets and back.strata == d.strata


def test_fixture_path_missing():
    with pytest.raises(FileNotFoundError):
        fixture_path("no_such_file.grp")


def test_atlas_loading():
    atlas = load_atlas("three_chart.atlas")
    assert [c.name for c in atlas.charts] == ["base", "shifted", "scaled"]
    x = np.array([[0.2, 0.1, -0.3]])
    np.testing.assert_allclose(atlas.charts[2].map.inverse(atlas.charts[2].map(x)), x, atol=1e-12)


def test_sexpr_and_expression():
    assert parse_sexpr("(a (b 1) 2.5) ; tail") == [["a", ["b", 1.0], 2.5]]
    with pytest.raises(ExpressionError):
        parse_sexpr("(a (b)")
    e, probes, names = load_expression(fixture_path("sandwich.sym").read_text(), heisenberg())
    s = symbol(e)
    assert names["automorphisms"] == ["A", "B"]
    assert len(s.terms) == 2 and probes.shape == (32, 3)
    with pytest.raises(ExpressionError):
        load_expression("(expr (mult g))", heisenberg())
    with pytest.raises(ExpressionError):
        load_expression("(automorphism A (first-block (1 0) (0 1)))\n(expr (riesz 3 A))", heisenberg())


def test_report_rules(tmp_path):
    r = Report("demo", {"seed": 0})
    r.check("info", "plumbing", 1.5)
    assert r.status == "PASS"
    r.check("bound", "a bound", 2.0, 1e-3, False)
    assert r.status == "FAIL" and r.exit_code == 1
    with pytest.raises(ValueError):
        r.check("bad", "a bound", 1.0, None, True)
    validate_report(r.to_dict())
    r.write(tmp_path / "out.json")
    assert json.loads((tmp_path / "out.json").read_text())["status"] == "FAIL"


def test_schema_rejects_missing_anchor():
    import jsonschema

    doc = Report("demo", {}).to_dict()
    doc["checks"] = [dict(name="x", anchor="", status="INFO", tolerance=None, value=None)]
    with pytest.raises(jsonschema.ValidationError):
        validate_report(doc)
    doc["checks"] = [dict(name="x", anchor="y", status="PASS", tolerance=None, value=1.0)]
    with pytest.raises(jsonschema.ValidationError):
        validate_report(doc)
    assert REPORT_SCHEMA["properties"]["schema_version"]["const"] == "1.0"


def test_jsonable():
    out = jsonable({"a": np.float64(np.inf), "b": np.arange(2), "c": np.bool_(True), "d": 1 + 2j})
    assert out == {"a": "inf", "b": [0, 1], "c": True, "d": [1.0, 2.0]}
