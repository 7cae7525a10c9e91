from __future__ import annotations

import json

import pytest

from attest_model.bundling import strategy3_scaffold
from attest_model.io import (
    DocumentError,
    fixture_bundle,
    fixture_name,
    fixture_names,
    fixture_text,
    parse_bundle,
    parse_execution,
    parse_system,
    read_source,
    serialize_bundle,
    serialize_execution,
    serialize_system,
    source_name,
    system_to_dict,
)
from attest_model.system import validate_system

EXECUTIONS = ["s1", "s2", "s3", "e1", "e2", "e3", "e1_1", "e1_2", "e1_3", "e1_4",
              "fig5_exec", "fig6_exec", "fig7_exec", "strategy2_scaffold", "strategy3_scaffold"]


def test_fixture_corpus_complete():
    names = set(fixture_names())
    assert set(EXECUTIONS) | {"ms1", "strategy3_bundle", "fig5_bundle", "fig6_bundle"} <= names


def test_ms1_document(sys1):
    assert validate_system(sys1).ok
    assert fixture_name("ms1") == "MS1"


def test_system_roundtrip(sys1):
    again = parse_system(serialize_system(sys1))
    assert system_to_dict(again) == system_to_dict(sys1)
    assert again.measures == sys1.measures and again.access == sys1.access


def test_system_with_custom_values_roundtrip(sys1):
    doc = json.loads(serialize_system(sys1))
    doc["mv"] = {o: {"good": [f"pub:ok:{o}", f"pub:ok2:{o}"], "bad": [f"pub:bad:{o}"]} for o in doc["objects"]}
    s = parse_system(json.dumps(doc))
    assert len(s.good["vc"]) == 2
    assert system_to_dict(parse_system(serialize_system(s))) == system_to_dict(s)


@pytest.mark.parametrize("name", EXECUTIONS)
def test_execution_roundtrip(sys1, name):
    p = parse_execution(fixture_text(name), sys1)
    assert parse_execution(serialize_execution(p, name), sys1) == p


@pytest.mark.parametrize("name", ["strategy3_bundle", "fig5_bundle", "fig6_bundle"])
def test_bundle_roundtrip(name):
    b = fixture_bundle(name)
    assert parse_bundle(serialize_bundle(b)) == b


def test_missing_rtm():
    doc = json.loads(fixture_text("ms1"))
    del doc["rtm"]
    with pytest.raises(DocumentError, match="rtm required"):
        parse_system(json.dumps(doc))


def test_unknown_pcr_has_field_path():
    doc = json.loads(fixture_text("ms1"))
    doc["L"].append(["ker", "t.p_nope"])
    with pytest.raises(DocumentError) as err:
        parse_system(json.dumps(doc))
    assert err.value.path == f"L[{len(doc['L']) - 1}]"


def test_semantic_errors_carry_report():
    doc = json.loads(fixture_text("ms1"))
    doc["M"].append(["sys", "rtm"])
    with pytest.raises(DocumentError) as err:
        parse_system(json.dumps(doc))
    assert "m-into-rtm" in err.value.report.codes()
    s = parse_system(json.dumps(doc), strict=False)
    assert not validate_system(s).ok


def test_json_syntax_error_reports_position():
    with pytest.raises(DocumentError, match="line 1"):
        parse_system("{")


def test_bad_meas_label_rejected(sys1):
    doc = {"events": [{"id": "m", "label": {"kind": "meas", "by": "vc", "target": "A1"}}], "order": []}
    with pytest.raises(DocumentError):
        parse_execution(json.dumps(doc), sys1)


def test_cyclic_order_rejected(sys1):
    doc = {
        "events": [{"id": "a", "label": {"kind": "corr", "obj": "vc"}}, {"id": "b", "label": {"kind": "corr", "obj": "ker"}}],
        "order": [["a", "b"], ["b", "a"]],
    }
    with pytest.raises(DocumentError, match="cyclic"):
        parse_execution(json.dumps(doc), sys1)


def test_unknown_label_kind(sys1):
    doc = {"events": [{"id": "a", "label": {"kind": "boot"}}], "order": []}
    with pytest.raises(DocumentError) as err:
        parse_execution(json.dumps(doc), sys1)
    assert err.value.path == "events[0].label.kind"


def test_bad_term_in_bundle():
    with pytest.raises(DocumentError) as err:
        parse_bundle('{"quotes": ["(sig pub:a"]}')
    assert err.value.path == "quotes[0]"


def test_read_source(tmp_path, sys1):
    path = tmp_path / "scaffold.json"
    path.write_text(serialize_execution(strategy3_scaffold(sys1)))
    assert parse_execution(read_source(path), sys1) == strategy3_scaffold(sys1)
    assert read_source("@ms1") == fixture_text("ms1")
    assert source_name("@e1_3") == "E1^3"
    assert source_name(path) == str(path)
    with pytest.raises(DocumentError):
        read_source(tmp_path / "missing.json")
    with pytest.raises(DocumentError):
        read_source("@no_such_fixture")
