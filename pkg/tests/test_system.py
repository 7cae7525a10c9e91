from __future__ import annotations

from attest_model.system import (
    AttestationSystem,
    PcrId,
    dependency_set,
    relation_closure,
    validate_system,
)


def _ms1_parts():
    pcrs = [PcrId("t", r) for r in ("p_r", "p_1", "p_2", "p_vc")]
    access = [("rtm", pcrs[0]), ("A1", pcrs[1]), ("A2", pcrs[2]), ("vc", pcrs[3])]
    measures = [("rtm", "A1"), ("rtm", "A2"), ("A1", "vc"), ("A2", "ker"), ("vc", "sys")]
    return ["rtm", "A1", "A2", "vc", "ker", "sys"], measures, [("ker", "vc")], pcrs, access


def test_ms1_fixture_is_valid(sys1):
    rep = validate_system(sys1)
    assert rep.ok, rep.to_dict()
    assert sys1.rtm == "rtm"


def test_edge_into_rtm_reported():
    objs, m, c, pcrs, access = _ms1_parts()
    s = AttestationSystem.build(objs, "rtm", m + [("sys", "rtm")], c, pcrs, access)
    codes = validate_system(s).codes()
    assert {"m-cyclic", "m-into-rtm"} <= codes


def test_shared_pcr_reported():
    objs, m, c, pcrs, access = _ms1_parts()
    s = AttestationSystem.build(objs, "rtm", m, c, pcrs, access + [("ker", pcrs[3])])
    assert "l-not-injective" in validate_system(s).codes()


def test_unrooted_object_reported():
    s = AttestationSystem.build(["rtm", "x"], "rtm", [], [])
    assert "not-rooted" in validate_system(s).codes()


def test_context_closed_transitively():
    s = AttestationSystem.build(
        ["rtm", "a", "b", "c"], "rtm", [("rtm", "a"), ("rtm", "b"), ("rtm", "c")], [("a", "b"), ("b", "c")]
    )
    assert ("a", "c") in s.context
    assert validate_system(s).ok


def test_dependency_sets(sys1):
    assert dependency_set(sys1, "sys", 1) == {"vc", "ker"}
    assert dependency_set(sys1, "sys", 2) == {"A1", "A2"}
    assert dependency_set(sys1, "A1", 1) == {"rtm"}
    assert dependency_set(sys1, "vc", 1) == {"A1"}


def test_dependency_sets_never_contain_object(sys1):
    for o in sys1.objects:
        for i in range(1, len(sys1.objects) + 1):
            assert o not in dependency_set(sys1, o, i)


def test_rtm_eventually_reached(sys1):
    for o in sys1.objects - {sys1.rtm}:
        assert any(sys1.rtm in dependency_set(sys1, o, i) for i in range(1, len(sys1.objects) + 1))


def test_relation_closure():
    assert relation_closure({("a", "b"), ("b", "c")}) == {("a", "b"), ("b", "c"), ("a", "c")}
    assert relation_closure(set()) == set()


def test_relation_closure_idempotent_and_fixpoint(sys1):
    once = relation_closure(sys1.measures)
    assert relation_closure(once) == once
    oracle = set(sys1.measures)
    while True:
        extra = {(a, d) for a, b in oracle for c, d in oracle if b == c} - oracle
        if not extra:
            break
        oracle |= extra
    assert once == oracle


def test_support_includes_context(sys1):
    assert sys1.support("vc") == {"vc", "ker"}
    assert sys1.support("A1") == {"A1"}


def test_value_classes(sys1):
    assert sys1.is_good(sys1.first_good("vc"))
    assert sys1.is_bad(sys1.first_bad("vc"))
    assert sys1.value_owner[sys1.first_bad("sys")] == "sys"


def test_pcr_parse():
    assert PcrId.parse("t.p_vc") == PcrId("t", "p_vc")
    assert str(PcrId("t", "p_1")) == "t.p_1"
