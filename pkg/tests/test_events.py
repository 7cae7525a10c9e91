from __future__ import annotations

import itertools

import pytest

from attest_model.events import (
    CS,
    AttStart,
    Corr,
    EventPoset,
    Ext,
    Meas,
    MeasOutcome,
    NotAdversaryOrdered,
    PosetError,
    Quote,
    Rep,
    Semantics,
    admits,
    all_embeddings,
    corruption_state,
    detected_corruptions,
    is_adversary_ordered,
    is_extend_ordered,
    measurement_output,
    pcr_value,
    quote_output,
    restrict,
    touches_object,
    touching,
    validate_execution,
)
from attest_model.system import PcrId
from attest_model.terms import RST, Key, Nonce, Pub, Sig, format_term, seq_of

P1 = PcrId("t", "p_1")
PVC = PcrId("t", "p_vc")


def test_touches(sys1):
    assert touches_object(sys1, Meas("vc", "sys"), "ker")
    assert not touches_object(sys1, Corr("vc"), "sys")
    assert touches_object(sys1, Ext("A1", Pub("v"), P1), "A1")


def test_poset_closure_and_cycles():
    p = EventPoset.build([("a", Corr("x")), ("b", Corr("y")), ("c", Corr("z"))], [("a", "b"), ("b", "c")])
    assert p.precedes("a", "c")
    assert p.cover_edges() == [("a", "b"), ("b", "c")]
    with pytest.raises(PosetError):
        EventPoset.build([("a", Corr("x")), ("b", Corr("y"))], [("a", "b"), ("b", "a")])
    with pytest.raises(PosetError):
        EventPoset.build([("a", Corr("x")), ("a", Corr("y"))])


def test_restrict_to_vc_keeps_order(sys1, ex):
    e1 = ex("e1")
    r = restrict(e1, touching(sys1, "vc"))
    assert set(r.labels) == {"corr.vc", "m.A1.vc", "m.vc.sys"}
    assert r.precedes("m.A1.vc", "corr.vc") and r.precedes("corr.vc", "m.vc.sys")
    assert len(restrict(e1, lambda e, l: False)) == 0


def test_restriction_order_matches_closure_oracle(ex):
    e1 = ex("e1")
    keep = {"corr.sys", "m.A1.vc", "m.vc.sys", "start"}
    r = e1.restrict(lambda e, l: e in keep)
    oracle = {(a, b) for a, b in e1.order_pairs() if a in keep and b in keep}
    assert r.order_pairs() == oracle


def test_adversary_ordered(sys1, ex):
    assert is_adversary_ordered(sys1, ex("e1"))
    bad = EventPoset.build([("c", Corr("vc")), ("m", Meas("A1", "vc"))])
    assert not is_adversary_ordered(sys1, bad)
    chain = EventPoset.chain([("c", Corr("vc")), ("m", Meas("A1", "vc"))])
    assert is_adversary_ordered(sys1, chain)


def test_extend_ordered(ex):
    assert is_extend_ordered(ex("fig7_exec"))
    two = EventPoset.build([("a", Ext("A1", Pub("g:vc"), P1)), ("b", Ext("A1", Pub("g:vc"), P1))])
    assert not is_extend_ordered(two)
    assert is_extend_ordered(ex("s1"))


def test_corruption_state_e1(sys1, ex):
    e1 = ex("e1")
    assert corruption_state(sys1, e1, "m.vc.sys", "vc") is CS.CORRUPT
    assert corruption_state(sys1, e1, "m.vc.sys", "A1") is CS.UNDEFINED
    assert corruption_state(sys1, e1, "m.A1.vc", "vc") is CS.REGULAR


def test_corruption_state_needs_adversary_order(sys1):
    p = EventPoset.build([("c", Corr("vc")), ("r", Rep("vc")), ("m", Meas("vc", "sys"))], [("c", "m"), ("r", "m")])
    with pytest.raises(NotAdversaryOrdered):
        corruption_state(sys1, p, "m", "vc")


def test_measurement_outputs(sys1, ex):
    out, kind = measurement_output(sys1, ex("e1"), "m.vc.sys")
    assert out == Pub("g:sys") and kind is MeasOutcome.AVOIDS
    p = EventPoset.chain([("c", Corr("vc")), ("m", Meas("A1", "vc"))])
    assert measurement_output(sys1, p, "m") == (Pub("b:vc"), MeasOutcome.DETECTS)
    q = EventPoset.chain([("m", Meas("A1", "vc"))])
    assert measurement_output(sys1, q, "m") == (Pub("g:vc"), MeasOutcome.CLEAN)


def test_pcr_values(ex):
    f5 = ex("fig5_exec")
    vals = [f5.labels[f"x.vc.v{i}"].value for i in range(1, 6)]
    assert pcr_value(f5, "q1", PVC) == seq_of(vals)
    lone = EventPoset.chain([("q", Quote(Nonce("n"), (P1,)))])
    assert pcr_value(lone, "q", P1) == RST
    two = EventPoset.chain([("a", Ext("A1", Pub("v"), P1)), ("b", Ext("A1", Pub("w"), P1))])
    assert pcr_value(two, "b", P1) == seq_of([Pub("v"), Pub("w")])


def test_quote_outputs(sys1, ex):
    out, bad = quote_output(sys1, ex("fig7_exec"), "q1")
    assert format_term(out) == "(sig (pair nonce:n (pair pub:t.p_r (seq pub:g:A1 pub:g:A2))) key:sk_t)"
    assert not bad
    lone = EventPoset.chain([("s", AttStart(Nonce("n"))), ("q", Quote(Nonce("n"), (P1,)))])
    out, bad = quote_output(sys1, lone, "q")
    assert isinstance(out, Sig) and out.key == Key("sk_t") and not bad
    p = EventPoset.chain([("x", Ext("A2", Pub("b:ker"), PcrId("t", "p_2"))), ("q", Quote(Nonce("n"), (PcrId("t", "p_2"),)))])
    assert quote_output(sys1, p, "q")[1]


def test_validate_execution(sys1, ex):
    assert validate_execution(sys1, ex("fig7_exec")).ok
    assert validate_execution(sys1, EventPoset.empty()).ok
    forged = Sig(Pub("m"), Key("sk_t"))
    p = EventPoset.chain([("x", Ext("A1", forged, P1))])
    assert "input-underivable" in validate_execution(sys1, p).codes()


def test_validate_execution_nonce_needs_att_start(sys1):
    q = EventPoset.chain([("q", Quote(Nonce("n"), (P1,)))])
    assert "input-underivable" in validate_execution(sys1, q).codes()


def test_label_side_conditions(sys1):
    p = EventPoset.chain([("m", Meas("vc", "A1")), ("c", Corr("rtm"))])
    codes = validate_execution(sys1, p).codes()
    assert {"label-meas", "label-rtm"} <= codes


def test_admits(ex):
    s1 = ex("s1")
    assert admits(s1, ex("e1")) is not None
    assert admits(s1, s1) == {e: e for e in s1.labels}
    assert admits(s1, ex("e2")) is None
    assert admits(s1, ex("e3")) is None


def test_admits_agrees_with_brute_force(ex):
    s1 = ex("s1")
    for name in ("e1", "e2", "e3", "e1_1", "e1_2", "e1_3", "e1_4"):
        assert (admits(s1, ex(name)) is not None) == any(True for _ in all_embeddings(s1, ex(name)))


def test_admits_composes(ex):
    s1, e1 = ex("s1"), ex("e1")
    spec_of_e1 = e1.restrict(lambda e, l: not isinstance(l, (Corr, Rep)))
    a = admits(s1, spec_of_e1)
    b = admits(spec_of_e1, e1)
    assert a is not None and b is not None
    comp = {k: b[v] for k, v in a.items()}
    assert all(e1.precedes(comp[x], comp[y]) for x, y in s1.order_pairs())


def test_admits_rejects_adversary_specs(ex):
    with pytest.raises(ValueError):
        admits(ex("e1"), ex("e1"))


def test_detected_corruptions(sys1, ex):
    e1 = ex("e1")
    assert detected_corruptions(sys1, e1) == set()
    no_vc = e1.restrict(lambda e, l: e != "corr.vc")
    assert detected_corruptions(sys1, no_vc) == {"m.vc.sys"}
    assert detected_corruptions(sys1, ex("s1")) == set()


def test_linear_extensions_of_s1(ex):
    s1 = ex("s1")
    exts = list(s1.linear_extensions())
    oracle = [
        perm for perm in itertools.permutations(sorted(s1.labels))
        if all(perm.index(a) < perm.index(b) for a, b in s1.order_pairs())
    ]
    assert sorted(map(tuple, exts)) == sorted(oracle)
    assert len(exts) == 12


def test_semantics_on_linearizations_of_e1(sys1, ex):
    e1 = ex("e1")
    base = Semantics(sys1, e1)
    for order in e1.linear_extensions():
        lin = Semantics(sys1, e1.linearized(order))
        for e in e1.labels:
            for o in sys1.objects:
                assert lin.cs(e, o) is base.cs(e, o)
