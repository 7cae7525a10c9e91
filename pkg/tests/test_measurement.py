from __future__ import annotations

import pytest

from attest_model.events import Corr, EventPoset, Meas
from attest_model.measurement import (
    AnalysisError,
    check_recent_or_deep,
    classify_avoidance,
    find_witnesses,
    is_well_supported,
    measures_bottom_up,
    support_of,
)


def test_support(sys1, ex):
    assert support_of(sys1, ex("s1"), "m.vc.sys") == {"m.A1.vc", "m.A2.ker"}
    assert support_of(sys1, ex("s1"), "m.rtm.A1") == frozenset()
    assert support_of(sys1, ex("s2"), "m.vc.sys") is None


def test_bottom_up(sys1, ex):
    assert measures_bottom_up(sys1, ex("s1"))
    assert not measures_bottom_up(sys1, ex("s2"))
    assert not measures_bottom_up(sys1, ex("s3"))
    assert measures_bottom_up(sys1, EventPoset.empty())
    assert measures_bottom_up(sys1, EventPoset.chain([("m", Meas("rtm", "A1"))]))


@pytest.mark.parametrize(
    "name, event, classes",
    [
        ("e1_1", "m.vc.sys", {"recent-vc"}),
        ("e1_2", "m.vc.sys", {"recent-ker"}),
        ("e1_3", "m.vc.sys", {"deep-A1"}),
        ("e1_4", "m.vc.sys", {"deep-A2"}),
        ("e1_3", "m.A1.vc", {"recent-A1"}),
        ("e1_4", "m.A2.ker", {"recent-A2"}),
    ],
)
def test_fig4_witnesses(sys1, ex, name, event, classes):
    assert classify_avoidance(sys1, ex(name), event).witness_classes == classes


def test_recent_witness_details(sys1, ex):
    v = classify_avoidance(sys1, ex("e1_1"), "m.vc.sys")
    (w,) = v.recent
    assert (w.obj, w.measured_at, w.corrupted_at) == ("vc", "m.A1.vc", "corr.vc")
    assert w.since_nonce and w.stronger


def test_classify_preconditions(sys1, ex):
    with pytest.raises(AnalysisError) as err:
        classify_avoidance(sys1, ex("e2"), "m.vc.sys")
    assert err.value.code == "not-well-supported"
    with pytest.raises(AnalysisError) as err:
        classify_avoidance(sys1, ex("e1"), "m.rtm.A1")
    assert err.value.code == "rtm-measurer"
    with pytest.raises(AnalysisError) as err:
        classify_avoidance(sys1, ex("e1"), "m.A1.vc")
    assert err.value.code == "not-avoidance"
    with pytest.raises(AnalysisError) as err:
        classify_avoidance(sys1, ex("e1"), "start")
    assert err.value.code == "not-measurement"
    p = EventPoset.chain([("m0", Meas("rtm", "A1")), ("c", Corr("vc")), ("m", Meas("A1", "vc"))])
    with pytest.raises(AnalysisError) as err:
        classify_avoidance(sys1, p, "m")
    assert err.value.code == "detects"


def test_check_recent_or_deep_on_fig4(sys1, ex):
    for name in ("e1", "e1_1", "e1_2", "e1_3", "e1_4"):
        rep = check_recent_or_deep(sys1, ex(name))
        assert rep.holds and not rep.detected and not rep.outside
        assert all(v.witnessed for v in rep.verdicts)


def test_check_recent_or_deep_without_avoidance(sys1, ex):
    rep = check_recent_or_deep(sys1, ex("s1"))
    assert rep.holds and rep.verdicts == [] and rep.outside == []


def test_unsupported_avoidance_is_outside(sys1, ex):
    for name in ("e2", "e3"):
        rep = check_recent_or_deep(sys1, ex(name))
        assert rep.holds
        assert [v.event for v in rep.outside] == ["m.vc.sys"]
        assert not rep.outside[0].witnessed


def test_support_monotone_under_adversary_events(sys1, ex):
    s2 = ex("s2")
    extra = EventPoset.build(
        list(s2.labels.items()) + [("c", Corr("ker"))], list(s2.order_pairs()) + [("c", "m.vc.sys")]
    )
    for e in s2.events_of(Meas):
        assert is_well_supported(sys1, s2, e) == is_well_supported(sys1, extra, e)


def test_find_witnesses_ignores_preconditions(sys1, ex):
    assert find_witnesses(sys1, ex("e2"), "m.vc.sys").witness_classes == frozenset()
