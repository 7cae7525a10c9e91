"""Bottom-up measurement and the recent-or-deep classification of avoidance events."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .events import AttStart, Corr, EventPoset, Meas, MeasOutcome, Semantics
from .system import AttestationSystem, dependency_set


class AnalysisError(ValueError):
    """A precondition of an analysis does not hold; ``code`` names which one."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def support_of(sys: AttestationSystem, p: EventPoset, e: str) -> Optional[frozenset[str]]:
    """Prior measurements of every member of D1(target), or None when one is missing.

    Every prior measurement of a D1 member belongs to the support, not just one
    representative; measurements by the rtm have empty support.
    """
    lab = p.labels[e]
    if not isinstance(lab, Meas):
        raise TypeError(f"{e} is not a measurement event")
    if lab.by == sys.rtm:
        return frozenset()
    need = dependency_set(sys, lab.target, 1)
    found: set[str] = set()
    covered: set[str] = set()
    for x in p.below[e]:
        lx = p.labels[x]
        if isinstance(lx, Meas) and lx.target in need:
            found.add(x)
            covered.add(lx.target)
    if covered != need:
        return None
    return frozenset(found)


def is_well_supported(sys: AttestationSystem, p: EventPoset, e: str) -> bool:
    return support_of(sys, p, e) is not None


def measures_bottom_up(sys: AttestationSystem, p: EventPoset) -> bool:
    return all(is_well_supported(sys, p, e) for e in p.events_of(Meas))


def unsupported_measurements(sys: AttestationSystem, p: EventPoset) -> list[str]:
    return sorted(e for e in p.events_of(Meas) if not is_well_supported(sys, p, e))


@dataclass(frozen=True)
class RecentWitness:
    obj: str
    measured_at: str
    corrupted_at: str
    since_nonce: bool = False
    # obj is the measurer or part of its context, the case the proof produces
    stronger: bool = False

    def to_dict(self) -> dict:
        return {
            "clause": "recent",
            "object": self.obj,
            "measured_at": self.measured_at,
            "corrupted_at": self.corrupted_at,
            "since_nonce": self.since_nonce,
            "stronger": self.stronger,
        }


@dataclass(frozen=True)
class DeepWitness:
    obj: str
    corrupted_at: str

    def to_dict(self) -> dict:
        return {"clause": "deep", "object": self.obj, "corrupted_at": self.corrupted_at}


@dataclass
class AvoidanceVerdict:
    event: str
    target: str
    recent: list[RecentWitness] = field(default_factory=list)
    deep: list[DeepWitness] = field(default_factory=list)

    @property
    def witnessed(self) -> bool:
        return bool(self.recent or self.deep)

    @property
    def witness_classes(self) -> frozenset[str]:
        return frozenset({f"recent-{w.obj}" for w in self.recent} | {f"deep-{w.obj}" for w in self.deep})

    @property
    def since_nonce_classes(self) -> frozenset[str]:
        return frozenset(f"recent-{w.obj}" for w in self.recent if w.since_nonce)

    def to_dict(self) -> dict:
        return {
            "event": self.event,
            "target": self.target,
            "classes": sorted(self.witness_classes),
            "witnesses": [w.to_dict() for w in self.recent] + [w.to_dict() for w in self.deep],
        }


def find_witnesses(sys: AttestationSystem, p: EventPoset, e: str) -> AvoidanceVerdict:
    """All recent and deep witnesses for measurement ``e``, with no precondition checks."""
    lab = p.labels[e]
    if not isinstance(lab, Meas):
        raise TypeError(f"{e} is not a measurement event")
    verdict = AvoidanceVerdict(event=e, target=lab.target)
    d1 = dependency_set(sys, lab.target, 1)
    d2 = dependency_set(sys, lab.target, 2)
    close = sys.support(lab.by)
    prior = sorted(p.below[e])
    starts = [x for x in p.labels if isinstance(p.labels[x], AttStart)]
    for c in prior:
        lc = p.labels[c]
        if not isinstance(lc, Corr):
            continue
        if lc.obj in d1:
            for m in sorted(p.below[c]):
                lm = p.labels[m]
                if isinstance(lm, Meas) and lm.target == lc.obj:
                    verdict.recent.append(
                        RecentWitness(
                            obj=lc.obj,
                            measured_at=m,
                            corrupted_at=c,
                            since_nonce=any(s in p.below[m] for s in starts),
                            stronger=lc.obj in close,
                        )
                    )
        if lc.obj in d2:
            verdict.deep.append(DeepWitness(obj=lc.obj, corrupted_at=c))
    return verdict


def classify_avoidance(sys: AttestationSystem, p: EventPoset, e: str) -> AvoidanceVerdict:
    """Witnesses for an avoidance event that meets every hypothesis of the theorem."""
    lab = p.labels.get(e)
    if not isinstance(lab, Meas):
        raise AnalysisError("not-measurement", f"{e} is not a measurement event")
    if lab.by == sys.rtm:
        raise AnalysisError("rtm-measurer", f"{e} is taken by the rtm")
    if not is_well_supported(sys, p, e):
        raise AnalysisError("not-well-supported", f"{e} is not well-supported")
    sem = Semantics(sys, p)
    detected = [x for x in p.events_of(Meas) if sem.outcome(x) is MeasOutcome.DETECTS]
    if detected:
        raise AnalysisError("detects", f"execution detects corruption at {sorted(detected)}")
    if sem.outcome(e) is not MeasOutcome.AVOIDS:
        raise AnalysisError("not-avoidance", f"{e} is not an avoidance event")
    return find_witnesses(sys, p, e)


@dataclass
class RecentOrDeepReport:
    detected: list[str] = field(default_factory=list)
    verdicts: list[AvoidanceVerdict] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    # avoidance events outside the hypotheses: unsupported or measured by the rtm
    outside: list[AvoidanceVerdict] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return not self.missing

    def to_dict(self) -> dict:
        return {
            "holds": self.holds,
            "detected": self.detected,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "missing": self.missing,
            "outside_hypotheses": [v.to_dict() for v in self.outside],
        }


def check_recent_or_deep(sys: AttestationSystem, p: EventPoset) -> RecentOrDeepReport:
    sem = Semantics(sys, p)
    rep = RecentOrDeepReport()
    meas = [e for e in p.topological_order() if isinstance(p.labels[e], Meas)]
    rep.detected = [e for e in meas if sem.outcome(e) is MeasOutcome.DETECTS]
    if rep.detected:
        return rep
    for e in meas:
        if sem.outcome(e) is not MeasOutcome.AVOIDS:
            continue
        verdict = find_witnesses(sys, p, e)
        if p.labels[e].by == sys.rtm or not is_well_supported(sys, p, e):
            rep.outside.append(verdict)
            continue
        rep.verdicts.append(verdict)
        if not verdict.witnessed:
            rep.missing.append(e)
    return rep
