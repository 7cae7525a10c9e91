"""Evidence bundles: spec extraction, compliance, assumptions and the joint-strategy check.

A bundle is a set of quote terms.  Extraction turns it into the measurement
specification the bundle claims was followed; the joint-strategy check
relates that specification to an execution that produced the bundle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .events import (
    CS,
    AttStart,
    Corr,
    EventPoset,
    Ext,
    Label,
    Meas,
    Quote,
    Semantics,
    admits,
    chain_has_bad,
    is_adversary_ordered,
    is_extend_ordered,
)
from .measurement import measures_bottom_up, support_of
from .system import AttestationSystem, PcrId, dependency_set
from .terms import Nonce, Pair, Pub, Sig, Term, format_term, seq_view, untuple


class ExtractionError(ValueError):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class MissingRecorder(ExtractionError):
    def __init__(self, message: str):
        super().__init__("missing-recorder", message)


@dataclass(frozen=True)
class ParsedQuote:
    term: Term
    nonce: Term
    tpm: str
    pcrs: tuple[PcrId, ...]
    values: tuple[Term, ...]


def parse_quote(sys: AttestationSystem, t: Term) -> ParsedQuote:
    """Read a signed (nonce, pcr names, pcr values) term issued by a TPM of ``sys``."""
    if not isinstance(t, Sig):
        raise ExtractionError("not-quote", f"{format_term(t)} is not a signature")
    tpm = sys.tpm_for_key(t.key)
    if tpm is None:
        raise ExtractionError("unknown-signer", f"{format_term(t.key)} is not the key of a known TPM")
    parts = untuple(t.payload, 3)
    if parts is None:
        raise ExtractionError("not-quote", "quote payload is not (nonce, pcrs, values)")
    nonce, names, rest = parts
    pcrs: list[PcrId] = []
    cur = names
    while True:
        head = cur.left if isinstance(cur, Pair) else cur
        pcr = sys.pcr_for_term(head)
        if pcr is None or pcr.tpm != tpm:
            raise ExtractionError("not-quote", f"{format_term(head)} is not a PCR of TPM {tpm}")
        pcrs.append(pcr)
        if not isinstance(cur, Pair):
            break
        cur = cur.right
    values = untuple(rest, len(pcrs))
    if values is None:
        raise ExtractionError("not-quote", "quote lists fewer values than PCRs")
    return ParsedQuote(term=t, nonce=nonce, tpm=tpm, pcrs=tuple(pcrs), values=tuple(values))


def try_parse_quote(sys: AttestationSystem, t: Term) -> Optional[ParsedQuote]:
    try:
        return parse_quote(sys, t)
    except ExtractionError:
        return None


@dataclass(frozen=True)
class QuoteBundle:
    quotes: tuple[Term, ...] = ()

    @classmethod
    def of(cls, quotes: Iterable[Term]) -> "QuoteBundle":
        out: list[Term] = []
        for q in quotes:
            if q not in out:
                out.append(q)
        return cls(tuple(out))

    def __len__(self) -> int:
        return len(self.quotes)


def bundle_indicates_corruption(sys: AttestationSystem, bundle: QuoteBundle) -> bool:
    return any(
        chain_has_bad(sys, v) for q in bundle.quotes for v in parse_quote(sys, q).values
    )


# -- extraction -----------------------------------------------------------------


@dataclass(frozen=True)
class Origin:
    quote: int
    pcr: PcrId
    position: int
    value: Term

    def to_dict(self) -> dict:
        return {"quote": self.quote, "pcr": str(self.pcr), "position": self.position, "value": format_term(self.value)}


@dataclass
class ExtractedSpec:
    spec: EventPoset
    origin: dict[str, Origin] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    duplicates: list[tuple[str, str]] = field(default_factory=list)


def _measurer_for(sys: AttestationSystem, target: str, pcr: PcrId) -> str:
    cands = sorted(o for o in sys.measurers.get(target, ()) if (o, pcr) in sys.access)
    if not cands:
        raise ExtractionError(
            "no-measurer",
            f"value of {target} in {pcr} has no measurer o with M(o,{target}) and L(o,{pcr})",
        )
    if len(cands) > 1:
        raise ExtractionError("ambiguous-measurer", f"value of {target} in {pcr} fits measurers {cands}")
    return cands[0]


def nonce_event_id(n: Term) -> str:
    return f"start.{n.name}" if isinstance(n, (Nonce, Pub)) else f"start.{format_term(n)}"


def extract_specification(sys: AttestationSystem, bundle: QuoteBundle) -> ExtractedSpec:
    """Build S(Q): one measurement per reported value, one att-start per nonce.

    ``e`` precedes ``e_v`` exactly when ``e`` comes from a bundle quote that is
    contained before ``v`` in ``v``'s PCR chain.
    """
    parsed = [parse_quote(sys, q) for q in bundle.quotes]
    index = {q.term: i for i, q in enumerate(parsed)}
    labels: dict[str, Label] = {}
    origin: dict[str, Origin] = {}
    from_quote: dict[int, list[str]] = {i: [] for i in range(len(parsed))}
    notes: list[str] = []
    # (event of v, quote indices contained before v)
    later: list[tuple[str, list[int]]] = []

    for qi, q in enumerate(parsed):
        nid = nonce_event_id(q.nonce)
        labels.setdefault(nid, AttStart(q.nonce))
        from_quote[qi].append(nid)
        for pcr, chain in zip(q.pcrs, q.values):
            view = seq_view(chain)
            if view is None:
                raise ExtractionError("malformed-chain", f"quote {qi}: value of {pcr} is not a hash chain")
            seen_quotes: list[int] = []
            for pos, v in enumerate(view):
                nested = index.get(v)
                if nested is not None:
                    seen_quotes.append(nested)
                    continue
                if try_parse_quote(sys, v) is not None:
                    notes.append(f"quote {qi}: {pcr}[{pos}] holds a quote outside the bundle; ignored")
                    continue
                target = sys.value_owner.get(v)
                if target is None:
                    notes.append(f"quote {qi}: {pcr}[{pos}] holds opaque value {format_term(v)}; ignored")
                    continue
                by = _measurer_for(sys, target, pcr)
                eid = f"q{qi + 1}.{pcr}.{pos}"
                labels[eid] = Meas(by, target)
                origin[eid] = Origin(qi, pcr, pos, v)
                from_quote[qi].append(eid)
                later.append((eid, list(seen_quotes)))

    pairs = {(e, ev) for ev, qs in later for qi in qs for e in from_quote[qi]}
    spec = EventPoset.build(labels.items(), sorted(pairs))
    spec, dups = _merge_duplicates(spec)
    for keep, drop in dups:
        origin.pop(drop, None)
        notes.append(f"duplicate spec event {drop} merged into {keep}")
    return ExtractedSpec(spec=spec, origin=origin, notes=notes, duplicates=dups)


def _merge_duplicates(p: EventPoset) -> tuple[EventPoset, list[tuple[str, str]]]:
    """Merge events whose label, predecessors and successors all coincide."""
    groups: dict[tuple, list[str]] = {}
    for e in sorted(p.labels):
        groups.setdefault((p.labels[e], p.below[e], p.above(e)), []).append(e)
    dups = [(g[0], d) for g in groups.values() for d in g[1:]]
    if not dups:
        return p, []
    dropped = {d for _, d in dups}
    return p.restrict(lambda e, _l: e not in dropped), dups


def complies_with_strategy(sys: AttestationSystem, bundle: QuoteBundle) -> bool:
    return measures_bottom_up(sys, extract_specification(sys, bundle).spec)


def core_of(sys: AttestationSystem, spec: EventPoset, keep_nonce_order: bool = True) -> EventPoset:
    """Keep measurement orderings only from support to supported event.

    Orderings with att-start events are kept unless ``keep_nonce_order`` is
    false, a diagnostic variant.
    """
    if not measures_bottom_up(sys, spec):
        raise ValueError("the core is defined only for specifications that measure bottom-up")
    keep = []
    for a, b in spec.order_pairs():
        la, lb = spec.labels[a], spec.labels[b]
        if isinstance(la, Meas) and isinstance(lb, Meas):
            if a in support_of(sys, spec, b):
                keep.append((a, b))
        elif keep_nonce_order:
            keep.append((a, b))
    return spec.with_order(sorted(keep))


def meas_order_only(p: EventPoset) -> EventPoset:
    """Same events, keeping only the orderings between measurement events."""
    return p.with_order(
        sorted((a, b) for a, b in p.order_pairs() if isinstance(p.labels[a], Meas) and isinstance(p.labels[b], Meas))
    )


# -- executions and bundles --------------------------------------------------------


def produced_quotes(sys: AttestationSystem, p: EventPoset) -> dict[Term, list[str]]:
    sem = Semantics(sys, p)
    out: dict[Term, list[str]] = {}
    for e in sorted(p.events_of(Quote)):
        out.setdefault(sem.out(e), []).append(e)
    return out


def produces_bundle(sys: AttestationSystem, p: EventPoset, bundle: QuoteBundle) -> bool:
    made = produced_quotes(sys, p)
    return all(q in made for q in bundle.quotes)


def bundle_of(sys: AttestationSystem, p: EventPoset) -> QuoteBundle:
    """Every quote the execution outputs, in topological order."""
    sem = Semantics(sys, p)
    return QuoteBundle.of(sem.out(e) for e in p.topological_order() if isinstance(p.labels[e], Quote))


def extension_substructure(sys: AttestationSystem, p: EventPoset, bundle: QuoteBundle) -> frozenset[str]:
    """The extend events recording each measurement value the bundle reports."""
    sem = Semantics(sys, p)
    made = produced_quotes(sys, p)
    out: set[str] = set()
    for qi, q in enumerate(bundle.quotes):
        if q not in made:
            raise MissingRecorder(f"quote {qi} of the bundle is not produced by the execution")
        qe = made[q][0]
        pq = parse_quote(sys, q)
        for pcr, chain in zip(pq.pcrs, pq.values):
            view = seq_view(chain) or []
            recorders = sem.recorder_chain(qe, pcr)
            if len(recorders) != len(view):
                raise MissingRecorder(f"quote {qi}: {pcr} chain and its extend events disagree")
            for v, x in zip(view, recorders):
                if p.labels[x].value != v:
                    raise MissingRecorder(f"quote {qi}: {x} does not record {format_term(v)}")
                if v in sys.value_owner:
                    out.add(x)
    return frozenset(out)


def _mv_target(sys: AttestationSystem, lab: Label) -> Optional[str]:
    if isinstance(lab, Ext):
        return sys.value_owner.get(lab.value)
    return None


def unsupported_extends(sys: AttestationSystem, p: EventPoset, xs: Iterable[str]) -> list[str]:
    out = []
    for e in sorted(xs):
        lab = p.labels[e]
        t = _mv_target(sys, lab)
        if t is None:
            raise ValueError(f"{e} does not extend a measurement value")
        if lab.by == sys.rtm:
            continue
        for o in sorted(dependency_set(sys, t, 1)):
            if not any(_mv_target(sys, p.labels[x]) == o for x in p.below[e]):
                out.append(e)
                break
    return out


def extends_bottom_up(sys: AttestationSystem, p: EventPoset, xs: Iterable[str]) -> bool:
    return not unsupported_extends(sys, p, xs)


# -- assumptions -------------------------------------------------------------------


class Assumption(str, enum.Enum):
    PRIOR_MEAS = "assumption2"
    FRESH_MEAS = "assumption3"


@dataclass(frozen=True)
class Violation:
    assumption: Assumption
    events: tuple[str, ...]
    message: str

    def to_dict(self) -> dict:
        return {"assumption": self.assumption.value, "events": list(self.events), "message": self.message}


def check_assumption_prior_meas(sys: AttestationSystem, p: EventPoset) -> list[Violation]:
    """Regular extenders extend what their most recent measurement of the target output."""
    sem = Semantics(sys, p)
    out = []
    for e in sorted(p.events_of(Ext)):
        lab = p.labels[e]
        t = _mv_target(sys, lab)
        if t is None or sem.cs(e, lab.by) is not CS.REGULAR:
            continue
        prior = [x for x in p.below[e] if p.labels[x] == Meas(lab.by, t)]
        if not prior:
            out.append(Violation(Assumption.PRIOR_MEAS, (e,), f"{e}: no prior meas({lab.by},{t})"))
            continue
        latest = [x for x in prior if not any(x in p.below[y] for y in prior)]
        wrong = sorted(x for x in latest if sem.out(x) != lab.value)
        if wrong:
            out.append(
                Violation(
                    Assumption.PRIOR_MEAS,
                    (wrong[0], e),
                    f"{e}: most recent meas({lab.by},{t}) {wrong[0]} output {format_term(sem.out(wrong[0]))}",
                )
            )
    return out


def check_assumption_fresh_meas(sys: AttestationSystem, p: EventPoset) -> list[Violation]:
    """A remeasured dependency forces remeasuring the target before its value is extended."""
    sem = Semantics(sys, p)
    out = []
    for e2 in sorted(p.events_of(Ext)):
        lab = p.labels[e2]
        t = _mv_target(sys, lab)
        if t is None:
            continue
        if sem.cs(e2, lab.by) is CS.CORRUPT:
            continue
        d1 = dependency_set(sys, t, 1)
        remeas = [x for x in p.below[e2] if p.labels[x] == Meas(lab.by, t)]
        for e1 in sorted(p.below[e2]):
            l1 = p.labels[e1]
            if not isinstance(l1, Meas) or l1.target not in d1:
                continue
            if not any(e1 in p.below[x] for x in remeas):
                out.append(
                    Violation(
                        Assumption.FRESH_MEAS,
                        (e1, e2),
                        f"{e1} precedes {e2} with no meas({lab.by},{t}) in between",
                    )
                )
    return out


def check_assumptions(
    sys: AttestationSystem, p: EventPoset, relax: Iterable[str] = ()
) -> tuple[list[Violation], list[Violation]]:
    """(enforced violations, relaxed violations)."""
    relax = set(relax)
    viol = check_assumption_prior_meas(sys, p) + check_assumption_fresh_meas(sys, p)
    return [v for v in viol if v.assumption.value not in relax], [v for v in viol if v.assumption.value in relax]


# -- joint strategy ------------------------------------------------------------------


class VerdictKind(str, enum.Enum):
    ADMITS_CORE = "admits-core"
    DEEP = "deep"
    RECENT = "recent"
    THEOREM_FAILURE = "theorem-failure"
    ASSUMPTIONS_VIOLATED = "assumptions-violated"
    PRECONDITION = "precondition-failed"


CLASSIFIED = (VerdictKind.ADMITS_CORE, VerdictKind.DEEP, VerdictKind.RECENT)


@dataclass
class AnalysisVerdict:
    kind: VerdictKind
    embedding: Optional[dict[str, str]] = None
    deep: list[tuple[str, str]] = field(default_factory=list)
    recent: list[tuple[str, str, str]] = field(default_factory=list)
    violations: list[Violation] = field(default_factory=list)
    relaxed_violations: list[Violation] = field(default_factory=list)
    reason: str = ""

    @property
    def holds(self) -> bool:
        return self.kind is not VerdictKind.THEOREM_FAILURE

    def to_dict(self) -> dict:
        d: dict = {"verdict": self.kind.value, "holds": self.holds}
        if self.reason:
            d["reason"] = self.reason
        if self.embedding is not None:
            d["embedding"] = dict(sorted(self.embedding.items()))
        if self.deep:
            d["deep"] = [{"object": o, "corrupted_at": c} for o, c in self.deep]
        if self.recent:
            d["recent"] = [{"object": o, "measured_at": m, "corrupted_at": c} for o, m, c in self.recent]
        if self.violations:
            d["violations"] = [v.to_dict() for v in self.violations]
        if self.relaxed_violations:
            d["relaxed_violations"] = [v.to_dict() for v in self.relaxed_violations]
        return d


def deep_objects(sys: AttestationSystem) -> frozenset[str]:
    """Objects in D2(t) for some t."""
    return frozenset().union(*(dependency_set(sys, t, 2) for t in sys.objects)) if sys.objects else frozenset()


def recent_objects(sys: AttestationSystem) -> frozenset[str]:
    """Objects in D1(t) for some t."""
    return frozenset().union(*(dependency_set(sys, t, 1) for t in sys.objects)) if sys.objects else frozenset()


def deep_witnesses(sys: AttestationSystem, p: EventPoset) -> list[tuple[str, str]]:
    objs = deep_objects(sys)
    return [(p.labels[c].obj, c) for c in sorted(p.events_of(Corr)) if p.labels[c].obj in objs]


def recent_witnesses(sys: AttestationSystem, p: EventPoset) -> list[tuple[str, str, str]]:
    objs = recent_objects(sys)
    out = []
    for c in sorted(p.events_of(Corr)):
        o = p.labels[c].obj
        if o not in objs:
            continue
        for m in sorted(p.below[c]):
            lm = p.labels[m]
            if isinstance(lm, Meas) and lm.target == o:
                out.append((o, m, c))
    return out


def joint_target(
    sys: AttestationSystem, bundle: QuoteBundle, keep_nonce_order: bool = True
) -> EventPoset:
    """The core of S(bundle); raises ExtractionError or ValueError when undefined."""
    return core_of(sys, extract_specification(sys, bundle).spec, keep_nonce_order)


def check_joint_strategy(
    sys: AttestationSystem,
    p: EventPoset,
    bundle: QuoteBundle,
    *,
    keep_nonce_order: bool = True,
    relax: Iterable[str] = (),
    reference: Optional[EventPoset] = None,
) -> AnalysisVerdict:
    """Classify an execution producing ``bundle`` as admits-core, deep or recent.

    With ``reference`` the target specification is that poset instead of the
    core of S(bundle), and S(bundle) need not measure bottom-up.  Without
    ``keep_nonce_order`` only orderings between measurements are targeted.
    """
    if not (is_adversary_ordered(sys, p) and is_extend_ordered(p)):
        return AnalysisVerdict(VerdictKind.PRECONDITION, reason="execution is not adversary- and extend-ordered")
    if not produces_bundle(sys, p, bundle):
        return AnalysisVerdict(VerdictKind.PRECONDITION, reason="execution does not produce the bundle")
    try:
        spec = extract_specification(sys, bundle).spec
    except ExtractionError as exc:
        return AnalysisVerdict(VerdictKind.PRECONDITION, reason=f"extraction failed: {exc}")
    if reference is None:
        if not measures_bottom_up(sys, spec):
            return AnalysisVerdict(VerdictKind.PRECONDITION, reason="S(bundle) does not measure bottom-up")
        target = core_of(sys, spec, keep_nonce_order)
    else:
        target = reference if keep_nonce_order else meas_order_only(reference)
    if bundle_indicates_corruption(sys, bundle):
        return AnalysisVerdict(VerdictKind.PRECONDITION, reason="bundle indicates a corruption")
    enforced, relaxed = check_assumptions(sys, p, relax)
    if enforced:
        return AnalysisVerdict(VerdictKind.ASSUMPTIONS_VIOLATED, violations=enforced, relaxed_violations=relaxed)
    verdict = AnalysisVerdict(
        VerdictKind.THEOREM_FAILURE,
        embedding=admits(target, p),
        deep=deep_witnesses(sys, p),
        recent=recent_witnesses(sys, p),
        relaxed_violations=relaxed,
    )
    if verdict.embedding is not None:
        verdict.kind = VerdictKind.ADMITS_CORE
    elif verdict.deep:
        verdict.kind = VerdictKind.DEEP
    elif verdict.recent:
        verdict.kind = VerdictKind.RECENT
    return verdict


# -- scaffolds -----------------------------------------------------------------------


def _depths(sys: AttestationSystem) -> dict[str, int]:
    depth = {sys.rtm: 0}
    frontier = [sys.rtm]
    while frontier:
        nxt = []
        for o in frontier:
            for a, b in sorted(sys.measures):
                if a == o and b not in depth:
                    depth[b] = depth[o] + 1
                    nxt.append(b)
        frontier = nxt
    return depth


def _own_pcr(sys: AttestationSystem, o: str) -> PcrId:
    mine = sorted(p for (x, p) in sys.access if x == o)
    if len(mine) != 1:
        raise ValueError(f"{o} needs exactly one PCR, has {len(mine)}")
    return mine[0]


def strategy3_scaffold(sys: AttestationSystem, nonce: Term = Nonce("n")) -> EventPoset:
    """Measurement, extend and quote events of tiered, nested bundling.

    Measurers are grouped into layers by their M-depth from the rtm.  Each
    layer first extends the previous layer's quote (if any), then its
    measurement values, and the layer's PCRs are quoted together.  Only the
    orderings every valid execution needs are imposed: PCR chains, quote
    inputs after their producers, and the att-start before the first quote.
    """
    depth = _depths(sys)
    layers: dict[int, list[str]] = {}
    for a, _ in sys.measures:
        layers.setdefault(depth[a], [])
        if a not in layers[depth[a]]:
            layers[depth[a]].append(a)
    events: list[tuple[str, Label]] = []
    order: list[tuple[str, str]] = []
    targets = {a: sorted(b for x, b in sys.measures if x == a) for a in sys.objects}
    for d in sorted(layers):
        for a in sorted(layers[d]):
            for b in targets[a]:
                events.append((f"m.{a}.{b}", Meas(a, b)))
    events.append(("start", AttStart(nonce)))
    prev_quote: Optional[tuple[str, Term]] = None
    for i, d in enumerate(sorted(layers)):
        tails = []
        pcrs = []
        for a in sorted(layers[d]):
            pcr = _own_pcr(sys, a)
            pcrs.append(pcr)
            last = None
            if prev_quote is not None:
                xid = f"x.{a}.q{i}"
                events.append((xid, Ext(a, prev_quote[1], pcr)))
                order.append((prev_quote[0], xid))
                last = xid
            for b in targets[a]:
                xid = f"x.{a}.{b}"
                events.append((xid, Ext(a, sys.first_good(b), pcr)))
                if last is not None:
                    order.append((last, xid))
                last = xid
            tails.append(last)
        qid = f"q{i + 1}"
        events.append((qid, Quote(nonce, tuple(pcrs))))
        order.extend((t, qid) for t in tails if t is not None)
        if i == 0:
            order.append(("start", qid))
        else:
            order.append((prev_quote[0], qid))
        prev_poset = EventPoset.build(events, order)
        sem = Semantics(sys, prev_poset)
        prev_quote = (qid, sem.out(qid))
    return EventPoset.build(events, order)


def strategy2_scaffold(sys: AttestationSystem, nonce: Term = Nonce("n")) -> EventPoset:
    """Every measurer extends its values into its own PCR; one quote over all of them."""
    depth = _depths(sys)
    measurers = sorted({a for a, _ in sys.measures}, key=lambda o: (depth[o], o))
    events: list[tuple[str, Label]] = []
    order: list[tuple[str, str]] = []
    targets = {a: sorted(b for x, b in sys.measures if x == a) for a in measurers}
    for a in measurers:
        for b in targets[a]:
            events.append((f"m.{a}.{b}", Meas(a, b)))
    events.append(("start", AttStart(nonce)))
    pcrs = []
    for a in measurers:
        pcr = _own_pcr(sys, a)
        pcrs.append(pcr)
        last = None
        for b in targets[a]:
            xid = f"x.{a}.{b}"
            events.append((xid, Ext(a, sys.first_good(b), pcr)))
            if last is not None:
                order.append((last, xid))
            last = xid
        order.append((last, "q1"))
    events.append(("q1", Quote(nonce, tuple(pcrs))))
    order.append(("start", "q1"))
    return EventPoset.build(events, order)
