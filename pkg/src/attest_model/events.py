"""Labeled event posets and their execution semantics.

An :class:`EventPoset` is a finite set of labeled events with a strict
partial order.  The same structure serves as a specification (no adversary
events) and as an execution.  :class:`Semantics` evaluates corruption
states, measurement outputs, PCR values and quote outputs on one poset.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Union

from .system import AttestationSystem, Issue, PcrId, ValidationReport, signing_key
from .terms import RST, Nonce, Sig, Term, analyze, extend, format_term, seq_view, synthesizable, tuple_term


# -- labels -------------------------------------------------------------------


@dataclass(frozen=True)
class Meas:
    by: str
    target: str

    def __str__(self) -> str:
        return f"meas({self.by},{self.target})"


@dataclass(frozen=True)
class Corr:
    obj: str

    def __str__(self) -> str:
        return f"corr({self.obj})"


@dataclass(frozen=True)
class Rep:
    obj: str

    def __str__(self) -> str:
        return f"rep({self.obj})"


@dataclass(frozen=True)
class AttStart:
    nonce: Term

    def __str__(self) -> str:
        return f"att-start({format_term(self.nonce)})"


@dataclass(frozen=True)
class Ext:
    by: str
    value: Term
    pcr: PcrId

    def __str__(self) -> str:
        return f"ext({self.by},{format_term(self.value)},{self.pcr})"


@dataclass(frozen=True)
class Quote:
    input: Term
    pcrs: tuple[PcrId, ...]

    def __str__(self) -> str:
        return f"quote({format_term(self.input)},{','.join(map(str, self.pcrs))})"


Label = Union[Meas, Corr, Rep, AttStart, Ext, Quote]
ADVERSARY = (Corr, Rep)


def is_adversary(label: Label) -> bool:
    return isinstance(label, ADVERSARY)


def label_objects(label: Label) -> tuple[str, ...]:
    if isinstance(label, Meas):
        return (label.by, label.target)
    if isinstance(label, (Corr, Rep)):
        return (label.obj,)
    if isinstance(label, Ext):
        return (label.by,)
    return ()


def label_pcrs(label: Label) -> tuple[PcrId, ...]:
    if isinstance(label, Ext):
        return (label.pcr,)
    if isinstance(label, Quote):
        return label.pcrs
    return ()


def touched_objects(sys: AttestationSystem, label: Label) -> frozenset[str]:
    objs = set(label_objects(label))
    if isinstance(label, Meas):
        objs |= sys.context_of.get(label.by, frozenset())
    return frozenset(objs)


def touches_object(sys: AttestationSystem, label: Label, o: str) -> bool:
    return o in touched_objects(sys, label)


def touches_pcr(label: Label, p: PcrId) -> bool:
    return p in label_pcrs(label)


# -- posets -------------------------------------------------------------------


class PosetError(ValueError):
    pass


class NotAdversaryOrdered(PosetError):
    pass


class NotExtendOrdered(PosetError):
    pass


@dataclass(frozen=True, eq=False)
class EventPoset:
    """Events keyed by id, with ``below[e]`` the set of strict predecessors of ``e``."""

    labels: Mapping[str, Label]
    below: Mapping[str, frozenset[str]]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventPoset):
            return NotImplemented
        return dict(self.labels) == dict(other.labels) and dict(self.below) == dict(other.below)

    def __hash__(self) -> int:
        return hash((frozenset(self.labels.items()), frozenset(self.below.items())))

    @classmethod
    def build(cls, events: Iterable[tuple[str, Label]], order: Iterable[tuple[str, str]] = ()) -> "EventPoset":
        labels: dict[str, Label] = {}
        for eid, lab in events:
            if eid in labels:
                raise PosetError(f"duplicate event id {eid!r}")
            labels[eid] = lab
        preds: dict[str, set[str]] = {e: set() for e in labels}
        for a, b in order:
            if a not in labels or b not in labels:
                raise PosetError(f"order edge {a}->{b} names an unknown event")
            preds[b].add(a)
        below: dict[str, frozenset[str]] = {}
        state: dict[str, int] = {}

        def visit(e: str) -> frozenset[str]:
            if e in below:
                return below[e]
            if state.get(e) == 1:
                raise PosetError(f"order is cyclic through {e!r}")
            state[e] = 1
            acc: set[str] = set()
            for p in preds[e]:
                acc.add(p)
                acc |= visit(p)
            state[e] = 2
            below[e] = frozenset(acc)
            return below[e]

        for e in labels:
            visit(e)
        if any(e in below[e] for e in labels):
            raise PosetError("order is cyclic")
        return cls(labels=labels, below={e: below[e] for e in labels})

    @classmethod
    def chain(cls, events: Iterable[tuple[str, Label]]) -> "EventPoset":
        events = list(events)
        ids = [e for e, _ in events]
        return cls.build(events, zip(ids, ids[1:]))

    @classmethod
    def empty(cls) -> "EventPoset":
        return cls(labels={}, below={})

    # -- queries --

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, eid: str) -> bool:
        return eid in self.labels

    def precedes(self, a: str, b: str) -> bool:
        return a in self.below[b]

    def comparable(self, a: str, b: str) -> bool:
        return a == b or a in self.below[b] or b in self.below[a]

    def above(self, e: str) -> frozenset[str]:
        return frozenset(x for x in self.labels if e in self.below[x])

    def order_pairs(self) -> frozenset[tuple[str, str]]:
        return frozenset((a, b) for b, bs in self.below.items() for a in bs)

    def cover_edges(self) -> list[tuple[str, str]]:
        out = []
        for b in sorted(self.labels):
            for a in sorted(self.below[b]):
                if not any(a in self.below[c] for c in self.below[b]):
                    out.append((a, b))
        return out

    def topological_order(self) -> list[str]:
        """Deterministic topological sort; ties go to the smallest id."""
        placed: set[str] = set()
        out: list[str] = []
        remaining = sorted(self.labels)
        while remaining:
            for e in remaining:
                if self.below[e] <= placed:
                    break
            else:  # pragma: no cover - build() rejects cycles
                raise PosetError("cyclic order")
            out.append(e)
            placed.add(e)
            remaining.remove(e)
        return out

    def restrict(self, pred: Callable[[str, Label], bool]) -> "EventPoset":
        keep = {e: l for e, l in self.labels.items() if pred(e, l)}
        return EventPoset(labels=keep, below={e: self.below[e] & keep.keys() for e in keep})

    def with_order(self, pairs: Iterable[tuple[str, str]]) -> "EventPoset":
        """Same events, order generated by ``pairs``."""
        return EventPoset.build(self.labels.items(), pairs)

    def linear_extensions(self) -> Iterator[list[str]]:
        ids = sorted(self.labels)

        def rec(placed: frozenset[str], prefix: list[str]) -> Iterator[list[str]]:
            if len(prefix) == len(ids):
                yield list(prefix)
                return
            for e in ids:
                if e not in placed and self.below[e] <= placed:
                    prefix.append(e)
                    yield from rec(placed | {e}, prefix)
                    prefix.pop()

        yield from rec(frozenset(), [])

    def linearized(self, order: list[str]) -> "EventPoset":
        return EventPoset.chain((e, self.labels[e]) for e in order)

    def has_adversary_events(self) -> bool:
        return any(is_adversary(l) for l in self.labels.values())

    def events_of(self, kind: type) -> list[str]:
        return [e for e, l in self.labels.items() if isinstance(l, kind)]


def restrict(p: EventPoset, pred: Callable[[str, Label], bool]) -> EventPoset:
    return p.restrict(pred)


def touching(sys: AttestationSystem, o: str) -> Callable[[str, Label], bool]:
    return lambda _e, lab: touches_object(sys, lab, o)


def touching_pcr(pcr: PcrId) -> Callable[[str, Label], bool]:
    return lambda _e, lab: touches_pcr(lab, pcr)


def _maximal(p: EventPoset, xs: Iterable[str]) -> list[str]:
    xs = list(xs)
    return sorted(x for x in xs if not any(x in p.below[y] for y in xs))


# -- ordering disciplines -------------------------------------------------------


def adversary_order_violations(sys: AttestationSystem, p: EventPoset) -> list[tuple[str, str, str]]:
    """(object, adversary event, incomparable event) triples."""
    out = []
    touch = {e: touched_objects(sys, l) for e, l in p.labels.items()}
    for e, lab in sorted(p.labels.items()):
        if not is_adversary(lab):
            continue
        for o in sorted(touch[e]):
            for x in sorted(p.labels):
                if x != e and o in touch[x] and not p.comparable(e, x):
                    out.append((o, e, x))
    return out


def is_adversary_ordered(sys: AttestationSystem, p: EventPoset) -> bool:
    return not adversary_order_violations(sys, p)


def extend_order_violations(p: EventPoset) -> list[tuple[PcrId, str, str]]:
    out = []
    ids = sorted(p.labels)
    for i, a in enumerate(ids):
        pa = label_pcrs(p.labels[a])
        if not pa:
            continue
        for b in ids[i + 1:]:
            shared = set(pa) & set(label_pcrs(p.labels[b]))
            if not shared or p.comparable(a, b):
                continue
            if isinstance(p.labels[a], Quote) and isinstance(p.labels[b], Quote):
                continue
            out.extend((pcr, a, b) for pcr in sorted(shared))
    return out


def is_extend_ordered(p: EventPoset) -> bool:
    return not extend_order_violations(p)


# -- semantics --------------------------------------------------------------------


class CS(enum.Enum):
    UNDEFINED = "undefined"
    REGULAR = "regular"
    CORRUPT = "corrupt"


class MeasOutcome(enum.Enum):
    CLEAN = "clean"
    DETECTS = "detects"
    AVOIDS = "avoids"


class Semantics:
    """Evaluates one poset against one system, memoizing as it goes."""

    def __init__(self, sys: AttestationSystem, p: EventPoset):
        self.sys = sys
        self.p = p
        self._touch = {e: touched_objects(sys, l) for e, l in p.labels.items()}
        self._cs: dict[tuple[str, str], CS] = {}
        self._val: dict[tuple[str, PcrId], Term] = {}
        self._out: dict[str, Optional[Term]] = {}

    def touches(self, e: str, o: str) -> bool:
        return o in self._touch[e]

    def cs(self, e: str, o: str) -> CS:
        key = (e, o)
        if key in self._cs:
            return self._cs[key]
        lab = self.p.labels[e]
        if o not in self._touch[e]:
            res = CS.UNDEFINED
        elif isinstance(lab, Corr):
            res = CS.CORRUPT
        elif isinstance(lab, Rep):
            res = CS.REGULAR
        else:
            prior = [x for x in self.p.below[e] if is_adversary(self.p.labels[x]) and o in self._touch[x]]
            if not prior:
                res = CS.REGULAR
            else:
                top = _maximal(self.p, prior)
                if len(top) != 1:
                    raise NotAdversaryOrdered(
                        f"adversary events {top} before {e} on {o} have no unique maximum"
                    )
                res = CS.CORRUPT if isinstance(self.p.labels[top[0]], Corr) else CS.REGULAR
        self._cs[key] = res
        return res

    def outcome(self, e: str) -> MeasOutcome:
        lab = self.p.labels[e]
        if not isinstance(lab, Meas):
            raise TypeError(f"{e} is not a measurement event")
        target_bad = self.cs(e, lab.target) is CS.CORRUPT
        if not target_bad:
            return MeasOutcome.CLEAN
        honest = all(self.cs(e, o) is CS.REGULAR for o in self.sys.support(lab.by))
        return MeasOutcome.DETECTS if honest else MeasOutcome.AVOIDS

    def val(self, e: str, pcr: PcrId) -> Term:
        key = (e, pcr)
        if key in self._val:
            return self._val[key]
        lab = self.p.labels[e]
        if not touches_pcr(lab, pcr):
            raise ValueError(f"{e} does not touch {pcr}")
        prior = [
            x for x in self.p.below[e]
            if isinstance(self.p.labels[x], Ext) and self.p.labels[x].pcr == pcr
        ]
        if prior:
            top = _maximal(self.p, prior)
            if len(top) != 1:
                raise NotExtendOrdered(f"extends {top} before {e} on {pcr} have no unique maximum")
            prev = self.val(top[0], pcr)
        else:
            prev = RST
        res = extend(prev, lab.value) if isinstance(lab, Ext) else prev
        self._val[key] = res
        return res

    def recorder_chain(self, e: str, pcr: PcrId) -> list[str]:
        """Extend events whose values make up ``val(e, pcr)``, oldest first."""
        out = []
        lab = self.p.labels[e]
        cur: Optional[str] = e if isinstance(lab, Ext) else None
        if cur is None:
            prior = [x for x in self.p.below[e] if isinstance(self.p.labels[x], Ext) and self.p.labels[x].pcr == pcr]
            top = _maximal(self.p, prior)
            if len(top) > 1:
                raise NotExtendOrdered(f"extends {top} before {e} on {pcr} have no unique maximum")
            cur = top[0] if top else None
        while cur is not None:
            out.append(cur)
            prior = [x for x in self.p.below[cur] if isinstance(self.p.labels[x], Ext) and self.p.labels[x].pcr == pcr]
            top = _maximal(self.p, prior)
            if len(top) > 1:
                raise NotExtendOrdered(f"extends {top} before {cur} on {pcr} have no unique maximum")
            cur = top[0] if top else None
        out.reverse()
        return out

    def out(self, e: str) -> Optional[Term]:
        if e in self._out:
            return self._out[e]
        lab = self.p.labels[e]
        res: Optional[Term] = None
        if isinstance(lab, Meas):
            if self.outcome(e) is MeasOutcome.DETECTS:
                res = self.sys.first_bad(lab.target)
            else:
                res = self.sys.first_good(lab.target)
        elif isinstance(lab, AttStart):
            res = lab.nonce
        elif isinstance(lab, Quote):
            res = quote_term(lab.input, lab.pcrs, [self.val(e, p) for p in lab.pcrs])
        self._out[e] = res
        return res

    def quote_indicates_corruption(self, e: str) -> bool:
        lab = self.p.labels[e]
        return any(chain_has_bad(self.sys, self.val(e, p)) for p in lab.pcrs)


def quote_term(nonce: Term, pcrs: Iterable[PcrId], values: Iterable[Term]) -> Term:
    """Signed (nonce, pcr names, pcr values) under the key of the PCRs' TPM."""
    pcrs = list(pcrs)
    body = tuple_term([nonce, tuple_term([p.as_term() for p in pcrs]), tuple_term(list(values))])
    return Sig(body, signing_key(pcrs[0].tpm))


_NO_SYSTEM = AttestationSystem.build([], "", [])  # PCR values never consult the system


def chain_has_bad(sys: AttestationSystem, chain: Term) -> bool:
    view = seq_view(chain)
    return view is not None and any(sys.is_bad(v) for v in view)


# -- module-level operations ------------------------------------------------------


def corruption_state(sys: AttestationSystem, p: EventPoset, e: str, o: str) -> CS:
    if not is_adversary_ordered(sys, p):
        raise NotAdversaryOrdered("corruption state needs an adversary-ordered poset")
    return Semantics(sys, p).cs(e, o)


def measurement_output(sys: AttestationSystem, p: EventPoset, e: str) -> tuple[Term, MeasOutcome]:
    if not is_adversary_ordered(sys, p):
        raise NotAdversaryOrdered("measurement output needs an adversary-ordered poset")
    sem = Semantics(sys, p)
    return sem.out(e), sem.outcome(e)


def pcr_value(p: EventPoset, e: str, pcr: PcrId) -> Term:
    if not is_extend_ordered(p):
        raise NotExtendOrdered("PCR value needs an extend-ordered poset")
    return Semantics(_NO_SYSTEM, p).val(e, pcr)


def quote_output(sys: AttestationSystem, p: EventPoset, e: str) -> tuple[Term, bool]:
    """The signed quote and whether it indicates a corruption."""
    if not is_extend_ordered(p):
        raise NotExtendOrdered("quote output needs an extend-ordered poset")
    sem = Semantics(sys, p)
    if not isinstance(p.labels[e], Quote):
        raise TypeError(f"{e} is not a quote event")
    return sem.out(e), sem.quote_indicates_corruption(e)


def detected_corruptions(sys: AttestationSystem, p: EventPoset) -> set[str]:
    sem = Semantics(sys, p)
    return {e for e in p.events_of(Meas) if sem.outcome(e) is MeasOutcome.DETECTS}


def check_labels(sys: AttestationSystem, p: EventPoset, rep: ValidationReport) -> None:
    nonces: dict[Term, str] = {}
    for e, lab in sorted(p.labels.items()):
        if isinstance(lab, Meas):
            if (lab.by, lab.target) not in sys.measures:
                rep.add("label-meas", f"{e}: {lab} but M({lab.by},{lab.target}) does not hold", e)
        elif isinstance(lab, (Corr, Rep)):
            if lab.obj not in sys.objects:
                rep.add("label-object", f"{e}: unknown object {lab.obj!r}", e)
            elif lab.obj == sys.rtm:
                rep.add("label-rtm", f"{e}: the rtm cannot be corrupted or repaired", e)
        elif isinstance(lab, AttStart):
            if not isinstance(lab.nonce, Nonce):
                rep.add("label-nonce", f"{e}: att-start argument must be a nonce", e)
            elif lab.nonce in nonces:
                rep.add("label-nonce", f"{e}: nonce reused from {nonces[lab.nonce]}", e)
            else:
                nonces[lab.nonce] = e
        elif isinstance(lab, Ext):
            if (lab.by, lab.pcr) not in sys.access:
                rep.add("label-ext", f"{e}: {lab.by} may not extend {lab.pcr}", e)
        elif isinstance(lab, Quote):
            if not lab.pcrs:
                rep.add("label-quote", f"{e}: quote over no PCRs", e)
            elif len({q.tpm for q in lab.pcrs}) != 1:
                rep.add("label-quote", f"{e}: quote PCRs span several TPMs", e)
            for q in lab.pcrs:
                if q not in sys.pcrs:
                    rep.add("label-quote", f"{e}: unknown PCR {q}", e)


def input_of(lab: Label) -> Optional[Term]:
    if isinstance(lab, Ext):
        return lab.value
    if isinstance(lab, Quote):
        return lab.input
    return None


def validate_execution(sys: AttestationSystem, p: EventPoset) -> ValidationReport:
    rep = ValidationReport()
    check_labels(sys, p, rep)
    for o, a, x in adversary_order_violations(sys, p):
        rep.add("not-adversary-ordered", f"adversary event {a} is incomparable to {x} on {o}", a)
    ext_bad = extend_order_violations(p)
    for pcr, a, b in ext_bad:
        rep.add("not-extend-ordered", f"{a} and {b} are incomparable on {pcr}", a)
    if rep.issues:
        return rep
    sem = Semantics(sys, p)
    for e in p.topological_order():
        goal = input_of(p.labels[e])
        if goal is None:
            continue
        known = analyze(t for x in p.below[e] if (t := sem.out(x)) is not None)
        if not synthesizable(known, goal):
            rep.add("input-underivable", f"{e}: input {format_term(goal)} is not derivable from prior outputs", e)
    return rep


# -- admission ------------------------------------------------------------------


def admits(spec: EventPoset, execution: EventPoset) -> Optional[dict[str, str]]:
    """Injective, label- and order-preserving map from ``spec`` into ``execution``."""
    if spec.has_adversary_events():
        raise ValueError("a specification may not contain adversary events")
    order = spec.topological_order()
    by_label: dict[Label, list[str]] = {}
    for x in sorted(execution.labels):
        by_label.setdefault(execution.labels[x], []).append(x)
    alpha: dict[str, str] = {}
    used: set[str] = set()

    def rec(i: int) -> bool:
        if i == len(order):
            return True
        s = order[i]
        for cand in by_label.get(spec.labels[s], ()):
            if cand in used:
                continue
            if not all(alpha[b] in execution.below[cand] for b in spec.below[s]):
                continue
            alpha[s] = cand
            used.add(cand)
            if rec(i + 1):
                return True
            del alpha[s]
            used.discard(cand)
        return False

    return dict(alpha) if rec(0) else None


def all_embeddings(spec: EventPoset, execution: EventPoset) -> Iterator[dict[str, str]]:
    """Brute force over injective maps; for cross-checking :func:`admits`."""
    s_ids = sorted(spec.labels)
    for image in itertools.permutations(sorted(execution.labels), len(s_ids)):
        alpha = dict(zip(s_ids, image))
        if any(spec.labels[s] != execution.labels[alpha[s]] for s in s_ids):
            continue
        if all(alpha[a] in execution.below[alpha[b]] for b in s_ids for a in spec.below[b]):
            yield alpha
