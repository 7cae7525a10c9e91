"""Attestation systems: objects, the measures/context relations and PCR access."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Optional

from .terms import Key, Pub, Term

Rel = frozenset[tuple[str, str]]


@dataclass(frozen=True, order=True)
class PcrId:
    tpm: str
    register: str

    def __str__(self) -> str:
        return f"{self.tpm}.{self.register}"

    @classmethod
    def parse(cls, text: str) -> "PcrId":
        tpm, sep, reg = text.partition(".")
        if not sep or not tpm or not reg:
            raise ValueError(f"PCR must be written <tpm>.<register>, got {text!r}")
        return cls(tpm, reg)

    def as_term(self) -> Term:
        return Pub(str(self))


def signing_key(tpm: str) -> Key:
    return Key(f"sk_{tpm}")


def good_atom(o: str) -> Pub:
    return Pub(f"g:{o}")


def bad_atom(o: str) -> Pub:
    return Pub(f"b:{o}")


def relation_closure(rel: Iterable[tuple[str, str]]) -> Rel:
    """Transitive closure of a binary relation."""
    succ: dict[str, set[str]] = {}
    for a, b in rel:
        succ.setdefault(a, set()).add(b)
    out: set[tuple[str, str]] = set()
    for a in succ:
        seen: set[str] = set()
        stack = list(succ[a])
        while stack:
            b = stack.pop()
            if b in seen:
                continue
            seen.add(b)
            stack.extend(succ.get(b, ()))
        out.update((a, b) for b in seen)
    return frozenset(out)


def _cyclic(rel: Rel) -> bool:
    return any(a == b for a, b in relation_closure(rel))


@dataclass
class Issue:
    code: str
    message: str
    where: Optional[str] = None

    def to_dict(self) -> dict:
        d = {"code": self.code, "message": self.message}
        if self.where is not None:
            d["where"] = self.where
        return d


@dataclass
class ValidationReport:
    issues: list[Issue] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues

    def add(self, code: str, message: str, where: Optional[str] = None) -> None:
        self.issues.append(Issue(code, message, where))

    def codes(self) -> set[str]:
        return {i.code for i in self.issues}

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "issues": [i.to_dict() for i in self.issues],
            "notes": list(self.notes),
        }


@dataclass(frozen=True, eq=False)
class AttestationSystem:
    """Objects with measures (M) and context (C) relations, PCRs and access L.

    ``context`` is stored transitively closed.  ``good``/``bad`` give the
    appraiser's partition of each object's measurement values.
    """

    objects: frozenset[str]
    rtm: str
    measures: Rel
    context: Rel
    pcrs: frozenset[PcrId] = frozenset()
    access: frozenset[tuple[str, PcrId]] = frozenset()
    good: Mapping[str, frozenset[Term]] = field(default_factory=dict)
    bad: Mapping[str, frozenset[Term]] = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    @classmethod
    def build(
        cls,
        objects: Iterable[str],
        rtm: str,
        measures: Iterable[tuple[str, str]],
        context: Iterable[tuple[str, str]] = (),
        pcrs: Iterable[PcrId] = (),
        access: Iterable[tuple[str, PcrId]] = (),
        mv: Optional[Mapping[str, tuple[Iterable[Term], Iterable[Term]]]] = None,
    ) -> "AttestationSystem":
        objects = frozenset(objects)
        context = frozenset(context)
        closed = relation_closure(context)
        notes = []
        if closed != context:
            extra = sorted(closed - context)
            notes.append("context relation closed transitively; added " + ", ".join(f"{a}->{b}" for a, b in extra))
        mv = dict(mv or {})
        good: dict[str, frozenset[Term]] = {}
        bad: dict[str, frozenset[Term]] = {}
        for o in sorted(objects):
            if o in mv:
                g, b = mv[o]
                good[o], bad[o] = frozenset(g), frozenset(b)
            else:
                good[o], bad[o] = frozenset({good_atom(o)}), frozenset({bad_atom(o)})
        return cls(
            objects=objects,
            rtm=rtm,
            measures=frozenset(measures),
            context=closed,
            pcrs=frozenset(pcrs),
            access=frozenset(access),
            good=good,
            bad=bad,
            notes=tuple(notes),
        )

    # -- derived lookups ----------------------------------------------------

    @cached_property
    def measurers(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {o: set() for o in self.objects}
        for a, b in self.measures:
            out.setdefault(b, set()).add(a)
        return {o: frozenset(s) for o, s in out.items()}

    @cached_property
    def context_of(self) -> dict[str, frozenset[str]]:
        out: dict[str, set[str]] = {o: set() for o in self.objects}
        for a, b in self.context:
            out.setdefault(b, set()).add(a)
        return {o: frozenset(s) for o, s in out.items()}

    @cached_property
    def pcr_owner(self) -> dict[PcrId, frozenset[str]]:
        out: dict[PcrId, set[str]] = {}
        for o, p in self.access:
            out.setdefault(p, set()).add(o)
        return {p: frozenset(s) for p, s in out.items()}

    @cached_property
    def value_owner(self) -> dict[Term, str]:
        """Map each measurement value to the object it describes."""
        out: dict[Term, str] = {}
        for o in sorted(self.objects):
            for v in self.good.get(o, ()) | self.bad.get(o, ()):
                out.setdefault(v, o)
        return out

    @cached_property
    def tpms(self) -> frozenset[str]:
        return frozenset(p.tpm for p in self.pcrs)

    def support(self, measurer: str) -> frozenset[str]:
        """The measurer together with its context."""
        return frozenset({measurer}) | self.context_of.get(measurer, frozenset())

    def is_good(self, v: Term) -> bool:
        o = self.value_owner.get(v)
        return o is not None and v in self.good[o]

    def is_bad(self, v: Term) -> bool:
        o = self.value_owner.get(v)
        return o is not None and v in self.bad[o]

    def first_good(self, o: str) -> Term:
        return min(self.good[o], key=repr)

    def first_bad(self, o: str) -> Term:
        return min(self.bad[o], key=repr)

    def pcr_for_term(self, t: Term) -> Optional[PcrId]:
        for p in self.pcrs:
            if p.as_term() == t:
                return p
        return None

    def tpm_for_key(self, k: Term) -> Optional[str]:
        for t in sorted(self.tpms):
            if signing_key(t) == k:
                return t
        return None


# -- dependency sets ----------------------------------------------------------


def d1_of_set(sys: AttestationSystem, objs: Iterable[str]) -> frozenset[str]:
    out: set[str] = set()
    for o in objs:
        ms = sys.measurers.get(o, frozenset())
        out |= ms
        for m in ms:
            out |= sys.context_of.get(m, frozenset())
    return frozenset(out)


def dependency_set(sys: AttestationSystem, o: str, i: int) -> frozenset[str]:
    """Layered dependencies: D1(o) = measurers of o and their context, D(i+1) = D1(D(i))."""
    if o not in sys.objects:
        raise KeyError(f"unknown object {o!r}")
    if i < 1:
        raise ValueError("depth must be a positive integer")
    cur: frozenset[str] = frozenset({o})
    for _ in range(i):
        cur = d1_of_set(sys, cur)
    return cur


# -- validation ---------------------------------------------------------------


def validate_system(sys: AttestationSystem) -> ValidationReport:
    rep = ValidationReport(notes=list(sys.notes))
    objs = sys.objects
    if sys.rtm not in objs:
        rep.add("rtm-unknown", f"rtm {sys.rtm!r} is not an object")
    for name, rel in (("M", sys.measures), ("C", sys.context)):
        for a, b in sorted(rel):
            if a not in objs or b not in objs:
                rep.add("unknown-object", f"{name} edge {a}->{b} names an unknown object", f"{name}:{a}->{b}")

    closure = relation_closure(sys.measures)
    for o in sorted(objs - {sys.rtm}):
        if (sys.rtm, o) not in closure:
            rep.add("not-rooted", f"{o} is not reachable from {sys.rtm} through M", o)
    if _cyclic(sys.measures):
        rep.add("m-cyclic", "transitive closure of M is not irreflexive")
    for a, b in sorted(sys.measures):
        if b == sys.rtm:
            rep.add("m-into-rtm", f"M edge {a}->{b} targets the rtm", f"M:{a}->{b}")
    if relation_closure(sys.context) != sys.context:
        rep.add("c-not-transitive", "context relation is not transitive")
    if _cyclic(sys.context):
        rep.add("c-cyclic", "context relation is cyclic")
    if _cyclic(sys.measures | sys.context):
        rep.add("mc-cyclic", "M union C is cyclic")

    tpms_of: dict[str, set[str]] = {}
    for o, p in sorted(sys.access):
        if o not in objs:
            rep.add("unknown-object", f"L entry names unknown object {o!r}", f"L:{o}")
        if p not in sys.pcrs:
            rep.add("unknown-pcr", f"L entry names unknown PCR {p}", f"L:{o}->{p}")
        tpms_of.setdefault(o, set()).add(p.tpm)
    for o, ts in sorted(tpms_of.items()):
        if len(ts) > 1:
            rep.add("multi-tpm", f"{o} has PCRs on several TPMs: {sorted(ts)}", o)
    for p, owners in sorted(sys.pcr_owner.items()):
        if len(owners) > 1:
            rep.add("l-not-injective", f"PCR {p} is shared by {sorted(owners)}", str(p))

    seen: dict[Term, str] = {}
    for o in sorted(objs):
        g, b = sys.good.get(o, frozenset()), sys.bad.get(o, frozenset())
        if not g or not b:
            rep.add("mv-empty", f"{o} needs nonempty good and bad value sets", o)
        if g & b:
            rep.add("mv-overlap", f"good and bad values of {o} overlap", o)
        for v in g | b:
            if not isinstance(v, Pub):
                rep.add("mv-not-public", f"measurement value of {o} is not a public atom", o)
            if v in seen and seen[v] != o:
                rep.add("mv-shared", f"value {v} belongs to both {seen[v]} and {o}", o)
            seen.setdefault(v, o)
    for p in sys.pcrs:
        if p.as_term() in seen:
            rep.add("mv-shared", f"PCR name {p} collides with a measurement value", str(p))
    return rep
