"""Bounded exhaustive exploration of executions.

An execution in the exploration universe is a total order of the base
events (a specification or a fixed extend/quote scaffold) with up to
``max_adversary_events`` corruption or repair events inserted.  Total
orders suffice because corruption states and PCR values are invariant
under linearization.

Two routes cover the same universe:

* :func:`enumerate_executions` yields each execution as an
  :class:`EventPoset`; the poset-level checkers then judge it.  This is
  simple and slow, and serves as the reference.
* :class:`Explorer` walks prefixes with a memoized search keyed by a
  summary of everything the verdict can still depend on (placed events,
  current and past corruption, last measurement outputs, staleness), and
  counts how many completions fall into each outcome class.  Completions
  of a prefix whose outcome is already settled are counted
  combinatorially.

Both routes visit executions in the same order: partitioned by the
position of the first adversary event (none first, then 0, 1, ...), and
depth-first inside a partition with base events before adversary events.
"""

from __future__ import annotations

import random
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

from .bundling import (
    Assumption,
    QuoteBundle,
    VerdictKind,
    bundle_indicates_corruption,
    bundle_of,
    check_joint_strategy,
    core_of,
    deep_objects,
    extract_specification,
    meas_order_only,
    recent_objects,
)
from .events import (
    AttStart,
    Corr,
    EventPoset,
    Ext,
    Label,
    Meas,
    MeasOutcome,
    Quote,
    Rep,
    Semantics,
    admits,
    is_adversary,
    is_extend_ordered,
    validate_execution,
)
from .measurement import find_witnesses, is_well_supported, measures_bottom_up
from .system import AttestationSystem, dependency_set

RECENT_OR_DEEP = "recent-or-deep"
JOINT = "joint-strategy"
RELAX_FLAGS = ("assumption2", "assumption3", "well-supported")


class BudgetExceeded(RuntimeError):
    def __init__(self, count: int, limit: int):
        super().__init__(f"exploration needs {count} executions, over the limit of {limit}")
        self.count = count
        self.limit = limit


@dataclass(frozen=True)
class ExplorationBudget:
    max_adversary_events: int = 2
    objects: Optional[frozenset[str]] = None
    include_repairs: bool = True
    max_executions: Optional[int] = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_adversary_events < 0:
            raise ValueError("max_adversary_events must be non-negative")
        if self.max_executions is not None and self.max_executions < 1:
            raise ValueError("max_executions must be positive")
        if self.objects is not None:
            object.__setattr__(self, "objects", frozenset(self.objects))

    def to_dict(self) -> dict:
        return {
            "max_adversary_events": self.max_adversary_events,
            "objects": None if self.objects is None else sorted(self.objects),
            "include_repairs": self.include_repairs,
            "max_executions": self.max_executions,
            "seed": self.seed,
        }


def adversary_labels(sys: AttestationSystem, budget: ExplorationBudget) -> list[Label]:
    objs = sorted((budget.objects if budget.objects is not None else sys.objects) - {sys.rtm})
    unknown = [o for o in objs if o not in sys.objects]
    if unknown:
        raise ValueError(f"unknown objects in whitelist: {unknown}")
    labels: list[Label] = [Corr(o) for o in objs]
    if budget.include_repairs:
        labels += [Rep(o) for o in objs]
    if budget.seed:
        random.Random(budget.seed).shuffle(labels)
    return labels


def base_order(base: EventPoset, budget: ExplorationBudget) -> list[str]:
    ids = list(base.labels)
    if budget.seed:
        random.Random(budget.seed + 1).shuffle(ids)
    return ids


def partitions(base: EventPoset, budget: ExplorationBudget, n_adv: int) -> list[Optional[int]]:
    """None (no adversary event), then each position of the first adversary event."""
    if budget.max_adversary_events == 0 or n_adv == 0:
        return [None]
    return [None] + list(range(len(base) + 1))


def _adv_prefix(base: EventPoset) -> str:
    prefix = "adv"
    while any(e.startswith(prefix) for e in base.labels):
        prefix += "_"
    return prefix


def sequence_to_poset(base: EventPoset, seq: Sequence[object]) -> EventPoset:
    """Chain from a sequence of base ids (str) and adversary labels."""
    prefix = _adv_prefix(base)
    events = []
    k = 0
    for item in seq:
        if isinstance(item, str):
            events.append((item, base.labels[item]))
        else:
            k += 1
            events.append((f"{prefix}{k}", item))
    return EventPoset.chain(events)


def _check_base(base: EventPoset) -> None:
    if base.has_adversary_events():
        raise ValueError("the base of an exploration may not contain adversary events")


# -- reference route ----------------------------------------------------------------------


class ExecutionStream:
    """Iterator over enumerated executions; counts skipped invalid ones."""

    def __init__(self, sys: AttestationSystem, base: EventPoset, budget: ExplorationBudget):
        _check_base(base)
        self.sys = sys
        self.base = base
        self.budget = budget
        self.yielded = 0
        self.skipped_invalid = 0

    def sequences(self) -> Iterator[list[object]]:
        ids = base_order(self.base, self.budget)
        adv = adversary_labels(self.sys, self.budget)
        n = len(ids)
        k_max = self.budget.max_adversary_events
        below = self.base.below

        def rec(placed: set[str], seq: list[object], used: int, first: Optional[int]) -> Iterator[list[object]]:
            count = len(placed)
            if first is not None and first >= 0 and count == first:
                for lab in adv:
                    seq.append(lab)
                    yield from rec(placed, seq, used + 1, -1)
                    seq.pop()
                return
            if count == n:
                yield list(seq)
            for e in ids:
                if e not in placed and below[e] <= placed:
                    placed.add(e)
                    seq.append(e)
                    yield from rec(placed, seq, used, first)
                    seq.pop()
                    placed.discard(e)
            if first == -1 and used < k_max:
                for lab in adv:
                    seq.append(lab)
                    yield from rec(placed, seq, used + 1, first)
                    seq.pop()

        for part in partitions(self.base, self.budget, len(adv)):
            yield from rec(set(), [], 0, part)

    def __iter__(self) -> Iterator[EventPoset]:
        cap = self.budget.max_executions
        for seq in self.sequences():
            p = sequence_to_poset(self.base, seq)
            if not validate_execution(self.sys, p).ok:
                self.skipped_invalid += 1
                continue
            if cap is not None and self.yielded >= cap:
                raise BudgetExceeded(self.yielded + 1, cap)
            self.yielded += 1
            yield p


def enumerate_executions(sys: AttestationSystem, base: EventPoset, budget: ExplorationBudget) -> ExecutionStream:
    return ExecutionStream(sys, base, budget)


class Final(tuple):
    """An outcome that no longer depends on earlier per-event records."""


def combine(record: Optional[tuple], sig: tuple) -> tuple:
    if isinstance(sig, Final) or record is None:
        return sig
    return (record,) + sig


def rod_signature(sys: AttestationSystem, p: EventPoset) -> tuple:
    """Outcome of one execution for the recent-or-deep check, via poset semantics."""
    sem = Semantics(sys, p)
    order = p.topological_order()
    meas = [e for e in order if isinstance(p.labels[e], Meas)]
    if any(sem.outcome(e) is MeasOutcome.DETECTS for e in meas):
        return Final(("detected",))
    out = []
    for e in meas:
        if sem.outcome(e) is not MeasOutcome.AVOIDS:
            continue
        v = find_witnesses(sys, p, e)
        lab = p.labels[e]
        out.append((e, lab.target, is_well_supported(sys, p, e), lab.by == sys.rtm,
                    v.witness_classes, v.since_nonce_classes))
    return tuple(out)


@dataclass(frozen=True)
class JointSetup:
    bundle: QuoteBundle
    target: Optional[EventPoset]
    target_meas: Optional[EventPoset]
    relax: frozenset[str]
    reason: str = ""


def joint_setup(
    sys: AttestationSystem,
    base: EventPoset,
    relax: Iterable[str] = (),
    keep_nonce_order: bool = True,
    reference: Optional[EventPoset] = None,
) -> JointSetup:
    """Fix the bundle a scaffold produces and the specification executions must admit."""
    relax = frozenset(relax)
    if not is_extend_ordered(base):
        raise ValueError("scaffold must be extend-ordered so that its bundle is fixed")
    rep = validate_execution(sys, base)
    if not rep.ok:
        raise ValueError("scaffold is not a valid execution: " + "; ".join(i.message for i in rep.issues))
    bundle = bundle_of(sys, base)
    if bundle_indicates_corruption(sys, bundle):
        return JointSetup(bundle, None, None, relax, "bundle indicates a corruption")
    spec = extract_specification(sys, bundle).spec
    if reference is None:
        if not measures_bottom_up(sys, spec):
            return JointSetup(bundle, None, None, relax, "S(bundle) does not measure bottom-up")
        target = core_of(sys, spec, keep_nonce_order)
        target_meas = core_of(sys, spec, keep_nonce_order=False)
    else:
        target_meas = meas_order_only(reference)
        target = reference if keep_nonce_order else target_meas
    return JointSetup(bundle, target, target_meas, relax)


def joint_signature(
    sys: AttestationSystem, p: EventPoset, setup: JointSetup, keep_nonce_order: bool = True,
    reference: Optional[EventPoset] = None,
) -> tuple:
    v = check_joint_strategy(
        sys, p, setup.bundle, keep_nonce_order=keep_nonce_order, relax=setup.relax, reference=reference
    )
    if v.kind is VerdictKind.ASSUMPTIONS_VIOLATED:
        return Final(("assumptions-violated",))
    if v.kind is VerdictKind.PRECONDITION:
        return Final(("precondition-failed",))
    relaxed = tuple(sorted({x.assumption.value for x in v.relaxed_violations}))
    return Final((v.kind.value, relaxed, admits(setup.target, p) is not None,
                  admits(setup.target_meas, p) is not None))


def signatures_by_enumeration(
    sys: AttestationSystem,
    base: EventPoset,
    budget: ExplorationBudget,
    theorem: str,
    *,
    relax: Iterable[str] = (),
    keep_nonce_order: bool = True,
    reference: Optional[EventPoset] = None,
) -> Counter:
    """Outcome counts over the whole universe, computed one execution at a time."""
    out: Counter = Counter()
    setup = joint_setup(sys, base, relax, keep_nonce_order, reference) if theorem == JOINT else None
    for p in enumerate_executions(sys, base, budget):
        if theorem == JOINT:
            out[joint_signature(sys, p, setup, keep_nonce_order, reference)] += 1
        else:
            out[rod_signature(sys, p)] += 1
    return out


# -- memoized route ---------------------------------------------------------------------------


class _RodMode:
    """State: (corrupt, ever, recent, recent since nonce, measured, measured since nonce, nonce seen)."""

    def __init__(self, sys: AttestationSystem, bit: dict[str, int]):
        self.sys = sys
        self.bit = bit
        self.rtm = sys.rtm
        self.d1 = {o: self._mask(dependency_set(sys, o, 1)) for o in sys.objects}
        self.d2 = {o: self._mask(dependency_set(sys, o, 2)) for o in sys.objects}
        self.support = {o: self._mask(sys.support(o)) for o in sys.objects}
        self.names = {b: o for o, b in bit.items()}

    def _mask(self, objs: Iterable[str]) -> int:
        m = 0
        for o in objs:
            m |= self.bit[o]
        return m

    def _classes(self, prefix: str, mask: int) -> frozenset[str]:
        return frozenset(f"{prefix}-{self.names[b]}" for b in self.names if mask & b)

    def initial(self) -> tuple:
        return (0, 0, 0, 0, 0, 0, False)

    def step(self, st: tuple, eid: Optional[str], lab: Label):
        corrupt, ever, recent, recent_n, measured, measured_n, nonce = st
        if isinstance(lab, Corr):
            b = self.bit[lab.obj]
            return (corrupt | b, ever | b, recent | (b & measured), recent_n | (b & measured_n),
                    measured, measured_n, nonce), None
        if isinstance(lab, Rep):
            return (corrupt & ~self.bit[lab.obj], ever, recent, recent_n, measured, measured_n, nonce), None
        if isinstance(lab, AttStart):
            return (corrupt, ever, recent, recent_n, measured, measured_n, True), None
        if not isinstance(lab, Meas):
            return st, None
        record = None
        tb = self.bit[lab.target]
        if corrupt & tb:
            if not corrupt & self.support[lab.by]:
                return Final(("detected",)), None
            d1 = self.d1[lab.target]
            supported = lab.by == self.rtm or not (d1 & ~measured)
            classes = self._classes("recent", recent & d1) | self._classes("deep", ever & self.d2[lab.target])
            record = (eid, lab.target, supported, lab.by == self.rtm, classes, self._classes("recent", recent_n & d1))
        measured |= tb
        if nonce:
            measured_n |= tb
        return (corrupt, ever, recent, recent_n, measured, measured_n, nonce), record

    def finish(self, st: tuple) -> tuple:
        return ()


class _JointMode:
    """State: (corrupt, ever, recent, measured, last outputs, stale pairs, target broken,
    meas-only target broken, relaxed violations)."""

    def __init__(self, sys: AttestationSystem, bit: dict[str, int], base_ids: list[str],
                 base: EventPoset, setup: JointSetup):
        self.sys = sys
        self.bit = bit
        self.setup = setup
        self.support = {o: self._mask(sys.support(o)) for o in sys.objects}
        self.deep = self._mask(deep_objects(sys))
        self.recent = self._mask(recent_objects(sys))
        pairs: list[tuple[str, str]] = []
        for e in base_ids:
            lab = base.labels[e]
            if isinstance(lab, Ext) and lab.value in sys.value_owner:
                pair = (lab.by, sys.value_owner[lab.value])
                if pair not in pairs:
                    pairs.append(pair)
        self.pairs = {p: i for i, p in enumerate(pairs)}
        # pairs made stale by measuring each object
        self.stale_by = {
            o: sum(1 << i for (x, t), i in self.pairs.items() if o in dependency_set(sys, t, 1))
            for o in sys.objects
        }
        self.relax_bits = {a: 1 << i for i, a in enumerate(("assumption2", "assumption3"))}
        self.possible, self.need = self._embedding(base_ids, base, setup.target)
        self.possible_m, self.need_m = self._embedding(base_ids, base, setup.target_meas)

    def _mask(self, objs: Iterable[str]) -> int:
        m = 0
        for o in objs:
            m |= self.bit[o]
        return m

    @staticmethod
    def _embedding(base_ids: list[str], base: EventPoset, target: Optional[EventPoset]):
        """Per base event, the base events that must already be placed for the forced map."""
        if target is None:
            return False, {}
        where: dict[Label, list[str]] = {}
        for e in base_ids:
            where.setdefault(base.labels[e], []).append(e)
        image: dict[str, str] = {}
        for s, lab in target.labels.items():
            hits = where.get(lab, [])
            if not hits:
                return False, {}
            if len(hits) > 1:
                raise NotImplementedError("target labels must match exactly one scaffold event")
            image[s] = hits[0]
        need = {image[s]: frozenset(image[x] for x in target.below[s]) for s in target.labels}
        return True, need

    def initial(self) -> tuple:
        return (0, 0, 0, 0, (None,) * len(self.pairs), 0, False, False, 0)

    def _violation(self, which: str, relaxed: int):
        if which in self.setup.relax:
            return relaxed | self.relax_bits[which]
        return None

    def step(self, st: tuple, eid: Optional[str], lab: Label, placed: frozenset[str] = frozenset()):
        corrupt, ever, recent, measured, last, stale, broken, broken_m, relaxed = st
        if isinstance(lab, Corr):
            b = self.bit[lab.obj]
            return (corrupt | b, ever | b, recent | (b & measured), measured, last, stale,
                    broken, broken_m, relaxed), None
        if isinstance(lab, Rep):
            return (corrupt & ~self.bit[lab.obj], ever, recent, measured, last, stale,
                    broken, broken_m, relaxed), None
        if eid in self.need and not self.need[eid] <= placed:
            broken = True
        if eid in self.need_m and not self.need_m[eid] <= placed:
            broken_m = True
        if isinstance(lab, Meas):
            tb = self.bit[lab.target]
            detects = bool(corrupt & tb) and not corrupt & self.support[lab.by]
            k = self.pairs.get((lab.by, lab.target))
            stale |= self.stale_by[lab.target]
            if k is not None:
                out = self.sys.first_bad(lab.target) if detects else self.sys.first_good(lab.target)
                last = last[:k] + (out,) + last[k + 1:]
                stale &= ~(1 << k)
            measured |= tb
        elif isinstance(lab, Ext) and lab.value in self.sys.value_owner:
            k = self.pairs[(lab.by, self.sys.value_owner[lab.value])]
            if not corrupt & self.bit[lab.by]:
                if last[k] != lab.value:
                    relaxed = self._violation("assumption2", relaxed)
                    if relaxed is None:
                        return Final(("assumptions-violated",)), None
                if stale & (1 << k):
                    relaxed = self._violation("assumption3", relaxed)
                    if relaxed is None:
                        return Final(("assumptions-violated",)), None
        return (corrupt, ever, recent, measured, last, stale, broken, broken_m, relaxed), None

    def finish(self, st: tuple) -> tuple:
        corrupt, ever, recent, measured, last, stale, broken, broken_m, relaxed = st
        ok = self.possible and not broken
        if ok:
            kind = VerdictKind.ADMITS_CORE.value
        elif ever & self.deep:
            kind = VerdictKind.DEEP.value
        elif recent & self.recent:
            kind = VerdictKind.RECENT.value
        else:
            kind = VerdictKind.THEOREM_FAILURE.value
        names = tuple(a for a in ("assumption2", "assumption3") if relaxed & self.relax_bits[a])
        return Final((kind, names, ok, self.possible_m and not broken_m))


@dataclass
class _Job:
    sys: AttestationSystem
    base: EventPoset
    budget: ExplorationBudget
    theorem: str
    setup: Optional[JointSetup]
    predicates: tuple[str, ...]
    relax: frozenset[str] = frozenset()


class Explorer:
    """Memoized exploration of one (system, base, budget) universe."""

    def __init__(self, sys: AttestationSystem, base: EventPoset, budget: ExplorationBudget,
                 theorem: str, setup: Optional[JointSetup] = None):
        _check_base(base)
        self.sys = sys
        self.base = base
        self.budget = budget
        self.theorem = theorem
        self.ids = base_order(base, budget)
        self.n = len(self.ids)
        self.full = (1 << self.n) - 1
        pos = {e: i for i, e in enumerate(self.ids)}
        self.pred = [sum(1 << pos[x] for x in base.below[e]) for e in self.ids]
        self.labels = [base.labels[e] for e in self.ids]
        self.adv = adversary_labels(sys, budget)
        self.k_max = budget.max_adversary_events
        bit = {o: 1 << i for i, o in enumerate(sorted(sys.objects))}
        if theorem == JOINT:
            if setup is None:
                raise ValueError("joint exploration needs a setup")
            self.mode = _JointMode(sys, bit, self.ids, base, setup)
            self._joint = True
        else:
            self.mode = _RodMode(sys, bit)
            self._joint = False
        self.memo: dict = {}
        self.count_memo: dict = {}

    # moves in depth-first order: ("end",), ("base", i), ("adv", j)
    def _moves(self, mask: int, used: int, first: Optional[int]):
        placed = bin(mask).count("1")
        if first is not None and first >= 0:
            if placed == first:
                return [("adv", j) for j in range(len(self.adv))]
            out = []
        else:
            out = [("end",)] if mask == self.full else []
        out += [("base", i) for i in range(self.n) if not mask >> i & 1 and self.pred[i] & ~mask == 0]
        if first == -1 and used < self.k_max:
            out += [("adv", j) for j in range(len(self.adv))]
        return out

    @staticmethod
    def _after(move, mask: int, used: int, first: Optional[int]):
        if move[0] == "base":
            return mask | 1 << move[1], used, first
        return mask, used + 1, -1

    def completions(self, mask: int, used: int, first: Optional[int]) -> int:
        key = (mask, used, first)
        hit = self.count_memo.get(key)
        if hit is not None:
            return hit
        total = 0
        for mv in self._moves(mask, used, first):
            total += 1 if mv[0] == "end" else self.completions(*self._after(mv, mask, used, first))
        self.count_memo[key] = total
        return total

    def _step(self, st, mv, mask):
        if mv[0] == "base":
            i = mv[1]
            if self._joint:
                placed = frozenset(self.ids[j] for j in range(self.n) if mask >> j & 1)
                return self.mode.step(st, self.ids[i], self.labels[i], placed)
            return self.mode.step(st, self.ids[i], self.labels[i])
        return self.mode.step(st, None, self.adv[mv[1]])

    def outcomes(self, mask: int, used: int, first: Optional[int], st) -> Counter:
        key = (mask, used, first, st)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        res: Counter = Counter()
        for mv in self._moves(mask, used, first):
            if mv[0] == "end":
                res[self.mode.finish(st)] += 1
                continue
            nxt = self._after(mv, mask, used, first)
            new, record = self._step(st, mv, mask)
            if isinstance(new, Final):
                res[new] += self.completions(*nxt)
                continue
            for sig, c in self.outcomes(*nxt, new).items():
                res[combine(record, sig)] += c
        self.memo[key] = res
        return res

    def partition_outcomes(self, first: Optional[int]) -> Counter:
        return self.outcomes(0, 0, first, self.mode.initial())

    def partition_size(self, first: Optional[int]) -> int:
        return self.completions(0, 0, first)

    def first_matching(self, first: Optional[int], pred) -> Optional[list[object]]:
        """The first execution of a partition whose outcome satisfies ``pred``."""
        mask, used, st = 0, 0, self.mode.initial()
        prefix: tuple = ()
        seq: list[object] = []

        def full(sig):
            return sig if isinstance(sig, Final) else prefix + sig

        if not any(pred(full(s)) for s in self.outcomes(mask, used, first, st)):
            return None
        while True:
            for mv in self._moves(mask, used, first):
                if mv[0] == "end":
                    if pred(full(self.mode.finish(st))):
                        return seq
                    continue
                nxt = self._after(mv, mask, used, first)
                new, record = self._step(st, mv, mask)
                item = self.ids[mv[1]] if mv[0] == "base" else self.adv[mv[1]]
                if isinstance(new, Final):
                    if pred(new):
                        return seq + [item] + self._any_completion(*nxt)
                    continue
                pre = prefix + ((record,) if record is not None else ())
                subs = self.outcomes(*nxt, new)
                if any(pred(s if isinstance(s, Final) else pre + s) for s in subs):
                    seq.append(item)
                    mask, used, first = nxt
                    st, prefix = new, pre
                    break
            else:  # pragma: no cover - guarded by the outcome check above
                raise AssertionError("descent lost its target")

    def _any_completion(self, mask: int, used: int, first: Optional[int]) -> list[object]:
        out: list[object] = []
        while True:
            mv = self._moves(mask, used, first)[0]
            if mv[0] == "end":
                return out
            out.append(self.ids[mv[1]] if mv[0] == "base" else self.adv[mv[1]])
            mask, used, first = self._after(mv, mask, used, first)


# -- predicates over outcomes --------------------------------------------------------------


def _rod_records(sig: tuple) -> tuple:
    return () if isinstance(sig, Final) else sig


def _rod_fails(sig: tuple, relax: frozenset[str]) -> bool:
    for _e, _t, supported, by_rtm, classes, _n in _rod_records(sig):
        if classes:
            continue
        if not by_rtm and (supported or "well-supported" in relax):
            return True
    return False


def _rod_outside_unwitnessed(sig: tuple) -> bool:
    return any(not c and (not s or r) for _e, _t, s, r, c, _n in _rod_records(sig))


def _rod_has_class(cls: str):
    def pred(sig: tuple) -> bool:
        return any(cls in c and s and not r for _e, t, s, r, c, _n in _rod_records(sig))
    return pred


def _joint_fails(sig: tuple) -> bool:
    return isinstance(sig, Final) and sig[0] == VerdictKind.THEOREM_FAILURE.value


def _joint_relaxed_fails(sig: tuple) -> bool:
    return _joint_fails(sig) and bool(sig[1])


def _predicate(theorem: str, name: str, relax: frozenset[str]):
    if theorem == JOINT:
        return {"failure": _joint_fails, "relaxed-failure": _joint_relaxed_fails}[name]
    if name == "failure":
        return lambda s: _rod_fails(s, relax)
    if name == "outside-unwitnessed":
        return _rod_outside_unwitnessed
    if name.startswith("class:"):
        return _rod_has_class(name[6:])
    raise KeyError(name)


def _run_partition(job: _Job, part: Optional[int], explorer: Optional[Explorer] = None):
    ex = explorer or Explorer(job.sys, job.base, job.budget, job.theorem, job.setup)
    counts = ex.partition_outcomes(part)
    found = {}
    for name in job.predicates:
        pred = _predicate(job.theorem, name, job.relax)
        if any(pred(s) for s in counts):
            found[name] = ex.first_matching(part, pred)
    return counts, found


# -- reports --------------------------------------------------------------------------------


@dataclass
class TheoremReport:
    theorem: str
    budget: dict
    partitions: int
    executions: int
    counts: dict[str, int]
    failures: int
    witness_classes: dict[str, dict[str, int]] = field(default_factory=dict)
    counterexample: Optional[EventPoset] = None
    examples: dict[str, EventPoset] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    outcomes: Counter = field(default_factory=Counter, repr=False)

    @property
    def holds(self) -> bool:
        return self.failures == 0

    def to_dict(self) -> dict:
        from .io import execution_to_dict

        return {
            "theorem": self.theorem,
            "holds": self.holds,
            "budget": self.budget,
            "partitions": self.partitions,
            "executions": self.executions,
            "failures": self.failures,
            "counts": dict(self.counts),
            "witness_classes": {t: dict(sorted(c.items())) for t, c in sorted(self.witness_classes.items())},
            "counterexample": None if self.counterexample is None else execution_to_dict(self.counterexample),
            "examples": {k: execution_to_dict(v) for k, v in sorted(self.examples.items())},
            "notes": list(self.notes),
        }

    def to_text(self) -> str:
        lines = [
            f"theorem: {self.theorem}",
            f"verdict: {'holds' if self.holds else 'FAILS'} ({self.failures} failures)",
            f"budget: {self.budget}",
            f"executions explored: {self.executions} in {self.partitions} partitions",
        ]
        for k, v in self.counts.items():
            lines.append(f"  {k}: {v}")
        for t, cs in sorted(self.witness_classes.items()):
            lines.append(f"witness classes for avoidance at measurements of {t}:")
            for c, v in sorted(cs.items()):
                lines.append(f"  {c}: {v}")
        for n in self.notes:
            lines.append(f"note: {n}")
        if self.counterexample is not None:
            lines.append("first counterexample (total order):")
            for e in self.counterexample.topological_order():
                lines.append(f"  {e}: {self.counterexample.labels[e]}")
        return "\n".join(lines)


def _explore(
    sys: AttestationSystem,
    base: EventPoset,
    budget: ExplorationBudget,
    theorem: str,
    setup: Optional[JointSetup],
    predicates: tuple[str, ...],
    relax: frozenset[str],
    workers: int = 1,
):
    explorer = Explorer(sys, base, budget, theorem, setup)
    parts = partitions(base, budget, len(explorer.adv))
    total = sum(explorer.partition_size(p) for p in parts)
    if budget.max_executions is not None and total > budget.max_executions:
        raise BudgetExceeded(total, budget.max_executions)
    job = _Job(sys, base, budget, theorem, setup, predicates, relax)
    if workers > 1 and len(parts) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_partition, [job] * len(parts), parts))
    else:
        results = [_run_partition(job, p, explorer) for p in parts]
    counts: Counter = Counter()
    found: dict[str, list[object]] = {}
    for c, f in results:
        counts.update(c)
        for name, seq in f.items():
            found.setdefault(name, seq)
    if sum(counts.values()) != total:  # pragma: no cover - internal consistency
        raise AssertionError("outcome counts do not add up to the universe size")
    examples = {k: sequence_to_poset(base, v) for k, v in found.items()}
    return len(parts), total, counts, examples


def verify_recent_or_deep(
    sys: AttestationSystem,
    spec: EventPoset,
    budget: ExplorationBudget,
    *,
    relax: Iterable[str] = (),
    workers: int = 1,
    example_classes: bool = False,
) -> TheoremReport:
    """Every undetected avoidance at a well-supported, non-rtm measurement has a witness."""
    relax = frozenset(relax)
    notes = []
    if not measures_bottom_up(sys, spec):
        notes.append("base does not measure bottom-up; unsupported measurements fall outside the theorem")
    classes = sorted({f"{k}-{o}" for t in sys.objects for k, d in (("recent", 1), ("deep", 2))
                      for o in dependency_set(sys, t, d)})
    preds = ("failure", "outside-unwitnessed") + (tuple(f"class:{c}" for c in classes) if example_classes else ())
    n_parts, total, out, examples = _explore(sys, spec, budget, RECENT_OR_DEEP, None, preds, relax, workers)
    counts = Counter()
    witness: dict[str, Counter] = {}
    since: Counter = Counter()
    failures = 0
    for sig, c in sorted(out.items(), key=repr):
        if isinstance(sig, Final):
            counts["detected"] += c
            continue
        counts["undetected"] += c
        if _rod_fails(sig, relax):
            failures += c
        if sig:
            counts["with-avoidance"] += c
        for _e, t, supported, by_rtm, cls, nonce_cls in sig:
            counts["avoidance-events"] += c
            if supported and not by_rtm:
                counts["theorem-applicable"] += c
                if cls:
                    counts["witnessed"] += c
                else:
                    counts["missing-witness"] += c
                bucket = witness.setdefault(t, Counter())
                for k in cls:
                    bucket[k] += c
                for k in nonce_cls:
                    since[k] += c
            else:
                counts["outside-hypotheses"] += c
                if not cls:
                    counts["outside-unwitnessed"] += c
    for key in ("detected", "undetected", "with-avoidance", "avoidance-events", "theorem-applicable",
                "witnessed", "missing-witness", "outside-hypotheses", "outside-unwitnessed"):
        counts.setdefault(key, 0)
    for k, v in sorted(since.items()):
        counts[f"recent-since-nonce:{k[len('recent-'):]}"] = v
    ordered = {k: counts[k] for k in ("detected", "undetected", "with-avoidance", "avoidance-events",
                                      "theorem-applicable", "witnessed", "missing-witness",
                                      "outside-hypotheses", "outside-unwitnessed")}
    ordered.update({k: v for k, v in counts.items() if k not in ordered})
    budget_doc = budget.to_dict() | {"relax": sorted(relax)}
    return TheoremReport(
        theorem=RECENT_OR_DEEP,
        budget=budget_doc,
        partitions=n_parts,
        executions=total,
        counts=ordered,
        failures=failures,
        witness_classes={t: dict(c) for t, c in witness.items()},
        counterexample=examples.pop("failure", None),
        examples=examples,
        notes=notes,
        outcomes=out,
    )


def verify_joint_strategy(
    sys: AttestationSystem,
    scaffold: EventPoset,
    budget: ExplorationBudget,
    *,
    relax: Iterable[str] = (),
    keep_nonce_order: bool = True,
    reference: Optional[EventPoset] = None,
    workers: int = 1,
) -> TheoremReport:
    """Classify every execution of the scaffold as admits-core, deep or recent."""
    relax = frozenset(relax)
    setup = joint_setup(sys, scaffold, relax, keep_nonce_order, reference)
    budget_doc = budget.to_dict() | {"relax": sorted(relax), "keep_nonce_order": keep_nonce_order,
                                     "reference": reference is not None}
    if setup.target is None:
        return TheoremReport(JOINT, budget_doc, 0, 0, {"precondition-failed": 1}, 0, notes=[setup.reason])
    n_parts, total, out, examples = _explore(
        sys, scaffold, budget, JOINT, setup, ("failure", "relaxed-failure"), relax, workers
    )
    counts = Counter()
    for sig, c in out.items():
        counts[sig[0]] += c
        if sig[0] == VerdictKind.ASSUMPTIONS_VIOLATED.value:
            continue
        if sig[1]:
            counts[f"{sig[0]}+relaxed-violation"] += c
        if sig[0] == VerdictKind.THEOREM_FAILURE.value and sig[3]:
            counts["theorem-failure+admits-without-nonce-order"] += c
    keys = [k.value for k in (VerdictKind.ADMITS_CORE, VerdictKind.DEEP, VerdictKind.RECENT,
                              VerdictKind.THEOREM_FAILURE, VerdictKind.ASSUMPTIONS_VIOLATED)]
    ordered = {k: counts.get(k, 0) for k in keys}
    ordered.update({k: counts[k] for k in sorted(counts) if k not in ordered})
    notes = []
    if setup.relax:
        notes.append("relaxed assumptions are checked but not enforced: " + ", ".join(sorted(setup.relax)))
    if not keep_nonce_order:
        notes.append("target specification ignores orderings with att-start events")
    return TheoremReport(
        theorem=JOINT,
        budget=budget_doc,
        partitions=n_parts,
        executions=total,
        counts=ordered,
        failures=ordered[VerdictKind.THEOREM_FAILURE.value],
        counterexample=examples.pop("failure", None),
        examples=examples,
        notes=notes,
        outcomes=out,
    )


def default_theorem(base: EventPoset) -> str:
    return JOINT if base.events_of(Quote) else RECENT_OR_DEEP


def find_counterexample(
    sys: AttestationSystem,
    base: EventPoset,
    budget: ExplorationBudget,
    relax: Iterable[str] = (),
    *,
    theorem: Optional[str] = None,
    reference: Optional[EventPoset] = None,
    keep_nonce_order: bool = True,
) -> Optional[EventPoset]:
    """First execution, in exploration order, that defeats the property under ``relax``."""
    relax = frozenset(relax)
    bad = relax - set(RELAX_FLAGS)
    if bad:
        raise ValueError(f"unknown relax flags: {sorted(bad)}")
    theorem = theorem or default_theorem(base)
    if theorem == JOINT:
        setup = joint_setup(sys, base, relax, keep_nonce_order, reference)
        if setup.target is None:
            return None
        _, _, _, ex = _explore(sys, base, budget, JOINT, setup, ("failure",), relax)
    else:
        _, _, _, ex = _explore(sys, base, budget, RECENT_OR_DEEP, None, ("failure",), relax)
    return ex.get("failure")
