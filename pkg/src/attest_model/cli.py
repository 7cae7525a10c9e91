"""Command-line interface.

Exit status: 0 when the property holds or nothing was found, 1 when there are
findings (violations, missing witnesses, counterexamples), 2 on usage or
parse errors.  Document arguments are file paths or ``@name`` for a bundled
fixture (``attest-model fixtures`` lists them).
"""

from __future__ import annotations

import argparse
import json
import sys as _sys
from typing import Optional, Sequence

from . import __version__
from .bundling import (
    CLASSIFIED,
    ExtractionError,
    bundle_indicates_corruption,
    check_assumptions,
    check_joint_strategy,
    complies_with_strategy,
    extract_specification,
    strategy2_scaffold,
    strategy3_scaffold,
)
from .dot import export_dot
from .events import (
    EventPoset,
    admits,
    is_adversary_ordered,
    is_extend_ordered,
    validate_execution,
)
from .explorer import (
    JOINT,
    RECENT_OR_DEEP,
    RELAX_FLAGS,
    BudgetExceeded,
    ExplorationBudget,
    default_theorem,
    verify_joint_strategy,
    verify_recent_or_deep,
)
from .io import (
    DocumentError,
    execution_to_dict,
    fixture_names,
    parse_bundle,
    parse_execution,
    parse_system,
    read_source,
    source_name,
)
from .measurement import check_recent_or_deep, unsupported_measurements
from .system import AttestationSystem, dependency_set, validate_system

OK, FINDINGS, USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _emit(args: argparse.Namespace, doc: dict, text: str) -> None:
    if args.format == "json":
        print(json.dumps(doc, indent=2))
    else:
        print(text)


def _system(args: argparse.Namespace) -> AttestationSystem:
    return parse_system(read_source(args.system))


def _execution(ref: str, sys: AttestationSystem) -> EventPoset:
    return parse_execution(read_source(ref), sys)


def _fmt_set(xs) -> str:
    return "{" + ",".join(sorted(xs)) + "}"


def _poset_lines(p: EventPoset) -> list[str]:
    lines = [f"  {e}: {p.labels[e]}" for e in p.topological_order()]
    lines += [f"  {a} < {b}" for a, b in p.cover_edges()]
    return lines


def _scaffold(ref: str, sys: AttestationSystem) -> EventPoset:
    if ref == "strategy3":
        return strategy3_scaffold(sys)
    if ref == "strategy2":
        return strategy2_scaffold(sys)
    return _execution(ref, sys)


# -- commands ----------------------------------------------------------------------------


def cmd_fixtures(args) -> int:
    names = fixture_names()
    _emit(args, {"fixtures": names}, "\n".join("@" + n for n in names))
    return OK


def cmd_validate(args) -> int:
    sys = parse_system(read_source(args.system), strict=False)
    rep = validate_system(sys)
    doc = {"system": source_name(args.system), "report": rep.to_dict()}
    lines = [f"system {source_name(args.system)}: {'valid' if rep.ok else 'INVALID'}"]
    lines += [f"  {i.code}: {i.message}" for i in rep.issues]
    status = OK if rep.ok else FINDINGS
    if rep.ok:
        doc["executions"] = {}
        for ref in args.executions:
            erep = validate_execution(sys, _execution(ref, sys))
            doc["executions"][source_name(ref)] = erep.to_dict()
            lines.append(f"execution {source_name(ref)}: {'valid' if erep.ok else 'INVALID'}")
            lines += [f"  {i.code}: {i.message}" for i in erep.issues]
            if not erep.ok:
                status = FINDINGS
    _emit(args, doc, "\n".join(lines))
    return status


def cmd_depths(args) -> int:
    sys = _system(args)
    if args.object not in sys.objects:
        raise UsageError(f"unknown object {args.object!r}")
    sets = {f"D{i}": sorted(dependency_set(sys, args.object, i)) for i in range(1, args.levels + 1)}
    text = "\n".join(f"{k}({args.object}) = {_fmt_set(v)}" for k, v in sets.items())
    _emit(args, {"object": args.object, **sets}, text)
    return OK


def cmd_check_exec(args) -> int:
    sys = _system(args)
    p = _execution(args.execution, sys)
    rep = validate_execution(sys, p)
    unsupported = unsupported_measurements(sys, p)
    name = source_name(args.execution)
    doc = {
        "execution": name,
        "events": len(p),
        "valid": rep.ok,
        "adversary_ordered": is_adversary_ordered(sys, p),
        "extend_ordered": is_extend_ordered(p),
        "measures_bottom_up": not unsupported,
        "unsupported_measurements": unsupported,
        "report": rep.to_dict(),
    }
    lines = [f"execution {name}: {len(p)} events, {'valid' if rep.ok else 'INVALID'}"]
    lines += [f"  {i.code}: {i.message}" for i in rep.issues]
    lines.append(f"measures bottom-up: {'yes' if not unsupported else 'no, unsupported ' + ', '.join(unsupported)}")
    _emit(args, doc, "\n".join(lines))
    return OK if rep.ok else FINDINGS


def cmd_admits(args) -> int:
    sys = _system(args)
    spec = _execution(args.spec, sys)
    p = _execution(args.execution, sys)
    emb = admits(spec, p)
    sname, ename = source_name(args.spec), source_name(args.execution)
    doc = {"spec": sname, "execution": ename, "admits": emb is not None,
           "embedding": None if emb is None else dict(sorted(emb.items()))}
    if emb is None:
        text = f"{sname} does not admit {ename}"
    else:
        text = "\n".join([f"{sname} admits {ename}"] + [f"  {a} -> {b}" for a, b in sorted(emb.items())])
    _emit(args, doc, text)
    return OK if emb is not None else FINDINGS


def cmd_classify(args) -> int:
    sys = _system(args)
    p = _execution(args.execution, sys)
    rep = check_recent_or_deep(sys, p)
    name = source_name(args.execution)
    doc = {"execution": name, **rep.to_dict()}
    lines = [f"execution {name}"]
    if rep.detected:
        lines.append("corruption detected at " + ", ".join(rep.detected))
    for v in rep.verdicts:
        cls = ", ".join(sorted(v.witness_classes)) or "NO WITNESS"
        lines.append(f"avoidance at {v.event} ({p.labels[v.event]}): {cls}")
    for v in rep.outside:
        cls = ", ".join(sorted(v.witness_classes)) or "no witness"
        lines.append(f"avoidance at {v.event} ({p.labels[v.event]}) outside the hypotheses: {cls}")
    if not rep.detected and not rep.verdicts and not rep.outside:
        lines.append("no avoidance events")
    _emit(args, doc, "\n".join(lines))
    unwitnessed = rep.missing or any(not v.witnessed for v in rep.outside)
    return FINDINGS if unwitnessed else OK


def _extract(args, sys):
    bundle = parse_bundle(read_source(args.bundle))
    return bundle, extract_specification(sys, bundle)


def cmd_bundle_extract(args) -> int:
    sys = _system(args)
    name = source_name(args.bundle)
    try:
        _bundle, ex = _extract(args, sys)
    except ExtractionError as exc:
        _emit(args, {"bundle": name, "extracted": False, "code": exc.code, "error": str(exc)},
              f"bundle {name} rejected ({exc.code}): {exc}")
        return FINDINGS
    doc = {
        "bundle": name,
        "extracted": True,
        "spec": execution_to_dict(ex.spec),
        "origin": {e: o.to_dict() for e, o in sorted(ex.origin.items())},
        "notes": ex.notes,
        "duplicates": [list(d) for d in ex.duplicates],
    }
    lines = [f"S({name}): {len(ex.spec)} events"] + _poset_lines(ex.spec)
    lines += [f"note: {n}" for n in ex.notes]
    _emit(args, doc, "\n".join(lines))
    return OK


def cmd_bundle_check(args) -> int:
    sys = _system(args)
    name = source_name(args.bundle)
    try:
        bundle, ex = _extract(args, sys)
    except ExtractionError as exc:
        _emit(args, {"bundle": name, "complies": False, "code": exc.code, "error": str(exc)},
              f"bundle {name} rejected ({exc.code}): {exc}")
        return FINDINGS
    complies = complies_with_strategy(sys, bundle)
    corrupt = bundle_indicates_corruption(sys, bundle)
    unsupported = unsupported_measurements(sys, ex.spec)
    doc = {"bundle": name, "complies": complies, "indicates_corruption": corrupt,
           "unsupported_measurements": unsupported}
    lines = [f"bundle {name}: {len(bundle)} quotes"]
    if complies:
        lines.append("S(bundle) measures bottom-up")
    else:
        lines.append("S(bundle) does not measure bottom-up; unsupported: " + ", ".join(unsupported))
    lines.append("bundle indicates a corruption" if corrupt else "bundle indicates no corruption")
    _emit(args, doc, "\n".join(lines))
    return OK if complies and not corrupt else FINDINGS


def _relax(args) -> list[str]:
    out = []
    for item in args.relax or []:
        out += [x for x in item.split(",") if x]
    bad = [x for x in out if x not in RELAX_FLAGS]
    if bad:
        raise UsageError(f"unknown relax flag {bad[0]!r}; choose from {', '.join(RELAX_FLAGS)}")
    return out


def cmd_assumptions(args) -> int:
    sys = _system(args)
    p = _execution(args.execution, sys)
    enforced, relaxed = check_assumptions(sys, p, _relax(args))
    name = source_name(args.execution)
    doc = {"execution": name, "violations": [v.to_dict() for v in enforced],
           "relaxed_violations": [v.to_dict() for v in relaxed]}
    lines = [f"execution {name}: {len(enforced)} assumption violations"]
    lines += [f"  {v.assumption.value}: {v.message}" for v in enforced]
    lines += [f"  relaxed {v.assumption.value}: {v.message}" for v in relaxed]
    _emit(args, doc, "\n".join(lines))
    return FINDINGS if enforced else OK


def cmd_joint(args) -> int:
    sys = _system(args)
    p = _execution(args.execution, sys)
    bundle = parse_bundle(read_source(args.bundle))
    ref = _execution(args.reference, sys) if args.reference else None
    v = check_joint_strategy(sys, p, bundle, keep_nonce_order=not args.no_nonce_order,
                             relax=_relax(args), reference=ref)
    name = source_name(args.execution)
    doc = {"execution": name, "bundle": source_name(args.bundle), **v.to_dict()}
    lines = [f"execution {name}: {v.kind.value}"]
    if v.reason:
        lines.append(f"  {v.reason}")
    for o, c in v.deep:
        lines.append(f"  deep: corruption of {o} at {c}")
    for o, m, c in v.recent:
        lines.append(f"  recent: {o} measured at {m}, corrupted at {c}")
    for x in v.violations:
        lines.append(f"  {x.assumption.value}: {x.message}")
    for x in v.relaxed_violations:
        lines.append(f"  relaxed {x.assumption.value}: {x.message}")
    _emit(args, doc, "\n".join(lines))
    return OK if v.kind in CLASSIFIED else FINDINGS


def cmd_explore(args) -> int:
    sys = _system(args)
    if args.spec and args.scaffold:
        raise UsageError("give either --spec or --scaffold")
    base = _scaffold(args.scaffold, sys) if args.scaffold else _execution(args.spec or "@s1", sys)
    theorem = args.theorem if args.theorem != "auto" else default_theorem(base)
    objects = None
    if args.objects is not None:
        objects = frozenset(x for x in args.objects.split(",") if x)
        unknown = sorted(objects - sys.objects)
        if unknown:
            raise UsageError(f"unknown object {unknown[0]!r} in --objects")
    if args.max_adv < 0:
        raise UsageError("--max-adv must be non-negative")
    if args.workers < 1:
        raise UsageError("--workers must be positive")
    budget = ExplorationBudget(args.max_adv, objects, not args.no_repairs, args.max_execs, args.seed)
    relax = _relax(args)
    try:
        if theorem == JOINT:
            ref = _execution(args.reference, sys) if args.reference else None
            report = verify_joint_strategy(sys, base, budget, relax=relax, keep_nonce_order=not args.no_nonce_order,
                                           reference=ref, workers=args.workers)
        else:
            report = verify_recent_or_deep(sys, base, budget, relax=relax, workers=args.workers,
                                           example_classes=args.examples)
    except BudgetExceeded as exc:
        _emit(args, {"error": "budget-exceeded", "executions": exc.count, "limit": exc.limit},
              f"error: {exc}")
        return USAGE
    doc = {"base": source_name(args.scaffold or args.spec or "@s1"), **report.to_dict()}
    _emit(args, doc, f"base: {doc['base']}\n" + report.to_text())
    return OK if report.holds else FINDINGS


def cmd_export_dot(args) -> int:
    sys = _system(args)
    if args.execution is None:
        print(export_dot(sys, name=source_name(args.system)), end="")
        return OK
    p = _execution(args.execution, sys)
    verdicts = []
    if args.annotate:
        rep = check_recent_or_deep(sys, p)
        verdicts = rep.verdicts + rep.outside
    print(export_dot(p, verdicts, name=source_name(args.execution)), end="")
    return OK


# -- parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="attest-model", description="Layered attestation model checker.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("--system", default="@ms1", help="system document (path or @fixture; default @ms1)")
    ap.add_argument("--format", choices=("text", "json"), default="text")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=fn)
        return p

    add("fixtures", cmd_fixtures, "list bundled fixtures")
    p = add("validate", cmd_validate, "validate the system and optional executions")
    p.add_argument("executions", nargs="*")
    p = add("depths", cmd_depths, "dependency sets of an object")
    p.add_argument("object")
    p.add_argument("--levels", type=int, default=2, help="deepest D^i to print")
    p = add("check-exec", cmd_check_exec, "validate an execution")
    p.add_argument("execution")
    p = add("admits", cmd_admits, "search an embedding of a specification into an execution")
    p.add_argument("spec")
    p.add_argument("execution")
    p = add("classify", cmd_classify, "recent-or-deep witnesses for each avoidance event")
    p.add_argument("execution")
    p = add("bundle-extract", cmd_bundle_extract, "extract the specification of a quote bundle")
    p.add_argument("bundle")
    p = add("bundle-check", cmd_bundle_check, "check a bundle against the bundling strategy")
    p.add_argument("bundle")
    p = add("assumptions", cmd_assumptions, "check the extend assumptions on an execution")
    p.add_argument("execution")
    p.add_argument("--relax", action="append", help="assumption2, assumption3 (comma separated)")
    p = add("joint", cmd_joint, "classify an execution producing a bundle")
    p.add_argument("execution")
    p.add_argument("bundle")
    p.add_argument("--relax", action="append", help="assumption2, assumption3 (comma separated)")
    p.add_argument("--no-nonce-order", action="store_true", help="drop att-start orderings from the core")
    p.add_argument("--reference", help="target specification instead of the core of S(bundle)")
    p = add("explore", cmd_explore, "bounded exhaustive check of a theorem")
    p.add_argument("--spec", help="base specification (default @s1)")
    p.add_argument("--scaffold", help="extend/quote scaffold; 'strategy3' or 'strategy2' builds one")
    p.add_argument(
        "--theorem", choices=("auto", RECENT_OR_DEEP, JOINT), default="auto", help="auto picks by --spec or --scaffold"
    )
    p.add_argument("--max-adv", type=int, default=2, help="most adversary events per execution (default 2)")
    p.add_argument("--objects", help="comma separated corruptible objects (default all but the rtm)")
    p.add_argument("--no-repairs", action="store_true", help="corruption events only")
    p.add_argument("--relax", action="append", help=", ".join(RELAX_FLAGS))
    p.add_argument("--max-execs", type=int, help="abort with exit 2 beyond this many executions")
    p.add_argument("--workers", type=int, default=1, help="worker processes; reports do not depend on it")
    p.add_argument("--seed", type=int, default=0, help="enumeration order seed")
    p.add_argument("--no-nonce-order", action="store_true", help="drop att-start orderings from the target")
    p.add_argument("--reference", help="target specification instead of the core of S(bundle)")
    p.add_argument("--examples", action="store_true", help="include one example execution per witness class")
    p = add("export-dot", cmd_export_dot, "Graphviz rendering of the system or an execution")
    p.add_argument("execution", nargs="?")
    p.add_argument("--annotate", action="store_true", help="star avoidance events and box witnesses")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (DocumentError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return USAGE


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
