"""JSON documents for systems, executions and bundles, plus the bundled fixtures."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from .bundling import QuoteBundle
from .events import AttStart, Corr, EventPoset, Ext, Label, Meas, Quote, Rep, check_labels
from .system import AttestationSystem, PcrId, ValidationReport, validate_system
from .terms import TermSyntaxError, format_term, parse_term


class DocumentError(ValueError):
    """A document failed to parse or validate; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = "", report: Optional[ValidationReport] = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.report = report


def _load_json(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _need(doc: dict, key: str, kind: type, path: str = "") -> Any:
    if not isinstance(doc, dict):
        raise DocumentError("expected an object", path)
    if key not in doc:
        raise DocumentError(f"{key} required", path)
    val = doc[key]
    if not isinstance(val, kind):
        raise DocumentError(f"expected {kind.__name__}", f"{path}{'.' if path else ''}{key}")
    return val


def _pair_list(doc: dict, key: str) -> list[tuple[str, str]]:
    raw = doc.get(key, [])
    if not isinstance(raw, list):
        raise DocumentError("expected a list of pairs", key)
    out = []
    for i, item in enumerate(raw):
        if not (isinstance(item, list) and len(item) == 2 and all(isinstance(x, str) for x in item)):
            raise DocumentError("expected [from, to]", f"{key}[{i}]")
        out.append((item[0], item[1]))
    return out


def _term(text: Any, path: str):
    if not isinstance(text, str):
        raise DocumentError("expected a term string", path)
    try:
        return parse_term(text)
    except TermSyntaxError as exc:
        raise DocumentError(str(exc), path) from None


def _pcr(text: Any, path: str) -> PcrId:
    if not isinstance(text, str):
        raise DocumentError("expected a PCR name", path)
    try:
        return PcrId.parse(text)
    except ValueError as exc:
        raise DocumentError(str(exc), path) from None


# -- systems -------------------------------------------------------------------------


def system_from_dict(doc: Any, strict: bool = True) -> AttestationSystem:
    if not isinstance(doc, dict):
        raise DocumentError("system document must be an object")
    objects = _need(doc, "objects", list)
    if not all(isinstance(o, str) for o in objects):
        raise DocumentError("object names must be strings", "objects")
    if len(set(objects)) != len(objects):
        raise DocumentError("duplicate object name", "objects")
    rtm = _need(doc, "rtm", str)
    names = set(objects)
    if rtm not in names:
        raise DocumentError(f"unknown object {rtm!r}", "rtm")
    rels = {}
    for key in ("M", "C"):
        rels[key] = _pair_list(doc, key)
        for i, (a, b) in enumerate(rels[key]):
            for x in (a, b):
                if x not in names:
                    raise DocumentError(f"unknown object {x!r}", f"{key}[{i}]")
    tpms = doc.get("tpms", {})
    if not isinstance(tpms, dict):
        raise DocumentError("expected a map from TPM to register names", "tpms")
    pcrs = set()
    for t, regs in tpms.items():
        if not isinstance(regs, list) or not all(isinstance(r, str) for r in regs):
            raise DocumentError("expected a list of register names", f"tpms.{t}")
        pcrs.update(PcrId(t, r) for r in regs)
    access = []
    for i, (o, p) in enumerate(_pair_list(doc, "L")):
        if o not in names:
            raise DocumentError(f"unknown object {o!r}", f"L[{i}]")
        pcr = _pcr(p, f"L[{i}]")
        if pcr not in pcrs:
            raise DocumentError(f"unknown PCR {p!r}", f"L[{i}]")
        access.append((o, pcr))
    mv = None
    if "mv" in doc:
        mv = {}
        if not isinstance(doc["mv"], dict):
            raise DocumentError("expected a map from object to values", "mv")
        for o, spec in doc["mv"].items():
            if o not in names:
                raise DocumentError(f"unknown object {o!r}", f"mv.{o}")
            good = [_term(x, f"mv.{o}.good") for x in _need(spec, "good", list, f"mv.{o}")]
            bad = [_term(x, f"mv.{o}.bad") for x in _need(spec, "bad", list, f"mv.{o}")]
            mv[o] = (good, bad)
    sys = AttestationSystem.build(objects, rtm, rels["M"], rels["C"], pcrs, access, mv)
    if strict:
        rep = validate_system(sys)
        if not rep.ok:
            raise DocumentError("; ".join(i.message for i in rep.issues), report=rep)
    return sys


def parse_system(text: str, strict: bool = True) -> AttestationSystem:
    return system_from_dict(_load_json(text), strict)


def system_to_dict(sys: AttestationSystem) -> dict:
    tpms: dict[str, list[str]] = {}
    for p in sorted(sys.pcrs):
        tpms.setdefault(p.tpm, []).append(p.register)
    doc: dict = {
        "objects": sorted(sys.objects),
        "rtm": sys.rtm,
        "M": [list(e) for e in sorted(sys.measures)],
        "C": [list(e) for e in sorted(sys.context)],
        "tpms": tpms,
        "L": [[o, str(p)] for o, p in sorted(sys.access)],
    }
    default = AttestationSystem.build(sys.objects, sys.rtm, ())
    if any(sys.good[o] != default.good[o] or sys.bad[o] != default.bad[o] for o in sys.objects):
        doc["mv"] = {
            o: {
                "good": sorted(format_term(v) for v in sys.good[o]),
                "bad": sorted(format_term(v) for v in sys.bad[o]),
            }
            for o in sorted(sys.objects)
        }
    return doc


def serialize_system(sys: AttestationSystem) -> str:
    return json.dumps(system_to_dict(sys), indent=2) + "\n"


# -- executions ---------------------------------------------------------------------


def label_from_dict(doc: Any, path: str) -> Label:
    kind = _need(doc, "kind", str, path)
    if kind == "meas":
        return Meas(_need(doc, "by", str, path), _need(doc, "target", str, path))
    if kind == "corr":
        return Corr(_need(doc, "obj", str, path))
    if kind == "rep":
        return Rep(_need(doc, "obj", str, path))
    if kind == "att_start":
        return AttStart(_term(_need(doc, "nonce", str, path), f"{path}.nonce"))
    if kind == "ext":
        return Ext(
            _need(doc, "by", str, path),
            _term(_need(doc, "value", str, path), f"{path}.value"),
            _pcr(_need(doc, "pcr", str, path), f"{path}.pcr"),
        )
    if kind == "quote":
        pcrs = _need(doc, "pcrs", list, path)
        return Quote(
            _term(_need(doc, "input", str, path), f"{path}.input"),
            tuple(_pcr(p, f"{path}.pcrs[{i}]") for i, p in enumerate(pcrs)),
        )
    raise DocumentError(f"unknown label kind {kind!r}", f"{path}.kind")


def label_to_dict(lab: Label) -> dict:
    if isinstance(lab, Meas):
        return {"kind": "meas", "by": lab.by, "target": lab.target}
    if isinstance(lab, Corr):
        return {"kind": "corr", "obj": lab.obj}
    if isinstance(lab, Rep):
        return {"kind": "rep", "obj": lab.obj}
    if isinstance(lab, AttStart):
        return {"kind": "att_start", "nonce": format_term(lab.nonce)}
    if isinstance(lab, Ext):
        return {"kind": "ext", "by": lab.by, "pcr": str(lab.pcr), "value": format_term(lab.value)}
    if isinstance(lab, Quote):
        return {"kind": "quote", "input": format_term(lab.input), "pcrs": [str(p) for p in lab.pcrs]}
    raise TypeError(f"not a label: {lab!r}")


def execution_from_dict(doc: Any, sys: Optional[AttestationSystem] = None) -> EventPoset:
    if not isinstance(doc, dict):
        raise DocumentError("execution document must be an object")
    events = _need(doc, "events", list)
    pairs = []
    seen = set()
    for i, ev in enumerate(events):
        eid = _need(ev, "id", str, f"events[{i}]")
        if eid in seen:
            raise DocumentError(f"duplicate event id {eid!r}", f"events[{i}].id")
        seen.add(eid)
        pairs.append((eid, label_from_dict(_need(ev, "label", dict, f"events[{i}]"), f"events[{i}].label")))
    order = _pair_list(doc, "order")
    try:
        p = EventPoset.build(pairs, order)
    except ValueError as exc:
        raise DocumentError(str(exc), "order") from None
    if sys is not None:
        rep = ValidationReport()
        check_labels(sys, p, rep)
        if not rep.ok:
            raise DocumentError("; ".join(i.message for i in rep.issues), "events", report=rep)
    return p


def parse_execution(text: str, sys: Optional[AttestationSystem] = None) -> EventPoset:
    return execution_from_dict(_load_json(text), sys)


def execution_to_dict(p: EventPoset, name: Optional[str] = None) -> dict:
    doc: dict = {}
    if name:
        doc["name"] = name
    doc["events"] = [{"id": e, "label": label_to_dict(l)} for e, l in p.labels.items()]
    doc["order"] = [list(x) for x in p.cover_edges()]
    return doc


def serialize_execution(p: EventPoset, name: Optional[str] = None) -> str:
    return json.dumps(execution_to_dict(p, name), indent=2) + "\n"


# -- bundles ----------------------------------------------------------------------------


def bundle_from_dict(doc: Any) -> QuoteBundle:
    quotes = _need(doc, "quotes", list)
    return QuoteBundle.of(_term(q, f"quotes[{i}]") for i, q in enumerate(quotes))


def parse_bundle(text: str) -> QuoteBundle:
    return bundle_from_dict(_load_json(text))


def bundle_to_dict(b: QuoteBundle) -> dict:
    return {"quotes": [format_term(q) for q in b.quotes]}


def serialize_bundle(b: QuoteBundle) -> str:
    return json.dumps(bundle_to_dict(b), indent=2) + "\n"


# -- fixtures ----------------------------------------------------------------------------


def fixture_names() -> list[str]:
    root = resources.files("attest_model") / "fixtures"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def fixture_text(name: str) -> str:
    path = resources.files("attest_model") / "fixtures" / f"{name}.json"
    if not path.is_file():
        raise DocumentError(f"no bundled fixture named {name!r}")
    return path.read_text()


def fixture_name(name: str) -> str:
    """The display name stored in a fixture, e.g. ``E1``."""
    return json.loads(fixture_text(name)).get("name", name)


def ms1() -> AttestationSystem:
    return parse_system(fixture_text("ms1"))


def fixture_execution(name: str, sys: Optional[AttestationSystem] = None) -> EventPoset:
    return parse_execution(fixture_text(name), sys if sys is not None else ms1())


def fixture_bundle(name: str) -> QuoteBundle:
    return parse_bundle(fixture_text(name))


def read_source(ref: Union[str, Path]) -> str:
    """File contents, or a bundled fixture when ``ref`` is written ``@name``."""
    ref = str(ref)
    if ref.startswith("@"):
        return fixture_text(ref[1:])
    try:
        return Path(ref).read_text()
    except OSError as exc:
        raise DocumentError(f"cannot read {ref}: {exc.strerror}") from None


def source_name(ref: Union[str, Path]) -> str:
    """Display name of a document: its ``name`` field when present, else the reference."""
    try:
        doc = json.loads(read_source(ref))
    except (DocumentError, json.JSONDecodeError):
        return str(ref)
    return doc.get("name", str(ref)) if isinstance(doc, dict) else str(ref)
