"""Graphviz DOT export for systems and executions."""

from __future__ import annotations

from typing import Iterable, Optional, Union

from .events import EventPoset
from .measurement import AvoidanceVerdict
from .system import AttestationSystem


def _q(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def system_dot(sys: AttestationSystem, name: str = "system") -> str:
    """Measures edges solid, context edges dotted."""
    lines = [f"digraph {_q(name)} {{", "  rankdir=BT;"]
    for o in sorted(sys.objects):
        shape = "doublecircle" if o == sys.rtm else "ellipse"
        lines.append(f"  {_q(o)} [shape={shape}];")
    for a, b in sorted(sys.measures):
        lines.append(f"  {_q(a)} -> {_q(b)} [style=solid];")
    for a, b in sorted(sys.context):
        lines.append(f"  {_q(a)} -> {_q(b)} [style=dotted];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def execution_dot(
    p: EventPoset,
    verdicts: Iterable[AvoidanceVerdict] = (),
    name: str = "execution",
    starred: Optional[Iterable[str]] = None,
    boxed: Optional[Iterable[str]] = None,
) -> str:
    """Cover edges of ``p``; avoidance events get a star, witness corruptions a box."""
    stars = set(starred or ())
    boxes = set(boxed or ())
    for v in verdicts:
        stars.add(v.event)
        boxes.update(w.corrupted_at for w in v.recent)
        boxes.update(w.corrupted_at for w in v.deep)
    lines = [f"digraph {_q(name)} {{"]
    if len(p):
        lines.append("  rankdir=LR;")
    for e in p.topological_order():
        lab = str(p.labels[e])
        if e in stars:
            lab += " *"
        attrs = [f"label={_q(lab)}"]
        attrs.append("shape=box" if e in boxes else "shape=plaintext")
        lines.append(f"  {_q(e)} [{', '.join(attrs)}];")
    for a, b in p.cover_edges():
        lines.append(f"  {_q(a)} -> {_q(b)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dot(
    obj: Union[EventPoset, AttestationSystem],
    annotations: Iterable[AvoidanceVerdict] = (),
    name: Optional[str] = None,
) -> str:
    if isinstance(obj, AttestationSystem):
        return system_dot(obj, name or "system")
    return execution_dot(obj, annotations, name or "execution")
