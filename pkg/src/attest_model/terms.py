"""Symbolic terms, PCR hash chains and adversary derivability.

Terms are immutable and hashable.  Atoms come in three disjoint families:
public atoms (plus the reset constant ``rst``), nonces and private keys.
Compound terms are pairs, hashes and signatures.

Textual form::

    pub:<name>  nonce:<name>  key:<name>  rst
    (pair x y)  (hash x)  (sig m k)  (seq v1 ... vn)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional


class Term:
    """Base class of all terms."""

    __slots__ = ()


@dataclass(frozen=True)
class Pub(Term):
    name: str


@dataclass(frozen=True)
class Nonce(Term):
    name: str


@dataclass(frozen=True)
class Key(Term):
    name: str


@dataclass(frozen=True)
class Rst(Term):
    pass


@dataclass(frozen=True)
class Pair(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Hash(Term):
    inner: Term


@dataclass(frozen=True)
class Sig(Term):
    payload: Term
    key: Term


RST = Rst()

ATOM_TYPES = (Pub, Nonce, Key, Rst)


def is_atom(t: Term) -> bool:
    return isinstance(t, ATOM_TYPES)


def is_public(t: Term) -> bool:
    return isinstance(t, (Pub, Rst))


def tuple_term(items: Iterable[Term]) -> Term:
    """Right-nested pairing: (a, b, c) -> (pair a (pair b c)).  One item is itself."""
    items = list(items)
    if not items:
        raise ValueError("empty tuple term")
    out = items[-1]
    for t in reversed(items[:-1]):
        out = Pair(t, out)
    return out


def untuple(t: Term, n: int) -> Optional[list[Term]]:
    """Split a right-nested tuple into exactly ``n`` components."""
    out: list[Term] = []
    for _ in range(n - 1):
        if not isinstance(t, Pair):
            return None
        out.append(t.left)
        t = t.right
    out.append(t)
    return out


# -- hash chains ------------------------------------------------------------


def extend(prev: Term, value: Term) -> Term:
    """The PCR value after extending ``value`` into a register holding ``prev``."""
    return Hash(Pair(value, prev))


def seq_of(values: Iterable[Term]) -> Term:
    chain: Term = RST
    for v in values:
        chain = extend(chain, v)
    return chain


def seq_view(t: Term) -> Optional[list[Term]]:
    """Inverse of :func:`seq_of`; ``None`` when ``t`` is not a chain."""
    rev: list[Term] = []
    while isinstance(t, Hash):
        if not isinstance(t.inner, Pair):
            return None
        rev.append(t.inner.left)
        t = t.inner.right
    if t != RST:
        return None
    rev.reverse()
    return rev


def contains(chain: Term, v: Term) -> bool:
    view = seq_view(chain)
    return view is not None and v in view


def contained_before(chain: Term, a: Term, b: Term) -> bool:
    """True iff some occurrence of ``a`` precedes some occurrence of ``b``."""
    view = seq_view(chain)
    if view is None:
        return False
    first_a = next((i for i, x in enumerate(view) if x == a), None)
    if first_a is None:
        return False
    return any(x == b for x in view[first_a + 1:])


# -- derivability -------------------------------------------------------------


def analyze(base: Iterable[Term]) -> frozenset[Term]:
    """Close a set of known terms under projection and payload extraction."""
    known = set(base)
    todo = list(known)
    while todo:
        t = todo.pop()
        parts: tuple[Term, ...] = ()
        if isinstance(t, Pair):
            parts = (t.left, t.right)
        elif isinstance(t, Sig):
            parts = (t.payload,)
        for p in parts:
            if p not in known:
                known.add(p)
                todo.append(p)
    return frozenset(known)


def synthesizable(known: frozenset[Term], goal: Term) -> bool:
    if goal in known or is_public(goal):
        return True
    if isinstance(goal, Pair):
        return synthesizable(known, goal.left) and synthesizable(known, goal.right)
    if isinstance(goal, Hash):
        return synthesizable(known, goal.inner)
    if isinstance(goal, Sig):
        return synthesizable(known, goal.payload) and synthesizable(known, goal.key)
    return False


def derivable(base: Iterable[Term], goal: Term) -> bool:
    """Can the adversary build ``goal`` from ``base`` plus every public atom?

    Pairs may be projected and signature payloads read off; hashes are
    one-way and nonces/keys are only available when given.
    """
    return synthesizable(analyze(base), goal)


# -- text form ----------------------------------------------------------------


class TermSyntaxError(ValueError):
    pass


def format_term(t: Term, sugar: bool = True) -> str:
    if isinstance(t, Rst):
        return "rst"
    if isinstance(t, Pub):
        return f"pub:{t.name}"
    if isinstance(t, Nonce):
        return f"nonce:{t.name}"
    if isinstance(t, Key):
        return f"key:{t.name}"
    if sugar and isinstance(t, Hash):
        view = seq_view(t)
        if view is not None:
            return "(seq " + " ".join(format_term(v, sugar) for v in view) + ")"
    if isinstance(t, Pair):
        return f"(pair {format_term(t.left, sugar)} {format_term(t.right, sugar)})"
    if isinstance(t, Hash):
        return f"(hash {format_term(t.inner, sugar)})"
    if isinstance(t, Sig):
        return f"(sig {format_term(t.payload, sugar)} {format_term(t.key, sugar)})"
    raise TypeError(f"not a term: {t!r}")


def _tokens(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def parse_term(text: str) -> Term:
    toks = _tokens(text)
    if not toks:
        raise TermSyntaxError("empty term")
    pos, t = _parse(toks, 0)
    if pos != len(toks):
        raise TermSyntaxError(f"trailing input after term: {' '.join(toks[pos:])}")
    return t


def _atom(tok: str) -> Term:
    if tok == "rst":
        return RST
    kind, sep, name = tok.partition(":")
    if not sep or not name:
        raise TermSyntaxError(f"bad atom {tok!r}")
    if kind == "pub":
        return Pub(name)
    if kind == "nonce":
        return Nonce(name)
    if kind == "key":
        return Key(name)
    raise TermSyntaxError(f"unknown atom kind in {tok!r}")


_ARITY = {"pair": 2, "hash": 1, "sig": 2}


def _parse(toks: list[str], pos: int) -> tuple[int, Term]:
    if pos >= len(toks):
        raise TermSyntaxError("unexpected end of term")
    tok = toks[pos]
    if tok == ")":
        raise TermSyntaxError("unexpected ')'")
    if tok != "(":
        return pos + 1, _atom(tok)
    if pos + 1 >= len(toks):
        raise TermSyntaxError("unexpected end after '('")
    head = toks[pos + 1]
    pos += 2
    args: list[Term] = []
    while pos < len(toks) and toks[pos] != ")":
        pos, a = _parse(toks, pos)
        args.append(a)
    if pos >= len(toks):
        raise TermSyntaxError("missing ')'")
    pos += 1
    if head == "seq":
        return pos, seq_of(args)
    if head not in _ARITY:
        raise TermSyntaxError(f"unknown constructor {head!r}")
    if len(args) != _ARITY[head]:
        raise TermSyntaxError(f"{head} takes {_ARITY[head]} arguments, got {len(args)}")
    if head == "pair":
        return pos, Pair(*args)
    if head == "hash":
        return pos, Hash(args[0])
    return pos, Sig(args[0], args[1])
