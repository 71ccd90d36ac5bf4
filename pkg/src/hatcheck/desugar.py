"""Translation from the temporal syntax to the regex syntax.

The translation is compositional at the language level.  The one
non-compositional case is an until whose left operand is itself temporal; it
is handled by the classical route (formula -> derivative automaton over the
formula's atom combinations -> regex via state elimination).  Untils with a
single-position left side, which is every until the surface aliases produce,
translate directly:

    A U B  =  class(A)* ; (tr(B) /\ nonempty)
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Union

from .sfa import (
    SRL_ANY,
    SRL_EMPTY,
    SRL_EPS,
    Sfa,
    SfaAnd,
    SfaConcat,
    SfaEvent,
    SfaNext,
    SfaNot,
    SfaOr,
    SfaUntil,
    Srl,
    SrlAnd,
    SrlConcat,
    SrlDiff,
    SrlEvent,
    SrlOr,
    SrlStar,
    SymbolicEvent,
    nullable_sfa,
    srl_all,
)


def _nonempty() -> Srl:
    return SrlConcat(SRL_ANY, srl_all())


def _simplify_or(l: Srl, r: Srl) -> Srl:
    if isinstance(l, type(SRL_EMPTY)):
        return r
    if isinstance(r, type(SRL_EMPTY)):
        return l
    return SrlOr(l, r)


def _simplify_concat(l: Srl, r: Srl) -> Srl:
    if isinstance(l, type(SRL_EMPTY)) or isinstance(r, type(SRL_EMPTY)):
        return SRL_EMPTY
    if isinstance(l, type(SRL_EPS)):
        return r
    if isinstance(r, type(SRL_EPS)):
        return l
    return SrlConcat(l, r)


def is_local(a: Sfa) -> bool:
    """True when a constrains a single position: boolean over event atoms."""
    match a:
        case SfaEvent(_):
            return True
        case SfaNot(x):
            return is_local(x)
        case SfaAnd(l, r) | SfaOr(l, r):
            return is_local(l) and is_local(r)
        case _:
            return False


def class_expr(a: Sfa) -> Srl:
    """The set of single-event traces satisfying a local formula."""
    match a:
        case SfaEvent(ev):
            return SrlEvent(ev)
        case SfaNot(x):
            return SrlDiff(SRL_ANY, class_expr(x))
        case SfaAnd(l, r):
            return SrlAnd(class_expr(l), class_expr(r))
        case SfaOr(l, r):
            return SrlOr(class_expr(l), class_expr(r))
    raise TypeError(f"not a local formula: {a}")


def desugar(a: Sfa) -> Srl:
    """Language-preserving translation of the temporal form into the regex form."""
    match a:
        case SfaEvent(ev):
            return SrlConcat(SrlEvent(ev), srl_all())
        case SfaNot(x):
            return SrlDiff(srl_all(), desugar(x))
        case SfaAnd(l, r):
            return SrlAnd(desugar(l), desugar(r))
        case SfaOr(l, r):
            return SrlOr(desugar(l), desugar(r))
        case SfaConcat(l, r):
            return _simplify_concat(desugar(l), desugar(r))
        case SfaNext(x):
            step = SrlConcat(SRL_ANY, desugar(x))
            return SrlOr(step, SRL_EPS) if nullable_sfa(x) else step
        case SfaUntil(l, r):
            if is_local(l):
                body = SrlAnd(desugar(r), _nonempty())
                return SrlConcat(SrlStar(class_expr(l)), body)
            return _until_via_automaton(a)
    raise TypeError(a)


# ---------------------------------------------------------------------------
# Fallback: formula -> derivative automaton -> regex.
#
# States are formulas over an extended node set with explicit universe and
# empty-language constants.  Letters are subsets of the formula's atoms (an
# event either matches an atom or does not, so the subsets partition the
# space of concrete events).


@dataclass(frozen=True)
class _All:
    pass


@dataclass(frozen=True)
class _None:
    pass


_ALL = _All()
_NONE = _None()

_F = Union[Sfa, _All, _None]


def _mk_not(x: _F) -> _F:
    if isinstance(x, _All):
        return _NONE
    if isinstance(x, _None):
        return _ALL
    if isinstance(x, SfaNot):
        return x.arg
    return SfaNot(x)


def _mk_and(l: _F, r: _F) -> _F:
    if isinstance(l, _None) or isinstance(r, _None):
        return _NONE
    if isinstance(l, _All):
        return r
    if isinstance(r, _All):
        return l
    if l == r:
        return l
    return SfaAnd(l, r)


def _mk_or(l: _F, r: _F) -> _F:
    if isinstance(l, _All) or isinstance(r, _All):
        return _ALL
    if isinstance(l, _None):
        return r
    if isinstance(r, _None):
        return l
    if l == r:
        return l
    return SfaOr(l, r)


def _mk_concat(l: _F, r: _F) -> _F:
    if isinstance(l, _None) or isinstance(r, _None):
        return _NONE
    if isinstance(l, (_All,)) and isinstance(r, (_All,)):
        return _ALL
    return SfaConcat(l, r)  # type: ignore[arg-type]


def _nullable(a: _F) -> bool:
    if isinstance(a, _All):
        return True
    if isinstance(a, _None):
        return False
    return nullable_sfa(a)


def _derive(a: _F, letter: frozenset[SymbolicEvent]) -> _F:
    match a:
        case _All():
            return _ALL
        case _None():
            return _NONE
        case SfaEvent(ev):
            return _ALL if ev in letter else _NONE
        case SfaNot(x):
            return _mk_not(_derive(x, letter))
        case SfaAnd(l, r):
            return _mk_and(_derive(l, letter), _derive(r, letter))
        case SfaOr(l, r):
            return _mk_or(_derive(l, letter), _derive(r, letter))
        case SfaNext(x):
            return x
        case SfaUntil(l, r):
            keep = _mk_and(_derive(l, letter), a)
            return _mk_or(_derive(r, letter), keep)
        case SfaConcat(l, r):
            left = _mk_concat(_derive(l, letter), r)
            if _nullable(l):
                return _mk_or(left, _derive(r, letter))
            return left
    raise TypeError(a)


def _letter_expr(letter: frozenset[SymbolicEvent], atoms: list[SymbolicEvent]) -> Srl:
    pos = [SrlEvent(ev) for ev in atoms if ev in letter]
    neg = [SrlEvent(ev) for ev in atoms if ev not in letter]
    expr: Srl
    if pos:
        expr = pos[0]
        for p in pos[1:]:
            expr = SrlAnd(expr, p)
    else:
        expr = SRL_ANY
    if neg:
        negu: Srl = neg[0]
        for n in neg[1:]:
            negu = SrlOr(negu, n)
        expr = SrlDiff(expr, negu)
    return expr


def _until_via_automaton(a: Sfa) -> Srl:
    from .sfa import formula_events

    atoms = formula_events(a)
    letters = [frozenset(c) for k in range(len(atoms) + 1)
               for c in itertools.combinations(atoms, k)]

    # Derivative closure: a deterministic automaton whose states are formulas.
    states: dict[_F, int] = {}
    order: list[_F] = []

    def intern(f: _F) -> int:
        if f not in states:
            states[f] = len(order)
            order.append(f)
        return states[f]

    start = intern(a)
    edges: dict[tuple[int, int], list[frozenset[SymbolicEvent]]] = {}
    work = [start]
    seen = {start}
    while work:
        s = work.pop()
        f = order[s]
        for letter in letters:
            t = intern(_derive(f, letter))
            edges.setdefault((s, t), []).append(letter)
            if t not in seen:
                seen.add(t)
                work.append(t)

    accepting = {i for i, f in enumerate(order) if _nullable(f)}

    # State elimination over regex-labeled edges.
    n = len(order)
    init, final = n, n + 1
    label: dict[tuple[int, int], Srl] = {}

    def add_label(p: int, q: int, r: Srl) -> None:
        if (p, q) in label:
            label[(p, q)] = SrlOr(label[(p, q)], r)
        else:
            label[(p, q)] = r

    for (p, q), letts in edges.items():
        expr: Srl = _letter_expr(letts[0], atoms)
        for le in letts[1:]:
            expr = SrlOr(expr, _letter_expr(le, atoms))
        add_label(p, q, expr)
    add_label(init, start, SRL_EPS)
    for acc in accepting:
        add_label(acc, final, SRL_EPS)

    for s in range(n):
        loop = label.pop((s, s), None)
        ins = [(p, r) for (p, q), r in label.items() if q == s and p != s]
        outs = [(q, r) for (p, q), r in label.items() if p == s and q != s]
        for (p, _) in ins:
            label.pop((p, s), None)
        for (q, _) in outs:
            label.pop((s, q), None)
        for p, rin in ins:
            for q, rout in outs:
                mid: Srl = rout if loop is None else _simplify_concat(SrlStar(loop), rout)
                add_label(p, q, _simplify_concat(rin, mid))

    return label.get((init, final), SRL_EMPTY)
