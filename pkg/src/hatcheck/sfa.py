"""Symbolic finite automata as temporal formulas over effect events.

Two syntaxes share the event leaves: the temporal form (negation,
conjunction, disjunction, concatenation, next, until) used by the surface
language, and the regex form (any, empty, epsilon, and/or, concat,
difference, star) that the checker compiles to.  Acceptance implements the
trace-language denotation literally, including the concatenation split and
the until clause.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Union

from .ast import BaseType
from .qualifiers import (
    FALSE,
    TRUE,
    Literal,
    LVar,
    Model,
    Qualifier,
    eval_qualifier,
    free_vars,
    lit_free_vars,
    qand,
    substitute,
    substitute_many,
)
from .runtime import Trace


class UnboundContextVariable(Exception):
    pass


# ---------------------------------------------------------------------------
# Symbolic events


@dataclass(frozen=True)
class OpEvent:
    """One effectful-operator invocation; argvars and `nu` are local binders."""

    op: str
    argvars: tuple[str, ...]
    qual: Qualifier

    def __str__(self) -> str:
        args = " ".join(self.argvars)
        return f"<{self.op} {args} | {self.qual}>" if args else f"<{self.op} | {self.qual}>"


@dataclass(frozen=True)
class TestEvent:
    """Constrains pure values only; still consumes one event position."""

    qual: Qualifier

    def __str__(self) -> str:
        return f"<|{self.qual}|>"


SymbolicEvent = Union[OpEvent, TestEvent]

NU = "nu"

TOP_TEST = TestEvent(TRUE)


def event_local_names(ev: SymbolicEvent) -> set[str]:
    if isinstance(ev, OpEvent):
        return set(ev.argvars) | {NU}
    return set()


def event_free_vars(ev: SymbolicEvent) -> set[str]:
    return free_vars(ev.qual) - event_local_names(ev)


def event_subst(ev: SymbolicEvent, env: Mapping[str, Literal]) -> SymbolicEvent:
    """Substitutes context variables; event-local binders shadow."""
    env2 = {k: v for k, v in env.items() if k not in event_local_names(ev)}
    if not env2:
        return ev
    # Local binders never collide with substituted terms: the parser
    # canonicalizes argvars into the $-namespace which surface identifiers
    # cannot mention.
    if isinstance(ev, OpEvent):
        return OpEvent(ev.op, ev.argvars, substitute_many(ev.qual, env2))
    return TestEvent(substitute_many(ev.qual, env2))


def normalize_event(ev: OpEvent, arity: int) -> OpEvent:
    """Renames argvars to the canonical $a0..$a{n-1} namespace."""
    if len(ev.argvars) != arity:
        raise ValueError(f"event {ev} has arity {len(ev.argvars)}, operator wants {arity}")
    canon = tuple(f"$a{i}" for i in range(arity))
    if ev.argvars == canon:
        return ev
    env = {old: LVar(new) for old, new in zip(ev.argvars, canon) if old != new}
    return OpEvent(ev.op, canon, substitute_many(ev.qual, env))


# ---------------------------------------------------------------------------
# Temporal syntax


@dataclass(frozen=True)
class SfaEvent:
    event: SymbolicEvent

    def __str__(self) -> str:
        return str(self.event)


@dataclass(frozen=True)
class SfaNot:
    arg: "Sfa"

    def __str__(self) -> str:
        return f"~({self.arg})"


@dataclass(frozen=True)
class SfaAnd:
    lhs: "Sfa"
    rhs: "Sfa"

    def __str__(self) -> str:
        return f"({self.lhs} /\\ {self.rhs})"


@dataclass(frozen=True)
class SfaOr:
    lhs: "Sfa"
    rhs: "Sfa"

    def __str__(self) -> str:
        return f"({self.lhs} \\/ {self.rhs})"


@dataclass(frozen=True)
class SfaConcat:
    lhs: "Sfa"
    rhs: "Sfa"

    def __str__(self) -> str:
        return f"({self.lhs} ; {self.rhs})"


@dataclass(frozen=True)
class SfaNext:
    arg: "Sfa"

    def __str__(self) -> str:
        return f"X({self.arg})"


@dataclass(frozen=True)
class SfaUntil:
    lhs: "Sfa"
    rhs: "Sfa"

    def __str__(self) -> str:
        return f"({self.lhs} U {self.rhs})"


Sfa = Union[SfaEvent, SfaNot, SfaAnd, SfaOr, SfaConcat, SfaNext, SfaUntil]


# Aliases: purely syntactic, idempotent expansions.


def sfa_top() -> Sfa:
    """Accepts any single event (the atom used by F/G/last)."""
    return SfaEvent(TOP_TEST)


def sfa_final(a: Sfa) -> Sfa:
    return SfaUntil(sfa_top(), a)


def sfa_global(a: Sfa) -> Sfa:
    return SfaNot(sfa_final(SfaNot(a)))


def sfa_last() -> Sfa:
    return SfaNot(SfaNext(sfa_top()))


def sfa_all_traces() -> Sfa:
    """The automaton accepting every well-formed trace."""
    return sfa_global(sfa_top())


def sfa_implies(a: Sfa, b: Sfa) -> Sfa:
    return SfaOr(SfaNot(a), b)


def sfa_empty_trace() -> Sfa:
    """Accepts exactly the empty trace."""
    return SfaNot(sfa_top())


def pinned_event(op: str, argvars: tuple[str, ...], pins: Mapping[str, Literal],
                 qual: Qualifier = TRUE) -> OpEvent:
    """Value-pinning sugar: pinned args become equalities in the qualifier."""
    from .qualifiers import LApp, QLit

    conj: list[Qualifier] = [
        QLit(LApp("==", (LVar(var), lit))) for var, lit in pins.items()
    ]
    conj.append(qual)
    return OpEvent(op, argvars, qand(*conj))


# ---------------------------------------------------------------------------
# Regex syntax


@dataclass(frozen=True)
class SrlEvent:
    event: SymbolicEvent

    def __str__(self) -> str:
        return str(self.event)


@dataclass(frozen=True)
class SrlAny:
    def __str__(self) -> str:
        return "."


@dataclass(frozen=True)
class SrlEmpty:
    def __str__(self) -> str:
        return "{}"


@dataclass(frozen=True)
class SrlEps:
    def __str__(self) -> str:
        return "eps"


@dataclass(frozen=True)
class SrlAnd:
    lhs: "Srl"
    rhs: "Srl"

    def __str__(self) -> str:
        return f"({self.lhs} /\\ {self.rhs})"


@dataclass(frozen=True)
class SrlOr:
    lhs: "Srl"
    rhs: "Srl"

    def __str__(self) -> str:
        return f"({self.lhs} \\/ {self.rhs})"


@dataclass(frozen=True)
class SrlConcat:
    lhs: "Srl"
    rhs: "Srl"

    def __str__(self) -> str:
        return f"({self.lhs} ; {self.rhs})"


@dataclass(frozen=True)
class SrlDiff:
    lhs: "Srl"
    rhs: "Srl"

    def __str__(self) -> str:
        return f"({self.lhs} \\ {self.rhs})"


@dataclass(frozen=True)
class SrlStar:
    arg: "Srl"

    def __str__(self) -> str:
        return f"({self.arg})*"


Srl = Union[SrlEvent, SrlAny, SrlEmpty, SrlEps, SrlAnd, SrlOr, SrlConcat, SrlDiff, SrlStar]

SRL_ANY = SrlAny()
SRL_EMPTY = SrlEmpty()
SRL_EPS = SrlEps()


def srl_all() -> Srl:
    return SrlStar(SRL_ANY)


def srl_not(a: Srl) -> Srl:
    return SrlDiff(srl_all(), a)


# ---------------------------------------------------------------------------
# Structural traversal shared by both syntaxes


def formula_events(a: Union[Sfa, Srl]) -> list[SymbolicEvent]:
    """All event leaves in source order, deduplicated structurally."""
    out: list[SymbolicEvent] = []
    seen: set[SymbolicEvent] = set()

    def walk(node: Union[Sfa, Srl]) -> None:
        match node:
            case SfaEvent(ev) | SrlEvent(ev):
                if ev not in seen:
                    seen.add(ev)
                    out.append(ev)
            case SfaNot(x) | SfaNext(x) | SrlStar(x):
                walk(x)
            case (SfaAnd(l, r) | SfaOr(l, r) | SfaConcat(l, r) | SfaUntil(l, r)
                  | SrlAnd(l, r) | SrlOr(l, r) | SrlConcat(l, r) | SrlDiff(l, r)):
                walk(l)
                walk(r)
            case SrlAny() | SrlEmpty() | SrlEps():
                pass
            case _:
                raise TypeError(node)

    walk(a)
    return out


def formula_free_vars(a: Union[Sfa, Srl]) -> set[str]:
    out: set[str] = set()
    for ev in formula_events(a):
        out |= event_free_vars(ev)
    return out


def formula_subst(a: Union[Sfa, Srl], env: Mapping[str, Literal]) -> Union[Sfa, Srl]:
    match a:
        case SfaEvent(ev):
            return SfaEvent(event_subst(ev, env))
        case SrlEvent(ev):
            return SrlEvent(event_subst(ev, env))
        case SfaNot(x):
            return SfaNot(formula_subst(x, env))
        case SfaNext(x):
            return SfaNext(formula_subst(x, env))
        case SfaAnd(l, r):
            return SfaAnd(formula_subst(l, env), formula_subst(r, env))
        case SfaOr(l, r):
            return SfaOr(formula_subst(l, env), formula_subst(r, env))
        case SfaConcat(l, r):
            return SfaConcat(formula_subst(l, env), formula_subst(r, env))
        case SfaUntil(l, r):
            return SfaUntil(formula_subst(l, env), formula_subst(r, env))
        case SrlStar(x):
            return SrlStar(formula_subst(x, env))
        case SrlAnd(l, r):
            return SrlAnd(formula_subst(l, env), formula_subst(r, env))
        case SrlOr(l, r):
            return SrlOr(formula_subst(l, env), formula_subst(r, env))
        case SrlConcat(l, r):
            return SrlConcat(formula_subst(l, env), formula_subst(r, env))
        case SrlDiff(l, r):
            return SrlDiff(formula_subst(l, env), formula_subst(r, env))
        case SrlAny() | SrlEmpty() | SrlEps():
            return a
    raise TypeError(a)


def formula_map_events(a: Union[Sfa, Srl], fn) -> Union[Sfa, Srl]:
    """Rebuilds the formula with fn applied to every event leaf."""
    match a:
        case SfaEvent(ev):
            return SfaEvent(fn(ev))
        case SrlEvent(ev):
            return SrlEvent(fn(ev))
        case SfaNot(x):
            return SfaNot(formula_map_events(x, fn))
        case SfaNext(x):
            return SfaNext(formula_map_events(x, fn))
        case SfaAnd(l, r):
            return SfaAnd(formula_map_events(l, fn), formula_map_events(r, fn))
        case SfaOr(l, r):
            return SfaOr(formula_map_events(l, fn), formula_map_events(r, fn))
        case SfaConcat(l, r):
            return SfaConcat(formula_map_events(l, fn), formula_map_events(r, fn))
        case SfaUntil(l, r):
            return SfaUntil(formula_map_events(l, fn), formula_map_events(r, fn))
        case SrlStar(x):
            return SrlStar(formula_map_events(x, fn))
        case SrlAnd(l, r):
            return SrlAnd(formula_map_events(l, fn), formula_map_events(r, fn))
        case SrlOr(l, r):
            return SrlOr(formula_map_events(l, fn), formula_map_events(r, fn))
        case SrlConcat(l, r):
            return SrlConcat(formula_map_events(l, fn), formula_map_events(r, fn))
        case SrlDiff(l, r):
            return SrlDiff(formula_map_events(l, fn), formula_map_events(r, fn))
        case SrlAny() | SrlEmpty() | SrlEps():
            return a
    raise TypeError(a)


def formula_size(a: Union[Sfa, Srl]) -> int:
    match a:
        case SfaEvent(_) | SrlEvent(_) | SrlAny() | SrlEmpty() | SrlEps():
            return 1
        case SfaNot(x) | SfaNext(x) | SrlStar(x):
            return 1 + formula_size(x)
        case (SfaAnd(l, r) | SfaOr(l, r) | SfaConcat(l, r) | SfaUntil(l, r)
              | SrlAnd(l, r) | SrlOr(l, r) | SrlConcat(l, r) | SrlDiff(l, r)):
            return 1 + formula_size(l) + formula_size(r)
    raise TypeError(a)


# ---------------------------------------------------------------------------
# Ground event matching


def event_matches(ev: SymbolicEvent, concrete_op: str, args: tuple[object, ...],
                  result: object, model: Model,
                  domains: Optional[Mapping[str, list[object]]] = None) -> bool:
    match ev:
        case TestEvent(q):
            return eval_qualifier(q, {}, model, domains)
        case OpEvent(op, argvars, q):
            if op != concrete_op or len(argvars) != len(args):
                return False
            env = dict(zip(argvars, args))
            env[NU] = result
            return eval_qualifier(q, env, model, domains)
    raise TypeError(ev)


# ---------------------------------------------------------------------------
# Acceptance: alpha, i |= A


def nullable_sfa(a: Sfa) -> bool:
    """Whether the empty trace satisfies the temporal formula."""
    match a:
        case SfaEvent(_):
            return False
        case SfaNot(x):
            return not nullable_sfa(x)
        case SfaAnd(l, r):
            return nullable_sfa(l) and nullable_sfa(r)
        case SfaOr(l, r):
            return nullable_sfa(l) or nullable_sfa(r)
        case SfaConcat(l, r):
            return nullable_sfa(l) and nullable_sfa(r)
        case SfaNext(x):
            # At any position of the empty trace every suffix is empty, so
            # stepping forward changes nothing.
            return nullable_sfa(x)
        case SfaUntil(_, _):
            return False
    raise TypeError(a)


def accepts(alpha: Trace, a: Sfa, sigma: Optional[Mapping[str, Literal]] = None,
            model: Model = Model(),
            domains: Optional[Mapping[str, list[object]]] = None) -> bool:
    """alpha, 0 |= sigma(a), evaluated literally from the denotation."""
    closed = formula_subst(a, sigma) if sigma else a
    stray = formula_free_vars(closed)
    if stray:
        raise UnboundContextVariable(", ".join(sorted(stray)))
    memo: dict[tuple[Trace, int, int], bool] = {}

    def ev_match(tr: Trace, i: int, ev: SymbolicEvent) -> bool:
        e = tr[i]
        return event_matches(ev, e.op, e.args, e.result, model, domains)

    def sat(tr: Trace, i: int, node: Sfa) -> bool:
        key = (tr, i, id(node))
        hit = memo.get(key)
        if hit is not None:
            return hit
        match node:
            case SfaEvent(ev):
                res = i < len(tr) and ev_match(tr, i, ev)
            case SfaNot(x):
                res = not sat(tr, i, x)
            case SfaAnd(l, r):
                res = sat(tr, i, l) and sat(tr, i, r)
            case SfaOr(l, r):
                res = sat(tr, i, l) or sat(tr, i, r)
            case SfaNext(x):
                res = sat(tr, min(i + 1, len(tr)), x) if i < len(tr) else sat(tr, i, x)
            case SfaUntil(l, r):
                res = False
                for j in range(i, len(tr)):
                    if sat(tr, j, r) and all(sat(tr, k, l) for k in range(i, j)):
                        res = True
                        break
            case SfaConcat(l, r):
                res = False
                for s in range(i, len(tr) + 1):
                    if sat(tr[i:s], 0, l) and sat(tr[s:], 0, r):
                        res = True
                        break
            case _:
                raise TypeError(node)
        memo[key] = res
        return res

    return sat(alpha, 0, closed)


def accepts_srl(alpha: Trace, a: Srl, sigma: Optional[Mapping[str, Literal]] = None,
                model: Model = Model(),
                domains: Optional[Mapping[str, list[object]]] = None) -> bool:
    """Membership of alpha in the regex denotation of sigma(a)."""
    closed = formula_subst(a, sigma) if sigma else a
    stray = formula_free_vars(closed)
    if stray:
        raise UnboundContextVariable(", ".join(sorted(stray)))
    memo: dict[tuple[Trace, int], bool] = {}

    def mem(tr: Trace, node: Srl) -> bool:
        key = (tr, id(node))
        hit = memo.get(key)
        if hit is not None:
            return hit
        match node:
            case SrlEvent(ev):
                e0 = tr[0] if len(tr) == 1 else None
                res = e0 is not None and event_matches(
                    ev, e0.op, e0.args, e0.result, model, domains
                )
            case SrlAny():
                res = len(tr) == 1
            case SrlEmpty():
                res = False
            case SrlEps():
                res = len(tr) == 0
            case SrlAnd(l, r):
                res = mem(tr, l) and mem(tr, r)
            case SrlOr(l, r):
                res = mem(tr, l) or mem(tr, r)
            case SrlDiff(l, r):
                res = mem(tr, l) and not mem(tr, r)
            case SrlConcat(l, r):
                res = any(mem(tr[:s], l) and mem(tr[s:], r) for s in range(len(tr) + 1))
            case SrlStar(x):
                if len(tr) == 0:
                    res = True
                else:
                    res = any(
                        mem(tr[:s], x) and mem(tr[s:], node) for s in range(1, len(tr) + 1)
                    )
            case _:
                raise TypeError(node)
        memo[key] = res
        return res

    return mem(alpha, closed)
