"""Core term language: base/basic types, values, and computations in MNF.

Programs are monadic normal form: every operator, constructor, and function
argument is a value.  Nested lets from the surface syntax are flattened by
the parser, so checkers downstream never see a `Let` whose bound term is
itself a `Let`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union


# ---------------------------------------------------------------------------
# Source spans (for diagnostics)


@dataclass(frozen=True)
class Span:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NO_SPAN = Span(0, 0)


# ---------------------------------------------------------------------------
# Base and basic types


@dataclass(frozen=True)
class BaseType:
    """unit | bool | nat | int | opaque sort (equality only)."""

    kind: str
    sort: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in ("unit", "bool", "nat", "int", "opaque"):
            raise ValueError(f"bad base type kind {self.kind!r}")
        if (self.kind == "opaque") != (self.sort is not None):
            raise ValueError("opaque base types carry a sort name, others do not")

    @property
    def is_numeric(self) -> bool:
        return self.kind in ("int", "nat")

    def __str__(self) -> str:
        return self.sort if self.kind == "opaque" else self.kind


UNIT = BaseType("unit")
BOOL = BaseType("bool")
INT = BaseType("int")
NAT = BaseType("nat")


def opaque(sort: str) -> BaseType:
    return BaseType("opaque", sort)


def base_compatible(a: BaseType, b: BaseType) -> bool:
    """nat is carried as int everywhere past the parser; tolerate both."""
    if a == b:
        return True
    return a.is_numeric and b.is_numeric


@dataclass(frozen=True)
class FunType:
    dom: "BasicType"
    cod: "BasicType"

    def __str__(self) -> str:
        d = f"({self.dom})" if isinstance(self.dom, FunType) else str(self.dom)
        return f"{d} -> {self.cod}"


BasicType = Union[BaseType, FunType]


def fun_type(doms: list[BasicType], cod: BasicType) -> BasicType:
    out = cod
    for d in reversed(doms):
        out = FunType(d, out)
    return out


# ---------------------------------------------------------------------------
# Ground constants

class UnitValue:
    """The sole inhabitant of unit; compares equal across instances."""

    def __repr__(self) -> str:
        return "()"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, UnitValue)

    def __hash__(self) -> int:
        return hash("()")


UNIT_VALUE = UnitValue()


@dataclass(frozen=True)
class Sym:
    """A ground inhabitant of an opaque sort; carries only equality."""

    sort: str
    name: str

    def __str__(self) -> str:
        return self.name


def const_base_type(c: object) -> BaseType:
    if isinstance(c, bool):
        return BOOL
    if isinstance(c, int):
        return INT
    if isinstance(c, Sym):
        return opaque(c.sort)
    if isinstance(c, UnitValue) or c is UNIT_VALUE:
        return UNIT
    raise TypeError(f"not a ground constant: {c!r}")


# ---------------------------------------------------------------------------
# Values and terms


@dataclass(frozen=True)
class Const:
    value: object  # int | bool | Sym | UNIT_VALUE

    def __str__(self) -> str:
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return str(self.value)


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Ctor:
    name: str
    args: tuple["Value", ...] = ()

    def __str__(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({', '.join(map(str, self.args))})"


@dataclass(frozen=True)
class Lambda:
    param: str
    annot: object  # RefinementType (from hats); kept untyped here to avoid a cycle
    body: "Term"

    def __str__(self) -> str:
        return f"fun ({self.param}) -> {self.body}"


@dataclass(frozen=True)
class Fix:
    fname: str
    fannot: object
    param: str
    pannot: object
    body: "Term"

    def __str__(self) -> str:
        return f"fix {self.fname} ({self.param}) -> {self.body}"


Value = Union[Const, Var, Ctor, Lambda, Fix]


@dataclass(frozen=True)
class Val:
    value: Value
    span: Span = NO_SPAN

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class LetEff:
    name: str
    op: str
    args: tuple[Value, ...]
    body: "Term"
    span: Span = NO_SPAN

    def __str__(self) -> str:
        args = " ".join(map(str, self.args))
        return f"let {self.name} = {self.op} {args} in {self.body}"


@dataclass(frozen=True)
class LetPure:
    name: str
    op: str
    args: tuple[Value, ...]
    body: "Term"
    span: Span = NO_SPAN

    def __str__(self) -> str:
        args = " ".join(map(str, self.args))
        return f"let {self.name} = {self.op} {args} in {self.body}"


@dataclass(frozen=True)
class LetApp:
    name: str
    fn: Value
    arg: Value
    body: "Term"
    span: Span = NO_SPAN

    def __str__(self) -> str:
        return f"let {self.name} = {self.fn} {self.arg} in {self.body}"


@dataclass(frozen=True)
class Let:
    name: str
    bound: "Term"
    body: "Term"
    span: Span = NO_SPAN

    def __str__(self) -> str:
        return f"let {self.name} = ({self.bound}) in {self.body}"


@dataclass(frozen=True)
class MatchBranch:
    ctor: str
    binders: tuple[str, ...]
    body: "Term"


@dataclass(frozen=True)
class Match:
    scrutinee: Value
    branches: tuple[MatchBranch, ...]
    span: Span = NO_SPAN

    def __str__(self) -> str:
        bs = " | ".join(f"{b.ctor} -> {b.body}" for b in self.branches)
        return f"match {self.scrutinee} with {bs} end"


Term = Union[Val, LetEff, LetPure, LetApp, Let, Match]


def term_size(t: Term) -> int:
    match t:
        case Val(v):
            return 1 + value_size(v)
        case LetEff(_, _, args, body) | LetPure(_, _, args, body):
            return 1 + len(args) + term_size(body)
        case LetApp(_, fn, arg, body):
            return 1 + value_size(fn) + value_size(arg) + term_size(body)
        case Let(_, bound, body):
            return 1 + term_size(bound) + term_size(body)
        case Match(scrut, branches):
            return 1 + value_size(scrut) + sum(term_size(b.body) for b in branches)
    raise TypeError(t)


def value_size(v: Value) -> int:
    match v:
        case Const(_) | Var(_):
            return 1
        case Ctor(_, args):
            return 1 + sum(value_size(a) for a in args)
        case Lambda(_, _, body):
            return 1 + term_size(body)
        case Fix(_, _, _, _, body):
            return 2 + term_size(body)
    raise TypeError(v)


def term_free_vars(t: Term) -> set[str]:
    match t:
        case Val(v):
            return value_free_vars(v)
        case LetEff(x, _, args, body) | LetPure(x, _, args, body):
            out: set[str] = set()
            for a in args:
                out |= value_free_vars(a)
            return out | (term_free_vars(body) - {x})
        case LetApp(x, fn, arg, body):
            return (
                value_free_vars(fn)
                | value_free_vars(arg)
                | (term_free_vars(body) - {x})
            )
        case Let(x, bound, body):
            return term_free_vars(bound) | (term_free_vars(body) - {x})
        case Match(scrut, branches):
            out = value_free_vars(scrut)
            for b in branches:
                out |= term_free_vars(b.body) - set(b.binders)
            return out
    raise TypeError(t)


def value_free_vars(v: Value) -> set[str]:
    match v:
        case Const(_):
            return set()
        case Var(name):
            return {name}
        case Ctor(_, args):
            out: set[str] = set()
            for a in args:
                out |= value_free_vars(a)
            return out
        case Lambda(param, _, body):
            return term_free_vars(body) - {param}
        case Fix(fname, _, param, _, body):
            return term_free_vars(body) - {fname, param}
    raise TypeError(v)


# ---------------------------------------------------------------------------
# Capture-avoiding value substitution into terms.
#
# Parse-time alpha-normalization makes every binder distinct, so capture can
# only happen when the runtime substitutes open lambdas; we rename defensively
# anyway.

_fresh_counter = [0]


def fresh_name(base: str) -> str:
    _fresh_counter[0] += 1
    return f"{base}%{_fresh_counter[0]}"


def subst_value(v: Value, x: str, w: Value) -> Value:
    match v:
        case Const(_):
            return v
        case Var(name):
            return w if name == x else v
        case Ctor(name, args):
            return Ctor(name, tuple(subst_value(a, x, w) for a in args))
        case Lambda(param, annot, body):
            if param == x:
                return v
            if param in value_free_vars(w):
                np = fresh_name(param)
                body = subst_term(body, param, Var(np))
                param = np
            return Lambda(param, annot, subst_term(body, x, w))
        case Fix(fname, fannot, param, pannot, body):
            if x in (fname, param):
                return v
            bound = [fname, param]
            wfv = value_free_vars(w)
            for i, b in enumerate(bound):
                if b in wfv:
                    nb = fresh_name(b)
                    body = subst_term(body, b, Var(nb))
                    bound[i] = nb
            return Fix(bound[0], fannot, bound[1], pannot, subst_term(body, x, w))
    raise TypeError(v)


def subst_term(t: Term, x: str, w: Value) -> Term:
    wfv = value_free_vars(w)

    def freshen(binder: str, body: Term) -> tuple[str, Term]:
        if binder in wfv:
            nb = fresh_name(binder)
            return nb, subst_term(body, binder, Var(nb))
        return binder, body

    match t:
        case Val(v, span):
            return Val(subst_value(v, x, w), span)
        case LetEff(y, op, args, body, span):
            args2 = tuple(subst_value(a, x, w) for a in args)
            if y == x:
                return LetEff(y, op, args2, body, span)
            y, body = freshen(y, body)
            return LetEff(y, op, args2, subst_term(body, x, w), span)
        case LetPure(y, op, args, body, span):
            args2 = tuple(subst_value(a, x, w) for a in args)
            if y == x:
                return LetPure(y, op, args2, body, span)
            y, body = freshen(y, body)
            return LetPure(y, op, args2, subst_term(body, x, w), span)
        case LetApp(y, fn, arg, body, span):
            fn2 = subst_value(fn, x, w)
            arg2 = subst_value(arg, x, w)
            if y == x:
                return LetApp(y, fn2, arg2, body, span)
            y, body = freshen(y, body)
            return LetApp(y, fn2, arg2, subst_term(body, x, w), span)
        case Let(y, bound, body, span):
            bound2 = subst_term(bound, x, w)
            if y == x:
                return Let(y, bound2, body, span)
            y, body = freshen(y, body)
            return Let(y, bound2, subst_term(body, x, w), span)
        case Match(scrut, branches, span):
            scrut2 = subst_value(scrut, x, w)
            out = []
            for b in branches:
                if x in b.binders:
                    out.append(b)
                    continue
                binders = list(b.binders)
                body = b.body
                for i, y in enumerate(binders):
                    if y in wfv:
                        ny = fresh_name(y)
                        body = subst_term(body, y, Var(ny))
                        binders[i] = ny
                out.append(MatchBranch(b.ctor, tuple(binders), subst_term(body, x, w)))
            return Match(scrut2, tuple(out), span)
    raise TypeError(t)
