"""Basic (unrefined) typing of terms, plus qualifier well-sortedness.

Every annotation reachable from a term is sort-checked; pattern matches
must be exhaustive over the scrutinee's constructors.
"""

from __future__ import annotations

from typing import Mapping, Optional, Union

from .ast import (
    BOOL,
    INT,
    NO_SPAN,
    UNIT,
    BaseType,
    BasicType,
    Const,
    Ctor,
    Fix,
    FunType,
    Lambda,
    Let,
    LetApp,
    LetEff,
    LetPure,
    Match,
    Span,
    Term,
    Val,
    Value,
    Var,
    base_compatible,
    const_base_type,
)
from .hats import HInter, HTriple, RArrow, RBase, RGhost, TypeLike, erase
from .qualifiers import (
    LApp,
    LVar,
    Signature,
    SortMismatch,
    check_qualifier,
    sort_of_literal,
)
from .sfa import NU, OpEvent, TestEvent, formula_events


class BasicError(Exception):
    def __init__(self, reason: str, span: Span = NO_SPAN):
        super().__init__(f"{reason} (at {span})")
        self.reason = reason
        self.span = span


class UnboundVariable(BasicError):
    pass


class TypeMismatch(BasicError):
    def __init__(self, expected: object, found: object, span: Span = NO_SPAN):
        super().__init__(f"expected {expected}, found {found}", span)
        self.expected = expected
        self.found = found


class BadArity(BasicError):
    pass


_COMPARISONS = ("<", "<=", ">", ">=")
_ARITH = ("+", "-", "mod")
_EQ = ("==", "!=")

CTOR_BASIC: dict[str, tuple[tuple[BasicType, ...], BasicType]] = {
    "true": ((), BOOL),
    "false": ((), BOOL),
    "unit": ((), UNIT),
}


def _types_match(a: BasicType, b: BasicType) -> bool:
    if isinstance(a, BaseType) and isinstance(b, BaseType):
        return base_compatible(a, b)
    if isinstance(a, FunType) and isinstance(b, FunType):
        return _types_match(a.dom, b.dom) and _types_match(a.cod, b.cod)
    return False


def check_annotation_sorts(sig: Signature, env: Mapping[str, BaseType],
                           t: TypeLike) -> None:
    """Sort-checks every qualifier and automaton inside a type annotation."""

    def ev_sorts(env2: dict[str, BaseType], a) -> None:
        for ev in formula_events(a):
            if isinstance(ev, OpEvent):
                if ev.op not in sig.eff_ops:
                    raise SortMismatch(f"unknown effectful operator {ev.op!r}")
                doms, cod = sig.eff_ops[ev.op]
                if len(doms) != len(ev.argvars):
                    raise SortMismatch(f"wrong arity in event {ev}")
                e2 = dict(env2)
                e2.update(dict(zip(ev.argvars, doms)))
                e2[NU] = cod
                check_qualifier(sig, e2, ev.qual)
            else:
                check_qualifier(sig, env2, ev.qual)

    def walk(env2: dict[str, BaseType], t2: TypeLike) -> None:
        match t2:
            case RBase(base, qual):
                check_qualifier(sig, {**env2, NU: base}, qual)
            case RArrow(param, dom, cod):
                walk(env2, dom)
                e = dict(env2)
                d = erase(dom)
                if isinstance(d, BaseType):
                    e[param] = d
                walk(e, cod)
            case RGhost(param, base, body):
                walk({**env2, param: base}, body)
            case HTriple(pre, inner, post):
                ev_sorts(env2, pre)
                ev_sorts(env2, post)
                walk(env2, inner)
            case HInter(parts):
                for p in parts:
                    walk(env2, p)
            case _:
                raise TypeError(t2)

    walk({k: v for k, v in env.items()}, t)


def basic_typecheck(sig: Signature, gamma: Mapping[str, BasicType], e: Term,
                    ctor_basic: Optional[Mapping[str, tuple[tuple[BasicType, ...], BasicType]]] = None) -> BasicType:
    """Returns the unique simple type or raises; checks qualifier sorts of
    every annotation reachable from e."""
    ctors = dict(CTOR_BASIC)
    if ctor_basic:
        ctors.update(ctor_basic)

    def value_type(env: Mapping[str, BasicType], v: Value, span: Span) -> BasicType:
        match v:
            case Const(c):
                try:
                    return const_base_type(c)
                except TypeError:
                    raise BasicError(f"bad constant {c!r}", span)
            case Var(name):
                if name not in env:
                    raise UnboundVariable(f"unbound variable {name!r}", span)
                return env[name]
            case Ctor(name, args):
                if name not in ctors:
                    raise BasicError(f"unknown constructor {name!r}", span)
                doms, cod = ctors[name]
                if len(doms) != len(args):
                    raise BadArity(f"constructor {name} arity", span)
                for d, a in zip(doms, args):
                    found = value_type(env, a, span)
                    if not _types_match(d, found):
                        raise TypeMismatch(d, found, span)
                return cod
            case Lambda(param, annot, body):
                if annot is None:
                    raise BasicError(f"lambda parameter {param} lacks an annotation", span)
                base_env = {k: v2 for k, v2 in env.items() if isinstance(v2, BaseType)}
                check_annotation_sorts(sig, base_env, annot)
                dom = erase(annot)
                cod = term_type({**env, param: dom}, body)
                return FunType(dom, cod)
            case Fix(fname, fannot, param, pannot, body):
                if fannot is None:
                    raise BasicError("fix lacks a type annotation", span)
                base_env = {k: v2 for k, v2 in env.items() if isinstance(v2, BaseType)}
                check_annotation_sorts(sig, base_env, fannot)
                ft = erase(fannot)
                if not isinstance(ft, FunType):
                    raise TypeMismatch("a function type", ft, span)
                lam_t = value_type({**env, fname: ft}, Lambda(param, pannot, body), span)
                if not _types_match(lam_t, ft):
                    raise TypeMismatch(ft, lam_t, span)
                return ft
        raise TypeError(v)

    def pure_result(env: Mapping[str, BasicType], op: str,
                    args: list[BasicType], span: Span) -> BasicType:
        if op in _ARITH:
            if len(args) != 2:
                raise BadArity(f"{op} expects 2 arguments", span)
            for a in args:
                if not (isinstance(a, BaseType) and a.is_numeric):
                    raise TypeMismatch(INT, a, span)
            return INT
        if op in _COMPARISONS:
            if len(args) != 2:
                raise BadArity(f"{op} expects 2 arguments", span)
            for a in args:
                if not (isinstance(a, BaseType) and a.is_numeric):
                    raise TypeMismatch(INT, a, span)
            return BOOL
        if op in _EQ:
            if len(args) != 2:
                raise BadArity(f"{op} expects 2 arguments", span)
            if not _types_match(args[0], args[1]):
                raise TypeMismatch(args[0], args[1], span)
            return BOOL
        if op in sig.pure_ops:
            doms, cod = sig.pure_ops[op]
            if len(doms) != len(args):
                raise BadArity(f"{op} expects {len(doms)} arguments", span)
            for d, a in zip(doms, args):
                if not _types_match(d, a):
                    raise TypeMismatch(d, a, span)
            return cod
        raise BasicError(f"unknown pure operator {op!r}", span)

    def term_type(env: Mapping[str, BasicType], t: Term) -> BasicType:
        match t:
            case Val(v, span):
                return value_type(env, v, span)
            case LetPure(x, op, args, body, span):
                arg_ts = [value_type(env, a, span) for a in args]
                res = pure_result(env, op, arg_ts, span)
                return term_type({**env, x: res}, body)
            case LetEff(x, op, args, body, span):
                if op not in sig.eff_ops:
                    raise BasicError(f"unknown effectful operator {op!r}", span)
                doms, cod = sig.eff_ops[op]
                if len(doms) != len(args):
                    raise BadArity(f"{op} expects {len(doms)} arguments", span)
                for d, a in zip(doms, args):
                    found = value_type(env, a, span)
                    if not _types_match(d, found):
                        raise TypeMismatch(d, found, span)
                return term_type({**env, x: cod}, body)
            case LetApp(x, fn, arg, body, span):
                fn_t = value_type(env, fn, span)
                if not isinstance(fn_t, FunType):
                    raise TypeMismatch("a function", fn_t, span)
                arg_t = value_type(env, arg, span)
                if not _types_match(fn_t.dom, arg_t):
                    raise TypeMismatch(fn_t.dom, arg_t, span)
                return term_type({**env, x: fn_t.cod}, body)
            case Let(x, bound, body, span):
                bt = term_type(env, bound)
                return term_type({**env, x: bt}, body)
            case Match(scrut, branches, span):
                st = value_type(env, scrut, span)
                if not isinstance(st, BaseType):
                    raise TypeMismatch("a base-typed scrutinee", st, span)
                covering = {name for name, (_, cod) in ctors.items()
                            if isinstance(cod, BaseType) and base_compatible(cod, st)}
                seen: set[str] = set()
                result: Optional[BasicType] = None
                for br in branches:
                    if br.ctor not in ctors:
                        raise BasicError(f"unknown constructor {br.ctor!r}", span)
                    doms, cod = ctors[br.ctor]
                    if not (isinstance(cod, BaseType) and base_compatible(cod, st)):
                        raise TypeMismatch(st, cod, span)
                    if len(doms) != len(br.binders):
                        raise BadArity(f"branch {br.ctor} binder count", span)
                    seen.add(br.ctor)
                    env2 = dict(env)
                    env2.update(dict(zip(br.binders, doms)))
                    bt = term_type(env2, br.body)
                    if result is None:
                        result = bt
                    elif not _types_match(result, bt):
                        raise TypeMismatch(result, bt, span)
                missing = covering - seen
                if missing:
                    raise BasicError(
                        f"non-exhaustive match: missing {sorted(missing)}", span)
                if result is None:
                    raise BasicError("empty match", span)
                return result
        raise TypeError(t)

    return term_type(dict(gamma), e)


def assert_mnf(e: Term) -> None:
    """Structural MNF check: no term ever sits in argument position."""
    match e:
        case Val(v, _):
            _assert_mnf_value(v)
        case LetEff(_, _, args, body, _) | LetPure(_, _, args, body, _):
            for a in args:
                _assert_mnf_value(a)
            assert_mnf(body)
        case LetApp(_, fn, arg, body, _):
            _assert_mnf_value(fn)
            _assert_mnf_value(arg)
            assert_mnf(body)
        case Let(_, bound, body, _):
            assert_mnf(bound)
            assert_mnf(body)
        case Match(scrut, branches, _):
            _assert_mnf_value(scrut)
            for b in branches:
                assert_mnf(b.body)
        case _:
            raise AssertionError(f"not a term: {e}")


def _assert_mnf_value(v: Value) -> None:
    match v:
        case Const(_) | Var(_):
            pass
        case Ctor(_, args):
            for a in args:
                _assert_mnf_value(a)
        case Lambda(_, _, body):
            assert_mnf(body)
        case Fix(_, _, _, _, body):
            assert_mnf(body)
        case _:
            raise AssertionError(f"not a value: {v}")
