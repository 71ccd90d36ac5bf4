"""First-order qualifiers over literals, pure operators, and method predicates.

Literals are first-order terms; qualifiers are boolean formulas whose atoms
are bool-sorted literals.  Universal quantifiers are permitted only over base
types (axioms and top-level qualifiers), which keeps validity queries inside
an EPR-style fragment.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Union

from .ast import (
    BOOL,
    INT,
    UNIT,
    UNIT_VALUE,
    BaseType,
    Sym,
    UnitValue,
    base_compatible,
    const_base_type,
)


# ---------------------------------------------------------------------------
# Literals


@dataclass(frozen=True)
class LConst:
    value: object

    def __str__(self) -> str:
        if isinstance(self.value, bool):
            return "true" if self.value else "false"
        return str(self.value)


@dataclass(frozen=True)
class LVar:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class LApp:
    """Application of a pure operator or method predicate to literals."""

    op: str
    args: tuple["Literal", ...]
    is_mp: bool = False

    def __str__(self) -> str:
        if self.op in _INFIX:
            a, b = self.args
            return f"({a} {self.op} {b})"
        return f"{self.op}({', '.join(map(str, self.args))})"


Literal = Union[LConst, LVar, LApp]

_INFIX = {"+", "-", "==", "!=", "<", "<=", ">", ">=", "mod"}

NU = "nu"  # the distinguished value variable


def lvar(name: str) -> LVar:
    return LVar(name)


def lint(n: int) -> LConst:
    return LConst(n)


def leq(a: Literal, b: Literal) -> LApp:
    return LApp("==", (a, b))


def lit_free_vars(l: Literal) -> set[str]:
    match l:
        case LConst(_):
            return set()
        case LVar(name):
            return {name}
        case LApp(_, args, _):
            out: set[str] = set()
            for a in args:
                out |= lit_free_vars(a)
            return out
    raise TypeError(l)


def lit_subst(l: Literal, env: Mapping[str, Literal]) -> Literal:
    match l:
        case LConst(_):
            return l
        case LVar(name):
            return env.get(name, l)
        case LApp(op, args, is_mp):
            return LApp(op, tuple(lit_subst(a, env) for a in args), is_mp)
    raise TypeError(l)


# ---------------------------------------------------------------------------
# Qualifiers


@dataclass(frozen=True)
class QTrue:
    def __str__(self) -> str:
        return "true"


@dataclass(frozen=True)
class QFalse:
    def __str__(self) -> str:
        return "false"


@dataclass(frozen=True)
class QLit:
    lit: Literal

    def __str__(self) -> str:
        return str(self.lit)


@dataclass(frozen=True)
class QNot:
    arg: "Qualifier"

    def __str__(self) -> str:
        return f"~{self.arg}"


@dataclass(frozen=True)
class QAnd:
    args: tuple["Qualifier", ...]

    def __str__(self) -> str:
        return "(" + " /\\ ".join(map(str, self.args)) + ")"


@dataclass(frozen=True)
class QOr:
    args: tuple["Qualifier", ...]

    def __str__(self) -> str:
        return "(" + " \\/ ".join(map(str, self.args)) + ")"


@dataclass(frozen=True)
class QImpl:
    lhs: "Qualifier"
    rhs: "Qualifier"

    def __str__(self) -> str:
        return f"({self.lhs} ==> {self.rhs})"


@dataclass(frozen=True)
class QForall:
    var: str
    base: BaseType
    body: "Qualifier"

    def __str__(self) -> str:
        return f"(forall ({self.var}:{self.base}). {self.body})"


Qualifier = Union[QTrue, QFalse, QLit, QNot, QAnd, QOr, QImpl, QForall]

TRUE = QTrue()
FALSE = QFalse()


def qand(*qs: Qualifier) -> Qualifier:
    flat: list[Qualifier] = []
    for q in qs:
        if isinstance(q, QTrue):
            continue
        if isinstance(q, QFalse):
            return FALSE
        if isinstance(q, QAnd):
            flat.extend(q.args)
        else:
            flat.append(q)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return QAnd(tuple(flat))


def qor(*qs: Qualifier) -> Qualifier:
    flat: list[Qualifier] = []
    for q in qs:
        if isinstance(q, QFalse):
            continue
        if isinstance(q, QTrue):
            return TRUE
        if isinstance(q, QOr):
            flat.extend(q.args)
        else:
            flat.append(q)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return QOr(tuple(flat))


def qnot(q: Qualifier) -> Qualifier:
    if isinstance(q, QTrue):
        return FALSE
    if isinstance(q, QFalse):
        return TRUE
    if isinstance(q, QNot):
        return q.arg
    return QNot(q)


def free_vars(q: Qualifier) -> set[str]:
    match q:
        case QTrue() | QFalse():
            return set()
        case QLit(l):
            return lit_free_vars(l)
        case QNot(a):
            return free_vars(a)
        case QAnd(args) | QOr(args):
            out: set[str] = set()
            for a in args:
                out |= free_vars(a)
            return out
        case QImpl(a, b):
            return free_vars(a) | free_vars(b)
        case QForall(x, _, body):
            return free_vars(body) - {x}
    raise TypeError(q)


_fresh = [0]


def _fresh_var(base: str) -> str:
    _fresh[0] += 1
    return f"{base}'{_fresh[0]}"


class SortMismatch(Exception):
    pass


def substitute(q: Qualifier, x: str, v: Literal) -> Qualifier:
    """Capture-avoiding substitution q[x -> v]."""
    vfv = lit_free_vars(v)
    match q:
        case QTrue() | QFalse():
            return q
        case QLit(l):
            return QLit(lit_subst(l, {x: v}))
        case QNot(a):
            return QNot(substitute(a, x, v))
        case QAnd(args):
            return QAnd(tuple(substitute(a, x, v) for a in args))
        case QOr(args):
            return QOr(tuple(substitute(a, x, v) for a in args))
        case QImpl(a, b):
            return QImpl(substitute(a, x, v), substitute(b, x, v))
        case QForall(y, b, body):
            if y == x:
                return q
            if y in vfv:
                ny = _fresh_var(y)
                body = substitute(body, y, LVar(ny))
                y = ny
            return QForall(y, b, substitute(body, x, v))
    raise TypeError(q)


def substitute_many(q: Qualifier, env: Mapping[str, Literal]) -> Qualifier:
    for x, v in env.items():
        q = substitute(q, x, v)
    return q


# ---------------------------------------------------------------------------
# Sorting (basic qualifier typing)


class Signature:
    """Sorts for pure operators, method predicates, and declared sorts.

    Built-in arithmetic and comparison operators are always present; user
    declarations add opaque sorts, pure functions, and method predicates.
    """

    def __init__(self) -> None:
        self.pure_ops: dict[str, tuple[tuple[BaseType, ...], BaseType]] = {}
        self.method_preds: dict[str, tuple[BaseType, ...]] = {}
        self.eff_ops: dict[str, tuple[tuple[BaseType, ...], BaseType]] = {}
        self.sorts: set[str] = set()

    def clone(self) -> "Signature":
        s = Signature()
        s.pure_ops = dict(self.pure_ops)
        s.method_preds = dict(self.method_preds)
        s.eff_ops = dict(self.eff_ops)
        s.sorts = set(self.sorts)
        return s

    def declare_sort(self, name: str) -> None:
        self.sorts.add(name)

    def declare_pure(self, name: str, doms: Iterable[BaseType], cod: BaseType) -> None:
        self.pure_ops[name] = (tuple(doms), cod)

    def declare_mp(self, name: str, doms: Iterable[BaseType]) -> None:
        self.method_preds[name] = tuple(doms)

    def declare_eff(self, name: str, doms: Iterable[BaseType], cod: BaseType) -> None:
        self.eff_ops[name] = (tuple(doms), cod)


_POLY_EQ = ("==", "!=")
_ARITH = {"+": INT, "-": INT, "mod": INT}
_CMP = ("<", "<=", ">", ">=")
_BOOLOP = ()


def sort_of_literal(sig: Signature, env: Mapping[str, BaseType], l: Literal) -> BaseType:
    """Returns the base sort of a literal, raising SortMismatch if ill-sorted.

    Arithmetic is rejected at opaque sorts: only equality applies there.
    """
    match l:
        case LConst(v):
            return const_base_type(v)
        case LVar(name):
            if name not in env:
                raise SortMismatch(f"unbound variable {name!r} in qualifier")
            return env[name]
        case LApp(op, args, is_mp):
            arg_sorts = [sort_of_literal(sig, env, a) for a in args]
            if op in _POLY_EQ:
                if len(args) != 2 or not base_compatible(arg_sorts[0], arg_sorts[1]):
                    raise SortMismatch(f"equality over mismatched sorts in {l}")
                return BOOL
            if op in _ARITH:
                if len(args) != 2 or not all(s.is_numeric for s in arg_sorts):
                    raise SortMismatch(f"arithmetic on non-numeric sort in {l}")
                return INT
            if op in _CMP:
                if len(args) != 2 or not all(s.is_numeric for s in arg_sorts):
                    raise SortMismatch(f"comparison on non-numeric sort in {l}")
                return BOOL
            if is_mp or op in sig.method_preds:
                doms = sig.method_preds.get(op)
                if doms is None:
                    raise SortMismatch(f"unknown method predicate {op!r}")
                if len(doms) != len(args) or not all(
                    base_compatible(d, s) for d, s in zip(doms, arg_sorts)
                ):
                    raise SortMismatch(f"bad argument sorts for {op}: {l}")
                return BOOL
            if op in sig.pure_ops:
                doms, cod = sig.pure_ops[op]
                if len(doms) != len(args) or not all(
                    base_compatible(d, s) for d, s in zip(doms, arg_sorts)
                ):
                    raise SortMismatch(f"bad argument sorts for {op}: {l}")
                return cod
            raise SortMismatch(f"unknown operator {op!r}")
    raise TypeError(l)


def check_qualifier(sig: Signature, env: Mapping[str, BaseType], q: Qualifier) -> None:
    """Checks that every atom is bool-sorted; quantified vars must be base."""
    match q:
        case QTrue() | QFalse():
            return
        case QLit(l):
            s = sort_of_literal(sig, env, l)
            if s != BOOL:
                raise SortMismatch(f"qualifier atom {l} has sort {s}, wanted bool")
        case QNot(a):
            check_qualifier(sig, env, a)
        case QAnd(args) | QOr(args):
            for a in args:
                check_qualifier(sig, env, a)
        case QImpl(a, b):
            check_qualifier(sig, env, a)
            check_qualifier(sig, env, b)
        case QForall(x, b, body):
            check_qualifier(sig, {**env, x: b}, body)
        case _:
            raise TypeError(q)


# ---------------------------------------------------------------------------
# Ground evaluation (used by the bounded solver and the trace oracles)


class Model:
    """Interpretations for method predicates and user pure functions.

    `funcs` maps an operator name to a python callable over ground values.
    Built-in arithmetic/comparison/equality is interpreted natively.
    """

    def __init__(self, funcs: Optional[Mapping[str, Callable[..., object]]] = None):
        self.funcs: dict[str, Callable[..., object]] = dict(funcs or {})

    def extended(self, more: Mapping[str, Callable[..., object]]) -> "Model":
        m = Model(self.funcs)
        m.funcs.update(more)
        return m


EMPTY_MODEL = Model()


class EvalError(Exception):
    pass


def eval_literal(l: Literal, env: Mapping[str, object], model: Model) -> object:
    match l:
        case LConst(v):
            return v
        case LVar(name):
            if name not in env:
                raise EvalError(f"unbound {name!r} during evaluation")
            return env[name]
        case LApp(op, args, _):
            vals = [eval_literal(a, env, model) for a in args]
            return apply_pure(op, vals, model)
    raise TypeError(l)


def apply_pure(op: str, vals: list[object], model: Model) -> object:
    if op == "==":
        return vals[0] == vals[1]
    if op == "!=":
        return vals[0] != vals[1]
    if op in ("+", "-", "<", "<=", ">", ">=", "mod"):
        a, b = vals
        if not isinstance(a, int) or not isinstance(b, int) or isinstance(a, bool) or isinstance(b, bool):
            raise EvalError(f"arithmetic on non-int values {a!r}, {b!r}")
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        if op == ">=":
            return a >= b
        return a % b if b != 0 else 0
    fn = model.funcs.get(op)
    if fn is None:
        raise EvalError(f"no interpretation for {op!r}")
    return fn(*vals)


def eval_qualifier(q: Qualifier, env: Mapping[str, object], model: Model,
                   domains: Optional[Mapping[str, list[object]]] = None) -> bool:
    """Evaluates q under env; quantifiers range over `domains` keyed by sort name."""
    match q:
        case QTrue():
            return True
        case QFalse():
            return False
        case QLit(l):
            v = eval_literal(l, env, model)
            if not isinstance(v, bool):
                raise EvalError(f"qualifier atom evaluated to non-bool {v!r}")
            return v
        case QNot(a):
            return not eval_qualifier(a, env, model, domains)
        case QAnd(args):
            return all(eval_qualifier(a, env, model, domains) for a in args)
        case QOr(args):
            return any(eval_qualifier(a, env, model, domains) for a in args)
        case QImpl(a, b):
            return (not eval_qualifier(a, env, model, domains)) or eval_qualifier(
                b, env, model, domains
            )
        case QForall(x, b, body):
            if domains is None:
                raise EvalError("quantifier met but no domains supplied")
            dom = domains.get(str(b))
            if dom is None:
                raise EvalError(f"no domain for sort {b}")
            return all(
                eval_qualifier(body, {**env, x: v}, model, domains) for v in dom
            )
    raise TypeError(q)


def eval3(q: Qualifier, amap: Mapping[Literal, bool]) -> Optional[bool]:
    """Three-valued evaluation under a partial atom assignment.

    Returns None when an atom is unassigned and the connectives cannot
    decide; used to resolve minterm-implication queries by sign lookup.
    """
    match q:
        case QTrue():
            return True
        case QFalse():
            return False
        case QLit(l):
            if isinstance(l, LConst) and isinstance(l.value, bool):
                return l.value
            return amap.get(l)
        case QNot(a):
            v = eval3(a, amap)
            return None if v is None else not v
        case QAnd(args):
            out: Optional[bool] = True
            for a in args:
                v = eval3(a, amap)
                if v is False:
                    return False
                if v is None:
                    out = None
            return out
        case QOr(args):
            out = False
            for a in args:
                v = eval3(a, amap)
                if v is True:
                    return True
                if v is None:
                    out = None
            return out
        case QImpl(a, b):
            va = eval3(a, amap)
            vb = eval3(b, amap)
            if va is False or vb is True:
                return True
            if va is True and vb is False:
                return False
            return None
        case QForall(_, _, _):
            return None
    raise TypeError(q)


# ---------------------------------------------------------------------------
# Atom extraction: the literal-gathering primitive used by minterm building.


def atoms_of(q: Qualifier) -> list[Literal]:
    """Bool-sorted atoms of q in source order, structurally deduplicated.

    Quantified subformulas are treated as opaque (their atoms stay internal:
    they never participate in minterm bases).
    """
    out: list[Literal] = []
    seen: set[Literal] = set()

    def walk(p: Qualifier) -> None:
        match p:
            case QTrue() | QFalse():
                return
            case QLit(l):
                if l not in seen:
                    seen.add(l)
                    out.append(l)
            case QNot(a):
                walk(a)
            case QAnd(args) | QOr(args):
                for a in args:
                    walk(a)
            case QImpl(a, b):
                walk(a)
                walk(b)
            case QForall(_, _, _):
                return
            case _:
                raise TypeError(p)

    walk(q)
    return out
