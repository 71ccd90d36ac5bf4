"""Refinement types and Hoare automata types.

A pure refinement type is a qualified base, a dependent arrow, or a ghost
binder wrapping a function spine.  A HAT wraps a pure type with precondition
and postcondition automata, or intersects HATs of equal erasure.  Typing
contexts bind pure types only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Union

from .ast import BOOL, INT, UNIT, BaseType, FunType, BasicType, Const, Value, Var
from .inclusion import InclusionEngine, InclusionResult, QueryStats
from .qualifiers import (
    TRUE,
    LConst,
    Literal,
    LVar,
    QTrue,
    Qualifier,
    Signature,
    check_qualifier,
    substitute,
    substitute_many,
    SortMismatch,
)
from .sfa import (
    NU,
    Sfa,
    SfaAnd,
    SfaConcat,
    Srl,
    formula_free_vars,
    formula_subst,
    sfa_all_traces,
)
from .solver import LogicalContext, SolverBackend, subtype_base


# ---------------------------------------------------------------------------
# Syntax


@dataclass(frozen=True)
class RBase:
    base: BaseType
    qual: Qualifier

    def __str__(self) -> str:
        if isinstance(self.qual, QTrue):
            return str(self.base)
        return f"{{nu:{self.base} | {self.qual}}}"


@dataclass(frozen=True)
class RArrow:
    param: str
    dom: "RefinementType"
    cod: "TypeLike"

    def __str__(self) -> str:
        return f"({self.param}:{self.dom}) -> {self.cod}"


@dataclass(frozen=True)
class RGhost:
    param: str
    base: BaseType
    body: "TypeLike"

    def __str__(self) -> str:
        return f"({self.param}:{self.base}) => {self.body}"


RefinementType = Union[RBase, RArrow, RGhost]


@dataclass(frozen=True)
class HTriple:
    pre: Union[Sfa, Srl]
    inner: RefinementType
    post: Union[Sfa, Srl]

    def __str__(self) -> str:
        return f"[{self.pre}] {self.inner} [{self.post}]"


@dataclass(frozen=True)
class HInter:
    parts: tuple["Hat", ...]

    def __str__(self) -> str:
        return " /\\ ".join(f"({p})" for p in self.parts)


Hat = Union[HTriple, HInter]
TypeLike = Union[RefinementType, Hat]


def hinter(parts: Iterable[Hat]) -> Hat:
    flat: list[Hat] = []
    for p in parts:
        if isinstance(p, HInter):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if len(flat) == 1:
        return flat[0]
    return HInter(tuple(flat))


def inter_parts(tau: Hat) -> tuple[HTriple, ...]:
    if isinstance(tau, HTriple):
        return (tau,)
    out: list[HTriple] = []
    for p in tau.parts:
        out.extend(inter_parts(p))
    return tuple(out)


def rbase(base: BaseType, qual: Qualifier = TRUE) -> RBase:
    return RBase(base, qual)


# ---------------------------------------------------------------------------
# Erasure


def erase(t: TypeLike) -> BasicType:
    match t:
        case RBase(base, _):
            return INT if base.kind == "nat" else base
        case RArrow(_, dom, cod):
            return FunType(erase(dom), erase(cod))
        case RGhost(_, _, body):
            return erase(body)
        case HTriple(_, inner, _):
            return erase(inner)
        case HInter(parts):
            return erase(parts[0])
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Substitution of values for context variables


def value_literal(v: Value) -> Literal:
    match v:
        case Const(c):
            return LConst(c)
        case Var(name):
            return LVar(name)
    raise SortMismatch(f"value {v} cannot appear inside a qualifier")


def subst_type(t: TypeLike, x: str, lit: Literal) -> TypeLike:
    match t:
        case RBase(base, qual):
            if x == NU:
                return t
            return RBase(base, substitute(qual, x, lit))
        case RArrow(param, dom, cod):
            dom2 = subst_type(dom, x, lit)
            if param == x:
                return RArrow(param, dom2, cod)
            return RArrow(param, dom2, subst_type(cod, x, lit))
        case RGhost(param, base, body):
            if param == x:
                return t
            return RGhost(param, base, subst_type(body, x, lit))
        case HTriple(pre, inner, post):
            return HTriple(
                formula_subst(pre, {x: lit}),
                subst_type(inner, x, lit),
                formula_subst(post, {x: lit}),
            )
        case HInter(parts):
            return HInter(tuple(subst_type(p, x, lit) for p in parts))
    raise TypeError(t)


def type_free_vars(t: TypeLike) -> set[str]:
    from .qualifiers import free_vars

    match t:
        case RBase(_, qual):
            return free_vars(qual) - {NU}
        case RArrow(param, dom, cod):
            return type_free_vars(dom) | (type_free_vars(cod) - {param})
        case RGhost(param, _, body):
            return type_free_vars(body) - {param}
        case HTriple(pre, inner, post):
            return formula_free_vars(pre) | type_free_vars(inner) | formula_free_vars(post)
        case HInter(parts):
            out: set[str] = set()
            for p in parts:
                out |= type_free_vars(p)
            return out
    raise TypeError(t)


# ---------------------------------------------------------------------------
# Typing contexts (pure bindings only)


@dataclass(frozen=True)
class TypeBinding:
    name: str
    rtype: RefinementType


class ContextError(Exception):
    pass


@dataclass(frozen=True)
class TypingContext:
    bindings: tuple[TypeBinding, ...] = ()

    def bind(self, name: str, rtype: TypeLike) -> "TypingContext":
        if isinstance(rtype, (HTriple, HInter)):
            raise ContextError(f"context cannot bind a HAT for {name!r}")
        if any(b.name == name for b in self.bindings):
            raise ContextError(f"duplicate binding {name!r}")
        return TypingContext(self.bindings + (TypeBinding(name, rtype),))

    def lookup(self, name: str) -> Optional[RefinementType]:
        for b in reversed(self.bindings):
            if b.name == name:
                return b.rtype
        return None

    def erased_env(self) -> dict[str, BaseType]:
        out: dict[str, BaseType] = {}
        for b in self.bindings:
            e = erase(b.rtype)
            if isinstance(e, BaseType):
                out[b.name] = e
        return out

    def to_logical(self, sig: Signature,
                   axioms: tuple[tuple[str, Qualifier], ...] = ()) -> LogicalContext:
        items = []
        for b in self.bindings:
            if isinstance(b.rtype, RBase):
                base = b.rtype.base
                items.append((b.name, INT if base.kind == "nat" else base, b.rtype.qual))
        ctx = LogicalContext(sig, (), axioms)
        return ctx.extend_many(items)


# ---------------------------------------------------------------------------
# Well-formedness


@dataclass
class WfReport:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


def _check_sfa_sorts(sig: Signature, env: Mapping[str, BaseType], a: Union[Sfa, Srl]) -> None:
    from .sfa import OpEvent, TestEvent, formula_events

    for ev in formula_events(a):
        if isinstance(ev, OpEvent):
            if ev.op not in sig.eff_ops:
                raise SortMismatch(f"unknown effectful operator {ev.op!r}")
            doms, cod = sig.eff_ops[ev.op]
            if len(doms) != len(ev.argvars):
                raise SortMismatch(f"event {ev} has wrong arity for {ev.op}")
            env2 = dict(env)
            env2.update(dict(zip(ev.argvars, doms)))
            env2[NU] = cod
            check_qualifier(sig, env2, ev.qual)
        else:
            check_qualifier(sig, env, ev.qual)


def extend_with_top(a: Union[Sfa, Srl]) -> Sfa:
    """A;G⊤ — every extension of an A-trace."""
    return SfaConcat(a, sfa_all_traces())  # type: ignore[arg-type]


def well_formed(ctx: TypingContext, tau: TypeLike, sig: Signature,
                engine: InclusionEngine,
                axioms: tuple[tuple[str, Qualifier], ...] = (),
                stats: Optional[QueryStats] = None,
                check_prefix: bool = True) -> WfReport:
    """Structural closure of qualifiers plus the Hoare prefix condition.

    The prefix condition (every postcondition trace extends a precondition
    trace) is discharged with the inclusion engine; `check_prefix=False`
    skips it for goals built by the checker itself, whose shape guarantees
    it.
    """
    env = ctx.erased_env()

    def wf(ctx2: TypingContext, t: TypeLike) -> WfReport:
        match t:
            case RBase(base, qual):
                try:
                    e = dict(ctx2.erased_env())
                    e[NU] = INT if base.kind == "nat" else base
                    check_qualifier(sig, e, qual)
                except SortMismatch as exc:
                    return WfReport(False, f"ill-sorted qualifier: {exc}")
                return WfReport(True)
            case RArrow(param, dom, cod):
                r = wf(ctx2, dom)
                if not r:
                    return r
                inner_ctx = ctx2
                if isinstance(dom, RBase):
                    inner_ctx = ctx2.bind(param, dom)
                return wf(inner_ctx, cod)
            case RGhost(param, base, body):
                return wf(ctx2.bind(param, RBase(base, TRUE)), body)
            case HTriple(pre, inner, post):
                try:
                    e = dict(ctx2.erased_env())
                    _check_sfa_sorts(sig, e, pre)
                    _check_sfa_sorts(sig, e, post)
                except SortMismatch as exc:
                    return WfReport(False, f"ill-sorted automaton: {exc}")
                r = wf(ctx2, inner)
                if not r:
                    return r
                if check_prefix:
                    res = engine.subquery(
                        ctx2.to_logical(sig, axioms), post, extend_with_top(pre), stats
                    )
                    if res.undecided:
                        return WfReport(False, f"prefix condition undecided: {res.reason}")
                    if not res.ok:
                        return WfReport(
                            False,
                            "postcondition is not an extension of the precondition "
                            f"(witness {res.counterexample})",
                        )
                return WfReport(True)
            case HInter(parts):
                erasures = {str(erase(p)) for p in parts}
                if len(erasures) != 1:
                    return WfReport(False, f"intersection mixes erasures {sorted(erasures)}")
                for p in parts:
                    r = wf(ctx2, p)
                    if not r:
                        return r
                return WfReport(True)
        raise TypeError(t)

    del env
    return wf(ctx, tau)


# ---------------------------------------------------------------------------
# Subtyping


def subtype(ctx: TypingContext, t1: TypeLike, t2: TypeLike, sig: Signature,
            engine: InclusionEngine,
            axioms: tuple[tuple[str, Qualifier], ...] = (),
            stats: Optional[QueryStats] = None) -> bool:
    """The full subtyping lattice; Unknown anywhere yields false."""
    backend = engine.backend
    if t1 == t2:
        return True

    match (t1, t2):
        case (RBase(b1, q1), RBase(b2, q2)):
            from .ast import base_compatible

            if not base_compatible(erase(t1), erase(t2)):  # type: ignore[arg-type]
                return False
            return subtype_base(ctx.to_logical(sig, axioms), b1, q1, b2, q2, backend)
        case (RArrow(x1, dom1, cod1), RArrow(x2, dom2, cod2)):
            if not subtype(ctx, dom2, dom1, sig, engine, axioms, stats):
                return False
            inner_ctx = ctx
            cod1r = cod1
            if isinstance(dom2, RBase):
                inner_ctx = ctx.bind(x2, dom2)
                if x1 != x2:
                    cod1r = subst_type(cod1, x1, LVar(x2))
            return subtype(inner_ctx, cod1r, cod2, sig, engine, axioms, stats)
        case (_, RGhost(x, b, body)):
            inner_ctx = ctx.bind(x, RBase(b, TRUE))
            return subtype(inner_ctx, t1, body, sig, engine, axioms, stats)
        case (RGhost(x, b, body), _):
            for w in _ghost_witnesses(ctx, b, t2):
                cand = subst_type(body, x, w)
                if subtype(ctx, cand, t2, sig, engine, axioms, stats):
                    return True
            return False
        case (_, HInter(parts)):
            return all(subtype(ctx, t1, p, sig, engine, axioms, stats) for p in parts)
        case (HInter(_), HTriple(_, _, _)):
            parts = inter_parts(t1)  # type: ignore[arg-type]
            for p in parts:
                if subtype(ctx, p, t2, sig, engine, axioms, stats):
                    return True
            # Merge components with identical inner type and postcondition.
            groups: dict[tuple, list[HTriple]] = {}
            for p in parts:
                groups.setdefault((str(p.inner), str(p.post)), []).append(p)
            for group in groups.values():
                if len(group) < 2:
                    continue
                merged_pre: Union[Sfa, Srl] = group[0].pre
                from .sfa import SfaOr

                for p in group[1:]:
                    merged_pre = SfaOr(merged_pre, p.pre)  # type: ignore[arg-type]
                merged = HTriple(merged_pre, group[0].inner, group[0].post)
                if subtype(ctx, merged, t2, sig, engine, axioms, stats):
                    return True
            return False
        case (HTriple(a1, i1, b1), HTriple(a2, i2, b2)):
            lctx = ctx.to_logical(sig, axioms)
            pre = engine.subquery(lctx, a2, a1, stats)
            if not pre.ok:
                return False
            if not subtype(ctx, i1, i2, sig, engine, axioms, stats):
                return False
            frame = extend_with_top(a2)
            lhs = SfaAnd(frame, b1)  # type: ignore[arg-type]
            rhs = SfaAnd(frame, b2)  # type: ignore[arg-type]
            post = engine.subquery(lctx, lhs, rhs, stats)
            return post.ok
    return False


def _ghost_witnesses(ctx: TypingContext, base: BaseType, goal: TypeLike) -> list[Literal]:
    """Candidate instantiations: in-scope ground literals of the right sort
    plus small constants.  Used only by the declarative oracle."""
    out: list[Literal] = []
    for b in ctx.bindings:
        if isinstance(b.rtype, RBase) and b.rtype.base == base:
            out.append(LVar(b.name))
    if base.kind in ("int", "nat"):
        out.extend(LConst(c) for c in (0, 1, -1))
    if base.kind == "bool":
        out.extend(LConst(c) for c in (True, False))
    return out


# ---------------------------------------------------------------------------
# Pretty-printing (round-trips through the surface parser)


def pp_type(t: TypeLike) -> str:
    return str(t)
