"""The bidirectional type checker: synthesis, checking, and ghost abduction.

Checking threads the current precondition automaton through let chains: an
effectful operator application replaces the goal's precondition with
`(A;G⊤) ∧ A_i'` for each case of the operator's intersection type.  Ghost
variables are instantiated by abduction before the cases are explored.

A solver Unknown anywhere surfaces as a distinct `undecided` verdict, never
as a proof.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .ast import (
    Const,
    Ctor,
    Fix,
    Lambda,
    Let,
    LetApp,
    LetEff,
    LetPure,
    Match,
    NO_SPAN,
    Span,
    Term,
    Val,
    Value,
    Var,
    term_size,
    value_size,
)
from .hats import (
    HInter,
    HTriple,
    Hat,
    RArrow,
    RBase,
    RGhost,
    RefinementType,
    TypeLike,
    TypingContext,
    erase,
    extend_with_top,
    inter_parts,
    subst_type,
    subtype,
    type_free_vars,
    value_literal,
    well_formed,
)
from .inclusion import InclusionEngine, QueryStats
from .minterms import gather_literals
from .qualifiers import (
    TRUE,
    LApp,
    LConst,
    Literal,
    LVar,
    QLit,
    Qualifier,
    Signature,
    SortMismatch,
    lit_free_vars,
    qand,
    qor,
    sort_of_literal,
    substitute,
)
from .sfa import NU, Sfa, SfaAnd, SfaConcat, SfaOr, Srl, formula_size
from .solver import LogicalContext, SolverBackend, Unknown

from .ast import BaseType


# ---------------------------------------------------------------------------
# Failure modes


@dataclass
class CheckFailure(Exception):
    reason: str
    span: Span = NO_SPAN

    def __str__(self) -> str:
        return f"{self.reason} (at {self.span})"


@dataclass
class UndecidedFailure(Exception):
    reason: str
    span: Span = NO_SPAN

    def __str__(self) -> str:
        return f"undecided: {self.reason} (at {self.span})"


class NoInstantiation(CheckFailure):
    pass


# ---------------------------------------------------------------------------
# Programs and built-in signatures


@dataclass(frozen=True)
class CtorSig:
    params: tuple[RefinementType, ...]
    result_base: BaseType
    result_qual: Qualifier  # over NU


BOOL_CTORS: dict[str, CtorSig] = {}


def _install_bool_ctors() -> None:
    from .ast import BOOL, UNIT, UNIT_VALUE

    BOOL_CTORS["true"] = CtorSig((), BOOL, QLit(LApp("==", (LVar(NU), LConst(True)))))
    BOOL_CTORS["false"] = CtorSig((), BOOL, QLit(LApp("==", (LVar(NU), LConst(False)))))
    BOOL_CTORS["unit"] = CtorSig((), UNIT, TRUE)


_install_bool_ctors()


@dataclass(frozen=True)
class EffectCase:
    pre: Union[Sfa, Srl]
    inner: RefinementType
    incr: Union[Sfa, Srl]  # the appended suffix; full post is pre;incr

    def full_post(self) -> Union[Sfa, Srl]:
        from .sfa import SfaConcat

        return SfaConcat(self.pre, self.incr)  # type: ignore[arg-type]


@dataclass(frozen=True)
class EffectSig:
    """An operator signature: ghosts, parameters, intersection cases.

    Case postconditions are incremental: used at context A, case i extends
    (A ∧ pre_i) with its suffix, which keeps the threaded precondition tight.
    """

    name: str
    ghosts: tuple[tuple[str, BaseType], ...]
    params: tuple[tuple[str, RefinementType], ...]
    cases: tuple[EffectCase, ...]

    def as_type(self) -> TypeLike:
        parts = [HTriple(c.pre, c.inner, c.full_post()) for c in self.cases]
        out: TypeLike = parts[0] if len(parts) == 1 else HInter(tuple(parts))
        for pname, pt in reversed(self.params):
            out = RArrow(pname, pt, out)
        for gname, gb in reversed(self.ghosts):
            out = RGhost(gname, gb, out)
        return out

    def subst(self, x: str, lit: Literal) -> "EffectSig":
        """Substitutes an actual (or outer variable) for x; ghosts shadow."""
        from .sfa import formula_subst

        if any(g == x for g, _ in self.ghosts):
            return self
        params = tuple(
            (p, subst_type(t, x, lit)) for p, t in self.params if p != x  # type: ignore[misc]
        )
        cases = tuple(
            EffectCase(formula_subst(c.pre, {x: lit}),
                       subst_type(c.inner, x, lit),  # type: ignore[arg-type]
                       formula_subst(c.incr, {x: lit}))
            for c in self.cases
        )
        return EffectSig(self.name, self.ghosts, params, cases)

    def rename_binder(self, old: str, new: str) -> "EffectSig":
        from .qualifiers import LVar as _LVar

        ghosts = tuple((new if g == old else g, b) for g, b in self.ghosts)
        params = tuple(
            ((new if p == old else p), subst_type(t, old, _LVar(new)))  # type: ignore[misc]
            for p, t in self.params
        )
        from .sfa import formula_subst

        cases = tuple(
            EffectCase(formula_subst(c.pre, {old: _LVar(new)}),
                       subst_type(c.inner, old, _LVar(new)),  # type: ignore[arg-type]
                       formula_subst(c.incr, {old: _LVar(new)}))
            for c in self.cases
        )
        return EffectSig(self.name, ghosts, params, cases)


@dataclass
class Program:
    sig: Signature
    axioms: tuple[tuple[str, Qualifier], ...]
    effects: dict[str, EffectSig]  # operator signatures (incremental posts)
    methods: "list[MethodDef]"
    ctors: dict[str, CtorSig] = field(default_factory=lambda: dict(BOOL_CTORS))


@dataclass
class MethodDef:
    name: str
    ascribed: TypeLike
    term: Value
    span: Span = NO_SPAN
    expect: str = "verified"  # benchmark annotation only; not used by checking


# ---------------------------------------------------------------------------
# Check state


@dataclass
class CheckState:
    program: Program
    engine: InclusionEngine
    ctx: TypingContext
    stats: QueryStats
    rank_log: list[tuple[tuple[int, int], tuple[int, int]]] = field(default_factory=list)
    paranoid: bool = False

    def logical(self) -> LogicalContext:
        return self.ctx.to_logical(self.program.sig, self.program.axioms)

    def with_ctx(self, ctx: TypingContext) -> "CheckState":
        return CheckState(self.program, self.engine, ctx, self.stats,
                          self.rank_log, self.paranoid)

    def bind(self, name: str, t: RefinementType) -> "CheckState":
        return self.with_ctx(self.ctx.bind(name, t))


def type_size(t: TypeLike) -> int:
    match t:
        case RBase(_, _):
            return 1
        case RArrow(_, dom, cod):
            return 1 + type_size(dom) + type_size(cod)
        case RGhost(_, _, body):
            return 1 + type_size(body)
        case HTriple(pre, inner, post):
            return 1 + formula_size(pre) + type_size(inner) + formula_size(post)
        case HInter(parts):
            return 1 + sum(type_size(p) for p in parts)
    raise TypeError(t)


def _rank_of(e: Union[Term, Value], tau: Optional[TypeLike]) -> tuple[int, int]:
    size_e = term_size(e) if isinstance(e, (Val, LetEff, LetPure, LetApp, Let, Match)) else value_size(e)
    return (size_e, type_size(tau) if tau is not None else 0)


# ---------------------------------------------------------------------------
# Synthesis


def synthesize(state: CheckState, v: Value, span: Span = NO_SPAN) -> RefinementType:
    """Constants self-describe, base variables selfify, functions copy."""
    match v:
        case Const(c):
            from .ast import const_base_type

            return RBase(const_base_type(c), QLit(LApp("==", (LVar(NU), LConst(c)))))
        case Var(name):
            t = state.ctx.lookup(name)
            if t is None:
                raise CheckFailure(f"unbound variable {name!r}", span)
            if isinstance(t, RBase):
                return RBase(t.base, QLit(LApp("==", (LVar(NU), LVar(name)))))
            return t
        case _:
            raise CheckFailure(f"cannot synthesize a type for value {v}", span)


# ---------------------------------------------------------------------------
# Operator/function type decomposition


@dataclass(frozen=True)
class FnShape:
    ghosts: tuple[tuple[str, BaseType], ...]
    params: tuple[tuple[str, RefinementType], ...]
    result: TypeLike  # Hat for full applications; arrow types for partial


def decompose_fn(t: TypeLike) -> FnShape:
    ghosts: list[tuple[str, BaseType]] = []
    cur = t
    while isinstance(cur, RGhost):
        ghosts.append((cur.param, cur.base))
        cur = cur.body
    params: list[tuple[str, RefinementType]] = []
    while isinstance(cur, RArrow):
        params.append((cur.param, cur.dom))
        cur = cur.cod
    return FnShape(tuple(ghosts), tuple(params), cur)


_ghost_fresh = [0]


def freshen_ghosts(shape: FnShape, taken: set[str]) -> FnShape:
    """Renames ghost binders clashing with context names (alpha only)."""
    if not any(g in taken for g, _ in shape.ghosts):
        return shape
    ghosts = []
    params = list(shape.params)
    result = shape.result
    for g, b in shape.ghosts:
        if g in taken:
            _ghost_fresh[0] += 1
            ng = f"{g}${_ghost_fresh[0]}"
            params = [(pn, subst_type(pt, g, LVar(ng))) for pn, pt in params]  # type: ignore[misc]
            result = subst_type(result, g, LVar(ng))
            ghosts.append((ng, b))
        else:
            ghosts.append((g, b))
    return FnShape(tuple(ghosts), tuple(params), result)


# ---------------------------------------------------------------------------
# Ghost abduction


def _candidate_terms(lctx: LogicalContext, pools: Sequence[Literal],
                     base: BaseType, ghost_names: set[str]) -> list[Literal]:
    """Ground context terms of the given sort occurring in the literal pools."""
    sig = lctx.sig
    env = {b.name: b.base for b in lctx.bindings}
    out: list[Literal] = []
    seen: set[Literal] = set()

    def visit(term: Literal) -> None:
        fv = lit_free_vars(term)
        if not (fv & ghost_names) and not any(n.startswith("$") or n == NU for n in fv):
            try:
                s = sort_of_literal(sig, env, term)
            except SortMismatch:
                s = None
            from .ast import base_compatible

            if s is not None and base_compatible(s, base) and term not in seen:
                seen.add(term)
                out.append(term)
        if isinstance(term, LApp):
            for a in term.args:
                visit(a)

    for lit in pools:
        visit(lit)
    return out


def instantiate(state: CheckState, pre: Union[Sfa, Srl], goal: Union[Sfa, Srl],
                ghosts: Sequence[tuple[str, BaseType]]) -> Optional[dict[str, Qualifier]]:
    """Weakest ghost qualifiers making `pre ⊆ goal` hold, or None.

    Candidates are equalities between each ghost and in-scope ground terms
    of its sort; the refinement loop grows a maximal set of candidate
    minterms whose disjunction, assumed as a context fact, lets the
    inclusion pass.  Every accepted step re-runs the inclusion query, so the
    final set is maximal: adding any rejected minterm back breaks inclusion.
    """
    engine = state.engine
    base_ctx = state.ctx
    for name, b in ghosts:
        if base_ctx.lookup(name) is None:
            base_ctx = base_ctx.bind(name, RBase(b, TRUE))
    lctx = base_ctx.to_logical(state.program.sig, state.program.axioms)

    res = engine.subquery(lctx, pre, goal, state.stats)
    if res.undecided:
        raise UndecidedFailure(f"abduction inclusion undecided: {res.reason}")
    if res.ok:
        return {name: TRUE for name, _ in ghosts}
    if not ghosts:
        return None

    pools_struct = gather_literals(lctx, [pre, goal])
    pools: list[Literal] = list(pools_struct.context_literals)
    for ls in pools_struct.op_literals.values():
        pools.extend(ls)
    ghost_names = {name for name, _ in ghosts}

    candidates: list[tuple[str, Qualifier]] = []
    for name, b in ghosts:
        for term in _candidate_terms(lctx, pools, b, ghost_names):
            candidates.append((name, QLit(LApp("==", (LVar(name), term)))))

    accepted: list[Qualifier] = []

    def fact_ctx(fact: Qualifier) -> LogicalContext:
        # A unit binder whose refinement does not mention nu simply asserts
        # the fact into the context premises.
        from .ast import UNIT

        return lctx.extend("$fact", UNIT, fact)

    for _, cand in candidates:
        trial = qor(*(accepted + [cand]))
        res = engine.subquery(fact_ctx(trial), pre, goal, state.stats)
        if res.undecided:
            raise UndecidedFailure(f"abduction inclusion undecided: {res.reason}")
        if res.ok:
            accepted.append(cand)

    if not accepted:
        return None

    separator = qor(*accepted)
    out: dict[str, Qualifier] = {}
    for name, b in ghosts:
        mine = [c for g, c in candidates if g == name and c in accepted]
        if not mine:
            out[name] = TRUE
            continue
        out[name] = qor(*[substitute(c, name, LVar(NU)) for c in mine])

    # The per-ghost projection must still justify the inclusion.
    final_ctx = state.ctx
    for name, b in ghosts:
        final_ctx = final_ctx.bind(name, RBase(b, out[name]))
    res = engine.subquery(final_ctx.to_logical(state.program.sig, state.program.axioms),
                          pre, goal, state.stats)
    if res.undecided:
        raise UndecidedFailure(f"abduction re-check undecided: {res.reason}")
    if not res.ok:
        return None
    del separator
    return out


def effinfer(state: CheckState, current_pre: Union[Sfa, Srl],
             ghosts: Sequence[tuple[str, BaseType]],
             cases: Sequence[HTriple], span: Span) -> dict[str, Qualifier]:
    """Infers ghost qualifiers for one operator use under the current pre."""
    union: Union[Sfa, Srl] = cases[0].pre
    for c in cases[1:]:
        union = SfaOr(union, c.pre)  # type: ignore[arg-type]
    assignment = instantiate(state, current_pre, union, ghosts)
    if assignment is None:
        raise NoInstantiation(
            "no ghost instantiation makes the context included in the operator precondition",
            span,
        )
    if state.paranoid and ghosts:
        ctx = state.ctx
        for name, b in ghosts:
            ctx = ctx.bind(name, RBase(b, assignment[name]))
        res = state.engine.subquery(
            ctx.to_logical(state.program.sig, state.program.axioms),
            current_pre, union, state.stats)
        assert res.ok, "abduction postcondition violated"
    return assignment


# ---------------------------------------------------------------------------
# Checking


def _subtype_or_fail(state: CheckState, t1: TypeLike, t2: TypeLike, span: Span,
                     what: str) -> None:
    ok = subtype(state.ctx, t1, t2, state.program.sig, state.engine,
                 state.program.axioms, state.stats)
    if not ok:
        raise CheckFailure(f"{what}: {t1} is not a subtype of {t2}", span)


def _post_inclusion(state: CheckState, pre: Union[Sfa, Srl], post: Union[Sfa, Srl],
                    span: Span) -> None:
    """The value-position obligation: every pre trace is already in post."""
    frame = extend_with_top(pre)
    rhs = SfaAnd(frame, post)  # type: ignore[arg-type]
    res = state.engine.subquery(state.logical(), pre, rhs, state.stats)
    if res.undecided:
        raise UndecidedFailure(f"postcondition inclusion undecided: {res.reason}", span)
    if not res.ok:
        raise CheckFailure(
            f"context traces can leave the postcondition (witness {res.counterexample})",
            span,
        )


def check_value(state: CheckState, v: Value, goal: TypeLike, span: Span,
                _rank: Optional[tuple[int, int]] = None) -> None:
    cur = _rank_of(v, goal)
    if _rank is not None:
        state.rank_log.append((_rank, cur))
    match goal:
        case RGhost(x, b, body):
            check_value(state.bind(x, RBase(b, TRUE)), v, body, span, cur)
            return
        case HInter(parts):
            for p in parts:
                check_value(state, v, p, span, cur)
            return
        case HTriple(pre, inner, post):
            match v:
                case Lambda(_, _, _) | Fix(_, _, _, _, _):
                    check_value(state, v, inner, span, cur)
                case _:
                    t1 = synthesize(state, v, span)
                    _subtype_or_fail(state, t1, inner, span, "value against triple")
            _post_inclusion(state, pre, post, span)
            return
        case RArrow(x, dom, cod):
            match v:
                case Lambda(param, annot, body):
                    if annot is not None:
                        _subtype_or_fail(state, dom, annot, span, "parameter annotation")
                    cod2 = cod
                    if x != param:
                        if isinstance(dom, RBase):
                            cod2 = subst_type(cod, x, LVar(param))
                        elif x in type_free_vars(cod):
                            raise CheckFailure(
                                "dependent use of a non-base parameter", span)
                    st = state.with_ctx(state.ctx.bind(param, dom))
                    check_term(st, body, cod2, cur)
                    return
                case Fix(fname, fannot, param, pannot, body):
                    if fannot is not None:
                        _subtype_or_fail(state, goal, fannot, span, "fix annotation")
                    st = state.with_ctx(state.ctx.bind(fname, goal))
                    check_value(st, Lambda(param, pannot, body), goal, span, cur)
                    return
                case Var(_):
                    t1 = synthesize(state, v, span)
                    _subtype_or_fail(state, t1, goal, span, "function variable")
                    return
                case _:
                    raise CheckFailure(f"value {v} cannot check against arrow {goal}", span)
        case RBase(_, _):
            t1 = synthesize(state, v, span)
            _subtype_or_fail(state, t1, goal, span, "value")
            return
    raise TypeError(goal)


def _ghost_free(t: TypeLike) -> bool:
    match t:
        case RBase(_, _):
            return True
        case RArrow(_, dom, cod):
            return _ghost_free(dom) and _ghost_free(cod)
        case RGhost(_, _, _):
            return False
        case HTriple(_, inner, _):
            return _ghost_free(inner)
        case HInter(parts):
            return all(_ghost_free(p) for p in parts)
    raise TypeError(t)


def _check_args(state: CheckState, params: Sequence[tuple[str, RefinementType]],
                args: Sequence[Value], span: Span,
                rank: tuple[int, int]) -> list[tuple[str, Literal]]:
    """Checks actuals against (dependent) parameter types; returns the
    substitution for base-typed actuals."""
    if len(args) != len(params):
        raise CheckFailure(f"expected {len(params)} arguments, got {len(args)}", span)
    subst_env: list[tuple[str, Literal]] = []
    for (pname, ptype), actual in zip(params, args):
        pt = ptype
        for x, lit in subst_env:
            pt = subst_type(pt, x, lit)  # type: ignore[assignment]
        if not _ghost_free(pt):
            raise CheckFailure(f"parameter type {pt} mentions a ghost variable", span)
        check_value(state, actual, pt, span, rank)
        try:
            subst_env.append((pname, value_literal(actual)))
        except SortMismatch:
            pass
    return subst_env


def check_term(state: CheckState, e: Term, goal: TypeLike,
               _rank: Optional[tuple[int, int]] = None) -> None:
    cur = _rank_of(e, goal)
    if _rank is not None:
        state.rank_log.append((_rank, cur))

    match goal:
        case RGhost(x, b, body):
            check_term(state.bind(x, RBase(b, TRUE)), e, body, cur)
            return
        case HInter(parts):
            for p in parts:
                check_term(state, e, p, cur)
            return

    match e:
        case Val(v, span):
            check_value(state, v, goal, span, cur)
            return
        case Match(scrut, branches, span):
            state.stats.n_branch += len(branches)
            for br in branches:
                csig = state.program.ctors.get(br.ctor)
                if csig is None:
                    raise CheckFailure(f"unknown constructor {br.ctor!r}", span)
                st = state
                env: list[tuple[str, Literal]] = []
                for y, pt in zip(br.binders, csig.params):
                    if not isinstance(pt, RBase):
                        raise CheckFailure("constructor fields must be base-typed", span)
                    st = st.bind(y, pt)
                    env.append((y, LVar(y)))
                scrut_lit = value_literal(scrut)
                eq = QLit(LApp("==", (LVar(NU), scrut_lit)))
                zq = qand(eq, csig.result_qual)
                fresh = f"$m{len(state.ctx.bindings)}"
                st = st.bind(fresh, RBase(csig.result_base, zq))
                check_term(st, br.body, goal, cur)
            return
        case _:
            pass

    if not isinstance(goal, HTriple):
        raise CheckFailure(
            f"effectful term requires a Hoare triple goal, found {goal}",
            getattr(e, "span", NO_SPAN),
        )

    match e:
        case LetPure(x, op, args, body, span):
            state.stats.n_app += 1
            sig = state.program.sig
            if op not in sig.pure_ops and op not in ("+", "-", "mod", "==", "!=", "<", "<=", ">", ">="):
                raise CheckFailure(f"unknown pure operator {op!r}", span)
            lits = []
            for a in args:
                try:
                    lits.append(value_literal(a))
                except SortMismatch:
                    raise CheckFailure(f"pure operator argument {a} is not first-order", span)
            app = LApp(op, tuple(lits))
            env = dict(state.ctx.erased_env())
            try:
                cod = sort_of_literal(sig, env, app)
            except SortMismatch as exc:
                raise CheckFailure(f"ill-sorted pure application: {exc}", span)
            res_t = RBase(cod, QLit(LApp("==", (LVar(NU), app))))
            check_term(state.bind(x, res_t), body, goal, cur)
            return
        case LetEff(x, op, args, body, span):
            state.stats.n_app += 1
            sig = state.program.effects.get(op)
            if sig is None:
                raise CheckFailure(f"unknown effectful operator {op!r}", span)
            taken = {b.name for b in state.ctx.bindings}
            for g, _ in sig.ghosts:
                if g in taken:
                    _ghost_fresh[0] += 1
                    sig = sig.rename_binder(g, f"{g}${_ghost_fresh[0]}")
            env = _check_args(state, sig.params, list(args), span, cur)
            for nm, lit in env:
                sig = sig.subst(nm, lit)
            cases = [HTriple(c.pre, c.inner, c.full_post()) for c in sig.cases]
            assign = effinfer(state, goal.pre, sig.ghosts, cases, span)
            state.stats.n_branch += max(0, len(sig.cases) - 1)
            for case in sig.cases:
                st = state
                for gname, gbase in sig.ghosts:
                    st = st.bind(gname, RBase(gbase, assign[gname]))
                st = st.bind(x, case.inner)
                new_pre = SfaConcat(SfaAnd(goal.pre, case.pre), case.incr)  # type: ignore[arg-type]
                check_term(st, body, HTriple(new_pre, goal.inner, goal.post), cur)
            return
        case LetApp(x, fn, arg, body, span):
            state.stats.n_app += 1
            fn_t = synthesize(state, fn, span) if isinstance(fn, Var) else None
            if fn_t is None:
                raise CheckFailure(f"application head must be a variable, found {fn}", span)
            taken = {b.name for b in state.ctx.bindings}
            shape = freshen_ghosts(decompose_fn(fn_t), taken)
            if not shape.params:
                raise CheckFailure(f"{fn} is not a function", span)
            first_param, rest = shape.params[0], shape.params[1:]
            result: TypeLike = _rebuild_arrows(rest, shape.result)
            env = _check_args(state, (first_param,), [arg], span, cur)
            for nm, lit in env:
                result = subst_type(result, nm, lit)
            if isinstance(result, (RBase, RArrow)):
                if shape.ghosts:
                    raise CheckFailure(
                        "partial application of a ghost-bearing function", span)
                check_term(state.bind(x, result), body, goal, cur)
                return
            if isinstance(result, RGhost):
                raise CheckFailure("ghost binder left of a value result", span)
            cases = inter_parts(result)
            assign = effinfer(state, goal.pre, shape.ghosts, cases, span)
            state.stats.n_branch += max(0, len(cases) - 1)
            frame = extend_with_top(goal.pre)
            for case in cases:
                st = state
                for gname, gbase in shape.ghosts:
                    st = st.bind(gname, RBase(gbase, assign[gname]))
                if not isinstance(case.inner, (RBase, RArrow, RGhost)):
                    raise CheckFailure(
                        f"application case has non-pure inner type {case.inner}", span)
                st = st.bind(x, case.inner)
                new_pre = SfaAnd(frame, case.post)  # type: ignore[arg-type]
                check_term(st, body, HTriple(new_pre, goal.inner, goal.post), cur)
            return
        case Let(x, bound, body, span):
            match bound:
                case Val(v, vspan):
                    t = synthesize(state, v, vspan)
                    check_term(state.bind(x, t), body, goal, cur)
                    return
            raise CheckFailure(
                "let-bound term is not a value, application, or operator call "
                "(flattening should have removed it)",
                span,
            )
    raise TypeError(e)


def _rebuild_arrows(params: Sequence[tuple[str, RefinementType]], result: TypeLike) -> TypeLike:
    out = result
    for name, dom in reversed(params):
        out = RArrow(name, dom, out)
    return out


# ---------------------------------------------------------------------------
# Method-level driver


@dataclass
class MethodReport:
    name: str
    verdict: str  # "verified" | "failed" | "undecided"
    reason: str = ""
    span: Optional[str] = None
    stats: Optional[QueryStats] = None

    def to_json(self) -> dict:
        s = self.stats or QueryStats()
        return {
            "name": self.name,
            "verdict": self.verdict,
            "reason": self.reason,
            "span": self.span,
            "stats": {
                "n_branch": s.n_branch,
                "n_app": s.n_app,
                "n_sat": s.n_sat,
                "n_inc": s.n_inc,
                "avg_fa_size": round(s.avg_fa_size(), 1),
                "t_sat": round(s.t_sat, 4),
                "t_inc": round(s.t_inc, 4),
                "t_total": round(s.t_total, 4),
            },
        }


def verify_method(program: Program, method: MethodDef, backend: SolverBackend,
                  base_ctx: Optional[TypingContext] = None,
                  engine: Optional[InclusionEngine] = None,
                  paranoid: bool = False,
                  rank_log: Optional[list] = None,
                  dot_sink=None) -> MethodReport:
    """Well-formedness then checking; stats mirror the reporting columns."""
    stats = QueryStats()
    t0 = time.perf_counter()
    engine = engine or InclusionEngine(backend)
    ctx = base_ctx or TypingContext()
    state = CheckState(program, engine, ctx, stats,
                       rank_log if rank_log is not None else [], paranoid)
    if dot_sink is not None:
        orig_subquery = engine.subquery

        def subquery_with_dots(lctx, a, b, st=None, _unused=None):
            return orig_subquery(lctx, a, b, st, dot_sink)

        engine_proxy = InclusionEngine(backend)
        engine_proxy._cache = engine._cache
        engine_proxy.subquery = subquery_with_dots  # type: ignore[assignment]
        state.engine = engine_proxy

    try:
        wf = well_formed(ctx, method.ascribed, program.sig, state.engine,
                         program.axioms, stats)
        if not wf.ok:
            raise CheckFailure(f"ascription ill-formed: {wf.reason}", method.span)
        check_value(state, method.term, method.ascribed, method.span)
        verdict, reason, span = "verified", "", None
    except UndecidedFailure as exc:
        verdict, reason, span = "undecided", exc.reason, str(exc.span)
    except CheckFailure as exc:
        verdict, reason, span = "failed", exc.reason, str(exc.span)
    stats.t_total = time.perf_counter() - t0
    return MethodReport(method.name, verdict, reason, span, stats)


def verify_program(program: Program, backend: SolverBackend,
                   paranoid: bool = False,
                   rank_log: Optional[list] = None,
                   dot_sink_factory=None) -> list[MethodReport]:
    """Verifies methods in order; earlier methods enter later contexts."""
    engine = InclusionEngine(backend)
    ctx = TypingContext()
    reports = []
    for m in program.methods:
        sink = dot_sink_factory(m.name) if dot_sink_factory else None
        rep = verify_method(program, m, backend, ctx, engine, paranoid,
                            rank_log, sink)
        reports.append(rep)
        if rep.verdict == "verified" and not isinstance(m.ascribed, (HTriple, HInter)):
            try:
                ctx = ctx.bind(m.name, m.ascribed)
            except Exception:
                pass
    return reports
