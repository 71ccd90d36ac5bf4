"""Validity checking behind base subtyping and minterm satisfiability.

Two interchangeable backends sit behind one three-valued contract:

* BoundedModel enumerates assignments over finite domains (ints from a
  configurable window, opaque sorts from a small symbol pool).  Uninterpreted
  functions and method predicates are decided pointwise at the application
  points a candidate assignment actually touches, with axioms instantiated at
  those points.  Answers are refutation-complete relative to the bound; a
  sweep that had to evaluate arithmetic far outside the window reports
  Unknown rather than Valid.

* ExternalSmt drives any SMT-LIB v2 solver over a subprocess's stdin/stdout,
  one (reset) between queries.
"""

from __future__ import annotations

import itertools
import select
import subprocess
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

from .ast import BOOL, INT, UNIT, UNIT_VALUE, BaseType, Sym
from .qualifiers import (
    FALSE,
    TRUE,
    LApp,
    LConst,
    Literal,
    LVar,
    QAnd,
    QForall,
    QImpl,
    QLit,
    QNot,
    QOr,
    QTrue,
    QFalse,
    Qualifier,
    Signature,
    free_vars,
    qand,
    qnot,
)

NU = "nu"


# ---------------------------------------------------------------------------
# Results


@dataclass(frozen=True)
class Valid:
    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Invalid:
    model: Mapping[str, object] = field(default_factory=dict)

    def __bool__(self) -> bool:
        return False


@dataclass(frozen=True)
class Unknown:
    reason: str = ""

    def __bool__(self) -> bool:
        return False


CheckResult = Union[Valid, Invalid, Unknown]


class SolverUnavailable(Exception):
    pass


class BaseTypeMismatch(Exception):
    pass


# ---------------------------------------------------------------------------
# Logical contexts


@dataclass(frozen=True)
class Binding:
    name: str
    base: BaseType
    qual: Qualifier  # over NU


@dataclass(frozen=True)
class LogicalContext:
    """Base-typed binders with refinements, plus named axioms and sorts."""

    sig: Signature
    bindings: tuple[Binding, ...] = ()
    axioms: tuple[tuple[str, Qualifier], ...] = ()

    def extend(self, name: str, base: BaseType, qual: Qualifier = TRUE) -> "LogicalContext":
        return LogicalContext(self.sig, self.bindings + (Binding(name, base, qual),), self.axioms)

    def extend_many(self, items: Iterable[tuple[str, BaseType, Qualifier]]) -> "LogicalContext":
        bs = tuple(Binding(n, b, q) for n, b, q in items)
        return LogicalContext(self.sig, self.bindings + bs, self.axioms)

    def base_of(self, name: str) -> Optional[BaseType]:
        for b in reversed(self.bindings):
            if b.name == name:
                return b.base
        return None

    def premises(self) -> list[Qualifier]:
        from .qualifiers import substitute

        out = []
        for b in self.bindings:
            if not isinstance(b.qual, QTrue):
                out.append(substitute(b.qual, NU, LVar(b.name)))
        return out

    def digest(self) -> tuple:
        return (self.bindings, self.axioms)


# ---------------------------------------------------------------------------
# Bounded-model backend


_BUILTIN_OPS = {"+", "-", "==", "!=", "<", "<=", ">", ">=", "mod"}


class _Choice(Exception):
    def __init__(self, key: tuple, domain: list[object]):
        self.key = key
        self.domain = domain


def _conjuncts(q: Qualifier) -> list[Qualifier]:
    match q:
        case QAnd(args):
            out: list[Qualifier] = []
            for a in args:
                out.extend(_conjuncts(a))
            return out
        case QNot(QOr(args)):
            out = []
            for a in args:
                out.extend(_conjuncts(qnot(a)))
            return out
        case QNot(QImpl(a, b)):
            return _conjuncts(a) + _conjuncts(qnot(b))
        case QNot(QNot(a)):
            return _conjuncts(a)
        case _:
            return [q]


def _pin_substitution(constraints: Sequence[Qualifier],
                      enum_vars: set[str]) -> dict[str, Literal]:
    """Variables defined by positive top-level equalities, resolved acyclically."""
    from .qualifiers import lit_free_vars, lit_subst

    raw: list[tuple[str, Literal]] = []
    for c in constraints:
        for atom in _conjuncts(c):
            if not isinstance(atom, QLit):
                continue
            match atom.lit:
                case LApp("==", (LVar(x), t), _):
                    raw.append((x, t))
                    if isinstance(t, LVar):
                        raw.append((t.name, LVar(x)))
                case LApp("==", (t, LVar(x)), _):
                    raw.append((x, t))
        # Only the first constraint layer matters for correctness; scanning
        # all of them just finds more pins.
    pins: dict[str, Literal] = {}
    for x, t in raw:
        if x not in enum_vars or x in pins:
            continue
        t2 = lit_subst(t, pins)
        if x in lit_free_vars(t2):
            continue
        pins[x] = t2
        # Re-resolve earlier pins through the new one.
        for y in list(pins):
            pins[y] = lit_subst(pins[y], {x: t2})
    return pins


class BoundedModel:
    """Exhaustive enumeration over declared finite domains.

    Constraints are partitioned into connected components (linked by shared
    variables or shared uninterpreted symbols); only the goal's component is
    swept, while foreign components are satisfiability-checked independently
    so that contradictory context premises still yield vacuous validity.
    """

    def __init__(self, int_window: tuple[int, int] = (-4, 4),
                 opaque_size: int = 3,
                 domain_sizes: Optional[Mapping[str, int]] = None):
        self.int_window = int_window
        self.opaque_size = opaque_size
        self.domain_sizes = dict(domain_sizes or {})
        self.num_queries = 0
        self._cache: dict = {}
        self._group_cache: dict = {}
        self._compiled: dict = {}

    # -- domains

    def domain(self, base: BaseType) -> list[object]:
        if base.kind in ("int", "nat"):
            lo, hi = self.int_window
            vals = list(range(lo, hi + 1))
            return [v for v in vals if v >= 0] if base.kind == "nat" else vals
        if base.kind == "bool":
            return [False, True]
        if base.kind == "unit":
            return [UNIT_VALUE]
        size = self.domain_sizes.get(base.sort, self.opaque_size)
        return [Sym(base.sort, f"{base.sort.lower()}{i}") for i in range(size)]

    def _fn_codomain(self, sig: Signature, op: str) -> list[object]:
        if op in sig.method_preds:
            return [False, True]
        _, cod = sig.pure_ops[op]
        return self.domain(cod)

    # -- compiled evaluation with deferred choices for uninterpreted symbols

    def _compile_lit(self, sig: Signature, l: Literal):
        match l:
            case LConst(v):
                return lambda env, interp, mags: v
            case LVar(name):
                return lambda env, interp, mags: env[name]
            case LApp(op, args, _):
                arg_fns = [self._compile_lit(sig, a) for a in args]
                if op in _BUILTIN_OPS:
                    if op == "==":
                        fa, fb = arg_fns
                        return lambda env, interp, mags: fa(env, interp, mags) == fb(env, interp, mags)
                    if op == "!=":
                        fa, fb = arg_fns
                        return lambda env, interp, mags: fa(env, interp, mags) != fb(env, interp, mags)

                    import operator

                    table = {"+": operator.add, "-": operator.sub, "<": operator.lt,
                             "<=": operator.le, ">": operator.gt, ">=": operator.ge}
                    if op == "mod":
                        fa, fb = arg_fns

                        def run_mod(env, interp, mags):
                            a = fa(env, interp, mags)
                            b = fb(env, interp, mags)
                            return a % b if b != 0 else 0

                        return run_mod
                    fn = table[op]
                    fa, fb = arg_fns
                    if op in ("+", "-"):
                        def run_arith(env, interp, mags):
                            r = fn(fa(env, interp, mags), fb(env, interp, mags))
                            if r > mags[0]:
                                mags[0] = r
                            elif -r > mags[0]:
                                mags[0] = -r
                            return r

                        return run_arith
                    return lambda env, interp, mags: fn(fa(env, interp, mags), fb(env, interp, mags))
                codomain = self._fn_codomain(sig, op)

                def run_app(env, interp, mags):
                    key = (op, tuple(f(env, interp, mags) for f in arg_fns))
                    if key in interp:
                        return interp[key]
                    raise _Choice(key, codomain)

                return run_app
        raise TypeError(l)

    def _compile_qual(self, sig: Signature, q: Qualifier):
        cached = self._compiled.get(q)
        if cached is not None:
            return cached
        match q:
            case QTrue():
                fn = lambda env, interp, mags: True
            case QFalse():
                fn = lambda env, interp, mags: False
            case QLit(l):
                fn = self._compile_lit(sig, l)
            case QNot(a):
                fa = self._compile_qual(sig, a)
                fn = lambda env, interp, mags: not fa(env, interp, mags)
            case QAnd(args):
                fns = [self._compile_qual(sig, a) for a in args]
                fn = lambda env, interp, mags: all(f(env, interp, mags) for f in fns)
            case QOr(args):
                fns = [self._compile_qual(sig, a) for a in args]
                fn = lambda env, interp, mags: any(f(env, interp, mags) for f in fns)
            case QImpl(a, b):
                fa = self._compile_qual(sig, a)
                fb = self._compile_qual(sig, b)
                fn = lambda env, interp, mags: (not fa(env, interp, mags)) or fb(env, interp, mags)
            case QForall(x, b, body):
                fbody = self._compile_qual(sig, body)
                dom = self.domain(b)

                def run_forall(env, interp, mags, _x=x, _dom=dom, _f=fbody):
                    env2 = dict(env)
                    for v in _dom:
                        env2[_x] = v
                        if not _f(env2, interp, mags):
                            return False
                    return True

                fn = run_forall
            case _:
                raise TypeError(q)
        self._compiled[q] = fn
        return fn

    def _satisfy(self, fns: Sequence, env: Mapping[str, object], interp: dict,
                 mags: list[int], start: int = 0) -> Optional[dict]:
        """Completes `interp` so every compiled constraint holds, or None.

        Branches lazily on uninterpreted application points; identical
        ground arguments share one value (congruence by construction).
        Constraints before `start` hold already and never depend on points
        chosen later, so the search resumes rather than restarts.
        """
        i = start
        while i < len(fns):
            try:
                ok = fns[i](env, interp, mags)
            except _Choice as ch:
                for v in ch.domain:
                    interp[ch.key] = v
                    res = self._satisfy(fns, env, interp, mags, i)
                    if res is not None:
                        return res
                    del interp[ch.key]
                return None
            if not ok:
                return None
            i += 1
        return dict(interp)

    # -- public checking

    def check(self, ctx: LogicalContext, goal: Qualifier) -> CheckResult:
        """Valid iff premises ∧ axioms entail goal on every bounded model."""
        self.num_queries += 1
        key = (ctx.digest(), goal)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = self._check_uncached(ctx, goal)
        self._cache[key] = res
        return res

    @staticmethod
    def _symbols(q: Qualifier) -> frozenset[str]:
        out: set[str] = set()

        def lit(l: Literal) -> None:
            if isinstance(l, LApp):
                if l.op not in _BUILTIN_OPS:
                    out.add("#" + l.op)
                for a in l.args:
                    lit(a)

        def walk(p: Qualifier) -> None:
            match p:
                case QLit(l):
                    lit(l)
                case QNot(a):
                    walk(a)
                case QAnd(args) | QOr(args):
                    for a in args:
                        walk(a)
                case QImpl(a, b):
                    walk(a)
                    walk(b)
                case QForall(x, _, body):
                    walk(body)
                case _:
                    pass

        walk(q)
        return frozenset(out) | frozenset(free_vars(q))

    def _check_uncached(self, ctx: LogicalContext, goal: Qualifier) -> CheckResult:
        sig = ctx.sig
        base_of = {b.name: b.base for b in ctx.bindings}
        premises = ctx.premises()
        axioms = [q for _, q in ctx.axioms]
        stray = set(free_vars(goal)) - set(base_of)
        for p in premises:
            stray |= free_vars(p) - set(base_of)
        if stray:
            return Unknown(f"free variables outside context: {sorted(stray)}")

        # Connected components over shared variables / uninterpreted symbols.
        items = [(p, self._symbols(p)) for p in premises + axioms]
        relevant = set(self._symbols(goal))
        main: list[Qualifier] = []
        rest = list(items)
        changed = True
        while changed:
            changed = False
            still = []
            for p, syms in rest:
                if (syms & relevant) or not syms:
                    relevant |= syms
                    main.append(p)
                    changed = True
                else:
                    still.append((p, syms))
            rest = still

        # Foreign components: unsatisfiable ones make everything vacuous.
        while rest:
            grp = [rest[0]]
            rest = rest[1:]
            syms = set(grp[0][1])
            changed = True
            while changed:
                changed = False
                still = []
                for p, s in rest:
                    if s & syms:
                        syms |= s
                        grp.append((p, s))
                        changed = True
                    else:
                        still.append((p, s))
                rest = still
            gkey = (tuple(p for p, _ in grp),
                    tuple(sorted((v, str(base_of[v])) for v in syms if not v.startswith("#"))))
            sat = self._group_cache.get(gkey)
            if sat is None:
                sat = self._exists_model(sig, [p for p, _ in grp],
                                         sorted(v for v in syms if not v.startswith("#")),
                                         base_of)
                self._group_cache[gkey] = sat
            if not sat:
                return Valid()

        enum_vars = sorted(v for v in relevant if not v.startswith("#"))
        constraints = main + [qnot(goal)]

        # Equality pins appearing as positive conjuncts define their variable
        # exactly, so those variables need no enumeration; pinned variables
        # take the exact term value even when it falls outside the window.
        pins = _pin_substitution(constraints, set(enum_vars))
        if pins:
            from .qualifiers import substitute_many

            constraints = [substitute_many(c, pins) for c in constraints]
            enum_vars = [v for v in enum_vars if v not in pins]

        fns = [self._compile_qual(sig, c) for c in constraints]
        domains = [self.domain(base_of[v]) for v in enum_vars]
        mags = [0]
        for assignment in itertools.product(*domains):
            env = dict(zip(enum_vars, assignment))
            model = self._satisfy(fns, env, {}, mags)
            if model is not None:
                show = dict(env)
                show.update({f"{k[0]}{list(k[1])}": v for k, v in model.items()})
                return Invalid(show)
        lo, hi = self.int_window
        guard = 2 * max(abs(lo), abs(hi))
        if mags[0] > guard:
            return Unknown("arithmetic exceeded the bounded window")
        return Valid()

    def _exists_model(self, sig: Signature, constraints: list[Qualifier],
                      names: list[str], base_of: Mapping[str, BaseType]) -> bool:
        fns = [self._compile_qual(sig, c) for c in constraints]
        domains = [self.domain(base_of[n]) for n in names]
        mags = [0]
        for assignment in itertools.product(*domains):
            env = dict(zip(names, assignment))
            if self._satisfy(fns, env, {}, mags) is not None:
                return True
        return False

    def close(self) -> None:
        pass


# ---------------------------------------------------------------------------
# SMT-LIB translation


_SMT_OPS = {"+": "+", "-": "-", "==": "=", "<": "<", "<=": "<=", ">": ">",
            ">=": ">=", "mod": "mod"}


def _smt_symbol(name: str) -> str:
    if name.isidentifier():
        return name
    return "|" + name.replace("|", "_") + "|"


def smt_sort(base: BaseType) -> str:
    if base.kind in ("int", "nat"):
        return "Int"
    if base.kind == "bool":
        return "Bool"
    if base.kind == "unit":
        return "Unit"
    return _smt_symbol(base.sort)


def smt_literal(l: Literal) -> str:
    match l:
        case LConst(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, int):
                return str(v) if v >= 0 else f"(- {-v})"
            if isinstance(v, Sym):
                return _smt_symbol(f"{v.sort}.{v.name}")
            return "unit.u"
        case LVar(name):
            return _smt_symbol(name)
        case LApp(op, args, _):
            parts = " ".join(smt_literal(a) for a in args)
            if op == "!=":
                return f"(distinct {parts})"
            return f"({_SMT_OPS.get(op, _smt_symbol(op))} {parts})"
    raise TypeError(l)


def smt_qualifier(q: Qualifier) -> str:
    match q:
        case QTrue():
            return "true"
        case QFalse():
            return "false"
        case QLit(l):
            return smt_literal(l)
        case QNot(a):
            return f"(not {smt_qualifier(a)})"
        case QAnd(args):
            return "(and " + " ".join(smt_qualifier(a) for a in args) + ")"
        case QOr(args):
            return "(or " + " ".join(smt_qualifier(a) for a in args) + ")"
        case QImpl(a, b):
            return f"(=> {smt_qualifier(a)} {smt_qualifier(b)})"
        case QForall(x, b, body):
            return f"(forall (({_smt_symbol(x)} {smt_sort(b)})) {smt_qualifier(body)})"
    raise TypeError(q)


def smt_script(ctx: LogicalContext, goal: Qualifier) -> list[str]:
    """The per-query command sequence (between resets)."""
    sig = ctx.sig
    lines = ["(set-logic ALL)", "(declare-sort Unit 0)",
             "(assert (forall ((u0 Unit) (u1 Unit)) (= u0 u1)))"]
    for s in sorted(sig.sorts):
        lines.append(f"(declare-sort {_smt_symbol(s)} 0)")
    # Ground opaque constants appearing in the query are declared on demand.
    consts: set[tuple[str, str]] = set()

    def scan_lit(l: Literal) -> None:
        if isinstance(l, LConst) and isinstance(l.value, Sym):
            consts.add((l.value.sort, l.value.name))
        if isinstance(l, LApp):
            for a in l.args:
                scan_lit(a)

    def scan(q: Qualifier) -> None:
        match q:
            case QLit(l):
                scan_lit(l)
            case QNot(a):
                scan(a)
            case QAnd(args) | QOr(args):
                for a in args:
                    scan(a)
            case QImpl(a, b):
                scan(a)
                scan(b)
            case QForall(_, _, body):
                scan(body)
            case _:
                pass

    for p in ctx.premises():
        scan(p)
    for _, ax in ctx.axioms:
        scan(ax)
    scan(goal)
    for sort, name in sorted(consts):
        lines.append(f"(declare-const {_smt_symbol(f'{sort}.{name}')} {_smt_symbol(sort)})")
    if any(True for _ in consts):
        by_sort: dict[str, list[str]] = {}
        for sort, name in sorted(consts):
            by_sort.setdefault(sort, []).append(_smt_symbol(f"{sort}.{name}"))
        for sort, syms in by_sort.items():
            if len(syms) > 1:
                lines.append(f"(assert (distinct {' '.join(syms)}))")
    lines.append("(declare-const unit.u Unit)")
    for name, doms in sorted(sig.method_preds.items()):
        args = " ".join(smt_sort(d) for d in doms)
        lines.append(f"(declare-fun {_smt_symbol(name)} ({args}) Bool)")
    for name, (doms, cod) in sorted(sig.pure_ops.items()):
        args = " ".join(smt_sort(d) for d in doms)
        lines.append(f"(declare-fun {_smt_symbol(name)} ({args}) {smt_sort(cod)})")
    for b in ctx.bindings:
        lines.append(f"(declare-const {_smt_symbol(b.name)} {smt_sort(b.base)})")
        if b.base.kind == "nat":
            lines.append(f"(assert (>= {_smt_symbol(b.name)} 0))")
    for p in ctx.premises():
        lines.append(f"(assert {smt_qualifier(p)})")
    for _, ax in ctx.axioms:
        lines.append(f"(assert {smt_qualifier(ax)})")
    lines.append(f"(assert (not {smt_qualifier(goal)}))")
    lines.append("(check-sat)")
    return lines


class ExternalSmt:
    """Drives one SMT-LIB v2 solver process over stdin/stdout."""

    def __init__(self, command: Sequence[str], timeout_ms: int = 5000):
        self.command = list(command)
        self.timeout_ms = timeout_ms
        self.num_queries = 0
        self._proc: Optional[subprocess.Popen] = None
        self._cache: dict = {}

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            try:
                self._proc = subprocess.Popen(
                    self.command,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.DEVNULL,
                    text=True,
                    bufsize=1,
                )
            except OSError as exc:
                raise SolverUnavailable(f"cannot spawn {self.command!r}: {exc}")
        return self._proc

    def _read_answer(self, proc: subprocess.Popen, deadline: float) -> Optional[str]:
        assert proc.stdout is not None
        buf = ""
        while time.monotonic() < deadline:
            ready, _, _ = select.select([proc.stdout], [], [], 0.05)
            if not ready:
                if proc.poll() is not None:
                    return None
                continue
            line = proc.stdout.readline()
            if line == "":
                return None
            word = line.strip()
            buf += word
            if word in ("sat", "unsat", "unknown"):
                return word
            if word.startswith("(error"):
                return "error:" + word
        return None

    def check(self, ctx: LogicalContext, goal: Qualifier) -> CheckResult:
        self.num_queries += 1
        key = (ctx.digest(), goal)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        res = self._check_uncached(ctx, goal)
        self._cache[key] = res
        return res

    def _check_uncached(self, ctx: LogicalContext, goal: Qualifier) -> CheckResult:
        proc = self._ensure()
        assert proc.stdin is not None
        script = smt_script(ctx, goal)
        try:
            proc.stdin.write("(reset)\n")
            for line in script:
                proc.stdin.write(line + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError):
            self._proc = None
            return Unknown("solver process died")
        deadline = time.monotonic() + self.timeout_ms / 1000.0
        answer = self._read_answer(proc, deadline)
        if answer == "unsat":
            return Valid()
        if answer == "sat":
            return Invalid({})
        if answer is None:
            # Timeout: the process may still be busy; restart it.
            try:
                proc.kill()
            except OSError:
                pass
            self._proc = None
            return Unknown("solver timeout")
        return Unknown(answer)

    def close(self) -> None:
        if self._proc is not None:
            try:
                self._proc.stdin.write("(exit)\n")  # type: ignore[union-attr]
                self._proc.stdin.flush()  # type: ignore[union-attr]
            except Exception:
                pass
            try:
                self._proc.kill()
            except Exception:
                pass
            self._proc = None


SolverBackend = Union[BoundedModel, ExternalSmt]


# ---------------------------------------------------------------------------
# The two public operations


def check_valid(ctx: LogicalContext, goal: Qualifier,
                backend: SolverBackend) -> CheckResult:
    return backend.check(ctx, goal)


def subtype_base(ctx: LogicalContext, base1: BaseType, q1: Qualifier,
                 base2: BaseType, q2: Qualifier, backend: SolverBackend) -> bool:
    """{nu:b|q1} <: {nu:b|q2}: valid(premises ⟹ ∀nu. q1 ⟹ q2).

    Unknown counts as false (soundness over completeness).
    """
    from .ast import base_compatible

    if not base_compatible(base1, base2):
        raise BaseTypeMismatch(f"{base1} vs {base2}")
    ctx2 = ctx.extend(NU, base1, TRUE)
    res = check_valid(ctx2, QImpl(q1, q2), backend)
    return isinstance(res, Valid)


def is_satisfiable(ctx: LogicalContext, base_env: Sequence[tuple[str, BaseType]],
                   phi: Qualifier, backend: SolverBackend) -> Union[bool, Unknown]:
    """Whether phi is satisfiable under the context plus extra binders.

    Mirrors the check `Γ, x̄ ⊬ {ν:b|φ} <: {ν:b|⊥}`: phi is satisfiable
    exactly when that subtyping fails.
    """
    ctx2 = ctx.extend_many([(n, b, TRUE) for n, b in base_env])
    res = check_valid(ctx2, qnot(phi), backend)
    if isinstance(res, Invalid):
        return True
    if isinstance(res, Valid):
        return False
    return res
