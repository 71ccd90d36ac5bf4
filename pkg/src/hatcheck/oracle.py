"""Brute-force oracles: trace enumeration, denotation sampling, soundness fuzzing.

Everything here is independent of the minterm/automata pipeline: acceptance
is decided by the literal trace-language denotation, and methods are run by
the small-step interpreter.  Bounded domains make every answer decidable;
the answers are refutation-complete only relative to the bound.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

from .ast import (
    BOOL,
    INT,
    UNIT,
    UNIT_VALUE,
    BaseType,
    Const,
    Lambda,
    LetApp,
    Sym,
    Term,
    Val,
    Value,
    Var,
)
from .hats import HInter, HTriple, RArrow, RBase, RGhost, TypeLike, inter_parts, subst_type
from .qualifiers import LConst, Literal, Model, Qualifier, Signature, eval_qualifier
from .runtime import (
    EMPTY_TRACE,
    Event,
    OUT_OF_FUEL,
    RunResult,
    Runtime,
    STUCK,
    Trace,
    run,
)
from .sfa import Sfa, Srl, accepts, accepts_srl


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class EnumConfig:
    sig: Signature
    int_domain: list[int] = field(default_factory=lambda: [0, 1, 2])
    opaque_sizes: dict[str, int] = field(default_factory=dict)
    opaque_values: dict[str, list[Sym]] = field(default_factory=dict)
    max_len: int = 6
    max_samples: int = 10_000
    model: Model = field(default_factory=Model)
    fuel: int = 2_000

    def domain(self, base: BaseType) -> list[object]:
        if base.kind in ("int", "nat"):
            return [v for v in self.int_domain if base.kind == "int" or v >= 0]
        if base.kind == "bool":
            return [False, True]
        if base.kind == "unit":
            return [UNIT_VALUE]
        if base.sort in self.opaque_values:
            return list(self.opaque_values[base.sort])
        n = self.opaque_sizes.get(base.sort, 3)
        return [Sym(base.sort, f"{base.sort.lower()}{i}") for i in range(n)]

    def quantifier_domains(self) -> dict[str, list[object]]:
        out: dict[str, list[object]] = {
            "int": list(self.int_domain),
            "nat": [v for v in self.int_domain if v >= 0],
            "bool": [False, True],
            "unit": [UNIT_VALUE],
        }
        sorts = set(self.opaque_sizes) | set(self.opaque_values) | self.sig.sorts
        for s in sorts:
            out[s] = self.domain(BaseType("opaque", s))
        return out

    def ground_events(self) -> list[Event]:
        """The finite well-formed event alphabet, deterministic order."""
        out: list[Event] = []
        for op in sorted(self.sig.eff_ops):
            doms, cod = self.sig.eff_ops[op]
            arg_domains = [self.domain(d) for d in doms]
            for args in itertools.product(*arg_domains):
                for res in self.domain(cod):
                    out.append(Event(op, args, res))
        return out


def enum_traces(cfg: EnumConfig) -> Iterator[Trace]:
    """All well-formed traces in length-lexicographic order, up to the bound."""
    sigma = cfg.ground_events()
    for length in range(cfg.max_len + 1):
        for combo in itertools.product(sigma, repeat=length):
            yield tuple(combo)


def count_traces(cfg: EnumConfig) -> int:
    n = len(cfg.ground_events())
    return sum(n ** L for L in range(cfg.max_len + 1))


def random_trace(cfg: EnumConfig, rng: random.Random,
                 max_len: Optional[int] = None) -> Trace:
    sigma = cfg.ground_events()
    length = rng.randint(0, max_len if max_len is not None else cfg.max_len)
    return tuple(rng.choice(sigma) for _ in range(length))


# ---------------------------------------------------------------------------
# Brute-force inclusion


@dataclass
class BruteResult:
    included: bool
    counterexample: Optional[Trace] = None
    sigma: Optional[dict[str, Literal]] = None

    def __bool__(self) -> bool:
        return self.included


def brute_inclusion(a: Union[Sfa, Srl], b: Union[Sfa, Srl],
                    sigmas: Sequence[dict[str, Literal]],
                    cfg: EnumConfig) -> BruteResult:
    """True iff no enumerated (sigma, trace) is accepted by a but not b.

    Enumeration is length-lex, so the first counterexample is shortest.
    """
    domains = cfg.quantifier_domains()
    is_srl_a = not isinstance(a, tuple) and type(a).__name__.startswith("Srl")
    is_srl_b = type(b).__name__.startswith("Srl")

    def acc(formula, alpha, sigma, srl: bool) -> bool:
        if srl:
            return accepts_srl(alpha, formula, sigma, cfg.model, domains)
        return accepts(alpha, formula, sigma, cfg.model, domains)

    for sigma in sigmas or [{}]:
        for alpha in enum_traces(cfg):
            if acc(a, alpha, sigma, is_srl_a) and not acc(b, alpha, sigma, is_srl_b):
                return BruteResult(False, alpha, dict(sigma))
    return BruteResult(True)


# ---------------------------------------------------------------------------
# Denotation evidence


@dataclass
class DenotesEvidence:
    ok: bool
    checked: int = 0
    witness_trace: Optional[Trace] = None
    detail: str = ""

    def __bool__(self) -> bool:
        return self.ok


def value_in_denotation(v: object, t: RBase, cfg: EnumConfig) -> bool:
    return eval_qualifier(t.qual, {"nu": v}, cfg.model, cfg.quantifier_domains())


def _trivial_arg(t: TypeLike, cfg: EnumConfig, rng: random.Random) -> list[Value]:
    """Candidate ground values for one parameter type."""
    if isinstance(t, RBase):
        dom = cfg.domain(t.base)
        vals = [Const(v) for v in dom
                if eval_qualifier(t.qual, {"nu": v}, cfg.model, cfg.quantifier_domains())]
        return vals
    if isinstance(t, RArrow):
        # A do-nothing closure: enough to drive thunk-shaped parameters.
        return [Lambda(t.param if isinstance(t.param, str) else "u", None,
                       Val(Const(UNIT_VALUE)))]
    return []


def _sample_pre_traces(pre: Union[Sfa, Srl], cfg: EnumConfig, rng: random.Random,
                       want: int, budget: int) -> list[Trace]:
    domains = cfg.quantifier_domains()
    is_srl = type(pre).__name__.startswith("Srl")
    out: list[Trace] = []
    for _ in range(budget):
        if len(out) >= want:
            break
        alpha = random_trace(cfg, rng)
        ok = (accepts_srl if is_srl else accepts)(alpha, pre, None, cfg.model, domains)
        if ok:
            out.append(alpha)
    return out


def denotes(e: Term, tau: HTriple, cfg: EnumConfig, runtime: Runtime,
            samples: int = 50, rng: Optional[random.Random] = None,
            exhaustive_len: Optional[int] = None) -> DenotesEvidence:
    """Sampling oracle for the triple denotation of a closed term.

    Enumerates or samples context traces accepted by the precondition, runs
    the term, and demands a non-stuck value in the inner denotation with the
    extended trace accepted by the postcondition.
    """
    rng = rng or random.Random(0)
    domains = cfg.quantifier_domains()
    pre, inner, post = tau.pre, tau.inner, tau.post

    def acc(formula, alpha) -> bool:
        if type(formula).__name__.startswith("Srl"):
            return accepts_srl(alpha, formula, None, cfg.model, domains)
        return accepts(alpha, formula, None, cfg.model, domains)

    if exhaustive_len is not None:
        small = EnumConfig(cfg.sig, cfg.int_domain, cfg.opaque_sizes,
                           cfg.opaque_values, exhaustive_len, cfg.max_samples,
                           cfg.model, cfg.fuel)
        pre_traces = [a for a in enum_traces(small) if acc(pre, a)]
    else:
        pre_traces = _sample_pre_traces(pre, cfg, rng, samples, cfg.max_samples)

    checked = 0
    for alpha in pre_traces:
        res = run(alpha, e, cfg.fuel, runtime)
        if res.outcome == STUCK:
            return DenotesEvidence(False, checked, alpha, "stuck")
        if res.outcome == OUT_OF_FUEL:
            return DenotesEvidence(False, checked, alpha, "out of fuel")
        if isinstance(inner, RBase):
            assert isinstance(res.value, Const), f"non-constant result {res.value}"
            if not value_in_denotation(res.value.value, inner, cfg):
                return DenotesEvidence(False, checked, alpha,
                                       f"result {res.value} outside {inner}")
        if not acc(post, alpha + res.emitted):
            return DenotesEvidence(False, checked, alpha,
                                   "extended trace rejected by postcondition")
        checked += 1
    return DenotesEvidence(True, checked)


# ---------------------------------------------------------------------------
# Soundness fuzzing of whole methods


@dataclass
class FuzzReport:
    method: str
    samples: int
    violations: int
    first_witness: Optional[str] = None
    stuck: int = 0

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "samples": self.samples,
            "violations": self.violations,
            "stuck": self.stuck,
            "first_witness": self.first_witness,
        }


def _ground_literal(v: object) -> Literal:
    return LConst(v)


def fuzz_soundness(name: str, term: Value, ascribed: TypeLike, cfg: EnumConfig,
                   runtime: Runtime, samples: int = 100,
                   rng: Optional[random.Random] = None,
                   stop_at_first: bool = False) -> FuzzReport:
    """Runs a method on sampled precondition traces and ground arguments.

    Reports postcondition violations and stuck executions; zero of both is
    the expected outcome for checker-verified methods.
    """
    from .checker import decompose_fn

    rng = rng or random.Random(1)
    shape = decompose_fn(ascribed)
    domains = cfg.quantifier_domains()
    violations = 0
    stuck = 0
    first: Optional[str] = None
    done = 0
    attempts = 0
    max_attempts = samples * 40

    while done < samples and attempts < max_attempts:
        attempts += 1
        # Ground the ghosts.
        tau: TypeLike = shape.result
        params = list(shape.params)
        ghost_env: dict[str, object] = {}
        ok_ground = True
        for g, b in shape.ghosts:
            dom = cfg.domain(b)
            if not dom:
                ok_ground = False
                break
            gv = rng.choice(dom)
            ghost_env[g] = gv
            tau = subst_type(tau, g, _ground_literal(gv))
            params = [(pn, subst_type(pt, g, _ground_literal(gv))) for pn, pt in params]
        if not ok_ground:
            break
        # Ground the arguments left to right.
        arg_values: list[Value] = []
        for pname, ptype in params:
            cands = _trivial_arg(ptype, cfg, rng)
            if not cands:
                ok_ground = False
                break
            av = rng.choice(cands)
            arg_values.append(av)
            if isinstance(av, Const):
                lit = _ground_literal(av.value)
                tau = subst_type(tau, pname, lit)
                params = [(pn, subst_type(pt, pname, lit)) for pn, pt in params]
        if not ok_ground:
            break

        triples = inter_parts(tau) if isinstance(tau, (HTriple, HInter)) else ()
        if not triples:
            break
        triple = rng.choice(list(triples))

        alphas = _sample_pre_traces(triple.pre, cfg, rng, 1, 400)
        if not alphas:
            continue
        alpha = alphas[0]

        def acc2(formula, tr) -> bool:
            fn = accepts_srl if type(formula).__name__.startswith("Srl") else accepts
            return fn(tr, formula, None, cfg.model, domains)

        res = run(alpha, _apply_term(term, arg_values), cfg.fuel, runtime)
        done += 1
        bad: Optional[str] = None
        emitted = res.emitted
        if res.outcome == STUCK:
            stuck += 1
            bad = "stuck"
        elif res.outcome == OUT_OF_FUEL:
            bad = "out of fuel"
        else:
            if isinstance(triple.inner, RBase):
                if not isinstance(res.value, Const) or not value_in_denotation(
                    res.value.value, triple.inner, cfg
                ):
                    bad = f"result {res.value} outside {triple.inner}"
            full = alpha + res.emitted
            if bad is None and not acc2(triple.post, full):
                bad = "postcondition violated"
            if bad is None and isinstance(triple.inner, RArrow) and isinstance(res.value, Lambda):
                # Force a returned closure once, continuing from the current
                # context, and hold it to its own triple.
                bad, forced, was_stuck = _force_closure(
                    res.value, triple.inner, full, cfg, runtime, rng, acc2
                )
                if was_stuck:
                    stuck += 1
                emitted = res.emitted + forced
        if bad is not None:
            violations += 1
            if first is None:
                from .runtime import format_trace

                first = (f"{bad}; context:\n{format_trace(alpha)}\n"
                         f"emitted:\n{format_trace(emitted)}")
            if stop_at_first:
                break

    return FuzzReport(name, done, violations, first, stuck)


def _apply_term(fn: Value, args: Sequence[Value]) -> Term:
    """let r1 = f a1 in let r2 = r1 a2 in ... in rN"""
    if not args:
        return Val(fn)
    expr: Term = Val(Var(f"$r{len(args)}"))
    for i in range(len(args), 0, -1):
        head: Value = fn if i == 1 else Var(f"$r{i-1}")
        expr = LetApp(f"$r{i}", head, args[i - 1], expr)
    return expr


def _force_closure(closure: Value, arrow: RArrow, context: Trace,
                   cfg: EnumConfig, runtime: Runtime, rng: random.Random,
                   acc2) -> tuple[Optional[str], Trace, bool]:
    from .checker import decompose_fn

    shape = decompose_fn(arrow)
    tau: TypeLike = shape.result
    argvs: list[Value] = []
    for pname, ptype in shape.params:
        cands = _trivial_arg(ptype, cfg, rng)
        if not cands:
            return None, EMPTY_TRACE, False
        av = rng.choice(cands)
        argvs.append(av)
        if isinstance(av, Const):
            tau = subst_type(tau, pname, _ground_literal(av.value))
    triples = inter_parts(tau) if isinstance(tau, (HTriple, HInter)) else ()
    if not triples:
        return None, EMPTY_TRACE, False
    t2 = triples[0]
    if not acc2(t2.pre, context):
        return None, EMPTY_TRACE, False
    res = run(context, _apply_term(closure, argvs), cfg.fuel, runtime)
    if res.outcome == STUCK:
        return "stuck in returned closure", res.emitted, True
    if res.outcome == OUT_OF_FUEL:
        return "out of fuel in returned closure", res.emitted, False
    if isinstance(t2.inner, RBase):
        if not isinstance(res.value, Const) or not value_in_denotation(
            res.value.value, t2.inner, cfg
        ):
            return f"closure result {res.value} outside {t2.inner}", res.emitted, False
    if not acc2(t2.post, context + res.emitted):
        return "closure postcondition violated", res.emitted, False
    return None, res.emitted, False
