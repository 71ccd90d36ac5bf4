"""The context-aware inclusion query between two symbolic automata.

For each satisfiable sign assignment over the context literals, both sides
are rewritten over that combination's minterm alphabet and checked with the
classical product construction.  The query succeeds only when every
combination passes; a solver Unknown anywhere makes the whole query
undecided, which callers treat as non-inclusion.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from .automata import Fa, alphabet_transform, compile_fa, fa_included
from .desugar import desugar
from .minterms import (
    MintermAlphabet,
    MintermUndecided,
    build_minterms,
    context_combinations,
    gather_literals,
)
from .qualifiers import Qualifier
from .sfa import Sfa, Srl, SrlAnd, SrlConcat, SrlDiff, SrlEps, SrlEvent, SrlOr, SrlStar, SrlAny, SrlEmpty
from .solver import LogicalContext, SolverBackend


@dataclass
class QueryStats:
    n_sat: int = 0
    n_inc: int = 0
    t_sat: float = 0.0
    t_inc: float = 0.0
    t_total: float = 0.0
    fa_sizes: list[int] = field(default_factory=list)
    n_branch: int = 0
    n_app: int = 0

    def avg_fa_size(self) -> float:
        return sum(self.fa_sizes) / len(self.fa_sizes) if self.fa_sizes else 0.0


@dataclass
class InclusionResult:
    ok: bool
    undecided: bool = False
    reason: str = ""
    counterexample: Optional[list[str]] = None
    phi_gamma: Optional[Qualifier] = None

    def __bool__(self) -> bool:
        return self.ok


DotSink = Callable[[Fa, Fa, MintermAlphabet], None]


def _as_srl(a: Union[Sfa, Srl]) -> Srl:
    if isinstance(a, (SrlEvent, SrlAny, SrlEmpty, SrlEps, SrlAnd, SrlOr, SrlConcat, SrlDiff, SrlStar)):
        return a
    return desugar(a)


class InclusionEngine:
    """Caches query results and minterm alphabets across a checking session."""

    def __init__(self, backend: SolverBackend):
        self.backend = backend
        self._cache: dict = {}

    def subquery(self, ctx: LogicalContext, a: Union[Sfa, Srl], b: Union[Sfa, Srl],
                 stats: Optional[QueryStats] = None,
                 dot_sink: Optional[DotSink] = None) -> InclusionResult:
        srl_a = _as_srl(a)
        srl_b = _as_srl(b)
        key = (ctx.digest(), srl_a, srl_b)
        if dot_sink is None and key in self._cache:
            return self._cache[key]
        res = self._subquery_uncached(ctx, srl_a, srl_b, stats, dot_sink)
        self._cache[key] = res
        return res

    def _subquery_uncached(self, ctx: LogicalContext, srl_a: Srl, srl_b: Srl,
                           stats: Optional[QueryStats],
                           dot_sink: Optional[DotSink]) -> InclusionResult:
        backend = self.backend
        t0 = time.perf_counter()
        before = getattr(backend, "num_queries", 0)
        try:
            lits = gather_literals(ctx, [srl_a, srl_b])
            combos = context_combinations(ctx, lits, backend)
            alphabets = [
                build_minterms(ctx, lits, signs, phi_g, backend)
                for signs, phi_g in combos
            ]
            transformed = []
            for alphabet in alphabets:
                rx_a = alphabet_transform(ctx, alphabet, srl_a, backend)
                rx_b = alphabet_transform(ctx, alphabet, srl_b, backend)
                transformed.append((alphabet, rx_a, rx_b))
        except MintermUndecided as exc:
            if stats is not None:
                stats.t_sat += time.perf_counter() - t0
                stats.n_sat += getattr(backend, "num_queries", 0) - before
            return InclusionResult(False, undecided=True, reason=str(exc))
        if stats is not None:
            stats.t_sat += time.perf_counter() - t0
            stats.n_sat += getattr(backend, "num_queries", 0) - before

        for alphabet, rx_a, rx_b in transformed:
            t1 = time.perf_counter()
            fa_a = compile_fa(rx_a, len(alphabet.minterms))
            fa_b = compile_fa(rx_b, len(alphabet.minterms))
            ok, witness = fa_included(fa_a, fa_b)
            if stats is not None:
                stats.n_inc += 1
                stats.t_inc += time.perf_counter() - t1
                stats.fa_sizes.append(fa_a.transition_count())
                stats.fa_sizes.append(fa_b.transition_count())
            if dot_sink is not None:
                dot_sink(fa_a, fa_b, alphabet)
            if not ok:
                labels = [alphabet.minterms[l].label() for l in witness or []]
                return InclusionResult(
                    False, counterexample=labels, phi_gamma=alphabet.context_qual
                )
        return InclusionResult(True)


def subqueryA(ctx: LogicalContext, a: Union[Sfa, Srl], b: Union[Sfa, Srl],
              backend: SolverBackend, stats: Optional[QueryStats] = None,
              dot_sink: Optional[DotSink] = None) -> InclusionResult:
    """One-shot inclusion query (no cross-query caching)."""
    return InclusionEngine(backend).subquery(ctx, a, b, stats, dot_sink)
