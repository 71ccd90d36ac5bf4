"""Minterm construction: the finite alphabet behind every inclusion query.

Literals gathered from the two automata and the typing context fall into two
pools: per-operator literals (those mentioning event-local variables) and
context literals (those over pure context variables only, including every
test-event qualifier and the literals of context refinements).  For each
satisfiable sign assignment over the context pool, every operator
contributes one letter per satisfiable sign assignment over its own pool.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

from .ast import BaseType
from .qualifiers import (
    TRUE,
    Literal,
    Qualifier,
    atoms_of,
    lit_free_vars,
    qand,
    qnot,
    QLit,
    substitute,
)
from .sfa import NU, OpEvent, Srl, Sfa, TestEvent, formula_events
from .solver import LogicalContext, SolverBackend, Unknown, is_satisfiable


class MintermUndecided(Exception):
    """The solver answered Unknown while pruning; the caller must treat the
    whole inclusion query as undecided."""


@dataclass(frozen=True)
class Minterm:
    op: str
    argvars: tuple[str, ...]
    basis: tuple[Literal, ...]
    signs: tuple[bool, ...]
    qual: Qualifier  # context combination conjoined with the signed literals
    index: int

    def label(self) -> str:
        bits = "".join("1" if s else "0" for s in self.signs)
        return f"{self.op}[{bits}]" if bits else f"{self.op}[]"

    def sign_map(self) -> dict[Literal, bool]:
        return dict(zip(self.basis, self.signs))


@dataclass(frozen=True)
class MintermAlphabet:
    context_qual: Qualifier
    context_signs: tuple[tuple[Literal, bool], ...]
    minterms: tuple[Minterm, ...]

    def of_op(self, op: str) -> list[Minterm]:
        return [m for m in self.minterms if m.op == op]


@dataclass(frozen=True)
class GatheredLiterals:
    op_literals: dict[str, list[Literal]]
    context_literals: list[Literal]


def _locals_of(ev: OpEvent) -> set[str]:
    return set(ev.argvars) | {NU}


def gather_literals(ctx: LogicalContext,
                    formulas: Sequence[Union[Sfa, Srl]]) -> GatheredLiterals:
    """Splits atoms into per-operator and context pools, source order, deduped.

    Context refinements contribute first (with nu replaced by the binder
    name); then formula events in order.  An event-qualifier atom that
    mentions no event-local variable is a context fact and goes to the
    context pool.
    """
    op_lits: dict[str, list[Literal]] = {op: [] for op in ctx.sig.eff_ops}
    op_seen: dict[str, set[Literal]] = {op: set() for op in ctx.sig.eff_ops}
    ctx_lits: list[Literal] = []
    ctx_seen: set[Literal] = set()

    def add_ctx(l: Literal) -> None:
        if l not in ctx_seen:
            ctx_seen.add(l)
            ctx_lits.append(l)

    def add_op(op: str, l: Literal) -> None:
        if op not in op_lits:
            op_lits[op] = []
            op_seen[op] = set()
        if l not in op_seen[op]:
            op_seen[op].add(l)
            op_lits[op].append(l)

    from .qualifiers import LApp, LConst, LVar

    for b in ctx.bindings:
        for atom in atoms_of(substitute(b.qual, NU, LVar(b.name))):
            add_ctx(atom)
    for f in formulas:
        for ev in formula_events(f):
            if isinstance(ev, TestEvent):
                for atom in atoms_of(ev.qual):
                    add_ctx(atom)
            else:
                locs = _locals_of(ev)
                for atom in atoms_of(ev.qual):
                    if lit_free_vars(atom) & locs:
                        add_op(ev.op, atom)
                    else:
                        add_ctx(atom)

    # Two letters that pin the same event slot against different context
    # terms overlap exactly when those terms are equal, so the context
    # combinations must decide each such equality; otherwise the product
    # automaton can weave jointly-unrealizable letters into a witness.
    for op in sorted(op_lits):
        slots: dict[str, list[Literal]] = {}
        for atom in op_lits[op]:
            match atom:
                case LApp("==", (LVar(slot), term), _) if slot.startswith("$") or slot == NU:
                    if not any(v.startswith("$") or v == NU for v in lit_free_vars(term)):
                        slots.setdefault(slot, []).append(term)
                case LApp("==", (term, LVar(slot)), _) if slot.startswith("$") or slot == NU:
                    if not any(v.startswith("$") or v == NU for v in lit_free_vars(term)):
                        slots.setdefault(slot, []).append(term)
        for slot, terms in slots.items():
            for i in range(len(terms)):
                for j in range(i + 1, len(terms)):
                    t1, t2 = terms[i], terms[j]
                    if t1 == t2:
                        continue
                    if isinstance(t1, LConst) and isinstance(t2, LConst):
                        continue
                    add_ctx(LApp("==", (t1, t2)))
    return GatheredLiterals(op_lits, ctx_lits)


def boolcombine(ctx: LogicalContext, binders: Sequence[tuple[str, BaseType]],
                literals: Sequence[Literal], backend: SolverBackend,
                under: Qualifier = TRUE) -> Iterator[tuple[tuple[bool, ...], Qualifier]]:
    """Satisfiable sign assignments over `literals`, under `under` conjoined.

    Assignments are emitted in canonical order (True before False at each
    position); unsatisfiable partial conjunctions prune their whole subtree.
    Solver Unknown raises MintermUndecided.
    """

    def rec(i: int, signs: list[bool], conj: Qualifier) -> Iterator[tuple[tuple[bool, ...], Qualifier]]:
        sat = is_satisfiable(ctx, binders, conj, backend)
        if isinstance(sat, Unknown):
            raise MintermUndecided(sat.reason)
        if not sat:
            return
        if i == len(literals):
            yield tuple(signs), conj
            return
        atom = QLit(literals[i])
        for sign in (True, False):
            signs.append(sign)
            yield from rec(i + 1, signs, qand(conj, atom if sign else qnot(atom)))
            signs.pop()

    yield from rec(0, [], under)


def context_combinations(ctx: LogicalContext, lits: GatheredLiterals,
                         backend: SolverBackend) -> list[tuple[tuple[bool, ...], Qualifier]]:
    return list(boolcombine(ctx, [], lits.context_literals, backend))


def build_minterms(ctx: LogicalContext, lits: GatheredLiterals,
                   phi_signs: tuple[bool, ...], phi_gamma: Qualifier,
                   backend: SolverBackend) -> MintermAlphabet:
    """All satisfiable minterms for one context combination.

    Every declared operator is covered: an operator with no gathered
    literals still contributes the single all-true letter, so the alphabet
    partitions the entire well-formed event space.
    """
    sig = ctx.sig
    out: list[Minterm] = []
    for op in sorted(sig.eff_ops):
        doms, cod = sig.eff_ops[op]
        argvars = tuple(f"$a{i}" for i in range(len(doms)))
        binders = list(zip(argvars, doms)) + [(NU, cod)]
        basis = tuple(lits.op_literals.get(op, []))
        for signs, conj in boolcombine(ctx, binders, basis, backend, under=phi_gamma):
            out.append(Minterm(op, argvars, basis, signs, conj, index=len(out)))
    ctx_signs = tuple(zip(lits.context_literals, phi_signs))
    return MintermAlphabet(phi_gamma, ctx_signs, tuple(out))


def minterm_hits_of_event(alphabet: MintermAlphabet, op: str,
                          args: tuple[object, ...], result: object,
                          env: dict[str, object], model,
                          domains=None) -> list[int]:
    """Letters of `op` that a ground event realizes under a ground env.

    The partition property says exactly one letter matches for well-formed
    events under a satisfied context combination; the acceptance suite
    samples this.
    """
    from .qualifiers import eval_qualifier

    hits = []
    for m in alphabet.minterms:
        if m.op != op:
            continue
        e = dict(env)
        e.update(dict(zip(m.argvars, args)))
        e[NU] = result
        if eval_qualifier(m.qual, e, model, domains):
            hits.append(m.index)
    return hits


def minterm_index_of_event(alphabet: MintermAlphabet, op: str,
                           args: tuple[object, ...], result: object,
                           env: dict[str, object], model,
                           domains=None) -> Optional[int]:
    hits = minterm_hits_of_event(alphabet, op, args, result, env, model, domains)
    if len(hits) == 1:
        return hits[0]
    if not hits:
        return None
    raise AssertionError(f"event {op}{args}={result} matched letters {hits}")
