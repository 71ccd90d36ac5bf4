"""Finite automata over minterm letters.

`alphabet_transform` rewrites a regex over symbolic events into a regex over
letter sets: each event leaf becomes the disjunction of same-operator
minterms whose realized qualifier implies the event's qualifier; a test
event collects implying minterms of every operator.  `compile_fa` then
builds a deterministic automaton by derivative closure, which handles
intersection and difference natively.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

from .qualifiers import TRUE, QImpl, Qualifier
from .sfa import (
    NU,
    OpEvent,
    Srl,
    SrlAnd,
    SrlAny,
    SrlConcat,
    SrlDiff,
    SrlEmpty,
    SrlEps,
    SrlEvent,
    SrlOr,
    SrlStar,
    TestEvent,
)
from .minterms import MintermAlphabet, MintermUndecided
from .solver import LogicalContext, SolverBackend, Unknown, Valid, check_valid


# ---------------------------------------------------------------------------
# Regexes over letter sets


@dataclass(frozen=True)
class RxLetters:
    letters: frozenset[int]


@dataclass(frozen=True)
class RxEps:
    pass


@dataclass(frozen=True)
class RxEmpty:
    pass


@dataclass(frozen=True)
class RxAnd:
    args: tuple["Rx", ...]


@dataclass(frozen=True)
class RxOr:
    args: tuple["Rx", ...]


@dataclass(frozen=True)
class RxCat:
    lhs: "Rx"
    rhs: "Rx"


@dataclass(frozen=True)
class RxDiff:
    lhs: "Rx"
    rhs: "Rx"


@dataclass(frozen=True)
class RxStar:
    arg: "Rx"


Rx = Union[RxLetters, RxEps, RxEmpty, RxAnd, RxOr, RxCat, RxDiff, RxStar]

RX_EPS = RxEps()
RX_EMPTY = RxEmpty()


def rx_letters(letters: frozenset[int]) -> Rx:
    return RxLetters(letters) if letters else RX_EMPTY


def _key(r: Rx) -> tuple:
    # A deterministic total order for canonicalizing n-ary nodes.
    match r:
        case RxLetters(ls):
            return (0, tuple(sorted(ls)))
        case RxEps():
            return (1,)
        case RxEmpty():
            return (2,)
        case RxAnd(args):
            return (3, tuple(_key(a) for a in args))
        case RxOr(args):
            return (4, tuple(_key(a) for a in args))
        case RxCat(l, rr):
            return (5, _key(l), _key(rr))
        case RxDiff(l, rr):
            return (6, _key(l), _key(rr))
        case RxStar(a):
            return (7, _key(a))
    raise TypeError(r)


def rx_or(*args: Rx) -> Rx:
    flat: list[Rx] = []
    letters: set[int] = set()
    for a in args:
        if isinstance(a, RxEmpty):
            continue
        if isinstance(a, RxOr):
            for x in a.args:
                if isinstance(x, RxLetters):
                    letters |= x.letters
                else:
                    flat.append(x)
        elif isinstance(a, RxLetters):
            letters |= a.letters
        else:
            flat.append(a)
    if letters:
        flat.append(RxLetters(frozenset(letters)))
    uniq = sorted(set(flat), key=_key)
    if not uniq:
        return RX_EMPTY
    if len(uniq) == 1:
        return uniq[0]
    return RxOr(tuple(uniq))


def rx_and(*args: Rx) -> Rx:
    flat: list[Rx] = []
    for a in args:
        if isinstance(a, RxEmpty):
            return RX_EMPTY
        if isinstance(a, RxAnd):
            flat.extend(a.args)
        else:
            flat.append(a)
    uniq = sorted(set(flat), key=_key)
    if not uniq:
        raise ValueError("empty intersection")
    if len(uniq) == 1:
        return uniq[0]
    return RxAnd(tuple(uniq))


def rx_cat(l: Rx, r: Rx) -> Rx:
    if isinstance(l, RxEmpty) or isinstance(r, RxEmpty):
        return RX_EMPTY
    if isinstance(l, RxEps):
        return r
    if isinstance(r, RxEps):
        return l
    return RxCat(l, r)


def rx_diff(l: Rx, r: Rx) -> Rx:
    if isinstance(l, RxEmpty):
        return RX_EMPTY
    if isinstance(r, RxEmpty):
        return l
    if l == r:
        return RX_EMPTY
    return RxDiff(l, r)


def rx_star(a: Rx) -> Rx:
    if isinstance(a, (RxEps, RxEmpty)):
        return RX_EPS
    if isinstance(a, RxStar):
        return a
    return RxStar(a)


def rx_nullable(r: Rx) -> bool:
    match r:
        case RxLetters(_):
            return False
        case RxEps():
            return True
        case RxEmpty():
            return False
        case RxAnd(args):
            return all(rx_nullable(a) for a in args)
        case RxOr(args):
            return any(rx_nullable(a) for a in args)
        case RxCat(l, rr):
            return rx_nullable(l) and rx_nullable(rr)
        case RxDiff(l, rr):
            return rx_nullable(l) and not rx_nullable(rr)
        case RxStar(_):
            return True
    raise TypeError(r)


def rx_derive(r: Rx, letter: int) -> Rx:
    match r:
        case RxLetters(ls):
            return RX_EPS if letter in ls else RX_EMPTY
        case RxEps() | RxEmpty():
            return RX_EMPTY
        case RxAnd(args):
            return rx_and(*(rx_derive(a, letter) for a in args))
        case RxOr(args):
            return rx_or(*(rx_derive(a, letter) for a in args))
        case RxCat(l, rr):
            first = rx_cat(rx_derive(l, letter), rr)
            if rx_nullable(l):
                return rx_or(first, rx_derive(rr, letter))
            return first
        case RxDiff(l, rr):
            return rx_diff(rx_derive(l, letter), rx_derive(rr, letter))
        case RxStar(a):
            return rx_cat(rx_derive(a, letter), r)
    raise TypeError(r)


# ---------------------------------------------------------------------------
# Alphabet transformation


def alphabet_transform(ctx: LogicalContext, alphabet: MintermAlphabet,
                       srl: Srl, backend: SolverBackend) -> Rx:
    """Replaces symbolic events by the letters whose qualifier implies theirs."""
    sig = ctx.sig
    impl_cache: dict[tuple[int, object], bool] = {}
    ctx_signs = dict(alphabet.context_signs)

    def implies(m_index: int, goal: Qualifier, op: Optional[str]) -> bool:
        m = alphabet.minterms[m_index]
        key = (m_index, goal)
        hit = impl_cache.get(key)
        if hit is not None:
            return hit
        # The goal's atoms were gathered into this minterm's basis or the
        # context combination, so sign lookup usually decides the query.
        from .qualifiers import eval3

        amap = dict(ctx_signs)
        amap.update(m.sign_map())
        quick = eval3(goal, amap)
        if quick is not None:
            impl_cache[key] = quick
            return quick
        doms, cod = sig.eff_ops[m.op]
        binders = [(v, b) for v, b in zip(m.argvars, doms)] + [(NU, cod)]
        ctx2 = ctx.extend_many([(n, b, TRUE) for n, b in binders])
        res = check_valid(ctx2, QImpl(m.qual, goal), backend)
        if isinstance(res, Unknown):
            raise MintermUndecided(res.reason)
        ok = isinstance(res, Valid)
        impl_cache[key] = ok
        return ok

    def letters_for_event(ev) -> frozenset[int]:
        if isinstance(ev, OpEvent):
            return frozenset(
                m.index
                for m in alphabet.minterms
                if m.op == ev.op and implies(m.index, ev.qual, ev.op)
            )
        assert isinstance(ev, TestEvent)
        return frozenset(
            m.index for m in alphabet.minterms if implies(m.index, ev.qual, None)
        )

    def tr(node: Srl) -> Rx:
        match node:
            case SrlEvent(ev):
                return rx_letters(letters_for_event(ev))
            case SrlAny():
                return rx_letters(frozenset(m.index for m in alphabet.minterms))
            case SrlEmpty():
                return RX_EMPTY
            case SrlEps():
                return RX_EPS
            case SrlAnd(l, r):
                return rx_and(tr(l), tr(r))
            case SrlOr(l, r):
                return rx_or(tr(l), tr(r))
            case SrlConcat(l, r):
                return rx_cat(tr(l), tr(r))
            case SrlDiff(l, r):
                return rx_diff(tr(l), tr(r))
            case SrlStar(a):
                return rx_star(tr(a))
        raise TypeError(node)

    return tr(srl)


# ---------------------------------------------------------------------------
# Compilation to a DFA by derivative closure


@dataclass(frozen=True)
class Fa:
    n_letters: int
    start: int
    accepting: frozenset[int]
    delta: tuple[tuple[int, ...], ...]  # delta[state][letter] -> state

    @property
    def n_states(self) -> int:
        return len(self.delta)

    def accepts_word(self, word: Sequence[int]) -> bool:
        s = self.start
        for l in word:
            s = self.delta[s][l]
        return s in self.accepting

    def transition_count(self) -> int:
        return sum(len(row) for row in self.delta)


def compile_fa(rx: Rx, n_letters: int) -> Fa:
    states: dict[Rx, int] = {}
    order: list[Rx] = []

    def intern(r: Rx) -> int:
        i = states.get(r)
        if i is None:
            i = len(order)
            states[r] = i
            order.append(r)
        return i

    start = intern(rx)
    delta: list[tuple[int, ...]] = []
    i = 0
    while i < len(order):
        r = order[i]
        delta.append(tuple(intern(rx_derive(r, l)) for l in range(n_letters)))
        i += 1
    accepting = frozenset(j for j, r in enumerate(order) if rx_nullable(r))
    return Fa(n_letters, start, accepting, tuple(delta))


def fa_included(f1: Fa, f2: Fa) -> tuple[bool, Optional[list[int]]]:
    """L(f1) ⊆ L(f2); on failure also a shortest witness word."""
    if f1.n_letters != f2.n_letters:
        raise ValueError("automata over different alphabets")
    from collections import deque

    seen = {(f1.start, f2.start)}
    queue = deque([(f1.start, f2.start, [])])
    while queue:
        s1, s2, path = queue.popleft()
        if s1 in f1.accepting and s2 not in f2.accepting:
            return False, path
        for l in range(f1.n_letters):
            nxt = (f1.delta[s1][l], f2.delta[s2][l])
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt[0], nxt[1], path + [l]))
    return True, None


def fa_to_dot(fa: Fa, alphabet: MintermAlphabet, name: str = "fa") -> str:
    """Deterministic DOT rendering: states by index, edges by letter label."""
    lines = [f"digraph {name} {{", "  rankdir=LR;", "  node [shape=circle];"]
    for s in range(fa.n_states):
        shape = "doublecircle" if s in fa.accepting else "circle"
        marker = " (start)" if s == fa.start else ""
        lines.append(f'  q{s} [shape={shape}, label="q{s}{marker}"];')
    grouped: dict[tuple[int, int], list[str]] = {}
    for s in range(fa.n_states):
        for l in range(fa.n_letters):
            t = fa.delta[s][l]
            grouped.setdefault((s, t), []).append(alphabet.minterms[l].label())
    for (s, t) in sorted(grouped):
        labels = ",".join(grouped[(s, t)])
        lines.append(f'  q{s} -> q{t} [label="{labels}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
