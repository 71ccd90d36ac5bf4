"""Executable trace semantics: effect evaluation and small-step reduction.

The stepper is the ground-truth oracle for soundness fuzzing.  Stuck is a
first-class outcome (a get with no matching put has no rule), never a host
exception.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Union

from .ast import (
    UNIT_VALUE,
    Const,
    Ctor,
    Fix,
    Lambda,
    Let,
    LetApp,
    LetEff,
    LetPure,
    Match,
    Sym,
    Term,
    UnitValue,
    Val,
    Value,
    Var,
    subst_term,
)
from .qualifiers import Model, apply_pure


# ---------------------------------------------------------------------------
# Events and traces


@dataclass(frozen=True)
class Event:
    op: str
    args: tuple[object, ...]
    result: object

    def __str__(self) -> str:
        def fmt(v: object) -> str:
            if isinstance(v, bool):
                return "true" if v else "false"
            return str(v)

        return f"{self.op}({','.join(fmt(a) for a in self.args)}) = {fmt(self.result)}"


Trace = tuple[Event, ...]

EMPTY_TRACE: Trace = ()


def format_trace(alpha: Trace) -> str:
    """One event per line: `op(arg,...) = result`."""
    return "\n".join(str(e) for e in alpha)


def parse_trace_line(line: str) -> tuple[str, list[str], str]:
    """Splits `op(a,b) = r` into its raw textual pieces (for golden tests)."""
    head, _, res = line.partition("=")
    op, _, rest = head.strip().partition("(")
    args = rest.rstrip(") ").strip()
    parts = [a.strip() for a in args.split(",")] if args else []
    return op.strip(), parts, res.strip()


# ---------------------------------------------------------------------------
# Outcomes


class Stuck:
    """Evaluation has no applicable rule (modeled outcome, not a crash)."""

    def __repr__(self) -> str:
        return "Stuck"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Stuck)

    def __hash__(self) -> int:
        return hash("Stuck")


STUCK = Stuck()


class OutOfFuel:
    def __repr__(self) -> str:
        return "OutOfFuel"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, OutOfFuel)

    def __hash__(self) -> int:
        return hash("OutOfFuel")


OUT_OF_FUEL = OutOfFuel()


class UnknownOperator(Exception):
    pass


# ---------------------------------------------------------------------------
# Library models


@dataclass(frozen=True)
class LibraryModel:
    """Deterministic evaluator for one stateful operator."""

    name: str
    evaluator: Callable[[Trace, tuple[object, ...]], object]  # returns value or STUCK


def _ev_put(alpha: Trace, args: tuple[object, ...]) -> object:
    return UNIT_VALUE


def _ev_exists(alpha: Trace, args: tuple[object, ...]) -> object:
    (k,) = args
    return any(e.op == "put" and e.args[0] == k for e in alpha)


def _ev_get(alpha: Trace, args: tuple[object, ...]) -> object:
    # Rightmost matching put wins: the rule splits the context so that no
    # matching put follows the chosen one.
    (k,) = args
    for e in reversed(alpha):
        if e.op == "put" and e.args[0] == k:
            return e.args[1]
    return STUCK


def _ev_insert(alpha: Trace, args: tuple[object, ...]) -> object:
    return UNIT_VALUE


def _ev_mem(alpha: Trace, args: tuple[object, ...]) -> object:
    (v,) = args
    return any(e.op == "insert" and e.args[0] == v for e in alpha)


# Heap-of-cells models backing the linked-list benchmarks: write records a
# (addr, val, next) cell; readv/readn recover the last write to an address.


def _ev_write(alpha: Trace, args: tuple[object, ...]) -> object:
    return UNIT_VALUE


def _last_write(alpha: Trace, addr: object) -> Optional[Event]:
    for e in reversed(alpha):
        if e.op == "write" and e.args[0] == addr:
            return e
    return None


def _ev_readv(alpha: Trace, args: tuple[object, ...]) -> object:
    e = _last_write(alpha, args[0])
    return STUCK if e is None else e.args[1]


def _ev_readn(alpha: Trace, args: tuple[object, ...]) -> object:
    e = _last_write(alpha, args[0])
    return STUCK if e is None else e.args[2]


def _ev_hascell(alpha: Trace, args: tuple[object, ...]) -> object:
    return _last_write(alpha, args[0]) is not None


BUILTIN_MODELS: dict[str, LibraryModel] = {
    m.name: m
    for m in [
        LibraryModel("put", _ev_put),
        LibraryModel("exists", _ev_exists),
        LibraryModel("get", _ev_get),
        LibraryModel("insert", _ev_insert),
        LibraryModel("mem", _ev_mem),
        LibraryModel("write", _ev_write),
        LibraryModel("readv", _ev_readv),
        LibraryModel("readn", _ev_readn),
        LibraryModel("hascell", _ev_hascell),
    ]
}


class Runtime:
    """Bundles library models with pure-function interpretations."""

    def __init__(self, models: Optional[Mapping[str, LibraryModel]] = None,
                 pure_model: Optional[Model] = None):
        self.models = dict(BUILTIN_MODELS)
        if models:
            self.models.update(models)
        self.pure_model = pure_model or Model()

    def register(self, model: LibraryModel) -> None:
        self.models[model.name] = model


DEFAULT_RUNTIME = Runtime()


def eval_effop(alpha: Trace, op: str, args: tuple[object, ...],
               runtime: Runtime = DEFAULT_RUNTIME) -> object:
    model = runtime.models.get(op)
    if model is None:
        raise UnknownOperator(op)
    return model.evaluator(alpha, args)


# ---------------------------------------------------------------------------
# Small-step reduction


def _ground(v: Value) -> object:
    if isinstance(v, Const):
        return v.value
    raise ValueError(f"operator argument not ground: {v}")


@dataclass(frozen=True)
class StepEmit:
    emitted: Trace
    term: Term


@dataclass(frozen=True)
class Done:
    value: Value


StepResult = Union[StepEmit, Done, Stuck]


def step(alpha: Trace, e: Term, runtime: Runtime = DEFAULT_RUNTIME) -> StepResult:
    match e:
        case Val(v, _):
            return Done(v)
        case LetPure(x, op, args, body, _):
            try:
                vals = [_ground(a) for a in args]
                res = apply_pure(op, vals, runtime.pure_model)
            except Exception:
                return STUCK
            return StepEmit(EMPTY_TRACE, subst_term(body, x, Const(res)))
        case LetEff(x, op, args, body, _):
            try:
                vals = tuple(_ground(a) for a in args)
            except ValueError:
                return STUCK
            res = eval_effop(alpha, op, vals, runtime)
            if isinstance(res, Stuck):
                return STUCK
            return StepEmit((Event(op, vals, res),), subst_term(body, x, Const(res)))
        case LetApp(y, fn, arg, body, span):
            match fn:
                case Lambda(x, _, fbody):
                    return StepEmit(EMPTY_TRACE, Let(y, subst_term(fbody, x, arg), body, span))
                case Fix(f, fannot, x, pannot, fbody):
                    unrolled = subst_term(fbody, x, arg)
                    lam = Lambda(f, fannot, unrolled)
                    return StepEmit(EMPTY_TRACE, LetApp(y, lam, fn, body, span))
                case _:
                    return STUCK
        case Let(y, bound, body, span):
            match bound:
                case Val(v, _):
                    return StepEmit(EMPTY_TRACE, subst_term(body, y, v))
                case _:
                    inner = step(alpha, bound, runtime)
                    match inner:
                        case StepEmit(emitted, bound2):
                            return StepEmit(emitted, Let(y, bound2, body, span))
                        case Done(v):
                            return StepEmit(EMPTY_TRACE, subst_term(body, y, v))
                        case _:
                            return STUCK
        case Match(scrut, branches, _):
            name, argvals = _ctor_view(scrut)
            if name is None:
                return STUCK
            for b in branches:
                if b.ctor == name:
                    body = b.body
                    for x, v in zip(b.binders, argvals):
                        body = subst_term(body, x, v)
                    return StepEmit(EMPTY_TRACE, body)
            return STUCK
    raise TypeError(e)


def _ctor_view(v: Value) -> tuple[Optional[str], tuple[Value, ...]]:
    match v:
        case Ctor(name, args):
            return name, args
        case Const(c):
            if isinstance(c, bool):
                return ("true" if c else "false"), ()
            if isinstance(c, UnitValue):
                return "unit", ()
            return None, ()
        case _:
            return None, ()


@dataclass(frozen=True)
class RunResult:
    emitted: Trace
    value: Optional[Value]  # None when stuck / out of fuel
    outcome: object  # "done" | STUCK | OUT_OF_FUEL


def run(alpha: Trace, e: Term, fuel: int,
        runtime: Runtime = DEFAULT_RUNTIME) -> RunResult:
    """Multi-step reduction; concatenates all emitted single-step traces."""
    if fuel <= 0:
        raise ValueError("fuel must be positive")
    acc: list[Event] = []
    cur = e
    for _ in range(fuel):
        res = step(alpha + tuple(acc), cur, runtime)
        match res:
            case Done(v):
                return RunResult(tuple(acc), v, "done")
            case StepEmit(emitted, nxt):
                acc.extend(emitted)
                cur = nxt
            case _:
                return RunResult(tuple(acc), None, STUCK)
    return RunResult(tuple(acc), None, OUT_OF_FUEL)
