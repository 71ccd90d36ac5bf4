"""Surface syntax: declarations, types, automata, qualifiers, and terms.

One file declares sorts, pure functions, effectful operator signatures,
axioms, invariant macros, and method definitions:

    sort Path
    pure parent : Path -> Path
    effect put : (k:Path) -> (v:Bytes) -> [G <|true|>] unit [<put x y | x == k /\\ y == v> /\\ last]
    axiom distinct_kinds : forall (b:Bytes). ~(isDir(b) /\\ isDel(b))
    invariant stored(k:Path, a:Bytes) = F (<put x y | x == k /\\ y == a> /\\ X G ~<put x y | x == k>)
    let insert : (a:int) => (x:int) -> [RI(a)] unit [RI(a)] = fun (x:int) -> ...

Operator postconditions in `effect` declarations are written incrementally
(the appended suffix); elaboration prefixes the case's own precondition.
Method ascriptions are written in full.  Terms are parsed into MNF with
nested lets flattened and all binders made distinct.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .ast import (
    BOOL,
    INT,
    NAT,
    NO_SPAN,
    UNIT,
    UNIT_VALUE,
    BaseType,
    Const,
    Fix,
    Lambda,
    Let,
    LetApp,
    LetEff,
    LetPure,
    Match,
    MatchBranch,
    Span,
    Term,
    Val,
    Value,
    Var,
    opaque,
)
from .checker import BOOL_CTORS, MethodDef, Program
from .hats import HInter, HTriple, RArrow, RBase, RGhost, RefinementType, TypeLike, hinter
from .qualifiers import (
    FALSE,
    TRUE,
    LApp,
    LConst,
    Literal,
    LVar,
    QForall,
    QImpl,
    QLit,
    Qualifier,
    Signature,
    lit_free_vars,
    qand,
    qnot,
    qor,
)
from .sfa import (
    NU,
    OpEvent,
    Sfa,
    SfaAnd,
    SfaConcat,
    SfaEvent,
    SfaNext,
    SfaNot,
    SfaOr,
    SfaUntil,
    TestEvent,
    formula_subst,
    normalize_event,
    sfa_empty_trace,
    sfa_final,
    sfa_global,
    sfa_last,
)


class ParseError(Exception):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.msg = msg
        self.line = line
        self.col = col


# ---------------------------------------------------------------------------
# Lexer


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<num>-?\d+)
  | (?P<ident>[A-Za-z_$][A-Za-z0-9_$']*)
  | (?P<op> \(\) | <\| | \|> | ==> | => | -> | == | != | <= | >= | /\\ | \\/
          | [()\[\]{}<>|:;,.~=+\-*] )
    """,
    re.VERBOSE,
)

KEYWORDS = {
    "sort", "pure", "effect", "axiom", "invariant", "let", "fix", "fun", "in",
    "if", "then", "else", "match", "with", "end", "true", "false", "forall",
    "last", "eps", "unit", "bool", "int", "nat", "X", "U", "F", "G", "mod",
}


@dataclass(frozen=True)
class Token:
    kind: str  # "num" | "ident" | "kw" | op-text | "eof"
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    out: list[Token] = []
    line, col = 1, 1
    i = 0
    while i < len(src):
        m = _TOKEN_RE.match(src, i)
        if m is None:
            raise ParseError(f"unexpected character {src[i]!r}", line, col)
        text = m.group(0)
        kind = m.lastgroup or ""
        if kind == "nl":
            line += 1
            col = 1
        elif kind in ("ws", "comment"):
            col += len(text)
        elif kind == "num":
            out.append(Token("num", text, line, col))
            col += len(text)
        elif kind == "ident":
            k = "kw" if text in KEYWORDS else "ident"
            out.append(Token(k, text, line, col))
            col += len(text)
        else:
            out.append(Token(text, text, line, col))
            col += len(text)
        i = m.end()
    out.append(Token("eof", "", line, col))
    return out


# ---------------------------------------------------------------------------
# Declarations gathered during parsing


@dataclass
class InvariantDef:
    name: str
    params: list[tuple[str, BaseType]]
    body: Sfa


@dataclass
class _Decls:
    sig: Signature = field(default_factory=Signature)
    axioms: list[tuple[str, Qualifier]] = field(default_factory=list)
    invariants: dict[str, InvariantDef] = field(default_factory=dict)
    effects: dict[str, TypeLike] = field(default_factory=dict)
    methods: list[MethodDef] = field(default_factory=list)
    names: set[str] = field(default_factory=set)


class Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.pos = 0
        self.decls = _Decls()
        self._freshen = 0
        self._pending_events: list[tuple[str, int, int, int]] = []

    # -- token helpers

    def peek(self, k: int = 0) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def expect(self, kind: str, what: str = "") -> Token:
        t = self.peek()
        if t.kind != kind and t.text != kind:
            raise ParseError(f"expected {what or kind!r}, found {t.text!r}", t.line, t.col)
        return self.next()

    def at(self, kind: str) -> bool:
        t = self.peek()
        return t.kind == kind or (t.text == kind and t.kind not in ("num", "ident"))

    def at_kw(self, word: str) -> bool:
        t = self.peek()
        return t.kind == "kw" and t.text == word

    def eat_kw(self, word: str) -> Token:
        t = self.peek()
        if not self.at_kw(word):
            raise ParseError(f"expected {word!r}, found {t.text!r}", t.line, t.col)
        return self.next()

    def err(self, msg: str) -> ParseError:
        t = self.peek()
        return ParseError(msg, t.line, t.col)

    def span(self) -> Span:
        t = self.peek()
        return Span(t.line, t.col)

    # -- program

    def parse_program(self) -> Program:
        while not self.at("eof"):
            if self.at_kw("sort"):
                self._sort_decl()
            elif self.at_kw("pure"):
                self._pure_decl()
            elif self.at_kw("effect"):
                self._effect_decl()
            elif self.at_kw("axiom"):
                self._axiom_decl()
            elif self.at_kw("invariant"):
                self._invariant_decl()
            elif self.at_kw("let") or self.at_kw("fix"):
                self._method_decl()
            else:
                raise self.err(f"unexpected {self.peek().text!r} at top level")
        d = self.decls
        for op, arity, line, col in self._pending_events:
            if op not in d.sig.eff_ops:
                raise ParseError(f"unknown effectful operator {op!r}", line, col)
            if len(d.sig.eff_ops[op][0]) != arity:
                raise ParseError(
                    f"event for {op} names {arity} arguments, expected "
                    f"{len(d.sig.eff_ops[op][0])}", line, col)
        d.effects = {k: _normalize_effect_events(d.sig, v) for k, v in d.effects.items()}
        d.methods = [
            MethodDef(m.name, _normalize_type_events(d.sig, m.ascribed),
                      _normalize_value_annots(d.sig, m.term), m.span, m.expect)
            for m in d.methods
        ]
        return Program(d.sig, tuple(d.axioms), d.effects, d.methods, dict(BOOL_CTORS))

    def _claim_name(self, name: str, tok: Token) -> None:
        if name in self.decls.names:
            raise ParseError(f"duplicate top-level name {name!r}", tok.line, tok.col)
        self.decls.names.add(name)

    def _sort_decl(self) -> None:
        self.eat_kw("sort")
        t = self.expect("ident", "sort name")
        self._claim_name(t.text, t)
        self.decls.sig.declare_sort(t.text)

    def _pure_decl(self) -> None:
        self.eat_kw("pure")
        t = self.expect("ident", "pure function name")
        self._claim_name(t.text, t)
        self.expect(":")
        doms: list[BaseType] = []
        cod = self._base_type()
        while self.at("->"):
            self.next()
            doms.append(cod)
            cod = self._base_type()
        self.decls.sig.declare_pure(t.text, doms, cod)
        if cod == BOOL:
            self.decls.sig.declare_mp(t.text, doms)

    def _effect_decl(self) -> None:
        self.eat_kw("effect")
        t = self.expect("ident", "effect name")
        self._claim_name(t.text, t)
        self.expect(":")
        ty = self._type()
        ty = self._elaborate_effect(t, ty)
        self.decls.effects[t.text] = ty

    def _elaborate_effect(self, tok: Token, ty: TypeLike):
        """Checks the operator shape and registers the basic signature.

        The written postconditions are the appended suffixes; the full
        postcondition of case i is pre_i ; incr_i.
        """
        from .checker import EffectCase, EffectSig, decompose_fn
        from .hats import erase, inter_parts

        shape = decompose_fn(ty)
        if not isinstance(shape.result, (HTriple, HInter)):
            raise ParseError(f"effect {tok.text} must end in a Hoare triple",
                             tok.line, tok.col)
        doms = []
        for _, pt in shape.params:
            e = erase(pt)
            if not isinstance(e, BaseType):
                raise ParseError(f"effect {tok.text} parameters must be base-typed",
                                 tok.line, tok.col)
            doms.append(e)
        cases = inter_parts(shape.result)
        cod = erase(cases[0].inner)
        if not isinstance(cod, BaseType):
            raise ParseError(f"effect {tok.text} must return a base type",
                             tok.line, tok.col)
        for c in cases:
            if not isinstance(c.inner, (RBase,)):
                raise ParseError(f"effect {tok.text} cases must have base inner types",
                                 tok.line, tok.col)
        self.decls.sig.declare_eff(tok.text, doms, cod)
        return EffectSig(
            tok.text, shape.ghosts, shape.params,
            tuple(EffectCase(c.pre, c.inner, c.post) for c in cases),
        )

    def _axiom_decl(self) -> None:
        self.eat_kw("axiom")
        t = self.expect("ident", "axiom name")
        self._claim_name(t.text, t)
        self.expect(":")
        q = self._qualifier({})
        self.decls.axioms.append((t.text, q))

    def _invariant_decl(self) -> None:
        self.eat_kw("invariant")
        t = self.expect("ident", "invariant name")
        self._claim_name(t.text, t)
        params: list[tuple[str, BaseType]] = []
        if self.at("()"):
            self.next()
            self.expect("=")
            body = self._sfa()
            self.decls.invariants[t.text] = InvariantDef(t.text, params, body)
            return
        self.expect("(")
        if not self.at(")"):
            while True:
                p = self.expect("ident", "parameter name")
                self.expect(":")
                b = self._base_type()
                params.append((p.text, b))
                if self.at(","):
                    self.next()
                    continue
                break
        self.expect(")")
        self.expect("=")
        body = self._sfa()
        self.decls.invariants[t.text] = InvariantDef(t.text, params, body)

    def _method_decl(self) -> None:
        is_fix = self.at_kw("fix")
        self.next()
        t = self.expect("ident", "method name")
        self._claim_name(t.text, t)
        self.expect(":")
        ty = self._type()
        self.expect("=")
        span = self.span()
        body = self._term()
        body_v = self._as_value(body, span)
        if is_fix:
            match body_v:
                case Lambda(param, pannot, lam_body):
                    body_v = Fix(t.text, self._strip_ghosts(ty), param, pannot, lam_body)
                case _:
                    raise ParseError("fix body must be a function", t.line, t.col)
        body_v = _alpha_normalize_value(body_v)
        self.decls.methods.append(MethodDef(t.text, ty, body_v, Span(t.line, t.col)))

    @staticmethod
    def _strip_ghosts(ty: TypeLike) -> TypeLike:
        while isinstance(ty, RGhost):
            ty = ty.body
        return ty

    def _as_value(self, t: Term, span: Span) -> Value:
        match t:
            case Val(v, _):
                return v
        raise ParseError("method body must be a function value", span.line, span.col)

    # -- base and refined types

    def _base_type(self) -> BaseType:
        t = self.peek()
        if self.at_kw("unit"):
            self.next()
            return UNIT
        if self.at_kw("bool"):
            self.next()
            return BOOL
        if self.at_kw("int"):
            self.next()
            return INT
        if self.at_kw("nat"):
            self.next()
            return NAT
        if t.kind == "ident" and t.text in self.decls.sig.sorts:
            self.next()
            return opaque(t.text)
        raise self.err(f"expected a base type, found {t.text!r}")

    def _at_base_type(self) -> bool:
        t = self.peek()
        return (t.kind == "kw" and t.text in ("unit", "bool", "int", "nat")) or (
            t.kind == "ident" and t.text in self.decls.sig.sorts
        )

    def _type(self) -> TypeLike:
        parts = [self._type_atom()]
        while self.at("/\\"):
            self.next()
            parts.append(self._type_atom())
        if len(parts) == 1:
            return parts[0]
        for p in parts:
            if not isinstance(p, (HTriple, HInter)):
                raise self.err("only Hoare triples can be intersected")
        return hinter(parts)  # type: ignore[arg-type]

    def _type_atom(self) -> TypeLike:
        # Binder forms: '(' ident ':' ... ')' '->' | '=>'
        if self.at("("):
            save = self.pos
            self.next()
            if self.peek().kind == "ident" and self.peek(1).text == ":":
                name = self.next().text
                self.expect(":")
                if self._at_base_type():
                    base_save = self.pos
                    b = self._base_type()
                    if self.at(")") and self.peek(1).text == "=>":
                        self.next()
                        self.next()
                        body = self._type()
                        return RGhost(name, INT if b.kind == "nat" else b, body)
                    self.pos = base_save
                dom = self._type()
                self.expect(")")
                self.expect("->")
                cod = self._type()
                if not isinstance(dom, (RBase, RArrow, RGhost)):
                    raise self.err("arrow domain must be a pure type")
                return RArrow(name, dom, cod)
            self.pos = save
            self.next()
            inner = self._type()
            self.expect(")")
            return inner
        if self.at("["):
            return self._triple()
        return self._pure_atom()

    def _triple(self) -> HTriple:
        self.expect("[")
        pre = self._sfa()
        self.expect("]")
        inner = self._pure_atom_or_arrow()
        self.expect("[")
        post = self._sfa()
        self.expect("]")
        return HTriple(pre, inner, post)

    def _pure_atom_or_arrow(self) -> RefinementType:
        t = self._type_atom() if self.at("(") or self.at("{") or self._at_base_type() else None
        if t is None:
            raise self.err("expected a pure type inside a triple")
        if isinstance(t, (HTriple, HInter)):
            raise self.err("triple inner type must be pure")
        return t

    def _norm_base(self, b: BaseType, qual: Qualifier = TRUE) -> tuple[BaseType, Qualifier]:
        """nat is carried as int with an implicit nonnegativity refinement."""
        if b.kind == "nat":
            ge0 = QLit(LApp(">=", (LVar(NU), LConst(0))))
            return INT, qand(qual, ge0)
        return b, qual

    def _pure_atom(self) -> RefinementType:
        if self.at("{"):
            self.next()
            nu = self.expect("ident", "'nu'")
            if nu.text != NU:
                raise ParseError(f"refinement variable must be 'nu'", nu.line, nu.col)
            self.expect(":")
            b = self._base_type()
            self.expect("|")
            env = {NU: INT if b.kind == "nat" else b}
            q = self._qualifier(env)
            self.expect("}")
            b2, q2 = self._norm_base(b, q)
            return RBase(b2, q2)
        if self._at_base_type():
            b = self._base_type()
            b2, q2 = self._norm_base(b)
            return RBase(b2, q2)
        if self.at("("):
            self.next()
            inner = self._type()
            self.expect(")")
            if not isinstance(inner, (RBase, RArrow, RGhost)):
                raise self.err("expected a pure type")
            return inner
        raise self.err(f"expected a type, found {self.peek().text!r}")

    # -- automata

    def _sfa(self) -> Sfa:
        return self._sfa_impl()

    def _sfa_impl(self) -> Sfa:
        a = self._sfa_or()
        if self.at("==>"):
            self.next()
            return SfaOr(SfaNot(a), self._sfa_impl())
        return a

    def _sfa_or(self) -> Sfa:
        a = self._sfa_and()
        while self.at("\\/"):
            self.next()
            a = SfaOr(a, self._sfa_and())
        return a

    def _sfa_and(self) -> Sfa:
        a = self._sfa_cat()
        while self.at("/\\"):
            self.next()
            a = SfaAnd(a, self._sfa_cat())
        return a

    def _sfa_cat(self) -> Sfa:
        a = self._sfa_until()
        while self.at(";"):
            self.next()
            a = SfaConcat(a, self._sfa_until())
        return a

    def _sfa_until(self) -> Sfa:
        a = self._sfa_unary()
        if self.at_kw("U"):
            self.next()
            return SfaUntil(a, self._sfa_until())
        return a

    def _sfa_unary(self) -> Sfa:
        if self.at("~"):
            self.next()
            return SfaNot(self._sfa_unary())
        if self.at_kw("X"):
            self.next()
            return SfaNext(self._sfa_unary())
        if self.at_kw("F"):
            self.next()
            return sfa_final(self._sfa_unary())
        if self.at_kw("G"):
            self.next()
            return sfa_global(self._sfa_unary())
        if self.at_kw("last"):
            self.next()
            return sfa_last()
        if self.at_kw("eps"):
            self.next()
            return sfa_empty_trace()
        if self.at("("):
            self.next()
            a = self._sfa()
            self.expect(")")
            return a
        if self.at("<|"):
            self.next()
            q = self._qualifier({})
            self.expect("|>")
            return SfaEvent(TestEvent(q))
        if self.at("<"):
            return self._event()
        if self.peek().kind == "ident":
            return self._invariant_ref()
        raise self.err(f"expected an automaton, found {self.peek().text!r}")

    def _event(self) -> Sfa:
        # Operator existence and arity are validated in a second pass, once
        # every effect declaration (including the one being parsed) is known.
        self.expect("<")
        op = self.expect("ident", "operator name")
        argvars: list[str] = []
        while self.peek().kind == "ident" and not self.at("|"):
            argvars.append(self.next().text)
        self.expect("|")
        q = self._qualifier({})
        self.expect(">")
        self._pending_events.append((op.text, len(argvars), op.line, op.col))
        return SfaEvent(OpEvent(op.text, tuple(argvars), q))

    def _invariant_ref(self) -> Sfa:
        t = self.expect("ident", "invariant name")
        inv = self.decls.invariants.get(t.text)
        if inv is None:
            raise ParseError(f"unknown invariant {t.text!r}", t.line, t.col)
        if self.at("()"):
            self.next()
            if inv.params:
                raise ParseError(f"invariant {t.text} takes {len(inv.params)} arguments",
                                 t.line, t.col)
            return inv.body
        self.expect("(")
        args: list[Literal] = []
        if not self.at(")"):
            while True:
                args.append(self._lit_expr({}, allow_free=True))
                if self.at(","):
                    self.next()
                    continue
                break
        self.expect(")")
        if len(args) != len(inv.params):
            raise ParseError(
                f"invariant {t.text} takes {len(inv.params)} arguments, got {len(args)}",
                t.line, t.col)
        env = {p: a for (p, _), a in zip(inv.params, args)}
        return formula_subst(inv.body, env)  # type: ignore[return-value]

    # -- qualifiers
    #
    # Inside qualifier expressions an identifier resolves to a declared
    # 0-ary pure function when one exists, otherwise to a variable.

    def _qualifier(self, env: dict[str, BaseType]) -> Qualifier:
        return self._q_impl(env)

    def _q_impl(self, env) -> Qualifier:
        a = self._q_or(env)
        if self.at("==>"):
            self.next()
            return QImpl(a, self._q_impl(env))
        return a

    def _q_or(self, env) -> Qualifier:
        a = self._q_and(env)
        while self.at("\\/"):
            self.next()
            a = qor(a, self._q_and(env))
        return a

    def _q_and(self, env) -> Qualifier:
        a = self._q_not(env)
        while self.at("/\\"):
            self.next()
            a = qand(a, self._q_not(env))
        return a

    def _q_not(self, env) -> Qualifier:
        if self.at("~"):
            self.next()
            return qnot(self._q_not(env))
        return self._q_atom(env)

    def _q_atom(self, env) -> Qualifier:
        if self.at_kw("true"):
            self.next()
            return TRUE
        if self.at_kw("false"):
            self.next()
            return FALSE
        if self.at_kw("forall"):
            self.next()
            self.expect("(")
            x = self.expect("ident", "variable")
            self.expect(":")
            b = self._base_type()
            self.expect(")")
            self.expect(".")
            body = self._qualifier({**env, x.text: INT if b.kind == "nat" else b})
            return QForall(x.text, INT if b.kind == "nat" else b, body)
        # Parentheses may wrap a qualifier or an arithmetic expression; a
        # following comparison operator applies only to arithmetic-shaped
        # contents, which keeps the event terminator '>' unambiguous.
        if self.at("("):
            self.next()
            q = self._qualifier(env)
            self.expect(")")
            if self._at_cmp() and isinstance(q, QLit) and self._arithish(q.lit):
                lhs = q.lit
                while self.peek().text in ("+", "-") or self.at_kw("mod"):
                    op2 = self.next().text
                    lhs = LApp(op2, (lhs, self._lit_term(env)))
                if self._at_cmp():
                    op = self.next().text
                    rhs = self._lit_expr(env)
                    return QLit(LApp(op, (lhs, rhs)))
                return QLit(lhs)
            return q
        lhs = self._lit_expr(env)
        if self._at_cmp():
            op = self.next().text
            rhs = self._lit_expr(env)
            return QLit(LApp(op, (lhs, rhs)))
        return QLit(lhs)

    @staticmethod
    def _arithish(l: Literal) -> bool:
        match l:
            case LVar(_):
                return True
            case LConst(v):
                return isinstance(v, int) and not isinstance(v, bool)
            case LApp(op, _, _):
                return op in ("+", "-", "mod")
        return False

    def _at_cmp(self) -> bool:
        return self.peek().text in ("==", "!=", "<", "<=", ">", ">=")

    def _lit_expr(self, env, allow_free: bool = False) -> Literal:
        a = self._lit_term(env, allow_free)
        while self.peek().text in ("+", "-") or self.at_kw("mod"):
            op = self.next().text
            b = self._lit_term(env, allow_free)
            a = LApp(op, (a, b))
        return a

    def _lit_term(self, env, allow_free: bool = False) -> Literal:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return LConst(int(t.text))
        if self.at_kw("true"):
            self.next()
            return LConst(True)
        if self.at_kw("false"):
            self.next()
            return LConst(False)
        if self.at("()"):
            self.next()
            return LConst(UNIT_VALUE)
        if self.at("("):
            self.next()
            a = self._lit_expr(env, allow_free)
            self.expect(")")
            return a
        if t.kind == "ident":
            self.next()
            if self.at("("):
                self.next()
                args: list[Literal] = []
                if not self.at(")"):
                    while True:
                        args.append(self._lit_expr(env, allow_free))
                        if self.at(","):
                            self.next()
                            continue
                        break
                self.expect(")")
                if t.text not in self.decls.sig.pure_ops:
                    raise ParseError(f"unknown pure function {t.text!r}", t.line, t.col)
                is_mp = t.text in self.decls.sig.method_preds
                return LApp(t.text, tuple(args), is_mp)
            if t.text in self.decls.sig.pure_ops and not self.decls.sig.pure_ops[t.text][0]:
                return LApp(t.text, ())
            return LVar(t.text)
        raise self.err(f"expected a literal, found {t.text!r}")

    # -- terms

    def _term(self) -> Term:
        span = self.span()
        if self.at("(") and self.peek(1).kind == "kw" and \
                self.peek(1).text in ("let", "if", "match"):
            self.next()
            inner = self._term()
            self.expect(")")
            return inner
        if self.at_kw("let"):
            self.next()
            x = self.expect("ident", "binder")
            self.expect("=")
            rhs = self._let_rhs(x.text)
            self.eat_kw("in")
            body = self._term()
            return rhs(body)
        if self.at_kw("if"):
            self.next()
            v = self._value()
            self.eat_kw("then")
            then = self._term()
            self.eat_kw("else")
            other = self._term()
            return Match(v, (MatchBranch("true", (), then),
                             MatchBranch("false", (), other)), span)
        if self.at_kw("match"):
            self.next()
            v = self._value()
            self.eat_kw("with")
            branches: list[MatchBranch] = []
            while self.at("|"):
                self.next()
                c = self.expect("ident", "constructor")
                binders: list[str] = []
                while self.peek().kind == "ident":
                    binders.append(self.next().text)
                self.expect("->")
                b = self._term()
                branches.append(MatchBranch(c.text, tuple(binders), b))
            self.eat_kw("end")
            if not branches:
                raise ParseError("match needs at least one branch", span.line, span.col)
            return Match(v, tuple(branches), span)
        v = self._value()
        return Val(v, span)

    _PURE_INFIX = ("+", "-", "==", "!=", "<", "<=", ">", ">=")

    def _let_rhs(self, binder: str):
        """Parses the right side of a let; returns body -> Term."""
        span = self.span()
        if self.at("("):
            # Parenthesized term: nested let/if/match, flattened below.
            save = self.pos
            self.next()
            if self.at_kw("let") or self.at_kw("if") or self.at_kw("match"):
                inner = self._term()
                self.expect(")")
                return lambda body: _flatten_let(binder, inner, body, span)
            self.pos = save
        head_tok = self.peek()
        v = self._value()
        # Infix pure operation?
        if self.peek().text in self._PURE_INFIX or self.at_kw("mod"):
            op = self.next().text
            rhs = self._value()
            return lambda body: LetPure(binder, op, (v, rhs), body, span)
        # Application by juxtaposition?
        args: list[Value] = []
        while self._at_value():
            args.append(self._value())
        if not args:
            if isinstance(v, Var) and v.name in self.decls.sig.pure_ops and \
                    not self.decls.sig.pure_ops[v.name][0]:
                name0 = v.name
                return lambda body: LetPure(binder, name0, (), body, span)
            return lambda body: Let(binder, Val(v, span), body, span)
        if isinstance(v, Var):
            name = v.name
            if name in self.decls.sig.eff_ops:
                return lambda body: LetEff(binder, name, tuple(args), body, span)
            if name in self.decls.sig.pure_ops:
                return lambda body: LetPure(binder, name, tuple(args), body, span)
            # Curried function application through fresh temporaries.
            def build(body: Term) -> Term:
                cur_fn: Value = v
                out_rev: list[tuple[str, Value, Value]] = []
                for i, a in enumerate(args):
                    tgt = binder if i == len(args) - 1 else self._fresh(binder)
                    out_rev.append((tgt, cur_fn, a))
                    cur_fn = Var(tgt)
                expr = body
                for tgt, fnv, a in reversed(out_rev):
                    expr = LetApp(tgt, fnv, a, expr, span)
                return expr

            return build
        raise ParseError("application head must be a variable", span.line, span.col)

    def _fresh(self, base: str) -> str:
        self._freshen += 1
        return f"{base}${self._freshen}"

    def _at_value(self) -> bool:
        t = self.peek()
        if t.kind in ("num", "ident"):
            return True
        if t.kind == "kw" and t.text in ("true", "false", "fun"):
            return True
        return t.text in ("()",)

    def _value(self) -> Value:
        t = self.peek()
        if t.kind == "num":
            self.next()
            return Const(int(t.text))
        if self.at_kw("true"):
            self.next()
            return Const(True)
        if self.at_kw("false"):
            self.next()
            return Const(False)
        if self.at("()"):
            self.next()
            return Const(UNIT_VALUE)
        if self.at_kw("fun"):
            self.next()
            params: list[tuple[str, Optional[RefinementType]]] = []
            while self.at("("):
                self.next()
                x = self.expect("ident", "parameter")
                annot: Optional[RefinementType] = None
                if self.at(":"):
                    self.next()
                    a = self._type()
                    if isinstance(a, (HTriple, HInter)):
                        raise self.err("parameter annotations must be pure types")
                    annot = a
                self.expect(")")
                params.append((x.text, annot))
            if not params:
                raise self.err("fun needs at least one parameter")
            self.expect("->")
            body = self._term()
            for x, annot in reversed(params):
                body = Val(Lambda(x, annot, body), NO_SPAN)
            assert isinstance(body, Val)
            return body.value
        if self.at("("):
            self.next()
            v = self._value()
            self.expect(")")
            return v
        if t.kind == "ident":
            self.next()
            return Var(t.text)
        raise self.err(f"expected a value, found {t.text!r}")


# ---------------------------------------------------------------------------
# Post-parse normalization


def _normalize_effect_events(sig: Signature, es):
    from .checker import EffectCase, EffectSig
    from .sfa import formula_map_events

    def fix_ev(ev):
        if isinstance(ev, OpEvent):
            return normalize_event(ev, len(sig.eff_ops[ev.op][0]))
        return ev

    params = tuple((p, _normalize_type_events(sig, t)) for p, t in es.params)
    cases = tuple(
        EffectCase(formula_map_events(c.pre, fix_ev),
                   _normalize_type_events(sig, c.inner),
                   formula_map_events(c.incr, fix_ev))
        for c in es.cases
    )
    return EffectSig(es.name, es.ghosts, params, cases)


def _normalize_type_events(sig: Signature, t: TypeLike) -> TypeLike:
    """Renames event argvars into the canonical $-namespace everywhere."""
    from .sfa import formula_map_events

    def fix_ev(ev):
        if isinstance(ev, OpEvent):
            return normalize_event(ev, len(sig.eff_ops[ev.op][0]))
        return ev

    match t:
        case RBase(_, _):
            return t
        case RArrow(param, dom, cod):
            return RArrow(param, _normalize_type_events(sig, dom),  # type: ignore[arg-type]
                          _normalize_type_events(sig, cod))
        case RGhost(param, base, body):
            return RGhost(param, base, _normalize_type_events(sig, body))
        case HTriple(pre, inner, post):
            return HTriple(formula_map_events(pre, fix_ev),
                           _normalize_type_events(sig, inner),  # type: ignore[arg-type]
                           formula_map_events(post, fix_ev))
        case HInter(parts):
            return HInter(tuple(_normalize_type_events(sig, p) for p in parts))
    raise TypeError(t)


def _normalize_value_annots(sig: Signature, v: Value) -> Value:
    """Applies event normalization to annotations embedded in terms."""

    def norm(t):
        return None if t is None else _normalize_type_events(sig, t)

    def walk_v(v2: Value) -> Value:
        match v2:
            case Lambda(p, a, b):
                return Lambda(p, norm(a), walk_t(b))
            case Fix(f, fa, p, pa, b):
                return Fix(f, norm(fa), p, norm(pa), walk_t(b))
            case _:
                return v2

    def walk_t(t: Term) -> Term:
        match t:
            case Val(v2, s):
                return Val(walk_v(v2), s)
            case LetEff(x, op, args, body, s):
                return LetEff(x, op, args, walk_t(body), s)
            case LetPure(x, op, args, body, s):
                return LetPure(x, op, args, walk_t(body), s)
            case LetApp(x, fn, arg, body, s):
                return LetApp(x, walk_v(fn), arg, walk_t(body), s)
            case Let(x, bound, body, s):
                return Let(x, walk_t(bound), walk_t(body), s)
            case Match(scrut, branches, s):
                return Match(scrut, tuple(
                    MatchBranch(b.ctor, b.binders, walk_t(b.body)) for b in branches
                ), s)
        raise TypeError(t)

    return walk_v(v)


def _flatten_let(binder: str, bound: Term, body: Term, span: Span) -> Term:
    """let x = (let y = e1 in e2) in e3  ~>  let y = e1 in (let x = e2 in e3)"""
    match bound:
        case Val(v, s):
            return Let(binder, Val(v, s), body, span)
        case LetEff(y, op, args, inner, s):
            return LetEff(y, op, args, _flatten_let(binder, inner, body, span), s)
        case LetPure(y, op, args, inner, s):
            return LetPure(y, op, args, _flatten_let(binder, inner, body, span), s)
        case LetApp(y, fn, arg, inner, s):
            return LetApp(y, fn, arg, _flatten_let(binder, inner, body, span), s)
        case Let(y, b2, inner, s):
            return Let(y, b2, _flatten_let(binder, inner, body, span), s)
        case Match(_, _, s):
            raise ParseError("let-bound match is not supported; bind inside the branches",
                             s.line, s.col)
    raise TypeError(bound)


class _AlphaState:
    def __init__(self) -> None:
        self.used: set[str] = set()
        self.n = 0

    def fresh(self, base: str) -> str:
        self.n += 1
        return f"{base}#{self.n}"

    def claim(self, name: str) -> tuple[str, bool]:
        if name in self.used:
            return self.fresh(name), True
        self.used.add(name)
        return name, False


def _alpha_normalize_value(v: Value) -> Value:
    """Renames binders so every bound variable is distinct within the body."""
    from .ast import subst_term, subst_value

    st = _AlphaState()

    def walk_value(v2: Value) -> Value:
        match v2:
            case Lambda(p, a, b):
                np, renamed = st.claim(p)
                if renamed:
                    b = subst_term(b, p, Var(np))
                return Lambda(np, a, walk_term(b))
            case Fix(f, fa, p, pa, b):
                nf, ren_f = st.claim(f)
                if ren_f:
                    b = subst_term(b, f, Var(nf))
                np, ren_p = st.claim(p)
                if ren_p:
                    b = subst_term(b, p, Var(np))
                return Fix(nf, fa, np, pa, walk_term(b))
            case _:
                return v2

    def walk_term(t: Term) -> Term:
        from .ast import subst_term

        match t:
            case Val(v2, s):
                return Val(walk_value(v2), s)
            case LetEff(x, op, args, body, s):
                nx, renamed = st.claim(x)
                if renamed:
                    body = subst_term(body, x, Var(nx))
                return LetEff(nx, op, args, walk_term(body), s)
            case LetPure(x, op, args, body, s):
                nx, renamed = st.claim(x)
                if renamed:
                    body = subst_term(body, x, Var(nx))
                return LetPure(nx, op, args, walk_term(body), s)
            case LetApp(x, fn, arg, body, s):
                nx, renamed = st.claim(x)
                if renamed:
                    body = subst_term(body, x, Var(nx))
                return LetApp(nx, walk_value(fn), arg, walk_term(body), s)
            case Let(x, bound, body, s):
                bound2 = walk_term(bound)
                nx, renamed = st.claim(x)
                if renamed:
                    body = subst_term(body, x, Var(nx))
                return Let(nx, bound2, walk_term(body), s)
            case Match(scrut, branches, s):
                out = []
                for br in branches:
                    body = br.body
                    binders = []
                    for y in br.binders:
                        ny, renamed = st.claim(y)
                        if renamed:
                            body = subst_term(body, y, Var(ny))
                        binders.append(ny)
                    out.append(MatchBranch(br.ctor, tuple(binders), walk_term(body)))
                return Match(scrut, tuple(out), s)
        raise TypeError(t)

    return walk_value(v)


def parse_program(source: str) -> Program:
    """Parses one surface file into an elaborated program."""
    return Parser(source).parse_program()
