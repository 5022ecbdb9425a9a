"""Declarative input language: line-oriented theory files with fields,
functions, named expressions, substitution tables, cover blocks and named
checks.  Expressions use infix notation with d^k(name) jets, a + suffix
for antifields (x+_1, c+), reserved eps / u / tau, exact rationals and
inv / log / pow.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .coefficients import AffineExponent
from .curved import BElement, CanonicalSubstitution, USeries
from .expression import (Expression, inverse_of, log_of, power_of)
from .symbols import GradedSymbol, Kind, Theory, TheoryError

RESERVED_CALLS = {"d", "inv", "log", "pow", "D"}


class ParseError(TheoryError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        where = f" at line {line}" if line else ""
        where += f", column {column}" if column else ""
        super().__init__(message + where)


_TOKEN = re.compile(r"""
    (?P<num>\d+) |
    (?P<name>[A-Za-z][A-Za-z0-9]*\+?(?:_[A-Za-z0-9]+)*) |
    (?P<op>[-+*/^(),\[\]]) |
    (?P<ws>\s+)
""", re.VERBOSE)


def tokenize(src: str, line_no: int = 0) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"bad character {src[pos]!r}", line_no, pos + 1)
        kind = m.lastgroup
        if kind != "ws":
            out.append((kind, m.group(), pos + 1))
        pos = m.end()
    out.append(("end", "", len(src) + 1))
    return out


class ExpressionParser:
    """Recursive descent over one expression source line."""

    def __init__(self, theory: Theory, src: str, line_no: int = 0,
                 tau: Optional[GradedSymbol] = None):
        self.theory = theory
        self.tokens = tokenize(src, line_no)
        self.i = 0
        self.line_no = line_no
        self.tau = tau

    def peek(self):
        return self.tokens[self.i]

    def take(self, kind: Optional[str] = None, value: Optional[str] = None):
        tok = self.tokens[self.i]
        if kind and tok[0] != kind:
            raise ParseError(f"expected {value or kind}, got {tok[1]!r}",
                             self.line_no, tok[2])
        if value and tok[1] != value:
            raise ParseError(f"expected {value!r}, got {tok[1]!r}",
                             self.line_no, tok[2])
        self.i += 1
        return tok

    def parse(self) -> Expression:
        e = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected {tok[1]!r}", self.line_no, tok[2])
        return e

    def expr(self) -> Expression:
        sign = 1
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            sign = -1 if tok[1] == "-" else 1
        out = self.term() * sign
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                nxt = self.term()
                out = out + (nxt if tok[1] == "+" else -nxt)
            else:
                return out

    def term(self) -> Expression:
        out = self.factor()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] == "*":
                self.take()
                out = out * self.factor()
            elif tok[0] == "op" and tok[1] == "/":
                self.take()
                den = self.factor()
                out = out * _as_rational_inverse(den)
            else:
                return out

    def factor(self) -> Expression:
        base = self.atom()
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "^":
            self.take()
            neg = False
            t2 = self.peek()
            if t2[0] == "op" and t2[1] == "-":
                self.take()
                neg = True
            n = int(self.take("num")[1])
            if neg:
                return power_of(base, Fraction(-n))
            return base ** n
        return base

    def atom(self) -> Expression:
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            num = Fraction(int(tok[1]))
            return Expression.const(self.theory, num)
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            e = self.expr()
            self.take("op", ")")
            return e
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            return -self.atom()
        if tok[0] != "name":
            raise ParseError(f"unexpected {tok[1]!r}", self.line_no, tok[2])
        name = self.take()[1]
        nxt = self.peek()
        if name == "D" and nxt[0] == "op" and nxt[1] == "[":
            return self.func_derivative()
        if nxt[0] == "op" and nxt[1] == "(" and name in RESERVED_CALLS:
            return self.call(name, 0)
        if name == "d" and nxt[0] == "op" and nxt[1] == "^":
            self.take()
            order = int(self.take("num")[1])
            return self.call("d", order)
        return self.symbol_or_function(name, tok[2])

    def call(self, name: str, jet_order: int) -> Expression:
        self.take("op", "(")
        if name == "d":
            inner = self.expr()
            self.take("op", ")")
            order = jet_order if jet_order else 1
            from .expression import iterated_total
            return iterated_total(inner, order)
        if name == "pow":
            base = self.expr()
            self.take("op", ",")
            exponent = self.exponent()
            self.take("op", ")")
            return power_of(base, exponent)
        inner = self.expr()
        self.take("op", ")")
        if name == "inv":
            return inverse_of(inner)
        if name == "log":
            return log_of(inner)
        raise ParseError(f"unknown call {name}", self.line_no)

    def exponent(self) -> AffineExponent:
        """A rational-affine function of the flow parameter."""
        e = self.expr_exponent()
        return e

    def expr_exponent(self) -> AffineExponent:
        out = self.exp_term()
        while True:
            tok = self.peek()
            if tok[0] == "op" and tok[1] in "+-":
                self.take()
                nxt = self.exp_term()
                if tok[1] == "-":
                    nxt = AffineExponent(-nxt.offset, -nxt.slope, nxt.param)
                out = out + nxt
            else:
                return out

    def exp_term(self) -> AffineExponent:
        sign = Fraction(1)
        tok = self.peek()
        if tok[0] == "op" and tok[1] == "-":
            self.take()
            sign = Fraction(-1)
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            q = Fraction(int(tok[1]))
            nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "/":
                self.take()
                q = q / int(self.take("num")[1])
                nxt = self.peek()
            if nxt[0] == "op" and nxt[1] == "*":
                self.take()
                pname = self.take("name")[1]
                return AffineExponent(Fraction(0), sign * q, self._param(pname))
            return AffineExponent(sign * q)
        pname = self.take("name")[1]
        return AffineExponent(Fraction(0), sign, self._param(pname))

    def _param(self, name: str) -> GradedSymbol:
        s = self.theory.maybe_symbol(name)
        if s is None or s.kind != Kind.FLOW_PARAM:
            raise ParseError(f"{name} is not a flow parameter", self.line_no)
        return s

    def symbol_or_function(self, name: str, col: int) -> Expression:
        if name == "eps":
            return Expression.symbol(self.theory, self.theory.epsilon)
        if name == "u":
            return Expression.symbol(self.theory, self.theory.u)
        s = self.theory.maybe_symbol(name)
        if s is not None:
            return Expression.symbol(self.theory, s)
        try:
            self.theory.function(name)
        except TheoryError:
            raise ParseError(f"unknown symbol {name}", self.line_no, col)
        return Expression.func(self.theory, name)

    def func_derivative(self) -> Expression:
        self.take("op", "[")
        args = [self.take("name")[1]]
        while self.peek()[0] == "op" and self.peek()[1] == ",":
            self.take()
            args.append(self.take("name")[1])
        self.take("op", "]")
        self.take("op", "(")
        fname = self.take("name")[1]
        self.take("op", ")")
        return Expression.func(self.theory, fname, args)


def _as_rational_inverse(e: Expression) -> Fraction:
    if len(e.terms) == 1 and not e.terms[0].mono and not e.terms[0].atoms:
        return Fraction(1) / e.terms[0].coef
    raise TheoryError("/ is reserved for rational literals; use inv(...)")


def parse_expression(theory: Theory, src: str, line_no: int = 0) -> Expression:
    return ExpressionParser(theory, src, line_no).parse()


def to_useries(expr: Expression) -> USeries:
    """Split a parsed expression on powers of u and the eps generator."""
    theory = expr.theory
    u = theory.u
    buckets: dict[int, list] = {}
    for t in expr.terms:
        power = 0
        mono = []
        for s, e in t.mono:
            if s is u:
                power = e
            else:
                mono.append((s, e))
        buckets.setdefault(power, []).append((t.coef, t.atoms, tuple(mono)))
    from .expression import _from_raw
    out = {}
    for n, raws in buckets.items():
        out[n] = BElement.from_fused(_from_raw(theory, raws))
    return USeries(theory, out)


def from_useries(x: USeries) -> Expression:
    theory = x.theory
    out = Expression.zero(theory)
    for n, c in x.coeffs.items():
        piece = c.fused()
        for _ in range(n):
            piece = Expression.symbol(theory, theory.u) * piece
        out = out + piece
    return out


# -- theory files -------------------------------------------------------------------


@dataclass
class CoverBlock:
    name: str
    bound: int
    chart_order: list[str] = field(default_factory=list)
    charts: dict[str, Theory] = field(default_factory=dict)
    nu: dict[str, dict[str, Expression]] = field(default_factory=dict)
    overlaps: list = field(default_factory=list)   # (names, theory, maps, mu_src)


@dataclass
class TheoryFile:
    name: str = "theory"
    theory: Theory = None
    expressions: dict[str, Expression] = field(default_factory=dict)
    substitutions: dict[str, CanonicalSubstitution] = field(default_factory=dict)
    covers: dict[str, CoverBlock] = field(default_factory=dict)
    checks: dict[str, dict] = field(default_factory=dict)
    check_order: list[str] = field(default_factory=list)


def parse_theory_file(source: str) -> TheoryFile:
    tf = TheoryFile()
    tf.theory = Theory("main")
    context = "theory"            # theory | cover | chart | overlap | subst
    cover: Optional[CoverBlock] = None
    current_chart: Optional[str] = None
    overlap_entry = None
    subst_name = None
    subst_maps: dict[GradedSymbol, Expression] = {}

    def ctx_theory() -> Theory:
        if context == "chart":
            return cover.charts[current_chart]
        if context == "overlap":
            return overlap_entry[1]
        return tf.theory

    lines = source.splitlines()
    for line_no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        head = words[0]
        try:
            if head == "theory":
                tf.name = words[1]
                tf.theory = Theory(words[1])
            elif head == "field":
                _parse_field(ctx_theory(), words, line_no)
            elif head == "function":
                if len(words) < 4 or words[2] != "args":
                    raise ParseError("function NAME args F1 F2 ...", line_no)
                ctx_theory().add_function(words[1], words[3:])
            elif head == "param":
                ctx_theory().add_flow_param(words[1])
            elif head == "oneform":
                ghost = int(words[words.index("ghost") + 1]) if "ghost" in words else 1
                ctx_theory().add_one_form(words[1], ghost=ghost)
            elif head == "expr":
                name, _, rhs = line[len("expr"):].strip().partition("=")
                name = name.strip()
                if not name or not rhs.strip():
                    raise ParseError("expr NAME = EXPRESSION", line_no)
                tf.expressions[name] = parse_expression(tf.theory, rhs.strip(), line_no)
            elif head == "subst":
                context = "subst"
                subst_name = words[1]
                subst_maps = {}
            elif head == "map":
                if context != "subst":
                    raise ParseError("map outside subst block", line_no)
                lhs, _, rhs = line[len("map"):].strip().partition("->")
                gen = tf.theory.symbol(lhs.strip())
                subst_maps[gen] = parse_expression(tf.theory, rhs.strip(), line_no)
            elif head == "endsubst":
                tf.substitutions[subst_name] = CanonicalSubstitution(tf.theory, subst_maps)
                context = "theory"
            elif head == "cover":
                bound = 3
                if "bound" in words:
                    bound = int(words[words.index("bound") + 1])
                cover = CoverBlock(words[1], bound)
                tf.covers[words[1]] = cover
                context = "cover"
            elif head == "chart":
                current_chart = words[1]
                cover.chart_order.append(current_chart)
                cover.charts[current_chart] = Theory(current_chart)
                cover.nu[current_chart] = {}
                context = "chart"
            elif head == "nu":
                if context != "chart":
                    raise ParseError("nu outside chart block", line_no)
                lhs, _, rhs = line[len("nu"):].strip().partition("=")
                th = cover.charts[current_chart]
                cover.nu[current_chart][lhs.strip()] = \
                    parse_expression(th, rhs.strip(), line_no)
            elif head == "overlap":
                names = words[1:]
                th = Theory("^".join(sorted(names)))
                overlap_entry = (tuple(sorted(names)), th, {}, None)
                cover.overlaps.append(overlap_entry)
                context = "overlap"
            elif head == "from":
                if context != "overlap":
                    raise ParseError("from outside overlap block", line_no)
                chart_name, _, maps_src = line[len("from"):].strip().partition(":")
                chart_name = chart_name.strip()
                src_th = cover.charts[chart_name]
                dst_th = overlap_entry[1]
                images = {}
                for piece in maps_src.split(";"):
                    piece = piece.strip()
                    if not piece:
                        continue
                    lhs, _, rhs = piece.partition("->")
                    images[lhs.strip()] = parse_expression(dst_th, rhs.strip(), line_no)
                # antifields transform by the inverse-Jacobian etale rule
                from .varcalc import EtaleMap
                emap = EtaleMap(dst_th, src_th, images)
                overlap_entry[2][chart_name] = \
                    CanonicalSubstitution(src_th, emap.generator_images(), dst_th)
            elif head == "mu":
                if context != "overlap":
                    raise ParseError("mu outside overlap block", line_no)
                _, _, rhs = line.partition("=")
                mu = parse_expression(overlap_entry[1], rhs.strip(), line_no)
                cover.overlaps[-1] = overlap_entry[:3] + (mu,)
                overlap_entry = cover.overlaps[-1]
            elif head == "endcover":
                context = "theory"
                cover = None
            elif head == "check":
                if len(words) < 3:
                    raise ParseError("check NAME KIND key=value ...", line_no)
                name, kind = words[1], words[2]
                opts = {}
                for w in words[3:]:
                    k, _, v = w.partition("=")
                    opts[k] = v
                opts["kind"] = kind
                tf.checks[name] = opts
                tf.check_order.append(name)
            else:
                raise ParseError(f"unknown directive {head!r}", line_no)
        except TheoryError as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(str(exc), line_no) from exc
    return tf


def _parse_field(theory: Theory, words: list[str], line_no: int):
    if len(words) < 6 or words[2] != "ghost" or words[4] != "parity":
        raise ParseError("field NAME ghost INT parity even|odd", line_no)
    ghost = int(words[3])
    parity = {"even": 0, "odd": 1}.get(words[5])
    if parity is None:
        raise ParseError("parity must be even or odd", line_no)
    theory.add_field(words[1], ghost, parity)


def build_cover(block: CoverBlock):
    """Instantiate a CoverNerve from a parsed cover block."""
    from .thomwhitney import CoverNerve
    nerve = CoverNerve(dict(block.charts), dimension_bound=block.bound)
    for names, th, maps, mu in block.overlaps:
        nerve.declare_overlap(frozenset(names), th, maps, mu=mu)
    return nerve
