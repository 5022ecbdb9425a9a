"""The curved Lie superalgebras built on the resolution of the space of
functionals: elements f + g*eps, u-power series of them, differentials,
curvature, Maurer-Cartan checking, gauge flows, BCH and canonical
substitutions.

The eps generator is structural: a BElement stores its body and eps part
separately, the eps part modulo additive constants (constant multiples of
eps vanish in the resolution).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Union

from .coefficients import AffineExponent, LogAtom
from .expression import (Expression, apply_substitution, inverse_of, is_zero,
                         param_derivative, power_of, substitute_param,
                         total_derivative)
from .symbols import EVEN, GradedSymbol, Kind, Theory, TheoryError
from .varcalc import (EvolutionaryVectorField, is_total_derivative, soloviev)


def _strip_eps_constant(e: Expression) -> Expression:
    """Quotient by constants of the chart algebra: eps-terms with no field,
    antifield or function-symbol content vanish (simplex forms and flow
    parameters count as scalars, which is what makes the Whitney image of a
    locally constant cocycle vanish)."""
    kept = []
    dropped = False
    for t in e.terms:
        # every atom kind references chart data (function symbols or
        # log/pow bases in the chart coordinates)
        has_chart = bool(t.atoms) or any(
            s.kind in (Kind.FIELD_JET, Kind.ANTIFIELD_JET) for s, _ in t.mono)
        if has_chart:
            kept.append(t)
        else:
            dropped = True
    if not dropped:
        return e
    return Expression(e.theory, tuple(kept))


class BElement:
    """f + g*eps with f, g eps-free; g modulo constants."""

    __slots__ = ("theory", "body", "eps")

    def __init__(self, theory: Theory, body: Expression, eps: Optional[Expression] = None):
        self.theory = theory
        self.body = body
        self.eps = _strip_eps_constant(eps if eps is not None else Expression.zero(theory))
        for part in (self.body, self.eps):
            for t in part.terms:
                for s, _ in t.mono:
                    if s.kind == Kind.EPSILON:
                        raise TheoryError("eps is structural; split it first")

    @staticmethod
    def zero(theory: Theory) -> "BElement":
        return BElement(theory, Expression.zero(theory))

    @staticmethod
    def of_body(e: Expression) -> "BElement":
        return BElement(e.theory, e)

    @staticmethod
    def of_eps(e: Expression) -> "BElement":
        return BElement(e.theory, Expression.zero(e.theory), e)

    @staticmethod
    def from_fused(e: Expression) -> "BElement":
        """Split an expression containing the eps symbol.  eps is last in
        the canonical order, so each term factors as g*eps with no sign."""
        eps_sym = e.theory.epsilon
        body_terms = []
        eps_raw = []
        for t in e.terms:
            if t.mono and t.mono[-1][0] is eps_sym:
                eps_raw.append((t.coef, t.atoms, t.mono[:-1]))
            else:
                body_terms.append(t)
        from .expression import _from_raw
        return BElement(e.theory, Expression(e.theory, tuple(body_terms)),
                        _from_raw(e.theory, eps_raw))

    def fused(self) -> Expression:
        return self.body + self.eps * Expression.symbol(self.theory, self.theory.epsilon)

    def __add__(self, other: "BElement") -> "BElement":
        return BElement(self.theory, self.body + other.body, self.eps + other.eps)

    def __sub__(self, other: "BElement") -> "BElement":
        return BElement(self.theory, self.body - other.body, self.eps - other.eps)

    def __neg__(self) -> "BElement":
        return BElement(self.theory, -self.body, -self.eps)

    def __mul__(self, q) -> "BElement":
        return BElement(self.theory, self.body * Fraction(q), self.eps * Fraction(q))

    def scale(self, e: Expression) -> "BElement":
        """Left multiplication by an eps-free expression."""
        return BElement(self.theory, e * self.body, e * self.eps)

    def is_zero(self) -> bool:
        return is_zero(self.body) and is_zero(self.eps)

    def is_structural_zero(self) -> bool:
        return self.body.is_structural_zero() and self.eps.is_structural_zero()

    def grade(self):
        """(ghost, sign_degree) of the element; eps contributes (-1, 1)."""
        grades = set()
        if not self.body.is_structural_zero():
            for t in self.body.terms:
                grades.add((t.ghost(), t.sign_degree()))
        if not self.eps.is_structural_zero():
            for t in self.eps.terms:
                grades.add((t.ghost() - 1, (t.sign_degree() + 1) % 2))
        if not grades:
            return (0, EVEN)
        if len(grades) > 1:
            return None
        return grades.pop()

    def map_parts(self, fn: Callable[[Expression], Expression]) -> "BElement":
        return BElement(self.theory, fn(self.body), fn(self.eps))

    def __eq__(self, other) -> bool:
        return isinstance(other, BElement) and self.body == other.body and self.eps == other.eps

    def __repr__(self) -> str:
        from .printer import render
        if self.eps.is_structural_zero():
            return render(self.body)
        if self.body.is_structural_zero():
            return f"({render(self.eps)})*eps"
        return f"{render(self.body)} + ({render(self.eps)})*eps"


def _sigma_of(e: Expression, what: str) -> int:
    s = e.sign_degree()
    if s is None:
        raise TheoryError(f"{what} must be sign-homogeneous")
    return s


def b_differential(x: BElement) -> BElement:
    """d(f + g eps) = (-1)^{pa(g)} dg; d^2 = 0."""
    if x.eps.is_structural_zero():
        return BElement.zero(x.theory)
    out = Expression.zero(x.theory)
    for sg, part in x.eps.sigma_parts():
        out = out + total_derivative(part) * (-1 if sg % 2 else 1)
    return BElement.of_body(out)


def b_bracket(a: BElement, b: BElement) -> BElement:
    """The Soloviev antibracket extended to the resolution: the three-term
    formula with the displayed signs (normative; Leibniz is a property
    test, not an assumption)."""
    body = soloviev(a.body, b.body)
    eps = soloviev(a.body, b.eps)
    if not a.eps.is_structural_zero() and not b.body.is_structural_zero():
        for sf1, part in b.body.sigma_parts():
            eps = eps + soloviev(a.eps, part) * (-1 if (sf1 + 1) % 2 else 1)
    return BElement(a.theory, body, eps)


def antifield_counting_field(theory: Theory) -> EvolutionaryVectorField:
    comps = {}
    for _, anti in theory.field_pairs():
        comps[anti] = Expression.symbol(theory, anti)
    return EvolutionaryVectorField(theory, comps)


def iota(x: BElement) -> BElement:
    """iota(f + g eps) = (-1)^{pa(f)} (N+ f - f) eps, N+ the antifield
    counting operator; iota^2 = 0 and d iota + iota d = ad(D)."""
    if x.body.is_structural_zero():
        return BElement.zero(x.theory)
    nplus = antifield_counting_field(x.theory)
    out = Expression.zero(x.theory)
    for sf, part in x.body.sigma_parts():
        out = out + (nplus.apply(part) - part) * (-1 if sf % 2 else 1)
    return BElement.of_eps(out)


def d_element(theory: Theory) -> Expression:
    """D = xi+_a d(xi^a), coordinate invariant, central in the functional
    algebra."""
    out = Expression.zero(theory)
    for fld, anti in theory.field_pairs():
        out = out + Expression.symbol(theory, anti) * \
            Expression.symbol(theory, theory.jet(fld.name, 1))
    return out


# -- u-series -----------------------------------------------------------------


class USeries:
    """Finite u-power series of BElements; u has ghost number 2."""

    __slots__ = ("theory", "coeffs")

    def __init__(self, theory: Theory, coeffs: dict[int, BElement]):
        self.theory = theory
        self.coeffs = {n: c for n, c in coeffs.items() if not c.is_structural_zero()}
        if any(n < 0 for n in self.coeffs):
            raise TheoryError("negative u-power outside a twist computation")

    @staticmethod
    def zero(theory: Theory) -> "USeries":
        return USeries(theory, {})

    @staticmethod
    def of(x: Union[BElement, Expression], power: int = 0) -> "USeries":
        if isinstance(x, Expression):
            x = BElement.of_body(x)
        return USeries(x.theory, {power: x})

    def coeff(self, n: int) -> BElement:
        return self.coeffs.get(n, BElement.zero(self.theory))

    def powers(self) -> list[int]:
        return sorted(self.coeffs)

    def max_power(self) -> int:
        return max(self.coeffs) if self.coeffs else 0

    def __add__(self, other: "USeries") -> "USeries":
        out = dict(self.coeffs)
        for n, c in other.coeffs.items():
            out[n] = out.get(n, BElement.zero(self.theory)) + c
        return USeries(self.theory, out)

    def __sub__(self, other: "USeries") -> "USeries":
        return self + (other * Fraction(-1))

    def __mul__(self, q) -> "USeries":
        return USeries(self.theory, {n: c * Fraction(q) for n, c in self.coeffs.items()})

    def scale(self, e: Expression) -> "USeries":
        return USeries(self.theory, {n: c.scale(e) for n, c in self.coeffs.items()})

    def shift(self, k: int) -> "USeries":
        return USeries(self.theory, {n + k: c for n, c in self.coeffs.items()})

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.coeffs.values())

    def map_parts(self, fn) -> "USeries":
        return USeries(self.theory, {n: c.map_parts(fn) for n, c in self.coeffs.items()})

    def check_ghost(self, total: int = 0):
        """Coefficient of u^n must have ghost total - 2n (and even parity
        when total is even)."""
        for n, c in self.coeffs.items():
            g = c.grade()
            if g is None:
                raise TheoryError(f"u^{n} coefficient is not homogeneous")
            want = (total - 2 * n, total % 2)
            if g != want:
                raise TheoryError(
                    f"u^{n} coefficient has grade {g}, expected {want}")

    def __eq__(self, other) -> bool:
        if not isinstance(other, USeries):
            return NotImplemented
        ns = set(self.coeffs) | set(other.coeffs)
        return all(self.coeff(n) == other.coeff(n) for n in ns)

    def __repr__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for n in self.powers():
            c = repr(self.coeffs[n])
            parts.append(c if n == 0 else (f"u*({c})" if n == 1 else f"u^{n}*({c})"))
        return " + ".join(parts)


def u_bracket(a: USeries, b: USeries) -> USeries:
    out: dict[int, BElement] = {}
    for na, ca in a.coeffs.items():
        for nb, cb in b.coeffs.items():
            n = na + nb
            v = b_bracket(ca, cb)
            if n in out:
                out[n] = out[n] + v
            else:
                out[n] = v
    return USeries(a.theory, out)


def du(x: USeries) -> USeries:
    """d_u = d + u iota."""
    out: dict[int, BElement] = {}
    for n, c in x.coeffs.items():
        d = b_differential(c)
        if not d.is_structural_zero():
            out[n] = out.get(n, BElement.zero(x.theory)) + d
        i = iota(c)
        if not i.is_structural_zero():
            out[n + 1] = out.get(n + 1, BElement.zero(x.theory)) + i
    return USeries(x.theory, out)


# -- curved context and Maurer-Cartan ------------------------------------------


@dataclass
class CurvedContext:
    """F[[u]] (zero differential) or B[[u]] (d_u = d + u iota), with
    curvature u*D by default."""

    theory: Theory
    mode: str = "B"                      # "B" or "F"
    curvature: Optional[USeries] = None

    def __post_init__(self):
        if self.mode not in ("B", "F"):
            raise TheoryError("mode must be 'B' or 'F'")
        if self.curvature is None:
            self.curvature = USeries.of(BElement.of_body(d_element(self.theory)), 1)
        self.check_axioms_light()

    def check_axioms_light(self):
        # Bianchi: the differential of the curvature vanishes
        if self.mode == "B":
            if not du(self.curvature).is_zero():
                raise TheoryError("Bianchi identity fails for the curvature")

    def differential(self, x: USeries) -> USeries:
        if self.mode == "B":
            return du(x)
        return USeries.zero(self.theory)


@dataclass
class MCReport:
    residual: USeries
    ok: bool
    mode: str
    notes: list[str] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def mc_check(S: USeries, ctx: CurvedContext) -> MCReport:
    """Residual of the Maurer-Cartan equation: curvature + d_u S + (1/2)[S,S].
    In F mode the input must have no eps parts and the residual is zero when
    each u-coefficient is a total derivative with zero constant."""
    S.check_ghost(0)
    half = Fraction(1, 2)
    residual = ctx.curvature + ctx.differential(S) + u_bracket(S, S) * half
    notes: list[str] = []
    if ctx.mode == "F":
        for n, c in S.coeffs.items():
            if not c.eps.is_structural_zero():
                raise TheoryError("F-mode input must have no eps part")
        ok = True
        for n in residual.powers():
            body = residual.coeff(n).body
            flag, c0, _ = is_total_derivative(body)
            if not (flag and c0 == 0):
                ok = False
                notes.append(f"u^{n}: residual is not a total derivative")
        return MCReport(residual, ok, "F", notes)
    ok = residual.is_zero()
    if not ok:
        for n in residual.powers():
            if not residual.coeff(n).is_zero():
                notes.append(f"u^{n}: nonzero residual")
    return MCReport(residual, ok, "B", notes)


def complete_to_b(S: USeries, ctx: CurvedContext) -> USeries:
    """Lift an F-mode solution (no eps parts) to the resolution: the eps
    parts are the homotopy witnesses of the body residuals."""
    half = Fraction(1, 2)
    residual = ctx.curvature + u_bracket(S, S) * half
    out = dict(S.coeffs)
    for n in residual.powers():
        body = residual.coeff(n).body
        flag, c0, g = is_total_derivative(body)
        if not flag or c0 != 0:
            raise TheoryError(f"u^{n} residual is not a total derivative; "
                              "not a covariant field theory")
        if g is not None and not g.is_structural_zero():
            # d(g~ eps) contributes (-1)^{pa(g~)} dg~ to the body; g~ is odd
            # when S is even, so the sign is -1 and g~ = witness.
            out[n] = out.get(n, BElement.zero(S.theory)) + BElement.of_eps(g)
    lifted = USeries(S.theory, out)
    bctx = CurvedContext(S.theory, mode="B", curvature=ctx.curvature)
    rep = mc_check(lifted, bctx)
    if not rep.ok:
        raise TheoryError("completion failed to satisfy the resolved master equation")
    return lifted


# -- gauge flows ---------------------------------------------------------------


@dataclass
class FlowSeries:
    """x bullet tau*y as an exact tau-polynomial when the iterated brackets
    terminate; otherwise a truncation with an explicit marker."""

    x: USeries
    y: USeries
    steps: list[USeries]          # steps[n] = (-ad y)^n (dy + (x,y))
    exact: bool
    termination_index: Optional[int]

    def family(self, tau: GradedSymbol) -> USeries:
        theory = self.x.theory
        out = self.x
        tpow = Expression.symbol(theory, tau)
        acc = Expression.const(theory, 1)
        for n, w in enumerate(self.steps):
            acc = acc * tpow
            out = out + w.scale(acc) * Fraction(1, _fact(n + 1))
        return out

    def at(self, value) -> USeries:
        value = Fraction(value)
        out = self.x
        acc = Fraction(1)
        for n, w in enumerate(self.steps):
            acc = acc * value
            out = out + w * (acc / _fact(n + 1))
        return out

    def endpoint(self) -> USeries:
        if not self.exact:
            raise TruncatedFlowError(
                "flow did not terminate; endpoint claim refused (use "
                "verify_flow_endpoint with a certified family)")
        return self.at(1)


class TruncatedFlowError(TheoryError):
    pass


def _fact(n: int) -> int:
    out = 1
    for k in range(2, n + 1):
        out *= k
    return out


def gauge_flow_series(x: USeries, y: USeries, max_order: int = 24,
                      ctx: Optional[CurvedContext] = None) -> FlowSeries:
    """Solve d(x bullet sy)/ds = dy + (x bullet sy, y) as the explicit
    series; terminates with a certificate when ad(y) is nilpotent on the
    orbit, else truncates with a marker."""
    theory = x.theory
    for n, c in y.coeffs.items():
        g = c.grade()
        if g is None or g[1] != 1 or g[0] != -1 - 2 * n:
            raise TheoryError("gauge generator must be odd of ghost number -1")
    dy = du(y) if (ctx is None or ctx.mode == "B") else USeries.zero(theory)
    w = dy + u_bracket(x, y)
    steps: list[USeries] = []
    exact = False
    index = None
    for n in range(max_order):
        if w.is_zero():
            exact = True
            index = n
            break
        steps.append(w)
        w = u_bracket(y, w) * Fraction(-1)
    return FlowSeries(x, y, steps, exact, index)


# -- substitution flows (pullback tables) ---------------------------------------


class CanonicalSubstitution:
    """Substitution on all generators (fields and antifields), extended as an
    algebra homomorphism commuting with the total derivative."""

    def __init__(self, theory: Theory, images: dict[GradedSymbol, Expression],
                 target: Optional[Theory] = None):
        self.theory = theory
        self.target = target or theory
        self.images = dict(images)

    def image(self, sym: GradedSymbol) -> Expression:
        img = self.images.get(sym)
        if img is not None:
            return img
        return Expression.symbol(self.target, self.target.symbol(sym.name))

    def apply(self, expr: Expression) -> Expression:
        return apply_substitution(expr, self.images, self.target)

    def apply_b(self, x: BElement) -> BElement:
        return BElement(self.target, self.apply(x.body), self.apply(x.eps))

    def apply_u(self, x: USeries) -> USeries:
        return USeries(self.target, {n: self.apply_b(c) for n, c in x.coeffs.items()})

    def after(self, first: "CanonicalSubstitution") -> "CanonicalSubstitution":
        """(self o first): apply first, then self."""
        images = {}
        gens = set(first.images) | set(self.images)
        for fld, anti in self.theory.field_pairs():
            gens.update((fld, self.theory.symbol(anti.name)))
        for g in gens:
            images[g] = self.apply(first.image(g))
        return CanonicalSubstitution(first.theory, images, self.target)

    def check_canonical(self) -> list[tuple[str, str]]:
        """Verify bracket preservation on all generator pairs; returns the
        offending pairs (empty when canonical)."""
        gens = []
        for fld, anti in self.theory.field_pairs():
            gens.append(fld)
            gens.append(anti)
        bad = []
        for i, g1 in enumerate(gens):
            e1 = Expression.symbol(self.theory, g1)
            m1 = self.image(g1)
            for g2 in gens[i:]:
                e2 = Expression.symbol(self.theory, g2)
                lhs = soloviev(m1, self.image(g2))
                rhs = self.apply(soloviev(e1, e2))
                if not is_zero(lhs - rhs):
                    bad.append((g1.name, g2.name))
        return bad


@dataclass
class SubstitutionReport:
    canonical: bool
    offending: list[tuple[str, str]]
    transformed: Optional[Expression] = None


def canonical_substitution_check(m: CanonicalSubstitution,
                                 action: Optional[Expression] = None) -> SubstitutionReport:
    bad = m.check_canonical()
    transformed = None
    if not bad and action is not None:
        transformed = m.apply(action)
    return SubstitutionReport(not bad, bad, transformed)


class FlowClosureError(TheoryError):
    pass


def flow_substitution(theory: Theory, y: Expression, tau: GradedSymbol,
                      direction: int = 1, max_iter: int = 12,
                      verify: bool = True) -> CanonicalSubstitution:
    """Exponential flow of the Hamiltonian derivation ad(y) = (y, -) on
    generators: with direction +1 this solves d(F*g)/dtau = (y, F*g) (the
    pullback-table convention), with -1 the gauge-action direction for
    closed y.  Requires y to be an eps-free 0-jet generator Hamiltonian so
    that ad(y) is an evolutionary derivation.  Each generator must close
    either polynomially or as an eigenvector with eigenvalue a rational
    multiple of a log atom; the result is certified against the defining
    ODE when verify is set."""
    if any(s.jet_order > 0 for s in y.symbols()):
        raise FlowClosureError("flow generator must depend on 0-jets only")
    images: dict[GradedSymbol, Expression] = {}
    for fld, anti in theory.field_pairs():
        for gen in (fld, anti):
            base = Expression.symbol(theory, gen)
            value = _exp_ad_on(theory, y, base, tau, direction, max_iter)
            if not is_zero(value - base):
                images[gen] = value
    sub = CanonicalSubstitution(theory, images)
    if verify:
        for gen, val in images.items():
            lhs = param_derivative(val, tau)
            rhs = soloviev(y, val) * direction
            if not is_zero(lhs - rhs):
                raise FlowClosureError(f"flow ODE residual nonzero on {gen.name}")
            at0 = substitute_param(val, tau, 0)
            if not is_zero(at0 - Expression.symbol(theory, gen)):
                raise FlowClosureError(f"flow initial condition fails on {gen.name}")
    return sub


def _proportionality(v1: Expression, v0: Expression):
    """Detect v1 = q*v0 or v1 = q*log(E)*v0 by candidate-and-verify;
    returns (q, base_key or None)."""
    if v0.is_structural_zero() or v1.is_structural_zero():
        return None
    if len(v1.terms) != len(v0.terms):
        return None
    theory = v1.theory
    t1 = v1.terms[0]
    log_keys = {a.base_key for a, _ in t1.atoms if isinstance(a, LogAtom)}
    candidates: list[tuple[Fraction, Optional[str]]] = []
    for t0 in v0.terms:
        if t0.mono != t1.mono or t0.coef == 0:
            continue
        q = t1.coef / t0.coef
        candidates.append((q, None))
        for key in log_keys:
            candidates.append((q, key))
    for q, key in candidates:
        factor = Expression.const(theory, q)
        if key is not None:
            factor = factor * _log(theory, key)
        if is_zero(v1 - factor * v0):
            return (q, key)
    return None


def _exp_ad_on(theory: Theory, y: Expression, start: Expression,
               tau: GradedSymbol, direction: int, max_iter: int) -> Expression:
    terms = [start]
    v = start
    for n in range(1, max_iter + 1):
        v = soloviev(y, v) * direction
        if is_zero(v):
            out = Expression.zero(theory)
            tsym = Expression.symbol(theory, tau)
            acc = Expression.const(theory, 1)
            for k, w in enumerate(terms):
                out = out + acc * w * Fraction(1, _fact(k))
                acc = acc * tsym
            return out
        prop = _proportionality(v, terms[-1])
        if prop is not None and len(terms) == 1:
            q, base_key = prop
            if base_key is None:
                if q == 0:
                    return start
                raise FlowClosureError(
                    "eigenvalue is a bare rational: exp(q*tau) is not exactly "
                    "representable")
            exp_factor = power_of(
                _base(theory, base_key), AffineExponent(Fraction(0), q, tau))
            return exp_factor * start
        terms.append(v)
    raise FlowClosureError(
        "flow does not close polynomially or in power/log form; refusing to "
        "truncate silently")


def _base(theory: Theory, key: str) -> Expression:
    from .expression import base_expression
    return base_expression(theory, key)


# -- certified flow families -----------------------------------------------------


def gauge_flow_closed(x: USeries, y: Expression, tau: GradedSymbol,
                      ctx: Optional[CurvedContext] = None,
                      max_iter: int = 12) -> tuple[USeries, "EndpointReport"]:
    """Gauge flow by an eps-free 0-jet generator whose ad-orbit closes in
    power/log form: the homogeneous part is the substitution exponential
    and the d_u y source integrates term by term (the iterated brackets of
    d_u y must terminate).  The family is certified against the flow ODE
    before being returned."""
    theory = x.theory
    ys = USeries.of(BElement.of_body(y))
    sub = flow_substitution(theory, y, tau, direction=-1)
    family = sub.apply_u(x)
    w = du(ys) if (ctx is None or ctx.mode == "B") else USeries.zero(theory)
    if not w.is_zero():
        t = Expression.symbol(theory, tau)
        acc = Expression.const(theory, 1)
        v = w
        n = 0
        while not v.is_zero():
            if n >= max_iter:
                raise FlowClosureError(
                    "d_u(y) source brackets do not terminate; closed flow "
                    "unavailable")
            acc = acc * t
            family = family + v.scale(acc) * Fraction(1, _fact(n + 1))
            v = u_bracket(ys, v) * Fraction(-1)
            n += 1
    cert = verify_flow_endpoint(x, family, ys, tau, ctx)
    if not cert:
        raise FlowClosureError("closed gauge flow failed ODE certification")
    return family, cert


@dataclass
class EndpointReport:
    ok: bool
    initial_ok: bool
    residual: USeries
    endpoint: Optional[USeries]

    def __bool__(self):
        return self.ok and self.initial_ok


def verify_flow_endpoint(x: USeries, family: USeries, y: USeries,
                         tau: GradedSymbol, ctx: Optional[CurvedContext] = None) -> EndpointReport:
    """Certify a tau-dependent family as the gauge flow of x by y: checks
    d(family)/dtau = dy + (family, y) symbolically and family(0) = x; the
    endpoint is the family at tau = 1."""
    theory = x.theory
    dtau = family.map_parts(lambda e: param_derivative(e, tau))
    dy = du(y) if (ctx is None or ctx.mode == "B") else USeries.zero(theory)
    residual = dtau - dy - u_bracket(family, y)
    ok = residual.is_zero()
    at0 = family.map_parts(lambda e: substitute_param(e, tau, 0))
    initial_ok = (at0 - x).is_zero()
    endpoint = family.map_parts(lambda e: substitute_param(e, tau, 1)) if ok and initial_ok else None
    return EndpointReport(ok, initial_ok, residual, endpoint)


# -- Baker-Campbell-Hausdorff ------------------------------------------------------

# Taylor coefficients of x/(1 - exp(-x)): Bernoulli-plus numbers over n!
_PSI = [Fraction(1), Fraction(1, 2), Fraction(1, 12), Fraction(0),
        Fraction(-1, 720), Fraction(0), Fraction(1, 30240), Fraction(0),
        Fraction(-1, 1209600), Fraction(0)]


@dataclass
class BCHResult:
    series: USeries
    orders: list[USeries]          # contribution at each bracket order
    closed_form: Optional[USeries]
    hypothesis_checked: bool


def bch(y: USeries, z: USeries, order: int = 6) -> BCHResult:
    """y * z to the given nested-bracket order via the integral formula's
    series; when ad(z) ad(y)^n z = 0 and ad(y) z = q log(E) z the closed
    form y + [ad(y)/(1-e^{-ad(y)})] z is also produced."""
    theory = y.theory
    if order + 1 > len(_PSI):
        raise TheoryError(f"bch supports order <= {len(_PSI) - 1}")
    # w(t) = y + sum t^k u_k solving dw/dt = psi(ad_w) z
    us: list[USeries] = []        # u_1.. in order

    import itertools

    def ad_seq_apply(ks: tuple[int, ...]) -> USeries:
        out = z
        for k in reversed(ks):
            w = y if k == 0 else us[k - 1]
            out = u_bracket(w, out)
        return out

    for m in range(0, order):
        # t^m coefficient of psi(ad_w) z
        coeff = USeries.zero(theory)
        for n in range(0, order + 1):
            if _PSI[n] == 0:
                continue
            if n == 0:
                if m == 0:
                    coeff = coeff + z * _PSI[0]
                continue
            for ks in itertools.product(range(0, m + 1), repeat=n):
                if sum(ks) != m:
                    continue
                if any(k > len(us) for k in ks):
                    continue
                coeff = coeff + ad_seq_apply(ks) * _PSI[n]
        us.append(coeff * Fraction(1, m + 1))
    total = y
    orders = []
    for u in us:
        orders.append(u)
        total = total + u
    closed = None
    hyp = False
    v1 = u_bracket(y, z)
    prop = _u_proportionality(v1, z)
    if prop is not None:
        q, base_key = prop
        if base_key is not None and q.denominator == 1:
            hyp = all(u_bracket(z, _ad_pow(y, z, n)).is_zero() for n in range(3))
            if hyp:
                closed = y + _psi_closed(theory, int(q), base_key, z)
    return BCHResult(total, orders, closed, hyp)


def _ad_pow(y: USeries, z: USeries, n: int) -> USeries:
    out = z
    for _ in range(n):
        out = u_bracket(y, out)
    return out


def _u_proportionality(v1: USeries, v0: USeries):
    ratio = None
    for n in set(v1.coeffs) | set(v0.coeffs):
        for part in ("body", "eps"):
            e1 = getattr(v1.coeff(n), part)
            e0 = getattr(v0.coeff(n), part)
            if e0.is_structural_zero():
                if e1.is_structural_zero():
                    continue
                return None
            this = _proportionality(e1, e0)
            if this is None:
                return None
            if ratio is None:
                ratio = this
            elif ratio != this:
                return None
    return ratio


def _psi_closed(theory: Theory, q: int, base_key: str, z: USeries) -> USeries:
    """[ad(y)/(1 - e^{-ad y})] z for ad(y) z = q log(E) z:
    equals [q log(E)/(1 - E^{-q})] z, written with polynomial inverses."""
    E = _base(theory, base_key)
    lam = Expression.const(theory, q) * _log(theory, base_key)
    if q > 0:
        # q log E / (1 - E^-q) = q log E * E^q / (E^q - 1)
        denom = E ** q - Expression.const(theory, 1)
        factor = lam * (E ** q) * inverse_of(denom)
    elif q < 0:
        # 1 - E^{-q} with -q > 0 is polynomial
        denom = Expression.const(theory, 1) - E ** (-q)
        factor = lam * inverse_of(denom)
    else:
        factor = Expression.const(theory, 1)
    return z.scale(factor)


def _log(theory: Theory, base_key: str) -> Expression:
    from .expression import _from_raw
    return _from_raw(theory, [(Fraction(1), ((LogAtom(base_key), 1),), ())])


# -- misc ----------------------------------------------------------------------


def embed_b(x: BElement, target: Theory) -> BElement:
    from .expression import embed
    return BElement(target, embed(x.body, target), embed(x.eps, target))


def embed_u(x: USeries, target: Theory) -> USeries:
    return USeries(target, {n: embed_b(c, target) for n, c in x.coeffs.items()})


def iota_series(x: USeries) -> USeries:
    return USeries(x.theory, {n: iota(c) for n, c in x.coeffs.items()})


def antifield_rank(S: USeries) -> int:
    """Maximal total antifield degree across the u^0 body terms."""
    body = S.coeff(0).body
    rank = 0
    for t in body.terms:
        deg = sum(e for s, e in t.mono if s.kind == Kind.ANTIFIELD_JET)
        rank = max(rank, deg)
    return rank
