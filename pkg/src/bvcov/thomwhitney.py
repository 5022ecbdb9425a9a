"""Sullivan simplicial forms on a declared Cech nerve, the Whitney map and
the Thom-Whitney curved Lie superalgebra with global Maurer-Cartan
checking.

Charts and intersections are symbolic: per overlap the user supplies a
chart theory, restriction substitutions and the (nu, mu) data; emptiness
is declared, not computed.  Simplex forms are fused into the expression
algebra of each overlap (form degree drives the Koszul signs), so no
separate tensor type exists at runtime.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

from .expression import Expression, embed, is_zero, odd_derivation
from .curved import (BElement, CanonicalSubstitution, USeries, du, u_bracket)
from .symbols import GradedSymbol, Theory, TheoryError

Tuple = tuple[str, ...]


@dataclass
class OverlapContext:
    theory: Theory
    from_chart: dict[str, CanonicalSubstitution]
    mu: Optional[Expression] = None        # for the ordered pair (min, max)


class CoverNerve:
    """Chart index set with declared nonempty intersections, restriction
    maps and a dimension bound; simplices beyond the bound are empty."""

    def __init__(self, charts: dict[str, Theory], dimension_bound: int = 3):
        self.chart_names = sorted(charts)
        self.charts = dict(charts)
        self.overlaps: dict[frozenset, OverlapContext] = {}
        self.dimension_bound = dimension_bound
        self._simplex_theories: dict[tuple, Theory] = {}

    def declare_overlap(self, names: frozenset | set | tuple,
                        theory: Theory,
                        from_chart: dict[str, CanonicalSubstitution],
                        mu: Optional[Expression] = None):
        key = frozenset(names)
        if not all(n in self.charts for n in key):
            raise TheoryError("overlap references unknown charts")
        if set(from_chart) != set(key):
            raise TheoryError("need one restriction map per member chart")
        self.overlaps[key] = OverlapContext(theory, from_chart, mu)

    def nonempty(self, names) -> bool:
        key = frozenset(names)
        if len(key) == 1:
            return next(iter(key)) in self.charts
        return key in self.overlaps

    def context_theory(self, names) -> Theory:
        key = frozenset(names)
        if len(key) == 1:
            return self.charts[next(iter(key))]
        return self.overlaps[key].theory

    def tuples(self, max_len: Optional[int] = None) -> list[Tuple]:
        """All index tuples up to the dimension bound whose member set is
        declared nonempty."""
        out = []
        top = (self.dimension_bound + 1) if max_len is None else max_len
        for k in range(1, top + 1):
            for T in itertools.product(self.chart_names, repeat=k):
                if self.nonempty(T):
                    out.append(T)
        return out

    # -- fused simplex theories ----------------------------------------

    def simplex_theory(self, names, k: int) -> Theory:
        key = (frozenset(names), k)
        got = self._simplex_theories.get(key)
        if got is not None:
            return got
        base = self.context_theory(names)
        t = base.extended(f"{base.name}|D{k}")
        for i in range(1, k + 1):
            if not t.has_name(f"t_{i}"):
                t.add_simplex_coordinate(f"t_{i}")
            if not t.has_name(f"dt_{i}"):
                t.add_one_form(f"dt_{i}", ghost=1)
        self._simplex_theories[key] = t
        return t

    def t_symbol(self, theory: Theory, i: int, k: int) -> Expression:
        """Barycentric coordinate t_i on the k-simplex, with t_0 eliminated."""
        if i == 0:
            out = Expression.const(theory, 1)
            for j in range(1, k + 1):
                out = out - Expression.of(theory, f"t_{j}")
            return out
        return Expression.of(theory, f"t_{i}")

    def dt_symbol(self, theory: Theory, i: int, k: int) -> Expression:
        if i == 0:
            out = Expression.zero(theory)
            for j in range(1, k + 1):
                out = out - Expression.of(theory, f"dt_{j}")
            return out
        return Expression.of(theory, f"dt_{i}")

    # -- restrictions ------------------------------------------------------

    def restrict(self, value: USeries, src_names, dst_names, dst_theory: Theory) -> USeries:
        """Restrict a value on U_{src} to U_{dst} (src set inside dst set),
        landing in the given fused theory."""
        src = frozenset(src_names)
        dst = frozenset(dst_names)
        if not src <= dst:
            raise TheoryError("restriction goes to a smaller intersection only")
        if src == dst:
            return _reseat(value, dst_theory)
        if len(src) == 1:
            sub = self.overlaps[dst].from_chart[next(iter(src))]
            images = {g: embed(img, dst_theory) for g, img in sub.images.items()}
            moved = CanonicalSubstitution(sub.theory, images, dst_theory)
            return moved.apply_u(value)
        src_th = self.context_theory(src)
        dst_th = self.context_theory(dst)
        if src_th is dst_th or src_th.name == dst_th.name:
            return _reseat(value, dst_theory)
        raise TheoryError(
            f"restriction {sorted(src)} -> {sorted(dst)} not declared")


def _reseat(value: USeries, theory: Theory) -> USeries:
    return USeries(theory, {n: BElement(theory, embed(c.body, theory),
                                        embed(c.eps, theory))
                            for n, c in value.coeffs.items()})


# -- simplicial form operations ---------------------------------------------------


def simplicial_pullback(nerve: CoverNerve, f: list[int], k: int, ell: int,
                        value: USeries, src_names, dst_theory: Theory) -> USeries:
    """Pullback along the arrow f: [k] -> [ell] of Delta (f given as the
    image list of 0..k), acting on the simplex coordinates of a value on an
    ell-simplex; the underlying chart value is restricted separately.
    f* t_i = sum_{f(j)=i} t_j, and f* commutes with the form differential."""
    if len(f) != k + 1 or any(f[i] > f[i + 1] for i in range(k)):
        raise TheoryError("arrow must be a monotone list of length k+1")
    src_th = value.theory
    images: dict[GradedSymbol, Expression] = {}
    for i in range(1, ell + 1):
        img_t = Expression.zero(dst_theory)
        img_dt = Expression.zero(dst_theory)
        for j, fj in enumerate(f):
            if fj == i:
                img_t = img_t + nerve.t_symbol(dst_theory, j, k)
                img_dt = img_dt + nerve.dt_symbol(dst_theory, j, k)
        images[src_th.symbol(f"t_{i}")] = img_t
        images[src_th.symbol(f"dt_{i}")] = img_dt
    sub = CanonicalSubstitution(src_th, images, dst_theory)
    return sub.apply_u(value)


def form_differential(value: USeries) -> USeries:
    """The simplex de Rham differential: t_i -> dt_i, as an odd left
    derivation of the fused algebra."""
    theory = value.theory
    images = {}
    for i in range(1, 64):
        s = theory.maybe_symbol(f"t_{i}")
        if s is None:
            break
        images[s] = Expression.of(theory, f"dt_{i}")
    return value.map_parts(lambda e: odd_derivation(e, images))


# -- cochains ---------------------------------------------------------------------


class CechCochain:
    """Alternating Cech k-cochain with values on sorted distinct tuples."""

    def __init__(self, nerve: CoverNerve, degree: int,
                 values: dict[Tuple, USeries]):
        self.nerve = nerve
        self.degree = degree
        self.values: dict[Tuple, USeries] = {}
        for T, v in values.items():
            if len(T) != degree + 1 or tuple(sorted(T)) != T or len(set(T)) != len(T):
                raise TheoryError("values must be keyed by sorted distinct tuples")
            if not nerve.nonempty(T):
                raise TheoryError(f"tuple {T} is declared empty")
            self.values[T] = v

    def value(self, T: Tuple) -> tuple[int, Optional[USeries]]:
        """(sign, value on sorted representative) with alternation; sign 0
        for repeated indices."""
        if len(set(T)) != len(T):
            return (0, None)
        order = tuple(sorted(T))
        v = self.values.get(order)
        if v is None:
            return (0, None)
        perm = list(T)
        sign = 1
        for i in range(len(perm)):
            for j in range(len(perm) - 1 - i):
                if perm[j] > perm[j + 1]:
                    perm[j], perm[j + 1] = perm[j + 1], perm[j]
                    sign = -sign
        return (sign, v)


def cech_delta(c: CechCochain) -> CechCochain:
    """Alternating face sum with restriction maps; delta^2 = 0."""
    nerve = c.nerve
    out: dict[Tuple, USeries] = {}
    for T in nerve.tuples():
        if len(T) != c.degree + 2 or tuple(sorted(T)) != T or len(set(T)) != len(T):
            continue
        theory = nerve.context_theory(T)
        acc = USeries.zero(theory)
        ok = False
        for i in range(len(T)):
            face = T[:i] + T[i + 1:]
            sign, v = c.value(face)
            if sign == 0 or v is None:
                continue
            ok = True
            moved = nerve.restrict(v, face, T, theory)
            acc = acc + (moved * Fraction(sign) if i % 2 == 0 else moved * Fraction(-sign))
        if ok:
            out[T] = acc
    return CechCochain(nerve, c.degree + 1, out)


class TWElement:
    """Assignment of fused simplex-form values to every admissible tuple."""

    def __init__(self, nerve: CoverNerve, values: dict[Tuple, USeries]):
        self.nerve = nerve
        self.values = values

    def value(self, T: Tuple) -> USeries:
        return self.values[T]

    def map(self, fn: Callable[[Tuple, USeries], USeries]) -> "TWElement":
        return TWElement(self.nerve, {T: fn(T, v) for T, v in self.values.items()})

    def __add__(self, other: "TWElement") -> "TWElement":
        return TWElement(self.nerve, {T: self.values[T] + other.values[T]
                                      for T in self.values})

    def __sub__(self, other: "TWElement") -> "TWElement":
        return TWElement(self.nerve, {T: self.values[T] - other.values[T]
                                      for T in self.values})

    def __mul__(self, q) -> "TWElement":
        return TWElement(self.nerve, {T: v * Fraction(q) for T, v in self.values.items()})

    def is_zero(self) -> bool:
        return all(v.is_zero() for v in self.values.values())

    def nonzero_tuples(self) -> list[Tuple]:
        return [T for T, v in self.values.items() if not v.is_zero()]


def whitney(c: CechCochain) -> TWElement:
    """The Whitney map: the 1/(k+1) alternating t dt...dt sum applied to the
    alternating representative, extended to every admissible tuple."""
    nerve = c.nerve
    k = c.degree
    out: dict[Tuple, USeries] = {}
    for T in nerve.tuples():
        m = len(T) - 1
        theory = nerve.simplex_theory(T, m)
        acc = USeries.zero(theory)
        for positions in itertools.product(range(m + 1), repeat=k + 1):
            sign, v = c.value(tuple(T[i] for i in positions))
            if sign == 0 or v is None:
                continue
            moved = nerve.restrict(v, tuple(sorted(set(T[i] for i in positions))),
                                   T, theory)
            for j in range(k + 1):
                form = Expression.const(theory, 1 if j % 2 == 0 else -1)
                form = form * nerve.t_symbol(theory, positions[j], m)
                for r in range(k + 1):
                    if r != j:
                        form = form * nerve.dt_symbol(theory, positions[r], m)
                acc = acc + moved.scale(form) * Fraction(sign, k + 1)
        out[T] = acc
    return TWElement(nerve, out)


# -- the curved structure on the totalization --------------------------------------


def tw_differential(x: TWElement) -> TWElement:
    """d_TW,u = (form differential) + d + u iota in the fused convention."""
    return x.map(lambda T, v: form_differential(v) + du(v))


def tw_bracket(a: TWElement, b: TWElement) -> TWElement:
    return TWElement(a.nerve, {T: u_bracket(a.values[T], b.values[T])
                               for T in a.values})


def tw_curvature(nerve: CoverNerve) -> TWElement:
    out = {}
    for T in nerve.tuples():
        theory = nerve.simplex_theory(T, len(T) - 1)
        out[T] = USeries.of(BElement.of_body(d_element_matter(theory)), 1)
    return TWElement(nerve, out)


def d_element_matter(theory: Theory) -> Expression:
    out = Expression.zero(theory)
    for fld, anti in theory.field_pairs():
        out = out + Expression.symbol(theory, anti) * \
            Expression.symbol(theory, theory.jet(fld.name, 1))
    return out


def whitney_commutes(c: CechCochain) -> TWElement:
    """Residual of the cochain-map identity: d_TW(w(c)) - w(delta_tot c)
    where delta_tot = Cech delta + (-1)^k (internal d_u)."""
    k = c.degree
    lhs = tw_differential(whitney(c))
    internal = CechCochain(c.nerve, k, {
        T: du(v) * Fraction((-1) ** k) for T, v in c.values.items()})
    rhs = whitney(cech_delta(c)) + whitney(internal)
    return lhs - rhs


@dataclass
class GlobalMCReport:
    residuals: dict[Tuple, USeries]
    ok: bool
    failing: list[Tuple]


def global_mc_check(SS: TWElement) -> GlobalMCReport:
    """d_TW,u SS + (1/2)[SS, SS] + uD on every admissible tuple."""
    nerve = SS.nerve
    residual = tw_differential(SS) + tw_bracket(SS, SS) * Fraction(1, 2) \
        + tw_curvature(nerve)
    failing = residual.nonzero_tuples()
    return GlobalMCReport(residual.values, not failing, failing)


def check_simplicial(SS: TWElement, max_checks: int = 400) -> list[tuple]:
    """Equalizer condition on the generating arrows of the simplex category:
    the form pullback of the value on a tuple agrees with the restricted
    value on the reindexed tuple."""
    nerve = SS.nerve
    bad = []
    checked = 0
    for T in nerve.tuples():
        m = len(T) - 1
        arrows: list[list[int]] = []
        if m >= 1:
            for i in range(m + 1):
                arrows.append([j for j in range(m + 1) if j != i])      # faces
        if len(T) + 1 <= nerve.dimension_bound + 1:
            for i in range(m + 1):
                arrows.append(list(range(i + 1)) + list(range(i, m + 1)))  # degeneracies
        for f in arrows:
            src = tuple(T[j] for j in f)       # T o f, the reindexed tuple
            k = len(f) - 1
            theory = nerve.simplex_theory(T, k)
            # form pullback of the long-tuple value along f: [k] -> [m]
            lhs = simplicial_pullback(nerve, f, k, m, SS.value(T), T, theory)
            rhs = nerve.restrict(SS.value(src), src, T, theory)
            if not (lhs - rhs).is_zero():
                bad.append((T, f))
            checked += 1
            if checked >= max_checks:
                return bad
    return bad


# -- theorem-global builder ----------------------------------------------------------


def global_covariant_theory(nerve: CoverNerve,
                            local_series: dict[str, USeries]) -> TWElement:
    """w(S_u + mu eps): the Whitney image of the chart-wise local theories
    plus the overlap functions mu as an eps-valued 1-cochain."""
    zero_deg = CechCochain(nerve, 0, {(a,): local_series[a] for a in nerve.chart_names})
    out = whitney(zero_deg)
    mu_values: dict[Tuple, USeries] = {}
    for key, ctx in nerve.overlaps.items():
        if len(key) == 2 and ctx.mu is not None:
            pair = tuple(sorted(key))
            mu_values[pair] = USeries.of(BElement.of_eps(ctx.mu))
    if mu_values:
        out = out + whitney(CechCochain(nerve, 1, mu_values))
    return out


@dataclass
class Refinement:
    """A refinement of covers: a map of chart indices plus, per fine
    context, the restriction from the matching coarse context."""

    coarse: CoverNerve
    fine: CoverNerve
    chart_map: dict[str, str]
    restrictions: dict[frozenset, CanonicalSubstitution]

    def transport(self, SS: TWElement) -> TWElement:
        out: dict[Tuple, USeries] = {}
        for T in self.fine.tuples():
            phi_t = tuple(self.chart_map[a] for a in T)
            theory = self.fine.simplex_theory(T, len(T) - 1)
            v = SS.value(phi_t)
            sub = self.restrictions[frozenset(T)]
            images = {g: embed(img, theory) for g, img in sub.images.items()}
            moved = CanonicalSubstitution(sub.theory, images, theory)
            out[T] = moved.apply_u(v)
        return TWElement(self.fine, out)


@dataclass
class GaugeEquivalenceReport:
    homotopy_ok: bool
    identity_one_ok: bool
    identity_two_ok: bool
    endpoint_ok: bool

    @property
    def ok(self):
        return (self.homotopy_ok and self.identity_one_ok
                and self.identity_two_ok and self.endpoint_ok)


def tw_gauge_flow(x: TWElement, y: TWElement, max_order: int = 12) -> TWElement:
    w = tw_differential(y) + tw_bracket(x, y)
    out = x
    coeff = Fraction(1)
    for n in range(max_order):
        if w.is_zero():
            return out
        coeff = coeff / (n + 1)
        out = out + w * coeff
        w = tw_bracket(y, w) * Fraction(-1)
    raise TheoryError("Thom-Whitney gauge flow did not terminate")


def gauge_equivalence_check(nerve: CoverNerve,
                            nu0: dict[str, dict[str, Expression]],
                            mu0: dict[frozenset, Expression],
                            nu1: dict[str, dict[str, Expression]],
                            mu1: dict[frozenset, Expression],
                            nu_tilde: dict[str, Expression],
                            build: Callable[[dict, dict], TWElement]) -> GaugeEquivalenceReport:
    """Verify nu1 - nu0 = d(nu_tilde) per chart and mu1 - mu0 = delta
    nu_tilde per overlap, then check SS0 bullet w(nu_tilde eps) = SS1 via
    the two bracket identities of the equivalence proposition."""
    from .expression import partial_derivative
    homotopy_ok = True
    for a in nerve.chart_names:
        th = nerve.charts[a]
        for f, _ in th.field_pairs():
            want = nu1[a].get(f.name, Expression.zero(th)) - \
                nu0[a].get(f.name, Expression.zero(th))
            got = partial_derivative(nu_tilde[a], f)
            if not is_zero(want - got):
                homotopy_ok = False
    for key, ctx in nerve.overlaps.items():
        if len(key) != 2:
            continue
        a, b = tuple(sorted(key))
        ra = ctx.from_chart[a]
        rb = ctx.from_chart[b]
        # orientation pinned by the global MC corpus: d mu_{ab} = nu_b - nu_a
        want = mu1[key] - mu0[key]
        got = rb.apply(nu_tilde[b]) - ra.apply(nu_tilde[a])
        if not is_zero(want - got):
            homotopy_ok = False
    SS0 = build(nu0, mu0)
    SS1 = build(nu1, mu1)
    y = whitney(CechCochain(nerve, 0, {
        (a,): USeries.of(BElement.of_eps(nu_tilde[a])) for a in nerve.chart_names}))
    diff = SS1 - SS0
    id1 = (tw_differential(y) + tw_bracket(SS0, y) - diff).is_zero()
    id2 = tw_bracket(diff, y).is_zero()
    endpoint = tw_gauge_flow(SS0, y)
    return GaugeEquivalenceReport(homotopy_ok, id1, id2, (endpoint - SS1).is_zero())
