"""Jet-space variational calculus: evolutionary vector fields, higher Euler
operators, the Soloviev and Batalin-Vilkovisky antibrackets, Hamiltonian
vector fields, the total-derivative decision procedure and etale
substitutions.

Sign conventions: all partials are graded left derivatives; with that
choice every sign below is fixed and pinned by the flow-table golden
tests (a global-sign failure there means the convention, not the test,
is wrong).
"""

from __future__ import annotations

from fractions import Fraction
from math import comb
from typing import Optional

from .expression import (Expression, equal, is_zero, iterated_total,
                         jet_partial, total_derivative)
from .symbols import GradedSymbol, Kind, Theory, TheoryError, antifield_name


class EvolutionaryVectorField:
    """Prolongation of a component assignment (one expression per field and
    antifield); acts as a graded derivation commuting with the total
    derivative."""

    def __init__(self, theory: Theory, components: dict[GradedSymbol, Expression]):
        self.theory = theory
        self.components = {s: e for s, e in components.items()
                           if not e.is_structural_zero()}
        for s in self.components:
            if s.jet_order != 0 or s.kind not in (Kind.FIELD_JET, Kind.ANTIFIELD_JET):
                raise TheoryError("components must be indexed by 0-jet generators")

    def component(self, sym: GradedSymbol) -> Expression:
        return self.components.get(sym, Expression.zero(self.theory))

    def sign_degree(self) -> int:
        sig: Optional[int] = None
        for s, e in self.components.items():
            es = e.sign_degree()
            if es is None:
                raise TheoryError("inhomogeneous vector field component")
            this = (es + s.sign_degree) % 2
            if sig is None:
                sig = this
            elif sig != this:
                raise TheoryError("vector field of mixed parity")
        return 0 if sig is None else sig

    def apply(self, expr: Expression) -> Expression:
        out = Expression.zero(self.theory)
        for s0, comp in self.components.items():
            kmax = expr.max_jet(s0.base)
            if kmax < 0:
                continue
            dk = comp
            for k in range(kmax + 1):
                if k > 0:
                    dk = total_derivative(dk)
                pd = jet_partial(expr, self.theory.jet(s0.base, k))
                if not pd.is_structural_zero():
                    out = out + dk * pd
        return out

    def __add__(self, other: "EvolutionaryVectorField") -> "EvolutionaryVectorField":
        comps = dict(self.components)
        for s, e in other.components.items():
            comps[s] = comps.get(s, Expression.zero(self.theory)) + e
        return EvolutionaryVectorField(self.theory, comps)

    def __sub__(self, other):
        return self + (other * Fraction(-1))

    def __mul__(self, q) -> "EvolutionaryVectorField":
        return EvolutionaryVectorField(
            self.theory, {s: e * Fraction(q) for s, e in self.components.items()})

    def is_zero(self) -> bool:
        return all(is_zero(e) for e in self.components.values())

    def commutator(self, other: "EvolutionaryVectorField") -> "EvolutionaryVectorField":
        sign = -1 if (self.sign_degree() * other.sign_degree()) % 2 else 1
        comps: dict[GradedSymbol, Expression] = {}
        keys = set(self.components) | set(other.components)
        for s in keys:
            comps[s] = self.apply(other.component(s)) \
                - other.apply(self.component(s)) * sign
        return EvolutionaryVectorField(self.theory, comps)


def prolong(theory: Theory, components: dict[GradedSymbol, Expression]) -> EvolutionaryVectorField:
    return EvolutionaryVectorField(theory, components)


# -- Euler operators ----------------------------------------------------------


def euler(expr: Expression, k: int, base_name: str) -> Expression:
    """Higher Euler operator: sum_l C(k+l, k) (-d)^l of the (k+l)-jet
    partial; k = 0 is the classical variational derivative."""
    if k < 0:
        raise TheoryError("euler order must be nonnegative")
    theory = expr.theory
    out = Expression.zero(theory)
    kmax = expr.max_jet(base_name)
    for ell in range(0, kmax - k + 1):
        pd = jet_partial(expr, theory.jet(base_name, k + ell))
        if pd.is_structural_zero():
            continue
        sgn = -1 if ell % 2 else 1
        out = out + iterated_total(pd, ell) * (comb(k + ell, k) * Fraction(sgn))
    return out


def variational_derivative(expr: Expression, base_name: str) -> Expression:
    return euler(expr, 0, base_name)


# -- Soloviev and BV antibrackets ---------------------------------------------


def soloviev(f: Expression, g: Expression) -> Expression:
    """The Soloviev antibracket, the displayed double sum verbatim; the
    global sign is applied per paired index."""
    theory = f.theory
    if g.theory is not theory:
        raise TheoryError("mixed theory contexts")
    out = Expression.zero(theory)
    for sf, fp in f.sigma_parts():
        for field, anti in theory.field_pairs():
            pref = -1 if ((sf + 1) * field.parity) % 2 else 1
            mirror = pref * (-1 if sf % 2 else 1)
            # field-derivatives of f against antifield-derivatives of g
            kmax = fp.max_jet(field.base)
            for k in range(kmax + 1):
                dfk = jet_partial(fp, theory.jet(field.base, k))
                if dfk.is_structural_zero():
                    continue
                lmax = g.max_jet(anti.base)
                dl = dfk
                for ell in range(lmax + 1):
                    if ell > 0:
                        dl = total_derivative(dl)
                    dgl = jet_partial(g, theory.jet(anti.base, ell))
                    if dgl.is_structural_zero():
                        continue
                    out = out + (dl * iterated_total(dgl, k)) * pref
            # antifield-derivatives of f against field-derivatives of g
            kmax = fp.max_jet(anti.base)
            for k in range(kmax + 1):
                dfk = jet_partial(fp, theory.jet(anti.base, k))
                if dfk.is_structural_zero():
                    continue
                lmax = g.max_jet(field.base)
                dl = dfk
                for ell in range(lmax + 1):
                    if ell > 0:
                        dl = total_derivative(dl)
                    dgl = jet_partial(g, theory.jet(field.base, ell))
                    if dgl.is_structural_zero():
                        continue
                    out = out + (dl * iterated_total(dgl, k)) * mirror
    return out


def bv_antibracket(f: Expression, g: Expression) -> Expression:
    """Integrand of the BV antibracket on functionals; equals the Soloviev
    bracket modulo total derivatives (tested, not assumed)."""
    theory = f.theory
    out = Expression.zero(theory)
    for sf, fp in f.sigma_parts():
        for field, anti in theory.field_pairs():
            pref = -1 if ((sf + 1) * field.parity) % 2 else 1
            mirror = pref * (-1 if sf % 2 else 1)
            da_f = variational_derivative(fp, field.base)
            if not da_f.is_structural_zero():
                db_g = variational_derivative(g, anti.base)
                if not db_g.is_structural_zero():
                    out = out + (da_f * db_g) * pref
            du_f = variational_derivative(fp, anti.base)
            if not du_f.is_structural_zero():
                db_g = variational_derivative(g, field.base)
                if not db_g.is_structural_zero():
                    out = out + (du_f * db_g) * mirror
    return out


def hamiltonian_vf(f: Expression) -> EvolutionaryVectorField:
    """The BV Hamiltonian vector field; depends on f only through its
    functional class."""
    theory = f.theory
    comps: dict[GradedSymbol, Expression] = {}
    for sf, fp in f.sigma_parts():
        for field, anti in theory.field_pairs():
            pref = -1 if ((sf + 1) * field.parity) % 2 else 1
            mirror = pref * (-1 if sf % 2 else 1)
            d_a = variational_derivative(fp, field.base)
            if not d_a.is_structural_zero():
                comps[anti] = comps.get(anti, Expression.zero(theory)) + d_a * pref
            d_u = variational_derivative(fp, anti.base)
            if not d_u.is_structural_zero():
                comps[field] = comps.get(field, Expression.zero(theory)) + d_u * mirror
    return EvolutionaryVectorField(theory, comps)


def ad_expansion(f: Expression) -> list[EvolutionaryVectorField]:
    """Evolutionary fields f_(k) with ad(f) = sum_k d^k o f_(k); f_(0) is
    the Hamiltonian vector field; finitely many are nonzero."""
    theory = f.theory
    kmax = 0
    for t in f.terms:
        for s, _ in t.mono:
            if s.kind in (Kind.FIELD_JET, Kind.ANTIFIELD_JET):
                kmax = max(kmax, s.jet_order)
    fields: list[EvolutionaryVectorField] = []
    for k in range(kmax + 1):
        comps: dict[GradedSymbol, Expression] = {}
        for sf, fp in f.sigma_parts():
            for field, anti in theory.field_pairs():
                pref = -1 if ((sf + 1) * field.parity) % 2 else 1
                mirror = pref * (-1 if sf % 2 else 1)
                d_a = euler(fp, k, field.base)
                if not d_a.is_structural_zero():
                    comps[anti] = comps.get(anti, Expression.zero(theory)) + d_a * pref
                d_u = euler(fp, k, anti.base)
                if not d_u.is_structural_zero():
                    comps[field] = comps.get(field, Expression.zero(theory)) + d_u * mirror
        fields.append(EvolutionaryVectorField(theory, comps))
    while len(fields) > 1 and fields[-1].is_zero():
        fields.pop()
    return fields


def ad_apply(f: Expression, g: Expression) -> Expression:
    """soloviev(f, g) computed through the ad-expansion (resummation oracle)."""
    out = Expression.zero(f.theory)
    for k, vf in enumerate(ad_expansion(f)):
        out = out + iterated_total(vf.apply(g), k)
    return out


# -- total-derivative decision procedure ---------------------------------------


class RescalingError(TheoryError):
    """Raised when the homotopy-witness rescaling is not polynomial."""


def _check_polynomial_in_jets(f: Expression):
    for t in f.terms:
        if t.atoms:
            raise RescalingError(
                "is_total_derivative requires coefficients independent of the "
                "rescaled jet variables (function symbols, log or pow present)")
        for s, _ in t.mono:
            if s.kind not in (Kind.FIELD_JET, Kind.ANTIFIELD_JET):
                raise RescalingError(
                    f"is_total_derivative expects a jet polynomial; found {s.name}")


def _jet_degree_parts(f: Expression) -> dict[int, Expression]:
    buckets: dict[int, list] = {}
    for t in f.terms:
        deg = sum(e for s, e in t.mono
                  if s.kind in (Kind.FIELD_JET, Kind.ANTIFIELD_JET))
        buckets.setdefault(deg, []).append(t)
    return {d: Expression(f.theory, tuple(ts)) for d, ts in buckets.items()}


def is_total_derivative(f: Expression):
    """Decide whether f is a constant plus a total derivative; on success
    return (True, constant, witness g) with f = c + d(g) re-derived exactly.
    The witness comes from the explicit homotopy integral and is one choice
    among many (kernel of d); equality in the functional space is decided by
    the flag, never by witness comparison."""
    theory = f.theory
    _check_polynomial_in_jets(f)
    obstruction = None
    for field, anti in theory.field_pairs():
        for base in (field.base, anti.base):
            vd = variational_derivative(f, base)
            if not is_zero(vd):
                obstruction = (base, vd)
                break
        if obstruction:
            break
    c = f.constant_part()
    if obstruction is not None:
        return (False, c, None)
    parts = _jet_degree_parts(f)
    g = Expression.zero(theory)
    for m, fm in sorted(parts.items()):
        if m == 0:
            continue
        scale = Fraction(1, m)
        for field, anti in theory.field_pairs():
            for base in (field.base, anti.base):
                kmax = fm.max_jet(base)
                sym0 = Expression.symbol(theory, theory.symbol(base, 0))
                for k in range(1, kmax + 1):
                    dk = euler(fm, k, base)
                    if dk.is_structural_zero():
                        continue
                    g = g + iterated_total(sym0 * dk, k - 1) * scale
    if not is_zero(f - Expression.const(theory, c) - total_derivative(g)):
        raise AssertionError("homotopy witness failed to reproduce the input")
    return (True, c, g)


def functional_equal(f: Expression, g: Expression) -> bool:
    """Equality of functional classes: difference is a total derivative with
    zero constant part."""
    flag, c, _ = is_total_derivative(f - g)
    return flag and c == 0


# -- etale maps ---------------------------------------------------------------


class EtaleMap:
    """phi: source -> target local embedding determined by target-field
    expressions y^b(xi); antifields transform with the inverse Jacobian and
    the extension to jets commutes with the total derivative."""

    def __init__(self, source: Theory, target: Theory,
                 images: dict[str, Expression]):
        self.source = source
        self.target = target
        tgt_fields = [fld for fld, _ in target.field_pairs()]
        if set(images) != {fld.name for fld in tgt_fields}:
            raise TheoryError("images must cover exactly the target fields")
        for fld in tgt_fields:
            img = images[fld.name]
            if img.theory is not source:
                raise TheoryError("image expressions must live in the source theory")
            g = img.grade()
            if g is None or g != (fld.ghost, fld.parity, 0):
                raise TheoryError(f"image of {fld.name} has wrong grading")
            for t in img.terms:
                for s, _ in t.mono:
                    if s.jet_order != 0 or s.kind != Kind.FIELD_JET:
                        raise TheoryError("images must be functions of source fields")
        self.field_images = dict(images)
        src_fields = [fld for fld, _ in source.field_pairs()]
        jac = [[jet_partial(images[fb.name], fa) for fa in src_fields]
               for fb in tgt_fields]
        inv = _matrix_right_inverse(source, jac)
        if inv is None:
            raise TheoryError("Jacobian is not invertible: map is not etale")
        self.jacobian = jac
        self.jacobian_inverse = inv
        n = len(src_fields)
        for b in range(n):
            for c in range(n):
                want = Fraction(1 if b == c else 0)
                lhs = Expression.zero(source)
                for a in range(n):
                    lhs = lhs + jac[b][a] * inv[a][c]
                if not is_zero(lhs - Expression.const(source, want)):
                    raise TheoryError("Jacobian inverse check failed")
        self._images: dict[GradedSymbol, Expression] = {}
        for j, fld in enumerate(tgt_fields):
            self._images[target.symbol(fld.name)] = images[fld.name]
        for j, fld in enumerate(tgt_fields):
            anti_t = target.symbol(antifield_name(fld.name))
            val = Expression.zero(source)
            for a, sfld in enumerate(src_fields):
                val = val + inv[a][j] * Expression.symbol(
                    source, source.symbol(antifield_name(sfld.name)))
            self._images[anti_t] = val

    def pullback(self, expr: Expression) -> Expression:
        from .expression import apply_substitution
        if expr.theory is not self.target:
            raise TheoryError("pullback expects a target-theory expression")
        return apply_substitution(expr, self._images, self.source)

    def generator_images(self) -> dict[GradedSymbol, Expression]:
        """The full pullback table on target generators (fields and
        antifields), for use as a substitution."""
        return dict(self._images)


def _matrix_right_inverse(theory: Theory, mat) -> Optional[list[list[Expression]]]:
    """Solve M X = I by Gaussian elimination over the supercommutative
    coefficient ring; pivots must be invertible (even); inverse() atoms are
    introduced only for non-constant pivots."""
    from .expression import inverse_of
    n = len(mat)
    aug = [[mat[i][j] for j in range(n)] +
           [Expression.const(theory, 1 if i == j else 0) for j in range(n)]
           for i in range(n)]
    for col in range(n):
        piv = None
        best = None
        for r in range(col, n):
            e = aug[r][col]
            if e.is_structural_zero():
                continue
            sig = e.sign_degree()
            if sig != 0:
                continue
            score = 0 if (len(e.terms) == 1 and not e.terms[0].mono and not e.terms[0].atoms) else 1
            if best is None or score < best:
                best, piv = score, r
                if score == 0:
                    break
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        if len(p.terms) == 1 and not p.terms[0].mono and not p.terms[0].atoms:
            pinv = Expression.const(theory, Fraction(1) / p.terms[0].coef)
        else:
            pinv = inverse_of(p)
        aug[col] = [pinv * e for e in aug[col]]
        for r in range(n):
            if r == col:
                continue
            factor = aug[r][col]
            if factor.is_structural_zero():
                continue
            aug[r] = [aug[r][j] - factor * aug[col][j] for j in range(2 * n)]
    return [[aug[i][n + j] for j in range(n)] for i in range(n)]
