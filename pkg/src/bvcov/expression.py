"""Exact graded-supercommutative expression engine.

An expression is a finite sum of terms; a term is an exact rational
coefficient, a product of even ghost-0 coefficient atoms (function
symbols, log, pow) and a monomial over graded symbols in the theory's
canonical order.  Odd symbols (parity + form degree odd) square to zero
and reordering tracks the Koszul sign.  Everything is immutable.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

from .coefficients import AffineExponent, Atom, FuncAtom, LogAtom, PowerAtom
from .symbols import EVEN, GradedSymbol, Kind, Theory, TheoryError

Mono = tuple[tuple[GradedSymbol, int], ...]
Atoms = tuple[tuple[Atom, int], ...]
RawTerm = tuple[Fraction, Sequence[tuple[Atom, int]], Sequence[tuple[GradedSymbol, int]]]


class GradingError(TheoryError):
    pass


def _mono_key(theory: Theory, mono: Mono) -> tuple:
    return tuple((theory.sort_key(s), e) for s, e in mono)


def _atoms_key(atoms: Atoms) -> tuple:
    return tuple((a.key(), e) for a, e in atoms)


class Term:
    __slots__ = ("coef", "atoms", "mono")

    def __init__(self, coef: Fraction, atoms: Atoms, mono: Mono):
        self.coef = coef
        self.atoms = atoms
        self.mono = mono

    def sign_degree(self) -> int:
        return sum(s.sign_degree * e for s, e in self.mono) % 2

    def ghost(self) -> int:
        return sum(s.ghost * e for s, e in self.mono)

    def parity(self) -> int:
        return sum(s.parity * e for s, e in self.mono) % 2

    def form_degree(self) -> int:
        return sum(s.form_degree * e for s, e in self.mono)


def _sort_mono(theory: Theory, seq: Sequence[tuple[GradedSymbol, int]]) -> Optional[tuple[int, Mono]]:
    """Canonically order a written monomial; returns (koszul sign, mono) or
    None when an odd symbol squares to zero."""
    entries = [(theory.sort_key(s), s, e) for s, e in seq if e != 0]
    # Koszul sign: inversions among odd entries in written order.
    odd_keys = [k for k, s, e in entries if s.sign_degree == 1]
    inv = 0
    for i in range(len(odd_keys)):
        ki = odd_keys[i]
        for j in range(i + 1, len(odd_keys)):
            if odd_keys[j] < ki:
                inv += 1
    entries.sort(key=lambda t: t[0])
    merged: list[tuple[GradedSymbol, int]] = []
    for _, s, e in entries:
        if merged and merged[-1][0] is s:
            merged[-1] = (s, merged[-1][1] + e)
        else:
            merged.append((s, e))
    for s, e in merged:
        if s.sign_degree == 1 and e > 1:
            return None
        if e < 0:
            raise TheoryError(f"negative exponent on {s.name}")
    return (-1 if inv % 2 else 1, tuple(merged))


class Expression:
    """Canonical sum of Koszul-signed terms over one theory context."""

    __slots__ = ("theory", "terms", "_hash")

    def __init__(self, theory: Theory, terms: tuple[Term, ...]):
        self.theory = theory
        self.terms = terms
        self._hash: Optional[int] = None

    # -- constructors ---------------------------------------------------

    @staticmethod
    def zero(theory: Theory) -> "Expression":
        return Expression(theory, ())

    @staticmethod
    def const(theory: Theory, q) -> "Expression":
        q = Fraction(q)
        if q == 0:
            return Expression.zero(theory)
        return _from_raw(theory, [(q, (), ())])

    @staticmethod
    def symbol(theory: Theory, s: GradedSymbol, power: int = 1) -> "Expression":
        return _from_raw(theory, [(Fraction(1), (), ((s, power),))])

    @staticmethod
    def of(theory: Theory, name: str, jet: int = 0) -> "Expression":
        return Expression.symbol(theory, theory.symbol(name, jet))

    @staticmethod
    def func(theory: Theory, name: str, deriv: Sequence[str] = ()) -> "Expression":
        theory.function(name)
        atom = FuncAtom(name, tuple(sorted(deriv)))
        return _from_raw(theory, [(Fraction(1), ((atom, 1),), ())])

    # -- algebra ----------------------------------------------------------

    def __add__(self, other: "Expression") -> "Expression":
        other = _coerce(self.theory, other)
        return _from_terms(self.theory, list(self.terms) + list(other.terms))

    __radd__ = __add__

    def __neg__(self) -> "Expression":
        return Expression(self.theory,
                          tuple(Term(-t.coef, t.atoms, t.mono) for t in self.terms))

    def __sub__(self, other) -> "Expression":
        return self + (-_coerce(self.theory, other))

    def __rsub__(self, other) -> "Expression":
        return _coerce(self.theory, other) + (-self)

    def __mul__(self, other) -> "Expression":
        if isinstance(other, (int, Fraction)):
            q = Fraction(other)
            if q == 0:
                return Expression.zero(self.theory)
            return Expression(self.theory,
                              tuple(Term(t.coef * q, t.atoms, t.mono) for t in self.terms))
        other = _coerce(self.theory, other)
        raw: list[RawTerm] = []
        for t1 in self.terms:
            for t2 in other.terms:
                raw.append((t1.coef * t2.coef,
                            tuple(t1.atoms) + tuple(t2.atoms),
                            tuple(t1.mono) + tuple(t2.mono)))
        return _from_raw(self.theory, raw)

    def __rmul__(self, other) -> "Expression":
        if isinstance(other, (int, Fraction)):
            return self.__mul__(other)
        return _coerce(self.theory, other).__mul__(self)

    def __pow__(self, n: int) -> "Expression":
        if n < 0:
            raise TheoryError("negative expression power; use inverse()")
        out = Expression.const(self.theory, 1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Expression.const(self.theory, other)
        if not isinstance(other, Expression):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(self.key())
        return self._hash

    def key(self) -> tuple:
        return tuple((t.coef, _atoms_key(t.atoms),
                      tuple(((s.name, s.jet_order), e) for s, e in t.mono))
                     for t in self.terms)

    def is_structural_zero(self) -> bool:
        return not self.terms

    # -- grading ----------------------------------------------------------

    def grade(self):
        """(ghost, parity, form_degree) common to all terms, else None."""
        if not self.terms:
            return (0, EVEN, 0)
        g = (self.terms[0].ghost(), self.terms[0].parity(), self.terms[0].form_degree())
        for t in self.terms[1:]:
            if (t.ghost(), t.parity(), t.form_degree()) != g:
                return None
        return g

    def sign_degree(self) -> Optional[int]:
        if not self.terms:
            return 0
        s = self.terms[0].sign_degree()
        for t in self.terms[1:]:
            if t.sign_degree() != s:
                return None
        return s

    def sigma_parts(self) -> list[tuple[int, "Expression"]]:
        """Split into (sign_degree, homogeneous part)."""
        buckets: dict[int, list[Term]] = {}
        for t in self.terms:
            buckets.setdefault(t.sign_degree(), []).append(t)
        return [(s, Expression(self.theory, tuple(ts))) for s, ts in sorted(buckets.items())]

    # -- structure queries --------------------------------------------------

    def max_jet(self, base: str) -> int:
        """Highest jet order of `base` occurring anywhere in the expression,
        including dependence through function symbols and log/pow bases
        (which live at jet order 0); -1 when absent."""
        m = -1
        for t in self.terms:
            for s, _ in t.mono:
                if s.base == base and s.jet_order > m:
                    m = s.jet_order
            if m < 0:
                for a, _ in t.atoms:
                    if isinstance(a, FuncAtom):
                        if base in self.theory.function(a.func).args:
                            m = 0
                            break
                    else:
                        if base_expression(self.theory, a.base_key).max_jet(base) >= 0:
                            m = 0
                            break
        return m

    def symbols(self) -> set[GradedSymbol]:
        out = set()
        for t in self.terms:
            for s, _ in t.mono:
                out.add(s)
        return out

    def jet_bases(self) -> set[str]:
        return {s.base for t in self.terms for s, _ in t.mono
                if s.kind in (Kind.FIELD_JET, Kind.ANTIFIELD_JET)}

    def has_atoms(self) -> bool:
        return any(t.atoms for t in self.terms)

    def constant_part(self) -> Fraction:
        for t in self.terms:
            if not t.mono and not t.atoms:
                return t.coef
        return Fraction(0)

    def coefficient_of(self, sym: GradedSymbol) -> "Expression":
        """Left coefficient of a single odd symbol: write each term with sym
        moved to the front and strip it; terms without sym are dropped."""
        if sym.sign_degree != 1:
            raise TheoryError("coefficient_of expects an odd generator")
        raw = []
        for t in self.terms:
            prefix = 0
            for i, (s, e) in enumerate(t.mono):
                if s is sym:
                    sign = -1 if prefix % 2 else 1
                    raw.append((t.coef * sign, t.atoms, t.mono[:i] + t.mono[i + 1:]))
                    break
                prefix += s.sign_degree * e
        return _from_raw(self.theory, raw)

    def drop(self, sym: GradedSymbol) -> "Expression":
        """Terms not containing sym."""
        return Expression(self.theory, tuple(
            t for t in self.terms if all(s is not sym for s, _ in t.mono)))

    def __repr__(self) -> str:
        from .printer import render
        return render(self)


def _coerce(theory: Theory, v) -> Expression:
    if isinstance(v, Expression):
        if v.theory is not theory:
            raise TheoryError("mixed theory contexts")
        return v
    if isinstance(v, (int, Fraction)):
        return Expression.const(theory, v)
    raise TypeError(f"cannot coerce {v!r} to Expression")


# -- atom base interning ---------------------------------------------------


def _base_registry(theory: Theory) -> dict:
    reg = getattr(theory, "_atom_bases", None)
    if reg is None:
        reg = {}
        setattr(theory, "_atom_bases", reg)
    return reg


def intern_base(expr: Expression) -> str:
    """Register an even ghost-0 polynomial expression as a log/pow base."""
    if expr.is_structural_zero():
        raise TheoryError("log/pow/inverse of zero")
    g = expr.grade()
    if g is None or g != (0, EVEN, 0):
        raise GradingError("log/pow/inverse argument must be even, ghost 0, form 0")
    for t in expr.terms:
        for a, _ in t.atoms:
            if not isinstance(a, FuncAtom):
                raise TheoryError("log/pow base must be polynomial (no nested log/pow)")
        for s, _ in t.mono:
            if s.jet_order != 0:
                raise TheoryError("log/pow base must depend on 0-jets only")
            if s.sign_degree != 0:
                raise TheoryError("log/pow base must be built from even generators")
    from .printer import render
    key = render(expr)
    _base_registry(expr.theory).setdefault(key, expr)
    return key


def base_expression(theory: Theory, key: str) -> Expression:
    reg = _base_registry(theory)
    if key not in reg:
        raise TheoryError(f"unknown atom base: {key}")
    return reg[key]


def _clear_denominators(expr: Expression):
    """(cleared, multiplier): cleared = expr * multiplier is free of
    negative integer powers; multiplier is a product of pow atoms."""
    need: dict[str, int] = {}
    for t in expr.terms:
        for a, _ in t.atoms:
            if isinstance(a, PowerAtom) and a.exponent.is_constant:
                n = a.exponent.constant_value()
                if n < 0 and n.denominator == 1:
                    need[a.base_key] = max(need.get(a.base_key, 0), int(-n))
    if not need:
        return expr, None
    extra = tuple((PowerAtom(k, AffineExponent.const(n)), 1)
                  for k, n in sorted(need.items()))
    cleared = _from_raw(expr.theory,
                        [(t.coef, t.atoms + extra, t.mono) for t in expr.terms])
    return cleared, extra


def power_of(expr: Expression, exponent) -> Expression:
    """pow(expr, exponent) as an expression (merges trivial cases; an
    argument with inverse powers is cleared first, so rational-function
    pivots stay in the fraction field)."""
    exp = AffineExponent.of(exponent)
    theory = expr.theory
    if exp.is_constant:
        n = exp.constant_value()
        if n == 0:
            return Expression.const(theory, 1)
        if n.denominator == 1 and n >= 1:
            return expr ** int(n)
        if n.denominator == 1 and n < 0:
            cleared, extra = _clear_denominators(expr)
            if extra is not None:
                out = power_of(cleared, n)
                mult = _from_raw(theory, [(Fraction(1), extra, ())])
                for _ in range(int(-n)):
                    out = out * mult
                return out
    key = intern_base(expr)
    atom = PowerAtom(key, exp)
    return _from_raw(theory, [(Fraction(1), ((atom, 1),), ())])


def inverse_of(expr: Expression) -> Expression:
    return power_of(expr, Fraction(-1))


def log_of(expr: Expression) -> Expression:
    key = intern_base(expr)
    return _from_raw(expr.theory, [(Fraction(1), ((LogAtom(key), 1),), ())])


# -- normalization ----------------------------------------------------------


def _single_symbol_base(theory: Theory, key: str) -> Optional[GradedSymbol]:
    expr = base_expression(theory, key)
    if len(expr.terms) == 1:
        t = expr.terms[0]
        if t.coef == 1 and not t.atoms and len(t.mono) == 1 and t.mono[0][1] == 1:
            return t.mono[0][0]
    return None


def _normalize_term(theory: Theory, coef: Fraction,
                    atoms: Sequence[tuple[Atom, int]],
                    mono: Sequence[tuple[GradedSymbol, int]]) -> list[tuple[Fraction, Atoms, Mono]]:
    """Canonicalize one raw term; may expand into several terms when a
    compound pow-base is promoted to a polynomial."""
    if coef == 0:
        return []
    sorted_mono = _sort_mono(theory, mono)
    if sorted_mono is None:
        return []
    sign, mono_t = sorted_mono
    coef = coef * sign

    counts: dict[tuple, list] = {}
    powers: dict[str, AffineExponent] = {}
    for a, e in atoms:
        if e == 0:
            continue
        if isinstance(a, PowerAtom):
            cur = powers.get(a.base_key, AffineExponent.const(0))
            add = a.exponent
            for _ in range(e):
                cur = cur + add
            powers[a.base_key] = cur
        else:
            k = a.key()
            if k in counts:
                counts[k][1] += e
            else:
                counts[k] = [a, e]

    # merge single-symbol pow bases with the monomial exponent
    mono_d = {s: e for s, e in mono_t}
    expansions: list[tuple[str, int]] = []
    final_powers: list[PowerAtom] = []
    for key in sorted(powers):
        exp = powers[key]
        s = _single_symbol_base(theory, key)
        if s is not None:
            if s in mono_d:
                exp = exp + mono_d.pop(s)
            if exp.is_constant:
                n = exp.constant_value()
                if n == 0:
                    continue
                if n.denominator == 1 and n >= 1:
                    mono_d[s] = mono_d.get(s, 0) + int(n)
                    continue
            final_powers.append(PowerAtom(key, exp))
        else:
            if exp.is_constant:
                n = exp.constant_value()
                if n == 0:
                    continue
                if n.denominator == 1 and n >= 1:
                    expansions.append((key, int(n)))
                    continue
            final_powers.append(PowerAtom(key, exp))

    atom_list = [(a, e) for a, e in
                 ([(v[0], v[1]) for v in counts.values()] + [(p, 1) for p in final_powers])
                 if e != 0]
    atom_list.sort(key=lambda ae: ae[0].key())
    mono_items = sorted(mono_d.items(), key=lambda se: theory.sort_key(se[0]))
    for s, e in mono_items:
        if s.sign_degree == 1 and e > 1:
            return []

    if not expansions:
        return [(coef, tuple(atom_list), tuple(mono_items))]

    # promote pow(E, n>=1 integer) on compound bases: multiply out E^n
    result = _from_raw(theory, [(coef, tuple(atom_list), tuple(mono_items))])
    for key, n in expansions:
        base = base_expression(theory, key)
        for _ in range(n):
            result = result * base
    return [(t.coef, t.atoms, t.mono) for t in result.terms]


def _from_raw(theory: Theory, raw: Iterable[RawTerm]) -> Expression:
    acc: dict[tuple, list] = {}
    for coef, atoms, mono in raw:
        for c, a, m in _normalize_term(theory, coef, atoms, mono):
            k = (_atoms_key(a), _mono_key(theory, m))
            slot = acc.get(k)
            if slot is None:
                acc[k] = [c, a, m]
            else:
                slot[0] += c
    terms = [Term(c, a, m) for _, (c, a, m) in sorted(acc.items(), key=lambda kv: kv[0])
             if c != 0]
    return Expression(theory, tuple(terms))


def _from_terms(theory: Theory, terms: Sequence[Term]) -> Expression:
    return _from_raw(theory, [(t.coef, t.atoms, t.mono) for t in terms])


def normalize(theory: Theory, raw: Iterable[RawTerm]) -> Expression:
    """Public entry: canonical form of a list of signed raw monomials."""
    return _from_raw(theory, list(raw))


# -- derivatives -------------------------------------------------------------


def _atom_derivative(theory: Theory, atom: Atom, s: GradedSymbol) -> Optional[Expression]:
    """d(atom)/ds for a 0-jet symbol s; None when the atom does not depend
    on s.  Atoms are even, so no Koszul bookkeeping is needed here."""
    if isinstance(atom, FuncAtom):
        decl = theory.function(atom.func)
        if s.name in decl.args and s.jet_order == 0 and s.kind == Kind.FIELD_JET:
            return Expression(theory, (Term(Fraction(1), ((atom.differentiated(s.name), 1),), ()),))
        return None
    base = base_expression(theory, atom.base_key)
    dbase = partial_derivative(base, s)
    if dbase.is_structural_zero():
        return None
    if isinstance(atom, LogAtom):
        return inverse_of(base) * dbase
    # pow(E, r): r * pow(E, r-1) * dE
    r = atom.exponent
    shifted = _from_raw(theory, [(Fraction(1), ((PowerAtom(atom.base_key, r - 1), 1),), ())])
    lin = Expression.const(theory, r.offset)
    if r.param is not None and r.slope != 0:
        lin = lin + Expression.symbol(theory, r.param) * r.slope
    return lin * shifted * dbase


def partial_derivative(expr: Expression, s: GradedSymbol) -> Expression:
    """Graded left partial derivative with respect to any generator."""
    theory = expr.theory
    pieces: list[Expression] = []
    raw: list[RawTerm] = []
    for t in expr.terms:
        prefix = 0
        for i, (sym, e) in enumerate(t.mono):
            if sym is s:
                if sym.sign_degree == 1:
                    sign = -1 if prefix % 2 else 1
                    raw.append((t.coef * sign, t.atoms, t.mono[:i] + t.mono[i + 1:]))
                else:
                    rest = t.mono[:i] + ((sym, e - 1),) + t.mono[i + 1:] if e > 1 \
                        else t.mono[:i] + t.mono[i + 1:]
                    raw.append((t.coef * e, t.atoms, rest))
                break
            prefix += sym.sign_degree * e
        if s.jet_order == 0 and t.atoms:
            for j, (a, e) in enumerate(t.atoms):
                da = _atom_derivative(theory, a, s)
                if da is None:
                    continue
                rest_atoms = t.atoms[:j] + ((a, e - 1),) + t.atoms[j + 1:]
                head = _from_raw(theory, [(t.coef * e, rest_atoms, t.mono)])
                pieces.append(head * da)
    out = _from_raw(theory, raw)
    for p in pieces:
        out = out + p
    return out


def jet_partial(expr: Expression, s: GradedSymbol) -> Expression:
    """partial() restricted to jet symbols, per the public contract."""
    if s.kind not in (Kind.FIELD_JET, Kind.ANTIFIELD_JET):
        raise TheoryError(f"partial expects a jet symbol, got {s.name}")
    return partial_derivative(expr, s)


def total_derivative(expr: Expression) -> Expression:
    """Total t-derivative: raises jet orders by one; derivation; kills
    constants, flow parameters and simplex generators."""
    theory = expr.theory
    raw: list[RawTerm] = []
    pieces: list[Expression] = []
    for t in expr.terms:
        for i, (sym, e) in enumerate(t.mono):
            if sym.kind not in (Kind.FIELD_JET, Kind.ANTIFIELD_JET):
                continue
            bumped = theory.jet_bump(sym)
            if sym.sign_degree == 1:
                replaced = t.mono[:i] + ((bumped, 1),) + t.mono[i + 1:]
                raw.append((t.coef, t.atoms, replaced))
            else:
                lowered = (t.mono[:i] + ((sym, e - 1), (bumped, 1)) + t.mono[i + 1:]) if e > 1 \
                    else (t.mono[:i] + ((bumped, 1),) + t.mono[i + 1:])
                raw.append((t.coef * e, t.atoms, lowered))
        if t.atoms:
            for j, (a, e) in enumerate(t.atoms):
                da = _atom_total(theory, a)
                if da is None:
                    continue
                rest_atoms = t.atoms[:j] + ((a, e - 1),) + t.atoms[j + 1:]
                head = _from_raw(theory, [(t.coef * e, rest_atoms, t.mono)])
                pieces.append(head * da)
    out = _from_raw(theory, raw)
    for p in pieces:
        out = out + p
    return out


def _atom_total(theory: Theory, atom: Atom) -> Optional[Expression]:
    if isinstance(atom, FuncAtom):
        decl = theory.function(atom.func)
        out = Expression.zero(theory)
        for arg in decl.args:
            out = out + Expression.func(theory, atom.func, atom.deriv + (arg,)) \
                * Expression.symbol(theory, theory.jet(arg, 1))
        return None if out.is_structural_zero() else out
    base = base_expression(theory, atom.base_key)
    dbase = total_derivative(base)
    if dbase.is_structural_zero():
        return None
    if isinstance(atom, LogAtom):
        return inverse_of(base) * dbase
    r = atom.exponent
    shifted = _from_raw(theory, [(Fraction(1), ((PowerAtom(atom.base_key, r - 1), 1),), ())])
    lin = Expression.const(theory, r.offset)
    if r.param is not None and r.slope != 0:
        lin = lin + Expression.symbol(theory, r.param) * r.slope
    return lin * shifted * dbase


def iterated_total(expr: Expression, k: int) -> Expression:
    for _ in range(k):
        expr = total_derivative(expr)
    return expr


def param_derivative(expr: Expression, param: GradedSymbol) -> Expression:
    """d/d(tau): differentiates monomial powers of the flow parameter and
    pow-atom exponents (d/dtau pow(E, a*tau+b) = a*log(E)*pow(E, a*tau+b))."""
    theory = expr.theory
    raw: list[RawTerm] = []
    pieces: list[Expression] = []
    for t in expr.terms:
        for i, (sym, e) in enumerate(t.mono):
            if sym is param:
                rest = t.mono[:i] + ((sym, e - 1),) + t.mono[i + 1:] if e > 1 \
                    else t.mono[:i] + t.mono[i + 1:]
                raw.append((t.coef * e, t.atoms, rest))
        for j, (a, e) in enumerate(t.atoms):
            if isinstance(a, PowerAtom) and a.exponent.param is param and a.exponent.slope != 0:
                log_part = _from_raw(theory, [(a.exponent.slope,
                                               ((LogAtom(a.base_key), 1),), ())])
                head = _from_raw(theory, [(t.coef, t.atoms, t.mono)])
                pieces.append(head * log_part)
    out = _from_raw(theory, raw)
    for p in pieces:
        out = out + p
    return out


def substitute_param(expr: Expression, param: GradedSymbol, value) -> Expression:
    """Evaluate a flow parameter at an exact rational value."""
    value = Fraction(value)
    raw: list[RawTerm] = []
    for t in expr.terms:
        coef = t.coef
        mono = []
        for sym, e in t.mono:
            if sym is param:
                coef *= value ** e
            else:
                mono.append((sym, e))
        atoms = []
        for a, e in t.atoms:
            if isinstance(a, PowerAtom) and a.exponent.param is param:
                atoms.append((PowerAtom(a.base_key, a.exponent.substitute(value)), e))
            else:
                atoms.append((a, e))
        raw.append((coef, tuple(atoms), tuple(mono)))
    return _from_raw(expr.theory, raw)


def odd_derivation(expr: Expression, images: dict[GradedSymbol, Expression]) -> Expression:
    """Left action of the odd derivation sending each key symbol to its
    (odd) image and annihilating everything else; Koszul signs from the
    position of the occurrence."""
    theory = expr.theory
    out = Expression.zero(theory)
    for t in expr.terms:
        prefix_sigma = 0
        for i, (sym, e) in enumerate(t.mono):
            img = images.get(sym)
            if img is not None:
                sign = -1 if prefix_sigma % 2 else 1
                head_mono = t.mono[:i]
                tail_mono = (((sym, e - 1),) if e > 1 else ()) + t.mono[i + 1:]
                head = _from_raw(theory, [(t.coef * e * sign, t.atoms, head_mono)])
                tail = _from_raw(theory, [(Fraction(1), (), tail_mono)])
                out = out + head * img * tail
            prefix_sigma += sym.sign_degree * e
    return out


# -- zero decision -----------------------------------------------------------


def is_zero(expr: Expression) -> bool:
    """Exact zero test; clears integer-power denominators (pow(E, -n)) by
    multiplying through, which is valid since bases are invertible by
    construction."""
    if not expr.terms:
        return True
    need: dict[str, int] = {}
    for t in expr.terms:
        for a, _ in t.atoms:
            if isinstance(a, PowerAtom) and a.exponent.is_constant:
                n = a.exponent.constant_value()
                if n < 0 and n.denominator == 1:
                    need[a.base_key] = max(need.get(a.base_key, 0), int(-n))
    if not need:
        return False
    raw: list[RawTerm] = []
    extra = tuple((PowerAtom(k, AffineExponent.const(n)), 1) for k, n in sorted(need.items()))
    for t in expr.terms:
        raw.append((t.coef, t.atoms + extra, t.mono))
    lifted = _from_raw(expr.theory, raw)
    # clearing only raises exponents, so no negative integer powers remain
    return not lifted.terms


def equal(a: Expression, b: Expression) -> bool:
    return is_zero(a - b)


# -- substitution homomorphisms ----------------------------------------------


def apply_substitution(expr: Expression, images: dict[GradedSymbol, Expression],
                       target: Theory,
                       atom_map: Optional[Callable[[Atom], Expression]] = None) -> Expression:
    """Algebra homomorphism sending each 0-jet generator to its image and
    commuting with the total derivative (jets map to derivatives of the
    image).  Generators without an image must exist in the target theory
    under the same name.  Atoms are rebuilt: function symbols require their
    arguments to map to plain coordinates unless atom_map is supplied."""
    out = Expression.zero(target)
    jet_cache: dict[tuple[str, int], Expression] = {}

    def image_of(sym: GradedSymbol) -> Expression:
        key = (sym.base, sym.jet_order)
        got = jet_cache.get(key)
        if got is not None:
            return got
        base0 = sym if sym.jet_order == 0 else expr.theory.symbol(sym.base, 0)
        img = images.get(base0)
        if img is None:
            img = Expression.symbol(target, target.symbol(sym.base, 0))
        val = iterated_total(img, sym.jet_order)
        jet_cache[key] = val
        return val

    for t in expr.terms:
        piece = Expression.const(target, t.coef)
        for a, e in t.atoms:
            pa = _map_atom(a, images, expr.theory, target, atom_map)
            for _ in range(e):
                piece = piece * pa
        for sym, e in t.mono:
            if sym.kind in (Kind.FIELD_JET, Kind.ANTIFIELD_JET):
                val = image_of(sym)
            else:
                img = images.get(sym)
                val = img if img is not None else \
                    Expression.symbol(target, target.symbol(sym.name, 0))
            for _ in range(e):
                piece = piece * val
        out = out + piece
    return out


def _map_atom(atom: Atom, images, source: Theory, target: Theory, atom_map) -> Expression:
    if atom_map is not None:
        mapped = atom_map(atom)
        if mapped is not None:
            return mapped
    if isinstance(atom, FuncAtom):
        decl = source.function(atom.func)
        for arg in decl.args:
            s = source.symbol(arg)
            img = images.get(s)
            if img is not None:
                ts = target.maybe_symbol(arg)
                identity = ts is not None and img == Expression.symbol(target, ts)
                if not identity:
                    raise TheoryError(
                        f"cannot transport function symbol {atom.func} along a "
                        f"substitution moving its argument {arg}")
        target.function(atom.func)
        return _from_raw(target, [(Fraction(1), ((atom, 1),), ())])
    base = base_expression(source, atom.base_key)
    new_base = apply_substitution(base, images, target, atom_map)
    if isinstance(atom, LogAtom):
        return log_of(new_base)
    return power_of(new_base, atom.exponent)


def embed(expr: Expression, target: Theory) -> Expression:
    """Re-normalize an expression in a larger theory sharing symbol names."""
    return apply_substitution(expr, {}, target)
