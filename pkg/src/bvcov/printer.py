"""Deterministic canonical rendering.

The output is the package's only serialization: golden files diff it
byte-for-byte and the parser reads it back (print -> parse -> print is
the identity on canonical forms).
"""

from __future__ import annotations

from fractions import Fraction

from .coefficients import FuncAtom, LogAtom, PowerAtom


def render_symbol(sym, power: int = 1) -> str:
    if sym.jet_order == 0:
        s = sym.name
    elif sym.jet_order == 1:
        s = f"d({sym.name})"
    else:
        s = f"d^{sym.jet_order}({sym.name})"
    if power != 1:
        s += f"^{power}"
    return s


def render_atom(atom, power: int = 1) -> str:
    if isinstance(atom, FuncAtom):
        s = str(atom)
    elif isinstance(atom, LogAtom):
        s = f"log({atom.base_key})"
    else:
        assert isinstance(atom, PowerAtom)
        exp = atom.exponent
        if exp.is_constant and exp.constant_value() == -1:
            s = f"inv({atom.base_key})"
            if power != 1:
                return f"inv({atom.base_key})^{power}"
            return s
        s = f"pow({atom.base_key}, {exp})"
    if power != 1:
        s += f"^{power}"
    return s


def _render_term_body(term) -> str:
    parts = [render_atom(a, e) for a, e in term.atoms]
    parts += [render_symbol(s, e) for s, e in term.mono]
    return "*".join(parts)


def render(expr) -> str:
    if not expr.terms:
        return "0"
    chunks: list[str] = []
    for i, t in enumerate(expr.terms):
        body = _render_term_body(t)
        coef = t.coef
        neg = coef < 0
        mag = -coef if neg else coef
        if body:
            cs = "" if mag == 1 else f"{mag}*"
            piece = cs + body
        else:
            piece = str(mag)
        if i == 0:
            chunks.append(("-" if neg else "") + piece)
        else:
            chunks.append(("- " if neg else "+ ") + piece)
    return " ".join(chunks)


def render_fraction(q: Fraction) -> str:
    return str(q)
