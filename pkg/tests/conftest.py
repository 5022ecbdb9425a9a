import random
from fractions import Fraction

import pytest

from bvcov.symbols import Theory
from bvcov.expression import Expression, total_derivative


@pytest.fixture
def particle_theory():
    t = Theory("particle")
    for m in (1, 2):
        t.add_field(f"x_{m}", 0, 0)
    for m in (1, 2):
        t.add_field(f"p_{m}", 0, 0)
    t.add_field("e", 0, 0)
    t.add_field("c", 1, 1)
    return t


@pytest.fixture
def E(particle_theory):
    def make(name, jet=0):
        return Expression.of(particle_theory, name, jet)
    return make


def intro_action(t: Theory, n: int = 2):
    """S = S0 + c D for the flat particle, euclidean eta."""
    def E(name, jet=0):
        return Expression.of(t, name, jet)
    d = total_derivative
    S0 = sum((E(f"p_{m}") * d(E(f"x_{m}")) for m in range(1, n + 1)),
             Expression.zero(t)) \
        - Fraction(1, 2) * E("e") * sum((E(f"p_{m}") ** 2 for m in range(1, n + 1)),
                                        Expression.zero(t))
    D = sum((E(f"x+_{m}") * d(E(f"x_{m}")) + E(f"p+_{m}") * d(E(f"p_{m}"))
             for m in range(1, n + 1)), Expression.zero(t)) \
        - E("e") * d(E("e+")) + E("c+") * d(E("c"))
    return S0, D


class HomogeneousSampler:
    """Deterministic random sign-homogeneous expressions over a theory."""

    def __init__(self, theory: Theory, seed: int = 0, max_jet: int = 1,
                 max_factors: int = 3, max_terms: int = 3):
        self.theory = theory
        self.rng = random.Random(seed)
        self.names = []
        for f, a in theory.field_pairs():
            self.names += [f.name, a.name]
        self.max_jet = max_jet
        self.max_factors = max_factors
        self.max_terms = max_terms

    def monomial(self):
        t = Expression.const(self.theory,
                             self.rng.choice([1, -1, 2, -2, Fraction(1, 2), 3]))
        for _ in range(self.rng.randint(1, self.max_factors)):
            t = t * Expression.of(self.theory, self.rng.choice(self.names),
                                  self.rng.randint(0, self.max_jet))
        return t

    def expression(self):
        while True:
            out = Expression.zero(self.theory)
            target = None
            for _ in range(self.rng.randint(1, self.max_terms)):
                m = self.monomial()
                if m.is_structural_zero():
                    continue
                s = m.sign_degree()
                if target is None:
                    target = s
                    out = out + m
                elif s == target:
                    out = out + m
            if not out.is_structural_zero():
                return out
