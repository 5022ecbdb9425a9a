from fractions import Fraction

import pytest

from bvcov.symbols import Theory, TheoryError
from bvcov.expression import (Expression, inverse_of, is_zero, log_of,
                              substitute_param, total_derivative)
from bvcov.curved import (BElement, CanonicalSubstitution, CurvedContext,
                          TruncatedFlowError, USeries, antifield_rank,
                          antifield_counting_field, b_bracket, b_differential,
                          bch, canonical_substitution_check, complete_to_b,
                          d_element, du, flow_substitution, gauge_flow_closed,
                          gauge_flow_series, iota, mc_check, u_bracket,
                          verify_flow_endpoint)
from conftest import HomogeneousSampler, intro_action


def sgn(b):
    return -1 if b % 2 else 1


@pytest.fixture
def bc_theory():
    t = Theory("bc")
    t.add_field("b", -1, 1)
    t.add_field("c", 1, 1)
    return t


def rand_belements(theory, seed, count):
    s = HomogeneousSampler(theory, seed=seed)
    out = []
    for _ in range(count):
        out.append(BElement(theory, s.expression(), s.expression()))
    return out


def test_b_differential(particle_theory):
    t = particle_theory
    f = Expression.of(t, "x_1") * Expression.of(t, "p_1")
    assert b_differential(BElement.of_body(f)).is_zero()
    g_even = Expression.of(t, "x_1") * Expression.of(t, "p_1")
    assert b_differential(BElement.of_eps(g_even)) == \
        BElement.of_body(total_derivative(g_even))
    for x in rand_belements(t, 41, 10):
        assert b_differential(b_differential(x)).is_zero()


def test_eps_part_mod_constants(particle_theory):
    t = particle_theory
    x = BElement.of_eps(Expression.of(t, "x_1") + 7)
    assert x.eps == Expression.of(t, "x_1")


def test_soloviev2_leibniz(particle_theory):
    t = particle_theory
    els = rand_belements(t, 42, 8)
    for i in range(0, 8, 2):
        a, b = els[i], els[i + 1]
        ga = a.grade()
        if ga is None:
            continue
        lhs = b_differential(b_bracket(a, b))
        rhs = b_bracket(b_differential(a), b) \
            + b_bracket(a, b_differential(b)) * sgn(ga[1] + 1)
        assert (lhs - rhs).is_zero()


def test_b_bracket_restriction_and_eps_only(particle_theory):
    t = particle_theory
    s = HomogeneousSampler(t, seed=43)
    f, g = s.expression(), s.expression()
    from bvcov.varcalc import soloviev
    assert b_bracket(BElement.of_body(f), BElement.of_body(g)).body == soloviev(f, g)
    # [f0 + g0 eps, g1 eps-only] has only the eps part [f0, g1]
    g0, g1 = s.expression(), s.expression()
    res = b_bracket(BElement(t, f, g0), BElement.of_eps(g1))
    assert is_zero(res.body)
    assert is_zero(res.eps - _strip(soloviev(f, g1)))


def _strip(e):
    from bvcov.curved import _strip_eps_constant
    return _strip_eps_constant(e)


def test_iota_identities(particle_theory):
    t = particle_theory
    x1 = Expression.of(t, "x_1")
    got = iota(BElement.of_body(x1))
    assert is_zero(got.eps + x1) and is_zero(got.body)
    xp = Expression.of(t, "x+_1")
    assert iota(BElement.of_body(xp)).is_zero()
    D = d_element(t)
    for x in rand_belements(t, 44, 8):
        assert iota(iota(x)).is_zero()
        lhs = b_differential(iota(x)) + iota(b_differential(x))
        rhs = b_bracket(BElement.of_body(D), x)
        assert (lhs - rhs).is_zero()


def test_curved_context_axioms(particle_theory):
    t = particle_theory
    ctx = CurvedContext(t)
    assert du(ctx.curvature).is_zero()          # Bianchi
    for x in rand_belements(t, 45, 6):
        xs = USeries.of(x)
        lhs = du(du(xs))
        rhs = u_bracket(ctx.curvature, xs)
        assert (lhs - rhs).is_zero()            # d_u^2 = ad(uD)


def test_x_u_master_equation(bc_theory):
    t = bc_theory
    c, b1 = Expression.of(t, "c"), Expression.of(t, "b", 1)
    X = USeries(t, {0: BElement.of_body(c * b1),
                    1: BElement(t, Expression.of(t, "b+") * Expression.of(t, "c+"),
                                Expression.of(t, "c+") * c)})
    assert mc_check(X, CurvedContext(t)).ok
    # MC solutions square the twisted differential to zero on probes
    s = HomogeneousSampler(t, seed=46)
    for _ in range(5):
        y = USeries.of(BElement(t, s.expression(), s.expression()))
        dxy = du(y) + u_bracket(X, y)
        ddxy = du(dxy) + u_bracket(X, dxy)
        assert ddxy.is_zero()


def test_flat_particle_f_mode_and_completion(particle_theory):
    t = particle_theory
    S0, D = intro_action(t)
    S = USeries(t, {0: BElement.of_body(S0 + Expression.of(t, "c") * D),
                    1: BElement.of_body(Expression.of(t, "c+"))})
    fctx = CurvedContext(t, mode="F")
    assert mc_check(S, fctx).ok
    SB = complete_to_b(S, fctx)
    assert mc_check(SB, CurvedContext(t)).ok
    # S0-only truncation fails, with the residual reported
    S_only = USeries(t, {0: S.coeff(0)})
    rep = mc_check(S_only, fctx)
    assert not rep.ok and not rep.residual.is_zero()


def test_mc_grading_guard(particle_theory):
    t = particle_theory
    bad = USeries.of(BElement.of_body(Expression.of(t, "c")))
    with pytest.raises(TheoryError):
        mc_check(bad, CurvedContext(t))


def test_flow_tables_golden(particle_theory):
    t = particle_theory
    tau = t.add_flow_param("tau")
    c = Expression.of(t, "c")
    y = sum((c * Expression.of(t, f"x+_{m}") * Expression.of(t, f"p+_{m}")
             for m in (1, 2)), Expression.zero(t))
    sub = flow_substitution(t, y, tau, direction=+1)
    tsym = Expression.symbol(t, tau)
    assert sub.image(t.symbol("x_1")) == Expression.of(t, "x_1") \
        + tsym * c * Expression.of(t, "p+_1")
    assert sub.image(t.symbol("p_1")) == Expression.of(t, "p_1") \
        - tsym * c * Expression.of(t, "x+_1")
    assert sub.image(t.symbol("c+")) == Expression.of(t, "c+") \
        + tsym * (Expression.of(t, "x+_1") * Expression.of(t, "p+_1")
                  + Expression.of(t, "x+_2") * Expression.of(t, "p+_2"))
    for name in ("e", "e+", "c", "x+_1", "x+_2", "p+_1", "p+_2"):
        assert sub.image(t.symbol(name)) == Expression.of(t, name)
    # Psi: exponential closure in power/log atoms
    e = Expression.of(t, "e")
    ypsi = log_of(e) * Expression.of(t, "c+") * c
    subp = flow_substitution(t, ypsi, tau, direction=+1)
    p1 = CanonicalSubstitution(
        t, {g: substitute_param(v, tau, 1) for g, v in subp.images.items()})
    assert p1.image(t.symbol("c")) == inverse_of(e) * c
    assert p1.image(t.symbol("c+")) == e * Expression.of(t, "c+")
    assert p1.image(t.symbol("e+")) == Expression.of(t, "e+") \
        + inverse_of(e) * Expression.of(t, "c+") * c
    assert not canonical_substitution_check(p1).offending


def test_flow_rejects_bare_rational_eigenvalue(particle_theory):
    from bvcov.curved import FlowClosureError
    t = particle_theory
    tau = t.symbol("tau") if t.maybe_symbol("tau") else t.add_flow_param("tau")
    y = Expression.of(t, "e") * Expression.of(t, "c+") * Expression.of(t, "c")
    with pytest.raises(FlowClosureError):
        flow_substitution(t, y, tau)


def test_gauge_flow_series_trivial_and_closed(bc_theory):
    t = bc_theory
    X = USeries(t, {0: BElement.of_body(Expression.of(t, "c")
                                        * Expression.of(t, "b", 1)),
                    1: BElement(t, Expression.of(t, "b+") * Expression.of(t, "c+"),
                                Expression.of(t, "c+") * Expression.of(t, "c"))})
    # dy = 0 and [x, y] = 0: the flow is constant
    y0 = USeries.of(BElement.of_body(Expression.zero(t)))
    fs = gauge_flow_series(X, y0)
    assert fs.exact and fs.at(1) == X
    with pytest.raises(TheoryError):
        gauge_flow_series(X, USeries.of(BElement.of_body(Expression.of(t, "c"))))


def test_gauge_flow_preserves_mc(particle_theory):
    t = particle_theory
    S0, D = intro_action(t)
    c = Expression.of(t, "c")
    S = complete_to_b(USeries(t, {0: BElement.of_body(S0 + c * D),
                                  1: BElement.of_body(Expression.of(t, "c+"))}),
                      CurvedContext(t, mode="F"))
    ctx = CurvedContext(t)
    y = USeries.of(BElement.of_body(
        c * Expression.of(t, "x+_1") * Expression.of(t, "p+_1")))
    fs = gauge_flow_series(S, y)
    assert fs.exact
    assert mc_check(fs.at(1), ctx).ok
    assert mc_check(fs.at(Fraction(1, 3)), ctx).ok


def test_gauge_flow_closed_x_u(bc_theory):
    # the corrected tau-family for the bc block flowing by log(b+)c+c
    t = bc_theory
    tau = t.add_flow_param("tau")
    c, cp, bp = (Expression.of(t, n) for n in ("c", "c+", "b+"))
    X = USeries(t, {0: BElement.of_body(c * Expression.of(t, "b", 1)),
                    1: BElement(t, bp * cp, cp * c)})
    ctx = CurvedContext(t)
    y = log_of(bp) * cp * c
    family, cert = gauge_flow_closed(X, y, tau, ctx)
    assert cert.ok and cert.initial_ok
    # endpoint as displayed: c(b+ db + c+ dc) + u c+
    endpoint = cert.endpoint
    want = USeries(t, {0: BElement.of_body(
        c * (bp * Expression.of(t, "b", 1) + cp * Expression.of(t, "c", 1))),
        1: BElement.of_body(cp)})
    assert (endpoint - want).is_zero()
    assert mc_check(endpoint, ctx).ok
    # the u-part of the family carries pow(b+, 1-tau) and (1-tau) c+ c eps
    from bvcov.expression import power_of
    from bvcov.coefficients import AffineExponent
    u1 = family.coeff(1)
    exp_body = power_of(bp, AffineExponent(Fraction(1), Fraction(-1), tau)) * cp
    assert is_zero(u1.body - exp_body)
    one_minus = Expression.const(t, 1) - Expression.symbol(t, tau)
    assert is_zero(u1.eps - one_minus * cp * c)


def test_verify_flow_endpoint_reports(bc_theory):
    t = bc_theory
    tau = t.add_flow_param("tau")
    X = USeries(t, {0: BElement.of_body(Expression.of(t, "c")
                                        * Expression.of(t, "b", 1)),
                    1: BElement(t, Expression.of(t, "b+") * Expression.of(t, "c+"),
                                Expression.of(t, "c+") * Expression.of(t, "c"))})
    y = USeries.of(BElement.of_body(Expression.zero(t)))
    rep = verify_flow_endpoint(X, X, y, tau, CurvedContext(t))
    assert rep.ok and rep.initial_ok and (rep.endpoint - X).is_zero()
    shifted = X + USeries.of(BElement.of_body(
        Expression.symbol(t, tau) * Expression.of(t, "b", 1)
        * Expression.of(t, "b+")))
    rep2 = verify_flow_endpoint(X, shifted, y, tau, CurvedContext(t))
    assert not rep2.ok


def test_truncated_flow_refuses_endpoint(bc_theory):
    t = bc_theory
    cp, bp, c = (Expression.of(t, n) for n in ("c+", "b+", "c"))
    X = USeries(t, {0: BElement.of_body(c * Expression.of(t, "b", 1)),
                    1: BElement(t, bp * cp, cp * c)})
    y = USeries.of(BElement.of_body(log_of(bp) * cp * c))
    fs = gauge_flow_series(X, y, max_order=4)
    assert not fs.exact
    with pytest.raises(TruncatedFlowError):
        fs.endpoint()


def test_closed_generator_flow_matches_exponential_oracle(particle_theory):
    # with zero differential (functional-level context) the gauge flow of
    # any generator is the exponential, summed directly as the oracle
    t = particle_theory
    s = HomogeneousSampler(t, seed=47, max_jet=1, max_factors=2, max_terms=2)
    c = Expression.of(t, "c")
    y_body = c * Expression.of(t, "x+_1") * Expression.of(t, "p+_1")
    y = USeries.of(BElement.of_body(y_body))
    fctx = CurvedContext(t, mode="F")
    for _ in range(6):
        x = USeries.of(BElement.of_body(s.expression()))
        fs = gauge_flow_series(x, y, ctx=fctx)
        assert fs.exact
        flowed = fs.at(1)
        oracle = USeries.zero(t)
        term = x
        k = 0
        while not term.is_zero():
            oracle = oracle + term * Fraction(1, _fact(k) if k else 1)
            term = u_bracket(y, term) * Fraction(-1)
            k += 1
            assert k < 12
        assert (flowed - oracle).is_zero()


def _fact(n):
    out = 1
    for i in range(2, n + 1):
        out *= i
    return out


def test_non_canonical_substitution_reports_pair(particle_theory):
    t = particle_theory
    broken = CanonicalSubstitution(t, {
        t.symbol("x_1"): 2 * Expression.of(t, "x_1")})   # x scaled, x+ not
    rep = canonical_substitution_check(broken)
    assert not rep.canonical
    assert ("x_1", "x+_1") in rep.offending


def test_bch_trivial_cases(particle_theory):
    t = particle_theory
    c = Expression.of(t, "c")
    y = USeries.of(BElement.of_body(
        c * Expression.of(t, "x+_1") * Expression.of(t, "p+_1")))
    z0 = USeries.zero(t)
    res = bch(y, z0, order=4)
    assert (res.series - y).is_zero()
    # commuting generators add
    z = USeries.of(BElement.of_body(
        c * Expression.of(t, "x+_2") * Expression.of(t, "p+_2")))
    assert u_bracket(y, z).is_zero()
    res2 = bch(y, z, order=4)
    assert (res2.series - (y + z)).is_zero()


def test_antifield_rank(particle_theory):
    t = particle_theory
    S0, D = intro_action(t)
    c = Expression.of(t, "c")
    S = USeries(t, {0: BElement.of_body(S0 + c * D)})
    assert antifield_rank(S) == 1
    assert antifield_rank(USeries.of(BElement.of_body(S0))) == 0
    two = USeries.of(BElement.of_body(
        Expression.of(t, "x+_1") * Expression.of(t, "p+_1") * Expression.of(t, "e")))
    assert antifield_rank(two) == 2
