import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sscfw import (AwayFrankWolfe, Box, Desingularizer, FaceFrankWolfe,
                   FrankWolfe, L1Ball, LpBall, PairwiseFrankWolfe,
                   ProductDomain, ProductRule, RateConstants, ShortRetraction,
                   Simplex, SublevelSet, certify_objective_rate,
                   certify_tail_length, descent_rate_constants,
                   holder_envelope, min_observed_slope, outer_solve,
                   pyramidal_width_bruteforce, quadratic_objective,
                   theoretical_tau, worst_case_gap, worst_case_gap_iterates)
from sscfw.harness import random_spd


def rc11():
    return RateConstants(a=1.0, b=1.0)


def desing_half(M=1.0, eta=np.inf):
    return Desingularizer(M=M, theta=0.5, eta=eta)


# ---------------------------------------------------------------------------
# the worst-case gap recursion


def test_gap_recursion_half_closed_form():
    assert worst_case_gap(rc11(), desing_half(), 1.0) == pytest.approx(0.5, abs=1e-12)


def test_gap_recursion_zero():
    assert worst_case_gap(rc11(), desing_half(), 0.0) == 0.0


def test_gap_recursion_quarter_instance():
    # alpha(s) = s^{-3/4}: solve s + s^{3/2} = 2  =>  s = 1
    d = Desingularizer(M=1.0, theta=0.25, eta=10.0)
    s = worst_case_gap(rc11(), d, 2.0)
    assert s == pytest.approx(1.0, abs=1e-12)
    assert s + s ** 1.5 == pytest.approx(2.0, abs=1e-12)


def test_gap_recursion_empty_branch():
    # bounded alpha near zero: for small t the feasible set is empty
    d = Desingularizer(phi_prime=lambda t: 1.0, eta=10.0)
    assert worst_case_gap(rc11(), d, 0.5) == 0.0     # 1/alpha(0)^2 = 1 > 0.5
    s = worst_case_gap(rc11(), d, 3.0)
    assert s == pytest.approx(2.0, abs=1e-10)


def test_gap_recursion_domain_errors():
    with pytest.raises(ValueError):
        worst_case_gap(rc11(), desing_half(eta=1.0), 2.0)
    with pytest.raises(ValueError):
        worst_case_gap_iterates(rc11(), desing_half(eta=1.0), 1.5, 3)


def test_gap_iterates_half():
    vals = worst_case_gap_iterates(rc11(), desing_half(), 1.0, 3)
    np.testing.assert_allclose(vals, [1.0, 0.5, 0.25, 0.125], atol=1e-12)


def test_gap_iterates_zero_start():
    assert worst_case_gap_iterates(rc11(), desing_half(), 0.0, 4) == [0.0] * 5


def test_gap_iterates_quarter_from_example():
    d = Desingularizer(M=1.0, theta=0.25, eta=10.0)
    vals = worst_case_gap_iterates(rc11(), d, 2.0, 1)
    np.testing.assert_allclose(vals, [2.0, 1.0], atol=1e-12)


def test_half_closed_form_matches_rootfinder_grid():
    for c in np.logspace(-2, 2, 10):                 # c = a / (b^2 M^2)
        for eta in np.linspace(0.5, 8.0, 10):
            d = desing_half(eta=eta)
            rc = RateConstants(a=c, b=1.0)
            for t in np.linspace(1e-6, eta * 0.999, 10):
                got = worst_case_gap(rc, d, t)
                assert got == pytest.approx(t / (1.0 + c), abs=1e-12)


def test_fixed_point_residual():
    rng = np.random.default_rng(2)
    for _ in range(50):
        theta = rng.uniform(0.05, 0.5)
        M = rng.uniform(0.3, 3.0)
        rc = RateConstants(a=rng.uniform(0.2, 5.0), b=rng.uniform(0.2, 5.0))
        d = Desingularizer(M=M, theta=theta, eta=100.0)
        t = rng.uniform(0.01, 50.0)
        s = worst_case_gap(rc, d, t)
        if s > 0:
            alpha = rc.alpha_of(d)
            assert abs(s + 1.0 / alpha(s) ** 2 - t) <= 1e-12 * (1.0 + t)


@settings(max_examples=100, deadline=None)
@given(st.floats(min_value=1e-6, max_value=50.0),
       st.floats(min_value=0.05, max_value=0.5),
       st.floats(min_value=0.1, max_value=5.0))
def test_gap_recursion_contraction_hypothesis(t, theta, M):
    d = Desingularizer(M=M, theta=theta, eta=100.0)
    s = worst_case_gap(rc11(), d, t)
    assert 0.0 <= s < t


def test_gap_recursion_monotone_in_t():
    d = Desingularizer(M=0.7, theta=0.3, eta=50.0)
    grid = np.linspace(0.0, 40.0, 200)
    vals = [worst_case_gap(rc11(), d, t) for t in grid]
    assert np.all(np.diff(vals) >= -1e-12)


def test_gap_iterates_reach_zero():
    d = Desingularizer(M=1.0, theta=0.4, eta=50.0)
    vals = worst_case_gap_iterates(rc11(), d, 10.0, 4000)
    assert vals[-1] <= 1e-6
    arr = np.array(vals)
    pos = arr > 0
    assert np.all(np.diff(arr[pos]) < 0)


# ---------------------------------------------------------------------------
# envelopes


def test_holder_envelope_half():
    assert holder_envelope(0.5, 1.0, 1.0, 1.0, 3) == pytest.approx(0.125)
    assert holder_envelope(0.5, 1.0, 1.0, 1.0, 0) == pytest.approx(1.0)


def test_holder_envelope_quarter():
    # r = 2, P = max(f0, (2^4 * 2)^2) = 1024, k = 1 -> 256
    assert holder_envelope(0.25, 1.0, 1.0, 1.0, 1, f0=0.1) == pytest.approx(256.0)
    assert holder_envelope(0.25, 1.0, 1.0, 1.0, 0, f0=0.1) == pytest.approx(1024.0)


def test_holder_envelope_rejects_bad_theta():
    with pytest.raises(ValueError):
        holder_envelope(0.7, 1.0, 1.0, 1.0, 1)


def test_sigma_iterates_below_envelope():
    rc = RateConstants(a=1.0, b=1.0)
    for theta in (0.25, 0.4, 0.5):
        d = Desingularizer(M=1.0, theta=theta, eta=1000.0)
        f0 = 0.8
        vals = worst_case_gap_iterates(rc, d, f0, 60)
        for k, v in enumerate(vals):
            env = holder_envelope(theta, 1.0, 1.0, 1.0, k, f0=f0)
            env = env * f0 if theta == 0.5 else env
            assert v <= env + 1e-9


# ---------------------------------------------------------------------------
# certificates on runs


def _pl_quadratic_run():
    n, mu = 8, 1.0
    Q = random_spd(5, mu, 10.0, n)
    rng = np.random.default_rng(6)
    xstar = 2.0 + rng.uniform(-0.3, 0.3, size=n)
    b = Q @ xstar
    obj = quadratic_objective(Q, b)
    dom = Box(4.0, n)
    f_star = obj.value(np.linalg.solve(Q, b))
    run = outer_solve(obj, dom, AwayFrankWolfe(), np.full(n, 2.0),
                      tau=0.5, eps_stat=1e-5, max_iter=1000, record_slopes=True)
    return run, obj, f_star, mu


def test_certificates_pass_on_pl_quadratic():
    run, obj, f_star, mu = _pl_quadratic_run()
    # PL inequality backs M = 1/sqrt(2 mu); verify it first
    for r in run.records:
        for pt in (r.x, r.x_aux):
            gap = obj.value(pt) - f_star
            assert np.linalg.norm(obj.gradient(pt)) ** 2 >= 2 * mu * gap - 1e-9
    tau = min_observed_slope(run)
    rc = descent_rate_constants(obj.lipschitz_L, tau)
    d = Desingularizer(M=1.0 / np.sqrt(2 * mu), theta=0.5)
    c1 = certify_objective_rate(run, d, rc, f_star)
    c2 = certify_tail_length(run, d, rc, f_star)
    assert c1.passed and c2.passed
    assert "assumed" in c1.note


def test_certificate_negative_control():
    run, obj, f_star, mu = _pl_quadratic_run()
    tau = min_observed_slope(run)
    rc = descent_rate_constants(obj.lipschitz_L, tau)
    d = Desingularizer(M=1.0 / np.sqrt(2 * mu), theta=0.5)
    fake = f_star + 0.5 * (run.records[0].f - f_star)
    with pytest.raises(ValueError):
        certify_objective_rate(run, d, rc, fake)   # above recorded minimum
    # a mid-run value pushed above the initial gap must break the envelope
    gap0 = run.records[0].f - f_star
    k = len(run.records) // 2
    run.records[k].f += 2.0 * gap0
    c = certify_objective_rate(run, d, rc, f_star)
    assert not c.passed and not c.per_k[k]


def test_tail_certificate_trivial_cases():
    run, obj, f_star, mu = _pl_quadratic_run()
    tau = min_observed_slope(run)
    rc = descent_rate_constants(obj.lipschitz_L, tau)
    d = Desingularizer(M=1.0 / np.sqrt(2 * mu), theta=0.5)
    cert = certify_tail_length(run, d, rc, f_star)
    assert cert.per_k[-1]          # final index: 0 <= rhs
    # truncated run still certifies (tail of computed iterates only)
    import copy
    short = copy.copy(run)
    short.records = run.records[: len(run.records) // 2]
    cert2 = certify_tail_length(short, d, rc, f_star)
    assert cert2.passed


def test_certificate_k0_trivially_passes():
    run, obj, f_star, mu = _pl_quadratic_run()
    tau = min_observed_slope(run)
    rc = descent_rate_constants(obj.lipschitz_L, tau)
    d = Desingularizer(M=1.0 / np.sqrt(2 * mu), theta=0.5)
    c = certify_objective_rate(run, d, rc, f_star)
    assert c.per_k[0]


# ---------------------------------------------------------------------------
# pyramidal width brute force


def test_pwidth_unit_segment():
    assert pyramidal_width_bruteforce(np.array([[0.0], [1.0]])) == pytest.approx(1.0)


def test_pwidth_single_atom_degenerate():
    assert np.isinf(pyramidal_width_bruteforce(np.array([[0.5, 0.5]])))


def test_pwidth_simplex_grid_stability():
    V = Simplex(1.0, 3).vertices()
    v3 = pyramidal_width_bruteforce(V, grid=3)
    v4 = pyramidal_width_bruteforce(V, grid=4)
    assert v3 > 0
    assert abs(v3 - v4) <= 0.05 * v4


def test_pwidth_monotone_under_atom_addition():
    base = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    bigger = np.vstack([base, [[0.5, 0.25]]])        # interior-ish extra atom
    w_base = pyramidal_width_bruteforce(base, grid=3)
    w_big = pyramidal_width_bruteforce(bigger, grid=3)
    assert w_big <= w_base + 1e-12


def test_pwidth_size_limits():
    with pytest.raises(ValueError):
        pyramidal_width_bruteforce(np.zeros((9, 2)))
    with pytest.raises(ValueError):
        pyramidal_width_bruteforce(np.zeros((2, 5)))


# ---------------------------------------------------------------------------
# certified slope constants


def test_tau_sublevel_unit_ball():
    dom = SublevelSet(np.eye(2), level=0.5)
    assert theoretical_tau(dom, FaceFrankWolfe()) == pytest.approx(0.5)
    assert theoretical_tau(dom, FrankWolfe()) == pytest.approx(0.5)


def test_tau_sor_is_tau_bar():
    assert theoretical_tau(LpBall(3.0, 1.0, 4), ShortRetraction()) == 0.5
    assert theoretical_tau(SublevelSet(np.eye(3), level=1.0),
                           ShortRetraction(tau_bar=0.25)) == 0.25


def test_tau_segment_pairwise():
    dom = Box(1.0, 1)     # the unit segment
    assert theoretical_tau(dom, PairwiseFrankWolfe(), pwidth=1.0) == pytest.approx(1.0)


def test_tau_polytope_formulas():
    dom = Simplex(1.0, 3)
    pw = 1.2247448713915892
    D = np.sqrt(2)
    assert theoretical_tau(dom, PairwiseFrankWolfe(), pwidth=pw) == pytest.approx(pw / D)
    assert theoretical_tau(dom, AwayFrankWolfe(), pwidth=pw) == pytest.approx(pw / (2 * D))
    assert theoretical_tau(dom, FaceFrankWolfe(), pwidth=pw) == pytest.approx(pw / (2 * D))


def test_tau_product_rules():
    pd = ProductDomain([Simplex(1.0, 3), Box(1.0, 2)])
    m1 = ProductRule([AwayFrankWolfe(), PairwiseFrankWolfe()], mode="case1")
    m2 = ProductRule([AwayFrankWolfe(), PairwiseFrankWolfe()], mode="case2")
    t1 = theoretical_tau(pd, m1)
    t2 = theoretical_tau(pd, m2)
    assert t1 == pytest.approx(min(1.2247448713915892 / (2 * np.sqrt(2)),
                                   0.7071067811865476 / np.sqrt(2)))
    assert t2 == pytest.approx(t1 / 2)


def test_tau_lp2_exact_half():
    assert theoretical_tau(LpBall(2.0, 1.0, 5), FaceFrankWolfe()) == pytest.approx(0.5)


def test_tau_unsupported_pairs():
    with pytest.raises(ValueError):
        theoretical_tau(Simplex(1.0, 3), FrankWolfe(), pwidth=1.0)
    with pytest.raises(ValueError):
        theoretical_tau(Simplex(1.0, 3), ShortRetraction())
    with pytest.raises(ValueError):
        theoretical_tau(LpBall(2.0, 1.0, 3), PairwiseFrankWolfe())


def test_general_form_phi_by_quadrature():
    # phi'(t) = 0.5 t^(-1/2) integrates to sqrt(t), including the blow-up at 0
    d = Desingularizer(phi_prime=lambda t: 0.5 * t ** -0.5 if t > 0 else np.inf,
                       eta=10.0)
    assert d.phi(4.0) == pytest.approx(2.0, rel=1e-8)
    assert d.phi(0.0) == 0.0
    # and the recursion agrees with the equivalent power form
    power = Desingularizer(M=0.5, theta=0.5, eta=10.0)
    for t in (0.3, 1.0, 5.0):
        assert worst_case_gap(rc11(), d, t) == pytest.approx(
            worst_case_gap(rc11(), power, t), abs=1e-10)
