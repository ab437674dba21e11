import math

import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import beta as beta_fn

from subtk.discrete_operator import GridSpec, assemble_laplacian
from subtk.errors import ConvergenceError, InvariantViolation
from subtk.field_algebra import euclidean_fields, grushin_fields
from subtk.spectral import clr_count, smallest_eigenpairs
from subtk.variational import (
    CutoffChi,
    NonlinearitySpec,
    SearchOptions,
    annotate,
    critical_point_identities,
    energy,
    fit_A0,
    gradient,
    growth_constants,
    hessian,
    hessian_Ip,
    modified_energy,
    modified_gradient,
    morse_indices,
    mountain_pass_search,
    multi_solution_search,
    radius_rule,
    symmetry_defect,
    zero_count_1d,
)


def line_op(N):
    return assemble_laplacian(euclidean_fields(1), GridSpec([(0, 1)], [N]))


def grushin_op(N=10):
    return assemble_laplacian(grushin_fields(), GridSpec([(-1, 1), (-1, 1)], [N]))


def continuum_ground_energy():
    """Ground energy of -u'' = u^3 on (0,1) from the first integral.

    u'^2/2 + u^4/4 = M^4/4 with half period sqrt(2) K / M = 1/2, and
    E = int u'^2 / 4 = sqrt(2) M^3 J / 4, K = B(1/4,1/2)/4, J = B(1/4,3/2)/4.
    """
    K = beta_fn(0.25, 0.5) / 4
    J = beta_fn(0.25, 1.5) / 4
    M = 2 * math.sqrt(2) * K
    return math.sqrt(2) / 4 * M ** 3 * J


def nehari_oracle(op, init):
    """min over v of (v^T A v)^2 / (4 W sum v^4): the Nehari ground level for f = u^3."""
    W = op.weight

    def J(v):
        a = v @ (op.A @ v)
        b = W * np.sum(v ** 4)
        return 0.25 * a * a / b, 0.25 * (4 * a * (op.A @ v) / b - a * a / b ** 2 * 4 * W * v ** 3)

    res = minimize(J, init, jac=True, method="L-BFGS-B",
                   options=dict(maxiter=20000, gtol=1e-14, ftol=1e-16))
    return float(res.fun)


# -- nonlinearity and cutoff ---------------------------------------------------


def test_spec_validation_tags():
    with pytest.raises(InvariantViolation) as info:
        NonlinearitySpec(p=3, sigma=2.5)
    assert info.value.code == "violates_h_4"
    with pytest.raises(InvariantViolation) as info:
        NonlinearitySpec(p=2)
    assert info.value.code == "violates_h_2"
    with pytest.raises(InvariantViolation):
        NonlinearitySpec(p=3, beta=-1)


def test_primitives_and_parity():
    spec = NonlinearitySpec(B=2.0, p=3.5, beta=0.7, sigma=0.5)
    u = np.linspace(-2, 2, 2001)
    h = u[1] - u[0]
    assert np.allclose(np.gradient(spec.F(u), h)[1:-1], spec.f(u)[1:-1], atol=1e-4)
    away = (np.abs(u) > 0.05) & (np.abs(u) < 1.99)
    assert np.allclose(np.gradient(spec.G(u), h)[away], spec.g(u)[away], atol=1e-5)
    assert np.allclose(spec.F(-u), spec.F(u))
    assert np.allclose(spec.f(-u), -spec.f(u))
    assert np.allclose(spec.G(-u), -spec.G(u))


def test_chi_properties():
    chi = CutoffChi()
    xi = np.linspace(0, 3, 3001)
    vals = chi(xi)
    assert np.all(vals[xi <= 1] == 1) and np.all(vals[xi >= 2] == 0)
    assert np.all(np.diff(vals) <= 1e-15)
    assert chi.max_slope() < 2
    assert chi.derivative(1.5) == pytest.approx(-2 * chi.c, rel=1e-12)
    h = 1e-6
    for x in (1.1, 1.37, 1.5, 1.8):
        fd = (chi(x + h) - chi(x - h)) / (2 * h)
        assert chi.derivative(x) == pytest.approx(fd, rel=1e-6)
    with pytest.raises(ValueError):
        CutoffChi(c=1.0)


def test_growth_constants_p3():
    c = growth_constants(NonlinearitySpec(B=1, p=3))
    assert c.gamma0 == pytest.approx(1 / 3)
    assert c.a1 == pytest.approx(1 / 3)
    assert (c.a2, c.a3) == (0.0, 0.0)
    with pytest.raises(ValueError):
        c.with_A0(0.0)


# -- finite-difference checks ------------------------------------------------------


def _random_inputs(n, count, seed):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        yield rng.uniform(0.2, 3.0) * rng.standard_normal(n), rng.standard_normal(n)


def test_gradient_fd_50_inputs():
    op = grushin_op()
    alpha = np.linspace(-0.3, 0.3, op.size)
    spec = NonlinearitySpec(B=1.3, p=3.2, beta=0.8, sigma=0.6, alpha=alpha)
    for u, d in _random_inputs(op.size, 50, 1):
        eps = 1e-6 * np.linalg.norm(u) / np.linalg.norm(d)
        fd = (energy(u + eps * d, spec, op) - energy(u - eps * d, spec, op)) / (2 * eps)
        an = float(gradient(u, spec, op) @ d)
        assert abs(fd - an) <= 1e-5 * max(abs(an), 1e-3 * np.linalg.norm(gradient(u, spec, op)) * np.linalg.norm(d))


def test_modified_gradient_fd_50_inputs_in_transition():
    op = grushin_op()
    spec = NonlinearitySpec(B=1.0, p=3.0, beta=0.5, sigma=0.5)
    base = growth_constants(spec)
    hits = 0
    for i, (u, d) in enumerate(_random_inputs(op.size, 50, 2)):
        # place theta inside the transition (1, 2) for most samples
        theta1 = modified_energy(u, spec, base.with_A0(1.0), op).theta
        consts = base.with_A0(theta1 / (1.05 + 0.9 * (i % 10) / 10))
        vec, parts = modified_gradient(u, spec, consts, op)
        hits += 1 < parts["theta"] < 2
        eps = 1e-6 * np.linalg.norm(u) / np.linalg.norm(d)
        fd = (modified_energy(u + eps * d, spec, consts, op).E1
              - modified_energy(u - eps * d, spec, consts, op).E1) / (2 * eps)
        an = float(vec @ d)
        assert abs(fd - an) <= 1e-5 * max(abs(an), 1e-3 * np.linalg.norm(vec) * np.linalg.norm(d))
    assert hits >= 40


def test_hessian_second_differences_50_inputs():
    op = grushin_op()
    spec = NonlinearitySpec(B=1.0, p=3.5, beta=0.4, sigma=1.5)
    for u, d in _random_inputs(op.size, 50, 3):
        eps = 1e-5 * np.linalg.norm(u) / np.linalg.norm(d)
        fd = (gradient(u + eps * d, spec, op) - gradient(u - eps * d, spec, op)) / (2 * eps)
        an = hessian(u, spec, op) @ d
        assert np.linalg.norm(fd - an) <= 1e-4 * np.linalg.norm(an)


# -- symmetry -------------------------------------------------------------------


def test_g_zero_symmetry_exact():
    op = grushin_op()
    spec = NonlinearitySpec(p=3.0)
    consts = growth_constants(spec).with_A0(0.5)
    rng = np.random.default_rng(4)
    for _ in range(20):
        u = rng.standard_normal(op.size)
        assert energy(-u, spec, op) == energy(u, spec, op)
        assert np.array_equal(gradient(-u, spec, op), -gradient(u, spec, op))
        me = modified_energy(u, spec, consts, op)
        assert me.E1 == me.E
        assert symmetry_defect(u, spec, consts, op) == 0.0


def test_psi_is_one_at_origin():
    op = grushin_op()
    spec = NonlinearitySpec(p=3.0, beta=1.0, sigma=0.5)
    me = modified_energy(np.zeros(op.size), spec, growth_constants(spec).with_A0(1.0), op)
    assert me.theta == 0 and me.psi == 1.0 and me.E1 == me.E == 0


def test_modified_energy_needs_A0():
    op = grushin_op()
    spec = NonlinearitySpec(p=3.0)
    with pytest.raises(ValueError):
        modified_energy(np.ones(op.size), spec, growth_constants(spec), op)


def test_symmetry_defect_identity_for_odd_G():
    op = grushin_op()
    spec = NonlinearitySpec(p=3.0, beta=0.9, sigma=0.7)
    base = growth_constants(spec)
    rng = np.random.default_rng(5)
    for i in range(30):
        u = rng.uniform(0.1, 4) * rng.standard_normal(op.size)
        consts = base.with_A0(rng.uniform(0.05, 2.0))
        a = modified_energy(u, spec, consts, op)
        b = modified_energy(-u, spec, consts, op)
        expected = (a.psi + b.psi) * abs(a.intG)
        assert symmetry_defect(u, spec, consts, op) == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_symmetry_defect_ratio_bounded_over_cloud():
    op = grushin_op()
    spec = NonlinearitySpec(p=3.0, beta=0.6, sigma=0.5)
    consts = growth_constants(spec).with_A0(1.0)
    rng = np.random.default_rng(6)
    ratios = []
    for _ in range(500):
        u = 10 ** rng.uniform(-2, 2) * rng.standard_normal(op.size)
        E1 = modified_energy(u, spec, consts, op).E1
        ratios.append(symmetry_defect(u, spec, consts, op) / (abs(E1) ** ((spec.sigma + 1) / spec.mu) + 1))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios))
    # the fitted constant does not blow up with the amplitude range
    assert ratios.max() < 10


# -- critical points on -u'' = u^3 -------------------------------------------------


@pytest.fixture(scope="module")
def line_solutions():
    op = line_op(400)
    spec = NonlinearitySpec(B=1.0, p=4.0)
    spectrum = smallest_eigenpairs(op, 5)
    recs, warnings = multi_solution_search(spec, op, spectrum, 3, nu_tilde=1)
    consts = growth_constants(spec)
    consts = consts.with_A0(fit_A0([r.u for r in recs], spec, op))
    for r in recs:
        annotate(r, spec, consts, op)
    return op, spec, consts, recs, warnings


def test_mountain_pass_matches_nehari_oracle(line_solutions):
    op, spec, _, recs, _ = line_solutions
    x = op.grid.points[:, 0]
    oracle = nehari_oracle(op, np.sin(np.pi * x) + 0.3 * np.sin(2 * np.pi * x) ** 2)
    assert recs[0].energy == pytest.approx(oracle, rel=1e-4)


def test_mountain_pass_matches_continuum_closed_form(line_solutions):
    _, _, _, recs, _ = line_solutions
    # O(h^2) discretisation error at N = 400
    assert recs[0].energy == pytest.approx(continuum_ground_energy(), rel=1e-4)


def test_three_solutions_zeros_and_energies(line_solutions):
    _, _, _, recs, warnings = line_solutions
    assert warnings == []
    assert [r.k for r in recs] == [1, 2, 3]
    assert [r.zero_count for r in recs] == [0, 1, 2]
    E = [r.energy for r in recs]
    assert E[0] < E[1] < E[2]
    # k-nodal solutions are rescaled ground states: E_k = k^4 E_1 in the continuum
    for k, e in zip((1, 2, 3), E):
        assert e == pytest.approx(k ** 4 * continuum_ground_energy(), rel=2e-3)


def test_identities_at_critical_points(line_solutions):
    op, spec, consts, recs, _ = line_solutions
    for r in recs:
        ids = r.identities
        assert ids["identity_gap"] <= 1e-10 * np.linalg.norm(r.u)
        assert ids["psi"] == 1.0
        assert ids["E1_equals_E"]
        assert r.modified_energy == r.energy


def test_morse_index_of_mountain_pass(line_solutions):
    _, _, _, recs, _ = line_solutions
    assert [r.m for r in recs] == [1, 2, 3]
    assert recs[0].m_star == 1


def test_energy_growth_slope(line_solutions):
    _, spec, _, recs, _ = line_solutions
    k = np.array([r.k for r in recs], float)
    slope = np.polyfit(np.log(k), np.log([r.energy for r in recs]), 1)[0]
    assert slope >= 0.9 * 2 * spec.p / (1 * (spec.p - 2))


def test_clr_chain_bounds_augmented_index(line_solutions):
    op, spec, _, recs, _ = line_solutions
    for r in recs:
        V = -spec.df(r.u)
        assert clr_count(op, V - 1e-6) >= r.m_star


def test_weak_solution_against_test_functions(line_solutions):
    op, spec, _, recs, _ = line_solutions
    x = op.grid.points[:, 0]
    for r in recs:
        res = gradient(r.u, spec, op)
        for j in range(1, 6):
            phi = np.sin(j * np.pi * x)
            pairing = float(res @ phi)
            scale = op.weight * float(np.sum(np.abs(spec.f(r.u) * phi)))
            assert abs(pairing) <= 1e-8 * scale


def test_identity_gap_off_critical_equals_half_pairing():
    op = grushin_op()
    spec = NonlinearitySpec(p=3.0, beta=0.4, sigma=0.5)
    consts = growth_constants(spec)
    u = np.random.default_rng(7).standard_normal(op.size)
    ids = critical_point_identities(u, spec, consts, op)
    assert ids["identity_gap"] == pytest.approx(ids["half_pairing"], rel=1e-10)
    assert ids["half_pairing"] > 1e-3


def test_partial_list_is_reported():
    op = line_op(200)
    spec = NonlinearitySpec(p=4.0)
    spectrum = smallest_eigenpairs(op, 3)
    opts = SearchOptions(newton_max=1, max_iter=2)
    recs, warnings = multi_solution_search(spec, op, spectrum, 3, opts=opts, nu_tilde=1)
    assert len(recs) < 3
    assert any("found %d of 3" % len(recs) in w for w in warnings)


def test_mountain_pass_failure_raises():
    op = line_op(100)
    with pytest.raises(ConvergenceError) as info:
        mountain_pass_search(NonlinearitySpec(p=4.0), op, opts=SearchOptions(newton_max=0, max_iter=1))
    assert "u" in info.value.best


# -- Morse and helpers ------------------------------------------------------------


def test_morse_indices_constructed_matrix():
    H = np.diag([-1.0, 0.0, 1.0, 2.0])
    assert morse_indices(H) == {"m": 1, "m_star": 2, "tol": pytest.approx(2e-9)}
    assert morse_indices(np.diag([3.0, 1.0]))["m"] == 0


def test_hessian_Ip_matches_full_hessian_when_g_zero():
    op = line_op(50)
    spec = NonlinearitySpec(p=3.5)
    u = np.random.default_rng(8).standard_normal(op.size)
    assert np.allclose(hessian_Ip(u, spec, op).A.toarray(), hessian(u, spec, op).toarray())


def test_radius_rule_and_zero_count():
    assert radius_rule(16.0, 4.0, 1) == pytest.approx(16 ** 0.25)
    # nu = 4, p = 3: r = 4 (1 - 3/4) = 1
    assert radius_rule(16.0, 3.0, 4) == pytest.approx(16 ** 0.5)
    assert zero_count_1d([0, 1, 2, -1, -2, 0, 3]) == 2
    assert zero_count_1d([1e-20, 1, -1e-20, 2]) == 0
