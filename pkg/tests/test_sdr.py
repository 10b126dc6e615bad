"""Diagonally constrained PSD programs and Gaussian rounding."""

import numpy as np
import pytest

from rismasim import sdr

from conftest import complex_normal, min_trace_pinned_diag, rng_for


def _random_hermitian(rng, n, scale=1.0):
    a = scale * complex_normal(rng, (n, n))
    return 0.5 * (a + a.conj().T)


def _pinned_problem(cost):
    n = cost.shape[0]
    return sdr.SdpProblem(cost, np.ones(n), np.ones(n), np.arange(n))


# ---------------------------------------------------------------------------
# solver on instances with known optima
# ---------------------------------------------------------------------------


def test_identity_cost_with_pinned_diagonal():
    n = 4
    sol = sdr.sdp_solve(_pinned_problem(np.eye(n)))
    # the trace is fixed by the pinned diagonal, so every feasible point is optimal
    assert sol.objective == pytest.approx(n, rel=1e-6)
    np.testing.assert_allclose(np.diag(sol.matrix).real, 1.0, atol=1e-12)


def test_two_by_two_pinned_closed_form():
    # off-diagonal cost c: optimum puts the unit coupling opposite to c
    c = 0.8 - 0.6j
    cost = np.array([[0.0, c], [np.conj(c), 0.0]])
    sol = sdr.sdp_solve(_pinned_problem(cost), tol=1e-8, max_iter=20000)
    assert sol.objective == pytest.approx(-2.0 * abs(c), abs=1e-5)


def test_diagonal_cost_selects_negative_entry():
    cost = np.diag([1.0, -2.0, 3.0])
    n = 3
    sol = sdr.sdp_solve(
        sdr.SdpProblem(cost, np.zeros(n), np.ones(n)), tol=1e-8, max_iter=20000
    )
    d = np.diag(sol.matrix).real
    np.testing.assert_allclose(d, [0.0, 1.0, 0.0], atol=1e-6)
    assert sol.objective == pytest.approx(-2.0, abs=1e-5)
    off = sol.matrix - np.diag(np.diag(sol.matrix))
    assert np.max(np.abs(off)) <= 1e-3


def test_pinned_objective_matches_first_order_oracle():
    for seed in range(5):
        rng = rng_for(60, seed)
        cost = _random_hermitian(rng, 3)
        sol = sdr.sdp_solve(_pinned_problem(cost), tol=1e-8, max_iter=50000)
        oracle = min_trace_pinned_diag(cost, rng_for(61, seed))
        assert abs(sol.objective - oracle) <= 1e-4 * max(1.0, abs(oracle))


def test_solution_invariants_on_random_instances():
    for seed in range(5):
        rng = rng_for(62, seed)
        cost = _random_hermitian(rng, 4)
        sol = sdr.sdp_solve(_pinned_problem(cost), tol=1e-7, max_iter=50000)
        v = sol.matrix
        scale = np.linalg.norm(v)
        assert np.linalg.norm(v - v.conj().T) <= 1e-10 * scale
        eigs = np.linalg.eigvalsh(0.5 * (v + v.conj().T))
        assert eigs[0] >= -1e-6 * scale
        np.testing.assert_allclose(np.diag(v).real, 1.0, atol=1e-6)
        assert sol.primal_residual <= 1e-7 * max(1.0, scale)


def test_relaxation_lower_bounds_discrete_feasible_points():
    points = np.array([1.0, -1.0, 1j, -1j])
    for seed in range(5):
        rng = rng_for(63, seed)
        cost = _random_hermitian(rng, 3)
        sol = sdr.sdp_solve(_pinned_problem(cost), tol=1e-8, max_iter=50000)
        best = np.inf
        for i in points:
            for j in points:
                for k in points:
                    v = np.array([i, j, k])
                    best = min(best, float(np.real(v.conj() @ cost @ v)))
        assert sol.objective <= best + 1e-6 * max(1.0, abs(best))


# ---------------------------------------------------------------------------
# real embedding round trip
# ---------------------------------------------------------------------------


def test_embed_lift_are_mutual_inverses():
    rng = rng_for(64)
    a = _random_hermitian(rng, 5)
    np.testing.assert_allclose(sdr.lift_hermitian(sdr.embed_hermitian(a)), a, atol=1e-14)


def test_embedded_solve_preserves_objective_after_lift():
    rng = rng_for(65)
    n = 3
    cost = _random_hermitian(rng, n)
    complex_sol = sdr.sdp_solve(_pinned_problem(cost), tol=1e-8, max_iter=50000)

    cost_e = sdr.embed_hermitian(cost)
    problem_e = sdr.SdpProblem(
        cost_e, np.ones(2 * n), np.ones(2 * n), np.arange(2 * n)
    )
    real_sol = sdr.sdp_solve(problem_e, tol=1e-8, max_iter=50000)
    lifted = sdr.lift_hermitian(real_sol.matrix)
    # the embedding doubles every inner product, so the lifted matrix carries
    # exactly half the embedded objective
    lifted_obj = float(np.real(np.trace(cost @ lifted)))
    assert abs(lifted_obj - real_sol.objective / 2.0) <= 1e-9 * max(1.0, abs(lifted_obj))
    # and both solver routes land on the same optimum
    assert lifted_obj == pytest.approx(complex_sol.objective, rel=1e-4, abs=1e-6)


# ---------------------------------------------------------------------------
# failure modes and validation
# ---------------------------------------------------------------------------


def test_nonconvergence_carries_residuals():
    cost = _random_hermitian(rng_for(66), 4)
    with pytest.raises(sdr.SdpNonConvergence) as err:
        sdr.sdp_solve(_pinned_problem(cost), tol=1e-12, max_iter=2)
    assert err.value.iterations == 2
    assert err.value.primal_residual > 0.0
    assert err.value.dual_residual > 0.0
    assert "no convergence" in str(err.value)


def test_problem_validation():
    with pytest.raises(ValueError):
        sdr.SdpProblem(np.ones((2, 3)), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        sdr.SdpProblem(np.array([[0.0, 1.0], [0.5, 0.0]]), np.zeros(2), np.ones(2))
    with pytest.raises(ValueError):
        sdr.SdpProblem(np.eye(2), np.ones(2), np.zeros(2))
    with pytest.raises(ValueError):
        sdr.SdpProblem(np.eye(2), np.zeros(2), np.ones(2), pinned=np.array([2]))
    with pytest.raises(ValueError):
        sdr.SdpProblem(np.eye(2), np.zeros(3), np.ones(3))


def test_psd_projection():
    rng = rng_for(67)
    a = _random_hermitian(rng, 4)
    p = sdr.psd_project(a)
    assert np.linalg.eigvalsh(p)[0] >= -1e-12
    already = p + 0.1 * np.eye(4)
    np.testing.assert_allclose(sdr.psd_project(already), already, atol=1e-12)


def test_warm_start_reaches_same_optimum():
    rng = rng_for(68)
    cost = _random_hermitian(rng, 4)
    cold = sdr.sdp_solve(_pinned_problem(cost), tol=1e-7, max_iter=50000)
    nearby = cost + 1e-3 * _random_hermitian(rng, 4)
    warm = sdr.sdp_solve(_pinned_problem(nearby), tol=1e-7, max_iter=50000, warm_start=cold)
    reference = sdr.sdp_solve(_pinned_problem(nearby), tol=1e-7, max_iter=50000)
    assert warm.objective == pytest.approx(reference.objective, rel=1e-3, abs=1e-6)


# ---------------------------------------------------------------------------
# Gaussian randomization
# ---------------------------------------------------------------------------


def _unit_projector(z):
    mags = np.abs(z)
    out = np.where(mags > 0, z / np.where(mags > 0, mags, 1.0), 1.0)
    return out


def test_randomize_single_draw_is_deterministic():
    rng = rng_for(69)
    cost = _random_hermitian(rng, 4)
    cov = np.eye(4, dtype=complex)

    def objective(v):
        return float(np.real(v.conj() @ cost @ v))

    v1, o1 = sdr.gaussian_randomize(cov, 1, _unit_projector, objective, rng_for(70))
    v2, o2 = sdr.gaussian_randomize(cov, 1, _unit_projector, objective, rng_for(70))
    np.testing.assert_array_equal(v1, v2)
    assert o1 == o2
    assert o1 == pytest.approx(objective(v1), rel=1e-12)
    np.testing.assert_allclose(np.abs(v1), 1.0, atol=1e-12)


def test_randomize_objective_non_increasing_in_sample_count():
    rng = rng_for(71)
    cost = _random_hermitian(rng, 4)
    cov = np.eye(4, dtype=complex) + 0.3 * cost @ cost.conj().T

    def objective(v):
        return float(np.real(v.conj() @ cost @ v))

    objs = [
        sdr.gaussian_randomize(cov, count, _unit_projector, objective, rng_for(72))[1]
        for count in (1, 5, 25)
    ]
    assert objs[0] >= objs[1] >= objs[2]


def test_randomize_rank_one_covariance_recovers_vector():
    rng = rng_for(73)
    v_bar = np.exp(1j * rng.uniform(0, 2 * np.pi, 4))
    cov = np.outer(v_bar, v_bar.conj())

    def objective(v):
        return -abs(np.vdot(v_bar, v))

    best, _ = sdr.gaussian_randomize(cov, 10, _unit_projector, objective, rng_for(74))
    # every sample is a scalar multiple of the generating vector, so the
    # unit-modulus projection recovers it up to one global phase
    assert abs(np.vdot(v_bar, best)) == pytest.approx(4.0, rel=1e-9)


def test_randomize_extra_candidates_join_the_pool():
    target = np.array([1.0, 1.0, -1.0, 1.0], dtype=complex)

    def objective(v):
        return float(np.linalg.norm(v - target))

    cov = np.eye(4, dtype=complex)
    best, obj = sdr.gaussian_randomize(
        cov, 5, _unit_projector, objective, rng_for(75), extra_candidates=(target,)
    )
    np.testing.assert_array_equal(best, target)
    assert obj == 0.0
    # candidate-only pool works without any random draws
    best2, _ = sdr.gaussian_randomize(
        cov, 0, _unit_projector, objective, rng_for(76), extra_candidates=(target,)
    )
    np.testing.assert_array_equal(best2, target)
    with pytest.raises(ValueError):
        sdr.gaussian_randomize(cov, 0, _unit_projector, objective, rng_for(77))
