"""Core game solver: Nash gains, stability, closed-loop cost, simulation."""

import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov
from scipy.signal import place_poles

from lqshared.errors import (
    DimensionError,
    NonFiniteError,
    NotStabilizableError,
    UnstableError,
)
from lqshared.games import (
    CostParams,
    FeedbackGain,
    GameSystem,
    GlobalObjective,
    SolverOptions,
    closed_loop_matrix,
    coupled_riccati_residual,
    evaluate_global_cost,
    simulate,
    solve_coupled_riccati,
    stability_margins,
)

# frozen regression values for the vehicle-manipulator design operating point
QA_STAR = [33.91482, 1.00824, 3.20799]
KA_STAR = [4.26404, 0.68660, 1.57042]
KH_STAR = [3.19217, -0.69046, -1.86536]


def kleinman_newton_lqr(a, b, q, r, k0, iters=200, tol=1e-13):
    """Independent LQR oracle: Newton iteration on Lyapunov equations.

    Requires a stabilizing initial gain; converges quadratically to the
    stabilizing Riccati solution.
    """
    k = np.atleast_2d(np.asarray(k0, float))
    p = None
    for _ in range(iters):
        a_cl = a - b @ k
        assert np.max(np.linalg.eigvals(a_cl).real) < 0, "oracle lost stability"
        p = solve_continuous_lyapunov(a_cl.T, -(q + k.T @ r @ k))
        k_new = np.linalg.solve(r, b.T @ p)
        if np.max(np.abs(k_new - k)) < tol:
            return p, k_new
        k = k_new
    return p, k


def stabilizing_gain(a, b):
    """Pole placement start for the oracle (independent of any ARE solver)."""
    n = a.shape[0]
    if np.max(np.linalg.eigvals(a).real) < 0:
        return np.zeros((b.shape[1], n))
    poles = -np.linspace(1.0, 1.0 + 0.3 * (n - 1), n)
    return place_poles(a, b, poles).gain_matrix


def random_two_player_game(rng, n, m=(1, 1)):
    while True:
        a = rng.normal(scale=1.0, size=(n, n))
        b = [rng.normal(size=(n, mi)) for mi in m]
        costs = [
            CostParams(rng.uniform(0.1, 10.0, n), rng.uniform(0.2, 5.0, mi))
            for mi in m
        ]
        try:
            sol = solve_coupled_riccati(GameSystem(a, b), costs)
            return GameSystem(a, b), costs, sol
        except Exception:
            continue


class TestSolveCoupledRiccati:
    def test_scalar_single_effective_player(self):
        # other player has no input authority; closed form p^2 + 2p - 1 = 0
        sys = GameSystem([[-1.0]], [[[1.0]], [[0.0]]])
        costs = [CostParams([1.0], [1.0]), CostParams([1.0], [1.0])]
        sol = solve_coupled_riccati(sys, costs)
        assert sol.p[0][0, 0] == pytest.approx(np.sqrt(2) - 1, abs=1e-12)
        assert sol.k[0].k[0, 0] == pytest.approx(np.sqrt(2) - 1, abs=1e-12)

    def test_zero_cost_hurwitz_gives_zero_solution(self):
        sys = GameSystem(np.diag([-1.0, -2.0]),
                         [np.array([[1.0], [0.0]]), np.array([[0.0], [1.0]])])
        costs = [CostParams([0.0, 0.0], [1.0]), CostParams([0.0, 0.0], [1.0])]
        sol = solve_coupled_riccati(sys, costs)
        for p, k in zip(sol.p, sol.k):
            assert np.allclose(p, 0.0, atol=1e-12)
            assert np.allclose(k.k, 0.0, atol=1e-12)

    def test_paper_operating_point(self, vm_system, human_cost_strong):
        sol = solve_coupled_riccati(
            vm_system, [CostParams(QA_STAR, [1.0]), human_cost_strong])
        assert sol.residual_norm <= 1e-9
        assert np.allclose(sol.k[0].k.ravel(), KA_STAR, atol=2e-4)
        assert np.allclose(sol.k[1].k.ravel(), KH_STAR, atol=2e-4)
        # reported human gains sit within the published rounding
        assert np.allclose(sol.k[1].k.ravel(), [3.16, -0.69, -1.88], atol=0.05)

    def test_residual_invariant_random_games(self):
        rng = np.random.default_rng(3)
        for n in (2, 3):
            for m in ((1, 1), (2, 1)):
                sys, costs, sol = random_two_player_game(rng, n, m)
                assert sol.residual_norm <= 1e-9
                residuals = coupled_riccati_residual(sys, costs, sol.p)
                assert max(residuals) <= 1e-9
                a_cl = closed_loop_matrix(sys, sol.k)
                assert stability_margins(a_cl)[0] < 0

    def test_single_player_reduction_matches_kleinman_newton(self, vm_system):
        rng = np.random.default_rng(11)
        cases = []
        for _ in range(4):
            n = 3
            a = rng.normal(size=(n, n))
            b = rng.normal(size=(n, 1))
            cases.append((a, b, np.diag(rng.uniform(0.5, 5.0, n)),
                          np.eye(1) * rng.uniform(0.5, 2.0)))
        cases.append((np.asarray(vm_system.a), np.asarray(vm_system.b[0]),
                      np.diag([35.0, 1.0, 3.0]), np.eye(1)))
        for a, b, q, r in cases:
            try:
                k0 = stabilizing_gain(a, b)
            except ValueError:
                continue
            p_ref, k_ref = kleinman_newton_lqr(a, b, q, r, k0)
            sys = GameSystem(a, [b, np.zeros_like(b)])
            costs = [CostParams(np.diag(q), np.diag(r)),
                     CostParams(np.ones(a.shape[0]), [1.0])]
            sol = solve_coupled_riccati(sys, costs)
            assert np.max(np.abs(sol.p[0] - p_ref)) <= 1e-8
            assert np.max(np.abs(sol.k[0].k - k_ref)) <= 1e-8

    def test_gain_scale_invariance(self, vm_system, human_cost_strong):
        theta_a = CostParams(QA_STAR, [1.0])
        base = solve_coupled_riccati(vm_system, [theta_a, human_cost_strong])
        for c in (0.1, 3.0, 250.0):
            scaled = solve_coupled_riccati(
                vm_system, [theta_a.scaled(c), human_cost_strong])
            assert np.max(np.abs(scaled.k[0].k - base.k[0].k)) <= 1e-9
        # scaling the human leaves the human gain unchanged too
        scaled_h = solve_coupled_riccati(
            vm_system, [theta_a, human_cost_strong.scaled(7.0)])
        assert np.max(np.abs(scaled_h.k[1].k - base.k[1].k)) <= 1e-9

    def test_warm_start_converges_faster(self, vm_system, human_cost_strong):
        theta_a = CostParams(QA_STAR, [1.0])
        cold = solve_coupled_riccati(vm_system, [theta_a, human_cost_strong])
        nudged = CostParams(np.asarray(QA_STAR) * 1.01, [1.0])
        warm = solve_coupled_riccati(
            vm_system, [nudged, human_cost_strong],
            SolverOptions(warm_start=cold.p))
        cold2 = solve_coupled_riccati(vm_system, [nudged, human_cost_strong])
        assert warm.iterations < cold2.iterations
        assert np.allclose(warm.k[0].k, cold2.k[0].k, atol=1e-8)

    def test_iteration_cap_raises(self, vm_system, human_cost_strong):
        from lqshared.errors import NoConvergenceError
        with pytest.raises(NoConvergenceError):
            solve_coupled_riccati(
                vm_system, [CostParams(QA_STAR, [1.0]), human_cost_strong],
                SolverOptions(max_iterations=1))


class TestClosedLoopAndMargins:
    def test_zero_gains_return_a(self, vm_system):
        zeros = [np.zeros((1, 3)), np.zeros((1, 3))]
        assert np.array_equal(closed_loop_matrix(vm_system, zeros), vm_system.a)

    def test_scalar_arithmetic(self):
        sys = GameSystem([[0.0]], [[[1.0]], [[1.0]]])
        a_cl = closed_loop_matrix(sys, [[[2.0]], [[3.0]]])
        assert a_cl[0, 0] == pytest.approx(-5.0)

    def test_dimension_mismatch(self, vm_system):
        with pytest.raises(DimensionError):
            closed_loop_matrix(vm_system, [np.zeros((1, 2)), np.zeros((1, 3))])

    def test_margins_diagonal(self):
        assert np.allclose(stability_margins(np.diag([-1.0, -2.0])), [-1.0, -2.0])

    def test_margins_rotation(self):
        assert np.allclose(stability_margins([[0.0, 1.0], [-1.0, 0.0]]),
                           [0.0, 0.0], atol=1e-12)

    def test_margins_requires_square(self):
        with pytest.raises(DimensionError):
            stability_margins(np.zeros((2, 3)))


class TestGlobalCost:
    def test_zero_weighting_gives_zero(self, vm_system, global_objective):
        gains = [np.array(KA_STAR).reshape(1, 3), np.array(KH_STAR).reshape(1, 3)]
        cost = evaluate_global_cost(vm_system, gains, global_objective,
                                    np.zeros((3, 3)))
        assert cost == 0.0

    def test_scalar_lyapunov(self):
        sys = GameSystem([[-1.0]], [[[0.0]], [[0.0]]])
        g = GlobalObjective([1.0], [[1.0], [1.0]])
        gains = [np.zeros((1, 1)), np.zeros((1, 1))]
        assert evaluate_global_cost(sys, gains, g, np.eye(1)) == pytest.approx(0.25)

    def test_unstable_loop_raises(self):
        sys = GameSystem([[1.0]], [[[0.0]], [[0.0]]])
        g = GlobalObjective([1.0], [[1.0], [1.0]])
        with pytest.raises(UnstableError):
            evaluate_global_cost(sys, [np.zeros((1, 1))] * 2, g)

    def test_matches_quadrature_along_trajectory(self, vm_system,
                                                 global_objective,
                                                 human_cost_strong):
        # oracle: Simpson quadrature of the running cost from x0, horizon
        # long enough that the integrand has fully decayed
        sol = solve_coupled_riccati(
            vm_system, [CostParams(QA_STAR, [1.0]), human_cost_strong])
        gains = [sol.k[0].k, sol.k[1].k]
        x0 = np.array([1.0, -0.5, 0.25])
        lyap = evaluate_global_cost(vm_system, gains, global_objective,
                                    np.outer(x0, x0))

        dt = 0.0025
        trace = simulate(vm_system, gains, x0, dt=dt, duration=60.0)
        qg = global_objective.qg_matrix
        integrand = np.einsum("ij,jk,ik->i", trace.x, qg, trace.x)
        for j, u in enumerate(trace.u):
            rg = global_objective.rg_matrix(j)
            integrand = integrand + np.einsum("ij,jk,ik->i", u, rg, u)
        assert integrand[-1] < 1e-12
        from scipy.integrate import simpson
        quad = 0.5 * simpson(integrand, dx=dt)
        assert lyap == pytest.approx(quad, rel=1e-6)


class TestSimulate:
    def test_no_dynamics_holds_state(self):
        sys = GameSystem([[0.0]], [[[0.0]], [[0.0]]])
        trace = simulate(sys, [np.zeros((1, 1))] * 2, [1.0], dt=0.1, duration=2.0)
        assert np.allclose(trace.x, 1.0)

    def test_scalar_exponential_decay(self):
        sys = GameSystem([[0.0]], [[[1.0]], [[0.0]]])
        gains = [np.array([[1.0]]), np.zeros((1, 1))]
        trace = simulate(sys, gains, [1.0], dt=0.01, duration=1.0)
        assert trace.x[-1, 0] == pytest.approx(np.exp(-1.0), abs=1e-8)

    def test_divergence_raises_nonfinite(self):
        sys = GameSystem([[4.0]], [[[0.0]], [[0.0]]])
        with pytest.raises(NonFiniteError):
            simulate(sys, [np.zeros((1, 1))] * 2, [1.0], dt=0.1, duration=900.0)

    def test_energy_decay_for_hurwitz_loop(self, vm_system, human_cost_strong):
        sol = solve_coupled_riccati(
            vm_system, [CostParams(QA_STAR, [1.0]), human_cost_strong])
        trace = simulate(vm_system, [g.k for g in sol.k],
                         [1.0, 1.0, -1.0], dt=0.04, duration=40.0)
        assert np.linalg.norm(trace.x[-1]) < 1e-3 * np.linalg.norm(trace.x[0])

    def test_time_varying_schedule_and_disturbance(self, vm_system):
        k0 = [np.zeros((1, 3)), np.zeros((1, 3))]
        k1 = [np.array(KA_STAR).reshape(1, 3), np.array(KH_STAR).reshape(1, 3)]
        schedule = lambda t: k0 if t < 1.0 else k1
        w = lambda t: np.array([0.1 * np.sin(t), 0.0, 0.0])
        trace = simulate(vm_system, schedule, [0.0, 0.0, 0.0], dt=0.04,
                         duration=5.0, disturbance=w)
        assert np.all(np.isfinite(trace.x))
        assert np.allclose(trace.u[0][:24], 0.0)
        assert not np.allclose(trace.u[0][-10:], 0.0)

    def test_bad_steps_rejected(self, vm_system):
        gains = [np.zeros((1, 3)), np.zeros((1, 3))]
        with pytest.raises(ValueError):
            simulate(vm_system, gains, np.zeros(3), dt=0.0, duration=1.0)
        with pytest.raises(ValueError):
            simulate(vm_system, gains, np.zeros(3), dt=0.1, duration=0.05)


class TestTypes:
    def test_dimension_checks(self):
        with pytest.raises(DimensionError):
            GameSystem([[0.0, 1.0]], [[[1.0]], [[1.0]]])
        with pytest.raises(DimensionError):
            GameSystem([[0.0]], [[[1.0], [0.0]], [[1.0]]])

    def test_cost_positivity(self):
        with pytest.raises(ValueError):
            CostParams([-1.0], [1.0])
        with pytest.raises(ValueError):
            CostParams([1.0], [0.0])
        with pytest.raises(ValueError):
            CostParams([1.0], [1.0], [-0.5])

    def test_gain_finite(self):
        with pytest.raises(ValueError):
            FeedbackGain([[np.nan]])

    def test_immutability(self, vm_system):
        with pytest.raises(ValueError):
            vm_system.a[0, 0] = 5.0
