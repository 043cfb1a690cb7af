"""Recursive gain estimation: batch equivalence, tracking, covariance health."""

import numpy as np
import pytest

from lqshared.rls import current_gain, rls_init, rls_update


def feed(state, xs, us):
    for x, u in zip(xs, us):
        state = rls_update(state, x, u)
    return state


def excitation_stream(rng, n, n_samples, scale=1.0):
    return scale * rng.normal(size=(n_samples, n))


class TestInit:
    def test_default_shape_and_values(self):
        state = rls_init(3, 1, 0.985, 1000.0)
        assert np.array_equal(state.k_hat, np.zeros((1, 3)))
        assert np.array_equal(state.p_cov, 1000.0 * np.eye(3))
        assert state.lambda_f == 0.985

    def test_no_forgetting_degenerate(self):
        state = rls_init(1, 1, 1.0, 1.0)
        assert state.lambda_f == 1.0

    @pytest.mark.parametrize("lam", [0.0, -0.1, 1.2])
    def test_bad_lambda_rejected(self, lam):
        with pytest.raises(ValueError):
            rls_init(3, 1, lam, 1000.0)

    def test_bad_p0_rejected(self):
        with pytest.raises(ValueError):
            rls_init(3, 1, 0.99, 0.0)


class TestUpdate:
    def test_constant_data_converges(self):
        # x = [1], u = -2 repeatedly: the law u = -k x has k = 2.  With a
        # finite prior the recursion lands exactly on 2 M / (M + 1/p0);
        # the prior bias only drops below 1e-6 once p0 M is large enough.
        state = rls_init(1, 1, 1.0, 100.0)
        for _ in range(50):
            state = rls_update(state, [1.0], [-2.0])
        assert state.k_hat[0, 0] == pytest.approx(2.0 * 50 / (50 + 1e-2), abs=1e-12)

        state = rls_init(1, 1, 1.0, 1e8)
        for _ in range(50):
            state = rls_update(state, [1.0], [-2.0])
        assert state.k_hat[0, 0] == pytest.approx(2.0, abs=1e-6)

    def test_batch_equivalence_with_prior(self):
        # lambda 1: the recursion equals ridge-regularized normal equations
        # with the initial covariance as prior, to machine precision
        rng = np.random.default_rng(5)
        k_true = np.array([[1.0, -2.0, 0.5]])
        xs = excitation_stream(rng, 3, 40)
        us = -(xs @ k_true.T)
        p0 = 100.0
        state = feed(rls_init(3, 1, 1.0, p0), xs, us)
        gram = xs.T @ xs + np.eye(3) / p0
        k_batch = np.linalg.solve(gram, xs.T @ (-us)).T
        assert np.max(np.abs(state.k_hat - k_batch)) <= 1e-10

    def test_batch_equivalence_pure_least_squares(self):
        # large initial covariance: matches the unregularized solution of the
        # stacked least-squares problem within 1e-8
        rng = np.random.default_rng(6)
        k_true = np.array([[0.7, 0.3, -1.1]])
        xs = excitation_stream(rng, 3, 60)
        us = -(xs @ k_true.T) + 0.01 * rng.normal(size=(60, 1))
        state = feed(rls_init(3, 1, 1.0, 1e9), xs, us)
        k_batch, *_ = np.linalg.lstsq(xs, -us, rcond=None)
        assert np.max(np.abs(state.k_hat - k_batch.T)) <= 1e-8

    def test_persistent_excitation_convergence(self):
        # n independent directions repeated: within 20 n samples at lambda 1
        n = 3
        k_true = np.array([[2.0, -1.0, 0.4]])
        basis = 10.0 * np.eye(n)
        state = rls_init(n, 1, 1.0, 1e6)
        count = 0
        for _ in range(20):
            for j in range(n):
                x = basis[j]
                state = rls_update(state, x, -(k_true @ x))
                count += 1
        assert count <= 20 * n
        assert np.linalg.norm(state.k_hat - k_true, 2) <= 1e-6

    def test_forgetting_tracks_step_change(self):
        # step change in the generating law: error below 10% of the step
        # within 300 samples at 25 Hz-style excitation
        rng = np.random.default_rng(7)
        k_old = np.array([[3.2, -0.7, -1.9]])
        k_new = np.array([[0.7, -0.4, -1.1]])
        state = rls_init(3, 1, 0.985, 1000.0)
        xs = excitation_stream(rng, 3, 500, scale=0.3)
        for x in xs:
            state = rls_update(state, x, -(k_old @ x))
        step = np.linalg.norm(k_new - k_old, 2)
        xs2 = excitation_stream(rng, 3, 300, scale=0.3)
        for x in xs2:
            state = rls_update(state, x, -(k_new @ x))
        assert np.linalg.norm(state.k_hat - k_new, 2) <= 0.1 * step

    def test_covariance_stays_positive_definite(self):
        rng = np.random.default_rng(8)
        k_true = np.array([[1.0, 2.0, 3.0]])
        state = rls_init(3, 1, 0.985, 1000.0)
        for x in excitation_stream(rng, 3, 400, scale=0.5):
            state = rls_update(state, x, -(k_true @ x))
            assert np.min(np.linalg.eigvalsh(state.p_cov)) > 0

    def test_nonfinite_sample_skipped_and_counted(self):
        state = rls_init(2, 1, 0.99, 10.0)
        before = state.k_hat.copy()
        state = rls_update(state, [np.nan, 1.0], [0.5])
        state = rls_update(state, [1.0, 1.0], [np.inf])
        assert state.skipped == 2
        assert state.sample_count == 0
        assert np.array_equal(state.k_hat, before)

    def test_unexcited_sample_skipped(self):
        state = rls_init(2, 1, 0.99, 10.0)
        state = rls_update(state, [0.0, 0.0], [0.3])
        assert state.skipped == 1

    def test_deterministic(self):
        rng = np.random.default_rng(9)
        xs = excitation_stream(rng, 3, 200)
        us = -(xs @ np.array([[1.0, 0.5, -0.2]]).T)
        a = feed(rls_init(3, 1, 0.985, 1000.0), xs, us)
        b = feed(rls_init(3, 1, 0.985, 1000.0), xs, us)
        assert np.array_equal(a.k_hat, b.k_hat)
        assert np.array_equal(a.p_cov, b.p_cov)


class TestCurrentGain:
    def test_fresh_state_is_zero(self):
        assert np.array_equal(current_gain(rls_init(3, 2)).k, np.zeros((2, 3)))

    def test_multi_row_recovery_preserves_order(self):
        rng = np.random.default_rng(10)
        k_true = np.array([[1.0, 2.0, 3.0], [-0.5, 0.25, 4.0]])
        state = rls_init(3, 2, 1.0, 1e7)
        for x in excitation_stream(rng, 3, 90):
            state = rls_update(state, x, -(k_true @ x))
        gain = current_gain(state)
        assert np.max(np.abs(gain.k - k_true)) <= 1e-6
