import numpy as np
import pytest

from trackkit.geometry import BBox
from trackkit.kalman import (
    STD_WEIGHT_POSITION,
    STD_WEIGHT_VELOCITY,
    KalmanState,
    from_state,
    gating_distance,
    initiate,
    predict,
    to_measurement,
    update,
)


def scalar_posterior(prior_mean, prior_var, cross, vel_mean, obs_var, measurement):
    """Closed-form 1D Kalman correction for one (position, velocity) pair.

    Derived by hand from the scalar gain k = p / (p + r); used as the oracle
    for the 8-dim matrix path, which decouples per component when the
    measured block of the covariance is diagonal.
    """
    innovation = measurement - prior_mean
    s = prior_var + obs_var
    k_pos = prior_var / s
    k_vel = cross / s
    return prior_mean + k_pos * innovation, vel_mean + k_vel * innovation


def observation_vars(h):
    # documented observation noise model: std (h/20, h/20, 0.1, h/20)
    std = np.array([STD_WEIGHT_POSITION * h, STD_WEIGHT_POSITION * h, 1e-1, STD_WEIGHT_POSITION * h])
    return std**2


class TestMeasurementConversion:
    def test_arithmetic_by_definition(self):
        m = to_measurement(BBox(0, 0, 2, 4))
        assert m.tolist() == [1, 2, 0.5, 4]

    def test_round_trip_through_initiate(self):
        box = BBox(3.5, -2.0, 7.0, 5.0)
        back = from_state(initiate(to_measurement(box)))
        assert back.x == pytest.approx(box.x)
        assert back.y == pytest.approx(box.y)
        assert back.w == pytest.approx(box.w)
        assert back.h == pytest.approx(box.h)

    def test_square_box_aspect_one(self):
        assert to_measurement(BBox(0, 0, 3, 3))[2] == 1.0

    def test_rejects_non_positive_size(self):
        with pytest.raises(ValueError):
            to_measurement(BBox(0, 0, 0, 3))


class TestInitiate:
    def test_velocities_start_at_zero(self):
        state = initiate(np.array([10, 20, 0.5, 40]))
        assert state.mean.tolist() == [10, 20, 0.5, 40, 0, 0, 0, 0]

    def test_covariance_diagonal_positive(self):
        state = initiate(np.array([0, 0, 1, 5]))
        assert np.all(np.diag(state.covariance) > 0)

    def test_deterministic(self):
        m = np.array([1, 2, 0.7, 9])
        a, b = initiate(m), initiate(m)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.covariance, b.covariance)


class TestPredict:
    def test_zero_velocity_keeps_position(self):
        state = initiate(np.array([4, 5, 1, 10]))
        assert np.array_equal(predict(state).mean[:4], state.mean[:4])

    def test_velocity_moves_position(self):
        state = KalmanState(
            np.array([0, 0, 1, 10, 2, 0, 0, 0], dtype=float), np.eye(8)
        )
        assert predict(state).mean[0] == 2.0

    def test_trace_strictly_increases(self):
        state = initiate(np.array([0, 0, 1, 10]))
        for _ in range(10):
            new = predict(state)
            assert np.trace(new.covariance) > np.trace(state.covariance)
            state = new


class TestUpdate:
    def test_zero_innovation_keeps_mean(self):
        state = predict(initiate(np.array([3, 4, 1, 8])))
        measured = state.mean[:4].copy()
        assert np.array_equal(update(state, measured).mean, state.mean)

    def test_position_trace_does_not_increase(self):
        state = predict(initiate(np.array([3, 4, 1, 8])))
        new = update(state, np.array([3.5, 4.5, 1.1, 8.2]))
        assert np.trace(new.covariance[:4, :4]) <= np.trace(state.covariance[:4, :4])

    def test_halfway_case_prior_var_one_obs_var_one(self):
        # h = 20 makes the cx observation variance exactly 1
        state = KalmanState(np.array([0, 0, 1, 20, 0, 0, 0, 0], dtype=float), np.eye(8))
        new = update(state, np.array([2.0, 0.0, 1.0, 20.0]))
        assert new.mean[0] == pytest.approx(1.0, abs=1e-12)

    def test_matrix_path_matches_scalar_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            m0 = np.array(
                [rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(0.3, 3), rng.uniform(5, 60)]
            )
            state = initiate(m0)
            for _ in range(int(rng.integers(1, 4))):
                state = predict(state)
            offset = rng.normal(0, 1, size=4)
            measured = state.mean[:4] + offset
            if measured[2] <= 0 or measured[3] <= 0:
                continue
            obs = observation_vars(state.mean[3])
            new = update(state, measured)
            for j in range(4):
                pos, vel = scalar_posterior(
                    state.mean[j],
                    state.covariance[j, j],
                    state.covariance[j + 4, j],
                    state.mean[j + 4],
                    obs[j],
                    measured[j],
                )
                assert new.mean[j] == pytest.approx(pos, abs=1e-12)
                assert new.mean[j + 4] == pytest.approx(vel, abs=1e-12)


class TestGating:
    def test_zero_at_projected_mean(self):
        state = predict(initiate(np.array([3, 4, 1, 8])))
        assert gating_distance(state, state.mean[:4]) == pytest.approx(0.0, abs=1e-12)

    def test_scalar_quadratic_form(self):
        # prior var 3 plus observation var 1 (h = 20) gives S = 4; offset 2 -> 1
        cov = np.eye(8)
        cov[0, 0] = 3.0
        state = KalmanState(np.array([0, 0, 1, 20, 0, 0, 0, 0], dtype=float), cov)
        d = gating_distance(state, np.array([2.0, 0.0, 1.0, 20.0]))
        assert d == pytest.approx(1.0, abs=1e-12)

    def test_symmetric_offsets(self):
        state = predict(initiate(np.array([10, 10, 1, 12])))
        plus = state.mean[:4] + np.array([1.5, -0.5, 0.05, 2.0])
        minus = state.mean[:4] - np.array([1.5, -0.5, 0.05, 2.0])
        assert gating_distance(state, plus) == pytest.approx(gating_distance(state, minus))

    def test_matches_diagonal_oracle(self):
        # diagonal covariance decouples the quadratic form into a plain sum
        diag = np.array([4.0, 9.0, 0.25, 16.0, 1, 1, 1, 1])
        state = KalmanState(np.array([0, 0, 1, 20, 0, 0, 0, 0], dtype=float), np.diag(diag))
        y = np.array([2.0, -3.0, 0.3, 8.0])
        obs = observation_vars(20.0)
        expected = float(np.sum(y**2 / (diag[:4] + obs)))
        m = state.mean[:4] + y
        assert gating_distance(state, m) == pytest.approx(expected, abs=1e-12)


def random_walk_states(n_steps, seed):
    rng = np.random.default_rng(seed)
    state = initiate(
        np.array([rng.uniform(0, 100), rng.uniform(0, 100), rng.uniform(0.5, 2), rng.uniform(10, 50)])
    )
    for _ in range(n_steps):
        if rng.random() < 0.5:
            state = predict(state)
        else:
            measured = state.mean[:4] + rng.normal(0, 2, size=4)
            measured[2] = max(measured[2], 0.05)
            measured[3] = max(measured[3], 1.0)
            state = update(state, measured)
        yield state


class TestNumericalHealth:
    def test_symmetry_and_psd_over_random_steps(self):
        for state in random_walk_states(2000, seed=123):
            cov = state.covariance
            assert np.max(np.abs(cov - cov.T)) <= 1e-9
            assert np.linalg.eigvalsh(cov).min() >= -1e-9

    def test_stationary_target_convergence(self):
        m = np.array([50.0, 40.0, 1.0, 30.0])
        state = initiate(m)
        previous_trace = None
        converged = False
        for i in range(200):
            state = update(predict(state), m)
            trace = float(np.trace(state.covariance[:4, :4]))
            if previous_trace is not None and abs(trace - previous_trace) / trace < 1e-6:
                converged = True
                break
            previous_trace = trace
        assert converged
        assert np.allclose(state.mean[:4], m, rtol=0, atol=1e-6)
