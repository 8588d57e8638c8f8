import numpy as np
import pytest

from wsropt.channel import NetworkInstance
from wsropt.fplinq import FpState, fplinq_solve, fplinq_step
from wsropt.interference import affine_model
from wsropt.solvers import wsr


def fixture_k2():
    return NetworkInstance(gains=np.array([[1.0, 0.5], [0.2, 1.0]]),
                           weights=np.ones(2), p_max=1.0, noise=0.1)


def reference_step(inst, w, p):
    """Straightforward scalar re-implementation of the block update."""
    K = len(p)
    G = inst.gains
    gamma = np.empty(K)
    y = np.empty(K)
    for i in range(K):
        interf = sum(G[i, j] * p[j] for j in range(K) if j != i) + inst.noise
        gamma[i] = G[i, i] * p[i] / interf
        y[i] = np.sqrt(w[i] * (1 + gamma[i]) * G[i, i] * p[i]) / (
            sum(G[i, j] * p[j] for j in range(K)) + inst.noise)
    p_new = np.empty(K)
    for i in range(K):
        denom = sum(y[j] ** 2 * G[j, i] for j in range(K)) ** 2
        p_new[i] = min(inst.p_max,
                       y[i] ** 2 * w[i] * (1 + gamma[i]) * G[i, i] / denom)
    return gamma, y, p_new


class TestStep:
    def test_matches_scalar_reference(self):
        inst = fixture_k2()
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = rng.uniform(0.05, 1.0, 2)
            state = fplinq_step(inst, inst.weights, FpState(p, np.zeros(2),
                                                            np.zeros(2)))
            gamma, y, p_new = reference_step(inst, inst.weights, p)
            assert np.allclose(state.gamma, gamma)
            assert np.allclose(state.y, y)
            assert np.allclose(state.p, p_new)

    def test_power_stays_in_box(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            K = int(rng.integers(2, 8))
            gains = rng.uniform(0.01, 2.0, (K, K))
            inst = NetworkInstance(gains=gains, weights=np.ones(K), noise=0.1)
            state = FpState(rng.uniform(0.05, 1.0, K), np.zeros(K), np.zeros(K))
            for _ in range(10):
                state = fplinq_step(inst, inst.weights, state)
                assert np.all(state.p > 0) and np.all(state.p <= inst.p_max)
                assert np.all(np.isfinite(state.p))

    def test_zero_weight_link_saturates_without_nan(self):
        inst = fixture_k2()
        w = np.array([1.0, 0.0])
        state = FpState(np.ones(2), np.zeros(2), np.zeros(2))
        state = fplinq_step(inst, w, state)
        # y_1 = 0, so the denominator for any link it dominates may vanish;
        # the update must stay finite and inside the box
        assert np.all(np.isfinite(state.p))
        assert np.all(state.p <= inst.p_max)


class TestSolve:
    def test_trace_and_history_lengths(self):
        res = fplinq_solve(fixture_k2(), np.ones(2), iters=25)
        assert len(res.objective_trace) == 26
        assert len(res.p_history) == 26
        assert res.objective_trace[0][0] == 0
        assert res.converged

    def test_rejects_nonpositive_iters(self):
        with pytest.raises(ValueError):
            fplinq_solve(fixture_k2(), np.ones(2), iters=0)

    def test_wsr_ascends(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            K = int(rng.integers(2, 6))
            gains = rng.uniform(0.01, 1.0, (K, K))
            np.fill_diagonal(gains, rng.uniform(1.0, 5.0, K))
            inst = NetworkInstance(gains=gains, weights=np.ones(K), noise=0.1)
            w = rng.uniform(0.1, 1.0, K)
            vals = [v for _, v in fplinq_solve(inst, w, iters=50).objective_trace]
            assert np.all(np.diff(vals) > -1e-9)

    def test_near_optimal_on_k2_grid(self):
        inst = fixture_k2()
        model = affine_model()
        res = fplinq_solve(inst, inst.weights, iters=200)
        grid = np.linspace(1e-3, 1.0, 200)
        P0, P1 = np.meshgrid(grid, grid, indexing="ij")
        g = inst.gains
        i0 = g[0, 1] * P1 + inst.noise
        i1 = g[1, 0] * P0 + inst.noise
        best = np.max(np.log(1 + g[0, 0] * P0 / i0)
                      + np.log(1 + g[1, 1] * P1 / i1))
        achieved = wsr(inst, model, res.p_final, inst.weights)
        assert achieved >= 0.99 * best

    def test_k1_full_power(self):
        inst = NetworkInstance(gains=np.array([[4.0]]), weights=np.ones(1),
                               noise=0.1)
        res = fplinq_solve(inst, np.ones(1), iters=10)
        assert res.p_final[0] == pytest.approx(1.0)
