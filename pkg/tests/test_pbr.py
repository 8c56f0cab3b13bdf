import numpy as np
import pytest

from bellkit.bell import chsh_optimal_settings
from bellkit.pbr import (BehaviorDistribution, LhvModel, SupportViolationError,
                         closest_lhv, kl_divergence, lhv_vertices,
                         pbr_p_value, project_no_signaling)
from bellkit.qstate import bell_diagonal
from bellkit.trial_sim import DetectionModel, behavior_from_counts, simulate_trials

UNIFORM_XY = np.full((2, 2), 0.25)


def uniform_behavior(k=2):
    return BehaviorDistribution(p=np.full((k, k, 2, 2), 1.0 / k ** 2),
                                p_xy=UNIFORM_XY,
                                outcomes=(-1, 1) if k == 2 else (0, 1, "u"))


def pr_box():
    p = np.zeros((2, 2, 2, 2))
    for x in (0, 1):
        for y in (0, 1):
            for a in (0, 1):
                for b in (0, 1):
                    if (a ^ b) == (x & y):
                        p[a, b, x, y] = 0.5
    return BehaviorDistribution(p=p, p_xy=UNIFORM_XY)


def quantum_log(n_trials, seed, s_target=2.5):
    v = s_target / (2 * np.sqrt(2))
    w = np.full(4, (1 - v) / 4)
    w[2] += v
    rho = bell_diagonal(w)
    res = simulate_trials(rho, chsh_optimal_settings(), DetectionModel(),
                          UNIFORM_XY, n_trials, seed=seed, keep_log=True)
    return res


class TestKlDivergence:
    def test_identical_is_zero(self):
        beh = uniform_behavior()
        assert kl_divergence(beh, beh) == 0.0

    def test_point_mass_vs_halves(self):
        # one bit per setting when a two-way split collapses to a point
        p = np.zeros((2, 2, 2, 2))
        p[0, 0] = 1.0
        f = BehaviorDistribution(p=p, p_xy=UNIFORM_XY)
        q = np.zeros((2, 2, 2, 2))
        q[0, 0] = q[1, 1] = 0.5
        ref = BehaviorDistribution(p=q, p_xy=UNIFORM_XY)
        assert kl_divergence(f, ref) == pytest.approx(1.0)

    def test_frozen_biased_cell(self):
        # (0.75, 0.25) vs (0.5, 0.5): 0.75 log2 1.5 + 0.25 log2 0.5
        p = np.zeros((2, 2, 2, 2))
        p[0, 0] = 0.75
        p[1, 1] = 0.25
        f = BehaviorDistribution(p=p, p_xy=UNIFORM_XY)
        q = np.zeros((2, 2, 2, 2))
        q[0, 0] = q[1, 1] = 0.5
        ref = BehaviorDistribution(p=q, p_xy=UNIFORM_XY)
        assert kl_divergence(f, ref) == pytest.approx(0.18872, abs=1e-5)

    def test_support_violation(self):
        f = uniform_behavior()
        q = np.zeros((2, 2, 2, 2))
        q[0, 0] = 1.0
        ref = BehaviorDistribution(p=q, p_xy=UNIFORM_XY)
        with pytest.raises(SupportViolationError):
            kl_divergence(f, ref)


class TestVertices:
    def test_counts(self):
        assert lhv_vertices(2).shape == (16, 2, 2, 2, 2)
        assert lhv_vertices(3).shape == (81, 3, 3, 2, 2)

    def test_vertices_are_no_signaling(self):
        for v in lhv_vertices(2):
            beh = BehaviorDistribution(p=v, p_xy=UNIFORM_XY)
            assert beh.no_signaling_residual() < 1e-12

    def test_vertex_bell_values_classical(self):
        for v in lhv_vertices(2):
            beh = BehaviorDistribution(p=v, p_xy=UNIFORM_XY)
            assert abs(beh.s_value()) <= 2.0 + 1e-12


class TestProjection:
    def test_fixed_point_on_no_signaling_input(self):
        beh = uniform_behavior()
        q, info = project_no_signaling(beh, full_output=True)
        assert info["objective"] < 1e-9
        assert np.allclose(q.p, beh.p, atol=1e-5)

    def test_residual_small(self):
        rng = np.random.default_rng(1)
        for _ in range(5):
            raw = rng.dirichlet(np.ones(4), size=4).T.reshape(2, 2, 2, 2)
            f = BehaviorDistribution(p=raw, p_xy=UNIFORM_XY)
            q = project_no_signaling(f)
            assert q.no_signaling_residual() < 1e-9

    def test_matches_cvxpy_oracle(self):
        cp = pytest.importorskip("cvxpy")
        rng = np.random.default_rng(4)
        raw = rng.dirichlet(np.ones(4), size=4).T.reshape(2, 2, 2, 2)
        f = BehaviorDistribution(p=raw, p_xy=UNIFORM_XY)
        q = project_no_signaling(f)

        qv = cp.Variable(16, nonneg=True)

        def idx(a, b, x, y):
            return int(np.ravel_multi_index((a, b, x, y), (2, 2, 2, 2)))

        coef = (f.p * f.p_xy).ravel()
        obj = -cp.sum(cp.multiply(coef, cp.log(qv)))
        cons = []
        for x in (0, 1):
            for y in (0, 1):
                cons.append(cp.sum(qv[[idx(a, b, x, y)
                                       for a in (0, 1) for b in (0, 1)]]) == 1)
        for a in (0, 1):  # A marginal independent of y
            for x in (0, 1):
                cons.append(cp.sum(qv[[idx(a, b, x, 0) for b in (0, 1)]])
                            == cp.sum(qv[[idx(a, b, x, 1) for b in (0, 1)]]))
        for b in (0, 1):  # B marginal independent of x
            for y in (0, 1):
                cons.append(cp.sum(qv[[idx(a, b, 0, y) for a in (0, 1)]])
                            == cp.sum(qv[[idx(a, b, 1, y) for a in (0, 1)]]))
        prob = cp.Problem(cp.Minimize(obj), cons)
        prob.solve(solver=cp.SCS, eps=1e-10)
        oracle = np.asarray(qv.value).reshape(2, 2, 2, 2)
        assert np.max(np.abs(q.p - oracle)) < 1e-5

    def test_unbalanced_marginal_equalized(self):
        p = np.full((2, 2, 2, 2), 0.25)
        p[:, :, 0, 0] = [[0.3, 0.3], [0.2, 0.2]]
        p[:, :, 0, 1] = [[0.2, 0.2], [0.3, 0.3]]
        f = BehaviorDistribution(p=p, p_xy=UNIFORM_XY)
        q = project_no_signaling(f)
        marg = q.p.sum(axis=1)
        assert np.allclose(marg[:, 0, 0], marg[:, 0, 1], atol=1e-9)


class TestClosestLhv:
    def test_local_behavior_zero_divergence(self):
        beh = uniform_behavior()
        model, kl = closest_lhv(beh)
        assert kl == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(model.behavior().p, beh.p, atol=1e-5)

    def test_pr_box_value(self):
        _, kl = closest_lhv(pr_box())
        assert kl == pytest.approx(np.log2(4.0 / 3.0), abs=1e-4)

    def test_tsirelson_point_positive(self):
        hi, lo = (2 + np.sqrt(2)) / 8, (2 - np.sqrt(2)) / 8
        p = np.empty((2, 2, 2, 2))
        for x in (0, 1):
            for y in (0, 1):
                agree = hi if (x, y) != (1, 1) else lo
                disagree = lo if (x, y) != (1, 1) else hi
                p[:, :, x, y] = [[agree, disagree], [disagree, agree]]
        beh = BehaviorDistribution(p=p, p_xy=UNIFORM_XY)
        _, kl = closest_lhv(beh)
        assert kl > 0.01

    def test_output_is_classical(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            raw = rng.dirichlet(np.ones(4), size=4).T.reshape(2, 2, 2, 2)
            f = BehaviorDistribution(p=raw, p_xy=UNIFORM_XY)
            model, _ = closest_lhv(project_no_signaling(f), restarts=2)
            out = model.behavior()
            assert out.no_signaling_residual() < 1e-9
            assert abs(out.s_value()) <= 2.0 + 1e-8

    def test_lhv_model_validation(self):
        with pytest.raises(ValueError):
            LhvModel(weights=np.ones(16))  # unnormalized
        with pytest.raises(ValueError):
            LhvModel(weights=np.ones(5) / 5)


class TestPValue:
    def test_lhv_data_gives_one(self):
        rng = np.random.default_rng(0)
        log = [(int(x), int(y), 1, 1)
               for x, y in rng.integers(0, 2, size=(10000, 2))]
        result = pbr_p_value(log, block=2500)
        assert result.p_value == 1.0

    def test_uninformed_single_block(self):
        log = quantum_log(3000, seed=1).log
        result = pbr_p_value(log, block=5000)
        assert result.blocks == 1
        assert result.p_value == 1.0

    def test_quantum_data_rejects(self):
        result = pbr_p_value(quantum_log(40000, seed=2).log, block=10000)
        assert result.p_value < 1e-20
        assert result.final_kl_lhv > 0.01

    def test_monotone_after_first_block(self):
        log = quantum_log(50000, seed=3).log
        prior = 0.0
        for n in (20000, 30000, 40000, 50000):
            r = pbr_p_value(log[:n], block=10000)
            assert r.log10_p <= prior + 1e-9
            prior = r.log10_p

    def test_ternary_log(self):
        rho = bell_diagonal([0.05, 0.05, 0.85, 0.05])
        det = DetectionModel(eta_a=0.95, eta_b=0.95, mode="post-selection")
        res = simulate_trials(rho, chsh_optimal_settings(), det,
                              UNIFORM_XY, 20000, seed=4, keep_log=True)
        result = pbr_p_value(res.log, block=10000)
        assert 0.0 < result.p_value < 1.0 + 1e-12
        assert result.n_trials == 20000

    def test_empty_log_rejected(self):
        with pytest.raises(ValueError):
            pbr_p_value([])

    def test_result_json_fields(self):
        import json
        result = pbr_p_value(quantum_log(5000, seed=5).log, block=2500)
        payload = json.loads(result.to_json())
        assert set(payload) == {"n_trials", "log10_p", "blocks",
                                "final_kl_ns", "final_kl_lhv"}


class TestBehaviorType:
    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            BehaviorDistribution(p=np.full((2, 2, 2, 2), 0.3), p_xy=UNIFORM_XY)

    def test_rejects_bad_setting_weights(self):
        with pytest.raises(ValueError):
            BehaviorDistribution(p=np.full((2, 2, 2, 2), 0.25),
                                 p_xy=np.full((2, 2), 0.3))

    def test_s_value_of_simulated_phi_plus(self):
        rho = bell_diagonal([0, 0, 1, 0])
        res = simulate_trials(rho, chsh_optimal_settings(), DetectionModel(),
                              UNIFORM_XY, 10 ** 5, seed=6)
        beh = behavior_from_counts(res.table)
        assert beh.s_value() == pytest.approx(2 * np.sqrt(2), abs=0.05)
