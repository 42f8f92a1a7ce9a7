import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cellfree.channel import ScenarioConfig, TopologyConfig, draw_realization
from cellfree.clustering import ClusterConfig, enumerate_configs
from cellfree.combining import combiner_gains
from cellfree.optimize import (
    BeamformingSolution,
    BudgetExceeded,
    ProblemP1,
    evaluate_solution,
    model_for,
    project_capped_simplex,
    project_weights,
    solve_exhaustive,
    solve_joint,
    solve_projected_gradient,
)
from cellfree.sinr import dynamic_sinr, sic_order_users, sic_sinr
from cellfree.units import dbm_to_watt

P20 = float(dbm_to_watt(20.0))


def scenario(m, k):
    return ScenarioConfig(TopologyConfig(m, k), pilot_power=P20, user_power=P20)


def problem(m, k, seed, clusters, objective="sum_rate", **kw):
    return ProblemP1(draw_realization(scenario(m, k), seed), tuple(clusters), objective, **kw)


def c1_oracle(real, cluster, gains, w, p_s):
    """Slacks sum_m (w_{delta}^2 - sum_{i=delta+1}^{l} w_i^2) gbar_{m,l} - P_s in decoding order."""
    order = sic_order_users(real, cluster, gains)
    g = gains.gains
    a = list(cluster.assignment)
    out = []
    for pos in range(1, real.num_users):
        ul = order[pos]
        for delta in range(pos):
            s = 0.0
            for m in range(real.num_aps):
                gbar = 2 * real.user_powers[ul] * abs(g[m, ul]) * abs(real.estimated_channels[m, ul]) ** 2 / real.noise_var[m]
                coef = w[order[delta], a[m]] ** 2 - sum(w[order[i], a[m]] ** 2 for i in range(delta + 1, pos + 1))
                s += coef * gbar
            out.append(s - p_s)
    return np.array(out)


class TestEvaluate:
    def test_single_user(self):
        pr = problem(3, 1, 0, [ClusterConfig((0, 1, 1))])
        sol = evaluate_solution(pr, pr.candidate_clusters[0], [[1.0, 0.0]])
        assert sol.c1_slacks.size == 0 and sol.feasible
        gains = combiner_gains(pr.realization, pr.candidate_clusters[0], "wiener_hopf")
        snr = dynamic_sinr(pr.realization, pr.candidate_clusters[0], [1.0, 0.0], gains, 0, with_terms=False).value
        assert sol.objective_value == pytest.approx(math.log2(1 + snr), rel=1e-12)

    def test_three_users_three_slacks(self):
        pr = problem(4, 3, 1, [ClusterConfig((0, 1, 0, 1))])
        sol = evaluate_solution(pr, pr.candidate_clusters[0], np.full((3, 2), 0.5))
        assert sol.c1_slacks.shape == (3,)

    @pytest.mark.parametrize("objective", ["sum_rate", "max_min_rate"])
    def test_end_to_end_recompute(self, objective):
        r = np.random.default_rng(3)
        for seed in range(10):
            clusters = enumerate_configs(5, 2)
            cluster = clusters[seed % len(clusters)]
            pr = problem(5, 3, seed, [cluster], objective, sic_sensitivity=1e-9)
            w = project_weights(r.random((3, 2)))
            sol = evaluate_solution(pr, cluster, w)
            real = pr.realization
            gains = combiner_gains(real, cluster, "wiener_hopf")
            order = sic_order_users(real, cluster, gains)
            rates = [math.log2(1 + sic_sinr(real, cluster, w, gains, order, k, with_terms=False).value)
                     for k in range(3)]
            ref = sum(rates) if objective == "sum_rate" else min(rates)
            assert sol.objective_value == pytest.approx(ref, rel=1e-10)
            assert np.allclose(sol.c1_slacks, c1_oracle(real, cluster, gains, w, 1e-9), rtol=1e-10, atol=1e-15)
            assert sol.feasible == bool(np.all(sol.c1_slacks >= 0))

    def test_no_sic_has_no_constraints(self):
        pr = problem(4, 3, 2, [ClusterConfig((0, 1, 0, 1))], sic=False)
        assert evaluate_solution(pr, pr.candidate_clusters[0], np.full((3, 2), 0.5)).c1_slacks.size == 0

    def test_rejects_infeasible_box(self):
        pr = problem(3, 2, 0, [ClusterConfig((0, 1, 1))])
        with pytest.raises(ValueError):
            evaluate_solution(pr, pr.candidate_clusters[0], [[1.0, 1.0], [0.0, 0.0]])
        with pytest.raises(ValueError):
            evaluate_solution(pr, pr.candidate_clusters[0], [[1.0, 0.0]])

    def test_deterministic(self):
        pr = problem(4, 2, 5, [ClusterConfig((0, 0, 1, 1))])
        w = [[0.3, 0.8], [0.6, 0.1]]
        a = evaluate_solution(pr, pr.candidate_clusters[0], w)
        b = evaluate_solution(pr, pr.candidate_clusters[0], w)
        assert a.objective_value == b.objective_value and np.array_equal(a.c1_slacks, b.c1_slacks)

    def test_max_min_below_mean(self):
        r = np.random.default_rng(4)
        for seed in range(20):
            cluster = ClusterConfig((0, 1, 0, 1))
            w = project_weights(r.random((3, 2)))
            s = evaluate_solution(problem(4, 3, seed, [cluster]), cluster, w)
            m = evaluate_solution(problem(4, 3, seed, [cluster], "max_min_rate"), cluster, w)
            assert m.objective_value <= s.objective_value / 3 + 1e-12


class TestProjection:
    @settings(max_examples=200)
    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=6))
    def test_capped_simplex_is_nearest_point(self, row):
        v = np.array(row)
        p = project_capped_simplex(v[None])[0]
        assert np.all(p >= 0) and p.sum() <= 1 + 1e-12
        # bisection on the shift theta gives the reference projection
        if np.maximum(v, 0).sum() <= 1:
            ref = np.maximum(v, 0)
        else:
            lo, hi = 0.0, float(np.max(v))
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                lo, hi = (mid, hi) if np.maximum(v - mid, 0).sum() > 1 else (lo, mid)
            ref = np.maximum(v - hi, 0)
        assert np.allclose(p, ref, atol=1e-9)

    def test_project_weights_box_and_ball(self):
        w = project_weights(np.array([[1.5, -0.2, 0.9], [0.1, 0.2, 0.3]]))
        assert np.all((w >= 0) & (w <= 1))
        assert np.all(np.sum(w * w, axis=1) <= 1 + 1e-12)
        assert np.allclose(w[1], [0.1, 0.2, 0.3])


class TestExhaustive:
    def test_one_dimensional_scan(self):
        cluster = ClusterConfig((0, 1))
        pr = problem(2, 1, 7, [cluster])
        sol = solve_exhaustive(pr, 11)
        gains = combiner_gains(pr.realization, cluster, "wiener_hopf")
        best = -np.inf
        for a, b in itertools.product(np.linspace(0, 1, 11), repeat=2):
            w = project_weights([[a, b]])[0]
            if w.sum() == 0:
                continue
            best = max(best, math.log2(1 + dynamic_sinr(pr.realization, cluster, w, gains, 0, with_terms=False).value))
        assert sol.objective_value == pytest.approx(best, rel=1e-12)

    def test_corner_count(self):
        pr = problem(4, 2, 0, [ClusterConfig((0, 0, 1, 1))])
        assert solve_exhaustive(pr, 2).info["evaluations"] == 2 ** 4

    def test_budget(self):
        pr = problem(4, 2, 0, [ClusterConfig((0, 0, 1, 1))])
        with pytest.raises(BudgetExceeded) as exc:
            solve_exhaustive(pr, 11, budget=1000)
        assert exc.value.required == 11 ** 4

    def test_grid_optimum_dominates_snapped_gradient(self):
        levels = np.linspace(0, 1, 5)
        for seed in range(10):
            cluster = enumerate_configs(4, 2)[seed % 7]
            pr = problem(4, 2, seed, [cluster])
            grid = solve_exhaustive(pr, 5)
            g = solve_projected_gradient(pr, cluster)
            snapped = project_weights(levels[np.abs(g.weights[..., None] - levels).argmin(axis=-1)])
            s = evaluate_solution(pr, cluster, snapped)
            if s.feasible:
                assert grid.feasible and grid.objective_value >= s.objective_value - 1e-12

    def test_continuous_solver_can_beat_coarse_grid(self):
        # off-grid optima exist, so grid=5 need not dominate projected gradient
        cluster = enumerate_configs(4, 2)[4]
        pr = problem(4, 2, 4, [cluster])
        g = solve_projected_gradient(pr, cluster)
        assert g.feasible and g.objective_value > solve_exhaustive(pr, 5).objective_value


TINY = [(2, 1, 2), (3, 1, 2), (2, 2, 1), (3, 2, 2), (4, 2, 2), (4, 4, 1), (3, 3, 1), (4, 1, 4), (4, 2, 2), (3, 2, 2)]


class TestGradient:
    def test_single_weight_is_one(self):
        pr = problem(3, 1, 0, [ClusterConfig((0, 0, 0))])
        sol = solve_projected_gradient(pr, pr.candidate_clusters[0])
        assert sol.weights == pytest.approx(np.ones((1, 1)))

    @pytest.mark.parametrize("i", range(10))
    def test_within_two_percent_of_grid(self, i):
        m, k, mt = TINY[i]
        clusters = enumerate_configs(m, mt)
        cluster = clusters[i % len(clusters)]
        pr = problem(m, k, 100 + i, [cluster])
        grid = solve_exhaustive(pr, 21)
        g = solve_projected_gradient(pr, cluster)
        assert g.feasible == grid.feasible
        assert g.objective_value >= 0.98 * grid.objective_value

    def test_solution_respects_box_and_ball(self):
        for seed in range(10):
            cluster = ClusterConfig((0, 1, 2, 0, 1))
            for obj in ("sum_rate", "max_min_rate"):
                sol = solve_projected_gradient(problem(5, 3, seed, [cluster], obj), cluster)
                assert np.all((sol.weights >= 0) & (sol.weights <= 1))
                assert np.all(np.sum(sol.weights ** 2, axis=1) <= 1 + 1e-12)
                if sol.feasible:
                    assert np.all(sol.c1_slacks >= -1e-9)

    @pytest.mark.parametrize("objective", ["sum_rate", "max_min_rate"])
    def test_doubled_sensitivity_never_helps(self, objective):
        for seed in range(50):
            cluster = enumerate_configs(4, 2)[seed % 7]
            base = problem(4, 2, seed, [cluster], objective)
            a = solve_projected_gradient(base, cluster)
            b = solve_projected_gradient(problem(4, 2, seed, [cluster], objective,
                                                 sic_sensitivity=2 * base.sic_sensitivity), cluster)
            if b.feasible:
                assert a.feasible
                assert b.objective_value <= a.objective_value + 1e-9

    def test_deterministic(self):
        cluster = ClusterConfig((0, 1, 0, 1))
        a = solve_projected_gradient(problem(4, 2, 3, [cluster]), cluster)
        b = solve_projected_gradient(problem(4, 2, 3, [cluster]), cluster)
        assert np.array_equal(a.weights, b.weights)


class TestJoint:
    def test_matches_brute_force_cluster_scan(self):
        for seed in range(5):
            clusters = enumerate_configs(4, 2)
            pr = problem(4, 2, seed, clusters)
            joint = solve_joint(pr)
            per = [solve_projected_gradient(pr, c) for c in clusters]
            vals = [s.objective_value if s.feasible else -np.inf for s in per]
            best = int(np.argmax(vals))
            assert joint.cluster == clusters[best]
            assert joint.objective_value == per[best].objective_value
            assert joint.info["per_cluster_objective"] == [s.objective_value for s in per]

    def test_single_candidate(self):
        cluster = ClusterConfig((0, 1, 1, 0))
        pr = problem(4, 2, 1, [cluster])
        assert np.array_equal(solve_joint(pr).weights, solve_projected_gradient(pr, cluster).weights)

    def test_static_is_single_config(self):
        clusters = enumerate_configs(3, 3)
        assert len(clusters) == 1
        assert solve_joint(problem(3, 2, 0, clusters)).cluster == ClusterConfig.singletons(3)

    def test_exhaustive_weight_solver(self):
        clusters = enumerate_configs(3, 2)
        pr = problem(3, 2, 2, clusters)
        joint = solve_joint(pr, "exhaustive", grid_points_per_weight=5)
        assert joint.objective_value == pytest.approx(solve_exhaustive(pr, 5).objective_value, rel=1e-12)

    def test_unknown_solver(self):
        with pytest.raises(ValueError):
            solve_joint(problem(2, 1, 0, [ClusterConfig((0, 1))]), "bisection")


def test_record_round_trip():
    cluster = ClusterConfig((0, 1, 0, 1))
    sol = solve_projected_gradient(problem(4, 3, 0, [cluster]), cluster)
    back = BeamformingSolution.from_record(sol.to_record())
    assert back.cluster == sol.cluster
    assert np.array_equal(back.weights, sol.weights)
    assert np.array_equal(back.per_user_rates, sol.per_user_rates)
    assert np.array_equal(back.c1_slacks, sol.c1_slacks)
    assert back.objective_value == sol.objective_value and back.feasible == sol.feasible
    assert back.to_record() == sol.to_record()


def test_problem_validation():
    real = draw_realization(scenario(2, 1), 0)
    with pytest.raises(ValueError):
        ProblemP1(real, (), "sum_rate")
    with pytest.raises(ValueError):
        ProblemP1(real, (ClusterConfig((0, 1)),), "max_rate")
    with pytest.raises(ValueError):
        ProblemP1(real, (ClusterConfig((0, 1)),), sic_sensitivity=0.0)


def test_model_matches_sic_sinr_for_all_users():
    cluster = ClusterConfig((0, 0, 1, 2, 2))
    pr = problem(5, 3, 9, [cluster])
    model = model_for(pr, cluster)
    w = np.array([[0.2, 0.5, 0.7], [0.9, 0.1, 0.3], [0.4, 0.4, 0.4]])
    ref = [sic_sinr(pr.realization, cluster, w, model.gains, model.order, k, with_terms=False).value for k in range(3)]
    assert np.allclose(model.sinr(w), ref, rtol=1e-10)
