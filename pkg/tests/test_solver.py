"""Welfare solver: analytic optima, optimality certificates, and configs."""

import numpy as np
import pytest

from bicrit import (
    CostFunction,
    InverseDemand,
    MarketInstance,
    SolverConfig,
    SolverError,
    best_response,
    evaluate,
    solve_constrained_welfare,
    solve_welfare,
)
from bicrit.oracle import oracle_min_split_cost
from bicrit.solver import _build_participants, _FlowProgram, projected_gradient_norm

from conftest import random_unit_demand_instance, random_multi_minded_instance


class TestAnalyticFixtures:
    def test_balanced_quadratic(self, single_good_instance):
        opt = solve_welfare(single_good_instance)
        assert opt.demand["b1"] == pytest.approx(0.5, abs=1e-6)
        assert opt.prices["g1"] == pytest.approx(0.5, abs=1e-6)
        assert opt.sw == pytest.approx(0.25, abs=1e-6)

    def test_near_flat_marginal(self, light_cost_instance):
        opt = solve_welfare(light_cost_instance)
        assert opt.demand["b1"] == pytest.approx(1.0 / 1.01, abs=1e-6)
        assert opt.prices["g1"] == pytest.approx(0.01 / 1.01, abs=1e-6)
        assert opt.sw == pytest.approx(0.5 / 1.01, abs=1e-6)

    def test_twin_goods_split(self, twin_goods_instance):
        opt = solve_welfare(twin_goods_instance)
        assert opt.demand["b1"] == pytest.approx(2.0 / 3.0, abs=1e-6)
        assert opt.allocation["g1"] == pytest.approx(1.0 / 3.0, abs=1e-6)
        assert opt.allocation["g2"] == pytest.approx(1.0 / 3.0, abs=1e-6)
        assert opt.prices["g1"] == pytest.approx(1.0 / 3.0, abs=1e-6)
        assert opt.sw == pytest.approx(1.0 / 3.0, abs=1e-6)

    def test_prices_equal_marginal_costs_exactly(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            inst = random_unit_demand_instance(rng, alpha=0.25)
            opt = solve_welfare(inst)
            for g, cost in inst.goods:
                assert opt.prices[g] == cost.marginal(opt.allocation[g])

    def test_reevaluation_reproduces_optimum(self, twin_goods_instance):
        opt = solve_welfare(twin_goods_instance)
        sol = evaluate(twin_goods_instance, opt.prices)
        assert sol.sw == pytest.approx(opt.sw, abs=1e-8)
        assert sol.demand["b1"] == pytest.approx(opt.demand["b1"], abs=1e-6)


class TestOptimalityCertificates:
    @pytest.mark.parametrize("alpha", [0.0, 0.5])
    def test_first_order_condition(self, alpha):
        rng = np.random.default_rng(19)
        for _ in range(8):
            inst = random_unit_demand_instance(rng, alpha=alpha)
            opt = solve_welfare(inst)
            splits = []
            for t in inst.buyer_types:
                splits.append(
                    np.array([opt.split.get((t.type_id, b), 0.0) for b in t.bundles])
                )
            norm = projected_gradient_norm(inst, splits)
            assert norm <= 1e-6 * (1.0 + abs(opt.sw))

    def test_cg_objective_is_monotone(self, twin_goods_instance):
        from bicrit.solver import _solve_flow

        cfg = SolverConfig(method="cg", tol=1e-7)
        result = _solve_flow(
            _build_participants(twin_goods_instance),
            twin_goods_instance.cost_functions,
            cfg,
        )
        history = np.array(result.history)
        assert np.all(np.diff(history) >= -1e-12)
        assert result.objective == pytest.approx(1.0 / 3.0, abs=1e-5)

    def test_diminishing_step_rule_also_converges(self, single_good_instance):
        cfg = SolverConfig(method="cg", step_rule="diminishing", tol=1e-7)
        opt = solve_welfare(single_good_instance, cfg)
        assert opt.sw == pytest.approx(0.25, abs=1e-5)

    def test_multi_minded_instances_certify(self):
        rng = np.random.default_rng(71)
        for ratio in (1, 2, 4):
            inst = random_multi_minded_instance(rng, alpha=0.5, size_ratio=ratio)
            opt = solve_welfare(inst)
            assert opt.sw > 0.0

    def test_nonconvergence_carries_best_iterate(self, twin_goods_instance):
        cfg = SolverConfig(method="cg", tol=1e-14, max_iters=3)
        with pytest.raises(SolverError) as err:
            solve_welfare(twin_goods_instance, cfg)
        assert err.value.best_splits is not None
        assert err.value.residual > 0


class TestConstrainedWelfare:
    def test_zero_demand_costs_nothing(self, twin_goods_instance):
        y = solve_constrained_welfare(twin_goods_instance, {"b1": 0.0})
        assert y == {"g1": 0.0, "g2": 0.0}

    def test_single_bundle_is_forced(self, linear_demand):
        inst = MarketInstance.create(
            [("g1", CostFunction.power(1.0, 1.0)), ("g2", CostFunction.power(1.0, 1.0))],
            [("b1", [["g1", "g2"]], linear_demand)],
        )
        y = solve_constrained_welfare(inst, {"b1": 0.4})
        assert y["g1"] == pytest.approx(0.4)
        assert y["g2"] == pytest.approx(0.4)

    def test_shared_goods_match_enumeration(self, linear_demand):
        inst = MarketInstance.create(
            [
                ("g1", CostFunction.power(0.8, 1.0)),
                ("g2", CostFunction.power(1.1, 2.0)),
                ("g3", CostFunction.power(1.5, 1.0)),
            ],
            [
                ("b1", [["g1"], ["g2"]], linear_demand),
                ("b2", [["g2"], ["g3"]], linear_demand),
                ("b3", [["g1"], ["g3"]], linear_demand),
            ],
        )
        demand = {"b1": 0.7, "b2": 0.5, "b3": 0.6}
        y = solve_constrained_welfare(inst, demand)
        cost = inst.total_cost([y[g] for g in inst.good_ids])
        # Free prices let every bundle compete, which zero prices replicate.
        reference = oracle_min_split_cost(
            inst, {g: 0.0 for g in inst.good_ids}, demand, levels=60
        )
        assert cost <= reference + 1e-9
        assert cost >= reference - 1e-3


class TestConfig:
    def test_bad_tolerance_rejected(self):
        with pytest.raises(ValueError):
            SolverConfig(tol=0.0)

    def test_bad_method_rejected(self):
        with pytest.raises(ValueError):
            SolverConfig(method="simplex")

    def test_bad_iteration_cap_rejected(self):
        with pytest.raises(ValueError):
            SolverConfig(max_iters=0)


class TestDualGap:
    def test_gap_bounds_true_suboptimality(self, twin_goods_instance):
        program = _FlowProgram(
            _build_participants(twin_goods_instance),
            twin_goods_instance.cost_functions,
        )
        z_opt = np.array([1.0 / 3.0, 1.0 / 3.0])
        f_opt = program.objective(z_opt)
        for z in (np.array([0.0, 0.0]), np.array([0.5, 0.1]), np.array([0.2, 0.2])):
            gap = program.dual_gap(z)
            assert f_opt - program.objective(z) <= gap + 1e-12
