"""Market model: best response, allocation, bookkeeping, and cost lemmas."""

import numpy as np
import pytest

from bicrit import (
    CostFunction,
    InverseDemand,
    MarketInstance,
    MarketValidationError,
    best_response,
    buyer_marginal_costs,
    evaluate,
    min_bundle_price,
    min_cost_allocation,
    solve_constrained_welfare,
)
from bicrit.market import argmin_bundles, split_kkt_violation
from bicrit.oracle import oracle_min_split_cost

from conftest import random_prices, random_unit_demand_instance


@pytest.fixture
def substitutes(linear_demand, quadratic_cost):
    return MarketInstance.create(
        [("g1", quadratic_cost), ("g2", quadratic_cost)],
        [("b1", [["g1"], ["g2"]], linear_demand)],
    )


class TestMinBundlePrice:
    def test_picks_cheaper_singleton(self, substitutes):
        q, bundle = min_bundle_price(substitutes, {"g1": 0.3, "g2": 0.5}, "b1")
        assert q == pytest.approx(0.3)
        assert bundle == ("g1",)

    def test_sums_pair_bundle(self, linear_demand, quadratic_cost):
        inst = MarketInstance.create(
            [("g1", quadratic_cost), ("g2", quadratic_cost)],
            [("b1", [["g1", "g2"]], linear_demand)],
        )
        q, bundle = min_bundle_price(inst, {"g1": 0.3, "g2": 0.5}, "b1")
        assert q == pytest.approx(0.8)
        assert bundle == ("g1", "g2")

    def test_tie_breaks_lexicographically(self, substitutes):
        q, bundle = min_bundle_price(substitutes, {"g1": 0.4, "g2": 0.4}, "b1")
        assert q == pytest.approx(0.4)
        assert bundle == ("g1",)


class TestBestResponse:
    def test_single_good(self, single_good_instance):
        assert best_response(single_good_instance, {"g1": 0.25})["b1"] == pytest.approx(0.75)

    def test_peak_price_kills_demand(self, single_good_instance):
        assert best_response(single_good_instance, {"g1": 1.0})["b1"] == 0.0

    def test_only_cheapest_substitute_matters(self, substitutes):
        x = best_response(substitutes, {"g1": 0.5, "g2": 0.9})
        assert x["b1"] == pytest.approx(0.5)


class TestMinCostAllocation:
    def test_symmetric_tie_splits_evenly(self, substitutes):
        x = {"b1": 1.0}
        split, y = min_cost_allocation(substitutes, {"g1": 0.4, "g2": 0.4}, x)
        assert y["g1"] == pytest.approx(0.5, abs=1e-9)
        assert y["g2"] == pytest.approx(0.5, abs=1e-9)

    def test_unique_argmin_takes_everything(self, substitutes):
        split, y = min_cost_allocation(substitutes, {"g1": 0.3, "g2": 0.4}, {"b1": 0.7})
        assert y == {"g1": 0.7, "g2": 0.0}
        assert split == {("b1", ("g1",)): 0.7}

    def test_shared_good_matches_enumeration_oracle(self, linear_demand):
        inst = MarketInstance.create(
            [
                ("g1", CostFunction.power(1.0, 1.0)),
                ("g2", CostFunction.power(0.7, 2.0)),
                ("g3", CostFunction.power(2.0, 1.0)),
            ],
            [
                ("b1", [["g1"], ["g2"]], linear_demand),
                ("b2", [["g2"], ["g3"]], linear_demand),
            ],
        )
        prices = {"g1": 0.35, "g2": 0.35, "g3": 0.35}
        x = best_response(inst, prices)
        split, y = min_cost_allocation(inst, prices, x)
        cost = inst.total_cost([y[g] for g in inst.good_ids])
        reference = oracle_min_split_cost(inst, prices, x, levels=100)
        assert cost <= reference + 1e-9
        assert cost >= reference - 1e-3


class TestEvaluate:
    def test_analytic_midpoint(self, single_good_instance):
        sol = evaluate(single_good_instance, {"g1": 0.5})
        assert sol.demand["b1"] == pytest.approx(0.5)
        assert sol.allocation["g1"] == pytest.approx(0.5)
        assert sol.sw == pytest.approx(0.25)
        assert sol.profit == pytest.approx(0.125)

    def test_peak_price_is_inert(self, single_good_instance):
        sol = evaluate(single_good_instance, {"g1": 1.0})
        assert sol.sw == 0.0
        assert sol.profit == 0.0

    def test_analytic_high_price(self, single_good_instance):
        sol = evaluate(single_good_instance, {"g1": 0.75})
        assert sol.demand["b1"] == pytest.approx(0.25)
        assert sol.sw == pytest.approx(0.1875)
        assert sol.profit == pytest.approx(0.15625)


class TestValidation:
    def test_unknown_good_in_bundle(self, linear_demand, quadratic_cost):
        with pytest.raises(MarketValidationError, match="unknown goods"):
            MarketInstance.create(
                [("g1", quadratic_cost)], [("b1", [["g1"], ["zzz"]], linear_demand)]
            )

    def test_uniform_peak_enforced(self, quadratic_cost):
        with pytest.raises(MarketValidationError, match="uniform"):
            MarketInstance.create(
                [("g1", quadratic_cost)],
                [
                    ("b1", [["g1"]], InverseDemand.linear(1.0, 1.0)),
                    ("b2", [["g1"]], InverseDemand.linear(0.9, 1.0)),
                ],
            )

    def test_all_problems_reported(self, quadratic_cost):
        with pytest.raises(MarketValidationError) as err:
            MarketInstance.create(
                [("g1", quadratic_cost)],
                [
                    ("b1", [["nope"]], InverseDemand.linear(1.0, 1.0)),
                    ("b2", [["g1"]], InverseDemand.linear(0.5, 1.0)),
                ],
            )
        assert len(err.value.problems) == 2

    def test_bundle_size_ratio(self, linear_demand, quadratic_cost):
        inst = MarketInstance.create(
            [("g1", quadratic_cost), ("g2", quadratic_cost)],
            [("b1", [["g1"], ["g1", "g2"]], linear_demand)],
        )
        assert inst.max_bundle_size == 2
        assert inst.min_bundle_size == 1
        assert inst.bundle_size_ratio == 2.0


class TestSolutionIdentities:
    def test_income_identity_random(self):
        # Income booked on goods equals income booked on buyers.
        rng = np.random.default_rng(43)
        for _ in range(20):
            inst = random_unit_demand_instance(rng, alpha=0.0)
            sol = evaluate(inst, random_prices(rng, inst))
            income_goods = sum(sol.prices[g] * sol.allocation[g] for g in inst.good_ids)
            income_buyers = sum(
                sol.paid[t.type_id] * sol.demand[t.type_id] for t in inst.buyer_types
            )
            assert income_goods == pytest.approx(income_buyers, abs=1e-9)
            lam_income = sum(
                t.demand.eval(sol.demand[t.type_id]) * sol.demand[t.type_id]
                for t in inst.buyer_types
            )
            assert income_goods == pytest.approx(lam_income, abs=1e-6)

    def test_flow_conservation_and_kkt(self):
        rng = np.random.default_rng(47)
        for _ in range(10):
            inst = random_unit_demand_instance(rng, alpha=0.25)
            sol = evaluate(inst, random_prices(rng, inst))
            for t in inst.buyer_types:
                routed = sum(
                    v for (tid, _), v in sol.split.items() if tid == t.type_id
                )
                assert routed == pytest.approx(sol.demand[t.type_id], abs=1e-9)
            per_good = {g: 0.0 for g in inst.good_ids}
            for (tid, bundle), v in sol.split.items():
                for g in bundle:
                    per_good[g] += v
            for g in inst.good_ids:
                assert per_good[g] == pytest.approx(sol.allocation[g], abs=1e-9)
            # Cost minimality holds within the argmin-priced bundles the
            # envy-free response is allowed to use.
            admissible = argmin_bundles(inst, sol.prices)
            assert split_kkt_violation(inst, sol.allocation, sol.split, admissible) <= 1e-6


def _constrained(inst, demand):
    y = solve_constrained_welfare(inst, demand)
    rates = buyer_marginal_costs(inst, y)
    return y, rates


class TestCostLemmas:
    def test_lower_prices_raise_demand_and_marginals(self):
        # Componentwise lower prices mean weakly more demand everywhere and
        # weakly higher marginal costs in the min-cost allocations.
        rng = np.random.default_rng(53)
        for _ in range(20):
            inst = random_unit_demand_instance(rng, alpha=0.0)
            p_low = random_prices(rng, inst, low=0.05, high=0.7)
            p_high = {
                g: v + float(rng.uniform(0.0, 0.3)) for g, v in p_low.items()
            }
            x_high = best_response(inst, p_high)
            x_low = best_response(inst, p_low)
            for t in inst.buyer_types:
                assert x_low[t.type_id] >= x_high[t.type_id] - 1e-12
            y_high, _ = _constrained(inst, x_high)
            y_low, _ = _constrained(inst, x_low)
            for g, cost in inst.goods:
                assert cost.marginal(y_high[g]) <= cost.marginal(y_low[g]) + 1e-6
            r_high = buyer_marginal_costs(inst, y_high)
            r_low = buyer_marginal_costs(inst, y_low)
            for t in inst.buyer_types:
                assert r_high[t.type_id] <= r_low[t.type_id] + 1e-6

    def test_cost_difference_bounded_by_marginal_rates(self):
        # Raising demand costs at least the current marginal rate per buyer.
        rng = np.random.default_rng(59)
        for _ in range(20):
            inst = random_unit_demand_instance(rng, alpha=0.5)
            x1 = {
                t.type_id: float(rng.uniform(0.0, 0.8)) for t in inst.buyer_types
            }
            x2 = {
                tid: v + float(rng.uniform(0.0, 0.8)) for tid, v in x1.items()
            }
            y1, rates1 = _constrained(inst, x1)
            y2, _ = _constrained(inst, x2)
            c1 = inst.total_cost([y1[g] for g in inst.good_ids])
            c2 = inst.total_cost([y2[g] for g in inst.good_ids])
            lower = sum(
                rates1[t.type_id] * (x2[t.type_id] - x1[t.type_id])
                for t in inst.buyer_types
            )
            assert c2 - c1 >= lower - 1e-6

    def test_income_cost_sandwich(self):
        # Whenever prices sit at or above marginal costs: buyer income covers
        # twice the cost, profit covers the cost, and income is at most twice
        # the profit.
        rng = np.random.default_rng(61)
        checked = 0
        for _ in range(20):
            inst = random_unit_demand_instance(rng, alpha=0.25)
            prices = random_prices(rng, inst, low=0.2, high=1.0)
            for _ in range(50):
                sol = evaluate(inst, prices)
                marg = {
                    g: cost.marginal(sol.allocation[g]) for g, cost in inst.goods
                }
                if all(prices[g] >= marg[g] - 1e-12 for g in inst.good_ids):
                    break
                prices = {g: max(prices[g], marg[g]) for g in inst.good_ids}
            else:
                pytest.fail("price raising did not reach the marginal-cost premise")
            income = sum(
                t.demand.eval(sol.demand[t.type_id]) * sol.demand[t.type_id]
                for t in inst.buyer_types
            )
            cost_total = inst.total_cost([sol.allocation[g] for g in inst.good_ids])
            assert income >= 2.0 * cost_total - 1e-8
            assert sol.profit >= cost_total - 1e-8
            assert income <= 2.0 * sol.profit + 1e-6
            checked += 1
        assert checked == 20
