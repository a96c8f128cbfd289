"""Thresholded pricing for unit-demand markets.

Each good is priced at the larger of its welfare-optimal price and a single
threshold derived from the demand peak and the regularity parameter.  The
resulting market splits into a high cluster that behaves exactly like the
welfare optimum and a low cluster whose buyers all pay the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import peak_decay
from .market import (
    MarketInstance,
    PricingSolution,
    SPLIT_DUST,
    buyer_marginal_costs,
    evaluate,
    split_kkt_violation,
)
from .solver import SolverConfig, solve_welfare

__all__ = [
    "ClusterReport",
    "ThresholdedPrices",
    "UnitDemandError",
    "cluster_diagnostics",
    "price_unit_demand",
    "threshold_price",
]

# Slack when classifying goods/buyers into clusters and checking them.
_CLUSTER_TOL = 1e-9
_DIAG_TOL = 1e-6


class UnitDemandError(ValueError):
    """Raised when a non-unit-demand instance hits the unit-demand algorithm."""


def threshold_price(alpha: float, lambda_max: float) -> float:
    """The uniform price floor lambda_max * (1 - alpha)^(1/alpha).

    lambda_max / e in the alpha -> 0 limit and 0 at alpha = 1.
    """
    return lambda_max * peak_decay(alpha)


def resolve_alpha(inst: MarketInstance, alpha: float | None) -> float:
    """The regularity parameter to price with; overrides may only enlarge it."""
    if alpha is None:
        return inst.alpha
    if alpha < inst.alpha - 1e-12:
        raise ValueError(
            f"alpha={alpha} is below the instance's regularity {inst.alpha}"
        )
    return alpha


@dataclass
class ThresholdedPrices:
    """Thresholded price vector and the induced market partition.

    Goods strictly above the primary price keep their welfare-optimal price
    (cluster H); the rest sit exactly at the primary price (cluster L).
    """

    primary_price: float
    prices: dict[str, float]
    good_cluster: dict[str, str] = field(default_factory=dict)
    type_cluster: dict[str, str] = field(default_factory=dict)


def price_unit_demand(
    inst: MarketInstance,
    cfg: SolverConfig | None = None,
    alpha: float | None = None,
    opt: PricingSolution | None = None,
):
    """Thresholded prices and the evaluated market outcome.

    Returns (ThresholdedPrices, PricingSolution).  Pass a precomputed welfare
    optimum via opt to skip the solve.
    """
    if not inst.is_unit_demand():
        raise UnitDemandError("instance has multi-good bundles; use the ladder pricer")
    alpha = resolve_alpha(inst, alpha)
    if opt is None:
        opt = solve_welfare(inst, cfg)
    primary = threshold_price(alpha, inst.lambda_max)
    prices = {g: max(primary, opt.prices[g]) for g in inst.good_ids}
    sol = evaluate(inst, prices)
    margin = _CLUSTER_TOL * (1.0 + inst.lambda_max)
    good_cluster = {
        g: "H" if prices[g] > primary + margin else "L" for g in inst.good_ids
    }
    type_cluster = {
        t.type_id: "H" if sol.paid[t.type_id] > primary + margin else "L"
        for t in inst.buyer_types
    }
    tp = ThresholdedPrices(primary, prices, good_cluster, type_cluster)
    return tp, sol


@dataclass
class ClusterReport:
    violations: list[str] = field(default_factory=list)

    def ok(self) -> bool:
        return not self.violations


def cluster_diagnostics(
    inst: MarketInstance,
    tp: ThresholdedPrices,
    sol: PricingSolution,
    opt: PricingSolution,
    tol: float = _DIAG_TOL,
) -> ClusterReport:
    """Check the two-cluster structure of a thresholded solution.

    High-cluster buyers and goods must replicate the welfare optimum exactly;
    low-cluster demand may only shrink and low-cluster marginal costs may only
    drop; nobody may buy across the clusters; and the allocation must stay
    cost minimal for the realized demand.
    """
    report = ClusterReport()
    scale = 1.0 + inst.lambda_max
    for t in inst.buyer_types:
        cl = tp.type_cluster[t.type_id]
        x_new, x_opt = sol.demand[t.type_id], opt.demand[t.type_id]
        if cl == "H" and abs(x_new - x_opt) > tol * scale:
            report.violations.append(
                f"H type {t.type_id}: demand {x_new} differs from optimal {x_opt}"
            )
        if cl == "L" and x_new > x_opt + tol * scale:
            report.violations.append(
                f"L type {t.type_id}: demand {x_new} above optimal {x_opt}"
            )
    for g, cost in inst.goods:
        cl = tp.good_cluster[g]
        y_new, y_opt = sol.allocation[g], opt.allocation[g]
        if cl == "H" and abs(y_new - y_opt) > tol * scale:
            report.violations.append(
                f"H good {g}: allocation {y_new} differs from optimal {y_opt}"
            )
        if cl == "L" and cost.marginal(y_new) > cost.marginal(y_opt) + tol * scale:
            report.violations.append(
                f"L good {g}: marginal cost rose above the optimum's"
            )
    for (tid, bundle), v in sol.split.items():
        if v <= SPLIT_DUST:
            continue
        for g in bundle:
            if tp.good_cluster[g] != tp.type_cluster[tid]:
                report.violations.append(
                    f"type {tid} ({tp.type_cluster[tid]}) buys good {g} "
                    f"({tp.good_cluster[g]}) across clusters"
                )
    kkt = split_kkt_violation(inst, sol.allocation, sol.split)
    if kkt > tol:
        report.violations.append(
            f"allocation is not cost-minimal for the demand (gap {kkt:.2e})"
        )
    return report


def low_cluster_hazard_condition(
    inst: MarketInstance,
    tp: ThresholdedPrices,
    sol: PricingSolution,
    tol: float = _DIAG_TOL,
) -> list[str]:
    """Check the hazard condition behind the welfare-loss bound.

    For every low-cluster buyer, the cost-shifted demand curve must have
    hazard ratio at most the realized demand:
    (lambda_i(x) - r_i) / |lambda_i'(x)| <= x.
    """
    rates = buyer_marginal_costs(inst, sol.allocation, sol.split)
    problems = []
    for t in inst.buyer_types:
        if tp.type_cluster[t.type_id] != "L":
            continue
        x = sol.demand[t.type_id]
        if x <= SPLIT_DUST:
            continue
        shifted = t.demand.eval(x) - rates[t.type_id]
        slope = abs(t.demand.derivative(x))
        if slope < 1e-300:
            continue
        if shifted / slope > x + tol * (1.0 + x):
            problems.append(
                f"type {t.type_id}: shifted hazard {shifted / slope:.6f} exceeds demand {x:.6f}"
            )
    return problems
