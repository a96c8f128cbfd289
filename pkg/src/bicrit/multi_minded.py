"""Ladder pricing for markets with multi-good bundles.

The welfare optimum itself may earn almost nothing, so the algorithm probes a
doubling sequence of reserve prices.  Each rung solves the welfare program
with one price-taking dummy buyer per good (a reserve price in disguise),
strips the dummies, and keeps the resulting posted prices.  A final scan
picks the smallest rung whose profit is within a fixed factor of the optimum
welfare; that rung provably also keeps a constant fraction of the welfare.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .analysis import peak_ratio, selection_base_factor
from .demand import InverseDemand
from .market import MarketInstance, PricingSolution, SPLIT_DUST
from .solver import (
    Participant,
    SolverConfig,
    SolverError,
    _build_participants,
    _solve_flow,
    solve_welfare,
)
from .unit_demand import resolve_alpha, threshold_price

__all__ = [
    "BenchmarkSolution",
    "BoundCheck",
    "LadderSolution",
    "augmented_we",
    "benchmark",
    "certify_ladder",
    "ladder",
    "rung_count",
    "select_index",
    "selection_threshold",
]

# Absolute-plus-relative slack for every ladder inequality.
BOUND_TOL = 1e-6
# Goods priced above the dummy price by more than this margin count saturated.
_SAT_TOL = 1e-9
# The stripped prices must reproduce max(dummy price, marginal cost) this well.
_PRICE_IDENTITY_TOL = 1e-6
_MAX_CAP_RETRIES = 5


@dataclass
class BenchmarkSolution:
    """Welfare optimum truncated at the threshold price, with personalized payments.

    profit is what per-buyer payments at lambda_i(x_i) would earn; it is a
    yardstick only, not a realizable item pricing.
    """

    demand: dict[str, float]
    split: dict[tuple[str, tuple[str, ...]], float]
    allocation: dict[str, float]
    sw: float
    profit: float


def _benchmark_demand(inst, opt, price_floor):
    caps = {}
    for t in inst.buyer_types:
        if price_floor <= 0.0:
            caps[t.type_id] = t.demand.support_ceiling
        else:
            caps[t.type_id] = t.demand.inverse(price_floor)
    return {
        t.type_id: min(opt.demand[t.type_id], caps[t.type_id])
        for t in inst.buyer_types
    }


def benchmark(
    inst: MarketInstance, opt: PricingSolution, alpha: float | None = None
) -> BenchmarkSolution:
    """Scale the welfare optimum down so nobody's price falls below the threshold."""
    alpha = resolve_alpha(inst, alpha)
    floor = threshold_price(alpha, inst.lambda_max)
    x_b = _benchmark_demand(inst, opt, floor)
    split = {}
    y = np.zeros(len(inst.good_ids))
    for t, mask in zip(inst.buyer_types, inst.bundle_masks):
        x_opt = opt.demand[t.type_id]
        if x_opt <= SPLIT_DUST:
            continue
        ratio = x_b[t.type_id] / x_opt
        for j, b in enumerate(t.bundles):
            v = opt.split.get((t.type_id, b), 0.0) * ratio
            if v > SPLIT_DUST:
                split[(t.type_id, b)] = v
                y += v * mask[j]
    utility = sum(t.demand.utility_integral(x_b[t.type_id]) for t in inst.buyer_types)
    income = sum(
        t.demand.eval(x_b[t.type_id]) * x_b[t.type_id] for t in inst.buyer_types
    )
    cost = inst.total_cost(y)
    bench = BenchmarkSolution(
        demand=x_b,
        split=split,
        allocation=inst.prices_dict(y),
        sw=float(utility - cost),
        profit=float(income - cost),
    )
    _check_flat_threshold_bound(alpha, bench.sw, bench.profit)
    return bench


def _check_flat_threshold_bound(alpha, sw, profit):
    # Everyone in the benchmark pays at least the threshold price and goods
    # never price below marginal cost, so SW <= (2 * peak_ratio - 1) * profit.
    factor = 2.0 * peak_ratio(alpha) - 1.0
    if math.isfinite(factor) and sw > factor * profit + BOUND_TOL * (1.0 + abs(sw)):
        raise AssertionError(
            f"benchmark violates its welfare-to-profit bound: {sw} > {factor} * {profit}"
        )


@dataclass
class LadderSolution:
    """One rung: the stripped equilibrium at a given dummy (reserve) price.

    index -1 denotes the plain welfare optimum.  saturated lists goods priced
    strictly above the dummy price (their price equals marginal cost).
    price_residual records how far the stripped prices were from the identity
    max(dummy price, marginal cost) before snapping.
    """

    index: int
    dummy_price: float | None
    solution: PricingSolution
    saturated: frozenset[str] = frozenset()
    dummy_allocation: dict[str, float] = field(default_factory=dict)
    price_residual: float = 0.0


def _flat_reserve_buyer(price: float, population: float) -> InverseDemand:
    return InverseDemand.tabulated([(0.0, price), (population, price)], alpha=0.0)


def augmented_we(
    inst: MarketInstance, dummy_price: float, cfg: SolverConfig | None = None
) -> LadderSolution:
    """Welfare optimum with a flat-valuation dummy buyer per good, dummies stripped.

    The dummy population starts at twice the total demand the market could
    ever express and doubles (up to 5 times) if a dummy ever consumes its
    whole cap, which would invalidate the reserve-price semantics.
    """
    if not dummy_price > 0:
        raise ValueError("dummy price must be positive")
    cfg = cfg or SolverConfig()
    n = len(inst.good_ids)
    real = _build_participants(inst)
    population = 2.0 * sum(t.demand.support_ceiling for t in inst.buyer_types)
    for _ in range(_MAX_CAP_RETRIES + 1):
        dummies = []
        for k in range(n):
            mask = np.zeros((1, n))
            mask[0, k] = 1.0
            dummies.append(
                Participant(_flat_reserve_buyer(dummy_price, population), mask, population)
            )
        result = _solve_flow(real + dummies, inst.cost_functions, cfg)
        dummy_take = np.array([float(result.splits[len(real) + k][0]) for k in range(n)])
        if np.all(dummy_take < population * (1.0 - 1e-6)):
            break
        population *= 2.0
    else:
        raise SolverError("dummy buyers kept saturating their population cap")

    y_aug = result.y
    y_real = y_aug - dummy_take
    y_real = np.maximum(y_real, 0.0)
    marg_aug = inst.marginal_vector(y_aug)
    marg_real = inst.marginal_vector(y_real)
    snapped = np.maximum(dummy_price, marg_real)
    residual = float(np.max(np.abs(marg_aug - snapped))) if n else 0.0
    if residual > _PRICE_IDENTITY_TOL * (1.0 + inst.lambda_max):
        raise SolverError(
            f"stripped prices miss the reserve identity by {residual:.3e}",
            residual=residual,
        )

    demand = {}
    paid = {}
    split = {}
    for t, sp, mask in zip(inst.buyer_types, result.splits[: len(real)], inst.bundle_masks):
        x = float(np.sum(sp))
        demand[t.type_id] = x
        paid[t.type_id] = float(np.min(mask @ snapped))
        for b, v in zip(t.bundles, sp):
            if v > SPLIT_DUST:
                split[(t.type_id, b)] = float(v)
    utility = sum(t.demand.utility_integral(demand[t.type_id]) for t in inst.buyer_types)
    cost = inst.total_cost(y_real)
    solution = PricingSolution(
        prices=inst.prices_dict(snapped),
        demand=demand,
        split=split,
        allocation=inst.prices_dict(y_real),
        sw=float(utility - cost),
        profit=float(snapped @ y_real - cost),
        paid=paid,
    )
    margin = _SAT_TOL * (1.0 + dummy_price)
    saturated = frozenset(
        g for g, m in zip(inst.good_ids, marg_real) if m > dummy_price + margin
    )
    return LadderSolution(
        index=0,
        dummy_price=dummy_price,
        solution=solution,
        saturated=saturated,
        dummy_allocation=inst.prices_dict(dummy_take),
        price_residual=residual,
    )


def rung_count(inst: MarketInstance) -> int:
    """Number of doubling steps: ceil(log2 of the bundle size ratio)."""
    return int(math.ceil(math.log2(inst.bundle_size_ratio) - 1e-12))


def dummy_price_at(inst: MarketInstance, j: int, alpha: float | None = None) -> float:
    primary = threshold_price(resolve_alpha(inst, alpha), inst.lambda_max)
    return 2.0**j * primary / (2.0 * inst.max_bundle_size)


def ladder(
    inst: MarketInstance,
    opt: PricingSolution,
    cfg: SolverConfig | None = None,
    alpha: float | None = None,
) -> list[LadderSolution]:
    """All augmented equilibria at dummy prices 2^j * threshold / (2 * max size)."""
    alpha = resolve_alpha(inst, alpha)
    steps = rung_count(inst)
    rungs = []
    for j in range(steps + 2):
        rung = augmented_we(inst, dummy_price_at(inst, j, alpha), cfg)
        rung.index = j
        rungs.append(rung)
    return rungs


def selection_threshold(inst: MarketInstance, alpha: float | None = None) -> float:
    """Largest acceptable SW*/profit ratio when scanning the ladder."""
    alpha = resolve_alpha(inst, alpha)
    return (
        2.0
        * (math.log2(inst.bundle_size_ratio) + 2.0)
        * selection_base_factor(alpha)
    )


def _optimum_rung(opt: PricingSolution) -> LadderSolution:
    return LadderSolution(index=-1, dummy_price=None, solution=opt)


def select_index(
    inst: MarketInstance,
    rungs: list[LadderSolution],
    opt: PricingSolution,
    alpha: float | None = None,
) -> LadderSolution:
    """Smallest index (optimum first, then the rungs) meeting the profit threshold.

    At least one index qualifies for exact solutions; a numerical miss raises
    with every rung's profit attached.
    """
    threshold = selection_threshold(inst, alpha)
    sw_star = opt.sw
    candidates = [_optimum_rung(opt)] + sorted(rungs, key=lambda r: r.index)
    if sw_star <= BOUND_TOL:
        return candidates[0]
    slack = BOUND_TOL * (1.0 + sw_star)
    for rung in candidates:
        profit = rung.solution.profit
        if profit > 0 and sw_star <= threshold * profit + slack:
            return rung
    profits = {r.index: r.solution.profit for r in candidates}
    raise SolverError(
        f"no ladder index met SW*/profit <= {threshold}; rung profits: {profits}"
    )


@dataclass
class BoundCheck:
    """One inequality lhs <= rhs + tol with its measured sides."""

    name: str
    lhs: float
    rhs: float
    tol: float

    @property
    def ok(self) -> bool:
        return self.lhs <= self.rhs + self.tol

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "tol": self.tol,
            "ok": self.ok,
        }


def certify_ladder(
    inst: MarketInstance,
    opt: PricingSolution,
    rungs: list[LadderSolution],
    alpha: float | None = None,
) -> list[BoundCheck]:
    """Evaluate every structural inequality the ladder construction promises."""
    alpha = resolve_alpha(inst, alpha)
    sw_star = opt.sw
    tol = BOUND_TOL * (1.0 + abs(sw_star))
    inv = 1.0 / (1.0 - alpha) if alpha < 1.0 else math.inf
    checks = []
    by_index = {r.index: r for r in rungs}
    last = max(by_index)

    for r in rungs:
        sol = r.solution
        cost = inst.total_cost(sol.allocation_vector(inst))
        checks.append(
            BoundCheck(f"price_identity[{r.index}]", r.price_residual, 0.0, _PRICE_IDENTITY_TOL)
        )
        checks.append(BoundCheck(f"profit_covers_cost[{r.index}]", cost, sol.profit, tol))

    start = by_index[0].solution
    checks.append(
        BoundCheck(
            "welfare_gap_at_start",
            sw_star - start.sw,
            (5.0 + 6.0 * inv) * (start.profit + opt.profit),
            tol,
        )
    )
    for j in range(last):
        a, b = by_index[j].solution, by_index[j + 1].solution
        checks.append(
            BoundCheck(
                f"welfare_step[{j}->{j + 1}]",
                a.sw - b.sw,
                3.0 * a.profit + 3.0 * b.profit,
                tol,
            )
        )
    top = by_index[last].solution
    checks.append(
        BoundCheck(
            "welfare_at_last_rung",
            top.sw,
            (2.0 * peak_ratio(alpha) - 1.0) * top.profit,
            tol,
        )
    )
    checks.append(
        BoundCheck(
            "welfare_vs_total_profit",
            sw_star,
            selection_base_factor(alpha)
            * (sum(by_index[j].solution.profit for j in by_index) + opt.profit),
            tol,
        )
    )
    return checks


def certify_selection(
    inst: MarketInstance,
    opt: PricingSolution,
    selected: LadderSolution,
    alpha: float | None = None,
) -> list[BoundCheck]:
    """The two guarantees of the selected rung: profit and welfare factors."""
    alpha = resolve_alpha(inst, alpha)
    sw_star = opt.sw
    tol = BOUND_TOL * (1.0 + abs(sw_star))
    wf = (
        12.0 * (2.0 - alpha) / (1.0 - alpha) if alpha < 1.0 else math.inf
    )
    return [
        BoundCheck(
            "selected_profit",
            sw_star,
            selection_threshold(inst, alpha) * selected.solution.profit,
            tol,
        ),
        BoundCheck("selected_welfare", sw_star, wf * selected.solution.sw, tol),
    ]


def deviation_violations(
    inst: MarketInstance,
    opt: PricingSolution,
    rung: LadderSolution,
    alpha: float | None = None,
) -> list[str]:
    """Saturation charging check for one rung.

    Against the rung's own scaled benchmark (welfare optimum truncated at
    2^j * threshold), any buyer whose price rose past the benchmark must see a
    saturated good in every desired bundle, and the saturated part of each
    bundle must cover at least half the buyer's price.  Rungs whose scaled
    threshold exceeds the demand peak have no applicable benchmark.
    """
    alpha = resolve_alpha(inst, alpha)
    floor = rung.dummy_price * 2.0 * inst.max_bundle_size
    if floor > inst.lambda_max * (1.0 - 1e-12):
        return []
    x_a = _benchmark_demand(inst, opt, floor)
    problems = []
    margin = BOUND_TOL * (1.0 + inst.lambda_max)
    for t in inst.buyer_types:
        lam_now = t.demand.eval(rung.solution.demand[t.type_id])
        lam_bench = t.demand.eval(x_a[t.type_id])
        if lam_now <= lam_bench + margin:
            continue
        for b in t.bundles:
            sat_part = sum(rung.solution.prices[g] for g in b if g in rung.saturated)
            if sat_part == 0.0:
                problems.append(
                    f"type {t.type_id} deviated but bundle {list(b)} has no saturated good"
                )
            elif lam_now > 2.0 * sat_part + margin:
                problems.append(
                    f"type {t.type_id}: price {lam_now:.6f} exceeds twice the "
                    f"saturated share {sat_part:.6f} of bundle {list(b)}"
                )
    return problems
