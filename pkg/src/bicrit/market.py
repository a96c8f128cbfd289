"""Market instances, envy-free buyer response, and minimum-cost allocation.

A market couples goods (each with a production cost) and buyer types (each
with a set of acceptable bundles and an inverse demand curve).  Populations
are continuous: demand quantities are real masses of infinitesimal buyers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .costs import CostFunction
from .demand import InverseDemand

__all__ = [
    "BuyerType",
    "MarketInstance",
    "MarketValidationError",
    "PricingSolution",
    "best_response",
    "buyer_marginal_costs",
    "evaluate",
    "min_bundle_price",
    "min_cost_allocation",
]

# Bundles whose price is within this (times 1 + lambda_max) of the cheapest
# count as tied.  Solver-produced prices equalize marginal costs only to about
# 1e-8, and breaking those near-ties routes whole buyer populations onto one
# pseudo-cheapest good, so this must sit well above the solver tolerance.
PRICE_TIE_REL = 1e-7
# Reported splits below this are numeric dust and get dropped.
SPLIT_DUST = 1e-12
# Marginal-cost sums of used bundles must agree within this at a cost optimum.
KKT_TOL = 1e-6

_PEAK_TOL = 1e-9


class MarketValidationError(ValueError):
    """Instance validation failure carrying every detected problem."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class BuyerType:
    type_id: str
    bundles: tuple[tuple[str, ...], ...]
    demand: InverseDemand


def _canonical_bundles(bundles) -> tuple[tuple[str, ...], ...]:
    return tuple(sorted(tuple(sorted(set(str(g) for g in b))) for b in bundles))


@dataclass(frozen=True)
class MarketInstance:
    goods: tuple[tuple[str, CostFunction], ...]
    buyer_types: tuple[BuyerType, ...]

    def __post_init__(self):
        problems = []
        ids = [g for g, _ in self.goods]
        if len(set(ids)) != len(ids):
            problems.append("duplicate good ids")
        if not self.goods:
            problems.append("instance has no goods")
        if not self.buyer_types:
            problems.append("instance has no buyer types")
        tids = [t.type_id for t in self.buyer_types]
        if len(set(tids)) != len(tids):
            problems.append("duplicate buyer type ids")
        known = set(ids)
        peak = self.buyer_types[0].demand.lambda_max if self.buyer_types else None
        for t in self.buyer_types:
            if not t.bundles:
                problems.append(f"type {t.type_id}: no bundles")
            if len(set(t.bundles)) != len(t.bundles):
                problems.append(f"type {t.type_id}: duplicate bundles")
            for b in t.bundles:
                if not b:
                    problems.append(f"type {t.type_id}: empty bundle")
                unknown = [g for g in b if g not in known]
                if unknown:
                    problems.append(
                        f"type {t.type_id}: bundle {list(b)} references unknown goods {unknown}"
                    )
            if peak is not None and abs(t.demand.lambda_max - peak) > _PEAK_TOL * max(
                peak, 1.0
            ):
                problems.append(
                    f"type {t.type_id}: peak {t.demand.lambda_max} breaks the uniform "
                    f"peak {peak}"
                )
        if problems:
            raise MarketValidationError(problems)

    @staticmethod
    def create(goods, buyer_types) -> "MarketInstance":
        """Build an instance from (id, cost) pairs and (id, bundles, demand) triples."""
        goods_t = tuple((str(g), c) for g, c in goods)
        types_t = tuple(
            BuyerType(str(tid), _canonical_bundles(bundles), demand)
            for tid, bundles, demand in buyer_types
        )
        return MarketInstance(goods_t, types_t)

    # -- derived structure -------------------------------------------------

    @cached_property
    def good_ids(self) -> tuple[str, ...]:
        return tuple(g for g, _ in self.goods)

    @cached_property
    def good_index(self) -> dict[str, int]:
        return {g: k for k, g in enumerate(self.good_ids)}

    @cached_property
    def cost_functions(self) -> tuple[CostFunction, ...]:
        return tuple(c for _, c in self.goods)

    @cached_property
    def bundle_masks(self) -> tuple[np.ndarray, ...]:
        """Per type, a (bundle count, good count) 0/1 incidence matrix."""
        n = len(self.goods)
        masks = []
        for t in self.buyer_types:
            m = np.zeros((len(t.bundles), n))
            for j, b in enumerate(t.bundles):
                for g in b:
                    m[j, self.good_index[g]] = 1.0
            masks.append(m)
        return tuple(masks)

    @cached_property
    def lambda_max(self) -> float:
        return self.buyer_types[0].demand.lambda_max

    @cached_property
    def alpha(self) -> float:
        return max(t.demand.alpha for t in self.buyer_types)

    @cached_property
    def max_bundle_size(self) -> int:
        return max(len(b) for t in self.buyer_types for b in t.bundles)

    @cached_property
    def min_bundle_size(self) -> int:
        return min(len(b) for t in self.buyer_types for b in t.bundles)

    @property
    def bundle_size_ratio(self) -> float:
        return self.max_bundle_size / self.min_bundle_size

    def is_unit_demand(self) -> bool:
        return self.max_bundle_size == 1

    def price_vector(self, prices: dict[str, float]) -> np.ndarray:
        return np.array([float(prices[g]) for g in self.good_ids])

    def prices_dict(self, pvec) -> dict[str, float]:
        return {g: float(pvec[k]) for k, g in enumerate(self.good_ids)}

    def total_cost(self, yvec) -> float:
        return float(sum(c.total(y) for c, y in zip(self.cost_functions, yvec)))

    def marginal_vector(self, yvec) -> np.ndarray:
        return np.array([c.marginal(y) for c, y in zip(self.cost_functions, yvec)])


@dataclass
class PricingSolution:
    """Evaluated outcome of posting a price vector.

    demand maps type id -> purchased mass, split maps (type id, bundle) ->
    mass routed through that bundle, allocation maps good id -> produced
    quantity, and paid maps type id -> the bundle price that type faces.
    """

    prices: dict[str, float]
    demand: dict[str, float]
    split: dict[tuple[str, tuple[str, ...]], float]
    allocation: dict[str, float]
    sw: float
    profit: float
    paid: dict[str, float]

    def demand_vector(self, inst: MarketInstance) -> np.ndarray:
        return np.array([self.demand[t.type_id] for t in inst.buyer_types])

    def allocation_vector(self, inst: MarketInstance) -> np.ndarray:
        return np.array([self.allocation[g] for g in inst.good_ids])


def _demand_at_price(d: InverseDemand, q: float) -> float:
    """Mass purchasing when the cheapest bundle costs q (clamped inverse)."""
    if q >= d.lambda_max:
        return 0.0
    if q <= 0.0:
        return d.support_ceiling
    return float(d._inverse_clamped(np.asarray(q, dtype=float)))


def min_bundle_price(inst: MarketInstance, prices: dict[str, float], type_id: str):
    """Cheapest bundle price for the type and one argmin bundle.

    Ties resolve to the lexicographically smallest bundle (bundles are stored
    as sorted good-id tuples, themselves sorted).
    """
    pvec = inst.price_vector(prices)
    for idx, t in enumerate(inst.buyer_types):
        if t.type_id == type_id:
            sums = inst.bundle_masks[idx] @ pvec
            best = int(np.argmin(sums))
            return float(sums[best]), t.bundles[best]
    raise KeyError(f"unknown buyer type {type_id!r}")


def best_response(inst: MarketInstance, prices: dict[str, float]) -> dict[str, float]:
    """Envy-free demand: each type buys its cheapest bundle up to its valuation."""
    pvec = inst.price_vector(prices)
    out = {}
    for t, mask in zip(inst.buyer_types, inst.bundle_masks):
        q = float(np.min(mask @ pvec))
        out[t.type_id] = _demand_at_price(t.demand, q)
    return out


def _argmin_bundle_sets(inst, pvec):
    """Per type: (cheapest price, indices of bundles tied with it)."""
    tol = PRICE_TIE_REL * (1.0 + inst.lambda_max)
    result = []
    for mask in inst.bundle_masks:
        sums = mask @ pvec
        q = float(np.min(sums))
        tied = np.flatnonzero(sums <= q + tol)
        result.append((q, tied))
    return result


def argmin_bundles(inst: MarketInstance, prices: dict[str, float]):
    """Per type id, the bundles tied at the cheapest price."""
    pvec = inst.price_vector(prices)
    return {
        t.type_id: [t.bundles[j] for j in tied]
        for t, (_, tied) in zip(inst.buyer_types, _argmin_bundle_sets(inst, pvec))
    }


def split_min_cost(
    cost_fns,
    masks,
    totals,
    base_y=None,
    max_iters: int = 10_000,
    improve_tol: float = 1e-10,
):
    """Distribute each type's total mass over its admissible bundles at least cost.

    masks is one (m_i, n_goods) incidence matrix per type and totals the mass
    each type must route.  Types with a single admissible bundle are folded
    into the fixed base allocation; the rest are optimized by projected
    gradient on the product of scaled simplices.

    Returns (list of per-type split vectors, allocation vector y).
    """
    n_goods = masks[0].shape[1] if masks else len(cost_fns)
    base = np.zeros(n_goods) if base_y is None else np.array(base_y, dtype=float)
    splits = [np.zeros(m.shape[0]) for m in masks]
    free = []
    for i, (m, tot) in enumerate(zip(masks, totals)):
        if tot <= 0.0:
            continue
        if m.shape[0] == 1:
            splits[i][0] = tot
            base = base + tot * m[0]
        else:
            free.append(i)
    if not free:
        return splits, base

    blocks = [masks[i] for i in free]
    block_totals = np.array([totals[i] for i in free])
    sizes = [b.shape[0] for b in blocks]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    stacked = np.vstack(blocks)

    def allocation(z):
        return base + stacked.T @ z

    def cost(y):
        return float(sum(c.total(v) for c, v in zip(cost_fns, y)))

    def grad(y):
        marg = np.array([c.marginal(v) for c, v in zip(cost_fns, y)])
        return stacked @ marg

    def project(z):
        out = np.empty_like(z)
        for k in range(len(free)):
            sl = slice(offsets[k], offsets[k + 1])
            out[sl] = _project_simplex(z[sl], block_totals[k])
        return out

    def used_spread(z, y):
        # Largest gap between a used bundle's marginal-cost sum and the
        # type's cheapest; zero certifies optimality.
        marg = np.array([c.marginal(v) for c, v in zip(cost_fns, y)])
        sums = stacked @ marg
        worst = 0.0
        for k in range(len(free)):
            sl = slice(offsets[k], offsets[k + 1])
            block_sums = sums[sl]
            used = block_sums[z[sl] > SPLIT_DUST]
            if used.size:
                worst = max(worst, float(used.max() - block_sums.min()))
        return worst

    z = np.concatenate([np.full(s, t / s) for s, t in zip(sizes, block_totals)])
    y = allocation(z)
    f = cost(y)
    step = 1.0
    stalled = 0
    for _ in range(max_iters):
        g = grad(y)
        while True:
            z_new = project(z - step * g)
            dz = z_new - z
            sq = float(dz @ dz)
            if sq == 0.0:
                break
            y_new = allocation(z_new)
            f_new = cost(y_new)
            if f_new <= f + float(g @ dz) + sq / (2.0 * step) + 1e-18:
                break
            step *= 0.5
        if sq == 0.0:
            break
        improved = f - f_new
        z, y, f = z_new, y_new, f_new
        step *= 1.25
        # A vanishing objective improvement alone is not proof of optimality:
        # stop only once the used bundles' marginal sums have equalized too.
        if improved < improve_tol * (1.0 + abs(f)):
            stalled += 1
            if stalled > 2000 or used_spread(z, y) <= 0.1 * KKT_TOL:
                break
        else:
            stalled = 0

    for k, i in enumerate(free):
        splits[i] = z[offsets[k] : offsets[k + 1]]
    return splits, allocation(z)


def _project_simplex(v: np.ndarray, total: float) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = total}."""
    u = np.sort(v)[::-1]
    cumsum = np.cumsum(u) - total
    rho = np.flatnonzero(u - cumsum / np.arange(1, v.size + 1) > 0)[-1]
    theta = cumsum[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def min_cost_allocation(inst: MarketInstance, prices: dict[str, float], demand):
    """Cheapest way to serve the given demand using only argmin-priced bundles.

    demand maps type id -> mass and is expected to be a best response to the
    prices.  Returns (split dict, allocation dict).
    """
    pvec = inst.price_vector(prices)
    argmins = _argmin_bundle_sets(inst, pvec)
    masks = []
    keys = []
    totals = []
    for t, full_mask, (_, tied) in zip(inst.buyer_types, inst.bundle_masks, argmins):
        masks.append(full_mask[tied])
        keys.append([t.bundles[j] for j in tied])
        totals.append(float(demand[t.type_id]))
    splits, y = split_min_cost(inst.cost_functions, masks, totals)
    split_dict = {}
    for t, ks, sp in zip(inst.buyer_types, keys, splits):
        for b, v in zip(ks, sp):
            if v > SPLIT_DUST:
                split_dict[(t.type_id, b)] = float(v)
    return split_dict, inst.prices_dict(y)


def evaluate(inst: MarketInstance, prices: dict[str, float]) -> PricingSolution:
    """Full market outcome at the posted prices."""
    pvec = inst.price_vector(prices)
    demand = {}
    paid = {}
    for t, mask in zip(inst.buyer_types, inst.bundle_masks):
        q = float(np.min(mask @ pvec))
        paid[t.type_id] = q
        demand[t.type_id] = _demand_at_price(t.demand, q)
    split, allocation = min_cost_allocation(inst, prices, demand)
    yvec = np.array([allocation[g] for g in inst.good_ids])
    utility = sum(
        t.demand.utility_integral(demand[t.type_id]) for t in inst.buyer_types
    )
    cost = inst.total_cost(yvec)
    income = float(pvec @ yvec)
    return PricingSolution(
        prices={g: float(prices[g]) for g in inst.good_ids},
        demand=demand,
        split=split,
        allocation=allocation,
        sw=float(utility - cost),
        profit=income - cost,
        paid=paid,
    )


def buyer_marginal_costs(
    inst: MarketInstance, allocation: dict[str, float], split=None
) -> dict[str, float]:
    """Per-type marginal cost of one extra unit at the given allocation.

    In a cost-minimal solution every bundle a type actually uses carries the
    same marginal-cost sum, so this is well defined up to solver tolerance;
    the minimum over used bundles is reported.  Types using nothing fall back
    to the cheapest bundle by marginal cost.
    """
    yvec = np.array([allocation[g] for g in inst.good_ids])
    marg = inst.marginal_vector(yvec)
    out = {}
    for t, mask in zip(inst.buyer_types, inst.bundle_masks):
        sums = mask @ marg
        used = None
        if split is not None:
            used = [j for j, b in enumerate(t.bundles) if split.get((t.type_id, b), 0.0) > SPLIT_DUST]
        if used:
            out[t.type_id] = float(min(sums[j] for j in used))
        else:
            out[t.type_id] = float(np.min(sums))
    return out


def split_kkt_violation(inst: MarketInstance, allocation, split, admissible=None) -> float:
    """Largest gap between a used bundle's marginal-cost sum and the type's best.

    Zero (up to KKT_TOL) certifies the split is cost minimal.  admissible may
    map type id -> the bundles the split was allowed to use (e.g. only the
    argmin-priced ones); by default every bundle of the type competes.
    """
    yvec = np.array([allocation[g] for g in inst.good_ids])
    marg = inst.marginal_vector(yvec)
    worst = 0.0
    for t, mask in zip(inst.buyer_types, inst.bundle_masks):
        sums = mask @ marg
        if admissible is not None:
            allowed = set(admissible[t.type_id])
            candidates = [float(sums[j]) for j, b in enumerate(t.bundles) if b in allowed]
        else:
            candidates = [float(s) for s in sums]
        best = min(candidates)
        for j, b in enumerate(t.bundles):
            if split.get((t.type_id, b), 0.0) > SPLIT_DUST:
                worst = max(worst, float(sums[j]) - best)
    return worst
