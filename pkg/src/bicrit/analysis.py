"""Closed-form guarantee factors, trade-off curves, and cross-comparison certificates.

All factors are functions of the demand regularity parameter alpha and, for
multi-bundle markets, of the bundle size ratio.  alpha = 1 makes every factor
unbounded; alpha below ALPHA_LIMIT uses the analytic alpha -> 0 limits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .demand import ALPHA_LIMIT
from .market import MarketInstance, PricingSolution

__all__ = [
    "GuaranteeCertificate",
    "certify_cross",
    "mm_profit_factor",
    "mm_welfare_factor",
    "peak_decay",
    "peak_ratio",
    "selection_base_factor",
    "tradeoff_bound",
    "welfare_factor",
    "zeta",
]

# Default slack for comparing measured ratios against their factors:
# absolute plus relative in the optimum welfare.
BOUND_TOL = 1e-6


def _check_alpha(alpha: float):
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")


def peak_decay(alpha: float) -> float:
    """(1 - alpha)^(1/alpha): the peak-price fraction kept by thresholding.

    Tends to 1/e as alpha -> 0 and to 0 at alpha = 1.
    """
    _check_alpha(alpha)
    if alpha < ALPHA_LIMIT:
        return math.exp(-1.0)
    return math.exp(math.log1p(-alpha) / alpha) if alpha < 1.0 else 0.0


def peak_ratio(alpha: float) -> float:
    """(1/(1 - alpha))^(1/alpha), the reciprocal of peak_decay; e at the limit."""
    _check_alpha(alpha)
    if alpha < ALPHA_LIMIT:
        return math.e
    return math.inf if alpha >= 1.0 else math.exp(-math.log1p(-alpha) / alpha)


def zeta(alpha: float) -> float:
    """Profit factor 2 * peak_ratio + alpha/(1-alpha); 2e at alpha = 0.

    Unbounded (inf) at alpha = 1, where thresholded pricing keeps a
    vanishing revenue share.
    """
    _check_alpha(alpha)
    if alpha < ALPHA_LIMIT:
        return 2.0 * math.e
    if alpha >= 1.0:
        return math.inf
    return 2.0 * peak_ratio(alpha) + alpha / (1.0 - alpha)


def welfare_factor(alpha: float) -> float:
    """Welfare factor (2 - alpha) / (1 - alpha) of thresholded pricing."""
    _check_alpha(alpha)
    if alpha >= 1.0:
        return math.inf
    return (2.0 - alpha) / (1.0 - alpha)


def selection_base_factor(alpha: float) -> float:
    """8 + 2 * peak_ratio + 4/(1-alpha): per-rung factor in the ladder bound."""
    _check_alpha(alpha)
    if alpha >= 1.0:
        return math.inf
    return 8.0 + 2.0 * peak_ratio(alpha) + 4.0 / (1.0 - alpha)


def mm_profit_factor(alpha: float, bundle_size_ratio: float) -> float:
    """Profit factor 2 * (log2(ratio) + 2) * selection_base_factor."""
    if bundle_size_ratio < 1.0:
        raise ValueError("bundle size ratio must be at least 1")
    return 2.0 * (math.log2(bundle_size_ratio) + 2.0) * selection_base_factor(alpha)


def mm_welfare_factor(alpha: float) -> float:
    """Welfare factor 12 * (2 - alpha) / (1 - alpha) of the ladder selection."""
    return 12.0 * welfare_factor(alpha)


def threshold_coefficients(alpha: float) -> tuple[float, float]:
    """(c1, c2) with SW <= c1 * profit and SW* - SW <= c2 * profit.

    These are the two sides of the thresholded-pricing analysis:
    c1 = 2 * peak_ratio - 1 and c2 = 1/(1 - alpha); c1 + c2 = zeta and
    c2 + 1 = welfare_factor.
    """
    _check_alpha(alpha)
    if alpha >= 1.0:
        return math.inf, math.inf
    return 2.0 * peak_ratio(alpha) - 1.0, 1.0 / (1.0 - alpha)


def tradeoff_bound(c: float, alpha: float) -> tuple[float, float]:
    """Instance trade-off (revenue factor, welfare factor) at measured c.

    c = SW*/SW(s) is measured from a thresholded solution, never chosen; it
    always lies in (1, welfare_factor(alpha)].  The revenue factor
    min(c * c1, c * c2 / (c - 1)) never exceeds zeta(alpha).
    """
    _check_alpha(alpha)
    if c <= 1.0:
        raise ValueError(
            "c <= 1 is the welfare-optimal degenerate point; no trade-off applies"
        )
    if c > welfare_factor(alpha) * (1.0 + 1e-12):
        raise ValueError("c exceeds the welfare factor bound")
    c1, c2 = threshold_coefficients(alpha)
    return min(c * c1, c * c2 / (c - 1.0)), c


def certify_cross(
    inst: MarketInstance,
    candidate_profit: float,
    benchmark: PricingSolution,
    sw_star: float,
) -> float:
    """Welfare floor for any pricing whose profit matches our benchmark's.

    Any solution with profit >= profit(benchmark) has welfare >= its own
    profit >= SW*/factor, where the factor is zeta for unit-demand markets
    and the ladder profit factor otherwise.  Raises if the candidate earns
    less than the benchmark (no guarantee applies then).
    """
    if candidate_profit < benchmark.profit - 1e-12 * (1.0 + abs(benchmark.profit)):
        raise ValueError(
            "candidate profit below the benchmark's; certificate refused"
        )
    if inst.is_unit_demand():
        factor = zeta(inst.alpha)
    else:
        factor = mm_profit_factor(inst.alpha, inst.bundle_size_ratio)
    return sw_star / factor


def _verdict(achieved: float, factor: float, tol: float) -> str:
    if math.isinf(factor):
        return "unbounded"
    return "PASS" if achieved <= factor + tol else "FAIL"


@dataclass
class GuaranteeCertificate:
    """Measured performance of a concrete solution against its factors."""

    alpha: float
    zeta: float
    welfare_factor: float
    mm_profit_factor: float | None
    mm_welfare_factor: float | None
    achieved_profit_ratio: float
    achieved_welfare_ratio: float
    verdicts: dict[str, str] = field(default_factory=dict)

    def passed(self) -> bool:
        return all(v != "FAIL" for v in self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "zeta": "unbounded" if math.isinf(self.zeta) else self.zeta,
            "welfare_factor": "unbounded"
            if math.isinf(self.welfare_factor)
            else self.welfare_factor,
            "mm_profit_factor": self.mm_profit_factor,
            "mm_welfare_factor": self.mm_welfare_factor,
            "achieved_profit_ratio": self.achieved_profit_ratio,
            "achieved_welfare_ratio": self.achieved_welfare_ratio,
            "verdicts": dict(self.verdicts),
        }


def _ratios(sw_star: float, sol: PricingSolution) -> tuple[float, float]:
    profit_ratio = sw_star / sol.profit if sol.profit > 0 else math.inf
    welfare_ratio = sw_star / sol.sw if sol.sw > 0 else math.inf
    if sw_star <= 0:
        profit_ratio = welfare_ratio = 1.0
    return profit_ratio, welfare_ratio


def certificate_unit_demand(
    alpha: float, sw_star: float, sol: PricingSolution
) -> GuaranteeCertificate:
    """Certificate for a thresholded unit-demand solution."""
    tol = BOUND_TOL * (1.0 + abs(sw_star))
    pr, wr = _ratios(sw_star, sol)
    z, w = zeta(alpha), welfare_factor(alpha)
    return GuaranteeCertificate(
        alpha=alpha,
        zeta=z,
        welfare_factor=w,
        mm_profit_factor=None,
        mm_welfare_factor=None,
        achieved_profit_ratio=pr,
        achieved_welfare_ratio=wr,
        verdicts={
            "profit_vs_optimal_welfare": _verdict(pr, z, tol),
            "welfare_vs_optimal_welfare": _verdict(wr, w, tol),
        },
    )


def certificate_multi_minded(
    alpha: float, bundle_size_ratio: float, sw_star: float, sol: PricingSolution
) -> GuaranteeCertificate:
    """Certificate for the ladder-selected multi-bundle solution."""
    tol = BOUND_TOL * (1.0 + abs(sw_star))
    pr, wr = _ratios(sw_star, sol)
    pf = mm_profit_factor(alpha, bundle_size_ratio)
    wf = mm_welfare_factor(alpha)
    return GuaranteeCertificate(
        alpha=alpha,
        zeta=zeta(alpha),
        welfare_factor=welfare_factor(alpha),
        mm_profit_factor=pf,
        mm_welfare_factor=wf,
        achieved_profit_ratio=pr,
        achieved_welfare_ratio=wr,
        verdicts={
            "profit_vs_optimal_welfare": _verdict(pr, pf, tol),
            "welfare_vs_optimal_welfare": _verdict(wr, wf, tol),
        },
    )
