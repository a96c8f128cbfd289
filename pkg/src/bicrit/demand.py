"""Parametric families of inverse demand curves with bounded hazard-ratio growth.

An inverse demand curve lambda(x) gives the price at which exactly x mass of
buyers is willing to purchase.  All families here are non-increasing,
non-negative, and truncated to a finite support.  The regularity parameter
``alpha`` bounds how fast the ratio lambda/|lambda'| may grow: alpha = 0 is
the monotone-hazard-rate class, alpha = 1 admits equal-revenue-like curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "ALPHA_LIMIT",
    "DEFAULT_PRICE_FLOOR",
    "DemandDomainError",
    "InverseDemand",
    "verify_regularity",
]

# Below this value alpha is treated as exactly zero and formulas use their
# analytic alpha -> 0 limits.
ALPHA_LIMIT = 1e-9

# Families with unbounded natural support are cut off where the curve drops
# below DEFAULT_PRICE_FLOOR * lambda_max.
DEFAULT_PRICE_FLOOR = 1e-6

_FAMILIES = ("linear", "exponential", "generalized-pareto", "tabulated")


class DemandDomainError(ValueError):
    """Raised when an evaluation point or price is outside the curve's domain."""


def _as_float_array(x):
    arr = np.asarray(x, dtype=float)
    return arr, arr.ndim == 0


def _scalar_or_array(arr, scalar):
    return float(arr) if scalar else arr


@dataclass(frozen=True)
class InverseDemand:
    """One buyer type's inverse demand curve.

    Fields
    ------
    family: one of "linear", "exponential", "generalized-pareto", "tabulated".
    lambda_max: the peak price lambda(0); shared across a market instance.
    alpha: regularity parameter in [0, 1] the curve is declared to satisfy.
    scale: the linear intercept, or the hazard scale of the exponential /
        generalized-pareto families; ignored for tabulated curves.
    support_ceiling: quantity beyond which lambda is identically zero.
    points: (x, lambda) nodes for the tabulated family, strictly increasing
        in x; None otherwise.
    """

    family: str
    lambda_max: float
    alpha: float
    scale: float
    support_ceiling: float
    points: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown demand family {self.family!r}")
        if not self.lambda_max > 0:
            raise ValueError("lambda_max must be positive")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.family != "tabulated" and not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.support_ceiling > 0:
            raise ValueError("support_ceiling must be positive")
        if self.family == "tabulated":
            self._check_points()

    def _check_points(self):
        pts = self.points
        if not pts or len(pts) < 2:
            raise ValueError("tabulated demand needs at least two (x, lambda) points")
        xs = [p[0] for p in pts]
        ls = [p[1] for p in pts]
        if xs[0] != 0.0:
            raise ValueError("tabulated demand must start at x = 0")
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("tabulated x values must be strictly increasing")
        if any(l < 0 for l in ls):
            raise ValueError("tabulated lambda values must be non-negative")
        if any(b > a + 1e-15 for a, b in zip(ls, ls[1:])):
            raise ValueError("tabulated lambda values must be non-increasing")
        if abs(ls[0] - self.lambda_max) > 1e-9 * self.lambda_max:
            raise ValueError("tabulated curve must peak at lambda_max")

    # -- constructors ------------------------------------------------------

    @staticmethod
    def linear(lambda_max: float, intercept: float) -> "InverseDemand":
        """lambda(x) = lambda_max * (1 - x / intercept), zero past the intercept."""
        return InverseDemand("linear", lambda_max, 0.0, intercept, intercept)

    @staticmethod
    def exponential(
        lambda_max: float, scale: float, price_floor: float = DEFAULT_PRICE_FLOOR
    ) -> "InverseDemand":
        """lambda(x) = lambda_max * exp(-x / scale), truncated at the price floor."""
        ceiling = scale * math.log(1.0 / price_floor)
        return InverseDemand("exponential", lambda_max, 0.0, scale, ceiling)

    @staticmethod
    def generalized_pareto(
        lambda_max: float,
        alpha: float,
        scale: float,
        price_floor: float = DEFAULT_PRICE_FLOOR,
    ) -> "InverseDemand":
        """lambda(x) = lambda_max * (1 + alpha x / scale)^(-1/alpha).

        The hazard ratio of this family is exactly scale + alpha * x, so the
        curve is alpha-regular with equality.  alpha below ALPHA_LIMIT falls
        back to the exponential limit.
        """
        if alpha < ALPHA_LIMIT:
            ceiling = scale * math.log(1.0 / price_floor)
        else:
            ceiling = scale / alpha * ((1.0 / price_floor) ** alpha - 1.0)
        return InverseDemand("generalized-pareto", lambda_max, alpha, scale, ceiling)

    @staticmethod
    def tabulated(points, alpha: float) -> "InverseDemand":
        pts = tuple((float(x), float(l)) for x, l in points)
        return InverseDemand(
            "tabulated", pts[0][1], alpha, 0.0, pts[-1][0], points=pts
        )

    # -- cached node arrays for the tabulated family -----------------------

    @cached_property
    def _xs(self):
        return np.array([p[0] for p in self.points])

    @cached_property
    def _ls(self):
        return np.array([p[1] for p in self.points])

    @cached_property
    def _slopes(self):
        return np.diff(self._ls) / np.diff(self._xs)

    @cached_property
    def _cum_utility(self):
        seg = 0.5 * (self._ls[:-1] + self._ls[1:]) * np.diff(self._xs)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @cached_property
    def _exp_like(self) -> bool:
        """Exponential, or a generalized-pareto at its alpha -> 0 limit."""
        return self.family == "exponential" or (
            self.family == "generalized-pareto" and self.alpha < ALPHA_LIMIT
        )

    @cached_property
    def _floor_price(self) -> float:
        """Analytic lambda value just inside the support ceiling."""
        if self.family == "linear":
            return self.lambda_max * max(0.0, 1.0 - self.support_ceiling / self.scale)
        if self.family == "tabulated":
            return float(self._ls[-1])
        return self._analytic_eval(np.asarray(self.support_ceiling))

    # -- core evaluations --------------------------------------------------

    def _analytic_eval(self, x):
        if self.family == "linear":
            return self.lambda_max * np.maximum(0.0, 1.0 - x / self.scale)
        if self._exp_like:
            return self.lambda_max * np.exp(-x / self.scale)
        if self.family == "generalized-pareto":
            return self.lambda_max * (1.0 + self.alpha * x / self.scale) ** (
                -1.0 / self.alpha
            )
        return np.interp(x, self._xs, self._ls, right=0.0)

    def eval(self, x):
        """Price lambda(x); zero at or beyond the support ceiling."""
        arr, scalar = _as_float_array(x)
        if np.any(arr < 0):
            raise DemandDomainError("demand evaluated at negative quantity")
        out = np.where(arr >= self.support_ceiling, 0.0, self._analytic_eval(arr))
        return _scalar_or_array(out, scalar)

    def derivative(self, x):
        """Slope lambda'(x); zero beyond the support ceiling."""
        arr, scalar = _as_float_array(x)
        if np.any(arr < 0):
            raise DemandDomainError("demand derivative at negative quantity")
        if self.family == "linear":
            der = np.full_like(arr, -self.lambda_max / self.scale)
        elif self._exp_like:
            der = -self.lambda_max / self.scale * np.exp(-arr / self.scale)
        elif self.family == "generalized-pareto":
            der = (
                -self.lambda_max
                / self.scale
                * (1.0 + self.alpha * arr / self.scale) ** (-1.0 / self.alpha - 1.0)
            )
        else:
            seg = np.clip(np.searchsorted(self._xs, arr, side="right") - 1, 0, len(self._slopes) - 1)
            der = self._slopes[seg]
        out = np.where(arr >= self.support_ceiling, 0.0, der)
        return _scalar_or_array(out, scalar)

    def inverse(self, p):
        """Largest x with lambda(x) >= p, for prices in (0, lambda_max]."""
        arr, scalar = _as_float_array(p)
        if np.any(arr <= 0):
            raise DemandDomainError("inverse demand needs a positive price")
        if np.any(arr > self.lambda_max * (1.0 + 1e-12)):
            raise DemandDomainError("price above the demand peak")
        arr = np.minimum(arr, self.lambda_max)
        out = self._inverse_clamped(arr)
        return _scalar_or_array(out, scalar)

    def _inverse_clamped(self, arr):
        """Inverse with prices below the truncation floor mapping to the ceiling."""
        p = np.maximum(arr, max(self._floor_price, 1e-300))
        if self.family == "linear":
            x = self.scale * (1.0 - p / self.lambda_max)
        elif self._exp_like:
            x = self.scale * np.log(self.lambda_max / p)
        elif self.family == "generalized-pareto":
            x = self.scale / self.alpha * ((self.lambda_max / p) ** self.alpha - 1.0)
        else:
            return self._inverse_tabulated(arr)
        return np.minimum(x, self.support_ceiling)

    def _inverse_tabulated(self, p):
        # Index of the last node with lambda >= p.  searchsorted on the negated
        # (non-decreasing) sequence lands at the right end of any flat run, so
        # the segment at k is strictly decreasing whenever k is interior.
        k = np.searchsorted(-self._ls, -p, side="right") - 1
        k = np.clip(k, 0, len(self._ls) - 1)
        at_end = k >= len(self._slopes)
        kk = np.minimum(k, len(self._slopes) - 1)
        slope = np.minimum(self._slopes[kk], -1e-300)
        interp = self._xs[kk] + (p - self._ls[kk]) / slope
        x = np.where(at_end, self._xs[-1], interp)
        return np.minimum(x, self.support_ceiling)

    def utility_integral(self, x):
        """Buyer surplus integral of lambda from 0 to x (flat past the ceiling)."""
        arr, scalar = _as_float_array(x)
        if np.any(arr < 0):
            raise DemandDomainError("utility integral over negative quantity")
        z = np.minimum(arr, self.support_ceiling)
        if self.family == "linear":
            u = self.lambda_max * (z - z * z / (2.0 * self.scale))
        elif self._exp_like:
            u = self.lambda_max * self.scale * (1.0 - np.exp(-z / self.scale))
        elif self.family == "generalized-pareto":
            if self.alpha > 1.0 - 1e-12:
                u = self.lambda_max * self.scale * np.log1p(z / self.scale)
            else:
                base = 1.0 + self.alpha * z / self.scale
                u = (
                    self.lambda_max
                    * self.scale
                    / (1.0 - self.alpha)
                    * (1.0 - base ** (1.0 - 1.0 / self.alpha))
                )
        else:
            seg = np.clip(np.searchsorted(self._xs, z, side="right") - 1, 0, len(self._slopes) - 1)
            dx = z - self._xs[seg]
            u = self._cum_utility[seg] + self._ls[seg] * dx + 0.5 * self._slopes[seg] * dx * dx
        return _scalar_or_array(u, scalar)

    def hazard_ratio(self, x):
        """lambda(x) / |lambda'(x)|; +inf where the slope vanishes."""
        arr, scalar = _as_float_array(x)
        lam = np.asarray(self.eval(arr))
        der = np.abs(np.asarray(self.derivative(arr)))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(der < 1e-300, np.inf, lam / np.maximum(der, 1e-300))
        return _scalar_or_array(out, scalar)

    def to_dict(self) -> dict:
        d = {
            "family": self.family,
            "lambda_max": self.lambda_max,
            "alpha": self.alpha,
            "scale": self.scale,
            "support_ceiling": self.support_ceiling,
        }
        if self.points is not None:
            d["points"] = [list(p) for p in self.points]
        return d

    @staticmethod
    def from_dict(d: dict) -> "InverseDemand":
        points = d.get("points")
        return InverseDemand(
            family=d["family"],
            lambda_max=float(d["lambda_max"]),
            alpha=float(d.get("alpha", 0.0)),
            scale=float(d.get("scale", 1.0)),
            support_ceiling=float(d["support_ceiling"]),
            points=tuple((float(x), float(l)) for x, l in points) if points else None,
        )


def _regularity_grid(d: InverseDemand, grid_n: int) -> np.ndarray:
    if d.family == "tabulated":
        return 0.5 * (d._xs[:-1] + d._xs[1:])
    # Exclude the ceiling itself: the truncated curve is zero there.
    return np.linspace(0.0, d.support_ceiling, num=grid_n, endpoint=False)


def verify_regularity(
    d: InverseDemand,
    alpha: float,
    grid_n: int = 400,
    tol: float = 1e-8,
    shift: float = 0.0,
) -> bool:
    """Grid check of the regularity inequality for the given alpha.

    Verifies h(x2) - h(x1) <= alpha * (x2 - x1) + tol for all grid pairs
    x1 < x2, where h is the hazard ratio of lambda - shift (shift = 0 checks
    the curve itself).  Tabulated curves are sampled at segment midpoints,
    smooth families on a uniform grid.
    """
    if grid_n < 2:
        raise ValueError("grid_n must be at least 2")
    xs = _regularity_grid(d, grid_n)
    lam = np.asarray(d.eval(xs)) - shift
    der = np.abs(np.asarray(d.derivative(xs)))
    # Restrict to the region where the (shifted) curve is non-negative and
    # drop points past the support where both value and slope vanish.
    keep = (lam >= -1e-12) & ~((lam <= 0.0) & (der < 1e-300))
    xs, lam, der = xs[keep], np.maximum(lam[keep], 0.0), der[keep]
    if xs.size < 2:
        return True
    with np.errstate(divide="ignore", invalid="ignore"):
        h = np.where(der < 1e-300, np.inf, lam / np.maximum(der, 1e-300))
    dh = h[None, :] - h[:, None]
    dx = xs[None, :] - xs[:, None]
    upper = np.triu_indices(xs.size, k=1)
    with np.errstate(invalid="ignore"):
        ok = dh[upper] <= alpha * dx[upper] + tol
    # inf - inf pairs compare as NaN-False; a flat stretch at positive price
    # has an undefined hazard ratio and fails the definition outright.
    return bool(np.all(ok))
