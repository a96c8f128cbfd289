"""Doubly convex production cost functions.

A cost function here has marginal c(y) = a * y^beta on each piece, so both
the total cost and its derivative are convex, non-decreasing, and vanish at
zero.  That double convexity yields the inequality C(y) <= c(y) * y / 2 that
the pricing guarantees lean on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["CostDomainError", "CostFunction"]


class CostDomainError(ValueError):
    """Raised for negative quantities or invalid cost parameters."""


@dataclass(frozen=True)
class CostFunction:
    """Per-good production cost with marginal a * y^beta.

    The power family is the single piece C(y) = a * y^(beta+1) / (beta+1).
    The piecewise-power family switches to a new exponent at each breakpoint
    (quantity, exponent); the piece coefficients are derived so the marginal
    stays continuous, and exponents must be non-decreasing so it stays convex.
    """

    family: str
    a: float
    beta: float
    breakpoints: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.family not in ("power", "piecewise-power"):
            raise CostDomainError(f"unknown cost family {self.family!r}")
        if not self.a > 0:
            raise CostDomainError("cost coefficient must be positive")
        if self.beta < 1.0:
            raise CostDomainError("marginal exponent must be at least 1")
        if self.family == "power" and self.breakpoints:
            raise CostDomainError("power costs take no breakpoints")
        if self.family == "piecewise-power":
            ys = [b[0] for b in self.breakpoints]
            if not self.breakpoints:
                raise CostDomainError("piecewise-power needs at least one breakpoint")
            if any(y <= 0 for y in ys) or any(b <= a for a, b in zip(ys, ys[1:])):
                raise CostDomainError("breakpoints must be positive and increasing")
            exps = [self.beta] + [b[1] for b in self.breakpoints]
            if any(e2 < e1 for e1, e2 in zip(exps, exps[1:])):
                raise CostDomainError(
                    "piece exponents must be non-decreasing to keep the marginal convex"
                )
        self._validate_half_income_bound()

    @staticmethod
    def power(a: float, beta: float) -> "CostFunction":
        return CostFunction("power", a, beta)

    @staticmethod
    def piecewise_power(a: float, beta: float, breakpoints) -> "CostFunction":
        return CostFunction(
            "piecewise-power", a, beta, tuple((float(y), float(b)) for y, b in breakpoints)
        )

    @cached_property
    def _pieces(self):
        """Arrays (start_y, coeff, exponent, total_at_start) per piece."""
        starts = [0.0]
        coeffs = [self.a]
        exps = [self.beta]
        totals = [0.0]
        for y_break, new_exp in self.breakpoints:
            a_k, b_k, y_k, c_k = coeffs[-1], exps[-1], starts[-1], totals[-1]
            total_at_break = c_k + a_k * (y_break ** (b_k + 1) - y_k ** (b_k + 1)) / (b_k + 1)
            marginal_at_break = a_k * y_break**b_k
            starts.append(y_break)
            coeffs.append(marginal_at_break / y_break**new_exp)
            exps.append(new_exp)
            totals.append(total_at_break)
        return (
            np.array(starts),
            np.array(coeffs),
            np.array(exps),
            np.array(totals),
        )

    def _piece_index(self, y):
        starts = self._pieces[0]
        return np.clip(np.searchsorted(starts, y, side="right") - 1, 0, len(starts) - 1)

    def marginal(self, y):
        """Marginal cost c(y)."""
        arr = np.asarray(y, dtype=float)
        scalar = arr.ndim == 0
        if np.any(arr < 0):
            raise CostDomainError("cost evaluated at negative quantity")
        if self.family == "power":
            out = self.a * arr**self.beta
        else:
            _, coeffs, exps, _ = self._pieces
            k = self._piece_index(arr)
            out = coeffs[k] * arr ** exps[k]
        return float(out) if scalar else out

    def total(self, y):
        """Total cost C(y), the integral of the marginal."""
        arr = np.asarray(y, dtype=float)
        scalar = arr.ndim == 0
        if np.any(arr < 0):
            raise CostDomainError("cost evaluated at negative quantity")
        if self.family == "power":
            out = self.a * arr ** (self.beta + 1.0) / (self.beta + 1.0)
        else:
            starts, coeffs, exps, totals = self._pieces
            k = self._piece_index(arr)
            out = totals[k] + coeffs[k] * (
                arr ** (exps[k] + 1.0) - starts[k] ** (exps[k] + 1.0)
            ) / (exps[k] + 1.0)
        return float(out) if scalar else out

    def marginal_inverse(self, p):
        """Quantity y with c(y) = p."""
        arr = np.asarray(p, dtype=float)
        scalar = arr.ndim == 0
        if np.any(arr < 0):
            raise CostDomainError("marginal inverse needs a non-negative price")
        if self.family == "power":
            out = (arr / self.a) ** (1.0 / self.beta)
        else:
            starts, coeffs, exps, _ = self._pieces
            marg_at_start = coeffs * starts**exps
            k = np.clip(np.searchsorted(marg_at_start, arr, side="right") - 1, 0, len(starts) - 1)
            out = (arr / coeffs[k]) ** (1.0 / exps[k])
        return float(out) if scalar else out

    def _validate_half_income_bound(self):
        # Double convexity gives C(y) <= c(y) * y / 2; spot-check it on a grid
        # at load time so downstream guarantee arithmetic can rely on it.
        ys = np.linspace(0.0, self._probe_ceiling(), 64)[1:]
        total = np.asarray(self.total(ys))
        marginal = np.asarray(self.marginal(ys))
        if np.any(total > 0.5 * marginal * ys * (1.0 + 1e-9)):
            raise CostDomainError("cost violates C(y) <= c(y) * y / 2")

    def _probe_ceiling(self) -> float:
        if self.family == "power":
            return 10.0
        return 2.0 * self.breakpoints[-1][0] + 10.0

    def to_dict(self) -> dict:
        d = {"family": self.family, "a": self.a, "beta": self.beta}
        if self.breakpoints:
            d["breakpoints"] = [list(b) for b in self.breakpoints]
        return d

    @staticmethod
    def from_dict(d: dict) -> "CostFunction":
        breakpoints = tuple(
            (float(y), float(b)) for y, b in d.get("breakpoints", ())
        )
        return CostFunction(d["family"], float(d["a"]), float(d["beta"]), breakpoints)
