"""Instance and result serialization.

Instance files are JSON-syntax documents with a versioned schema: goods carry
their cost parameters, buyer types their bundles and demand curve.  Loading
re-validates every market invariant and reports all violations at once, not
just the first.  Serialization is deterministic: floats are rounded to 12
significant digits and keys are sorted, so identical inputs produce
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
import math

from .costs import CostDomainError, CostFunction
from .demand import InverseDemand
from .market import BuyerType, MarketInstance, MarketValidationError

__all__ = [
    "SCHEMA_VERSION",
    "InstanceFormatError",
    "dump_record",
    "dumps",
    "instance_digest",
    "load",
    "loads",
    "save",
]

SCHEMA_VERSION = "1"
FLOAT_DIGITS = 12

_TOP_KEYS = {"schema_version", "goods", "buyer_types", "metadata"}
_GOOD_KEYS = {"id", "cost"}
_COST_KEYS = {"family", "a", "beta", "breakpoints"}
_TYPE_KEYS = {"id", "bundles", "demand"}
_DEMAND_KEYS = {"family", "lambda_max", "alpha", "scale", "support_ceiling", "points"}


class InstanceFormatError(ValueError):
    """Parse or validation failure listing every detected problem."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


def _round_floats(obj):
    if isinstance(obj, float):
        if math.isinf(obj) or math.isnan(obj):
            return obj
        return float(f"{obj:.{FLOAT_DIGITS}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def dump_record(obj) -> str:
    """Deterministic JSON for result records: sorted keys, 12 significant digits."""
    return json.dumps(_round_floats(obj), sort_keys=True, indent=2) + "\n"


def _check_unknown(problems, mapping, allowed, where):
    for k in mapping:
        if k not in allowed:
            problems.append(f"{where}: unknown key {k!r}")


def _demand_from_spec(spec: dict, where: str, problems: list, strict: bool):
    if strict:
        _check_unknown(problems, spec, _DEMAND_KEYS, where)
    family = spec.get("family")
    try:
        lambda_max = float(spec["lambda_max"])
        alpha = float(spec.get("alpha", 0.0))
        scale = float(spec.get("scale", 1.0))
        if family == "tabulated":
            return InverseDemand.tabulated(spec["points"], alpha)
        if "support_ceiling" in spec:
            return InverseDemand(family, lambda_max, alpha, scale, float(spec["support_ceiling"]))
        if family == "linear":
            return InverseDemand.linear(lambda_max, scale)
        if family == "exponential":
            return InverseDemand.exponential(lambda_max, scale)
        if family == "generalized-pareto":
            return InverseDemand.generalized_pareto(lambda_max, alpha, scale)
        problems.append(f"{where}: unknown demand family {family!r}")
    except KeyError as e:
        problems.append(f"{where}: missing field {e.args[0]!r}")
    except (TypeError, ValueError) as e:
        problems.append(f"{where}: {e}")
    return None


def _cost_from_spec(spec: dict, where: str, problems: list, strict: bool):
    if strict:
        _check_unknown(problems, spec, _COST_KEYS, where)
    try:
        return CostFunction.from_dict(spec)
    except KeyError as e:
        problems.append(f"{where}: missing field {e.args[0]!r}")
    except (TypeError, ValueError, CostDomainError) as e:
        problems.append(f"{where}: {e}")
    return None


def loads(text: str, strict: bool = False) -> MarketInstance:
    """Parse and validate an instance document; see load."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InstanceFormatError(
            [f"parse error at line {e.lineno}, column {e.colno}: {e.msg}"]
        ) from None
    problems: list[str] = []
    if not isinstance(doc, dict):
        raise InstanceFormatError(["top level must be an object"])
    if strict:
        _check_unknown(problems, doc, _TOP_KEYS, "top level")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        problems.append(
            f"schema_version: expected {SCHEMA_VERSION!r}, found {version!r}"
        )

    goods = []
    for k, entry in enumerate(doc.get("goods", [])):
        where = f"goods[{k}]"
        if strict:
            _check_unknown(problems, entry, _GOOD_KEYS, where)
        if "id" not in entry:
            problems.append(f"{where}: missing id")
            continue
        cost = _cost_from_spec(entry.get("cost", {}), f"{where}.cost", problems, strict)
        if cost is not None:
            goods.append((str(entry["id"]), cost))

    buyer_types = []
    for k, entry in enumerate(doc.get("buyer_types", [])):
        where = f"buyer_types[{k}]"
        if strict:
            _check_unknown(problems, entry, _TYPE_KEYS, where)
        if "id" not in entry:
            problems.append(f"{where}: missing id")
            continue
        demand = _demand_from_spec(
            entry.get("demand", {}), f"{where}.demand", problems, strict
        )
        bundles = entry.get("bundles", [])
        if demand is not None:
            buyer_types.append((str(entry["id"]), bundles, demand))

    if problems:
        raise InstanceFormatError(problems)
    try:
        return MarketInstance.create(goods, buyer_types)
    except MarketValidationError as e:
        raise InstanceFormatError(e.problems) from None


def load(path, strict: bool = False) -> MarketInstance:
    """Load an instance file, reporting every format or invariant violation."""
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read(), strict=strict)


def instance_to_dict(inst: MarketInstance, metadata: dict | None = None) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "goods": [
            {"id": g, "cost": c.to_dict()} for g, c in inst.goods
        ],
        "buyer_types": [
            {
                "id": t.type_id,
                "bundles": [list(b) for b in t.bundles],
                "demand": t.demand.to_dict(),
            }
            for t in inst.buyer_types
        ],
        "metadata": metadata or {},
    }
    return doc


def dumps(inst: MarketInstance, metadata: dict | None = None) -> str:
    return dump_record(instance_to_dict(inst, metadata))


def save(inst: MarketInstance, path, metadata: dict | None = None):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(inst, metadata))


def instance_digest(inst: MarketInstance) -> str:
    """Stable content hash of the instance (metadata excluded)."""
    return hashlib.sha256(dumps(inst).encode("utf-8")).hexdigest()[:16]
