"""Valuation functions over item bundles, with value and demand queries.

A valuation maps bundles (bitmasks over m items) to non-negative reals.
Seven kinds are supported: additive, unit-demand, XOS (max over additive
clauses), budget-additive, coverage, symmetric-concave, and explicit
tables. Additive and unit-demand valuations answer demand queries through
closed-form fast paths; every other kind enumerates bundles exhaustively.

Demand ties are broken deterministically: smaller cardinality first, then
smaller bitmask. Comparisons are exact (no epsilon); generated instances
keep all values on a dyadic grid so float arithmetic never rounds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .bitset import full_mask, is_subset, iter_items
from .errors import CapabilityError, InputError, InternalError
from .rng import draw_below

# Largest |available| for which exhaustive demand enumeration is attempted.
DEFAULT_EXHAUSTIVE_LIMIT = 12
# Full-table caching bound; above this the table would not fit desk scale.
TABLE_LIMIT = 20
# Enumeration bounds for the property validators.
MONOTONE_CHECK_LIMIT = 12
SUBADDITIVE_CHECK_LIMIT = 7

CHECK_TOLERANCE = 1e-9


class Valuation:
    """Base class: normalized (v(empty)=0) set function on m items."""

    kind = "abstract"

    def __init__(self, m: int):
        if m < 0 or m > 30:
            raise InputError(f"item count m={m} outside supported range 0..30")
        self.m = m
        self._table: list[float] | None = None

    def value(self, mask: int) -> float:
        raise NotImplementedError

    def fast_demand(self, prices: Sequence[float], available: int) -> int | None:
        """Closed-form demand bundle, or None if this kind has no fast path."""
        return None

    def table(self) -> list[float]:
        """All 2^m values, built lazily and cached (oracle is otherwise immutable)."""
        if self._table is None:
            if self.m > TABLE_LIMIT:
                raise CapabilityError(
                    f"value table needs 2^{self.m} entries; limit is m <= {TABLE_LIMIT}"
                )
            self._table = [self.value(s) for s in range(1 << self.m)]
        return self._table

    def params(self) -> dict:
        """Kind-specific constructor parameters, for serialization."""
        raise NotImplementedError

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Valuation)
            and self.kind == other.kind
            and self.m == other.m
            and self.params() == other.params()
        )

    def __hash__(self) -> int:
        # Coarse on purpose: params() is a dict and equality does the real work.
        return hash((self.kind, self.m))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(m={self.m})"


def _check_value_list(values: Sequence[float], what: str) -> tuple[float, ...]:
    out = []
    for j, x in enumerate(values):
        x = float(x)
        if not 0.0 <= x < float("inf"):
            raise InputError(f"{what}[{j}] must be finite and >= 0, got {x!r}")
        out.append(x)
    return tuple(out)


class AdditiveValuation(Valuation):
    """v(S) = sum of per-item values."""

    kind = "additive"

    def __init__(self, values: Sequence[float]):
        super().__init__(len(values))
        self.values = _check_value_list(values, "values")

    def value(self, mask: int) -> float:
        return sum(self.values[e] for e in iter_items(mask))

    def fast_demand(self, prices: Sequence[float], available: int) -> int:
        # Take exactly the items with positive margin; items at margin zero
        # are excluded by the smaller-cardinality tie rule.
        mask = 0
        for e in iter_items(available):
            if self.values[e] > prices[e]:
                mask |= 1 << e
        return mask

    def params(self) -> dict:
        return {"values": list(self.values)}


class UnitDemandValuation(Valuation):
    """v(S) = max per-item value in S (0 for the empty bundle)."""

    kind = "unit-demand"

    def __init__(self, values: Sequence[float]):
        super().__init__(len(values))
        self.values = _check_value_list(values, "values")

    def value(self, mask: int) -> float:
        return max((self.values[e] for e in iter_items(mask)), default=0.0)

    def fast_demand(self, prices: Sequence[float], available: int) -> int:
        # The optimum is a singleton or empty: extra items only add price,
        # and a zero-price extra item loses the cardinality tie-break.
        best_u = 0.0
        best = 0
        for e in iter_items(available):
            u = self.values[e] - prices[e]
            if u > best_u:
                best_u = u
                best = 1 << e
        return best

    def params(self) -> dict:
        return {"values": list(self.values)}


class XosValuation(Valuation):
    """v(S) = max over additive clauses of the clause's sum on S."""

    kind = "xos"

    def __init__(self, clauses: Sequence[Sequence[float]]):
        if not clauses:
            raise InputError("xos valuation needs at least one clause")
        m = len(clauses[0])
        super().__init__(m)
        checked = []
        for c, clause in enumerate(clauses):
            if len(clause) != m:
                raise InputError(f"clauses[{c}] has length {len(clause)}, expected {m}")
            checked.append(_check_value_list(clause, f"clauses[{c}]"))
        self.clauses = tuple(checked)

    def value(self, mask: int) -> float:
        items = list(iter_items(mask))
        return max(sum(clause[e] for e in items) for clause in self.clauses)

    def params(self) -> dict:
        return {"clauses": [list(c) for c in self.clauses]}


class BudgetAdditiveValuation(Valuation):
    """v(S) = min(budget, sum of per-item values)."""

    kind = "budget-additive"

    def __init__(self, budget: float, values: Sequence[float]):
        super().__init__(len(values))
        budget = float(budget)
        if not 0.0 <= budget < float("inf"):
            raise InputError(f"budget must be finite and >= 0, got {budget!r}")
        self.budget = budget
        self.values = _check_value_list(values, "values")

    def value(self, mask: int) -> float:
        return min(self.budget, sum(self.values[e] for e in iter_items(mask)))

    def params(self) -> dict:
        return {"budget": self.budget, "values": list(self.values)}


class CoverageValuation(Valuation):
    """Weighted coverage: v(S) = total weight of ground elements covered by S."""

    kind = "coverage"

    def __init__(self, weights: Sequence[float], covers: Sequence[Sequence[int]]):
        super().__init__(len(covers))
        self.weights = _check_value_list(weights, "weights")
        g = len(self.weights)
        masks = []
        for e, elems in enumerate(covers):
            mask = 0
            for x in elems:
                if not 0 <= int(x) < g:
                    raise InputError(f"covers[{e}] references ground element {x} outside 0..{g - 1}")
                mask |= 1 << int(x)
            masks.append(mask)
        self._cover_masks = tuple(masks)
        self.covers = tuple(tuple(sorted(set(int(x) for x in elems))) for elems in covers)

    def value(self, mask: int) -> float:
        covered = 0
        for e in iter_items(mask):
            covered |= self._cover_masks[e]
        return sum(self.weights[g] for g in iter_items(covered))

    def params(self) -> dict:
        return {"weights": list(self.weights), "covers": [list(c) for c in self.covers]}


class SymmetricConcaveValuation(Valuation):
    """v(S) = f(|S|) for a concave nondecreasing step table f(0..m), f(0)=0."""

    kind = "symmetric-concave"

    def __init__(self, steps: Sequence[float]):
        if not steps:
            raise InputError("steps must contain f(0)..f(m)")
        super().__init__(len(steps) - 1)
        self.steps = _check_value_list(steps, "steps")
        if self.steps[0] != 0.0:
            raise InputError("steps[0] must be 0 (normalization)")

    def value(self, mask: int) -> float:
        return self.steps[mask.bit_count()]

    def params(self) -> dict:
        return {"steps": list(self.steps)}


class TableValuation(Valuation):
    """Explicit 2^m value table. May be labeled subadditive by its producer."""

    kind = "explicit"

    def __init__(self, table: Sequence[float], subadditive: bool = False):
        size = len(table)
        m = size.bit_length() - 1
        if size != 1 << m:
            raise InputError(f"table has {size} entries, expected a power of two")
        super().__init__(m)
        entries = _check_value_list(table, "table")
        if entries[0] != 0.0:
            raise InputError("table[0] (the empty bundle) must be 0")
        self.subadditive_label = bool(subadditive)
        self._table = list(entries)

    def value(self, mask: int) -> float:
        return self._table[mask]

    def params(self) -> dict:
        return {"table": list(self._table), "subadditive": self.subadditive_label}


# ---------------------------------------------------------------------------
# Queries


def value_query(v: Valuation, mask: int) -> float:
    """Exact value of the bundle `mask` under valuation v."""
    if not is_subset(mask, full_mask(v.m)):
        raise InputError(f"bundle {bin(mask)} references items outside 0..{v.m - 1}")
    return v.value(mask)


def _check_prices(prices: Sequence[float], m: int) -> None:
    if len(prices) != m:
        raise InputError(f"price vector has {len(prices)} entries, expected {m}")
    for e, p in enumerate(prices):
        if not 0.0 <= p < float("inf"):
            raise InputError(f"price[{e}] must be finite and >= 0, got {p!r}")


def _exhaustive_demand(v: Valuation, prices: Sequence[float], available: int, limit: int) -> int:
    bits = list(iter_items(available))
    k = len(bits)
    if k > limit:
        raise CapabilityError(
            f"exhaustive demand over {k} items exceeds the limit of {limit}"
        )
    table = v.table()
    # Gray-code walk: one item toggles per step, so the running price is
    # maintained with a single add or subtract (exact on dyadic inputs).
    best_mask, best_u, best_card = 0, 0.0, 0
    mask = 0
    cost = 0.0
    for step in range(1, 1 << k):
        j = (step & -step).bit_length() - 1
        bit = 1 << bits[j]
        if mask & bit:
            mask ^= bit
            cost -= prices[bits[j]]
        else:
            mask |= bit
            cost += prices[bits[j]]
        u = table[mask] - cost
        if u > best_u:
            best_mask, best_u, best_card = mask, u, mask.bit_count()
        elif u == best_u:
            card = mask.bit_count()
            if (card, mask) < (best_card, best_mask):
                best_mask, best_card = mask, card
    return best_mask


def demand_query(
    v: Valuation,
    prices: Sequence[float],
    available: int,
    limit: int | None = None,
) -> int:
    """Most-demanded bundle: argmax over S subset of `available` of v(S) - p(S).

    Ties go to the smaller cardinality, then the smaller bitmask, so the
    result is unique and the empty bundle wins whenever nothing has strictly
    positive utility.
    """
    _check_prices(prices, v.m)
    if not is_subset(available, full_mask(v.m)):
        raise InputError(f"available set {bin(available)} references items outside 0..{v.m - 1}")
    fast = v.fast_demand(prices, available)
    if fast is not None:
        return fast
    return _exhaustive_demand(v, prices, available, DEFAULT_EXHAUSTIVE_LIMIT if limit is None else limit)


def demand_utility(v: Valuation, prices: Sequence[float], bundle: int) -> float:
    """Utility v(bundle) - p(bundle) of taking `bundle` at the given prices."""
    return value_query(v, bundle) - sum(prices[e] for e in iter_items(bundle))


# ---------------------------------------------------------------------------
# Validators


def is_monotone(v: Valuation, limit: int = MONOTONE_CHECK_LIMIT) -> bool:
    """Exhaustively check v(S) <= v(S + e) + tolerance for every S and e."""
    if v.m > limit:
        raise CapabilityError(f"monotonicity check needs m <= {limit}, got {v.m}")
    table = v.table()
    for mask in range(1 << v.m):
        base = table[mask]
        for e in range(v.m):
            if mask >> e & 1:
                continue
            if table[mask | (1 << e)] < base - CHECK_TOLERANCE:
                return False
    return True


def is_subadditive(v: Valuation, limit: int = SUBADDITIVE_CHECK_LIMIT) -> bool:
    """Exhaustively check v(S | T) <= v(S) + v(T) + tolerance over all pairs."""
    if v.m > limit:
        raise CapabilityError(f"subadditivity check needs m <= {limit}, got {v.m}")
    table = v.table()
    size = 1 << v.m
    for s in range(size):
        vs = table[s]
        for t in range(s, size):
            if table[s | t] > vs + table[t] + CHECK_TOLERANCE:
                return False
    return True


def subadditive_violation(v: Valuation, limit: int = SUBADDITIVE_CHECK_LIMIT) -> tuple[int, int] | None:
    """First (S, T) pair violating subadditivity, or None if the check passes."""
    if v.m > limit:
        raise CapabilityError(f"subadditivity check needs m <= {limit}, got {v.m}")
    table = v.table()
    size = 1 << v.m
    for s in range(size):
        for t in range(s, size):
            if table[s | t] > table[s] + table[t] + CHECK_TOLERANCE:
                return (s, t)
    return None


def subadditive_repair(table: Sequence[float]) -> TableValuation:
    """Monotone-subadditive closure of a raw 2^m value table.

    Alternates two sweeps until a joint fixpoint: a min pass capping v(S) by
    the cheapest two-part partition of S, and a max pass lifting v(S) to the
    best value of any subset. Each sweep runs in ascending mask order, which
    resolves its own recursion completely, so the loop settles after at most
    two iterations; the 2^m cap is a safety net.
    """
    size = len(table)
    m = size.bit_length() - 1
    if size != 1 << m:
        raise InputError(f"table has {size} entries, expected a power of two")
    values = [float(x) for x in table]
    if values[0] != 0.0:
        raise InputError("table[0] (the empty bundle) must be 0")
    for j, x in enumerate(values):
        if not 0.0 <= x < float("inf"):
            raise InputError(f"table[{j}] must be finite and >= 0, got {x!r}")

    for _ in range(max(size, 2)):
        changed = False
        # Min pass: v(S) <- min over partitions S = A + B (disjoint, nonempty).
        for s in range(1, size):
            a = (s - 1) & s
            while a:
                cand = values[a] + values[s ^ a]
                if cand < values[s]:
                    values[s] = cand
                    changed = True
                a = (a - 1) & s
        # Max pass: v(S) <- max over subsets, making the table monotone.
        for s in range(1, size):
            rest = s
            while rest:
                low = rest & -rest
                if values[s ^ low] > values[s]:
                    values[s] = values[s ^ low]
                    changed = True
                rest ^= low
        if not changed:
            return TableValuation(values, subadditive=True)
    raise InternalError("subadditive repair did not converge within the pass cap")


# ---------------------------------------------------------------------------
# Instances and generators


@dataclass(frozen=True)
class Instance:
    """An auction instance: m items and an ordered list of bidder valuations."""

    m: int
    bidders: tuple[Valuation, ...]

    def __post_init__(self):
        for i, v in enumerate(self.bidders):
            if v.m != self.m:
                raise InputError(f"bidders[{i}] is over {v.m} items, instance has {self.m}")

    @property
    def n(self) -> int:
        return len(self.bidders)

    def grand_values(self) -> tuple[float, ...]:
        grand = full_mask(self.m)
        return tuple(v.value(grand) for v in self.bidders)

    def max_grand_value(self) -> float:
        return max(self.grand_values(), default=0.0)

    def kind_label(self) -> str:
        kinds = {v.kind for v in self.bidders}
        if not kinds:
            return "empty"
        return kinds.pop() if len(kinds) == 1 else "mixed"


GENERATOR_KINDS = (
    "additive",
    "unit-demand",
    "xos",
    "budget-additive",
    "coverage",
    "symmetric-concave",
    "explicit-subadditive",
)


@dataclass(frozen=True)
class GeneratorSpec:
    """Configuration for random instance generation.

    Raw draws are integers in [0, value_hi] scaled by 2^-scale_bits, keeping
    every value (and every price derived from them) exactly representable.
    """

    kind: str
    n: int
    m: int
    value_hi: int = 16
    scale_bits: int = 0
    clauses: int = 3
    ground: int | None = None
    budget_hi: int | None = None

    def __post_init__(self):
        if self.kind not in GENERATOR_KINDS:
            raise InputError(f"unknown generator kind {self.kind!r}; expected one of {GENERATOR_KINDS}")
        if self.n < 0:
            raise InputError(f"n must be >= 0, got {self.n}")
        if self.m < 1 or self.m > 30:
            raise InputError(f"m must be in 1..30, got {self.m}")
        if self.value_hi < 1:
            raise InputError(f"value_hi must be >= 1, got {self.value_hi}")
        if not 0 <= self.scale_bits <= 20:
            raise InputError(f"scale_bits must be in 0..20, got {self.scale_bits}")
        if self.clauses < 1:
            raise InputError(f"clauses must be >= 1, got {self.clauses}")
        if self.ground is not None and self.ground < 1:
            raise InputError(f"ground must be >= 1, got {self.ground}")
        if self.budget_hi is not None and self.budget_hi < 1:
            raise InputError(f"budget_hi must be >= 1, got {self.budget_hi}")
        if self.kind == "explicit-subadditive" and self.m > 10:
            raise InputError("explicit-subadditive generation needs m <= 10")

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        if not isinstance(d, dict):
            raise InputError("generator spec must be a JSON object")
        known = {"kind", "n", "m", "value_hi", "scale_bits", "clauses", "ground", "budget_hi"}
        for key in d:
            if key not in known:
                raise InputError(f"unknown generator spec field {key!r}")
        for req in ("kind", "n", "m"):
            if req not in d:
                raise InputError(f"generator spec is missing required field {req!r}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise InputError(f"bad generator spec: {exc}") from exc

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n, "m": self.m,
             "value_hi": self.value_hi, "scale_bits": self.scale_bits}
        if self.kind == "xos":
            d["clauses"] = self.clauses
        if self.kind == "coverage":
            d["ground"] = self.ground if self.ground is not None else 2 * self.m
        if self.kind == "budget-additive":
            d["budget_hi"] = self.budget_hi if self.budget_hi is not None else self.value_hi * 2
        return d


def _draw_scaled(seed: int, label: str, index: int, hi: int, scale: float) -> float:
    return draw_below(seed, label, index, hi + 1) * scale


def generate_instance(spec: GeneratorSpec, seed: int) -> Instance:
    """Deterministically generate an instance from (spec, seed).

    Every generated valuation is monotone and subadditive by construction.
    """
    scale = 2.0 ** -spec.scale_bits
    bidders: list[Valuation] = []
    for i in range(spec.n):
        if spec.kind == "additive":
            vals = [_draw_scaled(seed, f"gen-add/{i}", e, spec.value_hi, scale) for e in range(spec.m)]
            bidders.append(AdditiveValuation(vals))
        elif spec.kind == "unit-demand":
            vals = [_draw_scaled(seed, f"gen-ud/{i}", e, spec.value_hi, scale) for e in range(spec.m)]
            bidders.append(UnitDemandValuation(vals))
        elif spec.kind == "xos":
            clauses = []
            for c in range(spec.clauses):
                clauses.append(
                    [_draw_scaled(seed, f"gen-xos/{i}/{c}", e, spec.value_hi, scale) for e in range(spec.m)]
                )
            bidders.append(XosValuation(clauses))
        elif spec.kind == "budget-additive":
            budget_hi = spec.budget_hi if spec.budget_hi is not None else spec.value_hi * 2
            budget = (1 + draw_below(seed, f"gen-ba-budget/{i}", 0, budget_hi)) * scale
            vals = [_draw_scaled(seed, f"gen-ba/{i}", e, spec.value_hi, scale) for e in range(spec.m)]
            bidders.append(BudgetAdditiveValuation(budget, vals))
        elif spec.kind == "coverage":
            ground = spec.ground if spec.ground is not None else 2 * spec.m
            weights = [_draw_scaled(seed, f"gen-cov-w/{i}", g, spec.value_hi, scale) for g in range(ground)]
            covers = []
            for e in range(spec.m):
                covers.append(
                    [g for g in range(ground) if draw_below(seed, f"gen-cov/{i}/{e}", g, 2) == 1]
                )
            bidders.append(CoverageValuation(weights, covers))
        elif spec.kind == "symmetric-concave":
            incs = sorted(
                (draw_below(seed, f"gen-sym/{i}", j, spec.value_hi + 1) for j in range(spec.m)),
                reverse=True,
            )
            steps = [0.0]
            for d in incs:
                steps.append(steps[-1] + d * scale)
            bidders.append(SymmetricConcaveValuation(steps))
        elif spec.kind == "explicit-subadditive":
            raw = [0.0] + [
                _draw_scaled(seed, f"gen-table/{i}", s, spec.value_hi, scale)
                for s in range(1, 1 << spec.m)
            ]
            bidders.append(subadditive_repair(raw))
        else:  # pragma: no cover - guarded by GeneratorSpec
            raise InputError(f"unknown generator kind {spec.kind!r}")
    return Instance(m=spec.m, bidders=tuple(bidders))
