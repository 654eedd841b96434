"""The fixed-price auction subroutine.

Bidders arrive in a given order and each takes its most-demanded bundle
from the items still remaining at the posted prices (one demand query per
bidder). The result records, per participant, the bundle, the items that
were still available at query time, the value, the hypothetical payment
and the utility. Whether payments are actually collected is the caller's
decision: the price-learning mechanism discards all but one round.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .bitset import is_subset, iter_items
from .errors import InputError
from .valuations import Valuation, _check_prices, demand_query


@dataclass(frozen=True)
class FpaResult:
    """Outcome of one fixed-price auction run.

    Participant arrays (`bidder_ids`, `bundles`, `availables`, `values`,
    `payments`, `utilities`) are parallel, in arrival order. `sold` is the
    union of all allocated bundles.
    """

    items: int
    prices: tuple[float, ...]
    bidder_ids: tuple[int, ...]
    bundles: tuple[int, ...]
    availables: tuple[int, ...]
    values: tuple[float, ...]
    payments: tuple[float, ...]
    utilities: tuple[float, ...]
    sold: int

    @property
    def demand_queries(self) -> int:
        return len(self.bidder_ids)

    @property
    def revenue(self) -> float:
        return sum(self.payments)

    def revenue_by_item(self) -> tuple[float, ...]:
        return tuple(
            self.prices[e] if self.sold >> e & 1 else 0.0 for e in range(len(self.prices))
        )

    def welfare(self) -> float:
        return sum(self.values)

    def allocation_map(self) -> dict[int, int]:
        return dict(zip(self.bidder_ids, self.bundles))


def fixed_price_auction(
    bidders: Sequence[Valuation],
    items: int,
    prices: Sequence[float],
    bidder_ids: Sequence[int] | None = None,
    forced: Mapping[int, int] | None = None,
    limit: int | None = None,
) -> FpaResult:
    """Run a fixed-price auction over `items` at the given per-item prices.

    Args:
        bidders: valuations in arrival order.
        items: bitmask of items on sale.
        prices: one non-negative price per item index (length m).
        bidder_ids: external ids parallel to `bidders` (default 0..len-1).
        forced: optional bidder_id -> bundle overrides standing in for that
            bidder's demand response (used for deviation testing); the bundle
            must be a subset of the items remaining at the bidder's turn.
        limit: exhaustive-demand size limit override.

    Returns:
        FpaResult; utilities are >= 0 for every truthful response since the
        empty bundle is always available.
    """
    prices = tuple(float(p) for p in prices)
    m = len(prices)
    _check_prices(prices, m)
    if not is_subset(items, (1 << m) - 1):
        raise InputError(f"items {bin(items)} reference positions outside 0..{m - 1}")
    ids = tuple(bidder_ids) if bidder_ids is not None else tuple(range(len(bidders)))
    if len(ids) != len(bidders):
        raise InputError(f"{len(ids)} bidder ids for {len(bidders)} bidders")

    remaining = items
    bundles: list[int] = []
    availables: list[int] = []
    values: list[float] = []
    payments: list[float] = []
    utilities: list[float] = []
    for v, bidder_id in zip(bidders, ids):
        if v.m != m:
            raise InputError(f"bidder {bidder_id} is over {v.m} items, auction has {m}")
        availables.append(remaining)
        if forced is not None and bidder_id in forced:
            bundle = forced[bidder_id]
            if not is_subset(bundle, remaining):
                raise InputError(
                    f"forced bundle {bin(bundle)} for bidder {bidder_id} is not available"
                )
        else:
            bundle = demand_query(v, prices, remaining, limit=limit)
        value = v.value(bundle)
        payment = sum(prices[e] for e in iter_items(bundle))
        bundles.append(bundle)
        values.append(value)
        payments.append(payment)
        utilities.append(value - payment)
        remaining &= ~bundle

    return FpaResult(
        items=items,
        prices=prices,
        bidder_ids=ids,
        bundles=tuple(bundles),
        availables=tuple(availables),
        values=tuple(values),
        payments=tuple(payments),
        utilities=tuple(utilities),
        sold=items & ~remaining,
    )


def rev_of_set(result: FpaResult, mask: int) -> float:
    """Revenue obtained from selling the items in `mask`: sum of prices of
    sold items inside it."""
    if not is_subset(mask, (1 << len(result.prices)) - 1):
        raise InputError(f"set {bin(mask)} references items outside the auction universe")
    return sum(result.prices[e] for e in iter_items(mask & result.sold))
