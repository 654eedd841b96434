"""Fixed-price auction semantics and accounting identities."""

import pytest

from camech import (
    AdditiveValuation,
    GeneratorSpec,
    InputError,
    fixed_price_auction,
    generate_instance,
    rev_of_set,
)
from camech.bitset import full_mask, iter_items
from camech.rng import draw_below

KINDS = ["additive", "unit-demand", "xos", "budget-additive", "coverage", "symmetric-concave"]


def test_no_bidders_sells_nothing():
    res = fixed_price_auction([], 0b11, (1, 1))
    assert res.sold == 0
    assert res.revenue == 0.0
    assert res.welfare() == 0.0


def test_single_bidder_example():
    res = fixed_price_auction([AdditiveValuation([3, 1])], 0b11, (2, 2))
    assert res.bundles == (0b01,)
    assert res.payments == (2.0,)
    assert res.utilities == (1.0,)
    assert res.welfare() == 3.0


def test_arrival_order_matters():
    """The first bidder clears the market even against higher later values."""
    res = fixed_price_auction(
        [AdditiveValuation([3, 3]), AdditiveValuation([5, 5])], 0b11, (1, 1)
    )
    assert res.bundles == (0b11, 0)
    assert res.utilities == (4.0, 0.0)
    assert res.availables == (0b11, 0)


def test_rev_of_set():
    res = fixed_price_auction([AdditiveValuation([3, 1])], 0b11, (2, 2))
    assert rev_of_set(res, 0) == 0.0
    assert rev_of_set(res, 0b01) == 2.0
    assert rev_of_set(res, 0b10) == 0.0
    assert rev_of_set(res, 0b11) == 2.0
    with pytest.raises(InputError):
        rev_of_set(res, 0b100)


def test_revenue_by_item_matches_payments():
    res = fixed_price_auction(
        [AdditiveValuation([3, 0]), AdditiveValuation([0, 5])], 0b11, (1, 2)
    )
    assert res.revenue_by_item() == (1.0, 2.0)
    assert sum(res.revenue_by_item()) == res.revenue


def test_welfare_identity_on_random_auctions():
    """welfare == sum of utilities + revenue, exactly, for every kind."""
    for trial in range(60):
        kind = KINDS[trial % len(KINDS)]
        n = 1 + draw_below(trial, "n", 0, 4)
        inst = generate_instance(GeneratorSpec(kind=kind, n=n, m=6), trial)
        prices = [draw_below(trial, "p", e, 25) * 0.5 for e in range(6)]
        res = fixed_price_auction(list(inst.bidders), full_mask(6), prices)
        assert res.welfare() == sum(res.utilities) + res.revenue
        assert sum(res.payments) == res.revenue
        for u in res.utilities:
            assert u >= 0.0


def test_allocation_feasibility():
    for trial in range(20):
        inst = generate_instance(GeneratorSpec(kind="xos", n=3, m=6), trial)
        prices = [draw_below(trial, "pf", e, 9) * 1.0 for e in range(6)]
        res = fixed_price_auction(list(inst.bidders), full_mask(6), prices)
        taken = 0
        for pos, bundle in enumerate(res.bundles):
            assert bundle & ~res.availables[pos] == 0
            assert bundle & taken == 0
            taken |= bundle
        assert taken == res.sold


def test_truthful_response_dominates_alternatives():
    """No other bundle over the remaining items yields higher utility."""
    for trial in range(12):
        kind = KINDS[trial % len(KINDS)]
        inst = generate_instance(GeneratorSpec(kind=kind, n=2, m=5), trial)
        prices = [draw_below(trial, "pt", e, 17) * 0.5 for e in range(5)]
        res = fixed_price_auction(list(inst.bidders), full_mask(5), prices)
        for pos, v in enumerate(inst.bidders):
            available = res.availables[pos]
            alt = available
            while True:
                u = v.value(alt) - sum(prices[e] for e in iter_items(alt))
                assert u <= res.utilities[pos]
                if alt == 0:
                    break
                alt = (alt - 1) & available


def test_forced_bundle_must_be_available():
    with pytest.raises(InputError):
        fixed_price_auction(
            [AdditiveValuation([3, 1])], 0b01, (2, 2), forced={0: 0b10}
        )


def test_forced_bundle_substitutes_response():
    res = fixed_price_auction([AdditiveValuation([3, 1])], 0b11, (2, 2), forced={0: 0b11})
    assert res.bundles == (0b11,)
    assert res.utilities == (0.0,)


def test_price_validation():
    with pytest.raises(InputError):
        fixed_price_auction([AdditiveValuation([1, 1])], 0b11, (1, -2))
    with pytest.raises(InputError):
        fixed_price_auction([AdditiveValuation([1, 1])], 0b111, (1, 1))
