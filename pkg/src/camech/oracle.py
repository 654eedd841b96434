"""Exact optimal-welfare references.

Two independent brute-force routes: a subset dynamic program over item
masks (the workhorse, m <= 15) and a naive enumeration of every
item-to-bidder assignment (the cross-check, (n+1)^m bounded). Both return
the maximum welfare and one maximizing allocation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bitset import full_mask
from .errors import CapabilityError
from .valuations import Instance

DP_ITEM_LIMIT = 15
NAIVE_ASSIGNMENT_LIMIT = 2_000_000


@dataclass(frozen=True)
class OptResult:
    """Optimal welfare and a maximizing allocation (bundle per bidder)."""

    welfare: float
    allocation: tuple[int, ...]


def brute_force_opt(instance: Instance, limit: int = DP_ITEM_LIMIT) -> OptResult:
    """Optimal welfare by dynamic programming over item subsets.

    State: best welfare W[S] achievable by splitting the items of S among the
    bidders processed so far. Each bidder step maximizes v_i(T) + W[S - T]
    over submasks T; allocating nothing is allowed, so partial allocations
    are handled uniformly. Ties pick the smallest bundle mask at each state.
    """
    m = instance.m
    if m > limit:
        raise CapabilityError(f"welfare DP needs m <= {limit}, got {m}")
    n = instance.n
    if n == 0 or m == 0:
        return OptResult(0.0, (0,) * n)

    size = 1 << m
    welfare = [0.0] * size
    choices: list[list[int]] = []
    for v in instance.bidders:
        table = v.table()
        new_welfare = [0.0] * size
        choice = [0] * size
        for s in range(size):
            best = welfare[s]  # bidder takes nothing
            best_t = 0
            t = s
            while t:
                cand = table[t] + welfare[s ^ t]
                if cand > best or (cand == best and t < best_t):
                    best, best_t = cand, t
                t = (t - 1) & s
            new_welfare[s] = best
            choice[s] = best_t
        welfare = new_welfare
        choices.append(choice)

    allocation = [0] * n
    s = full_mask(m)
    for i in range(n - 1, -1, -1):
        t = choices[i][s]
        allocation[i] = t
        s ^= t
    return OptResult(welfare[full_mask(m)], tuple(allocation))


def naive_opt(instance: Instance, limit: int = NAIVE_ASSIGNMENT_LIMIT) -> OptResult:
    """Optimal welfare by enumerating every item -> bidder-or-none map."""
    n, m = instance.n, instance.m
    total = (n + 1) ** m
    if total > limit:
        raise CapabilityError(
            f"naive enumeration needs (n+1)^m <= {limit}, got {(n + 1)}^{m} = {total}"
        )
    tables = [v.table() for v in instance.bidders]
    best = 0.0
    best_alloc = (0,) * n
    for code in range(total):
        bundles = [0] * n
        rest = code
        for e in range(m):
            rest, owner = divmod(rest, n + 1)
            if owner < n:
                bundles[owner] |= 1 << e
        w = sum(tables[i][bundles[i]] for i in range(n))
        if w > best:
            best = w
            best_alloc = tuple(bundles)
    return OptResult(best, best_alloc)
