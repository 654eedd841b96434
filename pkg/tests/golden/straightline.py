"""Independent straight-line reference for the binary-search mechanism.

This file deliberately shares no code with the camech package: it has its
own valuation evaluation, its own exhaustive demand oracle, its own ladder
bookkeeping, its own naive optimal-welfare enumeration, and its own RNG
(stdlib `random` seeded with strings, which hashes deterministically). It
exists to produce the golden calibration numbers that the main
implementation is checked against, so any shared bug would have to be
written twice independently to go unnoticed.

Usage: python straightline.py INSTANCE.json TRIALS BASE_SEED
Prints a JSON summary {opt, mean_welfare, stderr_welfare, ...} to stdout.
"""

import json
import math
import random
import sys


def load_instance(path):
    with open(path) as fh:
        data = json.load(fh)
    m = data["m"]
    bidders = []
    for b in data["bidders"]:
        if b["kind"] == "additive":
            bidders.append(("additive", [float(x) for x in b["values"]]))
        elif b["kind"] == "xos":
            bidders.append(("xos", [[float(x) for x in c] for c in b["clauses"]]))
        else:
            raise ValueError(f"straightline supports additive/xos only, got {b['kind']}")
    return m, bidders


def value_table(kind, params, m):
    """v(S) for every bitmask S."""
    size = 1 << m
    table = [0.0] * size
    if kind == "additive":
        for s in range(size):
            total = 0.0
            for e in range(m):
                if s >> e & 1:
                    total += params[e]
            table[s] = total
    else:  # xos
        for s in range(size):
            best = 0.0
            for clause in params:
                total = 0.0
                for e in range(m):
                    if s >> e & 1:
                        total += clause[e]
                if total > best:
                    best = total
            table[s] = best
    return table


def price_sums(prices, m):
    """p(S) for every bitmask S, built one lowest bit at a time."""
    size = 1 << m
    sums = [0.0] * size
    for s in range(1, size):
        low = s & -s
        sums[s] = sums[s ^ low] + prices[low.bit_length() - 1]
    return sums


def best_bundle(table, psums, available):
    """Demand response: max utility, ties to fewer items then smaller mask."""
    best_u, best_card, best_mask = 0.0, 0, 0
    s = available
    while True:
        u = table[s] - psums[s]
        card = bin(s).count("1")
        if u > best_u or (u == best_u and (card, s) < (best_card, best_mask)):
            best_u, best_card, best_mask = u, card, s
        if s == 0:
            return best_mask
        s = (s - 1) & available


def fixed_price_auction(tables, order, items, prices, m):
    psums = price_sums(prices, m)
    remaining = items
    allocation = {}
    for i in order:
        bundle = best_bundle(tables[i], psums, remaining)
        allocation[i] = bundle
        remaining &= ~bundle
    return allocation


def candidate_prices(psi, m):
    count = 3 * max(1, math.ceil(math.log2(m)))
    ladder = [psi * 2.0 ** -j for j in range(count, 0, -1)]
    while (len(ladder) + 1) & len(ladder):
        ladder.insert(0, ladder[0] / 2.0)
    prices = [0.0] + ladder
    beta = len(prices).bit_length() - 1
    return prices, beta


def binary_search_mechanism(tables, m, psi, rng):
    n = len(tables)
    items = (1 << m) - 1
    prices_b, beta = candidate_prices(psi, m)
    vectors = [list(prices_b) for _ in range(m)]
    rounds_of = [rng.randint(1, beta + 1) for _ in range(n)]
    r_star = rng.randint(1, beta + 1)
    for ell in range(1, beta + 1):
        prices = [vec[len(vec) // 2] for vec in vectors]
        group = [i for i in range(n) if rounds_of[i] == ell]
        allocation = fixed_price_auction(tables, group, items, prices, m)
        sold = 0
        for bundle in allocation.values():
            sold |= bundle
        for e in range(m):
            half = len(vectors[e]) // 2
            vectors[e] = vectors[e][half:] if sold >> e & 1 else vectors[e][:half]
        if r_star == ell:
            return allocation
    prices = [vec[0] for vec in vectors]
    group = [i for i in range(n) if rounds_of[i] == beta + 1]
    return fixed_price_auction(tables, group, items, prices, m)


def optimal_welfare(tables, n, m):
    """Try every item -> bidder-or-nobody assignment."""
    best = 0.0
    for code in range((n + 1) ** m):
        bundles = [0] * n
        rest = code
        for e in range(m):
            rest, owner = divmod(rest, n + 1)
            if owner < n:
                bundles[owner] |= 1 << e
        total = sum(tables[i][bundles[i]] for i in range(n))
        if total > best:
            best = total
    return best


def calibrate(path, trials, base_seed):
    m, bidders = load_instance(path)
    n = len(bidders)
    tables = [value_table(kind, params, m) for kind, params in bidders]
    items = (1 << m) - 1
    psi = max(table[items] for table in tables)
    opt = optimal_welfare(tables, n, m)
    welfares = []
    for t in range(trials):
        rng = random.Random(f"straightline:{base_seed}:{t}")
        allocation = binary_search_mechanism(tables, m, psi, rng)
        welfares.append(sum(tables[i][bundle] for i, bundle in allocation.items()))
    mean = sum(welfares) / trials
    var = sum((w - mean) ** 2 for w in welfares) / (trials - 1)
    return {
        "opt": opt,
        "psi": psi,
        "mean_welfare": mean,
        "stderr_welfare": math.sqrt(var / trials),
        "mean_ratio": mean / opt if opt else 1.0,
        "trials": trials,
        "base_seed": base_seed,
    }


if __name__ == "__main__":
    instance_path, trial_count, seed = sys.argv[1], int(sys.argv[2]), int(sys.argv[3])
    print(json.dumps(calibrate(instance_path, trial_count, seed), indent=2))
