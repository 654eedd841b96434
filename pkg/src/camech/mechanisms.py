"""Truthful posted-price mechanisms.

Three entry points:

* `binary_search_mechanism`: learns one price per item out of a geometric
  candidate ladder by halving it over beta rounds of practice fixed-price
  auctions, each involving a random disjoint group of bidders; a uniformly
  random round's allocation becomes the final one (all other rounds are
  discarded and charge nothing).
* `final_mechanism`: removes the scale estimate by sampling half the
  bidders for a grand-bundle second-price auction; a fair coin either keeps
  that allocation or uses the sample's maximum as the scale for the
  binary-search mechanism run on the remaining bidders.
* `replay`: re-executes either mechanism from a recorded transcript,
  optionally substituting one bidder's single query response (the hook used
  by the truthfulness tester).

Each bidder is queried at most once overall, so no bidder can influence the
prices they face.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .auction import FpaResult, fixed_price_auction
from .bitset import full_mask, is_subset
from .errors import InputError
from .rng import coin as draw_coin
from .rng import draw_below
from .valuations import Instance, Valuation

LABEL_ROUND = "round-assignment"
LABEL_FINAL_ROUND = "final-round"
LABEL_SAMPLE = "sample"
LABEL_BRANCH = "branch"

BRANCH_SECOND_PRICE = 0
BRANCH_MECHANISM = 1


def candidate_prices(psi: float, m: int) -> tuple[tuple[float, ...], int]:
    """Geometric candidate-price ladder for scale estimate `psi` on m items.

    Returns (B, beta): B = {0} together with psi/2, psi/4, ..., down to
    psi * 2^(-3*ceil(log2 m)), padded at the low end with further halvings
    until |B| is a power of two; beta = log2 |B| is the number of halving
    rounds. m = 1 is treated like m = 2 so the ladder stays nontrivial.
    """
    psi = float(psi)
    if not 0.0 < psi < float("inf"):
        raise InputError(f"psi must be finite and > 0, got {psi!r}")
    if m < 1:
        raise InputError(f"m must be >= 1, got {m}")
    exponents = 3 * max(1, (m - 1).bit_length())
    ladder = [psi * 2.0 ** -j for j in range(exponents, 0, -1)]
    while (len(ladder) + 1) & len(ladder):
        ladder.insert(0, ladder[0] / 2.0)
    prices = (0.0, *ladder)
    beta = len(prices).bit_length() - 1
    return prices, beta


@dataclass(frozen=True)
class PriceLadder:
    """Per-item vectors of remaining candidate prices at some round."""

    round_index: int
    vectors: tuple[tuple[float, ...], ...]

    @classmethod
    def initial(cls, prices: Sequence[float], m: int) -> "PriceLadder":
        return cls(1, tuple(tuple(prices) for _ in range(m)))

    def midpoints(self) -> tuple[float, ...]:
        """The price offered this round: the first entry of each upper half."""
        return tuple(vec[len(vec) // 2] for vec in self.vectors)

    def advance(self, sold: int) -> "PriceLadder":
        """Keep the upper half for sold items, the lower half otherwise."""
        updated = []
        for e, vec in enumerate(self.vectors):
            half = len(vec) // 2
            updated.append(vec[half:] if sold >> e & 1 else vec[:half])
        return PriceLadder(self.round_index + 1, tuple(updated))


@dataclass(frozen=True)
class RoundRecord:
    """One executed fixed-price auction round inside a mechanism run."""

    round_number: int
    prices: tuple[float, ...]
    participants: tuple[int, ...]
    bundles: tuple[int, ...]
    availables: tuple[int, ...]


@dataclass(frozen=True)
class Transcript:
    """All randomness and per-round results of one mechanism run.

    Together with the instance this pins the execution completely, so a run
    can be replayed bit-identically. `round_assignment` maps each bidder to
    the single round it may participate in (None for bidders sampled away by
    the wrapper, or when the branch never draws assignments). Prices here are
    hypothetical for all rounds except `final_allocation_round`.
    """

    mechanism: str
    n: int
    m: int
    seed: int | None
    psi: float | None
    beta: int | None
    sample: tuple[bool, ...] | None
    coin: int | None
    round_assignment: tuple[int | None, ...] | None
    final_round: int | None
    rounds: tuple[RoundRecord, ...]
    final_allocation_round: int | None


@dataclass(frozen=True)
class Outcome:
    """Final allocation with the money flows and query counts of the run."""

    allocation: tuple[int, ...]
    utilities: tuple[float, ...]
    payments: tuple[float, ...]
    revenue: float
    welfare: float
    demand_queries: int
    value_queries: int
    transcript: Transcript


@dataclass(frozen=True)
class Deviation:
    """A single-query deviation: either a demand-bundle override or a
    misreported grand-bundle value (exactly one must be set)."""

    bidder: int
    bundle: int | None = None
    reported_value: float | None = None

    def __post_init__(self):
        if (self.bundle is None) == (self.reported_value is None):
            raise InputError("deviation must set exactly one of bundle / reported_value")


def _infer_m(bidders: Sequence[Valuation], items: int, m: int | None) -> int:
    if m is not None:
        return m
    if bidders:
        return bidders[0].m
    if items > 0:
        return items.bit_length()
    raise InputError("cannot infer m: no bidders, no items and no explicit m")


def _empty_outcome(n: int, transcript: Transcript) -> Outcome:
    return Outcome(
        allocation=(0,) * n,
        utilities=(0.0,) * n,
        payments=(0.0,) * n,
        revenue=0.0,
        welfare=0.0,
        demand_queries=0,
        value_queries=transcript.sample.count(True) if transcript.sample else 0,
        transcript=transcript,
    )


def _execute_ladder_rounds(
    bidders: Sequence[Valuation],
    bidder_ids: Sequence[int],
    items: int,
    m: int,
    prices_b: Sequence[float],
    beta: int,
    assignment: Mapping[int, int],
    final_round: int,
    forced: Mapping[int, int] | None,
    limit: int | None,
) -> tuple[list[RoundRecord], FpaResult, int]:
    """Run the halving rounds; returns (records, final FPA, its round number).

    Rounds run for ell = 1..min(final_round, beta); the extra round beta+1 at
    the surviving singleton prices runs only when final_round = beta + 1.
    """
    by_round: dict[int, list[int]] = {}
    oracle_of = dict(zip(bidder_ids, bidders))
    for i in bidder_ids:
        by_round.setdefault(assignment[i], []).append(i)

    ladder = PriceLadder.initial(prices_b, m)
    records: list[RoundRecord] = []
    for ell in range(1, beta + 2):
        prices = ladder.midpoints()
        participants = by_round.get(ell, [])
        fpa = fixed_price_auction(
            [oracle_of[i] for i in participants],
            items,
            prices,
            bidder_ids=participants,
            forced=forced,
            limit=limit,
        )
        records.append(
            RoundRecord(
                round_number=ell,
                prices=prices,
                participants=tuple(participants),
                bundles=fpa.bundles,
                availables=fpa.availables,
            )
        )
        if ell <= beta:
            ladder = ladder.advance(fpa.sold)
        if ell == final_round:
            return records, fpa, ell
    raise InputError(f"final round {final_round} outside 1..{beta + 1}")


def _outcome_from_final_fpa(
    n: int,
    fpa: FpaResult,
    rounds: Sequence[RoundRecord],
    value_queries: int,
    transcript: Transcript,
) -> Outcome:
    allocation = [0] * n
    utilities = [0.0] * n
    payments = [0.0] * n
    for pos, bidder in enumerate(fpa.bidder_ids):
        allocation[bidder] = fpa.bundles[pos]
        utilities[bidder] = fpa.utilities[pos]
        payments[bidder] = fpa.payments[pos]
    return Outcome(
        allocation=tuple(allocation),
        utilities=tuple(utilities),
        payments=tuple(payments),
        revenue=fpa.revenue,
        welfare=fpa.welfare(),
        demand_queries=sum(len(r.participants) for r in rounds),
        value_queries=value_queries,
        transcript=transcript,
    )


def binary_search_mechanism(
    bidders: Sequence[Valuation],
    items: int,
    psi: float,
    seed: int | None,
    m: int | None = None,
    assignment: Sequence[int] | None = None,
    final_round: int | None = None,
    forced: Mapping[int, int] | None = None,
    limit: int | None = None,
) -> Outcome:
    """Run the binary-search price-learning mechanism.

    Randomness (each bidder's participation round and the final allocation
    round) is drawn from labeled streams of `seed`; passing `assignment` and
    `final_round` pins it instead, in which case seed may be None. Only the
    final round's payments are collected.
    """
    m = _infer_m(bidders, items, m)
    if not is_subset(items, full_mask(m)):
        raise InputError(f"items {bin(items)} reference positions outside 0..{m - 1}")
    prices_b, beta = candidate_prices(psi, m)
    n = len(bidders)

    if assignment is None:
        if seed is None:
            raise InputError("seed is required when the round assignment is not pinned")
        assignment = tuple(1 + draw_below(seed, LABEL_ROUND, i, beta + 1) for i in range(n))
    else:
        assignment = tuple(assignment)
        if len(assignment) != n:
            raise InputError(f"{len(assignment)} round assignments for {n} bidders")
        if any(r is None or not 1 <= r <= beta + 1 for r in assignment):
            raise InputError(f"round assignments must lie in 1..{beta + 1}")
    if final_round is None:
        if seed is None:
            raise InputError("seed is required when the final round is not pinned")
        final_round = 1 + draw_below(seed, LABEL_FINAL_ROUND, 0, beta + 1)
    elif not 1 <= final_round <= beta + 1:
        raise InputError(f"final round must lie in 1..{beta + 1}")

    rounds, final_fpa, final_number = _execute_ladder_rounds(
        bidders, tuple(range(n)), items, m, prices_b, beta,
        dict(enumerate(assignment)), final_round, forced, limit,
    )
    transcript = Transcript(
        mechanism="binary-search",
        n=n,
        m=m,
        seed=seed,
        psi=float(psi),
        beta=beta,
        sample=None,
        coin=None,
        round_assignment=assignment,
        final_round=final_round,
        rounds=tuple(rounds),
        final_allocation_round=final_number,
    )
    return _outcome_from_final_fpa(n, final_fpa, rounds, 0, transcript)


def full_beta_for(m: int) -> int:
    """Number of halving rounds implied by m alone (|B| depends only on m)."""
    _, beta = candidate_prices(1.0, m)
    return beta


def fpa_mechanism(
    bidders: Sequence[Valuation],
    items: int,
    prices: Sequence[float],
    seed: int | None = None,
    forced: Mapping[int, int] | None = None,
    limit: int | None = None,
) -> Outcome:
    """One fixed-price auction over all bidders, with real payments."""
    n = len(bidders)
    prices = tuple(float(p) for p in prices)
    fpa = fixed_price_auction(
        list(bidders), items, prices, bidder_ids=tuple(range(n)),
        forced=forced, limit=limit,
    )
    record = RoundRecord(1, prices, fpa.bidder_ids, fpa.bundles, fpa.availables)
    transcript = Transcript(
        mechanism="fpa-fixed", n=n, m=len(prices), seed=seed, psi=None, beta=0,
        sample=None, coin=None, round_assignment=(1,) * n, final_round=1,
        rounds=(record,), final_allocation_round=1,
    )
    return _outcome_from_final_fpa(n, fpa, [record], 0, transcript)


def final_mechanism(
    bidders: Sequence[Valuation],
    items: int,
    seed: int | None,
    m: int | None = None,
    sample: Sequence[bool] | None = None,
    branch: int | None = None,
    assignment: Sequence[int | None] | None = None,
    final_round: int | None = None,
    deviation: Deviation | None = None,
    limit: int | None = None,
) -> Outcome:
    """Run the full sampling wrapper.

    Each bidder independently joins the second-price sample with probability
    1/2 and is asked its grand-bundle value; a fair coin then either sells
    the grand bundle to the sample's highest bidder at the second-highest
    sampled value, or uses the sample maximum as the scale for the
    binary-search mechanism over the remaining bidders. The keyword
    arguments pin individual coins for replay and deviation testing.
    """
    if m is None and not bidders and items == 0:
        m = 1
    m = _infer_m(bidders, items, m)
    n = len(bidders)
    if sample is None:
        if seed is None:
            raise InputError("seed is required when the sample is not pinned")
        sample = tuple(draw_below(seed, LABEL_SAMPLE, i, 2) == 1 for i in range(n))
    else:
        sample = tuple(bool(s) for s in sample)
        if len(sample) != n:
            raise InputError(f"{len(sample)} sample flags for {n} bidders")
    if branch is None:
        if seed is None:
            raise InputError("seed is required when the branch coin is not pinned")
        branch = draw_coin(seed, LABEL_BRANCH)
    elif branch not in (BRANCH_SECOND_PRICE, BRANCH_MECHANISM):
        raise InputError(f"branch must be {BRANCH_SECOND_PRICE} or {BRANCH_MECHANISM}")

    sampled = [i for i in range(n) if sample[i]]
    # One value query per sampled bidder; a deviation may misreport it.
    reported = {i: bidders[i].value(items) for i in sampled}
    if deviation is not None and deviation.reported_value is not None:
        if not 0 <= deviation.bidder < n or not sample[deviation.bidder]:
            raise InputError(f"bidder {deviation.bidder} was not asked a value query")
        reported[deviation.bidder] = float(deviation.reported_value)
    value_queries = len(sampled)

    if branch == BRANCH_SECOND_PRICE:
        transcript = Transcript(
            mechanism="final", n=n, m=m, seed=seed, psi=None, beta=None,
            sample=sample, coin=branch, round_assignment=None, final_round=None,
            rounds=(), final_allocation_round=None,
        )
        if not sampled:
            return _empty_outcome(n, transcript)
        top = max(reported[i] for i in sampled)
        winner = min(i for i in sampled if reported[i] == top)
        others = [reported[i] for i in sampled if i != winner]
        payment = max(others) if others else 0.0
        allocation = [0] * n
        utilities = [0.0] * n
        payments = [0.0] * n
        allocation[winner] = items
        true_value = bidders[winner].value(items)
        utilities[winner] = true_value - payment
        payments[winner] = payment
        return Outcome(
            allocation=tuple(allocation),
            utilities=tuple(utilities),
            payments=tuple(payments),
            revenue=payment,
            welfare=true_value,
            demand_queries=0,
            value_queries=value_queries,
            transcript=transcript,
        )

    # Mechanism branch: scale from the sample, auction for everyone else.
    # Assignments and the final round are drawn (and recorded) even when the
    # scale degenerates, so misreport replays never need fresh randomness.
    psi = max((reported[i] for i in sampled), default=0.0)
    rest = [i for i in range(n) if not sample[i]]
    beta = full_beta_for(m)
    if assignment is None:
        if seed is None:
            raise InputError("seed is required when round assignments are not pinned")
        assignment = tuple(
            None if sample[i] else 1 + draw_below(seed, LABEL_ROUND, i, beta + 1)
            for i in range(n)
        )
    else:
        assignment = tuple(assignment)
        if len(assignment) != n:
            raise InputError(f"{len(assignment)} round assignments for {n} bidders")
        for i in rest:
            if assignment[i] is None or not 1 <= assignment[i] <= beta + 1:
                raise InputError(f"bidder {i} needs a round assignment in 1..{beta + 1}")
    if final_round is None:
        if seed is None:
            raise InputError("seed is required when the final round is not pinned")
        final_round = 1 + draw_below(seed, LABEL_FINAL_ROUND, 0, beta + 1)
    elif not 1 <= final_round <= beta + 1:
        raise InputError(f"final round must lie in 1..{beta + 1}")

    if psi <= 0.0:
        # Empty sample, or a sample that values the grand bundle at zero:
        # no usable scale, sell nothing.
        transcript = Transcript(
            mechanism="final", n=n, m=m, seed=seed, psi=None, beta=beta,
            sample=sample, coin=branch, round_assignment=assignment,
            final_round=final_round, rounds=(), final_allocation_round=None,
        )
        return _empty_outcome(n, transcript)

    prices_b, beta = candidate_prices(psi, m)
    forced = None
    if deviation is not None and deviation.bundle is not None:
        forced = {deviation.bidder: deviation.bundle}
    rounds, final_fpa, final_number = _execute_ladder_rounds(
        [bidders[i] for i in rest], tuple(rest), items, m, prices_b, beta,
        {i: assignment[i] for i in rest}, final_round, forced, limit,
    )
    transcript = Transcript(
        mechanism="final", n=n, m=m, seed=seed, psi=psi, beta=beta,
        sample=sample, coin=branch, round_assignment=assignment,
        final_round=final_round, rounds=tuple(rounds),
        final_allocation_round=final_number,
    )
    outcome = _outcome_from_final_fpa(n, final_fpa, rounds, value_queries, transcript)
    assert outcome.demand_queries + outcome.value_queries <= n
    return outcome


def replay(
    transcript: Transcript,
    instance: Instance,
    what_if: Deviation | None = None,
    verify: bool = True,
) -> Outcome:
    """Re-execute a recorded run against `instance`, bit-identically.

    With `what_if`, one bidder's single query response is substituted (a
    demand bundle or a reported grand-bundle value) while all recorded
    randomness stays pinned; verification is skipped in that case because
    later rounds may legitimately diverge.
    """
    if transcript.n != instance.n or transcript.m != instance.m:
        raise InputError(
            f"transcript is for n={transcript.n}, m={transcript.m}; "
            f"instance has n={instance.n}, m={instance.m}"
        )
    if what_if is not None and not 0 <= what_if.bidder < instance.n:
        raise InputError(f"deviation bidder {what_if.bidder} outside 0..{instance.n - 1}")
    items = full_mask(instance.m)
    forced = None
    if what_if is not None and what_if.bundle is not None:
        forced = {what_if.bidder: what_if.bundle}

    if transcript.mechanism == "fpa-fixed":
        if what_if is not None and what_if.reported_value is not None:
            raise InputError("a fixed-price auction asks no value queries")
        if not transcript.rounds:
            raise InputError("fixed-price transcript records no round")
        out = fpa_mechanism(
            list(instance.bidders), items, transcript.rounds[0].prices,
            seed=transcript.seed, forced=forced,
        )
    elif transcript.mechanism == "binary-search":
        if what_if is not None and what_if.reported_value is not None:
            raise InputError("the binary-search mechanism asks no value queries")
        if transcript.psi is None:
            raise InputError("binary-search transcript is missing its scale estimate")
        out = binary_search_mechanism(
            list(instance.bidders), items, transcript.psi, transcript.seed,
            m=instance.m, assignment=transcript.round_assignment,
            final_round=transcript.final_round, forced=forced,
        )
    elif transcript.mechanism == "final":
        out = final_mechanism(
            list(instance.bidders), items, transcript.seed, m=instance.m,
            sample=transcript.sample, branch=transcript.coin,
            assignment=transcript.round_assignment,
            final_round=transcript.final_round, deviation=what_if,
        )
    else:
        raise InputError(f"unknown mechanism {transcript.mechanism!r} in transcript")

    if verify and what_if is None and out.transcript.rounds != transcript.rounds:
        raise InputError("transcript does not replay against this instance")
    return out
