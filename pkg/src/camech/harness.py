"""Experiment harness: Monte Carlo welfare estimation, truthfulness
testing by exhaustive single-query deviations, and structural invariant
checks over recorded transcripts.

Per-trial seeds are derived by hashing (base seed, trial index), so trials
are independent, reproducible, and order-insensitive.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import dataclass
from typing import Iterable, Sequence

from .bitset import full_mask, is_subset, iter_items
from .errors import InputError
from .mechanisms import (
    Deviation,
    Outcome,
    PriceLadder,
    Transcript,
    binary_search_mechanism,
    candidate_prices,
    final_mechanism,
    fpa_mechanism,
    replay,
)
from .oracle import brute_force_opt
from .rng import derive_seed
from .serialize import load_instance
from .valuations import GeneratorSpec, Instance, generate_instance, is_monotone, is_subadditive

MECHANISMS = ("fpa-fixed", "binary-search", "final")
PSI_POLICIES = ("exact", "internal")

RATIO_TOLERANCE = 1e-9
ACCOUNTING_TOLERANCE = 1e-12
TRUTHFULNESS_TOLERANCE = 1e-9


def resolve_psi(instance: Instance, psi_policy: str, psi: float | None) -> float | None:
    """Scale estimate for a mechanism run: explicit value, the exact
    max_i v_i(M), or None for the wrapper's internal sampling."""
    if psi is not None:
        psi = float(psi)
        if not 0.0 < psi < float("inf"):
            raise InputError(f"psi must be finite and > 0, got {psi!r}")
        return psi
    if psi_policy == "exact":
        return instance.max_grand_value()
    if psi_policy == "internal":
        return None
    raise InputError(f"psi_policy must be one of {PSI_POLICIES}, got {psi_policy!r}")


def run_one(
    instance: Instance,
    mechanism: str,
    seed: int,
    psi_policy: str = "exact",
    psi: float | None = None,
    prices: Sequence[float] | None = None,
    limit: int | None = None,
) -> Outcome | None:
    """Execute one seeded mechanism run.

    Returns None only for a degenerate binary-search run whose scale estimate
    is zero (nothing can be sold; welfare is zero by convention).
    """
    items = full_mask(instance.m)
    bidders = list(instance.bidders)
    if mechanism == "fpa-fixed":
        if prices is None:
            scale = resolve_psi(instance, psi_policy, psi)
            if scale is None:
                raise InputError("fpa-fixed needs prices, an explicit psi, or the exact psi policy")
            prices = [scale / (2 * instance.m)] * instance.m
        return fpa_mechanism(bidders, items, prices, seed=seed, limit=limit)
    if mechanism == "binary-search":
        scale = resolve_psi(instance, psi_policy, psi)
        if scale is None:
            raise InputError("binary-search needs an explicit psi or the exact psi policy")
        if scale == 0.0:
            return None
        return binary_search_mechanism(bidders, items, scale, seed, m=instance.m, limit=limit)
    if mechanism == "final":
        return final_mechanism(bidders, items, seed, m=instance.m, limit=limit)
    raise InputError(f"mechanism must be one of {MECHANISMS}, got {mechanism!r}")


@dataclass(frozen=True)
class McResult:
    """Summary of `trials` independent seeded runs on one instance."""

    mechanism: str
    trials: int
    base_seed: int
    mean: float
    stderr: float
    opt_welfare: float | None
    ratio: float | None
    welfares: tuple[float, ...]
    mean_demand_queries: float
    mean_value_queries: float

    @property
    def mean_queries(self) -> float:
        return self.mean_demand_queries + self.mean_value_queries


def monte_carlo_welfare(
    instance: Instance,
    mechanism: str,
    trials: int,
    seed: int,
    psi_policy: str = "exact",
    psi: float | None = None,
    prices: Sequence[float] | None = None,
    compute_ratio: bool = True,
    limit: int | None = None,
) -> McResult:
    """Estimate expected mechanism welfare over seeded independent trials."""
    if trials < 1:
        raise InputError(f"trials must be >= 1, got {trials}")
    welfares = []
    demand = 0
    value = 0
    for t in range(trials):
        out = run_one(
            instance, mechanism, derive_seed(seed, t),
            psi_policy=psi_policy, psi=psi, prices=prices, limit=limit,
        )
        if out is None:
            welfares.append(0.0)
        else:
            welfares.append(out.welfare)
            demand += out.demand_queries
            value += out.value_queries
    mean = sum(welfares) / trials
    if trials > 1:
        var = sum((w - mean) ** 2 for w in welfares) / (trials - 1)
        stderr = math.sqrt(var / trials)
    else:
        stderr = 0.0
    opt = None
    ratio = None
    if compute_ratio:
        opt = brute_force_opt(instance).welfare
        ratio = 1.0 if opt == 0.0 else mean / opt
    return McResult(
        mechanism=mechanism,
        trials=trials,
        base_seed=seed,
        mean=mean,
        stderr=stderr,
        opt_welfare=opt,
        ratio=ratio,
        welfares=tuple(welfares),
        mean_demand_queries=demand / trials,
        mean_value_queries=value / trials,
    )


# ---------------------------------------------------------------------------
# Truthfulness


@dataclass(frozen=True)
class DeviationFinding:
    """A profitable deviation uncovered by the tester (expected never)."""

    seed: int
    bidder: int
    deviation: Deviation
    truthful_utility: float
    deviant_utility: float


@dataclass(frozen=True)
class TruthfulnessReport:
    transcripts_checked: int
    deviations_checked: int
    violations: tuple[DeviationFinding, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _submasks(mask: int) -> Iterable[int]:
    s = mask
    while True:
        yield s
        if s == 0:
            return
        s = (s - 1) & mask


def _misreport_grid(true_value: float, rivals: Sequence[float]) -> list[float]:
    """Candidate value reports: extremes plus points around each pivotal
    threshold (the rivals' highest report decides winning and the payment)."""
    pts = {0.0, true_value, true_value / 2, 2 * true_value + 1.0}
    pivots = [true_value]
    if rivals:
        pivots.append(max(rivals))
    for pivot in pivots:
        pts.add(max(pivot - 0.25, 0.0))
        pts.add(pivot + 0.25)
        pts.add(pivot + 1.0)
        pts.add(pivot)
    return sorted(pts)


def _deviations_for(instance: Instance, transcript: Transcript, bidder: int) -> list[Deviation]:
    """Every alternative response to the single query `bidder` received in
    the pinned run (empty if the bidder was never queried)."""
    if transcript.mechanism == "final" and transcript.sample and transcript.sample[bidder]:
        grand = full_mask(instance.m)
        true_value = instance.bidders[bidder].value(grand)
        rivals = [
            instance.bidders[j].value(grand)
            for j in range(instance.n)
            if transcript.sample[j] and j != bidder
        ]
        return [Deviation(bidder, reported_value=g) for g in _misreport_grid(true_value, rivals)]
    for record in transcript.rounds:
        if bidder in record.participants:
            available = record.availables[record.participants.index(bidder)]
            return [Deviation(bidder, bundle=s) for s in _submasks(available)]
    return []


def truthfulness_suite(
    instance: Instance,
    seeds: Sequence[int],
    mechanism: str = "final",
    psi_policy: str = "exact",
    psi: float | None = None,
    prices: Sequence[float] | None = None,
    tolerance: float = TRUTHFULNESS_TOLERANCE,
    max_deviations_per_bidder: int | None = None,
) -> TruthfulnessReport:
    """Search for profitable single-query deviations on pinned transcripts.

    For each seed the mechanism runs once truthfully; then for every bidder
    and every alternative response to the one query that bidder received
    (all bundles over the items available at its turn, or a grid of value
    misreports around the pivotal thresholds), the run is replayed with the
    substitution and the bidder's utilities are compared.
    """
    violations = []
    transcripts = 0
    checked = 0
    for seed in seeds:
        outcome = run_one(instance, mechanism, seed, psi_policy=psi_policy, psi=psi, prices=prices)
        if outcome is None:
            continue
        transcripts += 1
        transcript = outcome.transcript
        for bidder in range(instance.n):
            deviations = _deviations_for(instance, transcript, bidder)
            if max_deviations_per_bidder is not None:
                deviations = deviations[:max_deviations_per_bidder]
            truthful = outcome.utilities[bidder]
            for dev in deviations:
                deviant = replay(transcript, instance, what_if=dev).utilities[bidder]
                checked += 1
                if deviant > truthful + tolerance:
                    violations.append(
                        DeviationFinding(seed, bidder, dev, truthful, deviant)
                    )
    return TruthfulnessReport(transcripts, checked, tuple(violations))


# ---------------------------------------------------------------------------
# Invariant checks (pure functions over recorded data, so that deliberately
# corrupted inputs can exercise them)


def check_outcome_accounting(instance: Instance, outcome: Outcome,
                             tolerance: float = ACCOUNTING_TOLERANCE) -> list[str]:
    fails = []
    recomputed = sum(instance.bidders[i].value(outcome.allocation[i]) for i in range(instance.n))
    if abs(outcome.welfare - recomputed) > tolerance:
        fails.append(f"welfare {outcome.welfare!r} != sum of allocated values {recomputed!r}")
    split = sum(outcome.utilities) + outcome.revenue
    if abs(outcome.welfare - split) > tolerance:
        fails.append(f"welfare {outcome.welfare!r} != utilities+revenue {split!r}")
    if abs(outcome.revenue - sum(outcome.payments)) > tolerance:
        fails.append(f"revenue {outcome.revenue!r} != sum of payments")
    for i, u in enumerate(outcome.utilities):
        if u < 0.0:
            fails.append(f"bidder {i} has negative utility {u!r}")
    return fails


def check_feasibility(instance: Instance, outcome: Outcome) -> list[str]:
    fails = []
    seen = 0
    universe = full_mask(instance.m)
    for i, bundle in enumerate(outcome.allocation):
        if not is_subset(bundle, universe):
            fails.append(f"bidder {i} allocated items outside the universe")
        if bundle & seen:
            fails.append(f"bidder {i} allocation overlaps an earlier bidder")
        seen |= bundle
    for record in outcome.transcript.rounds:
        taken = 0
        for pos, bundle in enumerate(record.bundles):
            avail = record.availables[pos]
            if not is_subset(bundle, avail):
                fails.append(
                    f"round {record.round_number}: participant {record.participants[pos]} "
                    "took items that were not available"
                )
            if pos + 1 < len(record.availables):
                expected = avail & ~bundle
                if record.availables[pos + 1] != expected:
                    fails.append(
                        f"round {record.round_number}: remaining set not updated after "
                        f"participant {record.participants[pos]}"
                    )
            taken |= bundle
        if not is_subset(taken, universe):
            fails.append(f"round {record.round_number}: sold items outside the universe")
    return fails


def check_payment_rounds(outcome: Outcome) -> list[str]:
    """Payments may flow only to participants of the final allocation round."""
    fails = []
    transcript = outcome.transcript
    final_participants: set[int] = set()
    for record in transcript.rounds:
        if record.round_number == transcript.final_allocation_round:
            final_participants = set(record.participants)
    if transcript.mechanism == "final" and transcript.coin == 0 and transcript.sample:
        final_participants = {i for i in range(transcript.n) if transcript.sample[i]}
    for i, pay in enumerate(outcome.payments):
        if pay != 0.0 and i not in final_participants:
            fails.append(f"bidder {i} was charged {pay!r} outside the final round")
    return fails


def check_query_budget(outcome: Outcome) -> list[str]:
    total = outcome.demand_queries + outcome.value_queries
    if total > outcome.transcript.n:
        return [f"{total} queries exceed the bidder count {outcome.transcript.n}"]
    return []


def check_ladder_structure(transcript: Transcript) -> list[str]:
    """Re-derive the candidate ladder from psi and verify every round's
    lengths, offered midpoints, halving direction, and price membership."""
    if transcript.psi is None or transcript.mechanism == "fpa-fixed":
        return []
    fails = []
    prices_b, beta = candidate_prices(transcript.psi, transcript.m)
    allowed = set(prices_b)
    if transcript.beta != beta:
        fails.append(f"transcript beta {transcript.beta} != derived beta {beta}")
    if transcript.final_round is not None and len(transcript.rounds) != transcript.final_round:
        fails.append(
            f"{len(transcript.rounds)} rounds executed, expected {transcript.final_round}"
        )
    ladder = PriceLadder.initial(prices_b, transcript.m)
    for idx, record in enumerate(transcript.rounds, start=1):
        if record.round_number != idx:
            fails.append(f"round records out of order at position {idx}")
            break
        expected_len = len(prices_b) >> (idx - 1)
        for e, vec in enumerate(ladder.vectors):
            if len(vec) != expected_len:
                fails.append(f"round {idx}: item {e} ladder has {len(vec)} prices, expected {expected_len}")
        mids = ladder.midpoints()
        if record.prices != mids:
            fails.append(f"round {idx}: offered prices {record.prices} != ladder midpoints {mids}")
        for e, p in enumerate(record.prices):
            if p not in allowed:
                fails.append(f"round {idx}: price {p!r} for item {e} is not a candidate price")
        if idx <= beta:
            sold = 0
            for bundle in record.bundles:
                sold |= bundle
            advanced = ladder.advance(sold)
            for e in range(transcript.m):
                if sold >> e & 1:
                    if advanced.vectors[e][0] != mids[e]:
                        fails.append(f"round {idx}: sold item {e} kept the wrong half")
                else:
                    if advanced.vectors[e][-1] >= mids[e]:
                        fails.append(f"round {idx}: unsold item {e} kept the wrong half")
            ladder = advanced
        else:
            for e, vec in enumerate(ladder.vectors):
                if len(vec) != 1 or record.prices[e] not in allowed:
                    fails.append(f"final round: item {e} price is not the surviving candidate")
    return fails


def check_round_assignment(transcript: Transcript) -> list[str]:
    fails = []
    seen: set[int] = set()
    for record in transcript.rounds:
        for bidder in record.participants:
            if bidder in seen:
                fails.append(f"bidder {bidder} was queried more than once")
            seen.add(bidder)
            if transcript.round_assignment is not None:
                if transcript.round_assignment[bidder] != record.round_number:
                    fails.append(
                        f"bidder {bidder} participated in round {record.round_number}, "
                        f"assigned {transcript.round_assignment[bidder]}"
                    )
    return fails


def check_demand_optimality(instance: Instance, transcript: Transcript, limit: int = 12) -> list[str]:
    """Recompute, from scratch, each participant's best response and compare
    it to the recorded bundle (truthful transcripts only)."""
    fails = []
    for record in transcript.rounds:
        for pos, bidder in enumerate(record.participants):
            available = record.availables[pos]
            if available.bit_count() > limit:
                continue
            v = instance.bidders[bidder]
            best_u, best_card, best_mask = 0.0, 0, 0
            for s in _submasks(available):
                u = v.value(s) - sum(record.prices[e] for e in iter_items(s))
                card = s.bit_count()
                if u > best_u or (u == best_u and (card, s) < (best_card, best_mask)):
                    best_u, best_card, best_mask = u, card, s
            if record.bundles[pos] != best_mask:
                fails.append(
                    f"round {record.round_number}: bidder {bidder} took {bin(record.bundles[pos])}, "
                    f"best response is {bin(best_mask)}"
                )
    return fails


def check_instance_valid(instance: Instance,
                         monotone_limit: int = 12,
                         subadditive_limit: int = 7) -> list[str]:
    fails = []
    for i, v in enumerate(instance.bidders):
        if v.value(0) != 0.0:
            fails.append(f"bidder {i} is not normalized: v(empty) = {v.value(0)!r}")
        if v.m <= monotone_limit and not is_monotone(v):
            fails.append(f"bidder {i} valuation is not monotone")
        labeled = getattr(v, "subadditive_label", True)
        if labeled and v.m <= subadditive_limit and not is_subadditive(v):
            fails.append(f"bidder {i} valuation is not subadditive")
    return fails


@dataclass(frozen=True)
class InvariantReport:
    runs_checked: int
    failures: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.failures


def run_invariant_suite(
    instances: Sequence[Instance],
    base_seed: int,
    mechanisms: Sequence[str] = ("binary-search", "final"),
    runs_per_instance: int = 3,
) -> InvariantReport:
    """Run every structural check over seeded runs of a batch of instances.

    Failure messages embed the instance index, mechanism and seed so any
    finding is reproducible directly.
    """
    failures: list[str] = []
    runs = 0
    for idx, instance in enumerate(instances):
        for msg in check_instance_valid(instance):
            failures.append(f"instance {idx}: {msg}")
        opt = brute_force_opt(instance).welfare if instance.m <= 15 else None
        for mechanism in mechanisms:
            for k in range(runs_per_instance):
                seed = derive_seed(base_seed, idx, mechanism, k)
                outcome = run_one(instance, mechanism, seed)
                if outcome is None:
                    continue
                runs += 1
                context = f"instance {idx}, {mechanism}, seed {seed}"
                for msg in (
                    check_outcome_accounting(instance, outcome)
                    + check_feasibility(instance, outcome)
                    + check_payment_rounds(outcome)
                    + check_query_budget(outcome)
                    + check_ladder_structure(outcome.transcript)
                    + check_round_assignment(outcome.transcript)
                    + check_demand_optimality(instance, outcome.transcript)
                ):
                    failures.append(f"{context}: {msg}")
                if opt is not None and outcome.welfare > opt + RATIO_TOLERANCE:
                    failures.append(f"{context}: welfare {outcome.welfare!r} exceeds OPT {opt!r}")
    return InvariantReport(runs, tuple(failures))


# ---------------------------------------------------------------------------
# Experiments


@dataclass(frozen=True)
class InstanceRef:
    """One experiment instance: a file path or a generator spec + seed."""

    id: str
    path: str | None = None
    generator: GeneratorSpec | None = None
    seed: int | None = None

    def __post_init__(self):
        if (self.path is None) == (self.generator is None):
            raise InputError(f"instance {self.id!r} must set exactly one of path / generator")
        if self.generator is not None and self.seed is None:
            raise InputError(f"instance {self.id!r} uses a generator and needs a seed")

    @classmethod
    def from_dict(cls, d: dict, where: str) -> "InstanceRef":
        if not isinstance(d, dict):
            raise InputError(f"{where} must be an object")
        if "id" not in d or not isinstance(d["id"], str):
            raise InputError(f"{where}.id must be a string")
        generator = d.get("generator")
        if generator is not None:
            generator = GeneratorSpec.from_dict(generator)
        return cls(id=d["id"], path=d.get("path"), generator=generator, seed=d.get("seed"))

    def load(self) -> Instance:
        if self.path is not None:
            return load_instance(self.path)
        assert self.generator is not None and self.seed is not None
        return generate_instance(self.generator, self.seed)


@dataclass(frozen=True)
class ExperimentConfig:
    """Monte Carlo experiment over a list of instances."""

    mechanism: str
    trials: int
    base_seed: int
    instances: tuple[InstanceRef, ...]
    psi_policy: str = "exact"
    psi: float | None = None
    prices: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise InputError(f"mechanism must be one of {MECHANISMS}, got {self.mechanism!r}")
        if self.trials < 1:
            raise InputError(f"trials must be >= 1, got {self.trials}")
        if self.psi_policy not in PSI_POLICIES:
            raise InputError(f"psi_policy must be one of {PSI_POLICIES}, got {self.psi_policy!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise InputError("experiment config must be an object")
        for req in ("mechanism", "trials", "base_seed", "instances"):
            if req not in d:
                raise InputError(f"experiment config is missing required field {req!r}")
        if not isinstance(d["trials"], int) or isinstance(d["trials"], bool):
            raise InputError("experiment config field 'trials' must be an integer")
        if not isinstance(d["base_seed"], int) or isinstance(d["base_seed"], bool):
            raise InputError("experiment config field 'base_seed' must be an integer")
        if not isinstance(d["instances"], list):
            raise InputError("experiment config field 'instances' must be an array")
        refs = tuple(
            InstanceRef.from_dict(r, f"instances[{j}]") for j, r in enumerate(d["instances"])
        )
        prices = d.get("prices")
        if prices is not None:
            prices = tuple(float(p) for p in prices)
        return cls(
            mechanism=d["mechanism"],
            trials=d["trials"],
            base_seed=d["base_seed"],
            instances=refs,
            psi_policy=d.get("psi_policy", "exact"),
            psi=d.get("psi"),
            prices=prices,
        )


@dataclass(frozen=True)
class ExperimentRow:
    instance_id: str
    n: int
    m: int
    kind: str
    opt_welfare: float
    mean_welfare: float
    stderr: float
    ratio: float
    mean_queries: float
    bound_violations: int


@dataclass(frozen=True)
class ExperimentReport:
    rows: tuple[ExperimentRow, ...]

    def aggregate(self) -> dict:
        ratios = [r.ratio for r in self.rows]
        if not ratios:
            return {"instances": 0}
        return {
            "instances": len(ratios),
            "ratio_min": min(ratios),
            "ratio_mean": sum(ratios) / len(ratios),
            "ratio_median": statistics.median(ratios),
            "ratio_max": max(ratios),
        }

    def to_dict(self) -> dict:
        return {
            "rows": [
                {
                    "instance_id": r.instance_id,
                    "n": r.n,
                    "m": r.m,
                    "kind": r.kind,
                    "opt_welfare": r.opt_welfare,
                    "mean_welfare": r.mean_welfare,
                    "stderr": r.stderr,
                    "ratio": r.ratio,
                    "mean_queries": r.mean_queries,
                    "bound_violations": r.bound_violations,
                }
                for r in self.rows
            ],
            "aggregate": self.aggregate(),
        }


CSV_COLUMNS = (
    "instance_id", "n", "m", "kind", "opt_welfare",
    "mean_welfare", "stderr", "ratio", "mean_queries",
)


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the configured Monte Carlo estimate on every instance."""
    rows = []
    for ref in config.instances:
        instance = ref.load()
        mc = monte_carlo_welfare(
            instance,
            config.mechanism,
            config.trials,
            derive_seed(config.base_seed, "instance", ref.id),
            psi_policy=config.psi_policy,
            psi=config.psi,
            prices=config.prices,
        )
        assert mc.opt_welfare is not None and mc.ratio is not None
        violations = sum(1 for w in mc.welfares if w > mc.opt_welfare + RATIO_TOLERANCE)
        rows.append(
            ExperimentRow(
                instance_id=ref.id,
                n=instance.n,
                m=instance.m,
                kind=instance.kind_label(),
                opt_welfare=mc.opt_welfare,
                mean_welfare=mc.mean,
                stderr=mc.stderr,
                ratio=mc.ratio,
                mean_queries=mc.mean_queries,
                bound_violations=violations,
            )
        )
    return ExperimentReport(tuple(rows))


def write_report_csv(report: ExperimentReport, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in report.rows:
            writer.writerow([
                r.instance_id, r.n, r.m, r.kind, repr(r.opt_welfare),
                repr(r.mean_welfare), repr(r.stderr), repr(r.ratio), repr(r.mean_queries),
            ])


def write_report_json(report: ExperimentReport, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
