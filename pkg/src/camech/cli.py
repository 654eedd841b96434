"""Command-line front end.

Subcommands: gen, opt, run, replay, verify, truthfulness, experiment.
Every command that consumes randomness takes an explicit --seed; there is
no ambient entropy, so identical invocations print identical bytes.

Exit codes: 0 success, 1 input error, 2 capability error (instance too
large for an exact path), 3 validator/truthfulness violation found.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .errors import CapabilityError, InputError
from .harness import (
    ExperimentConfig,
    run_experiment,
    run_one,
    truthfulness_suite,
    write_report_csv,
    write_report_json,
)
from .mechanisms import Outcome, replay
from .oracle import brute_force_opt
from .rng import derive_seed
from .serialize import (
    load_generator_spec,
    load_instance,
    load_json_object,
    load_transcript,
    save_instance,
    save_transcript,
)
from .valuations import (
    SUBADDITIVE_CHECK_LIMIT,
    Instance,
    generate_instance,
    is_monotone,
    subadditive_violation,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_CAPABILITY = 2
EXIT_VIOLATION = 3


def _print_json(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def _outcome_dict(outcome: Outcome) -> dict:
    t = outcome.transcript
    return {
        "mechanism": t.mechanism,
        "seed": t.seed,
        "allocation": list(outcome.allocation),
        "utilities": list(outcome.utilities),
        "payments": list(outcome.payments),
        "revenue": outcome.revenue,
        "welfare": outcome.welfare,
        "demand_queries": outcome.demand_queries,
        "value_queries": outcome.value_queries,
        "final_allocation_round": t.final_allocation_round,
    }


def _cmd_gen(args) -> int:
    spec = load_generator_spec(args.spec)
    instance = generate_instance(spec, args.seed)
    save_instance(instance, args.out)
    print(f"wrote {args.out} (kind={spec.kind}, n={spec.n}, m={spec.m})")
    return EXIT_OK


def _cmd_opt(args) -> int:
    instance = load_instance(args.instance)
    result = brute_force_opt(instance)
    _print_json({"welfare": result.welfare, "allocation": list(result.allocation)})
    return EXIT_OK


def _cmd_run(args) -> int:
    instance = load_instance(args.instance)
    if args.mechanism == "final" and args.psi is not None:
        raise InputError("the final mechanism derives its own scale; drop --psi")
    if args.mechanism != "fpa-fixed" and args.prices is not None:
        raise InputError("--prices only applies to the fpa-fixed mechanism")
    prices = None
    if args.prices is not None:
        try:
            prices = [float(p) for p in args.prices.split(",")]
        except ValueError as exc:
            raise InputError(f"--prices must be a comma-separated number list: {exc}") from exc
    outcome = run_one(
        instance,
        args.mechanism,
        args.seed,
        psi_policy="internal" if args.mechanism == "final" else "exact",
        psi=args.psi,
        prices=prices,
    )
    if outcome is None:
        raise InputError(
            "the instance values every bundle at zero; the binary-search "
            "mechanism has no usable scale"
        )
    _print_json(_outcome_dict(outcome))
    if args.transcript:
        save_transcript(outcome.transcript, args.transcript)
    return EXIT_OK


def _cmd_replay(args) -> int:
    instance = load_instance(args.instance)
    transcript = load_transcript(args.transcript)
    outcome = replay(transcript, instance)
    _print_json(_outcome_dict(outcome))
    return EXIT_OK


def _cmd_verify(args) -> int:
    instance = load_instance(args.instance)
    problems = []
    for i, v in enumerate(instance.bidders):
        if v.value(0) != 0.0:
            problems.append(f"bidders[{i}]: v(empty) = {v.value(0)!r}, expected 0")
            continue
        if v.m <= args.monotone_limit:
            if not is_monotone(v):
                problems.append(f"bidders[{i}]: valuation is not monotone")
        else:
            print(f"bidders[{i}]: monotonicity check skipped (m={v.m} too large)")
        labeled_subadditive = getattr(v, "subadditive_label", True)
        if labeled_subadditive:
            if v.m <= SUBADDITIVE_CHECK_LIMIT:
                pair = subadditive_violation(v)
                if pair is not None:
                    s, t = pair
                    problems.append(
                        f"bidders[{i}]: subadditivity fails for S={bin(s)}, T={bin(t)}: "
                        f"v(S|T)={v.value(s | t)!r} > v(S)+v(T)={v.value(s) + v.value(t)!r}"
                    )
            else:
                print(f"bidders[{i}]: subadditivity check skipped (m={v.m} too large)")
    if problems:
        for p in problems:
            print(p)
        return EXIT_VIOLATION
    print(f"ok: {instance.n} bidders over {instance.m} items pass all validators")
    return EXIT_OK


def _cmd_truthfulness(args) -> int:
    instance = load_instance(args.instance)
    seeds = [derive_seed(args.seed, "truthfulness", k) for k in range(args.seeds)]
    report = truthfulness_suite(
        instance, seeds, mechanism=args.mechanism,
        max_deviations_per_bidder=args.max_deviations,
    )
    print(
        f"checked {report.deviations_checked} deviations over "
        f"{report.transcripts_checked} pinned transcripts"
    )
    if report.violations:
        for v in report.violations:
            print(
                f"PROFITABLE DEVIATION: seed={v.seed} bidder={v.bidder} "
                f"deviation={v.deviation} truthful={v.truthful_utility!r} "
                f"deviant={v.deviant_utility!r}"
            )
        return EXIT_VIOLATION
    print("no profitable deviation found")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    raw = load_json_object(args.config, "experiment config")
    config = ExperimentConfig.from_dict(raw)
    base = os.path.dirname(os.path.abspath(args.config))
    refs = tuple(
        dataclasses.replace(ref, path=os.path.join(base, ref.path))
        if ref.path is not None and not os.path.isabs(ref.path)
        else ref
        for ref in config.instances
    )
    config = dataclasses.replace(config, instances=refs)
    report = run_experiment(config)
    write_report_csv(report, args.out)
    if args.json:
        write_report_json(report, args.json)
    _print_json(report.to_dict()["aggregate"])
    violations = sum(r.bound_violations for r in report.rows)
    if violations:
        print(f"{violations} trials exceeded the optimal welfare bound", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camech",
        description="Simulate and validate posted-price combinatorial auction mechanisms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random instance from a generator spec")
    p.add_argument("--spec", required=True, help="generator spec JSON file")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output instance JSON file")
    p.set_defaults(handler=_cmd_gen)

    p = sub.add_parser("opt", help="print the optimal welfare and allocation")
    p.add_argument("--instance", required=True)
    p.set_defaults(handler=_cmd_opt)

    p = sub.add_parser("run", help="run a mechanism once and print the outcome")
    p.add_argument("--instance", required=True)
    p.add_argument("--mechanism", required=True, choices=["fpa-fixed", "binary-search", "final"])
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--psi", type=float, default=None,
                   help="scale estimate (default: exact max grand-bundle value)")
    p.add_argument("--prices", default=None,
                   help="comma-separated per-item prices (fpa-fixed only)")
    p.add_argument("--transcript", default=None, help="write the transcript JSON here")
    p.set_defaults(handler=_cmd_run)

    p = sub.add_parser("replay", help="re-execute a recorded transcript")
    p.add_argument("--transcript", required=True)
    p.add_argument("--instance", required=True)
    p.set_defaults(handler=_cmd_replay)

    p = sub.add_parser("verify", help="run the valuation validators on an instance")
    p.add_argument("--instance", required=True)
    p.add_argument("--monotone-limit", type=int, default=12)
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("truthfulness", help="search for profitable single-query deviations")
    p.add_argument("--instance", required=True)
    p.add_argument("--seeds", type=int, required=True, help="number of pinned coin realizations")
    p.add_argument("--seed", type=int, required=True, help="base seed for the realizations")
    p.add_argument("--mechanism", default="final", choices=["fpa-fixed", "binary-search", "final"])
    p.add_argument("--max-deviations", type=int, default=None)
    p.set_defaults(handler=_cmd_truthfulness)

    p = sub.add_parser("experiment", help="run a Monte Carlo experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--json", default=None, help="also write a JSON report here")
    p.set_defaults(handler=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY


if __name__ == "__main__":
    sys.exit(main())
