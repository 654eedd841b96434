"""Acceptance criteria, one test per criterion.

Each test prints a single PASS line (visible with pytest -v -s) including
its elapsed time, and enforces the stated runtime budget. Criterion 7
checks the implementation against golden numbers produced once by the
independent straight-line reference in tests/golden/straightline.py.
"""

import json
import os
import subprocess
import sys
import time

from camech import (
    GeneratorSpec,
    binary_search_mechanism,
    brute_force_opt,
    fixed_price_auction,
    generate_instance,
    naive_opt,
)
from camech.bitset import full_mask
from camech.harness import (
    check_ladder_structure,
    check_round_assignment,
    monte_carlo_welfare,
    truthfulness_suite,
)
from camech.rng import derive_seed, draw_below
from camech.valuations import UnitDemandValuation, _exhaustive_demand, demand_utility

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")
CALIBRATION_PATH = os.path.join(GOLDEN_DIR, "calibration.json")
CALIBRATION_MAIN_SEED = 424242

ALL_KINDS = (
    "additive", "unit-demand", "xos", "budget-additive",
    "coverage", "symmetric-concave", "explicit-subadditive",
)


def _report(criterion, started, budget, detail):
    elapsed = time.time() - started
    print(f"ACCEPTANCE {criterion} PASS: {detail} ({elapsed:.1f}s)")
    assert elapsed < budget, f"criterion {criterion} exceeded its {budget}s budget"


def test_criterion_1_welfare_identity():
    """Utilities plus revenue equals allocated value on 1,000 random FPAs."""
    started = time.time()
    checked = 0
    for t in range(1000):
        kind = ALL_KINDS[t % len(ALL_KINDS)]
        n = 1 + t % 6
        m = 2 + t % 7
        inst = generate_instance(GeneratorSpec(kind=kind, n=n, m=m), seed=t)
        prices = [draw_below(t, "fpa-price", e, 41) * 0.25 for e in range(m)]
        res = fixed_price_auction(list(inst.bidders), full_mask(m), prices)
        assert abs(res.welfare() - (sum(res.utilities) + res.revenue)) <= 1e-12
        assert abs(sum(res.payments) - res.revenue) <= 1e-12
        checked += 1
    _report(1, started, 10, f"welfare identity exact on {checked} fixed-price auctions")


def test_criterion_2_demand_oracle_equivalence():
    """Fast additive/unit-demand paths equal the exhaustive path exactly."""
    started = time.time()
    checked = 0
    for kind in ("additive", "unit-demand"):
        for t in range(500):
            m = 2 + t % 5
            inst = generate_instance(GeneratorSpec(kind=kind, n=1, m=m), seed=t)
            v = inst.bidders[0]
            prices = [draw_below(t, f"dq-{kind}", e, 129) * 0.125 for e in range(m)]
            available = draw_below(t, f"dq-avail-{kind}", 0, 1 << m)
            fast = v.fast_demand(prices, available)
            exhaustive = _exhaustive_demand(v, prices, available, 12)
            assert demand_utility(v, prices, fast) == demand_utility(v, prices, exhaustive)
            assert fast == exhaustive
            checked += 1
    _report(2, started, 5, f"specialized demand equals exhaustive on {checked} price vectors")


def _beta_for(psi, m):
    from camech.mechanisms import candidate_prices

    return candidate_prices(psi, m)[1]


def test_criterion_3_binary_search_structure():
    """Ladder halving, direction correctness, candidate membership, and the
    query budget hold on 500 seeded runs."""
    started = time.time()
    runs = 0
    full_final = 0
    for t in range(500):
        kind = ALL_KINDS[t % len(ALL_KINDS)]
        n = 1 + t % 6
        m = 2 + t % 7
        inst = generate_instance(GeneratorSpec(kind=kind, n=n, m=m), seed=7000 + t)
        psi = inst.max_grand_value()
        if psi == 0.0:
            continue
        # Every fifth run pins the final round past all halvings so the
        # surviving singleton prices are exercised too.
        force_full = (t % 5 == 0)
        out = binary_search_mechanism(
            list(inst.bidders), full_mask(m), psi, seed=t,
            final_round=_beta_for(psi, m) + 1 if force_full else None,
        )
        fails = (
            check_ladder_structure(out.transcript)
            + check_round_assignment(out.transcript)
        )
        assert not fails, fails
        assert out.demand_queries <= n
        if out.transcript.final_round == out.transcript.beta + 1:
            full_final += 1
        runs += 1
    assert runs == 500
    assert full_final >= 100
    _report(3, started, 20, f"ladder structure holds on {runs} seeded runs "
                            f"({full_final} reached the last round)")


def test_criterion_4_universal_truthfulness():
    """No profitable single-query deviation on 200 instances x 20 pinned
    coin realizations (exhaustive bundles + misreport grids)."""
    started = time.time()
    transcripts = 0
    deviations = 0
    for t in range(200):
        kind = ALL_KINDS[t % len(ALL_KINDS)]
        n = 1 + t % 4
        m = 2 + t % 4
        inst = generate_instance(GeneratorSpec(kind=kind, n=n, m=m), seed=9000 + t)
        seeds = [derive_seed(1234, "acc4", t, k) for k in range(20)]
        report = truthfulness_suite(inst, seeds, mechanism="final", tolerance=1e-9)
        assert report.ok, report.violations
        transcripts += report.transcripts_checked
        deviations += report.deviations_checked
    _report(4, started, 300, f"zero profitable deviations among {deviations} "
                             f"alternatives over {transcripts} pinned transcripts")


def test_criterion_5_oracle_cross_check():
    """The welfare DP and the naive assignment enumeration agree exactly."""
    started = time.time()
    for t in range(200):
        kind = ALL_KINDS[t % len(ALL_KINDS)]
        n = 1 + t % 3
        m = 2 + t % 4
        inst = generate_instance(GeneratorSpec(kind=kind, n=n, m=m), seed=11000 + t)
        dp = brute_force_opt(inst)
        naive = naive_opt(inst)
        assert dp.welfare == naive.welfare
        assert sum(inst.bidders[i].value(dp.allocation[i]) for i in range(n)) == dp.welfare
    _report(5, started, 30, "brute-force DP equals naive enumeration on 200 instances")


def test_criterion_6_per_trial_upper_bound():
    """Every single mechanism trial stays below the optimal welfare."""
    started = time.time()
    trials = 0
    for t in range(30):
        kind = ALL_KINDS[t % len(ALL_KINDS)]
        inst = generate_instance(
            GeneratorSpec(kind=kind, n=1 + t % 4, m=2 + t % 5), seed=13000 + t
        )
        for mechanism in ("fpa-fixed", "binary-search", "final"):
            mc = monte_carlo_welfare(inst, mechanism, 30, derive_seed(5, t, mechanism))
            assert all(w <= mc.opt_welfare + 1e-9 for w in mc.welfares)
            trials += mc.trials
    _report(6, started, 60, f"welfare <= OPT + 1e-9 in all {trials} trials")


def test_criterion_7_approximation_ratio_calibration():
    """Mean welfare on the fixed corpus matches the golden numbers from the
    independent straight-line reference, within the two runs' combined
    Monte Carlo error (3 standard errors of each)."""
    started = time.time()
    assert os.path.exists(CALIBRATION_PATH), (
        "calibration.json missing; run python tests/golden/make_golden.py"
    )
    with open(CALIBRATION_PATH) as fh:
        golden = json.load(fh)
    assert golden["mechanism"] == "binary-search"
    from camech.serialize import load_instance

    worst = 0.0
    for entry in golden["instances"]:
        inst = load_instance(os.path.join(GOLDEN_DIR, "corpus", entry["file"]))
        mc = monte_carlo_welfare(
            inst, "binary-search", golden["trials"],
            derive_seed(CALIBRATION_MAIN_SEED, entry["id"]),
        )
        assert mc.opt_welfare == entry["opt"], entry["id"]
        assert all(w <= mc.opt_welfare + 1e-9 for w in mc.welfares)
        budget = 3.0 * (mc.stderr + entry["stderr_welfare"])
        gap = abs(mc.mean - entry["mean_welfare"])
        worst = max(worst, gap / budget)
        assert gap <= budget, (
            f"{entry['id']}: mean {mc.mean} vs golden {entry['mean_welfare']} "
            f"(gap {gap}, budget {budget})"
        )
    _report(7, started, 600, f"all {len(golden['instances'])} corpus means within "
                             f"budget (worst at {worst:.2f} of budget)")


def test_criterion_8_byte_identical_outputs(tmp_path):
    """`run` and `experiment` print and write identical bytes when repeated."""
    started = time.time()
    inst_path = tmp_path / "inst.json"
    inst_path.write_text(json.dumps({
        "m": 4,
        "bidders": [
            {"kind": "additive", "values": [3, 1, 2, 5]},
            {"kind": "xos", "clauses": [[1, 2, 0, 1], [0, 0, 4, 1]]},
            {"kind": "unit-demand", "values": [2, 2, 2, 6]},
        ],
    }))

    def cli(*args):
        proc = subprocess.run(
            [sys.executable, "-m", "camech.cli", *args],
            capture_output=True, cwd=str(tmp_path),
        )
        assert proc.returncode == 0, proc.stderr.decode()
        return proc.stdout

    run_args = ("run", "--instance", str(inst_path), "--mechanism", "final", "--seed", "99")
    assert cli(*run_args) == cli(*run_args)

    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "mechanism": "binary-search",
        "trials": 40,
        "base_seed": 17,
        "instances": [{"id": "a", "path": "inst.json"}],
    }))
    out1, out2 = tmp_path / "r1.csv", tmp_path / "r2.csv"
    stdout1 = cli("experiment", "--config", str(cfg), "--out", str(out1))
    stdout2 = cli("experiment", "--config", str(cfg), "--out", str(out2))
    assert stdout1 == stdout2
    assert out1.read_bytes() == out2.read_bytes()
    _report(8, started, 60, "run and experiment outputs are byte-identical across executions")
