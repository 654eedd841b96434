"""JSON persistence for instances, transcripts and experiment configs.

Instance files carry plain JSON numbers (Python's repr round-trips doubles
exactly). Transcripts print every price and scale as a hex-float string so
replays are bit-exact across platforms; the parsers accept either form.
"""

from __future__ import annotations

import json
from typing import Any

from .errors import InputError
from .mechanisms import RoundRecord, Transcript
from .valuations import (
    AdditiveValuation,
    BudgetAdditiveValuation,
    CoverageValuation,
    GeneratorSpec,
    Instance,
    SymmetricConcaveValuation,
    TableValuation,
    UnitDemandValuation,
    Valuation,
    XosValuation,
)

TRANSCRIPT_FORMAT = "camech-transcript-v1"


def float_to_hex(x: float) -> str:
    return float(x).hex()


def parse_number(x: Any, path: str) -> float:
    """Accept a JSON number or a hex-float string."""
    if isinstance(x, bool):
        raise InputError(f"{path} must be a number, got a boolean")
    if isinstance(x, (int, float)):
        return float(x)
    if isinstance(x, str):
        try:
            return float.fromhex(x)
        except ValueError as exc:
            raise InputError(f"{path} is not a valid hex-float string: {x!r}") from exc
    raise InputError(f"{path} must be a number or hex-float string")


def _expect_int(x: Any, path: str) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise InputError(f"{path} must be an integer")
    return x


def _expect_list(x: Any, path: str) -> list:
    if not isinstance(x, list):
        raise InputError(f"{path} must be an array")
    return x


def _expect_dict(x: Any, path: str) -> dict:
    if not isinstance(x, dict):
        raise InputError(f"{path} must be an object")
    return x


def _number_list(x: Any, path: str) -> list[float]:
    return [parse_number(v, f"{path}[{j}]") for j, v in enumerate(_expect_list(x, path))]


# ---------------------------------------------------------------------------
# Instances


def valuation_to_dict(v: Valuation) -> dict:
    d: dict[str, Any] = {"kind": v.kind}
    params = v.params()
    if v.kind == "explicit":
        d["table"] = {str(mask): value for mask, value in enumerate(params["table"])}
        d["subadditive"] = params["subadditive"]
    else:
        d.update(params)
    return d


def valuation_from_dict(d: Any, path: str) -> Valuation:
    d = _expect_dict(d, path)
    kind = d.get("kind")
    if kind == "additive":
        return AdditiveValuation(_number_list(d.get("values"), f"{path}.values"))
    if kind == "unit-demand":
        return UnitDemandValuation(_number_list(d.get("values"), f"{path}.values"))
    if kind == "xos":
        clauses = _expect_list(d.get("clauses"), f"{path}.clauses")
        return XosValuation([_number_list(c, f"{path}.clauses[{j}]") for j, c in enumerate(clauses)])
    if kind == "budget-additive":
        if "budget" not in d:
            raise InputError(f"{path}.budget is required for budget-additive valuations")
        return BudgetAdditiveValuation(
            parse_number(d["budget"], f"{path}.budget"),
            _number_list(d.get("values"), f"{path}.values"),
        )
    if kind == "coverage":
        covers = _expect_list(d.get("covers"), f"{path}.covers")
        parsed_covers = []
        for j, elems in enumerate(covers):
            parsed_covers.append(
                [_expect_int(g, f"{path}.covers[{j}][{k}]") for k, g in enumerate(_expect_list(elems, f"{path}.covers[{j}]"))]
            )
        return CoverageValuation(_number_list(d.get("weights"), f"{path}.weights"), parsed_covers)
    if kind == "symmetric-concave":
        return SymmetricConcaveValuation(_number_list(d.get("steps"), f"{path}.steps"))
    if kind == "explicit":
        table = _expect_dict(d.get("table"), f"{path}.table")
        size = len(table)
        if size == 0 or size & (size - 1):
            raise InputError(f"{path}.table must have a power-of-two number of entries, got {size}")
        values = [None] * size
        for key, raw in table.items():
            try:
                mask = int(key)
            except ValueError as exc:
                raise InputError(f"{path}.table key {key!r} is not a bitmask integer") from exc
            if not 0 <= mask < size:
                raise InputError(f"{path}.table key {key} outside 0..{size - 1}")
            values[mask] = parse_number(raw, f"{path}.table[{key!r}]")
        missing = [mask for mask, v in enumerate(values) if v is None]
        if missing:
            raise InputError(f"{path}.table is missing entry for bitmask {missing[0]}")
        label = d.get("subadditive", False)
        if not isinstance(label, bool):
            raise InputError(f"{path}.subadditive must be a boolean")
        return TableValuation(values, subadditive=label)
    raise InputError(f"{path}.kind must name a valuation kind, got {kind!r}")


def instance_to_dict(instance: Instance) -> dict:
    return {"m": instance.m, "bidders": [valuation_to_dict(v) for v in instance.bidders]}


def instance_from_dict(d: Any) -> Instance:
    d = _expect_dict(d, "instance")
    if "m" not in d:
        raise InputError("instance.m is required")
    m = _expect_int(d["m"], "instance.m")
    bidders = _expect_list(d.get("bidders", []), "instance.bidders")
    parsed = tuple(valuation_from_dict(b, f"instance.bidders[{i}]") for i, b in enumerate(bidders))
    return Instance(m=m, bidders=parsed)


# ---------------------------------------------------------------------------
# Transcripts


def transcript_to_dict(t: Transcript) -> dict:
    return {
        "format": TRANSCRIPT_FORMAT,
        "mechanism": t.mechanism,
        "n": t.n,
        "m": t.m,
        "seed": t.seed,
        "psi": None if t.psi is None else float_to_hex(t.psi),
        "beta": t.beta,
        "sample": None if t.sample is None else list(t.sample),
        "coin": t.coin,
        "round_assignment": None if t.round_assignment is None else list(t.round_assignment),
        "final_round": t.final_round,
        "final_allocation_round": t.final_allocation_round,
        "rounds": [
            {
                "round": r.round_number,
                "prices": [float_to_hex(p) for p in r.prices],
                "participants": list(r.participants),
                "bundles": list(r.bundles),
                "availables": list(r.availables),
            }
            for r in t.rounds
        ],
    }


def _opt_int(x: Any, path: str) -> int | None:
    if x is None:
        return None
    return _expect_int(x, path)


def transcript_from_dict(d: Any) -> Transcript:
    d = _expect_dict(d, "transcript")
    if d.get("format") != TRANSCRIPT_FORMAT:
        raise InputError(f"transcript.format must be {TRANSCRIPT_FORMAT!r}, got {d.get('format')!r}")
    mechanism = d.get("mechanism")
    if mechanism not in ("fpa-fixed", "binary-search", "final"):
        raise InputError(f"transcript.mechanism must name a mechanism, got {mechanism!r}")
    n = _expect_int(d.get("n"), "transcript.n")
    m = _expect_int(d.get("m"), "transcript.m")
    sample = d.get("sample")
    if sample is not None:
        sample = tuple(bool(s) for s in _expect_list(sample, "transcript.sample"))
    assignment = d.get("round_assignment")
    if assignment is not None:
        assignment = tuple(
            _opt_int(r, f"transcript.round_assignment[{i}]")
            for i, r in enumerate(_expect_list(assignment, "transcript.round_assignment"))
        )
    rounds = []
    for j, rd in enumerate(_expect_list(d.get("rounds", []), "transcript.rounds")):
        rd = _expect_dict(rd, f"transcript.rounds[{j}]")
        rounds.append(
            RoundRecord(
                round_number=_expect_int(rd.get("round"), f"transcript.rounds[{j}].round"),
                prices=tuple(_number_list(rd.get("prices"), f"transcript.rounds[{j}].prices")),
                participants=tuple(
                    _expect_int(i, f"transcript.rounds[{j}].participants[{k}]")
                    for k, i in enumerate(_expect_list(rd.get("participants"), f"transcript.rounds[{j}].participants"))
                ),
                bundles=tuple(
                    _expect_int(b, f"transcript.rounds[{j}].bundles[{k}]")
                    for k, b in enumerate(_expect_list(rd.get("bundles"), f"transcript.rounds[{j}].bundles"))
                ),
                availables=tuple(
                    _expect_int(a, f"transcript.rounds[{j}].availables[{k}]")
                    for k, a in enumerate(_expect_list(rd.get("availables"), f"transcript.rounds[{j}].availables"))
                ),
            )
        )
    psi = d.get("psi")
    return Transcript(
        mechanism=mechanism,
        n=n,
        m=m,
        seed=_opt_int(d.get("seed"), "transcript.seed"),
        psi=None if psi is None else parse_number(psi, "transcript.psi"),
        beta=_opt_int(d.get("beta"), "transcript.beta"),
        sample=sample,
        coin=_opt_int(d.get("coin"), "transcript.coin"),
        round_assignment=assignment,
        final_round=_opt_int(d.get("final_round"), "transcript.final_round"),
        rounds=tuple(rounds),
        final_allocation_round=_opt_int(d.get("final_allocation_round"), "transcript.final_allocation_round"),
    )


# ---------------------------------------------------------------------------
# Files


def _load_json(path: str) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise InputError(f"cannot read {path}: file not found") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


def load_instance(path: str) -> Instance:
    return instance_from_dict(_load_json(path))


def save_instance(instance: Instance, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_transcript(path: str) -> Transcript:
    return transcript_from_dict(_load_json(path))


def save_transcript(transcript: Transcript, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(transcript_to_dict(transcript), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_generator_spec(path: str) -> GeneratorSpec:
    return GeneratorSpec.from_dict(_expect_dict(_load_json(path), "generator spec"))


def load_json_object(path: str, what: str) -> dict:
    return _expect_dict(_load_json(path), what)
