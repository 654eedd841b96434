"""Posted-price combinatorial auction mechanisms and their test harness."""

from .auction import FpaResult, fixed_price_auction, rev_of_set
from .errors import CapabilityError, InputError, InternalError
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
from .oracle import OptResult, brute_force_opt, naive_opt
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
    demand_query,
    generate_instance,
    is_monotone,
    is_subadditive,
    subadditive_repair,
    value_query,
)

__version__ = "0.1.0"

__all__ = [
    "AdditiveValuation",
    "BudgetAdditiveValuation",
    "CapabilityError",
    "CoverageValuation",
    "Deviation",
    "FpaResult",
    "GeneratorSpec",
    "InputError",
    "Instance",
    "InternalError",
    "OptResult",
    "Outcome",
    "PriceLadder",
    "SymmetricConcaveValuation",
    "TableValuation",
    "Transcript",
    "UnitDemandValuation",
    "Valuation",
    "XosValuation",
    "binary_search_mechanism",
    "brute_force_opt",
    "candidate_prices",
    "demand_query",
    "final_mechanism",
    "fixed_price_auction",
    "fpa_mechanism",
    "generate_instance",
    "is_monotone",
    "is_subadditive",
    "naive_opt",
    "replay",
    "rev_of_set",
    "subadditive_repair",
    "value_query",
]
