"""Cost model: human individual scoring versus LLM pairwise preference.

Human review cost is hourly salary times review time; LLM cost per judged
pair comes from mean token usage and per-megatoken prices. Individual scoring
scales linearly in pool size N, pairwise judging scales as N(N-1)/2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ValidationError
from .fileio import write_csv


@dataclass(frozen=True)
class CostParams:
    salary_per_year: float = 119_340.0
    work_hours_per_week: float = 41.8
    weeks_per_year: float = 52.0
    review_hours: float = 1.0
    input_token_mean: float = 4869.0
    output_token_mean: float = 1255.0
    input_cost_per_mtoken: float = 0.3
    output_cost_per_mtoken: float = 2.5
    reviews_per_proposal_is: float = 1.0

    def __post_init__(self) -> None:
        for name in ("salary_per_year", "work_hours_per_week", "weeks_per_year"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be strictly positive")
        for name in (
            "review_hours",
            "input_token_mean",
            "output_token_mean",
            "input_cost_per_mtoken",
            "output_cost_per_mtoken",
            "reviews_per_proposal_is",
        ):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")


def unit_costs(p: CostParams) -> tuple[float, float]:
    """(cost of one human review, cost of one LLM pairwise judgment)."""
    human = p.salary_per_year / (p.work_hours_per_week * p.weeks_per_year) * p.review_hours
    llm = (
        p.input_token_mean * p.input_cost_per_mtoken
        + p.output_token_mean * p.output_cost_per_mtoken
    ) / 1e6
    return human, llm


@dataclass(frozen=True)
class CostBreakdown:
    n: int
    human_cost_per_review: float
    llm_cost_per_pair: float
    human_is_total: float
    human_pp_total: float
    llm_pp_total: float


def totals(p: CostParams, n: int) -> CostBreakdown:
    """Total campaign cost for a pool of n proposals under each method.

    Human pairwise judging is priced at the same per-judgment cost as an
    individual review (lower cognitive load assumed to cancel against the
    longer reading).
    """
    if n < 2:
        raise ValidationError("cost totals need a pool of at least 2 proposals")
    human, llm = unit_costs(p)
    pairs = n * (n - 1) // 2
    return CostBreakdown(
        n=n,
        human_cost_per_review=human,
        llm_cost_per_pair=llm,
        human_is_total=n * p.reviews_per_proposal_is * human,
        human_pp_total=pairs * human,
        llm_pp_total=pairs * llm,
    )


def cost_ratios(
    p: CostParams, n_values: Sequence[int] = (30, 70), round_units: bool = True
) -> dict:
    """Human-over-LLM cost ratios: per single review and at given pool sizes.

    With round_units=True the unit costs are first rounded to their published
    precision (cents-level for the human review, $1e-4 for the LLM pair),
    which is how the reference summary table was computed.
    """
    human, llm = unit_costs(p)
    if llm <= 0:
        raise ValidationError("llm cost per pair must be positive for ratios")
    if round_units:
        human = round(human, 1)
        llm = round(llm, 4)
    ratios = {"per_review": human / llm}
    for n in n_values:
        if n < 2:
            raise ValidationError("ratio pool sizes must be at least 2")
        pairs = n * (n - 1) / 2
        ratios[n] = (n * p.reviews_per_proposal_is * human) / (pairs * llm)
    return ratios


def crossover(p: CostParams) -> int:
    """Smallest pool size where quadratic LLM cost reaches linear human IS cost.

    Closed form: N* = ceil(1 + 2 * reviews_per_proposal * human_per_review /
    llm_per_pair).
    """
    human, llm = unit_costs(p)
    if llm <= 0:
        raise ValidationError("llm cost per pair must be positive")
    exact = 1.0 + 2.0 * p.reviews_per_proposal_is * human / llm
    return math.ceil(exact - 1e-12)


def cost_curve(p: CostParams, n_values: Iterable[int]) -> list[CostBreakdown]:
    return [totals(p, n) for n in sorted(set(int(n) for n in n_values)) if n >= 2]


def write_cost_csv(breakdowns: Iterable[CostBreakdown], path) -> None:
    write_csv(
        path,
        ["N", "human_is", "human_pp", "llm_pp"],
        [
            (b.n, repr(b.human_is_total), repr(b.human_pp_total), repr(b.llm_pp_total))
            for b in breakdowns
        ],
    )
