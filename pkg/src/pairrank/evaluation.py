"""Agreement and effectiveness metrics.

Spearman rank correlation between the LLM and human orderings (with
progressive exclusion of the most divergent proposals), and the
publication-weighted ranking metric sum((1-R_i) * d_i) / sum(d_i), where d_i
is each proposal's discounted publication credit.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .corpus import Corpus
from .errors import UndefinedMetricError, ValidationError
from .fileio import write_csv
from .ranking import RankTable


def rank_with_ties(values: Sequence[float]) -> np.ndarray:
    """1-based ranks; exact value ties receive the average of their positions."""
    arr = np.asarray(values, dtype=float)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr), dtype=float)
    i = 0
    n = len(arr)
    while i < n:
        j = i
        while j + 1 < n and arr[order[j + 1]] == arr[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's rho: Pearson correlation of the (tie-averaged) rank vectors."""
    xs = np.asarray(list(x), dtype=float)
    ys = np.asarray(list(y), dtype=float)
    if xs.ndim != 1 or ys.ndim != 1 or xs.shape != ys.shape:
        raise ValidationError("spearman requires two equal-length 1-D sequences")
    if len(xs) < 2:
        raise UndefinedMetricError("spearman undefined for fewer than 2 observations")
    rx = rank_with_ties(xs)
    ry = rank_with_ties(ys)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sxx = float((dx * dx).sum())
    syy = float((dy * dy).sum())
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedMetricError("spearman undefined: zero rank variance")
    rho = float((dx * dy).sum()) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


@dataclass(frozen=True)
class CurvePoint:
    excluded_fraction: float
    rho: float
    n_remaining: int


@dataclass
class CorrelationCurve:
    cycle_id: str
    points: list[CurvePoint]
    warnings: list[str] = field(default_factory=list)


def outlier_exclusion_curve(table: RankTable, fractions: Iterable[float]) -> CorrelationCurve:
    """Spearman's rho after excluding the most divergent proposals.

    For each fraction f, drops the floor(f*N') proposals with the largest
    |R_llm - R_human| (divergence ties broken by ascending proposal id),
    re-ranks the survivors, and records rho over them. The f=0 point is the
    plain correlation.
    """
    fracs = sorted({float(f) for f in fractions})
    if any(f < 0 or f >= 1 for f in fracs):
        raise ValidationError("fractions must lie in [0, 1)")
    rated = table.rated_rows
    if len(rated) < 3:
        raise ValidationError("outlier exclusion curve needs at least 3 rated proposals")
    by_divergence = sorted(
        rated, key=lambda r: (-abs(r.r_llm - r.r_human), r.proposal_id)
    )
    points: list[CurvePoint] = []
    warnings: list[str] = []
    for f in fracs:
        drop = int(f * len(rated) + 1e-9)
        survivors = by_divergence[drop:]
        if len(survivors) < 2:
            warnings.append(f"fraction {f:g}: fewer than 2 survivors; point omitted")
            continue
        rho = spearman(
            [row.rank_llm for row in survivors],
            [row.rank_human for row in survivors],
        )
        points.append(CurvePoint(f, rho, len(survivors)))
    return CorrelationCurve(cycle_id=table.cycle_id, points=points, warnings=warnings)


def m_dpub(table: RankTable, dpub: Mapping[str, float], which: str = "llm") -> float:
    """Publication-weighted rank quality in [0, 1]; 1 puts all credit at the top."""
    if which == "llm":
        pairs = [(row.r_llm, dpub.get(row.proposal_id, 0.0)) for row in table.rows]
    elif which == "human":
        pairs = [(row.r_human, dpub.get(row.proposal_id, 0.0)) for row in table.rated_rows]
    else:
        raise ValidationError(f"which must be 'llm' or 'human', not {which!r}")
    total = sum(d for _, d in pairs)
    if total <= 0:
        raise UndefinedMetricError(
            f"publication metric undefined for cycle '{table.cycle_id}': no publication credit"
        )
    return sum((1.0 - r) * d for r, d in pairs) / total


@dataclass(frozen=True)
class PublicationMetricResult:
    cycle_id: str
    m_dpub_llm: float
    m_dpub_human: Optional[float]
    n_pub_proposals: int
    included: bool


@dataclass
class CycleReport:
    results: list[PublicationMetricResult]
    mean_llm: Optional[float]
    std_llm: Optional[float]
    mean_human: Optional[float]
    std_human: Optional[float]
    warnings: list[str] = field(default_factory=list)


def _mean_std(values: list[float], label: str, warnings: list[str]):
    if not values:
        return None, None
    if len(values) == 1:
        warnings.append(f"single included cycle for {label}; std reported as 0")
        return values[0], 0.0
    return statistics.mean(values), statistics.stdev(values)


def cycle_report(
    corpus: Corpus,
    tables: Mapping[str, RankTable],
    dpubs: Mapping[str, Mapping[str, float]],
    min_pub_proposals: int = 4,
) -> CycleReport:
    """Per-cycle publication metrics plus mean and sample std across included cycles.

    Publication analysis is restricted to accepted proposals; a cycle is
    included in the aggregate only when at least `min_pub_proposals` of them
    carry publication credit.
    """
    results: list[PublicationMetricResult] = []
    warnings: list[str] = []
    for cycle_id in sorted(tables):
        table = tables[cycle_id]
        dpub = dpubs[cycle_id]
        accepted = {
            pid
            for pid in corpus.cycle(cycle_id).proposal_ids
            if corpus.proposals[pid].accepted
        }
        sub = RankTable(cycle_id, [r for r in table.rows if r.proposal_id in accepted])
        n_pub = sum(1 for row in sub.rows if dpub.get(row.proposal_id, 0.0) > 0)
        try:
            value_llm = m_dpub(sub, dpub, "llm")
        except UndefinedMetricError:
            warnings.append(f"cycle {cycle_id}: no publication credit; cycle excluded")
            continue
        try:
            value_human = m_dpub(sub, dpub, "human")
        except UndefinedMetricError:
            warnings.append(f"cycle {cycle_id}: human publication metric undefined")
            value_human = None
        results.append(
            PublicationMetricResult(
                cycle_id=cycle_id,
                m_dpub_llm=value_llm,
                m_dpub_human=value_human,
                n_pub_proposals=n_pub,
                included=n_pub >= min_pub_proposals,
            )
        )
    included = [r for r in results if r.included]
    if not included:
        warnings.append("no cycles meet the publication inclusion rule; aggregate omitted")
    mean_llm, std_llm = _mean_std([r.m_dpub_llm for r in included], "LLM metric", warnings)
    mean_human, std_human = _mean_std(
        [r.m_dpub_human for r in included if r.m_dpub_human is not None],
        "human metric",
        warnings,
    )
    return CycleReport(results, mean_llm, std_llm, mean_human, std_human, warnings)


def curve_rows(curves: Iterable[CorrelationCurve]) -> list[tuple]:
    """Long-format rows (cycle_id, fraction, rho, n_remaining) for plotting."""
    rows = []
    for curve in curves:
        for point in curve.points:
            rows.append(
                (curve.cycle_id, repr(point.excluded_fraction), repr(point.rho), point.n_remaining)
            )
    return rows


def write_curve_csv(curves: Iterable[CorrelationCurve], path) -> None:
    write_csv(path, ["cycle_id", "excluded_fraction", "rho", "n_remaining"], curve_rows(curves))
