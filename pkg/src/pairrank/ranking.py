"""Rank tables: integer and normalized ranks with multi-key tie-breaking.

The LLM order sorts descending by BT score, then human score, then ascending
proposal id; the human order swaps the first two keys and is restricted to
proposals that carry a human score. Normalized rank R = (rank-1)/(N-1) maps
the top proposal to 0 and the bottom to 1.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .btmodel import BTScores
from .corpus import Proposal
from .errors import NotFoundError, ValidationError
from .fileio import atomic_write_text


@dataclass(frozen=True)
class RankRow:
    proposal_id: str
    bt_score: float
    human_score: Optional[float]
    rank_llm: int
    r_llm: float
    rank_human: Optional[int]
    r_human: Optional[float]


@dataclass
class RankTable:
    cycle_id: str
    rows: list[RankRow]  # in LLM rank order
    warnings: list[str] = field(default_factory=list)

    def row(self, proposal_id: str) -> RankRow:
        for row in self.rows:
            if row.proposal_id == proposal_id:
                return row
        raise NotFoundError(f"proposal '{proposal_id}' not in rank table")

    @property
    def rated_rows(self) -> list[RankRow]:
        return [row for row in self.rows if row.r_human is not None]


def _normalized(rank: int, n: int) -> float:
    if n < 2:
        return 0.0
    return (rank - 1) / (n - 1)


def rank_cycle(scores: BTScores, proposals: Iterable[Proposal]) -> RankTable:
    """Rank one cycle's proposals by BT score and (where present) human score."""
    props = list(proposals)
    if not props:
        raise ValidationError("no proposals to rank")
    cycle_ids = {p.cycle_id for p in props}
    if len(cycle_ids) != 1:
        raise ValidationError(f"proposals span multiple cycles: {sorted(cycle_ids)}")
    cycle_id = props[0].cycle_id
    bt = {p.proposal_id: scores.score(p.proposal_id) for p in props}

    def human_key(p: Proposal) -> float:
        return p.human_score if p.human_score is not None else float("-inf")

    llm_order = sorted(props, key=lambda p: (-bt[p.proposal_id], -human_key(p), p.proposal_id))
    rated = [p for p in props if p.human_score is not None]
    human_order = sorted(rated, key=lambda p: (-p.human_score, -bt[p.proposal_id], p.proposal_id))
    human_rank = {p.proposal_id: i + 1 for i, p in enumerate(human_order)}

    n_llm = len(llm_order)
    n_human = len(human_order)
    warnings: list[str] = []
    if n_llm < 2:
        warnings.append("fewer than 2 proposals in the LLM ordering; normalized ranks set to 0")
    if n_human == 0:
        warnings.append("no proposals with human scores; human ranking unavailable")
    elif n_human < 2:
        warnings.append("fewer than 2 rated proposals; human normalized ranks set to 0")

    rows = []
    for i, p in enumerate(llm_order):
        rank = i + 1
        h_rank = human_rank.get(p.proposal_id)
        rows.append(
            RankRow(
                proposal_id=p.proposal_id,
                bt_score=bt[p.proposal_id],
                human_score=p.human_score,
                rank_llm=rank,
                r_llm=_normalized(rank, n_llm),
                rank_human=h_rank,
                r_human=_normalized(h_rank, n_human) if h_rank is not None else None,
            )
        )
    return RankTable(cycle_id=cycle_id, rows=rows, warnings=warnings)


def write_rank_csv(table: RankTable, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        ["proposal_id", "bt_score", "human_score", "rank_llm", "rank_human", "R_llm", "R_human"]
    )
    for row in table.rows:
        writer.writerow(
            [
                row.proposal_id,
                repr(row.bt_score),
                "" if row.human_score is None else repr(row.human_score),
                row.rank_llm,
                "" if row.rank_human is None else row.rank_human,
                repr(row.r_llm),
                "" if row.r_human is None else repr(row.r_human),
            ]
        )
    atomic_write_text(path, buf.getvalue())
