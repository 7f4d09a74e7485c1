"""Bradley-Terry strength estimation from aggregated pairwise outcomes.

The estimator is the minorization-maximization fixed point: each score is
updated to (total wins) / sum over opponents of n_ij/(s_i+s_j), with ties
credited as half a win to each side, scores renormalized to sum 1 after every
update, and convergence declared when the maximum relative change drops below
the tolerance.
"""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Cycle
from .errors import NotFoundError, ValidationError
from .fileio import atomic_write_text
from .judge import Outcome


@dataclass(frozen=True)
class WinMatrix:
    """Aggregated tournament outcomes: per-proposal wins and pair counts."""

    ids: tuple[str, ...]
    wins: np.ndarray  # float, shape (N,)
    counts: np.ndarray  # int, shape (N, N), symmetric, zero diagonal

    def __post_init__(self) -> None:
        n = len(self.ids)
        if self.wins.shape != (n,) or self.counts.shape != (n, n):
            raise ValidationError("win matrix shapes do not match the id list")
        if np.any(self.wins < 0) or np.any(self.counts < 0):
            raise ValidationError("wins and counts must be nonnegative")
        if np.any(self.counts != self.counts.T):
            raise ValidationError("comparison counts must be symmetric")
        if np.any(np.diag(self.counts) != 0):
            raise ValidationError("comparison counts must have a zero diagonal")
        total_pairs = float(np.triu(self.counts, 1).sum())
        if abs(float(self.wins.sum()) - total_pairs) > 1e-9:
            raise ValidationError(
                "win credit does not match comparison count: "
                f"sum(w)={self.wins.sum()} vs pairs={total_pairs}"
            )

    def index(self, proposal_id: str) -> int:
        try:
            return self.ids.index(proposal_id)
        except ValueError:
            raise NotFoundError(f"unknown proposal '{proposal_id}'") from None

    def totals_per_proposal(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class BTScores:
    ids: tuple[str, ...]
    scores: np.ndarray  # nonnegative, sums to 1
    iterations: int
    converged: bool
    final_delta: float
    warnings: tuple[str, ...] = ()

    def index(self, proposal_id: str) -> int:
        try:
            return self.ids.index(proposal_id)
        except ValueError:
            raise NotFoundError(f"unknown proposal '{proposal_id}'") from None

    def score(self, proposal_id: str) -> float:
        return float(self.scores[self.index(proposal_id)])


def aggregate(records: Iterable, cycle: Cycle) -> WinMatrix:
    """Build the win matrix for a cycle from comparison records.

    A win adds 1.0 to the winner, a tie adds 0.5 to each side; every record
    increments the pair count once. Multiple records per pair are allowed
    (e.g. merged caches or order-swapped passes).
    """
    ids = tuple(cycle.proposal_ids)
    index = {pid: i for i, pid in enumerate(ids)}
    n = len(ids)
    wins = np.zeros(n)
    counts = np.zeros((n, n), dtype=np.int64)
    for rec in records:
        id_a, id_b = rec.pair
        ia = index.get(id_a)
        ib = index.get(id_b)
        if ia is None or ib is None:
            raise ValidationError(
                f"record pair ({id_a}, {id_b}) references a proposal outside cycle "
                f"'{cycle.cycle_id}'"
            )
        if ia == ib:
            raise ValidationError(f"record compares proposal '{id_a}' with itself")
        outcome = rec.verdict.outcome
        if outcome is Outcome.WIN_A:
            wins[ia] += 1.0
        elif outcome is Outcome.WIN_B:
            wins[ib] += 1.0
        else:
            wins[ia] += 0.5
            wins[ib] += 0.5
        counts[ia, ib] += 1
        counts[ib, ia] += 1
    return WinMatrix(ids, wins, counts)


def mm_step(wins: np.ndarray, counts: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """One normalized MM update. Zero-win proposals map to exactly 0."""
    positive = wins > 0
    pair_sums = scores[:, None] + scores[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(counts > 0, counts / pair_sums, 0.0)
    denom = ratios.sum(axis=1)
    updated = np.zeros_like(scores)
    updated[positive] = wins[positive] / denom[positive]
    return updated / updated.sum()


def _n_components(counts: np.ndarray) -> int:
    n = counts.shape[0]
    seen = [False] * n
    components = 0
    for start in range(n):
        if seen[start]:
            continue
        components += 1
        queue = deque([start])
        seen[start] = True
        while queue:
            u = queue.popleft()
            for v in np.nonzero(counts[u])[0]:
                if not seen[v]:
                    seen[v] = True
                    queue.append(int(v))
    return components


def solve_bt(
    m: WinMatrix,
    tol: float = 1e-8,
    max_iter: int = 10000,
    initial: np.ndarray | None = None,
) -> BTScores:
    """Estimate Bradley-Terry strengths by MM iteration.

    Starts from uniform scores (or `initial`), renormalizes every step, and
    stops when the maximum relative score change among positive-win proposals
    falls below `tol` or after `max_iter` iterations. Zero-win proposals sit
    at exactly 0 (the boundary maximum) from the first update onward and are
    excluded from the convergence criterion.
    """
    n = len(m.ids)
    if n < 2:
        raise ValidationError("Bradley-Terry needs at least two proposals")
    if m.counts.sum() == 0:
        raise ValidationError("comparison graph has no edges")
    warnings: list[str] = []
    if _n_components(m.counts) > 1:
        warnings.append(
            "comparison graph is disconnected; scores are only identified within "
            "connected components"
        )
    if initial is None:
        scores = np.full(n, 1.0 / n)
    else:
        scores = np.asarray(initial, dtype=float)
        if scores.shape != (n,) or np.any(scores <= 0):
            raise ValidationError("initial scores must be positive with one entry per proposal")
    positive = m.wins > 0
    delta = float("inf")
    converged = False
    iterations = 0
    for iteration in range(1, max_iter + 1):
        updated = mm_step(m.wins, m.counts, scores)
        rel = np.abs(updated - scores) / np.maximum(scores, 1e-15)
        delta = float(rel[positive].max()) if positive.any() else 0.0
        scores = updated
        iterations = iteration
        if delta < tol:
            converged = True
            break
    return BTScores(m.ids, scores, iterations, converged, delta, tuple(warnings))


def predict(scores: BTScores, i: str, j: str) -> float:
    """P(i preferred over j) = s_i / (s_i + s_j); 0.5 when both scores are 0."""
    s_i = scores.score(i)
    s_j = scores.score(j)
    if s_i == 0.0 and s_j == 0.0:
        return 0.5
    return s_i / (s_i + s_j)


def log_likelihood(m: WinMatrix, scores: Sequence[float]) -> float:
    """Bradley-Terry log-likelihood of a score vector (ties as half-wins)."""
    s = np.asarray(scores, dtype=float)
    positive = m.wins > 0
    ll = float(np.sum(m.wins[positive] * np.log(s[positive])))
    iu, ju = np.triu_indices(len(m.ids), 1)
    mask = m.counts[iu, ju] > 0
    ll -= float(np.sum(m.counts[iu, ju][mask] * np.log(s[iu][mask] + s[ju][mask])))
    return ll


def write_scores_csv(scores: BTScores, m: WinMatrix, path) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["proposal_id", "s", "w", "n_total"])
    totals = m.totals_per_proposal()
    for i, pid in enumerate(m.ids):
        writer.writerow([pid, repr(float(scores.scores[i])), repr(float(m.wins[i])), int(totals[i])])
    atomic_write_text(path, buf.getvalue())


def scores_to_json(scores: BTScores, m: WinMatrix) -> dict:
    totals = m.totals_per_proposal()
    return {
        "scores": {pid: float(scores.scores[i]) for i, pid in enumerate(scores.ids)},
        "wins": {pid: float(m.wins[i]) for i, pid in enumerate(m.ids)},
        "comparisons": {pid: int(totals[i]) for i, pid in enumerate(m.ids)},
        "iterations": scores.iterations,
        "converged": scores.converged,
        "final_delta": scores.final_delta,
        "warnings": list(scores.warnings),
    }


def write_scores_json(scores: BTScores, m: WinMatrix, path) -> None:
    atomic_write_text(path, json.dumps(scores_to_json(scores, m), indent=2, sort_keys=True) + "\n")
