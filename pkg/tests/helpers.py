"""Shared test builders and independent oracles.

The oracles here (grid-search MLE, closed-form Spearman) deliberately do not
reuse the package's own numeric paths.
"""

from __future__ import annotations

import numpy as np

from pairrank.corpus import Corpus, Cycle, Proposal, text_digest
from pairrank.judge import Outcome, TokenUsage, Verdict
from pairrank.tournament import ComparisonRecord


def make_proposal(pid, cycle="20B", text=None, human=None, accepted=None):
    body = text if text is not None else f"Proposal body for {pid}."
    return Proposal(
        proposal_id=pid,
        cycle_id=cycle,
        text=body,
        human_score=human,
        accepted=accepted,
        source_doc_hash=text_digest(body),
    )


def make_corpus(proposals, publications=()):
    by_cycle: dict[str, list[str]] = {}
    for p in proposals:
        by_cycle.setdefault(p.cycle_id, []).append(p.proposal_id)
    return Corpus(
        proposals={p.proposal_id: p for p in proposals},
        cycles={cid: Cycle(cid, tuple(ids)) for cid, ids in by_cycle.items()},
        publications=list(publications),
    )


def make_verdict(outcome):
    return Verdict(Outcome(outcome), "s", "c", "r")


def make_record(pair, outcome, key=None):
    return ComparisonRecord(
        pair=tuple(pair),
        verdict=make_verdict(outcome),
        usage=TokenUsage(10, 5),
        cache_key=key or f"key-{pair[0]}-{pair[1]}-{outcome}",
        attempts=1,
        timestamp=0.0,
    )


def outcomes_to_arrays(ids, outcomes):
    """(wins, counts) from a list of (id_i, id_j, "a"|"b"|"tie") outcomes."""
    index = {pid: k for k, pid in enumerate(ids)}
    n = len(ids)
    wins = np.zeros(n)
    counts = np.zeros((n, n), dtype=np.int64)
    for id_i, id_j, result in outcomes:
        i, j = index[id_i], index[id_j]
        if result == "a":
            wins[i] += 1.0
        elif result == "b":
            wins[j] += 1.0
        else:
            wins[i] += 0.5
            wins[j] += 0.5
        counts[i, j] += 1
        counts[j, i] += 1
    return wins, counts


def bt_loglik_reference(wins, counts, s):
    """Independent Bradley-Terry log-likelihood (plain loops)."""
    n = len(wins)
    ll = 0.0
    for i in range(n):
        if wins[i] > 0:
            ll += wins[i] * np.log(s[i])
    for i in range(n):
        for j in range(i + 1, n):
            if counts[i][j] > 0:
                ll -= counts[i][j] * np.log(s[i] + s[j])
    return ll


def grid_mle(wins, counts, grid_points=13, max_rounds=120, target=1e-9):
    """Brute-force BT MLE by grid refinement in log-strength space.

    Works on theta_i = log s_i with the last coordinate gauge-fixed to 0 (the
    likelihood is scale invariant and strictly concave in theta for strongly
    connected data, so level sets are convex). Each round evaluates a full
    grid over the current box and shrinks the box to the padded bounding box
    of the top-scoring points; when a flat direction keeps the box from
    shrinking, the top set is tightened. Returns normalized strengths.
    Assumes every item has positive wins and an interior optimum (win digraph
    strongly connected). Accurate to well below 1e-5 per coordinate.
    """
    wins = np.asarray(wins, dtype=float)
    counts = np.asarray(counts, dtype=float)
    n = len(wins)
    iu, ju = np.triu_indices(n, 1)
    mask = counts[iu, ju] > 0
    pair_i, pair_j, pair_n = iu[mask], ju[mask], counts[iu, ju][mask]

    def loglik(thetas):
        # thetas: (M, n-1); implicit last coordinate 0
        full = np.concatenate([thetas, np.zeros((len(thetas), 1))], axis=1)
        ll = full @ wins
        return ll - np.logaddexp(full[:, pair_i], full[:, pair_j]) @ pair_n

    lo = np.full(n - 1, -12.0)
    hi = np.full(n - 1, 12.0)
    best = np.zeros(n - 1)
    top_t = 4 * grid_points
    for _ in range(max_rounds):
        axes = [np.linspace(lo[d], hi[d], grid_points) for d in range(n - 1)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        cands = np.vstack([pts, best])
        values = loglik(cands)
        best = cands[int(np.argmax(values))]
        spacing = (hi - lo) / (grid_points - 1)
        t = min(top_t, len(values))
        top = cands[np.argpartition(values, -t)[-t:]]
        new_lo = np.maximum(top.min(axis=0) - spacing, lo)
        new_hi = np.minimum(top.max(axis=0) + spacing, hi)
        if np.all((new_hi - new_lo) > 0.95 * (hi - lo)) and top_t > 4:
            top_t = max(4, top_t // 2)  # flat direction: tighten the level set
        lo, hi = new_lo, new_hi
        if np.all(spacing < target):
            break
    theta = np.concatenate([best, [0.0]])
    s = np.exp(theta - theta.max())
    return s / s.sum()


def _reachable(adj, start):
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return seen


def win_digraph_strongly_connected(ids, outcomes):
    """True when every item has a credit path to every other (MLE exists)."""
    fwd = {pid: set() for pid in ids}
    rev = {pid: set() for pid in ids}
    for id_i, id_j, result in outcomes:
        credited = []
        if result == "a":
            credited = [(id_i, id_j)]
        elif result == "b":
            credited = [(id_j, id_i)]
        else:
            credited = [(id_i, id_j), (id_j, id_i)]
        for u, v in credited:
            fwd[u].add(v)
            rev[v].add(u)
    start = ids[0]
    return len(_reachable(fwd, start)) == len(ids) and len(_reachable(rev, start)) == len(ids)


def random_full_tournament(rng, n):
    """Random full round-robin outcomes with an identified interior MLE."""
    ids = [f"P{k:02d}" for k in range(n)]
    while True:
        outcomes = []
        for i in range(n):
            for j in range(i + 1, n):
                repeats = rng.choice([1, 2])
                for _ in range(repeats):
                    draw = rng.random()
                    result = "a" if draw < 0.45 else "b" if draw < 0.9 else "tie"
                    outcomes.append((ids[i], ids[j], result))
        wins, counts = outcomes_to_arrays(ids, outcomes)
        if np.all(wins > 0) and win_digraph_strongly_connected(ids, outcomes):
            return ids, outcomes, wins, counts


def spearman_closed_form(rank_x, rank_y):
    """Tie-free closed form 1 - 6*sum(d^2)/(n(n^2-1)) over two rank vectors."""
    rank_x = np.asarray(rank_x, dtype=float)
    rank_y = np.asarray(rank_y, dtype=float)
    n = len(rank_x)
    d = rank_x - rank_y
    return 1.0 - 6.0 * float((d * d).sum()) / (n * (n * n - 1))
