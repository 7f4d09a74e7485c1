"""Comparison scheduling, concurrent judging, and the resumable result cache.

The cache is an append-only JSONL file, one record per judged pair, keyed by
a digest of (model, prompt version, pair ids, document hashes). Completed
records are appended strictly in schedule order, so a killed run always
leaves a schedule-prefix cache and a resumed run reproduces the uninterrupted
file byte for byte.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from concurrent.futures import as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

from . import judge as judge_mod
from .corpus import Corpus, Cycle
from .errors import (
    CacheIntegrityError,
    NotFoundError,
    PairRankError,
    ValidationError,
)
from .judge import JudgeConfig, Outcome, TokenUsage, Verdict


@dataclass(frozen=True)
class PairSchedule:
    """The comparison plan for one cycle; pairs are (id_a, id_b) with id_a < id_b."""

    cycle_id: str
    pairs: tuple[tuple[str, str], ...]
    mode: str  # "full" | "sparse"
    k_per_item: Optional[int] = None
    seed: Optional[int] = None


def _sparse_pairs(ids: list[str], k_per_item: int, seed: int) -> tuple:
    rng = random.Random(seed)
    order = list(ids)
    rng.shuffle(order)
    edges: set[tuple[str, str]] = set()
    degree = {pid: 0 for pid in ids}

    def add(u: str, v: str) -> None:
        edge = (u, v) if u < v else (v, u)
        if edge not in edges:
            edges.add(edge)
            degree[u] += 1
            degree[v] += 1

    # random spanning tree guarantees connectivity
    for i in range(1, len(order)):
        add(order[i], order[rng.randrange(i)])
    # then raise the minimum degree to k
    while True:
        low = [pid for pid in ids if degree[pid] < k_per_item]
        if not low:
            break
        u = min(low, key=lambda pid: (degree[pid], pid))
        candidates = [
            v for v in ids if v != u and ((u, v) if u < v else (v, u)) not in edges
        ]
        v = min(candidates, key=lambda pid: (degree[pid], pid))
        add(u, v)
    return tuple(sorted(edges))


def build_schedule(
    cycle: Cycle,
    mode: str = "full",
    k_per_item: Optional[int] = None,
    seed: int = 0,
) -> PairSchedule:
    """Enumerate the pairs to judge for a cycle.

    Full mode lists every unordered pair once, in sorted order. Sparse mode
    samples a connected graph in which every proposal appears in at least
    k_per_item pairs.
    """
    ids = sorted(cycle.proposal_ids)
    if len(ids) < 2:
        raise ValidationError(f"cycle '{cycle.cycle_id}' needs at least 2 proposals to schedule")
    if mode == "full":
        return PairSchedule(cycle.cycle_id, tuple(itertools.combinations(ids, 2)), "full")
    if mode == "sparse":
        if k_per_item is None or k_per_item < 1:
            raise ValidationError("sparse mode requires k_per_item >= 1")
        if k_per_item >= len(ids):
            raise ValidationError(
                f"k_per_item={k_per_item} must be smaller than the cycle size {len(ids)}"
            )
        return PairSchedule(
            cycle.cycle_id, _sparse_pairs(ids, k_per_item, seed), "sparse", k_per_item, seed
        )
    raise ValidationError(f"unknown schedule mode '{mode}'")


@dataclass(frozen=True)
class ComparisonRecord:
    pair: tuple[str, str]
    verdict: Verdict
    usage: TokenUsage
    cache_key: str
    attempts: int
    timestamp: float


def cache_key(
    model_id: str,
    prompt_version: str,
    id_a: str,
    id_b: str,
    hash_a: str,
    hash_b: str,
) -> str:
    material = "\n".join((model_id, prompt_version, id_a, id_b, hash_a, hash_b))
    return hashlib.sha256(material.encode("utf-8")).hexdigest()


def record_to_json(rec: ComparisonRecord) -> str:
    return json.dumps(
        {
            "pair": list(rec.pair),
            "verdict": {
                "outcome": rec.verdict.outcome.value,
                "summary": rec.verdict.summary,
                "comparison": rec.verdict.comparison,
                "reasoning": rec.verdict.reasoning,
            },
            "usage": {
                "input_tokens": rec.usage.input_tokens,
                "output_tokens": rec.usage.output_tokens,
            },
            "cache_key": rec.cache_key,
            "attempts": rec.attempts,
            "timestamp": rec.timestamp,
        },
        sort_keys=True,
        separators=(",", ":"),
    )


def _record_from_json(line: str, lineno: int, path: Path) -> ComparisonRecord:
    try:
        doc = json.loads(line)
        verdict = Verdict(
            outcome=Outcome(doc["verdict"]["outcome"]),
            summary=doc["verdict"]["summary"],
            comparison=doc["verdict"]["comparison"],
            reasoning=doc["verdict"]["reasoning"],
        )
        usage = TokenUsage(int(doc["usage"]["input_tokens"]), int(doc["usage"]["output_tokens"]))
        pair = tuple(doc["pair"])
        if len(pair) != 2:
            raise ValueError("pair must have two ids")
        return ComparisonRecord(
            pair=pair,
            verdict=verdict,
            usage=usage,
            cache_key=str(doc["cache_key"]),
            attempts=int(doc["attempts"]),
            timestamp=float(doc["timestamp"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CacheIntegrityError(f"{path}: line {lineno}: corrupt comparison record: {exc}") from exc


def load_cache(path: Union[str, Path]) -> dict[str, ComparisonRecord]:
    """Load a comparison cache keyed by cache_key; corrupt lines are fatal."""
    cache_path = Path(path)
    records: dict[str, ComparisonRecord] = {}
    if not cache_path.exists():
        return records
    with open(cache_path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            stripped = line.strip()
            if not stripped:
                continue
            rec = _record_from_json(stripped, lineno, cache_path)
            if rec.cache_key in records:
                raise CacheIntegrityError(
                    f"{cache_path}: line {lineno}: duplicate cache_key {rec.cache_key}"
                )
            records[rec.cache_key] = rec
    return records


def run_tournament(
    corpus: Corpus,
    schedule: PairSchedule,
    judge_config: JudgeConfig,
    cache_path: Union[str, Path],
    max_in_flight: int = 4,
    progress: Optional[Callable[[int, int, int, int], None]] = None,
) -> list[ComparisonRecord]:
    """Judge every scheduled pair not already in the cache.

    Pairs are judged concurrently up to max_in_flight; completed records are
    appended to the cache in schedule order before the call returns. If the
    judge becomes unavailable, in-flight work is drained, everything completed
    is flushed, and the error propagates; a rerun picks up where it stopped.
    Returns records in schedule order.
    """
    if max_in_flight < 1:
        raise ValidationError("max_in_flight must be at least 1")
    cache_path = Path(cache_path)
    props = {}
    for id_a, id_b in schedule.pairs:
        for pid in (id_a, id_b):
            if pid in props:
                continue
            prop = corpus.proposals.get(pid)
            if prop is None:
                raise NotFoundError(f"scheduled proposal '{pid}' not in corpus")
            if not prop.text.strip():
                raise ValidationError(f"proposal '{pid}' has empty text; cannot judge")
            props[pid] = prop

    cache = load_cache(cache_path)
    keys = [
        cache_key(
            judge_config.model_id,
            judge_config.prompt_version,
            id_a,
            id_b,
            props[id_a].source_doc_hash,
            props[id_b].source_doc_hash,
        )
        for id_a, id_b in schedule.pairs
    ]
    todo = [
        (pair, key) for pair, key in zip(schedule.pairs, keys) if key not in cache
    ]
    total = len(schedule.pairs)
    done = total - len(todo)
    usage_in = sum(cache[k].usage.input_tokens for k in keys if k in cache)
    usage_out = sum(cache[k].usage.output_tokens for k in keys if k in cache)
    if progress:
        progress(done, total, usage_in, usage_out)

    if todo:
        cache_path.parent.mkdir(parents=True, exist_ok=True)

        def work(pos: int) -> tuple[int, ComparisonRecord]:
            pair, key = todo[pos]
            a, b = props[pair[0]], props[pair[1]]
            result = judge_mod.judge_pair(judge_config, a, b)
            stamp = 0.0 if judge_config.backend == "simulated" else time.time()
            return pos, ComparisonRecord(pair, result.verdict, result.usage, key, result.attempts, stamp)

        completed: dict[int, ComparisonRecord] = {}
        written: set[int] = set()
        next_flush = 0
        failure: Optional[PairRankError] = None

        with open(cache_path, "a", encoding="utf-8") as sink:

            def flush_in_order() -> None:
                nonlocal next_flush, done, usage_in, usage_out
                flushed = False
                while next_flush < len(todo) and next_flush in completed:
                    rec = completed[next_flush]
                    sink.write(record_to_json(rec) + "\n")
                    written.add(next_flush)
                    next_flush += 1
                    done += 1
                    usage_in += rec.usage.input_tokens
                    usage_out += rec.usage.output_tokens
                    flushed = True
                if flushed:
                    sink.flush()
                    if progress:
                        progress(done, total, usage_in, usage_out)

            with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                futures = {pool.submit(work, pos): pos for pos in range(len(todo))}
                for future in as_completed(futures):
                    try:
                        pos, rec = future.result()
                    except PairRankError as exc:
                        failure = exc
                        pool.shutdown(cancel_futures=True)
                        break
                    completed[pos] = rec
                    flush_in_order()
            if failure is not None:
                # drain whatever finished despite the failure, then flush all of
                # it (schedule order, gaps allowed) so completed work survives
                for future, pos in futures.items():
                    if future.done() and not future.cancelled() and pos not in completed:
                        try:
                            _, rec = future.result()
                            completed[pos] = rec
                        except PairRankError:
                            pass
                for pos in sorted(p for p in completed if p not in written):
                    sink.write(record_to_json(completed[pos]) + "\n")
                    written.add(pos)
                sink.flush()
        if failure is not None:
            raise failure
        for pos, (_, key) in enumerate(todo):
            cache[key] = completed[pos]

    return [cache[key] for key in keys]
