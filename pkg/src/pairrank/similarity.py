"""Embedding-based similarity: vectors, cosine matrices, near-duplicate flagging."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

import numpy as np
import requests

from .corpus import Corpus
from .errors import (
    CacheIntegrityError,
    NotFoundError,
    TransportError,
    ValidationError,
)
from .fileio import write_csv

logger = logging.getLogger(__name__)

_CHARS_PER_TOKEN = 4  # rough truncation heuristic; avoids a tokenizer dependency


@dataclass
class EmbedConfig:
    """Embedding backend configuration; `transport` is the test seam."""

    backend: str = "simulated"  # "remote" | "simulated"
    model_id: str = "qwen3-embedding-8b"
    api_base: str = ""
    dims: int = 4096
    max_retries: int = 4
    initial_backoff: float = 1.0
    backoff_factor: float = 2.0
    api_key_env: str = "PAIRRANK_API_KEY"
    timeout: float = 120.0
    batch_size: int = 16
    max_input_tokens: Optional[int] = None
    seed: int = 0
    transport: Optional[Callable] = None  # callable(config, texts) -> list of vectors

    def __post_init__(self) -> None:
        if self.backend not in ("remote", "simulated"):
            raise ValidationError(f"unknown embedding backend '{self.backend}'")
        if self.dims < 1:
            raise ValidationError("embedding dims must be positive")


@dataclass(frozen=True)
class EmbeddingVector:
    proposal_id: str
    dims: int
    values: np.ndarray
    model_id: str

    def __post_init__(self) -> None:
        if self.values.shape != (self.dims,):
            raise ValidationError(
                f"embedding for '{self.proposal_id}' has {self.values.shape} values, "
                f"expected ({self.dims},)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(f"embedding for '{self.proposal_id}' has non-finite values")
        if float(np.linalg.norm(self.values)) == 0.0:
            raise ValidationError(f"embedding for '{self.proposal_id}' has zero norm")


def _simulated_vectors(config: EmbedConfig, texts: list[str]) -> list[np.ndarray]:
    out = []
    for text in texts:
        digest = hashlib.sha256(
            f"embed|{config.seed}|{config.model_id}|{text}".encode("utf-8")
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        out.append(rng.standard_normal(config.dims))
    return out


def _remote_vectors(config: EmbedConfig, texts: list[str]) -> list[np.ndarray]:
    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {"model": config.model_id, "input": texts}
    try:
        resp = requests.post(config.api_base, json=body, headers=headers, timeout=config.timeout)
    except requests.RequestException as exc:
        raise TransportError(f"embedding request failed: {exc}") from exc
    if resp.status_code != 200:
        raise TransportError(
            f"embedding backend returned HTTP {resp.status_code}: {resp.text[:200]}",
            status=resp.status_code,
        )
    try:
        data = resp.json()["data"]
        return [np.asarray(item["embedding"], dtype=float) for item in data]
    except (ValueError, KeyError, TypeError) as exc:
        raise TransportError(f"malformed embedding response: {exc}") from exc


def _backend_vectors(config: EmbedConfig, texts: list[str]) -> list[np.ndarray]:
    if config.transport is not None:
        return [np.asarray(v, dtype=float) for v in config.transport(config, texts)]
    if config.backend == "simulated":
        return _simulated_vectors(config, texts)
    delay = config.initial_backoff
    attempts = config.max_retries + 1
    last: Optional[Exception] = None
    for attempt in range(1, attempts + 1):
        try:
            return _remote_vectors(config, texts)
        except TransportError as exc:
            last = exc
            logger.warning("embedding attempt %d/%d failed: %s", attempt, attempts, exc)
            if attempt < attempts and delay > 0:
                time.sleep(delay)
                delay *= config.backoff_factor
    raise TransportError(f"embedding backend unavailable after {attempts} attempts: {last}")


def _load_embed_cache(path: Path, config: EmbedConfig) -> dict[str, np.ndarray]:
    cache: dict[str, np.ndarray] = {}
    if not path.exists():
        return cache
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, 1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                doc = json.loads(stripped)
                model_id = doc["model_id"]
                doc_hash = doc["doc_hash"]
                dims = int(doc["dims"])
                values = np.asarray(doc["values"], dtype=float)
            except (KeyError, TypeError, ValueError) as exc:
                raise CacheIntegrityError(
                    f"{path}: line {lineno}: corrupt embedding record: {exc}"
                ) from exc
            if model_id != config.model_id:
                continue
            if dims != config.dims or values.shape != (config.dims,):
                raise CacheIntegrityError(
                    f"{path}: line {lineno}: embedding dimension {dims} does not match "
                    f"configured {config.dims}"
                )
            cache[doc_hash] = values
    return cache


def embed_corpus(
    corpus: Corpus,
    cycle_ids: Iterable[str],
    config: EmbedConfig,
    cache_path: Union[str, Path],
) -> list[EmbeddingVector]:
    """One embedding per proposal in the given cycles, via a content-hash cache.

    Identical documents share a cache entry and a single backend call. New
    embeddings are appended to the cache batch by batch, so an aborted run
    resumes where it stopped.
    """
    cache_path = Path(cache_path)
    proposals = []
    for cycle_id in cycle_ids:
        proposals.extend(corpus.proposals_in(cycle_id))
    for prop in proposals:
        if not prop.text.strip():
            raise ValidationError(f"proposal '{prop.proposal_id}' has empty text; cannot embed")

    cache = _load_embed_cache(cache_path, config)
    text_by_hash: dict[str, str] = {}
    for prop in proposals:
        if prop.source_doc_hash not in cache:
            text = prop.text
            if config.max_input_tokens is not None:
                limit = config.max_input_tokens * _CHARS_PER_TOKEN
                if len(text) > limit:
                    logger.warning(
                        "proposal '%s' exceeds the embedding input limit; truncating to "
                        "%d characters",
                        prop.proposal_id,
                        limit,
                    )
                    text = text[:limit]
            text_by_hash.setdefault(prop.source_doc_hash, text)

    missing = sorted(text_by_hash)
    if missing:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        with open(cache_path, "a", encoding="utf-8") as sink:
            for start in range(0, len(missing), config.batch_size):
                batch = missing[start : start + config.batch_size]
                vectors = _backend_vectors(config, [text_by_hash[h] for h in batch])
                if len(vectors) != len(batch):
                    raise TransportError(
                        f"embedding backend returned {len(vectors)} vectors for "
                        f"{len(batch)} inputs"
                    )
                for doc_hash, values in zip(batch, vectors):
                    if values.shape != (config.dims,):
                        raise CacheIntegrityError(
                            f"embedding backend returned dimension {values.shape} for "
                            f"configured {config.dims}"
                        )
                    sink.write(
                        json.dumps(
                            {
                                "model_id": config.model_id,
                                "doc_hash": doc_hash,
                                "dims": config.dims,
                                "values": [float(v) for v in values],
                            },
                            sort_keys=True,
                            separators=(",", ":"),
                        )
                        + "\n"
                    )
                    cache[doc_hash] = values
                sink.flush()

    return [
        EmbeddingVector(
            proposal_id=prop.proposal_id,
            dims=config.dims,
            values=cache[prop.source_doc_hash],
            model_id=config.model_id,
        )
        for prop in proposals
    ]


def cosine(v1: EmbeddingVector, v2: EmbeddingVector) -> float:
    """Cosine similarity, clamped to [-1, 1] against float drift."""
    if v1.dims != v2.dims:
        raise ValidationError(f"dimension mismatch: {v1.dims} vs {v2.dims}")
    n1 = float(np.linalg.norm(v1.values))
    n2 = float(np.linalg.norm(v2.values))
    if n1 == 0.0 or n2 == 0.0:
        raise ValidationError("cosine undefined for a zero-norm vector")
    value = float(np.dot(v1.values, v2.values) / (n1 * n2))
    return max(-1.0, min(1.0, value))


@dataclass(frozen=True)
class SimilarityMatrix:
    row_ids: tuple[str, ...]
    col_ids: tuple[str, ...]
    values: np.ndarray
    kind: str  # "intra_cycle" | "inter_cycle"


def similarity_matrix(
    corpus: Corpus,
    vectors: Iterable[EmbeddingVector],
    row_cycle: str,
    col_cycle: str,
) -> SimilarityMatrix:
    """Full pairwise cosine matrix between two cycles (or within one)."""
    by_id = {v.proposal_id: v for v in vectors}
    row_ids = tuple(corpus.cycle(row_cycle).proposal_ids)
    col_ids = tuple(corpus.cycle(col_cycle).proposal_ids)
    for pid in (*row_ids, *col_ids):
        if pid not in by_id:
            raise NotFoundError(f"no embedding for proposal '{pid}'")

    def unit_rows(ids: tuple[str, ...]) -> np.ndarray:
        stack = np.stack([by_id[pid].values for pid in ids])
        return stack / np.linalg.norm(stack, axis=1, keepdims=True)

    values = unit_rows(row_ids) @ unit_rows(col_ids).T
    values = np.clip(values, -1.0, 1.0)
    intra = row_cycle == col_cycle
    if intra:
        values = (values + values.T) / 2.0
    return SimilarityMatrix(row_ids, col_ids, values, "intra_cycle" if intra else "inter_cycle")


def flag_pairs(m: SimilarityMatrix, threshold: float) -> list[tuple[str, str, float]]:
    """All pairs scoring at least `threshold`, most similar first.

    Intra-cycle matrices report each unordered off-diagonal pair once.
    """
    if not (-1.0 < threshold <= 1.0):
        raise ValidationError("threshold must lie in (-1, 1]")
    flagged: list[tuple[str, str, float]] = []
    if m.kind == "intra_cycle":
        for i in range(len(m.row_ids)):
            for j in range(i + 1, len(m.col_ids)):
                score = float(m.values[i, j])
                if score >= threshold:
                    flagged.append((m.row_ids[i], m.col_ids[j], score))
    else:
        for i in range(len(m.row_ids)):
            for j in range(len(m.col_ids)):
                score = float(m.values[i, j])
                if score >= threshold:
                    flagged.append((m.row_ids[i], m.col_ids[j], score))
    flagged.sort(key=lambda item: (-item[2], item[0], item[1]))
    return flagged


def write_matrix_csv(m: SimilarityMatrix, path) -> None:
    rows = [
        [row_id] + [repr(float(v)) for v in m.values[i]]
        for i, row_id in enumerate(m.row_ids)
    ]
    write_csv(path, [""] + list(m.col_ids), rows)


def write_flagged_csv(flagged: Iterable[tuple[str, str, float]], path) -> None:
    write_csv(path, ["id_a", "id_b", "score"], [(a, b, repr(s)) for a, b, s in flagged])


SIMILARITY_SUMMARY_PROMPT = """Two research proposals have been flagged as unusually similar.

Proposal 1: {proposal_text_a}

Proposal 2: {proposal_text_b}

Summarize the similarities and the differences between these two proposals in a short paragraph each, so a human reviewer can quickly decide whether they overlap substantively."""


def render_similarity_prompt(text_a: str, text_b: str) -> str:
    """Prompt for the optional flagged-pair summarization pass through the judge backend."""
    return SIMILARITY_SUMMARY_PROMPT.replace("{proposal_text_a}", text_a).replace(
        "{proposal_text_b}", text_b
    )
