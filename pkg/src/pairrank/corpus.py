"""Proposal corpus ingestion: manifest loading, run cycles, publication records."""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ManifestError, NotFoundError, ValidationError

_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class Proposal:
    """One document entering the ranking pipeline."""

    proposal_id: str
    cycle_id: str
    text: str
    human_score: Optional[float] = None
    accepted: Optional[bool] = None
    source_doc_hash: str = ""


@dataclass(frozen=True)
class PublicationRecord:
    """A publication linked to one or more proposals.

    A publication linked to K proposals contributes 1/K of credit to each.
    """

    publication_id: str
    linked_proposal_ids: tuple[str, ...]


@dataclass(frozen=True)
class Cycle:
    """A run cycle: the unit within which tournaments and metrics are computed."""

    cycle_id: str
    proposal_ids: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.proposal_ids)


@dataclass
class Corpus:
    proposals: dict[str, Proposal]
    cycles: dict[str, Cycle]
    publications: list[PublicationRecord]
    warnings: list[str] = field(default_factory=list)

    def cycle(self, cycle_id: str) -> Cycle:
        try:
            return self.cycles[cycle_id]
        except KeyError:
            raise NotFoundError(f"unknown cycle '{cycle_id}'") from None

    def proposals_in(self, cycle_id: str) -> list[Proposal]:
        return [self.proposals[pid] for pid in self.cycle(cycle_id).proposal_ids]


@dataclass(frozen=True)
class PublicationCounts:
    """Raw and discounted publication counts for one proposal."""

    n_pub: int
    n_dpub: float


def text_digest(text: str) -> str:
    """Content digest used for cache keys and change detection."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _require(entry: object, key: str, context: str, types: Union[type, tuple], type_name: str):
    if not isinstance(entry, dict):
        raise ManifestError(f"{context}: expected an object")
    if key not in entry:
        raise ManifestError(f"{context}: missing required field '{key}'")
    value = entry[key]
    if isinstance(value, bool) and not (types is bool or (isinstance(types, tuple) and bool in types)):
        raise ManifestError(f"{context}.{key}: expected {type_name}")
    if not isinstance(value, types):
        raise ManifestError(f"{context}.{key}: expected {type_name}")
    return value


def _optional_number(entry: dict, key: str, context: str) -> Optional[float]:
    value = entry.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ManifestError(f"{context}.{key}: expected a number")
    return float(value)


def _optional_bool(entry: dict, key: str, context: str) -> Optional[bool]:
    value = entry.get(key)
    if value is None:
        return None
    if not isinstance(value, bool):
        raise ManifestError(f"{context}.{key}: expected a boolean")
    return value


def load_corpus(manifest_path: Union[str, Path]) -> Corpus:
    """Load proposals, cycles, and publications from a manifest JSON file.

    Proposal text files are resolved relative to the manifest's directory.
    Dangling publication links are collected as warnings, not errors.
    """
    path = Path(manifest_path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: top-level value must be an object")

    base = path.parent
    proposals: dict[str, Proposal] = {}
    cycles: dict[str, Cycle] = {}
    warnings: list[str] = []

    cycle_entries = doc.get("cycles", [])
    if not isinstance(cycle_entries, list):
        raise ManifestError(f"{path}: 'cycles' must be a list")
    for ci, centry in enumerate(cycle_entries):
        ccontext = f"cycles[{ci}]"
        cycle_id = _require(centry, "cycle_id", ccontext, str, "a string")
        if cycle_id in cycles:
            raise ManifestError(f"{ccontext}: duplicate cycle_id '{cycle_id}'")
        pentries = centry.get("proposals", [])
        if not isinstance(pentries, list):
            raise ManifestError(f"{ccontext}.proposals: expected a list")
        ids: list[str] = []
        for pi, pentry in enumerate(pentries):
            pcontext = f"{ccontext}.proposals[{pi}]"
            pid = _require(pentry, "proposal_id", pcontext, str, "a string")
            rel = _require(pentry, "path", pcontext, str, "a string")
            if pid in proposals:
                raise ValidationError(f"duplicate proposal_id '{pid}' ({pcontext})")
            doc_path = base / rel
            try:
                text = doc_path.read_text(encoding="utf-8")
            except FileNotFoundError:
                raise ManifestError(f"{pcontext}: proposal file not found: {doc_path}") from None
            except OSError as exc:
                raise ManifestError(f"{pcontext}: cannot read {doc_path}: {exc}") from exc
            if not text.strip():
                warnings.append(f"proposal '{pid}' has empty text")
            proposals[pid] = Proposal(
                proposal_id=pid,
                cycle_id=cycle_id,
                text=text,
                human_score=_optional_number(pentry, "human_score", pcontext),
                accepted=_optional_bool(pentry, "accepted", pcontext),
                source_doc_hash=text_digest(text),
            )
            ids.append(pid)
        cycles[cycle_id] = Cycle(cycle_id, tuple(ids))

    publications: list[PublicationRecord] = []
    pub_entries = doc.get("publications", [])
    if not isinstance(pub_entries, list):
        raise ManifestError(f"{path}: 'publications' must be a list")
    for bi, bentry in enumerate(pub_entries):
        bcontext = f"publications[{bi}]"
        pub_id = _require(bentry, "publication_id", bcontext, str, "a string")
        linked = _require(bentry, "proposal_ids", bcontext, list, "a list")
        if not linked or not all(isinstance(x, str) for x in linked):
            raise ManifestError(f"{bcontext}.proposal_ids: expected a non-empty list of strings")
        for pid in linked:
            if pid not in proposals:
                warnings.append(f"publication '{pub_id}' links unknown proposal '{pid}'")
        publications.append(PublicationRecord(pub_id, tuple(linked)))

    return Corpus(proposals=proposals, cycles=cycles, publications=publications, warnings=warnings)


def write_manifest(corpus: Corpus, out_dir: Union[str, Path]) -> Path:
    """Emit a corpus back to disk in the manifest format `load_corpus` reads.

    Returns the manifest path. Reloading the emitted manifest reproduces an
    identical corpus.
    """
    out = Path(out_dir)
    doc_dir = out / "proposals"
    doc_dir.mkdir(parents=True, exist_ok=True)
    cycles_doc = []
    for cycle in corpus.cycles.values():
        pentries = []
        for pid in cycle.proposal_ids:
            if not _SAFE_ID.match(pid):
                raise ManifestError(
                    f"proposal_id '{pid}' is not filesystem-safe; cannot emit manifest"
                )
            prop = corpus.proposals[pid]
            (doc_dir / f"{pid}.md").write_text(prop.text, encoding="utf-8")
            entry: dict = {"proposal_id": pid, "path": f"proposals/{pid}.md"}
            if prop.human_score is not None:
                entry["human_score"] = prop.human_score
            if prop.accepted is not None:
                entry["accepted"] = prop.accepted
            pentries.append(entry)
        cycles_doc.append({"cycle_id": cycle.cycle_id, "proposals": pentries})
    pubs_doc = [
        {"publication_id": pub.publication_id, "proposal_ids": list(pub.linked_proposal_ids)}
        for pub in corpus.publications
    ]
    manifest_path = out / "manifest.json"
    manifest_path.write_text(
        json.dumps({"cycles": cycles_doc, "publications": pubs_doc}, indent=2) + "\n",
        encoding="utf-8",
    )
    return manifest_path


def publication_counts(corpus: Corpus, cycle_id: str) -> dict[str, PublicationCounts]:
    """Per-proposal publication counts for one cycle.

    n_pub counts linking publications; n_dpub sums 1/K over them, where K is
    the number of proposals each publication links (credit is discounted, not
    duplicated, when a paper draws on several proposals).
    """
    cycle = corpus.cycle(cycle_id)
    raw: dict[str, list] = {pid: [0, 0.0] for pid in cycle.proposal_ids}
    for pub in corpus.publications:
        k = len(pub.linked_proposal_ids)
        for pid in pub.linked_proposal_ids:
            if pid in raw:
                raw[pid][0] += 1
                raw[pid][1] += 1.0 / k
    return {pid: PublicationCounts(n_pub, n_dpub) for pid, (n_pub, n_dpub) in raw.items()}
