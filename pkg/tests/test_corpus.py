import json

import pytest

from helpers import make_corpus, make_proposal
from pairrank.corpus import (
    PublicationRecord,
    load_corpus,
    publication_counts,
    write_manifest,
)
from pairrank.errors import ManifestError, NotFoundError, ValidationError


def test_load_corpus_basic(manifest_dir):
    corpus = load_corpus(manifest_dir / "manifest.json")
    assert set(corpus.cycles) == {"20B", "21A"}
    assert corpus.cycles["20B"].n == 3
    assert corpus.cycles["21A"].n == 2
    assert corpus.proposals["P-001"].human_score == 4.5
    assert corpus.proposals["P-001"].accepted is True
    assert corpus.proposals["P-102"].human_score is None
    assert corpus.proposals["P-102"].accepted is None
    assert corpus.proposals["P-003"].text == "Hydrogen dynamics in metal hydrides."
    assert corpus.proposals["P-003"].source_doc_hash
    # every proposal belongs to exactly one cycle
    for pid, prop in corpus.proposals.items():
        assert pid in corpus.cycles[prop.cycle_id].proposal_ids


def test_load_corpus_two_proposal_cycle(tmp_path):
    (tmp_path / "a.md").write_text("text a", encoding="utf-8")
    (tmp_path / "b.md").write_text("text b", encoding="utf-8")
    manifest = {
        "cycles": [
            {
                "cycle_id": "20B",
                "proposals": [
                    {"proposal_id": "A", "path": "a.md"},
                    {"proposal_id": "B", "path": "b.md"},
                ],
            }
        ]
    }
    (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
    corpus = load_corpus(tmp_path / "m.json")
    assert list(corpus.cycles) == ["20B"]
    assert corpus.cycles["20B"].n == 2


def test_dangling_publication_link_warns_not_fatal(manifest_dir):
    corpus = load_corpus(manifest_dir / "manifest.json")
    assert any("P-404" in w and "pub-3" in w for w in corpus.warnings)
    assert len(corpus.publications) == 3


def test_duplicate_proposal_id_is_validation_error(tmp_path):
    (tmp_path / "a.md").write_text("text", encoding="utf-8")
    manifest = {
        "cycles": [
            {
                "cycle_id": "20B",
                "proposals": [
                    {"proposal_id": "DUP", "path": "a.md"},
                    {"proposal_id": "DUP", "path": "a.md"},
                ],
            }
        ]
    }
    (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
    with pytest.raises(ValidationError, match="DUP"):
        load_corpus(tmp_path / "m.json")


def test_malformed_json_reports_line(tmp_path):
    (tmp_path / "m.json").write_text('{"cycles": [\n  {"cycle_id" "oops"}\n]}', encoding="utf-8")
    with pytest.raises(ManifestError, match="line 2"):
        load_corpus(tmp_path / "m.json")


def test_missing_field_reports_context(tmp_path):
    manifest = {"cycles": [{"cycle_id": "20B", "proposals": [{"proposal_id": "A"}]}]}
    (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
    with pytest.raises(ManifestError, match=r"cycles\[0\].proposals\[0\]"):
        load_corpus(tmp_path / "m.json")


def test_missing_manifest_names_path(tmp_path):
    with pytest.raises(ManifestError, match="nowhere.json"):
        load_corpus(tmp_path / "nowhere.json")


def test_missing_proposal_file_is_manifest_error(tmp_path):
    manifest = {
        "cycles": [
            {"cycle_id": "20B", "proposals": [{"proposal_id": "A", "path": "gone.md"}]}
        ]
    }
    (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
    with pytest.raises(ManifestError, match="gone.md"):
        load_corpus(tmp_path / "m.json")


def test_publication_counts_single_link():
    corpus = make_corpus(
        [make_proposal("A"), make_proposal("B")],
        [PublicationRecord("pub-1", ("A",))],
    )
    counts = publication_counts(corpus, "20B")
    assert counts["A"].n_pub == 1
    assert counts["A"].n_dpub == 1.0
    assert counts["B"] == type(counts["B"])(0, 0.0)


def test_publication_counts_discounted_sum():
    # one K=1 publication plus one K=2 publication: 1 + 1/2 = 1.5
    corpus = make_corpus(
        [make_proposal("A"), make_proposal("B")],
        [
            PublicationRecord("pub-1", ("A",)),
            PublicationRecord("pub-2", ("A", "B")),
        ],
    )
    counts = publication_counts(corpus, "20B")
    assert counts["A"].n_pub == 2
    assert counts["A"].n_dpub == pytest.approx(1.5)
    assert counts["B"].n_pub == 1
    assert counts["B"].n_dpub == pytest.approx(0.5)


def test_publication_counts_unknown_cycle():
    corpus = make_corpus([make_proposal("A"), make_proposal("B")])
    with pytest.raises(NotFoundError, match="nope"):
        publication_counts(corpus, "nope")


def test_each_fully_resolving_publication_distributes_one_unit(manifest_dir):
    corpus = load_corpus(manifest_dir / "manifest.json")
    total = 0.0
    for cycle_id in corpus.cycles:
        for counts in publication_counts(corpus, cycle_id).values():
            total += counts.n_dpub
    resolving = sum(
        1
        for pub in corpus.publications
        if all(pid in corpus.proposals for pid in pub.linked_proposal_ids)
    )
    assert total == pytest.approx(resolving)


def test_cross_cycle_publication_credits_each_side(tmp_path):
    for name in ("a", "b"):
        (tmp_path / f"{name}.md").write_text(f"text {name}", encoding="utf-8")
    manifest = {
        "cycles": [
            {"cycle_id": "C1", "proposals": [{"proposal_id": "A", "path": "a.md"},
                                             {"proposal_id": "A2", "path": "a.md"}]},
            {"cycle_id": "C2", "proposals": [{"proposal_id": "B", "path": "b.md"},
                                             {"proposal_id": "B2", "path": "b.md"}]},
        ],
        "publications": [{"publication_id": "pub-x", "proposal_ids": ["A", "B"]}],
    }
    (tmp_path / "m.json").write_text(json.dumps(manifest), encoding="utf-8")
    corpus = load_corpus(tmp_path / "m.json")
    assert publication_counts(corpus, "C1")["A"].n_dpub == pytest.approx(0.5)
    assert publication_counts(corpus, "C2")["B"].n_dpub == pytest.approx(0.5)


def test_manifest_round_trip(manifest_dir, tmp_path):
    corpus = load_corpus(manifest_dir / "manifest.json")
    out = tmp_path / "emitted"
    manifest_path = write_manifest(corpus, out)
    reloaded = load_corpus(manifest_path)
    assert reloaded == corpus
