import json

import pytest


@pytest.fixture
def manifest_dir(tmp_path):
    """A small on-disk corpus: 2 cycles, human scores, publications."""
    docs = tmp_path / "docs"
    docs.mkdir()
    texts = {
        "P-001": "Neutron scattering study of polymer gels.",
        "P-002": "Magnetic excitations in a frustrated lattice.",
        "P-003": "Hydrogen dynamics in metal hydrides.",
        "P-101": "Protein folding under pressure.",
        "P-102": "Battery electrode degradation in operando.",
    }
    for pid, text in texts.items():
        (docs / f"{pid}.md").write_text(text, encoding="utf-8")
    manifest = {
        "cycles": [
            {
                "cycle_id": "20B",
                "proposals": [
                    {"proposal_id": "P-001", "path": "docs/P-001.md", "human_score": 4.5,
                     "accepted": True},
                    {"proposal_id": "P-002", "path": "docs/P-002.md", "human_score": 3.0,
                     "accepted": True},
                    {"proposal_id": "P-003", "path": "docs/P-003.md", "human_score": 2.0,
                     "accepted": False},
                ],
            },
            {
                "cycle_id": "21A",
                "proposals": [
                    {"proposal_id": "P-101", "path": "docs/P-101.md", "human_score": 4.0},
                    {"proposal_id": "P-102", "path": "docs/P-102.md"},
                ],
            },
        ],
        "publications": [
            {"publication_id": "pub-1", "proposal_ids": ["P-001"]},
            {"publication_id": "pub-2", "proposal_ids": ["P-001", "P-002"]},
            {"publication_id": "pub-3", "proposal_ids": ["P-404"]},
        ],
    }
    (tmp_path / "manifest.json").write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return tmp_path
