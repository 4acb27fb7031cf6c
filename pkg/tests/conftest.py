from __future__ import annotations

from pathlib import Path

import pytest

from rtml_engine.rtml import RtmlDocument, parse_rtml

DATA_DIR = Path(__file__).parent / "data"
REFERENCE_SPEC_PATH = DATA_DIR / "pull_bowl_storage_bread.rtml"


@pytest.fixture(scope="session")
def reference_spec_text() -> str:
    return REFERENCE_SPEC_PATH.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def reference_doc(reference_spec_text) -> RtmlDocument:
    return parse_rtml(reference_spec_text)


@pytest.fixture(scope="session")
def planted():
    from .corpus import planted_corpus

    episodes, plants = planted_corpus()
    return episodes, plants


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, planted) -> Path:
    """The planted corpus written to disk as episode JSON files."""
    from rtml_engine.trajectory import serialize_episode

    episodes, _ = planted
    root = tmp_path_factory.mktemp("corpus")
    for ep in episodes:
        (root / f"{ep.id}.json").write_text(serialize_episode(ep), encoding="utf-8")
    return root
