import sys
from pathlib import Path

import pytest

# The shared planted-corpus fixtures live in the engine repository's test
# package; the bindings consume the engine itself only through its
# installed interfaces.
ENGINE_ROOT = Path(__file__).resolve().parents[2]
if str(ENGINE_ROOT) not in sys.path:
    sys.path.insert(0, str(ENGINE_ROOT))

from tests.conftest import REFERENCE_SPEC_PATH  # noqa: E402
from tests.corpus import planted_corpus  # noqa: E402


@pytest.fixture(scope="session")
def reference_spec_text() -> str:
    return REFERENCE_SPEC_PATH.read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def planted():
    return planted_corpus()


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory, planted):
    from rtml_engine.trajectory import serialize_episode

    episodes, _ = planted
    root = tmp_path_factory.mktemp("corpus")
    for ep in episodes:
        (root / f"{ep.id}.json").write_text(serialize_episode(ep), encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def spec_path() -> str:
    return str(REFERENCE_SPEC_PATH)
