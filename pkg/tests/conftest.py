import json

import numpy as np
import pytest

from peace.backends import BackendDescriptor, create_backend
from peace.imaging import Frame
from peace.vocab import default_vocab_path, load_targets, load_vocabulary
from peace.worlds import Patch, make_world


@pytest.fixture(scope="session")
def backend():
    return create_backend(BackendDescriptor(kind="mock", seed=7))


@pytest.fixture(scope="session")
def vocab(backend):
    return load_vocabulary(default_vocab_path(), backend)


@pytest.fixture(scope="session")
def targets():
    return load_targets(default_vocab_path())


@pytest.fixture()
def write_vocab(tmp_path):
    def _write(doc: dict, name: str = "vocab.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(doc))
        return str(path)
    return _write


def tagged_frame(tags: dict, key: str, size: int = 8) -> Frame:
    rgb = np.zeros((size, size, 3), dtype=np.uint8)
    return Frame(rgb=rgb, tags=dict(tags), key=key)


@pytest.fixture(scope="session")
def split_world():
    """Left half grass (safe), right half building (unsafe)."""
    return make_world(
        "split", 120.0, 1.0, "grass", True,
        patches=(Patch("building", False, "rect", (60.0, 0.0, 120.0, 120.0)),),
    )
