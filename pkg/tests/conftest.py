import os
from pathlib import Path

import numpy as np
import pytest

from spectrapan.codec import PEConfig
from spectrapan.grid import IdMap
from spectrapan.lab.scenes import default_categories
from spectrapan.utils.serialize import dumps_json

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def pe():
    return PEConfig(L=4, grid_h=80, grid_w=80)


@pytest.fixture
def categories():
    # 1 is stuff, 2 and 3 are things
    return default_categories()


@pytest.fixture
def two_blocks():
    """8 x 8 map: void border column, instance 1 on the left, instance 2 on the right."""
    ids = np.zeros((8, 8), dtype=np.int64)
    ids[:, 1:4] = 1
    ids[:, 4:8] = 2
    return IdMap(ids)


@pytest.fixture
def golden():
    """Compare a payload byte for byte with tests/golden/<name>.json.

    A missing file is written on first use; SPECTRAPAN_UPDATE_GOLDEN=1 rewrites it.
    """

    def check(name: str, payload) -> None:
        path = GOLDEN_DIR / f"{name}.json"
        text = dumps_json(payload, indent=2) + "\n"
        if os.environ.get("SPECTRAPAN_UPDATE_GOLDEN") == "1" or not path.exists():
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
            return
        assert text == path.read_text(encoding="utf-8"), f"{path.name} changed; rerun with SPECTRAPAN_UPDATE_GOLDEN=1 if intended"

    return check
