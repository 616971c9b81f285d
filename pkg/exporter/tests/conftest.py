import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from toyimages import make_image_folder


@pytest.fixture()
def toy_folder(tmp_path):
    return make_image_folder(tmp_path / "images", n_per_class=10, seed=1)
