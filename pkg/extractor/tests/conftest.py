import os

import numpy as np
import pytest
from PIL import Image


def _write_images(root, split, classes, per_class, seed):
    rng = np.random.default_rng(seed)
    for name in classes:
        folder = os.path.join(root, split, name)
        os.makedirs(folder, exist_ok=True)
        for i in range(per_class):
            pixels = rng.integers(0, 256, size=(64, 64, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(os.path.join(folder, f"img_{i:03d}.png"))


@pytest.fixture(scope="session")
def image_dataset(tmp_path_factory):
    """Tiny two-class image-folder dataset: 4 train + 2 test per class."""
    root = str(tmp_path_factory.mktemp("dataset"))
    classes = ["cat", "dog"]
    _write_images(root, "train", classes, per_class=4, seed=0)
    _write_images(root, "test", classes, per_class=2, seed=1)
    return root
