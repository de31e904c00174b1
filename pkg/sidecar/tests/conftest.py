import numpy as np
import pytest
from PIL import Image


@pytest.fixture()
def street_fixture_dir(tmp_path):
    """Three synthetic street photos: blue sky, gray facade, dark asphalt."""
    rng = np.random.default_rng(77)
    d = tmp_path / "photos"
    d.mkdir()
    for k in range(3):
        h, w = 96, 128
        img = np.zeros((h, w, 3), dtype=np.uint8)
        img[: h // 3] = (120 + 5 * k, 185, 235)        # sky band
        img[h // 3: 2 * h // 3] = (150, 142, 128)      # building band
        img[2 * h // 3:] = (88, 90, 94)                # road band
        img = np.clip(
            img.astype(np.int16) + rng.integers(-6, 7, size=img.shape), 0, 255
        ).astype(np.uint8)
        Image.fromarray(img, mode="RGB").save(d / f"img_{k:03d}.png")
    return d
