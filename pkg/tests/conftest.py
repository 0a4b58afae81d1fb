import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fcrseg.imgdata import LabelImage, synth_blobs


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_label_map(rng, shape=(16, 16), n_objects=3) -> LabelImage:
    """Voronoi-ish random partition: contiguous regions around seed points,
    with some background left over."""
    h, w = shape
    labels = np.zeros(shape, dtype=np.int32)
    ys = rng.integers(0, h, n_objects)
    xs = rng.integers(0, w, n_objects)
    radii = rng.uniform(2.0, max(h, w) / 2.5, n_objects)
    yy, xx = np.mgrid[0:h, 0:w]
    for i in range(n_objects):
        d = (yy - ys[i]) ** 2 + (xx - xs[i]) ** 2
        labels[(d <= radii[i] ** 2) & (labels == 0)] = i + 1
    from fcrseg.imgdata import canonical_labels

    return canonical_labels(labels)


def positive_embedding(rng, shape) -> np.ndarray:
    """Random embedding bounded away from zero so cosine guards stay inert."""
    return rng.uniform(0.1, 1.1, shape)


@pytest.fixture
def small_synth():
    return synth_blobs(4, (64, 64), 0.3, seed=42, eval_fraction=0.25)
