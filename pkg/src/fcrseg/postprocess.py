"""From a K-channel activation map to an instance label map.

Pixels harden to their argmax channel; within each channel, connected
regions become instances. Touching objects end up in different channels
during training, so plain connectivity is enough to separate them. The
channel holding the image border majority is treated as background by
default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .activation import EmbeddingMap, values_of
from .components import label_components
from .errors import ConfigError, DataError
from .graph import Coloring
from .imgdata import LabelImage, labels_of

BACKGROUND_POLICIES = ("border_majority", "largest_component", "none")


@dataclass(frozen=True)
class InstanceResult:
    """Extracted instances plus the channel each one came from."""

    labels: LabelImage
    channel_of: dict[int, int]
    background_channel: int | None


def harden(emb) -> np.ndarray:
    """Per-pixel argmax channel index (ties break to the lowest channel)."""
    values = values_of(emb)
    values = np.asarray(values.detach().numpy() if hasattr(values, "detach") else values)
    if values.ndim != 3:
        raise ConfigError(f"expected an H x W x K map, got shape {values.shape}")
    return values.argmax(axis=2).astype(np.int32)


def extract_instances(
    channel_map: np.ndarray,
    min_area: int = 10,
    background_policy: str = "border_majority",
    connectivity: int = 4,
) -> InstanceResult:
    """Split a hardened channel map into instances by regional connectivity.

    Per channel, connected components become instances; components smaller
    than ``min_area`` are dropped. Background removal:

    - ``border_majority``: every component of the channel that occupies the
      majority of image-border pixels is background;
    - ``largest_component``: only the single largest component is background;
    - ``none``: keep everything.

    Survivors are renumbered 1..M in (channel, scanline) order.

    Note the method's inherent blind spot: an object that never touches
    background may legitimately land on the background's channel, and
    ``border_majority`` then removes it; ``largest_component`` keeps it at
    the cost of assuming the background is one dominant region.
    """
    if background_policy not in BACKGROUND_POLICIES:
        raise ConfigError(f"unknown background policy {background_policy!r}")
    if min_area < 1:
        raise ConfigError(f"min_area must be >= 1, got {min_area}")
    channel_map = np.asarray(channel_map)
    if channel_map.ndim != 2 or not np.issubdtype(channel_map.dtype, np.integer):
        raise DataError("channel map must be a 2-D integer array")
    if channel_map.min(initial=0) < 0:
        raise DataError("channel map contains negative values")

    comp, n = label_components(channel_map, connectivity=connectivity)
    flat = comp.ravel()
    areas = np.bincount(flat, minlength=n + 1)
    first = np.zeros(n + 1, dtype=np.int64)
    first[flat[::-1]] = np.arange(flat.size - 1, -1, -1)
    channel = channel_map.ravel()[first]

    keep = areas >= min_area
    keep[0] = False
    background_channel: int | None = None
    if background_policy == "border_majority":
        border = np.concatenate(
            [channel_map[0, :], channel_map[-1, :], channel_map[1:-1, 0], channel_map[1:-1, -1]]
        )
        background_channel = int(np.bincount(border).argmax())
        keep &= channel != background_channel
    elif background_policy == "largest_component":
        bg_comp = int(np.argmax(areas[1:])) + 1
        background_channel = int(channel[bg_comp])
        keep[bg_comp] = False

    survivors = np.flatnonzero(keep)
    order = survivors[np.lexsort((first[survivors], channel[survivors]))]
    mapping = np.zeros(n + 1, dtype=np.int32)
    mapping[order] = np.arange(1, order.size + 1, dtype=np.int32)
    labels = LabelImage(mapping[comp])
    channel_of = {int(mapping[c]): int(channel[c]) for c in order}
    return InstanceResult(labels=labels, channel_of=channel_of, background_channel=background_channel)


def one_hot_map(lbl, coloring: Coloring | dict[int, int], k: int = 4) -> EmbeddingMap:
    """Render a label map as an exact one-hot embedding map.

    Every pixel of object i takes the one-hot vector of the object's color;
    background pixels take color ``coloring[0]``, so the coloring must
    include the background node whenever background pixels exist.
    """
    labels = labels_of(lbl)
    assignment = coloring.assignment if isinstance(coloring, Coloring) else dict(coloring)
    m = int(labels.max(initial=0))
    color_of = np.zeros(m + 1, dtype=np.int64)
    for i in range(0 if (labels == 0).any() else 1, m + 1):
        if i not in assignment:
            raise DataError(f"coloring is missing id {i}")
        c = assignment[i]
        if not 0 <= c < k:
            raise DataError(f"color {c} of id {i} outside 0..{k - 1}")
        color_of[i] = c
    return EmbeddingMap(np.eye(k, dtype=np.float64)[color_of[labels]])
