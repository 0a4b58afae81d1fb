"""Embedding objective: high within-object similarity, low similarity
between the mean features of neighboring objects.

For every object the intra term averages cosine similarity over ordered
pixel pairs; the inter term averages, over each object's graph neighbors,
the similarity of per-object mean features remapped to [0, 1] via
(1 + cos)/2. Both are averaged over objects, and the minimized scalar is::

    total = w_inter * l_inter - w_intra * l_intra

so that the optimum pushes each object onto one embedding channel and its
neighbors onto different ones. The intra term uses the O(n) identity
``sum_{p != q} e_p . e_q = ||sum_p e_p||^2 - n`` over unit-normalized
vectors; the quadratic pairwise sum survives only as a test oracle.

Inputs may be numpy arrays or torch tensors; tensors keep autograd so the
total can be backpropagated directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
import torch

from .activation import values_of
from .errors import DataError
from .graph import ObjectGraph
from .imgdata import labels_of

Scalar = Union[float, torch.Tensor]

# guards the cosine denominator against zero-norm embedding vectors
NORM_EPS = 1e-8


@dataclass
class LossBreakdown:
    """Loss terms for one image. ``total`` is the minimized quantity."""

    l_intra: Scalar
    l_inter: Scalar
    total: Scalar
    per_object_means: np.ndarray | torch.Tensor
    background_only: bool = False


def _as_tensor(emb) -> tuple[torch.Tensor, bool]:
    v = values_of(emb)
    if isinstance(v, torch.Tensor):
        return v, True
    v = np.asarray(v)
    return torch.from_numpy(np.ascontiguousarray(v.astype(np.float64, copy=False))), False


def _participants(labels: np.ndarray, include_background: bool) -> list[int]:
    ids = list(range(1, int(labels.max(initial=0)) + 1))
    if include_background and bool((labels == 0).any()):
        ids.insert(0, 0)
    return ids


def mean_feature(emb, lbl, object_id: int):
    """Arithmetic mean of the embedding vectors over an object's pixels."""
    values, was_tensor = _as_tensor(emb)
    labels = labels_of(lbl)
    mask = labels == object_id
    if not mask.any():
        raise DataError(f"object {object_id} has no pixels")
    mu = values[torch.from_numpy(mask)].mean(dim=0)
    return mu if was_tensor else mu.numpy()


def _object_stats(values: torch.Tensor, labels: np.ndarray, ids: list[int]):
    """Per-object pixel counts, unit-vector sums and raw mean features."""
    flat = values.reshape(-1, values.shape[-1])
    lab = torch.from_numpy(labels.reshape(-1).astype(np.int64))
    index = torch.full((int(labels.max(initial=0)) + 1,), -1, dtype=torch.int64)
    for slot, i in enumerate(ids):
        index[i] = slot
    slot_of_pixel = index[lab]
    keep = slot_of_pixel >= 0
    flat = flat[keep]
    slot_of_pixel = slot_of_pixel[keep]

    n = torch.bincount(slot_of_pixel, minlength=len(ids)).to(values.dtype)
    if bool((n == 0).any()):
        missing = [ids[s] for s in torch.nonzero(n == 0).flatten().tolist()]
        raise DataError(f"objects with no pixels: {missing}")

    unit = flat / (flat.norm(dim=1, keepdim=True) + NORM_EPS)
    unit_sums = torch.zeros(len(ids), values.shape[-1], dtype=values.dtype)
    unit_sums.index_add_(0, slot_of_pixel, unit)
    raw_sums = torch.zeros(len(ids), values.shape[-1], dtype=values.dtype)
    raw_sums.index_add_(0, slot_of_pixel, flat)
    means = raw_sums / n[:, None]
    return n, unit_sums, means


def _intra_terms(n: torch.Tensor, unit_sums: torch.Tensor) -> torch.Tensor:
    sq = (unit_sums * unit_sums).sum(dim=1)
    pairs = n * (n - 1)
    safe = torch.where(pairs > 0, pairs, torch.ones_like(pairs))
    terms = (sq - n) / safe
    return torch.where(n > 1, terms, torch.ones_like(terms))


def _inter_terms(means: torch.Tensor, ids: list[int], g: ObjectGraph) -> torch.Tensor:
    slot = {i: s for s, i in enumerate(ids)}
    src, dst = [], []
    for i in ids:
        for j in sorted(g.neighbors.get(i, ())):
            if j in slot:
                src.append(slot[i])
                dst.append(slot[j])
    terms = torch.zeros(len(ids), dtype=means.dtype)
    if not src:
        return terms
    a = means[src]
    b = means[dst]
    cos = (a * b).sum(dim=1) / ((a.norm(dim=1) + NORM_EPS) * (b.norm(dim=1) + NORM_EPS))
    sim = 0.5 * (1.0 + cos)
    terms.index_add_(0, torch.tensor(src, dtype=torch.int64), sim)
    deg = torch.bincount(torch.tensor(src, dtype=torch.int64), minlength=len(ids)).to(means.dtype)
    return terms / torch.where(deg > 0, deg, torch.ones_like(deg))


def intra_similarity(emb, lbl, include_background: bool = False) -> Scalar:
    """Mean over objects of the mean pairwise cosine similarity inside each
    object; single-pixel objects contribute 1."""
    values, was_tensor = _as_tensor(emb)
    labels = labels_of(lbl)
    ids = _participants(labels, include_background)
    if not ids:
        return torch.zeros((), dtype=values.dtype) if was_tensor else 0.0
    n, unit_sums, _ = _object_stats(values, labels, ids)
    out = _intra_terms(n, unit_sums).mean()
    return out if was_tensor else float(out)


def inter_similarity(emb, lbl, g: ObjectGraph) -> Scalar:
    """Mean over objects of the average remapped cosine similarity between
    an object's mean feature and each graph neighbor's mean feature.
    Objects without neighbors contribute 0."""
    values, was_tensor = _as_tensor(emb)
    labels = labels_of(lbl)
    ids = _participants(labels, g.includes_background)
    if not ids:
        return torch.zeros((), dtype=values.dtype) if was_tensor else 0.0
    _, _, means = _object_stats(values, labels, ids)
    out = _inter_terms(means, ids, g).mean()
    return out if was_tensor else float(out)


def total_loss(emb, lbl, g: ObjectGraph, w_intra: float = 1.0, w_inter: float = 1.0) -> LossBreakdown:
    """Minimizable objective ``w_inter * l_inter - w_intra * l_intra``.

    A background-only image yields a zero total flagged with
    ``background_only`` instead of an error.
    """
    if w_intra < 0 or w_inter < 0:
        raise DataError(f"weights must be >= 0, got {w_intra}, {w_inter}")
    values, was_tensor = _as_tensor(emb)
    labels = labels_of(lbl)
    k = values.shape[-1]

    if int(labels.max(initial=0)) == 0:
        empty = torch.zeros(0, k, dtype=values.dtype)
        if was_tensor:
            zero = torch.zeros((), dtype=values.dtype)
            return LossBreakdown(zero, zero, zero, empty, background_only=True)
        return LossBreakdown(0.0, 0.0, 0.0, empty.numpy(), background_only=True)

    ids = _participants(labels, g.includes_background)
    n, unit_sums, means = _object_stats(values, labels, ids)
    l_intra = _intra_terms(n, unit_sums).mean()
    l_inter = _inter_terms(means, ids, g).mean()
    total = w_inter * l_inter - w_intra * l_intra

    object_means = means[1:] if ids and ids[0] == 0 else means
    if was_tensor:
        return LossBreakdown(l_intra, l_inter, total, object_means)
    return LossBreakdown(
        float(l_intra), float(l_inter), float(total), object_means.detach().numpy()
    )
