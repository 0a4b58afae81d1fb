"""Output-layer activations that pin embeddings to one-hot cluster targets.

The ideal output assigns each pixel a hard one-hot vector (``hard_argmax``).
That map has no useful gradient, so training uses a sharpened power
normalization instead::

    p_k = v_k^alpha / sum_j v_j^alpha        (v strictly positive)

which interpolates between a flat distribution (alpha -> 0) and the hard
argmax (alpha -> inf) while staying differentiable. ``positivity`` supplies
the strictly positive domain via a softplus floor.

All functions accept plain numpy arrays or torch tensors of shape
``(..., K)`` and operate on the last axis; the torch path preserves
autograd.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ConfigError

# additive floor applied after softplus so downstream powers stay finite
POSITIVITY_EPS = 1e-6

# sharpening exponent per training stage: (first epoch, alpha)
DEFAULT_ALPHA_SCHEDULE: tuple[tuple[int, float], ...] = (
    (0, 2.0),
    (80, 2.0),
    (160, 4.0),
    (240, 6.0),
    (320, 8.0),
)


@dataclass(frozen=True)
class EmbeddingMap:
    """An ``H x W x K`` per-pixel embedding array."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 3:
            raise ConfigError(f"embedding map must be H x W x K, got shape {v.shape}")
        if v.shape[2] < 2:
            raise ConfigError(f"embedding map needs K >= 2 channels, got {v.shape[2]}")
        object.__setattr__(self, "values", v)

    @property
    def k(self) -> int:
        return self.values.shape[2]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def values_of(emb) -> np.ndarray | torch.Tensor:
    """Unwrap an EmbeddingMap; pass arrays and tensors through."""
    return emb.values if isinstance(emb, EmbeddingMap) else emb


@dataclass(frozen=True)
class ActivationSpec:
    """Sharpening exponent and its piecewise-constant epoch schedule."""

    alpha: float = 2.0
    schedule: tuple[tuple[int, float], ...] = DEFAULT_ALPHA_SCHEDULE

    def __post_init__(self):
        if self.alpha < 1.0:
            raise ConfigError(f"alpha must be >= 1, got {self.alpha}")
        sched = tuple((int(e), float(a)) for e, a in self.schedule)
        object.__setattr__(self, "schedule", sched)
        epochs = [e for e, _ in sched]
        if any(e < 0 for e in epochs):
            raise ConfigError("schedule epochs must be non-negative")
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError("schedule epochs must be strictly increasing")
        if any(a < 1.0 for _, a in sched):
            raise ConfigError("schedule alphas must be >= 1")


def alpha_at(spec: ActivationSpec, epoch: int) -> float:
    """Piecewise-constant lookup of the sharpening exponent at an epoch."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    alpha = spec.alpha
    for start, a in spec.schedule:
        if epoch >= start:
            alpha = a
        else:
            break
    return alpha


def positivity(v):
    """Elementwise softplus plus a small floor: smooth, monotone, > 0."""
    if isinstance(v, torch.Tensor):
        return F.softplus(v) + POSITIVITY_EPS
    v = np.asarray(v)
    if not np.issubdtype(v.dtype, np.floating):
        v = v.astype(np.float64)
    return np.logaddexp(0.0, v) + POSITIVITY_EPS


def hard_argmax(v):
    """One-hot at the maximum of the last axis; ties break to the lowest index."""
    if isinstance(v, torch.Tensor):
        idx = v.argmax(dim=-1, keepdim=True)
        return torch.zeros_like(v).scatter_(-1, idx, 1.0)
    v = np.asarray(v)
    out = np.zeros(v.shape, dtype=np.float64)
    idx = v.argmax(axis=-1)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def softmax(v):
    """exp(v_k) / sum_j exp(v_j), computed max-shifted for stability."""
    if isinstance(v, torch.Tensor):
        return torch.softmax(v, dim=-1)
    v = np.asarray(v, dtype=np.float64)
    e = np.exp(v - v.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def param_argmax(v, alpha: float):
    """Sharpened power normalization v_k^alpha / sum_j v_j^alpha.

    Requires strictly positive inputs (apply ``positivity`` first when the
    source is unconstrained). Computed in log space so large alphas neither
    overflow nor lose the gradient.
    """
    if alpha <= 0:
        raise ConfigError(f"alpha must be > 0, got {alpha}")
    if isinstance(v, torch.Tensor):
        if not bool((v > 0).all()):
            raise ValueError("param_argmax requires strictly positive inputs")
        a = alpha * torch.log(v)
        return torch.softmax(a, dim=-1)
    v = np.asarray(v, dtype=np.float64)
    if not (v > 0).all():
        raise ValueError("param_argmax requires strictly positive inputs")
    a = alpha * np.log(v)
    e = np.exp(a - a.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
