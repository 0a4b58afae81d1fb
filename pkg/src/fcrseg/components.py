"""Connected-component labeling of integer-valued maps.

Union-find over horizontal runs: every maximal same-value segment of a row
is one node, and same-value contacts between rows (plus diagonal contacts
for 8-connectivity) union the nodes. Components are numbered 1..n in
scanline order of their first pixel, which makes the labeling deterministic
and stable under re-runs.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError


def _find(parent: np.ndarray, x: int) -> int:
    # path halving
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return int(x)


def _union_pairs(parent: np.ndarray, a: np.ndarray, b: np.ndarray) -> None:
    for x, y in zip(a.tolist(), b.tolist()):
        rx = _find(parent, x)
        ry = _find(parent, y)
        if rx == ry:
            continue
        if rx < ry:
            parent[ry] = rx
        else:
            parent[rx] = ry


def label_components(values: np.ndarray, connectivity: int = 4) -> tuple[np.ndarray, int]:
    """Label maximal connected regions of equal value.

    Returns ``(labels, n)`` where ``labels`` assigns 1..n to every pixel
    (all values participate, including 0) and components are numbered in
    scanline order of their first pixel.
    """
    if connectivity not in (4, 8):
        raise ConfigError(f"connectivity must be 4 or 8, got {connectivity}")
    values = np.ascontiguousarray(values)
    if values.ndim != 2:
        raise ConfigError(f"expected a 2-D map, got shape {values.shape}")
    h, w = values.shape
    flat = values.ravel()

    # run starts: column 0 of every row plus every value change within a row
    change = np.empty(h * w, dtype=bool)
    change[0] = True
    change[1:] = flat[1:] != flat[:-1]
    change[0::w] = True
    run_of = (np.cumsum(change) - 1).reshape(h, w)
    n_runs = int(run_of[-1, -1]) + 1

    parent = np.arange(n_runs, dtype=np.int64)

    # vertical contacts
    m = values[1:, :] == values[:-1, :]
    if m.any():
        pairs = np.unique(run_of[:-1, :][m].astype(np.int64) * n_runs + run_of[1:, :][m])
        _union_pairs(parent, pairs // n_runs, pairs % n_runs)
    if connectivity == 8:
        m = values[1:, 1:] == values[:-1, :-1]
        if m.any():
            pairs = np.unique(run_of[:-1, :-1][m].astype(np.int64) * n_runs + run_of[1:, 1:][m])
            _union_pairs(parent, pairs // n_runs, pairs % n_runs)
        m = values[1:, :-1] == values[:-1, 1:]
        if m.any():
            pairs = np.unique(run_of[:-1, 1:][m].astype(np.int64) * n_runs + run_of[1:, :-1][m])
            _union_pairs(parent, pairs // n_runs, pairs % n_runs)

    # resolve roots, then number components by first (scanline) occurrence
    root = np.empty(n_runs, dtype=np.int64)
    for i in range(n_runs):
        root[i] = _find(parent, i)
    comp_of_run = np.zeros(n_runs, dtype=np.int32)
    next_id = 0
    seen: dict[int, int] = {}
    for i in range(n_runs):
        r = int(root[i])
        cid = seen.get(r)
        if cid is None:
            next_id += 1
            cid = next_id
            seen[r] = cid
        comp_of_run[i] = cid

    return comp_of_run[run_of], next_id
