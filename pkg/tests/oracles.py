"""Independent brute-force reference implementations.

Everything here is written straight from definitions with plain Python
loops and sets, sharing no code with the package's optimized paths, so the
two can check each other.
"""

from __future__ import annotations

import numpy as np


# --- adjacency ------------------------------------------------------------


def brute_adjacency(labels: np.ndarray, radius: int, include_background: bool) -> set[tuple[int, int]]:
    """All-pixel-pairs Chebyshev adjacency. O(P^2); small inputs only."""
    h, w = labels.shape
    coords = {}
    for y in range(h):
        for x in range(w):
            coords.setdefault(int(labels[y, x]), []).append((y, x))
    if not include_background:
        coords.pop(0, None)
    ids = sorted(coords)
    edges = set()
    for a in range(len(ids)):
        for b in range(a + 1, len(ids)):
            i, j = ids[a], ids[b]
            found = False
            for (y1, x1) in coords[i]:
                for (y2, x2) in coords[j]:
                    if max(abs(y1 - y2), abs(x1 - x2)) <= radius:
                        found = True
                        break
                if found:
                    break
            if found:
                edges.add((i, j))
    return edges


# --- connectivity ---------------------------------------------------------


def flood_fill_components(values: np.ndarray, connectivity: int = 4) -> list[set[tuple[int, int]]]:
    """Stack-based flood fill over equal values; component pixel sets in
    scanline order of their first pixel."""
    h, w = values.shape
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    seen = np.zeros((h, w), dtype=bool)
    components = []
    for y0 in range(h):
        for x0 in range(w):
            if seen[y0, x0]:
                continue
            target = values[y0, x0]
            stack = [(y0, x0)]
            seen[y0, x0] = True
            comp = set()
            while stack:
                y, x = stack.pop()
                comp.add((y, x))
                for dy, dx in steps:
                    ny, nx = y + dy, x + dx
                    if 0 <= ny < h and 0 <= nx < w and not seen[ny, nx] and values[ny, nx] == target:
                        seen[ny, nx] = True
                        stack.append((ny, nx))
            components.append(comp)
    return components


def is_connected(labels: np.ndarray, object_id: int, connectivity: int = 4) -> bool:
    pixels = {(int(y), int(x)) for y, x in zip(*np.nonzero(labels == object_id))}
    if not pixels:
        return False
    start = next(iter(pixels))
    if connectivity == 4:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    stack = [start]
    reached = {start}
    while stack:
        y, x = stack.pop()
        for dy, dx in steps:
            nxt = (y + dy, x + dx)
            if nxt in pixels and nxt not in reached:
                reached.add(nxt)
                stack.append(nxt)
    return reached == pixels


# --- loss -----------------------------------------------------------------


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    # the pinned similarity definition guards each norm with +1e-8
    nu = float(np.linalg.norm(u)) + 1e-8
    nv = float(np.linalg.norm(v)) + 1e-8
    return float(np.dot(u, v) / (nu * nv))


def brute_intra(emb: np.ndarray, labels: np.ndarray, include_background: bool = False) -> float:
    """Mean over objects of the mean pairwise cosine over ordered pixel pairs."""
    ids = [i for i in np.unique(labels) if i > 0 or (include_background and i == 0)]
    if not ids:
        return 0.0
    per_object = []
    for i in ids:
        vecs = emb[labels == i]
        n = len(vecs)
        if n == 1:
            per_object.append(1.0)
            continue
        total = 0.0
        for p in range(n):
            for q in range(n):
                if p != q:
                    total += cosine(vecs[p], vecs[q])
        per_object.append(total / (n * (n - 1)))
    return float(np.mean(per_object))


def brute_mean(emb: np.ndarray, labels: np.ndarray, object_id: int) -> np.ndarray:
    vecs = emb[labels == object_id]
    total = np.zeros(emb.shape[-1], dtype=np.float64)
    for v in vecs:
        total += v
    return total / len(vecs)


def brute_inter(emb: np.ndarray, labels: np.ndarray, neighbors: dict[int, set[int]]) -> float:
    """Mean over graph nodes of the mean remapped cosine between mean features."""
    ids = sorted(neighbors)
    present = set(np.unique(labels).tolist())
    ids = [i for i in ids if i in present]
    if not ids:
        return 0.0
    mu = {i: brute_mean(emb, labels, i) for i in ids}
    per_object = []
    for i in ids:
        nbrs = [j for j in sorted(neighbors[i]) if j in mu]
        if not nbrs:
            per_object.append(0.0)
            continue
        sims = [(1.0 + cosine(mu[i], mu[j])) / 2.0 for j in nbrs]
        per_object.append(float(np.mean(sims)))
    return float(np.mean(per_object))


def brute_total(emb, labels, neighbors, w_intra=1.0, w_inter=1.0, include_background=False) -> float:
    if labels.max(initial=0) == 0:
        return 0.0
    return w_inter * brute_inter(emb, labels, neighbors) - w_intra * brute_intra(
        emb, labels, include_background
    )


# --- metrics --------------------------------------------------------------


def _instance_sets(labels: np.ndarray) -> dict[int, set[tuple[int, int]]]:
    out: dict[int, set[tuple[int, int]]] = {}
    for y in range(labels.shape[0]):
        for x in range(labels.shape[1]):
            v = int(labels[y, x])
            if v > 0:
                out.setdefault(v, set()).add((y, x))
    return out


def brute_iou(a: set, b: set) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def brute_matching(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> set[tuple[int, int]]:
    """All pairs above the threshold, then the assignment maximizing
    (pair count, summed IoU) by exhaustive search."""
    gts = _instance_sets(gt)
    preds = _instance_sets(pred)
    candidates = [
        (g, p, brute_iou(gts[g], preds[p]))
        for g in gts
        for p in preds
        if brute_iou(gts[g], preds[p]) > threshold
    ]

    best: tuple[int, float, frozenset] = (0, 0.0, frozenset())

    def extend(idx, used_g, used_p, chosen, score):
        nonlocal best
        if (len(chosen), score) > best[:2]:
            best = (len(chosen), score, frozenset(chosen))
        if idx == len(candidates):
            return
        g, p, iou = candidates[idx]
        if g not in used_g and p not in used_p:
            extend(idx + 1, used_g | {g}, used_p | {p}, chosen | {(g, p)}, score + iou)
        extend(idx + 1, used_g, used_p, chosen, score)

    extend(0, set(), set(), set(), 0.0)
    return set(best[2])


def brute_f1(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> float:
    matches = brute_matching(pred, gt, threshold)
    tp = len(matches)
    fn = len(_instance_sets(gt)) - tp
    fp = len(_instance_sets(pred)) - tp
    if tp + fp + fn == 0:
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def brute_pq(pred: np.ndarray, gt: np.ndarray) -> float:
    gts = _instance_sets(gt)
    preds = _instance_sets(pred)
    matches = brute_matching(pred, gt, 0.5)
    tp = len(matches)
    fn = len(gts) - tp
    fp = len(preds) - tp
    denom = tp + 0.5 * fp + 0.5 * fn
    if denom == 0:
        return 1.0
    return sum(brute_iou(gts[g], preds[p]) for g, p in matches) / denom


def brute_aji(pred: np.ndarray, gt: np.ndarray) -> float:
    gts = _instance_sets(gt)
    preds = _instance_sets(pred)
    if not gts and not preds:
        return 1.0
    c = 0
    u = 0
    used = set()
    for g in sorted(gts):
        best_p, best_iou = None, 0.0
        for p in sorted(preds):
            iou = brute_iou(gts[g], preds[p])
            if iou > best_iou:
                best_p, best_iou = p, iou
        if best_p is None:
            u += len(gts[g])
            continue
        c += len(gts[g] & preds[best_p])
        u += len(gts[g] | preds[best_p])
        used.add(best_p)
    for p in sorted(preds):
        if p not in used:
            u += len(preds[p])
    if u == 0:
        return 1.0
    return c / u


def brute_dice2(pred: np.ndarray, gt: np.ndarray) -> float:
    gts = _instance_sets(gt)
    preds = _instance_sets(pred)
    if not gts and not preds:
        return 1.0

    def direction(src: dict, dst: dict) -> float:
        if not src:
            return 0.0
        total = 0.0
        for i in sorted(src):
            best_j, best_inter = None, 0
            for j in sorted(dst):
                inter = len(src[i] & dst[j])
                if inter > best_inter:
                    best_j, best_inter = j, inter
            if best_j is not None:
                total += 2.0 * best_inter / (len(src[i]) + len(dst[best_j]))
        return total / len(src)

    return 0.5 * (direction(gts, preds) + direction(preds, gts))
