"""Instance-segmentation evaluation: Dice2, AJI, F1-score, PQ.

All four scores treat label value 0 as background and compare instance
partitions irrespective of id numbering. Identical prediction and ground
truth score 1.0 on every metric; an empty prediction against a non-empty
ground truth scores 0.0 on AJI and PQ.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .imgdata import labels_of


def _overlap_matrix(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """(Mg+1) x (Mp+1) pixel-overlap counts, row 0 / col 0 = background."""
    if pred.shape != gt.shape:
        raise DataError(f"prediction shape {pred.shape} != ground truth shape {gt.shape}")
    mg = int(gt.max(initial=0))
    mp = int(pred.max(initial=0))
    joint = gt.astype(np.int64).ravel() * (mp + 1) + pred.astype(np.int64).ravel()
    counts = np.bincount(joint, minlength=(mg + 1) * (mp + 1))
    return counts.reshape(mg + 1, mp + 1)


def _iou_matrix(overlap: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    gt_area = overlap.sum(axis=1)
    pred_area = overlap.sum(axis=0)
    inter = overlap[1:, 1:].astype(np.float64)
    union = gt_area[1:, None] + pred_area[None, 1:] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / np.maximum(union, 1), 0.0)
    return iou, gt_area[1:], pred_area[1:]


@dataclass(frozen=True)
class Matching:
    """One-to-one instance matching at a fixed IoU threshold."""

    pairs: tuple[tuple[int, int, float], ...]  # (gt id, pred id, IoU)
    unmatched_gt: tuple[int, ...]
    unmatched_pred: tuple[int, ...]
    iou_threshold: float

    @property
    def tp(self) -> int:
        return len(self.pairs)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gt)

    @property
    def fp(self) -> int:
        return len(self.unmatched_pred)


def match_instances(pred, gt, iou_threshold: float = 0.5) -> Matching:
    """Greedy one-to-one matching by descending IoU.

    Only pairs with IoU strictly above the threshold participate; at
    threshold 0.5 the greedy result is the unique maximal matching because
    no instance can overlap two partners above 0.5.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise DataError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    pred = labels_of(pred)
    gt = labels_of(gt)
    iou, _, _ = _iou_matrix(_overlap_matrix(pred, gt))
    mg, mp = iou.shape

    gi, pi = np.nonzero(iou > iou_threshold)
    order = sorted(range(len(gi)), key=lambda t: (-iou[gi[t], pi[t]], gi[t], pi[t]))
    used_g: set[int] = set()
    used_p: set[int] = set()
    pairs = []
    for t in order:
        g, p = int(gi[t]), int(pi[t])
        if g in used_g or p in used_p:
            continue
        used_g.add(g)
        used_p.add(p)
        pairs.append((g + 1, p + 1, float(iou[g, p])))
    pairs.sort()
    return Matching(
        pairs=tuple(pairs),
        unmatched_gt=tuple(g + 1 for g in range(mg) if g not in used_g),
        unmatched_pred=tuple(p + 1 for p in range(mp) if p not in used_p),
        iou_threshold=iou_threshold,
    )


def f1_score(matching: Matching) -> float:
    """2 TP / (2 TP + FP + FN); empty vs empty counts as a perfect match."""
    denom = 2 * matching.tp + matching.fp + matching.fn
    if denom == 0:
        return 1.0
    return 2.0 * matching.tp / denom


def panoptic_quality(pred, gt) -> float:
    """Sum of matched IoUs over (TP + FP/2 + FN/2), matched at IoU > 0.5."""
    matching = match_instances(pred, gt, iou_threshold=0.5)
    denom = matching.tp + 0.5 * matching.fp + 0.5 * matching.fn
    if denom == 0:
        return 1.0
    return sum(iou for _, _, iou in matching.pairs) / denom


def aggregated_jaccard(pred, gt) -> float:
    """Aggregated Jaccard index.

    Each ground-truth instance selects the prediction of maximal IoU
    (predictions may be selected repeatedly but are marked used once);
    intersections and unions accumulate, and the areas of never-used
    predictions are added to the union.
    """
    pred = labels_of(pred)
    gt = labels_of(gt)
    overlap = _overlap_matrix(pred, gt)
    iou, gt_areas, pred_areas = _iou_matrix(overlap)
    mg, mp = iou.shape
    if mg == 0 and mp == 0:
        return 1.0

    c = 0
    u = 0
    used = np.zeros(mp, dtype=bool)
    for g in range(mg):
        if mp == 0 or overlap[g + 1, 1:].max(initial=0) == 0:
            u += int(gt_areas[g])
            continue
        best = int(np.argmax(iou[g]))
        inter = int(overlap[g + 1, best + 1])
        c += inter
        u += int(gt_areas[g] + pred_areas[best] - inter)
        used[best] = True
    u += int(pred_areas[~used].sum())
    if u == 0:
        return 1.0
    return c / u


def dice2(pred, gt) -> float:
    """Object-wise overlap score averaged in both directions.

    Each instance pairs with the opposing instance of maximal pixel
    overlap and contributes its Dice coefficient (0 when nothing
    overlaps); the two directional means are averaged.
    """
    pred = labels_of(pred)
    gt = labels_of(gt)
    overlap = _overlap_matrix(pred, gt)
    inter = overlap[1:, 1:]
    gt_areas = overlap.sum(axis=1)[1:]
    pred_areas = overlap.sum(axis=0)[1:]
    mg, mp = inter.shape
    if mg == 0 and mp == 0:
        return 1.0

    def directional(inter_mat: np.ndarray, own: np.ndarray, other: np.ndarray) -> float:
        if own.size == 0:
            return 0.0
        score = 0.0
        for i in range(inter_mat.shape[0]):
            if other.size == 0 or inter_mat[i].max(initial=0) == 0:
                continue
            j = int(np.argmax(inter_mat[i]))
            score += 2.0 * inter_mat[i, j] / (own[i] + other[j])
        return score / own.size

    return 0.5 * (directional(inter, gt_areas, pred_areas) + directional(inter.T, pred_areas, gt_areas))


@dataclass
class EvalReport:
    """Per-image and mean scores plus aggregate match counts."""

    per_image: list[tuple[float, float, float, float]]  # (dice2, aji, f1, pq)
    means: tuple[float, float, float, float]
    matched: int
    missed: int
    spurious: int
    names: list[str] | None = None


def evaluate_pairs(pairs, iou_threshold: float = 0.5, names: list[str] | None = None) -> EvalReport:
    """Score a list of (pred, gt) label-map pairs."""
    rows = []
    matched = missed = spurious = 0
    for pred, gt in pairs:
        m = match_instances(pred, gt, iou_threshold)
        matched += m.tp
        missed += m.fn
        spurious += m.fp
        rows.append((dice2(pred, gt), aggregated_jaccard(pred, gt), f1_score(m), panoptic_quality(pred, gt)))
    if rows:
        arr = np.asarray(rows, dtype=np.float64)
        means = tuple(float(x) for x in arr.mean(axis=0))
    else:
        means = (0.0, 0.0, 0.0, 0.0)
    return EvalReport(per_image=rows, means=means, matched=matched, missed=missed, spurious=spurious, names=names)


def write_report_csv(report: EvalReport, path: Path | str) -> None:
    """CSV with columns image,dice2,aji,f1,pq and a final mean row."""
    names = report.names or [str(i) for i in range(len(report.per_image))]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["image", "dice2", "aji", "f1", "pq"])
        for name, row in zip(names, report.per_image):
            writer.writerow([name] + [f"{x:.4f}" for x in row])
        writer.writerow(["mean"] + [f"{x:.4f}" for x in report.means])
