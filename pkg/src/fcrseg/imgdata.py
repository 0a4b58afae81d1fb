"""Image and label-map handling: loading, normalization, resizing, synthesis.

Label maps use 0 for background and a contiguous id range 1..M for
instances; every instance is expected to be 4-connected. Loading and
resizing funnel through :func:`canonical_labels`, which splits any
disconnected id into one instance per part and renumbers, so the invariant
holds everywhere downstream.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import imageio.v3 as iio
import numpy as np

from .components import label_components
from .errors import DataError

IMAGE_EXTENSIONS = (".png", ".tif", ".tiff")

# train fraction used when a directory does not hold the full 768-sample set
_EVAL_FRACTION = 164 / 768


@dataclass(frozen=True)
class RawImage:
    """A single-channel intensity image."""

    pixels: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pixels)
        if p.ndim != 2:
            raise DataError(f"image must be 2-D, got shape {p.shape}")
        if not np.issubdtype(p.dtype, np.floating):
            p = p.astype(np.float32)
        object.__setattr__(self, "pixels", p)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class LabelImage:
    """Per-pixel instance ids: 0 = background, 1..M = instances."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise DataError(f"label map must be 2-D, got shape {lab.shape}")
        if not np.issubdtype(lab.dtype, np.integer):
            raise DataError(f"label map must be integer, got dtype {lab.dtype}")
        lab = lab.astype(np.int32, copy=False)
        ids = np.unique(lab)
        if ids.size and ids[0] < 0:
            raise DataError("label map contains negative ids")
        nonzero = ids[ids > 0]
        if nonzero.size and not np.array_equal(nonzero, np.arange(1, nonzero.size + 1)):
            raise DataError("instance ids must form a contiguous range 1..M")
        object.__setattr__(self, "labels", lab)

    @property
    def n_objects(self) -> int:
        return int(self.labels.max(initial=0))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


Sample = tuple[RawImage, LabelImage]


@dataclass
class DatasetSplit:
    train: list[Sample] = field(default_factory=list)
    eval: list[Sample] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train) + len(self.eval)


def labels_of(lbl) -> np.ndarray:
    """Unwrap a LabelImage; pass integer arrays through."""
    return lbl.labels if isinstance(lbl, LabelImage) else np.asarray(lbl)


def canonical_labels(labels: np.ndarray) -> LabelImage:
    """Split disconnected ids and renumber instances contiguously.

    Foreground components are ordered by (original id, scanline position of
    the first pixel), so a map that already satisfies the invariants comes
    back bitwise unchanged.
    """
    labels = np.asarray(labels)
    comp, n = label_components(labels, connectivity=4)
    flat_comp = comp.ravel()
    first = np.zeros(n + 1, dtype=np.int64)
    # components are numbered in scanline order, so reversed assignment
    # leaves the first occurrence in place
    first[flat_comp[::-1]] = np.arange(flat_comp.size - 1, -1, -1)
    value = labels.ravel()[first]
    fg = np.flatnonzero(value[1:] > 0) + 1
    order = fg[np.lexsort((first[fg], value[fg]))]
    mapping = np.zeros(n + 1, dtype=np.int32)
    mapping[order] = np.arange(1, order.size + 1, dtype=np.int32)
    out = mapping[comp]
    if out.dtype == labels.dtype and np.array_equal(out, labels):
        return LabelImage(labels)
    return LabelImage(out)


def normalize(img: RawImage) -> RawImage:
    """Per-image z-score; constant images map to all zeros."""
    p = img.pixels.astype(np.float64)
    std = p.std()
    if std == 0.0:
        return RawImage(np.zeros_like(p, dtype=np.float32))
    return RawImage(((p - p.mean()) / std).astype(np.float32))


def _resize_nearest(a: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = a.shape
    h2, w2 = size
    ys = np.minimum(((np.arange(h2) + 0.5) * (h / h2)).astype(np.int64), h - 1)
    xs = np.minimum(((np.arange(w2) + 0.5) * (w / w2)).astype(np.int64), w - 1)
    return a[ys][:, xs]


def _resize_bilinear(a: np.ndarray, size: tuple[int, int]) -> np.ndarray:
    h, w = a.shape
    h2, w2 = size
    ys = np.clip((np.arange(h2) + 0.5) * (h / h2) - 0.5, 0.0, h - 1.0)
    xs = np.clip((np.arange(w2) + 0.5) * (w / w2) - 0.5, 0.0, w - 1.0)
    y0 = ys.astype(np.int64)
    x0 = xs.astype(np.int64)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = a.astype(np.float64)
    top = a[y0][:, x0] * (1 - fx) + a[y0][:, x1] * fx
    bot = a[y1][:, x0] * (1 - fx) + a[y1][:, x1] * fx
    return (top * (1 - fy) + bot * fy).astype(np.float32)


def resize_pair(img: RawImage, lbl: LabelImage, size: tuple[int, int]) -> Sample:
    """Resize an image (bilinear) and its label map (nearest neighbor).

    Nearest-neighbor keeps ids integral; if downscaling disconnects an id,
    the parts are split into separate instances and ids renumbered.
    """
    h2, w2 = size
    if h2 < 8 or w2 < 8:
        raise DataError(f"target size must be at least 8 x 8, got {size}")
    out_img = RawImage(_resize_bilinear(img.pixels, size))
    out_lbl = canonical_labels(_resize_nearest(lbl.labels, size))
    return out_img, out_lbl


def _fill_background_pockets(labels: np.ndarray) -> None:
    """Absorb enclosed background components into an adjacent region.

    A background pocket would make pseudo-object 0 span disconnected areas,
    which breaks the planarity argument behind the four-color guarantee.
    The largest background component survives; pockets grow shut by
    repeatedly copying values from 4-neighbors.
    """
    bg = labels == 0
    if not bg.any():
        return
    comp, _ = label_components(bg.astype(np.int8), connectivity=4)
    comp = np.where(bg, comp, 0)
    areas = np.bincount(comp.ravel())
    areas[0] = 0
    main = int(np.argmax(areas))
    h, w = labels.shape
    for pocket_id in np.unique(comp[bg]):
        if pocket_id == main:
            continue
        # whole pocket goes to the most frequent bordering region so the
        # fill introduces no new internal boundaries
        mask = comp == pocket_id
        ring: list[int] = []
        ys, xs = np.nonzero(mask)
        for y, x in zip(ys.tolist(), xs.tolist()):
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < h and 0 <= nx < w and labels[ny, nx] > 0:
                    ring.append(int(labels[ny, nx]))
        if ring:
            counts = np.bincount(ring)
            labels[mask] = int(np.argmax(counts))


def _absorb_small_fragments(labels: np.ndarray, min_fragment: int) -> None:
    """Merge foreground regions below ``min_fragment`` pixels into the
    neighboring region (or background) they share the most border with.

    Carving can shave slivers off earlier blobs; as instances they are
    mostly unlearnable and unmatchable, so the generator folds them into a
    neighbor instead of emitting them as ground truth."""
    if min_fragment <= 1:
        return
    h, w = labels.shape
    while True:
        areas = np.bincount(labels.ravel())
        small = [i for i in np.flatnonzero(areas < min_fragment) if i > 0 and areas[i] > 0]
        if not small:
            return
        for i in small:
            mask = labels == i
            ring: list[int] = []
            ys, xs = np.nonzero(mask)
            for y, x in zip(ys.tolist(), xs.tolist()):
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and labels[ny, nx] != i:
                        ring.append(int(labels[ny, nx]))
            labels[mask] = int(np.argmax(np.bincount(ring))) if ring else 0


def _resolve_diagonal_crossings(labels: np.ndarray) -> bool:
    """Remove 2x2 windows whose two diagonal contacts would cross.

    Radius-1 Chebyshev adjacency counts diagonal contact; when both
    diagonals of a window join disjoint region pairs the two edges cross
    and the adjacency graph can lose planarity. Copying one value down
    turns the crossing into an ordinary side contact."""
    changed = False
    for _ in range(64):
        a = labels[:-1, :-1]
        b = labels[:-1, 1:]
        c = labels[1:, :-1]
        d = labels[1:, 1:]
        bad = (a != d) & (b != c) & (a != b) & (a != c) & (d != b) & (d != c)
        ys, xs = np.nonzero(bad)
        if ys.size == 0:
            return changed
        changed = True
        for y, x in zip(ys.tolist(), xs.tolist()):
            labels[y + 1, x] = labels[y, x]
    return changed


def synth_blobs(
    n_images: int,
    size: tuple[int, int] = (128, 128),
    density: float = 0.3,
    seed: int = 0,
    *,
    eval_fraction: float = _EVAL_FRACTION,
    radius_range: tuple[float, float] = (5.0, 12.0),
    amplitude_range: tuple[float, float] = (0.55, 1.0),
    background_level: float = 0.1,
    noise_sigma: float = 0.03,
    shading_falloff: float = 1.75,
    min_fragment: int = 10,
) -> DatasetSplit:
    """Generate Gaussian-shaded elliptical blobs with instance labels.

    Blobs are painted in order, so later blobs carve earlier ones: regions
    may touch but never overlap. A blob carved into disconnected parts
    becomes one instance per part; a blob carved to zero area is dropped.
    Deterministic for a fixed seed.

    The label maps additionally keep the radius-1 adjacency graph planar
    (and therefore provably 4-colorable): enclosed background pockets and
    foreground parts below ``min_fragment`` pixels are folded into their
    majority neighbor, and diagonal contact crossings are resolved.
    """
    if n_images < 1:
        raise DataError(f"n_images must be >= 1, got {n_images}")
    if not 0.0 < density <= 1.0:
        raise DataError(f"density must lie in (0, 1], got {density}")
    h, w = size
    rng = np.random.default_rng(seed)
    mean_r = 0.5 * (radius_range[0] + radius_range[1])
    n_blobs = int(round(density * h * w / (np.pi * mean_r * mean_r)))

    samples: list[Sample] = []
    for _ in range(n_images):
        labels = np.zeros((h, w), dtype=np.int32)
        shading = np.full((h, w), background_level, dtype=np.float64)
        for b in range(1, n_blobs + 1):
            cy = rng.uniform(0, h)
            cx = rng.uniform(0, w)
            ra = rng.uniform(*radius_range)
            rb = rng.uniform(*radius_range)
            theta = rng.uniform(0, np.pi)
            amp = rng.uniform(*amplitude_range)

            r = max(ra, rb)
            y0, y1 = int(max(0, np.floor(cy - r - 1))), int(min(h, np.ceil(cy + r + 2)))
            x0, x1 = int(max(0, np.floor(cx - r - 1))), int(min(w, np.ceil(cx + r + 2)))
            if y0 >= y1 or x0 >= x1:
                continue
            yy, xx = np.mgrid[y0:y1, x0:x1]
            dy = yy - cy
            dx = xx - cx
            u = dx * np.cos(theta) + dy * np.sin(theta)
            v = -dx * np.sin(theta) + dy * np.cos(theta)
            q = (u / ra) ** 2 + (v / rb) ** 2
            mask = q <= 1.0
            labels[y0:y1, x0:x1][mask] = b
            shading[y0:y1, x0:x1][mask] = amp * np.exp(-shading_falloff * q[mask]) + background_level

        # iterate cleanup on canonical ids: splitting a diagonally
        # self-touching region introduces new ids, which can surface new
        # crossings, and crossing flips can disconnect regions or pockets
        labels = canonical_labels(labels).labels.copy()
        for _ in range(8):
            before = labels.copy()
            _fill_background_pockets(labels)
            _absorb_small_fragments(labels, min_fragment)
            _resolve_diagonal_crossings(labels)
            labels = canonical_labels(labels).labels.copy()
            if np.array_equal(labels, before):
                break
        lbl = LabelImage(labels)
        pixels = (shading + rng.normal(0.0, noise_sigma, (h, w))).astype(np.float32)
        samples.append((RawImage(pixels), lbl))

    n_eval = int(round(n_images * eval_fraction))
    n_train = n_images - n_eval
    return DatasetSplit(train=samples[:n_train], eval=samples[n_train:])


# --- dataset directories -------------------------------------------------


def _hash_split(stems: list[str]) -> tuple[list[str], list[str]]:
    """Deterministic train/eval split: the samples with the largest
    sha1(stem) digests become the eval set."""
    n_eval = int(round(len(stems) * _EVAL_FRACTION))
    digests = {s: hashlib.sha1(s.encode("utf-8")).hexdigest() for s in stems}
    eval_set = set(sorted(stems, key=lambda s: (digests[s], s), reverse=True)[:n_eval])
    ordered = sorted(stems)
    return [s for s in ordered if s not in eval_set], [s for s in ordered if s in eval_set]


def read_image(path: Path | str) -> RawImage:
    arr = iio.imread(path)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a single-channel image, got shape {arr.shape}")
    return RawImage(arr.astype(np.float32))


def read_label(path: Path | str) -> LabelImage:
    arr = iio.imread(path)
    if arr.ndim != 2:
        raise DataError(f"{path}: expected a single-channel label map, got shape {arr.shape}")
    if not np.issubdtype(arr.dtype, np.integer):
        raise DataError(f"{path}: label map must be integer, got dtype {arr.dtype}")
    return canonical_labels(arr.astype(np.int32))


def write_image(path: Path | str, img: RawImage) -> None:
    """Write as 16-bit grayscale PNG, min-max scaled into the full range."""
    p = img.pixels.astype(np.float64)
    lo, hi = p.min(), p.max()
    scaled = np.zeros_like(p) if hi == lo else (p - lo) / (hi - lo)
    iio.imwrite(path, np.round(scaled * 65535).astype(np.uint16))


def write_label(path: Path | str, lbl: LabelImage) -> None:
    if lbl.n_objects > 65535:
        raise DataError(f"{path}: more than 65535 instances cannot be stored as 16-bit PNG")
    iio.imwrite(path, lbl.labels.astype(np.uint16))


def write_dataset(split: DatasetSplit, out_dir: Path | str, stem: str = "synth") -> Path:
    """Write images/, labels/ and a manifest.txt listing the pairs."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (img, lbl) in enumerate(split.train + split.eval):
        name = f"{stem}_{i:04d}.png"
        write_image(out / "images" / name, img)
        write_label(out / "labels" / name, lbl)
        lines.append(f"images/{name}\tlabels/{name}")
    manifest = out / "manifest.txt"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def _find_pairs(root: Path, focal_plane: int) -> list[tuple[str, Path, Path]]:
    manifest = root / "manifest.txt"
    if manifest.is_file():
        pairs = []
        for line in manifest.read_text().splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) < 2:
                raise DataError(f"{manifest}: malformed line {line!r}")
            img_path, lbl_path = root / parts[0], root / parts[1]
            pairs.append((Path(parts[0]).stem, img_path, lbl_path))
        return pairs

    subdirs = sorted(d for d in root.iterdir() if d.is_dir())
    plane_tokens = (f"z_{focal_plane:02d}", f"z{focal_plane:02d}", f"z_{focal_plane}", f"z{focal_plane}")
    image_dir = None
    for d in subdirs:
        name = d.name.lower()
        if "images" in name and any(t in name for t in plane_tokens):
            image_dir = d
            break
    if image_dir is None:
        for d in subdirs:
            if "images" in d.name.lower():
                image_dir = d
                break
    if image_dir is None:
        image_dir = root
    label_dir = None
    for d in subdirs:
        name = d.name.lower()
        if "labels" in name or "ground_truth" in name:
            label_dir = d
            break
    if label_dir is None:
        raise DataError(f"{root}: no labels directory found")

    def listing(d: Path) -> dict[str, Path]:
        return {p.stem: p for p in sorted(d.iterdir()) if p.suffix.lower() in IMAGE_EXTENSIONS}

    images = listing(image_dir)
    labels = listing(label_dir)
    pairs = []
    for stem, img_path in images.items():
        lbl_path = labels.get(stem)
        if lbl_path is None:
            # fall back to prefix containment, e.g. plane-suffixed image names
            candidates = [s for s in labels if stem.startswith(s) or s.startswith(stem)]
            if len(candidates) == 1:
                lbl_path = labels[candidates[0]]
            else:
                raise DataError(f"{img_path.name}: no unique matching label file")
        pairs.append((stem, img_path, lbl_path))
    return pairs


def load_bbbc006(root_dir: Path | str, focal_plane: int = 16) -> DatasetSplit:
    """Load an image/label directory and split it deterministically.

    Accepts either a manifest.txt listing image/label pairs or an
    images/labels directory layout (plane-suffixed image directories are
    preferred when present). With the full 768-sample set this yields the
    604/164 split; smaller sets split 78.6%/21.4% by sorted-filename hash.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {root}")
    pairs = _find_pairs(root, focal_plane)
    if not pairs:
        raise DataError(f"{root}: no image/label pairs found")

    by_stem = {stem: (img_path, lbl_path) for stem, img_path, lbl_path in pairs}
    train_stems, eval_stems = _hash_split(sorted(by_stem))

    def load(stems: list[str]) -> list[Sample]:
        out = []
        for stem in stems:
            img_path, lbl_path = by_stem[stem]
            img = read_image(img_path)
            lbl = read_label(lbl_path)
            if img.pixels.shape != lbl.labels.shape:
                raise DataError(
                    f"{img_path.name}: image shape {img.pixels.shape} does not match "
                    f"label shape {lbl.labels.shape}"
                )
            out.append((img, lbl))
        return out

    return DatasetSplit(train=load(train_stems), eval=load(eval_stems))
