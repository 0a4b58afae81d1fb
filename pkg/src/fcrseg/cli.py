"""Command-line entry point.

Subcommands: synth (write a synthetic dataset), train, predict, eval,
color-check, report. Options come from a flat key = value config file
overridden by command-line flags; the resolved configuration is written
into the run directory for provenance. FCRSEG_THREADS caps worker threads.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import graph, imgdata, metrics, net, postprocess, trainer
from .activation import ActivationSpec
from .errors import ConfigError, FcrsegError


@dataclass
class RunConfig:
    # network
    base_filters: int = 16
    depth: int = 5
    out_channels: int = 4
    input_h: int = 512
    input_w: int = 512
    # optimization
    batch_size: int = 4
    lr: float = 1e-4
    epochs: int = 600
    lr_decay: float = 0.9
    decay_every: int = 80
    alpha_schedule: str = "0:2,80:2,160:4,240:6,320:8"
    adjacency_radius: int = 3
    include_background: bool = True
    w_intra: float = 1.0
    w_inter: float = 1.0
    intra_warmup_epochs: int = 0
    intra_warmup_scale: float = 0.2
    loss_on_preactivation: bool = False
    min_area: int = 10
    background_policy: str = "border_majority"
    eval_every: int = 10
    seed: int = 0
    device: str = "cpu"
    # data
    data: str = "synth"
    synth_n: int = 250
    synth_density: float = 0.3
    synth_eval_fraction: float = 0.2
    resize: bool = True
    out: str = "runs/run"

    def net_config(self) -> net.NetConfig:
        return net.NetConfig(
            base_filters=self.base_filters,
            depth=self.depth,
            out_channels=self.out_channels,
            input_size=(self.input_h, self.input_w),
        )

    def train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig(
            batch_size=self.batch_size,
            lr=self.lr,
            epochs=self.epochs,
            lr_decay=self.lr_decay,
            decay_every=self.decay_every,
            alpha_schedule=ActivationSpec(schedule=_parse_schedule(self.alpha_schedule)),
            adjacency_radius=self.adjacency_radius,
            include_background=self.include_background,
            w_intra=self.w_intra,
            w_inter=self.w_inter,
            intra_warmup_epochs=self.intra_warmup_epochs,
            intra_warmup_scale=self.intra_warmup_scale,
            loss_on_preactivation=self.loss_on_preactivation,
            min_area=self.min_area,
            background_policy=self.background_policy,
            eval_every=self.eval_every,
            seed=self.seed,
            device=self.device,
        )


def _parse_schedule(text: str) -> tuple[tuple[int, float], ...]:
    try:
        return tuple(
            (int(part.split(":")[0]), float(part.split(":")[1]))
            for part in text.split(",") if part.strip()
        )
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad alpha schedule {text!r}; expected epoch:alpha,...") from exc


def _coerce(value: str, target_type: type):
    if target_type is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    return target_type(value)


def load_run_config(path: str | None, overrides: dict) -> RunConfig:
    """Config file first, command-line overrides second; unknown keys rejected."""
    known = {f.name: f.type for f in fields(RunConfig)}
    types = {f.name: type(getattr(RunConfig(), f.name)) for f in fields(RunConfig)}
    values: dict = {}
    if path is not None:
        text = Path(path).read_text()
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, raw = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _coerce(raw.strip(), types[key])
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = value
    return RunConfig(**values)


def write_run_config(cfg: RunConfig, path: Path) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in fields(RunConfig)]
    path.write_text("\n".join(lines) + "\n")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key = value config file")
    cfg = RunConfig()
    for f in fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        default = getattr(cfg, f.name)
        if type(default) is bool:
            p.add_argument(flag, dest=f.name, default=None, type=str,
                           metavar="BOOL", help=f"default: {default}")
        else:
            p.add_argument(flag, dest=f.name, default=None, type=type(default),
                           help=f"default: {default}")


def _collect_overrides(args: argparse.Namespace) -> dict:
    out = {}
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is None:
            continue
        out[f.name] = _coerce(value, bool) if type(getattr(RunConfig(), f.name)) is bool else value
    return out


def _load_split(cfg: RunConfig) -> imgdata.DatasetSplit:
    if cfg.data == "synth":
        return imgdata.synth_blobs(
            cfg.synth_n,
            size=(cfg.input_h, cfg.input_w),
            density=cfg.synth_density,
            seed=cfg.seed,
            eval_fraction=cfg.synth_eval_fraction,
        )
    split = imgdata.load_bbbc006(cfg.data)
    if cfg.resize:
        size = (cfg.input_h, cfg.input_w)
        split = imgdata.DatasetSplit(
            train=[imgdata.resize_pair(i, l, size) for i, l in split.train],
            eval=[imgdata.resize_pair(i, l, size) for i, l in split.eval],
        )
    return split


def cmd_synth(args) -> int:
    split = imgdata.synth_blobs(
        args.n, size=(args.size, args.size), density=args.density, seed=args.seed,
        eval_fraction=args.eval_fraction,
    )
    manifest = imgdata.write_dataset(split, args.out)
    print(f"wrote {len(split)} samples under {args.out} (manifest: {manifest})")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, _collect_overrides(args))
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_run_config(cfg, out_dir / "config.txt")
    split = _load_split(cfg)
    state, log = trainer.train(split, cfg.net_config(), cfg.train_config(),
                               out_dir=out_dir, quiet=args.quiet)
    last = log[-1] if log else {}
    if "eval_aji" in last:
        print(f"final eval: dice2 {last['eval_dice2']:.4f}  aji {last['eval_aji']:.4f}  "
              f"f1 {last['eval_f1']:.4f}  pq {last['eval_pq']:.4f}")
    print(f"checkpoints and log under {out_dir}")
    return 0


def cmd_predict(args) -> int:
    state = net.load_checkpoint(args.checkpoint)
    size = state.config.input_size
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = sorted(
        p for p in Path(args.images).iterdir() if p.suffix.lower() in imgdata.IMAGE_EXTENSIONS
    )
    if not paths:
        raise FcrsegError(f"no images found under {args.images}")
    for path in paths:
        img = imgdata.read_image(path)
        original = (img.height, img.width)
        work = img
        if original != size:
            work, _ = imgdata.resize_pair(img, imgdata.LabelImage(np.zeros(original, np.int32)), size)
        emb = net.forward(state, imgdata.normalize(work), args.alpha)
        pred = postprocess.extract_instances(
            postprocess.harden(emb), min_area=args.min_area, background_policy=args.background_policy
        )
        labels = pred.labels
        if original != size:
            _, labels = imgdata.resize_pair(
                imgdata.RawImage(np.zeros(size, np.float32)), labels, original
            )
        imgdata.write_label(out_dir / f"{path.stem}.png", labels)
        if args.overlay:
            _write_overlay(out_dir / f"{path.stem}_overlay.png", img, labels)
    print(f"wrote {len(paths)} label maps to {out_dir}")
    return 0


def _write_overlay(path: Path, img: imgdata.RawImage, lbl: imgdata.LabelImage) -> None:
    import imageio.v3 as iio

    p = img.pixels.astype(np.float64)
    lo, hi = p.min(), p.max()
    gray = np.zeros_like(p) if hi == lo else (p - lo) / (hi - lo)
    rgb = np.stack([gray] * 3, axis=2)
    m = lbl.n_objects
    if m:
        hues = (np.arange(1, m + 1) * 0.61803398875) % 1.0
        palette = np.stack([_hsv_channel(hues, shift) for shift in (0.0, 1 / 3, 2 / 3)], axis=1)
        mask = lbl.labels > 0
        rgb[mask] = 0.45 * rgb[mask] + 0.55 * palette[lbl.labels[mask] - 1]
    iio.imwrite(path, np.round(rgb * 255).astype(np.uint8))


def _hsv_channel(h: np.ndarray, shift: float) -> np.ndarray:
    return np.clip(np.abs(((h + shift) % 1.0) * 6.0 - 3.0) - 1.0, 0.0, 1.0)


def cmd_eval(args) -> int:
    pred_dir, gt_dir = Path(args.pred), Path(args.gt)
    preds = {p.stem: p for p in sorted(pred_dir.iterdir()) if p.suffix.lower() in imgdata.IMAGE_EXTENSIONS}
    gts = {p.stem: p for p in sorted(gt_dir.iterdir()) if p.suffix.lower() in imgdata.IMAGE_EXTENSIONS}
    stems = sorted(set(preds) & set(gts))
    if not stems:
        raise FcrsegError(f"no shared label files between {pred_dir} and {gt_dir}")
    pairs = [(imgdata.read_label(preds[s]), imgdata.read_label(gts[s])) for s in stems]
    report = metrics.evaluate_pairs(pairs, iou_threshold=args.iou_threshold, names=stems)
    if args.report:
        metrics.write_report_csv(report, args.report)
    d, a, f1, pq = report.means
    print(f"mean over {len(stems)} images: dice2 {d:.4f}  aji {a:.4f}  f1 {f1:.4f}  pq {pq:.4f}")
    return 0


def cmd_color_check(args) -> int:
    lbl = imgdata.read_label(args.label)
    g = graph.build_adjacency(lbl, radius=args.radius, include_background=not args.no_background)
    coloring = graph.four_colorable(g, k=args.k)
    ok = coloring is not None and graph.is_proper(g, coloring)
    print(f"objects: {g.n_objects}")
    print(f"edges: {g.n_edges}")
    print(f"{args.k}-colorable: {'yes' if ok else 'no'}")
    return 0 if ok else 1


def cmd_report(args) -> int:
    state = net.load_checkpoint(args.checkpoint)
    n_params = net.count_parameters(state)
    rows = Path(args.report).read_text().strip().splitlines()
    mean = next((r for r in rows if r.startswith("mean,")), None)
    if mean is None:
        raise FcrsegError(f"{args.report}: no mean row found")
    _, d, a, f1, pq = mean.split(",")
    name = args.name
    print(f"{'method':<12} {'dice2':>8} {'aji':>8} {'f1':>8} {'pq':>8} {'params':>8}")
    print(f"{name:<12} {d:>8} {a:>8} {f1:>8} {pq:>8} {n_params / 1e6:>7.1f}M")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fcrseg", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic blob dataset")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--eval-fraction", type=float, default=0.2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the embedding network")
    _add_config_flags(p)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="segment a directory of images")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--images", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--alpha", type=float, default=8.0)
    p.add_argument("--min-area", type=int, default=10)
    p.add_argument("--background-policy", default="border_majority",
                   choices=postprocess.BACKGROUND_POLICIES)
    p.add_argument("--overlay", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predicted label maps against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--report", help="write per-image CSV here")
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("color-check", help="adjacency and 4-colorability of a label map")
    p.add_argument("label")
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--no-background", action="store_true")
    p.set_defaults(func=cmd_color_check)

    p = sub.add_parser("report", help="render a metrics table row for a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--report", required=True, help="CSV produced by the eval subcommand")
    p.add_argument("--name", default="fcrseg")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    threads = os.environ.get("FCRSEG_THREADS")
    if threads:
        try:
            import torch

            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            print(f"FCRSEG_THREADS must be an integer, got {threads!r}", file=sys.stderr)
            return 2
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (FcrsegError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
