"""Encoder-decoder pixel-embedding network.

Each level is a Conv3x3-Conv3x3-ReLU block; channels start at
``base_filters`` and double per level. Downsampling is 2x2 max pooling,
upsampling is bilinear (parameter-free), and skip features are concatenated
before each decoder block, whose two convolutions step the concatenation
back down (3C -> 2C -> C). A 1x1 convolution produces K channels, and the
output layer is the strictly-positive power normalization, so every pixel
lands on the K-simplex.

The default configuration (16 base filters, 5 levels, K = 4) has about
2.7M trainable parameters.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .activation import EmbeddingMap, param_argmax, positivity
from .errors import ConfigError, DataError, ShapeError
from .imgdata import RawImage

CHECKPOINT_MAGIC = "FCRSEG1"


@dataclass(frozen=True)
class NetConfig:
    base_filters: int = 16
    depth: int = 5
    out_channels: int = 4
    input_size: tuple[int, int] = (512, 512)

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(x) for x in self.input_size))
        if self.base_filters < 1:
            raise ConfigError(f"base_filters must be >= 1, got {self.base_filters}")
        if self.depth < 2:
            raise ConfigError(f"depth must be >= 2, got {self.depth}")
        if self.out_channels < 2:
            raise ConfigError(f"out_channels must be >= 2, got {self.out_channels}")
        h, w = self.input_size
        factor = 2 ** (self.depth - 1)
        if h % factor or w % factor:
            raise ConfigError(
                f"input size {self.input_size} must be divisible by 2^(depth-1) = {factor}"
            )


def _block(c_in: int, c_mid: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_mid, kernel_size=3, padding=1),
        nn.Conv2d(c_mid, c_out, kernel_size=3, padding=1),
        nn.ReLU(inplace=True),
    )


class FourColorUNet(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        widths = [cfg.base_filters * 2 ** level for level in range(cfg.depth)]
        self.encoder = nn.ModuleList()
        c_in = 1
        for c in widths:
            self.encoder.append(_block(c_in, c, c))
            c_in = c
        self.pool = nn.MaxPool2d(2)
        self.decoder = nn.ModuleList()
        for level in range(cfg.depth - 2, -1, -1):
            c = widths[level]
            self.decoder.append(_block(3 * c, 2 * c, c))
        self.head = nn.Conv2d(widths[0], cfg.out_channels, kernel_size=1)

    def forward(self, x: torch.Tensor, alpha: float) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (activated, raw): both (B, K, H, W); activated pixels sum to 1."""
        skips = []
        for i, block in enumerate(self.encoder):
            x = block(x)
            if i < len(self.encoder) - 1:
                skips.append(x)
                x = self.pool(x)
        for block in self.decoder:
            up = nn.functional.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)
            x = block(torch.cat([up, skips.pop()], dim=1))
        raw = self.head(x)
        # activation normalizes the channel axis, which sits last there
        activated = param_argmax(positivity(raw).movedim(1, -1), alpha).movedim(-1, 1)
        return activated, raw


@dataclass
class ModelState:
    module: FourColorUNet
    config: NetConfig
    epoch: int = 0

    def parameter_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.detach().numpy().copy() for name, p in self.module.named_parameters()}


def build(cfg: NetConfig, seed: int = 0) -> ModelState:
    """Construct the network with deterministic fan-in-scaled uniform
    weights (bound sqrt(6 / fan_in)) and zero biases."""
    module = FourColorUNet(cfg)
    rng = np.random.default_rng(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                fan_in = int(np.prod(p.shape[1:]))
                bound = float(np.sqrt(6.0 / fan_in))
                p.copy_(torch.from_numpy(rng.uniform(-bound, bound, p.shape).astype(np.float32)))
    module.eval()
    return ModelState(module=module, config=cfg, epoch=0)


def count_parameters(state: ModelState) -> int:
    return sum(p.numel() for p in state.module.parameters() if p.requires_grad)


def forward(state: ModelState, img, alpha: float) -> EmbeddingMap:
    """Run one image through the network; returns the activated H x W x K map."""
    pixels = img.pixels if isinstance(img, RawImage) else np.asarray(img)
    if pixels.shape != state.config.input_size:
        raise ShapeError(
            f"image shape {pixels.shape} does not match configured input size "
            f"{state.config.input_size}"
        )
    x = torch.from_numpy(pixels.astype(np.float32))[None, None]
    with torch.no_grad():
        activated, _ = state.module(x, alpha)
    return EmbeddingMap(activated[0].permute(1, 2, 0).numpy())


def save_checkpoint(state: ModelState, path) -> None:
    """Single-file archive: magic string, config, epoch, named parameters."""
    payload = {
        "magic": np.array(CHECKPOINT_MAGIC),
        "config": np.array(json.dumps(asdict(state.config))),
        "epoch": np.array(state.epoch, dtype=np.int64),
    }
    for name, arr in state.parameter_arrays().items():
        payload[f"param:{name}"] = arr
    with open(path, "wb") as f:
        np.savez(f, **payload)


def load_checkpoint(path) -> ModelState:
    try:
        with np.load(path, allow_pickle=False) as data:
            if "magic" not in data or str(data["magic"]) != CHECKPOINT_MAGIC:
                raise DataError(f"{path}: not a {CHECKPOINT_MAGIC} checkpoint")
            raw = json.loads(str(data["config"]))
            raw["input_size"] = tuple(raw["input_size"])
            cfg = NetConfig(**raw)
            epoch = int(data["epoch"])
            params = {k[len("param:"):]: data[k] for k in data.files if k.startswith("param:")}
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"{path}: unreadable checkpoint ({exc})") from exc
    state = build(cfg, seed=0)
    state.epoch = epoch
    with torch.no_grad():
        for name, p in state.module.named_parameters():
            if name not in params:
                raise DataError(f"{path}: checkpoint missing parameter {name}")
            arr = params[name]
            if tuple(arr.shape) != tuple(p.shape):
                raise DataError(f"{path}: parameter {name} has shape {arr.shape}, expected {tuple(p.shape)}")
            p.copy_(torch.from_numpy(arr))
    return state
