"""Tiny deterministic encoder: patch embedding plus residual mixing stages.

Stands in for a heavyweight single-scale backbone at desk scale. The
output spatial size is exactly (h/p, w/p) for every valid input, which
the sliding-window and multi-scale paths rely on.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .errors import ConfigError, ShapeError
from .nn import Conv2d, ConvBlock, Module, ModuleList
from .rng import Rng, mix
from .tensor import Tensor


@dataclass
class EncoderConfig:
    in_channels: int = 3
    patch: int = 4
    channels: int = 32
    stages: int = 2
    seed: int = 0

    def validate(self) -> "EncoderConfig":
        if self.patch < 1 or self.channels < 1 or self.stages < 0:
            raise ConfigError("patch/channels must be >= 1 and stages >= 0")
        return self


class Encoder(Module):
    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        rng = Rng(mix(cfg.seed, 0xE2C0DE))
        self.patch_embed = Conv2d(cfg.in_channels, cfg.channels, cfg.patch, rng,
                                  padding=0, stride=cfg.patch)
        self.stages = ModuleList(ConvBlock(cfg.channels, rng) for _ in range(cfg.stages))

    def embed(self, image: Tensor) -> Tensor:
        """Patch embedding alone: (B,3,h,w) -> (B,C,h/p,w/p)."""
        p = self.cfg.patch
        h, w = image.shape[-2:]
        if h % p or w % p:
            raise ConfigError(f"image size {h}x{w} not divisible by patch {p}")
        return self.patch_embed(image)

    def forward(self, image: Tensor) -> Tensor:
        squeeze = image.ndim == 3
        if squeeze:
            image = T.reshape(image, (1,) + image.shape)
        if image.ndim != 4 or image.shape[1] != self.cfg.in_channels:
            raise ShapeError(f"encoder expects (B,{self.cfg.in_channels},h,w), got {image.shape}")
        x = self.embed(image)
        for stage in self.stages:
            x = stage(x)
        if squeeze:
            x = T.reshape(x, x.shape[1:])
        return x
