"""Synthetic shapes dataset: deterministic, verifiable learning at desk scale.

Classes are distinguishable by geometry alone: class 0 is a noisy
background, then filled circle, axis-aligned rectangle, and upright
triangle. Every sample is a pure function of (config, index).

On-disk format (little-endian): magic `STDS`, version u32, then
h, w, num_classes, count as u32, then per sample the image as h*w*3
float32 values (channel-major planes) and the mask as h*w bytes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BadMagicError, BadVersionError, ConfigError, TruncatedFileError
from .rng import Rng, mix

MAGIC = b"STDS"
VERSION = 1

CLASS_NAMES = ["background", "circle", "rectangle", "triangle"]
_BG_BASE = 0.5
_NOISE_AMPLITUDE = 0.05


@dataclass
class SynthConfig:
    h: int = 32
    w: int = 32
    num_classes: int = 4
    train_count: int = 512
    val_count: int = 64
    seed: int = 42

    def validate(self) -> "SynthConfig":
        if self.num_classes < 2:
            raise ConfigError("num_classes must be >= 2")
        if self.h < 8 or self.w < 8:
            raise ConfigError("image size must be at least 8x8")
        return self


@dataclass
class Sample:
    image: np.ndarray  # (3,h,w) float32 in [0,1]
    mask: np.ndarray   # (h,w) uint8 class indices


def draw_circle(mask: np.ndarray, cy: float, cx: float, r: float, cls: int) -> None:
    """Fill lattice points with (y-cy)^2 + (x-cx)^2 <= r^2."""
    h, w = mask.shape
    yy, xx = np.mgrid[0:h, 0:w]
    mask[(yy - cy) ** 2 + (xx - cx) ** 2 <= r * r] = cls


def draw_rectangle(mask: np.ndarray, y0: int, x0: int, y1: int, x1: int, cls: int) -> None:
    mask[y0:y1 + 1, x0:x1 + 1] = cls


def draw_triangle(mask: np.ndarray, apex_y: int, apex_x: int, height: int,
                  half_base: int, cls: int) -> None:
    """Upright isoceles triangle: apex on top, base `height` rows below."""
    h, w = mask.shape
    for dy in range(height + 1):
        y = apex_y + dy
        if not 0 <= y < h:
            continue
        half = round(half_base * dy / max(height, 1))
        x0 = max(apex_x - half, 0)
        x1 = min(apex_x + half, w - 1)
        mask[y, x0:x1 + 1] = cls


def generate_sample(cfg: SynthConfig, index: int) -> Sample:
    """Render 1-3 shapes at random positions/sizes/colors; later shapes win."""
    if index < 0:
        raise ValueError("index must be >= 0")
    cfg.validate()
    rng = Rng(mix(cfg.seed, 0x5A3D5, index))
    h, w = cfg.h, cfg.w
    mask = np.zeros((h, w), dtype=np.uint8)
    image = np.empty((3, h, w), dtype=np.float32)
    for ch in range(3):
        for y in range(h):
            for x in range(w):
                image[ch, y, x] = _BG_BASE + rng.uniform(-_NOISE_AMPLITUDE, _NOISE_AMPLITUDE)

    n_shapes = 1 + rng.randint(3)
    shape_classes = list(range(1, cfg.num_classes))
    for _ in range(n_shapes):
        cls = shape_classes[rng.randint(len(shape_classes))]
        color = np.array([rng.uniform(0.0, 1.0) for _ in range(3)], dtype=np.float32)
        # keep shapes visually separable from the mid-gray background
        while abs(float(color.mean()) - _BG_BASE) < 0.15:
            color = np.array([rng.uniform(0.0, 1.0) for _ in range(3)], dtype=np.float32)
        layer = np.zeros((h, w), dtype=np.uint8)
        if cls == 1:
            r = rng.uniform(0.16, 0.30) * min(h, w)
            cy = rng.uniform(r, h - 1 - r)
            cx = rng.uniform(r, w - 1 - r)
            draw_circle(layer, cy, cx, r, 1)
        elif cls == 2:
            bh = int(rng.uniform(0.28, 0.55) * h)
            bw = int(rng.uniform(0.28, 0.55) * w)
            y0 = rng.randint(h - bh)
            x0 = rng.randint(w - bw)
            draw_rectangle(layer, y0, x0, y0 + bh - 1, x0 + bw - 1, 1)
        else:
            height = int(rng.uniform(0.35, 0.60) * h)
            half_base = int(rng.uniform(0.22, 0.42) * w)
            apex_y = rng.randint(max(h - height, 1))
            apex_x = half_base + rng.randint(max(w - 2 * half_base, 1))
            draw_triangle(layer, apex_y, apex_x, height, half_base, 1)
        covered = layer.astype(bool)
        mask[covered] = cls
        image[:, covered] = color[:, None]
    return Sample(image=image, mask=mask)


def generate_dataset(cfg: SynthConfig, count: int, offset: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Stacked images (N,3,h,w) and masks (N,h,w) for indices [offset, offset+count)."""
    images = np.empty((count, 3, cfg.h, cfg.w), dtype=np.float32)
    masks = np.empty((count, cfg.h, cfg.w), dtype=np.uint8)
    for i in range(count):
        s = generate_sample(cfg, offset + i)
        images[i] = s.image
        masks[i] = s.mask
    return images, masks


def train_val_split(cfg: SynthConfig) -> tuple[tuple[np.ndarray, np.ndarray],
                                               tuple[np.ndarray, np.ndarray]]:
    """Train indices [0, train_count), val indices right after."""
    cfg.validate()
    return (generate_dataset(cfg, cfg.train_count, 0),
            generate_dataset(cfg, cfg.val_count, cfg.train_count))


# ---------------------------------------------------------------------------
# on-disk format


def save_dataset(path: str | Path, images: np.ndarray, masks: np.ndarray,
                 num_classes: int) -> None:
    n, _, h, w = images.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<5I", VERSION, h, w, num_classes, n))
        for i in range(n):
            fh.write(images[i].astype("<f4").tobytes())
            fh.write(masks[i].astype(np.uint8).tobytes())


def load_dataset(path: str | Path) -> tuple[np.ndarray, np.ndarray, int]:
    """Returns (images, masks, num_classes); errors name the corruption kind."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: expected magic {MAGIC!r}")
    if len(raw) < 24:
        raise TruncatedFileError(f"{path}: header truncated")
    version, h, w, k, n = struct.unpack_from("<5I", raw, 4)
    if version != VERSION:
        raise BadVersionError(f"{path}: version {version}, expected {VERSION}")
    sample_bytes = h * w * 3 * 4 + h * w
    expected = 24 + n * sample_bytes
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: {len(raw)} bytes, expected {expected}")
    images = np.empty((n, 3, h, w), dtype=np.float32)
    masks = np.empty((n, h, w), dtype=np.uint8)
    off = 24
    for i in range(n):
        images[i] = np.frombuffer(raw, "<f4", h * w * 3, off).reshape(3, h, w)
        off += h * w * 3 * 4
        masks[i] = np.frombuffer(raw, np.uint8, h * w, off).reshape(h, w)
        off += h * w
    return images, masks, k
