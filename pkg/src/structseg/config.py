"""Run configuration: `key = value` text files with documented defaults."""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigError
from .data import SynthConfig
from .train import TrainConfig

DEFAULT_SCALES = [1.0]


@dataclass
class RunConfig:
    """Union of every module's knobs. Defaults target the 32x32 shapes task.

    Keys and defaults:
      variant        = cse        extraction kind: cse | sse | pwe
      channels       = 32         feature channels C (encoder output)
      num_classes    = 4          class count K
      blocks         = 4          decoder block count L
      token_h        = 0          token slice height (0: match feature map)
      token_w        = 0          token slice width  (0: match feature map)
      ffn_ratio      = 4          FFN expansion factor
      ffn_groups     = 0          FFN 3x3 conv groups (0: depthwise)
      token_norm     = false      standardize slices before projections
      patch          = 4          encoder patch size
      enc_stages     = 2          encoder mixing blocks
      total_iters    = 2000       training iterations
      base_lr        = 1e-3       initial learning rate (2e-5 mirrors the
                                  large-scale recipe; too small for this task)
      poly_power     = 0.9        polynomial decay exponent
      batch_size     = 8
      weight_decay   = 0.01
      ignore_label   = 255
      h, w           = 32, 32     image size
      train_count    = 512        synthetic train samples
      val_count      = 64         synthetic val samples
      seed           = 42         master seed (init, data, batches)
      scales         = 1.0        comma-separated inference scales
      flip           = false      add horizontal-flip averaging
      crop           = 32         inference window size
      stride         = 0          window stride (0: ceil(2/3 * crop))
    """

    variant: str = "cse"
    channels: int = 32
    num_classes: int = 4
    blocks: int = 4
    token_h: int = 0
    token_w: int = 0
    ffn_ratio: int = 4
    ffn_groups: int = 0
    token_norm: bool = False
    patch: int = 4
    enc_stages: int = 2
    total_iters: int = 2000
    base_lr: float = 1e-3
    poly_power: float = 0.9
    batch_size: int = 8
    weight_decay: float = 0.01
    ignore_label: int = 255
    h: int = 32
    w: int = 32
    train_count: int = 512
    val_count: int = 64
    seed: int = 42
    scales: list[float] = field(default_factory=lambda: list(DEFAULT_SCALES))
    flip: bool = False
    crop: int = 32
    stride: int = 0

    def decoder_config(self) -> DecoderConfig:
        return DecoderConfig(
            channels=self.channels, num_classes=self.num_classes,
            blocks=self.blocks, variant=self.variant,
            token_h=self.token_h, token_w=self.token_w,
            ffn_ratio=self.ffn_ratio, ffn_groups=self.ffn_groups,
            token_norm=self.token_norm, seed=self.seed).validate()

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(patch=self.patch, channels=self.channels,
                             stages=self.enc_stages, seed=self.seed).validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            total_iters=self.total_iters, base_lr=self.base_lr,
            poly_power=self.poly_power, batch_size=self.batch_size,
            weight_decay=self.weight_decay, ignore_label=self.ignore_label,
            seed=self.seed)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(h=self.h, w=self.w, num_classes=self.num_classes,
                           train_count=self.train_count, val_count=self.val_count,
                           seed=self.seed).validate()

    def validate(self) -> "RunConfig":
        self.decoder_config()
        self.encoder_config()
        self.synth_config()
        if self.h % self.patch or self.w % self.patch:
            raise ConfigError(f"image {self.h}x{self.w} not divisible by patch {self.patch}")
        if not self.scales:
            raise ConfigError("scales must be non-empty")
        if self.crop < self.patch:
            raise ConfigError("crop smaller than one patch")
        return self


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "on": True,
               "false": False, "0": False, "no": False, "off": False}


def _parse_value(raw: str, target_type, key: str, line_no: int):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError
            return _BOOL_WORDS[raw.lower()]
        if target_type is int:
            return int(raw, 0)
        if target_type is float:
            return float(raw)
        if target_type is str:
            return raw.lower()
        if target_type is list:
            return [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"line {line_no}: malformed value {raw!r} for key {key!r}") from None
    raise ConfigError(f"line {line_no}: unsupported key type for {key!r}")


def parse_config(text: str) -> RunConfig:
    """Parse `key = value` lines; `#` starts a comment; unknown keys rejected."""
    cfg = RunConfig()
    known = {f.name: f.type for f in fields(RunConfig)}
    type_map = {"str": str, "int": int, "float": float, "bool": bool,
                "list[float]": list}
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {line_no}: expected `key = value`, got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {line_no}: unknown key {key!r}")
        target = type_map[known[key]]
        setattr(cfg, key, _parse_value(raw, target, key, line_no))
    try:
        cfg.validate()
    except ConfigError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None
    return cfg


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    return parse_config(Path(path).read_text(encoding="utf-8"))
