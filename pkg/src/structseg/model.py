"""Encoder + decoder pairing used by training, evaluation, and the CLI."""

from __future__ import annotations

from . import tensor as T
from .decoder import Decoder, DecoderConfig, PerPixelBaseline
from .encoder import Encoder, EncoderConfig
from .errors import ConfigError
from .nn import Module
from .tensor import Tensor


class SegModel(Module):
    """Full segmentation model; heads are interchangeable.

    `head_kind` is "tokens" for the structure-token decoder or "baseline"
    for the per-pixel classification counterpart.
    """

    def __init__(self, enc_cfg: EncoderConfig, dec_cfg: DecoderConfig,
                 crop_hw: tuple[int, int], head_kind: str = "tokens"):
        super().__init__()
        if enc_cfg.channels != dec_cfg.channels:
            raise ConfigError(
                f"encoder channels {enc_cfg.channels} != decoder channels {dec_cfg.channels}")
        feat_hw = (crop_hw[0] // enc_cfg.patch, crop_hw[1] // enc_cfg.patch)
        self.head_kind = head_kind
        self.encoder = Encoder(enc_cfg)
        if head_kind == "tokens":
            self.decoder = Decoder(dec_cfg, feature_hw=feat_hw)
        elif head_kind == "baseline":
            self.decoder = PerPixelBaseline(dec_cfg.channels, dec_cfg.num_classes,
                                            seed=dec_cfg.seed)
        else:
            raise ConfigError(f"unknown head kind {head_kind!r}")

    def forward(self, images: Tensor) -> Tensor:
        """Logits at feature resolution: (B,K,h/p,w/p)."""
        return self.decoder(self.encoder(images))

    def segment_logits(self, images: Tensor) -> Tensor:
        """Logits bilinearly upsampled back to the input resolution."""
        h, w = images.shape[-2:]
        return T.bilinear_resize(self.forward(images), h, w)

    def token_stages(self, images: Tensor):
        """Initial tokens, each block's tokens, and the head logits."""
        return self.decoder(self.encoder(images), return_stages=True)
