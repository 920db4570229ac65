"""Structure-token decoder.

A stack of per-class 2-D token slices is refined over L blocks. Each
block runs one extraction module (three interchangeable kinds: channel
cross-attention, channel self-attention over the concatenated slices, or
a learned point-wise mixing), then a locality-enhanced FFN per stream.
The refined token stack, passed through a residual conv head, is the
segmentation logit map: channel k scores class k.

All attention here is channel-wise: a "token" is one channel slice viewed
as an H*W vector, so the attention matrix mixes slices, not pixels. The
q/k/v projections are local-connected (1x1 mix, 3x3 depthwise, 1x1 mix)
instead of fully connected so any input size works; the aggregated slices
pass through one more projection of the same form before the streams
continue.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .nn import Conv2d, ConvBlock, Module, ModuleList, init_weight
from .rng import Rng, mix
from .tensor import Tensor

VARIANTS = ("cse", "sse", "pwe")


@dataclass
class DecoderConfig:
    channels: int = 32          # C: feature-map channels
    num_classes: int = 4        # K: one token slice per class
    blocks: int = 4             # L
    variant: str = "cse"
    token_h: int = 0            # Hs; 0 means "match the feature map"
    token_w: int = 0            # Ws
    ffn_ratio: int = 4
    ffn_groups: int = 0         # 0 = depthwise, otherwise a fixed group count
    token_norm: bool = False    # standardize slices before projections
    seed: int = 0

    def validate(self) -> "DecoderConfig":
        if min(self.channels, self.num_classes) < 1 or self.blocks < 0:
            raise ConfigError("channels/num_classes must be >= 1 and blocks >= 0")
        if self.token_h < 0 or self.token_w < 0:
            raise ConfigError("token_h/token_w must be >= 0")
        if self.ffn_ratio < 1:
            raise ConfigError("ffn_ratio must be >= 1")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        return self


def _check_aligned(s: Tensor, f: Tensor) -> None:
    if s.shape[-2:] != f.shape[-2:] or s.shape[0] != f.shape[0]:
        raise ShapeError(f"token/feature shapes misaligned: {s.shape} vs {f.shape}")


def _flatten_slices(x: Tensor) -> Tensor:
    b, n, h, w = x.shape
    return T.reshape(x, (b, n, h * w))


def _unflatten_slices(x: Tensor, h: int, w: int) -> Tensor:
    b, n, _ = x.shape
    return T.reshape(x, (b, n, h, w))


class SliceProjection(Module):
    """Local-connected token re-mapping: 1x1 mix, 3x3 depthwise, 1x1 mix."""

    def __init__(self, slices: int, rng: Rng):
        super().__init__()
        self.slices = slices
        self.mix_in = Conv2d(slices, slices, 1, rng)
        self.local = Conv2d(slices, slices, 3, rng, groups=slices)
        self.mix_out = Conv2d(slices, slices, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.slices:
            raise ShapeError(f"projection expects {self.slices} slices, got {x.shape[1]}")
        return self.mix_out(self.local(self.mix_in(x)))


class FeedForward(Module):
    """1x1 expand, 3x3 group conv, 1x1 shrink, with a residual skip."""

    def __init__(self, channels: int, rng: Rng, ratio: int = 4, groups: int = 0):
        super().__init__()
        hidden = channels * ratio
        g = hidden if groups == 0 else groups
        if hidden % g:
            raise ConfigError(f"ffn groups {g} must divide hidden channels {hidden}")
        self.expand = Conv2d(channels, hidden, 1, rng)
        self.local = Conv2d(hidden, hidden, 3, rng, groups=g)
        self.shrink = Conv2d(hidden, channels, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        y = self.shrink(T.gelu(self.local(T.gelu(self.expand(x)))))
        return T.add(x, y)


def _attend(q: Tensor, k: Tensor, v: Tensor, scale_dim: int) -> tuple[Tensor, Tensor]:
    """Channel-slice attention; rows of the returned matrix sum to 1."""
    logits = T.scale(T.matmul(q, T.transpose_last2(k)), 1.0 / math.sqrt(scale_dim))
    attn = T.softmax(logits, axis=-1)
    return T.matmul(attn, v), attn


class CrossSliceExtraction(Module):
    """Tokens query the feature slices; only the token stream is updated."""

    def __init__(self, cfg: DecoderConfig, rng: Rng):
        super().__init__()
        self.cfg = cfg
        k, c = cfg.num_classes, cfg.channels
        self.proj_q = SliceProjection(k, rng)
        self.proj_k = SliceProjection(c, rng)
        self.proj_v = SliceProjection(c, rng)
        self.proj_out = SliceProjection(k, rng)

    def forward(self, s: Tensor, f: Tensor) -> tuple[Tensor, Tensor]:
        _check_aligned(s, f)
        h, w = f.shape[-2:]
        s_in, f_in = (_norm_slices(s), _norm_slices(f)) if self.cfg.token_norm else (s, f)
        q = _flatten_slices(self.proj_q(s_in))
        k = _flatten_slices(self.proj_k(f_in))
        v = _flatten_slices(self.proj_v(f_in))
        agg, self._last_attention = _attend(q, k, v, self.cfg.channels)
        s_new = self.proj_out(_unflatten_slices(agg, h, w))
        return s_new, f


class SelfSliceExtraction(Module):
    """Self-attention over the concatenated slices; both streams update."""

    def __init__(self, cfg: DecoderConfig, rng: Rng):
        super().__init__()
        self.cfg = cfg
        m = cfg.num_classes + cfg.channels
        self.proj_q = SliceProjection(m, rng)
        self.proj_k = SliceProjection(m, rng)
        self.proj_v = SliceProjection(m, rng)
        self.proj_out = SliceProjection(m, rng)

    def forward(self, s: Tensor, f: Tensor) -> tuple[Tensor, Tensor]:
        _check_aligned(s, f)
        h, w = f.shape[-2:]
        if self.cfg.token_norm:
            s, f = _norm_slices(s), _norm_slices(f)
        g = T.concat_channels([s, f])
        q = _flatten_slices(self.proj_q(g))
        k = _flatten_slices(self.proj_k(g))
        v = _flatten_slices(self.proj_v(g))
        agg, self._last_attention = _attend(q, k, v, self.cfg.channels)
        out = self.proj_out(_unflatten_slices(agg, h, w))
        s_new, f_new = T.split_channels(out, [self.cfg.num_classes, self.cfg.channels])
        return s_new, f_new


class PointwiseExtraction(Module):
    """Content-agnostic mixing: learned dense slice-mixing in place of attention."""

    def __init__(self, cfg: DecoderConfig, rng: Rng):
        super().__init__()
        self.cfg = cfg
        m = cfg.num_classes + cfg.channels
        self.proj_in = SliceProjection(m, rng)
        self.mix = Conv2d(m, m, 1, rng)  # the aggregation weights
        self.proj_out = SliceProjection(m, rng)

    def forward(self, s: Tensor, f: Tensor) -> tuple[Tensor, Tensor]:
        _check_aligned(s, f)
        if self.cfg.token_norm:
            s, f = _norm_slices(s), _norm_slices(f)
        g = T.concat_channels([s, f])
        mixed = self.mix(self.proj_in(g))
        out = self.proj_out(mixed)
        s_new, f_new = T.split_channels(out, [self.cfg.num_classes, self.cfg.channels])
        return s_new, f_new


def _norm_slices(x: Tensor) -> Tensor:
    return T.standardize_spatial(x)


_EXTRACTIONS = {
    "cse": CrossSliceExtraction,
    "sse": SelfSliceExtraction,
    "pwe": PointwiseExtraction,
}


class DecoderBlock(Module):
    """Extraction followed by one FFN per stream.

    The last block of the stack drops the feature FFN and passes the
    incoming feature map through untouched (nothing consumes it later).
    """

    def __init__(self, cfg: DecoderConfig, rng: Rng, is_last: bool):
        super().__init__()
        self.is_last = is_last
        self.extract = _EXTRACTIONS[cfg.variant](cfg, rng)
        self.ffn_tokens = FeedForward(cfg.num_classes, rng, cfg.ffn_ratio, cfg.ffn_groups)
        if not is_last:
            self.ffn_features = FeedForward(cfg.channels, rng, cfg.ffn_ratio, cfg.ffn_groups)

    def forward(self, s: Tensor, f: Tensor) -> tuple[Tensor, Tensor]:
        s_new, f_new = self.extract(s, f)
        s_new = self.ffn_tokens(s_new)
        if self.is_last:
            return s_new, f
        return s_new, self.ffn_features(f_new)


class Decoder(Module):
    """Token stack, L refinement blocks, and the residual conv head."""

    def __init__(self, cfg: DecoderConfig, feature_hw: tuple[int, int] | None = None,
                 rng: Rng | None = None):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        if cfg.token_h and cfg.token_w:
            hs, ws = cfg.token_h, cfg.token_w
        elif feature_hw is not None:
            hs, ws = feature_hw
        else:
            raise ConfigError("token size unset and no feature size to default to")
        rng = rng if rng is not None else Rng(mix(cfg.seed, 0xDEC0DE))
        self.tokens = init_weight((cfg.num_classes, hs, ws), rng)
        self.blocks = ModuleList(
            DecoderBlock(cfg, rng, is_last=(i == cfg.blocks - 1))
            for i in range(cfg.blocks))
        self.head = ConvBlock(cfg.num_classes, rng)

    def _initial_tokens(self, batch: int, h: int, w: int) -> Tensor:
        s = self.tokens
        if s.shape[-2:] != (h, w):
            s = T.bilinear_resize(s, h, w)
        return T.broadcast_batch(s, batch)

    def forward(self, f: Tensor, *, return_stages: bool = False):
        """Feature map (C,H,W) or (B,C,H,W) -> logits with K channels."""
        squeeze = f.ndim == 3
        if squeeze:
            f = T.reshape(f, (1,) + f.shape)
        if f.shape[1] != self.cfg.channels:
            raise ShapeError(
                f"decoder expects {self.cfg.channels} feature channels, got {f.shape[1]}")
        b, _, h, w = f.shape
        s = self._initial_tokens(b, h, w)
        stages = [s]
        for block in self.blocks:
            s, f = block(s, f)
            stages.append(s)
        logits = self.head(s)
        stages.append(logits)
        if squeeze:
            logits = T.reshape(logits, logits.shape[1:])
        if return_stages:
            return logits, stages
        return logits


class PerPixelBaseline(Module):
    """Per-pixel classification counterpart: 1x1 proj, four residual blocks, 1x1."""

    def __init__(self, channels: int, num_classes: int, seed: int = 0):
        super().__init__()
        rng = Rng(mix(seed, 0xBA5E))
        self.proj_in = Conv2d(channels, num_classes, 1, rng)
        self.blocks = ModuleList(ConvBlock(num_classes, rng) for _ in range(4))
        self.proj_out = Conv2d(num_classes, num_classes, 1, rng)

    def forward(self, f: Tensor, *, return_stages: bool = False):
        squeeze = f.ndim == 3
        if squeeze:
            f = T.reshape(f, (1,) + f.shape)
        x = self.proj_in(f)
        stages = [x]
        for block in self.blocks:
            x = block(x)
            stages.append(x)
        logits = self.proj_out(x)
        stages.append(logits)
        if squeeze:
            logits = T.reshape(logits, logits.shape[1:])
        if return_stages:
            return logits, stages
        return logits
