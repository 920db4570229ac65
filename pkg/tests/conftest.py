"""Shared helpers: exact-identity layer settings for closed-form tests."""

import numpy as np
import pytest

from structseg.decoder import SliceProjection
from structseg.nn import Conv2d


def set_identity_1x1(conv: Conv2d) -> None:
    n = conv.weight.data.shape[0]
    conv.weight.data[...] = np.eye(n, dtype=conv.weight.data.dtype).reshape(n, n, 1, 1)
    if conv.bias is not None:
        conv.bias.data[...] = 0.0


def set_center_delta(conv: Conv2d) -> None:
    conv.weight.data[...] = 0.0
    conv.weight.data[:, :, 1, 1] = 1.0
    if conv.bias is not None:
        conv.bias.data[...] = 0.0


def set_identity_projection(proj: SliceProjection) -> None:
    set_identity_1x1(proj.mix_in)
    set_center_delta(proj.local)
    set_identity_1x1(proj.mix_out)


def zero_module(module) -> None:
    for p in module.parameters():
        p.data[...] = 0.0
