"""Encoder stub: patch embedding and mixing stages."""

import numpy as np
import pytest

from structseg.encoder import Encoder, EncoderConfig
from structseg.errors import ConfigError
from structseg.gradcheck import finite_diff_check
from structseg.tensor import Tensor
import structseg.tensor as T

from conftest import zero_module


def rand(shape, seed=0, dtype=np.float32):
    return np.random.default_rng(seed).uniform(-1, 1, shape).astype(dtype)


class TestPatchEmbed:
    def test_spatial_reduction(self):
        enc = Encoder(EncoderConfig(patch=4, channels=8))
        out = enc.embed(Tensor(rand((1, 3, 32, 32))))
        assert out.shape == (1, 8, 8, 8)

    def test_constant_image_gives_spatially_constant_feature(self):
        enc = Encoder(EncoderConfig(patch=4, channels=6))
        img = Tensor(np.full((1, 3, 16, 16), 0.3, dtype=np.float32))
        out = enc.embed(img).data
        np.testing.assert_allclose(out, np.broadcast_to(out[:, :, :1, :1], out.shape),
                                   atol=1e-6)

    def test_divisibility_enforced(self):
        enc = Encoder(EncoderConfig(patch=4, channels=8))
        with pytest.raises(ConfigError):
            enc.embed(Tensor(rand((1, 3, 30, 30))))

    def test_gradient(self):
        enc = Encoder(EncoderConfig(patch=2, channels=4, stages=0)).astype(np.float64)

        def f(t):
            y = enc(t)
            return T.sum_all(T.mul(y, y))

        assert finite_diff_check(f, Tensor(rand((1, 3, 4, 4), dtype=np.float64))) < 1e-5


class TestEncode:
    @pytest.mark.parametrize("h,w", [(16, 16), (16, 32), (48, 16)])
    def test_output_size_tracks_input(self, h, w):
        enc = Encoder(EncoderConfig(patch=4, channels=8, stages=2))
        assert enc(Tensor(rand((1, 3, h, w)))).shape == (1, 8, h // 4, w // 4)

    def test_zero_stages_equals_patch_embed(self):
        enc = Encoder(EncoderConfig(patch=4, channels=8, stages=2))
        for stage in enc.stages:
            zero_module(stage)
        img = Tensor(rand((1, 3, 16, 16)))
        np.testing.assert_array_equal(enc(img).data, enc.embed(img).data)

    def test_deterministic_init(self):
        a = Encoder(EncoderConfig(seed=5))
        b = Encoder(EncoderConfig(seed=5))
        for (_, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters()):
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_unbatched_input(self):
        enc = Encoder(EncoderConfig(patch=4, channels=8))
        assert enc(Tensor(rand((3, 16, 16)))).shape == (8, 4, 4)
