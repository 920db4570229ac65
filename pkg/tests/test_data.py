"""Synthetic shapes dataset: determinism, rasterization, file round trips."""

import numpy as np
import pytest

from structseg.data import (MAGIC, SynthConfig, draw_circle, generate_dataset,
                            generate_sample, load_dataset, save_dataset,
                            train_val_split)
from structseg.errors import BadMagicError, BadVersionError, TruncatedFileError


CFG = SynthConfig(train_count=16, val_count=4, seed=42)


class TestGeneration:
    def test_bitwise_deterministic(self):
        a = generate_sample(CFG, 3)
        b = generate_sample(CFG, 3)
        assert a.image.tobytes() == b.image.tobytes()
        assert a.mask.tobytes() == b.mask.tobytes()

    def test_pure_function_of_index_any_order(self):
        forward = [generate_sample(CFG, i).mask.tobytes() for i in range(6)]
        backward = [generate_sample(CFG, i).mask.tobytes() for i in reversed(range(6))]
        assert forward == backward[::-1]

    def test_mask_values_below_k(self):
        for i in range(16):
            s = generate_sample(CFG, i)
            assert s.mask.max() < CFG.num_classes
            assert np.isfinite(s.image).all()
            assert 0.0 <= s.image.min() and s.image.max() <= 1.0

    def test_circle_pixel_count_near_area(self):
        mask = np.zeros((32, 32), dtype=np.uint8)
        draw_circle(mask, 16.0, 16.0, 6.0, 1)
        lattice = sum(1 for y in range(32) for x in range(32)
                      if (y - 16) ** 2 + (x - 16) ** 2 <= 36)
        count = int((mask == 1).sum())
        assert count == lattice
        assert abs(count - np.pi * 36) <= 8

    def test_class_balance_over_many_samples(self):
        cfg = SynthConfig(train_count=256, seed=42)
        _, masks = generate_dataset(cfg, 256)
        for k in range(cfg.num_classes):
            present = np.mean([(m == k).any() for m in masks])
            assert present >= 0.05, f"class {k} present in only {present:.0%} of samples"

    def test_distinct_seeds_distinct_data(self):
        a = generate_sample(SynthConfig(seed=1), 0)
        b = generate_sample(SynthConfig(seed=2), 0)
        assert a.image.tobytes() != b.image.tobytes()


class TestDatasetFile:
    def test_roundtrip_bitwise(self, tmp_path):
        images, masks = generate_dataset(CFG, 10)
        path = tmp_path / "ds.stds"
        save_dataset(path, images, masks, CFG.num_classes)
        images2, masks2, k = load_dataset(path)
        assert k == CFG.num_classes
        assert images2.tobytes() == images.tobytes()
        assert masks2.tobytes() == masks.tobytes()

    def test_empty_roundtrip(self, tmp_path):
        path = tmp_path / "empty.stds"
        save_dataset(path, np.zeros((0, 3, 8, 8), np.float32),
                     np.zeros((0, 8, 8), np.uint8), 4)
        images, masks, k = load_dataset(path)
        assert len(images) == 0 and len(masks) == 0 and k == 4

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.stds"
        path.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(BadMagicError):
            load_dataset(path)

    def test_bad_version(self, tmp_path):
        images, masks = generate_dataset(CFG, 1)
        path = tmp_path / "v9.stds"
        save_dataset(path, images, masks, 4)
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(BadVersionError):
            load_dataset(path)

    def test_truncated(self, tmp_path):
        images, masks = generate_dataset(CFG, 2)
        path = tmp_path / "cut.stds"
        save_dataset(path, images, masks, 4)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(TruncatedFileError):
            load_dataset(path)

    def test_magic_constant(self):
        assert MAGIC == b"STDS"


class TestSplit:
    def test_train_val_disjoint_indices(self):
        cfg = SynthConfig(train_count=8, val_count=4, seed=3)
        (ti, tm), (vi, vm) = train_val_split(cfg)
        assert ti.shape == (8, 3, 32, 32) and vi.shape == (4, 3, 32, 32)
        train_bytes = {im.tobytes() for im in ti}
        assert all(im.tobytes() not in train_bytes for im in vi)
