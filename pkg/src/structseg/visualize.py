"""Token-evolution visualization as binary PGM (P5) images."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .tensor import Tensor, no_grad


def to_gray(values: np.ndarray) -> np.ndarray:
    """Min-max normalize to uint8 [0,255]; constant slices map to 128."""
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo < 1e-12:
        return np.full(values.shape, 128, dtype=np.uint8)
    scaled = (values - lo) / (hi - lo) * 255.0
    return np.rint(scaled).astype(np.uint8)


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    if gray.ndim != 2 or gray.dtype != np.uint8:
        raise ValueError(f"PGM wants a 2-D uint8 array, got {gray.shape} {gray.dtype}")
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(gray.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    header, rest = raw.split(b"255\n", 1)
    magic, dims = header.split(b"\n", 1)
    assert magic == b"P5"
    w, h = (int(v) for v in dims.split())
    return np.frombuffer(rest, np.uint8, h * w).reshape(h, w)


def dump_token_stages(model, image: np.ndarray, class_index: int,
                      outdir: str | Path) -> list[Path]:
    """Write the token slice for one class at every stage.

    Emits tok_init.pgm (the learned slice, at feature resolution),
    tok_block<i>.pgm per decoder block, and tok_score.pgm (the head
    output): blocks + 2 files.
    """
    k = model.decoder.cfg.num_classes if hasattr(model.decoder, "cfg") else None
    if k is not None and not 0 <= class_index < k:
        raise ValueError(f"class index {class_index} outside [0,{k})")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    with no_grad():
        _, stages = model.token_stages(Tensor(image[None]))
    names = (["tok_init"]
             + [f"tok_block{i}" for i in range(1, len(stages) - 1)]
             + ["tok_score"])
    written = []
    for name, stage in zip(names, stages):
        gray = to_gray(stage.data[0, class_index])
        path = outdir / f"{name}.pgm"
        write_pgm(path, gray)
        written.append(path)
    return written
