"""Confusion matrix, IoU, sliding-window and multi-scale inference."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .tensor import Tensor, no_grad


class ConfusionMatrix:
    """K x K counts; entry [g][p] = pixels of truth g predicted as p."""

    def __init__(self, num_classes: int):
        if num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        self.num_classes = num_classes
        self.counts = np.zeros((num_classes, num_classes), dtype=np.int64)

    def accumulate(self, pred: np.ndarray, gt: np.ndarray,
                   ignore_label: int = 255) -> "ConfusionMatrix":
        pred = np.asarray(pred)
        gt = np.asarray(gt)
        if pred.shape != gt.shape:
            raise ShapeError(f"pred shape {pred.shape} != gt shape {gt.shape}")
        keep = gt != ignore_label
        p = pred[keep].astype(np.int64)
        g = gt[keep].astype(np.int64)
        k = self.num_classes
        if p.size and (p.min() < 0 or p.max() >= k):
            raise ValueError(f"prediction outside [0,{k})")
        if g.size and (g.min() < 0 or g.max() >= k):
            raise ValueError(f"ground truth outside [0,{k})")
        np.add.at(self.counts, (g, p), 1)
        return self

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        self.counts += other.counts
        return self


def miou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class IoU (NaN where the union is empty) and their mean.

    Classes never seen in either prediction or truth are excluded from
    the mean; if every class has empty union the metric is undefined.
    """
    counts = cm.counts
    tp = np.diag(counts).astype(np.float64)
    union = counts.sum(axis=0) + counts.sum(axis=1) - tp
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, tp / union, np.nan)
    valid = ~np.isnan(iou)
    if not valid.any():
        raise ValueError("mIoU undefined: every class has an empty union")
    return iou, float(iou[valid].mean())


def format_iou_report(iou: np.ndarray, mean: float,
                      class_names: list[str] | None = None) -> str:
    lines = [f"{'class':<12}{'IoU':>8}"]
    for k, v in enumerate(iou):
        name = class_names[k] if class_names else f"class_{k}"
        lines.append(f"{name:<12}" + (f"{v:8.4f}" if not np.isnan(v) else f"{'n/a':>8}"))
    lines.append(f"{'mIoU':<12}{mean:8.4f}")
    return "\n".join(lines)


def _window_starts(length: int, crop: int, stride: int) -> list[int]:
    if length <= crop:
        return [0]
    starts = list(range(0, length - crop, stride))
    starts.append(length - crop)  # clip the last window to the border
    return starts


def slide_infer(model, image: np.ndarray, crop: int, stride: int) -> np.ndarray:
    """Average overlapping full-resolution logits over a window grid.

    image: (3,h,w). Every pixel is covered at least once; window visiting
    order does not affect the result beyond float summation order.
    """
    if stride <= 0:
        raise ConfigError("stride must be positive")
    if stride > crop:
        raise ConfigError(f"stride {stride} must not exceed crop {crop}")
    _, h, w = image.shape
    if crop > h or crop > w:
        raise ConfigError(f"crop {crop} larger than image {h}x{w}")
    canvas = np.zeros((_model_classes(model), h, w), dtype=np.float64)
    hits = np.zeros((h, w), dtype=np.int64)
    with no_grad():
        for y in _window_starts(h, crop, stride):
            for x in _window_starts(w, crop, stride):
                window = Tensor(image[None, :, y:y + crop, x:x + crop])
                logits = model.segment_logits(window).data[0]
                canvas[:, y:y + crop, x:x + crop] += logits
                hits[y:y + crop, x:x + crop] += 1
    assert hits.min() >= 1
    return (canvas / hits).astype(np.float32)


def _scaled_size(h: int, w: int, scale: float, multiple: int) -> tuple[int, int]:
    def snap(v):
        return max(multiple, int(round(v * scale / multiple)) * multiple)
    return snap(h), snap(w)


def multiscale_infer(model, image: np.ndarray, scales: list[float],
                     flip: bool = False, crop: int | None = None,
                     stride: int | None = None) -> np.ndarray:
    """Average class probabilities over resized copies of the input.

    Returns a (K,h,w) probability map; lanes sum to 1. Inputs larger than
    `crop` go through sliding-window inference.
    """
    if not scales:
        raise ConfigError("empty scale list")
    _, h, w = image.shape
    patch = model.encoder.cfg.patch
    crop = crop if crop is not None else max(h, w)
    stride = stride if stride is not None else -(-2 * crop // 3)  # ceil(2/3 crop)
    acc = None
    n_terms = 0
    with no_grad():
        for scale in scales:
            sh, sw = _scaled_size(h, w, scale, patch)
            scaled = T.bilinear_resize(Tensor(image), sh, sw).data
            for flipped in ((False, True) if flip else (False,)):
                inp = scaled[:, :, ::-1].copy() if flipped else scaled
                if sh > crop or sw > crop:
                    logits = slide_infer(model, inp, crop, stride)
                else:
                    logits = model.segment_logits(Tensor(inp[None])).data[0]
                probs = T.softmax(Tensor(logits), axis=0).data
                if flipped:
                    probs = probs[:, :, ::-1]
                probs = T.bilinear_resize(Tensor(np.ascontiguousarray(probs)), h, w).data
                acc = probs.astype(np.float64) if acc is None else acc + probs
                n_terms += 1
    return (acc / n_terms).astype(np.float32)


def evaluate_single_scale(model, images: np.ndarray, masks: np.ndarray,
                          ignore_label: int = 255) -> tuple[np.ndarray, float]:
    """Plain argmax evaluation at native resolution over a dataset."""
    k = _model_classes(model)
    cm = ConfusionMatrix(k)
    with no_grad():
        for img, gt in zip(images, masks):
            logits = model.segment_logits(Tensor(img[None])).data[0]
            cm.accumulate(logits.argmax(axis=0), gt, ignore_label)
    return miou(cm)


def evaluate_multiscale(model, images: np.ndarray, masks: np.ndarray,
                        scales: list[float], flip: bool = False,
                        crop: int | None = None, stride: int | None = None,
                        ignore_label: int = 255) -> tuple[np.ndarray, float]:
    k = _model_classes(model)
    cm = ConfusionMatrix(k)
    for img, gt in zip(images, masks):
        probs = multiscale_infer(model, img, scales, flip, crop, stride)
        cm.accumulate(probs.argmax(axis=0), gt, ignore_label)
    return miou(cm)


def _model_classes(model) -> int:
    if hasattr(model.decoder, "cfg"):
        return model.decoder.cfg.num_classes
    return model.decoder.proj_out.weight.shape[0]
