"""Command-line surface: train, eval, gradcheck, flops, synth, visualize."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .config import RunConfig, load_config
from .costmodel import estimate_cost, format_cost_table
from .data import CLASS_NAMES, generate_dataset, save_dataset, train_val_split
from .decoder import VARIANTS, DecoderConfig
from .errors import ConfigError
from .gradcheck import finite_diff_check_params
from .metrics import evaluate_multiscale, evaluate_single_scale, format_iou_report
from .model import SegModel
from .tensor import Tensor
from .train import cross_entropy_loss, train
from .visualize import dump_token_stages

GRADCHECK_TOLERANCE = 1e-3


def build_model(cfg: RunConfig, head_kind: str = "tokens") -> SegModel:
    return SegModel(cfg.encoder_config(), cfg.decoder_config(),
                    crop_hw=(cfg.h, cfg.w), head_kind=head_kind)


def _class_names(k: int) -> list[str]:
    return [CLASS_NAMES[i] if i < len(CLASS_NAMES) else f"class_{i}" for i in range(k)]


def cmd_train(cfg: RunConfig, out_path: str, head_kind: str = "tokens",
              log=print) -> float:
    if cfg.blocks < 1 and head_kind == "tokens":
        raise ConfigError("training requires blocks >= 1")
    (train_images, train_masks), (val_images, val_masks) = train_val_split(cfg.synth_config())
    model = build_model(cfg, head_kind)
    train(model, train_images, train_masks, cfg.train_config(), log_fn=log)
    save_checkpoint(out_path, dict(model.named_parameters()), cfg)
    iou, mean = evaluate_single_scale(model, val_images, val_masks, cfg.ignore_label)
    log(format_iou_report(iou, mean, _class_names(cfg.num_classes)))
    log(f"checkpoint written to {out_path}")
    return mean


def cmd_eval(cfg: RunConfig, checkpoint_path: str, head_kind: str = "tokens",
             log=print) -> float:
    tensors, _ = load_checkpoint(checkpoint_path)
    model = build_model(cfg, head_kind)
    restore_model(model, tensors)
    _, (val_images, val_masks) = train_val_split(cfg.synth_config())
    iou_ss, mean_ss = evaluate_single_scale(model, val_images, val_masks, cfg.ignore_label)
    log("single-scale:")
    log(format_iou_report(iou_ss, mean_ss, _class_names(cfg.num_classes)))
    if cfg.scales != [1.0]:
        stride = cfg.stride if cfg.stride else -(-2 * cfg.crop // 3)
        iou_ms, mean_ms = evaluate_multiscale(
            model, val_images, val_masks, cfg.scales, cfg.flip,
            cfg.crop, stride, cfg.ignore_label)
        log(f"multi-scale (scales={','.join(str(s) for s in cfg.scales)}"
            f"{', flip' if cfg.flip else ''}):")
        log(format_iou_report(iou_ms, mean_ms, _class_names(cfg.num_classes)))
        log(f"multi-scale delta: {mean_ms - mean_ss:+.4f}")
        return mean_ms
    return mean_ss


def cmd_gradcheck(cfg: RunConfig, log=print) -> bool:
    """Finite-difference check of every decoder parameter, per variant."""
    from .rng import Rng, mix
    from .decoder import Decoder

    all_ok = True
    rows = []
    for variant in VARIANTS:
        dec_cfg = DecoderConfig(channels=6, num_classes=3, blocks=2, variant=variant,
                                token_h=4, token_w=4, seed=cfg.seed)
        dec = Decoder(dec_cfg).astype(np.float64)
        rng = Rng(mix(cfg.seed, 0xF00D))
        feat = np.array([[ [rng.uniform(-1, 1) for _ in range(4)] for _ in range(4)]
                         for _ in range(6)], dtype=np.float64)
        target = np.array([[rng.randint(3) for _ in range(4)] for _ in range(4)])

        def loss_fn(dec=dec, feat=feat, target=target):
            logits = dec(Tensor(feat[None], dtype=np.float64))
            return cross_entropy_loss(logits, target[None])

        errors = finite_diff_check_params(loss_fn, dec.named_parameters())
        worst = max(errors.values())
        ok = worst < GRADCHECK_TOLERANCE
        all_ok &= ok
        rows.append((variant, worst, ok))
    log(f"{'variant':<10}{'max rel err':>14}{'status':>10}")
    for variant, worst, ok in rows:
        log(f"{variant:<10}{worst:>14.3e}{'pass' if ok else 'FAIL':>10}")
    return all_ok


def cmd_flops(cfg: RunConfig, log=print) -> None:
    feat_h, feat_w = cfg.h // cfg.patch, cfg.w // cfg.patch
    reports = []
    for variant in VARIANTS:
        dec_cfg = cfg.decoder_config()
        dec_cfg.variant = variant
        reports.append(estimate_cost(dec_cfg, feat_h, feat_w))
    log(format_cost_table(reports))
    order = sorted(reports, key=lambda r: r.flops["total"])
    log("FLOPs ordering: " + " < ".join(r.variant.upper() for r in order))


def cmd_synth(cfg: RunConfig, out_path: str, log=print) -> None:
    synth = cfg.synth_config()
    images, masks = generate_dataset(synth, synth.train_count + synth.val_count)
    save_dataset(out_path, images, masks, synth.num_classes)
    log(f"wrote {len(images)} samples to {out_path}")


def cmd_visualize(cfg: RunConfig, checkpoint_path: str, index: int,
                  class_index: int, outdir: str, log=print) -> list[Path]:
    tensors, _ = load_checkpoint(checkpoint_path)
    model = build_model(cfg)
    restore_model(model, tensors)
    synth = cfg.synth_config()
    val_images, _ = generate_dataset(synth, synth.val_count, offset=synth.train_count)
    if not 0 <= index < len(val_images):
        raise ConfigError(f"image index {index} outside validation set")
    paths = dump_token_stages(model, val_images[index], class_index, outdir)
    log(f"wrote {len(paths)} stage images to {outdir}")
    return paths


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="structseg",
                                     description="structure-token segmentation")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to key=value config file")
        p.add_argument("--seed", type=int, help="override the config seed")

    p_train = sub.add_parser("train", help="train on the synthetic task")
    common(p_train)
    p_train.add_argument("--out", required=True, help="checkpoint output path")
    p_train.add_argument("--head", choices=["tokens", "baseline"], default="tokens")

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--head", choices=["tokens", "baseline"], default="tokens")

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    common(p_grad)

    p_flops = sub.add_parser("flops", help="analytic cost table")
    common(p_flops)

    p_synth = sub.add_parser("synth", help="write the synthetic dataset")
    common(p_synth)
    p_synth.add_argument("--out", required=True)

    p_vis = sub.add_parser("visualize", help="dump token evolution as PGM")
    common(p_vis)
    p_vis.add_argument("--checkpoint", required=True)
    p_vis.add_argument("--out", required=True, help="output directory")
    p_vis.add_argument("--index", type=int, default=0, help="validation image index")
    p_vis.add_argument("--class-index", type=int, default=1)

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.command == "train":
            cmd_train(cfg, args.out, args.head)
        elif args.command == "eval":
            cmd_eval(cfg, args.checkpoint, args.head)
        elif args.command == "gradcheck":
            if not cmd_gradcheck(cfg):
                print("gradient check FAILED", file=sys.stderr)
                return 1
        elif args.command == "flops":
            cmd_flops(cfg)
        elif args.command == "synth":
            cmd_synth(cfg, args.out)
        elif args.command == "visualize":
            cmd_visualize(cfg, args.checkpoint, args.index, args.class_index, args.out)
    except Exception as exc:  # surface module errors with context, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
