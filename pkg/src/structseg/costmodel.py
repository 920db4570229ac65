"""Analytic cost model: multiply-accumulate and parameter counts.

Counts cover every projection, attention matmul, FFN, and the conv head,
per decoder variant, at a given feature-map geometry. One MAC is two
FLOPs. Softmax, scaling, biases, and residual adds are not MACs and are
not counted.
"""

from __future__ import annotations

from dataclasses import dataclass

from .decoder import DecoderConfig


@dataclass
class CostReport:
    variant: str
    flops: dict[str, int]
    params: dict[str, int]


def _branch_macs_per_px(n: int) -> int:
    # 1x1 mix (n^2) + 3x3 depthwise (9n) + 1x1 mix (n^2)
    return 2 * n * n + 9 * n


def _branch_params(n: int) -> int:
    return 2 * (n * n + n) + (9 * n + n)


def _ffn_macs_per_px(n: int, ratio: int, groups: int) -> int:
    hidden = n * ratio
    g = hidden if groups == 0 else groups
    return 2 * n * hidden + 9 * hidden * (hidden // g)


def _ffn_params(n: int, ratio: int, groups: int) -> int:
    hidden = n * ratio
    g = hidden if groups == 0 else groups
    return (n * hidden + hidden) + (9 * hidden * (hidden // g) + hidden) + (hidden * n + n)


def estimate_cost(cfg: DecoderConfig, h: int, w: int) -> CostReport:
    """Decoder cost at feature-map size h x w (counts exclude the backbone)."""
    cfg.validate()
    c, k, el = cfg.channels, cfg.num_classes, cfg.blocks
    m = c + k
    hw = h * w

    if cfg.variant == "cse":
        proj = _branch_macs_per_px(k) + 2 * _branch_macs_per_px(c) + _branch_macs_per_px(k)
        mixing = 2 * k * c  # two attention matmuls
        proj_params = 2 * _branch_params(k) + 2 * _branch_params(c)
        mixing_params = 0
    elif cfg.variant == "sse":
        proj = 4 * _branch_macs_per_px(m)  # q, k, v, out
        mixing = 2 * m * m
        proj_params = 4 * _branch_params(m)
        mixing_params = 0
    else:  # pwe
        proj = 2 * _branch_macs_per_px(m)  # in, out
        mixing = m * m  # dense 1x1 slice mixing
        proj_params = 2 * _branch_params(m)
        mixing_params = m * m + m

    ffn_tok = _ffn_macs_per_px(k, cfg.ffn_ratio, cfg.ffn_groups)
    ffn_feat = _ffn_macs_per_px(c, cfg.ffn_ratio, cfg.ffn_groups)
    n_feat_ffn = max(el - 1, 0)  # the last block has no feature FFN

    macs = {
        "extraction": el * (proj + mixing) * hw,
        "ffn_tokens": el * ffn_tok * hw,
        "ffn_features": n_feat_ffn * ffn_feat * hw,
        "head": 2 * 9 * k * k * hw,
    }
    flops = {name: 2 * v for name, v in macs.items()}
    flops["total"] = sum(flops.values())

    ths = cfg.token_h if cfg.token_h else h
    tws = cfg.token_w if cfg.token_w else w
    params = {
        "tokens": k * ths * tws,
        "extraction": el * (proj_params + mixing_params),
        "ffn_tokens": el * _ffn_params(k, cfg.ffn_ratio, cfg.ffn_groups),
        "ffn_features": n_feat_ffn * _ffn_params(c, cfg.ffn_ratio, cfg.ffn_groups),
        "head": 2 * (9 * k * k + k),
    }
    params["total"] = sum(params.values())
    return CostReport(cfg.variant, flops, params)


def format_cost_table(reports: list[CostReport]) -> str:
    """Fixed-width text table of per-component FLOPs and params."""
    components = ["extraction", "ffn_tokens", "ffn_features", "head", "total"]
    lines = [f"{'component':<14}" + "".join(f"{r.variant.upper():>16}" for r in reports)]
    lines.append("FLOPs")
    for comp in components:
        lines.append(f"  {comp:<12}" + "".join(f"{r.flops[comp]:>16,}" for r in reports))
    lines.append("params")
    for comp in ["tokens"] + components:
        lines.append(f"  {comp:<12}" + "".join(f"{r.params[comp]:>16,}" for r in reports))
    return "\n".join(lines)
