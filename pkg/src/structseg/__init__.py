"""Structure-token semantic segmentation at desk scale.

Learnable per-class token slices are refined by interchangeable
extraction modules (channel cross-attention, channel self-attention,
or learned point-wise mixing) and decoded straight into segmentation
logits, on top of a self-contained numpy autograd core.
"""

from .tensor import Tensor, backward, no_grad
from .decoder import Decoder, DecoderConfig, PerPixelBaseline
from .encoder import Encoder, EncoderConfig
from .model import SegModel
from .costmodel import estimate_cost
from .train import AdamW, TrainConfig, cross_entropy_loss, poly_lr, train
from .metrics import ConfusionMatrix, miou, multiscale_infer, slide_infer
from .data import SynthConfig, generate_sample, load_dataset, save_dataset
from .config import RunConfig, parse_config

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "no_grad",
    "Decoder", "DecoderConfig", "PerPixelBaseline",
    "Encoder", "EncoderConfig", "SegModel",
    "estimate_cost",
    "AdamW", "TrainConfig", "cross_entropy_loss", "poly_lr", "train",
    "ConfusionMatrix", "miou", "multiscale_infer", "slide_infer",
    "SynthConfig", "generate_sample", "load_dataset", "save_dataset",
    "RunConfig", "parse_config",
]
