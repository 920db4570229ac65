"""Small module system: parameter registration, conv layers, residual block.

Weight init is truncated normal(0, 0.02) clipped at two sigма via the
package RNG; biases start at zero. A model built twice from the same seed
is bitwise identical.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Tensor

INIT_STD = 0.02


def init_weight(shape: tuple[int, ...], rng: Rng, dtype=np.float32) -> Tensor:
    vals = np.empty(shape, dtype=np.float64)
    flat = vals.reshape(-1)
    for i in range(flat.size):
        flat[i] = rng.truncated_normal(INIT_STD)
    return Tensor(vals.astype(dtype), requires_grad=True)


class Module:
    """Base class tracking parameters and submodules by attribute name."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_modules", {})

    def __setattr__(self, name, value):
        # Underscored attributes are scratch state, never parameters.
        if not name.startswith("_"):
            if isinstance(value, Tensor):
                self._params[name] = value
            elif isinstance(value, Module):
                self._modules[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = ""):
        for name, p in self._params.items():
            yield (prefix + name, p)
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype) -> "Module":
        """Cast all parameters in place (float64 for gradient checks)."""
        for name, p in self._params.items():
            cast = p.astype(dtype)
            self._params[name] = cast
            object.__setattr__(self, name, cast)
        for m in self._modules.values():
            m.astype(dtype)
        return self

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module):
        setattr(self, str(len(self._items)), m)
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Conv2d(Module):
    """Grouped conv layer; padding defaults to size-preserving for odd kernels."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, rng: Rng, *,
                 groups: int = 1, padding: int | None = None, stride: int = 1,
                 bias: bool = True):
        super().__init__()
        self.groups = groups
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding
        self.weight = init_weight((out_ch, in_ch // groups, kernel, kernel), rng)
        self.bias = Tensor(np.zeros(out_ch, dtype=np.float32), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.weight, self.bias, groups=self.groups,
                        padding=self.padding, stride=self.stride)


class ConvBlock(Module):
    """Residual refinement: x + conv3x3(relu(conv3x3(x)))."""

    def __init__(self, channels: int, rng: Rng):
        super().__init__()
        self.conv1 = Conv2d(channels, channels, 3, rng)
        self.conv2 = Conv2d(channels, channels, 3, rng)

    def forward(self, x: Tensor) -> Tensor:
        return T.add(x, self.conv2(T.relu(self.conv1(x))))
