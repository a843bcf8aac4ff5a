"""Holistic attention super-resolution network.

Structure: a 3x3 head conv, N residual groups of B residual channel-attention
blocks each, a layer attention module (LAM) that reweights the stack of group
outputs through a row-softmaxed Gram matrix, a channel-spatial attention
module (CSAM) that gates the last group output(s) with a sigmoid map from a
3x3x3 convolution over the channel volume, and a sub-pixel upsampler over the
fused F0 + FL + FCS features.

Both attention modules are gated by learnable scalars that start at zero, so
a freshly initialized network is numerically identical to the same network
with either module replaced by its skip path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import DimensionError, Tensor


class ConfigError(ValueError):
    """Invalid or inconsistent model/run configuration."""


SUPPORTED_SCALES = (2, 3, 4, 8)


@dataclass
class ModelConfig:
    n_groups: int = 10
    n_blocks: int = 2
    channels: int = 16
    reduction: int = 4
    scale: int = 2
    csam_count: int = 1
    use_lam: bool = True
    use_csam: bool = True
    rgb_range: float = 1.0

    def validate(self) -> "ModelConfig":
        if self.n_groups < 1 or self.n_blocks < 1:
            raise ConfigError("n_groups and n_blocks must be >= 1")
        if self.channels < 4:
            raise ConfigError("channels must be >= 4")
        if self.reduction < 1 or self.channels % self.reduction != 0:
            raise ConfigError(
                f"reduction {self.reduction} must divide channels {self.channels}")
        if self.scale not in SUPPORTED_SCALES:
            raise ConfigError(f"scale must be one of {SUPPORTED_SCALES}")
        if not 1 <= self.csam_count <= self.n_groups:
            raise ConfigError("csam_count must lie in [1, n_groups]")
        if self.rgb_range <= 0:
            raise ConfigError("rgb_range must be positive")
        return self


def upsample_stages(scale: int) -> tuple[int, ...]:
    """Pixel-shuffle factors per stage: one stage for x2/x3, chained x2 otherwise."""
    if scale in (2, 3):
        return (scale,)
    if scale == 4:
        return (2, 2)
    if scale == 8:
        return (2, 2, 2)
    raise ConfigError(f"scale must be one of {SUPPORTED_SCALES}")


class HanParams:
    """Named, ordered parameter set; the order defines the checkpoint layout."""

    def __init__(self, tensors: dict[str, Tensor]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def named(self):
        return self._tensors.items()

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def count(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def zero_grad(self) -> None:
        for t in self._tensors.values():
            t.grad = None


def init_params(config: ModelConfig, rng_seed: int, dtype=np.float32) -> HanParams:
    """Fan-in-scaled uniform init for convs; attention gates start at exactly 0."""
    config.validate()
    rng = np.random.default_rng(rng_seed)
    tensors: dict[str, Tensor] = {}

    def conv(name: str, cout: int, cin: int, *kernel: int):
        fan_in = cin * int(np.prod(kernel))
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(cout, cin, *kernel))
        b = rng.uniform(-bound, bound, size=(cout,))
        tensors[f"{name}.w"] = Tensor(w.astype(dtype), requires_grad=True)
        tensors[f"{name}.b"] = Tensor(b.astype(dtype), requires_grad=True)

    c, r = config.channels, config.reduction
    conv("head", c, 3, 3, 3)
    for i in range(config.n_groups):
        for j in range(config.n_blocks):
            prefix = f"rg{i}.rcab{j}"
            conv(f"{prefix}.conv1", c, c, 3, 3)
            conv(f"{prefix}.conv2", c, c, 3, 3)
            conv(f"{prefix}.ca1", c // r, c, 1, 1)
            conv(f"{prefix}.ca2", c, c // r, 1, 1)
        conv(f"rg{i}.tail", c, c, 3, 3)
    tensors["lam.alpha"] = Tensor(np.zeros(1, dtype), requires_grad=True)
    for k in range(config.csam_count):
        tensors[f"csam{k}.beta"] = Tensor(np.zeros(1, dtype), requires_grad=True)
        conv(f"csam{k}.conv", 1, 1, 3, 3, 3)
    for t, s in enumerate(upsample_stages(config.scale)):
        conv(f"up{t}", c * s * s, c, 3, 3)
    conv("tail", 3, c, 3, 3)
    return HanParams(tensors)


def _conv3x3(x: Tensor, params: HanParams, name: str) -> Tensor:
    return ops.conv2d(x, params[f"{name}.w"], params[f"{name}.b"], padding=1)


def _conv1x1(x: Tensor, params: HanParams, name: str) -> Tensor:
    return ops.conv2d(x, params[f"{name}.w"], params[f"{name}.b"], padding=0)


def rcab_forward(x: Tensor, params: HanParams, prefix: str) -> Tensor:
    """conv-relu-conv, squeeze-style channel gate, then the block skip."""
    body = _conv3x3(x, params, f"{prefix}.conv1")
    body = ops.relu(body)
    body = _conv3x3(body, params, f"{prefix}.conv2")
    gate = ops.global_avg_pool(body)
    gate = ops.relu(_conv1x1(gate, params, f"{prefix}.ca1"))
    gate = ops.sigmoid(_conv1x1(gate, params, f"{prefix}.ca2"))
    return ops.add(ops.mul(body, gate), x)


def residual_group_forward(x: Tensor, params: HanParams, prefix: str,
                           n_blocks: int) -> Tensor:
    out = x
    for j in range(n_blocks):
        out = rcab_forward(out, params, f"{prefix}.rcab{j}")
    out = _conv3x3(out, params, f"{prefix}.tail")
    return ops.add(out, x)


def layer_correlation(m: Tensor) -> Tensor:
    """Row-softmaxed Gram matrix of the flattened feature groups."""
    return ops.softmax_rows(ops.matmul(m, ops.permute(m, (1, 0))))


def lam_forward(stack: Tensor, alpha: Tensor) -> Tensor:
    """Reweight a [batch, groups, C, H, W] feature stack across the group axis.

    Each output group j is alpha * sum_i w[i, j] * group_i + group_j, where w
    is the row-softmaxed Gram matrix of the groups flattened per batch item.
    The Gram matrix is invariant to the flattening order, so the channel-major
    layout used here matches any other consistent one.
    """
    if stack.data.ndim != 5:
        raise DimensionError("lam_forward expects [batch, groups, C, H, W]")
    b, n, c, h, w = stack.shape
    outs = []
    for i in range(b):
        m = ops.reshape(ops.index0(stack, i), (n, c * h * w))
        corr = layer_correlation(m)
        mixed = ops.matmul(ops.permute(corr, (1, 0)), m)
        weighted = ops.add(ops.mul(mixed, alpha), m)
        outs.append(ops.reshape(weighted, (n, c, h, w)))
    return ops.stack(outs)


def csam_forward(x: Tensor, beta: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Gate a [batch, C, H, W] map with a sigmoid attention volume."""
    b, c, h, w = x.shape
    volume = ops.reshape(x, (b, 1, c, h, w))
    attention = ops.sigmoid(ops.conv3d(volume, weight, bias, padding=1))
    attention = ops.reshape(attention, (b, c, h, w))
    return ops.add(ops.mul(ops.mul(attention, x), beta), x)


def _sum_tensors(tensors: list[Tensor]) -> Tensor:
    total = tensors[0]
    for t in tensors[1:]:
        total = ops.add(total, t)
    return total


def han_forward(x: Tensor, params: HanParams, config: ModelConfig) -> Tensor:
    if x.data.ndim != 4 or x.shape[1] != 3:
        raise DimensionError("expected a [batch, 3, H, W] input")
    if x.shape[2] < 8 or x.shape[3] < 8:
        raise DimensionError("input extents must be >= 8")
    config.validate()

    f0 = _conv3x3(x, params, "head")
    feats = []
    f = f0
    for i in range(config.n_groups):
        f = residual_group_forward(f, params, f"rg{i}", config.n_blocks)
        feats.append(f)

    if config.use_lam:
        stacked = ops.permute(ops.stack(feats), (1, 0, 2, 3, 4))
        weighted = lam_forward(stacked, params["lam.alpha"])
        regrouped = ops.permute(weighted, (1, 0, 2, 3, 4))
        f_l = _sum_tensors([ops.index0(regrouped, j) for j in range(len(feats))])
    else:
        f_l = _sum_tensors(feats)

    gated = feats[-config.csam_count:]
    if config.use_csam:
        f_cs = _sum_tensors([
            csam_forward(feat, params[f"csam{k}.beta"],
                         params[f"csam{k}.conv.w"], params[f"csam{k}.conv.b"])
            for k, feat in enumerate(gated)])
    else:
        f_cs = _sum_tensors(gated)

    fused = ops.add(ops.add(f0, f_l), f_cs)
    up = fused
    for t, s in enumerate(upsample_stages(config.scale)):
        up = ops.pixel_shuffle(_conv3x3(up, params, f"up{t}"), s)
    return _conv3x3(up, params, "tail")


def super_resolve(params: HanParams, config: ModelConfig,
                  planes: np.ndarray) -> np.ndarray:
    """Upscale one [3, H, W] raster in inference mode, clipped to [0, 1]."""
    x = Tensor(planes[np.newaxis].astype(np.float32, copy=False))
    out = han_forward(x, params, config)
    return np.clip(out.data[0], 0.0, 1.0)
