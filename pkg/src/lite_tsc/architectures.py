"""LITE, LITEMV, their ablation variants, and the FCN baseline.

An architecture is described declaratively by a config, expanded into a plan
of blocks (parallel paths of convolutions, concatenated, then batch norm and
ReLU), and evaluated by :func:`forward` / :func:`backward`. The same plan drives
parameter, multiplication and receptive-field accounting, so the counts shown
by ``lite-tsc summary`` always describe the network that is actually trained.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import tensor as T
from .filters import DECREASE_SIZES, INCREASE_SIZES, PEAK_SIZES, FilterBank, Kernel, apply_bank, make_bank
from .serialization import decode_container, encode_container, load_container, save_container

BN_MOMENTUM = 0.99
BN_EPS = 1e-5


@dataclass(frozen=True)
class LiteConfig:
    n_filters: int = 32
    kernel_size: int = 40
    dilations: tuple[int, int, int] = (1, 2, 4)
    deep_kernels: tuple[int, int] = (20, 10)
    deep_filters: int = 32
    increase_sizes: tuple[int, ...] = INCREASE_SIZES
    decrease_sizes: tuple[int, ...] = DECREASE_SIZES
    peak_sizes: tuple[int, ...] = PEAK_SIZES
    use_multiplexing: bool = True
    use_custom_filters: bool = True
    use_dilation: bool = True
    use_dwsc: bool = True
    multivariate: bool = False

    @property
    def branch_kernels(self) -> tuple[int, ...]:
        k = self.kernel_size
        return (k, k // 2, k // 4) if self.use_multiplexing else (k,)

    @property
    def branch_filters(self) -> int:
        return self.n_filters if self.use_multiplexing else 3 * self.n_filters

    @property
    def layer_dilations(self) -> tuple[int, int, int]:
        if self.use_dilation:
            return tuple(self.dilations)
        return (self.dilations[0], 1, 1)


@dataclass(frozen=True)
class FCNConfig:
    filters: tuple[int, ...] = (128, 256, 128)
    kernels: tuple[int, ...] = (8, 5, 3)


Config = Union[LiteConfig, FCNConfig]

_STRIPPED = dict(use_multiplexing=False, use_custom_filters=False, use_dilation=False)

ARCHITECTURES: dict[str, Config] = {
    "lite": LiteConfig(),
    "litemv": LiteConfig(multivariate=True),
    "striped": LiteConfig(**_STRIPPED),
    "striped+custom": LiteConfig(**{**_STRIPPED, "use_custom_filters": True}),
    "striped+multiplex": LiteConfig(**{**_STRIPPED, "use_multiplexing": True}),
    "striped+dilation": LiteConfig(**{**_STRIPPED, "use_dilation": True}),
    "lite-std": LiteConfig(use_dwsc=False),
    "fcn": FCNConfig(),
}


def get_config(arch: str) -> Config:
    try:
        return ARCHITECTURES[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; choose from {', '.join(ARCHITECTURES)}") from None


def config_to_dict(config: Config) -> dict:
    kind = "fcn" if isinstance(config, FCNConfig) else "lite"
    return {"kind": kind, **{k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(config).items()}}


def config_from_dict(data: dict) -> Config:
    data = dict(data)
    kind = data.pop("kind")
    cls = FCNConfig if kind == "fcn" else LiteConfig
    return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})


# ---------------------------------------------------------------------------
# Plan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvOp:
    name: str
    spec: T.ConvSpec


@dataclass(frozen=True)
class BankOp:
    name: str
    in_channels: int
    out_channels: int
    multivariate: bool
    sizes: tuple[int, ...]


@dataclass(frozen=True)
class Block:
    name: str
    paths: tuple[tuple[Union[ConvOp, BankOp], ...], ...]
    out_channels: int


def _unit(prefix: str, c_in: int, c_out: int, k: int, d: int, use_dwsc: bool) -> tuple[ConvOp, ...]:
    if use_dwsc:
        dw, pw = T.dwsc_specs(c_in, c_out, k, d)
        return ConvOp(f"{prefix}.depthwise", dw), ConvOp(f"{prefix}.pointwise", pw)
    # standard convolution followed by a 1x1 projection
    return (
        ConvOp(f"{prefix}.conv", T.ConvSpec(c_in, c_out, k, d)),
        ConvOp(f"{prefix}.pointwise", T.ConvSpec(c_out, c_out, 1, 1, "pointwise")),
    )


def plan_blocks(config: Config, in_channels: int) -> tuple[Block, ...]:
    if in_channels < 1:
        raise ValueError("in_channels must be >= 1")
    if isinstance(config, FCNConfig):
        blocks, c = [], in_channels
        for i, (f, k) in enumerate(zip(config.filters, config.kernels)):
            op = ConvOp(f"block{i}.conv", T.ConvSpec(c, f, k, 1, use_bias=True))
            blocks.append(Block(f"block{i}", ((op,),), f))
            c = f
        return tuple(blocks)

    if not config.multivariate and in_channels > 1:
        raise ValueError(
            f"univariate LITE expects 1 input channel, got {in_channels}; use the multivariate variant"
        )
    d0, d1, d2 = config.layer_dilations
    paths = []
    width = 0
    for i, k in enumerate(config.branch_kernels):
        prefix = f"block0.branch{i}"
        if config.multivariate:
            paths.append(_unit(prefix, in_channels, config.branch_filters, k, d0, True))
        else:
            paths.append((ConvOp(f"{prefix}.conv", T.ConvSpec(in_channels, config.branch_filters, k, d0)),))
        width += config.branch_filters
    if config.use_custom_filters:
        sizes = (*config.increase_sizes, *config.decrease_sizes, *config.peak_sizes)
        n_out = len(sizes) * (in_channels if config.multivariate else 1)
        paths.append((BankOp("block0.custom", in_channels, n_out, config.multivariate, sizes),))
        width += n_out
    blocks = [Block("block0", tuple(paths), width)]
    c = width
    for i, (k, d) in enumerate(zip(config.deep_kernels, (d1, d2)), start=1):
        blocks.append(Block(f"block{i}", (_unit(f"block{i}", c, config.deep_filters, k, d, config.use_dwsc),), config.deep_filters))
        c = config.deep_filters
    return tuple(blocks)


def feature_width(config: Config, in_channels: int) -> int:
    return plan_blocks(config, in_channels)[-1].out_channels


# ---------------------------------------------------------------------------
# Accounting
# ---------------------------------------------------------------------------


def conv_params(spec: T.ConvSpec) -> int:
    if spec.mode == "depthwise":
        n = spec.in_channels * spec.kernel_size
    else:
        n = spec.in_channels * spec.out_channels * spec.kernel_size
    return n + (spec.out_channels if spec.use_bias else 0)


def conv_mults(spec: T.ConvSpec, length: int) -> int:
    if spec.mode == "depthwise":
        return spec.in_channels * length * spec.kernel_size
    return spec.in_channels * spec.out_channels * length * spec.kernel_size


def dwsc_params(c_in: int, c_out: int, k: int) -> int:
    return c_in * k + c_in * c_out


def standard_params(c_in: int, c_out: int, k: int) -> int:
    return c_in * c_out * k


def dwsc_mults(c_in: int, c_out: int, k: int, length: int) -> int:
    return c_in * length * k + c_in * c_out * length


def standard_mults(c_in: int, c_out: int, k: int, length: int) -> int:
    return c_in * c_out * length * k


def bottleneck_saves(c_in: int, c_out: int, k: int, c_bn: int) -> bool:
    """True iff a ``c_bn``-wide 1x1 bottleneck before a width-``k`` convolution saves parameters.

    Evaluated in integers as ``c_bn * (c_in + c_out*k) < c_in*c_out*k`` so
    the boundary case is decided exactly.
    """
    if min(c_in, c_out, k, c_bn) < 1:
        raise ValueError("all arguments must be positive")
    return c_bn * (c_in + c_out * k) < c_in * c_out * k


def receptive_field(layers) -> int:
    """``1 + sum(d * (k - 1))`` over ``(kernel, dilation)`` pairs."""
    layers = list(layers)
    if not layers:
        raise ValueError("receptive field needs at least one layer")
    return 1 + sum(d * (k - 1) for k, d in layers)


def _learned_ops(block: Block):
    for path in block.paths:
        for op in path:
            if isinstance(op, ConvOp):
                yield op


def rf_layers(config: Config, in_channels: int = 1) -> list[tuple[int, int]]:
    """Widest learned ``(kernel, dilation)`` per block; the frozen bank is ignored."""
    out = []
    for block in plan_blocks(config, in_channels):
        best = max(_learned_ops(block), key=lambda op: op.spec.extent)
        out.append((best.spec.kernel_size, best.spec.dilation))
    return out


def model_receptive_field(config: Config, in_channels: int = 1) -> int:
    return receptive_field(rf_layers(config, in_channels))


@dataclass(frozen=True)
class LayerRow:
    name: str
    kind: str
    in_channels: int
    out_channels: int
    kernel: int
    dilation: int
    params: int
    mults: int
    receptive_field: int


def layer_table(config: Config, in_channels: int = 1, length: int = 1, n_classes: Optional[int] = None) -> list[LayerRow]:
    """One row per convolution, bank, batch norm and classifier, in forward order.

    ``receptive_field`` is the cumulative value after each block.
    """
    rows = []
    rf = 1
    for block in plan_blocks(config, in_channels):
        grow = 0
        for path in block.paths:
            path_grow = 0
            for op in path:
                if isinstance(op, BankOp):
                    rows.append(LayerRow(op.name, "custom (frozen)", op.in_channels, op.out_channels,
                                         max(op.sizes), 1, 0, op.in_channels * length * sum(op.sizes), 0))
                    continue
                s = op.spec
                path_grow += s.dilation * (s.kernel_size - 1)
                rows.append(LayerRow(op.name, s.mode, s.in_channels, s.out_channels, s.kernel_size,
                                     s.dilation, conv_params(s), conv_mults(s, length), 0))
            grow = max(grow, path_grow)
        rf += grow
        c = block.out_channels
        rows.append(LayerRow(f"{block.name}.bn", "batchnorm", c, c, 0, 0, 2 * c, 0, rf))
    if n_classes is not None:
        m = plan_blocks(config, in_channels)[-1].out_channels
        rows.append(LayerRow("head", "dense", m, n_classes, 0, 0, m * n_classes + n_classes, m * n_classes, rf))
    return rows


@dataclass(frozen=True)
class ParamCount:
    layers: dict
    backbone: int
    classifier: int

    @property
    def total(self) -> int:
        return self.backbone + self.classifier


def count_params(obj, in_channels: int = 1, n_classes: Optional[int] = None) -> ParamCount:
    """Trainable parameter counts per layer; accepts a config or a :class:`ModelState`."""
    if isinstance(obj, ModelState):
        obj, in_channels, n_classes = obj.config, obj.in_channels, obj.n_classes
    rows = layer_table(obj, in_channels, 1, n_classes)
    layers = {r.name: r.params for r in rows}
    classifier = layers.get("head", 0)
    return ParamCount(layers, sum(layers.values()) - classifier, classifier)


def count_mults(config: Config, length: int, in_channels: int = 1) -> int:
    """Multiplications of all convolutions (frozen bank included) for one series."""
    if length < 1:
        raise ValueError("length must be >= 1")
    return sum(r.mults for r in layer_table(config, in_channels, length) if r.kind != "batchnorm")


# ---------------------------------------------------------------------------
# Model state
# ---------------------------------------------------------------------------


@dataclass
class ModelState:
    config: Config
    in_channels: int
    n_classes: int
    params: dict = field(repr=False)
    buffers: dict = field(repr=False)
    bank: Optional[FilterBank] = field(default=None, repr=False)
    seed: int = 0

    @property
    def blocks(self) -> tuple[Block, ...]:
        return plan_blocks(self.config, self.in_channels)

    def copy(self) -> "ModelState":
        return ModelState(
            self.config, self.in_channels, self.n_classes,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.buffers.items()},
            self.bank, self.seed,
        )

    def astype(self, dtype) -> "ModelState":
        out = self.copy()
        out.params = {k: v.astype(dtype) for k, v in out.params.items()}
        out.buffers = {k: v.astype(dtype) for k, v in out.buffers.items()}
        return out


def _glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(np.float32)


def build_model(config: Config, in_channels: int, n_classes: int, seed: int = 0) -> ModelState:
    """Instantiate parameters for ``config`` with Glorot-uniform kernels.

    Batch-norm scales start at 1 and shifts at 0; the classifier bias starts at 0.
    """
    if n_classes < 2:
        raise ValueError(f"n_classes must be >= 2, got {n_classes}")
    blocks = plan_blocks(config, in_channels)
    rng = np.random.default_rng(seed)
    params, buffers = {}, {}
    bank = None
    for block in blocks:
        for path in block.paths:
            for op in path:
                if isinstance(op, BankOp):
                    bank = make_bank(config.increase_sizes, config.decrease_sizes, config.peak_sizes)
                    continue
                s = op.spec
                shape = s.weight_shape
                fan_in, fan_out = shape[1] * shape[2], shape[0] * shape[2]
                params[f"{op.name}.weight"] = _glorot(rng, shape, fan_in, fan_out)
                if s.use_bias:
                    params[f"{op.name}.bias"] = np.zeros(s.out_channels, dtype=np.float32)
        c = block.out_channels
        params[f"{block.name}.bn.gamma"] = np.ones(c, dtype=np.float32)
        params[f"{block.name}.bn.beta"] = np.zeros(c, dtype=np.float32)
        buffers[f"{block.name}.bn.running_mean"] = np.zeros(c, dtype=np.float32)
        buffers[f"{block.name}.bn.running_var"] = np.ones(c, dtype=np.float32)
    m = blocks[-1].out_channels
    params["head.weight"] = _glorot(rng, (n_classes, m), m, n_classes)
    params["head.bias"] = np.zeros(n_classes, dtype=np.float32)
    return ModelState(config, in_channels, n_classes, params, buffers, bank, seed)


def build_lite(config: Optional[LiteConfig] = None, in_channels: int = 1, n_classes: int = 2, seed: int = 0) -> ModelState:
    return build_model(config or LiteConfig(), in_channels, n_classes, seed)


def build_fcn(in_channels: int = 1, n_classes: int = 2, seed: int = 0) -> ModelState:
    return build_model(FCNConfig(), in_channels, n_classes, seed)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------


@dataclass
class ForwardCache:
    blocks: list
    features: np.ndarray  # output of the last block, (B, M, L); what GAP averages
    pooled: np.ndarray
    logits: np.ndarray


def _bn_state(model: ModelState, name: str) -> T.BatchNormState:
    return T.BatchNormState(
        model.params[f"{name}.bn.gamma"], model.params[f"{name}.bn.beta"],
        model.buffers[f"{name}.bn.running_mean"], model.buffers[f"{name}.bn.running_var"],
        BN_MOMENTUM, BN_EPS,
    )


def forward(model: ModelState, x: np.ndarray, training: bool = False):
    """Class probabilities ``(B, n_classes)`` and the cache needed by :func:`backward`."""
    if x.ndim != 3 or x.shape[1] != model.in_channels:
        raise T.ShapeError(f"input of shape {x.shape} does not match model expecting (B, {model.in_channels}, L)")
    if x.shape[2] < 1:
        raise T.ShapeError("series length must be >= 1")
    dtype = model.params["head.weight"].dtype
    h = x.astype(dtype, copy=False)
    caches = []
    for block in model.blocks:
        outs, path_inputs = [], []
        for path in block.paths:
            z, inputs = h, []
            for op in path:
                inputs.append(z)
                if isinstance(op, BankOp):
                    z = apply_bank(z, model.bank, op.multivariate)
                else:
                    z = T.conv1d_forward(z, model.params[f"{op.name}.weight"],
                                         model.params.get(f"{op.name}.bias"), op.spec)
            outs.append(z)
            path_inputs.append(inputs)
        z = outs[0] if len(outs) == 1 else np.concatenate(outs, axis=1)
        z, bn_cache = T.batchnorm_forward_cached(z, _bn_state(model, block.name), training)
        h = T.relu(z)
        caches.append((path_inputs, bn_cache, h))
    pooled = T.gap(h)
    logits = T.dense_forward(pooled, model.params["head.weight"], model.params["head.bias"])
    return T.softmax(logits), ForwardCache(caches, h, pooled, logits)


def backward(model: ModelState, cache: ForwardCache, grad_logits: np.ndarray) -> dict:
    """Parameter gradients given the gradient of the loss with respect to the logits."""
    grads = {}
    g_pooled, grads["head.weight"], grads["head.bias"] = T.dense_backward(
        grad_logits, cache.pooled, model.params["head.weight"])
    g = T.gap_backward(g_pooled, cache.features.shape[2])
    blocks = model.blocks
    for index in range(len(blocks) - 1, -1, -1):
        block = blocks[index]
        path_inputs, bn_cache, out = cache.blocks[index]
        g = T.relu_backward(g, out)
        g, grads[f"{block.name}.bn.gamma"], grads[f"{block.name}.bn.beta"] = T.batchnorm_backward(g, bn_cache)
        g_in = None
        offset = 0
        for path, inputs in zip(block.paths, path_inputs):
            width = path[-1].out_channels if isinstance(path[-1], BankOp) else path[-1].spec.out_channels
            gp = g[:, offset : offset + width]
            offset += width
            for pos in range(len(path) - 1, -1, -1):
                op = path[pos]
                need_input = index > 0 or pos > 0
                if isinstance(op, BankOp):
                    # the bank only ever sits on the raw input
                    gp = None
                    break
                gp, gw, gb = T.conv1d_backward(inputs[pos], model.params[f"{op.name}.weight"], gp, op.spec,
                                               need_input_grad=need_input)
                grads[f"{op.name}.weight"] = gw
                if gb is not None:
                    grads[f"{op.name}.bias"] = gb
            if gp is not None and index > 0:
                g_in = gp if g_in is None else g_in + gp
        g = g_in
    return grads


def predict_proba(model: ModelState, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Inference-mode probabilities, evaluated in fixed-size chunks."""
    out = [forward(model, x[i : i + batch_size])[0] for i in range(0, x.shape[0], batch_size)]
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.n_classes), dtype=np.float32)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _model_payload(model: ModelState):
    tensors = {}
    tensors.update(model.params)
    tensors.update(model.buffers)
    if model.bank is not None:
        for k in model.bank.kernels:
            tensors[f"bank.{k.kind}.{k.size}"] = k.coefficients
    meta = {
        "kind": "model",
        "config": config_to_dict(model.config),
        "in_channels": model.in_channels,
        "n_classes": model.n_classes,
        "seed": model.seed,
        "params": list(model.params),
        "buffers": list(model.buffers),
    }
    return tensors, meta


def model_to_bytes(model: ModelState) -> bytes:
    return encode_container(*_model_payload(model))


def _model_from(tensors: dict, meta: dict) -> ModelState:
    if meta.get("kind") != "model":
        raise ValueError("container does not hold a model")
    kernels = []
    for name, arr in tensors.items():
        if name.startswith("bank."):
            _, kind, size = name.split(".")
            arr.flags.writeable = False
            kernels.append(Kernel(kind, int(size), arr))
    return ModelState(
        config_from_dict(meta["config"]), meta["in_channels"], meta["n_classes"],
        {k: tensors[k] for k in meta["params"]},
        {k: tensors[k] for k in meta["buffers"]},
        FilterBank(tuple(kernels)) if kernels else None,
        meta["seed"],
    )


def model_from_bytes(data: bytes) -> ModelState:
    return _model_from(*decode_container(data))


def save_model(path, model: ModelState) -> None:
    save_container(path, *_model_payload(model))


def load_model(path) -> ModelState:
    return _model_from(*load_container(path))
