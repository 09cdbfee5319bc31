"""1D-CNN front end + bidirectional selective-SSM encoder for 12-lead ECG.

Data flow for one record with the default configuration::

    [12, 8192] --conv1d(k=16, s=8)--> [384, 1023] --transpose--> [1023, 384]
    --append class token--> [1024, 384] --+ positional--> 16 x vim_block
    --> layer_norm --> class-token row --> linear --> [n_classes] logits

Every function also accepts a leading batch axis.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .ssm import SsmParams, selective_parameterize, selective_scan
from .tensor import ShapeError, Tensor


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 12
    seq_len: int = 8192
    d_model: int = 384
    conv_kernel: int = 16
    conv_stride: int = 8
    conv_padding: int = 0
    n_blocks: int = 16
    d_state: int = 16
    expand: int = 2
    d_conv: int = 4
    n_classes: int = 26
    norm_eps: float = 1e-5

    def __post_init__(self):
        for f in fields(self):
            if f.name != "norm_eps" and getattr(self, f.name) < (0 if f.name == "conv_padding" else 1):
                raise ValueError(f"ModelConfig.{f.name} must be positive")
        if self.seq_len + 2 * self.conv_padding < self.conv_kernel:
            raise ValueError("seq_len shorter than the front-end kernel")

    @property
    def token_len(self) -> int:
        return (self.seq_len + 2 * self.conv_padding - self.conv_kernel) // self.conv_stride + 1

    @property
    def n_tokens(self) -> int:
        return self.token_len + 1

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        types = {f.name: f.type for f in fields(cls)}
        kw = {}
        for k, v in d.items():
            if k not in types:
                raise KeyError(f"unknown ModelConfig key {k!r}")
            kw[k] = float(v) if types[k] in ("float", float) else int(v)
        return cls(**kw)


def parameter_count(cfg: ModelConfig) -> int:
    """Closed-form number of learned scalars.

    front end   D*C_in*K + D
    tokens      D (class token) + (T+1)*D (positional)
    per block   2D (norm) + 2*Di*D (in_proj) + Di*D (out_proj)
                + 2 * [Di*K_b + Di (causal conv) + Di*Di + Di (delta) + 2*Di*N (B, C) + Di*N (A_log)]
    head        2D (final norm) + D*n_classes + n_classes
    """
    D, Di, N = cfg.d_model, cfg.d_inner, cfg.d_state
    direction = Di * cfg.d_conv + Di + Di * Di + Di + 2 * Di * N + Di * N
    block = 2 * D + 2 * Di * D + Di * D + 2 * direction
    return (
        D * cfg.in_channels * cfg.conv_kernel
        + D
        + D
        + cfg.n_tokens * D
        + cfg.n_blocks * block
        + 2 * D
        + D * cfg.n_classes
        + cfg.n_classes
    )


def _param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def _uniform(rng, fan_in, shape) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return _param(rng.uniform(-bound, bound, size=shape))


@dataclass
class Direction:
    """One scan direction: causal depthwise conv + selective SSM."""

    conv_weight: Tensor  # [Di, K_b]
    conv_bias: Tensor  # [Di]
    ssm: SsmParams

    def tensors(self) -> dict[str, Tensor]:
        out = {"conv_weight": self.conv_weight, "conv_bias": self.conv_bias}
        out.update(self.ssm.tensors())
        return out


@dataclass
class VimBlock:
    norm_gain: Tensor
    norm_bias: Tensor
    in_proj: Tensor  # [D, 2*Di]: value stream then gate stream
    fwd: Direction
    bwd: Direction
    out_proj: Tensor  # [Di, D]

    def tensors(self) -> dict[str, Tensor]:
        out = {"norm_gain": self.norm_gain, "norm_bias": self.norm_bias, "in_proj": self.in_proj}
        out.update({f"fwd.{k}": v for k, v in self.fwd.tensors().items()})
        out.update({f"bwd.{k}": v for k, v in self.bwd.tensors().items()})
        out["out_proj"] = self.out_proj
        return out


def _init_direction(cfg: ModelConfig, rng) -> Direction:
    Di, K = cfg.d_inner, cfg.d_conv
    return Direction(
        conv_weight=_uniform(rng, K, (Di, K)),
        conv_bias=_uniform(rng, K, (Di,)),
        ssm=SsmParams.init(Di, cfg.d_state, rng),
    )


def _init_block(cfg: ModelConfig, rng) -> VimBlock:
    D, Di = cfg.d_model, cfg.d_inner
    return VimBlock(
        norm_gain=_param(np.ones(D)),
        norm_bias=_param(np.zeros(D)),
        in_proj=_uniform(rng, D, (D, 2 * Di)),
        fwd=_init_direction(cfg, rng),
        bwd=_init_direction(cfg, rng),
        out_proj=_uniform(rng, Di, (Di, D)),
    )


class Model:
    """Parameter container plus the forward pass."""

    def __init__(self, config: ModelConfig, params: dict[str, Tensor]):
        self.config = config
        self._params = params
        expected = _parameter_names(config)
        if list(params) != expected:
            missing = sorted(set(expected) - set(params))
            extra = sorted(set(params) - set(expected))
            raise KeyError(f"parameter set mismatch; missing={missing[:5]} extra={extra[:5]}")
        for name, p in params.items():
            want = _parameter_shape(config, name)
            if p.shape != want:
                raise ShapeError(f"parameter {name} has shape {p.shape}, config expects {want}")
        self.blocks = [_block_view(params, i) for i in range(config.n_blocks)]

    @classmethod
    def init(cls, config: ModelConfig, seed) -> "Model":
        rng = T.make_rng(seed)
        D, C = config.d_model, config.in_channels
        fan_in = C * config.conv_kernel
        params = {
            "embed.conv_weight": _uniform(rng, fan_in, (D, C, config.conv_kernel)),
            "embed.conv_bias": _uniform(rng, fan_in, (D,)),
            "embed.cls_token": _param(rng.normal(0.0, 0.02, size=D)),
            "embed.pos_embed": _param(rng.normal(0.0, 0.02, size=(config.n_tokens, D))),
        }
        for i in range(config.n_blocks):
            for k, v in _init_block(config, rng).tensors().items():
                params[f"blocks.{i}.{k}"] = v
        params["head.norm_gain"] = _param(np.ones(D))
        params["head.norm_bias"] = _param(np.zeros(D))
        params["head.weight"] = _uniform(rng, D, (D, config.n_classes))
        params["head.bias"] = _uniform(rng, D, (config.n_classes,))
        return cls(config, params)

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self._params)

    def parameters(self) -> list[Tensor]:
        return list(self._params.values())

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self._params.values())

    def __call__(self, signal, probe: dict | None = None) -> Tensor:
        return forward(signal, self, probe)


def _parameter_names(cfg: ModelConfig) -> list[str]:
    names = ["embed.conv_weight", "embed.conv_bias", "embed.cls_token", "embed.pos_embed"]
    direction = ["conv_weight", "conv_bias", "A_log", "delta_weight", "delta_bias", "x_proj"]
    per_block = (
        ["norm_gain", "norm_bias", "in_proj"]
        + [f"fwd.{k}" for k in direction]
        + [f"bwd.{k}" for k in direction]
        + ["out_proj"]
    )
    for i in range(cfg.n_blocks):
        names += [f"blocks.{i}.{k}" for k in per_block]
    return names + ["head.norm_gain", "head.norm_bias", "head.weight", "head.bias"]


def _parameter_shape(cfg: ModelConfig, name: str) -> tuple[int, ...]:
    D, Di, N, C = cfg.d_model, cfg.d_inner, cfg.d_state, cfg.in_channels
    leaf = name.rsplit(".", 1)[-1]
    if name.startswith("embed."):
        return {
            "conv_weight": (D, C, cfg.conv_kernel),
            "conv_bias": (D,),
            "cls_token": (D,),
            "pos_embed": (cfg.n_tokens, D),
        }[leaf]
    if name.startswith("head."):
        return {"norm_gain": (D,), "norm_bias": (D,), "weight": (D, cfg.n_classes), "bias": (cfg.n_classes,)}[leaf]
    return {
        "norm_gain": (D,),
        "norm_bias": (D,),
        "in_proj": (D, 2 * Di),
        "out_proj": (Di, D),
        "conv_weight": (Di, cfg.d_conv),
        "conv_bias": (Di,),
        "A_log": (Di, N),
        "delta_weight": (Di, Di),
        "delta_bias": (Di,),
        "x_proj": (Di, 2 * N),
    }[leaf]


def _block_view(params: dict[str, Tensor], i: int) -> VimBlock:
    p = lambda k: params[f"blocks.{i}.{k}"]  # noqa: E731

    def direction(tag):
        return Direction(
            p(f"{tag}.conv_weight"),
            p(f"{tag}.conv_bias"),
            SsmParams(p(f"{tag}.A_log"), p(f"{tag}.delta_weight"), p(f"{tag}.delta_bias"), p(f"{tag}.x_proj")),
        )

    return VimBlock(p("norm_gain"), p("norm_bias"), p("in_proj"), direction("fwd"), direction("bwd"), p("out_proj"))


# ---------------------------------------------------------------- forward pieces


def embed(signal, model: Model, probe: dict | None = None) -> Tensor:
    """``[..., 12, L] -> [..., T+1, D]``: conv tokens, class token last, + positions."""
    cfg = model.config
    x = T.as_tensor(signal)
    if x.ndim not in (2, 3) or x.shape[-2:] != (cfg.in_channels, cfg.seq_len):
        raise ShapeError(f"expected [..., {cfg.in_channels}, {cfg.seq_len}] signal, got {x.shape}")
    feats = T.conv1d(
        x, model["embed.conv_weight"], model["embed.conv_bias"], cfg.conv_stride, cfg.conv_padding
    )
    tokens = T.transpose(feats, (*range(feats.ndim - 2), feats.ndim - 1, feats.ndim - 2))
    cls = T.reshape(model["embed.cls_token"], (1, cfg.d_model))
    if tokens.ndim == 3:
        cls = T.broadcast_to(cls, (tokens.shape[0], 1, cfg.d_model))
    tokens = T.concat([tokens, cls], axis=-2)
    out = tokens + model["embed.pos_embed"]
    if probe is not None:
        probe["conv"] = feats.shape
        probe["tokens"] = out.shape
    return out


def causal_depthwise_conv(x, weight, bias) -> Tensor:
    """Per-channel causal conv over the sequence axis of ``x[..., L, Di]``."""
    x = T.as_tensor(x)
    k = weight.shape[-1]
    L = x.shape[-2]
    pad = T.zeros((*x.shape[:-2], k - 1, x.shape[-1]))
    xp = T.concat([pad, x], axis=-2)
    out = bias
    for j in range(k):
        out = out + xp[..., j : j + L, :] * weight[:, j]
    return out


def scan_direction(x, d: Direction) -> Tensor:
    """conv -> silu -> input-dependent (delta, B, C) -> selective scan."""
    xc = T.silu(causal_depthwise_conv(x, d.conv_weight, d.conv_bias))
    delta, B, C = selective_parameterize(xc, d.ssm)
    return selective_scan(xc, delta, d.ssm.A(), B, C)


def vim_block(tokens, block: VimBlock, eps: float = 1e-5, probe: dict | None = None) -> Tensor:
    """Bidirectional block; returns ``tokens + mixer(norm(tokens))``.

    The two scan outputs are summed without halving.
    """
    residual = T.as_tensor(tokens)
    x = T.layer_norm(residual, block.norm_gain, block.norm_bias, eps)
    xz = x @ block.in_proj
    di = block.out_proj.shape[0]
    value, gate = xz[..., :di], xz[..., di:]
    y_fwd = scan_direction(value, block.fwd)
    y_bwd = T.flip(scan_direction(T.flip(value, axis=-2), block.bwd), axis=-2)
    combined = y_fwd + y_bwd
    if probe is not None:
        probe.update(y_fwd=y_fwd, y_bwd=y_bwd, combined=combined)
    out = (combined * T.silu(gate)) @ block.out_proj
    return residual + out


def forward(signal, model: Model, probe: dict | None = None) -> Tensor:
    """Raw logits, ``[n_classes]`` for one record or ``[B, n_classes]`` for a batch."""
    cfg = model.config
    h = embed(signal, model, probe)
    for block in model.blocks:
        h = vim_block(h, block, cfg.norm_eps)
    h = T.layer_norm(h, model["head.norm_gain"], model["head.norm_bias"], cfg.norm_eps)
    cls = h[..., -1, :]
    logits = cls @ model["head.weight"] if cls.ndim == 2 else T.reshape(
        T.reshape(cls, (1, cfg.d_model)) @ model["head.weight"], (cfg.n_classes,)
    )
    logits = logits + model["head.bias"]
    if probe is not None:
        probe["logits"] = logits.shape
    return logits


def bce_loss(logits, labels) -> Tensor:
    """Mean binary cross entropy over all entries, evaluated from logits."""
    labels = np.asarray(T.as_tensor(labels).data)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be binary")
    return T.mean(T.bce_with_logits(logits, labels))
