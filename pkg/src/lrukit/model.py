"""Deep sequence model: encoder, residual recurrent blocks, pooling head.

Architecture (pre-norm residual):

    z0   = encode(u)                        # position-wise linear
    z_i  = z_{i−1} + Dropout(GLU(LRU(Norm(z_{i−1}))))
    out  = head(pool(z_depth))              # mean or last-step pooling

Norm is per-timestep layer normalization over the feature axis (learnable
scale/shift); GLU(z) = (z·W1) ⊙ sigmoid(z·W2), with a variant that drops
the value projection W1.  Dropout uses inverted scaling so evaluation
needs no rescaling.  Every stage carries an explicit hand-written
vector-Jacobian product; no autodiff framework is involved.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .gradients import lru_backward
from .initializers import (
    LruParams,
    RingConfig,
    glorot_matrix,
    lru_init,
)
from .recurrence import lru_forward
from .seeding import split

__all__ = [
    "ModelConfig",
    "BlockParams",
    "ModelParams",
    "layer_norm",
    "layer_norm_backward",
    "glu",
    "glu_backward",
    "dropout_mask",
    "block_forward",
    "block_backward",
    "model_init",
    "model_forward",
    "model_backward",
]

_LN_EPS = 1e-6

_POOLINGS = ("mean", "last")


@dataclass(frozen=True)
class ModelConfig:
    """Shape and regularization hyper-parameters of the deep model."""

    depth: int
    width: int
    state_dim: int
    in_features: int
    out_features: int
    dropout: float = 0.0
    ring: RingConfig = field(default_factory=RingConfig)
    pooling: str = "mean"
    glu_variant: bool = False
    b_scale: float = 2.0

    def __post_init__(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        for name in ("width", "state_dim", "in_features", "out_features"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.pooling not in _POOLINGS:
            raise ValueError(f"pooling must be one of {_POOLINGS}, got {self.pooling!r}")
        if self.b_scale <= 0:
            raise ValueError(f"b_scale must be positive, got {self.b_scale}")

    def to_dict(self) -> dict[str, Any]:
        out = {
            "depth": self.depth,
            "width": self.width,
            "state_dim": self.state_dim,
            "in_features": self.in_features,
            "out_features": self.out_features,
            "dropout": self.dropout,
            "ring": self.ring.to_dict(),
            "pooling": self.pooling,
            "glu_variant": self.glu_variant,
            "b_scale": self.b_scale,
        }
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelConfig":
        kwargs = dict(data)
        if "ring" in kwargs and isinstance(kwargs["ring"], dict):
            kwargs["ring"] = RingConfig(**kwargs["ring"])
        return cls(**kwargs)


@dataclass
class BlockParams:
    """Learnable tensors of one residual block.

    ``glu_w1`` is None when the block uses the gate-only GLU variant
    (output = z ⊙ sigmoid(z·W2)).
    """

    lru: LruParams
    glu_w2: np.ndarray
    glu_w1: np.ndarray | None
    norm_scale: np.ndarray
    norm_shift: np.ndarray

    def validate(self) -> None:
        self.lru.validate()
        h = self.lru.width
        if self.glu_w2.shape != (h, h):
            raise ValueError(f"glu_w2 must be ({h}, {h}), got {self.glu_w2.shape}")
        if self.glu_w1 is not None and self.glu_w1.shape != (h, h):
            raise ValueError(f"glu_w1 must be ({h}, {h}), got {self.glu_w1.shape}")
        if self.norm_scale.shape != (h,) or self.norm_shift.shape != (h,):
            raise ValueError("norm scale/shift must have shape (width,)")
        arrays = [self.glu_w2, self.norm_scale, self.norm_shift]
        if self.glu_w1 is not None:
            arrays.append(self.glu_w1)
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise ValueError("block parameters must be finite")


@dataclass
class ModelParams:
    """All learnable tensors of the deep model."""

    encoder_w: np.ndarray
    encoder_b: np.ndarray
    blocks: list[BlockParams]
    head_w: np.ndarray
    head_b: np.ndarray

    def to_dict(self) -> dict[str, np.ndarray]:
        """Flatten into dotted names, e.g. ``blocks.0.lru.nu_log``."""
        flat: dict[str, np.ndarray] = {
            "encoder.w": self.encoder_w,
            "encoder.b": self.encoder_b,
        }
        for i, blk in enumerate(self.blocks):
            prefix = f"blocks.{i}."
            for name, value in blk.lru.to_dict().items():
                flat[prefix + "lru." + name] = value
            if blk.glu_w1 is not None:
                flat[prefix + "glu_w1"] = blk.glu_w1
            flat[prefix + "glu_w2"] = blk.glu_w2
            flat[prefix + "norm_scale"] = blk.norm_scale
            flat[prefix + "norm_shift"] = blk.norm_shift
        flat["head.w"] = self.head_w
        flat["head.b"] = self.head_b
        return flat

    @classmethod
    def from_dict(cls, flat: dict[str, np.ndarray]) -> "ModelParams":
        indices = sorted(
            {
                int(m.group(1))
                for k in flat
                if (m := re.match(r"blocks\.(\d+)\.", k))
            }
        )
        if indices != list(range(len(indices))):
            raise ValueError(f"block indices must be contiguous, got {indices}")
        blocks = []
        for i in indices:
            prefix = f"blocks.{i}."
            lru = LruParams.from_dict(
                {
                    name: flat[prefix + "lru." + name]
                    for name in LruParams.field_names()
                }
            )
            blocks.append(
                BlockParams(
                    lru=lru,
                    glu_w2=flat[prefix + "glu_w2"],
                    glu_w1=flat.get(prefix + "glu_w1"),
                    norm_scale=flat[prefix + "norm_scale"],
                    norm_shift=flat[prefix + "norm_shift"],
                )
            )
        return cls(
            encoder_w=flat["encoder.w"],
            encoder_b=flat["encoder.b"],
            blocks=blocks,
            head_w=flat["head.w"],
            head_b=flat["head.b"],
        )


def layer_norm(
    z: np.ndarray, scale: np.ndarray, shift: np.ndarray
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Per-timestep normalization over the feature axis."""
    mean = z.mean(axis=-1, keepdims=True)
    centered = z - mean
    std = np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True) + _LN_EPS)
    zhat = centered / std
    out = scale * zhat + shift
    return out, {"zhat": zhat, "std": std}


def layer_norm_backward(
    cache: dict[str, np.ndarray], scale: np.ndarray, dy: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (dz, dscale, dshift)."""
    zhat, std = cache["zhat"], cache["std"]
    dscale = np.sum(dy * zhat, axis=tuple(range(dy.ndim - 1)))
    dshift = np.sum(dy, axis=tuple(range(dy.ndim - 1)))
    dzhat = dy * scale
    dz = (
        dzhat
        - dzhat.mean(axis=-1, keepdims=True)
        - zhat * np.mean(dzhat * zhat, axis=-1, keepdims=True)
    ) / std
    return dz, dscale, dshift


def glu(
    z: np.ndarray, w2: np.ndarray, w1: np.ndarray | None
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Gated linear unit; ``w1=None`` selects the gate-only variant."""
    gate = 1.0 / (1.0 + np.exp(-(z @ w2)))
    value = z if w1 is None else z @ w1
    return value * gate, {"z": z, "gate": gate, "value": value}


def glu_backward(
    cache: dict[str, np.ndarray],
    w2: np.ndarray,
    w1: np.ndarray | None,
    dy: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Returns (dz, dw2, dw1); dw1 is None for the gate-only variant."""
    z, gate, value = cache["z"], cache["gate"], cache["value"]
    dvalue = dy * gate
    dgate_pre = dy * value * gate * (1.0 - gate)
    batch_axes = tuple(range(z.ndim - 1))
    dw2 = np.tensordot(z, dgate_pre, axes=(batch_axes, batch_axes))
    dz = dgate_pre @ w2.T
    if w1 is None:
        dz += dvalue
        dw1 = None
    else:
        dw1 = np.tensordot(z, dvalue, axes=(batch_axes, batch_axes))
        dz += dvalue @ w1.T
    return dz, dw2, dw1


def dropout_mask(
    shape: tuple[int, ...], rate: float, rng: np.random.Generator
) -> np.ndarray:
    """Inverted-scaling dropout mask: E[mask] = 1 elementwise."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if rate == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= rate) / (1.0 - rate)


def block_forward(
    block: BlockParams,
    u: np.ndarray,
    *,
    dropout: float = 0.0,
    train: bool = False,
    rng: np.random.Generator | None = None,
    mode: str = "parallel",
    threads: int = 1,
) -> tuple[np.ndarray, dict[str, Any]]:
    """Residual block: u + Dropout(GLU(LRU(Norm(u)))).

    Returns (output, cache); the cache feeds ``block_backward``.
    Dropout is applied only when ``train`` is True and ``dropout > 0``
    (an rng is then required).
    """
    if u.shape[-1] != block.lru.width:
        raise ValueError(
            f"feature dim {u.shape[-1]} does not match block width {block.lru.width}"
        )
    normed, ln_cache = layer_norm(u, block.norm_scale, block.norm_shift)
    mixed, x = lru_forward(block.lru, normed, mode=mode, threads=threads)
    gated, glu_cache = glu(mixed, block.glu_w2, block.glu_w1)
    if train and dropout > 0.0:
        if rng is None:
            raise ValueError("training with dropout > 0 requires an rng")
        mask = dropout_mask(gated.shape, dropout, rng)
        dropped = gated * mask
    else:
        mask = None
        dropped = gated
    cache = {
        "ln": ln_cache,
        "normed": normed,
        "x": x,
        "glu": glu_cache,
        "mask": mask,
        "mode": mode,
        "threads": threads,
    }
    return u + dropped, cache


def block_backward(
    block: BlockParams, cache: dict[str, Any], dy: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Returns (gradients keyed by block-local dotted names, du)."""
    dgated = dy if cache["mask"] is None else dy * cache["mask"]
    dmixed, dw2, dw1 = glu_backward(cache["glu"], block.glu_w2, block.glu_w1, dgated)
    lru_grads, dnormed = lru_backward(
        block.lru,
        cache["normed"],
        cache["x"],
        dmixed,
        mode=cache["mode"],
        threads=cache["threads"],
    )
    dnorm_in, dscale, dshift = layer_norm_backward(
        cache["ln"], block.norm_scale, dnormed
    )
    grads = {"lru." + k: v for k, v in lru_grads.to_dict().items()}
    grads["glu_w2"] = dw2
    if dw1 is not None:
        grads["glu_w1"] = dw1
    grads["norm_scale"] = dscale
    grads["norm_shift"] = dshift
    return grads, dy + dnorm_in


def model_init(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """Draw all model parameters: linear maps Glorot, norms identity."""
    enc_rng, head_rng, *block_rngs = split(rng, 2 + config.depth)
    h = config.width
    blocks = []
    for block_rng in block_rngs:
        lru_rng, w1_rng, w2_rng = split(block_rng, 3)
        lru = lru_init(
            config.ring, (h, config.state_dim, h), lru_rng, b_scale=config.b_scale
        )
        glu_w1 = None if config.glu_variant else glorot_matrix(h, h, w1_rng)
        blocks.append(
            BlockParams(
                lru=lru,
                glu_w2=glorot_matrix(h, h, w2_rng),
                glu_w1=glu_w1,
                norm_scale=np.ones(h),
                norm_shift=np.zeros(h),
            )
        )
    return ModelParams(
        encoder_w=glorot_matrix(config.in_features, h, enc_rng),
        encoder_b=np.zeros(h),
        blocks=blocks,
        head_w=glorot_matrix(h, config.out_features, head_rng),
        head_b=np.zeros(config.out_features),
    )


def _pool(z: np.ndarray, pooling: str) -> np.ndarray:
    if pooling == "mean":
        return z.mean(axis=1)
    return z[:, -1]


def model_forward(
    config: ModelConfig,
    params: ModelParams,
    u: np.ndarray,
    *,
    train: bool = False,
    rng: np.random.Generator | None = None,
    mode: str = "parallel",
    threads: int = 1,
    return_cache: bool = False,
):
    """Full model: encode → residual blocks → pool over time → head.

    ``u`` has shape (batch, L, in_features) — a single (L, in_features)
    sequence is promoted to batch 1.  Returns (batch, out_features), plus
    the backward cache when ``return_cache`` is True.
    """
    u = np.asarray(u, dtype=np.float64)
    squeeze = u.ndim == 2
    if squeeze:
        u = u[None]
    if u.ndim != 3 or u.shape[-1] != config.in_features:
        raise ValueError(
            f"inputs must be (batch, L, {config.in_features}), got {u.shape}"
        )
    if len(params.blocks) != config.depth:
        raise ValueError(
            f"params carry {len(params.blocks)} blocks but config.depth is "
            f"{config.depth}"
        )
    z = u @ params.encoder_w + params.encoder_b
    block_caches = []
    for block in params.blocks:
        z, cache = block_forward(
            block,
            z,
            dropout=config.dropout,
            train=train,
            rng=rng,
            mode=mode,
            threads=threads,
        )
        block_caches.append(cache)
    pooled = _pool(z, config.pooling)
    out = pooled @ params.head_w + params.head_b
    if squeeze:
        out = out[0]
    if not return_cache:
        return out
    cache = {
        "u": u,
        "blocks": block_caches,
        "pooled": pooled,
        "length": z.shape[1],
        "squeeze": squeeze,
    }
    return out, cache


def model_backward(
    config: ModelConfig,
    params: ModelParams,
    cache: dict[str, Any],
    d_out: np.ndarray,
) -> dict[str, np.ndarray]:
    """Gradients for every entry of ``params.to_dict()`` given d(loss)/d(out)."""
    d_out = np.asarray(d_out, dtype=np.float64)
    if cache["squeeze"]:
        d_out = d_out[None]
    grads: dict[str, np.ndarray] = {
        "head.w": cache["pooled"].T @ d_out,
        "head.b": d_out.sum(axis=0),
    }
    d_pooled = d_out @ params.head_w.T
    length = cache["length"]
    batch = d_pooled.shape[0]
    dz = np.zeros((batch, length, params.head_w.shape[0]))
    if config.pooling == "mean":
        dz += d_pooled[:, None, :] / length
    else:
        dz[:, -1] = d_pooled
    for i in range(config.depth - 1, -1, -1):
        block_grads, dz = block_backward(params.blocks[i], cache["blocks"][i], dz)
        for name, value in block_grads.items():
            grads[f"blocks.{i}.{name}"] = value
    u = cache["u"]
    grads["encoder.w"] = np.tensordot(u, dz, axes=([0, 1], [0, 1]))
    grads["encoder.b"] = dz.sum(axis=(0, 1))
    return grads
