"""Transformer sentence encoders: the assistant and the bottlenecked,
parameter-recurrent student.

Architecture: token embedding (full V×H table, or V×B lookup plus B→H
projection when bottlenecked) + learned positional embedding + layer norm,
then M distinct post-norm transformer blocks applied r times in sequence
(the same parameter tensors on every repeat), and a masked mean over
positions as the sentence embedding.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, fields

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError
from .rng import stream

INIT_STD = 0.02
ATTN_MASK_BIAS = -1e9


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    hidden: int
    ffn_size: int
    heads: int
    distinct_layers: int
    recurrence_count: int = 1
    bottleneck_enabled: bool = False
    bottleneck_size: int | None = None
    max_positions: int = 16
    layernorm_eps: float = 1e-12

    def __post_init__(self):
        if self.vocab_size < 1 or self.hidden < 1 or self.ffn_size < 1:
            raise ConfigError("vocab_size, hidden and ffn_size must be positive")
        if self.heads < 1 or self.hidden % self.heads != 0:
            raise ConfigError(
                f"hidden {self.hidden} must divide evenly into {self.heads} heads"
            )
        if self.distinct_layers < 1 or self.recurrence_count < 1:
            raise ConfigError("distinct_layers and recurrence_count must be at least 1")
        if self.max_positions < 3:
            raise ConfigError("max_positions must be at least 3")
        if self.bottleneck_enabled:
            if self.bottleneck_size is None or self.bottleneck_size < 1:
                raise ConfigError("bottleneck_enabled requires a positive bottleneck_size")
        elif self.bottleneck_size is not None:
            raise ConfigError("bottleneck_size given but bottleneck_enabled is false")
        if self.layernorm_eps <= 0:
            raise ConfigError("layernorm_eps must be positive")

    @property
    def effective_depth(self) -> int:
        return self.distinct_layers * self.recurrence_count

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "EncoderConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown encoder config fields: {sorted(unknown)}")
        return cls(**raw)


def expected_param_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    """Canonical registry: name -> shape, in construction order."""
    h, f = cfg.hidden, cfg.ffn_size
    shapes: dict[str, tuple[int, ...]] = {}
    if cfg.bottleneck_enabled:
        shapes["embedding.factor"] = (cfg.vocab_size, cfg.bottleneck_size)
        shapes["embedding.proj"] = (cfg.bottleneck_size, h)
    else:
        shapes["embedding.word"] = (cfg.vocab_size, h)
    shapes["embedding.position"] = (cfg.max_positions, h)
    shapes["embedding.ln.scale"] = (h,)
    shapes["embedding.ln.shift"] = (h,)
    for j in range(1, cfg.distinct_layers + 1):
        for name in ("q", "k", "v", "o"):
            shapes[f"layer{j}.attn.{name}.w"] = (h, h)
            shapes[f"layer{j}.attn.{name}.b"] = (h,)
        shapes[f"layer{j}.ln1.scale"] = (h,)
        shapes[f"layer{j}.ln1.shift"] = (h,)
        shapes[f"layer{j}.ffn.w1"] = (h, f)
        shapes[f"layer{j}.ffn.b1"] = (f,)
        shapes[f"layer{j}.ffn.w2"] = (f, h)
        shapes[f"layer{j}.ffn.b2"] = (h,)
        shapes[f"layer{j}.ln2.scale"] = (h,)
        shapes[f"layer{j}.ln2.shift"] = (h,)
    return shapes


def _init_value(name: str, shape: tuple[int, ...], rng, dtype) -> np.ndarray:
    if name.endswith(".scale"):
        return np.ones(shape, dtype=dtype)
    if name.endswith((".shift", ".b", ".b1", ".b2")):
        return np.zeros(shape, dtype=dtype)
    return (rng.standard_normal(shape) * INIT_STD).astype(dtype)


class SentenceEncoder:
    """Named-parameter transformer encoder with recurrent layer reuse."""

    def __init__(self, config: EncoderConfig, params: dict[str, Tensor]):
        expected = expected_param_shapes(config)
        if list(params.keys()) != list(expected.keys()):
            missing = set(expected) - set(params)
            extra = set(params) - set(expected)
            raise ContractError(
                f"parameter registry mismatch: missing {sorted(missing)}, "
                f"unexpected {sorted(extra)}"
            )
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ContractError(
                    f"parameter {name!r} has shape {params[name].shape}, expected {shape}"
                )
        self.config = config
        self.params = params

    # -- construction ------------------------------------------------------

    @classmethod
    def init(cls, config: EncoderConfig, seed: int = 0, dtype=np.float32) -> "SentenceEncoder":
        rng = stream(seed, "encoder-init")
        params = {
            name: Tensor(_init_value(name, shape, rng, dtype), requires_grad=True)
            for name, shape in expected_param_shapes(config).items()
        }
        return cls(config, params)

    def astype(self, dtype) -> "SentenceEncoder":
        params = {
            name: Tensor(p.data.astype(dtype), requires_grad=p.requires_grad)
            for name, p in self.params.items()
        }
        return SentenceEncoder(self.config, params)

    def copy(self) -> "SentenceEncoder":
        params = {
            name: Tensor(p.data.copy(), requires_grad=p.requires_grad)
            for name, p in self.params.items()
        }
        return SentenceEncoder(self.config, params)

    # -- parameter management ---------------------------------------------

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def freeze(self) -> "SentenceEncoder":
        for p in self.params.values():
            p.requires_grad = False
        return self

    def unfreeze(self) -> "SentenceEncoder":
        for p in self.params.values():
            p.requires_grad = True
        return self

    def trainable_params(self) -> dict[str, Tensor]:
        return {k: p for k, p in self.params.items() if p.requires_grad}

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(json.dumps(self.config.to_dict(), sort_keys=True).encode("utf-8"))
        for name, p in self.params.items():
            digest.update(name.encode("utf-8"))
            digest.update(p.data.tobytes())
        return digest.hexdigest()

    # -- forward -----------------------------------------------------------

    def _check_inputs(self, ids: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ids = np.asarray(ids, dtype=np.int64)
        mask = np.asarray(mask)
        if ids.ndim != 2 or mask.shape != ids.shape:
            raise ContractError(
                f"ids and mask must be equal-shape N×L matrices, got {ids.shape} and {mask.shape}"
            )
        if ids.shape[1] > self.config.max_positions:
            raise ContractError(
                f"sequence length {ids.shape[1]} exceeds max_positions "
                f"{self.config.max_positions}"
            )
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ContractError("token id outside vocabulary")
        if (mask.sum(axis=1) == 0).any():
            raise ContractError("a batch row is entirely masked")
        return ids, mask.astype(self.dtype)

    def _embed_tokens(self, ids: np.ndarray) -> Tensor:
        if self.config.bottleneck_enabled:
            narrow = ad.gather_rows(self.params["embedding.factor"], ids)
            return narrow @ self.params["embedding.proj"]
        return ad.gather_rows(self.params["embedding.word"], ids)

    def _embed(self, ids: np.ndarray) -> Tensor:
        tok = self._embed_tokens(ids)
        pos = ad.gather_rows(self.params["embedding.position"], np.arange(ids.shape[1]))
        x = tok + pos
        return ad.layer_norm(
            x,
            self.params["embedding.ln.scale"],
            self.params["embedding.ln.shift"],
            self.config.layernorm_eps,
        )

    def _attention(self, j: int, x: Tensor, key_bias: Tensor) -> Tensor:
        cfg = self.config
        n, length, _ = x.shape
        heads, dh = cfg.heads, cfg.head_dim

        def split(name: str) -> Tensor:
            p = x @ self.params[f"layer{j}.attn.{name}.w"] + self.params[f"layer{j}.attn.{name}.b"]
            return ad.transpose(ad.reshape(p, (n, length, heads, dh)), (0, 2, 1, 3))

        q, k, v = split("q"), split("k"), split("v")
        scores = (q @ ad.transpose(k, (0, 1, 3, 2))) * float(1.0 / np.sqrt(dh))
        weights = ad.softmax_last(scores + key_bias)
        ctx = ad.reshape(ad.transpose(weights @ v, (0, 2, 1, 3)), (n, length, cfg.hidden))
        return ctx @ self.params[f"layer{j}.attn.o.w"] + self.params[f"layer{j}.attn.o.b"]

    def _layer(self, j: int, x: Tensor, key_bias: Tensor) -> Tensor:
        eps = self.config.layernorm_eps
        x = ad.layer_norm(
            x + self._attention(j, x, key_bias),
            self.params[f"layer{j}.ln1.scale"],
            self.params[f"layer{j}.ln1.shift"],
            eps,
        )
        ffn = ad.gelu(x @ self.params[f"layer{j}.ffn.w1"] + self.params[f"layer{j}.ffn.b1"])
        ffn = ffn @ self.params[f"layer{j}.ffn.w2"] + self.params[f"layer{j}.ffn.b2"]
        return ad.layer_norm(
            x + ffn,
            self.params[f"layer{j}.ln2.scale"],
            self.params[f"layer{j}.ln2.shift"],
            eps,
        )

    def _pool(self, x: Tensor, mask: np.ndarray) -> Tensor:
        weights = Tensor(mask[:, :, None])
        counts = Tensor(mask.sum(axis=1, keepdims=True))
        return ad.tsum(x * weights, axis=1) / counts

    def encode(self, ids, mask) -> Tensor:
        """Mean-pooled sentence embeddings, differentiable end to end."""
        ids, mask = self._check_inputs(ids, mask)
        x = self._embed(ids)
        key_bias = Tensor((1.0 - mask)[:, None, None, :] * ATTN_MASK_BIAS)
        for _ in range(self.config.recurrence_count):
            for j in range(1, self.config.distinct_layers + 1):
                x = self._layer(j, x, key_bias)
        return self._pool(x, mask)

    def embedding_output(self, ids, mask, pooled: bool = True) -> Tensor:
        """Token states straight after the embedding stack (projection + norm).

        This is the tap point the second distillation stage aligns. Pooled by
        default; `pooled=False` returns the per-token N×L×H states.
        """
        ids, mask = self._check_inputs(ids, mask)
        x = self._embed(ids)
        if pooled:
            return self._pool(x, mask)
        return x


def init_student_from_assistant(
    assistant: SentenceEncoder, student_cfg: EncoderConfig, seed: int = 0
) -> SentenceEncoder:
    """Build a student whose distinct layers copy the assistant's first M layers.

    The bottleneck tables (when enabled) start fresh; everything copied is a
    deep copy, so later training never mutates the assistant.
    """
    a_cfg = assistant.config
    if student_cfg.hidden != a_cfg.hidden:
        raise ConfigError(
            f"student hidden {student_cfg.hidden} must equal assistant hidden {a_cfg.hidden}"
        )
    if student_cfg.ffn_size != a_cfg.ffn_size or student_cfg.heads != a_cfg.heads:
        raise ConfigError("student ffn_size and heads must match the assistant's")
    if student_cfg.distinct_layers > a_cfg.distinct_layers:
        raise ConfigError(
            f"student needs {student_cfg.distinct_layers} distinct layers but the "
            f"assistant has only {a_cfg.distinct_layers}"
        )
    if student_cfg.max_positions > a_cfg.max_positions:
        raise ConfigError("student max_positions cannot exceed the assistant's")
    if not student_cfg.bottleneck_enabled and student_cfg.vocab_size != a_cfg.vocab_size:
        raise ConfigError("sharing the word table requires equal vocab sizes")

    rng = stream(seed, "student-init")
    dtype = assistant.dtype
    params: dict[str, Tensor] = {}
    for name, shape in expected_param_shapes(student_cfg).items():
        if name in ("embedding.factor", "embedding.proj"):
            value = _init_value(name, shape, rng, dtype)
        elif name == "embedding.position":
            value = assistant.params[name].data[: shape[0]].copy()
        else:
            value = assistant.params[name].data.copy()
        params[name] = Tensor(value, requires_grad=True)
    return SentenceEncoder(student_cfg, params)


def unroll(encoder: SentenceEncoder) -> SentenceEncoder:
    """Physically distinct copy with recurrence flattened into M·r layers.

    Forward arithmetic is identical order, so outputs match the recurrent
    encoder bitwise at equal width.
    """
    cfg = encoder.config
    if cfg.recurrence_count == 1:
        return encoder.copy()
    flat_cfg = EncoderConfig(
        vocab_size=cfg.vocab_size,
        hidden=cfg.hidden,
        ffn_size=cfg.ffn_size,
        heads=cfg.heads,
        distinct_layers=cfg.effective_depth,
        recurrence_count=1,
        bottleneck_enabled=cfg.bottleneck_enabled,
        bottleneck_size=cfg.bottleneck_size,
        max_positions=cfg.max_positions,
        layernorm_eps=cfg.layernorm_eps,
    )
    params: dict[str, Tensor] = {}
    for name, shape in expected_param_shapes(flat_cfg).items():
        if name.startswith("layer"):
            head, rest = name.split(".", 1)
            flat_index = int(head[len("layer"):])
            source_index = (flat_index - 1) % cfg.distinct_layers + 1
            source = encoder.params[f"layer{source_index}.{rest}"]
        else:
            source = encoder.params[name]
        params[name] = Tensor(source.data.copy(), requires_grad=True)
    return SentenceEncoder(flat_cfg, params)
