"""BERT-style encoder, optional seq2seq decoder, heads, checkpoints.

Post-LN residual blocks with learned token/position/segment embeddings.
There is deliberately no post-embedding LayerNorm or pooler layer: the
parameter inventory then matches the documented closed-form count
exactly. The pooled vector is simply the first position's hidden state.

Checkpoints are a single binary file: magic "ANCH", a u32 version, a
length-prefixed JSON config block, then one record per tensor
(length-prefixed name, rank, dims as u64 LE, raw little-endian float32).
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from . import tensor as T
from .errors import CheckpointError, ConfigError

MAGIC = b"ANCH"
FORMAT_VERSION = 1
NEG_INF = -1e9  # additive attention mask for excluded keys


@dataclass
class ModelConfig:
    vocab_size: int
    num_layers: int = 12
    hidden_size: int = 768
    num_heads: int = 12
    ff_size: int = 0  # 0 means 4 * hidden_size
    max_positions: int = 512
    num_segments: int = 2
    dropout_rate: float = 0.1
    decoder_layers: int = 0

    def __post_init__(self):
        if self.ff_size == 0:
            self.ff_size = 4 * self.hidden_size

    def validate(self) -> "ModelConfig":
        if min(self.vocab_size, self.num_layers, self.hidden_size, self.num_heads,
               self.ff_size, self.num_segments) < 1:
            raise ConfigError(f"all size fields must be positive: {self}")
        if self.max_positions < 3:
            raise ConfigError(f"max_positions must be at least 3, got {self.max_positions}")
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"hidden_size {self.hidden_size} not divisible by num_heads {self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.decoder_layers < 0:
            raise ConfigError(f"decoder_layers must be >= 0, got {self.decoder_layers}")
        return self

    def encoder_arch(self) -> tuple:
        return (self.vocab_size, self.num_layers, self.hidden_size, self.num_heads,
                self.ff_size, self.max_positions, self.num_segments)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d).validate()


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, T.Tensor]
    step: int = 0
    opt_state: "object | None" = None  # optim.AdamState when saved with one

    def copy(self) -> "Checkpoint":
        params = {k: T.parameter(v.data.copy()) for k, v in self.params.items()}
        return Checkpoint(ModelConfig(**self.config.to_dict()), params, self.step, None)


def _attention_block(spec: dict, prefix: str, hidden: int) -> None:
    for w in ("wq", "wk", "wv", "wo"):
        spec[f"{prefix}.{w}"] = (hidden, hidden)
    for b in ("bq", "bk", "bv", "bo"):
        spec[f"{prefix}.{b}"] = (hidden,)


def _ln_block(spec: dict, prefix: str, hidden: int) -> None:
    spec[f"{prefix}.gamma"] = (hidden,)
    spec[f"{prefix}.beta"] = (hidden,)


def _ffn_block(spec: dict, prefix: str, hidden: int, ff: int) -> None:
    spec[f"{prefix}.w1"] = (hidden, ff)
    spec[f"{prefix}.b1"] = (ff,)
    spec[f"{prefix}.w2"] = (ff, hidden)
    spec[f"{prefix}.b2"] = (hidden,)


def parameter_spec(cfg: ModelConfig) -> dict[str, tuple]:
    """Every architecture parameter name and shape, in creation order."""
    h, f = cfg.hidden_size, cfg.ff_size
    spec: dict[str, tuple] = {
        "emb.token": (cfg.vocab_size, h),
        "emb.pos": (cfg.max_positions, h),
        "emb.seg": (cfg.num_segments, h),
    }
    for i in range(cfg.num_layers):
        _attention_block(spec, f"enc.{i}.attn", h)
        _ln_block(spec, f"enc.{i}.attn_ln", h)
        _ffn_block(spec, f"enc.{i}.ffn", h, f)
        _ln_block(spec, f"enc.{i}.ffn_ln", h)
    if cfg.decoder_layers > 0:
        spec["dec.emb.token"] = (cfg.vocab_size, h)
        spec["dec.emb.pos"] = (cfg.max_positions, h)
        for i in range(cfg.decoder_layers):
            _attention_block(spec, f"dec.{i}.self_attn", h)
            _ln_block(spec, f"dec.{i}.self_ln", h)
            _attention_block(spec, f"dec.{i}.cross_attn", h)
            _ln_block(spec, f"dec.{i}.cross_ln", h)
            _ffn_block(spec, f"dec.{i}.ffn", h, f)
            _ln_block(spec, f"dec.{i}.ffn_ln", h)
        spec["dec.out.w"] = (h, cfg.vocab_size)
        spec["dec.out.b"] = (cfg.vocab_size,)
    return spec


def mlm_head_spec(cfg: ModelConfig) -> dict[str, tuple]:
    h = cfg.hidden_size
    return {
        "mlm.dense.w": (h, h),
        "mlm.dense.b": (h,),
        "mlm.ln.gamma": (h,),
        "mlm.ln.beta": (h,),
        "mlm.out_bias": (cfg.vocab_size,),
    }


def cls_head_spec(cfg: ModelConfig, num_classes: int) -> dict[str, tuple]:
    return {"cls.w": (cfg.hidden_size, num_classes), "cls.b": (num_classes,)}


def expected_parameter_count(cfg: ModelConfig) -> int:
    """Closed-form size of the architecture inventory (heads excluded)."""
    h, f, v, p, s = (cfg.hidden_size, cfg.ff_size, cfg.vocab_size,
                     cfg.max_positions, cfg.num_segments)
    per_enc_layer = (4 * h * h + 4 * h) + (2 * h * f + f + h) + 4 * h
    total = v * h + p * h + s * h + cfg.num_layers * per_enc_layer
    if cfg.decoder_layers > 0:
        per_dec_layer = 2 * (4 * h * h + 4 * h) + (2 * h * f + f + h) + 6 * h
        total += v * h + p * h + cfg.decoder_layers * per_dec_layer + h * v + v
    return total


def parameter_count(ckpt: Checkpoint, include_heads: bool = False) -> int:
    names = ckpt.params if include_heads else parameter_spec(ckpt.config)
    return sum(int(ckpt.params[name].data.size) for name in names)


def truncated_normal(rng: np.random.Generator, shape: tuple, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) with resampling outside two standard deviations."""
    x = rng.normal(0.0, std, size=shape)
    bad = np.abs(x) > 2 * std
    while bad.any():
        x[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(x) > 2 * std
    return x.astype(np.float32)


def _init_param(rng: np.random.Generator, name: str, shape: tuple) -> np.ndarray:
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "gamma":
        return np.ones(shape, dtype=np.float32)
    if leaf == "beta" or leaf.startswith("b") or leaf == "out_bias":
        return np.zeros(shape, dtype=np.float32)
    return truncated_normal(rng, shape)


def build_model(cfg: ModelConfig, init_seed: int = 0) -> Checkpoint:
    """Materialize the full parameter inventory, deterministically."""
    cfg.validate()
    rng = np.random.default_rng(init_seed)
    params = {name: T.parameter(_init_param(rng, name, shape))
              for name, shape in parameter_spec(cfg).items()}
    return Checkpoint(config=cfg, params=params, step=0)


def ensure_mlm_head(ckpt: Checkpoint, init_seed: int = 0) -> None:
    if "mlm.dense.w" in ckpt.params:
        return
    rng = np.random.default_rng(init_seed)
    for name, shape in mlm_head_spec(ckpt.config).items():
        ckpt.params[name] = T.parameter(_init_param(rng, name, shape))


def ensure_cls_head(ckpt: Checkpoint, num_classes: int, init_seed: int = 0) -> None:
    if num_classes < 2:
        raise ConfigError(f"num_classes must be at least 2, got {num_classes}")
    if "cls.w" in ckpt.params:
        if ckpt.params["cls.w"].shape[1] != num_classes:
            raise ConfigError(
                f"checkpoint classifier head has {ckpt.params['cls.w'].shape[1]} classes, "
                f"requested {num_classes}"
            )
        return
    rng = np.random.default_rng(init_seed)
    for name, shape in cls_head_spec(ckpt.config, num_classes).items():
        ckpt.params[name] = T.parameter(_init_param(rng, name, shape))


@dataclass
class EncoderOutput:
    hidden: T.Tensor  # (batch, length, hidden)
    pooled: T.Tensor  # (batch, hidden): first-position state


def _multi_head_attention(p, prefix: str, q_in, kv_in, add_mask, num_heads: int,
                          drop: float, rng) -> T.Tensor:
    """Standard scaled dot-product attention over num_heads subspaces."""
    batch, q_len, hidden = q_in.shape
    kv_len = kv_in.shape[1]
    dh = hidden // num_heads

    def heads(x, length):
        x = T.reshape(x, (batch, length, num_heads, dh))
        return T.transpose(x, (0, 2, 1, 3))

    q = heads(T.add(T.matmul(q_in, p[f"{prefix}.wq"]), p[f"{prefix}.bq"]), q_len)
    k = heads(T.add(T.matmul(kv_in, p[f"{prefix}.wk"]), p[f"{prefix}.bk"]), kv_len)
    v = heads(T.add(T.matmul(kv_in, p[f"{prefix}.wv"]), p[f"{prefix}.bv"]), kv_len)

    scores = T.scale(T.matmul(q, T.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    if add_mask is not None:
        scores = T.add(scores, T.Tensor(add_mask, dtype=scores.dtype.type))
    probs = T.softmax(scores, axis=-1)
    if drop > 0.0:
        probs = T.dropout(probs, drop, rng)
    ctx = T.matmul(probs, v)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (batch, q_len, hidden))
    out = T.add(T.matmul(ctx, p[f"{prefix}.wo"]), p[f"{prefix}.bo"])
    if drop > 0.0:
        out = T.dropout(out, drop, rng)
    return out


def _ffn(p, prefix: str, x, drop: float, rng) -> T.Tensor:
    h = T.gelu(T.add(T.matmul(x, p[f"{prefix}.w1"]), p[f"{prefix}.b1"]))
    out = T.add(T.matmul(h, p[f"{prefix}.w2"]), p[f"{prefix}.b2"])
    if drop > 0.0:
        out = T.dropout(out, drop, rng)
    return out


def _residual_ln(p, prefix: str, x, sub) -> T.Tensor:
    return T.layer_norm(T.add(x, sub), p[f"{prefix}.gamma"], p[f"{prefix}.beta"])


def _check_train_args(cfg: ModelConfig, train: bool, rng) -> float:
    drop = cfg.dropout_rate if train else 0.0
    if drop > 0.0 and rng is None:
        raise ValueError("training-mode forward with dropout needs an rng")
    return drop


def _prep_ids(cfg: ModelConfig, ids) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise ValueError(f"ids must be (batch, length), got shape {ids.shape}")
    if ids.shape[1] > cfg.max_positions:
        raise ValueError(
            f"sequence length {ids.shape[1]} exceeds max_positions {cfg.max_positions}"
        )
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise ValueError(f"token id out of range for vocab of {cfg.vocab_size}")
    return ids


def encoder_forward(ckpt: Checkpoint, ids, attention_mask=None, segment_ids=None,
                    train: bool = False, rng=None) -> EncoderOutput:
    """Run the encoder stack; masked keys get NEG_INF attention scores."""
    cfg = ckpt.config
    p = ckpt.params
    ids = _prep_ids(cfg, ids)
    batch, length = ids.shape
    if attention_mask is None:
        attention_mask = np.ones_like(ids)
    attention_mask = np.asarray(attention_mask, dtype=np.int64).reshape(batch, length)
    if segment_ids is None:
        segment_ids = np.zeros_like(ids)
    segment_ids = np.asarray(segment_ids, dtype=np.int64).reshape(batch, length)
    drop = _check_train_args(cfg, train, rng)

    h = T.add(
        T.add(T.embedding(p["emb.token"], ids), T.embedding(p["emb.pos"], np.arange(length))),
        T.embedding(p["emb.seg"], segment_ids),
    )
    if drop > 0.0:
        h = T.dropout(h, drop, rng)

    add_mask = ((1 - attention_mask) * NEG_INF).astype(np.float32)[:, None, None, :]
    for i in range(cfg.num_layers):
        attn = _multi_head_attention(p, f"enc.{i}.attn", h, h, add_mask,
                                     cfg.num_heads, drop, rng)
        h = _residual_ln(p, f"enc.{i}.attn_ln", h, attn)
        h = _residual_ln(p, f"enc.{i}.ffn_ln", h, _ffn(p, f"enc.{i}.ffn", h, drop, rng))
    return EncoderOutput(hidden=h, pooled=T.select_position(h, 0))


def decoder_forward(ckpt: Checkpoint, target_ids, encoder_hidden, source_mask,
                    train: bool = False, rng=None) -> T.Tensor:
    """Causal self-attention plus cross-attention; returns (B, T, V) logits."""
    cfg = ckpt.config
    if cfg.decoder_layers < 1:
        raise ConfigError("checkpoint has no decoder (decoder_layers is 0)")
    p = ckpt.params
    ids = _prep_ids(cfg, target_ids)
    batch, t_len = ids.shape
    source_mask = np.asarray(source_mask, dtype=np.int64)
    if source_mask.ndim == 1:
        source_mask = source_mask[None, :]
    drop = _check_train_args(cfg, train, rng)

    h = T.add(T.embedding(p["dec.emb.token"], ids),
              T.embedding(p["dec.emb.pos"], np.arange(t_len)))
    if drop > 0.0:
        h = T.dropout(h, drop, rng)

    causal = np.triu(np.full((t_len, t_len), NEG_INF, dtype=np.float32), k=1)[None, None]
    cross = ((1 - source_mask) * NEG_INF).astype(np.float32)[:, None, None, :]
    for i in range(cfg.decoder_layers):
        self_attn = _multi_head_attention(p, f"dec.{i}.self_attn", h, h, causal,
                                          cfg.num_heads, drop, rng)
        h = _residual_ln(p, f"dec.{i}.self_ln", h, self_attn)
        cross_attn = _multi_head_attention(p, f"dec.{i}.cross_attn", h, encoder_hidden,
                                           cross, cfg.num_heads, drop, rng)
        h = _residual_ln(p, f"dec.{i}.cross_ln", h, cross_attn)
        h = _residual_ln(p, f"dec.{i}.ffn_ln", h, _ffn(p, f"dec.{i}.ffn", h, drop, rng))
    return T.add(T.matmul(h, p["dec.out.w"]), p["dec.out.b"])


def mlm_head(ckpt: Checkpoint, hidden: T.Tensor) -> T.Tensor:
    """Transform then project onto the tied token embedding; (B, L, V)."""
    p = ckpt.params
    if "mlm.dense.w" not in p:
        raise ConfigError("checkpoint has no MLM head; call ensure_mlm_head first")
    t = T.layer_norm(T.gelu(T.add(T.matmul(hidden, p["mlm.dense.w"]), p["mlm.dense.b"])),
                     p["mlm.ln.gamma"], p["mlm.ln.beta"])
    return T.add(T.matmul(t, T.transpose(p["emb.token"], (1, 0))), p["mlm.out_bias"])


def cls_head(ckpt: Checkpoint, pooled: T.Tensor, train: bool = False, rng=None) -> T.Tensor:
    """Linear classification logits over the pooled vector; (B, C)."""
    p = ckpt.params
    if "cls.w" not in p:
        raise ConfigError("checkpoint has no classifier head; call ensure_cls_head first")
    drop = _check_train_args(ckpt.config, train, rng)
    if drop > 0.0:
        pooled = T.dropout(pooled, drop, rng)
    return T.add(T.matmul(pooled, p["cls.w"]), p["cls.b"])


def init_seq2seq_from_encoder(enc_ckpt: Checkpoint, decoder_layers: int,
                              init_seed: int = 0) -> Checkpoint:
    """Adopt encoder weights, freshly initialize a decoder of given depth."""
    if decoder_layers < 1:
        raise ConfigError(f"decoder_layers must be >= 1, got {decoder_layers}")
    cfg = ModelConfig(**{**enc_ckpt.config.to_dict(), "decoder_layers": decoder_layers})
    ckpt = build_model(cfg, init_seed=init_seed)
    enc_names = set(parameter_spec(enc_ckpt.config))
    for name in enc_names:
        ckpt.params[name] = T.parameter(enc_ckpt.params[name].data.copy())
    return ckpt


# ---------------------------------------------------------------- checkpoint io

def _write_block(f, payload: bytes) -> None:
    f.write(struct.pack("<Q", len(payload)))
    f.write(payload)


def _write_tensor(f, name: str, arr: np.ndarray) -> None:
    _write_block(f, name.encode("utf-8"))
    f.write(struct.pack("<Q", arr.ndim))
    for d in arr.shape:
        f.write(struct.pack("<Q", d))
    f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    opt = ckpt.opt_state
    header = {
        "config": ckpt.config.to_dict(),
        "step": ckpt.step,
        "opt_t": None if opt is None else opt.t,
    }
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        _write_block(f, json.dumps(header, sort_keys=True).encode("utf-8"))
        for name in sorted(ckpt.params):
            _write_tensor(f, name, ckpt.params[name].data)
        if opt is not None:
            for name in sorted(opt.m):
                _write_tensor(f, f"opt/m/{name}", opt.m[name])
            for name in sorted(opt.v):
                _write_tensor(f, f"opt/v/{name}", opt.v[name])


def _read_exact(f, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise CheckpointError(f"truncated checkpoint while reading {what}")
    return data


def _read_u64(f, what: str) -> int:
    return struct.unpack("<Q", _read_exact(f, 8, what))[0]


def load_checkpoint(path) -> Checkpoint:
    """Read and validate a checkpoint; any inconsistency is a CheckpointError."""
    with open(path, "rb") as fh:
        blob = fh.read()
    f = io.BytesIO(blob)
    if _read_exact(f, 4, "magic") != MAGIC:
        raise CheckpointError(f"not a checkpoint file: {path}")
    version = struct.unpack("<I", _read_exact(f, 4, "version"))[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    header_len = _read_u64(f, "header length")
    try:
        header = json.loads(_read_exact(f, header_len, "header").decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
        step = int(header["step"])
        opt_t = header.get("opt_t")
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"corrupt checkpoint header: {e}") from None

    arrays: dict[str, np.ndarray] = {}
    while f.tell() < len(blob):
        name_len = _read_u64(f, "tensor name length")
        name = _read_exact(f, name_len, "tensor name").decode("utf-8")
        rank = _read_u64(f, f"rank of {name}")
        if rank > 8:
            raise CheckpointError(f"implausible rank {rank} for tensor {name}")
        shape = tuple(_read_u64(f, f"dims of {name}") for _ in range(rank))
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = _read_exact(f, 4 * count, f"data of {name}")
        if name in arrays:
            raise CheckpointError(f"duplicate tensor {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()

    opt_m = {k[len("opt/m/"):]: v for k, v in arrays.items() if k.startswith("opt/m/")}
    opt_v = {k[len("opt/v/"):]: v for k, v in arrays.items() if k.startswith("opt/v/")}
    weights = {k: v for k, v in arrays.items() if not k.startswith("opt/")}

    required = parameter_spec(cfg)
    allowed = dict(required)
    allowed.update(mlm_head_spec(cfg))
    if "cls.w" in weights:
        w = weights["cls.w"]
        if w.ndim != 2 or w.shape[0] != cfg.hidden_size or w.shape[1] < 2:
            raise CheckpointError(f"classifier head has bad shape {w.shape}")
        allowed.update(cls_head_spec(cfg, int(w.shape[1])))
    for name, shape in required.items():
        if name not in weights:
            raise CheckpointError(f"missing required parameter {name}")
    for name, arr in weights.items():
        if name not in allowed:
            raise CheckpointError(f"unknown tensor {name} in checkpoint")
        if arr.shape != allowed[name]:
            raise CheckpointError(
                f"parameter {name} has shape {arr.shape}, config implies {allowed[name]}"
            )

    params = {name: T.parameter(arr) for name, arr in weights.items()}
    ckpt = Checkpoint(config=cfg, params=params, step=step)
    if opt_m or opt_v or opt_t is not None:
        if opt_t is None or set(opt_m) != set(opt_v):
            raise CheckpointError("incomplete optimizer state in checkpoint")
        for name, arr in list(opt_m.items()) + list(opt_v.items()):
            if name not in params or arr.shape != params[name].data.shape:
                raise CheckpointError(f"optimizer state mismatch for {name}")
        from .optim import AdamState

        ckpt.opt_state = AdamState(t=int(opt_t), m=opt_m, v=opt_v)
    return ckpt
