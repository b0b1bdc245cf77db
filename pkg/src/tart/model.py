"""Transformer-encoder regressor: config, forward pass, loss, Adam, checkpoints.

Pre-layer-norm encoder blocks (masked multi-head self-attention + GELU
feed-forward, both residual), masked mean pooling over real tokens, and
a single linear head mapping to the four performance targets.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MODEL_MAGIC = b"TARTMDL"
MODEL_FORMAT_VERSION = 1

ATTENTION_MASK_BIAS = -1e30


class ModelError(ValueError):
    pass


class ShapeMismatch(ModelError):
    pass


class MaskEmpty(ModelError):
    def __init__(self, sample: int):
        super().__init__(f"sample {sample} has no real tokens to pool over")


class NonFiniteActivation(ModelError):
    def __init__(self, layer: str):
        self.layer = layer
        super().__init__(f"non-finite activation after {layer}")


class StatsDegenerate(ModelError):
    def __init__(self, target_index: int):
        super().__init__(f"target column {target_index} has zero standard deviation")


class VersionMismatch(ModelError):
    pass


class CorruptFile(ModelError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    n_layer: int = 6
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 256
    dropout_p: float = 0.1
    input_width: int = 11
    n_targets: int = 4
    pooling: str = "mean"

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ShapeMismatch(
                f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ModelError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.pooling not in ("mean", "cls"):
            raise ModelError(f"unknown pooling: {self.pooling!r}")


@dataclass
class PredictorModel:
    config: EncoderConfig
    params: dict  # name -> Tensor


def parameter_names(config: EncoderConfig) -> list:
    names = ["input_proj.w", "input_proj.b"]
    for i in range(config.n_layer):
        for part in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"):
            names.append(f"layer{i}.attn.{part}")
        names += [f"layer{i}.ln1.g", f"layer{i}.ln1.b",
                  f"layer{i}.ln2.g", f"layer{i}.ln2.b",
                  f"layer{i}.ffn.w1", f"layer{i}.ffn.b1",
                  f"layer{i}.ffn.w2", f"layer{i}.ffn.b2"]
    names += ["head.w", "head.b"]
    if config.pooling == "cls":
        names.append("cls")
    return names


def parameter_count(config: EncoderConfig) -> int:
    """Closed-form parameter total for a config."""
    c, d, ff, t = config.input_width, config.d_model, config.d_ff, config.n_targets
    per_layer = 4 * (d * d + d) + 4 * d + (d * ff + ff) + (ff * d + d)
    total = (c * d + d) + config.n_layer * per_layer + (d * t + t)
    if config.pooling == "cls":
        total += d
    return total


def _init_matrix(rng, fan_in: int, fan_out: int) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def init_model(config: EncoderConfig, seed: int) -> PredictorModel:
    rng = np.random.default_rng(seed)
    d, ff = config.d_model, config.d_ff
    params = {}

    def mat(name, fi, fo):
        params[name] = Tensor(_init_matrix(rng, fi, fo))

    def vec(name, size, fill=0.0):
        params[name] = Tensor(np.full(size, fill, dtype=np.float64))

    mat("input_proj.w", config.input_width, d)
    vec("input_proj.b", d)
    for i in range(config.n_layer):
        for part in ("wq", "wk", "wv", "wo"):
            mat(f"layer{i}.attn.{part}", d, d)
        for part in ("bq", "bk", "bv", "bo"):
            vec(f"layer{i}.attn.{part}", d)
        vec(f"layer{i}.ln1.g", d, 1.0)
        vec(f"layer{i}.ln1.b", d)
        vec(f"layer{i}.ln2.g", d, 1.0)
        vec(f"layer{i}.ln2.b", d)
        mat(f"layer{i}.ffn.w1", d, ff)
        vec(f"layer{i}.ffn.b1", ff)
        mat(f"layer{i}.ffn.w2", ff, d)
        vec(f"layer{i}.ffn.b2", d)
    mat("head.w", d, config.n_targets)
    vec("head.b", config.n_targets)
    if config.pooling == "cls":
        params["cls"] = Tensor(rng.normal(0.0, 0.02, size=d))
    return PredictorModel(config=config, params=params)


def _attention(x: Tensor, mask: np.ndarray, p: dict, prefix: str,
               config: EncoderConfig, drop_rng) -> Tensor:
    b, r, d = x.shape
    h = config.n_heads
    dh = d // h

    def split_heads(t):
        return ad.transpose(ad.reshape(t, (b, r, h, dh)), (0, 2, 1, 3))

    q = split_heads(ad.linear(x, p[f"{prefix}.wq"], p[f"{prefix}.bq"]))
    k = split_heads(ad.linear(x, p[f"{prefix}.wk"], p[f"{prefix}.bk"]))
    v = split_heads(ad.linear(x, p[f"{prefix}.wv"], p[f"{prefix}.bv"]))

    scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    bias = np.where(mask, 0.0, ATTENTION_MASK_BIAS)[:, None, None, :]
    probs = ad.softmax_masked(scores, bias)
    if drop_rng is not None:
        probs = ad.dropout(probs, config.dropout_p, drop_rng)
    ctx = ad.matmul(probs, v)
    ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, r, d))
    return ad.linear(ctx, p[f"{prefix}.wo"], p[f"{prefix}.bo"])


def encoder_forward(model: PredictorModel, tokens: np.ndarray, mask: np.ndarray,
                    train: bool = False, dropout_seed: int = 0) -> Tensor:
    """Predict targets for a padded batch.

    tokens: B x R x C float64, mask: B x R bool. Eval mode (train=False)
    is a deterministic pure function of (model, batch); train mode draws
    dropout masks from a generator seeded with dropout_seed.
    """
    cfg = model.config
    p = model.params
    if tokens.ndim != 3 or tokens.shape[-1] != cfg.input_width:
        raise ShapeMismatch(
            f"tokens shape {tokens.shape} incompatible with input_width={cfg.input_width}")
    if mask.shape != tokens.shape[:2]:
        raise ShapeMismatch(f"mask shape {mask.shape} != {tokens.shape[:2]}")

    mask = mask.astype(bool)
    if cfg.pooling == "cls":
        b = tokens.shape[0]
        cls_row = np.zeros((b, 1, cfg.input_width))
        tokens = np.concatenate([cls_row, tokens], axis=1)
        mask = np.concatenate([np.ones((b, 1), dtype=bool), mask], axis=1)

    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        raise MaskEmpty(int(np.argmin(counts)))

    drop_rng = np.random.default_rng(dropout_seed) if (train and cfg.dropout_p > 0) else None

    x = ad.linear(Tensor(tokens), p["input_proj.w"], p["input_proj.b"])
    if cfg.pooling == "cls":
        # learned cls embedding lands on the zero row prepended above
        bump = np.zeros_like(x.value)
        bump[:, 0, :] = p["cls"].value
        x = Tensor(x.value + bump, ((x, lambda g: g),
                                    (p["cls"], lambda g: g[:, 0, :].sum(axis=0))))

    for i in range(cfg.n_layer):
        normed = ad.layer_norm(x, p[f"layer{i}.ln1.g"], p[f"layer{i}.ln1.b"])
        attn = _attention(normed, mask, p, f"layer{i}.attn", cfg, drop_rng)
        if drop_rng is not None:
            attn = ad.dropout(attn, cfg.dropout_p, drop_rng)
        x = ad.add(x, attn)

        normed = ad.layer_norm(x, p[f"layer{i}.ln2.g"], p[f"layer{i}.ln2.b"])
        hidden = ad.gelu(ad.linear(normed, p[f"layer{i}.ffn.w1"], p[f"layer{i}.ffn.b1"]))
        out = ad.linear(hidden, p[f"layer{i}.ffn.w2"], p[f"layer{i}.ffn.b2"])
        if drop_rng is not None:
            out = ad.dropout(out, cfg.dropout_p, drop_rng)
        x = ad.add(x, out)

        if not np.all(np.isfinite(x.value)):
            raise NonFiniteActivation(f"layer{i}")

    if cfg.pooling == "cls":
        pooled_val = x.value[:, 0, :]
        pooled = Tensor(pooled_val, ((x, lambda g: _scatter_cls(g, x.value.shape)),))
    else:
        pooled = ad.masked_mean(x, mask)
    preds = ad.linear(pooled, p["head.w"], p["head.b"])
    if not np.all(np.isfinite(preds.value)):
        raise NonFiniteActivation("head")
    return preds


def _scatter_cls(g: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape)
    out[:, 0, :] = g
    return out


def compute_target_stats(targets: np.ndarray):
    """Per-column mean/std of a targets matrix; std must be strictly positive."""
    mean = targets.mean(axis=0)
    std = targets.std(axis=0)
    for j, s in enumerate(std):
        if s == 0.0:
            raise StatsDegenerate(j)
    return mean, std


def loss_mse(preds: Tensor, targets: np.ndarray, target_stats) -> Tensor:
    """Mean squared error against z-scored targets (stats from the train split)."""
    mean, std = target_stats
    for j, s in enumerate(np.atleast_1d(std)):
        if s == 0.0:
            raise StatsDegenerate(j)
    z = (targets - mean) / std
    if preds.shape != z.shape:
        raise ShapeMismatch(f"predictions {preds.shape} vs targets {z.shape}")
    return ad.mean_all(ad.square(ad.sub(preds, ad.constant(z))))


def backward_pass(model: PredictorModel, tokens: np.ndarray, mask: np.ndarray,
                  targets: np.ndarray, target_stats, train: bool = False,
                  dropout_seed: int = 0):
    """Forward + loss + reverse sweep; returns (loss value, grads by name)."""
    preds = encoder_forward(model, tokens, mask, train=train, dropout_seed=dropout_seed)
    loss = loss_mse(preds, targets, target_stats)
    ad.backward(loss)
    grads = {}
    for name, param in model.params.items():
        g = param.grad
        grads[name] = np.zeros_like(param.value) if g is None else g
        if not np.all(np.isfinite(grads[name])):
            raise NonFiniteActivation(f"gradient of {name}")
    return float(loss.value), grads


# -- Adam ---------------------------------------------------------------------

def adam_init(model: PredictorModel) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(v.value) for k, v in model.params.items()},
        "v": {k: np.zeros_like(v.value) for k, v in model.params.items()},
    }


def adam_step(model: PredictorModel, grads: dict, state: dict,
              lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """In-place Adam update with bias correction."""
    state["t"] += 1
    t = state["t"]
    for name, param in model.params.items():
        g = grads[name]
        if g.shape != param.value.shape:
            raise ShapeMismatch(f"gradient for {name}: {g.shape} vs {param.value.shape}")
        m = state["m"][name] = beta1 * state["m"][name] + (1 - beta1) * g
        v = state["v"][name] = beta2 * state["v"][name] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        param.value = param.value - lr * m_hat / (np.sqrt(v_hat) + eps)


# -- Checkpoint I/O -----------------------------------------------------------

def save_model(model: PredictorModel, path) -> None:
    cfg_json = json.dumps(asdict(model.config)).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<I", len(cfg_json)))
        fh.write(cfg_json)
        names = parameter_names(model.config)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            payload = model.params[name].value
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", payload.ndim))
            for dim in payload.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(payload, dtype="<f8").tobytes())


def load_model(path) -> PredictorModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:7] != MODEL_MAGIC:
        raise CorruptFile("bad magic")
    try:
        (version,) = struct.unpack_from("<I", blob, 7)
        if version != MODEL_FORMAT_VERSION:
            raise VersionMismatch(f"checkpoint version {version}, expected {MODEL_FORMAT_VERSION}")
        (cfg_len,) = struct.unpack_from("<I", blob, 11)
        offset = 15
        cfg = EncoderConfig(**json.loads(blob[offset:offset + cfg_len].decode("utf-8")))
        offset += cfg_len
        (n_tensors,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        params = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            name = blob[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            dims = struct.unpack_from(f"<{rank}I", blob, offset)
            offset += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            data = np.frombuffer(blob, dtype="<f8", count=size, offset=offset)
            if data.size != size:
                raise CorruptFile("truncated tensor payload")
            offset += size * 8
            params[name] = Tensor(data.reshape(dims).astype(np.float64))
    except VersionMismatch:
        raise
    except (struct.error, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise CorruptFile(str(exc)) from exc
    expected = set(parameter_names(cfg))
    if set(params) != expected:
        raise CorruptFile("parameter set does not match config")
    return PredictorModel(config=cfg, params=params)
