"""Toy transformer encoder with per-layer choice of SA or GFSA.

Block structure (pre-norm, no dropout)::

    x = x + Attn(rms_norm(x))            Attn is A V or H V per head
    x = x + W2 gelu(W1 rms_norm(x) + b1) + b2

Layers are numbered from 1.  ``even_only`` placement puts GFSA on layers
2, 4, ...; odd-numbered layers keep plain self-attention.  The filter
coefficients live in three (layers, heads) tables whatever the placement,
so an unused row simply receives a zero gradient.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .diagnostics import batch_mean_cosine_similarity
from .numerics import Rng, read_matrix, write_matrix
from .tasks import TaskSpec

PLACEMENTS = ("all", "even_only", "none")
CHECKPOINT_FORMAT = "gfsa-lab-checkpoint-1"


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 2
    heads: int = 2
    model_dim: int = 32
    ffn_dim: int = 64
    vocab: int = 16
    seq_len: int = 8
    filter_order: int = 3
    gfsa_placement: str = "all"
    seed: int = 0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("layers must be >= 1")
        if self.heads < 1 or self.model_dim % self.heads:
            raise ValueError(f"heads ({self.heads}) must divide model_dim ({self.model_dim})")
        if self.filter_order < 1:
            raise ValueError(f"filter_order K must be >= 1, got {self.filter_order}")
        if self.gfsa_placement not in PLACEMENTS:
            raise ValueError(f"gfsa_placement must be one of {PLACEMENTS}")
        if self.vocab < 2 or self.seq_len < 1 or self.ffn_dim < 1:
            raise ValueError("vocab >= 2, seq_len >= 1 and ffn_dim >= 1 required")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.heads

    def uses_gfsa(self, layer: int) -> bool:
        """``layer`` is the 0-based position; placement speaks of 1-based numbers."""
        if self.gfsa_placement == "all":
            return True
        if self.gfsa_placement == "even_only":
            return (layer + 1) % 2 == 0
        return False


@dataclass
class TrainState:
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def copy(self) -> "TrainState":
        return TrainState({k: v.copy() for k, v in self.params.items()},
                          {k: v.copy() for k, v in self.adam_m.items()},
                          {k: v.copy() for k, v in self.adam_v.items()},
                          self.step)


def init_state(cfg: ModelConfig) -> TrainState:
    rng = Rng(cfg.seed)
    d, f, L, h = cfg.model_dim, cfg.ffn_dim, cfg.layers, cfg.heads
    p: dict[str, np.ndarray] = {
        "tok_emb": rng.normal((cfg.vocab, d)),
        "pos_emb": rng.normal((cfg.seq_len, d)),
    }
    for layer in range(L):
        pre = f"layer{layer}."
        p[pre + "norm1"] = np.ones(d)
        for name in ("w_qry", "w_key", "w_val"):
            p[pre + name] = rng.normal((d, d), 1 / math.sqrt(d))
        p[pre + "norm2"] = np.ones(d)
        p[pre + "ffn_w1"] = rng.normal((d, f), 1 / math.sqrt(d))
        p[pre + "ffn_b1"] = np.zeros(f)
        p[pre + "ffn_w2"] = rng.normal((f, d), 1 / math.sqrt(f))
        p[pre + "ffn_b2"] = np.zeros(d)
    p["gfsa_w0"] = np.zeros((L, h))
    p["gfsa_w1"] = np.ones((L, h))
    p["gfsa_wk"] = np.zeros((L, h))
    p["norm_out"] = np.ones(d)
    p["out_w"] = rng.normal((d, cfg.vocab), 1 / math.sqrt(d))
    p["out_b"] = np.zeros(cfg.vocab)
    return TrainState(params=p)


@dataclass
class ForwardPass:
    tape: ad.Tape
    logits: ad.Tensor
    features: list[ad.Tensor]
    attention: list[ad.Tensor]
    filters: list[ad.Tensor]


def _split(x: ad.Tensor, batch: int, n: int, heads: int, dh: int) -> ad.Tensor:
    return ad.transpose(ad.reshape(x, (batch, n, heads, dh)), (0, 2, 1, 3))


def _merge(x: ad.Tensor, batch: int, n: int, d: int) -> ad.Tensor:
    return ad.reshape(ad.transpose(x, (0, 2, 1, 3)), (batch, n, d))


def forward(state: TrainState, cfg: ModelConfig, tokens) -> ForwardPass:
    """Run the model on a (batch, seq_len) array of token ids.

    The returned pass carries the tape, the logits, post-block features,
    each layer's attention matrices (batch, heads, n, n) and the matrices
    actually applied to the values (H where GFSA is active, else A).
    """
    tokens = np.asarray(tokens)
    if tokens.ndim != 2 or tokens.shape[1] != cfg.seq_len:
        raise ValueError(f"tokens must have shape (batch, {cfg.seq_len}), got {tokens.shape}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab):
        raise ValueError(f"token ids must lie in [0, {cfg.vocab})")
    batch, n = tokens.shape
    d, h, dh, K = cfg.model_dim, cfg.heads, cfg.head_dim, cfg.filter_order

    tape = ad.Tape()
    P = {name: tape.param(v, name) for name, v in state.params.items()}
    eye = np.eye(n)
    scale = 1.0 / math.sqrt(dh)

    x = ad.embed(P["tok_emb"], tokens) + P["pos_emb"]
    features, attention, filters = [], [], []
    for layer in range(cfg.layers):
        pre = f"layer{layer}."
        z = ad.rms_norm(x, P[pre + "norm1"])
        q = _split(z @ P[pre + "w_qry"], batch, n, h, dh)
        k = _split(z @ P[pre + "w_key"], batch, n, h, dh)
        v = _split(z @ P[pre + "w_val"], batch, n, h, dh)
        att = ad.softmax((q @ ad.swap_last(k)) * scale)
        mix = att
        if cfg.uses_gfsa(layer):
            w0 = ad.reshape(P["gfsa_w0"][layer], (h, 1, 1))
            w1 = ad.reshape(P["gfsa_w1"][layer], (h, 1, 1))
            wk = ad.reshape(P["gfsa_wk"][layer], (h, 1, 1))
            high = att + (K - 1) * (att @ att - att)
            mix = w0 * eye + w1 * att + wk * high
        x = x + _merge(mix @ v, batch, n, d)
        z = ad.rms_norm(x, P[pre + "norm2"])
        hidden = ad.gelu(z @ P[pre + "ffn_w1"] + P[pre + "ffn_b1"])
        x = x + (hidden @ P[pre + "ffn_w2"] + P[pre + "ffn_b2"])
        features.append(x)
        attention.append(att)
        filters.append(mix)

    logits = ad.rms_norm(x, P["norm_out"]) @ P["out_w"] + P["out_b"]
    return ForwardPass(tape, logits, features, attention, filters)


def loss_and_grads(state: TrainState, cfg: ModelConfig, tokens, targets):
    fp = forward(state, cfg, tokens)
    loss = ad.cross_entropy(fp.logits, targets)
    return float(loss.value), ad.backward(fp.tape, loss), fp


def backward(tape: ad.Tape, loss: ad.Tensor) -> dict[str, np.ndarray]:
    return ad.backward(tape, loss)


# -- optimisation --------------------------------------------------------------

@dataclass(frozen=True)
class Adam:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def step(self, state: TrainState, grads: dict[str, np.ndarray]) -> None:
        state.step += 1
        t = state.step
        c1 = 1 - self.beta1 ** t
        c2 = 1 - self.beta2 ** t
        for name, g in grads.items():
            m = state.adam_m.get(name)
            v = state.adam_v.get(name)
            m = (1 - self.beta1) * g if m is None else self.beta1 * m + (1 - self.beta1) * g
            v = (1 - self.beta2) * g * g if v is None else self.beta2 * v + (1 - self.beta2) * g * g
            state.adam_m[name] = m
            state.adam_v[name] = v
            state.params[name] = state.params[name] - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, last_good_step: int):
        super().__init__(f"loss became non-finite in epoch {epoch}; last good step {last_good_step}")
        self.epoch = epoch
        self.last_good_step = last_good_step


def evaluate(state: TrainState, cfg: ModelConfig, inputs, targets) -> dict:
    """Loss, accuracy and per-layer mean cosine similarity on a fixed set."""
    fp = forward(state, cfg, inputs)
    loss = ad.cross_entropy(fp.logits, targets)
    accuracy = float((fp.logits.value.argmax(axis=-1) == targets).mean())
    cos = [float(batch_mean_cosine_similarity(f.value).mean()) for f in fp.features]
    return {"loss": float(loss.value), "accuracy": accuracy, "cosine_sim_per_layer": cos}


def train(cfg: ModelConfig, task: TaskSpec, epochs: int, *, batch_size: int = 32,
          optimizer: Adam = Adam(), on_epoch: Optional[Callable[[dict], None]] = None):
    """Train from the seeded initialization; returns ``(state, metrics)``.

    ``metrics[0]`` evaluates the initial model on the whole training set.
    Entry e >= 1 averages, over the minibatches of epoch e, the loss,
    accuracy and per-layer cosine similarity seen by each forward pass
    (before that batch's update).
    """
    if task.seq_len != cfg.seq_len or task.vocab > cfg.vocab:
        raise ValueError("task does not fit the model configuration")
    if epochs < 0:
        raise ValueError("epochs must be >= 0")
    state = init_state(cfg)
    shuffle = Rng((cfg.seed + 1) % 2**64)

    first = {"epoch": 0, **evaluate(state, cfg, task.inputs, task.targets)}
    if not math.isfinite(first["loss"]):
        raise TrainingDiverged(0, 0)
    metrics = [first]
    if on_epoch is not None:
        on_epoch(first)

    for epoch in range(1, epochs + 1):
        order = shuffle.permutation(len(task))
        loss_sum = correct = count = 0.0
        cos_sum = np.zeros(cfg.layers)
        for start in range(0, len(task), batch_size):
            idx = order[start:start + batch_size]
            targets = task.targets[idx]
            # overflow is caught explicitly below as divergence
            with np.errstate(over="ignore", invalid="ignore"):
                fp = forward(state, cfg, task.inputs[idx])
                loss_t = ad.cross_entropy(fp.logits, targets)
                loss = float(loss_t.value)
                if not math.isfinite(loss):
                    raise TrainingDiverged(epoch, state.step)
                try:
                    grads = ad.backward(fp.tape, loss_t)
                except ad.GradientError:
                    raise TrainingDiverged(epoch, state.step) from None
            optimizer.step(state, grads)
            loss_sum += loss * len(idx)
            correct += float((fp.logits.value.argmax(axis=-1) == targets).sum())
            count += len(idx)
            cos_sum += [batch_mean_cosine_similarity(f.value).sum() for f in fp.features]
        row = {"epoch": epoch, "loss": loss_sum / count,
               "accuracy": correct / (count * cfg.seq_len),
               "cosine_sim_per_layer": [float(c) for c in cos_sum / count]}
        metrics.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return state, metrics


# -- checkpoints -----------------------------------------------------------------

def save_checkpoint(path, state: TrainState, cfg: ModelConfig, extra: Optional[dict] = None) -> None:
    """Write ``manifest.txt`` (key=value) plus one ``<param>.mat`` per parameter."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = {"format": CHECKPOINT_FORMAT, **asdict(cfg), "step": state.step, **(extra or {})}
    entries["params"] = ",".join(sorted(state.params))
    lines = [f"{k}={v}" for k, v in entries.items()]
    (path / "manifest.txt").write_text("\n".join(lines) + "\n", newline="\n")
    for name, value in state.params.items():
        write_matrix(path / f"{name}.mat", np.atleast_2d(value))


def read_manifest(path) -> dict[str, str]:
    manifest = Path(path) / "manifest.txt"
    if not manifest.is_file():
        raise FileNotFoundError(f"no checkpoint manifest at {manifest}")
    out = {}
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip():
            continue
        if "=" not in line:
            raise ValueError(f"{manifest}: line {lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_checkpoint(path) -> tuple[TrainState, ModelConfig, dict[str, str]]:
    path = Path(path)
    manifest = read_manifest(path)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {manifest.get('format')!r}")
    kwargs = {}
    for f in fields(ModelConfig):
        raw = manifest[f.name]
        kwargs[f.name] = raw if f.name == "gfsa_placement" else int(raw)
    cfg = ModelConfig(**kwargs)
    template = init_state(replace(cfg, seed=0)).params
    params = {}
    for name in manifest["params"].split(","):
        value = read_matrix(path / f"{name}.mat")
        params[name] = value.reshape(template[name].shape)
    return TrainState(params=params, step=int(manifest["step"])), cfg, manifest


def metrics_jsonl(metrics: list[dict]) -> str:
    return "".join(json.dumps(row, separators=(",", ":")) + "\n" for row in metrics)
