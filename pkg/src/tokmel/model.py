"""Losses and a small melody-enhanced token predictor.

The predictor encodes frame-level score features with one tanh layer,
regresses a per-frame melody value from the hidden state, and (when
melody enhancement is on) fuses the predicted melody back into the
hidden state through a second tanh layer before the per-stream softmax
token heads. Training minimizes

    loss_token + lambda_m * loss_melody

with plain gradient descent; gradients are exact analytic expressions
and are verified against central finite differences (see
finite_difference_check). All randomness flows through explicit seeds.
"""

from __future__ import annotations

import copy
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CorruptionError, FormatError, TrainingError
from .melody import MelodyTrack
from .stream import TokenStream

PROB_FLOOR = 1e-12

_MODEL_MAGIC = b"TKMD"
_MODEL_VERSION = 1


@dataclass
class ToyPredictor:
    w_enc: np.ndarray  # input_dim x hidden
    b_enc: np.ndarray  # hidden
    w_mel: np.ndarray  # hidden
    b_mel: float
    w_fuse: np.ndarray  # (hidden + 1) x hidden
    b_fuse: np.ndarray  # hidden
    heads: list[tuple[np.ndarray, np.ndarray]]  # per stream: hidden x K, K
    melody_enhanced: bool = True

    @property
    def input_dim(self) -> int:
        return self.w_enc.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.w_enc.shape[1]

    @property
    def ks(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w, _ in self.heads)

    @classmethod
    def create(
        cls,
        input_dim: int,
        hidden_dim: int,
        ks,
        seed: int = 0,
        melody_enhanced: bool = True,
        scale: float = 0.1,
    ) -> "ToyPredictor":
        rng = np.random.default_rng(seed)
        return cls(
            w_enc=rng.normal(0, scale, (input_dim, hidden_dim)),
            b_enc=np.zeros(hidden_dim),
            w_mel=rng.normal(0, scale, hidden_dim),
            b_mel=0.0,
            w_fuse=rng.normal(0, scale, (hidden_dim + 1, hidden_dim)),
            b_fuse=np.zeros(hidden_dim),
            heads=[
                (rng.normal(0, scale, (hidden_dim, k)), np.zeros(k)) for k in ks
            ],
            melody_enhanced=melody_enhanced,
        )

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """Named parameter arrays in checkpoint order (b_mel as a 1-vector)."""
        params = [
            ("w_enc", self.w_enc),
            ("b_enc", self.b_enc),
            ("w_mel", self.w_mel),
            ("b_mel", np.atleast_1d(np.float64(self.b_mel))),
            ("w_fuse", self.w_fuse),
            ("b_fuse", self.b_fuse),
        ]
        for j, (w, b) in enumerate(self.heads):
            params.append((f"head{j}_w", w))
            params.append((f"head{j}_b", b))
        return params


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def forward(model: ToyPredictor, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Melody prediction and per-stream posteriors for N frames of features."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"expected features of shape (N, {model.input_dim}), got {x.shape}"
        )
    h = np.tanh(x @ model.w_enc + model.b_enc)
    melody_pred = h @ model.w_mel + model.b_mel
    if model.melody_enhanced:
        fused_in = np.concatenate([h, melody_pred[:, None]], axis=1)
        h_out = np.tanh(fused_in @ model.w_fuse + model.b_fuse)
    else:
        h_out = h
    posteriors = [_softmax(h_out @ w + b) for w, b in model.heads]
    return melody_pred, posteriors


def loss_melody(truth: MelodyTrack, pred, voiced_only: bool = False) -> float:
    """Mean absolute log-F0 error; unvoiced sentinel frames count unless
    voiced_only is set."""
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != truth.lf0.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.lf0.shape}")
    if len(truth) == 0:
        raise ValueError("melody loss undefined for empty tracks")
    err = np.abs(truth.lf0 - pred)
    if voiced_only:
        if not truth.voiced.any():
            return 0.0
        return float(err[truth.voiced].mean())
    return float(err.mean())


def loss_token(truth: TokenStream, posteriors) -> float:
    """Summed-over-streams cross entropy, averaged over frames."""
    _check_posteriors(truth, posteriors)
    n = truth.num_frames
    total = 0.0
    for tokens, probs in zip(truth.streams, posteriors):
        picked = probs[np.arange(n), tokens]
        total -= np.log(np.maximum(picked, PROB_FLOOR)).sum()
    return float(total / n)


def accuracy(truth: TokenStream, posteriors) -> float:
    """Fraction of (frame, stream) slots predicted correctly by argmax."""
    _check_posteriors(truth, posteriors, check_rows=False)
    n = truth.num_frames
    if n == 0 or truth.num_streams == 0:
        return 0.0
    correct = 0
    for tokens, probs in zip(truth.streams, posteriors):
        correct += int((np.argmax(probs, axis=1) == tokens).sum())
    return correct / (n * truth.num_streams)


def _check_posteriors(truth: TokenStream, posteriors, check_rows: bool = True):
    if len(posteriors) != truth.num_streams:
        raise ValueError(
            f"expected {truth.num_streams} posterior blocks, got {len(posteriors)}"
        )
    if truth.num_frames == 0:
        raise ValueError("token loss undefined for zero frames")
    for j, (probs, k) in enumerate(zip(posteriors, truth.ks)):
        probs = np.asarray(probs)
        if probs.shape != (truth.num_frames, k):
            raise ValueError(
                f"stream {j}: expected posteriors of shape "
                f"({truth.num_frames}, {k}), got {probs.shape}"
            )
        if check_rows:
            if np.any(probs < 0):
                raise ValueError(f"stream {j}: negative probabilities")
            if np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-6):
                raise ValueError(f"stream {j}: posterior rows must sum to 1")


@dataclass
class Gradients:
    by_name: dict[str, np.ndarray]
    loss: float
    loss_token: float
    loss_melody: float


def grad(
    model: ToyPredictor,
    x,
    tokens: TokenStream,
    melody: MelodyTrack,
    lambda_m: float = 1.0,
    voiced_only: bool = False,
) -> Gradients:
    """Analytic gradients of loss_token + lambda_m * loss_melody."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if tokens.num_frames != n or len(melody) != n:
        raise ValueError("features, tokens and melody must cover the same frames")

    h = np.tanh(x @ model.w_enc + model.b_enc)
    melody_pred = h @ model.w_mel + model.b_mel
    if model.melody_enhanced:
        fused_in = np.concatenate([h, melody_pred[:, None]], axis=1)
        pre_fuse = fused_in @ model.w_fuse + model.b_fuse
        h_out = np.tanh(pre_fuse)
    else:
        h_out = h
    posteriors = [_softmax(h_out @ w + b) for w, b in model.heads]

    l_tok = loss_token(tokens, posteriors)
    l_mel = loss_melody(melody, melody_pred, voiced_only=voiced_only)

    grads: dict[str, np.ndarray] = {}
    d_hout = np.zeros_like(h_out)
    for j, ((w, _), probs, ids) in enumerate(zip(model.heads, posteriors, tokens.streams)):
        d_logits = probs.copy()
        d_logits[np.arange(n), ids] -= 1.0
        d_logits /= n
        grads[f"head{j}_w"] = h_out.T @ d_logits
        grads[f"head{j}_b"] = d_logits.sum(axis=0)
        d_hout += d_logits @ w.T

    # melody-loss subgradient; sign(0) = 0 at the kink
    if voiced_only and melody.voiced.any():
        d_mel = np.where(melody.voiced, np.sign(melody_pred - melody.lf0), 0.0)
        d_mel *= lambda_m / melody.voiced.sum()
    elif voiced_only:
        d_mel = np.zeros(n)
    else:
        d_mel = lambda_m * np.sign(melody_pred - melody.lf0) / n

    if model.melody_enhanced:
        d_pre_fuse = d_hout * (1.0 - h_out * h_out)
        grads["w_fuse"] = fused_in.T @ d_pre_fuse
        grads["b_fuse"] = d_pre_fuse.sum(axis=0)
        d_fused_in = d_pre_fuse @ model.w_fuse.T
        d_h = d_fused_in[:, :-1]
        d_mel = d_mel + d_fused_in[:, -1]
    else:
        grads["w_fuse"] = np.zeros_like(model.w_fuse)
        grads["b_fuse"] = np.zeros_like(model.b_fuse)
        d_h = d_hout

    grads["w_mel"] = h.T @ d_mel
    grads["b_mel"] = np.atleast_1d(d_mel.sum())
    d_h = d_h + d_mel[:, None] * model.w_mel[None, :]

    d_pre_enc = d_h * (1.0 - h * h)
    grads["w_enc"] = x.T @ d_pre_enc
    grads["b_enc"] = d_pre_enc.sum(axis=0)

    total = l_tok + lambda_m * l_mel
    return Gradients(by_name=grads, loss=total, loss_token=l_tok, loss_melody=l_mel)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    lambda_m: float = 1.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def train(
    model: ToyPredictor,
    dataset: list[tuple[np.ndarray, TokenStream, MelodyTrack]],
    config: TrainConfig,
) -> tuple[ToyPredictor, list[float]]:
    """Gradient descent over (features, tokens, melody) items.

    Items are visited in a seed-shuffled order, `batch_size` items per
    update with gradients averaged across the batch. Returns a trained
    copy of the model plus the per-epoch composite loss history
    (evaluated over the full dataset after each epoch).
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    model = copy.deepcopy(model)
    rng = np.random.default_rng(config.seed)
    history: list[float] = []

    def dataset_loss() -> float:
        total = 0.0
        for x, tokens, mel in dataset:
            pred, posteriors = forward(model, x)
            total += loss_token(tokens, posteriors) + config.lambda_m * loss_melody(
                mel, pred
            )
        return total / len(dataset)

    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        for start in range(0, len(dataset), config.batch_size):
            batch = order[start : start + config.batch_size]
            accum: dict[str, np.ndarray] = {}
            for idx in batch:
                x, tokens, mel = dataset[idx]
                g = grad(model, x, tokens, mel, lambda_m=config.lambda_m)
                for name, value in g.by_name.items():
                    if name in accum:
                        accum[name] += value
                    else:
                        accum[name] = value.copy()
            scale = config.learning_rate / len(batch)
            for name, value in model.parameters():
                step = accum[name] * scale
                if name == "b_mel":
                    model.b_mel = float(model.b_mel - step[0])
                else:
                    value -= step
        epoch_loss = dataset_loss()
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        history.append(epoch_loss)
    return model, history


def finite_difference_check(
    model: ToyPredictor,
    x,
    tokens: TokenStream,
    melody: MelodyTrack,
    lambda_m: float = 1.0,
    step: float = 1e-4,
) -> float:
    """Max relative error between analytic and central-difference gradients."""
    x = np.asarray(x, dtype=np.float64)
    analytic = grad(model, x, tokens, melody, lambda_m=lambda_m)

    def loss_at() -> float:
        pred, posteriors = forward(model, x)
        return loss_token(tokens, posteriors) + lambda_m * loss_melody(melody, pred)

    worst = 0.0
    for name, value in model.parameters():
        g = analytic.by_name[name]
        flat = value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            if name == "b_mel":
                model.b_mel = keep + step
                up = loss_at()
                model.b_mel = keep - step
                down = loss_at()
                model.b_mel = keep
            else:
                flat[i] = keep + step
                up = loss_at()
                flat[i] = keep - step
                down = loss_at()
                flat[i] = keep
            numeric = (up - down) / (2 * step)
            denom = max(abs(gflat[i]), abs(numeric), 1e-6)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst


def plan_features(plan) -> np.ndarray:
    """Frame-level model inputs for a FramePlan.

    One-hot phoneme id over the plan's vocabulary, the score's log-F0
    scaled by 1/ln(4000), and a voiced flag: input_dim = V + 2.
    """
    from .score import score_melody

    n = len(plan)
    vocab = len(plan.phonemes)
    x = np.zeros((n, vocab + 2))
    if n:
        x[np.arange(n), plan.phone_ids] = 1.0
        mel = score_melody(plan)
        x[:, vocab] = mel.lf0 / np.log(4000.0)
        x[:, vocab + 1] = mel.voiced.astype(np.float64)
    return x


# --- checkpoint ("TKMD") --------------------------------------------------------
#
# magic "TKMD", version u16=1, input u32, hidden u32, S u8,
# per stream K u32, melody_enhanced u8, then parameters as f32
# little-endian in the order of ToyPredictor.parameters().


def save_model(model: ToyPredictor, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(
            struct.pack(
                "<HIIB", _MODEL_VERSION, model.input_dim, model.hidden_dim,
                len(model.heads),
            )
        )
        for k in model.ks:
            fh.write(struct.pack("<I", k))
        fh.write(struct.pack("<B", 1 if model.melody_enhanced else 0))
        for _, value in model.parameters():
            fh.write(value.astype("<f4").tobytes())


def load_model(path) -> ToyPredictor:
    with open(path, "rb") as fh:
        data = fh.read()
    head = struct.calcsize("<HIIB")
    if len(data) < 4 + head or data[:4] != _MODEL_MAGIC:
        raise FormatError("bad model magic or truncated header")
    version, input_dim, hidden_dim, num_streams = struct.unpack_from("<HIIB", data, 4)
    if version != _MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    offset = 4 + head
    if len(data) < offset + 4 * num_streams + 1:
        raise CorruptionError("truncated model header")
    ks = []
    for _ in range(num_streams):
        (k,) = struct.unpack_from("<I", data, offset)
        ks.append(k)
        offset += 4
    melody_enhanced = bool(data[offset])
    offset += 1

    model = ToyPredictor.create(
        input_dim, hidden_dim, ks, seed=0, melody_enhanced=melody_enhanced
    )
    for name, value in model.parameters():
        count = value.size
        if len(data) < offset + 4 * count:
            raise CorruptionError(f"truncated parameters at {name}")
        loaded = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
        offset += 4 * count
        if name == "b_mel":
            model.b_mel = float(loaded[0])
        else:
            value[...] = loaded.reshape(value.shape)
    if offset != len(data):
        raise CorruptionError("trailing bytes after model parameters")
    return model
