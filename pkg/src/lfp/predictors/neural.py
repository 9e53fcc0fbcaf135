"""Training, inference, checking and storage for the conv-recurrent predictor."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from ..dataset import Demonstration, fnv1a64
from ..render import downsample
from . import nn
from .base import Kind, Predictor, Role

MAGIC = b"LFPNNW01"
HEADER_SIZE = 16


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    seq_len: int = 5
    batch_size: int = 4
    samples_per_epoch: int = 64
    max_epochs: int = 500
    # stop once validation loss has not improved for this many epochs (None: never)
    patience: int | None = 60
    # an epoch only counts as progress for patience if it beats the best so far by this fraction
    min_rel_improvement: float = 0.01
    # or once validation loss drops below this (None: never)
    target_val: float | None = 5e-5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    downsample: int = 2

    def __post_init__(self):
        for name in ("seq_len", "batch_size", "samples_per_epoch", "max_epochs", "downsample"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.seq_len < 2:
            raise ValueError("seq_len must be at least 2")
        if self.patience is not None and self.patience < 1:
            raise ValueError("patience must be positive or None")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0 <= self.min_rel_improvement < 1:
            raise ValueError("min_rel_improvement must be in [0, 1)")


@dataclass
class NeuralWeights:
    arch: nn.Architecture
    params: np.ndarray  # float64, layout documented in nn

    def __post_init__(self):
        if self.params.shape != (self.arch.n_params,):
            raise ValueError(f"expected {self.arch.n_params} parameters, got {self.params.shape}")
        if not np.all(np.isfinite(self.params)):
            raise ValueError("weights contain NaN or Inf")

    @classmethod
    def random(cls, arch: nn.Architecture = nn.Architecture(), seed: int = 0) -> "NeuralWeights":
        return cls(arch, nn.init_params(arch, np.random.default_rng(seed)))


@numba.njit(cache=True)
def _adam_update(p, g, m, v, lr_t, b1, b2, eps_t):
    for i in range(p.size):
        gi = g[i]
        m[i] = b1 * m[i] + (1 - b1) * gi
        v[i] = b2 * v[i] + (1 - b2) * gi * gi
        p[i] -= lr_t * m[i] / (np.sqrt(v[i]) + eps_t)


class Adam:
    """Adam on a single flat parameter vector, updated in place.

    The bias corrections are folded into the step size and epsilon:
    lr * m_hat / (sqrt(v_hat) + eps) == lr_t * m / (sqrt(v) + eps_t).
    """

    def __init__(self, size: int, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8, dtype=np.float64):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.dtype = np.dtype(dtype)
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        if params.dtype != self.dtype or grad.dtype != self.dtype:
            raise TypeError(f"Adam state is {self.dtype}; got {params.dtype} params, {grad.dtype} grad")
        self.t += 1
        bc1 = 1 - self.beta1 ** self.t
        sq2 = np.sqrt(1 - self.beta2 ** self.t)
        c = self.dtype.type
        _adam_update(params, grad, self.m, self.v, c(self.lr * sq2 / bc1),
                     c(self.beta1), c(self.beta2), c(self.eps * sq2))


# ------------------------------------------------------------------- data

def prepare_frames(frames: Sequence[np.ndarray], factor: int, dtype=np.float64) -> np.ndarray:
    """uint8 frames -> (T, H, W, 3) array in [0, 1] at reduced resolution."""
    return np.stack([downsample(f, factor) for f in frames]).astype(dtype) / 255.0


def make_windows(demos: Sequence[Demonstration], seq_len: int, factor: int, dtype=np.float64) -> np.ndarray:
    """All length-``seq_len`` windows of consecutive frames, shape (N, seq_len, H, W, 3)."""
    out = []
    for d in demos:
        fr = prepare_frames(d.frames, factor, dtype)
        for i in range(len(fr) - seq_len + 1):
            out.append(fr[i : i + seq_len])
    if not out:
        raise ValueError(f"no demonstration has {seq_len} or more frames")
    return np.stack(out)


def _split(windows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return windows[:, :-1], windows[:, 1:]


def evaluate(arch: nn.Architecture, params: np.ndarray, windows: np.ndarray, batch: int = 16) -> float:
    total = 0.0
    for i in range(0, len(windows), batch):
        x, t = _split(windows[i : i + batch])
        y = nn.forward(arch, params, x)
        total += float(np.sum((y - t) ** 2))
    return total / (windows[:, 1:].size)


@dataclass
class TrainLog:
    epochs: list[tuple[int, float, float]] = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_mse", "val_mse"])
            for e, tr, va in self.epochs:
                w.writerow([e, repr(tr), repr(va)])


def neural_train(
    demos: Sequence[Demonstration],
    val_demos: Sequence[Demonstration],
    tc: TrainConfig = TrainConfig(),
    dtype=np.float32,
    progress=None,
) -> tuple[NeuralWeights, TrainLog]:
    """Fit next-frame prediction over ``tc.seq_len``-frame windows with Adam.

    Each epoch draws ``samples_per_epoch`` windows (reshuffled passes over all
    training windows) in batches of ``batch_size``. The returned weights are
    those with the lowest validation loss seen. Training stops after
    ``max_epochs``, once validation loss falls below ``target_val``, or after
    ``patience`` epochs without a relative improvement of at least
    ``min_rel_improvement``.
    """
    if not demos or not val_demos:
        raise ValueError("need at least one training and one validation demonstration")
    train_w = make_windows(demos, tc.seq_len, tc.downsample, dtype)
    val_w = make_windows(val_demos, tc.seq_len, tc.downsample, dtype)
    arch = nn.Architecture(train_w.shape[2], train_w.shape[3])
    rng = np.random.default_rng(tc.seed)
    params = nn.init_params(arch, rng).astype(dtype)
    grad = np.empty_like(params)
    opt = Adam(params.size, tc.lr, tc.beta1, tc.beta2, tc.eps, dtype)
    log = TrainLog()
    best = params.copy()
    order = np.empty(0, dtype=np.int64)
    progress_val, progress_epoch = float("inf"), -1
    for epoch in range(tc.max_epochs):
        while len(order) < tc.samples_per_epoch:
            order = np.concatenate([order, rng.permutation(len(train_w))])
        picks, order = order[: tc.samples_per_epoch], order[tc.samples_per_epoch :]
        losses = []
        for i in range(0, len(picks), tc.batch_size):
            x, t = _split(train_w[picks[i : i + tc.batch_size]])
            loss, _ = nn.loss_and_grad(arch, params, x, t, grad)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(f"non-finite loss/gradient at epoch {epoch}, batch {i // tc.batch_size}")
            opt.step(params, grad)
            losses.append(loss)
        if not np.all(np.isfinite(params)):
            raise TrainingDiverged(f"non-finite weights after epoch {epoch}")
        val = evaluate(arch, params, val_w)
        log.epochs.append((epoch, float(np.mean(losses)), val))
        if val < log.best_val:
            log.best_val, log.best_epoch = val, epoch
            best[:] = params
        if val < progress_val * (1 - tc.min_rel_improvement):
            progress_val, progress_epoch = val, epoch
        if progress is not None:
            progress(epoch, log.epochs[-1][1], val)
        if tc.patience is not None and epoch - progress_epoch >= tc.patience:
            break
        if tc.target_val is not None and val < tc.target_val:
            break
    return NeuralWeights(arch, best.astype(np.float64)), log


# -------------------------------------------------------------- inference

def neural_predict(history: Sequence[np.ndarray], w: NeuralWeights, factor: int = 2,
                   params: np.ndarray | None = None) -> np.ndarray:
    """Next frame after the whole ``history``, at the network's resolution."""
    if not history:
        raise ValueError("history must contain at least one frame")
    x = prepare_frames(history, factor, np.float32 if params is None else params.dtype)
    if x.shape[1:3] != (w.arch.height, w.arch.width):
        raise ValueError(
            f"frames reduce to {x.shape[2]}x{x.shape[1]}, network expects {w.arch.width}x{w.arch.height}")
    p = w.params.astype(np.float32) if params is None else params
    y = nn.forward(w.arch, p, x[None])[0, -1]
    return np.floor(np.clip(y, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


class NeuralPredictor(Predictor):
    """Frame-in / frame-out wrapper around trained weights.

    Within an episode the caller usually passes a history that grows by one
    frame per call; the recurrent state is then advanced by a single step
    instead of re-running the whole history. Any other history is processed
    from scratch. :meth:`reset` drops the cached state.
    """

    kind = Kind.NEURAL

    def __init__(self, role: Role, weights: NeuralWeights, factor: int = 2):
        self.role = role
        self.weights = weights
        self.factor = factor
        self._params = weights.params.astype(np.float32)
        self.reset()

    def reset(self) -> None:
        self._h = None
        self._seen: list[np.ndarray] = []

    def _extends_cache(self, history) -> bool:
        n = len(self._seen)
        return n > 0 and len(history) == n + 1 and all(
            a is b or np.array_equal(a, b) for a, b in zip(self._seen, history))

    def predict(self, history: Sequence[np.ndarray]) -> np.ndarray:
        if not history:
            raise ValueError("history must contain at least one frame")
        if not self._extends_cache(history):
            self.reset()
            # everything but the last frame only builds up the hidden state
            for f in history[:-1]:
                self._advance(f)
        y = self._advance(history[-1])
        return np.floor(np.clip(y, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)

    def _advance(self, frame: np.ndarray) -> np.ndarray:
        x = prepare_frames([frame], self.factor, np.float32)[0]
        arch = self.weights.arch
        if x.shape[:2] != (arch.height, arch.width):
            raise ValueError(
                f"frames reduce to {x.shape[1]}x{x.shape[0]}, network expects {arch.width}x{arch.height}")
        y, self._h = nn.step(arch, self._params, x, self._h)
        self._seen.append(frame)
        return y


# ------------------------------------------------------------- checking

def gradient_check(w: NeuralWeights, window: np.ndarray, n_params: int = 200, h: float = 1e-4,
                   seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    ``window`` is a (T, H, W, 3) float array in [0, 1] at network resolution;
    frames ``0..T-2`` are inputs and ``1..T-1`` targets. Compares ``n_params``
    randomly chosen parameters.
    """
    arch = w.arch
    p = w.params.astype(np.float64).copy()
    x, t = window[None, :-1].astype(np.float64), window[None, 1:].astype(np.float64)
    _, g = nn.loss_and_grad(arch, p, x, t)
    idx = np.random.default_rng(seed).choice(p.size, size=min(n_params, p.size), replace=False)
    worst = 0.0
    for i in idx:
        old = p[i]
        p[i] = old + h
        lp = nn.mse(nn.forward(arch, p, x), t)
        p[i] = old - h
        lm = nn.mse(nn.forward(arch, p, x), t)
        p[i] = old
        num = (lp - lm) / (2 * h)
        worst = max(worst, abs(g[i] - num) / max(abs(g[i]), abs(num), 1e-8))
    return worst


# --------------------------------------------------------------- storage

def arch_hash(arch: nn.Architecture) -> int:
    return fnv1a64(arch.describe().encode())


def save_weights(w: NeuralWeights, path: str | Path) -> None:
    """16-byte header (magic + architecture hash), then little-endian float64 params."""
    header = MAGIC + struct.pack("<Q", arch_hash(w.arch))
    Path(path).write_bytes(header + w.params.astype("<f8").tobytes())


def load_weights(path: str | Path, arch: nn.Architecture = nn.Architecture()) -> NeuralWeights:
    data = Path(path).read_bytes()
    if len(data) < HEADER_SIZE or data[:8] != MAGIC:
        raise ValueError(f"{path}: not a weight file (bad magic)")
    (h,) = struct.unpack("<Q", data[8:16])
    if h != arch_hash(arch):
        raise ValueError(f"{path}: architecture hash {h:016x} does not match {arch_hash(arch):016x}")
    body = data[HEADER_SIZE:]
    if len(body) != 8 * arch.n_params:
        raise ValueError(f"{path}: expected {8 * arch.n_params} parameter bytes, found {len(body)}")
    return NeuralWeights(arch, np.frombuffer(body, dtype="<f8").astype(np.float64))
