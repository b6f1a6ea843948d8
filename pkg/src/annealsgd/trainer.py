"""Small fully-connected ReLU network trained with mini-batch SGD or Adam.

All parameters live in one flat float64 vector, ordered layer by layer as
(W_0, b_0, W_1, b_1, ..., W_L, b_L) with each W_k stored row-major with
shape (fan_in, fan_out). AnnealSGD's perturbation is laid out in the same
order. For the perturbation's shape estimate every linear layer counts as
one layer, so a net with 16 hidden layers has p = 17.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anneal import AnnealConfig, PerturbationState, estimate_shape
from .data import Dataset
from .hamiltonian import ANNEAL_STREAM, stream_rng

TRAIN_STREAM = 20
INIT_STREAM = 21


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class MLPSpec:
    """``hidden`` lists hidden-layer widths; input and output sizes come from the data.

    ``init="uniform"`` draws U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the common
    framework default; ``init="he"`` draws N(0, 2/fan_in).
    """

    hidden: tuple[int, ...] = (32,) * 16
    weight_decay: float = 1e-5
    init_seed: int = 0
    init: str = "uniform"

    def __post_init__(self):
        if len(self.hidden) < 1 or min(self.hidden) < 1:
            raise ValueError(f"need at least one hidden layer of positive width, got {self.hidden}")
        if self.init not in ("uniform", "he"):
            raise ValueError(f"unknown init {self.init!r}")


class MLP:
    def __init__(self, spec: MLPSpec, in_dim: int, out_dim: int):
        self.spec = spec
        self.sizes = [in_dim, *spec.hidden, out_dim]
        self.shapes = []
        off = 0
        for a, b in zip(self.sizes[:-1], self.sizes[1:]):
            self.shapes.append((off, a, b))
            off += a * b + b
        self.num_params = off
        self.w = np.zeros(off)
        rng = stream_rng(spec.init_seed, INIT_STREAM)
        for k, (o, a, b) in enumerate(self.shapes):
            if spec.init == "uniform":
                bound = 1.0 / math.sqrt(a)
                self.w[o:o + a * b] = rng.uniform(-bound, bound, a * b)
                self.w[o + a * b:o + a * b + b] = rng.uniform(-bound, bound, b)
            else:
                self.w[o:o + a * b] = rng.standard_normal(a * b) * math.sqrt(2.0 / a)

    @property
    def num_layers(self) -> int:
        return len(self.shapes)

    def layer(self, vec: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        o, a, b = self.shapes[k]
        return vec[o:o + a * b].reshape(a, b), vec[o + a * b:o + a * b + b]

    def weight_mask(self) -> np.ndarray:
        """True on weight-matrix entries, False on biases."""
        m = np.zeros(self.num_params, dtype=bool)
        for o, a, b in self.shapes:
            m[o:o + a * b] = True
        return m

    def logits(self, x: np.ndarray, w: np.ndarray | None = None) -> np.ndarray:
        w = self.w if w is None else w
        a = x
        for k in range(self.num_layers):
            W, b = self.layer(w, k)
            a = a @ W + b
            if k < self.num_layers - 1:
                a = np.maximum(a, 0.0)
        return a

    def loss(self, x, y, w=None) -> float:
        """Mean cross-entropy plus 0.5 * weight_decay * ||weights||^2 (biases excluded)."""
        w = self.w if w is None else w
        z = self.logits(x, w)
        ce = float(np.mean(_logsumexp(z) - z[np.arange(y.size), y]))
        return ce + 0.5 * self.spec.weight_decay * float(np.sum(w[self.weight_mask()] ** 2))

    def loss_and_grad(self, x: np.ndarray, y: np.ndarray, w: np.ndarray | None = None) -> tuple[float, np.ndarray]:
        w = self.w if w is None else w
        acts = [x]
        a = x
        for k in range(self.num_layers):
            W, b = self.layer(w, k)
            a = a @ W + b
            if k < self.num_layers - 1:
                a = np.maximum(a, 0.0)
            acts.append(a)
        z = acts[-1]
        lse = _logsumexp(z)
        rows = np.arange(y.size)
        ce = float(np.mean(lse - z[rows, y]))
        delta = np.exp(z - lse[:, None])
        delta[rows, y] -= 1.0
        delta /= y.size
        grad = np.empty_like(w)
        for k in range(self.num_layers - 1, -1, -1):
            gW, gb = self.layer(grad, k)
            gW[...] = acts[k].T @ delta
            gb[...] = delta.sum(axis=0)
            if k > 0:
                W, _ = self.layer(w, k)
                delta = (delta @ W.T) * (acts[k] > 0)
        wd = self.spec.weight_decay
        if wd:
            m = self.weight_mask()
            grad[m] += wd * w[m]
            ce += 0.5 * wd * float(np.sum(w[m] ** 2))
        return ce, grad

    def error_rate(self, x: np.ndarray, y: np.ndarray) -> float:
        """Misclassification percentage."""
        if y.size == 0:
            return float("nan")
        return 100.0 * float(np.mean(np.argmax(self.logits(x), axis=1) != y))


def _logsumexp(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1)
    return m + np.log(np.sum(np.exp(z - m[:, None]), axis=1))


class NesterovSGD:
    def __init__(self, lr: float, momentum: float = 0.9):
        self.lr, self.momentum = lr, momentum
        self.v = None

    def step(self, w: np.ndarray, g: np.ndarray) -> None:
        if self.v is None:
            self.v = np.zeros_like(w)
        self.v = self.momentum * self.v + g
        w -= self.lr * (g + self.momentum * self.v)


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, w: np.ndarray, g: np.ndarray) -> None:
        if self.m is None:
            self.m, self.v = np.zeros_like(w), np.zeros_like(w)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        w -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


OPTIMIZERS = {"sgd_momentum": NesterovSGD, "adam": Adam}


def min_abs_gradient(grads) -> float:
    """Smallest |dloss/dw| over all parameters; accepts one flat array or a list of per-layer arrays."""
    if isinstance(grads, np.ndarray):
        return float(np.min(np.abs(grads))) if grads.size else 0.0
    return min(float(np.min(np.abs(g))) for g in grads)


def alignment(w, h) -> float:
    """|h . w|."""
    w, h = np.asarray(w), np.asarray(h)
    if w.shape != h.shape:
        raise ValueError(f"length mismatch: {w.shape} vs {h.shape}")
    return abs(float(np.dot(h, w)))


@dataclass
class TrainMetrics:
    """Per-epoch lists (index 0 is epoch 1) plus per-step traces."""

    loss: list[float] = field(default_factory=list)
    val_error: list[float] = field(default_factory=list)
    train_error: list[float] = field(default_factory=list)
    min_abs_grad: list[float] = field(default_factory=list)
    alignment: list[float] = field(default_factory=list)
    step_alignment: list[float] = field(default_factory=list)
    step_min_abs_grad: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    final_weights: np.ndarray | None = None

    def rows(self):
        for e in range(len(self.loss)):
            yield e + 1, self.loss[e], self.val_error[e], self.min_abs_grad[e], self.alignment[e]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "loss", "val_error", "min_abs_grad", "alignment"])
            for epoch, *vals in self.rows():
                w.writerow([epoch, *(f"{v:.17g}" for v in vals)])

    def tail_alignment(self, fraction: float = 0.1) -> float:
        """Mean step alignment over the last ``fraction`` of steps."""
        a = np.asarray(self.step_alignment)
        k = max(1, int(math.ceil(fraction * a.size)))
        return float(a[-k:].mean())


def default_anneal(net: MLP, J: float = 1e-3, tau0: float = 500.0, schedule: str = "tau_exp", seed: int = 0,
                   **kw) -> AnnealConfig:
    """AnnealConfig with p = number of linear layers and n from the weight count."""
    p = net.num_layers
    return AnnealConfig(J=J, tau0=tau0, schedule=schedule, p_est=p,
                        n_est=estimate_shape(net.num_params, p), seed=seed, **kw)


def train(spec: MLPSpec, data: Dataset, optimizer: str = "adam", anneal: AnnealConfig | None = None,
          noise_baseline: str | None = None, epochs: int = 10, batch_size: int = 64, lr: float = 1e-3,
          seed: int = 0, momentum: float = 0.9) -> TrainMetrics:
    """Mini-batch training with optional AnnealSGD or resampled-noise perturbation.

    ``seed`` fixes the batch order; ``spec.init_seed`` fixes the initial
    weights, so runs that differ only in ``anneal`` see identical batches and
    starting points. With ``noise_baseline="resampled"`` the anneal schedule
    still sets the magnitude, but each step adds fresh Gaussian noise with
    per-coordinate std s_i ||h|| / sqrt(dim) instead of s_i h. Alignment is
    then measured against the unscaled draw (||h|| / sqrt(dim)) z_t.
    """
    if optimizer not in OPTIMIZERS:
        raise ValueError(f"optimizer must be one of {sorted(OPTIMIZERS)}, got {optimizer!r}")
    if noise_baseline not in (None, "resampled"):
        raise ValueError(f"unknown noise baseline {noise_baseline!r}")
    if noise_baseline is not None and anneal is None:
        raise ValueError("the resampled-noise baseline needs an anneal config for its magnitude")
    x_tr, y_tr = data.train
    x_val, y_val = data.validation
    net = MLP(spec, data.dim, data.classes)
    opt = NesterovSGD(lr, momentum) if optimizer == "sgd_momentum" else Adam(lr)
    state = PerturbationState(net.num_params, anneal) if anneal is not None else None
    h = state.h if state is not None else np.zeros(net.num_params)
    noise_rng = stream_rng(anneal.seed, ANNEAL_STREAM, 1) if noise_baseline else None
    noise_std = float(np.linalg.norm(h)) / math.sqrt(net.num_params) if noise_baseline else 0.0
    order_rng = stream_rng(seed, TRAIN_STREAM)

    m = x_tr.shape[0]
    out = TrainMetrics()
    t0 = time.perf_counter()
    for epoch in range(epochs):
        perm = order_rng.permutation(m)
        losses, mins, aligns = [], [], []
        for lo in range(0, m, batch_size):
            idx = perm[lo:lo + batch_size]
            loss, g = net.loss_and_grad(x_tr[idx], y_tr[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch + 1}, step {lo // batch_size}")
            losses.append(loss)
            mins.append(min_abs_gradient(g))
            if noise_baseline:
                u = noise_std * noise_rng.standard_normal(net.num_params)
                g = g + state.scale() * u
                state.i += 1
            elif state is not None:
                u = h
                g = state.perturb_gradient(g)
            else:
                u = h
            opt.step(net.w, g)
            a = alignment(net.w, u)
            aligns.append(a)
            out.step_alignment.append(a)
            out.step_min_abs_grad.append(mins[-1])
        out.loss.append(float(np.mean(losses)))
        out.min_abs_grad.append(float(np.mean(mins)))
        out.alignment.append(float(np.mean(aligns)))
        out.val_error.append(net.error_rate(x_val, y_val))
        out.train_error.append(net.error_rate(x_tr, y_tr))
    out.wall_time = time.perf_counter() - t0
    out.final_weights = net.w.copy()
    return out
