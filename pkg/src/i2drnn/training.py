"""Sum-of-squares training with exact backpropagation through time.

The per-sample objective is sum_t ||y_t - o_t||^2 (a plain sum over steps,
not a mean). Gradients are computed analytically through every path the
forward pass uses: the within-step feed chain, every recurrent feedback
matrix, every layer readout, and the fine-scale input encoder.

Optimization is Adam with one update per training sample by default; samples
are visited in a seeded per-epoch order, so a given (seed, dataset) pair
always reproduces the identical run. Early stopping tracks mean per-step
validation loss and the best-epoch parameters are what the caller gets back.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (ARCH_I2DRNN, ModelConfig, ModelParams, Trace,
                    forward_sample, init_params)
from .numerics import Rng


class TrainingDivergedError(RuntimeError):
    """Raised when a non-finite loss shows up; carries epoch and sample index."""

    def __init__(self, epoch: int, sample: int):
        super().__init__(f"non-finite loss at epoch {epoch}, sample {sample}")
        self.epoch = epoch
        self.sample = sample


def sequence_loss(outputs: np.ndarray, targets: np.ndarray) -> float:
    """Sum over time steps of the squared error norm."""
    outputs = np.asarray(outputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if outputs.shape != targets.shape:
        raise ValueError(f"outputs {outputs.shape} vs targets {targets.shape}")
    diff = outputs - targets
    return float(np.sum(diff * diff))


def bptt_gradients(params: ModelParams, trace: Trace,
                   targets: np.ndarray) -> ModelParams:
    """Exact gradients of sequence_loss w.r.t. every weight tensor.

    Runs backward over time; within each step the layers unwind top-down so
    the within-step feed path (layer j into layer j+1) is already resolved
    when layer j's delta is formed. Cross-step carries flow through every
    recurrent matrix the architecture owns.
    """
    cfg = params.config
    L = cfg.num_layers
    dims = cfg.layer_dims
    X, H, O = trace.x, trace.h, trace.outputs
    T = X.shape[0]
    Y = np.asarray(targets, dtype=np.float64)
    if Y.shape != O.shape:
        raise ValueError(f"targets {Y.shape} vs outputs {O.shape}")
    cross = cfg.arch == ARCH_I2DRNN

    dO = 2.0 * (O - Y)                                   # (T, out_dim)
    dHout = {l: dO @ params.out[l] for l in params.out}  # readout pullback, (T, d_l)
    feedT = {j: params.feed[j].T for j in params.feed}
    recT = {ij: params.rec[ij].T for ij in params.rec}

    dPre = [np.empty((T, d)) for d in dims]
    carry = [np.zeros(d) for d in dims]
    for t in range(T - 1, -1, -1):
        for j in range(L, 0, -1):
            dh = dHout[j][t] + carry[j - 1] if j in dHout else carry[j - 1].copy()
            if j < L:
                dh += feedT[j + 1] @ dPre[j][t]
            hj = H[j - 1][t]
            dPre[j - 1][t] = dh * (1.0 - hj * hj)
        for i in range(L, 0, -1):
            c = recT[(i, i)] @ dPre[i - 1][t]
            if cross:
                for j in range(1, i):
                    c += recT[(i, j)] @ dPre[j - 1][t]
            carry[i - 1] = c

    grads = params.zeros_like()
    for l in params.out:
        grads.out[l] = dO.T @ H[l - 1]
    grads.feed[1] = dPre[0].T @ X
    for j in range(2, L + 1):
        grads.feed[j] = dPre[j - 1].T @ H[j - 2]
    for (i, j) in params.rec:
        g = dPre[j - 1][1:].T @ H[i - 1][:-1] if T > 1 else 0.0
        grads.rec[(i, j)] = g + np.outer(dPre[j - 1][0], trace.init[i - 1])
    for j in range(1, L + 1):
        grads.bias[j] = dPre[j - 1].sum(axis=0)

    if cfg.encoder_dim > 0:
        if trace.enc_states is None or trace.fine is None:
            raise ValueError("trace lacks encoder states; run forward_sample")
        dX = dPre[0] @ params.feed[1]                    # (T, input_dim)
        dC = dX[:, :cfg.encoder_dim]
        encT = params.enc_rec.T
        for t in range(T):
            states = trace.enc_states[t]
            block = trace.fine[t]
            g = dC[t]
            for s in range(block.shape[0] - 1, -1, -1):
                es = states[s]
                gpre = g * (1.0 - es * es)
                grads.enc_feed += np.outer(gpre, block[s])
                if s > 0:
                    grads.enc_rec += np.outer(gpre, states[s - 1])
                grads.enc_bias += gpre
                g = encT @ gpre
    return grads


def accumulate(into: ModelParams, grads: ModelParams) -> None:
    for (name, a), (_, g) in zip(into.named_arrays(), grads.named_arrays()):
        a += g


def gradient_norm(grads: ModelParams) -> float:
    total = 0.0
    for _, g in grads.named_arrays():
        total += float(np.sum(g * g))
    return float(np.sqrt(total))


def clip_gradients(grads: ModelParams, clip: float) -> float:
    """Global-norm clipping in place; clip <= 0 disables. Returns the scale."""
    if clip <= 0.0:
        return 1.0
    norm = gradient_norm(grads)
    if norm <= clip or norm == 0.0:
        return 1.0
    scale = clip / norm
    for _, g in grads.named_arrays():
        g *= scale
    return scale


@dataclass
class Hyper:
    """Optimizer and schedule knobs."""

    step_size: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_epochs: int = 500
    patience: int = 20
    grad_clip: float = 0.0           # global-norm threshold; 0 disables
    update_every: str = "sample"     # "sample" or "epoch"

    def __post_init__(self):
        if self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        if self.update_every not in ("sample", "epoch"):
            raise ValueError(f"unknown update_every {self.update_every!r}")


@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    t: int = 0


def adam_init(params: ModelParams) -> AdamState:
    return AdamState(m=params.zeros_like(), v=params.zeros_like())


def adam_step(params: ModelParams, grads: ModelParams, state: AdamState,
              hyper: Hyper) -> None:
    """One Adam update, in place, with standard bias correction."""
    state.t += 1
    b1, b2 = hyper.beta1, hyper.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    lr = hyper.step_size
    for (_, p), (_, g), (_, m), (_, v) in zip(params.named_arrays(),
                                              grads.named_arrays(),
                                              state.m.named_arrays(),
                                              state.v.named_arrays()):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + hyper.eps)


@dataclass
class TrainReport:
    """Per-epoch history. Losses are mean per-step (comparable across sets)."""

    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_loss: float = float("inf")
    start_epoch: int = 0
    wall_time: float = 0.0

    @property
    def epochs_run(self) -> int:
        return len(self.train_losses)

    def to_dict(self, include_timing: bool = False) -> dict:
        doc = {
            "train_losses": self.train_losses,
            "val_losses": self.val_losses,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "start_epoch": self.start_epoch,
            "epochs_run": self.epochs_run,
        }
        if include_timing:
            doc["wall_time_seconds"] = self.wall_time
        return doc


def save_report(report: TrainReport, path, include_timing: bool = False) -> None:
    # timing is volatile; it stays out of the JSON by default so identical
    # (seed, config) runs write byte-identical reports
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(include_timing=include_timing), fh, indent=1)
        fh.write("\n")


def save_loss_csv(report: TrainReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss"])
        for i, loss in enumerate(report.train_losses):
            w.writerow([report.start_epoch + i, repr(loss)])


def _sample_pass(params, sample, hyper):
    trace = forward_sample(params, sample.same, sample.coarse, sample.fine)
    loss = sequence_loss(trace.outputs, sample.targets)
    grads = bptt_gradients(params, trace, sample.targets)
    return loss, trace.outputs.shape[0], grads


def _split_loss(params, dataset, idx) -> float:
    """Mean per-step loss over the given sample indices."""
    total = 0.0
    steps = 0
    for i in idx:
        s = dataset.samples[i]
        trace = forward_sample(params, s.same, s.coarse, s.fine)
        total += sequence_loss(trace.outputs, s.targets)
        steps += trace.outputs.shape[0]
    return total / max(steps, 1)


def train(dataset, config: ModelConfig, hyper: Hyper, rng: Rng, *,
          init: ModelParams | None = None, rec_radius: float = 0.9,
          start_epoch: int = 0) -> tuple[ModelParams, TrainReport]:
    """Fit the model on dataset.train_idx, early-stopping on dataset.val_idx.

    Per-sample mode takes one Adam step per training sequence, visiting
    samples in a seeded per-epoch permutation. Per-epoch mode accumulates the
    gradients of all training samples in ascending index order, then takes a
    single step. When the validation split is empty the training loss doubles
    as the stopping signal. Returns the best-epoch parameters and the report.
    """
    train_idx = list(dataset.train_idx)
    val_idx = list(dataset.val_idx)
    if not train_idx:
        raise ValueError("dataset has no training samples")

    params = init.copy() if init is not None else init_params(
        config, rng.split("init"), rec_radius)
    state = adam_init(params)
    report = TrainReport(start_epoch=start_epoch)
    best = params.copy()
    stale = 0
    t0 = time.perf_counter()

    for epoch in range(start_epoch, start_epoch + hyper.max_epochs):
        epoch_loss = 0.0
        epoch_steps = 0
        if hyper.update_every == "sample":
            order = rng.split(f"order.{epoch}").permutation(len(train_idx))
            for pos in order:
                i = train_idx[pos]
                s = dataset.samples[i]
                loss, steps, grads = _sample_pass(params, s, hyper)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, i)
                clip_gradients(grads, hyper.grad_clip)
                adam_step(params, grads, state, hyper)
                epoch_loss += loss
                epoch_steps += steps
        else:
            total = params.zeros_like()
            for i in sorted(train_idx):
                s = dataset.samples[i]
                loss, steps, grads = _sample_pass(params, s, hyper)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(epoch, i)
                accumulate(total, grads)
                epoch_loss += loss
                epoch_steps += steps
            clip_gradients(total, hyper.grad_clip)
            adam_step(params, total, state, hyper)

        train_loss = epoch_loss / max(epoch_steps, 1)
        val_loss = _split_loss(params, dataset, val_idx) if val_idx else train_loss
        report.train_losses.append(train_loss)
        report.val_losses.append(val_loss)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(epoch, -1)

        if val_loss < report.best_val_loss:
            report.best_val_loss = val_loss
            report.best_epoch = epoch
            best = params.copy()
            stale = 0
        else:
            stale += 1
            if stale > hyper.patience:
                break

    report.wall_time = time.perf_counter() - t0
    return best, report


def evaluate(params: ModelParams, dataset, split: str = "test",
             denormalized: bool = False) -> dict:
    """Aggregate error metrics over one split.

    rmse = sqrt(total squared error / (output_dim * steps)) and
    mae = total absolute error / (output_dim * steps), pooled over every
    step of every sample in the split. For recall-task datasets that carry
    segment metadata (s1, s2, ts) the gap-adjusted MSE is added: the squared
    error total divided by output_dim * steps * (s1+s2)/(s1+s2+ts).
    """
    idx = dataset.split_indices(split)
    if not idx:
        raise ValueError(f"split {split!r} is empty")
    n_dim = params.config.output_dim
    total_sq = 0.0
    total_abs = 0.0
    steps = 0
    for i in idx:
        s = dataset.samples[i]
        trace = forward_sample(params, s.same, s.coarse, s.fine)
        pred, ref = trace.outputs, s.targets
        if denormalized and dataset.norm is not None:
            pred = dataset.norm.denormalize_targets(pred)
            ref = dataset.norm.denormalize_targets(ref)
        diff = pred - ref
        total_sq += float(np.sum(diff * diff))
        total_abs += float(np.sum(np.abs(diff)))
        steps += pred.shape[0]
    metrics = {
        "rmse": float(np.sqrt(total_sq / (n_dim * steps))),
        "mae": total_abs / (n_dim * steps),
        "samples": len(idx),
        "steps": steps,
    }
    meta = getattr(dataset, "metadata", {}) or {}
    if all(k in meta for k in ("s1", "s2", "ts")):
        factor = (meta["s1"] + meta["s2"]) / (meta["s1"] + meta["s2"] + meta["ts"])
        metrics["adjusted_mse"] = total_sq / (n_dim * steps * factor)
    return metrics
