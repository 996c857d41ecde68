"""Optimizer steps and the training loop.

The generic sharpness-aware step is

    g = grad L(x) + lam * [sum_l dphi_l(psi-means) * weighted-mean of
                           psi_l' * (grad L(x + rho v) - grad L(x))]

with lam = 1 recovering the plain sharpness-aware update and lam = 0 reducing
to SGD without consuming any randomness (so lam = 0 trajectories are
byte-identical to SGD). Specialized steps: the squared-Frobenius update uses
the unbiased cross-covariance between perturbed loss values and gradients;
the determinant update wires the hypercube preset through the generic path;
the classic perturb-along-the-gradient step evaluates the gradient at
x + rho * grad/||grad||.

Training is sequential over iterations; per-iteration randomness lives at
stream path (seed, iteration t), so runs are deterministic per (config, seed).
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import ConfigError, NumericalError
from .losses import LossFunction, frobenius_sq_estimate, hutchinson_trace
from .losses.mlp import MlpLoss, MlpModel, mlp_accuracy
from .losses.data import Dataset
from .measures import (LANE_PROBES, LANE_SHUFFLE, LANE_SUBSET, SeededStream,
                       StandardGaussian, UnitSphereUniform, sample)
from .sharpness import Determinant, SharpnessSpec, SpecPreset, regularizer_gradient

OPTIMIZER_KINDS = ("sgd", "sam", "trace_sam", "frob_sam", "det_sam", "generic")

_RANDOMIZED_KINDS = ("trace_sam", "frob_sam", "det_sam", "generic")


@dataclass(frozen=True)
class LrSchedule:
    """Multi-step schedule: multiply by `decay` every `period_epochs`."""

    decay: float = 0.1
    period_epochs: int = 50

    def lr_at(self, base: float, epoch: int) -> float:
        return base * self.decay ** (epoch // self.period_epochs)


@dataclass(frozen=True)
class TrainConfig:
    eta: float
    rho: float = 0.0
    n_samples: int = 1
    lam: float = 0.0
    epochs: int = 0
    batch_size: int = 0          # 0 = full batch
    momentum: float = 0.0
    schedule: LrSchedule = field(default_factory=LrSchedule)
    seed: int = 0
    optimizer: str = "sgd"
    preset: Optional[SpecPreset] = None
    det_half_width: float = 0.01

    def validate(self) -> None:
        if not self.eta > 0:
            raise ConfigError(f"step size must be positive, got {self.eta}")
        if self.lam < 0:
            raise ConfigError(f"regularization weight must be >= 0, got {self.lam}")
        if self.optimizer not in OPTIMIZER_KINDS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZER_KINDS}")
        if self.optimizer in _RANDOMIZED_KINDS and not self.rho > 0:
            raise ConfigError(f"{self.optimizer} needs rho > 0, got {self.rho}")
        if self.optimizer == "sam" and self.rho < 0:
            raise ConfigError(f"sam needs rho >= 0, got {self.rho}")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.optimizer == "frob_sam" and self.n_samples < 2:
            raise ConfigError("frob_sam needs n_samples >= 2")
        if self.optimizer == "generic" and self.preset is None:
            raise ConfigError("generic optimizer needs a sharpness preset")
        if self.epochs < 0 or self.batch_size < 0:
            raise ConfigError("epochs and batch_size must be >= 0")
        if not 0 <= self.momentum < 1:
            raise ConfigError(f"momentum must lie in [0, 1), got {self.momentum}")
        if not self.det_half_width > 0:
            raise ConfigError("det_half_width must be positive")


def step_sgd(loss: LossFunction, x: np.ndarray,
             base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    return loss.grad(x) if base_grad is None else base_grad


def step_sam(loss: LossFunction, x: np.ndarray, cfg: TrainConfig,
             base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    """Gradient at the normalized-ascent point x + rho * g / ||g||.

    At a critical point the ascent direction is undefined and the step falls
    back to the plain (zero) gradient.
    """
    g = loss.grad(x) if base_grad is None else base_grad
    norm = float(np.linalg.norm(g))
    if norm == 0.0 or cfg.rho == 0.0:
        return g
    return loss.grad(x + cfg.rho * g / norm)


def step_generic(loss: LossFunction, x: np.ndarray, spec: SharpnessSpec,
                 cfg: TrainConfig, stream: SeededStream,
                 base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    g = loss.grad(x) if base_grad is None else base_grad
    if cfg.lam == 0.0:
        return g
    reg = regularizer_gradient(loss, x, spec, cfg.rho, stream, cfg.n_samples,
                               base_grad=g)
    return g + cfg.lam * reg


def step_trace(loss: LossFunction, x: np.ndarray, cfg: TrainConfig,
               stream: SeededStream,
               base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    """Simplified trace-biased step: identity phi and psi collapse the
    generic update to g + lam * weighted-mean of gradient differences."""
    g = loss.grad(x) if base_grad is None else base_grad
    if cfg.lam == 0.0:
        return g
    batch = sample(UnitSphereUniform(loss.dim), stream.at(component=0),
                   cfg.n_samples)
    grads = np.asarray(loss.grad_batch(x[None, :] + cfg.rho * batch.points))
    return g + cfg.lam * (batch.weights @ (grads - g))


def step_frob(loss: LossFunction, x: np.ndarray, cfg: TrainConfig,
              stream: SeededStream,
              base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    """Squared-Frobenius-biased step via the unbiased cross-covariance of
    perturbed loss values and gradients (Gaussian perturbations):

        g + lam * [ 4/((n-1) rho^2) sum_i L_i grad_i
                    - 4 (sum_i L_i / ((n-1) rho)) (sum_i grad_i / (n rho)) ]
    """
    if cfg.n_samples < 2:
        raise ConfigError("frob_sam needs n_samples >= 2")
    g = loss.grad(x) if base_grad is None else base_grad
    if cfg.lam == 0.0:
        return g
    n, rho = cfg.n_samples, cfg.rho
    batch = sample(StandardGaussian(loss.dim), stream.at(component=0), n)
    xs = x[None, :] + rho * batch.points
    vals = np.asarray(loss.value_batch(xs), dtype=float)
    grads = np.asarray(loss.grad_batch(xs), dtype=float)
    if not (np.all(np.isfinite(vals)) and np.all(np.isfinite(grads))):
        raise NumericalError("non-finite loss or gradient at a perturbed point")
    term1 = 4.0 * (vals @ grads) / ((n - 1) * rho ** 2)
    term2 = 4.0 * (np.sum(vals) / ((n - 1) * rho)) * (np.sum(grads, axis=0) / (n * rho))
    return g + cfg.lam * (term1 - term2)


def step_det(loss: LossFunction, x: np.ndarray, cfg: TrainConfig,
             stream: SeededStream,
             base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    """Determinant-biased step: the generic update with the hypercube preset."""
    spec = Determinant(cfg.det_half_width).spec(loss.dim)
    return step_generic(loss, x, spec, cfg, stream, base_grad=base_grad)


def compute_step(loss: LossFunction, x: np.ndarray, cfg: TrainConfig,
                 stream: SeededStream,
                 base_grad: Optional[np.ndarray] = None) -> np.ndarray:
    kind = cfg.optimizer
    if kind == "sgd":
        return step_sgd(loss, x, base_grad)
    if kind == "sam":
        return step_sam(loss, x, cfg, base_grad)
    if kind == "trace_sam":
        return step_trace(loss, x, cfg, stream, base_grad)
    if kind == "frob_sam":
        return step_frob(loss, x, cfg, stream, base_grad)
    if kind == "det_sam":
        return step_det(loss, x, cfg, stream, base_grad)
    if kind == "generic":
        spec = cfg.preset.spec(loss.dim)
        return step_generic(loss, x, spec, cfg, stream, base_grad)
    raise ConfigError(f"unknown optimizer kind {kind!r}")


@dataclass(frozen=True)
class SharpnessTracking:
    """Per-epoch curvature estimates on a fixed training subsample."""

    trace: bool = False
    frob_sq: bool = False
    probes: int = 100
    subsample: int = 1280


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    test_accuracy: Optional[float]
    trace_estimate: Optional[float]
    frob_sq_estimate: Optional[float]
    wall_clock_sec: float
    lam: float
    seed: int


@dataclass
class RunRecord:
    """Per-epoch training metrics; deterministic per (config, seed) except
    for the wall-clock column, which is excluded from persisted CSVs."""

    rows: list[EpochRow] = field(default_factory=list)

    CSV_COLUMNS = ("epoch", "train_loss", "test_accuracy", "trace_estimate",
                   "frob_sq_estimate", "lam", "seed")

    def csv_rows(self) -> list[tuple]:
        return [(r.epoch, r.train_loss, r.test_accuracy, r.trace_estimate,
                 r.frob_sq_estimate, r.lam, r.seed) for r in self.rows]


@dataclass
class TrainerState:
    x: np.ndarray
    momentum_buf: np.ndarray
    t: int = 0
    epoch: int = 0


@dataclass
class TrainResult:
    record: RunRecord
    params: np.ndarray
    state: TrainerState


def _batches(n: int, batch_size: int, gen: np.random.Generator):
    order = gen.permutation(n)
    size = n if batch_size == 0 else min(batch_size, n)
    for start in range(0, n, size):
        yield order[start: start + size]


def train(objective: Union[LossFunction, MlpModel], cfg: TrainConfig, *,
          train_data: Optional[Dataset] = None,
          test_data: Optional[Dataset] = None,
          tracking: Optional[SharpnessTracking] = None,
          x0: Optional[np.ndarray] = None) -> TrainResult:
    """Momentum-SGD loop over the configured step rule.

    Analytic losses run full-batch on the loss itself (x0 required); a model
    objective draws mini-batches from train_data. Everything downstream of
    (cfg, seed) is deterministic.
    """
    cfg.validate()
    base = SeededStream(cfg.seed)
    is_model = isinstance(objective, MlpModel)
    if is_model:
        if train_data is None:
            raise ConfigError("training a model requires train_data")
        params = objective.init_params(base) if x0 is None else np.asarray(x0, float).copy()
    else:
        if x0 is None:
            raise ConfigError("training an analytic loss requires x0")
        params = np.asarray(x0, dtype=float).copy()

    state = TrainerState(x=params, momentum_buf=np.zeros_like(params))
    record = RunRecord()

    track_loss = None
    if tracking is not None and is_model and (tracking.trace or tracking.frob_sq):
        count = min(tracking.subsample, train_data.size)
        pick = base.at(component=LANE_SUBSET).generator().permutation(
            train_data.size)[:count]
        sub = train_data.take(np.sort(pick))
        track_loss = MlpLoss(objective, sub.features, sub.labels)

    for epoch in range(cfg.epochs):
        started = time.perf_counter()
        lr = cfg.schedule.lr_at(cfg.eta, epoch)
        losses = []
        if is_model:
            shuffle_gen = base.at(iteration=epoch, component=LANE_SHUFFLE).generator()
            batch_iter = list(_batches(train_data.size, cfg.batch_size, shuffle_gen))
        else:
            batch_iter = [None]
        for batch_idx in batch_iter:
            if is_model:
                loss = MlpLoss(objective, train_data.features[batch_idx],
                               train_data.labels[batch_idx])
                val, g = loss.value_and_grad(state.x)
            else:
                loss = objective
                val, g = loss.value(state.x), loss.grad(state.x)
            if not np.isfinite(val):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}, iteration {state.t}")
            step_stream = base.at(iteration=state.t)
            g_t = compute_step(loss, state.x, cfg, step_stream, base_grad=g)
            state.momentum_buf = cfg.momentum * state.momentum_buf + g_t
            state.x = state.x - lr * state.momentum_buf
            state.t += 1
            losses.append(val)
        state.epoch = epoch + 1

        test_acc = None
        if is_model and test_data is not None and objective.head == "softmax_ce":
            test_acc = mlp_accuracy(objective, state.x, test_data.features,
                                    test_data.labels)
        trace_est = frob_est = None
        if track_loss is not None:
            probe_stream = base.at(iteration=epoch, component=LANE_PROBES)
            if tracking.frob_sq:
                frob_est = frobenius_sq_estimate(track_loss, state.x,
                                                 tracking.probes,
                                                 probe_stream.at(block=0))
            if tracking.trace:
                trace_est = hutchinson_trace(track_loss, state.x,
                                             tracking.probes,
                                             probe_stream.at(block=1))
        record.rows.append(EpochRow(
            epoch=epoch + 1,
            train_loss=float(np.mean(losses)),
            test_accuracy=test_acc,
            trace_estimate=trace_est,
            frob_sq_estimate=frob_est,
            wall_clock_sec=time.perf_counter() - started,
            lam=cfg.lam,
            seed=cfg.seed,
        ))
    return TrainResult(record=record, params=state.x, state=state)


# ---------------------------------------------------------------------------
# Checkpoints: one JSON header line, then raw little-endian float64 params.
# ---------------------------------------------------------------------------


def save_checkpoint(path, params: np.ndarray, meta: dict) -> None:
    params = np.asarray(params, dtype="<f8")
    header = dict(meta)
    header["param_count"] = int(params.size)
    header["dtype"] = "<f8"
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        f.write(params.tobytes())


def load_checkpoint(path) -> tuple[np.ndarray, dict]:
    with open(path, "rb") as f:
        header = json.loads(f.readline().decode("utf-8"))
        raw = f.read()
    count = int(header["param_count"])
    params = np.frombuffer(raw, dtype="<f8", count=count).copy()
    if params.size != count:
        raise NumericalError(f"checkpoint truncated: {params.size}/{count} parameters")
    return params, header
