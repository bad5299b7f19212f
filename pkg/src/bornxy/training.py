"""Negative log-likelihood training of tensor-train Born machines with Adam.

The model is trained unnormalised: probabilities are |psi(v)|^2 / Z. The
gradient of the batch loss

    L = -(1/|B|) sum_v [2 log|psi(v)| - log Z]

is  dlog Z - (2/|B|) sum_v dpsi(v)/psi(v),  with both pieces obtained from
environment contractions around the ring (open trains are rings with a
unit closing bond, see :mod:`bornxy.mps`).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .common import NumericalError
from .mps import (
    TensorTrain,
    _left_envs,
    _prefix_products,
    _right_envs,
    _suffix_products,
    log_amplitudes,
    norm_squared,
)
from .sampler import Dataset

RENORM_EVERY = 100


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 200
    epochs: int = 20
    learning_rate: float = 0.005
    final_learning_rate: float | None = None
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    shuffle_seed: int = 0
    prob_floor: float = 1e-30

    def __post_init__(self):
        if int(self.batch_size) != self.batch_size or self.batch_size < 1:
            raise ValueError(f"batch_size must be an integer >= 1, got {self.batch_size}")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError(f"epochs must be an integer >= 1, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.final_learning_rate is not None and not self.final_learning_rate > 0:
            raise ValueError(f"final_learning_rate must be positive, got {self.final_learning_rate}")
        for name in ("adam_beta1", "adam_beta2"):
            beta = getattr(self, name)
            if not 0 <= beta < 1:
                raise ValueError(f"{name} must lie in [0, 1), got {beta}")
        if not self.prob_floor > 0:
            raise ValueError("prob_floor must be positive")


@dataclass
class OptimizerState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "OptimizerState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


@dataclass
class LossValue:
    nll: float
    log_z: float
    batch_id: int = 0
    n_floored: int = 0


@dataclass
class TrainHistory:
    step_loss: list[float] = field(default_factory=list)
    step_epoch: list[int] = field(default_factory=list)
    epoch_loss: list[float] = field(default_factory=list)  # full-dataset NLL after each epoch
    epoch_fidelity: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    n_floored: int = 0


def _as_configs(batch) -> np.ndarray:
    if isinstance(batch, Dataset):
        batch = batch.configs
    configs = np.atleast_2d(np.asarray(batch)).astype(np.intp)
    if len(configs) == 0:
        raise ValueError("empty batch")
    return configs


def _log_probs(tt: TensorTrain, configs: np.ndarray, floor: float):
    log_psi, _ = log_amplitudes(tt, configs)
    z = norm_squared(tt)
    if z.log_abs == -np.inf:
        raise NumericalError("model has zero norm")
    if np.all(log_psi == -np.inf):
        raise NumericalError("all batch amplitudes vanish")
    log_p = 2 * log_psi - z.log_abs
    floored = log_p < np.log(floor)
    return np.maximum(log_p, np.log(floor)), z.log_abs, int(floored.sum())


def nll_loss(tt: TensorTrain, batch, prob_floor: float = 1e-30, batch_id: int = 0) -> LossValue:
    configs = _as_configs(batch)
    log_p, log_z, nf = _log_probs(tt, configs, prob_floor)
    return LossValue(float(-log_p.mean()), float(log_z), batch_id, nf)


def dataset_nll(tt: TensorTrain, data: Dataset, prob_floor: float = 1e-30) -> float:
    """Full-dataset NLL, evaluated once per distinct configuration."""
    uniq, counts = np.unique(np.asarray(data.configs), axis=0, return_counts=True)
    log_p, _, _ = _log_probs(tt, uniq.astype(np.intp), prob_floor)
    return float(-(counts * log_p).sum() / counts.sum())


def _norm_gradient(tensors: Sequence[np.ndarray]) -> list[np.ndarray]:
    """d log Z / dA_k for a real train."""
    lefts, _ = _left_envs(tensors, tensors)
    rights, _ = _right_envs(tensors, tensors)
    grads = []
    for k, a in enumerate(tensors):
        # L (p,q,l,m) x R (r,n,p,q) -> (l,m,r,n)
        m = np.tensordot(lefts[k], rights[k + 1], axes=([0, 1], [2, 3]))
        x = np.einsum("lmrn,msn->lsr", m, a)
        z = np.sum(x * a)
        grads.append(2 * x / z)
    return grads


def _data_gradient(tensors: Sequence[np.ndarray], tt: TensorTrain, configs: np.ndarray):
    """sum_v dpsi(v)/dA_k / psi(v) over the batch, in batch order."""
    prefix, _ = _prefix_products(tt, configs)
    suffix, _ = _suffix_products(tt, configs)
    grads = []
    for k, a in enumerate(tensors):
        hole = np.einsum("bpl,brp->blr", prefix[k], suffix[k + 1])
        sl = np.moveaxis(a[:, configs[:, k], :], 1, 0)
        psi = np.einsum("blr,blr->b", hole, sl)
        if np.any(psi == 0):
            bad = configs[int(np.argmax(psi == 0))]
            raise NumericalError(
                "zero model amplitude for training configuration " + "".join(map(str, bad))
            )
        ratio = hole / psi[:, None, None]
        g = np.zeros_like(a)
        for s in range(a.shape[1]):
            mask = configs[:, k] == s
            if mask.any():
                g[:, s, :] = ratio[mask].sum(axis=0)
        grads.append(g)
    return grads


def loss_and_gradient(tt: TensorTrain, batch, prob_floor: float = 1e-30,
                      batch_id: int = 0) -> tuple[LossValue, list[np.ndarray]]:
    if tt.is_complex:
        raise TypeError("training supports real tensor trains only")
    configs = _as_configs(batch)
    loss = nll_loss(tt, configs, prob_floor, batch_id)
    tensors = tt.tensors
    dz = _norm_gradient(tensors)
    dpsi = _data_gradient(tensors, tt, configs)
    b = len(configs)
    return loss, [gz - (2.0 / b) * gp for gz, gp in zip(dz, dpsi)]


def nll_gradient(tt: TensorTrain, batch, prob_floor: float = 1e-30) -> list[np.ndarray]:
    """Analytic gradient of :func:`nll_loss`, one array per site tensor."""
    return loss_and_gradient(tt, batch, prob_floor)[1]


def learning_rate_at(config: TrainConfig, step: int, total_steps: int) -> float:
    """Constant rate, or geometric decay reaching ``final_learning_rate`` on the last step."""
    if config.final_learning_rate is None or total_steps <= 1:
        return config.learning_rate
    frac = min(step, total_steps - 1) / (total_steps - 1)
    return config.learning_rate * (config.final_learning_rate / config.learning_rate) ** frac


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: OptimizerState, config: TrainConfig, lr: float | None = None):
    """Bias-corrected Adam update; returns (new_params, new_state).

    ``lr`` overrides ``config.learning_rate`` for this step.
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and optimizer state differ in length")
    b1, b2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon
    if lr is None:
        lr = config.learning_rate
    t = state.step + 1
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        new_p.append(p - lr * m_hat / (np.sqrt(v_hat) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, OptimizerState(new_m, new_v, t)


def renormalize(tt: TensorTrain) -> None:
    """Rescale all tensors equally so that log Z = 0 (the loss is unchanged)."""
    log_z = norm_squared(tt).log_abs
    factor = np.exp(-log_z / (2 * tt.n_sites))
    tt.set_tensors([t * factor for t in tt.tensors])


def train(tt: TensorTrain, data: Dataset, config: TrainConfig = TrainConfig(),
          reference=None, fidelity_fn: Callable | None = None,
          log: Callable[[str], None] | None = None) -> tuple[TensorTrain, TrainHistory]:
    """Minibatch Adam on the NLL.

    The input train is not modified. ``reference`` (a DenseState or
    TensorTrain) enables per-epoch fidelity tracking.
    """
    if data.count == 0:
        raise ValueError("empty dataset")
    if data.n_sites != tt.n_sites:
        raise ValueError(f"dataset has N = {data.n_sites}, model has N = {tt.n_sites}")
    if fidelity_fn is None and reference is not None:
        from .analysis import fidelity as fidelity_fn

    model = tt.copy()
    renormalize(model)
    configs = np.asarray(data.configs).astype(np.intp)
    n = len(configs)
    rng = np.random.default_rng(config.shuffle_seed)
    state = OptimizerState.zeros_like(model.tensors)
    history = TrainHistory()
    history.initial_loss = dataset_nll(model, data, config.prob_floor)
    step = 0
    total_steps = config.epochs * -(-n // config.batch_size)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = configs[order[start:start + config.batch_size]]
            loss, grads = loss_and_gradient(model, batch, config.prob_floor, batch_id=step)
            history.step_loss.append(loss.nll)
            history.step_epoch.append(epoch)
            history.n_floored += loss.n_floored
            lr = learning_rate_at(config, step, total_steps)
            params, state = adam_step(model.tensors, grads, state, config, lr)
            model.set_tensors(params)
            step += 1
            if step % RENORM_EVERY == 0:
                renormalize(model)
        history.epoch_seconds.append(time.perf_counter() - t0)
        history.epoch_loss.append(dataset_nll(model, data, config.prob_floor))
        if reference is not None:
            history.epoch_fidelity.append(float(fidelity_fn(model, reference)))
        if log is not None:
            msg = f"epoch {epoch + 1}/{config.epochs} nll={history.epoch_loss[-1]:.6f}"
            if history.epoch_fidelity:
                msg += f" F={history.epoch_fidelity[-1]:.6f}"
            log(msg)
    renormalize(model)
    return model, history
