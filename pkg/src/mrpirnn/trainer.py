"""Coarse-to-fine training of the physics-informed surrogate.

Each stage trains on trials projected to one wavelet scale and hands its best
weights and identification trainables to the next, finer stage.  The final
stage always works on the raw signals.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from . import autodiff as ad
from .datagen import TEST_TRIALS, TRAIN_TRIALS, Trial, TrialSet
from .dynamics import ElbowGeometry
from .muscle import ActivationParams, MuscleSlackError, emg_to_activation
from .network import NetworkConfig, Windows, augment_motion_noise, concat_windows, forward_teacher, init_weights, make_windows, rollout
from .physics import (
    PARAM_NAMES,
    IdentMode,
    IdentTargets,
    Metrics,
    data_loss,
    metrics,
    residual,
    residual_loss,
    total_loss,
)
from .wavelet import project_to_scale

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# starting guesses deliberately away from the true values used to synthesize data
DEFAULT_INITIAL = {"f0_Bi": 250.0, "l0_Bi": 0.55, "f0_Tri": 350.0, "l0_Tri": 0.45}


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    scales: tuple[int, ...] = (-2, -1, 0)
    total_epochs: int = 3000
    learning_rate: float = 1e-3
    beta: float = 1e-3
    noise_sigma: float = 0.01
    early_stop_patience: int = 200
    seeds: tuple[int, ...] = (0, 1, 2)
    train_trial_ids: tuple[int, ...] = TRAIN_TRIALS
    test_trial_ids: tuple[int, ...] = TEST_TRIALS
    network: NetworkConfig = NetworkConfig()
    ident: IdentTargets = IdentTargets(IdentMode.NORMALIZED, DEFAULT_INITIAL)
    epochs_per_scale: int | None = None  # overrides the equal split of total_epochs
    tie_vmax: bool = True
    residual_on_clean_history: bool = True

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "train_trial_ids", tuple(self.train_trial_ids))
        object.__setattr__(self, "test_trial_ids", tuple(self.test_trial_ids))
        s = self.scales
        if not s or s[-1] != 0 or any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError(f"scales must be strictly increasing and end at 0, got {list(s)}")
        if self.learning_rate <= 0 or self.total_epochs < 0 or self.beta < 0 or self.noise_sigma < 0:
            raise ValueError("learning rate must be positive; epochs, beta and noise must be >= 0")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.epochs_per_scale is not None and self.epochs_per_scale < 0:
            raise ValueError("epochs_per_scale must be >= 0")
        if not self.train_trial_ids:
            raise ValueError("at least one training trial is required")

    @property
    def stage_epochs(self) -> int:
        if self.epochs_per_scale is not None:
            return self.epochs_per_scale
        return self.total_epochs // len(self.scales)


@dataclass
class AdamState:
    first: dict[str, np.ndarray]
    second: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> AdamState:
        return cls({k: np.zeros_like(v) for k, v in params.items()}, {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and a new state."""
    for name, g in grads.items():
        if np.shape(g) != np.shape(params[name]):
            raise ValueError(f"gradient shape {np.shape(g)} does not match parameter {name} {np.shape(params[name])}")
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"diverged: non-finite gradient for {name}")
    step = state.step + 1
    corr1 = 1.0 - ADAM_BETA1**step
    corr2 = 1.0 - ADAM_BETA2**step
    new_params, first, second = {}, {}, {}
    for name, p in params.items():
        g = grads[name]
        first[name] = ADAM_BETA1 * state.first[name] + (1.0 - ADAM_BETA1) * g
        second[name] = ADAM_BETA2 * state.second[name] + (1.0 - ADAM_BETA2) * g * g
        new_params[name] = p - lr * (first[name] / corr1) / (np.sqrt(second[name] / corr2) + ADAM_EPS)
    return new_params, AdamState(first, second, step)


@dataclass
class TrainState:
    weights: dict[str, np.ndarray]
    ident: dict[str, np.ndarray]
    adam: AdamState
    scale_index: int = 0
    losses: list[float] = field(default_factory=list)

    def params(self) -> dict[str, np.ndarray]:
        return {**{f"net:{k}": v for k, v in self.weights.items()}, **{f"ident:{k}": v for k, v in self.ident.items()}}

    @staticmethod
    def split(params: Mapping[str, np.ndarray]) -> tuple[dict, dict]:
        weights = {k[4:]: v for k, v in params.items() if k.startswith("net:")}
        ident = {k[6:]: v for k, v in params.items() if k.startswith("ident:")}
        return weights, ident


def init_state(config: TrainConfig, rng: np.random.Generator) -> TrainState:
    weights = init_weights(config.network, rng)
    ident = config.ident.initial_trainables()
    state = TrainState(weights, ident, AdamState({}, {}))
    state.adam = AdamState.zeros_like(state.params())
    return state


@dataclass(frozen=True)
class ScaleData:
    """Teacher-forcing windows and aligned activations for one training scale."""

    scale: int
    windows: Windows
    act_bi: np.ndarray  # (trials, predicted samples)
    act_tri: np.ndarray
    dt: float

    @property
    def n_trials(self) -> int:
        return self.act_bi.shape[0]


def project_trial(trial: Trial, scale: int) -> Trial:
    depth = -scale
    if depth == 0:
        return trial
    return Trial(
        trial.index,
        trial.t,
        project_to_scale(trial.emg_bi, depth),
        project_to_scale(trial.emg_tri, depth),
        project_to_scale(trial.q, depth),
    )


def prepare_scale(trials: list[Trial], scale: int, dt: float, history_steps: int,
                  activation_params: ActivationParams = ActivationParams()) -> ScaleData:
    parts, act_bi, act_tri = [], [], []
    m = history_steps
    for trial in trials:
        view = project_trial(trial, scale)
        parts.append(make_windows(view.inputs, view.q, m))
        act_bi.append(emg_to_activation(view.emg_bi, dt, activation_params)[m:])
        act_tri.append(emg_to_activation(view.emg_tri, dt, activation_params)[m:])
    return ScaleData(scale, concat_windows(parts), np.stack(act_bi), np.stack(act_tri), dt)


@dataclass(frozen=True)
class LossTerms:
    total: float
    data: float
    residual: float
    grads: dict[str, np.ndarray]


def loss_and_grads(weights: Mapping[str, np.ndarray], ident: Mapping[str, np.ndarray], data: ScaleData,
                   q_hist: np.ndarray, config: TrainConfig, geometry: ElbowGeometry = ElbowGeometry()) -> LossTerms:
    """Composite loss on one tape and its gradient for every trainable."""
    tape = ad.Tape()
    w = {k: tape.leaf(v) for k, v in weights.items()}
    p = {k: tape.leaf(v) for k, v in ident.items()}
    gamma = config.ident.physical(p)
    for name in PARAM_NAMES:
        if not np.all(np.isfinite(gamma[name].value)) or np.any(gamma[name].value <= 0):
            raise TrainingDiverged(f"diverged: {name} left the admissible range ({gamma[name].value})")
    pred = forward_teacher(w, data.windows.x_hist, q_hist, data.windows.x_cur, config.network)
    j_data = data_loss(pred, data.windows.target)
    if config.residual_on_clean_history and config.noise_sigma > 0:
        # augmentation noise is independent per window; differencing it twice would swamp the residual
        pred = forward_teacher(w, data.windows.x_hist, data.windows.q_hist, data.windows.x_cur, config.network)
    q_hat = pred.reshape((data.n_trials, -1))
    try:
        r = residual(q_hat, data.act_bi, data.act_tri, gamma, geometry, data.dt, tie_vmax=config.tie_vmax)
    except MuscleSlackError as exc:
        raise TrainingDiverged(f"diverged: {exc}") from None
    j_res = residual_loss(r)
    j = total_loss(j_data, j_res, config.beta)
    if not np.isfinite(j.value):
        raise TrainingDiverged("diverged: non-finite loss")
    g = tape.backward(j)
    grads = {f"net:{k}": g[v] for k, v in w.items()}
    grads.update({f"ident:{k}": g[v] for k, v in p.items()})
    return LossTerms(float(j.value), float(j_data.value), float(j_res.value), grads)


def train_scale(data: ScaleData, state: TrainState, config: TrainConfig, rng: np.random.Generator,
                epochs: int | None = None, on_epoch: Callable[[int, LossTerms, dict], None] | None = None) -> TrainState:
    """Full-batch Adam on one scale with best-loss early stopping.

    The optimizer moments restart here; weights and identification trainables
    come in from ``state`` and the best-loss pair is returned.
    """
    epochs = config.stage_epochs if epochs is None else epochs
    params = state.params()
    adam = AdamState.zeros_like(params)
    best_params, best_loss, since_best = params, np.inf, 0
    losses = []
    for _ in range(epochs):
        q_hist = augment_motion_noise(data.windows.q_hist, config.noise_sigma, rng)
        weights, ident = TrainState.split(params)
        terms = loss_and_grads(weights, ident, data, q_hist, config)
        losses.append(terms.total)
        if on_epoch is not None:
            on_epoch(len(losses), terms, params)
        if terms.total < best_loss:
            best_params, best_loss, since_best = params, terms.total, 0
        else:
            since_best += 1
            if since_best >= config.early_stop_patience:
                break
        params, adam = adam_step(params, terms.grads, adam, config.learning_rate)
    weights, ident = TrainState.split(best_params)
    return TrainState(weights, ident, adam, state.scale_index, state.losses + losses)


@dataclass
class ScaleReport:
    scale: int
    epochs_run: int
    best_loss: float
    test_metrics: dict[int, Metrics]
    identified: dict[str, float]
    weights: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    ident: dict[str, np.ndarray] = field(repr=False, default_factory=dict)

    @property
    def mean_metrics(self) -> Metrics:
        ms = list(self.test_metrics.values())
        return Metrics(*(float(np.mean([getattr(m, f) for m in ms])) for f in ("mse", "r2", "nmse")))


@dataclass
class RunResult:
    seed: int
    reports: list[ScaleReport]
    final: TrainState | None
    error: str | None = None
    seconds: float = 0.0

    @property
    def diverged(self) -> bool:
        return self.error is not None

    @property
    def identified(self) -> dict[str, float]:
        return self.reports[-1].identified if self.reports else {}


def identified_params(ident: Mapping[str, np.ndarray], config: TrainConfig) -> dict[str, float]:
    gamma = config.ident.physical(ident)
    return {name: float(np.asarray(gamma[name]).reshape(-1)[0]) for name in PARAM_NAMES}


def evaluate(weights: Mapping[str, np.ndarray], trials: list[Trial], network: NetworkConfig) -> dict[int, Metrics]:
    """Rollout on raw trials seeded with the first ``m`` measured samples; scored on predicted samples."""
    m = network.history_steps
    out = {}
    for trial in trials:
        pred = rollout(weights, trial.inputs, trial.q[:m], network)
        out[trial.index] = metrics(trial.q[m:], pred[m:])
    return out


def train_multiresolution(trialset: TrialSet, config: TrainConfig, seed: int,
                          on_epoch: Callable[[int, LossTerms, dict], None] | None = None) -> RunResult:
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    state = init_state(config, rng)
    train = trialset.subset(config.train_trial_ids)
    test = trialset.subset(config.test_trial_ids)
    reports = []
    for index, scale in enumerate(config.scales):
        data = prepare_scale(train, scale, trialset.dt, config.network.history_steps)
        before = len(state.losses)
        state.scale_index = index
        state = train_scale(data, state, config, rng, on_epoch=on_epoch)
        run = state.losses[before:]
        reports.append(ScaleReport(
            scale=scale,
            epochs_run=len(run),
            best_loss=float(min(run)) if run else float("nan"),
            test_metrics=evaluate(state.weights, test, config.network) if test else {},
            identified=identified_params(state.ident, config),
            weights={k: v.copy() for k, v in state.weights.items()},
            ident={k: v.copy() for k, v in state.ident.items()},
        ))
    return RunResult(seed, reports, state, seconds=time.perf_counter() - start)


def run_experiment(trialset: TrialSet, config: TrainConfig, seeds=None) -> list[RunResult]:
    """Every seed in turn; a diverged seed is recorded and the rest still run."""
    results = []
    for seed in config.seeds if seeds is None else seeds:
        start = time.perf_counter()
        try:
            results.append(train_multiresolution(trialset, config, seed))
        except TrainingDiverged as exc:
            results.append(RunResult(seed, [], None, error=str(exc), seconds=time.perf_counter() - start))
    return results
