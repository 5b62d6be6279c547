"""Recurrent surrogates mapping (time, sEMG) windows to joint motion.

Weights live in a plain ``dict`` from parameter name to array, so the
trainer can swap arrays for tape variables without a separate model class.
Every step function is batched: hidden states are ``(batch, hidden)``,
inputs ``(batch, n_inputs)`` and motion ``(batch, n_motion)``.

A window holds ``m`` history steps that see the measured (or fed back)
motion, followed by one current step that sees only the inputs; the
prediction is read out from the last hidden state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import autodiff as ad

GRU_GATES = ("reset", "update", "candidate")
GRU_MATRICES = tuple(f"{gate}_{src}" for gate in GRU_GATES for src in ("hidden", "input", "motion")) + ("readout",)
GRU_BIASES = ("reset_bias", "update_bias", "candidate_bias", "state_bias", "readout_bias")

RNN_MATRICES = ("recurrent_hidden", "recurrent_input", "recurrent_motion", "readout")
RNN_BIASES = ("state_bias", "readout_bias")


@dataclass(frozen=True)
class NetworkConfig:
    cell: str = "gru"
    hidden_size: int = 50
    history_steps: int = 2
    n_inputs: int = 3  # time plus two sEMG channels
    n_motion: int = 1
    hidden_bias: bool = True  # the additive bias on the GRU hidden update

    def __post_init__(self):
        if self.cell not in ("gru", "rnn"):
            raise ValueError(f"unknown cell {self.cell!r}")
        if self.hidden_size < 1 or self.history_steps < 0 or self.n_inputs < 1 or self.n_motion < 1:
            raise ValueError("network sizes must be positive (history_steps >= 0)")

    def shapes(self) -> dict[str, tuple[int, ...]]:
        h, n_in, n_q = self.hidden_size, self.n_inputs, self.n_motion
        source = {"hidden": h, "input": n_in, "motion": n_q}
        out: dict[str, tuple[int, ...]] = {}
        matrices = GRU_MATRICES if self.cell == "gru" else RNN_MATRICES
        biases = GRU_BIASES if self.cell == "gru" else RNN_BIASES
        for name in matrices:
            out[name] = (n_q, h) if name == "readout" else (h, source[name.rsplit("_", 1)[1]])
        for name in biases:
            out[name] = (n_q,) if name == "readout_bias" else (h,)
        return out


def init_weights(config: NetworkConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Matrices drawn from U(-1/sqrt(H), 1/sqrt(H)); biases start at zero."""
    bound = 1.0 / math.sqrt(config.hidden_size)
    weights = {}
    for name, shape in config.shapes().items():
        if name.endswith("_bias"):
            weights[name] = np.zeros(shape)
        else:
            weights[name] = rng.uniform(-bound, bound, size=shape)
    return weights


def check_weights(weights: Mapping[str, np.ndarray], config: NetworkConfig) -> None:
    expected = config.shapes()
    if set(weights) != set(expected):
        missing = sorted(set(expected) - set(weights))
        extra = sorted(set(weights) - set(expected))
        raise ValueError(f"weight names mismatch (missing {missing}, unexpected {extra})")
    for name, shape in expected.items():
        got = np.shape(ad.value(weights[name]))
        if got != shape:
            raise ValueError(f"{name} has shape {got}, expected {shape}")
        if not np.all(np.isfinite(ad.value(weights[name]))):
            raise ValueError(f"{name} holds non-finite values")


def _affine(w, name, h, x, q):
    """Sum of the gate's projections of hidden state, inputs and (optionally) motion."""
    z = h @ w[f"{name}_hidden"].T + x @ w[f"{name}_input"].T
    if q is not None:
        z = z + q @ w[f"{name}_motion"].T
    return z


def gru_step(h_prev, x, q, weights: Mapping, hidden_bias: bool = True):
    """One GRU update; ``q=None`` gives the current-step form without motion terms."""
    w = weights
    reset = ad.sigmoid(_affine(w, "reset", h_prev, x, q) + w["reset_bias"])
    update = ad.sigmoid(_affine(w, "update", h_prev, x, q) + w["update_bias"])
    gated = reset * (h_prev @ w["candidate_hidden"].T)
    drive = gated + x @ w["candidate_input"].T + w["candidate_bias"]
    if q is not None:
        drive = drive + q @ w["candidate_motion"].T
    candidate = ad.tanh(drive)
    h = update * h_prev + (1.0 - update) * candidate
    if hidden_bias:
        h = h + w["state_bias"]
    return h


def gru_history_step(h_prev, x, q, weights: Mapping, hidden_bias: bool = True):
    return gru_step(h_prev, x, q, weights, hidden_bias)


def gru_current_step(h_prev, x, weights: Mapping, hidden_bias: bool = True):
    return gru_step(h_prev, x, None, weights, hidden_bias)


def rnn_step(h_prev, x, q, weights: Mapping):
    return ad.tanh(_affine(weights, "recurrent", h_prev, x, q) + weights["state_bias"])


def readout(h, weights: Mapping):
    return h @ weights["readout"].T + weights["readout_bias"]


def forward_teacher(weights: Mapping, x_hist, q_hist, x_cur, config: NetworkConfig, h_init=None):
    """Predict the current motion for a batch of windows.

    ``x_hist`` is ``(batch, m, n_inputs)``, ``q_hist`` is ``(batch, m, n_motion)``
    (numpy; the history is data, not a trainable) and ``x_cur`` is
    ``(batch, n_inputs)``.  Returns ``(batch, n_motion)``.
    """
    x_hist = np.asarray(x_hist, dtype=float)
    q_hist = np.asarray(q_hist, dtype=float)
    x_cur = np.asarray(x_cur, dtype=float)
    batch = x_cur.shape[0]
    m = config.history_steps
    if x_hist.shape != (batch, m, config.n_inputs) or q_hist.shape != (batch, m, config.n_motion):
        raise ValueError(
            f"window shapes {x_hist.shape}, {q_hist.shape} do not match history_steps={m}, batch={batch}"
        )
    h = np.zeros((batch, config.hidden_size)) if h_init is None else h_init
    for i in range(m):
        if config.cell == "gru":
            h = gru_history_step(h, x_hist[:, i], q_hist[:, i], weights, config.hidden_bias)
        else:
            h = rnn_step(h, x_hist[:, i], q_hist[:, i], weights)
    if config.cell == "gru":
        h = gru_current_step(h, x_cur, weights, config.hidden_bias)
    else:
        h = rnn_step(h, x_cur, None, weights)
    return readout(h, weights)


@dataclass(frozen=True)
class Windows:
    """Teacher-forcing windows cut from one or more trials."""

    x_hist: np.ndarray  # (batch, m, n_inputs)
    q_hist: np.ndarray  # (batch, m, n_motion)
    x_cur: np.ndarray  # (batch, n_inputs)
    target: np.ndarray  # (batch, n_motion)

    def __len__(self) -> int:
        return len(self.target)


def make_windows(inputs: np.ndarray, motion: np.ndarray, history_steps: int) -> Windows:
    """Every window of one trial, ordered by the predicted index ``m .. N-1``."""
    inputs = np.asarray(inputs, dtype=float)
    motion = np.asarray(motion, dtype=float)
    if motion.ndim == 1:
        motion = motion[:, None]
    n = len(inputs)
    m = history_steps
    if len(motion) != n:
        raise ValueError("inputs and motion differ in length")
    if n <= m:
        raise ValueError(f"trial of {n} samples is too short for {m} history steps")
    current = np.arange(m, n)
    hist = current[:, None] - m + np.arange(m)[None, :]
    return Windows(inputs[hist], motion[hist], inputs[current], motion[current])


def concat_windows(parts: list[Windows]) -> Windows:
    return Windows(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("x_hist", "q_hist", "x_cur", "target")))


def augment_motion_noise(q_hist: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """History motion plus i.i.d. N(0, sigma^2); the input array is not modified."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    q_hist = np.asarray(q_hist, dtype=float)
    if sigma == 0:
        return q_hist.copy()
    return q_hist + rng.normal(0.0, sigma, size=q_hist.shape)


def rollout(weights: Mapping, inputs: np.ndarray, seed_motion: np.ndarray, config: NetworkConfig) -> np.ndarray:
    """Autoregressive prediction over a whole trial.

    The first ``m`` entries are the measured seed; afterwards each window's
    history slots hold the model's own earlier predictions.
    """
    inputs = np.asarray(inputs, dtype=float)
    m = config.history_steps
    seed_motion = np.asarray(seed_motion, dtype=float).reshape(-1, config.n_motion)
    n = len(inputs)
    if n <= m:
        raise ValueError(f"sequence of {n} samples is too short for {m} history steps")
    if len(seed_motion) != m:
        raise ValueError(f"seed window must hold {m} samples, got {len(seed_motion)}")
    w = {k: ad.value(v) for k, v in weights.items()}
    out = np.empty((n, config.n_motion))
    out[:m] = seed_motion
    for k in range(m, n):
        pred = forward_teacher(w, inputs[None, k - m:k], out[None, k - m:k], inputs[None, k], config)
        out[k] = pred[0]
    return out[:, 0] if config.n_motion == 1 else out
