"""Synthetic five-trial sEMG/motion sets for the identification study."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import ElbowGeometry, solve_forward
from .muscle import BICEPS, TRICEPS, ActivationParams, MuscleParams

N_SAMPLES = 500
DT = 0.005
Q0 = math.pi / 6
TRIAL_IDS = (1, 2, 3, 4, 5)
TRAIN_TRIALS = (1, 2, 4, 5)
TEST_TRIALS = (3,)
NOISE_CASES = (0.1, 0.15, 0.2)

PEAK = 0.9
BASE_FREQUENCY = 0.4  # Hz per trial index


def raised_cosine(t, freq, phase):
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * freq * t + phase))


@dataclass(frozen=True)
class Trial:
    index: int
    t: np.ndarray
    emg_bi: np.ndarray
    emg_tri: np.ndarray
    q: np.ndarray

    @property
    def inputs(self) -> np.ndarray:
        """Network inputs per sample: time and both sEMG channels."""
        return np.column_stack([self.t, self.emg_bi, self.emg_tri])


@dataclass(frozen=True)
class TrialSet:
    trials: tuple[Trial, ...]
    dt: float
    noise_sigma: float
    seed: int
    truth: dict[str, float] = field(default_factory=dict)
    train_ids: tuple[int, ...] = TRAIN_TRIALS
    test_ids: tuple[int, ...] = TEST_TRIALS

    def by_index(self, index: int) -> Trial:
        for trial in self.trials:
            if trial.index == index:
                return trial
        raise KeyError(f"no trial {index}")

    def subset(self, ids) -> list[Trial]:
        return [self.by_index(i) for i in ids]


def synth_emg(trial_index: int, n: int = N_SAMPLES, dt: float = DT, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Antagonistic burst envelopes whose base frequency grows with the trial index.

    The biceps channel is a slowly windowed burst train plus a weaker faster
    component; the triceps channel is the same construction half a period
    later.  Both peak at most at ``PEAK``.
    """
    if trial_index not in TRIAL_IDS:
        raise ValueError(f"trial_index must be one of {TRIAL_IDS}")
    rng = np.random.default_rng([seed, trial_index])
    t = np.arange(n) * dt
    freq = BASE_FREQUENCY * trial_index
    jitter = rng.uniform(0.0, 0.3, size=2)
    window = 0.75 + 0.25 * np.sin(np.pi * freq * t + 1.0)
    bi = PEAK * (0.8 * window * raised_cosine(t, freq, jitter[0]) + 0.2 * raised_cosine(t, 2.3 * freq, jitter[0]))
    tri_phase = jitter[1] + np.pi
    tri = PEAK * (0.8 * window * raised_cosine(t, freq, tri_phase) + 0.2 * raised_cosine(t, 1.7 * freq, tri_phase))
    return bi, tri


def _solve(emg_bi, emg_tri, dt, geometry, kappa_bi, kappa_tri, activation_params):
    return solve_forward(emg_bi, emg_tri, dt, Q0, 0.0, geometry, kappa_bi, kappa_tri, activation_params)


def clean_trials(
    n: int = N_SAMPLES,
    dt: float = DT,
    seed: int = 0,
    geometry: ElbowGeometry = ElbowGeometry(),
    kappa_bi: MuscleParams = BICEPS,
    kappa_tri: MuscleParams = TRICEPS,
    activation_params: ActivationParams = ActivationParams(),
) -> TrialSet:
    trials = []
    for k in TRIAL_IDS:
        bi, tri = synth_emg(k, n, dt, seed)
        q = _solve(bi, tri, dt, geometry, kappa_bi, kappa_tri, activation_params)
        trials.append(Trial(k, np.arange(n) * dt, bi, tri, q))
    return TrialSet(tuple(trials), dt, 0.0, seed, truth_parameters(kappa_bi, kappa_tri))


def apply_noise_case(
    trialset: TrialSet,
    sigma: float,
    seed: int,
    geometry: ElbowGeometry = ElbowGeometry(),
    kappa_bi: MuscleParams = BICEPS,
    kappa_tri: MuscleParams = TRICEPS,
    activation_params: ActivationParams = ActivationParams(),
) -> TrialSet:
    """Gaussian noise on every sEMG sample, clamp to [0, 1], then re-solve the motion."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return replace(trialset, noise_sigma=0.0)
    rng = np.random.default_rng(seed)
    noisy = []
    for trial in trialset.trials:
        bi = np.clip(trial.emg_bi + rng.normal(0.0, sigma, trial.emg_bi.shape), 0.0, 1.0)
        tri = np.clip(trial.emg_tri + rng.normal(0.0, sigma, trial.emg_tri.shape), 0.0, 1.0)
        q = _solve(bi, tri, trialset.dt, geometry, kappa_bi, kappa_tri, activation_params)
        noisy.append(Trial(trial.index, trial.t, bi, tri, q))
    return replace(trialset, trials=tuple(noisy), noise_sigma=float(sigma), seed=seed)


def truth_parameters(kappa_bi: MuscleParams = BICEPS, kappa_tri: MuscleParams = TRICEPS) -> dict[str, float]:
    return {
        "f0_Bi": float(kappa_bi.f0M),
        "l0_Bi": float(kappa_bi.l0M),
        "f0_Tri": float(kappa_tri.f0M),
        "l0_Tri": float(kappa_tri.l0M),
    }


def build_verification_set(sigma: float, seed: int = 0) -> TrialSet:
    """Five trials under one noise case with the {1,2,4,5}/{3} split and true parameters attached."""
    if sigma not in NOISE_CASES:
        raise ValueError(f"noise case must be one of {NOISE_CASES}")
    return apply_noise_case(clean_trials(seed=seed), sigma, seed)
