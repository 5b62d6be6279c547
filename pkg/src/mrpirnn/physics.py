"""Physics-informed loss for the elbow surrogate and muscle-parameter identification.

The residual of the joint equation of motion is evaluated on the predicted
motion grid with finite differences, so it differentiates through the tape
with respect to both the network weights and the identification trainables.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import autodiff as ad
from .dynamics import ElbowGeometry, external_torque, inertia, muscle_torque
from .muscle import BICEPS, TRICEPS, MuscleParams

PARAM_NAMES = ("f0_Bi", "l0_Bi", "f0_Tri", "l0_Tri")

# fibre-speed rule: vmax / l0 = 10 per second
VMAX_PER_LENGTH = 10.0

# literature ranges used as sigmoid anchors for subject data
LITERATURE_ANCHORS = {
    "f0_Bi": (158.4, 845.0),
    "l0_Bi": (0.115, 0.142),
    "f0_Tri": (554.4, 2332.916),
    "l0_Tri": (0.067, 0.087),
}


class IdentMode(str, enum.Enum):
    NORMALIZED = "normalized"
    SIGMOID = "sigmoid"


@dataclass(frozen=True)
class IdentTargets:
    mode: IdentMode
    initial: Mapping[str, float]
    anchors: Mapping[str, tuple[float, ...]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "mode", IdentMode(self.mode))
        if set(self.initial) != set(PARAM_NAMES):
            raise ValueError(f"initial values must cover exactly {PARAM_NAMES}")
        if any(v <= 0 for v in self.initial.values()):
            raise ValueError("initial parameter values must be positive")
        if self.mode is IdentMode.SIGMOID:
            for name in PARAM_NAMES:
                if not self.anchors.get(name):
                    raise ValueError(f"sigmoid mode needs a non-empty anchor list for {name}")
                if self.initial[name] >= np.mean(self.anchors[name]):
                    raise ValueError(f"initial {name} must lie below the mean of its anchors")

    def initial_trainables(self) -> dict[str, np.ndarray]:
        if self.mode is IdentMode.NORMALIZED:
            return {name: np.ones(1) for name in PARAM_NAMES}
        return {name: sigmoid_start(self.initial[name], self.anchors[name]) for name in PARAM_NAMES}

    def physical(self, trainables: Mapping) -> dict:
        if self.mode is IdentMode.NORMALIZED:
            return params_normalized(trainables, self.initial)
        return params_sigmoid(trainables, self.anchors)


def data_loss(predictions, targets):
    if np.size(ad.value(predictions)) == 0:
        raise ValueError("data loss of an empty prediction set")
    if np.shape(ad.value(predictions)) != np.shape(targets):
        raise ValueError(f"shape mismatch {np.shape(ad.value(predictions))} vs {np.shape(targets)}")
    return ad.mean(ad.square(predictions - np.asarray(targets, dtype=float)))


def residual_loss(residuals):
    if np.size(ad.value(residuals)) == 0:
        raise ValueError("residual loss of an empty sequence")
    return ad.mean(ad.square(residuals))


def total_loss(j_data, j_res, beta: float):
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return j_data + beta * j_res


def finite_differences(q, dt: float):
    """First and second time derivatives along the last axis.

    Interior points use central differences and the two ends use the
    one-sided second-order stencils, so both are exact for quadratics.
    """
    n = np.shape(ad.value(q))[-1]
    if n < 4:
        raise ValueError("finite differences need at least 4 samples")

    def at(i):
        return q[..., i:i + 1] if i >= 0 else q[..., n + i:n + i + 1]

    interior_v = (q[..., 2:] - q[..., :-2]) / (2 * dt)
    first_v = (-3.0 * at(0) + 4.0 * at(1) - at(2)) / (2 * dt)
    last_v = (3.0 * at(-1) - 4.0 * at(-2) + at(-3)) / (2 * dt)
    interior_a = (q[..., 2:] - 2.0 * q[..., 1:-1] + q[..., :-2]) / dt**2
    first_a = (2.0 * at(0) - 5.0 * at(1) + 4.0 * at(2) - at(3)) / dt**2
    last_a = (2.0 * at(-1) - 5.0 * at(-2) + 4.0 * at(-3) - at(-4)) / dt**2
    velocity = ad.concat([first_v, interior_v, last_v], axis=-1)
    accel = ad.concat([first_a, interior_a, last_a], axis=-1)
    return velocity, accel


def muscle_params_from(gamma: Mapping, kappa_bi: MuscleParams = BICEPS, kappa_tri: MuscleParams = TRICEPS,
                       tie_vmax: bool = True) -> tuple[MuscleParams, MuscleParams]:
    """Overlay identified strengths and optimal lengths on the fixed muscle parameters."""
    bi = {"f0M": gamma["f0_Bi"], "l0M": gamma["l0_Bi"]}
    tri = {"f0M": gamma["f0_Tri"], "l0M": gamma["l0_Tri"]}
    if tie_vmax:
        bi["vmaxM"] = VMAX_PER_LENGTH * gamma["l0_Bi"]
        tri["vmaxM"] = VMAX_PER_LENGTH * gamma["l0_Tri"]
    return kappa_bi.replace(**bi), kappa_tri.replace(**tri)


def residual(q_hat, a_bi, a_tri, gamma: Mapping, geometry: ElbowGeometry, dt: float,
             kappa_bi: MuscleParams = BICEPS, kappa_tri: MuscleParams = TRICEPS, tie_vmax: bool = True):
    """I q'' - E(q) - T(a, q, q') on each predicted sample.

    ``q_hat`` is ``(samples,)`` or ``(trials, samples)``; activations share its shape.
    """
    a_bi = np.asarray(a_bi, dtype=float)
    a_tri = np.asarray(a_tri, dtype=float)
    shape = np.shape(ad.value(q_hat))
    if a_bi.shape != shape or a_tri.shape != shape:
        raise ValueError(f"activation shapes {a_bi.shape}, {a_tri.shape} differ from motion {shape}")
    if shape[-1] < 3:
        raise ValueError("residual needs at least 3 samples")
    q_dot, q_ddot = finite_differences(q_hat, dt)
    kb, kt = muscle_params_from(gamma, kappa_bi, kappa_tri, tie_vmax)
    torque = muscle_torque(a_bi, a_tri, q_hat, q_dot, geometry, kb, kt)
    return inertia(geometry) * q_ddot - external_torque(q_hat, geometry) - torque


def params_normalized(scaled: Mapping, initial: Mapping) -> dict:
    out = {}
    for name in PARAM_NAMES:
        if initial[name] <= 0:
            raise ValueError(f"initial {name} must be positive")
        out[name] = scaled[name] * float(initial[name])
    return out


def params_sigmoid(logits: Mapping, anchors: Mapping) -> dict:
    """Each parameter is the mean of its anchors, each squashed by its own sigmoid weight."""
    out = {}
    for name in PARAM_NAMES:
        anchor = np.asarray(anchors[name], dtype=float)
        if anchor.size == 0:
            raise ValueError(f"no anchors for {name}")
        out[name] = ad.mean(anchor * ad.sigmoid(logits[name]))
    return out


def sigmoid_start(initial: float, anchors) -> np.ndarray:
    """Logits that reproduce ``initial`` with every anchor weighted equally."""
    anchors = np.asarray(anchors, dtype=float)
    ratio = initial / anchors.mean()
    if not 0 < ratio < 1:
        raise ValueError("initial value must lie strictly inside (0, mean of anchors)")
    return np.full(anchors.shape, math.log(ratio / (1.0 - ratio)))


@dataclass(frozen=True)
class Metrics:
    mse: float
    r2: float
    nmse: float

    def as_dict(self) -> dict[str, float]:
        return {"mse": self.mse, "r2": self.r2, "nmse": self.nmse}


def metrics(q, q_hat) -> Metrics:
    q = np.asarray(q, dtype=float).ravel()
    q_hat = np.asarray(q_hat, dtype=float).ravel()
    if q.shape != q_hat.shape or q.size == 0:
        raise ValueError("metrics need equal, non-empty sequences")
    sse = float(np.sum((q - q_hat) ** 2))
    sst = float(np.sum((q - q.mean()) ** 2))
    if sst == 0:
        raise ValueError("R2 and NMSE are undefined for a constant target")
    n = q.size
    return Metrics(mse=sse / n, r2=1.0 - sse / sst, nmse=sse / sst / n)


def percent_errors(gamma: Mapping, truth: Mapping) -> dict[str, float]:
    return {name: 100.0 * abs(float(ad.value(gamma[name])) - truth[name]) / truth[name] for name in PARAM_NAMES}
