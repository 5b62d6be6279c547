"""Activation dynamics and a rigid-tendon Hill-type muscle-tendon force model.

Curve functions accept floats, numpy arrays or :class:`~mrpirnn.autodiff.Var`
so the same code drives the reference simulator and the differentiable
residual.  Normalized fibre velocity is positive when lengthening; maximum
shortening is -1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad

GAMMA1 = 0.075
GAMMA2 = 6.6

# force-velocity constants (hyperbolic concentric branch, bounded eccentric plateau)
FV_SHAPE = 0.25
FV_ECCENTRIC_PLATEAU = 1.4


class MuscleSlackError(ValueError):
    """Muscle-tendon path shorter than the tendon slack length."""


@dataclass(frozen=True)
class ActivationParams:
    d: float = 0.08
    A: float = 0.2

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("delay must be >= 0")
        if self.A == 0:
            raise ValueError("shape factor A must be nonzero")


@dataclass(frozen=True)
class MuscleParams:
    """kappa = [l0M, vmaxM, f0M, lsT, phi0].

    Fields may hold :class:`~mrpirnn.autodiff.Var` during identification.
    """

    l0M: float
    vmaxM: float
    f0M: float
    lsT: float
    phi0: float = 0.0

    def __post_init__(self):
        for name in ("l0M", "vmaxM", "f0M"):
            if not np.all(ad.value(getattr(self, name)) > 0):
                raise ValueError(f"{name} must be positive")
        if ad.value(self.lsT) < 0:
            raise ValueError("lsT must be >= 0")
        if not 0 <= ad.value(self.phi0) < math.pi / 2:
            raise ValueError("phi0 must lie in [0, pi/2)")

    def replace(self, **changes) -> MuscleParams:
        fields = {k: getattr(self, k) for k in ("l0M", "vmaxM", "f0M", "lsT", "phi0")}
        fields.update(changes)
        return MuscleParams(**fields)


@dataclass(frozen=True)
class MusclePath:
    """Straight line between an upper-arm point ``l1`` and a forearm point ``l2``
    from the elbow.  A flexor shortens as the elbow angle grows."""

    l1: float
    l2: float
    flexor: bool


BICEPS = MuscleParams(l0M=0.6, vmaxM=6.0, f0M=300.0, lsT=0.55, phi0=0.0)
TRICEPS = MuscleParams(l0M=0.4, vmaxM=4.0, f0M=300.0, lsT=0.33, phi0=0.0)


def excitation_from_emg(e: np.ndarray, dt: float, params: ActivationParams) -> np.ndarray:
    """u(t) = e(t - d); the first ``round(d/dt)`` samples repeat e[0]."""
    e = np.asarray(e, dtype=float)
    shift = int(round(params.d / dt))
    if shift >= len(e):
        raise ValueError(f"delay of {shift} samples exceeds signal length {len(e)}")
    if shift == 0:
        return e.copy()
    u = np.empty_like(e)
    u[:shift] = e[0]
    u[shift:] = e[:-shift]
    return u


def activation(u, A: float):
    return (ad.exp(A * u) - 1.0) / (math.exp(A) - 1.0)


def emg_to_activation(e: np.ndarray, dt: float, params: ActivationParams) -> np.ndarray:
    return activation(excitation_from_emg(e, dt, params), params.A)


def active_force_length(l_norm):
    # boundaries belong to the lower branch
    lv = ad.value(l_norm)
    low = 9.0 * (l_norm - 0.4) ** 2
    mid = 1.0 - 4.0 * (1.0 - l_norm) ** 2
    high = 9.0 * (l_norm - 1.6) ** 2
    return ad.select(lv <= 0.6, low, ad.select(lv <= 1.4, mid, high))


def passive_force_length(l_norm):
    lv = ad.value(l_norm)
    # clip the exponent argument so the unselected branch stays finite
    stretch = ad.select(lv <= 1.4, l_norm, 1.4) - 1.0
    exp_branch = GAMMA1 * (ad.exp(GAMMA2 * stretch) - 1.0)
    e04 = math.exp(0.4 * GAMMA2)
    linear = (GAMMA1 * GAMMA2 * e04) * l_norm + GAMMA1 * ((1.0 - 1.4 * GAMMA2) * e04 - 1.0)
    zero = 0.0 * l_norm
    return ad.select(lv <= 1.0, zero, ad.select(lv <= 1.4, exp_branch, linear))


def force_velocity(v_norm, shape: float = FV_SHAPE, plateau: float = FV_ECCENTRIC_PLATEAU):
    """Concentric hyperbola (1+v)/(1-v/shape); eccentric branch rises to ``plateau``
    with twice the concentric slope at v = 0."""
    vv = ad.value(v_norm)
    shortening = vv <= 0
    v_con = ad.select(shortening, v_norm, 0.0)
    v_ecc = ad.select(shortening, 0.0, v_norm)
    concentric = (1.0 + v_con) / (1.0 - v_con / shape)
    k = (2.0 + 2.0 / shape) / (plateau - 1.0)
    eccentric = (1.0 + k * plateau * v_ecc) / (1.0 + k * v_ecc)
    return ad.select(shortening, concentric, eccentric)


def mt_force(a, l_norm, v_norm, phi, params: MuscleParams):
    active = a * active_force_length(l_norm) * force_velocity(v_norm)
    return params.f0M * (active + passive_force_length(l_norm)) * ad.cos(phi)


def path_length(q, path: MusclePath):
    """MT length and its derivative with respect to the joint angle."""
    c = 1.0 if path.flexor else -1.0
    l1l2 = path.l1 * path.l2
    lmt = ad.sqrt(path.l1**2 + path.l2**2 + 2.0 * c * l1l2 * ad.cos(q))
    dl_dq = -c * l1l2 * ad.sin(q) / lmt
    return lmt, dl_dq


def mt_kinematics(q, q_dot, path: MusclePath, params: MuscleParams):
    """Normalized fibre length and velocity for a rigid tendon.

    Returns ``(l_norm, v_norm, lmt, dl_dq)``.
    """
    lmt, dl_dq = path_length(q, path)
    if np.any(ad.value(lmt) <= ad.value(params.lsT)):
        raise MuscleSlackError("muscle fully slack: MT length below tendon slack length")
    cos_phi = ad.cos(params.phi0)
    l_norm = (lmt - params.lsT) / cos_phi / params.l0M
    v_norm = dl_dq * q_dot / cos_phi / params.vmaxM
    return l_norm, v_norm, lmt, dl_dq


def mt_torque(a, q, q_dot, path: MusclePath, params: MuscleParams):
    """Joint torque of one muscle, -F^MT * dl^MT/dq (a shortening pull)."""
    l_norm, v_norm, _, dl_dq = mt_kinematics(q, q_dot, path, params)
    force = mt_force(a, l_norm, v_norm, params.phi0, params)
    return -1.0 * force * dl_dq
