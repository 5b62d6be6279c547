"""Single-DOF elbow model: I q'' = E(q) + T_Bi - T_Tri.

q = 0 is the forearm hanging straight down (full extension); flexion is
positive.  The biceps path shortens with flexion, the triceps path lengthens.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .muscle import (
    BICEPS,
    TRICEPS,
    ActivationParams,
    MusclePath,
    MuscleParams,
    emg_to_activation,
    mt_torque,
)


class IntegrationDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ElbowGeometry:
    l_ua: float = 1.0
    l_fa: float = 1.0
    m_fa: float = 1.0
    l1_Bi: float = 0.3
    l2_Bi: float = 0.8
    l1_Tri: float = 0.2
    l2_Tri: float = 0.7
    g: float = 9.81

    def __post_init__(self):
        if min(self.l_ua, self.l_fa, self.m_fa, self.l1_Bi, self.l2_Bi, self.l1_Tri, self.l2_Tri) <= 0:
            raise ValueError("lengths and mass must be positive")
        if max(self.l1_Bi, self.l1_Tri) > self.l_ua or max(self.l2_Bi, self.l2_Tri) > self.l_fa:
            raise ValueError("attachment offsets exceed link lengths")

    @property
    def biceps_path(self) -> MusclePath:
        return MusclePath(self.l1_Bi, self.l2_Bi, flexor=True)

    @property
    def triceps_path(self) -> MusclePath:
        return MusclePath(self.l1_Tri, self.l2_Tri, flexor=False)


@dataclass(frozen=True)
class JointState:
    q: float
    q_dot: float


def inertia(geometry: ElbowGeometry) -> float:
    return geometry.m_fa * geometry.l_fa**2


def external_torque(q, geometry: ElbowGeometry):
    return -geometry.m_fa * geometry.g * geometry.l_fa * ad.sin(q)


def muscle_torque(a_bi, a_tri, q, q_dot, geometry: ElbowGeometry, kappa_bi: MuscleParams, kappa_tri: MuscleParams):
    """Net muscle torque; flexing biceps is positive, extending triceps negative."""
    t_bi = mt_torque(a_bi, q, q_dot, geometry.biceps_path, kappa_bi)
    t_tri = mt_torque(a_tri, q, q_dot, geometry.triceps_path, kappa_tri)
    return t_bi + t_tri


def acceleration(a_bi, a_tri, state: JointState, geometry: ElbowGeometry,
                 kappa_bi: MuscleParams = BICEPS, kappa_tri: MuscleParams = TRICEPS,
                 muscles: bool = True) -> float:
    torque = external_torque(state.q, geometry)
    if muscles:
        torque = torque + muscle_torque(a_bi, a_tri, state.q, state.q_dot, geometry, kappa_bi, kappa_tri)
    return float(torque / inertia(geometry))


def integrate_activations(
    a_bi: np.ndarray,
    a_tri: np.ndarray,
    dt: float,
    q0: float,
    qdot0: float,
    geometry: ElbowGeometry = ElbowGeometry(),
    kappa_bi: MuscleParams = BICEPS,
    kappa_tri: MuscleParams = TRICEPS,
    muscles: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-step RK4 on the sample grid; activations are linear between samples.

    Returns ``(q, q_dot)`` sampled at every grid point.
    """
    a_bi = np.asarray(a_bi, dtype=float)
    a_tri = np.asarray(a_tri, dtype=float)
    if a_bi.shape != a_tri.shape or a_bi.ndim != 1:
        raise ValueError("activation signals must be 1-d and share a length")
    inv_i = 1.0 / inertia(geometry)

    def rhs(ab, at, q, w):
        torque = -geometry.m_fa * geometry.g * geometry.l_fa * math.sin(q)
        if muscles:
            torque += float(muscle_torque(ab, at, q, w, geometry, kappa_bi, kappa_tri))
        return w, torque * inv_i

    n = len(a_bi)
    q = np.empty(n)
    w = np.empty(n)
    q[0], w[0] = q0, qdot0
    for k in range(n - 1):
        ab0, ab1 = a_bi[k], a_bi[k + 1]
        at0, at1 = a_tri[k], a_tri[k + 1]
        abm, atm = 0.5 * (ab0 + ab1), 0.5 * (at0 + at1)
        qk, wk = q[k], w[k]
        k1q, k1w = rhs(ab0, at0, qk, wk)
        k2q, k2w = rhs(abm, atm, qk + 0.5 * dt * k1q, wk + 0.5 * dt * k1w)
        k3q, k3w = rhs(abm, atm, qk + 0.5 * dt * k2q, wk + 0.5 * dt * k2w)
        k4q, k4w = rhs(ab1, at1, qk + dt * k3q, wk + dt * k3w)
        q[k + 1] = qk + dt / 6.0 * (k1q + 2 * k2q + 2 * k3q + k4q)
        w[k + 1] = wk + dt / 6.0 * (k1w + 2 * k2w + 2 * k3w + k4w)
        if not (math.isfinite(q[k + 1]) and math.isfinite(w[k + 1])):
            raise IntegrationDiverged(f"integration diverged at step {k + 1}")
    return q, w


def solve_forward(
    e_bi: np.ndarray,
    e_tri: np.ndarray,
    dt: float,
    q0: float = math.pi / 6,
    qdot0: float = 0.0,
    geometry: ElbowGeometry = ElbowGeometry(),
    kappa_bi: MuscleParams = BICEPS,
    kappa_tri: MuscleParams = TRICEPS,
    activation_params: ActivationParams = ActivationParams(),
    muscles: bool = True,
) -> np.ndarray:
    """Joint angle trajectory driven by raw sEMG envelopes."""
    e_bi = np.asarray(e_bi, dtype=float)
    e_tri = np.asarray(e_tri, dtype=float)
    if e_bi.shape != e_tri.shape:
        raise ValueError("sEMG channels must share a length")
    a_bi = emg_to_activation(e_bi, dt, activation_params)
    a_tri = emg_to_activation(e_tri, dt, activation_params)
    q, _ = integrate_activations(a_bi, a_tri, dt, q0, qdot0, geometry, kappa_bi, kappa_tri, muscles)
    return q
