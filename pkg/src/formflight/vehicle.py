"""Nine-state quadrotor model with first-order attitude dynamics.

State layout is ``[p_x, p_y, p_z, v_x, v_y, v_z, phi, theta, psi]`` and the
input is ``[thrust, phi_ref, theta_ref, psi_rate]`` with thrust expressed in
mass-normalized units (m/s^2).  Euler angles follow the aerospace Z-Y-X
(yaw-pitch-roll) convention, world-from-body.

Translational dynamics::

    p_dot = v
    v_dot = R(phi, theta, psi) e3 T - g e3 - D v

with ``D = diag(d_x, d_y, d_z)`` a linear damping matrix, while roll and
pitch track their commands through first-order lags and yaw integrates the
commanded rate directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

Array = NDArray[np.float64]

STATE_DIM = 9
INPUT_DIM = 4


class FlatnessError(ValueError):
    """Demanded specific force has no upward component; no attitude exists."""


def _vec3(value, name: str) -> Array:
    out = np.asarray(value, dtype=np.float64)
    if out.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector, got shape {out.shape}")
    return out


@dataclass(frozen=True)
class VehicleState:
    """Position, velocity, and attitude of a single vehicle."""

    p: Array
    v: Array
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "p", _vec3(self.p, "p"))
        object.__setattr__(self, "v", _vec3(self.v, "v"))
        arr = self.as_array()
        if not np.all(np.isfinite(arr)):
            raise ValueError("vehicle state has non-finite components")

    def as_array(self) -> Array:
        out = np.empty(STATE_DIM)
        out[0:3] = self.p
        out[3:6] = self.v
        out[6] = self.phi
        out[7] = self.theta
        out[8] = self.psi
        return out

    @classmethod
    def from_array(cls, arr) -> "VehicleState":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (STATE_DIM,):
            raise ValueError(f"state array must have shape ({STATE_DIM},)")
        return cls(
            p=arr[0:3].copy(),
            v=arr[3:6].copy(),
            phi=float(arr[6]),
            theta=float(arr[7]),
            psi=float(arr[8]),
        )


@dataclass(frozen=True)
class ControlInput:
    """Collective thrust, commanded roll/pitch, and commanded yaw rate."""

    thrust: float
    phi_ref: float = 0.0
    theta_ref: float = 0.0
    psi_rate: float = 0.0

    def as_array(self) -> Array:
        return np.array([self.thrust, self.phi_ref, self.theta_ref, self.psi_rate])

    @classmethod
    def from_array(cls, arr) -> "ControlInput":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.shape != (INPUT_DIM,):
            raise ValueError(f"input array must have shape ({INPUT_DIM},)")
        return cls(
            thrust=float(arr[0]),
            phi_ref=float(arr[1]),
            theta_ref=float(arr[2]),
            psi_rate=float(arr[3]),
        )


@dataclass(frozen=True)
class VehicleParams:
    """Physical constants of the attitude lags, damping, and gravity."""

    tau_phi: float = 0.116
    tau_theta: float = 0.116
    k_phi: float = 1.0
    k_theta: float = 1.0
    damping: Array = (0.1, 0.1, 0.2)
    gravity: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "damping", _vec3(self.damping, "damping"))
        if self.tau_phi <= 0 or self.tau_theta <= 0:
            raise ValueError("attitude time constants must be positive")
        if np.any(self.damping <= 0):
            raise ValueError("damping entries must be positive")
        if self.gravity <= 0:
            raise ValueError("gravity must be positive")

    def as_array(self) -> Array:
        """Packed [tau_phi, tau_theta, k_phi, k_theta, d_x, d_y, d_z, g]."""
        return np.array(
            [
                self.tau_phi,
                self.tau_theta,
                self.k_phi,
                self.k_theta,
                self.damping[0],
                self.damping[1],
                self.damping[2],
                self.gravity,
            ]
        )


def rotation_matrix(phi: float, theta: float, psi: float) -> Array:
    """World-from-body rotation for Z-Y-X Euler angles.

    ``R = Rz(psi) @ Ry(theta) @ Rx(phi)``; orthonormal with det +1.
    """
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    return np.array(
        [
            [cps * cth, cps * sth * sph - sps * cph, cps * sth * cph + sps * sph],
            [sps * cth, sps * sth * sph + cps * cph, sps * sth * cph - cps * sph],
            [-sth, cth * sph, cth * cph],
        ]
    )


def body_z_axis(phi: float, theta: float, psi: float) -> Array:
    """Thrust direction in world frame (third column of the rotation)."""
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cps, sps = math.cos(psi), math.sin(psi)
    return np.array(
        [
            cps * sth * cph + sps * sph,
            sps * sth * cph - cps * sph,
            cth * cph,
        ]
    )


def continuous_dynamics(x: VehicleState, u: ControlInput, params: VehicleParams) -> Array:
    """Time derivative of the 9-state model at state ``x`` under input ``u``."""
    b = body_z_axis(x.phi, x.theta, x.psi)
    d = params.damping
    out = np.empty(STATE_DIM)
    out[0:3] = x.v
    out[3] = u.thrust * b[0] - d[0] * x.v[0]
    out[4] = u.thrust * b[1] - d[1] * x.v[1]
    out[5] = u.thrust * b[2] - params.gravity - d[2] * x.v[2]
    out[6] = (params.k_phi * u.phi_ref - x.phi) / params.tau_phi
    out[7] = (params.k_theta * u.theta_ref - x.theta) / params.tau_theta
    out[8] = u.psi_rate
    return out


def euler_step(
    x: VehicleState, u: ControlInput, h: float, params: VehicleParams
) -> VehicleState:
    """One explicit forward-Euler step ``x + f(x, u) h``.

    Delegates to the compiled kernel the predictive controller rolls out
    internally, so plant and prediction model agree bit for bit by
    construction.
    """
    if h <= 0:
        raise ValueError("step size h must be positive")
    from . import _kernels

    out = np.empty(STATE_DIM)
    _kernels.dyn_step(x.as_array(), u.as_array(), h, params.as_array(), out)
    return VehicleState.from_array(out)


def flat_reference_attitude(
    accel, velocity, psi_ref: float, params: VehicleParams
) -> tuple[float, float, float]:
    """Roll/pitch (and thrust magnitude) realizing a demanded acceleration.

    Inverts the translational dynamics: the specific-force vector
    ``t = accel + g e3 + D velocity`` must equal ``R e3 T``, which under the
    Z-Y-X convention has the closed-form solution

        phi   = asin(sin(psi) t_x - cos(psi) t_y) / ||t||  terms,
        theta = atan2(cos(psi) t_x + sin(psi) t_y, t_z).

    Returns ``(phi_r, theta_r, ||t||)``.  Raises :class:`FlatnessError` when
    ``t_z <= 0`` (free fall or worse demanded; no attitude with
    |phi|, |theta| < pi/2 exists).
    """
    accel = _vec3(accel, "accel")
    velocity = _vec3(velocity, "velocity")
    d = params.damping
    tx = accel[0] + d[0] * velocity[0]
    ty = accel[1] + d[1] * velocity[1]
    tz = accel[2] + params.gravity + d[2] * velocity[2]
    if tz <= 0.0:
        raise FlatnessError(f"demanded specific force points down (t_z={tz:.3g})")
    norm = math.sqrt(tx * tx + ty * ty + tz * tz)
    bx, by, bz = tx / norm, ty / norm, tz / norm
    sps, cps = math.sin(psi_ref), math.cos(psi_ref)
    sin_phi = sps * bx - cps * by
    sin_phi = min(1.0, max(-1.0, sin_phi))
    phi_r = math.asin(sin_phi)
    theta_r = math.atan2(cps * bx + sps * by, bz)
    return phi_r, theta_r, norm
