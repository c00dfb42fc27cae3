"""Planar double-pendulum swing leg.

Hip pinned at the world origin, x forward, y up. The thigh (length l_t,
point mass m_t at midpoint) hangs from the hip; the shank (l_s, m_s at
midpoint) hangs from the knee. Generalized coordinates are the hip angle
phi_h and the interior knee angle phi_k (pi = fully extended), both in
radians. Segment angles are measured from the forward horizontal sweeping
downward, so a point at angle u and distance r sits at (r*cos u, -r*sin u).

Leg-axis quantities follow the symmetric-segment geometry:
    alpha = phi_h - phi_k/2        leg angle
    l     = 2*l_t*sin(phi_k/2)     leg length

The knee carries a unilateral hyperextension stop: past phi_k = pi a stiff
spring-damper pushes back toward flexion (never pulls), entering the
equations of motion as an internal knee torque. Joint actuators saturate at
+-tau_max; the clamp is applied by `saturate`, not inside `accelerations`,
so the equations of motion stay defined for arbitrary applied torques.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace


@dataclass(frozen=True)
class LegParams:
    """Segment lengths/masses (SI units). Defaults are anthropomorphic
    values for a 180 cm / 80 kg human."""

    l_t: float = 0.5
    l_s: float = 0.5
    m_t: float = 7.3
    m_s: float = 4.3
    g: float = 9.81
    # knee hyperextension stop (unilateral spring-damper past phi_k = pi);
    # zero stiffness and damping disables it
    knee_stop_stiffness: float = 2.0e4
    knee_stop_damping: float = 150.0
    # actuator saturation, both joints (N*m)
    tau_max: float = 60.0

    def __post_init__(self):
        for name in ("l_t", "l_s", "m_t", "m_s", "g", "tau_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"LegParams.{name} must be strictly positive")
        for name in ("knee_stop_stiffness", "knee_stop_damping"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"LegParams.{name} must be non-negative")

    @property
    def l_0(self) -> float:
        """Rest leg length (fully extended)."""
        return self.l_t + self.l_s


@dataclass(frozen=True)
class LegState:
    phi_h: float
    phi_k: float
    phi_h_dot: float
    phi_k_dot: float
    t: float = 0.0

    def validate(self) -> None:
        """Check the physical operating range. Not enforced on construction:
        transient hyperextension (phi_k slightly past pi) can occur mid-swing
        and must not kill a rollout."""
        vals = (self.phi_h, self.phi_k, self.phi_h_dot, self.phi_k_dot, self.t)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("non-finite leg state")
        if not 0.0 < self.phi_k <= math.pi:
            raise ValueError(f"knee angle {self.phi_k} outside (0, pi]")


@dataclass(frozen=True)
class JointTorques:
    tau_h: float = 0.0
    tau_k: float = 0.0


@dataclass(frozen=True)
class KinematicSnapshot:
    alpha: float
    alpha_dot: float
    l: float
    foot_x: float
    foot_y: float
    knee_x: float
    knee_y: float
    # knee joint rate, carried along for the knee policies
    phi_k_dot: float = 0.0


def _segment_angles(state: LegState) -> tuple[float, float]:
    # absolute thigh/shank angles (downward-sweep convention)
    theta_t = state.phi_h - 0.5 * math.pi
    theta_s = state.phi_h + 0.5 * math.pi - state.phi_k
    return theta_t, theta_s


def kinematics(state: LegState, params: LegParams) -> KinematicSnapshot:
    """Leg angle/length and knee/foot positions for the current state."""
    theta_t, theta_s = _segment_angles(state)
    knee_x = params.l_t * math.cos(theta_t)
    knee_y = -params.l_t * math.sin(theta_t)
    foot_x = knee_x + params.l_s * math.cos(theta_s)
    foot_y = knee_y - params.l_s * math.sin(theta_s)
    return KinematicSnapshot(
        alpha=state.phi_h - 0.5 * state.phi_k,
        alpha_dot=state.phi_h_dot - 0.5 * state.phi_k_dot,
        l=2.0 * params.l_t * math.sin(0.5 * state.phi_k),
        foot_x=foot_x,
        foot_y=foot_y,
        knee_x=knee_x,
        knee_y=knee_y,
        phi_k_dot=state.phi_k_dot,
    )


def knee_stop_torque(phi_k: float, phi_k_dot: float, params: LegParams) -> float:
    """Unilateral stop torque at the knee, <= 0 (flexion-directed).

    Zero until phi_k passes pi; beyond that a stiff spring-damper resists
    hyperextension. The clamp keeps the stop from pulling the joint into
    extension while it unloads."""
    pen = phi_k - math.pi
    if pen <= 0.0:
        return 0.0
    tau = -params.knee_stop_stiffness * pen - params.knee_stop_damping * phi_k_dot
    return min(tau, 0.0)


def saturate(torques: JointTorques, params: LegParams) -> JointTorques:
    """Actuator model: clamp both joint torques to [-tau_max, +tau_max]."""
    m = params.tau_max
    return JointTorques(
        tau_h=max(-m, min(m, torques.tau_h)),
        tau_k=max(-m, min(m, torques.tau_k)),
    )


def _accel_generalized(
    phi_h: float,
    phi_k: float,
    phi_h_dot: float,
    phi_k_dot: float,
    tau_h: float,
    tau_k: float,
    params: LegParams,
) -> tuple[float, float]:
    """Accelerations (phi_h_ddot, phi_k_ddot).

    Derived from the Lagrangian in absolute segment angles (theta_t, theta_s)
    where the point-mass double-pendulum equations are standard:

        a*tt_dd + c*cos(d)*ts_dd + c*sin(d)*ts_d^2 - d1*cos(tt) = tau_h + tau_k
        b*ts_dd + c*cos(d)*tt_dd - c*sin(d)*tt_d^2 - d2*cos(ts) = -tau_k

    with d = theta_t - theta_s. The generalized-force mapping follows from
    phi_h = theta_t + pi/2, phi_k = theta_t - theta_s + pi (virtual work).
    """
    lt, ls, mt, ms, g = params.l_t, params.l_s, params.m_t, params.m_s, params.g

    tau_k = tau_k + knee_stop_torque(phi_k, phi_k_dot, params)

    theta_t = phi_h - 0.5 * math.pi
    theta_s = phi_h + 0.5 * math.pi - phi_k
    tt_d = phi_h_dot
    ts_d = phi_h_dot - phi_k_dot

    a = (0.25 * mt + ms) * lt * lt
    b = 0.25 * ms * ls * ls
    c = 0.5 * ms * lt * ls
    d1 = (0.5 * mt + ms) * lt * g
    d2 = 0.5 * ms * ls * g

    delta = theta_t - theta_s
    cd, sd = math.cos(delta), math.sin(delta)

    rhs_t = (tau_h + tau_k) + d1 * math.cos(theta_t) - c * sd * ts_d * ts_d
    rhs_s = -tau_k + d2 * math.cos(theta_s) + c * sd * tt_d * tt_d

    m12 = c * cd
    det = a * b - m12 * m12
    if not det > 1e-12:
        # cannot happen for positive masses/lengths (det >= a*b - c^2 > 0)
        raise RuntimeError(f"singular mass matrix (det={det})")

    tt_dd = (b * rhs_t - m12 * rhs_s) / det
    ts_dd = (a * rhs_s - m12 * rhs_t) / det
    return tt_dd, tt_dd - ts_dd


def accelerations(
    state: LegState, torques: JointTorques, params: LegParams
) -> tuple[float, float]:
    """Generalized accelerations (phi_h_ddot, phi_k_ddot) under gravity,
    the applied joint torques, and the knee stop when engaged."""
    return _accel_generalized(
        state.phi_h,
        state.phi_k,
        state.phi_h_dot,
        state.phi_k_dot,
        torques.tau_h,
        torques.tau_k,
        params,
    )


def integrate_step(
    state: LegState, torques: JointTorques, params: LegParams, dt: float
) -> LegState:
    """One classical 4th-order fixed step with torques held constant."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    th, tk = torques.tau_h, torques.tau_k

    def deriv(q1, q2, v1, v2):
        a1, a2 = _accel_generalized(q1, q2, v1, v2, th, tk, params)
        return v1, v2, a1, a2

    y = (state.phi_h, state.phi_k, state.phi_h_dot, state.phi_k_dot)
    k1 = deriv(*y)
    k2 = deriv(*(yi + 0.5 * dt * ki for yi, ki in zip(y, k1)))
    k3 = deriv(*(yi + 0.5 * dt * ki for yi, ki in zip(y, k2)))
    k4 = deriv(*(yi + dt * ki for yi, ki in zip(y, k3)))
    out = tuple(
        yi + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d)
        for yi, a, b, c, d in zip(y, k1, k2, k3, k4)
    )
    if not all(math.isfinite(v) for v in out):
        raise RuntimeError(f"non-finite state after integration step at t={state.t}")
    return LegState(out[0], out[1], out[2], out[3], t=state.t + dt)


def total_energy(state: LegState, params: LegParams) -> float:
    """Kinetic plus potential energy (J); potential zero at hip height."""
    lt, ls, mt, ms, g = params.l_t, params.l_s, params.m_t, params.m_s, params.g
    theta_t, theta_s = _segment_angles(state)
    tt_d = state.phi_h_dot
    ts_d = state.phi_h_dot - state.phi_k_dot

    a = (0.25 * mt + ms) * lt * lt
    b = 0.25 * ms * ls * ls
    c = 0.5 * ms * lt * ls
    kinetic = (
        0.5 * a * tt_d * tt_d
        + 0.5 * b * ts_d * ts_d
        + c * tt_d * ts_d * math.cos(theta_t - theta_s)
    )
    # mass heights: thigh mass at l_t/2, shank mass at knee + l_s/2
    y_t = -0.5 * lt * math.sin(theta_t)
    y_s = -lt * math.sin(theta_t) - 0.5 * ls * math.sin(theta_s)
    potential = g * (mt * y_t + ms * y_s)
    return kinetic + potential


def with_time(state: LegState, t: float) -> LegState:
    return replace(state, t=t)
