"""Demonstration corpus, online GRP training, and reference-free evaluation.

The protocol has three stages. First, swing tasks are sampled (target leg
angle and initial joint rates random, initial posture fixed) and rolled out
under the target controller to produce demonstration trajectories. Second,
hip and knee GRP models train online against those demonstrations: the
plant input during training equals the reference torque (the stack's
combined output with feedback errors folded in collapses to r_G exactly),
so the training-time trajectory IS the demonstration trajectory and
training replays its (sensor, torque) rows in order, one learn step per
control tick. Third, trained models drive the plant alone through the same
swing tasks; the target controller's phase/latch machine still runs
alongside as a shadow monitor, but only to decide ground contact, never to
produce torque.

Torques recorded in trajectories are the saturated values actually applied
to the plant; Generators therefore learn the delivered torque, bounded by
+-tau_max, not the controller's raw request.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import grp
from .dynamics import (
    JointTorques,
    LegParams,
    LegState,
    integrate_step,
    kinematics,
    saturate,
)
from .grp import GrpModel
from .mulnet import split_input
from .target_controller import (
    ControllerGains,
    ControllerState,
    SwingTask,
    control_step,
    make_task,
)

DEG = math.pi / 180.0


@dataclass(frozen=True)
class SampleRanges:
    """Task distribution: uniform target angle and initial joint rates,
    fixed initial posture."""

    alpha_tgt: tuple[float, float] = (50.0 * DEG, 85.0 * DEG)
    phi_h_dot0: tuple[float, float] = (-4.0, 0.0)
    phi_k_dot0: tuple[float, float] = (-7.0, -1.0)
    phi_h0: float = 220.0 * DEG
    phi_k0: float = 175.0 * DEG

    def __post_init__(self):
        for name in ("alpha_tgt", "phi_h_dot0", "phi_k_dot0"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} range ({lo}, {hi}) not ordered")


@dataclass
class ModelTrace:
    """Per-step layer activity of one GRP model along a trajectory.

    r holds reference responsibilities where a reference torque existed
    (demonstration / training); evaluation runs record NaN there.
    """

    G: np.ndarray
    pi: np.ndarray
    r: np.ndarray


@dataclass
class Trajectory:
    """One swing at 1 kHz, column-major. Torques are post-saturation."""

    t: np.ndarray
    phi_h: np.ndarray
    phi_k: np.ndarray
    phi_h_dot: np.ndarray
    phi_k_dot: np.ndarray
    alpha: np.ndarray
    alpha_dot: np.ndarray
    l: np.ndarray
    tau_h: np.ndarray
    tau_k: np.ndarray
    phase: np.ndarray
    contact: np.ndarray
    task: SwingTask | None = None
    timed_out: bool = False
    traces: dict[str, ModelTrace] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.t.size

    @property
    def alpha_end(self) -> float:
        return float(self.alpha[-1])


@dataclass
class EvalReport:
    """Reference-free evaluation summary; angles in degrees."""

    alpha_tgt_deg: np.ndarray
    alpha_end_deg: np.ndarray
    error_deg: np.ndarray
    timed_out: np.ndarray
    avg_error_deg: float
    max_error_deg: float
    active_generators: dict[str, int]
    peak_pi: dict[str, np.ndarray]


@dataclass
class TrainLog:
    """Per-episode mean |e_G| per layer, one row per episode."""

    hip_mean_abs_e: np.ndarray
    knee_mean_abs_e: np.ndarray


def sample_tasks(
    ranges: SampleRanges,
    n: int,
    seed: int,
    gains: ControllerGains = ControllerGains(),
    params: LegParams = LegParams(),
) -> list[tuple[SwingTask, LegState]]:
    """n seeded swing tasks; per task the draws are alpha_tgt, then the hip
    rate, then the knee rate, from one stream."""
    if n < 1:
        raise ValueError(f"need at least one task, got n={n}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        alpha_tgt = rng.uniform(*ranges.alpha_tgt)
        vh = rng.uniform(*ranges.phi_h_dot0)
        vk = rng.uniform(*ranges.phi_k_dot0)
        init = LegState(ranges.phi_h0, ranges.phi_k0, vh, vk)
        out.append((make_task(alpha_tgt, gains, params, init), init))
    return out


def _sensor_row(kin, state: LegState, task: SwingTask):
    return [
        kin.alpha - task.alpha_tgt,
        state.phi_h,
        state.phi_h_dot,
        state.phi_k,
        state.phi_k_dot,
    ]


def sensor_matrix(traj: Trajectory) -> np.ndarray:
    """(T, 8) network inputs for every row of a trajectory."""
    raw = np.stack(
        [
            traj.alpha - traj.task.alpha_tgt,
            traj.phi_h,
            traj.phi_h_dot,
            traj.phi_k,
            traj.phi_k_dot,
        ],
        axis=-1,
    )
    return split_input(raw)


def _swing_rollout(
    init_state: LegState,
    task: SwingTask,
    gains: ControllerGains,
    params: LegParams,
    dt: float,
    timeout: float,
    hip_model: GrpModel | None = None,
    knee_model: GrpModel | None = None,
    model_driven: bool = False,
) -> Trajectory:
    """Roll one swing until ground contact or timeout.

    Controller-driven: the plant receives the saturated target-controller
    torque; attached models are evaluated for their traces only. Model
    driven: the plant receives the saturated combined model torques, and
    the controller state machine runs purely as a contact/phase monitor on
    the kinematics it observes.
    """
    if model_driven and (hip_model is None or knee_model is None):
        raise ValueError("model-driven rollout needs both hip and knee models")
    models = [("hip", hip_model), ("knee", knee_model)]
    models = [(name, mdl) for name, mdl in models if mdl is not None]

    state = init_state
    ctrl = ControllerState()
    cols = {k: [] for k in ("t", "phi_h", "phi_k", "phi_h_dot", "phi_k_dot")}
    cols.update({k: [] for k in ("alpha", "alpha_dot", "l", "tau_h", "tau_k")})
    phases, contacts = [], []
    trace_rows = {name: [] for name, _ in models}

    while True:
        kin = kinematics(state, params)
        demo_tq, ctrl = control_step(state, ctrl, task, gains, params)

        x = None
        if models:
            x = split_input(_sensor_row(kin, state, task))
        layer_out = {name: grp.forward(mdl, x) for name, mdl in models}

        if model_driven:
            applied = saturate(
                JointTorques(layer_out["hip"][2], layer_out["knee"][2]), params
            )
        else:
            applied = saturate(demo_tq, params)

        for name, mdl in models:
            G, pi, _ = layer_out[name]
            if model_driven:
                r = np.full(mdl.m, np.nan)
            else:
                r_G = applied.tau_h if name == "hip" else applied.tau_k
                r = grp.responsibility_reference(r_G - G, mdl.gamma)
            trace_rows[name].append((G, pi, r))

        cols["t"].append(state.t)
        cols["phi_h"].append(state.phi_h)
        cols["phi_k"].append(state.phi_k)
        cols["phi_h_dot"].append(state.phi_h_dot)
        cols["phi_k_dot"].append(state.phi_k_dot)
        cols["alpha"].append(kin.alpha)
        cols["alpha_dot"].append(kin.alpha_dot)
        cols["l"].append(kin.l)
        cols["tau_h"].append(applied.tau_h)
        cols["tau_k"].append(applied.tau_k)
        phases.append(int(ctrl.phase))
        contacts.append(ctrl.contact)

        if ctrl.contact or state.t >= timeout:
            break
        state = integrate_step(state, applied, params, dt)

    traces = {
        name: ModelTrace(
            G=np.array([g for g, _, _ in rows]),
            pi=np.array([p for _, p, _ in rows]),
            r=np.array([r for _, _, r in rows]),
        )
        for name, rows in trace_rows.items()
    }
    return Trajectory(
        t=np.array(cols["t"]),
        phi_h=np.array(cols["phi_h"]),
        phi_k=np.array(cols["phi_k"]),
        phi_h_dot=np.array(cols["phi_h_dot"]),
        phi_k_dot=np.array(cols["phi_k_dot"]),
        alpha=np.array(cols["alpha"]),
        alpha_dot=np.array(cols["alpha_dot"]),
        l=np.array(cols["l"]),
        tau_h=np.array(cols["tau_h"]),
        tau_k=np.array(cols["tau_k"]),
        phase=np.array(phases, dtype=int),
        contact=np.array(contacts, dtype=bool),
        task=task,
        timed_out=not ctrl.contact,
        traces=traces,
    )


def run_demo_episode(
    task: SwingTask,
    init_state: LegState,
    gains: ControllerGains = ControllerGains(),
    params: LegParams = LegParams(),
    dt: float = 1e-3,
    timeout: float = 2.0,
) -> Trajectory:
    """One demonstration swing under the target controller."""
    return _swing_rollout(init_state, task, gains, params, dt, timeout)


def annotate_with_models(
    traj: Trajectory, hip_model: GrpModel, knee_model: GrpModel
) -> Trajectory:
    """Demonstration trajectory with frozen-model traces attached: per-layer
    G, pi, and the reference responsibilities the recorded torques imply."""
    X = sensor_matrix(traj)
    out = replace(traj, traces=dict(traj.traces))
    for name, mdl, r_G in (
        ("hip", hip_model, traj.tau_h),
        ("knee", knee_model, traj.tau_k),
    ):
        Gs = np.empty((len(traj), mdl.m))
        pis = np.empty((len(traj), mdl.m))
        rs = np.empty((len(traj), mdl.m))
        for i in range(len(traj)):
            Gk, pik, _ = grp.forward(mdl, X[i])
            Gs[i] = Gk
            pis[i] = pik
            rs[i] = grp.responsibility_reference(r_G[i] - Gk, mdl.gamma)
        out.traces[name] = ModelTrace(G=Gs, pi=pis, r=rs)
    return out


def train(
    hip_model: GrpModel,
    knee_model: GrpModel,
    demos: list[Trajectory],
    episodes: int,
) -> TrainLog:
    """Online training: cycle over the demonstrations, one learn step per
    recorded control tick, sharpness annealed after every episode.

    The plant never re-integrates here: driving it with the stack's
    feedback-completed output is identical to driving it with the recorded
    reference torques, so each episode replays a demonstration's
    (sensor, torque) rows in order.
    """
    if episodes < 1:
        raise ValueError(f"episodes must be >= 1, got {episodes}")
    if not demos:
        raise ValueError("no demonstrations to train on")
    cache = [(sensor_matrix(d), d.tau_h, d.tau_k) for d in demos]
    pair = [hip_model, knee_model]
    hip_log = np.empty((episodes, hip_model.m))
    knee_log = np.empty((episodes, knee_model.m))
    for ep in range(episodes):
        X, r_h, r_k = cache[ep % len(cache)]
        hip_sum = np.zeros(hip_model.m)
        knee_sum = np.zeros(knee_model.m)
        for i in range(X.shape[0]):
            rec_h, rec_k = grp.learn_step_joint(pair, X[i], (r_h[i], r_k[i]))
            hip_sum += np.abs(rec_h.e_G)
            knee_sum += np.abs(rec_k.e_G)
        hip_log[ep] = hip_sum / X.shape[0]
        knee_log[ep] = knee_sum / X.shape[0]
        grp.end_episode(hip_model)
        grp.end_episode(knee_model)
    return TrainLog(hip_mean_abs_e=hip_log, knee_mean_abs_e=knee_log)


def peak_responsibilities(trajectories: list[Trajectory]) -> dict[str, np.ndarray]:
    """Per-layer maximum predicted pi over every step of every trajectory."""
    peaks: dict[str, np.ndarray] = {}
    for traj in trajectories:
        for name, trace in traj.traces.items():
            top = trace.pi.max(axis=0)
            peaks[name] = np.maximum(peaks[name], top) if name in peaks else top
    return peaks


def active_generator_count(
    trajectories: list[Trajectory], threshold: float = 0.1
) -> dict[str, int]:
    """Number of layers whose predicted pi ever exceeds the threshold."""
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    return {
        name: int((peak > threshold).sum())
        for name, peak in peak_responsibilities(trajectories).items()
    }


def evaluate(
    hip_model: GrpModel,
    knee_model: GrpModel,
    tasks: list[tuple[SwingTask, LegState]],
    gains: ControllerGains = ControllerGains(),
    params: LegParams = LegParams(),
    dt: float = 1e-3,
    timeout: float = 2.0,
    active_threshold: float = 0.1,
) -> tuple[EvalReport, list[Trajectory]]:
    """Reference-free evaluation: the models alone drive the plant through
    each task; landing error is |alpha_tgt - alpha at contact| in degrees."""
    trajs = [
        _swing_rollout(
            init,
            task,
            gains,
            params,
            dt,
            timeout,
            hip_model=hip_model,
            knee_model=knee_model,
            model_driven=True,
        )
        for task, init in tasks
    ]
    tgt = np.array([task.alpha_tgt for task, _ in tasks]) / DEG
    end = np.array([tr.alpha_end for tr in trajs]) / DEG
    err = np.abs(tgt - end)
    report = EvalReport(
        alpha_tgt_deg=tgt,
        alpha_end_deg=end,
        error_deg=err,
        timed_out=np.array([tr.timed_out for tr in trajs], dtype=bool),
        avg_error_deg=float(err.mean()),
        max_error_deg=float(err.max()),
        active_generators=active_generator_count(trajs, active_threshold),
        peak_pi=peak_responsibilities(trajs),
    )
    return report, trajs


def weight_summary(model: GrpModel) -> dict:
    """Per-layer weight dump with Frobenius norms, JSON-ready. Layers whose
    Generator norm sits near zero never produce torque: passive pairs."""
    layers = []
    for ly in model.layers:
        layers.append(
            {
                "W_norm": float(np.linalg.norm(ly.W)),
                "R_norm": float(np.linalg.norm(ly.R)),
                "W": ly.W.tolist(),
                "R": ly.R.tolist(),
            }
        )
    return {
        "m": model.m,
        "gamma": model.gamma,
        "episode_count": model.episode_count,
        "layers": layers,
    }
