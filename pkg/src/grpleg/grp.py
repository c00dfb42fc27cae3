"""GRP stack: parallel Generator / Responsibility-Predictor pairs learning
online from a reference torque.

Each of the m layers holds two multiplicative networks over the same 8-dim
input: a Generator producing a candidate torque G^k and an RP whose sigmoid
head predicts the layer's mixing weight pi^k. The combined output is
tau_out = sum_k G^k pi^k.

Learning is supervised by a reference torque r_G at every control step. The
reference responsibility r_RP is a softmax of -gamma |e_G| over layers
(sharper gamma -> closer to winner-take-all on the smallest Generator
error); gamma grows geometrically by beta after every episode. Generator
updates are gated by r_RP: a layer that takes no responsibility for a
sample learns nothing from it, decay term included. RP updates are never
gated (each RP must also learn where it is NOT responsible) and run at
their own ungated rate; see GrpConfig.mu_rp for why the rates are split.

The sum-to-one constraint lives on the reference responsibilities only;
predicted pi^k are free sigmoids in (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mulnet import NET_DIM, forward_and_gradient, net_forward, sigmoid_head


@dataclass(frozen=True)
class GrpConfig:
    """Stack shape and learning hyperparameters.

    `lam` is the L2 weight-decay coefficient (serialized as "lambda").
    `mu_rp` is the RP learning rate; None means the RPs share the base mu.
    The split exists because the two regression problems live on different
    scales: Generator errors are torques (tens of N m), RP errors are
    responsibilities (at most 1), and one rate cannot serve both.
    """

    m: int
    mu: float = 1e-3
    lam: float = 1e-4
    gamma0: float = 1.0
    beta: float = 1.05
    w_gain: float = 1.0
    init_scale: float = 0.1
    seed: int = 0
    mu_rp: float | None = None

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        for name in ("mu", "gamma0", "init_scale"):
            v = getattr(self, name)
            if not v > 0.0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if self.mu_rp is not None and not self.mu_rp > 0.0:
            raise ValueError(f"mu_rp must be > 0 when set, got {self.mu_rp}")
        if self.lam < 0.0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if not self.beta > 1.0:
            raise ValueError(f"beta must be > 1, got {self.beta}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")

    @property
    def rp_rate(self) -> float:
        return self.mu if self.mu_rp is None else self.mu_rp


@dataclass
class GrpLayer:
    W: np.ndarray  # Generator weights, (8, 8)
    R: np.ndarray  # RP weights, (8, 8)


@dataclass
class GrpModel:
    layers: list[GrpLayer]
    gamma: float
    config: GrpConfig
    episode_count: int = 0

    @property
    def m(self) -> int:
        return len(self.layers)

    def weight_stacks(self):
        """(m, 8, 8) views of Generator and RP weights, in layer order."""
        return (
            np.stack([ly.W for ly in self.layers]),
            np.stack([ly.R for ly in self.layers]),
        )


@dataclass
class StepRecord:
    """Everything one learn/forward step produced, per layer."""

    G: np.ndarray
    pi: np.ndarray
    e_G: np.ndarray
    r_RP: np.ndarray
    e_RP: np.ndarray
    tau_out: float
    r_G: float


def init(config: GrpConfig) -> GrpModel:
    """Fresh model with i.i.d. uniform weights on [-init_scale, init_scale].

    Each layer draws from its own child stream of the config seed, so
    layers are pairwise distinct and layer k's weights do not depend on m.
    """
    layers = []
    for k in range(config.m):
        rng = np.random.default_rng([config.seed, k])
        shape = (NET_DIM, NET_DIM)
        layers.append(
            GrpLayer(
                W=rng.uniform(-config.init_scale, config.init_scale, shape),
                R=rng.uniform(-config.init_scale, config.init_scale, shape),
            )
        )
    return GrpModel(layers=layers, gamma=config.gamma0, config=config)


def responsibility_reference(errors, gamma: float) -> np.ndarray:
    """Softmax of -gamma |e_G| over layers.

    Max-shifted before exponentiation, so arbitrarily sharp gamma degrades
    gracefully to one-hot on the smallest |e_G| instead of underflowing to
    0/0.
    """
    z = -gamma * np.abs(np.asarray(errors, dtype=float))
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def forward(model: GrpModel, x):
    """Per-layer (G^k, pi^k) and the combined torque tau_out."""
    W, R = model.weight_stacks()
    G = net_forward(W, x)
    pi = sigmoid_head(net_forward(R, x), model.config.w_gain)
    return G, pi, float(G @ pi)


def total_output_identity(model: GrpModel, x, r_G: float) -> float:
    """Combined output with feedback errors added to both factors:
    sum_k (G^k + e_G^k)(pi^k + e_RP^k). Collapses algebraically to
    r_G * sum_k r_RP^k = r_G, which is why the plant can be driven by the
    reference torque while the stack is still untrained."""
    G, pi, _ = forward(model, x)
    e_G = r_G - G
    r_RP = responsibility_reference(e_G, model.gamma)
    e_RP = r_RP - pi
    return float((G + e_G) @ (pi + e_RP))


def learn_step_joint(models: list[GrpModel], x, r_Gs) -> list[StepRecord]:
    """One online update of several models sharing the same input.

    All Generator and RP matrices ride a single stacked network evaluation;
    every subsequent op is row-local, so the result is bit-identical to
    updating each model on its own (which is exactly how `learn_step` is
    implemented). Weight layout: all models' W blocks, then all R blocks.
    """
    sizes = [len(mdl.layers) for mdl in models]
    total = sum(sizes)
    S = np.stack(
        [ly.W for mdl in models for ly in mdl.layers]
        + [ly.R for mdl in models for ly in mdl.layers]
    )
    out, dS = forward_and_gradient(S, x)

    records = []
    gain = np.empty(2 * total)
    decay = np.empty(2 * total)
    lo = 0
    for mdl, m, r_G in zip(models, sizes, r_Gs):
        cfg = mdl.config
        G = out[lo : lo + m]
        pi = sigmoid_head(out[total + lo : total + lo + m], cfg.w_gain)
        e_G = r_G - G
        r_RP = responsibility_reference(e_G, mdl.gamma)
        e_RP = r_RP - pi
        # Generator rate is gated by the reference responsibility, decay
        # included, so a non-responsible layer is bit-exactly unchanged;
        # RP updates chain through the sigmoid at the ungated RP rate.
        mu_k = r_RP * cfg.mu
        mu_rp = cfg.rp_rate
        gain[lo : lo + m] = mu_k * e_G
        gain[total + lo : total + lo + m] = (
            mu_rp * e_RP * cfg.w_gain * pi * (1.0 - pi)
        )
        decay[lo : lo + m] = mu_k * cfg.lam
        decay[total + lo : total + lo + m] = mu_rp * cfg.lam
        records.append(
            StepRecord(
                G=G,
                pi=pi,
                e_G=e_G,
                r_RP=r_RP,
                e_RP=e_RP,
                tau_out=float(G @ pi),
                r_G=float(r_G),
            )
        )
        lo += m

    new_S = S + gain[:, None, None] * dS - decay[:, None, None] * S
    if not np.all(np.isfinite(new_S)):
        worst = max(records, key=lambda r: np.abs(r.e_G).max())
        raise RuntimeError(
            "non-finite weight update: "
            f"max|S|={np.abs(S).max():g} r_G={worst.r_G:g} "
            f"max|e_G|={np.abs(worst.e_G).max():g} "
            f"episodes={[mdl.episode_count for mdl in models]}"
        )

    lo = 0
    for mdl, m in zip(models, sizes):
        for k, ly in enumerate(mdl.layers):
            ly.W = new_S[lo + k]
            ly.R = new_S[total + lo + k]
        lo += m
    return records


def learn_step(model: GrpModel, x, r_G: float):
    """One online update of every layer from (x, r_G); returns the mutated
    model and the step's per-layer record.

    Generator k moves down its squared-error gradient at the gated rate
    r_RP^k * mu; its RP regresses onto the reference responsibility at the
    base rate, through the sigmoid head.
    """
    return model, learn_step_joint([model], x, [r_G])[0]


def end_episode(model: GrpModel) -> GrpModel:
    """Anneal the responsibility sharpness: gamma <- beta * gamma."""
    model.gamma *= model.config.beta
    model.episode_count += 1
    return model
