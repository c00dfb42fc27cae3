"""Multiplicative sensory network: the shared primitive behind Generators
and Responsibility Predictors.

A network is one 8x8 weight matrix W over a nonnegative input vector x.
Diagonal weights are linear gains, off-diagonal weights modulate
exponentially (a presynaptic-inhibition motif: input j scales the gain of
input i without adding to it):

    G(W, x) = sum_i  W_ii * x_i * prod_{j != i} exp(W_ij * x_j)

Signed sensor channels are split into (positive, negative) half-wave pairs
before entering the network, so every x_j >= 0 and exactly one of each pair
is active. A consequence worth keeping in mind: if x_j = 0 then every
exp(W_ij * x_j) = 1 and the output is independent of W_ij entirely.

Exponent arguments are clamped to +-EXP_CLAMP before exponentiation to keep
early-training weight transients from overflowing; each clamped entry bumps
a module-level counter (`exp_clamp_count`) so a run can report whether the
guard ever fired. `net_gradient` returns the exact partials of the
unclamped sum-product, evaluated with the same clamped row products as the
forward pass.

All array ops broadcast over leading axes, so a stack of weight matrices
shaped (m, 8, 8) evaluates m networks in one call.
"""

from __future__ import annotations

import numpy as np

RAW_DIM = 5  # (alpha - alpha_tgt), phi_h, phi_h_dot, phi_k, phi_k_dot
NET_DIM = 8
EXP_CLAMP = 50.0

_EYE = np.eye(NET_DIM, dtype=bool)
_OFF = ~_EYE
_OFF_F = _OFF.astype(float)

_P_FLOOR = np.finfo(float).tiny
_P_CEIL = np.nextafter(1.0, 0.0)

_clamp_events = 0


def exp_clamp_count() -> int:
    """Total exponent-argument clamps since the last reset."""
    return _clamp_events


def reset_exp_clamp_count() -> None:
    global _clamp_events
    _clamp_events = 0


def split_input(raw):
    """Map the raw 5-vector [(alpha - alpha_tgt), phi_h, phi_h_dot, phi_k,
    phi_k_dot] to the 8-dim network input.

    The target error and both joint rates split into half-wave pairs
    (max(v, 0), max(-v, 0)); the joint angles pass through unsplit (they
    never go negative on this leg). Broadcasts over leading axes.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != RAW_DIM:
        raise ValueError(f"expected {RAW_DIM} sensory channels, got {raw.shape[-1]}")
    out = np.empty(raw.shape[:-1] + (NET_DIM,))
    da = raw[..., 0]
    out[..., 0] = np.maximum(da, 0.0)
    out[..., 1] = np.maximum(-da, 0.0)
    out[..., 2] = raw[..., 1]
    hd = raw[..., 2]
    out[..., 3] = np.maximum(hd, 0.0)
    out[..., 4] = np.maximum(-hd, 0.0)
    out[..., 5] = raw[..., 3]
    kd = raw[..., 4]
    out[..., 6] = np.maximum(kd, 0.0)
    out[..., 7] = np.maximum(-kd, 0.0)
    return out


def _row_products(W, x):
    """prod_{j != i} exp(W_ij * x_j) per row, with per-argument clamping."""
    global _clamp_events
    args = W * x[..., None, :]
    clipped = np.minimum(np.maximum(args, -EXP_CLAMP), EXP_CLAMP)
    hits = int(np.count_nonzero((clipped != args) & _OFF))
    if hits:
        _clamp_events += hits
    # row sums over off-diagonal entries only; the diagonal argument
    # W_ii * x_i is the linear gain, never exponentiated
    return np.exp((clipped * _OFF_F).sum(axis=-1))


def net_forward(W, x):
    """Evaluate G(W, x). Scalar for an (8, 8) matrix, an array of leading
    shape for stacked weights."""
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    diag = np.diagonal(W, axis1=-2, axis2=-1)
    return (diag * x * _row_products(W, x)).sum(axis=-1)


def forward_and_gradient(W, x):
    """(G, dG/dW) in one pass, sharing the row products.

    The training loop calls this once per step on a whole weight stack; the
    values are identical to separate net_forward / net_gradient calls.
    """
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    d_diag = x * _row_products(W, x)
    terms = np.diagonal(W, axis1=-2, axis2=-1) * d_diag
    grad = terms[..., :, None] * x[..., None, :]
    # overwrite the (i, i) slots with the exact diagonal partials
    grad.reshape(grad.shape[:-2] + (NET_DIM * NET_DIM,))[..., :: NET_DIM + 1] = d_diag
    return terms.sum(axis=-1), grad


def net_gradient(W, x):
    """Exact partials dG/dW, same shape as W.

    Entry (i, i) is x_i * prod_{j != i} exp(W_ij * x_j); entry (i, j) for
    j != i is term_i * x_j where term_i is row i's contribution to G. Both
    vanish wherever x_i = 0 resp. x_j = 0.
    """
    return forward_and_gradient(W, x)[1]


def sigmoid_head(b, w_gain: float = 1.0):
    """Responsibility head pi = 1 / (1 + exp(-w_gain * b)).

    Evaluated in the overflow-free two-branch form and pinned to the open
    interval (0, 1) so a saturated head never reports exactly 0 or 1.
    """
    z = np.asarray(b, dtype=float) * w_gain
    e = np.exp(-np.abs(z))
    p = np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.minimum(np.maximum(p, _P_FLOOR), _P_CEIL)[()]


def finite_difference_check(W, x, h: float = 1e-6) -> float:
    """Max discrepancy between net_gradient and central differences of
    net_forward, entrywise over one 8x8 matrix.

    Discrepancies are scaled by max(1, |analytic|, |numeric|): relative for
    large entries, absolute for entries near zero (where central
    differences are all cancellation noise).
    """
    W = np.asarray(W, dtype=float)
    x = np.asarray(x, dtype=float)
    analytic = net_gradient(W, x)
    fd = np.empty_like(analytic)
    for i in range(NET_DIM):
        for j in range(NET_DIM):
            Wp = W.copy()
            Wp[i, j] += h
            Wm = W.copy()
            Wm[i, j] -= h
            fd[i, j] = (net_forward(Wp, x) - net_forward(Wm, x)) / (2.0 * h)
    scale = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(fd)))
    return float(np.max(np.abs(analytic - fd) / scale))
