"""Multivariate LSTM demand forecaster as a flat parameter vector.

A single LSTM layer encodes the KPI sequence; the static configuration
features are concatenated to the final hidden state and fed through a
two-layer head whose output is clamped nonnegative (demand is energy).
Forward and backward passes are hand-rolled in numpy so the model is a pure
function of one flat float64 vector -- the unit federated averaging operates
on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LstmSpec:
    """Architecture descriptor; all sites and rounds share one spec."""

    input_size: int = 2
    hidden_size: int = 32
    static_size: int = 10
    head_hidden: int = 16
    sequence_length: int = 16

    @property
    def n_params(self) -> int:
        h, i, s, d = self.hidden_size, self.input_size, self.static_size, self.head_hidden
        return 4 * h * (i + h + 1) + (h + s) * d + d + d + 1

    def offsets(self):
        h, i, s, d = self.hidden_size, self.input_size, self.static_size, self.head_hidden
        sizes = [4 * h * i, 4 * h * h, 4 * h, (h + s) * d, d, d, 1]
        offs = np.cumsum([0] + sizes)
        return offs


def unpack(spec: LstmSpec, params: np.ndarray):
    """Views into the flat vector: (Wx, Wh, b, W1, b1, w2, b2)."""
    if params.shape != (spec.n_params,):
        raise ValueError(f"expected {spec.n_params} parameters, got {params.shape}")
    h, i, s, d = spec.hidden_size, spec.input_size, spec.static_size, spec.head_hidden
    o = spec.offsets()
    return (
        params[o[0]:o[1]].reshape(4 * h, i),
        params[o[1]:o[2]].reshape(4 * h, h),
        params[o[2]:o[3]],
        params[o[3]:o[4]].reshape(h + s, d),
        params[o[4]:o[5]],
        params[o[5]:o[6]],
        params[o[6]:o[7]],
    )


def init_params(spec: LstmSpec, rng: np.random.Generator) -> np.ndarray:
    """Small random init; forget-gate bias raised, head bias positive."""
    params = 0.1 * rng.standard_normal(spec.n_params)
    _, _, b, _, _, _, b2 = unpack(spec, params)
    h = spec.hidden_size
    b[h:2 * h] += 1.0  # forget gate open at init
    b2[0] = 0.5  # start in the positive branch of the output clamp
    return params


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def forward_batch(spec: LstmSpec, params: np.ndarray, X: np.ndarray,
                  S: np.ndarray, need_cache: bool = False):
    """Batched forward pass.

    X: (B, L, input_size) standardized KPI windows.
    S: (B, static_size) static features.
    Returns (predictions (B,), cache or None).
    """
    if not np.all(np.isfinite(params)):
        raise ValueError("non-finite model parameters")
    Wx, Wh, b, W1, b1, w2, b2 = unpack(spec, params)
    B, L, _ = X.shape
    H = spec.hidden_size
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    cache_steps = []
    for t in range(L):
        x_t = X[:, t, :]
        z = x_t @ Wx.T + h @ Wh.T + b
        i_g = _sigmoid(z[:, :H])
        f_g = _sigmoid(z[:, H:2 * H])
        g_g = np.tanh(z[:, 2 * H:3 * H])
        o_g = _sigmoid(z[:, 3 * H:])
        c_prev = c
        c = f_g * c_prev + i_g * g_g
        tc = np.tanh(c)
        h_prev_saved = h
        h = o_g * tc
        if need_cache:
            cache_steps.append((x_t, h_prev_saved, c_prev, i_g, f_g, g_g, o_g, tc))
    u = np.concatenate([h, S], axis=1)
    a1 = u @ W1 + b1
    r1 = np.tanh(a1)
    z2 = r1 @ w2 + b2[0]
    pred = np.maximum(z2, 0.0)
    cache = (cache_steps, u, r1, z2) if need_cache else None
    return pred, cache


def lstm_forward(spec: LstmSpec, params: np.ndarray, window: np.ndarray,
                 static: np.ndarray) -> float:
    """Scalar demand prediction (>= 0) for a single feature window."""
    pred, _ = forward_batch(spec, params, window[None, :, :], static[None, :])
    return float(pred[0])


def backward_batch(spec: LstmSpec, params: np.ndarray, X: np.ndarray,
                   S: np.ndarray, dpred: np.ndarray, cache) -> np.ndarray:
    """Gradient of sum(dpred * pred) w.r.t. the flat parameter vector."""
    Wx, Wh, b, W1, b1, w2, b2 = unpack(spec, params)
    H = spec.hidden_size
    cache_steps, u, r1, z2 = cache

    grad = np.zeros_like(params)
    gWx, gWh, gb, gW1, gb1, gw2, gb2 = unpack(spec, grad)

    dz2 = dpred * (z2 > 0.0)
    gw2 += r1.T @ dz2
    gb2 += dz2.sum()
    dr1 = np.outer(dz2, w2)
    da1 = dr1 * (1.0 - r1 * r1)
    gW1 += u.T @ da1
    gb1 += da1.sum(axis=0)
    du = da1 @ W1.T
    dh = du[:, :H]
    dc = np.zeros_like(dh)
    for x_t, h_prev, c_prev, i_g, f_g, g_g, o_g, tc in reversed(cache_steps):
        dc = dc + dh * o_g * (1.0 - tc * tc)
        do = dh * tc
        di = dc * g_g
        dg = dc * i_g
        df = dc * c_prev
        dz = np.concatenate(
            [
                di * i_g * (1.0 - i_g),
                df * f_g * (1.0 - f_g),
                dg * (1.0 - g_g * g_g),
                do * o_g * (1.0 - o_g),
            ],
            axis=1,
        )
        gWx += dz.T @ x_t
        gWh += dz.T @ h_prev
        gb += dz.sum(axis=0)
        dh = dz @ Wh
        dc = dc * f_g
    return grad


def loss_and_grad(spec: LstmSpec, params: np.ndarray, X: np.ndarray,
                  S: np.ndarray, targets: np.ndarray):
    """Mean squared error over the batch and its parameter gradient."""
    preds, cache = forward_batch(spec, params, X, S, need_cache=True)
    err = preds - targets
    loss = float(np.mean(err * err))
    dpred = 2.0 * err / len(targets)
    return loss, backward_batch(spec, params, X, S, dpred, cache)


def lstm_gradients(spec: LstmSpec, params: np.ndarray, window: np.ndarray,
                   static: np.ndarray, target: float) -> np.ndarray:
    """Gradient of the squared error of one window via backprop through time."""
    _, grad = loss_and_grad(
        spec, params, window[None, :, :], static[None, :], np.array([target])
    )
    return grad
