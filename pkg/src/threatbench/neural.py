"""Autoencoders for anomaly detection: dense (tabular) and seq2seq LSTM (sessions).

Both train with mini-batch Adam on seeded batch orders, so (seed, data, config)
fully determine the final weights. Analytic gradients are exact; the test suite
holds them to central finite differences on every parameter. Padded session
steps are masked out of the LSTM loss entirely, so values in the padding can
never affect training or scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError
from .preprocess import SessionTensor
from .tabular import RngStream


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class TrainLog:
    """Per-epoch training (and optional validation) loss."""

    train_losses: list = field(default_factory=list)
    val_losses: list = field(default_factory=list)


class Adam:
    """Adam updates over a dict of named parameter arrays."""

    def __init__(self, step_size: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.step_size = step_size
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def update(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for key, g in grads.items():
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = self.beta1 * self.m[key] + (1.0 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1.0 - self.beta2) * g * g
            params[key] = params[key] - self.step_size * (self.m[key] / b1c) / (
                np.sqrt(self.v[key] / b2c) + self.eps
            )


# -- thresholding ----------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyThreshold:
    """Nearest-rank percentile of the calibration errors."""

    value: float
    percentile: float
    sample_size: int


def calibrate_threshold(errors, percentile: float) -> AnomalyThreshold:
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise DataError("cannot calibrate a threshold on an empty error sample")
    if not 0.0 < percentile < 100.0:
        raise DataError(f"percentile must be in (0, 100), got {percentile}")
    k = max(1, math.ceil(percentile / 100.0 * errors.size))
    value = float(np.sort(errors)[k - 1])
    return AnomalyThreshold(value=value, percentile=float(percentile), sample_size=int(errors.size))


def detect_anomalies(errors, threshold: AnomalyThreshold) -> np.ndarray:
    """1 iff error strictly exceeds the threshold value."""
    errors = np.asarray(errors, dtype=np.float64)
    return (errors > threshold.value).astype(np.int64)


# -- dense autoencoder --------------------------------------------------------------


@dataclass
class DenseAutoencoder:
    """Symmetric tanh-hidden, linear-output autoencoder with L1 on the weights."""

    layer_sizes: list
    params: dict  # W0, b0, W1, b1, ...
    l1: float = 0.0

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        a = np.asarray(X, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != self.input_dim:
            raise DataError(f"input width does not match autoencoder width {self.input_dim}")
        for l in range(self.n_layers):
            z = a @ self.params[f"W{l}"] + self.params[f"b{l}"]
            a = z if l == self.n_layers - 1 else np.tanh(z)
        return a


def init_dense_autoencoder(layer_sizes, l1: float, rng: RngStream) -> DenseAutoencoder:
    sizes = list(int(s) for s in layer_sizes)
    if len(sizes) < 3 or sizes != sizes[::-1]:
        raise DataError(f"layer sizes must be a symmetric encoder/decoder stack, got {sizes}")
    ri = rng.child("init")
    params = {}
    for l in range(len(sizes) - 1):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        scale = math.sqrt(2.0 / (fan_in + fan_out))
        params[f"W{l}"] = ri.normal(0.0, scale, size=(fan_in, fan_out))
        params[f"b{l}"] = np.zeros(fan_out)
    return DenseAutoencoder(layer_sizes=sizes, params=params, l1=l1)


def dense_loss_and_grads(model: DenseAutoencoder, X: np.ndarray):
    """Mean squared reconstruction error + l1 * sum|W|, with exact gradients."""
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    activations = [X]
    a = X
    L = model.n_layers
    for l in range(L):
        z = a @ model.params[f"W{l}"] + model.params[f"b{l}"]
        a = z if l == L - 1 else np.tanh(z)
        activations.append(a)
    recon = activations[-1]
    mse = float(np.mean((recon - X) ** 2))
    l1_term = sum(float(np.abs(model.params[f"W{l}"]).sum()) for l in range(L))
    loss = mse + model.l1 * l1_term

    grads = {}
    delta = 2.0 * (recon - X) / (n * d)
    for l in range(L - 1, -1, -1):
        a_prev = activations[l]
        grads[f"W{l}"] = a_prev.T @ delta + model.l1 * np.sign(model.params[f"W{l}"])
        grads[f"b{l}"] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ model.params[f"W{l}"].T) * (1.0 - a_prev**2)
    return loss, grads


def fit_dense_autoencoder(
    X_clean,
    layer_sizes,
    l1: float = 0.0,
    epochs: int = 50,
    step_size: float = 0.01,
    rng: RngStream | None = None,
    batch_size: int = 64,
    X_val=None,
):
    """Train on clean rows only (the caller guarantees label-0 input).

    Batch order per epoch comes from the rng, so training is reproducible.
    Returns (model, TrainLog with one full-dataset loss entry per epoch).
    """
    rng = rng or RngStream(0, "dense-ae")
    X = np.asarray(X_clean, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DataError("training input must be a non-empty 2-D matrix")
    model = init_dense_autoencoder(layer_sizes, l1, rng)
    if model.input_dim != X.shape[1]:
        raise DataError(f"layer sizes start at {model.input_dim}, data has {X.shape[1]} features")
    opt = Adam(step_size)
    log = TrainLog()
    n = X.shape[0]
    for epoch in range(epochs):
        order = rng.child(f"epoch/{epoch}").permutation(n)
        for start in range(0, n, batch_size):
            batch = X[order[start : start + batch_size]]
            _, grads = dense_loss_and_grads(model, batch)
            opt.update(model.params, grads)
        loss, _ = dense_loss_and_grads(model, X)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch + 1}")
        log.train_losses.append(loss)
        if X_val is not None:
            val_loss, _ = dense_loss_and_grads(model, np.asarray(X_val, dtype=np.float64))
            log.val_losses.append(val_loss)
    return model, log


def reconstruction_errors(model: DenseAutoencoder, X) -> np.ndarray:
    """Per-row mean over features of squared reconstruction difference."""
    X = np.asarray(X, dtype=np.float64)
    recon = model.reconstruct(X)
    return np.mean((recon - X) ** 2, axis=1)


# -- LSTM autoencoder ---------------------------------------------------------------


@dataclass
class LstmAutoencoder:
    """Seq2seq LSTM: encoder -> latent projection -> latent-fed decoder -> output.

    Gate layout in the fused weight matrices is [input, forget, candidate,
    output]. The decoder sees the latent vector as its input at every step.
    """

    input_dim: int
    hidden: int
    latent: int
    params: dict  # enc_Wx, enc_Wh, enc_b, lat_W, lat_b, dec_Wx, dec_Wh, dec_b, out_W, out_b


def init_lstm_autoencoder(input_dim: int, hidden: int, latent: int, rng: RngStream) -> LstmAutoencoder:
    if latent >= hidden:
        raise DataError(f"latent size {latent} must be smaller than hidden size {hidden}")
    ri = rng.child("init")

    def mat(fan_in, fan_out):
        return ri.normal(0.0, math.sqrt(1.0 / fan_in), size=(fan_in, fan_out))

    params = {
        "enc_Wx": mat(input_dim, 4 * hidden),
        "enc_Wh": mat(hidden, 4 * hidden),
        "enc_b": np.zeros(4 * hidden),
        "lat_W": mat(hidden, latent),
        "lat_b": np.zeros(latent),
        "dec_Wx": mat(latent, 4 * hidden),
        "dec_Wh": mat(hidden, 4 * hidden),
        "dec_b": np.zeros(4 * hidden),
        "out_W": mat(hidden, input_dim),
        "out_b": np.zeros(input_dim),
    }
    return LstmAutoencoder(input_dim=input_dim, hidden=hidden, latent=latent, params=params)


def _lstm_cell_forward(x, h_prev, c_prev, m, Wx, Wh, b, hidden):
    """One masked step. Rows with mask 0 carry h/c through unchanged."""
    pre = x @ Wx + h_prev @ Wh + b
    i = _sigmoid(pre[:, :hidden])
    f = _sigmoid(pre[:, hidden : 2 * hidden])
    g = np.tanh(pre[:, 2 * hidden : 3 * hidden])
    o = _sigmoid(pre[:, 3 * hidden :])
    c_new = f * c_prev + i * g
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    mm = m[:, None]
    h = mm * h_new + (1.0 - mm) * h_prev
    c = mm * c_new + (1.0 - mm) * c_prev
    cache = (x, h_prev, c_prev, i, f, g, o, c_new, tanh_c, mm)
    return h, c, cache


def _lstm_cell_backward(dh, dc, cache, Wx, Wh, grads, prefix):
    """Backward through one masked step; returns (dh_prev, dc_prev, dx)."""
    x, h_prev, c_prev, i, f, g, o, c_new, tanh_c, mm = cache
    dh_new = mm * dh
    dh_prev_pass = (1.0 - mm) * dh
    dc_new = mm * dc + dh_new * o * (1.0 - tanh_c**2)
    dc_prev_pass = (1.0 - mm) * dc

    do = dh_new * tanh_c
    df = dc_new * c_prev
    di = dc_new * g
    dg = dc_new * i

    dpre = np.concatenate(
        [di * i * (1.0 - i), df * f * (1.0 - f), dg * (1.0 - g**2), do * o * (1.0 - o)],
        axis=1,
    )
    grads[f"{prefix}_Wx"] += x.T @ dpre
    grads[f"{prefix}_Wh"] += h_prev.T @ dpre
    grads[f"{prefix}_b"] += dpre.sum(axis=0)

    dh_prev = dpre @ Wh.T + dh_prev_pass
    dc_prev = dc_new * f + dc_prev_pass
    dx = dpre @ Wx.T
    return dh_prev, dc_prev, dx


def _lstm_forward(model: LstmAutoencoder, data, lengths, need_caches: bool = True):
    """Full forward pass; per-step caches are collected only for training."""
    B, T, d = data.shape
    H = model.hidden
    p = model.params
    mask = (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)

    h = np.zeros((B, H))
    c = np.zeros((B, H))
    enc_caches = []
    for t in range(T):
        h, c, cache = _lstm_cell_forward(data[:, t, :], h, c, mask[:, t], p["enc_Wx"], p["enc_Wh"], p["enc_b"], H)
        if need_caches:
            enc_caches.append(cache)
    h_final = h
    z = h_final @ p["lat_W"] + p["lat_b"]

    hd = np.zeros((B, H))
    cd = np.zeros((B, H))
    dec_caches = []
    dec_h = []
    recon = np.zeros_like(data)
    for t in range(T):
        hd, cd, cache = _lstm_cell_forward(z, hd, cd, mask[:, t], p["dec_Wx"], p["dec_Wh"], p["dec_b"], H)
        if need_caches:
            dec_caches.append(cache)
            dec_h.append(hd)
        recon[:, t, :] = hd @ p["out_W"] + p["out_b"]
    return recon, mask, enc_caches, dec_caches, dec_h, h_final, z


def lstm_loss(model: LstmAutoencoder, data, lengths) -> float:
    """Masked mean squared error over every real (step, feature) entry."""
    data = np.asarray(data, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    recon, mask, *_ = _lstm_forward(model, data, lengths, need_caches=False)
    denom = float(mask.sum()) * data.shape[2]
    return float((((recon - data) ** 2) * mask[:, :, None]).sum() / denom)


def lstm_loss_and_grads(model: LstmAutoencoder, data, lengths):
    data = np.asarray(data, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.int64)
    B, T, d = data.shape
    H = model.hidden
    p = model.params
    recon, mask, enc_caches, dec_caches, dec_h, h_final, z = _lstm_forward(model, data, lengths)
    denom = float(mask.sum()) * d
    diff = (recon - data) * mask[:, :, None]
    loss = float((diff**2).sum() / denom)

    grads = {k: np.zeros_like(v) for k, v in p.items()}
    dz = np.zeros_like(z)
    dh = np.zeros((B, H))
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dy = 2.0 * diff[:, t, :] / denom
        grads["out_W"] += dec_h[t].T @ dy
        grads["out_b"] += dy.sum(axis=0)
        dh = dh + dy @ p["out_W"].T
        dh, dc, dx = _lstm_cell_backward(dh, dc, dec_caches[t], p["dec_Wx"], p["dec_Wh"], grads, "dec")
        dz += dx

    grads["lat_W"] = h_final.T @ dz
    grads["lat_b"] = dz.sum(axis=0)
    dh = dz @ p["lat_W"].T
    dc = np.zeros((B, H))
    for t in range(T - 1, -1, -1):
        dh, dc, _ = _lstm_cell_backward(dh, dc, enc_caches[t], p["enc_Wx"], p["enc_Wh"], grads, "enc")
    return loss, grads


def fit_lstm_autoencoder(
    sessions: SessionTensor,
    hidden: int = 32,
    latent: int = 16,
    epochs: int = 20,
    step_size: float = 0.01,
    rng: RngStream | None = None,
    batch_size: int = 64,
):
    """Train the seq2seq autoencoder on (assumed clean) sessions.

    Returns (model, TrainLog) with one full-set masked loss per epoch.
    """
    rng = rng or RngStream(0, "lstm-ae")
    data = np.asarray(sessions.data, dtype=np.float64)
    lengths = np.asarray(sessions.lengths, dtype=np.int64)
    if data.ndim != 3 or data.shape[0] == 0:
        raise DataError("session tensor must be non-empty and 3-D")
    if lengths.sum() == 0:
        raise DataError("all session lengths are zero")
    model = init_lstm_autoencoder(data.shape[2], hidden, latent, rng)
    opt = Adam(step_size)
    log = TrainLog()
    n = data.shape[0]
    for epoch in range(epochs):
        order = rng.child(f"epoch/{epoch}").permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start : start + batch_size]
            _, grads = lstm_loss_and_grads(model, data[sel], lengths[sel])
            opt.update(model.params, grads)
        loss = lstm_loss(model, data, lengths)
        if not math.isfinite(loss):
            raise NumericError(f"non-finite training loss at epoch {epoch + 1}")
        log.train_losses.append(loss)
    return model, log


def score_sessions(model: LstmAutoencoder, sessions: SessionTensor) -> np.ndarray:
    """Per-session masked mean squared reconstruction error."""
    data = np.asarray(sessions.data, dtype=np.float64)
    lengths = np.asarray(sessions.lengths, dtype=np.int64)
    if data.ndim != 3 or data.shape[2] != model.input_dim:
        raise DataError(f"session features do not match model width {model.input_dim}")
    recon, mask, *_ = _lstm_forward(model, data, lengths, need_caches=False)
    sq = ((recon - data) ** 2 * mask[:, :, None]).sum(axis=(1, 2))
    denom = np.maximum(lengths, 1) * data.shape[2]
    return sq / denom
