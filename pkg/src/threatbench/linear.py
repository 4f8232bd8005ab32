"""Class-weighted logistic regression and Platt score calibration.

Both fit by deterministic full-batch gradient descent: cheap at this scale and
directly checkable against finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NumericError


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=np.float64)))


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    class_weights: dict = field(default_factory=lambda: {0: 1.0, 1: 1.0})
    l2: float = 0.0


def logistic_loss(model: LogisticModel, X, y, sample_weights) -> float:
    """Weighted mean logloss plus L2 penalty on the weights (bias excluded)."""
    p = np.clip(sigmoid(X @ model.weights + model.bias), 1e-12, 1.0 - 1e-12)
    data = -np.mean(sample_weights * (y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))
    return float(data + 0.5 * model.l2 * np.dot(model.weights, model.weights))


def logistic_gradient(model: LogisticModel, X, y, sample_weights):
    """(d_weights, d_bias) of the loss above: (1/n) sum cw_i (p_i - y_i) x_i + l2 w."""
    n = X.shape[0]
    p = sigmoid(X @ model.weights + model.bias)
    r = sample_weights * (p - y)
    grad_w = X.T @ r / n + model.l2 * model.weights
    grad_b = float(r.sum() / n)
    return grad_w, grad_b


def fit_logistic(X, y, class_weights=None, l2: float = 0.0, epochs: int = 500, step_size: float = 0.1) -> LogisticModel:
    """Full-batch gradient descent on weighted L2-regularized logloss.

    Stops after `epochs` or once the gradient max-norm drops below 1e-6.
    Class weights default to inverse class frequency.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("inputs contain non-finite values")
    classes = np.unique(y)
    if len(classes) < 2:
        raise DataError("labels contain a single class; cannot fit a classifier")
    n, d = X.shape
    if class_weights is None:
        class_weights = {int(c): n / (2.0 * float((y == c).sum())) for c in classes}
    sw = np.where(y == 1, class_weights[1], class_weights[0])

    model = LogisticModel(weights=np.zeros(d), bias=0.0, class_weights=dict(class_weights), l2=l2)
    for _ in range(epochs):
        grad_w, grad_b = logistic_gradient(model, X, y, sw)
        if max(np.abs(grad_w).max(initial=0.0), abs(grad_b)) < 1e-6:
            break
        model.weights = model.weights - step_size * grad_w
        model.bias = model.bias - step_size * grad_b
        if not (np.isfinite(model.weights).all() and math.isfinite(model.bias)):
            raise NumericError("logistic fit diverged to non-finite parameters")
    return model


def predict_logit(model: LogisticModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != len(model.weights):
        raise DataError(f"feature width {X.shape[1]} does not match training width {len(model.weights)}")
    return X @ model.weights + model.bias


def predict_proba(model: LogisticModel, X) -> np.ndarray:
    return sigmoid(predict_logit(model, X))


@dataclass
class CalibratorSpec:
    """Calibrated probability = sigmoid(A * score + B); monotone iff A > 0."""

    A: float
    B: float

    def apply(self, scores) -> np.ndarray:
        return sigmoid(self.A * np.asarray(scores, dtype=np.float64) + self.B)


def fit_platt(raw_scores, labels, epochs: int = 2000, step_size: float = 0.1) -> CalibratorSpec:
    """Fit (A, B) by gradient descent on logloss against smoothed targets.

    Targets are (N+ + 1)/(N+ + 2) for positives and 1/(N- + 2) for negatives,
    which keeps the optimum finite on separable scores.
    """
    s = np.asarray(raw_scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if not np.isfinite(s).all():
        raise DataError("scores contain non-finite values")
    n_pos = float((y == 1).sum())
    n_neg = float((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DataError("labels contain a single class; cannot calibrate")
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    A, B = 1.0, 0.0
    n = len(s)
    for _ in range(epochs):
        p = sigmoid(A * s + B)
        r = p - t
        grad_a = float(np.dot(r, s) / n)
        grad_b = float(r.sum() / n)
        if max(abs(grad_a), abs(grad_b)) < 1e-6:
            break
        A -= step_size * grad_a
        B -= step_size * grad_b
        if not (math.isfinite(A) and math.isfinite(B)):
            raise NumericError("Platt calibration diverged to non-finite parameters")
    return CalibratorSpec(A=A, B=B)
