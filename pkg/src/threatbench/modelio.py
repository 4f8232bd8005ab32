"""Versioned structured-text (JSON) model documents.

Floats serialize as shortest round-trip reprs, so a saved and reloaded model
predicts bit-identically. Autoencoder documents may carry their calibrated
anomaly threshold alongside the weights.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import DataError
from .forest import (
    BoostConfig,
    ForestConfig,
    GradientBoostingModel,
    IsolationForestModel,
    RandomForestModel,
    TreeNode,
)
from .linear import CalibratorSpec, LogisticModel
from .neural import AnomalyThreshold, DenseAutoencoder, LstmAutoencoder

FORMAT = "threatbench-model"
VERSION = 1


def _node_to_doc(node: TreeNode) -> dict:
    doc = {"n": node.n_samples, "mean": node.mean}
    if node.counts is not None:
        doc["counts"] = [float(c) for c in node.counts]
    if node.is_leaf:
        doc["value"] = node.value
    else:
        doc["feature"] = node.feature
        doc["threshold"] = node.threshold
        doc["left"] = _node_to_doc(node.left)
        doc["right"] = _node_to_doc(node.right)
    return doc


def _node_from_doc(doc: dict) -> TreeNode:
    node = TreeNode(
        n_samples=int(doc["n"]),
        mean=float(doc["mean"]),
        counts=np.asarray(doc["counts"], dtype=np.float64) if "counts" in doc else None,
    )
    if "feature" in doc:
        node.feature = int(doc["feature"])
        node.threshold = float(doc["threshold"])
        node.left = _node_from_doc(doc["left"])
        node.right = _node_from_doc(doc["right"])
    else:
        node.value = float(doc["value"])
    return node


def _payload(model) -> tuple[str, dict]:
    if isinstance(model, RandomForestModel):
        return "random_forest", {
            "n_features": model.n_features,
            "config": vars(model.config),
            "trees": [_node_to_doc(t) for t in model.trees],
        }
    if isinstance(model, GradientBoostingModel):
        return "gradient_boosting", {
            "base_score": model.base_score,
            "best_iteration": model.best_iteration,
            "n_features": model.n_features,
            "config": vars(model.config),
            "val_losses": list(model.val_losses),
            "trees": [_node_to_doc(t) for t in model.trees],
        }
    if isinstance(model, IsolationForestModel):
        return "isolation_forest", {
            "psi": model.psi,
            "n_features": model.n_features,
            "trees": [_node_to_doc(t) for t in model.trees],
        }
    if isinstance(model, LogisticModel):
        return "logistic", {
            "weights": model.weights.tolist(),
            "bias": model.bias,
            "class_weights": {str(k): v for k, v in model.class_weights.items()},
            "l2": model.l2,
        }
    if isinstance(model, CalibratorSpec):
        return "platt", {"A": model.A, "B": model.B}
    if isinstance(model, DenseAutoencoder):
        return "dense_autoencoder", {
            "layer_sizes": list(model.layer_sizes),
            "l1": model.l1,
            "params": {k: v.tolist() for k, v in model.params.items()},
        }
    if isinstance(model, LstmAutoencoder):
        return "lstm_autoencoder", {
            "input_dim": model.input_dim,
            "hidden": model.hidden,
            "latent": model.latent,
            "params": {k: v.tolist() for k, v in model.params.items()},
        }
    raise DataError(f"cannot serialize model of type {type(model).__name__}")


def save_model(model, path, threshold: AnomalyThreshold | None = None) -> None:
    kind, payload = _payload(model)
    doc = {"format": FORMAT, "version": VERSION, "kind": kind, "payload": payload}
    if threshold is not None:
        doc["threshold"] = {
            "value": threshold.value,
            "percentile": threshold.percentile,
            "sample_size": threshold.sample_size,
        }
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, sort_keys=True, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise DataError(f"cannot write model to {path}: {exc}") from exc


def load_model(path):
    """Returns (model, threshold-or-None)."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise DataError(f"model file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"model file {path} is not valid JSON: {exc}") from exc
    if doc.get("format") != FORMAT:
        raise DataError(f"{path} is not a {FORMAT} document")
    if doc.get("version") != VERSION:
        raise DataError(f"unsupported model document version {doc.get('version')}")
    payload = doc["payload"]
    kind = doc["kind"]

    if kind == "random_forest":
        model = RandomForestModel(
            trees=[_node_from_doc(t) for t in payload["trees"]],
            n_features=int(payload["n_features"]),
            config=ForestConfig(**payload["config"]),
        )
    elif kind == "gradient_boosting":
        model = GradientBoostingModel(
            base_score=float(payload["base_score"]),
            trees=[_node_from_doc(t) for t in payload["trees"]],
            best_iteration=int(payload["best_iteration"]),
            n_features=int(payload["n_features"]),
            config=BoostConfig(**payload["config"]),
            val_losses=list(payload["val_losses"]),
        )
    elif kind == "isolation_forest":
        model = IsolationForestModel(
            trees=[_node_from_doc(t) for t in payload["trees"]],
            psi=int(payload["psi"]),
            n_features=int(payload["n_features"]),
        )
    elif kind == "logistic":
        model = LogisticModel(
            weights=np.asarray(payload["weights"], dtype=np.float64),
            bias=float(payload["bias"]),
            class_weights={int(k): float(v) for k, v in payload["class_weights"].items()},
            l2=float(payload["l2"]),
        )
    elif kind == "platt":
        model = CalibratorSpec(A=float(payload["A"]), B=float(payload["B"]))
    elif kind == "dense_autoencoder":
        model = DenseAutoencoder(
            layer_sizes=list(payload["layer_sizes"]),
            params={k: np.asarray(v, dtype=np.float64) for k, v in payload["params"].items()},
            l1=float(payload["l1"]),
        )
    elif kind == "lstm_autoencoder":
        model = LstmAutoencoder(
            input_dim=int(payload["input_dim"]),
            hidden=int(payload["hidden"]),
            latent=int(payload["latent"]),
            params={k: np.asarray(v, dtype=np.float64) for k, v in payload["params"].items()},
        )
    else:
        raise DataError(f"unknown model kind {kind!r} in {path}")

    threshold = None
    if "threshold" in doc:
        t = doc["threshold"]
        threshold = AnomalyThreshold(
            value=float(t["value"]), percentile=float(t["percentile"]), sample_size=int(t["sample_size"])
        )
    return model, threshold
