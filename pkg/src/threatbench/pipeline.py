"""End-to-end domain pipelines, run reports, and report emission.

Each pipeline is a pure function of (PipelineConfig, toolkit version): reports
carry no timestamps or host identifiers and artifact paths are stored relative
to the report, so identical configs produce byte-identical output trees. Every
fit or calibration stage consumes training-partition rows only; pass a
LeakageAudit to record exactly which source rows each stage touched.
"""

from __future__ import annotations

import copy
import json
import os
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .errors import ConfigError, DataError
from .evalx import classification_report, permutation_importance
from .forest import (
    BoostConfig,
    ForestConfig,
    fit_gradient_boosting,
    fit_isolation_forest,
    fit_random_forest,
    iforest_score,
)
from .linear import fit_logistic, fit_platt, predict_proba as logistic_proba
from .modelio import save_model
from .neural import (
    calibrate_threshold,
    detect_anomalies,
    fit_dense_autoencoder,
    fit_lstm_autoencoder,
    reconstruction_errors,
    score_sessions,
)
from .preprocess import (
    SessionTensor,
    apply_one_hot,
    apply_scaler,
    downsample_majority,
    fit_one_hot,
    fit_scaler,
    sessionize,
    smote_oversample,
)
from .synthgen import GENERATORS, GeneratorConfig, save_events_jsonl
from .tabular import Dataset, RngStream, save_dataset, stratified_indices, stratified_split

DOMAINS = ("intrusion", "malware", "phishing", "ueba")
REPORT_SCHEMA_VERSION = 1

_GENERATOR_DEFAULTS = {
    "intrusion": {"n": 8000, "anomaly_rate": 0.05, "overrides": {}},
    "malware": {"n": 10000, "anomaly_rate": 0.10, "overrides": {}},
    "phishing": {"n": 10000, "anomaly_rate": 0.20, "overrides": {}},
    "ueba": {"n": 0, "anomaly_rate": 0.02, "overrides": {}},
}

_PREPROCESS_DEFAULTS = {
    "test_fraction": 0.3,
    "validation_fraction": 0.2,  # of the train partition, for early stopping
    "smote_k": 5,
    "downsample_ratio": 1.0,
    "time_steps": 50,
}

_MODEL_DEFAULTS = {
    "forest": {"n_trees": 100, "max_depth": 12, "min_samples_split": 2},
    "boosting": {
        "learning_rate": 0.1,
        "n_rounds": 200,
        "max_depth": 3,
        "lam": 1.0,
        "gamma": 0.0,
        "subsample": 0.8,
        "early_stopping_rounds": 10,
    },
    "logistic": {"l2": 1e-4, "epochs": 400, "step_size": 0.5},
    "iforest": {"n_trees": 100, "psi": 256},
    "dense_ae": {"l1": 1e-5, "epochs": 30, "step_size": 0.01, "batch_size": 64},
    "lstm_ae": {"hidden": 32, "latent": 16, "epochs": 12, "step_size": 0.01, "batch_size": 64},
    "calibrate_boosting": True,
    "importance_repeats": 3,
}


@dataclass
class PipelineConfig:
    """One domain run: generator, preprocessing, model and threshold settings."""

    domain: str
    seed: int = 42
    generator: dict = field(default_factory=dict)
    preprocess: dict = field(default_factory=dict)
    models: dict = field(default_factory=dict)
    threshold_percentile: float = 95.0

    def validate(self) -> None:
        if self.domain not in DOMAINS:
            raise ConfigError(f"unknown domain {self.domain!r}; choose from {DOMAINS}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        if not 0.0 < self.threshold_percentile < 100.0:
            raise ConfigError(f"threshold_percentile must be in (0, 100), got {self.threshold_percentile}")
        frac = self.preprocess.get("test_fraction", 0.3)
        if not 0.0 < frac < 1.0:
            raise ConfigError(f"test_fraction must be in (0, 1), got {frac}")

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "seed": self.seed,
            "generator": copy.deepcopy(self.generator),
            "preprocess": copy.deepcopy(self.preprocess),
            "models": copy.deepcopy(self.models),
            "threshold_percentile": self.threshold_percentile,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        unknown = set(d) - {"domain", "seed", "generator", "preprocess", "models", "threshold_percentile"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "domain" not in d:
            raise ConfigError("config requires a domain")
        return cls(
            domain=d["domain"],
            seed=d.get("seed", 42),
            generator=copy.deepcopy(d.get("generator", {})),
            preprocess=copy.deepcopy(d.get("preprocess", {})),
            models=copy.deepcopy(d.get("models", {})),
            threshold_percentile=d.get("threshold_percentile", 95.0),
        )


def default_config(domain: str, seed: int = 42) -> PipelineConfig:
    if domain not in DOMAINS:
        raise ConfigError(f"unknown domain {domain!r}; choose from {DOMAINS}")
    return PipelineConfig(
        domain=domain,
        seed=seed,
        generator=copy.deepcopy(_GENERATOR_DEFAULTS[domain]),
        preprocess=copy.deepcopy(_PREPROCESS_DEFAULTS),
        models=copy.deepcopy(_MODEL_DEFAULTS),
        threshold_percentile=95.0,
    )


def _merged(defaults: dict, overrides: dict) -> dict:
    """Defaults overlaid with overrides; nested dicts merge one level deep."""
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def generator_config(config: PipelineConfig) -> GeneratorConfig:
    g = _merged(_GENERATOR_DEFAULTS[config.domain], config.generator)
    return GeneratorConfig(
        n=int(g["n"]),
        anomaly_rate=float(g["anomaly_rate"]),
        seed=config.seed,
        overrides=dict(g.get("overrides", {})),
    )


class LeakageAudit:
    """Records the source-row ids every fit/calibration stage consumed,
    plus the ids of the held-out test partition, so a test can assert the
    two never intersect."""

    def __init__(self):
        self.consumed = {}  # stage -> set of row ids
        self.test_rows = set()

    def record(self, stage: str, row_ids) -> None:
        ids = {int(r) for r in np.asarray(row_ids).ravel() if int(r) >= 0}
        self.consumed.setdefault(stage, set()).update(ids)

    def mark_test(self, row_ids) -> None:
        self.test_rows.update(int(r) for r in np.asarray(row_ids).ravel() if int(r) >= 0)

    def leaked(self) -> dict:
        """Stage -> offending row ids (empty when the run was clean)."""
        return {
            stage: sorted(ids & self.test_rows)
            for stage, ids in self.consumed.items()
            if ids & self.test_rows
        }


class _StageRecorder:
    def __init__(self):
        self.stages = []

    @contextmanager
    def stage(self, name: str):
        self.stages.append(name)
        try:
            yield
        except Exception as exc:
            raise type(exc)(f"stage {name!r}: {exc}") from exc


@dataclass
class RunReport:
    """Everything one pipeline run produced, minus wall-clock noise."""

    domain: str
    config: dict
    toolkit_version: str
    dataset: dict
    stages: list
    models: dict  # model name -> metrics dict
    thresholds: dict = field(default_factory=dict)
    importances: dict = field(default_factory=dict)  # model name -> [[feature, score], ...]
    flags: dict = field(default_factory=dict)  # model name -> flagged test indices
    histograms: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "toolkit_version": self.toolkit_version,
            "domain": self.domain,
            "config": self.config,
            "dataset": self.dataset,
            "stages": list(self.stages),
            "models": self.models,
            "thresholds": self.thresholds,
            "importances": self.importances,
            "flags": self.flags,
            "histograms": self.histograms,
            "artifacts": self.artifacts,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        return cls(
            domain=d["domain"],
            config=d["config"],
            toolkit_version=d["toolkit_version"],
            dataset=d["dataset"],
            stages=list(d["stages"]),
            models=d["models"],
            thresholds=d.get("thresholds", {}),
            importances=d.get("importances", {}),
            flags=d.get("flags", {}),
            histograms=d.get("histograms", {}),
            artifacts=d.get("artifacts", {}),
            schema_version=d.get("schema_version", REPORT_SCHEMA_VERSION),
        )


def _histograms(dataset: Dataset, bins: int = 20) -> dict:
    out = {}
    for name, kind in dataset.columns:
        values = dataset.column(name)
        if kind == "numeric":
            arr = np.asarray(values, dtype=np.float64)
            counts, edges = np.histogram(arr, bins=bins)
            out[name] = {"kind": "numeric", "edges": [float(e) for e in edges], "counts": [int(c) for c in counts]}
        else:
            counts = {}
            for v in (values.tolist() if isinstance(values, np.ndarray) else values):
                key = str(v)
                counts[key] = counts.get(key, 0) + 1
            out[name] = {"kind": kind, "values": {k: counts[k] for k in sorted(counts)}}
    return out


def _dataset_block(dataset: Dataset) -> dict:
    label = dataset.label_column()
    counts = {}
    if label:
        vals, cnts = np.unique(np.asarray(dataset.column(label)), return_counts=True)
        counts = {str(int(v)): int(c) for v, c in zip(vals, cnts)}
    return {
        "n": dataset.n,
        "columns": [[n, k] for n, k in dataset.columns],
        "label_column": label,
        "label_counts": counts,
    }


_THREAT_CLASS = {
    "intrusion": "anomaly",
    "malware": "malicious",
    "phishing": "phishing",
    "ueba": "threat_session",
}


def _metrics_block(y_true, flags_or_preds, scores, domain) -> dict:
    return classification_report(
        y_true, flags_or_preds, scores=scores, positive_label=_THREAT_CLASS[domain]
    ).to_dict()


def _top_importances(report, k: int = 10):
    return [[name, score] for name, score in report.top(k)]


def _save_artifacts(out_dir, dataset, domain, models_with_thresholds):
    """Write dataset + model files; returns {name: relative path}."""
    paths = {}
    data_dir = os.path.join(out_dir, "data")
    model_dir = os.path.join(out_dir, "models")
    os.makedirs(data_dir, exist_ok=True)
    os.makedirs(model_dir, exist_ok=True)
    ds_path = os.path.join(data_dir, f"{domain}.csv")
    save_dataset(dataset, ds_path)
    paths["dataset"] = os.path.relpath(ds_path, out_dir)
    if domain == "ueba":
        ev_path = os.path.join(data_dir, "events.jsonl")
        save_events_jsonl(dataset, ev_path)
        paths["events"] = os.path.relpath(ev_path, out_dir)
    for name, (model, threshold) in models_with_thresholds.items():
        mp = os.path.join(model_dir, f"{name}.json")
        save_model(model, mp, threshold=threshold)
        paths[name] = os.path.relpath(mp, out_dir)
    return paths


def _carve_validation(train: Dataset, label_column: str, fraction: float, rng: RngStream):
    fit_idx, val_idx = stratified_indices(train.column(label_column), fraction, rng)
    return train.select_rows(fit_idx), train.select_rows(val_idx)


# -- domain pipelines ---------------------------------------------------------------


def run_intrusion(config: PipelineConfig, out_dir=None, audit: LeakageAudit | None = None) -> RunReport:
    """Flows -> split -> encode/scale on train -> isolation forest + dense
    autoencoder (clean rows only) -> percentile thresholds -> test metrics."""
    config.validate()
    rec = _StageRecorder()
    rng = RngStream(config.seed, "pipeline/intrusion")
    pp = _merged(_PREPROCESS_DEFAULTS, config.preprocess)
    mc = _merged(_MODEL_DEFAULTS, config.models)

    with rec.stage("generate"):
        dataset = GENERATORS["intrusion"](generator_config(config))
    with rec.stage("split"):
        train, test = stratified_split(dataset, "anomaly_label", pp["test_fraction"], rng.child("split"))
        if audit:
            audit.mark_test(test.row_ids)
    with rec.stage("fit_one_hot"):
        encoder = fit_one_hot(train, ["protocol"])
        if audit:
            audit.record("fit_one_hot", train.row_ids)
        train_e = apply_one_hot(encoder, train)
        test_e = apply_one_hot(encoder, test)
    with rec.stage("fit_scaler"):
        numeric = train_e.names_of_kind("numeric")
        scaler = fit_scaler(train_e, numeric)
        if audit:
            audit.record("fit_scaler", train_e.row_ids)
        train_s = apply_scaler(scaler, train_e)
        test_s = apply_scaler(scaler, test_e)

    features = [n for n in train_s.names_of_kind("numeric", "binary")]
    X_train = train_s.matrix(features)
    X_test = test_s.matrix(features)
    y_train = np.asarray(train_s.column("anomaly_label"))
    y_test = np.asarray(test_s.column("anomaly_label"))

    with rec.stage("fit_isolation_forest"):
        psi = min(int(mc["iforest"]["psi"]), X_train.shape[0])
        iforest = fit_isolation_forest(X_train, int(mc["iforest"]["n_trees"]), psi, rng.child("iforest"))
        if audit:
            audit.record("fit_isolation_forest", train_s.row_ids)
    with rec.stage("fit_dense_autoencoder"):
        clean_idx = np.flatnonzero(y_train == 0)
        X_clean = X_train[clean_idx]
        assert (y_train[clean_idx] == 0).all()
        d = X_clean.shape[1]
        layers = mc["dense_ae"].get("layers") or [d, max(8, d // 2), max(4, d // 4), max(8, d // 2), d]
        ae, _ = fit_dense_autoencoder(
            X_clean,
            layers,
            l1=float(mc["dense_ae"]["l1"]),
            epochs=int(mc["dense_ae"]["epochs"]),
            step_size=float(mc["dense_ae"]["step_size"]),
            rng=rng.child("dense_ae"),
            batch_size=int(mc["dense_ae"]["batch_size"]),
        )
        if audit:
            audit.record("fit_dense_autoencoder", train_s.row_ids[clean_idx])
    with rec.stage("calibrate_thresholds"):
        if_train_scores = iforest_score(iforest, X_train)
        thr_if = calibrate_threshold(if_train_scores, config.threshold_percentile)
        ae_train_errors = reconstruction_errors(ae, X_clean)
        thr_ae = calibrate_threshold(ae_train_errors, config.threshold_percentile)
        if audit:
            audit.record("calibrate_thresholds", train_s.row_ids)

    with rec.stage("evaluate"):
        if_scores = iforest_score(iforest, X_test)
        if_flags = detect_anomalies(if_scores, thr_if)
        ae_errors = reconstruction_errors(ae, X_test)
        ae_flags = detect_anomalies(ae_errors, thr_ae)
        models = {
            "isolation_forest": _metrics_block(y_test, if_flags, if_scores, "intrusion"),
            "dense_autoencoder": _metrics_block(y_test, ae_flags, ae_errors, "intrusion"),
        }
        repeats = int(mc["importance_repeats"])
        imp_if = permutation_importance(
            lambda X: iforest_score(iforest, X), X_test, y_test, "auc", repeats, rng.child("imp/if"), features
        )
        imp_ae = permutation_importance(
            lambda X: reconstruction_errors(ae, X), X_test, y_test, "auc", repeats, rng.child("imp/ae"), features
        )

    artifacts = {}
    if out_dir:
        artifacts = _save_artifacts(out_dir, dataset, "intrusion", {
            "isolation_forest": (iforest, thr_if),
            "dense_autoencoder": (ae, thr_ae),
        })
    return RunReport(
        domain="intrusion",
        config=config.to_dict(),
        toolkit_version=__version__,
        dataset=_dataset_block(dataset),
        stages=rec.stages,
        models=models,
        thresholds={
            "isolation_forest": {"value": thr_if.value, "percentile": thr_if.percentile, "sample_size": thr_if.sample_size},
            "dense_autoencoder": {"value": thr_ae.value, "percentile": thr_ae.percentile, "sample_size": thr_ae.sample_size},
        },
        importances={
            "isolation_forest": _top_importances(imp_if),
            "dense_autoencoder": _top_importances(imp_ae),
        },
        flags={
            "isolation_forest": [int(i) for i in np.flatnonzero(if_flags)],
            "dense_autoencoder": [int(i) for i in np.flatnonzero(ae_flags)],
        },
        histograms=_histograms(dataset),
        artifacts=artifacts,
    )


def run_malware(config: PipelineConfig, out_dir=None, audit: LeakageAudit | None = None) -> RunReport:
    """Corpus -> split -> encode -> SMOTE on the train side only -> random
    forest + boosted trees (validation slice for early stopping) -> test metrics.

    Numeric counts pass through unscaled: tree models split on raw values.
    """
    config.validate()
    rec = _StageRecorder()
    rng = RngStream(config.seed, "pipeline/malware")
    pp = _merged(_PREPROCESS_DEFAULTS, config.preprocess)
    mc = _merged(_MODEL_DEFAULTS, config.models)

    with rec.stage("generate"):
        dataset = GENERATORS["malware"](generator_config(config))
    with rec.stage("split"):
        train, test = stratified_split(dataset, "label", pp["test_fraction"], rng.child("split"))
        if audit:
            audit.mark_test(test.row_ids)
    with rec.stage("fit_one_hot"):
        encoder = fit_one_hot(train, ["file_type"])
        if audit:
            audit.record("fit_one_hot", train.row_ids)
        train_e = apply_one_hot(encoder, train)
        test_e = apply_one_hot(encoder, test)
    with rec.stage("carve_validation"):
        fit_part, val_part = _carve_validation(train_e, "label", pp["validation_fraction"], rng.child("val"))

    features = fit_part.names_of_kind("numeric", "binary")
    X_fit = fit_part.matrix(features)
    y_fit = np.asarray(fit_part.column("label"))
    X_val = val_part.matrix(features)
    y_val = np.asarray(val_part.column("label"))
    X_test = test_e.matrix(features)
    y_test = np.asarray(test_e.column("label"))

    with rec.stage("smote_oversample"):
        minority = X_fit[y_fit == 1]
        majority_count = int((y_fit == 0).sum())
        n_synthetic = max(0, majority_count - minority.shape[0])
        synthetic = smote_oversample(minority, int(pp["smote_k"]), n_synthetic, rng.child("smote"))
        if audit:
            audit.record("smote_oversample", fit_part.row_ids[y_fit == 1])
        X_bal = np.vstack([X_fit, synthetic])
        y_bal = np.concatenate([y_fit, np.ones(synthetic.shape[0], dtype=np.int64)])

    with rec.stage("fit_random_forest"):
        fc = ForestConfig(
            n_trees=int(mc["forest"]["n_trees"]),
            max_depth=int(mc["forest"]["max_depth"]),
            min_samples_split=int(mc["forest"]["min_samples_split"]),
        )
        rf = fit_random_forest(X_bal, y_bal, fc, rng.child("forest"))
        if audit:
            audit.record("fit_random_forest", fit_part.row_ids)
    with rec.stage("fit_gradient_boosting"):
        bc = BoostConfig(**{k: mc["boosting"][k] for k in (
            "learning_rate", "n_rounds", "max_depth", "lam", "gamma", "subsample", "early_stopping_rounds")})
        gbm = fit_gradient_boosting(X_bal, y_bal, bc, validation=(X_val, y_val), rng=rng.child("boost"))
        if audit:
            audit.record("fit_gradient_boosting", np.concatenate([fit_part.row_ids, val_part.row_ids]))

    calibrator = None
    if mc["calibrate_boosting"]:
        with rec.stage("calibrate_boosting"):
            calibrator = fit_platt(gbm.predict_margin(X_val), y_val)
            if audit:
                audit.record("calibrate_boosting", val_part.row_ids)

    with rec.stage("evaluate"):
        rf_scores = rf.predict_proba(X_test)[:, 1]
        gb_margin = gbm.predict_margin(X_test)
        gb_scores = calibrator.apply(gb_margin) if calibrator else 0.5 * (1.0 + np.tanh(0.5 * gb_margin))
        models = {
            "random_forest": _metrics_block(y_test, (rf_scores >= 0.5).astype(int), rf_scores, "malware"),
            "gradient_boosting": _metrics_block(y_test, (gb_scores >= 0.5).astype(int), gb_scores, "malware"),
        }
        repeats = int(mc["importance_repeats"])
        imp_rf = permutation_importance(
            lambda X: rf.predict_proba(X)[:, 1], X_test, y_test, "auc", repeats, rng.child("imp/rf"), features
        )
        imp_gb = permutation_importance(
            lambda X: gbm.predict_proba(X)[:, 1], X_test, y_test, "auc", repeats, rng.child("imp/gb"), features
        )

    artifacts = {}
    if out_dir:
        saved = {"random_forest": (rf, None), "gradient_boosting": (gbm, None)}
        if calibrator:
            saved["boosting_calibrator"] = (calibrator, None)
        artifacts = _save_artifacts(out_dir, dataset, "malware", saved)
    return RunReport(
        domain="malware",
        config=config.to_dict(),
        toolkit_version=__version__,
        dataset=_dataset_block(dataset),
        stages=rec.stages,
        models=models,
        importances={"random_forest": _top_importances(imp_rf), "gradient_boosting": _top_importances(imp_gb)},
        histograms=_histograms(dataset),
        artifacts=artifacts,
    )


def run_phishing(config: PipelineConfig, out_dir=None, audit: LeakageAudit | None = None) -> RunReport:
    """Emails -> split -> downsample train majority -> encode/scale -> logistic
    + random forest + boosted trees -> test metrics for all three."""
    config.validate()
    rec = _StageRecorder()
    rng = RngStream(config.seed, "pipeline/phishing")
    pp = _merged(_PREPROCESS_DEFAULTS, config.preprocess)
    mc = _merged(_MODEL_DEFAULTS, config.models)

    with rec.stage("generate"):
        dataset = GENERATORS["phishing"](generator_config(config))
    with rec.stage("split"):
        train, test = stratified_split(dataset, "label", pp["test_fraction"], rng.child("split"))
        if audit:
            audit.mark_test(test.row_ids)
    with rec.stage("downsample_majority"):
        train_d = downsample_majority(train, "label", float(pp["downsample_ratio"]), rng.child("downsample"))
    with rec.stage("fit_one_hot"):
        encoder = fit_one_hot(train_d, ["attachment_type"])
        if audit:
            audit.record("fit_one_hot", train_d.row_ids)
        train_e = apply_one_hot(encoder, train_d)
        test_e = apply_one_hot(encoder, test)
    with rec.stage("fit_scaler"):
        numeric = train_e.names_of_kind("numeric")
        scaler = fit_scaler(train_e, numeric)
        if audit:
            audit.record("fit_scaler", train_e.row_ids)
        train_s = apply_scaler(scaler, train_e)
        test_s = apply_scaler(scaler, test_e)
    with rec.stage("carve_validation"):
        fit_part, val_part = _carve_validation(train_s, "label", pp["validation_fraction"], rng.child("val"))

    features = fit_part.names_of_kind("numeric", "binary")
    X_fit = fit_part.matrix(features)
    y_fit = np.asarray(fit_part.column("label"))
    X_val = val_part.matrix(features)
    y_val = np.asarray(val_part.column("label"))
    X_full_train = train_s.matrix(features)
    y_full_train = np.asarray(train_s.column("label"))
    X_test = test_s.matrix(features)
    y_test = np.asarray(test_s.column("label"))

    with rec.stage("fit_logistic"):
        lr = fit_logistic(
            X_full_train,
            y_full_train,
            l2=float(mc["logistic"]["l2"]),
            epochs=int(mc["logistic"]["epochs"]),
            step_size=float(mc["logistic"]["step_size"]),
        )
        if audit:
            audit.record("fit_logistic", train_s.row_ids)
    with rec.stage("fit_random_forest"):
        fc = ForestConfig(
            n_trees=int(mc["forest"]["n_trees"]),
            max_depth=int(mc["forest"]["max_depth"]),
            min_samples_split=int(mc["forest"]["min_samples_split"]),
        )
        rf = fit_random_forest(X_full_train, y_full_train, fc, rng.child("forest"))
        if audit:
            audit.record("fit_random_forest", train_s.row_ids)
    with rec.stage("fit_gradient_boosting"):
        bc = BoostConfig(**{k: mc["boosting"][k] for k in (
            "learning_rate", "n_rounds", "max_depth", "lam", "gamma", "subsample", "early_stopping_rounds")})
        gbm = fit_gradient_boosting(X_fit, y_fit, bc, validation=(X_val, y_val), rng=rng.child("boost"))
        if audit:
            audit.record("fit_gradient_boosting", train_s.row_ids)

    calibrator = None
    if mc["calibrate_boosting"]:
        with rec.stage("calibrate_boosting"):
            calibrator = fit_platt(gbm.predict_margin(X_val), y_val)
            if audit:
                audit.record("calibrate_boosting", val_part.row_ids)

    with rec.stage("evaluate"):
        lr_scores = logistic_proba(lr, X_test)
        rf_scores = rf.predict_proba(X_test)[:, 1]
        gb_margin = gbm.predict_margin(X_test)
        gb_scores = calibrator.apply(gb_margin) if calibrator else 0.5 * (1.0 + np.tanh(0.5 * gb_margin))
        models = {
            "logistic_regression": _metrics_block(y_test, (lr_scores >= 0.5).astype(int), lr_scores, "phishing"),
            "random_forest": _metrics_block(y_test, (rf_scores >= 0.5).astype(int), rf_scores, "phishing"),
            "gradient_boosting": _metrics_block(y_test, (gb_scores >= 0.5).astype(int), gb_scores, "phishing"),
        }
        repeats = int(mc["importance_repeats"])
        importances = {
            "logistic_regression": _top_importances(permutation_importance(
                lambda X: logistic_proba(lr, X), X_test, y_test, "auc", repeats, rng.child("imp/lr"), features)),
            "random_forest": _top_importances(permutation_importance(
                lambda X: rf.predict_proba(X)[:, 1], X_test, y_test, "auc", repeats, rng.child("imp/rf"), features)),
            "gradient_boosting": _top_importances(permutation_importance(
                lambda X: gbm.predict_proba(X)[:, 1], X_test, y_test, "auc", repeats, rng.child("imp/gb"), features)),
        }

    artifacts = {}
    if out_dir:
        saved = {"logistic_regression": (lr, None), "random_forest": (rf, None), "gradient_boosting": (gbm, None)}
        if calibrator:
            saved["boosting_calibrator"] = (calibrator, None)
        artifacts = _save_artifacts(out_dir, dataset, "phishing", saved)
    return RunReport(
        domain="phishing",
        config=config.to_dict(),
        toolkit_version=__version__,
        dataset=_dataset_block(dataset),
        stages=rec.stages,
        models=models,
        importances=importances,
        histograms=_histograms(dataset),
        artifacts=artifacts,
    )


def run_ueba(config: PipelineConfig, out_dir=None, audit: LeakageAudit | None = None) -> RunReport:
    """Events -> session-level split -> encode/scale on train events ->
    sessionize -> LSTM autoencoder on clean train sessions -> threshold ->
    flag and score test sessions."""
    config.validate()
    rec = _StageRecorder()
    rng = RngStream(config.seed, "pipeline/ueba")
    pp = _merged(_PREPROCESS_DEFAULTS, config.preprocess)
    mc = _merged(_MODEL_DEFAULTS, config.models)

    with rec.stage("generate"):
        events = GENERATORS["ueba"](generator_config(config))

    with rec.stage("session_split"):
        users = np.asarray(events.column("user_id"))
        days = np.asarray(events.column("day"))
        labels = np.asarray(events.column("anomaly_label"))
        session_keys = sorted({(float(u), float(d)) for u, d in zip(users, days)})
        key_index = {k: i for i, k in enumerate(session_keys)}
        session_labels = np.zeros(len(session_keys), dtype=np.int64)
        event_session = np.empty(events.n, dtype=np.int64)
        for i in range(events.n):
            s = key_index[(float(users[i]), float(days[i]))]
            event_session[i] = s
            session_labels[s] = max(session_labels[s], int(labels[i]))
        train_sessions, test_sessions = stratified_indices(session_labels, pp["test_fraction"], rng.child("split"))
        train_event_idx = np.flatnonzero(np.isin(event_session, train_sessions))
        train_events = events.select_rows(train_event_idx)
        if audit:
            test_event_idx = np.flatnonzero(np.isin(event_session, test_sessions))
            audit.mark_test(events.row_ids[test_event_idx])

    with rec.stage("fit_one_hot"):
        encoder = fit_one_hot(train_events, ["activity_type"])
        if audit:
            audit.record("fit_one_hot", train_events.row_ids)
        events_e = apply_one_hot(encoder, events)
        train_events_e = apply_one_hot(encoder, train_events)
    with rec.stage("fit_scaler"):
        numeric = [n for n in train_events.names_of_kind("numeric") if n not in ("user_id", "day")]
        scaler = fit_scaler(train_events_e, numeric)
        if audit:
            audit.record("fit_scaler", train_events.row_ids)
        events_s = apply_scaler(scaler, events_e)

    with rec.stage("sessionize"):
        tensor = sessionize(events_s, int(pp["time_steps"]))
        train_tensor = tensor.select(train_sessions)
        test_tensor = tensor.select(test_sessions)

    with rec.stage("fit_lstm_autoencoder"):
        clean_idx = np.flatnonzero(train_tensor.labels == 0)
        clean_tensor = train_tensor.select(clean_idx)
        assert (clean_tensor.labels == 0).all()
        lstm, _ = fit_lstm_autoencoder(
            clean_tensor,
            hidden=int(mc["lstm_ae"]["hidden"]),
            latent=int(mc["lstm_ae"]["latent"]),
            epochs=int(mc["lstm_ae"]["epochs"]),
            step_size=float(mc["lstm_ae"]["step_size"]),
            rng=rng.child("lstm"),
            batch_size=int(mc["lstm_ae"]["batch_size"]),
        )
        if audit:
            for ids in clean_tensor.event_row_ids:
                audit.record("fit_lstm_autoencoder", ids)
    with rec.stage("calibrate_threshold"):
        train_errors = score_sessions(lstm, clean_tensor)
        threshold = calibrate_threshold(train_errors, config.threshold_percentile)
        if audit:
            for ids in clean_tensor.event_row_ids:
                audit.record("calibrate_threshold", ids)

    with rec.stage("evaluate"):
        test_errors = score_sessions(lstm, test_tensor)
        flags = detect_anomalies(test_errors, threshold)
        y_test = test_tensor.labels
        models = {"lstm_autoencoder": _metrics_block(y_test, flags, test_errors, "ueba")}
        repeats = int(mc["importance_repeats"])
        lengths = test_tensor.lengths

        def session_scores(X3):
            t = SessionTensor(
                data=X3, lengths=lengths, labels=y_test, feature_names=test_tensor.feature_names
            )
            return score_sessions(lstm, t)

        imp = permutation_importance(
            session_scores, test_tensor.data, y_test, "auc", repeats, rng.child("imp/lstm"), test_tensor.feature_names
        )

    artifacts = {}
    if out_dir:
        artifacts = _save_artifacts(out_dir, events, "ueba", {"lstm_autoencoder": (lstm, threshold)})
    dataset_block = _dataset_block(events)
    dataset_block["n_sessions"] = int(tensor.n_sessions)
    dataset_block["session_label_counts"] = {
        "0": int((session_labels == 0).sum()),
        "1": int((session_labels == 1).sum()),
    }
    return RunReport(
        domain="ueba",
        config=config.to_dict(),
        toolkit_version=__version__,
        dataset=dataset_block,
        stages=rec.stages,
        models=models,
        thresholds={"lstm_autoencoder": {"value": threshold.value, "percentile": threshold.percentile, "sample_size": threshold.sample_size}},
        importances={"lstm_autoencoder": _top_importances(imp)},
        flags={"lstm_autoencoder": [int(i) for i in np.flatnonzero(flags)]},
        histograms=_histograms(events),
        artifacts=artifacts,
    )


_PIPELINES = {
    "intrusion": run_intrusion,
    "malware": run_malware,
    "phishing": run_phishing,
    "ueba": run_ueba,
}


def run_domain(config: PipelineConfig, out_dir=None, audit: LeakageAudit | None = None) -> RunReport:
    config.validate()
    return _PIPELINES[config.domain](config, out_dir=out_dir, audit=audit)


# -- report emission ------------------------------------------------------------------


def report_to_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def parse_report(path) -> RunReport:
    try:
        with open(path, encoding="utf-8") as fh:
            return RunReport.from_dict(json.load(fh))
    except FileNotFoundError as exc:
        raise DataError(f"report file not found: {path}") from exc
    except (json.JSONDecodeError, KeyError) as exc:
        raise DataError(f"malformed report document {path}: {exc}") from exc


def render_summary(report: RunReport) -> str:
    lines = []
    lines.append(f"threatbench run report (schema v{report.schema_version}, toolkit {report.toolkit_version})")
    lines.append(f"domain: {report.domain}")
    lines.append(f"seed: {report.config.get('seed')}")
    ds = report.dataset
    lines.append(f"dataset: {ds['n']} rows, labels {ds.get('label_counts')}")
    if "n_sessions" in ds:
        lines.append(f"sessions: {ds['n_sessions']} (labels {ds.get('session_label_counts')})")
    lines.append(f"stages: {' -> '.join(report.stages)}")
    for name in sorted(report.models):
        m = report.models[name]
        lines.append("")
        lines.append(f"model: {name}")
        lines.append(f"  accuracy: {m['accuracy']:.4f}   macro-F1: {m['macro_f1']:.4f}"
                     + (f"   ROC-AUC: {m['roc_auc']:.4f}" if m.get("roc_auc") is not None else ""))
        for cls in ("0", "1"):
            pc = m["per_class"][cls]
            tag = m.get("positive_label", "threat") if cls == "1" else "benign"
            lines.append(f"  class {cls} ({tag}): precision {pc['precision']:.4f}  recall {pc['recall']:.4f}  F1 {pc['f1']:.4f}")
        cm = m["confusion"]
        lines.append(f"  confusion: tp={cm['tp']} fp={cm['fp']} fn={cm['fn']} tn={cm['tn']}")
        if name in report.thresholds:
            t = report.thresholds[name]
            lines.append(f"  threshold: {t['value']!r} (p{t['percentile']:g} of {t['sample_size']} training errors)")
        if name in report.importances:
            tops = ", ".join(f"{f}={v:.4f}" for f, v in report.importances[name][:5])
            lines.append(f"  top importances: {tops}")
    if report.artifacts:
        lines.append("")
        lines.append("artifacts:")
        for key in sorted(report.artifacts):
            lines.append(f"  {key}: {report.artifacts[key]}")
    return "\n".join(lines) + "\n"


def emit_report(report: RunReport, out_dir) -> dict:
    """Write report.json, report.txt, and per-feature histogram tables.

    Returns {name: path} for everything written. Histogram tables are
    delimited text: numeric features get `bin_lo,bin_hi,count` rows (one per
    bin), others `value,count` rows.
    """
    try:
        os.makedirs(out_dir, exist_ok=True)
        hist_dir = os.path.join(out_dir, "histograms")
        os.makedirs(hist_dir, exist_ok=True)
        paths = {}
        report_path = os.path.join(out_dir, "report.json")
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report_to_json(report))
        paths["report_json"] = report_path
        summary_path = os.path.join(out_dir, "report.txt")
        with open(summary_path, "w", encoding="utf-8") as fh:
            fh.write(render_summary(report))
        paths["report_txt"] = summary_path
        for feature in sorted(report.histograms):
            h = report.histograms[feature]
            fpath = os.path.join(hist_dir, f"{feature}.csv")
            with open(fpath, "w", encoding="utf-8") as fh:
                if h["kind"] == "numeric":
                    fh.write("bin_lo,bin_hi,count\n")
                    edges, counts = h["edges"], h["counts"]
                    for i, c in enumerate(counts):
                        fh.write(f"{edges[i]!r},{edges[i + 1]!r},{c}\n")
                else:
                    fh.write("value,count\n")
                    for value, count in h["values"].items():
                        fh.write(f"{value},{count}\n")
            paths[f"histogram/{feature}"] = fpath
        return paths
    except OSError as exc:
        raise DataError(f"cannot write report files under {out_dir}: {exc}") from exc
