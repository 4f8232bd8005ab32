"""Command-line interface.

Subcommands: `generate` (dataset only), `run` (full pipeline + report),
`evaluate` (check a report against acceptance bands), `report` (re-render the
human summary from a report document).

Exit codes: 0 success, 1 failed evaluation bands, 2 config error, 3 data
error, 4 numeric failure during fitting.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib import resources

from .errors import ConfigError, DataError, NumericError
from .pipeline import (
    DOMAINS,
    PipelineConfig,
    default_config,
    emit_report,
    generator_config,
    parse_report,
    render_summary,
    run_domain,
)
from .synthgen import GENERATORS
from .tabular import save_dataset


def _parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _apply_override(config_dict: dict, key: str, value) -> None:
    parts = key.split(".")
    if parts[0] not in config_dict:
        raise ConfigError(f"unknown config field {parts[0]!r} in override {key!r}")
    target = config_dict
    for part in parts[:-1]:
        nxt = target.get(part)
        if not isinstance(nxt, dict):
            raise ConfigError(f"override {key!r} does not address a config section at {part!r}")
        target = nxt
    target[parts[-1]] = value


def _build_config(args) -> PipelineConfig:
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if "domain" in loaded and loaded["domain"] != args.domain:
            raise ConfigError(
                f"config file domain {loaded['domain']!r} conflicts with requested domain {args.domain!r}"
            )
        loaded["domain"] = args.domain
        base = default_config(args.domain).to_dict()
        for section in ("generator", "preprocess", "models"):
            merged = base[section]
            for key, value in loaded.get(section, {}).items():
                if isinstance(value, dict) and isinstance(merged.get(key), dict):
                    merged[key] = {**merged[key], **value}
                else:
                    merged[key] = value
            loaded[section] = merged
        loaded.setdefault("seed", base["seed"])
        loaded.setdefault("threshold_percentile", base["threshold_percentile"])
        config = PipelineConfig.from_dict(loaded)
    else:
        config = default_config(args.domain)
    if args.seed is not None:
        config.seed = args.seed
    cd = config.to_dict()
    for item in args.override or []:
        key, value = _parse_override(item)
        _apply_override(cd, key, value)
    config = PipelineConfig.from_dict(cd)
    config.validate()
    return config


def _cmd_generate(args) -> int:
    config = _build_config(args)
    dataset = GENERATORS[config.domain](generator_config(config))
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"{config.domain}.csv")
    save_dataset(dataset, path)
    print(f"wrote {dataset.n} rows to {path}")
    if config.domain == "ueba":
        from .synthgen import save_events_jsonl

        events_path = os.path.join(out_dir, "events.jsonl")
        save_events_jsonl(dataset, events_path)
        print(f"wrote event log to {events_path}")
    return 0


def _cmd_run(args) -> int:
    config = _build_config(args)
    out_dir = args.out or os.path.join("runs", config.domain)
    report = run_domain(config, out_dir=out_dir)
    paths = emit_report(report, out_dir)
    print(render_summary(report))
    print(f"report: {paths['report_json']}")
    return 0


def _load_expectations(path):
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                return json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"expectations file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"expectations file {path} is not valid JSON: {exc}") from exc
    with resources.files("threatbench").joinpath("data").joinpath("expectations.json").open(
        encoding="utf-8"
    ) as fh:
        return json.load(fh)


_BAND_METRICS = {
    "min_accuracy": ("accuracy", lambda m: m["accuracy"]),
    "min_auc": ("ROC-AUC", lambda m: m["roc_auc"]),
    "min_threat_f1": ("threat-class F1", lambda m: m["per_class"]["1"]["f1"]),
    "min_threat_recall": ("threat-class recall", lambda m: m["per_class"]["1"]["recall"]),
    "min_macro_f1": ("macro-F1", lambda m: m["macro_f1"]),
}


def evaluate_report(report, expectations) -> list:
    """Returns [(criterion, value, bound, passed), ...] for the report's domain."""
    domain_bands = expectations.get(report.domain, {})
    results = []
    for model_name, bands in sorted(domain_bands.items()):
        metrics = report.models.get(model_name)
        if metrics is None:
            results.append((f"{report.domain}/{model_name}: model present", None, None, False))
            continue
        for band_key, bound in sorted(bands.items()):
            if band_key not in _BAND_METRICS:
                raise ConfigError(f"unknown expectation key {band_key!r}")
            label, getter = _BAND_METRICS[band_key]
            value = getter(metrics)
            passed = value is not None and value >= bound
            results.append((f"{report.domain}/{model_name}: {label}", value, bound, passed))
    return results


def _cmd_evaluate(args) -> int:
    report = parse_report(args.report)
    expectations = _load_expectations(args.expectations)
    results = evaluate_report(report, expectations)
    if not results:
        print(f"no expectations defined for domain {report.domain!r}")
        return 0
    all_pass = True
    for criterion, value, bound, passed in results:
        status = "PASS" if passed else "FAIL"
        shown = "missing" if value is None else f"{value:.4f}"
        print(f"{status}  {criterion}: {shown} (bound {bound})")
        all_pass = all_pass and passed
    return 0 if all_pass else 1


def _cmd_report(args) -> int:
    report = parse_report(args.report)
    summary = render_summary(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "report.txt")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(summary)
        print(f"wrote {path}")
    else:
        print(summary, end="")
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="threatbench", description="Synthetic threat-detection benchmark toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_args(p):
        p.add_argument("domain", choices=DOMAINS)
        p.add_argument("--config", help="JSON config file mirroring PipelineConfig fields")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", help="output directory")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="dotted config override, e.g. generator.n=2000 (repeatable)")

    g = sub.add_parser("generate", help="generate a domain dataset")
    add_run_args(g)
    g.set_defaults(func=_cmd_generate)

    r = sub.add_parser("run", help="run one domain pipeline end to end")
    add_run_args(r)
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("evaluate", help="check a run report against acceptance bands")
    e.add_argument("--report", required=True, help="path to report.json")
    e.add_argument("--expectations", help="bands file (default: packaged expectations)")
    e.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("report", help="render the human-readable summary of a report")
    p.add_argument("--report", required=True, help="path to report.json")
    p.add_argument("--out", help="directory for report.txt (default: print)")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
