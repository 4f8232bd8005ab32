"""Seeded synthetic data generators for the four threat domains.

Each generator is a pure function of its GeneratorConfig: same config, same
table, byte-identical when saved. Labeled-positive counts are exact
(round(n * anomaly_rate)), not Bernoulli draws, so downstream count assertions
are stable. Default distribution parameters live in per-domain dicts below and
can be overridden per key through GeneratorConfig.overrides; the full table is
documented in the README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .tabular import Dataset, RngStream

NETWORK_SCHEMA = [
    ("src_port", "numeric"),
    ("dst_port", "numeric"),
    ("protocol", "categorical"),
    ("bytes", "numeric"),
    ("duration", "numeric"),
    ("packet_count", "numeric"),
    ("is_internal", "binary"),
    ("anomaly_label", "label"),
]

MALWARE_SCHEMA = [
    ("file_size", "numeric"),
    ("entropy", "numeric"),
    ("num_imports", "numeric"),
    ("num_strings", "numeric"),
    ("opcode_NOP_ratio", "numeric"),
    ("opcode_JMP_ratio", "numeric"),
    ("has_digital_signature", "binary"),
    ("section_count", "numeric"),
    ("is_packed", "binary"),
    ("packer_entropy_ratio", "numeric"),
    ("file_type", "categorical"),
    ("label", "label"),
]

EMAIL_SCHEMA = [
    ("has_html", "binary"),
    ("num_links", "numeric"),
    ("num_domains", "numeric"),
    ("has_spf_fail", "binary"),
    ("is_from_internal", "binary"),
    ("sender_reputation_score", "numeric"),
    ("num_suspicious_words", "numeric"),
    ("has_login_form", "binary"),
    ("hour_sent", "numeric"),
    ("attachment_type", "categorical"),
    ("label", "label"),
]

USER_EVENT_SCHEMA = [
    ("user_id", "numeric"),
    ("day", "numeric"),
    ("hour", "numeric"),
    ("weekday", "numeric"),
    ("activity_type", "categorical"),
    ("failed_login_attempts", "numeric"),
    ("command_count", "numeric"),
    ("accessed_sensitive_file", "binary"),
    ("is_admin_action", "binary"),
    ("anomaly_label", "label"),
]

SCHEMAS = {
    "intrusion": NETWORK_SCHEMA,
    "malware": MALWARE_SCHEMA,
    "phishing": EMAIL_SCHEMA,
    "ueba": USER_EVENT_SCHEMA,
}

# Service ports clean traffic clusters on, most common first.
SERVICE_PORTS = np.array([443, 80, 53, 22, 25, 3389, 8080, 110, 143, 21])
SERVICE_PORT_WEIGHTS = np.array([0.30, 0.28, 0.12, 0.08, 0.06, 0.05, 0.04, 0.03, 0.02, 0.02])

NETWORK_DEFAULTS = {
    "protocol_mix": {"TCP": 0.70, "UDP": 0.25, "ICMP": 0.05},
    "bytes_log_mean": 8.0,
    "bytes_log_sigma": 1.5,
    "duration_log_mean": 0.0,
    "duration_log_sigma": 1.0,
    "packet_mean": 40.0,
    "packet_std": 15.0,
    "internal_rate": 0.8,
}

MALWARE_DEFAULTS = {
    "benign_entropy_mean": 5.0,
    "malicious_entropy_mean": 7.2,
    "entropy_std": 0.6,
    "benign_signature_rate": 0.45,
    "malicious_signature_rate": 0.05,
    "benign_packed_rate": 0.05,
    "malicious_packed_rate": 0.70,
    "file_types": ["exe", "dll", "sys", "docm", "js"],
    "benign_file_type_mix": [0.55, 0.30, 0.10, 0.03, 0.02],
    "malicious_file_type_mix": [0.50, 0.15, 0.05, 0.15, 0.15],
}

EMAIL_DEFAULTS = {
    "noise_fraction": 0.02,
    "legit_html_rate": 0.50,
    "phish_html_rate": 0.95,
    "legit_links_mean": 1.0,
    "phish_links_mean": 6.0,
    "legit_spf_fail_rate": 0.05,
    "phish_spf_fail_rate": 0.70,
    "legit_internal_rate": 0.60,
    "phish_internal_rate": 0.05,
    "legit_suspicious_words_mean": 0.2,
    "phish_suspicious_words_mean": 4.0,
    "legit_login_form_rate": 0.02,
    "phish_login_form_rate": 0.60,
    "attachment_types": ["none", "pdf", "docx", "zip", "html"],
    "legit_attachment_mix": [0.60, 0.20, 0.15, 0.03, 0.02],
    "phish_attachment_mix": [0.35, 0.10, 0.10, 0.25, 0.20],
}

UEBA_DEFAULTS = {
    "users": 100,
    "days": 30,
    "events_per_day_mean": 40.0,
    "activity_types": ["login", "file_access", "command", "privilege_use"],
    "activity_mix": [0.20, 0.45, 0.30, 0.05],
    "sensitive_file_rate": 0.03,
    "admin_action_rate": 0.02,
    "anomalous_share_of_session": 0.5,
}


@dataclass
class GeneratorConfig:
    """Size, imbalance, seed and distribution overrides for one generator.

    For the three row-wise domains `n` is the row count; for user activity the
    event count is driven by users x days x Poisson(events_per_day_mean) and
    `n` is ignored. Anomaly rate must sit in (0, 0.5): anomalies are the
    minority by construction.
    """

    n: int = 10_000
    anomaly_rate: float = 0.1
    seed: int = 42
    overrides: dict = field(default_factory=dict)

    def validate(self, min_n: int | None = 100) -> None:
        if min_n is not None and self.n < min_n:
            raise ConfigError(f"n must be >= {min_n}, got {self.n}")
        if not 0.0 < self.anomaly_rate < 0.5:
            raise ConfigError(f"anomaly_rate must be in (0, 0.5), got {self.anomaly_rate}")

    def params(self, defaults: dict) -> dict:
        merged = dict(defaults)
        for key, value in self.overrides.items():
            if key not in merged:
                raise ConfigError(f"unknown generator override {key!r}")
            merged[key] = value
        return merged


def _exact_positive_count(n: int, rate: float) -> int:
    return int(np.floor(n * rate + 0.5))


def _interleave(rng: RngStream, blocks: list[dict], columns, patterns: list[str | None]):
    """Concatenate row blocks and shuffle them into one Dataset.

    `patterns` holds one injection tag per row (None for clean rows); the tags
    survive the shuffle in meta["injection_pattern"] for diagnostics only.
    """
    names = [n for n, _ in columns]
    merged = {n: np.concatenate([np.asarray(b[n]) for b in blocks]) for n in names}
    total = len(merged[names[0]])
    order = rng.permutation(total)
    data = {}
    for name, kind in columns:
        col = merged[name][order]
        data[name] = [str(v) for v in col] if kind == "categorical" else col
    tags = [patterns[i] for i in order]
    meta = {"injection_pattern": {i: t for i, t in enumerate(tags) if t is not None}}
    return Dataset(columns, data, meta=meta)


# -- network flows -------------------------------------------------------------


def generate_network_flows(config: GeneratorConfig) -> Dataset:
    """Enterprise-style flow records with three injected anomaly patterns.

    Clean traffic: TCP-heavy protocol mix, scattered source ports, service-port
    destinations, right-skewed bytes/duration, bell-shaped packet counts.
    Anomalies (exactly round(n*rate) rows) cycle through port scans (one source
    fanning across destinations with tiny payloads), half-open connections
    (near-zero duration, <=2 packets) and traffic bursts (bytes and packets far
    beyond the clean tails).
    """
    config.validate(min_n=100)
    p = config.params(NETWORK_DEFAULTS)
    rng = RngStream(config.seed, "network")
    n_anom = _exact_positive_count(config.n, config.anomaly_rate)
    n_clean = config.n - n_anom

    r = rng.child("clean")
    protos = list(p["protocol_mix"])
    weights = np.array([p["protocol_mix"][k] for k in protos], dtype=float)
    clean = {
        "src_port": r.integers(1024, 65536, size=n_clean).astype(float),
        "dst_port": np.where(
            r.random(n_clean) < 0.98,
            r.choice(SERVICE_PORTS, size=n_clean, p=SERVICE_PORT_WEIGHTS / SERVICE_PORT_WEIGHTS.sum()),
            r.integers(1, 65536, size=n_clean),
        ).astype(float),
        "protocol": r.choice(protos, size=n_clean, p=weights / weights.sum()),
        "bytes": np.round(r.lognormal(p["bytes_log_mean"], p["bytes_log_sigma"], size=n_clean)),
        "duration": r.lognormal(p["duration_log_mean"], p["duration_log_sigma"], size=n_clean),
        "packet_count": np.maximum(1, np.round(r.normal(p["packet_mean"], p["packet_std"], size=n_clean))),
        "is_internal": (r.random(n_clean) < p["internal_rate"]).astype(int),
        "anomaly_label": np.zeros(n_clean, dtype=int),
    }

    counts = [n_anom // 3 + (1 if i < n_anom % 3 else 0) for i in range(3)]
    ra = rng.child("anomalies")
    scan_src = float(ra.integers(1024, 65536))  # the single scanning socket
    n_scan, n_half, n_burst = counts
    scan = {
        "src_port": np.full(n_scan, scan_src),
        "dst_port": ra.integers(1, 65536, size=n_scan).astype(float),
        "protocol": np.array(["TCP"] * n_scan),
        "bytes": ra.integers(40, 121, size=n_scan).astype(float),
        "duration": ra.uniform(0.0, 0.05, size=n_scan),
        "packet_count": ra.integers(1, 4, size=n_scan).astype(float),
        "is_internal": np.ones(n_scan, dtype=int),
        "anomaly_label": np.ones(n_scan, dtype=int),
    }
    # Inbound SYN probes: a single packet, never completed, external origin.
    half = {
        "src_port": ra.integers(1024, 65536, size=n_half).astype(float),
        "dst_port": ra.choice(SERVICE_PORTS, size=n_half).astype(float),
        "protocol": np.array(["TCP"] * n_half),
        "bytes": ra.integers(40, 61, size=n_half).astype(float),
        "duration": ra.uniform(0.0, 0.005, size=n_half),
        "packet_count": np.ones(n_half),
        "is_internal": np.zeros(n_half, dtype=int),
        "anomaly_label": np.ones(n_half, dtype=int),
    }
    burst = {
        "src_port": ra.integers(1024, 65536, size=n_burst).astype(float),
        "dst_port": ra.choice(SERVICE_PORTS, size=n_burst).astype(float),
        "protocol": np.array(["TCP"] * n_burst),
        "bytes": np.round(ra.lognormal(14.0, 0.5, size=n_burst)),
        "duration": ra.lognormal(2.0, 0.5, size=n_burst),
        "packet_count": np.maximum(1, np.round(ra.normal(400.0, 80.0, size=n_burst))),
        "is_internal": (ra.random(n_burst) < 0.5).astype(int),
        "anomaly_label": np.ones(n_burst, dtype=int),
    }
    patterns = [None] * n_clean + ["port_scan"] * n_scan + ["half_open"] * n_half + ["burst"] * n_burst
    return _interleave(rng.child("shuffle"), [clean, scan, half, burst], NETWORK_SCHEMA, patterns)


# -- malware file metadata ------------------------------------------------------


def generate_malware_corpus(config: GeneratorConfig) -> Dataset:
    """File metadata table: benign majority, packed/high-entropy malicious minority."""
    config.validate(min_n=100)
    p = config.params(MALWARE_DEFAULTS)
    rng = RngStream(config.seed, "malware")
    n_mal = _exact_positive_count(config.n, config.anomaly_rate)
    n_ben = config.n - n_mal

    rb = rng.child("benign")
    benign = {
        "file_size": np.round(rb.lognormal(12.0, 1.0, size=n_ben)),
        "entropy": np.clip(rb.normal(p["benign_entropy_mean"], p["entropy_std"], size=n_ben), 0.0, 8.0),
        "num_imports": np.maximum(0, np.round(rb.normal(60.0, 20.0, size=n_ben))),
        "num_strings": np.round(rb.lognormal(6.0, 0.8, size=n_ben)),
        "opcode_NOP_ratio": np.clip(rb.normal(0.05, 0.015, size=n_ben), 0.0, 1.0),
        "opcode_JMP_ratio": np.clip(rb.normal(0.12, 0.03, size=n_ben), 0.0, 1.0),
        "has_digital_signature": (rb.random(n_ben) < p["benign_signature_rate"]).astype(int),
        "section_count": rb.choice([3, 4, 5, 6], size=n_ben, p=[0.30, 0.35, 0.25, 0.10]).astype(float),
        "is_packed": (rb.random(n_ben) < p["benign_packed_rate"]).astype(int),
        "packer_entropy_ratio": rb.lognormal(-1.5, 0.5, size=n_ben),
        "file_type": rb.choice(p["file_types"], size=n_ben, p=p["benign_file_type_mix"]),
        "label": np.zeros(n_ben, dtype=int),
    }

    rm = rng.child("malicious")
    # Opcode ratios pushed toward either extreme: half near-zero NOPs, half inflated.
    nop_low = np.clip(rm.normal(0.002, 0.002, size=n_mal), 0.0, 1.0)
    nop_high = np.clip(rm.normal(0.22, 0.06, size=n_mal), 0.0, 1.0)
    malicious = {
        "file_size": np.round(rm.lognormal(11.3, 1.3, size=n_mal)),
        "entropy": np.clip(rm.normal(p["malicious_entropy_mean"], p["entropy_std"], size=n_mal), 0.0, 8.0),
        "num_imports": np.maximum(0, np.round(rm.normal(10.0, 6.0, size=n_mal))),
        "num_strings": np.round(rm.lognormal(3.5, 0.8, size=n_mal)),
        "opcode_NOP_ratio": np.where(rm.random(n_mal) < 0.5, nop_low, nop_high),
        "opcode_JMP_ratio": np.clip(rm.normal(0.30, 0.07, size=n_mal), 0.0, 1.0),
        "has_digital_signature": (rm.random(n_mal) < p["malicious_signature_rate"]).astype(int),
        "section_count": np.maximum(1, 1 + rm.poisson(7.0, size=n_mal)).astype(float),
        "is_packed": (rm.random(n_mal) < p["malicious_packed_rate"]).astype(int),
        "packer_entropy_ratio": rm.lognormal(0.0, 0.5, size=n_mal),
        "file_type": rm.choice(p["file_types"], size=n_mal, p=p["malicious_file_type_mix"]),
        "label": np.ones(n_mal, dtype=int),
    }
    patterns = [None] * n_ben + ["malicious"] * n_mal
    return _interleave(rng.child("shuffle"), [benign, malicious], MALWARE_SCHEMA, patterns)


# -- phishing emails -------------------------------------------------------------


def _email_block(r: RngStream, n: int, p: dict, phishing: bool) -> dict:
    side = "phish" if phishing else "legit"
    reputation = (
        0.5 * r.beta(2.0, 5.0, size=n) if phishing else 0.5 + 0.5 * r.beta(5.0, 2.0, size=n)
    )
    return {
        "has_html": (r.random(n) < p[f"{side}_html_rate"]).astype(int),
        "num_links": r.poisson(p[f"{side}_links_mean"], size=n).astype(float),
        "num_domains": r.poisson(3.0 if phishing else 1.0, size=n).astype(float),
        "has_spf_fail": (r.random(n) < p[f"{side}_spf_fail_rate"]).astype(int),
        "is_from_internal": (r.random(n) < p[f"{side}_internal_rate"]).astype(int),
        "sender_reputation_score": reputation,
        "num_suspicious_words": r.poisson(p[f"{side}_suspicious_words_mean"], size=n).astype(float),
        "has_login_form": (r.random(n) < p[f"{side}_login_form_rate"]).astype(int),
        "hour_sent": r.integers(0, 24, size=n).astype(float),
        "attachment_type": r.choice(p["attachment_types"], size=n, p=p[f"{side}_attachment_mix"]),
        "label": np.full(n, 1 if phishing else 0, dtype=int),
    }


def generate_email_corpus(config: GeneratorConfig) -> Dataset:
    """Email feature table with a configured fraction of "crossed" rows per class.

    Crossing corrupts surface indicators only (SPF failure, login form, link
    volume, suspicious words): a crossed legitimate email looks suspicious and
    a crossed phishing email looks clean on those flags, while
    sender_reputation_score stays class-faithful (legit > 0.5 > phish), keeping
    the classes separable by construction at any noise level.
    """
    config.validate(min_n=100)
    p = config.params(EMAIL_DEFAULTS)
    rng = RngStream(config.seed, "email")
    n_phish = _exact_positive_count(config.n, config.anomaly_rate)
    n_legit = config.n - n_phish

    legit = _email_block(rng.child("legit"), n_legit, p, phishing=False)
    phish = _email_block(rng.child("phish"), n_phish, p, phishing=True)

    rx = rng.child("cross")
    n_cross_legit = _exact_positive_count(n_legit, p["noise_fraction"])
    n_cross_phish = _exact_positive_count(n_phish, p["noise_fraction"])
    cross_legit = rx.choice(n_legit, size=n_cross_legit, replace=False)
    for i in cross_legit:
        legit["has_spf_fail"][i] = 1
        legit["num_suspicious_words"][i] = float(1 + rx.poisson(3.0))
        legit["num_links"][i] = float(rx.poisson(p["phish_links_mean"]))
        legit["has_login_form"][i] = int(rx.random() < 0.5)
    cross_phish = rx.choice(n_phish, size=n_cross_phish, replace=False)
    for i in cross_phish:
        phish["has_spf_fail"][i] = 0
        phish["num_suspicious_words"][i] = 0.0
        phish["num_links"][i] = float(rx.poisson(p["legit_links_mean"]))
        phish["has_login_form"][i] = 0

    patterns = [None] * n_legit + ["phishing"] * n_phish
    return _interleave(rng.child("shuffle"), [legit, phish], EMAIL_SCHEMA, patterns)


# -- user activity ----------------------------------------------------------------


def generate_user_activity(config: GeneratorConfig) -> Dataset:
    """Per-user event log over a fixed horizon with baseline-violating anomalies.

    Every user gets a profile (work-hour window, typical command rate); clean
    events sit inside the owner's window. Anomalies are injected per user-day
    in three patterns (off-hour access, failed-login spikes >= 5, sensitive-file
    touches) until exactly round(total * rate) events carry
    label 1. Rows are ordered by (user_id, day, hour, tiebreak counter).
    """
    config.validate(min_n=None)
    p = config.params(UEBA_DEFAULTS)
    users, days = int(p["users"]), int(p["days"])
    if users < 1 or days < 1:
        raise ConfigError("users and days must both be >= 1")
    rng = RngStream(config.seed, "ueba")

    rp = rng.child("profiles")
    work_start = rp.integers(7, 11, size=users)
    work_len = rp.integers(8, 10, size=users)
    cmd_rate = rp.uniform(5.0, 15.0, size=users)

    activity_types = list(p["activity_types"])
    activity_mix = np.asarray(p["activity_mix"], dtype=float)
    activity_mix = activity_mix / activity_mix.sum()

    re = rng.child("events")
    records = []  # one dict of numpy scalars per user-day block
    for u in range(users):
        lo, hi = int(work_start[u]), int(work_start[u] + work_len[u] - 1)
        center, spread = (lo + hi) / 2.0, max(1.0, (hi - lo) / 3.0)
        for d in range(1, days + 1):
            m = max(1, int(re.poisson(p["events_per_day_mean"])))
            hours = np.clip(np.round(re.normal(center, spread, size=m)), lo, hi).astype(int)
            acts = re.choice(activity_types, size=m, p=activity_mix)
            failed = re.poisson(0.1, size=m)
            cmds = np.where(
                acts == "command", re.poisson(cmd_rate[u], size=m), re.poisson(1.0, size=m)
            )
            sens = ((acts == "file_access") & (re.random(m) < p["sensitive_file_rate"])).astype(int)
            admin = np.where(
                acts == "privilege_use",
                (re.random(m) < 0.5).astype(int),
                (re.random(m) < p["admin_action_rate"]).astype(int),
            )
            records.append(
                {
                    "user": u + 1,
                    "day": d,
                    "hour": hours,
                    "activity": acts,
                    "failed": failed.astype(float),
                    "cmds": cmds.astype(float),
                    "sens": sens,
                    "admin": admin,
                    "anom": np.zeros(m, dtype=int),
                    "pattern": [None] * m,
                }
            )

    total = sum(len(b["hour"]) for b in records)
    target = _exact_positive_count(total, config.anomaly_rate)
    ri = rng.child("inject")
    order = ri.permutation(len(records))
    pattern_cycle = ["off_hour", "failed_spike", "sensitive_file"]
    injected = 0
    pat_i = 0
    for bi in order:
        if injected >= target:
            break
        block = records[bi]
        m = len(block["hour"])
        k = min(max(3, int(np.floor(p["anomalous_share_of_session"] * m + 0.5))), m, target - injected)
        hit = ri.choice(m, size=k, replace=False)
        for j in hit:
            pattern = pattern_cycle[pat_i % 3]
            pat_i += 1
            block["anom"][j] = 1
            block["pattern"][j] = pattern
            if pattern == "off_hour":
                block["hour"][j] = int(ri.integers(0, 6))
            elif pattern == "failed_spike":
                block["failed"][j] = float(ri.integers(5, 16))
                block["activity"][j] = "login"
            else:
                block["sens"][j] = 1
                block["activity"][j] = "file_access"
        injected += k

    # The per-session share can under-fill extreme rates; top up from any
    # remaining clean events so the positive count is exact.
    if injected < target:
        for bi in order:
            block = records[bi]
            for j in np.flatnonzero(block["anom"] == 0):
                if injected >= target:
                    break
                pattern = pattern_cycle[pat_i % 3]
                pat_i += 1
                block["anom"][j] = 1
                block["pattern"][j] = pattern
                if pattern == "off_hour":
                    block["hour"][j] = int(ri.integers(0, 6))
                elif pattern == "failed_spike":
                    block["failed"][j] = float(ri.integers(5, 16))
                    block["activity"][j] = "login"
                else:
                    block["sens"][j] = 1
                    block["activity"][j] = "file_access"
                injected += 1
            if injected >= target:
                break

    # Emit ordered by (user, day, hour, original position).
    cols = {name: [] for name, _ in USER_EVENT_SCHEMA}
    patterns = []
    for block in records:
        m = len(block["hour"])
        emit = sorted(range(m), key=lambda j: (block["hour"][j], j))
        for j in emit:
            cols["user_id"].append(float(block["user"]))
            cols["day"].append(float(block["day"]))
            cols["hour"].append(float(block["hour"][j]))
            cols["weekday"].append(float((block["day"] - 1) % 7))
            cols["activity_type"].append(str(block["activity"][j]))
            cols["failed_login_attempts"].append(float(block["failed"][j]))
            cols["command_count"].append(float(block["cmds"][j]))
            cols["accessed_sensitive_file"].append(int(block["sens"][j]))
            cols["is_admin_action"].append(int(block["admin"][j]))
            cols["anomaly_label"].append(int(block["anom"][j]))
            patterns.append(block["pattern"][j])

    meta = {"injection_pattern": {i: t for i, t in enumerate(patterns) if t is not None}}
    return Dataset(USER_EVENT_SCHEMA, cols, meta=meta)


def save_events_jsonl(dataset: Dataset, path) -> None:
    """Write an event log as line-delimited records in row order."""
    names = dataset.column_names
    kinds = dict(dataset.columns)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(dataset.n):
                rec = {}
                for name in names:
                    v = dataset.column(name)[i]
                    rec[name] = str(v) if kinds[name] == "categorical" else (
                        float(v) if kinds[name] == "numeric" else int(v)
                    )
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write events to {path}: {exc}") from exc


GENERATORS = {
    "intrusion": generate_network_flows,
    "malware": generate_malware_corpus,
    "phishing": generate_email_corpus,
    "ueba": generate_user_activity,
}
