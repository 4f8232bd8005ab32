import hashlib

import numpy as np
import pytest

from threatbench.errors import DataError
from threatbench.synthgen import GeneratorConfig, generate_network_flows
from threatbench.tabular import (
    Dataset,
    RngStream,
    load_dataset,
    save_dataset,
    stratified_split,
    summarize_columns,
)

SCHEMA = [("bytes", "numeric"), ("proto", "categorical"), ("flag", "binary"), ("y", "label")]


def make_dataset(n=6):
    return Dataset(
        SCHEMA,
        {
            "bytes": [float(i) * 1.5 for i in range(n)],
            "proto": ["TCP" if i % 2 == 0 else "UDP" for i in range(n)],
            "flag": [i % 2 for i in range(n)],
            "y": [1 if i < n // 2 else 0 for i in range(n)],
        },
    )


def random_dataset(rng, n):
    return Dataset(
        SCHEMA,
        {
            "bytes": rng.normal(size=n) * 1e4,
            "proto": [str(rng.choice(["a", "b", "c"])) for _ in range(n)],
            "flag": rng.integers(0, 2, size=n),
            "y": rng.integers(0, 2, size=n),
        },
    )


class TestRngStream:
    def test_same_seed_and_label_identical(self):
        a = RngStream(42, "x").normal(size=10)
        b = RngStream(42, "x").normal(size=10)
        assert np.array_equal(a, b)

    def test_child_independent_of_parent_draw_order(self):
        p1 = RngStream(7)
        p1.normal(size=100)  # consume the parent heavily
        c1 = p1.child("branch").normal(size=5)
        c2 = RngStream(7).child("branch").normal(size=5)
        assert np.array_equal(c1, c2)

    def test_distinct_labels_differ(self):
        assert not np.array_equal(
            RngStream(1, "a").normal(size=5), RngStream(1, "b").normal(size=5)
        )


class TestIO:
    def test_three_row_csv(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("bytes,proto,flag,y\n1.0,TCP,0,1\n2.0,UDP,1,0\n3.5,TCP,0,0\n")
        ds = load_dataset(path, SCHEMA)
        assert ds.n == 3
        assert ds.column("proto") == ["TCP", "UDP", "TCP"]
        assert np.allclose(ds.column("bytes"), [1.0, 2.0, 3.5])

    def test_empty_data_section(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("bytes,proto,flag,y\n")
        assert load_dataset(path, SCHEMA).n == 0

    def test_unparseable_cell_names_row_and_column(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("bytes,proto,flag,y\nabc,TCP,0,1\n")
        with pytest.raises(DataError, match=r"row 2.*'bytes'"):
            load_dataset(path, SCHEMA)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_dataset(tmp_path / "nope.csv", SCHEMA)

    def test_header_mismatch(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("wrong,header\n")
        with pytest.raises(DataError, match="header"):
            load_dataset(path, SCHEMA)

    def test_round_trip_randomized(self, tmp_path, np_rng):
        for i in range(10):
            ds = random_dataset(np_rng, int(np_rng.integers(1, 40)))
            path = tmp_path / f"r{i}.csv"
            save_dataset(ds, path)
            assert load_dataset(path, SCHEMA).equals(ds)

    def test_empty_round_trip_is_header_only(self, tmp_path):
        ds = Dataset(SCHEMA, {"bytes": [], "proto": [], "flag": [], "y": []})
        path = tmp_path / "e.csv"
        save_dataset(ds, path)
        assert path.read_text() == "bytes,proto,flag,y\n"
        assert load_dataset(path, SCHEMA).n == 0

    def test_two_saves_byte_identical(self, tmp_path, np_rng):
        ds = random_dataset(np_rng, 25)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        save_dataset(ds, p1)
        save_dataset(ds, p2)
        d1 = hashlib.sha256(p1.read_bytes()).hexdigest()
        d2 = hashlib.sha256(p2.read_bytes()).hexdigest()
        assert d1 == d2

    def test_unwritable_path(self, tmp_path):
        with pytest.raises(DataError, match="cannot write"):
            save_dataset(make_dataset(), tmp_path / "missing-dir" / "x.csv")


class TestDatasetInvariants:
    def test_duplicate_column_names_rejected(self):
        with pytest.raises(DataError, match="duplicate"):
            Dataset([("a", "numeric"), ("a", "binary")], {"a": [1.0]})

    def test_two_label_columns_rejected(self):
        with pytest.raises(DataError, match="label"):
            Dataset([("a", "label"), ("b", "label")], {"a": [1], "b": [0]})

    def test_binary_values_checked(self):
        with pytest.raises(DataError, match="binary"):
            Dataset([("f", "binary")], {"f": [0, 2]})

    def test_ragged_columns_rejected(self):
        with pytest.raises(DataError, match="rows"):
            Dataset([("a", "numeric"), ("b", "numeric")], {"a": [1.0, 2.0], "b": [1.0]})


class TestSummaries:
    def test_constant_numeric_column(self):
        ds = Dataset([("x", "numeric")], {"x": [4.0] * 9})
        s = summarize_columns(ds)[0]
        assert s.std == 0.0 and s.min == s.max == 4.0

    def test_binary_counts(self):
        ds = Dataset([("b", "binary")], {"b": [1] * 7 + [0] * 3})
        s = summarize_columns(ds)[0]
        assert s.counts == {1: 7, 0: 3}

    def test_quantiles_nearest_rank_oracle(self, np_rng):
        for _ in range(20):
            vals = np_rng.normal(size=int(np_rng.integers(1, 50)))
            ds = Dataset([("x", "numeric")], {"x": vals})
            s = summarize_columns(ds)[0]
            sorted_vals = np.sort(vals)
            for q, got in ((0.25, s.q25), (0.5, s.median), (0.75, s.q75)):
                k = max(1, int(np.ceil(q * len(vals))))
                assert got == sorted_vals[k - 1]

    def test_default_network_protocol_ordering(self):
        ds = generate_network_flows(GeneratorConfig(n=4000, anomaly_rate=0.05, seed=42))
        counts = {s.name: s.counts for s in summarize_columns(ds)}["protocol"]
        assert counts["TCP"] > counts["UDP"] > counts["ICMP"]

    def test_empty_dataset_rejected(self):
        ds = Dataset([("x", "numeric")], {"x": []})
        with pytest.raises(DataError):
            summarize_columns(ds)


class TestStratifiedSplit:
    def test_rounding_forced_counts(self):
        labels = [0] * 90 + [1] * 10
        ds = Dataset([("x", "numeric"), ("y", "label")], {"x": list(range(100)), "y": labels})
        train, test = stratified_split(ds, "y", 0.3, RngStream(0, "s"))
        y_test = np.asarray(test.column("y"))
        assert test.n == 30 and (y_test == 0).sum() == 27 and (y_test == 1).sum() == 3

    def test_same_seed_identical_partitions(self):
        ds = make_dataset(40)
        a = stratified_split(ds, "y", 0.3, RngStream(5, "s"))
        b = stratified_split(ds, "y", 0.3, RngStream(5, "s"))
        assert a[0].equals(b[0]) and a[1].equals(b[1])

    def test_phishing_scale_test_count(self):
        # 10,000 rows at 0.3 must give exactly 3,000 test rows.
        labels = [0] * 8000 + [1] * 2000
        ds = Dataset([("x", "numeric"), ("y", "label")], {"x": list(range(10000)), "y": labels})
        _, test = stratified_split(ds, "y", 0.3, RngStream(1, "s"))
        assert test.n == 3000

    def test_partition_property(self, np_rng):
        for _ in range(10):
            n = int(np_rng.integers(20, 200))
            ds = random_dataset(np_rng, n)
            labels = np.asarray(ds.column("y"))
            if min((labels == 0).sum(), (labels == 1).sum()) < 2:
                continue
            train, test = stratified_split(ds, "y", 0.3, RngStream(int(np_rng.integers(1e6)), "s"))
            ids = np.concatenate([train.row_ids, test.row_ids])
            assert sorted(ids.tolist()) == list(range(n))

    def test_stratification_proportion_bound(self, np_rng):
        for _ in range(10):
            n = int(np_rng.integers(50, 400))
            ds = random_dataset(np_rng, n)
            labels = np.asarray(ds.column("y"))
            if min((labels == 0).sum(), (labels == 1).sum()) < 2:
                continue
            _, test = stratified_split(ds, "y", 0.3, RngStream(int(np_rng.integers(1e6)), "s"))
            y_test = np.asarray(test.column("y"))
            for cls in (0, 1):
                full = (labels == cls).mean()
                part = (y_test == cls).mean()
                assert abs(part - full) <= 1.0 / test.n + 1e-12

    def test_small_class_rejected(self):
        ds = Dataset([("x", "numeric"), ("y", "label")], {"x": [1.0, 2.0, 3.0], "y": [0, 0, 1]})
        with pytest.raises(DataError, match="members"):
            stratified_split(ds, "y", 0.5, RngStream(0, "s"))

    def test_degenerate_fraction_rejected(self):
        ds = make_dataset(10)
        for frac in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(DataError, match="fraction"):
                stratified_split(ds, "y", frac, RngStream(0, "s"))
