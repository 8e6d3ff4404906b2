import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from synthtab.privacy import (
    categorical_cap,
    dcr_percentile,
    dcr_values,
    evaluate_privacy,
    matched_rows,
    new_row_synthesis,
    nndr_percentile,
    nndr_values,
)
from synthtab.schema import ColumnSpec, DataTable, TableSchema, encode

from helpers import random_mixed_table


def xy_schema():
    return TableSchema((ColumnSpec("x", "continuous", "x"), ColumnSpec("y", "continuous", "y")))


def xy(points):
    p = np.asarray(points, dtype=float)
    return DataTable(xy_schema(), {"x": p[:, 0], "y": p[:, 1]})


def brute_pairs(synth, train):
    s = encode(synth, train).values
    t = encode(train, train).values
    d1, d2 = [], []
    for row in s:
        ds = sorted(float(np.sqrt(sum((row[j] - tr[j]) ** 2 for j in range(len(row))))) for tr in t)
        d1.append(ds[0])
        d2.append(ds[1] if len(ds) > 1 else np.nan)
    return np.array(d1), np.array(d2)


def brute_percentile(values, q):
    v = sorted(values)
    pos = (len(v) - 1) * q / 100
    lo = int(np.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


class TestDistances:
    def test_hand_dcr(self):
        train = xy([[0, 0], [1, 1]])
        synth = xy([[1, 0]])
        # train corners map to (0,0) and (1,1); synth to (1,0)
        assert dcr_percentile(synth, train) == pytest.approx(1.0)

    def test_hand_nndr(self):
        s = TableSchema((ColumnSpec("x", "continuous", "x"),))
        train = DataTable(s, {"x": [0.0, 4.0]})
        synth = DataTable(s, {"x": [1.0]})
        # scaled: train 0 and 1, synth 0.25 -> d1 0.25, d2 0.75
        assert nndr_values(synth, train)[0] == pytest.approx(1 / 3)
        synth2 = DataTable(s, {"x": [4 / 3]})
        assert nndr_percentile(synth2, train) == pytest.approx(0.5)

    def test_copy_gives_zero(self, mixed_schema):
        t = random_mixed_table(mixed_schema, 50, np.random.default_rng(0))
        assert dcr_percentile(t, t) == 0.0
        assert nndr_percentile(t, t) == 0.0

    def test_zero_over_zero(self):
        train = xy([[0, 0], [0, 0], [1, 1]])
        assert nndr_values(xy([[0, 0]]), train)[0] == 1.0

    def test_nndr_needs_two_rows(self):
        with pytest.raises(ValueError):
            nndr_values(xy([[0, 0]]), xy([[0, 0]]))

    def test_empty(self):
        with pytest.raises(ValueError):
            dcr_values(xy(np.zeros((0, 2))), xy([[0, 0]]))

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**31), n_s=st.integers(1, 60), n_t=st.integers(2, 60), q=st.sampled_from([0, 5, 50, 95]))
    def test_brute_force_oracle(self, seed, n_s, n_t, q, mixed_schema):
        rng = np.random.default_rng(seed)
        train = random_mixed_table(mixed_schema, n_t, rng)
        synth = random_mixed_table(mixed_schema, n_s, rng)
        d1, d2 = brute_pairs(synth, train)
        ratio = np.where(d2 == 0, 1.0, d1 / np.where(d2 == 0, 1.0, d2))
        assert abs(dcr_percentile(synth, train, q) - brute_percentile(d1, q)) <= 1e-9
        assert abs(nndr_percentile(synth, train, q) - brute_percentile(ratio, q)) <= 1e-9
        assert np.all((nndr_values(synth, train) >= 0) & (nndr_values(synth, train) <= 1))

    @settings(max_examples=20)
    @given(seed=st.integers(0, 2**31))
    def test_copy_row_never_raises_dcr(self, seed, mixed_schema):
        rng = np.random.default_rng(seed)
        train = random_mixed_table(mixed_schema, 30, rng)
        synth = random_mixed_table(mixed_schema, 20, rng)
        before = dcr_percentile(synth, train)
        after = dcr_percentile(synth.concat(train.take([int(rng.integers(30))])), train)
        assert after <= before + 1e-12


class TestNewRows:
    def test_copy(self, mixed_schema):
        t = random_mixed_table(mixed_schema, 40, np.random.default_rng(1))
        assert new_row_synthesis(t, t) == 0.0

    def test_far_shift(self):
        train = xy([[1, 2], [3, 4]])
        assert new_row_synthesis(xy([[100, 200], [300, 400]]), train) == 1.0

    def test_one_of_four(self):
        train = xy([[1, 1], [2, 2]])
        synth = xy([[1, 1], [5, 5], [6, 6], [7, 7]])
        assert new_row_synthesis(synth, train) == 0.75

    def test_tolerance_edges(self):
        train = xy([[100, 0], [0, 0]])
        assert matched_rows(xy([[100.9, 0]]), train)[0]
        assert not matched_rows(xy([[101.5, 0]]), train)[0]
        assert not matched_rows(xy([[1e-6, 0]]), xy([[0, 0]]))[0]

    def test_complement_identity(self, mixed_schema):
        rng = np.random.default_rng(2)
        train = random_mixed_table(mixed_schema, 40, rng)
        synth = train.take(list(range(10))).concat(random_mixed_table(mixed_schema, 30, rng))
        assert new_row_synthesis(synth, train) + matched_rows(synth, train).mean() == 1.0


def cap_schema():
    return TableSchema((
        ColumnSpec("sex", "categorical", "sex", categories=((0, "F"), (1, "M"))),
        ColumnSpec("score", "integer", "score"),
        ColumnSpec("edu", "integer", "edu"),
    ))


def cap_table(rows):
    return DataTable.from_rows(cap_schema(), [dict(zip(("sex", "score", "edu"), r)) for r in rows])


class TestCAP:
    def test_two_row_fixture(self):
        train = cap_table([(0, 10, 12), (1, 20, 16)])
        synth = cap_table([(0, 10, 12), (1, 20, 9)])
        assert categorical_cap(synth, train, ["sex", "score"], "edu") == 0.5

    def test_all_revealed(self):
        train = cap_table([(0, 10, 12), (1, 20, 16)])
        assert categorical_cap(train, train, ["sex", "score"], "edu") == 0.0

    def test_no_matches(self):
        train = cap_table([(0, 10, 12)])
        synth = cap_table([(1, 99, 12)])
        assert categorical_cap(synth, train, ["sex", "score"], "edu") == 1.0

    def test_partial_attribution(self):
        train = cap_table([(0, 10, 12)])
        synth = cap_table([(0, 10, 12), (0, 10, 13), (0, 10, 13), (0, 10, 12)])
        assert categorical_cap(synth, train, ["sex", "score"], "edu") == 0.5

    def test_continuous_key_rejected(self):
        s = TableSchema((ColumnSpec("a", "continuous", "a"), ColumnSpec("b", "integer", "b")))
        t = DataTable(s, {"a": [1.0], "b": [1.0]})
        with pytest.raises(ValueError, match="discretize"):
            categorical_cap(t, t, ["a"], "b")

    @settings(max_examples=20)
    @given(seed=st.integers(0, 2**31))
    def test_range_and_determinism(self, seed, mixed_schema):
        rng = np.random.default_rng(seed)
        train = random_mixed_table(mixed_schema, 30, rng)
        synth = random_mixed_table(mixed_schema, 30, rng)
        v = categorical_cap(synth, train, ["sex", "grade"], "score")
        assert 0.0 <= v <= 1.0 and v == categorical_cap(synth, train, ["sex", "grade"], "score")


def test_report_records_parameters(tmp_path, mixed_schema):
    rng = np.random.default_rng(3)
    train = random_mixed_table(mixed_schema, 40, rng)
    synth = random_mixed_table(mixed_schema, 40, rng)
    rep = evaluate_privacy(synth, train)
    d = rep.to_dict()
    assert d["percentile"] == 5.0 and d["match_rtol"] == 0.01
    assert d["key_fields"] == ["sex", "grade"] and d["sensitive_field"] == "score"
    assert d["cap_no_match_attribution"] == 0.0
    rep.write_json(tmp_path / "p.json")
    assert (tmp_path / "p.json").exists()
