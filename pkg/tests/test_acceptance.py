"""Acceptance criteria 1-10, each checked at its stated tolerance.

Every check prints one ``CRITERION n: PASS|FAIL`` line (also repeated in
the pytest terminal summary).  Run standalone with
``python3 tests/test_acceptance.py``.
"""

import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.distance import cdist

sys.path.insert(0, str(Path(__file__).parent))

from synthtab import bench, copula, fidelity, fixtures, learn, privacy  # noqa: E402
from synthtab.bench import CopulaBinding, LLMBinding, ProtocolConfig, aggregate  # noqa: E402
from synthtab.llm import (  # noqa: E402
    GenerationConfig,
    MockBackend,
    ScriptedBackend,
    TransportError,
    generate_dataset,
    parse_batch,
)
from synthtab.prompt import CONTEXT_HEADER, INSTRUCTIONS_HEADER, PRIOR_HEADER, SPECS_HEADER, build_prompt, split_sections  # noqa: E402
from synthtab.schema import ColumnSpec, DataTable, TableSchema, encode  # noqa: E402

GOLDEN = Path(__file__).parent / "golden" / "ppmi_prompt_v1.txt"
RESULTS: dict[int, tuple[bool, str]] = {}


def record(n: int, ok: bool, detail: str) -> None:
    RESULTS[n] = (ok, detail)
    print(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")


# -- 1 ------------------------------------------------------------------------

def check_1():
    schema = fixtures.ppmi_schema()
    worst = []
    for seed in range(5):
        x = fixtures.oracle_table(200, seed=100 + seed)
        rep = fidelity.evaluate_fidelity(x, x, detection=False)
        s = rep.summaries
        worst.append((s["Column Shapes"], s["WD"], s["JSD"], s["Column Pair Trends"]))
    x = fixtures.oracle_table(1000, seed=0)
    assert len(x.schema.names) == 12 == len(schema.names)
    t0 = time.perf_counter()
    s = fidelity.evaluate_fidelity(x, x, detection=False).summaries
    elapsed = time.perf_counter() - t0
    worst.append((s["Column Shapes"], s["WD"], s["JSD"], s["Column Pair Trends"]))
    ok = all(cs == 1.0 and wd == 0.0 and jsd == 0.0 and cpt >= 0.999 for cs, wd, jsd, cpt in worst) and elapsed < 10
    cpt_min = min(w[3] for w in worst)
    return ok, f"shapes=1, WD=0, JSD=0 on 6 tables; min pair trends {cpt_min:.4f}; 1000x12 in {elapsed:.2f}s"


# -- 2 ------------------------------------------------------------------------

def oracle_ks(a, b):
    gap = 0.0
    for t in np.unique(np.concatenate([a, b])):
        gap = max(gap, abs(np.count_nonzero(a <= t) / len(a) - np.count_nonzero(b <= t) / len(b)))
    return 1.0 - gap


def oracle_percentile(v, q):
    v = np.sort(v)
    pos = (len(v) - 1) * q / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(v) - 1)
    return v[lo] + (v[hi] - v[lo]) * (pos - lo)


def oracle_stump(X, y):
    best = None
    for j in range(X.shape[1]):
        vals = np.unique(X[:, j])
        for t in (vals[:-1] + vals[1:]) / 2.0:
            for pol in (1, -1):
                errs = int(np.count_nonzero((pol * (X[:, j] - t) > 0).astype(int) != y))
                key = (errs, j, t, -pol)
                best = key if best is None or key < best else best
    return best[1], best[2], -best[3]


def check_2():
    rng = np.random.default_rng(2024)
    schema = TableSchema((
        ColumnSpec("a", "continuous", "a"), ColumnSpec("b", "integer", "b"),
        ColumnSpec("c", "categorical", "c", categories=((0, "x"), (1, "y"), (2, "z"))),
    ))
    worst = {"ks": 0.0, "wd": 0.0, "dcr": 0.0, "nndr": 0.0}
    stump_mismatch = 0
    stump_cases = 0
    for _ in range(200):
        n = int(rng.integers(2, 201))
        m = int(rng.integers(1, 201))
        a = np.round(rng.normal(size=n), 2)
        b = np.round(rng.normal(0.3, 1.2, size=m), 2)
        worst["ks"] = max(worst["ks"], abs(fidelity.ks_complement(a, b) - oracle_ks(a, b)))
        b_eq = np.round(rng.normal(0.3, 1.2, size=n), 2)
        worst["wd"] = max(worst["wd"], abs(fidelity.wasserstein_1d(a, b_eq) - np.mean(np.abs(np.sort(a) - np.sort(b_eq)))))

        def table(k):
            return DataTable(schema, {"a": rng.normal(size=k), "b": rng.integers(0, 10, k), "c": rng.integers(0, 3, k)})

        train, synth = table(n), table(m)
        d = cdist(encode(synth, train).values, encode(train, train).values)
        d.sort(axis=1)
        ratio = np.where(d[:, 1] == 0, 1.0, d[:, 0] / np.where(d[:, 1] == 0, 1.0, d[:, 1]))
        worst["dcr"] = max(worst["dcr"], abs(privacy.dcr_percentile(synth, train) - oracle_percentile(d[:, 0], 5)))
        worst["nndr"] = max(worst["nndr"], abs(privacy.nndr_percentile(synth, train) - oracle_percentile(ratio, 5)))

        k = int(rng.integers(2, 21))
        X = rng.integers(0, 8, (k, int(rng.integers(1, 4)))).astype(float)
        y = rng.integers(0, 2, k)
        if y.min() == y.max() or all(len(np.unique(X[:, j])) < 2 for j in range(X.shape[1])):
            continue
        stump_cases += 1
        got = learn.best_stump(X, y, np.full(k, 1.0 / k))
        fit = learn.adaboost_fit(X, y, rounds=1).stumps[0]
        exp = oracle_stump(X, y)
        if got[:3] != exp or (fit.feature, fit.threshold, fit.polarity) != exp:
            stump_mismatch += 1
    ok = max(worst.values()) <= 1e-9 and stump_mismatch == 0
    detail = ", ".join(f"{k} max err {v:.1e}" for k, v in worst.items())
    return ok, f"200 instances: {detail}; stump mismatches {stump_mismatch}/{stump_cases}"


# -- 3 ------------------------------------------------------------------------

def check_3():
    vals = {}
    vals["TVComplement"] = (fidelity.tv_complement([0, 1], [0, 0, 0, 1]), 0.75)
    vals["KSComplement"] = (fidelity.ks_complement([1, 2, 3, 4], [3, 4, 5, 6]), 0.5)
    # nearest train row differs in one unit coordinate, second nearest in four
    s1 = TableSchema(tuple(ColumnSpec(f"x{i}", "continuous", f"x{i}") for i in range(5)))
    train = DataTable(s1, {f"x{i}": [0.0, 1.0] for i in range(5)})
    synth = DataTable(s1, {f"x{i}": [1.0 if i == 0 else 0.0] for i in range(5)})
    vals["NNDR"] = (float(privacy.nndr_values(synth, train)[0]), 0.5)
    cs = TableSchema((ColumnSpec("sex", "categorical", "sex", categories=((0, "F"), (1, "M"))),
                      ColumnSpec("score", "integer", "score"), ColumnSpec("edu", "integer", "edu")))
    tr = DataTable(cs, {"sex": [0, 1], "score": [10, 20], "edu": [12, 16]})
    sy = DataTable(cs, {"sex": [0, 1], "score": [10, 20], "edu": [12, 9]})
    vals["CAP"] = (privacy.categorical_cap(sy, tr, ["sex", "score"], "edu"), 0.5)
    vals["aggregate"] = (aggregate([1, 2, 3]), (2.0, 1.0))
    bad = [k for k, (got, exp) in vals.items() if got != exp]
    ok = not bad
    return ok, "exact: " + ", ".join(f"{k}={got}" for k, (got, _) in vals.items()) + (f"; mismatched {bad}" if bad else "")


# -- 4 ------------------------------------------------------------------------

def check_4():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    corr = np.full((3, 3), 0.7)
    np.fill_diagonal(corr, 1.0)
    z = rng.multivariate_normal(np.zeros(3), corr, size=5000)
    schema = TableSchema(tuple(ColumnSpec(f"v{i}", "continuous", f"v{i}") for i in range(3)))
    train = DataTable(schema, {f"v{i}": z[:, i] for i in range(3)})
    out = copula.sample(copula.fit(train, seed=0), 5000, 1, schema)
    x = np.column_stack([out[f"v{i}"] for i in range(3)])
    r = np.corrcoef(x, rowvar=False)
    dev = max(abs(r[i, j] - 0.7) for i in range(3) for j in range(i + 1, 3))
    ks = min(fidelity.ks_complement(train[f"v{i}"], out[f"v{i}"]) for i in range(3))
    elapsed = time.perf_counter() - t0
    ok = dev <= 0.05 and ks >= 0.97 and elapsed < 30
    return ok, f"max |r-0.7| {dev:.4f}, min KSComplement {ks:.4f}, {elapsed:.2f}s"


# -- 5 ------------------------------------------------------------------------

def check_5():
    real = fixtures.oracle_table(1000, seed=51)
    same = fixtures.oracle_table(1000, seed=52)
    shifted_src = fixtures.oracle_table(1000, seed=53)
    data = {}
    for name in real.schema.names:
        col = shifted_src[name]
        if real.schema[name].is_numeric:
            pooled = np.std(np.concatenate([real[name], same[name]]), ddof=1)
            shift = 5 * pooled
            if real.schema[name].kind == "integer":
                shift = math.ceil(shift)
            col = col + shift
        data[name] = col
    shifted = DataTable(real.schema, data)
    a = fidelity.logistic_detection(real, same, seed=0)
    b = fidelity.logistic_detection(real, shifted, seed=0)
    return a >= 0.8 and b <= 0.05, f"same law {a:.4f} (>= 0.8), 5-sigma shift {b:.4f} (<= 0.05)"


# -- 6 ------------------------------------------------------------------------

def check_6():
    train = fixtures.oracle_table(500, seed=61)
    copy = DataTable(train.schema, dict(train.data))
    rep = privacy.evaluate_privacy(copy, train)
    data = {n: (train[n] + 1000.0 if train.schema[n].is_numeric else train[n]) for n in train.schema.names}
    far = DataTable(train.schema, data)
    nr_far = privacy.new_row_synthesis(far, train)
    ok = rep.dcr_p5 == 0.0 and rep.new_row_rate == 0.0 and rep.nndr_p5 == 0.0 and nr_far == 1.0
    return ok, (f"copy: dcr_p5={rep.dcr_p5}, new_row_rate={rep.new_row_rate}, nndr_p5={rep.nndr_p5}; "
                f"shifted new_row_rate={nr_far}")


# -- 7 ------------------------------------------------------------------------

def separable_table(n, seed, permute=False):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    y = 2.0 * x[:, 0] + x[:, 1]
    if permute:
        y = rng.permutation(y)
    schema = TableSchema(tuple(ColumnSpec(c, "continuous", c) for c in ("x1", "x2", "x3", "y")))
    return DataTable(schema, {"x1": x[:, 0], "x2": x[:, 1], "x3": x[:, 2], "y": y})


def check_7():
    train = separable_table(700, 71)
    test = separable_table(300, 72)
    synth = separable_table(700, 73)
    f_sep = learn.tstr(synth, test, train, "y")
    permuted = separable_table(700, 74, permute=True)
    f_perm = learn.tstr(permuted, test, train, "y")
    y_fit, median = learn.binarize_target(permuted, "y", train)
    y_test = (test["y"] > median).astype(int)
    majority = 1 if 2 * y_fit.sum() > len(y_fit) else 0
    f_major = learn.f1(np.full(len(y_test), majority), y_test)
    f_tatr = learn.tatr(train, train.take([]), test, "y")
    f_real = learn.train_on(train, test, train, "y")
    ok = f_sep >= 0.95 and abs(f_perm - f_major) <= 0.1 and f_tatr == f_real
    return ok, (f"separable TSTR F1 {f_sep:.4f} (>= 0.95); permuted F1 {f_perm:.4f} vs majority-class "
                f"baseline {f_major:.4f} (|diff| <= 0.1); TATR(empty) {f_tatr:.4f} == train-only {f_real:.4f}")


# -- 8 ------------------------------------------------------------------------

def run_mock_benchmark(out_dir: Path):
    real = fixtures.oracle_table(1000, seed=0)
    desc, examples = fixtures.ppmi_description()
    cfg = ProtocolConfig(
        generators=[
            CopulaBinding("GC"),
            LLMBinding("LLM (mock)", real.schema, desc, examples, mock_spec=fixtures.mock_spec("miscalibrated")),
        ],
        n_splits=5, n_synth=5, base_seed=0, parallelism=4,
    )
    report = bench.run_protocol(real, cfg)
    return report, bench.emit_report(report, out_dir)


def check_8():
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        rep_a, paths_a = run_mock_benchmark(tmp / "a")
        elapsed = time.perf_counter() - t0
        rep_b, paths_b = run_mock_benchmark(tmp / "b")
        identical = all(paths_a[k].read_bytes() == paths_b[k].read_bytes() for k in ("markdown", "csv", "provenance"))
        counts = {c.n_runs for c in rep_a.cells + rep_a.train_cells}
        gc = rep_a.cell("Column Shapes", "GC").mean
        llm = rep_a.cell("Column Shapes", "LLM (mock)").mean
        exists = all(p.exists() for p in paths_a.values())
    ok = exists and identical and counts == {25} and gc > llm and elapsed < 300
    return ok, (f"files written {exists}; runs per cell {sorted(counts)}; byte-identical rerun {identical}; "
                f"Column Shapes GC {gc:.4f} > mock {llm:.4f}; one run {elapsed:.1f}s")


# -- 9 ------------------------------------------------------------------------

def check_9():
    schema = fixtures.ppmi_schema()
    desc, examples = fixtures.ppmi_description()
    be = MockBackend(fixtures.mock_spec("true"))
    res = generate_dataset(be, desc, schema, GenerationConfig(25, 10, seed=9), examples)
    part_a = be.n_requests == 3 and len(res.table) == 25

    good = json.dumps(fixtures.mock_spec("true").sample_records(10, np.random.default_rng(0)))
    scripted = ScriptedBackend(["not json at all", TransportError("HTTP 503", status=503), good], max_retries=3)
    res_b = generate_dataset(scripted, desc, schema, GenerationConfig(10, 10), examples)
    attempts = res_b.log["batches"][0]["attempts"]
    part_b = attempts == 3 and len(res_b.table) == 10

    recs = json.loads(good)[:3]
    truncated = json.dumps(recs)[:-1] + ', {"AGE": 61.2, "SEX": '
    out = parse_batch(truncated, schema, 4)
    part_c = len(out.rows_accepted) == 3 and out.rejects[-1][1] == "truncated array"
    return part_a and part_b and part_c, (
        f"N=25,n=10: {be.n_requests} requests, {len(res.table)} rows; double failure -> attempts_used={attempts}; "
        f"truncated fixture salvaged {len(out.rows_accepted)} of 3 complete objects")


# -- 10 -----------------------------------------------------------------------

def check_10():
    schema = fixtures.ppmi_schema()
    desc, examples = fixtures.ppmi_description()
    p = build_prompt(desc, schema, examples, 10, schema.names)
    golden = p.rendered == GOLDEN.read_text(encoding="utf-8")
    order = split_sections(p.rendered).order == (PRIOR_HEADER, INSTRUCTIONS_HEADER, SPECS_HEADER, CONTEXT_HEADER)
    mappings = [f'{c} -> "{lab}"' for col in schema.columns for c, lab in col.categories]
    present = all(m in p.rendered for m in mappings)
    return golden and order and present, (
        f"byte-identical golden {golden}; section order {order}; {len(mappings)} mapping strings present {present}")


CHECKS = {i: globals()[f"check_{i}"] for i in range(1, 11)}


@pytest.mark.parametrize("n", list(CHECKS))
def test_criterion(n):
    ok, detail = CHECKS[n]()
    record(n, ok, detail)
    assert ok, detail


if __name__ == "__main__":
    failed = 0
    for n, fn in CHECKS.items():
        ok, detail = fn()
        record(n, ok, detail)
        failed += not ok
    sys.exit(1 if failed else 0)
