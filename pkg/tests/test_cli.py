import csv
import json
from pathlib import Path

import numpy as np
import pytest

from synthtab import fixtures
from synthtab.cli import main
from synthtab.schema import load_csv, write_csv

ROOT = Path(__file__).resolve().parents[1]
SCHEMA = str(fixtures.path("ppmi_schema.json"))
DESC = str(fixtures.path("ppmi_description.json"))
SPEC = str(fixtures.path("ppmi_mock_true.json"))


@pytest.fixture
def tables(tmp_path):
    real = fixtures.oracle_table(300, seed=1)
    train = fixtures.oracle_table(300, seed=2)
    synth = fixtures.oracle_table(300, seed=3)
    paths = {}
    for name, t in (("real", real), ("train", train), ("synth", synth)):
        paths[name] = tmp_path / f"{name}.csv"
        write_csv(t, paths[name])
    return paths


class TestSchemaValidate:
    def test_valid(self, capsys):
        assert main(["schema-validate", "--schema", SCHEMA]) == 0
        assert json.loads(capsys.readouterr().out)["valid"] is True

    def test_duplicate_column(self, tmp_path, capsys):
        d = json.loads(Path(SCHEMA).read_text())
        d["columns"].append(dict(d["columns"][0]))
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(d))
        assert main(["schema-validate", "--schema", str(bad)]) == 1
        out = json.loads(capsys.readouterr().out)
        assert "AGE" in out["errors"][0]["message"]

    def test_missingness(self, tmp_path, capsys):
        t = fixtures.oracle_table(100, seed=0)
        path = tmp_path / "d.csv"
        write_csv(t, path)
        rows = list(csv.reader(path.open()))
        col = rows[0].index("MCATOT")
        for r in rows[1:6]:
            r[col] = ""
        with path.open("w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        assert main(["schema-validate", "--schema", SCHEMA, "--data", str(path)]) == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["missingness"]["MCATOT"] == 0.05 and rep["missingness"]["AGE"] == 0.0


class TestGenerate:
    def test_mock(self, tmp_path):
        out = tmp_path / "synth.csv"
        rc = main(["generate", "--schema", SCHEMA, "--description", DESC, "--n-total", "100",
                   "--backend", "mock", "--mock-spec", SPEC, "--out", str(out)])
        assert rc == 0
        assert len(load_csv(out, fixtures.ppmi_schema())) == 100
        log = json.loads((tmp_path / "synth.log.json").read_text())
        assert log["n_batches"] == 10 and log["config"]["batch_rows"] == 10

    def test_missing_key(self, tmp_path, monkeypatch):
        monkeypatch.delenv("SYNTHTAB_TEST_KEY", raising=False)
        rc = main(["generate", "--schema", SCHEMA, "--description", DESC, "--n-total", "10",
                   "--api-key-env", "SYNTHTAB_TEST_KEY", "--out", str(tmp_path / "x.csv")])
        assert rc == 1
        assert not (tmp_path / "x.csv").exists()

    def test_exhausted_saves_partial(self, tmp_path, monkeypatch):
        from synthtab import cli
        from synthtab.llm import ScriptedBackend

        good = json.dumps(fixtures.mock_spec().sample_records(10, np.random.default_rng(0)))
        monkeypatch.setattr(cli, "_make_backend", lambda args: ScriptedBackend([good, "no", "no", "no", "no"]))
        out = tmp_path / "s.csv"
        rc = main(["generate", "--schema", SCHEMA, "--description", DESC, "--n-total", "30",
                   "--backend", "mock", "--out", str(out)])
        assert rc == 2
        assert len(load_csv(str(out) + ".partial", fixtures.ppmi_schema())) == 10
        assert not out.exists()


class TestBaseline:
    def test_fit_sample(self, tables, tmp_path):
        model = tmp_path / "m.json"
        assert main(["baseline", "fit", "--schema", SCHEMA, "--train", str(tables["train"]), "--out", str(model)]) == 0
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            assert main(["baseline", "sample", "--schema", SCHEMA, "--model", str(model), "--n", "1000",
                         "--seed", "4", "--out", str(p)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert len(load_csv(a, fixtures.ppmi_schema())) == 1000

    def test_one_row(self, tmp_path):
        one = tmp_path / "one.csv"
        write_csv(fixtures.oracle_table(1, seed=0), one)
        assert main(["baseline", "fit", "--schema", SCHEMA, "--train", str(one), "--out", str(tmp_path / "m.json")]) == 1


class TestEvaluate:
    def test_identity(self, tables, tmp_path, capsys):
        rc = main(["evaluate", "--real", str(tables["real"]), "--synth", str(tables["real"]), "--schema", SCHEMA,
                   "--metrics", "fidelity", "--out", str(tmp_path / "o")])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["fidelity"]["Column Shapes"] == 1.0 and out["fidelity"]["WD"] == 0.0
        assert (tmp_path / "o" / "fidelity.csv").exists()

    def test_privacy_only(self, tables, tmp_path, capsys):
        rc = main(["evaluate", "--real", str(tables["real"]), "--synth", str(tables["synth"]), "--schema", SCHEMA,
                   "--train", str(tables["train"]), "--metrics", "privacy", "--out", str(tmp_path / "o")])
        assert rc == 0
        assert set(json.loads(capsys.readouterr().out)) == {"privacy"}
        assert not (tmp_path / "o" / "fidelity.json").exists()

    def test_privacy_without_train(self, tables, tmp_path, capsys):
        rc = main(["evaluate", "--real", str(tables["real"]), "--synth", str(tables["synth"]), "--schema", SCHEMA,
                   "--metrics", "privacy", "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "training data" in capsys.readouterr().err

    def test_mismatched_headers(self, tables, tmp_path, capsys):
        rows = list(csv.reader(tables["synth"].open()))
        rows[0][3] = "HAND"
        bad = tmp_path / "bad.csv"
        with bad.open("w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        rc = main(["evaluate", "--real", str(tables["real"]), "--synth", str(bad), "--schema", SCHEMA,
                   "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "HANDED" in capsys.readouterr().err

    def test_all_groups_and_plots(self, tables, tmp_path, capsys):
        rc = main(["evaluate", "--real", str(tables["real"]), "--synth", str(tables["synth"]), "--schema", SCHEMA,
                   "--train", str(tables["train"]), "--metrics", "fidelity,detection,privacy,utility",
                   "--rounds", "10", "--plots", "--out", str(tmp_path / "o")])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert "LogisticDetection" in out["fidelity"] and "TSTR" in out["utility"]
        assert (tmp_path / "o" / "plots" / "hist_AGE.csv").exists()
        assert json.loads((tmp_path / "o" / "provenance.json").read_text())["seed"] == 0

    def test_unknown_group(self, tables, tmp_path):
        assert main(["evaluate", "--real", str(tables["real"]), "--synth", str(tables["synth"]), "--schema", SCHEMA,
                     "--metrics", "vibes", "--out", str(tmp_path / "o")]) == 1


def small_config(tmp_path, source):
    raw = json.loads((ROOT / "configs" / source).read_text())
    raw.update(n_splits=1, n_synth=2, rounds=5)
    for key in ("schema",):
        raw[key] = str((ROOT / "configs" / raw[key]).resolve())
    for g in raw.get("generators", []) + ([raw["ablation"]["generator"]] if "ablation" in raw else []):
        if "description" in g:
            g["description"] = str((ROOT / "configs" / g["description"]).resolve())
        if "spec_file" in g.get("backend", {}):
            g["backend"]["spec_file"] = str((ROOT / "configs" / g["backend"]["spec_file"]).resolve())
    path = tmp_path / source
    path.write_text(json.dumps(raw))
    return path


class TestBenchmark:
    def test_mock_config(self, tables, tmp_path):
        cfg = small_config(tmp_path, "benchmark_mock.json")
        out = tmp_path / "rep"
        assert main(["benchmark", "--real", str(tables["real"]), "--config", str(cfg), "--out", str(out)]) == 0
        head = (out / "report.md").read_text().splitlines()[0]
        assert head == "| Metric | D_Train (Ref.) | GC | LLM (mock) |"
        prov = json.loads((out / "provenance.json").read_text())
        assert prov["runs_per_generator"] == {"GC": 2, "LLM (mock)": 2}

    def test_ablation_config(self, tables, tmp_path):
        cfg = small_config(tmp_path, "ablation_mock.json")
        out = tmp_path / "abl"
        assert main(["ablate", "--real", str(tables["real"]), "--config", str(cfg), "--out", str(out)]) == 0
        lines = (out / "ablation.md").read_text().strip().splitlines()
        assert len(lines) == 6

    def test_default_protocol_size(self, tmp_path):
        from synthtab import bench

        cfg, _ = bench.load_protocol(ROOT / "configs" / "benchmark_mock.json", fixtures.ppmi_schema())
        assert cfg.n_splits * cfg.n_synth == 25

    def test_missing_config(self, tables, tmp_path):
        assert main(["benchmark", "--real", str(tables["real"]), "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 1


def test_bad_arguments():
    assert main(["generate"]) == 1
    assert main(["--version"]) == 0
