"""Repeated split / generate / evaluate protocol and its report tables."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import platform
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, copula, fidelity, learn, privacy
from .llm import (
    BackendConfig,
    GenerationConfig,
    GenerationError,
    HttpBackend,
    MockBackend,
    MockBackendSpec,
    generate_dataset,
)
from .prompt import DatabaseDescription, ExampleRow, load_description
from .schema import DataTable, TableSchema, drop_incomplete_rows, load_csv, split

log = logging.getLogger(__name__)


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricInfo:
    name: str
    block: str
    direction: str | None  # "up", "down" or None (no ranking)


FIDELITY_METRICS = [
    MetricInfo("Column Shapes", "fidelity", "up"),
    MetricInfo("Column Pair Trends", "fidelity", "up"),
    MetricInfo("KSComplement", "fidelity", "up"),
    MetricInfo("TVComplement", "fidelity", "up"),
    MetricInfo("CorrelationSimilarity", "fidelity", "up"),
    MetricInfo("ContingencySimilarity", "fidelity", "up"),
    MetricInfo("WD", "fidelity", "down"),
    MetricInfo("JSD", "fidelity", "down"),
    MetricInfo("LogisticDetection", "fidelity", "up"),
]
PRIVACY_METRICS = [
    MetricInfo("NewRowSynthesis", "privacy", None),
    MetricInfo("DCR (5th p.)", "privacy", "up"),
    MetricInfo("NNDR (5th p.)", "privacy", "up"),
    MetricInfo("CategoricalCAP", "privacy", "up"),
]
UTILITY_METRICS = [
    MetricInfo("TSTR (F1 score)", "utility", "up"),
    MetricInfo("TATR (F1 score)", "utility", "up"),
]
ALL_METRICS = {m.name: m for m in FIDELITY_METRICS + PRIVACY_METRICS + UTILITY_METRICS}
BLOCK_AGAINST = {"fidelity": "D_Test", "privacy": "D_Train", "utility": "D_Test"}


def aggregate(values: Sequence[float]) -> tuple[float, float]:
    """Mean and sample standard deviation (n - 1); std is 0 for one value."""
    if len(values) == 0:
        raise ValueError("cannot aggregate an empty list")
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return mean, std


# -- generators ---------------------------------------------------------------

class CopulaBinding:
    kind = "copula"

    def __init__(self, name: str = "GC"):
        self.name = name

    def fit(self, train: DataTable, split_index: int, seed: int):
        gen = copula.GaussianCopulaGenerator().fit(train, seed)
        return lambda n_rows, k, run_seed: gen.generate(n_rows, run_seed)

    def describe(self) -> dict:
        return {"name": self.name, "type": self.kind, "marginals": "empirical", "psd_floor": copula.EIGEN_FLOOR}


class LLMBinding:
    """Text-to-tabular generator; never looks at the training rows."""

    kind = "llm"

    def __init__(
        self,
        name: str,
        schema: TableSchema,
        desc: DatabaseDescription,
        examples: Sequence[ExampleRow],
        batch_rows: int = 10,
        include_examples: bool = True,
        backend_config: BackendConfig | None = None,
        mock_spec: MockBackendSpec | None = None,
        max_retries: int = 3,
        workers: int = 1,
    ):
        if (backend_config is None) == (mock_spec is None):
            raise ValueError("an llm generator needs exactly one of backend_config / mock_spec")
        self.name = name
        self.schema = schema
        self.desc = desc
        self.examples = list(examples)
        self.batch_rows = batch_rows
        self.include_examples = include_examples
        self.backend_config = backend_config
        self.mock_spec = mock_spec
        self.max_retries = max_retries
        self.workers = workers
        self._http = HttpBackend(backend_config) if backend_config is not None else None

    @property
    def model_id(self) -> str:
        return self.backend_config.model_id if self.backend_config else "mock"

    def _backend(self, run_seed: int):
        if self._http is not None:
            return self._http
        spec = MockBackendSpec(
            columns=self.mock_spec.columns,
            seed=int(np.random.SeedSequence([self.mock_spec.seed, run_seed]).generate_state(1)[0]),
            correlated=self.mock_spec.correlated,
            correlation=self.mock_spec.correlation,
        )
        return MockBackend(spec, max_retries=self.max_retries)

    def generate(self, n_rows: int, run_seed: int) -> DataTable:
        gen = GenerationConfig(
            total_rows=n_rows,
            batch_rows=min(self.batch_rows, n_rows),
            seed=run_seed,
            include_examples=self.include_examples,
            workers=self.workers,
        )
        return generate_dataset(self._backend(run_seed), self.desc, self.schema, gen, self.examples).table

    def fit(self, train: DataTable, split_index: int, seed: int):
        return lambda n_rows, k, run_seed: self.generate(n_rows, run_seed)

    def describe(self) -> dict:
        d = {
            "name": self.name,
            "type": self.kind,
            "model_id": self.model_id,
            "batch_rows": self.batch_rows,
            "include_examples": self.include_examples,
            "max_retries": self.max_retries,
        }
        if self.backend_config is not None:
            d["backend"] = asdict(self.backend_config)
        else:
            d["backend"] = {"kind": "mock", "spec": self.mock_spec.to_dict()}
        return d


class ExternalCSVBinding:
    """Synthetic tables produced elsewhere, one CSV per (split, k)."""

    kind = "external_csv"

    def __init__(self, name: str, schema: TableSchema, path_template: str):
        self.name = name
        self.schema = schema
        self.path_template = path_template

    def fit(self, train: DataTable, split_index: int, seed: int):
        def generate(n_rows, k, run_seed):
            path = self.path_template.format(split=split_index, k=k)
            table, removed = drop_incomplete_rows(load_csv(path, self.schema))
            if removed:
                log.warning("%s: dropped %d incomplete rows", path, removed)
            return table

        return generate

    def describe(self) -> dict:
        return {"name": self.name, "type": self.kind, "path_template": self.path_template}


# -- protocol -----------------------------------------------------------------

@dataclass
class ProtocolConfig:
    generators: list = field(default_factory=list)
    n_splits: int = 5
    n_synth: int = 5
    train_fraction: float = 0.7
    base_seed: int = 0
    synth_rows: int | None = None
    fidelity: bool = True
    detection: bool = True
    privacy: bool = True
    utility: bool = True
    target: str | None = None
    rounds: int = 50
    percentile: float = 5.0
    parallelism: int = 1
    fidelity_vs_train: bool = True

    def __post_init__(self):
        if self.n_splits < 1 or self.n_synth < 1:
            raise ValueError("n_splits and n_synth must be >= 1")
        names = [g.name for g in self.generators]
        if len(set(names)) != len(names):
            raise ValueError("generator names must be unique")

    def describe(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "generators"}
        d["generators"] = [g.describe() for g in self.generators]
        return d


@dataclass(frozen=True)
class MetricCell:
    metric: str
    generator: str
    mean: float
    std: float
    n_runs: int
    against: str = "D_Test"

    @property
    def single_run(self) -> bool:
        return self.n_runs == 1


@dataclass
class BenchReport:
    generators: list[str]
    metrics: list[str]
    cells: list[MetricCell]
    reference: dict[str, MetricCell]
    train_cells: list[MetricCell]
    provenance: dict
    runs: list[dict] = field(default_factory=list)

    def cell(self, metric: str, generator: str, against: str | None = None) -> MetricCell | None:
        pool = self.train_cells if against == "D_Train" and ALL_METRICS[metric].block == "fidelity" else self.cells
        for c in pool:
            if c.metric == metric and c.generator == generator:
                return c
        return None


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFF for p in parts]).generate_state(1)[0])


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def _fidelity_values(real: DataTable, synth: DataTable, seed: int, detection: bool) -> dict[str, float]:
    return dict(fidelity.evaluate_fidelity(real, synth, seed=seed, detection=detection).summaries)


def _target(real: DataTable, config: ProtocolConfig) -> str | None:
    target = config.target or real.schema.target_column
    if config.utility and target is None:
        log.warning("no utility target configured; utility metrics disabled")
    return target if config.utility else None


def _evaluate_run(synth, train, test, config: ProtocolConfig, target, seed) -> tuple[dict, dict, list[str]]:
    values: dict[str, float] = {}
    train_values: dict[str, float] = {}
    errors = []

    def attempt(label: str, fn: Callable[[], Any]):
        try:
            return fn()
        except (ValueError, ArithmeticError) as exc:
            errors.append(f"{label}: {exc}")
            return None

    if config.fidelity:
        got = attempt("fidelity", lambda: _fidelity_values(test, synth, seed, config.detection))
        values.update(got or {})
        if config.fidelity_vs_train:
            got = attempt("fidelity_train", lambda: _fidelity_values(train, synth, seed, config.detection))
            train_values.update(got or {})
    if config.privacy:
        rep = attempt("privacy", lambda: privacy.evaluate_privacy(synth, train, config.percentile))
        if rep is not None:
            values["NewRowSynthesis"] = rep.new_row_rate
            values["DCR (5th p.)"] = rep.dcr_p5
            values["NNDR (5th p.)"] = rep.nndr_p5
            if rep.cap_score is not None:
                values["CategoricalCAP"] = rep.cap_score
    if target is not None:
        v = attempt("TSTR", lambda: learn.tstr(synth, test, train, target, config.rounds, seed))
        if v is not None:
            values["TSTR (F1 score)"] = v
        v = attempt("TATR", lambda: learn.tatr(train, synth, test, target, config.rounds, seed))
        if v is not None:
            values["TATR (F1 score)"] = v
    return values, train_values, errors


def reference_row(real: DataTable, config: ProtocolConfig) -> dict[str, MetricCell]:
    """Fidelity of D_Train against D_Test and train-on-real F1, per split."""
    target = _target(real, config)
    per_metric: dict[str, list[float]] = {}
    for s in range(1, config.n_splits + 1):
        train, test = split(real, config.train_fraction, config.base_seed + s)
        vals: dict[str, float] = {}
        if config.fidelity:
            vals.update(_fidelity_values(test, train, _seed(config.base_seed, s, 0), config.detection))
        if target is not None:
            vals["TSTR (F1 score)"] = learn.train_on(train, test, train, target, config.rounds, 0)
        for k, v in vals.items():
            per_metric.setdefault(k, []).append(v)
    out = {}
    for k, vs in per_metric.items():
        m, sd = aggregate(vs)
        out[k] = MetricCell(k, "D_Train (Ref.)", m, sd, len(vs), BLOCK_AGAINST[ALL_METRICS[k].block])
    return out


def run_protocol(real: DataTable, config: ProtocolConfig) -> BenchReport:
    if real.missing_mask().any():
        raise BenchError("the real table has missing values; drop incomplete rows first")
    if not config.generators:
        raise BenchError("no generators configured")
    target = _target(real, config)

    splits = []
    for s in range(1, config.n_splits + 1):
        train, test = split(real, config.train_fraction, config.base_seed + s)
        splits.append((s, train, test))

    fitted: dict[tuple[int, str], Any] = {}
    failures: list[dict] = []
    for s, train, _ in splits:
        for g in config.generators:
            try:
                fitted[(s, g.name)] = g.fit(train, s, _seed(config.base_seed, s, _name_key(g.name), 1))
            except (ValueError, RuntimeError, OSError) as exc:
                failures.append({"split": s, "k": None, "generator": g.name, "stage": "fit", "error": str(exc)})

    jobs = [
        (s, k, g.name)
        for s, _, _ in splits
        for g in config.generators
        for k in range(1, config.n_synth + 1)
        if (s, g.name) in fitted
    ]
    split_map = {s: (train, test) for s, train, test in splits}

    def run(job):
        s, k, gname = job
        train, test = split_map[s]
        seed = _seed(config.base_seed, s, k, _name_key(gname))
        n_rows = config.synth_rows or len(train)
        try:
            synth = fitted[(s, gname)](n_rows, k, seed)
        except (GenerationError, ValueError, RuntimeError, OSError) as exc:
            return job, None, None, [f"generation: {exc}"]
        values, train_values, errors = _evaluate_run(synth, train, test, config, target, seed)
        return job, values, train_values, errors

    if config.parallelism > 1:
        with ThreadPoolExecutor(config.parallelism) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    results.sort(key=lambda r: (r[0][0], r[0][1], [g.name for g in config.generators].index(r[0][2])))

    runs = []
    by_gen: dict[str, dict[str, list[float]]] = {g.name: {} for g in config.generators}
    by_gen_train: dict[str, dict[str, list[float]]] = {g.name: {} for g in config.generators}
    for (s, k, gname), values, train_values, errors in results:
        if values is None:
            failures.append({"split": s, "k": k, "generator": gname, "stage": "generate", "error": errors[0]})
            continue
        for e in errors:
            failures.append({"split": s, "k": k, "generator": gname, "stage": "evaluate", "error": e})
        runs.append({"split": s, "k": k, "generator": gname, "metrics": values, "metrics_vs_train": train_values})
        for name, v in values.items():
            by_gen[gname].setdefault(name, []).append(v)
        for name, v in train_values.items():
            by_gen_train[gname].setdefault(name, []).append(v)

    gen_names = [g.name for g in config.generators]
    ok = {r["generator"] for r in runs}
    dead = [g for g in gen_names if g not in ok]
    if dead:
        raise BenchError(f"every run failed for generator(s) {dead}: {failures[:3]}")

    metrics = [m for m in ALL_METRICS if any(m in by_gen[g] for g in gen_names)]
    cells, train_cells = [], []
    for name in metrics:
        for g in gen_names:
            vs = by_gen[g].get(name)
            if vs:
                m, sd = aggregate(vs)
                cells.append(MetricCell(name, g, m, sd, len(vs), BLOCK_AGAINST[ALL_METRICS[name].block]))
            tv = by_gen_train[g].get(name)
            if tv:
                m, sd = aggregate(tv)
                train_cells.append(MetricCell(name, g, m, sd, len(tv), "D_Train"))

    reference = reference_row(real, config)
    expected = config.n_splits * config.n_synth
    provenance = {
        "software": {"synthtab": __version__, "numpy": np.__version__, "python": platform.python_version()},
        "protocol": config.describe(),
        "split_seeds": [config.base_seed + s for s in range(1, config.n_splits + 1)],
        "real_rows": len(real),
        "runs_expected_per_generator": expected,
        "runs_per_generator": {g: sum(1 for r in runs if r["generator"] == g) for g in gen_names},
        "failures": failures,
        "privacy_against": "D_Train",
        "fidelity_against": "D_Test",
        "utility_against": "D_Test",
    }
    return BenchReport(gen_names, metrics, cells, reference, train_cells, provenance, runs)


# -- report rendering ---------------------------------------------------------

ARROW = {"up": " (↑)", "down": " (↓)", None: ""}


def _fmt(cell: MetricCell | None, digits: int = 3) -> str:
    if cell is None:
        return "-"
    text = f"{cell.mean:.{digits}f}±{cell.std:.{digits}f}"
    if cell.single_run:
        text += " (n=1)"
    return text


def rank_marks(values: dict[str, float], direction: str | None, digits: int = 3) -> dict[str, str]:
    """'best' / 'second' marks per generator; equal displayed values share a rank."""
    if direction is None or not values:
        return {}
    rounded = {g: round(v, digits) for g, v in values.items()}
    distinct = sorted(set(rounded.values()), reverse=(direction == "up"))
    marks = {}
    for g, v in rounded.items():
        if v == distinct[0]:
            marks[g] = "best"
        elif len(distinct) > 1 and v == distinct[1]:
            marks[g] = "second"
    return marks


def _decorate(text: str, mark: str | None) -> str:
    if mark == "best":
        return f"**{text}**"
    if mark == "second":
        return f"*{text}*"
    return text


def render_markdown(report: BenchReport, digits: int = 3) -> str:
    gens = report.generators
    lines = [
        "| Metric | D_Train (Ref.) | " + " | ".join(gens) + " |",
        "|---" * (len(gens) + 2) + "|",
    ]
    for block in ("fidelity", "privacy", "utility"):
        names = [m for m in report.metrics if ALL_METRICS[m].block == block]
        if not names:
            continue
        against = BLOCK_AGAINST[block]
        ref_label = against if block != "privacy" else ""
        lines.append(f"| **{block.capitalize()}** | {ref_label} | " + " | ".join(against for _ in gens) + " |")
        for name in names:
            info = ALL_METRICS[name]
            cells = {g: report.cell(name, g) for g in gens}
            marks = rank_marks({g: c.mean for g, c in cells.items() if c is not None}, info.direction, digits)
            row = [f"{name}{ARROW[info.direction]}", _fmt(report.reference.get(name), digits)]
            row += [_decorate(_fmt(cells[g], digits), marks.get(g)) for g in gens]
            lines.append("| " + " | ".join(row) + " |")
    text = "\n".join(lines) + "\n"

    if report.train_cells:
        head = ["| Metric | " + " | ".join(f"{g} D_Train | {g} D_Test" for g in gens) + " |",
                "|---" * (2 * len(gens) + 1) + "|"]
        rows = []
        for name in [m for m in report.metrics if ALL_METRICS[m].block == "fidelity"]:
            row = [f"{name}{ARROW[ALL_METRICS[name].direction]}"]
            for g in gens:
                row += [_fmt(report.cell(name, g, "D_Train"), digits), _fmt(report.cell(name, g), digits)]
            rows.append("| " + " | ".join(row) + " |")
        text += "\n### Fidelity against D_Train and D_Test\n\n" + "\n".join(head + rows) + "\n"
    return text


def _csv_num(x: float) -> str:
    return repr(float(x))


def emit_report(report: BenchReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"markdown": out / "report.md", "csv": out / "report.csv", "provenance": out / "provenance.json"}
    paths["markdown"].write_text(render_markdown(report), encoding="utf-8")
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "generator", "against", "mean", "std", "n_runs"])
        for c in report.reference.values():
            w.writerow([c.metric, c.generator, c.against, _csv_num(c.mean), _csv_num(c.std), c.n_runs])
        for c in report.cells + report.train_cells:
            w.writerow([c.metric, c.generator, c.against, _csv_num(c.mean), _csv_num(c.std), c.n_runs])
    paths["provenance"].write_text(json.dumps(report.provenance, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# -- plot data ----------------------------------------------------------------

def _safe(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in name)


def export_plot_data(
    real: DataTable, synth: DataTable, out_dir: str | Path, seed: int = 0, bins: int = fidelity.JSD_BINS,
    max_points: int = 2000,
) -> list[Path]:
    """Histogram / frequency CSVs per column and scatter CSVs per numeric pair."""
    if real.schema.names != synth.schema.names:
        raise ValueError("real and synthetic tables do not share a schema")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for col in real.schema.columns:
        if col.is_numeric:
            r, s = real[col.name], synth[col.name]
            lo, hi = float(min(r.min(), s.min())), float(max(r.max(), s.max()))
            if hi <= lo:
                hi = lo + 1.0
            rc, edges = np.histogram(r, bins=bins, range=(lo, hi))
            sc, _ = np.histogram(s, bins=bins, range=(lo, hi))
            path = out / f"hist_{_safe(col.name)}.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["bin_left", "bin_right", "real_count", "synth_count"])
                for i in range(bins):
                    w.writerow([repr(float(edges[i])), repr(float(edges[i + 1])), int(rc[i]), int(sc[i])])
        else:
            path = out / f"freq_{_safe(col.name)}.csv"
            rl, sl = list(real[col.name]), list(synth[col.name])
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["code", "label", "real_count", "synth_count", "real_freq", "synth_freq"])
                for code, label in col.categories:
                    a, b = rl.count(code), sl.count(code)
                    w.writerow([code, label, a, b, repr(a / len(rl)), repr(b / len(sl))])
        written.append(path)
    rng = np.random.default_rng(seed)
    pick_r = np.sort(rng.permutation(len(real))[:max_points])
    pick_s = np.sort(rng.permutation(len(synth))[:max_points])
    for a, b in itertools.combinations(real.schema.numeric_names, 2):
        path = out / f"scatter_{_safe(a)}__{_safe(b)}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["source", a, b])
            for src, table, pick in (("real", real, pick_r), ("synth", synth, pick_s)):
                for i in pick:
                    w.writerow([src, repr(float(table[a][i])), repr(float(table[b][i]))])
        written.append(path)
    return written


# -- ablation -----------------------------------------------------------------

ABLATION_COLUMNS = [
    ("Column shape", "Column Shapes"),
    ("Column pair trend", "Column Pair Trends"),
    ("KS Compl.", "KSComplement"),
    ("TV Compl.", "TVComplement"),
    ("Corr. Sim.", "CorrelationSimilarity"),
    ("Cont. Sim.", "ContingencySimilarity"),
]


@dataclass(frozen=True)
class AblationVariant:
    name: str
    model_id: str
    batch_rows: int
    include_examples: bool


def run_ablation(
    real: DataTable, config: ProtocolConfig, variants: Sequence[AblationVariant], make_binding: Callable[[AblationVariant], Any]
) -> tuple[BenchReport, str]:
    """Run the protocol once per prompt/model variant (fidelity only) and
    render the comparison table."""
    cfg = ProtocolConfig(**{**{k: getattr(config, k) for k in config.__dataclass_fields__}})
    cfg.generators = [make_binding(v) for v in variants]
    cfg.privacy = False
    cfg.utility = False
    cfg.detection = False
    cfg.fidelity_vs_train = False
    report = run_protocol(real, cfg)
    return report, render_ablation(report, variants)


def render_ablation(report: BenchReport, variants: Sequence[AblationVariant], digits: int = 2) -> str:
    head = ["Experience", "Model", "n", "Example row"] + [label for label, _ in ABLATION_COLUMNS]
    lines = ["| " + " | ".join(head) + " |", "|---" * len(head) + "|"]
    marks = {}
    for _, metric in ABLATION_COLUMNS:
        vals = {v.name: report.cell(metric, v.name).mean for v in variants if report.cell(metric, v.name)}
        marks[metric] = {g for g, m in rank_marks(vals, "up", digits).items() if m == "best"}
    for v in variants:
        row = [v.name, v.model_id, str(v.batch_rows), "✓" if v.include_examples else ""]
        for _, metric in ABLATION_COLUMNS:
            c = report.cell(metric, v.name)
            text = "-" if c is None else f"{c.mean:.{digits}f}"
            row.append(f"**{text}**" if v.name in marks[metric] else text)
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


# -- config files -------------------------------------------------------------

def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def binding_from_dict(d: dict, schema: TableSchema, base: Path):
    kind = d.get("type")
    name = d.get("name", kind)
    if kind == "copula":
        return CopulaBinding(name)
    if kind == "external_csv":
        return ExternalCSVBinding(name, schema, str(_resolve(base, d["path_template"])))
    if kind == "llm":
        desc, examples = load_description(_resolve(base, d["description"]))
        backend = d.get("backend", {})
        mock_spec = backend_cfg = None
        if backend.get("kind", "mock") == "mock":
            spec = backend.get("spec")
            if spec is None:
                spec = json.loads(_resolve(base, backend["spec_file"]).read_text(encoding="utf-8"))
            mock_spec = MockBackendSpec.from_dict(spec)
        else:
            fields = {k: v for k, v in backend.items() if k != "kind"}
            backend_cfg = BackendConfig(**fields)
        return LLMBinding(
            name,
            schema,
            desc,
            examples,
            batch_rows=int(d.get("batch_rows", 10)),
            include_examples=bool(d.get("include_examples", True)),
            backend_config=backend_cfg,
            mock_spec=mock_spec,
            max_retries=int(backend.get("max_retries", 3)),
            workers=int(d.get("workers", 1)),
        )
    raise ValueError(f"unknown generator type {kind!r}")


PROTOCOL_KEYS = {
    "n_splits", "n_synth", "train_fraction", "base_seed", "synth_rows", "fidelity", "detection", "privacy",
    "utility", "target", "rounds", "percentile", "parallelism", "fidelity_vs_train",
}


def load_protocol(path: str | Path, schema: TableSchema) -> tuple[ProtocolConfig, dict]:
    """Protocol config plus the raw JSON (for ablation settings)."""
    path = Path(path)
    raw = json.loads(path.read_text(encoding="utf-8"))
    base = path.parent
    unknown = set(raw) - PROTOCOL_KEYS - {"generators", "schema", "ablation", "metrics"}
    if unknown:
        raise ValueError(f"unknown protocol keys: {sorted(unknown)}")
    kwargs = {k: raw[k] for k in PROTOCOL_KEYS if k in raw}
    for k, v in (raw.get("metrics") or {}).items():
        if k not in ("fidelity", "detection", "privacy", "utility"):
            raise ValueError(f"unknown metric toggle {k!r}")
        kwargs[k] = bool(v)
    gens = [binding_from_dict(g, schema, base) for g in raw.get("generators", [])]
    return ProtocolConfig(generators=gens, **kwargs), raw


def ablation_from_dict(raw: dict, schema: TableSchema, base: Path) -> tuple[list[AblationVariant], Callable]:
    spec = raw["ablation"]
    variants = [
        AblationVariant(v["name"], v.get("model_id", "mock"), int(v.get("batch_rows", 10)), bool(v.get("include_examples", False)))
        for v in spec["variants"]
    ]
    template = dict(spec["generator"])

    def make(v: AblationVariant):
        d = dict(template)
        d.update(name=v.name, type="llm", batch_rows=v.batch_rows, include_examples=v.include_examples)
        backend = dict(d.get("backend", {"kind": "mock"}))
        if backend.get("kind", "mock") != "mock":
            backend["model_id"] = v.model_id
        d["backend"] = backend
        return binding_from_dict(d, schema, base)

    return variants, make


def expected_runs(config: ProtocolConfig) -> int:
    return config.n_splits * config.n_synth * len(config.generators)

