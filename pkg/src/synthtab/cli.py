"""Command-line entry point.

Exit codes: 0 success, 1 validation or configuration error, 2 runtime or
backend failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, bench, copula, fidelity, learn, privacy
from .llm import (
    BackendConfig,
    ConfigurationError,
    GenerationConfig,
    GenerationError,
    HttpBackend,
    MockBackend,
    MockBackendSpec,
    TransportError,
    generate_dataset,
)
from .prompt import load_description
from .schema import DataTable, SchemaError, drop_incomplete_rows, load_csv, load_schema, write_csv

log = logging.getLogger("synthtab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
DEFAULT_KEY_VAR = "OPENAI_API_KEY"


class UsageError(Exception):
    pass


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sub_seed(seed: int, component: str) -> int:
    return int(np.random.SeedSequence([seed, sum(component.encode())]).generate_state(1)[0])


def _load_complete(path, schema) -> DataTable:
    table, removed = drop_incomplete_rows(load_csv(path, schema))
    if removed:
        log.warning("%s: excluded %d rows with missing values", path, removed)
    return table


# -- subcommands --------------------------------------------------------------

def cmd_schema_validate(args) -> int:
    report = {"schema": str(args.schema), "valid": True, "errors": []}
    try:
        schema = load_schema(args.schema)
    except (SchemaError, KeyError, TypeError, json.JSONDecodeError) as exc:
        report["valid"] = False
        report["errors"].append({"where": "schema", "message": str(exc)})
        print(json.dumps(report, indent=2))
        return EXIT_CONFIG
    if args.data:
        try:
            table = load_csv(args.data, schema)
        except SchemaError as exc:
            report["valid"] = False
            report["errors"].append({"where": "data", "message": str(exc)})
            print(json.dumps(report, indent=2))
            return EXIT_CONFIG
        n = len(table)
        miss = {}
        for col in schema.columns:
            arr = table[col.name]
            k = int(np.isnan(arr).sum()) if col.is_numeric else sum(v is None for v in arr)
            miss[col.name] = k / n if n else 0.0
        report["rows"] = n
        report["missingness"] = miss
        report["complete_rows"] = int((~table.missing_mask()).sum())
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _make_backend(args):
    if args.backend == "mock":
        if not args.mock_spec:
            raise UsageError("--backend mock needs --mock-spec")
        spec = MockBackendSpec.from_dict(json.loads(Path(args.mock_spec).read_text(encoding="utf-8")))
        return MockBackend(spec, max_retries=args.max_retries)
    cfg = BackendConfig(
        endpoint_url=args.endpoint,
        model_id=args.model,
        temperature=args.temperature,
        max_retries=args.max_retries,
        auth_env_var=args.api_key_env or None,
        request_timeout=args.timeout,
    )
    backend = HttpBackend(cfg)
    backend.check()
    return backend


def cmd_generate(args) -> int:
    schema = load_schema(args.schema)
    desc, examples = load_description(args.description)
    gen = GenerationConfig(
        total_rows=args.n_total,
        batch_rows=args.n_batch,
        seed=args.seed,
        include_examples=args.with_example,
        workers=args.workers,
    )
    backend = _make_backend(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = out.with_suffix(".log.json")
    try:
        result = generate_dataset(backend, desc, schema, gen, examples)
    except GenerationError as exc:
        partial = Path(str(out) + ".partial")
        write_csv(DataTable.from_rows(schema, exc.rows), partial)
        _write_json(log_path, {**exc.log_data, "error": str(exc), "partial_rows": len(exc.rows)})
        log.error("%s; %d rows saved to %s", exc, len(exc.rows), partial)
        return EXIT_RUNTIME
    write_csv(result.table, out)
    meta = {"backend": backend.describe(), "synthtab": __version__, **result.log}
    _write_json(log_path, meta)
    log.info("wrote %d rows to %s (%d batches)", len(result.table), out, result.log["n_batches"])
    return EXIT_OK


def cmd_baseline(args) -> int:
    schema = load_schema(args.schema)
    if args.action == "fit":
        train = _load_complete(args.train, schema)
        model = copula.fit(train, seed=_sub_seed(args.seed, "copula-fit"))
        model.save(args.out)
        log.info("fitted copula on %d rows -> %s", len(train), args.out)
    else:
        model = copula.CopulaModel.load(args.model)
        table = copula.sample(model, args.n, args.seed, schema)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_csv(table, args.out)
        log.info("sampled %d rows -> %s", len(table), args.out)
    return EXIT_OK


def _header(path) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


METRIC_GROUPS = ("fidelity", "detection", "privacy", "utility")


def cmd_evaluate(args) -> int:
    schema = load_schema(args.schema)
    groups = [g.strip() for g in args.metrics.split(",") if g.strip()]
    for g in groups:
        if g not in METRIC_GROUPS:
            raise UsageError(f"unknown metric group {g!r}; choose from {', '.join(METRIC_GROUPS)}")
    needs_train = [g for g in groups if g in ("privacy", "utility")]
    if needs_train and not args.train:
        raise UsageError(
            f"{', '.join(needs_train)} metrics need --train: privacy is measured between the synthetic "
            "data and the training data it may have been exposed to, and utility labels use the "
            "training median"
        )
    real_h, synth_h = _header(args.real), _header(args.synth)
    if real_h != synth_h:
        for a, b in zip(real_h + [None] * len(synth_h), synth_h + [None] * len(real_h)):
            if a != b:
                raise UsageError(f"schemas of --real and --synth differ at column {a or b}")
    real = _load_complete(args.real, schema)
    synth = _load_complete(args.synth, schema)
    train = _load_complete(args.train, schema) if args.train else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = {}
    if "fidelity" in groups or "detection" in groups:
        rep = fidelity.evaluate_fidelity(real, synth, seed=_sub_seed(args.seed, "detection"),
                                         detection="detection" in groups)
        if "fidelity" not in groups:
            rep.summaries = {"LogisticDetection": rep.summaries["LogisticDetection"]}
            rep.column_scores, rep.pair_scores = [], []
        rep.write_json(out / "fidelity.json")
        rep.write_csv(out / "fidelity.csv")
        result["fidelity"] = rep.summaries
    if "privacy" in groups:
        prep = privacy.evaluate_privacy(synth, train, args.percentile)
        prep.write_json(out / "privacy.json")
        result["privacy"] = prep.to_dict()
    if "utility" in groups:
        target = args.target or schema.target_column
        if target is None:
            raise UsageError("utility metrics need a target column (--target or schema target_column)")
        util = {
            "target": target,
            "rounds": args.rounds,
            "TSTR": learn.tstr(synth, real, train, target, args.rounds),
            "TATR": learn.tatr(train, synth, real, target, args.rounds),
            "train_on_real": learn.train_on(train, real, train, target, args.rounds),
        }
        _write_json(out / "utility.json", util)
        result["utility"] = util
    if args.plots:
        bench.export_plot_data(real, synth, out / "plots", seed=_sub_seed(args.seed, "plots"))
    _write_json(out / "provenance.json", {
        "synthtab": __version__,
        "real": str(args.real), "synth": str(args.synth), "train": str(args.train) if args.train else None,
        "metrics": groups, "seed": args.seed, "percentile": args.percentile,
    })
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def _bench_inputs(args):
    raw = json.loads(Path(args.config).read_text(encoding="utf-8"))
    schema_path = args.schema or raw.get("schema")
    if not schema_path:
        raise UsageError("no schema: pass --schema or set 'schema' in the config")
    schema_path = Path(schema_path)
    if not args.schema and not schema_path.is_absolute():
        schema_path = Path(args.config).parent / schema_path
    schema = load_schema(schema_path)
    config, raw = bench.load_protocol(args.config, schema)
    if args.seed is not None:
        config.base_seed = args.seed
    real = _load_complete(args.real, schema)
    return schema, config, raw, real


def cmd_benchmark(args) -> int:
    schema, config, raw, real = _bench_inputs(args)
    report = bench.run_protocol(real, config)
    paths = bench.emit_report(report, args.out)
    print(paths["markdown"].read_text(encoding="utf-8"))
    return EXIT_OK


def cmd_ablate(args) -> int:
    schema, config, raw, real = _bench_inputs(args)
    if "ablation" not in raw:
        raise UsageError("config has no 'ablation' section")
    variants, make = bench.ablation_from_dict(raw, schema, Path(args.config).parent)
    report, table = bench.run_ablation(real, config, variants, make)
    paths = bench.emit_report(report, args.out)
    (Path(args.out) / "ablation.md").write_text(table, encoding="utf-8")
    print(table)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="synthtab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("schema-validate", help="check a schema file and optionally a CSV against it")
    s.add_argument("--schema", required=True)
    s.add_argument("--data")
    s.set_defaults(func=cmd_schema_validate)

    s = sub.add_parser("generate", help="text-to-tabular generation through a chat-completion backend")
    s.add_argument("--schema", required=True)
    s.add_argument("--description", required=True)
    s.add_argument("--n-total", type=int, required=True)
    s.add_argument("--n-batch", type=int, default=10)
    s.add_argument("--model", default="gpt-4-turbo-2024-04-09")
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--with-example", dest="with_example", action="store_true", default=True)
    s.add_argument("--no-example", dest="with_example", action="store_false")
    s.add_argument("--backend", choices=["http", "mock"], default="http")
    s.add_argument("--mock-spec")
    s.add_argument("--endpoint", default="https://api.openai.com/v1/chat/completions")
    s.add_argument("--api-key-env", default=DEFAULT_KEY_VAR)
    s.add_argument("--max-retries", type=int, default=3)
    s.add_argument("--timeout", type=float, default=120.0)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("baseline", help="fit or sample the Gaussian-copula baseline")
    s.add_argument("action", choices=["fit", "sample"])
    s.add_argument("--schema", required=True)
    s.add_argument("--train", help="training CSV (fit)")
    s.add_argument("--model", help="model JSON (sample)")
    s.add_argument("--n", type=int, default=1000, help="rows to sample")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("evaluate", help="fidelity / privacy / utility of one synthetic table")
    s.add_argument("--real", required=True, help="real reference table (D_Test)")
    s.add_argument("--synth", required=True)
    s.add_argument("--schema", required=True)
    s.add_argument("--train", help="real training table (D_Train)")
    s.add_argument("--metrics", default="fidelity,detection")
    s.add_argument("--target")
    s.add_argument("--rounds", type=int, default=50)
    s.add_argument("--percentile", type=float, default=5.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--plots", action="store_true", help="export plot data CSVs")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_evaluate)

    for name, func, text in (
        ("benchmark", cmd_benchmark, "run the repeated split / generate / evaluate protocol"),
        ("ablate", cmd_ablate, "compare prompt and model variants of the text-to-tabular generator"),
    ):
        s = sub.add_parser(name, help=text)
        s.add_argument("--real", required=True)
        s.add_argument("--config", required=True)
        s.add_argument("--schema")
        s.add_argument("--seed", type=int)
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    level = logging.WARNING - 10 * min(args.verbose, 2) if args.verbose else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return args.func(args)
    except (UsageError, SchemaError, ConfigurationError, KeyError, json.JSONDecodeError, FileNotFoundError) as exc:
        log.error("%s", exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        log.error("%s", exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (GenerationError, TransportError, bench.BenchError, OSError, RuntimeError) as exc:
        log.error("%s", exc)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
