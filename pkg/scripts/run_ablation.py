"""Prompt ablation on the mock backend: one-by-one vs. batched sampling,
with and without an example row.

    python3 scripts/run_ablation.py --out runs/ablation
"""

import argparse
import logging
from pathlib import Path

from synthtab import bench, fixtures
from synthtab.bench import AblationVariant, LLMBinding, ProtocolConfig

VARIANTS = [
    AblationVariant("E1", "mock", 1, False),
    AblationVariant("E2", "mock", 10, False),
    AblationVariant("E3", "mock", 1, True),
    AblationVariant("E4", "mock", 10, True),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=500)
    ap.add_argument("--splits", type=int, default=5)
    ap.add_argument("--synth", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", type=Path, default=Path("runs/ablation"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

    real = fixtures.oracle_table(args.rows, seed=args.seed)
    desc, examples = fixtures.ppmi_description()
    spec = fixtures.mock_spec("miscalibrated")

    def make(v):
        return LLMBinding(v.name, real.schema, desc, examples, batch_rows=v.batch_rows,
                          include_examples=v.include_examples, mock_spec=spec)

    config = ProtocolConfig(n_splits=args.splits, n_synth=args.synth, base_seed=args.seed, parallelism=4)
    report, table = bench.run_ablation(real, config, VARIANTS, make)
    bench.emit_report(report, args.out)
    (args.out / "ablation.md").write_text(table, encoding="utf-8")
    print(table)


if __name__ == "__main__":
    main()
