"""GmCN vs GCN on Cora/Citeseer at 10/20/30% labels, five runs each.

Writes one report per (dataset, fraction, model) plus ``benchmark.csv``
comparing the means with the published reference accuracies.

    python scripts/citation_benchmark.py --data-dir data --out-dir results/benchmark
"""
import argparse
import csv
import logging
from dataclasses import replace
from pathlib import Path

from gmcn.experiment import ExperimentConfig, run_experiment

REFERENCE = {
    ("cora", "gmc"): (83.07, 85.70, 87.29),
    ("cora", "gcn"): (80.23, 84.28, 85.53),
    ("citeseer", "gmc"): (72.30, 74.13, 74.92),
    ("citeseer", "gcn"): (71.49, 72.99, 74.31),
}
FRACTIONS = (0.1, 0.2, 0.3)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--datasets", nargs="+", default=["cora", "citeseer"])
    ap.add_argument("--fractions", nargs="+", type=float, default=list(FRACTIONS))
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out-dir", default="results/benchmark")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in args.datasets:
        for frac in args.fractions:
            for kind in ("gmc", "gcn"):
                cfg = ExperimentConfig(dataset=name, data_dir=args.data_dir, layer_kind=kind, label_fraction=frac,
                                       runs=args.runs, seed=args.seed)
                cfg = replace(cfg, out=str(out / f"{name}-{int(round(frac * 100))}-{kind}.json"))
                report = run_experiment(cfg)
                ref = dict(zip(FRACTIONS, REFERENCE.get((name, kind), ()))).get(frac)
                mean, std = 100 * report.mean, 100 * report.std
                rows.append([name, frac, kind, f"{mean:.2f}", f"{std:.2f}", ref,
                             None if ref is None else f"{mean - ref:+.2f}", f"{report.wall_clock:.0f}"])
                print(f"{name} {frac:.0%} {kind}: {mean:.2f} +- {std:.2f} (reference {ref})", flush=True)
    with (out / "benchmark.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "label_fraction", "model", "mean", "std", "reference", "delta", "seconds"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
