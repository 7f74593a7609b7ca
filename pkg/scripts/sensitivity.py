"""Hyperparameter sensitivity of GmCN: alpha, gamma or depth, one report per value.

    python scripts/sensitivity.py --axis alpha --dataset cora --values 0.6 0.7 0.8 0.9
    python scripts/sensitivity.py --axis gamma --dataset citeseer --values 0.0001 0.0005 0.001 0.005
    python scripts/sensitivity.py --axis depth --dataset cora --values 2 3 4 --with-gcn
"""
import argparse
import logging

from gmcn.experiment import ExperimentConfig, sweep

# published GmCN means at 10% labels, for side-by-side printing
REFERENCE = {
    ("alpha", "cora"): {0.6: 78.45, 0.7: 80.06, 0.8: 83.07, 0.9: 82.66},
    ("alpha", "citeseer"): {0.6: 72.45, 0.7: 73.46, 0.8: 72.52, 0.9: 71.12},
    ("gamma", "citeseer"): {0.0001: 72.09, 0.0005: 72.50, 0.001: 72.76, 0.005: 72.85},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--axis", choices=("alpha", "gamma", "depth"), required=True)
    ap.add_argument("--values", nargs="+", type=float, required=True)
    ap.add_argument("--dataset", default="cora")
    ap.add_argument("--data-dir", default=None)
    ap.add_argument("--label-frac", type=float, default=0.1)
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--with-gcn", action="store_true", help="also run the GCN baseline at each value")
    ap.add_argument("--out", default="results/sensitivity/run.json")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    values = [int(v) for v in args.values] if args.axis == "depth" else args.values
    kinds = ("gmc", "gcn") if args.with_gcn else ("gmc",)
    ref = REFERENCE.get((args.axis, args.dataset), {})
    for kind in kinds:
        cfg = ExperimentConfig(dataset=args.dataset, data_dir=args.data_dir, label_fraction=args.label_frac,
                               runs=args.runs, layer_kind=kind, out=args.out)
        for v, r in zip(values, sweep(cfg, args.axis, values)):
            print(f"{args.axis}={v} {kind}: {100 * r.mean:.2f} +- {100 * r.std:.2f}"
                  f" (reference {ref.get(v, '-') if kind == 'gmc' else '-'})", flush=True)


if __name__ == "__main__":
    main()
