"""Command line entry point: ``gmcn {train,sweep,perturb,project-test}``.

Exit status is 0 on success, 2 for usage errors, 3 for configuration or
missing-file errors, 4 for invalid input data, 5 for numeric failures and
1 for test failures of ``project-test``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, GmcnError, NumericError, ParseError, ValidationError
from .experiment import SWEEP_AXES, ExperimentConfig, load_dataset, replay, run_experiment, sweep
from .graph import perturb_graph
from .mask import affine_project_step, oracle_affine_projection, project_mask

log = logging.getLogger("gmcn")

# flag name -> ExperimentConfig field
_FLAGS = {
    "dataset": str,
    "data_dir": str,
    "content": str,
    "cites": str,
    "layer_kind": str,
    "hidden": int,
    "depth": int,
    "alpha": float,
    "gamma": float,
    "epsilon": float,
    "outer_iters": int,
    "proj_iters": int,
    "agg_iters": int,
    "lr": float,
    "label_frac": float,
    "runs": int,
    "seed": int,
    "noise_p": float,
    "max_epochs": int,
    "patience": int,
    "dropout": float,
    "weight_decay": float,
    "mask_every": int,
    "synthetic_nodes": int,
    "synthetic_seed": int,
    "out": str,
}
_FIELD = {"content": "content_path", "cites": "cites_path", "lr": "learning_rate", "label_frac": "label_fraction"}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    d = ExperimentConfig()
    g = p.add_argument_group("experiment")
    for flag, typ in _FLAGS.items():
        name = _FIELD.get(flag, flag)
        kwargs = {"type": typ, "default": None, "help": f"default: {getattr(d, name)}"}
        if flag == "layer_kind":
            kwargs["choices"] = ("gmc", "gcn")
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, **kwargs)
    g.add_argument("--seeds", type=lambda s: [int(x) for x in s.split(",")], default=None,
                   help="comma-separated run seeds (overrides --seed)")
    g.add_argument("--no-row-normalize", dest="row_normalize", action="store_false", default=None)
    g.add_argument("--stratified", action="store_true", default=None)


def config_from_args(args, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Overlay explicitly given flags on ``base`` (defaults when None)."""
    changes = {}
    for flag in (*_FLAGS, "seeds", "row_normalize", "stratified"):
        value = getattr(args, flag, None)
        if value is not None:
            changes[_FIELD.get(flag, flag)] = value
    if "seeds" in changes:
        changes["seeds"] = tuple(changes["seeds"])
        changes.setdefault("runs", len(changes["seeds"]))
    elif "runs" in changes or "seed" in changes:
        changes["seeds"] = None
    return replace(base or ExperimentConfig(), **changes)


def _summary_line(report) -> str:
    cfg = report.config
    accs = " ".join(f"{a:.4f}" for a in report.accuracies)
    return (f"{report.dataset['name']} {cfg.layer_kind} depth={cfg.depth} label_frac={cfg.label_fraction} "
            f"noise_p={cfg.noise_p}: {100 * report.mean:.2f} +- {100 * report.std:.2f} "
            f"({len(report.accuracies)} runs: {accs}) in {report.wall_clock:.1f}s")


def cmd_train(args) -> int:
    if args.from_report:
        new, old = replay(args.from_report, out=args.out)
        print(_summary_line(new))
        same = new.accuracies == old["accuracies"]
        print(f"replay of {args.from_report}: per-run accuracies {'match' if same else 'DIFFER'}")
        return 0 if same else 1
    report = run_experiment(config_from_args(args))
    print(_summary_line(report))
    if report.config.out:
        print(f"report written to {report.config.out}")
    return 0


def _parse_values(axis: str, text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"could not parse sweep values {text!r}") from None
    return [int(v) if axis == "depth" and v.is_integer() else v for v in values]


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    reports = sweep(cfg, args.axis, _parse_values(args.axis, args.values))
    for r in reports:
        print(_summary_line(r))
    return 0


def cmd_perturb(args) -> int:
    cfg = config_from_args(args)
    ds = load_dataset(replace(cfg, row_normalize=False))
    noisy = perturb_graph(ds.adjacency, cfg.noise_p, cfg.seed)
    before = {tuple(e) for e in ds.adjacency.edge_list().tolist()}
    after = {tuple(e) for e in noisy.edge_list().tolist()}
    print(f"{ds.name}: p={cfg.noise_p} seed={cfg.seed} edges {len(before)} -> {len(after)} "
          f"(removed {len(before - after)}, added {len(after - before)})")
    if cfg.out:
        from .data import write_citation_dataset

        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        content, cites = out / f"{ds.name}.content", out / f"{ds.name}.cites"
        write_citation_dataset(ds.with_adjacency(noisy), content, cites)
        print(f"wrote {content} and {cites}")
    return 0


def cmd_project_test(args) -> int:
    """Check the affine projection against the KKT oracle on random matrices."""
    rng = np.random.default_rng(args.seed)
    worst_oracle = worst_sums = 0.0
    for _ in range(args.trials):
        n = int(rng.integers(2, 9))
        m = rng.normal(scale=10.0 ** rng.uniform(-2, 2), size=(n, n))
        out = affine_project_step(m)
        worst_oracle = max(worst_oracle, float(np.abs(out - oracle_affine_projection(m)).max()))
        worst_sums = max(worst_sums, float(np.abs(out.sum(0) - 1).max()), float(np.abs(out.sum(1) - 1).max()))
        if project_mask(m, 3).min() < 0:
            print("clamped projection produced a negative entry")
            return 1
    ok = worst_oracle <= args.tol and worst_sums <= args.tol
    print(f"{args.trials} matrices, n in 2..8: max |step - oracle| = {worst_oracle:.3e}, "
          f"max |row/col sum - 1| = {worst_sums:.3e} (tol {args.tol:g}) -> {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gmcn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and evaluate over several runs")
    _add_config_flags(p)
    p.add_argument("--from-report", help="rerun the config echoed in an existing report")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="one experiment per value of a hyperparameter")
    _add_config_flags(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("perturb", help="apply structural noise to a dataset and write it out")
    _add_config_flags(p)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("project-test", help="check the mask projection against its oracle")
    p.add_argument("--trials", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_project_test)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"gmcn: configuration error: {exc}", file=sys.stderr)
        return 3
    except (ParseError, ValidationError) as exc:
        print(f"gmcn: invalid input: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"gmcn: numeric failure: {exc}", file=sys.stderr)
        return 5
    except GmcnError as exc:
        print(f"gmcn: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
