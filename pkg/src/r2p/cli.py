"""Command-line entry point: ``r2p-experiment`` / ``python -m r2p``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .datasets import CsvSchema
from .estimators import EstimatorConfig
from .experiment import METHODS, ConfigError, ExperimentConfig, RunFailure, emit_reports, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# flag dest -> default; the JSON config file may set any of these keys
DEFAULTS = {
    "dataset": "synthetic-a",
    "csv_path": None,
    "csv_covariates": None,
    "csv_treatment": "treatment",
    "csv_outcome": "outcome",
    "csv_tau": "tau",
    "test_fraction": 0.2,
    "methods": ",".join(METHODS),
    "runs": 50,
    "seed": 0,
    "alpha": 0.05,
    "lambda": 0.5,
    "gamma": 0.05,
    "beta_s": 0.8,
    "estimator": "gp",
    "knn_k": 10,
    "n_train": 300,
    "n_test": 1000,
    "max_depth": None,
    "min_leaf": 10,
    "out": "results",
    "format": "both",
    "dump_trees": False,
    "no_stratify": False,
    "noise_as_sd": False,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="r2p-experiment", description="Run seeded subgroup-discovery benchmarks.")
    S = argparse.SUPPRESS  # unset flags stay absent so the config file can fill them
    p.add_argument("--config", help="JSON file whose keys mirror the long flags")
    p.add_argument("--dataset", default=S, help="synthetic-a | synthetic-b | null-effect | csv | csv:<path>")
    p.add_argument("--csv-path", default=S)
    p.add_argument("--csv-covariates", default=S, help="comma-separated covariate columns")
    p.add_argument("--csv-treatment", default=S)
    p.add_argument("--csv-outcome", default=S)
    p.add_argument("--csv-tau", default=S)
    p.add_argument("--test-fraction", type=float, default=S)
    p.add_argument("--methods", default=S, help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--runs", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--alpha", type=float, default=S)
    p.add_argument("--lambda", type=float, default=S, dest="lambda")
    p.add_argument("--gamma", type=float, default=S)
    p.add_argument("--beta-s", type=float, default=S)
    p.add_argument("--estimator", choices=("knn", "ridge", "gp"), default=S)
    p.add_argument("--knn-k", type=int, default=S)
    p.add_argument("--n-train", type=int, default=S)
    p.add_argument("--n-test", type=int, default=S)
    p.add_argument("--max-depth", type=int, default=S)
    p.add_argument("--min-leaf", type=int, default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--format", choices=("csv", "json", "both"), default=S)
    p.add_argument("--dump-trees", action="store_true", default=S)
    p.add_argument("--no-stratify", action="store_true", default=S)
    p.add_argument("--noise-as-sd", action="store_true", default=S)
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_file(path: str) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    out = {}
    for key, value in raw.items():
        dest = key.lstrip("-").replace("-", "_")
        if dest not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        out[dest] = value
    return out


def _listify(value) -> tuple:
    if isinstance(value, str):
        return tuple(s.strip() for s in value.split(",") if s.strip())
    return tuple(value)


def resolve(argv=None) -> tuple[ExperimentConfig, bool]:
    ns = vars(build_parser().parse_args(argv))
    verbose = ns.pop("verbose", False)
    cfg_file = ns.pop("config", None)
    opts = dict(DEFAULTS)
    if cfg_file:
        opts.update(_load_file(cfg_file))
    opts.update(ns)

    dataset, csv_path = opts["dataset"], opts["csv_path"]
    if isinstance(dataset, str) and dataset.startswith("csv:"):
        dataset, csv_path = "csv", dataset[4:]
    schema = None
    if dataset == "csv":
        if not opts["csv_covariates"]:
            raise ConfigError("csv dataset needs --csv-covariates")
        try:
            schema = CsvSchema(_listify(opts["csv_covariates"]), opts["csv_treatment"], opts["csv_outcome"], opts["csv_tau"])
        except ValueError as e:
            raise ConfigError(str(e)) from None
    try:
        estimator = EstimatorConfig(kind=opts["estimator"], knn_k=int(opts["knn_k"]))
        cfg = ExperimentConfig(
            dataset=dataset,
            methods=_listify(opts["methods"]),
            runs=int(opts["runs"]),
            base_seed=int(opts["seed"]),
            alpha=float(opts["alpha"]),
            lam=float(opts["lambda"]),
            gamma=float(opts["gamma"]),
            beta_s=float(opts["beta_s"]),
            min_leaf=int(opts["min_leaf"]),
            max_depth=None if opts["max_depth"] is None else int(opts["max_depth"]),
            estimator=estimator,
            n_train=int(opts["n_train"]),
            n_test=int(opts["n_test"]),
            stratify=not opts["no_stratify"],
            noise_as_sd=bool(opts["noise_as_sd"]),
            csv_path=csv_path,
            csv_schema=schema,
            test_fraction=float(opts["test_fraction"]),
            out_dir=str(opts["out"]),
            format=opts["format"],
            dump_trees=bool(opts["dump_trees"]),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    cfg.validate()
    return cfg, verbose


def main(argv=None) -> int:
    try:
        cfg, verbose = resolve(argv)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    try:
        report = run_experiment(cfg)
        written = emit_reports(report, cfg.out_dir, cfg.format, cfg.dump_trees)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RunFailure as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
