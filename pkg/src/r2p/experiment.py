"""Seeded multi-run benchmark: data, paired splits, every method, aggregated metrics."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .baselines import fit_cct, fit_ct_a, fit_ct_h
from .data import HteDataset, split_dataset, split_hte
from .datasets import CsvSchema, SyntheticSpec, gen_zero_effect_noise, generate, load_semisynthetic_csv
from .estimators import EstimatorConfig
from .metrics import evaluate
from .partition import PartitionConfig, r2p_hte_fit

METHODS = ("r2p", "ct-a", "ct-h", "cct")
DATASETS = ("synthetic-a", "synthetic-b", "null-effect", "csv")
CSV_COLUMNS = ("run", "method", "v_across", "v_in", "v_in_normalized", "n_subgroups", "ci_width", "coverage", "overlap", "pehe_root")
SUMMARY_METRICS = CSV_COLUMNS[2:]


class ConfigError(ValueError):
    pass


class RunFailure(RuntimeError):
    def __init__(self, run: int, cause: BaseException):
        super().__init__(f"run {run} failed: {cause}")
        self.run = run
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = "synthetic-a"
    methods: tuple = METHODS
    runs: int = 50
    base_seed: int = 0
    alpha: float = 0.05
    lam: float = 0.5
    gamma: float = 0.05
    beta_s: float = 0.8
    min_leaf: int = 10
    max_depth: Optional[int] = None
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    n_train: int = 300
    n_test: int = 1000
    stratify: bool = True
    noise_as_sd: bool = False
    csv_path: Optional[str] = None
    csv_schema: Optional[CsvSchema] = None
    test_fraction: float = 0.2
    ct_a_min_leaf: int = 20
    sig_level: float = 0.05
    out_dir: str = "results"
    format: str = "both"
    dump_trees: bool = False

    def validate(self) -> None:
        if self.dataset not in DATASETS:
            raise ConfigError(f"unknown dataset {self.dataset!r}; choose from {', '.join(DATASETS)}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}; choose from {', '.join(METHODS)}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.n_train < 4 or self.n_test < 1:
            raise ConfigError("n_train must be >= 4 and n_test >= 1")
        if self.format not in ("csv", "json", "both"):
            raise ConfigError("format must be csv, json or both")
        if self.dataset == "csv":
            if not self.csv_path or self.csv_schema is None:
                raise ConfigError("csv dataset needs --csv-path and a column schema")
            if self.csv_schema.tau is None:
                raise ConfigError("csv dataset needs a true-effect column for evaluation")
            if not 0 < self.test_fraction < 1:
                raise ConfigError("test_fraction must lie in (0, 1)")
        try:
            self.partition_config(0)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def partition_config(self, seed: int) -> PartitionConfig:
        return PartitionConfig(alpha=self.alpha, lam=self.lam, gamma=self.gamma, beta_s=self.beta_s,
                               min_leaf=self.min_leaf, max_depth=self.max_depth, seed=seed, stratify=self.stratify)


@dataclass
class ExperimentReport:
    per_run: list  # (run, method, RunMetrics)
    aggregate: dict
    trees: dict = field(default_factory=dict)  # (method, run) -> JSON-able dict


def load_data(cfg: ExperimentConfig, seed: int, _cache: dict = {}) -> tuple[HteDataset, HteDataset]:
    if cfg.dataset == "synthetic-a":
        return generate(SyntheticSpec("A", cfg.n_train, cfg.n_test, seed, cfg.noise_as_sd))
    if cfg.dataset == "synthetic-b":
        return generate(SyntheticSpec("B", cfg.n_train, cfg.n_test, seed, cfg.noise_as_sd))
    if cfg.dataset == "null-effect":
        full = gen_zero_effect_noise(cfg.n_train + cfg.n_test, seed)
        idx = np.arange(full.n)
        return full.subset(idx[: cfg.n_train]), full.subset(idx[cfg.n_train :])
    key = (cfg.csv_path, cfg.csv_schema)
    if key not in _cache:
        _cache[key] = load_semisynthetic_csv(cfg.csv_path, cfg.csv_schema)
    full = _cache[key]
    sp = split_dataset(full.n, 1.0 - cfg.test_fraction, seed)
    return full.subset(sp.train_idx), full.subset(sp.calib_idx)


def run_once(cfg: ExperimentConfig, run: int):
    seed = cfg.base_seed + run
    train, test = load_data(cfg, seed)
    pcfg = cfg.partition_config(seed)
    # one split shared by every method that needs one
    split = split_hte(train, 0.5, seed, cfg.stratify)
    tau = test.truth.tau
    rows, trees = [], {}
    for method in cfg.methods:
        if method == "r2p":
            tree = r2p_hte_fit(train, cfg.estimator, pcfg, split=split)
            leaf, est, lo, hi = tree.predict_intervals(test.covariates)
            m0, m1 = tree.estimator.predict_arms(test.covariates)
            metrics = evaluate(leaf, est, lo, hi, tau, tree.n_leaves, mu_hat=(m1, m0))
            dump = tree.to_dict("r2p")
        else:
            if method == "ct-a":
                tree = fit_ct_a(train, cfg.ct_a_min_leaf, cfg.sig_level, cfg.alpha, cfg.max_depth)
            elif method == "ct-h":
                tree = fit_ct_h(train, cfg.min_leaf, cfg.sig_level, seed, cfg.alpha, cfg.max_depth, split=split)
            else:
                tree = fit_cct(train, cfg.min_leaf, cfg.sig_level, cfg.alpha, seed, cfg.max_depth, split=split)
            leaf, est, lo, hi = tree.predict_intervals(test.covariates)
            metrics = evaluate(leaf, est, lo, hi, tau, tree.n_leaves)
            dump = tree.to_dict()
        rows.append((run, method, metrics))
        trees[(method, run)] = dump
    return rows, trees


def aggregate(per_run: list, methods) -> dict:
    out = {}
    for method in methods:
        out[method] = {}
        for name in SUMMARY_METRICS:
            vals = np.array([getattr(m, name) for _, meth, m in per_run if meth == method], dtype=float)
            fin = vals[np.isfinite(vals)]
            mean = float(fin.mean()) if fin.size else None
            stderr = float(fin.std(ddof=1) / math.sqrt(fin.size)) if fin.size > 1 else None
            out[method][name] = {"mean": mean, "stderr": stderr, "n_finite": int(fin.size)}
    return out


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    cfg.validate()
    per_run, trees = [], {}
    for r in range(cfg.runs):
        try:
            rows, t = run_once(cfg, r)
        except ConfigError:
            raise
        except Exception as e:
            raise RunFailure(r, e) from e
        per_run.extend(rows)
        trees.update(t)
    return ExperimentReport(per_run, aggregate(per_run, cfg.methods), trees)


def _cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return repr(v) if math.isfinite(v) else ""


def runs_csv(report: ExperimentReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for run, method, m in report.per_run:
        w.writerow([run, method] + [_cell(getattr(m, c)) for c in SUMMARY_METRICS])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else None)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def summary_json(report: ExperimentReport) -> str:
    return json.dumps(_json_safe(report.aggregate), indent=2, sort_keys=True) + "\n"


def emit_reports(report: ExperimentReport, out_dir, fmt: str = "both", dump_trees: bool = False) -> list:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        p = out / "runs.csv"
        p.write_text(runs_csv(report), encoding="utf-8")
        written.append(p)
    if fmt in ("json", "both"):
        p = out / "summary.json"
        p.write_text(summary_json(report), encoding="utf-8")
        written.append(p)
    if dump_trees:
        for (method, run), tree in sorted(report.trees.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            p = out / f"tree_{method}_{run}.json"
            p.write_text(json.dumps(_json_safe(tree), indent=2) + "\n", encoding="utf-8")
            written.append(p)
    return written


def summary_from_runs_csv(text: str) -> dict:
    """Recompute the aggregate from a runs.csv document."""
    rows = list(csv.DictReader(io.StringIO(text)))
    methods = list(dict.fromkeys(r["method"] for r in rows))
    out = {}
    for method in methods:
        out[method] = {}
        for name in SUMMARY_METRICS:
            vals = np.array([float(r[name]) for r in rows if r["method"] == method and r[name] != ""], dtype=float)
            vals = vals[np.isfinite(vals)]
            out[method][name] = {
                "mean": float(vals.mean()) if vals.size else None,
                "stderr": float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else None,
                "n_finite": int(vals.size),
            }
    return out
