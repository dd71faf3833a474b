"""Robust recursive partitioning with conformal intervals for subgroup discovery."""

from .baselines import CausalTree, fit_cct, fit_ct_a, fit_ct_h
from .conformal import ArmCalibrations, ConformalCalibration, Interval, calibrate, residual_quantile
from .data import DataSplit, GroundTruth, HteDataset, RegressionDataset, split_dataset, split_hte
from .datasets import CsvSchema, SyntheticSpec, gen_synthetic_a, gen_synthetic_b, generate, load_semisynthetic_csv
from .estimators import EstimatorConfig, TLearner, fit_ite_t_learner, fit_outcome
from .experiment import ExperimentConfig, ExperimentReport, emit_reports, run_experiment
from .metrics import RunMetrics, evaluate
from .partition import PartitionConfig, PartitionTree, SplitRule, predict_group, r2p_fit, r2p_hte_fit

__all__ = [
    "ArmCalibrations", "CausalTree", "ConformalCalibration", "CsvSchema", "DataSplit", "EstimatorConfig",
    "ExperimentConfig", "ExperimentReport", "GroundTruth", "HteDataset", "Interval", "PartitionConfig",
    "PartitionTree", "RegressionDataset", "RunMetrics", "SplitRule", "SyntheticSpec", "TLearner",
    "calibrate", "emit_reports", "evaluate", "fit_cct", "fit_ct_a", "fit_ct_h", "fit_ite_t_learner",
    "fit_outcome", "gen_synthetic_a", "gen_synthetic_b", "generate", "load_semisynthetic_csv",
    "predict_group", "r2p_fit", "r2p_hte_fit", "residual_quantile", "run_experiment", "split_dataset",
    "split_hte",
]
