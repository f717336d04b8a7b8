"""Sparse counterfactual explanations for ordinal classifiers."""

from .model import (
    MlpModel, TrainConfig, forward_probs, predict_class, cross_entropy,
    input_gradient, train, save_model, load_model,
)
from .solver import CfProblem, SolverConfig, DenseSolution, objective, solve_gd
from .sparsity import (
    SparsityConfig, CandidateSolution, SparsityResult, relative_change,
    build_candidates, run_sparsity, run_gradient_descent, select_final,
)
from .synth import SynthConfig, generate
from .ingest import (
    RatingScale, Scaler, TabularDataset, MaskSpec, load_table, write_table,
    build_mask, fit_scaler, rating_to_ordinal, ordinal_to_rating,
)

__all__ = [
    "MlpModel",
    "TrainConfig",
    "forward_probs",
    "predict_class",
    "cross_entropy",
    "input_gradient",
    "train",
    "save_model",
    "load_model",
    "CfProblem",
    "SolverConfig",
    "DenseSolution",
    "objective",
    "solve_gd",
    "SparsityConfig",
    "CandidateSolution",
    "SparsityResult",
    "relative_change",
    "build_candidates",
    "run_sparsity",
    "run_gradient_descent",
    "select_final",
    "SynthConfig",
    "generate",
    "RatingScale",
    "Scaler",
    "TabularDataset",
    "MaskSpec",
    "load_table",
    "write_table",
    "build_mask",
    "fit_scaler",
    "rating_to_ordinal",
    "ordinal_to_rating",
]

__version__ = "0.1.0"
