"""Kernel SVM with privileged information: SMO solvers, one-vs-one
ensembles, and cross-validated hyperparameter search."""

from .kernels import KernelConfig, gaussian_cross, gaussian_gram, gram, median_heuristic
from .model import (BinaryModel, Standardizer, TrainedModel, decision_value,
                    decision_values, load_model, model_from_dict, model_to_dict,
                    predict_binary, predict_multiclass, save_model, train_ovo)
from .search import (DEFAULT_HYPERPARAMS, CvDataset, GridSearchResult,
                     cross_validate_config, grid_search_cv, resolve_kernel,
                     stratified_folds)
from .smo import (DualSolution, SmoConfig, SmoHistory, SvmPlusProblem,
                  solve_svm, solve_svmplus, svm_objective, svmplus_objective)

__all__ = [
    "BinaryModel", "CvDataset", "DEFAULT_HYPERPARAMS", "DualSolution",
    "GridSearchResult", "KernelConfig", "SmoConfig", "SmoHistory",
    "Standardizer", "SvmPlusProblem", "TrainedModel", "cross_validate_config",
    "decision_value", "decision_values", "gaussian_cross", "gaussian_gram",
    "gram", "grid_search_cv", "load_model", "median_heuristic",
    "model_from_dict", "model_to_dict", "predict_binary", "predict_multiclass",
    "resolve_kernel", "save_model", "solve_svm", "solve_svmplus",
    "stratified_folds", "svm_objective", "svmplus_objective", "train_ovo",
]
