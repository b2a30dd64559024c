"""Trained-model containers: binary classifiers, the one-vs-one ensemble,
and the versioned JSON artifact they persist to.

Privileged vectors steer training only. A stored model carries nothing
derived from them except the fitted multipliers, so inference cannot
depend on privileged data even by accident.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ArtifactError, DimensionError, InputError
from .kernels import KernelConfig, gaussian_cross
from .smo import DualSolution, SmoConfig, SvmPlusProblem, solve_svm, solve_svmplus

MODEL_FORMAT_VERSION = 1
TIE_BREAK_POLICY = "margin-sum-then-class-order"


@dataclass
class Standardizer:
    """Per-feature z-score parameters fitted on a training subset."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        std = np.where(std == 0, 1.0, std)
        return cls(mean=X.mean(axis=0), std=std)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != len(self.mean):
            raise DimensionError(
                f"expected {len(self.mean)} features, got {X.shape[-1]}")
        return (X - self.mean) / self.std


@dataclass
class BinaryModel:
    """One pairwise classifier: multipliers, bias, kernel and scaling stats."""

    class_pair: tuple[int, int]  # (z_pos, z_neg): +1 maps to the first entry
    alpha: np.ndarray
    beta: np.ndarray
    b: float
    y: np.ndarray
    X: np.ndarray  # standardized training rows (support coefficients index these)
    kernel: KernelConfig
    x_scaler: Standardizer
    xstar_scaler: Optional[Standardizer]
    converged: bool = True
    iterations: int = 0

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > 0)


def decision_values(model: BinaryModel, X: np.ndarray) -> np.ndarray:
    """Raw decision function sum_i alpha_i y_i K(x_i, x) + b for raw-unit rows X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Z = model.x_scaler.apply(X)
    Kxz = gaussian_cross(model.X, Z, model.kernel.lam)
    return (model.alpha * model.y) @ Kxz + model.b


def decision_value(model: BinaryModel, x: np.ndarray) -> float:
    return float(decision_values(model, np.atleast_2d(x))[0])


def predict_binary(model: BinaryModel, X: np.ndarray) -> np.ndarray:
    """Signs of the decision values; zero maps to +1."""
    vals = decision_values(model, X)
    return np.where(vals >= 0, 1, -1)


def _fit_pair(X, X_star, y_signed, C, gamma, kernel, smo, use_privileged) -> DualSolution:
    if use_privileged:
        problem = SvmPlusProblem(X=X, X_star=X_star, y=y_signed, C=C, gamma=gamma, kernel=kernel)
        return solve_svmplus(problem, smo)
    return solve_svm(X, y_signed, C, kernel, smo)


@dataclass
class TrainedModel:
    """One-vs-one ensemble over the style classes."""

    scenario: str
    classes: tuple[int, ...]
    classifiers: list[BinaryModel]
    tie_break: str = TIE_BREAK_POLICY
    provenance: dict = field(default_factory=dict)


def train_ovo(
    features: np.ndarray,
    privileged: Optional[np.ndarray],
    labels: np.ndarray,
    C: float,
    gamma: float,
    kernel: KernelConfig,
    smo: SmoConfig | None = None,
    scenario: str = "",
    provenance: Optional[dict] = None,
) -> TrainedModel:
    """Train one binary classifier per unordered class pair.

    Decision features and privileged vectors are z-scored per pair on
    that pair's training rows only. privileged=None trains the plain
    SVM baseline with the same interface.
    """
    X = np.asarray(features, dtype=float)
    labels = np.asarray(labels, dtype=int)
    classes = tuple(sorted(np.unique(labels).tolist()))
    if len(classes) < 2:
        raise InputError("need at least two classes to train")
    for c in classes:
        if np.sum(labels == c) < 2:
            raise InputError(f"class {c} has fewer than 2 samples")
    if privileged is not None:
        privileged = np.asarray(privileged, dtype=float)
        if len(privileged) != len(X):
            raise InputError("need one privileged vector per training segment")

    classifiers = []
    for z_pos, z_neg in combinations(classes, 2):
        mask = (labels == z_pos) | (labels == z_neg)
        y_signed = np.where(labels[mask] == z_pos, 1.0, -1.0)
        x_scaler = Standardizer.fit(X[mask])
        Xp = x_scaler.apply(X[mask])
        if privileged is not None:
            xstar_scaler = Standardizer.fit(privileged[mask])
            Xsp = xstar_scaler.apply(privileged[mask])
        else:
            xstar_scaler, Xsp = None, None
        sol = _fit_pair(Xp, Xsp, y_signed, C, gamma, kernel, smo, privileged is not None)
        classifiers.append(BinaryModel(
            class_pair=(z_pos, z_neg),
            alpha=sol.alpha,
            beta=sol.beta,
            b=sol.b,
            y=y_signed,
            X=Xp,
            kernel=kernel,
            x_scaler=x_scaler,
            xstar_scaler=xstar_scaler,
            converged=sol.converged,
            iterations=sol.iterations,
        ))
    return TrainedModel(
        scenario=scenario,
        classes=classes,
        classifiers=classifiers,
        provenance=provenance or {},
    )


def predict_multiclass(model: TrainedModel, X: np.ndarray) -> np.ndarray:
    """Majority vote over pairwise classifiers.

    Ties are broken by the largest sum of |decision value| over the
    classifiers that voted for each tied class, then by class order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = len(X)
    classes = model.classes
    votes = {c: np.zeros(n, dtype=int) for c in classes}
    margin = {c: np.zeros(n, dtype=float) for c in classes}
    for clf in model.classifiers:
        vals = decision_values(clf, X)
        z_pos, z_neg = clf.class_pair
        won_pos = vals >= 0
        votes[z_pos] += won_pos
        votes[z_neg] += ~won_pos
        margin[z_pos] += np.where(won_pos, np.abs(vals), 0.0)
        margin[z_neg] += np.where(won_pos, 0.0, np.abs(vals))

    out = np.empty(n, dtype=int)
    for r in range(n):
        best_votes = max(votes[c][r] for c in classes)
        tied = [c for c in classes if votes[c][r] == best_votes]
        if len(tied) > 1:
            best_margin = max(margin[c][r] for c in tied)
            tied = [c for c in tied if margin[c][r] == best_margin]
        out[r] = min(tied)
    return out


def _array(values) -> list[float]:
    return [float(v) for v in np.asarray(values).ravel()]


def _standardizer_dict(s: Optional[Standardizer]) -> Optional[dict]:
    if s is None:
        return None
    return {"mean": _array(s.mean), "std": _array(s.std)}


def _standardizer_from(d: Optional[dict]) -> Optional[Standardizer]:
    if d is None:
        return None
    return Standardizer(mean=np.asarray(d["mean"]), std=np.asarray(d["std"]))


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "scenario": model.scenario,
        "classes": list(model.classes),
        "tie_break": model.tie_break,
        "provenance": model.provenance,
        "classifiers": [
            {
                "class_pair": list(clf.class_pair),
                "alpha": _array(clf.alpha),
                "beta": _array(clf.beta),
                "b": float(clf.b),
                "y": _array(clf.y),
                "support_x": [_array(row) for row in clf.X],
                "kernel": {
                    "family": clf.kernel.family,
                    "lam": clf.kernel.lam,
                    "lam_star": clf.kernel.lam_star,
                },
                "standardization": {
                    "x": _standardizer_dict(clf.x_scaler),
                    "x_star": _standardizer_dict(clf.xstar_scaler),
                },
                "converged": clf.converged,
                "iterations": clf.iterations,
            }
            for clf in model.classifiers
        ],
    }


def model_from_dict(data: dict) -> TrainedModel:
    version = data.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ArtifactError(f"unknown model format_version: {version!r}")
    classifiers = []
    for rec in data["classifiers"]:
        kernel = KernelConfig(
            lam=rec["kernel"]["lam"],
            lam_star=rec["kernel"]["lam_star"],
            family=rec["kernel"]["family"],
        )
        classifiers.append(BinaryModel(
            class_pair=tuple(rec["class_pair"]),
            alpha=np.asarray(rec["alpha"]),
            beta=np.asarray(rec["beta"]),
            b=rec["b"],
            y=np.asarray(rec["y"]),
            X=np.asarray(rec["support_x"], dtype=float),
            kernel=kernel,
            x_scaler=_standardizer_from(rec["standardization"]["x"]),
            xstar_scaler=_standardizer_from(rec["standardization"]["x_star"]),
            converged=rec.get("converged", True),
            iterations=rec.get("iterations", 0),
        ))
    return TrainedModel(
        scenario=data.get("scenario", ""),
        classes=tuple(data["classes"]),
        classifiers=classifiers,
        tie_break=data.get("tie_break", TIE_BREAK_POLICY),
        provenance=data.get("provenance", {}),
    )


def save_model(path: str | Path, model: TrainedModel) -> str:
    """Write the model artifact; returns its content digest."""
    payload = json.dumps(model_to_dict(model), sort_keys=True)
    Path(path).write_text(payload + "\n", encoding="utf-8")
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def load_model(path: str | Path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
