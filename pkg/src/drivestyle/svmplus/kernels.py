"""Gaussian kernels for decision and privileged feature spaces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, InputError


@dataclass(frozen=True)
class KernelConfig:
    """Widths of the decision (lam) and privileged (lam_star) Gaussian kernels."""

    lam: float
    lam_star: float = 1.0
    family: str = "gaussian"

    def __post_init__(self):
        if self.family != "gaussian":
            raise ConfigError(f"unsupported kernel family '{self.family}'")
        if self.lam <= 0 or self.lam_star <= 0:
            raise ConfigError("kernel widths must be positive")


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    sq_a = np.sum(A * A, axis=1)
    sq_b = np.sum(B * B, axis=1)
    return np.maximum(sq_a[:, None] + sq_b[None, :] - 2.0 * A @ B.T, 0.0)


def gaussian_gram(X: np.ndarray, lam: float) -> np.ndarray:
    """exp(-lam * ||x_i - x_j||^2) with an exactly unit diagonal."""
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise InputError("non-finite values in kernel input")
    K = np.exp(-lam * _sq_dists(X, X))
    np.fill_diagonal(K, 1.0)
    return K


def gaussian_cross(X: np.ndarray, Z: np.ndarray, lam: float) -> np.ndarray:
    """Kernel values between training rows X and query rows Z, shape (len(X), len(Z))."""
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Z))):
        raise InputError("non-finite values in kernel input")
    return np.exp(-lam * _sq_dists(X, Z))


def gram(X: np.ndarray, kernel: KernelConfig, which: str = "decision") -> np.ndarray:
    """Gram matrix under the configured width for one of the two spaces."""
    if which == "decision":
        return gaussian_gram(X, kernel.lam)
    if which == "privileged":
        return gaussian_gram(X, kernel.lam_star)
    raise ConfigError(f"which must be 'decision' or 'privileged', got '{which}'")


def median_heuristic(X: np.ndarray) -> float:
    """Default kernel width: 1 / (dim * median pairwise squared distance)."""
    X = np.asarray(X, dtype=float)
    n, d = X.shape
    if n < 2:
        return 1.0
    d2 = _sq_dists(X, X)
    med = float(np.median(d2[np.triu_indices(n, k=1)]))
    if med <= 0:
        return 1.0
    return 1.0 / (d * med)
