"""Distances over contexts.

A Mahalanobis metric ``d(c1, c2)^2 = (c1 - c2)^T A (c1 - c2)`` is carried
together with a whitening matrix ``W`` (``W^T W = A``), so every consumer can
work with plain Euclidean geometry on ``W c``.
"""

from __future__ import annotations

import csv
import functools
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag

from .trajectory import KernelBasis, KnotGrid, _psi_columns

__all__ = [
    "MetricSpec",
    "MetricBuildSpec",
    "euclidean",
    "mahalanobis",
    "build_state_metric",
    "whitening",
    "distance",
    "pairwise_distances",
    "default_eval_times",
    "save_matrix",
    "load_matrix",
]

DEFAULT_FLOOR = 1e-8


@dataclass(frozen=True)
class MetricSpec:
    kind: str
    whitening: np.ndarray
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "mahalanobis"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        self.whitening.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.whitening.shape[1]

    def whiten(self, X) -> np.ndarray:
        """Map contexts (rows) to whitened coordinates."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.dim:
            raise ValueError(f"expected dimension {self.dim}, got {X.shape[-1]}")
        if self.kind == "euclidean":
            return X
        return X @ self.whitening.T

    def unwhiten(self, Z) -> np.ndarray:
        """Inverse of ``whiten``; needs a nonsingular (floored) whitening."""
        Z = np.asarray(Z, dtype=float)
        if self.kind == "euclidean":
            return Z
        return Z @ self._inverse.T

    @functools.cached_property
    def _inverse(self) -> np.ndarray:
        return np.linalg.inv(self.whitening)

    @property
    def condition_number(self) -> float:
        """Condition number of the metric matrix (1 for Euclidean)."""
        if self.matrix is None:
            return 1.0
        lam = np.linalg.eigvalsh(self.matrix)
        return float(lam[-1] / lam[0]) if lam[0] > 0 else np.inf


def euclidean(dim: int) -> MetricSpec:
    return MetricSpec("euclidean", np.eye(dim))


def whitening(A, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """Return ``W = Lambda^{1/2} V^T`` for ``A = V Lambda V^T``.

    Eigenvalues are clamped from below at ``floor * lambda_max``.
    """
    A = np.asarray(A, dtype=float)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("whitening needs a square matrix")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")
    lam, V = np.linalg.eigh(0.5 * (A + A.T))
    lam = np.maximum(lam, floor * max(lam[-1], 0.0))
    return np.sqrt(lam)[:, None] * V.T


def mahalanobis(A, floor: float = DEFAULT_FLOOR) -> MetricSpec:
    A = np.array(A, dtype=float)
    A.setflags(write=False)
    return MetricSpec("mahalanobis", whitening(A, floor), A)


def distance(metric: MetricSpec, c1, c2) -> float:
    diff = np.asarray(c1, dtype=float) - np.asarray(c2, dtype=float)
    return float(np.linalg.norm(metric.whiten(diff)))


def pairwise_distances(metric: MetricSpec, X, Y=None) -> np.ndarray:
    ZX = metric.whiten(X)
    ZY = ZX if Y is None else metric.whiten(Y)
    return np.sqrt(sq_euclidean(ZX, ZY))


def sq_euclidean(X: np.ndarray, Y: np.ndarray, chunk: int = 1 << 22) -> np.ndarray:
    """Squared Euclidean distances between rows, from explicit differences.

    Exact zero for identical rows, unlike the expanded form.
    """
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    out = np.empty((X.shape[0], Y.shape[0]))
    step = max(1, chunk // max(1, Y.size))
    for i in range(0, X.shape[0], step):
        diff = X[i : i + step, None, :] - Y[None, :, :]
        out[i : i + step] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def sq_euclidean_fast(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Expanded-form squared distances (BLAS speed, clipped at zero)."""
    d2 = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    return np.maximum(d2, 0.0)


def default_eval_times(grid: KnotGrid) -> np.ndarray:
    """Knots plus segment midpoints."""
    t = grid.array
    return np.sort(np.concatenate([t, 0.5 * (t[1:] + t[:-1])]))


@dataclass(frozen=True)
class MetricBuildSpec:
    """Inputs for the trajectory-state metric.

    ``state_rows`` selects which state components are compared: all three
    (position, velocity, acceleration) or position only.
    """

    grid: KnotGrid
    eval_times: np.ndarray | None = None
    jerk_regularization: float = 0.0
    axes: int = 3
    state_rows: str = "full"

    def times(self) -> np.ndarray:
        times = default_eval_times(self.grid) if self.eval_times is None else np.asarray(self.eval_times, float)
        if times.size == 0:
            raise ValueError("eval_times must be nonempty")
        if np.any(times < self.grid.t_start) or np.any(times > self.grid.t_end):
            raise ValueError("eval_times must lie within the grid")
        return times


def state_metric_matrix(spec: MetricBuildSpec, basis: KernelBasis) -> np.ndarray:
    """``Gamma3^T S^T S Gamma3`` with the regularizing rows ``lambda * I`` on the jerks."""
    if basis.grid != spec.grid:
        raise ValueError("kernel basis was built for a different grid")
    if spec.state_rows not in ("full", "position"):
        raise ValueError(f"state_rows must be 'full' or 'position', got {spec.state_rows!r}")
    psi = _psi_columns(spec.times(), spec.grid.array)
    if spec.state_rows == "position":
        psi = psi[:, :1]
    # one axis: stacked rows of Psi(t_i) @ Gamma; axes are block-diagonal copies
    S_axis = psi.reshape(-1, spec.grid.K) @ basis.gamma
    if spec.jerk_regularization > 0:
        S_axis = np.vstack([S_axis, spec.jerk_regularization * basis.gamma])
    A_axis = S_axis.T @ S_axis
    A_axis = 0.5 * (A_axis + A_axis.T)
    return block_diag(*([A_axis] * spec.axes))


def build_state_metric(spec: MetricBuildSpec, basis: KernelBasis, floor: float = DEFAULT_FLOOR) -> MetricSpec:
    return mahalanobis(state_metric_matrix(spec, basis), floor)


def save_matrix(path, A: np.ndarray):
    """Write a metric matrix as ``.npy`` or CSV, chosen by suffix."""
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, A)
        return
    with open(path, "w", newline="") as f:
        csv.writer(f).writerows([[repr(float(v)) for v in row] for row in np.atleast_2d(A)])


def load_matrix(path) -> np.ndarray:
    path = str(path)
    if path.endswith(".npy"):
        return np.load(path)
    return np.loadtxt(path, delimiter=",", ndmin=2)
