"""Partialling covariates out of the outcome, focal and sub-treatment columns.

Each target column ``c`` is replaced by ``c - E_hat[c | X]``. The conditional
expectations come from a nuisance learner; three reference learners are
provided, and any object with ``fit(X, Y)`` / ``predict(X)`` over 2-D targets
can be plugged into :func:`residualize_with`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, FocalSpec, ResidualizedDesign
from .errors import DimensionMismatchError, InsufficientDataError, NuisanceFitError

__all__ = [
    "KNearestNeighbors",
    "LinearLeastSquares",
    "MeanOnly",
    "NuisanceSpec",
    "make_learner",
    "predict_nuisance",
    "residualize",
    "residualize_with",
]


class _Learner:
    name = "base"
    n_features_: int

    def _check_predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[1] != self.n_features_:
            raise DimensionMismatchError(
                f"{self.name} learner was fitted on {self.n_features_} covariates, got {X.shape[1]}"
            )
        return X


class MeanOnly(_Learner):
    """Predicts the training mean of each target, ignoring covariates."""

    name = "mean"

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        self.n_features_ = X.shape[1] if X.ndim == 2 else 1
        self.mean_ = Y.mean(axis=0)
        return self

    def predict(self, X):
        X = self._check_predict(X)
        return np.broadcast_to(self.mean_, (X.shape[0],) + np.shape(self.mean_)).copy()


class LinearLeastSquares(_Learner):
    """Ordinary least squares with an intercept, one column of coefficients per target."""

    name = "linear"

    def __init__(self, target_names=None, context: str = ""):
        self.target_names = target_names
        self.context = context

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        self.n_features_ = X.shape[1]
        A = np.column_stack([np.ones(X.shape[0]), X])
        coef, _, rank, sv = np.linalg.lstsq(A, Y, rcond=None)
        # lstsq's own cutoff is too lax to catch near-duplicate covariates
        if rank < A.shape[1] or sv[-1] <= sv[0] * A.shape[1] * np.finfo(float).eps * 1e3:
            targets = ", ".join(self.target_names) if self.target_names else "all targets"
            where = f" ({self.context})" if self.context else ""
            raise NuisanceFitError(
                f"singular covariate design in linear nuisance regression of {targets}{where}: "
                f"rank {rank} < {A.shape[1]} (intercept + {X.shape[1]} covariates)"
            )
        self.coef_ = coef
        return self

    def predict(self, X):
        X = self._check_predict(X)
        return self.coef_[0] + X @ self.coef_[1:]


class KNearestNeighbors(_Learner):
    """k-nearest-neighbour regression on standardized covariates.

    Distances are Euclidean after scaling each covariate to unit variance on
    the training rows; equal distances are broken by training row index.
    Predictions carry an intercept correction (training mean minus the mean
    in-sample prediction) so residuals are centered like the other learners.
    """

    name = "knn"

    def __init__(self, k: int, chunk_size: int = 512):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.chunk_size = chunk_size

    def fit(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if self.k > X.shape[0]:
            raise InsufficientDataError(f"knn k={self.k} exceeds training rows {X.shape[0]}")
        self.n_features_ = X.shape[1]
        self.loc_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        self.X_ = (X - self.loc_) / self.scale_
        self.Y_ = Y
        self.offset_ = 0.0
        self.offset_ = Y.mean(axis=0) - self._raw_predict(self.X_).mean(axis=0)
        return self

    def _raw_predict(self, Z):
        out = np.empty((Z.shape[0],) + self.Y_.shape[1:])
        n, d = self.X_.shape
        # direct differences keep exact ties exact; chunk to bound memory
        chunk = max(1, min(self.chunk_size, (1 << 22) // max(1, n * d)))
        for start in range(0, Z.shape[0], chunk):
            z = Z[start:start + chunk]
            dist = ((z[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=-1)
            idx = np.argsort(dist, axis=1, kind="stable")[:, : self.k]
            out[start:start + len(z)] = self.Y_[idx].mean(axis=1)
        return out

    def predict(self, X):
        X = self._check_predict(X)
        return self._raw_predict((X - self.loc_) / self.scale_) + self.offset_


@dataclass(frozen=True)
class NuisanceSpec:
    """Nuisance learner choice and cross-fitting scheme.

    ``learner`` is ``"mean"``, ``"linear"`` or ``"knn"`` (with ``knn_k``
    neighbours). ``cross_fit_folds=1`` fits and predicts on the full sample.
    ``seed`` only drives fold assignment.
    """

    learner: str = "mean"
    knn_k: int = 5
    cross_fit_folds: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.learner not in ("mean", "linear", "knn"):
            raise ValueError(f"unknown nuisance learner {self.learner!r}")
        if self.cross_fit_folds < 1:
            raise ValueError("cross_fit_folds must be >= 1")
        if self.learner == "knn" and self.knn_k < 1:
            raise ValueError("knn k must be >= 1")

    @classmethod
    def parse(cls, text: str, cross_fit_folds: int = 1, seed: int = 0) -> "NuisanceSpec":
        """Parse the CLI form ``mean``, ``linear`` or ``knn:K``."""
        name, _, arg = text.partition(":")
        if name == "knn":
            if not arg:
                raise ValueError("knn nuisance needs a neighbour count, e.g. knn:10")
            return cls("knn", int(arg), cross_fit_folds, seed)
        if arg:
            raise ValueError(f"nuisance learner {name!r} takes no argument")
        return cls(name, 5, cross_fit_folds, seed)

    def describe(self) -> str:
        base = f"knn:{self.knn_k}" if self.learner == "knn" else self.learner
        return base if self.cross_fit_folds == 1 else f"{base}, {self.cross_fit_folds}-fold cross-fit (seed {self.seed})"


def make_learner(spec: NuisanceSpec, target_names=None, context: str = ""):
    if spec.learner == "mean":
        return MeanOnly()
    if spec.learner == "linear":
        return LinearLeastSquares(target_names, context)
    return KNearestNeighbors(spec.knn_k)


def predict_nuisance(learner, covariates) -> np.ndarray:
    """Predictions ``E_hat[target | X]`` from a fitted learner."""
    return learner.predict(covariates)


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label per row: a seeded permutation cut into near-equal blocks."""
    rng = np.random.Generator(np.random.Philox(seed))
    labels = np.empty(n, dtype=np.int64)
    for j, block in enumerate(np.array_split(rng.permutation(n), folds)):
        labels[block] = j
    return labels


def residualize_with(covariates, targets, make, folds: int = 1, seed: int = 0) -> np.ndarray:
    """Residualize each column of ``targets`` against ``covariates``.

    ``make(context)`` must return a fresh unfitted learner. With ``folds > 1``
    each fold is predicted by a learner trained on the remaining folds.
    """
    X = np.asarray(covariates, dtype=float)
    T = np.asarray(targets, dtype=float)
    n = T.shape[0]
    if folds == 1:
        return T - make("full sample").fit(X, T).predict(X)
    if folds > n:
        raise InsufficientDataError(f"{folds} folds requested for {n} rows")
    labels = fold_assignment(n, folds, seed)
    out = np.empty_like(T)
    for j in range(folds):
        test = labels == j
        if test.sum() < 2 or (~test).sum() < 2:
            raise InsufficientDataError(f"cross-fit fold {j} has fewer than 2 observations")
        learner = make(f"cross-fit fold {j}").fit(X[~test], T[~test])
        out[test] = T[test] - learner.predict(X[test])
    return out


def residualize(
    data: Dataset,
    focal: FocalSpec | str = FocalSpec.MAX,
    nuisance: NuisanceSpec | None = None,
) -> ResidualizedDesign:
    """Partial covariates out of ``Y``, the focal column and each sub-treatment.

    The focal column is its own regression target: ``E[max_k D_k | X]`` is not
    ``max_k E[D_k | X]``. Without covariates the learner is forced to
    :class:`MeanOnly`, i.e. plain centering.
    """
    focal = FocalSpec.parse(focal)
    nuisance = nuisance or NuisanceSpec()
    if data.d == 0 and nuisance.learner != "mean":
        nuisance = NuisanceSpec("mean", nuisance.knn_k, nuisance.cross_fit_folds, nuisance.seed)
    names = ("Y", f"focal[{focal.value}]", *data.treatment_names)
    targets = np.column_stack([data.outcome, data.focal(focal), data.treatments])
    X = data.covariates if data.d else np.zeros((data.n, 1))

    def make(context):
        return make_learner(nuisance, names, context)

    resid = residualize_with(X, targets, make, nuisance.cross_fit_folds, nuisance.seed)
    return ResidualizedDesign(
        y_tilde=resid[:, 0],
        focal_tilde=resid[:, 1],
        treat_tilde=resid[:, 2:],
        treatment_names=data.treatment_names,
        learner=nuisance.learner,
        provenance=f"nuisance={nuisance.describe()}, focal={focal.value}, covariates={data.d}",
    )
