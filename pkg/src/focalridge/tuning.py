"""Penalty selection on held-out rows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import ResidualizedDesign
from .errors import DegenerateDesignError, InsufficientDataError
from .residualize import fold_assignment
from .ridge import RidgeProblem

__all__ = ["TuningConfig", "TuningResult", "default_grid", "tune_lambda"]

MIN_SPLIT_ROWS = 10
# scores within this relative band of the minimum count as tied
TIE_RTOL = 1e-9


def default_grid(design: ResidualizedDesign, num: int = 25, low: float = 1e-6, high: float = 1e4) -> np.ndarray:
    """Zero followed by ``num`` log-spaced penalties from ``low*g`` to ``high*g``.

    ``g = trace(X'X) / K`` puts the grid on the scale of the design.
    """
    X = design.X
    g = float(np.einsum("ij,ij->", X, X)) / design.k
    return np.concatenate([[0.0], np.geomspace(low * g, high * g, num)])


@dataclass(frozen=True)
class TuningConfig:
    grid: Optional[Sequence[float]] = None
    holdout_fraction: float = 0.25
    seed: int = 0
    folds: int = 1
    metric: str = "holdout_mse"

    def __post_init__(self):
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must lie in (0, 1)")
        if self.folds < 1:
            raise ValueError("folds must be >= 1")
        if self.metric != "holdout_mse":
            raise ValueError(f"unsupported metric {self.metric!r}")
        if self.grid is not None:
            g = np.asarray(self.grid, dtype=float)
            if g.ndim != 1 or g.size == 0:
                raise ValueError("grid must be a nonempty 1-D sequence")
            if np.any(g < 0) or np.any(np.diff(g) <= 0) or not np.all(np.isfinite(g)):
                raise ValueError("grid must be strictly increasing, finite and nonnegative")


@dataclass(frozen=True)
class TuningResult:
    best_lambda: float
    grid: np.ndarray
    scores: np.ndarray
    best_score: float

    def table(self) -> list[dict]:
        return [{"lambda": float(l), "holdout_mse": float(s)} for l, s in zip(self.grid, self.scores)]


def _splits(n: int, config: TuningConfig):
    if config.folds == 1:
        rng = np.random.Generator(np.random.Philox(config.seed))
        hold = rng.random(n) < config.holdout_fraction
        yield ~hold, hold
        return
    labels = fold_assignment(n, config.folds, config.seed)
    for j in range(config.folds):
        yield labels != j, labels == j


def _score_split(design, train, hold, grid) -> np.ndarray:
    if train.sum() < MIN_SPLIT_ROWS or hold.sum() < MIN_SPLIT_ROWS:
        raise InsufficientDataError(
            f"need at least {MIN_SPLIT_ROWS} rows on each side of the split, "
            f"got {int(train.sum())} train / {int(hold.sum())} hold-out"
        )
    try:
        problem = RidgeProblem(design.subset(train))
    except DegenerateDesignError as exc:
        raise InsufficientDataError(f"training split is degenerate: {exc}") from exc
    X_hold = design.X[hold]
    y_hold = design.y_tilde[hold]
    scores = np.empty(len(grid))
    for i, lam in enumerate(grid):
        try:
            coef = problem.solve(lam)
        except DegenerateDesignError:
            scores[i] = np.inf
            continue
        r = y_hold - X_hold @ coef
        scores[i] = float(r @ r) / r.shape[0]
    return scores


def tune_lambda(design: ResidualizedDesign, config: TuningConfig | None = None) -> TuningResult:
    """Pick the penalty with the smallest hold-out mean squared error of ``y_tilde``.

    With ``folds > 1`` the hold-out error is averaged over k folds instead of
    a single random split. Grid points whose fit is singular on the training
    rows score ``inf``. Ties (within a relative ``1e-9`` band) go to the
    larger penalty.
    """
    config = config or TuningConfig()
    grid = default_grid(design) if config.grid is None else np.asarray(config.grid, dtype=float)
    scores = np.zeros(len(grid))
    scale = 0.0
    splits = list(_splits(design.n, config))
    for train, hold in splits:
        scores += _score_split(design, train, hold, grid)
        scale += float(np.mean(design.y_tilde[hold] ** 2))
    scores /= len(splits)
    scale /= len(splits)
    if not np.isfinite(scores).any():
        raise DegenerateDesignError("every grid penalty gave a singular fit on the training rows")
    best = float(scores.min())
    tied = np.flatnonzero(scores <= best + TIE_RTOL * (best + scale))
    i = int(tied[-1])
    return TuningResult(float(grid[i]), grid, scores, float(scores[i]))
