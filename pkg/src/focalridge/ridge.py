"""Closed-form ridge regression that leaves the focal coefficient unpenalized.

The estimator solves ``(X'X + Lambda) b = X'y`` with ``X = [focal, D_1..D_K]``
(residualized) and ``Lambda = diag(0, lam, ..., lam)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import linalg

from .core import ResidualizedDesign
from .errors import DimensionMismatchError, InsufficientDataError, SingularDesignError

__all__ = [
    "RCOND_THRESHOLD",
    "RidgeFit",
    "RidgeProblem",
    "estimate_covariance",
    "fit_path",
    "fit_ridge",
    "residual_variance",
]

RCOND_THRESHOLD = 1e-12
COVARIANCE_KINDS = ("homoscedastic", "robust")


@dataclass(frozen=True)
class RidgeFit:
    """Result of one selective ridge fit.

    Attributes
    ----------
    lam : float
        Raw (not per-observation) penalty on the sub-treatment coefficients.
    beta0 : float
        Focal coefficient.
    beta : ndarray of shape (K,)
        Sub-treatment coefficients.
    sigma2_hat : float or None
        ``||y - X b||^2 / (n - p)`` with ``p = K + 1`` at every penalty;
        ``None`` when ``n <= p``.
    covariance : ndarray of shape (K+1, K+1) or None
        Sandwich covariance of ``(beta0, beta)``; ``None`` when ``n <= p``.
    """

    lam: float
    beta0: float
    beta: np.ndarray
    sigma2_hat: Optional[float]
    covariance: Optional[np.ndarray]
    covariance_kind: str
    n: int
    p: int
    rss: float
    names: tuple[str, ...] = ()
    standardized: bool = False

    @property
    def coef(self) -> np.ndarray:
        return np.concatenate([[self.beta0], self.beta])

    @property
    def standard_errors(self) -> Optional[np.ndarray]:
        if self.covariance is None:
            return None
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


class RidgeProblem:
    """Gram matrix ``X'X`` and ``X'y`` of a design, computed once, reused per penalty.

    Parameters
    ----------
    design : ResidualizedDesign
    standardize : bool
        Penalize sub-treatment coefficients as if each column had unit
        variance. Coefficients are still reported on the original scale.
    """

    def __init__(self, design: ResidualizedDesign, standardize: bool = False):
        self.design = design
        self.X = design.X
        self.y = design.y_tilde
        self.n, self.p = self.X.shape
        self.gram = self.X.T @ self.X
        self.xty = self.X.T @ self.y
        self.names = ("focal", *design.treatment_names)
        weights = np.ones(self.p)
        weights[0] = 0.0
        if standardize:
            sd = self.X[:, 1:].std(axis=0)
            weights[1:] = np.where(sd > 0, sd**2, 1.0)
        self.penalty_weights = weights
        self.standardize = standardize

    def system(self, lam: float) -> np.ndarray:
        return self.gram + np.diag(lam * self.penalty_weights)

    def _factor(self, lam: float):
        A = self.system(lam)
        diag = np.diag(A)
        dead = np.flatnonzero(~(diag > 0))
        if dead.size:
            cols = ", ".join(self.names[i] for i in dead)
            raise SingularDesignError(
                f"design column(s) {cols} are identically zero at lambda={lam:g}; use lambda > 0 or drop them"
            )
        # Jacobi equilibration: the unpenalized row and heavily penalized rows
        # can differ in scale by many orders of magnitude.
        d = 1.0 / np.sqrt(diag)
        As = A * np.outer(d, d)
        rcond = 1.0 / np.linalg.cond(As)
        if not rcond >= RCOND_THRESHOLD:
            raise SingularDesignError(self._collinearity_message(As, lam, rcond))
        return A, d, linalg.cho_factor(As, lower=False, check_finite=False)

    def _collinearity_message(self, As, lam, rcond):
        _, vecs = np.linalg.eigh(As)
        v = np.abs(vecs[:, 0])
        involved = [self.names[i] for i in np.flatnonzero(v > 0.1 * v.max())]
        return (
            f"X'X + Lambda is numerically singular at lambda={lam:g} "
            f"(reciprocal condition {rcond:.3g} < {RCOND_THRESHOLD:g}); "
            f"near-collinear columns: {', '.join(involved)}. Use lambda > 0."
        )

    def solve(self, lam: float) -> np.ndarray:
        if not lam >= 0 or not np.isfinite(lam):
            raise ValueError(f"lambda must be a finite nonnegative number, got {lam!r}")
        A, d, cho = self._factor(lam)
        coef = d * linalg.cho_solve(cho, d * self.xty, check_finite=False)
        # one step of iterative refinement
        r = self.xty - A @ coef
        coef = coef + d * linalg.cho_solve(cho, d * r, check_finite=False)
        return coef

    def fit(self, lam: float, covariance: str = "homoscedastic") -> RidgeFit:
        if covariance not in COVARIANCE_KINDS:
            raise ValueError(f"covariance kind must be one of {COVARIANCE_KINDS}, got {covariance!r}")
        lam = float(lam)
        coef = self.solve(lam)
        resid = self.y - self.X @ coef
        rss = float(resid @ resid)
        sigma2 = cov = None
        if self.n > self.p:
            sigma2 = rss / (self.n - self.p)
            cov = self._sandwich(lam, resid, sigma2, covariance)
        return RidgeFit(
            lam=lam,
            beta0=float(coef[0]),
            beta=coef[1:].copy(),
            sigma2_hat=sigma2,
            covariance=cov,
            covariance_kind=covariance,
            n=self.n,
            p=self.p,
            rss=rss,
            names=self.names,
            standardized=self.standardize,
        )

    def _sandwich(self, lam, resid, sigma2, kind):
        A, d, cho = self._factor(lam)
        a_inv = np.outer(d, d) * linalg.cho_solve(cho, np.eye(self.p), check_finite=False)
        if kind == "homoscedastic":
            meat = sigma2 * self.gram
        else:
            xe = self.X * resid[:, None]
            meat = xe.T @ xe
        cov = a_inv @ meat @ a_inv
        return 0.5 * (cov + cov.T)

    def covariance(self, fit: RidgeFit, kind: str = "homoscedastic") -> np.ndarray:
        if self.n <= self.p:
            raise InsufficientDataError(f"covariance needs n > p, got n={self.n}, p={self.p}")
        resid = self.y - self.X @ fit.coef
        sigma2 = float(resid @ resid) / (self.n - self.p)
        return self._sandwich(fit.lam, resid, sigma2, kind)


def fit_ridge(
    design: ResidualizedDesign,
    lam: float,
    covariance: str = "homoscedastic",
    standardize: bool = False,
) -> RidgeFit:
    """Fit the selective ridge at penalty ``lam``.

    >>> from focalridge.core import ResidualizedDesign
    >>> des = ResidualizedDesign([3, 1, 2, 0], [1, 1, 1, 0], [[1], [0], [1], [0]], ("D1",))
    >>> fit = fit_ridge(des, 2.0)
    >>> round(fit.beta0, 12), round(float(fit.beta[0]), 12)
    (1.75, 0.375)
    """
    return RidgeProblem(design, standardize).fit(lam, covariance)


def fit_path(
    design: ResidualizedDesign,
    lambdas: Iterable[float],
    covariance: str = "homoscedastic",
    standardize: bool = False,
) -> list[RidgeFit]:
    """Fits over a penalty grid sharing one Gram matrix."""
    problem = RidgeProblem(design, standardize)
    return [problem.fit(lam, covariance) for lam in lambdas]


def _check_pair(fit: RidgeFit, design: ResidualizedDesign):
    if fit.n != design.n or fit.p != design.k + 1:
        raise DimensionMismatchError(
            f"fit (n={fit.n}, p={fit.p}) does not match design (n={design.n}, p={design.k + 1})"
        )


def residual_variance(fit: RidgeFit, design: ResidualizedDesign) -> float:
    """``||y - X b||^2 / (n - K - 1)``; the degrees of freedom ignore the penalty."""
    _check_pair(fit, design)
    if design.n <= fit.p:
        raise InsufficientDataError(f"residual variance needs n > p, got n={design.n}, p={fit.p}")
    resid = design.y_tilde - design.X @ fit.coef
    return float(resid @ resid) / (design.n - fit.p)


def estimate_covariance(fit: RidgeFit, design: ResidualizedDesign, kind: str = "homoscedastic") -> np.ndarray:
    """Sandwich covariance ``A^-1 M A^-1`` with ``A = X'X + Lambda``.

    ``kind="homoscedastic"`` uses ``M = sigma2_hat * X'X``; ``kind="robust"``
    uses ``M = X' diag(e_i^2) X`` with the fit's residuals ``e``.
    """
    _check_pair(fit, design)
    if kind not in COVARIANCE_KINDS:
        raise ValueError(f"covariance kind must be one of {COVARIANCE_KINDS}, got {kind!r}")
    return RidgeProblem(design, fit.standardized).covariance(fit, kind)
