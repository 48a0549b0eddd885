"""Aggregate effects recovered from a selective ridge fit.

The single-treatment estimate ``tau0`` is the projection of the outcome on
the focal column. Because the focal coefficient is unpenalized, the ridge
first-order condition for it holds at every penalty, so

    tau0 = beta0 + sum_k beta_k * <D', D_k> / <D', D'>

is the same number whatever ``lam`` the fit used. Sample moments share the
1/n normalization, so only the dot products appear.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .core import Dataset, FocalSpec, ResidualizedDesign, apply_focal
from .errors import DegenerateDesignError, DimensionMismatchError, InsufficientDataError
from .ridge import RidgeFit

__all__ = [
    "ReconstructedEffects",
    "SumFocalDecomposition",
    "analytic_tau0_binary_max",
    "analytic_tau_binary",
    "conditional_frequencies",
    "independent_pattern_probs",
    "moment_ratios",
    "population_tau0",
    "reconstruct",
    "reconstruct_tau0",
    "reconstruct_tau_j",
    "sum_focal_decomposition",
    "univariate_projection",
]


def _focal_norm2(design: ResidualizedDesign) -> float:
    ff = float(design.focal_tilde @ design.focal_tilde)
    if not ff > 0:
        raise DegenerateDesignError("focal column has zero second moment")
    return ff


def moment_ratios(design: ResidualizedDesign) -> np.ndarray:
    """``m_k = <D', D_k> / <D', D'>`` for each sub-treatment."""
    return (design.focal_tilde @ design.treat_tilde) / _focal_norm2(design)


def univariate_projection(design: ResidualizedDesign) -> float:
    """Coefficient of the outcome regressed on the focal column alone."""
    return float(design.y_tilde @ design.focal_tilde) / _focal_norm2(design)


def reconstruct_tau0(fit: RidgeFit, design: ResidualizedDesign) -> float:
    if fit.p != design.k + 1 or fit.n != design.n:
        raise DimensionMismatchError(
            f"fit (n={fit.n}, p={fit.p}) does not match design (n={design.n}, K={design.k})"
        )
    return fit.beta0 + float(fit.beta @ moment_ratios(design))


def conditional_frequencies(treatments: np.ndarray) -> np.ndarray:
    """Matrix ``C[j, k]`` = sample frequency of ``D_k = 1`` among units with ``D_j = 1``.

    Rows for sub-treatments that never occur are NaN.
    """
    t = np.asarray(treatments, dtype=float)
    counts = t.T @ t
    active = np.diag(counts).copy()
    with np.errstate(invalid="ignore", divide="ignore"):
        out = counts / active[:, None]
    out[active == 0] = np.nan
    return out


def _tau_from_freqs(beta0: float, beta: np.ndarray, freqs: np.ndarray, j: int) -> float:
    others = np.arange(beta.shape[0]) != j
    return float(beta[j] + beta0 + beta[others] @ freqs[j, others])


def reconstruct_tau_j(fit: RidgeFit, data: Dataset, j: int) -> float:
    """Expected effect of sub-treatment ``j``, spillovers included.

    ``tau_j = beta_j + beta0 + sum_{k != j} beta_k * P(D_k = 1 | D_j = 1)`` with
    plug-in frequencies from the raw treatment matrix. Only meaningful for
    binary, unconfounded data with the max focal function.
    """
    if fit.p != data.k + 1:
        raise DimensionMismatchError(f"fit has {fit.p - 1} sub-treatments, data has {data.k}")
    if not 0 <= j < data.k:
        raise IndexError(f"sub-treatment index {j} out of range for K={data.k}")
    t = data.treatments
    active = t[:, j] == 1
    if not active.any():
        raise InsufficientDataError(f"no unit has {data.treatment_names[j]} = 1")
    freqs = np.zeros((data.k, data.k))
    freqs[j] = t[active].mean(axis=0)
    return _tau_from_freqs(fit.beta0, fit.beta, freqs, j)


@dataclass(frozen=True)
class ReconstructedEffects:
    tau0: float
    tau: np.ndarray
    moment_ratios: np.ndarray
    cond_probs: Optional[np.ndarray]
    lambda_used: float
    unconfounded_mode: bool
    notes: tuple[str, ...] = field(default=())


def reconstruct(fit: RidgeFit, design: ResidualizedDesign, data: Optional[Dataset] = None) -> ReconstructedEffects:
    """All reconstructed quantities for one fit.

    ``tau`` is filled when the raw ``data`` is given; sub-treatments that
    never occur get NaN. ``unconfounded_mode`` is False when a covariate
    learner other than plain centering produced the design, in which case
    the per-sub-treatment formula is reported but not justified.
    """
    tau0 = reconstruct_tau0(fit, design)
    ratios = moment_ratios(design)
    notes = []
    cond = None
    tau = np.full(design.k, np.nan)
    if data is not None:
        cond = conditional_frequencies(data.treatments)
        for j in range(data.k):
            if np.isfinite(cond[j, j]):
                tau[j] = _tau_from_freqs(fit.beta0, fit.beta, np.nan_to_num(cond), j)
            else:
                notes.append(f"{data.treatment_names[j]} never occurs; tau undefined")
    unconfounded = design.learner in ("mean", "raw")
    if not unconfounded:
        notes.append(
            "per-sub-treatment tau uses raw conditional frequencies and assumes no confounding; "
            f"design was residualized with learner {design.learner!r}"
        )
    return ReconstructedEffects(tau0, tau, ratios, cond, fit.lam, unconfounded, tuple(notes))


def analytic_tau0_binary_max(prevalences, beta0: float, beta) -> float:
    """Population ``tau0`` for independent Bernoulli sub-treatments and max focal.

    ``beta0 + sum_k beta_k p_k / (1 - prod_m (1 - p_m))``.
    """
    p = np.asarray(prevalences, dtype=float)
    b = np.asarray(beta, dtype=float)
    if p.shape != b.shape:
        raise DimensionMismatchError("prevalences and beta lengths differ")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("prevalences must lie in [0, 1]")
    any_active = 1.0 - np.prod(1.0 - p)
    if not any_active > 0:
        raise DegenerateDesignError("all prevalences are zero; the focal column never activates")
    return float(beta0 + b @ p / any_active)


def analytic_tau_binary(prevalences, beta0: float, beta) -> np.ndarray:
    """Population ``tau_j`` for independent Bernoulli sub-treatments.

    Independence makes ``P(D_k = 1 | D_j = 1) = p_k``.
    """
    p = np.asarray(prevalences, dtype=float)
    b = np.asarray(beta, dtype=float)
    total = b @ p
    return b + beta0 + (total - b * p)


def independent_pattern_probs(prevalences) -> dict[tuple[int, ...], float]:
    """Probability of every treatment pattern under independent Bernoulli draws."""
    p = [float(v) for v in prevalences]
    out = {}
    for pattern in itertools.product((0, 1), repeat=len(p)):
        prob = 1.0
        for d, pk in zip(pattern, p):
            prob *= pk if d else 1.0 - pk
        out[pattern] = prob
    return out


def population_tau0(
    pattern_probs: Mapping[tuple[int, ...], float],
    beta0: float,
    beta,
    focal: FocalSpec | str = FocalSpec.MAX,
) -> float:
    """``E[Y D'] / E[D'^2]`` by enumerating treatment patterns (no intercept, no confounding)."""
    b = np.asarray(beta, dtype=float)
    patterns = np.array(list(pattern_probs.keys()), dtype=float)
    probs = np.array(list(pattern_probs.values()), dtype=float)
    dprime = apply_focal(patterns, focal)
    y = beta0 * dprime + patterns @ b
    denom = probs @ (dprime * dprime)
    if not denom > 0:
        raise DegenerateDesignError("focal column is zero with probability one")
    return float(probs @ (y * dprime) / denom)


@dataclass(frozen=True)
class SumFocalDecomposition:
    """``tau0`` for two sub-treatments and ``D' = D_1 + D_2``, computed two ways.

    ``tau0_weighted = w1 * E[Y | D'=1] + w2 * E[Y | D'=2]`` with
    ``w1 = P(D'=1) / E[D'^2]`` and ``w2 = 2 P(D'=2) / E[D'^2]``.
    """

    tau0: float
    tau0_weighted: float
    w1: float
    w2: float
    mean_y_given_1: float
    mean_y_given_2: float
    second_moment: float


def sum_focal_decomposition(joint, beta0: float, beta1: float, beta2: float) -> SumFocalDecomposition:
    """Decompose ``tau0`` under the sum focal function for K = 2.

    Parameters
    ----------
    joint : array-like of shape (2, 2)
        ``joint[d1, d2] = P(D_1 = d1, D_2 = d2)``; must sum to 1.

    Conditional means with zero conditioning probability are NaN and their
    weight is exactly zero.
    """
    P = np.asarray(joint, dtype=float)
    if P.shape != (2, 2):
        raise DimensionMismatchError(f"joint must be 2x2, got {P.shape}")
    if np.any(P < 0) or abs(P.sum() - 1.0) > 1e-12:
        raise ValueError("joint must be a probability table summing to 1")
    p1 = P[1, 0] + P[0, 1]
    p2 = P[1, 1]
    if not p1 + p2 > 0:
        raise DegenerateDesignError("P(D' >= 1) = 0")
    second = p1 + 4.0 * p2
    # E[D' D_k] = P(D_k=1, D'=1) + 2 P(D'=2)
    cross = np.array([P[1, 0] + 2.0 * p2, P[0, 1] + 2.0 * p2])
    tau0 = beta0 + float(np.array([beta1, beta2]) @ cross) / second

    w1 = p1 / second
    w2 = 2.0 * p2 / second
    ey1 = beta0 + (beta1 * P[1, 0] + beta2 * P[0, 1]) / p1 if p1 > 0 else float("nan")
    ey2 = 2.0 * beta0 + beta1 + beta2 if p2 > 0 else float("nan")
    weighted = (w1 * ey1 if p1 > 0 else 0.0) + (w2 * ey2 if p2 > 0 else 0.0)
    if abs(weighted - tau0) > 1e-12 * max(1.0, abs(tau0)):
        raise ArithmeticError(f"sum-focal decomposition disagrees: {weighted!r} vs {tau0!r}")
    return SumFocalDecomposition(tau0, weighted, w1, w2, ey1, ey2, second)
