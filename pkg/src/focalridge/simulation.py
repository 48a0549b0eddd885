"""Monte Carlo harness for the independent-Bernoulli sub-treatment DGP.

Each unit draws ``D_k ~ Bernoulli(p_k)`` independently and gets outcome
``Y = beta0 * D' + sum_k beta_k D_k (+ noise_sd * N(0, 1))`` with no
covariates and no intercept.

Randomness: every replication owns a Philox-4x64-10 stream keyed by
``SeedSequence(seed, spawn_key=(rep_index, attempt))``. Replications never
share state, so serial and threaded runs produce bitwise-identical results.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Dataset, FocalSpec, ResidualizedDesign, apply_focal
from .errors import DataValidationError, DegenerateDesignError, InsufficientDataError, UnsupportedError
from .reconstruction import (
    analytic_tau0_binary_max,
    analytic_tau_binary,
    conditional_frequencies,
    moment_ratios,
    reconstruct_tau0,
)
from .residualize import NuisanceSpec, residualize
from .ridge import RidgeFit, RidgeProblem

__all__ = [
    "REFERENCE_DGP",
    "RNG_DESCRIPTION",
    "MseDecomposition",
    "SimulationConfig",
    "SimulationRun",
    "analytic_targets",
    "decompose",
    "population_grid",
    "rep_generator",
    "run_mse_decomposition",
    "run_simulation",
    "shrinkage_path",
    "simulate_dgp",
]

logger = logging.getLogger(__name__)

RNG_DESCRIPTION = "numpy Philox-4x64-10, key = SeedSequence(seed, spawn_key=(rep_index, attempt))"
MAX_REDRAW_FRACTION = 0.10
MAX_ATTEMPTS = 50

REFERENCE_DGP = {
    "prevalences": (0.2, 0.05, 0.2, 0.05, 0.2, 0.05),
    "beta0": 5.0,
    "beta": (2.0, 2.0, 1.0, 1.0, -1.0, -1.0),
}


@dataclass(frozen=True)
class SimulationConfig:
    prevalences: tuple[float, ...] = REFERENCE_DGP["prevalences"]
    beta0: float = REFERENCE_DGP["beta0"]
    beta: tuple[float, ...] = REFERENCE_DGP["beta"]
    n: int = 2000
    noise_sd: float = 0.0
    focal: FocalSpec = FocalSpec.MAX
    reps: int = 500
    seed: int = 0
    lambda_grid: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "prevalences", tuple(float(p) for p in self.prevalences))
        object.__setattr__(self, "beta", tuple(float(b) for b in self.beta))
        object.__setattr__(self, "focal", FocalSpec.parse(self.focal))
        if self.lambda_grid is not None:
            object.__setattr__(self, "lambda_grid", tuple(float(v) for v in self.lambda_grid))
        if not self.prevalences:
            raise ValueError("need at least one sub-treatment")
        if any(not 0.0 < p < 1.0 for p in self.prevalences):
            raise ValueError("prevalences must lie strictly between 0 and 1")
        if len(self.beta) != len(self.prevalences):
            raise ValueError("beta and prevalences must have the same length")
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.noise_sd >= 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.lambda_grid is not None:
            g = np.asarray(self.lambda_grid)
            if g.size == 0 or np.any(g < 0) or not np.all(np.isfinite(g)):
                raise ValueError("lambda_grid must be nonempty, finite and nonnegative")

    @property
    def k(self) -> int:
        return len(self.prevalences)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["focal"] = self.focal.value
        out["prevalences"] = list(self.prevalences)
        out["beta"] = list(self.beta)
        out["lambda_grid"] = None if self.lambda_grid is None else list(self.lambda_grid)
        return out


def rep_generator(seed: int, rep_index: int, attempt: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(rep_index, attempt))
    return np.random.Generator(np.random.Philox(ss))


def simulate_dgp(config: SimulationConfig, rep_index: int, attempt: int = 0) -> Dataset:
    """Draw one replication. Raises ``ConstantFocalError`` on a degenerate draw."""
    rng = rep_generator(config.seed, rep_index, attempt)
    p = np.asarray(config.prevalences)
    d = (rng.random((config.n, config.k)) < p).astype(float)
    y = config.beta0 * apply_focal(d, config.focal) + d @ np.asarray(config.beta)
    if config.noise_sd > 0:
        y = y + config.noise_sd * rng.standard_normal(config.n)
    return Dataset.from_arrays(y, d, focal=config.focal)


def analytic_targets(config: SimulationConfig) -> dict:
    """Population ``tau0`` and ``tau_j`` for the independent-Bernoulli DGP (max focal only)."""
    if config.focal is not FocalSpec.MAX:
        raise UnsupportedError("closed-form targets are only available for the max focal function")
    return {
        "tau0": analytic_tau0_binary_max(config.prevalences, config.beta0, config.beta),
        "tau": analytic_tau_binary(config.prevalences, config.beta0, config.beta),
    }


def population_grid(config: SimulationConfig, num: int = 25, low: float = 1e-6, high: float = 1e4) -> np.ndarray:
    """Default penalty grid fixed across replications.

    Zero plus ``num`` log-spaced points spanning ``low*g`` to ``high*g``, with
    ``g`` the expected ``trace(X'X) / K`` of a centered design of size ``n``.
    """
    p = np.asarray(config.prevalences)
    if config.focal is FocalSpec.MAX:
        q = 1.0 - np.prod(1.0 - p)
        focal_var = q * (1.0 - q)
    else:
        focal_var = float(np.sum(p * (1.0 - p)))
    g = config.n * (focal_var + float(np.sum(p * (1.0 - p)))) / config.k
    return np.concatenate([[0.0], np.geomspace(low * g, high * g, num)])


@dataclass(frozen=True)
class RepResult:
    beta0: np.ndarray  # (L,)
    beta: np.ndarray  # (L, K)
    tau0: np.ndarray  # (L,)
    tau: np.ndarray  # (L, K)
    attempts: int


def _fit_rep(data: Dataset, focal: FocalSpec, grid: np.ndarray) -> RepResult:
    design = residualize(data, focal, NuisanceSpec("mean"))
    problem = RidgeProblem(design)
    coefs = np.array([problem.solve(lam) for lam in grid])
    freqs = conditional_frequencies(data.treatments)
    if not np.all(np.isfinite(np.diag(freqs))):
        raise InsufficientDataError("a sub-treatment never occurs in this draw")
    b0 = coefs[:, 0]
    b = coefs[:, 1:]
    # tau_j = beta_j + beta0 + sum_{k != j} beta_k P(D_k | D_j); diag(freqs) == 1
    off = freqs - np.eye(data.k)
    tau = b + b0[:, None] + b @ off.T
    tau0 = b0 + b @ moment_ratios(design)
    return RepResult(b0, b, tau0, tau, 0)


def _run_rep(config: SimulationConfig, grid: np.ndarray, rep: int) -> RepResult:
    last = None
    for attempt in range(MAX_ATTEMPTS):
        try:
            data = simulate_dgp(config, rep, attempt)
            res = _fit_rep(data, config.focal, grid)
        except (DegenerateDesignError, DataValidationError) as exc:
            last = exc
            continue
        return RepResult(res.beta0, res.beta, res.tau0, res.tau, attempt)
    raise DegenerateDesignError(f"replication {rep} degenerate after {MAX_ATTEMPTS} attempts: {last}")


@dataclass(frozen=True)
class SimulationRun:
    """Per-replication estimates stacked in replication order."""

    config: SimulationConfig
    grid: np.ndarray
    beta0: np.ndarray  # (reps, L)
    beta: np.ndarray  # (reps, L, K)
    tau0: np.ndarray  # (reps, L)
    tau: np.ndarray  # (reps, L, K)
    redraws: int
    names: tuple[str, ...] = field(default=())


def run_simulation(config: SimulationConfig, workers: int = 1) -> SimulationRun:
    """Simulate and fit every replication over the penalty grid.

    Degenerate draws (constant focal column, a sub-treatment that never
    occurs, a singular fit) are redrawn from the next substream and counted;
    more than 10% redrawn replications is an error.
    """
    grid = population_grid(config) if config.lambda_grid is None else np.asarray(config.lambda_grid)

    def job(rep):
        return _run_rep(config, grid, rep)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(config.reps)))
    else:
        results = [job(rep) for rep in range(config.reps)]
    redrawn = sum(1 for r in results if r.attempts > 0)
    if redrawn > MAX_REDRAW_FRACTION * config.reps:
        raise DegenerateDesignError(
            f"{redrawn} of {config.reps} replications needed redraws (> {MAX_REDRAW_FRACTION:.0%}); increase n"
        )
    if redrawn:
        logger.info("redrew %d degenerate replications", redrawn)
    return SimulationRun(
        config=config,
        grid=grid,
        beta0=np.stack([r.beta0 for r in results]),
        beta=np.stack([r.beta for r in results]),
        tau0=np.stack([r.tau0 for r in results]),
        tau=np.stack([r.tau for r in results]),
        redraws=redrawn,
        names=tuple(f"D{j + 1}" for j in range(config.k)),
    )


def _rep_mean(a: np.ndarray) -> np.ndarray:
    # move replications to the contiguous last axis so numpy sums pairwise
    return np.ascontiguousarray(np.moveaxis(a, 0, -1)).mean(axis=-1)


@dataclass(frozen=True)
class MseDecomposition:
    """Squared bias, variance and MSE of each ``tau_hat_j`` at each penalty.

    Arrays are ``(L, K)``: one row per grid penalty. ``variance`` divides by
    ``reps`` so that ``mse == bias_sq + variance`` per cell;
    ``variance_unbiased`` divides by ``reps - 1``.
    """

    grid: np.ndarray
    names: tuple[str, ...]
    tau_true: np.ndarray
    tau0_true: float
    mean_tau_hat: np.ndarray
    bias_sq: np.ndarray
    variance: np.ndarray
    variance_unbiased: np.ndarray
    mse: np.ndarray
    reps: int
    redraws: int

    def rows(self) -> list[dict]:
        out = []
        for i, lam in enumerate(self.grid):
            for j, name in enumerate(self.names):
                out.append(
                    {
                        "lambda": float(lam),
                        "treatment": name,
                        "tau_true": float(self.tau_true[j]),
                        "mean_tau_hat": float(self.mean_tau_hat[i, j]),
                        "bias_sq": float(self.bias_sq[i, j]),
                        "variance": float(self.variance[i, j]),
                        "mse": float(self.mse[i, j]),
                        "reps": self.reps,
                    }
                )
        return out


def decompose(run: SimulationRun) -> MseDecomposition:
    if run.config.reps < 2:
        raise InsufficientDataError("MSE decomposition needs reps >= 2")
    targets = analytic_targets(run.config)
    truth = np.asarray(targets["tau"])
    mean = _rep_mean(run.tau)
    dev = run.tau - mean[None]
    err = run.tau - truth[None, None, :]
    variance = _rep_mean(dev * dev)
    reps = run.tau.shape[0]
    return MseDecomposition(
        grid=run.grid,
        names=run.names,
        tau_true=truth,
        tau0_true=float(targets["tau0"]),
        mean_tau_hat=mean,
        bias_sq=(mean - truth[None, :]) ** 2,
        variance=variance,
        variance_unbiased=variance * reps / (reps - 1),
        mse=_rep_mean(err * err),
        reps=reps,
        redraws=run.redraws,
    )


def run_mse_decomposition(config: SimulationConfig, workers: int = 1) -> MseDecomposition:
    if config.reps < 2:
        raise InsufficientDataError("MSE decomposition needs reps >= 2")
    return decompose(run_simulation(config, workers))


def simulated_path_rows(run: SimulationRun) -> list[dict]:
    """Replication-averaged shrinkage path in long format."""
    b0 = _rep_mean(run.beta0)
    b = _rep_mean(run.beta)
    t0 = _rep_mean(run.tau0)
    t = _rep_mean(run.tau)
    try:
        truth = analytic_targets(run.config)
    except UnsupportedError:
        truth = None
    rows = []
    for i, lam in enumerate(run.grid):
        rows.append(
            {
                "lambda": float(lam),
                "coefficient_name": "focal",
                "beta_hat": float(b0[i]),
                "tau_hat": float(t0[i]),
                "tau0_hat": float(t0[i]),
                "tau_true": float(truth["tau0"]) if truth else float("nan"),
            }
        )
        for j, name in enumerate(run.names):
            rows.append(
                {
                    "lambda": float(lam),
                    "coefficient_name": name,
                    "beta_hat": float(b[i, j]),
                    "tau_hat": float(t[i, j]),
                    "tau0_hat": float(t0[i]),
                    "tau_true": float(truth["tau"][j]) if truth else float("nan"),
                }
            )
    return rows


def shrinkage_path(
    design: ResidualizedDesign,
    grid: Sequence[float],
    data: Optional[Dataset] = None,
    covariance: str = "homoscedastic",
    standardize: bool = False,
) -> list[dict]:
    """Coefficients and reconstructed effects of one dataset along a penalty grid.

    One row per (penalty, coefficient); the focal coefficient row carries
    ``tau0`` as its ``tau_hat``. ``tau_hat`` for sub-treatments needs the raw
    ``data`` (conditional frequencies) and is NaN without it.
    """
    problem = RidgeProblem(design, standardize)
    freqs = conditional_frequencies(data.treatments) if data is not None else None
    rows = []
    for lam in grid:
        fit = problem.fit(lam, covariance)
        rows.extend(_path_rows(fit, design, freqs))
    return rows


def _path_rows(fit: RidgeFit, design: ResidualizedDesign, freqs) -> list[dict]:
    tau0 = reconstruct_tau0(fit, design)
    se = fit.standard_errors
    rows = [
        {
            "lambda": fit.lam,
            "coefficient_name": "focal",
            "beta_hat": fit.beta0,
            "tau_hat": tau0,
            "tau0_hat": tau0,
            "se": float(se[0]) if se is not None else float("nan"),
        }
    ]
    for j, name in enumerate(design.treatment_names):
        if freqs is not None and np.isfinite(freqs[j, j]):
            others = np.arange(design.k) != j
            tau = float(fit.beta[j] + fit.beta0 + fit.beta[others] @ freqs[j, others])
        else:
            tau = float("nan")
        rows.append(
            {
                "lambda": fit.lam,
                "coefficient_name": name,
                "beta_hat": float(fit.beta[j]),
                "tau_hat": tau,
                "tau0_hat": tau0,
                "se": float(se[j + 1]) if se is not None else float("nan"),
            }
        )
    return rows
