import numpy as np
import pytest

from focalridge.core import Dataset, ResidualizedDesign
from focalridge.errors import InsufficientDataError
from focalridge.residualize import residualize
from focalridge.simulation import REFERENCE_DGP, SimulationConfig, simulate_dgp
from focalridge.tuning import TIE_RTOL, TuningConfig, default_grid, tune_lambda

from oracles import random_binary_design


def noisy_design(rng, n=400, k=4):
    t = random_binary_design(rng, n, k, "independent")
    y = 3 * t.max(axis=1) + t @ rng.normal(0, 1, size=k) + rng.normal(size=n)
    return residualize(Dataset.from_arrays(y, t))


def test_pure_focal_signal_picks_largest(rng):
    t = random_binary_design(rng, 300, 3, "independent")
    data = Dataset.from_arrays(2 * t.max(axis=1), t)
    des = residualize(data)
    np.testing.assert_allclose(des.y_tilde, 2 * des.focal_tilde, atol=1e-14)
    res = tune_lambda(des)
    assert res.best_lambda == res.grid[-1]


def test_singleton_grid(rng):
    res = tune_lambda(noisy_design(rng), TuningConfig(grid=[0.0]))
    assert res.best_lambda == 0.0
    assert res.scores.shape == (1,)


def test_default_grid_shape(rng):
    des = noisy_design(rng)
    grid = default_grid(des)
    g = float(np.trace(des.X.T @ des.X)) / des.k
    assert grid.shape == (26,) and grid[0] == 0.0
    assert grid[1] == pytest.approx(1e-6 * g) and grid[-1] == pytest.approx(1e4 * g)
    assert np.all(np.diff(grid) > 0)


def test_deterministic(rng):
    des = noisy_design(rng)
    a = tune_lambda(des, TuningConfig(seed=7))
    b = tune_lambda(des, TuningConfig(seed=7))
    assert a.best_lambda == b.best_lambda
    assert a.scores.tobytes() == b.scores.tobytes()


def test_scores_finite_and_best_is_minimal(rng):
    for seed in range(10):
        des = noisy_design(np.random.default_rng(seed))
        res = tune_lambda(des, TuningConfig(seed=seed))
        assert np.all(np.isfinite(res.scores)) and len(res.scores) == len(res.grid)
        # minimal up to the documented tie band
        scale = float(np.mean(des.y_tilde**2))
        assert res.best_score <= res.scores.min() + 2 * TIE_RTOL * (res.scores.min() + scale)
        assert res.best_score == res.scores[res.grid == res.best_lambda][0]


def test_kfold(rng):
    des = noisy_design(rng)
    res = tune_lambda(des, TuningConfig(folds=5, seed=3))
    assert np.all(np.isfinite(res.scores))
    assert res.best_lambda in res.grid


def test_too_few_rows():
    des = ResidualizedDesign(np.arange(12.0), np.tile([1.0, -1.0], 6), np.tile([[1.0], [0.0]], (6, 1)), ("a",))
    with pytest.raises(InsufficientDataError, match="at least 10"):
        tune_lambda(des)


def test_singular_points_score_inf(rng):
    t = random_binary_design(rng, 200, 1, "independent")
    data = Dataset.from_arrays(t[:, 0] + rng.normal(size=200), t)
    res = tune_lambda(residualize(data), TuningConfig(grid=[0.0, 1.0, 10.0]))
    assert np.isinf(res.scores[0]) and res.best_lambda > 0


def test_bad_config():
    with pytest.raises(ValueError):
        TuningConfig(holdout_fraction=1.0)
    with pytest.raises(ValueError):
        TuningConfig(grid=[1.0, 0.5])


@pytest.mark.slow
@pytest.mark.parametrize("noise_sd", [0.0, 5.0])
def test_default_dgp_prefers_positive_penalty(noise_sd):
    cfg = SimulationConfig(**REFERENCE_DGP, n=2000, noise_sd=noise_sd, reps=1)
    best = [
        tune_lambda(residualize(simulate_dgp(cfg, seed)), TuningConfig(seed=seed)).best_lambda
        for seed in range(200)
    ]
    assert np.median(best) > 0
