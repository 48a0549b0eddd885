import numpy as np
import pytest

from focalridge.core import Dataset
from focalridge.errors import DimensionMismatchError, InsufficientDataError, NuisanceFitError
from focalridge.residualize import (
    KNearestNeighbors,
    LinearLeastSquares,
    MeanOnly,
    NuisanceSpec,
    predict_nuisance,
    residualize,
)
from focalridge.ridge import fit_ridge

from oracles import ols_oracle


def _covariate_data(rng, n=400, d=2, k=3):
    x = rng.normal(size=(n, d))
    logits = x[:, :1] + rng.normal(size=(n, k)) * 0.5 - 1.0
    t = (rng.random((n, k)) < 1 / (1 + np.exp(-logits))).astype(float)
    y = x @ np.arange(1, d + 1) + 5 * t.max(axis=1) + t @ np.linspace(-1, 1, k) + rng.normal(size=n)
    return Dataset.from_arrays(y, t, x)


class TestPredictNuisance:
    def test_mean_only(self):
        m = MeanOnly().fit(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]))
        np.testing.assert_allclose(predict_nuisance(m, np.array([[5.0], [-2.0]])), [2.0, 2.0])

    def test_knn_full_neighbourhood_is_mean(self, rng):
        x = rng.normal(size=(25, 2))
        y = rng.normal(size=25)
        m = KNearestNeighbors(25).fit(x, y)
        np.testing.assert_allclose(predict_nuisance(m, rng.normal(size=(7, 2))), y.mean(), atol=1e-12)

    def test_linear_exact(self, rng):
        x = rng.normal(size=(40, 3))
        y = 1.5 + x @ [2.0, -1.0, 0.25]
        m = LinearLeastSquares().fit(x, y)
        np.testing.assert_allclose(predict_nuisance(m, x), y, atol=1e-10)

    def test_dimension_mismatch(self, rng):
        m = LinearLeastSquares().fit(rng.normal(size=(10, 2)), rng.normal(size=10))
        with pytest.raises(DimensionMismatchError):
            predict_nuisance(m, rng.normal(size=(4, 3)))

    def test_knn_ties_break_by_row_index(self):
        x = np.array([[0.0], [1.0], [1.0], [2.0]])
        y = np.array([10.0, 20.0, 30.0, 40.0])
        m = KNearestNeighbors(2).fit(x, y)
        # standardized distances from 0.5 to rows 0, 1, 2 tie; rows 0 and 1 win
        raw = predict_nuisance(m, np.array([[0.5]])) - m.offset_
        np.testing.assert_allclose(raw, [15.0])

    def test_knn_k_too_large(self):
        with pytest.raises(InsufficientDataError):
            KNearestNeighbors(5).fit(np.zeros((3, 1)), np.zeros(3))


class TestResidualize:
    def test_no_covariates_is_centering(self):
        t = np.array([[1, 0], [0, 1], [1, 1], [0, 0], [1, 0]], dtype=float)
        y = np.array([3.0, 1.0, 2.0, 0.0, 4.0])
        data = Dataset.from_arrays(y, t)
        des = residualize(data, "max", NuisanceSpec("linear"))  # forced to mean: d = 0
        np.testing.assert_allclose(des.y_tilde, y - y.mean())
        dmax = t.max(axis=1)
        np.testing.assert_allclose(des.focal_tilde, dmax - dmax.mean())
        np.testing.assert_allclose(des.treat_tilde, t - t.mean(axis=0))
        assert des.learner == "mean"

    def test_linear_signal_is_removed(self, rng):
        n = 200
        x = rng.normal(size=(n, 2))
        t = (rng.random((n, 2)) < 0.3).astype(float)
        t[0] = 1.0
        t[1] = 0.0
        y = 2.0 - x @ [1.0, 3.0]
        des = residualize(Dataset.from_arrays(y, t, x), "max", NuisanceSpec("linear"))
        assert np.max(np.abs(des.y_tilde)) < 1e-8

    def test_partialling_out_matches_joint_ols(self):
        # Y = 3x + 5 D' + noise with x independent of D
        rng = np.random.default_rng(7)
        n = 10_000
        x = rng.normal(size=n)
        t = (rng.random((n, 3)) < [0.2, 0.1, 0.3]).astype(float)
        dmax = t.max(axis=1)
        y = 3 * x + 5 * dmax + rng.normal(size=n)
        data = Dataset.from_arrays(y, t, x)
        fit = fit_ridge(residualize(data, "max", NuisanceSpec("linear")), 0.0)
        joint = np.column_stack([np.ones(n), x, dmax, t])
        beta, cov = ols_oracle(joint, y)
        np.testing.assert_allclose(fit.beta0, beta[2], rtol=1e-9)
        np.testing.assert_allclose(fit.beta, beta[3:], rtol=1e-8, atol=1e-10)
        assert abs(fit.beta0 - 5.0) < 3 * fit.standard_errors[0]

    @pytest.mark.parametrize("spec", [NuisanceSpec("mean"), NuisanceSpec("linear"), NuisanceSpec("knn", 15)])
    def test_residual_means_vanish(self, rng, spec):
        des = residualize(_covariate_data(rng), "max", spec)
        for col in (des.y_tilde, des.focal_tilde, *des.treat_tilde.T):
            assert abs(col.mean()) < 1e-8

    @pytest.mark.parametrize("learner", ["mean", "linear", "knn"])
    def test_cross_fit_means_are_small(self, rng, learner):
        data = _covariate_data(rng, n=2000)
        des = residualize(data, "max", NuisanceSpec(learner, 25, cross_fit_folds=2, seed=3))
        for col in (des.y_tilde, des.focal_tilde, *des.treat_tilde.T):
            assert abs(col.mean()) < 5 * col.std() / np.sqrt(data.n)

    def test_mean_only_idempotent(self, rng):
        data = _covariate_data(rng)
        once = residualize(data, "max", NuisanceSpec("mean"))
        again = Dataset.from_arrays(once.y_tilde, data.treatments, data.covariates)
        twice = residualize(again, "max", NuisanceSpec("mean"))
        np.testing.assert_allclose(twice.y_tilde, once.y_tilde, atol=1e-12)

    def test_no_confounding_reduces_to_centering(self, rng):
        n = 500
        t = (rng.random((n, 3)) < [0.3, 0.2, 0.25]).astype(float)
        y = 5 * t.max(axis=1) + t @ [1.0, -1.0, 0.5] + rng.normal(size=n)
        fit = fit_ridge(residualize(Dataset.from_arrays(y, t), "max"), 0.0)
        centered = np.column_stack([t.max(axis=1), t])
        centered = centered - centered.mean(axis=0)
        beta, _ = ols_oracle(centered, y - y.mean())
        np.testing.assert_allclose(fit.coef, beta, rtol=1e-10, atol=1e-12)

    def test_cross_fit_uses_out_of_fold_learner(self, rng):
        from focalridge.residualize import fold_assignment

        data = _covariate_data(rng, n=60)
        des = residualize(data, "max", NuisanceSpec("linear", cross_fit_folds=3, seed=11))
        labels = fold_assignment(60, 3, 11)
        test = labels == 1
        m = LinearLeastSquares().fit(data.covariates[~test], data.outcome[~test])
        np.testing.assert_allclose(des.y_tilde[test], data.outcome[test] - m.predict(data.covariates[test]))

    def test_deterministic_given_seed(self, rng):
        data = _covariate_data(rng)
        a = residualize(data, "max", NuisanceSpec("knn", 7, 2, seed=5))
        b = residualize(data, "max", NuisanceSpec("knn", 7, 2, seed=5))
        assert a.y_tilde.tobytes() == b.y_tilde.tobytes()
        assert a.treat_tilde.tobytes() == b.treat_tilde.tobytes()

    def test_singular_covariates(self, rng):
        data = _covariate_data(rng, d=1)
        dup = Dataset.from_arrays(data.outcome, data.treatments, np.column_stack([data.covariates, 2 * data.covariates]))
        with pytest.raises(NuisanceFitError, match="Y, focal"):
            residualize(dup, "max", NuisanceSpec("linear"))

    def test_tiny_folds(self):
        data = Dataset.from_arrays([1.0, 2.0, 3.0, 4.0], [[1], [0], [1], [0]], [[0.1], [0.2], [0.3], [0.5]])
        with pytest.raises(InsufficientDataError):
            residualize(data, "max", NuisanceSpec("mean", cross_fit_folds=3))

    def test_parse(self):
        assert NuisanceSpec.parse("knn:12") == NuisanceSpec("knn", 12)
        assert NuisanceSpec.parse("linear", 2, 9).cross_fit_folds == 2
        with pytest.raises(ValueError):
            NuisanceSpec.parse("forest")
