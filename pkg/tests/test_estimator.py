import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline
from sklearn.linear_model import LinearRegression

from sthcss.data import SynthConfig, synth_generate
from sthcss.estimator import (KNNHypergraph, RidgeWindowRegressor, STHCSSRegressor,
                              chronological_split)
from sthcss.exceptions import DimensionError, InsufficientDataError
from sthcss.hypergraph import build_hypergraph, normalized_adjacency

SMALL = dict(window=12, channels=8, readout_hidden=8, st_blocks=1, kernel_size=5)


@pytest.fixture(scope="module")
def xy():
    s = synth_generate(SynthConfig(T=500, seed=3))
    return s.values, s.target


class TestKNNHypergraph:
    def test_matches_functional(self, xy):
        X, _ = xy
        est = KNNHypergraph(k=3).fit(X)
        Z = (X - X.mean(0)) / X.std(0)
        ref = normalized_adjacency(build_hypergraph(Z.T, 3))
        np.testing.assert_array_equal(est.adjacency_, ref.N)
        assert est.incidence_.sum(axis=0).tolist() == [3] * 12
        np.testing.assert_allclose(est.laplacian_, np.eye(12) - est.adjacency_)

    def test_transform(self, xy):
        X, _ = xy
        est = KNNHypergraph(k=4)
        Y = est.fit_transform(X)
        np.testing.assert_allclose(Y, (est.adjacency_ @ X.T).T)

    def test_pipeline(self, xy):
        X, y = xy
        pipe = make_pipeline(KNNHypergraph(k=4), LinearRegression()).fit(X, y)
        assert pipe.predict(X).shape == y.shape

    def test_params(self):
        est = KNNHypergraph(k=5, weighted_degree=True)
        assert est.get_params() == {"k": 5, "weighted_degree": True}
        assert clone(est).k == 5

    def test_not_fitted(self, xy):
        with pytest.raises(NotFittedError):
            KNNHypergraph().transform(xy[0])

    def test_feature_mismatch(self, xy):
        est = KNNHypergraph().fit(xy[0])
        with pytest.raises(DimensionError):
            est.transform(xy[0][:, :5])


class TestRegressors:
    def test_sthcss_fit_predict(self, xy):
        X, y = xy
        (Xtr, ytr), _, (Xte, yte) = chronological_split(X, y)
        est = STHCSSRegressor(epochs=3, random_state=0, **SMALL).fit(Xtr, ytr)
        pred = est.predict(Xte)
        assert pred.shape == (len(Xte) - 11,)
        assert np.all(np.isfinite(pred))
        assert np.isfinite(est.score(Xte, yte))
        assert est.history_.epoch == [0, 1, 2, 3]

    def test_sthcss_deterministic(self, xy):
        X, y = xy
        a = STHCSSRegressor(epochs=2, random_state=4, **SMALL).fit(X, y).predict(X)
        b = STHCSSRegressor(epochs=2, random_state=4, **SMALL).fit(X, y).predict(X)
        np.testing.assert_array_equal(a, b)

    def test_sthcss_save_load(self, xy, tmp_path):
        X, y = xy
        est = STHCSSRegressor(epochs=1, **SMALL).fit(X, y)
        est.save(tmp_path / "m.ckpt")
        back = STHCSSRegressor.load(tmp_path / "m.ckpt")
        np.testing.assert_array_equal(back.predict(X), est.predict(X))
        assert back.get_params()["window"] == 12

    def test_sthcss_eval_set(self, xy):
        X, y = xy
        est = STHCSSRegressor(epochs=1, **SMALL).fit(X[:300], y[:300], eval_set=(X[300:], y[300:]))
        assert len(est.history_.val_mse) == 2

    def test_clone_and_params(self):
        est = STHCSSRegressor(window=30, lr=0.01)
        c = clone(est)
        assert c.get_params() == est.get_params()
        assert "k_neighbors" in c.get_params()

    def test_too_short(self, xy):
        X, y = xy
        with pytest.raises(InsufficientDataError):
            STHCSSRegressor(window=85).fit(X[:100], y[:100])

    def test_nan_rejected(self, xy):
        X, y = xy
        X = X.copy()
        X[3, 2] = np.nan
        with pytest.raises(ValueError):
            STHCSSRegressor(**SMALL).fit(X, y)

    def test_ridge(self, xy):
        X, y = xy
        (Xtr, ytr), _, (Xte, yte) = chronological_split(X, y)
        est = RidgeWindowRegressor(window=12, alpha=1.0).fit(Xtr, ytr)
        assert est.predict(Xte).shape == (len(Xte) - 11,)
        assert est.coef_.shape == (12 * 12,)
        assert est.score(Xte, yte) > 0.0

    def test_ridge_linear_recovery(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 3))
        y = 2 * X[:, 0] - X[:, 2] + 1.0
        est = RidgeWindowRegressor(window=1, alpha=1e-8).fit(X, y)
        assert est.score(X, y) > 1 - 1e-9
