import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from spicecurves.data import FeatureGrid, build_grid
from spicecurves.ice import IceBundle, IceError, ice_curves, pd_curve, read_bundle, write_bundle
from spicecurves.predictor import ConstantPredictor, Predictor, knn_fit, linear_fit


class Failing(Predictor):
    name = "failing"

    def predict(self, X):
        if np.any(X[:, 0] > 5):
            raise RuntimeError("boom")
        return X[:, 0]


def bundle_of(values, ids=None):
    values = np.asarray(values, dtype=float)
    grid = FeatureGrid("x", np.arange(values.shape[1], dtype=float))
    ids = np.arange(len(values)) if ids is None else np.asarray(ids)
    return IceBundle("x", grid, ids, values)


class TestIceCurves:
    def test_constant_predictor(self, toy_dataset):
        grid = build_grid(toy_dataset, "x1", 7)
        b = ice_curves(ConstantPredictor(4.2), toy_dataset, "x1", grid)
        assert b.values.shape == (toy_dataset.n, 7)
        assert np.all(b.values == 4.2)
        assert np.all(np.ptp(b.values, axis=1) == 0)

    def test_additive_predictor_parallel(self, toy_dataset):
        p = linear_fit(toy_dataset)
        grid = build_grid(toy_dataset, "x1", 25)
        b = ice_curves(p, toy_dataset, "x1", grid)
        centered = b.values - b.values.mean(axis=1, keepdims=True)
        assert centered.std(axis=0).max() < 1e-9
        pd = pd_curve(b)
        shifts = b.values - pd
        assert np.ptp(shifts, axis=1).max() < 1e-9

    def test_knn_pointwise_oracle(self, toy_dataset):
        p = knn_fit(toy_dataset, 3)
        rows = np.array([0, 3, 8, 21, 39])
        grid = build_grid(toy_dataset, "x1", 4)
        b = ice_curves(p, toy_dataset, "x1", grid, rows)
        assert b.values.size == 20
        for r, i in enumerate(rows):
            for g, v in enumerate(grid.values):
                x = toy_dataset.feature_matrix([i]).copy()
                x[0, 0] = v
                assert b.values[r, g] == p.predict(x)[0]

    def test_workers_do_not_change_result(self, toy_dataset):
        p = knn_fit(toy_dataset, 3)
        grid = build_grid(toy_dataset, "x1", 16)
        a = ice_curves(p, toy_dataset, "x1", grid, workers=1)
        b = ice_curves(p, toy_dataset, "x1", grid, workers=4)
        np.testing.assert_array_equal(a.values, b.values)

    def test_error_carries_grid_point(self):
        ds = make_dataset({"x": np.linspace(0, 10, 5), "y": np.arange(5)}, ["x"])
        grid = build_grid(ds, "x", 3)
        with pytest.raises(IceError, match="grid point 2"):
            ice_curves(Failing(), ds, "x", grid)

    def test_categorical_feature_rejected(self, toy_dataset):
        grid = FeatureGrid("z", np.array([0.0, 1.0]))
        with pytest.raises(Exception):
            ice_curves(ConstantPredictor(1), toy_dataset, "z", grid)

    def test_bad_rows(self, toy_dataset):
        grid = build_grid(toy_dataset, "x1", 3)
        with pytest.raises(IceError):
            ice_curves(ConstantPredictor(1), toy_dataset, "x1", grid, [toy_dataset.n])


class TestPd:
    def test_single_curve(self):
        np.testing.assert_array_equal(pd_curve(bundle_of([[1.0, 5.0, 2.0]])), [1.0, 5.0, 2.0])

    def test_hand_mean(self):
        np.testing.assert_array_equal(pd_curve(bundle_of([[0, 0], [2, 4]])), [1, 2])

    def test_empty(self):
        with pytest.raises(IceError):
            pd_curve(bundle_of(np.zeros((0, 3))))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 60), st.integers(2, 12), st.integers(0, 2**31))
    def test_independent_mean_and_reorder(self, m, M, seed):
        rng = np.random.default_rng(seed)
        values = rng.normal(size=(m, M)) * 10 ** rng.uniform(-3, 3, size=(m, 1))
        ids = rng.permutation(10 * m)[:m]
        b = bundle_of(values, ids)
        pd = pd_curve(b)
        ref = np.array([sum(sorted(values[:, g], key=abs)) / m for g in range(M)])
        np.testing.assert_allclose(pd, ref, rtol=1e-12, atol=1e-12 * np.abs(values).max())
        perm = rng.permutation(m)
        assert pd_curve(b.take(perm)).tobytes() == pd.tobytes()


class TestIo:
    def test_round_trip(self, tmp_path, rng):
        b = bundle_of(rng.normal(size=(4, 6)), ids=[9, 2, 7, 5])
        path = tmp_path / "ice.csv"
        write_bundle(b, path)
        assert path.read_text().splitlines()[0] == "id,grid_value,prediction"
        again = read_bundle(path, "x")
        np.testing.assert_array_equal(again.ids, b.ids)
        np.testing.assert_array_equal(again.values, b.values)
        np.testing.assert_array_equal(again.grid.values, b.grid.values)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "x.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(IceError):
            read_bundle(p, "x")

    def test_duplicate_ids_rejected(self):
        with pytest.raises(IceError):
            bundle_of(np.zeros((2, 3)), ids=[1, 1])
