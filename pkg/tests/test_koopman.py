import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from kdrmpc.koopman import (Dataset, Dictionary, LiftedModel, NonFinite, edmd_objective, fit_edmd,
                            lift, predict_nominal, read_dataset, write_dataset)

CUBIC = {"family": "powers", "degree": 3, "constant": True}


def cubic():
    return Dictionary.from_spec(2, CUBIC)


class TestDictionary:
    def test_origin_maps_to_origin(self):
        assert np.array_equal(lift(cubic(), [0.0, 0.0]), np.zeros(7))

    def test_hand_evaluation(self):
        d = cubic()
        s = lift(d, [1.0, 2.0])
        slot = {name: i for i, name in enumerate(d.names)}
        assert (s[0], s[1]) == (1.0, 2.0)
        assert s[slot["x1^3"]] == 1.0 and s[slot["x2^3"]] == 8.0
        assert s[slot["x1^2"]] == 1.0 and s[slot["x2^2"]] == 4.0
        assert s[slot["1"]] == 0.0
        assert d.names == ["x1", "x2", "1", "x1^2", "x2^2", "x1^3", "x2^3"]
        assert d.zero_slots.tolist() == [slot["1"]]

    def test_nonlinearity_witness(self):
        d = cubic()
        x = np.array([1.0, 0.0])
        assert not np.allclose(lift(d, 2 * x), 2 * lift(d, x))

    def test_nonfinite(self):
        with pytest.raises(NonFinite):
            lift(cubic(), [np.nan, 0.0])
        with pytest.raises(NonFinite):
            lift(cubic(), [0.0, np.inf])

    def test_batch_matches_single(self, rng):
        d = Dictionary.from_spec(3, {"family": "monomials", "degree": 3})
        X = rng.normal(size=(10, 3))
        assert np.allclose(d.lift(X), np.array([d.lift(x) for x in X]))

    def test_monomial_count(self):
        # all monomials of degree 2..3 in 2 variables: 3 + 4
        assert Dictionary.from_spec(2, {"family": "monomials", "degree": 3}).n == 2 + 7

    def test_rejects_identity_terms(self):
        with pytest.raises(ValueError):
            Dictionary(2, ((1, 0),))

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            Dictionary.from_spec(2, {"family": "fourier"})


class TestFit:
    def test_exact_linear_recovery(self, rng):
        n, m = 3, 2
        A0 = rng.normal(size=(n, n)) * 0.5
        B0 = rng.normal(size=(n, m))
        X = rng.normal(size=(200, n))
        U = rng.normal(size=(200, m))
        data = Dataset(X, U, X @ A0.T + U @ B0.T)
        model = fit_edmd(Dictionary.from_spec(n, {"family": "identity"}), data)
        assert np.allclose(model.A, A0, atol=1e-10) and np.allclose(model.B, B0, atol=1e-10)
        assert not model.ridge_used

    def test_scalar_normal_equations(self):
        x = np.array([0.1, -0.4, 0.7, 1.2, -0.9])
        u = np.array([1.0, 0.5, -0.3, 0.2, 0.8])
        xn = np.array([0.3, -0.1, 0.5, 1.5, -0.2])
        G = np.column_stack([x, u])
        oracle = np.linalg.inv(G.T @ G) @ G.T @ xn
        model = fit_edmd(Dictionary.from_spec(1, {"family": "identity"}), Dataset(x[:, None], u, xn[:, None]))
        assert model.A[0, 0] == pytest.approx(oracle[0], abs=1e-12)
        assert model.B[0, 0] == pytest.approx(oracle[1], abs=1e-12)

    def test_constant_slot_gets_zero_coefficients(self, rng):
        X = rng.normal(size=(300, 2))
        U = rng.normal(size=(300, 1))
        Xn = np.column_stack([X[:, 0] + 0.1 * X[:, 1], X[:, 1] - 0.1 * X[:, 0] ** 3 + 0.05 * U[:, 0]])
        model = fit_edmd(cubic(), Dataset(X, U, Xn))
        z = cubic().zero_slots
        assert np.all(model.A[:, z] == 0.0) and np.all(model.A[z, :] == 0.0)
        assert not model.ridge_used
        assert model.stats["normal_eq_residual_rel"] <= 1e-8

    def test_ridge_fallback_flagged(self):
        # two identical observables in effect: x1 and x2 always equal
        t = np.linspace(-1, 1, 20)
        X = np.column_stack([t, t])
        model = fit_edmd(Dictionary.from_spec(2, {"family": "identity"}), Dataset(X, np.zeros(20), 0.5 * X))
        assert model.ridge_used and np.all(np.isfinite(model.A))

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            fit_edmd(cubic(), Dataset(np.zeros((3, 2)), np.zeros(3), np.zeros((3, 2))))

    def test_local_optimality(self, rng):
        X = rng.normal(size=(400, 2))
        U = rng.normal(size=(400, 1))
        Xn = np.column_stack([X[:, 0] + 0.1 * X[:, 1], X[:, 1] - 0.1 * X[:, 0] ** 3 + 0.05 * U[:, 0]])
        data = Dataset(X, U, Xn)
        model = fit_edmd(cubic(), data)
        base = edmd_objective(model, data)
        for _ in range(20):
            dA = rng.normal(size=model.A.shape)
            dB = rng.normal(size=model.B.shape)
            scale = 1e-4 / np.sqrt(np.sum(dA**2) + np.sum(dB**2))
            pert = LiftedModel(model.A + scale * dA, model.B + scale * dB, model.dictionary)
            assert edmd_objective(pert, data) >= base - 1e-12 * max(1.0, base)

    def test_order_equivariance(self, rng):
        X = rng.normal(size=(100, 2))
        U = rng.normal(size=(100, 1))
        Xn = np.tanh(X) + 0.1 * U
        perm = rng.permutation(100)
        m1 = fit_edmd(cubic(), Dataset(X, U, Xn))
        m2 = fit_edmd(cubic(), Dataset(X[perm], U[perm], Xn[perm]))
        assert np.allclose(m1.A, m2.A, atol=1e-12) and np.allclose(m1.B, m2.B, atol=1e-12)


class TestModel:
    def test_output_maps(self):
        model = LiftedModel(np.zeros((7, 7)), np.zeros((7, 1)), cubic())
        assert np.array_equal(model.C @ model.D, np.eye(2))
        assert np.array_equal(model.C, np.hstack([np.eye(2), np.zeros((2, 5))]))

    def test_predict_nominal(self, rng):
        A = rng.normal(size=(7, 7))
        B = rng.normal(size=(7, 1))
        model = LiftedModel(A, B, cubic())
        s, u = rng.normal(size=7), rng.normal(size=1)
        assert np.array_equal(predict_nominal(model, np.zeros(7), [0.0]), np.zeros(7))
        assert np.allclose(predict_nominal(model, s, u), A @ s + B @ u)
        ident = LiftedModel(np.eye(7), np.zeros((7, 1)), cubic())
        assert np.array_equal(predict_nominal(ident, s, [1.0]), s)
        with pytest.raises(ValueError):
            predict_nominal(model, np.zeros(6), [0.0])

    def test_json_roundtrip(self, rng):
        model = LiftedModel(rng.normal(size=(7, 7)), rng.normal(size=(7, 1)), cubic())
        back = LiftedModel.from_json(model.to_json())
        assert np.array_equal(back.A, model.A) and np.array_equal(back.B, model.B)
        assert back.dictionary.terms == model.dictionary.terms
        json.loads(model.to_json())


def test_dataset_csv_roundtrip(tmp_path, rng):
    data = Dataset(rng.normal(size=(5, 2)), rng.normal(size=(5, 1)), rng.normal(size=(5, 2)))
    path = tmp_path / "d.csv"
    write_dataset(path, data)
    assert path.read_text().splitlines()[0] == "x1,x2,u1,xn1,xn2"
    back = read_dataset(path)
    assert np.array_equal(back.X, data.X) and np.array_equal(back.U, data.U)
    assert np.array_equal(back.Xn, data.Xn)


@given(arrays(float, 2, elements=st.floats(-10, 10)))
def test_lift_then_project_is_identity(x):
    d = cubic()
    model = LiftedModel(np.zeros((7, 7)), np.zeros((7, 1)), d)
    assert np.array_equal(model.C @ d.lift(x), x)
