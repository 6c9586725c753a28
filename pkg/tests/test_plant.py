import numpy as np
import pytest

from kdrmpc.geometry import contains_many
from kdrmpc.plant import (DisturbanceSpec, PlantSpec, Trajectory, discretize, generate_disturbance_data,
                          generate_training_data, sample_disturbance, spawn_rngs, step)

UNIFORM = ({"kind": "uniform", "params": (-0.001, 0.001)}, {"kind": "uniform", "params": (-0.1, 0.1)})


def plant(**kw):
    base = dict(dynamics="mass_spring", params={"corrected": True}, disturbance=UNIFORM)
    base.update(kw)
    return PlantSpec(**base)


class TestStep:
    def test_equilibrium(self, rng):
        spec = PlantSpec()
        assert np.array_equal(step(spec, [0.0, 0.0], [0.0], rng), [0.0, 0.0])

    def test_exponential_decay(self, rng):
        spec = PlantSpec(dynamics="decay", n_x=1)
        assert step(spec, [1.0], [0.0], rng)[0] == pytest.approx(np.exp(-0.1), abs=1e-7)

    def test_rk4_vs_euler(self):
        spec = plant()
        eul = PlantSpec("mass_spring", {"corrected": True}, integrator="euler")
        for x in np.random.default_rng(0).uniform(-0.5, 0.5, size=(200, 2)):
            assert np.max(np.abs(discretize(spec, x, [0.0]) - discretize(eul, x, [0.0]))) <= 1e-2

    def test_rk4_euler_gap_is_second_order_term(self):
        # on |x| <= 2 the gap is dominated by dt^2/2 * J f; the cubic spring makes it exceed 1e-2 there
        spec = plant()
        eul = PlantSpec("mass_spring", {"corrected": True}, integrator="euler")
        h = spec.dt
        for x in np.random.default_rng(1).uniform(-2, 2, size=(100, 2)):
            f = spec.vector_field(x, [0.0])
            J = np.array([[0.0, 1.0], [-3.0 * x[0] ** 2, -1.5]])
            gap = discretize(spec, x, [0.0]) - discretize(eul, x, [0.0])
            assert np.max(np.abs(gap - 0.5 * h**2 * J @ f)) <= 0.02 + 0.2 * np.max(np.abs(0.5 * h**2 * J @ f))

    def test_rk4_local_error_order(self):
        # halving the step reduces the rk4-euler gap by ~4 (second-order difference)
        x = np.array([1.0, -0.5])
        gaps = []
        for dt in (0.1, 0.05):
            a = discretize(PlantSpec("mass_spring", {"corrected": True}, dt=dt), x, [1.0])
            b = discretize(PlantSpec("mass_spring", {"corrected": True}, dt=dt, integrator="euler"), x, [1.0])
            gaps.append(np.linalg.norm(a - b))
        assert 3.5 < gaps[0] / gaps[1] < 4.5

    def test_literal_and_corrected_differ(self):
        lit = PlantSpec("mass_spring", {"corrected": False})
        cor = PlantSpec("mass_spring", {"corrected": True})
        x = np.array([0.5, 0.2])
        assert lit.vector_field(x, [0.0])[0] == 0.5 and cor.vector_field(x, [0.0])[0] == 0.2

    def test_explicit_disturbance(self, rng):
        spec = plant()
        assert np.array_equal(step(spec, [0.0, 0.0], [0.0], rng, w=np.array([0.1, 0.2])), [0.1, 0.2])

    def test_nonfinite_propagates(self, rng):
        assert np.isnan(step(plant(), [np.nan, 0.0], [0.0], rng)).any()

    def test_bad_specs(self):
        with pytest.raises(ValueError):
            PlantSpec(dt=0.0)
        with pytest.raises(ValueError):
            PlantSpec(dynamics="pendulum")
        with pytest.raises(ValueError):
            PlantSpec(integrator="rk45")
        with pytest.raises(ValueError):
            PlantSpec(disturbance=({"kind": "zero"},))


class TestDisturbance:
    def test_zero(self, rng):
        assert np.array_equal(sample_disturbance(PlantSpec(), rng), [0.0, 0.0])

    def test_uniform_mean(self, rng):
        w = DisturbanceSpec("uniform", (-0.1, 0.1)).sample(rng, 100_000)
        assert -0.002 < w.mean() < 0.002

    def test_beta_std(self, rng):
        a = b = 100.0
        exact = np.sqrt(a * b / ((a + b) ** 2 * (a + b + 1)))
        assert exact == pytest.approx(0.0353, abs=5e-5)
        w = DisturbanceSpec("beta_affine", (a, b, 1.0, -0.5)).sample(rng, 100_000)
        assert w.std() == pytest.approx(exact, rel=0.1)
        assert abs(w.mean()) < 1e-3
        w2 = DisturbanceSpec("beta_affine", (a, b, 0.002, -0.5)).sample(rng, 100_000)
        assert w2.std() == pytest.approx(0.002 * exact, rel=0.1)

    def test_samples_inside_support(self, rng):
        spec = plant(disturbance=({"kind": "beta_affine", "params": (100, 100, 0.002, -0.5)},
                                  {"kind": "uniform", "params": (-0.1, 0.1)}))
        W = sample_disturbance(spec, rng, 20_000)
        assert W.shape == (20_000, 2)
        assert np.all(contains_many(spec.support_box, W, tol=0.0))
        assert np.allclose(spec.support_box.halfwidth, [0.001, 0.1])

    def test_equilibrium_mean(self, rng):
        spec = plant()
        X = np.array([step(spec, [0.0, 0.0], [0.0], rng) for _ in range(5000)])
        sigma = 0.2 / np.sqrt(12)
        assert abs(X[:, 1].mean()) < 3 * sigma / np.sqrt(5000)

    def test_bad_laws(self):
        with pytest.raises(ValueError):
            DisturbanceSpec("uniform", (1.0, 0.0))
        with pytest.raises(ValueError):
            DisturbanceSpec("beta_affine", (0.0, 1.0, 1.0, 0.0))
        with pytest.raises(ValueError):
            DisturbanceSpec("gauss", ())


class TestData:
    def test_single_triple(self, rng):
        data, info = generate_training_data(plant(), 1, 1, rng)
        assert len(data) == 1 and info["truncated"] == 0

    def test_deterministic(self):
        a, _ = generate_training_data(plant(), 5, 20, np.random.default_rng(3))
        b, _ = generate_training_data(plant(), 5, 20, np.random.default_rng(3))
        assert np.array_equal(a.X, b.X) and np.array_equal(a.U, b.U) and np.array_equal(a.Xn, b.Xn)

    def test_consecutive_transitions_chain(self, rng):
        data, _ = generate_training_data(plant(), 1, 30, rng, safety_box=1e9)
        assert np.array_equal(data.X[1:], data.Xn[:-1])

    def test_safety_box_truncates(self, rng):
        data, info = generate_training_data(plant(), 50, 100, rng, safety_box=3.0)
        assert info["truncated"] > 0
        assert np.all(np.abs(data.Xn) <= 3.0) and np.all(np.abs(data.X) <= 3.0 + 10)

    def test_disturbance_data(self, rng):
        spec = plant()
        eps, L = 1e-4, 1.2
        D = generate_disturbance_data(spec, eps, 20_000, rng)
        assert np.all(np.linalg.norm(D.X, axis=1) <= eps + 1e-15)
        assert np.all(D.U == 0.0)
        box = spec.support_box.expand(L * eps)
        assert np.all(contains_many(box, D.Xn, tol=0.0))

    def test_zero_radius_is_exact(self, rng):
        D = generate_disturbance_data(plant(), 0.0, 100, rng)
        assert np.all(D.X == 0.0) and np.all(contains_many(plant().support_box, D.Xn, tol=0.0))

    def test_spawned_streams_independent(self):
        a = [r.random() for r in spawn_rngs(5, 3)]
        b = [r.random() for r in spawn_rngs(5, 3)]
        assert a == b and len(set(a)) == 3
        ss = np.random.default_rng(0).bit_generator.seed_seq
        assert len(spawn_rngs(ss, 2)) == 2


def test_trajectory_length_checks():
    T = 3
    ok = Trajectory(np.zeros((T + 1, 2)), np.zeros((T, 1)), np.zeros((T, 2)), np.zeros(T), np.zeros(T))
    assert ok.T == T
    with pytest.raises(ValueError):
        Trajectory(np.zeros((T, 2)), np.zeros((T, 1)), np.zeros((T, 2)), np.zeros(T), np.zeros(T))
