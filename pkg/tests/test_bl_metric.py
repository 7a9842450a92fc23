import numpy as np
import pytest

from trotterkit.bl_metric import (
    OracleSupportError,
    bl_distance,
    bl_dual_norm,
    bl_dual_norm_oracle,
    build_envelope_metric,
    dirac_distance_exact,
)
from trotterkit.measures import PositiveMeasure, SignedMeasure, StateSpace


@pytest.fixture
def path3():
    return StateSpace.finite([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])


def random_metric_space(rng, size):
    pts = rng.normal(size=(size, 3))
    return StateSpace.finite(np.linalg.norm(pts[:, None] - pts[None, :], axis=-1))


class TestDualNorm:
    def test_single_dirac_norm_is_mass(self, path3):
        value, _ = bl_dual_norm(PositiveMeasure.dirac(path3, 0, 0.7).as_signed(), path3)
        assert value == pytest.approx(0.7)

    def test_dirac_pair_closed_form(self, path3):
        mu = SignedMeasure.from_atoms(path3, [(0, 1.0), (2, -1.0)])
        value, witness = bl_dual_norm(mu, path3)
        assert value == pytest.approx(dirac_distance_exact(2.0), abs=1e-12)
        assert witness.check_feasible(path3)

    def test_witness_attains_value(self, path3):
        mu = SignedMeasure.from_atoms(path3, [(0, 0.6), (1, -0.9), (2, 0.2)])
        value, witness = bl_dual_norm(mu, path3)
        assert witness.pair(mu) == pytest.approx(value, abs=1e-9)
        assert witness.check_feasible(path3)

    def test_norm_dominated_by_tv(self, path3):
        rng = np.random.default_rng(5)
        for _ in range(20):
            w = rng.normal(size=3)
            mu = SignedMeasure.from_atoms(path3, list(enumerate(w)))
            value, _ = bl_dual_norm(mu, path3)
            assert value <= mu.tv + 1e-9

    def test_homogeneity_at_tiny_scale(self, path3):
        mu = SignedMeasure.from_atoms(path3, [(0, 4e-8), (2, -4e-8)])
        value, _ = bl_dual_norm(mu, path3)
        assert value == pytest.approx(4e-8 * dirac_distance_exact(2.0), rel=1e-9)

    def test_empty_measure(self, path3):
        mu = SignedMeasure.from_atoms(path3, [])
        value, _ = bl_dual_norm(mu, path3)
        assert value == 0.0

    def test_triangle_inequality(self, path3):
        rng = np.random.default_rng(11)
        for _ in range(10):
            a = SignedMeasure.from_atoms(path3, list(enumerate(rng.normal(size=3))))
            b = SignedMeasure.from_atoms(path3, list(enumerate(rng.normal(size=3))))
            na, _ = bl_dual_norm(a, path3)
            nb, _ = bl_dual_norm(b, path3)
            from trotterkit.measures import linear_combine
            nab, _ = bl_dual_norm(linear_combine([1.0, 1.0], [a, b]), path3)
            assert nab <= na + nb + 1e-9


class TestOracle:
    def test_agrees_with_lp(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            space = random_metric_space(rng, 4)
            mu = SignedMeasure.from_atoms(space, list(enumerate(rng.normal(size=4))))
            lp, _ = bl_dual_norm(mu, space)
            assert bl_dual_norm_oracle(mu, space) == pytest.approx(lp, abs=1e-9)

    def test_refuses_large_support(self):
        rng = np.random.default_rng(2)
        space = random_metric_space(rng, 8)
        mu = SignedMeasure.from_atoms(space, list(enumerate(rng.normal(size=8))))
        with pytest.raises(OracleSupportError):
            bl_dual_norm_oracle(mu, space)


class TestEnvelopeMetric:
    def test_envelope_dominates_base(self, path3):
        mu = SignedMeasure.from_atoms(path3, [(0, 1.0), (1, -0.5), (2, -0.5)])
        _, witness = bl_dual_norm(mu, path3)
        env = build_envelope_metric(path3, [witness])
        for i in range(3):
            for j in range(3):
                assert env.distance(i, j) >= path3.distance(i, j) - 1e-15

    def test_envelope_norm_at_least_base(self, path3):
        mu = SignedMeasure.from_atoms(path3, [(0, 0.5), (1, 0.1), (2, -0.6)])
        _, witness = bl_dual_norm(mu, path3)
        env = build_envelope_metric(path3, [witness])
        base_value, _ = bl_dual_norm(mu, path3)
        env_value, _ = bl_dual_norm(mu, env)
        assert env_value >= base_value - 1e-10


class TestDistances:
    def test_bl_distance_symmetry(self, path3):
        a = PositiveMeasure.from_atoms(path3, [(0, 0.5), (1, 0.5)])
        b = PositiveMeasure.from_atoms(path3, [(1, 0.3), (2, 0.7)])
        assert bl_distance(a, b, path3) == pytest.approx(bl_distance(b, a, path3), abs=1e-12)

    def test_identical_measures_distance_zero(self, path3):
        a = PositiveMeasure.from_atoms(path3, [(0, 0.5), (1, 0.5)])
        assert bl_distance(a, a, path3) == 0.0

    def test_euclidean_diracs(self):
        s = StateSpace.euclidean(2)
        a = PositiveMeasure.dirac(s, [0.0, 0.0])
        b = PositiveMeasure.dirac(s, [3.0, 4.0])
        assert bl_distance(a, b, s) == pytest.approx(dirac_distance_exact(5.0), abs=1e-9)
