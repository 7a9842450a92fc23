import numpy as np
import pytest

from trotterkit.bl_metric import bl_dual_norm
from trotterkit.measures import PositiveMeasure, SignedMeasure, StateSpace
from trotterkit.operators import (
    AUX_NORM_WEIGHTS,
    GeneratorError,
    MarkovOperatorSpec,
    SemigroupSpec,
    apply,
    apply_signed,
    at_time,
    dual_apply,
    m0_seminorm,
    pairing,
    semigroup_from_json,
)


@pytest.fixture
def path3():
    return StateSpace.finite([[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])


@pytest.fixture
def mu(path3):
    return PositiveMeasure.from_atoms(path3, [(0, 0.5), (1, 0.3), (2, 0.2)])


class TestOperators:
    def test_rejects_nonstochastic_matrix(self, path3):
        with pytest.raises(ValueError):
            MarkovOperatorSpec(kind="stochastic_matrix", space=path3,
                               matrix=np.eye(3) * 0.9)

    def test_matrix_apply_preserves_tv(self, path3, mu):
        m = np.array([[0.5, 0.0, 1.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.0]])
        P = MarkovOperatorSpec(kind="stochastic_matrix", space=path3, matrix=m)
        assert apply(P, mu).tv == pytest.approx(mu.tv, abs=1e-12)

    def test_apply_rejects_negative_weights(self, path3, mu):
        P = MarkovOperatorSpec.identity(path3)
        bad = PositiveMeasure(space=path3, points=(0,), weights=np.array([-1.0]))
        with pytest.raises(ValueError):
            apply(P, bad)

    def test_deterministic_map_pushforward(self):
        s = StateSpace.euclidean(1)
        P = MarkovOperatorSpec(kind="deterministic_map", space=s,
                               point_map=lambda x: x + 1.0)
        out = apply(P, PositiveMeasure.dirac(s, [0.0]))
        assert out.points[0] == (1.0,)

    def test_kernel_operator(self, path3):
        def k(p):
            return PositiveMeasure.from_atoms(path3, [(0, 0.5), (1, 0.5)])

        P = MarkovOperatorSpec(kind="kernel", space=path3, kernel=k)
        out = apply(P, PositiveMeasure.dirac(path3, 2))
        assert out.tv == pytest.approx(1.0, abs=1e-12)

    def test_apply_signed_jordan_route(self, path3):
        P = MarkovOperatorSpec.identity(path3)
        mu = SignedMeasure.from_atoms(path3, [(0, 1.0), (1, -0.5)])
        out = apply_signed(P, mu)
        assert out.tv == pytest.approx(1.5)


class TestDuality:
    def test_dual_pairing_adjoint(self, path3, mu):
        """<P mu, f> must equal <mu, Uf> for the stochastic-matrix dual."""
        m = np.array([[0.5, 0.0, 1.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.0]])
        P = MarkovOperatorSpec(kind="stochastic_matrix", space=path3, matrix=m)
        diff = SignedMeasure.from_atoms(path3, [(0, 0.4), (2, -0.4)])
        _, f = bl_dual_norm(diff, path3)
        uf = dual_apply(P, f)
        assert pairing(apply(P, mu), f) == pytest.approx(pairing(mu, uf), abs=1e-12)

    def test_dual_preserves_sup_bound(self, path3):
        P = MarkovOperatorSpec.identity(path3)
        diff = SignedMeasure.from_atoms(path3, [(0, 1.0), (1, -1.0)])
        _, f = bl_dual_norm(diff, path3)
        uf = dual_apply(P, f)
        assert np.max(np.abs(uf.values)) <= uf.sup_bound + 1e-12


class TestSemigroups:
    def test_generator_validation(self, path3):
        with pytest.raises(GeneratorError):
            SemigroupSpec.matrix_exponential(path3, np.ones((3, 3)))
        with pytest.raises(GeneratorError):
            SemigroupSpec.matrix_exponential(
                path3, [[-1.0, -1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])

    def test_exponential_is_stochastic(self, path3, mu):
        Q = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
        g = SemigroupSpec.matrix_exponential(path3, Q)
        P = at_time(g, 0.7)
        assert np.allclose(P.matrix.sum(axis=0), 1.0, atol=1e-12)
        assert apply(P, mu).tv == pytest.approx(mu.tv, abs=1e-12)

    def test_semigroup_property(self, path3):
        Q = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
        g = SemigroupSpec.matrix_exponential(path3, Q)
        ab = at_time(g, 0.3).matrix @ at_time(g, 0.4).matrix
        assert np.allclose(ab, at_time(g, 0.7).matrix, atol=1e-12)

    def test_time_zero_is_identity(self, path3):
        Q = np.array([[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]])
        g = SemigroupSpec.matrix_exponential(path3, Q)
        assert np.allclose(at_time(g, 0.0).matrix, np.eye(3))

    def test_negative_time_rejected(self, path3):
        Q = np.zeros((3, 3))
        g = SemigroupSpec.matrix_exponential(path3, Q)
        with pytest.raises(ValueError):
            at_time(g, -0.1)

    def test_linear_flow_lift(self):
        s = StateSpace.euclidean(2)
        g = SemigroupSpec.linear_flow_lift(s, [[0.0, 1.0], [0.0, 0.0]])
        out = apply(at_time(g, 1.0), PositiveMeasure.dirac(s, [0.0, 1.0]))
        assert out.points[0] == pytest.approx((1.0, 1.0))

    def test_named_flows(self):
        s = StateSpace.euclidean(2)
        g = SemigroupSpec.map_flow(s, "rotation", {"rate": np.pi / 2})
        out = apply(at_time(g, 1.0), PositiveMeasure.dirac(s, [1.0, 0.0]))
        assert np.allclose(out.points[0], (0.0, 1.0), atol=1e-12)

    def test_m0_seminorm(self):
        s = StateSpace.euclidean(1)
        g = SemigroupSpec.map_flow(s, "translation", {"velocity": [1.0]},
                                   aux_norm_weight=AUX_NORM_WEIGHTS["euclidean_norm"])
        mu = PositiveMeasure.from_atoms(s, [([2.0], 0.5), ([4.0], 0.5)])
        assert m0_seminorm(g, mu) == pytest.approx(3.0)

    def test_from_json(self, path3):
        g = semigroup_from_json(path3, {
            "kind": "matrix_exponential",
            "Q": [[-1.0, 1.0, 0.0], [1.0, -2.0, 1.0], [0.0, 1.0, -1.0]]})
        assert g.kind == "matrix_exponential"
        s = StateSpace.euclidean(1)
        g2 = semigroup_from_json(s, {"kind": "map_flow", "map": "translation",
                                     "params": {"velocity": [2.0]},
                                     "auxiliaryNormWeight": "one"})
        assert g2.aux_norm_weight is not None
