import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pamor.errors import DimensionMismatch, ESingular, Infinite, NotPsd, NotStable
from pamor.kyp import kyp_residual
from pamor.lti import (
    FrequencyGrid,
    H2ErrorEvaluator,
    PhRepresentation,
    StateSpaceSystem,
    direct_sum,
    dual_system,
    generalized_to_standard,
    gramians,
    h2_error,
    h2_norm,
    hankel_singular_values,
    hinf_norm,
    is_passive_sampled,
    minimal_realization,
    minimality_rank,
    ph_from_solution,
    popov_eval,
    similarity_transform,
    transfer_derivative,
    transfer_eval,
)
from pamor.models import random_passive, random_stable

SAMPLES = [0.3, 1 + 2j, 0.5 - 1j, 4j, 2.5]


class TestStateSpaceSystem:
    def test_dimensions(self):
        sys = StateSpaceSystem(np.zeros((3, 3)), np.zeros((3, 2)), np.zeros((4, 3)))
        assert (sys.n, sys.m, sys.p) == (3, 2, 4)
        np.testing.assert_array_equal(sys.D, np.zeros((4, 2)))

    def test_static_needs_D(self):
        with pytest.raises(DimensionMismatch):
            StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            StateSpaceSystem(np.eye(2), np.ones((3, 1)), np.ones((1, 2)))

    def test_E_must_be_spd(self):
        with pytest.raises(ESingular):
            StateSpaceSystem(-np.eye(2), np.ones((2, 1)), np.ones((1, 2)), None, np.diag([1.0, -1.0]))


class TestEvaluation:
    def test_transfer_values(self, scalar):
        strictly = scalar.with_feedthrough([[0.0]])
        assert transfer_eval(strictly, 0)[0, 0] == pytest.approx(1.0)
        assert transfer_eval(scalar, 1)[0, 0] == pytest.approx(1.5)

    def test_static_system(self):
        D = np.array([[2.0, 1.0], [0.0, 3.0]])
        sys = StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 2)), np.zeros((2, 0)), D)
        for s in SAMPLES:
            np.testing.assert_array_equal(transfer_eval(sys, s), D)

    def test_derivative_finite_difference(self, rng):
        sys = random_stable(6, 2, 3, seed=5)
        s, h = 0.7 + 0.4j, 1e-6
        fd = (transfer_eval(sys, s + h) - transfer_eval(sys, s - h)) / (2 * h)
        np.testing.assert_allclose(transfer_derivative(sys, s), fd, rtol=1e-6, atol=1e-8)

    def test_popov_scalar(self, scalar):
        assert popov_eval(scalar, 0.0)[0, 0].real == pytest.approx(4.0)
        assert popov_eval(scalar, 1e6)[0, 0].real == pytest.approx(2.0, abs=1e-10)

    def test_popov_hermitian(self):
        sys = random_stable(5, 2, 2, seed=2)
        for w in (0.0, 0.5, 3.0):
            Phi = popov_eval(sys, w)
            np.testing.assert_allclose(Phi, Phi.conj().T, atol=1e-14)

    def test_generalized_matches(self):
        sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]], None, [[2.0]])
        std, Q = generalized_to_standard(sys)
        assert std.A[0, 0] == pytest.approx(-0.5)
        assert std.C[0, 0] == pytest.approx(0.5)
        assert Q[0, 0] == pytest.approx(0.5)
        np.testing.assert_allclose(transfer_eval(std, 1.0), transfer_eval(sys, 1.0))

    def test_generalized_identity(self):
        sys = random_stable(4, 1, 1, seed=0)
        gen = StateSpaceSystem(sys.A, sys.B, sys.C, sys.D, np.eye(4))
        std, Q = generalized_to_standard(gen)
        np.testing.assert_allclose(std.A, sys.A)
        np.testing.assert_allclose(Q, np.eye(4))

    def test_generalized_ph_keeps_kyp(self, rng):
        n = 6
        S = rng.standard_normal((n, n))
        J = S - S.T
        F = rng.standard_normal((n, 2))
        R = F @ F.T
        M = rng.standard_normal((n, n))
        E = M @ M.T + n * np.eye(n)
        G = rng.standard_normal((n, 1))
        std, Q = generalized_to_standard(StateSpaceSystem(J - R, G, G.T, None, E))
        W = kyp_residual(std, Q)
        assert np.linalg.eigvalsh(W).min() >= -1e-10 * np.abs(W).max()


class TestNorms:
    def test_gramians_scalar(self):
        P, Q = gramians(StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]]))
        assert P.X[0, 0] == pytest.approx(0.5)
        assert Q.X[0, 0] == pytest.approx(0.5)

    def test_gramians_zero_B(self):
        P, _ = gramians(StateSpaceSystem(-np.eye(2), np.zeros((2, 1)), np.ones((1, 2))))
        np.testing.assert_array_equal(P.X, np.zeros((2, 2)))

    def test_gramians_symmetric_system(self, rng):
        M = rng.standard_normal((4, 4))
        A = -(M @ M.T) - np.eye(4)
        B = rng.standard_normal((4, 2))
        P, Q = gramians(StateSpaceSystem(A, B, B.T))
        np.testing.assert_allclose(P.X, Q.X, atol=1e-12)

    def test_h2_scalar(self):
        sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])
        assert h2_norm(sys) == pytest.approx(np.sqrt(0.5), rel=1e-12)
        # quadrature oracle
        w = np.linspace(-2000, 2000, 400001)
        quad = np.trapezoid(1 / (1 + w ** 2), w) / (2 * np.pi)
        assert h2_norm(sys) ** 2 == pytest.approx(quad, rel=1e-3)

    def test_h2_zero_and_additivity(self):
        sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])
        assert h2_norm(StateSpaceSystem([[-1.0]], [[0.0]], [[1.0]])) == 0.0
        assert h2_norm(direct_sum(sys, sys)) == pytest.approx(np.sqrt(2) * h2_norm(sys))

    def test_h2_feedthrough_infinite(self, scalar):
        with pytest.raises(Infinite):
            h2_norm(scalar)

    def test_h2_unstable(self):
        with pytest.raises(NotStable):
            h2_norm(StateSpaceSystem([[1.0]], [[1.0]], [[1.0]]))

    def test_h2_error_evaluator_agrees(self):
        sys = random_stable(20, 2, 2, seed=4)
        rom = random_stable(4, 2, 2, seed=5)
        ev = H2ErrorEvaluator(sys)
        assert ev(rom) == pytest.approx(h2_error(sys, rom), rel=1e-8)
        assert ev.norm == pytest.approx(h2_norm(sys), rel=1e-12)

    def test_hinf_examples(self, scalar):
        assert hinf_norm(StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])) == pytest.approx(1.0, rel=1e-6)
        static = StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[3.0]])
        assert hinf_norm(static) == pytest.approx(3.0)
        w = np.linspace(0, 100, 100001)
        grid_max = np.abs(1 + 1 / (1j * w + 1)).max()
        assert hinf_norm(scalar) == pytest.approx(grid_max, rel=1e-6)
        assert hinf_norm(scalar) == pytest.approx(2.0, rel=1e-6)

    def test_hinf_resonant_peak(self):
        # lightly damped oscillator, peak away from every grid point
        zeta, w0 = 1e-3, 3.3
        A = np.array([[0.0, 1.0], [-w0 ** 2, -2 * zeta * w0]])
        sys = StateSpaceSystem(A, [[0.0], [1.0]], [[1.0, 0.0]])
        ref = 1 / (2 * zeta * w0 ** 2 * np.sqrt(1 - zeta ** 2))
        assert hinf_norm(sys) == pytest.approx(ref, rel=1e-5)

    def test_hankel_values(self):
        assert hankel_singular_values(StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]]))[0] == pytest.approx(0.5)
        hsv = hankel_singular_values(StateSpaceSystem(-np.eye(3), np.ones((3, 1)), np.zeros((1, 3))))
        np.testing.assert_array_equal(hsv, np.zeros(3))

    def test_hankel_descending(self):
        hsv = hankel_singular_values(random_stable(10, 2, 2, seed=1))
        assert np.all(np.diff(hsv) <= 1e-15)


class TestPassivity:
    def test_scalar_passive(self, scalar):
        passive, margin, skipped = is_passive_sampled(scalar)
        assert passive and not skipped
        assert margin == pytest.approx(2.0, rel=1e-6)

    def test_negated_output(self, scalar):
        # G(s) = s / (s + 1) is still positive real: Phi(iw) = 2 w^2 / (1 + w^2)
        neg = StateSpaceSystem(scalar.A, scalar.B, -scalar.C, scalar.D)
        passive, margin, _ = is_passive_sampled(neg, FrequencyGrid.logarithmic(include_zero=True))
        assert passive
        assert margin == pytest.approx(0.0, abs=1e-12)
        # G(s) = 1 - 3 / (s + 1): Phi(0) = 2 - 6 < 0
        neg3 = StateSpaceSystem(scalar.A, scalar.B, -3 * scalar.C, scalar.D)
        passive, margin, _ = is_passive_sampled(neg3, FrequencyGrid.logarithmic(include_zero=True))
        assert not passive
        assert margin == pytest.approx(-4.0, rel=1e-6)

    def test_static_identity(self):
        sys = StateSpaceSystem(np.zeros((0, 0)), np.zeros((0, 1)), np.zeros((1, 0)), [[1.0]])
        passive, margin, _ = is_passive_sampled(sys)
        assert passive and margin == pytest.approx(2.0)

    def test_dual(self, scalar):
        d = dual_system(scalar)
        assert (d.A[0, 0], d.B[0, 0], d.C[0, 0], d.D[0, 0]) == (1.0, -1.0, 1.0, 1.0)
        dd = dual_system(d)
        for s in SAMPLES:
            np.testing.assert_allclose(transfer_eval(dd, s), transfer_eval(scalar, s), atol=1e-14)
        sys = random_stable(5, 2, 3, seed=8)
        ds = dual_system(sys)
        for s in SAMPLES:
            np.testing.assert_allclose(transfer_eval(ds, s), transfer_eval(sys, -s).T, atol=1e-12)


class TestPortHamiltonian:
    def test_scalar_from_solution(self, scalar):
        ph = ph_from_solution(scalar, [[1.0]])
        for name, val in dict(J=0, R=1, Q=1, G=1, P=0, S=1, N=0).items():
            assert getattr(ph, name)[0, 0] == pytest.approx(val)
        ph.check()

    def test_reassembly(self):
        ph = random_passive(6, 2, seed=11)
        sys = ph.to_system()
        back = ph_from_solution(sys, ph.Q)
        back.check()
        re = back.to_system()
        for name in 'ABCD':
            np.testing.assert_allclose(getattr(re, name), getattr(sys, name), atol=1e-12)

    def test_from_minimal_solution(self, scalar):
        ph = ph_from_solution(scalar, [[3 - 2 * np.sqrt(2)]])
        ph.check(tol=1e-8)

    def test_kyp_identity(self):
        ph = random_passive(7, 2, seed=21)
        sys = ph.to_system()
        T = np.block([[ph.Q, np.zeros((7, 2))], [np.zeros((2, 7)), np.eye(2)]])
        np.testing.assert_allclose(kyp_residual(sys, ph.Q), 2 * T @ ph.dissipation_matrix() @ T, atol=1e-10)

    def test_invalid_structure(self):
        with pytest.raises(NotPsd):
            PhRepresentation(np.eye(2), None, None, np.ones((2, 1)))
        with pytest.raises(NotPsd):
            PhRepresentation(np.zeros((2, 2)), -np.eye(2), None, np.ones((2, 1)))


class TestMinimality:
    def test_minimal_unchanged(self):
        sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])
        red = minimal_realization(sys)
        assert red.n == 1
        assert h2_error(sys, red) < 1e-14

    def test_drop_unobservable_state(self):
        sys = StateSpaceSystem(np.diag([-1.0, -2.0]), [[1.0], [1.0]], [[1.0, 0.0]])
        red = minimal_realization(sys)
        assert red.n == 1
        assert h2_error(sys, red) < 1e-12

    def test_ranks(self):
        assert minimality_rank(StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])) == (1, 1)
        assert minimality_rank(StateSpaceSystem(-np.eye(2), np.zeros((2, 1)), np.ones((1, 2))))[0] == 0
        A = np.array([[-1.0, 0.0], [2.0, -2.0]])
        assert minimality_rank(StateSpaceSystem(A, [[1.0], [0.0]], [[1.0, 0.0]])) == (2, 1)

    def test_similarity_invariance(self, rng):
        sys = random_stable(5, 2, 2, seed=3)
        T = rng.standard_normal((5, 5)) + 5 * np.eye(5)
        t = similarity_transform(sys, T)
        for s in SAMPLES:
            np.testing.assert_allclose(transfer_eval(t, s), transfer_eval(sys, s), atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 12), m=st.integers(1, 3))
def test_random_passive_is_passive(seed, n, m):
    ph = random_passive(n, m, seed=seed)
    ph.check()
    assert is_passive_sampled(ph.to_system())[0]


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_h2_error_symmetric(seed):
    a = random_stable(6, 2, 2, seed=seed)
    b = random_stable(3, 2, 2, seed=seed + 1)
    assert h2_error(a, b) == pytest.approx(h2_error(b, a), rel=1e-8)
