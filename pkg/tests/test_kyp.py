import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pamor.errors import DimensionMismatch, Indefinite, SingularFeedthrough
from pamor.kyp import (
    Kind,
    KypSolution,
    dual_solution,
    kyp_residual,
    lure_factors_from_X,
    solution_from_X,
    solve_kyp_extremal,
    spectral_factor_system,
    verify_kyp,
)
from pamor.lti import StateSpaceSystem, popov_eval, transfer_eval, transposed_system
from pamor.models import random_passive

XMIN = 3 - 2 * np.sqrt(2)
XMAX = 3 + 2 * np.sqrt(2)


class TestResidual:
    def test_scalar_identity_weight(self, scalar):
        np.testing.assert_allclose(kyp_residual(scalar, [[1.0]]), 2 * np.eye(2))

    def test_zero_X(self):
        sys = StateSpaceSystem(-np.eye(2), np.ones((2, 1)), [[1.0, 2.0]])
        W = kyp_residual(sys, np.zeros((2, 2)))
        expected = np.zeros((3, 3))
        expected[:2, 2] = [1.0, 2.0]
        expected[2, :2] = [1.0, 2.0]
        np.testing.assert_allclose(W, expected)

    def test_ph_identity(self):
        ph = random_passive(6, 2, seed=4)
        sys = ph.to_system()
        T = np.block([[ph.Q, np.zeros((6, 2))], [np.zeros((2, 6)), np.eye(2)]])
        np.testing.assert_allclose(kyp_residual(sys, ph.Q), 2 * T @ ph.dissipation_matrix() @ T,
                                   atol=1e-10)


class TestExtremalSolutions:
    def test_scalar_min(self, scalar):
        sol = solve_kyp_extremal(scalar, 0.0, 'min')
        assert sol.kind == Kind.MIN
        assert sol.X[0, 0] == pytest.approx(XMIN, abs=1e-10)
        assert abs(sol.L[0, 0]) == pytest.approx(2 - np.sqrt(2), abs=1e-10)
        assert sol.L[0, 0] == pytest.approx((1 - XMIN) / np.sqrt(2), abs=1e-10)
        assert sol.M[0, 0] == pytest.approx(np.sqrt(2), abs=1e-12)
        # Lur'e equations
        assert -2 * sol.X[0, 0] * -1 == pytest.approx(sol.L[0, 0] ** 2, abs=1e-10)
        assert sol.X[0, 0] - 1 + sol.L[0, 0] * sol.M[0, 0] == pytest.approx(0, abs=1e-10)

    def test_scalar_max(self, scalar):
        sol = solve_kyp_extremal(scalar, 0.0, 'max')
        assert sol.kind == Kind.MAX
        assert sol.X[0, 0] == pytest.approx(XMAX, abs=1e-10)

    def test_both(self, scalar):
        smin, smax = solve_kyp_extremal(scalar)
        assert smin.epsilon == 0.0
        assert smin.X[0, 0] * smax.X[0, 0] == pytest.approx(1.0, abs=1e-10)

    def test_singular_feedthrough_default_epsilon(self):
        sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])
        with pytest.raises(SingularFeedthrough):
            solve_kyp_extremal(sys, 0.0)
        smin = solve_kyp_extremal(sys, None, 'min')
        assert smin.epsilon == pytest.approx(1e-12)
        assert verify_kyp(sys, smin).ok

    def test_not_passive(self):
        with pytest.raises(Indefinite):
            solve_kyp_extremal(StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]], [[-1.0]]))

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            solve_kyp_extremal(StateSpaceSystem(-np.eye(2), np.ones((2, 1)), np.ones((2, 2))))

    def test_msd_ordering(self, msd, msd_solutions):
        smin, smax, sq = (msd_solutions[k] for k in ('min', 'max', 'q'))
        assert smin.epsilon == pytest.approx(1e-12)
        Q = sq.X
        scale = np.linalg.norm(smax.X, 2)
        assert np.linalg.eigvalsh(Q - smin.X).min() >= -1e-8 * scale
        assert np.linalg.eigvalsh(smax.X - Q).min() >= -1e-8 * scale
        for sol in (smin, smax, sq):
            assert verify_kyp(msd['sys'], sol).ok


class TestFactors:
    def test_scalar_q(self, scalar):
        L, M, rank = lure_factors_from_X(scalar, [[1.0]])
        assert rank == 2
        np.testing.assert_allclose(L.T @ L, [[2.0]], atol=1e-14)
        np.testing.assert_allclose(L.T @ M, [[0.0]], atol=1e-14)
        np.testing.assert_allclose(M.T @ M, [[2.0]], atol=1e-14)

    def test_scalar_min_matches_riccati(self, scalar):
        L, M, rank = lure_factors_from_X(scalar, [[XMIN]])
        assert rank == 1
        assert abs(L[0, 0]) == pytest.approx(2 - np.sqrt(2), abs=1e-10)
        assert abs(M[0, 0]) == pytest.approx(np.sqrt(2), abs=1e-10)
        assert L[0, 0] * M[0, 0] > 0

    def test_rank_deficient(self):
        sys = StateSpaceSystem([[-1.0]], [[1.0]], [[1.0]])
        # D = 0 and X B = C^T give W(1) = diag(2, 0)
        _, _, rank = lure_factors_from_X(sys, [[1.0]])
        assert rank == 1


class TestVerification:
    def test_scalar_min_report(self, scalar):
        rep = verify_kyp(scalar, solve_kyp_extremal(scalar, 0.0, 'min'))
        assert rep.ok
        assert max(rep.lure_residuals) < 1e-10
        assert rep.popov_deviation < 1e-10

    def test_corrupted(self, scalar):
        sol = solve_kyp_extremal(scalar, 0.0, 'min')
        bad = KypSolution(sol.X + 1.0, sol.L, sol.M, sol.epsilon, sol.kind)
        rep = verify_kyp(scalar, bad)
        assert not rep.ok
        # X = 10 > X_max violates the inequality itself
        rep = verify_kyp(scalar, KypSolution(np.array([[10.0]]), sol.L, sol.M))
        assert rep.lambda_min_W < 0 and not rep.ok
        assert 'FAILED' in rep.summary()

    def test_msd_q_popov(self, msd, msd_solutions):
        rep = verify_kyp(msd['sys'], msd_solutions['q'])
        assert rep.popov_deviation < 1e-6


class TestDuality:
    def test_scalar(self, scalar):
        smin, smax = solve_kyp_extremal(scalar)
        dmin = dual_solution(smax)
        assert dmin.kind == Kind.MIN
        assert dmin.X[0, 0] == pytest.approx(1 / XMAX)
        assert verify_kyp(transposed_system(scalar), dmin).ok

    def test_random_transposed_min(self):
        sys = random_passive(6, 2, seed=9).to_system()
        smin, smax = solve_kyp_extremal(sys)
        tmin = solve_kyp_extremal(transposed_system(sys), which='min')
        np.testing.assert_allclose(dual_solution(smax).X, tmin.X, atol=1e-8 * np.linalg.norm(tmin.X))
        assert verify_kyp(transposed_system(sys), dual_solution(smin)).ok


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), n=st.integers(1, 10), m=st.integers(1, 3),
       strict=st.booleans())
def test_extremal_property(seed, n, m, strict):
    """Both solutions certify passivity, are ordered and reproduce the Popov function."""
    ph = random_passive(n, m, seed=seed, feedthrough=strict)
    sys = ph.to_system()
    smin, smax = solve_kyp_extremal(sys)
    assert verify_kyp(sys, smin).ok
    if strict:
        assert verify_kyp(sys, smax).ok
    else:
        # with singular D + D^T the regularized maximal solution is huge and
        # its Lur'e factors lose accuracy; only the inequality is checked
        W = kyp_residual(sys, smax.X)
        assert np.linalg.eigvalsh(W).min() >= -1e-8 * np.abs(W).max()
    scale = max(1.0, np.linalg.norm(smax.X, 2))
    assert np.linalg.eigvalsh(smax.X - smin.X).min() >= -1e-7 * scale
    assert np.linalg.eigvalsh(ph.Q - smin.X).min() >= -1e-7 * scale
    H = spectral_factor_system(sys, smin)
    for w in (0.0, 0.7, 5.0):
        Hw = transfer_eval(H, 1j * w)
        Phi = popov_eval(sys, w) + smin.epsilon * np.eye(m)
        assert np.linalg.norm(Hw.conj().T @ Hw - Phi) <= 1e-6 * max(1.0, np.linalg.norm(Phi))


def test_solution_from_X_wraps(scalar):
    sol = solution_from_X(scalar, [[1.0]])
    assert sol.kind == Kind.PROVIDED
    assert verify_kyp(scalar, sol).ok
