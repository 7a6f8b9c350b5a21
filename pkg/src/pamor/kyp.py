"""KYP inequality: extremal solutions, Lur'e factors, certification.

For a system ``(A, B, C, D)`` the KYP matrix is::

    W(X) = [[-A^T X - X A, C^T - X B],
            [C - B^T X,    D + D^T  ]]

and ``W(X) >= 0`` with ``X > 0`` certifies passivity. A factorization
``W(X) = [L M]^T [L M]`` yields the spectral factor ``(A, B, L, M)``.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from pamor.errors import DimensionMismatch, Indefinite, SingularFeedthrough, XNotPd
from pamor.linalg import psd_factor, solve_are_extremal, sym
from pamor.lti import FrequencyGrid, StateSpaceSystem, popov_eval, transfer_eval, _standard

__all__ = [
    'Kind',
    'KypReport',
    'KypSolution',
    'default_epsilon',
    'dual_solution',
    'kyp_residual',
    'lure_factors_from_X',
    'solution_from_X',
    'solve_kyp_extremal',
    'spectral_factor_system',
    'verify_kyp',
]


class Kind(str, Enum):
    MIN = 'min'
    MAX = 'max'
    PROVIDED = 'provided'


@dataclass(frozen=True, eq=False)
class KypSolution:
    """KYP certificate ``(X, L, M)`` with ``W(X) ~ [L M]^T [L M]``.

    ``epsilon`` is the feedthrough regularization used to compute ``X``; the
    factorization is then exact for ``D + D^T + epsilon I`` in place of
    ``D + D^T``.
    """

    X: np.ndarray
    L: np.ndarray
    M: np.ndarray
    epsilon: float = 0.0
    kind: Kind = Kind.PROVIDED
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def k(self):
        return self.L.shape[0]


def kyp_residual(sys, X):
    """KYP matrix ``W(X)`` (symmetrized)."""
    sys = _standard(sys)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape != (sys.n, sys.n):
        raise DimensionMismatch(f'X must be {sys.n}x{sys.n}, got {X.shape}')
    if sys.p != sys.m:
        raise DimensionMismatch('KYP matrix needs a square transfer function')
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    off = C.T - X @ B
    W = np.block([[-A.T @ X - X @ A, off], [off.T, D + D.T]])
    return sym(W)


def default_epsilon(sys):
    return 1e-12 * max(1.0, np.linalg.norm(sys.D + sys.D.T, 2))


def _sqrtm_spd(R):
    w, U = np.linalg.eigh(sym(R))
    return (U * np.sqrt(w)) @ U.T, (U / np.sqrt(w)) @ U.T


def solve_kyp_extremal(sys, epsilon=None, which='both', *, ordering_tol=1e-8):
    """Minimal and/or maximal solution of the positive-real Riccati equation.

    Solves ``-A^T X - X A - (C^T - X B) R^{-1} (C - B^T X) = 0`` with
    ``R = D + D^T + epsilon I`` and sets ``L = R^{-1/2} (C - B^T X)``,
    ``M = R^{1/2}``.

    Parameters
    ----------
    sys : StateSpaceSystem
        Minimal, stable, square system (generalized systems are converted).
    epsilon : float, optional
        Regularization. ``None`` uses zero when ``D + D^T`` is nonsingular and
        ``1e-12 * max(1, ||D + D^T||)`` otherwise.
    which : {'min', 'max', 'both'}

    Returns
    -------
    KypSolution or tuple of KypSolution
        ``(X_min, X_max)`` for ``which='both'``.
    """
    sys = _standard(sys)
    which = str(getattr(which, 'value', which)).lower()
    if which not in ('min', 'max', 'both'):
        raise ValueError(f"which must be 'min', 'max' or 'both', got {which!r}")
    if sys.p != sys.m:
        raise DimensionMismatch('positive-real Riccati equation needs square systems')
    Dsym = sys.D + sys.D.T
    scale = max(1.0, np.linalg.norm(Dsym, 2))
    dmin = np.linalg.eigvalsh(sym(Dsym)).min()
    if dmin < -1e-14 * scale:
        raise Indefinite(f'D + D^T is indefinite (lambda_min = {dmin:.3e}); the system is not passive')
    singular = dmin < 1e-14 * scale
    if epsilon is None:
        epsilon = default_epsilon(sys) if singular else 0.0
    if epsilon < 0:
        raise ValueError('epsilon must be nonnegative')
    if epsilon == 0 and singular:
        raise SingularFeedthrough('D + D^T is singular; a positive epsilon is required')
    R = sym(Dsym) + epsilon * np.eye(sys.m)
    Rh, Rih = _sqrtm_spd(R)
    Xmin, Xmax = solve_are_extremal(sys.A, sys.B, sys.C, R, order_tol=ordering_tol)
    out = []
    for sol, kind in ((Xmin, Kind.MIN), (Xmax, Kind.MAX)):
        if which not in ('both', kind.value):
            continue
        X = sol.X
        L = Rih @ (sys.C - sys.B.T @ X)
        diag = dict(sol.diagnostics, riccati_residual=sol.residual_norm)
        out.append(KypSolution(X, L, Rh.copy(), float(epsilon), kind, diag))
    return tuple(out) if which == 'both' else out[0]


def lure_factors_from_X(sys, X, rank_tol=1e-10):
    """Factor ``W(X) = [L M]^T [L M]`` with a rank-revealing PSD factorization.

    Returns
    -------
    L : ndarray, shape (k, n)
    M : ndarray, shape (k, m)
    rank : int
        ``k``, the numerical rank of ``W(X)``.
    """
    sys = _standard(sys)
    F, rank = psd_factor(kyp_residual(sys, X), rank_tol)
    return F[:, :sys.n], F[:, sys.n:], rank


def solution_from_X(sys, X, rank_tol=1e-10):
    """Wrap a user-provided KYP solution (e.g. the Hamiltonian ``Q``)."""
    X = sym(np.atleast_2d(np.asarray(X, dtype=float)))
    if X.size and np.linalg.eigvalsh(X).min() <= 0:
        raise XNotPd('KYP solution must be positive definite')
    L, M, rank = lure_factors_from_X(sys, X, rank_tol)
    return KypSolution(X, L, M, 0.0, Kind.PROVIDED, {'rank': rank})


def dual_solution(sol):
    """Map a solution for ``G`` to one for the transposed system ``G^T``.

    ``X^{-1}`` solves the KYP inequality of ``(A^T, C^T, B^T, D^T)`` with
    factors ``L_t = -L X^{-1}`` and ``M_t = M``. The map reverses the order,
    so the minimal solution of the transposed system is ``X_max^{-1}``.
    """
    Xi = sym(np.linalg.inv(sol.X))
    kind = {Kind.MIN: Kind.MAX, Kind.MAX: Kind.MIN}.get(sol.kind, Kind.PROVIDED)
    return KypSolution(Xi, -sol.L @ Xi, sol.M.copy(), sol.epsilon, kind,
                       {'mapped_from': sol.kind.value})


def spectral_factor_system(sys, sol):
    """State-space realization ``(A, B, L, M)`` of the spectral factor."""
    sys = _standard(sys)
    return StateSpaceSystem(sys.A, sys.B, sol.L, sol.M)


@dataclass(frozen=True)
class KypReport:
    """Diagnostics of a KYP certificate.

    Lur'e residuals are Frobenius norms of ``-A^T X - X A - L^T L``,
    ``X B - C^T + L^T M`` and ``D + D^T + epsilon I - M^T M``, each relative to
    the norm of the largest term in its equation or of ``W(X)``.
    """

    lambda_min_W: float
    lure_residuals: tuple
    popov_deviation: float
    x_lambda_min: float
    symmetric: bool
    ok: bool

    def summary(self):
        r1, r2, r3 = self.lure_residuals
        return (f'lambda_min(W)={self.lambda_min_W:.3e} lambda_min(X)={self.x_lambda_min:.3e} '
                f'lure=({r1:.2e}, {r2:.2e}, {r3:.2e}) popov={self.popov_deviation:.2e} '
                f'{"OK" if self.ok else "FAILED"}')


def _rel(res, floor, *terms):
    den = max([np.linalg.norm(t, 'fro') for t in terms] + [floor, np.finfo(float).tiny])
    return float(np.linalg.norm(res, 'fro') / den)


def verify_kyp(sys, sol, grid=None, *, tol=1e-6):
    """Check a KYP certificate: definiteness, Lur'e equations, Popov identity.

    The Popov identity ``H(-iw)^T H(iw) = Phi(iw)`` is sampled at 20
    logarithmically spaced frequencies unless ``grid`` is given.
    """
    sys = _standard(sys)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    X, L, M = sol.X, sol.L, sol.M
    W = kyp_residual(sys, X)
    lam_w = float(np.linalg.eigvalsh(W).min()) if W.size else 0.0
    lam_x = float(np.linalg.eigvalsh(sym(X)).min()) if X.size else np.inf
    lyap = -A.T @ X - X @ A
    wn = np.linalg.norm(W, 'fro')
    r1 = _rel(lyap - L.T @ L, wn, lyap, L.T @ L)
    r2 = _rel(X @ B - C.T + L.T @ M, wn, X @ B, C)
    Reps = D + D.T + sol.epsilon * np.eye(sys.m)
    r3 = _rel(Reps - M.T @ M, wn, Reps)
    H = StateSpaceSystem(A, B, L, M)
    grid = FrequencyGrid.logarithmic(1e-3, 1e3, 20) if grid is None else grid
    dev = 0.0
    for w in grid:
        Hw = transfer_eval(H, 1j * w)
        Phi = popov_eval(sys, w) + sol.epsilon * np.eye(sys.m)
        dev = max(dev, np.linalg.norm(Hw.conj().T @ Hw - Phi, 2) / max(np.linalg.norm(Phi, 2), 1e-300))
    scale = max(1.0, np.abs(W).max()) if W.size else 1.0
    symmetric = bool(np.allclose(X, X.T, rtol=0, atol=1e-12 * (1 + np.linalg.norm(X))))
    xn = np.linalg.norm(X, 2) if X.size else 1.0
    ok = bool(lam_w >= -1e-8 * scale and lam_x > -1e-10 * max(1.0, xn) and max(r1, r2, r3) <= tol
              and dev <= tol + 100 * sol.epsilon and symmetric)
    return KypReport(lam_w, (r1, r2, r3), float(dev), lam_x, symmetric, ok)
