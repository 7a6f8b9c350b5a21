"""Dense matrix kernels: decompositions and matrix-equation solvers.

Lyapunov and Sylvester equations are solved with the Bartels-Stewart method
(real Schur forms followed by the LAPACK quasi-triangular solver ``trsyl``).
Algebraic Riccati equations are solved with an ordered QZ decomposition of
the extended Hamiltonian pencil; both extremal solutions come from the stable
and the anti-stable deflating subspaces.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla
from scipy.linalg import lapack

from pamor.errors import (
    DimensionMismatch,
    Indefinite,
    NoConvergence,
    NoHamiltonianSplit,
    NonSymmetric,
    NotStable,
    SpectraOverlap,
)

__all__ = [
    'SymmetricSolution',
    'SylvesterSolver',
    'eig',
    'psd_factor',
    'schur_real',
    'solve_are_extremal',
    'solve_lyapunov',
    'solve_sylvester',
    'svd',
    'sym',
    'skew',
]


@dataclass(frozen=True)
class SymmetricSolution:
    """Symmetric solution of a matrix equation with its true residual.

    ``residual_norm`` is the Frobenius norm of the defining equation's
    residual, recomputed from ``X`` after the solve.
    """

    X: np.ndarray
    residual_norm: float
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.X.shape[0]


def sym(A):
    return 0.5 * (A + A.T)


def skew(A):
    return 0.5 * (A - A.T)


def _as_matrix(A, name='matrix'):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.ndim != 2:
        raise DimensionMismatch(f'{name} must be two-dimensional')
    if not np.all(np.isfinite(A)):
        raise ValueError(f'{name} has non-finite entries')
    return A


def _square(A, name):
    A = _as_matrix(A, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f'{name} must be square, got shape {A.shape}')
    return A


def _check_symmetric(W, tol, name='W'):
    nrm = np.linalg.norm(W, 'fro')
    if np.linalg.norm(W - W.T, 'fro') > tol * max(nrm, np.finfo(float).tiny):
        raise NonSymmetric(f'{name} is not symmetric')


def schur_real(A, sort=None):
    """Real Schur decomposition ``A = Q T Q^T`` with a reconstruction check."""
    A = _square(A, 'A')
    if A.shape[0] == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    try:
        if sort is None:
            T, Q = spla.schur(A, output='real')
        else:
            T, Q, _ = spla.schur(A, output='real', sort=sort)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f'real Schur decomposition failed: {exc}') from exc
    err = np.linalg.norm(A - Q @ T @ Q.T, 'fro')
    if err > 1e-12 * max(1.0, np.linalg.norm(A, 'fro')) * max(1, A.shape[0]) ** 0.5:
        raise NoConvergence(f'Schur reconstruction error {err:.3e} too large')
    return Q, T


def eig(A):
    """Eigenvalues with right and left eigenvectors.

    Returns ``(w, VR, VL)`` with ``A @ VR = VR @ diag(w)`` and
    ``VL.conj().T @ A = diag(w) @ VL.conj().T``; columns have unit 2-norm.
    """
    A = _square(A, 'A')
    try:
        w, VL, VR = spla.eig(A, left=True, right=True)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(f'eigenvalue computation failed: {exc}') from exc
    return w, VR, VL


def svd(A):
    """Thin SVD ``A = U diag(s) Vt`` with a reconstruction check."""
    A = _as_matrix(A, 'A')
    try:
        U, s, Vt = spla.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        try:
            U, s, Vt = spla.svd(A, full_matrices=False, lapack_driver='gesvd')
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f'SVD failed: {exc}') from exc
    err = np.linalg.norm(A - (U * s) @ Vt, 'fro')
    if err > 1e-12 * max(1.0, np.linalg.norm(A, 'fro')) * max(1, min(A.shape)) ** 0.5:
        raise NoConvergence(f'SVD reconstruction error {err:.3e} too large')
    return U, s, Vt


def _trsyl(T, S, C, trans_T='N', trans_S='N', allow_perturbed=False):
    """Solve ``op(T) Y + Y op(S) = C`` for quasi-triangular ``T`` and ``S``."""
    if T.size == 0 or S.size == 0:
        return np.zeros((T.shape[0], S.shape[0]))
    Y, scale, info = lapack.dtrsyl(T, S, C, trana=trans_T, tranb=trans_S, isgn=1)
    if info < 0:
        raise ValueError(f'illegal argument {-info} passed to trsyl')
    if info == 1 and not allow_perturbed:
        raise SpectraOverlap('Sylvester operator is (nearly) singular')
    return Y / scale


def _stability_check(T, stab_tol):
    ev = np.linalg.eigvals(T) if T.size else np.zeros(0)
    if ev.size and ev.real.max() >= -stab_tol:
        raise NotStable(f'matrix has an eigenvalue with real part {ev.real.max():.3e}')
    return ev


def solve_lyapunov(A, W, *, stab_tol=1e-10, sym_tol=1e-10):
    """Solve ``A^T X + X A + W = 0`` for symmetric ``W``.

    Parameters
    ----------
    A
        Square matrix with spectrum in the open left half-plane.
    W
        Symmetric right-hand side.
    stab_tol
        Eigenvalues with real part ``>= -stab_tol`` are rejected.
    sym_tol
        Relative tolerance for the symmetry check of ``W``.

    Returns
    -------
    SymmetricSolution
    """
    A = _square(A, 'A')
    W = _square(W, 'W')
    n = A.shape[0]
    if W.shape[0] != n:
        raise DimensionMismatch(f'A is {n}x{n} but W is {W.shape}')
    _check_symmetric(W, sym_tol)
    if n == 0:
        return SymmetricSolution(np.zeros((0, 0)), 0.0)
    U, T = schur_real(A)
    _stability_check(T, stab_tol)
    Y = _trsyl(T, T, -(U.T @ sym(W) @ U), trans_T='T', trans_S='N')
    X = sym(U @ Y @ U.T)
    res = np.linalg.norm(A.T @ X + X @ A + W, 'fro')
    return SymmetricSolution(X, float(res))


def solve_sylvester(A, B, C, *, gap_tol=1e-12):
    """Solve ``A Z + Z B + C = 0``.

    The equation is uniquely solvable iff ``A`` and ``-B`` share no
    eigenvalue; pairs with ``|lambda_i(A) + mu_j(B)| <= gap_tol`` raise
    :class:`SpectraOverlap`.
    """
    return SylvesterSolver(A, gap_tol=gap_tol).solve(B, C)


class SylvesterSolver:
    """Bartels-Stewart solver for ``A Z + Z B + C = 0`` with ``A`` fixed.

    The real Schur form of ``A`` is computed once, so repeated solves with
    small ``B`` (e.g. reduced matrices in a sweep) cost ``O(n^2 r)``.
    """

    def __init__(self, A, *, gap_tol=1e-12):
        self.A = _square(A, 'A')
        self.gap_tol = gap_tol
        self.U, self.T = schur_real(self.A)
        self.eigenvalues = np.linalg.eigvals(self.T) if self.T.size else np.zeros(0)

    def solve(self, B, C):
        B = _square(B, 'B')
        C = _as_matrix(C, 'C')
        n, r = self.A.shape[0], B.shape[0]
        if C.shape != (n, r):
            raise DimensionMismatch(f'C must be {n}x{r}, got {C.shape}')
        if n == 0 or r == 0:
            return np.zeros((n, r))
        V, S = schur_real(B)
        mu = np.linalg.eigvals(S)
        gap = np.abs(self.eigenvalues[:, None] + mu[None, :]).min()
        if gap <= self.gap_tol:
            raise SpectraOverlap(f'spectra of A and -B overlap (margin {gap:.3e})')
        Y = _trsyl(self.T, S, -(self.U.T @ C @ V))
        return self.U @ Y @ V.T


def psd_factor(W, rank_tol=1e-10):
    """Rank-revealing factorization ``W ~ F^T F`` of a symmetric PSD matrix.

    Eigenvalues of magnitude at most ``rank_tol * lambda_max(|W|)`` are treated
    as zero; rows of ``F`` are ordered by decreasing eigenvalue.

    Returns
    -------
    F
        ``rank x n`` factor.
    rank
        Number of retained eigenvalues.
    """
    W = _square(W, 'W')
    n = W.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0
    _check_symmetric(W, 1e-8)
    w, U = np.linalg.eigh(sym(W))
    lam_max = np.abs(w).max()
    if lam_max == 0:
        return np.zeros((0, n)), 0
    thresh = rank_tol * lam_max
    if w.min() < -thresh:
        raise Indefinite(f'matrix has eigenvalue {w.min():.3e} < -{thresh:.3e}')
    keep = np.flatnonzero(w > thresh)[::-1]
    F = np.sqrt(w[keep])[:, None] * U[:, keep].T
    return F, int(keep.size)


def _extended_pencil(A, B, C, R):
    # Deflating subspaces [U1; U2] of this pencil give X = U2 U1^{-1} solving
    # -A^T X - X A - (C^T - X B) R^{-1} (C - B^T X) = 0 without forming R^{-1}.
    n, m = B.shape
    Z = np.zeros((n, n))
    H = np.block([
        [A, Z, B],
        [Z, -A.T, C.T],
        [-C, B.T, -R],
    ])
    q, _ = np.linalg.qr(H[:, 2 * n:], mode='complete')
    q2 = q[:, m:]
    Hc = q2.T @ H[:, :2 * n]
    Jc = q2.T[:, :2 * n]
    return Hc, Jc


def are_residual(A, B, C, R, X):
    """Residual ``-A^T X - X A - (C^T - X B) R^{-1} (C - B^T X)``."""
    K = C - B.T @ X
    return -A.T @ X - X @ A - K.T @ np.linalg.solve(R, K)


def _newton_refine(A, B, C, R, X, steps):
    # Newton steps X <- X + D with Ac^T D + D Ac = F(X), Ac the closed loop.
    # Near-singular Lyapunov operators (closed-loop eigenvalues close to the
    # imaginary axis) are accepted; a step is kept only if it lowers the
    # residual.
    best = X
    best_res = np.linalg.norm(are_residual(A, B, C, R, X), 'fro')
    for _ in range(steps):
        F = sym(are_residual(A, B, C, R, best))
        Ac = A - B @ np.linalg.solve(R, C - B.T @ best)
        try:
            U, T = schur_real(Ac)
        except NoConvergence:
            break
        Y = _trsyl(T, T, U.T @ F @ U, trans_T='T', trans_S='N', allow_perturbed=True)
        Xn = sym(best + U @ Y @ U.T)
        res = np.linalg.norm(are_residual(A, B, C, R, Xn), 'fro')
        if not np.isfinite(res) or res >= 0.5 * best_res:
            if res < best_res:
                best, best_res = Xn, res
            break
        best, best_res = Xn, res
    return best


def solve_are_extremal(A, B, C, R, *, axis_tol=1e-10, order_tol=1e-8, pd_tol=1e-10,
                       refine_steps=3):
    """Extremal symmetric solutions of the positive-real Riccati equation.

    Solves ``-A^T X - X A - (C^T - X B) R^{-1} (C - B^T X) = 0`` from the
    stable and anti-stable deflating subspaces of the extended Hamiltonian
    pencil. The two candidates are labelled minimal/maximal by the
    definiteness of their difference. Each candidate is polished by up to
    ``refine_steps`` Newton steps, which matters when ``R`` is tiny (the
    regularized singular case).

    Returns
    -------
    X_min, X_max
        :class:`SymmetricSolution` instances. ``diagnostics`` records
        ``not_positive_definite`` (non-fatal) and, for ``X_min``, whether
        ``A - B R^{-1} (C - B^T X_min)`` has its spectrum in the closed left
        half-plane.
    """
    A = _square(A, 'A')
    B = _as_matrix(B, 'B')
    C = _as_matrix(C, 'C')
    R = _square(R, 'R')
    n, m = B.shape
    if A.shape[0] != n or C.shape != (m, n) or R.shape[0] != m:
        raise DimensionMismatch('inconsistent dimensions in Riccati data')
    _check_symmetric(R, 1e-10, 'R')
    if np.linalg.eigvalsh(sym(R)).min() <= 0:
        raise Indefinite('R must be symmetric positive definite')
    if n == 0:
        empty = SymmetricSolution(np.zeros((0, 0)), 0.0)
        return empty, empty

    Hc, Jc = _extended_pencil(A, B, C, sym(R))
    candidates = []
    for side in ('lhp', 'rhp'):
        try:
            AA, BB, alpha, beta, Qz, Zz = spla.ordqz(Hc, Jc, sort=side, output='real')
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NoHamiltonianSplit(f'ordered QZ failed: {exc}') from exc
        with np.errstate(divide='ignore', invalid='ignore'):
            lam = alpha / beta
        finite = np.isfinite(lam)
        scale = max(1.0, np.abs(lam[finite]).max()) if finite.any() else 1.0
        near_axis = bool(finite.any() and np.abs(lam[finite].real).min() <= axis_tol * scale)
        selected = np.count_nonzero(lam.real < 0) if side == 'lhp' else np.count_nonzero(lam.real > 0)
        if selected != n:
            raise NoHamiltonianSplit(
                f'{side} deflating subspace has dimension {selected}, expected {n}'
                + (' (eigenvalues on the imaginary axis)' if near_axis else ''))
        U1, U2 = Zz[:n, :n], Zz[n:, :n]
        if np.linalg.cond(U1) > 1e14:
            raise NoHamiltonianSplit(f'{side} subspace is not a graph subspace '
                                     f'(cond {np.linalg.cond(U1):.2e})')
        X = sym(np.linalg.solve(U1.T, U2.T).T)
        X = _newton_refine(A, B, C, R, X, refine_steps)
        candidates.append((X, near_axis))

    (X1, near1), (X2, near2) = candidates
    diff = np.linalg.eigvalsh(sym(X2 - X1))
    size = max(np.linalg.norm(X1, 2), np.linalg.norm(X2, 2), np.finfo(float).tiny)
    swapped = False
    if diff.min() < -order_tol * size:
        if diff.max() <= order_tol * size:
            X1, X2 = X2, X1
            swapped = True
        else:
            raise NoHamiltonianSplit('Riccati candidates are not ordered')

    out = []
    for X, label in ((X1, 'min'), (X2, 'max')):
        res = np.linalg.norm(are_residual(A, B, C, R, X), 'fro')
        lmin = np.linalg.eigvalsh(X).min()
        diag = {
            'kind': label,
            'near_imaginary_axis': near1 or near2,
            'not_positive_definite': bool(lmin < -pd_tol),
            'lambda_min': float(lmin),
            'relative_residual': float(res / max(np.linalg.norm(A.T @ X + X @ A, 'fro'), np.finfo(float).tiny)),
            'subspace_swapped': swapped,
        }
        if label == 'min':
            Acl = A - B @ np.linalg.solve(R, C - B.T @ X)
            diag['closed_loop_max_real'] = float(np.linalg.eigvals(Acl).real.max())
            diag['zeros_in_closed_lhp'] = bool(diag['closed_loop_max_real'] <= axis_tol * max(1.0, np.abs(Acl).max()))
        out.append(SymmetricSolution(X, float(res), diag))
    return out[0], out[1]
