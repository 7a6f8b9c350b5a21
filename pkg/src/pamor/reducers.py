"""Projection-based reference reducers.

* :func:`irka` -- iterative rational Krylov algorithm (tangential, MIMO).
* :func:`ph_irka` -- one-sided variant with ``W = Q V (V^T Q V)^{-1}`` that
  keeps a port-Hamiltonian structure.
* :func:`prbt` -- positive-real balanced truncation.
"""

import logging
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from pamor.errors import (
    DefectiveSpectrum,
    DimensionMismatch,
    InvalidConfig,
    NoStableRom,
    NotBiorthogonal,
    RankDeficientBasis,
    SingularShift,
    SpectraOverlap,
)
from pamor.kyp import dual_solution, solve_kyp_extremal
from pamor.linalg import eig, psd_factor, skew, svd, sym
from pamor.lti import (
    STAB_TOL,
    H2ErrorEvaluator,
    PhRepresentation,
    StateSpaceSystem,
    _standard,
    transfer_derivative,
    transfer_eval,
)

log = logging.getLogger(__name__)

# iterates kept for the best-iterate choice of non-converged runs
BEST_WINDOW = 20

__all__ = [
    'InterpolationData',
    'InterpolationReport',
    'ReducerConfig',
    'ReductionResult',
    'balanced_truncation',
    'irka',
    'ph_irka',
    'ph_irka_kyp',
    'pole_residue',
    'prbt',
    'projection_rom',
    'tangential_basis',
    'verify_interpolation',
]


@dataclass(frozen=True, eq=False)
class InterpolationData:
    """Interpolation points with right and left tangential directions.

    ``right_dirs`` has shape ``(r, m)`` and ``left_dirs`` shape ``(r, p)``;
    row ``i`` belongs to ``points[i]``. Left directions may be omitted for
    one-sided methods.
    """

    points: np.ndarray
    right_dirs: np.ndarray
    left_dirs: np.ndarray = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex).ravel()
        rd = np.atleast_2d(np.asarray(self.right_dirs, dtype=complex))
        if rd.shape[0] != pts.size:
            rd = rd.reshape(pts.size, -1)
        object.__setattr__(self, 'points', pts)
        object.__setattr__(self, 'right_dirs', rd)
        if self.left_dirs is not None:
            ld = np.atleast_2d(np.asarray(self.left_dirs, dtype=complex))
            if ld.shape[0] != pts.size:
                ld = ld.reshape(pts.size, -1)
            object.__setattr__(self, 'left_dirs', ld)
        self._check_conjugate_closed()

    def _check_conjugate_closed(self, tol=1e-8):
        pts = self.points
        scale = max(1.0, np.abs(pts).max(initial=0))
        for s in pts[np.abs(pts.imag) > tol * scale]:
            if np.abs(pts - s.conjugate()).min() > tol * scale:
                raise ValueError(f'point {s} has no conjugate partner')

    @property
    def r(self):
        return self.points.size


@dataclass(frozen=True)
class ReducerConfig:
    """Iteration controls shared by the interpolatory reducers."""

    max_iters: int = 200
    conv_tol: float = 1e-6
    restarts: int = 3
    seed: int = 0
    stability_retry: int = 10

    def __post_init__(self):
        for name in ('max_iters', 'restarts'):
            if getattr(self, name) < 1:
                raise InvalidConfig(f'{name} must be positive')
        if self.stability_retry < 0:
            raise InvalidConfig('stability_retry must be nonnegative')
        if not self.conv_tol > 0:
            raise InvalidConfig('conv_tol must be positive')


@dataclass(eq=False)
class ReductionResult:
    """Reduced model with its projection data and iteration record."""

    rom: StateSpaceSystem
    V: np.ndarray = None
    W: np.ndarray = None
    iterations: int = 0
    converged: bool = True
    history: list = field(default_factory=list)
    ph: PhRepresentation = None
    interpolation: InterpolationData = None
    h2_error: float = None
    info: dict = field(default_factory=dict)


def _check_biorthogonal(V, W, tol=1e-8):
    if V.shape != W.shape:
        raise DimensionMismatch(f'V {V.shape} and W {W.shape} differ in shape')
    dev = np.linalg.norm(W.T @ V - np.eye(V.shape[1]), 'fro')
    if dev > tol:
        raise NotBiorthogonal(f'||W^T V - I||_F = {dev:.3e}')


def projection_rom(sys, V, W, *, tol=1e-8):
    """Petrov-Galerkin ROM ``(W^T A V, W^T B, C V, D)``."""
    sys = _standard(sys)
    V = np.asarray(V, dtype=float).reshape(sys.n, -1)
    W = np.asarray(W, dtype=float).reshape(sys.n, -1)
    _check_biorthogonal(V, W, tol)
    return StateSpaceSystem(W.T @ sys.A @ V, W.T @ sys.B, sys.C @ V, sys.D)


def _realify(vectors, points, tol=1e-10):
    cols = []
    scale = max(1.0, np.abs(points).max(initial=0))
    for v, s in zip(vectors.T, points):
        if abs(s.imag) <= tol * scale:
            cols.append(v.real)
        elif s.imag > 0:
            cols.extend([v.real, v.imag])
    return np.column_stack(cols) if cols else np.zeros((vectors.shape[0], 0))


def _orth(M, r, name):
    if M.shape[1] != r:
        raise RankDeficientBasis(f'{name} has {M.shape[1]} real columns, expected {r}')
    Qm, Rm = np.linalg.qr(M)
    d = np.abs(np.diag(Rm))
    if d.size and d.min() <= 1e-12 * d.max():
        raise RankDeficientBasis(f'{name} is numerically rank deficient')
    return Qm


def _shifted_solves(A, rhs, points, transpose=False):
    n = A.shape[0]
    out = np.empty((n, points.size), dtype=complex)
    At = A.T if transpose else A
    scale = max(1.0, np.abs(A).max())
    for i, s in enumerate(points):
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', spla.LinAlgWarning)
            lu, piv = spla.lu_factor(s * np.eye(n) - At, check_finite=False)
        if np.abs(np.diag(lu)).min() <= 1e-13 * max(scale, abs(s)):
            raise SingularShift(f'shift {s} is (numerically) an eigenvalue of A')
        out[:, i] = spla.lu_solve((lu, piv), rhs[:, i], check_finite=False)
    return out


def _biorthogonalize(V, W):
    M = V.T @ W
    if np.linalg.cond(M) > 1e12:
        raise RankDeficientBasis('V^T W is (numerically) singular')
    return V, np.linalg.solve(M.T, W.T).T


def tangential_basis(sys, interp, *, two_sided=True):
    """Real bases for the tangential rational Krylov subspaces.

    ``V`` spans ``(s_i I - A)^{-1} B r_i`` and ``W`` spans
    ``(s_i I - A^T)^{-1} C^T l_i``; conjugate pairs contribute their real and
    imaginary parts. On return ``W^T V = I``. With ``two_sided=False`` only
    ``V`` is computed (``W`` is ``None``).
    """
    sys = _standard(sys)
    pts = interp.points
    V = _shifted_solves(sys.A, sys.B @ interp.right_dirs.T, pts)
    V = _orth(_realify(V, pts), interp.r, 'V')
    if not two_sided:
        return V, None
    if interp.left_dirs is None:
        raise ValueError('two-sided bases need left directions')
    W = _shifted_solves(sys.A, sys.C.T @ interp.left_dirs.T, pts, transpose=True)
    W = _orth(_realify(W, pts), interp.r, 'W')
    return _biorthogonalize(V, W)


def pole_residue(rom, *, cond_max=1e8):
    """Pole-residue form ``G(s) = D + sum_i c_i b_i^T / (s - lambda_i)``.

    Returns
    -------
    poles : ndarray, shape (r,)
    b : ndarray, shape (r, m)
        Right residue directions (rows).
    c : ndarray, shape (r, p)
        Left residue directions (rows).
    """
    lam, X, _ = eig(rom.A)
    cond = np.linalg.cond(X) if X.size else 1.0
    if not np.isfinite(cond) or cond > cond_max:
        raise DefectiveSpectrum(f'eigenvector matrix condition number {cond:.2e}')
    b = np.linalg.solve(X, rom.B.astype(complex))
    c = (rom.C @ X).T
    return lam, b, c


def _sorted_points(pts):
    return pts[np.lexsort((pts.imag, np.round(pts.real, 12)))]


def _point_change(old, new):
    a, b = _sorted_points(old), _sorted_points(new)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def _random_biorthogonal(n, r, rng):
    V = np.linalg.qr(rng.standard_normal((n, r)))[0]
    W = np.linalg.qr(rng.standard_normal((n, r)))[0]
    return _biorthogonalize(V, W)


def _is_stable(A):
    return A.size == 0 or np.linalg.eigvals(A).real.max() < -STAB_TOL


def _mirror(lam):
    return np.abs(lam.real) - 1j * lam.imag


def _initial_interpolation(sys, r, rng):
    for _ in range(20):
        V, W = _random_biorthogonal(sys.n, r, rng)
        rom = projection_rom(sys, V, W)
        try:
            lam, b, c = pole_residue(rom)
        except DefectiveSpectrum:
            continue
        pts = _mirror(lam)
        if np.abs(pts.real).min() > STAB_TOL:
            return InterpolationData(pts, b, c)
    raise RankDeficientBasis('could not find a usable random initialization')


def _best_recent(recent, final, evaluator):
    """Stable candidate with the smallest H2 error (non-converged runs)."""
    best, best_err = None, np.inf
    for cand in [*recent, final]:
        if cand is None or not _is_stable(cand.rom.A):
            continue
        err = evaluator(cand.rom)
        if err < best_err:
            best, best_err = cand, err
    if best is not None:
        best.h2_error = best_err
    return best


def _irka_run(sys, r, cfg, rng, evaluator):
    interp = _initial_interpolation(sys, r, rng)
    history = []
    recent = deque(maxlen=BEST_WINDOW)
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        V, W = tangential_basis(sys, interp)
        rom = projection_rom(sys, V, W)
        recent.append(ReductionResult(rom, V, W, it, False, interpolation=interp))
        lam, b, c = pole_residue(rom)
        # intermediate iterates may be unstable; mirrored points are kept in
        # the right half-plane and only the returned ROM must be stable
        new = InterpolationData(_mirror(lam), b, c)
        change = _point_change(interp.points, new.points)
        history.append(change)
        interp = new
        if change < cfg.conv_tol:
            converged = True
            break
    V, W = tangential_basis(sys, interp)
    final = ReductionResult(projection_rom(sys, V, W), V, W, it, converged, interpolation=interp)
    if converged:
        best = final if _is_stable(final.rom.A) else None
    else:
        best = _best_recent(recent, final, evaluator)
    if best is None:
        return None
    best.iterations, best.history = it, history
    return best


def _best_of_restarts(sys, r, cfg, run):
    rng = np.random.default_rng(cfg.seed)
    evaluator = H2ErrorEvaluator(sys)
    best = None
    failures = 0
    completed = 0
    while completed < cfg.restarts:
        try:
            res = run(sys, r, cfg, rng, evaluator)
        except (RankDeficientBasis, DefectiveSpectrum, SingularShift, SpectraOverlap) as exc:
            log.debug('restart failed: %s', exc)
            res = None
        if res is None:
            failures += 1
            if failures > cfg.stability_retry:
                if best is not None:
                    break
                raise NoStableRom(f'no stable ROM of order {r} after {failures} attempts')
            continue
        completed += 1
        if res.h2_error is None:
            res.h2_error = evaluator(res.rom)
        if best is None or res.h2_error < best.h2_error:
            best = res
    best.info.update(restarts=completed, failed_attempts=failures)
    if not best.converged:
        log.warning('iteration did not converge in %d steps (last change %.2e)',
                    cfg.max_iters, best.history[-1] if best.history else np.nan)
    return best


def irka(sys, r, config=None):
    """Tangential IRKA with random initialization and best-of-restarts.

    Each restart starts from a ROM obtained by projecting onto random
    biorthogonal bases; its (reflected) mirrored poles and residue directions
    give the first interpolation data. A run whose ROM becomes unstable is
    discarded and retried, up to ``config.stability_retry`` times. Among the
    ``config.restarts`` completed runs the one with the smallest H2 error is
    returned. A run that hits ``max_iters`` returns the stable iterate with
    the smallest H2 error among its last iterates, flagged
    ``converged=False``.
    """
    cfg = ReducerConfig() if config is None else config
    sys = _standard(sys)
    _check_order(sys, r)
    if r == sys.n:
        I = np.eye(sys.n)
        return ReductionResult(sys, I, I, 0, True, [], h2_error=0.0)
    return _best_of_restarts(sys, r, cfg, _irka_run)


def _check_order(sys, r):
    if not 1 <= r <= sys.n:
        raise InvalidConfig(f'reduced order must be in [1, {sys.n}], got {r}')


def _ph_project(ph, V):
    Qr = sym(V.T @ ph.Q @ V)
    W = np.linalg.solve(Qr, (ph.Q @ V).T).T
    red = PhRepresentation(skew(W.T @ ph.J @ W), sym(W.T @ ph.R @ W), Qr, W.T @ ph.G,
                           W.T @ ph.P, ph.S, ph.N, validate=False)
    return red, W


def _kyp_project(sys, X):
    # pH projection for the representation with Hamiltonian X, written without
    # X^{-1}: with W = X V (V^T X V)^{-1} the reduced matrices are W^T A V,
    # W^T B and C V, and the reduced Hamiltonian is V^T X V.
    def project(V):
        Qr = sym(V.T @ X @ V)
        W = np.linalg.solve(Qr, (X @ V).T).T
        Ar, Br, Cr = W.T @ sys.A @ V, W.T @ sys.B, sys.C @ V
        AQi = np.linalg.solve(Qr, Ar.T).T
        QiC = np.linalg.solve(Qr, Cr.T)
        red = PhRepresentation(skew(AQi), -sym(AQi), Qr, 0.5 * (QiC + Br), 0.5 * (QiC - Br),
                               sym(sys.D), skew(sys.D), validate=False)
        return red, W
    return project


def _ph_irka_run(sys, project, r, cfg, rng, evaluator):
    V = np.linalg.qr(rng.standard_normal((sys.n, r)))[0]
    interp = None
    history = []
    recent = deque(maxlen=BEST_WINDOW)
    converged = False
    it = 0
    for it in range(0, cfg.max_iters + 1):
        if interp is not None:
            V, _ = tangential_basis(sys, interp, two_sided=False)
        red, W = project(V)
        recent.append(ReductionResult(red.to_system(), V, W, it, False, ph=red, interpolation=interp))
        Ar = (red.J - red.R) @ red.Q
        lam, _, Y = eig(Ar)
        Y = Y / np.linalg.norm(Y, axis=0)
        dirs = (Y.conj().T @ (red.G - red.P)).conj()
        new = InterpolationData(_mirror(lam), dirs)
        if interp is not None:
            change = _point_change(interp.points, new.points)
            history.append(change)
            if change < cfg.conv_tol:
                interp = new
                converged = True
                break
        interp = new
    V, _ = tangential_basis(sys, interp, two_sided=False)
    red, W = project(V)
    final = ReductionResult(red.to_system(), V, W, it, converged, ph=red, interpolation=interp)
    if converged:
        best = final if _is_stable(final.rom.A) else None
    else:
        best = _best_recent(recent, final, evaluator)
    if best is None:
        return None
    best.iterations, best.history = it, history
    return best


def _ph_irka(sys, project, r, config):
    cfg = ReducerConfig() if config is None else config
    _check_order(sys, r)
    if r == sys.n:
        I = np.eye(sys.n)
        red, W = project(I)
        return ReductionResult(red.to_system(), I, W, 0, True, [], ph=red, h2_error=0.0)

    def run(sys, r, cfg, rng, evaluator):
        return _ph_irka_run(sys, project, r, cfg, rng, evaluator)

    return _best_of_restarts(sys, r, cfg, run)


def ph_irka(ph, r, config=None):
    """Structure-preserving IRKA for a pH representation.

    ``V`` is a (one-sided) tangential rational Krylov basis and
    ``W = Q V (V^T Q V)^{-1}``; the reduced matrices ``W^T J W``,
    ``W^T R W``, ``V^T Q V``, ``W^T G``, ``W^T P`` form a pH system, so the
    ROM is passive for every iterate. Points and directions are updated from
    the eigenvalues and unit-norm left eigenvectors of the reduced system
    matrix. Restart and selection policy as in :func:`irka`.
    """
    return _ph_irka(ph.to_system(), lambda V: _ph_project(ph, V), r, config)


def ph_irka_kyp(sys, X, r, config=None):
    """:func:`ph_irka` for the pH representation with Hamiltonian ``X``.

    ``X`` is any positive semidefinite KYP solution of ``sys``. The projection
    is evaluated without inverting ``X``, so nearly singular solutions such
    as a regularized ``X_min`` can be used.
    """
    sys = _standard(sys)
    return _ph_irka(sys, _kyp_project(sys, sym(np.asarray(X, dtype=float))), r, config)


def prbt(sys, r, *, epsilon=None, solutions=None, rank_tol=1e-14):
    """Positive-real balanced truncation.

    The minimal Riccati solution ``X_min`` of the system and the minimal
    solution ``Y_min = X_max^{-1}`` of its transposed system are balanced;
    the characteristic values are the singular values of ``L_Y L_X^T`` with
    ``X_min = L_X^T L_X`` and ``Y_min = L_Y^T L_Y``.

    Parameters
    ----------
    sys : StateSpaceSystem
        Passive, minimal, stable system.
    r : int
    epsilon : float, optional
        Feedthrough regularization passed to the Riccati solver.
    solutions : tuple of KypSolution, optional
        Precomputed ``(X_min, X_max)``.
    """
    sys = _standard(sys)
    _check_order(sys, r)
    smin, smax = solve_kyp_extremal(sys, epsilon) if solutions is None else solutions
    ydual = dual_solution(smax)
    LX, _ = psd_factor(smin.X, rank_tol)
    LY, _ = psd_factor(ydual.X, rank_tol)
    U, s, Zt = svd(LY @ LX.T)
    if s.size < r or s[r - 1] <= 0:
        raise RankDeficientBasis(f'only {np.count_nonzero(s > 0)} nonzero characteristic values')
    V = LY.T @ U[:, :r] / np.sqrt(s[:r])
    W = LX.T @ Zt[:r].T / np.sqrt(s[:r])
    rom = projection_rom(sys, V, W, tol=1e-6)
    return ReductionResult(rom, V, W, 0, True, [], info={'characteristic_values': s})


@dataclass(frozen=True)
class InterpolationReport:
    """Tangential interpolation residuals, one entry per point.

    ``right``: ``||(G - G_r)(s_i) r_i||``; ``left``: ``||l_i^T (G - G_r)(s_i)||``;
    ``hermite``: ``|l_i^T (G' - G_r')(s_i) r_i|``. The ``*_rel`` variants are
    divided by the corresponding full-order quantity.
    """

    right: np.ndarray
    left: np.ndarray
    hermite: np.ndarray
    right_rel: np.ndarray
    left_rel: np.ndarray
    hermite_rel: np.ndarray

    def max_relative(self):
        return float(max(self.right_rel.max(initial=0), self.left_rel.max(initial=0),
                         self.hermite_rel.max(initial=0)))


def verify_interpolation(fom, rom, interp):
    """Residuals of the right, left and Hermite tangential conditions."""
    rows = []
    for i, s in enumerate(interp.points):
        rd = interp.right_dirs[i]
        ld = interp.left_dirs[i] if interp.left_dirs is not None else None
        G, Gr = transfer_eval(fom, s), transfer_eval(rom, s)
        right = np.linalg.norm((G - Gr) @ rd)
        right_ref = max(np.linalg.norm(G @ rd), np.finfo(float).tiny)
        if ld is None:
            rows.append((right, 0.0, 0.0, right / right_ref, 0.0, 0.0))
            continue
        left = np.linalg.norm(ld @ (G - Gr))
        left_ref = max(np.linalg.norm(ld @ G), np.finfo(float).tiny)
        dG, dGr = transfer_derivative(fom, s), transfer_derivative(rom, s)
        herm = abs(ld @ (dG - dGr) @ rd)
        herm_ref = max(abs(ld @ dG @ rd), np.linalg.norm(ld) * np.linalg.norm(dG, 2) * np.linalg.norm(rd),
                       np.finfo(float).tiny)
        rows.append((right, left, herm, right / right_ref, left / left_ref, herm / herm_ref))
    arr = np.array(rows, dtype=float).reshape(-1, 6)
    return InterpolationReport(*arr.T)


def balanced_truncation(sys, r):
    """Square-root balanced truncation to order ``r`` (stability preserving)."""
    from pamor.lti import gramian_factor, gramians

    sys = _standard(sys)
    _check_order(sys, r)
    P, Q = gramians(sys)
    Lp, Lq = gramian_factor(P.X), gramian_factor(Q.X)
    U, s, Vt = np.linalg.svd(Lq.T @ Lp)
    if s[r - 1] <= 0:
        raise RankDeficientBasis(f'system has fewer than {r} nonzero Hankel singular values')
    V = Lp @ Vt[:r].T / np.sqrt(s[:r])
    W = Lq @ U[:, :r] / np.sqrt(s[:r])
    rom = projection_rom(sys, V, W, tol=1e-6)
    return ReductionResult(rom, V, W, 0, True, [], info={'hankel_singular_values': s})
