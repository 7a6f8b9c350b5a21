"""Linear time-invariant systems: data model, evaluation, Gramians, norms.

Norm conventions
----------------
The H2 norm is the Gramian-trace norm, i.e. it carries the ``1/(2 pi)``
factor of the frequency-domain integral. Ratios and inequalities between H2
norms are unaffected by this choice.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as spla

from pamor.errors import (
    DimensionMismatch,
    ESingular,
    Infinite,
    NotPsd,
    NotStable,
    SingularShift,
    XNotPd,
)
from pamor.linalg import SylvesterSolver, skew, solve_lyapunov, sym

__all__ = [
    'FrequencyGrid',
    'PhRepresentation',
    'StateSpaceSystem',
    'H2ErrorEvaluator',
    'dual_system',
    'generalized_to_standard',
    'gramian_factor',
    'gramians',
    'h2_error',
    'h2_norm',
    'hankel_singular_values',
    'hinf_norm',
    'is_passive_sampled',
    'minimal_realization',
    'minimality_rank',
    'ph_from_solution',
    'ph_minimal_realization',
    'popov_eval',
    'transfer_derivative',
    'transfer_eval',
    'transposed_system',
]

STAB_TOL = 1e-10


def _mat(M, rows=None, cols=None, name='matrix'):
    M = np.asarray(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1) if cols in (None, 1) and rows not in (None, 1) else M.reshape(1, -1)
    if not np.all(np.isfinite(M)):
        raise ValueError(f'{name} has non-finite entries')
    return M


@dataclass(frozen=True, eq=False)
class StateSpaceSystem:
    """``E x' = A x + B u``, ``y = C x + D u`` with optional SPD ``E``.

    Outputs may differ in number from inputs (spectral factors have ``k``
    outputs). Matrices are stored as float arrays and must not be mutated.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray = None
    E: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.size == 0:
            A = A.reshape(0, 0)
        n = A.shape[0]
        B = np.asarray(self.B, dtype=float)
        C = np.asarray(self.C, dtype=float)
        B = B.reshape(n, -1) if B.ndim < 2 else B
        C = C.reshape(-1, n) if C.ndim < 2 else C
        if n == 0:
            if self.D is None:
                raise DimensionMismatch('static systems need an explicit D')
            D = np.atleast_2d(np.asarray(self.D, dtype=float))
            B = B.reshape(0, D.shape[1])
            C = C.reshape(D.shape[0], 0)
        else:
            D = (np.zeros((C.shape[0], B.shape[1])) if self.D is None
                 else np.atleast_2d(np.asarray(self.D, dtype=float)))
        if A.shape != (n, n):
            raise DimensionMismatch(f'A must be square, got {A.shape}')
        if B.shape[0] != n or C.shape[1] != n:
            raise DimensionMismatch(f'B {B.shape} / C {C.shape} do not match n={n}')
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionMismatch(f'D must be {C.shape[0]}x{B.shape[1]}, got {D.shape}')
        for name, M in (('A', A), ('B', B), ('C', C), ('D', D)):
            if not np.all(np.isfinite(M)):
                raise ValueError(f'{name} has non-finite entries')
        E = self.E
        if E is not None:
            E = np.atleast_2d(np.asarray(E, dtype=float))
            if E.shape != (n, n):
                raise DimensionMismatch(f'E must be {n}x{n}')
            if np.linalg.norm(E - E.T) > 1e-12 * np.linalg.norm(E):
                raise ESingular('E must be symmetric')
            if n and np.linalg.eigvalsh(sym(E)).min() <= 0:
                raise ESingular('E must be positive definite')
        object.__setattr__(self, 'A', A)
        object.__setattr__(self, 'B', B)
        object.__setattr__(self, 'C', C)
        object.__setattr__(self, 'D', D)
        object.__setattr__(self, 'E', E)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        """Number of inputs."""
        return self.B.shape[1]

    @property
    def p(self):
        """Number of outputs."""
        return self.C.shape[0]

    def with_feedthrough(self, D):
        return StateSpaceSystem(self.A, self.B, self.C, D, self.E)

    def __repr__(self):
        kind = 'generalized ' if self.E is not None else ''
        return f'StateSpaceSystem({kind}n={self.n}, m={self.m}, p={self.p})'


@dataclass(frozen=True, eq=False)
class PhRepresentation:
    """Port-Hamiltonian decomposition ``A = (J - R) Q``, ``B = G - P``,
    ``C = (G + P)^T Q``, ``D = S + N``."""

    J: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    G: np.ndarray
    P: np.ndarray = None
    S: np.ndarray = None
    N: np.ndarray = None
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        J = np.atleast_2d(np.asarray(self.J, dtype=float))
        n = J.shape[0]
        G = np.asarray(self.G, dtype=float).reshape(n, -1)
        m = G.shape[1]
        fill = {
            'R': np.zeros((n, n)), 'Q': np.eye(n), 'P': np.zeros((n, m)),
            'S': np.zeros((m, m)), 'N': np.zeros((m, m)),
        }
        for name in ('R', 'Q', 'P', 'S', 'N'):
            val = getattr(self, name)
            val = fill[name] if val is None else np.atleast_2d(np.asarray(val, dtype=float))
            object.__setattr__(self, name, val)
        object.__setattr__(self, 'J', J)
        object.__setattr__(self, 'G', G)
        shapes = {'J': (n, n), 'R': (n, n), 'Q': (n, n), 'G': (n, m), 'P': (n, m),
                  'S': (m, m), 'N': (m, m)}
        for name, shape in shapes.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(f'{name} must have shape {shape}')
        if self.validate:
            self.check()

    @property
    def n(self):
        return self.J.shape[0]

    @property
    def m(self):
        return self.G.shape[1]

    def dissipation_matrix(self):
        return np.block([[self.R, self.P], [self.P.T, self.S]])

    def check(self, tol=1e-10):
        """Verify the structural invariants; raise :class:`NotPsd` on failure."""
        scale = max(1.0, np.abs(self.J).max(initial=0), np.abs(self.R).max(initial=0),
                    np.abs(self.Q).max(initial=0))
        if np.abs(self.J + self.J.T).max(initial=0) > tol * scale:
            raise NotPsd('J is not skew-symmetric')
        if np.abs(self.N + self.N.T).max(initial=0) > tol * scale:
            raise NotPsd('N is not skew-symmetric')
        W = self.dissipation_matrix()
        if np.abs(W - W.T).max(initial=0) > tol * scale:
            raise NotPsd('[[R, P], [P^T, S]] is not symmetric')
        if W.size and np.linalg.eigvalsh(sym(W)).min() < -tol * max(1.0, np.abs(W).max()):
            raise NotPsd('[[R, P], [P^T, S]] is not positive semidefinite')
        if np.abs(self.Q - self.Q.T).max(initial=0) > tol * scale:
            raise NotPsd('Q is not symmetric')
        if self.n and np.linalg.eigvalsh(sym(self.Q)).min() <= 0:
            raise NotPsd('Q is not positive definite')
        return True

    def to_system(self):
        return StateSpaceSystem((self.J - self.R) @ self.Q, self.G - self.P,
                                (self.G + self.P).T @ self.Q, self.S + self.N)


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing real frequencies in rad/s."""

    points: np.ndarray
    spacing: str = 'logarithmic'

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if not np.all(np.isfinite(pts)):
            raise ValueError('frequencies must be finite')
        if pts.size > 1 and np.any(np.diff(pts) <= 0):
            raise ValueError('frequencies must be strictly increasing')
        object.__setattr__(self, 'points', pts)

    @classmethod
    def logarithmic(cls, lo=1e-4, hi=1e4, num=400, include_zero=False):
        pts = np.logspace(np.log10(lo), np.log10(hi), num)
        if include_zero:
            pts = np.concatenate([[0.0], pts])
        return cls(pts, 'logarithmic')

    @classmethod
    def linear(cls, lo, hi, num):
        return cls(np.linspace(lo, hi, num), 'linear')

    def __len__(self):
        return self.points.size

    def __iter__(self):
        return iter(self.points)


DEFAULT_GRID = FrequencyGrid.logarithmic()


def _standard(sys):
    return generalized_to_standard(sys)[0] if sys.E is not None else sys


def _resolvent_apply(sys, s, rhs):
    n = sys.n
    E = np.eye(n) if sys.E is None else sys.E
    M = s * E - sys.A
    lu, piv = spla.lu_factor(M, check_finite=False)
    d = np.abs(np.diag(lu))
    if d.min() <= 1e-14 * max(np.abs(M).max(), np.finfo(float).tiny):
        raise SingularShift(f's={s} is (numerically) an eigenvalue of the system')
    return spla.lu_solve((lu, piv), rhs, check_finite=False)


def transfer_eval(sys, s):
    """``G(s) = C (sE - A)^{-1} B + D`` as a complex matrix."""
    if sys.n == 0:
        return sys.D.astype(complex)
    X = _resolvent_apply(sys, complex(s), sys.B.astype(complex))
    return sys.C @ X + sys.D


def transfer_derivative(sys, s):
    """``G'(s) = -C (sE - A)^{-1} E (sE - A)^{-1} B``."""
    if sys.n == 0:
        return np.zeros(sys.D.shape, dtype=complex)
    X = _resolvent_apply(sys, complex(s), sys.B.astype(complex))
    if sys.E is not None:
        X = sys.E @ X
    return -sys.C @ _resolvent_apply(sys, complex(s), X)


def popov_eval(sys, omega):
    """Popov function ``G(i w) + G(-i w)^T`` (Hermitian for real systems)."""
    G = transfer_eval(sys, 1j * omega)
    Gm = transfer_eval(sys, -1j * omega)
    Phi = G + Gm.T
    return 0.5 * (Phi + Phi.conj().T)


def gramian_factor(W):
    """Square-root factor ``F`` (``F F^T = W``) of a PSD Gramian; negative
    roundoff eigenvalues are clipped to zero."""
    w, U = np.linalg.eigh(sym(W))
    w = np.clip(w, 0.0, None)
    return U[:, ::-1] * np.sqrt(w[::-1])


def gramians(sys):
    """Controllability and observability Gramians as SymmetricSolutions.

    ``A P + P A^T + B B^T = 0`` and ``A^T Q + Q A + C^T C = 0``.
    """
    sys = _standard(sys)
    P = solve_lyapunov(sys.A.T, sys.B @ sys.B.T, stab_tol=STAB_TOL)
    Q = solve_lyapunov(sys.A, sys.C.T @ sys.C, stab_tol=STAB_TOL)
    return P, Q


def _scale(sys):
    return max(1.0, np.linalg.norm(sys.B, 2) * np.linalg.norm(sys.C, 2) if sys.n else 1.0)


def h2_norm(sys, *, feedthrough_tol=1e-14):
    """H2 norm ``sqrt(trace(C P C^T))``.

    Raises :class:`Infinite` if ``||D||_F > feedthrough_tol * scale``.
    """
    if np.linalg.norm(sys.D, 'fro') > feedthrough_tol * _scale(sys):
        raise Infinite('system with nonzero feedthrough has infinite H2 norm')
    if sys.n == 0:
        return 0.0
    sys = _standard(sys)
    P = solve_lyapunov(sys.A.T, sys.B @ sys.B.T, stab_tol=STAB_TOL).X
    return float(np.sqrt(max(np.trace(sys.C @ P @ sys.C.T), 0.0)))


def _series_difference(sys1, sys2):
    A = spla.block_diag(sys1.A, sys2.A)
    B = np.vstack([sys1.B, sys2.B])
    C = np.hstack([sys1.C, -sys2.C])
    return StateSpaceSystem(A, B, C, sys1.D - sys2.D)


def h2_error(sys, rom, *, feedthrough_tol=1e-14):
    """``||G - G_r||_H2`` computed on the stacked error system."""
    return h2_norm(_series_difference(_standard(sys), _standard(rom)),
                   feedthrough_tol=feedthrough_tol)


class H2ErrorEvaluator:
    """Repeated H2 errors against a fixed (large) system.

    Uses ``||G - G_r||^2 = ||G||^2 - 2 tr(C Z C_r^T) + ||G_r||^2`` with the
    cross Gramian ``A Z + Z A_r^T + B B_r^T = 0``; the Schur form of ``A`` is
    computed once. Results agree with :func:`h2_error` up to cancellation of
    order ``eps * ||G||^2``.
    """

    def __init__(self, sys):
        self.sys = _standard(sys)
        self._solver = SylvesterSolver(self.sys.A)
        if np.any(self._solver.eigenvalues.real >= -STAB_TOL):
            raise NotStable('reference system is not asymptotically stable')
        U, T = self._solver.U, self._solver.T
        from pamor.linalg import _trsyl
        B = self.sys.B
        Pt = _trsyl(T, T, -(U.T @ B @ B.T @ U), trans_T='N', trans_S='T')
        self.P = sym(U @ Pt @ U.T)
        C = self.sys.C
        self.norm2 = float(max(np.trace(C @ self.P @ C.T), 0.0))

    @property
    def norm(self):
        return np.sqrt(self.norm2)

    def __call__(self, rom, *, feedthrough_tol=1e-14):
        rom = _standard(rom)
        dD = self.sys.D - rom.D
        if np.linalg.norm(dD, 'fro') > feedthrough_tol * max(_scale(self.sys), _scale(rom)):
            raise Infinite('error system has nonzero feedthrough')
        if rom.n == 0:
            return self.norm
        Pr = solve_lyapunov(rom.A.T, rom.B @ rom.B.T, stab_tol=STAB_TOL).X
        Z = self._solver.solve(rom.A.T, self.sys.B @ rom.B.T)
        cross = np.trace(self.sys.C @ Z @ rom.C.T)
        val = self.norm2 - 2 * cross + np.trace(rom.C @ Pr @ rom.C.T)
        return float(np.sqrt(max(val, 0.0)))


def _hamiltonian(sys, gamma):
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    R = gamma ** 2 * np.eye(sys.m) - D.T @ D
    S = gamma ** 2 * np.eye(sys.p) - D @ D.T
    Ri = np.linalg.inv(R)
    Si = np.linalg.inv(S)
    F = A + B @ Ri @ D.T @ C
    return np.block([
        [F, gamma * B @ Ri @ B.T],
        [-gamma * C.T @ Si @ C, -F.T],
    ])


def _sigma_max(sys, omega):
    return np.linalg.norm(transfer_eval(sys, 1j * omega), 2)


def hinf_norm(sys, rel_tol=1e-6, *, grid=None, max_iter=200):
    """H-infinity norm by bisection on the level ``gamma``.

    A level is an upper bound iff the associated Hamiltonian matrix has no
    purely imaginary eigenvalue. The bracket is initialized from a frequency
    sweep; whenever imaginary eigenvalues are found, the gain at the midpoints
    of the crossing frequencies lifts the lower bound.
    """
    sys = _standard(sys)
    dnorm = np.linalg.norm(sys.D, 2) if sys.D.size else 0.0
    if sys.n == 0:
        return float(dnorm)
    ev = np.linalg.eigvals(sys.A)
    if ev.real.max() >= -STAB_TOL:
        raise NotStable('H-infinity norm requires an asymptotically stable system')
    grid = DEFAULT_GRID if grid is None else grid
    cand = np.concatenate([[0.0], grid.points, np.abs(ev.imag)])
    gains = [_sigma_max(sys, w) for w in cand]
    lo = max(max(gains), dnorm)
    if lo == 0:
        return 0.0
    hi = 2 * lo

    def crossings(gamma):
        H = _hamiltonian(sys, gamma)
        lam = np.linalg.eigvals(H)
        tol = 1e-8 * max(1.0, np.abs(lam).max())
        return np.sort(np.abs(lam[np.abs(lam.real) <= tol].imag))

    while crossings(hi).size:
        lo, hi = hi, 2 * hi
    for _ in range(max_iter):
        if hi - lo <= rel_tol * lo:
            break
        mid = 0.5 * (lo + hi)
        w = crossings(mid)
        if w.size == 0:
            hi = mid
            continue
        lo = mid
        w = np.unique(np.round(w, 14))
        mids = 0.5 * (w[:-1] + w[1:]) if w.size > 1 else w
        for om in np.concatenate([mids, w]):
            lo = max(lo, _sigma_max(sys, om))
        hi = max(hi, lo)
    return float(0.5 * (lo + hi))


def _balanced_values(Lp, Lq):
    return np.linalg.svd(Lq.T @ Lp, compute_uv=False)


def hankel_singular_values(sys):
    """Hankel singular values ``sqrt(lambda_k(P Q))`` in descending order."""
    P, Q = gramians(sys)
    s = _balanced_values(gramian_factor(P.X), gramian_factor(Q.X))
    out = np.zeros(sys.n)
    out[:s.size] = s[:sys.n]
    return out


def is_passive_sampled(sys, grid=None, *, tol=1e-8):
    """Sampled positive-realness check ``lambda_min(Phi(i w)) >= -tol * scale``.

    Necessary, not sufficient. Frequencies that hit a pole are skipped.

    Returns
    -------
    passive : bool
    worst_margin : float
        Minimum over the grid of the smallest eigenvalue of the Popov matrix.
    skipped : list of float
        Frequencies at which evaluation failed.
    """
    grid = DEFAULT_GRID if grid is None else grid
    if len(grid) == 0:
        raise ValueError('frequency grid is empty')
    worst = np.inf
    scale = max(1.0, np.linalg.norm(sys.D + sys.D.T, 2))
    skipped = []
    for w in grid:
        try:
            Phi = popov_eval(sys, w)
        except SingularShift:
            skipped.append(float(w))
            continue
        worst = min(worst, np.linalg.eigvalsh(Phi).min())
        scale = max(scale, np.linalg.norm(Phi, 2))
    return bool(worst >= -tol * scale), float(worst), skipped


def dual_system(sys):
    """Dual system ``(-A^T, -C^T, B^T, D^T)`` with transfer function ``G(-s)^T``."""
    sys = _standard(sys)
    return StateSpaceSystem(-sys.A.T, -sys.C.T, sys.B.T, sys.D.T)


def transposed_system(sys):
    """Transposed system ``(A^T, C^T, B^T, D^T)`` with transfer function ``G(s)^T``."""
    sys = _standard(sys)
    return StateSpaceSystem(sys.A.T, sys.C.T, sys.B.T, sys.D.T)


def generalized_to_standard(sys):
    """Substitute ``z = E x``: returns the standard system and ``Q = E^{-1}``.

    The new matrices are ``A E^{-1}``, ``B``, ``C E^{-1}``, ``D``.
    """
    if sys.E is None:
        return sys, np.eye(sys.n)
    try:
        cf = spla.cho_factor(sys.E)
    except np.linalg.LinAlgError as exc:
        raise ESingular('E is not positive definite') from exc
    Einv = sym(spla.cho_solve(cf, np.eye(sys.n)))
    A = spla.cho_solve(cf, sys.A.T).T
    C = spla.cho_solve(cf, sys.C.T).T
    return StateSpaceSystem(A, sys.B, C, sys.D), Einv


def ph_from_solution(sys, X, *, tol=1e-8):
    """pH representation with Hamiltonian ``X`` of a KYP solution."""
    from pamor.kyp import kyp_residual

    sys = _standard(sys)
    X = sym(np.atleast_2d(np.asarray(X, dtype=float)))
    if sys.n and np.linalg.eigvalsh(X).min() <= 0:
        raise XNotPd('X must be positive definite')
    W = kyp_residual(sys, X)
    if W.size and np.linalg.eigvalsh(W).min() < -tol * max(1.0, np.abs(W).max()):
        raise NotPsd('W(X) is not positive semidefinite')
    Xi = np.linalg.inv(X)
    A, B, C, D = sys.A, sys.B, sys.C, sys.D
    AXi = A @ Xi
    J = skew(AXi) if sys.n else AXi
    R = -sym(AXi) if sys.n else AXi
    G = 0.5 * (Xi @ C.T + B)
    P = 0.5 * (Xi @ C.T - B)
    return PhRepresentation(J, R, X, G, P, sym(D), skew(D), validate=False)


def _truncate(sys, Lp, Lq, trunc_tol):
    U, s, Vt = np.linalg.svd(Lq.T @ Lp, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return np.zeros((sys.n, 0)), np.zeros((sys.n, 0)), s
    r = int(np.count_nonzero(s > trunc_tol * s[0]))
    V = Lp @ Vt[:r].T / np.sqrt(s[:r])
    W = Lq @ U[:, :r] / np.sqrt(s[:r])
    return V, W, s


def _rank_factor(Wm, tol):
    w, U = np.linalg.eigh(sym(Wm))
    if w.size == 0 or w.max() <= 0:
        return np.zeros((Wm.shape[0], 0))
    keep = w > tol * w.max()
    return U[:, keep] * np.sqrt(w[keep])


def minimal_realization(sys, trunc_tol=1e-12):
    """Numerically minimal realization by square-root balanced truncation.

    Gramian factors are rank-revealing at relative level ``trunc_tol``
    (eigenvalues of the Gramians below ``trunc_tol * lambda_max`` are
    dropped) and balanced states with Hankel value ``<= trunc_tol * sigma_1``
    are discarded.
    """
    sys = _standard(sys)
    if sys.n == 0:
        return sys
    P, Q = gramians(sys)
    V, W, _ = _truncate(sys, _rank_factor(P.X, trunc_tol), _rank_factor(Q.X, trunc_tol), trunc_tol)
    return StateSpaceSystem(W.T @ sys.A @ V, W.T @ sys.B, sys.C @ V, sys.D)


def ph_minimal_realization(ph, trunc_tol=1e-12):
    """Structure-preserving truncation of a pH system.

    The controllability Gramian is balanced against the Hamiltonian ``Q``;
    the resulting Petrov-Galerkin pair satisfies ``W = Q V (V^T Q V)^{-1}``,
    so the truncated system is again port-Hamiltonian with
    ``Q_r = V^T Q V``. States that are numerically unreachable (controllability
    Gramian eigenvalue below ``trunc_tol * lambda_max``) are discarded.

    Returns
    -------
    PhRepresentation
        Reduced pH representation.
    V : ndarray
        Projection basis (``n x r``).
    """
    sys = ph.to_system()
    P = solve_lyapunov(sys.A.T, sys.B @ sys.B.T, stab_tol=STAB_TOL).X
    Lq = np.linalg.cholesky(sym(ph.Q))
    V, _, _ = _truncate(sys, _rank_factor(P, trunc_tol), Lq, trunc_tol)
    Qr = sym(V.T @ ph.Q @ V)
    W = np.linalg.solve(Qr, (ph.Q @ V).T).T
    red = PhRepresentation(skew(W.T @ ph.J @ W), sym(W.T @ ph.R @ W), Qr,
                           W.T @ ph.G, W.T @ ph.P, ph.S, ph.N, validate=False)
    return red, V


def minimality_rank(sys, tol=1e-10):
    """Numerical ranks of the controllability and observability Gramians."""
    if sys.n == 0:
        return 0, 0
    P, Q = gramians(sys)

    def rank(M):
        w = np.linalg.eigvalsh(M)
        top = np.abs(w).max()
        return 0 if top == 0 else int(np.count_nonzero(w > tol * top))

    return rank(P.X), rank(Q.X)


def is_stable(sys, tol=STAB_TOL):
    sys = _standard(sys)
    return sys.n == 0 or bool(np.linalg.eigvals(sys.A).real.max() < -tol)


def direct_sum(*systems):
    """Block-diagonal (parallel, decoupled) interconnection."""
    return StateSpaceSystem(
        spla.block_diag(*[s.A for s in systems]),
        spla.block_diag(*[s.B for s in systems]),
        spla.block_diag(*[s.C for s in systems]),
        spla.block_diag(*[s.D for s in systems]),
    )


def similarity_transform(sys, T):
    """Coordinates ``x = T x_new``."""
    Ti = np.linalg.inv(T)
    return StateSpaceSystem(Ti @ sys.A @ T, Ti @ sys.B, sys.C @ T, sys.D)
