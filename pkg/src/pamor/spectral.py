"""Passivity-preserving reduction through spectral factors.

A KYP certificate ``W(X) = [L M]^T [L M]`` defines the spectral factor
``H = (A, B, L, M)`` with ``H(-s)^T H(s) = G(s) + G(-s)^T``. Any stable
reduced model ``(A_r, B_r, L_r, M_r)`` of ``H`` is turned into a passive
reduced model of ``G`` by

* ``D_r = M_r^T M_r / 2 + Skew(D)``,
* ``A_r^T X_r + X_r A_r + L_r^T L_r = 0``,
* ``C_r = B_r^T X_r + M_r^T L_r``,

so that ``X_r`` certifies passivity of ``(A_r, B_r, C_r, D_r)`` by
construction.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from pamor.errors import (
    DualNotPassive,
    FeedthroughMismatch,
    InnerRomUnstable,
    NoProjectionData,
    NoStableRom,
    UncertifiedSolution,
    XNotPd,
)
from pamor.kyp import Kind, KypSolution, dual_solution, kyp_residual, solve_kyp_extremal, verify_kyp
from pamor.linalg import SymmetricSolution, solve_lyapunov, solve_sylvester, skew, sym
from pamor.lti import (
    STAB_TOL,
    PhRepresentation,
    StateSpaceSystem,
    _standard,
    h2_error,
    hankel_singular_values,
    hinf_norm,
    is_passive_sampled,
    transposed_system,
)
from pamor.reducers import ReducerConfig, ReductionResult, irka, balanced_truncation

log = logging.getLogger(__name__)

__all__ = [
    'PassiveRomBundle',
    'SpectralFactor',
    'assemble_passive_rom',
    'build_spectral_factor',
    'correction_term',
    'h2_bound',
    'hankel_ordering_check',
    'ph_realize_rom',
    'reduce_passive',
    'reduce_passive_dual',
    'regularized',
    'wilson_check',
]


@dataclass(frozen=True, eq=False)
class SpectralFactor:
    """Spectral factor ``(A, B, L, M)`` and the certificate it came from."""

    system: StateSpaceSystem
    source: KypSolution


@dataclass(eq=False)
class PassiveRomBundle:
    """Passive reduced model together with its certificate and diagnostics.

    ``rom`` is ``(A_r, B_r, C_r, D_r)``; ``rom_spectral`` the reduced spectral
    factor ``(A_r, B_r, L_r, M_r)``; ``X_tilde`` solves the reduced Lyapunov
    equation and certifies passivity of ``rom``.
    """

    rom: StateSpaceSystem
    rom_spectral: StateSpaceSystem
    X_tilde: SymmetricSolution
    correction: np.ndarray = None
    ph: PhRepresentation = None
    bound: float = None
    inner: ReductionResult = None
    epsilon: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.rom.n

    def kyp_margin(self):
        """Smallest eigenvalue of the reduced KYP matrix and its scale."""
        W = kyp_residual(self.rom, self.X_tilde.X)
        return float(np.linalg.eigvalsh(W).min()), max(1.0, float(np.abs(W).max()))


def regularized(sys, epsilon):
    """``sys`` with feedthrough ``D + epsilon/2 I``.

    This is the system whose Popov function is factored when the Riccati
    equation is solved with ``D + D^T + epsilon I``; errors of spectral-factor
    ROMs are measured against it.
    """
    sys = _standard(sys)
    if epsilon == 0:
        return sys
    return sys.with_feedthrough(sys.D + 0.5 * epsilon * np.eye(sys.m))


def build_spectral_factor(sys, sol, *, check=True, tol=1e-6):
    """Spectral factor ``(A, B, L, M)``; the certificate is verified first."""
    sys = _standard(sys)
    if check:
        report = verify_kyp(sys, sol, tol=tol)
        if not report.ok:
            raise UncertifiedSolution(f'KYP solution failed verification: {report.summary()}')
    return SpectralFactor(StateSpaceSystem(sys.A, sys.B, sol.L, sol.M), sol)


def assemble_passive_rom(rom_spectral, D, *, stab_tol=STAB_TOL):
    """Passive ROM from a reduced spectral factor (the three steps above).

    Parameters
    ----------
    rom_spectral : StateSpaceSystem
        ``(A_r, B_r, L_r, M_r)`` with ``A_r`` asymptotically stable.
    D : ndarray
        Full-order feedthrough; only its skew-symmetric part is used.
    """
    Ar, Br, Lr, Mr = rom_spectral.A, rom_spectral.B, rom_spectral.C, rom_spectral.D
    if Ar.size and np.linalg.eigvals(Ar).real.max() >= -stab_tol:
        raise InnerRomUnstable('reduced spectral factor is not asymptotically stable')
    Dr = 0.5 * Mr.T @ Mr + skew(np.atleast_2d(D))
    Xs = solve_lyapunov(Ar, Lr.T @ Lr, stab_tol=stab_tol)
    Cr = Br.T @ Xs.X + Mr.T @ Lr
    return StateSpaceSystem(Ar, Br, Cr, Dr), Xs


def _inner_reducer(inner):
    if callable(inner):
        return inner
    table = {
        'irka': lambda H, r, cfg: irka(H, r, cfg),
        'bt': lambda H, r, cfg: balanced_truncation(H, r),
    }
    try:
        return table[inner]
    except KeyError:
        raise ValueError(f'unknown inner reducer {inner!r}; choose from {sorted(table)}') from None


def reduce_passive(sys, sol, r, inner='irka', config=None, *, check=True):
    """Passive ROM of order ``r`` via reduction of the spectral factor.

    Parameters
    ----------
    sys : StateSpaceSystem
        Passive, minimal, asymptotically stable system.
    sol : KypSolution
        Certificate used to build the spectral factor.
    r : int
    inner : {'irka', 'bt'} or callable
        Reducer for the spectral factor; a callable receives
        ``(H, r, config)`` and returns a :class:`ReductionResult`. It must
        keep the feedthrough ``M`` and return a stable ROM.
    config : ReducerConfig, optional

    Returns
    -------
    PassiveRomBundle
    """
    sys = _standard(sys)
    cfg = ReducerConfig() if config is None else config
    H = build_spectral_factor(sys, sol, check=check).system
    try:
        res = _inner_reducer(inner)(H, r, cfg)
    except NoStableRom as exc:
        raise InnerRomUnstable(str(exc)) from exc
    rom, Xs = assemble_passive_rom(res.rom, sys.D)
    bundle = PassiveRomBundle(rom, res.rom, Xs, inner=res, epsilon=sol.epsilon)
    if res.V is not None and res.W is not None:
        bundle.correction = correction_term(sys, sol, res.V, res.W, Xs.X)
    lam, scale = bundle.kyp_margin()
    bundle.info.update(kyp_margin=lam, kyp_scale=scale, inner_h2_error=res.h2_error,
                       converged=res.converged, iterations=res.iterations)
    if lam < -1e-10 * scale:
        log.warning('reduced KYP matrix has eigenvalue %.3e', lam)
    if np.array_equal(res.rom.D, H.D):
        dev = np.linalg.norm(sym(rom.D) - sym(regularized(sys, sol.epsilon).D))
        bundle.info['feedthrough_deviation'] = float(dev)
    return bundle


def h2_bound(H, H_tilde, G_err_h2, *, rel_tol=1e-8):
    """Error bound ``||G - G_r||_H2 <= c ||H - H_r||_H2``.

    ``c = (||H||_Hinf + ||H_r||_Hinf) / sqrt(2)``.

    Returns
    -------
    c : float
    rhs : float
        ``c * ||H - H_r||_H2``.
    holds : bool
        Whether ``G_err_h2 <= rhs * (1 + rel_tol)``.
    """
    if H.D.shape != H_tilde.D.shape or not np.allclose(H.D, H_tilde.D, rtol=0, atol=1e-14 * max(1.0, np.abs(H.D).max())):
        raise FeedthroughMismatch('spectral factors must share the feedthrough M')
    c = (hinf_norm(H) + hinf_norm(H_tilde)) / np.sqrt(2.0)
    herr = h2_error(H, H_tilde.with_feedthrough(H.D))
    rhs = c * herr
    return float(c), float(rhs), bool(G_err_h2 <= rhs * (1 + rel_tol))


def correction_term(sys, sol, V, W, X_tilde):
    """Deviation ``B^T (W X_r - X V)`` of ``C_r`` from the projection ``C V``."""
    if V is None or W is None:
        raise NoProjectionData('correction term needs the projection matrices V and W')
    sys = _standard(sys)
    return sys.B.T @ (W @ X_tilde - sol.X @ V)


def wilson_check(sys_spectral, rom_spectral, X_tilde):
    """Residual of the matrix form of the left tangential optimality conditions.

    Solves ``A^T Z + Z A_r + L^T L_r = 0`` and returns
    ``||B_r^T X_r - B^T Z||_F / max(1, ||B_r^T X_r||_F)``.
    """
    H, Hr = _standard(sys_spectral), rom_spectral
    X_tilde = getattr(X_tilde, 'X', X_tilde)
    Z = solve_sylvester(H.A.T, Hr.A, H.C.T @ Hr.C)
    lhs = Hr.B.T @ X_tilde
    return float(np.linalg.norm(lhs - H.B.T @ Z, 'fro') / max(1.0, np.linalg.norm(lhs, 'fro')))


def ph_realize_rom(bundle, *, pd_tol=1e-12):
    """pH realization of a spectral-factor ROM in coordinates with ``X = I``.

    With ``X_r = T^T T`` the transformed system
    ``(T A_r T^{-1}, T B_r, C_r T^{-1}, D_r)`` has the identity as KYP
    solution, so ``J = Skew(A_T)``, ``R = -Sym(A_T)``,
    ``G = (C_T^T + B_T)/2``, ``P = (C_T^T - B_T)/2``, ``S = Sym(D)``,
    ``N = Skew(D)``.
    """
    X = sym(bundle.X_tilde.X)
    rom = bundle.rom
    if X.size:
        lam = np.linalg.eigvalsh(X)
        if lam.min() <= pd_tol * max(1.0, lam.max()):
            raise XNotPd(f'X_tilde is not positive definite (lambda_min = {lam.min():.3e}); '
                         'the ROM is not minimal, use a minimal realization first')
    T = np.linalg.cholesky(X).T if X.size else X
    AT = np.linalg.solve(T.T, (T @ rom.A).T).T if X.size else rom.A
    BT = T @ rom.B
    CT = np.linalg.solve(T.T, rom.C.T).T if X.size else rom.C
    ph = PhRepresentation(skew(AT), -sym(AT), np.eye(rom.n), 0.5 * (CT.T + BT),
                          0.5 * (CT.T - BT), sym(rom.D), skew(rom.D), validate=False)
    bundle.ph = ph
    return ph


@dataclass(frozen=True)
class HankelOrdering:
    """Hankel singular values of spectral factors, one row per solution."""

    labels: tuple
    values: np.ndarray
    reference: int
    holds: bool
    max_violation: float


def hankel_ordering_check(sys, sols, *, reference=None, tol=1e-7, labels=None):
    """Compare Hankel singular values of spectral factors of several solutions.

    The factor built from the minimal solution (``reference``; by default the
    first solution of kind ``MIN``, else the first) must be dominated
    pointwise: ``sigma_k(ref) <= sigma_k(X) + tol * sigma_1`` for all ``k``.
    """
    sys = _standard(sys)
    if reference is None:
        reference = next((i for i, s in enumerate(sols) if s.kind == Kind.MIN), 0)
    values = np.array([hankel_singular_values(StateSpaceSystem(sys.A, sys.B, s.L, s.M))
                       for s in sols])
    ref = values[reference]
    sigma1 = values.max() if values.size else 0.0
    viol = max((float((ref - v).max() / max(sigma1, np.finfo(float).tiny))
                for i, v in enumerate(values) if i != reference), default=0.0)
    labels = tuple(labels) if labels is not None else tuple(s.kind.value for s in sols)
    return HankelOrdering(labels, values, reference, bool(viol <= tol), max(viol, 0.0))


def _transpose_bundle(bundle):
    rom = transposed_system(bundle.rom)
    rs = bundle.rom_spectral
    return PassiveRomBundle(rom, rs, bundle.X_tilde, inner=bundle.inner, epsilon=bundle.epsilon,
                            info=dict(bundle.info, route='dual'))


def reduce_passive_dual(sys, r, inner='irka', config=None, *, sol=None, which='min',
                        epsilon=None, grid=None):
    """Dual variant: reduce the input-side spectral factor.

    The transposed system ``(A^T, C^T, B^T, D^T)`` is reduced with
    :func:`reduce_passive` and the result is transposed back. Its KYP
    solutions are the inverses of those of ``sys``; ``which='min'`` uses
    ``X_max^{-1}``. A precomputed certificate of ``sys`` may be passed as
    ``sol``; it is mapped to the transposed system.

    Returns
    -------
    PassiveRomBundle
        ``rom`` realizes the ROM of ``sys``; ``rom_spectral`` and ``X_tilde``
        refer to the transposed ROM, whose KYP inequality ``X_tilde`` solves.
    """
    sys = _standard(sys)
    st = transposed_system(sys)
    passive, margin, _ = is_passive_sampled(st, grid)
    if not passive:
        raise DualNotPassive(f'transposed system fails the sampled passivity check (margin {margin:.3e})')
    if sol is None:
        primal = 'max' if which == 'min' else 'min'
        sol = solve_kyp_extremal(sys, epsilon, primal)
    dsol = dual_solution(sol)
    bundle = reduce_passive(st, dsol, r, inner, config)
    return _transpose_bundle(bundle)
