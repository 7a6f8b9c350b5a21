"""Bounded-real (contractive) systems through the Moebius transformation.

``G = (I - Gb)^{-1} (I + Gb)`` maps a contractive transfer function ``Gb`` to
a positive-real one and ``Gb = (G - I)(G + I)^{-1} = I - 2 (G + I)^{-1}``
inverts the map. Reduced models of ``G`` that are passive map back to
contractive reduced models of ``Gb``, with

    Gb - Gb_r = 1/2 (I - Gb_r) (G - G_r) (I - Gb).
"""

from dataclasses import dataclass

import numpy as np

from pamor.errors import FeedthroughSingular, NotPsd
from pamor.kyp import solve_kyp_extremal
from pamor.lti import FrequencyGrid, StateSpaceSystem, _standard, h2_error, hinf_norm, transfer_eval
from pamor.reducers import ReducerConfig
from pamor.spectral import reduce_passive, regularized

__all__ = [
    'BoundedRealSystem',
    'bounded_real_margin',
    'moebius_inverse',
    'moebius_to_positive_real',
    'reduce_contractive',
]

COND_MAX = 1e12


def bounded_real_margin(sys, grid=None):
    """Minimum over the grid of ``lambda_min(I - Gb(iw)^H Gb(iw))``."""
    grid = FrequencyGrid.logarithmic(include_zero=True) if grid is None else grid
    worst = np.inf
    for w in grid:
        G = transfer_eval(sys, 1j * w)
        worst = min(worst, np.linalg.eigvalsh(np.eye(sys.m) - G.conj().T @ G).min())
    G = sys.D
    worst = min(worst, np.linalg.eigvalsh(np.eye(sys.m) - G.T @ G).min())
    return float(worst)


@dataclass(frozen=True, eq=False)
class BoundedRealSystem:
    """Square system with ``I - Gb(-iw)^T Gb(iw) >= 0`` on a sampled grid."""

    system: StateSpaceSystem
    check: bool = True

    def __post_init__(self):
        sys = _standard(self.system)
        object.__setattr__(self, 'system', sys)
        if sys.p != sys.m:
            raise ValueError('bounded-real systems must be square')
        if self.check:
            margin = bounded_real_margin(sys)
            if margin < -1e-8:
                raise NotPsd(f'system is not contractive on the sampled grid (margin {margin:.3e})')

    def margin(self, grid=None):
        return bounded_real_margin(self.system, grid)


def _checked_inverse(M, what):
    if np.linalg.cond(M) > COND_MAX:
        raise FeedthroughSingular(f'{what} is (numerically) singular')
    return np.linalg.inv(M)


def moebius_to_positive_real(br):
    """Realization of ``(I - Gb)^{-1} (I + Gb)``.

    With ``K = (I - Db)^{-1}``: ``A = Ab + Bb K Cb``, ``B = Bb K``,
    ``C = 2 K Cb``, ``D = 2 K - I``.
    """
    sys = br.system if isinstance(br, BoundedRealSystem) else _standard(br)
    I = np.eye(sys.m)
    K = _checked_inverse(I - sys.D, 'I - D')
    return StateSpaceSystem(sys.A + sys.B @ K @ sys.C, sys.B @ K, 2 * K @ sys.C, 2 * K - I)


def moebius_inverse(pr, *, check=True):
    """Realization of ``I - 2 (G + I)^{-1}`` as a :class:`BoundedRealSystem`.

    With ``K = (I + D)^{-1}``: ``A = A - B K C``, ``B = B K``, ``C = 2 K C``,
    ``D = I - 2 K``.
    """
    sys = _standard(pr)
    I = np.eye(sys.m)
    K = _checked_inverse(I + sys.D, 'I + D')
    out = StateSpaceSystem(sys.A - sys.B @ K @ sys.C, sys.B @ K, 2 * K @ sys.C, I - 2 * K)
    return BoundedRealSystem(out, check=check)


def reduce_contractive(br, r, config=None, *, inner='irka', epsilon=None):
    """Contractive ROM via the positive-real image.

    Pipeline: Moebius map, spectral-factor reduction with the minimal
    Riccati solution, inverse Moebius map.

    Returns
    -------
    rom : BoundedRealSystem
    bound : float
        ``1/2 ||I - Gb_r||_Hinf ||G - G_r||_H2 ||I - Gb||_Hinf``, an upper
        bound for ``||Gb - Gb_r||_H2``.
    """
    if not isinstance(br, BoundedRealSystem):
        br = BoundedRealSystem(br)
    cfg = ReducerConfig() if config is None else config
    pr = moebius_to_positive_real(br)
    sol = solve_kyp_extremal(pr, epsilon, 'min')
    bundle = reduce_passive(pr, sol, r, inner, cfg)
    # undo the regularization shift before mapping back
    rom_pr = bundle.rom.with_feedthrough(bundle.rom.D - 0.5 * sol.epsilon * np.eye(pr.m))
    rom = moebius_inverse(rom_pr, check=False)
    I = np.eye(pr.m)
    err = h2_error(regularized(pr, sol.epsilon), bundle.rom)

    def one_minus(sys):
        return StateSpaceSystem(sys.A, sys.B, -sys.C, I - sys.D)

    bound = 0.5 * hinf_norm(one_minus(rom.system)) * err * hinf_norm(one_minus(br.system))
    if not np.isfinite(bound):
        raise FeedthroughSingular('error bound is not finite')
    return rom, float(bound)
