"""Randomized test systems for property-based checks."""

import numpy as np

from pamor.lti import PhRepresentation, StateSpaceSystem, hinf_norm


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def random_stable(n, m=1, p=None, *, seed=None, feedthrough=False):
    """Random asymptotically stable system with spectral abscissa <= -0.1."""
    rng = _rng(seed)
    p = m if p is None else p
    A = rng.standard_normal((n, n)) / np.sqrt(n)
    shift = np.linalg.eigvals(A).real.max() + 0.1 + rng.uniform(0, 1)
    A = A - shift * np.eye(n)
    B = rng.standard_normal((n, m))
    C = rng.standard_normal((p, n))
    D = rng.standard_normal((p, m)) if feedthrough else np.zeros((p, m))
    return StateSpaceSystem(A, B, C, D)


def random_passive(n, m=1, *, seed=None, feedthrough=True, strict=1e-1):
    """Random pH system; generically minimal and strictly passive.

    ``[[R, P], [P^T, S]]`` is a random Gram matrix plus ``strict * I`` so the
    regular Riccati equation applies. With ``feedthrough=False`` the ports
    carry no feedthrough (``P = 0``, ``S = 0``) and ``R`` remains positive
    definite.
    """
    rng = _rng(seed)
    F = rng.standard_normal((n, n))
    J = F - F.T
    Qf = rng.standard_normal((n, n))
    Q = Qf @ Qf.T / n + 0.5 * np.eye(n)
    G = rng.standard_normal((n, m))
    if feedthrough:
        H = rng.standard_normal((n + m, n + m)) / np.sqrt(n + m)
        W = H @ H.T + strict * np.eye(n + m)
        R, P, S = W[:n, :n], W[:n, n:], W[n:, n:]
        Nf = rng.standard_normal((m, m))
        N = 0.5 * (Nf - Nf.T)
    else:
        H = rng.standard_normal((n, n)) / np.sqrt(n)
        R = H @ H.T + strict * np.eye(n)
        P = np.zeros((n, m))
        S = N = np.zeros((m, m))
    return PhRepresentation(J, R, Q, G, P, S, N)


def random_contractive(n, m=1, *, seed=None, gain=0.8):
    """Random stable system scaled to H-infinity norm ``gain < 1``."""
    rng = _rng(seed)
    sys = random_stable(n, m, seed=rng, feedthrough=True)
    sys = StateSpaceSystem(sys.A, sys.B, sys.C, 0.3 * sys.D)
    scale = gain / hinf_norm(sys)
    return StateSpaceSystem(sys.A, sys.B, scale * sys.C, scale * sys.D)
