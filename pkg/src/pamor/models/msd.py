"""Mass-spring-damper chain in port-Hamiltonian form."""

from dataclasses import dataclass

import numpy as np

from pamor.errors import InvalidConfig
from pamor.lti import PhRepresentation


@dataclass(frozen=True)
class MsdConfig:
    """Chain of ``n/2`` masses connected by springs, each mass damped to ground.

    The first spring connects the first mass to the second; the last mass is
    attached to a wall. Forces act on the first ``inputs`` masses.
    """

    n: int = 1000
    masses: float = 4.0
    stiffness: float = 4.0
    damping: float = 1.0
    inputs: int = 2

    def validate(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 2 or self.n % 2:
            raise InvalidConfig(f'n must be a positive even integer, got {self.n}')
        for name in ('masses', 'stiffness', 'damping'):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise InvalidConfig(f'{name} must be positive, got {val}')
        if self.inputs < 1 or self.inputs > self.n // 2:
            raise InvalidConfig(f'inputs must be in [1, {self.n // 2}], got {self.inputs}')


def generate_msd(cfg=None):
    """Assemble the chain in energy coordinates.

    States alternate spring elongation (even indices) and momentum (odd
    indices). The Hamiltonian is ``x^T Q x / 2`` with the stiffness matrix on
    the elongation block and inverse masses on the momentum block; outputs
    are the velocities of the actuated masses.

    Returns
    -------
    PhRepresentation
    """
    cfg = MsdConfig() if cfg is None else cfg
    cfg.validate()
    N = cfg.n // 2
    k = cfg.stiffness
    K = 2 * k * np.eye(N) - k * np.eye(N, k=1) - k * np.eye(N, k=-1)
    K[0, 0] = k
    Q = np.zeros((cfg.n, cfg.n))
    Q[0::2, 0::2] = K
    Q[1::2, 1::2] = np.eye(N) / cfg.masses
    J = np.kron(np.eye(N), [[0.0, 1.0], [-1.0, 0.0]])
    R = np.kron(np.eye(N), np.diag([0.0, cfg.damping]))
    G = np.zeros((cfg.n, cfg.inputs))
    G[2 * np.arange(cfg.inputs) + 1, np.arange(cfg.inputs)] = 1.0
    ph = PhRepresentation(J, R, Q, G)
    return ph
