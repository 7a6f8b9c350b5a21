"""Linear Biot poroelasticity on the unit square in port-Hamiltonian form.

Continuous piecewise-linear elements on a uniform triangulation (each mesh
square is split along its diagonal) with homogeneous Dirichlet conditions for
displacement and pressure. With ``k`` divisions per side there are
``(k - 1)^2`` interior nodes and the state ``x = (w, u, p)`` (velocity,
displacement, pressure) has dimension ``n = 5 (k - 1)^2``.

The first-order system reads ``E x' = (J - R - eta I) x + B u_in``,
``y = B^T x`` with::

    E = blkdiag(rho M_u, K_u, M_p / M)
    J = [[0, -K_u, alpha D^T], [K_u, 0, 0], [-alpha D, 0, 0]]
    R = blkdiag(0, 0, kappa/nu K_p)
    B = [[B_f, 0], [0, 0], [0, B_g]]

where ``D[q, v] = int q div v``. Inputs are a spatially constant body force
acting along ``(1, 1)`` and a spatially constant fluid injection.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from pamor.errors import InvalidConfig, NotPsd
from pamor.linalg import sym
from pamor.lti import PhRepresentation, StateSpaceSystem, generalized_to_standard


@dataclass(frozen=True)
class PoroConfig:
    """Material and discretization parameters (defaults: 2D benchmark values)."""

    mesh_divisions: int = 15
    mu: float = 12.0
    lam: float = 6.0
    rho: float = 1e-3
    alpha: float = 0.79
    inv_M: float = 7.80e3
    kappa_over_nu: float = 633.33
    eta: float = 1e-3

    def validate(self):
        if not isinstance(self.mesh_divisions, (int, np.integer)) or self.mesh_divisions < 2:
            raise InvalidConfig(f'mesh_divisions must be an integer >= 2, got {self.mesh_divisions}')
        for name in ('mu', 'lam', 'rho', 'alpha', 'inv_M', 'kappa_over_nu'):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise InvalidConfig(f'{name} must be positive, got {val}')
        if not np.isfinite(self.eta) or self.eta < 0:
            raise InvalidConfig(f'eta must be nonnegative, got {self.eta}')

    @property
    def n(self):
        return 5 * (self.mesh_divisions - 1) ** 2


def _mesh(k):
    xs = np.linspace(0.0, 1.0, k + 1)
    X, Y = np.meshgrid(xs, xs, indexing='xy')
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((k + 1) ** 2).reshape(k + 1, k + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, :-1].ravel(), idx[1:, 1:].ravel()
    tris = np.vstack([np.column_stack([a, b, d]), np.column_stack([a, d, c])])
    boundary = (np.isclose(nodes[:, 0], 0) | np.isclose(nodes[:, 0], 1)
                | np.isclose(nodes[:, 1], 0) | np.isclose(nodes[:, 1], 1))
    return nodes, tris, boundary


def _gradients(nodes, tris):
    p = nodes[tris]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=-1)
    area = 0.5 * np.abs(np.linalg.det(jac))
    # rows of the inverse Jacobian are the gradients of two barycentric coordinates
    g = np.linalg.inv(jac)
    grads = np.concatenate([-g.sum(axis=1, keepdims=True), g], axis=1)
    return grads, area


def _assemble(tris, local, size):
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(size, size)).tocsr()


def assemble_fe(k):
    """Scalar P1 matrices on interior nodes.

    Returns
    -------
    dict
        ``M`` (mass), ``K`` (Laplacian stiffness), ``Dx``, ``Dy`` (``int q
        d_x v`` and ``int q d_y v``), ``K_xx``, ``K_xy``, ``K_yx``, ``K_yy``
        (``int d_i v d_j w``) and ``load`` (``int v``).
    """
    nodes, tris, boundary = _mesh(k)
    N = nodes.shape[0]
    grads, area = _gradients(nodes, tris)
    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    out = {'M': _assemble(tris, area[:, None, None] * mass_ref, N)}
    comp = {}
    for i in range(2):
        for j in range(2):
            comp[i, j] = _assemble(tris, area[:, None, None] * grads[:, :, i, None] * grads[:, None, :, j], N)
    out['K'] = comp[0, 0] + comp[1, 1]
    out.update(K_xx=comp[0, 0], K_xy=comp[0, 1], K_yx=comp[1, 0], K_yy=comp[1, 1])
    # pressure test function (rows) against derivative of displacement basis (cols)
    for i, name in enumerate(('Dx', 'Dy')):
        local = area[:, None, None] / 3.0 * np.broadcast_to(grads[:, None, :, i], (tris.shape[0], 3, 3))
        out[name] = _assemble(tris, local, N)
    load = np.zeros(N)
    np.add.at(load, tris.ravel(), np.repeat(area / 3.0, 3))
    free = np.flatnonzero(~boundary)
    res = {key: val[free][:, free].toarray() for key, val in out.items()}
    res['load'] = load[free]
    return res


@dataclass(frozen=True, eq=False)
class PoroModel:
    """Generalized pH model ``E x' = (J - R) x + B u``, ``y = B^T x``.

    ``R`` includes the artificial damping ``eta I``.
    """

    E: np.ndarray
    J: np.ndarray
    R: np.ndarray
    B: np.ndarray
    config: PoroConfig
    blocks: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return self.E.shape[0]

    @property
    def system(self):
        return StateSpaceSystem(self.J - self.R, self.B, self.B.T, None, self.E)

    def to_standard(self):
        """Standard system in ``z = E x`` and the Hamiltonian ``Q = E^{-1}``."""
        return generalized_to_standard(self.system)

    def to_ph(self):
        """pH representation in the coordinates ``z = E x``."""
        _, Q = self.to_standard()
        return PhRepresentation(self.J, self.R, Q, self.B)


def generate_poro(cfg=None):
    """Assemble the poroelastic benchmark; structural invariants are checked.

    Returns
    -------
    PoroModel
    """
    cfg = PoroConfig() if cfg is None else cfg
    cfg.validate()
    fe = assemble_fe(cfg.mesh_divisions)
    M, K = fe['M'], fe['K']
    Ni = M.shape[0]
    Z = np.zeros((Ni, Ni))
    mu, lam = cfg.mu, cfg.lam
    # a(u, v) = 2 mu eps(u):eps(v) + lam div u div v, blocks over (x, y) components
    Kxx = mu * (K + fe['K_xx']) + lam * fe['K_xx']
    Kyy = mu * (K + fe['K_yy']) + lam * fe['K_yy']
    Kxy = mu * fe['K_yx'] + lam * fe['K_xy']
    Ku = sym(np.block([[Kxx, Kxy], [Kxy.T, Kyy]]))
    Mu = np.block([[M, Z], [Z, M]])
    Dc = np.hstack([fe['Dx'], fe['Dy']])
    Kp, Mp = K, M
    nu, npp = 2 * Ni, Ni
    n = 2 * nu + npp
    E = np.zeros((n, n))
    E[:nu, :nu] = cfg.rho * Mu
    E[nu:2 * nu, nu:2 * nu] = Ku
    E[2 * nu:, 2 * nu:] = cfg.inv_M * Mp
    J = np.zeros((n, n))
    J[:nu, nu:2 * nu] = -Ku
    J[nu:2 * nu, :nu] = Ku
    J[:nu, 2 * nu:] = cfg.alpha * Dc.T
    J[2 * nu:, :nu] = -cfg.alpha * Dc
    R = np.zeros((n, n))
    R[2 * nu:, 2 * nu:] = cfg.kappa_over_nu * Kp
    R += cfg.eta * np.eye(n)
    B = np.zeros((n, 2))
    B[:nu, 0] = np.concatenate([fe['load'], fe['load']])
    B[2 * nu:, 1] = fe['load']
    model = PoroModel(sym(E), J, sym(R), B, cfg,
                      {'M_u': Mu, 'K_u': Ku, 'M_p': Mp, 'K_p': Kp, 'D': Dc,
                       'B_f': B[:nu, :1], 'B_g': B[2 * nu:, 1:]})
    _check_structure(model)
    return model


def _check_structure(model, tol=1e-10):
    scale = max(1.0, np.abs(model.J).max())
    if np.abs(model.J + model.J.T).max() > tol * scale:
        raise NotPsd('J is not skew-symmetric')
    if np.linalg.eigvalsh(model.R).min() < -tol * max(1.0, np.abs(model.R).max()):
        raise NotPsd('R is not positive semidefinite')
    for name in ('M_u', 'K_u', 'M_p', 'K_p'):
        if np.linalg.eigvalsh(model.blocks[name]).min() <= 0:
            raise NotPsd(f'{name} is not positive definite')
    if np.linalg.eigvalsh(model.E).min() <= 0:
        raise NotPsd('E is not positive definite')
