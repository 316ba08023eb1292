"""Eight-node serendipity quadrilateral (Q8) for plane strain.

Node order is counterclockwise corners then midsides::

    4 --- 7 --- 3
    |           |
    8           6
    |           |
    1 --- 5 --- 2

(zero-based indices 0..7 in code). Element dof vectors interleave the
displacement components: ``[ux1, uy1, ux2, uy2, ...]``. Strains use
engineering shear, ``(eps_xx, eps_yy, gamma_xy)``. Thickness is 1 m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

NODE_XI = np.array([
    [-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0],
    [0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0],
])

# Local node triples along each edge (corner, midside, corner), CCW.
EDGE_NODES = np.array([[0, 4, 1], [1, 5, 2], [2, 6, 3], [3, 7, 0]])


class JacobianError(ValueError):
    """Non-positive Jacobian determinant at an integration point."""

    def __init__(self, element_ids):
        self.element_ids = np.atleast_1d(element_ids)
        super().__init__(
            f"non-positive Jacobian in element(s) {self.element_ids.tolist()[:10]}")


@dataclass(frozen=True)
class QuadratureRule:
    """Tensor-product Gauss rule on the parent square [-1, 1]^2.

    ``points`` has rows ``(xi, eta, weight)``; ``order`` is the highest
    polynomial degree integrated exactly in each direction.
    """

    points: np.ndarray
    order: int

    @classmethod
    def gauss(cls, n: int) -> "QuadratureRule":
        x, w = np.polynomial.legendre.leggauss(n)
        xi, eta = np.meshgrid(x, x, indexing="ij")
        ww = np.outer(w, w)
        pts = np.column_stack([xi.ravel(), eta.ravel(), ww.ravel()])
        return cls(pts, 2 * n - 1)

    @property
    def xi(self) -> np.ndarray:
        return self.points[:, :2]

    @property
    def weights(self) -> np.ndarray:
        return self.points[:, 2]

    def __len__(self) -> int:
        return len(self.points)


GAUSS_3x3 = QuadratureRule.gauss(3)
GAUSS_2x2 = QuadratureRule.gauss(2)


def shape_q8(xi, eta):
    """Shape functions and parent-space gradients.

    Parameters
    ----------
    xi, eta : float or array_like
        Parent coordinates (broadcast together).

    Returns
    -------
    N : ndarray, shape (..., 8)
    dN : ndarray, shape (..., 8, 2)
        ``dN[..., a, 0] = dN_a/dxi`` and ``dN[..., a, 1] = dN_a/deta``.
    """
    xi, eta = np.broadcast_arrays(np.asarray(xi, float), np.asarray(eta, float))
    xi = xi[..., None]
    eta = eta[..., None]
    xc, ec = NODE_XI[:4, 0], NODE_XI[:4, 1]

    n_c = 0.25 * (1 + xi * xc) * (1 + eta * ec) * (xi * xc + eta * ec - 1)
    dn_c_dxi = 0.25 * xc * (1 + eta * ec) * (2 * xi * xc + eta * ec)
    dn_c_deta = 0.25 * ec * (1 + xi * xc) * (xi * xc + 2 * eta * ec)

    # Midsides 5 and 7 lie on eta = -1/+1, 6 and 8 on xi = +1/-1.
    e57 = np.array([-1.0, 1.0])
    x68 = np.array([1.0, -1.0])
    n_57 = 0.5 * (1 - xi ** 2) * (1 + eta * e57)
    d57_dxi = -xi * (1 + eta * e57)
    d57_deta = 0.5 * (1 - xi ** 2) * e57
    n_68 = 0.5 * (1 + xi * x68) * (1 - eta ** 2)
    d68_dxi = 0.5 * x68 * (1 - eta ** 2)
    d68_deta = -eta * (1 + xi * x68)

    def order(c, a, b):
        return np.concatenate([c, a[..., :1], b[..., :1], a[..., 1:], b[..., 1:]], axis=-1)

    N = order(n_c, n_57, n_68)
    dN = np.stack([order(dn_c_dxi, d57_dxi, d68_dxi),
                   order(dn_c_deta, d57_deta, d68_deta)], axis=-1)
    return N, dN


def _rule_tables(rule: QuadratureRule):
    N, dN = shape_q8(rule.xi[:, 0], rule.xi[:, 1])
    return N, dN


@dataclass
class ElementGeometry:
    """Per-element, per-integration-point kinematic tables for a batch.

    Attributes
    ----------
    B : ndarray, shape (ne, ng, 3, 16)
        Strain-displacement matrices.
    wdet : ndarray, shape (ne, ng)
        Quadrature weight times Jacobian determinant (area measure).
    N : ndarray, shape (ng, 8)
        Shape function values at the integration points.
    xg : ndarray, shape (ne, ng, 2)
        Physical coordinates of the integration points.
    """

    B: np.ndarray
    wdet: np.ndarray
    N: np.ndarray
    xg: np.ndarray

    @property
    def area(self) -> np.ndarray:
        return self.wdet.sum(axis=1)


def element_geometry(coords, rule: QuadratureRule = GAUSS_3x3,
                     element_ids=None) -> ElementGeometry:
    """Build B-matrices for a batch of elements with coordinates ``(ne, 8, 2)``.

    Raises :class:`JacobianError` listing offending elements (``element_ids``
    labels them; defaults to the batch position).
    """
    X = np.asarray(coords, float)
    if X.ndim == 2:
        X = X[None]
    N, dN = _rule_tables(rule)
    # J[e, g, i, j] = d x_j / d xi_i
    J = np.einsum("gai,eaj->egij", dN, X)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    bad = (det <= 0.0).any(axis=1)
    if bad.any():
        ids = np.flatnonzero(bad) if element_ids is None else np.asarray(element_ids)[bad]
        raise JacobianError(ids)
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    # dN/dx[e, g, a, j] = sum_i invJ[j, i] dN[g, a, i]
    dNx = np.einsum("egji,gai->egaj", inv, dN)
    ne, ng = det.shape
    B = np.zeros((ne, ng, 3, 16))
    B[:, :, 0, 0::2] = dNx[..., 0]
    B[:, :, 1, 1::2] = dNx[..., 1]
    B[:, :, 2, 0::2] = dNx[..., 1]
    B[:, :, 2, 1::2] = dNx[..., 0]
    wdet = det * rule.weights[None, :]
    xg = np.einsum("ga,eaj->egj", N, X)
    return ElementGeometry(B, wdet, N, xg)


def element_stiffness(coords, D, rule: QuadratureRule = GAUSS_3x3) -> np.ndarray:
    """16x16 stiffness of one element.

    ``D`` is a 3x3 matrix or one per integration point, shape ``(ng, 3, 3)``.
    """
    geo = element_geometry(coords, rule)
    D = np.asarray(D, float)
    if D.ndim == 2:
        D = np.broadcast_to(D, (len(rule), 3, 3))
    return np.einsum("gki,gkl,glj,g->ij", geo.B[0], D, geo.B[0], geo.wdet[0])


def batch_stiffness(geo: ElementGeometry, D) -> np.ndarray:
    """Stiffness matrices ``(ne, 16, 16)`` for per-point tangents ``(ne, ng, 3, 3)``."""
    B = geo.B
    ne, ng = B.shape[:2]
    DB = np.matmul(D, B) * geo.wdet[:, :, None, None]
    Bt = B.transpose(0, 3, 1, 2).reshape(ne, 16, 3 * ng)
    return Bt @ DB.reshape(ne, 3 * ng, 16)


def element_mass(coords, rho: float, rule: QuadratureRule = GAUSS_3x3,
                 lumped: bool = False) -> np.ndarray:
    """Consistent (default) or row-sum lumped 16x16 mass matrix."""
    if rho <= 0.0:
        raise ValueError("density must be positive")
    geo = element_geometry(coords, rule)
    return batch_mass(geo, np.array([rho]), lumped=lumped)[0]


def batch_mass(geo: ElementGeometry, rho, lumped: bool = False) -> np.ndarray:
    rho = np.broadcast_to(np.asarray(rho, float), geo.wdet.shape[:1])
    m8 = np.einsum("ga,gb,eg,e->eab", geo.N, geo.N, geo.wdet, rho)
    ne = m8.shape[0]
    M = np.zeros((ne, 16, 16))
    M[:, 0::2, 0::2] = m8
    M[:, 1::2, 1::2] = m8
    if lumped:
        diag = M.sum(axis=2)
        M = np.zeros_like(M)
        idx = np.arange(16)
        M[:, idx, idx] = diag
    return M


def gauss_point_strain(coords, u_element, rule: QuadratureRule = GAUSS_3x3) -> np.ndarray:
    """Strains ``(ng, 3)`` = (eps_xx, eps_yy, gamma_xy) at the integration points."""
    geo = element_geometry(coords, rule)
    return np.einsum("gij,j->gi", geo.B[0], np.asarray(u_element, float))


def edge_load_weights() -> np.ndarray:
    """Consistent nodal weights (corner, midside, corner) for a uniform edge load."""
    return np.array([1.0, 4.0, 1.0]) / 6.0
