"""Degree-of-freedom numbering, sparse assembly and linear solves."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SingularSystemError(RuntimeError):
    """The reduced system is singular (missing supports or a mechanism)."""


class DofMap:
    """Global equation numbering for 2-dof-per-node meshes.

    Parameters
    ----------
    n_nodes : int
    active_nodes : array_like of bool, optional
        Nodes that carry unknowns. Inactive nodes get no equations.
    fixed : iterable of (node, component)
        Constrained dofs (value prescribed separately, default zero).
    ties : iterable of (master, slave, component)
        The slave dof shares the master's equation.

    ``eq[node, comp]`` is the equation index or -1.
    """

    def __init__(self, n_nodes, active_nodes=None, fixed=(), ties=()):
        self.n_nodes = int(n_nodes)
        active = np.ones(n_nodes, bool) if active_nodes is None else np.asarray(active_nodes, bool)
        free = np.repeat(active[:, None], 2, axis=1)
        fixed = list(fixed)
        if fixed:
            f = np.asarray(fixed, int).reshape(-1, 2)
            free[f[:, 0], f[:, 1]] = False
        self.fixed_mask = ~free & active[:, None]
        eq = -np.ones((n_nodes, 2), int)
        # Slaves are numbered through their master.
        slave = np.zeros((n_nodes, 2), bool)
        tie_list = []
        for master, s, comp in ties:
            if master == s:
                continue
            if free[master, comp] and free[s, comp]:
                slave[s, comp] = True
                tie_list.append((master, s, comp))
        own = free & ~slave
        eq[own] = np.arange(own.sum())
        # Resolve chains master -> slave -> ...
        for _ in range(len(tie_list) + 1):
            changed = False
            for master, s, comp in tie_list:
                if eq[master, comp] >= 0 and eq[s, comp] != eq[master, comp]:
                    eq[s, comp] = eq[master, comp]
                    changed = True
            if not changed:
                break
        self.eq = eq
        self.active = active
        self.n_eq = int(own.sum())
        self.flat = eq.ravel()

    def gather(self, full: np.ndarray) -> np.ndarray:
        """Sum a full nodal vector ``(2 * n_nodes,)`` into equation space."""
        m = self.flat >= 0
        return np.bincount(self.flat[m], weights=full[m], minlength=self.n_eq)

    def scatter(self, x: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Expand an equation vector to full nodal layout (constrained dofs untouched)."""
        if out is None:
            out = np.zeros(2 * self.n_nodes)
        m = self.flat >= 0
        out[m] = x[self.flat[m]]
        return out


def element_dofs(connectivity: np.ndarray) -> np.ndarray:
    """Full-vector dof indices ``(ne, 16)`` in interleaved order."""
    conn = np.asarray(connectivity, int)
    d = np.empty((conn.shape[0], 16), int)
    d[:, 0::2] = 2 * conn
    d[:, 1::2] = 2 * conn + 1
    return d


def assemble(element_matrices: np.ndarray, dofs: np.ndarray, dof_map: DofMap,
             active=None) -> sp.csr_matrix:
    """Assemble ``(ne, 16, 16)`` element matrices into the reduced system.

    Rows/columns of constrained dofs are dropped; inactive elements are
    skipped entirely.
    """
    ke = np.asarray(element_matrices)
    if active is not None:
        active = np.asarray(active, bool)
        ke = ke[active]
        dofs = dofs[active]
    n = dof_map.n_eq
    if ke.shape[0] == 0:
        return sp.csr_matrix((n, n))
    eqs = dof_map.flat[dofs]
    rows = np.repeat(eqs, 16, axis=1).ravel()
    cols = np.tile(eqs, (1, 16)).ravel()
    vals = ke.reshape(-1)
    keep = (rows >= 0) & (cols >= 0)
    K = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    return K.tocsr()


def assemble_full(element_matrices: np.ndarray, dofs: np.ndarray, n_dofs: int,
                  active=None) -> sp.csr_matrix:
    """Assemble into the unreduced ``n_dofs x n_dofs`` layout."""
    ke = np.asarray(element_matrices)
    if active is not None:
        ke = ke[np.asarray(active, bool)]
        dofs = dofs[np.asarray(active, bool)]
    rows = np.repeat(dofs, 16, axis=1).ravel()
    cols = np.tile(dofs, (1, 16)).ravel()
    return sp.coo_matrix((ke.reshape(-1), (rows, cols)), shape=(n_dofs, n_dofs)).tocsr()


def assemble_vector(element_vectors: np.ndarray, dofs: np.ndarray, n_dofs: int,
                    active=None) -> np.ndarray:
    fe = np.asarray(element_vectors)
    if active is not None:
        fe = fe[np.asarray(active, bool)]
        dofs = dofs[np.asarray(active, bool)]
    return np.bincount(dofs.ravel(), weights=fe.ravel(), minlength=n_dofs)


class LinearSolver:
    """Sparse LU factorization with a residual check on every solve."""

    def __init__(self, K: sp.spmatrix, rtol: float = 1e-9):
        self.K = sp.csc_matrix(K)
        self.rtol = rtol
        if self.K.shape[0] == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(self.K, permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SingularSystemError(f"factorization failed: {exc}") from exc

    def solve(self, f: np.ndarray) -> np.ndarray:
        if self._lu is None:
            return np.zeros(0)
        u = self._lu.solve(np.asarray(f, float))
        if not np.all(np.isfinite(u)):
            raise SingularSystemError("non-finite solution (singular system)")
        fn = np.linalg.norm(f)
        r = np.linalg.norm(self.K @ u - f)
        if r > max(self.rtol * fn, 1e-300) and fn > 0.0:
            # One step of iterative refinement before giving up.
            u = u + self._lu.solve(f - self.K @ u)
            r = np.linalg.norm(self.K @ u - f)
            if r > self.rtol * fn:
                raise SingularSystemError(
                    f"residual {r / fn:.3e} exceeds tolerance (ill-conditioned or singular)")
        return u


def solve_linear_system(K: sp.spmatrix, f: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Solve ``K u = f`` directly; raises :class:`SingularSystemError`."""
    return LinearSolver(K, rtol).solve(f)
