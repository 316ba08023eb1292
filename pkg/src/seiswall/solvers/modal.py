"""Lowest natural frequencies by block inverse iteration with deflation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from ..fem.assembly import LinearSolver
from .model import FEModel


class ModalConvergenceError(RuntimeError):
    pass


@dataclass
class ModalResult:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray
    iterations: int

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.eigenvalues, 0.0)) / (2.0 * math.pi)


def _m_orthonormalize(X, M, locked=None):
    if locked is not None and locked.shape[1]:
        X = X - locked @ (locked.T @ (M @ X))
    G = X.T @ (M @ X)
    G = 0.5 * (G + G.T)
    w, V = np.linalg.eigh(G)
    keep = w > 1e-14 * w.max()
    return X @ (V[:, keep] / np.sqrt(w[keep]))


def lowest_modes(K, M, n_modes: int = 1, tol: float = 1e-6, max_iter: int = 500,
                 block: int | None = None, seed: int = 0) -> ModalResult:
    """Smallest eigenpairs of ``K v = lambda M v`` (K, M symmetric, K nonsingular).

    Each sweep applies ``K^-1 M`` to a block of trial vectors, followed by a
    Rayleigh-Ritz projection. Vectors whose residual
    ``||K v - lambda M v|| / ||K v||`` falls below ``tol`` are locked and the
    remaining block is kept M-orthogonal to them.
    """
    K = sp.csr_matrix(K)
    M = sp.csr_matrix(M)
    n = K.shape[0]
    if n == 0:
        raise ValueError("empty system")
    n_modes = min(n_modes, n)
    p = min(n, block or max(2 * n_modes, n_modes + 8))
    solver = LinearSolver(K)
    rng = np.random.default_rng(seed)
    X = _m_orthonormalize(rng.standard_normal((n, p)), M)
    locked = np.zeros((n, 0))
    lam_locked, res_locked = [], []
    for it in range(1, max_iter + 1):
        MX = M @ X
        Y = np.column_stack([solver.solve(MX[:, j]) for j in range(X.shape[1])])
        Y = _m_orthonormalize(Y, M, locked)
        Kr = Y.T @ (K @ Y)
        Mr = Y.T @ (M @ Y)
        w, Q = sla.eigh(0.5 * (Kr + Kr.T), 0.5 * (Mr + Mr.T))
        X = Y @ Q
        KX = K @ X
        R = KX - (M @ X) * w
        res = np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(KX, axis=0), 1e-300)
        n_new = 0
        while n_new < len(w) and res[n_new] <= tol and len(lam_locked) + n_new < n_modes:
            n_new += 1
        if n_new:
            locked = np.column_stack([locked, X[:, :n_new]])
            lam_locked += list(w[:n_new])
            res_locked += list(res[:n_new])
            X = X[:, n_new:]
            if len(lam_locked) >= n_modes:
                return ModalResult(np.array(lam_locked), locked, np.array(res_locked), it)
            # Refill the block so its size stays constant.
            extra = rng.standard_normal((n, p - X.shape[1]))
            X = _m_orthonormalize(np.column_stack([X, extra]), M, locked)
    raise ModalConvergenceError(
        f"inverse iteration did not converge in {max_iter} sweeps "
        f"(locked {len(lam_locked)} of {n_modes})")


def lowest_frequency(model: FEModel, n_modes: int = 1, tol: float = 1e-6,
                     seed: int = 0) -> ModalResult:
    """Lowest modes of the current active model with its current supports.

    Uses the elastic stiffness and consistent mass.
    """
    dm = model.dof_map
    K = model.elastic_stiffness(dof_map=dm)
    M = model.mass_matrix(dof_map=dm)
    return lowest_modes(K, M, n_modes=n_modes, tol=tol, seed=seed)


def single_dof_frequency(k: float, m: float) -> float:
    """Closed-form frequency of a spring-mass oscillator (Hz)."""
    if k <= 0.0 or m <= 0.0:
        raise ValueError("stiffness and mass must be positive")
    return math.sqrt(k / m) / (2.0 * math.pi)
