"""Graph diffusion on a pore network.

For node masses ``M`` and volumes ``v`` Fick's law between overlapping
balls gives ``dM/dt = D * Lap @ M`` with::

    Lap[i, i] = -sum_j Q[i, j] / v[i]
    Lap[i, j] =  Q[i, j] / v[j]        (i != j, edge i-j)

``Lap = L @ diag(1 / v)`` where ``L`` is the symmetric conductance Laplacian,
so every column of ``Lap`` sums to zero and total mass is conserved.

The backward-Euler step ``(I - dt D Lap) M+ = M`` is solved in concentration
form: with ``M+ = v * c``, ``(diag(v) - dt D L) c = M`` is symmetric positive
definite and is solved by preconditioned conjugate gradients. The new masses
are formed as ``M + dt D (L @ c)`` so that mass balance holds to round-off
even when the solve stops at its tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import InputError, NumericalError
from .network import PoreNetwork

__all__ = [
    "DiffusionOperator",
    "assemble",
    "apply",
    "pcg",
    "ImplicitDiffusion",
    "implicit_diffusion_step",
]


@dataclass(frozen=True, eq=False)
class DiffusionOperator:
    """Mass-form operator ``matrix`` (um^-2) and its symmetric factors."""

    matrix: sparse.csc_matrix
    laplacian: sparse.csr_matrix  # symmetric conductance Laplacian L (um)
    volumes: np.ndarray  # um^3

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def triplets(self) -> list[tuple[int, int, float]]:
        """``(row, col, value)`` list for debugging dumps."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return [(int(coo.row[k]), int(coo.col[k]), float(coo.data[k])) for k in order]


def assemble(net: PoreNetwork) -> DiffusionOperator:
    n = net.n_nodes
    if n < 1:
        raise InputError("network has no nodes")
    v = np.asarray(net.volumes, dtype=float)
    if np.any(v <= 0):
        raise InputError("every node volume must be positive")
    i, j, q = net.edge_i, net.edge_j, net.q
    deg = np.zeros(n)
    np.add.at(deg, i, q)
    np.add.at(deg, j, q)
    rows = np.concatenate([i, j, np.arange(n)])
    cols = np.concatenate([j, i, np.arange(n)])
    vals = np.concatenate([q, q, -deg])
    L = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    L.sum_duplicates()
    L.sort_indices()
    lap = (L @ sparse.diags(1.0 / v)).tocsc()
    lap.sort_indices()
    return DiffusionOperator(matrix=lap, laplacian=L, volumes=v)


def apply(op: DiffusionOperator, M, D: float) -> np.ndarray:
    """Mass rates ``D * Lap @ M`` (mass per day)."""
    M = np.asarray(M, dtype=float)
    if M.shape != (op.n,):
        raise InputError(f"mass vector has shape {M.shape}, expected ({op.n},)")
    return D * (op.laplacian @ (M / op.volumes))


def pcg(A, b, x0=None, precond: Optional[Callable] = None, tol: float = 1e-10,
        max_iter: int = 10_000, min_iter: int = 0):
    """Preconditioned conjugate gradients for symmetric positive definite ``A``.

    Stops when ``||b - A x|| <= tol * ||b||`` after at least ``min_iter``
    iterations. Returns ``(x, iterations, relative_residual)``; raises
    :class:`NumericalError` if ``max_iter`` is hit.
    """
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    rel = np.linalg.norm(r) / bnorm
    if rel <= tol and min_iter <= 0:
        return x, 0, rel
    z = precond(r) if precond is not None else r
    p = z.copy()
    rz = r @ z
    for k in range(1, max_iter + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rel = np.linalg.norm(r) / bnorm
        if rel == 0.0:
            return x, k, rel
        if rel <= tol and k >= min_iter:
            # recompute to guard against drift in the recursive residual
            rel = np.linalg.norm(b - A @ x) / bnorm
            if rel <= tol:
                return x, k, rel
            r = b - A @ x
        z = precond(r) if precond is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NumericalError(
        f"conjugate gradients did not converge in {max_iter} iterations "
        f"(relative residual {rel:.3e} > {tol:.1e})")


class ImplicitDiffusion:
    """Backward-Euler diffusion solver for a fixed ``(op, D, dt)``.

    ``preconditioner`` is ``"lu"`` (sparse LU of the system matrix; CG then
    converges in one or two iterations) or ``"jacobi"``.

    At least one iteration is always taken. The starting guess ``M / v`` is
    often already within ``tol``, but the mass update inherits the residual,
    and a residual of ``tol * ||M||`` every step would visibly perturb states
    that should stay fixed (uniform concentration).
    """

    def __init__(self, op: DiffusionOperator, D: float, dt: float, tol: float = 1e-10,
                 max_iter: int = 10_000, preconditioner: str = "lu"):
        if dt <= 0:
            raise InputError("dt must be positive")
        if D < 0:
            raise InputError("diffusion coefficient must be nonnegative")
        self.op, self.D, self.dt = op, float(D), float(dt)
        self.tol, self.max_iter = tol, max_iter
        self.last_iterations = 0
        self.last_residual = 0.0
        self._scale = self.dt * self.D
        if self._scale == 0.0:
            self.A = None
            return
        self.A = (sparse.diags(op.volumes) - self._scale * op.laplacian).tocsr()
        if preconditioner == "lu":
            self._precond = splu(self.A.tocsc()).solve
        elif preconditioner == "jacobi":
            inv = 1.0 / self.A.diagonal()
            self._precond = lambda r: inv * r
        else:
            raise InputError(f"unknown preconditioner {preconditioner!r}")

    def __call__(self, M) -> np.ndarray:
        M = np.asarray(M, dtype=float)
        if M.shape != (self.op.n,):
            raise InputError(f"mass vector has shape {M.shape}, expected ({self.op.n},)")
        if self.A is None:
            return M.copy()
        c, self.last_iterations, self.last_residual = pcg(
            self.A, M, x0=M / self.op.volumes, precond=self._precond, tol=self.tol,
            max_iter=self.max_iter, min_iter=1)
        return M + self._scale * (self.op.laplacian @ c)


def implicit_diffusion_step(op: DiffusionOperator, M, D: float, dt: float,
                            tol: float = 1e-10, max_iter: int = 10_000) -> np.ndarray:
    """One backward-Euler step of ``dM/dt = D Lap M``."""
    return ImplicitDiffusion(op, D, dt, tol=tol, max_iter=max_iter)(M)
