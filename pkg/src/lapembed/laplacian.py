"""Graph Laplacian of a weight matrix and the trace-form metric loss."""

import numpy as np

from .linalg import InvalidInput, as_matrix, trace_quadratic


def build_laplacian(s):
    """``Psi = G - (S + S^T) / 2`` with ``G`` the diagonal of symmetrized row sums.

    Accepts a raw array or anything with an ``.s`` attribute.
    """
    s = np.asarray(getattr(s, "s", s), dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise InvalidInput(f"weight matrix must be square, got {s.shape}")
    sym = 0.5 * (s + s.T)
    np.fill_diagonal(sym, 0.0)
    psi = -sym
    np.fill_diagonal(psi, sym.sum(axis=1))
    return psi


def loss(H, psi):
    """``2 tr(H Psi H^T)``, equal to ``sum_ij S_ij ||x_i - x_j||^2``."""
    return 2.0 * trace_quadratic(H, psi)


def grad(H, psi):
    """Gradient of :func:`loss` w.r.t. ``H`` with the weights held fixed: ``4 H Psi``.

    Uses the symmetry of ``psi``; column i is the gradient for sample i.
    """
    H = as_matrix(H, "H")
    psi = as_matrix(psi, "Psi")
    if psi.shape != (H.shape[1], H.shape[1]):
        raise InvalidInput(f"Psi must be {H.shape[1]}x{H.shape[1]}, got {psi.shape}")
    return 4.0 * (H @ psi)
