"""Dense matrix helpers shared by the loss, network and evaluation code.

Samples are stored as *columns*: a feature batch ``H`` has shape ``(d, N)``.
"""

import numpy as np


class InvalidInput(ValueError):
    """Raised for malformed or non-finite numeric input."""


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise InvalidInput(f"{name} must be non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return m


def pairwise_sq_dist(H):
    """Squared Euclidean distances between the columns of ``H``.

    Returns an ``(N, N)`` array that is exactly symmetric, has an exactly
    zero diagonal and no negative entries.
    """
    H = as_matrix(H, "H")
    # difference form: exact for coincident columns, and (a-b)**2 == (b-a)**2
    diff = H[:, :, None] - H[:, None, :]
    d2 = np.einsum("kij,kij->ij", diff, diff)
    np.fill_diagonal(d2, 0.0)
    return d2


def mat_mul(A, B):
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    if A.shape[1] != B.shape[0]:
        raise InvalidInput(f"inner dimensions differ: {A.shape} x {B.shape}")
    return A @ B


def trace_quadratic(H, Psi):
    """``tr(H Psi H^T)`` for ``H`` of shape ``(d, N)`` and ``Psi`` of shape ``(N, N)``."""
    H = as_matrix(H, "H")
    Psi = as_matrix(Psi, "Psi")
    n = H.shape[1]
    if Psi.shape != (n, n):
        raise InvalidInput(f"Psi must be {n}x{n}, got {Psi.shape}")
    return float(np.sum((H @ Psi) * H))
