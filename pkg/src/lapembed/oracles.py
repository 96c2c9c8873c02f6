"""Brute-force reference implementations.

Everything here is written as plain Python loops over columns and shares no
code with the vectorized weight / Laplacian path, so agreement between the
two is evidence rather than tautology.  All of it is O(N^3) on purpose.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .linalg import InvalidInput


class TripletIndex(NamedTuple):
    a: int
    p: int
    n: int


@dataclass
class EquivalenceReport:
    naive_value: float
    laplacian_value: float
    hinge_constant: float
    active_count: int

    @property
    def residual(self):
        return abs(self.naive_value - (self.laplacian_value + self.hinge_constant))


class HingeConstants(NamedTuple):
    contrastive_constant: float
    triplet_constant: float
    active_neg_pairs: int
    active_triplets: int


def _columns(H):
    H = np.asarray(H, dtype=np.float64)
    return [[float(H[r, c]) for r in range(H.shape[0])] for c in range(H.shape[1])]


def _sqdist(u, v):
    total = 0.0
    for a, b in zip(u, v):
        total += (a - b) * (a - b)
    return total


def sq_dist_loops(H):
    """Squared distance table as nested lists."""
    cols = _columns(H)
    n = len(cols)
    return [[_sqdist(cols[i], cols[j]) for j in range(n)] for i in range(n)]


def naive_contrastive(H, pairs, alpha):
    """Mean contrastive loss over explicit ``(i, j, eta)`` pairs."""
    if not pairs:
        raise InvalidInput("pair list is empty")
    cols = _columns(H)
    total = 0.0
    for i, j, eta in pairs:
        d2 = _sqdist(cols[i], cols[j])
        total += d2 if eta else max(alpha - d2, 0.0)
    return total / len(pairs)


def naive_triplet(H, triplets, tau, labels=None):
    """Mean triplet hinge over explicit triplets; validates them when labels are given."""
    if not triplets:
        raise InvalidInput("triplet list is empty")
    cols = _columns(H)
    total = 0.0
    for a, p, n in triplets:
        if labels is not None:
            if a == p or labels[a] != labels[p] or labels[a] == labels[n]:
                raise InvalidInput(f"invalid triplet {(a, p, n)}")
        total += max(_sqdist(cols[a], cols[p]) - _sqdist(cols[a], cols[n]) + tau, 0.0)
    return total / len(triplets)


def all_triplets(labels):
    labels = list(labels)
    n = len(labels)
    return [
        TripletIndex(i, j, k)
        for i in range(n)
        for j in range(n)
        for k in range(n)
        if i != j and labels[i] == labels[j] and labels[i] != labels[k]
    ]


def naive_batch_contrastive(H, labels, alpha):
    """Batch-global contrastive loss: every ordered pair i != j, no averaging."""
    cols = _columns(H)
    n = len(cols)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            d2 = _sqdist(cols[i], cols[j])
            if labels[i] == labels[j]:
                total += d2
            else:
                total += max(alpha - d2, 0.0)
    return total


def naive_batch_triplet(H, labels, tau):
    """Batch-global triplet loss: every (anchor, positive, negative), no averaging."""
    cols = _columns(H)
    n = len(cols)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j or labels[i] != labels[j]:
                continue
            dij = _sqdist(cols[i], cols[j])
            for k in range(n):
                if labels[k] == labels[i]:
                    continue
                total += max(dij - _sqdist(cols[i], cols[k]) + tau, 0.0)
    return total


def count_active_triplets(d2, labels, tau):
    n = len(labels)
    count = 0
    for i in range(n):
        for j in range(n):
            if i == j or labels[i] != labels[j]:
                continue
            for k in range(n):
                if labels[k] != labels[i] and d2[i][j] - d2[i][k] + tau > 0:
                    count += 1
    return count


def hinge_constants(d2, labels, alpha, tau):
    """Constants dropped when the hinge losses are rewritten as ``sum S * D2``."""
    n = len(labels)
    neg = 0
    for i in range(n):
        for j in range(n):
            if i != j and labels[i] != labels[j] and alpha - d2[i][j] > 0:
                neg += 1
    trip = count_active_triplets(d2, labels, tau)
    return HingeConstants(alpha * neg, tau * trip, neg, trip)


def weighted_sq_dist_sum(H, s):
    """``sum_ij S_ij ||x_i - x_j||^2`` by direct summation."""
    cols = _columns(H)
    n = len(cols)
    total = 0.0
    for i in range(n):
        for j in range(n):
            total += float(s[i][j]) * _sqdist(cols[i], cols[j])
    return total


def min_hinge_margin(d2, labels, alpha, tau):
    """Smallest |hinge argument| over all contrastive negatives and triplets.

    Finite-difference checks are only meaningful when this is bounded away
    from zero, because the weights jump where an argument changes sign.
    """
    n = len(labels)
    best = float("inf")
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if labels[i] != labels[j]:
                best = min(best, abs(alpha - d2[i][j]))
                continue
            for k in range(n):
                if labels[k] != labels[i]:
                    best = min(best, abs(d2[i][j] - d2[i][k] + tau))
    return best


def finite_diff_grad(f, H, eps=1e-6):
    """Central differences of the scalar function ``f`` at every entry of ``H``."""
    H = np.array(H, dtype=np.float64)
    g = np.zeros_like(H)
    for idx in np.ndindex(*H.shape):
        old = H[idx]
        H[idx] = old + eps
        up = f(H)
        H[idx] = old - eps
        down = f(H)
        H[idx] = old
        g[idx] = (up - down) / (2.0 * eps)
    return g


def max_relative_error(analytic, numeric):
    """Largest entrywise gap scaled by the larger of the two gradients' max-norms."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)))
    gap = np.max(np.abs(analytic - numeric))
    if scale == 0.0:
        return float(gap)
    return float(gap / scale)
