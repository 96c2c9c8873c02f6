"""Edge-weight matrices of the complete batch graph.

Positive weights pull a pair of samples together, negative weights push it
apart.  The contrastive and triplet weights are the derivatives of the
batch-global hinge losses with respect to each squared pair distance, so
``sum(S * D2)`` differs from the hinge loss only by a constant.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import InvalidInput

CONTRASTIVE = "contrastive"
TRIPLET = "triplet"
COMBINED = "combined"


@dataclass(frozen=True)
class LossConfig:
    alpha: float = 1.0  # contrastive margin
    tau: float = 1.0  # triplet margin
    beta: float = 0.1  # weight of the contrastive term in the combination
    lam: float = 0.6  # metric-loss weight against the softmax loss
    normalize_rows: bool = True
    normalize_order: str = "before"  # "after": normalize the combined S instead of each part

    def __post_init__(self):
        if self.normalize_order not in ("before", "after"):
            raise InvalidInput(f"normalize_order must be 'before' or 'after', got {self.normalize_order!r}")
        if not self.alpha > 0 or not self.tau > 0:
            raise InvalidInput("alpha and tau must be strictly positive")
        if not self.beta >= 0 or not self.lam >= 0:
            raise InvalidInput("beta and lambda must be non-negative")


@dataclass(frozen=True)
class WeightMatrix:
    s: np.ndarray
    kind: str
    normalized: bool = False

    @property
    def n(self):
        return self.s.shape[0]


def _check(d2, labels):
    d2 = np.asarray(d2, dtype=np.float64)
    labels = np.asarray(labels)
    if d2.ndim != 2 or d2.shape[0] != d2.shape[1]:
        raise InvalidInput(f"distance matrix must be square, got {d2.shape}")
    if labels.shape != (d2.shape[0],):
        raise InvalidInput(f"expected {d2.shape[0]} labels, got {labels.shape}")
    return d2, labels


def pair_masks(labels):
    """Boolean ``(same, different)`` identity masks; ``same`` excludes the diagonal."""
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    diff = ~same
    np.fill_diagonal(same, False)
    return same, diff


def contrastive_weights(d2, labels, alpha):
    """+1 for same-identity pairs, -1 for different-identity pairs closer than the margin."""
    d2, labels = _check(d2, labels)
    if not alpha > 0:
        raise InvalidInput("alpha must be > 0")
    same, diff = pair_masks(labels)
    s = same.astype(np.float64) - (diff & (alpha - d2 > 0)).astype(np.float64)
    return WeightMatrix(s, CONTRASTIVE)


def active_triplets(d2, labels, tau):
    """Boolean tensor ``T[i, j, k]``: anchor i, positive j, negative k with a violated margin.

    The margin test is strict, so a hinge argument of exactly zero is inactive.
    """
    d2, labels = _check(d2, labels)
    same, diff = pair_masks(labels)
    hinge = d2[:, :, None] - d2[:, None, :] + tau
    return same[:, :, None] & diff[:, None, :] & (hinge > 0)


def triplet_weights(d2, labels, tau, _fault=False):
    """Integer-valued triplet weights.

    ``s[i, j]`` counts active triplets with anchor i and positive j; for a
    negative j it is minus the number of active triplets (i, ., j).
    ``_fault`` flips the sign of the negative entries; it exists only so the
    verification suite can prove that it detects a broken construction.
    """
    if not tau > 0:
        raise InvalidInput("tau must be > 0")
    t = active_triplets(d2, labels, tau)
    pos = t.sum(axis=2)
    neg = t.sum(axis=1)
    s = (pos + neg if _fault else pos - neg).astype(np.float64)
    return WeightMatrix(s, TRIPLET)


def row_normalize(w):
    """Scale every row to unit Euclidean norm; all-zero rows stay zero."""
    norms = np.linalg.norm(w.s, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return WeightMatrix(w.s / safe[:, None], w.kind, normalized=True)


def combine(s_t, s_v, beta):
    if s_t.s.shape != s_v.s.shape:
        raise InvalidInput(f"shape mismatch: {s_t.s.shape} vs {s_v.s.shape}")
    return WeightMatrix(s_t.s + beta * s_v.s, COMBINED, s_t.normalized and s_v.normalized)


def batch_weights(d2, labels, cfg, parts=(TRIPLET, CONTRASTIVE), _fault=False):
    """Full weight construction for one batch.

    ``parts`` selects which terms enter: both gives ``S^t + beta * S^v``, a
    single part gives that matrix alone (unscaled).  Rows are normalized
    per matrix before combination when ``cfg.normalize_rows`` is set, or once
    on the combined matrix with ``normalize_order="after"``.
    """
    mats = {}
    if TRIPLET in parts:
        mats[TRIPLET] = triplet_weights(d2, labels, cfg.tau, _fault=_fault)
    if CONTRASTIVE in parts:
        mats[CONTRASTIVE] = contrastive_weights(d2, labels, cfg.alpha)
    if not mats:
        raise InvalidInput("no weight terms selected")
    after = cfg.normalize_order == "after"
    if cfg.normalize_rows and not after:
        mats = {k: row_normalize(v) for k, v in mats.items()}
    out = combine(mats[TRIPLET], mats[CONTRASTIVE], cfg.beta) if len(mats) == 2 else next(iter(mats.values()))
    return row_normalize(out) if cfg.normalize_rows and after else out
