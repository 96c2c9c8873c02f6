"""Small fully-connected embedding network with a softmax classification head.

Layer m computes ``relu(W_m a) + b_m`` (bias after the activation); the last
trunk layer is linear and its output is the embedding ``H`` (d_embed x N).
The classifier head maps ``H`` to class logits.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from . import laplacian
from .linalg import InvalidInput, pairwise_sq_dist
from .weights import CONTRASTIVE, TRIPLET, active_triplets, batch_weights

CHECKPOINT_MAGIC = b"LAPEMBD1"

# mode -> (softmax coefficient, uses metric loss, weight terms)
MODES = {
    "softmax": (1.0, False, (TRIPLET, CONTRASTIVE)),
    "bgcl": (0.0, True, (CONTRASTIVE,)),
    "bgtl": (0.0, True, (TRIPLET,)),
    "bgctl": (0.0, True, (TRIPLET, CONTRASTIVE)),
    "joint": (1.0, True, (TRIPLET, CONTRASTIVE)),
}
MODE_LABELS = {"softmax": "Softmax", "bgcl": "BGCL", "bgtl": "BGTL", "bgctl": "BGCTL", "joint": "ours"}


@dataclass
class EmbedNetParams:
    weights: list
    biases: list
    head_w: np.ndarray
    head_b: np.ndarray

    @property
    def dims(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_classes(self):
        return self.head_w.shape[0]

    def arrays(self):
        """All parameter arrays in checkpoint order (views, not copies)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out + [self.head_w, self.head_b]

    def copy(self):
        return EmbedNetParams(
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head_w.copy(),
            self.head_b.copy(),
        )

    def validate(self):
        dims = self.dims
        if dims[-1] < 2:
            raise InvalidInput("embedding dimension must be >= 2")
        for m, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[m + 1], dims[m]) or b.shape != (dims[m + 1],):
                raise InvalidInput(f"layer {m + 1} shapes do not chain")
        if self.head_w.shape != (self.n_classes, dims[-1]) or self.head_b.shape != (self.n_classes,):
            raise InvalidInput("classifier head shape mismatch")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise InvalidInput("non-finite parameters")
        return self


def init_params(dims, n_classes, rng):
    """Glorot-uniform weights, zero biases.  ``dims`` = [input, hidden..., embed]."""

    def glorot(fan_out, fan_in):
        s = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-s, s, size=(fan_out, fan_in))

    weights = [glorot(dims[m + 1], dims[m]) for m in range(len(dims) - 1)]
    biases = [np.zeros(d) for d in dims[1:]]
    return EmbedNetParams(weights, biases, glorot(n_classes, dims[-1]), np.zeros(n_classes)).validate()


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)  # activation entering each layer
    pre: list = field(default_factory=list)  # W a, before activation
    H: np.ndarray = None
    logits: np.ndarray = None


def forward(params, X, cache=None):
    """Return ``(H, logits)`` for inputs ``X`` of shape (d_in, N)."""
    a = np.asarray(X, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != params.dims[0]:
        raise InvalidInput(f"expected inputs of shape ({params.dims[0]}, N), got {a.shape}")
    last = len(params.weights) - 1
    for m, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = w @ a
        if cache is not None:
            cache.inputs.append(a)
            cache.pre.append(z)
        a = z + b[:, None] if m == last else np.maximum(z, 0.0) + b[:, None]
    logits = params.head_w @ a + params.head_b[:, None]
    if cache is not None:
        cache.H, cache.logits = a, logits
    return a, logits


def softmax_loss_and_grad(logits, labels):
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits (C x N)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    c, n = logits.shape
    if labels.shape != (n,) or labels.min() < 0 or labels.max() >= c:
        raise InvalidInput("labels out of range for the classifier head")
    z = logits - logits.max(axis=0, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=0))
    cols = np.arange(n)
    loss = float(np.mean(logsum - z[labels, cols]))
    p = np.exp(z - logsum)
    p[labels, cols] -= 1.0
    return loss, p / n


def backward(params, cache, dH, dlogits):
    """Backpropagate feature and logit gradients; returns grads in :meth:`arrays` order."""
    d_head_w = dlogits @ cache.H.T
    d_head_b = dlogits.sum(axis=1)
    da = dH + params.head_w.T @ dlogits
    grads = []
    last = len(params.weights) - 1
    for m in range(last, -1, -1):
        w = params.weights[m]
        db = da.sum(axis=1)
        dz = da if m == last else da * (cache.pre[m] > 0)
        dw = dz @ cache.inputs[m].T
        grads = [dw, db] + grads
        if m > 0:
            da = w.T @ dz
    return grads + [d_head_w, d_head_b]


def intra_inter_ratio(d2, labels):
    """Mean same-identity distance over mean different-identity distance (nan if undefined)."""
    labels = np.asarray(labels)
    d = np.sqrt(d2)
    iu = np.triu_indices(len(labels), k=1)
    same = (labels[:, None] == labels[None, :])[iu]
    dist = d[iu]
    if not same.any() or same.all():
        return float("nan")
    inter = dist[~same].mean()
    return float(dist[same].mean() / inter) if inter > 0 else float("nan")


def joint_objective(params, X, labels, cfg, mode="joint", scale_by_batch=True, _fault=False):
    """Forward pass plus the weighted total loss; returns ``(total, parts, cache, psi)``."""
    if mode not in MODES:
        raise InvalidInput(f"unknown mode {mode!r}")
    soft_coef, metric, terms = MODES[mode]
    cache = ForwardCache()
    H, logits = forward(params, X, cache)
    n = H.shape[1]
    d2 = pairwise_sq_dist(H)
    s = batch_weights(d2, labels, cfg, parts=terms, _fault=_fault)
    psi = laplacian.build_laplacian(s)
    scale = 1.0 / n if scale_by_batch else 1.0
    r = laplacian.loss(H, psi) * scale
    soft, dlogits = softmax_loss_and_grad(logits, labels)
    metric_coef = (cfg.lam if soft_coef else 1.0) if metric else 0.0
    parts = {
        "softmax_loss": soft,
        "laplacian_loss": r,
        "softmax_coef": soft_coef,
        "metric_coef": metric_coef * scale,
        "d2": d2,
        "dlogits": dlogits,
    }
    return soft_coef * soft + metric_coef * r, parts, cache, psi


def joint_backward(params, X, labels, cfg, mode="joint", scale_by_batch=True):
    """Gradients of the joint objective w.r.t. every parameter, plus diagnostics.

    The weight matrix is held fixed during differentiation; it is piecewise
    constant in the features, so this is the exact gradient away from hinge
    boundaries.
    """
    labels = np.asarray(labels)
    total, parts, cache, psi = joint_objective(params, X, labels, cfg, mode, scale_by_batch)
    dH = parts["metric_coef"] * laplacian.grad(cache.H, psi)
    dlogits = parts["softmax_coef"] * parts["dlogits"]
    grads = backward(params, cache, dH, dlogits)
    d2 = parts["d2"]
    same = labels[:, None] == labels[None, :]
    diag = {
        "total_loss": total,
        "softmax_loss": parts["softmax_loss"],
        "laplacian_loss": parts["laplacian_loss"],
        "active_neg_pairs": int(np.sum(~same & (cfg.alpha - d2 > 0))),
        "active_triplets": int(active_triplets(d2, labels, cfg.tau).sum()),
        "intra_inter_ratio": intra_inter_ratio(d2, labels),
    }
    return grads, diag


def save_checkpoint(params, path):
    """Binary layout, all little-endian::

        8 bytes   magic b"LAPEMBD1"
        uint32    M (trunk layers)
        uint32    C (classes)
        uint32    dims[M + 1]   input, hidden..., embedding
        float64   W1 (row-major), b1, ..., WM, bM, head W, head b
    """
    dims = params.dims
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", len(params.weights), params.n_classes))
        fh.write(struct.pack(f"<{len(dims)}I", *dims))
        for a in params.arrays():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHECKPOINT_MAGIC:
        raise InvalidInput(f"{path}: not a checkpoint file")
    if len(blob) < 16:
        raise InvalidInput(f"{path}: truncated checkpoint header")
    n_layers, n_classes = struct.unpack_from("<II", blob, 8)
    off = 16
    if n_layers < 1 or n_classes < 2 or len(blob) < off + 4 * (n_layers + 1):
        raise InvalidInput(f"{path}: bad checkpoint header")
    dims = list(struct.unpack_from(f"<{n_layers + 1}I", blob, off))
    off += 4 * (n_layers + 1)
    shapes = []
    for m in range(n_layers):
        shapes += [(dims[m + 1], dims[m]), (dims[m + 1],)]
    shapes += [(n_classes, dims[-1]), (n_classes,)]
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        if off + 8 * count > len(blob):
            raise InvalidInput(f"{path}: truncated checkpoint")
        arrays.append(np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape))
        off += 8 * count
    if off != len(blob):
        raise InvalidInput(f"{path}: trailing bytes in checkpoint")
    params = EmbedNetParams(arrays[0:-2:2], arrays[1:-2:2], arrays[-2], arrays[-1])
    return params.validate()
