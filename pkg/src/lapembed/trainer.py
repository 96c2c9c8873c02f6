"""Mini-batch training loop for the embedding network."""

import csv
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .linalg import InvalidInput, pairwise_sq_dist
from .net import MODES, forward, init_params, intra_inter_ratio, joint_backward
from .data import make_bundles
from .weights import LossConfig

LOG_FIELDS = (
    "iteration",
    "epoch",
    "learning_rate",
    "total_loss",
    "softmax_loss",
    "laplacian_loss",
    "active_neg_pairs",
    "active_triplets",
    "intra_inter_ratio",
)


class DivergenceError(RuntimeError):
    def __init__(self, message, log):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 64
    learning_rate: float = 0.01
    lr_decay: float = 0.1
    lr_step: int = 25  # epochs between decays
    momentum: float = 0.9
    seed: int = 0
    mode: str = "joint"
    scale_by_batch: bool = True
    hidden: tuple = (32,)
    embed_dim: int = 8
    loss: LossConfig = field(default_factory=LossConfig)

    def __post_init__(self):
        if self.batch_size < 4 or self.batch_size % 2:
            raise InvalidInput("batch_size must be even and >= 4")
        if not self.learning_rate > 0:
            raise InvalidInput("learning rate must be > 0")
        if self.mode not in MODES:
            raise InvalidInput(f"mode must be one of {sorted(MODES)}")
        if self.epochs < 1 or self.lr_step < 1:
            raise InvalidInput("epochs and lr_step must be >= 1")
        if not 0 <= self.momentum < 1:
            raise InvalidInput("momentum must lie in [0, 1)")
        if self.embed_dim < 2:
            raise InvalidInput("embed_dim must be >= 2")

    def lr_at(self, epoch):
        return self.learning_rate * self.lr_decay ** (epoch // self.lr_step)


class BundleSampler:
    """Draws batches of (same identity, different view) sample pairs.

    Bundles are consumed from a stream of shuffled permutations, so each
    epoch uses bundles without replacement and leftovers spill into the
    next permutation.  A batch never holds a single identity when the
    dataset has more than one.
    """

    def __init__(self, ds, batch_size, rng):
        if batch_size < 4 or batch_size % 2:
            raise InvalidInput("batch_size must be even and >= 4")
        self.bundles = make_bundles(ds)
        self.bundle_ids = ds.labels[self.bundles[:, 0]]
        self.k = batch_size // 2
        if len(self.bundles) < self.k:
            raise InvalidInput(f"dataset has {len(self.bundles)} bundles, a batch needs {self.k}")
        self.multi = len(np.unique(self.bundle_ids)) > 1
        self.rng = rng
        self.queue = deque()

    @property
    def batches_per_epoch(self):
        return max(1, len(self.bundles) // self.k)

    def _fill(self, n):
        while len(self.queue) < n:
            self.queue.extend(int(i) for i in self.rng.permutation(len(self.bundles)))

    def next_batch(self):
        self._fill(self.k)
        take = [self.queue.popleft() for _ in range(self.k)]
        if self.multi and len(set(self.bundle_ids[take])) == 1:
            self._fill(len(self.bundles) + 1)
            for pos, b in enumerate(self.queue):
                if self.bundle_ids[b] != self.bundle_ids[take[0]]:
                    self.queue[pos] = take[-1]
                    take[-1] = b
                    break
        return self.bundles[take].reshape(-1)


def sample_batch(ds, batch_size, rng):
    """One batch of sample indices (see :class:`BundleSampler`)."""
    return BundleSampler(ds, batch_size, rng).next_batch()


def class_index(labels):
    """Map identity labels to contiguous classifier indices."""
    classes, idx = np.unique(labels, return_inverse=True)
    return classes, idx


def train(ds, cfg, on_iteration=None):
    """Train on ``ds``; returns ``(params, log_rows)``.

    Raises :class:`DivergenceError` (carrying the partial log) as soon as a
    loss, gradient or parameter becomes non-finite, before it is applied.
    """
    ds.validate()
    classes, targets = class_index(ds.labels)
    init_rng, batch_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    params = init_params([ds.dim, *cfg.hidden, cfg.embed_dim], len(classes), init_rng)
    sampler = BundleSampler(ds, cfg.batch_size, batch_rng)
    velocity = [np.zeros_like(a) for a in params.arrays()]
    X = ds.features.T
    log = []
    it = 0
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        for _ in range(sampler.batches_per_epoch):
            idx = sampler.next_batch()
            grads, diag = joint_backward(
                params, X[:, idx], targets[idx], cfg.loss, cfg.mode, cfg.scale_by_batch
            )
            row = {"iteration": it, "epoch": epoch, "learning_rate": lr, **diag}
            log.append(row)
            if on_iteration is not None:
                on_iteration(row)
            if not np.isfinite(diag["total_loss"]) or not all(np.all(np.isfinite(g)) for g in grads):
                raise DivergenceError(f"non-finite loss or gradient at iteration {it}", log)
            for p, v, g in zip(params.arrays(), velocity, grads):
                v *= cfg.momentum
                v -= lr * g
                p += v
            if not all(np.all(np.isfinite(p)) for p in params.arrays()):
                raise DivergenceError(f"non-finite parameters after iteration {it}", log)
            it += 1
    return params, log


def embed(params, features):
    """Embeddings for row-per-sample ``features``; returns (n_samples, d_embed)."""
    H, _ = forward(params, np.asarray(features, dtype=np.float64).T)
    return H.T


def feature_ratio(params, ds):
    """Intra/inter distance ratio of the learned embedding over a whole dataset."""
    return intra_inter_ratio(pairwise_sq_dist(embed(params, ds.features).T), ds.labels)


def epoch_means(log, key="total_loss"):
    by_epoch = {}
    for row in log:
        by_epoch.setdefault(row["epoch"], []).append(row[key])
    return [float(np.mean(v)) for _, v in sorted(by_epoch.items())]


def write_log(log, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for row in log:
            writer.writerow([repr(float(row[k])) if isinstance(row[k], float) else row[k] for k in LOG_FIELDS])
