"""Synthetic identity-cluster data and the dataset file format.

Dataset files are text: ``#``-prefixed ``key=value`` header lines followed by
a CSV body whose columns are ``id, view, f0 ... f{d-1}``.  Ids are integers
starting at 1 and views are single tags (``A``/``B``).
"""

import csv
import io
from dataclasses import asdict, dataclass

import numpy as np

from .linalg import InvalidInput

VIEWS = ("A", "B")
FORMAT_TAG = "lapembed-dataset v1"


@dataclass(frozen=True)
class SynthConfig:
    identities: int = 32
    per_view: int = 4
    dim: int = 16
    center_scale: float = 1.0
    noise_scale: float = 0.35
    view_offset_scale: float = 0.7  # 2x noise: camera shift the trunk has to learn to remove
    seed: int = 0

    def __post_init__(self):
        if self.identities < 2:
            raise InvalidInput("need at least 2 identities")
        if self.per_view < 1 or self.dim < 1:
            raise InvalidInput("per_view and dim must be >= 1")
        if min(self.center_scale, self.noise_scale, self.view_offset_scale) < 0:
            raise InvalidInput("scales must be non-negative")


@dataclass
class LabeledDataset:
    features: np.ndarray  # (n_samples, dim), one row per sample
    labels: np.ndarray  # (n_samples,) int identity
    views: np.ndarray  # (n_samples,) str view tag

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.views = np.asarray(self.views, dtype=str)
        n = len(self.labels)
        if self.features.ndim != 2 or self.features.shape[0] != n or self.views.shape != (n,):
            raise InvalidInput("features, labels and views disagree in length")

    def __len__(self):
        return len(self.labels)

    @property
    def identities(self):
        return np.unique(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    def subset(self, mask):
        return LabeledDataset(self.features[mask], self.labels[mask], self.views[mask])

    def validate(self):
        """Every identity needs >= 2 samples over >= 2 views; at least 2 identities."""
        ids = self.identities
        if len(ids) < 2:
            raise InvalidInput("dataset needs at least 2 identities")
        for c in ids:
            views = self.views[self.labels == c]
            if len(views) < 2 or len(set(views)) < 2:
                raise InvalidInput(f"identity {c} lacks samples from two views")
        return self


def gen_synth(cfg):
    """Draw identity centers, add a per-view offset and isotropic noise."""
    rng = np.random.default_rng(cfg.seed)
    centers = rng.normal(0.0, cfg.center_scale, size=(cfg.identities, cfg.dim))
    offsets = rng.normal(0.0, cfg.view_offset_scale, size=(len(VIEWS), cfg.dim))
    feats, labels, views = [], [], []
    for c in range(cfg.identities):
        for v, tag in enumerate(VIEWS):
            noise = rng.normal(0.0, cfg.noise_scale, size=(cfg.per_view, cfg.dim))
            feats.append(centers[c] + offsets[v] + noise)
            labels += [c + 1] * cfg.per_view
            views += [tag] * cfg.per_view
    return LabeledDataset(np.vstack(feats), labels, views).validate()


def split_identities(ds, n_test):
    """Hold out the ``n_test`` highest ids for evaluation; returns ``(train, test)``."""
    ids = ds.identities
    if not 0 < n_test < len(ids):
        raise InvalidInput(f"test identities must be in 1..{len(ids) - 1}, got {n_test}")
    test_ids = ids[len(ids) - n_test:]
    mask = np.isin(ds.labels, test_ids)
    return ds.subset(~mask), ds.subset(mask)


def make_bundles(ds):
    """Pair the k-th view-A sample of an identity with its k-th view-B sample.

    Returns an int array of shape (n_bundles, 2) holding sample indices.
    """
    bundles = []
    for c in ds.identities:
        idx = np.flatnonzero(ds.labels == c)
        tags = ds.views[idx]
        first = idx[tags == tags[0]]
        other = idx[tags != tags[0]]
        for a, b in zip(first, other):
            bundles.append((a, b))
    return np.asarray(bundles, dtype=np.int64).reshape(-1, 2)


def dumps_dataset(ds, header=None):
    out = io.StringIO()
    out.write(f"# {FORMAT_TAG}\n")
    for key, value in (header or {}).items():
        out.write(f"# {key}={value}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "view"] + [f"f{k}" for k in range(ds.dim)])
    for x, c, v in zip(ds.features, ds.labels, ds.views):
        writer.writerow([int(c), v] + [repr(float(t)) for t in x])
    return out.getvalue()


def save_dataset(ds, path, cfg=None):
    header = asdict(cfg) if cfg is not None else None
    with open(path, "w", newline="") as fh:
        fh.write(dumps_dataset(ds, header))


def load_dataset(path):
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or rows[0][:2] != ["id", "view"]:
        raise InvalidInput(f"{path}: missing 'id,view,...' header row")
    body = rows[1:]
    if not body:
        raise InvalidInput(f"{path}: no samples")
    try:
        labels = [int(r[0]) for r in body]
        views = [r[1] for r in body]
        feats = np.array([[float(t) for t in r[2:]] for r in body])
    except ValueError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
    if not np.all(np.isfinite(feats)):
        raise InvalidInput(f"{path}: non-finite features")
    return LabeledDataset(feats, labels, views)
