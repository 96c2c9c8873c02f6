"""Retrieval evaluation: Euclidean ranking, CMC and mAP.

Single-shot splits put one view-B sample per identity in the gallery and
probe with one view-A sample per identity; each trial redraws which shots
are used.  mAP is computed on the multi-shot gallery (every view-B sample)
with every view-A sample as a probe.
"""

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .data import VIEWS, LabeledDataset
from .linalg import InvalidInput

DEFAULT_RANKS = (1, 5, 10, 20)


@dataclass
class RetrievalSplit:
    probe_feats: np.ndarray  # (n_probe, d)
    probe_ids: np.ndarray
    gallery_feats: np.ndarray  # (n_gallery, d)
    gallery_ids: np.ndarray
    single_shot: bool = True

    def validate(self):
        if len(self.gallery_ids) == 0:
            raise InvalidInput("empty gallery")
        if self.single_shot and len(np.unique(self.gallery_ids)) != len(self.gallery_ids):
            raise InvalidInput("single-shot gallery holds an identity twice")
        missing = set(np.asarray(self.probe_ids).tolist()) - set(np.asarray(self.gallery_ids).tolist())
        if missing:
            raise InvalidInput(f"probe identities missing from gallery: {sorted(missing)}")
        return self


@dataclass
class MetricsReport:
    cmc: dict  # rank -> accuracy
    curve: list  # accuracy at ranks 1..len(gallery)
    map: float = float("nan")
    num_trials: int = 0
    map_excluded: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        out = {f"rank{r}": v for r, v in self.cmc.items()}
        out.update(mAP=self.map, num_trials=self.num_trials, map_excluded_probes=self.map_excluded)
        out.update(self.extra)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def curve_csv(self):
        lines = ["rank,accuracy"] + [f"{r},{acc!r}" for r, acc in enumerate(self.curve, start=1)]
        return "\n".join(lines) + "\n"


def rank_gallery(probe, gallery):
    """Gallery indices by ascending Euclidean distance; ties keep index order."""
    gallery = np.asarray(gallery, dtype=np.float64)
    if gallery.ndim != 2 or len(gallery) == 0:
        raise InvalidInput("empty gallery")
    probe = np.asarray(probe, dtype=np.float64)
    if probe.shape != (gallery.shape[1],):
        raise InvalidInput("probe and gallery dimensions differ")
    diff = gallery - probe
    d2 = np.einsum("ij,ij->i", diff, diff)
    return np.argsort(d2, kind="stable")


def _match_ranks(split):
    """1-based rank of the first correct gallery entry for every probe."""
    out = np.empty(len(split.probe_ids), dtype=np.int64)
    for p, (x, c) in enumerate(zip(split.probe_feats, split.probe_ids)):
        order = rank_gallery(x, split.gallery_feats)
        out[p] = np.flatnonzero(split.gallery_ids[order] == c)[0] + 1
    return out


def cmc(splits, ranks=DEFAULT_RANKS):
    """Average cumulative match curve over splits.

    Returns ``(curve, at_ranks)``; ranks past the gallery size read 1.0.
    """
    if not splits:
        raise InvalidInput("no splits to evaluate")
    size = max(len(s.gallery_ids) for s in splits)
    curve = np.zeros(size)
    for s in splits:
        s.validate()
        hits = _match_ranks(s)
        curve += np.array([np.mean(hits <= r) for r in range(1, size + 1)])
    curve /= len(splits)
    at = {int(r): float(curve[min(r, size) - 1]) for r in ranks}
    return curve, at


def average_precision(order_ids, true_id):
    """AP of one ranked id list; None when there is no true match."""
    hits = np.flatnonzero(np.asarray(order_ids) == true_id)
    if len(hits) == 0:
        return None
    precision = np.arange(1, len(hits) + 1) / (hits + 1)
    return float(precision.mean())


def mean_average_precision(probe_feats, probe_ids, gallery_feats, gallery_ids):
    """Returns ``(mAP, n_excluded)``; probes without a true match are skipped and counted."""
    gallery_ids = np.asarray(gallery_ids)
    aps, excluded = [], 0
    for x, c in zip(probe_feats, probe_ids):
        ap = average_precision(gallery_ids[rank_gallery(x, gallery_feats)], c)
        if ap is None:
            excluded += 1
        else:
            aps.append(ap)
    return (float(np.mean(aps)) if aps else float("nan")), excluded


def single_shot_splits(feats, labels, views, n_trials=20, seed=0):
    """Per trial: one random view-A probe and one random view-B gallery shot per identity."""
    feats = np.asarray(feats, dtype=np.float64)
    labels = np.asarray(labels)
    views = np.asarray(views)
    ids = np.unique(labels)
    splits = []
    for t in range(n_trials):
        rng = np.random.default_rng([seed, t])
        probes, gallery = [], []
        for c in ids:
            a = np.flatnonzero((labels == c) & (views == VIEWS[0]))
            b = np.flatnonzero((labels == c) & (views == VIEWS[1]))
            if len(a) == 0 or len(b) == 0:
                raise InvalidInput(f"identity {c} needs samples in both views")
            probes.append(rng.choice(a))
            gallery.append(rng.choice(b))
        splits.append(RetrievalSplit(feats[probes], labels[probes], feats[gallery], labels[gallery]))
    return splits


def evaluate(feats, labels, views, n_trials=20, seed=0, ranks=DEFAULT_RANKS):
    splits = single_shot_splits(feats, labels, views, n_trials, seed)
    curve, at = cmc(splits, ranks)
    labels = np.asarray(labels)
    views = np.asarray(views)
    qa, gb = views == VIEWS[0], views == VIEWS[1]
    m, excluded = mean_average_precision(feats[qa], labels[qa], feats[gb], labels[gb])
    return MetricsReport(at, [float(v) for v in curve], m, n_trials, excluded)


def save_features_binary(ds, path):
    """Little-endian layout: uint64 n, uint64 d, then n records of
    float64 ``(id, view_index, f_0 .. f_{d-1})`` with view_index 0 = A, 1 = B."""
    codes = np.array([VIEWS.index(v) for v in ds.views], dtype=np.float64)
    body = np.column_stack([ds.labels.astype(np.float64), codes, ds.features])
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", len(ds), ds.dim))
        fh.write(np.ascontiguousarray(body, dtype="<f8").tobytes())


def load_features_binary(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise InvalidInput(f"{path}: truncated header")
    n, d = struct.unpack_from("<QQ", blob, 0)
    if len(blob) != 16 + 8 * n * (d + 2):
        raise InvalidInput(f"{path}: size does not match header ({n} x {d})")
    body = np.frombuffer(blob, dtype="<f8", offset=16).reshape(n, d + 2)
    views = [VIEWS[int(v)] for v in body[:, 1]]
    return LabeledDataset(body[:, 2:].astype(np.float64), body[:, 0].astype(np.int64), views)
