import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lapembed.data import LabeledDataset
from lapembed.linalg import InvalidInput
from lapembed.retrieval import (
    RetrievalSplit,
    average_precision,
    cmc,
    evaluate,
    load_features_binary,
    mean_average_precision,
    rank_gallery,
    save_features_binary,
    single_shot_splits,
)
from retrieval_oracle import loop_cmc, loop_map, random_split


def test_rank_examples():
    assert rank_gallery([0.0], [[5.0], [0.0], [1.0]])[0] == 1
    assert list(rank_gallery([0.0, 0.0], [[3.0, 1.0]])) == [0]
    assert list(rank_gallery([0.0], [[2.0], [1.0], [3.0]])) == [1, 0, 2]


def test_rank_ties_break_by_index():
    assert list(rank_gallery([0.0], [[1.0], [-1.0], [1.0], [0.5]])) == [3, 0, 1, 2]


def test_rank_errors():
    with pytest.raises(InvalidInput):
        rank_gallery([0.0], np.zeros((0, 1)))
    with pytest.raises(InvalidInput):
        rank_gallery([0.0, 1.0], [[1.0]])


def test_perfect_features_rank1():
    centers = np.eye(4)
    split = RetrievalSplit(centers.copy(), np.arange(4), centers.copy(), np.arange(4))
    _, at = cmc([split], (1,))
    assert at[1] == 1.0


def test_adversarial_rank2():
    # 1-D: every probe sits 4 from a wrong gallery entry and 6 from its own
    n = 5
    gallery = 10.0 * np.arange(n)[:, None]
    probes = gallery + 6.0
    probes[-1] -= 12.0
    split = RetrievalSplit(probes, np.arange(n), gallery, np.arange(n))
    _, at = cmc([split], (1, 2))
    assert at[1] == 0.0 and at[2] == 1.0


def test_missing_probe_identity():
    split = RetrievalSplit(np.zeros((1, 2)), np.array([9]), np.zeros((1, 2)), np.array([1]))
    with pytest.raises(InvalidInput):
        cmc([split])


def test_empty_gallery():
    split = RetrievalSplit(np.zeros((1, 2)), np.array([1]), np.zeros((0, 2)), np.array([], dtype=int))
    with pytest.raises(InvalidInput):
        cmc([split])


def test_single_shot_rejects_duplicate_gallery_identity():
    split = RetrievalSplit(np.zeros((1, 2)), np.array([1]), np.zeros((2, 2)), np.array([1, 1]))
    with pytest.raises(InvalidInput):
        split.validate()


def test_ap_examples():
    assert average_precision([3], 3) == 1.0
    assert average_precision([1, 3], 3) == 0.5
    assert average_precision([3, 1, 3], 3) == pytest.approx(5 / 6, abs=1e-15)
    assert average_precision([1, 2], 3) is None


def test_map_counts_excluded_probes():
    m, excluded = mean_average_precision(np.zeros((2, 1)), [1, 7], np.zeros((2, 1)), [1, 2])
    assert m == 1.0 and excluded == 1


def test_map_is_one_for_prefix_matches():
    gallery = np.array([[0.0], [0.1], [5.0], [5.1]])
    m, _ = mean_average_precision(np.array([[0.05], [5.05]]), [1, 2], gallery, [1, 1, 2, 2])
    assert m == 1.0
    m, _ = mean_average_precision(np.array([[0.05]]), [1], gallery, [1, 2, 1, 2])
    assert m < 1.0


def test_oracle_equivalence_random_instances():
    rng = np.random.default_rng(123)
    for _ in range(50):
        n_ids = int(rng.integers(2, 11))
        splits = [random_split(rng, n_ids) for _ in range(int(rng.integers(1, 4)))]
        curve, _ = cmc(splits)
        assert list(curve) == loop_cmc(splits, n_ids)
        per = int(rng.integers(1, 4))
        gallery = rng.normal(size=(n_ids * per, 3))
        gids = np.repeat(np.arange(n_ids), per)
        probes = rng.normal(size=(n_ids, 3))
        m, excluded = mean_average_precision(probes, np.arange(n_ids), gallery, gids)
        assert excluded == 0
        assert m == pytest.approx(loop_map(probes, np.arange(n_ids), gallery, gids), abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 10), st.floats(0.01, 100.0))
def test_cmc_properties_and_scale_invariance(seed, n_ids, scale):
    rng = np.random.default_rng(seed)
    split = random_split(rng, n_ids)
    curve, _ = cmc([split])
    assert np.all(np.diff(curve) >= 0)
    assert np.all((curve >= 0) & (curve <= 1))
    assert curve[-1] == 1.0
    scaled = RetrievalSplit(split.probe_feats * scale, split.probe_ids, split.gallery_feats * scale, split.gallery_ids)
    for x, y in zip(split.probe_feats, scaled.probe_feats):
        assert np.array_equal(rank_gallery(x, split.gallery_feats), rank_gallery(y, scaled.gallery_feats))


def synthetic_features(rng, n_ids=6, per_view=3, dim=4):
    labels, views, feats = [], [], []
    for c in range(1, n_ids + 1):
        center = rng.normal(scale=3.0, size=dim)
        for v in ("A", "B"):
            for _ in range(per_view):
                labels.append(c)
                views.append(v)
                feats.append(center + rng.normal(scale=0.2, size=dim))
    return np.array(feats), np.array(labels), np.array(views)


def test_single_shot_splits_are_valid_and_seeded():
    feats, labels, views = synthetic_features(np.random.default_rng(0))
    a = single_shot_splits(feats, labels, views, n_trials=5, seed=3)
    b = single_shot_splits(feats, labels, views, n_trials=5, seed=3)
    assert len(a) == 5
    for s, t in zip(a, b):
        s.validate()
        assert np.array_equal(s.gallery_feats, t.gallery_feats)
        assert sorted(s.gallery_ids.tolist()) == list(range(1, 7))
        # probe and gallery never share a sample: they come from different views
        for p in s.probe_feats:
            assert not any(np.array_equal(p, g) for g in s.gallery_feats)


def test_evaluate_report():
    feats, labels, views = synthetic_features(np.random.default_rng(1))
    rep = evaluate(feats, labels, views, n_trials=4, seed=0)
    d = json.loads(rep.to_json())
    assert d["num_trials"] == 4 and d["map_excluded_probes"] == 0
    assert set(["rank1", "rank5", "rank10", "rank20", "mAP"]) <= set(d)
    assert 0 <= d["mAP"] <= 1
    vals = [d[f"rank{r}"] for r in (1, 5, 10, 20)]
    assert vals == sorted(vals) and vals[-1] == 1.0
    assert rep.curve_csv().splitlines()[0] == "rank,accuracy"
    assert len(rep.curve) == 6


def test_feature_binary_round_trip(tmp_path):
    feats, labels, views = synthetic_features(np.random.default_rng(2), n_ids=3, per_view=2)
    ds = LabeledDataset(feats, labels, list(views))
    path = tmp_path / "f.bin"
    save_features_binary(ds, path)
    blob = path.read_bytes()
    assert len(blob) == 16 + 8 * len(ds) * (ds.dim + 2)
    back = load_features_binary(path)
    assert back.features.tobytes() == ds.features.tobytes()
    assert np.array_equal(back.labels, ds.labels)
    assert list(back.views) == list(ds.views)
    path.write_bytes(blob[:-1])
    with pytest.raises(InvalidInput):
        load_features_binary(path)
