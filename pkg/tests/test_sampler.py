import numpy as np
import pytest

from app.core.errors import ConfigError
from app.models.embedding import EmbeddingStore
from app.schemas.config import SamplerConfig, SynthConfig
from app.services.embedding_store_service import synth_generate
from app.services.knn_service import GalleryIndex
from app.services.sampler_service import hgs_sample, plain_sample, recall_report, sample


def brute_force_hgs(store, probe_id, k1, k2, k):
    """Straight-line two-hop sampler over python lists."""
    gallery = [int(i) for i, s in zip(store.ids.tolist(), store.splits) if s == "gallery"]

    def nearest(query_id, pool, count):
        q = store.feature(query_id)
        pool = [g for g in pool if g != query_id]
        return sorted(pool, key=lambda g: (-float(store.feature(g) @ q), g))[:count]

    first = nearest(probe_id, gallery, k1)
    selected = list(first)
    for g in first:
        if len(selected) >= k:
            break
        for n in nearest(g, gallery, k2):
            if n in first or n in selected:
                continue
            selected.append(n)
            if len(selected) >= k:
                break
    return selected


def test_hgs_reaches_hard_positive(hard_positive_store):
    index = GalleryIndex(hard_positive_store)
    cfg = SamplerConfig(k1=2, k2=1, k=3)
    hgs = hgs_sample(0, index, cfg)
    plain = plain_sample(0, index, 3)
    assert hgs.ids == [1, 3, 2]
    assert plain.ids == [1, 3, 4]
    assert 2 in hgs.ids and 2 not in plain.ids
    assert hgs.labels == [1, 0, 1]


def test_hgs_recall_beats_plain(hard_positive_store):
    index = GalleryIndex(hard_positive_store)
    cfg = SamplerConfig(k1=2, k2=1, k=3)
    hgs = recall_report(hgs_sample(0, index, cfg), index)
    plain = recall_report(plain_sample(0, index, 3), index)
    assert hgs.recall == 1.0
    assert plain.recall == 0.5
    assert hgs.precision == pytest.approx(2 / 3)


def test_k_equal_k1_is_plain(hard_positive_store):
    index = GalleryIndex(hard_positive_store)
    assert hgs_sample(0, index, SamplerConfig(k1=5, k2=3, k=5)).ids == plain_sample(0, index, 5).ids


def test_budget_met_by_first_hop(hard_positive_store):
    index = GalleryIndex(hard_positive_store)
    result = hgs_sample(0, index, SamplerConfig(k1=4, k2=1, k=4))
    assert len(result) == 4


def test_gallery_smaller_than_k1(hard_positive_store):
    index = GalleryIndex(hard_positive_store)
    with pytest.raises(ConfigError):
        hgs_sample(0, index, SamplerConfig(k1=25, k2=1, k=30))


def test_short_candidate_set_when_expansion_exhausted(make_store):
    store = make_store(8, seed=4)
    probe = int(store.split_ids("probe")[0])
    result = hgs_sample(probe, GalleryIndex(store), SamplerConfig(k1=2, k2=1, k=7))
    assert 2 <= len(result) <= 4
    assert len(set(result.ids)) == len(result.ids)


@pytest.mark.parametrize("seed", range(100))
def test_hgs_matches_brute_force(make_store, seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 201))
    store = make_store(n, dim=int(rng.integers(3, 9)), seed=seed)
    k1 = int(rng.integers(1, 11))
    k2 = int(rng.integers(1, 11))
    k = int(rng.integers(k1, k1 + 30))
    probe = int(store.split_ids("probe")[0])
    result = hgs_sample(probe, GalleryIndex(store), SamplerConfig(k1=k1, k2=k2, k=k))
    assert result.ids == brute_force_hgs(store, probe, k1, k2, k)


def test_sample_dispatch(hard_positive_store):
    index = GalleryIndex(hard_positive_store)
    assert sample(0, index, SamplerConfig(k1=2, k2=1, k=3, mode="plain")).mode == "plain"
    assert sample(0, index, SamplerConfig(k1=2, k2=1, k=3, mode="hgs")).ids == [1, 3, 2]


def test_recall_undefined_without_positives():
    store = EmbeddingStore.from_arrays(
        ids=[0, 1, 2, 3],
        identities=[5, 1, 1, 2],
        cameras=[0, 1, 1, 1],
        splits=["probe", "gallery", "gallery", "gallery"],
        features=np.eye(4),
    )
    index = GalleryIndex(store)
    report = recall_report(plain_sample(0, index, 2), index)
    assert report.positives == 0
    assert report.recall is None
    assert report.precision == 0.0


def test_hgs_mean_recall_on_synthetic_benchmark():
    cfg = SamplerConfig(k1=6, k2=2, k=16)
    hgs_recall, plain_recall = [], []
    for seed in range(5):
        store = synth_generate(SynthConfig(seed=seed))
        index = GalleryIndex(store, splits=("gallery",))
        for probe in store.split_ids("probe").tolist():
            hgs_recall.append(recall_report(hgs_sample(probe, index, cfg), index).recall)
            plain_recall.append(recall_report(plain_sample(probe, index, cfg.k), index).recall)
    assert None not in hgs_recall and None not in plain_recall
    assert np.mean(hgs_recall) >= np.mean(plain_recall)
