import csv
import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import ConfigError, DataValidationError
from app.models.embedding import EmbeddingStore
from app.models.graph import CandidateSet
from app.models.ranking import RankingResult
from app.schemas.config import EvalConfig, SamplerConfig, SynthConfig, TrainConfig
from app.services import evaluator_service as ev
from app.services.embedding_store_service import synth_generate
from app.services.gcn_service import forward, init_params
from app.services.graph_service import build_graph
from app.services.knn_service import GalleryIndex
from app.services.sampler_service import sample
from app.services.trainer_service import train

SAMPLER = SamplerConfig(k1=4, k2=2, k=8)


@pytest.fixture
def synth_params(synth_store):
    return init_params(synth_store.dim, layers=2, hidden=8, seed=3)


@pytest.mark.parametrize("matches, expected", [
    ([True, False, True], 5 / 6),
    ([True], 1.0),
    ([False, True], 0.5),
    ([False, False, True], 1 / 3),
    ([True, True], 1.0),
    ([False, True, False, True], 0.5),
    ([True, False, False, False, True], 0.7),
    ([False, True, True], 7 / 12),
    ([True, False, True, False, True], 34 / 45),
    ([False] * 5 + [True], 1 / 6),
])
def test_average_precision(matches, expected):
    assert ev.average_precision(matches) == pytest.approx(expected, abs=1e-12)


def test_average_precision_without_positive():
    assert ev.average_precision([False, False]) is None
    assert ev.average_precision([]) is None


def test_fuse():
    np.testing.assert_allclose(ev.fuse(np.array([0.2, 0.4]), np.array([0.5, 0.1]), 2.0), [1.2, 0.6])
    d_o = np.array([0.3, 0.1])
    assert np.array_equal(ev.fuse(d_o, np.array([0.9, 0.9]), 0.0), d_o)
    with pytest.raises(ConfigError):
        ev.fuse(d_o, d_o, -0.1)


def test_zero_logit_is_half_distance(hard_positive_store):
    params = init_params(hard_positive_store.dim, layers=1, hidden=4, seed=0)
    params = params.replace({
        "mlp.2.weight": np.zeros_like(params["mlp.2.weight"]),
        "mlp.2.bias": np.zeros_like(params["mlp.2.bias"]),
    })
    candidates = CandidateSet(probe_id=0, ids=[1, 3, 2], mode="hgs")
    np.testing.assert_array_equal(ev.gcn_distance(candidates, hard_positive_store, params), [0.5, 0.5, 0.5])


def test_gcn_distance_is_one_minus_sigmoid(hard_positive_store):
    params = init_params(hard_positive_store.dim, layers=2, hidden=4, seed=1)
    candidates = CandidateSet(probe_id=0, ids=[1, 3, 2, 4], mode="plain")
    d_g = ev.gcn_distance(candidates, hard_positive_store, params)
    logits, _ = forward(build_graph(candidates, hard_positive_store), params, mode="eval")
    expected = [1.0 - 1.0 / (1.0 + np.exp(-z)) for z in logits]
    np.testing.assert_allclose(d_g, expected, atol=1e-12)
    assert ((d_g >= 0) & (d_g <= 1)).all()


def test_dimension_mismatch(synth_store):
    with pytest.raises(DataValidationError):
        ev.evaluate(synth_store, init_params(5, layers=1, hidden=4), 1.0, SAMPLER)


def test_perfect_distance_matrix():
    store = EmbeddingStore.from_arrays(
        ids=[0, 1, 10, 11, 12, 13],
        identities=[0, 1, 0, 1, 0, 1],
        cameras=[0, 0, 1, 1, 2, 2],
        splits=["probe", "probe", "gallery", "gallery", "gallery", "gallery"],
        features=np.eye(6),
    )
    index = GalleryIndex(store, splits=("gallery",))
    distances = np.array([[0.1, 0.9, 0.2, 0.8], [0.9, 0.1, 0.8, 0.2]])
    summary, results = ev.evaluate_distances(distances, [0, 1], index)
    assert summary.mAP == 1.0 and summary.rank1 == 1.0
    assert results[0].gallery_ids == [10, 12, 13, 11]

    worst, _ = ev.evaluate_distances(1.0 - distances, [0, 1], index)
    assert worst.rank1 == 0.0
    assert worst.mAP == pytest.approx((1 / 3 + 2 / 4) / 2)


def test_monotone_transform_keeps_rankings(synth_store):
    probes = synth_store.split_ids("probe").tolist()
    index = GalleryIndex(synth_store, splits=("gallery",))
    distances = np.random.default_rng(0).random((len(probes), len(index)))
    a, ra = ev.evaluate_distances(distances, probes, index)
    b, rb = ev.evaluate_distances(3.0 * distances + 1.0, probes, index)
    assert [r.gallery_ids for r in ra] == [r.gallery_ids for r in rb]
    assert a.mAP == b.mAP and a.rank1 == b.rank1


def test_same_camera_positive_is_ignored():
    store = EmbeddingStore.from_arrays(
        ids=[0, 1, 2, 3],
        identities=[7, 7, 8, 7],
        cameras=[0, 0, 1, 2],
        splits=["probe", "gallery", "gallery", "gallery"],
        features=np.array([[1.0, 0.0], [1.0, 0.05], [0.9, 0.3], [0.5, 0.8]]),
    )
    result = ev.rank(0, store, None, 0.0)
    assert result.gallery_ids == [1, 2, 3]
    assert result.excluded_ids == [1]
    assert result.first_hit == 2
    assert result.ap == 0.5
    same_camera = ev.rank(0, store, None, 0.0, cross_camera=False)
    assert same_camera.first_hit == 1 and same_camera.excluded_ids == []


def test_probe_without_valid_positive_is_excluded(caplog):
    store = EmbeddingStore.from_arrays(
        ids=[0, 1, 2, 3],
        identities=[7, 9, 7, 8],
        cameras=[0, 1, 0, 1],
        splits=["probe", "probe", "gallery", "gallery"],
        features=np.eye(4),
    )
    with caplog.at_level("WARNING", logger="app.services.evaluator_service"):
        summary, results = ev.baseline_evaluate(store)
    assert summary.probes == 2
    assert summary.valid_probes == 0 and summary.excluded_probes == 2
    assert summary.mAP == 0.0
    assert all(r.ap is None for r in results)
    assert "excluded" in caplog.text


def test_zero_lam_matches_baseline(synth_store, synth_params):
    baseline, base_results = ev.baseline_evaluate(synth_store)
    fused, fused_results = ev.evaluate(synth_store, synth_params, 0.0, SAMPLER)
    assert fused.model_dump(exclude={"lam"}) == baseline.model_dump(exclude={"lam"})
    assert [r.gallery_ids for r in fused_results] == [r.gallery_ids for r in base_results]
    assert [r.distances for r in fused_results] == [r.distances for r in base_results]


def test_fused_evaluation_metrics(synth_store, synth_params):
    summary, results = ev.evaluate(synth_store, synth_params, 1.0, SAMPLER)
    assert 0.0 <= summary.mAP <= 1.0
    assert summary.rank1 <= summary.rank5 <= summary.rank10 <= 1.0
    assert summary.probes == len(synth_store.split_ids("probe"))
    gallery = sorted(synth_store.split_ids("gallery").tolist())
    for result in results:
        assert sorted(result.gallery_ids) == gallery
        assert SAMPLER.k1 <= result.candidate_count <= SAMPLER.k


def test_fused_ranking_puts_candidates_first(synth_store, synth_params):
    probe = int(synth_store.split_ids("probe")[0])
    result = ev.rank(probe, synth_store, synth_params, 2.0, SAMPLER)
    index = GalleryIndex(synth_store, splits=("gallery",))
    candidates = sample(probe, index, SAMPLER, with_labels=False)
    assert result.candidate_count == len(candidates)
    assert set(result.gallery_ids[:len(candidates)]) == set(candidates.ids)


def test_fused_ranking_is_two_ascending_blocks(synth_store, synth_params):
    index = GalleryIndex(synth_store, splits=("gallery",))
    _, results = ev.evaluate(synth_store, synth_params, 1.0, SAMPLER)
    for result in results:
        n = result.candidate_count
        head = list(zip(result.distances[:n], result.gallery_ids[:n]))
        assert head == sorted(head)
        candidates = sample(result.probe_id, index, SAMPLER, with_labels=False)
        assert set(result.gallery_ids[:n]) == set(candidates.ids)

        d_o = dict(zip(index.ids.tolist(), index.distances(synth_store.feature(result.probe_id)).tolist()))
        expected_tail = sorted((d_o[i], i) for i in d_o if i not in set(candidates.ids))
        assert list(zip(result.distances[n:], result.gallery_ids[n:])) == expected_tail


def test_unfused_ranking_is_fully_ascending(synth_store, synth_params):
    for lam, params in ((0.0, synth_params), (1.0, None)):
        _, results = ev.evaluate(synth_store, params, lam, SAMPLER)
        for result in results:
            assert result.candidate_count == 0
            pairs = list(zip(result.distances, result.gallery_ids))
            assert pairs == sorted(pairs)


def test_ranking_result_checks_block_order():
    RankingResult(probe_id=0, gallery_ids=[3, 1, 2, 4], distances=[0.5, 0.6, 0.1, 0.2], candidate_count=2)
    with pytest.raises(ValidationError, match="ascending"):
        RankingResult(probe_id=0, gallery_ids=[3, 1, 2, 4], distances=[0.6, 0.5, 0.1, 0.2], candidate_count=2)
    with pytest.raises(ValidationError, match="ascending"):
        RankingResult(probe_id=0, gallery_ids=[3, 1, 2], distances=[0.5, 0.2, 0.1], candidate_count=1)
    with pytest.raises(ValidationError, match="exceeds"):
        RankingResult(probe_id=0, gallery_ids=[3], distances=[0.5], candidate_count=2)
    with pytest.raises(ValidationError, match="distances"):
        RankingResult(probe_id=0, gallery_ids=[3, 1], distances=[0.5])


def test_rank_unknown_probe(synth_store):
    with pytest.raises(DataValidationError):
        ev.rank(12345, synth_store, None, 0.0)


def test_all_negative_candidates_do_not_crash(hard_positive_store):
    store = EmbeddingStore.from_arrays(
        ids=hard_positive_store.ids.tolist(),
        identities=[0] + [1] * (len(hard_positive_store.ids) - 1),
        cameras=hard_positive_store.cameras.tolist(),
        splits=hard_positive_store.splits,
        features=hard_positive_store.features,
    )
    params = init_params(store.dim, layers=1, hidden=4)
    result = ev.rank(0, store, params, 1.0, SamplerConfig(k1=2, k2=1, k=3))
    assert result.ap is None
    assert len(result.gallery_ids) == len(store.ids) - 1


def test_thread_pool_gives_identical_results(synth_store, synth_params):
    single, r1 = ev.evaluate(synth_store, synth_params, 1.0, SAMPLER, workers=1)
    pooled, r4 = ev.evaluate(synth_store, synth_params, 1.0, SAMPLER, workers=4)
    assert single == pooled
    assert [r.model_dump() for r in r1] == [r.model_dump() for r in r4]


def test_sweep_over_k(synth_store, synth_params):
    rows = ev.sweep(synth_store, [("ckpt", synth_params)], EvalConfig(ks=[4, 8], lams=[0.0, 1.0]), SAMPLER)
    assert [(r.k, r.lam) for r in rows] == [(4, 0.0), (4, 1.0), (8, 0.0), (8, 1.0)]
    baseline, _ = ev.baseline_evaluate(synth_store)
    assert all(r.mAP == baseline.mAP for r in rows if r.lam == 0.0)
    assert all(r.layers == 2 and r.checkpoint == "ckpt" for r in rows)


def test_sweep_over_modes_reports_recall(synth_store, synth_params):
    rows = ev.sweep(synth_store, [("a", synth_params)], EvalConfig(modes=["plain", "hgs"]), SAMPLER)
    assert [r.mode for r in rows] == ["plain", "hgs"]
    for row in rows:
        assert 0.0 <= row.recall <= 1.0
        assert 0.0 <= row.precision <= 1.0


def test_sweep_rejects_negative_lam(synth_store, synth_params):
    with pytest.raises(ConfigError):
        ev.sweep(synth_store, [("a", synth_params)], EvalConfig(lams=[-1.0]), SAMPLER)


def test_write_results(tmp_path, synth_store):
    summary, results = ev.baseline_evaluate(synth_store, config_hash="abc")
    results_path, summary_path = ev.write_results(tmp_path / "eval", summary, results, extra={"baseline": True})
    lines = [json.loads(line) for line in results_path.read_text().splitlines()]
    assert len(lines) == len(results)
    assert lines[0]["config_hash"] == "abc"
    written = json.loads(summary_path.read_text())
    assert written["baseline"] is True and written["mAP"] == summary.mAP

    ev.write_results(tmp_path / "eval", summary, results[:1])
    assert len(results_path.read_text().splitlines()) == 1


def test_write_plot_data(tmp_path, synth_store, synth_params):
    rows = ev.sweep(synth_store, [("a", synth_params)], EvalConfig(lams=[0.0, 0.5]), SAMPLER)
    path = ev.write_plot_data(tmp_path / "plot.csv", rows)
    with path.open(newline="") as fh:
        records = list(csv.DictReader(fh))
    assert len(records) == 2
    assert {"mode", "k", "k_prime", "lam", "mAP", "rank1", "recall"} <= set(records[0])
    assert float(records[1]["lam"]) == 0.5


def test_empty_probe_split():
    store = EmbeddingStore.from_arrays([0, 1], [0, 0], [0, 1], ["gallery", "gallery"], np.eye(2))
    with pytest.raises(DataValidationError, match="probe"):
        ev.baseline_evaluate(store)


@pytest.mark.slow
def test_graph_distance_beats_baseline_across_seeds():
    # Budgets are a small share of the 100-record gallery. Positives from the
    # far end of the camera arc then sit outside the plain top-k and are only
    # reached through a positive from a neighboring camera.
    hgs_cfg = SamplerConfig(k1=6, k2=2, k=16)
    plain_cfg = hgs_cfg.model_copy(update={"mode": "plain"})
    gains, hgs_maps, plain_maps = [], [], []
    for seed in range(5):
        store = synth_generate(SynthConfig(seed=seed))
        baseline, _ = ev.baseline_evaluate(store)
        hgs_state = train(store, TrainConfig(epochs=100, seed=seed), hgs_cfg)
        plain_state = train(store, TrainConfig(epochs=100, seed=seed), plain_cfg)
        hgs, _ = ev.evaluate(store, hgs_state.params, 1.0, hgs_cfg)
        plain, _ = ev.evaluate(store, plain_state.params, 1.0, plain_cfg)
        gains.append(hgs.mAP - baseline.mAP)
        hgs_maps.append(hgs.mAP)
        plain_maps.append(plain.mAP)
    assert min(gains) > 0
    assert np.mean(gains) >= 0.02
    assert np.mean(hgs_maps) >= np.mean(plain_maps)
