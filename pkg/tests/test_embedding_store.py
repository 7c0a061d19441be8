import json
import logging

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.errors import ConfigError, DataValidationError
from app.db.feature_files import read_store, write_store
from app.models.embedding import EmbeddingStore
from app.schemas.config import SynthConfig
from app.services import embedding_store_service as service


def _store(features, normalized=False):
    n = len(features)
    return EmbeddingStore.from_arrays(
        ids=list(range(n)),
        identities=[i % 2 for i in range(n)],
        cameras=[i % 3 for i in range(n)],
        splits=["probe"] + ["gallery"] * (n - 1),
        features=features,
        normalized=normalized,
    )


def test_duplicate_ids_rejected():
    with pytest.raises(ValidationError, match="record 2: duplicate id 5"):
        EmbeddingStore.from_arrays([5, 6, 5], [0, 0, 1], [0, 1, 0], ["probe", "gallery", "gallery"],
                                   np.eye(3))


def test_store_is_read_only(synth_store):
    with pytest.raises(ValueError):
        synth_store.features[0, 0] = 1.0


def test_round_trip_is_exact(tmp_path, synth_store):
    manifest = tmp_path / "store.json"
    payload = service.write(synth_store, manifest)
    assert payload.stat().st_size == len(synth_store) * synth_store.dim * 4
    again = service.load(manifest)
    assert again == synth_store


def test_manifest_counts_match_payload(tmp_path, synth_store):
    manifest = tmp_path / "store.json"
    payload = write_store(synth_store, manifest)
    data = json.loads(manifest.read_text())
    assert data["count"] * data["dim"] * 4 == payload.stat().st_size


def test_truncated_payload_names_record(tmp_path, synth_store):
    manifest = tmp_path / "store.json"
    payload = write_store(synth_store, manifest)
    data = payload.read_bytes()
    row = synth_store.dim * 4
    payload.write_bytes(data[:3 * row + 5])
    with pytest.raises(DataValidationError, match="record 3 is incomplete"):
        read_store(manifest)


def test_oversized_payload_is_dimension_mismatch(tmp_path, synth_store):
    manifest = tmp_path / "store.json"
    payload = write_store(synth_store, manifest)
    payload.write_bytes(payload.read_bytes() + b"\x00" * 8)
    with pytest.raises(DataValidationError, match="Dimension mismatch"):
        read_store(manifest)


def test_manifest_duplicate_id_names_record(tmp_path, synth_store):
    manifest = tmp_path / "store.json"
    write_store(synth_store, manifest)
    data = json.loads(manifest.read_text())
    data["ids"][4] = data["ids"][1]
    manifest.write_text(json.dumps(data))
    with pytest.raises(DataValidationError, match="Record 4: duplicate id"):
        read_store(manifest)


def test_manifest_missing_key(tmp_path, synth_store):
    manifest = tmp_path / "store.json"
    write_store(synth_store, manifest)
    data = json.loads(manifest.read_text())
    del data["cameras"]
    manifest.write_text(json.dumps(data))
    with pytest.raises(DataValidationError, match="cameras"):
        read_store(manifest)


def test_normalize_scales_to_unit_norm():
    store = service.normalize(_store([[3.0, 4.0], [0.0, 2.0]]))
    assert store.normalized
    np.testing.assert_allclose(np.linalg.norm(store.features, axis=1), 1.0)
    np.testing.assert_allclose(store.features[0], [0.6, 0.8])


def test_normalize_is_idempotent():
    rng = np.random.default_rng(3)
    once = service.normalize(_store(rng.standard_normal((6, 5))))
    twice = service.normalize(once)
    assert np.array_equal(once.features, twice.features)


def test_normalize_zero_norm_names_id():
    with pytest.raises(DataValidationError, match="Record id 1"):
        service.normalize(_store([[1.0, 0.0], [0.0, 0.0]]))


def test_synth_is_deterministic():
    cfg = SynthConfig(identities=6, cameras=2, per_camera=2, dim=8, seed=5)
    assert service.synth_generate(cfg) == service.synth_generate(cfg)
    assert service.synth_generate(cfg) != service.synth_generate(cfg.model_copy(update={"seed": 6}))


def test_synth_layout():
    cfg = SynthConfig(identities=10, cameras=4, per_camera=2, dim=16, train_fraction=0.5)
    store = service.synth_generate(cfg)
    assert len(store) == 10 * 4 * 2
    assert len(store.split_ids("train")) == 5 * 4 * 2
    assert len(store.split_ids("probe")) == 5 * 4
    assert len(store.split_ids("gallery")) == 5 * 4
    np.testing.assert_allclose(np.linalg.norm(store.features, axis=1), 1.0, atol=1e-6)
    train_identities = {store.identity_of(i) for i in store.split_ids("train").tolist()}
    probe_identities = {store.identity_of(i) for i in store.split_ids("probe").tolist()}
    assert not train_identities & probe_identities


def test_synth_cameras_lie_on_an_arc():
    cfg = SynthConfig(identities=5, cameras=4, per_camera=2, dim=16, sigma=0.0, train_fraction=1.0)
    store = service.synth_generate(cfg)
    for identity in range(5):
        rows = [np.flatnonzero((store.identities == identity) & (store.cameras == c))[0] for c in range(4)]
        f = store.features[rows]
        assert f[0] @ f[1] > f[0] @ f[2] > f[0] @ f[3]
        assert f[0] @ f[3] == pytest.approx((1 - 0.81) / 1.81, abs=1e-6)


def test_synth_without_noise_or_offset_repeats_the_centroid():
    store = service.synth_generate(SynthConfig(identities=3, cameras=3, dim=8, sigma=0.0, camera_offset=0.0))
    for identity in range(3):
        f = store.features[store.identities == identity]
        np.testing.assert_allclose(f, np.broadcast_to(f[0], f.shape), atol=1e-7)


def test_synth_rejects_tiny_dim():
    with pytest.raises(ConfigError):
        service.synth_generate(SynthConfig(dim=1))


def test_coverage_flags_distractor_only_probes():
    store = EmbeddingStore.from_arrays(
        ids=[0, 1, 2, 3],
        identities=[0, 0, 1, 1],
        cameras=[0, 1, 0, 0],
        splits=["probe", "gallery", "probe", "gallery"],
        features=np.eye(4),
    )
    report = service.coverage(store)
    assert report.probes == 2
    assert report.uncovered == [2]
    assert service.coverage(store, cross_camera=False).uncovered == []


def test_load_warns_about_uncovered_probes(tmp_path, caplog):
    store = EmbeddingStore.from_arrays([0, 1], [0, 1], [0, 0], ["probe", "gallery"], np.eye(2), normalized=True)
    manifest = tmp_path / "store.json"
    write_store(store, manifest)
    with caplog.at_level(logging.WARNING):
        service.load(manifest)
    assert "distractor-only" in caplog.text
