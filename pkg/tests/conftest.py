"""Shared fixtures.

All embeddings are synthetic; stores are small enough to brute-force.
"""

import numpy as np
import pytest

from app.models.embedding import EmbeddingStore
from app.schemas.config import SynthConfig, TrainConfig
from app.services.embedding_store_service import synth_generate
from app.services.gcn_service import init_params
from app.services.gradcheck_service import random_graph


def unit(dim: int, *terms) -> np.ndarray:
    """Sum of (axis, weight) terms as a dim-vector."""
    v = np.zeros(dim)
    for axis, weight in terms:
        v[axis] += weight
    return v


def toward(axis: int, degrees: float, dim: int = 6) -> np.ndarray:
    """Unit vector at `degrees` from e1 toward the given axis."""
    theta = np.deg2rad(degrees)
    return unit(dim, (0, np.cos(theta)), (axis, np.sin(theta)))


@pytest.fixture
def hard_positive_store():
    """Twenty vectors where a hard positive is reachable only through an easy one.

    Probe p = e1 (id 0). Easy positive g1 (id 1) sits 8 degrees toward e2,
    hard positive h (id 2) 19 degrees toward e2. Twelve negatives of
    identity 1 sit between 12 and 17.5 degrees toward e3 / e4, so they beat
    h for the probe but not for g1. Five far negatives of identity 2 lie
    toward e5.
    """
    features = [unit(6, (0, 1.0)), toward(1, 8.0), toward(1, 19.0)]
    identities = [0, 0, 0]
    cameras = [0, 1, 2]
    for i in range(12):
        features.append(toward(2 if i % 2 == 0 else 3, 12.0 + 0.5 * i))
        identities.append(1)
        cameras.append(1)
    for i in range(5):
        features.append(toward(4 if i % 2 == 0 else 5, 60.0 + 5.0 * i))
        identities.append(2)
        cameras.append(2)
    n = len(features)
    return EmbeddingStore.from_arrays(
        ids=list(range(n)),
        identities=identities,
        cameras=cameras,
        splits=["probe"] + ["gallery"] * (n - 1),
        features=np.asarray(features),
        normalized=True,
    )


@pytest.fixture
def synth_store():
    """Small normalized synthetic store with train, probe and gallery splits."""
    return synth_generate(SynthConfig(identities=8, cameras=3, per_camera=2, dim=8, seed=1))


@pytest.fixture
def make_store():
    """Factory for random normalized stores (one probe, the rest gallery)."""
    def _make(n: int, dim: int = 6, identities: int = 4, seed: int = 0) -> EmbeddingStore:
        rng = np.random.default_rng(seed)
        features = rng.standard_normal((n, dim))
        features /= np.linalg.norm(features, axis=1, keepdims=True)
        return EmbeddingStore.from_arrays(
            ids=rng.permutation(10 * n)[:n].tolist(),
            identities=rng.integers(0, identities, size=n).tolist(),
            cameras=rng.integers(0, 3, size=n).tolist(),
            splits=["probe"] + ["gallery"] * (n - 1),
            features=features,
            normalized=True,
        )
    return _make


@pytest.fixture
def make_graph():
    """Factory for labeled random context graphs."""
    def _make(nodes: int = 10, dim: int = 4, k_prime: int = 3, seed: int = 0, edge_input: str = "nodes"):
        return random_graph(nodes, dim, k_prime=k_prime, seed=seed, edge_input=edge_input)
    return _make


@pytest.fixture
def make_params():
    """Factory for freshly initialized parameters."""
    def _make(dim: int = 4, layers: int = 2, seed: int = 0, hidden: int = 6):
        return init_params(dim, layers=layers, hidden=hidden, seed=seed)
    return _make


@pytest.fixture
def small_train_cfg():
    return TrainConfig(epochs=3, batch=2, layers=2, hidden=8, checkpoint_every=2)
