"""
Embedding model definitions.

This module defines the data models of a labeled embedding dataset:
one `EmbeddingRecord` per image and the `EmbeddingStore` that owns the
probe / gallery / train split.

A store keeps its columns as numpy arrays so that similarity search,
sampling and graph construction can work on whole matrices. Arrays are
made read-only on construction: a store is immutable and can be shared
between concurrent workers.
"""

from functools import cached_property
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

Split = Literal["probe", "gallery", "train"]
SPLITS = ("probe", "gallery", "train")


class EmbeddingRecord(BaseModel):
    """
    One image's feature vector with identity and camera labels.

    Example:
        >>> record = EmbeddingRecord(id=0, identity=3, camera=1, split="probe", feature=[0.6, 0.8])
        >>> record.identity
        3
    """

    id: int
    """Unique identifier of the record within its store."""

    identity: int
    """Identity label (person or vehicle id)."""

    camera: int
    """Camera label."""

    split: Split
    """Split the record belongs to (`probe`, `gallery` or `train`)."""

    feature: List[float]
    """Feature vector of dimension d."""


class EmbeddingStore(BaseModel):
    """
    Immutable, column-oriented collection of embedding records.

    Example:
        >>> store = EmbeddingStore.from_records([
        ...     EmbeddingRecord(id=0, identity=0, camera=0, split="probe", feature=[1.0, 0.0]),
        ...     EmbeddingRecord(id=1, identity=0, camera=1, split="gallery", feature=[0.0, 1.0]),
        ... ])
        >>> store.dim, len(store)
        (2, 2)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    ids: np.ndarray
    """Record ids, int64, shape (n,)."""

    identities: np.ndarray
    """Identity labels, int64, shape (n,)."""

    cameras: np.ndarray
    """Camera labels, int64, shape (n,)."""

    splits: tuple
    """Split name per record."""

    features: np.ndarray
    """Feature matrix, float64, shape (n, d)."""

    normalized: bool = False
    """Whether every feature has unit L2 norm."""

    @model_validator(mode="after")
    def check_columns(self):
        features = self.features
        if features.ndim != 2:
            raise ValueError(f"features must be a matrix, got {features.ndim} dimensions")
        n, dim = features.shape
        if dim < 1:
            raise ValueError("feature dimension must be positive")
        for name in ("ids", "identities", "cameras"):
            column = getattr(self, name)
            if column.shape != (n,):
                raise ValueError(f"column '{name}' has shape {column.shape}, expected ({n},)")
        if len(self.splits) != n:
            raise ValueError(f"splits has {len(self.splits)} entries, expected {n}")
        for index, split in enumerate(self.splits):
            if split not in SPLITS:
                raise ValueError(f"record {index}: unknown split '{split}'")

        positions: Dict[int, int] = {}
        for index, record_id in enumerate(self.ids.tolist()):
            if record_id in positions:
                raise ValueError(f"record {index}: duplicate id {record_id}")
            positions[record_id] = index
        for column in (self.ids, self.identities, self.cameras, self.features):
            column.flags.writeable = False
        return self

    @classmethod
    def from_arrays(
        cls,
        ids,
        identities,
        cameras,
        splits,
        features,
        normalized: bool = False,
    ) -> "EmbeddingStore":
        """Build a store from array-likes, copying them into owned arrays."""

        return cls(
            ids=np.array(ids, dtype=np.int64),
            identities=np.array(identities, dtype=np.int64),
            cameras=np.array(cameras, dtype=np.int64),
            splits=tuple(str(s) for s in splits),
            features=np.array(features, dtype=np.float64),
            normalized=normalized,
        )

    @classmethod
    def from_records(cls, records: List[EmbeddingRecord], normalized: bool = False) -> "EmbeddingStore":
        """Build a store from a list of records."""

        return cls.from_arrays(
            [r.id for r in records],
            [r.identity for r in records],
            [r.camera for r in records],
            [r.split for r in records],
            [r.feature for r in records],
            normalized=normalized,
        )

    def __len__(self) -> int:
        return int(self.ids.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return (
            self.normalized == other.normalized
            and self.splits == other.splits
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.identities, other.identities)
            and np.array_equal(self.cameras, other.cameras)
            and np.array_equal(self.features, other.features)
        )

    @cached_property
    def id_positions(self) -> Dict[int, int]:
        return {record_id: index for index, record_id in enumerate(self.ids.tolist())}

    @property
    def dim(self) -> int:
        """Feature dimension d."""

        return int(self.features.shape[1])

    @property
    def records(self) -> List[EmbeddingRecord]:
        """Materialize the store as a list of records."""

        return [self.record(int(i)) for i in self.ids]

    def position(self, record_id: int) -> int:
        """
        Row index of a record id.

        Raises:
            KeyError: If the id is not in the store.
        """

        return self.id_positions[int(record_id)]

    def has_id(self, record_id: int) -> bool:
        return int(record_id) in self.id_positions

    def record(self, record_id: int) -> EmbeddingRecord:
        row = self.position(record_id)
        return EmbeddingRecord(
            id=int(self.ids[row]),
            identity=int(self.identities[row]),
            camera=int(self.cameras[row]),
            split=self.splits[row],
            feature=self.features[row].tolist(),
        )

    def feature(self, record_id: int) -> np.ndarray:
        """Feature row of a record (read-only view)."""

        return self.features[self.position(record_id)]

    def split_ids(self, split: Split) -> np.ndarray:
        """Ids of all records in a split, in store order."""

        mask = np.array([s == split for s in self.splits], dtype=bool)
        return self.ids[mask]

    def identity_of(self, record_id: int) -> int:
        return int(self.identities[self.position(record_id)])

    def camera_of(self, record_id: int) -> int:
        return int(self.cameras[self.position(record_id)])

    def with_features(self, features: np.ndarray, normalized: Optional[bool] = None) -> "EmbeddingStore":
        """Copy of the store with a replaced feature matrix."""

        return EmbeddingStore.from_arrays(
            self.ids,
            self.identities,
            self.cameras,
            self.splits,
            features,
            normalized=self.normalized if normalized is None else normalized,
        )


class SplitCoverage(BaseModel):
    """
    Result of checking that every probe identity can be matched in the gallery.

    Probes listed in `uncovered` have no gallery record of the same identity
    (on another camera when cross-camera matching is required). They are
    distractor-only probes and are reported, not rejected.
    """

    probes: int = 0
    uncovered: List[int] = Field(default_factory=list)
