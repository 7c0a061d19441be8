"""
Configuration schemas.

This module defines the Pydantic schemas that describe one experiment:
how synthetic embeddings are generated, how gallery candidates are
sampled, how the context graph is wired, how the model is trained and
how rankings are evaluated.

Schemas:
    - SynthConfig: Synthetic embedding generator parameters.
    - SamplerConfig: Candidate sampler budget and mode.
    - GraphConfig: Edge support and edge-weight input.
    - TrainConfig: Model shape, optimizer and schedule.
    - EvalConfig: Distance fusion and evaluation protocol.
    - RunConfig: Union of the above plus paths and the seed.

Defaults follow the published training recipe (k1=70, k2=20, k=100,
k'=8, 9 graph layers, SGD lr 0.01 / momentum 0.9 / weight decay 1e-4,
500 epochs, 4 graphs per step, focal alpha 2 and gamma 0.25).
"""

import hashlib
import json
from pathlib import Path
from typing import Any, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.core.errors import ConfigError

HASH_EXCLUDE: dict[str, Any] = {"store": True, "out_dir": True, "eval": {"workers"}}
"""Fields that never change results and stay out of `RunConfig.config_hash`."""


class SynthConfig(BaseModel):
    """
    Parameters of the synthetic embedding generator.

    Each identity gets a centroid on the unit sphere; each camera adds a
    fixed offset direction (orthogonalized against the centroid) scaled by
    `camera_offset`. The camera directions are spread evenly over an arc of
    `camera_arc` degrees, so neighboring cameras see an identity alike while
    cameras at the two ends of the arc see it very differently; gaussian noise with standard deviation `sigma` is added
    per coordinate before normalization.

    Example:
        >>> cfg = SynthConfig(identities=10, cameras=2, per_camera=2, dim=8)
        >>> cfg.sigma
        0.08
    """

    model_config = ConfigDict(extra="forbid")

    identities: int = Field(default=50, ge=1)
    """Number of distinct identities."""

    cameras: int = Field(default=4, ge=1)
    """Number of cameras; every identity is seen by every camera."""

    per_camera: int = Field(default=2, ge=2)
    """Samples per identity and camera; the first is a probe, the others are gallery."""

    dim: int = Field(default=32, ge=1)
    """Feature dimension d."""

    sigma: float = Field(default=0.08, ge=0.0)
    """Per-coordinate intra-class noise standard deviation."""

    camera_offset: float = Field(default=0.9, ge=0.0)
    """Length of the camera offset added to the centroid; larger values create harder positives."""

    camera_arc: float = Field(default=180.0, ge=0.0, le=360.0)
    """Angle spanned by the camera directions, from the first camera to the last."""

    train_fraction: float = Field(default=0.5, ge=0.0, le=1.0)
    """Share of identities (taken in order) assigned to the training split."""

    seed: int = 0
    """Seed of the generator; the output is a pure function of this config."""


class SamplerConfig(BaseModel):
    """
    Candidate sampler configuration.

    Example:
        >>> SamplerConfig(k1=2, k2=1, k=3, mode="hgs").k
        3
    """

    model_config = ConfigDict(extra="forbid")

    k1: int = Field(default=70, ge=1)
    """First-hop (probe-gallery) neighbor count."""

    k2: int = Field(default=20, ge=1)
    """Second-hop (gallery-gallery) neighbor count."""

    k: int = Field(default=100, ge=1)
    """Total candidate budget |G_c|."""

    mode: Literal["plain", "hgs"] = "hgs"
    """`plain` takes the k nearest galleries, `hgs` runs the two-hop hard gallery sampler."""

    @model_validator(mode="after")
    def check_budget(self):
        if self.k1 > self.k:
            raise ValueError(f"k1 ({self.k1}) must not exceed k ({self.k})")
        return self

    def clamped(self, pool_size: int) -> "SamplerConfig":
        """
        Limit `k1` and `k` to the number of galleries available.

        Args:
            pool_size (int): Size of the searchable gallery.

        Returns:
            SamplerConfig: A copy whose budgets fit the pool.
        """

        k = max(1, min(self.k, pool_size))
        return self.model_copy(update={"k": k, "k1": max(1, min(self.k1, k))})


class GraphConfig(BaseModel):
    """Edge support and edge-weight input of the context graph."""

    model_config = ConfigDict(extra="forbid")

    k_prime: int = Field(default=8, ge=1)
    """Gallery neighbors connected per node (k')."""

    edge_input: Literal["nodes", "gallery"] = "nodes"
    """Input of the learnable relation F: node features or raw gallery features."""


class TrainConfig(BaseModel):
    """
    Model shape, optimizer and schedule.

    Example:
        >>> cfg = TrainConfig(epochs=0)
        >>> (cfg.lr, cfg.momentum, cfg.weight_decay, cfg.batch)
        (0.01, 0.9, 0.0001, 4)
    """

    model_config = ConfigDict(extra="forbid")

    lr: float = Field(default=0.01, gt=0.0)
    momentum: float = Field(default=0.9, ge=0.0)
    weight_decay: float = Field(default=1e-4, ge=0.0)
    epochs: int = Field(default=500, ge=0)
    batch: int = Field(default=4, ge=1)
    """Graphs per optimizer step."""

    focal_alpha: float = Field(default=2.0, gt=0.0)
    focal_gamma: float = Field(default=0.25, ge=0.0)

    layers: int = Field(default=9, ge=0)
    """Number of residual GCN blocks L."""

    d_e: Optional[int] = Field(default=None, ge=1)
    """Output width of the relation transforms; defaults to the feature dimension."""

    hidden: Optional[int] = Field(default=None, ge=1)
    """MLP hidden width; defaults to twice the feature dimension."""

    bn_momentum: float = Field(default=0.1, gt=0.0, le=1.0)
    bn_eps: float = Field(default=1e-5, gt=0.0)

    checkpoint_every: int = Field(default=50, ge=1)
    """Epoch interval between periodic checkpoints."""

    seed: int = 0


class EvalConfig(BaseModel):
    """
    Distance fusion and evaluation protocol.

    The sweep lists are empty for a single evaluation point; when set they
    replace the corresponding scalar for `eval` sweeps.
    """

    model_config = ConfigDict(extra="forbid")

    lam: float = Field(default=1.0, ge=0.0)
    """Weight of the graph distance in d = d_o + lam * d_g."""

    cross_camera: bool = True
    """Exclude same-identity same-camera galleries from the metrics."""

    workers: Optional[int] = Field(default=None, ge=1)
    """Per-probe worker count; defaults to `GRAPH_RERANK_WORKERS`."""

    lams: List[float] = Field(default_factory=list)
    ks: List[int] = Field(default_factory=list)
    k_primes: List[int] = Field(default_factory=list)
    modes: List[Literal["plain", "hgs"]] = Field(default_factory=list)


class RunConfig(BaseModel):
    """
    Full configuration of one experiment.

    A run config is serialized into the metadata of every artifact; its
    hash identifies the run.

    Example:
        >>> cfg = RunConfig().with_overrides({"train.epochs": 0, "seed": 3})
        >>> cfg.train.epochs, cfg.seed
        (0, 3)
    """

    model_config = ConfigDict(extra="forbid")

    synth: SynthConfig = Field(default_factory=SynthConfig)
    sampler: SamplerConfig = Field(default_factory=SamplerConfig)
    graph: GraphConfig = Field(default_factory=GraphConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    seed: int = 0
    """Single seed all randomness is derived from."""

    store: Optional[str] = None
    """Path of the embedding manifest."""

    out_dir: Optional[str] = None
    """Directory receiving checkpoints, logs and results."""

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        """
        Load a run config from a JSON file.

        Raises:
            ConfigError: If the file is missing, not JSON, or fails validation.
        """

        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
            return cls.model_validate(raw)
        except OSError as exc:
            raise ConfigError(f"Cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"Config file {path} is not valid JSON: {exc}") from exc
        except ValidationError as exc:
            raise ConfigError(f"Invalid config file {path}: {exc}") from exc

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """
        Apply dotted-key overrides (e.g. `{"train.lr": 0.1}`) and re-validate.

        `None` values are ignored so unset CLI flags leave the config alone.

        Raises:
            ConfigError: If a key is unknown or a value fails validation.
        """

        data = self.model_dump()
        for dotted, value in overrides.items():
            if value is None:
                continue
            target = data
            *parents, leaf = dotted.split(".")
            for part in parents:
                if part not in target or not isinstance(target[part], dict):
                    raise ConfigError(f"Unknown config section '{part}' in '{dotted}'")
                target = target[part]
            if leaf not in target:
                raise ConfigError(f"Unknown config key '{dotted}'")
            target[leaf] = value
        try:
            return RunConfig.model_validate(data)
        except ValidationError as exc:
            raise ConfigError(f"Invalid configuration: {exc}") from exc

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        """
        Propagate one seed to every section that consumes randomness.

        Consumers derive their own named sub-seeds from it (see
        `app.util.helpers.sub_seed`).
        """

        if seed is None:
            return self
        return self.with_overrides({"seed": seed, "synth.seed": seed, "train.seed": seed})

    def canonical_json(self, exclude: Optional[dict[str, Any]] = None) -> str:
        """Canonical JSON dump (sorted keys, no whitespace)."""

        return json.dumps(self.model_dump(mode="json", exclude=exclude), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        """
        Hex sha256 of the canonical JSON dump without paths and worker count.

        Runs that differ only in where they read and write, or in how many
        threads they use, share a hash.
        """

        return hashlib.sha256(self.canonical_json(HASH_EXCLUDE).encode("utf-8")).hexdigest()
