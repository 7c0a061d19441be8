"""
Model parameter and training state definitions.

Parameters are kept as an ordered mapping of named blocks, in the
declaration order used by checkpoints:

- ``phi.weight`` / ``phi.bias`` and ``phi_prime.weight`` / ``phi_prime.bias``:
  the two relation transforms (d -> d_e).
- ``gcn.{l}.weight``: graph convolution weight of block l (d -> d).
- ``bn.{l}.gamma`` / ``bn.{l}.beta``: batchnorm scale and shift of block l.
- ``bn.{l}.running_mean`` / ``bn.{l}.running_var``: batchnorm running statistics.
- ``mlp.{m}.weight`` / ``mlp.{m}.bias``: the three affine layers
  2d -> hidden -> hidden -> 1.

Weights follow the row-vector convention ``y = x @ W + b``.
"""

from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

RUNNING_SUFFIXES = (".running_mean", ".running_var")


def block_shapes(dim: int, d_e: int, layers: int, hidden: int) -> Dict[str, tuple]:
    """
    Shapes of every parameter block in declaration order.

    Example:
        >>> list(block_shapes(4, 4, 1, 8))[:5]
        ['phi.weight', 'phi.bias', 'phi_prime.weight', 'phi_prime.bias', 'gcn.0.weight']
    """

    shapes: Dict[str, tuple] = {
        "phi.weight": (dim, d_e),
        "phi.bias": (d_e,),
        "phi_prime.weight": (dim, d_e),
        "phi_prime.bias": (d_e,),
    }
    for layer in range(layers):
        shapes[f"gcn.{layer}.weight"] = (dim, dim)
        shapes[f"bn.{layer}.gamma"] = (dim,)
        shapes[f"bn.{layer}.beta"] = (dim,)
        shapes[f"bn.{layer}.running_mean"] = (dim,)
        shapes[f"bn.{layer}.running_var"] = (dim,)
    widths = [2 * dim, hidden, hidden, 1]
    for m in range(3):
        shapes[f"mlp.{m}.weight"] = (widths[m], widths[m + 1])
        shapes[f"mlp.{m}.bias"] = (widths[m + 1],)
    return shapes


def is_trainable(name: str) -> bool:
    """Running statistics are buffers, every other block is trained."""

    return not name.endswith(RUNNING_SUFFIXES)


class ModelParams(BaseModel):
    """
    All parameters of the graph re-ranking model.

    Example:
        >>> from app.services.gcn_service import init_params
        >>> params = init_params(dim=4, layers=2, seed=0)
        >>> params["gcn.1.weight"].shape
        (4, 4)
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dim: int
    """Node feature dimension d."""

    d_e: int
    """Output width of phi and phi_prime."""

    layers: int
    """Number of residual GCN blocks L."""

    hidden: int
    """MLP hidden width."""

    tensors: Dict[str, np.ndarray]
    """Parameter blocks in declaration order (float64)."""

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def block_names(self) -> List[str]:
        return list(block_shapes(self.dim, self.d_e, self.layers, self.hidden))

    def trainable_names(self) -> List[str]:
        return [name for name in self.block_names() if is_trainable(name)]

    def replace(self, updates: Dict[str, np.ndarray]) -> "ModelParams":
        """Copy with some blocks replaced; untouched blocks are shared."""

        tensors = dict(self.tensors)
        tensors.update(updates)
        return self.model_copy(update={"tensors": tensors})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())

    def equals(self, other: "ModelParams") -> bool:
        """Bitwise equality of shapes and values."""

        if (self.dim, self.d_e, self.layers, self.hidden) != (other.dim, other.d_e, other.layers, other.hidden):
            return False
        return all(np.array_equal(self.tensors[k], other.tensors[k]) for k in self.block_names())


class TrainState(BaseModel):
    """
    Everything needed to resume training bit-for-bit.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    params: ModelParams
    """Current model parameters."""

    momentum: Dict[str, np.ndarray] = Field(default_factory=dict)
    """SGD momentum buffer per trainable block."""

    epoch: int = 0
    """Number of completed epochs."""

    loss_history: List[float] = Field(default_factory=list)
    """Mean training loss of every completed epoch."""

    rng_state: Optional[dict] = None
    """Bit generator state of the batch shuffler."""
