"""
Graph reasoning model.

This module implements the trainable re-ranking model and its training
arithmetic in 64-bit numpy:

- learnable edge weights: A = row-softmax over supported pairs of
  phi(v_i)^T phi'(v_j); rows without support are all zero;
- residual blocks: Z' = Z + BN(ReLU(A Z W)), A shared by every block;
- the head: a 3-layer MLP (ReLU between layers) on [X || Z_L] giving one
  logit per node;
- focal loss, exact reverse-mode gradients of every trainable block, and
  SGD with momentum and weight decay.

Batchnorm normalizes each channel over all nodes of the batch in train
mode and uses running statistics in eval mode.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import log_expit

from app.core.errors import NumericError
from app.models.graph import ContextGraph
from app.models.params import ModelParams, block_shapes
from app.schemas.config import TrainConfig
from app.util.helpers import rng_for

Gradients = Dict[str, np.ndarray]


@dataclass
class BlockCache:
    z: np.ndarray
    u: np.ndarray
    h: np.ndarray
    xhat: np.ndarray
    invstd: np.ndarray
    mean: np.ndarray
    var: np.ndarray


@dataclass
class ForwardCache:
    """Intermediate values of one forward pass, consumed by `backward`."""

    mode: str
    x: np.ndarray
    e: np.ndarray
    p: np.ndarray
    q: np.ndarray
    a: np.ndarray
    c: np.ndarray
    pre1: np.ndarray
    h1: np.ndarray
    pre2: np.ndarray
    h2: np.ndarray
    logits: np.ndarray
    blocks: List[BlockCache] = field(default_factory=list)

# ------------------------------------------------------------------------------
# Parameters
# ------------------------------------------------------------------------------

def init_params(dim: int, layers: int = 9, d_e: Optional[int] = None, hidden: Optional[int] = None,
                seed: int = 0) -> ModelParams:
    """
    Initialize parameters.

    Weights and biases of every affine map are drawn from
    U(-1/sqrt(fan_in), 1/sqrt(fan_in)); batchnorm scale is 1, shift 0,
    running mean 0 and running variance 1. Blocks are drawn in declaration
    order from the `model.init` sub-seed.

    Args:
        dim (int): Node feature dimension d.
        layers (int): Residual blocks L (0 allowed).
        d_e (int, optional): Relation width; defaults to d.
        hidden (int, optional): MLP width; defaults to 2d.
        seed (int): Run seed.
    """

    d_e = d_e or dim
    hidden = hidden or 2 * dim
    shapes = block_shapes(dim, d_e, layers, hidden)
    rng = rng_for(seed, "model.init")
    fan_in = {}
    tensors: Dict[str, np.ndarray] = {}
    for name, shape in shapes.items():
        prefix, kind = name.rsplit(".", 1)
        if kind == "weight":
            fan_in[prefix] = shape[0]
            bound = 1.0 / np.sqrt(shape[0])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif kind == "bias":
            bound = 1.0 / np.sqrt(fan_in[prefix])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif kind in ("gamma", "running_var"):
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return ModelParams(dim=dim, d_e=d_e, layers=layers, hidden=hidden, tensors=tensors)


def init_params_from_config(dim: int, cfg: TrainConfig) -> ModelParams:
    return init_params(dim, layers=cfg.layers, d_e=cfg.d_e, hidden=cfg.hidden, seed=cfg.seed)


def parameter_blocks(params: ModelParams) -> List[str]:
    """Block names in checkpoint declaration order."""

    return params.block_names()

# ------------------------------------------------------------------------------
# Edge weights
# ------------------------------------------------------------------------------

def masked_softmax(logits: np.ndarray, support: np.ndarray) -> np.ndarray:
    """
    Row softmax restricted to supported entries.

    The row maximum over supported entries is subtracted before
    exponentiation; rows with no supported entry come out all zero.
    """

    n = logits.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    masked = np.where(support, logits, -np.inf)
    row_max = masked.max(axis=1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    exps = np.where(support, np.exp(np.where(support, logits - row_max, 0.0)), 0.0)
    denom = exps.sum(axis=1, keepdims=True)
    return exps / np.where(denom > 0.0, denom, 1.0)


def relation_features(features: np.ndarray, params: ModelParams) -> Tuple[np.ndarray, np.ndarray]:
    """phi(V) and phi'(V) for every row of V."""

    p = features @ params["phi.weight"] + params["phi.bias"]
    q = features @ params["phi_prime.weight"] + params["phi_prime.bias"]
    return p, q


def edge_weights(features: np.ndarray, support: np.ndarray, params: ModelParams) -> np.ndarray:
    """
    Learnable adjacency A.

    A[i, j] = exp(phi(v_i)^T phi'(v_j)) over supported j, normalized so each
    supported row sums to 1.

    Args:
        features (np.ndarray): Relation input V, shape (n, d).
        support (np.ndarray): Boolean mask, shape (n, n), zero diagonal.
        params (ModelParams): Holds phi and phi'.

    Returns:
        np.ndarray: A, shape (n, n).
    """

    p, q = relation_features(features, params)
    return masked_softmax(p @ q.T, support)

# ------------------------------------------------------------------------------
# Residual block
# ------------------------------------------------------------------------------

def _block_forward(z, a, w, gamma, beta, running_mean, running_var, mode, eps) -> Tuple[np.ndarray, BlockCache]:
    u = a @ z
    h = u @ w
    r = np.maximum(h, 0.0)
    if mode == "train":
        mean = r.mean(axis=0)
        var = r.var(axis=0)
    else:
        mean, var = running_mean, running_var
    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (r - mean) * invstd
    out = z + gamma * xhat + beta
    return out, BlockCache(z=z, u=u, h=h, xhat=xhat, invstd=invstd, mean=mean, var=var)


def gcn_block(
    z: np.ndarray,
    a: np.ndarray,
    w: np.ndarray,
    gamma: Optional[np.ndarray] = None,
    beta: Optional[np.ndarray] = None,
    mode: str = "train",
    running_mean: Optional[np.ndarray] = None,
    running_var: Optional[np.ndarray] = None,
    eps: float = 1e-5,
) -> np.ndarray:
    """
    One residual block: Z' = Z + BN(ReLU(A Z W)).

    Passing `gamma=None` disables batchnorm (Z' = Z + ReLU(A Z W)).

    Example:
        >>> z = np.array([[1.0, 2.0], [3.0, 0.5]])
        >>> gcn_block(z, np.eye(2), np.eye(2)).tolist()  # batchnorm disabled
        [[2.0, 4.0], [6.0, 1.0]]
    """

    if gamma is None:
        return z + np.maximum(a @ z @ w, 0.0)
    if beta is None:
        beta = np.zeros_like(gamma)
    out, _ = _block_forward(z, a, w, gamma, beta, running_mean, running_var, mode, eps)
    return out

# ------------------------------------------------------------------------------
# Forward
# ------------------------------------------------------------------------------

def forward(graph: ContextGraph, params: ModelParams, mode: str = "eval", bn_eps: float = 1e-5) -> Tuple[np.ndarray, ForwardCache]:
    """
    Per-node logits of a graph (or block-diagonal batch).

    A is computed once from the relation input and shared by all L
    blocks; the original node features are concatenated with the last
    block output before the MLP head.

    Args:
        graph (ContextGraph): Graph or batch.
        params (ModelParams): Model parameters.
        mode (str): `train` uses batch statistics, `eval` running statistics.
        bn_eps (float): Batchnorm epsilon.

    Returns:
        tuple[np.ndarray, ForwardCache]: Logits of shape (n,) and the cache.
    """

    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = graph.x
    e = graph.edge_features
    p, q = relation_features(e, params)
    a = masked_softmax(p @ q.T, graph.support)

    z = x
    blocks = []
    for layer in range(params.layers):
        z, cache = _block_forward(
            z, a,
            params[f"gcn.{layer}.weight"],
            params[f"bn.{layer}.gamma"],
            params[f"bn.{layer}.beta"],
            params[f"bn.{layer}.running_mean"],
            params[f"bn.{layer}.running_var"],
            mode, bn_eps,
        )
        blocks.append(cache)

    c = np.concatenate([x, z], axis=1)
    pre1 = c @ params["mlp.0.weight"] + params["mlp.0.bias"]
    h1 = np.maximum(pre1, 0.0)
    pre2 = h1 @ params["mlp.1.weight"] + params["mlp.1.bias"]
    h2 = np.maximum(pre2, 0.0)
    logits = (h2 @ params["mlp.2.weight"] + params["mlp.2.bias"])[:, 0]

    cache = ForwardCache(mode=mode, x=x, e=e, p=p, q=q, a=a, c=c, pre1=pre1, h1=h1,
                         pre2=pre2, h2=h2, logits=logits, blocks=blocks)
    return logits, cache

# ------------------------------------------------------------------------------
# Loss
# ------------------------------------------------------------------------------

def focal_terms(logits: np.ndarray, labels: np.ndarray, alpha: float, gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-node focal loss and its derivative with respect to the logit.

    FL = -alpha * (1 - p_t)^gamma * log(p_t), evaluated in log space:
    with s = logit for label 1 and -logit for label 0, log(p_t) =
    log_sigmoid(s) and log(1 - p_t) = log_sigmoid(-s).
    """

    logits = np.asarray(logits, dtype=np.float64)
    positive = np.asarray(labels) > 0.5
    s = np.where(positive, logits, -logits)
    log_pt = log_expit(s)
    log_rest = log_expit(-s)
    weight = np.exp(gamma * log_rest)
    loss = -alpha * weight * log_pt
    d_s = alpha * weight * (gamma * np.exp(log_pt) * log_pt - np.exp(log_rest))
    return loss, np.where(positive, d_s, -d_s)


def focal_loss(logits: np.ndarray, labels: np.ndarray, alpha: float = 2.0, gamma: float = 0.25) -> float:
    """
    Mean focal loss over nodes.

    Example:
        >>> round(focal_loss(np.array([0.0]), np.array([1.0]), 2.0, 0.25), 5)
        1.16573
    """

    loss, _ = focal_terms(logits, labels, alpha, gamma)
    return float(loss.mean()) if loss.size else 0.0


def batch_loss(logits: np.ndarray, labels: np.ndarray, graph_index: np.ndarray, num_graphs: int,
               alpha: float, gamma: float) -> Tuple[float, np.ndarray]:
    """
    Mean over graphs of the per-graph mean focal loss, and d(loss)/d(logits).

    Graphs without nodes do not count.
    """

    loss, d_logit = focal_terms(logits, labels, alpha, gamma)
    counts = np.bincount(graph_index, minlength=num_graphs).astype(np.float64)
    present = counts > 0
    n_present = int(present.sum())
    if n_present == 0:
        return 0.0, np.zeros_like(logits)
    per_graph = np.bincount(graph_index, weights=loss, minlength=num_graphs)[present] / counts[present]
    scale = 1.0 / (counts[graph_index] * n_present)
    return float(per_graph.mean()), d_logit * scale

# ------------------------------------------------------------------------------
# Backward
# ------------------------------------------------------------------------------

def backward_from_logits(cache: ForwardCache, params: ModelParams, d_logits: np.ndarray) -> Gradients:
    """
    Reverse-mode gradients of every trainable block given d(loss)/d(logits).

    Walks the MLP head, the residual blocks (batchnorm, ReLU, A Z W) in
    reverse, then the masked softmax into phi and phi'.
    """

    grads: Gradients = {}
    d = params.dim
    d_out = d_logits[:, None]

    grads["mlp.2.weight"] = cache.h2.T @ d_out
    grads["mlp.2.bias"] = d_out.sum(axis=0)
    d_pre2 = (d_out @ params["mlp.2.weight"].T) * (cache.pre2 > 0)
    grads["mlp.1.weight"] = cache.h1.T @ d_pre2
    grads["mlp.1.bias"] = d_pre2.sum(axis=0)
    d_pre1 = (d_pre2 @ params["mlp.1.weight"].T) * (cache.pre1 > 0)
    grads["mlp.0.weight"] = cache.c.T @ d_pre1
    grads["mlp.0.bias"] = d_pre1.sum(axis=0)
    d_c = d_pre1 @ params["mlp.0.weight"].T

    d_z = d_c[:, d:]
    a = cache.a
    d_a = np.zeros_like(a)
    n = a.shape[0]
    for layer in reversed(range(params.layers)):
        block = cache.blocks[layer]
        gamma = params[f"bn.{layer}.gamma"]
        grads[f"bn.{layer}.gamma"] = (d_z * block.xhat).sum(axis=0)
        grads[f"bn.{layer}.beta"] = d_z.sum(axis=0)
        d_xhat = d_z * gamma
        if cache.mode == "train":
            d_r = block.invstd / n * (
                n * d_xhat - d_xhat.sum(axis=0) - block.xhat * (d_xhat * block.xhat).sum(axis=0)
            )
        else:
            d_r = d_xhat * block.invstd
        d_h = d_r * (block.h > 0)
        w = params[f"gcn.{layer}.weight"]
        grads[f"gcn.{layer}.weight"] = block.u.T @ d_h
        d_u = d_h @ w.T
        d_a += d_u @ block.z.T
        d_z = d_z + a.T @ d_u

    d_s = a * (d_a - (a * d_a).sum(axis=1, keepdims=True))
    d_p = d_s @ cache.q
    d_q = d_s.T @ cache.p
    grads["phi.weight"] = cache.e.T @ d_p
    grads["phi.bias"] = d_p.sum(axis=0)
    grads["phi_prime.weight"] = cache.e.T @ d_q
    grads["phi_prime.bias"] = d_q.sum(axis=0)

    return {name: grads[name] for name in params.trainable_names()}


def loss_and_gradients(graph: ContextGraph, params: ModelParams, alpha: float = 2.0, gamma: float = 0.25,
                       bn_eps: float = 1e-5) -> Tuple[float, Gradients, ForwardCache]:
    """
    Train-mode forward, batch focal loss and gradients of one graph batch.

    Raises:
        ValueError: If the graph carries no labels.
    """

    if graph.labels is None:
        raise ValueError("training graphs need node labels")
    logits, cache = forward(graph, params, mode="train", bn_eps=bn_eps)
    loss, d_logits = batch_loss(logits, graph.labels, graph.graph_index, graph.num_graphs, alpha, gamma)
    return loss, backward_from_logits(cache, params, d_logits), cache


def backward(graph: ContextGraph, params: ModelParams, labels: Optional[np.ndarray] = None,
             alpha: float = 2.0, gamma: float = 0.25, bn_eps: float = 1e-5) -> Gradients:
    """
    Exact gradients of the batch focal loss for every trainable block.

    Args:
        graph (ContextGraph): Graph or batch.
        params (ModelParams): Model parameters.
        labels (np.ndarray, optional): Node labels; defaults to `graph.labels`.
        alpha, gamma (float): Focal loss parameters.
        bn_eps (float): Batchnorm epsilon.
    """

    if labels is not None:
        graph = graph.model_copy(update={"labels": np.asarray(labels, dtype=np.float64)})
    _, grads, _ = loss_and_gradients(graph, params, alpha, gamma, bn_eps)
    return grads

# ------------------------------------------------------------------------------
# Optimizer
# ------------------------------------------------------------------------------

def sgd_step(params: ModelParams, grads: Gradients, momentum: Dict[str, np.ndarray], cfg: TrainConfig
             ) -> Tuple[ModelParams, Dict[str, np.ndarray]]:
    """
    One SGD step with momentum and weight decay.

    v <- momentum * v + grad + weight_decay * theta;  theta <- theta - lr * v.
    Batchnorm running statistics are not trained and get no decay.

    Args:
        params (ModelParams): Current parameters.
        grads (Gradients): Gradient per trainable block.
        momentum (dict): Momentum buffers (missing entries start at zero).
        cfg (TrainConfig): lr, momentum, weight_decay.

    Returns:
        tuple[ModelParams, dict]: New parameters and buffers.

    Raises:
        NumericError: If a gradient is non-finite (names the block).
    """

    updates: Dict[str, np.ndarray] = {}
    buffers: Dict[str, np.ndarray] = {}
    for name in params.trainable_names():
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"Non-finite gradient in parameter block '{name}'")
        theta = params[name]
        previous = momentum.get(name)
        velocity = grad + cfg.weight_decay * theta
        if previous is not None:
            velocity = cfg.momentum * previous + velocity
        buffers[name] = velocity
        updates[name] = theta - cfg.lr * velocity
    return params.replace(updates), buffers


def update_running_stats(params: ModelParams, cache: ForwardCache, bn_momentum: float = 0.1) -> ModelParams:
    """
    Blend the batch statistics of a train-mode pass into the running statistics.

    The running variance receives the unbiased batch variance.
    """

    if cache.mode != "train" or params.layers == 0:
        return params
    n = cache.x.shape[0]
    correction = n / (n - 1) if n > 1 else 1.0
    updates = {}
    for layer, block in enumerate(cache.blocks):
        mean_key, var_key = f"bn.{layer}.running_mean", f"bn.{layer}.running_var"
        updates[mean_key] = (1.0 - bn_momentum) * params[mean_key] + bn_momentum * block.mean
        updates[var_key] = (1.0 - bn_momentum) * params[var_key] + bn_momentum * block.var * correction
    return params.replace(updates)
