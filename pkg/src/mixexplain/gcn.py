"""Fixed 3-layer GCN in float64 numpy with exact reverse-mode gradients.

Message passing uses the symmetric normalization N = D^{-1/2}(W + I)D^{-1/2}
where W = A (.) M is the mask-weighted adjacency; degrees reflect the masked
weights, so f(G with mask M) is continuous in M and a mask of all ones
reproduces the unmasked model exactly. Because the normalization is
recomputed from the masked weights, uniformly rescaling every kept edge of a
connected block largely cancels; what the mask controls is the relative
weight of edges, which is exactly what explanation needs. All core ops
accept an optional leading batch dimension so equally-sized graphs can be
trained in one shot.

The mask gradient returned by `gcn_backward` treats each undirected pair
(i, j) as a single parameter: grad[i, j] = dL/dM_ij + dL/dM_ji, which keeps
the gradient matrix symmetric and matches a finite difference that perturbs
both entries together.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .graphs import Dataset, Graph

HIDDEN_DIM = 20


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 1000
    seed: int = 0
    train_fraction: float = 0.8


@dataclass
class GcnModel:
    """Three propagation layers plus a linear classifier head.

    Bias vectors are required: the synthetic benchmarks use constant node
    features, and a bias-free GCN maps them to rank-one layer outputs whose
    logits are a positive scalar times a fixed vector, i.e. unlearnable.
    """
    w1: np.ndarray  # (d, h)
    b1: np.ndarray
    w2: np.ndarray  # (h, h)
    b2: np.ndarray
    w3: np.ndarray  # (h, h)
    b3: np.ndarray
    wc: np.ndarray  # (h, C)
    bc: np.ndarray
    task: str       # "node" | "graph"

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def num_classes(self) -> int:
        return self.wc.shape[1]

    def params(self) -> dict:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2,
                "w3": self.w3, "b3": self.b3, "wc": self.wc, "bc": self.bc}

    def copy(self) -> "GcnModel":
        copied = {k: v.copy() for k, v in self.params().items()}
        return GcnModel(task=self.task, **copied)


def init_model(feature_dim: int, num_classes: int, task: str,
               hidden_dim: int = HIDDEN_DIM, seed: int = 0) -> GcnModel:
    rng = np.random.default_rng(seed)

    def glorot(shape):
        scale = np.sqrt(2.0 / sum(shape))
        return rng.normal(0.0, scale, size=shape)

    return GcnModel(
        w1=glorot((feature_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        w2=glorot((hidden_dim, hidden_dim)),
        b2=np.zeros(hidden_dim),
        w3=glorot((hidden_dim, hidden_dim)),
        b3=np.zeros(hidden_dim),
        wc=glorot((hidden_dim, num_classes)),
        bc=np.zeros(num_classes),
        task=task,
    )


class Adam:
    """Adam with classic (L2-in-gradient) weight decay."""

    def __init__(self, params: dict, lr: float, weight_decay: float = 0.0,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in params.items():
            g = grads[k]
            if self.weight_decay:
                g = g + self.weight_decay * p
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            mhat = self.m[k] / (1 - b1 ** self.t)
            vhat = self.v[k] / (1 - b2 ** self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


# --- forward / backward -----------------------------------------------------

def _normalize(w):
    """Symmetric normalization of w + I. Returns (norm, s, d, dinv_sqrt)."""
    n = w.shape[-1]
    s = w + np.eye(n)
    d = s.sum(axis=-1)
    dinv = 1.0 / np.sqrt(d)
    norm = s * dinv[..., :, None] * dinv[..., None, :]
    return norm, s, d, dinv


@dataclass
class ForwardCache:
    x: np.ndarray
    norm: np.ndarray       # normalization actually propagated (mask applied)
    deg: np.ndarray        # masked degrees (rowsums of A (.) M + I)
    dinv: np.ndarray       # deg ** -0.5
    masked: bool
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    node_emb: np.ndarray
    graph_emb: np.ndarray
    logits: np.ndarray


def gcn_forward(model: GcnModel, g: Graph, mask: Optional[np.ndarray] = None) -> ForwardCache:
    return forward_raw(model, g.features, g.adj, mask)


def forward_raw(model: GcnModel, x, adj, mask=None) -> ForwardCache:
    """Forward pass; x is (..., n, d), adj/mask are (..., n, n)."""
    if x.shape[-1] != model.w1.shape[0]:
        raise ValueError(f"feature dim {x.shape[-1]} != model input dim {model.w1.shape[0]}")
    if mask is not None and mask.shape != adj.shape:
        raise ValueError("mask shape does not match adjacency")
    w = adj if mask is None else adj * mask
    norm, _, deg, dinv = _normalize(w)
    z1 = norm @ (x @ model.w1) + model.b1
    h1 = np.maximum(z1, 0.0)
    z2 = norm @ (h1 @ model.w2) + model.b2
    h2 = np.maximum(z2, 0.0)
    node_emb = norm @ (h2 @ model.w3) + model.b3
    graph_emb = node_emb.mean(axis=-2)
    if model.task == "graph":
        logits = graph_emb @ model.wc + model.bc
    else:
        logits = node_emb @ model.wc + model.bc
    return ForwardCache(x=x, norm=norm, deg=deg, dinv=dinv,
                        masked=mask is not None,
                        z1=z1, h1=h1, z2=z2, h2=h2, node_emb=node_emb,
                        graph_emb=graph_emb, logits=logits)


def backward_from_dlogits(model: GcnModel, cache: ForwardCache, d_logits):
    """Exact gradients of a scalar loss given d(loss)/d(logits).

    Returns (param_grads, d_mask) where d_mask[i, j] is the symmetric-pair
    gradient w.r.t. the edge-mask entry (see module docstring), evaluated at
    the mask used in the forward pass (all-ones when none was given).
    Parameter gradients are summed over any batch dimensions.
    """
    norm = cache.norm
    n = norm.shape[-1]

    def flat_outer(a, b):
        # sum of outer products over all leading (batch/node) dims
        return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])

    if model.task == "graph":
        grad_wc = flat_outer(cache.graph_emb, d_logits)
        grad_bc = d_logits.reshape(-1, d_logits.shape[-1]).sum(axis=0)
        d_ge = d_logits @ model.wc.T
        d_node = np.repeat(d_ge[..., None, :], n, axis=-2) / n
    else:
        grad_wc = flat_outer(cache.node_emb, d_logits)
        grad_bc = d_logits.reshape(-1, d_logits.shape[-1]).sum(axis=0)
        d_node = d_logits @ model.wc.T

    def bias_grad(d_z):
        return d_z.reshape(-1, d_z.shape[-1]).sum(axis=0)

    # layer 3: node_emb = norm @ (h2 @ w3) + b3
    grad_b3 = bias_grad(d_node)
    a3 = cache.h2 @ model.w3
    d_a3 = norm @ d_node  # norm is symmetric
    grad_w3 = flat_outer(cache.h2, d_a3)
    d_h2 = d_a3 @ model.w3.T
    d_norm = np.einsum("...ic,...jc->...ij", d_node, a3)

    # layer 2
    d_z2 = d_h2 * (cache.z2 > 0)
    grad_b2 = bias_grad(d_z2)
    a2 = cache.h1 @ model.w2
    d_a2 = norm @ d_z2
    grad_w2 = flat_outer(cache.h1, d_a2)
    d_h1 = d_a2 @ model.w2.T
    d_norm += np.einsum("...ic,...jc->...ij", d_z2, a2)

    # layer 1
    d_z1 = d_h1 * (cache.z1 > 0)
    grad_b1 = bias_grad(d_z1)
    a1 = cache.x @ model.w1
    d_a1 = norm @ d_z1
    grad_w1 = flat_outer(cache.x, d_a1)
    d_norm += np.einsum("...ic,...jc->...ij", d_z1, a1)

    # norm = S / sqrt(d_i d_j) with S = A (.) M + I and d = rowsum(S); chain
    # through both the entry itself and the two degrees it contributes to
    dinv = cache.dinv
    d_s = d_norm * dinv[..., :, None] * dinv[..., None, :]
    gn = d_norm * norm
    d_deg = -(gn.sum(axis=-1) + gn.sum(axis=-2)) / (2.0 * cache.deg)
    d_s = d_s + d_deg[..., :, None]
    # the self-loop entries of S are fixed at 1 and carry no mask gradient;
    # callers restrict to the adjacency support, which has a zero diagonal
    eye = np.eye(norm.shape[-1])
    d_m = d_s * (1.0 - eye)
    d_mask = d_m + np.swapaxes(d_m, -1, -2)  # one parameter per undirected pair

    grads = {"w1": grad_w1, "b1": grad_b1, "w2": grad_w2, "b2": grad_b2,
             "w3": grad_w3, "b3": grad_b3, "wc": grad_wc, "bc": grad_bc}
    return grads, d_mask


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, target: int) -> float:
    return float(-np.log(probs[..., target]))


def gcn_backward(model: GcnModel, g: Graph, mask, target: int,
                 node: Optional[int] = None):
    """Gradients of CE loss w.r.t. parameters and mask entries.

    For node tasks `node` selects the classified node. The mask gradient is
    restricted to the support of the adjacency (absent edges get exactly 0).
    """
    cache = forward_raw(model, g.features, g.adj, mask)
    probs = softmax(cache.logits)
    if model.task == "graph":
        d_logits = probs.copy()
        d_logits[target] -= 1.0
        loss = cross_entropy(probs, target)
    else:
        if node is None:
            raise ValueError("node index required for node-task backward")
        d_logits = np.zeros_like(cache.logits)
        d_logits[node] = probs[node]
        d_logits[node, target] -= 1.0
        loss = cross_entropy(probs[node], target)
    grads, d_mask = backward_from_dlogits(model, cache, d_logits)
    d_mask = d_mask * (g.adj > 0)  # absent edges get exactly 0
    return loss, grads, d_mask


def predict(model: GcnModel, g: Graph, mask: Optional[np.ndarray] = None,
            node: Optional[int] = None):
    """Class-probability vector; for node tasks, at the requested node."""
    cache = gcn_forward(model, g, mask)
    probs = softmax(cache.logits)
    if model.task == "node":
        if node is None:
            return probs
        return probs[node]
    return probs


# --- training ---------------------------------------------------------------

def _stack_by_size(graphs, indices):
    """Group graph indices by node count for batched training."""
    groups = {}
    for idx in indices:
        groups.setdefault(graphs[idx].n, []).append(idx)
    stacked = []
    for n, idxs in sorted(groups.items()):
        x = np.stack([graphs[i].features for i in idxs])
        adj = np.stack([graphs[i].adj for i in idxs])
        y = np.array([graphs[i].label for i in idxs], dtype=np.int64)
        stacked.append((x, adj, y))
    return stacked


def train_gcn(dataset: Dataset, cfg: TrainConfig):
    """Full-batch Adam training; returns (model, history dict)."""
    if len(dataset.train_idx) == 0:
        raise ValueError("empty train split")
    if dataset.task == "graph":
        feature_dim = dataset.graphs[0].features.shape[1]
    else:
        feature_dim = dataset.base.features.shape[1]
    model = init_model(feature_dim, dataset.num_classes, dataset.task, seed=cfg.seed)
    params = model.params()
    opt = Adam(params, lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    losses = []

    if dataset.task == "graph":
        batches = _stack_by_size(dataset.graphs, dataset.train_idx)
        total = sum(len(y) for _, _, y in batches)
        for _ in range(cfg.epochs):
            grads = {k: np.zeros_like(v) for k, v in params.items()}
            loss = 0.0
            for x, adj, y in batches:
                cache = forward_raw(model, x, adj)
                probs = softmax(cache.logits)
                d_logits = probs.copy()
                d_logits[np.arange(len(y)), y] -= 1.0
                d_logits /= total
                loss += float(-np.log(probs[np.arange(len(y)), y]).sum()) / total
                g, _ = backward_from_dlogits(model, cache, d_logits)
                for k in grads:
                    grads[k] += g[k]
            losses.append(loss)
            opt.step(params, grads)
    else:
        g0 = dataset.base
        y = g0.node_labels
        train = dataset.train_idx
        for _ in range(cfg.epochs):
            cache = forward_raw(model, g0.features, g0.adj)
            probs = softmax(cache.logits)
            d_logits = np.zeros_like(cache.logits)
            d_logits[train] = probs[train]
            d_logits[train, y[train]] -= 1.0
            d_logits /= len(train)
            losses.append(float(-np.log(probs[train, y[train]]).mean()))
            grads, _ = backward_from_dlogits(model, cache, d_logits)
            opt.step(params, grads)

    history = {
        "losses": losses,
        "train_acc": accuracy(model, dataset, dataset.train_idx),
        "test_acc": accuracy(model, dataset, dataset.test_idx),
    }
    return model, history


def accuracy(model: GcnModel, dataset: Dataset, indices) -> float:
    if len(indices) == 0:
        return float("nan")
    if dataset.task == "graph":
        correct = 0
        for batch in _stack_by_size(dataset.graphs, indices):
            x, adj, y = batch
            cache = forward_raw(model, x, adj)
            correct += int((cache.logits.argmax(axis=-1) == y).sum())
        return correct / len(indices)
    cache = forward_raw(model, dataset.base.features, dataset.base.adj)
    pred = cache.logits.argmax(axis=-1)
    return float((pred[indices] == dataset.base.node_labels[indices]).mean())


# --- checkpoints ------------------------------------------------------------

def model_to_dict(model: GcnModel) -> dict:
    out = {"task": model.task, "params": {}}
    for name, p in model.params().items():
        out["params"][name] = {"shape": list(p.shape), "data": p.ravel().tolist()}
    return out


def model_from_dict(d: dict) -> GcnModel:
    tensors = {}
    for name, spec in d["params"].items():
        tensors[name] = np.asarray(spec["data"], dtype=np.float64).reshape(spec["shape"])
    return GcnModel(task=d["task"], **tensors)


def save_model(model: GcnModel, path, extra: Optional[dict] = None) -> None:
    payload = model_to_dict(model)
    if extra:
        payload["meta"] = extra
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path) -> GcnModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
