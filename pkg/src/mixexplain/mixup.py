"""Graph mixup: merge an explanation with the label-independent remainder of
a randomly sampled partner graph, plus a few random cross edges.

Block layout of a mixed pair (a on top-left, b on bottom-right):

    adjacency = [[A_a, A_c], [A_c^T, A_b]]
    mask      = [[lam * M_a, M_c], [M_c^T, A_b - lam * M_b]]

Cross-edge weights M_c are sampled, never optimized. The mixup objective is
the usual CE + regularizer objective, but the CE is computed on the mixed
graph's prediction while the regularizers still act on the raw mask M_a.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .explain import (PG_COEFS, GibCoefficients, edges_to_matrix, edge_logits,
                      edge_logits_backward, concrete_sample, init_pg_params,
                      instance_gib_loss, mask_regularizer, model_target,
                      pgexplainer_explain, prepare_pg_instance, sigmoid,
                      temperature)
from .gcn import Adam, GcnModel, backward_from_dlogits, forward_raw, softmax
from .graphs import Dataset, Graph, instance_graph


@dataclass(frozen=True)
class MixupConfig:
    lam: float = 1.0
    eta: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")


@dataclass
class MixedGraph:
    graph: Graph
    mask: np.ndarray
    n_a: int
    n_b: int
    cross_edges: np.ndarray  # (eta, 3): i in a, j in b (local), weight
    lam: float
    seed: int
    id_a: Optional[int] = None
    id_b: Optional[int] = None

    def provenance(self) -> dict:
        return {
            "g_a": self.id_a,
            "g_b": self.id_b,
            "cross_edges": [[int(i), int(j), float(w)] for i, j, w in self.cross_edges],
            "lambda": self.lam,
            "seed": self.seed,
        }


def extend_adjacency(a_a: np.ndarray, a_b: np.ndarray):
    """Zero-pad both adjacencies onto the union node set (a first, then b)."""
    for m in (a_a, a_b):
        if not np.array_equal(m, m.T):
            raise ValueError("asymmetric input adjacency")
    n_a, n_b = a_a.shape[0], a_b.shape[0]
    n = n_a + n_b
    a_ext = np.zeros((n, n), dtype=np.float64)
    a_ext[:n_a, :n_a] = a_a
    b_ext = np.zeros((n, n), dtype=np.float64)
    b_ext[n_a:, n_a:] = a_b
    return a_ext, b_ext


def cross_edge_indices(n_a: int, n_b: int, eta: int, seed: int):
    """Pick eta distinct (i, j) pairs across the two node sets.

    Returns (i, j, w): indices into a and b plus uniform random weights,
    sorted in row-major order. Index form keeps downstream assembly linear
    in eta rather than quadratic in the node counts.
    """
    if eta > n_a * n_b:
        raise ValueError(f"eta={eta} exceeds {n_a}x{n_b} possible cross edges")
    rng = np.random.default_rng(seed)
    if eta == 0:
        empty = np.zeros(0)
        return empty.astype(np.intp), empty.astype(np.intp), empty
    flat = rng.choice(n_a * n_b, size=eta, replace=False)
    i, j = np.unravel_index(flat, (n_a, n_b))
    w = rng.uniform(0.0, 1.0, size=eta)
    order = np.lexsort((j, i))
    return i[order], j[order], w[order]


def sample_cross_edges(n_a: int, n_b: int, eta: int, seed: int):
    """Dense form of cross_edge_indices.

    Returns (A_c, M_c), both (n_a, n_b): binary connectivity and uniform
    random weights on exactly those pairs.
    """
    i, j, w = cross_edge_indices(n_a, n_b, eta, seed)
    a_c = np.zeros((n_a, n_b), dtype=np.float64)
    m_c = np.zeros((n_a, n_b), dtype=np.float64)
    a_c[i, j] = 1.0
    m_c[i, j] = w
    return a_c, m_c


def mixup_masks(m_a: np.ndarray, m_b: np.ndarray, a_b: np.ndarray,
                m_c: np.ndarray, lam: float) -> np.ndarray:
    """Assemble the block mask [[lam*M_a, M_c], [M_c^T, A_b - lam*M_b]]."""
    if np.any(m_b > a_b + 1e-12):
        raise ValueError("partner mask exceeds partner adjacency support")
    n_a, n_b = m_a.shape[0], m_b.shape[0]
    if m_c.shape != (n_a, n_b):
        raise ValueError("cross-edge weight matrix has wrong shape")
    n = n_a + n_b
    mix = np.zeros((n, n), dtype=np.float64)
    mix[:n_a, :n_a] = lam * m_a
    mix[n_a:, n_a:] = np.clip(a_b - lam * m_b, 0.0, 1.0)
    mix[:n_a, n_a:] = m_c
    mix[n_a:, :n_a] = m_c.T
    return mix


def mixup_graphs(g_a: Graph, g_b: Graph, m_a: np.ndarray, m_b: np.ndarray,
                 cfg: MixupConfig, id_a: Optional[int] = None,
                 id_b: Optional[int] = None) -> MixedGraph:
    """Build the mixed graph: block adjacency, block mask, stacked features.

    Cross edges are scattered by index and the mask blocks are written in
    place, so the cost is one pass over each diagonal block plus O(eta)
    for the off-diagonal ones.
    """
    n_a, n_b = g_a.n, g_b.n
    if np.any(m_b > g_b.adj + 1e-12):
        raise ValueError("partner mask exceeds partner adjacency support")
    ci, cj, cw = cross_edge_indices(n_a, n_b, cfg.eta, cfg.seed)
    n = n_a + n_b
    adj = np.zeros((n, n), dtype=np.float64)
    adj[:n_a, :n_a] = g_a.adj
    adj[n_a:, n_a:] = g_b.adj
    adj[ci, n_a + cj] = 1.0
    adj[n_a + cj, ci] = 1.0
    mask = np.zeros((n, n), dtype=np.float64)
    np.multiply(m_a, cfg.lam, out=mask[:n_a, :n_a])
    block_b = mask[n_a:, n_a:]
    np.multiply(m_b, -cfg.lam, out=block_b)
    np.add(block_b, g_b.adj, out=block_b)
    np.clip(block_b, 0.0, 1.0, out=block_b)
    mask[ci, n_a + cj] = cw
    mask[n_a + cj, ci] = cw
    features = np.vstack([g_a.features, g_b.features])
    graph = Graph(features=features, adj=adj, label=g_a.label)
    cross = np.stack([ci, cj, cw], axis=1) if len(ci) else np.zeros((0, 3))
    return MixedGraph(graph=graph, mask=mask, n_a=n_a, n_b=n_b,
                      cross_edges=cross, lam=cfg.lam, seed=cfg.seed,
                      id_a=id_a, id_b=id_b)


def sample_partner(dataset: Dataset, exclude: int, rng: np.random.Generator):
    """Uniformly pick a different instance; returns (id, graph, node_map)."""
    total = dataset.num_instances()
    if total < 2:
        raise ValueError("need at least two instances to sample a partner")
    other = int(rng.integers(total - 1))
    if other >= exclude:
        other += 1
    g, node_map = instance_graph(dataset, other)
    return other, g, node_map


def mixup_loss(model: GcnModel, g_a: Graph, g_b: Graph, m_a: np.ndarray,
               m_b: np.ndarray, target: int, cfg: MixupConfig,
               coefs: GibCoefficients, node: Optional[int] = None,
               mixed: Optional[MixedGraph] = None):
    """CE on the mixed prediction + regularizers on m_a.

    Returns (loss, d_m_a, d_m_b, mixed). Gradients use the symmetric-pair
    convention; cross-edge weights receive no gradient by construction. For
    node tasks the CE target node is g_a's center, which keeps index `node`
    in the mixed graph.
    """
    if mixed is None:
        mixed = mixup_graphs(g_a, g_b, m_a, m_b, cfg)
    n_a = mixed.n_a
    cache = forward_raw(model, mixed.graph.features, mixed.graph.adj, mixed.mask)
    probs = softmax(cache.logits)
    if model.task == "graph":
        d_logits = probs.copy()
        d_logits[target] -= 1.0
        ce = -np.log(max(probs[target], 1e-300))
    else:
        if node is None:
            raise ValueError("node index required for node-task mixup loss")
        d_logits = np.zeros_like(cache.logits)
        d_logits[node] = probs[node]
        d_logits[node, target] -= 1.0
        ce = -np.log(max(probs[node, target], 1e-300))
    _, d_mix = backward_from_dlogits(model, cache, coefs.alpha * d_logits)
    d_mix = d_mix * (mixed.graph.adj > 0)
    # chain through the block structure of the mixed mask
    d_m_a = cfg.lam * d_mix[:n_a, :n_a]
    d_m_b = -cfg.lam * d_mix[n_a:, n_a:]
    edges = g_a.edges()
    if len(edges):
        weights = m_a[edges[:, 0], edges[:, 1]]
        reg, d_weights = mask_regularizer(weights, coefs)
        d_m_a = d_m_a.copy()
        d_m_a[edges[:, 0], edges[:, 1]] += d_weights
        d_m_a[edges[:, 1], edges[:, 0]] += d_weights
    else:
        reg = 0.0
    return float(coefs.alpha * ce + reg), d_m_a, d_m_b, mixed


def mixup_gnnexplainer_explain(model: GcnModel, dataset: Dataset, instance: int,
                               cfg: MixupConfig = MixupConfig(),
                               coefs: GibCoefficients = GibCoefficients(),
                               epochs: int = 300, lr: float = 0.05,
                               seed: int = 0, init: float = 0.0,
                               partner_level: float = 0.5) -> np.ndarray:
    """Per-instance mask learning against the mixup objective.

    Each step draws a fresh partner with its mask held at `partner_level` and
    evaluates the mixup loss in both directions: once with the instance as
    the explained graph and once with it as the partner, where its mask
    shapes the label-independent residual. Both gradients are applied to the
    instance's mask logits with Adam (see `gnnexplainer_explain` for why an
    adaptive optimizer is the right fit for per-edge logits). Resampling the
    partner every step makes the integrated update approximate the
    partner-averaged gradient, so the learned mask reflects edge importance
    under the mixed-graph distribution instead of one arbitrary pairing.
    `cfg.eta` is clamped per partner so tiny neighborhoods cannot ask for
    more cross edges than node pairs exist.
    """
    rng = np.random.default_rng(seed)
    g_a, _ = instance_graph(dataset, instance)
    if g_a.num_edges == 0:
        raise ValueError("instance graph has no edges to explain")
    node = 0 if model.task == "node" else None
    target = model_target(model, g_a, node)
    edges = g_a.edges()
    params = {"l": init + rng.normal(0.0, 0.1, size=len(edges))}
    opt = Adam(params, lr=lr)
    for _ in range(epochs):
        values = sigmoid(params["l"])
        m_a = edges_to_matrix(values, edges, g_a.n)
        pid, g_b, _ = sample_partner(dataset, instance, rng)
        t_b = model_target(model, g_b, node)
        m_b = partner_level * (g_b.adj > 0)
        eta = min(cfg.eta, g_a.n * g_b.n)
        fwd_cfg = MixupConfig(lam=cfg.lam, eta=eta,
                              seed=int(rng.integers(2 ** 31)))
        _, d_own, _, _ = mixup_loss(model, g_a, g_b, m_a, m_b, target,
                                    fwd_cfg, coefs, node=node)
        rev_cfg = MixupConfig(lam=cfg.lam, eta=eta,
                              seed=int(rng.integers(2 ** 31)))
        _, _, d_resid, _ = mixup_loss(model, g_b, g_a, m_b, m_a, t_b,
                                      rev_cfg, coefs, node=node)
        d_values = (d_own + d_resid)[edges[:, 0], edges[:, 1]]
        opt.step(params, {"l": d_values * values * (1 - values)})
    return edges_to_matrix(sigmoid(params["l"]), edges, g_a.n)


def mixup_pgexplainer_train(model: GcnModel, dataset: Dataset, instances: list,
                            cfg: MixupConfig = MixupConfig(),
                            coefs: GibCoefficients = PG_COEFS,
                            epochs: int = 100, lr: float = 0.003, seed: int = 0,
                            t_start: float = 5.0, t_end: float = 1.0,
                            bias: float = 3.0, partner_level: float = 0.5):
    """Train the shared edge scorer against the mixup objective.

    `instances` pairs instance ids with PgInstance state: [(id, PgInstance)].
    Each visit samples a fresh partner whose mask is held flat at
    `partner_level`, and the loss runs in both directions, exactly as in
    `mixup_gnnexplainer_explain`; only the instance's own block feeds
    gradients back into the MLP. Letting the MLP also produce the partner
    mask couples the residual to the still-untrained scorer and destabilizes
    training. Plain SGD, not an adaptive optimizer, for the reason given in
    `pgexplainer_train`: here it additionally integrates out the
    partner-sampling noise across visits.
    """
    if not instances:
        raise ValueError("no training instances")
    rng = np.random.default_rng(seed)
    pg = init_pg_params(model.hidden_dim, seed=seed, t_start=t_start,
                        t_end=t_end, bias=bias)
    params = pg.params()
    for epoch in range(epochs):
        temp = temperature(pg, epoch, epochs)
        for k in rng.permutation(len(instances)):
            iid, inst = instances[k]
            pid, g_b, _ = sample_partner(dataset, iid, rng)
            t_b = model_target(model, g_b, inst.node)
            m_b = partner_level * (g_b.adj > 0)
            logits_a, cache_a = edge_logits(pg, inst.node_emb, inst.edges)
            vals_a, dva = concrete_sample(logits_a, temp, rng)
            m_a = edges_to_matrix(vals_a, inst.edges, inst.graph.n)
            fwd_cfg = MixupConfig(lam=cfg.lam, eta=cfg.eta,
                                  seed=int(rng.integers(2 ** 31)))
            _, d_own, _, _ = mixup_loss(model, inst.graph, g_b, m_a, m_b,
                                        inst.target, fwd_cfg, coefs,
                                        node=inst.node)
            rev_cfg = MixupConfig(lam=cfg.lam, eta=cfg.eta,
                                  seed=int(rng.integers(2 ** 31)))
            _, _, d_resid, _ = mixup_loss(model, g_b, inst.graph, m_b, m_a,
                                          t_b, rev_cfg, coefs, node=inst.node)
            da = (d_own + d_resid)[inst.edges[:, 0], inst.edges[:, 1]] * dva
            grads = edge_logits_backward(pg, cache_a, da)
            for key in params:
                params[key] -= lr * grads[key]
    return pg
