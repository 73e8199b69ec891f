"""Seeded generators for the synthetic explanation benchmarks.

Five constructions: a BA graph with house motifs (node task, 4 classes), its
two-community extension (8 classes), binary trees with 6-cycle or 3x3-grid
motifs (2 classes each), and a graph-classification set where each small BA
base carries either a house or a 5-cycle. Ground-truth masks mark exactly the
intra-motif edges; bridging and noise edges are never ground truth.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graphs import Dataset, Graph

FEATURE_DIM = 10

DATASET_NAMES = ("ba-shapes", "ba-community", "tree-circles", "tree-grid", "ba-2motifs")


@dataclass(frozen=True)
class GenConfig:
    seed: int = 0
    num_base_nodes: int = 300
    num_motifs: int = 80
    num_graphs: int = 1000
    ba_attach_m: int = 5
    random_edge_fraction: float = 0.1
    tree_levels: int = 8
    train_fraction: float = 0.8


def canonical_config(name: str) -> GenConfig:
    if name in ("ba-shapes", "ba-community"):
        return GenConfig(num_base_nodes=300, num_motifs=80, ba_attach_m=5)
    if name in ("tree-circles", "tree-grid"):
        return GenConfig(num_motifs=80, tree_levels=8, ba_attach_m=1)
    if name == "ba-2motifs":
        return GenConfig(num_base_nodes=20, num_graphs=1000, ba_attach_m=1,
                         random_edge_fraction=0.0)
    raise ValueError(f"unknown dataset name: {name!r}")


def generate(name: str, cfg: GenConfig) -> Dataset:
    gens = {
        "ba-shapes": gen_ba_shapes,
        "ba-community": gen_ba_community,
        "tree-circles": gen_tree_cycles,
        "tree-grid": gen_tree_grid,
        "ba-2motifs": gen_ba_2motifs,
    }
    if name not in gens:
        raise ValueError(f"unknown dataset name: {name!r}")
    return gens[name](cfg)


# --- motifs -----------------------------------------------------------------

def house_motif():
    """5 nodes, 6 edges: 4-cycle (roof pair + base pair) plus roof apex.

    Roles: 0 = apex (top), 1 = roof (middle), 2 = base (bottom).
    """
    edges = [(1, 2), (1, 3), (2, 4), (3, 4), (0, 1), (0, 2)]
    roles = [0, 1, 1, 2, 2]
    return 5, edges, roles


def cycle_motif(size: int):
    edges = [(i, (i + 1) % size) for i in range(size)]
    return size, edges, [0] * size


def grid_motif():
    """3x3 lattice: 9 nodes, 12 edges."""
    edges = []
    for r in range(3):
        for c in range(3):
            idx = 3 * r + c
            if c < 2:
                edges.append((idx, idx + 1))
            if r < 2:
                edges.append((idx, idx + 3))
    return 9, edges, [0] * 9


# --- base graphs ------------------------------------------------------------

def gen_ba_adjacency(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Preferential attachment: seed clique of m nodes, then m edges per node."""
    if n <= m:
        raise ValueError(f"need n > m, got n={n}, m={m}")
    adj = np.zeros((n, n), dtype=np.float64)
    adj[:m, :m] = 1.0
    np.fill_diagonal(adj, 0.0)
    for v in range(m, n):
        degree = adj[:v, :v].sum(axis=1)
        if degree.sum() == 0:
            probs = np.full(v, 1.0 / v)
        else:
            probs = degree / degree.sum()
        targets = rng.choice(v, size=min(m, v), replace=False, p=probs)
        adj[v, targets] = 1.0
        adj[targets, v] = 1.0
    return adj


def structural_features(adj: np.ndarray) -> np.ndarray:
    """Positional one-hot features for graph classification: column i mod 7.

    The graph-level benchmark carries no node attributes, but a constant
    vector leaves the mean-pooled readout with no usable signal after degree
    normalization, so graph classification needs non-constant input. Degree
    one-hots are non-constant but leak the label directly into node features,
    so explanations stop needing the motif edges. A positional pattern breaks
    the rank-one collapse while staying label-agnostic: motifs occupy the
    same index range in every graph, so identically placed house and cycle
    motifs differ only in their edges. The period 7 is coprime with the motif
    size (5) and the motif offset (20), so it does not encode node roles.
    """
    n = adj.shape[0]
    features = np.zeros((n, FEATURE_DIM), dtype=np.float64)
    features[np.arange(n), np.arange(n) % 7] = 1.0
    return features


def constant_features(n: int) -> np.ndarray:
    """All-ones features for the node-classification benchmarks.

    Node tasks read logits per node, so the rank-one collapse that rules out
    constant input for pooled readouts never happens; the label signal comes
    entirely from the message-passing structure. That is exactly what makes
    the prediction sensitive to edge masks. Positional one-hots, by contrast,
    let the model memorize node identity: predictions then survive any edge
    mask unchanged and every explainer degrades to chance.
    """
    return np.ones((n, FEATURE_DIM), dtype=np.float64)


def gen_ba_graph(n: int, m: int, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    adj = gen_ba_adjacency(n, m, rng)
    return Graph(features=structural_features(adj), adj=adj,
                 node_labels=np.zeros(n, dtype=np.int64))


def binary_tree_adjacency(levels: int) -> np.ndarray:
    n = 2 ** levels - 1
    adj = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for child in (2 * i + 1, 2 * i + 2):
            if child < n:
                adj[i, child] = 1.0
                adj[child, i] = 1.0
    return adj


# --- assembly helpers -------------------------------------------------------

def _attach_motifs(adj, node_labels, gt, num_motifs, motif_fn, role_offset, rng,
                   attach_to=None):
    """Grow `adj` in place-ish by appending motifs, each bridged by one edge.

    Returns the enlarged (adj, node_labels, gt). The bridge edge is not
    ground truth; intra-motif edges are.
    """
    n0 = adj.shape[0]
    size, edges, roles = motif_fn()
    total = n0 + num_motifs * size
    new_adj = np.zeros((total, total), dtype=np.float64)
    new_adj[:n0, :n0] = adj
    new_gt = np.zeros((total, total), dtype=np.float64)
    new_gt[:n0, :n0] = gt
    labels = np.concatenate([node_labels, np.zeros(total - n0, dtype=np.int64)])
    pool = np.arange(n0) if attach_to is None else np.asarray(attach_to)
    for k in range(num_motifs):
        base = n0 + k * size
        for i, j in edges:
            new_adj[base + i, base + j] = 1.0
            new_adj[base + j, base + i] = 1.0
            new_gt[base + i, base + j] = 1.0
            new_gt[base + j, base + i] = 1.0
        for i, role in enumerate(roles):
            labels[base + i] = role_offset + role
        anchor = int(rng.choice(pool))
        port = base + int(rng.integers(size))
        new_adj[anchor, port] = 1.0
        new_adj[port, anchor] = 1.0
    return new_adj, labels, new_gt


def _add_noise_edges(adj, fraction, rng):
    """Add ceil(fraction * n) random extra edges between distinct nodes."""
    n = adj.shape[0]
    count = int(np.ceil(fraction * n))
    added = 0
    while added < count:
        i, j = rng.integers(n, size=2)
        if i == j or adj[i, j] > 0:
            continue
        adj[i, j] = 1.0
        adj[j, i] = 1.0
        added += 1
    return adj


def _node_split(n, train_fraction, rng):
    perm = rng.permutation(n)
    cut = int(round(train_fraction * n))
    return np.sort(perm[:cut]), np.sort(perm[cut:])


# --- datasets ---------------------------------------------------------------

def _ba_shapes_community(cfg: GenConfig, rng: np.random.Generator):
    """One BA-Shapes-style community; shared by ba-shapes and ba-community."""
    adj = gen_ba_adjacency(cfg.num_base_nodes, cfg.ba_attach_m, rng)
    labels = np.zeros(cfg.num_base_nodes, dtype=np.int64)
    gt = np.zeros_like(adj)
    adj, labels, gt = _attach_motifs(adj, labels, gt, cfg.num_motifs,
                                     house_motif, 1, rng)
    adj = _add_noise_edges(adj, cfg.random_edge_fraction, rng)
    return adj, labels, gt


def gen_ba_shapes(cfg: GenConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    adj, labels, gt = _ba_shapes_community(cfg, rng)
    n = adj.shape[0]
    g = Graph(features=constant_features(n), adj=adj, node_labels=labels)
    train, test = _node_split(n, cfg.train_fraction, rng)
    return Dataset(task="node", graphs=[g], num_classes=4, ground_truth=[gt],
                   train_idx=train, test_idx=test)


def gen_ba_community(cfg: GenConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    adj_a, labels_a, gt_a = _ba_shapes_community(cfg, rng)
    adj_b, labels_b, gt_b = _ba_shapes_community(cfg, rng)
    na, nb = adj_a.shape[0], adj_b.shape[0]
    n = na + nb
    adj = np.zeros((n, n), dtype=np.float64)
    adj[:na, :na] = adj_a
    adj[na:, na:] = adj_b
    gt = np.zeros_like(adj)
    gt[:na, :na] = gt_a
    gt[na:, na:] = gt_b
    # sparse random inter-community wiring keeps the graph connected
    for _ in range(int(np.ceil(0.01 * n))):
        i = int(rng.integers(na))
        j = na + int(rng.integers(nb))
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    labels = np.concatenate([labels_a, labels_b + 4])
    features = np.empty((n, FEATURE_DIM), dtype=np.float64)
    features[:na] = rng.normal(0.0, 1.0, size=(na, FEATURE_DIM))
    features[na:] = rng.normal(1.0, 1.0, size=(nb, FEATURE_DIM))
    g = Graph(features=features, adj=adj, node_labels=labels)
    train, test = _node_split(n, cfg.train_fraction, rng)
    return Dataset(task="node", graphs=[g], num_classes=8, ground_truth=[gt],
                   train_idx=train, test_idx=test)


def _tree_motif_dataset(cfg: GenConfig, motif_fn) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    adj = binary_tree_adjacency(cfg.tree_levels)
    labels = np.zeros(adj.shape[0], dtype=np.int64)
    gt = np.zeros_like(adj)
    adj, labels, gt = _attach_motifs(adj, labels, gt, cfg.num_motifs, motif_fn, 1, rng)
    labels = np.minimum(labels, 1)  # binary: in-motif vs base
    adj = _add_noise_edges(adj, cfg.random_edge_fraction, rng)
    n = adj.shape[0]
    g = Graph(features=constant_features(n), adj=adj, node_labels=labels)
    train, test = _node_split(n, cfg.train_fraction, rng)
    return Dataset(task="node", graphs=[g], num_classes=2, ground_truth=[gt],
                   train_idx=train, test_idx=test)


def gen_tree_cycles(cfg: GenConfig) -> Dataset:
    return _tree_motif_dataset(cfg, lambda: cycle_motif(6))


def gen_tree_grid(cfg: GenConfig) -> Dataset:
    return _tree_motif_dataset(cfg, grid_motif)


def gen_ba_2motifs(cfg: GenConfig) -> Dataset:
    """Graph classification: BA base plus one house (label 0) or 5-cycle (label 1)."""
    rng = np.random.default_rng(cfg.seed)
    graphs, gts = [], []
    half = cfg.num_graphs // 2
    for idx in range(cfg.num_graphs):
        label = 0 if idx < half else 1
        motif_fn = house_motif if label == 0 else (lambda: cycle_motif(5))
        adj = gen_ba_adjacency(cfg.num_base_nodes, cfg.ba_attach_m, rng)
        node_labels = np.zeros(cfg.num_base_nodes, dtype=np.int64)
        gt = np.zeros_like(adj)
        adj, node_labels, gt = _attach_motifs(adj, node_labels, gt, 1, motif_fn, 1, rng)
        if cfg.random_edge_fraction > 0:
            adj = _add_noise_edges(adj, cfg.random_edge_fraction, rng)
        graphs.append(Graph(features=structural_features(adj), adj=adj, label=label,
                            node_labels=np.minimum(node_labels, 1)))
        gts.append(gt)
    train, test = _node_split(cfg.num_graphs, cfg.train_fraction, rng)
    return Dataset(task="graph", graphs=graphs, num_classes=2, ground_truth=gts,
                   train_idx=train, test_idx=test)


def load_edge_list_dataset(path, task=None) -> Dataset:
    """Load an external dataset in the JSON collection format.

    `task`, when given, must match the file's task tag; this is the hook for
    real-world graph collections that ship their own ground-truth masks.
    """
    from .graphs import load_dataset

    ds = load_dataset(path)
    if task is not None and ds.task != task:
        raise ValueError(f"task mismatch: file says {ds.task!r}, expected {task!r}")
    return ds
