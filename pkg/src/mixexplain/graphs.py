"""Dense graph containers, validation, k-hop extraction, and JSON (de)serialization.

Graphs are small (n <= ~1400) so everything is stored as dense float64
matrices. Adjacencies and edge masks are kept symmetric with a zero diagonal;
self-loops are added inside the GCN, never stored here.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

# Receptive field of the 3-layer GCN; node-level explanation instances are
# 3-hop subgraphs around the target node.
NODE_TASK_HOPS = 3


@dataclass(frozen=True)
class Graph:
    """One graph instance: features (n, d), symmetric weighted adjacency (n, n)."""

    features: np.ndarray
    adj: np.ndarray
    label: Optional[int] = None
    node_labels: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adj)))

    def edges(self) -> np.ndarray:
        """Undirected edge list as an (E, 2) array with i < j."""
        i, j = np.nonzero(np.triu(self.adj))
        return np.stack([i, j], axis=1)


def make_graph(features, adj, label=None, node_labels=None) -> Graph:
    features = np.asarray(features, dtype=np.float64)
    adj = np.asarray(adj, dtype=np.float64)
    if node_labels is not None:
        node_labels = np.asarray(node_labels, dtype=np.int64)
    return Graph(features=features, adj=adj, label=label, node_labels=node_labels)


@dataclass
class Dataset:
    """A node- or graph-classification benchmark with optional ground truth.

    For node classification `graphs` holds exactly one base graph; split
    indices refer to nodes. For graph classification split indices refer to
    graph positions. `ground_truth` masks (binary, symmetric) align with
    `graphs` one-to-one.
    """

    task: str  # "node" | "graph"
    graphs: list
    num_classes: int
    ground_truth: Optional[list] = None
    train_idx: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))
    test_idx: np.ndarray = field(default_factory=lambda: np.array([], dtype=np.int64))

    @property
    def base(self) -> Graph:
        if self.task != "node":
            raise ValueError("base graph is only defined for node tasks")
        return self.graphs[0]

    def num_instances(self) -> int:
        return self.base.n if self.task == "node" else len(self.graphs)


def validate_graph(g: Graph) -> str:
    """Return "ok" or a description of the first violated invariant."""
    if g.adj.ndim != 2 or g.adj.shape[0] != g.adj.shape[1]:
        return "adjacency is not square"
    if g.features.ndim != 2 or g.features.shape[0] != g.adj.shape[0]:
        return "node_features row count does not match node count"
    if not np.array_equal(g.adj, g.adj.T):
        return "asymmetric adjacency"
    if np.any(np.diag(g.adj) != 0):
        return "nonzero diagonal"
    if np.any(g.adj < 0) or np.any(g.adj > 1):
        return "adjacency entry outside [0,1]"
    if g.node_labels is not None and len(g.node_labels) != g.adj.shape[0]:
        return "node_labels length does not match node count"
    return "ok"


def validate_mask(mask: np.ndarray, adj: Optional[np.ndarray] = None) -> str:
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        return "mask is not square"
    if not np.allclose(mask, mask.T):
        return "asymmetric mask"
    if np.any(np.diag(mask) != 0):
        return "nonzero diagonal"
    if np.any(mask < 0) or np.any(mask > 1):
        return "mask entry outside [0,1]"
    if adj is not None and np.any((mask > 0) & (adj == 0)):
        return "mask weight on a non-edge"
    return "ok"


def khop_subgraph(g: Graph, center: int, k: int):
    """Induced subgraph on nodes within hop distance <= k of `center`.

    Returns (subgraph, node_map) where node_map[new_index] = old_index and
    the center node is always new index 0.
    """
    if center < 0 or center >= g.n:
        raise IndexError(f"center {center} out of range for {g.n} nodes")
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[center] = 0
    queue = deque([center])
    order = [center]
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for v in np.nonzero(g.adj[u] > 0)[0]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                order.append(v)
                queue.append(v)
    node_map = np.array(order, dtype=np.int64)
    sub_adj = g.adj[np.ix_(node_map, node_map)]
    sub_feat = g.features[node_map]
    sub_labels = g.node_labels[node_map] if g.node_labels is not None else None
    return Graph(features=sub_feat, adj=sub_adj, label=g.label,
                 node_labels=sub_labels), node_map


def instance_graph(dataset: Dataset, instance: int):
    """Materialize explanation instance `instance` as (graph, node_map).

    Graph tasks return the stored graph with an identity map; node tasks
    return the 3-hop subgraph around the node, center first.
    """
    if dataset.task == "graph":
        g = dataset.graphs[instance]
        return g, np.arange(g.n, dtype=np.int64)
    return khop_subgraph(dataset.base, instance, NODE_TASK_HOPS)


def instance_ground_truth(dataset: Dataset, instance: int, node_map=None) -> np.ndarray:
    """Ground-truth mask of an instance, in the instance graph's indexing.

    Node tasks restrict the mask to the instance's own motif: the connected
    component, within the ground-truth edge set, that contains the center
    node. Other motifs that happen to fall inside the 3-hop subgraph count
    as negatives, matching the motif-per-instance labeling convention.
    """
    if dataset.ground_truth is None:
        raise ValueError("dataset has no ground-truth masks")
    if dataset.task == "graph":
        return dataset.ground_truth[instance]
    if node_map is None:
        _, node_map = instance_graph(dataset, instance)
    full = dataset.ground_truth[0]
    gt = full[np.ix_(node_map, node_map)]
    # BFS over ground-truth edges from the center (index 0 by construction)
    keep = np.zeros(gt.shape[0], dtype=bool)
    frontier = [0]
    keep[0] = True
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.nonzero(gt[u])[0]:
                if not keep[v]:
                    keep[v] = True
                    nxt.append(int(v))
        frontier = nxt
    gt = gt * np.outer(keep, keep)
    return gt


def explanation_instances(dataset: Dataset) -> np.ndarray:
    """Instances that carry ground-truth edges and are worth explaining.

    Graph tasks: every graph. Node tasks: nodes incident to at least one
    ground-truth (motif) edge.
    """
    if dataset.task == "graph":
        return np.arange(len(dataset.graphs), dtype=np.int64)
    if dataset.ground_truth is None:
        return np.arange(dataset.base.n, dtype=np.int64)
    incident = dataset.ground_truth[0].sum(axis=1) > 0
    return np.nonzero(incident)[0].astype(np.int64)


# --- JSON schema ------------------------------------------------------------
# Graph: {"n": int, "features": [[float]], "edges": [[i, j, w]],
#         "label": int|null, "node_labels": [int]|null}
# Each undirected edge appears once with i < j.

def graph_to_dict(g: Graph) -> dict:
    i, j = np.nonzero(np.triu(g.adj))
    edges = [[int(a), int(b), float(g.adj[a, b])] for a, b in zip(i, j)]
    return {
        "n": g.n,
        "features": g.features.tolist(),
        "edges": edges,
        "label": None if g.label is None else int(g.label),
        "node_labels": None if g.node_labels is None else [int(x) for x in g.node_labels],
    }


def graph_from_dict(d: dict) -> Graph:
    n = int(d["n"])
    features = np.asarray(d["features"], dtype=np.float64)
    if features.shape[0] != n:
        raise ValueError("feature row count does not match n")
    adj = np.zeros((n, n), dtype=np.float64)
    for i, j, w in d["edges"]:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) out of range")
        adj[i, j] = w
        adj[j, i] = w
    node_labels = d.get("node_labels")
    if node_labels is not None:
        node_labels = np.asarray(node_labels, dtype=np.int64)
    return Graph(features=features, adj=adj, label=d.get("label"),
                 node_labels=node_labels)


def mask_to_edge_list(mask: np.ndarray) -> list:
    i, j = np.nonzero(np.triu(mask))
    return [[int(a), int(b), float(mask[a, b])] for a, b in zip(i, j)]


def mask_from_edge_list(edges: list, n: int) -> np.ndarray:
    mask = np.zeros((n, n), dtype=np.float64)
    for i, j, w in edges:
        mask[i, j] = w
        mask[j, i] = w
    return mask


def dataset_to_dict(ds: Dataset) -> dict:
    out = {
        "task": ds.task,
        "num_classes": ds.num_classes,
        "graphs": [graph_to_dict(g) for g in ds.graphs],
        "train_idx": [int(x) for x in ds.train_idx],
        "test_idx": [int(x) for x in ds.test_idx],
    }
    if ds.ground_truth is not None:
        out["ground_truth"] = [mask_to_edge_list(m) for m in ds.ground_truth]
    return out


def dataset_from_dict(d: dict) -> Dataset:
    task = d["task"]
    if task not in ("node", "graph"):
        raise ValueError(f"unknown task tag: {task!r}")
    graphs = [graph_from_dict(gd) for gd in d["graphs"]]
    gt = None
    if d.get("ground_truth") is not None:
        gt = [mask_from_edge_list(e, g.n) for e, g in zip(d["ground_truth"], graphs)]
        for m, g in zip(gt, graphs):
            status = validate_mask(m, g.adj)
            if status != "ok":
                raise ValueError(f"bad ground-truth mask: {status}")
    return Dataset(
        task=task,
        graphs=graphs,
        num_classes=int(d["num_classes"]),
        ground_truth=gt,
        train_idx=np.asarray(d.get("train_idx", []), dtype=np.int64),
        test_idx=np.asarray(d.get("test_idx", []), dtype=np.int64),
    )


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_dict(ds), fh)


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        return dataset_from_dict(json.load(fh))
