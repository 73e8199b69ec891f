"""Shared fixtures: small random graphs and a tiny trained model.

Expensive artifacts (trained backbones for the acceptance suite) are cached
on disk under tests/_cache so repeated runs skip retraining; delete the
directory to force a rebuild.
"""
import numpy as np
import pytest

from mixexplain.graphs import Dataset, Graph
from mixexplain.gcn import TrainConfig, init_model, train_gcn


def random_graph(rng, n=8, d=4, p=0.4, task_label=None):
    """Connected-ish random undirected graph with random features."""
    adj = np.zeros((n, n))
    for i in range(1, n):
        j = int(rng.integers(i))  # spanning tree keeps it connected
        adj[i, j] = adj[j, i] = 1.0
    extra = rng.random((n, n)) < p
    extra = np.triu(extra, 1)
    adj = np.clip(adj + extra + extra.T, 0, 1)
    features = rng.normal(size=(n, d))
    return Graph(features=features, adj=adj, label=task_label)


def random_mask(rng, adj):
    """Random symmetric mask supported on the adjacency."""
    m = rng.random(adj.shape) * (adj > 0)
    return np.triu(m, 1) + np.triu(m, 1).T


@pytest.fixture(scope="session")
def tiny_graph_dataset():
    """20 random graphs, binary labels correlated with edge density."""
    rng = np.random.default_rng(7)
    graphs, gts = [], []
    for i in range(20):
        label = i % 2
        g = random_graph(rng, n=8, p=0.2 + 0.4 * label, task_label=label)
        graphs.append(g)
        gt = np.zeros_like(g.adj)
        e = g.edges()
        gt[e[0, 0], e[0, 1]] = gt[e[0, 1], e[0, 0]] = 1.0
        gts.append(gt)
    idx = np.arange(20)
    return Dataset(task="graph", graphs=graphs, num_classes=2,
                   ground_truth=gts, train_idx=idx[:16], test_idx=idx[16:])


@pytest.fixture(scope="session")
def tiny_model(tiny_graph_dataset):
    model, _ = train_gcn(tiny_graph_dataset,
                         TrainConfig(epochs=50, weight_decay=0.0, seed=0))
    return model


@pytest.fixture()
def small_node_model():
    return init_model(feature_dim=4, num_classes=3, task="node", seed=1)


@pytest.fixture()
def small_graph_model():
    return init_model(feature_dim=4, num_classes=3, task="graph", seed=1)
