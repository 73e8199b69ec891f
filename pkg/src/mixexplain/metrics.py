"""Faithfulness scoring and distribution-shift diagnostics.

AUC is the Mann-Whitney rank statistic over per-edge importance weights
(ties count 1/2), computed per instance over that instance's candidate edges
and averaged across instances, or pooled across all instances for
parameterized explainers. Shift diagnostics compare the model's graph
embedding of the original graph, its top-k binarized explanation, and the
mixed graph.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .gcn import GcnModel, gcn_forward
from .graphs import (Dataset, Graph, explanation_instances, instance_graph,
                     instance_ground_truth)


def auc_roc(scores) -> float:
    """P(random positive outranks random negative); ties count 1/2.

    `scores` is an iterable of (weight, is_ground_truth) pairs, one per
    undirected candidate edge.
    """
    weights = np.array([w for w, _ in scores], dtype=np.float64)
    labels = np.array([bool(t) for _, t in scores])
    pos = labels.sum()
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise ValueError("need at least one positive and one negative edge")
    ranks = stats.rankdata(weights)  # average ranks on ties
    u = ranks[labels].sum() - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def cosine_score(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine score undefined for a zero vector")
    return float(np.dot(u, v) / (nu * nv))


def euclidean_distance(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(u) - np.asarray(v)))


def pearson_corr(xs, ys):
    """Product-moment correlation with a two-sided t-distribution p-value."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if len(xs) != len(ys) or len(xs) < 3:
        raise ValueError("need equal-length samples with at least 3 points")
    if np.std(xs) == 0 or np.std(ys) == 0:
        raise ValueError("degenerate variance")
    xc, yc = xs - xs.mean(), ys - ys.mean()
    r = float(np.dot(xc, yc) / (np.linalg.norm(xc) * np.linalg.norm(yc)))
    df = len(xs) - 2
    r_ = min(max(r, -0.999999999999), 0.999999999999)
    t = r_ * np.sqrt(df / (1 - r_ * r_))
    p = float(2 * stats.t.sf(abs(t), df))
    return r, p


def instance_auc(dataset: Dataset, instance: int, mask: np.ndarray,
                 node_map: Optional[np.ndarray] = None) -> Optional[float]:
    """AUC of one instance's mask against its ground truth.

    Candidate edges are the instance graph's edges. Returns None when the
    instance has no positives or no negatives (nothing to rank).
    """
    g, nmap = instance_graph(dataset, instance)
    if node_map is not None:
        nmap = node_map
    gt = instance_ground_truth(dataset, instance, nmap)
    edges = g.edges()
    if len(edges) == 0:
        return None
    truths = gt[edges[:, 0], edges[:, 1]] > 0
    if truths.all() or not truths.any():
        return None
    weights = mask[edges[:, 0], edges[:, 1]]
    return auc_roc(list(zip(weights, truths)))


def dataset_auc(dataset: Dataset, masks: dict, pooled: bool = False) -> float:
    """AUC over `masks` (instance id -> mask matrix).

    Per-instance mean by default. `pooled` ranks every candidate edge of
    every instance in one list; that is the convention for parameterized
    explainers, whose shared scorer is judged on a globally consistent
    ordering rather than within-instance orderings.
    """
    if pooled:
        scores = []
        for instance, mask in masks.items():
            g, nmap = instance_graph(dataset, instance)
            gt = instance_ground_truth(dataset, instance, nmap)
            edges = g.edges()
            truths = gt[edges[:, 0], edges[:, 1]] > 0
            weights = mask[edges[:, 0], edges[:, 1]]
            scores.extend(zip(weights, truths))
        return auc_roc(scores)
    values = []
    for instance, mask in masks.items():
        a = instance_auc(dataset, instance, mask)
        if a is not None:
            values.append(a)
    if not values:
        raise ValueError("no instance had both positive and negative edges")
    return float(np.mean(values))


def binarize_topk(mask: np.ndarray, k: int) -> np.ndarray:
    """Keep the k highest-weight undirected edges as a binary mask."""
    n = mask.shape[0]
    iu, ju = np.nonzero(np.triu(mask))
    if len(iu) == 0 or k <= 0:
        return np.zeros_like(mask)
    order = np.argsort(mask[iu, ju])[::-1][:k]
    out = np.zeros_like(mask)
    out[iu[order], ju[order]] = 1.0
    out[ju[order], iu[order]] = 1.0
    return out


@dataclass
class ShiftReport:
    """Per-instance embedding distances, plus their means."""
    cosine_expl: list = field(default_factory=list)
    cosine_mix: list = field(default_factory=list)
    euclid_expl: list = field(default_factory=list)
    euclid_mix: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "mean_cosine_expl": float(np.mean(self.cosine_expl)),
            "mean_cosine_mix": float(np.mean(self.cosine_mix)),
            "mean_euclid_expl": float(np.mean(self.euclid_expl)),
            "mean_euclid_mix": float(np.mean(self.euclid_mix)),
            "num_instances": len(self.cosine_expl),
        }


def graph_embedding(model: GcnModel, g: Graph, mask=None) -> np.ndarray:
    return gcn_forward(model, g, mask).graph_emb


def shift_report(model: GcnModel, dataset: Dataset, explanations: dict,
                 mixed: dict) -> ShiftReport:
    """Distances between embeddings of G, top-k binarized G*, and G^(mix).

    `explanations` and `mixed` map instance id -> mask matrix / MixedGraph.
    k is the instance's ground-truth edge count.
    """
    if dataset.ground_truth is None:
        raise ValueError("shift report needs ground truth to pick k")
    report = ShiftReport()
    for instance, expl in explanations.items():
        g, nmap = instance_graph(dataset, instance)
        gt = instance_ground_truth(dataset, instance, nmap)
        k = int(np.count_nonzero(np.triu(gt)))
        star = binarize_topk(expl, k)
        h = graph_embedding(model, g)
        h_star = graph_embedding(model, g, star)
        mg = mixed[instance]
        h_mix = graph_embedding(model, mg.graph, mg.mask)
        report.cosine_expl.append(cosine_score(h, h_star))
        report.cosine_mix.append(cosine_score(h, h_mix))
        report.euclid_expl.append(euclidean_distance(h, h_star))
        report.euclid_mix.append(euclidean_distance(h, h_mix))
    return report


def export_embeddings(model: GcnModel, items, path) -> None:
    """Write embeddings as CSV rows: tag, instance id, components.

    `items` is a list of (tag, instance_id, Graph, mask-or-None); tags are
    typically orig / expl / mix. The file feeds an external projection tool.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        h = model.hidden_dim
        writer.writerow(["tag", "instance"] + [f"e{i}" for i in range(h)])
        for tag, instance, g, mask in items:
            emb = graph_embedding(model, g, mask)
            writer.writerow([tag, instance] + [repr(float(x)) for x in emb])
