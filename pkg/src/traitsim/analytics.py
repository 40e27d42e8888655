"""Post-hoc analysis over action logs and content stores.

Covers behavioral action-probability vectors and their k-means clustering,
propagation chain tracing (one chain per root-to-leaf re-share path),
first/second-order temporal dynamics, chain length and per-topic statistics,
and a Mann-Whitney U test (exact enumeration for small samples, tie-corrected
normal approximation otherwise).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .core import (
    ActionDistribution,
    ActionKind,
    ENGAGEMENT_KINDS,
    Order,
    action_category,
)

CATEGORIES = ("post", "reshare", "interact", "inactive")


def action_probability_vector(agent_id: str, log) -> ActionDistribution:
    """Per-category frequencies over the agent's non-follow choices."""
    counts = dict.fromkeys(CATEGORIES, 0)
    for record in log:
        if record.agent != agent_id:
            continue
        category = action_category(record.action.kind)
        if category != "excluded":
            counts[category] += 1
    total = sum(counts.values())
    if total == 0:
        raise ValueError(f"agent {agent_id!r} absent from log")
    return ActionDistribution(*(counts[c] / total for c in CATEGORIES))


# ---------------------------------------------------------------------------
# Clustering


@dataclass
class Clustering:
    k: int
    centroids: list  # of ActionDistribution
    assignments: dict  # agent_id -> cluster index
    inertia: float
    silhouette: float
    inertia_curve: dict = field(default_factory=dict)  # k -> inertia


def _kmeans_once(X: np.ndarray, k: int, rng: np.random.Generator,
                 tol: float = 1e-6, max_iter: int = 300):
    # k-means++ seeding
    centers = [X[rng.integers(len(X))]]
    while len(centers) < k:
        d2 = np.min(((X[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total == 0:
            centers.append(X[rng.integers(len(X))])
        else:
            centers.append(X[rng.choice(len(X), p=d2 / total)])
    C = np.array(centers)
    for _ in range(max_iter):
        labels = np.argmin(((X[:, None, :] - C[None]) ** 2).sum(-1), axis=1)
        new_C = np.array([
            X[labels == j].mean(axis=0) if np.any(labels == j) else C[j]
            for j in range(k)
        ])
        shift = np.abs(new_C - C).max()
        C = new_C
        if shift < tol:
            break
    labels = np.argmin(((X[:, None, :] - C[None]) ** 2).sum(-1), axis=1)
    inertia = float(((X - C[labels]) ** 2).sum())
    return C, labels, inertia


def silhouette_score(X: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over all points (0 for singleton-cluster points)."""
    D = np.sqrt(((X[:, None, :] - X[None]) ** 2).sum(-1))
    present = sorted(set(labels.tolist()))
    if len(present) < 2:
        return 0.0
    scores = np.zeros(len(X))
    for i in range(len(X)):
        same = labels == labels[i]
        n_same = same.sum() - 1
        if n_same == 0:
            scores[i] = 0.0
            continue
        a = D[i, same].sum() / n_same
        b = min(D[i, labels == j].mean() for j in present if j != labels[i])
        scores[i] = (b - a) / max(a, b)
    return float(scores.mean())


def cluster_agents(vectors: dict, k_min: int, k_max: int, seed: int,
                   restarts: int = 50) -> Clustering:
    """Seeded k-means (k-means++ init, 50 restarts) for each k in range;
    the k maximizing the silhouette wins; the inertia curve is kept for
    elbow inspection. Degenerate all-identical input forces k=1 with a
    warning."""
    agent_ids = sorted(vectors)
    if len(agent_ids) < k_max:
        raise ValueError("need at least k_max vectors")
    X = np.array([vectors[a].as_tuple() for a in agent_ids])

    if np.allclose(X, X[0]):
        warnings.warn("all vectors identical; forcing k=1")
        centroid = ActionDistribution(*np.clip(X[0], 0, 1))
        return Clustering(1, [centroid], {a: 0 for a in agent_ids}, 0.0, 0.0,
                          {1: 0.0})

    rng = np.random.default_rng(seed)
    best = None
    curve = {}
    for k in range(k_min, k_max + 1):
        run_best = None
        for _ in range(restarts):
            result = _kmeans_once(X, k, rng)
            if run_best is None or result[2] < run_best[2]:
                run_best = result
        C, labels, inertia = run_best
        curve[k] = inertia
        sil = silhouette_score(X, labels)
        if best is None or sil > best[0]:
            best = (sil, k, C, labels, inertia)
    sil, k, C, labels, inertia = best
    centroids = [_centroid_distribution(c) for c in C]
    assignments = {a: int(l) for a, l in zip(agent_ids, labels)}
    return Clustering(k, centroids, assignments, inertia, sil, curve)


def _centroid_distribution(center: np.ndarray) -> ActionDistribution:
    c = np.clip(center, 0.0, 1.0)
    total = c.sum()
    c = c / total if total > 0 else np.array([0.0, 0.0, 0.0, 1.0])
    return ActionDistribution(*c)


def project_onto_centroids(vectors: dict, centroids: Sequence[ActionDistribution]) -> dict:
    """Nearest-centroid (Euclidean) assignment; ties go to the lowest index."""
    if not centroids:
        raise ValueError("empty centroid list")
    C = np.array([c.as_tuple() for c in centroids])
    assignments = {}
    for agent_id, vec in vectors.items():
        d = ((C - np.array(vec.as_tuple())) ** 2).sum(axis=1)
        assignments[agent_id] = int(np.argmin(d))  # argmin takes lowest index on ties
    return assignments


# ---------------------------------------------------------------------------
# Propagation chains


@dataclass
class Chain:
    root: int
    topic: Optional[str]
    nodes: list  # (position, agent_id, trait_label)
    length: int


def trace_chains(content_store: dict, traits: Optional[dict] = None) -> list:
    """Emit one chain per root-to-leaf re-share path.

    Leaves are re-shares with no child re-share; originals that were never
    re-shared emit nothing. Length counts the posting plus re-sharing events
    on the path, so every chain has length >= 2.
    """
    traits = traits or {}
    children = {}
    for item in content_store.values():
        if item.parent is not None:
            children.setdefault(item.parent, []).append(item.content_id)

    chains = []
    for item in content_store.values():
        if item.parent is None or item.content_id in children:
            continue  # not a leaf re-share
        path = []
        node = item
        seen = set()
        while node is not None:
            if node.content_id in seen:
                raise RuntimeError(f"cycle detected at content {node.content_id}")
            seen.add(node.content_id)
            path.append(node)
            node = content_store[node.parent] if node.parent is not None else None
        path.reverse()
        root = path[0]
        nodes = [(pos, it.author, traits.get(it.author))
                 for pos, it in enumerate(path)]
        chains.append(Chain(root=root.content_id, topic=root.topic,
                            nodes=nodes, length=len(nodes)))
    chains.sort(key=lambda c: (c.root, [n[1] for n in c.nodes]))
    return chains


def order_dynamics(log) -> dict:
    """Per-iteration (pct first-order, pct second-order) over engagements;
    iterations with no engagements map to None."""
    first = {}
    second = {}
    max_iter = 0
    for record in log:
        max_iter = max(max_iter, record.iteration)
        if record.action.kind not in ENGAGEMENT_KINDS:
            continue
        if record.order is Order.FIRST:
            first[record.iteration] = first.get(record.iteration, 0) + 1
        else:
            second[record.iteration] = second.get(record.iteration, 0) + 1
    out = {}
    for it in range(1, max_iter + 1):
        f, s = first.get(it, 0), second.get(it, 0)
        if f + s == 0:
            out[it] = None
        else:
            out[it] = (100.0 * f / (f + s), 100.0 * s / (f + s))
    return out


def content_mix(log) -> dict:
    """Per-iteration cumulative (pct original, pct re-shared) creations."""
    posts = {}
    reshares = {}
    max_iter = 0
    for record in log:
        max_iter = max(max_iter, record.iteration)
        if record.action.kind is ActionKind.POST:
            posts[record.iteration] = posts.get(record.iteration, 0) + 1
        elif record.action.kind is ActionKind.RESHARE:
            reshares[record.iteration] = reshares.get(record.iteration, 0) + 1
    out = {}
    cum_p = cum_r = 0
    for it in range(1, max_iter + 1):
        cum_p += posts.get(it, 0)
        cum_r += reshares.get(it, 0)
        total = cum_p + cum_r
        out[it] = None if total == 0 else (100.0 * cum_p / total,
                                           100.0 * cum_r / total)
    return out


@dataclass
class ChainLengthTable:
    counts: dict  # length -> count
    percentages: dict  # length -> pct
    mean: float
    max: int
    total: int


def chain_length_table(chains: Sequence[Chain]) -> ChainLengthTable:
    counts = {}
    for chain in chains:
        counts[chain.length] = counts.get(chain.length, 0) + 1
    total = sum(counts.values())
    if total == 0:
        return ChainLengthTable({}, {}, 0.0, 0, 0)
    percentages = {l: 100.0 * c / total for l, c in counts.items()}
    mean = sum(l * c for l, c in counts.items()) / total
    return ChainLengthTable(counts, percentages, mean, max(counts), total)


def per_topic_chain_stats(chains: Sequence[Chain]) -> dict:
    """topic -> (mean chain length, percentage share of all chains)."""
    by_topic = {}
    for chain in chains:
        by_topic.setdefault(chain.topic, []).append(chain.length)
    total = sum(len(v) for v in by_topic.values())
    return {
        topic: (sum(lengths) / len(lengths), 100.0 * len(lengths) / total)
        for topic, lengths in by_topic.items()
    }


# ---------------------------------------------------------------------------
# Mann-Whitney U

EXACT_LIMIT = 20  # combined size above which the normal approximation is used


def _rank(values: Sequence[float]) -> list:
    """Fractional ranks (ties get the mean rank)."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for idx in order[i:j + 1]:
            ranks[idx] = mean_rank
        i = j + 1
    return ranks


def _u_statistic(combined: Sequence[float], idx_a: Sequence[int]) -> float:
    ranks = _rank(combined)
    n_a = len(idx_a)
    r_a = sum(ranks[i] for i in idx_a)
    return r_a - n_a * (n_a + 1) / 2


def mann_whitney_u(sample_a: Sequence[float], sample_b: Sequence[float]):
    """Two-sided Mann-Whitney U; returns (U of sample_a, p).

    Exact rank-split enumeration when n_a + n_b <= 20, tie-corrected normal
    approximation (with continuity correction) otherwise.
    """
    if not sample_a or not sample_b:
        raise ValueError("both samples must be non-empty")
    n_a, n_b = len(sample_a), len(sample_b)
    combined = list(sample_a) + list(sample_b)
    u_a = _u_statistic(combined, range(n_a))

    if n_a + n_b <= EXACT_LIMIT:
        n = n_a + n_b
        le = ge = total = 0
        for idx in combinations(range(n), n_a):
            u = _u_statistic(combined, idx)
            total += 1
            if u <= u_a + 1e-12:
                le += 1
            if u >= u_a - 1e-12:
                ge += 1
        p = min(1.0, 2.0 * min(le / total, ge / total))
        return u_a, p

    # Normal approximation with tie correction.
    ranks = _rank(combined)
    n = n_a + n_b
    tie_counts = {}
    for v in combined:
        tie_counts[v] = tie_counts.get(v, 0) + 1
    tie_term = sum(t ** 3 - t for t in tie_counts.values())
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    if var == 0:
        return u_a, 1.0
    mean = n_a * n_b / 2.0
    z = (abs(u_a - mean) - 0.5) / math.sqrt(var)
    z = max(z, 0.0)
    p = min(1.0, math.erfc(z / math.sqrt(2)))
    return u_a, p
