"""K-means consolidation of multi-model trajectory predictions.

Sub-model bundles for the same scene are pooled (e.g. 7 models x 6 modes =
42 trajectories per agent), clustered with seeded k-means++ and Lloyd
iterations on the flattened Cartesian waypoints (or endpoints only), and
averaged within each cluster. Cluster probability is the normalized sum of
member probabilities; output modes are sorted by descending probability.
"""

from __future__ import annotations

import numpy as np

from .bundle import TrajectoryBundle


def kmeans(points, k, rng, max_iter=100):
    """Seeded k-means++ plus Lloyd iterations; returns (labels, centers).

    An empty cluster is re-seeded from the point farthest from its assigned
    center. Deterministic given the generator state.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k:
        raise ValueError(f"k-means needs at least {k} points, got {n}")

    # k-means++ seeding
    centers = np.empty((k, points.shape[1]))
    centers[0] = points[rng.integers(n)]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = points[idx]
        d2 = np.minimum(d2, ((points - centers[i]) ** 2).sum(axis=1))

    labels = np.full(n, -1)
    for _ in range(max_iter):
        dist = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)  # [n,k]
        new_labels = dist.argmin(axis=1)
        for c in range(k):
            members = new_labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
            else:
                farthest = int(dist[np.arange(n), new_labels].argmax())
                centers[c] = points[farthest]
                new_labels[farthest] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers


def kmeans_ensemble(bundles, k=6, seed=0, space="full") -> TrajectoryBundle:
    """Consolidate per-model bundles into a k-mode bundle per agent.

    ``bundles`` are same-scene predictions (detached) with identical shapes.
    ``space`` selects the clustering distance: ``"full"`` flattens whole
    Cartesian trajectories, ``"endpoint"`` uses endpoints only. Raises
    ``ValueError`` when fewer than ``k`` trajectories are supplied.
    """
    if not bundles:
        raise ValueError("no bundles to ensemble")
    if space not in ("full", "endpoint"):
        raise ValueError(f"unknown clustering space {space!r}")
    rng = np.random.default_rng(seed)
    all_xy = np.concatenate([b.cartesian() for b in bundles], axis=0)   # [M,N,T,2]
    all_p = np.concatenate([b.prob_array for b in bundles], axis=0)     # [M,N]
    m, n_agents, t_f, _ = all_xy.shape
    if m < k:
        raise ValueError(f"need at least {k} trajectories per agent, got {m}")

    out_traj = np.zeros((k, n_agents, t_f, 2))
    out_prob = np.zeros((k, n_agents))
    for a in range(n_agents):
        xy = all_xy[:, a]                                               # [M,T,2]
        feats = xy[:, -1, :] if space == "endpoint" else xy.reshape(m, t_f * 2)
        labels, _ = kmeans(feats, k, rng)
        probs = all_p[:, a]
        mean_xy = np.zeros((k, t_f, 2))
        mass = np.zeros(k)
        for c in range(k):
            members = labels == c
            mean_xy[c] = xy[members].mean(axis=0)
            mass[c] = probs[members].sum()
        order = np.argsort(-mass, kind="stable")
        mean_xy = mean_xy[order]
        mass = mass[order] / mass.sum()
        r = np.hypot(mean_xy[..., 0], mean_xy[..., 1])
        theta = np.where(r > 0, np.arctan2(mean_xy[..., 1], mean_xy[..., 0]), 0.0)
        out_traj[:, a] = np.stack([r, theta], axis=-1)
        out_prob[:, a] = mass
    return TrajectoryBundle(out_traj, out_prob, stage="final")
