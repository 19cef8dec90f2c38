"""Motion-forecasting metrics on Cartesian-converted trajectories.

For each agent and each k in {1, 6}: minADE (best mean per-step L2 error
among the top-k most probable modes), minFDE (best endpoint error), miss
rate (endpoint error of the best mode above 2 meters), and the Brier
variant b-minFDE = minFDE + (1 - pi)^2 where pi is the probability assigned
to the minFDE-achieving mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .bundle import TrajectoryBundle

MISS_THRESHOLD_M = 2.0
DEFAULT_KS = (1, 6)

METRIC_NAMES = ("minADE", "minFDE", "MR", "b_minFDE")


def metric_columns(ks=DEFAULT_KS):
    return [f"{name}_{k}" for k in ks for name in METRIC_NAMES]


def _gt_xy(ground_truth):
    gt = np.asarray(ground_truth)
    r, theta = gt[..., 0], gt[..., 1]
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def agent_metrics(pred_xy, probs, gt_xy, ks=DEFAULT_KS):
    """Metrics for one agent: ``pred_xy [K,T,2]``, ``probs [K]``, ``gt_xy [T,2]``."""
    n_modes = pred_xy.shape[0]
    order = np.argsort(-np.asarray(probs), kind="stable")
    dist = np.linalg.norm(pred_xy - gt_xy[None], axis=-1)        # [K,T]
    out = {}
    for k in ks:
        if k > n_modes:
            raise ValueError(f"k={k} exceeds the {n_modes} available modes")
        top = order[:k]
        ade = dist[top].mean(axis=1)
        fde = dist[top][:, -1]
        best = int(fde.argmin())
        min_fde = float(fde[best])
        pi = float(np.asarray(probs)[top[best]])
        out[f"minADE_{k}"] = float(ade.min())
        out[f"minFDE_{k}"] = min_fde
        out[f"MR_{k}"] = float(min_fde > MISS_THRESHOLD_M)
        out[f"b_minFDE_{k}"] = min_fde + (1.0 - pi) ** 2
    return out


def compute_metrics(bundle: TrajectoryBundle, ground_truth, ks=DEFAULT_KS,
                    scene_id=""):
    """Per-agent metric rows for one scene's bundle."""
    pred_xy = bundle.cartesian()                                 # [K,N,T,2]
    gt_xy = _gt_xy(ground_truth)                                 # [N,T,2]
    probs = bundle.prob_array
    rows = []
    for a in range(pred_xy.shape[1]):
        row = {"scene_id": scene_id, "agent": a}
        row.update(agent_metrics(pred_xy[:, a], probs[:, a], gt_xy[a], ks))
        rows.append(row)
    return rows


@dataclass
class MetricReport:
    rows: list = field(default_factory=list)
    ks: tuple = DEFAULT_KS

    @property
    def aggregate(self) -> dict:
        cols = metric_columns(self.ks)
        if not self.rows:
            return {c: float("nan") for c in cols}
        return {c: float(np.mean([r[c] for r in self.rows])) for c in cols}

    def __getitem__(self, key):
        return self.aggregate[key]

    def write_csv(self, path):
        """One row per (scene, agent) plus a final aggregate row."""
        cols = ["scene_id", "agent"] + metric_columns(self.ks)
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=cols)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({c: row.get(c, "") for c in cols})
            agg = {"scene_id": "aggregate", "agent": ""}
            agg.update(self.aggregate)
            writer.writerow(agg)


def constant_velocity_bundle(scene) -> TrajectoryBundle:
    """Single-mode baseline: extrapolate each target's current velocity.

    The current velocity is read from the motion-state features (the last
    valid backward difference), exactly what the model itself observes.
    """
    t_f = scene.future_steps
    steps = (np.arange(1, t_f + 1) * scene.dt)[None, :]          # [1,T]
    trajs = []
    for a in scene.aoi:
        state = scene.agents[a, -1]
        speed, c, s = state[3], state[4], state[5]
        vx, vy = speed * c, speed * s
        x = steps * vx
        y = steps * vy
        r = np.hypot(x, y)
        theta = np.where(r > 0, np.arctan2(y, x), 0.0)
        trajs.append(np.stack([r, theta], axis=-1))              # [1,T,2]
    traj = np.stack(trajs, axis=1)                               # [1,N,T,2]
    probs = np.ones((1, traj.shape[1]))
    return TrajectoryBundle(traj, probs, stage="baseline")


def baseline_report(scenes, ks=(1,)) -> MetricReport:
    """Constant-velocity metrics over a scene split (k=1: single mode)."""
    report = MetricReport(ks=ks)
    for scene in scenes:
        report.rows.extend(
            compute_metrics(constant_velocity_bundle(scene), scene.ground_truth,
                            ks=ks, scene_id=scene.scene_id)
        )
    return report
