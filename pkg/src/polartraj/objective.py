"""Training losses: winner-take-all regression + mode classification.

Per stage (proposal and each refinement iteration) the winning mode of each
agent is the one with the smallest mean Cartesian displacement from the
ground truth (ties break to the lowest mode index; the selection itself is
not differentiated). The winner's waypoints receive a smooth-L1 regression
loss in both coordinate systems: Cartesian on (x, y), polar on the radius
difference and the wrapped angle difference. Mode probabilities receive a
cross-entropy loss on the winning index. All terms are weighted equally and
the per-branch structure is configurable (polar / cartesian / both).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bundle import TrajectoryBundle


@dataclass
class LossReport:
    """Total loss tensor plus a float breakdown per (stage, coordinate, kind)."""

    total: Tensor
    terms: dict = field(default_factory=dict)       # "stage/coordinate/kind" -> float
    winners: dict = field(default_factory=dict)     # stage -> [N_aoi] winning modes

    @property
    def total_value(self) -> float:
        return float(self.total.data)

    def row(self) -> dict:
        """Flat dict for JSONL logging."""
        out = {"total": self.total_value}
        out.update(self.terms)
        out.update({f"winner/{k}": v.tolist() for k, v in self.winners.items()})
        return out


def _gt_xy(ground_truth):
    r, theta = ground_truth[..., 0], ground_truth[..., 1]
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


def winner_take_all(bundle: TrajectoryBundle, ground_truth) -> np.ndarray:
    """Winning mode per agent: argmin of mean Cartesian displacement.

    Ties resolve to the lowest mode index. Selection is a constant for
    differentiation (standard stop-gradient through the argmin).
    """
    pred_xy = bundle.cartesian()                   # [K,N,T,2]
    gt = _gt_xy(np.asarray(ground_truth))          # [N,T,2]
    disp = np.linalg.norm(pred_xy - gt[None], axis=-1).mean(axis=-1)  # [K,N]
    return disp.argmin(axis=0)


def _select_winner(tensor_knx, winners):
    """Differentiable gather of the winning mode: ``[K,N,...] -> [N,...]``."""
    k, n = tensor_knx.shape[0], tensor_knx.shape[1]
    onehot = np.zeros((k, n) + (1,) * (tensor_knx.ndim - 2))
    for a, w in enumerate(winners):
        onehot[w, a] = 1.0
    return (tensor_knx * onehot).sum(axis=0)


def regression_loss(bundle: TrajectoryBundle, ground_truth, winners,
                    coordinate: str, beta: float = 1.0) -> Tensor:
    """Smooth-L1 on the winning mode, averaged over agents/timesteps/dims."""
    sel = _select_winner(bundle.trajectories, winners)           # [N,T,2] polar
    r = sel[:, :, 0]
    theta = sel[:, :, 1]
    gt = np.asarray(ground_truth)
    if coordinate == "polar":
        dr = r - gt[..., 0]
        dth = ad.wrap_angle(theta - gt[..., 1])
        err = ad.stack([dr, dth], axis=2)
    elif coordinate == "cartesian":
        gt_xy = _gt_xy(gt)
        dx = r * ad.tcos(theta) - gt_xy[..., 0]
        dy = r * ad.tsin(theta) - gt_xy[..., 1]
        err = ad.stack([dx, dy], axis=2)
    else:
        raise ValueError(f"unknown coordinate {coordinate!r}")
    return ad.smooth_l1(err, beta).mean()


def classification_loss(probabilities, winners) -> Tensor:
    """Mean over agents of ``-log p[winner]``."""
    probs = probabilities if isinstance(probabilities, Tensor) else Tensor(probabilities)
    sel = _select_winner(probs, winners)                         # [N]
    return -ad.tlog(sel).mean()


def stage_sequence(proposal, refined, config):
    """Bundles contributing loss terms, as ``(stage name, bundle)`` pairs."""
    stages = [(proposal.stage, proposal)]
    if refined:
        contributing = refined if config.sum_refine_losses else [refined[-1]]
        stages.extend((b.stage, b) for b in contributing)
    return stages


def total_loss(proposal: TrajectoryBundle, refined, ground_truth, config) -> LossReport:
    """Equal-weight sum over stages, coordinate branches, and reg/cls terms."""
    branches = {
        "polar": ("polar",),
        "cartesian": ("cartesian",),
        "both": ("polar", "cartesian"),
    }[config.loss_branches]
    beta = config.smooth_l1_beta
    terms = {}
    winners = {}
    pieces = []
    for stage_name, bundle in stage_sequence(proposal, refined, config):
        w = winner_take_all(bundle, ground_truth)
        winners[stage_name] = w
        cls = classification_loss(bundle.probabilities, w)
        for coord in branches:
            reg = regression_loss(bundle, ground_truth, w, coord, beta)
            terms[f"{stage_name}/{coord}/reg"] = float(reg.data)
            terms[f"{stage_name}/{coord}/cls"] = float(cls.data)
            pieces.append(reg)
            pieces.append(cls)
    total = pieces[0]
    for p in pieces[1:]:
        total = total + p
    return LossReport(total=total, terms=terms, winners=winners)
