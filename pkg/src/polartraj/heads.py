"""Trajectory decoding: multi-modal proposals and iterative refinement.

The proposal decoder cross-attends learned mode queries (offset by the
target agent's context feature) to the scene context through vanilla
transformer blocks and emits per-mode waypoints and probabilities. Polar
waypoints come out as radius through softplus and angle through atan2 of an
emitted (sin, cos) pair, so the bundle invariants hold by construction.

Each refinement iteration re-encodes the incoming trajectories, attends
back to the scene context with relative-embedding layers keyed on the
trajectory endpoints, and emits residual waypoint offsets (the offset head
starts at zero, so an untrained iteration is exactly the identity) plus
re-predicted probabilities.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .bundle import STAGE_PROPOSAL, TrajectoryBundle, refined_stage
from .encoder import SceneContext
from .nn import MLP, Module, parameter
from .ret import RETLayer


def _polar_from_xy(x, y):
    r = ad.tsqrt(x * x + y * y + 1e-18)
    theta = ad.wrap_angle(ad.atan2(y, x))
    return r, theta


def extract_endpoints(bundle: TrajectoryBundle) -> np.ndarray:
    """Last waypoint per mode/agent as polar ``[K, N_aoi, 2]``."""
    return bundle.endpoints()


class ProposalDecoder(Module):
    def __init__(self, config, rng):
        super().__init__()
        dim = config.hidden_dim
        self.future_steps = config.future_steps
        self.coordinate_mode = config.coordinate_mode
        self.mode_queries = parameter(rng.normal(0.0, 1.0, size=(config.num_modes, dim)))
        self.layers = [
            RETLayer(dim, rng, n_heads=config.num_heads, p_drop=config.dropout,
                     relative=False, relative_self=False)
            for _ in range(config.decoder_layers)
        ]
        per_step = 3 if config.coordinate_mode == "polar" else 2
        self.traj_head = MLP([dim, dim, config.future_steps * per_step], rng)
        self.prob_head = MLP([dim, dim, 1], rng)

    def forward(self, ctx: SceneContext, target_rows, rng=None) -> TrajectoryBundle:
        k = self.mode_queries.shape[0]
        t_f = self.future_steps
        trajs, probs = [], []
        for row in target_rows:
            x = self.mode_queries + ctx.features[row]            # [K,C]
            for layer in self.layers:
                x = layer(x, ctx.features, key_mask=ctx.mask, rng=rng)
            raw = self.traj_head(x)                              # [K, T_f*per]
            if self.coordinate_mode == "polar":
                raw = ad.reshape(raw, (k, t_f, 3))
                r = ad.softplus(raw[:, :, 0])
                theta = ad.wrap_angle(ad.atan2(raw[:, :, 1], raw[:, :, 2]))
            else:
                raw = ad.reshape(raw, (k, t_f, 2))
                r, theta = _polar_from_xy(raw[:, :, 0], raw[:, :, 1])
            trajs.append(ad.stack([r, theta], axis=2))           # [K,T_f,2]
            probs.append(ad.masked_softmax(ad.reshape(self.prob_head(x), (k,)), None, 0))
        return TrajectoryBundle(
            trajectories=ad.stack(trajs, axis=1),                # [K,N_aoi,T_f,2]
            probabilities=ad.stack(probs, axis=1),               # [K,N_aoi]
            stage=STAGE_PROPOSAL,
        )


class RefinementModule(Module):
    """One refinement iteration; see the module docstring."""

    def __init__(self, config, rng):
        super().__init__()
        dim = config.hidden_dim
        self.future_steps = config.future_steps
        self.coordinate_mode = config.coordinate_mode
        rel_mode = "cartesian" if config.coordinate_mode == "cartesian-mod" else "polar"
        self.q_encoder = MLP([config.future_steps * 2, dim, dim], rng)
        self.layers = [
            RETLayer(dim, rng, n_heads=config.num_heads, p_drop=config.dropout,
                     rel_mode=rel_mode,
                     relative=config.use_relative_transformer,
                     relative_self=config.ret_relative_self_attention)
            for _ in range(config.refine_ret_layers)
        ]
        self.offset_head = MLP([dim, dim, config.future_steps * 2], rng, zero_init_out=True)
        self.prob_head = MLP([dim, dim, 1], rng)

    def forward(self, bundle: TrajectoryBundle, ctx: SceneContext, iteration: int,
                rng=None) -> TrajectoryBundle:
        traj = bundle.trajectories
        k, n_aoi, t_f, _ = traj.shape
        ctx_kp = ctx.keypoints
        trajs, probs = [], []
        for a in range(n_aoi):
            traj_a = traj[:, a]                                  # [K,T_f,2]
            r = traj_a[:, :, 0]
            theta = traj_a[:, :, 1]
            if self.coordinate_mode == "polar":
                flat = ad.reshape(traj_a, (k, t_f * 2))
            else:
                x = r * ad.tcos(theta)
                y = r * ad.tsin(theta)
                flat = ad.reshape(ad.stack([x, y], axis=2), (k, t_f * 2))
            q = self.q_encoder(flat)                             # [K,C]
            endpoints = traj_a[:, -1, :]                         # [K,2] polar, in-graph
            for layer in self.layers:
                q = layer(q, ctx.features, q_kp=endpoints, kv_kp=ctx_kp,
                          key_mask=ctx.mask, rng=rng)
            off = ad.reshape(self.offset_head(q), (k, t_f, 2))
            if self.coordinate_mode == "polar":
                r_new = ad.relu(r + off[:, :, 0])
                theta_new = ad.wrap_angle(theta + off[:, :, 1])
            else:
                x_new = r * ad.tcos(theta) + off[:, :, 0]
                y_new = r * ad.tsin(theta) + off[:, :, 1]
                r_new, theta_new = _polar_from_xy(x_new, y_new)
            trajs.append(ad.stack([r_new, theta_new], axis=2))
            probs.append(ad.masked_softmax(ad.reshape(self.prob_head(q), (k,)), None, 0))
        return TrajectoryBundle(
            trajectories=ad.stack(trajs, axis=1),
            probabilities=ad.stack(probs, axis=1),
            stage=refined_stage(iteration),
        )
