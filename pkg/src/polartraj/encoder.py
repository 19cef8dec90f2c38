"""Scene context encoding: lanes, lane changes, agent histories, interaction.

Lane geometry goes through a PointNet-style encoder (per-point MLP then
masked max-pool), the adjacent-point difference features through a second
one with separate weights, and the two are fused by a linear map. Agent
histories run through a causal gated scan (a diagonal state-space
recurrence with an input-dependent write gate; a minimal gated recurrent
cell is available as an ablation). Map and agent rows are then concatenated
(map first, agents after) and refined with stacked relative-embedding
transformer layers whose keypoints are lane midpoints and agent current
positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geometry import polar_to_cart
from .nn import MLP, LayerNorm, Linear, Module, parameter
from .ret import RETLayer
from .scene import Scene, lane_change


def lane_input_features(scene: Scene, coordinate_mode: str):
    """Per-point lane features: polar ``(r, cos, sin)`` or Cartesian ``(x, y)``."""
    if coordinate_mode == "polar":
        return scene.lanes
    return scene.lane_points_xy()


def lane_change_features(scene: Scene, coordinate_mode: str):
    """Adjacent-point differences with the mode's featureization."""
    if coordinate_mode == "polar":
        return lane_change(scene.lanes, scene.lane_mask)
    xy = scene.lane_points_xy()
    d = xy[:, 1:] - xy[:, :-1]
    dmask = scene.lane_mask[:, 1:] & scene.lane_mask[:, :-1]
    d[~dmask] = 0.0
    return d, dmask


def agent_input_features(scene: Scene, coordinate_mode: str):
    """Per-step motion states: 10 polar channels or 7 Cartesian ones."""
    if coordinate_mode == "polar":
        return scene.agents
    a = scene.agents
    parts = []
    for base in (0, 3, 6):  # position, velocity, acceleration triples
        mag = a[..., base]
        x = mag * a[..., base + 1]
        y = mag * a[..., base + 2]
        parts.extend([x, y])
    parts.append(a[..., 9])
    return np.stack(parts, axis=-1)


def feature_widths(coordinate_mode: str):
    """(lane, lane-change, agent) input channel counts for the mode."""
    if coordinate_mode == "polar":
        return 3, 3, 10
    return 2, 2, 7


class LaneEncoder(Module):
    """PointNet over lane points: shared per-point MLP, masked max-pool."""

    def __init__(self, in_dim, dim, rng):
        super().__init__()
        self.point_mlp = MLP([in_dim, dim, dim], rng)

    def forward(self, points, mask):
        """``points [N, L, Cin]`` with ``mask [N, L]`` -> ``([N, C], valid [N])``.

        Lanes with no valid point produce a zero row and are flagged invalid.
        """
        h = self.point_mlp(Tensor(points))                      # [N,L,C]
        pooled = ad.masked_max(h, mask[:, :, None], axis=1)     # [N,C]
        return pooled, mask.any(axis=1)


class MapFusion(Module):
    """Channel-concat of lane and lane-change features, linearly adjusted."""

    def __init__(self, dim, rng):
        super().__init__()
        self.proj = Linear(2 * dim, dim, rng)

    def forward(self, f_m, f_dm):
        if f_m.shape[0] != f_dm.shape[0]:
            raise ad.ShapeError(
                f"map fusion: row counts differ: {f_m.shape} vs {f_dm.shape}"
            )
        return self.proj(ad.concat([f_m, f_dm], axis=1))


class GatedScanBlock(Module):
    """Residual block around a causal per-channel gated recurrence.

    ``cell="ssm"``: ``h_t = a * h_{t-1} + b_t * v_t`` with a learned stable
    decay ``a = sigmoid(a_logit)`` and input-dependent write gate ``b_t``.
    ``cell="gru"``: minimal gated recurrent cell
    ``h_t = (1 - b_t) * h_{t-1} + b_t * v_t``. Invalid timesteps carry the
    state through unchanged, which makes masking a prefix exactly
    equivalent to truncating it.
    """

    def __init__(self, dim, rng, cell="ssm"):
        super().__init__()
        if cell not in ("ssm", "gru"):
            raise ValueError(f"unknown scan cell {cell!r}")
        self.cell = cell
        self.norm = LayerNorm(dim)
        self.in_proj = Linear(dim, dim, rng)
        self.gate_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)
        self.out_gate = Linear(dim, dim, rng)
        if cell == "ssm":
            self.decay_logit = parameter(np.full(dim, 2.0))

    def forward(self, x, step_mask):
        """``x [T, N, C]``; ``step_mask [T, N, 1]`` float validity."""
        t_steps, n, c = x.shape
        u = self.norm(x)
        v = ad.ttanh(self.in_proj(u))
        b = ad.sigmoid(self.gate_proj(u))
        if self.cell == "ssm":
            decay = ad.sigmoid(self.decay_logit)                 # [C]
        h = Tensor(np.zeros((n, c)))
        keep = 1.0 - step_mask
        states = []
        for t in range(t_steps):
            if self.cell == "ssm":
                upd = decay * h + b[t] * v[t]
            else:
                upd = (1.0 - b[t]) * h + b[t] * v[t]
            h = step_mask[t] * upd + keep[t] * h
            states.append(h)
        hseq = ad.stack(states, axis=0)                          # [T,N,C]
        y = self.out_proj(hseq) * ad.sigmoid(self.out_gate(u))
        return x + y


class AgentEncoder(Module):
    """Causal history encoder: per-step input MLP + stacked gated scans.

    The agent feature is the residual stream at the last valid timestep;
    agents with no valid step get a zero feature and an invalid flag.
    """

    def __init__(self, in_dim, dim, rng, blocks=3, cell="ssm"):
        super().__init__()
        self.in_proj = MLP([in_dim, dim, dim], rng)
        self.blocks = [GatedScanBlock(dim, rng, cell) for _ in range(blocks)]
        self.out_norm = LayerNorm(dim)

    def forward(self, feats, mask):
        """``feats [N, T, Cin]``, ``mask [N, T]`` -> ``([N, C], valid [N])``."""
        n, t_steps, _ = feats.shape
        x = self.in_proj(Tensor(feats))                         # [N,T,C]
        x = ad.transpose(x, (1, 0, 2))                          # [T,N,C]
        step_mask = mask.T[:, :, None].astype(np.float64)
        for block in self.blocks:
            x = block(x, step_mask)
        valid = mask.any(axis=1)
        rows = []
        zero = Tensor(np.zeros(x.shape[2]))
        for i in range(n):
            if valid[i]:
                t_last = int(np.nonzero(mask[i])[0][-1])
                rows.append(x[t_last, i])
            else:
                rows.append(zero)
        out = self.out_norm(ad.stack(rows, axis=0))             # [N,C]
        return out, valid


@dataclass
class SceneContext:
    """Fused per-element features: map rows first, then agent rows."""

    features: Tensor          # [N_m + N_a, C]
    keypoints: np.ndarray     # [N_m + N_a, 2] polar (r, theta)
    mask: np.ndarray          # [N_m + N_a] bool
    num_lanes: int
    num_agents: int

    def keypoints_xy(self):
        x, y = polar_to_cart(self.keypoints[:, 0], self.keypoints[:, 1])
        return np.stack([x, y], axis=-1)


class SceneEncoder(Module):
    """Full context encoder for one scene."""

    def __init__(self, config, rng):
        super().__init__()
        dim = config.hidden_dim
        lane_c, dlane_c, agent_c = feature_widths(config.coordinate_mode)
        self.coordinate_mode = config.coordinate_mode
        self.use_lane_change = config.use_lane_change
        self.lane_enc = LaneEncoder(lane_c, dim, rng)
        if config.use_lane_change:
            self.dlane_enc = LaneEncoder(dlane_c, dim, rng)
            self.fuse = MapFusion(dim, rng)
        self.agent_enc = AgentEncoder(
            agent_c, dim, rng, blocks=config.agent_encoder_blocks, cell=config.agent_encoder
        )
        rel_mode = "cartesian" if config.coordinate_mode == "cartesian-mod" else "polar"
        self.layers = [
            RETLayer(
                dim, rng,
                n_heads=config.num_heads,
                p_drop=config.dropout,
                rel_mode=rel_mode,
                relative=config.use_relative_transformer,
                relative_self=config.ret_relative_self_attention,
            )
            for _ in range(config.encoder_ret_layers)
        ]

    def forward(self, scene: Scene, rng=None) -> SceneContext:
        f_m, lane_valid = self.lane_enc(
            lane_input_features(scene, self.coordinate_mode), scene.lane_mask
        )
        if self.use_lane_change:
            d_feats, d_mask = lane_change_features(scene, self.coordinate_mode)
            f_dm, _ = self.dlane_enc(d_feats, d_mask)
            f_m = self.fuse(f_m, f_dm)
        f_a, agent_valid = self.agent_enc(
            agent_input_features(scene, self.coordinate_mode), scene.agent_mask
        )

        features = ad.concat([f_m, f_a], axis=0)            # map rows then agent rows
        lane_r, lane_th, _ = scene.lane_centerpoints()
        agent_r, agent_th, _ = scene.agent_centerpoints()
        keypoints = np.stack(
            [np.concatenate([lane_r, agent_r]), np.concatenate([lane_th, agent_th])],
            axis=-1,
        )
        mask = np.concatenate([lane_valid, agent_valid])

        for layer in self.layers:
            features = layer(
                features, features, q_kp=keypoints, kv_kp=keypoints,
                key_mask=mask, query_mask=mask, rng=rng,
            )
        return SceneContext(
            features=features,
            keypoints=keypoints,
            mask=mask,
            num_lanes=scene.num_lanes,
            num_agents=scene.num_agents,
        )
