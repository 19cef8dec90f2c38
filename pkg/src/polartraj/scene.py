"""Vectorized scene data model in agent-centric polar coordinates.

A :class:`RawScene` holds world-frame Cartesian geometry as produced by the
synthetic generator. :func:`normalize_to_agent_frame` re-centers it on one
target agent (current position at the origin, heading along theta = 0) and
converts everything to the polar network form. A normalized :class:`Scene`
carries:

* ``lanes``      -- ``[N_m, L, 3]``   per-point ``(r, cos, sin)`` features
* ``agents``     -- ``[N_a, T_h, 10]`` per-step motion state: position
  ``(r, cos, sin)``, velocity ``(speed, cos, sin)`` and acceleration
  ``(magnitude, cos, sin)`` as direction/magnitude of the local vector,
  plus a validity flag
* ``ground_truth`` -- ``[N_aoi, T_f, 2]`` future ``(r, theta)`` waypoints

Units are meters, radians and seconds throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import cart_to_polar, polar_to_cart, rotate_xy, wrap_angle

C_LANE = 3
C_AGENT = 10

SCENARIO_KINDS = ("straight", "turn-left", "turn-right", "lane-change", "mixed")


class SceneValidationError(ValueError):
    """A scene violates one of its structural invariants."""


@dataclass(frozen=True)
class Frame:
    """Pose a scene was normalized to: world position + heading of the target."""

    x: float
    y: float
    heading: float

    def to_local(self, xy):
        """World Cartesian -> target-centric Cartesian."""
        xy = np.asarray(xy, dtype=np.float64)
        lx, ly = rotate_xy(xy[..., 0] - self.x, xy[..., 1] - self.y, -self.heading)
        return np.stack([lx, ly], axis=-1)

    def to_world(self, xy):
        """Target-centric Cartesian -> world Cartesian."""
        xy = np.asarray(xy, dtype=np.float64)
        wx, wy = rotate_xy(xy[..., 0], xy[..., 1], self.heading)
        return np.stack([wx + self.x, wy + self.y], axis=-1)

    def rotate_to_local(self, vec):
        """Rotate a world vector (velocity etc.) into the local frame."""
        vec = np.asarray(vec, dtype=np.float64)
        vx, vy = rotate_xy(vec[..., 0], vec[..., 1], -self.heading)
        return np.stack([vx, vy], axis=-1)


@dataclass
class RawScene:
    """World-frame Cartesian scene straight out of the generator."""

    lane_xy: np.ndarray       # [N_m, L, 2]
    lane_mask: np.ndarray     # [N_m, L] bool
    agent_xy: np.ndarray      # [N_a, T_h, 2]
    agent_vel: np.ndarray     # [N_a, T_h, 2]
    agent_acc: np.ndarray     # [N_a, T_h, 2]
    agent_mask: np.ndarray    # [N_a, T_h] bool
    agent_heading: np.ndarray  # [N_a] heading at the current step
    future_xy: np.ndarray     # [N_a, T_f, 2]
    aoi: list[int]
    dt: float
    kind: str = "unknown"
    seed: int = 0


@dataclass
class Scene:
    """Agent-centric polar scene; see the module docstring for layouts."""

    lanes: np.ndarray
    lane_mask: np.ndarray
    agents: np.ndarray
    agent_mask: np.ndarray
    aoi: list[int]
    ground_truth: np.ndarray
    frame: Frame
    dt: float
    kind: str = "unknown"
    scene_id: str = ""

    @property
    def num_lanes(self):
        return self.lanes.shape[0]

    @property
    def num_agents(self):
        return self.agents.shape[0]

    @property
    def history_steps(self):
        return self.agents.shape[1]

    @property
    def future_steps(self):
        return self.ground_truth.shape[1]

    def validate(self):
        """Raise :class:`SceneValidationError` on any invariant violation."""
        n_m, L, cm = self.lanes.shape
        n_a, t_h, ca = self.agents.shape
        if cm != C_LANE:
            raise SceneValidationError(f"lane features must have {C_LANE} channels, got {cm}")
        if ca != C_AGENT:
            raise SceneValidationError(f"agent features must have {C_AGENT} channels, got {ca}")
        if self.lane_mask.shape != (n_m, L):
            raise SceneValidationError("lane_mask shape does not match lanes")
        if self.agent_mask.shape != (n_a, t_h):
            raise SceneValidationError("agent_mask shape does not match agents")
        if len(set(self.aoi)) != len(self.aoi):
            raise SceneValidationError("agent-of-interest indices must be distinct")
        for idx in self.aoi:
            if not 0 <= idx < n_a:
                raise SceneValidationError(f"agent-of-interest index {idx} out of range")
            if not self.agent_mask[idx, -1]:
                raise SceneValidationError(
                    f"agent of interest {idx} invalid at the current timestep"
                )
        if self.ground_truth.shape != (len(self.aoi), self.ground_truth.shape[1], 2):
            raise SceneValidationError("ground_truth must be [N_aoi, T_f, 2]")
        for name, radii in (
            ("lane", self.lanes[..., 0][self.lane_mask]),
            ("agent position", self.agents[..., 0][self.agent_mask]),
            ("agent speed", self.agents[..., 3][self.agent_mask]),
            ("agent acceleration", self.agents[..., 6][self.agent_mask]),
            ("ground-truth", self.ground_truth[..., 0].ravel()),
        ):
            if radii.size and radii.min() < 0:
                raise SceneValidationError(f"invariant violated: {name} radius must be >= 0")
        for name, cos_v, sin_v in (
            ("lane", self.lanes[..., 1][self.lane_mask], self.lanes[..., 2][self.lane_mask]),
            ("agent position", self.agents[..., 1][self.agent_mask], self.agents[..., 2][self.agent_mask]),
        ):
            norm = cos_v**2 + sin_v**2
            if norm.size and np.abs(norm - 1.0).max() > 1e-9:
                raise SceneValidationError(
                    f"invariant violated: {name} (cos, sin) must lie on the unit circle"
                )
        gt_theta = self.ground_truth[..., 1]
        if gt_theta.size and (
            gt_theta.min() <= -np.pi - 1e-12 or gt_theta.max() > np.pi + 1e-12
        ):
            raise SceneValidationError("invariant violated: ground-truth angle outside (-pi, pi]")
        if not np.array_equal(self.agents[..., 9] > 0.5, self.agent_mask):
            raise SceneValidationError("validity channel disagrees with agent_mask")
        for arr_name in ("lanes", "agents", "ground_truth"):
            if not np.isfinite(getattr(self, arr_name)).all():
                raise SceneValidationError(f"non-finite values in {arr_name}")
        return self

    # --- keypoints --------------------------------------------------------

    def agent_centerpoints(self):
        """Current position per agent as ``(r[N_a], theta[N_a], valid[N_a])``.

        Agents invalid at the current step fall back to their last valid
        step; agents with no valid step are flagged invalid.
        """
        n_a, t_h, _ = self.agents.shape
        r = np.zeros(n_a)
        theta = np.zeros(n_a)
        valid = self.agent_mask.any(axis=1)
        for i in range(n_a):
            if not valid[i]:
                continue
            t = np.nonzero(self.agent_mask[i])[0][-1]
            r[i] = self.agents[i, t, 0]
            theta[i] = np.arctan2(self.agents[i, t, 2], self.agents[i, t, 1]) if r[i] > 0 else 0.0
        return r, theta, valid

    def lane_centerpoints(self):
        """Middle valid point per lane as ``(r[N_m], theta[N_m], valid[N_m])``."""
        n_m = self.lanes.shape[0]
        r = np.zeros(n_m)
        theta = np.zeros(n_m)
        valid = self.lane_mask.any(axis=1)
        for i in range(n_m):
            if not valid[i]:
                continue
            pts = np.nonzero(self.lane_mask[i])[0]
            mid = pts[len(pts) // 2]
            r[i] = self.lanes[i, mid, 0]
            theta[i] = (
                np.arctan2(self.lanes[i, mid, 2], self.lanes[i, mid, 1]) if r[i] > 0 else 0.0
            )
        return r, theta, valid

    # --- cartesian views ----------------------------------------------------

    def lane_points_xy(self):
        """Lane points in the local Cartesian frame, ``[N_m, L, 2]``."""
        r = self.lanes[..., 0]
        theta = np.arctan2(self.lanes[..., 2], self.lanes[..., 1])
        x, y = polar_to_cart(r, theta)
        return np.stack([x, y], axis=-1)

    def agent_positions_xy(self):
        """Agent history positions in the local Cartesian frame, ``[N_a, T_h, 2]``."""
        r = self.agents[..., 0]
        theta = np.arctan2(self.agents[..., 2], self.agents[..., 1])
        x, y = polar_to_cart(r, theta)
        return np.stack([x, y], axis=-1)

    def ground_truth_xy(self):
        """Ground-truth future in the local Cartesian frame, ``[N_aoi, T_f, 2]``."""
        x, y = polar_to_cart(self.ground_truth[..., 0], self.ground_truth[..., 1])
        return np.stack([x, y], axis=-1)

    def copy(self):
        return replace(
            self,
            lanes=self.lanes.copy(),
            lane_mask=self.lane_mask.copy(),
            agents=self.agents.copy(),
            agent_mask=self.agent_mask.copy(),
            aoi=list(self.aoi),
            ground_truth=self.ground_truth.copy(),
        )


def _position_feature(xy):
    """Magnitude/direction triple ``(r, cos, sin)`` of local 2-vectors.

    Used for positions, velocities and accelerations alike; the canonical
    origin maps to ``(0, 1, 0)``.
    """
    r, theta = cart_to_polar(xy[..., 0], xy[..., 1])
    at_origin = r <= 0
    return np.stack(
        [r, np.where(at_origin, 1.0, np.cos(theta)), np.where(at_origin, 0.0, np.sin(theta))],
        axis=-1,
    )


def normalize_to_agent_frame(raw: RawScene, target: int) -> Scene:
    """Re-center a raw world scene on ``target`` and convert to polar form.

    The target's current position becomes the origin and its heading theta=0;
    the frame is recorded on the scene for exact inverse mapping.
    """
    if not (0 <= target < raw.agent_xy.shape[0]):
        raise SceneValidationError(f"target agent {target} out of range")
    if not raw.agent_mask[target, -1]:
        raise SceneValidationError(f"target agent {target} invalid at the current timestep")
    frame = Frame(
        float(raw.agent_xy[target, -1, 0]),
        float(raw.agent_xy[target, -1, 1]),
        float(raw.agent_heading[target]),
    )

    local_pos = frame.to_local(raw.agent_xy)             # [N_a, T_h, 2]
    local_vel = frame.rotate_to_local(raw.agent_vel)
    local_acc = frame.rotate_to_local(raw.agent_acc)
    agents = np.concatenate(
        [
            _position_feature(local_pos),
            _position_feature(local_vel),
            _position_feature(local_acc),
            raw.agent_mask[..., None].astype(np.float64),
        ],
        axis=-1,
    )
    agents[~raw.agent_mask] = 0.0
    agents[..., 9] = raw.agent_mask

    lanes = _position_feature(frame.to_local(raw.lane_xy))
    lanes[~raw.lane_mask] = 0.0

    gt_local = frame.to_local(raw.future_xy[list(raw.aoi)])  # [N_aoi, T_f, 2]
    gt_r, gt_theta = cart_to_polar(gt_local[..., 0], gt_local[..., 1])
    ground_truth = np.stack([gt_r, gt_theta], axis=-1)

    return Scene(
        lanes=lanes,
        lane_mask=raw.lane_mask.copy(),
        agents=agents,
        agent_mask=raw.agent_mask.copy(),
        aoi=[target],
        ground_truth=ground_truth,
        frame=frame,
        dt=raw.dt,
        kind=raw.kind,
        scene_id=f"{raw.kind}-{raw.seed}-t{target}",
    )


def normalize_all_targets(raw: RawScene) -> list[Scene]:
    """One normalized scene per agent of interest (a polar origin is
    single-centered, so multi-agent prediction re-centers per target)."""
    return [normalize_to_agent_frame(raw, t) for t in raw.aoi]


def lane_change(lanes, lane_mask):
    """Differences of adjacent lane points in ``(dr, cos(dth), sin(dth))`` form.

    Input is the ``[N_m, L, 3]`` polar feature array; output is
    ``[N_m, L-1, 3]`` plus its validity mask (a segment is valid only when
    both endpoints are).
    """
    lanes = np.asarray(lanes, dtype=np.float64)
    if lanes.ndim != 3 or lanes.shape[1] < 2:
        raise SceneValidationError(
            f"lane_change needs at least 2 points per lane, got shape {lanes.shape}"
        )
    r = lanes[..., 0]
    theta = np.arctan2(lanes[..., 2], lanes[..., 1])
    dr = r[:, 1:] - r[:, :-1]
    dtheta = wrap_angle(theta[:, 1:] - theta[:, :-1])
    out = np.stack([dr, np.cos(dtheta), np.sin(dtheta)], axis=-1)
    dmask = lane_mask[:, 1:] & lane_mask[:, :-1]
    out[~dmask] = 0.0
    return out, dmask
