"""Synthetic driving scenarios with kinematically consistent agents.

Each scenario builds a world-frame :class:`~polartraj.scene.RawScene` around
one target agent (always agent 0, the agent of interest) plus background
traffic and centerline lanes that follow the agents' routes. Velocities and
accelerations are backward differences of the stored (noisy) positions, so
the motion-state channels are exactly consistent with the positions by
construction. Ground-truth futures continue the same clean kinematics.

Scenario kinds: ``straight`` (constant velocity), ``turn-left`` /
``turn-right`` (constant yaw rate through the whole future, starting in
late history so the intent is observable), ``lane-change`` (smoothstep
lateral shift to an adjacent lane), and ``mixed`` (one of the above per
scene). Everything is deterministic given (kind, seed, config).
"""

from __future__ import annotations

import math

import numpy as np

from .scene import SCENARIO_KINDS, RawScene, Scene, normalize_to_agent_frame

LANE_WIDTH = 3.5  # m, lateral offset of neighboring lanes


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _path_positions(kind, p0, heading0, speed, dt, n_steps, t_current, rng, turn_rate=None):
    """Clean positions [n_steps, 2] for one agent following ``kind``.

    ``t = 0`` is the first simulated step and ``t_current`` the time of the
    current (last observed) step. Maneuver onsets are sampled strictly
    before ``t_current`` so the intent is observable in history and, for
    turns, the whole future runs at the constant yaw rate.
    """
    t = np.arange(n_steps) * dt
    if kind == "straight":
        direction = np.array([math.cos(heading0), math.sin(heading0)])
        return p0 + (speed * t)[:, None] * direction[None, :]
    if kind in ("turn-left", "turn-right"):
        sign = 1.0 if kind == "turn-left" else -1.0
        omega = sign * (turn_rate if turn_rate is not None else rng.uniform(0.15, 0.45))
        t_start = rng.uniform(0.2, 0.7) * t_current
        # headings: constant until onset, then constant yaw rate
        headings = heading0 + omega * np.maximum(0.0, t - t_start)
        inc = speed * dt * np.stack([np.cos(headings), np.sin(headings)], axis=-1)
        pos = np.empty((n_steps, 2))
        pos[0] = p0
        pos[1:] = p0 + np.cumsum(inc[:-1], axis=0)
        return pos
    if kind == "lane-change":
        direction = np.array([math.cos(heading0), math.sin(heading0)])
        normal = np.array([-direction[1], direction[0]])
        side = rng.choice([-1.0, 1.0])
        t0 = rng.uniform(0.3, 0.8) * t_current
        duration = rng.uniform(2.0, 3.5)
        offset = side * LANE_WIDTH * _smoothstep((t - t0) / duration)
        return (
            p0
            + (speed * t)[:, None] * direction[None, :]
            + offset[:, None] * normal[None, :]
        )
    raise ValueError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")


def _lane_from_path(path, n_points, lateral=0.0):
    """Centerline polyline with ``n_points`` sampled along a path, optionally
    offset along the local normal."""
    idx = np.linspace(0, len(path) - 1, n_points).round().astype(int)
    pts = path[idx].copy()
    if lateral != 0.0:
        tangents = np.gradient(path[:, 0], edge_order=1), np.gradient(path[:, 1], edge_order=1)
        tan = np.stack([tangents[0][idx], tangents[1][idx]], axis=-1)
        norm = np.linalg.norm(tan, axis=-1, keepdims=True)
        tan = tan / np.where(norm > 1e-9, norm, 1.0)
        pts += lateral * np.stack([-tan[:, 1], tan[:, 0]], axis=-1)
    return pts


def generate_raw_scene(kind, seed, config) -> RawScene:
    """World-frame scene for one scenario; agent 0 is the agent of interest."""
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; expected one of {SCENARIO_KINDS}")
    rng = np.random.default_rng(seed)
    t_h, t_f, dt = config.history_steps, config.future_steps, config.dt
    lead = 2  # extra leading steps so velocity/acceleration differences exist
    n_steps = lead + t_h + t_f
    current = lead + t_h - 1

    target_kind = kind
    if kind == "mixed":
        target_kind = rng.choice(["straight", "turn-left", "turn-right", "lane-change"])

    origin = rng.uniform(-50.0, 50.0, size=2)
    heading0 = rng.uniform(-math.pi, math.pi)
    speed0 = rng.uniform(4.0, 12.0)

    t_current = current * dt
    n_agents = int(rng.integers(1, config.max_agents + 1))
    paths = np.zeros((n_agents, n_steps, 2))
    paths[0] = _path_positions(
        target_kind, origin, heading0, speed0, dt, n_steps, t_current, rng
    )

    direction = np.array([math.cos(heading0), math.sin(heading0)])
    normal = np.array([-direction[1], direction[0]])
    for i in range(1, n_agents):
        along = rng.uniform(8.0, 30.0) * rng.choice([-1.0, 1.0])
        lateral = rng.choice([0.0, -LANE_WIDTH, LANE_WIDTH])
        if along > 0 and lateral == 0.0:
            along += 10.0  # keep the same-lane leader well ahead
        start = origin + along * direction + lateral * normal
        oncoming = rng.random() < 0.2 and lateral != 0.0
        h_i = heading0 + math.pi if oncoming else heading0 + rng.normal(0.0, 0.05)
        v_i = rng.uniform(2.0, 12.0)
        bg_kind = "straight" if rng.random() < 0.8 else rng.choice(["turn-left", "turn-right"])
        paths[i] = _path_positions(bg_kind, start, h_i, v_i, dt, n_steps, t_current, rng,
                                   turn_rate=rng.uniform(0.05, 0.2))

    # observation noise on the observed window only; futures stay clean
    noisy = paths.copy()
    if config.noise_std > 0:
        noisy[:, : current + 1] += rng.normal(0.0, config.noise_std,
                                              size=(n_agents, current + 1, 2))

    hist = slice(lead, lead + t_h)
    agent_xy = noisy[:, hist]
    vel_full = (noisy[:, 1:] - noisy[:, :-1]) / dt          # velocity at index t+1
    acc_full = (vel_full[:, 1:] - vel_full[:, :-1]) / dt    # acceleration at index t+2
    agent_vel = vel_full[:, lead - 1 : lead - 1 + t_h]
    agent_acc = acc_full[:, lead - 2 : lead - 2 + t_h]

    agent_mask = np.ones((n_agents, t_h), dtype=bool)
    for i in range(1, n_agents):
        if rng.random() < 0.3:
            agent_mask[i, : int(rng.integers(1, t_h - 1))] = False

    # current heading from the clean motion direction
    clean_vel = (paths[:, current] - paths[:, current - 1]) / dt
    agent_heading = np.arctan2(clean_vel[:, 1], clean_vel[:, 0])

    future_xy = paths[:, lead + t_h :]

    # lanes: target route + neighbors, background routes, one crossing lane
    lane_list = [
        _lane_from_path(paths[0], config.lane_points),
        _lane_from_path(paths[0], config.lane_points, lateral=LANE_WIDTH),
        _lane_from_path(paths[0], config.lane_points, lateral=-LANE_WIDTH),
    ]
    for i in range(1, n_agents):
        if len(lane_list) >= config.max_lanes:
            break
        if rng.random() < 0.7:
            lane_list.append(_lane_from_path(paths[i], config.lane_points))
    if len(lane_list) < config.max_lanes and rng.random() < 0.5:
        center = origin + rng.uniform(10.0, 25.0) * direction
        span = np.linspace(-20.0, 20.0, config.lane_points)
        lane_list.append(center[None, :] + span[:, None] * normal[None, :])
    lane_xy = np.stack(lane_list, axis=0)

    lane_mask = np.ones(lane_xy.shape[:2], dtype=bool)
    for i in range(1, lane_xy.shape[0]):
        if rng.random() < 0.15:
            lane_mask[i, int(rng.integers(2, config.lane_points)) :] = False

    return RawScene(
        lane_xy=lane_xy,
        lane_mask=lane_mask,
        agent_xy=agent_xy,
        agent_vel=agent_vel,
        agent_acc=agent_acc,
        agent_mask=agent_mask,
        agent_heading=agent_heading,
        future_xy=future_xy,
        aoi=[0],
        dt=dt,
        kind=target_kind,
        seed=int(seed),
    )


def generate_synthetic_scene(kind, seed, config) -> Scene:
    """Normalized polar scene for one scenario, centered on the target."""
    raw = generate_raw_scene(kind, seed, config)
    return normalize_to_agent_frame(raw, 0).validate()


def generate_dataset(kind, count, base_seed, config) -> list[Scene]:
    """``count`` scenes with per-scene seeds ``base_seed + i``."""
    return [generate_synthetic_scene(kind, base_seed + i, config) for i in range(count)]
