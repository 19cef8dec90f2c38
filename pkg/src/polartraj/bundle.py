"""Multi-modal trajectory bundles: K hypotheses with probabilities.

Trajectories are ``[K, N_aoi, T_f, 2]`` polar ``(r, theta)`` waypoints in
the scene's agent frame; probabilities are ``[K, N_aoi]`` and sum to 1 over
the K modes for each agent. During a forward pass the fields are autodiff
tensors; :meth:`TrajectoryBundle.numpy` detaches to plain arrays for
metrics, serialization and plotting.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor

STAGE_PROPOSAL = "proposal"
STAGE_FINAL = "final"


def refined_stage(i: int) -> str:
    return f"refined:{i}"


@dataclass
class TrajectoryBundle:
    trajectories: "Tensor | np.ndarray"   # [K, N_aoi, T_f, 2] polar
    probabilities: "Tensor | np.ndarray"  # [K, N_aoi]
    stage: str = STAGE_PROPOSAL

    @property
    def traj_array(self) -> np.ndarray:
        t = self.trajectories
        return t.data if isinstance(t, Tensor) else t

    @property
    def prob_array(self) -> np.ndarray:
        p = self.probabilities
        return p.data if isinstance(p, Tensor) else p

    @property
    def num_modes(self):
        return self.traj_array.shape[0]

    @property
    def num_agents(self):
        return self.traj_array.shape[1]

    @property
    def future_steps(self):
        return self.traj_array.shape[2]

    def numpy(self) -> "TrajectoryBundle":
        return TrajectoryBundle(self.traj_array.copy(), self.prob_array.copy(), self.stage)

    def validate(self, atol=1e-9):
        traj, prob = self.traj_array, self.prob_array
        if traj.ndim != 4 or traj.shape[-1] != 2:
            raise ValueError(f"trajectories must be [K, N_aoi, T_f, 2], got {traj.shape}")
        if prob.shape != traj.shape[:2]:
            raise ValueError(
                f"probabilities {prob.shape} do not match trajectories {traj.shape[:2]}"
            )
        if prob.min() < -atol:
            raise ValueError("probabilities must be nonnegative")
        if np.abs(prob.sum(axis=0) - 1.0).max() > atol:
            raise ValueError("probabilities must sum to 1 over modes for each agent")
        if traj[..., 0].min() < 0:
            raise ValueError("trajectory radii must be >= 0")
        theta = traj[..., 1]
        if theta.min() <= -np.pi - 1e-12 or theta.max() > np.pi + 1e-12:
            raise ValueError("trajectory angles must lie in (-pi, pi]")
        return self

    def cartesian(self) -> np.ndarray:
        """Waypoints as local-frame ``(x, y)``, shape ``[K, N_aoi, T_f, 2]``."""
        traj = self.traj_array
        r, theta = traj[..., 0], traj[..., 1]
        return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)

    def endpoints(self) -> np.ndarray:
        """Final waypoint per mode/agent in polar form, ``[K, N_aoi, 2]``."""
        return self.traj_array[:, :, -1, :]
