"""Finite-difference oracles for analytic gradients.

``gradient_check`` validates any scalar loss closure against central
differences. ``finite_difference_check`` wires the full prediction pipeline
(encoder, decoder, refinement, dual-coordinate loss) to that oracle on a
tiny model configuration.
"""

from __future__ import annotations

import numpy as np


class GradCheckError(RuntimeError):
    """The check cannot run (stochastic layers active, config too large)."""


def gradient_check(loss_fn, params, step=1e-5, samples_per_param=None, rng=None):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be a deterministic closure returning a fresh scalar
    Tensor each call; ``params`` maps names to parameter tensors. Relative
    error per sampled entry is ``|g_an - g_fd| / max(|g_fd|, 1e-8)``.
    ``samples_per_param`` limits how many entries of each tensor are probed
    (all entries when None).
    """
    params = dict(params)
    loss = loss_fn()
    for p in params.values():
        p.grad = None
    loss.backward(params.values())
    analytic = {name: p.grad.copy() for name, p in params.items()}

    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.ravel()
        n = flat.size
        if samples_per_param is None or samples_per_param >= n:
            indices = np.arange(n)
        else:
            indices = rng.choice(n, size=samples_per_param, replace=False)
        ga = analytic[name].ravel()
        for idx in indices:
            orig = flat[idx]
            flat[idx] = orig + step
            f_plus = float(loss_fn().data)
            flat[idx] = orig - step
            f_minus = float(loss_fn().data)
            flat[idx] = orig
            g_fd = (f_plus - f_minus) / (2.0 * step)
            rel = abs(ga[idx] - g_fd) / max(abs(g_fd), 1e-8)
            if rel > worst:
                worst = rel
    return worst


_TINY_LIMITS = {
    "hidden_dim": 16,
    "max_agents": 3,
    "max_lanes": 3,
    "history_steps": 5,
    "future_steps": 5,
    "num_modes": 3,
}


def finite_difference_check(config=None, seed=0, samples_per_param=2, step=1e-5):
    """Gradient fidelity of the whole pipeline on a tiny configuration.

    Builds the model from ``config`` (a tiny default when None), generates
    one synthetic scene, and compares the analytic gradient of the total
    training loss against central finite differences on sampled entries of
    every parameter. Returns the max relative error.

    Refuses to run if the configuration enables dropout: a stochastic
    forward pass has no well-defined finite-difference gradient.
    """
    from .config import RunConfig
    from .generator import generate_synthetic_scene
    from .model import TrajectoryPredictor
    from .objective import total_loss

    if config is None:
        config = RunConfig(
            hidden_dim=12,
            num_modes=2,
            max_agents=3,
            max_lanes=3,
            history_steps=5,
            future_steps=5,
            lane_points=4,
            dropout=0.0,
            noise_std=0.02,
        )
    if config.dropout > 0:
        raise GradCheckError("stochastic layer active: set dropout to 0 for gradient checking")
    for field, limit in _TINY_LIMITS.items():
        value = getattr(config, field)
        if value > limit:
            raise GradCheckError(
                f"config too large for finite differences: {field}={value} > {limit}"
            )

    rng = np.random.default_rng(seed)
    model = TrajectoryPredictor(config, rng)
    model.eval()
    params = dict(model.named_parameters())
    # jitter every parameter so zero-initialized heads also carry gradient
    for p in params.values():
        p.data = p.data + rng.normal(0.0, 0.05, size=p.data.shape)

    scene = generate_synthetic_scene("mixed", int(rng.integers(1 << 31)), config)

    def loss_fn():
        proposal, refined = model(scene)
        return total_loss(proposal, refined, scene.ground_truth, config).total

    return gradient_check(
        loss_fn, params, step=step, samples_per_param=samples_per_param,
        rng=np.random.default_rng(seed + 1),
    )
