"""The full predictor: scene encoding, proposal decoding, refinement."""

from __future__ import annotations

import numpy as np

from .bundle import TrajectoryBundle
from .encoder import SceneEncoder
from .heads import ProposalDecoder, RefinementModule
from .nn import Module
from .scene import Scene


class TrajectoryPredictor(Module):
    """End-to-end model for one normalized scene.

    ``forward`` returns the proposal bundle plus one refined bundle per
    refinement iteration (depth 0 means the proposal is the final output).
    Refinement iterations have their own parameters unless
    ``config.share_refine_params`` is set.
    """

    def __init__(self, config, rng=None):
        super().__init__()
        if rng is None:
            rng = np.random.default_rng(config.seed)
        self.encoder = SceneEncoder(config, rng)
        self.decoder = ProposalDecoder(config, rng)
        if config.refine_depth > 0:
            n_unique = 1 if config.share_refine_params else config.refine_depth
            self.refiners = [RefinementModule(config, rng) for _ in range(n_unique)]
        else:
            self.refiners = []
        self._config = config

    @property
    def config(self):
        return self._config

    def forward(self, scene: Scene, rng=None):
        ctx = self.encoder(scene, rng=rng)
        target_rows = [ctx.num_lanes + a for a in scene.aoi]
        proposal = self.decoder(ctx, target_rows, rng=rng)
        refined = []
        bundle = proposal
        for i in range(self._config.refine_depth):
            refiner = self.refiners[0 if self._config.share_refine_params else i]
            bundle = refiner(bundle, ctx, i, rng=rng)
            refined.append(bundle)
        return proposal, refined

    def predict(self, scene: Scene) -> TrajectoryBundle:
        """Final detached bundle for evaluation (proposal when depth is 0)."""
        was_training = self.training
        self.eval()
        try:
            proposal, refined = self.forward(scene)
        finally:
            self.train(was_training)
        final = refined[-1] if refined else proposal
        out = final.numpy()
        out.stage = "final"
        return out
