"""Attention with relative keypoint embeddings.

Every scene element (and, during refinement, every trajectory hypothesis)
carries a keypoint. A layer embeds the pairwise keypoint offsets
``(dr, cos(dth), sin(dth))`` with an MLP, augments the repeated key/value
features with those embeddings, then runs cross-attention followed by
self-attention and a feedforward block, all with pre-norm residuals.
Masked keys receive zero attention weight; a query whose keys are all
masked passes through on the residual path alone.

The same layer with ``relative=False`` is a vanilla pre-norm transformer
block (used by the proposal decoder and the no-relative-embedding
ablation).
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP, Attention, Dropout, FeedForward, LayerNorm, Linear, Module


def _split_keypoints(kp):
    """Keypoints ``[M, 2]`` polar -> radius column/row and angle column/row."""
    kp = ad.as_tensor(kp)
    m = kp.shape[0]
    r = ad.reshape(kp[:, 0], (m, 1))
    theta = ad.reshape(kp[:, 1], (m, 1))
    return r, theta


class RelativeEmbedding(Module):
    """MLP over pairwise keypoint offsets; output ``[U, V, C]``.

    ``rel_mode="polar"`` embeds ``(dr, cos(dth), sin(dth))``;
    ``rel_mode="cartesian"`` embeds ``(dx, dy)`` of the same keypoints.
    Keypoints are ``(r, theta)`` pairs either way and may be autodiff
    tensors (refinement differentiates through its endpoint keypoints).
    """

    def __init__(self, dim, rng, rel_mode="polar"):
        super().__init__()
        if rel_mode not in ("polar", "cartesian"):
            raise ValueError(f"unknown rel_mode {rel_mode!r}")
        self.rel_mode = rel_mode
        self.mlp = MLP([3 if rel_mode == "polar" else 2, dim, dim], rng)

    def pair_features(self, q_kp, k_kp):
        rq, tq = _split_keypoints(q_kp)   # [U,1]
        rk, tk = _split_keypoints(k_kp)   # [V,1]
        u, v = rq.shape[0], rk.shape[0]
        rk_row = ad.reshape(rk, (1, v))
        tk_row = ad.reshape(tk, (1, v))
        if self.rel_mode == "polar":
            dr = rk_row - rq                                   # [U,V]
            dth = ad.wrap_angle(tk_row - tq)
            parts = [dr, ad.tcos(dth), ad.tsin(dth)]
        else:
            xq, yq = rq * ad.tcos(tq), rq * ad.tsin(tq)
            xk = rk_row * ad.tcos(tk_row)
            yk = rk_row * ad.tsin(tk_row)
            parts = [xk - xq, yk - yq]
        parts = [ad.reshape(p, (u, v, 1)) for p in parts]
        return ad.concat(parts, axis=2)

    def forward(self, q_kp, k_kp):
        return self.mlp(self.pair_features(q_kp, k_kp))


class KeyValueAugment(Module):
    """Two-layer MLP over ``concat(features, relative embedding)``.

    The first layer is evaluated as a weight split
    ``W @ concat(f, rel) = W_f @ f + W_rel @ rel`` so the (possibly shared)
    feature half is projected once per key instead of once per pair.
    """

    def __init__(self, dim, rng):
        super().__init__()
        self.feat_proj = Linear(dim, dim, rng)
        self.rel_proj = Linear(dim, dim, rng, bias=False)
        self.out = Linear(dim, dim, rng)

    def forward(self, feats, rel):
        h = self.feat_proj(feats)                  # [V,C] or [U,V,C]
        if h.ndim == 2:
            h = ad.reshape(h, (1,) + h.shape)
        return self.out(ad.gelu(h + self.rel_proj(rel)))


class RETLayer(Module):
    """One relative-embedding transformer block (cross-attn, self-attn, FF)."""

    def __init__(self, dim, rng, n_heads=1, p_drop=0.0, rel_mode="polar",
                 relative=True, relative_self=True, ff_hidden=None):
        super().__init__()
        self.relative = relative
        self.relative_self = relative and relative_self
        if relative:
            self.rel_cross = RelativeEmbedding(dim, rng, rel_mode)
            self.key_aug = KeyValueAugment(dim, rng)
            self.val_aug = KeyValueAugment(dim, rng)
        self.norm_cross = LayerNorm(dim)
        self.norm_kv = LayerNorm(dim)
        self.cross_attn = Attention(dim, rng, n_heads, p_drop)
        if self.relative_self:
            self.rel_self = RelativeEmbedding(dim, rng, rel_mode)
            self.self_key_aug = KeyValueAugment(dim, rng)
            self.self_val_aug = KeyValueAugment(dim, rng)
        self.norm_self = LayerNorm(dim)
        self.self_attn = Attention(dim, rng, n_heads, p_drop)
        self.norm_ff = LayerNorm(dim)
        self.ff = FeedForward(dim, ff_hidden or 4 * dim, rng, p_drop)
        self.drop = Dropout(p_drop)

    def forward(self, q_feats, kv_feats, q_kp=None, kv_kp=None,
                key_mask=None, query_mask=None, rng=None, return_weights=False):
        """``q_feats [U,C]``, ``kv_feats [V,C]``; keypoints ``[*, 2]`` polar.

        ``key_mask``/``query_mask`` flag valid elements; invalid keys are
        never attended to and invalid queries are skipped as self-attention
        keys.
        """
        x = q_feats
        h = self.norm_cross(x)
        kv = self.norm_kv(kv_feats)
        if self.relative:
            if q_kp is None or kv_kp is None:
                raise ValueError("relative layer requires query and key keypoints")
            rel = self.rel_cross(q_kp, kv_kp)                       # [U,V,C]
            k_aug = self.key_aug(kv, rel)
            v_aug = self.val_aug(kv, rel)
            attn, weights = self.cross_attn(
                h, k_aug, v_aug, key_mask, rng, return_weights=True
            )
        else:
            attn, weights = self.cross_attn(
                h, kv, kv, key_mask, rng, return_weights=True
            )
        x = x + self.drop(attn, rng)

        h = self.norm_self(x)
        if self.relative_self:
            rel_s = self.rel_self(q_kp, q_kp)                       # [U,U,C]
            ks = self.self_key_aug(h, rel_s)
            vs = self.self_val_aug(h, rel_s)
            attn = self.self_attn(h, ks, vs, query_mask, rng)
        else:
            attn = self.self_attn(h, h, h, query_mask, rng)
        x = x + self.drop(attn, rng)

        x = x + self.ff(self.norm_ff(x), rng)
        if return_weights:
            return x, weights
        return x
