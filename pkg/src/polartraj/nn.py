"""Neural building blocks on top of the autodiff tensors.

A :class:`Module` discovers parameters and submodules by walking its own
attributes (in construction order, which keeps checkpoint layouts and RNG
consumption deterministic). All randomness is explicit: constructors take a
``numpy.random.Generator`` and dropout draws from the generator passed to
``forward``.
"""

from __future__ import annotations

import json
import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

CHECKPOINT_FORMAT = "polartraj-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Checkpoint file malformed or incompatible with the model."""


def parameter(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


class Module:
    """Base class: parameter discovery, train/eval mode, state I/O."""

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _members(self):
        for name, value in self.__dict__.items():
            if name == "training":
                continue
            yield name, value

    def named_parameters(self, prefix=""):
        for name, value in self._members():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(f"{full}.")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for _, value in self._members():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state(self, state):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        if missing or unexpected:
            raise CheckpointError(
                f"parameter names do not match model: missing={missing} unexpected={unexpected}"
            )
        for name, p in own.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != p.data.shape:
                raise CheckpointError(
                    f"parameter {name}: checkpoint shape {values.shape} "
                    f"!= model shape {p.data.shape}"
                )
            p.data = values.copy()


def xavier_uniform(rng, n_in, n_out, scale=1.0):
    bound = scale * math.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out))


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True, zero_init=False):
        super().__init__()
        if zero_init:
            self.w = parameter(np.zeros((n_in, n_out)))
        else:
            self.w = parameter(xavier_uniform(rng, n_in, n_out))
        self.b = parameter(np.zeros(n_out)) if bias else None

    def forward(self, x):
        return ad.linear(x, self.w, self.b)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.gain = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return ad.layer_norm(x, self.gain, self.bias, self.eps)


class Dropout(Module):
    def __init__(self, p):
        super().__init__()
        self.p = float(p)

    def forward(self, x, rng=None):
        return ad.dropout(x, self.p, rng, self.training)


class MLP(Module):
    """Stack of Linear layers with GELU between them (none after the last).

    ``zero_init_out`` zeroes the final layer so the block starts as the
    constant-zero map — used by residual offset heads.
    """

    def __init__(self, dims, rng, zero_init_out=False):
        super().__init__()
        if len(dims) < 2:
            raise ValueError("MLP needs at least input and output dims")
        self.layers = [
            Linear(dims[i], dims[i + 1], rng, zero_init=(zero_init_out and i == len(dims) - 2))
            for i in range(len(dims) - 1)
        ]

    def forward(self, x):
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = ad.gelu(x)
        return x


class Attention(Module):
    """Scaled dot-product attention, single head by default.

    Keys/values may be shared across queries (``[V, C]``) or per-query
    (``[U, V, C]``, as produced by relative-embedding augmentation).
    ``key_mask`` marks valid keys; queries whose keys are all invalid get a
    zero output (callers keep such rows alive through the residual path).
    """

    def __init__(self, dim, rng, n_heads=1, p_drop=0.0):
        super().__init__()
        if dim % n_heads != 0:
            raise ValueError(f"attention dim {dim} not divisible by {n_heads} heads")
        self.dim = dim
        self.n_heads = n_heads
        self.head_dim = dim // n_heads
        self.q_proj = Linear(dim, dim, rng)
        self.k_proj = Linear(dim, dim, rng)
        self.v_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)
        self.drop = Dropout(p_drop)

    def forward(self, q, k, v, key_mask=None, rng=None, return_weights=False):
        U = q.shape[0]
        H, dh = self.n_heads, self.head_dim
        scale = 1.0 / math.sqrt(dh)
        qp = self.q_proj(q)
        kp = self.k_proj(k)
        vp = self.v_proj(v)
        if k.ndim == 2:
            V = k.shape[0]
            qh = ad.transpose(ad.reshape(qp, (U, H, dh)), (1, 0, 2))        # [H,U,dh]
            kh = ad.transpose(ad.reshape(kp, (V, H, dh)), (1, 2, 0))        # [H,dh,V]
            vh = ad.transpose(ad.reshape(vp, (V, H, dh)), (1, 0, 2))        # [H,V,dh]
            logits = ad.matmul(qh, kh) * scale                              # [H,U,V]
            mask = None if key_mask is None else np.asarray(key_mask, bool).reshape(1, 1, V)
            w = ad.masked_softmax(logits, mask, axis=-1)
            wd = self.drop(w, rng)
            out = ad.matmul(wd, vh)                                         # [H,U,dh]
            out = ad.reshape(ad.transpose(out, (1, 0, 2)), (U, self.dim))
            weights = w
        elif k.ndim == 3:
            V = k.shape[1]
            qh = ad.reshape(qp, (U, H, 1, dh))
            kh = ad.transpose(ad.reshape(kp, (U, V, H, dh)), (0, 2, 3, 1))  # [U,H,dh,V]
            vh = ad.transpose(ad.reshape(vp, (U, V, H, dh)), (0, 2, 1, 3))  # [U,H,V,dh]
            logits = ad.matmul(qh, kh) * scale                              # [U,H,1,V]
            if key_mask is None:
                mask = None
            else:
                mask = np.asarray(key_mask, bool)
                mask = mask.reshape(1, 1, 1, V) if mask.ndim == 1 else mask.reshape(U, 1, 1, V)
            w = ad.masked_softmax(logits, mask, axis=-1)
            wd = self.drop(w, rng)
            out = ad.reshape(ad.matmul(wd, vh), (U, self.dim))
            weights = w
        else:
            raise ad.ShapeError(f"attention: keys must be [V,C] or [U,V,C], got {k.shape}")
        out = self.out_proj(out)
        if return_weights:
            return out, weights
        return out


class FeedForward(Module):
    def __init__(self, dim, hidden, rng, p_drop=0.0):
        super().__init__()
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)
        self.drop = Dropout(p_drop)

    def forward(self, x, rng=None):
        return self.fc2(self.drop(ad.gelu(self.fc1(x)), rng))


# --- checkpoints -------------------------------------------------------------


def save_checkpoint(path, module, config=None, meta=None):
    """Write parameters as a flat, versioned JSON map name -> shape/values."""
    params = {
        name: {"shape": list(p.data.shape), "values": p.data.ravel().tolist()}
        for name, p in module.named_parameters()
    }
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config if config is not None else {},
        "meta": meta if meta is not None else {},
        "params": params,
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def load_checkpoint(path):
    """Read a checkpoint; returns ``(config, state, meta)``."""
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise CheckpointError(f"{path}: not a valid checkpoint: {e}") from e
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unrecognized checkpoint format")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    state = {}
    for name, entry in doc["params"].items():
        values = np.asarray(entry["values"], dtype=np.float64).reshape(entry["shape"])
        state[name] = values
    return doc.get("config", {}), state, doc.get("meta", {})
