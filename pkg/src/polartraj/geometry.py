"""Polar coordinate math: conversions, angle wrapping, relative features.

All angles are radians, wrapped to the half-open interval (-pi, pi] with the
boundary assigned to +pi (matching ``atan2(0, -1) == pi``). Radii are meters
and never negative. The origin is a coordinate singularity: any point with
radius below ``ORIGIN_EPS`` canonicalizes to ``(r=0, theta=0)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Radii below this snap to the canonical origin (0, 0).
ORIGIN_EPS = 1e-9


def wrap_angle(a):
    """Wrap angle(s) into (-pi, pi], boundary mapped to +pi.

    Works on scalars and arrays; the output is congruent to the input
    modulo 2*pi and the operation is idempotent.
    """
    a = np.asarray(a, dtype=np.float64)
    wrapped = a - TWO_PI * np.floor((a + math.pi) / TWO_PI)
    # floor boundary: exact multiples of pi can land on -pi; convention is +pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + TWO_PI, wrapped)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def cart_to_polar(x, y):
    """Convert Cartesian coordinates to polar ``(r, theta)``.

    Points within ``ORIGIN_EPS`` of the origin return the canonical
    ``(0.0, 0.0)``. Raises ``ValueError`` on non-finite input.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if not (np.isfinite(x).all() and np.isfinite(y).all()):
        raise ValueError("cart_to_polar: non-finite input coordinates")
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)
    at_origin = r < ORIGIN_EPS
    r = np.where(at_origin, 0.0, r)
    theta = np.where(at_origin, 0.0, theta)
    if r.ndim == 0:
        return float(r), float(theta)
    return r, theta


def polar_to_cart(r, theta):
    """Convert polar ``(r, theta)`` to Cartesian ``(x, y)``."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    x = r * np.cos(theta)
    y = r * np.sin(theta)
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def relative_polar(r_q, theta_q, r_k, theta_k):
    """Relative position of key w.r.t. query as ``(dr, cos(dth), sin(dth))``.

    ``dr`` is signed (``r_k - r_q``): positive means the key is farther from
    the origin than the query. The angle difference is wrapped before taking
    cosine/sine, so the result is invariant to a common rotation of both
    points.
    """
    dr = np.asarray(r_k, dtype=np.float64) - np.asarray(r_q, dtype=np.float64)
    dth = wrap_angle(np.asarray(theta_k, dtype=np.float64) - np.asarray(theta_q, dtype=np.float64))
    cos_d = np.cos(dth)
    sin_d = np.sin(dth)
    if dr.ndim == 0:
        return float(dr), float(cos_d), float(sin_d)
    return dr, cos_d, sin_d


def polar_feature(r, theta):
    """Stack ``(r, cos(theta), sin(theta))`` along a trailing axis."""
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    return np.stack([r, np.cos(theta), np.sin(theta)], axis=-1)


def rotate_xy(x, y, angle):
    """Rotate Cartesian coordinates by ``angle`` about the origin."""
    c, s = math.cos(angle), math.sin(angle)
    return c * x - s * y, s * x + c * y


@dataclass(frozen=True)
class PolarPoint:
    """A point or vector as radius (meters) and angle (radians).

    Invariants enforced at construction: ``r >= 0``, ``theta`` in (-pi, pi],
    and ``theta == 0`` whenever ``r == 0``. Use :meth:`of` to canonicalize
    arbitrary inputs instead of raising.
    """

    r: float
    theta: float

    def __post_init__(self):
        if not (math.isfinite(self.r) and math.isfinite(self.theta)):
            raise ValueError(f"PolarPoint: non-finite components ({self.r}, {self.theta})")
        if self.r < 0:
            raise ValueError(f"PolarPoint: negative radius {self.r}")
        if not (-math.pi < self.theta <= math.pi):
            raise ValueError(f"PolarPoint: angle {self.theta} outside (-pi, pi]")
        if self.r < ORIGIN_EPS and self.theta != 0.0:
            raise ValueError("PolarPoint: angle must be 0 at the origin")

    @classmethod
    def of(cls, r: float, theta: float) -> "PolarPoint":
        """Construct with wrapping and origin canonicalization (r must be >= 0)."""
        if r < ORIGIN_EPS:
            return cls(0.0, 0.0)
        return cls(float(r), float(wrap_angle(theta)))

    @classmethod
    def from_cartesian(cls, x: float, y: float) -> "PolarPoint":
        r, theta = cart_to_polar(x, y)
        return cls(r, theta)

    def to_cartesian(self) -> tuple[float, float]:
        return polar_to_cart(self.r, self.theta)

    def feature(self) -> tuple[float, float, float]:
        """Network form ``(r, cos(theta), sin(theta))``."""
        return self.r, math.cos(self.theta), math.sin(self.theta)


@dataclass(frozen=True)
class RelativePolar:
    """Relative offset between two polar points, in network form."""

    delta_r: float
    cos_dtheta: float
    sin_dtheta: float

    @classmethod
    def between(cls, q: PolarPoint, k: PolarPoint) -> "RelativePolar":
        dr, cos_d, sin_d = relative_polar(q.r, q.theta, k.r, k.theta)
        return cls(dr, cos_d, sin_d)
