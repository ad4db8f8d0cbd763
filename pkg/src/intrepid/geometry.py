"""Anchor-centred hyperspherical coordinates.

A point ``x`` is written as ``x = anchor + v`` with ``v = (r, theta_1..theta_{d-1})``.
The first ``d-2`` angles live in ``[0, pi]`` and the last one in ``[0, 2*pi)``.

All array functions accept a single point of shape ``(d,)`` or a batch of shape
``(n, d)``; radii come back with the batch shape and angles with a trailing
``d - 1`` axis.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularJacobian, ZeroRadius

TWO_PI = 2.0 * np.pi
ATOL = 1e-12


@dataclass(frozen=True)
class PolarVector:
    r: float
    angles: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        object.__setattr__(self, "angles", angles)
        if angles.ndim != 1 or angles.size < 1:
            raise DimensionMismatch("need at least one angle (d >= 2)")
        if not self.r >= 0.0:
            raise ValueError(f"radius must be nonnegative, got {self.r}")
        inner, last = angles[:-1], angles[-1]
        if np.any(inner < -ATOL) or np.any(inner > np.pi + ATOL):
            raise ValueError("polar angles must lie in [0, pi]")
        if last < -ATOL or last >= TWO_PI + ATOL:
            raise ValueError("azimuth must lie in [0, 2*pi)")

    @property
    def dim(self) -> int:
        return self.angles.size + 1


def as_point(x, d: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DimensionMismatch(f"expected a point with d >= 2, got shape {x.shape}")
    if d is not None and x.size != d:
        raise DimensionMismatch(f"expected dimension {d}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("point has non-finite coordinates")
    return x


def cartesian_to_polar(x, anchor) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised transform; rows equal to the anchor get r = 0 and zero angles."""
    v = np.asarray(x, dtype=float) - np.asarray(anchor, dtype=float)
    d = v.shape[-1]
    sq = v * v
    # tail[..., j] = sqrt(sum_{i >= j} v_i^2)
    tail = np.sqrt(np.cumsum(sq[..., ::-1], axis=-1)[..., ::-1])
    r = tail[..., 0]
    angles = np.empty(v.shape[:-1] + (d - 1,))
    angles[..., : d - 2] = np.arctan2(tail[..., 1 : d - 1], v[..., : d - 2])
    last = np.arctan2(v[..., d - 1], v[..., d - 2])
    last = np.where(last < 0.0, last + TWO_PI, last)
    # roundoff at the seam: -tiny + 2*pi == 2*pi
    angles[..., d - 2] = np.where(last >= TWO_PI, 0.0, last)
    return r, angles


def polar_to_cartesian(r, angles, anchor) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    angles = np.asarray(angles, dtype=float)
    d = angles.shape[-1] + 1
    sines = np.sin(angles)
    sin_prod = np.ones(angles.shape[:-1] + (d,))
    sin_prod[..., 1:] = np.cumprod(sines, axis=-1)
    cos_part = np.ones(angles.shape[:-1] + (d,))
    cos_part[..., :-1] = np.cos(angles)
    return np.asarray(anchor, dtype=float) + r[..., None] * sin_prod * cos_part


def to_hyperspherical(x, anchor) -> PolarVector:
    x = as_point(x)
    anchor = as_point(anchor, x.size)
    r, angles = cartesian_to_polar(x, anchor)
    if r == 0.0:
        raise ZeroRadius("point equals the anchor")
    return PolarVector(float(r), angles)


def to_cartesian(v: PolarVector, anchor) -> np.ndarray:
    anchor = as_point(anchor, v.dim)
    return polar_to_cartesian(np.float64(v.r), v.angles, anchor)


def sin_exponents(d: int) -> np.ndarray:
    """Exponent d - j - 1 on sin(theta_j), j = 1..d-1."""
    return np.arange(d - 2, -1, -1, dtype=float)


def log_sin_terms(angles) -> np.ndarray:
    """sum_j (d-j-1) ln sin(theta_j); -inf where a weighted sine vanishes."""
    angles = np.asarray(angles, dtype=float)
    d = angles.shape[-1] + 1
    expo = sin_exponents(d)
    s = np.abs(np.sin(angles[..., : d - 2]))
    with np.errstate(divide="ignore"):
        logs = np.log(s)
    return np.sum(expo[: d - 2] * logs, axis=-1)


def log_volume_jacobian_array(r, angles) -> np.ndarray:
    angles = np.asarray(angles, dtype=float)
    d = angles.shape[-1] + 1
    with np.errstate(divide="ignore"):
        return (d - 1) * np.log(np.asarray(r, dtype=float)) + log_sin_terms(angles)


def log_volume_jacobian(v: PolarVector) -> float:
    """ln of r^(d-1) * prod_j sin^(d-j-1)(theta_j)."""
    if v.r <= 0.0:
        raise SingularJacobian("zero radius")
    value = float(log_volume_jacobian_array(v.r, v.angles))
    if not np.isfinite(value):
        raise SingularJacobian("a polar angle sits on the axis (sin = 0)")
    return value
