"""Cones with vertex at the origin, spheres, caps and their quadrature rules.

A cone is ``{x : x . n > |x| cos(theta_C)}`` for a unit axis ``n`` and an
opening half-angle ``theta_C`` in ``(0, pi]``; ``theta_C = pi`` is all of
space minus the origin. The cap of radius ``R`` is the cone's trace on
the sphere ``|x| = R``. Polar angles are measured from the cone axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .quadrature import gauss_legendre


@dataclass(frozen=True)
class Cone:
    axis: tuple
    half_angle: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float).reshape(-1)
        if axis.shape != (3,) or not np.all(np.isfinite(axis)):
            raise ValueError(f"cone axis must be a finite 3-vector, got {self.axis!r}")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise ValueError("cone axis must be a unit vector (use Cone.from_degrees to normalize)")
        theta = float(self.half_angle)
        if not 0.0 < theta <= math.pi:
            raise ValueError(f"half_angle must lie in (0, pi], got {self.half_angle!r}")
        object.__setattr__(self, "axis", tuple(float(v) for v in axis))
        object.__setattr__(self, "half_angle", theta)

    @classmethod
    def from_degrees(cls, axis, half_angle_deg):
        """Build a cone from any nonzero axis and an angle in degrees."""
        axis = np.asarray(axis, dtype=float)
        norm = np.linalg.norm(axis)
        if not norm > 0:
            raise ValueError("cone axis must be nonzero")
        deg = float(half_angle_deg)
        if not 0.0 < deg <= 180.0:
            raise ValueError(f"half_angle_deg must lie in (0, 180], got {half_angle_deg!r}")
        return cls(tuple(axis / norm), math.radians(deg) if deg < 180.0 else math.pi)

    @classmethod
    def full(cls, axis=(0.0, 0.0, 1.0)):
        return cls.from_degrees(axis, 180.0)

    def opposite(self):
        """The complementary cone: reversed axis, half-angle pi - theta_C."""
        return Cone(tuple(-np.asarray(self.axis)), math.pi - self.half_angle)


@dataclass(frozen=True)
class SphereCap:
    radius: float
    cone: Cone

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError(f"radius must be positive, got {self.radius!r}")


@dataclass(frozen=True)
class CapQuadrature:
    """Product rule on a cap.

    ``nodes`` holds (theta, phi) about the cone axis, ``weights`` the
    solid-angle weights and ``directions`` the unit vectors of the nodes
    in the laboratory frame.
    """

    nodes: np.ndarray
    weights: np.ndarray
    directions: np.ndarray
    order: int

    def __len__(self):
        return len(self.weights)


def contains(cone, v):
    """Strict membership test; the vertex and the lateral surface are outside.

    The full cone (half-angle pi) has no lateral surface, so it holds every
    nonzero vector, including the backward axis.
    """
    v = np.asarray(v, dtype=float)
    # rescale by the largest component so tiny vectors do not underflow
    big = np.max(np.abs(v), axis=-1)
    nonzero = big > 0
    u = v / np.where(nonzero, big, 1.0)[..., None]
    if cone.half_angle == math.pi:
        return nonzero
    inside = u @ np.asarray(cone.axis) > np.linalg.norm(u, axis=-1) * math.cos(cone.half_angle)
    return inside & nonzero


def solid_angle(cone):
    return 2.0 * math.pi * (1.0 - math.cos(cone.half_angle))


def outward_normal(x):
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(r == 0):
        raise ValueError("outward normal undefined at the origin")
    return x / r


def rotate_to_axis(cone):
    """Right-handed orthonormal frame whose columns are (e1, e2, axis).

    The helper vector is x-hat unless the axis is within ~25 degrees of
    it, in which case y-hat is used, so the +z axis yields the identity.
    """
    n = np.asarray(cone.axis, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = helper - (helper @ n) * n
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.column_stack([e1, e2, n])


def cap_quadrature(cap, order=64, n_phi=None):
    """Gauss-Legendre in cos(theta) over [cos theta_C, 1] times trapezoid in phi.

    With ``n_phi`` (default ``2 * order``) equispaced azimuths the rule is
    exact for polynomials of degree ``2 * order - 1`` in cos(theta) times
    trigonometric polynomials of degree below ``n_phi`` in phi.
    """
    order = int(order)
    if not 2 <= order <= 512:
        raise ValueError(f"quadrature order must lie in [2, 512], got {order}")
    cone = cap.cone if isinstance(cap, SphereCap) else cap
    n_phi = 2 * order if n_phi is None else int(n_phi)
    mu, w_mu = gauss_legendre(math.cos(cone.half_angle), 1.0, order)
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    w_phi = np.full(n_phi, 2.0 * math.pi / n_phi)

    theta = np.arccos(np.clip(mu, -1.0, 1.0))
    sin_t = np.sqrt(np.clip(1.0 - mu * mu, 0.0, None))
    local = np.stack([
        (sin_t[:, None] * np.cos(phi)[None, :]),
        (sin_t[:, None] * np.sin(phi)[None, :]),
        np.broadcast_to(mu[:, None], (order, n_phi)),
    ], axis=-1).reshape(-1, 3)
    frame = rotate_to_axis(cone)
    nodes = np.stack(np.broadcast_arrays(theta[:, None], phi[None, :]), axis=-1).reshape(-1, 2)
    weights = (w_mu[:, None] * w_phi[None, :]).ravel()
    return CapQuadrature(nodes, weights, local @ frame.T, order)
