"""Level-set fields for the embedded geometries.

Sign convention: species A occupies ``psi < 0`` and species B occupies
``psi > 0``; the interface is the zero set.  Every field evaluates in
batch via :meth:`LevelSetField.values` so mesh construction can feed it
large point blocks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "LevelSetField",
    "RigidMotion",
    "axis_plane",
    "colliding_spheres",
    "popcorn",
    "rotate",
    "sphere",
    "tilted_torus",
    "union_max",
    "vanishing_sphere",
]


class LevelSetField:
    """Time-dependent scalar field psi(x, t) with batched evaluation."""

    dim: int

    def values(self, points: np.ndarray, t: float) -> np.ndarray:
        """Evaluate at an (n, dim) block of points; returns shape (n,)."""
        raise NotImplementedError

    def __call__(self, x, t: float = 0.0) -> float:
        pts = np.asarray(x, dtype=float).reshape(1, -1)
        return float(self.values(pts, t)[0])


@dataclass(frozen=True)
class RigidMotion:
    """Rotation about a fixed axis through the origin.

    ``angular_velocity`` is a scalar for planar motion (about the out-of-plane
    axis) or a 3-vector whose direction is the axis and whose magnitude is the
    rate in rad per unit time.
    """

    angular_velocity: float | tuple[float, float, float]

    def rotation_matrix(self, t: float, dim: int) -> np.ndarray:
        """Matrix rotating material points from t=0 to time t."""
        if dim == 2:
            w = self.angular_velocity
            if not np.isscalar(w):
                raise ValueError("planar motion takes a scalar angular velocity")
            a = float(w) * t
            c, s = math.cos(a), math.sin(a)
            return np.array([[c, -s], [s, c]])
        w = np.asarray(self.angular_velocity, dtype=float)
        if w.shape != (3,):
            raise ValueError("3d motion takes a 3-vector angular velocity")
        speed = float(np.linalg.norm(w))
        if speed == 0.0:
            return np.eye(3)
        k = w / speed
        a = speed * t
        kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
        return np.eye(3) * math.cos(a) + math.sin(a) * kx + (1 - math.cos(a)) * np.outer(k, k)


class _Sphere(LevelSetField):
    """psi = r^2 - |x - c|^2, positive inside (species B fills the ball)."""

    def __init__(self, dim, center, radius):
        self.dim = dim
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def values(self, points, t):
        d = points - self.center
        return self.radius**2 - np.einsum("ij,ij->i", d, d)


class _VanishingSphere(LevelSetField):
    def __init__(self, dim, initial_radius, shrink_rate):
        self.dim = dim
        self.initial_radius = float(initial_radius)
        self.shrink_rate = float(shrink_rate)

    def radius(self, t: float) -> float:
        # Clamped at zero: the squared form would regrow the ball past the
        # vanish time.
        return max(self.initial_radius * (1.0 - self.shrink_rate * t), 0.0)

    def values(self, points, t):
        r = self.radius(t)
        return r * r - np.einsum("ij,ij->i", points, points)


class _MaxUnion(LevelSetField):
    """Pointwise maximum; the B region is the union of the members' B regions."""

    def __init__(self, fields):
        fields = tuple(fields)
        if not fields:
            raise ValueError("union of zero fields")
        dims = {f.dim for f in fields}
        if len(dims) != 1:
            raise ValueError("all fields in a union must share dim")
        self.dim = fields[0].dim
        self.fields = fields

    def values(self, points, t):
        vals = self.fields[0].values(points, t)
        for f in self.fields[1:]:
            vals = np.maximum(vals, f.values(points, t))
        return vals


class _MovingSphere(LevelSetField):
    def __init__(self, dim, radius, start, velocity):
        self.dim = dim
        self.radius = float(radius)
        self.start = np.asarray(start, dtype=float)
        self.velocity = np.asarray(velocity, dtype=float)

    def center(self, t: float) -> np.ndarray:
        return self.start + self.velocity * t

    def values(self, points, t):
        d = points - self.center(t)
        return self.radius**2 - np.einsum("ij,ij->i", d, d)


class _CollidingSpheres(_MaxUnion):
    """Two equal spheres translating toward and past each other along x."""

    def __init__(self, dim, sphere_radius, speed):
        r = float(sphere_radius)
        u = float(speed)
        offset = np.zeros(dim)
        offset[0] = 1.5 * r
        vel = np.zeros(dim)
        vel[0] = u
        self.left = _MovingSphere(dim, r, -offset, vel)
        self.right = _MovingSphere(dim, r, offset, -vel)
        super().__init__((self.left, self.right))
        self.sphere_radius = r
        self.speed = u


def _popcorn_bumps(dim: int, r: float) -> np.ndarray:
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(5) / 5.0
        return (r / math.sqrt(5.0)) * np.stack([2 * np.cos(ang), 2 * np.sin(ang)], axis=1)
    k = np.arange(12)
    pts = np.zeros((12, 3))
    a = k[:5] * 2.0 * np.pi / 5.0
    pts[:5] = np.stack([2 * np.cos(a), 2 * np.sin(a), np.ones(5)], axis=1)
    b = (2.0 * (k[5:10] - 5) - 1.0) * np.pi / 5.0
    pts[5:10] = np.stack([2 * np.cos(b), 2 * np.sin(b), -np.ones(5)], axis=1)
    pts[10] = (0.0, 0.0, math.sqrt(5.0))
    pts[11] = (0.0, 0.0, -math.sqrt(5.0))
    return pts * (r / math.sqrt(5.0))


class _Popcorn(LevelSetField):
    """Sphere of radius r_p with Gaussian bumps; positive inside the shape."""

    def __init__(self, dim, core_radius, amplitude=2.0, width=0.2):
        self.dim = dim
        self.core_radius = float(core_radius)
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.bumps = _popcorn_bumps(dim, self.core_radius)

    def values(self, points, t):
        rad = np.sqrt(np.einsum("ij,ij->i", points, points))
        lumps = np.zeros(len(points))
        inv = 1.0 / self.width**2
        for c in self.bumps:
            d = points - c
            lumps += self.amplitude * np.exp(-np.einsum("ij,ij->i", d, d) * inv)
        return -(rad - self.core_radius - lumps)


class _TiltedTorus(LevelSetField):
    """Torus around the z axis, tilted about the x axis; positive inside."""

    def __init__(self, r_major, r_minor, tilt_angle):
        self.dim = 3
        self.r_major = float(r_major)
        self.r_minor = float(r_minor)
        self.tilt_angle = float(tilt_angle)
        a = self.tilt_angle
        # psi_tilted(x) = psi(Rx(-a) x); for row vectors that is x @ Rx(a).
        self._rot = np.array(
            [
                [1.0, 0.0, 0.0],
                [0.0, math.cos(a), -math.sin(a)],
                [0.0, math.sin(a), math.cos(a)],
            ]
        )

    def values(self, points, t):
        p = points @ self._rot
        ring = np.sqrt(p[:, 0] ** 2 + p[:, 1] ** 2) - self.r_major
        return self.r_minor - np.sqrt(ring**2 + p[:, 2] ** 2)


class _Rotated(LevelSetField):
    """field(R(-omega t) x, t): the base geometry spun rigidly in time."""

    def __init__(self, base: LevelSetField, motion: RigidMotion):
        self.dim = base.dim
        self.base = base
        self.motion = motion

    def values(self, points, t):
        rot = self.motion.rotation_matrix(t, self.dim)
        # Row-vector form of R(-a) x is points @ R(a).
        return self.base.values(points @ rot, t)


class _AxisPlane(LevelSetField):
    def __init__(self, dim, axis, offset):
        if not 0 <= axis < dim:
            raise ValueError(f"axis {axis} invalid for dim {dim}")
        self.dim = dim
        self.axis = axis
        self.offset = float(offset)

    def values(self, points, t):
        return points[:, self.axis] - self.offset


def sphere(dim: int, center, radius: float) -> LevelSetField:
    """Static ball: psi = r^2 - |x - c|^2 (species B inside)."""
    return _Sphere(dim, center, radius)


def union_max(fields) -> LevelSetField:
    """Union of the fields' B regions via the pointwise maximum."""
    return _MaxUnion(fields)


def vanishing_sphere(dim: int, initial_radius: float, shrink_rate: float) -> LevelSetField:
    """Ball at the origin shrinking linearly: r(t) = (1 - rate*t) * r0, floored at 0."""
    return _VanishingSphere(dim, initial_radius, shrink_rate)


def colliding_spheres(dim: int, sphere_radius: float, speed: float) -> LevelSetField:
    """Two balls starting at x = -/+ 1.5 r, moving toward and through each other.

    Centers travel at ``speed`` along the x axis, so they coincide at
    t = 1.5 r / speed and have swapped positions at t = 3 r / speed.
    """
    return _CollidingSpheres(dim, sphere_radius, speed)


def popcorn(dim: int, core_radius: float, amplitude: float = 2.0, width: float = 0.2) -> LevelSetField:
    """Popcorn shape: ball of radius ``core_radius`` with Gaussian bumps.

    Twelve bumps in 3d (two pentagonal rings plus both poles), five in 2d,
    all placed at distance proportional to the core radius.
    """
    return _Popcorn(dim, core_radius, amplitude, width)


def tilted_torus(r_major: float, r_minor: float, tilt_angle: float) -> LevelSetField:
    return _TiltedTorus(r_major, r_minor, tilt_angle)


def rotate(field: LevelSetField, motion: RigidMotion) -> LevelSetField:
    """Spin a field rigidly: the returned field is ``field(R(-omega t) x, t)``."""
    return _Rotated(field, motion)


def axis_plane(dim: int, axis: int, offset: float) -> LevelSetField:
    """Half-space split: psi = x[axis] - offset (species A below the plane)."""
    return _AxisPlane(dim, axis, offset)
