"""3D vector math, orientation conventions, and view-cone membership tests.

Conventions used throughout the simulator: y is up, yaw rotates about the y
axis (yaw 0 looks along +z, positive yaw turns toward +x), pitch tilts toward
+y. A field of view is a closed right circular cone with its apex at the user
and symmetric about the view axis, so roll is tracked but never changes
visibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TAU = 2.0 * math.pi
HALF_PI = 0.5 * math.pi

FOV_IMMEDIATE = "immediate"
FOV_PREDICTED = "predicted"
FOV_KINDS = (FOV_IMMEDIATE, FOV_PREDICTED)


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians into [-pi, pi)."""
    a = math.fmod(angle + math.pi, TAU)
    if a < 0.0:
        a += TAU
    return a - math.pi


def clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


@dataclass(frozen=True, slots=True)
class Vec3:
    """Immutable 3D vector (world units)."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        # Coerce numpy scalars so downstream repr/serialization stays plain.
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "z", float(self.z))

    def __add__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x + other.x, self.y + other.y, self.z + other.z)

    def __sub__(self, other: "Vec3") -> "Vec3":
        return Vec3(self.x - other.x, self.y - other.y, self.z - other.z)

    def __mul__(self, scalar: float) -> "Vec3":
        return Vec3(self.x * scalar, self.y * scalar, self.z * scalar)

    __rmul__ = __mul__

    def dot(self, other: "Vec3") -> float:
        return self.x * other.x + self.y * other.y + self.z * other.z

    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)

    def norm_sq(self) -> float:
        return self.x * self.x + self.y * self.y + self.z * self.z

    def normalized(self) -> "Vec3":
        n = self.norm()
        if n == 0.0:
            raise ValueError("cannot normalize a zero-length vector")
        inv = 1.0 / n
        return Vec3(self.x * inv, self.y * inv, self.z * inv)

    def as_array(self) -> np.ndarray:
        return np.array((self.x, self.y, self.z), dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Vec3":
        return cls(float(a[0]), float(a[1]), float(a[2]))


ZERO3 = Vec3(0.0, 0.0, 0.0)


@dataclass(frozen=True, slots=True)
class OrientationYPR:
    """Yaw/pitch/roll orientation, stored normalized.

    Yaw and roll wrap into [-pi, pi); pitch clamps to [-pi/2, pi/2].
    """

    yaw: float
    pitch: float
    roll: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))
        object.__setattr__(self, "pitch", clamp(float(self.pitch), -HALF_PI, HALF_PI))
        object.__setattr__(self, "roll", wrap_angle(float(self.roll)))


@dataclass(frozen=True, slots=True)
class FovSpec:
    """A view cone: full apex angle (radians) and maximum projection depth."""

    kind: str
    full_angle: float
    depth: float

    def __post_init__(self) -> None:
        if self.kind not in FOV_KINDS:
            raise ValueError(f"fov kind must be one of {FOV_KINDS}, got {self.kind!r}")
        if not 0.0 < self.full_angle < TAU:
            raise ValueError("fov full_angle must be in (0, 2*pi)")
        if not self.depth > 0.0:
            raise ValueError("fov depth must be > 0")


def view_axis(o: OrientationYPR) -> Vec3:
    """Unit view direction for an orientation; roll does not affect it."""
    cp = math.cos(o.pitch)
    return Vec3(cp * math.sin(o.yaw), math.sin(o.pitch), cp * math.cos(o.yaw))


def fov_contains(user_pos: Vec3, axis: Vec3, fov: FovSpec, obj_pos: Vec3) -> tuple[bool, float]:
    """Test whether a point lies inside a user's view cone.

    Returns (visible, distance). The cone is closed: points exactly at the
    depth or at the angular boundary count as visible, and a point coincident
    with the user is visible (its direction is undefined).
    """
    rel = obj_pos - user_pos
    dist = rel.norm()
    if dist == 0.0:
        return True, 0.0
    if dist > fov.depth:
        return False, dist
    cos_angle = axis.dot(rel) / dist
    return cos_angle >= math.cos(0.5 * fov.full_angle), dist


def fov_contains_batch(
    user_pos: np.ndarray, axis: np.ndarray, fov: FovSpec, positions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized fov_contains over an (N, 3) array of points.

    Returns (visible mask, distances), matching the scalar function exactly.
    """
    rel = positions - user_pos
    dist = np.sqrt(np.einsum("ij,ij->i", rel, rel))
    proj = rel @ axis
    at_user = dist == 0.0
    safe = np.where(at_user, 1.0, dist)
    cos_angle = proj / safe
    cos_half = math.cos(0.5 * fov.full_angle)
    visible = (dist <= fov.depth) & (at_user | (cos_angle >= cos_half))
    return visible, dist
