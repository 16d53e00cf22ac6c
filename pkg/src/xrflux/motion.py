"""User movement dynamics.

Principals fly in straight lines at constant speed and bounce off the cube
walls in a random inward direction. Groupies accelerate toward their nearest
principal (force capped, plus bounded uniform diffusion noise) and teleport
back in when they leave the cube. Head orientation evolves by periodic
Gaussian "rubbernecking" noise, and a per-axis EMA of angular rate drives the
predicted orientation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .geometry import ZERO3, OrientationYPR, Vec3, wrap_angle

ROLE_PRINCIPAL = "principal"
ROLE_GROUPIE = "groupie"
ROLES = (ROLE_PRINCIPAL, ROLE_GROUPIE)

TELEPORT_RANDOM = "teleport_random"
TELEPORT_NEAR_PRINCIPAL = "teleport_near_principal"
BOUNDARY_POLICIES = (TELEPORT_RANDOM, TELEPORT_NEAR_PRINCIPAL)


@dataclass(frozen=True)
class MotionConfig:
    """Tunables for the movement model. Lengths are world units, times seconds."""

    universe_half_extent: float = 20.0
    timestep_s: float = 0.05
    principal_speed: float = 2.0
    max_attraction: float = 5.0
    diffusion_bound: float = 1.0
    rubberneck_sigma: float = 0.15
    rubberneck_period_steps: int = 10
    groupie_max_speed: float | None = None
    groupie_boundary_policy: str = TELEPORT_NEAR_PRINCIPAL
    respawn_radius: float = 2.0
    ema_alpha: float = 0.1
    prediction_horizon_s: float = 1.0

    def __post_init__(self) -> None:
        if self.groupie_max_speed is None:
            object.__setattr__(self, "groupie_max_speed", 4.0 * self.principal_speed)

    def validate(self) -> None:
        if not self.universe_half_extent > 0.0:
            raise ValueError("universe_half_extent must be > 0")
        if not self.timestep_s > 0.0:
            raise ValueError("timestep_s must be > 0")
        if self.timestep_s < 1e-6:
            raise ValueError("timestep_s must be >= 1e-6 (log timestamps carry 6 decimals)")
        if not self.principal_speed > 0.0:
            raise ValueError("principal_speed must be > 0")
        if not self.max_attraction > 0.0:
            raise ValueError("max_attraction must be > 0")
        if self.diffusion_bound < 0.0:
            raise ValueError("diffusion_bound must be >= 0")
        if self.rubberneck_sigma < 0.0:
            raise ValueError("rubberneck_sigma must be >= 0")
        if self.rubberneck_period_steps < 1:
            raise ValueError("rubberneck_period_steps must be >= 1")
        if not self.groupie_max_speed > 0.0:
            raise ValueError("groupie_max_speed must be > 0")
        if self.groupie_boundary_policy not in BOUNDARY_POLICIES:
            raise ValueError(
                f"groupie_boundary_policy must be one of {BOUNDARY_POLICIES}, "
                f"got {self.groupie_boundary_policy!r}"
            )
        if not self.respawn_radius > 0.0:
            raise ValueError("respawn_radius must be > 0")
        if not 0.0 < self.ema_alpha <= 1.0:
            raise ValueError("ema_alpha must be in (0, 1]")
        if self.prediction_horizon_s < 0.0:
            raise ValueError("prediction_horizon_s must be >= 0")


@dataclass(frozen=True)
class UserState:
    """Kinematic state of one simulated user."""

    user_id: int
    role: str
    position: Vec3
    velocity: Vec3
    orientation: OrientationYPR
    angular_rate_ema: tuple[float, float, float] = (0.0, 0.0, 0.0)


def random_unit_vector(rng: np.random.Generator) -> Vec3:
    """Uniform random direction on the unit sphere."""
    while True:
        v = rng.standard_normal(3)
        n = math.sqrt(float(v @ v))
        if n > 1e-12:
            return Vec3(float(v[0]) / n, float(v[1]) / n, float(v[2]) / n)


def _bounce_velocity(rng: np.random.Generator, inward_sign: dict[int, float], speed: float) -> Vec3:
    # Uniform on the sphere, folded so every violated axis points strictly
    # inward, then rescaled to the constant principal speed.
    while True:
        v = rng.standard_normal(3)
        for k, sign in inward_sign.items():
            v[k] = sign * abs(v[k])
        n = math.sqrt(float(v @ v))
        if n > 1e-12 and all(v[k] != 0.0 for k in inward_sign):
            scale = speed / n
            return Vec3(float(v[0]) * scale, float(v[1]) * scale, float(v[2]) * scale)


def step_principal(state: UserState, cfg: MotionConfig, rng: np.random.Generator) -> UserState:
    """Advance a principal one timestep: straight-line move, bounce at walls."""
    u = cfg.universe_half_extent
    p = state.position + state.velocity * cfg.timestep_s
    coords = [p.x, p.y, p.z]
    inward_sign: dict[int, float] = {}
    for k in range(3):
        if coords[k] >= u:
            coords[k] = u
            inward_sign[k] = -1.0
        elif coords[k] <= -u:
            coords[k] = -u
            inward_sign[k] = 1.0
    if not inward_sign:
        return replace(state, position=p)
    velocity = _bounce_velocity(rng, inward_sign, cfg.principal_speed)
    return replace(state, position=Vec3(*coords), velocity=velocity)


def attraction(principal_pos: Vec3, follower_pos: Vec3, max_force: float) -> Vec3:
    """Pull toward the principal, magnitude min(max_force, distance).

    Zero at coincidence, the continuous limit.
    """
    rel = principal_pos - follower_pos
    dist = rel.norm()
    if dist == 0.0:
        return ZERO3
    return rel * (min(max_force, dist) / dist)


def _teleport(
    rng: np.random.Generator, cfg: MotionConfig, principal_pos: Vec3
) -> Vec3:
    u = cfg.universe_half_extent
    if cfg.groupie_boundary_policy == TELEPORT_RANDOM:
        q = rng.uniform(-u, u, 3)
        return Vec3(float(q[0]), float(q[1]), float(q[2]))
    # Uniform in the ball around the principal, then clamped into the cube.
    direction = random_unit_vector(rng)
    radius = cfg.respawn_radius * float(rng.random()) ** (1.0 / 3.0)
    p = principal_pos + direction * radius
    return Vec3(
        min(max(p.x, -u), u),
        min(max(p.y, -u), u),
        min(max(p.z, -u), u),
    )


def step_groupie(
    state: UserState, principal_pos: Vec3, cfg: MotionConfig, rng: np.random.Generator
) -> UserState:
    """Advance a groupie one timestep: attraction plus diffusion, speed-capped."""
    d = cfg.timestep_s
    f = rng.uniform(-cfg.diffusion_bound, cfg.diffusion_bound, 3)
    accel = attraction(principal_pos, state.position, cfg.max_attraction) + Vec3(
        float(f[0]), float(f[1]), float(f[2])
    )
    velocity = state.velocity + accel * d
    speed = velocity.norm()
    if speed > cfg.groupie_max_speed:
        velocity = velocity * (cfg.groupie_max_speed / speed)
    position = state.position + velocity * d
    u = cfg.universe_half_extent
    if abs(position.x) > u or abs(position.y) > u or abs(position.z) > u:
        position = _teleport(rng, cfg, principal_pos)
        velocity = ZERO3
    return replace(state, position=position, velocity=velocity)


def nearest_principal(pos: Vec3, principals: Sequence[tuple[int, Vec3]]) -> int:
    """Id of the closest principal; ties broken by smallest id."""
    if not principals:
        raise ValueError("principal list must be non-empty")
    return min(principals, key=lambda item: ((item[1] - pos).norm_sq(), item[0]))[0]


def rubberneck(o: OrientationYPR, sigma: float, rng: np.random.Generator) -> OrientationYPR:
    """Perturb all three angles with independent N(0, sigma^2) noise."""
    eps = rng.normal(0.0, sigma, 3)
    return OrientationYPR(
        o.yaw + float(eps[0]), o.pitch + float(eps[1]), o.roll + float(eps[2])
    )


def update_angular_rate(
    ema: tuple[float, float, float],
    previous: OrientationYPR,
    current: OrientationYPR,
    cfg: MotionConfig,
) -> tuple[float, float, float]:
    """One EMA step of the per-axis angular rate from an orientation change."""
    inv_d = 1.0 / cfg.timestep_s
    a = cfg.ema_alpha
    keep = 1.0 - a
    dyaw = wrap_angle(current.yaw - previous.yaw)
    dpitch = current.pitch - previous.pitch
    droll = wrap_angle(current.roll - previous.roll)
    return (
        ema[0] * keep + a * dyaw * inv_d,
        ema[1] * keep + a * dpitch * inv_d,
        ema[2] * keep + a * droll * inv_d,
    )


def predict_orientation(state: UserState, cfg: MotionConfig) -> OrientationYPR:
    """Extrapolate orientation by the smoothed angular rate over the horizon."""
    h = cfg.prediction_horizon_s
    yr, pr, rr = state.angular_rate_ema
    o = state.orientation
    return OrientationYPR(o.yaw + yr * h, o.pitch + pr * h, o.roll + rr * h)
