"""World construction, the master simulation loop, and visibility logging.

The loop advances every user by one timestep, applies periodic head noise,
refreshes the angular-rate EMA, and diffs cone membership against the
previous tick to emit enter/exit events for both the immediate and the
predicted field of view. The resulting event log is the canonical input for
request-trace derivation.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    FOV_IMMEDIATE,
    FOV_PREDICTED,
    FovSpec,
    OrientationYPR,
    Vec3,
    fov_contains_batch,
    view_axis,
)
from .motion import (
    ROLE_GROUPIE,
    ROLE_PRINCIPAL,
    MotionConfig,
    UserState,
    nearest_principal,
    predict_orientation,
    random_unit_vector,
    rubberneck,
    step_groupie,
    step_principal,
    update_angular_rate,
)

TRANSITION_ENTER = "enter"
TRANSITION_EXIT = "exit"

LOG_HEADER_PREFIX = "#xrflux-vislog v1"

_FOV_ORDER = {FOV_IMMEDIATE: 0, FOV_PREDICTED: 1}


@dataclass(frozen=True)
class ScenarioConfig:
    """Every tunable of the simulated world."""

    motion: MotionConfig = field(default_factory=MotionConfig)
    n_principals: int = 2
    n_groupies: int = 8
    n_objects: int = 200
    object_radius: float = 0.0
    immediate_fov: FovSpec = field(
        default_factory=lambda: FovSpec(FOV_IMMEDIATE, math.radians(110.0), 10.0)
    )
    # Predicted depth 11 keeps prefetch traffic a modest multiple of demand;
    # much deeper predicted cones flood a desk-scale LRU with prefetches.
    predicted_fov: FovSpec = field(
        default_factory=lambda: FovSpec(FOV_PREDICTED, math.radians(140.0), 11.0)
    )
    duration_s: float = 600.0
    seed: int = 42

    def validate(self) -> None:
        self.motion.validate()
        if self.n_principals < 1:
            raise ValueError("n_principals must be >= 1")
        if self.n_groupies < 0:
            raise ValueError("n_groupies must be >= 0")
        if self.n_objects < 1:
            raise ValueError("n_objects must be >= 1")
        if self.object_radius < 0.0:
            raise ValueError("object_radius must be >= 0")
        if self.immediate_fov.kind != FOV_IMMEDIATE:
            raise ValueError("immediate_fov.kind must be 'immediate'")
        if self.predicted_fov.kind != FOV_PREDICTED:
            raise ValueError("predicted_fov.kind must be 'predicted'")
        if self.predicted_fov.full_angle < self.immediate_fov.full_angle:
            raise ValueError("predicted_fov.full_angle must be >= immediate_fov.full_angle")
        if self.predicted_fov.depth < self.immediate_fov.depth:
            raise ValueError("predicted_fov.depth must be >= immediate_fov.depth")
        if not self.duration_s > 0.0:
            raise ValueError("duration_s must be > 0")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an integer in [0, 2**64)")

    def n_users(self) -> int:
        return self.n_principals + self.n_groupies

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "duration_s": self.duration_s,
            "n_principals": self.n_principals,
            "n_groupies": self.n_groupies,
            "n_objects": self.n_objects,
            "object_radius": self.object_radius,
            "immediate_fov": {
                "full_angle_deg": math.degrees(self.immediate_fov.full_angle),
                "depth": self.immediate_fov.depth,
            },
            "predicted_fov": {
                "full_angle_deg": math.degrees(self.predicted_fov.full_angle),
                "depth": self.predicted_fov.depth,
            },
            "motion": {
                "universe_half_extent": self.motion.universe_half_extent,
                "timestep_s": self.motion.timestep_s,
                "principal_speed": self.motion.principal_speed,
                "max_attraction": self.motion.max_attraction,
                "diffusion_bound": self.motion.diffusion_bound,
                "rubberneck_sigma": self.motion.rubberneck_sigma,
                "rubberneck_period_steps": self.motion.rubberneck_period_steps,
                "groupie_max_speed": self.motion.groupie_max_speed,
                "groupie_boundary_policy": self.motion.groupie_boundary_policy,
                "respawn_radius": self.motion.respawn_radius,
                "ema_alpha": self.motion.ema_alpha,
                "prediction_horizon_s": self.motion.prediction_horizon_s,
            },
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def config_from_dict(data: dict) -> ScenarioConfig:
    """Build a ScenarioConfig from a plain dict (e.g. a parsed JSON file).

    Missing fields take defaults; unknown fields are rejected by name.
    FoV angles are given in degrees in the file form.
    """
    defaults = ScenarioConfig()

    def take(src: dict, allowed: set[str], where: str) -> None:
        unknown = set(src) - allowed
        if unknown:
            raise ValueError(f"unknown config field {sorted(unknown)[0]!r} in {where}")

    take(
        data,
        {
            "seed",
            "duration_s",
            "n_principals",
            "n_groupies",
            "n_objects",
            "object_radius",
            "immediate_fov",
            "predicted_fov",
            "motion",
        },
        "config",
    )

    def fov(key: str, kind: str, base: FovSpec) -> FovSpec:
        sub = data.get(key, {})
        take(sub, {"full_angle_deg", "depth"}, key)
        angle = math.radians(float(sub["full_angle_deg"])) if "full_angle_deg" in sub else base.full_angle
        depth = float(sub["depth"]) if "depth" in sub else base.depth
        return FovSpec(kind, angle, depth)

    msub = data.get("motion", {})
    take(
        msub,
        {
            "universe_half_extent",
            "timestep_s",
            "principal_speed",
            "max_attraction",
            "diffusion_bound",
            "rubberneck_sigma",
            "rubberneck_period_steps",
            "groupie_max_speed",
            "groupie_boundary_policy",
            "respawn_radius",
            "ema_alpha",
            "prediction_horizon_s",
        },
        "motion",
    )
    base_m = defaults.motion
    motion = MotionConfig(
        universe_half_extent=float(msub.get("universe_half_extent", base_m.universe_half_extent)),
        timestep_s=float(msub.get("timestep_s", base_m.timestep_s)),
        principal_speed=float(msub.get("principal_speed", base_m.principal_speed)),
        max_attraction=float(msub.get("max_attraction", base_m.max_attraction)),
        diffusion_bound=float(msub.get("diffusion_bound", base_m.diffusion_bound)),
        rubberneck_sigma=float(msub.get("rubberneck_sigma", base_m.rubberneck_sigma)),
        rubberneck_period_steps=int(msub.get("rubberneck_period_steps", base_m.rubberneck_period_steps)),
        groupie_max_speed=(
            float(msub["groupie_max_speed"]) if "groupie_max_speed" in msub else None
        ),
        groupie_boundary_policy=str(
            msub.get("groupie_boundary_policy", base_m.groupie_boundary_policy)
        ),
        respawn_radius=float(msub.get("respawn_radius", base_m.respawn_radius)),
        ema_alpha=float(msub.get("ema_alpha", base_m.ema_alpha)),
        prediction_horizon_s=float(msub.get("prediction_horizon_s", base_m.prediction_horizon_s)),
    )

    cfg = ScenarioConfig(
        motion=motion,
        n_principals=int(data.get("n_principals", defaults.n_principals)),
        n_groupies=int(data.get("n_groupies", defaults.n_groupies)),
        n_objects=int(data.get("n_objects", defaults.n_objects)),
        object_radius=float(data.get("object_radius", defaults.object_radius)),
        immediate_fov=fov("immediate_fov", FOV_IMMEDIATE, defaults.immediate_fov),
        predicted_fov=fov("predicted_fov", FOV_PREDICTED, defaults.predicted_fov),
        duration_s=float(data.get("duration_s", defaults.duration_s)),
        seed=int(data.get("seed", defaults.seed)),
    )
    cfg.validate()
    return cfg


def load_config(path) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config file {path}: invalid JSON ({exc})") from exc
    if not isinstance(data, dict):
        raise ValueError(f"config file {path}: top level must be an object")
    return config_from_dict(data)


@dataclass(frozen=True)
class SceneObject:
    object_id: int
    position: Vec3
    radius: float = 0.0


@dataclass(frozen=True, slots=True)
class VisibilityEvent:
    """One enter/exit transition of an object in a user's FoV."""

    time: float
    user_id: int
    object_id: int
    fov: str
    transition: str
    distance: float


@dataclass
class VisibilityLog:
    seed: int
    config_hash: str
    events: list[VisibilityEvent]


def event_sort_key(ev: VisibilityEvent) -> tuple:
    return (ev.time, ev.user_id, ev.object_id, _FOV_ORDER[ev.fov])


@dataclass
class World:
    users: list[UserState]
    objects: list[SceneObject]


def _init_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, 0])


def user_rng(seed: int, user_id: int) -> np.random.Generator:
    """Per-user stream, independent across users for a fixed master seed."""
    return np.random.default_rng([seed, 1, user_id])


def init_world(cfg: ScenarioConfig) -> World:
    """Place users and objects uniformly at random in the cube.

    Principals get ids 0..n_principals-1 and random directions at the
    configured speed; groupies follow with zero velocity. All orientations
    are uniform in yaw with zero pitch and roll.
    """
    cfg.validate()
    rng = _init_rng(cfg.seed)
    u = cfg.motion.universe_half_extent

    def rand_pos() -> Vec3:
        q = rng.uniform(-u, u, 3)
        return Vec3(float(q[0]), float(q[1]), float(q[2]))

    def rand_yaw() -> OrientationYPR:
        return OrientationYPR(float(rng.uniform(-math.pi, math.pi)), 0.0, 0.0)

    users: list[UserState] = []
    for uid in range(cfg.n_principals):
        users.append(
            UserState(
                user_id=uid,
                role=ROLE_PRINCIPAL,
                position=rand_pos(),
                velocity=random_unit_vector(rng) * cfg.motion.principal_speed,
                orientation=rand_yaw(),
            )
        )
    for uid in range(cfg.n_principals, cfg.n_users()):
        users.append(
            UserState(
                user_id=uid,
                role=ROLE_GROUPIE,
                position=rand_pos(),
                velocity=Vec3(0.0, 0.0, 0.0),
                orientation=rand_yaw(),
            )
        )
    objects = [
        SceneObject(object_id=i, position=rand_pos(), radius=cfg.object_radius)
        for i in range(cfg.n_objects)
    ]
    return World(users=users, objects=objects)


class Simulation:
    """Owns the tick loop; one call to tick() advances every user by one step.

    A pre-built world may be injected in place of the seeded random one,
    which lets callers pin users and objects at exact positions.
    """

    def __init__(self, cfg: ScenarioConfig, world: World | None = None):
        cfg.validate()
        self.cfg = cfg
        self.world = init_world(cfg) if world is None else world
        self.users: list[UserState] = list(self.world.users)
        self._rngs = [user_rng(cfg.seed, s.user_id) for s in self.users]
        self._object_pos = np.array(
            [[o.position.x, o.position.y, o.position.z] for o in self.world.objects],
            dtype=np.float64,
        )
        self.step_index = 0
        n = len(self.users)
        self._vis_immediate: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        self._vis_predicted: list[np.ndarray] = [None] * n  # type: ignore[list-item]
        self.initial_events: list[VisibilityEvent] = []
        for i, state in enumerate(self.users):
            self.initial_events.extend(self._observe(i, state, 0.0))

    def _memberships(self, state: UserState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        pos = state.position.as_array()
        axis_imm = view_axis(state.orientation).as_array()
        axis_pred = view_axis(predict_orientation(state, self.cfg.motion)).as_array()
        vis_imm, dist = fov_contains_batch(pos, axis_imm, self.cfg.immediate_fov, self._object_pos)
        vis_pred, _ = fov_contains_batch(pos, axis_pred, self.cfg.predicted_fov, self._object_pos)
        return vis_imm, vis_pred, dist

    def _observe(self, i: int, state: UserState, t: float) -> list[VisibilityEvent]:
        vis_imm, vis_pred, dist = self._memberships(state)
        prev_imm = self._vis_immediate[i]
        prev_pred = self._vis_predicted[i]
        changed_imm = (
            np.flatnonzero(vis_imm) if prev_imm is None else np.flatnonzero(vis_imm != prev_imm)
        )
        changed_pred = (
            np.flatnonzero(vis_pred) if prev_pred is None else np.flatnonzero(vis_pred != prev_pred)
        )
        self._vis_immediate[i] = vis_imm
        self._vis_predicted[i] = vis_pred
        if changed_imm.size == 0 and changed_pred.size == 0:
            return []
        events: list[VisibilityEvent] = []
        uid = state.user_id
        for obj in np.union1d(changed_imm, changed_pred):
            o = int(obj)
            d = float(dist[o])
            if prev_imm is None:
                if vis_imm[o]:
                    events.append(VisibilityEvent(t, uid, o, FOV_IMMEDIATE, TRANSITION_ENTER, d))
            elif vis_imm[o] != prev_imm[o]:
                tr = TRANSITION_ENTER if vis_imm[o] else TRANSITION_EXIT
                events.append(VisibilityEvent(t, uid, o, FOV_IMMEDIATE, tr, d))
            if prev_pred is None:
                if vis_pred[o]:
                    events.append(VisibilityEvent(t, uid, o, FOV_PREDICTED, TRANSITION_ENTER, d))
            elif vis_pred[o] != prev_pred[o]:
                tr = TRANSITION_ENTER if vis_pred[o] else TRANSITION_EXIT
                events.append(VisibilityEvent(t, uid, o, FOV_PREDICTED, tr, d))
        return events

    def tick(self) -> list[VisibilityEvent]:
        """Advance one timestep and return this tick's visibility events."""
        mcfg = self.cfg.motion
        self.step_index += 1
        t = round(self.step_index * mcfg.timestep_s, 6)
        # Groupies chase positions as of the start of the tick, which keeps
        # per-user updates order-independent.
        principal_snapshot = [
            (s.user_id, s.position) for s in self.users if s.role == ROLE_PRINCIPAL
        ]
        snapshot_pos = dict(principal_snapshot)
        rubberneck_now = self.step_index % mcfg.rubberneck_period_steps == 0
        events: list[VisibilityEvent] = []
        for i, state in enumerate(self.users):
            rng = self._rngs[i]
            if state.role == ROLE_PRINCIPAL:
                state = step_principal(state, mcfg, rng)
            else:
                pid = nearest_principal(state.position, principal_snapshot)
                state = step_groupie(state, snapshot_pos[pid], mcfg, rng)
            before = state.orientation
            if rubberneck_now:
                state = replace(
                    state, orientation=rubberneck(before, mcfg.rubberneck_sigma, rng)
                )
            ema = update_angular_rate(state.angular_rate_ema, before, state.orientation, mcfg)
            state = replace(state, angular_rate_ema=ema)
            self.users[i] = state
            events.extend(self._observe(i, state, t))
        return events


def run_simulation(cfg: ScenarioConfig, world: World | None = None) -> VisibilityLog:
    """Run the full scenario and return the sorted visibility log."""
    sim = Simulation(cfg, world)
    events = list(sim.initial_events)
    n_steps = int(round(cfg.duration_s / cfg.motion.timestep_s))
    for _ in range(n_steps):
        events.extend(sim.tick())
    return VisibilityLog(seed=cfg.seed, config_hash=cfg.config_hash(), events=events)


def write_log(log: VisibilityLog, path) -> None:
    """Write the log as line-delimited records with a provenance header."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{LOG_HEADER_PREFIX} seed={log.seed} config={log.config_hash}\n")
        for ev in log.events:
            fh.write(
                f"{ev.time:.6f},{ev.user_id},{ev.object_id},{ev.fov},"
                f"{ev.transition},{ev.distance!r}\n"
            )


def read_log(path) -> VisibilityLog:
    """Parse a visibility log, validating format and sort order."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        seed, config_hash = _parse_header(header, LOG_HEADER_PREFIX, path)
        events: list[VisibilityEvent] = []
        prev_key: tuple | None = None
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise ValueError(f"{path}: line {lineno}: expected 6 fields, got {len(parts)}")
            try:
                t = float(parts[0])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad time_s field") from None
            try:
                uid = int(parts[1])
                oid = int(parts[2])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad user_id/object_id field") from None
            fov = parts[3]
            if fov not in _FOV_ORDER:
                raise ValueError(f"{path}: line {lineno}: bad fov field {fov!r}")
            transition = parts[4]
            if transition not in (TRANSITION_ENTER, TRANSITION_EXIT):
                raise ValueError(f"{path}: line {lineno}: bad transition field {transition!r}")
            try:
                dist = float(parts[5])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: bad distance field") from None
            ev = VisibilityEvent(t, uid, oid, fov, transition, dist)
            key = event_sort_key(ev)
            if prev_key is not None and key < prev_key:
                raise ValueError(f"{path}: unsorted at line {lineno}")
            prev_key = key
            events.append(ev)
    return VisibilityLog(seed=seed, config_hash=config_hash, events=events)


def _parse_header(header: str, prefix: str, path) -> tuple[int, str]:
    parts = header.split(" ")
    if len(parts) != 4 or " ".join(parts[:2]) != prefix:
        raise ValueError(f"{path}: line 1: malformed header")
    if not parts[2].startswith("seed=") or not parts[3].startswith("config="):
        raise ValueError(f"{path}: line 1: malformed header")
    try:
        seed = int(parts[2][len("seed="):])
    except ValueError:
        raise ValueError(f"{path}: line 1: malformed seed in header") from None
    return seed, parts[3][len("config="):]
