"""Deterministic multi-user VR motion and FoV workload benchmark.

Pipeline: simulate a world of principals/groupies and scene objects, log
FoV enter/exit events, derive request traces under three strategies (plus an
IRM baseline), and replay them through an LRU edge cache, in process or over
HTTP, to report hit rates and delays.
"""

from .geometry import FovSpec, OrientationYPR, Vec3, fov_contains, view_axis
from .motion import MotionConfig, UserState
from .scenario import ScenarioConfig, VisibilityEvent, VisibilityLog, run_simulation
from .trace import RequestRecord, RequestTrace, derive_requests, generate_irm
from .cachesim import DelayModelConfig, LruCache, ReplayReport, replay, sweep

__all__ = [
    "DelayModelConfig",
    "FovSpec",
    "LruCache",
    "MotionConfig",
    "OrientationYPR",
    "ReplayReport",
    "RequestRecord",
    "RequestTrace",
    "ScenarioConfig",
    "UserState",
    "Vec3",
    "VisibilityEvent",
    "VisibilityLog",
    "derive_requests",
    "fov_contains",
    "generate_irm",
    "replay",
    "run_simulation",
    "sweep",
    "view_axis",
]

__version__ = "0.1.0"
