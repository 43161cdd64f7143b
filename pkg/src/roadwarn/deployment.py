"""Roadside geometry, danger areas, timing arithmetic and the warning policy.

Positions live in a road-local planar frame: x runs along the road in the
travel direction of the monitored lane, y across it, both in meters.
Processors sit every `processor_spacing` meters, each owning the danger
area that starts at its own position.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

from .classifiers import SoundClass
from .decision import RECEDING, DetectionResult

MAX_POSITION_ERROR_M = 1.0  # GPS fixes worse than this are unusable for warnings

WARN_CLASSES = (SoundClass.H, SoundClass.LH)


@dataclass(frozen=True)
class DangerArea:
    """Axis-aligned rectangle [x0, x0+length] x [0, width], boundary included."""

    processor_id: int
    x0: float
    length: float
    width: float

    def contains(self, x: float, y: float) -> bool:
        return self.x0 <= x <= self.x0 + self.length and 0.0 <= y <= self.width


@dataclass(frozen=True)
class PedestrianPosition:
    client_id: str
    x: float
    y: float
    timestamp: float
    position_error: float = 0.0

    def __post_init__(self):
        if self.position_error > MAX_POSITION_ERROR_M:
            raise ValueError(
                f"position error {self.position_error} m exceeds the "
                f"{MAX_POSITION_ERROR_M} m limit")


@dataclass(frozen=True)
class Processor:
    processor_id: int
    x: float
    area: DangerArea


@dataclass(frozen=True)
class DeploymentPlan:
    processor_spacing: float = 25.0
    mic_height: float = 3.0
    danger_length: float = 25.0
    road_width: float = 7.0
    max_design_speed: float = 75.0   # km/h
    min_warning_time: float = 3.0    # seconds
    freshness_window: float = 5.0    # seconds a position stays usable
    processors: tuple = field(default_factory=tuple)

    def __post_init__(self):
        for name in ("processor_spacing", "mic_height", "danger_length",
                     "road_width", "max_design_speed", "min_warning_time",
                     "freshness_window"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def processor(self, processor_id: int) -> Processor:
        for p in self.processors:
            if p.processor_id == processor_id:
                return p
        raise KeyError(f"no processor {processor_id} in plan")

    @property
    def warning_offset_areas(self) -> int:
        """How many areas downstream of a detection the warning targets.

        The warned pedestrians must get at least `min_warning_time` even at
        the design speed, so the target area starts
        ceil(min_warning_time * v_max / spacing) spacings past the detector
        (3 areas, i.e. 75 m, with the defaults).
        """
        v_mps = self.max_design_speed / 3.6
        distance = self.min_warning_time * v_mps
        return math.ceil(distance / self.processor_spacing - 1e-9)


def build_plan(road_length: float, **overrides) -> DeploymentPlan:
    """Plan with processors at x = 0, spacing, 2*spacing, ... <= road_length."""
    base = DeploymentPlan(**overrides)
    if road_length < base.processor_spacing:
        raise ValueError(
            f"road of {road_length} m is shorter than one {base.processor_spacing} m spacing")
    count = int(road_length / base.processor_spacing) + 1
    processors = tuple(
        Processor(processor_id=i, x=i * base.processor_spacing,
                  area=DangerArea(processor_id=i, x0=i * base.processor_spacing,
                                  length=base.danger_length, width=base.road_width))
        for i in range(count))
    return DeploymentPlan(**{**overrides, "processors": processors})


_PLAN_KEYS = ("processor_spacing", "mic_height", "danger_length", "road_width",
              "max_design_speed", "min_warning_time", "freshness_window")


def load_plan_config(path) -> DeploymentPlan:
    """Build a plan from an INI file: a [plan] section with road_length plus
    any of the DeploymentPlan fields as overrides."""
    parser = configparser.ConfigParser()
    with open(path, "r", encoding="utf-8") as fh:
        parser.read_file(fh)
    if not parser.has_section("plan"):
        raise ValueError(f"{path}: missing [plan] section")
    section = parser["plan"]
    if "road_length" not in section:
        raise ValueError(f"{path}: plan needs a road_length")
    overrides = {key: section.getfloat(key) for key in _PLAN_KEYS if key in section}
    return build_plan(section.getfloat("road_length"), **overrides)


def members_in_area(area: DangerArea, positions, now: float,
                    freshness_window: float = 5.0) -> list[str]:
    """client_ids with a fresh position inside the rectangle (closed boundary)."""
    members = []
    for pos in positions:
        if now - pos.timestamp > freshness_window:
            continue
        if area.contains(pos.x, pos.y):
            members.append(pos.client_id)
    return members


def warning_lead_time(distance_m: float, speed_kmh: float) -> float:
    """Seconds until a vehicle `distance_m` away arrives at `speed_kmh`."""
    if speed_kmh <= 0:
        raise ValueError("speed must be positive")
    return distance_m * 3.6 / speed_kmh


def warning_decision(result: DetectionResult) -> bool:
    """Warn only for risky classes (H, LH) that are not moving away."""
    if result.sound_type not in WARN_CLASSES:
        return False
    if result.direction == RECEDING:
        return False
    return True
