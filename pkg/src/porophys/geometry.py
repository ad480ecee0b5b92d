"""Build-plate geometry: plate, laser layout, part placement, and layer slicing.

Coordinates are millimetres in the plate frame: x and y span the plate,
h is height above the build surface. Angles are radians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

DEFAULT_PLATE_MM = 247.0
DEFAULT_GIMBAL_MM = 482.6
DEFAULT_POWER_W = 160.0
DEFAULT_SPOT_DIAMETER_MM = 0.050
DEFAULT_SPOT_AREA_MM2 = math.pi * (DEFAULT_SPOT_DIAMETER_MM / 2.0) ** 2
DEFAULT_WAVELENGTH_M = 1.07e-6
DEFAULT_LAYERS_PER_PART = 40
N_POSES = 9


class GeometryError(ValueError):
    """Invalid plate, laser, or part configuration."""


@dataclass(frozen=True)
class LaserSpec:
    """One laser head: its vertical projection point on the plate, beam
    parameters, and the x-interval of the plate it serves."""

    x_mm: float
    y_mm: float
    power_w: float = DEFAULT_POWER_W
    spot_area_mm2: float = DEFAULT_SPOT_AREA_MM2
    wavelength_m: float = DEFAULT_WAVELENGTH_M
    half: tuple[float, float] = (0.0, DEFAULT_PLATE_MM)

    def __post_init__(self) -> None:
        if self.power_w <= 0.0:
            raise GeometryError(f"laser power must be > 0 W, got {self.power_w}")
        if self.spot_area_mm2 <= 0.0:
            raise GeometryError(f"spot area must be > 0 mm^2, got {self.spot_area_mm2}")
        if self.wavelength_m <= 0.0:
            raise GeometryError(f"wavelength must be > 0 m, got {self.wavelength_m}")
        if not self.half[0] < self.half[1]:
            raise GeometryError(f"laser half-interval must be nonempty, got {self.half}")

    def horizontal_distance_mm(self, x_mm: float, y_mm: float) -> float:
        """Horizontal distance from this laser's projection point to (x, y)."""
        return math.hypot(x_mm - self.x_mm, y_mm - self.y_mm)


@dataclass(frozen=True)
class PartInstance:
    """A cylindrical part standing on the plate."""

    part_id: str
    x_mm: float
    y_mm: float
    pose_id: int
    diameter_mm: float
    height_mm: float
    laser_id: int | None = None

    def __post_init__(self) -> None:
        if self.diameter_mm <= 0.0:
            raise GeometryError(f"part {self.part_id}: diameter must be > 0, got {self.diameter_mm}")
        if self.height_mm <= 0.0:
            raise GeometryError(f"part {self.part_id}: height must be > 0, got {self.height_mm}")
        if not 0 <= self.pose_id < N_POSES:
            raise GeometryError(
                f"part {self.part_id}: pose_id must be in 0..{N_POSES - 1}, got {self.pose_id}"
            )


@dataclass(frozen=True)
class LayerPoint:
    """A sampling point inside layer ``layer_index`` of one part."""

    part_id: str
    layer_index: int
    x_mm: float
    y_mm: float
    h_mm: float


@dataclass(frozen=True)
class BuildSetup:
    """Plate dimensions, laser layout, registered parts, and layer schedule.

    Parts with ``laser_id=None`` are assigned to a laser on construction;
    all invariants (footprints on the plate, laser halves partitioning the
    plate width) are checked here.
    """

    plate_width_mm: float = DEFAULT_PLATE_MM
    plate_depth_mm: float = DEFAULT_PLATE_MM
    gimbal_height_mm: float = DEFAULT_GIMBAL_MM
    lasers: tuple[LaserSpec, ...] = ()
    parts: tuple[PartInstance, ...] = ()
    layers_per_part: int = DEFAULT_LAYERS_PER_PART

    def __post_init__(self) -> None:
        if self.plate_width_mm <= 0.0 or self.plate_depth_mm <= 0.0:
            raise GeometryError("plate dimensions must be > 0")
        if self.gimbal_height_mm <= 0.0:
            raise GeometryError("gimbal height must be > 0")
        if self.layers_per_part < 1:
            raise GeometryError(f"layers_per_part must be >= 1, got {self.layers_per_part}")
        lasers = tuple(self.lasers) if self.lasers else default_lasers(
            self.plate_width_mm, self.plate_depth_mm
        )
        object.__setattr__(self, "lasers", lasers)
        self._check_halves()
        assigned = []
        for part in self.parts:
            self._check_footprint(part)
            if part.laser_id is None:
                part = PartInstance(
                    part.part_id, part.x_mm, part.y_mm, part.pose_id,
                    part.diameter_mm, part.height_mm, laser_id=assign_laser(self, part),
                )
            elif not 0 <= part.laser_id < len(lasers):
                raise GeometryError(f"part {part.part_id}: unknown laser_id {part.laser_id}")
            assigned.append(part)
        object.__setattr__(self, "parts", tuple(assigned))

    def _check_halves(self) -> None:
        intervals = sorted(laser.half for laser in self.lasers)
        if not math.isclose(intervals[0][0], 0.0, abs_tol=1e-9):
            raise GeometryError("laser intervals must start at x = 0")
        for (a0, a1), (b0, b1) in zip(intervals, intervals[1:]):
            if not math.isclose(a1, b0, abs_tol=1e-9):
                raise GeometryError(f"laser intervals must tile the plate; gap at x = {a1}")
        if not math.isclose(intervals[-1][1], self.plate_width_mm, abs_tol=1e-9):
            raise GeometryError("laser intervals must end at the plate width")

    def _check_footprint(self, part: PartInstance) -> None:
        r = part.diameter_mm / 2.0
        if (part.x_mm - r < -1e-9 or part.x_mm + r > self.plate_width_mm + 1e-9
                or part.y_mm - r < -1e-9 or part.y_mm + r > self.plate_depth_mm + 1e-9):
            raise GeometryError(
                f"part {part.part_id}: footprint at ({part.x_mm}, {part.y_mm}) "
                f"r={r} leaves the {self.plate_width_mm} x {self.plate_depth_mm} plate"
            )

    def laser_for(self, part: PartInstance) -> LaserSpec:
        if part.laser_id is None:
            return self.lasers[assign_laser(self, part)]
        return self.lasers[part.laser_id]

    def part(self, part_id: str) -> PartInstance:
        for p in self.parts:
            if p.part_id == part_id:
                return p
        raise KeyError(part_id)


def default_lasers(
    plate_width_mm: float = DEFAULT_PLATE_MM,
    plate_depth_mm: float = DEFAULT_PLATE_MM,
    power_w: float = DEFAULT_POWER_W,
    spot_area_mm2: float = DEFAULT_SPOT_AREA_MM2,
    wavelength_m: float = DEFAULT_WAVELENGTH_M,
) -> tuple[LaserSpec, LaserSpec]:
    """Two lasers at the centers of the left and right half-plates."""
    mid = plate_width_mm / 2.0
    return (
        LaserSpec(plate_width_mm / 4.0, plate_depth_mm / 2.0, power_w,
                  spot_area_mm2, wavelength_m, half=(0.0, mid)),
        LaserSpec(3.0 * plate_width_mm / 4.0, plate_depth_mm / 2.0, power_w,
                  spot_area_mm2, wavelength_m, half=(mid, plate_width_mm)),
    )


def slice_part(part: PartInstance, layers_per_part: int) -> list[LayerPoint]:
    """Slice a part into evenly spaced horizontal layers and return their centers.

    Layer j is centered at height (j + 0.5) * height / layers_per_part; the
    center's (x, y) is the part center.
    """
    if layers_per_part < 1:
        raise GeometryError(f"layers_per_part must be >= 1, got {layers_per_part}")
    step = part.height_mm / layers_per_part
    return [
        LayerPoint(part.part_id, j, part.x_mm, part.y_mm, (j + 0.5) * step)
        for j in range(layers_per_part)
    ]


def incident_angle(setup: BuildSetup, laser: LaserSpec, point: LayerPoint) -> float:
    """Angle between the laser ray hitting ``point`` and the vertical.

    The vertical leg runs from the gimbal down to the point's height, so the
    angle grows (slightly) as the build rises.
    """
    if not (-1e-9 <= point.x_mm <= setup.plate_width_mm + 1e-9
            and -1e-9 <= point.y_mm <= setup.plate_depth_mm + 1e-9):
        raise GeometryError(
            f"point ({point.x_mm}, {point.y_mm}) is outside the plate"
        )
    drop = setup.gimbal_height_mm - point.h_mm
    if drop <= 0.0:
        raise GeometryError(
            f"gimbal height {setup.gimbal_height_mm} mm is not above build height {point.h_mm} mm"
        )
    return math.atan(laser.horizontal_distance_mm(point.x_mm, point.y_mm) / drop)


def assign_laser(setup: BuildSetup, part: PartInstance) -> int:
    """Index of the laser serving the part's x position.

    A part sitting exactly on a split line goes to the laser covering the
    lower interval.
    """
    order = sorted(range(len(setup.lasers)), key=lambda i: setup.lasers[i].half[0])
    for idx in order:
        lo, hi = setup.lasers[idx].half
        if lo <= part.x_mm <= hi:
            return idx
    raise GeometryError(
        f"part {part.part_id}: x = {part.x_mm} not covered by any laser interval"
    )
