"""Laser physical effects at a scanned point.

The beam footprint stretches with the incident angle, which dilutes both the
power intensity and the radiation pressure the beam exerts; the pressure
additionally decomposes into vertical and horizontal components. All energy
and momentum are taken as fully transferred to the melt pool (a fixed
absorption fraction would be absorbed by the downstream normalization).

Everything here computes in SI units (m^2, W/m^2, Pa). ``report_units`` is
the single place where values are converted to the mm-based units used in
configuration files and reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

PLANCK_H = 6.62607015e-34      # J s (CODATA)
LIGHT_SPEED_C = 2.99792458e8   # m/s (CODATA)

MM2_PER_M2 = 1e6


class PhysicsError(ValueError):
    """Inputs outside the model's domain (e.g. grazing incidence)."""


@dataclass(frozen=True)
class PhysicalConstants:
    planck_h: float = PLANCK_H
    light_speed_c: float = LIGHT_SPEED_C


CODATA = PhysicalConstants()


@dataclass(frozen=True)
class PointEffects:
    """Physical effects of one laser at one scanned point (SI units)."""

    incident_angle_rad: float
    projection_area_m2: float
    energy_density_w_m2: float
    abs_pressure_pa: float
    vertical_pressure_pa: float
    horizontal_pressure_pa: float


@dataclass(frozen=True)
class PhotonBudget:
    """Per-second photon bookkeeping of one laser beam."""

    photon_energy_j: float
    photon_momentum_kg_m_s: float
    photons_per_second: float
    total_force_n: float


def _check_angle(theta_rad: float) -> None:
    if not 0.0 <= theta_rad < math.pi / 2.0:
        raise PhysicsError(f"incident angle must be in [0, pi/2), got {theta_rad}")


def projection_area(spot_area_m2: float, theta_rad: float) -> float:
    """Beam footprint area on the bed: the source spot stretched by 1/cos(theta)."""
    _check_angle(theta_rad)
    if spot_area_m2 <= 0.0:
        raise PhysicsError(f"spot area must be > 0, got {spot_area_m2}")
    return spot_area_m2 / math.cos(theta_rad)


def energy_density(power_w: float, spot_area_m2: float, theta_rad: float) -> float:
    """Average power intensity over the footprint: power / projection_area."""
    return power_w / projection_area(spot_area_m2, theta_rad)


def photon_budget(
    power_w: float,
    wavelength_m: float,
    constants: PhysicalConstants = CODATA,
) -> PhotonBudget:
    """Photon energy/momentum and the total radiation force of the beam.

    The total force is power / c: the wavelength cancels between the photon
    rate and the per-photon momentum.
    """
    if power_w <= 0.0:
        raise PhysicsError(f"power must be > 0 W, got {power_w}")
    if wavelength_m <= 0.0:
        raise PhysicsError(f"wavelength must be > 0 m, got {wavelength_m}")
    h, c = constants.planck_h, constants.light_speed_c
    energy = h * c / wavelength_m
    return PhotonBudget(
        photon_energy_j=energy,
        photon_momentum_kg_m_s=h / wavelength_m,
        photons_per_second=power_w / energy,
        total_force_n=power_w / c,
    )


def radiation_pressure(
    power_w: float,
    spot_area_m2: float,
    theta_rad: float,
    constants: PhysicalConstants = CODATA,
) -> tuple[float, float, float]:
    """Radiation pressure on the bed and its vertical/horizontal components.

    Returns (absolute, vertical, horizontal) in Pa. The absolute pressure is
    the beam's total force spread over the stretched footprint; the components
    resolve it along the vertical and the scan-plane directions.
    """
    _check_angle(theta_rad)
    if power_w <= 0.0 or spot_area_m2 <= 0.0:
        raise PhysicsError("power and spot area must be > 0")
    cos_t = math.cos(theta_rad)
    f_abs = power_w * cos_t / (constants.light_speed_c * spot_area_m2)
    return f_abs, f_abs * cos_t, f_abs * math.sin(theta_rad)


def point_effects(
    power_w: float,
    spot_area_m2: float,
    theta_rad: float,
    constants: PhysicalConstants = CODATA,
) -> PointEffects:
    """All point-wise effects of one laser at one incident angle."""
    f_abs, f_v, f_h = radiation_pressure(power_w, spot_area_m2, theta_rad, constants)
    return PointEffects(
        incident_angle_rad=theta_rad,
        projection_area_m2=projection_area(spot_area_m2, theta_rad),
        energy_density_w_m2=energy_density(power_w, spot_area_m2, theta_rad),
        abs_pressure_pa=f_abs,
        vertical_pressure_pa=f_v,
        horizontal_pressure_pa=f_h,
    )


def report_units(effects: PointEffects) -> dict[str, float]:
    """Convert point effects to reporting units (mm^2 areas, W/mm^2 intensity).

    This is the only SI-to-report conversion point in the package.
    """
    return {
        "incident_angle_rad": effects.incident_angle_rad,
        "incident_angle_deg": math.degrees(effects.incident_angle_rad),
        "projection_area_mm2": effects.projection_area_m2 * MM2_PER_M2,
        "energy_density_w_mm2": effects.energy_density_w_m2 / MM2_PER_M2,
        "abs_pressure_pa": effects.abs_pressure_pa,
        "vertical_pressure_pa": effects.vertical_pressure_pa,
        "horizontal_pressure_pa": effects.horizontal_pressure_pa,
    }
