"""Part-level feature assembly.

Per-layer physical effects are summarized into four statistics per effect
(AVE, SDEV, MIN, MAX, the latter two being the means of the bottom/top 10% of
layers), yielding the machine-independent "physics" feature vector. The
"setting" vector carries the raw machine/geometry settings, and "combined"
concatenates the two. Max-Min normalization maps training features and
targets onto [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import physics
from .geometry import BuildSetup, PartInstance, incident_angle, slice_part, N_POSES

EFFECTS = ("energy_density", "abs_pressure", "vertical_pressure", "horizontal_pressure")
AGGREGATORS = ("AVE", "SDEV", "MIN", "MAX")
MODEL_KINDS = ("setting", "physics", "combined")


class FeatureError(ValueError):
    """Inconsistent feature assembly inputs."""


@dataclass(frozen=True)
class PhysicsProfile:
    """One physical effect of one part: the per-layer values and their summary."""

    part_id: str
    effect_name: str
    layer_values: tuple[float, ...]
    ave: float
    sdev: float
    min10: float
    max10: float


@dataclass(frozen=True)
class FeatureVector:
    part_id: str
    model_kind: str
    values: tuple[float, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.feature_names):
            raise FeatureError(
                f"{len(self.values)} values vs {len(self.feature_names)} names"
            )
        if self.model_kind not in MODEL_KINDS:
            raise FeatureError(f"unknown model kind {self.model_kind!r}")


def aggregate_layers(layer_values) -> tuple[float, float, float, float]:
    """(mean, population stdev, bottom-10% mean, top-10% mean) of layer values.

    The tail means use ceil(0.10 * n) values so they are defined for any n >= 1.
    """
    values = np.asarray(layer_values, dtype=float)
    if values.size == 0:
        raise FeatureError("aggregate_layers requires at least one layer value")
    k = math.ceil(0.10 * values.size)
    ordered = np.sort(values)
    return (
        float(values.mean()),
        float(values.std()),
        float(ordered[:k].mean()),
        float(ordered[-k:].mean()),
    )


def _layer_effect_values(
    setup: BuildSetup, part: PartInstance, grid_k: int = 1
) -> dict[str, np.ndarray]:
    """Per-layer effect values in reporting units, one array per effect.

    With grid_k == 1 each layer is evaluated at its center; with grid_k > 1
    a grid_k x grid_k grid over the layer footprint is averaged instead.
    """
    laser = setup.laser_for(part)
    spot_area_m2 = laser.spot_area_mm2 / physics.MM2_PER_M2
    per_effect: dict[str, list[float]] = {name: [] for name in EFFECTS}
    for center in slice_part(part, setup.layers_per_part):
        points = [center] if grid_k <= 1 else _footprint_grid(part, center, grid_k)
        rows = []
        for point in points:
            theta = incident_angle(setup, laser, point)
            rows.append(physics.report_units(
                physics.point_effects(laser.power_w, spot_area_m2, theta)
            ))
        per_effect["energy_density"].append(_mean(rows, "energy_density_w_mm2"))
        per_effect["abs_pressure"].append(_mean(rows, "abs_pressure_pa"))
        per_effect["vertical_pressure"].append(_mean(rows, "vertical_pressure_pa"))
        per_effect["horizontal_pressure"].append(_mean(rows, "horizontal_pressure_pa"))
    return {name: np.asarray(vals) for name, vals in per_effect.items()}


def _mean(rows: list[dict[str, float]], key: str) -> float:
    return sum(row[key] for row in rows) / len(rows)


def _footprint_grid(part: PartInstance, center, grid_k: int):
    """grid_k x grid_k points over the layer's circular footprint."""
    from .geometry import LayerPoint

    r = part.diameter_mm / 2.0
    step = part.diameter_mm / grid_k
    points = []
    for ix in range(grid_k):
        for iy in range(grid_k):
            dx = -r + (ix + 0.5) * step
            dy = -r + (iy + 0.5) * step
            if dx * dx + dy * dy <= r * r:
                points.append(LayerPoint(
                    part.part_id, center.layer_index,
                    center.x_mm + dx, center.y_mm + dy, center.h_mm,
                ))
    return points or [center]


def part_profiles(
    setup: BuildSetup, part: PartInstance, grid_k: int = 1
) -> dict[str, PhysicsProfile]:
    """PhysicsProfile for each effect of one part."""
    profiles = {}
    for name, values in _layer_effect_values(setup, part, grid_k).items():
        ave, sdev, min10, max10 = aggregate_layers(values)
        profiles[name] = PhysicsProfile(
            part.part_id, name, tuple(float(v) for v in values), ave, sdev, min10, max10
        )
    return profiles


def physics_features(setup: BuildSetup, part: PartInstance, grid_k: int = 1) -> FeatureVector:
    """16 physics features: 4 effects x (AVE, SDEV, MIN, MAX)."""
    profiles = part_profiles(setup, part, grid_k)
    values, names = [], []
    for effect in EFFECTS:
        p = profiles[effect]
        for agg, v in zip(AGGREGATORS, (p.ave, p.sdev, p.min10, p.max10)):
            values.append(v)
            names.append(f"{effect}_{agg}")
    return FeatureVector(part.part_id, "physics", tuple(values), tuple(names))


def setting_features(setup: BuildSetup, part: PartInstance) -> FeatureVector:
    """Raw machine/geometry settings: position, one-hot pose, laser, distances."""
    laser_id = part.laser_id if part.laser_id is not None else 0
    laser = setup.laser_for(part)
    one_hot = [1.0 if k == part.pose_id else 0.0 for k in range(N_POSES)]
    values = [part.x_mm, part.y_mm, *one_hot, float(laser_id),
              laser.horizontal_distance_mm(part.x_mm, part.y_mm),
              part.height_mm, float(setup.layers_per_part)]
    names = ["x_mm", "y_mm", *[f"pose_{k}" for k in range(N_POSES)],
             "laser_id", "laser_dist_mm", "height_mm", "layers"]
    return FeatureVector(part.part_id, "setting", tuple(values), tuple(names))


def combined_features(setting: FeatureVector, phys: FeatureVector) -> FeatureVector:
    """Concatenate setting features (first) with physics features."""
    if setting.part_id != phys.part_id:
        raise FeatureError(
            f"part_id mismatch: {setting.part_id!r} vs {phys.part_id!r}"
        )
    names = setting.feature_names + phys.feature_names
    if len(set(names)) != len(names):
        raise FeatureError("setting and physics feature names collide")
    return FeatureVector(
        setting.part_id, "combined", setting.values + phys.values, names
    )


def part_features(setup: BuildSetup, part: PartInstance, kind: str, grid_k: int = 1) -> FeatureVector:
    if kind == "setting":
        return setting_features(setup, part)
    if kind == "physics":
        return physics_features(setup, part, grid_k)
    if kind == "combined":
        return combined_features(setting_features(setup, part),
                                 physics_features(setup, part, grid_k))
    raise FeatureError(f"unknown model kind {kind!r}")


def feature_matrix(
    setup: BuildSetup, kind: str, grid_k: int = 1
) -> tuple[np.ndarray, tuple[str, ...], tuple[str, ...]]:
    """Feature rows for every part of the setup: (X, feature_names, part_ids)."""
    if not setup.parts:
        raise FeatureError("setup has no parts")
    vectors = [part_features(setup, part, kind, grid_k) for part in setup.parts]
    names = vectors[0].feature_names
    X = np.array([v.values for v in vectors], dtype=float)
    return X, names, tuple(v.part_id for v in vectors)


class MinMaxScaler:
    """Column-wise Max-Min scaling: training min -> 0, training max -> 1.

    Constant columns map to 0. Values outside the training range map outside
    [0, 1] on purpose (no clamping), so the transform stays affine and
    invertible on non-constant columns.
    """

    def __init__(self, mins: np.ndarray, maxs: np.ndarray):
        self.mins = np.asarray(mins, dtype=float)
        self.maxs = np.asarray(maxs, dtype=float)
        if self.mins.shape != self.maxs.shape:
            raise FeatureError("min/max shape mismatch")
        if np.any(self.maxs < self.mins):
            raise FeatureError("max < min in scaler state")
        span = self.maxs - self.mins
        self._span = np.where(span > 0.0, span, 1.0)
        self._constant = span == 0.0

    @classmethod
    def fit(cls, X: np.ndarray) -> "MinMaxScaler":
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.size == 0:
            raise FeatureError("cannot fit a scaler on empty data")
        return cls(X.min(axis=0), X.max(axis=0))

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        out = (X - self.mins) / self._span
        if self._constant.any():
            out = np.where(self._constant, 0.0, out)
        return out

    def inverse(self, Xn: np.ndarray) -> np.ndarray:
        Xn = np.asarray(Xn, dtype=float)
        return np.where(self._constant, self.mins, Xn * self._span + self.mins)

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "MinMaxScaler":
        return cls(np.asarray(d["mins"]), np.asarray(d["maxs"]))


@dataclass(frozen=True)
class NormalizationState:
    """Fitted Max-Min state for a feature matrix and its target column."""

    features: MinMaxScaler
    target: MinMaxScaler

    def to_dict(self) -> dict:
        return {"features": self.features.to_dict(), "target": self.target.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationState":
        return cls(MinMaxScaler.from_dict(d["features"]),
                   MinMaxScaler.from_dict(d["target"]))


def fit_normalizer(rows, targets) -> NormalizationState:
    """Fit Max-Min scalers for feature rows and their target values."""
    if isinstance(rows, np.ndarray):
        X = rows
    else:
        rows = list(rows)
        if rows and isinstance(rows[0], FeatureVector):
            X = np.array([r.values for r in rows], dtype=float)
        else:
            X = np.asarray(rows, dtype=float)
    y = np.asarray(targets, dtype=float).reshape(-1, 1)
    if X.size == 0 or y.size == 0:
        raise FeatureError("cannot fit a normalizer on empty training data")
    if X.shape[0] != y.shape[0]:
        raise FeatureError(f"{X.shape[0]} feature rows vs {y.shape[0]} targets")
    return NormalizationState(MinMaxScaler.fit(X), MinMaxScaler.fit(y))
