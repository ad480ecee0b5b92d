"""Data ingestion, synthetic-plate generation, and report persistence.

CSV loaders validate against the documented schemas and attach row numbers to
every complaint. The synthetic generator lays parts on a plate, derives
porosity targets from the parts' physics features through a configurable
ground-truth mapping, and is byte-deterministic for a given seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .features import feature_matrix
from .geometry import (
    BuildSetup,
    GeometryError,
    LaserSpec,
    PartInstance,
    DEFAULT_LAYERS_PER_PART,
)

PARTS_COLUMNS = ("part_id", "x_mm", "y_mm", "pose_id", "diameter_mm", "height_mm")
POROSITY_COLUMNS = ("part_id", "max_d_um", "mean_d_um", "median_d_um", "median_spacing_um")


class DataFormatError(ValueError):
    """A file does not conform to its documented schema."""


class MissingColumnError(DataFormatError):
    pass


class BadCellError(DataFormatError):
    pass


class DuplicatePartError(DataFormatError):
    pass


class UnmatchedPartError(DataFormatError):
    pass


class LayoutError(ValueError):
    """Requested synthetic layout does not fit on the plate."""


@dataclass(frozen=True)
class PorosityRecord:
    """Per-part porosity measurements (all in micrometres)."""

    part_id: str
    max_d: float
    mean_d: float
    median_d: float
    median_spacing: float

    def __post_init__(self) -> None:
        for name in ("max_d", "mean_d", "median_d", "median_spacing"):
            if getattr(self, name) < 0.0:
                raise DataFormatError(f"part {self.part_id}: {name} must be >= 0")
        if self.max_d < self.mean_d:
            raise DataFormatError(
                f"part {self.part_id}: max_d {self.max_d} < mean_d {self.mean_d}"
            )


def _read_rows(path, expected_columns) -> list[dict[str, str]]:
    path = Path(path)
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in expected_columns if c not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing columns {missing} (header {header})")
        return list(reader)


def _cell_float(path, row_number: int, column: str, raw: str | None) -> float:
    try:
        value = float(raw)  # type: ignore[arg-type]
    except (TypeError, ValueError):
        raise BadCellError(
            f"{path}: row {row_number}: column {column!r} is not numeric: {raw!r}"
        ) from None
    if not math.isfinite(value):
        raise BadCellError(f"{path}: row {row_number}: column {column!r} is not finite")
    return value


def load_parts(path) -> list[PartInstance]:
    """Load the parts CSV (part_id,x_mm,y_mm,pose_id,diameter_mm,height_mm)."""
    parts, seen = [], {}
    for i, row in enumerate(_read_rows(path, PARTS_COLUMNS), start=2):
        part_id = (row.get("part_id") or "").strip()
        if not part_id:
            raise BadCellError(f"{path}: row {i}: empty part_id")
        if part_id in seen:
            raise DuplicatePartError(
                f"{path}: duplicate part_id {part_id!r} at rows {seen[part_id]} and {i}"
            )
        seen[part_id] = i
        pose = _cell_float(path, i, "pose_id", row.get("pose_id"))
        if pose != int(pose):
            raise BadCellError(f"{path}: row {i}: pose_id must be an integer, got {pose}")
        try:
            parts.append(PartInstance(
                part_id,
                _cell_float(path, i, "x_mm", row.get("x_mm")),
                _cell_float(path, i, "y_mm", row.get("y_mm")),
                int(pose),
                _cell_float(path, i, "diameter_mm", row.get("diameter_mm")),
                _cell_float(path, i, "height_mm", row.get("height_mm")),
            ))
        except GeometryError as exc:
            raise BadCellError(f"{path}: row {i}: {exc}") from exc
    return parts


def load_porosity(path) -> list[PorosityRecord]:
    """Load the porosity CSV (part_id,max_d_um,mean_d_um,median_d_um,median_spacing_um)."""
    records, seen = [], {}
    for i, row in enumerate(_read_rows(path, POROSITY_COLUMNS), start=2):
        part_id = (row.get("part_id") or "").strip()
        if not part_id:
            raise BadCellError(f"{path}: row {i}: empty part_id")
        if part_id in seen:
            raise DuplicatePartError(
                f"{path}: duplicate part_id {part_id!r} at rows {seen[part_id]} and {i}"
            )
        seen[part_id] = i
        try:
            records.append(PorosityRecord(
                part_id,
                _cell_float(path, i, "max_d_um", row.get("max_d_um")),
                _cell_float(path, i, "mean_d_um", row.get("mean_d_um")),
                _cell_float(path, i, "median_d_um", row.get("median_d_um")),
                _cell_float(path, i, "median_spacing_um", row.get("median_spacing_um")),
            ))
        except DataFormatError as exc:
            if isinstance(exc, BadCellError):
                raise
            raise BadCellError(f"{path}: row {i}: {exc}") from exc
    return records


def write_parts(path, parts: list[PartInstance]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PARTS_COLUMNS)
        for p in parts:
            writer.writerow([p.part_id, repr(p.x_mm), repr(p.y_mm), p.pose_id,
                             repr(p.diameter_mm), repr(p.height_mm)])


def write_porosity(path, records: list[PorosityRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(POROSITY_COLUMNS)
        for r in records:
            writer.writerow([r.part_id, repr(r.max_d), repr(r.mean_d),
                             repr(r.median_d), repr(r.median_spacing)])


# --------------------------------------------------------------------------
# build-setup configuration


def load_build_setup(path) -> BuildSetup:
    """Read a build-setup JSON document; its parts_csv path resolves relative
    to the document's directory."""
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    plate = doc.get("plate", {})
    lasers = tuple(
        LaserSpec(
            x_mm=entry["x_mm"],
            y_mm=entry["y_mm"],
            power_w=entry.get("power_w", 160.0),
            spot_area_mm2=entry.get("spot_area_mm2", LaserSpec.__dataclass_fields__["spot_area_mm2"].default),
            wavelength_m=entry.get("wavelength_m", 1.07e-6),
            half=tuple(entry["half"]),
        )
        for entry in doc.get("lasers", [])
    )
    parts: tuple[PartInstance, ...] = ()
    if doc.get("parts_csv"):
        parts_path = Path(doc["parts_csv"])
        if not parts_path.is_absolute():
            parts_path = path.parent / parts_path
        parts = tuple(load_parts(parts_path))
    return BuildSetup(
        plate_width_mm=plate.get("width_mm", 247.0),
        plate_depth_mm=plate.get("depth_mm", 247.0),
        gimbal_height_mm=doc.get("gimbal_height_mm", 482.6),
        lasers=lasers,
        parts=parts,
        layers_per_part=doc.get("layers_per_part", DEFAULT_LAYERS_PER_PART),
    )


def write_build_setup(path, setup: BuildSetup, parts_csv: str | None = None) -> None:
    doc = {
        "plate": {"width_mm": setup.plate_width_mm, "depth_mm": setup.plate_depth_mm},
        "gimbal_height_mm": setup.gimbal_height_mm,
        "layers_per_part": setup.layers_per_part,
        "lasers": [
            {"x_mm": l.x_mm, "y_mm": l.y_mm, "power_w": l.power_w,
             "spot_area_mm2": l.spot_area_mm2, "wavelength_m": l.wavelength_m,
             "half": list(l.half)}
            for l in setup.lasers
        ],
        "parts_csv": parts_csv,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# synthetic data generation


@dataclass(frozen=True)
class GroundTruthTerm:
    """One additive term: weight times a plate-normalized physics feature
    (optionally inverted, i.e. 1 - u)."""

    feature: str
    weight: float
    invert: bool = False


@dataclass(frozen=True)
class TargetRule:
    """Target = lo + (hi - lo) * convex combination of normalized features."""

    lo: float
    hi: float
    terms: tuple[GroundTruthTerm, ...]


def default_ground_truth() -> dict[str, TargetRule]:
    """Porosity shrinks with concentrated beam energy and grows with its
    layer-to-layer variance; bands follow published LPBF pore statistics."""
    ed_ave = "energy_density_AVE"
    ed_sdev = "energy_density_SDEV"
    fh_ave = "horizontal_pressure_AVE"
    return {
        "max_d": TargetRule(35.44, 189.58, (
            GroundTruthTerm(ed_ave, 0.7, invert=True),
            GroundTruthTerm(ed_sdev, 0.3),
        )),
        "mean_d": TargetRule(16.17, 20.60, (
            GroundTruthTerm(ed_ave, 0.6, invert=True),
            GroundTruthTerm(ed_sdev, 0.4),
        )),
        "median_d": TargetRule(15.13, 19.90, (
            GroundTruthTerm(ed_ave, 0.55, invert=True),
            GroundTruthTerm(ed_sdev, 0.45),
        )),
        "median_spacing": TargetRule(54.87, 63.78, (
            GroundTruthTerm(ed_ave, 0.5),
            GroundTruthTerm(fh_ave, 0.5, invert=True),
        )),
    }


@dataclass(frozen=True)
class SynthSpec:
    n_parts: int = 549
    layout: str = "paperlike"  # "paperlike" (9-orientation rows) or "grid"
    noise_sigma: float = 0.0
    seed: int = 0
    diameter_mm: float = 2.0
    height_mm: float = 4.0
    margin_mm: float = 10.0
    ground_truth: dict[str, TargetRule] = field(default_factory=default_ground_truth)

    def __post_init__(self) -> None:
        if self.n_parts < 1:
            raise LayoutError(f"n_parts must be >= 1, got {self.n_parts}")
        if self.noise_sigma < 0.0:
            raise LayoutError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.layout not in ("paperlike", "grid"):
            raise LayoutError(f"unknown layout {self.layout!r}")


def _layout_parts(spec: SynthSpec, setup: BuildSetup) -> list[PartInstance]:
    """Rows x columns of cylinders. The paperlike layout cycles the nine
    orientations row by row; the grid layout keeps pose 0 everywhere."""
    n_cols = math.ceil(math.sqrt(spec.n_parts))
    n_rows = math.ceil(spec.n_parts / n_cols)
    usable_w = setup.plate_width_mm - 2 * spec.margin_mm
    usable_d = setup.plate_depth_mm - 2 * spec.margin_mm
    if usable_w <= 0 or usable_d <= 0:
        raise LayoutError("margins exceed the plate")
    pitch_x = usable_w / n_cols
    pitch_y = usable_d / n_rows
    if min(pitch_x, pitch_y) < spec.diameter_mm:
        raise LayoutError(
            f"{spec.n_parts} parts of diameter {spec.diameter_mm} mm do not fit "
            f"on the {setup.plate_width_mm} x {setup.plate_depth_mm} mm plate"
        )
    parts = []
    for idx in range(spec.n_parts):
        row, col = divmod(idx, n_cols)
        pose = row % 9 if spec.layout == "paperlike" else 0
        parts.append(PartInstance(
            part_id=f"P{idx:04d}",
            x_mm=spec.margin_mm + (col + 0.5) * pitch_x,
            y_mm=spec.margin_mm + (row + 0.5) * pitch_y,
            pose_id=pose,
            diameter_mm=spec.diameter_mm,
            height_mm=spec.height_mm,
        ))
    return parts


def synthesize(spec: SynthSpec, setup: BuildSetup | None = None
               ) -> tuple[BuildSetup, list[PorosityRecord]]:
    """Lay parts on the plate and derive their porosity records.

    Targets are the ground-truth mapping of plate-normalized physics features,
    then multiplied by (1 + noise_sigma * N(0,1)) and clamped to stay valid.
    Deterministic for a given seed.
    """
    base = setup or BuildSetup()
    placed = BuildSetup(
        plate_width_mm=base.plate_width_mm,
        plate_depth_mm=base.plate_depth_mm,
        gimbal_height_mm=base.gimbal_height_mm,
        lasers=base.lasers,
        parts=tuple(_layout_parts(spec, base)),
        layers_per_part=base.layers_per_part,
    )
    X, names, part_ids = feature_matrix(placed, "physics")
    spans = X.max(axis=0) - X.min(axis=0)
    spans = np.where(spans > 0.0, spans, 1.0)
    U = (X - X.min(axis=0)) / spans
    col = {name: i for i, name in enumerate(names)}
    rng = np.random.default_rng(spec.seed)
    values: dict[str, np.ndarray] = {}
    for target, rule in spec.ground_truth.items():
        mix = np.zeros(len(part_ids))
        for term in rule.terms:
            u = U[:, col[term.feature]]
            mix += term.weight * ((1.0 - u) if term.invert else u)
        y = rule.lo + (rule.hi - rule.lo) * mix
        if spec.noise_sigma > 0.0:
            y = y * (1.0 + spec.noise_sigma * rng.standard_normal(len(y)))
        values[target] = np.maximum(y, 0.0)
    values["max_d"] = np.maximum(values["max_d"], values["mean_d"])
    records = [
        PorosityRecord(pid, float(values["max_d"][i]), float(values["mean_d"][i]),
                       float(values["median_d"][i]), float(values["median_spacing"][i]))
        for i, pid in enumerate(part_ids)
    ]
    return placed, records


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def generate_synthetic(spec: SynthSpec, out_dir, setup: BuildSetup | None = None) -> dict[str, Path]:
    """Write parts.csv, porosity.csv, setup.json, and a manifest.json with
    the spec and file checksums. Byte-identical for identical inputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    placed, records = synthesize(spec, setup)
    paths = {
        "parts": out_dir / "parts.csv",
        "porosity": out_dir / "porosity.csv",
        "setup": out_dir / "setup.json",
    }
    write_parts(paths["parts"], list(placed.parts))
    write_porosity(paths["porosity"], records)
    write_build_setup(paths["setup"], placed, parts_csv="parts.csv")
    spec_doc = asdict(spec)
    spec_doc["ground_truth"] = {
        t: {"lo": r.lo, "hi": r.hi,
            "terms": [asdict(term) for term in r.terms]}
        for t, r in spec.ground_truth.items()
    }
    manifest = {
        "spec": spec_doc,
        "seed": spec.seed,
        "files": {k: {"path": p.name, "sha256": _sha256(p)} for k, p in paths.items()},
    }
    paths["manifest"] = out_dir / "manifest.json"
    paths["manifest"].write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return paths
