"""Physics-porosity maps and influence-region detection.

Each map scatters one Max-Min-normalized physical-effect summary against one
normalized porosity target, keeping the raw ranges so intervals can be
reported in physical units. Region detection bins the effect axis and flags
bins where porosity concentrates low (suppressing) or high (encouraging);
adjacent bins of the same kind merge into maximal intervals. For the
maximum-pore target, very large normalized porosity values are treated as
measurement outliers and excluded from suppressing detection.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluate import PartDataset
from .features import AGGREGATORS, EFFECTS, part_profiles

OUTLIER_TARGET = "max_d"


class InfluenceError(ValueError):
    """Degenerate map input or invalid detection parameters."""


@dataclass(frozen=True)
class RegionParams:
    n_bins: int = 20
    suppress_quota: float = 0.8     # fraction of bin samples that must sit low
    encourage_quota: float = 0.5    # fraction of bin samples that must sit high
    suppress_porosity: float = 0.3  # "low" porosity threshold (normalized)
    encourage_porosity: float = 0.3  # "high" porosity threshold (normalized)
    min_support: int = 5
    outlier_cut: float = 0.3        # max-pore-only outlier threshold (normalized)

    def __post_init__(self) -> None:
        if self.n_bins < 2:
            raise InfluenceError(f"n_bins must be >= 2, got {self.n_bins}")
        if self.min_support < 1:
            raise InfluenceError(f"min_support must be >= 1, got {self.min_support}")


@dataclass(frozen=True)
class EffectPorosityMap:
    effect_name: str
    aggregator: str
    target: str
    part_ids: tuple[str, ...]
    effect_norm: np.ndarray
    effect_raw: np.ndarray
    porosity_norm: np.ndarray
    porosity_raw: np.ndarray
    outlier_flag: np.ndarray
    effect_range: tuple[float, float]
    porosity_range: tuple[float, float]

    @property
    def name(self) -> str:
        return f"{self.effect_name}_{self.aggregator}_vs_{self.target}"


@dataclass(frozen=True)
class InfluenceRegion:
    kind: str  # "suppressing" | "encouraging"
    lo: float
    hi: float
    lo_raw: float
    hi_raw: float
    support: int


def region_label(aggregator: str, region: InfluenceRegion) -> str:
    """Bracketed raw-unit interval, e.g. "AVE[5.80E+04, 1.00E+05]"."""
    return f"{aggregator}[{region.lo_raw:.2E}, {region.hi_raw:.2E}]"


def build_map(
    effect_values,
    porosity_values,
    part_ids,
    effect_name: str,
    aggregator: str,
    target: str,
    params: RegionParams = RegionParams(),
) -> EffectPorosityMap:
    """Max-Min normalize both axes and keep the raw ranges for reporting."""
    effect_raw = np.asarray(effect_values, dtype=float)
    porosity_raw = np.asarray(porosity_values, dtype=float)
    if effect_raw.size != porosity_raw.size or effect_raw.size == 0:
        raise InfluenceError(
            f"effect/porosity size mismatch: {effect_raw.size} vs {porosity_raw.size}"
        )
    e_lo, e_hi = float(effect_raw.min()), float(effect_raw.max())
    if e_hi <= e_lo:
        raise InfluenceError(
            f"effect axis {effect_name}_{aggregator} is constant ({e_lo}); cannot map"
        )
    p_lo, p_hi = float(porosity_raw.min()), float(porosity_raw.max())
    p_span = (p_hi - p_lo) if p_hi > p_lo else 1.0
    porosity_norm = (porosity_raw - p_lo) / p_span
    outliers = (
        porosity_norm > params.outlier_cut
        if target == OUTLIER_TARGET
        else np.zeros(porosity_norm.size, dtype=bool)
    )
    return EffectPorosityMap(
        effect_name=effect_name,
        aggregator=aggregator,
        target=target,
        part_ids=tuple(part_ids),
        effect_norm=(effect_raw - e_lo) / (e_hi - e_lo),
        effect_raw=effect_raw,
        porosity_norm=porosity_norm,
        porosity_raw=porosity_raw,
        outlier_flag=outliers,
        effect_range=(e_lo, e_hi),
        porosity_range=(p_lo, p_hi),
    )


def detect_regions(emap: EffectPorosityMap, params: RegionParams = RegionParams()) -> list[InfluenceRegion]:
    """Classify effect-axis bins and merge runs of equal kind into regions.

    A bin is suppressing when enough of its non-outlier samples lie below the
    low-porosity threshold, encouraging when enough of all its samples lie
    above the high one; both require min_support samples. A bin qualifying for
    both (possible only through outlier exclusion) counts as suppressing.
    """
    if emap.effect_norm.size == 0:
        raise InfluenceError("empty map")
    edges = np.linspace(0.0, 1.0, params.n_bins + 1)
    which = np.clip(np.digitize(emap.effect_norm, edges[1:-1]), 0, params.n_bins - 1)
    kinds: list[str | None] = []
    for b in range(params.n_bins):
        in_bin = which == b
        kinds.append(_classify_bin(emap, params, in_bin))
    regions: list[InfluenceRegion] = []
    start = None
    for b in range(params.n_bins + 1):
        kind = kinds[b] if b < params.n_bins else None
        if start is not None and (kind != kinds[start]):
            regions.append(_make_region(emap, params, kinds[start], start, b))
            start = None
        if kind is not None and start is None:
            start = b
    return regions


def _classify_bin(emap: EffectPorosityMap, params: RegionParams, in_bin: np.ndarray) -> str | None:
    clean = in_bin & ~emap.outlier_flag
    n_clean = int(clean.sum())
    if n_clean >= params.min_support:
        low = emap.porosity_norm[clean] < params.suppress_porosity
        if low.mean() >= params.suppress_quota:
            return "suppressing"
    n_all = int(in_bin.sum())
    if n_all >= params.min_support:
        high = emap.porosity_norm[in_bin] > params.encourage_porosity
        if high.mean() >= params.encourage_quota:
            return "encouraging"
    return None


def _make_region(emap, params, kind, first_bin, end_bin) -> InfluenceRegion:
    lo = first_bin / params.n_bins
    hi = end_bin / params.n_bins
    e_lo, e_hi = emap.effect_range
    in_region = (emap.effect_norm >= lo) & (emap.effect_norm <= hi)
    return InfluenceRegion(
        kind=kind,
        lo=lo,
        hi=hi,
        lo_raw=e_lo + lo * (e_hi - e_lo),
        hi_raw=e_lo + hi * (e_hi - e_lo),
        support=int(in_region.sum()),
    )


def dataset_maps(
    dataset: PartDataset,
    setup,
    targets=None,
    params: RegionParams = RegionParams(),
    grid_k: int = 1,
) -> list[EffectPorosityMap]:
    """One map per (effect, aggregator, target) triple over a whole dataset."""
    targets = tuple(targets) if targets else tuple(dataset.targets)
    per_part = [part_profiles(setup, part, grid_k) for part in setup.parts]
    maps = []
    for effect in EFFECTS:
        for agg_index, agg in enumerate(AGGREGATORS):
            values = np.array([
                (p[effect].ave, p[effect].sdev, p[effect].min10, p[effect].max10)[agg_index]
                for p in per_part
            ])
            for target in targets:
                maps.append(build_map(
                    values, dataset.targets[target], dataset.part_ids,
                    effect, agg, target, params,
                ))
    return maps


def export_maps(
    maps: list[EffectPorosityMap],
    regions_by_map: dict[str, list[InfluenceRegion]],
    out_dir,
) -> list[Path]:
    """Write one CSV per map plus a regions.json summary; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for emap in maps:
        path = out_dir / f"map_{emap.name}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["part_id", "effect_norm", "effect_raw",
                             "porosity_norm", "porosity_raw", "outlier_flag"])
            for i, pid in enumerate(emap.part_ids):
                writer.writerow([
                    pid, repr(float(emap.effect_norm[i])), repr(float(emap.effect_raw[i])),
                    repr(float(emap.porosity_norm[i])), repr(float(emap.porosity_raw[i])),
                    int(emap.outlier_flag[i]),
                ])
        written.append(path)
    summary = []
    for emap in maps:
        for region in regions_by_map.get(emap.name, []):
            summary.append({
                "effect": emap.effect_name,
                "aggregator": emap.aggregator,
                "target": emap.target,
                "kind": region.kind,
                "lo_norm": region.lo,
                "hi_norm": region.hi,
                "lo_raw": region.lo_raw,
                "hi_raw": region.hi_raw,
                "support": region.support,
                "label": region_label(emap.aggregator, region),
            })
    regions_path = out_dir / "regions.json"
    regions_path.write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    written.append(regions_path)
    return written
