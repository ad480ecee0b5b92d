"""Quality gating, cross-validation, and the model-family comparison.

Parts are gated into pass / flag / fail by maximum pore diameter. Models are
scored by N-fold cross-validation: each fold trains on the remaining folds
(normalization fit on the training fold only), predicts its test samples, and
contributes the mean of a pluggable error metric; the reported error is the
mean over folds. The comparison grid runs this for every
(quality category x model kind x algorithm x porosity target) cell with a
shared seed.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import regress
from .dataio import PorosityRecord, UnmatchedPartError
from .features import feature_matrix, fit_normalizer, MODEL_KINDS
from .geometry import BuildSetup
from .regress import ALGORITHMS, GprHyper, SvrHyper

METRICS = ("absolute", "standard", "percentage")
TARGETS = ("max_d", "mean_d", "median_d", "median_spacing")
CATEGORIES = ("pass", "flag", "fail")
ALL_CATEGORY = "all"


class EvaluationError(ValueError):
    """Invalid evaluation inputs (fold counts, metric domains, gates)."""


@dataclass(frozen=True)
class QualityGate:
    """Maximum-pore-diameter thresholds separating pass / flag / fail (um)."""

    pass_max_um: float = 97.10
    fail_min_um: float = 220.40

    def __post_init__(self) -> None:
        if not 0.0 < self.pass_max_um < self.fail_min_um:
            raise EvaluationError(
                f"thresholds must satisfy 0 < pass_max < fail_min, got "
                f"{self.pass_max_um}, {self.fail_min_um}"
            )


def gate(max_pore_um: float, quality_gate: QualityGate = QualityGate()) -> str:
    """Quality category of a part from its maximum pore diameter.

    The pass/flag boundary belongs to flag, the flag/fail boundary to fail.
    """
    if max_pore_um < 0.0:
        raise EvaluationError(f"pore diameter must be >= 0, got {max_pore_um}")
    if max_pore_um < quality_gate.pass_max_um:
        return "pass"
    if max_pore_um < quality_gate.fail_min_um:
        return "flag"
    return "fail"


def kfold_split(n_samples: int, n_folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Deterministic shuffled K-fold partition: (train_idx, test_idx) pairs.

    Test folds partition range(n_samples) with sizes differing by at most 1.
    """
    if not 2 <= n_folds <= n_samples:
        raise EvaluationError(
            f"need 2 <= n_folds <= n_samples, got n_folds={n_folds}, n_samples={n_samples}"
        )
    order = np.random.default_rng(seed).permutation(n_samples)
    folds = np.array_split(order, n_folds)
    out = []
    for i, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != i])
        out.append((np.sort(train), np.sort(test)))
    return out


def error_metric(metric: str, y_true: float, y_pred: float, sigma: float | None = None) -> float:
    """Single-sample error: absolute |y-y'|, standard |y-y'|/sigma, or
    percentage |y-y'|/y."""
    diff = abs(y_true - y_pred)
    if metric == "absolute":
        return diff
    if metric == "standard":
        if sigma is None or sigma <= 0.0:
            raise EvaluationError(f"standard error needs sigma > 0, got {sigma}")
        return diff / sigma
    if metric == "percentage":
        if y_true <= 0.0:
            raise EvaluationError(f"percentage error needs y > 0, got {y_true}")
        return diff / y_true
    raise EvaluationError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass
class FoldReport:
    """Cross-validation result: per-fold mean errors and their average."""

    n_folds: int
    metric: str
    fold_errors: list[float]
    mean_error: float
    algorithm: str
    model_kind: str = ""
    porosity_target: str = ""
    quality_category: str = ""


def cross_validate(
    X,
    y,
    algorithm: str,
    n_folds: int = 5,
    metric: str = "percentage",
    seed: int = 0,
    svr: SvrHyper | None = None,
    gpr: GprHyper | None = None,
    labels: dict | None = None,
) -> FoldReport:
    """N-fold cross-validation of one algorithm on raw features/targets.

    Normalization is fit per training fold (no test leakage). Each fold's
    error is the mean metric over its test samples; the report averages the
    fold errors. For the standard metric, sigma is the population standard
    deviation of the fold's training targets.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    fold_errors = []
    for fold_index, (train, test) in enumerate(kfold_split(len(y), n_folds, seed)):
        try:
            model = regress.train(X[train], y[train], algorithm, svr=svr, gpr=gpr)
            preds = model.predict(X[test])
        except regress.ConvergenceError as exc:
            raise regress.ConvergenceError(f"fold {fold_index}: {exc}", exc.kkt_gap) from exc
        except regress.FactorizationError as exc:
            raise regress.FactorizationError(f"fold {fold_index}: {exc}") from exc
        sigma = float(y[train].std()) if metric == "standard" else None
        errs = [error_metric(metric, yt, yp, sigma) for yt, yp in zip(y[test], preds)]
        fold_errors.append(float(np.mean(errs)))
    labels = labels or {}
    return FoldReport(
        n_folds=n_folds,
        metric=metric,
        fold_errors=fold_errors,
        mean_error=float(np.mean(fold_errors)),
        algorithm=algorithm,
        **labels,
    )


# --------------------------------------------------------------------------
# dataset assembly and the comparison grid


@dataclass
class PartDataset:
    """Joined features and porosity targets for one plate of parts."""

    part_ids: tuple[str, ...]
    features: dict[str, np.ndarray]
    feature_names: dict[str, tuple[str, ...]]
    targets: dict[str, np.ndarray]
    categories: np.ndarray


def build_dataset(
    setup: BuildSetup,
    records: list[PorosityRecord],
    quality_gate: QualityGate = QualityGate(),
    grid_k: int = 1,
) -> PartDataset:
    """Compute all three feature kinds and align porosity targets by part_id."""
    by_id = {r.part_id: r for r in records}
    missing = [p.part_id for p in setup.parts if p.part_id not in by_id]
    extra = [r.part_id for r in records if all(p.part_id != r.part_id for p in setup.parts)]
    if missing or extra:
        raise UnmatchedPartError(
            f"parts without porosity: {missing[:5]}{'...' if len(missing) > 5 else ''}; "
            f"porosity without parts: {extra[:5]}{'...' if len(extra) > 5 else ''}"
        )
    features, names = {}, {}
    for kind in MODEL_KINDS:
        X, feature_names, part_ids = feature_matrix(setup, kind, grid_k)
        features[kind] = X
        names[kind] = feature_names
    ordered = [by_id[p.part_id] for p in setup.parts]
    targets = {
        "max_d": np.array([r.max_d for r in ordered]),
        "mean_d": np.array([r.mean_d for r in ordered]),
        "median_d": np.array([r.median_d for r in ordered]),
        "median_spacing": np.array([r.median_spacing for r in ordered]),
    }
    categories = np.array([gate(r.max_d, quality_gate) for r in ordered])
    return PartDataset(part_ids, features, names, targets, categories)


@dataclass(frozen=True)
class ComparisonConfig:
    n_folds: int = 5
    metric: str = "percentage"
    seed: int = 0
    categories: tuple[str, ...] = (ALL_CATEGORY,) + CATEGORIES
    model_kinds: tuple[str, ...] = MODEL_KINDS
    algorithms: tuple[str, ...] = ALGORITHMS
    targets: tuple[str, ...] = TARGETS
    svr: SvrHyper | None = None
    gpr: GprHyper | None = None
    jobs: int = 1


@dataclass
class ComparisonCell:
    category: str
    model_kind: str
    algorithm: str
    target: str
    error: float | None
    n_samples: int
    note: str = ""


def run_comparison(dataset: PartDataset, config: ComparisonConfig) -> list[ComparisonCell]:
    """Cross-validate every grid cell; shares the seed so all cells of a
    category see the identical fold partition. Categories with fewer samples
    than folds yield an "insufficient data" cell instead of failing the run."""
    index = {
        ALL_CATEGORY: np.arange(len(dataset.part_ids)),
        **{c: np.flatnonzero(dataset.categories == c) for c in CATEGORIES},
    }
    cells_spec = [
        (category, kind, algorithm, target)
        for category in config.categories
        for kind in config.model_kinds
        for algorithm in config.algorithms
        for target in config.targets
    ]

    def one_cell(spec) -> ComparisonCell:
        category, kind, algorithm, target = spec
        rows = index[category]
        if len(rows) < config.n_folds:
            return ComparisonCell(category, kind, algorithm, target,
                                  None, len(rows), note="insufficient data")
        report = cross_validate(
            dataset.features[kind][rows],
            dataset.targets[target][rows],
            algorithm,
            n_folds=config.n_folds,
            metric=config.metric,
            seed=config.seed,
            svr=config.svr,
            gpr=config.gpr,
        )
        return ComparisonCell(category, kind, algorithm, target,
                              report.mean_error, len(rows))

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(one_cell, cells_spec))
    else:
        results = [one_cell(spec) for spec in cells_spec]
    return results


def write_comparison(cells: list[ComparisonCell], out_dir, stem: str = "comparison_matrix"):
    """Write the grid as long-format CSV plus a JSON twin; returns both paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["category", "model", "algorithm", "target", "error", "n_samples"])
        for c in cells:
            writer.writerow([
                c.category, c.model_kind, c.algorithm, c.target,
                "" if c.error is None else repr(c.error), c.n_samples,
            ])
    json_path = out_dir / f"{stem}.json"
    payload = [
        {"category": c.category, "model": c.model_kind, "algorithm": c.algorithm,
         "target": c.target, "error": c.error, "n_samples": c.n_samples,
         "note": c.note}
        for c in cells
    ]
    json_path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return csv_path, json_path
