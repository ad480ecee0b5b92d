"""Command-line entry point.

Subcommands: synth (generate a synthetic plate), features (emit feature
CSVs), train (fit and persist one model), evaluate (cross-validated
comparison grid), explain (effect-porosity maps and influence regions), and
physics (single-point probe). Every file-writing run drops its resolved
configuration next to its outputs so it can be reproduced exactly.

Exit codes: 0 success, 2 usage error, 3 missing input file, 4 malformed data
file, 5 invalid configuration or out-of-domain value, 6 solver failure,
1 unexpected internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import dataio, evaluate, influence, physics, plots, regress
from .evaluate import ComparisonConfig, QualityGate
from .features import MODEL_KINDS, feature_matrix
from .geometry import GeometryError
from .regress import ALGORITHMS, GprHyper, KernelSpec, SvrHyper

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_BAD_DATA = 4
EXIT_BAD_CONFIG = 5
EXIT_SOLVER = 6

log = logging.getLogger("porophys")


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("POROPHYS_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _write_run_config(out_dir: Path, args) -> None:
    """Persist the resolved flag values; feeding the file back through
    --config reproduces the run."""
    out_dir.mkdir(parents=True, exist_ok=True)
    params = {k: v for k, v in vars(args).items()
              if k not in ("func", "config", "command")}
    doc = {"command": args.command, **params}
    (out_dir / "run_config.json").write_text(
        json.dumps(doc, indent=2, default=str) + "\n", encoding="utf-8"
    )


def _load_setup(args) -> "dataio.BuildSetup":
    if args.setup:
        return dataio.load_build_setup(args.setup)
    return dataio.BuildSetup()


# --------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = dataio.SynthSpec(
        n_parts=args.parts,
        layout=args.layout,
        noise_sigma=args.noise,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    paths = dataio.generate_synthetic(spec, out_dir, setup=_load_setup(args))
    _write_run_config(out_dir, args)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_features(args) -> int:
    setup = dataio.load_build_setup(args.setup)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    import csv as _csv

    for kind in MODEL_KINDS:
        X, names, part_ids = feature_matrix(setup, kind, grid_k=args.grid_k)
        path = out_dir / f"features_{kind}.csv"
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["part_id", "model_kind", *names])
            for pid, row in zip(part_ids, X):
                writer.writerow([pid, kind, *[repr(float(v)) for v in row]])
        print(f"features ({kind}): {path}")
    _write_run_config(out_dir, args)
    return EXIT_OK


def _svr_hyper(args) -> SvrHyper:
    return SvrHyper(C=args.svr_c, epsilon=args.svr_epsilon,
                    kernel=KernelSpec(sigma=args.rbf_sigma, degree=args.poly_degree),
                    tol=args.svr_tol)


def cmd_train(args) -> int:
    setup = dataio.load_build_setup(args.setup)
    records = dataio.load_porosity(args.porosity)
    gate = QualityGate(args.gate_pass, args.gate_fail)
    dataset = evaluate.build_dataset(setup, records, gate, grid_k=args.grid_k)
    X = dataset.features[args.model_kind]
    y = dataset.targets[args.target]
    gpr = None
    if args.algorithm == "GPR" and args.gpr_grid is False:
        gpr = GprHyper(args.gpr_signal_var, args.gpr_length_scale, args.gpr_noise_var)
    model = regress.train(X, y, args.algorithm, svr=_svr_hyper(args), gpr=gpr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    regress.save_model(model, out)
    _write_run_config(out.parent, args)
    print(f"model: {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    setup = dataio.load_build_setup(args.setup)
    records = dataio.load_porosity(args.porosity)
    gate = QualityGate(args.gate_pass, args.gate_fail)
    dataset = evaluate.build_dataset(setup, records, gate, grid_k=args.grid_k)
    config = ComparisonConfig(
        n_folds=args.folds,
        metric=args.metric,
        seed=args.seed,
        model_kinds=tuple(args.models),
        algorithms=tuple(args.algorithms),
        targets=tuple(args.targets),
        svr=_svr_hyper(args),
        jobs=args.jobs,
    )
    cells = evaluate.run_comparison(dataset, config)
    out_dir = Path(args.out)
    csv_path, json_path = evaluate.write_comparison(cells, out_dir)
    print(f"comparison: {csv_path}")
    print(f"comparison: {json_path}")
    if args.figures:
        for category in config.categories:
            if any(c.category == category and c.error is not None for c in cells):
                fig = plots.save_comparison_figure(
                    cells, out_dir / f"comparison_{category}.png", category=category
                )
                print(f"figure: {fig}")
    _write_run_config(out_dir, args)
    return EXIT_OK


def cmd_explain(args) -> int:
    setup = dataio.load_build_setup(args.setup)
    records = dataio.load_porosity(args.porosity)
    gate = QualityGate(args.gate_pass, args.gate_fail)
    dataset = evaluate.build_dataset(setup, records, gate, grid_k=args.grid_k)
    params = influence.RegionParams(
        n_bins=args.bins,
        suppress_quota=args.suppress_quota,
        encourage_quota=args.encourage_quota,
        suppress_porosity=args.suppress_porosity,
        encourage_porosity=args.encourage_porosity,
        min_support=args.min_support,
        outlier_cut=args.outlier_cut,
    )
    maps = influence.dataset_maps(dataset, setup, targets=args.targets,
                                  params=params, grid_k=args.grid_k)
    regions = {m.name: influence.detect_regions(m, params) for m in maps}
    out_dir = Path(args.out)
    written = influence.export_maps(maps, regions, out_dir)
    print(f"maps: {len(maps)} CSV files and {written[-1]}")
    if args.figures:
        for emap in maps:
            plots.save_map_figure(emap, regions[emap.name], out_dir / f"map_{emap.name}.png")
        print(f"figures: {len(maps)} PNG files in {out_dir}")
    _write_run_config(out_dir, args)
    return EXIT_OK


def cmd_physics(args) -> int:
    theta = math.radians(args.theta_deg)
    spot_area_m2 = args.spot_area_mm2 / physics.MM2_PER_M2
    effects = physics.point_effects(args.power, spot_area_m2, theta)
    budget = physics.photon_budget(args.power, args.wavelength)
    doc = physics.report_units(effects)
    doc["photon"] = {
        "photon_energy_j": budget.photon_energy_j,
        "photon_momentum_kg_m_s": budget.photon_momentum_kg_m_s,
        "photons_per_second": budget.photons_per_second,
        "total_force_n": budget.total_force_n,
    }
    print(json.dumps(doc, indent=2))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="porophys",
        description="Physical-effect features and porosity models for laser powder bed fusion.",
        epilog=(
            "exit codes: 0 ok, 2 usage, 3 missing input file, 4 malformed data file, "
            "5 invalid configuration, 6 solver failure, 1 unexpected error. "
            "Set POROPHYS_LOG={error|info|debug} for log verbosity."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    parser.subcommands = {}  # type: ignore[attr-defined]

    def add_common(p):
        p.add_argument("--config", default=None, metavar="PATH",
                       help="JSON file of flag values (explicit flags win); "
                            "a previous run's run_config.json replays that run")
        p.add_argument("--seed", type=int, default=0, help="random seed")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker pool size (default: logical cores)")
        p.add_argument("--grid-k", dest="grid_k", type=int, default=1,
                       help="layer sampling grid (1 = layer center only)")

    def add_gate(p):
        p.add_argument("--gate-pass", type=float, default=97.10,
                       help="pass/flag threshold on max pore diameter (um)")
        p.add_argument("--gate-fail", type=float, default=220.40,
                       help="flag/fail threshold on max pore diameter (um)")

    def add_svr(p):
        p.add_argument("--svr-c", type=float, default=10.0, help="SVR box constraint C")
        p.add_argument("--svr-epsilon", type=float, default=0.05,
                       help="SVR tube half-width (normalized target scale)")
        p.add_argument("--svr-tol", type=float, default=1e-3, help="SVR KKT tolerance")
        p.add_argument("--rbf-sigma", type=float, default=1.0, help="rbf kernel bandwidth")
        p.add_argument("--poly-degree", type=int, default=2, help="polynomial kernel degree")

    p = sub.add_parser("synth", help="generate a synthetic plate + porosity dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--parts", type=int, default=549)
    p.add_argument("--layout", choices=["paperlike", "grid"], default="paperlike")
    p.add_argument("--noise", type=float, default=0.0, help="relative noise sigma")
    p.add_argument("--setup", default=None, help="build-setup JSON (plate/lasers only)")
    add_common(p)
    p.set_defaults(func=cmd_synth)
    parser.subcommands["synth"] = p  # type: ignore[attr-defined]

    p = sub.add_parser("features", help="emit feature CSVs for all three model kinds")
    p.add_argument("--setup", required=True, help="build-setup JSON (with parts_csv)")
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_features)
    parser.subcommands["features"] = p  # type: ignore[attr-defined]

    p = sub.add_parser("train", help="fit one model and persist it as JSON")
    p.add_argument("--setup", required=True)
    p.add_argument("--porosity", required=True)
    p.add_argument("--model-kind", choices=list(MODEL_KINDS), default="physics")
    p.add_argument("--algorithm", choices=list(ALGORITHMS), default="svrRBF")
    p.add_argument("--target", choices=list(evaluate.TARGETS), default="max_d")
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--gpr-grid", action="store_true", default=True,
                   help="grid-search GPR hyperparameters (default)")
    p.add_argument("--no-gpr-grid", dest="gpr_grid", action="store_false")
    p.add_argument("--gpr-signal-var", type=float, default=1.0)
    p.add_argument("--gpr-length-scale", type=float, default=1.0)
    p.add_argument("--gpr-noise-var", type=float, default=0.1)
    add_gate(p)
    add_svr(p)
    add_common(p)
    p.set_defaults(func=cmd_train)
    parser.subcommands["train"] = p  # type: ignore[attr-defined]

    p = sub.add_parser("evaluate", help="cross-validated model-family comparison")
    p.add_argument("--setup", required=True)
    p.add_argument("--porosity", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--metric", choices=list(evaluate.METRICS), default="percentage")
    p.add_argument("--targets", nargs="+", choices=list(evaluate.TARGETS),
                   default=list(evaluate.TARGETS))
    p.add_argument("--algorithms", nargs="+", choices=list(ALGORITHMS),
                   default=list(ALGORITHMS))
    p.add_argument("--models", nargs="+", choices=list(MODEL_KINDS),
                   default=list(MODEL_KINDS))
    p.add_argument("--figures", action="store_true", default=True,
                   help="render comparison charts (default)")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    add_gate(p)
    add_svr(p)
    add_common(p)
    p.set_defaults(func=cmd_evaluate)
    parser.subcommands["evaluate"] = p  # type: ignore[attr-defined]

    p = sub.add_parser("explain", help="effect-porosity maps and influence regions")
    p.add_argument("--setup", required=True)
    p.add_argument("--porosity", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--targets", nargs="+", choices=list(evaluate.TARGETS),
                   default=list(evaluate.TARGETS))
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--suppress-quota", type=float, default=0.8)
    p.add_argument("--encourage-quota", type=float, default=0.5)
    p.add_argument("--suppress-porosity", type=float, default=0.3)
    p.add_argument("--encourage-porosity", type=float, default=0.3)
    p.add_argument("--min-support", type=int, default=5)
    p.add_argument("--outlier-cut", type=float, default=0.3)
    p.add_argument("--figures", action="store_true", default=True,
                   help="render map figures (default)")
    p.add_argument("--no-figures", dest="figures", action="store_false")
    add_gate(p)
    add_common(p)
    p.set_defaults(func=cmd_explain)
    parser.subcommands["explain"] = p  # type: ignore[attr-defined]

    p = sub.add_parser("physics", help="single-point physical-effect probe")
    p.add_argument("probe", choices=["probe"], help="probe subaction")
    p.add_argument("--theta-deg", type=float, default=0.0)
    p.add_argument("--power", type=float, default=160.0, help="laser power (W)")
    p.add_argument("--spot-area-mm2", type=float,
                   default=math.pi * 0.025**2, help="source spot area (mm^2)")
    p.add_argument("--wavelength", type=float, default=1.07e-6, help="wavelength (m)")
    p.set_defaults(func=cmd_physics)
    parser.subcommands["physics"] = p  # type: ignore[attr-defined]

    return parser


def _apply_config_defaults(parser, argv) -> None:
    """Load --config JSON (if any) as the subcommand's defaults, so values
    given explicitly on the command line still win."""
    command = next((tok for tok in argv if tok in parser.subcommands), None)
    config_path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            config_path = argv[i + 1]
        elif tok.startswith("--config="):
            config_path = tok.split("=", 1)[1]
    if not config_path or command is None:
        return
    doc = json.loads(Path(config_path).read_text(encoding="utf-8"))
    recorded = doc.pop("command", command)
    if recorded != command:
        raise ValueError(f"config file is for command {recorded!r}, not {command!r}")
    subparser = parser.subcommands[command]
    known = {action.dest for action in subparser._actions}
    unknown = set(doc) - known
    if unknown:
        raise ValueError(f"unknown config keys for {command}: {sorted(unknown)}")
    provided = {k: v for k, v in doc.items() if v is not None}
    subparser.set_defaults(**provided)
    for action in subparser._actions:
        if action.required and action.dest in provided:
            action.required = False


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    if argv is None:
        argv = sys.argv[1:]
    try:
        _apply_config_defaults(parser, argv)
    except FileNotFoundError as exc:
        print(f"porophys: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ValueError, KeyError) as exc:
        print(f"porophys: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"porophys: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except dataio.DataFormatError as exc:
        print(f"porophys: bad data: {exc}", file=sys.stderr)
        return EXIT_BAD_DATA
    except (regress.ConvergenceError, regress.FactorizationError) as exc:
        print(f"porophys: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ValueError, KeyError) as exc:
        print(f"porophys: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_BAD_CONFIG
    except Exception as exc:  # pragma: no cover - last resort
        log.exception("unexpected error")
        print(f"porophys: unexpected error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
