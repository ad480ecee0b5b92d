import hashlib
import json

import numpy as np
import pytest

from porophys.dataio import (
    BadCellError,
    DataFormatError,
    DuplicatePartError,
    LayoutError,
    MissingColumnError,
    PorosityRecord,
    SynthSpec,
    default_ground_truth,
    generate_synthetic,
    load_build_setup,
    load_parts,
    load_porosity,
    synthesize,
    write_build_setup,
    write_parts,
    write_porosity,
)
from porophys.geometry import BuildSetup, PartInstance

PARTS_HEADER = "part_id,x_mm,y_mm,pose_id,diameter_mm,height_mm\n"
PORO_HEADER = "part_id,max_d_um,mean_d_um,median_d_um,median_spacing_um\n"


class TestLoadParts:
    def test_well_formed_rows(self, tmp_path):
        path = tmp_path / "parts.csv"
        path.write_text(PARTS_HEADER +
                        "a,10.0,20.0,0,2.0,4.0\n"
                        "b,30.5,40.5,8,2.0,4.0\n"
                        "c,60.0,60.0,3,1.5,3.0\n")
        parts = load_parts(path)
        assert [p.part_id for p in parts] == ["a", "b", "c"]
        assert parts[1].pose_id == 8
        assert parts[2].diameter_mm == 1.5

    def test_missing_column(self, tmp_path):
        path = tmp_path / "parts.csv"
        path.write_text("part_id,x_mm,y_mm,pose_id,diameter_mm\na,1,2,0,2\n")
        with pytest.raises(MissingColumnError, match="height_mm"):
            load_parts(path)

    def test_non_numeric_cell_names_row(self, tmp_path):
        path = tmp_path / "parts.csv"
        path.write_text(PARTS_HEADER + "a,10,20,0,2,4\nb,oops,20,0,2,4\n")
        with pytest.raises(BadCellError, match="row 3"):
            load_parts(path)

    def test_duplicate_part_id_names_both_rows(self, tmp_path):
        path = tmp_path / "parts.csv"
        path.write_text(PARTS_HEADER + "a,10,20,0,2,4\nb,30,20,1,2,4\na,50,20,2,2,4\n")
        with pytest.raises(DuplicatePartError, match=r"'a' at rows 2 and 4"):
            load_parts(path)

    def test_fractional_pose_rejected(self, tmp_path):
        path = tmp_path / "parts.csv"
        path.write_text(PARTS_HEADER + "a,10,20,0.5,2,4\n")
        with pytest.raises(BadCellError, match="pose_id"):
            load_parts(path)

    def test_invariant_violations_carry_row(self, tmp_path):
        path = tmp_path / "parts.csv"
        path.write_text(PARTS_HEADER + "a,10,20,0,-2,4\n")
        with pytest.raises(BadCellError, match="row 2"):
            load_parts(path)

    def test_round_trip(self, tmp_path):
        parts = [PartInstance(f"p{i}", 10.0 + i * 0.123456789, 20.0, i % 9, 2.0, 4.0)
                 for i in range(7)]
        path = tmp_path / "parts.csv"
        write_parts(path, parts)
        loaded = load_parts(path)
        for a, b in zip(parts, loaded):
            assert (a.part_id, a.pose_id) == (b.part_id, b.pose_id)
            assert abs(a.x_mm - b.x_mm) <= 1e-12


class TestLoadPorosity:
    def test_well_formed(self, tmp_path):
        path = tmp_path / "poro.csv"
        path.write_text(PORO_HEADER + "a,100,18,17,60\nb,50,17,18,58\n")
        records = load_porosity(path)
        assert len(records) == 2
        assert records[0].max_d == 100.0

    def test_record_invariants(self):
        with pytest.raises(DataFormatError):
            PorosityRecord("a", -1.0, 1.0, 1.0, 1.0)
        with pytest.raises(DataFormatError, match="max_d"):
            PorosityRecord("a", 10.0, 15.0, 1.0, 1.0)
        # median above or below mean is fine either way
        PorosityRecord("a", 30.0, 15.0, 18.0, 1.0)
        PorosityRecord("a", 30.0, 15.0, 12.0, 1.0)

    def test_invariant_violation_carries_row(self, tmp_path):
        path = tmp_path / "poro.csv"
        path.write_text(PORO_HEADER + "a,10,18,17,60\n")
        with pytest.raises(BadCellError, match="row 2"):
            load_porosity(path)

    def test_duplicate_rejected(self, tmp_path):
        path = tmp_path / "poro.csv"
        path.write_text(PORO_HEADER + "a,100,18,17,60\na,90,18,17,60\n")
        with pytest.raises(DuplicatePartError):
            load_porosity(path)

    def test_round_trip_exact(self, tmp_path):
        records = [PorosityRecord(f"p{i}", 100.0 + i / 7.0, 18.0 + i / 11.0,
                                  17.0 + i / 13.0, 60.0 + i / 17.0)
                   for i in range(9)]
        path = tmp_path / "poro.csv"
        write_porosity(path, records)
        loaded = load_porosity(path)
        for a, b in zip(records, loaded):
            assert (a.max_d, a.mean_d, a.median_d, a.median_spacing) == \
                   (b.max_d, b.mean_d, b.median_d, b.median_spacing)


class TestBuildSetupConfig:
    def test_round_trip(self, tmp_path):
        setup = BuildSetup(parts=(PartInstance("a", 60.0, 60.0, 0, 2.0, 4.0),))
        write_parts(tmp_path / "parts.csv", list(setup.parts))
        write_build_setup(tmp_path / "setup.json", setup, parts_csv="parts.csv")
        loaded = load_build_setup(tmp_path / "setup.json")
        assert loaded.plate_width_mm == setup.plate_width_mm
        assert loaded.gimbal_height_mm == setup.gimbal_height_mm
        assert len(loaded.lasers) == 2
        assert loaded.lasers[0].half == (0.0, 123.5)
        assert loaded.parts[0].part_id == "a"
        assert loaded.parts[0].laser_id == 0

    def test_defaults_without_lasers_section(self, tmp_path):
        (tmp_path / "s.json").write_text(json.dumps({"plate": {"width_mm": 100.0,
                                                               "depth_mm": 100.0}}))
        setup = load_build_setup(tmp_path / "s.json")
        assert setup.plate_width_mm == 100.0
        assert setup.lasers[0].half == (0.0, 50.0)


class TestSynthesize:
    def test_noiseless_targets_are_deterministic_functions(self):
        spec = SynthSpec(n_parts=30, noise_sigma=0.0, seed=1)
        _, first = synthesize(spec)
        _, second = synthesize(SynthSpec(n_parts=30, noise_sigma=0.0, seed=99))
        # noiseless output ignores the seed entirely
        for a, b in zip(first, second):
            assert a == b

    def test_targets_inside_calibration_bands(self):
        spec = SynthSpec(n_parts=60, noise_sigma=0.0, seed=0)
        _, records = synthesize(spec)
        gt = default_ground_truth()
        for r in records:
            assert gt["max_d"].lo <= r.max_d <= gt["max_d"].hi
            assert gt["mean_d"].lo <= r.mean_d <= gt["mean_d"].hi
            assert gt["median_d"].lo <= r.median_d <= gt["median_d"].hi
            assert gt["median_spacing"].lo <= r.median_spacing <= gt["median_spacing"].hi

    def test_noisy_output_satisfies_record_invariants(self):
        spec = SynthSpec(n_parts=80, noise_sigma=0.4, seed=2)
        _, records = synthesize(spec)  # would raise inside if invalid
        assert all(r.max_d >= r.mean_d >= 0.0 for r in records)

    def test_paperlike_poses_cycle_by_row(self):
        spec = SynthSpec(n_parts=81, layout="paperlike", seed=0)
        setup, _ = synthesize(spec)
        n_cols = 9
        poses = [p.pose_id for p in setup.parts]
        assert poses[:n_cols] == [0] * n_cols
        assert poses[n_cols:2 * n_cols] == [1] * n_cols
        assert set(poses) == set(range(9))

    def test_grid_layout_single_pose(self):
        setup, _ = synthesize(SynthSpec(n_parts=16, layout="grid", seed=0))
        assert {p.pose_id for p in setup.parts} == {0}

    def test_layout_overflow_rejected(self):
        with pytest.raises(LayoutError):
            synthesize(SynthSpec(n_parts=100_000, seed=0))

    def test_spec_validation(self):
        with pytest.raises(LayoutError):
            SynthSpec(n_parts=0)
        with pytest.raises(LayoutError):
            SynthSpec(noise_sigma=-0.1)
        with pytest.raises(LayoutError):
            SynthSpec(layout="spiral")


class TestGenerateSynthetic:
    def test_files_and_manifest(self, tmp_path):
        spec = SynthSpec(n_parts=12, noise_sigma=0.05, seed=3)
        paths = generate_synthetic(spec, tmp_path)
        assert sorted(p.name for p in paths.values()) == [
            "manifest.json", "parts.csv", "porosity.csv", "setup.json"
        ]
        manifest = json.loads(paths["manifest"].read_text())
        assert manifest["seed"] == 3
        for name in ("parts", "porosity", "setup"):
            recorded = manifest["files"][name]["sha256"]
            actual = hashlib.sha256((tmp_path / manifest["files"][name]["path"])
                                    .read_bytes()).hexdigest()
            assert recorded == actual

    def test_same_seed_byte_identical(self, tmp_path):
        spec = SynthSpec(n_parts=12, noise_sigma=0.08, seed=7)
        a = generate_synthetic(spec, tmp_path / "a")
        b = generate_synthetic(spec, tmp_path / "b")
        for key in a:
            assert a[key].read_bytes() == b[key].read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a = generate_synthetic(SynthSpec(n_parts=12, noise_sigma=0.08, seed=7),
                               tmp_path / "a")
        b = generate_synthetic(SynthSpec(n_parts=12, noise_sigma=0.08, seed=8),
                               tmp_path / "b")
        assert a["porosity"].read_bytes() != b["porosity"].read_bytes()

    def test_loadable_as_setup(self, tmp_path):
        paths = generate_synthetic(SynthSpec(n_parts=9, seed=0), tmp_path)
        setup = load_build_setup(paths["setup"])
        records = load_porosity(paths["porosity"])
        assert len(setup.parts) == len(records) == 9
        regenerated, expected = synthesize(SynthSpec(n_parts=9, seed=0))
        loaded = np.array([r.mean_d for r in records])
        fresh = np.array([r.mean_d for r in expected])
        assert np.abs(loaded - fresh).max() <= 1e-12
