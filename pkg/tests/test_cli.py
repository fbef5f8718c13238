"""CLI behavior: exit codes, golden-file reproduction, manifests.

Golden files live in tests/fixtures and were produced by
tests/fixtures/make_goldens.py on the committed phantom spec; the tests
re-run the same pipelines and require byte-identical output.
"""

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

import flimkit.io as fio
from flimkit.cli import main

FIXTURES = Path(__file__).parent / "fixtures"
SPEC = FIXTURES / "two_region.json"
GOLDEN_CUBE = FIXTURES / "golden_cube.flimcube"


def run_cli(*argv) -> int:
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_unknown_subcommand_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            run_cli("frobnicate")
        assert err.value.code == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_flag_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            run_cli("phasor", "--does-not-exist", "x")
        assert err.value.code == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_missing_input_runtime_error(self, tmp_path, capsys):
        code = run_cli("fit", "--cube", tmp_path / "nope.flimcube",
                       "--out", tmp_path / "out.csv")
        assert code == 1
        assert "fit" in capsys.readouterr().err

    def test_corrupt_cube_runtime_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.flimcube"
        bad.write_bytes(b"not a cube at all")
        code = run_cli("fit", "--cube", bad, "--out", tmp_path / "out.csv")
        assert code == 1


class TestGoldenFiles:
    def test_simulate_reproduces_golden_cube(self, tmp_path):
        out = tmp_path / "cube.flimcube"
        assert run_cli("simulate", "--spec", SPEC, "--seed", 7, "--out", out,
                       "--truth", tmp_path / "truth.csv",
                       "--grid-bins", 64, "--grid-width", 0.195) == 0
        assert out.read_bytes() == GOLDEN_CUBE.read_bytes()
        assert (tmp_path / "truth.csv").read_bytes() == (
            FIXTURES / "golden_truth.csv"
        ).read_bytes()

    def test_simulate_twice_identical(self, tmp_path):
        a, b = tmp_path / "a.flimcube", tmp_path / "b.flimcube"
        for out in (a, b):
            assert run_cli("simulate", "--spec", SPEC, "--seed", 7,
                           "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_fit_reproduces_golden_csv(self, tmp_path):
        out = tmp_path / "lifetime.csv"
        assert run_cli("fit", "--cube", GOLDEN_CUBE, "--method", "lsm",
                       "--components", 1, "--out", out) == 0
        assert out.read_bytes() == (FIXTURES / "golden_lifetime.csv").read_bytes()

    def test_phasor_reproduces_golden_csv(self, tmp_path):
        out = tmp_path / "phasor.csv"
        assert run_cli("phasor", "--cube", GOLDEN_CUBE, "--out", out) == 0
        assert out.read_bytes() == (FIXTURES / "golden_phasor.csv").read_bytes()

    def test_segment_reproduces_golden_ppm(self, tmp_path):
        out = tmp_path / "labels.ppm"
        cent = tmp_path / "centroids.csv"
        assert run_cli("segment", "--cube", GOLDEN_CUBE, "--k", 2, "--seed", 3,
                       "--out", out, "--centroids-out", cent) == 0
        assert out.read_bytes() == (FIXTURES / "golden_labels.ppm").read_bytes()
        assert cent.read_bytes() == (FIXTURES / "golden_centroids.csv").read_bytes()


class TestManifests:
    def test_manifest_written_and_verifies(self, tmp_path):
        out = tmp_path / "phasor.csv"
        assert run_cli("phasor", "--cube", GOLDEN_CUBE, "--out", out) == 0
        manifest_path = fio.manifest_path_for(out)
        assert manifest_path.exists()
        doc = json.loads(manifest_path.read_text())
        assert doc["command"] == "phasor"
        assert str(GOLDEN_CUBE) in doc["inputs"]
        assert doc["inputs"][str(GOLDEN_CUBE)] == fio.sha256_file(GOLDEN_CUBE)
        assert doc["outputs"][str(out)] == fio.sha256_file(out)
        assert "wall_seconds" in doc["timings"]

    def test_simulate_manifest_records_seed(self, tmp_path):
        out = tmp_path / "cube.flimcube"
        assert run_cli("simulate", "--spec", SPEC, "--seed", 42,
                       "--out", out) == 0
        doc = json.loads(fio.manifest_path_for(out).read_text())
        assert doc["seeds"] == [42]
        assert doc["parameters"]["seed"] == 42


@pytest.mark.parametrize("threads", ["1", "4"])
def test_thread_count_invariance(tmp_path, threads):
    """Identical bytes regardless of BLAS/OpenMP thread count."""
    env = dict(os.environ)
    env["OMP_NUM_THREADS"] = threads
    env["OPENBLAS_NUM_THREADS"] = threads
    env["MKL_NUM_THREADS"] = threads
    out_dir = tmp_path / f"t{threads}"
    out_dir.mkdir()
    for cmd in (
        ["simulate", "--spec", str(SPEC), "--seed", "7",
         "--out", str(out_dir / "cube.flimcube"),
         "--grid-bins", "64", "--grid-width", "0.195"],
        ["fit", "--cube", str(GOLDEN_CUBE), "--method", "lsm",
         "--out", str(out_dir / "lifetime.csv")],
        ["phasor", "--cube", str(GOLDEN_CUBE),
         "--out", str(out_dir / "phasor.csv")],
        ["segment", "--cube", str(GOLDEN_CUBE), "--k", "2", "--seed", "3",
         "--out", str(out_dir / "labels.ppm")],
    ):
        proc = subprocess.run(
            [sys.executable, "-m", "flimkit.cli", *cmd],
            env=env, capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
    assert (out_dir / "cube.flimcube").read_bytes() == GOLDEN_CUBE.read_bytes()
    assert (out_dir / "lifetime.csv").read_bytes() == (
        FIXTURES / "golden_lifetime.csv"
    ).read_bytes()
    assert (out_dir / "phasor.csv").read_bytes() == (
        FIXTURES / "golden_phasor.csv"
    ).read_bytes()
    assert (out_dir / "labels.ppm").read_bytes() == (
        FIXTURES / "golden_labels.ppm"
    ).read_bytes()
