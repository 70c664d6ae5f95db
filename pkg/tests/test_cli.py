import json
import subprocess
import sys
from pathlib import Path

import pandas as pd
import pytest

ROOT = Path(__file__).resolve().parents[1]


def _cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "dem_solve.cli", *args], capture_output=True, text=True, cwd=ROOT
    )


def test_cli_help() -> None:
    p = _cli("--help")
    assert p.returncode == 0
    assert "usage" in p.stdout.lower()
    for command in ("run", "sweep", "demo1d", "refine"):
        assert command in p.stdout


def test_demo1d(tmp_path) -> None:
    p = _cli("demo1d", "--delta-u-max", "2", "--steps", "4", "--out", str(tmp_path))
    assert p.returncode == 0, p.stderr
    out = json.loads(p.stdout)
    assert out["status"] == "demo1d"
    assert out["rows"] == 5

    df = pd.read_csv(tmp_path / "demo1d.csv")
    assert list(df.columns) == ["delta_u", "psi_ad", "psi_sf"]
    assert df.loc[0, "psi_ad"] == pytest.approx(-0.5)
    assert df.loc[0, "psi_sf"] == pytest.approx(-0.5)
    assert df.loc[1, "delta_u"] == pytest.approx(0.5)
    assert df.loc[1, "psi_ad"] == pytest.approx(-1.0, abs=1e-6)
    assert df.loc[1, "psi_sf"] == pytest.approx(-0.375, abs=1e-6)
    assert df["psi_ad"].is_monotonic_decreasing and df["psi_ad"].is_unique
    assert (df["psi_sf"] >= -0.5 - 1e-9).all()


def test_config_missing_material(tmp_path) -> None:
    doc = json.loads((ROOT / "configs" / "quick.json").read_text())
    del doc["material"]
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    p = _cli("run", "--config", str(path), "--out", str(tmp_path / "out"))
    assert p.returncode == 2
    assert "material" in p.stderr
    assert p.stdout == ""


def test_missing_config_file(tmp_path) -> None:
    p = _cli("run", "--config", str(tmp_path / "absent.json"))
    assert p.returncode == 2
    assert "error" in p.stderr


@pytest.mark.parametrize(
    "args",
    [
        ("sweep", "--config", "configs/quick.json", "--loads", ""),
        ("sweep", "--config", "configs/quick.json", "--loads", "a,b"),
        ("refine", "--config", "configs/quick.json", "--dims", "9x4"),
        ("refine", "--config", "configs/quick.json", "--dims", "9x1x4"),
    ],
)
def test_bad_arguments_exit_2(args, tmp_path) -> None:
    p = _cli(*args, "--out", str(tmp_path))
    assert p.returncode == 2
    assert "error" in p.stderr
    assert not (tmp_path / "table.csv").exists()


@pytest.mark.parametrize("steps", ["0", "-3"])
def test_demo1d_rejects_non_positive_steps(steps, tmp_path) -> None:
    p = _cli("demo1d", "--steps", steps, "--out", str(tmp_path))
    assert p.returncode == 2
    assert "steps" in p.stderr
    assert "Traceback" not in p.stderr
    assert not (tmp_path / "demo1d.csv").exists()


def test_sweep_over_seeds(tmp_path) -> None:
    p = _cli("sweep", "--config", "configs/quick.json", "--loads=-2.5", "--seeds", "0,1", "--out", str(tmp_path))
    assert p.returncode == 0, p.stderr
    out = json.loads(p.stdout)
    assert out["status"] == "swept"
    assert out["runs"] == 8

    df = pd.read_csv(tmp_path / "table.csv")
    assert len(df) == 8
    assert set(df["seed"]) == {0, 1}
    assert set(zip(df["method"], df["mode"], df["seed"])) == {
        (m, mode, s) for m in ("mlp", "gcn") for mode in ("ad", "sf") for s in (0, 1)
    }


def test_refine_over_two_grids(tmp_path) -> None:
    p = _cli(
        "refine", "--config", "configs/quick.json", "--dims", "5x3x3,9x4x4",
        "--load=-2.5", "--seeds", "0", "--out", str(tmp_path),
    )
    assert p.returncode == 0, p.stderr
    out = json.loads(p.stdout)
    assert out["status"] == "refined"
    assert out["runs"] == 8
    assert out["table"] == str(tmp_path / "refine.csv")

    df = pd.read_csv(tmp_path / "refine.csv")
    assert list(df.columns)[0] == "dims"
    assert df["dims"].value_counts().to_dict() == {"5x3x3": 4, "9x4x4": 4}
    assert (df["load"] == -2.5).all()
    assert (df["seed"] == 0).all()
