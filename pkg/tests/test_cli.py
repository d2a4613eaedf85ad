"""Command line behavior: subcommands, artifacts, exit codes, output roots."""

import csv
import json
import shutil
import subprocess

import numpy as np
import pytest

from anosov3 import cli
from anosov3.maps import wrap01

MATRIX = [[0, 0, -1], [1, 0, 0], [0, 1, 3]]
MATRIX_JSON = json.dumps(MATRIX)
LAMS = (0.120614758428183, 2.347296355333861, 3.532088886237956)
DIO_C = 0.0793605132112063
A_LIN = 4.124044227032932


@pytest.fixture(scope="module")
def cfg_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cliconf")
    (d / "lin.json").write_text(json.dumps({"matrix": MATRIX, "name": "lin"}))
    (d / "pert.json").write_text(json.dumps({
        "matrix": MATRIX,
        "name": "pert",
        "perturbation": {
            "kind": "additive",
            "epsilon": 0.01,
            "modes": [{"frequency": [1, 0, 0], "coefficient": [0.3, -0.2, 0.1]}],
        },
    }))
    (d / "mini.json").write_text(json.dumps({
        "matrix": MATRIX,
        "name": "mini",
        "resolution": 16,
        "frame_resolution": 16,
        "fourier_band": 8,
        "abar_grid": 32,
        "n_max": 2,
    }))
    (d / "toobig.json").write_text(json.dumps({
        "matrix": MATRIX,
        "name": "toobig",
        "resolution": 16,
        "frame_resolution": 16,
        "n_max": 1,
        "perturbation": {
            "kind": "conjugacy",
            "epsilon": 0.9,
            "modes": [{"frequency": [1, 0, 0], "coefficient": [0.3, -0.2, 0.1]}],
        },
    }))
    return d


def _json_head(out):
    # commands print a JSON document followed by one status line
    lines = out.splitlines()
    while lines and not lines[-1].lstrip().startswith(("}", "]")):
        lines.pop()
    return json.loads("\n".join(lines))


def test_spectrum_stdout(capsys):
    rc = cli.main(["spectrum", "--matrix", MATRIX_JSON])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["power"] == -2
    assert np.allclose(out["lams"], LAMS, atol=1e-12)
    assert out["kappa"] == 1
    assert abs(out["diophantine"]["constant"] - DIO_C) < 1e-10
    assert out["normalized_matrix"] == [[3, 0, 1], [-1, 3, 0], [0, -1, 0]]
    assert len(out["eigenvalues"]) == 3


def test_spectrum_json_out(tmp_path, capsys):
    target = tmp_path / "spec.json"
    rc = cli.main(["spectrum", "--matrix", MATRIX_JSON, "--json-out", str(target)])
    assert rc == 0
    assert "spectrum written to" in capsys.readouterr().out
    assert json.loads(target.read_text())["kappa"] == 1


def test_spectrum_rejects_non_hyperbolic(capsys):
    rc = cli.main(["spectrum", "--matrix", "[[1,0,0],[0,1,0],[0,0,1]]"])
    assert rc == 2
    assert "NotHyperbolic" in capsys.readouterr().err


def test_usage_errors_exit_one(cfg_dir, capsys):
    rc = cli.main(["periodic", "report", "--config", str(cfg_dir / "lin.json"),
                   "--set", "bogus=1"])
    assert rc == 1
    assert "unknown config key" in capsys.readouterr().err
    rc = cli.main(["conjugacy", "solve"])
    assert rc == 1
    assert "provide --config" in capsys.readouterr().err


def test_perturb_check(cfg_dir, capsys):
    rc = cli.main(["perturb", "check", "--config", str(cfg_dir / "pert.json")])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.splitlines()[-1].startswith("cone check passed")
    data = _json_head(out)
    assert 0.0 < data["c1_distance"] < 0.2
    assert data["anosov_lambda"] > 1.0


def test_conjugacy_solve_artifacts(cfg_dir, tmp_path, capsys):
    rc = cli.main(["conjugacy", "solve", "--config", str(cfg_dir / "lin.json"),
                   "--set", "resolution=16", "--out", str(tmp_path)])
    assert rc == 0
    assert "conjugacy solved" in capsys.readouterr().out
    out = tmp_path / "lin" / "conjugacy"
    disp = np.load(out / "h_displacement.npy")
    assert disp.shape == (16, 16, 16, 3)
    assert np.max(np.abs(disp)) == 0.0  # unperturbed map, h is the identity
    meta = json.loads((out / "conjugacy.json").read_text())
    assert meta["residual"] == 0.0
    assert meta["iterations"] == 1


def test_periodic_report(cfg_dir, tmp_path, capsys):
    rc = cli.main(["periodic", "report", "--config", str(cfg_dir / "lin.json"),
                   "--set", "n_max=1", "--out", str(tmp_path)])
    assert rc == 0
    assert "MATCHES" in capsys.readouterr().out
    out = tmp_path / "lin" / "periodic"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["verdict"] is True
    assert summary["counts"] == {"1": 3}
    with open(out / "periodic.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][0] == "period"
    assert len(rows) == 1 + 3


def test_cohomology_solve_inline(capsys):
    series = {"dimension": 2, "modes": [
        {"frequency": [1, 0], "re": 0.5, "im": 0.0},
        {"frequency": [-1, 0], "re": 0.5, "im": 0.0},
    ]}
    rc = cli.main(["cohomology", "solve", "--series", json.dumps(series),
                   "--beta", "0.3,0.55"])
    assert rc == 0
    out = _json_head(capsys.readouterr().out)
    assert out["residual"] < 1e-12
    sol = {tuple(m["frequency"]): complex(m["re"], m["im"])
           for m in out["solution"]["modes"]}
    want = 0.5 / (np.exp(2j * np.pi * 0.3) - 1.0)
    assert abs(sol[(1, 0)] - want) < 1e-12


def test_foliation_trace(cfg_dir, tmp_path, capsys):
    rc = cli.main(["foliation", "trace", "--config", str(cfg_dir / "lin.json"),
                   "--point", "0.2,0.5,0.33", "--bundle", "uu",
                   "--radius", "0.3", "--out", str(tmp_path)])
    assert rc == 0
    assert "uu leaf through" in capsys.readouterr().out
    with open(tmp_path / "lin" / "foliation" / "leaf_uu.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["arclength", "x", "y", "z"]
    arcs = np.array([float(r[0]) for r in rows[1:]])
    assert len(arcs) > 20
    assert abs(arcs[0] + 0.3) < 1e-6 and abs(arcs[-1] - 0.3) < 1e-6


def test_rebuild_wu_linear(cfg_dir, tmp_path, sp, capsys):
    rc = cli.main(["foliation", "rebuild-wu", "--config", str(cfg_dir / "mini.json"),
                   "--out", str(tmp_path)])
    assert rc == 0
    assert "wu graph rebuilt" in capsys.readouterr().out
    out = tmp_path / "mini" / "rebuild-wu"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["hausdorff"] < 1e-6
    assert summary["eq_residual"] < 1e-6
    with open(out / "returns.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x1", "x2", "R1", "R2", "T1", "T2", "A", "a"]
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    tgt = wrap01(body[:, 0:2] + np.asarray(sp.beta))
    assert np.max(np.abs(body[:, 4:6] - tgt)) < 1e-8
    d = np.abs(body[:, 2:4] - body[:, 4:6])
    assert np.max(np.minimum(d, 1.0 - d)) < 1e-6  # linear return is the translation
    assert np.max(np.abs(body[:, 6] - A_LIN)) < 1e-6
    assert np.max(np.abs(body[:, 7])) < 1e-8
    for name in ("profiles.csv", "rebuilt_leaf.csv", "direct_leaf.csv", "phibar.json"):
        assert (out / name).exists()


def test_pipeline_run_reports_failure(cfg_dir, tmp_path, capsys):
    rc = cli.main(["pipeline", "run", "--config", str(cfg_dir / "toobig.json"),
                   "--out", str(tmp_path)])
    assert rc == 3
    out = capsys.readouterr().out
    lines = out.splitlines()
    assert any(l.startswith("normalize") and "ok" in l for l in lines)
    assert any(l.startswith("perturb") and "FAIL" in l and "NotInvertible" in l
               for l in lines)
    assert "artifacts in" in out
    report = json.loads((tmp_path / "toobig" / "pipeline" / "report.json").read_text())
    assert report["ok"] is False


def test_output_root_precedence(cfg_dir, tmp_path, monkeypatch):
    env_root = tmp_path / "env"
    cfg_root = tmp_path / "cfg"
    cli_root = tmp_path / "cli"
    monkeypatch.setenv("ANOSOV3_OUTPUT_ROOT", str(env_root))
    args = ["periodic", "report", "--config", str(cfg_dir / "lin.json"),
            "--set", "n_max=1"]
    assert cli.main(args) == 0
    assert (env_root / "lin" / "periodic" / "summary.json").exists()
    assert cli.main(args + ["--set", "output_dir=%s" % cfg_root]) == 0
    assert (cfg_root / "lin" / "periodic" / "summary.json").exists()
    assert cli.main(args + ["--out", str(cli_root)]) == 0
    assert (cli_root / "lin" / "periodic" / "summary.json").exists()


def test_console_script(tmp_path):
    exe = shutil.which("anosov3")
    assert exe, "console script should be on PATH after install"
    proc = subprocess.run([exe, "--threads", "1", "spectrum", "--matrix", MATRIX_JSON],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["power"] == -2
