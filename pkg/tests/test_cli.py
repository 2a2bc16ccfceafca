import csv
import math

import pytest

from mftc.cli import main

ZERO = """
[model]
kind = quadratic
n = 2
lambda = 1.0
T = 1.0
[ensemble]
points = 1 2; -1 0.5; 3 3
[solver]
M = 20
[outputs]
plots = false
"""

TANH = """
[model]
kind = quadratic
n = 1
lambda = 1.0
T = 0.5
Q = 1
[ensemble]
points = 1; -0.5; 2
[solver]
M = 400
tol = 1e-12
"""

ADMISSIBLE = """
[model]
kind = quadratic
n = 1
lambda = 10.0
T = 1.0
Q = 1
Qbar = 0.5
S = 0.5
QT = 1
[ensemble]
sampler = gaussian
N = 8
mean = 0.5
cov = 2
seed = 3
[solver]
M = 100
"""

KERNEL = """
[model]
kind = kernel
n = 2
lambda = 4.0
T = 1.0
kernel = gaussian
kernel_params = 0.5 1.0
[ensemble]
sampler = gaussian
N = 6
seed = 1
[solver]
M = 50
[outputs]
plots = false
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rows(path):
    return list(csv.reader(open(path)))


def test_zero_cost_solve(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", write(tmp_path, ZERO), "--out", str(out)]) == 0
    traj = rows(out / "trajectory.csv")[1:]
    start = {r[2]: r[3:5] for r in traj if r[0] == "0"}
    assert all(r[3:5] == start[r[2]] for r in traj)
    assert all(float(v) == 0.0 for r in traj for v in r[5:])
    summary = dict(rows(out / "summary.csv")[1:])
    assert float(summary["value"]) == 0.0
    assert not list(out.glob("*.svg"))


def test_tanh_riccati_csv_and_plots(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", write(tmp_path, TANH), "--out", str(out), "--force-inadmissible"]) == 0
    P = [(float(r[1]), float(r[5])) for r in rows(out / "riccati.csv")[1:] if r[2] == "P"]
    assert len(P) == 401
    assert max(abs(p - math.tanh(0.5 - t)) for t, p in P) <= 1e-6
    for name in ("value.svg", "riccati.svg", "trajectories.svg"):
        assert (out / name).read_text().lstrip().startswith("<?xml")
    summary = dict(rows(out / "summary.csv")[1:])
    assert float(summary["value_deviation"]) < 1e-6


def test_grid_and_tol_overrides(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", write(tmp_path, ZERO), "--out", str(out), "--grid", "5", "--tol", "1e-8"]) == 0
    assert len(rows(out / "value_path.csv")) == 1 + 6
    assert main(["solve", write(tmp_path, ZERO), "--out", str(out), "--grid", "1"]) == 2


@pytest.mark.parametrize("mutate, key", [
    (lambda s: s.replace("n = 2", "n = two"), "model.n"),
    (lambda s: s.replace("points = 1 2;", "points = 1 2 3;"), "ensemble.points"),
    (lambda s: s.replace("lambda = 1.0\n", ""), "model.lambda"),
    (lambda s: s.replace("kind = quadratic", "kind = quadratic\nkernel = gaussian"), "model.kernel"),
    (lambda s: s.replace("M = 20", "M = 1"), "solver.M"),
    (lambda s: s + "\n[model]\n", "file"),
])
def test_malformed_config(tmp_path, capsys, mutate, key):
    assert main(["solve", write(tmp_path, mutate(ZERO)), "--out", str(tmp_path / "o")]) == 2
    assert key in capsys.readouterr().err


def test_sampler_requires_seed(tmp_path, capsys):
    text = ADMISSIBLE.replace("seed = 3\n", "")
    assert main(["solve", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 2
    assert "ensemble.seed" in capsys.readouterr().err


def test_inadmissible_exit(tmp_path, capsys):
    assert main(["solve", write(tmp_path, TANH), "--out", str(tmp_path / "o")]) == 3
    assert "margin" in capsys.readouterr().err


def test_nonconvergence_exit(tmp_path):
    text = ADMISSIBLE.replace("M = 100", "M = 100\nmax_iter = 1")
    assert main(["solve", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 4


def test_kernel_config(tmp_path):
    out = tmp_path / "o"
    assert main(["solve", write(tmp_path, KERNEL), "--out", str(out)]) == 0
    assert not (out / "riccati.csv").exists()
    assert float(dict(rows(out / "summary.csv")[1:])["value"]) > 0


def test_solve_outputs_stable(tmp_path):
    cfg = write(tmp_path, TANH.replace("M = 400", "M = 50"))
    blobs = []
    for i in range(2):
        out = tmp_path / f"o{i}"
        assert main(["solve", cfg, "--out", str(out), "--force-inadmissible"]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert blobs[0] == blobs[1]
    assert set(blobs[0]) >= {"trajectory.csv", "summary.csv", "gradient.csv", "riccati.csv", "value.svg"}


def test_plots_do_not_change_numbers(tmp_path):
    cfg = write(tmp_path, TANH.replace("M = 400", "M = 50"))
    quiet = write(tmp_path, TANH.replace("M = 400", "M = 50") + "\n[outputs]\nplots = false\n", "q.ini")
    main(["solve", cfg, "--out", str(tmp_path / "a"), "--force-inadmissible"])
    main(["solve", quiet, "--out", str(tmp_path / "b"), "--force-inadmissible"])
    for name in ("trajectory.csv", "summary.csv", "riccati.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_suite(tmp_path):
    assert main(["audit", "bogus", "--seed", "1", "--out", str(tmp_path)]) == 2


def test_audit_refuses_inadmissible_config(tmp_path):
    cfg = write(tmp_path, TANH)
    assert main(["audit", "estimates", "--seed", "1", "--config", cfg, "--out", str(tmp_path),
                 "--force-inadmissible"]) == 3


def test_audit_with_config_and_determinism(tmp_path):
    cfg = write(tmp_path, ADMISSIBLE)
    outs = []
    for i in range(2):
        out = tmp_path / f"a{i}"
        assert main(["audit", "estimates", "--seed", "2", "--config", cfg, "--out", str(out)]) == 0
        outs.append(((out / "audit_estimates_seed2.csv").read_bytes(), (out / "audit_estimates_seed2.txt").read_bytes()))
    assert outs[0] == outs[1]
    assert b"config " in outs[0][0]


def test_audit_single_suite(tmp_path):
    assert main(["audit", "gradients", "--seed", "4", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "audit_gradients_seed4.txt").exists()


def test_bad_arguments():
    assert main(["solve"]) == 2
    assert main(["frobnicate"]) == 2


def test_shipped_configs_load():
    from pathlib import Path
    from mftc.config import load_config
    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.ini"))
    assert paths
    for p in paths:
        assert load_config(p).ensemble.N >= 1
