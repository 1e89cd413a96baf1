import csv
import json
import textwrap

import numpy as np
import pytest

from reflected_gbsde.cli import main
from reflected_gbsde.config import build_problem, parse_config
from reflected_gbsde.rgbsde import solve_reflected_lipschitz

SMOOTH = """
[problem]
terminal = cosine
generator = lipschitz
kappa = 0.5
obstacle = none

[band]
sigma_low = 0.5
sigma_high = 1.0

[lattice]
n_steps = 60

[solver]
method = lipschitz
"""

PUT = """
[problem]
terminal = put
generator = put
obstacle = put
rate = 0.05

[band]
sigma_low = {lo}
sigma_high = {hi}

[lattice]
n_steps = {n}

[solver]
method = {method}

[study]
kind = penalization
"""

YFREE = """
[problem]
terminal = cap
generator = constant
generator_value = -1
obstacle = cap

[band]
sigma_low = 0.5
sigma_high = 1.0

[lattice]
n_steps = 60

[study]
kind = picard
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return str(path)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary(out):
    return {row["key"]: row["value"] for row in read_csv(out / "summary.csv")}


def test_solve_y0_is_library_value(tmp_path):
    cfg_path = write(tmp_path, SMOOTH)
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg_path, "--out", str(out)]) == 0
    cfg = parse_config(textwrap.dedent(SMOOTH))
    prob = build_problem(cfg)
    lib = solve_reflected_lipschitz(prob.spec, prob.obstacle, prob.xi, prob.band, cfg.lattice)
    assert summary(out)["y0"] == repr(lib.y0)
    rows = read_csv(out / "surface.csv")
    assert list(rows[0]) == ["time_index", "space_index", "x", "Y", "Z", "lift", "policy_variance"]
    assert len(rows) == (cfg.lattice.n_steps + 1) * cfg.lattice.n_nodes


def test_collapsed_put_summary_has_oracle(tmp_path):
    cfg_path = write(tmp_path, PUT.format(lo=0.2, hi=0.2, n=100, method="lipschitz"))
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg_path, "--out", str(out)]) == 0
    s = summary(out)
    assert float(s["rel_error"]) < 1e-2
    assert float(s["oracle_price"]) > 0


def test_uncertain_put_summary_has_no_oracle(tmp_path):
    cfg_path = write(tmp_path, PUT.format(lo=0.1, hi=0.3, n=60, method="penalized"))
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg_path, "--out", str(out)]) == 0
    assert "oracle_price" not in summary(out)


@pytest.mark.parametrize("bad", [
    SMOOTH + "\n[lattice2]\nn_steps = 3\n",
    SMOOTH.replace("kappa = 0.5", "kapa = 0.5"),
    SMOOTH.replace("method = lipschitz", "method = magic"),
    SMOOTH.replace("sigma_low = 0.5", "sigma_low = abc"),
])
def test_bad_config_exit_1_and_no_files(tmp_path, capsys, bad):
    cfg_path = write(tmp_path, bad)
    out = tmp_path / "out"
    assert main(["solve", "--config", cfg_path, "--out", str(out)]) == 1
    assert not out.exists() or not any(out.iterdir())
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["exit_code"] == 1


def test_missing_config_file(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path / "o")]) == 1


def test_unknown_command():
    assert main(["dance"]) == 1


def test_cfl_above_one_is_a_config_error(tmp_path):
    text = SMOOTH.replace("[lattice]", "[lattice]\ncfl = 1.5")
    assert main(["solve", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1


def test_numerical_failure_is_exit_2(tmp_path, capsys):
    # a single weak penalty leaves the gap far above the threshold
    text = """
    [problem]
    terminal = put
    generator = put
    obstacle = put

    [band]
    sigma_low = 0.1
    sigma_high = 0.3

    [lattice]
    n_steps = 60

    [solver]
    method = penalized
    schedule = 1
    """
    out = tmp_path / "out"
    assert main(["solve", "--config", write(tmp_path, text), "--out", str(out)]) == 2
    assert not out.exists()
    assert json.loads(capsys.readouterr().err)["error"] == "numerical"


def test_picard_non_convergence_is_exit_3(tmp_path):
    text = """
    [problem]
    terminal = square
    generator = hlog
    obstacle = terminal
    obstacle_shift = 1

    [band]
    sigma_low = 0.5
    sigma_high = 1.0

    [lattice]
    n_steps = 40

    [solver]
    method = picard
    max_iter = 2
    """
    assert main(["solve", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 3


def test_penalization_study_gap_nonincreasing(tmp_path):
    cfg_path = write(tmp_path, PUT.format(lo=0.1, hi=0.3, n=80, method="penalized"))
    out = tmp_path / "out"
    assert main(["study", "--config", cfg_path, "--out", str(out)]) == 0
    gaps = [float(r["gap"]) for r in read_csv(out / "study.csv")]
    assert len(gaps) == 11
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))
    assert (out / "study.svg").read_text().startswith("<svg")


def test_picard_study_yfree_single_row(tmp_path):
    out = tmp_path / "out"
    assert main(["study", "--config", write(tmp_path, YFREE), "--out", str(out)]) == 0
    rows = read_csv(out / "study.csv")
    assert len(rows) == 1 and float(rows[0]["delta"]) == 0.0


def test_refinement_study_order(tmp_path):
    text = SMOOTH + "\n[study]\nkind = refinement\nsteps = 25, 50, 100, 200\n"
    out = tmp_path / "out"
    assert main(["study", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    orders = [float(r["order"]) for r in read_csv(out / "study.csv") if r["order"]]
    assert orders and all(o >= 0.9 for o in orders)


CHECK = """
[band]
sigma_low = 0.5
sigma_high = 1.0

[check]
suite = {suite}
divergence_cases = {cases}
"""


def test_default_check_suite_passes(tmp_path):
    text = CHECK.format(suite="all", cases="hlog3:divergent, sqrt2:convergent")
    out = tmp_path / "out"
    assert main(["check", "--config", write(tmp_path, text), "--out", str(out)]) == 0
    rows = read_csv(out / "checks.csv")
    assert len(rows) > 10 and all(r["passed"] == "true" for r in rows)


def test_mislabelled_convergent_modulus_fails(tmp_path, capsys):
    text = CHECK.format(suite="none", cases="sqrt2:divergent")
    out = tmp_path / "out"
    assert main(["check", "--config", write(tmp_path, text), "--out", str(out)]) == 4
    rows = read_csv(out / "checks.csv")
    assert [r["passed"] for r in rows] == ["false"]
    assert "sqrt2" in capsys.readouterr().err


def test_empty_check_suite_is_exit_1(tmp_path):
    text = CHECK.format(suite="none", cases="")
    assert main(["check", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1


def test_outputs_identical_across_threads(tmp_path):
    cfg_path = write(tmp_path, PUT.format(lo=0.1, hi=0.3, n=60, method="penalized"))
    blobs = []
    for threads in (1, 4):
        out = tmp_path / f"out{threads}"
        assert main(["study", "--config", cfg_path, "--out", str(out), "--threads", str(threads)]) == 0
        assert main(["solve", "--config", cfg_path, "--out", str(out), "--threads", str(threads)]) == 0
        blobs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert blobs[0] == blobs[1]
    assert set(blobs[0]) == {"study.csv", "study.svg", "surface.csv", "summary.csv"}


def test_threads_must_be_positive(tmp_path):
    assert main(["solve", "--config", write(tmp_path, SMOOTH), "--out", str(tmp_path / "o"), "--threads", "0"]) == 1


def test_surface_policy_column_in_band(tmp_path):
    out = tmp_path / "out"
    main(["solve", "--config", write(tmp_path, SMOOTH), "--out", str(out)])
    pol = np.array([float(r["policy_variance"]) for r in read_csv(out / "surface.csv") if r["policy_variance"]])
    assert set(np.unique(pol)) <= {0.25, 1.0}
