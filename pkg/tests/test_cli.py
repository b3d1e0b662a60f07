import json
from pathlib import Path

import numpy as np
import pytest

from bargain_lab.cli import main, resolve_config
from bargain_lab.data import load_dataset, write_dataset
from bargain_lab.errors import ConfigError
from bargain_lab.simgen import SimConfig, generate

FIXTURES = Path(__file__).parent / "fixtures" / "paper_tables"
SMALL = """
[run]
stages = ["simulate", "select", "impute", "mte", "structural", "report"]

[simulate]
n = 1500
seed = 3
reveal_student_wages = true

[mte]
B = 5
seed = 2
"""


def write_config(tmp_path, text=SMALL, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = write_config(base)
    outs = [base / "a", base / "b"]
    codes = [main(["run", str(cfg), "-o", str(o)]) for o in outs]
    return codes, outs


def test_run_smoke_writes_dataset_estimates_and_verdict(two_runs):
    codes, (out, _) = two_runs
    assert codes == [0, 0]
    for name in ("dataset.csv", "estimates_collective_son.csv", "estimates_unitary_son.csv",
                 "verdict_son.md", "lr_tests_son.csv", "mte_curve_son.csv", "first_stage_son.csv",
                 "report.md", "run_manifest.json"):
        assert (out / name).stat().st_size > 0, name
    m = json.loads((out / "run_manifest.json").read_text())
    assert m["status"] == "ok"
    assert m["config"]["mte"]["B"] == 5
    # defaults are written out in full
    assert m["config"]["structural"]["nodes"] == 32
    assert m["seeds"] == {"simulate": 3, "mte_bootstrap": 2}


def test_repeated_runs_are_byte_identical(two_runs):
    _, (a, b) = two_runs
    files = sorted(p.name for p in a.iterdir() if p.name != "run_manifest.json")
    assert files == sorted(p.name for p in b.iterdir() if p.name != "run_manifest.json")
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f
    ma = json.loads((a / "run_manifest.json").read_text())
    mb = json.loads((b / "run_manifest.json").read_text())
    assert ma["outputs"] == mb["outputs"]


def test_every_figure_has_its_data(two_runs):
    _, (out, _) = two_runs
    svgs = list(out.glob("*.svg"))
    assert svgs
    for s in svgs:
        assert s.with_suffix(".csv").exists(), s.name


def test_zero_bootstrap_draws_rejected_before_work(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL.replace("B = 5", "B = 0"))
    out = tmp_path / "out"
    assert main(["run", str(cfg), "-o", str(out)]) == 1
    assert "mte.B" in capsys.readouterr().err
    assert not out.exists()


def test_unknown_key_fails_fast_by_name(tmp_path, capsys):
    cfg = write_config(tmp_path, SMALL + "\n[structural]\nnodez = 8\n")
    assert main(["run", str(cfg), "-o", str(tmp_path / "o")]) == 1
    assert "structural.nodez" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="simulate.mte.rho"):
        resolve_config({"simulate": {"mte": {"rho": 1.0}}})


def test_set_overrides_file_values(tmp_path):
    cfg = write_config(tmp_path, SMALL.replace('"mte", "structural", "report"', ""))
    out = tmp_path / "o"
    assert main(["run", str(cfg), "-o", str(out), "--set", "simulate.n=400",
                 "--set", "run.stages=['simulate']"]) == 0
    assert len(load_dataset(out / "dataset.csv")) == 400
    m = json.loads((out / "run_manifest.json").read_text())
    assert m["config"]["simulate"]["n"] == 400 and m["config"]["run"]["stages"] == ["simulate"]


def test_simulate_subcommand_and_env_output(tmp_path, monkeypatch):
    monkeypatch.setenv("BARGAIN_LAB_OUTPUT", str(tmp_path / "env"))
    assert main(["simulate", "--truth", "collective", "--n", "5000", "--seed", "7"]) == 0
    d = load_dataset(tmp_path / "env" / "dataset.csv")
    ref, _ = generate(SimConfig(n=5000, seed=7))
    assert len(d) == 5000
    assert np.allclose(d.parent_market_hours, ref.parent_market_hours, rtol=0, atol=1e-12)


def test_structural_without_imputed_wages_names_prerequisite(tmp_path, capsys):
    d, _ = generate(SimConfig(n=300, seed=1))
    write_dataset(d, tmp_path / "raw.csv")
    code = main(["structural", "--kind", "collective", "-i", str(tmp_path / "raw.csv"),
                 "-o", str(tmp_path / "o")])
    assert code == 1
    assert "run the 'impute' stage first" in capsys.readouterr().err


def test_impute_then_mte_subcommands(tmp_path):
    d, _ = generate(SimConfig(n=1200, seed=2))
    write_dataset(d, tmp_path / "raw.csv")
    out = tmp_path / "o"
    assert main(["impute", "-i", str(tmp_path / "raw.csv"), "-o", str(out)]) == 0
    prepared = load_dataset(out / "prepared_son.csv")
    assert not np.isnan(prepared.teen_wage).any()
    assert main(["mte", "-i", str(out / "prepared_son.csv"), "-o", str(out), "--B", "3"]) == 0
    assert (out / "mte_curve_son.svg").exists() and (out / "heterogeneity_son.csv").exists()


def test_estimation_failure_exits_two(tmp_path, capsys):
    d, _ = generate(SimConfig(n=300, seed=1))
    n = len(d)
    d = d.replace(columns={"treated": np.zeros(n, dtype=np.int64), "transfer_amount": np.zeros(n)})
    write_dataset(d, tmp_path / "none_treated.csv")
    assert main(["mte", "-i", str(tmp_path / "none_treated.csv"), "-o", str(tmp_path / "o")]) == 2
    assert "estimation failed" in capsys.readouterr().err


def test_report_on_fixture_tables(tmp_path, capsys):
    for p in FIXTURES.glob("*.csv"):
        (tmp_path / p.name).write_bytes(p.read_bytes())
    assert main(["report", "-o", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    row = next(line for line in text.splitlines() if "Sharing rule" in line and "F′" in line)
    nums = [float(t.strip(",")) for t in row.split("|")[2].split() if t[0].isdigit()]
    for got, want in zip(nums, (0.821, 1.146, 1.796, 2.190)):
        assert abs(got - want) <= 0.005
    assert (tmp_path / "report.md").exists()


def test_report_without_tables(tmp_path, capsys):
    assert main(["report", "-o", str(tmp_path)]) == 1
    assert "run the 'structural' stage first" in capsys.readouterr().err
