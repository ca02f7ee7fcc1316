"""Experiment configuration, orchestration, and output verification."""

import filecmp
import os

import numpy as np
import pytest

from wavedet import (
    ExperimentConfig,
    canonical_config_text,
    config_hash,
    experiment_check,
    gap_table,
    parse_config_text,
    run_experiment,
)

MINI = dict(
    length=256,
    scale_sets=((3,), (4,), (3, 4)),
    pfa=1e-2,
    snr_min=-12.0,
    snr_max=0.0,
    snr_step=3.0,
    trials_per_point=1500,
    cal_trials=10_000,
    n_pos=250,
    n_neg=250,
    c_grid=((1.0, 10.0),),
    seed=42,
)


@pytest.fixture(scope="module")
def mini_cfg():
    return ExperimentConfig(**MINI)


@pytest.fixture(scope="module")
def mini_run(mini_cfg, tmp_path_factory):
    out = tmp_path_factory.mktemp("exp")
    report = run_experiment(mini_cfg, str(out))
    return report, out


def test_config_defaults_are_valid():
    cfg = ExperimentConfig()
    assert cfg.length == 1024
    assert cfg.family == "db5"
    assert (3, 4, 5, 6) in cfg.scale_sets
    assert cfg.pfa == 1e-3
    grid = cfg.snr_grid()
    assert grid[0] == -15.0 and grid[-1] == 0.0 and len(grid) == 16


def test_config_text_round_trip(mini_cfg):
    text = canonical_config_text(mini_cfg)
    assert parse_config_text(text) == mini_cfg
    # defaults fill missing keys, comments and blanks are ignored
    cfg = parse_config_text("# comment\n\nsigma_n = 2.0\n")
    assert cfg.sigma_n == 2.0
    assert cfg.family == "db5"


def test_config_text_rejects_unknown_keys():
    with pytest.raises(ValueError):
        parse_config_text("lenght = 512\n")
    with pytest.raises(ValueError):
        parse_config_text("length 512\n")


def test_config_hash_tracks_content(mini_cfg):
    h1 = config_hash(mini_cfg)
    h2 = config_hash(ExperimentConfig(**{**MINI, "seed": 43}))
    assert h1 != h2
    assert len(h1) == 16
    assert h1 == config_hash(parse_config_text(canonical_config_text(mini_cfg)))


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(**{**MINI, "length": 100})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**MINI, "scale_sets": ((7,),)})  # 2^(8-7) < 10
    with pytest.raises(ValueError):
        ExperimentConfig(**{**MINI, "cal_trials": 1000})  # pfa * trials < 100
    with pytest.raises(ValueError):
        ExperimentConfig(**{**MINI, "scale_sets": ((3,), (3,))})
    with pytest.raises(ValueError):
        ExperimentConfig(**{**MINI, "snr_min": 5.0})


def test_mini_experiment_passes_checks(mini_run):
    report, _ = mini_run
    assert report.valid
    assert report.labels == ("d3", "d4", "d3_4")
    names = [c.name for c in report.checks]
    assert "theory-multiscale-dominance" in names
    assert "svm-theory-ceiling" in names
    assert any(n.startswith("decision-statistic-equivalence") for n in names)
    assert any(n.startswith("analytic-mc-threshold") for n in names)


def test_outputs_exist_and_verify(mini_run):
    report, out = mini_run
    expected = {"config.txt", "gaps.csv", "checks.txt"}
    for label in report.labels:
        expected |= {
            f"theory_{label}.csv", f"svm_{label}.csv", f"baseline_{label}.csv",
            f"optimum_{label}.det", f"svm_{label}.det",
        }
    assert expected <= set(os.listdir(out))
    ok, messages = experiment_check(str(out))
    assert ok, messages
    checks = (out / "checks.txt").read_text().strip().splitlines()
    assert checks[-1] == "VALID"


def test_rerun_is_byte_identical(mini_cfg, mini_run, tmp_path):
    _, first = mini_run
    run_experiment(mini_cfg, str(tmp_path))
    names = [n for n in os.listdir(first)]
    match, mismatch, errors = filecmp.cmpfiles(first, tmp_path, names, shallow=False)
    assert mismatch == [] and errors == []
    assert sorted(match) == sorted(names)


def test_gap_table_contents(mini_run):
    report, _ = mini_run
    rows = gap_table(report)
    assert len(rows) == len(report.labels) * len(report.config.snr_grid())
    for r in rows:
        assert r["gap"] == pytest.approx(r["pd_theory"] - r["pd_svm"])
        assert 0.0 <= r["pd_baseline"] <= 1.0


def test_gap_table_requires_complete_report(mini_run):
    from dataclasses import replace

    report, _ = mini_run
    broken = replace(report, svm={k: v for k, v in report.svm.items() if k != "d3"})
    with pytest.raises(ValueError):
        gap_table(broken)


def test_check_rejects_tampered_outputs(mini_run, tmp_path):
    import shutil

    _, out = mini_run
    bad = tmp_path / "tampered"
    shutil.copytree(out, bad)
    gaps = (bad / "theory_d3.csv").read_text()
    (bad / "theory_d3.csv").write_text(gaps.replace("config_hash=", "config_hash=00"))
    ok, messages = experiment_check(str(bad))
    assert not ok
    assert any("config_hash" in m for m in messages)


def test_check_rejects_missing_curve(mini_run, tmp_path):
    import shutil

    _, out = mini_run
    bad = tmp_path / "missing"
    shutil.copytree(out, bad)
    os.remove(bad / "svm_d4.csv")
    ok, _ = experiment_check(str(bad))
    assert not ok


def test_theory_curves_dominate_subsets(mini_run):
    report, _ = mini_run
    gap = report.theory["d3"].pd_values() - report.theory["d3_4"].pd_values()
    assert float(np.max(gap)) <= 1e-12
