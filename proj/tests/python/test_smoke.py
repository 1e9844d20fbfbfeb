import json
import math
import shutil
from pathlib import Path

import numpy as np
import pytest

import ugcimpact

CONFIG = Path(__file__).resolve().parents[2] / "configs" / "synthetic.yaml"


def small_config(tmp_path):
    text = """schema: ugcimpact.study/v1
seed: 5
out_dir: out
simulate:
  weeks: 80
  intervention_weeks: 12
  targets: 2
  controls: 3
  noise_sd: 1.0
  theta_true: -20
  ugc:
    terms: 6
    clusters: 2
model:
  restarts: 2
  folds: 5
assessment:
  max_subset_size: 1
  bootstrap_replicates: 100
"""
    path = tmp_path / "study.yaml"
    path.write_text(text)
    return path


def test_pearson():
    assert ugcimpact.pearson([1, 2, 3, 4], [2, 4, 6, 8]) == pytest.approx(1.0)


def test_gp_interpolates_smooth_data():
    x = np.linspace(0, 5, 40).reshape(-1, 1)
    y = np.sin(x[:, 0])
    model = ugcimpact.fit_gp(x, y.tolist(), kernel="matern52", restarts=3, seed=1)
    mean, var = model.predict(x)
    assert np.max(np.abs(np.array(mean) - y)) < 0.05
    assert all(v >= 0 for v in var)
    assert model.hyperparameters["kernel"] == "matern52"
    assert math.isfinite(model.log_marginal_likelihood)


def test_gp_cluster_layout():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(30, 4))
    y = (x[:, 0] + x[:, 2]).tolist()
    model = ugcimpact.fit_gp(x, y, clusters=[[0, 1], [2, 3]], restarts=2)
    assert len(model.hyperparameters["clusters"]) == 2
    with pytest.raises(ugcimpact.UgcImpactError):
        ugcimpact.fit_gp(x, y, clusters=[[0, 1]], restarts=1)


def test_linear_matches_least_squares():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(50, 3))
    y = x @ np.array([1.0, -2.0, 0.5]) + 3.0 + rng.normal(scale=0.1, size=50)
    w, b = ugcimpact.fit_linear(x, y.tolist(), lam=0.0)
    a = np.column_stack([x, np.ones(50)])
    beta = np.linalg.lstsq(a, y, rcond=None)[0]
    np.testing.assert_allclose(w, beta[:3], atol=1e-8)
    assert b == pytest.approx(beta[3], abs=1e-8)


def test_distribution_check():
    rng = np.random.default_rng(2)
    assert ugcimpact.check_distribution(rng.normal(size=1000).tolist())["ok"]
    bimodal = np.concatenate([rng.normal(-5, 1, 500), rng.normal(5, 1, 500)])
    assert not ugcimpact.check_distribution(bimodal.tolist())["ok"]


def test_assess_rates_recovers_effect():
    rates = ugcimpact.simulate_epidemic(targets=3, controls=4, weeks=124, noise_sd=0.5, seed=3)
    assert len(rates) == 7
    for name in ("target_01", "target_02", "target_03"):
        rates[name] = [v * 0.8 if i >= 104 else v for i, v in enumerate(rates[name])]
    out = ugcimpact.assess_rates(rates, ["target_01", "target_02", "target_03"],
                                 ["control_01", "control_02", "control_03", "control_04"],
                                 pre_weeks=104, max_subset_size=1, bootstrap_replicates=200, seed=1)
    cohort = out["cohort"]
    assert abs(cohort["theta"] + 20) < 3
    assert cohort["ci"][0] <= cohort["theta"] <= cohort["ci"][1]


def test_study_commands(tmp_path):
    config = small_config(tmp_path)
    code, out, err = ugcimpact.simulate(config)
    assert code == 0, err
    assert out.startswith("dataset fnv1a64:")
    code, out, err = ugcimpact.assess(config, train=True)
    assert code == 0, err
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["schema"] == "ugcimpact.report/v1"
    code, printed, _ = ugcimpact.report(tmp_path / "out" / "report.json")
    assert code == 0 and printed == out
    code, _, _ = ugcimpact.report(tmp_path / "missing.json")
    assert code == 5


def test_bad_config_raises(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("schema: ugcimpact.study/v1\nsimulate:\n  weeks: 0\n")
    with pytest.raises(ugcimpact.UgcImpactError, match="simulate.weeks"):
        ugcimpact.simulate(path)


def test_shipped_config_parses(tmp_path):
    shutil.copy(CONFIG, tmp_path / "synthetic.yaml")
    code, out, err = ugcimpact.simulate(tmp_path / "synthetic.yaml", out_dir=tmp_path / "sim")
    assert code == 0, err
    assert "targets 6 controls 10 weeks 124" in out
