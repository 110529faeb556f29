"""Behaviour of a model trained on the toy site (configs/toy.ini).

Thresholds here were calibrated against independent reference runs; they
check qualitative claims (trend, ordering, tradeoff), not exact numbers.
"""

import dataclasses

import numpy as np
import pytest

from ssfeedback.harness import experiments as ex
from ssfeedback.learn.trainer import evaluate_ridge
from ssfeedback.schemes import angular_response

pytestmark = pytest.mark.slow


def learned(toy_ablation):
    return toy_ablation["results"][0]


def test_validation_curve_trends_upward(toy_ablation):
    val = np.asarray(learned(toy_ablation)["trace"].val_eta[:100])
    ma = np.convolve(val, np.ones(20) / 20, mode="valid")
    assert np.all(np.diff(ma) >= -0.01)
    assert ma[-1] > ma[0]


def test_deployment_matches_ridge_path(toy_cfg, toy_ablation):
    res = learned(toy_ablation)
    data = ex.site_data(toy_cfg)
    h = np.array([s.h for s in data.val.samples])
    tc = ex.train_config(toy_cfg, toy_cfg.k, toy_cfg.q, ex.point_seed(toy_cfg.seed, 0))
    ridge = np.mean(evaluate_ridge(res["probe"], res["model"], h, tc, noise_db=None))
    deploy = np.mean([ex.export_deployment(res["probe"], res["model"], x, toy_cfg.train.noise,
                                           seed=i).eta for i, x in enumerate(h)])
    assert abs(deploy - ridge) <= 0.02


def test_type2_reaches_high_capture(toy_cfg, toy_ablation):
    res = learned(toy_ablation)
    records, _ = ex.evaluate_schemes(toy_cfg, res["probe"], res["model"], ex.site_data(toy_cfg))
    assert np.mean([o.eta for _, m, _, o in records if m == "type2"]) >= 0.95


def test_larger_setting_converges_higher(toy_cfg, toy_ablation):
    small = learned(toy_ablation)["trace"].val_eta[-1]
    (big,) = ex.run_jobs(toy_cfg, [(toy_cfg, 16, 8, ex.point_seed(toy_cfg.seed, 1), None, True)])
    assert "error" not in big
    assert big["trace"].val_eta[-1] >= small


def test_effective_se_not_maximized_at_largest_setting(toy_cfg, tmp_path):
    cfg = dataclasses.replace(toy_cfg, train=dataclasses.replace(toy_cfg.train, epochs=60))
    points = ex.run_pareto(cfg, (4, 8, 16), (2, 4, 8), str(tmp_path))
    assert len(points) == 9
    best = max(points, key=lambda p: p.mean_effective_se)
    assert (best.k, best.q) != (16, 8)
    assert any(p.pareto for p in points)
    assert (tmp_path / "pareto.csv").exists()


def test_angular_peaks_sit_near_strong_paths(toy_cfg, toy_ablation):
    res = learned(toy_ablation)
    data = ex.site_data(toy_cfg)
    n_t, grid, q = toy_cfg.site.n_t, toy_cfg.grid_points, toy_cfg.q
    dists = []
    for sid, s in zip(data.test_ids, data.test.samples):
        out = ex.export_deployment(res["probe"], res["model"], s.h, toy_cfg.train.noise,
                                   seed=ex.point_seed(toy_cfg.seed + 1, sid))
        u, g = angular_response(out.subspace, grid, normalize=True)
        lm = np.array(ex.local_maxima(g))
        top = lm[np.argsort(-g[lm], kind="stable")[:q]]
        us = s.paths.spatial_freqs
        for j in s.paths.strongest(min(q, len(s.paths))):
            sep = np.abs((us - us[j] + 0.5) % 1 - 0.5)
            sep[j] = 1.0
            if sep.min() < 1 / n_t:
                continue  # unresolvable by an n_t-element array
            dists.append(np.min(np.abs((u[top] - us[j] + 0.5) % 1 - 0.5)) * grid)
    dists = np.array(dists)
    assert dists.size > 100
    assert np.mean(dists <= 2) >= 0.85
    assert dists.max() <= 4
