import math

import numpy as np
import pytest

from heatpot.errors import ConfigError
from heatpot.montecarlo import MCConfig, simulate_exits, simulate_trade, summarize, worker_count
from heatpot.ou_model import ScaledProblem


@pytest.mark.parametrize("kwargs", [
    {"n_paths": 10}, {"n_paths": 1500.5}, {"dt": 0.0}, {"dt": 0.05}, {"scheme": "milstein"}, {"seed": -1},
])
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        MCConfig(**kwargs)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("HEATPOT_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(2) == 2
    monkeypatch.setenv("HEATPOT_THREADS", "many")
    with pytest.raises(ConfigError):
        worker_count()


def test_start_outside_corridor():
    with pytest.raises(ConfigError):
        simulate_exits(0.0, 1.5, -1.0, 1.0, 1.0, MCConfig(n_paths=1000))


@pytest.mark.property
def test_seed_determinism_and_thread_invariance():
    prob = ScaledProblem(1.0, 1.0, -1.0, 1.0)
    a = simulate_trade(prob, MCConfig(n_paths=50_000, dt=1e-2, seed=42, threads=1))
    b = simulate_trade(prob, MCConfig(n_paths=50_000, dt=1e-2, seed=42, threads=1))
    c = simulate_trade(prob, MCConfig(n_paths=50_000, dt=1e-2, seed=42, threads=4))
    d = simulate_trade(prob, MCConfig(n_paths=50_000, dt=1e-2, seed=43, threads=1))
    assert a == b == c
    assert a != d


@pytest.mark.property
def test_exact_marginal_without_barriers():
    theta, T = 0.8, 0.7
    x, t = simulate_exits(theta, 0.0, -math.inf, math.inf, T, MCConfig(n_paths=200_000, dt=1e-2, seed=1))
    assert np.all(t == T)
    mean = theta * (1 - math.exp(-T))
    var = -0.5 * math.expm1(-2 * T)
    n = x.size
    assert abs(x.mean() - mean) < 3 * math.sqrt(var / n)
    # variance of the sample variance for a normal sample is 2 var^2/n
    assert abs(x.var() - var) < 3 * math.sqrt(2 * var**2 / n)


def test_euler_marginal_is_close():
    x, _ = simulate_exits(1.0, 0.0, -math.inf, math.inf, 1.0,
                          MCConfig(n_paths=100_000, dt=1e-3, seed=2, scheme="euler", bridge=False))
    assert x.mean() == pytest.approx(1 - math.exp(-1), abs=0.01)


def test_symmetric_rule_has_zero_sharpe():
    mc = simulate_trade(ScaledProblem(0.0, 1.0, -1.0, 1.0), MCConfig(n_paths=100_000, dt=1e-2, seed=3))
    assert abs(mc.sr) < 3 * mc.se_sr


def test_exit_levels_are_the_thresholds():
    x, t = simulate_exits(0.5, 0.0, -1.0, 0.7, 2.0, MCConfig(n_paths=20_000, dt=1e-2, seed=4))
    hit = t < 2.0
    assert set(np.unique(x[hit])) <= {-1.0, 0.7}
    assert np.all((x[~hit] > -1.0) & (x[~hit] < 0.7))


def test_exit_times_shrink_with_corridor():
    durations = [simulate_trade(ScaledProblem(0.0, 1.0, -w, w), MCConfig(n_paths=20_000, dt=1e-3, seed=5)).mean_duration
                 for w in (0.4, 0.1, 0.02)]
    assert durations[0] > durations[1] > durations[2]
    assert durations[2] < 1e-3


@pytest.mark.property
@pytest.mark.slow
def test_dt_halving_is_within_noise():
    prob = ScaledProblem(1.0, 1.96, -2.0, 1.0)
    a = simulate_trade(prob, MCConfig(n_paths=200_000, dt=1e-2, seed=11))
    b = simulate_trade(prob, MCConfig(n_paths=200_000, dt=5e-3, seed=12))
    assert abs(a.sr - b.sr) < 3 * math.hypot(a.se_sr, b.se_sr)


@pytest.mark.slow
def test_discrete_monitoring_is_biased_without_bridge():
    # without the bridge test crossings between samples are missed
    prob = ScaledProblem(1.0, 1.96, -2.0, 1.0)
    bridged = simulate_trade(prob, MCConfig(n_paths=200_000, dt=1e-2, seed=13))
    plain = simulate_trade(prob, MCConfig(n_paths=200_000, dt=1e-2, seed=13, bridge=False))
    assert plain.mean_duration > bridged.mean_duration + 5 * bridged.se_mean_duration


def test_summarize_against_direct_moments():
    rng = np.random.default_rng(0)
    t = rng.uniform(0.5, 2.0, 10_000)
    x = rng.normal(0.2, 1.0, 10_000)
    s = summarize(x, t)
    r = x / t
    assert s.mean_ratio == pytest.approx(r.mean(), rel=1e-12)
    assert s.sigma == pytest.approx(r.std(), rel=1e-12)
    assert s.sr == pytest.approx(r.mean() / r.std(), rel=1e-12)
    assert s.mean_duration == pytest.approx(t.mean(), rel=1e-12)


def test_summarize_sharpe_error_against_bootstrap():
    rng = np.random.default_rng(1)
    t = rng.uniform(0.5, 2.0, 4000)
    x = rng.normal(0.3, 1.0, 4000)
    s = summarize(x, t)
    r = x / t
    boot = []
    for _ in range(400):
        idx = rng.integers(0, r.size, r.size)
        boot.append(r[idx].mean() / r[idx].std())
    assert s.se_sr == pytest.approx(np.std(boot), rel=0.15)
