import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatpot.classical import duration_mean
from heatpot.errors import BadGridSpec, DomainError, PivotBreakdown, SingularBoundary
from heatpot.heat_potentials import (
    BoundaryDensities,
    MovingBoundaries,
    _recursion,
    _solve_all,
    boundary_data,
    build_grid,
    evaluate_hat,
    kernel,
    sharpe_and_duration,
    solve_volterra,
)
from heatpot.montecarlo import MCConfig, simulate_trade
from heatpot.ou_model import ScaledProblem

# cases where the exit-time mean is short compared with the horizon at
# Upsilon = 0.499999, so the truncation at T is negligible
DURATION_PINS = [(1.0, -2.0, 1.0), (0.0, -1.0, 1.0), (0.5, -1.0, 0.5),
                 (0.0, -0.5, 1.5), (1.0, -1.0, 0.5), (0.25, -1.0, 0.75)]

MC_PINS = [
    (1.0, 1.96, -2.0, 1.0), (1.0, 1.96, -2.0, 0.5), (1.0, 1.96, -1.0, 1.0), (1.0, 1.96, -3.0, 2.0),
    (0.5, 1.96, -1.5, 1.0), (0.5, 1.0, -1.0, 0.5), (0.5, 0.5, -2.0, 1.5), (0.0, 1.96, -1.0, 2.0),
    (0.0, 1.0, -0.5, 0.5), (0.0, 4.25, -2.0, 1.0), (1.0, 0.3, -0.5, 1.0), (0.25, 1.5, -1.0, 3.0),
]


def test_grid_shape_and_clustering():
    g = build_grid(10, 0.4, 4.0)
    assert g.nodes[0] == 0.0 and g.remaining[-1] == 0.0
    assert g.nodes[-1] == pytest.approx(0.4)
    steps = np.diff(g.nodes)
    assert np.all(steps > 0) and np.all(np.diff(steps) < 0)
    uniform = build_grid(10, 0.4, 1.0)
    np.testing.assert_allclose(np.diff(uniform.nodes), 0.04)


@pytest.mark.parametrize("args", [(4, 0.4, 4.0), (10.5, 0.4, 4.0), (10, 0.5, 4.0), (10, 0.0, 4.0), (10, 0.4, 0.5)])
def test_grid_errors(args):
    with pytest.raises(BadGridSpec):
        build_grid(*args)


@pytest.mark.property
@settings(max_examples=50, deadline=None)
@given(theta=st.floats(-2, 2), lo=st.floats(-3, -0.05), hi=st.floats(0.05, 3), ups=st.floats(0.01, 0.4999))
def test_boundary_data_vanish_at_origin(theta, lo, hi, ups):
    bnd = MovingBoundaries(theta, lo, hi)
    for prob in ("E", "F", "G"):
        low, high = boundary_data(prob, 0.0, bnd, ups)
        assert abs(low) < 1e-9 * (1 + abs(lo)) ** 2 and abs(high) < 1e-9 * (1 + abs(hi)) ** 2


def test_boundary_data_errors():
    bnd = MovingBoundaries(0.0, -1.0, 1.0)
    with pytest.raises(SingularBoundary):
        boundary_data("E", 0.3, bnd, 0.3)
    with pytest.raises(DomainError):
        boundary_data("H", 0.1, bnd, 0.3)
    with pytest.raises(DomainError):
        boundary_data("E", 0.4, bnd, 0.3)


def test_boundary_data_direct_formula():
    # E data = 2 pi / ln((1-2v)/(1-2U)) + 2 (Pi(v) + theta)/ln(1-2U)
    theta, lo, hi, ups, v = 0.7, -1.5, 0.8, 0.45, 0.2
    bnd = MovingBoundaries(theta, lo, hi)
    ln_u = math.log(1 - 2 * ups)
    lr = math.log((1 - 2 * v) / (1 - 2 * ups))
    pi_v = math.sqrt(1 - 2 * v) * (hi - theta)
    e_low, e_high = boundary_data("E", v, bnd, ups)
    assert e_high == pytest.approx(2 * hi / lr + 2 * (pi_v + theta) / ln_u, rel=1e-13)
    f_low, f_high = boundary_data("F", v, bnd, ups)
    assert f_high == pytest.approx(4 * hi**2 / lr**2 - 4 * (v + (pi_v + theta) ** 2) / ln_u**2, rel=1e-12)
    g_low, g_high = boundary_data("G", v, bnd, ups)
    assert g_low == g_high == pytest.approx(0.5 * math.log(1 - 2 * v), rel=1e-14)
    f_lit, _ = boundary_data("F", v, bnd, ups, literal_f=True)
    pl = math.sqrt(1 - 2 * v) * (lo - theta)
    assert f_lit == pytest.approx(lo**2 / lr**2 - 4 * (v + (pl + theta) ** 2) / ln_u**2, rel=1e-12)
    assert f_lit != f_low


def test_kernel_diagonal_limits():
    bnd = MovingBoundaries(0.8, -1.2, 0.9)
    v = 0.3
    for alpha in (1, 2):
        near = kernel(alpha, alpha, v, v - 1e-12, bnd)
        assert near == pytest.approx(kernel(alpha, alpha, v, v, bnd), rel=1e-9)
    assert kernel(1, 2, v, v, bnd) == 0.0
    assert kernel(2, 1, v, v, bnd) == 0.0
    # cross kernels decay to zero approaching the diagonal
    assert abs(kernel(1, 2, v, v - 1e-4, bnd)) < 1e-100
    with pytest.raises(DomainError):
        kernel(1, 1, 0.1, 0.2, bnd)


def test_kernel_same_boundary_matches_difference_quotient():
    bnd = MovingBoundaries(0.8, -1.2, 0.9)
    v, s = 0.35, 0.1
    slope = (bnd.low(v) - bnd.low(s)) / (v - s)
    expected = slope * math.exp(-slope**2 * (v - s) / 2) / math.sqrt(2 * math.pi)
    assert kernel(1, 1, v, s, bnd) == pytest.approx(float(expected), rel=1e-12)


def test_zero_data_gives_zero_densities():
    g = build_grid(40, 0.45, 4.0)
    r = g.remaining[:-1]
    a = np.sqrt(1 - 2 * g.upsilon + 2 * r)
    zeros = np.zeros((r.size, 3))
    lo, hi = _recursion(r, a, a * -1.0, a * 1.0, zeros, zeros, 1.0, -1.0)[:2]
    assert np.all(lo == 0.0) and np.all(hi == 0.0)


def test_densities_are_linear_in_data():
    g = build_grid(60, 0.45, 4.0)
    r = g.remaining[:-1]
    a = np.sqrt(1 - 2 * g.upsilon + 2 * r)
    rng = np.random.default_rng(0)
    c1, c2, c3, c4 = (rng.normal(size=(r.size, 1)) for _ in range(4))
    args = (r, a, a * -1.5, a * 0.5)
    l1, h1, _ = _recursion(*args, c1, c2, 1.5, -0.5)
    l2, h2, _ = _recursion(*args, c3, c4, 1.5, -0.5)
    l3, h3, _ = _recursion(*args, 2 * c1 - c3, 2 * c2 - c4, 1.5, -0.5)
    np.testing.assert_allclose(l3, 2 * l1 - l2, atol=1e-10)
    np.testing.assert_allclose(h3, 2 * h1 - h2, atol=1e-10)


@pytest.mark.property
def test_symmetric_corridor_density_symmetry():
    # theta = 0 and pi_low = -pi_high: E data are odd and F data even under
    # x -> -x; with seeds (chi_low, -chi_high) this makes the E densities
    # equal and the F, G densities opposite on the two boundaries
    g = build_grid(200, 0.49, 4.0)
    dens = _solve_all(g, MovingBoundaries(0.0, -1.0, 1.0))
    np.testing.assert_allclose(dens.low[:, 0], dens.high[:, 0], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(dens.low[:, 1], -dens.high[:, 1], rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(dens.low[:, 2], -dens.high[:, 2], rtol=1e-12, atol=1e-12)
    # and the resulting mean return rate vanishes
    res = sharpe_and_duration(ScaledProblem(0.0, 1.96, -1.0, 1.0))
    assert abs(res.mean) < 1e-12 and abs(res.sharpe) < 1e-11


def test_solve_volterra_and_evaluate_pair_agree_with_batch():
    g = build_grid(100, 0.49, 4.0)
    bnd = MovingBoundaries(1.0, -2.0, 1.0)
    dens = _solve_all(g, bnd)
    varpi = -math.sqrt(1 - 2 * 0.49)
    batch = evaluate_hat(dens, g, bnd, varpi)
    for j, prob in enumerate(("E", "F", "G")):
        pair = solve_volterra(prob, g, bnd)
        assert pair[0][-1] == 0.0 and pair[1][-1] == 0.0
        assert evaluate_hat(pair, g, bnd, varpi) == pytest.approx(batch[j], rel=1e-14)
    assert isinstance(dens, BoundaryDensities)


def test_pivot_breakdown():
    g = build_grid(8, 0.49, 1.0)
    r = g.remaining
    a1 = math.sqrt(1 - 2 * 0.49 + 2 * r[1])
    pi_high = 0.5
    theta = pi_high + math.sqrt(2 * math.pi) * a1 / math.sqrt(r[0] - r[1])
    with pytest.raises(PivotBreakdown):
        _solve_all(g, MovingBoundaries(theta, -1.0, pi_high))


def test_degenerate_horizon():
    res = sharpe_and_duration(ScaledProblem(1.0, 1e-8, -1.0, 1.0))
    assert res.sharpe == 0.0 and res.duration == 1e-8


def test_negative_theta_rejected():
    with pytest.raises(DomainError):
        sharpe_and_duration(ScaledProblem(-0.5, 1.0, -1.0, 1.0))


def test_literal_f_changes_variance_only():
    prob = ScaledProblem(1.0, 1.96, -2.0, 1.0)
    a = sharpe_and_duration(prob)
    b = sharpe_and_duration(prob, literal_f=True)
    assert a.e_hat == b.e_hat and a.duration == b.duration
    assert a.f_hat != b.f_hat


@pytest.mark.property
def test_convergence_on_uniform_grid():
    prob = ScaledProblem.from_upsilon(1.0, 0.49, -2.0, 1.0)
    sr = [sharpe_and_duration(prob, n=n, p=1.0).sharpe for n in (100, 200, 400, 800, 1600)]
    diffs = np.abs(np.diff(sr))
    assert np.all(diffs[:-1] / diffs[1:] >= 1.8)


@pytest.mark.property
def test_duration_monotone_in_take_profit():
    his = np.arange(0.2, 3.01, 0.2)
    dur = [sharpe_and_duration(ScaledProblem(1.0, 1.96, -2.0, h)).duration for h in his]
    assert np.all(np.diff(dur) >= -1e-9)


@pytest.mark.property
@settings(max_examples=25, deadline=None)
@given(theta=st.floats(0, 2), T=st.floats(0.05, 4), lo=st.floats(-3, -0.2), hi=st.floats(0.2, 3))
def test_duration_within_horizon(theta, T, lo, hi):
    res = sharpe_and_duration(ScaledProblem(theta, T, lo, hi), n=200)
    assert 0.0 < res.duration <= T * (1 + 1e-9)
    assert res.variance_term > 0


@pytest.mark.property
@settings(max_examples=25, deadline=None)
@given(lo=st.floats(-3, -0.2), hi=st.floats(0.2, 3), T=st.floats(0.1, 3))
def test_zero_theta_reflection_flips_sharpe(lo, hi, T):
    a = sharpe_and_duration(ScaledProblem(0.0, T, lo, hi), n=200)
    b = sharpe_and_duration(ScaledProblem(0.0, T, -hi, -lo), n=200)
    assert b.sharpe == pytest.approx(-a.sharpe, abs=1e-9)
    assert b.duration == pytest.approx(a.duration, rel=1e-9)


@pytest.mark.property
@pytest.mark.parametrize("theta,lo,hi", DURATION_PINS)
def test_long_horizon_duration_matches_closed_form(theta, lo, hi):
    res = sharpe_and_duration(ScaledProblem.from_upsilon(theta, 0.499999, lo, hi), n=1600, p=8.0)
    assert res.duration == pytest.approx(duration_mean(theta, lo, hi), rel=0.02)


@pytest.mark.property
@pytest.mark.slow
@pytest.mark.parametrize("theta,T,lo,hi", MC_PINS)
def test_sharpe_matches_monte_carlo(theta, T, lo, hi):
    prob = ScaledProblem(theta, T, lo, hi)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        hp = sharpe_and_duration(prob)
    mc = simulate_trade(prob, MCConfig(n_paths=200_000, dt=1e-2, seed=7))
    assert abs(hp.sharpe - mc.sr) <= 3 * mc.se_sr
    assert abs(hp.duration - mc.mean_duration) <= 3 * mc.se_mean_duration
