"""Monte Carlo oracle for exit statistics of dx = (theta - x) dt + dW.

Paths are advanced with exact Gaussian transitions. Barrier crossings
between two samples are detected with a bridge test: when a step ends
close to a barrier (or beyond it) the step is bisected with exact OU bridge
midpoints, down to a leaf of length about 1e-7, where the Brownian-bridge
crossing probability exp(-2 (b - x0)(b - x1)/h) decides. This removes the
O(sqrt(dt)) bias of discrete monitoring so the time step only affects
speed, not the estimates. Plain discrete monitoring (no bridge) and an
Euler scheme are kept for comparison.

Paths are split into blocks with independent generators spawned from one
seed, so results do not depend on the number of worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigError, MonteCarloError
from .ou_model import ScaledProblem

BLOCK = 1 << 15
LEAF_STEP = 1e-7
REFINE_TOL = 1e-9


@dataclass(frozen=True)
class MCConfig:
    n_paths: int = 1_000_000
    dt: float = 1e-3
    seed: int = 0
    scheme: str = "exact"  # or "euler"
    bridge: bool = True
    threads: int | None = None

    def __post_init__(self):
        if int(self.n_paths) != self.n_paths or self.n_paths < 1000:
            raise ConfigError("n_paths must be an integer >= 1000")
        if not 0.0 < self.dt <= 1e-2:
            raise ConfigError("dt must lie in (0, 1e-2]")
        if self.scheme not in ("exact", "euler"):
            raise ConfigError("scheme must be 'exact' or 'euler'")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")


def worker_count(requested=None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("HEATPOT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"HEATPOT_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


@numba.njit(cache=True, nogil=True)
def _cross_prob(a, c, h, lo, hi):
    p_lo = math.exp(-2.0 * (a - lo) * (c - lo) / h)
    p_hi = math.exp(-2.0 * (hi - a) * (hi - c) / h)
    return p_lo, p_hi


@numba.njit(cache=True, nogil=True)
def _resolve_step(rng, x0, x1, t0, h0, theta, lo, hi, depth_max, sa, sc, st, sh, sd):
    # depth-first search for the first crossing in [t0, t0 + h0]; returns (time, side)
    top = 0
    sa[0] = x0
    sc[0] = x1
    st[0] = t0
    sh[0] = h0
    sd[0] = 0
    while top >= 0:
        a = sa[top]
        c = sc[top]
        t = st[top]
        h = sh[top]
        d = sd[top]
        top -= 1
        outside = c <= lo or c >= hi
        if outside:
            if d >= depth_max:
                b = lo if c <= lo else hi
                return t + h * (b - a) / (c - a), (-1 if c <= lo else 1)
        else:
            p_lo, p_hi = _cross_prob(a, c, h, lo, hi)
            p = p_lo + p_hi
            if p < REFINE_TOL or d >= depth_max:
                if p > 1e-15:
                    u = rng.random()
                    if u < p_lo:
                        return t + 0.5 * h, -1
                    if u < p:
                        return t + 0.5 * h, 1
                continue
        # exact OU bridge midpoint over two half steps
        hh = 0.5 * h
        rho = math.exp(-hh)
        v1 = -0.5 * math.expm1(-h)
        ya = a - theta
        yc = c - theta
        mean = rho * ya + rho / (1.0 + rho * rho) * (yc - rho * rho * ya)
        m = theta + mean + math.sqrt(v1 / (1.0 + rho * rho)) * rng.standard_normal()
        top += 1
        sa[top] = m
        sc[top] = c
        st[top] = t + hh
        sh[top] = hh
        sd[top] = d + 1
        top += 1
        sa[top] = a
        sc[top] = m
        st[top] = t
        sh[top] = hh
        sd[top] = d + 1
    return 0.0, 0


@numba.njit(cache=True, nogil=True)
def _simulate_block(rng, n, theta, x_start, lo, hi, horizon, dt, exact, bridge, depth_max, out_x, out_t):
    nsteps = int(math.ceil(horizon / dt - 1e-9))
    size = depth_max + 3
    sa = np.empty(size)
    sc = np.empty(size)
    st = np.empty(size)
    sh = np.empty(size)
    sd = np.empty(size, dtype=np.int64)
    for i in range(n):
        x = x_start
        exited = False
        for k in range(nsteps):
            t = k * dt
            h = dt if k < nsteps - 1 else horizon - t
            z = rng.standard_normal()
            if exact:
                x1 = theta + (x - theta) * math.exp(-h) + math.sqrt(-0.5 * math.expm1(-2.0 * h)) * z
            else:
                x1 = x + (theta - x) * h + math.sqrt(h) * z
            # skip the bridge search when both crossing probabilities are below 1e-15
            far = (x1 > lo and x1 < hi and 2.0 * (x - lo) * (x1 - lo) > 34.6 * h
                   and 2.0 * (hi - x) * (hi - x1) > 34.6 * h)
            if bridge and not far:
                tex, side = _resolve_step(rng, x, x1, t, h, theta, lo, hi, depth_max, sa, sc, st, sh, sd)
                if side != 0:
                    out_x[i] = lo if side < 0 else hi
                    out_t[i] = tex
                    exited = True
                    break
            elif x1 <= lo or x1 >= hi:
                out_x[i] = lo if x1 <= lo else hi
                out_t[i] = t + h
                exited = True
                break
            x = x1
        if not exited:
            out_x[i] = x
            out_t[i] = horizon


def simulate_exits(theta, x_start, lo, hi, horizon, config: MCConfig):
    """Exit levels and times of paths started at x_start, stopped at lo, hi or the horizon.

    lo and hi may be infinite. Returns (x_exit, t_exit) arrays of length n_paths.
    """
    if not lo < x_start < hi:
        raise ConfigError("start point must lie strictly between the barriers")
    if not horizon > 0:
        raise ConfigError("horizon must be positive")
    n = int(config.n_paths)
    out_x = np.empty(n)
    out_t = np.empty(n)
    starts = list(range(0, n, BLOCK))
    seeds = np.random.SeedSequence(int(config.seed)).spawn(len(starts))
    depth_max = max(0, int(math.ceil(math.log2(config.dt / LEAF_STEP))))
    exact = config.scheme == "exact"
    bridge = bool(config.bridge)

    def run(i):
        s = starts[i]
        e = min(s + BLOCK, n)
        rng = np.random.Generator(np.random.PCG64(seeds[i]))
        _simulate_block(rng, e - s, float(theta), float(x_start), float(lo), float(hi), float(horizon),
                        float(config.dt), exact, bridge, depth_max, out_x[s:e], out_t[s:e])

    workers = worker_count(config.threads)
    if workers == 1:
        for i in range(len(starts)):
            run(i)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, range(len(starts))))
    if not (np.all(np.isfinite(out_x)) and np.all(out_t > 0)):
        raise MonteCarloError("simulation produced invalid exit records")
    return out_x, out_t


def _se(values) -> float:
    return float(np.std(values) / math.sqrt(len(values)))


@dataclass(frozen=True)
class MCStats:
    mean_ratio: float  # E{x/iota}
    mean_ratio_sq: float  # E{(x/iota)^2}
    sigma: float
    sr: float
    mean_duration: float
    duration_variance: float
    se_mean_ratio: float
    se_mean_ratio_sq: float
    se_sigma: float
    se_sr: float
    se_mean_duration: float
    se_duration_variance: float
    n_paths: int


def summarize(x_exit, t_exit) -> MCStats:
    """Moments of the per-path return rate x/iota and duration with delta-method errors."""
    ratio = x_exit / t_exit
    m1 = float(np.mean(ratio))
    m2 = float(np.mean(ratio * ratio))
    dev = ratio - m1
    var = float(np.mean(dev * dev))
    if var <= 0:
        raise MonteCarloError("return rate has zero sample variance")
    sigma = math.sqrt(var)
    psi_sigma = (dev * dev - var) / (2.0 * sigma)
    psi_sr = dev / sigma - m1 * psi_sigma / var
    dur = float(np.mean(t_exit))
    ddev = t_exit - dur
    dvar = float(np.mean(ddev * ddev))
    return MCStats(
        mean_ratio=m1, mean_ratio_sq=m2, sigma=sigma, sr=m1 / sigma,
        mean_duration=dur, duration_variance=dvar,
        se_mean_ratio=_se(ratio), se_mean_ratio_sq=_se(ratio * ratio), se_sigma=_se(psi_sigma),
        se_sr=_se(psi_sr), se_mean_duration=_se(t_exit), se_duration_variance=_se(ddev * ddev - dvar),
        n_paths=len(ratio),
    )


def simulate_trade(problem: ScaledProblem, config: MCConfig = MCConfig()) -> MCStats:
    """Simulate the trade from x(0) = 0 until a bound is hit or the horizon expires."""
    if problem.theta < 0:
        raise ConfigError("theta must be >= 0; reflect the problem first")
    x, t = simulate_exits(problem.theta, 0.0, problem.pi_low, problem.pi_high, problem.horizon, config)
    return summarize(x, t)
