"""Exhaustive maximization of the Sharpe ratio over stop-loss/take-profit grids."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyGrid, HeatpotError
from .heat_potentials import SRResult, sharpe_and_duration
from .montecarlo import worker_count
from .ou_model import ScaledProblem, horizon_of_upsilon

TIE_REPORT_TOL = 1e-4
TIE_BREAK_TOL = 1e-12


def _axis(lo, hi, step):
    if not step > 0:
        raise EmptyGrid("step must be positive")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    if count < 1:
        return np.zeros(0)
    return np.round(lo + step * np.arange(count), 12)


@dataclass(frozen=True)
class RuleGrid:
    pi_low: np.ndarray
    pi_high: np.ndarray

    def __post_init__(self):
        lo, hi = np.asarray(self.pi_low, float), np.asarray(self.pi_high, float)
        if lo.size == 0 or hi.size == 0:
            raise EmptyGrid("rule grid is empty")
        if np.any(lo >= 0) or np.any(hi <= 0):
            raise DomainError("rule grid needs pi_low < 0 < pi_high")
        if np.any(np.diff(lo) <= 0) or np.any(np.diff(hi) <= 0):
            raise DomainError("rule grid axes must be strictly increasing")
        object.__setattr__(self, "pi_low", lo)
        object.__setattr__(self, "pi_high", hi)

    @classmethod
    def from_box(cls, low_box=(-4.0, -0.1), high_box=(0.1, 4.0), step=0.1, high_step=None):
        return cls(_axis(*low_box, step), _axis(*high_box, high_step or step))

    @property
    def shape(self):
        return (self.pi_low.size, self.pi_high.size)


@dataclass
class SRSurface:
    theta: float
    upsilon: float
    grid: RuleGrid
    E: np.ndarray
    sigma: np.ndarray
    SR: np.ndarray
    DUR: np.ndarray
    flags: np.ndarray  # empty string, or the name of the solver error

    def rows(self):
        """Row-major (pi_low, pi_high, E, sigma, SR, DUR) tuples."""
        for i, lo in enumerate(self.grid.pi_low):
            for j, hi in enumerate(self.grid.pi_high):
                yield lo, hi, self.E[i, j], self.sigma[i, j], self.SR[i, j], self.DUR[i, j]


def sr_surface(theta, upsilon, grid: RuleGrid, n=400, p=4.0, threads=None, literal_f=False) -> SRSurface:
    """One heat-potential solve per cell; failed cells hold NaN and a flag."""
    if theta < 0:
        raise DomainError("theta must be >= 0; use maximize_sr for reflection")
    horizon = horizon_of_upsilon(upsilon)
    shape = grid.shape
    out = {k: np.full(shape, np.nan) for k in ("E", "sigma", "SR", "DUR")}
    flags = np.full(shape, "", dtype=object)

    def row(i):
        for j, hi in enumerate(grid.pi_high):
            try:
                res: SRResult = sharpe_and_duration(
                    ScaledProblem(theta, horizon, grid.pi_low[i], hi), n=n, p=p, literal_f=literal_f)
            except HeatpotError as exc:
                flags[i, j] = type(exc).__name__
                continue
            out["E"][i, j] = res.mean
            out["sigma"][i, j] = math.sqrt(res.variance_term)
            out["SR"][i, j] = res.sharpe
            out["DUR"][i, j] = res.duration
            if res.variance_clipped:
                flags[i, j] = "VarianceClipped"

    workers = worker_count(threads)
    if workers == 1:
        for i in range(shape[0]):
            row(i)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(row, range(shape[0])))
    return SRSurface(theta, upsilon, grid, out["E"], out["sigma"], out["SR"], out["DUR"], flags)


@dataclass(frozen=True)
class OptimalRule:
    pi_low_star: float
    pi_high_star: float
    sr_star: float
    upsilon: float
    horizon: float
    tie_count: int
    theta: float
    reflected: bool = False


def _best_cell(surface: SRSurface):
    sr = np.where(np.isfinite(surface.SR), surface.SR, -np.inf)
    best = sr.max()
    if not np.isfinite(best):
        raise EmptyGrid("no cell of the surface could be evaluated")
    lo, hi = np.meshgrid(surface.grid.pi_low, surface.grid.pi_high, indexing="ij")
    extremeness = np.abs(lo) + np.abs(hi)
    cand = np.argwhere(sr >= best - TIE_BREAK_TOL)
    i, j = min(cand, key=lambda ij: (extremeness[ij[0], ij[1]], ij[0], ij[1]))
    ties = int(np.sum(sr >= best - TIE_REPORT_TOL))
    return int(i), int(j), ties


def maximize_sr(theta, upsilon, low_box=(-4.0, -0.1), high_box=(0.1, 4.0), step=0.1, n=400, p=4.0,
                threads=None, return_surface=False, literal_f=False):
    """Scan the rule grid and return the rule with the largest Sharpe ratio.

    For theta < 0 the reflected problem is solved on the reflected box and the
    rule is mapped back with (pi_low, pi_high) -> (-pi_high, -pi_low). Cells
    within 1e-12 of the maximum are treated as equal and the least extreme
    rule wins; tie_count reports how many cells lie within 1e-4.
    """
    reflected = theta < 0
    if reflected:
        low_box, high_box = (-high_box[1], -high_box[0]), (-low_box[1], -low_box[0])
    grid = RuleGrid.from_box(low_box, high_box, step)
    surface = sr_surface(abs(theta), upsilon, grid, n=n, p=p, threads=threads, literal_f=literal_f)
    i, j, ties = _best_cell(surface)
    lo, hi = float(grid.pi_low[i]), float(grid.pi_high[j])
    if reflected:
        lo, hi = -hi, -lo
    rule = OptimalRule(lo, hi, float(surface.SR[i, j]), upsilon, horizon_of_upsilon(upsilon), ties, theta, reflected)
    return (rule, surface) if return_surface else rule


def maximize_sr_over_horizon(theta, upsilon_candidates, low_box=(-4.0, -0.1), high_box=(0.1, 4.0), step=0.1,
                             n=400, p=4.0, threads=None):
    """Best rule over several horizons; earlier candidates win exact ties."""
    candidates = list(upsilon_candidates)
    if not candidates:
        raise EmptyGrid("no horizon candidates")
    best = None
    for ups in candidates:
        rule = maximize_sr(theta, ups, low_box, high_box, step, n, p, threads)
        if best is None or rule.sr_star > best.sr_star:
            best = rule
    return best
