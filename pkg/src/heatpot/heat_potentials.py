"""Sharpe ratio and expected duration by the method of heat potentials.

After the change of variables the three expectations E, F, G solve heat
equations on a domain with moving boundaries Pi_low(v), Pi_high(v) for
v in [0, Upsilon]. Each is written as a pair of boundary potentials whose
densities satisfy a coupled Volterra system of the second kind with a
weakly singular kernel. The system is solved by a forward trapezoidal
recursion in which the singular integrals are taken as Stieltjes integrals
in d sqrt(v - s).

Internally grid nodes are stored as the remaining distance r_k = Upsilon - v_k
so that the small spacings near the terminal node keep full precision.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .errors import BadGridSpec, DomainError, NonpositiveVariance, PivotBreakdown, SingularBoundary
from .ou_model import ScaledProblem

SQRT_2PI = math.sqrt(2.0 * math.pi)
PROBLEMS = ("E", "F", "G")
PIVOT_TOL = 1e-12
VARIANCE_TOL = 1e-10
DEGENERATE_UPSILON = 1e-6


@dataclass(frozen=True)
class HeatGrid:
    """Power-law grid v_k = Upsilon (1 - (1 - k/n)^p), clustered near Upsilon."""

    n: int
    upsilon: float
    p: float
    remaining: np.ndarray  # Upsilon - v_k

    @property
    def nodes(self) -> np.ndarray:
        return self.upsilon - self.remaining


def build_grid(n: int = 400, upsilon: float = 0.49, p: float = 4.0) -> HeatGrid:
    if int(n) != n or n < 8:
        raise BadGridSpec(f"n must be an integer >= 8, got {n}")
    if not 0.0 < upsilon < 0.5:
        raise BadGridSpec(f"Upsilon must lie in (0, 1/2), got {upsilon}")
    if not p >= 1:
        raise BadGridSpec(f"concentration exponent must be >= 1, got {p}")
    k = np.arange(n + 1)
    remaining = upsilon * (1.0 - k / n) ** p
    remaining[0] = upsilon
    return HeatGrid(int(n), float(upsilon), float(p), remaining)


@dataclass(frozen=True)
class MovingBoundaries:
    theta: float
    pi_low: float
    pi_high: float

    def __post_init__(self):
        if not self.pi_low < self.pi_high:
            raise DomainError("pi_low must be below pi_high")

    def low(self, v):
        return np.sqrt(1.0 - 2.0 * np.asarray(v, dtype=float)) * (self.pi_low - self.theta)

    def high(self, v):
        return np.sqrt(1.0 - 2.0 * np.asarray(v, dtype=float)) * (self.pi_high - self.theta)


def _boundary_columns(remaining, upsilon, bnd: MovingBoundaries, literal_f=False):
    """Data (e, f, g) on both boundaries at nodes given by remaining distance > 0."""
    r = np.asarray(remaining, dtype=float)
    c = 1.0 - 2.0 * upsilon
    ln_u = math.log1p(-2.0 * upsilon)
    a = np.sqrt(c + 2.0 * r)
    v = upsilon - r
    ln_ratio = np.log1p(2.0 * r / c)  # ln((1 - 2v)/(1 - 2 Upsilon))
    out = []
    for pi, f_factor in ((bnd.pi_low, 1.0 if literal_f else 4.0), (bnd.pi_high, 4.0)):
        shifted = a * (pi - bnd.theta) + bnd.theta  # Pi(v) + theta
        e = 2.0 * pi / ln_ratio + 2.0 * shifted / ln_u
        f = f_factor * pi**2 / ln_ratio**2 - 4.0 * (v + shifted**2) / ln_u**2
        g = 0.5 * np.log1p(-2.0 * v)
        out.append(np.column_stack([e, f, g]))
    return out


def boundary_data(problem: str, v: float, boundaries: MovingBoundaries, upsilon: float, literal_f=False):
    """Boundary values (low, high) of the shifted problem E, F or G at time v.

    With literal_f the lower F boundary uses pi_low^2 in place of 4 pi_low^2.
    """
    if problem not in PROBLEMS:
        raise DomainError(f"problem must be one of {PROBLEMS}")
    if not 0.0 <= v <= upsilon:
        raise DomainError("v must lie in [0, Upsilon]")
    if v == upsilon:
        raise SingularBoundary("boundary data are singular at v = Upsilon")
    low, high = _boundary_columns(np.array([upsilon - v]), upsilon, boundaries, literal_f)
    j = PROBLEMS.index(problem)
    return float(low[0, j]), float(high[0, j])


def kernel(alpha: int, beta: int, v: float, s: float, boundaries: MovingBoundaries) -> float:
    """Kernel K^{alpha,beta}(v, s) of the Volterra system, 0 <= s <= v.

    K^{1,1} and K^{2,2} are returned with the factor 1/sqrt(v - s) split out;
    K^{1,2} and K^{2,1} are regular and vanish on the diagonal.
    """
    if s > v:
        raise DomainError("kernel requires s <= v")
    b = boundaries
    av, as_ = math.sqrt(1.0 - 2.0 * v), math.sqrt(1.0 - 2.0 * s)
    d_low, d_high = b.theta - b.pi_low, b.theta - b.pi_high
    if alpha == beta:
        dd = d_low if alpha == 1 else d_high
        if s == v:
            return dd / (SQRT_2PI * av)
        # (Pi(v) - Pi(s))/(v - s) = 2 (theta - pi)/(a_v + a_s) since a_v^2 - a_s^2 = -2(v - s)
        slope = 2.0 * dd / (av + as_)
        dt = v - s
        return slope * math.exp(-slope * slope * dt / 2.0) / SQRT_2PI
    if s == v:
        return 0.0
    dt = v - s
    if (alpha, beta) == (1, 2):
        d = b.low(v) - b.high(s)
    else:
        d = b.high(v) - b.low(s)
    return float(d / dt**1.5 * math.exp(-d * d / (2.0 * dt)) / SQRT_2PI)


@numba.njit(cache=True, nogil=True)
def _recursion(r, a, p_low, p_high, chi_low, chi_high, d_low, d_high):
    m, q = chi_low.shape
    nu_low = np.zeros((m, q))
    nu_high = np.zeros((m, q))
    for c in range(q):
        nu_low[0, c] = chi_low[0, c]
        nu_high[0, c] = -chi_high[0, c]
    acc1 = np.zeros(q)
    acc2 = np.zeros(q)
    min_pivot = np.inf
    for k in range(1, m):
        acc1[:] = 0.0
        acc2[:] = 0.0
        for j in range(k):
            # Stieltjes weights for d sqrt(v_k - s) and trapezoid weights for ds at node j
            ws = 0.0
            wr = 0.0
            if j >= 1:
                dv = r[j - 1] - r[j]
                ws += dv / (math.sqrt(r[j] - r[k]) + math.sqrt(r[j - 1] - r[k]))
                wr += 0.5 * dv
            dv = r[j] - r[j + 1]
            ws += dv / (math.sqrt(r[j + 1] - r[k]) + math.sqrt(r[j] - r[k]))
            wr += 0.5 * dv
            dt = r[j] - r[k]
            s = 2.0 / (a[k] + a[j])
            x11 = d_low * s
            x22 = d_high * s
            k11 = x11 * math.exp(-x11 * x11 * dt / 2.0) / SQRT_2PI
            k22 = x22 * math.exp(-x22 * x22 * dt / 2.0) / SQRT_2PI
            d12 = p_low[k] - p_high[j]
            d21 = p_high[k] - p_low[j]
            k12 = d12 / (dt * math.sqrt(dt)) * math.exp(-d12 * d12 / (2.0 * dt)) / SQRT_2PI
            k21 = d21 / (dt * math.sqrt(dt)) * math.exp(-d21 * d21 / (2.0 * dt)) / SQRT_2PI
            for c in range(q):
                acc1[c] += k11 * ws * nu_low[j, c] + k12 * wr * nu_high[j, c]
                acc2[c] += k21 * wr * nu_low[j, c] + k22 * ws * nu_high[j, c]
        sq = math.sqrt(r[k - 1] - r[k])
        piv1 = 1.0 + d_low / (SQRT_2PI * a[k]) * sq
        piv2 = -1.0 + d_high / (SQRT_2PI * a[k]) * sq
        min_pivot = min(min_pivot, abs(piv1), abs(piv2))
        for c in range(q):
            nu_low[k, c] = (chi_low[k, c] - acc1[c]) / piv1
            nu_high[k, c] = (chi_high[k, c] - acc2[c]) / piv2
    return nu_low, nu_high, min_pivot


@dataclass(frozen=True)
class BoundaryDensities:
    """Densities on the grid nodes; columns are the problems E, F, G.

    The terminal node, where the densities are singular, holds zeros.
    """

    low: np.ndarray
    high: np.ndarray

    def pair(self, problem: str):
        j = PROBLEMS.index(problem)
        return self.low[:, j], self.high[:, j]


def _solve_all(grid: HeatGrid, bnd: MovingBoundaries, literal_f=False) -> BoundaryDensities:
    r = grid.remaining[:-1]
    chi_low, chi_high = _boundary_columns(r, grid.upsilon, bnd, literal_f)
    a = np.sqrt(1.0 - 2.0 * grid.upsilon + 2.0 * r)
    p_low = a * (bnd.pi_low - bnd.theta)
    p_high = a * (bnd.pi_high - bnd.theta)
    nu_low, nu_high, min_pivot = _recursion(
        np.ascontiguousarray(r), a, p_low, p_high, chi_low, chi_high,
        bnd.theta - bnd.pi_low, bnd.theta - bnd.pi_high,
    )
    if min_pivot < PIVOT_TOL:
        raise PivotBreakdown(f"pivot {min_pivot:.3e} below {PIVOT_TOL}; refine the grid")
    zero = np.zeros((1, 3))
    return BoundaryDensities(np.vstack([nu_low, zero]), np.vstack([nu_high, zero]))


def solve_volterra(problem: str, grid: HeatGrid, boundaries: MovingBoundaries, literal_f=False):
    """Density pair (low, high) for one problem; the terminal node is excluded (zero)."""
    if problem not in PROBLEMS:
        raise DomainError(f"problem must be one of {PROBLEMS}")
    return _solve_all(grid, boundaries, literal_f).pair(problem)


def evaluate_hat(densities, grid: HeatGrid, boundaries: MovingBoundaries, varpi: float):
    """Trapezoidal evaluation of the potentials at (Upsilon, varpi).

    `densities` is a (low, high) pair of arrays, or a BoundaryDensities for
    which the three values (E, F, G) are returned. The weight at the terminal
    node is zero.
    """
    r = grid.remaining[:-1]
    a = np.sqrt(1.0 - 2.0 * grid.upsilon + 2.0 * r)

    def weight(pi):
        d = varpi - a * (pi - boundaries.theta)
        return np.append(d * np.exp(-d * d / (2.0 * r)) / (SQRT_2PI * r**1.5), 0.0)

    w_low, w_high = weight(boundaries.pi_low), weight(boundaries.pi_high)
    dv = grid.remaining[:-1] - grid.remaining[1:]
    if isinstance(densities, BoundaryDensities):
        s = w_low[:, None] * densities.low + w_high[:, None] * densities.high
        return 0.5 * ((s[1:] + s[:-1]) * dv[:, None]).sum(axis=0)
    low, high = densities
    s = w_low * np.asarray(low) + w_high * np.asarray(high)
    return float(0.5 * np.sum((s[1:] + s[:-1]) * dv))


@dataclass(frozen=True)
class SRResult:
    e_hat: float
    f_hat: float
    g_hat: float
    mean: float  # E{x/iota}
    variance_term: float  # E{(x/iota)^2} - E{x/iota}^2
    sharpe: float
    duration: float
    variance_clipped: bool = False

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance_term)


def sharpe_and_duration(problem: ScaledProblem, n: int = 400, p: float = 4.0, literal_f=False) -> SRResult:
    """Sharpe ratio E/sqrt(F - E^2) of x_iota/iota and expected duration E{iota}."""
    if problem.theta < 0:
        raise DomainError("theta must be >= 0; reflect the problem first")
    ups = problem.upsilon_cap
    if ups < DEGENERATE_UPSILON:
        return SRResult(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, problem.horizon)
    bnd = MovingBoundaries(problem.theta, problem.pi_low, problem.pi_high)
    grid = build_grid(n, ups, p)
    dens = _solve_all(grid, bnd, literal_f)
    e_hat, f_hat, g_hat = evaluate_hat(dens, grid, bnd, problem.varpi)
    ln_u = math.log1p(-2.0 * ups)
    shift = problem.varpi + problem.theta
    mean = e_hat - 2.0 * shift / ln_u
    var = f_hat - e_hat**2 + 4.0 * (ups + ln_u * shift * e_hat) / ln_u**2
    clipped = False
    if var < -VARIANCE_TOL:
        raise NonpositiveVariance(f"variance {var:.3e} is negative; refine the grid")
    if var <= 0.0:
        warnings.warn("variance clipped to zero; Sharpe ratio reported as infinite", RuntimeWarning)
        var, clipped = 0.0, True
        sharpe = math.copysign(math.inf, mean) if mean != 0 else 0.0
    else:
        sharpe = mean / math.sqrt(var)
    duration = g_hat - 0.5 * ln_u
    return SRResult(e_hat, f_hat, g_hat, mean, var, sharpe, duration, clipped)
