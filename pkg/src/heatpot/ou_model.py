"""Ornstein-Uhlenbeck process parameters, OLS calibration and scaling.

The dimensional process is dx' = kappa' (theta' - x') dt' + sigma' dW.
With t = kappa' t' and x = sqrt(kappa')/sigma' x' it becomes
dx = (theta - x) dt + dW, whose stationary standard deviation is 1/sqrt(2).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRegressor, DomainError, HorizonOverflow, InsufficientData


@dataclass(frozen=True)
class OUParams:
    kappa_raw: float
    theta_raw: float
    sigma_raw: float

    def __post_init__(self):
        if not self.kappa_raw > 0:
            raise DomainError("kappa_raw must be positive")
        if not self.sigma_raw > 0:
            raise DomainError("sigma_raw must be positive")

    @property
    def omega_raw(self) -> float:
        """Stationary standard deviation sigma'/sqrt(2 kappa')."""
        return self.sigma_raw / math.sqrt(2.0 * self.kappa_raw)


@dataclass(frozen=True)
class TradingRuleRaw:
    pi_low_raw: float
    pi_high_raw: float
    T_raw: float

    def __post_init__(self):
        if not self.pi_low_raw < 0 < self.pi_high_raw:
            raise DomainError("trading rule requires pi_low < 0 < pi_high")
        if not self.T_raw > 0:
            raise DomainError("horizon must be positive")


def upsilon_of_horizon(T: float) -> float:
    """Upsilon = (1 - exp(-2T))/2."""
    if not T > 0:
        raise DomainError("horizon must be positive")
    ups = -0.5 * math.expm1(-2.0 * T)
    if 1.0 - 2.0 * ups <= 0.0 or ups >= 0.5:
        raise HorizonOverflow(f"T = {T} is too large: 1 - 2*Upsilon underflows")
    return ups


def horizon_of_upsilon(upsilon: float) -> float:
    """Inverse of :func:`upsilon_of_horizon`, T = -ln(1 - 2 Upsilon)/2."""
    if not 0.0 < upsilon < 0.5:
        raise DomainError(f"Upsilon must lie in (0, 1/2), got {upsilon}")
    return -0.5 * math.log1p(-2.0 * upsilon)


@dataclass(frozen=True)
class ScaledProblem:
    """Nondimensional problem: equilibrium theta, horizon and trading rule."""

    theta: float
    horizon: float
    pi_low: float
    pi_high: float
    upsilon_cap: float = field(init=False)
    varpi: float = field(init=False)

    def __post_init__(self):
        if not self.pi_low < 0 < self.pi_high:
            raise DomainError("trading rule requires pi_low < 0 < pi_high")
        ups = upsilon_of_horizon(self.horizon)
        object.__setattr__(self, "upsilon_cap", ups)
        object.__setattr__(self, "varpi", -math.sqrt(1.0 - 2.0 * ups) * self.theta)

    @classmethod
    def from_upsilon(cls, theta, upsilon, pi_low, pi_high):
        return cls(theta, horizon_of_upsilon(upsilon), pi_low, pi_high)

    def reflected(self) -> "ScaledProblem":
        """Equivalent problem with theta >= 0 (x -> -x maps the rule to (-pi_high, -pi_low))."""
        if self.theta >= 0:
            return self
        return ScaledProblem(-self.theta, self.horizon, -self.pi_high, -self.pi_low)


def nondimensionalize(params: OUParams, rule: TradingRuleRaw) -> ScaledProblem:
    scale = math.sqrt(params.kappa_raw) / params.sigma_raw
    return ScaledProblem(
        theta=scale * params.theta_raw,
        horizon=params.kappa_raw * rule.T_raw,
        pi_low=scale * rule.pi_low_raw,
        pi_high=scale * rule.pi_high_raw,
    )


def reflect_rule(theta: float, rule: tuple) -> tuple:
    """Map a rule (pi_low, pi_high, T) under x -> -x when theta < 0.

    The solver only handles theta >= 0; a rule found for -theta is reported
    for theta as (-pi_high, -pi_low, T). Identity for theta >= 0.
    """
    pi_low, pi_high, T = rule
    if theta >= 0:
        return (pi_low, pi_high, T)
    return (-pi_high, -pi_low, T)


@dataclass
class OpportunitySeries:
    """Per-opportunity observed prices and forecast targets."""

    prices: list
    targets: list

    def __post_init__(self):
        if len(self.prices) != len(self.targets):
            raise DomainError("one target per opportunity is required")
        self.prices = [np.asarray(p, dtype=float) for p in self.prices]
        self.targets = [float(t) for t in self.targets]

    def regression_arrays(self):
        """Stack X = E0 - P_{t-1} and Y = P_t - E0 over opportunities.

        The model is P_t - E0 = kappa (E0 - P_{t-1}) + sigma eps_t with E0 the
        forecast target. Opportunities may have different lengths.
        """
        xs, ys = [], []
        for p, target in zip(self.prices, self.targets):
            if len(p) < 2:
                continue
            xs.append(target - p[:-1])
            ys.append(p[1:] - target)
        if not xs:
            return np.zeros(0), np.zeros(0)
        return np.concatenate(xs), np.concatenate(ys)


@dataclass(frozen=True)
class CalibrationResult:
    kappa_hat: float
    sigma_hat: float
    residuals: np.ndarray


def calibrate(series: OpportunitySeries) -> CalibrationResult:
    """OLS estimates of the discrete recursion parameters.

    kappa = cov[Y, X]/cov[X, X] and sigma = sqrt(cov[xi, xi]), all with
    population normalization. kappa is per observation step.
    """
    X, Y = series.regression_arrays()
    if X.size < 2:
        raise InsufficientData("calibration needs at least two regression rows")
    xc = X - X.mean()
    cxx = np.mean(xc * xc)
    if cxx <= 1e-300 or cxx <= 1e-28 * max(np.mean(X * X), 1e-300):
        raise DegenerateRegressor("regressor has zero variance")
    kappa = np.mean(xc * (Y - Y.mean())) / cxx
    resid = Y - kappa * X
    sigma = math.sqrt(max(np.mean((resid - resid.mean()) ** 2), 0.0))
    return CalibrationResult(float(kappa), sigma, resid)
