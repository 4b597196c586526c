"""Optimal stop-loss/take-profit rules for Ornstein-Uhlenbeck driven trades.

The Sharpe ratio and expected duration of a finite-horizon trading rule are
computed with heat potentials and cross-checked against Monte Carlo and
against stationary closed forms.
"""
from .heat_potentials import SRResult, sharpe_and_duration
from .optimizer import OptimalRule, maximize_sr, maximize_sr_over_horizon
from .ou_model import ScaledProblem, horizon_of_upsilon, upsilon_of_horizon

__all__ = [
    "OptimalRule",
    "SRResult",
    "ScaledProblem",
    "horizon_of_upsilon",
    "maximize_sr",
    "maximize_sr_over_horizon",
    "sharpe_and_duration",
    "upsilon_of_horizon",
]

__version__ = "0.1.0"
