"""Exception hierarchy shared by all modules.

Each error carries a process exit code so the command-line front end can
map failures onto its exit-code contract without inspecting messages.
"""


class HeatpotError(Exception):
    exit_code = 4


class InputError(HeatpotError):
    exit_code = 2


class DomainError(InputError, ValueError):
    pass


class RangeError(DomainError):
    pass


class BadGridSpec(DomainError):
    pass


class EmptyGrid(DomainError):
    pass


class ConfigError(InputError, ValueError):
    pass


class HorizonOverflow(DomainError):
    pass


class SingularDelta(DomainError):
    pass


class PoleError(DomainError):
    pass


class InsufficientData(InputError):
    pass


class DegenerateRegressor(HeatpotError):
    exit_code = 3


class SolverError(HeatpotError):
    exit_code = 4


class SingularBoundary(SolverError):
    pass


class PivotBreakdown(SolverError):
    pass


class NonpositiveVariance(SolverError):
    pass


class QuadratureFailure(SolverError):
    pass


class NoConvergence(SolverError):
    pass


class DegenerateRoundTrip(SolverError):
    pass


class IntegratorFailure(SolverError):
    pass


class LinearSolveFailure(SolverError):
    pass


class MonteCarloError(HeatpotError):
    exit_code = 5
