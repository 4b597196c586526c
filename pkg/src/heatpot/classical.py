"""Stationary and perpetual benchmarks for mean-reverting trading rules.

All quantities refer to the scaled process dx = (theta - x) dt + dW:

* exit-time moments from a corridor (duration_mean, duration_variance);
* passage-time moments and the asymptotic renewal Sharpe ratio for the
  round trip l -> u -> l (renewal_stats, bertram_sr, theta = 0);
* perpetual value functions with an optimal take-profit level under
  discounting, under an opportunity cost and with double-exponential jumps;
* the no-trade band under linear transaction costs (fredholm_transaction).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import ndtr

from .errors import (
    DegenerateRoundTrip, DomainError, IntegratorFailure, LinearSolveFailure, NoConvergence,
    QuadratureFailure, SingularDelta,
)
from .specfun import SQRT_PI, f_aux, g_script, int_exp_sq, j_script, kummer_m

# ---------------------------------------------------------------------------
# exit-time moments


@dataclass(frozen=True)
class DurationMoments:
    mean: float
    second_moment: float

    @property
    def variance(self) -> float:
        return self.second_moment - self.mean**2


def _check_corridor(pi_low, pi_high):
    if not pi_low < 0 < pi_high:
        raise DomainError("the start point 0 must lie strictly inside (pi_low, pi_high)")


def exit_time_mean(x, theta, pi_low, pi_high):
    """Expected exit time g1(x) from (pi_low, pi_high) started at x."""
    il, ih = int_exp_sq(pi_low - theta), int_exp_sq(pi_high - theta)
    gl, gh = g_script(pi_low - theta), g_script(pi_high - theta)
    xs = np.asarray(x, dtype=float) - theta
    val = 2.0 * ((gh - gl) / (ih - il) * (int_exp_sq(xs) - il) - (g_script(xs) - gl))
    return float(val) if np.ndim(x) == 0 else val


def duration_mean(theta, pi_low, pi_high) -> float:
    _check_corridor(pi_low, pi_high)
    return exit_time_mean(0.0, theta, pi_low, pi_high)


def green_function(x, y, theta, pi_low, pi_high):
    """Green's function of (theta - x) g' + g''/2 with zero boundary values.

    Two-branch form weighted by exp(-(y - theta)^2); it is nonpositive, and
    g(x) = -int G(x, y) h(y) dy solves (theta - x) g' + g''/2 = -h.
    """
    il, ih = int_exp_sq(pi_low - theta), int_exp_sq(pi_high - theta)
    ix, iy = int_exp_sq(x - theta), int_exp_sq(y - theta)
    w = 2.0 * math.exp(-((y - theta) ** 2)) / (ih - il)
    if y <= x:
        return w * (iy - il) * (ix - ih)
    return w * (iy - ih) * (ix - il)


def duration_variance(theta, pi_low, pi_high, tol=1e-9) -> DurationMoments:
    """Mean and second moment of the exit time from (pi_low, pi_high) started at 0.

    The second moment solves (theta - x) g' + g''/2 = -2 g1 with zero boundary
    values, i.e. g20(0) = -2 int G(0, y) g1(y) dy over the corridor.
    """
    _check_corridor(pi_low, pi_high)

    def integrand(y):
        return -2.0 * green_function(0.0, y, theta, pi_low, pi_high) * exit_time_mean(y, theta, pi_low, pi_high)

    total = 0.0
    for a, b in ((pi_low, 0.0), (0.0, pi_high)):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, err = integrate.quad(integrand, a, b, epsabs=tol * 1e-2, epsrel=tol, limit=200)
            except integrate.IntegrationWarning as exc:
                raise QuadratureFailure(str(exc)) from None
        if err > tol * max(1.0, abs(val)):
            raise QuadratureFailure(f"quadrature error {err:.2e} exceeds {tol}")
        total += val
    return DurationMoments(duration_mean(theta, pi_low, pi_high), total)


# ---------------------------------------------------------------------------
# renewal (round-trip) statistics, theta = 0


def _hit_moment_terms(x):
    g = g_script(x)
    return g, g * g - 2.0 * j_script(x)


@dataclass(frozen=True)
class RenewalStats:
    eps_up: float
    eps_down: float
    var_up: float
    var_down: float

    @property
    def eps_round(self) -> float:
        return self.eps_up + self.eps_down

    @property
    def var_round(self) -> float:
        return self.var_up + self.var_down


def renewal_stats(l, u) -> RenewalStats:
    """Mean and variance of the passage times l -> u and u -> l (theta = 0)."""
    if not l <= u:
        raise DomainError("renewal statistics require l <= u")
    (g_u, h_u), (g_l, h_l) = _hit_moment_terms(u), _hit_moment_terms(l)
    (g_mu, h_mu), (g_ml, h_ml) = _hit_moment_terms(-u), _hit_moment_terms(-l)
    return RenewalStats(
        eps_up=2.0 * (g_u - g_l),
        eps_down=2.0 * (g_ml - g_mu),
        var_up=4.0 * (h_u - h_l),
        var_down=4.0 * (h_ml - h_mu),
    )


@dataclass(frozen=True)
class BertramResult:
    r: float
    sr: float
    c: float
    r_f: float
    stats: RenewalStats


def bertram_sr(l, u, c=0.0, r_f=0.0) -> BertramResult:
    """Asymptotic return per unit time and Sharpe ratio of repeated round trips."""
    if not l < u:
        raise DomainError("require l < u")
    stats = renewal_stats(l, u)
    spread = u - l - c
    if spread == 0.0:
        raise DegenerateRoundTrip("fees absorb the whole spread: return is zero and SR undefined")
    r = spread / stats.eps_round
    sr = math.sqrt(stats.eps_round / stats.var_round) * (spread - r_f) / spread
    return BertramResult(r, sr, c, r_f, stats)


# ---------------------------------------------------------------------------
# perpetual value functions


@dataclass
class ValueFunctionSolution:
    u_star: float
    a0: float
    a1: float
    lam: float
    l: float
    variant: str
    x: np.ndarray
    value: np.ndarray
    residuals: dict
    extras: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(abs(v) for v in self.residuals.values())


def _newton(fun, x0, h=1e-6, tol=1e-13, maxiter=100, lower=-math.inf):
    x = x0
    for _ in range(maxiter):
        fx = fun(x)
        d = (fun(x + h) - fun(x - h)) / (2.0 * h)
        if not (math.isfinite(fx) and math.isfinite(d)) or d == 0.0:
            break
        step = fx / d
        x_new = x - step
        if x_new <= lower:
            x_new = 0.5 * (x + lower)
        if abs(x_new - x) < tol * max(1.0, abs(x)):
            return x_new
        x = x_new
    raise NoConvergence("Newton iteration did not converge")


def _bisect_fallback(fun, a, b, n=400):
    grid = np.linspace(a, b, n + 1)[1:]
    vals = [fun(x) for x in grid]
    for i in range(n - 1):
        if np.isfinite(vals[i]) and np.isfinite(vals[i + 1]) and np.sign(vals[i]) != np.sign(vals[i + 1]):
            return optimize.bisect(fun, grid[i], grid[i + 1], xtol=1e-14)
    raise NoConvergence("no sign change of the optimality residual found")


def _solve_boundary(fun, u0, l, upper=4.0):
    try:
        u = _newton(fun, u0, lower=l)
        if l < u <= upper:
            return u
    except NoConvergence:
        pass
    return _bisect_fallback(fun, max(l, 0.0), upper)


def _discount_basis(lam, x):
    z = np.asarray(x, dtype=float) ** 2
    m0 = kummer_m(lam / 4.0, 0.5, z)
    m1 = np.asarray(x) * kummer_m((lam + 2.0) / 4.0, 1.5, z)
    # derivatives of M(lam/4, 1/2, x^2) and x M((lam+2)/4, 3/2, x^2)
    dm0 = lam * np.asarray(x) * kummer_m((lam + 4.0) / 4.0, 1.5, z)
    dm1 = kummer_m((lam + 2.0) / 4.0, 1.5, z) + (lam + 2.0) / 3.0 * z * kummer_m((lam + 6.0) / 4.0, 2.5, z)
    return m0, m1, dm0, dm1


def _discount_coefficients(l, u, lam):
    c00, c01, _, _ = _discount_basis(lam, l)
    c10, c11, _, _ = _discount_basis(lam, u)
    det = c00 * c11 - c01 * c10
    return (c11 * l - c01 * u) / det, (-c10 * l + c00 * u) / det, det


def _discount_residual(u, l, lam):
    a0, a1, _ = _discount_coefficients(l, u, lam)
    _, _, d0, d1 = _discount_basis(lam, u)
    return a0 * d0 + a1 * d1 - 1.0


def perpetual_value_discount(l, lam, u0=1.0, samples=201) -> ValueFunctionSolution:
    """Value V'' - 2x V' - lam V = 0 on [l, u] with V(l) = l, V(u) = u, V'(u) = 1.

    V = a0 M(lam/4, 1/2, x^2) + a1 x M((lam+2)/4, 3/2, x^2). The optimal u
    makes V'(u) = 1 once a0, a1 are fixed by the two value conditions; the
    residual is the optimality condition divided by the coefficient determinant.
    """
    if not lam > 0:
        raise DomainError("discount rate must be positive")
    u = _solve_boundary(lambda uu: _discount_residual(uu, l, lam), u0, l)
    a0, a1, _ = _discount_coefficients(l, u, lam)
    x = np.linspace(l, u, samples)
    m0, m1, _, _ = _discount_basis(lam, x)
    value = a0 * m0 + a1 * m1
    b0, b1, d0, d1 = _discount_basis(lam, np.array([l, u]))
    res = {
        "value_low": float(a0 * b0[0] + a1 * b1[0] - l),
        "value_high": float(a0 * b0[1] + a1 * b1[1] - u),
        "slope_high": float(a0 * d0[1] + a1 * d1[1] - 1.0),
    }
    return ValueFunctionSolution(u, float(a0), float(a1), lam, l, "discount", x, value, res)


def _opportunity_coefficients(l, u, lam):
    il, iu = int_exp_sq(l), int_exp_sq(u)
    pl, pu = l - lam * g_script(l), u - lam * g_script(u)
    return (iu * pl - il * pu) / (iu - il), (pu - pl) / (iu - il)


def _opportunity_residual(u, l, lam):
    _, a1 = _opportunity_coefficients(l, u, lam)
    return math.exp(u * u) * a1 - (1.0 - lam * f_aux(u))


def opportunity_value(x, l, u, lam):
    """V(x) = a0 + a1 I(x) + lam G(x) for the opportunity-cost problem."""
    a0, a1 = _opportunity_coefficients(l, u, lam)
    return a0 + a1 * int_exp_sq(x) + lam * g_script(x)


def perpetual_value_opportunity(l, lam, u0=1.0, samples=201) -> ValueFunctionSolution:
    """Value V'' - 2x V' = lam on [l, u] with V(l) = l, V(u) = u, V'(u) = 1."""
    if not l < 0:
        raise DomainError("stop-loss level must be negative")
    if not lam >= 0:
        raise DomainError("opportunity cost must be nonnegative")
    u = _solve_boundary(lambda uu: _opportunity_residual(uu, l, lam), u0, l)
    a0, a1 = _opportunity_coefficients(l, u, lam)
    x = np.linspace(l, u, samples)
    value = a0 + a1 * int_exp_sq(x) + lam * g_script(x)
    res = {
        "value_low": float(a0 + a1 * int_exp_sq(l) + lam * g_script(l) - l),
        "value_high": float(a0 + a1 * int_exp_sq(u) + lam * g_script(u) - u),
        "slope_high": float(a1 * math.exp(u * u) + lam * f_aux(u) - 1.0),
    }
    return ValueFunctionSolution(u, float(a0), float(a1), lam, l, "opportunity", x, value, res)


# ---------------------------------------------------------------------------
# jump-diffusion value function by shooting


def _jump_rhs(x, y, lam, omega, kappa, forced):
    v, w, ip, im = y
    src = lam + (2.0 + omega) * x if forced else 0.0
    return [w, 2.0 * x * w - omega * (ip + im - v) + src, v - kappa * ip, kappa * im - v]


def _integrate(y0, l, u, args, dense=False):
    sol = integrate.solve_ivp(_jump_rhs, (l, u), y0, args=args, method="DOP853",
                              rtol=1e-12, atol=1e-12, dense_output=dense)
    if not sol.success:
        raise IntegratorFailure(sol.message)
    return sol


def jump_shoot(u, l, lam, omega, kappa, dense=False):
    """Shoot from x = l with (v, w, I+, I-) = (0, c, 0, d) so that v(u) = I-(u) = 0.

    The system is linear, so c and d follow from one forced and two
    homogeneous integrations plus a 2x2 solve. Returns (state at u, c, d, sols).
    """
    forced = _integrate([0.0, 0.0, 0.0, 0.0], l, u, (lam, omega, kappa, True), dense)
    hom_c = _integrate([0.0, 1.0, 0.0, 0.0], l, u, (lam, omega, kappa, False), dense)
    hom_d = _integrate([0.0, 0.0, 0.0, 1.0], l, u, (lam, omega, kappa, False), dense)
    yp, yc, yd = (s.y[:, -1] for s in (forced, hom_c, hom_d))
    mat = np.array([[yc[0], yd[0]], [yc[3], yd[3]]])
    if abs(np.linalg.det(mat)) < 1e-300 or not np.all(np.isfinite(mat)):
        raise LinearSolveFailure("shooting matrix is singular")
    c, d = np.linalg.solve(mat, -np.array([yp[0], yp[3]]))
    return yp + c * yc + d * yd, float(c), float(d), (forced, hom_c, hom_d)


def jump_value_shooting(l, lam, omega, kappa_jump, u0=None, samples=201) -> ValueFunctionSolution:
    """Value function with double-exponential jumps, in shifted form v = V - x.

    v' = w, w' = 2x w - omega (I+ + I- - v) + lam + (2 + omega) x,
    I+' = v - kappa I+, I-' = kappa I- - v, with v(l) = I+(l) = 0 and
    v(u) = w(u) = I-(u) = 0 at the optimal u. The outer Newton iteration on
    u starts from the jump-free optimum unless u0 is given.
    """
    if not l < 0:
        raise DomainError("stop-loss level must be negative")
    if not omega >= 0 or not kappa_jump > 0:
        raise DomainError("require omega >= 0 and kappa > 0")
    if u0 is None:
        u0 = perpetual_value_opportunity(l, lam).u_star

    def slope(u):
        return jump_shoot(u, l, lam, omega, kappa_jump)[0][1]

    u = _newton(slope, u0, h=1e-6, tol=1e-12, maxiter=50, lower=l)
    state, c, d, sols = jump_shoot(u, l, lam, omega, kappa_jump, dense=True)
    x = np.linspace(l, u, samples)
    combo = sols[0].sol(x) + c * sols[1].sol(x) + d * sols[2].sol(x)
    res = {"value_low": 0.0, "value_high": float(state[0]), "slope_high": float(state[1]),
           "jump_integral_high": float(state[3])}
    extras = {"c": c, "d": d, "omega": omega, "kappa": kappa_jump, "v": combo[0]}
    return ValueFunctionSolution(u, math.nan, math.nan, lam, l, "jump", x, combo[0] + x, res, extras)


# ---------------------------------------------------------------------------
# transaction costs: Fredholm equation for the no-trade band


@dataclass
class FredholmSolution:
    q_star: float
    nodes: np.ndarray
    g: np.ndarray
    gamma: float
    delta: float
    theta_ratio: float  # exp(Delta)
    root_class: str
    matching_residual: float
    oddness_residual: float
    iterations: int


def _fredholm_parts(q, gamma, delta, m):
    try:
        big = math.exp(delta)
        s = math.expm1(2.0 * delta)  # Theta^2 - 1
    except OverflowError:
        raise SingularDelta("Theta = exp(Delta) overflows") from None
    if not s > 0 or not math.isfinite(s):
        raise SingularDelta("Theta^2 - 1 is not a positive finite number")
    t, w = np.polynomial.legendre.leggauss(m)
    y, w = q * t, q * w

    def kern(x, yy):
        return big * np.exp(-((big * yy - x) ** 2) / s) / math.sqrt(math.pi * s)

    def forcing(x):
        return x + gamma * (ndtr(-math.sqrt(2.0) * (big * q - x) / math.sqrt(s))
                            - ndtr(-math.sqrt(2.0) * (big * q + x) / math.sqrt(s)))

    return y, w, kern, forcing


def fredholm_solve(q, gamma, delta, m=201):
    """Nystrom solution of g(x) - int_{-q}^{q} K(x, y) g(y) dy = f(x).

    Returns the nodes, g at the nodes and g(q) by Nystrom interpolation.
    """
    y, w, kern, forcing = _fredholm_parts(q, gamma, delta, m)
    mat = np.eye(m) - kern(y[:, None], y[None, :]) * w[None, :]
    try:
        g = np.linalg.solve(mat, forcing(y))
    except np.linalg.LinAlgError as exc:
        raise LinearSolveFailure(str(exc)) from None
    if not np.all(np.isfinite(g)):
        raise LinearSolveFailure("non-finite Nystrom solution")
    g_q = float(forcing(q) + np.dot(kern(q, y) * w, g))
    return y, g, g_q


def _root_class(g):
    changes = int(np.sum(np.diff(np.sign(g)) != 0))
    return {1: "single-root", 3: "triple-root"}.get(changes, f"{changes}-sign-changes")


def fredholm_transaction(gamma, delta, q_init, m=201, tol=1e-9, maxiter=100) -> FredholmSolution:
    """Half-width q of the no-trade band: solve the Fredholm equation with g(q) = Gamma.

    Secant iteration on q from q_init.
    """
    if not gamma > 0 or not delta > 0 or not q_init > 0:
        raise DomainError("require Gamma > 0, Delta > 0 and q_init > 0")

    def resid(q):
        return fredholm_solve(q, gamma, delta, m)[2] - gamma

    q0, q1 = q_init, q_init * 1.01
    r0, r1 = resid(q0), resid(q1)
    for it in range(1, maxiter + 1):
        if abs(r1) < tol:
            break
        if r1 == r0:
            raise NoConvergence("secant iteration stalled")
        q2 = q1 - r1 * (q1 - q0) / (r1 - r0)
        if q2 <= 0:
            q2 = 0.5 * q1
        q0, r0, q1, r1 = q1, r1, q2, resid(q2)
    else:
        raise NoConvergence("matching condition not met")
    y, g, g_q = fredholm_solve(q1, gamma, delta, m)
    return FredholmSolution(q1, y, g, gamma, delta, math.exp(delta), _root_class(g), g_q - gamma,
                            float(np.max(np.abs(g + g[::-1]))), it)


def critical_boundary_curve(gamma, deltas, q_init=None, m=201):
    """Continuation of q*(Delta) along ascending Delta values, single-root branch."""
    deltas = np.asarray(deltas, dtype=float)
    if deltas.size == 0 or np.any(deltas <= 0) or np.any(np.diff(deltas) <= 0):
        raise DomainError("Delta values must be positive and ascending")
    q = gamma if q_init is None else q_init
    out = []
    for d in deltas:
        sol = fredholm_transaction(gamma, d, q, m)
        q = sol.q_star
        out.append((float(d), q, sol.root_class))
    return out
