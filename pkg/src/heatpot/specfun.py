"""Dawson-type special functions, the Kummer function and helpers.

Notation used throughout the package::

    I(x) = int_0^x exp(z^2) dz            (int_exp_sq)
    D(x) = exp(-x^2) I(x)                 (dawson)
    E(x) = int_0^x D(z) dz                (dawson_integral)
    F(x) = sqrt(pi) N(sqrt(2) x) exp(x^2) (f_aux)
    G(x) = F(x) D(x) - E(x)               (g_script)
    J(x)                                  (j_script, normalized so J(0) = 0)

G and J are the building blocks of the moments of Ornstein-Uhlenbeck
passage times. All functions accept scalars or arrays.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, NoConvergence, PoleError, QuadratureFailure, RangeError

X_MAX = 6.0
J_MAX = 4.0
# below this point exp(-y^2) |G(y)| < 1e-16, so the tail of the J integral is dropped
J_TAIL = -X_MAX
SQRT_PI = math.sqrt(math.pi)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(40)
_GL_NODES_LO, _GL_WEIGHTS_LO = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True)
class SeriesPolicy:
    """Termination policy for power series."""

    rtol: float = 1e-14
    max_terms: int = 600

    def __post_init__(self):
        if not (0.0 < self.rtol <= 1e-6):
            raise DomainError(f"series tolerance must lie in (0, 1e-6], got {self.rtol}")
        if self.max_terms < 50:
            raise DomainError(f"max_terms must be >= 50, got {self.max_terms}")


DEFAULT_POLICY = SeriesPolicy()


def _as_array(x, limit=X_MAX):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise RangeError("argument must be finite")
    if arr.size and np.max(np.abs(arr)) > limit:
        raise RangeError(f"|x| must not exceed {limit}")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def int_exp_sq(x, policy: SeriesPolicy = DEFAULT_POLICY):
    """I(x) = int_0^x exp(z^2) dz by its Maclaurin series.

    All terms share the sign of x, so the series is free of cancellation.
    """
    x = _as_array(x)
    x2 = x * x
    power = x.copy()
    total = x.copy()
    for k in range(1, policy.max_terms):
        power = power * x2 / k
        term = power / (2 * k + 1)
        total = total + term
        if np.all(np.abs(term) <= policy.rtol * 1e-3 * np.abs(total)):
            break
    else:
        raise NoConvergence("series for I(x) did not converge")
    return _out(total, x)


def dawson(x):
    """Dawson's function D(x) = exp(-x^2) I(x)."""
    x = _as_array(x)
    return _out(np.exp(-x * x) * int_exp_sq(x), x)


def _panel_quad(fun, a, b, width=0.5, nodes=_GL_NODES, weights=_GL_WEIGHTS):
    # Gauss-Legendre on equal panels no wider than `width`, vectorized over b
    a = np.broadcast_to(np.asarray(a, dtype=float), np.shape(b)).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if b.size == 0:
        return np.zeros(0)
    m = max(1, int(math.ceil(np.max(np.abs(b - a)) / width)))
    frac = np.linspace(0.0, 1.0, m + 1)
    edges = a[:, None] + (b - a)[:, None] * frac[None, :]
    half = 0.5 * np.diff(edges, axis=1)
    mid = 0.5 * (edges[:, 1:] + edges[:, :-1])
    pts = mid[..., None] + half[..., None] * nodes
    return np.sum(half[..., None] * weights * fun(pts), axis=(1, 2))


def _checked_quad(fun, a, b, atol=1e-10, width=0.5):
    fine = _panel_quad(fun, a, b, width)
    coarse = _panel_quad(fun, a, b, width, _GL_NODES_LO, _GL_WEIGHTS_LO)
    err = np.abs(fine - coarse)
    if np.any(err > atol * np.maximum(1.0, np.abs(fine))):
        raise QuadratureFailure(f"quadrature error estimate {err.max():.3e} exceeds {atol}")
    return fine


_ANCHOR_STEP = 0.5
_anchor_cache: list = []


def _anchors():
    # E at multiples of 0.5 on [0, X_MAX], accumulated panel by panel
    if not _anchor_cache:
        grid = np.arange(0.0, X_MAX + _ANCHOR_STEP / 2, _ANCHOR_STEP)
        pieces = _checked_quad(dawson, grid[:-1], grid[1:], atol=1e-15)
        _anchor_cache.append(np.concatenate([[0.0], np.cumsum(pieces)]))
    return _anchor_cache[0]


def dawson_integral(x):
    """E(x) = int_0^x D(z) dz, an even function.

    Gauss-Legendre quadrature from the nearest tabulated anchor (spacing 0.5)
    so that large arrays of arguments stay cheap.
    """
    x = _as_array(x)
    ax = np.abs(x).ravel()
    idx = np.rint(ax / _ANCHOR_STEP).astype(int)
    start = idx * _ANCHOR_STEP
    res = _anchors()[idx] + _checked_quad(dawson, start, ax, atol=1e-13)
    return _out(res.reshape(x.shape), x)


def norm_cdf(x):
    """Standard normal distribution function."""
    x = np.asarray(x, dtype=float)
    return _out(special.ndtr(x), x)


def f_aux(x):
    """F(x) = sqrt(pi) N(sqrt(2) x) exp(x^2).

    Written as (sqrt(pi)/2) erfcx(-x), which stays accurate for x < 0 where
    the literal product underflows times overflows.
    """
    x = _as_array(x)
    return _out(0.5 * SQRT_PI * special.erfcx(-x), x)


def g_script(x):
    """G(x) = sqrt(pi) N(sqrt(2) x) I(x) - E(x), by the closed form."""
    x = _as_array(x)
    return _out(f_aux(x) * dawson(x) - dawson_integral(x), x)


def g_odd(x):
    """Odd part of G, equal to (sqrt(pi)/2) I(x)."""
    return 0.5 * SQRT_PI * int_exp_sq(x)


def g_even(x):
    """Even part of G, sqrt(pi) (N(sqrt(2) x) - 1/2) I(x) - E(x)."""
    x = _as_array(x)
    return _out(g_script(x) - g_odd(x), x)


def _half_gamma_series(x, coef_update, c1, c2, policy):
    # sum_n t_n with t_n = Gamma(n/2)/n! (2x)^n c_n, odd and even n advanced
    # separately by t_{n+2} = t_n (n/2)(2x)^2/((n+1)(n+2))
    x = np.asarray(x, dtype=float)
    y = 2.0 * x
    y2 = y * y
    base = [SQRT_PI * y, 0.5 * y2]  # Gamma(n/2)/n! (2x)^n for n = 1, 2
    coef = [c1, c2]
    total = base[0] * coef[0] + base[1] * coef[1]
    n = 1
    for _ in range(policy.max_terms // 2):
        new_total = total
        for parity in (0, 1):
            m = n + parity
            base[parity] = base[parity] * (0.5 * m) * y2 / ((m + 1) * (m + 2))
            coef[parity] = coef_update(coef[parity], m)
            new_total = new_total + base[parity] * coef[parity]
        n += 2
        # terms decay once n exceeds (2x)^2/2; stop when they are negligible
        small = np.abs(new_total - total) <= policy.rtol * 1e-3 * np.maximum(np.abs(new_total), 1e-300)
        total = new_total
        if n > 2 and np.all(small | (y == 0)):
            return total
    raise NoConvergence("half-gamma series did not converge")


def g_series(x, policy: SeriesPolicy = DEFAULT_POLICY):
    """G(x) = 1/4 sum_{n>=1} Gamma(n/2)/n! (2x)^n."""
    x = _as_array(x)
    s = _half_gamma_series(x, lambda c, m: c, 1.0, 1.0, policy)
    return _out(0.25 * s, x)


def j_series(x, policy: SeriesPolicy = DEFAULT_POLICY):
    """J(x) = 1/16 sum_{n>=1} Gamma(n/2) (psi(n/2) + gamma)/n! (2x)^n.

    psi(n/2) + gamma is advanced with psi(z + 1) = psi(z) + 1/z, starting
    from psi(1/2) + gamma = -2 ln 2 and psi(1) + gamma = 0.
    """
    x = _as_array(x, J_MAX)
    s = _half_gamma_series(x, lambda c, m: c + 2.0 / m, -2.0 * math.log(2.0), 0.0, policy)
    return _out(s / 16.0, x)


def j_script(x):
    """J(x) by quadrature of its defining integral, anchored so J(0) = 0.

    The defining integral int_{-inf}^x exp(-y^2)(I(x) - I(y)) G(y) dy splits
    into I(x) A(x) - B(x). A converges at -inf; B does not, but only its
    difference from B(0) enters once the x = 0 value is subtracted, so
    J(x) = I(x) A(x) - int_0^x D(y) G(y) dy.
    """
    x = _as_array(x, J_MAX)
    flat = x.ravel()
    a = _checked_quad(lambda y: np.exp(-y * y) * g_script(y), J_TAIL, flat)
    b = _checked_quad(lambda y: dawson(y) * g_script(y), 0.0, flat)
    res = int_exp_sq(flat) * a - b
    return _out(res.reshape(x.shape), x)


def j_odd(x):
    """Odd part of J."""
    x = _as_array(x, J_MAX)
    return _out(0.5 * (j_script(x) - j_script(-x)), x)


def j_even(x):
    """Even part of J."""
    x = _as_array(x, J_MAX)
    return _out(0.5 * (j_script(x) + j_script(-x)), x)


def kummer_m(a, b, z, policy: SeriesPolicy = DEFAULT_POLICY):
    """Kummer's confluent hypergeometric function M(a, b, z).

    Ascending series for z >= 0; for z < 0 the Kummer transformation
    M(a, b, z) = exp(z) M(b - a, b, -z) keeps all terms of one sign when
    b > a > 0.
    """
    if b <= 0 and float(b).is_integer():
        raise PoleError(f"M(a, b, z) has a pole at b = {b}")
    z = np.asarray(z, dtype=float)
    if z.size and np.max(np.abs(z)) > 40.0:
        raise RangeError("|z| must not exceed 40")
    neg = z < 0
    zz = np.abs(z)
    aa = np.where(neg, b - a, a)
    term = np.ones_like(zz)
    total = np.ones_like(zz)
    for n in range(policy.max_terms):
        term = term * (aa + n) / (b + n) * zz / (n + 1)
        total = total + term
        if np.all(np.abs(term) <= policy.rtol * 1e-3 * np.abs(total)) and n > 2:
            break
    else:
        raise NoConvergence("Kummer series did not converge")
    total = np.where(neg, np.exp(z) * total, total)
    return _out(total, z)


def kummer_m_dz(a, b, z, policy: SeriesPolicy = DEFAULT_POLICY):
    """dM/dz = (a/b) M(a + 1, b + 1, z)."""
    return a / b * kummer_m(a + 1, b + 1, z, policy)


def digamma(x):
    """Digamma function psi(x) for x > 0."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("digamma is only supported for positive arguments")
    return _out(special.digamma(x), x)


EULER_GAMMA = -float(special.digamma(1.0))
