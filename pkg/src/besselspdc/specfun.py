"""Special functions and quadrature primitives.

Everything here works on scalars or numpy arrays of arguments with a single
integer order. Accuracy targets are ~1e-13 relative for the Bessel functions
away from zeros and whatever ``tol`` the caller asks for in the quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

MAX_ORDER = 200

_RESCALE_AT = 1e250
_RESCALE_BY = 1e-250


class DomainError(ValueError):
    """Argument outside the domain of a special function."""


class ConvergenceError(RuntimeError):
    """Adaptive quadrature exhausted its panel budget."""


def _check_order(n: int) -> int:
    n = int(n)
    if abs(n) > MAX_ORDER:
        raise DomainError(f"order {n} exceeds the supported maximum {MAX_ORDER}")
    return n


def _as_array(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    return np.atleast_1d(arr), arr.ndim == 0


# --------------------------------------------------------------------------
# Bessel J
# --------------------------------------------------------------------------


def _miller_start(n: int, xmax: float) -> int:
    top = max(n, xmax)
    m = int(top + 20 + 16 * (xmax / 2.0) ** (1.0 / 3.0) + math.sqrt(40.0 * top))
    return m + (m % 2)


def _jn_miller(n: int, x: np.ndarray) -> np.ndarray:
    """J_n(x) for n >= 0 and x > 0 by normalized backward recurrence."""
    m = _miller_start(n, float(x.max()))
    two_over_x = 2.0 / x
    j_next = np.zeros_like(x)
    j_cur = np.full_like(x, 1e-30)
    norm = np.zeros_like(x)
    result = np.zeros_like(x)
    if m == n:
        result = j_cur.copy()
    for k in range(m, 0, -1):
        # j_cur holds J_k, j_next holds J_{k+1}
        if k % 2 == 0:
            norm += 2.0 * j_cur
        j_prev = k * two_over_x * j_cur - j_next
        j_next, j_cur = j_cur, j_prev
        if k - 1 == n:
            result = j_cur.copy()
        big = np.abs(j_cur) > _RESCALE_AT
        if big.any():
            j_cur = np.where(big, j_cur * _RESCALE_BY, j_cur)
            j_next = np.where(big, j_next * _RESCALE_BY, j_next)
            norm = np.where(big, norm * _RESCALE_BY, norm)
            result = np.where(big, result * _RESCALE_BY, result)
    norm += j_cur
    return result / norm


def _jn_series(n: int, x: np.ndarray) -> np.ndarray:
    """Power series for 0 < x <= 1; successive terms shrink by at least 4."""
    q = -(x * x) / 4.0
    term = np.ones_like(x)
    total = np.ones_like(x)
    for k in range(1, 40):
        term = term * q / (k * (k + n))
        total += term
        if np.all(np.abs(term) < 1e-17 * np.abs(total)):
            break
    if n <= 170:
        lead = (x / 2.0) ** n / math.gamma(n + 1.0)
    else:
        # n! overflows; work in logs
        lead = np.exp(n * np.log(x / 2.0) - math.lgamma(n + 1.0))
    return lead * total


def _hankel_pq(nu: float, x: np.ndarray, nterms: int = 40) -> tuple[np.ndarray, np.ndarray]:
    mu = 4.0 * nu * nu
    p = np.ones_like(x)
    q = np.zeros_like(x)
    term = np.ones_like(x)
    for k in range(1, nterms):
        term = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if k % 2 == 1:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += -term if (k // 2) % 2 == 1 else term
        if np.all(np.abs(term) < 1e-17):
            break
    return p, q


def _jn_asymptotic(n: int, x: np.ndarray) -> np.ndarray:
    p, q = _hankel_pq(n, x)
    chi = x - (0.5 * n + 0.25) * math.pi
    return np.sqrt(2.0 / (math.pi * x)) * (p * np.cos(chi) - q * np.sin(chi))


def bessel_j(n: int, x):
    """Bessel function of the first kind J_n(x) for integer order.

    Uses the power series for ``|x| <= 1``, Miller's backward recurrence
    normalized with ``J_0 + 2*sum(J_2k) = 1`` above that, and the Hankel
    asymptotic series once ``x`` exceeds both 1000 and ``2 n**2``.
    """
    n = _check_order(n)
    arr, scalar = _as_array(x)
    if not np.all(np.isfinite(arr)):
        raise DomainError("bessel_j requires finite arguments")
    order = abs(n)
    sign = np.where((arr < 0) & (order % 2 == 1), -1.0, 1.0)
    if n < 0 and order % 2 == 1:
        sign = -sign
    ax = np.abs(arr)
    out = np.zeros_like(ax)
    out[ax == 0] = 1.0 if order == 0 else 0.0
    asym = ax > max(1000.0, 2.0 * order * order)
    if asym.any():
        out[asym] = _jn_asymptotic(order, ax[asym])
    small = (ax > 0) & (ax <= 1.0)
    if small.any():
        out[small] = _jn_series(order, ax[small])
    mid = (ax > 1.0) & ~asym
    if mid.any():
        out[mid] = _jn_miller(order, ax[mid])
    out *= sign
    return float(out[0]) if scalar else out.reshape(np.shape(x))


# --------------------------------------------------------------------------
# Scaled modified Bessel I
# --------------------------------------------------------------------------


def _log_i0_scaled(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = x <= 25.0
    if small.any():
        xs = x[small]
        q = xs * xs / 4.0
        term = np.ones_like(xs)
        total = np.ones_like(xs)
        for k in range(1, 200):
            term = term * q / (k * k)
            total += term
            if np.all(term < 1e-17 * total):
                break
        out[small] = np.log(total) - xs
    large = ~small
    if large.any():
        xl = x[large]
        term = np.ones_like(xl)
        total = np.ones_like(xl)
        for k in range(1, 60):
            term = term * (2 * k - 1) ** 2 / (8.0 * k * xl)
            total += term
            if np.all(term < 1e-17 * total):
                break
        out[large] = np.log(total) - 0.5 * np.log(2.0 * math.pi * xl)
    return out


def log_bessel_i_scaled(n: int, x):
    """log(e^{-x} I_n(x)) for x >= 0; ``-inf`` where the value is exactly zero.

    The order is reached by multiplying ratios ``I_k/I_{k-1}`` obtained from
    the backward ratio recurrence, so nothing overflows or underflows before
    the logarithm is taken.
    """
    n = abs(_check_order(n))
    arr, scalar = _as_array(x)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError("bessel_i_scaled requires finite x >= 0")
    out = np.full_like(arr, -np.inf)
    zero = arr == 0
    if n == 0:
        out[zero] = 0.0
    pos = ~zero
    if pos.any():
        xp = arr[pos]
        logv = _log_i0_scaled(xp)
        if n > 0:
            top = n + int(math.sqrt(40.0 * float(xp.max()))) + 30
            ratio = np.zeros_like(xp)
            log_sum = np.zeros_like(xp)
            two_over_x = 2.0 / xp
            for k in range(top, 0, -1):
                ratio = 1.0 / (k * two_over_x + ratio)
                if k <= n:
                    log_sum += np.log(ratio)
            logv = logv + log_sum
        out[pos] = logv
    return float(out[0]) if scalar else out.reshape(np.shape(x))


def log_bessel_i_scaled_orders(n_max: int, x: float) -> np.ndarray:
    """log(e^{-x} I_n(x)) for n = 0..n_max from a single ratio recurrence."""
    n_max = _check_order(n_max)
    if n_max < 0:
        raise DomainError("n_max must be non-negative")
    x = float(x)
    if not math.isfinite(x) or x < 0:
        raise DomainError("bessel_i_scaled requires finite x >= 0")
    out = np.full(n_max + 1, -np.inf)
    if x == 0:
        out[0] = 0.0
        return out
    top = n_max + int(math.sqrt(40.0 * x)) + 30
    ratios = np.empty(n_max + 1)
    ratio = 0.0
    for k in range(top, 0, -1):
        ratio = 1.0 / (2.0 * k / x + ratio)
        if k <= n_max:
            ratios[k] = ratio
    ratios[0] = 1.0
    return float(_log_i0_scaled(np.array([x]))[0]) + np.cumsum(np.log(ratios))


def bessel_i_scaled(n: int, x):
    """e^{-x} I_n(x), symmetric in the sign of ``n``."""
    return np.exp(log_bessel_i_scaled(n, x))


def sinc_normalized(u):
    """sin(pi u)/(pi u) with the value 1 at u = 0."""
    arr, scalar = _as_array(u)
    out = np.ones_like(arr)
    nz = arr != 0
    pu = math.pi * arr[nz]
    out[nz] = np.sin(pu) / pu
    return float(out[0]) if scalar else out.reshape(np.shape(u))


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    def integrate(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        return float(np.sum(self.weights * f(self.nodes)))

    def mapped(self, a: float, b: float) -> "QuadratureRule":
        a0, b0 = self.interval
        scale = (b - a) / (b0 - a0)
        return QuadratureRule(a + (self.nodes - a0) * scale, self.weights * scale, (a, b))


@lru_cache(maxsize=None)
def _legendre_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    i = np.arange(1, n + 1)
    x = np.cos(math.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for k in range(2, n + 1):
            p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    p0 = np.ones_like(x)
    p1 = x.copy()
    for k in range(2, n + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def gauss_legendre(n: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """n-point Gauss-Legendre rule on [a, b], exact for degree 2n - 1."""
    if n < 1:
        raise ValueError("need at least one node")
    x, w = _legendre_nodes(int(n))
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(x, w, (-1.0, 1.0)).mapped(a, b)


PANEL_POINTS = 32
MAX_PANELS = 20000


def adaptive_gauss_legendre(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-12,
    initial_panels: int = 8,
    max_panels: int = MAX_PANELS,
    breakpoints=(),
    abs_tol: float = 0.0,
) -> tuple[float, float]:
    """Adaptive panel quadrature of a vectorized integrand.

    Each panel is integrated with a 32-point rule on the whole panel and on
    its two halves; the difference is the panel error estimate. Panels whose
    share of the global budget ``tol * |I|`` is exceeded are bisected. All
    pending panels are evaluated in one call to ``f``. ``abs_tol`` adds an
    absolute floor to the budget for integrals that may vanish.

    Returns ``(value, error_estimate)``. The estimate includes a roundoff
    floor proportional to the integral of ``|f|``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not b > a:
        if b == a:
            return 0.0, 0.0
        raise ValueError("need b > a")
    x, w = _legendre_nodes(PANEL_POINTS)
    edges = sorted({a, b, *[float(p) for p in breakpoints if a < p < b]})
    panels = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = max(1, int(round(initial_panels * (hi - lo) / (b - a))))
        cuts = np.linspace(lo, hi, m + 1)
        panels.extend(zip(cuts[:-1], cuts[1:]))
    panels = np.array(panels, dtype=float)
    length = b - a
    done_value = 0.0
    done_error = 0.0
    done_abs = 0.0
    while len(panels):
        if len(panels) > max_panels:
            raise ConvergenceError(f"adaptive quadrature exceeded {max_panels} panels")
        lo = panels[:, 0:1]
        hi = panels[:, 1:2]
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        quarter = 0.5 * half
        pts = np.concatenate(
            [mid + half * x, 0.5 * (lo + mid) + quarter * x, 0.5 * (mid + hi) + quarter * x], axis=1
        )
        vals = np.asarray(f(pts.ravel()), dtype=float).reshape(pts.shape)
        k = PANEL_POINTS
        whole = half[:, 0] * (vals[:, :k] @ w)
        split = quarter[:, 0] * (vals[:, k : 2 * k] @ w + vals[:, 2 * k :] @ w)
        absint = quarter[:, 0] * (np.abs(vals[:, k : 2 * k]) @ w + np.abs(vals[:, 2 * k :]) @ w)
        err = np.abs(whole - split)
        total = abs(done_value + split.sum())
        budget = max(tol * total, abs_tol, 1e-300) * (hi[:, 0] - lo[:, 0]) / length
        ok = (err <= budget) | (hi[:, 0] - lo[:, 0] < 1e-14 * length)
        done_value += split[ok].sum()
        done_error += err[ok].sum()
        done_abs += absint[ok].sum()
        bad = panels[~ok]
        if not len(bad):
            break
        m = 0.5 * (bad[:, 0] + bad[:, 1])
        panels = np.concatenate(
            [np.stack([bad[:, 0], m], axis=1), np.stack([m, bad[:, 1]], axis=1)]
        )
    done_error += 64 * np.finfo(float).eps * done_abs
    return float(done_value), float(done_error)


def integrate_radial(
    f: Callable[[np.ndarray], np.ndarray], r_max: float, tol: float = 1e-12, **kwargs
) -> float:
    """Integral of ``f`` over [0, r_max] to relative accuracy ``tol``."""
    if not r_max > 0:
        raise ValueError("r_max must be positive")
    value, _ = adaptive_gauss_legendre(f, 0.0, float(r_max), tol, **kwargs)
    return value
