"""Modified spherical Bessel functions on the imaginary-frequency axis.

Conventions: i_l(x) = sqrt(pi/2x) I_{l+1/2}(x), k_l(x) = sqrt(2/pi x)
K_{l+1/2}(x), so i_0 = sinh(x)/x and k_0 = exp(-x)/x.  Everything is
stored as logarithms because the raw values overflow near x ~ 700 and
the order sweep spans hundreds of decades.

The recurrences run on neighbor ratios (full double precision, the
three-term relations have all-positive terms in this basis) and the
logarithms are rebuilt with compensated summation, so the absolute
error of a log stays at a few ulp of its own magnitude instead of
random-walking; that is what keeps the Wronskian at relative 1e-12 even
at l = 120 and x = 1e-3.  Every derivative combination is a single
positive bracket times i_l or k_l, so no cancellation occurs anywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from ..errors import ConvergenceError

# Hard cap on the multipole order; recurrences stay well-conditioned far
# beyond this but nothing in the package needs more.
MAX_ORDER = 200

# Below this argument the continued-fraction/ratio pass is replaced by
# the ascending power series.
_SERIES_X = 1e-3

_CF_MAX_ITER = 200_000

# The Lentz continued fraction needs O(x) work and overflows its
# transients somewhere above x ~ 1e8, so for large arguments the upper
# ratio seed switches to the exact terminating large-x form of i_l:
# once x > 720 the e^{-x} half of i_l is below double precision, hence
# i_l = e^x q_l(-1/(2x))/(2x) with the degree-l polynomial
# q_l(t) = sum_s (l+s)!/(s!(l-s)!) t^s, and once x >= 30 (l+1)^2 the
# alternating terms of q_l decrease monotonically (no cancellation).
_POLY_X_MIN = 720.0
_POLY_X_FACTOR = 30.0


@dataclass(frozen=True)
class ScaledBesselTable:
    """Log-domain table of i_l, k_l and derivative combinations at fixed x.

    Arrays run over l = 0..max_order.  log_dxi and log_neg_dxk hold the
    Riccati-type derivatives d/dx [x f(x)] that enter electric-type
    scattering amplitudes.
    """

    x: float
    max_order: int
    log_i: np.ndarray
    log_k: np.ndarray
    log_di: np.ndarray
    log_neg_dk: np.ndarray
    log_dxi: np.ndarray
    log_neg_dxk: np.ndarray

    @property
    def i_scaled(self) -> np.ndarray:
        """exp(-x) i_l(x)."""
        return np.exp(self.log_i - self.x)

    @property
    def k_scaled(self) -> np.ndarray:
        """exp(+x) k_l(x)."""
        return np.exp(self.log_k + self.x)

    @property
    def di_scaled(self) -> np.ndarray:
        """exp(-x) i_l'(x)."""
        return np.exp(self.log_di - self.x)

    @property
    def dk_scaled(self) -> np.ndarray:
        """exp(+x) k_l'(x); negative for every l."""
        return -np.exp(self.log_neg_dk + self.x)


def _ratio_cf(order: int, x: float) -> float:
    """i_{order+1}(x) / i_order(x) by modified Lentz on the standard
    continued fraction; converges for any x > 0."""
    tiny = 1e-300
    f = tiny
    c = f
    d = 0.0
    for j in range(1, _CF_MAX_ITER + 1):
        a = x if j == 1 else x * x
        b = 2.0 * (order + j) + 1.0
        d = b + a * d
        if d == 0.0:
            d = tiny
        c = b + a / c
        if c == 0.0:
            c = tiny
        d = 1.0 / d
        delta = c * d
        f *= delta
        if abs(delta - 1.0) < 1e-15:
            return f
    raise ConvergenceError(
        f"bessel ratio continued fraction stalled at x={x!r}, order={order}"
    )


def _poly_q(order: int, x: float) -> float:
    """q_order(-1/(2x)): the terminating large-x sum of i_order, sans e^x/2x."""
    term = 1.0
    acc = 1.0
    for s in range(order):
        term *= -(order + s + 1.0) * (order - s) / (2.0 * x * (s + 1.0))
        acc += term
    return acc


def _log_i_series(orders: np.ndarray, x: float, terms: int = 40) -> np.ndarray:
    """ln i_l by the ascending series l*ln x - ln(2l+1)!! + ln(sum);
    usable for x below about 0.5 given enough terms."""
    l = np.asarray(orders, dtype=float)
    log_dfact = gammaln(2.0 * l + 2.0) - l * math.log(2.0) - gammaln(l + 1.0)
    q = 0.5 * x * x
    c = np.ones_like(l)
    acc = np.zeros_like(l)
    for s in range(1, terms + 1):
        c = c * q / (s * (2.0 * l + 2.0 * s + 1.0))
        acc += c
        if np.max(c) < 1e-18 * (1.0 + np.max(acc)):
            break
    return l * math.log(x) - log_dfact + np.log1p(acc)


def _compensated_cumlog(base: float, log_steps: np.ndarray) -> np.ndarray:
    # Kahan-compensated partial sums of base + cumsum(log_steps)
    out = np.empty(len(log_steps) + 1)
    out[0] = base
    s = base
    comp = 0.0
    for idx in range(len(log_steps)):
        y = log_steps[idx] - comp
        t = s + y
        comp = (t - s) - y
        s = t
        out[idx + 1] = s
    return out


@lru_cache(maxsize=512)
def scaled_bessel(max_order: int, x: float) -> ScaledBesselTable:
    """Build the log-domain Bessel table for l = 0..max_order at x > 0.

    k_l runs upward and i_l downward (Miller), both in ratio form;
    i is normalized to ln i_0 = x + ln(1-e^{-2x}) - ln 2x and seeded by
    a continued fraction, or by the power series below x = 1e-3.

    Tables are memoized on (max_order, x) and returned with read-only
    arrays; a frequency integration asks for the same table once per
    (node, frame) but uses it in every m block.
    """
    if not (x > 0.0) or not math.isfinite(x):
        raise ValueError(f"argument must be positive and finite, got {x!r}")
    if not (0 <= max_order <= MAX_ORDER):
        raise ValueError(f"max_order must lie in [0, {MAX_ORDER}], got {max_order}")

    nn = max_order + 1  # one guard order for the derivative brackets
    lnx = math.log(x)

    # rho[l] = k_l / k_{l-1} (> 1), l = 1..nn ; rho[0] = k_0/k_{-1} = 1
    rho = np.empty(nn + 1)
    rho[0] = 1.0
    rho[1] = (1.0 + x) / x
    for l in range(1, nn):
        rho[l + 1] = (2.0 * l + 1.0) / x + 1.0 / rho[l]
    lk = _compensated_cumlog(-x - lnx, np.log(rho[1:]))

    # sig[l] = i_{l-1} / i_l (> 1), l = 1..nn+1, marched downward
    sig = np.empty(nn + 2)
    if x < _SERIES_X:
        li_ext = _log_i_series(np.arange(nn + 2), x)
        li = li_ext[: nn + 1]
        sig[1:] = np.exp(li_ext[:-1] - li_ext[1:])
    else:
        if x >= _POLY_X_MIN and x >= _POLY_X_FACTOR * (nn + 1.0) ** 2:
            sig[nn + 1] = _poly_q(nn, x) / _poly_q(nn + 1, x)
        else:
            sig[nn + 1] = 1.0 / _ratio_cf(nn, x)
        for l in range(nn, 0, -1):
            sig[l] = (2.0 * l + 1.0) / x + 1.0 / sig[l + 1]
        # i_0 = sinh(x)/x, written to survive both x -> 0 and x -> inf
        log_i0 = x + math.log(-math.expm1(-2.0 * x)) - math.log(2.0 * x)
        li = _compensated_cumlog(log_i0, -np.log(sig[1 : nn + 1]))

    ell = np.arange(1, nn, dtype=float)

    # i_l' = i_l (i_{l+1}/i_l + l/x); l = 0 reduces to i_1
    log_di = np.empty(nn)
    log_di[0] = li[1]
    if nn > 1:
        log_di[1:] = li[1:nn] + np.log(1.0 / sig[2 : nn + 1] + ell / x)

    # -k_l' = k_l (k_{l-1}/k_l + (l+1)/x)
    log_neg_dk = np.empty(nn)
    log_neg_dk[0] = lk[0] + math.log1p(1.0 / x)
    if nn > 1:
        log_neg_dk[1:] = lk[1:nn] + np.log(1.0 / rho[1:nn] + (ell + 1.0) / x)

    # d/dx [x i_l] = i_l ((l+1) + x i_{l+1}/i_l) : positive bracket
    lhead = np.arange(0, nn, dtype=float)
    log_dxi = li[:nn] + np.log(lhead + 1.0 + x / sig[1 : nn + 1])

    # -d/dx [x k_l] = k_l (l + x k_{l-1}/k_l) : positive bracket
    log_neg_dxk = lk[:nn] + np.log(lhead + x / rho[:nn])

    m = max_order + 1
    fields = (li[:m], lk[:m], log_di[:m], log_neg_dk[:m], log_dxi[:m], log_neg_dxk[:m])
    for arr in fields:
        arr.flags.writeable = False
    return ScaledBesselTable(
        x=x,
        max_order=max_order,
        log_i=fields[0],
        log_k=fields[1],
        log_di=fields[2],
        log_neg_dk=fields[3],
        log_dxi=fields[4],
        log_neg_dxk=fields[5],
    )
