"""Mie transition matrices on the imaginary frequency axis.

Everything here is evaluated at wavenumber i*kappa with kappa > 0, where
the spherical waves are the real exponentially growing/decaying pair
(i_l, k_l) and every T-matrix element is real.  Two scattering
geometries share the same algebra with the roles of i_l and k_l swapped:

  t_inner   regular wave hits a ball, scattered wave is outgoing
  t_cavity  outgoing wave hits the cavity wall from inside, scattered
            wave is regular

Magnitudes span hundreds of orders of magnitude (T_inner ~ e^{-2 kappa r}
at large kappa r, T_cavity ~ e^{+2 kappa R}), so the primary interface
is (sign, log|T|) pairs; the plain-value wrappers just exponentiate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .specfun import scaled_bessel

__all__ = [
    "MaterialResponse",
    "VACUUM",
    "PolarizabilitySet",
    "t_inner",
    "t_inner_log",
    "t_cavity",
    "t_cavity_log",
    "t_multipole",
    "pec_polarizabilities",
]

_LOG_EPS = -745.0  # exp() underflows to 0.0 a bit below this


@dataclass(frozen=True)
class _ConstantResponse:
    """Frequency-independent response value; picklable for worker pools."""

    value: float

    def __call__(self, kappa: float) -> float:
        return self.value


@dataclass(frozen=True)
class MaterialResponse:
    """Local isotropic material model epsilon(kappa), mu(kappa).

    kind is "pec" or "dielectric".  For a perfect conductor the response
    functions are never called; the T-matrix branches on kind instead.
    The callables take kappa (or any positive scale; the models shipped
    here are frequency independent) and return a positive float.
    """

    kind: str
    epsilon: Callable[[float], float] = field(default=_ConstantResponse(1.0))
    mu: Callable[[float], float] = field(default=_ConstantResponse(1.0))

    @classmethod
    def perfect_conductor(cls) -> "MaterialResponse":
        return cls(kind="pec")

    @classmethod
    def dielectric(cls, eps: float, mu: float = 1.0) -> "MaterialResponse":
        if eps <= 0.0 or mu <= 0.0:
            raise ValueError("material response must be positive on the imaginary axis")
        return cls(
            kind="dielectric",
            epsilon=_ConstantResponse(eps),
            mu=_ConstantResponse(mu),
        )

    @property
    def is_pec(self) -> bool:
        return self.kind == "pec"

    def refractive_index(self, kappa: float) -> float:
        if self.is_pec:
            raise ValueError("refractive index of a perfect conductor is not defined")
        return math.sqrt(self.epsilon(kappa) * self.mu(kappa))


VACUUM = MaterialResponse.dielectric(1.0, 1.0)


def _check_channel(l: int, pol: str, x: float) -> None:
    if l < 1:
        raise ValueError(f"l = {l}: spherical waves start at the dipole, need l >= 1")
    if pol not in ("E", "M"):
        raise ValueError(f"polarization must be 'E' or 'M', got {pol!r}")
    if not (x > 0.0) or not math.isfinite(x):
        raise ValueError(f"size parameter must be positive and finite, got {x}")


def _signed_diff(log_a: float, log_b: float) -> tuple[float, float]:
    """(sign, log|.|) of exp(log_a) - exp(log_b)."""
    if log_a == log_b:
        return 1.0, -math.inf
    if log_a > log_b:
        return 1.0, log_a + math.log1p(-math.exp(log_b - log_a))
    return -1.0, log_b + math.log1p(-math.exp(log_a - log_b))


def _mie_log(
    l: int,
    pol: str,
    x: float,
    mat: MaterialResponse,
    medium: MaterialResponse,
    cavity: bool,
) -> tuple[float, float]:
    """Shared inner/cavity Mie element as (sign, log|T|).

    cavity=False: scatterer fills r' < x/kappa, medium outside.
    cavity=True:  medium fills the inside, scatterer material beyond.
    The two differ by i <-> k on the medium-side radial functions.
    """
    n_medium = medium.refractive_index(1.0)
    z_m = n_medium * x
    tab_m = scaled_bessel(l, z_m)

    if mat.is_pec:
        # Dirichlet-like M (field itself) and Neumann-like E (d/dr of r*field)
        # conditions on the medium-side wave alone.
        if cavity:
            if pol == "M":
                return -1.0, tab_m.log_k[l] - tab_m.log_i[l]
            return 1.0, tab_m.log_neg_dxk[l] - tab_m.log_dxi[l]
        if pol == "M":
            return -1.0, tab_m.log_i[l] - tab_m.log_k[l]
        return 1.0, tab_m.log_dxi[l] - tab_m.log_neg_dxk[l]

    # Penetrable material: match tangential fields across the interface.
    # The coupling constant is mu for M polarization and epsilon for E.
    n_mat = mat.refractive_index(1.0)
    z_s = n_mat * x
    tab_s = scaled_bessel(l, z_s)
    if pol == "M":
        c_m = math.log(medium.mu(1.0))
        c_s = math.log(mat.mu(1.0))
    else:
        c_m = math.log(medium.epsilon(1.0))
        c_s = math.log(mat.epsilon(1.0))

    if not cavity:
        # T = -[c_m i(z_m) Di(z_s) - c_s Di(z_m) i(z_s)]
        #      / [c_m k(z_m) Di(z_s) - c_s Dk(z_m) i(z_s)]
        s_num, log_num = _signed_diff(
            c_m + tab_m.log_i[l] + tab_s.log_dxi[l],
            c_s + tab_m.log_dxi[l] + tab_s.log_i[l],
        )
        # Dk < 0, so both denominator terms carry the same sign: no
        # cancellation, plain log-sum.
        log_den = np.logaddexp(
            c_m + tab_m.log_k[l] + tab_s.log_dxi[l],
            c_s + tab_m.log_neg_dxk[l] + tab_s.log_i[l],
        )
        return -s_num, log_num - float(log_den)

    # Cavity: the scatterer-side regular wave i(z_s) -> k(z_s), and the
    # medium-side i <-> k, i.e. reflect an outgoing wave into a regular one.
    # num = c_m k(z_m) Dk(z_s) - c_s Dk(z_m) k(z_s)   (both terms negative)
    # den = c_m i(z_m) Dk(z_s) - c_s Di(z_m) k(z_s)   (both terms negative)
    s_num, log_num = _signed_diff(
        c_s + tab_m.log_neg_dxk[l] + tab_s.log_k[l],
        c_m + tab_m.log_k[l] + tab_s.log_neg_dxk[l],
    )
    log_den = np.logaddexp(
        c_m + tab_m.log_i[l] + tab_s.log_neg_dxk[l],
        c_s + tab_m.log_dxi[l] + tab_s.log_k[l],
    )
    # Overall: T = -num/den with den = -exp(log_den).
    return s_num, log_num - float(log_den)


def _signed_diff_vec(log_a: np.ndarray, log_b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized (sign, log|.|) of exp(log_a) - exp(log_b)."""
    sign = np.where(log_a >= log_b, 1.0, -1.0)
    hi = np.maximum(log_a, log_b)
    lo = np.minimum(log_a, log_b)
    with np.errstate(divide="ignore"):
        mag = hi + np.log1p(-np.exp(np.minimum(lo - hi, 0.0)))
    return sign, mag


def t_log_batch(
    l_max: int,
    x: float,
    mat: MaterialResponse,
    medium: MaterialResponse = VACUUM,
    cavity: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """All (sign, log|T|) at one size parameter, for l = 0..l_max.

    Returns (sign, logmag), each of shape (2, l_max+1): row 0 is E, row 1
    is M.  Slot l = 0 is a placeholder (sign +1, log -inf).  One Bessel
    table serves every channel, which is what makes frequency sweeps
    over full l ladders affordable.
    """
    if l_max < 1:
        raise ValueError(f"need l_max >= 1, got {l_max}")
    if not (x > 0.0) or not math.isfinite(x):
        raise ValueError(f"size parameter must be positive and finite, got {x}")
    n_medium = medium.refractive_index(1.0)
    z_m = n_medium * x
    tab_m = scaled_bessel(l_max, z_m)
    sign = np.ones((2, l_max + 1))
    logmag = np.full((2, l_max + 1), -np.inf)
    if mat.is_pec:
        if cavity:
            logmag[1, 1:] = tab_m.log_k[1:] - tab_m.log_i[1:]
            logmag[0, 1:] = tab_m.log_neg_dxk[1:] - tab_m.log_dxi[1:]
        else:
            logmag[1, 1:] = tab_m.log_i[1:] - tab_m.log_k[1:]
            logmag[0, 1:] = tab_m.log_dxi[1:] - tab_m.log_neg_dxk[1:]
        sign[1, 1:] = -1.0
        return sign, logmag
    tab_s = scaled_bessel(l_max, mat.refractive_index(1.0) * x)
    for row, (c_m, c_s) in enumerate(
        [
            (math.log(medium.epsilon(1.0)), math.log(mat.epsilon(1.0))),
            (math.log(medium.mu(1.0)), math.log(mat.mu(1.0))),
        ]
    ):
        if not cavity:
            s_num, log_num = _signed_diff_vec(
                c_m + tab_m.log_i[1:] + tab_s.log_dxi[1:],
                c_s + tab_m.log_dxi[1:] + tab_s.log_i[1:],
            )
            log_den = np.logaddexp(
                c_m + tab_m.log_k[1:] + tab_s.log_dxi[1:],
                c_s + tab_m.log_neg_dxk[1:] + tab_s.log_i[1:],
            )
            sign[row, 1:] = -s_num
        else:
            s_num, log_num = _signed_diff_vec(
                c_s + tab_m.log_neg_dxk[1:] + tab_s.log_k[1:],
                c_m + tab_m.log_k[1:] + tab_s.log_neg_dxk[1:],
            )
            log_den = np.logaddexp(
                c_m + tab_m.log_i[1:] + tab_s.log_neg_dxk[1:],
                c_s + tab_m.log_dxi[1:] + tab_s.log_k[1:],
            )
            sign[row, 1:] = s_num
        logmag[row, 1:] = log_num - log_den
    return sign, logmag


def t_inner_log(
    l: int,
    pol: str,
    kr: float,
    mat: MaterialResponse,
    medium: MaterialResponse = VACUUM,
) -> tuple[float, float]:
    """(sign, log|T|) for scattering off the inner sphere, size kr = kappa*r."""
    _check_channel(l, pol, kr)
    return _mie_log(l, pol, kr, mat, medium, cavity=False)


def t_cavity_log(
    l: int,
    pol: str,
    kR: float,
    mat: MaterialResponse,
    medium: MaterialResponse = VACUUM,
) -> tuple[float, float]:
    """(sign, log|T|) for reflection off the cavity wall, size kR = kappa*R."""
    _check_channel(l, pol, kR)
    return _mie_log(l, pol, kR, mat, medium, cavity=True)


def t_inner(
    l: int,
    pol: str,
    kr: float,
    mat: MaterialResponse,
    medium: MaterialResponse = VACUUM,
) -> float:
    sign, log_t = t_inner_log(l, pol, kr, mat, medium)
    return sign * math.exp(log_t) if log_t > _LOG_EPS else 0.0


def t_cavity(
    l: int,
    pol: str,
    kR: float,
    mat: MaterialResponse,
    medium: MaterialResponse = VACUUM,
) -> float:
    sign, log_t = t_cavity_log(l, pol, kR, mat, medium)
    return sign * math.exp(log_t)


@dataclass(frozen=True)
class PolarizabilitySet:
    """Static multipole polarizabilities alpha_l, l = 1..l_cut.

    Arrays are indexed by l directly; slot 0 is unused and holds 0.
    """

    l_cut: int
    alpha_e: np.ndarray
    alpha_m: np.ndarray

    def alpha(self, pol: str, l: int) -> float:
        if not 1 <= l <= self.l_cut:
            raise ValueError(f"l = {l} outside stored range 1..{self.l_cut}")
        if pol == "E":
            return float(self.alpha_e[l])
        if pol == "M":
            return float(self.alpha_m[l])
        raise ValueError(f"polarization must be 'E' or 'M', got {pol!r}")


def pec_polarizabilities(r: float, l_cut: int) -> PolarizabilitySet:
    """Multipole polarizabilities of a perfectly conducting ball of radius r."""
    if not (r > 0.0) or not math.isfinite(r):
        raise ValueError(f"radius must be positive and finite, got {r}")
    if l_cut < 1:
        raise ValueError(f"l_cut must be >= 1, got {l_cut}")
    ls = np.arange(l_cut + 1, dtype=float)
    alpha_e = r ** (2.0 * ls + 1.0)
    alpha_m = -ls / (ls + 1.0) * r ** (2.0 * ls + 1.0)
    alpha_e[0] = 0.0
    alpha_m[0] = 0.0
    alpha_e.setflags(write=False)
    alpha_m.setflags(write=False)
    return PolarizabilitySet(l_cut=l_cut, alpha_e=alpha_e, alpha_m=alpha_m)


def _log_double_factorial_odd(k: int) -> float:
    """log((2k+1)!!) via (2k+1)!! = (2k+1)! / (2^k k!)."""
    return math.lgamma(2 * k + 2) - k * math.log(2.0) - math.lgamma(k + 1)


def t_multipole(l: int, pol: str, kappa: float, pols: PolarizabilitySet) -> float:
    """Leading small-kappa T-matrix element from a static polarizability.

    T ~ (-1)^(l-1) (l+1) / (l (2l+1)!! (2l-1)!!) * alpha_l * kappa^(2l+1)
    """
    _check_channel(l, pol, kappa)
    alpha = pols.alpha(pol, l)
    if alpha == 0.0:
        return 0.0
    log_pref = (
        math.log(l + 1.0)
        - math.log(float(l))
        - _log_double_factorial_odd(l)  # (2l+1)!!
        - _log_double_factorial_odd(l - 1)  # (2l-1)!!
    )
    sign = (-1.0) ** (l - 1) * math.copysign(1.0, alpha)
    log_t = log_pref + math.log(abs(alpha)) + (2.0 * l + 1.0) * math.log(kappa)
    return sign * math.exp(log_t)
