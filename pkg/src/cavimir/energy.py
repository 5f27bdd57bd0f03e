"""Casimir interaction energy of a sphere centered off-axis in a cavity.

The energy is an integral over imaginary wavenumber kappa of a log
determinant built from round trips: scatter off the inner sphere,
translate to the cavity frame, scatter off the wall, translate back.
Axial symmetry makes the azimuthal index m a good quantum number, so the
determinant factorizes into independent m blocks over channels
(l, polarization) with l >= max(1, |m|).

Numerics live in a real similarity basis.  The complex translation
block [[A, i Gamma], [-i Gamma, A]] is conjugated by diag(1, i) into the
real symmetric [[A, Gamma], [Gamma, A]], and the block determinant is
evaluated from a whitened product

    det(I - N_m) = det(I - S1 W^T S2 W),   W = |T_i|^{1/2} Vhat |T_e|^{1/2},

where the sign matrices S1, S2 are identities for conducting walls.  The
entries of W combine exponents of order +-2 kappa R, so each one is
assembled from a single folded exponent; W itself is carried with the
overall e^{-kappa d} gap decay pulled out, which keeps every stored
number of order one at any frequency.

Units: lengths are arbitrary but common; frequencies enter as kappa*R;
energies are returned in units of hbar*c/R.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .errors import ConvergenceError, FitQualityWarning, NumericalRangeError
from .scattering import VACUUM, MaterialResponse, t_log_batch
from .translation import BlockMatrix, v_block_real

__all__ = [
    "Geometry",
    "QuadratureSpec",
    "ExtrapolationResult",
    "round_trip_block",
    "logdet_integrand",
    "casimir_energy",
    "energy_ladder",
    "extrapolate_lmax",
    "L_MAX_ENERGY",
]

# Hard cap on the channel cutoff for energy runs; blocks stay cheap and
# well conditioned well beyond the l where any geometry here converges.
L_MAX_ENERGY = 80

# exp() overflow guard for folded entry exponents.  Whenever a folded
# exponent exceeds this, the matching translation entry has already
# underflowed to zero (the product is far below significance), so
# clamping only protects against inf*0.
_EXP_CLAMP = 700.0

# Beyond 2*kappa*d ~ 1400 every channel of both the displaced and the
# concentric determinant underflows to zero; skip the node outright.
_DECAY_CUTOFF = 1400.0

_PEC = MaterialResponse.perfect_conductor()


@dataclass(frozen=True)
class Geometry:
    """Sphere of radius r displaced by a from the center of a cavity of
    radius R.  All lengths in one common unit."""

    r: float
    R: float
    a: float = 0.0

    def __post_init__(self) -> None:
        if not (0.0 < self.r < self.R):
            raise ValueError(f"need 0 < r < R, got r = {self.r}, R = {self.R}")
        if not (0.0 <= self.a < self.R - self.r):
            raise ValueError(
                f"displacement must satisfy 0 <= a < R - r, got a = {self.a}"
            )

    @classmethod
    def from_x(cls, r: float, R: float, x: float) -> "Geometry":
        """Build from the displacement fraction x = a/(R - r)."""
        if not (0.0 <= x < 1.0):
            raise ValueError(f"displacement fraction must lie in [0, 1), got {x}")
        return cls(r=r, R=R, a=x * (R - r))

    @property
    def x(self) -> float:
        """Displacement as a fraction of the concentric clearance."""
        return self.a / (self.R - self.r)

    @property
    def d(self) -> float:
        """Closest surface-to-surface gap."""
        return self.R - self.r - self.a

    @property
    def xi(self) -> float:
        """Displacement over cavity radius."""
        return self.a / self.R


@dataclass(frozen=True)
class QuadratureSpec:
    """Gauss-Legendre rule on t in (0,1) mapped to kappa*R = s*t/(1-t).

    s sets the frequency scale of the node cluster; None defers to
    R/(2d), which tracks the exponential decay scale of the integrand.
    """

    nodes: int = 64
    s: float | None = None
    scheme: str = "gauss-legendre-on-mapped-interval"

    def __post_init__(self) -> None:
        if self.nodes < 8:
            raise ValueError(f"need at least 8 quadrature nodes, got {self.nodes}")
        if self.s is not None and not (self.s > 0.0):
            raise ValueError(f"mapping scale must be positive, got {self.s}")
        if self.scheme != "gauss-legendre-on-mapped-interval":
            raise ValueError(f"unknown quadrature scheme {self.scheme!r}")

    def mapped(self, s: float) -> tuple[np.ndarray, np.ndarray]:
        """(nodes, weights) of the rule mapped to (0, inf) with scale s."""
        u, wu = np.polynomial.legendre.leggauss(self.nodes)
        t = 0.5 * (u + 1.0)
        wt = 0.5 * wu
        z = s * t / (1.0 - t)
        jac = s / (1.0 - t) ** 2
        return z, wt * jac

    def grid(self, geom: Geometry) -> tuple[np.ndarray, np.ndarray]:
        """(kappa*R nodes, weights) such that integral f d(kappa R) =
        sum(w * f(z))."""
        s = self.s if self.s is not None else geom.R / (2.0 * geom.d)
        return self.mapped(s)


def _sigma3(n: int) -> np.ndarray:
    """Polarization parity diag(+1 on E, -1 on M) in block channel order."""
    return np.concatenate([np.ones(n), -np.ones(n)])


def _frame_logs(
    z: float,
    geom: Geometry,
    l_max: int,
    mat_sphere: MaterialResponse,
    mat_wall: MaterialResponse,
    medium: MaterialResponse,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(sign, log|T|) tables for both frames at one frequency node."""
    si, li = t_log_batch(l_max, z * geom.r / geom.R, mat_sphere, medium, cavity=False)
    se, le = t_log_batch(l_max, z, mat_wall, medium, cavity=True)
    return si, li, se, le


def _whitened_block(
    m: int,
    z: float,
    geom: Geometry,
    l_max: int,
    frames: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray, float]:
    """Whitened round-trip factor for one m block.

    Returns (w, s1, s2, li_vec, le_vec, conc) where w carries the gap
    decay e^{-kappa d} pulled out (true W = e^{-kappa d} w), s1/s2 are
    the +-1 sign diagonals of the determinant identity, li_vec/le_vec
    are the per-channel log magnitudes, and conc is this block's
    concentric log det sum(log(1 - T_e T_i)).
    """
    si, li, se, le = frames
    l_min = max(1, abs(m))
    n = l_max - l_min + 1
    arg = z * geom.a / geom.R
    kd = z * geom.d / geom.R

    a_mat, g_mat = v_block_real(m, l_max, arg)
    vhat = np.block([[a_mat, g_mat], [g_mat, a_mat]])

    li_vec = np.concatenate([li[0, l_min:], li[1, l_min:]])
    le_vec = np.concatenate([le[0, l_min:], le[1, l_min:]])
    si_vec = np.concatenate([si[0, l_min:], si[1, l_min:]])
    se_vec = np.concatenate([se[0, l_min:], se[1, l_min:]])
    sig3 = _sigma3(n)
    s1 = se_vec * sig3
    s2 = sig3 * si_vec

    expo = 0.5 * (li_vec[:, None] + le_vec[None, :]) + arg + kd
    w = vhat * np.exp(np.minimum(expo, _EXP_CLAMP))
    if not np.all(np.isfinite(w)):
        raise NumericalRangeError(
            f"non-finite round-trip entry at kappa*R = {z:.6g}, m = {m}"
        )

    lsum = li_vec + le_vec
    if np.any(lsum >= 0.0):
        raise NumericalRangeError(
            f"concentric channel product reached unity at kappa*R = {z:.6g}, m = {m}"
        )
    psign = si_vec * se_vec
    with np.errstate(divide="ignore"):
        conc = float(
            np.sum(
                np.where(
                    psign > 0.0, np.log1p(-np.exp(lsum)), np.log1p(np.exp(lsum))
                )
            )
        )
    return w, s1, s2, li_vec, le_vec, conc


def _block_logdet_terms(
    m: int,
    z: float,
    geom: Geometry,
    l_max: int,
    frames: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
) -> float:
    """Concentric-minus-displaced contribution of one m block, >= 0."""
    w, s1, s2, _, _, conc = _whitened_block(m, z, geom, l_max, frames)
    decay = math.exp(-2.0 * z * geom.d / geom.R)
    f = np.eye(w.shape[1]) - decay * (s1[:, None] * (w.T @ (s2[:, None] * w)))
    sign, ld = np.linalg.slogdet(f)
    if sign <= 0.0 or not math.isfinite(ld):
        raise NumericalRangeError(
            f"round-trip determinant lost positivity at kappa*R = {z:.6g}, m = {m}"
        )
    return conc - ld


def round_trip_block(
    m: int,
    kappa_R: float,
    geom: Geometry,
    l_max: int,
    mat_sphere: MaterialResponse = _PEC,
    mat_wall: MaterialResponse = _PEC,
    medium: MaterialResponse = VACUUM,
) -> BlockMatrix:
    """Round-trip matrix N_m = T_e V_ei T_i V_ie for one m block.

    Channels follow the translation-block convention: all E then all M,
    l ascending from max(1, |m|).  Entries are complex in the physical
    wave basis; at a = 0 the block is exactly diagonal with entries
    T_e(l,P) T_i(l,P).

    The entries themselves are reconstructed from the whitened product
    by undoing the |T_e|^{1/2} similarity, so each carries an exact
    folded exponent.  In extreme corners (kappa*R far below every other
    scale with large l_max) the true entries exceed double range; that
    raises NumericalRangeError rather than returning junk.  The energy
    path never forms these entries.
    """
    z = _check_node(kappa_R)
    _check_l_max(l_max, m)
    frames = _frame_logs(z, geom, l_max, mat_sphere, mat_wall, medium)
    w, s1, s2, _, le_vec, _ = _whitened_block(m, z, geom, l_max, frames)
    mt = w.T @ (s2[:, None] * w)
    kd = z * geom.d / geom.R
    with np.errstate(divide="ignore"):
        ln_mt = np.log(np.abs(mt))
    expo = 0.5 * (le_vec[:, None] - le_vec[None, :]) - 2.0 * kd + ln_mt
    if np.any(expo > 709.0):
        raise NumericalRangeError(
            f"round-trip entry overflows double at kappa*R = {z:.6g}, m = {m}"
        )
    nhat = s1[:, None] * np.sign(mt) * np.exp(expo)

    n = w.shape[0] // 2
    dvec = np.concatenate([np.ones(n), 1j * np.ones(n)])
    entries = (1.0 / dvec)[:, None] * nhat * dvec[None, :]
    entries.flags.writeable = False
    return BlockMatrix(m=m, l_max=l_max, entries=entries)


def _check_node(kappa_R: float) -> float:
    z = float(kappa_R)
    if not (z > 0.0) or not math.isfinite(z):
        raise ValueError(f"kappa*R must be positive and finite, got {kappa_R!r}")
    return z


def _check_l_max(l_max: int, m: int = 0) -> None:
    if l_max < max(1, abs(m)):
        raise ValueError(f"l_max = {l_max} leaves no channels for m = {m}")
    if l_max > L_MAX_ENERGY:
        raise ValueError(f"l_max capped at {L_MAX_ENERGY}, got {l_max}")


def logdet_integrand(
    kappa_R: float,
    geom: Geometry,
    l_max: int,
    mat_sphere: MaterialResponse = _PEC,
    mat_wall: MaterialResponse = _PEC,
    medium: MaterialResponse = VACUUM,
) -> float:
    """Concentric-minus-displaced log determinant at one frequency node.

    Returns sum over m of  sum_{l,P} ln(1 - T_e T_i) - ln det(I - N_m),
    which vanishes at a = 0 and is positive otherwise: moving the sphere
    off center strengthens the round-trip coupling in every m block.
    The energy is -(hbar c / 2 pi R) times the kappa*R integral of this.

    Determinants are evaluated by pivoted triangular factorization of
    the real whitened form, so the result is real by construction; the
    complex-basis assembly is cross-checked against it in the test
    suite.  A non-finite entry or a sign flip anywhere raises
    NumericalRangeError naming the (kappa, m) node.
    """
    z = _check_node(kappa_R)
    _check_l_max(l_max)
    if geom.a == 0.0:
        return 0.0
    if 2.0 * z * geom.d / geom.R > _DECAY_CUTOFF:
        return 0.0
    frames = _frame_logs(z, geom, l_max, mat_sphere, mat_wall, medium)
    total = _block_logdet_terms(0, z, geom, l_max, frames)
    for m in range(1, l_max + 1):
        total += 2.0 * _block_logdet_terms(m, z, geom, l_max, frames)
    return total


def _integral_worker(
    args: tuple[float, Geometry, int, MaterialResponse, MaterialResponse, MaterialResponse],
) -> float:
    z, geom, l_max, mat_sphere, mat_wall, medium = args
    return logdet_integrand(z, geom, l_max, mat_sphere, mat_wall, medium)


def _energy_once(
    geom: Geometry,
    l_max: int,
    quad: QuadratureSpec,
    mat_sphere: MaterialResponse,
    mat_wall: MaterialResponse,
    medium: MaterialResponse,
    workers: int,
) -> float:
    z_nodes, weights = quad.grid(geom)
    if workers > 1:
        jobs = [(z, geom, l_max, mat_sphere, mat_wall, medium) for z in z_nodes]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(_integral_worker, jobs, chunksize=4))
    else:
        vals = [
            logdet_integrand(z, geom, l_max, mat_sphere, mat_wall, medium)
            for z in z_nodes
        ]
    # Fixed ascending-node order keeps the reduction bit-reproducible.
    acc = 0.0
    for w, c in zip(weights, vals):
        acc += w * c
    return -acc / (2.0 * math.pi)


def casimir_energy(
    geom: Geometry,
    l_max: int,
    quad: QuadratureSpec = QuadratureSpec(),
    mat_sphere: MaterialResponse = _PEC,
    mat_wall: MaterialResponse = _PEC,
    medium: MaterialResponse = VACUUM,
    rel_tol: float = 1e-8,
    max_refinements: int = 6,
    workers: int = 1,
) -> float:
    """Interaction energy in units of hbar*c/R at fixed channel cutoff.

    The quadrature is refined by node doubling until two consecutive
    estimates agree to rel_tol in relative terms; the refined estimate
    is returned.  If the budget of doublings runs out first, raises
    ConvergenceError carrying both estimates (.last, .previous).
    """
    _check_l_max(l_max)
    if max_refinements < 1:
        raise ValueError("need at least one node-doubling to certify convergence")
    nodes = quad.nodes
    est = _energy_once(geom, l_max, quad, mat_sphere, mat_wall, medium, workers)
    before = est
    for _ in range(max_refinements):
        nodes *= 2
        finer = QuadratureSpec(nodes=nodes, s=quad.s, scheme=quad.scheme)
        nxt = _energy_once(geom, l_max, finer, mat_sphere, mat_wall, medium, workers)
        if abs(nxt - est) <= rel_tol * max(abs(nxt), 1e-300):
            return nxt
        before, est = est, nxt
    raise ConvergenceError(
        f"quadrature not converged to {rel_tol:g} after {max_refinements} "
        f"doublings (reached {nodes} nodes)",
        last=est,
        previous=before,
    )


def energy_ladder(
    geom: Geometry,
    l_values: Sequence[int],
    quad: QuadratureSpec = QuadratureSpec(),
    **kwargs,
) -> list[tuple[int, float]]:
    """Energies at an increasing sequence of channel cutoffs."""
    lv = list(l_values)
    if any(b <= a for a, b in zip(lv, lv[1:])):
        raise ValueError("cutoff ladder must be strictly increasing")
    return [(l, casimir_energy(geom, l, quad, **kwargs)) for l in lv]


@dataclass(frozen=True)
class ExtrapolationResult:
    """Fit of E(L) = e_infinity - alpha * exp(-beta L) to a cutoff ladder."""

    e_infinity: float
    alpha: float
    beta: float
    stderr: np.ndarray  # one-sigma errors for (e_infinity, alpha, beta)


def extrapolate_lmax(samples: Sequence[tuple[int, float]]) -> ExtrapolationResult:
    """Remove the channel cutoff by fitting an exponential tail.

    samples are (l_max, energy) pairs with strictly increasing l_max,
    at least four of them.  Truncation errors of this determinant decay
    exponentially in the cutoff, so the three-parameter model above
    captures the approach; beta is constrained positive.  A ladder
    whose successive differences change sign or grow is flagged with
    FitQualityWarning (the fit still runs).
    """
    pts = list(samples)
    if len(pts) < 4:
        raise ValueError(f"need at least 4 ladder points, got {len(pts)}")
    lv = np.array([p[0] for p in pts], dtype=float)
    ev = np.array([p[1] for p in pts], dtype=float)
    if np.any(np.diff(lv) <= 0):
        raise ValueError("ladder cutoffs must be strictly increasing")

    diffs = np.diff(ev)
    tol = 1e-14 * np.max(np.abs(ev))
    signs_mixed = np.any(diffs > tol) and np.any(diffs < -tol)
    mags = np.abs(diffs)
    growing = np.any(mags[1:] > mags[:-1] + tol)
    if signs_mixed or growing:
        warnings.warn(
            "ladder differences are not monotonically shrinking; the "
            "exponential tail model may not apply",
            FitQualityWarning,
            stacklevel=2,
        )

    # Seed from the last three points: diff ratio fixes beta, one diff
    # fixes alpha, then the tail value fixes the limit.
    if mags[-1] > 0.0 and mags[-2] > 0.0 and mags[-2] > mags[-1]:
        beta0 = math.log(mags[-2] / mags[-1]) / (lv[-1] - lv[-2])
    else:
        beta0 = 2.0 / (lv[-1] - lv[0])
    denom = math.exp(-beta0 * lv[-1]) - math.exp(-beta0 * lv[-2])
    alpha0 = -diffs[-1] / denom if denom != 0.0 else 1.0
    e0 = ev[-1] + alpha0 * math.exp(-beta0 * lv[-1])

    def model(L: np.ndarray, e_inf: float, alpha: float, beta: float) -> np.ndarray:
        return e_inf - alpha * np.exp(-beta * L)

    popt, pcov = curve_fit(
        model,
        lv,
        ev,
        p0=(e0, alpha0, beta0),
        bounds=([-np.inf, -np.inf, 1e-12], [np.inf, np.inf, np.inf]),
        xtol=1e-14,
        ftol=1e-14,
        gtol=1e-14,
        max_nfev=20000,
    )
    stderr = np.sqrt(np.diag(pcov))
    stderr.flags.writeable = False
    return ExtrapolationResult(
        e_infinity=float(popt[0]),
        alpha=float(popt[1]),
        beta=float(popt[2]),
        stderr=stderr,
    )
