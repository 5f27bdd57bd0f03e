"""Small-object expansion of the interior Casimir interaction.

A compact polarizable object displaced from the center of a conducting
spherical cavity admits an expansion of the interaction energy in powers
of (object size)/(cavity radius), with coefficient functions of the
displacement fraction xi = a/R.  This module evaluates those
coefficients and the two energy forms assembled from them: the
orientation-resolved dipole form, which consumes the trace and the
uniaxial combination 2 a_zz - a_xx - a_yy of the polarizability
tensors, and the spherically symmetric form through quadrupole order.

Every coefficient is one integral over imaginary frequency x of a
multipole sum: cavity response ratios zeta_l(x) weighted by products of
regular waves i_nu(x*xi) evaluated at the displaced center.  Each
summand factors into a bounded bracket times exp(-2x(1-xi)); the
bracket is assembled from logarithms of the scaled Bessel tables, so no
intermediate overflows even though zeta_l and i_nu separately span
thousands of decades.  The same factorization fixes the quadrature
mapping scale 1/(1-xi) and shows the l-sum converges geometrically with
ratio xi^2, hence degrades as the object approaches the wall.

Units: hbar = c = 1.  Energies carry 1/R from the frequency integral;
dipole polarizabilities are length^3, quadrupole length^5.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import QuadratureSpec
from .errors import ConvergenceError
from .scattering import PolarizabilitySet
from .specfun import MAX_ORDER, scaled_bessel

__all__ = [
    "DipoleTensors",
    "CpCoefficients",
    "zeta",
    "cp_coefficients",
    "cp_energy_tensor",
    "cp_energy_spherical",
]

# last retained multipole must contribute less than this fraction of the
# running sum at the probe nodes
_TAIL_TOL = 1e-10

_POLS = ("E", "M")


def zeta(l: int, pol: str, x: float) -> float:
    """Cavity response ratio of outgoing to regular waves at order l.

    M-type is k_l(x)/i_l(x), positive and decaying like exp(-2x).
    E-type is the ratio of the Riccati derivatives d/dx[x k_l] over
    d/dx[x i_l]; the denominator is positive for every x > 0, so the
    ratio is finite and negative on the whole axis.
    """
    if l < 1:
        raise ValueError(f"multipole order must be >= 1, got {l}")
    if pol not in _POLS:
        raise ValueError(f"polarization must be 'E' or 'M', got {pol!r}")
    if not (x > 0.0 and math.isfinite(x)):
        raise ValueError(f"argument must be positive and finite, got {x!r}")
    tbl = scaled_bessel(l, x)
    if pol == "M":
        return math.exp(tbl.log_k[l] - tbl.log_i[l])
    assert math.isfinite(tbl.log_dxi[l])  # positive-bracket construction
    return -math.exp(tbl.log_neg_dxk[l] - tbl.log_dxi[l])


def _symmetric3(arr, name: str) -> np.ndarray:
    a = np.asarray(arr, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"{name} must be a 3x3 tensor, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    scale = np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > 1e-12 * max(scale, 1.0):
        raise ValueError(f"{name} must be symmetric")
    out = 0.5 * (a + a.T)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DipoleTensors:
    """Static dipole polarizability tensors, Cartesian, z along the displacement.

    Only the trace and the uniaxial combination 2 a_zz - a_xx - a_yy
    enter the dipole-order energy.
    """

    alpha_e: np.ndarray
    alpha_m: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha_e", _symmetric3(self.alpha_e, "alpha_e"))
        object.__setattr__(self, "alpha_m", _symmetric3(self.alpha_m, "alpha_m"))

    def _pick(self, pol: str) -> np.ndarray:
        if pol == "E":
            return self.alpha_e
        if pol == "M":
            return self.alpha_m
        raise ValueError(f"polarization must be 'E' or 'M', got {pol!r}")

    def trace(self, pol: str) -> float:
        return float(np.trace(self._pick(pol)))

    def uniaxial(self, pol: str) -> float:
        """2 a_zz - a_xx - a_yy, the combination weighting the g coefficient."""
        a = self._pick(pol)
        return float(2.0 * a[2, 2] - a[0, 0] - a[1, 1])


@dataclass(frozen=True)
class CpCoefficients:
    """Coefficient functions at one displacement fraction xi.

    f/g are the dipole-order trace and orientation weights, h1/h2 the
    subtracted dipole and quadrupole weights of the spherically
    symmetric form; f0 holds the concentric value f(0) whose difference
    with f enters the energy.  l_used and tail record the adaptive
    multipole cutoff and the last-term fraction that stopped it; nodes
    is the frequency-quadrature size.
    """

    xi: float
    f_e: float
    f_m: float
    g_e: float
    g_m: float
    h1_e: float
    h1_m: float
    h2_e: float
    h2_m: float
    f0_e: float
    f0_m: float
    l_used: int
    tail: float
    nodes: int


def _node_brackets(x: float, xi: float, L: int) -> np.ndarray:
    """Per-multipole brackets at one frequency node, shape (8, L).

    Rows are (f_E, f_M, g_E, g_M, h1_E, h1_M, h2_E, h2_M) before the
    x^3 (x^5 for h2) weight and the common exp(-2x(1-xi)) factor.  All
    products are formed as exp(sum of logs), never as a ratio of huge
    Bessel values.
    """
    z = x * xi
    tx = scaled_bessel(L, x)
    tz = scaled_bessel(L + 2, z)
    l = np.arange(1, L + 1, dtype=float)

    # log zeta_l + 2x: O(l log l - l log x) individually, bounded in sums
    lzm = tx.log_k[1:] - tx.log_i[1:] + 2.0 * x
    lze = tx.log_neg_dxk[1:] - tx.log_dxi[1:] + 2.0 * x  # log|zeta^E|, sign -

    liz = tz.log_i - z  # log of exp(-z) i_nu(z), nu = 0..L+2
    a = liz[0:L]  # nu = l-1
    b = liz[2 : L + 2]  # nu = l+1
    c0 = liz[1 : L + 1]  # nu = l
    ap2 = liz[3 : L + 3]  # nu = l+2
    # nu = l-2; the l = 1 slot multiplies coefficients that are exactly
    # zero there, so any finite placeholder works
    am2 = np.concatenate(([0.0], liz[0 : L - 1]))

    xz2 = x * x * xi * xi
    two1 = 2.0 * l + 1.0

    t1m = np.exp(lzm + 2.0 * a)
    t2m = np.exp(lzm + 2.0 * b)
    t1e = np.exp(lze + 2.0 * a)
    t2e = np.exp(lze + 2.0 * b)
    # (i_{l-1} - i_{l+1})^2 = i_{l-1}^2 (1 - exp(b - a))^2, b < a
    dsq = np.expm1(b - a) ** 2
    tdm = t1m * dsq
    tde = t1e * dsq
    txm = np.exp(lzm + a + b)
    txe = np.exp(lze + a + b)

    f_e = -0.5 * ((l + 1.0) * t1e + l * t2e) - xz2 / (2.0 * two1) * tdm
    f_m = 0.5 * ((l + 1.0) * t1m + l * t2m) + xz2 / (2.0 * two1) * tde

    orb_e = 0.5 * (l * l - 1.0) * t1e + 0.5 * l * (l + 2.0) * t2e - 3.0 * l * (l + 1.0) * txe
    orb_m = 0.5 * (l * l - 1.0) * t1m + 0.5 * l * (l + 2.0) * t2m - 3.0 * l * (l + 1.0) * txm
    g_e = -orb_e / (2.0 * two1) + xz2 / (4.0 * two1) * tdm
    g_m = orb_m / (2.0 * two1) - xz2 / (4.0 * two1) * tde

    h1_e = -((l + 1.0) * t1e + l * t2e) - xz2 / two1 * tdm
    h1_m = (l + 1.0) * t1m + l * t2m + xz2 / two1 * tde

    g4 = (2.0 * l - 1.0) * (2.0 * l + 3.0)
    qa = (l - 1.0) * (l + 1.0) * (2.0 * l + 3.0)
    qb = l * (l + 2.0) * (2.0 * l - 1.0)
    qc = 3.0 * l + 1.5
    quad_m = (qa * np.exp(lzm + 2.0 * am2) + qb * np.exp(lzm + 2.0 * ap2)
              + qc * np.exp(lzm + 2.0 * c0)) / (6.0 * g4)
    quad_e = (qa * np.exp(lze + 2.0 * am2) + qb * np.exp(lze + 2.0 * ap2)
              + qc * np.exp(lze + 2.0 * c0)) / (6.0 * g4)

    c1 = (1.0 - l) / (2.0 * l - 1.0)
    c2 = -(2.0 * l - 1.0) / g4
    c3 = (l + 2.0) / (2.0 * l + 3.0)
    d1 = 0.5 / (2.0 * l - 1.0)
    d2 = -(2.0 * l + 1.0) / g4
    d3 = 0.5 / (2.0 * l + 3.0)
    he = 0.5 * lze
    hm = 0.5 * lzm
    s1e = c1 * np.exp(he + am2) + c2 * np.exp(he + c0) + c3 * np.exp(he + ap2)
    s2e = d1 * np.exp(he + am2) + d2 * np.exp(he + c0) + d3 * np.exp(he + ap2)
    s1m = c1 * np.exp(hm + am2) + c2 * np.exp(hm + c0) + c3 * np.exp(hm + ap2)
    s2m = d1 * np.exp(hm + am2) + d2 * np.exp(hm + c0) + d3 * np.exp(hm + ap2)
    ll2 = (l - 1.0) * (l + 2.0)
    h2_m = quad_m + xz2 / (3.0 * two1) * (0.25 * s1e ** 2 + ll2 * s2e ** 2)
    h2_e = -quad_e - xz2 / (3.0 * two1) * (0.25 * s1m ** 2 + ll2 * s2m ** 2)

    return np.vstack((f_e, f_m, g_e, g_m, h1_e, h1_m, h2_e, h2_m))


def _subtraction_brackets(x: float, xi: float, L: int) -> np.ndarray:
    """Concentric subtractions of h1 and h2, same scaling as _node_brackets."""
    z = x * xi
    tx = scaled_bessel(max(L, 2), x)
    zm1 = math.exp(tx.log_k[1] - tx.log_i[1] + 2.0 * x - 2.0 * z)
    ze1 = -math.exp(tx.log_neg_dxk[1] - tx.log_dxi[1] + 2.0 * x - 2.0 * z)
    zm2 = math.exp(tx.log_k[2] - tx.log_i[2] + 2.0 * x - 2.0 * z)
    ze2 = -math.exp(tx.log_neg_dxk[2] - tx.log_dxi[2] + 2.0 * x - 2.0 * z)
    out = np.zeros(8)
    out[4] = 2.0 * ze1  # h1_E
    out[5] = 2.0 * zm1  # h1_M
    out[6] = ze2 / 6.0  # h2_E
    out[7] = zm2 / 6.0  # h2_M
    return out


def _pick_cutoff(xi: float, l_cut: int, probes: tuple[float, ...]) -> tuple[int, float]:
    """Smallest L whose last term is below _TAIL_TOL of every running sum.

    Checked at the probe frequencies, where the integrand weight peaks;
    the geometric l-tail ratio xi^2 is frequency-independent above the
    turning point, so the same cutoff serves all nodes.
    """
    need = 2
    tail = 0.0
    for x in probes:
        terms = _node_brackets(x, xi, l_cut)
        sums = np.cumsum(terms, axis=1)
        floor = np.maximum(np.max(np.abs(sums), axis=1, keepdims=True), 1e-300)
        ratio = np.max(np.abs(terms) / floor, axis=0)  # worst series per l
        ok = np.nonzero(ratio < _TAIL_TOL)[0]
        if len(ok) == 0:
            raise ConvergenceError(
                f"multipole sum tail {ratio[-1]:.2e} above {_TAIL_TOL:.0e} at "
                f"l_cut = {l_cut}, xi = {xi}; increase l_cut "
                f"(the tail shrinks like xi^(2l))",
                last=float(ratio[-1]),
            )
        need = max(need, int(ok[0]) + 1)
        tail = max(tail, float(ratio[min(need, l_cut) - 1]))
    return need, tail


def cp_coefficients(
    xi: float,
    l_cut: int = 100,
    quad: QuadratureSpec = QuadratureSpec(),
) -> CpCoefficients:
    """Evaluate all coefficient functions at displacement fraction xi.

    l_cut caps the adaptive multipole cutoff; the actual cutoff stops
    where the last term falls below 1e-10 of the running sum at the
    peak frequencies, and a ConvergenceError reports the achieved tail
    if the cap is too small.  quad.s overrides the default frequency
    mapping scale 1/(1-xi).
    """
    if not (0.0 <= xi < 1.0):
        raise ValueError(f"xi must lie in [0, 1), got {xi!r}")
    if l_cut < 2:
        raise ValueError(f"l_cut must be >= 2, got {l_cut}")
    if l_cut + 2 > MAX_ORDER:
        raise ValueError(
            f"l_cut = {l_cut} needs Bessel orders beyond the table cap {MAX_ORDER}"
        )
    s = quad.s if quad.s is not None else 1.0 / (1.0 - xi)
    xs, ws = quad.mapped(s)

    # concentric reference: only the dipole channel survives at xi = 0
    f0_e = 0.0
    f0_m = 0.0
    for x, w in zip(xs, ws):
        tx = scaled_bessel(1, x)
        f0_m += w * x ** 3 * math.exp(tx.log_k[1] - tx.log_i[1])
        f0_e -= w * x ** 3 * math.exp(tx.log_neg_dxk[1] - tx.log_dxi[1])

    if xi == 0.0:
        return CpCoefficients(
            xi=0.0, f_e=f0_e, f_m=f0_m, g_e=0.0, g_m=0.0,
            h1_e=0.0, h1_m=0.0, h2_e=0.0, h2_m=0.0,
            f0_e=f0_e, f0_m=f0_m, l_used=1, tail=0.0, nodes=quad.nodes,
        )

    # x^3 and x^5 weights peak at 1.5/(1-xi) and 2.5/(1-xi)
    probes = (1.5 / (1.0 - xi), 2.5 / (1.0 - xi))
    L, tail = _pick_cutoff(xi, l_cut, probes)

    acc = np.zeros(8)
    for x, w in zip(xs, ws):
        bracket = _node_brackets(x, xi, L).sum(axis=1) - _subtraction_brackets(x, xi, L)
        damp = w * math.exp(-2.0 * x * (1.0 - xi))
        weight = damp * x ** 3 * np.ones(8)
        weight[6:] = damp * x ** 5
        acc += weight * bracket

    return CpCoefficients(
        xi=xi, f_e=acc[0], f_m=acc[1], g_e=acc[2], g_m=acc[3],
        h1_e=acc[4], h1_m=acc[5], h2_e=acc[6], h2_m=acc[7],
        f0_e=f0_e, f0_m=f0_m, l_used=L, tail=tail, nodes=quad.nodes,
    )


def _check_xi_R(xi: float, R: float) -> None:
    if not (0.0 <= xi < 1.0):
        raise ValueError(f"xi must lie in [0, 1), got {xi!r}")
    if not (R > 0.0 and math.isfinite(R)):
        raise ValueError(f"cavity radius must be positive and finite, got {R!r}")


def cp_energy_tensor(
    tensors: DipoleTensors,
    xi: float,
    R: float,
    l_cut: int = 100,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Dipole-order interaction energy of an anisotropic object.

    Combines the subtracted trace weight f(xi) - f(0) with the
    orientation weight g(xi) for both polarizations; zero at xi = 0 for
    any tensors.  Returns energy in units of hbar*c (R in length units).
    """
    _check_xi_R(xi, R)
    c = cp_coefficients(xi, l_cut=l_cut, quad=quad)
    bracket = (
        (c.f_e - c.f0_e) * tensors.trace("E")
        + c.g_e * tensors.uniaxial("E")
        + (c.f_m - c.f0_m) * tensors.trace("M")
        + c.g_m * tensors.uniaxial("M")
    )
    return bracket / (3.0 * math.pi * R ** 4)


def cp_energy_spherical(
    pols: PolarizabilitySet,
    xi: float,
    R: float,
    l_cut: int = 100,
    quad: QuadratureSpec = QuadratureSpec(),
) -> float:
    """Interaction energy of a spherically symmetric object through l = 2.

    Uses the dipole weights h1 and, when the set carries quadrupole
    entries, the l = 2 weights h2; multipoles above l = 2 are outside
    this expansion order and are ignored.
    """
    _check_xi_R(xi, R)
    c = cp_coefficients(xi, l_cut=l_cut, quad=quad)
    bracket = (
        c.h1_m * pols.alpha("M", 1) / R ** 3
        + c.h1_e * pols.alpha("E", 1) / R ** 3
    )
    if pols.l_cut >= 2:
        bracket += (
            c.h2_m * pols.alpha("M", 2) / R ** 5
            + c.h2_e * pols.alpha("E", 2) / R ** 5
        )
    return bracket / (2.0 * math.pi * R)
