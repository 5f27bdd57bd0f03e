"""Determinant assembly, quadrature, and cutoff extrapolation checks.

The heavyweight reference here is a dense assembly of single m blocks
in mpmath: Bessel functions from mpmath, 3j symbols from the rational
closed sum, T elements from derivative identities, and the round trip
multiplied out as literal matrices.  Nothing of the package's log-domain
plumbing is reused, so agreement at 1e-11 checks signs, orderings,
similarity transforms and exponent folding all at once.
"""

import math
from functools import lru_cache

import mpmath as mp
import numpy as np
import pytest

from cavimir.energy import (
    Geometry,
    QuadratureSpec,
    casimir_energy,
    energy_ladder,
    extrapolate_lmax,
    logdet_integrand,
    round_trip_block,
)
from cavimir.errors import ConvergenceError, FitQualityWarning
from cavimir.scattering import t_cavity, t_inner, MaterialResponse
from oracle3j import racah_3j

mp.mp.dps = 40


@pytest.fixture(autouse=True)
def _pin_precision():
    # module imports run before any test, so the import-time setting above
    # can be overwritten by a later module; re-pin per test
    old = mp.mp.dps
    mp.mp.dps = 40
    yield
    mp.mp.dps = old

PEC = MaterialResponse.perfect_conductor()


# ---------------------------------------------------------------- oracles


@lru_cache(maxsize=None)
def mp_i(l, x):
    return mp.sqrt(mp.pi / (2 * x)) * mp.besseli(l + mp.mpf(1) / 2, x)


@lru_cache(maxsize=None)
def mp_k(l, x):
    return mp.sqrt(2 / (mp.pi * x)) * mp.besselk(l + mp.mpf(1) / 2, x)


def mp_dxi(l, x):
    return x * mp_i(l - 1, x) - l * mp_i(l, x)


def mp_dxk(l, x):
    return -x * mp_k(l - 1, x) - l * mp_k(l, x)


def mp_t(l, pol, x, cavity):
    if pol == "M":
        rat = mp_i(l, x) / mp_k(l, x)
    else:
        rat = mp_dxi(l, x) / mp_dxk(l, x)
    return -1 / rat if cavity else -rat


def mp_v_ie(m, l_max, arg):
    """Complex translation m-block straight from the l''-sum."""
    l_min = max(1, abs(m))
    ls = list(range(l_min, l_max + 1))
    n = len(ls)
    v = mp.matrix(2 * n, 2 * n)
    for ip, lp in enumerate(ls):
        for i, l in enumerate(ls):
            sa = mp.mpf(0)
            sb = mp.mpf(0)
            for lpp in range(abs(l - lp), l + lp + 1):
                w0 = racah_3j(l, lp, lpp, 0, 0, 0)
                if w0 == 0.0:
                    continue
                wm = racah_3j(l, lp, lpp, m, -m, 0)
                base = mp.mpf(w0) * mp.mpf(wm) * (2 * lpp + 1)
                base *= (-1) ** lpp * mp_i(lpp, arg)
                sa += base * mp.mpf(l * (l + 1) + lp * (lp + 1) - lpp * (lpp + 1)) / 2
                sb += base
            pref = (-1) ** m * mp.sqrt(mp.mpf((2 * l + 1) * (2 * lp + 1)))
            den = mp.sqrt(mp.mpf(l * (l + 1) * lp * (lp + 1)))
            a = pref * sa / den
            g = -mp.mpc(0, 1) * arg * m * pref * sb / den
            v[ip, i] = a
            v[n + ip, n + i] = a
            v[ip, n + i] = g
            v[n + ip, i] = -g
    return v


def mp_v_ei(v, n):
    w = mp.matrix(2 * n, 2 * n)
    for r in range(2 * n):
        for c in range(2 * n):
            s = (1 if r < n else -1) * (1 if c < n else -1)
            w[r, c] = s * mp.conj(v[c, r])
    return w


def mp_block_n(m, z, geom, l_max):
    """Dense N_m = T_e V_ei T_i V_ie, channels E-major then M, l minor."""
    l_min = max(1, abs(m))
    ls = list(range(l_min, l_max + 1))
    n = len(ls)
    zr = z * mp.mpf(geom.r) / mp.mpf(geom.R)
    arg = z * mp.mpf(geom.a) / mp.mpf(geom.R)
    ti = [mp_t(l, "E", zr, False) for l in ls] + [mp_t(l, "M", zr, False) for l in ls]
    te = [mp_t(l, "E", z, True) for l in ls] + [mp_t(l, "M", z, True) for l in ls]
    v = mp_v_ie(m, l_max, arg)
    vei = mp_v_ei(v, n)
    nmat = mp.matrix(2 * n, 2 * n)
    for r in range(2 * n):
        for c in range(2 * n):
            acc = mp.mpc(0)
            for g in range(2 * n):
                acc += vei[r, g] * ti[g] * v[g, c]
            nmat[r, c] = te[r] * acc
    return nmat, ti, te


def mp_block_cm(m, z, geom, l_max):
    """Concentric minus displaced log det of one m block, in mpmath."""
    nmat, ti, te = mp_block_n(m, z, geom, l_max)
    dim = nmat.rows
    det = mp.det(mp.eye(dim) - nmat)
    assert abs(mp.im(det)) < mp.mpf(10) ** (-25) * abs(det)
    conc = mp.mpf(0)
    for ch in range(dim):
        conc += mp.log(1 - te[ch] * ti[ch])
    return conc - mp.log(mp.re(det))


GEOM_SPEC = Geometry(r=0.5, R=1.0, a=0.25)


def test_round_trip_block_matches_dense_oracle_m0():
    blk = round_trip_block(0, 1.0, GEOM_SPEC, 2)
    ref, _, _ = mp_block_n(0, mp.mpf(1), GEOM_SPEC, 2)
    scale = max(abs(complex(ref[r, c])) for r in range(4) for c in range(4))
    for r in range(4):
        for c in range(4):
            want = complex(ref[r, c])
            got = blk.entries[r, c]
            assert abs(got - want) < 1e-11 * scale, (r, c, got, want)


@pytest.mark.parametrize("m", [1, 2, -1])
def test_round_trip_block_matches_dense_oracle_higher_m(m):
    blk = round_trip_block(m, 0.8, GEOM_SPEC, 3)
    ref, _, _ = mp_block_n(m, mp.mpf(4) / 5, GEOM_SPEC, 3)
    dim = blk.entries.shape[0]
    assert dim == ref.rows
    scale = max(abs(complex(ref[r, c])) for r in range(dim) for c in range(dim))
    for r in range(dim):
        for c in range(dim):
            want = complex(ref[r, c])
            got = blk.entries[r, c]
            assert abs(got - want) < 1e-11 * scale, (r, c, got, want)


def test_integrand_matches_dense_oracle():
    z = 1.3
    want = mp_block_cm(0, mp.mpf("1.3"), GEOM_SPEC, 2)
    for m in (1, 2):
        want += 2 * mp_block_cm(m, mp.mpf("1.3"), GEOM_SPEC, 2)
    got = logdet_integrand(z, GEOM_SPEC, 2)
    assert abs(got - float(want)) < 1e-12 * abs(float(want))


def test_concentric_block_is_diagonal_t_products():
    geom = Geometry(r=0.5, R=1.0, a=0.0)
    z = 0.9
    for m in (0, 1):
        blk = round_trip_block(m, z, geom, 4)
        ls = range(max(1, m), 5)
        diag = [t_cavity(l, p, z, PEC) * t_inner(l, p, z * 0.5, PEC)
                for p in ("E", "M") for l in ls]
        off = blk.entries - np.diag(diag)
        assert np.max(np.abs(np.diag(blk.entries) - np.array(diag))) < 1e-13 * np.max(
            np.abs(diag)
        )
        assert np.max(np.abs(off - np.diag(np.diag(off)))) == 0.0


def test_integrand_vanishes_concentric():
    geom = Geometry(r=0.5, R=1.0, a=0.0)
    for z in (0.1, 1.0, 7.3):
        assert logdet_integrand(z, geom, 6) == 0.0


def test_integrand_positive():
    geom = Geometry.from_x(0.5, 1.0, 0.5)
    for z in (0.5, 2.0, 5.0):
        assert logdet_integrand(z, geom, 12) > 0.0


def test_block_eigenvalues_inside_unit_interval():
    geom = Geometry.from_x(0.5, 1.0, 0.5)
    for m in (0, 1, 3):
        blk = round_trip_block(m, 2.0, geom, 10)
        lam = np.linalg.eigvals(blk.entries)
        assert np.max(np.abs(lam.imag)) < 1e-12
        assert np.all(lam.real > 0.0)
        assert np.all(lam.real < 1.0)


def test_plus_minus_m_same_logdet():
    geom = Geometry(r=0.4, R=1.0, a=0.3)
    for m in (1, 2, 4):
        lds = []
        for mm in (m, -m):
            blk = round_trip_block(mm, 1.1, geom, 6)
            sign, ld = np.linalg.slogdet(np.eye(blk.entries.shape[0]) - blk.entries)
            assert abs(np.angle(sign)) < 1e-10
            lds.append(ld)
        assert lds[0] == pytest.approx(lds[1], rel=1e-13)


def test_per_m_blocks_equal_full_dense_logdet():
    """The all-m operator assembled dense must factor over m blocks."""
    geom = Geometry(r=0.45, R=1.0, a=0.2)
    z, l_max = 1.0, 3
    chans = [(l, m, p) for p in ("E", "M") for l in range(1, l_max + 1)
             for m in range(-l, l + 1)]
    pos = {c: i for i, c in enumerate(chans)}
    full = np.zeros((len(chans), len(chans)), dtype=complex)
    per_m_sum = 0.0
    for m in range(-l_max, l_max + 1):
        blk = round_trip_block(m, z, geom, l_max)
        cs = blk.channels()
        for a_i, ca in enumerate(cs):
            for b_i, cb in enumerate(cs):
                full[pos[(ca.l, m, ca.pol)], pos[(cb.l, m, cb.pol)]] = blk.entries[
                    a_i, b_i
                ]
        sign, ld = np.linalg.slogdet(np.eye(len(cs)) - blk.entries)
        assert abs(np.angle(sign)) < 1e-11
        per_m_sum += ld
    sign, ld_full = np.linalg.slogdet(np.eye(len(chans)) - full)
    assert abs(np.angle(sign)) < 1e-11
    assert per_m_sum == pytest.approx(ld_full, rel=1e-11)


def test_integrand_agrees_with_complex_route():
    """Production real-basis path vs complex entries plus T products."""
    geom = Geometry(r=0.5, R=1.0, a=0.3)
    l_max = 5
    for z in (0.7, 2.4):
        total = 0.0
        for m in range(0, l_max + 1):
            blk = round_trip_block(m, z, geom, l_max)
            dim = blk.entries.shape[0]
            sign, ld = np.linalg.slogdet(np.eye(dim) - blk.entries)
            assert abs(np.angle(sign)) < 1e-10
            conc = 0.0
            for ch in blk.channels():
                prod = t_cavity(ch.l, ch.pol, z, PEC) * t_inner(
                    ch.l, ch.pol, z * 0.5, PEC
                )
                conc += math.log1p(-prod)
            cm = conc - ld
            total += cm if m == 0 else 2.0 * cm
        assert logdet_integrand(z, geom, l_max) == pytest.approx(total, rel=1e-10)


def test_integrand_matches_trace_series_when_weakly_coupled():
    geom = Geometry(r=0.3, R=1.0, a=0.14)
    l_max, z = 4, 1.0
    approx = 0.0
    bound = 0.0
    for m in range(0, l_max + 1):
        blk = round_trip_block(m, z, geom, l_max)
        nm = blk.entries
        dim = nm.shape[0]
        lam = np.linalg.eigvals(nm)
        rho = np.max(np.abs(lam))
        assert rho < 0.1  # premise of the expansion
        conc = 0.0
        for ch in blk.channels():
            prod = t_cavity(ch.l, ch.pol, z, PEC) * t_inner(ch.l, ch.pol, z * 0.3, PEC)
            conc += math.log1p(-prod)
        tr = 0.0
        pw = np.eye(dim, dtype=complex)
        for p in range(1, 4):
            pw = pw @ nm
            tr += np.trace(pw).real / p
        cm = conc + tr
        w = 1.0 if m == 0 else 2.0
        approx += w * cm
        bound += w * dim * rho**4 / (4.0 * (1.0 - rho))
    got = logdet_integrand(z, geom, l_max)
    assert abs(got - approx) <= bound


# ------------------------------------------------------- geometry, grid


def test_geometry_validation():
    with pytest.raises(ValueError):
        Geometry(r=1.0, R=1.0, a=0.0)
    with pytest.raises(ValueError):
        Geometry(r=-0.1, R=1.0, a=0.0)
    with pytest.raises(ValueError):
        Geometry(r=0.4, R=1.0, a=0.6)
    with pytest.raises(ValueError):
        Geometry(r=0.4, R=1.0, a=-0.01)
    with pytest.raises(ValueError):
        Geometry.from_x(0.5, 1.0, 1.0)


def test_geometry_derived_quantities():
    g = Geometry(r=0.5, R=2.0, a=0.75)
    assert g.x == pytest.approx(0.5)
    assert g.d == pytest.approx(0.75)
    assert g.xi == pytest.approx(0.375)
    g2 = Geometry.from_x(0.5, 2.0, 0.5)
    assert g2.a == pytest.approx(0.75)


def test_quadrature_validation():
    with pytest.raises(ValueError):
        QuadratureSpec(nodes=7)
    with pytest.raises(ValueError):
        QuadratureSpec(nodes=16, s=-1.0)
    with pytest.raises(ValueError):
        QuadratureSpec(nodes=16, scheme="trapezoid")


def test_quadrature_integrates_exponentials():
    quad = QuadratureSpec(nodes=64, s=1.0)
    geom = Geometry(r=0.5, R=1.0, a=0.1)
    z, w = quad.grid(geom)
    assert np.all(z > 0) and np.all(np.diff(z) > 0)
    assert np.sum(w * np.exp(-z)) == pytest.approx(1.0, rel=1e-12)
    assert np.sum(w * z * np.exp(-z)) == pytest.approx(1.0, rel=1e-12)
    assert np.sum(w * z**3 * np.exp(-2.0 * z)) == pytest.approx(6.0 / 16.0, rel=1e-12)


def test_quadrature_default_scale_tracks_gap():
    geom = Geometry(r=0.5, R=1.0, a=0.25)  # d = 0.25 -> s = 2
    explicit = QuadratureSpec(nodes=16, s=1.0 / (2.0 * geom.d)).grid(geom)
    default = QuadratureSpec(nodes=16).grid(geom)
    assert np.array_equal(explicit[0], default[0])
    assert np.array_equal(explicit[1], default[1])


# ------------------------------------------------------------- energies


def test_energy_zero_at_concentric():
    geom = Geometry(r=0.5, R=1.0, a=0.0)
    assert casimir_energy(geom, 6, QuadratureSpec(nodes=8)) == 0.0


def test_energy_negative_and_node_doubling_stable():
    geom = Geometry.from_x(0.5, 1.0, 0.7)
    e1 = casimir_energy(geom, 10, QuadratureSpec(nodes=24))
    e2 = casimir_energy(geom, 10, QuadratureSpec(nodes=40))
    assert e1 < 0.0
    assert e1 == pytest.approx(e2, rel=1e-7)


def test_energy_strictly_decreasing_in_displacement():
    energies = []
    for x in np.arange(0.1, 0.95, 0.1):
        geom = Geometry.from_x(0.5, 1.0, x)
        energies.append(
            casimir_energy(geom, 8, QuadratureSpec(nodes=16), rel_tol=1e-7)
        )
    energies = np.array(energies)
    assert np.all(energies < 0.0)
    assert np.all(np.diff(energies) < 0.0)


def test_energy_convergence_error_carries_estimates():
    geom = Geometry.from_x(0.5, 1.0, 0.5)
    with pytest.raises(ConvergenceError) as exc:
        casimir_energy(
            geom, 6, QuadratureSpec(nodes=8), rel_tol=0.0, max_refinements=1
        )
    err = exc.value
    assert isinstance(err.last, float) and isinstance(err.previous, float)
    assert err.last != err.previous
    assert err.last == pytest.approx(err.previous, rel=2e-2)


def test_energy_workers_reproduce_serial_result():
    geom = Geometry.from_x(0.5, 1.0, 0.5)
    quad = QuadratureSpec(nodes=8)
    serial = casimir_energy(geom, 3, quad, rel_tol=1.0, max_refinements=1)
    parallel = casimir_energy(geom, 3, quad, rel_tol=1.0, max_refinements=1, workers=2)
    assert serial == parallel


def test_energy_ladder_validates_ordering():
    geom = Geometry.from_x(0.5, 1.0, 0.5)
    with pytest.raises(ValueError):
        energy_ladder(geom, [4, 4, 6])


def test_l_max_cap():
    geom = Geometry.from_x(0.5, 1.0, 0.5)
    with pytest.raises(ValueError):
        logdet_integrand(1.0, geom, 81)
    with pytest.raises(ValueError):
        casimir_energy(geom, 0)


# -------------------------------------------------------- extrapolation


def _synthetic(lv, e_inf, alpha, beta):
    return [(int(l), e_inf - alpha * math.exp(-beta * l)) for l in lv]


def test_extrapolation_exact_recovery():
    samples = _synthetic(range(10, 50, 5), -1.0, 0.3, 0.2)
    fit = extrapolate_lmax(samples)
    assert fit.e_infinity == pytest.approx(-1.0, abs=1e-9)
    assert fit.alpha == pytest.approx(0.3, abs=1e-8)
    assert fit.beta == pytest.approx(0.2, abs=1e-8)
    assert np.all(fit.stderr < 1e-8)


def test_extrapolation_with_noise_within_three_sigma():
    rng = np.random.default_rng(7)
    samples = [
        (l, e + rng.normal(0.0, 1e-6))
        for l, e in _synthetic(range(10, 50, 5), -1.0, 0.3, 0.2)
    ]
    fit = extrapolate_lmax(samples)
    assert fit.beta > 0.0
    assert abs(fit.e_infinity + 1.0) < 3.0 * fit.stderr[0] + 1e-12
    assert fit.stderr[0] < 1e-4


def test_extrapolation_warns_on_nonmonotone_ladder():
    samples = [(10, -1.30), (15, -1.10), (20, -1.20), (25, -1.15), (30, -1.17)]
    with pytest.warns(FitQualityWarning):
        extrapolate_lmax(samples)


def test_extrapolation_validation():
    with pytest.raises(ValueError):
        extrapolate_lmax(_synthetic([10, 15, 20], -1.0, 0.3, 0.2))
    with pytest.raises(ValueError):
        extrapolate_lmax(_synthetic([10, 15, 15, 20], -1.0, 0.3, 0.2))


def test_extrapolation_on_cheap_physical_ladder():
    geom = Geometry.from_x(0.5, 1.0, 0.5)
    quad = QuadratureSpec(nodes=24)
    samples = energy_ladder(geom, [6, 8, 10, 12, 14, 16], quad)
    fit = extrapolate_lmax(samples)
    assert math.isfinite(fit.e_infinity) and fit.e_infinity < 0.0
    assert fit.beta > 0.0
    e_first = dict(samples)[6]
    e_last = dict(samples)[16]
    assert abs(e_last - fit.e_infinity) < abs(e_first - fit.e_infinity)
