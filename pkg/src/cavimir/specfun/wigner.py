"""Wigner 3j symbols by three-term recursion in the third angular index.

A whole family f(J) = 3j(j1, j2, J; m1, m2, -m1-m2) is generated at
once: ratio sweeps march inward from both ends of [jmin, jmax] while
the ratios stay below one in magnitude (the classically forbidden
tails, where this direction is the stable one), a three-term pass
bridges the oscillatory middle, and the result is fixed by the sum rule
sum_J (2J+1) f(J)^2 = 1 together with sign f(jmax) = (-1)^(j1-j2+m1+m2).
Families with a vanishing linear coefficient reduce to a two-term
parity chain and are handled exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


def _a_coef(j1: int, j2: int, m12: int, j: int) -> float:
    t1 = float(j * j - (j1 - j2) ** 2)
    t2 = float((j1 + j2 + 1) ** 2 - j * j)
    t3 = float(j * j - m12 * m12)
    p = t1 * t2 * t3
    return math.sqrt(p) if p > 0.0 else 0.0


def _b_coef(j1: int, j2: int, m1: int, m2: int, j: int) -> float:
    return float(
        (2 * j + 1)
        * ((m1 + m2) * (j1 * (j1 + 1) - j2 * (j2 + 1)) - (m1 - m2) * j * (j + 1))
    )


@lru_cache(maxsize=200_000)
def wigner3j_family(j1: int, j2: int, m1: int, m2: int):
    """All 3j(j1, j2, J; m1, m2, -m1-m2) for J = jmin..jmax.

    Returns (jmin, values) with values[J - jmin] the symbol; the array
    is cached and marked read-only.
    """
    if j1 < 0 or j2 < 0 or abs(m1) > j1 or abs(m2) > j2:
        raise ValueError("family requires |m1| <= j1 and |m2| <= j2, j's >= 0")
    jmin = max(abs(j1 - j2), abs(m1 + m2))
    jmax = j1 + j2
    nj = jmax - jmin + 1
    sgn_top = -1.0 if (j1 - j2 + m1 + m2) % 2 else 1.0

    if nj == 1:
        out = np.array([sgn_top / math.sqrt(2.0 * jmax + 1.0)])
        out.flags.writeable = False
        return jmin, out

    jj = np.arange(jmin, jmax + 1)
    X = np.array([j * _a_coef(j1, j2, m1 + m2, j + 1) for j in jj])
    Y = np.array([_b_coef(j1, j2, m1, m2, j) for j in jj])
    Z = np.array([(j + 1) * _a_coef(j1, j2, m1 + m2, j) for j in jj])

    u = np.zeros(nj)
    c1 = (m1 + m2) * (j1 * (j1 + 1) - j2 * (j2 + 1))
    c2 = m1 - m2

    if c1 == 0 and c2 == 0:
        # B vanishes identically: odd offsets are zero, even ones chain
        u[0] = 1.0
        for n in range(2, nj, 2):
            u[n] = -Z[n - 1] * u[n - 2] / X[n - 1]
    else:
        # backward ratio sweep; r[idx] = f(idx)/f(idx-1)
        r = np.zeros(nj)
        nr = 0
        idx = nj - 1
        while idx >= 1 and nr < nj - 2:
            denom = Y[idx] if idx == nj - 1 else Y[idx] + X[idx] * r[idx + 1]
            if denom == 0.0:
                break
            rv = -Z[idx] / denom
            if not math.isfinite(rv) or abs(rv) > 1.0:
                break
            r[idx] = rv
            nr += 1
            idx -= 1

        # forward seed and ratio sweep; s[n] = f(n)/f(n+1)
        if jmin == 0:
            # j1 == j2 and m2 == -m1 here; ratio from the closed J=0,1 pair
            p = 1
            u[0] = 1.0
            u[1] = m1 / math.sqrt(j1 * (j1 + 1.0))
        elif Y[0] != 0.0:
            s = np.zeros(nj)
            ns = 0
            sv = -X[0] / Y[0]
            while math.isfinite(sv) and abs(sv) <= 1.0 and ns < nj - 1 - nr:
                s[ns] = sv
                ns += 1
                denom = Y[ns] + Z[ns] * s[ns - 1]
                if denom == 0.0:
                    break
                sv = -X[ns] / denom
            p = ns
            u[p] = 1.0
            for n in range(p - 1, -1, -1):
                u[n] = u[n + 1] * s[n]
        else:
            p = 0
            u[0] = 1.0

        # three-term bridge across the oscillatory middle
        for n in range(p, nj - 1 - nr):
            um1 = u[n - 1] if n >= 1 else 0.0
            u[n + 1] = -(Y[n] * u[n] + Z[n] * um1) / X[n]

        # if the bridge landed on a near-zero, push one step further so
        # the ratio tail does not attach to a node of the oscillation
        while nr > 0:
            jn = nj - 1 - nr
            if jn < 1 or abs(u[jn]) >= 1e-5 * abs(u[jn - 1]):
                break
            u[jn + 1] = -(Y[jn] * u[jn] + Z[jn] * u[jn - 1]) / X[jn]
            nr -= 1

        for idx in range(nj - nr, nj):
            u[idx] = u[idx - 1] * r[idx]

    norm = math.sqrt(float(np.sum((2.0 * jj + 1.0) * u * u)))
    fac = sgn_top / (math.copysign(1.0, u[-1]) * norm)
    out = u * fac
    if not np.all(np.isfinite(out)):
        raise ArithmeticError(
            f"3j recursion lost finiteness for family ({j1},{j2};{m1},{m2})"
        )
    out.flags.writeable = False
    return jmin, out


@dataclass(frozen=True)
class ThreeJKey:
    """Translation-coupling 3j index set, evaluated as
    3j(l, lp, lpp; m, -mp, mp - m)."""

    l: int
    lp: int
    lpp: int
    m: int
    mp: int


def wigner3j(key: ThreeJKey) -> float:
    """Value of the 3j symbol; selection-rule violations give exactly 0."""
    j1, j2, j3 = key.l, key.lp, key.lpp
    m1, m2, m3 = key.m, -key.mp, key.mp - key.m
    if min(j1, j2, j3) < 0:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(m3) > j3:
        return 0.0
    if j3 < abs(j1 - j2) or j3 > j1 + j2:
        return 0.0
    jmin, fam = wigner3j_family(j1, j2, m1, m2)
    return float(fam[j3 - jmin])


def lambda_pm(l: int, m: int, sign: int) -> float:
    """Ladder factor sqrt((l -+ m)(l +- m + 1)); 0 outside |m| <= l."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if abs(m) > l:
        return 0.0
    prod = (l - sign * m) * (l + sign * m + 1)
    return math.sqrt(prod) if prod > 0 else 0.0
