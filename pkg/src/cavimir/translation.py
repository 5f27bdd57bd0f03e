"""Regular-wave translation matrices for a displacement along z.

With the displacement axis chosen as z the translation operator is
diagonal in the azimuthal index m, so everything here works on one
m-block at a time.  Within a block the channel layout is polarization
major (all E, then all M) and l minor, l = max(1,|m|)..l_max.

The same-polarization entries are a finite l''-sum of 3j pairs against
i_{l''}(arg); the cross-polarization entries reduce on the z-axis to a
single B-coefficient times -i*arg*m.  The EE/MM sub-blocks are real and
the EM/ME ones purely imaginary, so the block is built internally as a
real symmetric pair (A, Gamma) scaled by e^{-arg}; the complex interface
multiplies the scale back in.

The per-m 3j coupling tensors are independent of arg and cached, so
sweeping frequency nodes costs one vector of Bessel values and two
einsum contractions per node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .specfun import MAX_ORDER, scaled_bessel, wigner3j_family

__all__ = ["ChannelIndex", "BlockMatrix", "b_coefficient", "v_block", "v_ei_from_v_ie"]

# i_{l''} needs order up to 2 l_max, and the Bessel table is capped.
L_MAX_BLOCK = MAX_ORDER // 2

# Largest arg for which the unscaled complex interface stays inside
# double range (entries carry e^{+arg}).
_ARG_UNSCALED_MAX = 650.0


@dataclass(frozen=True)
class ChannelIndex:
    """One spherical-wave channel (l, m, pol)."""

    l: int
    m: int
    pol: str

    def __post_init__(self):
        if self.pol not in ("E", "M"):
            raise ValueError(f"polarization must be 'E' or 'M', got {self.pol!r}")
        if self.l < 1 or abs(self.m) > self.l:
            raise ValueError(f"need l >= 1 and |m| <= l, got l={self.l}, m={self.m}")


@dataclass(frozen=True)
class BlockMatrix:
    """Dense translation block at fixed m over channels l = max(1,|m|)..l_max."""

    m: int
    l_max: int
    entries: np.ndarray

    @property
    def l_min(self) -> int:
        return max(1, abs(self.m))

    @property
    def n_l(self) -> int:
        return self.l_max - self.l_min + 1

    def channels(self) -> list[ChannelIndex]:
        ls = range(self.l_min, self.l_max + 1)
        return [ChannelIndex(l, self.m, pol) for pol in ("E", "M") for l in ls]


def _check_block_args(m: int, l_max: int) -> int:
    l_min = max(1, abs(m))
    if l_max < l_min:
        raise ValueError(f"l_max = {l_max} below the smallest channel l = {l_min}")
    if l_max > L_MAX_BLOCK:
        raise ValueError(
            f"l_max = {l_max} exceeds {L_MAX_BLOCK} (i_l'' table order cap)"
        )
    return l_min


@lru_cache(maxsize=8192)
def _coupling_tensors(m: int, l_max: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """arg-independent 3j weight tensors for one m-block.

    Returns (GA, GG, IDX), each (n_l, n_l, K): the A entry is
    einsum(GA * i_{IDX}) and the Gamma entry -arg*m*einsum(GG * i_{IDX}),
    with IDX[i,j,k] = |l-l'| + 2k (odd l'' drop out through the 000
    symbol) and zero weights padding the unused tail of k.
    """
    l_min = _check_block_args(m, l_max)
    n = l_max - l_min + 1
    kk = l_max + 1  # min(l,l') + 1 <= l_max + 1 surviving l'' values
    ga = np.zeros((n, n, kk))
    gg = np.zeros((n, n, kk))
    idx = np.zeros((n, n, kk), dtype=np.intp)
    for i, lp in enumerate(range(l_min, l_max + 1)):
        for j, l in enumerate(range(l_min, l_max + 1)):
            if l < lp:
                continue  # fill the lower triangle, mirror afterwards
            base = l - lp
            jmin0, f0 = wigner3j_family(l, lp, 0, 0)
            jminm, fm = wigner3j_family(l, lp, m, -m)
            nk = lp + 1  # J = base, base+2, ..., l+lp
            js = base + 2 * np.arange(nk)
            pair = (
                f0[js - jmin0]
                * fm[js - jminm]
                * (2.0 * js + 1.0)
                * (1.0 if base % 2 == 0 else -1.0)
                * (1.0 if m % 2 == 0 else -1.0)
            )
            norm = math.sqrt((2.0 * l + 1.0) * (2.0 * lp + 1.0))
            over = norm / math.sqrt(l * (l + 1.0) * lp * (lp + 1.0))
            ga[i, j, :nk] = pair * over * 0.5 * (
                l * (l + 1.0) + lp * (lp + 1.0) - js * (js + 1.0)
            )
            gg[i, j, :nk] = pair * over
            idx[i, j, :nk] = js
            if i != j:
                ga[j, i, :nk] = ga[i, j, :nk]
                gg[j, i, :nk] = gg[i, j, :nk]
                idx[j, i, :nk] = js
    for t in (ga, gg, idx):
        t.setflags(write=False)
    return ga, gg, idx


def v_block_real(m: int, l_max: int, arg: float) -> tuple[np.ndarray, np.ndarray]:
    """Real symmetric pair (A, Gamma) of the m-block, scaled by e^{-arg}.

    The physical block is e^{+arg} [[A, i*Gamma], [-i*Gamma, A]]; the
    similarity transform diag(1, i) makes it e^{+arg} [[A, G], [G, A]],
    which is what the determinant pipeline consumes.  At arg = 0 the
    block is the identity exactly.
    """
    l_min = _check_block_args(m, l_max)
    n = l_max - l_min + 1
    if arg < 0.0 or not math.isfinite(arg):
        raise ValueError(f"translation argument must be >= 0, got {arg!r}")
    if arg == 0.0:
        return np.eye(n), np.zeros((n, n))
    ga, gg, idx = _coupling_tensors(m, l_max)
    tab = scaled_bessel(2 * l_max, arg)
    iv = np.exp(tab.log_i - arg)
    bess = iv[idx]
    a = np.einsum("ijk,ijk->ij", ga, bess)
    gamma = (-arg * m) * np.einsum("ijk,ijk->ij", gg, bess)
    return a, gamma


def b_coefficient(lp: int, l: int, m: int, arg: float) -> float:
    """Scalar translation coefficient B_{l'm,lm} for displacement along z.

    Other m' vanish on the z-axis, so only the m' = m element exists.
    """
    if l < 1 or lp < 1:
        raise ValueError("need l, l' >= 1")
    if abs(m) > min(l, lp):
        raise ValueError(f"|m| = {abs(m)} exceeds min(l, l') = {min(l, lp)}")
    if arg < 0.0 or not math.isfinite(arg):
        raise ValueError(f"translation argument must be >= 0, got {arg!r}")
    if arg == 0.0:
        return 1.0 if l == lp else 0.0
    jmin0, f0 = wigner3j_family(l, lp, 0, 0)
    jminm, fm = wigner3j_family(l, lp, m, -m)
    tab = scaled_bessel(l + lp, arg)
    js = abs(l - lp) + 2 * np.arange(min(l, lp) + 1)
    sgn = (1.0 if (l - lp) % 2 == 0 else -1.0) * (1.0 if m % 2 == 0 else -1.0)
    total = np.sum(
        (2.0 * js + 1.0) * f0[js - jmin0] * fm[js - jminm] * np.exp(tab.log_i[js])
    )
    return sgn * math.sqrt((2.0 * l + 1.0) * (2.0 * lp + 1.0)) * float(total)


def v_block(m: int, l_max: int, arg: float) -> BlockMatrix:
    """Complex m-block of the regular-to-regular translation matrix."""
    if arg > _ARG_UNSCALED_MAX:
        raise ValueError(
            f"arg = {arg} overflows the unscaled block; use v_block_real"
        )
    a, gamma = v_block_real(m, l_max, arg)
    scale = math.exp(arg)
    n = a.shape[0]
    data = np.zeros((2 * n, 2 * n), dtype=complex)
    data[:n, :n] = a * scale
    data[n:, n:] = a * scale
    data[:n, n:] = 1j * gamma * scale
    data[n:, :n] = -1j * gamma * scale
    data.setflags(write=False)
    return BlockMatrix(m=m, l_max=l_max, entries=data)


def v_ei_from_v_ie(block: BlockMatrix) -> BlockMatrix:
    """Conjugate block: sigma_3 V^dagger sigma_3 on the (E, M) grading."""
    n = block.n_l
    sig = np.ones(2 * n)
    sig[n:] = -1.0
    data = sig[:, None] * block.entries.conj().T * sig[None, :]
    data.setflags(write=False)
    return BlockMatrix(m=block.m, l_max=block.l_max, entries=data)
