"""Post-processing of solver sweeps.

Centered differentiation of ratio curves, conversion of the energy
ratio into a force ratio through the extended proximity-force
normalizers, the close-separation fit models for the energy and force
ratios, and the curvature-coefficient curve fit over the radius ratio.

All fits are linear least squares solved by column-scaled normal
equations; parameter errors come from the residual variance, so exact
model data reports zero error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pfa import PfaConfig, full_pfa_energy, full_pfa_force, theta1_fpfa

__all__ = [
    "CurveSample",
    "ForcePoint",
    "FitResult",
    "DEFAULT_ENERGY_WINDOW",
    "DEFAULT_FORCE_WINDOW",
    "central_difference",
    "force_from_ratio",
    "fit_energy_ansatz",
    "fit_force_ansatz",
    "fit_theta1_curve",
    "theta1_from_fit",
    "window",
]

# displacement-fraction windows for the close-separation fits; bounds are
# configuration, these are the defaults
DEFAULT_ENERGY_WINDOW = (0.825, 0.925)
DEFAULT_FORCE_WINDOW = (0.825, 0.9)

_COND_LIMIT = 1e12


@dataclass(frozen=True)
class CurveSample:
    """One point of a sampled curve: abscissa, value, optional 1-sigma error."""

    x: float
    value: float
    stderr: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "value", "stderr"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")
        if self.stderr < 0.0:
            raise ValueError(f"stderr must be >= 0, got {self.stderr}")


@dataclass(frozen=True)
class ForcePoint:
    """Force at one sweep point, as a ratio to the extended estimate and
    in absolute units hbar*c/R^2.  one_sided marks endpoint rows whose
    derivative used a one-sided stencil."""

    x: float
    ratio: float
    force: float
    stderr: float
    one_sided: bool


@dataclass(frozen=True)
class FitResult:
    """Linear least-squares estimate with per-parameter standard errors.

    covariance is the full parameter covariance (residual-variance
    scaled); residual_rms the root mean square misfit over the points.
    """

    names: tuple[str, ...]
    values: np.ndarray
    stderr: np.ndarray
    covariance: np.ndarray
    residual_rms: float
    n_points: int

    def value(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def error(self, name: str) -> float:
        return float(self.stderr[self.names.index(name)])

    def as_dict(self) -> dict:
        return {
            "names": list(self.names),
            "values": [float(v) for v in self.values],
            "stderr": [float(v) for v in self.stderr],
            "covariance": [[float(c) for c in row] for row in self.covariance],
            "residual_rms": float(self.residual_rms),
            "n_points": int(self.n_points),
        }


def _arrays(series: Sequence[CurveSample], min_points: int):
    if len(series) < min_points:
        raise ValueError(f"need at least {min_points} points, got {len(series)}")
    x = np.array([s.x for s in series], dtype=float)
    v = np.array([s.value for s in series], dtype=float)
    se = np.array([s.stderr for s in series], dtype=float)
    if np.any(np.diff(x) <= 0.0):
        raise ValueError("abscissae must be strictly increasing")
    return x, v, se


def _uniform_step(x: np.ndarray) -> float:
    steps = np.diff(x)
    dx = float(np.mean(steps))
    if np.max(np.abs(steps - dx)) > 1e-9 * dx:
        raise ValueError("abscissae must be uniformly spaced")
    return dx


def window(series: Sequence[CurveSample], lo: float, hi: float) -> list[CurveSample]:
    """Samples with lo <= x <= hi (half-open boundaries rounded in)."""
    tol = 1e-12 * max(1.0, abs(lo), abs(hi))
    return [s for s in series if lo - tol <= s.x <= hi + tol]


def central_difference(series: Sequence[CurveSample]) -> list[CurveSample]:
    """Second-order derivative estimates on a uniform grid.

    Interior points use the centered stencil, the two endpoints the
    three-point one-sided stencils of the same order; both are exact on
    quadratics.  Sample errors propagate in quadrature.
    """
    x, v, se = _arrays(series, 3)
    dx = _uniform_step(x)
    n = len(x)
    dv = np.empty(n)
    dse = np.empty(n)
    dv[1:-1] = (v[2:] - v[:-2]) / (2.0 * dx)
    dse[1:-1] = np.sqrt(se[2:] ** 2 + se[:-2] ** 2) / (2.0 * dx)
    dv[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * dx)
    dse[0] = np.sqrt(9.0 * se[0] ** 2 + 16.0 * se[1] ** 2 + se[2] ** 2) / (2.0 * dx)
    dv[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * dx)
    dse[-1] = np.sqrt(9.0 * se[-1] ** 2 + 16.0 * se[-2] ** 2 + se[-3] ** 2) / (2.0 * dx)
    return [CurveSample(float(a), float(b), float(c)) for a, b, c in zip(x, dv, dse)]


def force_from_ratio(
    ratio: Sequence[CurveSample],
    rho: float,
    basis: str = "r-based",
) -> list[ForcePoint]:
    """Force ratio and absolute force from an energy-ratio sweep.

    ratio samples E/E_ref on a uniform grid of the displacement fraction
    x = a/(R - r) for the enclosed pair with radius ratio rho = r/R; the
    reference is the extended proximity-force estimate in the given gap
    basis.  The force ratio is the sampled ratio plus the reference
    energy-to-force ratio times the derivative of the sampled ratio,
    with the displacement chain factor 1/(R - r) folded in.  Forces are
    reported in units of hbar*c/R^2, negative toward contact.

    At the concentric point both references vanish; the force is exactly
    zero there and the ratio is reported as nan.
    """
    if not (math.isfinite(rho) and 0.0 < rho < 1.0):
        raise ValueError(f"radius ratio must lie in (0, 1), got {rho!r}")
    x, v, _ = _arrays(ratio, 3)
    if x[0] < 0.0 or x[-1] >= 1.0:
        raise ValueError("displacement fractions must lie in [0, 1)")
    deriv = central_difference(ratio)
    out = []
    n = len(x)
    for i, (s, ds) in enumerate(zip(ratio, deriv)):
        if s.x == 0.0:
            out.append(ForcePoint(0.0, math.nan, 0.0, 0.0, i in (0, n - 1)))
            continue
        delta = (1.0 - rho) * (1.0 - s.x) / rho
        cfg = PfaConfig(y=-rho, d_over_r=delta, basis=basis)
        e_ref = full_pfa_energy(cfg, 1.0)
        f_ref = full_pfa_force(cfg, 1.0)
        c = e_ref / (f_ref * (1.0 - rho))
        r_val = s.value + c * ds.value
        r_se = math.hypot(s.stderr, c * ds.stderr)
        out.append(
            ForcePoint(s.x, r_val, r_val * f_ref, abs(r_se), i in (0, n - 1))
        )
    return out


def _solve_scaled(design: np.ndarray, target: np.ndarray):
    """(beta, (X^T X)^{-1}) by column-scaled normal equations."""
    scale = np.sqrt(np.sum(design ** 2, axis=0))
    if np.any(scale == 0.0) or not np.all(np.isfinite(scale)):
        raise ValueError("fit basis has a zero or non-finite column")
    a = design / scale
    g = a.T @ a
    if np.linalg.cond(g) > _COND_LIMIT:
        raise ValueError("fit basis is numerically rank deficient on these abscissae")
    beta_s = np.linalg.solve(g, a.T @ target)
    ginv = np.linalg.inv(g)
    return beta_s / scale, ginv / np.outer(scale, scale)


def _finish(names, beta, xtx_inv, resid, n) -> FitResult:
    p = len(beta)
    rss = float(resid @ resid)
    s2 = rss / (n - p) if n > p else 0.0
    cov = s2 * xtx_inv
    stderr = np.sqrt(np.maximum(np.diag(cov), 0.0))
    for arr in (beta, stderr, cov):
        arr.setflags(write=False)
    return FitResult(
        names=tuple(names),
        values=beta,
        stderr=stderr,
        covariance=cov,
        residual_rms=math.sqrt(rss / n),
        n_points=n,
    )


def fit_energy_ansatz(points: Sequence[CurveSample]) -> FitResult:
    """Close-separation model of the energy ratio in the scaled gap t = d/r.

    Fits value = 1 + theta1_bar*t + theta2_bar*t^2*log(t); linear in both
    coefficients.  Points must sit close to contact (t < 0.25), where the
    model is meaningful.
    """
    t, v, _ = _arrays(points, 3)
    if t[0] <= 0.0 or t[-1] >= 0.25:
        raise ValueError("scaled gaps must lie in (0, 0.25) for the contact model")
    design = np.column_stack([t, t ** 2 * np.log(t)])
    beta, xtx_inv = _solve_scaled(design, v - 1.0)
    resid = v - 1.0 - design @ beta
    return _finish(("theta1_bar", "theta2_bar"), beta, xtx_inv, resid, len(t))


def fit_force_ansatz(points: Sequence[CurveSample], theta1_ref: float) -> FitResult:
    """Close-separation model of the force ratio in the scaled gap t = d/r.

    Fits value = 1 + theta1_bar*t/2 - theta2_bar*t^2/2
    - theta1_ref*(theta1_bar + theta1_ref)*t^2/4 with the reference
    coefficient theta1_ref supplied from the gap-average module.  Seeded
    by the sub-fit without the cross term, then one Gauss-Newton step;
    the model is linear in the parameters, so the step lands on the
    least-squares solution regardless of the seed.
    """
    if not math.isfinite(theta1_ref):
        raise ValueError(f"theta1_ref must be finite, got {theta1_ref!r}")
    t, v, _ = _arrays(points, 3)
    if t[0] <= 0.0:
        raise ValueError("scaled gaps must be positive")
    jac = np.column_stack([t / 2.0 - theta1_ref * t ** 2 / 4.0, -(t ** 2) / 2.0])

    def model(b):
        return (1.0 - theta1_ref ** 2 * t ** 2 / 4.0) + jac @ b

    seed_design = np.column_stack([t / 2.0, -(t ** 2) / 2.0])
    seed, _ = _solve_scaled(seed_design, v - 1.0)
    step, xtx_inv = _solve_scaled(jac, v - model(seed))
    beta = seed + step
    resid = v - model(beta)
    return _finish(("theta1_bar", "theta2_bar"), beta, xtx_inv, resid, len(t))


def fit_theta1_curve(points: Sequence[CurveSample]) -> FitResult:
    """Radius-ratio dependence of the linear gap coefficient.

    Fits theta1(y) = -(k1*y + k2*y/(1+y) + k3) over samples of the
    signed radius ratio y; the sample set must include enclosed
    configurations (some y < 0).
    """
    y, v, _ = _arrays(points, 4)
    if y[0] <= -1.0 or y[-1] > 1.0:
        raise ValueError("radius ratios must lie in (-1, 1]")
    if y[0] >= 0.0:
        raise ValueError("need at least one enclosed (y < 0) sample")
    design = np.column_stack([-y, -y / (1.0 + y), -np.ones_like(y)])
    beta, xtx_inv = _solve_scaled(design, v)
    resid = v - design @ beta
    return _finish(("k1", "k2", "k3"), beta, xtx_inv, resid, len(y))


def theta1_from_fit(theta1_bar: float, y: float, basis: str = "r-based") -> float:
    """Total linear gap coefficient from its reference-subtracted fit value.

    The fitted curves normalize by the extended estimate, whose own
    linear coefficient must be added back to compare against the bare
    force expansion.
    """
    if not math.isfinite(theta1_bar):
        raise ValueError(f"theta1_bar must be finite, got {theta1_bar!r}")
    return theta1_bar + theta1_fpfa(y, basis)
