"""Plug-in limit variances and pointwise confidence intervals.

After rescaling by sqrt(n |B|), the hazard and distribution estimates are
asymptotically Gaussian with covariances

    vL(t, s) = (IK2 / g) * int_{[0, s^t]} (1 - dL(u)) / (1 - H(u-)) dL(u)
    vZ(t, s) = (1-F(t)) (1-F(s)) (IK2 / g)
               * int_{[0, s^t]} 1 / ((1 - H(u-)) (1 - dL(u))) dL(u)

where IK2 is the integral of the squared kernel and g the covariate
density at the query point. Both are evaluated here as exact jump sums
of the fitted curves. The evaluation is a heuristic plug-in (estimated
curves in place of the unknown truths); it is validated against Monte
Carlo dispersion rather than by a consistency theorem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .curves import StepCurve
from .errors import SaturatedJumpError, ValidationError, ZeroDensityError
from .estimator import ConditionalFit
from .experts import JudgmentBias, biased_limit

_SATURATION_EPS = 1e-15


def _hazard_jumps(fit: ConditionalFit):
    lam = fit.cum_hazard
    denom = 1.0 - fit.observed_cdf.value_left(lam.times)
    return lam.times, lam.sizes, denom


def _scale(fit: ConditionalFit, kernel_l2) -> float:
    if fit.density <= 0.0:
        raise ZeroDensityError("variance undefined where the density estimate vanishes")
    if kernel_l2 is None:
        kernel_l2 = fit.kernel.l2_norm()
    return float(kernel_l2) / fit.density


def hazard_variance(t, s, fit: ConditionalFit, kernel_l2=None) -> float:
    """Limit covariance of the cumulative-hazard estimate at (t, s)."""
    upto = min(float(t), float(s))
    times, d, denom = _hazard_jumps(fit)
    n = int(np.searchsorted(times, upto, side="right"))
    d, denom = d[:n], denom[:n]
    active = d > 0.0
    total = float(np.sum((1.0 - d[active]) * d[active] / denom[active]))
    return _scale(fit, kernel_l2) * total


def distribution_variance(t, s, fit: ConditionalFit, kernel_l2=None) -> float:
    """Limit covariance of the distribution estimate at (t, s).

    Undefined (raises) when a saturated hazard increment (dL = 1) lies in
    the integration range.
    """
    upto = min(float(t), float(s))
    times, d, denom = _hazard_jumps(fit)
    n = int(np.searchsorted(times, upto, side="right"))
    d, denom = d[:n], denom[:n]
    active = d > 0.0
    if np.any(1.0 - d[active] <= _SATURATION_EPS):
        raise SaturatedJumpError("a hazard increment of 1 makes the variance undefined")
    total = float(np.sum(d[active] / (denom[active] * (1.0 - d[active]))))
    sbar_t = 1.0 - fit.cdf.value(float(t))
    sbar_s = 1.0 - fit.cdf.value(float(s))
    return sbar_t * sbar_s * _scale(fit, kernel_l2) * total


@dataclass(frozen=True, eq=False)
class VarianceCurve:
    """Diagonal limit variances on a time grid, plus the n|B| scale."""

    t_grid: np.ndarray
    hazard: np.ndarray
    distribution: np.ndarray
    scale: float


def variance_curve(fit: ConditionalFit, t_grid, kernel_l2=None) -> VarianceCurve:
    """Vectorized diagonal variances via prefix sums over the hazard jumps.

    Saturation only matters inside the requested range: a hazard increment
    of 1 beyond ``max(t_grid)`` is ignored.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    times, d, denom = _hazard_jumps(fit)
    if t_grid.size:
        n_max = int(np.searchsorted(times, float(np.max(t_grid)), side="right"))
        times, d, denom = times[:n_max], d[:n_max], denom[:n_max]
    active = d > 0.0
    if np.any(1.0 - d[active] <= _SATURATION_EPS):
        raise SaturatedJumpError("a hazard increment of 1 makes the variance undefined")
    haz_terms = np.where(active, (1.0 - d) * d / np.where(active, denom, 1.0), 0.0)
    dist_terms = np.where(active, d / np.where(active, denom * (1.0 - d), 1.0), 0.0)
    haz_prefix = np.concatenate([[0.0], np.cumsum(haz_terms)])
    dist_prefix = np.concatenate([[0.0], np.cumsum(dist_terms)])
    idx = np.searchsorted(times, t_grid, side="right")
    scale = _scale(fit, kernel_l2)
    sbar = 1.0 - fit.cdf.value(t_grid)
    return VarianceCurve(
        t_grid=t_grid,
        hazard=scale * haz_prefix[idx],
        distribution=sbar**2 * scale * dist_prefix[idx],
        scale=fit.n_obs * fit.bandwidth.det,
    )


@dataclass(frozen=True, eq=False)
class CiCurve:
    """Pointwise confidence bounds for the distribution estimate."""

    t_grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    sigma2: np.ndarray
    level: float

    def to_table(self) -> np.ndarray:
        """Rows (t, lower, upper, center, sigma2)."""
        return np.column_stack([self.t_grid, self.lower, self.upper, self.center, self.sigma2])


def pointwise_ci(fit: ConditionalFit, t_grid, level=0.95, kernel_l2=None) -> CiCurve:
    """Normal pointwise intervals F(t) +- q * sqrt(vZ(t, t) / (n |B|)).

    Bounds are clipped to [0, 1]; ``level=0`` degenerates to the estimate.
    """
    if not 0.0 <= level < 1.0:
        raise ValidationError("confidence level must lie in [0, 1)")
    t_grid = np.asarray(t_grid, dtype=float)
    var = variance_curve(fit, t_grid, kernel_l2)
    q = float(ndtri(0.5 * (1.0 + level)))
    center = fit.cdf.value(t_grid)
    half = q * np.sqrt(var.distribution / var.scale)
    return CiCurve(
        t_grid=t_grid,
        lower=np.clip(center - half, 0.0, 1.0),
        upper=np.clip(center + half, 0.0, 1.0),
        center=center,
        sigma2=var.distribution,
        level=level,
    )


def biased_center(fit: ConditionalFit, bias: JudgmentBias) -> StepCurve:
    """Distribution curve around which a biased-judgment fit is asymptotically normal."""
    return biased_limit(fit.cum_hazard, bias)
