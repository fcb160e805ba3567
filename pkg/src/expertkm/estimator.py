"""Conditional Kaplan-Meier estimation with adjudicated event indicators.

The estimation chain at a query covariate point ``z0``:

1. kernel weights  ``k_i = K(B^-1 (Z_i - z0))``,
2. weighted empirical CDF of the observed times
   ``H(t) = sum_i 1(W_i <= t) k_i / sum_i k_i``,
3. weighted sub-distribution of accepted events
   ``H1(t) = sum_i 1(W_i <= t) eta_i k_i / sum_i k_i``
   where ``eta_i`` is a binary adjudication of whether the recorded
   event is genuine (``eta = delta`` reproduces the naive estimator that
   trusts every recorded event),
4. cumulative-hazard increments ``dL(s) = dH1(s) / (1 - H(s-))`` over the
   distinct observed times,
5. the product integral ``1 - F(t) = prod_{s <= t} (1 - dL(s))``.

With constant covariates and ``eta = delta`` the chain collapses to the
classical product-limit estimator, ties included.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .curves import StepCurve
from .data import validate_survival_arrays
from .errors import (
    JumpOutOfRangeError,
    MissingJudgmentsError,
    ValidationError,
    ZeroDensityError,
)
from .kernels import Bandwidth, KernelSpec, as_bandwidth, default_kernel, raw_weights

DEFAULT_DENOMINATOR_FLOOR = 1e-12
_JUMP_RANGE_SLACK = 1e-12


def density_estimate(covariates, bandwidth, z0, kernel: KernelSpec | None = None) -> float:
    """Kernel density estimate (1/(n |B|)) sum_i K(B^-1 (Z_i - z0)).

    Zero is a legal return value; ratio estimators downstream guard it.
    """
    Z = np.atleast_2d(np.asarray(covariates, dtype=float))
    bw = as_bandwidth(bandwidth, Z.shape[1])
    kernel = (kernel or default_kernel(Z.shape[1])).with_dimension(Z.shape[1])
    k = raw_weights(bw, Z, z0, kernel)
    return float(k.sum()) / (Z.shape[0] * bw.det)


def _merged_jump_masses(w, weights, numerator_weights):
    """Distinct observed times with tied contributions merged into single jumps."""
    total = float(weights.sum())
    if total <= 0.0:
        raise ZeroDensityError("no observation has positive kernel weight at this point")
    times, inverse = np.unique(w, return_inverse=True)
    d_all = np.bincount(inverse, weights=weights, minlength=times.size) / total
    d_num = np.bincount(inverse, weights=numerator_weights, minlength=times.size) / total
    return times, d_all, d_num, total


def conditional_cdf(w, covariates, bandwidth, z0, kernel=None) -> StepCurve:
    """Weighted empirical CDF of the observed times at covariate point z0."""
    w, _, Z, _ = validate_survival_arrays(w, np.zeros_like(np.asarray(w, dtype=float)), covariates)
    bw = as_bandwidth(bandwidth, Z.shape[1])
    kernel = (kernel or default_kernel(Z.shape[1])).with_dimension(Z.shape[1])
    k = raw_weights(bw, Z, z0, kernel)
    times, d_all, _, _ = _merged_jump_masses(w, k, k)
    return StepCurve(times, d_all, monotone=True)


def conditional_event_cdf(w, judgments, covariates, bandwidth, z0, kernel=None) -> StepCurve:
    """Weighted sub-distribution of accepted events; pointwise below the CDF."""
    if judgments is None:
        raise MissingJudgmentsError("event sub-distribution needs adjudication indicators")
    w = np.asarray(w, dtype=float)
    # judgments are binary but unconstrained by events here: this curve is
    # also used for naive (event-indicator) weighting
    w, judgments, Z, _ = validate_survival_arrays(w, judgments, covariates)
    bw = as_bandwidth(bandwidth, Z.shape[1])
    kernel = (kernel or default_kernel(Z.shape[1])).with_dimension(Z.shape[1])
    k = raw_weights(bw, Z, z0, kernel)
    times, _, d_num, _ = _merged_jump_masses(w, k, k * judgments)
    return StepCurve(times, d_num, monotone=True)


def cumulative_hazard(
    observed_cdf: StepCurve,
    event_cdf: StepCurve,
    t_max=None,
    denominator_floor: float = DEFAULT_DENOMINATOR_FLOOR,
):
    """Hazard increments dH1(s) / (1 - H(s-)) over the event grid.

    Returns ``(curve, truncated_at)``. When the risk-set denominator falls
    below the floor at a jump still carrying event mass, the fit is
    truncated just before that jump and the offending time is reported
    instead of producing non-finite output.
    """
    times = event_cdf.times
    d1 = event_cdf.sizes
    if t_max is not None:
        n = int(np.searchsorted(times, t_max, side="right"))
        times, d1 = times[:n], d1[:n]
    denom = 1.0 - observed_cdf.value_left(times)
    active = d1 > 0.0
    bad = active & (denom < denominator_floor)
    truncated_at = None
    if np.any(bad):
        cut = int(np.argmax(bad))
        truncated_at = float(times[cut])
        times, d1, denom, active = times[:cut], d1[:cut], denom[:cut], active[:cut]
    sizes = np.zeros_like(d1)
    np.divide(d1, denom, out=sizes, where=active)
    # the event mass at s never exceeds the risk mass 1 - H(s-); clamp the
    # rounding noise the two cumulative sums can disagree by
    np.clip(sizes, 0.0, 1.0, out=sizes)
    return StepCurve(times, sizes, monotone=True), truncated_at


def product_integral(cum_hazard: StepCurve, t_max=None) -> StepCurve:
    """Distribution curve F with 1 - F(t) = prod over jumps <= t of (1 - dL).

    Every hazard increment must lie in [0, 1]; values within 1e-12 outside
    are snapped to the boundary, anything further raises.
    """
    times = cum_hazard.times
    d = cum_hazard.sizes
    if t_max is not None:
        n = int(np.searchsorted(times, t_max, side="right"))
        times, d = times[:n], d[:n]
    if times.size and (np.any(d < -_JUMP_RANGE_SLACK) or np.any(d > 1.0 + _JUMP_RANGE_SLACK)):
        raise JumpOutOfRangeError("cumulative-hazard increments must lie in [0, 1]")
    d = np.clip(d, 0.0, 1.0)
    survival = np.cumprod(1.0 - d)
    f_values = 1.0 - survival
    sizes = np.diff(f_values, prepend=0.0)
    return StepCurve(times, sizes, monotone=True)


@dataclass(frozen=True, eq=False)
class ConditionalFit:
    """All estimated curves at one query covariate point.

    Attributes
    ----------
    z0 : ndarray
        Query covariate point.
    observed_cdf : StepCurve
        CDF estimate of the observed (censored) time.
    event_cdf : StepCurve
        Sub-distribution estimate of accepted events; below observed_cdf.
    cum_hazard : StepCurve
        Cumulative-hazard estimate; every jump lies in [0, 1].
    cdf : StepCurve
        Distribution estimate, values in [0, 1]; survival is 1 - cdf.
    density : float
        Kernel density estimate at z0.
    weight_total : float
        Sum of the raw kernel weights (effective local mass).
    truncated_at : float or None
        Time at which the hazard had to be truncated, if any.
    """

    z0: np.ndarray
    observed_cdf: StepCurve
    event_cdf: StepCurve
    cum_hazard: StepCurve
    cdf: StepCurve
    density: float
    weight_total: float
    bandwidth: Bandwidth
    kernel: KernelSpec
    n_obs: int
    truncated_at: Optional[float] = None

    def survival(self, t):
        return 1.0 - self.cdf.value(t)

    def to_table(self, t_grid) -> np.ndarray:
        """Rows (t, F, survival, cumulative hazard, observed CDF)."""
        t = np.asarray(t_grid, dtype=float)
        f = self.cdf.value(t)
        return np.column_stack(
            [t, f, 1.0 - f, self.cum_hazard.value(t), self.observed_cdf.value(t)]
        )


def fit_conditional_km(
    w,
    event,
    covariates,
    z0,
    bandwidth,
    judgments=None,
    kernel: KernelSpec | None = None,
    t_max=None,
    denominator_floor: float = DEFAULT_DENOMINATOR_FLOOR,
) -> ConditionalFit:
    """Run the full estimation chain at one covariate point.

    ``judgments=None`` runs the naive estimator (every recorded event
    trusted, ``eta = delta``); otherwise the binary judgment array
    replaces the event indicator in the event sub-distribution.
    """
    w, event, Z, judgments = validate_survival_arrays(w, event, covariates, judgments)
    eta = event if judgments is None else judgments
    bw = as_bandwidth(bandwidth, Z.shape[1])
    kernel = (kernel or default_kernel(Z.shape[1])).with_dimension(Z.shape[1])
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    k = raw_weights(bw, Z, z0, kernel)
    times, d_all, d_eta, total = _merged_jump_masses(w, k, k * eta)
    observed = StepCurve(times, d_all, monotone=True)
    events = StepCurve(times, d_eta, monotone=True)
    hazard, truncated_at = cumulative_hazard(observed, events, t_max, denominator_floor)
    cdf = product_integral(hazard)
    return ConditionalFit(
        z0=z0,
        observed_cdf=observed,
        event_cdf=events,
        cum_hazard=hazard,
        cdf=cdf,
        density=total / (Z.shape[0] * bw.det),
        weight_total=total,
        bandwidth=bw,
        kernel=kernel,
        n_obs=Z.shape[0],
        truncated_at=truncated_at,
    )


def as_survival_target(y):
    """Unpack a fit target into (time, event, judgments-or-None).

    Accepts a structured array with fields ``time``/``event`` and optional
    ``judgment``, a tuple/list of 2 or 3 arrays, or a plain 2- or 3-column
    matrix in that column order.
    """
    if isinstance(y, np.ndarray) and y.dtype.names:
        names = y.dtype.names
        if "time" not in names or "event" not in names:
            raise ValidationError("structured target needs 'time' and 'event' fields")
        eta = y["judgment"] if "judgment" in names else None
        return np.asarray(y["time"], dtype=float), np.asarray(y["event"]), eta
    if isinstance(y, (tuple, list)):
        parts = [np.asarray(p) for p in y]
    else:
        arr = np.asarray(y)
        if arr.ndim != 2 or arr.shape[1] not in (2, 3):
            raise ValidationError("target must have 2 or 3 columns: time, event[, judgment]")
        parts = [arr[:, j] for j in range(arr.shape[1])]
    if len(parts) == 2:
        return parts[0].astype(float), parts[1], None
    if len(parts) == 3:
        return parts[0].astype(float), parts[1], parts[2]
    raise ValidationError("target must supply time, event, and optionally judgment")


class ConditionalKaplanMeier(BaseEstimator):
    """Covariate-conditional product-limit estimator with adjudicated events.

    Parameters
    ----------
    bandwidth : float, sequence, "schedule", or "cv"
        Explicit diagonal bandwidth, the shrinking schedule
        ``(log n / n^rho)^(1/k)``, or functional cross-validated selection.
    rho : float
        Schedule exponent in (0, 1/2); used when ``bandwidth="schedule"``.
    cv : CvConfig or None
        Search configuration when ``bandwidth="cv"``; None uses a default
        grid of schedule-bandwidth multiples.
    kernel : KernelSpec or None
        Smoothing kernel; None selects the truncated Gaussian.
    t_max : float or None
        Upper time bound for the fitted curves.
    conf_level : float
        Level for pointwise confidence intervals.

    Examples
    --------
    >>> import numpy as np
    >>> from expertkm import ConditionalKaplanMeier
    >>> rng = np.random.default_rng(0)
    >>> z = rng.normal(size=200)
    >>> t = rng.exponential(np.exp(-0.5 * z))
    >>> c = rng.uniform(0, 2, size=200)
    >>> y = (np.minimum(t, c), (t <= c).astype(int))
    >>> est = ConditionalKaplanMeier(bandwidth=0.5).fit(z[:, None], y)
    >>> est.predict_survival(np.array([[0.0]]), [0.5, 1.0]).shape
    (1, 2)
    """

    def __init__(
        self,
        bandwidth="schedule",
        rho=0.3,
        cv=None,
        kernel=None,
        t_max=None,
        conf_level=0.95,
        denominator_floor=DEFAULT_DENOMINATOR_FLOOR,
    ):
        self.bandwidth = bandwidth
        self.rho = rho
        self.cv = cv
        self.kernel = kernel
        self.t_max = t_max
        self.conf_level = conf_level
        self.denominator_floor = denominator_floor

    def fit(self, X, y):
        """Store the training sample and resolve the bandwidth.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
            Covariates.
        y : target
            Anything :func:`as_survival_target` accepts: times, event
            indicators, and optionally binary adjudications.
        """
        X = check_array(X, ensure_2d=True, dtype=float)
        w, event, judgments = as_survival_target(y)
        w, event, Z, judgments = validate_survival_arrays(w, event, X, judgments)
        kernel = self.kernel or default_kernel(Z.shape[1])
        self.kernel_ = kernel.with_dimension(Z.shape[1])
        self.w_ = w
        self.event_ = event
        self.judgments_ = judgments
        self.X_ = Z
        self.n_features_in_ = Z.shape[1]
        self.bandwidth_ = self._resolve_bandwidth(Z, w, event, judgments)
        return self

    def _resolve_bandwidth(self, Z, w, event, judgments) -> Bandwidth:
        if isinstance(self.bandwidth, str):
            if self.bandwidth == "schedule":
                return Bandwidth.from_schedule(Z.shape[0], Z.shape[1], self.rho)
            if self.bandwidth == "cv":
                from .bandwidth import CvConfig, select_bandwidth

                config = self.cv if self.cv is not None else CvConfig()
                report = select_bandwidth(
                    w,
                    event if judgments is None else judgments,
                    Z,
                    config,
                    kernel=self.kernel_,
                    rho=self.rho,
                )
                self.cv_report_ = report
                return report.selected
            raise ValidationError(f"unknown bandwidth mode {self.bandwidth!r}")
        return as_bandwidth(self.bandwidth, Z.shape[1])

    def conditional_fit(self, z0, judged=True) -> ConditionalFit:
        """Full curve set at one covariate point; ``judged=False`` forces naive."""
        check_is_fitted(self, "bandwidth_")
        judgments = self.judgments_ if judged else None
        return fit_conditional_km(
            self.w_,
            self.event_,
            self.X_,
            z0,
            self.bandwidth_,
            judgments=judgments,
            kernel=self.kernel_,
            t_max=self.t_max,
            denominator_floor=self.denominator_floor,
        )

    def predict_survival(self, X, times) -> np.ndarray:
        """Survival estimates, shape (n_query_points, n_times)."""
        check_is_fitted(self, "bandwidth_")
        X = check_array(X, ensure_2d=True, dtype=float)
        times = np.asarray(times, dtype=float)
        return np.vstack([self.conditional_fit(z).survival(times) for z in X])

    def predict_cumulative_hazard(self, X, times) -> np.ndarray:
        check_is_fitted(self, "bandwidth_")
        X = check_array(X, ensure_2d=True, dtype=float)
        times = np.asarray(times, dtype=float)
        return np.vstack([self.conditional_fit(z).cum_hazard.value(times) for z in X])

    def predict_interval(self, z0, times):
        """Pointwise confidence bounds for the distribution at one point."""
        from .asymptotics import pointwise_ci

        check_is_fitted(self, "bandwidth_")
        fit = self.conditional_fit(z0)
        return pointwise_ci(fit, np.asarray(times, dtype=float), self.conf_level)
