"""Adjudication models and the judgment-bias functional.

An adjudicator turns a recorded event (``delta = 1``) into a binary
acceptance ``eta``; censored observations are never touched, so
``eta <= delta`` always. Each model is characterized by its acceptance
probability as a function of the observed time and the covariates:

- ``NaiveExpert``: accepts everything (probability 1).
- ``PerfectExpert(p)``: accepts with the supplied probability ``p(w, z)``,
  meant to be the conditional probability that a recorded event is
  genuine.
- ``PartialExpert(p, effectiveness)``: accepts with
  ``(1 - effectiveness) + effectiveness * p(w, z)``, interpolating
  between naive (0) and perfect (1).
- ``UniformCensorExpert(keep_probability)``: accepts with a flat
  probability.
- ``ThresholdCensorExpert(keep_probability, predicate)``: accepts
  flagged observations (``predicate(z)`` true) with ``keep_probability``
  and everything else surely.

Imperfect acceptance distorts the estimated hazard by a deterministic,
computable amount. :func:`bias_functional` accumulates that distortion
as a nondecreasing curve G with increments

    dG(s) = (1 - effectiveness) * (1 - p(s, z)) / (1 - H(s-)) * dH1x(s)

over the jumps of the naive event sub-distribution H1x, and
:func:`biased_limit` turns the shifted hazard into the distribution
curve the estimator actually converges to.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .curves import StepCurve, merge_jump_curves
from .errors import BothDensitiesZeroError, ValidationError
from .estimator import product_integral

ProbabilityFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _check_probabilities(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0.0) or np.any(p > 1.0) or not np.all(np.isfinite(p)):
        raise ValidationError("acceptance probabilities must lie in [0, 1]")
    return p


class ExpertModel:
    """Base adjudication model; subclasses define the acceptance probability."""

    def acceptance_probability(self, w, z) -> np.ndarray:
        raise NotImplementedError

    def judge(self, w, event, z, rng) -> np.ndarray:
        """Draw binary judgments; censored observations always get 0."""
        w = np.asarray(w, dtype=float)
        event = np.asarray(event, dtype=float)
        z = np.atleast_2d(np.asarray(z, dtype=float))
        p = _check_probabilities(self.acceptance_probability(w, z))
        p = np.broadcast_to(p, w.shape)
        accept = rng.random(w.shape) < p
        return (event * accept).astype(float)


@dataclass(frozen=True)
class NaiveExpert(ExpertModel):
    """Accepts every recorded event: eta = delta."""

    def acceptance_probability(self, w, z):
        return np.ones(np.asarray(w).shape)

    def judge(self, w, event, z, rng=None):
        return np.asarray(event, dtype=float).copy()


@dataclass(frozen=True)
class PerfectExpert(ExpertModel):
    p: ProbabilityFn

    def acceptance_probability(self, w, z):
        return self.p(w, z)


@dataclass(frozen=True)
class PartialExpert(ExpertModel):
    """Bridges naive (effectiveness 0) and perfect (effectiveness 1) behavior."""

    p: ProbabilityFn
    effectiveness: float

    def __post_init__(self):
        if not 0.0 <= self.effectiveness <= 1.0:
            raise ValidationError("effectiveness must lie in [0, 1]")

    def acceptance_probability(self, w, z):
        return (1.0 - self.effectiveness) + self.effectiveness * np.asarray(
            self.p(w, z), dtype=float
        )


@dataclass(frozen=True)
class UniformCensorExpert(ExpertModel):
    keep_probability: float

    def __post_init__(self):
        if not 0.0 <= self.keep_probability <= 1.0:
            raise ValidationError("keep_probability must lie in [0, 1]")

    def acceptance_probability(self, w, z):
        return np.full(np.asarray(w).shape, self.keep_probability)


@dataclass(frozen=True)
class ThresholdCensorExpert(ExpertModel):
    """Applies the uniform censoring only where ``predicate(z)`` is true."""

    keep_probability: float
    predicate: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if not 0.0 <= self.keep_probability <= 1.0:
            raise ValidationError("keep_probability must lie in [0, 1]")

    def acceptance_probability(self, w, z):
        flagged = np.asarray(self.predicate(np.atleast_2d(z)), dtype=bool)
        return np.where(flagged, self.keep_probability, 1.0)


def judgment_rng(seed, replication=0, stream=0) -> np.random.Generator:
    """Reproducible generator keyed by (seed, replication, stream).

    Judgments for observation ``i`` consume the i-th draw of the stream,
    so regenerating a replication is deterministic regardless of how
    replications are scheduled across workers.
    """
    return np.random.default_rng([int(seed), int(replication), int(stream)])


def p_from_densities(f_event: Callable, f_contamination: Callable) -> ProbabilityFn:
    """Acceptance probability as the density ratio fe / (fe + fc).

    Both callables take (w, z) with z of shape (n, k) and return
    nonnegative densities; evaluation fails where both vanish.
    """

    def p(w, z):
        fe = np.asarray(f_event(w, z), dtype=float)
        fc = np.asarray(f_contamination(w, z), dtype=float)
        if np.any(fe < 0) or np.any(fc < 0):
            raise ValidationError("densities must be nonnegative")
        both = fe + fc
        if np.any(both <= 0.0):
            raise BothDensitiesZeroError("both densities vanish at an evaluated point")
        return fe / both

    return p


@dataclass(frozen=True, eq=False)
class JudgmentBias:
    """Accumulated hazard distortion of an imperfect adjudicator.

    ``curve`` is nonnegative and nondecreasing, identically zero at full
    effectiveness, and pointwise nonincreasing in the effectiveness.
    """

    curve: StepCurve
    effectiveness: float
    components: dict
    truncated_at: Optional[float] = None

    def factor(self, t):
        """Multiplicative survival distortion exp(-G(t))."""
        return np.exp(-self.curve.value(t))


def bias_functional(
    p_hat: ProbabilityFn,
    effectiveness: float,
    observed_cdf: StepCurve,
    naive_event_cdf: StepCurve,
    z0,
    denominator_floor: float = 1e-12,
) -> JudgmentBias:
    """Plug-in bias curve from estimated ingredients.

    ``naive_event_cdf`` must be the event sub-distribution built from the
    raw event indicators (no adjudication), since the distortion is
    accumulated over all recorded events.
    """
    if not 0.0 <= effectiveness <= 1.0:
        raise ValidationError("effectiveness must lie in [0, 1]")
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    times = naive_event_cdf.times
    d1x = naive_event_cdf.sizes
    denom = 1.0 - observed_cdf.value_left(times)
    active = d1x > 0.0
    truncated_at = None
    bad = active & (denom < denominator_floor)
    if np.any(bad):
        cut = int(np.argmax(bad))
        truncated_at = float(times[cut])
        times, d1x, denom, active = times[:cut], d1x[:cut], denom[:cut], active[:cut]
    if times.size:
        p = _check_probabilities(
            np.broadcast_to(p_hat(times, np.broadcast_to(z0, (times.size, z0.size))), times.shape)
        )
    else:
        p = np.zeros(0)
    sizes = np.zeros_like(d1x)
    np.divide((1.0 - effectiveness) * (1.0 - p) * d1x, denom, out=sizes, where=active)
    curve = StepCurve(times, sizes, monotone=True)
    return JudgmentBias(
        curve=curve,
        effectiveness=effectiveness,
        components={"observed_cdf": observed_cdf, "naive_event_cdf": naive_event_cdf, "z0": z0},
        truncated_at=truncated_at,
    )


def biased_limit(cum_hazard: StepCurve, bias) -> StepCurve:
    """Distribution curve the estimator converges to under biased judgments.

    Computes the product integral of the shifted hazard. A bias without
    jumps leaves the unbiased product integral bit-for-bit unchanged.
    When hazard and distortion are both continuous this equals
    ``1 - exp(-G) * (1 - F)``; the product-integral form is used
    unconditionally because it also covers hazards with atoms.
    """
    bias_curve = bias.curve if isinstance(bias, JudgmentBias) else bias
    shifted = merge_jump_curves(cum_hazard, bias_curve)
    return product_integral(shifted)
