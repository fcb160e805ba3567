"""Synthetic portfolios, closed-form truths, and the Monte Carlo harness.

The disability scenario generates an insurance-style portfolio in which
recorded events mix genuine disabilities with contamination:

- age covariate ``Z_age ~ Normal(50, 100)``; reporting count
  ``Z_rep ~ Poisson(0.3)``; censoring ``C ~ Uniform[0, 50]``,
- disability intensity ``mu_d(t | z_age) = 0.01 * exp(0.02 (t + z_age))``
  (a Gompertz law, inverted in closed form),
- contamination intensity ``mu_c(t | z_rep) = 0.005 + 0.02 * z_rep``
  (exponential given the reporting count),
- observed ``W = min(X, Y, C)`` and recorded-event flag
  ``delta = 1(min(X, Y) <= C)``; a recorded event is genuine when
  ``X <= Y``.

All conditional laws are available in closed form, so the scenario also
provides exact targets: the true survival of the disability time, the
deterministic center an imperfect adjudicator's estimate converges to,
and the plug-in dispersion at true quantities. These back the Monte
Carlo study, which regenerates portfolios and judgments per replication
under substreams keyed by (seed, replication) and aggregates survival
estimates per (covariate point, adjudicator, time).

Regression smoothing in this study conditions on age alone; the
reporting count enters only the contamination law and the adjudication
probability.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import integrate

from .data import Dataset
from .errors import QuadratureError, ValidationError
from .estimator import fit_conditional_km
from .experts import ExpertModel, NaiveExpert, PartialExpert, p_from_densities
from .kernels import Bandwidth, KernelSpec, default_kernel

_POISSON_TAIL = 1e-10
_QUAD_LIMIT = 200


@dataclass(frozen=True)
class DisabilityScenario:
    """Parameters of the contaminated disability portfolio."""

    n: int = 10_000
    age_mean: float = 50.0
    age_var: float = 100.0
    reportings_rate: float = 0.3
    censor_upper: float = 50.0
    disability_scale: float = 0.01
    disability_slope: float = 0.02
    contamination_base: float = 0.005
    contamination_per_report: float = 0.02
    seed: int = 0

    def __post_init__(self):
        positive = (
            self.age_var,
            self.reportings_rate,
            self.censor_upper,
            self.disability_scale,
            self.disability_slope,
            self.contamination_base,
            self.contamination_per_report,
        )
        if any(v <= 0 for v in positive) or self.n < 1:
            raise ValidationError("scenario rates and sizes must be strictly positive")

    # Closed-form conditional laws.

    def disability_hazard(self, t, z_age):
        a, b = self.disability_scale, self.disability_slope
        return a * np.exp(b * (np.asarray(t, dtype=float) + z_age))

    def disability_survival(self, t, z_age):
        a, b = self.disability_scale, self.disability_slope
        return np.exp(-(a / b) * np.exp(b * z_age) * np.expm1(b * np.asarray(t, dtype=float)))

    def disability_density(self, t, z_age):
        return self.disability_hazard(t, z_age) * self.disability_survival(t, z_age)

    def contamination_rate(self, z_rep):
        return self.contamination_base + self.contamination_per_report * np.asarray(
            z_rep, dtype=float
        )

    def contamination_survival(self, t, z_rep):
        return np.exp(-self.contamination_rate(z_rep) * np.asarray(t, dtype=float))

    def contamination_density(self, t, z_rep):
        rate = self.contamination_rate(z_rep)
        return rate * np.exp(-rate * np.asarray(t, dtype=float))

    def censor_survival(self, t):
        return np.clip(1.0 - np.asarray(t, dtype=float) / self.censor_upper, 0.0, 1.0)

    def reporting_weights(self):
        """Poisson probabilities truncated where the tail drops below 1e-10."""
        lam = self.reportings_rate
        weights = []
        r, pmf, cdf = 0, math.exp(-lam), math.exp(-lam)
        weights.append(pmf)
        while 1.0 - cdf > _POISSON_TAIL:
            r += 1
            pmf *= lam / r
            cdf += pmf
            weights.append(pmf)
        return np.asarray(weights)

    def marginal_contamination_survival(self, t):
        """Contamination survival with the reporting count integrated out."""
        t = np.asarray(t, dtype=float)
        lam = self.reportings_rate
        return np.exp(
            -self.contamination_base * t
            + lam * (np.exp(-self.contamination_per_report * t) - 1.0)
        )

    def observed_survival(self, t, z_age):
        """P(W > t | z_age): all three latent times exceed t."""
        return (
            self.disability_survival(t, z_age)
            * self.marginal_contamination_survival(t)
            * self.censor_survival(t)
        )

    def age_density(self, z_age):
        sd = math.sqrt(self.age_var)
        u = (np.asarray(z_age, dtype=float) - self.age_mean) / sd
        return np.exp(-0.5 * u * u) / (sd * math.sqrt(2.0 * math.pi))

    def adjudication_probability(self, w, z_age, z_rep):
        """Chance a recorded event is genuine, as the density ratio used in judging."""
        fd = self.disability_density(w, z_age)
        fc = self.contamination_density(w, z_rep)
        return fd / (fd + fc)

    def partial_expert(self, effectiveness: float) -> ExpertModel:
        """Adjudicator blending naive and density-ratio judging.

        Expects covariate matrices with columns (age, reporting count).
        """
        p = p_from_densities(
            lambda w, z: self.disability_density(w, z[:, 0]),
            lambda w, z: self.contamination_density(w, z[:, 1]),
        )
        if effectiveness >= 1.0:
            return PartialExpert(p=p, effectiveness=1.0)
        return PartialExpert(p=p, effectiveness=effectiveness)


@dataclass(frozen=True, eq=False)
class Portfolio:
    """One simulated portfolio with its latent times retained."""

    w: np.ndarray
    event: np.ndarray
    z_age: np.ndarray
    z_rep: np.ndarray
    true_event_time: np.ndarray
    contamination_time: np.ndarray
    censoring_time: np.ndarray
    scenario: DisabilityScenario

    @property
    def n(self) -> int:
        return self.w.size

    def covariate_matrix(self) -> np.ndarray:
        """Columns (age, reporting count), the layout adjudicators expect."""
        return np.column_stack([self.z_age, self.z_rep])

    def to_dataset(self, judgments=None) -> Dataset:
        return Dataset(
            w=self.w,
            event=self.event,
            covariates=self.covariate_matrix(),
            judgments=judgments,
            covariate_names=("z_age", "z_rep"),
            provenance="simulated disability portfolio",
        )


def simulate_portfolio(
    scenario: DisabilityScenario, rng=None, n: Optional[int] = None
) -> Portfolio:
    """Draw one portfolio; the disability time is inverted in closed form."""
    rng = np.random.default_rng(scenario.seed) if rng is None else rng
    n = scenario.n if n is None else int(n)
    a, b = scenario.disability_scale, scenario.disability_slope
    z_age = rng.normal(scenario.age_mean, math.sqrt(scenario.age_var), n)
    z_rep = rng.poisson(scenario.reportings_rate, n).astype(float)
    censor = rng.uniform(0.0, scenario.censor_upper, n)
    u = rng.uniform(size=n)
    x = np.log1p(-(b / a) * np.exp(-b * z_age) * np.log(u)) / b
    y = rng.exponential(1.0, n) / scenario.contamination_rate(z_rep)
    w = np.minimum(np.minimum(x, y), censor)
    event = (np.minimum(x, y) <= censor).astype(float)
    return Portfolio(
        w=w,
        event=event,
        z_age=z_age,
        z_rep=z_rep,
        true_event_time=x,
        contamination_time=y,
        censoring_time=censor,
        scenario=scenario,
    )


def true_survival_disability(t, z_age, scenario: DisabilityScenario = DisabilityScenario()):
    """Exact survival of the disability time given age."""
    return scenario.disability_survival(t, z_age)


def _quad(fn, lo, hi):
    value, abserr = integrate.quad(fn, lo, hi, limit=_QUAD_LIMIT)
    if not math.isfinite(value) or abserr > 1e-6 * max(1.0, abs(value)):
        raise QuadratureError(f"integration did not converge (estimate {value}, error {abserr})")
    return value


def judgment_bias_integral(
    t,
    z_age,
    effectiveness: float,
    scenario: DisabilityScenario = DisabilityScenario(),
) -> float:
    """Exact accumulated hazard distortion of the partial adjudicator.

    Integrates (1 - effectiveness) (1 - p(s, z)) / (1 - H(s-)) against
    the recorded-event sub-distribution, with the reporting count mixed
    over its (truncated) Poisson law. All ingredients are the closed-form
    model quantities, not estimates.
    """
    if not 0.0 <= effectiveness <= 1.0:
        raise ValidationError("effectiveness must lie in [0, 1]")
    if effectiveness == 1.0 or t <= 0.0:
        return 0.0
    weights = scenario.reporting_weights()
    reports = np.arange(weights.size, dtype=float)

    def integrand(s):
        fd = scenario.disability_density(s, z_age)
        sd = scenario.disability_survival(s, z_age)
        sc = scenario.censor_survival(s)
        rate = scenario.contamination_rate(reports)
        sy = np.exp(-rate * s)
        fy = rate * sy
        # Recorded-event sub-density at fixed reporting count, times S_C.
        h1x = sc * (fd * sy + fy * sd)
        p = fd / (fd + fy)
        mixed = float(np.sum(weights * (1.0 - p) * h1x))
        at_risk = sd * sc * scenario.marginal_contamination_survival(s)
        return mixed / at_risk

    return (1.0 - effectiveness) * _quad(integrand, 0.0, float(t))


def true_biased_center(
    t,
    z_age,
    effectiveness: float,
    scenario: DisabilityScenario = DisabilityScenario(),
) -> float:
    """Survival value the partial adjudicator's estimate converges to.

    Full effectiveness recovers the true survival exactly; lower
    effectiveness multiplies it by exp(-bias integral).
    """
    gamma = judgment_bias_integral(t, z_age, effectiveness, scenario)
    return float(np.exp(-gamma) * scenario.disability_survival(t, z_age))


def true_sigma_z(
    t,
    z_age,
    n: int,
    bandwidth_det: float,
    scenario: DisabilityScenario = DisabilityScenario(),
    kernel: KernelSpec | None = None,
) -> float:
    """Plug-in dispersion of the survival estimate at true model quantities."""
    kernel = kernel or default_kernel(1)

    def integrand(s):
        return float(
            scenario.disability_hazard(s, z_age) / scenario.observed_survival(s, z_age)
        )

    base = _quad(integrand, 0.0, float(t))
    sbar = float(scenario.disability_survival(t, z_age))
    g = float(scenario.age_density(z_age))
    sigma2 = sbar * sbar / g * kernel.l2_norm() * base
    return math.sqrt(sigma2 / (n * bandwidth_det))


@dataclass(frozen=True)
class McExpertSpec:
    """One adjudicator column of the study.

    ``effectiveness`` drives the closed-form center: 0 marks the naive
    column, values in (0, 1] the partial adjudicator. ``model=None``
    means judgments are the raw event indicators.
    """

    label: str
    model: Optional[ExpertModel]
    effectiveness: Optional[float]

    @classmethod
    def naive(cls) -> "McExpertSpec":
        return cls(label="naive", model=None, effectiveness=0.0)

    @classmethod
    def partial(cls, scenario: DisabilityScenario, effectiveness: float) -> "McExpertSpec":
        label = f"partial_{effectiveness:g}"
        return cls(
            label=label, model=scenario.partial_expert(effectiveness), effectiveness=effectiveness
        )


@dataclass(frozen=True, eq=False)
class SurvivalGrid:
    """Survival values on a (covariate point, time) grid."""

    z_values: np.ndarray
    t_values: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (len(self.z_values), len(self.t_values)):
            raise ValidationError("grid values must have shape (n_z, n_t)")


def heatmap_difference(grid_a: SurvivalGrid, grid_b: SurvivalGrid) -> SurvivalGrid:
    """Pointwise difference of two survival grids on the same axes."""
    if not (
        np.array_equal(grid_a.z_values, grid_b.z_values)
        and np.array_equal(grid_a.t_values, grid_b.t_values)
    ):
        raise ValidationError("survival grids are not aligned")
    return SurvivalGrid(grid_a.z_values, grid_a.t_values, grid_a.values - grid_b.values)


def true_survival_grid(scenario: DisabilityScenario, z_values, t_values) -> SurvivalGrid:
    z_values = np.asarray(z_values, dtype=float)
    t_values = np.asarray(t_values, dtype=float)
    values = scenario.disability_survival(t_values[None, :], z_values[:, None])
    return SurvivalGrid(z_values, t_values, values)


@dataclass(frozen=True, eq=False)
class McStudyResult:
    """Aggregated Monte Carlo study output.

    ``means``/``stds`` have shape (n_experts, n_z, n_t); ``failures``
    counts replications whose fit failed per cell, and a cell is flagged
    when more than 5 percent failed.
    """

    scenario: DisabilityScenario
    expert_labels: tuple
    z_values: np.ndarray
    t_values: np.ndarray
    replications: int
    bandwidth: Bandwidth
    seed: int
    means: np.ndarray
    stds: np.ndarray
    true_centers: np.ndarray
    true_survival: np.ndarray
    plugin_sigma: np.ndarray
    failures: np.ndarray

    def expert_index(self, label: str) -> int:
        try:
            return self.expert_labels.index(label)
        except ValueError:
            raise ValidationError(f"unknown study column {label!r}") from None

    def mean_grid(self, label: str) -> SurvivalGrid:
        return SurvivalGrid(self.z_values, self.t_values, self.means[self.expert_index(label)])

    def flagged_cells(self):
        limit = 0.05 * self.replications
        bad = np.argwhere(self.failures > limit)
        return [
            (self.expert_labels[e], float(self.z_values[i]), float(self.t_values[j]))
            for e, i, j in bad
        ]

    def rows(self):
        """Flat per-cell records mirroring the study table layout."""
        out = []
        for e, label in enumerate(self.expert_labels):
            for i, z in enumerate(self.z_values):
                for j, t in enumerate(self.t_values):
                    center = self.true_centers[e, i, j]
                    mean = self.means[e, i, j]
                    out.append(
                        {
                            "z_age": float(z),
                            "expert": label,
                            "t": float(t),
                            "replications": self.replications,
                            "simulated_mean": float(mean),
                            "simulated_std": float(self.stds[e, i, j]),
                            "true_center": float(center),
                            "true_survival": float(self.true_survival[i, j]),
                            "mean_error": float(mean - center) if np.isfinite(center) else float("nan"),
                            "plugin_sigma": float(self.plugin_sigma[i, j]),
                            "failed": int(self.failures[e, i, j]),
                        }
                    )
        return out


def run_mc_study(
    scenario: DisabilityScenario,
    experts: Sequence[McExpertSpec],
    z_values,
    t_values,
    replications: int,
    bandwidth=None,
    rho: float = 0.3,
    seed: Optional[int] = None,
    threads: int = 1,
    kernel: KernelSpec | None = None,
) -> McStudyResult:
    """Replicate the portfolio, judge, fit at each age, and aggregate.

    Each replication draws a fresh portfolio and fresh judgments from
    substreams keyed by (seed, replication, stream), so results do not
    depend on worker scheduling. The bandwidth is fixed across
    replications (schedule value at the portfolio size unless given).
    """
    if replications < 2:
        raise ValidationError("a study needs at least two replications")
    z_values = np.atleast_1d(np.asarray(z_values, dtype=float))
    t_values = np.atleast_1d(np.asarray(t_values, dtype=float))
    experts = list(experts)
    labels = tuple(spec.label for spec in experts)
    if len(set(labels)) != len(labels):
        raise ValidationError("study column labels must be unique")
    seed = scenario.seed if seed is None else int(seed)
    bw = (
        Bandwidth.from_schedule(scenario.n, 1, rho)
        if bandwidth is None
        else Bandwidth(np.atleast_1d(np.asarray(bandwidth, dtype=float)))
    )
    kernel = (kernel or default_kernel(1)).with_dimension(1)

    shape = (replications, len(experts), z_values.size, t_values.size)
    samples = np.full(shape, np.nan)

    def one_replication(r: int):
        rng = np.random.default_rng([seed, r, 0])
        portfolio = simulate_portfolio(scenario, rng=rng)
        zfull = portfolio.covariate_matrix()
        age = portfolio.z_age[:, None]
        for e, spec in enumerate(experts):
            if spec.model is None or isinstance(spec.model, NaiveExpert):
                eta = portfolio.event
            else:
                eta = spec.model.judge(
                    portfolio.w,
                    portfolio.event,
                    zfull,
                    np.random.default_rng([seed, r, 1 + e]),
                )
            for i, z in enumerate(z_values):
                try:
                    fit = fit_conditional_km(
                        portfolio.w,
                        portfolio.event,
                        age,
                        z,
                        bw,
                        judgments=eta,
                        kernel=kernel,
                    )
                except Exception:
                    continue
                samples[r, e, i, :] = fit.survival(t_values)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(one_replication, range(replications)))
    else:
        for r in range(replications):
            one_replication(r)

    failures = np.sum(~np.isfinite(samples), axis=0)
    means = np.nanmean(samples, axis=0)
    stds = np.nanstd(samples, axis=0, ddof=1)

    centers = np.full((len(experts), z_values.size, t_values.size), np.nan)
    for e, spec in enumerate(experts):
        if spec.effectiveness is None:
            continue
        for i, z in enumerate(z_values):
            for j, t in enumerate(t_values):
                centers[e, i, j] = true_biased_center(t, z, spec.effectiveness, scenario)
    truth = true_survival_grid(scenario, z_values, t_values).values
    plugin = np.empty((z_values.size, t_values.size))
    for i, z in enumerate(z_values):
        for j, t in enumerate(t_values):
            plugin[i, j] = (
                true_sigma_z(t, z, scenario.n, bw.det, scenario, kernel) if t > 0 else 0.0
            )

    return McStudyResult(
        scenario=scenario,
        expert_labels=labels,
        z_values=z_values,
        t_values=t_values,
        replications=replications,
        bandwidth=bw,
        seed=seed,
        means=means,
        stds=stds,
        true_centers=centers,
        true_survival=truth,
        plugin_sigma=plugin,
        failures=failures,
    )


def synthetic_loan_portfolio(n: int = 2_000, seed: int = 0) -> Dataset:
    """Loan-shaped synthetic data for pipeline tests; not calibrated to any
    real book beyond plausible ranges.

    Interest rate in 6-12 percent, debt-to-income in 8-20 percent,
    months-active horizon of 54 months, and default rates rising in both
    covariates to roughly the 5-15 percent range.
    """
    rng = np.random.default_rng([seed, 2718])
    z_ir = rng.uniform(6.0, 12.0, n)
    z_dti = rng.uniform(8.0, 20.0, n)
    hazard = 0.0009 * np.exp(0.22 * (z_ir - 6.0) / 6.0 + 0.9 * (z_dti - 8.0) / 12.0)
    x = rng.exponential(1.0, n) / hazard
    censor = rng.uniform(1.0, 54.0, n)
    w = np.minimum(x, censor)
    event = (x <= censor).astype(float)
    return Dataset(
        w=w,
        event=event,
        covariates=np.column_stack([z_dti, z_ir]),
        covariate_names=("z_dti", "z_ir"),
        provenance="synthetic loan portfolio (not calibrated to real data)",
    )
