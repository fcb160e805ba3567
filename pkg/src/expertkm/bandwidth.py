"""Functional least-squares cross-validation for bandwidth selection.

For a fixed time ``t`` the leave-one-out CV score of the weighted
empirical CDF is

    CV(t, B) = (1/n) sum_m ( y_m(t) - NW_{-m}(t; Z_m) )^2

with response ``y_m(t) = 1(W_m <= t)`` (times the acceptance indicator
for the event-curve target) and ``NW_{-m}`` the Nadaraya-Watson estimate
with observation m held out. Computing NW_{-m} from scratch per m is
quadratic work per candidate; instead the full-sample residual is
rescaled exactly:

    y_m - NW_{-m}(Z_m) = (y_m - NW(Z_m)) / (1 - K(0) / G_m),

where ``G_m = sum_j K(B^-1 (Z_j - Z_m))`` includes the self-weight. The
identity is algebraic, so shortcut and direct scores agree to rounding.
Observations whose neighborhood is empty (``G_m`` equals the
self-weight) have no leave-one-out estimate; their terms are excluded
from the sum and counted, rather than failing the candidate.

A bandwidth is scored simultaneously for the observed-time curve and the
accepted-event curve by integrating the squared pair norm over time:

    score(B) = int w(s) * ( CV_obs(s)^2 + CV_evt(s)^2 ) ds

(trapezoid rule on the time grid; a single-point grid scores the point
value). Lower is better; exact ties break toward the smoother candidate
(larger bandwidth determinant).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AllCandidatesDegenerateError, ValidationError
from .kernels import Bandwidth, KernelSpec, WeightCache, as_bandwidth, default_kernel, raw_weights

TARGET_OBSERVED = "observed"
TARGET_EVENTS = "events"


@dataclass(frozen=True)
class CoordinateDescent:
    """Per-coordinate multiplicative refinement around a starting bandwidth."""

    initial: Optional[Sequence[float]] = None
    shrink: float = 0.5
    grow: float = 2.0
    max_sweeps: int = 8
    tol: float = 0.0


@dataclass(frozen=True)
class CvConfig:
    """Search space and functional-integration settings.

    ``grid`` holds per-coordinate candidate lists (their cartesian
    product is searched). When neither ``grid`` nor
    ``coordinate_descent`` is given, a default grid of schedule-bandwidth
    multiples is used. ``t_grid`` defaults to the distinct observed times
    (thinned evenly beyond ``max_grid_points``), where the CV curves
    actually step.
    """

    t_grid: Optional[Sequence[float]] = None
    t_max: Optional[float] = None
    weight_fn: Optional[callable] = None
    grid: Optional[Sequence[Sequence[float]]] = None
    coordinate_descent: Optional[CoordinateDescent] = None
    targets: Sequence[str] = (TARGET_OBSERVED, TARGET_EVENTS)
    max_grid_points: int = 128
    cache_limit: int = 4096
    block_size: int = 1024

    def __post_init__(self):
        bad = set(self.targets) - {TARGET_OBSERVED, TARGET_EVENTS}
        if bad or not self.targets:
            raise ValidationError(f"unknown CV targets {sorted(bad)!r}")


@dataclass(frozen=True, eq=False)
class CvScores:
    """Per-time CV values for each target plus the excluded-term count."""

    t_grid: np.ndarray
    observed: Optional[np.ndarray]
    events: Optional[np.ndarray]
    n_excluded: int

    def combined(self) -> np.ndarray:
        parts = [v for v in (self.observed, self.events) if v is not None]
        return np.sum([v**2 for v in parts], axis=0)


def _resolve_grid(w, config: CvConfig) -> np.ndarray:
    if config.t_grid is not None:
        grid = np.asarray(config.t_grid, dtype=float)
        if grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise ValidationError("t_grid must be nonempty and increasing")
        return grid
    t_max = config.t_max if config.t_max is not None else float(np.max(w))
    grid = np.unique(w)
    grid = grid[grid <= t_max]
    if grid.size == 0:
        raise ValidationError("no observed times at or below t_max")
    if grid.size > config.max_grid_points:
        step = math.ceil(grid.size / config.max_grid_points)
        grid = grid[::step]
    return grid


def cv_scores(
    w,
    judgments,
    covariates,
    bandwidth,
    t_grid,
    kernel: KernelSpec | None = None,
    cache: WeightCache | None = None,
    targets: Sequence[str] = (TARGET_OBSERVED, TARGET_EVENTS),
    block_size: int = 1024,
) -> CvScores:
    """Shortcut leave-one-out CV values on a time grid at one bandwidth.

    With ``cache`` given, stored pairwise kernel values are used;
    otherwise they are recomputed in column blocks. Both paths perform
    identical floating-point operations and agree bit for bit.
    """
    w = np.asarray(w, dtype=float)
    Z = np.atleast_2d(np.asarray(covariates, dtype=float))
    n, k = Z.shape
    bw = as_bandwidth(bandwidth, k)
    kernel = (kernel or default_kernel(k)).with_dimension(k)
    t_grid = np.asarray(t_grid, dtype=float)
    want_obs = TARGET_OBSERVED in targets
    want_evt = TARGET_EVENTS in targets
    if want_evt and judgments is None:
        raise ValidationError("event-curve CV target needs acceptance indicators")

    ind = (w[:, None] <= t_grid[None, :]).astype(float)
    responses = []
    if want_obs:
        responses.append(ind)
    if want_evt:
        responses.append(ind * np.asarray(judgments, dtype=float)[:, None])

    k0 = kernel.at_zero()
    scaled = Z / bw.diagonal[None, :]
    G = np.empty(n)
    hats = [np.empty((n, t_grid.size)) for _ in responses]
    for m0 in range(0, n, block_size):
        m1 = min(m0 + block_size, n)
        if cache is not None:
            Kb = cache.block(m0, m1)
        else:
            Kb = kernel.evaluate(scaled[:, None, :] - scaled[None, m0:m1, :])
        G[m0:m1] = Kb.sum(axis=0)
        KbT = np.ascontiguousarray(Kb.T)
        for resp, hat in zip(responses, hats):
            hat[m0:m1] = KbT @ resp

    included = G > k0
    n_excluded = int(n - included.sum())
    out = {}
    labels = [t for t in (TARGET_OBSERVED, TARGET_EVENTS) if t in targets]
    if included.any():
        ratio = 1.0 - k0 / G[included]
        for label, resp, hat in zip(labels, responses, hats):
            resid = (resp[included] - hat[included] / G[included, None]) / ratio[:, None]
            out[label] = np.sum(resid**2, axis=0) / n
    else:
        for label in labels:
            out[label] = np.full(t_grid.size, np.nan)
    return CvScores(
        t_grid=t_grid,
        observed=out.get(TARGET_OBSERVED),
        events=out.get(TARGET_EVENTS),
        n_excluded=n_excluded,
    )


def cv_score_at_t(
    t,
    w,
    judgments,
    covariates,
    bandwidth,
    use_judgments: bool = True,
    kernel: KernelSpec | None = None,
    cache: WeightCache | None = None,
) -> tuple[float, int]:
    """Single-time shortcut CV score; returns (score, excluded terms).

    The score is NaN when every observation is isolated at this bandwidth.
    """
    target = TARGET_EVENTS if use_judgments else TARGET_OBSERVED
    scores = cv_scores(
        w,
        judgments,
        covariates,
        bandwidth,
        np.atleast_1d(np.asarray(t, dtype=float)),
        kernel=kernel,
        cache=cache,
        targets=(target,),
    )
    values = scores.events if use_judgments else scores.observed
    return float(values[0]), scores.n_excluded


def direct_loo_score(
    t,
    w,
    judgments,
    covariates,
    bandwidth,
    use_judgments: bool = True,
    kernel: KernelSpec | None = None,
) -> tuple[float, int]:
    """Literal leave-one-out CV score, one held-out refit per observation.

    Quadratic and only meant for verification against the shortcut.
    """
    w = np.asarray(w, dtype=float)
    Z = np.atleast_2d(np.asarray(covariates, dtype=float))
    n, k = Z.shape
    bw = as_bandwidth(bandwidth, k)
    kernel = (kernel or default_kernel(k)).with_dimension(k)
    y = (w <= float(t)).astype(float)
    if use_judgments:
        if judgments is None:
            raise ValidationError("event-curve CV target needs acceptance indicators")
        y = y * np.asarray(judgments, dtype=float)
    total = 0.0
    excluded = 0
    for m in range(n):
        keep = np.arange(n) != m
        km = raw_weights(bw, Z[keep], Z[m], kernel)
        gm = km.sum()
        if gm <= 0.0:
            excluded += 1
            continue
        estimate = float(km @ y[keep]) / float(gm)
        total += (y[m] - estimate) ** 2
    if excluded == n:
        return float("nan"), excluded
    return total / n, excluded


@dataclass(frozen=True, eq=False)
class FunctionalCvResult:
    score: float
    scores: CvScores
    n_excluded: int


def functional_cv(
    bandwidth,
    w,
    judgments,
    covariates,
    config: CvConfig = CvConfig(),
    kernel: KernelSpec | None = None,
    cache: WeightCache | None = None,
) -> FunctionalCvResult:
    """Time-integrated squared CV norm of one candidate bandwidth."""
    w = np.asarray(w, dtype=float)
    grid = _resolve_grid(w, config)
    scores = cv_scores(
        w,
        judgments,
        covariates,
        bandwidth,
        grid,
        kernel=kernel,
        cache=cache,
        targets=config.targets,
        block_size=config.block_size,
    )
    combined = scores.combined()
    weights = (
        np.ones(grid.size)
        if config.weight_fn is None
        else np.asarray(config.weight_fn(grid), dtype=float)
    )
    if np.any(weights < 0):
        raise ValidationError("time weights must be nonnegative")
    weighted = weights * combined
    score = float(weighted[0]) if grid.size == 1 else float(np.trapezoid(weighted, grid))
    return FunctionalCvResult(score=score, scores=scores, n_excluded=scores.n_excluded)


@dataclass(frozen=True)
class CandidateRow:
    diagonal: tuple
    score: float
    n_excluded: int


@dataclass(frozen=True, eq=False)
class SelectionReport:
    selected: Bandwidth
    rows: list
    strategy: str

    def to_table(self) -> np.ndarray:
        """Rows (b_1, ..., b_k, score, excluded_terms)."""
        return np.array(
            [list(r.diagonal) + [r.score, float(r.n_excluded)] for r in self.rows]
        )


def _default_grid(n, k, rho) -> list:
    base = Bandwidth.from_schedule(n, k, rho).diagonal[0]
    return [[base * m for m in (0.25, 0.5, 1.0, 2.0, 4.0)]] * k


def select_bandwidth(
    w,
    judgments,
    covariates,
    config: CvConfig = CvConfig(),
    kernel: KernelSpec | None = None,
    rho: float = 0.3,
) -> SelectionReport:
    """Search the configured candidates; lower score wins, ties go smoother.

    Raises when every candidate is degenerate (all terms excluded).
    """
    Z = np.atleast_2d(np.asarray(covariates, dtype=float))
    n, k = Z.shape
    kernel = (kernel or default_kernel(k)).with_dimension(k)

    def evaluate(diag) -> CandidateRow:
        bw = Bandwidth(np.asarray(diag, dtype=float))
        cache = WeightCache(Z, bw, kernel) if n <= config.cache_limit else None
        result = functional_cv(bw, w, judgments, Z, config, kernel=kernel, cache=cache)
        return CandidateRow(tuple(bw.diagonal), result.score, result.n_excluded)

    rows = []
    if config.coordinate_descent is not None:
        strategy = "coordinate_descent"
        cd = config.coordinate_descent
        current = np.asarray(
            cd.initial if cd.initial is not None else Bandwidth.from_schedule(n, k, rho).diagonal,
            dtype=float,
        )
        best = evaluate(current)
        rows.append(best)
        for _ in range(cd.max_sweeps):
            improved = False
            for coord in range(k):
                for factor in (cd.shrink, cd.grow):
                    trial = current.copy()
                    trial[coord] *= factor
                    row = evaluate(trial)
                    rows.append(row)
                    if math.isfinite(row.score) and (
                        not math.isfinite(best.score) or row.score < best.score - cd.tol
                    ):
                        best, current, improved = row, trial, True
            if not improved:
                break
    else:
        strategy = "grid"
        per_coord = config.grid if config.grid is not None else _default_grid(n, k, rho)
        if len(per_coord) == 1 and k > 1:
            per_coord = list(per_coord) * k
        if len(per_coord) != k:
            raise ValidationError("grid must supply candidates for every coordinate")
        for combo in itertools.product(*per_coord):
            rows.append(evaluate(combo))

    feasible = [r for r in rows if math.isfinite(r.score)]
    if not feasible:
        raise AllCandidatesDegenerateError(
            "every candidate bandwidth left all observations isolated"
        )
    best = min(feasible, key=lambda r: (r.score, -math.prod(r.diagonal)))
    return SelectionReport(selected=Bandwidth(np.asarray(best.diagonal)), rows=rows, strategy=strategy)
