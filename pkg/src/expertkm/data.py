"""Validated in-memory dataset of right-censored, possibly adjudicated subjects."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    MissingJudgmentsError,
    NegativeTimeError,
    NonBinaryIndicatorError,
    RaggedCovariatesError,
    ValidationError,
)


class Observation(NamedTuple):
    """One subject: observed time, event flag, covariates, optional judgment."""

    w: float
    event: int
    z: np.ndarray
    judgment: Optional[int]


def validate_survival_arrays(w, event, covariates, judgments=None):
    """Coerce and validate (time, event, covariates[, judgments]) arrays.

    Enforces: nonnegative finite times, binary indicators, a rectangular
    covariate matrix, and judgment <= event (an adjudicator never asserts
    an event the data did not flag).
    """
    w = np.asarray(w, dtype=float)
    event = np.asarray(event)
    try:
        Z = np.asarray(covariates, dtype=float)
    except ValueError as exc:
        raise RaggedCovariatesError(f"covariates are not rectangular: {exc}") from exc
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.ndim != 2:
        raise RaggedCovariatesError("covariates must form a 2-d matrix")
    n = w.shape[0]
    if w.ndim != 1 or event.shape != (n,) or Z.shape[0] != n:
        raise ValidationError("times, events, and covariates have inconsistent lengths")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise NegativeTimeError("observed times must be finite and nonnegative")
    if not np.all(np.isin(event, (0, 1))):
        raise NonBinaryIndicatorError("event indicators must be 0 or 1")
    if not np.all(np.isfinite(Z)):
        raise ValidationError("covariates must be finite")
    event = event.astype(float)
    if judgments is not None:
        judgments = np.asarray(judgments)
        if judgments.shape != (n,):
            raise ValidationError("judgments length does not match observations")
        if not np.all(np.isin(judgments, (0, 1))):
            raise NonBinaryIndicatorError("judgments must be 0 or 1")
        judgments = judgments.astype(float)
        if np.any(judgments > event):
            raise ValidationError("judgments cannot assert events where event=0")
    return w, event, Z, judgments


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable column store of observations with named covariates."""

    w: np.ndarray
    event: np.ndarray
    covariates: np.ndarray
    judgments: Optional[np.ndarray] = None
    covariate_names: Sequence[str] = field(default_factory=tuple)
    provenance: str = ""

    def __post_init__(self):
        w, event, Z, judgments = validate_survival_arrays(
            self.w, self.event, self.covariates, self.judgments
        )
        names = tuple(self.covariate_names) or tuple(f"z_{i+1}" for i in range(Z.shape[1]))
        if len(names) != Z.shape[1]:
            raise ValidationError("covariate_names length does not match covariate columns")
        for arr in (w, event, Z) + (() if judgments is None else (judgments,)):
            arr.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "event", event)
        object.__setattr__(self, "covariates", Z)
        object.__setattr__(self, "judgments", judgments)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def k(self) -> int:
        return self.covariates.shape[1]

    def covariate_column(self, name: str) -> np.ndarray:
        try:
            idx = self.covariate_names.index(name)
        except ValueError:
            raise ValidationError(f"unknown covariate column {name!r}") from None
        return self.covariates[:, idx]

    def select_covariates(self, names: Sequence[str]) -> np.ndarray:
        cols = [self.covariate_column(name) for name in names]
        return np.column_stack(cols)

    def require_judgments(self) -> np.ndarray:
        if self.judgments is None:
            raise MissingJudgmentsError("dataset carries no adjudication column")
        return self.judgments

    def with_judgments(self, judgments) -> "Dataset":
        return Dataset(
            self.w, self.event, self.covariates, judgments, self.covariate_names, self.provenance
        )

    def rows(self):
        """Iterate observations as named tuples (row views, not copies of Z rows)."""
        eta = self.judgments
        for i in range(self.n):
            yield Observation(
                float(self.w[i]),
                int(self.event[i]),
                self.covariates[i],
                None if eta is None else int(eta[i]),
            )
