"""Right-continuous step functions of time and their Stieltjes calculus.

Every estimate produced by this package (observed-time CDF, event
sub-distribution, cumulative hazard, distribution function) is a
nondecreasing cadlag step function. :class:`StepCurve` stores the sorted
jump times and the jump sizes; evaluation, left limits, and integrals
against the curve are all exact operations on that representation. There
is deliberately no interpolation between jumps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True, eq=False)
class StepCurve:
    """A cadlag step function ``t -> baseline + sum of jumps at times <= t``.

    Parameters
    ----------
    times : ndarray
        Strictly increasing jump times, all nonnegative.
    sizes : ndarray
        Jump increments aligned with ``times``. Zero-size entries are legal
        and keep a shared time grid between related curves.
    baseline : float
        Value just before time zero.
    monotone : bool
        When True, construction verifies all increments are nonnegative.
    """

    times: np.ndarray
    sizes: np.ndarray
    baseline: float = 0.0
    monotone: bool = False
    _cum: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        sizes = np.asarray(self.sizes, dtype=float)
        if times.ndim != 1 or sizes.shape != times.shape:
            raise ValueError("times and sizes must be 1-d arrays of equal length")
        if times.size:
            if times[0] < 0:
                raise ValueError("jump times must be nonnegative")
            if np.any(np.diff(times) <= 0):
                raise ValueError("jump times must be strictly increasing")
        if self.monotone and times.size and np.any(sizes < 0):
            raise ValueError("monotone curve cannot have negative jump sizes")
        cum = np.empty(times.size + 1)
        cum[0] = self.baseline
        if times.size:
            np.cumsum(sizes, out=cum[1:])
            cum[1:] += self.baseline
        times.setflags(write=False)
        sizes.setflags(write=False)
        cum.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "_cum", cum)

    @classmethod
    def from_jumps(cls, times, sizes, baseline=0.0, monotone=False) -> "StepCurve":
        """Build a curve from possibly unsorted, possibly tied jump times.

        Contributions sharing a time are merged into a single jump whose
        size is their sum; afterwards all time comparisons are exact.
        """
        times = np.asarray(times, dtype=float)
        sizes = np.asarray(sizes, dtype=float)
        uniq, inverse = np.unique(times, return_inverse=True)
        merged = np.bincount(inverse, weights=sizes, minlength=uniq.size)
        return cls(uniq, merged, baseline=baseline, monotone=monotone)

    @property
    def n_jumps(self) -> int:
        return self.times.size

    def value(self, t):
        """Right-continuous evaluation at ``t`` (scalar or array)."""
        idx = np.searchsorted(self.times, t, side="right")
        out = self._cum[idx]
        return float(out) if np.isscalar(t) else out

    def value_left(self, t):
        """Left limit at ``t``: excludes a jump located exactly at ``t``."""
        idx = np.searchsorted(self.times, t, side="left")
        out = self._cum[idx]
        return float(out) if np.isscalar(t) else out

    def jump_at(self, t):
        """Size of the jump at ``t`` (zero when no jump is located there)."""
        return self.value(t) - self.value_left(t)

    def restricted(self, t_max) -> "StepCurve":
        """The same curve with jumps beyond ``t_max`` discarded."""
        n = int(np.searchsorted(self.times, t_max, side="right"))
        return StepCurve(self.times[:n], self.sizes[:n], self.baseline, self.monotone)

    def to_table(self) -> np.ndarray:
        """Two-column (time, cumulative value) array for plot emission."""
        return np.column_stack([self.times, self._cum[1:]])


def stieltjes_integral(integrand, curve: StepCurve, t_max) -> float:
    """Integral of ``integrand`` against the curve over the closed interval [0, t_max].

    ``integrand`` must accept an array of jump times. The result is the
    exact jump sum ``sum integrand(s) * size(s)`` over jump times ``s <= t_max``.
    """
    n = int(np.searchsorted(curve.times, t_max, side="right"))
    if n == 0:
        return 0.0
    s = curve.times[:n]
    vals = np.asarray(integrand(s), dtype=float)
    return float(np.sum(vals * curve.sizes[:n]))


def integrate_value(curve: StepCurve, t_max) -> float:
    """Exact Lebesgue integral of ``curve.value`` over [0, t_max]."""
    t_max = float(t_max)
    n = int(np.searchsorted(curve.times, t_max, side="right"))
    knots = np.concatenate([[0.0], curve.times[:n], [t_max]])
    widths = np.diff(knots)
    return float(np.sum(widths * curve._cum[: n + 1]))


def merge_jump_curves(a: StepCurve, b: StepCurve) -> StepCurve:
    """Sum of two step curves as a single curve on the union of jump times."""
    if b.n_jumps == 0:
        return StepCurve(a.times, a.sizes, a.baseline + b.baseline, a.monotone and b.monotone)
    if a.n_jumps == 0:
        return StepCurve(b.times, b.sizes, a.baseline + b.baseline, a.monotone and b.monotone)
    return StepCurve.from_jumps(
        np.concatenate([a.times, b.times]),
        np.concatenate([a.sizes, b.sizes]),
        baseline=a.baseline + b.baseline,
        monotone=a.monotone and b.monotone,
    )
