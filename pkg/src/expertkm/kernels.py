"""Kernel functions, diagonal bandwidths, and cached pairwise weights.

The default smoothing kernel is the Gaussian density truncated to
[-2, 2] and renormalized::

    K(u) = 1_{[-2,2]}(u) * phi(u) / (Phi(2) - Phi(-2))

Multivariate smoothing always uses the product of univariate kernels
across coordinates, scaled coordinatewise by a diagonal bandwidth. The
raw pairwise kernel table dominates the runtime of cross-validated
bandwidth selection, so it is computed once per bandwidth (upper
triangle only, mirrored) and reused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_SQRT_2PI = math.sqrt(2.0 * math.pi)
# Normal mass of [-2, 2]: Phi(2) - Phi(-2) = erf(sqrt(2)).
_TRUNC_MASS = math.erf(math.sqrt(2.0))


def univariate_truncated_gaussian(u):
    """Truncated-Gaussian kernel value, vectorized; zero outside [-2, 2]."""
    u = np.asarray(u, dtype=float)
    dens = np.exp(-0.5 * u * u) / (_SQRT_2PI * _TRUNC_MASS)
    return np.where(np.abs(u) <= 2.0, dens, 0.0)


def adaptive_simpson(f, a, b, tol=1e-8, max_depth=30):
    """Adaptive Simpson quadrature with absolute tolerance; deterministic."""

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    def recurse(x0, x2, f0, f1, f2, whole, eps, depth):
        xm = 0.5 * (x0 + x2)
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = float(f(xl))
        fr = float(f(xr))
        left = simpson(x0, xm, f0, fl, f1)
        right = simpson(xm, x2, f1, fr, f2)
        if depth >= max_depth or abs(left + right - whole) <= 15.0 * eps:
            return left + right + (left + right - whole) / 15.0
        return recurse(x0, xm, f0, fl, f1, left, 0.5 * eps, depth + 1) + recurse(
            xm, x2, f1, fr, f2, right, 0.5 * eps, depth + 1
        )

    a, b = float(a), float(b)
    fa, fm, fb = float(f(a)), float(f(0.5 * (a + b))), float(f(b))
    whole = simpson(a, b, fa, fm, fb)
    return recurse(a, b, fa, fm, fb, whole, tol, 0)


@dataclass(frozen=True)
class KernelSpec:
    """A product kernel: one univariate kernel applied per coordinate.

    The univariate kernel must have compact support contained in
    ``support`` and integrate to one with zero mean. Both moment
    conditions are checked by quadrature at construction unless
    ``validate=False`` (useful for deliberately unnormalized test
    kernels).
    """

    univariate: callable = univariate_truncated_gaussian
    dimension: int = 1
    support: tuple = (-2.0, 2.0)
    name: str = "truncated_gaussian"
    validate: bool = True

    def __post_init__(self):
        if self.dimension < 1:
            raise ValidationError("kernel dimension must be a positive integer")
        lo, hi = self.support
        if not lo < hi:
            raise ValidationError("kernel support must be a nonempty interval")
        if self.validate:
            mass = adaptive_simpson(self.univariate, lo, hi)
            mean = adaptive_simpson(lambda u: u * self.univariate(u), lo, hi)
            if abs(mass - 1.0) > 1e-6:
                raise ValidationError(f"kernel mass {mass!r} is not 1 within 1e-6")
            if abs(mean) > 1e-6:
                raise ValidationError(f"kernel mean {mean!r} is not 0 within 1e-6")

    def with_dimension(self, k: int) -> "KernelSpec":
        if k == self.dimension:
            return self
        return KernelSpec(self.univariate, k, self.support, self.name, validate=False)

    def evaluate(self, u) -> np.ndarray:
        """Product-kernel value of points ``u`` with shape (..., dimension)."""
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != self.dimension:
            raise ValidationError(
                f"kernel argument has dimension {u.shape[-1]}, expected {self.dimension}"
            )
        return np.prod(self.univariate(u), axis=-1)

    def at_zero(self) -> float:
        """K(0), the self-weight appearing in the leave-one-out shortcut."""
        return float(self.evaluate(np.zeros(self.dimension)))

    def l2_norm(self) -> float:
        """Integral of K^2 over the support (univariate value to the k-th power)."""
        lo, hi = self.support
        one_dim = adaptive_simpson(lambda u: self.univariate(u) ** 2, lo, hi)
        return float(one_dim**self.dimension)


_DEFAULT_KERNELS: dict = {}


def default_kernel(dimension: int) -> KernelSpec:
    """The truncated-Gaussian product kernel, validated once per dimension."""
    spec = _DEFAULT_KERNELS.get(dimension)
    if spec is None:
        spec = _DEFAULT_KERNELS[dimension] = KernelSpec(dimension=dimension)
    return spec


@dataclass(frozen=True)
class Bandwidth:
    """Diagonal bandwidth matrix stored as its positive diagonal.

    Distinct per-coordinate entries are allowed and are what
    cross-validated selection produces in practice; the consistency
    theory behind the shrinking schedule assumes equal entries, so
    schedule-generated bandwidths are always isotropic.
    """

    diagonal: np.ndarray

    def __post_init__(self):
        diag = np.atleast_1d(np.asarray(self.diagonal, dtype=float))
        if diag.ndim != 1 or diag.size == 0:
            raise ValidationError("bandwidth diagonal must be a nonempty 1-d sequence")
        if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
            raise ValidationError("bandwidth entries must be finite and strictly positive")
        diag.setflags(write=False)
        object.__setattr__(self, "diagonal", diag)

    @property
    def k(self) -> int:
        return self.diagonal.size

    @property
    def det(self) -> float:
        return float(np.prod(self.diagonal))

    @classmethod
    def from_schedule(cls, n: int, k: int, rho: float = 0.3) -> "Bandwidth":
        """Shrinking schedule b = (log n / n^rho)^(1/k) on every coordinate.

        Any rho in (0, 1/2) keeps the estimator consistent; the default is
        a practical middle value.
        """
        if not 0.0 < rho < 0.5:
            raise ValidationError("schedule exponent rho must lie in (0, 1/2)")
        if n < 2:
            raise ValidationError("schedule bandwidth needs at least two observations")
        b = (math.log(n) / n**rho) ** (1.0 / k)
        return cls(np.full(k, b))


def as_bandwidth(value, k: int) -> Bandwidth:
    """Coerce a float, sequence, or Bandwidth to a k-dimensional Bandwidth."""
    if isinstance(value, Bandwidth):
        bw = value
    else:
        diag = np.atleast_1d(np.asarray(value, dtype=float))
        if diag.size == 1 and k > 1:
            diag = np.full(k, float(diag[0]))
        bw = Bandwidth(diag)
    if bw.k != k:
        raise ValidationError(f"bandwidth has {bw.k} entries, expected {k}")
    return bw


def raw_weights(bandwidth: Bandwidth, covariates, z0, kernel: KernelSpec) -> np.ndarray:
    """Raw kernel values K(B^-1 (Z_i - z0)) for every observation.

    The 1/(n |B|) normalization is intentionally excluded: it cancels in
    every weight-ratio estimate and is applied only where a standalone
    density value is needed.
    """
    Z = np.atleast_2d(np.asarray(covariates, dtype=float))
    z0 = np.atleast_1d(np.asarray(z0, dtype=float))
    if Z.shape[1] != z0.size or Z.shape[1] != bandwidth.k:
        raise ValidationError("covariate, query, and bandwidth dimensions disagree")
    # Scale first, subtract second, so cached pairwise tables and direct
    # recomputation agree bit for bit.
    diag = bandwidth.diagonal[None, :]
    return kernel.evaluate(Z / diag - z0[None, :] / diag)


def scaled_weight(bandwidth: Bandwidth, z_i, z0, kernel: KernelSpec) -> float:
    """Single scaled weight (1/|B|) K(B^-1 (z_i - z0))."""
    w = raw_weights(bandwidth, np.atleast_2d(z_i), z0, kernel)
    return float(w[0]) / bandwidth.det


class WeightCache:
    """Symmetric table of raw pairwise kernel values at a fixed bandwidth.

    Exactly n(n-1)/2 + 1 unique kernel evaluations are performed: the
    strict upper triangle plus the shared self-value K(0); the rest of
    the table is filled by symmetry. ``row_sums`` includes the diagonal.
    """

    def __init__(self, covariates, bandwidth: Bandwidth, kernel: KernelSpec):
        Z = np.atleast_2d(np.asarray(covariates, dtype=float))
        if Z.shape[0] == 0:
            raise ValidationError("weight cache needs at least one observation")
        if Z.shape[1] != bandwidth.k:
            raise ValidationError("covariate and bandwidth dimensions disagree")
        kernel = kernel.with_dimension(Z.shape[1])
        n = Z.shape[0]
        scaled = Z / bandwidth.diagonal[None, :]
        self_value = kernel.at_zero()
        table = np.empty((n, n))
        np.fill_diagonal(table, self_value)
        for i in range(n - 1):
            row = kernel.evaluate(scaled[i + 1 :] - scaled[i])
            table[i, i + 1 :] = row
            table[i + 1 :, i] = row
        table.setflags(write=False)
        self.bandwidth = bandwidth
        self.kernel = kernel
        self.n = n
        self.self_value = self_value
        self.table = table
        self.row_sums = table.sum(axis=0)
        self.n_unique_evaluations = n * (n - 1) // 2 + 1

    def block(self, start: int, stop: int) -> np.ndarray:
        """C-contiguous column block, matching the uncached computation layout."""
        return np.ascontiguousarray(self.table[:, start:stop])
