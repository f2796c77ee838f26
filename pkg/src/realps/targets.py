"""Target distributions as unnormalized log-density oracles.

Built-in mixture families (Gaussian, Student-t) carry their component
decomposition and an exact sampler so tests can use closed-form and
quadrature oracles.  Densities accept a single point of shape ``(d,)``
or a stack of points of shape ``(n, d)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, UnsupportedDimensionError

# Heavy-tail floor: evaluations never return -inf so MH ratios stay defined.
LOG_DENSITY_FLOOR = -1e300


class QuadratureWarning(UserWarning):
    pass


class CoverageWarning(QuadratureWarning):
    """Grid does not capture enough of the integrand mass."""


class CoarseGridWarning(QuadratureWarning):
    """Adjacent grid cells differ too much for the trapezoid rule to be trusted."""


def logsumexp(a: np.ndarray, axis: int | None = None, b: np.ndarray | None = None):
    """Stable log-sum-exp; with optional nonnegative scale factors ``b``."""
    a = np.asarray(a, dtype=float)
    scalar_out = axis is None
    if scalar_out:
        a = a.ravel()
        if b is not None:
            b = np.asarray(b, dtype=float).ravel()
        axis = 0
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    expd = np.exp(a - amax)
    if b is not None:
        expd = expd * b
    s = np.sum(expd, axis=axis, keepdims=True)
    with np.errstate(divide="ignore"):  # all-zero slices legitimately give -inf
        out = np.log(s) + amax
    out = np.squeeze(out, axis=axis)
    return out.item() if scalar_out else out


@dataclass(frozen=True)
class TargetModel:
    """Unnormalized log-density oracle, optionally with mixture components.

    ``components`` is a tuple of ``(alpha_k, log_pdf_k)`` pairs where each
    ``log_pdf_k`` is normalized, so the alphas are true mixture weights.
    Immutable after construction; safe for concurrent reads.
    """

    dim: int
    log_density: Callable[[np.ndarray], np.ndarray]
    components: tuple[tuple[float, Callable[[np.ndarray], np.ndarray]], ...] | None = None
    exact_sampler: Callable[[np.random.Generator, int], np.ndarray] | None = None
    vectorized: bool = False
    modes: np.ndarray | None = None

    def log_density_batch(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if self.vectorized:
            return np.asarray(self.log_density(xs), dtype=float)
        return np.array([float(self.log_density(x)) for x in xs])

    def component_log_density_batch(self, k: int, xs: np.ndarray) -> np.ndarray:
        if self.components is None:
            raise ConfigurationError("target has no component decomposition")
        _, logf = self.components[k]
        xs = np.asarray(xs, dtype=float)
        if self.vectorized:
            return np.asarray(logf(xs), dtype=float)
        return np.array([float(logf(x)) for x in xs])

    @property
    def n_components(self) -> int:
        return 0 if self.components is None else len(self.components)

    @property
    def component_weights(self) -> np.ndarray:
        if self.components is None:
            raise ConfigurationError("target has no component decomposition")
        return np.array([a for a, _ in self.components])


@dataclass(frozen=True)
class GaussianMixtureSpec:
    means: Sequence[Sequence[float]]
    covariances: Sequence[Sequence[Sequence[float]]]
    weights: Sequence[float]

    def validate(self) -> None:
        means = np.asarray(self.means, dtype=float)
        if means.ndim != 2:
            raise ConfigurationError("means must be a list of points")
        k, d = means.shape
        covs = np.asarray(self.covariances, dtype=float)
        if covs.shape != (k, d, d):
            raise ConfigurationError(f"covariances must have shape ({k}, {d}, {d})")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (k,) or np.any(w <= 0):
            raise ConfigurationError("weights must be positive, one per component")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"weights must sum to 1, got {w.sum()!r}")
        for i, c in enumerate(covs):
            if not np.allclose(c, c.T, atol=1e-12):
                raise ConfigurationError(f"covariance of component {i} is not symmetric")
            try:
                np.linalg.cholesky(c)
            except np.linalg.LinAlgError:
                raise ConfigurationError(
                    f"covariance of component {i} is not positive definite"
                ) from None


@dataclass(frozen=True)
class StudentTMixtureSpec:
    means: Sequence[Sequence[float]]
    scales: Sequence[float]
    dofs: Sequence[float]
    weights: Sequence[float]

    def validate(self) -> None:
        means = np.asarray(self.means, dtype=float)
        if means.ndim != 2:
            raise ConfigurationError("means must be a list of points")
        k = means.shape[0]
        scales = np.asarray(self.scales, dtype=float)
        dofs = np.asarray(self.dofs, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if scales.shape != (k,) or np.any(scales <= 0):
            raise ConfigurationError("scales must be positive, one per component")
        if dofs.shape != (k,) or np.any(dofs <= 0):
            raise ConfigurationError("dofs must be positive, one per component")
        if w.shape != (k,) or np.any(w <= 0):
            raise ConfigurationError("weights must be positive, one per component")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError(f"weights must sum to 1, got {w.sum()!r}")


def _gaussian_logpdf_factory(mean: np.ndarray, cov: np.ndarray):
    d = mean.shape[0]
    chol = np.linalg.cholesky(cov)
    prec = np.linalg.inv(cov)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    const = -0.5 * (d * math.log(2.0 * math.pi) + logdet)

    def logpdf(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        diff = x - mean
        quad = np.einsum("...i,ij,...j->...", diff, prec, diff)
        return const - 0.5 * quad

    return logpdf, chol


def make_gaussian_mixture(spec: GaussianMixtureSpec) -> TargetModel:
    """Build a Gaussian-mixture target with components and an exact sampler."""
    spec.validate()
    means = np.asarray(spec.means, dtype=float)
    covs = np.asarray(spec.covariances, dtype=float)
    weights = np.asarray(spec.weights, dtype=float)
    k, d = means.shape

    logpdfs, chols = [], []
    for i in range(k):
        lp, ch = _gaussian_logpdf_factory(means[i], covs[i])
        logpdfs.append(lp)
        chols.append(ch)
    logw = np.log(weights)

    def log_density(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        comp = np.stack([lp(x) for lp in logpdfs], axis=-1)
        return np.maximum(logsumexp(comp + logw, axis=-1), LOG_DENSITY_FLOOR)

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(k, size=n, p=weights)
        z = rng.standard_normal((n, d))
        out = np.empty((n, d))
        for i in range(k):
            sel = idx == i
            out[sel] = means[i] + z[sel] @ chols[i].T
        return out

    components = tuple((float(weights[i]), logpdfs[i]) for i in range(k))
    return TargetModel(
        dim=d,
        log_density=log_density,
        components=components,
        exact_sampler=sampler,
        vectorized=True,
        modes=means.copy(),
    )


def _student_t_logpdf_factory(mean: np.ndarray, scale: float, dof: float):
    d = mean.shape[0]
    const = (
        math.lgamma((dof + d) / 2.0)
        - math.lgamma(dof / 2.0)
        - 0.5 * d * math.log(dof * math.pi)
        - d * math.log(scale)
    )

    def logpdf(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sq = np.sum((x - mean) ** 2, axis=-1)
        return const - 0.5 * (dof + d) * np.log1p(sq / (dof * scale * scale))

    return logpdf


def make_student_t_mixture(spec: StudentTMixtureSpec) -> TargetModel:
    """Build a mixture of isotropic multivariate Student-t components."""
    spec.validate()
    means = np.asarray(spec.means, dtype=float)
    scales = np.asarray(spec.scales, dtype=float)
    dofs = np.asarray(spec.dofs, dtype=float)
    weights = np.asarray(spec.weights, dtype=float)
    k, d = means.shape

    logpdfs = [_student_t_logpdf_factory(means[i], scales[i], dofs[i]) for i in range(k)]
    logw = np.log(weights)

    def log_density(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        comp = np.stack([lp(x) for lp in logpdfs], axis=-1)
        return np.maximum(logsumexp(comp + logw, axis=-1), LOG_DENSITY_FLOOR)

    def sampler(rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(k, size=n, p=weights)
        out = np.empty((n, d))
        for i in range(k):
            sel = idx == i
            m = int(sel.sum())
            z = rng.standard_normal((m, d))
            g = rng.chisquare(dofs[i], size=(m, 1))
            out[sel] = means[i] + scales[i] * z * np.sqrt(dofs[i] / g)
        return out

    components = tuple((float(weights[i]), logpdfs[i]) for i in range(k))
    return TargetModel(
        dim=d,
        log_density=log_density,
        components=components,
        exact_sampler=sampler,
        vectorized=True,
        modes=means.copy(),
    )


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor trapezoid grid over a box, for d in {1, 2}."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    num: tuple[int, ...]

    def __post_init__(self):
        if not (1 <= len(self.lower) <= 2):
            raise UnsupportedDimensionError("quadrature grids support d in {1, 2}")
        if not (len(self.lower) == len(self.upper) == len(self.num)):
            raise ConfigurationError("lower/upper/num must have matching lengths")
        if any(n < 2 for n in self.num):
            raise ConfigurationError("each axis needs at least 2 points")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ConfigurationError("upper bounds must exceed lower bounds")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def axes(self) -> list[np.ndarray]:
        return [
            np.linspace(self.lower[i], self.upper[i], self.num[i])
            for i in range(self.dim)
        ]

    def nodes(self) -> np.ndarray:
        axes = self.axes()
        if self.dim == 1:
            return axes[0][:, None]
        xx, yy = np.meshgrid(axes[0], axes[1], indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=-1)

    def log_weights(self) -> np.ndarray:
        parts = []
        for i in range(self.dim):
            h = (self.upper[i] - self.lower[i]) / (self.num[i] - 1)
            w = np.full(self.num[i], h)
            w[0] = w[-1] = h / 2.0
            parts.append(np.log(w))
        if self.dim == 1:
            return parts[0]
        return (parts[0][:, None] + parts[1][None, :]).ravel()

    def boundary_mask(self) -> np.ndarray:
        masks = []
        for i in range(self.dim):
            m = np.zeros(self.num[i], dtype=bool)
            m[0] = m[-1] = True
            masks.append(m)
        if self.dim == 1:
            return masks[0]
        return (masks[0][:, None] | masks[1][None, :]).ravel()

    def bin_edges(self) -> list[np.ndarray]:
        """Node-centered cell edges, for histogramming samples onto the grid."""
        edges = []
        for ax in self.axes():
            mid = 0.5 * (ax[:-1] + ax[1:])
            h0 = ax[1] - ax[0]
            h1 = ax[-1] - ax[-2]
            edges.append(np.concatenate([[ax[0] - h0 / 2], mid, [ax[-1] + h1 / 2]]))
        return edges

    def refine(self) -> "QuadratureGrid":
        return QuadratureGrid(self.lower, self.upper, tuple(2 * n - 1 for n in self.num))


def quadrature_log_partition(
    model: TargetModel,
    log_weight_fn: Callable[[np.ndarray], np.ndarray],
    grid: QuadratureGrid,
) -> float:
    """log of the integral of ``exp(log_density + log_weight_fn)`` over the grid box.

    ``log_weight_fn`` must accept stacked points of shape ``(n, d)``.
    Warns (CoverageWarning / CoarseGridWarning) when the tail-sum heuristic or
    the adjacent-cell smoothness check fails.
    """
    if model.dim > 2:
        raise UnsupportedDimensionError(
            f"quadrature oracle supports dim <= 2, got {model.dim}"
        )
    if model.dim != grid.dim:
        raise ConfigurationError("grid dimension does not match model dimension")
    nodes = grid.nodes()
    logf = model.log_density_batch(nodes) + np.asarray(log_weight_fn(nodes), dtype=float)
    contrib = logf + grid.log_weights()
    total = logsumexp(contrib)

    boundary = grid.boundary_mask()
    if np.any(boundary):
        tail = logsumexp(contrib[boundary])
        if tail - total > math.log(1e-6):
            warnings.warn(
                "grid boundary carries more than 1e-6 of the integrand mass; "
                "enlarge the integration box",
                CoverageWarning,
                stacklevel=2,
            )

    # Smoothness check restricted to cells actually carrying mass; tail cells
    # hundreds of nats below the peak may jump freely.
    shaped = logf.reshape(grid.num)
    relevant = shaped >= shaped.max() - 60.0
    jump = 0.0
    for a in range(grid.dim):
        d = np.abs(np.diff(shaped, axis=a))
        m = np.logical_and(
            np.take(relevant, range(0, relevant.shape[a] - 1), axis=a),
            np.take(relevant, range(1, relevant.shape[a]), axis=a),
        )
        if np.any(m):
            jump = max(jump, float(d[m].max()))
    if jump > 5.0:
        warnings.warn(
            f"adjacent grid cells jump {jump:.1f} nats; grid too coarse",
            CoarseGridWarning,
            stacklevel=2,
        )
    return float(total)
