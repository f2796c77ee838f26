"""Tilting family, temperature ladder, and tilted tempered densities.

The tilt is the isotropic Gaussian exponent ``-beta * ||x - x_k||^2 / 2``.
Level indices are 1-based throughout: level 1 is the coldest (largest beta),
level L is the target (beta = 0, tilt identically 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError
from .targets import TargetModel, logsumexp


@dataclass(frozen=True)
class WarmStartSet:
    """Approximate mode locations; teleports are translations between them."""

    centers: np.ndarray  # (M, d)

    def __post_init__(self):
        c = np.asarray(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ConfigurationError("warm starts must be a (M, d) array with M >= 1")
        if not np.all(np.isfinite(c)):
            raise ConfigurationError("warm starts must be finite")
        object.__setattr__(self, "centers", c)

    @property
    def n_modes(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def translate(self, x: np.ndarray, j: int, jp: int) -> np.ndarray:
        """Teleportation map from mode ``j`` to mode ``jp`` (0-based indices)."""
        return x - self.centers[j] + self.centers[jp]


@dataclass(frozen=True)
class TemperatureLadder:
    betas: np.ndarray  # (L,)

    def __post_init__(self):
        object.__setattr__(self, "betas", np.asarray(self.betas, dtype=float))

    @property
    def n_levels(self) -> int:
        return len(self.betas)

    def beta(self, i: int) -> float:
        """Tilt strength at 1-based level ``i``."""
        return float(self.betas[i - 1])

    def validate(self) -> None:
        b = self.betas
        if len(b) < 1 or not np.all(np.isfinite(b)):
            raise ConfigurationError("ladder must be a finite, non-empty beta sequence")
        if np.any(np.diff(b) >= 0):
            raise ConfigurationError("betas must be strictly decreasing (cold to target)")
        if b[-1] != 0.0:
            raise ConfigurationError("final beta must be exactly 0 (target level)")


@dataclass(frozen=True)
class LadderSpec:
    """Inputs for the arithmetic ladder: beta_1 = c_beta1 * smoothness^2 * D^2 * d,
    step = c_dbeta / (log-Sobolev scale * d + mean displacement^2)."""

    dim: int
    smoothness: float
    log_sobolev_scale: float
    warm_start_dist: float
    mean_disp: float = 0.0
    c_beta1: float = 1.0
    c_dbeta: float = 1.0
    max_levels: int = 256

    def validate(self) -> None:
        for name in ("smoothness", "log_sobolev_scale", "warm_start_dist", "c_beta1", "c_dbeta"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.mean_disp < 0:
            raise ConfigurationError("mean_disp must be nonnegative")
        if self.dim < 1:
            raise ConfigurationError("dim must be >= 1")


def build_ladder(spec: LadderSpec) -> TemperatureLadder:
    """Arithmetic ladder from beta_1 down, final step snapped to exactly 0."""
    spec.validate()
    beta1 = spec.c_beta1 * spec.smoothness**2 * spec.warm_start_dist**2 * spec.dim
    dbeta = spec.c_dbeta / (spec.log_sobolev_scale * spec.dim + spec.mean_disp**2)
    n_steps = math.ceil(beta1 / dbeta)
    n_levels = n_steps + 1
    if n_levels > spec.max_levels:
        raise ConfigurationError(
            f"ladder would need {n_levels} levels (> max_levels={spec.max_levels}); "
            "increase c_dbeta or max_levels"
        )
    betas = beta1 - dbeta * np.arange(n_levels)
    betas[-1] = 0.0
    ladder = TemperatureLadder(betas)
    ladder.validate()
    return ladder


def log_tilt(beta: float, x: np.ndarray, center: np.ndarray):
    """Gaussian tilt exponent ``-beta * ||x - center||^2 / 2``; beta = 0 gives 0."""
    x = np.asarray(x, dtype=float)
    sq = np.sum((x - center) ** 2, axis=-1)
    out = -0.5 * beta * sq
    return out.item() if out.ndim == 0 else out


@dataclass(frozen=True)
class TemperingScheme:
    """Ladder, warm starts, and the learned component/level weights.

    Weights are meaningful up to scale; canonical storage keeps
    ``max_k w[i, k] == 1`` per level and ``sum(r) == 1``.  A freshly
    initialized scheme has NaN in the rows that training has not reached.
    """

    ladder: TemperatureLadder
    warm_starts: WarmStartSet
    component_weights: np.ndarray  # (L, M)
    level_weights: np.ndarray  # (L,)

    def __post_init__(self):
        object.__setattr__(
            self, "component_weights", np.asarray(self.component_weights, dtype=float)
        )
        object.__setattr__(self, "level_weights", np.asarray(self.level_weights, dtype=float))
        L, M = self.ladder.n_levels, self.warm_starts.n_modes
        if self.component_weights.shape != (L, M):
            raise ConfigurationError(f"component weights must have shape ({L}, {M})")
        if self.level_weights.shape != (L,):
            raise ConfigurationError(f"level weights must have shape ({L},)")

    @property
    def n_levels(self) -> int:
        return self.ladder.n_levels

    @property
    def n_modes(self) -> int:
        return self.warm_starts.n_modes

    @classmethod
    def initial(cls, ladder: TemperatureLadder, warm_starts: WarmStartSet,
                target: TargetModel) -> "TemperingScheme":
        """Seed scheme: coldest-level weights set, the rest awaiting training."""
        L, M = ladder.n_levels, warm_starts.n_modes
        w = np.full((L, M), np.nan)
        r = np.full(L, np.nan)
        w[0] = init_coldest_weights(target, warm_starts)
        r[0] = 1.0
        return cls(ladder, warm_starts, w, r)

    def validate(self) -> None:
        self.ladder.validate()
        if not (np.all(np.isfinite(self.component_weights)) and np.all(self.component_weights > 0)):
            raise ConfigurationError("component weights must be positive and finite")
        if not (np.all(np.isfinite(self.level_weights)) and np.all(self.level_weights > 0)):
            raise ConfigurationError("level weights must be positive and finite")

    def canonicalize(self) -> "TemperingScheme":
        w = self.component_weights / np.nanmax(self.component_weights, axis=1, keepdims=True)
        r = self.level_weights / np.nansum(self.level_weights)
        return replace(self, component_weights=w, level_weights=r)

    def restrict(self, n_levels: int) -> "TemperingScheme":
        """Sub-scheme over levels 1..n_levels with level weights renormalized."""
        if not 1 <= n_levels <= self.n_levels:
            raise ConfigurationError(f"cannot restrict to {n_levels} levels")
        r = self.level_weights[:n_levels]
        return TemperingScheme(
            TemperatureLadder(self.ladder.betas[:n_levels]),
            self.warm_starts,
            self.component_weights[:n_levels].copy(),
            r / r.sum(),
        )

    def with_level_weights(self, r: np.ndarray) -> "TemperingScheme":
        return replace(self, level_weights=np.asarray(r, dtype=float))

    def to_json_dict(self) -> dict:
        return {
            "betas": self.ladder.betas.tolist(),
            "centers": self.warm_starts.centers.tolist(),
            "w": self.component_weights.tolist(),
            "r": self.level_weights.tolist(),
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TemperingScheme":
        scheme = cls(
            TemperatureLadder(np.asarray(d["betas"], dtype=float)),
            WarmStartSet(np.asarray(d["centers"], dtype=float)),
            np.asarray(d["w"], dtype=float),
            np.asarray(d["r"], dtype=float),
        )
        scheme.validate()
        return scheme


def log_tilt_mixture(scheme: TemperingScheme, i: int, x: np.ndarray):
    """log sum_k w[i,k] * q_i(x - x_k) at 1-based level ``i``; no target factor."""
    beta = scheme.ladder.beta(i)
    logw = np.log(scheme.component_weights[i - 1])
    x = np.asarray(x, dtype=float)
    diff = x[..., None, :] - scheme.warm_starts.centers  # (..., M, d)
    tilt = -0.5 * beta * np.sum(diff * diff, axis=-1)
    out = logsumexp(tilt + logw, axis=-1)
    return out if np.ndim(out) else float(out)


def log_tempered_density(scheme: TemperingScheme, target: TargetModel, i: int, x: np.ndarray):
    """Unnormalized log of pi(x) * sum_k w[i,k] q_i(x - x_k)."""
    if not 1 <= i <= scheme.n_levels:
        raise ConfigurationError(f"level {i} outside [1, {scheme.n_levels}]")
    return target.log_density(np.asarray(x, dtype=float)) + log_tilt_mixture(scheme, i, x)


def log_tempered_density_batch(scheme: TemperingScheme, target: TargetModel,
                               i: int, xs: np.ndarray) -> np.ndarray:
    if not 1 <= i <= scheme.n_levels:
        raise ConfigurationError(f"level {i} outside [1, {scheme.n_levels}]")
    xs = np.asarray(xs, dtype=float)
    return target.log_density_batch(xs) + np.asarray(log_tilt_mixture(scheme, i, xs))


def init_coldest_weights(target: TargetModel, warm_starts: WarmStartSet) -> np.ndarray:
    """Coldest-level component weights, inverse target density at each warm start."""
    logpi = target.log_density_batch(warm_starts.centers)
    # w_k proportional to 1/pi(x_k); shift in log space so max(w) == 1 exactly.
    return np.exp(-(logpi - np.min(logpi)))
