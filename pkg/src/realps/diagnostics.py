"""Quantitative checks of the balance conditions and mixing behavior.

Everything here is quadrature-backed and restricted to dim <= 2: balance
ratios against partition-function integrals, the projected-chain spectral-gap
oracle on (level, component) cells, adjacent-level chi-square closeness, and a
histogram TV estimate at the target level.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UnsupportedDimensionError
from .kernels import SampleBatch
from .targets import QuadratureGrid, TargetModel, logsumexp, quadrature_log_partition
from .tilting import TemperingScheme, WarmStartSet, log_tilt, log_tilt_mixture


class ChiSquareDivergenceWarning(UserWarning):
    """The denominator density underflows where the numerator carries mass."""


@dataclass
class BalanceReport:
    """Empirical H1/H2 ratios with the quadrature values behind them.

    ``h1_ratio_per_level[i]`` is max over component pairs of
    w[i,k] Z[i,k] / (w[i,k'] Z[i,k']); ``h2_ratio`` the analogue over levels
    of r_i Z_i.  Component-resolved Z values are used when the target exposes
    components, the whole-target tilted masses otherwise.
    """

    h1_ratio_per_level: np.ndarray
    h2_ratio: float
    log_z_bar: np.ndarray  # (L, M): log of integral pi(x) q_i(x - x_k)
    log_z_level: np.ndarray  # (L,)
    log_z_component: np.ndarray | None = None  # (L, M) when components exist

    @property
    def h1_ratio(self) -> float:
        return float(np.max(self.h1_ratio_per_level))

    def to_json_dict(self) -> dict:
        return {
            "h1_ratio": self.h1_ratio,
            "h1_ratio_per_level": self.h1_ratio_per_level.tolist(),
            "h2_ratio": self.h2_ratio,
            "log_z_bar": self.log_z_bar.tolist(),
            "log_z_level": self.log_z_level.tolist(),
            "log_z_component": None if self.log_z_component is None
            else self.log_z_component.tolist(),
        }


@dataclass
class ProjectedChain:
    """Finite chain on (level, component) cells per the decomposition oracle."""

    states: list[tuple[int, int]]  # 1-based (level, component)
    matrix: np.ndarray
    stationary: np.ndarray
    stationarity_residual: float


@dataclass
class TVEstimate:
    value: float
    n_samples: int
    low_confidence: bool


@dataclass
class MixingReport:
    mode_occupancy_per_level: dict[int, list[float]]
    acceptance_rates: dict[str, float]
    level_autocorr_time: float
    tv_target_level: TVEstimate | None = None

    def to_json_dict(self) -> dict:
        return {
            "mode_occupancy_per_level": {
                str(k): v for k, v in self.mode_occupancy_per_level.items()
            },
            "acceptance_rates": self.acceptance_rates,
            "level_autocorr_time": self.level_autocorr_time,
            "tv_target_level": None if self.tv_target_level is None else vars(self.tv_target_level),
        }


def mode_occupancy(batch: SampleBatch, warm_starts: WarmStartSet, level: int) -> np.ndarray:
    """Fraction of level samples nearest to each warm start."""
    sub = batch.at_level(level)
    if len(sub) == 0:
        raise ConfigurationError(f"no samples at level {level}")
    d2 = np.sum((sub.xs[:, None, :] - warm_starts.centers[None, :, :]) ** 2, axis=-1)
    idx = np.argmin(d2, axis=1)
    counts = np.bincount(idx, minlength=warm_starts.n_modes)
    return counts / counts.sum()


def occupancy_error(occupancy: np.ndarray, true_weights: np.ndarray) -> float:
    """Half L1 distance between empirical mode occupancy and the true weights."""
    return 0.5 * float(np.sum(np.abs(np.asarray(occupancy) - np.asarray(true_weights))))


def _component_target(target: TargetModel, k: int) -> TargetModel:
    alpha, logf = target.components[k]
    return TargetModel(dim=target.dim, log_density=logf, vectorized=target.vectorized)


def balance_report(scheme: TemperingScheme, target: TargetModel,
                   grid: QuadratureGrid) -> BalanceReport:
    """H1/H2 ratio matrices with partition functions from the quadrature oracle."""
    if target.dim > 2:
        raise UnsupportedDimensionError("balance report needs dim <= 2")
    L, M = scheme.n_levels, scheme.n_modes
    centers = scheme.warm_starts.centers
    betas = scheme.ladder.betas

    log_z_bar = np.empty((L, M))
    for i in range(L):
        for k in range(M):
            log_z_bar[i, k] = quadrature_log_partition(
                target, lambda xs, b=betas[i], c=centers[k]: log_tilt(b, xs, c), grid
            )

    log_z_comp = None
    if target.components is not None:
        log_z_comp = np.empty((L, M))
        log_alpha = np.log(target.component_weights)
        for k in range(M):
            comp = _component_target(target, k)
            for i in range(L):
                log_z_comp[i, k] = log_alpha[k] + quadrature_log_partition(
                    comp, lambda xs, b=betas[i], c=centers[k]: log_tilt(b, xs, c), grid
                )

    log_z_level = np.array([
        quadrature_log_partition(
            target, lambda xs, lvl=i: log_tilt_mixture(scheme, lvl, xs), grid
        )
        for i in range(1, L + 1)
    ])

    z_for_h1 = log_z_comp if log_z_comp is not None else log_z_bar
    log_wz = np.log(scheme.component_weights) + z_for_h1
    h1 = np.exp(np.max(log_wz, axis=1) - np.min(log_wz, axis=1))
    log_rz = np.log(scheme.level_weights) + log_z_level
    h2 = float(np.exp(np.max(log_rz) - np.min(log_rz)))
    return BalanceReport(
        h1_ratio_per_level=h1,
        h2_ratio=h2,
        log_z_bar=log_z_bar,
        log_z_level=log_z_level,
        log_z_component=log_z_comp,
    )


def reversible_spectral_gap(matrix: np.ndarray, stationary: np.ndarray) -> float:
    """1 - lambda_2 of a reversible stochastic matrix via symmetrized eigensolve."""
    pi = np.asarray(stationary, dtype=float)
    d = np.sqrt(pi)
    sym = (d[:, None] / d[None, :]) * matrix
    sym = 0.5 * (sym + sym.T)
    eig = np.linalg.eigvalsh(sym)
    return float(1.0 - eig[-2])


def projected_spectral_gap(scheme: TemperingScheme, target: TargetModel,
                           grid: QuadratureGrid) -> tuple[float, ProjectedChain]:
    """Spectral gap of the (level, component) projected chain.

    Off-diagonal entries are quadrature integrals of Metropolis acceptance
    against the normalized cell densities: adjacent-level moves carry the 1/2
    direction probability, coldest-level teleports the 1/M^2 ordered-pair
    probability; rows are completed with self-loops.
    """
    if target.dim > 2:
        raise UnsupportedDimensionError("projected chain oracle needs dim <= 2")
    if target.components is None:
        raise ConfigurationError("projected chain needs a component-resolved target")
    L, M = scheme.n_levels, scheme.n_modes
    if L * M > 64:
        raise ConfigurationError(f"projected chain limited to 64 cells, got {L * M}")

    centers = scheme.warm_starts.centers
    betas = scheme.ladder.betas
    nodes = grid.nodes()
    logw_quad = grid.log_weights()
    log_alpha = np.log(target.component_weights)

    # Normalized cell log densities on the grid; evaluated lazily at shifted
    # nodes for teleport entries.
    comp_logf = [target.component_log_density_batch(k, nodes) for k in range(M)]

    def cell_logdens(i: int, k: int, xs: np.ndarray | None = None) -> np.ndarray:
        if xs is None:
            base = comp_logf[k]
            pts = nodes
        else:
            base = target.component_log_density_batch(k, xs)
            pts = xs
        tilt = log_tilt(betas[i - 1], pts, centers[k])
        return base + tilt

    log_z_cell = np.empty((L, M))
    for i in range(1, L + 1):
        for k in range(M):
            log_z_cell[i - 1, k] = logsumexp(cell_logdens(i, k) + logw_quad)

    log_mass = (
        np.log(scheme.level_weights)[:, None]
        + np.log(scheme.component_weights)
        + log_alpha[None, :]
        + log_z_cell
    )
    log_mass -= logsumexp(log_mass.ravel())

    states = [(i, k + 1) for i in range(1, L + 1) for k in range(M)]
    index = {s: n for n, s in enumerate(states)}
    n_cells = len(states)
    P = np.zeros((n_cells, n_cells))

    def log_min_integral(log_a: np.ndarray, log_b: np.ndarray) -> float:
        return logsumexp(np.minimum(log_a, log_b) + logw_quad)

    for i in range(1, L + 1):
        for k in range(M):
            row = index[(i, k + 1)]
            lm_here = log_mass[i - 1, k]
            logp_here = cell_logdens(i, k) - log_z_cell[i - 1, k]
            for di in (-1, 1):
                ip = i + di
                if not 1 <= ip <= L:
                    continue
                lm_there = log_mass[ip - 1, k]
                logp_there = cell_logdens(ip, k) - log_z_cell[ip - 1, k]
                log_acc = log_min_integral(lm_there + logp_there, lm_here + logp_here)
                P[row, index[(ip, k + 1)]] = 0.5 * math.exp(log_acc - lm_here)
            if i == 1:
                for kp in range(M):
                    if kp == k:
                        continue
                    shifted = nodes - centers[k] + centers[kp]
                    logp_there = cell_logdens(1, kp, shifted) - log_z_cell[0, kp]
                    lm_there = log_mass[0, kp]
                    log_acc = log_min_integral(lm_there + logp_there, lm_here + logp_here)
                    P[row, index[(1, kp + 1)]] = math.exp(log_acc - lm_here) / (M * M)

    row_sums = P.sum(axis=1)
    if np.any(row_sums > 1.0 + 1e-9):
        raise ConfigurationError(
            f"projected chain row sum {row_sums.max():.6f} exceeds 1; grid too coarse?"
        )
    np.fill_diagonal(P, np.maximum(0.0, 1.0 - row_sums))

    mass = np.exp(log_mass).reshape(-1)
    mass = mass / mass.sum()
    residual = float(np.max(np.abs(mass @ P - mass)))
    gap = reversible_spectral_gap(P, mass)
    return gap, ProjectedChain(states, P, mass, residual)


def chi_square_divergence(log_p: np.ndarray, log_q: np.ndarray,
                          grid: QuadratureGrid) -> float:
    """chi^2(p || q) = integral of p^2/q - 1; inputs are unnormalized log
    densities evaluated on the grid nodes, normalized here by quadrature."""
    logw = grid.log_weights()
    log_zp = logsumexp(log_p + logw)
    log_zq = logsumexp(log_q + logw)
    lp = log_p - log_zp
    lq = log_q - log_zq
    p_cell_mass = np.exp(lp + logw)
    q_underflow = np.exp(lq) == 0.0
    if np.any(q_underflow & (p_cell_mass > 1e-12)):
        warnings.warn(
            "denominator density underflows on cells carrying numerator mass; "
            "chi-square reported as +inf",
            ChiSquareDivergenceWarning,
            stacklevel=2,
        )
        return math.inf
    log_integral = logsumexp(2.0 * lp - lq + logw)
    # Huge values mean the pair is effectively non-overlapping on this grid;
    # report the divergence flag instead of an astronomical float.
    if log_integral > math.log(1e12):
        warnings.warn("chi-square exceeds 1e12; reported as +inf",
                      ChiSquareDivergenceWarning, stacklevel=2)
        return math.inf
    return float(math.expm1(log_integral))


def adjacency_chi_square(scheme: TemperingScheme, target: TargetModel, l: int, k: int,
                         grid: QuadratureGrid, use_components: bool | None = None) -> float:
    """chi^2 between the tilted component (or whole-target) densities at
    levels l+1 and l, both quadrature-normalized.  ``k`` is 1-based."""
    if target.dim > 2:
        raise UnsupportedDimensionError("chi-square oracle needs dim <= 2")
    if not 1 <= l < scheme.n_levels:
        raise ConfigurationError(f"level {l} has no successor")
    if use_components is None:
        use_components = target.components is not None
    if use_components and target.components is None:
        raise ConfigurationError("target exposes no components")
    nodes = grid.nodes()
    center = scheme.warm_starts.centers[k - 1]
    if use_components:
        base = target.component_log_density_batch(k - 1, nodes)
    else:
        base = target.log_density_batch(nodes)
    log_p = base + log_tilt(scheme.ladder.beta(l + 1), nodes, center)
    log_q = base + log_tilt(scheme.ladder.beta(l), nodes, center)
    return chi_square_divergence(log_p, log_q, grid)


def tv_estimate(batch: SampleBatch, target: TargetModel, grid: QuadratureGrid) -> TVEstimate:
    """Histogram TV between batch positions and the grid-binned target mass."""
    if target.dim > 2:
        raise UnsupportedDimensionError("TV estimate needs dim <= 2")
    n = len(batch)
    edges = grid.bin_edges()
    if n:
        hist, _ = np.histogramdd(batch.xs, bins=edges)
        hist_frac = hist.ravel() / n
        out_frac = 1.0 - hist.sum() / n
    else:
        hist_frac = np.zeros(int(np.prod(grid.num)))
        out_frac = 1.0
    nodes = grid.nodes()
    logf = target.log_density_batch(nodes) + grid.log_weights()
    cell_mass = np.exp(logf - logsumexp(logf))
    tv = 0.5 * (float(np.sum(np.abs(hist_frac - cell_mass))) + out_frac)
    return TVEstimate(value=tv, n_samples=n, low_confidence=n < 1000)


def integrated_autocorr_time(series: np.ndarray) -> float:
    """Initial-positive-sequence estimate of the integrated autocorrelation time."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n < 2:
        return float("nan")
    x = x - x.mean()
    var = float(np.dot(x, x)) / n
    if var == 0.0:
        return 1.0
    # FFT autocorrelation, normalized at lag 0.
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, n=m)
    acf = np.fft.irfft(f * np.conjugate(f))[:n].real / (n * var)
    tau = 1.0
    for t in range(1, n):
        if acf[t] <= 0:
            break
        tau += 2.0 * acf[t]
    return float(tau)


def build_mixing_report(batch: SampleBatch, warm_starts: WarmStartSet,
                        target: TargetModel | None = None,
                        grid: QuadratureGrid | None = None) -> MixingReport:
    occ = {}
    for level in sorted(set(int(v) for v in np.unique(batch.levels))):
        occ[level] = [float(v) for v in mode_occupancy(batch, warm_starts, level)]
    tv = None
    if target is not None and grid is not None:
        target_level = int(batch.levels.max()) if len(batch) else 0
        sub = batch.at_level(target_level)
        if len(sub):
            tv = tv_estimate(sub, target, grid)
    return MixingReport(
        mode_occupancy_per_level=occ,
        acceptance_rates=batch.acceptance_rates(),
        level_autocorr_time=integrated_autocorr_time(batch.levels),
        tv_target_level=tv,
    )
