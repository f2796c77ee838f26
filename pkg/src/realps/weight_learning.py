"""Inductive Monte Carlo weight learning.

For each level l the loop (a) estimates the next level's component weights
from an importance-sampling average over level-l samples, (b) estimates the
next level weight from the same samples, then (c) re-runs the chain one level
deeper and rebalances all level weights from occupancy counts.  Stages always
use fresh samples; the target density cancels exactly inside every ratio, so
only tilt mixtures and level weights enter the estimators.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, EstimationError, RebalanceError, StageError
from .kernels import ChainState, KernelConfig, SampleBatch, simulate
from .targets import TargetModel, logsumexp
from .tilting import TemperingScheme


@dataclass(frozen=True)
class LearningConfig:
    n_samples: int
    t_stage: float
    min_level_hits: int = 100
    first_level_upscale: float | None = None
    burn_in_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < self.min_level_hits:
            raise ConfigurationError("n_samples must be >= min_level_hits")
        if self.t_stage <= 0:
            raise ConfigurationError("t_stage must be positive")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ConfigurationError("burn_in_fraction must lie in [0, 1)")
        if self.first_level_upscale is not None and self.first_level_upscale <= 0:
            raise ConfigurationError("first_level_upscale must be positive")


@dataclass
class StageRecord:
    level: int
    seed_estimate: int
    seed_rebalance: int
    level_hits: int
    raw_component_estimates: list[float]
    component_weights: list[float]
    raw_level_weight: float
    occupancy_counts: list[int]
    level_weights_before: list[float]
    level_weights_after: list[float]


@dataclass
class WeightTrace:
    stages: list[StageRecord] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"stages": [vars(s) for s in self.stages]}


def thin_at_equal_times(batch: SampleBatch, n: int, t_start: float, t_end: float) -> SampleBatch:
    """Pick n states at equal clock spacing over (t_start, t_end]."""
    ts = t_start + (np.arange(1, n + 1) / n) * (t_end - t_start)
    idx = batch.states_at_times(ts)
    return SampleBatch(ts, batch.levels[idx], batch.xs[idx], batch.events[idx],
                       batch.seed, batch.scheme_tag)


def _tilt_matrix(scheme: TemperingScheme, i: int, xs: np.ndarray) -> np.ndarray:
    """Tilt exponents at level i for every (sample, center) pair, shape (n, M)."""
    beta = scheme.ladder.beta(i)
    diff = xs[:, None, :] - scheme.warm_starts.centers[None, :, :]
    return -0.5 * beta * np.sum(diff * diff, axis=-1)


def _level_l_log_denominator(scheme: TemperingScheme, l: int, xs: np.ndarray) -> np.ndarray:
    """log of r_l * sum_k w[l,k] q_l(x - x_k); the pi(x) factor has cancelled."""
    tilt = _tilt_matrix(scheme, l, xs)
    logw = np.log(scheme.component_weights[l - 1])
    return np.log(scheme.level_weights[l - 1]) + logsumexp(tilt + logw, axis=1)


def _require_hits(batch: SampleBatch, l: int, min_level_hits: int) -> np.ndarray:
    sel = batch.levels == l
    hits = int(sel.sum())
    if hits < min_level_hits:
        raise EstimationError(
            f"only {hits} samples at level {l} (need {min_level_hits})",
            level=l, hits=hits,
        )
    return sel


def estimate_component_weights(batch: SampleBatch, scheme: TemperingScheme,
                               target: TargetModel, l: int,
                               min_level_hits: int = 100) -> np.ndarray:
    """Next-level component weights w[l+1, .] from level-l importance ratios.

    ``scheme`` must match the batch's generating scheme on levels 1..l and
    carry at least the level-(l+1) ladder entry (see ``extend_for_estimation``).
    The estimator averages q_{l+1}(x - x_k) / (r_l sum_k' w[l,k'] q_l(x - x_k'))
    over all N batch samples with the level-l indicator, then inverts; the
    result is returned in canonical form (max = 1).
    """
    if not 1 <= l < scheme.n_levels:
        raise ConfigurationError(f"level {l} has no successor in a {scheme.n_levels}-level ladder")
    n_total = len(batch)
    sel = _require_hits(batch, l, min_level_hits)
    xs = batch.xs[sel]
    log_num = _tilt_matrix(scheme, l + 1, xs)  # (n_l, M)
    log_den = _level_l_log_denominator(scheme, l, xs)  # (n_l,)
    log_ratio = log_num - log_den[:, None]
    if not np.all(np.isfinite(log_ratio)):
        raise EstimationError("non-finite importance ratio in component-weight estimate", level=l)
    # Indicator estimator: divide by the total sample count, not the hit count.
    log_mean = logsumexp(log_ratio, axis=0) - np.log(n_total)
    w = np.exp(-(log_mean - log_mean.min()))
    return w / w.max()


def raw_component_estimates(batch: SampleBatch, scheme: TemperingScheme, l: int) -> np.ndarray:
    """Un-inverted estimator values (the Monte Carlo means), for audit trails."""
    n_total = len(batch)
    sel = batch.levels == l
    xs = batch.xs[sel]
    log_num = _tilt_matrix(scheme, l + 1, xs)
    log_den = _level_l_log_denominator(scheme, l, xs)
    log_mean = logsumexp(log_num - log_den[:, None], axis=0) - np.log(n_total)
    return np.exp(log_mean)


def estimate_level_weight(batch: SampleBatch, scheme: TemperingScheme,
                          target: TargetModel, l: int,
                          min_level_hits: int = 100) -> float:
    """Raw next-level weight estimate r_hat_{l+1}.

    ``scheme`` must extend the batch's generating scheme with the freshly
    estimated component weights in row l+1 (its r entry for level l+1 is not
    read).  Averages p~_{l+1}(x) / (r_l p~_l(x)) over level-l samples; pi(x)
    cancels.
    """
    if not 1 <= l < scheme.n_levels:
        raise ConfigurationError(f"level {l} has no successor in a {scheme.n_levels}-level ladder")
    n_total = len(batch)
    sel = _require_hits(batch, l, min_level_hits)
    xs = batch.xs[sel]
    logw_next = np.log(scheme.component_weights[l])
    log_num = logsumexp(_tilt_matrix(scheme, l + 1, xs) + logw_next, axis=1)
    log_den = _level_l_log_denominator(scheme, l, xs)
    log_ratio = log_num - log_den
    if not np.all(np.isfinite(log_ratio)):
        raise EstimationError("non-finite importance ratio in level-weight estimate", level=l)
    log_mean = logsumexp(log_ratio) - np.log(n_total)
    return float(np.exp(-log_mean))


def rebalance_levels(occupancy_counts: np.ndarray, level_weights: np.ndarray) -> np.ndarray:
    """Divide each level weight by its occupancy share, then rescale to sum 1."""
    counts = np.asarray(occupancy_counts, dtype=float)
    r = np.asarray(level_weights, dtype=float)
    if counts.shape != r.shape:
        raise ConfigurationError("occupancy counts and level weights must align")
    starved = np.nonzero(counts == 0)[0]
    if starved.size:
        lvl = int(starved[0]) + 1
        raise RebalanceError(
            f"level {lvl} was never visited; the ladder has a bottleneck there",
            starved_level=lvl,
        )
    out = r / (counts / counts.sum())
    return out / out.sum()


def apply_first_level_upscale(level_weights: np.ndarray, l: int, factor: float) -> np.ndarray:
    """Scale the coldest level weight by l * factor; other entries unchanged."""
    if factor <= 0:
        raise ConfigurationError("upscale factor must be positive")
    r = np.asarray(level_weights, dtype=float).copy()
    r[0] *= l * factor
    return r


def extend_for_estimation(run_scheme: TemperingScheme, next_beta: float,
                          w_next: np.ndarray | None = None) -> TemperingScheme:
    """Append the next ladder level to a run scheme for estimator calls.

    Rows 1..l stay exactly as run; the new row carries ``w_next`` when given
    (needed by the level-weight estimator) and NaN placeholders otherwise.
    """
    from .tilting import TemperatureLadder

    m = run_scheme.n_modes
    w_row = np.full((1, m), np.nan) if w_next is None else np.asarray(w_next, float)[None, :]
    return TemperingScheme(
        TemperatureLadder(np.concatenate([run_scheme.ladder.betas, [next_beta]])),
        run_scheme.warm_starts,
        np.vstack([run_scheme.component_weights, w_row]),
        np.concatenate([run_scheme.level_weights, [np.nan]]),
    )


def _stage_batch(scheme: TemperingScheme, target: TargetModel, kernel_cfg: KernelConfig,
                 cfg: LearningConfig, seed: int) -> SampleBatch:
    kc = replace(kernel_cfg, seed=seed)
    initial = ChainState(x=scheme.warm_starts.centers[0].copy(), level=1, clock=0.0)
    batch = simulate(initial, scheme, target, kc, cfg.t_stage)
    burn_end = cfg.burn_in_fraction * cfg.t_stage
    return thin_at_equal_times(batch, cfg.n_samples, burn_end, cfg.t_stage)


def train(scheme: TemperingScheme, target: TargetModel, kernel_cfg: KernelConfig,
          cfg: LearningConfig) -> tuple[TemperingScheme, WeightTrace]:
    """Run the inductive loop over all levels; returns the fully weighted scheme.

    The seed scheme must have coldest-level component weights set and level
    weights confined to level 1.
    """
    if np.any(~np.isfinite(scheme.component_weights[0])):
        raise ConfigurationError("seed scheme must have coldest-level weights set")
    L, M = scheme.n_levels, scheme.n_modes
    w = scheme.component_weights.copy()
    r = scheme.level_weights.copy()
    r[0] = 1.0

    seed_seq = np.random.SeedSequence(cfg.seed)
    stage_seeds = [int(s.generate_state(1)[0]) for s in seed_seq.spawn(2 * max(L - 1, 1))]
    trace = WeightTrace()

    for l in range(1, L):
        seed_ab = stage_seeds[2 * (l - 1)]
        seed_c = stage_seeds[2 * (l - 1) + 1]

        run_r = r[:l].copy()
        if cfg.first_level_upscale is not None:
            run_r = apply_first_level_upscale(run_r, l, cfg.first_level_upscale)
        run_scheme = TemperingScheme(
            scheme.restrict(l).ladder, scheme.warm_starts, w[:l].copy(), run_r / run_r.sum()
        )

        next_beta = float(scheme.ladder.betas[l])
        try:
            batch = _stage_batch(run_scheme, target, kernel_cfg, cfg, seed_ab)
            ext0 = extend_for_estimation(run_scheme, next_beta)
            w_next = estimate_component_weights(
                batch, ext0, target, l, cfg.min_level_hits
            )
            raw_w = raw_component_estimates(batch, ext0, l)
        except (EstimationError, RebalanceError) as e:
            raise StageError(f"[level {l}, component_weights] {e}",
                             level=l, stage="component_weights") from e

        ext = extend_for_estimation(run_scheme, next_beta, w_next)
        try:
            r_hat_next = estimate_level_weight(batch, ext, target, l, cfg.min_level_hits)
        except (EstimationError, RebalanceError) as e:
            raise StageError(f"[level {l}, level_weight] {e}",
                             level=l, stage="level_weight") from e

        w[l] = w_next
        r_run_c = np.concatenate([run_scheme.level_weights, [r_hat_next]])
        r_run_c = r_run_c / r_run_c.sum()
        scheme_c = TemperingScheme(
            ext.ladder, scheme.warm_starts, w[: l + 1].copy(), r_run_c
        )

        try:
            batch_c = _stage_batch(scheme_c, target, kernel_cfg, cfg, seed_c)
            counts = np.bincount(batch_c.levels, minlength=l + 2)[1 : l + 2]
            r_balanced = rebalance_levels(counts, r_run_c)
        except (EstimationError, RebalanceError) as e:
            raise StageError(f"[level {l}, rebalance] {e}",
                             level=l, stage="rebalance") from e

        r[: l + 1] = r_balanced
        trace.stages.append(
            StageRecord(
                level=l,
                seed_estimate=seed_ab,
                seed_rebalance=seed_c,
                level_hits=int(np.sum(batch.levels == l)),
                raw_component_estimates=[float(v) for v in raw_w],
                component_weights=[float(v) for v in w_next],
                raw_level_weight=float(r_hat_next),
                occupancy_counts=[int(c) for c in counts],
                level_weights_before=[float(v) for v in r_run_c],
                level_weights_after=[float(v) for v in r_balanced],
            )
        )

    trained = TemperingScheme(scheme.ladder, scheme.warm_starts, w, r).canonicalize()
    trained.validate()
    return trained, trace
