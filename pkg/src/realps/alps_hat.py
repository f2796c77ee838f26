"""Hessian-Adjusted-Tempering baseline: HAT targets, modal allocation, and the
coldest-level Gaussian-mixture independence sampler.

Mode locations, Hessians, and mode weights are supplied exactly from the
target spec (no online estimation).  The HAT ladder uses the power-tempering
convention: colder means larger beta, the target level is beta = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .kernels import ChainState, Dynamics, EventRecord, KernelConfig, Recorder, \
    SampleBatch, run_dynamics, _check_finite
from .targets import GaussianMixtureSpec, StudentTMixtureSpec, TargetModel, \
    logsumexp, make_gaussian_mixture, make_student_t_mixture


@dataclass(frozen=True)
class HATModel:
    """Modes, Hessians (as precomputed covariance factors), weights, and target."""

    modes: np.ndarray  # (M, d)
    hessians: np.ndarray  # (M, d, d), SPD
    weights: np.ndarray  # (M,), sum to 1
    target: TargetModel
    covariances: np.ndarray = None  # type: ignore[assignment]
    chol_covs: np.ndarray = None  # type: ignore[assignment]
    logdet_covs: np.ndarray = None  # type: ignore[assignment]
    log_pi_modes: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=float)
        hess = np.asarray(self.hessians, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        m, d = modes.shape
        if hess.shape != (m, d, d):
            raise ConfigurationError("hessians must be (M, d, d)")
        if w.shape != (m,) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ConfigurationError("mode weights must be positive and sum to 1")
        covs = np.array([np.linalg.inv(h) for h in hess])
        for i, h in enumerate(hess):
            try:
                np.linalg.cholesky(h)
            except np.linalg.LinAlgError:
                raise ConfigurationError(f"hessian of mode {i} is not SPD") from None
        chols = np.array([np.linalg.cholesky(c) for c in covs])
        logdets = np.array([2.0 * np.sum(np.log(np.diag(c))) for c in chols])
        logpi = self.target.log_density_batch(modes)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "hessians", hess)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "covariances", covs)
        object.__setattr__(self, "chol_covs", chols)
        object.__setattr__(self, "logdet_covs", logdets)
        object.__setattr__(self, "log_pi_modes", logpi)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def dim(self) -> int:
        return self.modes.shape[1]


@dataclass(frozen=True)
class HATLevelState:
    """Chain position plus the cached home allocation A_(x, 1)."""

    x: np.ndarray
    level: int
    home_allocation: int


def hat_model_from_gaussian_spec(spec: GaussianMixtureSpec) -> HATModel:
    """Exact modes/Hessians for a Gaussian mixture: H_k is the precision."""
    target = make_gaussian_mixture(spec)
    covs = np.asarray(spec.covariances, dtype=float)
    hess = np.array([np.linalg.inv(c) for c in covs])
    return HATModel(np.asarray(spec.means, float), hess,
                    np.asarray(spec.weights, float), target)


def hat_model_from_student_t_spec(spec: StudentTMixtureSpec) -> HATModel:
    """Curvature of -log t-density at the mode: (nu + d) / (nu s^2) per axis."""
    target = make_student_t_mixture(spec)
    means = np.asarray(spec.means, dtype=float)
    d = means.shape[1]
    hess = np.array([
        ((nu + d) / (nu * s * s)) * np.eye(d)
        for s, nu in zip(spec.scales, spec.dofs)
    ])
    return HATModel(means, hess, np.asarray(spec.weights, float), target)


def _log_gauss_scaled(model: HATModel, x: np.ndarray, beta: float) -> np.ndarray:
    """log phi(x | mu_j, Sigma_j / beta) for every mode j; x is (d,) or (n, d)."""
    x = np.asarray(x, dtype=float)
    diff = x[..., None, :] - model.modes  # (..., M, d)
    quad = np.einsum("...mi,mij,...mj->...m", diff, model.hessians, diff)
    d = model.dim
    return -0.5 * (d * math.log(2.0 * math.pi) + model.logdet_covs
                   - d * math.log(beta) + beta * quad)


def modal_allocation(model: HATModel, x: np.ndarray, beta: float) -> int:
    """argmax_j of w_j phi(x | mu_j, Sigma_j / beta); ties to the smallest index."""
    if beta <= 0:
        raise ConfigurationError("modal allocation needs beta > 0")
    scores = np.log(model.weights) + _log_gauss_scaled(model, x, beta)
    return int(np.argmax(scores))


def hat_log_density(model: HATModel, x: np.ndarray, beta: float) -> float:
    """Unnormalized HAT log target at inverse temperature beta (>0).

    Mode-consistent branch: beta * log pi(x) + (1 - beta) * log pi(mu_home);
    otherwise the Gaussian component G(x, beta) built from the allocated mode.
    """
    if beta <= 0:
        raise ConfigurationError("hat_log_density needs beta > 0")
    home = modal_allocation(model, x, 1.0)
    alloc = modal_allocation(model, x, beta)
    if alloc == home:
        return beta * float(model.target.log_density(x)) + (1.0 - beta) * float(
            model.log_pi_modes[home]
        )
    d = model.dim
    log_phi = float(_log_gauss_scaled(model, x, beta)[..., alloc])
    return (
        float(model.log_pi_modes[alloc])
        + 0.5 * (d * math.log(2.0 * math.pi) + model.logdet_covs[alloc])
        + log_phi
        - 0.5 * d * math.log(beta)
    )


def _log_proposal_mixture(model: HATModel, x: np.ndarray, beta: float) -> float:
    return float(logsumexp(np.log(model.weights) + _log_gauss_scaled(model, x, beta),
                           axis=-1))


def _indep_move(model: HATModel, state: ChainState, log_t_old: float, beta_max: float,
                rng: np.random.Generator):
    # Mode choice by inverse CDF keeps the rng stream to scalar draws.
    u_mode = rng.random()
    z = rng.standard_normal(model.dim)
    u_acc = rng.random()
    k = int(np.searchsorted(np.cumsum(model.weights), u_mode))
    k = min(k, model.n_modes - 1)
    x_new = model.modes[k] + (model.chol_covs[k] @ z) / math.sqrt(beta_max)

    log_t_new = hat_log_density(model, x_new, beta_max)
    log_q_new = _log_proposal_mixture(model, x_new, beta_max)
    log_q_old = _log_proposal_mixture(model, state.x, beta_max)
    _check_finite(log_t_new, state)

    if math.log(u_acc) < (log_t_new - log_t_old) + (log_q_old - log_q_new):
        new_state = ChainState(x=x_new, level=state.level, clock=state.clock)
        rec = EventRecord(state.clock, "leap_accept", state.level, state.level)
        return new_state, log_t_new, rec
    return state, log_t_old, EventRecord(state.clock, "leap_reject", state.level, state.level)


def coldest_independence_step(model: HATModel, state: ChainState, beta_max: float,
                              rng: np.random.Generator):
    """Independence MH step from the Gaussian-mixture proposal at the coldest level."""
    log_t_old = hat_log_density(model, state.x, beta_max)
    new_state, _, rec = _indep_move(model, state, log_t_old, beta_max, rng)
    return new_state, rec


class HATDynamics(Dynamics):
    """Simulated tempering over HAT targets with uniform level weights.

    Level 1 is the coldest (beta_max); level L is the target (beta = 1).  The
    local move at the coldest level is the independence sampler; other levels
    use RWM with scale sigma_0 / sqrt(beta).
    """

    scheme_tag = "hat_alps"

    def __init__(self, model: HATModel, betas: np.ndarray, cfg: KernelConfig):
        betas = np.asarray(betas, dtype=float)
        if betas.ndim != 1 or len(betas) < 1:
            raise ConfigurationError("HAT ladder must be a non-empty beta sequence")
        if np.any(np.diff(betas) >= 0) or betas[-1] != 1.0:
            raise ConfigurationError(
                "HAT betas must be strictly decreasing and end at exactly 1.0"
            )
        self.model = model
        self._betas = betas
        self.n_levels = len(betas)
        self.dim = model.dim
        self._sigma0 = cfg.rwm_step_scale

    def log_joint(self, i: int, x: np.ndarray) -> float:
        return hat_log_density(self.model, x, self._betas[i - 1])

    def rwm_scale(self, i: int) -> float:
        return self._sigma0 / math.sqrt(self._betas[i - 1])

    def local_step(self, state: ChainState, logp: float, rng: np.random.Generator):
        if state.level == 1:
            return _indep_move(self.model, state, logp, self._betas[0], rng)
        return super().local_step(state, logp, rng)


def run_hat_alps(model: HATModel, betas: np.ndarray, cfg: KernelConfig, duration: float,
                 initial: ChainState | None = None,
                 recorder: Recorder | None = None) -> SampleBatch:
    """Simulated tempering over HAT targets; samples retained at the beta = 1 level."""
    dyn = HATDynamics(model, betas, cfg)
    if initial is None:
        initial = ChainState(x=model.modes[0].copy(), level=1, clock=0.0)
    return run_dynamics(dyn, initial, cfg, duration, recorder)
