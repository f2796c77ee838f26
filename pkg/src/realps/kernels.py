"""Markov dynamics: random-walk Metropolis, level swaps, teleports, and the
event-driven simulation loop.

The continuous-time process is discretized by drawing exponential waiting
times for level-jump events (rate ``lambda_swap``) and, while at the coldest
level, teleport events (rate ``gamma_leap``); the shorter waiting time fires
first.  Between events the chain takes ``round(steps_per_unit_time * elapsed)``
RWM steps.  All randomness comes from one counter-based (Philox) stream per
chain, so runs are bit-reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .errors import ConfigurationError, SimulationError
from .targets import TargetModel
from .tilting import TemperingScheme

EVENT_KINDS = (
    "rwm_accept",
    "rwm_reject",
    "swap_up_accept",
    "swap_up_reject",
    "swap_down_accept",
    "swap_down_reject",
    "leap_accept",
    "leap_reject",
)
EVENT_CODE = {name: i for i, name in enumerate(EVENT_KINDS)}


@dataclass(frozen=True)
class ChainState:
    x: np.ndarray
    level: int  # 1-based, 1 = coldest, L = target
    clock: float = 0.0


@dataclass(frozen=True)
class KernelConfig:
    lambda_swap: float
    gamma_leap: float
    rwm_step_scale: float
    steps_per_unit_time: int
    seed: int

    def __post_init__(self):
        if self.lambda_swap <= 0 or self.gamma_leap <= 0:
            raise ConfigurationError("event rates must be positive")
        if self.rwm_step_scale <= 0:
            raise ConfigurationError("rwm_step_scale must be positive")
        if self.steps_per_unit_time < 1:
            raise ConfigurationError("steps_per_unit_time must be >= 1")


@dataclass(frozen=True)
class EventRecord:
    clock: float
    kind: str
    level_before: int
    level_after: int
    mode_pair: tuple[int, int] | None = None  # 0-based (j, j') for teleports


class Recorder:
    """Collects the (t, level, x, event) stream; local moves may be subsampled."""

    def __init__(self, record_local_every: int = 1):
        if record_local_every < 1:
            raise ConfigurationError("record_local_every must be >= 1")
        self.record_local_every = record_local_every
        self._local_seen = 0
        self.times: list[float] = []
        self.levels: list[int] = []
        self.xs: list[np.ndarray] = []
        self.events: list[int] = []

    def add_local(self, t: float, level: int, x: np.ndarray, kind: str) -> None:
        self._local_seen += 1
        if self._local_seen % self.record_local_every == 0:
            self._append(t, level, x, kind)

    def add_event(self, t: float, level: int, x: np.ndarray, kind: str) -> None:
        self._append(t, level, x, kind)

    def _append(self, t, level, x, kind):
        self.times.append(t)
        self.levels.append(level)
        self.xs.append(x)
        self.events.append(EVENT_CODE[kind])


@dataclass
class SampleBatch:
    """Recorded (t, level, x, event) tuples with seed provenance."""

    times: np.ndarray
    levels: np.ndarray
    xs: np.ndarray
    events: np.ndarray  # int codes into EVENT_KINDS
    seed: int
    scheme_tag: str

    @classmethod
    def from_recorder(cls, rec: Recorder, dim: int, seed: int, scheme_tag: str) -> "SampleBatch":
        n = len(rec.times)
        xs = np.array(rec.xs, dtype=float).reshape(n, dim) if n else np.empty((0, dim))
        return cls(
            times=np.array(rec.times, dtype=float),
            levels=np.array(rec.levels, dtype=np.int32),
            xs=xs,
            events=np.array(rec.events, dtype=np.int8),
            seed=seed,
            scheme_tag=scheme_tag,
        )

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def at_level(self, level: int) -> "SampleBatch":
        m = self.levels == level
        return SampleBatch(self.times[m], self.levels[m], self.xs[m], self.events[m],
                           self.seed, self.scheme_tag)

    def event_name(self, idx: int) -> str:
        return EVENT_KINDS[self.events[idx]]

    def states_at_times(self, ts: np.ndarray) -> np.ndarray:
        """Indices of the last record at or before each requested time."""
        idx = np.searchsorted(self.times, ts, side="right") - 1
        if np.any(idx < 0):
            raise ValueError("requested time precedes the first record")
        return idx

    def acceptance_rates(self) -> dict[str, float]:
        """Accept fraction per move family (rwm / swap / leap), NaN if unused."""
        out = {}
        for fam, acc_kinds, all_kinds in (
            ("rwm", ("rwm_accept",), ("rwm_accept", "rwm_reject")),
            ("swap", ("swap_up_accept", "swap_down_accept"),
             ("swap_up_accept", "swap_up_reject", "swap_down_accept", "swap_down_reject")),
            ("leap", ("leap_accept",), ("leap_accept", "leap_reject")),
        ):
            tot = sum(int(np.sum(self.events == EVENT_CODE[k])) for k in all_kinds)
            acc = sum(int(np.sum(self.events == EVENT_CODE[k])) for k in acc_kinds)
            out[fam] = acc / tot if tot else float("nan")
        return out

    def to_jsonl(self, path, flush_every: int = 10_000) -> None:
        with open(path, "w") as f:
            header = {"seed": self.seed, "scheme": self.scheme_tag, "dim": int(self.dim)}
            f.write(json.dumps({"meta": header}) + "\n")
            for i in range(len(self)):
                rec = {
                    "t": float(self.times[i]),
                    "level": int(self.levels[i]),
                    "x": [float(v) for v in self.xs[i]],
                    "event": EVENT_KINDS[self.events[i]],
                }
                f.write(json.dumps(rec) + "\n")
                if (i + 1) % flush_every == 0:
                    f.flush()

    @classmethod
    def from_jsonl(cls, path) -> "SampleBatch":
        times, levels, xs, events = [], [], [], []
        seed, tag, dim = 0, "", 1
        with open(path) as f:
            for line in f:
                d = json.loads(line)
                if "meta" in d:
                    seed = d["meta"].get("seed", 0)
                    tag = d["meta"].get("scheme", "")
                    dim = d["meta"].get("dim", 1)
                    continue
                times.append(d["t"])
                levels.append(d["level"])
                xs.append(d["x"])
                events.append(EVENT_CODE[d["event"]])
        n = len(times)
        return cls(
            np.array(times, dtype=float),
            np.array(levels, dtype=np.int32),
            np.array(xs, dtype=float).reshape(n, dim) if n else np.empty((0, dim)),
            np.array(events, dtype=np.int8),
            seed,
            tag,
        )


class Dynamics:
    """Level-family interface the event loop runs against.

    ``log_joint(i, x)`` is ``log r_i`` plus the unnormalized level log-density,
    so the same swap ratio works for every scheme.
    """

    n_levels: int
    dim: int
    scheme_tag: str = "dynamics"
    teleport_centers: np.ndarray | None = None

    @property
    def has_teleport(self) -> bool:
        return self.teleport_centers is not None

    def log_joint(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def rwm_scale(self, i: int) -> float:
        raise NotImplementedError

    def local_step(self, state: ChainState, logp: float, rng: np.random.Generator):
        return _rwm_move(self, state, logp, rng)


class ReAlpsDynamics(Dynamics):
    """Tilted tempered family with translation teleports at the coldest level."""

    scheme_tag = "re_alps"

    def __init__(self, scheme: TemperingScheme, target: TargetModel,
                 cfg: KernelConfig | None = None, enable_teleport: bool = True):
        self.scheme = scheme
        self.target = target
        self.n_levels = scheme.n_levels
        self.dim = scheme.warm_starts.dim
        self._sigma0 = cfg.rwm_step_scale if cfg is not None else 1.0
        self._betas = scheme.ladder.betas
        self._centers = scheme.warm_starts.centers
        self._logw = np.log(scheme.component_weights)
        self._logr = np.log(scheme.level_weights)
        self.teleport_centers = self._centers if enable_teleport else None

    def log_joint(self, i: int, x: np.ndarray) -> float:
        diff = x - self._centers
        tilt = -0.5 * self._betas[i - 1] * np.einsum("kd,kd->k", diff, diff)
        a = tilt + self._logw[i - 1]
        amax = a.max()
        mix = amax + math.log(np.exp(a - amax).sum())
        return float(self.target.log_density(x)) + mix + self._logr[i - 1]

    def rwm_scale(self, i: int) -> float:
        return self._sigma0 / math.sqrt(1.0 + self._betas[i - 1])


class NaivePowerDynamics(Dynamics):
    """Plain power tempering pi(x)^beta with uniform level weights; no teleport.

    Level L is the target (beta = 1); level 1 is the hottest.
    """

    scheme_tag = "naive_power_tempering"

    def __init__(self, target: TargetModel, power_betas: Iterable[float], cfg: KernelConfig):
        betas = np.asarray(list(power_betas), dtype=float)
        if betas.ndim != 1 or len(betas) < 1:
            raise ConfigurationError("power_betas must be a non-empty sequence")
        if np.any(betas <= 0) or np.any(np.diff(betas) <= 0) or betas[-1] != 1.0:
            raise ConfigurationError(
                "power_betas must be strictly increasing and end at exactly 1.0"
            )
        self.target = target
        self._betas = betas
        self.n_levels = len(betas)
        self.dim = target.dim
        self._sigma0 = cfg.rwm_step_scale

    def log_joint(self, i: int, x: np.ndarray) -> float:
        return self._betas[i - 1] * float(self.target.log_density(x))

    def rwm_scale(self, i: int) -> float:
        return self._sigma0 / math.sqrt(self._betas[i - 1])


def _check_finite(logp: float, state: ChainState) -> None:
    if not math.isfinite(logp):
        raise SimulationError(
            f"non-finite log density at level={state.level}, clock={state.clock!r}, "
            f"x={state.x.tolist()!r}"
        )


def _rwm_move(dyn: Dynamics, state: ChainState, logp: float, rng: np.random.Generator):
    z = rng.standard_normal(dyn.dim)
    u = rng.random()
    x_new = state.x + dyn.rwm_scale(state.level) * z
    logp_new = dyn.log_joint(state.level, x_new)
    _check_finite(logp_new, state)
    if math.log(u) < logp_new - logp:
        new_state = replace(state, x=x_new)
        return new_state, logp_new, EventRecord(state.clock, "rwm_accept",
                                                state.level, state.level)
    return state, logp, EventRecord(state.clock, "rwm_reject", state.level, state.level)


def _swap_move(dyn: Dynamics, state: ChainState, logp: float, rng: np.random.Generator):
    go_up = rng.random() < 0.5
    u = rng.random()
    i_new = state.level + (1 if go_up else -1)
    kind_base = "swap_up" if go_up else "swap_down"
    if not 1 <= i_new <= dyn.n_levels:
        # Off-ladder proposals consume the 1/2 direction mass and auto-reject.
        return state, logp, EventRecord(state.clock, kind_base + "_reject",
                                        state.level, state.level)
    logp_new = dyn.log_joint(i_new, state.x)
    _check_finite(logp_new, state)
    if math.log(u) < logp_new - logp:
        new_state = replace(state, level=i_new)
        return new_state, logp_new, EventRecord(state.clock, kind_base + "_accept",
                                                state.level, i_new)
    return state, logp, EventRecord(state.clock, kind_base + "_reject",
                                    state.level, state.level)


def _teleport_move(dyn: Dynamics, state: ChainState, logp: float, rng: np.random.Generator):
    if state.level != 1:
        raise ConfigurationError("teleport is only defined at the coldest level")
    centers = dyn.teleport_centers
    if centers is None:
        raise ConfigurationError("dynamics has no teleport maps")
    m = centers.shape[0]
    j = int(rng.integers(m))
    jp = int(rng.integers(m))
    u = rng.random()
    if j == jp:
        # Identity map: a no-op accept keeps the ordered-pair proposal symmetric.
        return state, logp, EventRecord(state.clock, "leap_accept", 1, 1, (j, jp))
    x_new = state.x - centers[j] + centers[jp]
    logp_new = dyn.log_joint(1, x_new)
    _check_finite(logp_new, state)
    # Translations are volume-preserving, so the pushforward ratio is the
    # plain density ratio at the proposed vs. current point.
    if math.log(u) < logp_new - logp:
        new_state = replace(state, x=x_new)
        return new_state, logp_new, EventRecord(state.clock, "leap_accept", 1, 1, (j, jp))
    return state, logp, EventRecord(state.clock, "leap_reject", 1, 1, (j, jp))


def rwm_step(state: ChainState, scheme: TemperingScheme, target: TargetModel,
             cfg: KernelConfig, rng: np.random.Generator):
    """One random-walk Metropolis step at the state's level; level unchanged."""
    dyn = ReAlpsDynamics(scheme, target, cfg)
    logp = dyn.log_joint(state.level, state.x)
    _check_finite(logp, state)
    new_state, _, record = _rwm_move(dyn, state, logp, rng)
    return new_state, record


def level_swap(state: ChainState, scheme: TemperingScheme, target: TargetModel,
               rng: np.random.Generator):
    """Propose i -> i +/- 1 with probability 1/2 each, Metropolis-corrected."""
    dyn = ReAlpsDynamics(scheme, target)
    logp = dyn.log_joint(state.level, state.x)
    _check_finite(logp, state)
    new_state, _, record = _swap_move(dyn, state, logp, rng)
    return new_state, record


def teleport(state: ChainState, scheme: TemperingScheme, target: TargetModel,
             rng: np.random.Generator):
    """Translation teleport at the coldest level over a uniform ordered mode pair."""
    dyn = ReAlpsDynamics(scheme, target)
    logp = dyn.log_joint(state.level, state.x)
    _check_finite(logp, state)
    new_state, _, record = _teleport_move(dyn, state, logp, rng)
    return new_state, record


def run_dynamics(dyn: Dynamics, initial: ChainState, cfg: KernelConfig, duration: float,
                 recorder: Recorder | None = None,
                 rng: np.random.Generator | None = None) -> SampleBatch:
    """Event-driven simulation of any level family for ``duration`` clock units."""
    if duration <= 0:
        raise ConfigurationError("duration must be positive")
    if not 1 <= initial.level <= dyn.n_levels:
        raise ConfigurationError(f"initial level {initial.level} outside ladder")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(key=cfg.seed))
    rec = recorder if recorder is not None else Recorder()

    state = replace(initial, x=np.asarray(initial.x, dtype=float))
    logp = dyn.log_joint(state.level, state.x)
    _check_finite(logp, state)

    end = state.clock + duration
    next_swap = state.clock + rng.exponential(1.0 / cfg.lambda_swap)
    next_leap = (
        state.clock + rng.exponential(1.0 / cfg.gamma_leap)
        if (dyn.has_teleport and state.level == 1)
        else math.inf
    )

    while True:
        t_event = min(next_swap, next_leap)
        t_stop = min(t_event, end)
        block_start = state.clock
        elapsed = t_stop - block_start
        n_steps = round(cfg.steps_per_unit_time * elapsed)
        for s in range(1, n_steps + 1):
            # Local steps are spread evenly over the block; the last one lands
            # exactly on the block end so record times stay monotone.
            t_s = t_stop if s == n_steps else block_start + elapsed * (s / n_steps)
            state = replace(state, clock=t_s)
            state, logp, ev = dyn.local_step(state, logp, rng)
            rec.add_local(t_s, state.level, state.x, ev.kind)
        state = replace(state, clock=t_stop)
        if t_event > end:
            break
        if next_leap < next_swap:
            state, logp, ev = _teleport_move(dyn, state, logp, rng)
        else:
            state, logp, ev = _swap_move(dyn, state, logp, rng)
        rec.add_event(t_stop, state.level, state.x, ev.kind)
        # Exponential clocks are memoryless, so redrawing both after every
        # executed event is exact.
        next_swap = state.clock + rng.exponential(1.0 / cfg.lambda_swap)
        next_leap = (
            state.clock + rng.exponential(1.0 / cfg.gamma_leap)
            if (dyn.has_teleport and state.level == 1)
            else math.inf
        )

    return SampleBatch.from_recorder(rec, dyn.dim, cfg.seed, dyn.scheme_tag)


def simulate(initial: ChainState, scheme: TemperingScheme, target: TargetModel,
             cfg: KernelConfig, duration: float, recorder: Recorder | None = None,
             enable_teleport: bool = True) -> SampleBatch:
    """Run the tilted simulated-tempering process with teleports at level 1."""
    dyn = ReAlpsDynamics(scheme, target, cfg, enable_teleport=enable_teleport)
    return run_dynamics(dyn, initial, cfg, duration, recorder)
