"""Configuration, experiment orchestration, persistence, and the CLI.

Commands: ``realps train|sample|compare|diagnose --config <path>
[--seed u64] [--replicas n] [--out dir]``.  JSON config in, JSONL samples /
JSON reports / CSV summaries out; identical config and seed reproduce the
data artifacts byte-for-byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .alps_hat import HATDynamics, HATModel, hat_model_from_gaussian_spec, \
    hat_model_from_student_t_spec
from .diagnostics import balance_report, build_mixing_report, mode_occupancy, \
    occupancy_error, projected_spectral_gap, tv_estimate
from .errors import ConfigurationError, StageError
from .kernels import ChainState, KernelConfig, NaivePowerDynamics, Recorder, \
    ReAlpsDynamics, SampleBatch, run_dynamics
from .targets import GaussianMixtureSpec, QuadratureGrid, StudentTMixtureSpec, \
    TargetModel, make_gaussian_mixture, make_student_t_mixture
from .tilting import LadderSpec, TemperatureLadder, TemperingScheme, WarmStartSet, \
    build_ladder
from .weight_learning import LearningConfig, train

log = logging.getLogger("realps")

SCHEME_NAMES = ("re_alps", "hat_alps", "naive_power_tempering")


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    target: TargetModel
    target_spec: GaussianMixtureSpec | StudentTMixtureSpec
    warm_starts: WarmStartSet
    ladder: TemperatureLadder
    kernel: KernelConfig
    learning: LearningConfig
    schemes: tuple[str, ...]
    out_dir: Path
    seed: int
    replicas: int
    duration: float
    burn_in: float
    thinning: int
    record_local_every: int
    grid: QuadratureGrid
    tv_bins: int
    hat_betas: np.ndarray
    power_betas: np.ndarray

    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def tv_grid(self) -> QuadratureGrid:
        """Coarser binning for histogram TV estimates; the quadrature grid is
        far finer than any desk-scale sample count supports."""
        return QuadratureGrid(self.grid.lower, self.grid.upper,
                              (self.tv_bins,) * self.grid.dim)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigurationError(msg)


def _parse_target(d: dict):
    kind = d.get("kind")
    if kind == "gaussian_mixture":
        spec = GaussianMixtureSpec(d["means"], d["covariances"], d["weights"])
        return make_gaussian_mixture(spec), spec
    if kind == "student_t_mixture":
        spec = StudentTMixtureSpec(d["means"], d["scales"], d["dofs"], d["weights"])
        return make_student_t_mixture(spec), spec
    raise ConfigurationError(f"unknown target kind {kind!r}")


def _parse_ladder(d: dict, dim: int) -> TemperatureLadder:
    if "betas" in d:
        ladder = TemperatureLadder(np.asarray(d["betas"], dtype=float))
        ladder.validate()
        return ladder
    if "spec" in d:
        s = d["spec"]
        return build_ladder(LadderSpec(
            dim=s.get("dim", dim),
            smoothness=s["smoothness"],
            log_sobolev_scale=s["log_sobolev_scale"],
            warm_start_dist=s["warm_start_dist"],
            mean_disp=s.get("mean_disp", 0.0),
            c_beta1=s.get("c_beta1", 1.0),
            c_dbeta=s.get("c_dbeta", 1.0),
            max_levels=s.get("max_levels", 256),
        ))
    raise ConfigurationError("ladder needs either 'betas' or 'spec'")


def load_config(path, *, seed: int | None = None, replicas: int | None = None,
                out_dir: str | None = None) -> RunConfig:
    with open(path) as f:
        raw = json.load(f)
    target, tspec = _parse_target(raw["target"])

    ws_raw = raw.get("warm_starts", "modes")
    if ws_raw == "modes":
        _require(target.modes is not None, "target has no built-in modes")
        centers = target.modes
    else:
        centers = np.asarray(ws_raw, dtype=float)
    warm_starts = WarmStartSet(centers)
    _require(warm_starts.dim == target.dim, "warm-start dimension mismatch")

    ladder = _parse_ladder(raw.get("ladder", {}), target.dim)

    k = raw.get("kernel", {})
    seed_val = int(seed if seed is not None else raw.get("seed", 0))
    kernel = KernelConfig(
        lambda_swap=k.get("lambda_swap", 2.0),
        gamma_leap=k.get("gamma_leap", 2.0),
        rwm_step_scale=k.get("rwm_step_scale", 0.5),
        steps_per_unit_time=int(k.get("steps_per_unit_time", 10)),
        seed=seed_val,
    )

    le = raw.get("learning", {})
    learning = LearningConfig(
        n_samples=int(le.get("n_samples", 800)),
        t_stage=float(le.get("t_stage", 150.0)),
        min_level_hits=int(le.get("min_level_hits", 100)),
        first_level_upscale=le.get("first_level_upscale"),
        burn_in_fraction=float(le.get("burn_in_fraction", 0.1)),
        seed=seed_val,
    )

    if "schemes" in raw:
        schemes = tuple(raw["schemes"])
    else:
        schemes = (raw.get("scheme", "re_alps"),)
    for s in schemes:
        _require(s in SCHEME_NAMES, f"unknown scheme {s!r}")

    run = raw.get("run", {})
    g = raw.get("grid")
    if g is None:
        # Default box: warm starts padded by a generous margin.
        lo = centers.min(axis=0) - 10.0
        hi = centers.max(axis=0) + 10.0
        num = (2001,) if target.dim == 1 else (301, 301)
        grid = QuadratureGrid(tuple(lo), tuple(hi), num[: target.dim])
    else:
        grid = QuadratureGrid(tuple(g["lower"]), tuple(g["upper"]), tuple(g["num"]))

    hat_betas = np.asarray(raw.get("hat", {}).get("betas", [64.0, 16.0, 4.0, 2.0, 1.0]),
                           dtype=float)
    power_betas = np.asarray(raw.get("power", {}).get("betas",
                                                      [0.2, 0.35, 0.5, 0.65, 0.8, 1.0]),
                             dtype=float)

    return RunConfig(
        raw=raw,
        target=target,
        target_spec=tspec,
        warm_starts=warm_starts,
        ladder=ladder,
        kernel=kernel,
        learning=learning,
        schemes=schemes,
        out_dir=Path(out_dir if out_dir is not None else raw.get("out_dir", "runs")),
        seed=seed_val,
        replicas=int(replicas if replicas is not None else raw.get("replicas", 1)),
        duration=float(run.get("duration", 500.0)),
        burn_in=float(run.get("burn_in", 0.0)),
        thinning=int(run.get("thinning", 1)),
        record_local_every=int(run.get("record_local_every", 1)),
        grid=grid,
        tv_bins=int(raw.get("tv_bins", 101)),
        hat_betas=hat_betas,
        power_betas=power_betas,
    )


def _write_json(path: Path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_manifest(cfg: RunConfig, command: str, artifacts: list[str],
                    wall_clock: float, stage_seeds: list[int] | None = None) -> None:
    manifest = {
        "command": command,
        "config_sha256": cfg.config_hash(),
        "artifacts": sorted(artifacts),
        "versions": {
            "realps": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_clock_s": wall_clock,
        "stage_seeds": stage_seeds,
        "seed": cfg.seed,
        "replicas": cfg.replicas,
    }
    _write_json(cfg.out_dir / "manifest.json", manifest)


def _scheme_path(cfg: RunConfig) -> Path:
    return cfg.out_dir / "scheme.json"


def _hat_model(cfg: RunConfig) -> HATModel:
    if isinstance(cfg.target_spec, GaussianMixtureSpec):
        return hat_model_from_gaussian_spec(cfg.target_spec)
    return hat_model_from_student_t_spec(cfg.target_spec)


def _dynamics_for(cfg: RunConfig, scheme_name: str, kernel: KernelConfig,
                  trained: TemperingScheme | None):
    if scheme_name == "re_alps":
        _require(trained is not None, "re_alps runs need a trained scheme")
        dyn = ReAlpsDynamics(trained, cfg.target, kernel)
        initial = ChainState(x=cfg.warm_starts.centers[0].copy(), level=1)
    elif scheme_name == "hat_alps":
        dyn = HATDynamics(_hat_model(cfg), cfg.hat_betas, kernel)
        initial = ChainState(x=cfg.warm_starts.centers[0].copy(), level=1)
    else:
        dyn = NaivePowerDynamics(cfg.target, cfg.power_betas, kernel)
        initial = ChainState(x=cfg.warm_starts.centers[0].copy(), level=dyn.n_levels)
    return dyn, initial


def _retained(batch: SampleBatch, target_level: int, burn_in: float,
              thinning: int) -> SampleBatch:
    sub = batch.at_level(target_level)
    keep = sub.times > burn_in
    sub = SampleBatch(sub.times[keep], sub.levels[keep], sub.xs[keep],
                      sub.events[keep], sub.seed, sub.scheme_tag)
    idx = np.arange(len(sub))[:: max(1, thinning)]
    return SampleBatch(sub.times[idx], sub.levels[idx], sub.xs[idx], sub.events[idx],
                       sub.seed, sub.scheme_tag)


def cmd_train(cfg: RunConfig) -> Path:
    """Learn weights for the re_alps scheme; writes scheme.json and trace.json."""
    _require("re_alps" in cfg.schemes, "train applies to the re_alps scheme")
    t0 = time.monotonic()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    seed_scheme = TemperingScheme.initial(cfg.ladder, cfg.warm_starts, cfg.target)
    trained, trace = train(seed_scheme, cfg.target, cfg.kernel, cfg.learning)
    _write_json(_scheme_path(cfg), trained.to_json_dict())
    _write_json(cfg.out_dir / "trace.json", trace.to_json_dict())
    stage_seeds = [s.seed_estimate for s in trace.stages] + \
        [s.seed_rebalance for s in trace.stages]
    _write_manifest(cfg, "train", ["scheme.json", "trace.json"],
                    time.monotonic() - t0, stage_seeds)
    log.info("trained %d levels x %d modes -> %s", trained.n_levels,
             trained.n_modes, _scheme_path(cfg))
    return _scheme_path(cfg)


def _run_one(cfg: RunConfig, scheme_name: str, seed: int,
             trained: TemperingScheme | None) -> SampleBatch:
    kernel = replace(cfg.kernel, seed=seed)
    dyn, initial = _dynamics_for(cfg, scheme_name, kernel, trained)
    rec = Recorder(record_local_every=cfg.record_local_every)
    return run_dynamics(dyn, initial, kernel, cfg.duration, rec)


def cmd_sample(cfg: RunConfig) -> list[Path]:
    """Run the chain on a trained scheme and retain target-level states."""
    t0 = time.monotonic()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    scheme_name = cfg.schemes[0]
    trained = None
    if scheme_name == "re_alps":
        path = _scheme_path(cfg)
        if not path.exists():
            raise FileNotFoundError(f"scheme artifact not found: {path}")
        trained = TemperingScheme.from_json_dict(json.loads(path.read_text()))

    paths = []
    for rep in range(cfg.replicas):
        batch = _run_one(cfg, scheme_name, cfg.seed + rep, trained)
        retained = _retained(batch, _target_level(cfg, scheme_name), cfg.burn_in,
                             cfg.thinning)
        name = "samples.jsonl" if cfg.replicas == 1 else f"samples_{rep:02d}.jsonl"
        retained.to_jsonl(cfg.out_dir / name)
        paths.append(cfg.out_dir / name)
    _write_manifest(cfg, "sample", [p.name for p in paths], time.monotonic() - t0)
    return paths


def _target_level(cfg: RunConfig, scheme_name: str) -> int:
    if scheme_name == "re_alps":
        return cfg.ladder.n_levels
    if scheme_name == "hat_alps":
        return len(cfg.hat_betas)
    return len(cfg.power_betas)


def cmd_compare(cfg: RunConfig) -> Path:
    """Run every configured scheme on identical budget/seeds; emit comparison.csv."""
    _require(len(cfg.schemes) >= 2, "compare needs at least 2 schemes")
    t0 = time.monotonic()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    alphas = np.asarray(cfg.target_spec.weights, dtype=float)

    trained = None
    if "re_alps" in cfg.schemes:
        path = _scheme_path(cfg)
        if path.exists():
            trained = TemperingScheme.from_json_dict(json.loads(path.read_text()))
        else:
            log.info("no scheme.json found; training re_alps first")
            cmd_train(cfg)
            trained = TemperingScheme.from_json_dict(json.loads(path.read_text()))

    rows = []
    artifacts = ["comparison.csv"]
    for scheme_name in cfg.schemes:
        for rep in range(cfg.replicas):
            seed = cfg.seed + rep
            try:
                batch = _run_one(cfg, scheme_name, seed, trained)
            except Exception as e:  # noqa: BLE001 - per-scheme failures recorded
                log.error("scheme %s seed %d failed: %s", scheme_name, seed, e)
                rows.append({"scheme": scheme_name, "seed": seed, "error": str(e)})
                continue
            lvl = _target_level(cfg, scheme_name)
            retained = _retained(batch, lvl, cfg.burn_in, cfg.thinning)
            name = f"samples_{scheme_name}_{rep:02d}.jsonl"
            retained.to_jsonl(cfg.out_dir / name)
            artifacts.append(name)
            rates = batch.acceptance_rates()
            if len(retained):
                occ = mode_occupancy(retained, cfg.warm_starts, lvl)
                err = occupancy_error(occ, alphas)
                tv = tv_estimate(retained, cfg.target, cfg.tv_grid).value
            else:
                occ, err, tv = np.full(len(alphas), np.nan), float("nan"), float("nan")
            row = {
                "scheme": scheme_name,
                "seed": seed,
                "retained": len(retained),
                "occupancy_error": err,
                "tv_estimate": tv,
                "rwm_accept": rates["rwm"],
                "swap_accept": rates["swap"],
                "leap_accept": rates["leap"],
            }
            for k, v in enumerate(occ):
                row[f"occupancy_{k}"] = float(v)
            rows.append(row)

    fields = sorted({k for r in rows for k in r})
    with open(cfg.out_dir / "comparison.csv", "w", newline="") as f:
        wr = csv.DictWriter(f, fieldnames=fields)
        wr.writeheader()
        wr.writerows(rows)
    _write_manifest(cfg, "compare", artifacts, time.monotonic() - t0)
    return cfg.out_dir / "comparison.csv"


def cmd_diagnose(cfg: RunConfig) -> list[Path]:
    """Balance report, mixing report, and a TV-over-time curve from artifacts."""
    t0 = time.monotonic()
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    out = []

    scheme_path = _scheme_path(cfg)
    if not scheme_path.exists():
        raise FileNotFoundError(f"scheme artifact not found: {scheme_path}")
    scheme = TemperingScheme.from_json_dict(json.loads(scheme_path.read_text()))

    report = balance_report(scheme, cfg.target, cfg.grid)
    payload = report.to_json_dict()
    if scheme.n_levels * scheme.n_modes <= 64 and cfg.target.components is not None:
        gap, chain = projected_spectral_gap(scheme, cfg.target, cfg.grid)
        payload["projected_spectral_gap"] = gap
        payload["projected_stationarity_residual"] = chain.stationarity_residual
    _write_json(cfg.out_dir / "balance.json", payload)
    out.append(cfg.out_dir / "balance.json")

    with open(cfg.out_dir / "balance.csv", "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["level", "component", "w", "r", "log_z_bar", "log_z_component"])
        for i in range(scheme.n_levels):
            for k in range(scheme.n_modes):
                wr.writerow([
                    i + 1, k + 1,
                    repr(float(scheme.component_weights[i, k])),
                    repr(float(scheme.level_weights[i])),
                    repr(float(report.log_z_bar[i, k])),
                    "" if report.log_z_component is None
                    else repr(float(report.log_z_component[i, k])),
                ])
    out.append(cfg.out_dir / "balance.csv")

    samples_path = cfg.out_dir / "samples.jsonl"
    if samples_path.exists():
        batch = SampleBatch.from_jsonl(samples_path)
        mixing = build_mixing_report(batch, cfg.warm_starts, cfg.target, cfg.tv_grid)
        _write_json(cfg.out_dir / "mixing.json", mixing.to_json_dict())
        out.append(cfg.out_dir / "mixing.json")

        # TV over growing prefixes of the retained stream.
        with open(cfg.out_dir / "tv_curve.csv", "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(["t", "tv", "n_samples"])
            n = len(batch)
            for frac in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0):
                m = max(1, int(round(frac * n)))
                prefix = SampleBatch(batch.times[:m], batch.levels[:m], batch.xs[:m],
                                     batch.events[:m], batch.seed, batch.scheme_tag)
                est = tv_estimate(prefix, cfg.target, cfg.tv_grid)
                wr.writerow([repr(float(prefix.times[-1])), repr(est.value), m])
        out.append(cfg.out_dir / "tv_curve.csv")
    _write_manifest(cfg, "diagnose", [p.name for p in out], time.monotonic() - t0)
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="realps")
    parser.add_argument("command", choices=["train", "sample", "compare", "diagnose"])
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replicas", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    logging.basicConfig(level=os.environ.get("REALPS_LOG", "WARNING").upper())

    try:
        cfg = load_config(args.config, seed=args.seed, replicas=args.replicas,
                          out_dir=args.out)
        if args.command == "train":
            cmd_train(cfg)
        elif args.command == "sample":
            cmd_sample(cfg)
        elif args.command == "compare":
            cmd_compare(cfg)
        else:
            cmd_diagnose(cfg)
    except StageError as e:
        print(f"error: training stage failed at level {e.level}, stage {e.stage}: {e}",
              file=sys.stderr)
        return 1
    except (ConfigurationError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
