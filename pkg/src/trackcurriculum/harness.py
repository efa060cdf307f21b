"""Experiment runner: curriculum variants on the eight-shaped target family.

A run alternates rollouts, learner training and curriculum updates, and
appends one CSV row per iteration.  ``ablate`` sweeps variants and context
dimensions; ``check`` runs the brute-force oracle suites.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from .assignment import wasserstein2
from .competence import PerformanceBuffer, RolloutRecord
from .curriculum import CurriculumState, CurrotConfig, curriculum_step, epsilon_default
from .envs.eight import EightTargetSpec, low_dim_to_coords, mu_sampler
from .envs.surrogate import SurrogateLearner
from .envs.tracking import TrackerSim
from .metric import MetricBuildSpec, MetricSpec, build_state_metric, euclidean
from .trajectory import Context, FeasibilityChecker, eight_grid, kernel_basis

__all__ = [
    "VARIANTS",
    "CONTEXT_DIMS",
    "SCHEMA",
    "RUN_COLUMNS",
    "SUMMARY_COLUMNS",
    "ConfigError",
    "ExperimentConfig",
    "RunLog",
    "Setup",
    "build_setup",
    "run_experiment",
    "ablate",
    "check",
    "parse_config_text",
]

SCHEMA = "#schema=1"
RUN_COLUMNS = ("iteration", "phase", "wasserstein", "mean_metric", "success_rate", "moved_fraction", "target_success")
SUMMARY_COLUMNS = (
    "variant", "context_dim", "runs", "failed", "completed",
    "iterations_to_success_mean", "iterations_to_success_stderr",
    "final_wasserstein_mean", "final_wasserstein_stderr",
)

# variant -> (metric kind, sampler, low-dimensional contexts)
VARIANTS = {
    "currot": ("euclidean", "half_ball", False),
    "currot_a": ("mahalanobis", "half_ball", False),
    "currot_ao": ("mahalanobis", "cone", False),
    "currot_l": ("euclidean", "half_ball", True),
    "no_curriculum": (None, None, False),
}
# preset -> knots per axis; D = 3 (K - 3)
CONTEXT_DIMS = {"51": 20, "99": 36, "198": 69, "399": 136, "lowdim-2": None}


class ConfigError(ValueError):
    """Inconsistent or malformed experiment configuration."""


def _parse_bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run depends on.  ``None`` means derived from the setup.

    ``rho_learn``/``rho_fail`` are in units of the trajectory-metric epsilon;
    ``p0_fraction`` scales the initial eights relative to the target ones.
    """

    variant: str = "currot_ao"
    context_dim: str = "51"
    seed: int = 0
    seeds: tuple[int, ...] = (0,)
    iterations: int = 200
    n_particles: int = 512
    epsilon: float | None = None
    delta: float = 1400.0
    bandwidth: float | None = None
    theta: float = 0.25 * math.pi
    candidates_per_particle: int = 128
    env: str = "surrogate"
    jerk_regularization: float = 0.0
    metric_rows: str = "full"
    rho_learn: float = 1.5
    rho_fail: float = 3.0
    p0_fraction: float = 0.05
    success_capacity: int | None = None
    recent_capacity: int | None = None
    eval_size: int | None = None
    epsilon_samples: int = 256
    success_wasserstein: float = 0.05
    controller_gain: float = 400.0
    constraints: bool = True
    out_dir: str = "runs"

    def __post_init__(self):
        if isinstance(self.seeds, (list, int)):
            object.__setattr__(self, "seeds", tuple(np.atleast_1d(self.seeds).tolist()))
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if self.context_dim not in CONTEXT_DIMS:
            raise ConfigError(f"unknown context_dim {self.context_dim!r}; choose from {list(CONTEXT_DIMS)}")
        low = self.context_dim == "lowdim-2"
        if self.variant == "currot_l" and not low:
            raise ConfigError("currot_l runs on the 2-D amplitude space (context_dim=lowdim-2)")
        if self.variant in ("currot", "currot_a", "currot_ao") and low:
            raise ConfigError(f"{self.variant} needs a kernel-coordinate context space, not lowdim-2")
        if self.env not in ("surrogate", "tracker"):
            raise ConfigError(f"unknown env {self.env!r}")
        if self.metric_rows not in ("full", "position"):
            raise ConfigError("metric_rows must be full or position")
        if self.iterations < 0 or self.n_particles < 1 or self.candidates_per_particle < 1:
            raise ConfigError("iterations >= 0, n_particles >= 1 and candidates_per_particle >= 1 required")
        if not 0 < self.rho_learn <= self.rho_fail:
            raise ConfigError("need 0 < rho_learn <= rho_fail")
        if not 0 <= self.p0_fraction <= 1:
            raise ConfigError("p0_fraction must lie in [0, 1]")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.theta < 0.5 * math.pi:
            raise ConfigError("theta must lie in (0, pi/2)")
        if self.jerk_regularization < 0:
            raise ConfigError("jerk_regularization must be non-negative")

    @property
    def metric_kind(self):
        return VARIANTS[self.variant][0]

    @property
    def sampler(self):
        return VARIANTS[self.variant][1]

    @property
    def low_dim(self) -> bool:
        return self.context_dim == "lowdim-2"

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)

    # flat key=value text

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"

    @classmethod
    def coerce(cls, raw: dict[str, str]) -> dict:
        """Convert string values to field types; unknown keys are an error."""
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, text in raw.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            text = str(text).strip()
            t = types[key]
            try:
                if text.lower() == "none" and "None" in t:
                    out[key] = None
                elif t.startswith("tuple"):
                    out[key] = tuple(int(x) for x in text.split(",") if x.strip())
                elif t.startswith("int"):
                    out[key] = int(text)
                elif t.startswith("float"):
                    out[key] = float(text)
                elif t == "bool":
                    out[key] = _parse_bool(text)
                else:
                    out[key] = text
            except ValueError as err:
                raise ConfigError(f"bad value for {key}: {text!r}") from err
        return out

    @classmethod
    def from_mapping(cls, raw: dict[str, str], base: "ExperimentConfig | None" = None) -> "ExperimentConfig":
        vals = cls.coerce(raw)
        return dataclasses.replace(base, **vals) if base is not None else cls(**vals)


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class RunLog:
    rows: list[dict] = field(default_factory=list)
    epsilon: float = math.nan
    w0: float = math.nan
    particles: np.ndarray | None = None
    wall_time: list[float] = field(default_factory=list)

    @property
    def epsilon_line(self) -> float:
        return self.epsilon / self.w0

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] == "n/a" else float(r[name]) for r in self.rows])

    def iterations_to_success(self, threshold: float) -> float:
        w = self.column("wasserstein")
        hit = np.flatnonzero(w < threshold)
        return float(self.rows[hit[0]]["iteration"]) if hit.size else math.nan

    @property
    def final_wasserstein(self) -> float:
        return float(self.column("wasserstein")[-1]) if self.rows else math.nan

    @classmethod
    def read_csv(cls, path) -> "RunLog":
        with open(path) as f:
            meta = f.readline().strip()
            if not meta.startswith(SCHEMA):
                raise ValueError(f"{path}: missing {SCHEMA} header")
            info = dict(kv.split("=", 1) for kv in meta.split()[1:])
            rows = list(csv.DictReader(f))
        return cls(rows, float(info.get("epsilon", "nan")), float(info.get("w0", "nan")))


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "n/a" if not np.isfinite(x) else repr(float(x))


@dataclass
class Setup:
    """Derived objects for one configuration (shared across seeds)."""

    spec: EightTargetSpec
    dim: int
    metric: MetricSpec | None
    trajectory_metric: MetricSpec
    embed: Callable[[np.ndarray], np.ndarray]
    draw_mu: Callable[[np.random.Generator, int], np.ndarray]
    draw_p0: Callable[[np.random.Generator, int], np.ndarray]
    feasible: Callable[[np.ndarray], np.ndarray] | None


def build_setup(config: ExperimentConfig) -> Setup:
    K = CONTEXT_DIMS[config.context_dim] or 20
    spec = EightTargetSpec(grid=eight_grid(K))
    basis = kernel_basis(spec.grid)
    traj = build_state_metric(
        MetricBuildSpec(spec.grid, jerk_regularization=config.jerk_regularization, state_rows=config.metric_rows),
        basis,
    )
    upper = np.array([spec.amp_x_range[1], spec.amp_y_range[1]])

    def draw_p0_amps(rng, n):
        return rng.uniform(0.0, 1.0, size=(n, 2)) * upper * config.p0_fraction

    if config.low_dim:
        dim = 2

        def embed(c):
            return low_dim_to_coords(np.clip(c, 0.0, upper), spec)

        def draw_mu(rng, n):
            return mu_sampler(spec, rng, n, high_dim=False)

        draw_p0 = draw_p0_amps
        feasible = (lambda c: np.all((c >= 0) & (c <= upper), axis=1)) if config.constraints else None
    else:
        dim = 3 * basis.dim

        def embed(c):
            return c

        def draw_mu(rng, n):
            return mu_sampler(spec, rng, n, high_dim=True)

        def draw_p0(rng, n):
            return low_dim_to_coords(draw_p0_amps(rng, n), spec)

        feasible = FeasibilityChecker(spec.grid, spec.position_constraints(), spec.start) if config.constraints else None

    kind = config.metric_kind
    metric = None if kind is None else (euclidean(dim) if kind == "euclidean" else traj)
    return Setup(spec, dim, metric, traj, embed, draw_mu, draw_p0, feasible)


def _streams(seed: int):
    ss = np.random.SeedSequence(seed)
    names = ("p0", "mu_eval", "epsilon", "train")
    return dict(zip(names, (np.random.default_rng(s) for s in ss.spawn(len(names)))))


class _Env:
    """Uniform rollout/train interface over the surrogate and the tracker."""

    def __init__(self, config: ExperimentConfig, setup: Setup, rho_unit: float, seed: int):
        self.setup = setup
        self.config = config
        if config.env == "surrogate":
            self.learner = SurrogateLearner(
                np.zeros((1, setup.trajectory_metric.dim)),
                config.rho_learn * rho_unit,
                config.rho_fail * rho_unit,
                setup.trajectory_metric,
            )
            self.sim = None
        else:
            self.learner = None
            self.sim = TrackerSim(setup.spec.grid, controller_gain=config.controller_gain, seed=seed)

    def rollouts(self, contexts) -> list[RolloutRecord]:
        coords = self.setup.embed(contexts)
        if self.learner is not None:
            recs = self.learner.rollouts(coords)
        else:
            recs = [self.sim.rollout(Context(c, self.setup.spec.start)) for c in coords]
        # records live in the curriculum's context space
        return [RolloutRecord(c, r.metric_value, r.episode_return, r.steps) for c, r in zip(contexts, recs)]

    def train(self, contexts):
        if self.learner is not None:
            self.learner.train(self.setup.embed(contexts))

    def target_success(self, mu_eval_coords) -> float:
        if self.learner is None:
            return math.nan
        m = self.learner.metric_value(self.learner.distance_to_mastered(mu_eval_coords))
        return float(np.mean(m >= self.config.delta))


def _open_log(path: Path, epsilon: float, w0: float):
    f = open(path, "w", newline="")
    f.write(f"{SCHEMA} epsilon={_fmt(epsilon)} w0={_fmt(w0)}\n")
    f.write(",".join(RUN_COLUMNS) + "\n")
    f.flush()
    return f


def run_experiment(config: ExperimentConfig, out_dir=None, seed: int | None = None, setup: Setup | None = None,
                   write: bool = True) -> RunLog:
    """Run one seeded experiment; writes ``run.csv``, ``particles_final.json`` and ``timing.csv``.

    Rows are flushed every iteration, so an interrupted run leaves one row
    per completed iteration.
    """
    config.validate()
    seed = config.seed if seed is None else seed
    setup = setup or build_setup(config)
    rng = _streams(seed)
    N = config.n_particles
    out = Path(config.out_dir if out_dir is None else out_dir)

    p0 = setup.draw_p0(rng["p0"], N)
    mu_eval = setup.draw_mu(rng["mu_eval"], config.eval_size or N)
    mu_eval_coords = setup.embed(mu_eval)

    # epsilon in the variant metric; the surrogate radii use the trajectory metric
    eps_pool = np.vstack([setup.draw_p0(rng["epsilon"], config.epsilon_samples),
                          setup.draw_mu(rng["epsilon"], config.epsilon_samples)])
    coords_pool = setup.embed(eps_pool)
    rho_unit = epsilon_default(coords_pool, setup.trajectory_metric)
    log_metric = setup.metric or setup.trajectory_metric
    if setup.metric is None:
        eps_pool, p0_log, mu_log = coords_pool, setup.embed(p0), mu_eval_coords
    else:
        p0_log, mu_log = p0, mu_eval
    epsilon = config.epsilon if config.epsilon is not None else epsilon_default(eps_pool, log_metric)
    w0, _ = wasserstein2(p0_log, mu_log, log_metric, method="exact")

    env = _Env(config, setup, rho_unit, seed)
    log = RunLog(epsilon=epsilon, w0=w0)
    fh = None
    if write:
        out.mkdir(parents=True, exist_ok=True)
        fh = _open_log(out / "run.csv", epsilon, w0)
        timing = open(out / "timing.csv", "w")
        timing.write("iteration,wall_time\n")
    t0 = time.perf_counter()
    try:
        if config.variant == "no_curriculum":
            particles = _run_plain(config, setup, env, rng["train"], mu_eval_coords, log, fh, timing if write else None, t0)
        else:
            particles = _run_currot(config, setup, env, p0, epsilon, seed, mu_eval, mu_eval_coords, w0,
                                    log, fh, timing if write else None, t0)
    finally:
        if fh is not None:
            fh.close()
            timing.close()
    log.particles = particles
    if write:
        with open(out / "particles_final.json", "w") as f:
            json.dump({"iteration": len(log.rows), "variant": config.variant,
                       "contexts": np.asarray(particles).tolist()}, f)
    return log


def _emit(log: RunLog, row: dict, fh, timing, t0):
    log.rows.append({k: _fmt(row[k]) for k in RUN_COLUMNS})
    wall = time.perf_counter() - t0
    log.wall_time.append(wall)
    if fh is not None:
        fh.write(",".join(log.rows[-1][k] for k in RUN_COLUMNS) + "\n")
        fh.flush()
        timing.write(f"{row['iteration']},{wall:.6f}\n")
        timing.flush()


def _run_plain(config, setup, env, rng, mu_eval_coords, log, fh, timing, t0):
    contexts = None
    for it in range(1, config.iterations + 1):
        contexts = setup.draw_mu(rng, config.n_particles)
        recs = env.rollouts(contexts)
        env.train(contexts)
        m = np.array([r.metric_value for r in recs])
        _emit(log, dict(iteration=it, phase="target", wasserstein=math.nan, mean_metric=m.mean(),
                        success_rate=np.mean(m >= config.delta), moved_fraction=math.nan,
                        target_success=env.target_success(mu_eval_coords)), fh, timing, t0)
    return contexts if contexts is not None else np.zeros((0, setup.dim))


def _run_currot(config, setup, env, p0, epsilon, seed, mu_eval, mu_eval_coords, w0, log, fh, timing, t0):
    N = config.n_particles
    cc = CurrotConfig(epsilon=epsilon, delta=config.delta, metric=setup.metric, bandwidth=config.bandwidth,
                      theta=config.theta, candidates_per_particle=config.candidates_per_particle,
                      sampler=config.sampler, seed=seed)
    buffer = PerformanceBuffer(config.success_capacity or 2 * N, config.recent_capacity or 2 * N, config.delta)
    state = CurriculumState.initial(p0)
    for it in range(1, config.iterations + 1):
        recs = env.rollouts(state.particles)
        env.train(state.particles)
        state, stats = curriculum_step(state, buffer, recs, cc, setup.draw_mu, setup.feasible)
        w, _ = wasserstein2(state.particles, mu_eval, setup.metric, method="exact")
        m = np.array([r.metric_value for r in recs])
        _emit(log, dict(iteration=it, phase=stats.phase.value, wasserstein=w / w0, mean_metric=m.mean(),
                        success_rate=stats.success_rate, moved_fraction=stats.moved_fraction,
                        target_success=env.target_success(mu_eval_coords)), fh, timing, t0)
    return np.asarray(state.particles)


def _mean_stderr(x):
    x = np.asarray([v for v in x if np.isfinite(v)], dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


def ablate(base: ExperimentConfig, variants, dims, out_dir=None, on_error: Callable | None = None) -> list[dict]:
    """Cross product of variants and context dims over ``base.seeds``.

    Per-run errors are recorded and the sweep continues; one summary row per
    (variant, dim) is written to ``summary.csv``.
    """
    out = Path(base.out_dir if out_dir is None else out_dir)
    rows = []
    for variant in variants:
        for dim in dims:
            cell = out / f"{variant}_{dim}"
            logs, failed = [], 0
            try:
                cfg = base.replace(variant=variant, context_dim=str(dim))
                setup = build_setup(cfg)
            except Exception as err:  # noqa: BLE001
                failed = len(base.seeds)
                if on_error:
                    on_error(variant, dim, None, err)
                cfg = None
            if cfg is not None:
                for s in cfg.seeds:
                    try:
                        logs.append(run_experiment(cfg, cell / f"seed{s}", seed=s, setup=setup))
                    except Exception as err:  # noqa: BLE001
                        failed += 1
                        if on_error:
                            on_error(variant, dim, s, err)
            its = [lg.iterations_to_success(base.success_wasserstein) for lg in logs]
            finals = [lg.final_wasserstein for lg in logs]
            its_m, its_se = _mean_stderr(its)
            fin_m, fin_se = _mean_stderr(finals)
            rows.append(dict(variant=variant, context_dim=str(dim), runs=len(logs), failed=failed,
                             completed=int(np.sum(np.isfinite(its))),
                             iterations_to_success_mean=its_m, iterations_to_success_stderr=its_se,
                             final_wasserstein_mean=fin_m, final_wasserstein_stderr=fin_se))
    out.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    buf.write(SCHEMA + "\n" + ",".join(SUMMARY_COLUMNS) + "\n")
    for r in rows:
        buf.write(",".join(_fmt(r[k]) for k in SUMMARY_COLUMNS) + "\n")
    (out / "summary.csv").write_text(buf.getvalue())
    return rows


def check(seed: int = 0, basis=None, out=None) -> bool:
    """Run every oracle suite, print a table, return True when all pass."""
    from .oracles import run_suites

    results = run_suites(seed=seed, basis=basis)
    width = max(len(r.name) for r in results)
    lines = [f"{'suite':<{width}}  status  {'max error':>10}  {'tolerance':>9}"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'pass' if r.passed else 'FAIL':<6}  {r.error:>10.3e}  {r.tolerance:>9.1e}")
    print("\n".join(lines), file=out)
    return all(r.passed for r in results)
