"""Experiment driver: configuration, trials, replication and CSV reports.

Each trial runs ``N`` iterations of draw, estimate, update components,
update weights and record metrics.  Trials are independent and seeded by
``(seed, trial)``, so replications can run on a thread pool while the
aggregated output stays identical to a sequential run.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .components import StudentTParams, mg_update, rgd_update_means, student_update_with_halving
from .divergence import GRID_KINDS, build_grid, psi_alpha_from_logs, vr_bound_exact, vr_bound_mc
from .errors import ConfigError, NumericalDegeneracyError
from .expfam import GaussianParams
from .mixture import (MixtureState, ScheduleConfig, eval_log_mixture, state_from_json,
                      state_to_json, update_weights_log)
from .sampling import SAMPLERS, draw_samples, estimate_stats, exact_stats, rng_stream
from .targets import BUILTIN_KINDS, builtin_target, load_grid_target

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "FAMILIES",
    "RULES",
    "LOGMSE_FLOOR",
    "ExperimentConfig",
    "IterationTrace",
    "TrialResult",
    "Report",
    "load_config",
    "make_target",
    "make_grid",
    "initial_state",
    "run_trial",
    "log_mse",
    "replicate",
    "write_report",
    "sweep",
    "evaluate_checkpoint",
]

logger = logging.getLogger(__name__)

FAMILIES = ("gaussian-full", "gaussian-fixed-sigma2", "student-t")
RULES = ("MG", "RGD")
INTEGRALS = ("mc", "quadrature")
LOGMSE_FLOOR = -50.0
SNAPSHOT_MAX_J = 64


@dataclass
class ExperimentConfig:
    """Full description of an experiment.

    ``N`` is derived from ``budget // M`` when ``budget`` is given; the two
    must agree exactly.  ``eta``, ``kappa`` and ``gamma`` are constants or
    per-iteration lists.
    """

    target: str = "ewgmm"
    target_c: float = 2.0
    target_file: str | None = None
    d: int = 1
    family: str = "gaussian-full"
    J: int = 10
    M: int = 200
    N: int | None = None
    budget: int | None = None
    alpha: float = 0.2
    eta: object = 0.0
    kappa: object = 0.0
    gamma: object = 0.5
    rule: str = "MG"
    sampler: str = "is_n"
    trials: int = 10
    seed: int = 0
    threads: int = 1
    init_mean_var: float = 10.0
    init_sigma2: float = 1.0
    init_dof: float = 5.0
    init_means: list | None = None
    init_weights: list | None = None
    integrals: str = "mc"
    quad_metrics: bool = False
    quad_kind: str = "gauss-hermite-tensor"
    quad_order: int | None = None
    quad_center: float = 0.0
    quad_scale: float = 1.0
    quad_bounds: list = field(default_factory=lambda: [-30.0, 30.0])
    quad_half_width: float = 8.0

    def __post_init__(self):
        self.validate()

    @property
    def iterations(self) -> int:
        if self.budget is not None:
            return int(self.budget) // int(self.M)
        return 100 if self.N is None else int(self.N)

    def schedule(self):
        return ScheduleConfig(alpha=self.alpha, eta=self.eta, kappa=self.kappa, gamma=self.gamma,
                              sampler=self.sampler, M=self.M, N=self.iterations)

    def validate(self):
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.target_file is not None or self.target in BUILTIN_KINDS,
             f"unknown target {self.target!r}")
        need(self.family in FAMILIES, f"family must be one of {FAMILIES}")
        need(self.rule in RULES, f"rule must be one of {RULES}")
        need(self.sampler in SAMPLERS, f"sampler must be one of {SAMPLERS}")
        need(self.integrals in INTEGRALS, f"integrals must be one of {INTEGRALS}")
        need(self.quad_kind in GRID_KINDS + ("gauss-hermite",), f"quad_kind must be one of {GRID_KINDS}")
        for name in ("d", "J", "M", "trials", "threads"):
            need(isinstance(getattr(self, name), (int, np.integer)) and getattr(self, name) >= 1,
                 f"{name} must be a positive integer")
        need(isinstance(self.seed, (int, np.integer)) and 0 <= self.seed < 2 ** 64,
             "seed must be an unsigned 64-bit integer")
        if self.budget is not None:
            need(self.budget % self.M == 0, "budget must be a multiple of M")
            need(self.N is None or self.N * self.M == self.budget, "N * M must equal budget")
        need(self.iterations >= 1, "need at least one iteration")
        need(self.alpha != 1.0, "alpha = 1 is not supported")
        need(self.integrals == "mc" or self.d <= 3, "quadrature integrals need d <= 3")
        need(self.init_sigma2 > 0 and self.init_mean_var >= 0 and self.init_dof > 0,
             "initial variances and dof must be positive")
        if self.init_means is not None:
            need(np.shape(self.init_means) == (self.J, self.d), "init_means must have shape (J, d)")
        if self.init_weights is not None:
            w = np.asarray(self.init_weights, dtype=float)
            need(w.shape == (self.J,) and np.all(w > 0), "init_weights must be J positive values")
        try:
            self.schedule()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return dataclasses.asdict(self)


def load_config(path, overrides=None):
    """Read a TOML file whose keys mirror :class:`ExperimentConfig` fields."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return config_from_dict(data)


def config_from_dict(data):
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def make_target(config):
    if config.target_file is not None:
        target = load_grid_target(config.target_file)
        if target.dimension != config.d:
            raise ConfigError("grid target dimension does not match d")
        return target
    return builtin_target(config.target, config.d, config.target_c)


def make_grid(config):
    return build_grid(config.quad_kind, config.d, config.quad_order, center=config.quad_center,
                      scale=config.quad_scale, bounds=tuple(config.quad_bounds),
                      half_width=config.quad_half_width)


def initial_state(config, trial_index):
    """Initial mixture of a trial, drawn from the stream ``(seed, trial, 0)``."""
    J, d = config.J, config.d
    if config.init_means is not None:
        means = np.asarray(config.init_means, dtype=float)
    else:
        rng = rng_stream(config.seed, trial_index, 0)
        means = rng.normal(0.0, np.sqrt(config.init_mean_var), size=(J, d))
    if config.init_weights is not None:
        w = np.asarray(config.init_weights, dtype=float)
        weights = w / w.sum()
    else:
        weights = np.full(J, 1.0 / J)
    cov = config.init_sigma2 * np.eye(d)
    if config.family == "student-t":
        comps = [StudentTParams(m, cov, config.init_dof) for m in means]
        return MixtureState(weights, comps, "student")
    return MixtureState(weights, [GaussianParams(m, cov) for m in means], "gaussian")


@dataclass
class IterationTrace:
    """Per-iteration metrics of one trial (index ``n`` describes the mixture before update ``n``)."""

    vr: np.ndarray
    psi: np.ndarray | None
    weights: dict
    ess: np.ndarray
    skipped: np.ndarray
    wall_time: np.ndarray

    def __len__(self):
        return len(self.vr)


@dataclass
class TrialResult:
    trace: IterationTrace
    state: MixtureState
    evaluations: int
    metric_evaluations: int


def _update_components(config, state, stats, gamma):
    if config.rule == "RGD":
        comps, skipped = rgd_update_means(state, stats.mean_hats, stats.log_integrals, gamma)
        return comps, state.J if skipped else int((~stats.available).sum())
    n_skip = int((~stats.available).sum())
    if config.family == "student-t":
        comps = []
        for j, comp in enumerate(state.components):
            if stats.moments[j] is None:
                comps.append(comp)
            else:
                comps.append(student_update_with_halving(comp, stats.points, stats.log_terms[:, j], gamma))
        return comps, n_skip
    cov_mode = "fixed" if config.family == "gaussian-fixed-sigma2" else "full"
    return mg_update(state, stats.moments, gamma, cov_mode), n_skip


def run_trial(config, trial_index, target=None):
    """Run one trial.

    Returns
    -------
    TrialResult
        Trace of length ``N``, final state and the number of target
        evaluations used by the algorithm (metric evaluations are counted
        separately).
    """
    base = make_target(config) if target is None else target
    algo_target = base.fresh()
    metric_target = base.fresh()
    schedule = config.schedule()
    N, J, alpha = schedule.N, config.J, config.alpha
    state = initial_state(config, trial_index)
    quad = config.integrals == "quadrature"
    want_psi = quad or (config.quad_metrics and config.d <= 3)
    grid = make_grid(config) if want_psi else None
    log_p_grid = metric_target.log_p(grid.nodes) if grid is not None else None

    vr = np.empty(N)
    psi = np.empty(N) if want_psi else None
    ess = np.zeros((N, J))
    skipped = np.zeros(N, dtype=int)
    wall = np.empty(N)
    snapshots = {}
    keep_all = J <= SNAPSHOT_MAX_J

    for n in range(N):
        t0 = time.perf_counter()
        eta, kappa, gamma = schedule.at(n)
        if keep_all or n == 0:
            snapshots[n] = state.weights.copy()
        if grid is not None:
            log_mu_grid = eval_log_mixture(state, grid.nodes)
            psi[n] = psi_alpha_from_logs(alpha, log_mu_grid, log_p_grid, grid)
        if quad:
            stats = exact_stats(state, log_p_grid, grid, alpha)
            vr[n] = vr_bound_exact(alpha, stats.log_mu, stats.log_p, grid)
        else:
            rng = rng_stream(config.seed, trial_index, n + 1)
            batch = draw_samples(state, config.sampler, config.M, rng,
                                 seed_record=(config.seed, trial_index, n + 1))
            stats = estimate_stats(batch, state, algo_target, alpha)
            ok = np.isfinite(stats.log_p)
            vr[n] = (vr_bound_mc(alpha, stats.log_mu[ok], stats.log_p[ok], batch.log_q[ok])
                     if np.any(ok) else np.nan)
        ess[n] = stats.ess
        comps, n_skip = _update_components(config, state, stats, gamma)
        weights = state.weights
        if eta > 0:
            if np.all(np.isfinite(stats.log_integrals)):
                weights = update_weights_log(state.weights, stats.log_integrals, eta, kappa, alpha)
            else:
                n_skip = max(n_skip, 1)
        state = MixtureState(weights, comps, state.family)
        if not np.all(np.isfinite(state.means)):
            raise NumericalDegeneracyError(f"non-finite means at iteration {n} of trial {trial_index}")
        skipped[n] = n_skip
        wall[n] = time.perf_counter() - t0
    snapshots[N] = state.weights.copy()
    trace = IterationTrace(vr, psi, snapshots, ess, skipped, wall)
    return TrialResult(trace, state, algo_target.evaluations, metric_target.evaluations)


def log_mse(final_states, target):
    """Log of the trial-averaged squared error of the mixture mean, floored at -50."""
    if target.true_mean is None:
        raise ValueError("target has no true mean")
    errs = [float(np.sum((s.mixture_mean() - target.true_mean) ** 2)) for s in final_states]
    mse = float(np.mean(errs))
    if mse <= 0 or not np.isfinite(np.log(mse)):
        return LOGMSE_FLOOR
    return max(float(np.log(mse)), LOGMSE_FLOOR)


@dataclass
class Report:
    config: ExperimentConfig
    results: list
    logmse: float | None

    @property
    def states(self):
        return [r.state for r in self.results]

    def vr_matrix(self):
        return np.stack([r.trace.vr for r in self.results])


def replicate(config, threads=None, target=None):
    """Run ``config.trials`` trials (in parallel when ``threads > 1``) and aggregate."""
    base = make_target(config) if target is None else target
    threads = config.threads if threads is None else int(threads)
    indices = list(range(config.trials))
    if threads <= 1:
        results = [run_trial(config, t, base) for t in indices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: run_trial(config, t, base), indices))
    lm = log_mse([r.state for r in results], base) if base.true_mean is not None else None
    return Report(config, results, lm)


def _fmt(x):
    return "nan" if x is None or not np.isfinite(x) else repr(float(x))


def write_report(report, out_dir):
    """Write ``trace.csv``, ``summary.csv``, ``weights.csv``, the config and state checkpoints."""
    os.makedirs(out_dir, exist_ok=True)
    cfg = report.config
    vr = report.vr_matrix()
    with_psi = report.results[0].trace.psi is not None
    header = ["iter", "vr_mean", "vr_p10", "vr_p90"] + (["psi_exact"] if with_psi else []) + ["ess_min"]
    with open(os.path.join(out_dir, "trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for n in range(vr.shape[1]):
            col = vr[:, n]
            finite = col[np.isfinite(col)]
            if finite.size:
                mean = float(np.mean(finite))
                p10, p90 = np.percentile(finite, [10, 90])
            else:
                mean = p10 = p90 = np.nan
            row = [n, _fmt(mean), _fmt(p10), _fmt(p90)]
            if with_psi:
                row.append(_fmt(np.mean([r.trace.psi[n] for r in report.results])))
            row.append(_fmt(min(float(np.min(r.trace.ess[n])) for r in report.results)))
            w.writerow(row)
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["target", "rule", "sampler", "J", "gamma", "eta", "alpha", "logmse", "trials", "seed"])
        w.writerow([cfg.target_file or cfg.target, cfg.rule, cfg.sampler, cfg.J, _sched(cfg.gamma),
                    _sched(cfg.eta), _fmt(cfg.alpha), _fmt(report.logmse), cfg.trials, cfg.seed])
    with open(os.path.join(out_dir, "weights.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "j", "lambda"])
        snaps = report.results[0].trace.weights
        for n in sorted(snaps):
            for j, lam in enumerate(snaps[n]):
                w.writerow([n, j, _fmt(lam)])
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
    state_dir = os.path.join(out_dir, "states")
    os.makedirs(state_dir, exist_ok=True)
    for t, r in enumerate(report.results):
        with open(os.path.join(state_dir, f"trial_{t:04d}.json"), "w") as fh:
            fh.write(state_to_json(r.state))


def _sched(v):
    v = np.atleast_1d(np.asarray(v, dtype=float))
    return _fmt(v[0]) if v.size == 1 else "schedule"


def sweep(config, etas=None, gammas=None, Js=None, out_dir=".", threads=None):
    """Cartesian sweep over ``eta``, ``gamma`` and ``J``.

    Writes one trace CSV per cell and ``index.csv`` listing the cells.
    Returns the list of ``(eta, gamma, J, logmse)`` tuples.
    """
    etas = [config.eta] if etas is None else list(etas)
    gammas = [config.gamma] if gammas is None else list(gammas)
    Js = [config.J] if Js is None else list(Js)
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    cell = 0
    for J in Js:
        for gamma in gammas:
            for eta in etas:
                cfg = dataclasses.replace(config, J=int(J), gamma=gamma, eta=eta,
                                          init_means=None if int(J) != config.J else config.init_means,
                                          init_weights=None if int(J) != config.J else config.init_weights)
                report = replicate(cfg, threads=threads)
                cell_dir = os.path.join(out_dir, f"cell_{cell:03d}")
                write_report(report, cell_dir)
                rows.append((cell, eta, gamma, int(J), report.logmse, os.path.join(f"cell_{cell:03d}", "trace.csv")))
                cell += 1
    with open(os.path.join(out_dir, "index.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "eta", "gamma", "J", "logmse", "trace"])
        for c, eta, gamma, J, lm, path in rows:
            w.writerow([c, _sched(eta), _sched(gamma), J, _fmt(lm), path])
    return [(eta, gamma, J, lm) for _, eta, gamma, J, lm, _ in rows]


def evaluate_checkpoint(out_dir):
    """Recompute summary metrics from a run directory written by :func:`write_report`.

    Returns a dict with the logMSE and, when the dimension permits
    quadrature, the mean alpha-divergence of the saved states.
    """
    try:
        with open(os.path.join(out_dir, "config.json")) as fh:
            cfg = config_from_dict(json.load(fh))
    except OSError as exc:
        raise ConfigError(f"no run found in {out_dir}: {exc}") from exc
    state_dir = os.path.join(out_dir, "states")
    names = sorted(n for n in os.listdir(state_dir) if n.endswith(".json"))
    if not names:
        raise ConfigError(f"no state checkpoints in {state_dir}")
    states = []
    for name in names:
        with open(os.path.join(state_dir, name)) as fh:
            states.append(state_from_json(fh.read()))
    target = make_target(cfg)
    out = {"trials": len(states),
           "logmse": log_mse(states, target) if target.true_mean is not None else None}
    if cfg.d <= 3:
        grid = make_grid(cfg)
        lp = target.log_p(grid.nodes)
        out["psi_mean"] = float(np.mean([
            psi_alpha_from_logs(cfg.alpha, eval_log_mixture(s, grid.nodes), lp, grid) for s in states]))
    return out
