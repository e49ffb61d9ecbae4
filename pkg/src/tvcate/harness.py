"""Reproducible benchmark experiments over the synthetic DGP families.

An :class:`ExperimentConfig` pins one experiment completely: generator,
horizons, sample sizes, seed list, learner set, nuisance and second-stage
hyper-parameters.  Given the same config, :func:`run_experiment` and
:func:`overlap_sweep` produce byte-identical result files on every run and
under every ``workers`` setting, because all randomness flows through seeds
derived from the config and rows are assembled in a fixed order.  Measured
wall times are the one intentionally non-reproducible quantity, so the
``walltime_s`` column is written as ``0.0`` unless ``record_walltime`` is
switched on.

Configs travel as flat ``key = value`` text files (:func:`config_to_text`,
:func:`parse_config_text`); every field can also be overridden from a
``--key=value`` command-line flag via :func:`config_with_overrides`.  The
default output directory is taken from the ``TVCATE_OUTPUT_DIR`` environment
variable when a config leaves ``output_dir`` empty.

Result files per experiment: a row-level CSV (``learner,tau,seed,rmse,
walltime_s,clip_fraction``, reals at 17 significant digits), a JSON mirror of
the same rows plus the config, and a per-(learner, tau) summary CSV with
mean and standard deviation of RMSE across seeds.  The overlap sweep
prepends a ``gamma`` column and emits a plot-data JSON with per-gamma mean
curves.  Evaluation pools test histories over every valid decision time; the
``eval_t`` field restricts it to one fixed time instead.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import repeat
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.stats

from .dgp import StructuralDGP, get_dgp, benchmark_pair, simulate_panel
from .learners import ClassifierSpec, RegressorSpec
from .meta import LEARNER_KINDS, fit_meta
from .nuisance import build_row_table, fit_nuisances, make_split
from .panel import HistoryView

__all__ = [
    "OUTPUT_DIR_ENV", "RESULT_FIELDS", "SWEEP_FIELDS", "ExperimentConfig",
    "ResultRow", "ExperimentResult", "SweepRow", "SweepResult",
    "default_sweep_config", "config_to_dict", "config_to_text",
    "parse_config_text", "config_with_overrides", "run_experiment",
    "overlap_sweep", "summarize", "summarize_sweep", "format_results_csv",
    "format_summary_csv", "format_sweep_csv", "format_summary_table",
    "format_sweep_table", "results_to_json_dict", "sweep_to_json_dict",
    "emit_results", "emit_sweep", "resolve_output_dir", "spearman",
]

#: Environment variable consulted when a config leaves ``output_dir`` empty.
OUTPUT_DIR_ENV = "TVCATE_OUTPUT_DIR"

#: Column order of the row-level result CSV.
RESULT_FIELDS = ("learner", "tau", "seed", "rmse", "walltime_s", "clip_fraction")

#: Column order of the overlap-sweep CSV.
SWEEP_FIELDS = ("gamma",) + RESULT_FIELDS


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of one benchmark experiment.

    Parameters
    ----------
    dgp : str
        Generator name from the registry, e.g. ``"d1"`` or ``"d3:gamma=4"``.
        Experiments need a generator with closed-form effects, so the
        discrete enumeration generator is not runnable here.
    taus : tuple of int
        Horizons to evaluate; each uses its preregistered intervention pair.
    n_train, n_test : int
        Trajectories simulated for fitting and for evaluation.
    seeds : tuple of int
        One independent replication per seed; all stage seeds derive from it.
    learners : tuple of str
        Learner kinds to fit, each a member of ``LEARNER_KINDS``.
    regressor_features, regressor_bandwidth, regressor_ridge
        Random-feature ridge settings for the response and
        history-adjustment regressions (benchmark-tuned defaults).
    classifier_cosine : bool
        Pass the propensity classifier inputs through the random cosine map
        (set False for a plain-feature logistic fit).
    classifier_l2 : float or "auto"
        Propensity classifier penalty; "auto" picks it by held-out log-loss.
    second_stage_features, second_stage_bandwidth, second_stage_ridge
        Pseudo-outcome regression settings.  The heavy default ridge is the
        grid-chosen value for the benchmark generators, whose effects are
        constant in history; library callers pick their own spec.
    clip_eps : float
        Propensity clipping level for the weighting learners.
    split_enabled : bool
        Cross-fit nuisances on disjoint folds instead of the full panel.
    eval_t : int or None
        Evaluate at one fixed decision time instead of pooling all valid t.
    gammas : tuple of float
        Overlap-knob grid for :func:`overlap_sweep` (ignored by plain runs).
    fast : bool
        Shrink both sample sizes tenfold for quick smoke runs.
    record_walltime : bool
        Write measured per-fit wall times instead of the deterministic 0.0.
    workers : int
        Worker processes for seed-level (and gamma-level) parallelism.
        Results are byte-identical for every value.
    output_dir : str
        Where emit functions write files; empty means "TVCATE_OUTPUT_DIR or
        ``results``".
    """

    dgp: str = "d1"
    taus: Tuple[int, ...] = (0, 1, 2)
    n_train: int = 5000
    n_test: int = 1000
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    learners: Tuple[str, ...] = LEARNER_KINDS
    regressor_features: int = 256
    regressor_bandwidth: float = 1.5
    regressor_ridge: float = 1e-2
    classifier_cosine: bool = True
    classifier_l2: Union[float, str] = "auto"
    second_stage_features: int = 256
    second_stage_bandwidth: float = 1.0
    second_stage_ridge: float = 1.0
    clip_eps: float = 0.03
    split_enabled: bool = False
    eval_t: Optional[int] = None
    gammas: Tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0)
    fast: bool = False
    record_walltime: bool = False
    workers: int = 1
    output_dir: str = ""

    def __post_init__(self):
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be a non-empty tuple without repeats")
        if not self.taus or any(t < 0 for t in self.taus):
            raise ValueError("taus must be a non-empty tuple of horizons >= 0")
        if not self.learners:
            raise ValueError("learners must name at least one learner kind")
        for kind in self.learners:
            if kind not in LEARNER_KINDS:
                raise ValueError(f"unknown learner kind {kind!r}; "
                                 f"choose from {LEARNER_KINDS}")
        if len(set(self.learners)) != len(self.learners):
            raise ValueError("learners must not repeat")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("n_train and n_test must be >= 1")
        if not 0.0 < self.clip_eps < 0.5:
            raise ValueError("clip_eps must lie in (0, 0.5)")
        if self.eval_t is not None and self.eval_t < 1:
            raise ValueError("eval_t counts decision times from 1")
        if not self.gammas:
            raise ValueError("gammas must be a non-empty tuple")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


def default_sweep_config() -> ExperimentConfig:
    """Overlap-sweep preset: the regime where weight variance dominates.

    Small training sets, a light second-stage ridge, tight clipping and a
    plain-feature propensity fit (the overlap knob's assignment logit is
    linear in history, and the bounded cosine map attenuates its tails) let
    the weighting learners actually feel the vanishing overlap.
    """
    return ExperimentConfig(
        dgp="d3", taus=(1,), n_train=2000, learners=("DR", "IVW-DR"),
        classifier_cosine=False, classifier_l2=1e-4,
        second_stage_ridge=1e-2, clip_eps=0.01,
    )


# --------------------------------------------------------------------------
# config serialization

_CONFIG_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_INT_TUPLES = ("taus", "seeds")
_FLOAT_TUPLES = ("gammas",)
_STR_TUPLES = ("learners",)
_BOOLS = ("classifier_cosine", "split_enabled", "fast", "record_walltime")
_INTS = ("n_train", "n_test", "regressor_features", "second_stage_features",
         "workers")
_FLOATS = ("regressor_bandwidth", "regressor_ridge", "second_stage_bandwidth",
           "second_stage_ridge", "clip_eps")


def _value_to_str(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_value_to_str(v) for v in value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def _coerce_field(name: str, raw: str):
    raw = raw.strip()
    if name not in _CONFIG_FIELDS:
        raise ValueError(f"unknown config key {name!r}; valid keys: "
                         + ", ".join(sorted(_CONFIG_FIELDS)))
    try:
        if name in _INT_TUPLES:
            return tuple(int(v) for v in raw.split(",") if v.strip() != "")
        if name in _FLOAT_TUPLES:
            return tuple(float(v) for v in raw.split(",") if v.strip() != "")
        if name in _STR_TUPLES:
            return tuple(v.strip() for v in raw.split(",") if v.strip() != "")
        if name in _BOOLS:
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if name in _INTS:
            return int(raw)
        if name in _FLOATS:
            return float(raw)
        if name == "eval_t":
            return None if raw.lower() in ("none", "") else int(raw)
        if name == "classifier_l2":
            return "auto" if raw.lower() == "auto" else float(raw)
        return raw  # dgp, output_dir
    except ValueError as exc:
        raise ValueError(f"bad value for config key {name!r}: {exc}") from exc


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, object]:
    """JSON-ready mapping of every config field (tuples become lists)."""
    out = {}
    for name in _CONFIG_FIELDS:
        value = getattr(cfg, name)
        out[name] = list(value) if isinstance(value, tuple) else value
    return out


def config_to_text(cfg: ExperimentConfig) -> str:
    """Render the config as a ``key = value`` file that parses back equal."""
    lines = [f"{name} = {_value_to_str(getattr(cfg, name))}"
             for name in _CONFIG_FIELDS]
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> Dict[str, str]:
    """Parse ``key = value`` lines into a raw string mapping.

    Blank lines and ``#`` comments are skipped; a repeated key keeps the
    last assignment.  Values stay strings here so command-line overrides and
    file entries share one coercion path (:func:`config_with_overrides`).
    """
    items: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"line {lineno}: expected 'key = value', "
                             f"got {line.strip()!r}")
        key, _, value = stripped.partition("=")
        items[key.strip()] = value.strip()
    return items


def config_with_overrides(base: Optional[ExperimentConfig],
                          items: Mapping[str, str]) -> ExperimentConfig:
    """Apply raw string assignments on top of ``base`` (or the defaults)."""
    cfg = base if base is not None else ExperimentConfig()
    coerced = {name: _coerce_field(name, raw) for name, raw in items.items()}
    return dataclasses.replace(cfg, **coerced) if coerced else cfg


# --------------------------------------------------------------------------
# running experiments

@dataclass(frozen=True)
class ResultRow:
    """One (learner, horizon, seed) evaluation."""

    learner: str
    tau: int
    seed: int
    rmse: float
    walltime_s: float
    clip_fraction: float


@dataclass(frozen=True)
class ExperimentResult:
    """All rows of one experiment plus any fit advisories encountered."""

    config: ExperimentConfig
    rows: Tuple[ResultRow, ...]
    advisories: Tuple[str, ...] = ()


@dataclass(frozen=True)
class SweepRow:
    """One (overlap knob, learner, seed) evaluation at the sweep horizon."""

    gamma: float
    learner: str
    tau: int
    seed: int
    rmse: float
    walltime_s: float
    clip_fraction: float


@dataclass(frozen=True)
class SweepResult:
    """All rows of one overlap sweep plus any fit advisories encountered."""

    config: ExperimentConfig
    rows: Tuple[SweepRow, ...]
    advisories: Tuple[str, ...] = ()


def _experiment_dgp(name: str) -> StructuralDGP:
    dgp = get_dgp(name)
    if not isinstance(dgp, StructuralDGP) or dgp.response_form is None:
        raise ValueError(f"generator {name!r} has no closed-form effects; "
                         "experiments need one of the structural families")
    return dgp


def _effective_sizes(cfg: ExperimentConfig) -> Tuple[int, int]:
    if not cfg.fast:
        return cfg.n_train, cfg.n_test
    return max(cfg.n_train // 10, 50), max(cfg.n_test // 10, 50)


def _specs(cfg: ExperimentConfig):
    regressor = RegressorSpec(feature_count=cfg.regressor_features,
                              bandwidth=cfg.regressor_bandwidth,
                              ridge_lambda=cfg.regressor_ridge)
    classifier = ClassifierSpec(use_random_features=cfg.classifier_cosine,
                                l2=cfg.classifier_l2)
    second_stage = RegressorSpec(feature_count=cfg.second_stage_features,
                                 bandwidth=cfg.second_stage_bandwidth,
                                 ridge_lambda=cfg.second_stage_ridge)
    return regressor, classifier, second_stage


def _needed_nuisances(learners: Sequence[str]) -> Tuple[str, ...]:
    need = set()
    for kind in learners:
        if kind == "PI-HA":
            need.add("history")
        elif kind in ("PI-RA", "RA"):
            need.add("response")
        elif kind == "IPW":
            need.add("propensity")
        else:  # DR, IVW-DR
            need.update(("response", "propensity"))
    return tuple(n for n in ("response", "propensity", "history") if n in need)


def _validate_horizons(cfg: ExperimentConfig, dgp: StructuralDGP) -> None:
    for tau in cfg.taus:
        pair = benchmark_pair(tau)  # raises for horizons without a pair
        if tau >= dgp.horizon:
            raise ValueError(f"tau={tau} needs horizon > {tau}, generator "
                             f"{dgp.name!r} has horizon {dgp.horizon}")
        if cfg.eval_t is not None and cfg.eval_t > dgp.horizon - tau:
            raise ValueError(f"eval_t={cfg.eval_t} is past the last valid "
                             f"decision time {dgp.horizon - tau} for tau={tau}")
        del pair


def _seed_job(cfg: ExperimentConfig, seed: int):
    """Fit and evaluate every (tau, learner) cell for one seed."""
    dgp = _experiment_dgp(cfg.dgp)
    n_train, n_test = _effective_sizes(cfg)
    regressor, classifier, second_stage = _specs(cfg)
    rows: List[ResultRow] = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        train = simulate_panel(dgp, n_train, seed=[seed, 10])
        test = simulate_panel(dgp, n_test, seed=[seed, 11])
        for tau in cfg.taus:
            pair = benchmark_pair(tau)
            truth = dgp.response_form.cate(pair)
            split = make_split(train, tau, enabled=cfg.split_enabled,
                               seed=[seed, 12])
            try:
                nuisances = fit_nuisances(
                    train, pair, regressor_spec=regressor,
                    classifier_spec=classifier, split=split,
                    clip_eps=cfg.clip_eps,
                    need=_needed_nuisances(cfg.learners))
            except Exception as exc:
                raise RuntimeError(f"nuisance fit failed at tau={tau} "
                                   f"seed={seed}: {exc}") from exc
            table = build_row_table(test, tau, nuisances.codec)
            keep = np.ones(table.t.size, dtype=bool)
            if cfg.eval_t is not None:
                keep = table.t == cfg.eval_t
            views = [HistoryView(test.trajectories[i], t)
                     for i, t in zip(table.traj_id[keep], table.t[keep])]
            for kind in cfg.learners:
                start = time.perf_counter()
                try:
                    model = fit_meta(kind, train, pair, nuisances,
                                     second_stage_spec=second_stage)
                    preds = model.predict(views)
                except Exception as exc:
                    raise RuntimeError(f"learner {kind!r} failed at tau={tau}"
                                       f" seed={seed}: {exc}") from exc
                elapsed = time.perf_counter() - start
                rows.append(ResultRow(
                    learner=kind, tau=tau, seed=seed,
                    rmse=float(np.sqrt(np.mean((preds - truth) ** 2))),
                    walltime_s=elapsed if cfg.record_walltime else 0.0,
                    clip_fraction=float(
                        model.diagnostics.get("clip_fraction", 0.0))))
    notes = sorted({str(w.message) for w in caught})
    return rows, notes


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run the full seed grid and return rows in a fixed, seed-free order."""
    dgp = _experiment_dgp(cfg.dgp)
    _validate_horizons(cfg, dgp)
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers,
                                                 len(cfg.seeds))) as pool:
            outputs = list(pool.map(_seed_job, repeat(cfg), cfg.seeds))
    else:
        outputs = [_seed_job(cfg, seed) for seed in cfg.seeds]
    rows = [row for job_rows, _ in outputs for row in job_rows]
    rows.sort(key=lambda r: (cfg.learners.index(r.learner), r.tau,
                             cfg.seeds.index(r.seed)))
    advisories = sorted({note for _, notes in outputs for note in notes})
    return ExperimentResult(cfg, tuple(rows), tuple(advisories))


def _sweep_job(cfg: ExperimentConfig, gamma: float, seed: int):
    point = dataclasses.replace(cfg, dgp=f"d3:gamma={gamma:g}")
    rows, notes = _seed_job(point, seed)
    sweep_rows = [SweepRow(gamma=gamma, learner=r.learner, tau=r.tau,
                           seed=r.seed, rmse=r.rmse, walltime_s=r.walltime_s,
                           clip_fraction=r.clip_fraction) for r in rows]
    return sweep_rows, notes


def overlap_sweep(cfg: ExperimentConfig) -> SweepResult:
    """Run the gamma grid x seed grid at the single sweep horizon."""
    if cfg.dgp.split(":", 1)[0] != "d3":
        raise ValueError("the overlap sweep runs on the d3 family; set "
                         "dgp=d3 (the gamma grid comes from the config)")
    if len(cfg.taus) != 1:
        raise ValueError("the overlap sweep uses a single tau")
    _validate_horizons(cfg, _experiment_dgp(f"d3:gamma={cfg.gammas[0]:g}"))
    jobs = [(gamma, seed) for gamma in cfg.gammas for seed in cfg.seeds]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.workers,
                                                 len(jobs))) as pool:
            outputs = list(pool.map(_sweep_job, repeat(cfg),
                                    (g for g, _ in jobs),
                                    (s for _, s in jobs)))
    else:
        outputs = [_sweep_job(cfg, gamma, seed) for gamma, seed in jobs]
    rows = [row for job_rows, _ in outputs for row in job_rows]
    rows.sort(key=lambda r: (cfg.gammas.index(r.gamma),
                             cfg.learners.index(r.learner), r.tau,
                             cfg.seeds.index(r.seed)))
    advisories = sorted({note for _, notes in outputs for note in notes})
    return SweepResult(cfg, tuple(rows), tuple(advisories))


# --------------------------------------------------------------------------
# summaries and serialization

def _mean_sd(values: Sequence[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    sd = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), sd


def summarize(result: ExperimentResult) -> List[Dict[str, object]]:
    """Per-(learner, tau) mean and standard deviation of RMSE across seeds."""
    out = []
    for kind in result.config.learners:
        for tau in result.config.taus:
            values = [r.rmse for r in result.rows
                      if r.learner == kind and r.tau == tau]
            mean, sd = _mean_sd(values)
            out.append({"learner": kind, "tau": tau,
                        "mean_rmse": mean, "sd_rmse": sd})
    return out


def summarize_sweep(sweep: SweepResult) -> List[Dict[str, object]]:
    """Per-(gamma, learner) mean and standard deviation of RMSE."""
    out = []
    for gamma in sweep.config.gammas:
        for kind in sweep.config.learners:
            values = [r.rmse for r in sweep.rows
                      if r.gamma == gamma and r.learner == kind]
            mean, sd = _mean_sd(values)
            out.append({"gamma": gamma, "learner": kind,
                        "mean_rmse": mean, "sd_rmse": sd})
    return out


def _real(x: float) -> str:
    return "%.17g" % float(x)


def format_results_csv(result: ExperimentResult) -> str:
    lines = [",".join(RESULT_FIELDS)]
    for r in result.rows:
        lines.append(f"{r.learner},{r.tau},{r.seed},{_real(r.rmse)},"
                     f"{_real(r.walltime_s)},{_real(r.clip_fraction)}")
    return "\n".join(lines) + "\n"


def format_summary_csv(result: ExperimentResult) -> str:
    lines = ["learner,tau,mean_rmse,sd_rmse"]
    for row in summarize(result):
        lines.append(f"{row['learner']},{row['tau']},"
                     f"{_real(row['mean_rmse'])},{_real(row['sd_rmse'])}")
    return "\n".join(lines) + "\n"


def format_sweep_csv(sweep: SweepResult) -> str:
    lines = [",".join(SWEEP_FIELDS)]
    for r in sweep.rows:
        lines.append(f"{_real(r.gamma)},{r.learner},{r.tau},{r.seed},"
                     f"{_real(r.rmse)},{_real(r.walltime_s)},"
                     f"{_real(r.clip_fraction)}")
    return "\n".join(lines) + "\n"


def results_to_json_dict(result: ExperimentResult) -> Dict[str, object]:
    """JSON mirror of the result CSV plus the config and advisories."""
    return {
        "config": config_to_dict(result.config),
        "rows": [dataclasses.asdict(r) for r in result.rows],
        "summary": summarize(result),
        "advisories": list(result.advisories),
    }


def sweep_to_json_dict(sweep: SweepResult) -> Dict[str, object]:
    """Sweep rows plus per-gamma mean curves ready for plotting."""
    curves = {}
    for kind in sweep.config.learners:
        rows = [r for r in summarize_sweep(sweep) if r["learner"] == kind]
        curves[kind] = {"mean_rmse": [r["mean_rmse"] for r in rows],
                        "sd_rmse": [r["sd_rmse"] for r in rows]}
    return {
        "config": config_to_dict(sweep.config),
        "gamma_grid": list(sweep.config.gammas),
        "tau": sweep.config.taus[0],
        "curves": curves,
        "rows": [dataclasses.asdict(r) for r in sweep.rows],
        "advisories": list(sweep.advisories),
    }


def format_summary_table(result: ExperimentResult, scale: float = 1.0) -> str:
    """Human-readable summary; ``scale=10`` matches tables reported x10."""
    suffix = "" if scale == 1.0 else f" (x{scale:g})"
    header = f"{'learner':10} {'tau':>3}  {'mean_rmse' + suffix:>16} " \
             f"{'sd_rmse' + suffix:>16}"
    lines = [header]
    for row in summarize(result):
        lines.append(f"{row['learner']:10} {row['tau']:>3}  "
                     f"{row['mean_rmse'] * scale:16.4f} "
                     f"{row['sd_rmse'] * scale:16.4f}")
    return "\n".join(lines)


def format_sweep_table(sweep: SweepResult, scale: float = 1.0) -> str:
    """Human-readable sweep summary; ``scale=10`` for x10 display."""
    suffix = "" if scale == 1.0 else f" (x{scale:g})"
    header = f"{'gamma':>6} {'learner':10}  {'mean_rmse' + suffix:>16} " \
             f"{'sd_rmse' + suffix:>16}"
    lines = [header]
    for row in summarize_sweep(sweep):
        lines.append(f"{row['gamma']:>6g} {row['learner']:10}  "
                     f"{row['mean_rmse'] * scale:16.4f} "
                     f"{row['sd_rmse'] * scale:16.4f}")
    return "\n".join(lines)


def resolve_output_dir(cfg: ExperimentConfig) -> str:
    """Config value, else the environment default, else ``results``."""
    return cfg.output_dir or os.environ.get(OUTPUT_DIR_ENV, "") or "results"


def _json_text(payload: Dict[str, object]) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def emit_results(result: ExperimentResult, output_dir: Optional[str] = None,
                 stem: str = "results") -> Dict[str, str]:
    """Write ``<stem>.csv``, ``<stem>.json`` and ``<stem>_summary.csv``."""
    outdir = output_dir if output_dir is not None \
        else resolve_output_dir(result.config)
    os.makedirs(outdir, exist_ok=True)
    paths = {"csv": os.path.join(outdir, f"{stem}.csv"),
             "json": os.path.join(outdir, f"{stem}.json"),
             "summary": os.path.join(outdir, f"{stem}_summary.csv")}
    _write(paths["csv"], format_results_csv(result))
    _write(paths["json"], _json_text(results_to_json_dict(result)))
    _write(paths["summary"], format_summary_csv(result))
    return paths


def emit_sweep(sweep: SweepResult, output_dir: Optional[str] = None,
               stem: str = "sweep") -> Dict[str, str]:
    """Write ``<stem>.csv`` and the plot-data ``<stem>.json``."""
    outdir = output_dir if output_dir is not None \
        else resolve_output_dir(sweep.config)
    os.makedirs(outdir, exist_ok=True)
    paths = {"csv": os.path.join(outdir, f"{stem}.csv"),
             "json": os.path.join(outdir, f"{stem}.json")}
    _write(paths["csv"], format_sweep_csv(sweep))
    _write(paths["json"], _json_text(sweep_to_json_dict(sweep)))
    return paths


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("spearman needs two equal-length 1-D arrays, n >= 2")
    return float(scipy.stats.spearmanr(x, y).statistic)
