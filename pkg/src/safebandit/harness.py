"""Experiment orchestration: configs, trial runner, invariant monitor, export.

A trial is fully determined by (config, algorithm, trial_index): the
instance, noise, and any policy randomness come from independent generators
split off (master_seed, trial_index, stream). Trials of different algorithms
with the same trial index therefore share the sampled instance and the noise
sequence (paired comparisons). Trials run in parallel across processes;
within a trial execution is strictly sequential.
"""
from __future__ import annotations

import concurrent.futures
import dataclasses
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .environment import (
    SETTINGS,
    ProblemInstance,
    feedback,
    is_safe,
    sample_instance,
    trial_rng,
)
from .estimation import ConfidenceParams
from .geometry import HalfSpace, inner_radius
from .policies import (
    ALGORITHMS,
    EliminationError,
    PdPolicy,
    PolicyError,
    RofulPolicy,
    SafePePolicy,
    kappa_form_index,
    make_policy,
)

CONF_TOL = 1e-12
GAMMA_TOL = 1e-9
OPTIMISM_TOL = 1e-9
ELLIPTIC_TOL = 1e-9

ROUNDS_CSV_HEADER = "algo,trial,t,r_t,R_t,violation,gamma,width,dir_index"
AGGREGATE_CSV_HEADER = "algo,t,mean_R,std_R,mean_R_over_sqrt_t"
BUNDLE_SCHEMA = "safebandit-results-v1"


class ConfigError(ValueError):
    """Invalid experiment configuration (unknown key, bad value, bad combo)."""


_SETTING_DEFAULTS = {
    "linear": {"d": 2, "n": 1},
    "convex-ball": {"d": 2, "n": 2},
    "convex-box-star": {"d": 2, "n": 2},
    "finite-star": {"d": 10, "n": 1},
}

_SCALAR_SETTINGS = ("linear", "finite-star")
_STAR_SETTINGS = ("finite-star", "convex-box-star")

# Config file key -> dataclass field. Every field has a key; unknown keys
# are rejected.
_KEY_TO_FIELD = {
    "setting": "setting",
    "d": "d",
    "n": "n",
    "T": "horizon",
    "trials": "trials",
    "master_seed": "master_seed",
    "delta": "delta",
    "lambda": "lam",
    "rho": "rho",
    "grid_size": "grid_size",
    "algos": "algos",
    "log_stride": "log_stride",
    "invariant_checks": "invariant_checks",
    "b": "limit",
    "s_bound": "s_bound",
    "pd_gap": "pd_gap",
    "kappa": "kappa",
}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: a setting, a horizon, algorithms, and shared knobs.

    limit / s_bound override the finite-star defaults (b = 0.5, S = 2), e.g.
    b = 0.9, S = 1.5 for the gap-dependent runs. pd_gap supplies the known
    reward gap to the gap-dependent wrapper (defaults to the instance's true
    grid gap). kappa overrides the fixed exploration multiplier where one
    applies (oplb, lts, the croful cap).
    """

    setting: str
    horizon: int
    trials: int
    d: int = 0  # 0 -> setting default
    n: int = 0
    master_seed: int = 0
    delta: float = 0.01
    lam: float = 1.0
    rho: float = 0.1
    grid_size: int = 0  # 0 -> 720 for d=2, 2048 otherwise
    algos: tuple[str, ...] = ("roful",)
    log_stride: int = 10
    invariant_checks: bool = True
    limit: float | None = None
    s_bound: float | None = None
    pd_gap: float | None = None
    kappa: float | None = None

    def __post_init__(self) -> None:
        if self.setting not in SETTINGS:
            raise ConfigError(f"unknown setting {self.setting!r}; expected one of {SETTINGS}")
        defaults = _SETTING_DEFAULTS[self.setting]
        if self.d == 0:
            object.__setattr__(self, "d", defaults["d"])
        if self.n == 0:
            object.__setattr__(self, "n", defaults["n"])
        if self.grid_size == 0:
            object.__setattr__(self, "grid_size", 720 if self.d == 2 else 2048)
        if isinstance(self.algos, str):
            object.__setattr__(self, "algos", tuple(a.strip() for a in self.algos.split(",") if a.strip()))
        else:
            object.__setattr__(self, "algos", tuple(self.algos))
        if self.horizon < 1:
            raise ConfigError(f"T must be >= 1, got {self.horizon}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must be in (0,1), got {self.delta}")
        if self.lam < 1.0:
            raise ConfigError(f"lambda must be >= 1, got {self.lam}")
        if self.rho < 0.0:
            raise ConfigError(f"rho must be >= 0, got {self.rho}")
        if self.d < 1 or self.n < 1:
            raise ConfigError(f"d and n must be >= 1, got d={self.d}, n={self.n}")
        if self.setting in _SCALAR_SETTINGS and self.n != 1:
            raise ConfigError(f"setting {self.setting!r} has a scalar constraint; n must be 1")
        if self.log_stride < 1:
            raise ConfigError(f"log_stride must be >= 1, got {self.log_stride}")
        if self.grid_size < 2:
            raise ConfigError(f"grid_size must be >= 2, got {self.grid_size}")
        if not self.algos:
            raise ConfigError("algos must name at least one algorithm")
        for algo in self.algos:
            if algo not in ALGORITHMS:
                raise ConfigError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
            if algo == "safe-pe" and self.setting not in _STAR_SETTINGS:
                raise ConfigError("safe-pe requires a finite star-convex action set "
                                  f"(settings {_STAR_SETTINGS}), not {self.setting!r}")
            if algo.startswith("pd-") and self.setting not in _SCALAR_SETTINGS:
                raise ConfigError("pd wrappers require the scalar half-space constraint "
                                  f"(settings {_SCALAR_SETTINGS}), not {self.setting!r}")
        if self.pd_gap is not None and self.pd_gap <= 0.0:
            raise ConfigError(f"pd_gap must be > 0, got {self.pd_gap}")
        if self.limit is not None and self.limit <= 0.0:
            raise ConfigError(f"b must be > 0, got {self.limit}")
        if self.s_bound is not None and self.s_bound <= 0.0:
            raise ConfigError(f"s_bound must be > 0, got {self.s_bound}")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = sorted(set(raw) - set(_KEY_TO_FIELD))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "setting" not in raw:
            raise ConfigError("config must name a setting")
        if "T" not in raw or "trials" not in raw:
            raise ConfigError("config must give T and trials")
        kwargs = {}
        for key, value in raw.items():
            kwargs[_KEY_TO_FIELD[key]] = value
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a flat key-value object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = list(value)
            out[_FIELD_TO_KEY[f.name]] = value
        return out

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TrialSummary:
    """End-of-trial accounting mirrored into the JSON export."""

    algo: str
    trial: int
    rounds: int
    final_regret: float
    violation_count: int
    wrong_direction_count: int
    aborted: bool = False
    abort_reason: str | None = None
    confidence_held: bool | None = None
    conf_break_round: int | None = None
    violations_under_confidence: int | None = None
    gamma_violations: int | None = None
    optimism_violations: int | None = None
    prop1_mismatches: int | None = None
    elliptic_ok: bool | None = None
    elliptic_max_ratio: float | None = None
    safe_pe_retained_optimal: bool | None = None
    safe_pe_monotone_ok: bool | None = None
    safe_pe_phases: int | None = None
    pd_committed_index: int | None = None
    pd_commit_round: int | None = None
    pd_commit_correct: bool | None = None
    pd_b_bar: float | None = None
    instance_limit: float | None = None
    instance_nu: float | None = None
    instance_optimal_value: float | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class TrialResult:
    """Per-round log (at the configured stride, plus the final round)."""

    algo: str
    trial: int
    t: np.ndarray
    inst_regret: np.ndarray
    cum_regret: np.ndarray
    violation: np.ndarray
    gamma: np.ndarray
    width: np.ndarray
    dir_index: np.ndarray
    actions: np.ndarray
    summary: TrialSummary


class TrialMonitor:
    """Ground-truth invariant checks evaluated as the trial runs.

    Tracks the confidence event against the true parameters over the grid
    directions, and conditions every algorithmic check on the round's event:
    the gamma lower bound, optimism of the selected value, exact agreement of
    the restrained and adaptive-kappa selectors, elimination-phase retention
    and monotonicity, and the per-segment elliptic potential bound.
    """

    def __init__(self, inst: ProblemInstance, config: ExperimentConfig, policy) -> None:
        self.inst = inst
        self.config = config
        self.policy = policy
        self.th_true = inst.grid @ inst.theta
        self.c_true = inst.grid @ inst.matrix.T
        self.nu = inst.nu
        if isinstance(inst.target, HalfSpace):
            self.gamma_factor = 2.0 / inst.target.limit
        else:
            self.gamma_factor = 2.0 * math.sqrt(inst.rows) / inner_radius(inst.target)
        self.conf_all = True
        self.conf_break_round: int | None = None
        self.violations_under_conf = 0
        self.gamma_violations = 0
        self.optimism_violations = 0
        self.prop1_mismatches = 0
        self.safe_pe_retained = True
        self.safe_pe_monotone = True
        self._phases_seen = 0
        self._prev_zeta = policy.zeta.copy() if isinstance(policy, SafePePolicy) else None
        self._pd_recorded = False
        self._pd_phi_true: float | None = None
        self.pd_commit_correct: bool | None = None

    def _round_confidence(self, t: int) -> bool:
        policy = self.policy
        if isinstance(policy, SafePePolicy):
            return self.conf_all  # phase-level event, updated in after_update
        if isinstance(policy, PdPolicy) and policy.committed:
            state = policy.commit_state
            if state is None or self._pd_phi_true is None:
                return self.conf_all
            held = abs(state.phi_hat - self._pd_phi_true) <= state.beta_tilde / math.sqrt(state.v_scalar) + CONF_TOL
        else:
            rs = policy.last_round
            if rs is None:
                return self.conf_all
            held = bool(
                np.all(np.abs(rs.th - self.th_true) <= rs.widths + CONF_TOL)
                and np.all(np.abs(rs.c_hat - self.c_true) <= rs.widths[:, None] + CONF_TOL)
            )
        if not held and self.conf_all:
            self.conf_all = False
            self.conf_break_round = t
        return held

    def on_round(self, t: int, choice, safe: bool) -> None:
        held = self._round_confidence(t)
        if not held:
            return
        if not safe:
            self.violations_under_conf += 1
        if math.isfinite(choice.gamma):
            bound = max(1.0 - self.gamma_factor * choice.width, self.nu) - GAMMA_TOL
            if choice.gamma < bound:
                self.gamma_violations += 1
        if math.isfinite(choice.opt_value) and choice.opt_value < self.inst.optimal_value - OPTIMISM_TOL:
            self.optimism_violations += 1
        policy = self.policy
        if isinstance(policy, PdPolicy) and not policy.committed:
            policy = policy.base
        if isinstance(policy, RofulPolicy) and policy.last_round is not None:
            shadow = kappa_form_index(policy.last_round, self.inst.alpha_x, self.inst.target, self.inst.nu)
            if shadow != choice.dir_index:
                self.prop1_mismatches += 1

    def after_update(self, t: int) -> None:
        policy = self.policy
        if isinstance(policy, SafePePolicy):
            while self._phases_seen < len(policy.phase_log):
                rec = policy.phase_log[self._phases_seen]
                self._phases_seen += 1
                beta = policy.beta
                held = bool(np.all(np.abs(self.inst.grid @ rec.theta_hat - self.th_true) <= beta * rec.u_norms + CONF_TOL))
                for r in range(self.inst.rows):
                    held = held and bool(
                        np.all(np.abs(self.inst.grid @ rec.a_hat[r] - self.c_true[:, r]) <= beta * rec.u_norms + CONF_TOL)
                    )
                if not held and self.conf_all:
                    self.conf_all = False
                    self.conf_break_round = t
                if self.conf_all and not rec.active_after[self.inst.optimal_index]:
                    self.safe_pe_retained = False
                if np.any(rec.active_after & ~rec.active_before):
                    self.safe_pe_monotone = False
                if np.any(rec.zeta_after < self._prev_zeta - 1e-12):
                    self.safe_pe_monotone = False
                self._prev_zeta = rec.zeta_after
        elif isinstance(policy, PdPolicy) and policy.committed and not self._pd_recorded:
            self._pd_recorded = True
            self._pd_phi_true = float(self.inst.matrix[0] @ policy.grid_direction(policy.committed_index))
            if self.conf_all:
                self.pd_commit_correct = policy.committed_index == self.inst.optimal_index

    def elliptic_report(self) -> tuple[bool, float]:
        ok = True
        max_ratio = 0.0
        for seg in self.policy.elliptic_segments:
            if seg.length == 0:
                continue
            bound = 2.0 * seg.dim * math.log(1.0 + seg.length / (self.config.lam * seg.dim))
            if bound <= 0.0:
                continue
            max_ratio = max(max_ratio, seg.total / bound)
            if seg.total > bound + ELLIPTIC_TOL:
                ok = False
        return ok, max_ratio


def _sample_for_config(config: ExperimentConfig, rng: np.random.Generator) -> ProblemInstance:
    planar = config.grid_size if config.d == 2 else 720
    sphere = config.grid_size if config.d > 2 else 2048
    return sample_instance(
        config.setting,
        rng,
        d=config.d,
        n=config.n,
        noise_scale=config.rho,
        limit=config.limit,
        s_bound=config.s_bound,
        planar_grid_size=planar,
        sphere_grid_size=sphere,
    )


def run_trial(config: ExperimentConfig, algo: str, trial_index: int) -> TrialResult:
    """Run one seeded trial of one algorithm; deterministic given its arguments."""
    inst = _sample_for_config(config, trial_rng(config.master_seed, trial_index, 0))
    noise_rng = trial_rng(config.master_seed, trial_index, 1)
    policy_rng = trial_rng(config.master_seed, trial_index, 2)
    params = ConfidenceParams(
        rho=config.rho,
        delta=config.delta,
        s_bound=inst.s_bound,
        streams=inst.rows + 1,
        dim=inst.dim,
        lam=config.lam,
    )
    try:
        policy = make_policy(
            algo, inst, params, config.horizon, rng=policy_rng, kappa=config.kappa, pd_gap=config.pd_gap
        )
    except PolicyError as exc:
        raise ConfigError(str(exc)) from exc
    monitor = TrialMonitor(inst, config, policy) if config.invariant_checks else None

    log_t: list[int] = []
    log_r: list[float] = []
    log_R: list[float] = []
    log_v: list[bool] = []
    log_g: list[float] = []
    log_w: list[float] = []
    log_i: list[int] = []
    log_x: list[np.ndarray] = []

    cum = 0.0
    violations = 0
    wrong = 0
    aborted = False
    abort_reason: str | None = None
    rounds_done = 0

    for t in range(1, config.horizon + 1):
        try:
            choice = policy.select()
        except EliminationError as exc:
            aborted = True
            abort_reason = str(exc)
            break
        x = choice.x
        r_t = inst.optimal_value - float(inst.theta @ x)
        cum += r_t
        safe = is_safe(inst, x)
        if not safe:
            violations += 1
        if choice.dir_index != inst.optimal_index:
            wrong += 1
        if monitor is not None:
            monitor.on_round(t, choice, safe)
        if t % config.log_stride == 0 or t == config.horizon:
            log_t.append(t)
            log_r.append(r_t)
            log_R.append(cum)
            log_v.append(not safe)
            log_g.append(choice.gamma)
            log_w.append(choice.width)
            log_i.append(choice.dir_index)
            log_x.append(np.asarray(x, dtype=float))
        y, z = feedback(inst, x, noise_rng)
        rounds_done = t
        try:
            policy.update(x, y, z)
        except EliminationError as exc:
            aborted = True
            abort_reason = str(exc)
            break
        if monitor is not None:
            monitor.after_update(t)

    summary = TrialSummary(
        algo=algo,
        trial=trial_index,
        rounds=rounds_done,
        final_regret=cum,
        violation_count=violations,
        wrong_direction_count=wrong,
        aborted=aborted,
        abort_reason=abort_reason,
        instance_limit=inner_radius(inst.target) if not isinstance(inst.target, HalfSpace) else inst.target.limit,
        instance_nu=inst.nu,
        instance_optimal_value=inst.optimal_value,
    )
    if monitor is not None:
        summary.confidence_held = monitor.conf_all
        summary.conf_break_round = monitor.conf_break_round
        summary.violations_under_confidence = monitor.violations_under_conf
        summary.gamma_violations = monitor.gamma_violations
        summary.optimism_violations = monitor.optimism_violations
        summary.prop1_mismatches = monitor.prop1_mismatches if isinstance(policy, (RofulPolicy, PdPolicy)) else None
        ok, ratio = monitor.elliptic_report()
        summary.elliptic_ok = ok
        summary.elliptic_max_ratio = ratio
        if isinstance(policy, SafePePolicy):
            summary.safe_pe_retained_optimal = monitor.safe_pe_retained
            summary.safe_pe_monotone_ok = monitor.safe_pe_monotone
            summary.safe_pe_phases = len(policy.phase_log)
    if isinstance(policy, PdPolicy):
        summary.pd_committed_index = policy.committed_index
        summary.pd_commit_round = policy.commit_round
        summary.pd_b_bar = policy.b_bar
        if monitor is not None:
            summary.pd_commit_correct = monitor.pd_commit_correct

    return TrialResult(
        algo=algo,
        trial=trial_index,
        t=np.asarray(log_t, dtype=np.int64),
        inst_regret=np.asarray(log_r, dtype=float),
        cum_regret=np.asarray(log_R, dtype=float),
        violation=np.asarray(log_v, dtype=bool),
        gamma=np.asarray(log_g, dtype=float),
        width=np.asarray(log_w, dtype=float),
        dir_index=np.asarray(log_i, dtype=np.int64),
        actions=np.asarray(log_x, dtype=float).reshape(len(log_t), inst.dim),
        summary=summary,
    )


@dataclass
class AlgoAggregate:
    """Across-trial mean/std of cumulative regret at each logged round."""

    algo: str
    t: np.ndarray
    mean_regret: np.ndarray
    std_regret: np.ndarray  # population std (ddof=0)
    mean_regret_over_sqrt_t: np.ndarray
    std_regret_over_sqrt_t: np.ndarray
    n_trials: int


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    trials: dict[str, list[TrialResult]]
    aggregates: dict[str, AlgoAggregate] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.aggregates:
            self.aggregates = {algo: _aggregate(algo, results) for algo, results in self.trials.items()}


def _aggregate(algo: str, results: list[TrialResult]) -> AlgoAggregate:
    complete = [r for r in results if not r.summary.aborted]
    if not complete:
        empty = np.zeros(0)
        return AlgoAggregate(algo, np.zeros(0, dtype=np.int64), empty, empty, empty, empty, 0)
    t = complete[0].t
    stack = np.vstack([r.cum_regret for r in complete])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    sqrt_t = np.sqrt(t.astype(float))
    return AlgoAggregate(
        algo=algo,
        t=t.copy(),
        mean_regret=mean,
        std_regret=std,
        mean_regret_over_sqrt_t=mean / sqrt_t,
        std_regret_over_sqrt_t=std / sqrt_t,
        n_trials=len(complete),
    )


def _run_task(args: tuple[dict, str, int]) -> TrialResult:
    raw, algo, trial = args
    return run_trial(ExperimentConfig.from_dict(raw), algo, trial)


def run_experiment(config: ExperimentConfig, n_workers: int | None = None) -> ExperimentResult:
    """Run trials x algorithms, in parallel across processes.

    Results are merged by (algo, trial) index, so the aggregates are
    independent of completion order. n_workers=1 runs inline.
    """
    tasks = [(algo, trial) for algo in config.algos for trial in range(config.trials)]
    if n_workers is None:
        n_workers = min(len(tasks), os.cpu_count() or 1)
    results: dict[tuple[str, int], TrialResult] = {}
    if n_workers <= 1 or len(tasks) == 1:
        for algo, trial in tasks:
            results[(algo, trial)] = run_trial(config, algo, trial)
    else:
        raw = config.to_dict()
        with concurrent.futures.ProcessPoolExecutor(max_workers=n_workers) as pool:
            for (algo, trial), result in zip(
                tasks, pool.map(_run_task, [(raw, algo, trial) for algo, trial in tasks], chunksize=1)
            ):
                results[(algo, trial)] = result
    trials = {algo: [results[(algo, i)] for i in range(config.trials)] for algo in config.algos}
    return ExperimentResult(config=config, trials=trials)


# ---------------------------------------------------------------------------
# Export: CSV / JSON, bit-exact layout
# ---------------------------------------------------------------------------


def fmt(value: float) -> str:
    """Floats with 17 significant digits (lossless round-trip)."""
    return f"{value:.17g}"


def rounds_csv_text(result: ExperimentResult) -> str:
    lines = [ROUNDS_CSV_HEADER]
    for algo in result.config.algos:
        for tr in result.trials[algo]:
            for j in range(len(tr.t)):
                lines.append(
                    f"{algo},{tr.trial},{tr.t[j]},{fmt(tr.inst_regret[j])},{fmt(tr.cum_regret[j])},"
                    f"{int(tr.violation[j])},{fmt(tr.gamma[j])},{fmt(tr.width[j])},{tr.dir_index[j]}"
                )
    return "\n".join(lines) + "\n"


def aggregate_csv_text(result: ExperimentResult) -> str:
    lines = [AGGREGATE_CSV_HEADER]
    for algo in result.config.algos:
        agg = result.aggregates[algo]
        for j in range(len(agg.t)):
            lines.append(
                f"{algo},{agg.t[j]},{fmt(agg.mean_regret[j])},{fmt(agg.std_regret[j])},"
                f"{fmt(agg.mean_regret_over_sqrt_t[j])}"
            )
    return "\n".join(lines) + "\n"


def summary_json_text(result: ExperimentResult) -> str:
    payload = {
        "config": result.config.to_dict(),
        "summaries": {algo: [tr.summary.to_dict() for tr in result.trials[algo]] for algo in result.config.algos},
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def bundle_dict(result: ExperimentResult) -> dict:
    """Lossless raw-results bundle (JSON-serializable)."""
    algos = {}
    for algo in result.config.algos:
        algos[algo] = [
            {
                "trial": tr.trial,
                "summary": tr.summary.to_dict(),
                "rows": {
                    "t": tr.t.tolist(),
                    "r_t": tr.inst_regret.tolist(),
                    "R_t": tr.cum_regret.tolist(),
                    "violation": tr.violation.astype(int).tolist(),
                    "gamma": tr.gamma.tolist(),
                    "width": tr.width.tolist(),
                    "dir_index": tr.dir_index.tolist(),
                },
            }
            for tr in result.trials[algo]
        ]
    return {"schema": BUNDLE_SCHEMA, "config": result.config.to_dict(), "algos": algos}


def result_from_bundle(raw: dict) -> ExperimentResult:
    """Rebuild an ExperimentResult (without actions) from a bundle."""
    if raw.get("schema") != BUNDLE_SCHEMA:
        raise ConfigError(f"unknown results schema {raw.get('schema')!r}")
    config = ExperimentConfig.from_dict(raw["config"])
    trials: dict[str, list[TrialResult]] = {}
    for algo, entries in raw["algos"].items():
        out = []
        for entry in entries:
            rows = entry["rows"]
            summary_kwargs = dict(entry["summary"])
            summary = TrialSummary(**summary_kwargs)
            t = np.asarray(rows["t"], dtype=np.int64)
            out.append(
                TrialResult(
                    algo=algo,
                    trial=int(entry["trial"]),
                    t=t,
                    inst_regret=np.asarray(rows["r_t"], dtype=float),
                    cum_regret=np.asarray(rows["R_t"], dtype=float),
                    violation=np.asarray(rows["violation"], dtype=bool),
                    gamma=np.asarray(rows["gamma"], dtype=float),
                    width=np.asarray(rows["width"], dtype=float),
                    dir_index=np.asarray(rows["dir_index"], dtype=np.int64),
                    actions=np.zeros((len(t), 0)),
                    summary=summary,
                )
            )
        trials[algo] = out
    return ExperimentResult(config=config, trials=trials)


def export_results(result: ExperimentResult, out_dir: str | Path, fmt_name: str) -> list[Path]:
    """Write the CSV pair or the JSON summary under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt_name == "csv":
        for name, text in (("rounds.csv", rounds_csv_text(result)), ("aggregate.csv", aggregate_csv_text(result))):
            path = out / name
            path.write_text(text, encoding="utf-8")
            written.append(path)
    elif fmt_name == "json":
        path = out / "summary.json"
        path.write_text(summary_json_text(result), encoding="utf-8")
        written.append(path)
    else:
        raise ConfigError(f"unknown export format {fmt_name!r}; expected 'csv' or 'json'")
    return written


def read_rounds_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Parse a rounds CSV back into column arrays (schema-checked)."""
    return _read_csv(path, ROUNDS_CSV_HEADER)


def read_aggregate_csv(path: str | Path) -> dict[str, np.ndarray]:
    return _read_csv(path, AGGREGATE_CSV_HEADER)


def _read_csv(path: str | Path, header: str) -> dict[str, np.ndarray]:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln]
    if not lines or lines[0] != header:
        raise ConfigError(f"{path}: expected header {header!r}")
    names = header.split(",")
    cols: dict[str, list] = {name: [] for name in names}
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(names):
            raise ConfigError(f"{path}: malformed row {ln!r}")
        for name, part in zip(names, parts):
            cols[name].append(part)
    out: dict[str, np.ndarray] = {}
    for name, values in cols.items():
        if name in ("algo",):
            out[name] = np.asarray(values, dtype=object)
        elif name in ("trial", "t", "violation", "dir_index"):
            out[name] = np.asarray([int(v) for v in values], dtype=np.int64)
        else:
            out[name] = np.asarray([float(v) for v in values], dtype=float)
    return out


# ---------------------------------------------------------------------------
# Invariant check mode
# ---------------------------------------------------------------------------


@dataclass
class CheckItem:
    name: str
    passed: bool
    detail: str

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class CheckReport:
    setting: str
    passed: bool
    checks: list[CheckItem]

    def to_dict(self) -> dict:
        return {"setting": self.setting, "passed": self.passed, "checks": [c.to_dict() for c in self.checks]}


def default_check_algos(setting: str) -> tuple[str, ...]:
    algos = ["roful", "croful", "oplb", "lts"]
    if setting in _STAR_SETTINGS:
        algos.append("safe-pe")
    if setting == "finite-star":
        algos.append("pd-roful")
    return tuple(algos)


def check_invariants(
    setting: str,
    horizon: int = 1000,
    trials: int = 2,
    master_seed: int = 0,
    algos: tuple[str, ...] | None = None,
    n_workers: int | None = None,
) -> CheckReport:
    """Short instrumented runs with every invariant asserted (T capped at 2000)."""
    config = ExperimentConfig(
        setting=setting,
        horizon=min(horizon, 2000),
        trials=trials,
        master_seed=master_seed,
        algos=algos or default_check_algos(setting),
        invariant_checks=True,
        log_stride=10,
    )
    result = run_experiment(config, n_workers=n_workers)
    summaries = [tr.summary for algo in config.algos for tr in result.trials[algo]]
    checks = []

    def add(name: str, passed: bool, detail: str) -> None:
        checks.append(CheckItem(name=name, passed=passed, detail=detail))

    aborts = [s for s in summaries if s.aborted]
    add("no_aborts", not aborts, f"{len(aborts)} aborted trials")
    bad_safe = sum(s.violations_under_confidence or 0 for s in summaries)
    add("safety_under_confidence", bad_safe == 0, f"{bad_safe} unsafe rounds under the confidence event")
    bad_gamma = sum(s.gamma_violations or 0 for s in summaries)
    add("gamma_lower_bound", bad_gamma == 0, f"{bad_gamma} rounds below the gamma bound")
    bad_opt = sum(s.optimism_violations or 0 for s in summaries)
    add("optimism", bad_opt == 0, f"{bad_opt} rounds without optimism")
    bad_prop1 = sum(s.prop1_mismatches or 0 for s in summaries)
    add("selector_equivalence", bad_prop1 == 0, f"{bad_prop1} selector index mismatches")
    bad_elliptic = [s for s in summaries if s.elliptic_ok is False]
    add("elliptic_potential", not bad_elliptic, f"{len(bad_elliptic)} trials over the elliptic bound")
    pe = [s for s in summaries if s.safe_pe_retained_optimal is not None]
    if pe:
        add("safe_pe_retention", all(s.safe_pe_retained_optimal for s in pe), "optimal direction retained")
        add("safe_pe_monotone", all(s.safe_pe_monotone_ok for s in pe), "active set and scalings monotone")
    recount = all(
        int(tr.violation.sum()) <= tr.summary.violation_count
        for algo in config.algos
        for tr in result.trials[algo]
    )
    add("violation_accounting", recount, "logged violation flags consistent with totals")
    return CheckReport(setting=setting, passed=all(c.passed for c in checks), checks=checks)
