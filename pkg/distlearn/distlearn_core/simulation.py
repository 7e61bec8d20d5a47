# simulation.py
from __future__ import annotations
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from rich.progress import track

from . import config
from .bounds import AllocationFraction, crlb_allocation_search, crude_lower_bound
from .config import debug_sim_event
from .environment import Environment
from .errors import DistLearnError, IdentifiabilityError, ProblemSpecError
from .estimators import EstimatorKind, ObservationCounts, estimate, uniform_estimate
from .policies import PolicyKind, PolicyState, choose_arm
from .problem import ProblemSpec, build_matrices
from .structure import StructureReport, eliminate_redundant

POLICY_NAMES = {
    PolicyKind.ROUND_ROBIN: "RRpull",
    PolicyKind.UB_PULL: "UBpull",
    PolicyKind.LB_PULL: "LBpull",
    PolicyKind.FIXED_FRACTION: "Baseline",
}
ESTIMATOR_NAMES = {
    EstimatorKind.PSEUDOINVERSE: "PIest",
    EstimatorKind.MAX_LIKELIHOOD: "MLest",
}


@dataclass(frozen=True)
class RunConfiguration:
    policy: PolicyKind
    estimator: EstimatorKind
    alpha: AllocationFraction | None = None

    @property
    def label(self) -> str:
        return f"{POLICY_NAMES[self.policy]}+{ESTIMATOR_NAMES[self.estimator]}"

    def to_dict(self) -> dict:
        data = {"policy": self.policy.value, "estimator": self.estimator.value, "label": self.label}
        if self.alpha is not None:
            data["alpha"] = self.alpha.alpha.tolist()
        return data


@dataclass(frozen=True)
class TrialTrace:
    squared_errors: np.ndarray  # error after step t is at index t - 1
    arm_choices: np.ndarray  # original arm ids
    final_pulls: np.ndarray  # per original arm, zero for eliminated arms
    final_estimate: np.ndarray
    logged_steps: np.ndarray
    eliminated_arms: tuple[int, ...] = ()
    min_output_probability: float = float("nan")
    nonpositive_outputs: int = 0
    fallback_steps: tuple[int, ...] = ()
    unconverged_fits: int = 0

    def hitting_step(self, target_error: float) -> int | None:
        """First step whose squared error is at or below the target."""
        hits = np.flatnonzero(self.squared_errors <= target_error)
        return int(hits[0]) + 1 if len(hits) else None


def squared_error(p_tilde: Sequence[float] | np.ndarray, p: Sequence[float] | np.ndarray) -> float:
    p_tilde = np.asarray(p_tilde, dtype=float)
    p = np.asarray(p, dtype=float)
    if p_tilde.shape != p.shape:
        raise DistLearnError(f"Length mismatch: {p_tilde.shape} vs {p.shape}.")
    return float(np.sum((p_tilde - p) ** 2))


def log_step_grid(horizon: int, points: int = config.LOG_GRID_POINTS) -> np.ndarray:
    """Roughly log-spaced distinct steps in [1, horizon], always including both ends."""
    if horizon < 1:
        return np.zeros(0, dtype=np.int64)
    grid = np.unique(np.round(np.geomspace(1, horizon, num=max(points, 2))).astype(np.int64))
    return grid


def trial_seed(master_seed: int, trial_index: int) -> int:
    sequence = np.random.SeedSequence(master_seed, spawn_key=(trial_index,))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def run_trial(spec: ProblemSpec, configuration: RunConfiguration, seed: int,
              log_steps: Sequence[int] | np.ndarray | None = None,
              structure: StructureReport | None = None) -> TrialTrace:
    """One seeded run: eliminate redundant arms, then pull, observe and re-estimate T times.

    Pass ``structure`` to reuse an elimination already made for the experiment;
    otherwise equal-row-space ties are broken with this trial's policy stream.
    """
    if spec.true_distribution is None:
        raise ProblemSpecError("Simulating needs a problem with a true distribution.")
    p = spec.true_distribution
    horizon = spec.horizon
    logged = log_step_grid(horizon) if log_steps is None else np.asarray(log_steps, dtype=np.int64)
    logged = logged[(logged >= 1) & (logged <= horizon)]
    logged_set = set(int(s) for s in logged)

    environment_seed, policy_seed = np.random.SeedSequence(seed).spawn(2)
    policy_rng = np.random.default_rng(policy_seed)

    if structure is None:
        structure = eliminate_redundant(build_matrices(spec), policy_rng)
    A = structure.reduced_matrix
    if configuration.estimator is EstimatorKind.PSEUDOINVERSE and A.rank != A.n:
        raise IdentifiabilityError(
            f"rank(A) = {A.rank} < n = {A.n}: the pseudoinverse estimator cannot be used on this problem.")
    if configuration.policy is PolicyKind.FIXED_FRACTION and (
            configuration.alpha is None or len(configuration.alpha.alpha) != A.num_arms):
        raise DistLearnError(f"The fixed-fraction policy needs one alpha entry per surviving arm ({A.num_arms}).")

    env = Environment(spec, np.random.default_rng(environment_seed))
    counts = ObservationCounts.for_matrix(A)
    current = uniform_estimate(A.n, configuration.estimator)
    state = PolicyState(kind=configuration.policy, counts=counts, current_estimate=current,
                        rng=policy_rng, alpha=configuration.alpha)

    errors = np.empty(horizon)
    choices = np.empty(horizon, dtype=np.int64)
    min_q = np.inf
    violations = 0
    unconverged = 0
    track_outputs = configuration.estimator is EstimatorKind.MAX_LIKELIHOOD

    for t in range(1, horizon + 1):
        try:
            position = choose_arm(state, A, t)
            arm = A.arm_ids[position]
            counts.record(position, env.pull(arm))
            current = estimate(configuration.estimator, A, counts, previous=current)
        except DistLearnError as e:
            raise type(e)(f"Step {t}: {e}") from e
        state.current_estimate = current
        unconverged += not current.converged
        choices[t - 1] = arm
        errors[t - 1] = squared_error(current.p_tilde, p)
        if track_outputs and t in logged_set:
            q_tilde = A.stacked_float @ current.p_tilde
            min_q = min(min_q, float(q_tilde.min()))
            violations += int(np.sum(q_tilde <= 0.0))

    final_pulls = np.zeros(spec.num_arms, dtype=np.int64)
    final_pulls[list(A.arm_ids)] = counts.per_arm_pulls

    return TrialTrace(
        squared_errors=errors,
        arm_choices=choices,
        final_pulls=final_pulls,
        final_estimate=np.array(current.p_tilde),
        logged_steps=logged,
        eliminated_arms=tuple(r for r, _ in structure.redundant_arms),
        min_output_probability=float(min_q) if np.isfinite(min_q) else float("nan"),
        nonpositive_outputs=violations,
        fallback_steps=tuple(state.fallback_steps),
        unconverged_fits=unconverged,
    )


@dataclass
class ConfigurationResult:
    label: str
    configuration: RunConfiguration
    trials: int
    mean_errors: np.ndarray  # per step
    error_standard_errors: np.ndarray  # per step
    mean_pulls: np.ndarray
    var_pulls: np.ndarray
    hitting_steps: list[int | None]
    averaged_curve_crossing: int | None
    mean_pulls_at_reference: np.ndarray | None = None
    min_output_probability: float = float("nan")
    nonpositive_outputs: int = 0
    fallback_count: int = 0
    unconverged_fits: int = 0

    @property
    def hit_trials(self) -> int:
        return sum(1 for h in self.hitting_steps if h is not None)

    @property
    def pulls_to_target_mean(self) -> float:
        hits = [h for h in self.hitting_steps if h is not None]
        return float(np.mean(hits)) if hits else float("nan")

    @property
    def pulls_to_target_se(self) -> float:
        hits = [h for h in self.hitting_steps if h is not None]
        if len(hits) < 2:
            return 0.0 if hits else float("nan")
        return float(np.std(hits, ddof=1) / np.sqrt(len(hits)))

    def error_at(self, t: int) -> float:
        return float(self.mean_errors[t - 1])

    def error_se_at(self, t: int) -> float:
        return float(self.error_standard_errors[t - 1])


@dataclass
class ExperimentReport:
    steps: np.ndarray
    results: dict[str, ConfigurationResult]
    bound_curves: dict[str, np.ndarray]
    target_error: float
    crlb_allocation: AllocationFraction | None = None
    surviving_arms: tuple[int, ...] = ()  # original 0-based ids the CRLB allocation is indexed by
    config_echo: dict = field(default_factory=dict)


class _Accumulator:
    """Ordered reduction of trial traces for one configuration."""

    def __init__(self, horizon: int, num_arms: int, reference_step: int | None):
        self.count = 0
        self.error_sum = np.zeros(horizon)
        self.error_sq_sum = np.zeros(horizon)
        self.pulls = []
        self.reference_pulls = []
        self.reference_step = reference_step
        self.num_arms = num_arms
        self.hitting_steps: list[int | None] = []
        self.min_q = np.inf
        self.violations = 0
        self.fallbacks = 0
        self.unconverged = 0

    def add(self, trace: TrialTrace, target_error: float) -> None:
        self.count += 1
        self.error_sum += trace.squared_errors
        self.error_sq_sum += trace.squared_errors ** 2
        self.pulls.append(trace.final_pulls)
        if self.reference_step is not None:
            self.reference_pulls.append(
                np.bincount(trace.arm_choices[:self.reference_step], minlength=self.num_arms))
        self.hitting_steps.append(trace.hitting_step(target_error))
        if np.isfinite(trace.min_output_probability):
            self.min_q = min(self.min_q, trace.min_output_probability)
        self.violations += trace.nonpositive_outputs
        self.fallbacks += len(trace.fallback_steps)
        self.unconverged += trace.unconverged_fits

    def result(self, configuration: RunConfiguration, target_error: float) -> ConfigurationResult:
        mean = self.error_sum / self.count
        if self.count > 1:
            variance = np.maximum(self.error_sq_sum - self.count * mean ** 2, 0.0) / (self.count - 1)
            se = np.sqrt(variance / self.count)
        else:
            se = np.zeros_like(mean)
        crossing = np.flatnonzero(mean <= target_error)
        pulls = np.array(self.pulls, dtype=float)
        return ConfigurationResult(
            label=configuration.label,
            configuration=configuration,
            trials=self.count,
            mean_errors=mean,
            error_standard_errors=se,
            mean_pulls=pulls.mean(axis=0),
            var_pulls=pulls.var(axis=0),
            hitting_steps=self.hitting_steps,
            averaged_curve_crossing=int(crossing[0]) + 1 if len(crossing) else None,
            mean_pulls_at_reference=(np.mean(self.reference_pulls, axis=0) if self.reference_pulls else None),
            min_output_probability=float(self.min_q) if np.isfinite(self.min_q) else float("nan"),
            nonpositive_outputs=self.violations,
            fallback_count=self.fallbacks,
            unconverged_fits=self.unconverged,
        )


def experiment_structure(spec: ProblemSpec) -> StructureReport:
    """Redundant-arm elimination shared by every trial of an experiment, seeded by the master seed."""
    return eliminate_redundant(build_matrices(spec), np.random.default_rng(spec.master_seed))


def bound_curves(spec: ProblemSpec, steps: np.ndarray, grid_step: float = config.DEFAULT_GRID_STEP,
                 structure: StructureReport | None = None,
                 ) -> tuple[dict[str, np.ndarray], AllocationFraction | None, tuple[int, ...]]:
    """Crude bound and minimum-over-allocations CRLB on the step grid.

    The CRLB scales as 1/t for a fixed alpha, so one search at the reference
    horizon gives the minimiser for every step.
    """
    p = spec.true_distribution
    steps = np.asarray(steps, dtype=float)
    crude = np.array([crude_lower_bound(p, int(t)) for t in steps])
    crlb = np.full(len(steps), np.nan)
    allocation = None
    A = (structure or experiment_structure(spec)).reduced_matrix
    if A.rank == A.n and A.num_arms <= config.MAX_SEARCH_ARMS:
        reference = config.CRLB_REFERENCE_PULLS
        allocation, value = crlb_allocation_search(A, p, reference, grid_step)
        crlb = value * reference / steps
    return {"crude_bound": crude, "crlb_bound": crlb}, allocation, A.arm_ids


def run_experiment(spec: ProblemSpec, configurations: Iterable[RunConfiguration], trials: int | None = None,
                   target_error: float = config.DEFAULT_TARGET_ERROR, log_steps: Sequence[int] | None = None,
                   workers: int | None = None, grid_step: float = config.DEFAULT_GRID_STEP,
                   show_progress: bool = False) -> ExperimentReport:
    """Monte Carlo average of ``trials`` seeded runs for each configuration.

    Trial i of every configuration uses the same derived seed, so configurations
    see the same hidden-symbol streams. With more than one worker the trials run
    in a process pool; results are reduced in trial order either way.
    """
    configurations = list(configurations)
    trials = spec.trials if trials is None else trials
    if trials < 1:
        raise DistLearnError("At least one trial is required.")
    if not configurations:
        raise DistLearnError("At least one policy/estimator configuration is required.")
    if spec.true_distribution is None:
        raise ProblemSpecError("Simulating needs a problem with a true distribution.")
    workers = config.SIM_WORKERS if workers is None else max(1, workers)

    steps = log_step_grid(spec.horizon) if log_steps is None else np.asarray(log_steps, dtype=np.int64)
    reference_step = config.CRLB_REFERENCE_PULLS if spec.horizon >= config.CRLB_REFERENCE_PULLS else None
    seeds = [trial_seed(spec.master_seed, i) for i in range(trials)]
    structure = experiment_structure(spec)

    pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    chunksize = max(1, trials // (4 * workers))
    results: dict[str, ConfigurationResult] = {}
    try:
        for configuration in configurations:
            debug_sim_event("Simulation", f"Running {configuration.label}",
                            f"{trials} trials x {spec.horizon} steps, {workers} workers")
            accumulator = _Accumulator(spec.horizon, spec.num_arms, reference_step)
            run_one = partial(run_trial, spec, configuration, log_steps=steps, structure=structure)
            traces = map(run_one, seeds) if pool is None else pool.map(run_one, seeds, chunksize=chunksize)
            if show_progress:
                traces = track(traces, total=trials, description=f"{configuration.label:>16}")
            for trace in traces:
                accumulator.add(trace, target_error)
            results[configuration.label] = accumulator.result(configuration, target_error)
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)

    curves, allocation, surviving = bound_curves(spec, steps, grid_step, structure)
    echo = {
        "problem": spec.to_dict(),
        "configurations": [c.to_dict() for c in configurations],
        "trials": trials,
        "target_error": target_error,
        "grid_step": grid_step,
        "logged_steps": [int(s) for s in steps],
        "eliminated_arms": [r + 1 for r, _ in structure.redundant_arms],
    }
    if allocation is not None:
        echo["crlb_allocation"] = allocation.alpha.tolist()
    return ExperimentReport(steps=steps, results=results, bound_curves=curves, target_error=target_error,
                            crlb_allocation=allocation, surviving_arms=surviving, config_echo=echo)
