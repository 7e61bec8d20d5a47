# commands.py
from __future__ import annotations
import os
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from rich import print as rprint
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from rich.text import Text

from . import config
from .bounds import AllocationFraction, crlb_allocation_search, crlb_bound_slices
from .errors import DistLearnError, IdentifiabilityError, ProblemSpecError
from .estimators import EstimatorKind
from .policies import PolicyKind
from .problem import ProblemSpec, load_problem_from_file, load_problem_from_path
from .reports import (
    announce_written,
    format_number,
    write_crlb_report,
    write_csv,
    write_experiment,
    write_structure_report,
)
from .simulation import ExperimentReport, RunConfiguration, experiment_structure, run_experiment
from .structure import StructureReport

console = Console()

PROBLEMS_DIR_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data", "problems")

REPRODUCE_PROBLEMS = ("example_one", "seven_symbol", "seven_symbol_shifted")
BASELINE_TUNING_PROBLEM = "seven_symbol"
REPRODUCE_CONFIGURATIONS = (
    RunConfiguration(PolicyKind.LB_PULL, EstimatorKind.MAX_LIKELIHOOD),
    RunConfiguration(PolicyKind.UB_PULL, EstimatorKind.MAX_LIKELIHOOD),
    RunConfiguration(PolicyKind.ROUND_ROBIN, EstimatorKind.MAX_LIKELIHOOD),
    RunConfiguration(PolicyKind.ROUND_ROBIN, EstimatorKind.PSEUDOINVERSE),
)


class CliConfig(BaseModel):
    """Resolved command-line options; overrides left as None fall back to the problem file."""
    model_config = ConfigDict(frozen=True)

    subcommand: Literal["analyze", "simulate", "crlb", "reproduce"]
    spec_path: str | None = None
    output_dir: str = "results"
    horizon: int | None = Field(default=None, ge=0)
    trials: int | None = Field(default=None, ge=1)
    seed: int | None = Field(default=None, ge=0, lt=2**64)
    policies: list[PolicyKind] = Field(default_factory=lambda: [PolicyKind.ROUND_ROBIN])
    estimators: list[EstimatorKind] = Field(default_factory=lambda: [EstimatorKind.PSEUDOINVERSE])
    alpha: list[float] | None = None
    target_error: float = Field(default=config.DEFAULT_TARGET_ERROR, gt=0)
    grid_step: float = Field(default=config.DEFAULT_GRID_STEP, gt=0, le=0.5)
    workers: int | None = Field(default=None, ge=1)

    @field_validator("policies", "estimators", "alpha", mode="before")
    @classmethod
    def split_comma_list(cls, value):
        if isinstance(value, str):
            return [item.strip().lower() for item in value.split(",") if item.strip()]
        return value

    @field_validator("policies", "estimators")
    @classmethod
    def non_empty(cls, value):
        if not value:
            raise ValueError("at least one entry is required")
        return value


def resolve_spec(spec_path: str | None) -> ProblemSpec:
    """Load a problem from a file path, or by name from the bundled problems."""
    if not spec_path:
        raise ProblemSpecError("A problem file is required (--spec PATH).")
    if os.path.exists(spec_path):
        return load_problem_from_path(spec_path)
    bundled = os.path.join(PROBLEMS_DIR_PATH, f"{spec_path}.json")
    if os.path.exists(bundled):
        return load_problem_from_file(spec_path, PROBLEMS_DIR_PATH)
    raise ProblemSpecError(f"Problem file '{spec_path}' not found.")


def _with_overrides(spec: ProblemSpec, cli_config: CliConfig) -> ProblemSpec:
    return spec.with_overrides(horizon=cli_config.horizon, trials=cli_config.trials, master_seed=cli_config.seed)


def analyze_structure(spec: ProblemSpec) -> StructureReport:
    return experiment_structure(spec)


def pair_configurations(policies: list[PolicyKind], estimators: list[EstimatorKind],
                        alpha: AllocationFraction | None = None) -> list[RunConfiguration]:
    """Pair policies and estimators positionally; a single entry on either side is broadcast."""
    if len(policies) == len(estimators):
        pairs = list(zip(policies, estimators))
    elif len(estimators) == 1:
        pairs = [(policy, estimators[0]) for policy in policies]
    elif len(policies) == 1:
        pairs = [(policies[0], estimator) for estimator in estimators]
    else:
        raise DistLearnError(
            f"Cannot pair {len(policies)} policies with {len(estimators)} estimators; "
            f"give equal-length lists or a single entry on one side.")
    configurations = []
    for policy, estimator in pairs:
        configuration = RunConfiguration(policy, estimator,
                                         alpha if policy is PolicyKind.FIXED_FRACTION else None)
        if configuration not in configurations:
            configurations.append(configuration)
    return configurations


def tune_baseline(spec: ProblemSpec, grid_step: float) -> AllocationFraction:
    """CRLB-optimal allocation at the reference horizon, used by the fixed-fraction policy."""
    A = analyze_structure(spec).reduced_matrix
    allocation, _ = crlb_allocation_search(A, spec.true_distribution, config.CRLB_REFERENCE_PULLS, grid_step)
    return allocation


def _require_identifiable_for_pi(spec: ProblemSpec, configurations: list[RunConfiguration]) -> None:
    if any(c.estimator is EstimatorKind.PSEUDOINVERSE for c in configurations):
        structure = analyze_structure(spec)
        if not structure.identifiable:
            raise IdentifiabilityError(
                f"rank(A) = {structure.rank_A} < n = {structure.n}: the pseudoinverse estimator needs an "
                f"identifiable problem.")


def render_structure(spec: ProblemSpec, report: StructureReport) -> None:
    content = Text()
    content.append("Rank: ", style="bold bright_blue")
    content.append(f"{report.rank_A} / n = {report.n}\n", style="white")
    content.append("Identifiable: ", style="bold bright_blue")
    content.append(f"{'yes' if report.identifiable else 'no'}\n",
                   style="bright_green" if report.identifiable else "bright_red")
    content.append("Surviving arms: ", style="bold bright_blue")
    content.append(f"{[a + 1 for a in report.surviving_arms]}\n", style="white")
    for removed, witness in report.redundant_arms:
        content.append(f"  • arm {removed + 1} removed (row space inside arm {witness + 1})\n", style="dim")
    if report.invertible_arm is not None:
        content.append("Invertible arm: ", style="bold bright_blue")
        content.append(f"{report.invertible_arm + 1}\n", style="white")
    if not report.identifiable:
        content.append("Learnable combinations:\n", style="bold bright_yellow")
        for row in report.identifiable_combinations:
            terms = [f"{'' if abs(c - 1) < 1e-12 else format(c, '.6g') + '·'}p{j + 1}"
                     for j, c in enumerate(row) if abs(c) > 1e-12]
            content.append(f"  {' + '.join(terms)}\n", style="dim yellow")
    console.print(Panel(content, title=spec.name or "Structure", border_style="bright_blue", expand=False))


def render_experiment(title: str, report: ExperimentReport) -> None:
    reference = min(config.CRLB_REFERENCE_PULLS, len(next(iter(report.results.values())).mean_errors))
    table = Table(title=title, show_lines=False)
    table.add_column("Configuration", style="bold")
    table.add_column(f"Pulls to {report.target_error:g}", justify="right")
    table.add_column("SE", justify="right")
    table.add_column("Never hit", justify="right")
    table.add_column(f"Error at t={reference}", justify="right")
    for label, result in report.results.items():
        table.add_row(
            label,
            f"{result.pulls_to_target_mean:.1f}",
            f"{result.pulls_to_target_se:.1f}",
            str(result.trials - result.hit_trials),
            f"{result.error_at(reference):.3e}" if reference >= 1 else "-",
        )
        if result.fallback_count:
            rprint(Text(f"Warning: {label} fell back to round robin {result.fallback_count} times "
                        f"(singular Fisher information).", style="bold yellow"))
        if result.unconverged_fits:
            rprint(Text(f"Warning: {label} had {result.unconverged_fits} maximum-likelihood fits "
                        f"stop at the iteration cap.", style="bold yellow"))
    console.print(table)


def cmd_analyze(cli_config: CliConfig) -> list[str]:
    spec = _with_overrides(resolve_spec(cli_config.spec_path), cli_config)
    report = analyze_structure(spec)
    render_structure(spec, report)
    extra = {"name": spec.name} if spec.name else {}
    written = [write_structure_report(report, cli_config.output_dir, extra)]
    announce_written(written)
    return written


def cmd_simulate(cli_config: CliConfig) -> list[str]:
    spec = _with_overrides(resolve_spec(cli_config.spec_path), cli_config)
    if spec.true_distribution is None:
        raise ProblemSpecError("Simulating needs a problem with a 'distribution'.")

    alpha = None
    if PolicyKind.FIXED_FRACTION in cli_config.policies:
        if cli_config.alpha is not None:
            alpha = AllocationFraction(np.asarray(cli_config.alpha, dtype=float), cli_config.grid_step)
        else:
            alpha = tune_baseline(spec, cli_config.grid_step)
            rprint(Text.assemble(Text("EVENT: ", style="bold magenta"),
                                 Text(f"Baseline allocation tuned by CRLB search: {np.round(alpha.alpha, 4).tolist()}")))
    configurations = pair_configurations(cli_config.policies, cli_config.estimators, alpha)
    _require_identifiable_for_pi(spec, configurations)

    report = run_experiment(spec, configurations, target_error=cli_config.target_error,
                            workers=cli_config.workers, grid_step=cli_config.grid_step, show_progress=True)
    render_experiment(spec.name or "Simulation", report)
    written = write_experiment(report, cli_config.output_dir)
    announce_written(written)
    return written


def cmd_crlb(cli_config: CliConfig) -> list[str]:
    spec = resolve_spec(cli_config.spec_path)
    if spec.true_distribution is None:
        raise ProblemSpecError("The CRLB search needs a problem with a 'distribution'.")
    t = cli_config.horizon if cli_config.horizon else config.CRLB_REFERENCE_PULLS
    A = analyze_structure(spec).reduced_matrix
    allocation, bound = crlb_allocation_search(A, spec.true_distribution, t, cli_config.grid_step)
    slices = crlb_bound_slices(A, spec.true_distribution, t, allocation)

    table = Table(title=f"CRLB allocation at t={t}")
    table.add_column("Arm", justify="right")
    table.add_column("alpha", justify="right")
    table.add_column("pulls", justify="right")
    for arm_id, a in zip(A.arm_ids, allocation.alpha):
        table.add_row(str(arm_id + 1), f"{a:.4f}", f"{a * t:.1f}")
    console.print(table)
    rprint(Text.assemble(Text("Bound: ", style="bold bright_blue"), Text(format_number(bound))))

    written = write_crlb_report(allocation, bound, t, A.arm_ids, slices, cli_config.output_dir)
    announce_written(written)
    return written


def _excess_rows(problem: str, report: ExperimentReport, baseline_label: str) -> list[list]:
    reference = min(config.CRLB_REFERENCE_PULLS, len(report.results[baseline_label].mean_errors))
    baseline_error = report.results[baseline_label].error_at(reference)
    rows = []
    for label in ("UBpull+MLest", "LBpull+MLest"):
        if label not in report.results:
            continue
        policy_error = report.results[label].error_at(reference)
        excess = 100.0 * (baseline_error - policy_error) / policy_error if policy_error > 0 else float("nan")
        rows.append([problem, label, reference, baseline_error, policy_error, excess])
    return rows


def cmd_reproduce(cli_config: CliConfig) -> list[str]:
    """Run the bundled experiment protocol and write every CSV plus the summary tables."""
    problems = {name: _with_overrides(load_problem_from_file(name, PROBLEMS_DIR_PATH), cli_config)
                for name in REPRODUCE_PROBLEMS}
    baseline = tune_baseline(problems[BASELINE_TUNING_PROBLEM], cli_config.grid_step)
    rprint(Text.assemble(Text("EVENT: ", style="bold magenta"),
                         Text(f"Baseline tuned on '{BASELINE_TUNING_PROBLEM}': {np.round(baseline.alpha, 4).tolist()}")))
    baseline_configuration = RunConfiguration(PolicyKind.FIXED_FRACTION, EstimatorKind.MAX_LIKELIHOOD, baseline)

    written: list[str] = []
    summary_rows: list[list] = []
    excess_rows: list[list] = []
    for name, spec in problems.items():
        configurations = list(REPRODUCE_CONFIGURATIONS)
        if name.startswith("seven_symbol"):
            configurations.append(baseline_configuration)
        rprint(Text.assemble(Text("EVENT: ", style="bold magenta"),
                             Text(f"Running '{name}' ({spec.trials} trials, horizon {spec.horizon})")))
        report = run_experiment(spec, configurations, target_error=cli_config.target_error,
                                workers=cli_config.workers, grid_step=cli_config.grid_step, show_progress=True)
        render_experiment(spec.name or name, report)
        written += write_experiment(report, cli_config.output_dir, prefix=f"{name}_")

        for label, result in report.results.items():
            summary_rows.append([name, label, result.pulls_to_target_mean, result.pulls_to_target_se,
                                 result.trials - result.hit_trials, result.averaged_curve_crossing,
                                 result.min_output_probability, result.nonpositive_outputs, result.unconverged_fits])
        if baseline_configuration.label in report.results and spec.horizon >= 1:
            excess_rows += _excess_rows(name, report, baseline_configuration.label)

    written.append(write_csv(
        os.path.join(cli_config.output_dir, "summary.csv"),
        ["problem", "policy", "mean_pulls", "standard_error", "never_hit", "averaged_curve_crossing",
         "min_output_probability", "nonpositive_outputs", "unconverged_fits"],
        summary_rows))
    written.append(write_csv(
        os.path.join(cli_config.output_dir, "baseline_excess.csv"),
        ["problem", "policy", "t", "baseline_error", "policy_error", "excess_percent"],
        excess_rows))

    for problem, label, t, _, _, excess in excess_rows:
        rprint(Text.assemble(Text("Baseline vs ", style="bold"), Text(label, style="cyan"),
                             Text(f" on {problem} at t={t}: "), Text(f"{excess:+.1f}%", style="bold yellow")))
    announce_written(written)
    return written
