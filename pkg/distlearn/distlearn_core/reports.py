# reports.py
from __future__ import annotations
import csv
import json
import math
import os
from typing import Iterable, Sequence

import numpy as np
from rich import print as rprint
from rich.text import Text

from . import config
from .bounds import AllocationFraction
from .simulation import ExperimentReport
from .structure import StructureReport

ERROR_CSV = "error_vs_pulls.csv"
ARM_PULLS_CSV = "arm_pulls.csv"
PULLS_TO_TARGET_CSV = "pulls_to_target.csv"
RESOLVED_CONFIG_JSON = "resolved_config.json"
STRUCTURE_JSON = "structure_report.json"
CRLB_JSON = "crlb_allocation.json"
CRLB_SLICES_CSV = "crlb_slices.csv"


def format_number(value) -> str:
    """Locale-independent text for a CSV cell: integers as-is, floats with 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, config.CSV_FLOAT_FORMAT)


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else format_number(cell) for cell in row])
    return path


def write_json(path: str, data: dict) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=4)
        f.write("\n")
    return path


def write_error_curves(report: ExperimentReport, out_dir: str, file_name: str = ERROR_CSV) -> str:
    labels = list(report.results)
    header = ["step"] + labels + ["crude_bound", "crlb_bound"]
    rows = []
    for i, t in enumerate(report.steps):
        row = [int(t)]
        row += [report.results[label].error_at(int(t)) for label in labels]
        row += [report.bound_curves["crude_bound"][i], report.bound_curves["crlb_bound"][i]]
        rows.append(row)
    return write_csv(os.path.join(out_dir, file_name), header, rows)


def write_arm_pulls(report: ExperimentReport, out_dir: str, file_name: str = ARM_PULLS_CSV) -> str:
    header = ["policy", "arm", "mean_pulls", "var_pulls", "mean_pulls_at_reference", "crlb_allocation_at_reference"]
    rows = []
    for label, result in report.results.items():
        for k in range(len(result.mean_pulls)):
            at_reference = None if result.mean_pulls_at_reference is None else result.mean_pulls_at_reference[k]
            rows.append([label, k + 1, result.mean_pulls[k], result.var_pulls[k], at_reference,
                         _reference_allocation(report, k)])
    return write_csv(os.path.join(out_dir, file_name), header, rows)


def _reference_allocation(report: ExperimentReport, arm: int) -> float | None:
    # the allocation is indexed by surviving arm position
    allocation = report.crlb_allocation
    if allocation is None or arm not in report.surviving_arms:
        return None
    return float(allocation.alpha[report.surviving_arms.index(arm)] * config.CRLB_REFERENCE_PULLS)


def write_pulls_to_target(report: ExperimentReport, out_dir: str, file_name: str = PULLS_TO_TARGET_CSV) -> str:
    header = ["policy", "mean_pulls", "standard_error", "hit_trials", "never_hit", "averaged_curve_crossing"]
    rows = []
    for label, result in report.results.items():
        rows.append([label, result.pulls_to_target_mean, result.pulls_to_target_se, result.hit_trials,
                     result.trials - result.hit_trials, result.averaged_curve_crossing])
    return write_csv(os.path.join(out_dir, file_name), header, rows)


def write_experiment(report: ExperimentReport, out_dir: str, prefix: str = "") -> list[str]:
    """Every simulate output for one problem; ``prefix`` keeps several problems apart in one directory."""
    written = [
        write_error_curves(report, out_dir, prefix + ERROR_CSV),
        write_arm_pulls(report, out_dir, prefix + ARM_PULLS_CSV),
        write_pulls_to_target(report, out_dir, prefix + PULLS_TO_TARGET_CSV),
        write_json(os.path.join(out_dir, prefix + RESOLVED_CONFIG_JSON), report.config_echo),
    ]
    return written


def write_structure_report(report: StructureReport, out_dir: str, extra: dict | None = None) -> str:
    data = dict(extra or {})
    data.update(report.to_dict())
    return write_json(os.path.join(out_dir, STRUCTURE_JSON), data)


def write_crlb_report(allocation: AllocationFraction, bound: float, t: int, arm_ids: Sequence[int],
                      slices: dict[int, list[tuple[float, float]]], out_dir: str) -> list[str]:
    summary = {
        "t": t,
        "grid_step": allocation.grid_step,
        "arms": [a + 1 for a in arm_ids],
        "alpha": [float(a) for a in allocation.alpha],
        "bound": bound,
    }
    rows = []
    for k, points in slices.items():
        for alpha_k, value in points:
            rows.append([arm_ids[k] + 1, alpha_k, value])
    return [
        write_json(os.path.join(out_dir, CRLB_JSON), summary),
        write_csv(os.path.join(out_dir, CRLB_SLICES_CSV), ["arm", "alpha", "bound"], rows),
    ]


def announce_written(paths: Sequence[str]) -> None:
    for path in paths:
        rprint(Text.assemble(Text("WROTE: ", style="bold green"), Text(path, style="cyan")))
