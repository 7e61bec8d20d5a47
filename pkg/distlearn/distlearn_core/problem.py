# problem.py
from __future__ import annotations
import json
import math
import os
from functools import cached_property
from typing import Sequence

import numpy as np
import yaml
from rich import print as rprint
from rich.text import Text

from . import config
from .errors import ProblemSpecError

OutputLabel = str | int | float


class ArmOutputs:
    """The distinct outputs of one arm and the output row each symbol lands on."""

    def __init__(self, arm_index: int, symbol_outputs: Sequence[OutputLabel]):
        if not isinstance(arm_index, int) or arm_index < 0:
            raise ProblemSpecError("Arm index must be a non-negative integer.")
        if not isinstance(symbol_outputs, (list, tuple)) or not symbol_outputs:
            raise ProblemSpecError(f"Arm {arm_index + 1} must map every symbol to an output label.")

        outputs: list[OutputLabel] = []
        rows: dict[tuple[type, OutputLabel], int] = {}
        output_index_of_symbol: list[int] = []
        for j, label in enumerate(symbol_outputs):
            if isinstance(label, (list, tuple, dict, bool)) or label is None:
                raise ProblemSpecError(
                    f"Arm {arm_index + 1}, symbol {j + 1}: output label must be a string or a number, got {label!r}."
                )
            # 1 and 1.0 compare equal but are different labels
            key = (type(label), label)
            if key not in rows:
                rows[key] = len(outputs)
                outputs.append(label)
            output_index_of_symbol.append(rows[key])

        self.arm_index: int = arm_index
        self.symbol_outputs: tuple[OutputLabel, ...] = tuple(symbol_outputs)
        # first-appearance order over the symbols
        self.outputs: tuple[OutputLabel, ...] = tuple(outputs)
        self.output_index_of_symbol: tuple[int, ...] = tuple(output_index_of_symbol)

    @property
    def m(self) -> int:
        return len(self.outputs)

    def __repr__(self) -> str:
        return f"ArmOutputs(arm_index={self.arm_index}, outputs={list(self.outputs)})"


class ProblemSpec:
    """A hidden discrete variable, the arms that observe it, and the experiment settings."""

    def __init__(self, alphabet_size: int, arms: Sequence[Sequence[OutputLabel]],
                 distribution: Sequence[float] | None = None,
                 horizon: int = config.DEFAULT_HORIZON, trials: int = config.DEFAULT_TRIALS,
                 master_seed: int = config.DEFAULT_SEED,
                 name: str | None = None, description: str | None = None):

        if isinstance(alphabet_size, bool) or not isinstance(alphabet_size, int) or alphabet_size < 2:
            raise ProblemSpecError("Alphabet size must be an integer n >= 2.")
        if not isinstance(arms, (list, tuple)) or not arms:
            raise ProblemSpecError("At least one arm must be given.")
        for k, arm in enumerate(arms):
            if not isinstance(arm, (list, tuple)) or len(arm) != alphabet_size:
                raise ProblemSpecError(
                    f"Arm {k + 1} must give an output label for each of the {alphabet_size} symbols."
                )
        for field_name, value, lower in (("horizon", horizon, 0), ("trials", trials, 1)):
            if isinstance(value, bool) or not isinstance(value, int) or value < lower:
                raise ProblemSpecError(f"{field_name.capitalize()} must be an integer >= {lower}.")
        if isinstance(master_seed, bool) or not isinstance(master_seed, int) or not 0 <= master_seed < 2**64:
            raise ProblemSpecError("Seed must be a 64-bit unsigned integer.")
        if name is not None and not isinstance(name, str):
            raise ProblemSpecError("Name must be a string or None.")
        if description is not None and not isinstance(description, str):
            raise ProblemSpecError("Description must be a string or None.")

        self.alphabet_size: int = alphabet_size
        self.arms: tuple[tuple[OutputLabel, ...], ...] = tuple(tuple(arm) for arm in arms)
        self.arm_outputs: tuple[ArmOutputs, ...] = tuple(ArmOutputs(k, arm) for k, arm in enumerate(arms))
        self.horizon: int = horizon
        self.trials: int = trials
        self.master_seed: int = master_seed
        self.name: str | None = name
        self.description: str | None = description

        self._given_distribution: tuple[float, ...] | None = None
        self.true_distribution: np.ndarray | None = None
        if distribution is not None:
            self._given_distribution = tuple(float(p) for p in distribution)
            self.true_distribution = validate_distribution(self._given_distribution, alphabet_size)

    @property
    def num_arms(self) -> int:
        return len(self.arms)

    @property
    def output_counts(self) -> list[int]:
        return [arm.m for arm in self.arm_outputs]

    def with_distribution(self, distribution: Sequence[float], name: str | None = None) -> ProblemSpec:
        """Same arms and settings, different hidden distribution."""
        data = self.to_dict()
        data["distribution"] = list(distribution)
        if name is not None:
            data["name"] = name
        return ProblemSpec.from_dict(data)

    def with_overrides(self, horizon: int | None = None, trials: int | None = None,
                       master_seed: int | None = None) -> ProblemSpec:
        data = self.to_dict()
        if horizon is not None:
            data["horizon"] = horizon
        if trials is not None:
            data["trials"] = trials
        if master_seed is not None:
            data["seed"] = master_seed
        return ProblemSpec.from_dict(data)

    def to_dict(self) -> dict:
        data: dict = {}
        if self.name is not None:
            data["name"] = self.name
        if self.description is not None:
            data["description"] = self.description
        data["alphabet_size"] = self.alphabet_size
        data["arms"] = [list(arm) for arm in self.arms]
        if self._given_distribution is not None:
            data["distribution"] = list(self._given_distribution)
        data["horizon"] = self.horizon
        data["trials"] = self.trials
        data["seed"] = self.master_seed
        return data

    @classmethod
    def from_dict(cls, data: dict) -> ProblemSpec:
        if not isinstance(data, dict):
            raise ProblemSpecError("Problem data must be a dictionary.")

        missing = [key for key in ("alphabet_size", "arms") if key not in data]
        if missing:
            raise ProblemSpecError(f"Problem data must include {', '.join(repr(k) for k in missing)}.")
        unknown = set(data) - {"name", "description", "alphabet_size", "arms", "distribution",
                               "horizon", "trials", "seed"}
        if unknown:
            raise ProblemSpecError(f"Unknown problem keys: {', '.join(sorted(unknown))}.")

        return cls(
            alphabet_size=data["alphabet_size"],
            arms=data["arms"],
            distribution=data.get("distribution"),
            horizon=data.get("horizon", config.DEFAULT_HORIZON),
            trials=data.get("trials", config.DEFAULT_TRIALS),
            master_seed=data.get("seed", config.DEFAULT_SEED),
            name=data.get("name"),
            description=data.get("description"),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ProblemSpec):
            return False
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(json.dumps(self.to_dict(), sort_keys=True))

    def __str__(self) -> str:
        title = self.name or "Unnamed problem"
        return f"Problem: {title}\nSymbols: {self.alphabet_size} | Arms: {self.num_arms} | Outputs per arm: {self.output_counts}"

    def __repr__(self) -> str:
        return (f"ProblemSpec(name={self.name!r}, alphabet_size={self.alphabet_size}, arms={self.arms!r}, "
                f"distribution={self._given_distribution!r}, horizon={self.horizon}, trials={self.trials}, "
                f"master_seed={self.master_seed})")


def validate_distribution(distribution: Sequence[float], alphabet_size: int) -> np.ndarray:
    """Check a probability vector lies on the open simplex; renormalise within tolerance."""
    p = np.asarray(distribution, dtype=float)
    if p.ndim != 1 or p.shape[0] != alphabet_size:
        raise ProblemSpecError(f"Distribution must have exactly {alphabet_size} entries.")
    if not np.all(np.isfinite(p)):
        raise ProblemSpecError("Distribution entries must be finite.")
    if np.any(p <= 0.0):
        raise ProblemSpecError("Every symbol must have strictly positive probability.")
    total = math.fsum(p.tolist())
    if abs(total - 1.0) > config.SIMPLEX_TOLERANCE:
        raise ProblemSpecError(f"Distribution must sum to 1 (got {total!r}).")
    if total != 1.0:
        config.debug_sim_event("Problem", "Renormalised distribution", f"sum={total!r}")
    p = p / total
    p.setflags(write=False)
    return p


def parse_problem_spec(text: str) -> ProblemSpec:
    """Parse a JSON (or YAML) problem document."""
    if not isinstance(text, str) or not text.strip():
        raise ProblemSpecError("Problem document must be a non-empty string.")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ProblemSpecError(f"Malformed problem document: {e}") from e
    return ProblemSpec.from_dict(data)


def serialize_problem_spec(spec: ProblemSpec) -> str:
    return json.dumps(spec.to_dict(), indent=4)


def load_problem_from_path(file_path: str) -> ProblemSpec:
    try:
        with open(file_path, 'r', encoding='utf-8') as f:
            text = f.read()
    except FileNotFoundError:
        rprint(f"[bold red]Error: Problem file '{file_path}' not found.[/bold red]")
        raise
    try:
        return parse_problem_spec(text)
    except ProblemSpecError as ve:
        rprint(f"[bold red]Error loading problem from '{file_path}': {ve}[/bold red]")
        raise ProblemSpecError(f"Failed to load problem from '{file_path}': {ve}") from ve


def load_problem_from_file(problem_name: str, base_directory_path: str) -> ProblemSpec:
    file_path = os.path.join(base_directory_path, f"{problem_name}.json")
    spec = load_problem_from_path(file_path)
    if spec.name is not None and spec.name != problem_name:
        rprint(Text(f"Warning: Problem name in file '{spec.name}' does not match file name '{problem_name}'. "
                    f"Using name from file.", style="bold yellow"))
    return spec


class SampleGenerationMatrix:
    """Per-arm binary matrices A_k (m_k x n) and their row-stacked concatenation A."""

    def __init__(self, per_arm: Sequence[np.ndarray], arm_ids: Sequence[int] | None = None):
        if not per_arm:
            raise ProblemSpecError("A sample generation matrix needs at least one arm.")
        blocks = []
        n = None
        for k, block in enumerate(per_arm):
            block = np.array(block, dtype=np.int8)
            if block.ndim != 2 or block.shape[0] < 1:
                raise ProblemSpecError(f"Arm {k + 1}: matrix must be two-dimensional with at least one row.")
            if n is None:
                n = block.shape[1]
            elif block.shape[1] != n:
                raise ProblemSpecError(f"Arm {k + 1}: expected {n} columns, got {block.shape[1]}.")
            if not np.all((block == 0) | (block == 1)):
                raise ProblemSpecError(f"Arm {k + 1}: matrix must be binary.")
            if not np.all(block.sum(axis=0) == 1):
                raise ProblemSpecError(f"Arm {k + 1}: every symbol must produce exactly one output.")
            block.setflags(write=False)
            blocks.append(block)

        if arm_ids is None:
            arm_ids = range(len(blocks))
        self.per_arm: tuple[np.ndarray, ...] = tuple(blocks)
        self.arm_ids: tuple[int, ...] = tuple(int(a) for a in arm_ids)
        if len(self.arm_ids) != len(self.per_arm):
            raise ProblemSpecError("One arm id is needed per arm block.")

        self.stacked: np.ndarray = np.vstack(blocks)
        self.stacked.setflags(write=False)
        offsets = np.cumsum([0] + [b.shape[0] for b in blocks])
        self.arm_slices: tuple[slice, ...] = tuple(slice(int(offsets[k]), int(offsets[k + 1])) for k in range(len(blocks)))
        self.row_arm: np.ndarray = np.repeat(np.arange(len(blocks)), [b.shape[0] for b in blocks])

    @property
    def n(self) -> int:
        return self.stacked.shape[1]

    @property
    def m(self) -> int:
        return self.stacked.shape[0]

    @property
    def num_arms(self) -> int:
        return len(self.per_arm)

    @property
    def output_counts(self) -> list[int]:
        return [block.shape[0] for block in self.per_arm]

    @cached_property
    def rank(self) -> int:
        from .structure import rank_of
        return rank_of(self.stacked)

    @cached_property
    def stacked_float(self) -> np.ndarray:
        dense = self.stacked.astype(float)
        dense.setflags(write=False)
        return dense

    @cached_property
    def pseudoinverse(self) -> np.ndarray:
        pinv = np.linalg.pinv(self.stacked_float)
        pinv.setflags(write=False)
        return pinv

    def subset(self, positions: Sequence[int]) -> SampleGenerationMatrix:
        """Keep only the arms at the given positions (in the given order)."""
        return SampleGenerationMatrix([self.per_arm[k] for k in positions],
                                      arm_ids=[self.arm_ids[k] for k in positions])

    def __eq__(self, other) -> bool:
        if not isinstance(other, SampleGenerationMatrix):
            return False
        return self.arm_ids == other.arm_ids and len(self.per_arm) == len(other.per_arm) and all(
            np.array_equal(a, b) for a, b in zip(self.per_arm, other.per_arm))

    def __repr__(self) -> str:
        return f"SampleGenerationMatrix(arms={[a + 1 for a in self.arm_ids]}, shape={self.stacked.shape})"


def build_matrices(spec: ProblemSpec) -> SampleGenerationMatrix:
    per_arm = []
    for arm in spec.arm_outputs:
        block = np.zeros((arm.m, spec.alphabet_size), dtype=np.int8)
        block[list(arm.output_index_of_symbol), np.arange(spec.alphabet_size)] = 1
        per_arm.append(block)
    return SampleGenerationMatrix(per_arm)


class OutputProbabilities:
    """Stacked output probabilities q, one block per arm."""

    def __init__(self, q: np.ndarray, arm_slices: Sequence[slice]):
        self.q: np.ndarray = np.asarray(q, dtype=float)
        self.arm_slices: tuple[slice, ...] = tuple(arm_slices)
        if self.arm_slices and self.arm_slices[-1].stop != self.q.shape[0]:
            raise ProblemSpecError("Output probability vector does not match the arm layout.")

    def block(self, k: int) -> np.ndarray:
        return self.q[self.arm_slices[k]]

    def __repr__(self) -> str:
        return f"OutputProbabilities(q={self.q.tolist()})"


def output_probabilities(A: SampleGenerationMatrix, p: Sequence[float] | np.ndarray) -> OutputProbabilities:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.shape[0] != A.n:
        raise ProblemSpecError(f"Probability vector must have length {A.n}, got shape {p.shape}.")
    return OutputProbabilities(A.stacked @ p, A.arm_slices)
