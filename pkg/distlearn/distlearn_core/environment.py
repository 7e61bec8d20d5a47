# environment.py
from __future__ import annotations

import numpy as np

from .errors import ProblemSpecError
from .problem import OutputLabel, ProblemSpec


class Environment:
    """Draws i.i.d. hidden symbols and reveals them only through the chosen arm."""

    def __init__(self, spec: ProblemSpec, rng: np.random.Generator):
        if not isinstance(spec, ProblemSpec):
            raise ProblemSpecError("Environment must be initialized with a ProblemSpec.")
        if spec.true_distribution is None:
            raise ProblemSpecError("Simulating needs a problem with a true distribution.")

        self.true_distribution: np.ndarray = spec.true_distribution
        self.arm_outputs = spec.arm_outputs
        self.rng: np.random.Generator = rng
        self._cdf = np.cumsum(self.true_distribution)
        self._cdf[-1] = 1.0
        self._rows = np.array([arm.output_index_of_symbol for arm in spec.arm_outputs], dtype=np.int64)
        self.last_symbol: int | None = None

    def draw_symbol(self) -> int:
        # one uniform per step, whichever arm is pulled
        u = self.rng.random()
        symbol = int(np.searchsorted(self._cdf, u, side="right"))
        self.last_symbol = min(symbol, len(self._cdf) - 1)
        return self.last_symbol

    def pull(self, arm: int) -> int:
        """Output row of ``arm`` (original arm id) for a fresh symbol."""
        return int(self._rows[arm, self.draw_symbol()])

    def __repr__(self) -> str:
        return f"Environment(distribution={self.true_distribution.tolist()}, arms={len(self.arm_outputs)})"


def step(env: Environment, arm: int) -> OutputLabel:
    """Pull ``arm`` once and return the observed output label."""
    row = env.pull(arm)
    return env.arm_outputs[arm].outputs[row]
