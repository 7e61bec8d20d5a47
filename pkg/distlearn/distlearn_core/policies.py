# policies.py
from __future__ import annotations
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import config
from .bounds import AllocationFraction, arm_variance_scores, incremented_crlb_bounds
from .config import debug_sim_event
from .errors import PolicyError, SingularModelError
from .estimators import DistributionEstimate, ObservationCounts
from .problem import SampleGenerationMatrix


class PolicyKind(str, Enum):
    ROUND_ROBIN = "rr"
    UB_PULL = "ub"
    LB_PULL = "lb"
    FIXED_FRACTION = "fixed"


@dataclass
class PolicyState:
    """Everything a policy needs to pick the next arm.

    Arm indices are zero-based positions among the surviving arms.
    """
    kind: PolicyKind
    counts: ObservationCounts
    current_estimate: DistributionEstimate
    rng: np.random.Generator
    alpha: AllocationFraction | None = None
    fallback_steps: list[int] = field(default_factory=list)


def _argmax_with_ties(scores: np.ndarray, rng: np.random.Generator) -> int:
    best = float(np.max(scores))
    tolerance = config.TIE_RTOL * max(abs(best), np.finfo(float).tiny)
    ties = np.flatnonzero(scores >= best - tolerance)
    if len(ties) == 1:
        return int(ties[0])
    return int(rng.choice(ties))


def _lowest_unpulled(counts: ObservationCounts) -> int | None:
    unpulled = np.flatnonzero(counts.per_arm_pulls == 0)
    return int(unpulled[0]) if len(unpulled) else None


def next_arm_round_robin(t: int, K: int) -> int:
    """Position of arm (t mod K) + 1, i.e. ``t % K`` zero-based."""
    if K < 1 or t < 1:
        raise PolicyError("Round robin needs K >= 1 and t >= 1.")
    return t % K


def ubpull_gains(state: PolicyState, A: SampleGenerationMatrix) -> np.ndarray:
    """zeta_k (1/t_k - 1/(t_k + 1)): the drop in U from one more pull of arm k."""
    q_tilde = A.stacked_float @ state.current_estimate.p_tilde
    zeta = arm_variance_scores(A, q_tilde)
    pulls = state.counts.per_arm_pulls.astype(float)
    return zeta * (1.0 / pulls - 1.0 / (pulls + 1.0))


def next_arm_ubpull(state: PolicyState, A: SampleGenerationMatrix) -> int:
    unpulled = _lowest_unpulled(state.counts)
    if unpulled is not None:
        return unpulled
    return _argmax_with_ties(ubpull_gains(state, A), state.rng)


def lbpull_gains(state: PolicyState, A: SampleGenerationMatrix) -> np.ndarray:
    """B(p~, t) - B(p~, t + e_k) for every arm; -inf where the incremented allocation is singular.

    Raises SingularModelError when B(p~, t) itself cannot be evaluated.
    """
    q_tilde = A.stacked_float @ state.current_estimate.p_tilde
    current, incremented = incremented_crlb_bounds(A, q_tilde, state.counts.per_arm_pulls)
    return current - incremented


def next_arm_lbpull(state: PolicyState, A: SampleGenerationMatrix) -> int:
    if A.num_arms == 1:
        return 0
    unpulled = _lowest_unpulled(state.counts)
    if unpulled is not None:
        return unpulled
    try:
        gains = lbpull_gains(state, A)
    except SingularModelError as e:
        gains = None
        reason = str(e)
    else:
        reason = "no incremented allocation is invertible"
    if gains is None or not np.any(np.isfinite(gains)):
        step = state.counts.total_pulls + 1
        state.fallback_steps.append(step)
        debug_sim_event("LBpull", f"Round-robin fallback at step {step}", reason)
        return next_arm_round_robin(step, A.num_arms)
    return _argmax_with_ties(gains, state.rng)


def next_arm_fixed_fraction(state: PolicyState) -> int:
    if state.alpha is None:
        raise PolicyError("The fixed-fraction policy needs an allocation fraction alpha.")
    alpha = np.clip(np.asarray(state.alpha.alpha, dtype=float), 0.0, None)
    if alpha.shape != (state.counts.num_arms,):
        raise PolicyError(f"Alpha has {alpha.shape[0]} entries but there are {state.counts.num_arms} arms.")
    return int(state.rng.choice(len(alpha), p=alpha / alpha.sum()))


def choose_arm(state: PolicyState, A: SampleGenerationMatrix, t: int) -> int:
    """Arm (zero-based position) to pull at step t."""
    if state.kind is PolicyKind.ROUND_ROBIN:
        return next_arm_round_robin(t, A.num_arms)
    if state.kind is PolicyKind.UB_PULL:
        return next_arm_ubpull(state, A)
    if state.kind is PolicyKind.LB_PULL:
        return next_arm_lbpull(state, A)
    if state.kind is PolicyKind.FIXED_FRACTION:
        return next_arm_fixed_fraction(state)
    raise PolicyError(f"Unknown policy kind: {state.kind!r}")
