# estimators.py
from __future__ import annotations
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from . import config
from .config import debug_sim_event
from .errors import EstimationError, IdentifiabilityError
from .problem import OutputProbabilities, SampleGenerationMatrix


class EstimatorKind(str, Enum):
    PSEUDOINVERSE = "pi"
    MAX_LIKELIHOOD = "mle"


class ObservationCounts:
    """Pull totals t_k and per-output counts t_{k,i}, laid out like the stacked matrix rows."""

    def __init__(self, output_counts: Sequence[int]):
        if not output_counts or any(m < 1 for m in output_counts):
            raise EstimationError("Every arm needs at least one output.")
        offsets = np.cumsum([0] + list(output_counts))
        self.arm_slices: tuple[slice, ...] = tuple(
            slice(int(offsets[k]), int(offsets[k + 1])) for k in range(len(output_counts)))
        self.per_output_counts: np.ndarray = np.zeros(int(offsets[-1]), dtype=np.int64)
        self.per_arm_pulls: np.ndarray = np.zeros(len(output_counts), dtype=np.int64)

    @classmethod
    def for_matrix(cls, A: SampleGenerationMatrix) -> ObservationCounts:
        return cls(A.output_counts)

    @classmethod
    def from_counts(cls, output_counts: Sequence[int], per_output_counts: Sequence[int]) -> ObservationCounts:
        counts = cls(output_counts)
        values = np.asarray(per_output_counts, dtype=np.int64)
        if values.shape != counts.per_output_counts.shape:
            raise EstimationError(f"Expected {counts.per_output_counts.shape[0]} output counts, got {values.shape}.")
        if np.any(values < 0):
            raise EstimationError("Counts must be non-negative.")
        counts.per_output_counts[:] = values
        counts.per_arm_pulls[:] = [values[s].sum() for s in counts.arm_slices]
        return counts

    @property
    def num_arms(self) -> int:
        return len(self.arm_slices)

    @property
    def total_pulls(self) -> int:
        return int(self.per_arm_pulls.sum())

    def block(self, k: int) -> np.ndarray:
        return self.per_output_counts[self.arm_slices[k]]

    def record(self, arm: int, output_row: int) -> None:
        """Count one observation of output ``output_row`` (row within the arm's block)."""
        self.per_arm_pulls[arm] += 1
        self.per_output_counts[self.arm_slices[arm].start + output_row] += 1

    def copy(self) -> ObservationCounts:
        clone = ObservationCounts([s.stop - s.start for s in self.arm_slices])
        clone.per_output_counts[:] = self.per_output_counts
        clone.per_arm_pulls[:] = self.per_arm_pulls
        return clone

    def __repr__(self) -> str:
        return f"ObservationCounts(pulls={self.per_arm_pulls.tolist()}, outputs={self.per_output_counts.tolist()})"


@dataclass(frozen=True)
class DistributionEstimate:
    p_tilde: np.ndarray
    estimator_kind: EstimatorKind
    step: int
    converged: bool = True
    iterations: int = 0


def uniform_estimate(n: int, estimator_kind: EstimatorKind) -> DistributionEstimate:
    return DistributionEstimate(np.full(n, 1.0 / n), estimator_kind, step=0)


def empirical_output_frequencies(counts: ObservationCounts) -> OutputProbabilities:
    if np.any(counts.per_arm_pulls == 0):
        unpulled = [int(k) + 1 for k in np.flatnonzero(counts.per_arm_pulls == 0)]
        raise EstimationError(f"Arms {unpulled} have not been pulled yet; output frequencies are undefined.")
    divisors = np.repeat(counts.per_arm_pulls, [s.stop - s.start for s in counts.arm_slices])
    return OutputProbabilities(counts.per_output_counts / divisors, counts.arm_slices)


def pseudoinverse_estimate(A: SampleGenerationMatrix, q_hat: OutputProbabilities, step: int = 0) -> DistributionEstimate:
    """p~ = A+ q^. Entries may fall outside [0, 1]; they are reported as-is."""
    if A.rank != A.n:
        raise IdentifiabilityError(
            f"rank(A) = {A.rank} < n = {A.n}: the distribution has no unique solution from these arms.")
    if q_hat.q.shape[0] != A.m:
        raise EstimationError(f"Expected {A.m} output probabilities, got {q_hat.q.shape[0]}.")
    return DistributionEstimate(A.pseudoinverse @ q_hat.q, EstimatorKind.PSEUDOINVERSE, step=step)


def smoothed_log_likelihood(A: SampleGenerationMatrix, counts: ObservationCounts, p: np.ndarray) -> float:
    """sum_{k,i} (t_{k,i} + 1) log q~_{k,i}."""
    q = A.stacked_float @ np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return float(np.sum((counts.per_output_counts + 1.0) * np.log(q)))


def _stationarity_gap(p: np.ndarray, score: np.ndarray) -> float:
    # KKT residual: score_j = 1 on the support, score_j <= 1 where p_j sits on the boundary
    held = (p <= config.MLE_ACTIVE_BOUND) & (score <= 1.0)
    return float(np.max(np.where(held, 0.0, np.abs(score - 1.0))))


def _newton_candidate(M: np.ndarray, shares: np.ndarray, p: np.ndarray, q: np.ndarray,
                      score: np.ndarray) -> np.ndarray | None:
    """Constrained Newton step on the coordinates off the boundary.

    Solves the KKT system of the quadratic model with sum(d) = 0, then shortens
    the step so no coordinate drops below the floor. Returns None when the step
    is unusable.
    """
    free = (p > config.MLE_ACTIVE_BOUND) | (score > 1.0)
    k = int(free.sum())
    if k < 2:
        return None
    Mf = M[:, free]
    kkt = np.zeros((k + 1, k + 1))
    kkt[:k, :k] = -(Mf.T @ ((shares / (q * q))[:, None] * Mf))
    kkt[:k, k] = -1.0
    kkt[k, :k] = 1.0
    try:
        direction = np.linalg.solve(kkt, np.append(-score[free], 0.0))[:k]
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(direction)):
        return None

    current = p[free]
    shrinking = direction < 0.0
    length = 1.0
    if np.any(shrinking):
        length = min(1.0, float(np.min((current[shrinking] - config.MLE_FLOOR) / -direction[shrinking])))
    if length <= 0.0:
        return None
    candidate = p.copy()
    candidate[free] = np.maximum(current + length * direction, config.MLE_FLOOR)
    return candidate / candidate.sum()


def mle_estimate(A: SampleGenerationMatrix, counts: ObservationCounts, init: np.ndarray | None = None,
                 tol: float = config.MLE_TOLERANCE, max_iter: int = config.MLE_MAX_ITER,
                 history: list[float] | None = None) -> DistributionEstimate:
    """Maximiser of the smoothed log-likelihood over the simplex.

    Each iteration applies the multiplicative fixed-point update
    p_j <- p_j * sum_h w_h A(h,j) / q_h / sum(w) with w = counts + 1, floored at
    ``config.MLE_FLOOR`` and renormalised. On identifiable problems a
    constrained Newton step is tried as well, and whichever candidate has the
    higher likelihood is kept, so the likelihood never decreases.

    Stops once the last step is below ``tol`` and the stationarity gap
    (|score_j - 1| on the support, excess score on boundary coordinates) is at
    most ``tol``. If ``history`` is given, the log-likelihood
    after every iteration is appended.
    """
    if counts.per_output_counts.shape[0] != A.m:
        raise EstimationError(f"Counts cover {counts.per_output_counts.shape[0]} outputs, matrix has {A.m} rows.")
    if init is None:
        p = np.full(A.n, 1.0 / A.n)
    else:
        p = np.array(init, dtype=float)
        if p.shape != (A.n,) or np.any(p <= 0.0) or not np.all(np.isfinite(p)):
            raise EstimationError("MLE initial point must be strictly inside the simplex.")
        p /= p.sum()

    M = A.stacked_float
    weights = counts.per_output_counts + 1.0
    shares = weights / weights.sum()
    use_newton = A.rank == A.n
    log_likelihood = float(weights @ np.log(M @ p))

    delta = np.inf
    converged = False
    iterations = 0
    while True:
        q = M @ p
        score = M.T @ (shares / q)
        if delta < tol and _stationarity_gap(p, score) <= tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        iterations += 1

        candidate = np.maximum(p * score, config.MLE_FLOOR)
        candidate /= candidate.sum()
        candidate_ll = float(weights @ np.log(M @ candidate))
        if use_newton:
            newton = _newton_candidate(M, shares, p, q, score)
            if newton is not None:
                newton_ll = float(weights @ np.log(M @ newton))
                if newton_ll >= candidate_ll:
                    candidate, candidate_ll = newton, newton_ll

        if config.SIM_DEBUG_MODE and candidate_ll < log_likelihood - 1e-9 * max(1.0, abs(log_likelihood)):
            debug_sim_event("MLE", "Log-likelihood decreased", f"{log_likelihood!r} -> {candidate_ll!r}")
        delta = float(np.max(np.abs(candidate - p)))
        p, log_likelihood = candidate, candidate_ll
        if history is not None:
            history.append(log_likelihood)

    if not converged:
        debug_sim_event("MLE", "Fixed point did not converge", f"{iterations} iterations")

    return DistributionEstimate(p, EstimatorKind.MAX_LIKELIHOOD, step=counts.total_pulls,
                                converged=converged, iterations=iterations)


def estimate(kind: EstimatorKind, A: SampleGenerationMatrix, counts: ObservationCounts,
             previous: DistributionEstimate | None = None) -> DistributionEstimate:
    """Dispatch used by the simulation loop.

    The pseudoinverse path keeps ``previous`` (initially uniform) until every arm
    has been observed once; the likelihood path warm-starts from ``previous``.
    """
    if kind is EstimatorKind.PSEUDOINVERSE:
        if np.any(counts.per_arm_pulls == 0):
            held = previous or uniform_estimate(A.n, kind)
            return DistributionEstimate(held.p_tilde, kind, step=counts.total_pulls)
        return pseudoinverse_estimate(A, empirical_output_frequencies(counts), step=counts.total_pulls)
    init = previous.p_tilde if previous is not None and np.all(previous.p_tilde > 0) else None
    return mle_estimate(A, counts, init=init)
