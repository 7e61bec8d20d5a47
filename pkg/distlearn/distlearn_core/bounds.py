# bounds.py
from __future__ import annotations
import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import config
from .config import debug_sim_event
from .errors import DistLearnError, IdentifiabilityError, SingularModelError
from .problem import SampleGenerationMatrix

LATTICE_CHUNK = 50_000


@dataclass(frozen=True)
class FisherInformation:
    """Fisher information in theta = (p_1, ..., p_{n-1}) for a given pull allocation."""
    matrix: np.ndarray
    pulls: np.ndarray


@dataclass(frozen=True)
class AllocationFraction:
    alpha: np.ndarray
    grid_step: float


def crude_lower_bound(p: Sequence[float] | np.ndarray, t: int) -> float:
    """sum_j p_j (1 - p_j) / t, the error of the empirical estimator on an invertible arm."""
    if t < 1:
        raise DistLearnError("The crude bound needs t >= 1.")
    p = np.asarray(p, dtype=float)
    return float(np.sum(p * (1.0 - p)) / t)


def _derivative_rows(A: SampleGenerationMatrix) -> np.ndarray:
    # dq_h / dtheta_i = A(h, i) - A(h, n)
    M = A.stacked_float
    return M[:, :-1] - M[:, -1:]


def _check_pulls(A: SampleGenerationMatrix, pulls: Sequence[float] | np.ndarray) -> np.ndarray:
    pulls = np.asarray(pulls, dtype=float)
    if pulls.shape != (A.num_arms,):
        raise DistLearnError(f"Expected one pull count per arm ({A.num_arms}), got shape {pulls.shape}.")
    if np.any(pulls < 0) or not np.all(np.isfinite(pulls)):
        raise DistLearnError("Pull counts must be finite and non-negative.")
    return pulls


def fisher_from_output_probabilities(A: SampleGenerationMatrix, q: np.ndarray,
                                     pulls: Sequence[float] | np.ndarray) -> FisherInformation:
    """I = sum_k t_k sum_l (dq_kl/dtheta)(dq_kl/dtheta)^T / q_kl, from any q (true or estimated)."""
    pulls = _check_pulls(A, pulls)
    q = np.asarray(q, dtype=float)
    if q.shape != (A.m,):
        raise DistLearnError(f"Expected {A.m} output probabilities, got shape {q.shape}.")
    if np.any(q <= 0.0):
        raise SingularModelError("Some output has zero probability; the Fisher information is undefined.")
    D = _derivative_rows(A)
    weights = pulls[A.row_arm] / q
    matrix = D.T @ (weights[:, None] * D)
    return FisherInformation(matrix=matrix, pulls=pulls)


def fisher_information(A: SampleGenerationMatrix, p: Sequence[float] | np.ndarray,
                       pulls: Sequence[float] | np.ndarray) -> FisherInformation:
    p = np.asarray(p, dtype=float)
    if p.shape != (A.n,):
        raise DistLearnError(f"Probability vector must have length {A.n}.")
    return fisher_from_output_probabilities(A, A.stacked_float @ p, pulls)


def crlb_error_bound(info: FisherInformation) -> float:
    """tr(I^-1) + sum of all entries of I^-1: the bound on sum_j Var(p_j)."""
    matrix = info.matrix
    with np.errstate(divide="ignore", invalid="ignore"):
        condition = np.linalg.cond(matrix)
    if not np.isfinite(condition) or condition > config.CONDITION_LIMIT:
        raise SingularModelError(f"Fisher information is singular (condition number {condition:.3g}).")
    inverse = np.linalg.inv(matrix)
    return float(np.trace(inverse) + inverse.sum())


def output_variance_weights(A: SampleGenerationMatrix) -> np.ndarray:
    """sum_j A+(j, h)^2 for every stacked output row h."""
    return np.sum(A.pseudoinverse ** 2, axis=0)


def arm_variance_scores(A: SampleGenerationMatrix, q_tilde: np.ndarray) -> np.ndarray:
    """zeta_k = sum_i (sum_j A+(j, s+i)^2) q~_{k,i} (1 - q~_{k,i}) for every arm."""
    q = np.asarray(q_tilde, dtype=float)
    contributions = output_variance_weights(A) * q * (1.0 - q)
    return np.bincount(A.row_arm, weights=contributions, minlength=A.num_arms)


def pi_variance_upper_bound(A: SampleGenerationMatrix, p_tilde: Sequence[float] | np.ndarray,
                            pulls: Sequence[float] | np.ndarray) -> float:
    """U(p~, t) = sum_k zeta_k / t_k, the variance bound of the pseudoinverse estimator.

    ``A`` should be the matrix left after redundant-arm elimination.
    """
    pulls = _check_pulls(A, pulls)
    if np.any(pulls < 1):
        raise DistLearnError("Every arm must be pulled at least once to evaluate the upper bound.")
    q = A.stacked_float @ np.asarray(p_tilde, dtype=float)
    contributions = output_variance_weights(A) * q * (1.0 - q) / pulls[A.row_arm]
    return float(contributions.sum())


def allocation_lattice(num_arms: int, grid_step: float) -> Iterator[np.ndarray]:
    """Chunks of the K-simplex lattice with spacing grid_step, in lexicographic order."""
    divisions = int(round(1.0 / grid_step))
    if num_arms == 1:
        yield np.ones((1, 1))
        return
    # stars and bars: bar positions b_1 < ... < b_{K-1} among divisions + K - 1 slots
    bars_iter = itertools.combinations(range(divisions + num_arms - 1), num_arms - 1)
    while True:
        chunk = list(itertools.islice(bars_iter, LATTICE_CHUNK))
        if not chunk:
            return
        bars = np.array(chunk, dtype=np.int64)
        edges = np.hstack([np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), divisions + num_arms - 1)])
        yield (np.diff(edges, axis=1) - 1) / divisions


def _per_arm_fisher(A: SampleGenerationMatrix, q: np.ndarray) -> np.ndarray:
    """Fisher information of a single pull of each arm, stacked as (K, n-1, n-1)."""
    if np.any(q <= 0.0):
        raise SingularModelError("Some output has zero probability; the Fisher information is undefined.")
    D = _derivative_rows(A)
    blocks = []
    for s in A.arm_slices:
        blocks.append(D[s].T @ (D[s] / q[s][:, None]))
    return np.stack(blocks)


def _batched_bounds(matrices: np.ndarray) -> np.ndarray:
    """tr(I^-1) + sum(I^-1) for a stack of Fisher matrices; inf where a matrix is singular."""
    bounds = np.full(len(matrices), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        condition = np.linalg.cond(matrices)
    valid = np.isfinite(condition) & (condition <= config.CONDITION_LIMIT)
    if np.any(valid):
        inverses = np.linalg.inv(matrices[valid])
        bounds[valid] = np.trace(inverses, axis1=1, axis2=2) + inverses.sum(axis=(1, 2))
    return bounds


def _lattice_bounds(per_arm: np.ndarray, alphas: np.ndarray, t: float) -> np.ndarray:
    return _batched_bounds(np.einsum("pk,kij->pij", alphas * t, per_arm))


def incremented_crlb_bounds(A: SampleGenerationMatrix, q_tilde: np.ndarray,
                            pulls: Sequence[float] | np.ndarray) -> tuple[float, np.ndarray]:
    """B at the current allocation and at t + e_k for every arm k.

    The K + 1 matrices are inverted in one batch. Incremented entries are inf
    where the matrix is singular; a singular current allocation raises
    SingularModelError.
    """
    pulls = _check_pulls(A, pulls)
    q = np.asarray(q_tilde, dtype=float)
    if q.shape != (A.m,):
        raise DistLearnError(f"Expected {A.m} output probabilities, got shape {q.shape}.")
    per_arm = _per_arm_fisher(A, q)
    current = np.einsum("k,kij->ij", pulls, per_arm)
    bounds = _batched_bounds(np.concatenate([current[None], current[None] + per_arm]))
    if not np.isfinite(bounds[0]):
        raise SingularModelError("Fisher information at the current allocation is singular.")
    return float(bounds[0]), bounds[1:]


def crlb_allocation_search(A: SampleGenerationMatrix, p: Sequence[float] | np.ndarray, t: int,
                           grid_step: float = config.DEFAULT_GRID_STEP) -> tuple[AllocationFraction, float]:
    """Minimise the CRLB over allocations alpha * t on the simplex lattice.

    Singular allocations are skipped; ties go to the lexicographically smallest alpha.
    """
    if not 0.0 < grid_step <= 0.5:
        raise DistLearnError("Grid step must lie in (0, 0.5].")
    if A.num_arms > config.MAX_SEARCH_ARMS:
        raise DistLearnError(f"Allocation search supports at most {config.MAX_SEARCH_ARMS} arms, got {A.num_arms}.")
    if A.rank != A.n:
        raise IdentifiabilityError(f"rank(A) = {A.rank} < n = {A.n}; every allocation is singular.")
    p = np.asarray(p, dtype=float)
    per_arm = _per_arm_fisher(A, A.stacked_float @ p)

    best_alpha, best_value = None, np.inf
    for alphas in allocation_lattice(A.num_arms, grid_step):
        bounds = _lattice_bounds(per_arm, alphas, float(t))
        index = int(np.argmin(bounds))
        if bounds[index] < best_value:
            best_alpha, best_value = alphas[index].copy(), float(bounds[index])

    if best_alpha is None:
        raise SingularModelError("Every allocation on the lattice gives a singular Fisher matrix.")
    debug_sim_event("Bounds", "CRLB allocation search", f"alpha={np.round(best_alpha, 4).tolist()} bound={best_value:.6g}")
    return AllocationFraction(alpha=best_alpha, grid_step=grid_step), best_value


def crlb_bound_slices(A: SampleGenerationMatrix, p: Sequence[float] | np.ndarray, t: int,
                      optimum: AllocationFraction) -> dict[int, list[tuple[float, float]]]:
    """Bound as each alpha_k sweeps [0, 1]; the other arms share 1 - alpha_k in the optimum's proportions."""
    p = np.asarray(p, dtype=float)
    per_arm = _per_arm_fisher(A, A.stacked_float @ p)
    divisions = int(round(1.0 / optimum.grid_step))
    grid = np.arange(divisions + 1) / divisions
    slices: dict[int, list[tuple[float, float]]] = {}
    for k in range(A.num_arms):
        others = np.delete(optimum.alpha, k)
        if others.sum() > 0:
            shares = others / others.sum()
        else:
            shares = np.full(len(others), 1.0 / max(len(others), 1))
        alphas = np.zeros((len(grid), A.num_arms))
        alphas[:, k] = grid
        if A.num_arms > 1:
            alphas[:, np.arange(A.num_arms) != k] = np.outer(1.0 - grid, shares)
        bounds = _lattice_bounds(per_arm, alphas, float(t))
        slices[k] = [(float(a), float(b) if np.isfinite(b) else float("nan")) for a, b in zip(grid, bounds)]
    return slices
