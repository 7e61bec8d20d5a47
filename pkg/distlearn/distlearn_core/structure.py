# structure.py
from __future__ import annotations
from dataclasses import dataclass, field

import numpy as np

from . import config
from .config import debug_sim_event
from .errors import ProblemSpecError
from .problem import SampleGenerationMatrix


@dataclass(frozen=True)
class StructureReport:
    rank_A: int
    n: int
    redundant_arms: tuple[tuple[int, int], ...]  # (removed arm, witness arm), original 0-based ids
    reduced_matrix: SampleGenerationMatrix
    invertible_arm: int | None = None
    identifiable_combinations: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def identifiable(self) -> bool:
        return self.rank_A == self.n

    @property
    def surviving_arms(self) -> tuple[int, ...]:
        return self.reduced_matrix.arm_ids

    def to_dict(self) -> dict:
        """JSON-friendly view with 1-based arm numbers."""
        return {
            "rank": self.rank_A,
            "alphabet_size": self.n,
            "identifiable": self.identifiable,
            "surviving_arms": [a + 1 for a in self.surviving_arms],
            "redundant_arms": [{"removed": r + 1, "witness": s + 1} for r, s in self.redundant_arms],
            "invertible_arm": None if self.invertible_arm is None else self.invertible_arm + 1,
            "reduced_rank": self.reduced_matrix.rank,
            "identifiable_combinations": np.round(self.identifiable_combinations, 12).tolist(),
        }


def rank_of(A: np.ndarray) -> int:
    """Numerical rank over the reals with a relative singular-value threshold."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return 0
    singular_values = np.linalg.svd(A, compute_uv=False)
    if singular_values[0] == 0.0:
        return 0
    return int(np.sum(singular_values > config.RANK_TOLERANCE * singular_values[0]))


def is_row_space_strict_subset(A_r: np.ndarray, A_s: np.ndarray) -> bool:
    """True iff row(A_r) is a strict subset of row(A_s)."""
    A_r = np.atleast_2d(np.asarray(A_r, dtype=float))
    A_s = np.atleast_2d(np.asarray(A_s, dtype=float))
    if A_r.shape[1] != A_s.shape[1]:
        raise ProblemSpecError(f"Column counts differ: {A_r.shape[1]} vs {A_s.shape[1]}.")
    rank_s = rank_of(A_s)
    return rank_of(np.vstack([A_r, A_s])) == rank_s and rank_of(A_r) < rank_s


def row_space_basis(A: np.ndarray) -> np.ndarray:
    """Reduced row echelon form of A with zero rows dropped.

    Each row is a linear combination of symbol probabilities that the arms
    can estimate consistently (e.g. p2 + p3 when only their sum is observable).
    """
    R = np.array(A, dtype=float)
    rows, cols = R.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        pivot = int(np.argmax(np.abs(R[r:, c]))) + r
        if abs(R[pivot, c]) <= config.RANK_TOLERANCE:
            R[r:, c] = 0.0
            continue
        if pivot != r:
            R[[pivot, r]] = R[[r, pivot]]
        R[r] = R[r] / R[r, c]
        others = np.arange(rows) != r
        R[others] -= np.outer(R[others, c], R[r])
        r += 1
    R[np.abs(R) < config.RANK_TOLERANCE] = 0.0
    return R[:r]


def _is_invertible_block(block: np.ndarray) -> bool:
    # one output per symbol: a permutation matrix, since each column has a single 1
    return block.shape[0] == block.shape[1]


def eliminate_redundant(A: SampleGenerationMatrix, rng: np.random.Generator) -> StructureReport:
    """Pairwise redundant-arm removal.

    Pairs are scanned in ascending (r, s) order; after each removal the scan
    restarts over the surviving arms. When two arms span the same row space
    one of them is dropped uniformly at random using ``rng``.
    """
    if A.num_arms < 1:
        raise ProblemSpecError("At least one arm is required.")

    ranks = [rank_of(block) for block in A.per_arm]
    surviving = list(range(A.num_arms))
    removed: list[tuple[int, int]] = []

    changed = True
    while changed:
        changed = False
        for a_pos, r in enumerate(surviving):
            for s in surviving[a_pos + 1:]:
                rank_b = rank_of(np.vstack([A.per_arm[r], A.per_arm[s]]))
                rank_r, rank_s = ranks[r], ranks[s]
                if rank_b == rank_r and rank_r > rank_s:
                    loser, witness = s, r
                elif rank_b == rank_s and rank_s > rank_r:
                    loser, witness = r, s
                elif rank_b == rank_r == rank_s:
                    loser, witness = (r, s) if rng.random() < 0.5 else (s, r)
                else:
                    continue
                surviving.remove(loser)
                removed.append((A.arm_ids[loser], A.arm_ids[witness]))
                debug_sim_event("Structure", f"Removed redundant arm {A.arm_ids[loser] + 1}",
                                f"witness arm {A.arm_ids[witness] + 1}")
                changed = True
                break
            if changed:
                break

    reduced = A.subset(surviving)
    invertible = next((A.arm_ids[k] for k in surviving if _is_invertible_block(A.per_arm[k])), None)

    return StructureReport(
        rank_A=A.rank,
        n=A.n,
        redundant_arms=tuple(removed),
        reduced_matrix=reduced,
        invertible_arm=invertible,
        identifiable_combinations=row_space_basis(A.stacked),
    )
