"""Per-buyer bandit learners over the seller-set space.

The zooming learner keeps a growing *active* set of masks; an active mask
a covers mask m when lam * D_h(m, a) <= radius(a), and the radius shrinks
with pulls. Each round it restores cover (one activation suffices because
a fresh arm's radius exceeds the space diameter), then plays the active
arm with the best optimistic value. The flat UCB learner applies the same
index to all 2**k arms with no covering and serves as the baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvariantError, LearnerStateError, MarketError
from ..market import popcount_table


def confidence_radius(pulls: int, horizon: int) -> float:
    """sqrt(12 * ln(horizon) / (pulls + 1)); natural logarithm."""
    if horizon < 2:
        raise MarketError(f"horizon {horizon} must be >= 2")
    return math.sqrt(12.0 * math.log(horizon) / (pulls + 1.0))


@dataclass
class ActiveArm:
    mask: int
    pulls: int
    total: float

    @property
    def mean(self) -> float:
        # never-pulled arms report mean 0; their index is radius-dominated
        return self.total / self.pulls if self.pulls > 0 else 0.0


class ZoomingLearner:
    """Adaptive-activation UCB over k-bit masks under Hamming distance."""

    def __init__(self, k: int, horizon: int, lam: float = 1.0,
                 rng: np.random.Generator | None = None,
                 initial_mask: int | None = None):
        if horizon < 2:
            raise MarketError(f"horizon {horizon} must be >= 2")
        if lam <= 0.0:
            raise MarketError(f"lambda={lam} must be positive")
        self.k = k
        self.num_sets = 1 << k
        self.horizon = horizon
        self.lam = lam
        self._log_horizon = math.log(horizon)
        self._pop = popcount_table(k)
        self.counts = np.zeros(self.num_sets, dtype=np.int64)
        self.sums = np.zeros(self.num_sets, dtype=np.float64)
        self.active = np.zeros(self.num_sets, dtype=bool)
        if initial_mask is None:
            if rng is None:
                raise MarketError("need an rng or an explicit initial mask")
            initial_mask = int(rng.integers(0, self.num_sets))
        if not 0 <= initial_mask < self.num_sets:
            raise MarketError(f"initial mask {initial_mask} out of range")
        self.active[initial_mask] = True
        self.activation_log: list[tuple[int, int]] = [(0, initial_mask)]

    @property
    def num_active(self) -> int:
        return int(self.active.sum())

    def _radii(self, masks: np.ndarray) -> np.ndarray:
        return np.sqrt(12.0 * self._log_horizon / (self.counts[masks] + 1.0))

    def coverage(self) -> np.ndarray:
        """Boolean vector: which masks some active arm currently covers."""
        act = np.flatnonzero(self.active)
        dist = self._pop[np.arange(self.num_sets)[:, np.newaxis] ^ act[np.newaxis, :]] / self.k
        return (self.lam * dist <= self._radii(act)[np.newaxis, :]).any(axis=1)

    def ensure_cover(self, round_index: int = 0) -> int | None:
        """Activate the lowest uncovered mask, if any. Returns it, or None
        when cover already held. A single activation must restore full
        cover; this is asserted."""
        covered = self.coverage()
        if covered.all():
            return None
        mask = int(np.flatnonzero(~covered)[0])
        self.active[mask] = True
        self.activation_log.append((round_index, mask))
        fresh = math.sqrt(12.0 * self._log_horizon)
        if fresh < self.lam:  # fresh radius must cover the whole space
            raise InvariantError(
                f"fresh radius {fresh:.3f} below lambda={self.lam}; "
                "one activation cannot restore cover")
        return mask

    def select(self) -> int:
        """Active arm with the highest mean + 2 * radius (smallest mask on
        ties). Call after ensure_cover."""
        act = np.flatnonzero(self.active)
        counts = self.counts[act]
        means = np.where(counts > 0, self.sums[act] / np.maximum(counts, 1), 0.0)
        ucb = means + 2.0 * self._radii(act)
        return int(act[int(np.argmax(ucb))])

    def update(self, mask: int, value: float) -> None:
        if not self.active[mask]:
            raise LearnerStateError(f"mask {mask} is not active")
        self.counts[mask] += 1
        self.sums[mask] += value

    def active_arms(self) -> list[ActiveArm]:
        return [ActiveArm(int(m), int(self.counts[m]), float(self.sums[m]))
                for m in np.flatnonzero(self.active)]


class FlatUCBLearner:
    """Plain UCB over all 2**k masks with the same radius and index."""

    def __init__(self, k: int, horizon: int):
        if horizon < 2:
            raise MarketError(f"horizon {horizon} must be >= 2")
        self.k = k
        self.num_sets = 1 << k
        self.horizon = horizon
        self._log_horizon = math.log(horizon)
        self.counts = np.zeros(self.num_sets, dtype=np.int64)
        self.sums = np.zeros(self.num_sets, dtype=np.float64)

    @property
    def num_active(self) -> int:
        return self.num_sets

    def select(self) -> int:
        radii = np.sqrt(12.0 * self._log_horizon / (self.counts + 1.0))
        means = np.where(self.counts > 0, self.sums / np.maximum(self.counts, 1), 0.0)
        return int(np.argmax(means + 2.0 * radii))

    def update(self, mask: int, value: float) -> None:
        self.counts[mask] += 1
        self.sums[mask] += value

    def active_arms(self) -> list[ActiveArm]:
        return [ActiveArm(m, int(self.counts[m]), float(self.sums[m]))
                for m in range(self.num_sets)]
