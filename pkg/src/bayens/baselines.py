"""Competing weight-estimation schemes over the same pool and base losses.

All three gradient schemes descend the per-step gradient ``theta * g - 1/w``
of the weighted-loss-with-log-barrier objective.  The barrier makes weights
below zero undefined, so every update projects back to a small positive
floor.

* SGD: step ``gamma / (t + step_offset)``; the iterate itself predicts.
  ``step_offset`` (default 0, the classic schedule) damps the first steps
  when the gain ``gamma`` is large; it leaves the asymptotics unchanged.
* Averaged SGD: same iterate, but predictions use the running average of all
  post-update iterates.
* SAG: keeps one stored gradient per stream position over a known horizon
  and steps along the running gradient sum scaled by ``step_size / horizon``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class SgdState:
    m: int
    gamma: float = 1.0
    theta: float = 0.1
    initial_weight: float = 1.0
    weight_floor: float = 1e-6
    step_offset: int = 0
    t: int = 1
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if min(self.gamma, self.theta, self.initial_weight, self.weight_floor) <= 0:
            raise ValueError("gamma, theta, initial_weight, weight_floor must be positive")
        if self.weights is None:
            self.weights = np.full(self.m, self.initial_weight, dtype=np.float64)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64).copy()

    def gradient(self, g) -> np.ndarray:
        return self.theta * np.asarray(g, dtype=np.float64) - 1.0 / self.weights

    def step(self, g) -> None:
        step_size = self.gamma / (self.t + self.step_offset)
        self.weights = np.maximum(
            self.weights - step_size * self.gradient(g), self.weight_floor
        )
        self.t += 1


@dataclass
class PolyakState:
    """SGD plus the running average of post-update iterates (used to predict)."""

    sgd: SgdState
    updates: int = 0
    average: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.average is None:
            self.average = self.sgd.weights.copy()
        else:
            self.average = np.asarray(self.average, dtype=np.float64).copy()

    @property
    def weights(self) -> np.ndarray:
        return self.average

    def step(self, g) -> None:
        self.sgd.step(g)
        self.updates += 1
        self.average = self.average + (self.sgd.weights - self.average) / self.updates


@dataclass
class SagState:
    """Stochastic average gradient over a horizon known up front."""

    m: int
    horizon: int
    step_size: float = 1.0
    theta: float = 0.1
    initial_weight: float = 1.0
    weight_floor: float = 1e-6
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]
    gradient_memory: np.ndarray = field(default=None)  # type: ignore[assignment]
    gradient_sum: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if min(self.step_size, self.theta, self.initial_weight, self.weight_floor) <= 0:
            raise ValueError("step_size, theta, initial_weight, weight_floor must be positive")
        if self.weights is None:
            self.weights = np.full(self.m, self.initial_weight, dtype=np.float64)
        if self.gradient_memory is None:
            self.gradient_memory = np.zeros((self.horizon, self.m), dtype=np.float64)
        if self.gradient_sum is None:
            self.gradient_sum = np.zeros(self.m, dtype=np.float64)

    def step(self, g, sample_index: int) -> None:
        if not 0 <= sample_index < self.horizon:
            raise IndexError(
                f"sample_index {sample_index} outside horizon {self.horizon}"
            )
        grad = self.theta * np.asarray(g, dtype=np.float64) - 1.0 / self.weights
        self.gradient_sum = self.gradient_sum + (grad - self.gradient_memory[sample_index])
        self.gradient_memory[sample_index] = grad
        self.weights = np.maximum(
            self.weights - (self.step_size / self.horizon) * self.gradient_sum,
            self.weight_floor,
        )


def voting_predict(scores) -> int:
    """Majority vote of learner signs; individual and overall ties go to +1."""
    votes = np.where(np.asarray(scores, dtype=np.float64) >= 0.0, 1, -1)
    return 1 if votes.sum() >= 0 else -1
