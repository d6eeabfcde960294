"""Online weak learners over random feature subsets.

Two learner families are provided, both operating on a fixed subset of the
feature space and emitting a real score whose sign is the predicted class
(score exactly 0 predicts +1, the tie rule used throughout the package):

* Perceptron: score ``w . x + b`` with the classical mistake-driven update.
* Gaussian naive Bayes: score is the class log-odds under per-feature
  Gaussians with online (Welford) moments and Laplace-smoothed class priors.

Learner state is stored struct-of-arrays per pool so that scoring all m
learners on one sample is a handful of vectorized operations.  Because every
learner sees the identical unweighted stream, the naive Bayes per-feature
moments are shared across learners; only the subset masks differ.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np

from .data import Dataset, to_dense_matrix
from .errors import ConfigError
from .rng import STREAM_POOL, stream_rng

LEARNER_KINDS = ("perceptron", "naive_bayes")

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class FeatureSubset:
    """Sorted 1-based feature indices a learner is restricted to."""

    indices: tuple[int, ...]

    def __post_init__(self):
        if not self.indices:
            raise ConfigError("feature subset must be non-empty")
        if any(i < 1 for i in self.indices):
            raise ConfigError("feature indices are 1-based")
        if tuple(sorted(set(self.indices))) != self.indices:
            raise ConfigError("feature subset must be sorted and duplicate-free")


def sample_subset(
    dimension: int,
    rng: np.random.Generator,
    include_prob: float = 0.5,
    max_attempts: int = 10_000,
) -> FeatureSubset:
    """Draw a subset including each feature independently with include_prob.

    Empty draws are rejected and retried; after max_attempts the configuration
    is considered unusable.
    """
    if dimension < 1:
        raise ConfigError(f"dimension must be >= 1, got {dimension}")
    for _ in range(max_attempts):
        mask = rng.random(dimension) < include_prob
        if mask.any():
            return FeatureSubset(tuple(int(i) + 1 for i in np.flatnonzero(mask)))
    raise ConfigError(
        f"could not draw a non-empty feature subset in {max_attempts} attempts "
        f"(dimension={dimension}, include_prob={include_prob})"
    )


def full_subset(dimension: int) -> FeatureSubset:
    return FeatureSubset(tuple(range(1, dimension + 1)))


def _subset_masks(subsets: list[FeatureSubset], dimension: int) -> np.ndarray:
    masks = np.zeros((len(subsets), dimension), dtype=np.float64)
    for row, subset in enumerate(subsets):
        if subset.indices[-1] > dimension:
            raise ConfigError(
                f"subset index {subset.indices[-1]} exceeds dimension {dimension}"
            )
        masks[row, np.asarray(subset.indices, dtype=np.int64) - 1] = 1.0
    return masks


class PerceptronPool:
    """m perceptrons restricted to per-learner subsets of a d-dimensional space.

    Weights live in the full feature space but stay zero off-subset, so the
    pool score is a single matrix-vector product.
    """

    kind = "perceptron"

    def __init__(self, subsets: list[FeatureSubset], dimension: int, learning_rate: float = 1.0):
        if learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {learning_rate}")
        self.dimension = dimension
        self.learning_rate = learning_rate
        self.mask = _subset_masks(subsets, dimension)
        self.m = self.mask.shape[0]
        self.weights = np.zeros((self.m, dimension), dtype=np.float64)
        self.bias = np.zeros(self.m, dtype=np.float64)

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.weights @ x + self.bias

    def scores_matrix(self, x_rows: np.ndarray) -> np.ndarray:
        """Scores for a whole (n, dimension) batch at once, shape (n, m)."""
        return x_rows @ self.weights.T + self.bias

    def update(self, x: np.ndarray, label: int) -> None:
        # Mistake-driven: only learners whose sign (tie -> +1) disagrees move.
        predicted = np.where(self.scores(x) >= 0.0, 1, -1)
        wrong = predicted != label
        if wrong.any():
            step = self.learning_rate * label
            self.weights[wrong] += step * (self.mask[wrong] * x)
            self.bias[wrong] += step

    def snapshot(self) -> str:
        lines = [f"perceptron m={self.m} dimension={self.dimension} learning_rate={self.learning_rate!r}"]
        for i in range(self.m):
            active = np.flatnonzero(self.mask[i]) + 1
            lines.append(f"learner {i}")
            lines.append("subset: " + " ".join(str(int(j)) for j in active))
            lines.append("weights: " + " ".join(repr(float(w)) for w in self.weights[i, active - 1]))
            lines.append(f"bias: {self.bias[i]!r}")
        return "\n".join(lines) + "\n"

    def copy(self) -> "PerceptronPool":
        return copy.deepcopy(self)


class NaiveBayesPool:
    """m Gaussian naive Bayes learners sharing one set of online moments.

    Per-feature running mean/variance and class counts are identical for all
    learners (every learner consumes the same unweighted stream), so they are
    tracked once; learner scores differ only through the subset masks.
    Variances are floored to keep the Gaussian densities defined, and class
    priors use add-one smoothing so unseen classes stay finite.
    """

    kind = "naive_bayes"

    def __init__(self, subsets: list[FeatureSubset], dimension: int, variance_floor: float = 1e-9):
        if variance_floor <= 0:
            raise ConfigError(f"variance_floor must be positive, got {variance_floor}")
        self.dimension = dimension
        self.variance_floor = variance_floor
        self.mask = _subset_masks(subsets, dimension)
        self.m = self.mask.shape[0]
        # Row 0 tracks class +1, row 1 tracks class -1.
        self.counts = np.zeros(2, dtype=np.float64)
        self.means = np.zeros((2, dimension), dtype=np.float64)
        self.m2 = np.zeros((2, dimension), dtype=np.float64)

    def scores(self, x: np.ndarray) -> np.ndarray:
        n_pos, n_neg = self.counts
        prior_term = np.log(n_pos + 1.0) - np.log(n_neg + 1.0)
        if n_pos == 0.0 or n_neg == 0.0:
            # No feature evidence until both classes have been observed.
            return np.full(self.m, prior_term, dtype=np.float64)
        variances = np.maximum(self.m2 / self.counts[:, None], self.variance_floor)
        log_pdf = -0.5 * (_LOG_2PI + np.log(variances)) - (x - self.means) ** 2 / (2.0 * variances)
        per_feature = log_pdf[0] - log_pdf[1]
        return self.mask @ per_feature + prior_term

    def scores_matrix(self, x_rows: np.ndarray) -> np.ndarray:
        """Scores for a whole (n, dimension) batch at once, shape (n, m)."""
        n_pos, n_neg = self.counts
        prior_term = float(np.log(n_pos + 1.0) - np.log(n_neg + 1.0))
        if n_pos == 0.0 or n_neg == 0.0:
            return np.full((x_rows.shape[0], self.m), prior_term)
        variances = np.maximum(self.m2 / self.counts[:, None], self.variance_floor)
        log_pdf = np.empty((2, x_rows.shape[0], self.dimension))
        for row in (0, 1):
            log_pdf[row] = (
                -0.5 * (_LOG_2PI + np.log(variances[row]))
                - (x_rows - self.means[row]) ** 2 / (2.0 * variances[row])
            )
        return (log_pdf[0] - log_pdf[1]) @ self.mask.T + prior_term

    def update(self, x: np.ndarray, label: int) -> None:
        row = 0 if label > 0 else 1
        self.counts[row] += 1.0
        delta = x - self.means[row]
        self.means[row] += delta / self.counts[row]
        self.m2[row] += delta * (x - self.means[row])

    def snapshot(self) -> str:
        lines = [
            f"naive_bayes m={self.m} dimension={self.dimension} variance_floor={self.variance_floor!r}",
            f"counts: {self.counts[0]!r} {self.counts[1]!r}",
        ]
        for row, tag in ((0, "+1"), (1, "-1")):
            lines.append(f"class {tag} means: " + " ".join(repr(float(v)) for v in self.means[row]))
            lines.append(f"class {tag} m2: " + " ".join(repr(float(v)) for v in self.m2[row]))
        for i in range(self.m):
            active = np.flatnonzero(self.mask[i]) + 1
            lines.append(f"learner {i}")
            lines.append("subset: " + " ".join(str(int(j)) for j in active))
        return "\n".join(lines) + "\n"

    def copy(self) -> "NaiveBayesPool":
        return copy.deepcopy(self)


@dataclass
class WeakPool:
    """A pool of weak learners plus the subsets they were built on.

    Frozen pools reject online updates; the prequential harness relies on
    this to keep the pretrained-and-fixed experimental mode honest.
    """

    impl: PerceptronPool | NaiveBayesPool
    subsets: tuple[FeatureSubset, ...]
    frozen: bool

    @property
    def m(self) -> int:
        return self.impl.m

    @property
    def kind(self) -> str:
        return self.impl.kind

    @property
    def dimension(self) -> int:
        return self.impl.dimension

    def scores(self, x: np.ndarray) -> np.ndarray:
        return self.impl.scores(x)

    def scores_matrix(self, x_rows: np.ndarray) -> np.ndarray:
        return self.impl.scores_matrix(x_rows)

    def update(self, x: np.ndarray, label: int) -> None:
        if self.frozen:
            raise ConfigError("cannot update a frozen pool")
        self.impl.update(x, label)

    def snapshot(self) -> str:
        return self.impl.snapshot()

    def copy(self) -> "WeakPool":
        return WeakPool(impl=self.impl.copy(), subsets=self.subsets, frozen=self.frozen)


def build_pool(
    train: Dataset | None,
    m: int,
    learner_kind: str,
    seed: int,
    *,
    trial: int = 0,
    dimension: int | None = None,
    include_prob: float = 0.5,
    all_features: bool = False,
    frozen: bool = True,
    learning_rate: float = 1.0,
    variance_floor: float = 1e-9,
) -> WeakPool:
    """Build m learners with independently sampled subsets, pretraining each
    by one pass over the training split (when one is given).

    An empty/missing training split is only allowed for unfrozen pools (the
    online-updated experimental mode).  ``all_features=True`` gives every
    learner the full feature space, which with m=1 is the single-classifier
    baseline.
    """
    if m < 1:
        raise ConfigError(f"m must be >= 1, got {m}")
    if learner_kind not in LEARNER_KINDS:
        raise ConfigError(f"unknown learner kind {learner_kind!r}")
    has_train = train is not None and len(train) > 0
    if not has_train and frozen:
        raise ConfigError("a frozen pool requires a non-empty training split")
    if dimension is None:
        if not has_train:
            raise ConfigError("dimension is required when no training data is given")
        dimension = train.dimension
    if dimension < 1:
        raise ConfigError(f"dimension must be >= 1, got {dimension}")

    rng = stream_rng(seed, STREAM_POOL, trial)
    if all_features:
        subsets = [full_subset(dimension) for _ in range(m)]
    else:
        subsets = [sample_subset(dimension, rng, include_prob) for _ in range(m)]

    if learner_kind == "perceptron":
        impl: PerceptronPool | NaiveBayesPool = PerceptronPool(
            subsets, dimension, learning_rate=learning_rate
        )
    else:
        impl = NaiveBayesPool(subsets, dimension, variance_floor=variance_floor)

    if has_train:
        x_train = to_dense_matrix(train.samples, dimension)
        for row, sample in enumerate(train.samples):
            impl.update(x_train[row], sample.label)

    return WeakPool(impl=impl, subsets=tuple(subsets), frozen=frozen)
