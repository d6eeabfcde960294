"""LIBSVM-format datasets, train/eval splits, and per-trial random orderings.

Accepted text grammar (whitespace-separated, ``#`` starts a comment that runs
to end of line)::

    <label> (<index>:<value> )*

Labels may use any of the binary conventions found in LIBSVM repository
files: ``+1``/``1`` map to +1, and ``-1``/``0``/``2`` map to -1.  Feature
indices are 1-based and must be strictly increasing within a record
(duplicates are rejected rather than silently resolved).  Missing features
are implicitly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .errors import ConfigError, EmptyDatasetError, ParseError
from .rng import STREAM_ORDERING, STREAM_SPLIT, stream_rng

_LABEL_MAP = {"+1": 1, "1": 1, "-1": -1, "0": -1, "2": -1}


@dataclass(frozen=True)
class Sample:
    """One labeled instance: binary label plus a sparse feature vector."""

    label: int
    indices: tuple[int, ...]
    values: tuple[float, ...]
    max_index: int

    @property
    def features(self) -> dict[int, float]:
        return dict(zip(self.indices, self.values))


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: tuple[Sample, ...]
    dimension: int

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


@dataclass(frozen=True)
class SplitPlan:
    """Pretrain/eval split policy: at most 10% of the data may be pretraining."""

    train_fraction: float
    seed: int
    trial_count: int = 1

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 0.1:
            raise ConfigError(
                f"train_fraction must be in (0, 0.1], got {self.train_fraction}"
            )
        if self.trial_count < 1:
            raise ConfigError(f"trial_count must be >= 1, got {self.trial_count}")


def _parse_line(line_number: int, line: str) -> Sample | None:
    text = line.split("#", 1)[0].strip()
    if not text:
        return None
    tokens = text.split()
    label_token = tokens[0]
    if label_token not in _LABEL_MAP:
        raise ParseError(line_number, f"unknown label {label_token!r}")
    label = _LABEL_MAP[label_token]

    indices: list[int] = []
    values: list[float] = []
    previous = 0
    for token in tokens[1:]:
        idx_text, sep, val_text = token.partition(":")
        if not sep:
            raise ParseError(line_number, f"feature token {token!r} lacks ':'")
        try:
            index = int(idx_text)
        except ValueError:
            raise ParseError(line_number, f"non-numeric index in {token!r}") from None
        try:
            value = float(val_text)
        except ValueError:
            raise ParseError(line_number, f"non-numeric value in {token!r}") from None
        if index < 1:
            raise ParseError(line_number, f"index {index} < 1")
        if index == previous:
            raise ParseError(line_number, f"duplicate feature index {index}")
        if index < previous:
            raise ParseError(
                line_number, f"feature index {index} not increasing (after {previous})"
            )
        if not math.isfinite(value):
            raise ParseError(line_number, f"non-finite value in {token!r}")
        indices.append(index)
        values.append(value)
        previous = index

    return Sample(
        label=label,
        indices=tuple(indices),
        values=tuple(values),
        max_index=previous,
    )


def parse_libsvm(source: str | IO[str] | Iterable[str], name: str = "") -> Dataset:
    """Parse LIBSVM text into a Dataset.

    ``source`` may be a string, an open text file, or any iterable of lines.
    Raises ParseError (with the offending line number) on malformed input and
    EmptyDatasetError when no samples are present.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    samples: list[Sample] = []
    for line_number, line in enumerate(lines, start=1):
        sample = _parse_line(line_number, line)
        if sample is not None:
            samples.append(sample)
    if not samples:
        raise EmptyDatasetError(f"no samples in input {name!r}")
    dimension = max(s.max_index for s in samples)
    return Dataset(name=name, samples=tuple(samples), dimension=dimension)


def load_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    with path.open("r", encoding="utf-8") as handle:
        return parse_libsvm(handle, name=path.stem)


def serialize_libsvm(dataset: Dataset) -> str:
    """Canonical text form; parse(serialize(d)) reconstructs d exactly."""
    out = []
    for s in dataset.samples:
        parts = ["+1" if s.label > 0 else "-1"]
        parts.extend(f"{i}:{v!r}" for i, v in zip(s.indices, s.values))
        out.append(" ".join(parts))
    return "\n".join(out) + "\n"


def to_dense_matrix(samples: Iterable[Sample], dimension: int) -> np.ndarray:
    """Stack samples into a dense (n, dimension) array, zeros for absent features."""
    rows = list(samples)
    x = np.zeros((len(rows), dimension), dtype=np.float64)
    for row, s in enumerate(rows):
        if s.indices:
            if s.max_index > dimension:
                raise ConfigError(
                    f"sample feature index {s.max_index} exceeds dimension {dimension}"
                )
            x[row, np.asarray(s.indices, dtype=np.int64) - 1] = s.values
    return x


def split(dataset: Dataset, plan: SplitPlan, trial_index: int) -> tuple[Dataset, Dataset]:
    """Deterministic (seed, trial) split into pretraining and evaluation parts."""
    if not 0 <= trial_index < plan.trial_count:
        raise ConfigError(
            f"trial_index {trial_index} outside [0, {plan.trial_count})"
        )
    n = len(dataset)
    n_train = math.floor(plan.train_fraction * n)
    if n_train == 0:
        raise ConfigError(
            f"train_fraction {plan.train_fraction} yields an empty pretraining "
            f"split for {n} samples"
        )
    rng = stream_rng(plan.seed, STREAM_SPLIT, trial_index)
    perm = rng.permutation(n)
    train = tuple(dataset.samples[i] for i in perm[:n_train])
    evaluation = tuple(dataset.samples[i] for i in perm[n_train:])
    return (
        Dataset(name=dataset.name, samples=train, dimension=dataset.dimension),
        Dataset(name=dataset.name, samples=evaluation, dimension=dataset.dimension),
    )


def ordering(eval_dataset: Dataset, seed: int, trial_index: int) -> np.ndarray:
    """Uniform random permutation of 0..n-1, reproducible from (seed, trial)."""
    n = len(eval_dataset)
    if n == 0:
        raise ConfigError("cannot order an empty evaluation set")
    rng = stream_rng(seed, STREAM_ORDERING, trial_index)
    return rng.permutation(n)
