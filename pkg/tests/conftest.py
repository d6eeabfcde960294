"""Shared fixtures: synthetic LIBSVM datasets and benchmark-data discovery."""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
import pytest

from bayens.data import Dataset, parse_libsvm

REPO_ROOT = Path(__file__).resolve().parent.parent

#: Where the real LIBSVM benchmark files are looked up.  See data/README.md.
DATA_DIR = Path(os.environ.get("BAYENS_DATASETS", REPO_ROOT / "data"))

#: Candidate file names per benchmark, first match wins.
BENCHMARK_FILES = {
    "breast-cancer": ("breast-cancer", "breast-cancer.txt", "breast-cancer.libsvm"),
    "heart": ("heart", "heart.txt", "heart.libsvm"),
    "australian": ("australian", "australian.txt", "australian.libsvm"),
    "diabetes": ("diabetes", "diabetes.txt", "diabetes.libsvm"),
    "mushrooms": ("mushrooms", "mushrooms.txt", "mushrooms.libsvm"),
}


def benchmark_path(name: str) -> Path:
    """Resolve a benchmark dataset file or fail the calling test with
    instructions; these files cannot be redistributed with the repo."""
    for candidate in BENCHMARK_FILES[name]:
        path = DATA_DIR / candidate
        if path.exists():
            return path
    pytest.fail(
        f"benchmark dataset {name!r} not found under {DATA_DIR}. Download the "
        f"LIBSVM binary-classification file and place it there (or point "
        f"BAYENS_DATASETS at a directory containing it); see data/README.md.",
        pytrace=False,
    )


def make_synthetic_text(
    n: int = 200,
    d: int = 10,
    seed: int = 0,
    noise: float = 0.3,
    sparsity: float = 0.0,
) -> str:
    """Linear-rule labels over Gaussian features, serialized as LIBSVM text."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=d)
    lines = []
    for _ in range(n):
        x = rng.normal(size=d)
        if sparsity > 0.0:
            x[rng.random(d) < sparsity] = 0.0
        label = 1 if x @ w + noise * rng.normal() >= 0 else -1
        feats = " ".join(f"{j + 1}:{x[j]:.6f}" for j in range(d) if x[j] != 0.0)
        lines.append(f"{'+1' if label > 0 else '-1'} {feats}".strip())
    return "\n".join(lines) + "\n"


def make_synthetic_dataset(n: int = 200, d: int = 10, seed: int = 0, **kw) -> Dataset:
    return parse_libsvm(make_synthetic_text(n=n, d=d, seed=seed, **kw), name="synthetic")


@pytest.fixture
def synthetic_path(tmp_path) -> Path:
    path = tmp_path / "synthetic.libsvm"
    path.write_text(make_synthetic_text(n=240, d=8, seed=11), encoding="utf-8")
    return path
