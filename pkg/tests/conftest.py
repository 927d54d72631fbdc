import os

import numpy as np
import pytest

from properlink import data as dio


def _minmax_scale(x: np.ndarray) -> np.ndarray:
    """Scale each feature to [-1, 1], the convention of distributed .scale files."""
    lo = x.min(axis=0)
    hi = x.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return 2.0 * (x - lo) / span - 1.0


def _to_libsvm(x: np.ndarray, y: np.ndarray) -> str:
    lines = []
    for row, label in zip(x, y):
        feats = " ".join(f"{j + 1}:{row[j]:.8f}" for j in range(len(row)) if row[j] != 0.0)
        lines.append(f"{int(label)} {feats}".rstrip())
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def iris_dataset() -> dio.LabeledDataset:
    from sklearn.datasets import load_iris

    bunch = load_iris()
    text = _to_libsvm(_minmax_scale(bunch.data), bunch.target + 1)
    return dio.parse_libsvm(text)


@pytest.fixture(scope="session")
def wine_dataset() -> dio.LabeledDataset:
    from sklearn.datasets import load_wine

    bunch = load_wine()
    text = _to_libsvm(_minmax_scale(bunch.data), bunch.target + 1)
    return dio.parse_libsvm(text)


@pytest.fixture(scope="session")
def iris_libsvm_path(tmp_path_factory, iris_dataset) -> str:
    path = tmp_path_factory.mktemp("data") / "iris.scale"
    path.write_text(dio.serialize_libsvm(iris_dataset))
    return str(path)


def segment_path() -> str | None:
    """LIBSVM-format statlog segment file, if one has been provided."""
    candidates = [os.path.join(os.path.dirname(__file__), "data", name)
                  for name in ("segment.scale", "segment")]
    base = os.environ.get("PROPERLINK_DATA_DIR")
    if base:
        candidates += [os.path.join(base, name) for name in ("segment.scale", "segment")]
    for cand in candidates:
        if os.path.exists(cand):
            return cand
    return None


@pytest.fixture(scope="session")
def blobs_dataset() -> dio.LabeledDataset:
    """Separable 3-class Gaussian blobs, 300 points."""
    rng = np.random.default_rng(42)
    centers = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])
    x = np.vstack([rng.normal(size=(100, 2)) + c for c in centers])
    y = np.repeat([1, 2, 3], 100)
    return dio.parse_libsvm(_to_libsvm(x, y))
