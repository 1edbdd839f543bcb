import numpy as np
import pytest

from nonuniform_robust.data import Dataset
from nonuniform_robust.net import MlpModel, init_model
from nonuniform_robust.synthetic import make_correlated_blobs


@pytest.fixture(autouse=True)
def isolated_config(tmp_path, monkeypatch):
    """Keep user config files and .env out of the tests."""
    monkeypatch.setenv("NUROBUST_CONFIG", str(tmp_path / "no-config.toml"))
    monkeypatch.delenv("NUROBUST_WORKERS", raising=False)
    monkeypatch.chdir(tmp_path)


def random_spd(rng, d, jitter=0.5):
    a = rng.standard_normal((d, d))
    return a @ a.T + jitter * np.eye(d)


def linear_model(w, b=None):
    """Single-layer network: logits = W x + b."""
    w = np.asarray(w, dtype=np.float64)
    b = np.zeros(w.shape[0]) if b is None else np.asarray(b, dtype=np.float64)
    return MlpModel((w.shape[1], w.shape[0]), (w,), (b,))


def random_net(rng, d, hidden, classes=2):
    dims = (d, *hidden, classes)
    weights = tuple(rng.standard_normal((o, i)) for i, o in zip(dims[:-1], dims[1:]))
    biases = tuple(0.5 * rng.standard_normal(o) for o in dims[1:])
    return MlpModel(dims, weights, biases)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def separable_blobs():
    rng = np.random.default_rng(7)
    labels = np.repeat([0, 1], 100)
    centers = np.where(labels[:, None] == 1, 3.0, -3.0)
    features = centers + rng.standard_normal((200, 2))
    return Dataset(features, labels, ("a", "b"))


@pytest.fixture
def blobs():
    return make_correlated_blobs(n=400, dim=4, seed=3)


@pytest.fixture
def small_model(blobs):
    return init_model(blobs.d, 2, hidden=(8, 6), dropout_rate=0.0, seed=5)
