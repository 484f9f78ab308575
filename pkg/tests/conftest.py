"""Shared fixtures.

The blobs fixture is the workhorse classification problem: two Gaussian
clusters 8 standard deviations apart, so a linear separator exists with
overwhelming margin. Separability is verified inside the fixture by a
direct least-squares fit rather than assumed.
"""

from types import SimpleNamespace

import numpy as np
import pytest


def one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    t = np.zeros((n_classes, labels.size))
    t[labels, np.arange(labels.size)] = 1.0
    return t


def make_blobs(n_per_class: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two unit-variance Gaussian blobs centered at (-4, 0) and (4, 0)."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((2, n_per_class)) + np.array([[-4.0], [0.0]])
    b = rng.standard_normal((2, n_per_class)) + np.array([[4.0], [0.0]])
    x = np.hstack([a, b])
    labels = np.repeat(np.array([0, 1]), n_per_class)
    perm = rng.permutation(2 * n_per_class)
    return x[:, perm], one_hot(labels[perm], 2)


@pytest.fixture(scope="session")
def blobs():
    x_train, t_train = make_blobs(100, seed=1234)
    x_val, t_val = make_blobs(30, seed=1235)
    x_test, t_test = make_blobs(50, seed=1236)
    # A plain least-squares linear readout must classify the training set
    # perfectly, otherwise the fixture itself is broken.
    aug = np.vstack([x_train, np.ones((1, x_train.shape[1]))])
    w = np.linalg.lstsq(aug.T, t_train.T, rcond=None)[0].T
    fit_acc = np.mean(np.argmax(w @ aug, axis=0) == np.argmax(t_train, axis=0))
    assert fit_acc == 1.0, "blobs fixture is not linearly separable"
    return SimpleNamespace(
        x_train=x_train,
        t_train=t_train,
        x_val=x_val,
        t_val=t_val,
        x_test=x_test,
        t_test=t_test,
    )
