"""Shared fixtures and small data builders for the test suite."""

import numpy as np
import pytest


def spd_matrix(rng: np.random.Generator, q: int, cond: float = 10.0) -> np.ndarray:
    """Random symmetric positive definite matrix with a controlled spectrum."""
    A = rng.normal(size=(q, q))
    Q, _ = np.linalg.qr(A)
    eigs = np.geomspace(1.0, cond, q)
    return (Q * eigs) @ Q.T


def two_blob_data(rng: np.random.Generator, n: int = 200, sep: float = 6.0):
    """Two well separated spherical blobs in 2d plus the generating labels."""
    half = n // 2
    labels = np.repeat([1, 2], [half, n - half])
    means = np.array([[0.0, 0.0], [sep, sep]])
    Y = means[labels - 1] + rng.normal(size=(n, 2))
    return Y, labels


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)
