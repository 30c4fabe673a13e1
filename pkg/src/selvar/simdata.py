"""Synthetic benchmark datasets with known variable roles.

Two families are provided, each in a moderate and a high dimensional
version.  The clustering family mixes four equiprobable bivariate Gaussian
groups, adds nine variables built by noisy linear regression on the first
two, and pads with independent standard normals.  The classification family
draws four unbalanced classes on three correlated variables, regresses four
more on the first and third, and appends independent Gaussians with a
deterministic mean and variance profile (plus standard normal padding in
the high dimensional version).

Generation is bit-reproducible: each call derives its generator from the
(family tag, seed, n, p) tuple, and the draw order is fixed.  Correlated
noise uses explicit Cholesky factors so the output does not depend on the
platform's multivariate-normal implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .roles import SRUWPartition

_CLUSTER_TAG = 101
_CLASSIF_TAG = 202


@dataclass
class LabeledDataset:
    """Generated data with its group labels and the true variable roles."""

    data: np.ndarray
    labels: np.ndarray
    truth: SRUWPartition
    K: int
    name: str


def _rotation(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


# four bivariate group means on a 4 x 2 grid
_CLUSTER_MEANS = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 2.0], [4.0, 2.0]])

# regression loadings of variables 3..11 on variables 1..2
_CLUSTER_B = np.array([
    [0.5, 2.0, 0.0, -1.0, 2.0, 0.5, 4.0, 3.0, 2.0],
    [1.0, 0.0, 3.0, 2.0, -4.0, 0.0, 0.5, 0.0, 1.0],
])

_CLUSTER_OFFSET = np.array([0.0, 0.0, 0.4, 0.8, 1.2, 1.6, 2.0, 2.4, 2.8])


def _cluster_noise_cov() -> np.ndarray:
    omega = np.zeros((9, 9))
    omega[:3, :3] = np.eye(3)
    omega[3:5, 3:5] = 0.5 * np.eye(2)
    r1 = _rotation(np.pi / 3.0)
    omega[5:7, 5:7] = r1.T @ np.diag([1.0, 3.0]) @ r1
    r2 = _rotation(np.pi / 6.0)
    omega[7:9, 7:9] = r2.T @ np.diag([2.0, 6.0]) @ r2
    return omega


def clustering_scenario(n: int, p: int = 14, seed: int = 0) -> LabeledDataset:
    """Four-group clustering benchmark with redundant and noise variables.

    Variables 1..2 carry the group structure, 3..11 are linear in 1..2 with
    correlated noise, and the rest are independent standard normals.  Only
    p = 14 and p = 100 are supported.
    """
    if p not in (14, 100):
        raise ConfigError(f"clustering scenario supports p in (14, 100), got {p}")
    if n < 8:
        raise ConfigError("need at least 8 observations")
    rng = np.random.default_rng((_CLUSTER_TAG, seed, n, p))
    labels = rng.integers(1, 5, size=n)
    y12 = _CLUSTER_MEANS[labels - 1] + rng.standard_normal((n, 2))
    chol = np.linalg.cholesky(_cluster_noise_cov())
    eps = rng.standard_normal((n, 9)) @ chol.T
    y_reg = _CLUSTER_OFFSET + y12 @ _CLUSTER_B + eps
    y_noise = rng.standard_normal((n, p - 11))
    data = np.column_stack([y12, y_reg, y_noise])
    truth = SRUWPartition(
        S=frozenset({1, 2}),
        R=frozenset({1, 2}),
        U=frozenset(range(3, 12)),
        W=frozenset(range(12, p + 1)),
    )
    return LabeledDataset(data=data, labels=labels, truth=truth, K=4,
                          name=f"cluster-p{p}")


_CLASSIF_PROPORTIONS = np.array([0.15, 0.30, 0.20, 0.35])

_CLASSIF_MEANS = np.array([
    [1.5, -1.5, 1.5],
    [-1.5, 1.5, 1.5],
    [1.5, -1.5, -1.5],
    [-1.5, 1.5, -1.5],
])

_CLASSIF_AR = np.array([0.85, 0.10, 0.65, 0.50])

# regression loadings of variables 4..7 on variables 1 and 3
_CLASSIF_BETA = np.array([
    [1.0, 0.0, -1.0, 2.0],
    [0.0, -2.0, 2.0, 1.0],
])

_CLASSIF_GAMMA = np.linspace(-2.0, 2.0, 9)
_CLASSIF_TAU = np.array([0.5, 0.75, 1.0, 1.25, 1.5, 1.25, 1.0, 0.75, 0.5])


def classification_scenario(n: int, p: int = 16, seed: int = 0) -> LabeledDataset:
    """Four-class benchmark with autoregressive class covariances.

    Class k has mean row k of the sign pattern above and covariance
    (rho_k ** |i - j|) on variables 1..3; variables 4..7 regress on 1 and 3,
    variables 8..16 are independent Gaussians with a fixed mean and variance
    profile, and p = 100 pads with standard normals.
    """
    if p not in (16, 100):
        raise ConfigError(f"classification scenario supports p in (16, 100), got {p}")
    if n < 8:
        raise ConfigError("need at least 8 observations")
    rng = np.random.default_rng((_CLASSIF_TAG, seed, n, p))
    labels = rng.choice(4, size=n, p=_CLASSIF_PROPORTIONS) + 1
    idx = np.arange(3)
    chols = np.stack([
        np.linalg.cholesky(rho ** np.abs(idx[:, None] - idx[None, :]))
        for rho in _CLASSIF_AR
    ])
    e = rng.standard_normal((n, 3))
    y123 = _CLASSIF_MEANS[labels - 1] + np.einsum("nij,nj->ni", chols[labels - 1], e)
    y47 = y123[:, [0, 2]] @ _CLASSIF_BETA + rng.standard_normal((n, 4))
    y816 = _CLASSIF_GAMMA + rng.standard_normal((n, 9)) * np.sqrt(_CLASSIF_TAU)
    blocks = [y123, y47, y816]
    if p > 16:
        blocks.append(rng.standard_normal((n, p - 16)))
    data = np.column_stack(blocks)
    truth = SRUWPartition(
        S=frozenset({1, 2, 3}),
        R=frozenset({1, 3}),
        U=frozenset(range(4, 8)),
        W=frozenset(range(8, p + 1)),
    )
    return LabeledDataset(data=data, labels=labels, truth=truth, K=4,
                          name=f"classif-p{p}")


SCENARIOS = {
    "cluster-p14": lambda n, seed: clustering_scenario(n, 14, seed),
    "cluster-p100": lambda n, seed: clustering_scenario(n, 100, seed),
    "classif-p16": lambda n, seed: classification_scenario(n, 16, seed),
    "classif-p100": lambda n, seed: classification_scenario(n, 100, seed),
}


def make_scenario(name: str, n: int, seed: int = 0) -> LabeledDataset:
    """Look up a scenario by name; unknown names raise ConfigError."""
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ConfigError(
            f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}"
        ) from None
    return factory(n, seed)


def replicate_seed(seed: int, rep: int) -> int:
    """Stable per-replicate seed derived from a base seed and replicate index."""
    return int(np.random.SeedSequence(entropy=(seed, rep)).generate_state(1)[0])


def write_csv(path, data, header: bool = True) -> None:
    """Write a data matrix as comma-separated values with full float precision."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise ConfigError("write_csv expects a 2d matrix")
    head = ",".join(f"v{j + 1}" for j in range(arr.shape[1])) if header else ""
    np.savetxt(path, arr, delimiter=",", fmt="%.17g", header=head, comments="")


def write_labels_csv(path, labels, header: bool = True) -> None:
    """Write integer labels as a one-column CSV."""
    z = np.asarray(labels, dtype=int)[:, None]
    np.savetxt(path, z, delimiter=",", fmt="%d", header="label" if header else "",
               comments="")
