"""Gaussian mixture estimation under six parsimonious covariance forms.

The covariance forms are the spherical / diagonal / full families, each in
an "equal" (shared across components) and a "free" (component-specific)
variant.  EM is run from several k-means style initialisations and the best
local maximum is kept.  The module also provides the closed-form single
Gaussian fits with spherical or diagonal covariance used to score variables
declared independent of the clustering, and the class-conditional maximum
likelihood fit used in the supervised setting.

All fits report the maximised log likelihood together with the number of
free parameters, so callers can form BIC-type criteria (here defined as
2 * loglik - nparams * ln n, i.e. larger is better).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DataError, DegenerateCovariance, EmptyComponent, InsufficientClassData

LOG_2PI = float(np.log(2.0 * np.pi))

# Eigenvalue floor for fitted covariances, relative to the mean empirical
# variance of the data being fitted.
VAR_FLOOR_REL = 1e-6

# Restarts first run with this iteration budget; only the best of them is
# refined to the full budget.  Short runs almost always rank basins the same
# way as converged ones, at a fraction of the cost.
EXPLORE_ITERS = 25

# A component whose responsibility mass drops below EMPTY_COMP_REL * n is
# treated as empty and the EM run is abandoned.
EMPTY_COMP_REL = 1e-8


class MixtureForm(Enum):
    """Covariance structure of the mixture components."""

    SPHERICAL_EQUAL = "spherical_equal"
    SPHERICAL_FREE = "spherical_free"
    DIAGONAL_EQUAL = "diagonal_equal"
    DIAGONAL_FREE = "diagonal_free"
    FULL_EQUAL = "full_equal"
    FULL_FREE = "full_free"

    @property
    def is_spherical(self) -> bool:
        return self in (MixtureForm.SPHERICAL_EQUAL, MixtureForm.SPHERICAL_FREE)

    @property
    def is_diagonal(self) -> bool:
        return self in (MixtureForm.DIAGONAL_EQUAL, MixtureForm.DIAGONAL_FREE)

    @property
    def is_full(self) -> bool:
        return self in (MixtureForm.FULL_EQUAL, MixtureForm.FULL_FREE)

    @property
    def is_equal(self) -> bool:
        return self in (
            MixtureForm.SPHERICAL_EQUAL,
            MixtureForm.DIAGONAL_EQUAL,
            MixtureForm.FULL_EQUAL,
        )


class IndepCovForm(Enum):
    """Covariance structure of the independent (non-clustering) variables."""

    SPHERICAL = "spherical"
    DIAGONAL = "diagonal"


def cov_param_count(K: int, q: int, form: MixtureForm) -> int:
    """Free parameters in the covariance part of a K-component mixture on q variables."""
    if form is MixtureForm.SPHERICAL_EQUAL:
        return 1
    if form is MixtureForm.SPHERICAL_FREE:
        return K
    if form is MixtureForm.DIAGONAL_EQUAL:
        return q
    if form is MixtureForm.DIAGONAL_FREE:
        return K * q
    if form is MixtureForm.FULL_EQUAL:
        return q * (q + 1) // 2
    if form is MixtureForm.FULL_FREE:
        return K * q * (q + 1) // 2
    raise ValueError(f"unknown form {form!r}")


def param_count(K: int, q: int, form: MixtureForm) -> int:
    """Total free parameters: proportions, means and covariances."""
    if K < 1 or q < 1:
        raise ValueError("K and q must be positive")
    return (K - 1) + K * q + cov_param_count(K, q, form)


def equivalent_form(form: MixtureForm, q: int) -> MixtureForm:
    """Cheapest form with identical fits; all forms collapse to spherical at q=1."""
    if q == 1:
        return MixtureForm.SPHERICAL_EQUAL if form.is_equal else MixtureForm.SPHERICAL_FREE
    return form


@dataclass(frozen=True)
class InitPolicy:
    """Deterministic multi-start initialisation for EM.

    Each (restart, attempt) pair derives its own generator from the tuple
    (seed, restart, attempt), so runs are reproducible across processes and
    thread schedules.  Attempts re-seed a restart whose EM run collapsed to
    an empty component.
    """

    seed: int = 0
    restarts: int = 5
    retries: int = 3
    kmeans_iters: int = 10

    def rng(self, restart: int, attempt: int = 0) -> np.random.Generator:
        return np.random.default_rng((self.seed, restart, attempt))


@dataclass
class MixtureFit:
    """Fitted Gaussian mixture; covariances are stored dense per component."""

    K: int
    form: MixtureForm
    proportions: np.ndarray  # (K,)
    means: np.ndarray  # (K, q)
    covariances: np.ndarray  # (K, q, q)
    loglik: float
    nparams: int
    n_iter: int = 0
    converged: bool = True
    responsibilities: np.ndarray | None = None  # (n, K), at the returned parameters
    loglik_trace: tuple = ()


@dataclass
class IndepModel:
    """Single Gaussian with spherical or diagonal covariance."""

    mean: np.ndarray  # (q,)
    cov: np.ndarray  # (q, q) diagonal
    form: IndepCovForm
    loglik: float
    nparams: int


def validate_data(data, min_rows: int = 2) -> np.ndarray:
    """Coerce to a float matrix and reject shapes or values estimation cannot use."""
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2:
        raise DataError(f"expected a 2d data matrix, got ndim={arr.ndim}")
    n, p = arr.shape
    if p < 1:
        raise DataError("data matrix has no columns")
    if n < min_rows:
        raise DataError(f"need at least {min_rows} rows, got {n}")
    if not np.all(np.isfinite(arr)):
        raise DataError("data matrix contains non-finite values")
    if np.any(arr.var(axis=0) <= 0.0):
        j = int(np.flatnonzero(arr.var(axis=0) <= 0.0)[0])
        raise DegenerateCovariance(f"variable {j + 1} has zero empirical variance")
    return arr


def _spd_cholesky(cov: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance("covariance matrix is not positive definite") from exc


def log_density(x, mean, cov) -> float:
    """Log of the multivariate Gaussian density at a single point."""
    x = np.asarray(x, dtype=float).ravel()
    mean = np.asarray(mean, dtype=float).ravel()
    cov = np.asarray(cov, dtype=float)
    q = x.size
    if mean.size != q or cov.shape != (q, q):
        raise DataError("log_density: dimension mismatch between point, mean and covariance")
    chol = _spd_cholesky(cov)
    dev = solve_triangular(chol, x - mean, lower=True)
    return float(-0.5 * q * LOG_2PI - np.log(np.diag(chol)).sum() - 0.5 * dev @ dev)


def _log_density_rows(Y: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Row-wise Gaussian log density sharing one Cholesky factorisation."""
    chol = _spd_cholesky(cov)
    dev = solve_triangular(chol, (Y - mean).T, lower=True)
    return -0.5 * Y.shape[1] * LOG_2PI - np.log(np.diag(chol)).sum() - 0.5 * (dev * dev).sum(axis=0)


def mixture_loglik(data, proportions, means, covariances) -> float:
    """Observed-data log likelihood of a Gaussian mixture at fixed parameters."""
    Y = np.asarray(data, dtype=float)
    pi = np.asarray(proportions, dtype=float)
    logp = np.log(pi)[None, :] + _component_logpdfs(
        Y, np.asarray(means, dtype=float), np.asarray(covariances, dtype=float))
    m = logp.max(axis=1, keepdims=True)
    return float((m + np.log(np.exp(logp - m).sum(axis=1, keepdims=True))).sum())


# ---------------------------------------------------------------------------
# EM internals
# ---------------------------------------------------------------------------


def _floor_full(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    w, V = np.linalg.eigh(cov)
    if w[0] >= floor:
        return cov
    return (V * np.maximum(w, floor)) @ V.T


def _project_covariances(scatters: np.ndarray, nk: np.ndarray, form: MixtureForm,
                         floor: float) -> np.ndarray:
    """Map component scatter matrices to covariances of the requested form."""
    K, q, _ = scatters.shape
    n = nk.sum()
    covs = np.empty_like(scatters)
    if form.is_equal:
        pooled = scatters.sum(axis=0) / n
        if form is MixtureForm.SPHERICAL_EQUAL:
            s2 = max(np.trace(pooled) / q, floor)
            covs[:] = s2 * np.eye(q)
        elif form is MixtureForm.DIAGONAL_EQUAL:
            covs[:] = np.diag(np.maximum(np.diag(pooled), floor))
        else:
            covs[:] = _floor_full(pooled, floor)
        return covs
    for k in range(K):
        Sk = scatters[k] / nk[k]
        if form is MixtureForm.SPHERICAL_FREE:
            covs[k] = max(np.trace(Sk) / q, floor) * np.eye(q)
        elif form is MixtureForm.DIAGONAL_FREE:
            covs[k] = np.diag(np.maximum(np.diag(Sk), floor))
        else:
            covs[k] = _floor_full(Sk, floor)
    return covs


def _mstep(Y: np.ndarray, t: np.ndarray, nk: np.ndarray, form: MixtureForm, floor: float):
    n, q = Y.shape
    K = t.shape[1]
    pi = nk / n
    means = (t.T @ Y) / nk[:, None]
    scatters = np.empty((K, q, q))
    for k in range(K):
        dev = Y - means[k]
        scatters[k] = (t[:, k, None] * dev).T @ dev
    covs = _project_covariances(scatters, nk, form, floor)
    return pi, means, covs


def _component_logpdfs(Y: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(n, K) Gaussian log densities with one batched Cholesky per parameter set."""
    K, q, _ = covs.shape
    try:
        chol = np.linalg.cholesky(covs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance("covariance matrix is not positive definite") from exc
    half_logdet = np.log(np.einsum("kii->ki", chol)).sum(axis=1)
    linv = np.linalg.inv(chol)
    dev = Y[:, None, :] - means[None, :, :]
    z = np.einsum("kij,nkj->nki", linv, dev)
    quad = np.einsum("nki,nki->nk", z, z)
    return -0.5 * q * LOG_2PI - half_logdet[None, :] - 0.5 * quad


def _estep(Y: np.ndarray, pi: np.ndarray, means: np.ndarray, covs: np.ndarray):
    logp = np.log(pi)[None, :] + _component_logpdfs(Y, means, covs)
    m = logp.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(logp - m).sum(axis=1, keepdims=True))
    return np.exp(logp - lse), float(lse.sum())


def _kmeans_partition(Y: np.ndarray, K: int, rng: np.random.Generator, iters: int) -> np.ndarray:
    """One-hot responsibilities from a short k-means run with ++ style seeding.

    Distances use variance-standardised columns so high-variance variables do
    not dominate the seeding; the EM that follows works on the raw scale.
    """
    scale = Y.std(axis=0)
    Y = Y / np.where(scale > 0.0, scale, 1.0)
    n = Y.shape[0]
    centers = np.empty((K, Y.shape[1]))
    centers[0] = Y[rng.integers(n)]
    d2 = ((Y - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            centers[k] = Y[rng.integers(n)]
        else:
            centers[k] = Y[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((Y - centers[k]) ** 2).sum(axis=1))
    labels = np.zeros(n, dtype=int)
    for _ in range(iters):
        dist = ((Y[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dist.argmin(axis=1)
        for k in range(K):
            if not np.any(new_labels == k):
                # steal the point currently worst served by its own center
                new_labels[dist[np.arange(n), new_labels].argmax()] = k
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
        for k in range(K):
            centers[k] = Y[labels == k].mean(axis=0)
    t = np.zeros((n, K))
    t[np.arange(n), labels] = 1.0
    return t


def _em_run(Y, K, form, t0, tol, max_iter, floor, eps_empty):
    """Run EM from one-hot responsibilities; None signals an empty component."""
    t = t0
    prev = None
    trace = []
    converged = False
    n_iter = 0
    pi = means = covs = None
    ll = -np.inf
    for n_iter in range(1, max_iter + 1):
        nk = t.sum(axis=0)
        if nk.min() < eps_empty:
            return None
        pi, means, covs = _mstep(Y, t, nk, form, floor)
        t, ll = _estep(Y, pi, means, covs)
        trace.append(ll)
        if prev is not None and abs(ll - prev) <= tol * (1.0 + abs(prev)):
            converged = True
            break
        prev = ll
    return MixtureFit(
        K=K,
        form=form,
        proportions=pi,
        means=means,
        covariances=covs,
        loglik=ll,
        nparams=param_count(K, Y.shape[1], form),
        n_iter=n_iter,
        converged=converged,
        responsibilities=t,
        loglik_trace=tuple(trace),
    )


def _fit_k1(Y: np.ndarray, form: MixtureForm, floor: float) -> MixtureFit:
    n, q = Y.shape
    mean = Y.mean(axis=0)
    scatter = (Y - mean).T @ (Y - mean)
    covs = _project_covariances(scatter[None], np.array([float(n)]), form, floor)
    ll = float(_log_density_rows(Y, mean, covs[0]).sum())
    return MixtureFit(
        K=1,
        form=form,
        proportions=np.ones(1),
        means=mean[None],
        covariances=covs,
        loglik=ll,
        nparams=param_count(1, q, form),
        n_iter=0,
        converged=True,
        responsibilities=np.ones((n, 1)),
        loglik_trace=(ll,),
    )


def em_fit(data, K: int, form: MixtureForm, init: InitPolicy | None = None,
           tol: float = 1e-6, max_iter: int = 500) -> MixtureFit:
    """Fit a K-component Gaussian mixture, keeping the best of several EM runs.

    Every restart first runs EM on a short exploration budget; only the best
    short run is resumed to the full budget, so the cost stays close to one
    converged run plus a few cheap probes.

    Parameters
    ----------
    data : array_like, shape (n, q)
        Observations by rows.
    K : int
        Number of components, at least 1.
    form : MixtureForm
        Covariance structure constraint.
    init : InitPolicy, optional
        Seeding and restart policy; the default uses seed 0 with 5 restarts.
    tol : float
        Relative log likelihood change below which EM stops.
    max_iter : int
        Iteration cap per restart.

    Raises
    ------
    EmptyComponent
        If every restart collapsed a component below the mass threshold.
    """
    Y = validate_data(data)
    n, q = Y.shape
    if K < 1:
        raise DataError("K must be at least 1")
    if n <= K:
        raise DataError(f"need more than K={K} observations, got {n}")
    floor = VAR_FLOOR_REL * Y.var(axis=0).mean()
    if K == 1:
        return _fit_k1(Y, form, floor)
    init = init or InitPolicy()
    eps_empty = EMPTY_COMP_REL * n
    explore = min(max_iter, EXPLORE_ITERS)
    best: MixtureFit | None = None
    for restart in range(init.restarts):
        fit = None
        for attempt in range(init.retries):
            t0 = _kmeans_partition(Y, K, init.rng(restart, attempt), init.kmeans_iters)
            fit = _em_run(Y, K, form, t0, tol, explore, floor, eps_empty)
            if fit is not None:
                break
        if fit is not None and (best is None or fit.loglik > best.loglik):
            best = fit
    if best is None:
        raise EmptyComponent(
            f"all {init.restarts} restarts lost a component (K={K}, form={form.value})"
        )
    if not best.converged and max_iter > explore:
        # resume the winning run from its responsibilities (EM state is fully
        # captured by them, so this continues the same monotone sequence)
        refined = _em_run(Y, K, form, best.responsibilities, tol,
                          max_iter - explore, floor, eps_empty)
        if refined is not None and refined.loglik >= best.loglik:
            best = replace(refined, n_iter=best.n_iter + refined.n_iter,
                           loglik_trace=best.loglik_trace + refined.loglik_trace)
    return best


def bic_clust(data, K: int, form: MixtureForm, init: InitPolicy | None = None,
              tol: float = 1e-6, max_iter: int = 500) -> float:
    """BIC of the best mixture fit: 2 * loglik - nparams * ln n (larger is better)."""
    Y = validate_data(data)
    fit = em_fit(Y, K, form, init=init, tol=tol, max_iter=max_iter)
    return 2.0 * fit.loglik - fit.nparams * np.log(Y.shape[0])


# ---------------------------------------------------------------------------
# Independent-variable Gaussian and class-conditional fits
# ---------------------------------------------------------------------------


def fit_indep(data, form: IndepCovForm) -> IndepModel:
    """Maximum likelihood single Gaussian with spherical or diagonal covariance."""
    Y = validate_data(data)
    n, q = Y.shape
    mean = Y.mean(axis=0)
    variances = Y.var(axis=0)
    if form is IndepCovForm.SPHERICAL:
        s2 = variances.mean()
        diag = np.full(q, s2)
        cov_params = 1
    else:
        diag = variances
        cov_params = q
    if diag.min() <= 0.0:
        raise DegenerateCovariance("independent-variable variance collapsed to zero")
    # At the MLE the quadratic term sums to n*q exactly.
    ll = -0.5 * n * (q * LOG_2PI + np.log(diag).sum() + q)
    return IndepModel(mean=mean, cov=np.diag(diag), form=form,
                      loglik=float(ll), nparams=q + cov_params)


def bic_indep(data, form: IndepCovForm) -> float:
    """BIC of the independent-variable Gaussian (larger is better)."""
    Y = validate_data(data)
    model = fit_indep(Y, form)
    return 2.0 * model.loglik - model.nparams * np.log(Y.shape[0])


def validate_labels(labels, n: int) -> tuple[np.ndarray, int]:
    """Check labels are 1..K integers covering every class; returns (labels, K)."""
    z = np.asarray(labels)
    if z.ndim != 1 or z.shape[0] != n:
        raise DataError(f"labels must be a length-{n} vector")
    if not np.issubdtype(z.dtype, np.integer):
        zf = np.asarray(labels, dtype=float)
        if not np.all(np.isfinite(zf)) or np.any(zf != np.round(zf)):
            raise DataError("labels must be integers")
        z = zf.astype(int)
    K = int(z.max()) if z.size else 0
    if z.min() < 1:
        raise DataError("labels must be numbered from 1")
    counts = np.bincount(z, minlength=K + 1)[1:]
    if np.any(counts < 2):
        k = int(np.flatnonzero(counts < 2)[0]) + 1
        raise InsufficientClassData(f"class {k} has fewer than 2 observations")
    return z, K


def fit_labeled(data, labels, form: MixtureForm) -> MixtureFit:
    """Class-conditional Gaussian MLE under a covariance form constraint.

    Proportions are the empirical class frequencies.  The reported loglik is
    the complete-data log likelihood sum(n_k ln pi_k) + sum_i ln phi(y_i; class of i),
    which is the quantity entering the supervised selection criterion.
    """
    Y = validate_data(data)
    n, q = Y.shape
    z, K = validate_labels(labels, n)
    floor = VAR_FLOOR_REL * Y.var(axis=0).mean()
    t = np.zeros((n, K))
    t[np.arange(n), z - 1] = 1.0
    nk = t.sum(axis=0)
    pi, means, covs = _mstep(Y, t, nk, form, floor)
    ll = float((nk * np.log(pi)).sum())
    for k in range(K):
        ll += float(_log_density_rows(Y[z == k + 1], means[k], covs[k]).sum())
    return MixtureFit(
        K=K,
        form=form,
        proportions=pi,
        means=means,
        covariances=covs,
        loglik=ll,
        nparams=param_count(K, q, form),
        n_iter=0,
        converged=True,
        responsibilities=t,
        loglik_trace=(ll,),
    )


def bic_clas(data, labels, form: MixtureForm) -> float:
    """Supervised analogue of bic_clust at the class-conditional MLE."""
    Y = validate_data(data)
    fit = fit_labeled(Y, labels, form)
    return 2.0 * fit.loglik - fit.nparams * np.log(Y.shape[0])
