"""Penalized Gaussian mixture fits with l1 mean shrinkage and sparse precisions.

On centred data, the criterion maximised is

    sum_i ln sum_k pi_k phi(y_i; mu_k, Theta_k^-1)
        - lam * sum_k |mu_k|_1  -  rho * sum_k sum_{u != v} |Theta_k[u, v]|

via a generalised EM: responsibilities, exact proportion update, one cyclic
coordinate pass of soft-threshold mean updates, then one graphical lasso per
component (penalty 2 * rho / n_k on the responsibility-weighted scatter).
Component means shrunk to zero are stored as exact zeros; the variable
screening step upstream counts on that.  Each accepted update cannot decrease
the penalised objective: the precision update keeps the previous matrix
whenever the new graphical lasso iterate scores worse, so the objective trace
is non-decreasing up to floating point noise.

A supervised variant replaces responsibilities with fixed class indicators
and alternates the same mean and precision updates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DataError, EmptyComponent, NotConverged
from .gaussmix import (
    EMPTY_COMP_REL,
    LOG_2PI,
    InitPolicy,
    MixtureForm,
    em_fit,
    validate_data,
    validate_labels,
)
from .glasso import GlassoProblem, glasso_objective, glasso_solve

GLASSO_TOL = 1e-4
GLASSO_MAX_SWEEPS = 200


@dataclass
class CenteredData:
    """Column-centred data together with the removed column means."""

    values: np.ndarray
    centers: np.ndarray


def center(data) -> CenteredData:
    """Centre each column at its empirical mean."""
    Y = validate_data(data)
    c = Y.mean(axis=0)
    return CenteredData(values=Y - c, centers=c)


@dataclass
class PenalizedFit:
    """Penalised mixture estimate; precisions are the model parameters here."""

    K: int
    lam: float
    rho: float
    proportions: np.ndarray  # (K,)
    means: np.ndarray  # (K, p), exact zeros where shrunk
    precisions: np.ndarray  # (K, p, p)
    loglik: float
    penalized_loglik: float
    n_iter: int
    converged: bool
    responsibilities: np.ndarray | None = None
    trace: tuple = ()


def _coerce_values(data) -> np.ndarray:
    if isinstance(data, CenteredData):
        return data.values
    return validate_data(data)


def _chol_stack(thetas: np.ndarray) -> list[np.ndarray]:
    return [np.linalg.cholesky(thetas[k]) for k in range(thetas.shape[0])]


def _estep_precision(Y, pi, means, thetas):
    """Responsibilities and loglik with component precisions as parameters."""
    n, p = Y.shape
    K = pi.size
    logp = np.empty((n, K))
    for k in range(K):
        L = np.linalg.cholesky(thetas[k])
        Z = (Y - means[k]) @ L
        logp[:, k] = (
            np.log(pi[k])
            - 0.5 * p * LOG_2PI
            + np.log(np.diag(L)).sum()
            - 0.5 * (Z * Z).sum(axis=1)
        )
    m = logp.max(axis=1, keepdims=True)
    lse = m + np.log(np.exp(logp - m).sum(axis=1, keepdims=True))
    return np.exp(logp - lse), float(lse.sum())


def _penalty(means, thetas, lam, rho) -> float:
    pen = lam * np.abs(means).sum()
    if rho > 0.0:
        off = np.abs(thetas).sum() - np.abs(np.trace(thetas, axis1=1, axis2=2)).sum()
        pen += rho * off
    return float(pen)


def mean_update(resp, data, precisions, lam, means) -> np.ndarray:
    """One cyclic coordinate pass of the penalised mean update.

    For component k and coordinate j the stationarity score is

        G_kj = [Theta_k (A_k - n_k mu_k)]_j + n_k Theta_k[j, j] mu_kj,

    with A_k the responsibility-weighted data sums; the new coordinate is the
    soft threshold of G_kj at lam divided by n_k Theta_k[j, j], exactly zero
    when |G_kj| <= lam.  The residual vector Theta_k (A_k - n_k mu_k) is
    maintained incrementally so a full pass costs O(K p^2).
    """
    Y = _coerce_values(data)
    t = np.asarray(resp, dtype=float)
    mu = np.asarray(means, dtype=float).copy()
    K, p = mu.shape
    nk = t.sum(axis=0)
    A = t.T @ Y
    for k in range(K):
        theta = precisions[k]
        r = theta @ (A[k] - nk[k] * mu[k])
        for j in range(p):
            g = r[j] + nk[k] * theta[j, j] * mu[k, j]
            if abs(g) <= lam:
                new = 0.0
            else:
                new = (g - np.sign(g) * lam) / (nk[k] * theta[j, j])
            d = new - mu[k, j]
            if d != 0.0:
                r -= theta[:, j] * (nk[k] * d)
                mu[k, j] = new
    return mu


def _weighted_scatters(Y, t, means, nk):
    K, p = means.shape
    scat = np.empty((K, p, p))
    for k in range(K):
        dev = Y - means[k]
        scat[k] = (t[:, k, None] * dev).T @ dev / nk[k]
    return scat


def _update_precisions(scatters, thetas, nk, rho, tol, max_sweeps, warm_states):
    """Per-component graphical lasso, keeping the old precision when it scores better.

    The solve tolerance scales with the scatter diagonal so the KKT gate has
    covariance units; an uncertified solve leaves the previous precision in
    place, which the improvement guard below makes safe.
    """
    K = scatters.shape[0]
    new_thetas = thetas.copy()
    for k in range(K):
        rho_k = 2.0 * rho / nk[k]
        scale = float(np.diag(scatters[k]).mean())
        try:
            est = glasso_solve(
                GlassoProblem(scatters[k], rho_k, tol=tol * scale, max_sweeps=max_sweeps),
                warm=warm_states[k],
            )
        except NotConverged:
            warm_states[k] = None
            continue
        warm_states[k] = est
        if glasso_objective(scatters[k], est.theta, rho_k) <= glasso_objective(
            scatters[k], thetas[k], rho_k
        ):
            new_thetas[k] = est.theta
    return new_thetas


def _init_params(Y, K, lam, rho, init, tol, max_iter):
    form = MixtureForm.FULL_FREE if (lam == 0.0 and rho == 0.0) else MixtureForm.DIAGONAL_FREE
    base = em_fit(Y, K, form, init=init, tol=tol, max_iter=max_iter)
    thetas = np.empty_like(base.covariances)
    for k in range(K):
        if form is MixtureForm.DIAGONAL_FREE:
            thetas[k] = np.diag(1.0 / np.diag(base.covariances[k]))
        else:
            c, low = cho_factor(base.covariances[k], lower=True)
            thetas[k] = cho_solve((c, low), np.eye(Y.shape[1]))
            thetas[k] = 0.5 * (thetas[k] + thetas[k].T)
    return base.proportions.copy(), base.means.copy(), thetas


def penalized_em(data, K: int, lam: float, rho: float, init: InitPolicy | None = None,
                 tol: float = 1e-6, max_iter: int = 300,
                 warm: PenalizedFit | None = None,
                 glasso_tol: float = GLASSO_TOL,
                 glasso_max_sweeps: int = GLASSO_MAX_SWEEPS) -> PenalizedFit:
    """Penalised mixture fit on centred data.

    Parameters
    ----------
    data : CenteredData or array_like
        Centred observations (pass the output of :func:`center`).
    K : int
        Number of components.
    lam, rho : float
        Mean and precision penalties, both >= 0.  With both zero this reduces
        to the unconstrained full-covariance mixture MLE.
    warm : PenalizedFit, optional
        Parameters of a fit at a nearby penalty pair; used as the starting
        point instead of a fresh EM initialisation.

    Raises
    ------
    EmptyComponent
        A component lost its responsibility mass and, with a warm start, no
        reinitialisation is attempted.
    """
    Y = _coerce_values(data)
    n, p = Y.shape
    if lam < 0.0 or rho < 0.0:
        raise DataError("penalties must be non-negative")
    init = init or InitPolicy()
    eps_empty = EMPTY_COMP_REL * n
    attempts = 1 if warm is not None else init.retries
    last_exc: EmptyComponent | None = None
    for attempt in range(attempts):
        if warm is not None:
            pi = warm.proportions.copy()
            mu = warm.means.copy()
            thetas = warm.precisions.copy()
        else:
            shifted = init if attempt == 0 else InitPolicy(
                seed=init.seed + 1 + attempt, restarts=init.restarts,
                retries=init.retries, kmeans_iters=init.kmeans_iters)
            pi, mu, thetas = _init_params(Y, K, lam, rho, shifted, tol, max_iter)
        try:
            return _penalized_loop(Y, K, lam, rho, pi, mu, thetas, tol, max_iter,
                                   eps_empty, glasso_tol, glasso_max_sweeps)
        except EmptyComponent as exc:
            last_exc = exc
            if warm is not None:
                raise
    raise last_exc if last_exc is not None else EmptyComponent("no successful attempt")


def _penalized_loop(Y, K, lam, rho, pi, mu, thetas, tol, max_iter, eps_empty,
                    glasso_tol, glasso_max_sweeps):
    n = Y.shape[0]
    warm_states = [None] * K
    trace = []
    prev = None
    converged = False
    t, ll = _estep_precision(Y, pi, mu, thetas)
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        L = ll - _penalty(mu, thetas, lam, rho)
        trace.append(L)
        if prev is not None and abs(L - prev) <= tol * (1.0 + abs(prev)):
            converged = True
            break
        prev = L
        nk = t.sum(axis=0)
        if nk.min() < eps_empty:
            raise EmptyComponent(f"component mass fell below {eps_empty:.2e}")
        pi = nk / n
        mu = mean_update(t, Y, thetas, lam, mu)
        scat = _weighted_scatters(Y, t, mu, nk)
        thetas = _update_precisions(scat, thetas, nk, rho, glasso_tol,
                                    glasso_max_sweeps, warm_states)
        t, ll = _estep_precision(Y, pi, mu, thetas)
    L = ll - _penalty(mu, thetas, lam, rho)
    return PenalizedFit(
        K=K,
        lam=lam,
        rho=rho,
        proportions=pi,
        means=mu,
        precisions=thetas,
        loglik=ll,
        penalized_loglik=L,
        n_iter=n_iter,
        converged=converged,
        responsibilities=t,
        trace=tuple(trace),
    )


def penalized_classif_fit(data, labels, lam: float, rho: float, tol: float = 1e-6,
                          max_cycles: int = 100, warm: PenalizedFit | None = None,
                          glasso_tol: float = GLASSO_TOL,
                          glasso_max_sweeps: int = GLASSO_MAX_SWEEPS) -> PenalizedFit:
    """Supervised analogue of :func:`penalized_em` with known class indicators.

    Proportions are the exact class frequencies and stay fixed; mean and
    precision updates alternate until the penalised complete-data log
    likelihood stabilises (at most max_cycles alternations).
    """
    Y = _coerce_values(data)
    n, p = Y.shape
    if lam < 0.0 or rho < 0.0:
        raise DataError("penalties must be non-negative")
    z, K = validate_labels(labels, n)
    t = np.zeros((n, K))
    t[np.arange(n), z - 1] = 1.0
    nk = t.sum(axis=0)
    pi = nk / n
    if warm is not None:
        mu = warm.means.copy()
        thetas = warm.precisions.copy()
    else:
        mu = (t.T @ Y) / nk[:, None]
        thetas = np.empty((K, p, p))
        for k in range(K):
            v = Y[z == k + 1].var(axis=0)
            v = np.maximum(v, 1e-6 * Y.var(axis=0).mean())
            thetas[k] = np.diag(1.0 / v)
    warm_states = [None] * K
    trace = []
    prev = None
    converged = False
    n_iter = 0

    def objective(mu_, thetas_):
        # complete-data loglik: each point scored in its own class only
        ll_ = float((nk * np.log(pi)).sum())
        for k in range(K):
            L = np.linalg.cholesky(thetas_[k])
            Z = (Y[z == k + 1] - mu_[k]) @ L
            ll_ += float(
                (z == k + 1).sum() * (-0.5 * p * LOG_2PI + np.log(np.diag(L)).sum())
                - 0.5 * (Z * Z).sum()
            )
        return ll_

    ll = objective(mu, thetas)
    for n_iter in range(1, max_cycles + 1):
        L = ll - _penalty(mu, thetas, lam, rho)
        trace.append(L)
        if prev is not None and abs(L - prev) <= tol * (1.0 + abs(prev)):
            converged = True
            break
        prev = L
        mu = mean_update(t, Y, thetas, lam, mu)
        scat = _weighted_scatters(Y, t, mu, nk)
        thetas = _update_precisions(scat, thetas, nk, rho, glasso_tol,
                                    glasso_max_sweeps, warm_states)
        ll = objective(mu, thetas)
    L = ll - _penalty(mu, thetas, lam, rho)
    return PenalizedFit(
        K=K,
        lam=lam,
        rho=rho,
        proportions=pi,
        means=mu,
        precisions=thetas,
        loglik=ll,
        penalized_loglik=L,
        n_iter=n_iter,
        converged=converged,
        responsibilities=t,
        trace=tuple(trace),
    )
