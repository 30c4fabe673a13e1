"""Graphical lasso with the l1 penalty applied to off-diagonal entries only.

Solves min over positive definite Theta of

    -log det Theta + tr(S Theta) + rho * sum_{u != v} |Theta_uv|

by block coordinate descent on the covariance estimate W (one lasso problem
per column), which is the standard W-update scheme.  The diagonal of W stays
pinned to diag(S) because the diagonal is not penalised.  Convergence is
certified by an exact KKT residual computed from the inverse of the
reconstructed precision matrix, never by the sweep-to-sweep change alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, DataError, DegenerateCovariance, NotConverged, SingularInput
from ._kernels import glasso_sweeps


@dataclass(frozen=True)
class GlassoProblem:
    """Empirical covariance, penalty level and solver tolerances."""

    S_emp: np.ndarray
    penalty: float
    tol: float = 1e-4
    max_sweeps: int = 200


@dataclass
class PrecisionEstimate:
    """Solution of a graphical lasso problem plus solver diagnostics.

    cov and coefs carry the solver state (working covariance and per-column
    lasso coefficients) so a later solve at a nearby penalty can warm start.
    """

    theta: np.ndarray
    cov: np.ndarray
    coefs: np.ndarray
    sweeps: int
    residual: float


def _check_cov_input(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DataError("covariance input must be a square matrix")
    if not np.all(np.isfinite(S)):
        raise DataError("covariance input contains non-finite values")
    scale = max(np.abs(S).max(), 1.0)
    if np.abs(S - S.T).max() > 1e-8 * scale:
        raise DataError("covariance input is not symmetric")
    S = 0.5 * (S + S.T)
    if np.any(np.diag(S) <= 0.0):
        raise SingularInput("covariance input needs a strictly positive diagonal")
    return S


def glasso_objective(S, theta, penalty: float) -> float:
    """Penalised negative log likelihood (up to constants); lower is better."""
    S = np.asarray(S, dtype=float)
    theta = np.asarray(theta, dtype=float)
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance("precision matrix is not positive definite") from exc
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    off = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(-logdet + (S * theta).sum() + penalty * off)


def kkt_residual(S, theta, penalty: float) -> float:
    """Max-norm violation of the stationarity conditions at theta.

    Zero entries are allowed subgradients anywhere in [-penalty, penalty], so
    they only contribute the amount by which |S - theta^-1| exceeds penalty.
    """
    S = np.asarray(S, dtype=float)
    theta = np.asarray(theta, dtype=float)
    q = S.shape[0]
    try:
        c, low = cho_factor(theta, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateCovariance("precision matrix is not positive definite") from exc
    w_impl = cho_solve((c, low), np.eye(q))
    diff = S - w_impl
    resid = float(np.abs(np.diag(diff)).max())
    off = ~np.eye(q, dtype=bool)
    nz = off & (theta != 0.0)
    if nz.any():
        resid = max(resid, float(np.abs(diff[nz] + penalty * np.sign(theta[nz])).max()))
    z = off & (theta == 0.0)
    if z.any():
        resid = max(resid, float(max(np.abs(diff[z]).max() - penalty, 0.0)))
    return resid


def _theta_from_state(S: np.ndarray, W: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Reconstruct the precision matrix from the working covariance and coefficients."""
    q = S.shape[0]
    theta = np.zeros((q, q))
    idx = np.arange(q)
    for j in range(q):
        rest = idx != j
        beta = B[rest, j]
        with np.errstate(over="ignore", invalid="ignore"):
            denom = W[j, j] - W[rest, j] @ beta
        if denom <= 0.0 or not np.isfinite(denom):
            raise NotConverged("working covariance lost positive definiteness", iterate=W)
        tjj = 1.0 / denom
        theta[j, j] = tjj
        theta[rest, j] = -beta * tjj
    theta = 0.5 * (theta + theta.T)
    # entries thresholded to zero from both column problems are exact zeros
    zero = (B == 0.0) & (B.T == 0.0) & ~np.eye(q, dtype=bool)
    theta[zero] = 0.0
    return theta


def _solve_unpenalised(S: np.ndarray) -> np.ndarray:
    try:
        c, low = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularInput("covariance is singular and the penalty is zero") from exc
    return cho_solve((c, low), np.eye(S.shape[0]))


def glasso_solve(problem: GlassoProblem, warm: PrecisionEstimate | None = None) -> PrecisionEstimate:
    """Solve one graphical lasso problem.

    Parameters
    ----------
    problem : GlassoProblem
        Covariance, penalty (must be >= 0) and tolerances.  tol bounds the
        exact KKT residual of the returned solution.
    warm : PrecisionEstimate, optional
        Solver state from a nearby problem of the same dimension.

    Raises
    ------
    SingularInput
        Zero penalty with a singular covariance, or a non-positive diagonal.
    NotConverged
        Sweep budget exhausted; carries the last iterate and its residual.
    """
    S = _check_cov_input(problem.S_emp)
    rho = float(problem.penalty)
    if rho < 0.0:
        raise ConfigError("penalty must be non-negative")
    if problem.tol <= 0.0 or problem.max_sweeps < 1:
        raise ConfigError("tol must be positive and max_sweeps at least 1")
    q = S.shape[0]
    if q == 1:
        theta = np.array([[1.0 / S[0, 0]]])
        return PrecisionEstimate(theta, S.copy(), np.zeros((1, 1)), 0, 0.0)
    if rho == 0.0:
        theta = _solve_unpenalised(S)
        theta = 0.5 * (theta + theta.T)
        resid = kkt_residual(S, theta, 0.0)
        return PrecisionEstimate(theta, S.copy(), -theta / np.diag(theta), 0, resid)
    off = ~np.eye(q, dtype=bool)
    if np.abs(S[off]).max() <= rho:
        # every off-diagonal stationarity condition holds with W = diag(S)
        theta = np.diag(1.0 / np.diag(S))
        W = np.diag(np.diag(S))
        return PrecisionEstimate(theta, W, np.zeros((q, q)), 0, 0.0)

    if warm is not None and warm.cov.shape == S.shape:
        W = warm.cov.copy()
        B = warm.coefs.copy()
        np.fill_diagonal(W, np.diag(S))
    else:
        # mild off-diagonal shrink keeps the initial W positive definite
        W = S * 0.95
        np.fill_diagonal(W, np.diag(S))
        B = np.zeros((q, q))
    est = _cd_attempt(S, rho, problem, W, B)
    if est is not None:
        return est
    # cold or stale starts can lose definiteness on badly conditioned inputs
    # at small penalties, where the solution is a perturbation of the plain
    # inverse; restarting the sweeps there is nearly always decisive
    try:
        theta0 = _solve_unpenalised(S)
    except SingularInput:
        theta0 = None
    if theta0 is not None:
        theta0 = 0.5 * (theta0 + theta0.T)
        B = -theta0 / np.diag(theta0)
        np.fill_diagonal(B, 0.0)
        est = _cd_attempt(S, rho, problem, S.copy(), B)
        if est is not None:
            return est
    # last resort: splitting iterations with a spectral X-update, immune to
    # definiteness loss, under the same KKT gate
    return _admm_solve(S, rho, problem)


def _cd_attempt(S: np.ndarray, rho: float, problem: GlassoProblem,
                W: np.ndarray, B: np.ndarray) -> PrecisionEstimate | None:
    """Run the W-update sweeps from a given state; None when not certified."""
    scale = float(np.diag(S).mean())
    w_tol = problem.tol * scale
    inner_tol = 0.01 * problem.tol * scale
    budget = problem.max_sweeps
    sweeps_used = 0
    # warm starts usually certify within a couple of sweeps, so check the KKT
    # residual early and grow the chunk only while progress is still cheap
    chunk = 2
    while budget > 0:
        asked = min(chunk, budget)
        used = int(glasso_sweeps(S, rho, W, B, asked, w_tol, inner_tol, 20000))
        sweeps_used += used
        budget -= used
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(B))):
            return None
        try:
            theta = _theta_from_state(S, W, B)
            resid = kkt_residual(S, theta, rho)
        except (NotConverged, DegenerateCovariance):
            return None
        if resid <= problem.tol:
            return PrecisionEstimate(theta, W, B, sweeps_used, resid)
        if used < asked:
            # sweeps stalled below w_tol without meeting the KKT gate
            w_tol *= 0.1
            inner_tol *= 0.1
        chunk = min(2 * chunk, 64)
    return None


def _admm_solve(S: np.ndarray, rho: float, problem: GlassoProblem) -> PrecisionEstimate:
    """Splitting method fallback for problems the sweep scheme cannot certify.

    Alternates an exact spectral solve of the smooth subproblem with
    off-diagonal soft thresholding; the thresholded iterate carries exact
    zeros and is checked against the same KKT residual gate.
    """
    q = S.shape[0]
    off = ~np.eye(q, dtype=bool)
    tau0 = float(np.diag(S).mean())
    tau = tau0
    X = np.diag(1.0 / np.diag(S))
    Z = X.copy()
    U = np.zeros((q, q))
    best: tuple[float, np.ndarray] | None = None
    max_iter = 10000
    for it in range(1, max_iter + 1):
        d, V = np.linalg.eigh(tau * (Z - U) - S)
        x_eig = (d + np.sqrt(d * d + 4.0 * tau)) / (2.0 * tau)
        X = (V * x_eig) @ V.T
        X = 0.5 * (X + X.T)
        Z_old = Z
        Xr = 1.6 * X - 0.6 * Z_old  # over-relaxation speeds the convergence tail
        M = Xr + U
        Z = M.copy()
        Z[off] = np.sign(M[off]) * np.maximum(np.abs(M[off]) - rho / tau, 0.0)
        U = U + Xr - Z
        if it % 10 == 0:
            try:
                resid = kkt_residual(S, Z, rho)
            except DegenerateCovariance:
                resid = np.inf
            if resid <= problem.tol:
                with np.errstate(divide="ignore", invalid="ignore"):
                    coefs = -Z / np.diag(Z)
                np.fill_diagonal(coefs, 0.0)
                cov = np.linalg.inv(Z)
                return PrecisionEstimate(Z, 0.5 * (cov + cov.T), coefs, it, resid)
            if best is None or resid < best[0]:
                best = (resid, Z.copy())
        if it % 25 == 0:
            # residual balancing, applied sparingly and clamped so the
            # spectral step never overflows
            r_primal = float(np.linalg.norm(X - Z))
            s_dual = float(tau * np.linalg.norm(Z - Z_old))
            if r_primal > 10.0 * s_dual and tau < tau0 * 1e4:
                tau *= 2.0
                U /= 2.0
            elif s_dual > 10.0 * r_primal and tau > tau0 * 1e-4:
                tau /= 2.0
                U *= 2.0
    resid, theta = best if best is not None else (np.inf, Z)
    raise NotConverged(
        f"graphical lasso stopped after {max_iter} splitting iterations "
        f"with KKT residual {resid:.3e}",
        iterate=theta,
        residual=float(resid),
    )


def glasso_path(S, penalties, tol: float = 1e-4, max_sweeps: int = 200) -> list[PrecisionEstimate]:
    """Solve a sequence of problems on one covariance, warm starting along the path.

    Penalties must be non-negative and sorted ascending; sparsity of the
    returned precisions is then non-decreasing along the list.
    """
    pens = [float(r) for r in penalties]
    if not pens:
        raise ConfigError("penalty path is empty")
    if any(r < 0.0 for r in pens):
        raise ConfigError("penalties must be non-negative")
    if any(b < a for a, b in zip(pens, pens[1:])):
        raise ConfigError("penalties must be sorted ascending")
    out: list[PrecisionEstimate] = []
    warm = None
    for rho in pens:
        est = glasso_solve(GlassoProblem(S, rho, tol=tol, max_sweeps=max_sweeps), warm=warm)
        warm = est
        out.append(est)
    return out
