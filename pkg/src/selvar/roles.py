"""Variable role selection for model-based clustering and classification.

Variables are split into a clustering block S, a redundant block U whose
variables are linear regressions on a subset R of S, and an independent
block W.  A candidate split is scored by the sum of three BIC terms
(clustering mixture on S, multivariate regression of U on R, independent
Gaussian on W); all BIC terms are of the form 2 * loglik - nparams * ln n,
so larger is better and the overall criterion is maximised.

The search is greedy: variables enter S in ranking order while the BIC
difference against "explained by regression on S" stays positive, W is
built scanning the ranking backwards, and U collects the remainder with R
chosen by backward stepwise regression.  An exhaustive oracle over all role
assignments is provided for small dimensions to audit the greedy search.

Variable indices are 1-based everywhere in this module's public API.
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DegenerateCovariance,
    NumericalError,
    RankDeficient,
    RefusesLargeP,
    SelectionFailed,
)
from .gaussmix import (
    LOG_2PI,
    IndepCovForm,
    IndepModel,
    InitPolicy,
    MixtureFit,
    MixtureForm,
    em_fit,
    equivalent_form,
    fit_indep,
    fit_labeled,
    validate_data,
    validate_labels,
)
from .metrics import map_classify
from .penem import center
from .ranking import (
    RegularizationGrid,
    VariableRanking,
    compute_ranking,
    compute_ranking_classif,
    default_grids,
)


class RegCovForm(Enum):
    """Covariance structure of the regression noise for the redundant block."""

    SPHERICAL = "spherical"
    DIAGONAL = "diagonal"
    FULL = "full"


def reg_cov_param_count(u: int, form: RegCovForm) -> int:
    if form is RegCovForm.SPHERICAL:
        return 1
    if form is RegCovForm.DIAGONAL:
        return u
    return u * (u + 1) // 2


@dataclass(frozen=True)
class SRUWPartition:
    """Roles of the variables; every index set is 1-based.

    S holds the clustering variables, U the redundant ones (regressed on the
    subset R of S), W the independent ones.  U and R are empty together.
    """

    S: frozenset
    R: frozenset
    U: frozenset
    W: frozenset

    def __post_init__(self):
        if not self.R <= self.S:
            raise DataError("R must be a subset of S")
        if bool(self.U) != bool(self.R):
            raise DataError("U and R must be empty or non-empty together")
        for a, b in (("S", "U"), ("S", "W"), ("U", "W")):
            if getattr(self, a) & getattr(self, b):
                raise DataError(f"{a} and {b} overlap")

    def check_covers(self, p: int) -> None:
        if self.S | self.U | self.W != frozenset(range(1, p + 1)):
            raise DataError(f"partition does not cover variables 1..{p}")


@dataclass
class RegressionFit:
    """Multivariate linear regression with a structured noise covariance."""

    targets: tuple
    predictors: tuple
    intercept: np.ndarray  # (u,)
    coefs: np.ndarray  # (r, u)
    cov: np.ndarray  # (u, u)
    form: RegCovForm
    loglik: float
    nparams: int


@dataclass(frozen=True)
class CritRow:
    """One scored (K, covariance form, regression form, independent form) combination."""

    K: int
    form: MixtureForm
    reg_form: RegCovForm
    indep_form: IndepCovForm
    S: tuple
    R: tuple
    U: tuple
    W: tuple
    bic_clust: float
    bic_reg: float
    bic_indep: float
    crit: float
    nparams: int


@dataclass
class SelectionResult:
    """Best model over the scanned grid plus the full score table."""

    K: int
    form: MixtureForm
    reg_form: RegCovForm | None
    indep_form: IndepCovForm | None
    partition: SRUWPartition
    crit: float
    assignment: np.ndarray  # (n,), MAP component labels, all ones when S is empty
    mixture: MixtureFit | None
    regression: RegressionFit | None
    indep: IndepModel | None
    table: tuple
    rankings: dict
    failures: tuple
    no_structure: bool
    supervised: bool = False


# ---------------------------------------------------------------------------
# Regression block
# ---------------------------------------------------------------------------


def fit_regression(targets_data, predictors_data, form: RegCovForm,
                   targets: tuple = (), predictors: tuple = ()) -> RegressionFit:
    """Gaussian MLE of a multivariate regression with structured noise.

    predictors_data may be None or have zero columns for an intercept-only
    model.  Raises RankDeficient when the design matrix loses column rank and
    DegenerateCovariance when the residual covariance is not usable.
    """
    Yt = np.asarray(targets_data, dtype=float)
    if Yt.ndim == 1:
        Yt = Yt[:, None]
    n, u = Yt.shape
    if predictors_data is None:
        Xp = np.empty((n, 0))
    else:
        Xp = np.asarray(predictors_data, dtype=float)
        if Xp.ndim == 1:
            Xp = Xp[:, None]
    r = Xp.shape[1]
    X = np.column_stack([np.ones(n), Xp])
    coef, _, rank, _ = np.linalg.lstsq(X, Yt, rcond=None)
    if rank < r + 1:
        raise RankDeficient(f"design matrix has rank {rank} < {r + 1}")
    E = Yt - X @ coef
    M = E.T @ E / n
    if form is RegCovForm.SPHERICAL:
        s2 = float(np.trace(M)) / u
        if s2 <= 0.0:
            raise DegenerateCovariance("regression residual variance collapsed")
        cov = s2 * np.eye(u)
        logdet = u * np.log(s2)
    elif form is RegCovForm.DIAGONAL:
        d = np.diag(M).copy()
        if d.min() <= 0.0:
            raise DegenerateCovariance("regression residual variance collapsed")
        cov = np.diag(d)
        logdet = float(np.log(d).sum())
    else:
        cov = 0.5 * (M + M.T)
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise DegenerateCovariance("regression residual covariance is singular") from exc
        logdet = 2.0 * float(np.log(np.diag(chol)).sum())
    ll = -0.5 * n * (u * LOG_2PI + logdet + u)
    return RegressionFit(
        targets=tuple(targets),
        predictors=tuple(predictors),
        intercept=coef[0],
        coefs=coef[1:],
        cov=cov,
        form=form,
        loglik=float(ll),
        nparams=u * (r + 1) + reg_cov_param_count(u, form),
    )


def bic_reg(targets_data, predictors_data, form: RegCovForm = RegCovForm.FULL) -> float:
    """BIC of the regression block (larger is better)."""
    fit = fit_regression(targets_data, predictors_data, form)
    n = np.asarray(targets_data).shape[0]
    return 2.0 * fit.loglik - fit.nparams * np.log(n)


def backward_stepwise(data, targets, candidates, form: RegCovForm = RegCovForm.FULL) -> frozenset:
    """Backward elimination of regression predictors by BIC.

    Starting from all candidate predictors of the target variables, the
    predictor whose removal improves the BIC most is dropped until no removal
    helps.  An empty result means the targets are better modelled without any
    of the candidates.  Indices are 1-based columns of data.
    """
    Y = validate_data(data)
    ev = _Evaluator(Y, InitPolicy(), 1e-6, 300)
    return ev.stepwise(tuple(sorted(targets)), tuple(sorted(candidates)), form)


# ---------------------------------------------------------------------------
# Cached criterion evaluator
# ---------------------------------------------------------------------------


class _Evaluator:
    """Caches every BIC block so scans and the oracle score models identically."""

    def __init__(self, Y: np.ndarray, init: InitPolicy, em_tol: float, em_max_iter: int,
                 labels: np.ndarray | None = None):
        self.Y = Y
        self.n, self.p = Y.shape
        self.init = init
        self.em_tol = em_tol
        self.em_max_iter = em_max_iter
        self.labels = labels
        self.logn = np.log(self.n)
        self._clust: dict = {}
        self._reg: dict = {}
        self._indep: dict = {}
        self._step: dict = {}
        self._label_bic_value: float | None = None

    def cols(self, idx) -> np.ndarray:
        return self.Y[:, [j - 1 for j in idx]]

    # clustering / class-conditional block ---------------------------------
    def clust_fit(self, S: tuple, K: int, m: MixtureForm) -> MixtureFit:
        key = (S, K, equivalent_form(m, len(S)))
        if key not in self._clust:
            sub = self.cols(S)
            if self.labels is None:
                fit = em_fit(sub, K, key[2], init=self.init,
                             tol=self.em_tol, max_iter=self.em_max_iter)
            else:
                fit = fit_labeled(sub, self.labels, key[2])
            self._clust[key] = fit
        return self._clust[key]

    def bic_clust(self, S, K: int, m: MixtureForm) -> float:
        S = tuple(sorted(S))
        if not S:
            # the empty clustering block scores 0, except with known labels,
            # where the multinomial label model exists independently of S and
            # its BIC must appear exactly once in every criterion value
            return self._label_bic()
        fit = self.clust_fit(S, K, m)
        return 2.0 * fit.loglik - fit.nparams * self.logn

    def _label_bic(self) -> float:
        if self.labels is None:
            return 0.0
        if self._label_bic_value is None:
            counts = np.bincount(self.labels)[1:]
            counts = counts[counts > 0]
            ll = float((counts * np.log(counts / self.n)).sum())
            self._label_bic_value = 2.0 * ll - (counts.size - 1) * self.logn
        return self._label_bic_value

    # regression block ------------------------------------------------------
    def reg_fit(self, targets: tuple, predictors: tuple, form: RegCovForm) -> RegressionFit:
        key = (targets, predictors, form)
        if key not in self._reg:
            Xp = self.cols(predictors) if predictors else None
            self._reg[key] = fit_regression(self.cols(targets), Xp, form,
                                            targets=targets, predictors=predictors)
        return self._reg[key]

    def bic_reg(self, targets, predictors, form: RegCovForm) -> float:
        targets = tuple(sorted(targets))
        predictors = tuple(sorted(predictors))
        fit = self.reg_fit(targets, predictors, form)
        return 2.0 * fit.loglik - fit.nparams * self.logn

    # independent block -----------------------------------------------------
    def indep_fit(self, W: tuple, ell: IndepCovForm) -> IndepModel:
        key = (W, ell)
        if key not in self._indep:
            self._indep[key] = fit_indep(self.cols(W), ell)
        return self._indep[key]

    def bic_indep(self, W, ell: IndepCovForm) -> float:
        W = tuple(sorted(W))
        if not W:
            return 0.0
        fit = self.indep_fit(W, ell)
        return 2.0 * fit.loglik - fit.nparams * self.logn

    # stepwise regression search ---------------------------------------------
    def stepwise(self, targets: tuple, candidates: tuple, form: RegCovForm) -> frozenset:
        """Backward elimination of predictors by BIC; empty set means independence."""
        targets = tuple(sorted(targets))
        candidates = tuple(sorted(candidates))
        key = (targets, candidates, form)
        if key in self._step:
            return self._step[key]
        current = list(candidates)
        best = self.bic_reg(targets, tuple(current), form)
        while current:
            trial = []
            for v in current:
                reduced = tuple(x for x in current if x != v)
                trial.append((self.bic_reg(targets, reduced, form), v))
            # drop the predictor whose removal helps most; prefer the larger
            # index when removals tie
            b, v = max(trial)
            if b > best:
                current.remove(v)
                best = b
            else:
                break
        result = frozenset(current)
        self._step[key] = result
        return result


# ---------------------------------------------------------------------------
# Greedy role scans
# ---------------------------------------------------------------------------


def _bic_diff(ev: _Evaluator, S: frozenset, j: int, K: int, m: MixtureForm) -> float:
    """Gain of adding j to the clustering block versus regressing it on S."""
    Rj = ev.stepwise((j,), tuple(sorted(S)), RegCovForm.FULL)
    with_j = ev.bic_clust(S | {j}, K, m)
    without = ev.bic_clust(S, K, m)
    return with_j - without - ev.bic_reg((j,), tuple(sorted(Rj)), RegCovForm.FULL)


def bic_diff(data, S, j: int, K: int, m: MixtureForm, init: InitPolicy | None = None,
             labels=None) -> float:
    """Standalone BIC difference used by the S scan (positive favours clustering)."""
    Y = validate_data(data)
    z = validate_labels(labels, Y.shape[0])[0] if labels is not None else None
    ev = _Evaluator(Y, init or InitPolicy(), 1e-6, 300, labels=z)
    return _bic_diff(ev, frozenset(S), j, K, m)


def _select_S(ev: _Evaluator, ranking: VariableRanking, K: int, m: MixtureForm,
              c: int) -> frozenset:
    S: list = []
    misses = 0
    for j in ranking.order:
        if _bic_diff(ev, frozenset(S), j, K, m) > 0.0:
            S.append(j)
            misses = 0
        else:
            misses += 1
            if misses >= c:
                break
    return frozenset(S)


def _select_W(ev: _Evaluator, ranking: VariableRanking, S: frozenset, c: int) -> frozenset:
    W: list = []
    misses = 0
    preds = tuple(sorted(S))
    for j in reversed(ranking.order):
        if j in S:
            continue
        if not ev.stepwise((j,), preds, RegCovForm.FULL):
            W.append(j)
            misses = 0
        else:
            misses += 1
            if misses >= c:
                break
    return frozenset(W)


def _finalize(ev: _Evaluator, S: frozenset, W: frozenset, r: RegCovForm, p: int):
    """Assemble the partition; U variables that regress on nothing join W."""
    U = frozenset(range(1, p + 1)) - S - W
    warning = None
    if not U:
        part = SRUWPartition(S=S, R=frozenset(), U=frozenset(), W=frozenset(range(1, p + 1)) - S)
        return part, warning
    R = ev.stepwise(tuple(sorted(U)), tuple(sorted(S)), r)
    if not R:
        warning = (f"variables {sorted(U)} had no retained predictors under "
                   f"{r.value} noise; reassigned to the independent block")
        part = SRUWPartition(S=S, R=frozenset(), U=frozenset(), W=W | U)
        return part, warning
    part = SRUWPartition(S=S, R=R, U=U, W=W)
    return part, warning


def select_S(data, ranking: VariableRanking, K: int, m: MixtureForm, c: int = 3,
             init: InitPolicy | None = None, labels=None) -> frozenset:
    """Greedy construction of the clustering block along the ranking order."""
    Y = validate_data(data)
    z = validate_labels(labels, Y.shape[0])[0] if labels is not None else None
    ev = _Evaluator(Y, init or InitPolicy(), 1e-6, 300, labels=z)
    return _select_S(ev, ranking, K, m, c)


def select_W(data, ranking: VariableRanking, S, c: int = 3) -> frozenset:
    """Greedy construction of the independent block along the reversed ranking."""
    Y = validate_data(data)
    ev = _Evaluator(Y, InitPolicy(), 1e-6, 300)
    return _select_W(ev, ranking, frozenset(S), c)


def finalize_partition(data, S, W, r: RegCovForm = RegCovForm.FULL):
    """Complete a partition from its S and W blocks; returns (partition, warning)."""
    Y = validate_data(data)
    ev = _Evaluator(Y, InitPolicy(), 1e-6, 300)
    return _finalize(ev, frozenset(S), frozenset(W), r, Y.shape[1])


# ---------------------------------------------------------------------------
# Full model selection
# ---------------------------------------------------------------------------

ALL_FORMS = tuple(MixtureForm)
ALL_REG_FORMS = tuple(RegCovForm)
ALL_INDEP_FORMS = tuple(IndepCovForm)


def _row_for(ev: _Evaluator, K: int, m: MixtureForm, part: SRUWPartition,
             r: RegCovForm, ell: IndepCovForm) -> CritRow:
    S = tuple(sorted(part.S))
    U = tuple(sorted(part.U))
    R = tuple(sorted(part.R))
    W = tuple(sorted(part.W))
    t_clust = ev.bic_clust(S, K, m) if S else 0.0
    t_reg = ev.bic_reg(U, R, r) if U else 0.0
    t_indep = ev.bic_indep(W, ell) if W else 0.0
    nparams = 0
    if S:
        nparams += ev.clust_fit(S, K, m).nparams
    if U:
        nparams += ev.reg_fit(U, R, r).nparams
    if W:
        nparams += ev.indep_fit(W, ell).nparams
    return CritRow(K=K, form=m, reg_form=r, indep_form=ell, S=S, R=R, U=U, W=W,
                   bic_clust=t_clust, bic_reg=t_reg, bic_indep=t_indep,
                   crit=t_clust + t_reg + t_indep, nparams=nparams)


def _row_sort_key(row: CritRow):
    return (
        -row.crit,
        row.K,
        row.nparams,
        ALL_FORMS.index(row.form),
        ALL_REG_FORMS.index(row.reg_form),
        ALL_INDEP_FORMS.index(row.indep_form),
    )


def _compute_rankings(cdata, K_values, grid, init, rank_tol, rank_max_iter, threads,
                      labels=None):
    """Per-K variable rankings, optionally in a thread pool; failures recorded."""
    rankings: dict = {}
    failures: list = []

    def job(K):
        if labels is None:
            return compute_ranking(cdata, K, grid=grid, init=init,
                                   em_tol=rank_tol, em_max_iter=rank_max_iter)
        return compute_ranking_classif(cdata, labels, grid=grid,
                                       em_tol=rank_tol, em_max_iter=rank_max_iter)

    if threads > 1 and len(K_values) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futs = {K: pool.submit(job, K) for K in K_values}
            for K in K_values:
                try:
                    rankings[K] = futs[K].result()
                except NumericalError as exc:
                    failures.append(f"ranking K={K}: {type(exc).__name__}: {exc}")
    else:
        for K in K_values:
            try:
                rankings[K] = job(K)
            except NumericalError as exc:
                failures.append(f"ranking K={K}: {type(exc).__name__}: {exc}")
    return rankings, failures


def _pick_best(rows: list, failures: list) -> CritRow:
    if not rows:
        raise SelectionFailed(
            "no candidate model could be scored; failures: " + "; ".join(failures or ["none"])
        )
    return min(rows, key=_row_sort_key)


def _build_result(ev: _Evaluator, best: CritRow, rows, rankings, failures,
                  supervised: bool) -> SelectionResult:
    part = SRUWPartition(S=frozenset(best.S), R=frozenset(best.R),
                         U=frozenset(best.U), W=frozenset(best.W))
    mixture = ev.clust_fit(best.S, best.K, best.form) if best.S else None
    regression = ev.reg_fit(best.U, best.R, best.reg_form) if best.U else None
    indep = ev.indep_fit(best.W, best.indep_form) if best.W else None
    if mixture is not None:
        assignment = mixture.responsibilities.argmax(axis=1) + 1
    else:
        assignment = np.ones(ev.n, dtype=int)
    return SelectionResult(
        K=best.K,
        form=best.form,
        reg_form=best.reg_form if best.U else None,
        indep_form=best.indep_form if best.W else None,
        partition=part,
        crit=best.crit,
        assignment=assignment,
        mixture=mixture,
        regression=regression,
        indep=indep,
        table=tuple(rows),
        rankings=rankings,
        failures=tuple(failures),
        no_structure=not best.S,
        supervised=supervised,
    )


def select_model(data, K_range=(2, 3, 4, 5, 6), forms=ALL_FORMS,
                 reg_forms=ALL_REG_FORMS, indep_forms=ALL_INDEP_FORMS, c: int = 3,
                 grid: RegularizationGrid | None = None, n_lambda: int = 5,
                 n_rho: int = 3, init: InitPolicy | None = None, threads: int = 1,
                 em_tol: float = 1e-6, em_max_iter: int = 300,
                 rank_tol: float = 1e-5, rank_max_iter: int = 30) -> SelectionResult:
    """Full clustering pipeline: rank variables, scan roles, maximise the criterion.

    For every K a variable ranking is computed from penalised mixture fits
    over the penalty grid; for every (K, covariance form) the S and W scans
    run once, and each (regression form, independent form) pair contributes
    one scored row.  Combinations that fail numerically are skipped and
    reported in the result.  Ties in the criterion go to the smaller K, then
    fewer parameters, then the declaration order of the forms.
    """
    Y = validate_data(data)
    K_values = sorted(set(int(K) for K in K_range))
    if not K_values or K_values[0] < 1:
        raise ConfigError("K_range must contain positive integers")
    if not forms or not reg_forms or not indep_forms:
        raise ConfigError("form sets must be non-empty")
    if c < 1:
        raise ConfigError("c must be at least 1")
    init = init or InitPolicy()
    cdata = center(Y)
    if grid is None:
        grid = default_grids(cdata, n_lambda=n_lambda, n_rho=n_rho)
    rankings, failures = _compute_rankings(cdata, K_values, grid, init,
                                           rank_tol, rank_max_iter, threads)
    ev = _Evaluator(Y, init, em_tol, em_max_iter)
    rows: list = []
    for K in K_values:
        if K not in rankings:
            continue
        for m in forms:
            try:
                S = _select_S(ev, rankings[K], K, m, c)
                W = _select_W(ev, rankings[K], S, c)
                for r in reg_forms:
                    part, warning = _finalize(ev, S, W, r, ev.p)
                    if warning is not None:
                        failures.append(f"K={K} m={m.value} r={r.value}: {warning}")
                    for ell in indep_forms:
                        rows.append(_row_for(ev, K, m, part, r, ell))
            except NumericalError as exc:
                failures.append(f"K={K} m={m.value}: {type(exc).__name__}: {exc}")
    best = _pick_best(rows, failures)
    return _build_result(ev, best, rows, rankings, failures, supervised=False)


def select_model_classif(data, labels, forms=ALL_FORMS, reg_forms=ALL_REG_FORMS,
                         indep_forms=ALL_INDEP_FORMS, c: int = 3,
                         grid: RegularizationGrid | None = None, n_lambda: int = 5,
                         n_rho: int = 3, threads: int = 1,
                         rank_tol: float = 1e-5, rank_max_iter: int = 30) -> SelectionResult:
    """Supervised pipeline: class-conditional fits at the known number of classes."""
    Y = validate_data(data)
    z, K = validate_labels(labels, Y.shape[0])
    if not forms or not reg_forms or not indep_forms:
        raise ConfigError("form sets must be non-empty")
    if c < 1:
        raise ConfigError("c must be at least 1")
    cdata = center(Y)
    if grid is None:
        grid = default_grids(cdata, n_lambda=n_lambda, n_rho=n_rho)
    rankings, failures = _compute_rankings(cdata, [K], grid, InitPolicy(),
                                           rank_tol, rank_max_iter, threads, labels=z)
    ev = _Evaluator(Y, InitPolicy(), 1e-6, 300, labels=z)
    rows: list = []
    if K in rankings:
        for m in forms:
            try:
                S = _select_S(ev, rankings[K], K, m, c)
                W = _select_W(ev, rankings[K], S, c)
                for r in reg_forms:
                    part, warning = _finalize(ev, S, W, r, ev.p)
                    if warning is not None:
                        failures.append(f"m={m.value} r={r.value}: {warning}")
                    for ell in indep_forms:
                        rows.append(_row_for(ev, K, m, part, r, ell))
            except NumericalError as exc:
                failures.append(f"m={m.value}: {type(exc).__name__}: {exc}")
    best = _pick_best(rows, failures)
    result = _build_result(ev, best, rows, rankings, failures, supervised=True)
    result.assignment = z.copy()
    return result


def predict_classes(result: SelectionResult, data) -> np.ndarray:
    """MAP class labels for new data using only the clustering block.

    The regression and independent blocks have class-independent densities,
    so they cancel from the posterior and prediction needs only the S
    columns of the fitted class-conditional model.
    """
    Y = validate_data(data, min_rows=1)
    if result.mixture is None:
        return np.ones(Y.shape[0], dtype=int)
    S_idx = [j - 1 for j in sorted(result.partition.S)]
    if Y.shape[1] < max(S_idx) + 1:
        raise DataError("prediction data has fewer columns than the training data")
    fit = result.mixture
    return map_classify(fit.proportions, fit.means, fit.covariances, Y[:, S_idx])


# ---------------------------------------------------------------------------
# Exhaustive oracle for small p
# ---------------------------------------------------------------------------

MAX_ORACLE_P = 6


def exhaustive_oracle(data, K_range=(2, 3), forms=ALL_FORMS, reg_forms=ALL_REG_FORMS,
                      indep_forms=ALL_INDEP_FORMS, init: InitPolicy | None = None,
                      em_tol: float = 1e-6, em_max_iter: int = 300,
                      labels=None) -> SelectionResult:
    """Score every admissible role assignment; only feasible for p <= 6.

    Enumerates all ways to place each variable in S, U or W, every non-empty
    R subset of S when U is non-empty, and the full (K, form) grid, using the
    same cached BIC evaluators as the greedy pipeline.  The greedy result can
    therefore never score above this oracle on the same data.
    """
    Y = validate_data(data)
    n, p = Y.shape
    if p > MAX_ORACLE_P:
        raise RefusesLargeP(f"exhaustive search over {3 ** p} assignments refused (p={p})")
    z = validate_labels(labels, n)[0] if labels is not None else None
    if z is not None:
        K_values = [int(z.max())]
    else:
        K_values = sorted(set(int(K) for K in K_range))
        if not K_values or K_values[0] < 1:
            raise ConfigError("K_range must contain positive integers")
    ev = _Evaluator(Y, init or InitPolicy(), em_tol, em_max_iter, labels=z)
    rows: list = []
    failures: list = []
    variables = list(range(1, p + 1))
    for roles in itertools.product("SUW", repeat=p):
        S = frozenset(v for v, c_ in zip(variables, roles) if c_ == "S")
        U = frozenset(v for v, c_ in zip(variables, roles) if c_ == "U")
        W = frozenset(v for v, c_ in zip(variables, roles) if c_ == "W")
        if U and not S:
            continue
        if U:
            S_sorted = sorted(S)
            r_subsets = [
                frozenset(comb)
                for size in range(1, len(S_sorted) + 1)
                for comb in itertools.combinations(S_sorted, size)
            ]
        else:
            r_subsets = [frozenset()]
        for R in r_subsets:
            part = SRUWPartition(S=S, R=R, U=U, W=W)
            for K in K_values:
                for m in forms:
                    try:
                        for r in reg_forms:
                            for ell in indep_forms:
                                rows.append(_row_for(ev, K, m, part, r, ell))
                    except NumericalError as exc:
                        failures.append(
                            f"S={sorted(S)} R={sorted(R)} K={K} m={m.value}: {exc}"
                        )
    best = _pick_best(rows, failures)
    return _build_result(ev, best, [], {}, failures, supervised=z is not None)
