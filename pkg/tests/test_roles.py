"""Role assignment: regression block, scans, criterion and full selection."""

import numpy as np
import pytest

from selvar import (
    ConfigError,
    DataError,
    InitPolicy,
    MixtureForm,
    RefusesLargeP,
    RegCovForm,
    SRUWPartition,
    VariableRanking,
    backward_stepwise,
    bic_diff,
    bic_reg,
    exhaustive_oracle,
    finalize_partition,
    fit_regression,
    predict_classes,
    select_S,
    select_W,
    select_model,
    select_model_classif,
)
from selvar.ranking import rank_order
from conftest import two_blob_data


def sruw_data(rng, n=300, noise=2):
    """Variable 1 clusters, variable 2 regresses on it, the rest is noise."""
    labels = rng.integers(0, 2, n)
    y1 = labels * 7.0 + rng.normal(size=n)
    y2 = 1.5 + 2.0 * y1 + 0.5 * rng.normal(size=n)
    cols = [y1, y2] + [rng.normal(size=n) for _ in range(noise)]
    return np.column_stack(cols), labels + 1


# ---------------------------------------------------------------------------
# regression block
# ---------------------------------------------------------------------------


def test_fit_regression_matches_lstsq(rng):
    n, r, u = 120, 3, 2
    X = rng.normal(size=(n, r))
    B = rng.normal(size=(r, u))
    a = rng.normal(size=u)
    Yt = a + X @ B + 0.3 * rng.normal(size=(n, u))
    fit = fit_regression(Yt, X, RegCovForm.FULL)
    design = np.column_stack([np.ones(n), X])
    coef, *_ = np.linalg.lstsq(design, Yt, rcond=None)
    np.testing.assert_allclose(fit.intercept, coef[0], atol=1e-8)
    np.testing.assert_allclose(fit.coefs, coef[1:], atol=1e-8)
    resid = Yt - design @ coef
    np.testing.assert_allclose(fit.cov, resid.T @ resid / n, atol=1e-8)
    want_ll = -0.5 * n * (u * np.log(2 * np.pi) + np.linalg.slogdet(fit.cov)[1] + u)
    assert fit.loglik == pytest.approx(want_ll, rel=1e-10)


def test_fit_regression_intercept_only(rng):
    Yt = rng.normal(loc=2.0, size=(80, 2))
    fit = fit_regression(Yt, None, RegCovForm.DIAGONAL)
    np.testing.assert_allclose(fit.intercept, Yt.mean(axis=0), atol=1e-12)
    assert fit.coefs.shape == (0, 2)
    np.testing.assert_allclose(np.diag(fit.cov), Yt.var(axis=0), atol=1e-10)


def test_fit_regression_noise_forms_nest(rng):
    X = rng.normal(size=(100, 2))
    Yt = X @ rng.normal(size=(2, 3)) + rng.normal(size=(100, 3)) * [0.2, 1.0, 2.0]
    ll = {f: fit_regression(Yt, X, f).loglik for f in RegCovForm}
    assert ll[RegCovForm.FULL] >= ll[RegCovForm.DIAGONAL] - 1e-9
    assert ll[RegCovForm.DIAGONAL] >= ll[RegCovForm.SPHERICAL] - 1e-9


def test_bic_reg_consistency(rng):
    X = rng.normal(size=(90, 2))
    Yt = X @ np.array([[1.0], [-1.0]]) + 0.4 * rng.normal(size=(90, 1))
    fit = fit_regression(Yt, X, RegCovForm.FULL)
    want = 2.0 * fit.loglik - fit.nparams * np.log(90)
    assert bic_reg(Yt, X, RegCovForm.FULL) == pytest.approx(want, rel=1e-12)


def test_backward_stepwise_recovers_predictors(rng):
    n = 400
    X = rng.normal(size=(n, 4))
    target = 2.0 * X[:, 0] - 1.5 * X[:, 2] + 0.5 * rng.normal(size=n)
    data = np.column_stack([X, target])
    kept = backward_stepwise(data, targets=(5,), candidates=(1, 2, 3, 4))
    assert kept == frozenset({1, 3})


def test_backward_stepwise_drops_everything_for_noise(rng):
    n = 300
    data = rng.normal(size=(n, 4))
    kept = backward_stepwise(data, targets=(4,), candidates=(1, 2, 3))
    assert kept == frozenset()


# ---------------------------------------------------------------------------
# partition container
# ---------------------------------------------------------------------------


def test_partition_validators():
    part = SRUWPartition(S=frozenset({1}), R=frozenset({1}),
                         U=frozenset({2}), W=frozenset({3}))
    assert part.R <= part.S
    with pytest.raises(DataError):
        SRUWPartition(S=frozenset({1}), R=frozenset({2}),
                      U=frozenset({3}), W=frozenset())
    with pytest.raises(DataError):
        SRUWPartition(S=frozenset({1}), R=frozenset(),
                      U=frozenset({2}), W=frozenset())


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------


def test_bic_diff_sign_on_obvious_variables(rng):
    Y, _ = sruw_data(rng)
    # the bimodal variable should enter an empty S
    assert bic_diff(Y, (), 1, 2, MixtureForm.DIAGONAL_FREE) > 0.0
    # pure noise should not join it
    assert bic_diff(Y, (1,), 3, 2, MixtureForm.DIAGONAL_FREE) < 0.0


def test_select_S_and_W_scans(rng):
    Y, _ = sruw_data(rng)
    ranking = VariableRanking(
        K=2, scores=np.array([4, 3, 0, 0]), order=rank_order([4, 3, 0, 0]),
        grid_size=4,
    )
    S = select_S(Y, ranking, 2, MixtureForm.DIAGONAL_FREE)
    assert S == frozenset({1})
    W = select_W(Y, ranking, S)
    assert W == frozenset({3, 4})
    part, warning = finalize_partition(Y, S, W)
    assert warning is None
    assert part.U == frozenset({2}) and part.R == frozenset({1})


def test_patience_never_shrinks_S(rng):
    # a larger patience lets the scan look past more rejections, so the
    # accepted set can only grow; variable 6 clusters but is ranked behind
    # four noise variables and is only reached at large c
    n = 350
    z = rng.integers(0, 2, n)
    Y = np.column_stack(
        [z * 8.0 + rng.normal(size=n)]
        + [rng.normal(size=n) for _ in range(4)]
        + [z * 8.0 + rng.normal(size=n)]
    )
    ranking = VariableRanking(
        K=2, scores=np.array([6, 0, 0, 0, 0, 0]),
        order=rank_order([6, 0, 0, 0, 0, 0]), grid_size=6,
    )
    previous = frozenset()
    sizes = []
    for c in (1, 2, 5):
        S = select_S(Y, ranking, 2, MixtureForm.DIAGONAL_FREE, c=c)
        assert previous <= S
        previous = S
        sizes.append(len(S))
    # the scan must actually reach variable 6 once patience allows it
    assert 6 in previous and sizes[0] < sizes[-1]


def test_finalize_moves_unregressable_to_W(rng):
    # leftover variable is independent noise, so the stepwise keeps nothing
    Y = np.column_stack([
        rng.integers(0, 2, 300) * 6.0 + rng.normal(size=300),
        rng.normal(size=300),
        rng.normal(size=300),
    ])
    part, warning = finalize_partition(Y, S=(1,), W=(3,))
    assert part.U == frozenset()
    assert part.W == frozenset({2, 3})
    assert warning is not None


# ---------------------------------------------------------------------------
# full selection
# ---------------------------------------------------------------------------


def test_select_model_recovers_obvious_structure(rng):
    Y, _ = sruw_data(rng)
    result = select_model(Y, K_range=(2, 3), n_lambda=3, n_rho=2,
                          init=InitPolicy(seed=0))
    assert result.K == 2
    assert result.partition.S == frozenset({1})
    assert result.partition.U == frozenset({2})
    assert result.partition.R == frozenset({1})
    assert result.partition.W == frozenset({3, 4})
    assert not result.supervised
    # reported rows are internally consistent and the best one is the result
    for row in result.table:
        assert row.crit == pytest.approx(row.bic_clust + row.bic_reg + row.bic_indep)
    assert result.crit == pytest.approx(max(row.crit for row in result.table))
    assert not result.no_structure
    # one row per (K, form, reg form, indep form) unless a combination failed
    if not result.failures:
        assert len(result.table) == 2 * 6 * 3 * 2


def test_select_model_permutation_equivariance(rng):
    Y, _ = sruw_data(rng, n=300)
    perm = np.array([3, 0, 2, 1])
    res = select_model(Y, K_range=(2,), n_lambda=3, n_rho=2, init=InitPolicy(seed=0))
    res_p = select_model(Y[:, perm], K_range=(2,), n_lambda=3, n_rho=2,
                         init=InitPolicy(seed=0))
    back = {i + 1: int(perm[i]) + 1 for i in range(Y.shape[1])}
    assert frozenset(back[j] for j in res_p.partition.S) == res.partition.S
    assert frozenset(back[j] for j in res_p.partition.U) == res.partition.U
    assert frozenset(back[j] for j in res_p.partition.W) == res.partition.W
    assert res_p.K == res.K
    assert res_p.crit == pytest.approx(res.crit, rel=1e-9)


def test_select_model_flags_structureless_data(rng):
    Y = rng.normal(size=(250, 3))
    result = select_model(Y, K_range=(2,), n_lambda=3, n_rho=2,
                          init=InitPolicy(seed=1))
    assert result.no_structure
    assert result.partition.S == frozenset()


def test_selection_beats_or_matches_oracle(rng):
    Y, _ = sruw_data(rng, n=250, noise=1)
    sel = select_model(Y, K_range=(2,), n_lambda=3, n_rho=2, init=InitPolicy(seed=0))
    oracle = exhaustive_oracle(Y, K_range=(2,), init=InitPolicy(seed=0))
    assert sel.crit <= oracle.crit + 1e-6
    assert oracle.partition.S


def test_exhaustive_oracle_refuses_large_p(rng):
    Y = rng.normal(size=(50, 7))
    with pytest.raises(RefusesLargeP):
        exhaustive_oracle(Y)


def test_select_model_config_errors(rng):
    Y, _ = sruw_data(rng, n=60)
    with pytest.raises(ConfigError):
        select_model(Y, K_range=())
    with pytest.raises(ConfigError):
        select_model(Y, K_range=(0,))
    with pytest.raises(ConfigError):
        select_model(Y, forms=())
    with pytest.raises(ConfigError):
        select_model(Y, c=0)


def test_supervised_selection_and_prediction(rng):
    Y, labels = sruw_data(rng, n=400)
    result = select_model_classif(Y, labels, n_lambda=3, n_rho=2)
    assert result.supervised
    assert result.K == 2
    assert 1 in result.partition.S
    np.testing.assert_array_equal(result.assignment, labels)
    # the fitted rule classifies fresh draws from the same model well
    Y_new, labels_new = sruw_data(rng, n=500)
    pred = predict_classes(result, Y_new)
    assert np.mean(pred != labels_new) < 0.05


def test_predict_rejects_narrow_data(rng):
    Y, labels = sruw_data(rng, n=200)
    result = select_model_classif(Y, labels, n_lambda=3, n_rho=2)
    widest = max(result.partition.S)
    if widest > 1:
        with pytest.raises(DataError):
            predict_classes(result, Y[:, : widest - 1])
