"""Gaussian mixture core: densities, parameter counts, EM, labeled fits."""

import numpy as np
import pytest
from scipy import stats

from selvar import (
    DataError,
    DegenerateCovariance,
    IndepCovForm,
    InitPolicy,
    InsufficientClassData,
    MixtureForm,
    bic_clas,
    bic_clust,
    bic_indep,
    em_fit,
    fit_indep,
    fit_labeled,
    log_density,
    mixture_loglik,
    param_count,
)
from selvar.gaussmix import (
    cov_param_count,
    equivalent_form,
    validate_data,
    validate_labels,
)
from conftest import spd_matrix, two_blob_data


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


def test_log_density_known_value():
    # hand computed: -log(2*pi) - 0.5*(1/2 + 1/0.5)
    got = log_density([1.0, 1.0], [0.0, 0.0], np.diag([2.0, 0.5]))
    assert got == pytest.approx(-3.0878770664093453, abs=1e-12)


def test_log_density_matches_scipy(rng):
    for q in (1, 2, 5):
        cov = spd_matrix(rng, q, cond=30.0)
        mean = rng.normal(size=q)
        x = rng.normal(size=q)
        want = stats.multivariate_normal(mean=mean, cov=cov).logpdf(x)
        assert log_density(x, mean, cov) == pytest.approx(want, abs=1e-10)


def test_log_density_integrates_to_one(rng):
    # quadrature check of normalisation in one and two dimensions
    x = np.linspace(-10.0, 10.0, 4001)
    dens = np.exp([log_density([v], [0.3], np.array([[1.7]])) for v in x])
    assert np.trapezoid(dens, x) == pytest.approx(1.0, abs=1e-3)

    cov = np.array([[1.0, 0.4], [0.4, 0.8]])
    g = np.linspace(-7.0, 7.0, 281)
    xx, yy = np.meshgrid(g, g)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    dens = np.exp([log_density(p, [0.0, 0.0], cov) for p in pts])
    step = g[1] - g[0]
    assert dens.sum() * step * step == pytest.approx(1.0, abs=1e-3)


def test_log_density_rejects_bad_inputs():
    with pytest.raises(DataError):
        log_density([1.0, 2.0], [0.0], np.eye(2))
    with pytest.raises(DegenerateCovariance):
        log_density([1.0, 2.0], [0.0, 0.0], np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_mixture_loglik_matches_direct_sum(rng):
    n, q, K = 40, 3, 2
    Y = rng.normal(size=(n, q))
    pi = np.array([0.3, 0.7])
    means = rng.normal(size=(K, q))
    covs = np.stack([spd_matrix(rng, q), spd_matrix(rng, q)])
    dens = np.stack(
        [stats.multivariate_normal(means[k], covs[k]).pdf(Y) for k in range(K)], axis=1
    )
    want = np.log(dens @ pi).sum()
    assert mixture_loglik(Y, pi, means, covs) == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# parameter counting and form collapse
# ---------------------------------------------------------------------------


def test_param_count_table():
    # (K-1) proportions + K*q means + covariance block
    cases = {
        (MixtureForm.SPHERICAL_EQUAL, 3, 4): 2 + 12 + 1,
        (MixtureForm.SPHERICAL_FREE, 3, 4): 2 + 12 + 3,
        (MixtureForm.DIAGONAL_EQUAL, 3, 4): 2 + 12 + 4,
        (MixtureForm.DIAGONAL_FREE, 3, 4): 2 + 12 + 12,
        (MixtureForm.FULL_EQUAL, 3, 4): 2 + 12 + 10,
        (MixtureForm.FULL_FREE, 3, 4): 2 + 12 + 30,
    }
    for (form, K, q), want in cases.items():
        assert param_count(K, q, form) == want
        assert cov_param_count(K, q, form) == want - (K - 1) - K * q


def test_param_count_rejects_nonpositive():
    with pytest.raises(ValueError):
        param_count(0, 3, MixtureForm.FULL_FREE)
    with pytest.raises(ValueError):
        param_count(2, 0, MixtureForm.FULL_FREE)


def test_equivalent_form_collapses_at_q1():
    assert equivalent_form(MixtureForm.FULL_FREE, 1) is MixtureForm.SPHERICAL_FREE
    assert equivalent_form(MixtureForm.DIAGONAL_EQUAL, 1) is MixtureForm.SPHERICAL_EQUAL
    assert equivalent_form(MixtureForm.FULL_EQUAL, 2) is MixtureForm.FULL_EQUAL
    # every form counts the same parameters as its q=1 collapse
    for form in MixtureForm:
        assert param_count(3, 1, form) == param_count(3, 1, equivalent_form(form, 1))


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def test_validate_data_rejections():
    with pytest.raises(DataError):
        validate_data(np.ones(5))
    with pytest.raises(DataError):
        validate_data(np.ones((1, 3)))
    bad = np.ones((5, 2))
    bad[2, 1] = np.nan
    with pytest.raises(DataError):
        validate_data(bad)
    const = np.column_stack([np.arange(5.0), np.ones(5)])
    with pytest.raises(DegenerateCovariance):
        validate_data(const)


def test_validate_labels():
    z, K = validate_labels([1, 2, 2, 1, 3, 3], 6)
    assert K == 3 and z.dtype.kind == "i"
    z, K = validate_labels(np.array([1.0, 2.0, 1.0, 2.0]), 4)
    assert K == 2
    with pytest.raises(DataError):
        validate_labels([0, 1, 1, 2], 4)
    with pytest.raises(DataError):
        validate_labels([1.5, 2.0, 1.0, 2.0], 4)
    with pytest.raises(DataError):
        validate_labels([1, 2], 4)
    with pytest.raises(InsufficientClassData):
        validate_labels([1, 1, 1, 2], 4)


# ---------------------------------------------------------------------------
# EM
# ---------------------------------------------------------------------------


def test_em_fit_recovers_two_blobs(rng):
    Y, labels = two_blob_data(rng)
    fit = em_fit(Y, 2, MixtureForm.SPHERICAL_EQUAL)
    assert fit.converged
    assert fit.proportions.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(fit.responsibilities.sum(axis=1), 1.0, atol=1e-12)
    # components sit near the true blob centres in some order
    order = np.argsort(fit.means[:, 0])
    np.testing.assert_allclose(fit.means[order], [[0, 0], [6, 6]], atol=0.4)
    # hard assignment agrees with the generating labels up to relabeling
    hard = fit.responsibilities.argmax(axis=1)
    agree = max(np.mean(hard + 1 == labels), np.mean(2 - hard == labels))
    assert agree > 0.98


@pytest.mark.parametrize("form", list(MixtureForm))
def test_em_loglik_trace_is_monotone(rng, form):
    Y, _ = two_blob_data(rng, n=150, sep=3.0)
    fit = em_fit(Y, 2, form, init=InitPolicy(seed=7))
    trace = np.asarray(fit.loglik_trace)
    diffs = np.diff(trace)
    assert np.all(diffs >= -1e-6 * (1.0 + np.abs(trace[:-1])))
    assert fit.loglik == pytest.approx(trace[-1])
    # reported loglik is the observed-data likelihood at the returned params
    direct = mixture_loglik(Y, fit.proportions, fit.means, fit.covariances)
    assert fit.loglik == pytest.approx(direct, rel=1e-9)


def test_em_fit_is_deterministic(rng):
    Y, _ = two_blob_data(rng, n=120)
    a = em_fit(Y, 3, MixtureForm.DIAGONAL_FREE, init=InitPolicy(seed=3))
    b = em_fit(Y, 3, MixtureForm.DIAGONAL_FREE, init=InitPolicy(seed=3))
    assert a.loglik == b.loglik
    np.testing.assert_array_equal(a.means, b.means)
    np.testing.assert_array_equal(a.covariances, b.covariances)


def test_em_covariance_structure(rng):
    # anisotropic, heteroscedastic blobs to make the structure visible
    n = 300
    labels = np.repeat([0, 1], n // 2)
    covs_true = np.stack([np.diag([1.0, 0.1]), np.diag([0.1, 1.0])])
    Y = np.array([[0.0, 0.0], [8.0, 8.0]])[labels]
    Y = Y + rng.multivariate_normal([0, 0], np.eye(2), size=n) * np.sqrt(
        np.diag(covs_true[0])
    ) * (labels == 0)[:, None] + rng.multivariate_normal(
        [0, 0], np.eye(2), size=n
    ) * np.sqrt(np.diag(covs_true[1])) * (labels == 1)[:, None]

    fit = em_fit(Y, 2, MixtureForm.SPHERICAL_FREE)
    for cov in fit.covariances:
        np.testing.assert_allclose(cov, cov[0, 0] * np.eye(2), atol=1e-12)

    fit = em_fit(Y, 2, MixtureForm.DIAGONAL_FREE)
    for cov in fit.covariances:
        assert cov[0, 1] == 0.0 and cov[1, 0] == 0.0

    fit = em_fit(Y, 2, MixtureForm.FULL_EQUAL)
    np.testing.assert_allclose(fit.covariances[0], fit.covariances[1], atol=1e-12)
    np.testing.assert_array_equal(fit.covariances[0], fit.covariances[0].T)

    fit = em_fit(Y, 2, MixtureForm.FULL_FREE)
    for cov in fit.covariances:
        assert np.linalg.eigvalsh(cov).min() > 0.0


def test_nested_forms_order_loglik(rng):
    Y, _ = two_blob_data(rng, n=250, sep=4.0)
    Y[:, 1] *= 2.0
    ll = {
        form: em_fit(Y, 2, form, init=InitPolicy(seed=1)).loglik for form in MixtureForm
    }
    slack = 1e-6 * abs(ll[MixtureForm.FULL_FREE])
    assert ll[MixtureForm.FULL_FREE] >= ll[MixtureForm.DIAGONAL_FREE] - slack
    assert ll[MixtureForm.DIAGONAL_FREE] >= ll[MixtureForm.SPHERICAL_FREE] - slack
    assert ll[MixtureForm.DIAGONAL_FREE] >= ll[MixtureForm.DIAGONAL_EQUAL] - slack
    assert ll[MixtureForm.SPHERICAL_FREE] >= ll[MixtureForm.SPHERICAL_EQUAL] - slack


def test_em_fit_k1_matches_closed_form(rng):
    Y = rng.normal(size=(80, 3)) @ spd_matrix(rng, 3, cond=4.0)
    fit = em_fit(Y, 1, MixtureForm.FULL_FREE)
    n, q = Y.shape
    S = np.cov(Y.T, bias=True)
    want = -0.5 * n * (q * np.log(2 * np.pi) + np.linalg.slogdet(S)[1] + q)
    assert fit.loglik == pytest.approx(want, rel=1e-10)
    np.testing.assert_allclose(fit.means[0], Y.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(fit.covariances[0], S, atol=1e-10)


def test_em_fit_input_errors(rng):
    Y, _ = two_blob_data(rng, n=20)
    with pytest.raises(DataError):
        em_fit(Y, 0, MixtureForm.FULL_FREE)
    with pytest.raises(DataError):
        em_fit(Y[:3], 3, MixtureForm.FULL_FREE)


def test_bic_clust_consistency(rng):
    Y, _ = two_blob_data(rng, n=150)
    form = MixtureForm.DIAGONAL_EQUAL
    fit = em_fit(Y, 2, form)
    want = 2.0 * fit.loglik - fit.nparams * np.log(Y.shape[0])
    assert bic_clust(Y, 2, form) == pytest.approx(want, rel=1e-12)


# ---------------------------------------------------------------------------
# labeled and independent fits
# ---------------------------------------------------------------------------


def test_fit_labeled_matches_per_class_mle(rng):
    Y, labels = two_blob_data(rng, n=140)
    fit = fit_labeled(Y, labels, MixtureForm.FULL_FREE)
    n = Y.shape[0]
    ll_manual = 0.0
    for k in (1, 2):
        block = Y[labels == k]
        nk = block.shape[0]
        ll_manual += nk * np.log(nk / n)
        mean = block.mean(axis=0)
        cov = np.cov(block.T, bias=True)
        np.testing.assert_allclose(fit.means[k - 1], mean, atol=1e-12)
        np.testing.assert_allclose(fit.covariances[k - 1], cov, atol=1e-10)
        dev = block - mean
        q = Y.shape[1]
        ll_manual += -0.5 * nk * (q * np.log(2 * np.pi) + np.linalg.slogdet(cov)[1])
        ll_manual += -0.5 * np.einsum("ij,jk,ik->", dev, np.linalg.inv(cov), dev)
    assert fit.loglik == pytest.approx(ll_manual, rel=1e-10)
    want_bic = 2.0 * fit.loglik - fit.nparams * np.log(n)
    assert bic_clas(Y, labels, MixtureForm.FULL_FREE) == pytest.approx(want_bic)


def test_fit_indep_diagonal_and_spherical(rng):
    Y = rng.normal(size=(60, 4)) * np.array([1.0, 2.0, 0.5, 1.5])
    n, q = Y.shape
    model = fit_indep(Y, IndepCovForm.DIAGONAL)
    np.testing.assert_allclose(np.diag(model.cov), Y.var(axis=0), atol=1e-12)
    want = -0.5 * n * (q * np.log(2 * np.pi) + np.log(Y.var(axis=0)).sum() + q)
    assert model.loglik == pytest.approx(want, rel=1e-12)
    assert model.nparams == 2 * q

    model = fit_indep(Y, IndepCovForm.SPHERICAL)
    np.testing.assert_allclose(np.diag(model.cov), Y.var(axis=0).mean(), atol=1e-12)
    assert model.nparams == q + 1
    want_bic = 2.0 * model.loglik - model.nparams * np.log(n)
    assert bic_indep(Y, IndepCovForm.SPHERICAL) == pytest.approx(want_bic)


def test_indep_spherical_never_beats_diagonal_loglik(rng):
    Y = rng.normal(size=(50, 3)) * np.array([1.0, 3.0, 0.2])
    ll_d = fit_indep(Y, IndepCovForm.DIAGONAL).loglik
    ll_s = fit_indep(Y, IndepCovForm.SPHERICAL).loglik
    assert ll_d >= ll_s
