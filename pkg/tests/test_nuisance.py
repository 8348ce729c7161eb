import numpy as np
import pytest
from scipy.special import expit

from didkit import fit_logit, fit_wls, overlap_report
from didkit.errors import EmptyClass, EmptySample, RankDeficient


# ------------------------------------------------------------------ WLS


def test_wls_intercept_only_is_mean():
    fit = fit_wls(np.array([[1.0], [1.0]]), np.array([3.0, 5.0]), np.array([1.0, 1.0]))
    np.testing.assert_allclose(fit.coefficients, [4.0])


def test_wls_exact_interpolation():
    fit = fit_wls(np.array([[1.0, 0.0], [1.0, 1.0]]), np.array([1.0, 3.0]), np.ones(2))
    np.testing.assert_allclose(fit.coefficients, [1.0, 2.0], atol=1e-12)


def test_wls_recovers_noiseless_beta(rng):
    n, k = 200, 3
    x = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
    beta = np.array([0.5, -1.2, 2.0, 0.3])
    y = x @ beta
    w = rng.uniform(0.5, 2.0, size=n)
    fit = fit_wls(x, y, w)
    np.testing.assert_allclose(fit.coefficients, beta, atol=1e-10)
    assert fit.weighted_rss < 1e-18


def test_wls_residuals_weighted_orthogonal(rng):
    n = 150
    x = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = rng.normal(size=n) * 3.0 + x[:, 1]
    w = rng.uniform(0.1, 5.0, size=n)
    fit = fit_wls(x, y, w)
    resid = y - fit.fitted(x)
    scale = np.abs(w * y) @ np.abs(x).max(axis=1)
    for j in range(x.shape[1]):
        assert abs(np.sum(w * x[:, j] * resid)) <= 1e-8 * max(scale, 1.0)


def test_wls_rank_deficient_names_column(rng):
    n = 50
    base = rng.normal(size=n)
    x = np.column_stack([np.ones(n), base, 2.0 * base])
    with pytest.raises(RankDeficient) as exc:
        fit_wls(x, rng.normal(size=n), np.ones(n))
    assert exc.value.column in (1, 2)


def test_wls_empty_sample():
    with pytest.raises(EmptySample):
        fit_wls(np.ones((3, 1)), np.arange(3.0), np.zeros(3))


def test_wls_weight_rescaling_invariance(rng):
    n = 80
    x = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, size=n)
    b1 = fit_wls(x, y, w).coefficients
    b2 = fit_wls(x, y, 37.5 * w).coefficients
    np.testing.assert_allclose(b1, b2, atol=1e-10)


# ---------------------------------------------------------------- logit


def test_logit_symmetric_intercept():
    x = np.ones((10, 1))
    labels = np.array([1, 0] * 5, dtype=float)
    fit = fit_logit(x, labels, np.ones(10))
    np.testing.assert_allclose(fit.coefficients, [0.0], atol=1e-8)
    np.testing.assert_allclose(fit.fitted_scores, 0.5, atol=1e-8)


def test_logit_class_share_closed_form():
    x = np.ones((100, 1))
    labels = np.r_[np.ones(30), np.zeros(70)]
    fit = fit_logit(x, labels, np.ones(100))
    np.testing.assert_allclose(fit.coefficients, [np.log(3.0 / 7.0)], atol=1e-7)
    assert fit.converged


def test_logit_saturated_matches_cell_shares():
    # cell counts (d, x): (1,1)=40, (0,1)=10, (1,0)=10, (0,0)=40
    x_bin = np.r_[np.ones(50), np.zeros(50)]
    d = np.r_[np.ones(40), np.zeros(10), np.ones(10), np.zeros(40)]
    x = np.column_stack([np.ones(100), x_bin])
    fit = fit_logit(x, d, np.ones(100))
    np.testing.assert_allclose(fit.fitted_scores[x_bin == 1], 0.8, atol=1e-6)
    np.testing.assert_allclose(fit.fitted_scores[x_bin == 0], 0.2, atol=1e-6)


def test_logit_score_equations_hold(rng):
    n = 300
    x = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    d = (rng.random(n) < expit(x @ [0.2, 0.8, -0.5])).astype(float)
    w = rng.uniform(0.5, 2.0, size=n)
    fit = fit_logit(x, d, w, tol=1e-10)
    assert fit.converged
    score = x.T @ (w * (d - fit.fitted_scores))
    assert np.max(np.abs(score)) <= 1e-10 * np.sum(w)


def _loglik(x, d, w, beta):
    eta = x @ beta
    return np.sum(w * (d * eta - np.logaddexp(0.0, eta)))


@pytest.mark.parametrize("at_optimum", [True, False])
def test_logit_gradient_matches_finite_differences(rng, at_optimum):
    n = 150
    x = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    d = (rng.random(n) < expit(x @ [0.0, 0.6, -0.4])).astype(float)
    w = rng.uniform(0.5, 1.5, size=n)
    if at_optimum:
        beta = fit_logit(x, d, w, tol=1e-12).coefficients
    else:
        beta = rng.normal(size=3) * 0.3
    analytic = x.T @ (w * (d - expit(x @ beta)))
    h = 1e-5
    for j in range(3):
        ej = np.zeros(3)
        ej[j] = h
        fd = (_loglik(x, d, w, beta + ej) - _loglik(x, d, w, beta - ej)) / (2 * h)
        denom = max(abs(fd), abs(analytic[j]), 1e-8)
        assert abs(fd - analytic[j]) / denom <= 1e-6 or abs(fd - analytic[j]) <= 1e-6


def test_logit_weight_rescaling_invariance(rng):
    n = 120
    x = np.column_stack([np.ones(n), rng.normal(size=n)])
    d = (rng.random(n) < 0.4).astype(float)
    w = rng.uniform(0.5, 2.0, size=n)
    b1 = fit_logit(x, d, w).coefficients
    b2 = fit_logit(x, d, 1e3 * w).coefficients
    np.testing.assert_allclose(b1, b2, atol=1e-10)


def test_logit_empty_class():
    with pytest.raises(EmptyClass):
        fit_logit(np.ones((4, 1)), np.ones(4), np.ones(4))


def test_logit_separation_flagged_not_raised():
    # perfectly separated on x with nearly-touching classes: the likelihood
    # keeps improving as the coefficient diverges
    x_val = np.r_[np.linspace(-1, -0.005, 20), np.linspace(0.005, 1, 20)]
    d = (x_val > 0).astype(float)
    x = np.column_stack([np.ones(40), x_val])
    fit = fit_logit(x, d, np.ones(40), max_iter=200)
    assert fit.separation
    assert not fit.converged
    assert np.all(fit.fitted_scores > 0.0) and np.all(fit.fitted_scores < 1.0)


def test_logit_scores_strictly_inside_unit_interval():
    x = np.column_stack([np.ones(4), np.array([-60.0, -30.0, 30.0, 60.0])])
    d = np.array([0.0, 0.0, 1.0, 1.0])
    fit = fit_logit(x, d, np.ones(4), max_iter=5)
    assert np.all(fit.fitted_scores > 0.0)
    assert np.all(fit.fitted_scores < 1.0)


# -------------------------------------------------------------- overlap


def test_overlap_no_flags_at_half():
    scores = np.full(20, 0.5)
    fit = fit_logit(np.ones((20, 1)), np.r_[np.ones(10), np.zeros(10)], np.ones(20))
    rep = overlap_report(fit, treated=np.r_[np.ones(10), np.zeros(10)].astype(bool))
    assert rep.n_flagged_comparison == 0
    assert rep.histogram_comparison.sum() == 10


def test_overlap_flags_extreme_comparison_unit():
    from didkit.nuisance import PropensityFit

    scores = np.array([0.5, 0.6, 0.999, 0.4])
    fit = PropensityFit(np.zeros(1), scores, True, 1, 0.0)
    rep = overlap_report(fit, treated=np.array([True, True, False, False]), trim_threshold=0.995)
    assert rep.n_flagged_comparison == 1
    assert rep.comparison_max == 0.999


def test_overlap_flag_count_matches_brute_recount(rng):
    from didkit.nuisance import PropensityFit

    scores = np.clip(rng.beta(0.3, 0.3, size=500), 1e-6, 1 - 1e-6)
    treated = rng.random(500) < 0.5
    fit = PropensityFit(np.zeros(1), scores, True, 1, 0.0)
    rep = overlap_report(fit, treated=treated, trim_threshold=0.9)
    assert rep.n_flagged_comparison == int(np.sum(scores[~treated] > 0.9))


def test_overlap_on_strongly_selected_simulated_frame():
    from didkit import NEVER, DgpConfig, build_frame, simulate_staggered
    from didkit.nuisance import default_design

    cfg = DgpConfig(
        n_units=2000,
        n_periods=2,
        cohort_shares={2.0: 0.5, NEVER: 0.5},
        n_covariates=1,
        selection_on_covariates=(3.0,),  # strong selection: scores pile near 0/1
        noise_sd=1.0,
        seed=88,
    )
    data, _ = simulate_staggered(cfg)
    frame = build_frame(data, data.groups == 2.0, data.groups == NEVER, 1, 2)
    fit = fit_logit(default_design(frame.covariates), frame.treated.astype(float), frame.weights)
    threshold = 0.95
    rep = overlap_report(fit, treated=frame.treated, trim_threshold=threshold)
    brute = int(np.sum(fit.fitted_scores[~frame.treated] > threshold))
    assert rep.n_flagged_comparison == brute
    assert rep.n_flagged_comparison > 0
    assert rep.histogram_treated.sum() == int(frame.treated.sum())
    assert rep.histogram_comparison.sum() == int((~frame.treated).sum())
