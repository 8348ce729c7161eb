"""Weighted working models shared by the covariate-adjusted estimators.

Two kernels live here: weighted least squares for untreated outcome trends
and an IRLS weighted logit for treatment-group propensities, plus the
overlap diagnostic built on the fitted scores.  Both fits are pure functions
and reentrant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import expit

from .errors import EmptyClass, EmptySample, RankDeficient

DEFAULT_TRIM_THRESHOLD = 0.995
_SCORE_EPS = 1e-15  # keeps fitted scores strictly inside (0, 1)
_SEPARATION_COEF_NORM = 1e3
_MAX_HALVINGS = 30


@dataclass(frozen=True)
class OutcomeModelFit:
    """Weighted least-squares fit of outcome trends on a design matrix."""

    coefficients: np.ndarray
    n_obs: int
    weighted_rss: float

    def fitted(self, x_rows: np.ndarray) -> np.ndarray:
        x_rows = np.asarray(x_rows, dtype=float)
        if self.coefficients.size == 0:
            return np.zeros(x_rows.shape[0])
        return x_rows @ self.coefficients


@dataclass(frozen=True)
class PropensityFit:
    """Weighted logistic fit with IRLS convergence metadata."""

    coefficients: np.ndarray
    fitted_scores: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float
    separation: bool = False

    def predict(self, x_rows: np.ndarray) -> np.ndarray:
        p = expit(np.asarray(x_rows, dtype=float) @ self.coefficients)
        return np.clip(p, _SCORE_EPS, 1.0 - _SCORE_EPS)


@dataclass(frozen=True)
class OverlapReport:
    """Distribution of fitted scores by arm, plus trim-threshold flags."""

    trim_threshold: float
    treated_min: float
    treated_max: float
    comparison_min: float
    comparison_max: float
    n_flagged_comparison: int
    histogram_treated: np.ndarray
    histogram_comparison: np.ndarray
    bin_edges: np.ndarray


def fit_wls(x_rows, y, w) -> OutcomeModelFit:
    """Minimize sum of w_i (y_i - x_i'b)^2 via pivoted QR.

    Zero-weight rows are removed before fitting.  A rank-deficient design is
    an error naming the first collinear column rather than a silent drop,
    since dropping columns silently would change the estimand.
    """
    x = np.atleast_2d(np.asarray(x_rows, dtype=float))
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    keep = w > 0
    x, y, w = x[keep], y[keep], w[keep]
    n, p = x.shape
    if p == 0:
        return OutcomeModelFit(np.zeros(0), n, float(np.sum(w * y * y)))
    if n == 0:
        raise EmptySample("no observations with positive weight")
    if n < p:
        raise EmptySample(f"{n} weighted observations cannot identify {p} coefficients")

    sw = np.sqrt(w)
    a = sw[:, None] * x
    b = sw * y
    q, r, piv = scipy.linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        raise RankDeficient(int(piv[rank]))
    beta_piv = scipy.linalg.solve_triangular(r, q.T @ b)
    beta = np.empty(p)
    beta[piv] = beta_piv
    resid = y - x @ beta
    return OutcomeModelFit(beta, n, float(np.sum(w * resid * resid)))


def _weighted_loglik(labels, w, eta):
    # log L = sum w [y*eta - log(1 + e^eta)], numerically stable via logaddexp
    return float(np.sum(w * (labels * eta - np.logaddexp(0.0, eta))))


def fit_logit(x_rows, labels, w, tol: float = 1e-8, max_iter: int = 100) -> PropensityFit:
    """Weighted logistic maximum likelihood by IRLS with step-halving.

    Convergence means the sup-norm of the weighted score is at most
    ``tol * sum(w)``.  Complete separation is reported on the returned fit
    (``separation=True``, ``converged=False``) rather than raised, so callers
    can still inspect the scores through an overlap report.
    """
    x = np.atleast_2d(np.asarray(x_rows, dtype=float))
    labels = np.asarray(labels, dtype=float)
    w = np.asarray(w, dtype=float)
    n, p = x.shape
    if np.sum(w * labels) <= 0 or np.sum(w * (1.0 - labels)) <= 0:
        raise EmptyClass("both label classes need positive total weight")

    scale = float(np.sum(w))
    beta = np.zeros(p)
    eta = x @ beta
    ll = _weighted_loglik(labels, w, eta)
    grad = x.T @ (w * (labels - expit(eta)))
    it = 0
    separation = False
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(grad))) if p else 0.0
        if gnorm <= tol * scale:
            break
        pi = expit(eta)
        s = w * pi * (1.0 - pi)
        h = x.T @ (s[:, None] * x)
        try:
            step = scipy.linalg.solve(h, grad, assume_a="pos")
        except scipy.linalg.LinAlgError:
            step = np.linalg.lstsq(h, grad, rcond=None)[0]
        new_beta, new_eta, new_ll = beta, eta, ll
        for _ in range(_MAX_HALVINGS):
            cand = beta + step
            cand_eta = x @ cand
            cand_ll = _weighted_loglik(labels, w, cand_eta)
            if cand_ll >= ll - 1e-12 * max(1.0, abs(ll)):
                new_beta, new_eta, new_ll = cand, cand_eta, cand_ll
                break
            step = 0.5 * step
        if new_ll <= ll and np.array_equal(new_beta, beta):
            break  # step-halving exhausted; no usable ascent direction
        beta, eta, ll = new_beta, new_eta, new_ll
        grad = x.T @ (w * (labels - expit(eta)))
        if (
            float(np.linalg.norm(beta)) > _SEPARATION_COEF_NORM
            and float(np.max(np.abs(grad))) > tol * scale
        ):
            separation = True
            break

    gnorm = float(np.max(np.abs(grad))) if p else 0.0
    converged = gnorm <= tol * scale and not separation
    scores = np.clip(expit(eta), _SCORE_EPS, 1.0 - _SCORE_EPS)
    return PropensityFit(beta, scores, converged, it, gnorm, separation)


def overlap_report(
    fit: PropensityFit,
    treated,
    trim_threshold: float = DEFAULT_TRIM_THRESHOLD,
) -> OverlapReport:
    """Summarize fitted scores by arm and flag near-1 comparison scores.

    Flagging never mutates anything; whether to trim is the caller's call.
    """
    treated = np.asarray(treated, dtype=bool)
    scores = fit.fitted_scores
    edges = np.linspace(0.0, 1.0, 21)
    s_t, s_c = scores[treated], scores[~treated]
    hist_t = np.histogram(s_t, bins=edges)[0]
    hist_c = np.histogram(s_c, bins=edges)[0]
    return OverlapReport(
        trim_threshold=trim_threshold,
        treated_min=float(s_t.min()) if s_t.size else float("nan"),
        treated_max=float(s_t.max()) if s_t.size else float("nan"),
        comparison_min=float(s_c.min()) if s_c.size else float("nan"),
        comparison_max=float(s_c.max()) if s_c.size else float("nan"),
        n_flagged_comparison=int(np.sum(s_c > trim_threshold)),
        histogram_treated=hist_t,
        histogram_comparison=hist_c,
        bin_edges=edges,
    )


def default_design(covariates: np.ndarray) -> np.ndarray:
    """Intercept plus main effects; the default design for every estimator."""
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    return np.column_stack([np.ones(covariates.shape[0]), covariates])


def intercept_only(covariates: np.ndarray) -> np.ndarray:
    return np.ones((np.atleast_2d(covariates).shape[0], 1))


def zero_design(covariates: np.ndarray) -> np.ndarray:
    """Empty design; fitting it yields the identically-zero outcome model."""
    return np.empty((np.atleast_2d(covariates).shape[0], 0))
