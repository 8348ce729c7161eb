"""The 2x2 building block: one pre period, one post period, two arms.

Every estimator returns an :class:`EffectEstimate` whose influence vector is
laid out over the *parent* dataset (zeros outside the frame) and scaled so
that ``se == sqrt(mean(influence**2) / n)`` holds exactly for the parent
size ``n``.  That convention lets group-time cells be combined linearly
downstream and feeds both the clustered sandwich and the multiplier
bootstrap.

Estimated-nuisance corrections follow standard two-step M-estimation
stacking: the outcome-regression coefficients contribute through their
weighted-least-squares linear representation and the propensity
coefficients through the inverse information times the logistic score.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeights, EmptyArm, EmptyCell, UsageError
from .nuisance import default_design, fit_logit, fit_wls
from .panel import PanelDataset

_DEGENERATE_SCORE = 1.0 - 1e-12


@dataclass(frozen=True)
class TwoByTwoFrame:
    """Long-difference data for one treated/comparison contrast.

    ``delta_y`` is Y(post) - Y(pre) for the frame's units, ``covariates``
    the baseline (pre-period) covariate slice, and ``unit_indices`` the
    frame units' positions in the parent dataset of size ``n_parent``.
    """

    delta_y: np.ndarray
    treated: np.ndarray
    weights: np.ndarray
    covariates: np.ndarray
    unit_indices: np.ndarray
    n_parent: int
    pre_period: int
    post_period: int

    def __post_init__(self):
        if self.pre_period == self.post_period:
            raise UsageError("pre and post period must differ")
        if not self.treated.any():
            raise EmptyArm("treated")
        if self.treated.all():
            raise EmptyArm("comparison")
        if np.sum(self.weights[self.treated]) <= 0:
            raise EmptyArm("treated")
        if np.sum(self.weights[~self.treated]) <= 0:
            raise EmptyArm("comparison")

    @property
    def n(self) -> int:
        return self.delta_y.shape[0]


@dataclass(frozen=True)
class EffectEstimate:
    """Point estimate, analytic se, and per-unit influence contributions."""

    estimate: float
    se: float
    influence: np.ndarray
    n_treated: int
    n_comparison: int
    estimator_tag: str


def build_frame(
    data: PanelDataset,
    treated_mask,
    comparison_mask,
    pre: int,
    post: int,
    covariate_period: int | None = None,
    allow_time_varying: bool = False,
) -> TwoByTwoFrame:
    """Assemble a frame from dataset masks and a (pre, post) period pair.

    Covariates default to their pre-period values.  Passing a
    ``covariate_period`` other than ``pre`` opts into time-varying covariates
    and emits a warning: post-treatment covariates can themselves be affected
    by treatment and bias the estimate (the bad-controls problem).
    """
    treated_mask = np.asarray(treated_mask, dtype=bool)
    comparison_mask = np.asarray(comparison_mask, dtype=bool)
    if np.any(treated_mask & comparison_mask):
        raise UsageError("treated and comparison arms overlap")
    cov_period = pre if covariate_period is None else covariate_period
    if cov_period != pre:
        if not allow_time_varying:
            raise UsageError(
                "covariate_period differs from the pre period; pass "
                "allow_time_varying=True to opt in"
            )
        warnings.warn(
            "using covariates measured outside the base period; if treatment "
            "affects them the adjusted estimate is biased",
            UserWarning,
            stacklevel=2,
        )
    idx = np.flatnonzero(treated_mask | comparison_mask)
    j_pre, j_post = data.period_index(pre), data.period_index(post)
    j_cov = data.period_index(cov_period)
    return TwoByTwoFrame(
        delta_y=data.outcomes[idx, j_post] - data.outcomes[idx, j_pre],
        treated=treated_mask[idx],
        weights=data.weights[idx].astype(float),
        covariates=data.covariates[idx, j_cov, :],
        unit_indices=idx,
        n_parent=data.n_units,
        pre_period=pre,
        post_period=post,
    )


# ----------------------------------------------------------- internals


def _scatter(frame: TwoByTwoFrame, psi: np.ndarray) -> np.ndarray:
    """Embed frame-level influence into the parent layout.

    Scaling by n_parent/n_frame keeps sqrt(mean(psi^2)/n) identical under
    both layouts, so the stored se never depends on the embedding.
    """
    full = np.zeros(frame.n_parent)
    full[frame.unit_indices] = psi * (frame.n_parent / frame.n)
    return full


def _finish(frame: TwoByTwoFrame, estimate: float, psi: np.ndarray, tag: str) -> EffectEstimate:
    influence = _scatter(frame, psi)
    n = frame.n_parent
    se = float(np.sqrt(np.mean(influence**2) / n))
    return EffectEstimate(
        estimate=float(estimate),
        se=se,
        influence=influence,
        n_treated=int(frame.treated.sum()),
        n_comparison=int((~frame.treated).sum()),
        estimator_tag=tag,
    )


def _wls_linear_rep(x: np.ndarray, resid: np.ndarray, w_rows: np.ndarray) -> np.ndarray:
    """Rows of the WLS coefficient influence: (w e x) (E[w x'x])^-1."""
    n = x.shape[0]
    gram = (w_rows[:, None] * x).T @ x / n
    return np.linalg.solve(gram, ((w_rows * resid)[:, None] * x).T).T


def _logit_linear_rep(x: np.ndarray, labels: np.ndarray, w: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Rows of the logit coefficient influence: (w (d - p) x) H^-1."""
    n = x.shape[0]
    info = (w * scores * (1.0 - scores))[:, None] * x
    hess = info.T @ x / n
    score_rows = (w * (labels - scores))[:, None] * x
    return np.linalg.solve(hess, score_rows.T).T


def _design(frame: TwoByTwoFrame, builder) -> np.ndarray:
    builder = builder or default_design
    x = np.atleast_2d(np.asarray(builder(frame.covariates), dtype=float))
    if x.shape[0] != frame.n:
        raise UsageError("design builder must return one row per frame unit")
    return x


# ----------------------------------------------------------- estimators


def att_means(frame: TwoByTwoFrame) -> EffectEstimate:
    """Difference of two weighted mean outcome changes (the classic 2x2)."""
    d = frame.treated.astype(float)
    w1 = frame.weights * d
    w0 = frame.weights * (1.0 - d)
    m1 = np.sum(w1 * frame.delta_y) / np.sum(w1)
    m0 = np.sum(w0 * frame.delta_y) / np.sum(w0)
    psi = w1 * (frame.delta_y - m1) / np.mean(w1) - w0 * (frame.delta_y - m0) / np.mean(w0)
    return _finish(frame, m1 - m0, psi, "means")


def att_ra(frame: TwoByTwoFrame, design_builder=None) -> EffectEstimate:
    """Regression adjustment: comparison-arm trend model, treated-arm average.

    Fits the outcome-change model on comparison units only, then averages
    treated units' deviations from its predictions.
    """
    x = _design(frame, design_builder)
    d = frame.treated.astype(float)
    comp = ~frame.treated
    fit = fit_wls(x[comp], frame.delta_y[comp], frame.weights[comp])
    mu = fit.fitted(x)
    e = frame.delta_y - mu

    w1 = frame.weights * d
    eta = np.sum(w1 * e) / np.sum(w1)

    psi = w1 * (e - eta) / np.mean(w1)
    if x.shape[1]:
        w0_rows = frame.weights * (1.0 - d)
        lin_rep = _wls_linear_rep(x, e, w0_rows)
        m1 = np.mean(w1[:, None] * x, axis=0)
        psi = psi - (lin_rep @ m1) / np.mean(w1)
    return _finish(frame, eta, psi, "ra")


def att_ipw(frame: TwoByTwoFrame, design_builder=None) -> EffectEstimate:
    """Hajek-normalized inverse probability weighting.

    Comparison units are reweighted by pi/(1-pi) so their covariate
    distribution matches the treated arm; both arms' weights are normalized
    to integrate to one within arm.
    """
    return _ipw_like(frame, design_builder, outcome_builder=None, tag="ipw")


def att_dr(
    frame: TwoByTwoFrame,
    design_builder=None,
    outcome_design=None,
    propensity_design=None,
) -> EffectEstimate:
    """Doubly robust combination of the RA and IPW routes.

    ``design_builder`` feeds both working models unless a side-specific
    builder overrides it.  Consistent when either working model is right.
    """
    return _ipw_like(
        frame,
        propensity_design or design_builder,
        outcome_builder=(outcome_design or design_builder or default_design),
        tag="dr",
    )


def _ipw_like(frame: TwoByTwoFrame, ps_builder, outcome_builder, tag: str) -> EffectEstimate:
    d = frame.treated.astype(float)
    w = frame.weights
    xp = _design(frame, ps_builder)

    ps_fit = fit_logit(xp, d, w)
    scores = ps_fit.fitted_scores
    comp_scores = scores[~frame.treated]
    if np.any(comp_scores >= _DEGENERATE_SCORE):
        raise DegenerateWeights(
            f"{int(np.sum(comp_scores >= _DEGENERATE_SCORE))} comparison units have "
            "fitted scores at 1"
        )

    if outcome_builder is None:
        xo = np.empty((frame.n, 0))
        mu = np.zeros(frame.n)
    else:
        xo = np.atleast_2d(np.asarray(outcome_builder(frame.covariates), dtype=float))
        comp = ~frame.treated
        out_fit = fit_wls(xo[comp], frame.delta_y[comp], w[comp])
        mu = out_fit.fitted(xo)
    e = frame.delta_y - mu

    odds = scores / (1.0 - scores)
    w1 = w * d
    w0 = w * (1.0 - d) * odds
    eta1 = np.sum(w1 * e) / np.sum(w1)
    eta0 = np.sum(w0 * e) / np.sum(w0)
    estimate = eta1 - eta0

    lin_rep_wls = None
    if xo.shape[1]:
        lin_rep_wls = _wls_linear_rep(xo, e, w * (1.0 - d))
    lin_rep_ps = _logit_linear_rep(xp, d, w, scores)

    psi_t = w1 * (e - eta1)
    if lin_rep_wls is not None:
        psi_t = psi_t - lin_rep_wls @ np.mean(w1[:, None] * xo, axis=0)
    psi_t = psi_t / np.mean(w1)

    psi_c = w0 * (e - eta0)
    psi_c = psi_c + lin_rep_ps @ np.mean((w0 * (e - eta0))[:, None] * xp, axis=0)
    if lin_rep_wls is not None:
        psi_c = psi_c - lin_rep_wls @ np.mean(w0[:, None] * xo, axis=0)
    psi_c = psi_c / np.mean(w0)

    return _finish(frame, estimate, psi_t - psi_c, tag)


_ESTIMATORS = {"means": att_means, "ra": att_ra, "ipw": att_ipw, "dr": att_dr}


def estimate(frame: TwoByTwoFrame, estimator: str, design_builder=None, **kwargs) -> EffectEstimate:
    """Dispatch by estimator tag ('means', 'ra', 'ipw', 'dr')."""
    try:
        fn = _ESTIMATORS[estimator]
    except KeyError:
        raise UsageError(
            f"unknown estimator {estimator!r}; valid values: "
            + ", ".join(sorted(_ESTIMATORS))
        ) from None
    if estimator == "means":
        return fn(frame)
    return fn(frame, design_builder, **kwargs)


@dataclass(frozen=True)
class PartitionEffect:
    cell: object
    effect: EffectEstimate
    treated_share: float


def att_by_partition(
    frame: TwoByTwoFrame,
    partition,
    estimator: str = "means",
    design_builder=None,
) -> list[PartitionEffect]:
    """Run the chosen estimator within each cell of a covariate partition.

    ``partition`` assigns a cell label to every frame unit.  Shares are the
    weighted fraction of treated units per cell and sum to one, so the
    pooled ATT is recovered as ``sum(share_k * estimate_k)`` whenever the
    partition does not change the estimand.
    """
    labels = np.asarray(partition)
    if labels.shape[0] != frame.n:
        raise UsageError("partition must label every frame unit")
    w_treat_total = np.sum(frame.weights[frame.treated])
    out = []
    for cell in sorted(set(labels.tolist())):
        mask = labels == cell
        sub_treated = frame.treated & mask
        sub_comp = ~frame.treated & mask
        if not sub_treated.any() or not sub_comp.any():
            raise EmptyCell(cell)
        keep = np.flatnonzero(mask)
        sub = TwoByTwoFrame(
            delta_y=frame.delta_y[keep],
            treated=frame.treated[keep],
            weights=frame.weights[keep],
            covariates=frame.covariates[keep],
            unit_indices=frame.unit_indices[keep],
            n_parent=frame.n_parent,
            pre_period=frame.pre_period,
            post_period=frame.post_period,
        )
        share = float(np.sum(frame.weights[sub_treated]) / w_treat_total)
        out.append(PartitionEffect(cell, estimate(sub, estimator, design_builder), share))
    return out
