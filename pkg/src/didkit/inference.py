"""Clustered variance, sup-t simultaneous bands, and sensitivity bounds.

All inference runs on influence vectors scaled so that
``cov = (1/n^2) * sum_c s_c s_c'`` over cluster-summed rows ``s_c`` is the
estimator covariance.  The multiplier bootstrap perturbs cluster sums with
Rademacher (or Mammen) draws from per-draw counter-based RNG streams keyed
by (seed, draw index), so a given seed always reproduces the same bands no
matter how the draws would be scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .aggregate import EventStudyCurve
from .errors import (
    EstimationError,
    NoPretrends,
    SingleCluster,
    UsageError,
)
from ._rng import stream
from .staggered import GroupTimeTable

_MAMMEN_LOW = -(math.sqrt(5.0) - 1.0) / 2.0
_MAMMEN_HIGH = (math.sqrt(5.0) + 1.0) / 2.0
_MAMMEN_P_LOW = (math.sqrt(5.0) + 1.0) / (2.0 * math.sqrt(5.0))


@dataclass(frozen=True)
class BandResult:
    """Simultaneous sup-t band alongside its pointwise counterpart.

    ``ses`` are the (possibly cluster-robust) standard errors the bands are
    built from; both band kinds are symmetric around the estimates.
    """

    alpha: float
    pointwise_critical: float
    sup_t_critical: float
    ses: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    draws: int
    multiplier: str
    seed: int
    degenerate: tuple[int, ...] = ()


@dataclass(frozen=True)
class PretrendTest:
    statistic: float
    dof: int
    pvalue: float
    n_pretrends: int
    pinv_used: bool = False
    rank: int | None = None


@dataclass(frozen=True)
class SensitivityResult:
    """Identified set and robust CI under bounded trend violations."""

    target_event: int
    estimate: float
    se: float
    m_bar: float
    benchmark: str
    violation: float
    lower: float
    upper: float
    ci_lower: float
    ci_upper: float
    level: float


def _cluster_sums(influence: np.ndarray, cluster_ids) -> np.ndarray:
    psi = np.asarray(influence, dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    n = psi.shape[0]
    if cluster_ids is None:
        return psi
    ids = np.asarray(cluster_ids)
    if ids.shape[0] != n:
        raise UsageError("cluster_ids must have one entry per influence row")
    _, inverse = np.unique(ids, return_inverse=True)
    sums = np.zeros((inverse.max() + 1, psi.shape[1]))
    np.add.at(sums, inverse, psi)
    return sums


def clustered_se(influence, cluster_ids=None) -> tuple[np.ndarray, np.ndarray]:
    """Sandwich covariance from cluster-summed influence contributions.

    With every unit its own cluster this reproduces the unclustered
    influence-function variance exactly.
    """
    psi = np.asarray(influence, dtype=float)
    n = psi.shape[0]
    sums = _cluster_sums(psi, cluster_ids)
    if sums.shape[0] < 2:
        raise SingleCluster("at least 2 clusters are required")
    cov = sums.T @ sums / (n * n)
    se = np.sqrt(np.diag(cov))
    return se, cov


def sup_t_band(
    influence,
    estimates,
    cluster_ids=None,
    alpha: float = 0.05,
    draws: int = 999,
    seed: int = 0,
    multiplier: str = "rademacher",
) -> BandResult:
    """Multiplier-bootstrap critical value for the max-|t| statistic.

    The returned critical value is never allowed below the pointwise normal
    value, so the simultaneous band always contains the pointwise one.
    Coordinates with a zero standard error are excluded from the max and
    reported in ``degenerate``.
    """
    if draws < 199:
        raise UsageError("need at least 199 bootstrap draws")
    if not 0.0 < alpha < 1.0:
        raise UsageError("alpha must lie in (0, 1)")
    if multiplier not in ("rademacher", "mammen"):
        raise UsageError(f"unknown multiplier kind {multiplier!r}")

    estimates = np.atleast_1d(np.asarray(estimates, dtype=float))
    psi = np.asarray(influence, dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    n, p = psi.shape
    if estimates.shape[0] != p:
        raise UsageError("estimates and influence columns disagree")

    se, _ = clustered_se(psi, cluster_ids)
    live = np.flatnonzero(se > 0)
    degenerate = tuple(int(j) for j in np.flatnonzero(se == 0))
    if live.size == 0:
        raise EstimationError("every coordinate has a zero standard error")

    sums = _cluster_sums(psi, cluster_ids)
    n_clusters = sums.shape[0]
    live_sums = sums[:, live]
    live_se = se[live]

    maxes = np.empty(draws)
    for b in range(draws):
        rng = stream(seed, 1_000_000 + b)
        if multiplier == "rademacher":
            v = rng.integers(0, 2, size=n_clusters) * 2.0 - 1.0
        else:
            v = np.where(
                rng.random(n_clusters) < _MAMMEN_P_LOW, _MAMMEN_LOW, _MAMMEN_HIGH
            )
        t_star = (v @ live_sums) / n
        maxes[b] = np.max(np.abs(t_star) / live_se)

    order = math.ceil((1.0 - alpha) * draws)
    raw = float(np.sort(maxes)[order - 1])
    z = float(stats.norm.ppf(1.0 - alpha / 2.0))
    crit = max(raw, z)
    return BandResult(
        alpha=alpha,
        pointwise_critical=z,
        sup_t_critical=crit,
        ses=se,
        lower=estimates - crit * se,
        upper=estimates + crit * se,
        draws=draws,
        multiplier=multiplier,
        seed=seed,
        degenerate=degenerate,
    )


def attach_bands(
    curve: EventStudyCurve,
    cluster_ids=None,
    alpha: float = 0.05,
    draws: int = 999,
    seed: int = 0,
    multiplier: str = "rademacher",
) -> tuple[EventStudyCurve, BandResult]:
    band = sup_t_band(
        curve.influence,
        curve.estimates,
        cluster_ids=cluster_ids,
        alpha=alpha,
        draws=draws,
        seed=seed,
        multiplier=multiplier,
    )
    return curve.with_bands(band), band


def pretrend_joint_test(table: GroupTimeTable, cluster_ids=None) -> PretrendTest:
    """Wald test that every estimated pre-trend is zero."""
    pre = table.pre_cells()
    if not pre:
        raise NoPretrends("the table has no pre-trend cells")
    tau = np.array([c.estimate for c in pre])
    psi = np.column_stack([c.influence for c in pre])
    _, cov = clustered_se(psi, cluster_ids)
    p = tau.shape[0]
    try:
        chol = np.linalg.cholesky(cov)
        half = np.linalg.solve(chol, tau)
        statistic = float(half @ half)
        dof, pinv_used, rank = p, False, p
    except np.linalg.LinAlgError:
        pinv = np.linalg.pinv(cov, hermitian=True)
        rank = int(np.linalg.matrix_rank(cov, hermitian=True))
        statistic = float(tau @ pinv @ tau)
        dof, pinv_used = rank, True
    pvalue = float(stats.chi2.sf(statistic, dof)) if dof else 1.0
    return PretrendTest(
        statistic=statistic,
        dof=dof,
        pvalue=pvalue,
        n_pretrends=p,
        pinv_used=pinv_used,
        rank=rank,
    )


def max_pre_step(curve: EventStudyCurve) -> float:
    """Largest adjacent pre-period step |tau(e) - tau(e+1)|, with tau(-1) = 0."""
    pre = {e: float(v) for e, v in zip(curve.event_times, curve.estimates) if e < 0}
    pre[-1] = 0.0
    if set(pre) == {-1}:
        raise NoPretrends("no estimated pre-trends to benchmark against")
    steps = [
        abs(pre[e] - pre[e + 1])
        for e in sorted(pre)
        if e + 1 in pre
    ]
    if not steps:
        raise NoPretrends("pre-trend event times are not adjacent")
    return max(steps)


def sensitivity_bounds(
    curve: EventStudyCurve,
    target_event: int,
    m_bar: float,
    benchmark: str = "max_pre_step",
    alpha: float = 0.05,
    cumulate: bool = False,
) -> SensitivityResult:
    """Identified set for one post-treatment effect under bounded violations.

    The violation budget is ``m_bar`` times the largest adjacent pre-period
    step (or ``m_bar`` itself in outcome units for the absolute benchmark),
    optionally accumulated over the ``target_event + 1`` post periods.  The
    robust interval widens the set by the pointwise normal margin; this is
    the simple construction, not a full hybrid inference procedure.
    """
    if target_event < 0:
        raise UsageError("target_event must be a post-treatment event time")
    if m_bar < 0:
        raise UsageError("m_bar must be nonnegative")
    if benchmark not in ("max_pre_step", "absolute"):
        raise UsageError(f"unknown benchmark {benchmark!r}")
    estimate, se = curve.point(target_event)

    unit = max_pre_step(curve) if benchmark == "max_pre_step" else 1.0
    violation = m_bar * unit
    if cumulate:
        violation *= target_event + 1

    margin = float(stats.norm.ppf(1.0 - alpha / 2.0)) * se
    return SensitivityResult(
        target_event=target_event,
        estimate=estimate,
        se=se,
        m_bar=m_bar,
        benchmark=benchmark,
        violation=violation,
        lower=estimate - violation,
        upper=estimate + violation,
        ci_lower=estimate - violation - margin,
        ci_upper=estimate + violation + margin,
        level=1.0 - alpha,
    )
