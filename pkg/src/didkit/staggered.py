"""Group-time effects ATT(g,t) under three parallel-trends regimes.

Each cell (g, t) is a 2x2 frame: the cohort first treated at g against a
comparison pool dictated by the assumption, differenced between t and the
base period g-1 (or each unit's pooled pre-g mean under ``all_periods``).
Pre-treatment cells (t earlier than g-1) use the same difference
``Y_t - Y_{g-1}``, so they estimate the differential-trend placebos and the
cell (g, g-1) is identically zero and never emitted.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import twobytwo
from ._withinreg import within_wls
from .errors import EstimationError, NoComparisonPossible, UsageError
from .panel import NEVER, PanelDataset, is_normalized
from .twobytwo import TwoByTwoFrame

ASSUMPTIONS = ("never", "not_yet", "all_periods")
ESTIMATORS = ("means", "ra", "ipw", "dr")

_COMPARISON_TAG = {"never": "never", "not_yet": "not_yet", "all_periods": "pooled_pre"}


@dataclass(frozen=True)
class GroupTimeEffect:
    """One ATT(g,t) cell (post-treatment) or differential-trend placebo (pre)."""

    group: int
    period: int
    event_time: int
    estimate: float
    se: float
    influence: np.ndarray
    comparison_tag: str
    estimator_tag: str
    n_treated: int
    n_comparison: int

    @property
    def is_pretrend(self) -> bool:
        return self.event_time < 0


@dataclass(frozen=True)
class SkippedCell:
    group: int
    period: int
    reason: str


@dataclass(frozen=True)
class GroupTimeTable:
    """All feasible cells, the skipped ones, and the settings that made them."""

    effects: tuple[GroupTimeEffect, ...]
    skipped: tuple[SkippedCell, ...]
    group_sizes: dict[int, tuple[float, int]]
    assumption: str
    estimator: str
    base_period: str
    periods: tuple[int, ...]
    n_units: int

    def cell(self, g: int, t: int) -> GroupTimeEffect:
        for eff in self.effects:
            if eff.group == g and eff.period == t:
                return eff
        raise KeyError((g, t))

    def post_cells(self) -> tuple[GroupTimeEffect, ...]:
        return tuple(e for e in self.effects if e.event_time >= 0)

    def pre_cells(self) -> tuple[GroupTimeEffect, ...]:
        return tuple(e for e in self.effects if e.event_time < 0)


def _comparison_mask(groups: np.ndarray, assumption: str, g: int, t: int) -> np.ndarray:
    if assumption == "never":
        return groups == NEVER
    return groups > max(g, t)  # not-yet-treated; infinity qualifies everywhere


def _cell_frame(
    data: PanelDataset, assumption: str, g: int, t: int
) -> TwoByTwoFrame:
    groups = data.groups
    treated = groups == g
    comparison = _comparison_mask(groups, assumption, g, t) & ~treated
    if not comparison.any():
        raise NoComparisonPossible(f"no comparison units for cell ({g}, {t})")
    ig, it = data.period_index(g), data.period_index(t)
    base_idx = ig - 1
    idx = np.flatnonzero(treated | comparison)
    if assumption == "all_periods":
        base = data.outcomes[idx, :ig].mean(axis=1)
    else:
        base = data.outcomes[idx, base_idx]
    return TwoByTwoFrame(
        delta_y=data.outcomes[idx, it] - base,
        treated=treated[idx],
        weights=data.weights[idx].astype(float),
        covariates=data.covariates[idx, base_idx, :],
        unit_indices=idx,
        n_parent=data.n_units,
        pre_period=int(data.periods[base_idx]),
        post_period=t,
    )


def att_gt(
    data: PanelDataset,
    assumption: str = "not_yet",
    estimator: str = "means",
    design_builder=None,
    include_pretrends: bool = True,
    threads: int = 1,
) -> GroupTimeTable:
    """Estimate every feasible ATT(g,t), delegating each cell to the 2x2 layer.

    Requires a normalized panel (run :func:`didkit.panel.normalize_groups`
    first).  Cells whose comparison pool is empty, or whose nuisance fit
    fails, are recorded as skipped rather than failing the whole table.
    """
    if not is_normalized(data):
        raise UsageError("att_gt needs a normalized panel; call normalize_groups first")
    if assumption not in ASSUMPTIONS:
        raise UsageError(
            f"unknown assumption {assumption!r}; valid values: " + ", ".join(ASSUMPTIONS)
        )
    if estimator not in ESTIMATORS:
        raise UsageError(
            f"unknown estimator {estimator!r}; valid values: " + ", ".join(ESTIMATORS)
        )
    if estimator != "means":
        if data.n_covariates == 0 and design_builder is None:
            raise UsageError(f"estimator {estimator!r} needs covariates")
        if assumption == "all_periods":
            raise UsageError(
                "covariate adjustment is not defined for the pooled-pre baseline; "
                "use assumption 'never' or 'not_yet'"
            )

    cohorts = data.treated_cohorts()
    if not cohorts:
        raise NoComparisonPossible("no treated cohorts in the panel")

    cells: list[tuple[int, int, int]] = []
    early_skips: list[SkippedCell] = []
    for g in cohorts:
        ig = data.period_index(g)
        for it, t in enumerate(data.periods):
            if it == ig - 1:
                continue  # base period: identically zero, never emitted
            e = it - ig
            if e < 0 and not include_pretrends:
                continue
            if e < 0 and assumption == "all_periods":
                early_skips.append(
                    SkippedCell(g, t, "pre-trend cells are undefined under the pooled-pre baseline")
                )
                continue
            cells.append((g, t, e))

    def run(cell):
        g, t, e = cell
        try:
            frame = _cell_frame(data, assumption, g, t)
            est = twobytwo.estimate(frame, estimator, design_builder)
        except EstimationError as err:
            return SkippedCell(g, t, str(err))
        return GroupTimeEffect(
            group=g,
            period=t,
            event_time=e,
            estimate=est.estimate,
            se=est.se,
            influence=est.influence,
            comparison_tag=_COMPARISON_TAG[assumption],
            estimator_tag=est.estimator_tag,
            n_treated=est.n_treated,
            n_comparison=est.n_comparison,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, cells))
    else:
        results = [run(c) for c in cells]

    effects = tuple(r for r in results if isinstance(r, GroupTimeEffect))
    skipped = tuple(early_skips) + tuple(r for r in results if isinstance(r, SkippedCell))
    sizes = {
        g: (float(np.sum(data.weights[data.groups == g])), int(np.sum(data.groups == g)))
        for g in cohorts
    }
    return GroupTimeTable(
        effects=tuple(sorted(effects, key=lambda c: (c.group, c.period))),
        skipped=tuple(sorted(skipped, key=lambda c: (c.group, c.period))),
        group_sizes=sizes,
        assumption=assumption,
        estimator=estimator,
        base_period="pooled_pre" if assumption == "all_periods" else "g-1",
        periods=data.periods,
        n_units=data.n_units,
    )


def sun_abraham_fit(data: PanelDataset, weighted: bool = True) -> GroupTimeTable:
    """Saturated cohort-by-event-time regression with two-way fixed effects.

    The regression carries one dummy per (cohort, period) cell except the
    cohort's base period, omitting the never-treated cohort entirely.  With a
    balanced panel its coefficients coincide cell-by-cell with
    ``att_gt(assumption='never', estimator='means')``; this fit computes them
    through the regression route so the equivalence can be verified, not
    assumed.
    """
    if not is_normalized(data):
        raise UsageError("sun_abraham_fit needs a normalized panel")
    if not np.any(data.groups == NEVER):
        raise NoComparisonPossible("saturated regression needs a never-treated cohort")
    cohorts = data.treated_cohorts()
    if not cohorts:
        raise NoComparisonPossible("no treated cohorts in the panel")

    n, T = data.n_units, data.n_periods
    columns = []
    keys = []
    for g in cohorts:
        ig = data.period_index(g)
        in_cohort = (data.groups == g).astype(float)
        for it, t in enumerate(data.periods):
            if it == ig - 1:
                continue
            block = np.zeros((n, T))
            block[:, it] = in_cohort
            columns.append(block)
            keys.append((g, t, it - ig))

    extra = np.stack(columns, axis=2)
    names = tuple(f"g{g}_e{e}" for g, _, e in keys)
    fit = within_wls(data, extra, names, weighted=weighted)

    never_count = int(np.sum(data.groups == NEVER))
    effects = []
    for j, (g, t, e) in enumerate(keys):
        effects.append(
            GroupTimeEffect(
                group=g,
                period=t,
                event_time=e,
                estimate=float(fit.coefficients[j]),
                se=float(fit.ses[j]),
                influence=fit.influence[:, j].copy(),
                comparison_tag="never",
                estimator_tag="sun_abraham",
                n_treated=int(np.sum(data.groups == g)),
                n_comparison=never_count,
            )
        )
    sizes = {
        g: (float(np.sum(data.weights[data.groups == g])), int(np.sum(data.groups == g)))
        for g in cohorts
    }
    return GroupTimeTable(
        effects=tuple(sorted(effects, key=lambda c: (c.group, c.period))),
        skipped=(),
        group_sizes=sizes,
        assumption="never",
        estimator="sun_abraham",
        base_period="g-1",
        periods=data.periods,
        n_units=n,
    )
