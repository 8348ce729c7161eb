"""Collapse a group-time table into event-study curves and scalar summaries.

Cohort weights at each event time are proportional to weighted cohort size
among the cohorts that actually have that cell, so the curve is an average
over treated units, not over cells.  Cohort shares are treated as known
(plug-in); their sampling noise is deliberately excluded from the combined
influence functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NoBalancedCohort, NoPostPeriods, UsageError
from .staggered import GroupTimeTable
from .twobytwo import EffectEstimate


@dataclass(frozen=True)
class AggregationWeights:
    """Per-event-time cohort weights plus their normalization ledger."""

    by_event: dict[int, dict[int, float]]
    ledger: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        for e, row in self.by_event.items():
            total = sum(row.values())
            if abs(total - 1.0) > 1e-12:
                raise UsageError(f"weights at event time {e} sum to {total!r}")
            self.ledger[e] = total


@dataclass(frozen=True)
class EventStudyCurve:
    """Event-time-indexed aggregated effects with room for bands."""

    event_times: tuple[int, ...]
    estimates: np.ndarray
    ses: np.ndarray
    influence: np.ndarray  # (n, len(event_times))
    weights: AggregationWeights
    n_units: int
    estimator: str
    cohort_counts: dict[int, int] = field(default_factory=dict)
    balanced: bool = False
    window: tuple[int, int] | None = None
    overall: EffectEstimate | None = None
    pointwise_lower: np.ndarray | None = None
    pointwise_upper: np.ndarray | None = None
    simultaneous_lower: np.ndarray | None = None
    simultaneous_upper: np.ndarray | None = None
    band_level: float | None = None

    def point(self, e: int) -> tuple[float, float]:
        j = self.event_times.index(e)
        return float(self.estimates[j]), float(self.ses[j])

    def with_bands(self, band) -> "EventStudyCurve":
        """Return a copy carrying pointwise and simultaneous intervals.

        Standard errors are replaced by the band's (they coincide with the
        stored ones under default unit-level clustering and become
        cluster-robust when the band was built over clusters).
        """
        return replace(
            self,
            ses=band.ses.copy(),
            pointwise_lower=self.estimates - band.pointwise_critical * band.ses,
            pointwise_upper=self.estimates + band.pointwise_critical * band.ses,
            simultaneous_lower=band.lower.copy(),
            simultaneous_upper=band.upper.copy(),
            band_level=1.0 - band.alpha,
        )


def _combine(table: GroupTimeTable, weight_map: dict[int, dict[int, float]]):
    events = tuple(sorted(weight_map))
    n = table.n_units
    estimates = np.zeros(len(events))
    influence = np.zeros((n, len(events)))
    for j, e in enumerate(events):
        for g, w in weight_map[e].items():
            cell = table.cell(g, g_plus(table, g, e))
            estimates[j] += w * cell.estimate
            influence[:, j] += w * cell.influence
    ses = np.sqrt(np.mean(influence**2, axis=0) / n)
    return events, estimates, ses, influence


def g_plus(table: GroupTimeTable, g: int, e: int) -> int:
    """Period label sitting e slots after cohort g on the period grid."""
    return table.periods[table.periods.index(g) + e]


def event_study(table: GroupTimeTable) -> EventStudyCurve:
    """Size-weighted aggregation of ATT(g, g+e) at each available event time."""
    if not table.effects:
        raise UsageError("cannot aggregate an empty group-time table")
    cells_by_event: dict[int, list[int]] = {}
    for eff in table.effects:
        cells_by_event.setdefault(eff.event_time, []).append(eff.group)

    weight_map: dict[int, dict[int, float]] = {}
    for e, gs in cells_by_event.items():
        total = sum(table.group_sizes[g][0] for g in gs)
        weight_map[e] = {g: table.group_sizes[g][0] / total for g in gs}

    events, estimates, ses, influence = _combine(table, weight_map)
    curve = EventStudyCurve(
        event_times=events,
        estimates=estimates,
        ses=ses,
        influence=influence,
        weights=AggregationWeights(weight_map),
        n_units=table.n_units,
        estimator=table.estimator,
        cohort_counts={g: table.group_sizes[g][1] for g in table.group_sizes},
    )
    try:
        curve = replace(curve, overall=overall_att(curve))
    except NoPostPeriods:
        pass
    return curve


def event_study_balanced(table: GroupTimeTable, window: tuple[int, int]) -> EventStudyCurve:
    """Aggregation restricted to cohorts observed over the whole window.

    Cohort weights are fixed across event times inside the window, so the
    composition never changes along the curve.  Event time -1 inside the
    window is trivially satisfied (it is identically zero by construction)
    and omitted from the emitted points.
    """
    lo, hi = int(window[0]), int(window[1])
    if lo > hi:
        raise UsageError(f"window {window} is empty")
    wanted = [e for e in range(lo, hi + 1) if e != -1]

    qualifying = []
    for g in sorted(table.group_sizes):
        ig = table.periods.index(g)
        if ig + lo < 0 or ig + hi >= len(table.periods):
            continue
        if all(any(c.group == g and c.event_time == e for c in table.effects) for e in wanted):
            qualifying.append(g)
    if not qualifying:
        raise NoBalancedCohort((lo, hi))

    total = sum(table.group_sizes[g][0] for g in qualifying)
    shares = {g: table.group_sizes[g][0] / total for g in qualifying}
    weight_map = {e: dict(shares) for e in wanted}

    events, estimates, ses, influence = _combine(table, weight_map)
    curve = EventStudyCurve(
        event_times=events,
        estimates=estimates,
        ses=ses,
        influence=influence,
        weights=AggregationWeights(weight_map),
        n_units=table.n_units,
        estimator=table.estimator,
        cohort_counts={g: table.group_sizes[g][1] for g in qualifying},
        balanced=True,
        window=(lo, hi),
    )
    try:
        curve = replace(curve, overall=overall_att(curve))
    except NoPostPeriods:
        pass
    return curve


def overall_att(curve: EventStudyCurve) -> EffectEstimate:
    """Simple average of the post-treatment event-time effects."""
    post = [j for j, e in enumerate(curve.event_times) if e >= 0]
    if not post:
        raise NoPostPeriods("curve has no event time >= 0")
    psi = curve.influence[:, post].mean(axis=1)
    estimate = float(curve.estimates[post].mean())
    n = curve.n_units
    se = float(np.sqrt(np.mean(psi**2) / n))
    contributing = set()
    for j in post:
        contributing.update(curve.weights.by_event[curve.event_times[j]])
    n_treated = sum(curve.cohort_counts.get(g, 0) for g in contributing)
    return EffectEstimate(
        estimate=estimate,
        se=se,
        influence=psi,
        n_treated=n_treated,
        n_comparison=n - n_treated,
        estimator_tag=curve.estimator,
    )
