"""Panel data model: loading, validation, and group normalization.

The canonical data layout is a long-format CSV with one row per
(unit, period) pair::

    unit,period,outcome,first_treat[,weight][,cov1..covK]

``first_treat`` holds the period in which the unit's treatment starts and a
configurable sentinel (0 or an empty cell by default) for units never treated
in the sample.  Internally the never-treated cohort is the value
:data:`NEVER` (``float('inf')``), which makes cohort comparisons like
``groups > max(g, t)`` read exactly like the estimands they implement.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DuplicateObservation,
    MissingColumn,
    NoComparisonPossible,
    NonNumericCell,
    UnbalancedPanel,
    UsageError,
)

#: Cohort label of units never treated within the sample window.
NEVER: float = float("inf")


@dataclass(frozen=True)
class PanelSchema:
    """Column-name mapping and sentinel conventions for CSV ingestion.

    ``never_value`` is the numeric sentinel used in ``first_treat`` for
    never-treated units (0 by default; an empty cell always works).  When
    ``future_treatment_as_never`` is true, first-treatment dates after the
    last observed period are recoded to never-treated instead of rejected,
    matching the common convention for adoption dates beyond the sample.
    """

    unit: str = "unit"
    period: str = "period"
    outcome: str = "outcome"
    first_treat: str = "first_treat"
    weight: str | None = "weight"
    covariates: tuple[str, ...] | None = None
    cluster: str | None = None
    never_value: float = 0.0
    future_treatment_as_never: bool = False


@dataclass(frozen=True)
class UnitSeries:
    """One unit's full time series (a read-only view into the dataset)."""

    unit_id: str
    group: float
    weight: float
    outcomes: np.ndarray
    covariates: np.ndarray

    def baseline_covariates(self) -> np.ndarray:
        return self.covariates[0]


@dataclass(frozen=True)
class BalanceReport:
    """What :func:`normalize_groups` changed, unit by unit."""

    n_units: dict[float, int]
    n_periods: int
    dropped_units: tuple[tuple[str, str], ...]
    recoded_groups: dict[float, float]
    dropped_periods: tuple[int, ...] = ()

    @property
    def total_units(self) -> int:
        return sum(self.n_units.values()) + len(self.dropped_units)


@dataclass(frozen=True)
class PanelDataset:
    """Balanced panel in array form.

    ``outcomes`` is ``(n, T)`` and ``covariates`` is ``(n, T, K)`` aligned
    with ``periods``.  ``groups`` holds each unit's first-treatment period
    label (or :data:`NEVER`).  Instances are immutable and safe to share
    across threads.
    """

    unit_ids: tuple[str, ...]
    periods: tuple[int, ...]
    groups: np.ndarray
    weights: np.ndarray
    outcomes: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...] = ()
    weight_kind: str = "uniform"
    cluster_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        n, T = len(self.unit_ids), len(self.periods)
        if T < 2:
            raise UsageError("panel needs at least 2 periods")
        if any(b <= a for a, b in zip(self.periods, self.periods[1:])):
            raise UsageError("periods must be strictly increasing")
        if self.outcomes.shape != (n, T):
            raise UsageError(f"outcomes must have shape {(n, T)}")
        if self.covariates.shape[:2] != (n, T):
            raise UsageError(f"covariates must have shape ({n}, {T}, K)")
        if self.covariates.shape[2] != len(self.covariate_names):
            raise UsageError("covariate_names length must match covariate columns")
        if self.groups.shape != (n,) or self.weights.shape != (n,):
            raise UsageError("groups and weights must be length-n vectors")
        if not np.all(np.isfinite(self.outcomes)):
            raise UsageError("outcomes must be finite")
        if self.covariates.size and not np.all(np.isfinite(self.covariates)):
            raise UsageError("covariates must be finite")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise UsageError("weights must be finite and nonnegative")
        period_set = set(self.periods)
        for g in np.unique(self.groups):
            if g != NEVER and int(g) not in period_set:
                raise UsageError(
                    f"group {g} is not an observed period (nor the never sentinel)"
                )
            if np.sum(self.weights[self.groups == g]) <= 0:
                raise UsageError(f"group {g} carries zero total weight")
        if self.cluster_ids is not None and len(self.cluster_ids) != n:
            raise UsageError("cluster_ids must have one entry per unit")
        for arr in (self.groups, self.weights, self.outcomes, self.covariates):
            arr.setflags(write=False)

    # ------------------------------------------------------------ views

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[2]

    @property
    def units(self) -> list[UnitSeries]:
        return [
            UnitSeries(
                self.unit_ids[i],
                float(self.groups[i]),
                float(self.weights[i]),
                self.outcomes[i],
                self.covariates[i],
            )
            for i in range(self.n_units)
        ]

    def period_index(self, period: int) -> int:
        try:
            return self.periods.index(period)
        except ValueError:
            raise UsageError(f"period {period} not in panel") from None

    def covariates_at(self, period: int) -> np.ndarray:
        return self.covariates[:, self.period_index(period), :]

    def treated_cohorts(self) -> list[int]:
        gs = np.unique(self.groups)
        return [int(g) for g in gs if g != NEVER]

    def event_time(self, g: float, t: int) -> int:
        """Event time as index distance on the period list (gap-safe)."""
        return self.period_index(t) - self.period_index(int(g))

    def effective_clusters(self) -> tuple[str, ...]:
        return self.cluster_ids if self.cluster_ids is not None else self.unit_ids


def _parse_cell(raw: str, row: int, column: str) -> float:
    text = raw.strip()
    try:
        value = float(text)
    except ValueError:
        raise NonNumericCell(row, column, raw) from None
    if not math.isfinite(value):
        raise NonNumericCell(row, column, raw)
    return value


def load_panel(source, schema: PanelSchema | None = None) -> PanelDataset:
    """Read a long-format CSV into a validated :class:`PanelDataset`.

    ``source`` may be a path, bytes, or a text file object.  Covariate
    columns are taken from ``schema.covariates`` when given, otherwise every
    column not claimed by the schema is treated as a covariate.
    """
    schema = schema or PanelSchema()
    if isinstance(source, (bytes, bytearray)):
        stream = io.StringIO(source.decode("utf-8"))
        rows = _read_rows(stream, schema)
    elif hasattr(source, "read"):
        rows = _read_rows(source, schema)
    else:
        try:
            fh = open(source, "r", encoding="utf-8", newline="")
        except OSError as err:
            raise UsageError(f"cannot read input file {source}: {err}") from None
        with fh:
            rows = _read_rows(fh, schema)
    return _assemble(rows, schema)


def _read_rows(stream, schema: PanelSchema):
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise UsageError("CSV is empty") from None
    header = [h.strip() for h in header]
    for required in (schema.unit, schema.period, schema.outcome, schema.first_treat):
        if required not in header:
            raise MissingColumn(required)
    col = {name: header.index(name) for name in header}
    has_weight = schema.weight is not None and schema.weight in header
    has_cluster = schema.cluster is not None and schema.cluster in header
    if schema.covariates is not None:
        for name in schema.covariates:
            if name not in header:
                raise MissingColumn(name)
        cov_names = tuple(schema.covariates)
    else:
        claimed = {schema.unit, schema.period, schema.outcome, schema.first_treat}
        if has_weight:
            claimed.add(schema.weight)
        if has_cluster:
            claimed.add(schema.cluster)
        cov_names = tuple(h for h in header if h not in claimed)

    records = []
    for i, raw in enumerate(reader, start=1):
        if not raw or all(not c.strip() for c in raw):
            continue
        unit = raw[col[schema.unit]].strip()
        period = _parse_cell(raw[col[schema.period]], i, schema.period)
        if period != int(period):
            raise NonNumericCell(i, schema.period, raw[col[schema.period]])
        outcome = _parse_cell(raw[col[schema.outcome]], i, schema.outcome)
        ft_raw = raw[col[schema.first_treat]].strip()
        if ft_raw == "" or ft_raw.lower() in ("inf", "never"):
            group = NEVER
        else:
            group = _parse_cell(ft_raw, i, schema.first_treat)
            if group == schema.never_value:
                group = NEVER
        weight = (
            _parse_cell(raw[col[schema.weight]], i, schema.weight) if has_weight else 1.0
        )
        cluster = raw[col[schema.cluster]].strip() if has_cluster else None
        covs = [_parse_cell(raw[col[name]], i, name) for name in cov_names]
        records.append((unit, int(period), outcome, group, weight, cluster, covs))
    return records, cov_names, has_weight, has_cluster


def _assemble(read_result, schema: PanelSchema) -> PanelDataset:
    records, cov_names, has_weight, has_cluster = read_result
    if not records:
        raise UsageError("CSV has a header but no data rows")
    periods = tuple(sorted({r[1] for r in records}))
    pidx = {p: j for j, p in enumerate(periods)}
    unit_order: list[str] = []
    seen: dict[str, int] = {}
    for r in records:
        if r[0] not in seen:
            seen[r[0]] = len(unit_order)
            unit_order.append(r[0])
    n, T, K = len(unit_order), len(periods), len(cov_names)

    outcomes = np.full((n, T), np.nan)
    covariates = np.full((n, T, K), np.nan)
    groups = np.full(n, np.nan)
    weights = np.full(n, np.nan)
    clusters: list[str | None] = [None] * n
    filled = np.zeros((n, T), dtype=bool)

    for unit, period, outcome, group, weight, cluster, covs in records:
        i, j = seen[unit], pidx[period]
        if filled[i, j]:
            raise DuplicateObservation(unit, period)
        filled[i, j] = True
        outcomes[i, j] = outcome
        covariates[i, j, :] = covs
        if np.isnan(groups[i]):
            groups[i], weights[i], clusters[i] = group, weight, cluster
        else:
            if groups[i] != group:
                raise UsageError(
                    f"unit {unit!r} has conflicting first_treat values"
                )
            if weights[i] != weight:
                raise UsageError(f"unit {unit!r} has time-varying weights")

    for i in range(n):
        if not filled[i].all():
            missing = [periods[j] for j in np.flatnonzero(~filled[i])]
            raise UnbalancedPanel(unit_order[i], missing)

    period_set = set(periods)
    for i in range(n):
        g = groups[i]
        if g == NEVER:
            continue
        if g != int(g) or int(g) not in period_set:
            if schema.future_treatment_as_never and g > periods[-1]:
                groups[i] = NEVER
            else:
                raise UsageError(
                    f"unit {unit_order[i]!r}: first_treat {g:g} is not an observed "
                    "period (set future_treatment_as_never to recode late adopters)"
                )

    return PanelDataset(
        unit_ids=tuple(unit_order),
        periods=periods,
        groups=groups,
        weights=weights,
        outcomes=outcomes,
        covariates=covariates,
        covariate_names=cov_names,
        weight_kind="supplied" if has_weight else "uniform",
        cluster_ids=tuple(clusters) if has_cluster else None,
    )


def write_panel(data: PanelDataset, target, schema: PanelSchema | None = None) -> None:
    """Write the canonical long-format CSV (inverse of :func:`load_panel`)."""
    schema = schema or PanelSchema()
    own = not hasattr(target, "write")
    fh = open(target, "w", encoding="utf-8", newline="") if own else target
    try:
        writer = csv.writer(fh)
        header = [schema.unit, schema.period, schema.outcome, schema.first_treat]
        if data.weight_kind == "supplied":
            header.append(schema.weight or "weight")
        if data.cluster_ids is not None:
            header.append(schema.cluster or "cluster")
        header.extend(data.covariate_names)
        writer.writerow(header)
        for i, unit in enumerate(data.unit_ids):
            g = data.groups[i]
            ft = f"{schema.never_value:g}" if g == NEVER else f"{int(g)}"
            for j, period in enumerate(data.periods):
                row = [unit, period, repr(float(data.outcomes[i, j])), ft]
                if data.weight_kind == "supplied":
                    row.append(repr(float(data.weights[i])))
                if data.cluster_ids is not None:
                    row.append(data.cluster_ids[i])
                row.extend(repr(float(v)) for v in data.covariates[i, j])
                writer.writerow(row)
    finally:
        if own:
            fh.close()


def normalize_groups(data: PanelDataset) -> tuple[PanelDataset, BalanceReport]:
    """Prepare a loaded panel for estimation.

    If no never-treated cohort exists, periods from the last treatment date
    onward are dropped and that cohort is recoded to never-treated.  Units
    treated in the first available period are dropped (no pre-period).
    """
    groups = data.groups.copy()
    periods = list(data.periods)
    recoded: dict[float, float] = {}
    dropped_periods: tuple[int, ...] = ()

    if not np.any(groups == NEVER):
        last_g = int(groups.max())
        keep = [p for p in periods if p < last_g]
        dropped_periods = tuple(p for p in periods if p >= last_g)
        if len(keep) < 2:
            raise NoComparisonPossible(
                "fewer than 2 periods remain after recoding the last-treated cohort"
            )
        recoded[float(last_g)] = NEVER
        groups[groups == last_g] = NEVER
        periods = keep

    keep_j = [j for j, p in enumerate(data.periods) if p in set(periods)]
    first = periods[0]
    drop_mask = groups == first
    dropped = tuple(
        (data.unit_ids[i], f"treated in first available period {first}")
        for i in np.flatnonzero(drop_mask)
    )
    keep_i = np.flatnonzero(~drop_mask)

    if not np.any(groups[keep_i] == NEVER):
        raise NoComparisonPossible("no never-treated comparison group remains")
    if keep_i.size == 0:
        raise NoComparisonPossible("all units dropped during normalization")

    out = PanelDataset(
        unit_ids=tuple(data.unit_ids[i] for i in keep_i),
        periods=tuple(periods),
        groups=groups[keep_i].copy(),
        weights=data.weights[keep_i].copy(),
        outcomes=data.outcomes[np.ix_(keep_i, keep_j)].copy(),
        covariates=data.covariates[np.ix_(keep_i, keep_j)].copy(),
        covariate_names=data.covariate_names,
        weight_kind=data.weight_kind,
        cluster_ids=(
            tuple(data.cluster_ids[i] for i in keep_i)
            if data.cluster_ids is not None
            else None
        ),
    )
    counts: dict[float, int] = {}
    for g in out.groups:
        counts[float(g)] = counts.get(float(g), 0) + 1
    report = BalanceReport(
        n_units=counts,
        n_periods=out.n_periods,
        dropped_units=dropped,
        recoded_groups=recoded,
        dropped_periods=dropped_periods,
    )
    return out, report


def is_normalized(data: PanelDataset) -> bool:
    """True when an infinity cohort exists and no unit is treated at t=min."""
    has_never = bool(np.any(data.groups == NEVER))
    first = data.periods[0]
    return has_never and not bool(np.any(data.groups == first))
