"""Balance tables, TWFE reference fits, and the negative-weight decomposition.

The TWFE fits exist for equivalence checks and pitfall demonstrations, not
as recommended estimators: the static specification on staggered data mixes
clean and already-treated comparisons, and the two-period decomposition
makes the resulting negative weighting explicit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._withinreg import within_wls
from .errors import EmptyArm, UsageError, WrongShape
from .panel import NEVER, PanelDataset
from .staggered import sun_abraham_fit

TWFE_SPECS = ("static", "dynamic_2xT", "saturated_SA")


@dataclass(frozen=True)
class BalanceRow:
    variable: str
    kind: str  # "level" or "difference"
    mean_treated: float
    mean_comparison: float
    var_treated: float
    var_comparison: float
    normalized_difference: float
    degenerate: bool = False  # both arms constant with unequal means


@dataclass(frozen=True)
class BalanceTable:
    rows: tuple[BalanceRow, ...]
    weighted: bool
    pre_period: int
    post_period: int
    n_treated: int
    n_comparison: int

    def row(self, variable: str, kind: str) -> BalanceRow:
        for r in self.rows:
            if r.variable == variable and r.kind == kind:
                return r
        raise KeyError((variable, kind))


@dataclass(frozen=True)
class TwfeFit:
    spec: str
    names: tuple[str, ...]
    coefficients: np.ndarray
    ses: np.ndarray
    influence: np.ndarray
    n_units: int
    n_periods: int
    weighted: bool

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])

    def se(self, name: str) -> float:
        return float(self.ses[self.names.index(name)])


@dataclass(frozen=True)
class BaconDecomposition:
    """Two-period, three-group split of the static TWFE coefficient.

    ``did_vs_never`` is the trend contrast between the newly treated and the
    never treated (it estimates the contemporaneous effect); ``did_vs_already``
    contrasts the newly treated with the already-treated group.  Their
    ``(1 - w1, w1)`` combination reconstructs the TWFE coefficient exactly.
    In causal terms the estimand places weight 1 on the contemporaneous
    effect, +w1 on the already-treated group's first-period effect, and -w1
    on its second-period effect; ``estimand_weights`` records those.
    """

    did_vs_never: float
    did_vs_already: float
    weight_never: float
    weight_already: float
    w1: float
    reconstructed: float
    estimand_weights: dict[str, float]


def _weighted_mean_var(x: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    total = np.sum(w)
    mean = float(np.sum(w * x) / total)
    denom = total - 1.0
    if denom <= 0:
        return mean, 0.0
    var = float(np.sum(w * (x - mean) ** 2) / denom)
    return mean, var


def balance_table(
    data: PanelDataset,
    pre: int,
    post: int,
    weighted: bool = False,
    treated_group: int | None = None,
) -> BalanceTable:
    """Normalized covariate differences in levels and in changes.

    The treated arm is the cohort ``treated_group`` when given, otherwise
    every eventually-treated unit; the comparison arm is the never-treated
    pool.  Variances use the n-1 denominator (frequency-weight form when
    weighted).  A variable constant in both arms gets a 0 normalized
    difference if the means agree and an infinite, flagged one otherwise.
    """
    if data.n_covariates == 0:
        raise UsageError("balance_table needs covariates")
    groups = data.groups
    treated = (groups == treated_group) if treated_group is not None else (groups != NEVER)
    comparison = groups == NEVER
    if not treated.any():
        raise EmptyArm("treated")
    if not comparison.any():
        raise EmptyArm("comparison")
    w = data.weights if weighted else np.ones(data.n_units)

    x_pre = data.covariates_at(pre)
    x_post = data.covariates_at(post)
    rows = []
    for k, name in enumerate(data.covariate_names):
        for kind, values in (("level", x_pre[:, k]), ("difference", x_post[:, k] - x_pre[:, k])):
            m_t, v_t = _weighted_mean_var(values[treated], w[treated])
            m_c, v_c = _weighted_mean_var(values[comparison], w[comparison])
            pooled = (v_t + v_c) / 2.0
            degenerate = False
            if pooled > 0:
                nd = (m_t - m_c) / math.sqrt(pooled)
            elif m_t == m_c:
                nd = 0.0
            else:
                nd = math.copysign(math.inf, m_t - m_c)
                degenerate = True
            rows.append(
                BalanceRow(name, kind, m_t, m_c, v_t, v_c, float(nd), degenerate)
            )
    return BalanceTable(
        rows=tuple(rows),
        weighted=weighted,
        pre_period=pre,
        post_period=post,
        n_treated=int(treated.sum()),
        n_comparison=int(comparison.sum()),
    )


def twfe_fit(data: PanelDataset, spec: str = "static", weighted: bool = True) -> TwfeFit:
    """Two-way fixed-effects reference regressions.

    ``static`` regresses on the treatment-status dummy 1{t >= G_i};
    ``dynamic_2xT`` needs a single treated cohort and fits one interaction
    per non-base period; ``saturated_SA`` is the cohort-by-event-time
    saturated regression.  Standard errors are influence-function based,
    clustered by unit.
    """
    if spec not in TWFE_SPECS:
        raise UsageError(f"unknown spec {spec!r}; valid values: " + ", ".join(TWFE_SPECS))
    n, T = data.n_units, data.n_periods

    if spec == "saturated_SA":
        table = sun_abraham_fit(data, weighted=weighted)
        names = tuple(f"g{c.group}_e{c.event_time}" for c in table.effects)
        return TwfeFit(
            spec=spec,
            names=names,
            coefficients=np.array([c.estimate for c in table.effects]),
            ses=np.array([c.se for c in table.effects]),
            influence=np.column_stack([c.influence for c in table.effects]),
            n_units=n,
            n_periods=T,
            weighted=weighted,
        )

    if spec == "static":
        status = np.zeros((n, T))
        for j, t in enumerate(data.periods):
            status[:, j] = (data.groups <= t).astype(float)
        if not status.any() or status.all():
            raise UsageError("static spec needs variation in treatment status")
        fit = within_wls(data, status[:, :, None], ("treated_post",), weighted=weighted)
    else:  # dynamic_2xT
        cohorts = data.treated_cohorts()
        if len(cohorts) != 1:
            raise UsageError("dynamic_2xT requires exactly one treated cohort")
        g = cohorts[0]
        ig = data.period_index(g)
        in_cohort = (data.groups == g).astype(float)
        blocks, names = [], []
        for it, t in enumerate(data.periods):
            if it == ig - 1:
                continue
            block = np.zeros((n, T))
            block[:, it] = in_cohort
            blocks.append(block)
            names.append(f"t{t}")
        fit = within_wls(data, np.stack(blocks, axis=2), tuple(names), weighted=weighted)

    return TwfeFit(
        spec=spec,
        names=fit.names,
        coefficients=fit.coefficients,
        ses=fit.ses,
        influence=fit.influence,
        n_units=n,
        n_periods=T,
        weighted=weighted,
    )


def bacon_two_period(data: PanelDataset) -> BaconDecomposition:
    """Exact decomposition of static TWFE on a 2-period, 3-group panel.

    The groups must be: treated in the first period, treated in the second,
    and never treated.  The weighted average of the two trend contrasts with
    weights (1-w1, w1), w1 the already-treated share of the untreated-status
    pool, reconstructs the TWFE coefficient exactly.
    """
    if data.n_periods != 2:
        raise WrongShape("decomposition needs exactly 2 periods")
    p1, p2 = data.periods
    groups = data.groups
    observed = set(np.unique(groups).tolist())
    if not observed <= {float(p1), float(p2), NEVER}:
        raise WrongShape(
            f"groups must lie in {{{p1}, {p2}, never}}; found {sorted(observed)}"
        )
    for g, label in ((float(p1), "already-treated"), (float(p2), "newly-treated"), (NEVER, "never-treated")):
        if g not in observed:
            raise WrongShape(f"missing the {label} group")

    w = data.weights.astype(float)
    dy = data.outcomes[:, 1] - data.outcomes[:, 0]

    def mean(mask):
        return float(np.sum(w[mask] * dy[mask]) / np.sum(w[mask]))

    already, newly, never = groups == p1, groups == p2, groups == NEVER
    share_already = float(np.sum(w[already]))
    share_never = float(np.sum(w[never]))
    w1 = share_already / (share_already + share_never)

    did_vs_never = mean(newly) - mean(never)
    did_vs_already = mean(newly) - mean(already)
    reconstructed = (1.0 - w1) * did_vs_never + w1 * did_vs_already
    return BaconDecomposition(
        did_vs_never=did_vs_never,
        did_vs_already=did_vs_already,
        weight_never=1.0 - w1,
        weight_already=w1,
        w1=w1,
        reconstructed=reconstructed,
        estimand_weights={"att_new_post": 1.0, "att_already_pre": w1, "att_already_post": -w1},
    )
