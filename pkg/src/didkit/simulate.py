"""Synthetic staggered-adoption panels with known group-time effects.

The untreated path is additive in a unit fixed effect, optional period
shocks, and covariate-driven linear trends::

    Y(never)_{it} = eta_i + theta_t + (X_i @ trend) * t + eps_{it}

Cohort membership comes from a multinomial logit whose log-odds tilt the
configured shares by a selection index in (eta_i, X_i); treated cohorts share
one tilt, the never-treated class is the reference.  Observed outcomes add
the deterministic effect tau(g, e) from treatment onward, so every realized
ATT(g,t) is known exactly.

Selection on the fixed effect alone leaves unconditional parallel trends
intact (eta differences out); selection on covariates with nonzero trend
loadings breaks it while conditional parallel trends still holds, which is
precisely the regime the covariate-adjusted estimators are built for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._rng import stream
from .errors import InfeasibleShares, UsageError
from .panel import NEVER, PanelDataset

_STREAM_UNIT_EFFECT = 0
_STREAM_COVARIATES = 1
_STREAM_ASSIGNMENT = 2
_STREAM_NOISE = 3
_STREAM_WEIGHTS = 4
_STREAM_SHOCKS = 5


@dataclass(frozen=True)
class DgpConfig:
    """Everything that pins down one synthetic panel (given a seed)."""

    n_units: int
    n_periods: int
    cohort_shares: dict[float, float]
    effects: object = 0.0  # float | {(g, e): tau} | callable(g, e) -> tau
    unit_effect_sd: float = 1.0
    period_shocks: tuple[float, ...] | None = None
    period_shock_sd: float = 0.0
    n_covariates: int = 0
    covariate_sd: float = 1.0
    selection_on_unit_effect: float = 0.0
    selection_on_covariates: tuple[float, ...] = ()
    trend_coefficients: tuple[float, ...] = ()
    noise_sd: float = 1.0
    weight_distribution: str = "uniform"  # or "lognormal"
    weight_log_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        total = sum(self.cohort_shares.values())
        if abs(total - 1.0) > 1e-9:
            raise InfeasibleShares(f"shares sum to {total:g}, not 1")
        if any(s <= 0 for s in self.cohort_shares.values()):
            raise InfeasibleShares("every listed cohort needs a positive share")
        if self.n_units < 4 * len(self.cohort_shares):
            raise InfeasibleShares(
                f"{self.n_units} units cannot support {len(self.cohort_shares)} cohorts "
                "(need at least 4 per cohort)"
            )
        for g in self.cohort_shares:
            if g != NEVER and not (1 <= int(g) <= self.n_periods):
                raise UsageError(f"cohort {g} outside the 1..{self.n_periods} window")
        if self.selection_on_covariates and len(self.selection_on_covariates) != self.n_covariates:
            raise UsageError("selection_on_covariates length must equal n_covariates")
        if self.trend_coefficients and len(self.trend_coefficients) != self.n_covariates:
            raise UsageError("trend_coefficients length must equal n_covariates")

    def effect(self, g: int, e: int) -> float:
        if callable(self.effects):
            return float(self.effects(g, e))
        if isinstance(self.effects, dict):
            return float(self.effects.get((g, e), 0.0))
        return float(self.effects)


@dataclass(frozen=True)
class TrueEffects:
    """Ground truth implied by a config: ATT(g,t) map and event-study curve."""

    att: dict[tuple[int, int], float]
    event_curve: dict[int, float]
    cohort_shares: dict[float, float] = field(default_factory=dict)


def _true_effects(cfg: DgpConfig) -> TrueEffects:
    treated = sorted(int(g) for g in cfg.cohort_shares if g != NEVER)
    att = {}
    for g in treated:
        for t in range(g, cfg.n_periods + 1):
            att[(g, t)] = cfg.effect(g, t - g)
    curve = {}
    emax = cfg.n_periods - min(treated) if treated else -1
    emin = -(max(treated) - 1) if treated else 0
    for e in range(emin, emax + 1):
        if e < 0:
            continue
        cohorts = [g for g in treated if 1 <= g + e <= cfg.n_periods]
        if not cohorts:
            continue
        total = sum(cfg.cohort_shares[float(g)] for g in cohorts)
        curve[e] = sum(
            cfg.cohort_shares[float(g)] / total * cfg.effect(g, e) for g in cohorts
        )
    return TrueEffects(att=att, event_curve=curve, cohort_shares=dict(cfg.cohort_shares))


def simulate_staggered(cfg: DgpConfig) -> tuple[PanelDataset, TrueEffects]:
    """Draw one panel; byte-identical output for identical (cfg, seed)."""
    n, T, K = cfg.n_units, cfg.n_periods, cfg.n_covariates

    eta = stream(cfg.seed, _STREAM_UNIT_EFFECT).normal(0.0, cfg.unit_effect_sd, size=n)
    x = (
        stream(cfg.seed, _STREAM_COVARIATES).normal(0.0, cfg.covariate_sd, size=(n, K))
        if K
        else np.zeros((n, 0))
    )

    labels = list(cfg.cohort_shares)
    shares = np.array([cfg.cohort_shares[g] for g in labels])
    index = np.zeros(n)
    if cfg.selection_on_unit_effect:
        index = index + cfg.selection_on_unit_effect * eta
    if cfg.selection_on_covariates:
        index = index + x @ np.asarray(cfg.selection_on_covariates)
    tilt = np.array([0.0 if g == NEVER else 1.0 for g in labels])
    logits = np.log(shares)[None, :] + index[:, None] * tilt[None, :]
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    u = stream(cfg.seed, _STREAM_ASSIGNMENT).random(n)
    choice = (probs.cumsum(axis=1) < u[:, None]).sum(axis=1)
    groups = np.array([labels[c] for c in choice], dtype=float)
    for g in labels:
        if not np.any(groups == g):
            raise InfeasibleShares(f"cohort {g} received zero units at n={n}")

    if cfg.period_shocks is not None:
        if len(cfg.period_shocks) != T:
            raise UsageError("period_shocks must have one entry per period")
        theta = np.asarray(cfg.period_shocks, dtype=float)
    elif cfg.period_shock_sd:
        theta = stream(cfg.seed, _STREAM_SHOCKS).normal(0.0, cfg.period_shock_sd, size=T)
    else:
        theta = np.zeros(T)

    t_grid = np.arange(1, T + 1, dtype=float)
    trend = x @ np.asarray(cfg.trend_coefficients) if cfg.trend_coefficients else np.zeros(n)
    y0 = eta[:, None] + theta[None, :] + trend[:, None] * t_grid[None, :]
    if cfg.noise_sd:
        y0 = y0 + stream(cfg.seed, _STREAM_NOISE).normal(0.0, cfg.noise_sd, size=(n, T))

    y = y0.copy()
    for g in sorted({g for g in labels if g != NEVER}):
        rows = np.flatnonzero(groups == g)
        for t in range(int(g), T + 1):
            y[rows, t - 1] += cfg.effect(int(g), t - int(g))

    if cfg.weight_distribution == "uniform":
        weights = np.ones(n)
        weight_kind = "uniform"
    elif cfg.weight_distribution == "lognormal":
        weights = np.exp(stream(cfg.seed, _STREAM_WEIGHTS).normal(0.0, cfg.weight_log_sd, size=n))
        weight_kind = "supplied"
    else:
        raise UsageError(f"unknown weight distribution {cfg.weight_distribution!r}")

    width = len(str(n))
    data = PanelDataset(
        unit_ids=tuple(f"u{i:0{width}d}" for i in range(1, n + 1)),
        periods=tuple(range(1, T + 1)),
        groups=groups,
        weights=weights,
        outcomes=y,
        covariates=np.repeat(x[:, None, :], T, axis=1),
        covariate_names=tuple(f"x{k + 1}" for k in range(K)),
        weight_kind=weight_kind,
    )
    return data, _true_effects(cfg)
