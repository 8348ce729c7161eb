"""Two-way within transformation shared by the TWFE-style fits.

Unit effects are removed by exact within-unit demeaning (valid under weighted
least squares because sampling weights are per-unit constants), period
effects enter as demeaned period dummies, and any treatment-design columns
ride along as an (n, T, p) tensor.  Returns coefficients together with
per-unit influence rows scaled so ``se_j = sqrt(mean(psi[:, j]**2) / n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nuisance import fit_wls
from .panel import PanelDataset


@dataclass(frozen=True)
class WithinFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    influence: np.ndarray  # (n, p) for the named columns only
    ses: np.ndarray
    n_units: int
    n_periods: int


def within_wls(
    data: PanelDataset,
    extra: np.ndarray,
    names: tuple[str, ...],
    weighted: bool = True,
) -> WithinFit:
    n, T = data.n_units, data.n_periods
    p = extra.shape[2]
    w_units = data.weights.astype(float) if weighted else np.ones(n)

    y_dm = data.outcomes - data.outcomes.mean(axis=1, keepdims=True)
    extra_dm = extra - extra.mean(axis=1, keepdims=True)

    # Demeaned period dummies are identical for every unit on a balanced panel.
    period_block = np.eye(T)[:, 1:] - 1.0 / T  # (T, T-1)
    x = np.concatenate(
        [np.tile(period_block, (n, 1)), extra_dm.reshape(n * T, p)], axis=1
    )
    y = y_dm.reshape(n * T)
    w_rows = np.repeat(w_units, T)

    fit = fit_wls(x, y, w_rows)
    beta = fit.coefficients
    resid = y - x @ beta

    n_rows = n * T
    gram = (w_rows[:, None] * x).T @ x / n_rows
    rep_rows = np.linalg.solve(gram, ((w_rows * resid)[:, None] * x).T).T
    rep_units = rep_rows.reshape(n, T, x.shape[1]).sum(axis=1) * (n / n_rows)

    sel = slice(T - 1, None)  # named columns sit after the period dummies
    psi = rep_units[:, sel]
    ses = np.sqrt(np.mean(psi**2, axis=0) / n)
    return WithinFit(
        names=tuple(names),
        coefficients=beta[sel].copy(),
        influence=psi,
        ses=ses,
        n_units=n,
        n_periods=T,
    )
