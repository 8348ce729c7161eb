import numpy as np
import pytest

from didkit import NEVER, PanelDataset


def make_panel(groups, outcomes, weights=None, covariates=None, cov_names=None,
               periods=None, cluster_ids=None):
    """Assemble a PanelDataset from plain arrays with sensible defaults."""
    outcomes = np.asarray(outcomes, dtype=float)
    n, T = outcomes.shape
    groups = np.asarray(groups, dtype=float)
    if covariates is None:
        covariates = np.zeros((n, T, 0))
        cov_names = ()
    else:
        covariates = np.asarray(covariates, dtype=float)
        if covariates.ndim == 2:  # time-invariant: replicate across periods
            covariates = np.repeat(covariates[:, None, :], T, axis=1)
        if cov_names is None:
            cov_names = tuple(f"x{k+1}" for k in range(covariates.shape[2]))
    return PanelDataset(
        unit_ids=tuple(f"u{i:04d}" for i in range(n)),
        periods=tuple(periods) if periods is not None else tuple(range(1, T + 1)),
        groups=groups,
        weights=np.ones(n) if weights is None else np.asarray(weights, dtype=float),
        outcomes=outcomes,
        covariates=covariates,
        covariate_names=tuple(cov_names),
        weight_kind="uniform" if weights is None else "supplied",
        cluster_ids=cluster_ids,
    )


def mean_matching_panel(m_t_pre, m_c_pre, m_t_post, m_c_post, w_treat=1.0, w_comp=1.0):
    """Two units per arm whose (weighted) group-period means hit the targets."""
    outcomes = np.array(
        [
            [m_t_pre + 1.0, m_t_post + 2.0],
            [m_t_pre - 1.0, m_t_post - 2.0],
            [m_c_pre + 3.0, m_c_post - 1.0],
            [m_c_pre - 3.0, m_c_post + 1.0],
        ]
    )
    groups = np.array([2.0, 2.0, NEVER, NEVER])
    weights = np.array([w_treat, w_treat, w_comp, w_comp])
    return make_panel(groups, outcomes, weights=weights)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
