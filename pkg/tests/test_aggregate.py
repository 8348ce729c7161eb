import numpy as np
import pytest

from didkit import (
    NEVER,
    DgpConfig,
    att_gt,
    event_study,
    event_study_balanced,
    normalize_groups,
    overall_att,
    simulate_staggered,
    twfe_fit,
)
from didkit.errors import NoBalancedCohort, NoPostPeriods, UsageError

from conftest import make_panel


def table_from(shares, effects, seed=31, n=500, n_periods=8, noise=1.0, weighted=True):
    cfg = DgpConfig(
        n_units=n,
        n_periods=n_periods,
        cohort_shares=shares,
        effects=effects,
        selection_on_unit_effect=0.5,
        noise_sd=noise,
        weight_distribution="lognormal" if weighted else "uniform",
        seed=seed,
    )
    data, truth = simulate_staggered(cfg)
    norm, _ = normalize_groups(data)
    return norm, att_gt(norm, assumption="not_yet", estimator="means"), truth


def test_single_cohort_curve_is_the_table_row():
    data, table, _ = table_from({4.0: 0.4, NEVER: 0.6}, effects=1.0)
    curve = event_study(table)
    for cell in table.effects:
        est, se = curve.point(cell.event_time)
        assert est == pytest.approx(cell.estimate, abs=1e-12)
        assert se == pytest.approx(cell.se, abs=1e-12)
    for e, row in curve.weights.by_event.items():
        assert row == {4: pytest.approx(1.0)}


def test_equal_cohorts_average_effects():
    table = _toy_table(sizes={2: 10.0, 3: 10.0}, effects={(2, 0): 1.0, (3, 0): 3.0})
    curve = event_study(table)
    assert curve.point(0)[0] == pytest.approx(2.0, abs=1e-12)


def test_cohort_shares_weight_effects():
    table = _toy_table(sizes={2: 80.0, 3: 20.0}, effects={(2, 0): 1.0, (3, 0): 3.0})
    curve = event_study(table)
    # brute-force share recount: 0.8 * 1 + 0.2 * 3
    assert curve.point(0)[0] == pytest.approx(0.8 * 1.0 + 0.2 * 3.0, abs=1e-12)
    assert curve.weights.by_event[0][2] == pytest.approx(0.8)


def _toy_table(sizes, effects):
    """Hand-built GroupTimeTable over periods 1..5 with given cell effects."""
    from didkit.staggered import GroupTimeEffect, GroupTimeTable

    n = 40
    cells = []
    for (g, e), value in effects.items():
        t = g + e
        psi = np.zeros(n)
        psi[:10] = np.sin(np.arange(10) + g + e) * 0.3
        psi -= psi.mean()
        cells.append(
            GroupTimeEffect(
                group=g,
                period=t,
                event_time=e,
                estimate=value,
                se=float(np.sqrt(np.mean(psi**2) / n)),
                influence=psi,
                comparison_tag="not_yet",
                estimator_tag="means",
                n_treated=10,
                n_comparison=20,
            )
        )
    return GroupTimeTable(
        effects=tuple(sorted(cells, key=lambda c: (c.group, c.period))),
        skipped=(),
        group_sizes={g: (s, int(s)) for g, s in sizes.items()},
        assumption="not_yet",
        estimator="means",
        base_period="g-1",
        periods=(1, 2, 3, 4, 5),
        n_units=n,
    )


def test_weights_sum_to_one_and_ignore_weight_scale():
    data, table, _ = table_from(
        {3.0: 0.3, 5.0: 0.3, NEVER: 0.4}, effects=lambda g, e: e + 1.0
    )
    curve = event_study(table)
    for e, total in curve.weights.ledger.items():
        assert total == pytest.approx(1.0, abs=1e-12)
    scaled = make_panel(
        data.groups, data.outcomes, weights=data.weights * 55.0,
        covariates=data.covariates, cov_names=data.covariate_names,
    )
    curve2 = event_study(att_gt(scaled, assumption="not_yet", estimator="means"))
    for e in curve.weights.by_event:
        for g, w in curve.weights.by_event[e].items():
            assert curve2.weights.by_event[e][g] == pytest.approx(w, abs=1e-12)


def test_constant_table_aggregates_to_constant():
    data, table, _ = table_from({3.0: 0.3, 5.0: 0.3, NEVER: 0.4}, effects=3.25, noise=0.0)
    # noiseless + no covariate trends: every post cell is exactly 3.25
    curve = event_study(table)
    for e in curve.event_times:
        if e >= 0:
            assert curve.point(e)[0] == pytest.approx(3.25, abs=1e-9)
    assert overall_att(curve).estimate == pytest.approx(3.25, abs=1e-9)


def test_curve_se_matches_influence():
    _, table, _ = table_from({3.0: 0.3, 5.0: 0.3, NEVER: 0.4}, effects=1.0)
    curve = event_study(table)
    n = curve.n_units
    recomputed = np.sqrt(np.mean(curve.influence**2, axis=0) / n)
    np.testing.assert_allclose(curve.ses, recomputed, atol=1e-12)
    ov = overall_att(curve)
    assert ov.se == pytest.approx(np.sqrt(np.mean(ov.influence**2) / n), abs=1e-12)


# ------------------------------------------------------------- balanced


def test_balanced_window_single_supported_cohort():
    # cohorts at 4 and 7 over 8 periods: only g=4 supports e in [0, 3]
    data, table, _ = table_from({4.0: 0.3, 7.0: 0.2, NEVER: 0.5}, effects=lambda g, e: g + e)
    curve = event_study_balanced(table, (0, 3))
    assert curve.balanced
    for e in curve.event_times:
        assert curve.weights.by_event[e] == {4: pytest.approx(1.0)}
    # late cohort contributes at e=0 in the unbalanced curve
    unbalanced = event_study(table)
    assert 7 in unbalanced.weights.by_event[0]


def test_balanced_window_inside_single_cohort_support_matches_rows():
    data, table, _ = table_from({4.0: 0.4, NEVER: 0.6}, effects=lambda g, e: 2.0 * e)
    curve = event_study_balanced(table, (0, 2))
    for e in (0, 1, 2):
        cell = table.cell(4, 4 + e)
        assert curve.point(e)[0] == pytest.approx(cell.estimate, abs=1e-12)


def test_widening_window_never_adds_cohorts():
    _, table, _ = table_from(
        {3.0: 0.25, 5.0: 0.25, 7.0: 0.15, NEVER: 0.35}, effects=1.0
    )
    previous = None
    for hi in (0, 1, 2, 3):
        try:
            curve = event_study_balanced(table, (0, hi))
        except NoBalancedCohort:
            curve = None
        contributing = (
            set(curve.weights.by_event[0]) if curve is not None else set()
        )
        if previous is not None:
            assert contributing <= previous
        previous = contributing


def test_window_spanning_base_period_omits_minus_one():
    # e = -1 is identically zero by construction; a window across it is
    # satisfiable and the emitted curve simply skips that point
    data, table, _ = table_from({4.0: 0.4, NEVER: 0.6}, effects=1.0)
    curve = event_study_balanced(table, (-2, 1))
    assert curve.event_times == (-2, 0, 1)
    assert curve.window == (-2, 1)


def test_no_balanced_cohort_raises():
    _, table, _ = table_from({7.0: 0.4, NEVER: 0.6}, effects=1.0)
    with pytest.raises(NoBalancedCohort):
        event_study_balanced(table, (0, 5))


# --------------------------------------------------------------- overall


def test_overall_flat_curve():
    table = _toy_table(sizes={2: 10.0}, effects={(2, 0): 4.0, (2, 1): 4.0, (2, 2): 4.0})
    assert overall_att(event_study(table)).estimate == pytest.approx(4.0, abs=1e-12)


def test_overall_is_arithmetic_mean():
    table = _toy_table(sizes={2: 10.0}, effects={(2, 0): 0.0, (2, 1): -1.0, (2, 2): -2.0})
    assert overall_att(event_study(table)).estimate == pytest.approx(-1.0, abs=1e-12)


def test_overall_requires_post_periods():
    table = _toy_table(sizes={4: 10.0}, effects={(4, -2): 0.3, (4, -3): 0.1})
    curve = event_study(table)
    with pytest.raises(NoPostPeriods):
        overall_att(curve)
    assert curve.overall is None


def test_empty_table_rejected():
    from didkit.staggered import GroupTimeTable

    empty = GroupTimeTable((), (), {}, "never", "means", "g-1", (1, 2), 4)
    with pytest.raises(UsageError):
        event_study(empty)


# ------------------------------------------- overall vs static TWFE gap


def test_overall_minus_twfe_equals_mean_pretrend():
    rng = np.random.default_rng(44)
    n, T, g = 240, 9, 5
    groups = np.where(rng.random(n) < 0.45, float(g), NEVER)
    eta = rng.normal(size=n)
    y = eta[:, None] + 0.4 * rng.normal(size=(n, T))
    # engineered differential trend: treated drift up through the whole panel
    y += np.where(groups == g, 0.3, 0.0)[:, None] * np.arange(1, T + 1)[None, :]
    data = make_panel(groups, y)
    table = att_gt(data, assumption="never", estimator="means")
    curve = event_study(table)
    ov = overall_att(curve)
    beta = twfe_fit(data, "static").coefficient("treated_post")
    pre = [curve.point(e)[0] for e in curve.event_times if e < 0] + [0.0]
    assert ov.estimate != pytest.approx(beta, abs=0.05)
    assert ov.estimate - beta == pytest.approx(np.mean(pre), abs=1e-8)
