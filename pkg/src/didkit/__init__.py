"""Forward-engineered difference-in-differences toolkit.

2x2 building blocks (means / regression-adjusted / IPW / doubly robust),
staggered group-time effects under explicit parallel-trends choices,
event-study aggregation with simultaneous bands, TWFE diagnostics, and a
synthetic-data oracle.
"""

from .aggregate import (
    AggregationWeights,
    EventStudyCurve,
    event_study,
    event_study_balanced,
    overall_att,
)
from .diagnostics import (
    BaconDecomposition,
    BalanceTable,
    TwfeFit,
    bacon_two_period,
    balance_table,
    twfe_fit,
)
from .inference import (
    BandResult,
    PretrendTest,
    SensitivityResult,
    attach_bands,
    clustered_se,
    max_pre_step,
    pretrend_joint_test,
    sensitivity_bounds,
    sup_t_band,
)
from .nuisance import (
    OutcomeModelFit,
    OverlapReport,
    PropensityFit,
    default_design,
    fit_logit,
    fit_wls,
    intercept_only,
    overlap_report,
    zero_design,
)
from .panel import (
    NEVER,
    BalanceReport,
    PanelDataset,
    PanelSchema,
    UnitSeries,
    load_panel,
    normalize_groups,
    write_panel,
)
from .simulate import DgpConfig, TrueEffects, simulate_staggered
from .staggered import GroupTimeEffect, GroupTimeTable, att_gt, sun_abraham_fit
from .twobytwo import (
    EffectEstimate,
    TwoByTwoFrame,
    att_by_partition,
    att_dr,
    att_ipw,
    att_means,
    att_ra,
    build_frame,
)

__version__ = "0.1.0"

__all__ = [
    "NEVER",
    "AggregationWeights",
    "BaconDecomposition",
    "BalanceReport",
    "BalanceTable",
    "BandResult",
    "DgpConfig",
    "EffectEstimate",
    "EventStudyCurve",
    "GroupTimeEffect",
    "GroupTimeTable",
    "OutcomeModelFit",
    "OverlapReport",
    "PanelDataset",
    "PanelSchema",
    "PretrendTest",
    "PropensityFit",
    "SensitivityResult",
    "TrueEffects",
    "TwfeFit",
    "TwoByTwoFrame",
    "UnitSeries",
    "att_by_partition",
    "att_dr",
    "att_gt",
    "att_ipw",
    "att_means",
    "att_ra",
    "attach_bands",
    "bacon_two_period",
    "balance_table",
    "build_frame",
    "clustered_se",
    "default_design",
    "event_study",
    "event_study_balanced",
    "fit_logit",
    "fit_wls",
    "intercept_only",
    "load_panel",
    "max_pre_step",
    "normalize_groups",
    "overall_att",
    "overlap_report",
    "pretrend_joint_test",
    "sensitivity_bounds",
    "simulate_staggered",
    "sun_abraham_fit",
    "sup_t_band",
    "twfe_fit",
    "write_panel",
    "zero_design",
]
