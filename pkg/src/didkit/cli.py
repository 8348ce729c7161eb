"""Command-line front end.

Subcommands: ``balance``, ``attgt``, ``aggregate``, ``twfe``, ``bacon``,
``sensitivity``, ``simulate``.  Flags override the TOML config file, which
overrides defaults.  Exit codes: 0 success, 2 usage or validation error,
3 estimation failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import aggregate as agg
from . import diagnostics, figures, inference, report, simulate, staggered
from .errors import EstimationError, UsageError
from .panel import NEVER, PanelSchema, load_panel, normalize_groups, write_panel

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_ESTIMATION = 3

ASSUMPTION_ALIASES = {
    "never": "never",
    "not_yet": "not_yet",
    "notyet": "not_yet",
    "all_periods": "all_periods",
}
SPEC_ALIASES = {
    "static": "static",
    "dynamic": "dynamic_2xT",
    "dynamic_2xT": "dynamic_2xT",
    "saturated": "saturated_SA",
    "saturated_SA": "saturated_SA",
}


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as err:
        raise UsageError(f"malformed config file {path}: {err}") from None


def _merged(args, config: dict, key: str, default=None, section: str | None = None):
    value = getattr(args, key.replace("-", "_"), None)
    if value is not None:
        return value
    table = config.get(section, {}) if section else config
    return table.get(key, default)


def _schema_from_config(config: dict, args) -> PanelSchema:
    raw = dict(config.get("schema", {}))
    weights = getattr(args, "weights", None) or raw.pop("weight", None) or config.get("weights")
    cluster = getattr(args, "cluster", None) or raw.pop("cluster", None) or config.get("cluster")
    covariates = _covariate_list(args, config)
    return PanelSchema(
        unit=raw.get("unit", "unit"),
        period=raw.get("period", "period"),
        outcome=raw.get("outcome", "outcome"),
        first_treat=raw.get("first_treat", "first_treat"),
        weight=weights if weights is not None else "weight",
        covariates=tuple(covariates) if covariates is not None else None,
        cluster=cluster,
        never_value=float(raw.get("never_value", 0.0)),
        future_treatment_as_never=bool(raw.get("future_treatment_as_never", False)),
    )


def _covariate_list(args, config: dict):
    # an explicitly empty --covariates "" means "none": extra columns in the
    # file are then ignored instead of auto-claimed as covariates
    raw = getattr(args, "covariates", None)
    if raw is not None:
        return [c.strip() for c in raw.split(",") if c.strip()]
    return config.get("covariates")


def _load_normalized(args, config: dict):
    input_path = _merged(args, config, "input")
    if not input_path:
        raise UsageError("an input CSV is required (--input or config `input`)")
    schema = _schema_from_config(config, args)
    data = load_panel(input_path, schema)
    normalized, balance = normalize_groups(data)
    settings = {
        "input": str(input_path),
        "n_units_loaded": data.n_units,
        "n_units_used": normalized.n_units,
        "dropped_units": len(balance.dropped_units),
        "recoded_groups": {f"{int(k)}": "never" for k in balance.recoded_groups},
        "weight_kind": normalized.weight_kind,
    }
    return normalized, settings


def _estimation_settings(args, config: dict) -> dict:
    # The worker cap is an execution detail, not part of the estimand; it is
    # deliberately left out of the settings echo so output bytes never depend
    # on --threads.
    assumption = _merged(args, config, "assumption", "not_yet")
    if assumption not in ASSUMPTION_ALIASES:
        raise UsageError(
            f"unknown assumption {assumption!r}; valid values: "
            + ", ".join(sorted(set(ASSUMPTION_ALIASES.values())))
        )
    return {
        "estimator": _merged(args, config, "estimator", "dr"),
        "assumption": ASSUMPTION_ALIASES[assumption],
        "draws": int(_merged(args, config, "boot", None) or config.get("bootstrap", {}).get("draws", 999)),
        "seed": int(_merged(args, config, "seed", None) or config.get("bootstrap", {}).get("seed", 0)),
        "alpha": float(_merged(args, config, "level", None) or config.get("bootstrap", {}).get("level", 0.05)),
    }


def _out_dir(args, config: dict) -> Path:
    out = Path(_merged(args, config, "out-dir", None) or config.get("out_dir", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, payload) -> None:
    if isinstance(payload, bytes):
        path.write_bytes(payload)
    else:
        path.write_text(payload, encoding="utf-8")


def _run_pipeline(args, config: dict, window=None):
    data, load_settings = _load_normalized(args, config)
    opts = _estimation_settings(args, config)
    settings = {**load_settings, **opts}
    threads = int(_merged(args, config, "threads", 1))
    table = staggered.att_gt(
        data,
        assumption=opts["assumption"],
        estimator=opts["estimator"],
        include_pretrends=True,
        threads=threads,
    )
    curve = (
        agg.event_study_balanced(table, window) if window else agg.event_study(table)
    )
    cluster_ids = np.asarray(data.effective_clusters())
    curve, band = inference.attach_bands(
        curve,
        cluster_ids=cluster_ids,
        alpha=opts["alpha"],
        draws=opts["draws"],
        seed=opts["seed"],
    )
    if curve.overall is not None and data.cluster_ids is not None:
        from dataclasses import replace

        se_cl, _ = inference.clustered_se(curve.overall.influence, cluster_ids)
        curve = replace(curve, overall=replace(curve.overall, se=float(se_cl[0])))
    diagnostics_block = _diagnostics_block(data, table, cluster_ids, opts)
    return data, table, curve, band, settings, diagnostics_block


def _diagnostics_block(data, table, cluster_ids, opts) -> dict:
    block: dict = {"pretrend_test": None, "overlap": None}
    if table.pre_cells():
        test = inference.pretrend_joint_test(table, cluster_ids)
        block["pretrend_test"] = {
            "statistic": test.statistic,
            "dof": test.dof,
            "pvalue": test.pvalue,
            "n_pretrends": test.n_pretrends,
            "pinv_used": test.pinv_used,
        }
    if opts["estimator"] in ("ipw", "dr"):
        from .nuisance import default_design, fit_logit, overlap_report
        from .staggered import _cell_frame

        rows = []
        for g in sorted(table.group_sizes):
            first_post = next(
                (c for c in table.post_cells() if c.group == g), None
            )
            if first_post is None:
                continue
            frame = _cell_frame(data, table.assumption, g, first_post.period)
            fit = fit_logit(
                default_design(frame.covariates),
                frame.treated.astype(float),
                frame.weights,
            )
            rep = overlap_report(fit, frame.treated)
            rows.append(
                {
                    "group": g,
                    "period": first_post.period,
                    "comparison_max_score": rep.comparison_max,
                    "n_flagged_comparison": rep.n_flagged_comparison,
                    "trim_threshold": rep.trim_threshold,
                    "converged": fit.converged,
                    "separation": fit.separation,
                }
            )
        block["overlap"] = rows
    return block


def _emit_event_study(out: Path, table, curve, band, settings, diagnostics_block=None) -> None:
    _write(
        out / "attgt.json",
        report.canonical_json_bytes(
            report.group_time_document(table, settings, diagnostics_block)
        ),
    )
    _write(out / "attgt.csv", report.group_time_csv(table))
    _write(
        out / "event_study.json",
        report.canonical_json_bytes(
            report.event_study_document(curve, settings, band=band)
        ),
    )
    _write(out / "event_study.csv", report.event_study_csv(curve))
    _write(out / "event_study.svg", figures.render_event_study(curve))


# ------------------------------------------------------------- commands


def cmd_attgt(args) -> int:
    config = _load_config(args.config)
    data, table, curve, band, settings, diag = _run_pipeline(args, config)
    _emit_event_study(_out_dir(args, config), table, curve, band, settings, diag)
    return EXIT_OK


def cmd_aggregate(args) -> int:
    config = _load_config(args.config)
    window = None
    if args.window is not None:
        window = (int(args.window[0]), int(args.window[1]))
    elif "window" in config.get("aggregate", {}):
        lo, hi = config["aggregate"]["window"]
        window = (int(lo), int(hi))
    data, table, curve, band, settings, diag = _run_pipeline(args, config, window=window)
    settings["window"] = list(window) if window else None
    _emit_event_study(_out_dir(args, config), table, curve, band, settings, diag)
    return EXIT_OK


def cmd_balance(args) -> int:
    config = _load_config(args.config)
    data, load_settings = _load_normalized(args, config)
    pre = int(_merged(args, config, "pre", None, section="balance") or data.periods[0])
    post = int(_merged(args, config, "post", None, section="balance") or data.periods[-1])
    weighted = bool(args.weighted or config.get("balance", {}).get("weighted", False))
    group = args.treated_group
    table = diagnostics.balance_table(
        data, pre, post, weighted=weighted, treated_group=group
    )
    settings = {**load_settings, "pre": pre, "post": post, "weighted": weighted}
    out = _out_dir(args, config)
    _write(out / "balance.json", report.canonical_json_bytes(report.balance_document(table, settings)))
    _write(out / "balance.md", report.balance_markdown(table))
    _write(out / "balance.csv", report.balance_csv(table))
    return EXIT_OK


def cmd_twfe(args) -> int:
    config = _load_config(args.config)
    input_path = _merged(args, config, "input")
    if not input_path:
        raise UsageError("an input CSV is required (--input or config `input`)")
    schema = _schema_from_config(config, args)
    data = load_panel(input_path, schema)
    spec = SPEC_ALIASES[args.spec]
    if spec != "static":
        data, _ = normalize_groups(data)
    weighted = not args.unweighted
    fit = diagnostics.twfe_fit(data, spec, weighted=weighted)
    settings = {"input": str(input_path), "spec": spec, "weighted": weighted}
    out = _out_dir(args, config)
    _write(out / "twfe.json", report.canonical_json_bytes(report.twfe_document(fit, settings)))
    return EXIT_OK


def cmd_bacon(args) -> int:
    config = _load_config(args.config)
    input_path = _merged(args, config, "input")
    if not input_path:
        raise UsageError("an input CSV is required (--input or config `input`)")
    data = load_panel(input_path, _schema_from_config(config, args))
    dec = diagnostics.bacon_two_period(data)
    settings = {"input": str(input_path)}
    out = _out_dir(args, config)
    _write(out / "bacon.json", report.canonical_json_bytes(report.bacon_document(dec, settings)))
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    config = _load_config(args.config)
    data, table, curve, band, settings, _diag = _run_pipeline(args, config)
    target = int(
        args.target_e
        if args.target_e is not None
        else config.get("sensitivity", {}).get("target_e", 0)
    )
    m_bar = float(
        args.mbar if args.mbar is not None else config.get("sensitivity", {}).get("mbar", 1.0)
    )
    benchmark = args.benchmark or config.get("sensitivity", {}).get("benchmark", "max_pre_step")
    result = inference.sensitivity_bounds(
        curve, target, m_bar, benchmark=benchmark, alpha=settings["alpha"]
    )
    settings = {**settings, "target_e": target, "mbar": m_bar, "benchmark": benchmark}
    out = _out_dir(args, config)
    _write(
        out / "sensitivity.json",
        report.canonical_json_bytes(report.sensitivity_document(result, settings)),
    )
    return EXIT_OK


def _dgp_from_config(config: dict, seed_override=None) -> simulate.DgpConfig:
    table = config.get("simulate", config)
    if "cohort_shares" not in table:
        raise UsageError("simulate config needs a [cohort_shares] table")
    shares = {}
    for key, value in table["cohort_shares"].items():
        g = NEVER if str(key).lower() in ("never", "inf") else float(int(key))
        shares[g] = float(value)
    effects_cfg = table.get("effects", {"kind": "constant", "value": 0.0})
    kind = effects_cfg.get("kind", "constant")
    if kind == "constant":
        effects = float(effects_cfg.get("value", 0.0))
    elif kind == "ramp":
        base = float(effects_cfg.get("base", 0.0))
        slope = float(effects_cfg.get("slope", 0.0))
        effects = lambda g, e: base + slope * e  # noqa: E731
    else:
        raise UsageError(f"unknown effects kind {kind!r} (use 'constant' or 'ramp')")
    seed = int(seed_override if seed_override is not None else table.get("seed", 0))
    return simulate.DgpConfig(
        n_units=int(table["n_units"]),
        n_periods=int(table["n_periods"]),
        cohort_shares=shares,
        effects=effects,
        unit_effect_sd=float(table.get("unit_effect_sd", 1.0)),
        period_shock_sd=float(table.get("period_shock_sd", 0.0)),
        n_covariates=int(table.get("n_covariates", 0)),
        covariate_sd=float(table.get("covariate_sd", 1.0)),
        selection_on_unit_effect=float(table.get("selection_on_unit_effect", 0.0)),
        selection_on_covariates=tuple(table.get("selection_on_covariates", ())),
        trend_coefficients=tuple(table.get("trend_coefficients", ())),
        noise_sd=float(table.get("noise_sd", 1.0)),
        weight_distribution=str(table.get("weight_distribution", "uniform")),
        weight_log_sd=float(table.get("weight_log_sd", 0.5)),
        seed=seed,
    )


def cmd_simulate(args) -> int:
    config = _load_config(args.config)
    if not config:
        raise UsageError("simulate needs a --config TOML file")
    cfg = _dgp_from_config(config, seed_override=args.seed)
    data, truth = simulate.simulate_staggered(cfg)
    out_csv = Path(args.out or config.get("simulate", config).get("out", "sim.csv"))
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    write_panel(data, out_csv)
    settings = {"config": str(args.config), "out": str(out_csv)}
    out = _out_dir(args, config)
    _write(
        out / "simulate.json",
        report.canonical_json_bytes(report.simulate_document(cfg, truth, settings)),
    )
    return EXIT_OK


# --------------------------------------------------------------- parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="long-format panel CSV")
    p.add_argument("--config", help="TOML config file (flags override it)")
    p.add_argument("--weights", help="weight column name")
    p.add_argument("--cluster", help="cluster id column name (defaults to unit)")
    p.add_argument("--seed", type=int, help="bootstrap / simulation seed")
    p.add_argument("--threads", type=int, help="worker cap for cell estimation")
    p.add_argument("--out-dir", dest="out_dir", help="output directory (default .)")


def _add_estimation(p: argparse.ArgumentParser) -> None:
    p.add_argument("--estimator", choices=("means", "ra", "ipw", "dr"))
    p.add_argument("--assumption", choices=tuple(ASSUMPTION_ALIASES))
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--boot", type=int, help="bootstrap draws (default 999)")
    p.add_argument("--level", type=float, help="miscoverage alpha (default 0.05)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="didkit",
        description="Forward-engineered difference-in-differences toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attgt", help="group-time effects, event study, bands")
    _add_common(p)
    _add_estimation(p)
    p.set_defaults(fn=cmd_attgt)

    p = sub.add_parser("aggregate", help="event-study aggregation (optionally balanced)")
    _add_common(p)
    _add_estimation(p)
    p.add_argument("--window", nargs=2, type=int, metavar=("LO", "HI"),
                   help="balanced event-time window")
    p.set_defaults(fn=cmd_aggregate)

    p = sub.add_parser("balance", help="covariate balance table")
    _add_common(p)
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--pre", type=int, help="level/base period (default: first)")
    p.add_argument("--post", type=int, help="difference period (default: last)")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--treated-group", dest="treated_group", type=int,
                   help="restrict the treated arm to one cohort")
    p.set_defaults(fn=cmd_balance)

    p = sub.add_parser("twfe", help="two-way fixed-effects reference fits")
    _add_common(p)
    p.add_argument("--covariates", help="comma-separated covariate columns")
    p.add_argument("--spec", choices=tuple(SPEC_ALIASES), default="static")
    p.add_argument("--unweighted", action="store_true")
    p.set_defaults(fn=cmd_twfe)

    p = sub.add_parser("bacon", help="two-period negative-weight decomposition")
    _add_common(p)
    p.set_defaults(fn=cmd_bacon)

    p = sub.add_parser("sensitivity", help="relative-magnitudes bounds")
    _add_common(p)
    _add_estimation(p)
    p.add_argument("--target-e", dest="target_e", type=int)
    p.add_argument("--mbar", type=float)
    p.add_argument("--benchmark", choices=("max_pre_step", "absolute"))
    p.set_defaults(fn=cmd_sensitivity)

    p = sub.add_parser("simulate", help="draw a synthetic panel with known effects")
    _add_common(p)
    p.add_argument("--out", help="output CSV path (default sim.csv)")
    p.set_defaults(fn=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses exit code 2 for usage errors
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.fn(args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except EstimationError as err:
        print(f"estimation failed: {err}", file=sys.stderr)
        return EXIT_ESTIMATION


if __name__ == "__main__":
    sys.exit(main())
