"""Result documents: canonical JSON, delimited tables, and markdown.

JSON output is byte-canonical: keys sorted, floats rendered with the fixed
``%.10g`` format, two-space indentation.  Re-serializing a document always
reproduces the same bytes, so identical runs diff clean.  Non-finite floats
are represented as ``null`` (JSON has no Infinity) with a flag field where
the distinction matters.
"""

from __future__ import annotations

import csv
import io
import math

import numpy as np

SCHEMA_VERSION = "1"


def _render(obj, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, str):
        import json

        out.append(json.dumps(obj))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise ValueError("non-finite float reached the JSON writer")
        out.append("%.10g" % v)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj, key=str)
        for i, k in enumerate(keys):
            out.append(f'{pad}  "{k}": ')
            _render(obj[k], indent + 1, out)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not len(obj):
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(obj):
            out.append(pad + "  ")
            _render(item, indent + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    elif isinstance(obj, np.ndarray):
        _render(obj.tolist(), indent, out)
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical_json_bytes(document: dict) -> bytes:
    parts: list[str] = []
    _render(document, 0, parts)
    parts.append("\n")
    return "".join(parts).encode("utf-8")


def _num(v: float):
    v = float(v)
    return v if math.isfinite(v) else None


# ----------------------------------------------------------- documents


def group_time_document(table, settings: dict, diagnostics: dict | None = None) -> dict:
    cells = [
        {
            "group": c.group,
            "period": c.period,
            "event_time": c.event_time,
            "estimate": _num(c.estimate),
            "se": _num(c.se),
            "n_treated": c.n_treated,
            "n_comparison": c.n_comparison,
            "comparison": c.comparison_tag,
            "estimator": c.estimator_tag,
        }
        for c in table.effects
    ]
    skipped = [
        {"group": s.group, "period": s.period, "reason": s.reason} for s in table.skipped
    ]
    sizes = {
        str(g): {"weighted": _num(ws), "raw": raw}
        for g, (ws, raw) in table.group_sizes.items()
    }
    return {
        "schema_version": SCHEMA_VERSION,
        "settings": settings,
        "assumption": table.assumption,
        "estimator": table.estimator,
        "base_period": table.base_period,
        "periods": list(table.periods),
        "n_units": table.n_units,
        "group_sizes": sizes,
        "cells": cells,
        "skipped": skipped,
        "diagnostics": diagnostics,
    }


def event_study_document(curve, settings: dict, overall=None, band=None) -> dict:
    points = []
    for j, e in enumerate(curve.event_times):
        point = {
            "event_time": e,
            "estimate": _num(curve.estimates[j]),
            "se": _num(curve.ses[j]),
        }
        if curve.pointwise_lower is not None:
            point["pointwise"] = [
                _num(curve.pointwise_lower[j]),
                _num(curve.pointwise_upper[j]),
            ]
        if curve.simultaneous_lower is not None:
            point["simultaneous"] = [
                _num(curve.simultaneous_lower[j]),
                _num(curve.simultaneous_upper[j]),
            ]
        points.append(point)
    weights = {
        str(e): {str(g): _num(w) for g, w in row.items()}
        for e, row in curve.weights.by_event.items()
    }
    doc = {
        "schema_version": SCHEMA_VERSION,
        "settings": settings,
        "balanced": curve.balanced,
        "window": list(curve.window) if curve.window else None,
        "points": points,
        "weights": weights,
    }
    overall = overall if overall is not None else curve.overall
    doc["overall"] = (
        {"estimate": _num(overall.estimate), "se": _num(overall.se)}
        if overall is not None
        else None
    )
    if band is not None:
        doc["band"] = {
            "alpha": _num(band.alpha),
            "pointwise_critical": _num(band.pointwise_critical),
            "sup_t_critical": _num(band.sup_t_critical),
            "draws": band.draws,
            "multiplier": band.multiplier,
            "seed": band.seed,
            "degenerate": list(band.degenerate),
        }
    return doc


def balance_document(table, settings: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "settings": settings,
        "weighted": table.weighted,
        "pre_period": table.pre_period,
        "post_period": table.post_period,
        "n_treated": table.n_treated,
        "n_comparison": table.n_comparison,
        "rows": [
            {
                "variable": r.variable,
                "kind": r.kind,
                "mean_treated": _num(r.mean_treated),
                "mean_comparison": _num(r.mean_comparison),
                "var_treated": _num(r.var_treated),
                "var_comparison": _num(r.var_comparison),
                "normalized_difference": _num(r.normalized_difference),
                "degenerate": r.degenerate,
            }
            for r in table.rows
        ],
    }


def twfe_document(fit, settings: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "settings": settings,
        "spec": fit.spec,
        "weighted": fit.weighted,
        "n_units": fit.n_units,
        "n_periods": fit.n_periods,
        "coefficients": [
            {"name": name, "estimate": _num(est), "se": _num(se)}
            for name, est, se in zip(fit.names, fit.coefficients, fit.ses)
        ],
    }


def bacon_document(dec, settings: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "settings": settings,
        "did_vs_never": _num(dec.did_vs_never),
        "did_vs_already": _num(dec.did_vs_already),
        "weight_never": _num(dec.weight_never),
        "weight_already": _num(dec.weight_already),
        "w1": _num(dec.w1),
        "reconstructed_beta": _num(dec.reconstructed),
        "estimand_weights": {k: _num(v) for k, v in dec.estimand_weights.items()},
    }


def sensitivity_document(result, settings: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "settings": settings,
        "target_event": result.target_event,
        "estimate": _num(result.estimate),
        "se": _num(result.se),
        "m_bar": _num(result.m_bar),
        "benchmark": result.benchmark,
        "violation": _num(result.violation),
        "identified_set": [_num(result.lower), _num(result.upper)],
        "robust_ci": [_num(result.ci_lower), _num(result.ci_upper)],
        "level": _num(result.level),
    }


def simulate_document(cfg, truth, settings: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "settings": settings,
        "n_units": cfg.n_units,
        "n_periods": cfg.n_periods,
        "seed": cfg.seed,
        "cohort_shares": {
            ("never" if math.isinf(g) else str(int(g))): _num(s)
            for g, s in cfg.cohort_shares.items()
        },
        "true_att": [
            {"group": g, "period": t, "value": _num(v)}
            for (g, t), v in sorted(truth.att.items())
        ],
        "true_event_curve": {str(e): _num(v) for e, v in sorted(truth.event_curve.items())},
    }


# ------------------------------------------------------------ delimited


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.10g" % float(v)
    return str(v)


def _write_csv(rows: list[dict], header: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(row[h]) for h in header])
    return buf.getvalue()


def group_time_csv(table) -> str:
    header = ["group", "period", "event_time", "estimate", "se", "n_treated", "n_comparison"]
    rows = [
        {
            "group": c.group,
            "period": c.period,
            "event_time": c.event_time,
            "estimate": c.estimate,
            "se": c.se,
            "n_treated": c.n_treated,
            "n_comparison": c.n_comparison,
        }
        for c in table.effects
    ]
    return _write_csv(rows, header)


def event_study_csv(curve) -> str:
    header = ["event_time", "estimate", "se"]
    has_point = curve.pointwise_lower is not None
    has_band = curve.simultaneous_lower is not None
    if has_point:
        header += ["pointwise_lower", "pointwise_upper"]
    if has_band:
        header += ["simultaneous_lower", "simultaneous_upper"]
    rows = []
    for j, e in enumerate(curve.event_times):
        row = {"event_time": e, "estimate": curve.estimates[j], "se": curve.ses[j]}
        if has_point:
            row["pointwise_lower"] = curve.pointwise_lower[j]
            row["pointwise_upper"] = curve.pointwise_upper[j]
        if has_band:
            row["simultaneous_lower"] = curve.simultaneous_lower[j]
            row["simultaneous_upper"] = curve.simultaneous_upper[j]
        rows.append(row)
    return _write_csv(rows, header)


def balance_csv(table) -> str:
    header = [
        "variable",
        "kind",
        "mean_treated",
        "mean_comparison",
        "normalized_difference",
    ]
    rows = [
        {
            "variable": r.variable,
            "kind": r.kind,
            "mean_treated": r.mean_treated,
            "mean_comparison": r.mean_comparison,
            "normalized_difference": r.normalized_difference,
        }
        for r in table.rows
    ]
    return _write_csv(rows, header)


def balance_markdown(table) -> str:
    lines = [
        f"# Covariate balance ({'weighted' if table.weighted else 'unweighted'})",
        "",
        f"Levels at period {table.pre_period}; differences are "
        f"period {table.post_period} minus period {table.pre_period}. "
        f"{table.n_treated} treated vs {table.n_comparison} comparison units. "
        "Normalized differences above 0.25 in absolute value flag imbalance.",
        "",
        "| Variable | Kind | Treated mean | Comparison mean | Norm. diff |",
        "|---|---|---:|---:|---:|",
    ]
    for r in table.rows:
        nd = "inf" if r.degenerate else f"{r.normalized_difference:.2f}"
        flag = " **!**" if (r.degenerate or abs(r.normalized_difference) > 0.25) else ""
        lines.append(
            f"| {r.variable} | {r.kind} | {r.mean_treated:.2f} "
            f"| {r.mean_comparison:.2f} | {nd}{flag} |"
        )
    lines.append("")
    return "\n".join(lines)
