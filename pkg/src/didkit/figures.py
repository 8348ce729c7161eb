"""Event-study figure rendering.

SVG output is deterministic: the rc context pins the style and the SVG hash
salt, and the date metadata is stripped, so the same curve always renders to
the same bytes.
"""

from __future__ import annotations

import io

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
from matplotlib.ticker import MaxNLocator  # noqa: E402

_RC = {
    "svg.hashsalt": "didkit",
    "svg.fonttype": "none",
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "figure.figsize": (7.0, 4.2),
    "figure.dpi": 100,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.25,
    "grid.linewidth": 0.6,
    "path.simplify": False,
}

POINT_COLOR = "black"
POINTWISE_COLOR = "black"
SIMULTANEOUS_COLOR = "#c23b22"


def render_event_study(curve, title: str | None = None) -> bytes:
    """Render estimates with nested pointwise/simultaneous whiskers to SVG."""
    if not curve.event_times:
        raise ValueError("cannot render an empty curve")
    e = np.asarray(curve.event_times, dtype=float)
    est = np.asarray(curve.estimates, dtype=float)

    with matplotlib.rc_context(_RC):
        fig, ax = plt.subplots()
        ax.axhline(0.0, color="0.55", lw=0.8, zorder=1)
        ax.axvline(-0.5, color="0.35", ls="--", lw=1.0, zorder=1)

        if curve.simultaneous_lower is not None:
            ax.vlines(
                e,
                curve.simultaneous_lower,
                curve.simultaneous_upper,
                color=SIMULTANEOUS_COLOR,
                lw=1.4,
                zorder=2,
                label=f"simultaneous {curve.band_level:.0%}" if curve.band_level else "simultaneous",
            )
        if curve.pointwise_lower is not None:
            ax.vlines(
                e,
                curve.pointwise_lower,
                curve.pointwise_upper,
                color=POINTWISE_COLOR,
                lw=3.0,
                zorder=3,
                label="pointwise",
            )
        ax.plot(e, est, "o", color=POINT_COLOR, ms=5, zorder=4, label="estimate")

        ax.set_xlabel("event time")
        ax.set_ylabel("effect")
        ax.xaxis.set_major_locator(MaxNLocator(integer=True))
        if title:
            ax.set_title(title)
        if curve.overall is not None:
            ax.annotate(
                f"overall ATT = {curve.overall.estimate:.3f} (se {curve.overall.se:.3f})",
                xy=(0.02, 0.97),
                xycoords="axes fraction",
                va="top",
                fontsize=8,
                color="0.25",
            )
        if curve.pointwise_lower is not None or curve.simultaneous_lower is not None:
            ax.legend(frameon=False, fontsize=8, loc="best")
        fig.tight_layout()

        buf = io.BytesIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    return buf.getvalue()
