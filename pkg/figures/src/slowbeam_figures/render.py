"""Render simulation CSV outputs into the standard figure styles.

Strictly read-only over the CSVs: every figure is a presentation of
columns that the simulator already wrote (at most unit conversions such
as linear gain to dB). Each input file must carry the schema marker line
its figure preset expects; anything else is rejected.

Figure presets:
  fig2  beam patterns per method/column           <- pattern schema
  fig4  beamspace spread profiles                 <- series schema
  fig5  SINR versus slow time, panels per angle-noise level
                                                  <- per-step results
  fig6  mean SINR versus filter coefficient, panels per mobility rate
                                                  <- summary
  fig7  complexity-versus-SINR scatter            <- summary
  fig8  mean SINR versus angle-noise level, panels per mobility rate
                                                  <- summary
  fig9  nMSE versus input SNR, panels per angle-noise level
                                                  <- summary
"""

from __future__ import annotations

import math

import matplotlib
import numpy as np
import pandas as pd

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

RESULTS_SCHEMA = "slowbeam.results.v1"
SUMMARY_SCHEMA = "slowbeam.summary.v1"
PATTERN_SCHEMA = "slowbeam.pattern.v1"
SERIES_SCHEMA = "slowbeam.series.v1"

_SAVE_OPTS = dict(dpi=120, metadata={"Software": "slowbeam-figures"})


class FigureInputError(ValueError):
    """Bad input file: wrong schema, empty table, or missing curves."""


def load_csv(path, expected_schema: str) -> pd.DataFrame:
    with open(path, "r") as fh:
        first = fh.readline().strip()
    if first != f"# schema={expected_schema}":
        raise FigureInputError(
            f"{path}: expected schema '{expected_schema}', found "
            f"'{first.removeprefix('# schema=')}'")
    frame = pd.read_csv(path, comment="#")
    if frame.empty:
        raise FigureInputError(f"{path}: no data rows")
    return frame


def _panel_grid(count: int):
    cols = 2 if count > 1 else 1
    rows = math.ceil(count / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(5.0 * cols, 3.4 * rows),
                             squeeze=False)
    return fig, [ax for row in axes for ax in row]


def _to_db(values, floor=1e-12):
    return 10.0 * np.log10(np.maximum(np.asarray(values, float), floor))


def render_fig2(frame: pd.DataFrame, out_path) -> None:
    """Per-column beam patterns, one panel per method."""
    methods = sorted(frame["method"].unique())
    fig, axes = _panel_grid(len(methods))
    for ax, method in zip(axes, methods):
        sub = frame[frame["method"] == method]
        for column, curve in sub.groupby("column"):
            curve = curve.sort_values("phi_deg")
            ax.plot(curve["phi_deg"], _to_db(curve["gain"]),
                    label=f"column {column}", linewidth=0.9)
        ax.set_title(method)
        ax.set_xlabel("azimuth (deg)")
        ax.set_ylabel("power response (dB)")
        ax.set_ylim(-60, 5)
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
    for ax in axes[len(methods):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)


def render_fig4(frame: pd.DataFrame, out_path) -> None:
    """Beamspace profiles of the mean filtered covariance, one curve per
    error level, normalized to the common peak."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    peak = frame["y"].max()
    if peak <= 0:
        raise FigureInputError("spread series has no positive values")
    for curve_id, curve in frame.groupby("curve_id"):
        curve = curve.sort_values("x")
        ax.plot(curve["x"], _to_db(curve["y"] / peak), label=str(curve_id),
                linewidth=1.0)
    ax.set_xlabel("azimuth (deg)")
    ax.set_ylabel("normalized beamspace power (dB)")
    ax.set_ylim(-50, 2)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)


def render_fig5(frame: pd.DataFrame, out_path) -> None:
    """SINR against slow time, trial-averaged, one panel per angle-noise
    level, one curve per (method, filter coefficient)."""
    levels = sorted(frame["sigma_est_deg"].unique())
    fig, axes = _panel_grid(len(levels))
    for ax, level in zip(axes, levels):
        sub = frame[frame["sigma_est_deg"] == level]
        for (method, beta), curve in sub.groupby(["method", "beta"]):
            series = curve.groupby("step")["sinr_db"].mean()
            ax.plot(series.index, series.values,
                    label=f"{method} (beta={beta})", linewidth=0.9)
        ax.set_title(f"angle-noise std {level} deg")
        ax.set_xlabel("slow-time step")
        ax.set_ylabel("SINR (dB)")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
    for ax in axes[len(levels):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)


def _summary_panels(frame, x_col, y_col, panel_col, out_path,
                    x_label, y_label, log_y=False):
    panels = sorted(frame[panel_col].unique())
    fig, axes = _panel_grid(len(panels))
    for ax, panel in zip(axes, panels):
        sub = frame[frame[panel_col] == panel]
        for method, curve in sub.groupby("method"):
            curve = curve.sort_values(x_col)
            if curve[y_col].isna().all():
                raise FigureInputError(
                    f"no '{y_col}' values for method '{method}'")
            ax.plot(curve[x_col], curve[y_col], marker="o", markersize=3,
                    linewidth=0.9, label=str(method))
        ax.set_title(f"{panel_col}={panel}")
        ax.set_xlabel(x_label)
        ax.set_ylabel(y_label)
        if log_y:
            ax.set_yscale("log")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7)
    for ax in axes[len(panels):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)


def render_fig6(frame: pd.DataFrame, out_path) -> None:
    _summary_panels(frame, "beta", "mean_sinr_db", "alpha", out_path,
                    "filter coefficient", "mean SINR (dB)")


def render_fig7(frame: pd.DataFrame, out_path) -> None:
    """Complexity against SINR: one marker per summary row, marker shape
    by method, color by kernel rank; incremental methods trace out their
    quantizer-depth triplets left to right."""
    markers = {"wiener": "o", "whitening": "x", "geb": "P",
               "geb-filtered": "s", "geb-ideal": "D", "dft": "v"}
    cmap = plt.get_cmap("tab10")
    ranks = sorted(frame["rank"].unique())
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for (method, rank), sub in frame.groupby(["method", "rank"]):
        sub = sub.sort_values("nq")
        color = cmap(ranks.index(rank) % 10)
        ax.plot(sub["mean_complexity"], sub["mean_sinr_db"],
                linestyle="--" if len(sub) > 1 else "none", linewidth=0.6,
                marker=markers.get(method, "*"), markersize=6,
                color=color, label=f"{method} rank={rank}")
    ax.set_xlabel("complexity (inversion size)")
    ax.set_ylabel("mean SINR (dB)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path, **_SAVE_OPTS)
    plt.close(fig)


def render_fig8(frame: pd.DataFrame, out_path) -> None:
    _summary_panels(frame, "sigma_est_deg", "mean_sinr_db", "alpha",
                    out_path, "angle-noise std (deg)", "mean SINR (dB)")


def render_fig9(frame: pd.DataFrame, out_path) -> None:
    _summary_panels(frame, "snr_db", "mean_nmse", "sigma_est_deg", out_path,
                    "input SNR (dB)", "normalized MSE", log_y=True)


FIGURES = {
    "fig2": (PATTERN_SCHEMA, render_fig2),
    "fig4": (SERIES_SCHEMA, render_fig4),
    "fig5": (RESULTS_SCHEMA, render_fig5),
    "fig6": (SUMMARY_SCHEMA, render_fig6),
    "fig7": (SUMMARY_SCHEMA, render_fig7),
    "fig8": (SUMMARY_SCHEMA, render_fig8),
    "fig9": (SUMMARY_SCHEMA, render_fig9),
}


def render(figure_id: str, csv_paths: list, out_path) -> None:
    """Render one figure preset from its CSV input(s)."""
    if figure_id not in FIGURES:
        raise FigureInputError(
            f"unknown figure '{figure_id}'; choose from "
            f"{sorted(FIGURES)}")
    schema, fn = FIGURES[figure_id]
    frames = [load_csv(p, schema) for p in csv_paths]
    if not frames:
        raise FigureInputError("at least one --csv input is required")
    fn(pd.concat(frames, ignore_index=True), out_path)
