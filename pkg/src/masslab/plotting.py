"""Figure rendering for pipeline reports (saved next to the emitted data)."""

from __future__ import annotations

import pathlib

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

FIG_KW = {"figsize": (6.0, 4.0), "dpi": 140}


def mass_series_figure(label: str, series: dict, path: pathlib.Path):
    fig, ax = plt.subplots(**FIG_KW)
    radii = np.asarray(series["radii"], dtype=float)
    total = np.asarray(series["total"], dtype=float)
    ax.plot(radii, total, "o-", label="finite-radius total")
    m_inf = series.get("m_infinity")
    if m_inf is not None:
        ax.axhline(m_inf, color="tab:red", ls="--",
                   label=f"extrapolated = {m_inf:.6g}")
        rr = np.linspace(radii[0], radii[-1], 200)
        p = series.get("fit_exponent", 1.0)
        if len(radii) >= 2 and np.isfinite(p) and p > 0:
            a = (total[-1] - m_inf) * radii[-1] ** p
            ax.plot(rr, m_inf + a * rr ** -p, color="tab:red", alpha=0.4,
                    label=f"fit m + a r^(-{p:.3g})")
    ax.set_xlabel("radius")
    ax.set_ylabel("mass integral")
    ax.set_title(label)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def control_figure(stage_data: dict, path: pathlib.Path):
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 4.0), dpi=140)
    deltas, scales, smooth = [], [], []
    for key, val in sorted(stage_data.items()):
        if not key.startswith("delta="):
            continue
        deltas.append(float(key.split("=")[1]))
        scales.append(val["singular_scale"])
        smooth.append(val["smooth_bound"])
    if deltas:
        axes[0].semilogx(deltas, scales, "o-")
        axes[0].axhline(2.0, color="k", ls=":", label="2 (Gauss identity)")
        axes[0].axhline(1.0, color="tab:red", ls=":", label="1 (displayed)")
        axes[0].set_xlabel("delta")
        axes[0].set_ylabel("band integral / jump")
        axes[0].legend(fontsize=8)
        axes[1].semilogx(deltas, smooth, "s-")
        axes[1].set_xlabel("delta")
        axes[1].set_ylabel("non-singular remainder bound")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def correction_figure(stage_data: dict, path: pathlib.Path):
    fig, ax = plt.subplots(**FIG_KW)
    deltas, sups = [], []
    for key, val in sorted(stage_data.items()):
        if key.startswith("delta="):
            deltas.append(float(key.split("=")[1]))
            sups.append(val["sup_w"])
    if deltas:
        ax.loglog(deltas, np.maximum(sups, 1e-18), "o-")
        ax.set_xlabel("delta")
        ax.set_ylabel("sup |w_delta|")
        ax.set_title("correction amplitude under delta-halving")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def ratio_figure(stage_data: dict, path: pathlib.Path):
    fig, ax = plt.subplots(**FIG_KW)
    radii = stage_data.get("radii", [])
    ratios = stage_data.get("ratios", [])
    if radii:
        ax.plot(radii, ratios, "o-")
        ax.axhline(2.0, color="k", ls=":")
        ax.set_xlabel("radius")
        ax.set_ylabel("doubled / corner mass")
        ax.set_ylim(1.999999, 2.000001)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_report(report: dict, stem) -> list:
    """Render the figures a report supports; returns the files written."""
    stem = pathlib.Path(stem)
    written = []
    for stage_name, stage in report.get("stages", {}).items():
        data = stage.get("data", {})
        for key, val in data.items():
            if isinstance(val, dict) and "radii" in val and "total" in val:
                out = stem.parent / f"{stem.name}_{stage_name}_{key}.png"
                mass_series_figure(f"{stage_name}: {key}", val, out)
                written.append(out)
        if stage_name == "curvature_control":
            out = stem.parent / f"{stem.name}_curvature_control.png"
            control_figure(data, out)
            written.append(out)
        if stage_name == "solve_correction":
            out = stem.parent / f"{stem.name}_correction.png"
            correction_figure(data, out)
            written.append(out)
        if stage_name == "mass_relation":
            out = stem.parent / f"{stem.name}_doubling_ratio.png"
            ratio_figure(data, out)
            written.append(out)
    return written
