"""Figures from the CSV outputs (matplotlib, headless)."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv  # noqa: E402

PROFILE_SERIES = (("sigma_r", r"$\sigma_r$"), ("tau_rs", r"$\tau_{rs}$"), ("tau_rl", r"$\tau_{rl}$"))


def _shade_interfaces(ax, r, tags):
    # tag // 1000 is the material kind; interfaces are kind 1
    kind = tags // 1000
    for k in np.unique(tags[kind == 1]):
        sel = tags == k
        ax.axvspan(r[sel].min(), r[sel].max(), color="0.85", lw=0)


def plot_profile(csv_path, png_path=None):
    csv_path = Path(csv_path)
    rows = read_csv(csv_path)
    r = np.array([float(x["r_mm"]) for x in rows])
    tags = np.array([int(x["material_tag"]) for x in rows])
    fig, (ax, axf) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    _shade_interfaces(ax, r, tags)
    _shade_interfaces(axf, r, tags)
    for key, label in PROFILE_SERIES:
        ax.plot(r, [float(x[key]) for x in rows], ".-", label=label, ms=3)
    ax.set_ylabel("stress [MPa]")
    ax.legend()
    axf.plot(r, [float(x["F"]) for x in rows], "k.-", ms=3)
    axf.set_ylabel("F")
    axf.set_xlabel("radius [mm]")
    fig.tight_layout()
    png_path = Path(png_path) if png_path else csv_path.with_suffix(".png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def plot_profiles(out_dir):
    return [plot_profile(p) for p in sorted(Path(out_dir).glob("profile_*.csv"))]


def plot_sweep(csv_path, png_path=None):
    """Iterations and failure moment against the swept value, one line per preconditioner."""
    csv_path = Path(csv_path)
    rows = [r for r in read_csv(csv_path) if r.get("status") == "ok"]
    if not rows:
        return None
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for prec in sorted({r["preconditioner"] for r in rows}):
        sub = [r for r in rows if r["preconditioner"] == prec]
        x = list(range(len(sub)))
        labels = [r["value"] for r in sub]
        axes[0].plot(x, [int(r["iterations"]) for r in sub], "o-", label=prec)
        axes[1].plot(x, [float(r["M_fail"]) for r in sub], "o-", label=prec)
        for ax in axes:
            ax.set_xticks(x, labels)
    axes[0].set_ylabel("CG iterations")
    axes[1].set_ylabel("M_fail [kN mm/mm]")
    for ax in axes:
        ax.set_xlabel(rows[0]["parameter"])
        ax.legend()
    fig.tight_layout()
    png_path = Path(png_path) if png_path else csv_path.with_suffix(".png")
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path
