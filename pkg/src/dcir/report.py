"""Figure and table rendering for CLI reports.

Every CLI command that reports numbers also renders figures next to the
delimited output so a run directory is inspectable without further
tooling.  The Agg backend keeps this headless-safe.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_DPI = 120


def _tonemap(image):
    """Clip to [0, 1] and apply the display gamma for viewing."""
    return np.clip(np.asarray(image, dtype=float), 0.0, 1.0) ** (1.0 / 2.2)


def write_csv(path, header, rows) -> None:
    """Delimited output with full-precision floats."""
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(header)
        for row in rows:
            writer.writerow([
                repr(float(v)) if isinstance(v, (float, np.floating)) else v
                for v in row
            ])


def save_image_figure(path, image, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4, 4), dpi=_DPI)
    if image.ndim == 2:
        im = ax.imshow(image, cmap="viridis")
        fig.colorbar(im, ax=ax, fraction=0.046)
    else:
        ax.imshow(_tonemap(image))
    ax.set_title(title)
    ax.axis("off")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def save_comparison_figure(path, panels) -> None:
    """Side-by-side panels; each entry is (title, image [, kind]).

    kind "linear" tonemaps, "normal" remaps unit vectors to RGB,
    "map" shows a scalar field with a colorbar.
    """
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(4 * n, 4), dpi=_DPI, squeeze=False)
    for ax, entry in zip(axes[0], panels):
        title, image = entry[0], np.asarray(entry[1], dtype=float)
        kind = entry[2] if len(entry) > 2 else "linear"
        if kind == "normal":
            ax.imshow(np.clip((image + 1.0) / 2.0, 0.0, 1.0))
        elif kind == "map" or image.ndim == 2:
            im = ax.imshow(image, cmap="viridis")
            fig.colorbar(im, ax=ax, fraction=0.046)
        else:
            ax.imshow(_tonemap(image))
        ax.set_title(title)
        ax.axis("off")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def save_curve_figure(path, series, xlabel: str, ylabel: str,
                      title: str = "", logy: bool = False) -> None:
    """Line plot of (label, xs, ys) series."""
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=_DPI)
    for label, xs, ys in series:
        ax.plot(xs, ys, label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if logy:
        ax.set_yscale("log")
    if len(series) > 1 or (series and series[0][0]):
        ax.legend()
    ax.grid(True, alpha=0.3)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def save_scatter_fit_figure(path, xs, measured, fitted, xlabel: str,
                            title: str = "") -> None:
    """Measured points against a fitted curve, one panel per channel."""
    measured = np.atleast_2d(np.asarray(measured, dtype=float).T).T
    fitted = np.atleast_2d(np.asarray(fitted, dtype=float).T).T
    C = measured.shape[1]
    colors = ["tab:red", "tab:green", "tab:blue"]
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=_DPI)
    order = np.argsort(xs)
    for c in range(C):
        col = colors[c % 3] if C > 1 else "tab:blue"
        ax.plot(np.asarray(xs)[order], measured[order, c], "o", ms=4,
                color=col, alpha=0.6)
        ax.plot(np.asarray(xs)[order], fitted[order, c], "-", color=col)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("intensity")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def save_backlight_figure(path, backlight, grid_shape, title: str = "backlight") -> None:
    cols, rows = grid_shape
    img = np.asarray(backlight, dtype=float).reshape(rows, cols, 3)
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=_DPI)
    scale = max(float(img.max()), 1e-12)
    ax.imshow(img / scale, interpolation="nearest")
    ax.set_title(f"{title} (peak {img.max():.4g})")
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)


def save_coverage_figure(path, counts, d_edges, h_edges) -> None:
    fig, ax = plt.subplots(figsize=(5, 4), dpi=_DPI)
    pcm = ax.pcolormesh(d_edges, h_edges, counts.T, cmap="magma")
    fig.colorbar(pcm, ax=ax, label="samples")
    ax.set_xlabel("theta_d (deg)")
    ax.set_ylabel("theta_h (deg)")
    ax.set_title("angular coverage")
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
