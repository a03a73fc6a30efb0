"""Figure rendering for the CLI report paths.

Each ``plot_*`` function writes one image file (format from the suffix)
next to the CSV/JSON the CLI emits. The Agg backend is forced so this
works headless.
"""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

golden_mean = (np.sqrt(5.0) - 1.0) / 2.0
fig_width = 6.4

params = {
    "axes.labelsize": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 120,
}


def _figure():
    with plt.rc_context(params):
        fig, ax = plt.subplots()
    return fig, ax


def _save(fig, path) -> None:
    with plt.rc_context(params):
        fig.tight_layout()
        fig.savefig(path)
    plt.close(fig)


def plot_filterbank_response(rows, path, title: str | None = None) -> None:
    """Band magnitudes plus their sum from ``response_table`` rows."""
    with plt.rc_context(params):
        fig, ax = _figure()
        labels = list(dict.fromkeys(r["band_index"] for r in rows))
        for label in labels:
            sel = [r for r in rows if r["band_index"] == label]
            f = [r["frequency_hz"] for r in sel]
            m = [r["magnitude_db"] for r in sel]
            if label == "sum":
                ax.semilogx(f, m, "k--", label=f"Sum of {len(labels) - 1} Bands")
            else:
                ax.semilogx(f, m, label=f"Band {label}")
        ax.set_xlabel("Frequency (Hz)")
        ax.set_ylabel("Magnitude (dB)")
        ax.set_ylim(-60, 6)
        if title:
            ax.set_title(title)
        ax.legend(loc="lower left")
    _save(fig, path)


def plot_curve(rows, path, title: str | None = None) -> None:
    """Static compression curve: output level against input level."""
    with plt.rc_context(params):
        fig, ax = _figure()
        x = [r["input_level_db"] for r in rows]
        ax.plot(x, [r["output_level_db"] for r in rows], label="output")
        ax.plot(x, x, ":", color="0.5", label="1:1")
        ax.set_xlabel("Input level (dBFS)")
        ax.set_ylabel("Output level (dBFS)")
        ax.set_aspect("equal", adjustable="datalim")
        if title:
            ax.set_title(title)
        ax.legend()
    _save(fig, path)


def plot_psd(freqs, density_db, path, title: str | None = None) -> None:
    with plt.rc_context(params):
        fig, ax = _figure()
        f = np.asarray(freqs)
        keep = f > 0
        ax.semilogx(f[keep], np.asarray(density_db)[keep])
        ax.set_xlabel("Frequency (Hz)")
        ax.set_ylabel("PSD (dB/Hz)")
        if title:
            ax.set_title(title)
    _save(fig, path)


def plot_peaks(start_s, peak_dbfs, rms_dbfs, path, title: str | None = None) -> None:
    with plt.rc_context(params):
        fig, ax = _figure()
        ax.step(start_s, peak_dbfs, where="post", label="peak")
        ax.step(start_s, rms_dbfs, where="post", label="rms")
        ax.set_xlabel("Time (s)")
        ax.set_ylabel("Level (dBFS)")
        ax.set_ylim(bottom=max(-120.0, float(np.min(rms_dbfs)) - 6.0) if len(rms_dbfs) else None)
        if title:
            ax.set_title(title)
        ax.legend()
    _save(fig, path)
