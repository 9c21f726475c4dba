"""Error-rate curves rendered to image files (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_sweeps(results, path, title: str | None = None) -> Path:
    """Semilog BER (or FER for coded sweeps) versus SNR, one curve per result.

    Points with zero errors are omitted from the log axis; the Wilson bounds
    are drawn as error bars.
    """
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for res in results:
        coded = res.config.mode == "turbo-fer"
        pts = [p for p in res.points if (p.fer if coded else p.ber) > 0]
        if not pts:
            continue
        x = [p.snr_db for p in pts]
        y = [p.fer if coded else p.ber for p in pts]
        ci = [p.fer_ci if coded else p.ber_ci for p in pts]
        err = [[v - c[0] for v, c in zip(y, ci)], [c[1] - v for v, c in zip(y, ci)]]
        label = f"{res.config.mode}, omega={res.omega:g}"
        ax.errorbar(x, y, yerr=err, marker="o", capsize=3, label=label)
    ax.set_yscale("log")
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("FER" if results and results[0].config.mode == "turbo-fer" else "BER")
    ax.grid(True, which="both", alpha=0.3)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    if title:
        ax.set_title(title)
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
