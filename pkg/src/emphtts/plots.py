"""Spectrogram and F0 visualization with emphasis-span boxes."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.patches import Rectangle


def plot_spectrogram(
    mel: np.ndarray,
    f0: np.ndarray | None,
    emphasis_frame_spans: Sequence[tuple[int, int]],
    out_path: str | Path,
    title: str | None = None,
    shift_ms: float = 10.0,
) -> Path:
    """Render a log-mel heatmap with an F0 contour overlay and boxes over
    emphasized word spans (frame units). Unvoiced F0 frames (0) are omitted,
    so silence yields an empty contour."""
    mel = np.asarray(mel)
    out_path = Path(out_path)
    fig, ax = plt.subplots(figsize=(10, 4))
    ax.imshow(mel.T, origin="lower", aspect="auto", interpolation="nearest", cmap="magma")
    ax.set_xlabel(f"frame ({shift_ms:g} ms shift)")
    ax.set_ylabel("mel band")
    if title:
        ax.set_title(title)

    if f0 is not None:
        f0 = np.asarray(f0)
        voiced = np.nonzero(f0 > 0)[0]
        if voiced.size:
            ax2 = ax.twinx()
            ax2.plot(voiced, f0[voiced], ".", color="cyan", markersize=3)
            ax2.set_ylabel("F0 (Hz)", color="cyan")
            ax2.set_ylim(0, max(500.0, float(f0.max()) * 1.1))

    for start, end in emphasis_frame_spans:
        ax.add_patch(
            Rectangle(
                (start - 0.5, -0.5),
                end - start,
                mel.shape[1],
                fill=False,
                edgecolor="blue",
                linewidth=2,
            )
        )
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def emphasis_frame_spans(
    word_phoneme_spans: Sequence[tuple[int, int]],
    durations: Sequence[int] | np.ndarray,
    emphasized: Sequence[bool],
) -> list[tuple[int, int]]:
    """Convert emphasized word spans to frame extents via durations."""
    boundaries = np.concatenate([[0], np.cumsum(np.asarray(durations))])
    spans = []
    for (start, end), flag in zip(word_phoneme_spans, emphasized):
        if flag:
            spans.append((int(boundaries[start]), int(boundaries[end])))
    return spans
