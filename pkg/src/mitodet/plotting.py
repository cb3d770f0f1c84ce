"""Report figures written next to the delimited outputs."""

from __future__ import annotations

import io
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evaluation import CurvePoint  # noqa: E402
from .files import atomic_write_bytes  # noqa: E402

# no version/date stamps so reruns give identical files
_PNG_METADATA = {"Software": None}


def plot_threshold_curve(
    points: Sequence[CurvePoint], path: str | Path, chosen: float | None = None, dpi: int = 120
) -> Path:
    """Precision/recall/F1 against threshold, and the precision-recall curve."""
    taus = [p.threshold for p in points]
    fig, (ax_t, ax_pr) = plt.subplots(1, 2, figsize=(9, 3.6))

    ax_t.step(taus, [p.precision for p in points], where="post", label="precision")
    ax_t.step(taus, [p.recall for p in points], where="post", label="recall")
    ax_t.step(taus, [p.f1 for p in points], where="post", label="F1", linewidth=2)
    if chosen is not None:
        ax_t.axvline(chosen, color="0.4", linestyle="--", linewidth=1, label=f"tau={chosen:.3f}")
    ax_t.set_xlabel("confidence threshold")
    ax_t.set_ylim(-0.02, 1.02)
    ax_t.set_xlim(0, 1)
    ax_t.grid(True, alpha=0.3)
    ax_t.legend(loc="best", frameon=False, fontsize=8)

    ax_pr.plot([p.recall for p in points], [p.precision for p in points], marker=".", markersize=3)
    ax_pr.set_xlabel("recall")
    ax_pr.set_ylabel("precision")
    ax_pr.set_xlim(-0.02, 1.02)
    ax_pr.set_ylim(-0.02, 1.02)
    ax_pr.grid(True, alpha=0.3)

    fig.tight_layout()
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=dpi, metadata=_PNG_METADATA)
    plt.close(fig)
    path = Path(path)
    atomic_write_bytes(path, buf.getvalue())
    return path
