"""Figures for simulation reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from fedra.selection import format_dt  # noqa: E402
from fedra.simulator import MetricsRow  # noqa: E402


def plot_report(rows: Sequence[MetricsRow], path: str | Path) -> Path:
    """Grouped bars of NSS/NSPS (top) and completeness/staleness (bottom) per query and dt."""
    path = Path(path)
    queries = list(dict.fromkeys(r.query for r in rows))
    dts = list(dict.fromkeys(r.dt for r in rows))
    index = {(r.query, r.dt): r for r in rows}
    width = 0.8 / max(len(dts), 1)

    fig, (ax_src, ax_qual) = plt.subplots(2, 1, figsize=(max(6.0, 1.2 * len(queries) + 2), 6), sharex=True)
    xs = range(len(queries))
    for j, dt in enumerate(dts):
        offs = [x - 0.4 + width * (j + 0.5) for x in xs]
        label = f"dt={format_dt(dt)}"
        picked = [index.get((q, dt)) for q in queries]
        ax_src.bar(offs, [_val(r, "nss") for r in picked], width, label=f"NSS {label}", alpha=0.8)
        ax_src.bar(offs, [_val(r, "nsps") for r in picked], width * 0.5, color="k", alpha=0.6,
                   label="NSPS" if j == 0 else None)
        ax_qual.plot(offs, [_val(r, "completeness") for r in picked], "o", label=f"C {label}")
        ax_qual.plot(offs, [_val(r, "staleness") for r in picked], "x", label=f"S {label}")

    ax_src.set_ylabel("selected sources")
    ax_src.legend(fontsize="small", ncol=2)
    ax_qual.set_ylabel("ratio")
    ax_qual.set_ylim(-0.05, 1.05)
    ax_qual.set_xticks(list(xs))
    ax_qual.set_xticklabels(queries, rotation=45, ha="right")
    ax_qual.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def _val(row: MetricsRow | None, name: str) -> float:
    if row is None:
        return float("nan")
    v = getattr(row, name)
    return float("nan") if v is None else float(v)
