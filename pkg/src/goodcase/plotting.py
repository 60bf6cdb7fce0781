"""Latency figure for suite output.

Reads the same rows that go into summary.csv, so the figure can be redrawn
from the CSV alone.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from typing import Iterable

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from goodcase.core import CLAIMED_LATENCY, PROTOCOLS  # noqa: E402


def _latency_counts(rows: Iterable[dict]) -> tuple[dict, dict]:
    good: dict = defaultdict(Counter)
    every: dict = defaultdict(Counter)
    for r in rows:
        if r["latency"] in ("", None):
            continue
        lat = int(r["latency"])
        every[r["protocol"]][lat] += 1
        if int(r["good_case"]):
            good[r["protocol"]][lat] += 1
    return good, every


def plot_latency(rows: list[dict], path: str) -> None:
    """Left: good-case latencies per protocol against the claimed value.
    Right: latency distribution over all runs."""
    good, every = _latency_counts(rows)
    protocols = [p for p in PROTOCOLS if p in every]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4))

    for i, p in enumerate(protocols):
        counts = good.get(p, Counter())
        total = sum(counts.values())
        for lat, c in sorted(counts.items()):
            ax1.scatter(i, lat, s=30 + 300 * c / max(total, 1), color="tab:blue", zorder=3)
            ax1.annotate(str(c), (i, lat), xytext=(8, -3), textcoords="offset points", fontsize=8)
        ax1.hlines(CLAIMED_LATENCY[p], i - 0.3, i + 0.3, color="tab:red", zorder=2,
                   label="claimed" if i == 0 else None)
    ax1.set_xticks(range(len(protocols)))
    ax1.set_xticklabels(protocols)
    ax1.set_ylabel("decision latency (rounds)")
    ax1.set_title("good-case runs")
    ax1.set_ylim(bottom=0)
    if protocols:
        ax1.legend(loc="upper left", fontsize=8)

    width = 0.8 / max(len(protocols), 1)
    lats = sorted({lat for c in every.values() for lat in c})
    for i, p in enumerate(protocols):
        xs = [lat + (i - (len(protocols) - 1) / 2) * width for lat in lats]
        ax2.bar(xs, [every[p][lat] for lat in lats], width=width, label=p)
    ax2.set_xlabel("decision latency (rounds)")
    ax2.set_ylabel("runs")
    ax2.set_title("all runs")
    if lats:
        ax2.set_xticks(lats)
    if protocols:
        ax2.legend(fontsize=8)

    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
