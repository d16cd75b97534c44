"""CSV/JSON report writers for the evaluation commands."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional

from .montecarlo import RiskHistogram


def _fmt_edge(v: float) -> str:
    return "inf" if math.isinf(v) else f"{v:.6g}"


def write_histogram_csv(hist: RiskHistogram, path) -> None:
    """Columns: bin_lower, bin_upper, count, proportion, cumulative."""
    edges = hist.binning.bin_edges()
    props = hist.proportions
    cum = hist.cumulative()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bin_lower", "bin_upper", "count", "proportion", "cumulative"])
        for (lo, hi), c, p, q in zip(edges, hist.counts, props, cum):
            w.writerow([_fmt_edge(lo), _fmt_edge(hi), int(c), f"{p:.10f}", f"{q:.10f}"])


def histogram_report(hist: RiskHistogram, config_echo: dict, runtime: float,
                     eta: Optional[float] = None) -> dict:
    if eta is None:
        eta = hist.binning.thresholds[-1]
    lo, hi = hist.wilson_interval(eta)
    return {
        "config": config_echo,
        "seed": hist.seed,
        "runtime_seconds": runtime,
        "total_samples": hist.total_samples,
        "accepted_samples": hist.accepted,
        "rejected_samples": hist.rejected_samples,
        "thresholds": list(hist.binning.thresholds),
        "counts": [int(c) for c in hist.counts],
        "proportions": [float(p) for p in hist.proportions],
        "dangerous_proportion": {
            "eta": eta,
            "value": hist.dangerous_proportion(eta),
            "wilson_95": [lo, hi],
        },
    }


def write_json(data: dict, path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
