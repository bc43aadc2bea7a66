"""Analysis tools for predicted heatmaps."""

from .diagnostics import (
    DiagnosticReport,
    DoubleAttentionFinding,
    diagnose_dataset,
    scan_heatmaps,
)

__all__ = [
    "DiagnosticReport",
    "DoubleAttentionFinding",
    "diagnose_dataset",
    "scan_heatmaps",
]
