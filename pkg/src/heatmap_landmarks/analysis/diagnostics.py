"""
Double-attention diagnostics.

This module scans predicted heatmaps for the failure mode where one landmark's
map lights up in two or more separated places, which makes argmax decoding
pick an arbitrary one of them.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..data.dataset import Sample
from ..heatmaps.codec import detect_double_attention

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DoubleAttentionFinding:
    """
    One heatmap with more than one separated strong peak.

    Attributes:
        sample_id: Identifier of the sample
        landmark_index: Index of the affected landmark
        peaks: (x, y) peak coordinates on the heatmap grid, strongest first
    """

    sample_id: str
    landmark_index: int
    peaks: list[tuple[int, int]]

    @property
    def peak_count(self) -> int:
        return len(self.peaks)


@dataclass
class DiagnosticReport:
    """
    Result of scanning a dataset.

    Attributes:
        findings: Every double-attention heatmap, in dataset then landmark order
        heatmaps_checked: Total number of heatmaps scanned
        threshold: Peak threshold used
        min_separation: Peak separation used
    """

    findings: list[DoubleAttentionFinding] = field(default_factory=list)
    heatmaps_checked: int = 0
    threshold: float = 0.5
    min_separation: float = 10.0

    @property
    def rate(self) -> float:
        """Fraction of scanned heatmaps showing double attention."""
        return len(self.findings) / self.heatmaps_checked if self.heatmaps_checked else 0.0

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "min_separation": self.min_separation,
            "heatmaps_checked": self.heatmaps_checked,
            "double_attention_rate": self.rate,
            "findings": [
                {
                    "sample_id": f.sample_id,
                    "landmark_index": f.landmark_index,
                    "peak_count": f.peak_count,
                    "peaks": [list(p) for p in f.peaks],
                }
                for f in self.findings
            ],
        }


def scan_heatmaps(
    sample_id: str,
    heatmaps: np.ndarray,
    threshold: float = 0.5,
    min_separation: float = 10.0,
) -> list[DoubleAttentionFinding]:
    """Check each map of one (n, G, G) stack for double attention."""
    findings = []
    for index, heatmap in enumerate(np.asarray(heatmaps)):
        peaks = detect_double_attention(heatmap, threshold, min_separation)
        if len(peaks) >= 2:
            findings.append(DoubleAttentionFinding(sample_id, index, peaks))
    return findings


def diagnose_dataset(
    dataset: Sequence[Sample],
    predictor: Callable[[np.ndarray], np.ndarray],
    threshold: float = 0.5,
    min_separation: float = 10.0,
    batch_size: int = 8,
) -> DiagnosticReport:
    """
    Predict heatmaps for every sample and collect double-attention findings.

    Args:
        dataset: Samples to scan
        predictor: Maps an image batch (B, 3, S, S) to heatmaps (B, n, G, G)
        threshold: Peak threshold, in (0, 1)
        min_separation: Minimum peak distance in grid pixels
        batch_size: Images per predictor call

    Returns:
        DiagnosticReport over all heatmaps of the dataset
    """
    if not 0 < threshold < 1:
        raise ValueError(f"Threshold must lie in (0, 1), got {threshold}")
    report = DiagnosticReport(threshold=threshold, min_separation=min_separation)
    for start in range(0, len(dataset), batch_size):
        batch = dataset[start : start + batch_size]
        preds = np.asarray(predictor(np.stack([s.image for s in batch])))
        for sample, stack in zip(batch, preds):
            report.findings.extend(scan_heatmaps(sample.id, stack, threshold, min_separation))
            report.heatmaps_checked += stack.shape[0]
    logger.info(
        "Scanned %d heatmaps: %d with double attention (rate %.4f)",
        report.heatmaps_checked,
        len(report.findings),
        report.rate,
    )
    return report
