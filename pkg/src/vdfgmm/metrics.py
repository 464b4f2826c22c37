"""Information-loss and model-quality metrics (natural log throughout)."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .histogram import Histogram2D, PdfGrid, WeightedPoints, refine_pdf, to_pdf
from .wgmm import GmmModel, evaluate_pdf, mixture_moments

# returned by kl_divergence when p has mass where q has none
DIVERGENT = math.inf
LN2 = math.log(2.0)


class MisalignedGridError(ValueError):
    pass


def _check_aligned(p: PdfGrid, q: PdfGrid):
    if not p.aligned_with(q):
        raise MisalignedGridError(
            f"grids differ: {p.n_bins} bins over {p.axis_ranges} vs {q.n_bins} bins over {q.axis_ranges}"
        )


def _kl_terms(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 0
    if np.any(q[mask] == 0):
        return DIVERGENT
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def kl_divergence(p: PdfGrid, q: PdfGrid) -> float:
    """D(P||Q) over bin probabilities; ``DIVERGENT`` (inf) if Q lacks support."""
    _check_aligned(p, q)
    return _kl_terms(p.probabilities, q.probabilities)


def jsd(p: PdfGrid, q: PdfGrid) -> float:
    _check_aligned(p, q)
    pp, qq = p.probabilities, q.probabilities
    mid = 0.5 * (pp + qq)
    value = 0.5 * _kl_terms(pp, mid) + 0.5 * _kl_terms(qq, mid)
    if not -1e-9 <= value <= LN2 + 1e-9:
        raise ArithmeticError(f"JSD {value!r} outside [0, ln 2] beyond rounding")
    return min(max(value, 0.0), LN2)


def n_parameters(n_components: int, dimension: int) -> int:
    return n_components * (1 + dimension * (dimension + 3) // 2)


def bic(loglik: float, model: GmmModel, n_observed: float) -> float:
    if n_observed <= 0:
        raise ValueError("n_observed must be > 0")
    k = n_parameters(model.n_components, model.dimension)
    return -2.0 * loglik + k * math.log(n_observed)


def moment_errors(model: GmmModel, points: WeightedPoints):
    """Relative L2 errors of the mixture mean and second moment vs the data.

    The mean error is scaled by ``max(|data mean|, rms spread)`` so a centred
    distribution still yields a meaningful relative number.
    """
    m_mean, m_second = mixture_moments(model)
    d_mean, d_second = points.moments()
    spread = math.sqrt(max(np.trace(d_second - np.outer(d_mean, d_mean)), 0.0))
    denom = max(float(np.linalg.norm(d_mean)), spread)
    mean_err = float(np.linalg.norm(m_mean - d_mean)) / denom if denom > 0 else 0.0
    second_err = float(np.linalg.norm(m_second - d_second) / np.linalg.norm(d_second))
    return mean_err, second_err


def compression_ratio(original_bytes: int, compressed_bytes: int) -> float:
    if compressed_bytes <= 0:
        raise ValueError("compressed size must be > 0")
    if original_bytes <= 0:
        raise ValueError("original size must be > 0")
    return original_bytes / compressed_bytes


def model_pdf_grid(model: GmmModel, axis_ranges, n_bins: int) -> PdfGrid:
    """Model density on the bin centers of a grid, renormalized over that grid."""
    return PdfGrid(evaluate_pdf(model, axis_ranges, n_bins), axis_ranges)


def jsd_model_vs_histogram(model: GmmModel, hist: Histogram2D) -> float:
    return jsd(model_pdf_grid(model, hist.axis_ranges, hist.n_bins), to_pdf(hist))


def jsd_histogram_vs_original(hist: Histogram2D, original: Histogram2D) -> float:
    """Coarse histogram, bilinearly refined, against a fine direct binning."""
    return jsd(refine_pdf(hist, original.n_bins), to_pdf(original))


def jsd_model_vs_original(model: GmmModel, original: Histogram2D) -> float:
    return jsd(model_pdf_grid(model, original.axis_ranges, original.n_bins), to_pdf(original))


@dataclass
class MetricsReport:
    jsd: float
    kl_pq: float
    kl_qp: float
    bic: float
    bic_bins: float
    loglik: float
    n_components: int
    mean_error: float
    second_moment_error: float
    compression_ratio_vs_histogram: float
    compression_ratio_vs_raw: float
    jsd_vs_original: float | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.jsd <= LN2 + 1e-12:
            raise ValueError(f"jsd {self.jsd} outside [0, ln 2]")

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("kl_pq", "kl_qp"):
            # JSON has no infinity
            if math.isinf(out[key]):
                out[key] = "divergent"
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def csv_row(self) -> str:
        d = self.to_dict()
        d.pop("extra")
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(d), lineterminator="\n")
        writer.writeheader()
        writer.writerow(d)
        return buf.getvalue()
