"""Fixed-range 2D velocity histograms and their conversion to GMM input."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .synthdata import ParticleSet

PLANES = {"uv": (0, 1), "vw": (1, 2), "uw": (0, 2)}


class DegenerateInputError(ValueError):
    pass


class DimensionError(ValueError):
    pass


def _check_ranges(ranges):
    ranges = tuple((float(lo), float(hi)) for lo, hi in ranges)
    if len(ranges) != 2:
        raise ValueError("need one (min, max) pair per plane axis")
    for lo, hi in ranges:
        if not lo < hi:
            raise ValueError(f"axis range must satisfy min < max, got ({lo}, {hi})")
    return ranges


@dataclass(frozen=True)
class Histogram2D:
    """Weighted bin counts over one velocity plane.

    ``counts[i, j]`` holds the weight of particles with first-axis velocity in
    bin ``i`` and second-axis velocity in bin ``j``.
    """

    counts: np.ndarray
    axis_ranges: tuple
    plane: str
    out_of_range_count: float = 0.0

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.float64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1] or counts.shape[0] < 2:
            raise ValueError(f"counts must be a square grid with >= 2 bins, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        if self.plane not in PLANES:
            raise ValueError(f"plane must be one of {sorted(PLANES)}")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "axis_ranges", _check_ranges(self.axis_ranges))

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    @property
    def in_range_weight(self) -> float:
        return float(self.counts.sum())

    @property
    def degenerate(self) -> bool:
        return self.in_range_weight == 0.0

    @property
    def bin_widths(self) -> tuple:
        return tuple((hi - lo) / self.n_bins for lo, hi in self.axis_ranges)

    @property
    def bin_area(self) -> float:
        w0, w1 = self.bin_widths
        return w0 * w1

    def edges(self, axis: int) -> np.ndarray:
        lo, hi = self.axis_ranges[axis]
        return np.linspace(lo, hi, self.n_bins + 1)

    def centers(self, axis: int) -> np.ndarray:
        lo, hi = self.axis_ranges[axis]
        width = (hi - lo) / self.n_bins
        return lo + (np.arange(self.n_bins) + 0.5) * width


def _bin_index(x: np.ndarray, lo: float, hi: float, n_bins: int):
    edges = np.linspace(lo, hi, n_bins + 1)
    idx = np.searchsorted(edges, x, side="right") - 1
    # last bin is closed on the right
    idx[x == hi] = n_bins - 1
    inside = (x >= lo) & (x <= hi)
    return idx, inside


def bin_particles(particles: ParticleSet, plane: str, n_bins: int, ranges) -> Histogram2D:
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    if plane not in PLANES:
        raise ValueError(f"plane must be one of {sorted(PLANES)}, got {plane!r}")
    a0, a1 = PLANES[plane]
    if max(a0, a1) >= particles.dimension:
        raise DimensionError(
            f"plane {plane!r} needs the w axis but the particle set is {particles.dimension}D"
        )
    ranges = _check_ranges(ranges)
    v = particles.velocities
    w = particles.particle_weights
    i0, in0 = _bin_index(v[:, a0], *ranges[0], n_bins)
    i1, in1 = _bin_index(v[:, a1], *ranges[1], n_bins)
    inside = in0 & in1
    flat = i0[inside] * n_bins + i1[inside]
    counts = np.bincount(flat, weights=w[inside], minlength=n_bins * n_bins)
    counts = counts.reshape(n_bins, n_bins)
    out_of_range = float(w[~inside].sum())
    return Histogram2D(counts, ranges, plane, out_of_range)


def default_ranges(particles: ParticleSet, plane: str, n_thermal: float = 5.0):
    """Symmetric ranges of +-n_thermal nominal thermal speeds on each plane axis."""
    axes = PLANES[plane]
    speeds = np.sqrt(particles.nominal_temperature)
    return tuple((-n_thermal * speeds[a], n_thermal * speeds[a]) for a in axes)


def all_planes(particles: ParticleSet, n_bins: int, ranges=None) -> dict:
    """Histograms of the uv, vw and uw marginals.

    ``ranges`` is either None (default thermal ranges), one ``(min, max)`` pair
    applied to every axis, or a mapping from plane name to a pair of ranges.
    """
    if particles.dimension != 3:
        raise DimensionError("all_planes needs 3D velocities; use bin_particles for a single 2D plane")
    out = {}
    for plane in PLANES:
        if ranges is None:
            r = default_ranges(particles, plane)
        elif isinstance(ranges, dict):
            r = ranges[plane]
        else:
            r = (ranges, ranges)
        out[plane] = bin_particles(particles, plane, n_bins, r)
    return out


@dataclass(frozen=True)
class WeightedPoints:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.points, dtype=np.float64)
        w = np.asarray(self.weights, dtype=np.float64)
        if x.ndim != 2 or w.shape != (x.shape[0],):
            raise ValueError("points must be (N, d) with one weight per point")
        if np.any(w < 0) or not np.any(w > 0):
            raise DegenerateInputError("weights must be >= 0 with at least one > 0")
        object.__setattr__(self, "points", x)
        object.__setattr__(self, "weights", w)

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def moments(self):
        """Weighted mean and second moment E[x x^T]."""
        w = self.weights / self.total_weight
        mean = np.sum(w[:, None] * self.points, axis=0)
        second = np.sum(w[:, None, None] * self.points[:, :, None] * self.points[:, None, :], axis=0)
        return mean, second


def to_weighted_points(hist: Histogram2D, drop_empty: bool = True) -> WeightedPoints:
    if hist.degenerate:
        raise DegenerateInputError("histogram has no in-range weight")
    c0, c1 = hist.centers(0), hist.centers(1)
    g0, g1 = np.meshgrid(c0, c1, indexing="ij")
    points = np.column_stack([g0.ravel(), g1.ravel()])
    weights = hist.counts.ravel()
    if drop_empty:
        keep = weights > 0
        points, weights = points[keep], weights[keep]
    return WeightedPoints(points, weights.copy())


@dataclass(frozen=True)
class PdfGrid:
    """Probability density sampled at the bin centers of a square grid.

    Values are renormalized on construction so that ``sum(values) * bin_area == 1``.
    """

    values: np.ndarray
    axis_ranges: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("pdf grid must be square")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ValueError("pdf values must be finite and >= 0")
        ranges = _check_ranges(self.axis_ranges)
        n = v.shape[0]
        area = (ranges[0][1] - ranges[0][0]) * (ranges[1][1] - ranges[1][0]) / n**2
        mass = v.sum() * area
        if mass <= 0:
            raise DegenerateInputError("pdf grid has zero mass")
        v = v / mass
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "axis_ranges", ranges)

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def bin_area(self) -> float:
        (a, b), (c, d) = self.axis_ranges
        return (b - a) * (d - c) / self.n_bins**2

    @property
    def probabilities(self) -> np.ndarray:
        return self.values * self.bin_area

    def centers(self, axis: int) -> np.ndarray:
        lo, hi = self.axis_ranges[axis]
        return lo + (np.arange(self.n_bins) + 0.5) * (hi - lo) / self.n_bins

    def aligned_with(self, other: "PdfGrid") -> bool:
        return self.n_bins == other.n_bins and self.axis_ranges == other.axis_ranges


def to_pdf(hist: Histogram2D) -> PdfGrid:
    if hist.degenerate:
        raise DegenerateInputError("histogram has no in-range weight")
    return PdfGrid(hist.counts / (hist.in_range_weight * hist.bin_area), hist.axis_ranges)


def _linear_weights(src: np.ndarray, dst: np.ndarray):
    # index of the left source node per target, with linear extrapolation at the ends
    h = src[1] - src[0]
    t = (dst - src[0]) / h
    i = np.clip(np.floor(t).astype(np.int64), 0, len(src) - 2)
    return i, t - i


def refine_pdf(hist: Histogram2D, target_bins: int) -> PdfGrid:
    """Bilinear interpolation of the histogram pdf onto a finer grid.

    Coarse values sit at coarse bin centers; target centers outside the outer
    coarse centers are linearly extrapolated and clipped at zero.
    """
    if target_bins < hist.n_bins:
        raise ValueError("target_bins must be >= the histogram's n_bins (no downsampling)")
    coarse = to_pdf(hist)
    if target_bins == hist.n_bins:
        return coarse
    values = coarse.values
    for axis in (0, 1):
        lo, hi = hist.axis_ranges[axis]
        dst = lo + (np.arange(target_bins) + 0.5) * (hi - lo) / target_bins
        i, f = _linear_weights(hist.centers(axis), dst)
        left = np.take(values, i, axis=axis)
        right = np.take(values, i + 1, axis=axis)
        shape = [1, 1]
        shape[axis] = target_bins
        f = f.reshape(shape)
        values = (1.0 - f) * left + f * right
    return PdfGrid(np.clip(values, 0.0, None), hist.axis_ranges)
