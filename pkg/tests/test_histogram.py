import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vdfgmm import histogram as h
from vdfgmm import synthdata as sd
from vdfgmm.metrics import jsd


def particles2d(v, weights=None):
    return sd.ParticleSet(np.asarray(v, dtype=float), [1.0, 1.0], weights)


def test_one_particle_per_bin():
    p = particles2d([[0.25, 0.25], [0.25, 0.75], [0.75, 0.25], [0.75, 0.75]])
    hist = h.bin_particles(p, "uv", 2, ((0, 1), (0, 1)))
    np.testing.assert_array_equal(hist.counts, [[1, 1], [1, 1]])
    assert hist.out_of_range_count == 0


def test_edge_goes_to_higher_bin_and_last_bin_closed():
    p = particles2d([[0.5, 0.1], [1.0, 1.0], [0.0, 0.0]])
    hist = h.bin_particles(p, "uv", 2, ((0, 1), (0, 1)))
    np.testing.assert_array_equal(hist.counts, [[1, 0], [1, 1]])


def test_out_of_range_counted_not_clamped():
    p = particles2d([[0.5, 0.5], [1.5, 0.5], [0.5, -0.1]], weights=[1.0, 2.0, 0.5])
    hist = h.bin_particles(p, "uv", 4, ((0, 1), (0, 1)))
    assert hist.in_range_weight == 1.0
    assert hist.out_of_range_count == 2.5


def test_standard_normal_tail_small():
    p = sd.generate(sd.preset("maxwellian", 10_000, 0, 2))
    hist = h.bin_particles(p, "uv", 200, ((-5, 5), (-5, 5)))
    assert hist.out_of_range_count / p.total_weight < 1e-3


def test_w_plane_on_2d_data_is_dimension_error():
    p = sd.generate(sd.preset("maxwellian", 10, 0, 2))
    with pytest.raises(h.DimensionError):
        h.bin_particles(p, "vw", 10, ((-5, 5), (-5, 5)))


def test_bin_particles_rejects_bad_arguments():
    p = sd.generate(sd.preset("maxwellian", 10, 0, 2))
    with pytest.raises(ValueError):
        h.bin_particles(p, "uv", 1, ((-5, 5), (-5, 5)))
    with pytest.raises(ValueError):
        h.bin_particles(p, "uv", 10, ((5, -5), (-5, 5)))


@settings(max_examples=50, deadline=None)
@given(
    v=arrays(np.float64, st.tuples(st.integers(1, 200), st.just(3)),
             elements=st.floats(-8, 8, allow_nan=False)),
    seed=st.integers(0, 2**32 - 1),
    n_bins=st.integers(2, 40),
)
def test_mass_conservation_and_permutation_invariance(v, seed, n_bins):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.1, 3.0, len(v))
    p = sd.ParticleSet(v, [1.0, 1.0, 1.0], w)
    for plane in h.PLANES:
        hist = h.bin_particles(p, plane, n_bins, ((-5, 5), (-4, 6)))
        total = hist.counts.sum() + hist.out_of_range_count
        assert math.isclose(total, w.sum(), rel_tol=1e-9)
        perm = rng.permutation(len(v))
        shuffled = h.bin_particles(p.subset(perm), plane, n_bins, ((-5, 5), (-4, 6)))
        np.testing.assert_allclose(shuffled.counts, hist.counts, rtol=1e-12, atol=1e-12)


@pytest.mark.slow
def test_isotropic_planes_agree():
    p = sd.generate(sd.preset("maxwellian", 1_000_000, 11))
    hists = h.all_planes(p, 200)
    pdfs = {k: h.to_pdf(v) for k, v in hists.items()}
    for a, b in [("uv", "vw"), ("uv", "uw"), ("vw", "uw")]:
        assert jsd(pdfs[a], pdfs[b]) < 0.01
    for hist in hists.values():
        assert math.isclose(hist.in_range_weight + hist.out_of_range_count, 1e6, rel_tol=1e-9)


def test_all_planes_needs_3d():
    p = sd.generate(sd.preset("maxwellian", 10, 0, 2))
    with pytest.raises(h.DimensionError, match="bin_particles"):
        h.all_planes(p, 10)


def test_all_planes_empty_input_is_degenerate():
    p = sd.ParticleSet(np.zeros((0, 3)), [1, 1, 1])
    hists = h.all_planes(p, 8)
    assert set(hists) == {"uv", "vw", "uw"}
    for hist in hists.values():
        assert hist.degenerate
        assert not hist.counts.any()


def test_weighted_points_drop_empty():
    hist = h.Histogram2D([[3, 0], [0, 1]], ((0, 2), (0, 2)), "uv")
    pts = h.to_weighted_points(hist, drop_empty=True)
    np.testing.assert_array_equal(pts.weights, [3, 1])
    np.testing.assert_array_equal(pts.points, [[0.5, 0.5], [1.5, 1.5]])
    full = h.to_weighted_points(hist, drop_empty=False)
    assert len(full) == 4 and full.total_weight == pts.total_weight


def test_weighted_points_are_bin_centers():
    p = sd.generate(sd.preset("maxwellian", 5000, 2, 2))
    hist = h.bin_particles(p, "uv", 200, ((-5, 5), (-5, 5)))
    pts = h.to_weighted_points(hist)
    assert len(pts) <= 40_000
    full = h.to_weighted_points(hist, drop_empty=False)
    assert len(full) == 40_000
    centers = set(np.round(hist.centers(0), 12))
    assert set(np.round(full.points[:, 0], 12)) == centers


def test_weighted_points_all_zero_is_error():
    hist = h.Histogram2D(np.zeros((3, 3)), ((0, 1), (0, 1)), "uv")
    with pytest.raises(h.DegenerateInputError):
        h.to_weighted_points(hist)


def test_to_pdf_uniform():
    hist = h.Histogram2D(np.full((4, 4), 7.0), ((0, 1), (0, 1)), "uv")
    np.testing.assert_allclose(h.to_pdf(hist).values, 1.0, rtol=1e-15)


def test_to_pdf_delta():
    counts = np.zeros((5, 5))
    counts[2, 3] = 9.0
    hist = h.Histogram2D(counts, ((0, 1), (0, 2)), "uw")
    pdf = h.to_pdf(hist)
    area = 0.2 * 0.4
    assert math.isclose(pdf.values[2, 3], 1 / area, rel_tol=1e-12)
    assert pdf.values.sum() == pdf.values[2, 3]


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(0, 1e6)))
def test_to_pdf_normalized(counts):
    if counts.sum() == 0:
        counts[0, 0] = 1.0
    pdf = h.to_pdf(h.Histogram2D(counts, ((-1, 2), (0, 5)), "uv"))
    assert math.isclose(pdf.values.sum() * pdf.bin_area, 1.0, rel_tol=1e-9)


def test_to_pdf_zero_total_is_error():
    with pytest.raises(h.DegenerateInputError):
        h.to_pdf(h.Histogram2D(np.zeros((2, 2)), ((0, 1), (0, 1)), "uv"))


def test_refine_identity():
    counts = np.arange(16, dtype=float).reshape(4, 4) + 1
    hist = h.Histogram2D(counts, ((0, 1), (0, 1)), "uv")
    np.testing.assert_array_equal(h.refine_pdf(hist, 4).values, h.to_pdf(hist).values)


def test_refine_reproduces_linear_ramp():
    n = 10
    c = (np.arange(n) + 0.5) / n
    ramp = 1.0 + 0.5 * c[:, None] + 0.3 * c[None, :]
    hist = h.Histogram2D(ramp, ((0, 1), (0, 1)), "uv")
    fine = h.refine_pdf(hist, 37)
    f = (np.arange(37) + 0.5) / 37
    expected = 1.0 + 0.5 * f[:, None] + 0.3 * f[None, :]
    expected /= expected.sum() / 37**2
    np.testing.assert_allclose(fine.values, expected, rtol=1e-12)


def test_refine_no_downsampling():
    hist = h.Histogram2D(np.ones((4, 4)), ((0, 1), (0, 1)), "uv")
    with pytest.raises(ValueError):
        h.refine_pdf(hist, 3)


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(0, 100)), st.integers(5, 30))
def test_refine_normalized_and_non_negative(counts, target):
    if counts.sum() == 0:
        counts[2, 2] = 1.0
    fine = h.refine_pdf(h.Histogram2D(counts, ((-1, 1), (-2, 2)), "uv"), target)
    assert np.all(fine.values >= 0)
    assert math.isclose(fine.values.sum() * fine.bin_area, 1.0, rel_tol=1e-9)


@pytest.mark.slow
def test_refined_coarse_matches_direct_fine_binning():
    p = sd.generate(sd.preset("maxwellian", 1_000_000, 5, 2))
    r = ((-5, 5), (-5, 5))
    coarse = h.bin_particles(p, "uv", 100, r)
    fine = h.bin_particles(p, "uv", 500, r)
    assert jsd(h.refine_pdf(coarse, 500), h.to_pdf(fine)) < 0.05
