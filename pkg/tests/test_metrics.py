import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from vdfgmm import metrics
from vdfgmm.histogram import PdfGrid, WeightedPoints
from vdfgmm.wgmm import GmmModel, mixture_moments

UNIT = ((0.0, 1.0), (0.0, 1.0))


def grid(values, ranges=UNIT):
    return PdfGrid(np.asarray(values, dtype=float), ranges)


def direct_jsd(p, q):
    """Entropy form: H((P+Q)/2) - (H(P) + H(Q)) / 2, summed bin by bin."""
    def entropy(x):
        return -sum(v * math.log(v) for v in x.ravel() if v > 0)
    return entropy((p + q) / 2) - 0.5 * (entropy(p) + entropy(q))


def test_kl_identical_is_zero():
    g = grid(np.random.default_rng(0).uniform(0.1, 1, (4, 4)))
    assert metrics.kl_divergence(g, g) == 0.0


def test_kl_hand_value():
    p = grid([[1.0, 0.0], [0.0, 1.0]])
    # Q puts 0.9 / 0.1 on the two bins where P is 0.5 / 0.5
    q = grid([[0.9, 0.0], [0.0, 0.1]])
    expected = 0.5 * math.log(0.5 / 0.9) + 0.5 * math.log(0.5 / 0.1)
    assert math.isclose(expected, 0.5108, abs_tol=5e-5)
    assert math.isclose(metrics.kl_divergence(p, q), expected, rel_tol=1e-12)


def test_kl_divergent_marker():
    p = grid([[1.0, 1.0], [0.0, 0.0]])
    q = grid([[1.0, 0.0], [1.0, 0.0]])
    assert metrics.kl_divergence(p, q) == metrics.DIVERGENT


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 5), elements=st.floats(1e-3, 10)),
       arrays(np.float64, (5, 5), elements=st.floats(1e-3, 10)))
def test_kl_gibbs(a, b):
    assert metrics.kl_divergence(grid(a), grid(b)) >= -1e-15


def test_jsd_self_zero():
    g = grid(np.random.default_rng(1).uniform(0, 1, (6, 6)))
    assert metrics.jsd(g, g) == 0.0


def test_jsd_disjoint_is_ln2():
    p = grid([[1.0, 0.0], [0.0, 0.0]])
    q = grid([[0.0, 0.0], [0.0, 1.0]])
    assert math.isclose(metrics.jsd(p, q), math.log(2), abs_tol=1e-9)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, (4, 4), elements=st.floats(0, 5)),
       arrays(np.float64, (4, 4), elements=st.floats(0, 5)))
def test_jsd_properties_and_direct_oracle(a, b):
    a[0, 0] += 1e-3
    b[3, 3] += 1e-3
    p, q = grid(a), grid(b)
    value = metrics.jsd(p, q)
    assert 0.0 <= value <= math.log(2)
    assert abs(value - metrics.jsd(q, p)) <= 1e-12
    assert abs(value - direct_jsd(p.probabilities, q.probabilities)) <= 1e-12


def test_jsd_misaligned():
    with pytest.raises(metrics.MisalignedGridError):
        metrics.jsd(grid(np.ones((2, 2))), grid(np.ones((3, 3))))
    with pytest.raises(metrics.MisalignedGridError):
        metrics.jsd(grid(np.ones((2, 2))), grid(np.ones((2, 2)), ((0, 2), (0, 1))))


def model(m, d):
    return GmmModel(np.full(m, 1.0 / m), np.zeros((m, d)), [np.eye(d)] * m)


@pytest.mark.parametrize("m,d,k", [(8, 2, 48), (12, 3, 120), (1, 2, 6), (1, 1, 3)])
def test_parameter_count(m, d, k):
    assert metrics.n_parameters(m, d) == k


def test_bic_arithmetic():
    assert math.isclose(metrics.bic(0.0, model(1, 2), math.e), 6.0, rel_tol=1e-12)
    assert math.isclose(metrics.bic(-100.0, model(8, 2), 1e4), 200 + 48 * math.log(1e4), rel_tol=1e-12)


def test_bic_increases_with_k():
    values = [metrics.bic(-50.0, model(m, 2), 1000) for m in range(1, 6)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_bic_rejects_nonpositive_n():
    with pytest.raises(ValueError):
        metrics.bic(0.0, model(1, 2), 0)


def test_moment_errors_self_model_zero():
    rng = np.random.default_rng(0)
    pts = WeightedPoints(rng.normal(size=(200, 2)) + [3, -1], rng.uniform(0.5, 2, 200))
    mean, second = pts.moments()
    cov = second - np.outer(mean, mean)
    errs = metrics.moment_errors(GmmModel([1.0], [mean], [cov]), pts)
    assert errs[0] < 1e-14 and errs[1] < 1e-14


def test_moment_errors_perturbed_mean():
    rng = np.random.default_rng(1)
    pts = WeightedPoints(rng.normal(size=(500, 2)) * 0.1 + [4.0, 0.0], np.ones(500))
    mean, second = pts.moments()
    cov = second - np.outer(mean, mean)
    shifted = GmmModel([1.0], [mean + [0.1, 0.0]], [cov])
    mean_err, _ = metrics.moment_errors(shifted, pts)
    assert math.isclose(mean_err, 0.1 / np.linalg.norm(mean), rel_tol=1e-9)


def test_compression_ratio():
    assert metrics.compression_ratio(40_000, 400) == 100
    # two 2D Gaussians = 12 doubles vs 10^4 particles x 2 coordinates x 8 bytes
    assert math.isclose(metrics.compression_ratio(10_000 * 2 * 8, 12 * 8), 1666.67, rel_tol=1e-5)
    with pytest.raises(ValueError):
        metrics.compression_ratio(10, 0)


def test_gmm_vs_histogram_ratio_formula():
    from vdfgmm.codec import payload_size
    assert metrics.compression_ratio(200 * 200 * 8, payload_size(8, 2)) == 320_000 / 384


def test_report_json_and_csv():
    r = metrics.MetricsReport(0.01, 0.02, math.inf, 10.0, 9.0, -5.0, 3, 1e-16, 1e-15, 100.0, 1e4)
    assert '"kl_qp": "divergent"' in r.to_json()
    header, row = r.csv_row().splitlines()
    assert header.split(",")[0] == "jsd" and row.split(",")[0] == "0.01"
    with pytest.raises(ValueError):
        metrics.MetricsReport(1.0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 1)


def test_model_pdf_grid_renormalized():
    g = metrics.model_pdf_grid(GmmModel([1.0], [[0, 0]], [np.eye(2)]), ((-1, 1), (-1, 1)), 20)
    assert math.isclose(g.values.sum() * g.bin_area, 1.0, rel_tol=1e-12)
