import json

import numpy as np
import pytest

from vdfgmm import synthdata as sd


def two_gauss(n=10_000, seed=1, d=2):
    mean = np.zeros(d)
    left, right = mean.copy(), mean.copy()
    left[0], right[0] = -2.0, 2.0
    return sd.ScenarioSpec(
        (sd._component(0.5, left, np.eye(d)), sd._component(0.5, right, np.eye(d))), n, seed, d
    )


def test_single_component_sample_mean():
    spec = sd.ScenarioSpec((sd._component(1.0, (0, 0), np.eye(2)),), 10_000, 1, 2)
    p = sd.generate(spec)
    assert len(p) == 10_000
    assert np.all(np.abs(p.velocities.mean(axis=0)) < 4 / np.sqrt(10_000))


def test_bimodal_modes_by_sign():
    p = sd.generate(two_gauss())
    v = p.velocities
    left, right = v[v[:, 0] < 0], v[v[:, 0] >= 0]
    # truncation at u=0 biases the partitioned means by ~phi(2)/Phi(2) = 0.055
    np.testing.assert_allclose(left.mean(axis=0), [-2, 0], atol=0.1)
    np.testing.assert_allclose(right.mean(axis=0), [2, 0], atol=0.1)


def test_fractions_must_sum_to_one():
    with pytest.raises(sd.ScenarioError, match="fractions must sum to 1"):
        sd.ScenarioSpec((sd._component(0.7, (0, 0), np.eye(2)),
                         sd._component(0.4, (1, 0), np.eye(2))), 100, 0, 2)


def test_non_spd_covariance_names_component():
    bad = [[1.0, 2.0], [2.0, 1.0]]
    with pytest.raises(sd.ScenarioError, match="component 1"):
        sd.ScenarioSpec((sd._component(0.5, (0, 0), np.eye(2)),
                         sd._component(0.5, (1, 0), bad)), 100, 0, 2)


def test_determinism_bit_identical():
    a = sd.generate(two_gauss(seed=42))
    b = sd.generate(two_gauss(seed=42))
    assert a.velocities.tobytes() == b.velocities.tobytes()
    c = sd.generate(two_gauss(seed=43))
    assert a.velocities.tobytes() != c.velocities.tobytes()


def test_nominal_temperature_is_weighted_variance():
    spec = sd.ScenarioSpec((sd._component(0.25, (0, 0), np.diag([1.0, 4.0])),
                            sd._component(0.75, (0, 0), np.diag([2.0, 0.5]))), 10, 0, 2)
    np.testing.assert_allclose(sd.generate(spec).nominal_temperature, [1.75, 1.375])


@pytest.mark.slow
def test_moments_converge_at_1e6():
    spec = sd.preset("bump-on-tail", 1_000_000, 3, 3)
    v = sd.generate(spec).velocities
    n = len(v)
    mean, cov = spec.mixture_mean(), spec.mixture_covariance()
    se_mean = np.sqrt(np.diag(cov) / n)
    assert np.all(np.abs(v.mean(axis=0) - mean) < 5 * se_mean)
    # standard error of a sample covariance entry: sqrt(var((x_i-m_i)(x_j-m_j)) / n)
    c = v - mean
    prods = c[:, :, None] * c[:, None, :]
    se_cov = prods.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(np.cov(v.T, bias=True) - cov) < 5 * se_cov)


def test_preset_maxwellian():
    spec = sd.preset("maxwellian", 10_000, 7)
    assert len(spec.components) == 1
    np.testing.assert_array_equal(spec.components[0].mean, [0, 0, 0])
    np.testing.assert_array_equal(spec.components[0].covariance, np.eye(3))


def test_preset_counter_streaming_2d():
    spec = sd.preset("counter-streaming", 10_000, 7, dimension=2)
    assert [c.mean for c in spec.components] == [(-3.0, 0.0), (3.0, 0.0)]
    assert [c.fraction for c in spec.components] == [0.5, 0.5]


def test_unknown_preset_lists_valid_names():
    with pytest.raises(sd.ScenarioError) as exc:
        sd.preset("warp-drive", 10, 0)
    for name in sd.PRESET_NAMES:
        assert name in str(exc.value)


@pytest.mark.parametrize("name", sd.PRESET_NAMES)
def test_every_preset_is_valid(name):
    for d in (2, 3):
        spec = sd.preset(name, 100, 0, d)
        assert len(sd.generate(spec)) == 100


def test_presets_match_docs():
    # the table in docs/PRESETS.md is the frozen reference for presets.json
    from pathlib import Path
    doc = (Path(__file__).parents[1] / "docs" / "PRESETS.md").read_text()
    for name in sd.PRESET_NAMES:
        spec = sd.preset(name, 1, 0)
        for c in spec.components:
            row = f"| {name} | {c.fraction:g} | {', '.join(f'{m:g}' for m in c.mean)} | " \
                  f"{', '.join(f'{v:g}' for v in np.diag(c.covariance))} |"
            assert row in doc


def test_json_round_trip(tmp_path):
    spec = two_gauss(n=50, seed=9)
    path = tmp_path / "s.json"
    path.write_text(json.dumps(spec.to_dict()))
    back = sd.ScenarioSpec.from_json(path)
    assert back == spec
    assert sd.generate(back).velocities.tobytes() == sd.generate(spec).velocities.tobytes()


def test_json_variance_shorthand():
    spec = sd.ScenarioSpec.from_dict({
        "dimension": 2, "particle_count": 5, "seed": 1,
        "components": [{"fraction": 1.0, "mean": [0, 1], "variance": [2, 3]}],
    })
    np.testing.assert_array_equal(spec.components[0].covariance, np.diag([2.0, 3.0]))


def test_particle_set_rejects_bad_weights():
    with pytest.raises(ValueError):
        sd.ParticleSet(np.zeros((2, 2)), [1, 1], weights=[1.0, 0.0])
    with pytest.raises(ValueError):
        sd.ParticleSet(np.zeros((2, 2)), [1, 0])


def test_particle_file_round_trip(tmp_path):
    p = sd.generate(two_gauss(n=20))
    p = sd.ParticleSet(p.velocities, p.nominal_temperature, np.full(20, 0.5), "ions")
    p.save(tmp_path / "p.npz")
    q = sd.ParticleSet.load(tmp_path / "p.npz")
    assert q.velocities.tobytes() == p.velocities.tobytes()
    assert q.species_label == "ions"
    np.testing.assert_array_equal(q.weights, p.weights)


def test_drift_shifts_means():
    spec = sd.preset("drifting-beam", 10, 0, 2)
    spec = sd.ScenarioSpec(spec.components, 10, 0, 2, drift=(0.05, 0.0))
    moved = spec.drifted(4)
    np.testing.assert_allclose(moved.components[0].mean, [1.7, 0.0])
