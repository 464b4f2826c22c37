"""Synthetic particle velocity populations.

Particles are drawn from a Gaussian mixture in normalized thermal-speed units.
Sampling uses numpy's ``Generator`` over the PCG64 bit generator, seeded with
the scenario seed.  Normal variates come from ``Generator.standard_normal``
(numpy's ziggurat method) and are coloured by the lower Cholesky factor of each
component covariance.  The draw order is fixed:

1. component counts from ``Generator.multinomial(particle_count, fractions)``;
2. for each component in order, a ``(count, d)`` block of standard normals;
3. a final ``Generator.permutation`` interleaving the blocks.

A fixed numpy version therefore gives bit-identical particle sets for a fixed
scenario.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class ParticleSet:
    velocities: np.ndarray
    nominal_temperature: np.ndarray
    weights: np.ndarray | None = None
    species_label: str = "electrons"

    def __post_init__(self):
        v = np.asarray(self.velocities, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise ValueError(f"velocities must have shape (N, 2) or (N, 3), got {v.shape}")
        t = np.asarray(self.nominal_temperature, dtype=np.float64)
        if t.shape != (v.shape[1],) or np.any(t <= 0):
            raise ValueError("nominal_temperature must be positive on every axis")
        object.__setattr__(self, "velocities", v)
        object.__setattr__(self, "nominal_temperature", t)
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (v.shape[0],):
                raise ValueError("weights must have one entry per particle")
            if np.any(w <= 0):
                raise ValueError("particle weights must be > 0")
            object.__setattr__(self, "weights", w)

    @property
    def dimension(self) -> int:
        return self.velocities.shape[1]

    def __len__(self) -> int:
        return self.velocities.shape[0]

    @property
    def particle_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.ones(len(self), dtype=np.float64)
        return self.weights

    @property
    def total_weight(self) -> float:
        return float(self.particle_weights.sum())

    def subset(self, index) -> "ParticleSet":
        return ParticleSet(
            velocities=self.velocities[index],
            nominal_temperature=self.nominal_temperature,
            weights=None if self.weights is None else self.weights[index],
            species_label=self.species_label,
        )

    def save(self, path) -> None:
        arrays = {
            "velocities": self.velocities,
            "nominal_temperature": self.nominal_temperature,
            "species_label": np.array(self.species_label),
        }
        if self.weights is not None:
            arrays["weights"] = self.weights
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path) -> "ParticleSet":
        with np.load(path) as data:
            return cls(
                velocities=data["velocities"],
                nominal_temperature=data["nominal_temperature"],
                weights=data["weights"] if "weights" in data else None,
                species_label=str(data["species_label"]),
            )


@dataclass(frozen=True)
class MixtureComponent:
    fraction: float
    mean: tuple
    covariance: tuple  # d x d, nested tuples


@dataclass(frozen=True)
class ScenarioSpec:
    components: tuple
    particle_count: int
    seed: int
    dimension: int
    species_label: str = "electrons"
    # per-cycle mean shift applied by ``drifted``; only used by time-series runs
    drift: tuple = field(default=())

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ScenarioError(f"dimension must be 2 or 3, got {self.dimension}")
        if self.particle_count < 1:
            raise ScenarioError("particle_count must be >= 1")
        if not self.components:
            raise ScenarioError("scenario needs at least one component")
        fractions = np.array([c.fraction for c in self.components], dtype=np.float64)
        if np.any(fractions <= 0):
            raise ScenarioError("component fractions must be > 0")
        if abs(fractions.sum() - 1.0) > 1e-12:
            raise ScenarioError(f"fractions must sum to 1 (got {fractions.sum():.15g})")
        for i, c in enumerate(self.components):
            mean = np.asarray(c.mean, dtype=np.float64)
            cov = np.asarray(c.covariance, dtype=np.float64)
            if mean.shape != (self.dimension,) or cov.shape != (self.dimension,) * 2:
                raise ScenarioError(f"component {i}: shape does not match dimension {self.dimension}")
            if not np.array_equal(cov, cov.T):
                raise ScenarioError(f"component {i}: covariance is not symmetric")
            try:
                np.linalg.cholesky(cov)
            except np.linalg.LinAlgError:
                raise ScenarioError(f"component {i}: covariance is not positive definite") from None

    @property
    def fractions(self) -> np.ndarray:
        return np.array([c.fraction for c in self.components], dtype=np.float64)

    def mixture_mean(self) -> np.ndarray:
        means = np.array([c.mean for c in self.components], dtype=np.float64)
        return self.fractions @ means

    def mixture_covariance(self) -> np.ndarray:
        mu = self.mixture_mean()
        out = np.zeros((self.dimension, self.dimension))
        for f, c in zip(self.fractions, self.components):
            m = np.asarray(c.mean) - mu
            out += f * (np.asarray(c.covariance) + np.outer(m, m))
        return out

    def nominal_temperature(self) -> np.ndarray:
        """Fraction-weighted average of the component variances, per axis."""
        variances = np.array([np.diag(c.covariance) for c in self.components])
        return self.fractions @ variances

    def with_overrides(self, particle_count=None, seed=None) -> "ScenarioSpec":
        return ScenarioSpec(
            components=self.components,
            particle_count=self.particle_count if particle_count is None else int(particle_count),
            seed=self.seed if seed is None else int(seed),
            dimension=self.dimension,
            species_label=self.species_label,
            drift=self.drift,
        )

    def drifted(self, cycles: int) -> "ScenarioSpec":
        """Shift every component mean by ``cycles`` times the drift vector.

        Components listed in ``drift`` move; an empty drift leaves the scenario unchanged.
        """
        if not self.drift:
            return self
        shift = np.asarray(self.drift, dtype=np.float64) * cycles
        moved = tuple(
            MixtureComponent(c.fraction, tuple(np.asarray(c.mean) + shift), c.covariance)
            for c in self.components
        )
        return ScenarioSpec(moved, self.particle_count, self.seed, self.dimension,
                            self.species_label, self.drift)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "particle_count": self.particle_count,
            "seed": self.seed,
            "species_label": self.species_label,
            "drift": list(self.drift),
            "components": [
                {"fraction": c.fraction, "mean": list(c.mean),
                 "covariance": [list(row) for row in c.covariance]}
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        dim = int(d["dimension"])
        comps = []
        for i, c in enumerate(d["components"]):
            if "covariance" in c:
                cov = np.asarray(c["covariance"], dtype=np.float64)
            elif "variance" in c:
                cov = np.diag(np.asarray(c["variance"], dtype=np.float64))
            else:
                raise ScenarioError(f"component {i}: needs 'covariance' or 'variance'")
            comps.append(_component(c["fraction"], c["mean"], cov))
        return cls(
            components=tuple(comps),
            particle_count=int(d["particle_count"]),
            seed=int(d.get("seed", 0)),
            dimension=dim,
            species_label=d.get("species_label", "electrons"),
            drift=tuple(float(x) for x in d.get("drift", ())),
        )

    @classmethod
    def from_json(cls, path) -> "ScenarioSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _component(fraction, mean, cov) -> MixtureComponent:
    cov = np.asarray(cov, dtype=np.float64)
    return MixtureComponent(
        float(fraction),
        tuple(float(x) for x in mean),
        tuple(tuple(float(x) for x in row) for row in cov),
    )


def _preset_table() -> dict:
    text = resources.files("vdfgmm").joinpath("presets.json").read_text()
    return json.loads(text)


PRESET_NAMES = tuple(_preset_table())


def preset(name: str, particle_count: int, seed: int, dimension: int = 3) -> ScenarioSpec:
    """Build a ScenarioSpec from the frozen preset table (docs/PRESETS.md).

    Presets are tabulated in 3D; ``dimension=2`` keeps the (u, v) block.
    """
    table = _preset_table()
    if name not in table:
        raise ScenarioError(f"unknown preset {name!r}; valid presets: {', '.join(table)}")
    entry = table[name]
    comps = tuple(
        _component(c["fraction"], c["mean"][:dimension], np.diag(c["variance"][:dimension]))
        for c in entry["components"]
    )
    return ScenarioSpec(comps, int(particle_count), int(seed), dimension, entry["species_label"])


def generate(spec: ScenarioSpec) -> ParticleSet:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    counts = rng.multinomial(spec.particle_count, spec.fractions)
    blocks = []
    for count, comp in zip(counts, spec.components):
        chol = np.linalg.cholesky(np.asarray(comp.covariance))
        z = rng.standard_normal((count, spec.dimension))
        blocks.append(z @ chol.T + np.asarray(comp.mean))
    velocities = np.concatenate(blocks, axis=0)
    velocities = velocities[rng.permutation(spec.particle_count)]
    return ParticleSet(
        velocities=velocities,
        nominal_temperature=spec.nominal_temperature(),
        species_label=spec.species_label,
    )
