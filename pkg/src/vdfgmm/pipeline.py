"""End-to-end runs: bin -> fit -> encode -> score, benchmarks and warm-start series."""
from __future__ import annotations

import csv
import json
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import codec
from .histogram import (PLANES, Histogram2D, WeightedPoints, bin_particles, default_ranges,
                        refine_pdf, to_pdf, to_weighted_points)
from .metrics import (MetricsReport, bic, compression_ratio, jsd, jsd_model_vs_histogram,
                      jsd_model_vs_original, kl_divergence, model_pdf_grid, moment_errors)
from .synthdata import ParticleSet, ScenarioSpec, generate, preset
from .wgmm import FitConfig, FitResult, GmmModel, e_step, fit

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """Runtime failure tagged with the module it came from."""

    def __init__(self, module: str, message: str):
        super().__init__(f"[{module}] {message}")
        self.module = module


class InputNotFoundError(PipelineError):
    pass


@dataclass
class PipelineConfig:
    scenario: str | None = "maxwellian"
    scenario_file: str | None = None
    input_path: str | None = None
    particles: int = 10_000
    dimension: int = 3
    seed: int = 0
    bins: int = 200
    vrange: tuple | None = None
    planes: tuple = ("uv",)
    components: int = 12
    max_iterations: int = 100
    prune_threshold: float = 0.005
    prune_interval: int = 10
    tolerance: float = 1e-6
    out_dir: str = "out"
    formats: tuple = ("json", "csv")
    repeat: int = 5
    original_bins: int = 500
    subdomains: int = 1
    # time-series options
    cycles: int = 5
    da_interval: int = 1
    drift: tuple = ()
    warm_start: bool = True

    def fit_config(self, warm: GmmModel | None = None) -> FitConfig:
        return FitConfig(
            initial_components=self.components,
            max_em_iterations=self.max_iterations,
            prune_threshold=self.prune_threshold,
            prune_check_interval=self.prune_interval,
            loglik_rel_tolerance=self.tolerance,
            seed=self.seed,
            warm_start=warm,
        )

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]

    def updated(self, values: dict) -> "PipelineConfig":
        unknown = set(values) - set(self.field_names())
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged = {**asdict(self), **values}
        for key in ("planes", "formats", "drift", "vrange"):
            if merged[key] is not None:
                merged[key] = tuple(merged[key])
        return PipelineConfig(**merged)


def scenario_spec(config: PipelineConfig) -> ScenarioSpec:
    try:
        if config.scenario_file:
            if not Path(config.scenario_file).exists():
                raise InputNotFoundError("synthdata", f"input not found: {config.scenario_file}")
            spec = ScenarioSpec.from_json(config.scenario_file)
            spec = spec.with_overrides(seed=config.seed)
        else:
            spec = preset(config.scenario, config.particles, config.seed, config.dimension)
    except PipelineError:
        raise
    except (ValueError, KeyError) as exc:
        raise PipelineError("synthdata", str(exc)) from exc
    if config.drift:
        spec = ScenarioSpec(spec.components, spec.particle_count, spec.seed, spec.dimension,
                            spec.species_label, tuple(config.drift))
    return spec


def load_particles(config: PipelineConfig) -> ParticleSet:
    if config.input_path:
        path = Path(config.input_path)
        if not path.exists():
            raise InputNotFoundError("cli", f"input not found: {path}")
        return ParticleSet.load(path)
    return generate(scenario_spec(config))


def plane_list(config: PipelineConfig, particles: ParticleSet):
    planes = list(config.planes)
    if planes == ["all"]:
        if particles.dimension != 3:
            raise PipelineError("histogram", "--planes all needs a 3D particle set")
        planes = list(PLANES)
    return planes


def plane_ranges(config: PipelineConfig, particles: ParticleSet, plane: str):
    if config.vrange is not None:
        lo, hi = config.vrange
        return ((lo, hi), (lo, hi))
    return default_ranges(particles, plane)


def make_histogram(config, particles, plane) -> Histogram2D:
    try:
        return bin_particles(particles, plane, config.bins, plane_ranges(config, particles, plane))
    except ValueError as exc:
        raise PipelineError("histogram", str(exc)) from exc


def raw_plane_bytes(particles: ParticleSet, plane: str) -> bytes:
    axes = list(PLANES[plane])
    return np.ascontiguousarray(particles.velocities[:, axes], dtype="<f8").tobytes()


def compute_metrics(model: GmmModel, hist: Histogram2D, original: Histogram2D | None = None,
                    raw_bytes: int | None = None) -> MetricsReport:
    """All scores for one fitted plane, from the model and its histogram alone."""
    points = to_weighted_points(hist)
    _, loglik = e_step(model, points)
    hist_pdf = to_pdf(hist)
    model_pdf = model_pdf_grid(model, hist.axis_ranges, hist.n_bins)
    mean_err, second_err = moment_errors(model, points)
    gmm_bytes = codec.payload_size(model.n_components, model.dimension)
    hist_bytes = hist.n_bins * hist.n_bins * 8
    return MetricsReport(
        jsd=jsd(model_pdf, hist_pdf),
        kl_pq=kl_divergence(hist_pdf, model_pdf),
        kl_qp=kl_divergence(model_pdf, hist_pdf),
        bic=bic(loglik, model, points.total_weight),
        bic_bins=bic(loglik, model, len(points)),
        loglik=loglik,
        n_components=model.n_components,
        mean_error=mean_err,
        second_moment_error=second_err,
        compression_ratio_vs_histogram=compression_ratio(hist_bytes, gmm_bytes),
        compression_ratio_vs_raw=(compression_ratio(raw_bytes, gmm_bytes) if raw_bytes else float("nan")),
        jsd_vs_original=None if original is None else jsd_model_vs_original(model, original),
    )


@dataclass
class PlaneJob:
    stem: str
    plane: str
    particles: ParticleSet


def _fit_plane(config: PipelineConfig, job: PlaneJob, warm: GmmModel | None = None):
    hist = make_histogram(config, job.particles, job.plane)
    try:
        points = to_weighted_points(hist)
        result = fit(points, config.fit_config(warm), job.particles.nominal_temperature[list(PLANES[job.plane])])
    except ValueError as exc:
        raise PipelineError("wgmm", f"{job.stem}: {exc}") from exc
    return hist, result


def _write_json(path: Path, doc) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, rows: list) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def _fit_report(result: FitResult) -> dict:
    return {
        "iterations_used": result.iterations_used,
        "converged": result.converged,
        "loglik_trace": result.loglik_trace,
        "pruning_events": [asdict(e) for e in result.pruning_events],
        "repairs": result.repairs,
        "n_components": result.n_components,
    }


def run_pipeline(config: PipelineConfig) -> list:
    """Fit every requested plane (and subdomain); write artifacts; return summary rows."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    particles = load_particles(config)
    planes = plane_list(config, particles)
    species = particles.species_label or "species"

    parts = [particles]
    if config.subdomains > 1:
        # random split emulating independent subdomains
        rng = np.random.default_rng(config.seed)
        order = rng.permutation(len(particles))
        parts = [particles.subset(np.sort(idx)) for idx in np.array_split(order, config.subdomains)]

    jobs = []
    for k, part in enumerate(parts):
        for plane in planes:
            stem = f"{species}_{plane}" + (f"_sd{k}" if len(parts) > 1 else "")
            jobs.append(PlaneJob(stem, plane, part))

    with ThreadPoolExecutor(max_workers=min(len(jobs), 4)) as pool:
        fitted = list(pool.map(lambda j: _fit_plane(config, j), jobs))

    rows = []
    for job, (hist, result) in zip(jobs, fitted):
        meta = codec.ModelMeta(job.plane, hist.axis_ranges, species, 0)
        blob = codec.encode_model(result.model, meta)
        (out / f"{job.stem}.gmmc").write_bytes(blob)
        (out / f"{job.stem}.gmm.json").write_text(codec.model_to_json(result.model, meta))
        codec.write_histogram(hist, out / f"{job.stem}.h2d")
        model, _ = codec.decode_model(blob)
        original = bin_particles(job.particles, job.plane, config.original_bins, hist.axis_ranges)
        report = compute_metrics(model, hist, original, len(raw_plane_bytes(job.particles, job.plane)))
        report.extra = {"fit": _fit_report(result), "plane": job.plane, "stem": job.stem}
        if "json" in config.formats:
            (out / f"{job.stem}.metrics.json").write_text(report.to_json())
        row = {"stem": job.stem, **{k: v for k, v in report.to_dict().items() if k != "extra"},
               "iterations": result.iterations_used}
        rows.append(row)
    if "csv" in config.formats:
        _write_csv(out / "summary.csv", rows)
    return rows


# ---- benchmark -----------------------------------------------------------

BENCH_COLUMNS = ("codec", "input", "bytes_in", "bytes_out", "ratio", "jsd_vs_original",
                 "jsd_vs_histogram", "bic", "components", "iterations")
TIMING_COLUMNS = ("codec", "input", "compress_seconds", "write_seconds")


@dataclass
class BenchmarkRow:
    codec: str
    input: str
    bytes_in: int
    bytes_out: int
    ratio: float
    compress_seconds: float
    write_seconds: float
    jsd_vs_original: float
    jsd_vs_histogram: float | None = None
    bic: float | None = None
    components: int | None = None
    iterations: int | None = None

    def values(self, columns):
        d = asdict(self)
        return {c: ("" if d[c] is None else d[c]) for c in columns}


def _median_time(fn, repeat: int):
    times, result = [], None
    for _ in range(max(repeat, 1)):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return result, statistics.median(times)


def _timed_write(path: Path, data: bytes) -> float:
    t0 = time.perf_counter()
    path.write_bytes(data)
    return time.perf_counter() - t0


def run_benchmark(config: PipelineConfig) -> list:
    """Run the GMM path, the plain histogram and every registered baseline on one plane.

    Writes ``bench.csv`` (deterministic columns) and ``bench_timing.csv``.
    """
    baselines = sorted(codec.registered_baselines())
    if not baselines:
        raise PipelineError("codec", "no baseline codecs registered")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    particles = load_particles(config)
    plane = plane_list(config, particles)[0]
    ranges = plane_ranges(config, particles, plane)
    axes = list(PLANES[plane])

    raw = raw_plane_bytes(particles, plane)
    original = bin_particles(particles, plane, config.original_bins, ranges)
    hist, t_hist = _median_time(lambda: bin_particles(particles, plane, config.bins, ranges), config.repeat)
    hist_bytes, sidecar = codec.encode_histogram(hist)
    hist_vs_original = jsd(refine_pdf(hist, config.original_bins), to_pdf(original))
    rows = [BenchmarkRow("histogram", "raw", len(raw), len(hist_bytes),
                         compression_ratio(len(raw), len(hist_bytes)), t_hist,
                         _timed_write(out / "bench.h2d", hist_bytes), hist_vs_original, 0.0)]
    (out / "bench.h2d.json").write_text(json.dumps(sidecar, indent=2) + "\n")

    temperature = particles.nominal_temperature[axes]

    def gmm_compress():
        h = bin_particles(particles, plane, config.bins, ranges)
        res = fit(to_weighted_points(h), config.fit_config(), temperature)
        meta = codec.ModelMeta(plane, ranges, particles.species_label, 0)
        return res, codec.encode_model(res.model, meta)

    (result, blob), t_gmm = _median_time(gmm_compress, config.repeat)
    t_write = _timed_write(out / "bench.gmmc", blob)
    model, _ = codec.decode_model(blob)
    points = to_weighted_points(hist)
    _, loglik = e_step(model, points)
    gmm_payload = codec.payload_size(model.n_components, model.dimension)
    common = dict(jsd_vs_original=jsd_model_vs_original(model, original),
                  jsd_vs_histogram=jsd_model_vs_histogram(model, hist),
                  bic=bic(loglik, model, points.total_weight),
                  components=model.n_components, iterations=result.iterations_used)
    rows.append(BenchmarkRow("gmm", "raw", len(raw), gmm_payload,
                             compression_ratio(len(raw), gmm_payload), t_gmm, t_write, **common))
    rows.append(BenchmarkRow("gmm", "histogram", len(hist_bytes), gmm_payload,
                             compression_ratio(len(hist_bytes), gmm_payload), t_gmm, t_write, **common))

    for name in baselines:
        for label, data in (("raw", raw), ("histogram", hist_bytes)):
            (packed, _), t_c = _median_time(lambda: codec.run_baseline(name, data), config.repeat)
            t_w = _timed_write(out / f"bench_{name}_{label}.bin", packed)
            restored = codec.restore_baseline(name, packed)
            if label == "raw":
                v = np.frombuffer(restored, dtype="<f8").reshape(-1, 2)
                back = ParticleSet(v, particles.nominal_temperature[axes], particles.weights)
                rebinned = bin_particles(back, "uv", config.original_bins, ranges)
                j_orig, j_hist = jsd(to_pdf(rebinned), to_pdf(original)), None
            else:
                h2 = codec.decode_histogram(restored, sidecar)
                j_orig = jsd(refine_pdf(h2, config.original_bins), to_pdf(original))
                j_hist = jsd(to_pdf(h2), to_pdf(hist))
            rows.append(BenchmarkRow(name, label, len(data), len(packed),
                                     compression_ratio(len(data), len(packed)), t_c, t_w,
                                     j_orig, j_hist))

    _write_csv(out / "bench.csv", [r.values(BENCH_COLUMNS) for r in rows])
    _write_csv(out / "bench_timing.csv", [r.values(TIMING_COLUMNS) for r in rows])
    return rows


# ---- warm-start time series ------------------------------------------------


def run_timeseries(config: PipelineConfig) -> dict:
    """Fit a sequence of (optionally drifting) datasets, warm-starting each fit."""
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if config.input_path:
        raise PipelineError("cli", "timeseries needs a scenario, not a particle file")
    spec = scenario_spec(config)
    first = generate(spec)
    plane = plane_list(config, first)[0]
    ranges = plane_ranges(config, first, plane)
    axes = list(PLANES[plane])

    cycles, previous = [], None
    for c in range(config.cycles):
        particles = generate(spec.drifted(c * config.da_interval))
        hist = bin_particles(particles, plane, config.bins, ranges)
        warm = previous if config.warm_start else None
        try:
            result = fit(to_weighted_points(hist), config.fit_config(warm),
                         particles.nominal_temperature[axes])
        except ValueError as exc:
            raise PipelineError("wgmm", f"cycle {c}: {exc}") from exc
        previous = result.model
        cycles.append({
            "cycle": c * config.da_interval,
            "iterations": result.iterations_used,
            "converged": result.converged,
            "components": result.n_components,
            "loglik": result.loglik,
            "jsd_vs_histogram": jsd_model_vs_histogram(result.model, hist),
            "warm_start": warm is not None,
        })
    report = {"plane": plane, "warm_start": config.warm_start, "cycles": cycles}
    _write_json(out / "timeseries.json", report)
    _write_csv(out / "timeseries.csv", cycles)
    return report
