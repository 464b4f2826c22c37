"""Binary/JSON model codec, histogram dumps, and baseline compressor registry.

Byte layouts are documented in docs/FORMATS.md.
"""
from __future__ import annotations

import bz2
import json
import struct
import time
import zlib
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable

import numpy as np

from .histogram import Histogram2D
from .wgmm import GmmModel, denormalize_model

MAGIC = b"GMMC"
VERSION = 1
PLANE_IDS = {"uv": 0, "vw": 1, "uw": 2, None: 255}
PLANE_NAMES = {v: k for k, v in PLANE_IDS.items()}

# magic, version, d, M, plane, reserved, cycle, species length
_FIXED = struct.Struct("<4sBBHBBqH")
_CRC = struct.Struct("<I")


class CodecError(ValueError):
    pass


class BadMagicError(CodecError):
    pass


class UnsupportedVersionError(CodecError):
    pass


class TruncatedPayloadError(CodecError):
    pass


class HeaderChecksumError(CodecError):
    pass


class NonSPDCovarianceError(CodecError):
    pass


class SizeMismatchError(CodecError):
    pass


@dataclass(frozen=True)
class ModelMeta:
    plane: str | None = None
    axis_ranges: tuple = ()
    species_label: str = ""
    cycle: int = 0


def values_per_component(d: int) -> int:
    return 1 + d + d * (d + 1) // 2


def payload_size(n_components: int, d: int) -> int:
    return n_components * values_per_component(d) * 8


def _flatten(model: GmmModel) -> np.ndarray:
    d = model.dimension
    iu = np.triu_indices(d)
    rows = [np.concatenate(([a], mu, cov[iu]))
            for a, mu, cov in zip(model.weights, model.means, model.covariances)]
    return np.concatenate(rows)


def _unflatten(values: np.ndarray, m: int, d: int) -> GmmModel:
    per = values.reshape(m, values_per_component(d))
    weights = per[:, 0]
    means = per[:, 1:1 + d]
    iu = np.triu_indices(d)
    covs = np.zeros((m, d, d))
    for i in range(m):
        covs[i][iu] = per[i, 1 + d:]
    # GmmModel mirrors the upper triangle
    return GmmModel(weights.copy(), means.copy(), covs)


def _data_space(model: GmmModel) -> GmmModel:
    return model if model.normalization.is_identity else denormalize_model(model)


def encode_model(model: GmmModel, meta: ModelMeta = ModelMeta()) -> bytes:
    model = _data_space(model)
    d, m = model.dimension, model.n_components
    ranges = np.zeros((d, 2))
    if meta.axis_ranges:
        r = np.asarray(meta.axis_ranges, dtype=np.float64)
        ranges[: r.shape[0]] = r
    species = meta.species_label.encode("utf-8")
    header = _FIXED.pack(MAGIC, VERSION, d, m, PLANE_IDS[meta.plane], len(meta.axis_ranges),
                         int(meta.cycle), len(species))
    header += ranges.astype("<f8").tobytes() + species
    header += _CRC.pack(zlib.crc32(header))
    return header + _flatten(model).astype("<f8").tobytes()


def decode_model(buf: bytes):
    """Returns ``(model, meta)``."""
    buf = bytes(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError("not a GMMC buffer (bad magic)")
    if len(buf) < _FIXED.size:
        raise TruncatedPayloadError("truncated header")
    magic, version, d, m, plane, n_ranges, cycle, n_species = _FIXED.unpack_from(buf)
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version} (reader supports {VERSION})")
    if plane not in PLANE_NAMES:
        raise CodecError(f"unknown plane id {plane}")
    pos = _FIXED.size
    head_end = pos + d * 16 + n_species
    if len(buf) < head_end + _CRC.size:
        raise TruncatedPayloadError("truncated header")
    ranges = np.frombuffer(buf, dtype="<f8", count=2 * d, offset=pos).reshape(d, 2)
    species = buf[pos + d * 16: head_end].decode("utf-8")
    (crc,) = _CRC.unpack_from(buf, head_end)
    if crc != zlib.crc32(buf[:head_end]):
        raise HeaderChecksumError("header CRC mismatch")
    start = head_end + _CRC.size
    expected = payload_size(m, d)
    got = len(buf) - start
    if got < expected:
        raise TruncatedPayloadError(f"truncated payload: expected {expected} bytes, got {got}")
    if got > expected:
        raise SizeMismatchError(f"payload has {got - expected} trailing bytes")
    values = np.frombuffer(buf, dtype="<f8", count=expected // 8, offset=start).astype(np.float64)
    model = _unflatten(values, m, d)
    for i, cov in enumerate(model.covariances):
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise NonSPDCovarianceError(f"component {i}: covariance is not positive definite") from None
    meta = ModelMeta(
        plane=PLANE_NAMES[plane],
        axis_ranges=tuple(tuple(float(x) for x in row) for row in ranges[:n_ranges]),
        species_label=species,
        cycle=int(cycle),
    )
    return model, meta


def model_to_json(model: GmmModel, meta: ModelMeta = ModelMeta()) -> str:
    model = _data_space(model)
    doc = {
        "format": "gmm.json",
        "version": VERSION,
        "dimension": model.dimension,
        "plane": meta.plane,
        "axis_ranges": [list(r) for r in meta.axis_ranges],
        "species_label": meta.species_label,
        "cycle": meta.cycle,
        "components": [
            {"weight": float(c.weight), "mean": c.mean.tolist(), "covariance": c.covariance.tolist()}
            for c in model.components
        ],
    }
    # json writes floats with repr(), the shortest round-trip decimal
    return json.dumps(doc, indent=2) + "\n"


def model_from_json(text: str):
    doc = json.loads(text)
    comps = doc["components"]
    model = GmmModel([c["weight"] for c in comps], [c["mean"] for c in comps],
                     [c["covariance"] for c in comps])
    meta = ModelMeta(doc.get("plane"), tuple(tuple(r) for r in doc.get("axis_ranges", [])),
                     doc.get("species_label", ""), int(doc.get("cycle", 0)))
    return model, meta


def encode_histogram(hist: Histogram2D):
    """Returns ``(payload, sidecar)``: row-major little-endian doubles and metadata."""
    payload = np.ascontiguousarray(hist.counts, dtype="<f8").tobytes()
    sidecar = {
        "format": "h2d",
        "version": VERSION,
        "dtype": "<f8",
        "order": "row-major",
        "plane": hist.plane,
        "n_bins": hist.n_bins,
        "axis_ranges": [list(r) for r in hist.axis_ranges],
        "out_of_range_count": hist.out_of_range_count,
        "byte_length": len(payload),
    }
    return payload, sidecar


def decode_histogram(payload: bytes, sidecar: dict) -> Histogram2D:
    n = int(sidecar["n_bins"])
    expected = n * n * 8
    if int(sidecar.get("byte_length", expected)) != expected or len(payload) != expected:
        raise SizeMismatchError(f"histogram payload is {len(payload)} bytes, header implies {expected}")
    counts = np.frombuffer(payload, dtype="<f8").reshape(n, n).astype(np.float64)
    return Histogram2D(counts, tuple(tuple(r) for r in sidecar["axis_ranges"]),
                       sidecar["plane"], float(sidecar["out_of_range_count"]))


def write_histogram(hist: Histogram2D, path) -> None:
    path = str(path)
    payload, sidecar = encode_histogram(hist)
    with open(path, "wb") as fh:
        fh.write(payload)
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)
        fh.write("\n")


def read_histogram(path) -> Histogram2D:
    path = str(path)
    with open(path, "rb") as fh:
        payload = fh.read()
    with open(path + ".json") as fh:
        sidecar = json.load(fh)
    return decode_histogram(payload, sidecar)


# ---- baseline compressors ------------------------------------------------


@dataclass(frozen=True)
class BaselineCodec:
    name: str
    lossy: bool
    compress: Callable[[bytes, dict], bytes]
    decompress: Callable[[bytes, dict], bytes]
    params: dict = field(default_factory=dict)


_REGISTRY: dict = {}


def register_baseline(codec: BaselineCodec) -> None:
    if codec.name in _REGISTRY:
        raise ValueError(f"baseline {codec.name!r} is already registered")
    _REGISTRY[codec.name] = codec


def registered_baselines():
    return MappingProxyType(_REGISTRY)


def _lookup(name: str) -> BaselineCodec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown codec {name!r}; registered: {', '.join(sorted(_REGISTRY))}") from None


def run_baseline(name: str, data: bytes, params: dict | None = None):
    """Compress ``data``; returns ``(compressed, seconds)``."""
    codec = _lookup(name)
    merged = {**codec.params, **(params or {})}
    t0 = time.perf_counter()
    out = codec.compress(bytes(data), merged)
    return out, time.perf_counter() - t0


def restore_baseline(name: str, data: bytes, params: dict | None = None) -> bytes:
    codec = _lookup(name)
    return codec.decompress(data, {**codec.params, **(params or {})})


register_baseline(BaselineCodec("raw", False, lambda b, p: bytes(b), lambda b, p: bytes(b)))
register_baseline(BaselineCodec(
    "zlib", False,
    lambda b, p: zlib.compress(b, int(p["level"])),
    lambda b, p: zlib.decompress(b),
    {"level": 9},
))
# compresslevel is bzip2's blockSize100k
register_baseline(BaselineCodec(
    "bzip2", False,
    lambda b, p: bz2.compress(b, int(p["compresslevel"])),
    lambda b, p: bz2.decompress(b),
    {"compresslevel": 5},
))
