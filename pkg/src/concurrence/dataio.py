"""Bit-exact persistence: dataset files, model files, and reports.

Dataset files are a fixed little-endian binary layout (magic ``CCD1``,
format version, shape header, float32 payload) with a human-readable JSON
manifest alongside. Model files (``CCM1``) carry a length-prefixed JSON
header naming every parameter, a float32 payload in table order, and a
trailing CRC32. Values are stored in 32 bits and computed in 64; reload
error is bounded by that quantization.

All failures raise :class:`DataFileError` with a stable ``code`` so callers
can map them to exit statuses.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
import zlib
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .network import ConcurrenceModel, EncoderConfig, build_model
from .signals import Dataset, SignalPair

__all__ = [
    "DataFileError",
    "write_dataset",
    "read_dataset",
    "write_model",
    "read_model",
    "write_report",
    "payload_sha256",
]

DATASET_MAGIC = b"CCD1"
MODEL_MAGIC = b"CCM1"
DATASET_VERSION = 1
MODEL_VERSION = 1
DEFAULT_ALLOC_CAP = 4 << 30  # bytes of payload a reader will trust a header for


class DataFileError(Exception):
    """File-format failure with a machine-readable ``code``."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _manifest_path(path: Path) -> Path:
    return path.with_name(path.name + ".manifest.json")


def payload_sha256(path) -> str:
    """Hex digest of a file's payload (everything after the header)."""
    data = Path(path).read_bytes()
    if data[:4] == DATASET_MAGIC:
        return hashlib.sha256(data[22:]).hexdigest()
    return hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# Dataset files
# ---------------------------------------------------------------------------

def write_dataset(dataset: Dataset, path) -> None:
    """Write the binary dataset file plus its JSON manifest."""
    path = Path(path)
    n, t = len(dataset), dataset.length
    kx, ky = dataset.kx, dataset.ky
    header = DATASET_MAGIC + struct.pack("<HIIII", DATASET_VERSION, n, t, kx, ky)
    chunks = [header]
    for pair in dataset.pairs:
        chunks.append(pair.x.astype("<f4").tobytes(order="C"))
        chunks.append(pair.y.astype("<f4").tobytes(order="C"))
    payload = b"".join(chunks[1:])
    path.write_bytes(header + payload)

    manifest = {
        "generator": dataset.manifest.get("generator", "unknown"),
        "config": dataset.manifest.get("config", {}),
        "seed": dataset.manifest.get("seed"),
        "n": n,
        "t": t,
        "kx": kx,
        "ky": ky,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    _manifest_path(path).write_text(_canonical_json(manifest) + "\n")


def read_dataset(path, alloc_cap: int = DEFAULT_ALLOC_CAP) -> Dataset:
    """Read a dataset file, validating header, length, and manifest."""
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 22 or data[:4] != DATASET_MAGIC:
        raise DataFileError("bad_magic", f"{path} is not a concurrence dataset")
    version, n, t, kx, ky = struct.unpack("<HIIII", data[4:22])
    if version > DATASET_VERSION:
        raise DataFileError("unsupported_version", f"dataset version {version} unsupported")
    expected = n * (kx + ky) * t * 4
    if expected > alloc_cap:
        raise DataFileError("allocation_cap",
                            f"header implies {expected} payload bytes, cap is {alloc_cap}")
    if len(data) != 22 + expected:
        raise DataFileError("truncated_payload",
                            f"expected {22 + expected} bytes, file has {len(data)}")

    manifest = {}
    mpath = _manifest_path(path)
    if mpath.exists():
        manifest = json.loads(mpath.read_text())
        for key, val in (("n", n), ("t", t), ("kx", kx), ("ky", ky)):
            if key in manifest and manifest[key] != val:
                raise DataFileError(
                    "manifest_mismatch",
                    f"manifest {key}={manifest[key]} does not match header {val}")

    raw = np.frombuffer(data, dtype="<f4", offset=22)
    per_pair = (kx + ky) * t
    pairs = []
    for i in range(n):
        block = raw[i * per_pair:(i + 1) * per_pair]
        x = block[:kx * t].reshape(kx, t).astype(np.float64)
        y = block[kx * t:].reshape(ky, t).astype(np.float64)
        pairs.append(SignalPair(x, y))
    return Dataset(pairs, manifest)


# ---------------------------------------------------------------------------
# Model files
# ---------------------------------------------------------------------------

def write_model(model: ConcurrenceModel, path, train_pair_indices=None) -> None:
    """Serialize parameters, running statistics, and the architecture."""
    path = Path(path)
    entries = []
    blobs = []
    offset = 0
    for name, arr in model.named_arrays():
        blob = arr.astype("<f4").tobytes(order="C")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    payload = b"".join(blobs)
    header = {
        "version": MODEL_VERSION,
        "config": {
            "num_blocks": model.config.num_blocks,
            "first_channels": model.config.first_channels,
            "first_kernel": model.config.first_kernel,
            "kernel": model.config.kernel,
            "first_stride": model.config.first_stride,
            "stride": model.config.stride,
            "dropout_rate": model.config.dropout_rate,
            "learning_rate": model.config.learning_rate,
            "num_iterations": model.config.num_iterations,
        },
        "kx": model.kx,
        "ky": model.ky,
        "w": model.w,
        "w_prime": model.w_prime,
        "params": entries,
        "train_pair_indices": (None if train_pair_indices is None
                               else [int(i) for i in train_pair_indices]),
    }
    header_bytes = _canonical_json(header).encode()
    path.write_bytes(
        MODEL_MAGIC
        + struct.pack("<I", len(header_bytes))
        + header_bytes
        + payload
        + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF)
    )


def read_model(path, alloc_cap: int = DEFAULT_ALLOC_CAP):
    """Reload a model; returns (model, header dict).

    The rebuilt model normalizes with the stored running statistics and
    reproduces eval-mode scores up to float32 storage error.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < 8 or data[:4] != MODEL_MAGIC:
        raise DataFileError("bad_magic", f"{path} is not a concurrence model")
    hlen = struct.unpack("<I", data[4:8])[0]
    if hlen > alloc_cap or len(data) < 8 + hlen + 4:
        raise DataFileError("truncated_payload", "model header exceeds file size")
    header = json.loads(data[8:8 + hlen].decode())
    if header.get("version", 0) > MODEL_VERSION:
        raise DataFileError("unsupported_version",
                            f"model version {header.get('version')} unsupported")
    payload = data[8 + hlen:-4]
    checksum = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(payload) & 0xFFFFFFFF != checksum:
        raise DataFileError("checksum_mismatch", "model payload checksum failed")

    config = EncoderConfig(**header["config"])
    model = build_model(config, header["kx"], header["ky"], header["w"],
                        np.random.default_rng(0))
    arrays = dict(model.named_arrays())
    if sorted(arrays) != sorted(e["name"] for e in header["params"]):
        raise DataFileError("shape_mismatch", "parameter table does not match architecture")
    for entry in header["params"]:
        arr = arrays[entry["name"]]
        if list(arr.shape) != entry["shape"]:
            raise DataFileError(
                "shape_mismatch",
                f"parameter {entry['name']} has shape {entry['shape']}, "
                f"architecture needs {list(arr.shape)}")
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        start = entry["offset"]
        if start + 4 * count > len(payload):
            raise DataFileError("truncated_payload",
                                f"parameter {entry['name']} exceeds payload")
        vals = np.frombuffer(payload, dtype="<f4", count=count, offset=start)
        arr[:] = vals.reshape(entry["shape"]).astype(np.float64)
    return model, header


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def _round_floats(obj, flags: dict):
    """Clamp floats to 9 significant digits; NaN becomes null (flagged)."""
    if isinstance(obj, float):
        if math.isnan(obj):
            flags["nan_present"] = True
            return None
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        return float(f"{obj:.9g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, flags) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, flags) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _round_floats(float(obj), flags)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round_floats(obj.tolist(), flags)
    return obj


def _canonical_json(obj) -> str:
    flags: dict = {}
    cleaned = _round_floats(obj, flags)
    if flags.get("nan_present") and isinstance(cleaned, dict):
        cleaned["nan_present"] = True
    return json.dumps(cleaned, sort_keys=True, indent=2)


def _format_cell(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "NaN"
        return f"{v:.9g}"
    return str(value)


def write_report(results, path, fmt: str = "json") -> None:
    """Write results deterministically as JSON (dict/list) or CSV (row list).

    JSON output has sorted keys and 9-significant-digit floats; NaN is
    serialized as null with a top-level ``nan_present`` flag. CSV rows get a
    ``warning`` column carrying "NaN" when any cell was NaN.
    """
    path = Path(path)
    if results is None or (hasattr(results, "__len__") and len(results) == 0):
        raise ValueError("refusing to write an empty report")
    if fmt == "json":
        path.write_text(_canonical_json(results) + "\n")
        return
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    if not isinstance(results, (list, tuple)) or not all(isinstance(r, dict) for r in results):
        raise ValueError("csv reports need a list of row dicts")
    columns = sorted({k for row in results for k in row})
    lines = [",".join(columns + ["warning"])]
    for row in results:
        cells = [_format_cell(row.get(c)) for c in columns]
        warning = "NaN" if any(c == "NaN" for c in cells) else ""
        lines.append(",".join(cells + [warning]))
    path.write_text("\n".join(lines) + "\n")
