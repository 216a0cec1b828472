"""Byte-exact external formats: NPY tensors, JSON sidecars, CSV, indexes.

Array files use the NPY version 1.0 layout restricted to little-endian
float32/float64, C order, rank 1 through 4. The writer is hand-rolled so
the on-disk bytes are pinned by this module rather than by whichever
numpy version happens to be installed; the reader rejects everything
outside the subset with a typed error. JSON sidecars (bank manifests,
cluster reports, layer indexes) are written with sorted keys so equal
inputs give byte-identical files.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import io
import json
import os
import struct
import tempfile

import numpy as np

from .analytics import ClusterLabel, ClusterReport
from .bank import BankManifest, PolarityMode
from .dog import Polarity

MAGIC = b"\x93NUMPY"
_HEADER_ALIGN = 64
_DESCR_BY_DTYPE = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f8"}
_MAX_BYTES = 2 ** 63 - 1

REPORT_SCHEMA_VERSION = 1
INDEX_SCHEMA_VERSION = 1
CSV_HEADER = ("model_tag", "on", "off", "other")


class ArrayFormatError(ValueError):
    """Array file outside the supported subset; ``kind`` names the defect."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(f"{kind}: {message}")


class SchemaError(ValueError):
    """JSON sidecar problem; ``kind`` is parse-error or schema-mismatch."""

    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(f"{kind}: {message}")


class ManifestError(SchemaError):
    pass


class ReportError(SchemaError):
    pass


class LayerIndexError(SchemaError):
    pass


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write ``data`` to ``path`` via a temp file in the same directory."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ------------------------------------------------------------------ arrays


def array_to_bytes(array: np.ndarray) -> bytes:
    """Serialize an array to NPY v1.0 bytes (the supported subset only)."""
    arr = np.asarray(array)
    if arr.dtype not in _DESCR_BY_DTYPE:
        raise ArrayFormatError(
            "unsupported-dtype", f"only float32/float64 are written, got {arr.dtype}"
        )
    if not 1 <= arr.ndim <= 4:
        raise ArrayFormatError("malformed-header", f"rank must be 1..4, got {arr.ndim}")
    if arr.size == 0:
        raise ArrayFormatError("malformed-header", "empty arrays are not written")
    descr = _DESCR_BY_DTYPE[arr.dtype]
    header = "{'descr': %r, 'fortran_order': False, 'shape': %r, }" % (descr, arr.shape)
    base = len(MAGIC) + 2 + 2  # magic, version, header-length field
    padding = -(base + len(header) + 1) % _HEADER_ALIGN
    header = header + " " * padding + "\n"
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(bytes((1, 0)))
    out.write(struct.pack("<H", len(header)))
    out.write(header.encode("latin1"))
    out.write(np.ascontiguousarray(arr, dtype=descr).tobytes(order="C"))
    return out.getvalue()


def write_array(path: str | os.PathLike, array: np.ndarray) -> None:
    atomic_write_bytes(path, array_to_bytes(array))


def array_from_bytes(data: bytes) -> np.ndarray:
    """Parse NPY v1.0 bytes, rejecting anything outside the subset."""
    if len(data) < 10:
        raise ArrayFormatError("malformed-header", "file shorter than the fixed preamble")
    if data[:6] != MAGIC:
        raise ArrayFormatError("malformed-header", "bad magic bytes")
    if data[6:8] != bytes((1, 0)):
        raise ArrayFormatError(
            "malformed-header", f"only version 1.0 is supported, got {data[6]}.{data[7]}"
        )
    (header_len,) = struct.unpack("<H", data[8:10])
    if len(data) < 10 + header_len:
        raise ArrayFormatError("malformed-header", "declared header exceeds file size")
    header_text = data[10 : 10 + header_len].decode("latin1")
    if not header_text.endswith("\n"):
        raise ArrayFormatError("malformed-header", "header is not newline-terminated")
    try:
        header = ast.literal_eval(header_text)
    except (ValueError, SyntaxError) as exc:
        raise ArrayFormatError("malformed-header", f"unparseable header dict: {exc}") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise ArrayFormatError("malformed-header", "header must hold exactly descr/fortran_order/shape")
    descr = header["descr"]
    if descr not in ("<f4", "<f8"):
        raise ArrayFormatError("unsupported-dtype", f"descr {descr!r} not in ('<f4', '<f8')")
    if header["fortran_order"] is True:
        raise ArrayFormatError("unsupported-dtype", "fortran_order=True files are not supported")
    if header["fortran_order"] is not False:
        raise ArrayFormatError(
            "malformed-header", f"fortran_order must be a boolean, got {header['fortran_order']!r}"
        )
    shape = header["shape"]
    if (
        not isinstance(shape, tuple)
        or not 1 <= len(shape) <= 4
        or not all(isinstance(d, int) and not isinstance(d, bool) for d in shape)
        or any(d < 1 for d in shape)
    ):
        raise ArrayFormatError(
            "malformed-header", f"shape must be a rank-1..4 tuple of positive ints, got {shape!r}"
        )
    itemsize = 4 if descr == "<f4" else 8
    count = 1
    for dim in shape:
        count *= dim
    if count * itemsize > _MAX_BYTES:
        raise ArrayFormatError("shape-overflow", f"{shape} at {itemsize} bytes/item overflows")
    payload = data[10 + header_len :]
    expected = count * itemsize
    if len(payload) < expected:
        raise ArrayFormatError(
            "truncated-data", f"need {expected} data bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise ArrayFormatError(
            "truncated-data", f"{len(payload) - expected} trailing bytes after the data block"
        )
    return np.frombuffer(payload, dtype=descr).reshape(shape).copy()


def read_array(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as handle:
        return array_from_bytes(handle.read())


# ---------------------------------------------------------------- manifests


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _load_json(path: str | os.PathLike, error_cls: type[SchemaError]) -> dict:
    try:
        with open(path, "rb") as handle:
            raw = handle.read()
    except OSError as exc:
        raise error_cls("parse-error", f"cannot read {path}: {exc}") from None
    try:
        obj = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise error_cls("parse-error", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(obj, dict):
        raise error_cls("schema-mismatch", "top-level JSON value must be an object")
    return obj


def manifest_to_dict(manifest: BankManifest) -> dict:
    return {
        "schema_version": manifest.schema_version,
        "seed": str(manifest.seed),  # decimal string: u64 seeds exceed double precision
        "kernel_size": manifest.kernel_size,
        "gamma_min": manifest.gamma_min,
        "gamma_max": manifest.gamma_max,
        "polarity_mode": manifest.polarity_mode.value,
        "gammas": list(manifest.gammas),
        "polarities": [p.value for p in manifest.polarities],
        "layer_name": manifest.layer_name,
    }


def write_manifest(path: str | os.PathLike, manifest: BankManifest) -> None:
    atomic_write_bytes(path, _dump_json(manifest_to_dict(manifest)))


def _require(obj: dict, key: str, error_cls: type[SchemaError]):
    if key not in obj:
        raise error_cls("schema-mismatch", f"missing required key {key!r}")
    return obj[key]


def manifest_from_dict(obj: dict) -> BankManifest:
    version = _require(obj, "schema_version", ManifestError)
    if version != 1:
        raise ManifestError("schema-mismatch", f"unknown schema_version {version!r}")
    seed = _require(obj, "seed", ManifestError)
    if not isinstance(seed, str) or not seed.isdigit():
        raise ManifestError("schema-mismatch", f"seed must be a decimal string, got {seed!r}")
    gammas = _require(obj, "gammas", ManifestError)
    polarities = _require(obj, "polarities", ManifestError)
    mode = _require(obj, "polarity_mode", ManifestError)
    if not isinstance(gammas, list) or not all(isinstance(g, (int, float)) for g in gammas):
        raise ManifestError("schema-mismatch", "gammas must be a list of numbers")
    if not isinstance(polarities, list) or not all(p in ("on", "off") for p in polarities):
        raise ManifestError("schema-mismatch", "polarities must be a list of 'on'/'off'")
    layer_name = obj.get("layer_name")
    if layer_name is not None and not isinstance(layer_name, str):
        raise ManifestError("schema-mismatch", f"layer_name must be a string, got {layer_name!r}")
    kernel_size = _require(obj, "kernel_size", ManifestError)
    if not isinstance(kernel_size, int) or isinstance(kernel_size, bool):
        raise ManifestError("schema-mismatch", f"kernel_size must be an integer, got {kernel_size!r}")
    gamma_min = _require(obj, "gamma_min", ManifestError)
    gamma_max = _require(obj, "gamma_max", ManifestError)
    if not all(isinstance(g, (int, float)) for g in (gamma_min, gamma_max)):
        raise ManifestError("schema-mismatch", "gamma_min/gamma_max must be numbers")
    try:
        manifest = BankManifest(
            seed=int(seed),
            kernel_size=kernel_size,
            gamma_min=float(gamma_min),
            gamma_max=float(gamma_max),
            polarity_mode=PolarityMode(mode),
            gammas=tuple(float(g) for g in gammas),
            polarities=tuple(Polarity(p) for p in polarities),
            layer_name=layer_name,
        )
        manifest.config  # runs the full sampler-parameter validation
    except ValueError as exc:
        raise ManifestError("schema-mismatch", str(exc)) from None
    return manifest


def read_manifest(path: str | os.PathLike) -> BankManifest:
    return manifest_from_dict(_load_json(path, ManifestError))


# ------------------------------------------------------------------ reports


def report_to_dict(report: ClusterReport) -> dict:
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "source": report.source,
        "kernel_size": report.kernel_size,
        "assignments": [int(a) for a in report.assignments],
        "centroids": report.centroids.tolist(),
        "cluster_averages": report.cluster_averages.tolist(),
        "labels": [label.value for label in report.labels],
        "label_scores": list(report.label_scores),
        "proportions": list(report.proportions),
        "inertia": report.inertia,
    }


def write_report(path: str | os.PathLike, report: ClusterReport) -> None:
    atomic_write_bytes(path, _dump_json(report_to_dict(report)))


def report_from_dict(obj: dict) -> ClusterReport:
    version = _require(obj, "schema_version", ReportError)
    if version != REPORT_SCHEMA_VERSION:
        raise ReportError("schema-mismatch", f"unknown schema_version {version!r}")
    labels = _require(obj, "labels", ReportError)
    if not isinstance(labels, list) or sorted(labels) != ["off", "on", "other"]:
        raise ReportError("schema-mismatch", f"labels must be one each of on/off/other, got {labels!r}")
    try:
        report = ClusterReport(
            source=_require(obj, "source", ReportError),
            kernel_size=int(_require(obj, "kernel_size", ReportError)),
            assignments=np.asarray(_require(obj, "assignments", ReportError), dtype=np.int64),
            centroids=np.asarray(_require(obj, "centroids", ReportError), dtype=float),
            cluster_averages=np.asarray(_require(obj, "cluster_averages", ReportError), dtype=float),
            labels=tuple(ClusterLabel(label) for label in labels),
            label_scores=tuple(float(s) for s in _require(obj, "label_scores", ReportError)),
            proportions=tuple(float(p) for p in _require(obj, "proportions", ReportError)),
            inertia=float(_require(obj, "inertia", ReportError)),
        )
    except (TypeError, ValueError) as exc:
        raise ReportError("schema-mismatch", str(exc)) from None
    size = report.kernel_size
    if (
        report.assignments.ndim != 1
        or report.centroids.shape != (3, size * size)
        or report.cluster_averages.shape != (3, size, size)
        or len(report.label_scores) != 3
        or len(report.proportions) != 3
    ):
        raise ReportError("schema-mismatch", "report arrays disagree with kernel_size/k=3")
    return report


def read_report(path: str | os.PathLike) -> ClusterReport:
    return report_from_dict(_load_json(path, ReportError))


# -------------------------------------------------------------------- CSV


def proportions_csv_bytes(table: list[tuple[str, float, float, float]]) -> bytes:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for tag, on, off, other in table:
        writer.writerow([tag, repr(float(on)), repr(float(off)), repr(float(other))])
    return out.getvalue().encode("utf-8")


def write_proportions_csv(path: str | os.PathLike, table) -> None:
    atomic_write_bytes(path, proportions_csv_bytes(table))


def read_proportions_csv(path: str | os.PathLike) -> list[tuple[str, float, float, float]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            rows = list(csv.reader(handle))
    except (OSError, UnicodeDecodeError) as exc:
        raise SchemaError("parse-error", f"cannot read {path}: {exc}") from None
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise SchemaError("schema-mismatch", f"expected header {','.join(CSV_HEADER)}")
    table = []
    for row in rows[1:]:
        if len(row) != 4:
            raise SchemaError("schema-mismatch", f"expected 4 columns, got {row!r}")
        try:
            table.append((row[0], float(row[1]), float(row[2]), float(row[3])))
        except ValueError:
            raise SchemaError("schema-mismatch", f"non-numeric proportion in {row!r}") from None
    return table


# ------------------------------------------------------------ layer indexes


def sha256_of(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_layer_index(path: str | os.PathLike, entries: list[dict]) -> None:
    """Entries carry name/file/shape (and sha256, computed here if absent).

    ``file`` values are stored as given; relative paths are interpreted
    relative to the index file's directory on read.
    """
    base = os.path.dirname(os.fspath(path)) or "."
    layers = []
    for entry in entries:
        record = {
            "name": entry["name"],
            "file": entry["file"],
            "shape": [int(d) for d in entry["shape"]],
        }
        record["sha256"] = entry.get("sha256") or sha256_of(os.path.join(base, entry["file"]))
        layers.append(record)
    atomic_write_bytes(path, _dump_json({"schema_version": INDEX_SCHEMA_VERSION, "layers": layers}))


def read_layer_index(path: str | os.PathLike) -> list[dict]:
    obj = _load_json(path, LayerIndexError)
    version = _require(obj, "schema_version", LayerIndexError)
    if version != INDEX_SCHEMA_VERSION:
        raise LayerIndexError("schema-mismatch", f"unknown schema_version {version!r}")
    layers = _require(obj, "layers", LayerIndexError)
    if not isinstance(layers, list):
        raise LayerIndexError("schema-mismatch", "layers must be a list")
    base = os.path.dirname(os.fspath(path)) or "."
    out = []
    for entry in layers:
        if not isinstance(entry, dict):
            raise LayerIndexError("schema-mismatch", f"layer entry must be an object, got {entry!r}")
        for key in ("name", "file", "shape", "sha256"):
            _require(entry, key, LayerIndexError)
        record = dict(entry)
        record["path"] = os.path.join(base, entry["file"])
        out.append(record)
    return out
