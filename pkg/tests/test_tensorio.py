"""Format tests: NPY subset, JSON sidecars, CSV tables, layer indexes."""

import hashlib
import json
import struct

import numpy as np
import pytest

from retinakit.analytics import KernelSet, analyze
from retinakit.bank import BankManifest, PolarityMode, SamplerConfig, sample_bank
from retinakit.dog import Polarity
from retinakit.kmeans import KMeansConfig
from retinakit.tensorio import (
    ArrayFormatError,
    LayerIndexError,
    ManifestError,
    ReportError,
    SchemaError,
    array_from_bytes,
    array_to_bytes,
    proportions_csv_bytes,
    read_array,
    read_layer_index,
    read_manifest,
    read_proportions_csv,
    read_report,
    sha256_of,
    write_array,
    write_layer_index,
    write_manifest,
    write_proportions_csv,
    write_report,
)


def _craft(descr="'<f4'", fortran="False", shape="(2, 2)", payload=b"\x00" * 16):
    """Hand-assemble an NPY file with arbitrary header fields."""
    header = "{'descr': %s, 'fortran_order': %s, 'shape': %s, }" % (descr, fortran, shape)
    pad = -(10 + len(header) + 1) % 64
    header = (header + " " * pad + "\n").encode("latin1")
    return b"\x93NUMPY" + bytes((1, 0)) + struct.pack("<H", len(header)) + header + payload


# ------------------------------------------------------------------ arrays


def test_array_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(1)
    arr = rng.normal(size=(4, 1, 3, 3)).astype(np.float32)
    path = tmp_path / "t.npy"
    write_array(path, arr)
    first = path.read_bytes()
    back = read_array(path)
    assert back.dtype == np.dtype("<f4")
    assert np.array_equal(back, arr)
    write_array(path, back)
    assert path.read_bytes() == first


def test_array_header_layout():
    blob = array_to_bytes(np.zeros((512, 1, 9, 9), dtype=np.float32))
    assert blob[:6] == b"\x93NUMPY"
    assert blob[6:8] == bytes((1, 0))
    (hlen,) = struct.unpack("<H", blob[8:10])
    assert (10 + hlen) % 64 == 0
    header = blob[10 : 10 + hlen].decode("latin1")
    assert header.endswith("\n")
    assert "'descr': '<f4'" in header
    assert "'fortran_order': False" in header
    assert "'shape': (512, 1, 9, 9)" in header


@pytest.mark.parametrize(
    "shape,dtype",
    [((4, 1, 3, 3), np.float32), ((200,), np.float64), ((512, 1, 9, 9), np.float32), ((7, 7), np.float64)],
)
def test_array_bytes_match_numpy_writer(tmp_path, shape, dtype):
    rng = np.random.default_rng(2)
    arr = rng.normal(size=shape).astype(dtype)
    path = tmp_path / "np.npy"
    np.save(path, arr)
    assert array_to_bytes(arr) == path.read_bytes()


def test_numpy_reads_our_files_and_vice_versa(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.normal(size=(6, 5, 5))
    ours = tmp_path / "ours.npy"
    theirs = tmp_path / "theirs.npy"
    write_array(ours, arr)
    np.save(theirs, arr)
    assert np.array_equal(np.load(ours), arr)
    assert np.array_equal(read_array(theirs), arr)


def test_nan_payload_write_through():
    bits = np.array([0x7FC00ABC, 0xFF800001, 0x3F800000], dtype=np.uint32)
    arr = bits.view(np.float32)
    back = array_from_bytes(array_to_bytes(arr))
    assert np.array_equal(back.view(np.uint32), bits)


def test_fortran_order_rejected(tmp_path):
    path = tmp_path / "f.npy"
    np.save(path, np.asfortranarray(np.zeros((3, 4), dtype=np.float32)))
    with pytest.raises(ArrayFormatError, match="unsupported"):
        read_array(path)


def test_write_rejects_unsupported_inputs():
    with pytest.raises(ArrayFormatError, match="unsupported-dtype"):
        array_to_bytes(np.zeros((2, 2), dtype=np.int64))
    with pytest.raises(ArrayFormatError, match="malformed-header"):
        array_to_bytes(np.zeros((2, 2, 2, 2, 2)))
    with pytest.raises(ArrayFormatError, match="malformed-header"):
        array_to_bytes(np.float64(3.0).reshape(()))
    with pytest.raises(ArrayFormatError, match="malformed-header"):
        array_to_bytes(np.zeros((0, 3)))


def test_read_rejects_bad_magic_and_version():
    good = _craft()
    with pytest.raises(ArrayFormatError, match="malformed-header"):
        array_from_bytes(b"\x93NUMPZ" + good[6:])
    with pytest.raises(ArrayFormatError, match="malformed-header"):
        array_from_bytes(good[:6] + bytes((2, 0)) + good[8:])
    with pytest.raises(ArrayFormatError, match="malformed-header"):
        array_from_bytes(good[:8])


def test_read_rejects_malformed_headers():
    cases = [
        _craft(descr="'<f4', 'x': 1"),  # extra key
        _craft(shape="(2, 2"),  # unparseable
        _craft(shape="[2, 2]"),  # not a tuple
        _craft(shape="(2, 2, 2, 2, 2)", payload=b"\x00" * 128),  # rank 5
        _craft(shape="(0, 2)", payload=b""),  # non-positive dim
        _craft(shape="(2.0, 2)"),  # non-integer dim
        _craft(fortran="0"),  # not a bool
    ]
    for blob in cases:
        with pytest.raises(ArrayFormatError, match="malformed-header"):
            array_from_bytes(blob)


def test_read_rejects_unsupported_dtypes():
    with pytest.raises(ArrayFormatError, match="unsupported-dtype"):
        array_from_bytes(_craft(descr="'<i8'", payload=b"\x00" * 32))
    with pytest.raises(ArrayFormatError, match="unsupported-dtype"):
        array_from_bytes(_craft(descr="'>f4'"))


def test_read_rejects_bad_data_lengths():
    with pytest.raises(ArrayFormatError, match="truncated-data"):
        array_from_bytes(_craft(payload=b"\x00" * 15))
    with pytest.raises(ArrayFormatError, match="truncated-data"):
        array_from_bytes(_craft(payload=b"\x00" * 17))


def test_read_rejects_shape_overflow():
    blob = _craft(shape="(1099511627776, 1099511627776)", payload=b"")
    with pytest.raises(ArrayFormatError, match="shape-overflow"):
        array_from_bytes(blob)


# ---------------------------------------------------------------- manifests


def test_manifest_round_trip_exact(tmp_path):
    bank = sample_bank(SamplerConfig(seed=2 ** 63 + 1, kernel_size=7), 40, layer_name="stem")
    path = tmp_path / "m.json"
    write_manifest(path, bank.manifest)
    back = read_manifest(path)
    assert back == bank.manifest  # dataclass equality: every gamma bit-exact
    assert back.seed == 2 ** 63 + 1
    assert back.layer_name == "stem"


def test_manifest_bytes_deterministic_and_sorted(tmp_path):
    bank = sample_bank(SamplerConfig(seed=5, kernel_size=5), 8)
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_manifest(a, bank.manifest)
    write_manifest(b, bank.manifest)
    raw = a.read_bytes()
    assert raw == b.read_bytes()
    obj = json.loads(raw)
    assert list(obj) == sorted(obj)
    assert isinstance(obj["seed"], str)


def test_manifest_missing_gammas_is_schema_mismatch(tmp_path):
    bank = sample_bank(SamplerConfig(seed=5, kernel_size=5), 8)
    path = tmp_path / "m.json"
    write_manifest(path, bank.manifest)
    obj = json.loads(path.read_text())
    del obj["gammas"]
    path.write_text(json.dumps(obj))
    with pytest.raises(ManifestError, match="schema-mismatch"):
        read_manifest(path)


@pytest.mark.parametrize(
    "mutate",
    [
        lambda o: o.update(schema_version=2),
        lambda o: o.update(seed=12345),  # number, not decimal string
        lambda o: o.update(seed="-3"),
        lambda o: o.update(polarities=["on", "sideways"]),
        lambda o: o.update(polarity_mode="diagonal"),
        lambda o: o.update(kernel_size="9"),
        lambda o: o.update(kernel_size=8),  # even: sampler validation
        lambda o: o.update(gamma_min=0.9),  # above gamma_max
        lambda o: o.update(gammas=o["gammas"][:-1]),  # length mismatch
        lambda o: o.update(layer_name=7),
    ],
)
def test_manifest_schema_mutations_rejected(tmp_path, mutate):
    bank = sample_bank(SamplerConfig(seed=5, kernel_size=5), 8)
    path = tmp_path / "m.json"
    write_manifest(path, bank.manifest)
    obj = json.loads(path.read_text())
    mutate(obj)
    path.write_text(json.dumps(obj))
    with pytest.raises(ManifestError, match="schema-mismatch"):
        read_manifest(path)


def test_manifest_parse_error(tmp_path):
    path = tmp_path / "m.json"
    path.write_bytes(b"{not json")
    with pytest.raises(ManifestError, match="parse-error"):
        read_manifest(path)


def test_manifest_rebuild_from_file_matches_bank(tmp_path):
    from retinakit.bank import build_kernels

    bank = sample_bank(SamplerConfig(seed=31, kernel_size=9), 25)
    path = tmp_path / "m.json"
    write_manifest(path, bank.manifest)
    rebuilt = build_kernels(read_manifest(path))
    assert np.array_equal(rebuilt, bank.kernels)


# ------------------------------------------------------------------ reports


def _small_report(seed=4):
    rng = np.random.default_rng(19)
    on = rng.normal(size=(10, 5, 5)) + np.eye(5) * 3
    off = -on
    noise = rng.normal(size=(10, 5, 5))
    return analyze(KernelSet(np.concatenate([on, off, noise]), source="toy"), KMeansConfig(seed=seed))


def test_report_round_trip(tmp_path):
    report = _small_report()
    path = tmp_path / "r.json"
    write_report(path, report)
    back = read_report(path)
    assert back.source == report.source
    assert back.kernel_size == report.kernel_size
    assert np.array_equal(back.assignments, report.assignments)
    assert np.array_equal(back.centroids, report.centroids)
    assert np.array_equal(back.cluster_averages, report.cluster_averages)
    assert back.labels == report.labels
    assert back.label_scores == report.label_scores
    assert back.proportions == report.proportions
    assert back.inertia == report.inertia


def test_report_bytes_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    write_report(a, _small_report())
    write_report(b, _small_report())
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize(
    "mutate",
    [
        lambda o: o.update(schema_version=9),
        lambda o: o.update(labels=["on", "on", "other"]),
        lambda o: o.pop("proportions"),
        lambda o: o.update(centroids=o["centroids"][:2]),
        lambda o: o.update(kernel_size=7),  # disagrees with arrays
    ],
)
def test_report_schema_mutations_rejected(tmp_path, mutate):
    path = tmp_path / "r.json"
    write_report(path, _small_report())
    obj = json.loads(path.read_text())
    mutate(obj)
    path.write_text(json.dumps(obj))
    with pytest.raises(ReportError, match="schema-mismatch|parse-error"):
        read_report(path)


# -------------------------------------------------------------------- CSV


def test_csv_exact_bytes():
    blob = proportions_csv_bytes([("m", 0.4, 0.35, 0.25)])
    assert blob == b"model_tag,on,off,other\nm,0.4,0.35,0.25\n"


def test_csv_round_trip_with_quoting(tmp_path):
    table = [("a,b", 0.5, 0.3, 0.2), ("plain", 1 / 3, 1 / 3, 1 / 3)]
    path = tmp_path / "p.csv"
    write_proportions_csv(path, table)
    assert read_proportions_csv(path) == table


def test_csv_rejects_foreign_header(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("tag,a,b,c\nx,1,2,3\n")
    with pytest.raises(SchemaError, match="schema-mismatch"):
        read_proportions_csv(path)


# ------------------------------------------------------------ layer indexes


def test_layer_index_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    names = ["stem.conv", "stage1.dw"]
    entries = []
    for name in names:
        arr = rng.normal(size=(4, 1, 3, 3)).astype(np.float32)
        fname = name.replace(".", "_") + ".npy"
        write_array(tmp_path / fname, arr)
        entries.append({"name": name, "file": fname, "shape": arr.shape})
    index = tmp_path / "index.json"
    write_layer_index(index, entries)
    back = read_layer_index(index)
    assert [e["name"] for e in back] == names
    for entry in back:
        assert entry["sha256"] == sha256_of(entry["path"])
        data = (tmp_path / entry["file"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]
        assert list(read_array(entry["path"]).shape) == entry["shape"]


def test_layer_index_schema_errors(tmp_path):
    path = tmp_path / "index.json"
    path.write_text(json.dumps({"schema_version": 2, "layers": []}))
    with pytest.raises(LayerIndexError, match="schema-mismatch"):
        read_layer_index(path)
    path.write_text(json.dumps({"schema_version": 1, "layers": [{"name": "x"}]}))
    with pytest.raises(LayerIndexError, match="schema-mismatch"):
        read_layer_index(path)
    path.write_text("[]")
    with pytest.raises(LayerIndexError, match="schema-mismatch"):
        read_layer_index(path)
