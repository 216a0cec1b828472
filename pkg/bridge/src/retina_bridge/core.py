"""Extract depthwise convolution weights from checkpoints and inject banks.

The exchange formats are the toolkit's: one NPY file per layer in f32
with shape [C,1,K,K], plus an index JSON ``{"schema_version": 1,
"layers": [{"name", "file", "shape", "sha256"}]}``. This module talks
to the toolkit only through those files; it never imports it.

A parameter qualifies as depthwise iff its weight tensor is 4-D with
second dimension 1, a shape test, so bare state snapshots work without
any model code. f32 is the only exchange dtype: other float checkpoints
are down-converted with a warning on extract, and inject demands f32 on
both sides.
"""

from __future__ import annotations

import fnmatch
import hashlib
import io
import json
import os
import re
import tempfile
import warnings
from dataclasses import dataclass

import numpy as np
import torch

INDEX_SCHEMA_VERSION = 1


class BridgeError(Exception):
    """Base for all bridge failures."""


class NoMatchingLayersError(BridgeError):
    """The selector matched no qualifying depthwise parameters."""


class AmbiguousPatternError(BridgeError):
    """Two matched parameter names collide after filename sanitization."""


class ShapeMismatchError(BridgeError):
    """A bank tensor does not fit its target layer; names the layer."""


class DtypeMismatchError(BridgeError):
    """Bank or target dtype is not the f32 exchange dtype."""


@dataclass(frozen=True)
class LayerSelector:
    """Which parameters to pull: a name pattern plus an optional size gate."""

    name_pattern: str
    expected_kernel_size: int | None = None
    use_regex: bool = False

    def __post_init__(self) -> None:
        if not isinstance(self.name_pattern, str) or not self.name_pattern:
            raise ValueError("name_pattern must be a non-empty string")
        k = self.expected_kernel_size
        if k is not None and (not isinstance(k, int) or isinstance(k, bool) or k < 3 or k % 2 == 0):
            raise ValueError(f"expected_kernel_size must be an odd integer >= 3, got {k!r}")
        if self.use_regex:
            try:
                re.compile(self.name_pattern)
            except re.error as exc:
                raise ValueError(f"invalid regex {self.name_pattern!r}: {exc}") from None

    def matches(self, name: str) -> bool:
        if self.use_regex:
            return re.search(self.name_pattern, name) is not None
        return fnmatch.fnmatchcase(name, self.name_pattern)


def _atomic_write_bytes(path: str | os.PathLike, blob: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256_of(path: str | os.PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def _locate_state(obj) -> dict:
    """Find the parameter mapping inside a loaded checkpoint object.

    Accepts a bare state dict or the common single-level wrappers
    ``{"state_dict": ...}`` / ``{"model": ...}``. Returns the inner
    mapping (a live reference, so callers can mutate it in place).
    """
    if isinstance(obj, dict):
        for key in ("state_dict", "model"):
            inner = obj.get(key)
            if isinstance(inner, dict) and any(torch.is_tensor(v) for v in inner.values()):
                return inner
        if any(torch.is_tensor(v) for v in obj.values()):
            return obj
    raise BridgeError("checkpoint does not contain a tensor state dict")


def _load_checkpoint(path: str | os.PathLike):
    try:
        return torch.load(os.fspath(path), map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise BridgeError(f"cannot load checkpoint {os.fspath(path)!r}: {exc}") from None


def _is_depthwise(tensor: torch.Tensor) -> bool:
    return tensor.ndim == 4 and tensor.shape[1] == 1


def extract(
    checkpoint_path: str | os.PathLike,
    selector: LayerSelector,
    out_dir: str | os.PathLike,
) -> str:
    """Write one NPY per matching depthwise layer plus index.json.

    Returns the path of the written index. Matched parameters that are
    not depthwise (second dimension != 1) or not floating point are
    skipped; if nothing qualifies the pattern raises NoMatchingLayersError.
    """
    state = _locate_state(_load_checkpoint(checkpoint_path))
    selected = []
    for name, value in state.items():
        if not torch.is_tensor(value) or not selector.matches(name):
            continue
        if not _is_depthwise(value) or not value.is_floating_point():
            continue
        if selector.expected_kernel_size is not None:
            k = selector.expected_kernel_size
            if value.shape[-2] != k or value.shape[-1] != k:
                continue
        selected.append((name, value))
    if not selected:
        raise NoMatchingLayersError(
            f"pattern {selector.name_pattern!r} matches no depthwise parameters"
            + (
                f" of kernel size {selector.expected_kernel_size}"
                if selector.expected_kernel_size is not None
                else ""
            )
        )

    stems = [_sanitize(name) for name, _ in selected]
    seen: dict[str, str] = {}
    for (name, _), stem in zip(selected, stems):
        if stem in seen:
            raise AmbiguousPatternError(
                f"parameters {seen[stem]!r} and {name!r} both sanitize to {stem}.npy"
            )
        seen[stem] = name

    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    entries = []
    for (name, tensor), stem in zip(selected, stems):
        if tensor.dtype != torch.float32:
            warnings.warn(
                f"layer {name!r} is {tensor.dtype}; converting to the f32 exchange dtype",
                stacklevel=2,
            )
        array = np.ascontiguousarray(tensor.detach().to(torch.float32).numpy())
        file_name = stem + ".npy"
        path = os.path.join(out_dir, file_name)
        buffer = _npy_bytes(array)
        _atomic_write_bytes(path, buffer)
        entries.append(
            {
                "name": name,
                "file": file_name,
                "shape": [int(d) for d in array.shape],
                "sha256": hashlib.sha256(buffer).hexdigest(),
            }
        )

    index_path = os.path.join(out_dir, "index.json")
    payload = {"schema_version": INDEX_SCHEMA_VERSION, "layers": entries}
    _atomic_write_bytes(
        index_path, (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")
    )
    return index_path


def _npy_bytes(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    np.save(buffer, array, allow_pickle=False)
    return buffer.getvalue()


def _read_index(index_path: str | os.PathLike) -> list[dict]:
    try:
        with open(index_path, "rb") as handle:
            obj = json.load(handle)
    except json.JSONDecodeError as exc:
        raise BridgeError(f"index {os.fspath(index_path)!r} is not valid JSON: {exc}") from None
    if not isinstance(obj, dict) or obj.get("schema_version") != INDEX_SCHEMA_VERSION:
        raise BridgeError("index must be an object with schema_version 1")
    layers = obj.get("layers")
    if not isinstance(layers, list):
        raise BridgeError("index must hold a 'layers' list")
    base = os.path.dirname(os.fspath(index_path)) or "."
    out = []
    for entry in layers:
        if not isinstance(entry, dict) or not {"name", "file", "shape", "sha256"} <= set(entry):
            raise BridgeError(f"index entry needs name/file/shape/sha256, got {entry!r}")
        record = dict(entry)
        record["path"] = os.path.join(base, entry["file"])
        out.append(record)
    return out


def inject(
    checkpoint_path: str | os.PathLike,
    index_path: str | os.PathLike,
    out_path: str | os.PathLike,
) -> list[str]:
    """Replace indexed layers with bank tensors; write a new checkpoint.

    Returns the injected layer names. The input checkpoint is never
    mutated in place; an empty index copies it through with a warning.
    """
    if os.path.abspath(os.fspath(out_path)) == os.path.abspath(os.fspath(checkpoint_path)):
        raise BridgeError("inject refuses to overwrite the input checkpoint in place")
    checkpoint = _load_checkpoint(checkpoint_path)
    state = _locate_state(checkpoint)
    entries = _read_index(index_path)
    if not entries:
        warnings.warn("index lists no layers; copying the checkpoint unchanged", stacklevel=2)

    injected = []
    for entry in entries:
        name = entry["name"]
        if _sha256_of(entry["path"]) != entry["sha256"]:
            raise BridgeError(f"checksum mismatch for bank file {entry['file']!r}")
        bank = np.load(entry["path"], allow_pickle=False)
        if bank.dtype != np.float32:
            raise DtypeMismatchError(
                f"bank for layer {name!r} is {bank.dtype}; the exchange dtype is f32"
            )
        target = state.get(name)
        if not torch.is_tensor(target):
            raise NoMatchingLayersError(f"checkpoint has no tensor parameter named {name!r}")
        if tuple(target.shape) != bank.shape:
            raise ShapeMismatchError(
                f"layer {name!r}: bank shape {tuple(bank.shape)} vs target {tuple(target.shape)}"
            )
        if target.dtype != torch.float32:
            raise DtypeMismatchError(f"layer {name!r} is {target.dtype}; inject targets f32 only")
        state[name] = torch.from_numpy(bank.copy())
        injected.append(name)

    out_path = os.fspath(out_path)
    directory = os.path.dirname(out_path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(out_path))
    os.close(fd)
    try:
        torch.save(checkpoint, tmp)
        os.replace(tmp, out_path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return injected
