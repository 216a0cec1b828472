"""Command-line front end: generate, analyze, render, selfcheck.

Flag resolution order is: explicit flag, then the matching key in the
TOML config file (section named after the subcommand, underscores for
dashes), then for seeds the RETINA_SEED environment variable. Every
file-writing run also writes a sidecar JSON echoing its fully resolved
configuration. Exit codes: 0 success, 2 invalid flags, 3 degenerate
kernel, 4 insufficient points, 5 malformed input; selfcheck exits 1
when a property suite fails.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

import numpy as np

from . import tensorio
from .analytics import AmbiguousLabelingError, KernelSet, analyze, proportion_table
from .bank import LayerSpec, PolarityMode, SamplerConfig, bank_for_layers, sample_bank
from .dog import DegenerateKernelError
from .kmeans import InsufficientPointsError, KMeansConfig
from .render import (
    Colormap,
    Normalize,
    RenderError,
    RenderSpec,
    render_histogram,
    render_kernel_grid,
)
from .selfcheck import FAULTS, run_selfcheck

_U64_MAX = 2 ** 64 - 1


class UsageError(Exception):
    """Invalid flags or flag-derived values (exit code 2)."""


def _err(message) -> None:
    print(f"retinakit: {message}", file=sys.stderr)


def _load_toml(path: str) -> dict:
    try:
        with open(path, "rb") as handle:
            return tomllib.load(handle)
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid TOML in {path}: {exc}") from None


def _setting(ns: argparse.Namespace, cfg: dict, section: str, key: str, default=None):
    value = getattr(ns, key)
    if value is not None:
        return value
    table = cfg.get(section, {})
    if isinstance(table, dict) and key in table:
        return table[key]
    return default


def _resolve_seed(ns, cfg, section, required: bool) -> int:
    raw = ns.seed
    if raw is None:
        table = cfg.get(section, {})
        raw = table.get("seed") if isinstance(table, dict) else None
    if raw is None:
        raw = cfg.get("seed")
    if raw is None:
        raw = os.environ.get("RETINA_SEED")
    if raw is None:
        if required:
            raise UsageError("no seed given (use --seed, a config file, or RETINA_SEED)")
        return 0
    try:
        seed = int(raw)
    except (TypeError, ValueError):
        raise UsageError(f"seed must be an integer, got {raw!r}") from None
    if not 0 <= seed <= _U64_MAX:
        raise UsageError(f"seed must fit in an unsigned 64-bit integer, got {seed}")
    return seed


def _write_sidecar(path: str, payload: dict) -> None:
    blob = (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")
    tensorio.atomic_write_bytes(path, blob)


def _sanitize(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]", "_", name)


def _depthwise_kernels(array: np.ndarray) -> np.ndarray:
    """Accept [N,K,K] or [N,1,K,K]; anything else is not a kernel stack."""
    if array.ndim == 4:
        if array.shape[1] != 1:
            raise ValueError(f"shape {array.shape} is not depthwise layout [N,1,K,K]")
        array = array[:, 0]
    if array.ndim != 3:
        raise ValueError(f"expected a [N,K,K] or [N,1,K,K] tensor, got shape {array.shape}")
    return np.asarray(array, dtype=float)


# ---------------------------------------------------------------- generate


def _read_layer_request(path: str) -> list[LayerSpec]:
    try:
        with open(path, "rb") as handle:
            obj = json.load(handle)
    except OSError as exc:
        raise UsageError(f"cannot read layers file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid JSON in {path}: {exc}") from None
    layers = obj.get("layers") if isinstance(obj, dict) else None
    if not isinstance(layers, list) or not layers:
        raise UsageError(f"{path} must hold a non-empty 'layers' array")
    specs = []
    for entry in layers:
        if not isinstance(entry, dict) or not {"name", "channels", "kernel_size"} <= set(entry):
            raise UsageError(f"layer entries need name/channels/kernel_size, got {entry!r}")
        try:
            specs.append(
                LayerSpec(
                    name=entry["name"],
                    channels=entry["channels"],
                    kernel_size=entry["kernel_size"],
                )
            )
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad layer entry {entry.get('name')!r}: {exc}") from None
    return specs


def _sampler_config(ns, cfg, seed: int, kernel_size: int) -> SamplerConfig:
    gamma_min = float(_setting(ns, cfg, "generate", "gamma_min", 0.05))
    gamma_max = float(_setting(ns, cfg, "generate", "gamma_max", 0.5))
    polarity = _setting(ns, cfg, "generate", "polarity", "both")
    if polarity not in ("both", "on", "off"):
        raise UsageError(f"polarity must be both/on/off, got {polarity!r}")
    if not 0.0 < gamma_min < gamma_max < 1.0:
        raise UsageError(f"need 0 < gamma-min < gamma-max < 1, got [{gamma_min}, {gamma_max}]")
    if kernel_size < 3 or kernel_size % 2 == 0:
        raise UsageError(f"kernel size must be odd and >= 3, got {kernel_size}")
    return SamplerConfig(
        seed=seed,
        kernel_size=kernel_size,
        gamma_min=gamma_min,
        gamma_max=gamma_max,
        polarity_mode=PolarityMode(polarity),
    )


def cmd_generate(ns: argparse.Namespace, cfg: dict) -> int:
    seed = _resolve_seed(ns, cfg, "generate", required=True)
    dtype = _setting(ns, cfg, "generate", "dtype", "f32")
    if dtype not in ("f32", "f64"):
        raise UsageError(f"dtype must be f32 or f64, got {dtype!r}")
    np_dtype = np.float32 if dtype == "f32" else np.float64
    layers_path = _setting(ns, cfg, "generate", "layers")
    base = {
        "command": "generate",
        "seed": str(seed),
        "dtype": dtype,
        "gamma_min": float(_setting(ns, cfg, "generate", "gamma_min", 0.05)),
        "gamma_max": float(_setting(ns, cfg, "generate", "gamma_max", 0.5)),
        "polarity": _setting(ns, cfg, "generate", "polarity", "both"),
    }

    if layers_path is not None:
        if any(getattr(ns, key) is not None for key in ("size", "channels", "out", "manifest")):
            raise UsageError("--layers excludes --size/--channels/--out/--manifest")
        out_dir = _setting(ns, cfg, "generate", "out_dir")
        if out_dir is None:
            raise UsageError("--layers mode requires --out-dir")
        layers = _read_layer_request(layers_path)
        config = _sampler_config(ns, cfg, seed, layers[0].kernel_size)
        banks = bank_for_layers(config, layers)
        files = [_sanitize(layer.name) for layer in layers]
        if len(set(files)) != len(files):
            raise UsageError("layer names collide after filename sanitization")
        os.makedirs(out_dir, exist_ok=True)
        entries = []
        for layer, bank, stem in zip(layers, banks, files):
            weights = bank.as_weight_tensor().astype(np_dtype)
            tensorio.write_array(os.path.join(out_dir, stem + ".npy"), weights)
            tensorio.write_manifest(os.path.join(out_dir, stem + ".manifest.json"), bank.manifest)
            entries.append({"name": layer.name, "file": stem + ".npy", "shape": weights.shape})
        tensorio.write_layer_index(os.path.join(out_dir, "index.json"), entries)
        _write_sidecar(
            os.path.join(out_dir, "config.json"),
            {**base, "layers": os.fspath(layers_path), "out_dir": os.fspath(out_dir)},
        )
        return 0

    size = _setting(ns, cfg, "generate", "size")
    channels = _setting(ns, cfg, "generate", "channels")
    out = _setting(ns, cfg, "generate", "out")
    manifest_path = _setting(ns, cfg, "generate", "manifest")
    missing = [
        flag
        for flag, value in (
            ("--size", size),
            ("--channels", channels),
            ("--out", out),
            ("--manifest", manifest_path),
        )
        if value is None
    ]
    if missing:
        raise UsageError(f"missing required flags: {', '.join(missing)}")
    if not isinstance(channels, int) or channels < 1:
        raise UsageError(f"channels must be a positive integer, got {channels!r}")
    config = _sampler_config(ns, cfg, seed, int(size))
    bank = sample_bank(config, channels)
    tensorio.write_array(out, bank.as_weight_tensor().astype(np_dtype))
    tensorio.write_manifest(manifest_path, bank.manifest)
    _write_sidecar(
        f"{os.fspath(out)}.config.json",
        {
            **base,
            "size": int(size),
            "channels": channels,
            "out": os.fspath(out),
            "manifest": os.fspath(manifest_path),
        },
    )
    return 0


# ----------------------------------------------------------------- analyze


def _kmeans_config(ns, cfg, seed: int) -> KMeansConfig:
    k = int(_setting(ns, cfg, "analyze", "k", 3))
    if k != 3:
        raise UsageError(f"analysis labels require k=3, got {k}")
    restarts = int(_setting(ns, cfg, "analyze", "restarts", 10))
    max_iters = int(_setting(ns, cfg, "analyze", "max_iters", 300))
    tol = float(_setting(ns, cfg, "analyze", "tol", 1e-6))
    if restarts < 1 or max_iters < 1 or tol <= 0:
        raise UsageError("restarts/max-iters must be >= 1 and tol > 0")
    return KMeansConfig(k=3, restarts=restarts, max_iters=max_iters, tol=tol, seed=seed)


def _verified_layer_arrays(index_path: str) -> list[tuple[str, np.ndarray]]:
    entries = tensorio.read_layer_index(index_path)
    if not entries:
        raise tensorio.LayerIndexError("schema-mismatch", "layer index lists no layers")
    loaded = []
    for entry in entries:
        digest = tensorio.sha256_of(entry["path"])
        if digest != entry["sha256"]:
            raise tensorio.LayerIndexError(
                "schema-mismatch",
                f"checksum mismatch for layer {entry['name']!r} ({entry['file']})",
            )
        loaded.append((entry["name"], _depthwise_kernels(tensorio.read_array(entry["path"]))))
    return loaded


def cmd_analyze(ns: argparse.Namespace, cfg: dict) -> int:
    in_path = _setting(ns, cfg, "analyze", "in_path")
    report_path = _setting(ns, cfg, "analyze", "report")
    csv_path = _setting(ns, cfg, "analyze", "csv")
    missing = [
        flag
        for flag, value in (("--in", in_path), ("--report", report_path), ("--csv", csv_path))
        if value is None
    ]
    if missing:
        raise UsageError(f"missing required flags: {', '.join(missing)}")
    per_layer = ns.per_layer or bool(cfg.get("analyze", {}).get("per_layer"))
    seed = _resolve_seed(ns, cfg, "analyze", required=False)
    config = _kmeans_config(ns, cfg, seed)
    tag = _setting(ns, cfg, "analyze", "tag") or os.path.splitext(os.path.basename(in_path))[0]
    sidecar = {
        "command": "analyze",
        "in": os.fspath(in_path),
        "report": os.fspath(report_path),
        "csv": os.fspath(csv_path),
        "k": 3,
        "restarts": config.restarts,
        "max_iters": config.max_iters,
        "tol": config.tol,
        "seed": str(seed),
        "per_layer": per_layer,
        "tag": tag,
    }

    if os.fspath(in_path).endswith(".json"):
        named_arrays = _verified_layer_arrays(in_path)
        if per_layer:
            os.makedirs(report_path, exist_ok=True)
            rows = []
            for name, kernels in named_arrays:
                report = analyze(KernelSet(kernels, source=name), config)
                out = os.path.join(report_path, _sanitize(name) + ".report.json")
                tensorio.write_report(out, report)
                rows.append((name, report))
            tensorio.write_proportions_csv(csv_path, proportion_table(rows))
            _write_sidecar(os.path.join(report_path, "config.json"), sidecar)
            return 0
        sizes = {kernels.shape[1] for _, kernels in named_arrays}
        if len(sizes) != 1:
            raise ValueError(
                f"layers mix kernel sizes {sorted(sizes)}; pooled analysis needs one size "
                "(use --per-layer)"
            )
        kernels = np.concatenate([kernels for _, kernels in named_arrays])
    else:
        if per_layer:
            raise UsageError("--per-layer requires a layer index JSON as --in")
        kernels = _depthwise_kernels(tensorio.read_array(in_path))

    report = analyze(KernelSet(kernels, source=tag), config)
    tensorio.write_report(report_path, report)
    tensorio.write_proportions_csv(csv_path, proportion_table([(tag, report)]))
    _write_sidecar(f"{os.fspath(report_path)}.config.json", sidecar)
    return 0


# ------------------------------------------------------------------ render


def cmd_render(ns: argparse.Namespace, cfg: dict) -> int:
    in_path = _setting(ns, cfg, "render", "in_path")
    grid = _setting(ns, cfg, "render", "grid")
    proportions = _setting(ns, cfg, "render", "proportions")
    hist = _setting(ns, cfg, "render", "hist")
    report_path = _setting(ns, cfg, "render", "report")
    averages = _setting(ns, cfg, "render", "averages")
    modes = [
        (in_path is not None, grid is not None),
        (proportions is not None, hist is not None),
        (report_path is not None, averages is not None),
    ]
    complete = [pair for pair in modes if all(pair)]
    if len(complete) != 1 or any(any(pair) and not all(pair) for pair in modes):
        raise UsageError(
            "give exactly one of: --in with --grid, --proportions with --hist, "
            "--report with --averages"
        )

    if hist is not None:
        table = tensorio.read_proportions_csv(proportions)
        if not table:
            raise tensorio.SchemaError("schema-mismatch", "proportion table has no rows")
        render_histogram(table, hist)
        _write_sidecar(
            f"{os.fspath(hist)}.config.json",
            {"command": "render", "proportions": os.fspath(proportions), "hist": os.fspath(hist)},
        )
        return 0

    default_columns = 8 if grid is not None else 3
    columns = int(_setting(ns, cfg, "render", "columns", default_columns))
    cell = int(_setting(ns, cfg, "render", "cell", 32))
    colormap = _setting(ns, cfg, "render", "colormap", "diverging")
    normalize = _setting(ns, cfg, "render", "normalize", "global")
    try:
        spec = RenderSpec(
            columns=columns,
            cell_px=cell,
            colormap=Colormap(colormap),
            normalize=Normalize(normalize),
        )
    except ValueError as exc:
        raise UsageError(exc) from None

    if grid is not None:
        kernels = _depthwise_kernels(tensorio.read_array(in_path))
        kernel_set = KernelSet(kernels, source=os.path.basename(os.fspath(in_path)))
        out, payload = grid, {"command": "render", "in": os.fspath(in_path), "grid": os.fspath(grid)}
    else:
        report = tensorio.read_report(report_path)
        kernel_set = KernelSet(report.cluster_averages, source=report.source)
        out, payload = averages, {
            "command": "render",
            "report": os.fspath(report_path),
            "averages": os.fspath(averages),
        }
    render_kernel_grid(kernel_set, spec, out)
    _write_sidecar(
        f"{os.fspath(out)}.config.json",
        {
            **payload,
            "columns": spec.columns,
            "cell": spec.cell_px,
            "colormap": spec.colormap.value,
            "normalize": spec.normalize.value,
        },
    )
    return 0


# --------------------------------------------------------------- selfcheck


def cmd_selfcheck(ns: argparse.Namespace, cfg: dict) -> int:
    results = run_selfcheck(ns.inject_fault)
    passed = all(r.passed for r in results)
    if ns.json:
        payload = {
            "passed": passed,
            "checks": [
                {"name": r.name, "passed": r.passed, "detail": r.detail} for r in results
            ],
        }
        print(json.dumps(payload, sort_keys=True, indent=2))
    else:
        for r in results:
            status = "ok" if r.passed else f"FAIL  ({r.detail})"
            print(f"{r.name:<32} {status}")
    return 0 if passed else 1


# -------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retinakit",
        description="Center-surround kernel banks: generation, analysis, rendering.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a kernel bank and write weights + manifest")
    g.add_argument("--size", type=int, help="odd kernel size")
    g.add_argument("--channels", type=int, help="number of kernels")
    g.add_argument("--seed", help="u64 sampling seed")
    g.add_argument("--gamma-min", type=float, dest="gamma_min")
    g.add_argument("--gamma-max", type=float, dest="gamma_max")
    g.add_argument("--polarity", choices=("both", "on", "off"))
    g.add_argument("--dtype", choices=("f32", "f64"))
    g.add_argument("--out", help="output weight tensor (.npy)")
    g.add_argument("--manifest", help="output manifest (.json)")
    g.add_argument("--layers", help="layer request JSON for multi-layer generation")
    g.add_argument("--out-dir", dest="out_dir", help="output directory for --layers mode")
    g.add_argument("--config", help="TOML config file")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", help="cluster a kernel tensor and write report + CSV")
    a.add_argument("--in", dest="in_path", help="kernel tensor (.npy) or layer index (.json)")
    a.add_argument("--k", type=int, help="cluster count (must be 3)")
    a.add_argument("--restarts", type=int)
    a.add_argument("--max-iters", type=int, dest="max_iters")
    a.add_argument("--tol", type=float)
    a.add_argument("--seed", help="u64 clustering seed")
    a.add_argument("--per-layer", action="store_true", dest="per_layer")
    a.add_argument("--tag", help="model tag for the CSV (default: input stem)")
    a.add_argument("--report", help="output report JSON (directory with --per-layer)")
    a.add_argument("--csv", help="output proportions CSV")
    a.add_argument("--config", help="TOML config file")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("render", help="draw kernel grids or proportion charts")
    r.add_argument("--in", dest="in_path", help="kernel tensor (.npy)")
    r.add_argument("--grid", help="output grid image (.png or .pgm)")
    r.add_argument("--proportions", help="proportions CSV input")
    r.add_argument("--hist", help="output bar chart (.svg)")
    r.add_argument("--report", help="report JSON input")
    r.add_argument("--averages", help="output cluster-average grid (.png or .pgm)")
    r.add_argument("--columns", type=int)
    r.add_argument("--cell", type=int)
    r.add_argument("--colormap", choices=tuple(c.value for c in Colormap))
    r.add_argument("--normalize", choices=tuple(n.value for n in Normalize))
    r.add_argument("--config", help="TOML config file")
    r.set_defaults(func=cmd_render)

    s = sub.add_parser("selfcheck", help="run built-in property suites")
    s.add_argument("--json", action="store_true", help="machine-readable results")
    s.add_argument("--inject-fault", dest="inject_fault", choices=FAULTS, help=argparse.SUPPRESS)
    s.add_argument("--config", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_selfcheck)
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = _load_toml(ns.config) if getattr(ns, "config", None) else {}
        return ns.func(ns, cfg)
    except UsageError as exc:
        _err(exc)
        return 2
    except DegenerateKernelError as exc:
        _err(exc)
        return 3
    except InsufficientPointsError as exc:
        _err(exc)
        return 4
    except AmbiguousLabelingError as exc:
        _err(exc)
        return 1
    except RenderError as exc:
        _err(exc)
        return 2
    except (tensorio.ArrayFormatError, tensorio.SchemaError) as exc:
        _err(exc)
        return 5
    except (OSError, ValueError) as exc:
        _err(exc)
        return 5


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
