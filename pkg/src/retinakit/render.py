"""Kernel-grid raster rendering and proportion bar charts.

Grids tile kernels left-to-right, top-to-bottom with 1-pixel black
separators, upscaling each kernel to the cell size by nearest neighbor.
Weights are mapped through a zero-centered symmetric range (max |w|,
per kernel or global), so excitatory and inhibitory structure reads as
red versus blue under the diverging colormap and the zero level is
always the midpoint. Charts are written as standalone SVG where the
bars are the only rect elements.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .analytics import KernelSet
from .tensorio import atomic_write_bytes

BAR_COLORS = {"on": "#c43d3d", "off": "#3d5ac4", "other": "#8a8a8a"}


class RenderError(ValueError):
    """Unrenderable request (bad geometry, container, or empty input)."""


class Colormap(enum.Enum):
    DIVERGING = "diverging"  # blue-white-red, zero at white
    GRAY = "gray"  # zero at mid-gray


class Normalize(enum.Enum):
    PER_KERNEL = "per-kernel"
    GLOBAL = "global"


@dataclass(frozen=True)
class RenderSpec:
    """Grid geometry and color handling for kernel rendering."""

    columns: int = 8
    cell_px: int = 32
    colormap: Colormap = Colormap.DIVERGING
    normalize: Normalize = Normalize.GLOBAL

    def __post_init__(self) -> None:
        if self.columns < 1:
            raise RenderError(f"columns must be positive, got {self.columns}")
        if self.cell_px < 1:
            raise RenderError(f"cell_px must be positive, got {self.cell_px}")
        if not isinstance(self.colormap, Colormap):
            raise RenderError(f"colormap must be a Colormap, got {self.colormap!r}")
        if not isinstance(self.normalize, Normalize):
            raise RenderError(f"normalize must be a Normalize, got {self.normalize!r}")


def _normalized(kernels: np.ndarray, mode: Normalize) -> np.ndarray:
    """Scale onto [-1, 1] by max |w|; all-zero input stays all zero."""
    if mode is Normalize.GLOBAL:
        scale = np.abs(kernels).max()
        return kernels / scale if scale > 0 else np.zeros_like(kernels)
    scale = np.abs(kernels).max(axis=(1, 2), keepdims=True)
    return np.divide(kernels, scale, out=np.zeros_like(kernels), where=scale > 0)


def _colorize(tile: np.ndarray, colormap: Colormap) -> np.ndarray:
    """Map values in [-1, 1] to uint8 pixels (2-d gray or h,w,3 rgb)."""
    if colormap is Colormap.GRAY:
        return np.round((tile + 1.0) * 127.5).astype(np.uint8)
    mag = np.round(255.0 * (1.0 - np.abs(tile))).astype(np.uint8)
    rgb = np.empty(tile.shape + (3,), dtype=np.uint8)
    positive = tile >= 0
    rgb[..., 0] = np.where(positive, 255, mag)
    rgb[..., 1] = mag
    rgb[..., 2] = np.where(positive, mag, 255)
    return rgb


def grid_geometry(count: int, spec: RenderSpec) -> tuple[int, int, int, int]:
    """(rows, columns, height_px, width_px) of the full grid image."""
    rows = -(-count // spec.columns)
    height = rows * (spec.cell_px + 1) + 1
    width = spec.columns * (spec.cell_px + 1) + 1
    return rows, spec.columns, height, width


def render_grid_pixels(kernel_set: KernelSet, spec: RenderSpec) -> np.ndarray:
    """The grid as a uint8 pixel array; gray gives 2-d, diverging h,w,3."""
    if spec.cell_px < kernel_set.size:
        raise RenderError(
            f"cell_px {spec.cell_px} is smaller than the kernel size {kernel_set.size}"
        )
    rows, columns, height, width = grid_geometry(len(kernel_set), spec)
    gray = spec.colormap is Colormap.GRAY
    canvas = np.zeros((height, width) if gray else (height, width, 3), dtype=np.uint8)
    cell = spec.cell_px
    idx = (np.arange(cell) * kernel_set.size) // cell
    normalized = _normalized(kernel_set.kernels, spec.normalize)
    for slot in range(rows * columns):
        r, c = divmod(slot, columns)
        y, x = r * (cell + 1) + 1, c * (cell + 1) + 1
        if slot < len(kernel_set):
            tile = _colorize(normalized[slot][np.ix_(idx, idx)], spec.colormap)
        else:
            tile = np.full((cell, cell) if gray else (cell, cell, 3), 255, dtype=np.uint8)
        canvas[y : y + cell, x : x + cell] = tile
    return canvas


def _pgm_bytes(pixels: np.ndarray) -> bytes:
    height, width = pixels.shape
    return b"P5\n%d %d\n255\n" % (width, height) + pixels.tobytes()


def _png_bytes(pixels: np.ndarray) -> bytes:
    image = Image.fromarray(pixels, mode="L" if pixels.ndim == 2 else "RGB")
    out = io.BytesIO()
    image.save(out, format="PNG")
    return out.getvalue()


def render_kernel_grid(kernel_set: KernelSet, spec: RenderSpec, path: str | os.PathLike) -> None:
    """Write the kernel grid as .png (any colormap) or .pgm (gray only)."""
    suffix = os.path.splitext(os.fspath(path))[1].lower()
    if suffix == ".pgm" and spec.colormap is not Colormap.GRAY:
        raise RenderError("PGM holds a single channel; use the gray colormap")
    if suffix not in (".png", ".pgm"):
        raise RenderError(f"unsupported image container {suffix!r} (use .png or .pgm)")
    pixels = render_grid_pixels(kernel_set, spec)
    blob = _pgm_bytes(pixels) if suffix == ".pgm" else _png_bytes(pixels)
    atomic_write_bytes(path, blob)


# ------------------------------------------------------------------- chart

_MARGIN_LEFT = 60.0
_MARGIN_TOP = 20.0
_PLOT_HEIGHT = 300.0
_SLOT_WIDTH = 120.0
_BAR_WIDTH = 28.0
_LEGEND_WIDTH = 120.0


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def render_histogram(table: list[tuple[str, float, float, float]], path: str | os.PathLike) -> None:
    """Write a grouped proportion bar chart (on/off/other per model) as SVG."""
    if not table:
        raise RenderError("empty proportion table")
    for row in table:
        if len(row) != 4:
            raise RenderError(f"rows must be (model_tag, on, off, other), got {row!r}")
    groups = len(table)
    width = _MARGIN_LEFT + _SLOT_WIDTH * groups + _LEGEND_WIDTH
    height = _MARGIN_TOP + _PLOT_HEIGHT + 50.0
    baseline = _MARGIN_TOP + _PLOT_HEIGHT
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
        f'<line x1="{_fmt(_MARGIN_LEFT)}" y1="{_fmt(_MARGIN_TOP)}" '
        f'x2="{_fmt(_MARGIN_LEFT)}" y2="{_fmt(baseline)}" stroke="black"/>',
        f'<line x1="{_fmt(_MARGIN_LEFT)}" y1="{_fmt(baseline)}" '
        f'x2="{_fmt(_MARGIN_LEFT + _SLOT_WIDTH * groups)}" y2="{_fmt(baseline)}" stroke="black"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = baseline - tick * _PLOT_HEIGHT
        parts.append(
            f'<text x="{_fmt(_MARGIN_LEFT - 8)}" y="{_fmt(y + 4)}" '
            f'text-anchor="end" font-size="12">{_fmt(tick)}</text>'
        )
    parts.append(
        f'<text x="12" y="{_fmt(_MARGIN_TOP + _PLOT_HEIGHT / 2)}" font-size="13" '
        f'transform="rotate(-90 12 {_fmt(_MARGIN_TOP + _PLOT_HEIGHT / 2)})" '
        'text-anchor="middle">proportion</text>'
    )
    for g, (tag, on, off, other) in enumerate(table):
        x0 = _MARGIN_LEFT + g * _SLOT_WIDTH + 14.0
        for b, (key, value) in enumerate((("on", on), ("off", off), ("other", other))):
            h = float(value) * _PLOT_HEIGHT
            x = x0 + b * (_BAR_WIDTH + 2.0)
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(baseline - h)}" width="{_fmt(_BAR_WIDTH)}" '
                f'height="{_fmt(h)}" fill="{BAR_COLORS[key]}"/>'
            )
        parts.append(
            f'<text x="{_fmt(x0 + 1.5 * _BAR_WIDTH + 2.0)}" y="{_fmt(baseline + 18)}" '
            f'text-anchor="middle" font-size="12">{_escape(tag)}</text>'
        )
    legend_x = _MARGIN_LEFT + _SLOT_WIDTH * groups + 16.0
    for i, key in enumerate(("on", "off", "other")):
        y = _MARGIN_TOP + 20.0 + i * 22.0
        parts.append(
            f'<circle cx="{_fmt(legend_x)}" cy="{_fmt(y)}" r="6" fill="{BAR_COLORS[key]}"/>'
        )
        parts.append(
            f'<text x="{_fmt(legend_x + 12)}" y="{_fmt(y + 4)}" font-size="12">{key}</text>'
        )
    parts.append("</svg>")
    atomic_write_bytes(path, ("\n".join(parts) + "\n").encode("utf-8"))


def _escape(text: str) -> str:
    return (
        str(text)
        .replace("&", "&amp;")
        .replace("<", "&lt;")
        .replace(">", "&gt;")
        .replace('"', "&quot;")
    )
