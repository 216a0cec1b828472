"""Rendering tests: grid geometry, colormaps, containers, SVG charts."""

import re

import numpy as np
import pytest
from PIL import Image

from retinakit.analytics import KernelSet
from retinakit.dog import DoGSpec, Polarity, generate_kernel
from retinakit.render import (
    Colormap,
    Normalize,
    RenderError,
    RenderSpec,
    grid_geometry,
    render_grid_pixels,
    render_histogram,
    render_kernel_grid,
)


def _bank(n, size=5, seed=0):
    return KernelSet(np.random.default_rng(seed).normal(size=(n, size, size)))


# ------------------------------------------------------------------- grids


def test_twelve_kernels_four_columns_three_rows(tmp_path):
    spec = RenderSpec(columns=4, cell_px=16)
    rows, cols, height, width = grid_geometry(12, spec)
    assert (rows, cols) == (3, 4)
    path = tmp_path / "g.png"
    render_kernel_grid(_bank(12), spec, path)
    with Image.open(path) as img:
        assert img.size == (width, height) == (4 * 17 + 1, 3 * 17 + 1)
        assert img.mode == "RGB"


def test_all_zero_kernel_renders_white_cell(tmp_path):
    spec = RenderSpec(columns=1, cell_px=8)
    pixels = render_grid_pixels(KernelSet(np.zeros((1, 3, 3))), spec)
    assert np.array_equal(pixels[1:9, 1:9], np.full((8, 8, 3), 255))
    # separators stay black
    assert np.array_equal(pixels[0], np.zeros((10, 3)))


def test_ragged_last_row_filled_white():
    spec = RenderSpec(columns=3, cell_px=4)
    pixels = render_grid_pixels(_bank(4, size=3), spec)
    # slots 5 and 6 are empty: white cells
    assert np.array_equal(pixels[6:10, 11:15], np.full((4, 4, 3), 255))


def test_diverging_polarity_colors():
    on = generate_kernel(DoGSpec(size=9, gamma=0.4, polarity=Polarity.ON))
    spec = RenderSpec(columns=2, cell_px=9)
    pixels = render_grid_pixels(KernelSet(np.stack([on, -on])), spec)
    center_on = pixels[1 + 4, 1 + 4]
    center_off = pixels[1 + 4, 1 + 10 + 4]
    assert center_on[0] == 255 and center_on[2] < 255  # red side
    assert center_off[2] == 255 and center_off[0] < 255  # blue side
    assert np.array_equal(center_on[::-1], center_off)  # exact mirror


def test_gamma_sweep_center_grows(tmp_path):
    gammas = [0.2, 0.35, 0.5, 0.65, 0.8]
    kernels = np.stack(
        [generate_kernel(DoGSpec(size=9, gamma=g, polarity=Polarity.ON)) for g in gammas]
    )
    spec = RenderSpec(columns=len(gammas), cell_px=27, normalize=Normalize.PER_KERNEL)
    pixels = render_grid_pixels(KernelSet(kernels), spec)
    bright = []
    for i in range(len(gammas)):
        cell = pixels[1 : 1 + 27, 1 + i * 28 : 1 + i * 28 + 27]
        bright.append(int(((cell[..., 0] == 255) & (cell[..., 2] < 255)).sum()))
    assert bright == sorted(bright)
    assert bright[-1] > bright[0]


def test_global_vs_per_kernel_normalization():
    base = generate_kernel(DoGSpec(size=5, gamma=0.4))
    kernels = np.stack([base, 0.1 * base])
    cells = {}
    for mode in Normalize:
        pixels = render_grid_pixels(KernelSet(kernels), RenderSpec(columns=2, cell_px=5, normalize=mode))
        cells[mode] = (pixels[1:6, 1:6], pixels[1:6, 7:12])
    first, second = cells[Normalize.PER_KERNEL]
    assert np.array_equal(first, second)  # own-scale: identical shape, identical image
    first, second = cells[Normalize.GLOBAL]
    assert second[..., 1].min() > first[..., 1].min()  # shared scale: scaled copy is paler


def test_grid_renders_deterministically(tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    render_kernel_grid(_bank(7), RenderSpec(columns=3, cell_px=12), a)
    render_kernel_grid(_bank(7), RenderSpec(columns=3, cell_px=12), b)
    assert a.read_bytes() == b.read_bytes()


def test_pgm_output(tmp_path):
    path = tmp_path / "g.pgm"
    spec = RenderSpec(columns=2, cell_px=6, colormap=Colormap.GRAY)
    render_kernel_grid(KernelSet(np.zeros((2, 3, 3))), spec, path)
    blob = path.read_bytes()
    assert blob.startswith(b"P5\n15 8\n255\n")
    pixels = np.frombuffer(blob[len(b"P5\n15 8\n255\n") :], dtype=np.uint8).reshape(8, 15)
    assert (pixels[1:7, 1:7] == 128).all()  # zero maps to mid-gray
    assert (pixels[0] == 0).all()


def test_pgm_requires_gray(tmp_path):
    with pytest.raises(RenderError):
        render_kernel_grid(_bank(1), RenderSpec(columns=1, cell_px=8), tmp_path / "g.pgm")


def test_unknown_container_rejected(tmp_path):
    with pytest.raises(RenderError):
        render_kernel_grid(_bank(1), RenderSpec(columns=1, cell_px=8), tmp_path / "g.bmp")


def test_cell_smaller_than_kernel_rejected():
    with pytest.raises(RenderError):
        render_grid_pixels(_bank(1, size=9), RenderSpec(columns=1, cell_px=4))


def test_render_spec_validation():
    with pytest.raises(RenderError):
        RenderSpec(columns=0)
    with pytest.raises(RenderError):
        RenderSpec(cell_px=0)
    with pytest.raises(RenderError):
        RenderSpec(colormap="diverging")


# ------------------------------------------------------------------- charts


def _rect_heights(svg: str) -> list[float]:
    return [float(h) for h in re.findall(r'<rect [^>]*height="([^"]+)"', svg)]


def test_histogram_single_group_heights(tmp_path):
    path = tmp_path / "h.svg"
    render_histogram([("m", 0.5, 0.3, 0.2)], path)
    svg = path.read_text()
    heights = _rect_heights(svg)
    assert len(heights) == 3
    assert abs(heights[0] / heights[1] - 5 / 3) < 1e-9
    assert abs(heights[1] / heights[2] - 3 / 2) < 1e-9
    assert svg.count("<rect ") == 3  # bars are the only rects
    assert "<text" in svg and ">proportion<" in svg
    for word in (">on<", ">off<", ">other<", ">m<"):
        assert word in svg


def test_histogram_two_groups_six_bars(tmp_path):
    path = tmp_path / "h.svg"
    render_histogram([("a", 0.4, 0.4, 0.2), ("b", 0.1, 0.2, 0.7)], path)
    svg = path.read_text()
    assert svg.count("<rect ") == 6
    assert ">a<" in svg and ">b<" in svg


def test_histogram_deterministic(tmp_path):
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render_histogram([("x", 0.2, 0.3, 0.5)], a)
    render_histogram([("x", 0.2, 0.3, 0.5)], b)
    assert a.read_bytes() == b.read_bytes()


def test_histogram_escapes_tags(tmp_path):
    path = tmp_path / "h.svg"
    render_histogram([("a<b>&c", 0.5, 0.25, 0.25)], path)
    svg = path.read_text()
    assert "a&lt;b&gt;&amp;c" in svg
    assert "<b>" not in svg


def test_histogram_rejects_empty_and_malformed(tmp_path):
    with pytest.raises(RenderError):
        render_histogram([], tmp_path / "h.svg")
    with pytest.raises(RenderError):
        render_histogram([("m", 0.5, 0.5)], tmp_path / "h.svg")
