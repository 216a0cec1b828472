"""Reproducible initialization banks of center-surround kernels.

Each kernel in a bank gets an independently drawn polarity and
center-to-surround ratio.  Draws come from numpy's Philox bit generator
(counter-based, 4x64), which is deterministic and platform-independent for
a given seed.  Stream layout:

* a single bank seeds Philox with ``SeedSequence((seed,))``;
* per-layer banks use ``SeedSequence((seed, layer_index))`` so one layer's
  channel count or name never shifts another layer's draws;
* per kernel, the polarity draw (``integers(0, 2)``: 0 = on, 1 = off)
  precedes the gamma draw (``uniform(gamma_min, gamma_max)``).  The
  polarity draw happens in every mode; on-only / off-only modes override
  its result, so the gamma sequence for a given seed is identical across
  polarity modes.

The manifest records every draw, so a bank can be rebuilt exactly without
replaying the generator.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from .dog import DoGSpec, Polarity, generate_kernel

MANIFEST_SCHEMA_VERSION = 1

_U64_MAX = 2 ** 64 - 1


class PolarityMode(enum.Enum):
    """How kernel polarities are assigned across a bank."""

    BOTH = "both"  # each polarity with probability 0.5
    ON_ONLY = "on"
    OFF_ONLY = "off"


@dataclass(frozen=True)
class SamplerConfig:
    """Bank sampling parameters (seed, gamma range, polarity mode, size)."""

    seed: int
    kernel_size: int
    gamma_min: float = 0.05
    gamma_max: float = 0.5
    polarity_mode: PolarityMode = PolarityMode.BOTH

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)) or isinstance(self.seed, bool):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")
        if not (0 <= self.seed <= _U64_MAX):
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 3, got {self.kernel_size}")
        if not (0.0 < self.gamma_min < self.gamma_max < 1.0):
            raise ValueError(
                f"need 0 < gamma_min < gamma_max < 1, got [{self.gamma_min}, {self.gamma_max}]"
            )
        if not isinstance(self.polarity_mode, PolarityMode):
            raise ValueError(f"polarity_mode must be a PolarityMode, got {self.polarity_mode!r}")


@dataclass(frozen=True)
class BankManifest:
    """Complete record of a bank's draws; replaying it rebuilds the bank."""

    seed: int
    kernel_size: int
    gamma_min: float
    gamma_max: float
    polarity_mode: PolarityMode
    gammas: tuple[float, ...]
    polarities: tuple[Polarity, ...]
    layer_name: str | None = None
    schema_version: int = MANIFEST_SCHEMA_VERSION

    def __post_init__(self) -> None:
        if len(self.gammas) != len(self.polarities):
            raise ValueError("gammas and polarities must have equal length")

    @property
    def config(self) -> SamplerConfig:
        return SamplerConfig(
            seed=self.seed,
            kernel_size=self.kernel_size,
            gamma_min=self.gamma_min,
            gamma_max=self.gamma_max,
            polarity_mode=self.polarity_mode,
        )


@dataclass(frozen=True)
class KernelBank:
    """Ordered kernel stack [n, size, size] plus its generation manifest."""

    kernels: np.ndarray
    manifest: BankManifest

    def __len__(self) -> int:
        return self.kernels.shape[0]

    def as_weight_tensor(self) -> np.ndarray:
        """Depthwise weight layout [channels, 1, size, size]."""
        return self.kernels[:, None, :, :]


def _stream(entropy) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def _draw_pairs(rng: np.random.Generator, config: SamplerConfig, n: int):
    gammas = []
    polarities = []
    for _ in range(n):
        drawn = Polarity.ON if rng.integers(0, 2) == 0 else Polarity.OFF
        gamma = float(rng.uniform(config.gamma_min, config.gamma_max))
        if config.polarity_mode is PolarityMode.ON_ONLY:
            drawn = Polarity.ON
        elif config.polarity_mode is PolarityMode.OFF_ONLY:
            drawn = Polarity.OFF
        gammas.append(gamma)
        polarities.append(drawn)
    return tuple(gammas), tuple(polarities)


def build_kernels(manifest: BankManifest) -> np.ndarray:
    """Rebuild the kernel stack from recorded draws (no generator replay)."""
    size = manifest.kernel_size
    kernels = np.empty((len(manifest.gammas), size, size))
    for i, (gamma, polarity) in enumerate(zip(manifest.gammas, manifest.polarities)):
        kernels[i] = generate_kernel(DoGSpec(size, gamma, polarity))
    return kernels


def sample_bank(config: SamplerConfig, n: int, _entropy=None, layer_name: str | None = None) -> KernelBank:
    """Draw a bank of ``n`` kernels under ``config``.

    Same (config, n) always yields a bit-identical bank.  Raises
    DegenerateKernelError if a drawn ratio produces a single-signed grid
    (cannot happen with the default gamma range).
    """
    if n < 1:
        raise ValueError(f"bank size must be >= 1, got {n}")
    rng = _stream((config.seed,) if _entropy is None else _entropy)
    gammas, polarities = _draw_pairs(rng, config, n)
    manifest = BankManifest(
        seed=config.seed,
        kernel_size=config.kernel_size,
        gamma_min=config.gamma_min,
        gamma_max=config.gamma_max,
        polarity_mode=config.polarity_mode,
        gammas=gammas,
        polarities=polarities,
        layer_name=layer_name,
    )
    return KernelBank(kernels=build_kernels(manifest), manifest=manifest)


@dataclass(frozen=True)
class LayerSpec:
    """One depthwise layer to generate a bank for."""

    name: str
    channels: int
    kernel_size: int

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("layer name must be non-empty")
        if self.channels < 1:
            raise ValueError(f"channel count must be >= 1, got {self.channels}")
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel size must be odd and >= 3, got {self.kernel_size}")


def bank_for_layers(config: SamplerConfig, layers: list[LayerSpec]) -> list[KernelBank]:
    """One bank per layer, each on its own substream keyed by layer index.

    The substream entropy is (config.seed, layer_index), so editing one
    layer's name or channel count leaves every other layer's draws intact.
    config.kernel_size is ignored in favor of each layer's own size.
    """
    if not layers:
        raise ValueError("layer list must be non-empty")
    names = [layer.name for layer in layers]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate layer names: {dupes}")
    banks = []
    for index, layer in enumerate(layers):
        layer_config = replace(config, kernel_size=layer.kernel_size)
        banks.append(
            sample_bank(
                layer_config,
                layer.channels,
                _entropy=(config.seed, index),
                layer_name=layer.name,
            )
        )
    return banks
