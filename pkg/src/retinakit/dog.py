"""Center-surround difference-of-Gaussians kernels.

A center-surround receptive field is modeled as a narrow Gaussian minus a
wide one.  Two parameterizations are supported: the classic four-parameter
form (amplitudes K1, K2 and spreads s1, s2, with the exponent divided by the
raw spread) and the ratio form driven by the center-to-surround radius ratio
``gamma`` and the surround standard deviation ``sigma`` (exponent divided by
2*sigma^2).  For a kernel of side length ``k`` the surround sigma follows
analytically from ``gamma``:

    sigma = (k / 4) * sqrt((1 - gamma^2) / (-ln gamma))

which places the sign change of the radial profile at radius gamma*k/2.

Discrete kernels are sampled on the integer grid centered on the middle
pixel and rebalanced so positive weights sum to +0.5 and negative weights
to -0.5.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class Polarity(enum.Enum):
    """Sign of the kernel center: excitatory (on) or inhibitory (off)."""

    ON = "on"
    OFF = "off"


class DegenerateKernelError(ValueError):
    """Sampled grid has no positive or no negative entries to rebalance."""


def _check_size(size: int) -> None:
    if not isinstance(size, (int, np.integer)) or isinstance(size, bool):
        raise ValueError(f"kernel size must be an integer, got {size!r}")
    if size < 3 or size % 2 == 0:
        raise ValueError(f"kernel size must be odd and >= 3, got {size}")


def _check_gamma(gamma: float) -> None:
    if not (0.0 < gamma < 1.0):
        raise ValueError(f"gamma must lie strictly inside (0, 1), got {gamma}")


@dataclass(frozen=True)
class RodieckParams:
    """Four-parameter DoG: amplitudes k1 > k2 > 0, spreads s2 > s1 > 0."""

    k1: float
    k2: float
    s1: float
    s2: float

    def __post_init__(self) -> None:
        if min(self.k1, self.k2, self.s1, self.s2) <= 0:
            raise ValueError("all DoG parameters must be positive")
        if self.k1 <= self.k2:
            raise ValueError(
                f"center amplitude must exceed surround amplitude (k1={self.k1}, k2={self.k2})"
            )
        if self.s2 <= self.s1:
            raise ValueError(
                f"surround spread must exceed center spread (s1={self.s1}, s2={self.s2})"
            )


@dataclass(frozen=True)
class DoGSpec:
    """Full parameterization of one center-surround kernel.

    ``sigma`` defaults to the analytic value for (size, gamma); pass it
    explicitly only to explore non-analytic surrounds.
    """

    size: int
    gamma: float
    polarity: Polarity = Polarity.ON
    sigma: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        _check_size(self.size)
        _check_gamma(self.gamma)
        if self.sigma is None:
            object.__setattr__(self, "sigma", sigma_from_gamma(self.size, self.gamma))
        elif self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not isinstance(self.polarity, Polarity):
            raise ValueError(f"polarity must be a Polarity, got {self.polarity!r}")


def sigma_from_gamma(size: int, gamma: float) -> float:
    """Surround standard deviation implied by the kernel size and ratio.

    Computed as (size/4) * sqrt((1 - gamma^2) / (-ln gamma)); both
    endpoints of gamma are singular and rejected.
    """
    _check_size(size)
    _check_gamma(gamma)
    return (size / 4.0) * math.sqrt((1.0 - gamma * gamma) / (-math.log(gamma)))


def dog_rodieck(x, y, p: RodieckParams):
    """Evaluate the four-parameter DoG at (x, y).

    Note the exponent convention: each Gaussian divides by its raw spread
    (s1, s2), not by 2*s^2.  Accepts scalars or broadcastable arrays.
    """
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
    value = p.k1 * np.exp(-r2 / p.s1) - p.k2 * np.exp(-r2 / p.s2)
    return value if value.ndim else float(value)


def dog_continuous(x, y, spec: DoGSpec, ac: float = 1.0, as_: float = 1.0):
    """Evaluate the ratio-form DoG at (x, y).

    Returns (ac/gamma^2) * exp(-r^2 / (2 gamma^2 sigma^2))
          - as_        * exp(-r^2 / (2 sigma^2))
    negated when the spec's polarity is OFF.  Accepts scalars or
    broadcastable arrays.
    """
    if ac <= 0 or as_ <= 0:
        raise ValueError(f"amplitudes must be positive, got ac={ac}, as_={as_}")
    g2 = spec.gamma * spec.gamma
    s2 = spec.sigma * spec.sigma
    r2 = np.asarray(x, dtype=float) ** 2 + np.asarray(y, dtype=float) ** 2
    value = (ac / g2) * np.exp(-r2 / (2.0 * g2 * s2)) - as_ * np.exp(-r2 / (2.0 * s2))
    if spec.polarity is Polarity.OFF:
        value = -value
    return value if value.ndim else float(value)


def rodieck_params_for(spec: DoGSpec, ac: float = 1.0, as_: float = 1.0) -> RodieckParams:
    """Four-parameter equivalent of a ratio-form spec.

    The mapping k1 = ac/gamma^2, k2 = as_, s1 = 2 gamma^2 sigma^2,
    s2 = 2 sigma^2 makes both forms agree pointwise.
    """
    g2 = spec.gamma * spec.gamma
    s2 = spec.sigma * spec.sigma
    return RodieckParams(k1=ac / g2, k2=as_, s1=2.0 * g2 * s2, s2=2.0 * s2)


def generate_kernel(spec: DoGSpec) -> np.ndarray:
    """Sample the spec onto its integer pixel grid and rebalance.

    Evaluation uses unit amplitudes at integer offsets centered on the
    middle pixel; positive entries are then rescaled to sum to +0.5 and
    negative entries to -0.5 (exact zeros stay zero).  The OFF-polarity
    kernel is the elementwise negation of the ON kernel.

    Returns a float64 array of shape (size, size), row 0 at the top.

    Raises DegenerateKernelError when the sampled grid is single-signed,
    which happens for ratios pushing the sign change past the corner
    pixels (or numerically underflowed surrounds).
    """
    half = (spec.size - 1) // 2
    coords = np.arange(-half, half + 1, dtype=float)
    xx, yy = np.meshgrid(coords, coords, indexing="xy")
    on_spec = DoGSpec(spec.size, spec.gamma, Polarity.ON, spec.sigma)
    raw = dog_continuous(xx, yy, on_spec, 1.0, 1.0)

    positive = raw > 0
    negative = raw < 0
    if not positive.any() or not negative.any():
        raise DegenerateKernelError(
            f"kernel (size={spec.size}, gamma={spec.gamma}) sampled with a single sign"
        )

    kernel = raw.copy()
    kernel[positive] *= 0.5 / raw[positive].sum()
    kernel[negative] *= 0.5 / -raw[negative].sum()
    if spec.polarity is Polarity.OFF:
        kernel = -kernel
    return kernel
