"""Center-surround kernel toolkit.

Synthesis of difference-of-Gaussians kernels, seeded bank generation
with replayable manifests, cluster analysis of trained depthwise
kernels, and self-describing file formats for exchanging all of it.
"""

from .analytics import (
    AmbiguousLabelingError,
    ClusterLabel,
    ClusterReport,
    KernelSet,
    analyze,
    label_clusters,
    min_max_encode,
    proportion_table,
)
from .bank import (
    BankManifest,
    KernelBank,
    LayerSpec,
    PolarityMode,
    SamplerConfig,
    bank_for_layers,
    build_kernels,
    sample_bank,
)
from .dog import (
    DegenerateKernelError,
    DoGSpec,
    Polarity,
    RodieckParams,
    dog_continuous,
    dog_rodieck,
    generate_kernel,
    rodieck_params_for,
    sigma_from_gamma,
)
from .kmeans import InsufficientPointsError, KMeansConfig, kmeans, kmeans_inertia_history
from .render import Colormap, Normalize, RenderError, RenderSpec, render_histogram, render_kernel_grid
from .selfcheck import CheckResult, run_selfcheck

__version__ = "0.1.0"

__all__ = [
    "AmbiguousLabelingError",
    "BankManifest",
    "CheckResult",
    "ClusterLabel",
    "ClusterReport",
    "Colormap",
    "DegenerateKernelError",
    "DoGSpec",
    "InsufficientPointsError",
    "KMeansConfig",
    "KernelBank",
    "KernelSet",
    "LayerSpec",
    "Normalize",
    "Polarity",
    "PolarityMode",
    "RenderError",
    "RenderSpec",
    "RodieckParams",
    "SamplerConfig",
    "analyze",
    "bank_for_layers",
    "build_kernels",
    "dog_continuous",
    "dog_rodieck",
    "generate_kernel",
    "kmeans",
    "kmeans_inertia_history",
    "label_clusters",
    "min_max_encode",
    "proportion_table",
    "render_histogram",
    "render_kernel_grid",
    "rodieck_params_for",
    "run_selfcheck",
    "sample_bank",
    "sigma_from_gamma",
    "__version__",
]
