"""bridgepan: band-agnostic pansharpening on a latent diffusion bridge.

Multi-band images with any supported band count are projected into a fixed
latent space through routed spectral experts, refined by reverse sampling of
a two-endpoint diffusion bridge with optional measurement-consistency
guidance, and projected back. The package also carries the Wald-protocol
evaluation stack (reference and no-reference metrics, spectral indices) and
four classical baselines, all on a small numpy-backed autodiff engine.
"""

from .bridge import (
    BridgeSchedule,
    bps_guidance,
    build_schedule,
    forward_sample,
    jensen_gap_bound,
    reverse_step_eps,
    reverse_step_z0,
    reverse_time_grid,
    simulate_sde,
)
from .errors import (
    BridgepanError,
    ConfigurationError,
    ContractViolation,
    DimensionError,
    DomainError,
    FormatError,
    NumericError,
)
from .interact import (
    DenoiserModel,
    UNetConfig,
    exp_kernel,
    geo_kernel,
    interaction_space_dim,
    sinusoidal_time_embed,
    truncated_hadamard_series,
)
from .metrics import (
    MetricReport,
    classical_pansharpen,
    index_agreement,
    no_reference_metrics,
    reference_metrics,
    spectral_index,
)
from .pipeline import (
    Adam,
    FusionModel,
    SampleConfig,
    TrainConfig,
    loss_ref,
    loss_total,
    sample,
    train,
)
from .raster import (
    Raster,
    WaldPair,
    degrade,
    export_png,
    gaussian_blur,
    import_png,
    make_wald_pair,
    read_raster,
    upsample_bicubic,
    write_raster,
)
from .spectral import (
    MappingTensor,
    MiTConfig,
    RouterState,
    SpectralProjector,
    load_balance_loss,
    project,
    unproject,
)
from .tensor import Prng, Tensor, conv2d, elementwise, mat_inverse, matmul, softmax

__version__ = "0.1.0"
