"""Two-stage compressive-sensing image reconstruction: shearlet subband
sparsity plus (re)weighted anisotropic TV, solved by split Bregman, with a
partial radial Fourier sampling simulator and quality metrics."""

from .metrics import PHANTOM_KINDS, QualityReport, phantom, quality_report, relerr, relerr_ratio, snr
from .prox import EDGE_STOP_KINDS, EdgeStopFn, WeightField, build_weights, edge_stop_eval, shrink
from .sampling import (
    FormatError,
    Measurement,
    SamplingMask,
    add_noise,
    adjoint_sample,
    load_mask,
    load_measurement,
    radial_mask,
    sample,
    save_mask,
    save_measurement,
    zero_filled_spectrum,
)
from .shearlet import ShearletSystem, SubbandStack, adjoint, analyze, build_system
from .solver import (
    GAMMA_MAX,
    DivergenceError,
    Precomputed,
    SolverParams,
    SolverState,
    precompute,
    realize,
    stage1,
    stage2,
    stage2_inner,
    u_update,
    validate_params,
    zero_state,
)
from .spectral import (
    AXES,
    HORIZONTAL,
    VERTICAL,
    DiffSymbol,
    diff_adjoint,
    diff_apply,
    diff_symbol,
    forward_fft,
    inverse_fft,
)

__version__ = "0.1.0"
