"""Derivative estimation by smoothing-kernel convolution, applied to inverse
PDE parameter recovery from sparse noisy grid data."""

from .backend import BACKEND, HAS_NUMBA
from .kernels import (
    DiscreteStencil,
    KernelFamily,
    MollifierKernel,
    biharmonic_stencil,
    discretize,
    laplacian_stencil,
)
from .grids import GridField, InteriorMask, read_binary, read_csv, write_binary, write_csv
from .calculus import (
    convergence_sweep,
    fit_error_envelope,
    laplacian,
    loglog_slope,
    mollify,
    mollify_adjoint,
)
from .network import (
    FourierEmbedding,
    GradientTape,
    NeuralField,
    build_network,
    load_checkpoint,
    save_checkpoint,
)
from .optim import (
    AdamState,
    CosineSchedule,
    adam_step,
    default_schedule,
    load_adam_state,
    save_adam_state,
)
from .residuals import (
    LossBreakdown,
    PdeProblem,
    ProblemKind,
    SampleMask,
    forward_ode_problem,
    heat_problem,
    langevin_problem,
    reaction_diffusion_problem,
    residual_heat,
    residual_langevin,
    residual_reaction_diffusion,
    separable_lambda,
    total_loss,
)
from .synth import (
    HeatSpec,
    LangevinSpec,
    RdSpec,
    simulate_heat,
    simulate_langevin,
    simulate_reaction_diffusion,
    sparse_sample,
)
from .imaging import PointCloud, SmootherConfig, synthesize_point_cloud, to_phase_fields, watson_smooth
from .metrics import aggregate_runs, noise_trend_correlation, pearson
from .training import forward_toy_solve, train
from .accounting import ResourceCounters, track

__version__ = "0.1.0"
