"""chaoslab: simulation and verification laboratory for weakly interacting
particle systems on the periodic unit box.

Simulates the N-particle diffusion with pairwise interaction, solves the
nonlocal Fokker-Planck limit equation pseudo-spectrally, and runs Monte Carlo
experiments for Wasserstein concentration of the empirical measure and the
1/N decay of the one-particle marginal KL divergence.
"""

from .entropy import (
    FiniteMeasurePair,
    binned_kl_estimate,
    dv_check,
    fisher_information_grid,
    relative_entropy,
    relative_entropy_grid,
)
from .harness import (
    ConcentrationHarness,
    ConcentrationRecord,
    ExperimentPlan,
    EntropySweep,
    default_plan,
    emit_results,
    entropy_decay_sweep,
    fit_all_rates,
    fit_exponential_rate,
    read_results,
    run_cell,
    wilson_interval,
)
from .kernels import (
    DriftSpec,
    KernelSpec,
    PrimitiveMatrix,
    eval_kernel,
    eval_kernel_grid,
    mollify,
    primitive_matrix,
    wminus_norm_surrogate,
    zero_kernel,
)
from .meanfield import (
    BlowUpError,
    GridDensity,
    SolveResult,
    convolve_kernel,
    cosine_density,
    density_from_function,
    read_density_csv,
    solve_pde,
    step_pde,
    uniform_density,
    write_density_csv,
)
from .metrics import (
    EmpiricalMeasure,
    RateQuery,
    SinkhornError,
    rate_a_p,
    wasserstein_1d,
    wasserstein_exact_small,
    wasserstein_sinkhorn,
)
from .particles import (
    ParticleConfig,
    SimParams,
    drift_field,
    em_step,
    evolve,
    sample_initial,
    simulate,
)
from .torus import min_displacement, torus_distance, wrap

__version__ = "0.1.0"
