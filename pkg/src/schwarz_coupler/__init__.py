"""Finite elements and Schwarz iterations for coupled local/nonlocal diffusion in 1D."""
from .assembly import AssembledSystem, FeSpace, assemble_pair_integral, assemble_system, export_coo
from .errors import AssemblyError, ConfigurationError, NotSPDError
from .geometry import Interval, Mesh1D, Partition1D, build_uniform_mesh, validate_partition
from .kernel import (
    KernelSpec,
    complement_moment,
    eval_kernel,
    kernel_mass,
    load_table_csv,
    region_moment,
    validate_kernel,
)
from .linsolve import BandedCholesky, SolveReport, cholesky_solve
from .schwarz import (
    IterationHistory,
    SchwarzConfig,
    check_monotone,
    estimate_rate,
    eval_energy,
    eval_H_norm,
    local_step,
    nonlocal_step,
    run_monolithic,
    run_multidomain_nonlocal,
    run_schwarz,
    verify_discrete_subsolution,
)

__version__ = "0.1.0"
