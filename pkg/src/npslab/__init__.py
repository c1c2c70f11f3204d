"""npslab: a finite-volume laboratory for two-species electrodiffusion
(Nernst-Planck/Poisson) coupled to Stokes flow on a rectangle, with
long-time structure diagnostics: envelope confinement, energy decay,
relative entropy, electroneutrality scaling, and linearized volume-
element growth rates.
"""

from .errors import (
    BundleRankDeficient,
    ConfigError,
    FormatError,
    GummelDivergence,
    IdenticalStates,
    InsufficientWindow,
    LinearSolveFailure,
    MaxPrincipleViolation,
    NewtonStall,
    NonConvergence,
    NonpositiveConcentration,
    NpslabError,
    RankDeficient,
    RetryWithSmallerDt,
)
from .grid import (
    BoundaryData,
    BoundaryTrace,
    Grid,
    ScalarField,
    VectorField,
    dirichlet_h1_inner,
    discrete_divergence,
    integrate,
    norms,
    scalar_h1semi_sq,
    vector_l2_sq,
    vector_v_inner,
)
from .elliptic import (
    SolverReport,
    dirichlet_eigenpairs,
    harmonic_extension,
    inv_dirichlet_laplacian,
    smallest_eigenvalues,
    solve_potential,
)
from .transport import (
    Params,
    State,
    electrochemical_potentials,
    make_state,
    np_step,
    sg_flux,
)
from .fluid import (
    StokesWorkspace,
    electric_force,
    species_electric_force,
    stokes_eigenpairs,
    stokes_step,
)
from .sim import (
    ManufacturedSources,
    RunResult,
    TimeControls,
    checkpoint_load,
    checkpoint_save,
    coupled_step,
    run,
)
from .diagnostics import (
    CSV_COLUMNS,
    History,
    dirichlet_quotient,
    dissipation_residual,
    electroneutrality_average,
    energy_F,
    linf_envelope,
    relative_entropy,
    sample_row,
)
from .tangent import (
    TangentBundle,
    TangentState,
    dimension_bound,
    evolve_bundle,
    orthonormalize,
    tangent_step,
    v0_inner,
    volume_growth_rates,
)
from .steady import (
    BoltzmannParams,
    SteadyState,
    boltzmann_params_from_bc,
    boltzmann_steady_state,
    solve_poisson_boltzmann,
    solve_steady_np,
    verify_ubstar,
)

__version__ = "0.1.0"
