"""Positivity-preserving lattice chains for drift-diffusion dynamics.

Builds continuous-time Markov chains on box grids whose rates discretize
an overdamped Langevin generator, certifies entropy/curvature decay
constants, and checks the certified bounds against exact evolution,
optimal transport distances and Monte Carlo sampling.
"""

from .lattice import (
    CellIndex,
    GridSpec,
    Move,
    NULL_MOVE,
    Potential,
    axis_moves,
    build_grid,
    cell_average,
    cell_average_all,
    check_diag_dominance,
    move_row,
    neighbor_table,
)
from .chain import (
    GridMeasure,
    RateTable,
    check_detailed_balance,
    check_flux_identity,
    check_path_independence,
    export_rates_csv,
    fd_rates,
    fv_rates,
    import_rates_csv,
    invariant_measure,
    tv_distance,
)
from .functional import (
    PhiFamily,
    apply_adjoint,
    apply_generator,
    as_phi,
    dirichlet_form,
    entropy_production,
    fisher_information,
    phi_entropy,
)
from .coupling import (
    CouplingTable,
    DecayCertificate,
    KeyInequalityPlan,
    decay_certificate,
    kappa_arrays,
    kappa_pm,
    key_inequality_plan,
    neighbor_coupling,
    product_coupling,
    verify_conforti_conditions,
    verify_key_inequality,
)
from .evolve import (
    DiscreteDecayReport,
    EntropyCurve,
    TransitionKernel,
    build_kernel,
    discrete_decay_report,
    entropy_decay_curve,
    semigroup_apply,
)
from .transport import (
    ContractionReport,
    HypothesisError,
    TransportProblem,
    contraction_report,
    wasserstein,
)
from .simulate import (
    ALGORITHM,
    CoupledPairSeries,
    SimConfig,
    TrajectoryBatch,
    bin_points,
    empirical_measure,
    sample_coupled_pair,
    sample_ctmc,
    sample_reflected_sde,
)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHM",
    "CellIndex",
    "ContractionReport",
    "CoupledPairSeries",
    "CouplingTable",
    "DecayCertificate",
    "DiscreteDecayReport",
    "EntropyCurve",
    "GridMeasure",
    "GridSpec",
    "HypothesisError",
    "KeyInequalityPlan",
    "Move",
    "NULL_MOVE",
    "PhiFamily",
    "Potential",
    "RateTable",
    "SimConfig",
    "TrajectoryBatch",
    "TransitionKernel",
    "TransportProblem",
    "__version__",
    "apply_adjoint",
    "apply_generator",
    "as_phi",
    "axis_moves",
    "bin_points",
    "build_grid",
    "build_kernel",
    "cell_average",
    "cell_average_all",
    "check_detailed_balance",
    "check_diag_dominance",
    "check_flux_identity",
    "check_path_independence",
    "contraction_report",
    "decay_certificate",
    "dirichlet_form",
    "discrete_decay_report",
    "empirical_measure",
    "entropy_decay_curve",
    "entropy_production",
    "export_rates_csv",
    "fd_rates",
    "fisher_information",
    "fv_rates",
    "import_rates_csv",
    "invariant_measure",
    "kappa_arrays",
    "kappa_pm",
    "key_inequality_plan",
    "move_row",
    "neighbor_coupling",
    "neighbor_table",
    "phi_entropy",
    "product_coupling",
    "sample_coupled_pair",
    "sample_ctmc",
    "sample_reflected_sde",
    "semigroup_apply",
    "tv_distance",
    "verify_conforti_conditions",
    "verify_key_inequality",
    "wasserstein",
]
