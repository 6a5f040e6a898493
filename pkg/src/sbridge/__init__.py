"""Classical and quantum Schrodinger bridges on uniform 1-D grids.

Classical side: heat-kernel transition matrices, the Fortet/Sinkhorn solver
for the two-marginal potential system, bridge densities and drifts, half
bridges, and Girsanov path-entropy bookkeeping. Quantum side: a norm- and
reversibility-exact Schrodinger solver, Nelson current/osmotic drifts, the
terminal reconditioning of a wavefunction path on a measured density, and
the region-conditioning (collapse) operator. Euler-Maruyama sampling closes
the loop between densities, drifts, and trajectories.
"""

from . import errors
from .bridge import (
    BridgeProblem,
    BridgeSolution,
    HalfBridgeModel,
    bridge_density,
    bridge_drift,
    bridge_drift_fields,
    floor_density,
    half_bridge,
    sinkhorn_potentials,
    solve_schrodinger_system,
    time_reverse,
    wiener_backward_drift_fields,
    wiener_marginal_flow,
)
from .entropy import (
    EntropyReport,
    kl_divergence,
    path_entropy_backward,
    path_entropy_forward,
)
from .families import (
    box_mode,
    box_mode_energy,
    gaussian_density,
    gaussian_packet,
    indicator_density,
    make_density,
    make_drift,
    make_potential,
    make_wavefunction,
    mixture_density,
    density_moments,
)
from .grid import (
    ComplexField,
    DensityField,
    Grid1D,
    ScalarField,
    gradient,
    integrate,
    l1_distance,
    laplacian,
    log_gradient,
    normalize,
    read_complex_field,
    read_scalar_field,
    sup_distance,
    write_field_csv,
)
from .kernels import (
    TransitionKernel,
    compose,
    heat_kernel,
    propagate_backward,
    propagate_forward,
    two_sided_density,
    two_sided_profile,
)
from .quantum import (
    DriftDecomposition,
    QuantumModel,
    WavefunctionPath,
    collapse,
    crank_nicolson_step,
    drifts,
    energy,
    evolve,
    finite_action,
    gradient_norm_sq,
    hjb_residual,
    norm_l2,
    normalize_wavefunction,
    quantum_bridge,
)
from .sde import (
    GeneratorCheckResult,
    GridDrift,
    PathEnsemble,
    duality_check,
    empirical_density,
    empirical_energy,
    generator_check,
    sample_backward,
    sample_forward,
)

__version__ = "0.1.0"
