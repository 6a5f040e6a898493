"""Schrodinger-system solver and derived bridge quantities.

Solves the coupled harmonic/co-harmonic pair with prescribed marginal
boundary conditions by alternating rescaling against the marginals
(iterative proportional fitting on the transition kernel), iterated in the
log domain for stability. Exposes the bridge's time-t density, its forward
drift, the one-marginal half bridge, and exact time reversal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .entropy import kl_divergence
from .errors import (
    DegeneratePotential,
    InfiniteEntropy,
    MassDefectWarning,
    NoConvergence,
    NonOverlappingSupport,
    TimeMismatch,
)
from .grid import (
    DensityField,
    ScalarField,
    _gradient_values,
    integrate,
    normalize,
    require_same_grid,
)
from .kernels import (
    TransitionKernel,
    log_propagate_backward,
    log_propagate_forward,
    propagate_backward,
    propagate_forward,
)

#: marginals are floored at this fraction of their peak before taking logs
DENSITY_FLOOR = 1e-30


def floor_density(rho: DensityField, rel_floor: float = DENSITY_FLOOR) -> DensityField:
    """Floor a density at rel_floor times its peak and renormalize.

    The solver assumes everywhere-positive marginals; the floor enforces that
    premise explicitly instead of failing on exact zeros.
    """
    floored = np.maximum(rho.values, rel_floor * rho.values.max())
    return normalize(ScalarField(rho.grid, floored))


@dataclass(frozen=True)
class BridgeProblem:
    """Two prescribed marginals over a reference kernel.

    prior_forward_drift is the reference model's forward drift b(x, t); None
    means the Wiener prior (zero drift). Marginals are floored to be strictly
    positive at construction.
    """

    rho0: DensityField
    rho1: DensityField
    kernel: TransitionKernel
    sigma2: float
    prior_forward_drift: object = None

    def __post_init__(self):
        require_same_grid(self.rho0, self.rho1, self.kernel)
        if not self.sigma2 > 0:
            raise ValueError(f"need sigma2 > 0, got {self.sigma2}")
        object.__setattr__(self, "rho0", floor_density(self.rho0))
        object.__setattr__(self, "rho1", floor_density(self.rho1))

    @property
    def t0(self) -> float:
        return self.kernel.s

    @property
    def t1(self) -> float:
        return self.kernel.t


@dataclass(frozen=True)
class BridgeSolution:
    """Potential pair solving the coupled marginal system, stored as logs.

    log_phi1 is log phi(., t1), log_phihat0 is log phihat(., t0); the other
    two boundary potentials are reconstructed by kernel propagation.
    """

    problem: BridgeProblem
    log_phi1: np.ndarray
    log_phihat0: np.ndarray
    iterations: int
    residual: float
    residual_history: np.ndarray = field(repr=False, default=None)
    gauge_shift: float = 0.0

    @property
    def phi1(self) -> ScalarField:
        return ScalarField(self.problem.kernel.grid, np.exp(self.log_phi1))

    @property
    def phihat0(self) -> ScalarField:
        return ScalarField(self.problem.kernel.grid, np.exp(self.log_phihat0))

    def marginal_residuals(self) -> tuple[float, float]:
        """L1 defects of phi*phihat against rho0 and rho1 at the endpoints."""
        k = self.problem.kernel
        w = k.grid.weights
        log_phi0 = log_propagate_backward(k, self.log_phi1)
        log_phihat1 = log_propagate_forward(k, self.log_phihat0)
        r0 = np.exp(log_phi0 + self.log_phihat0)
        r1 = np.exp(self.log_phi1 + log_phihat1)
        res0 = float(np.dot(w, np.abs(r0 - self.problem.rho0.values)))
        res1 = float(np.dot(w, np.abs(r1 - self.problem.rho1.values)))
        return res0, res1


def sinkhorn_potentials(matrix, rho0_mass, rho1_mass, tol, max_iter):
    """Linear-domain alternating scaling on a raw folded-kernel matrix.

    Array-level core used for hand-checkable toy problems and as an
    independent cross-check of the log-domain solver; production solves go
    through solve_schrodinger_system. Marginals are mass vectors (already
    multiplied by quadrature weights). Returns (phi1, phihat0, iterations,
    residual) with the L1 residual measured on the mass vectors.
    """
    matrix = np.asarray(matrix, dtype=float)
    phihat0 = np.asarray(rho0_mass, dtype=float).copy()
    phi1 = np.ones_like(rho1_mass, dtype=float)
    for it in range(1, max_iter + 1):
        phihat1 = matrix @ phihat0
        res = float(np.abs(phi1 * phihat1 - rho1_mass).sum())
        if res < tol:
            return phi1, phihat0, it, res
        phi1 = rho1_mass / phihat1
        phi0 = matrix.T @ phi1
        phihat0 = rho0_mass / phi0
    raise NoConvergence(max_iter, res)


def solve_schrodinger_system(
    problem: BridgeProblem, tol: float = 1e-9, max_iter: int = 5000
) -> BridgeSolution:
    """Fit the potential pair to the marginal boundary conditions.

    Log-domain iterative proportional fitting: alternate between enforcing
    the terminal marginal (rescale phi1) and the initial one (rescale
    phihat0) until both L1 marginal defects fall below tol. The returned
    gauge is fixed so the two log-potentials at t1 have equal quadrature
    means, making outputs reproducible; all observables are gauge-free.

    Raises NoConvergence with the last residual when max_iter is exhausted
    and NonOverlappingSupport if the potentials degenerate.
    """
    k = problem.kernel
    w = k.grid.weights
    log_rho0 = np.log(problem.rho0.values)
    log_rho1 = np.log(problem.rho1.values)

    log_phihat0 = log_rho0.copy()
    log_phi1 = np.zeros_like(log_rho1)
    history = []
    iterations = 0
    residual = np.inf
    for iterations in range(1, max_iter + 1):
        log_phihat1 = log_propagate_forward(k, log_phihat0)
        residual = float(np.dot(w, np.abs(np.exp(log_phi1 + log_phihat1)
                                          - problem.rho1.values)))
        history.append(residual)
        if residual < tol:
            break
        log_phi1 = log_rho1 - log_phihat1
        log_phi0 = log_propagate_backward(k, log_phi1)
        log_phihat0 = log_rho0 - log_phi0
        if not (np.all(np.isfinite(log_phi1)) and np.all(np.isfinite(log_phihat0))):
            raise NonOverlappingSupport(
                "potentials degenerated; marginal supports are incompatible "
                "with the reference kernel"
            )
    else:
        raise NoConvergence(max_iter, residual)

    # gauge: split the t1 factorization symmetrically between the potentials
    wsum = w.sum()
    log_phihat1 = log_propagate_forward(k, log_phihat0)
    shift = 0.5 * float(np.dot(w, log_phihat1 - log_phi1) / wsum)
    return BridgeSolution(
        problem=problem,
        log_phi1=log_phi1 + shift,
        log_phihat0=log_phihat0 - shift,
        iterations=iterations,
        residual=residual,
        residual_history=np.asarray(history),
        gauge_shift=shift,
    )


def _check_partition(sol: BridgeSolution, t, k_left, k_right):
    """Validate that the optional kernels split [t0, t1] exactly at t."""
    p = sol.problem
    span = max(1.0, abs(p.t1 - p.t0))
    at_t0 = abs(t - p.t0) <= 1e-12 * span
    at_t1 = abs(t - p.t1) <= 1e-12 * span
    if not at_t0 and not at_t1:
        if k_left is None or k_right is None:
            raise TimeMismatch(
                f"interior time {t} needs both sub-kernels over [{p.t0}, {t}] and [{t}, {p.t1}]"
            )
    if k_left is not None:
        require_same_grid(p.kernel, k_left)
        if abs(k_left.s - p.t0) > 1e-12 * span or abs(k_left.t - t) > 1e-12 * span:
            raise TimeMismatch(f"left kernel spans [{k_left.s}, {k_left.t}], wanted [{p.t0}, {t}]")
    if k_right is not None:
        require_same_grid(p.kernel, k_right)
        if abs(k_right.s - t) > 1e-12 * span or abs(k_right.t - p.t1) > 1e-12 * span:
            raise TimeMismatch(f"right kernel spans [{k_right.s}, {k_right.t}], wanted [{t}, {p.t1}]")
    return at_t0, at_t1


def _log_potentials_at(sol: BridgeSolution, t, k_left, k_right):
    """(log phi(., t), log phihat(., t)) by propagating the stored endpoints."""
    p = sol.problem
    at_t0, at_t1 = _check_partition(sol, t, k_left, k_right)
    if at_t0:
        log_phi = log_propagate_backward(p.kernel, sol.log_phi1)
        log_phihat = sol.log_phihat0
    elif at_t1:
        log_phi = sol.log_phi1
        log_phihat = log_propagate_forward(p.kernel, sol.log_phihat0)
    else:
        log_phi = log_propagate_backward(k_right, sol.log_phi1)
        log_phihat = log_propagate_forward(k_left, sol.log_phihat0)
    return log_phi, log_phihat


def bridge_density(
    sol: BridgeSolution,
    t: float,
    k_left: TransitionKernel | None = None,
    k_right: TransitionKernel | None = None,
) -> DensityField:
    """Bridge density phi(., t) * phihat(., t); checked for unit mass, never rescaled.

    k_left spans [t0, t] and k_right spans [t, t1]; both may be omitted when t
    is an endpoint of the problem interval.
    """
    log_phi, log_phihat = _log_potentials_at(sol, t, k_left, k_right)
    values = np.exp(log_phi + log_phihat)
    out = DensityField(sol.problem.kernel.grid, values, mass_tol=None)
    mass = integrate(out)
    if abs(mass - 1.0) > 1e-6:
        warnings.warn(
            f"bridge density at t={t} has mass {mass!r}; "
            "domain truncation or unconverged potentials",
            MassDefectWarning,
            stacklevel=2,
        )
    return out


def bridge_drift(
    sol: BridgeSolution,
    t: float,
    k_right: TransitionKernel | None = None,
) -> ScalarField:
    """Forward drift of the bridge at time t: prior drift + sigma2 * grad log phi.

    k_right spans [t, t1] and may be omitted at the endpoints.
    """
    p = sol.problem
    span = max(1.0, abs(p.t1 - p.t0))
    if abs(t - p.t1) <= 1e-12 * span:
        log_phi = sol.log_phi1
    elif abs(t - p.t0) <= 1e-12 * span:
        log_phi = log_propagate_backward(p.kernel, sol.log_phi1)
    else:
        if k_right is None:
            raise TimeMismatch(f"interior time {t} needs the kernel over [{t}, {p.t1}]")
        require_same_grid(p.kernel, k_right)
        if abs(k_right.s - t) > 1e-12 * span or abs(k_right.t - p.t1) > 1e-12 * span:
            raise TimeMismatch(f"right kernel spans [{k_right.s}, {k_right.t}], wanted [{t}, {p.t1}]")
        log_phi = log_propagate_backward(k_right, sol.log_phi1)
    if not np.all(np.isfinite(log_phi)):
        raise DegeneratePotential(f"phi(., {t}) underflowed")
    grid = p.kernel.grid
    score = p.sigma2 * _gradient_values(log_phi, grid.h)
    if p.prior_forward_drift is not None:
        score = score + np.asarray(p.prior_forward_drift(grid.points, t), dtype=float)
    return ScalarField(grid, score)


@dataclass(frozen=True)
class HalfBridgeModel:
    """Reverse-time model after conditioning on a terminal density.

    The backward drift of the reference model is kept unchanged; only the
    terminal density is replaced. optimal_value is the attained relative
    entropy, the marginal divergence at t1.
    """

    backward_drift: object
    rho1: DensityField
    t0: float
    t1: float
    sigma2: float
    optimal_value: float


def half_bridge(
    prior_marginal_t1: DensityField,
    prior_backward_drift,
    rho1: DensityField,
    t0: float,
    t1: float,
    sigma2: float,
) -> HalfBridgeModel:
    """Condition a reference diffusion on a new terminal density only.

    The entropy-optimal update keeps the reference backward drift and swaps
    in rho1 at t1; the optimal value is the static divergence of rho1 from
    the reference terminal marginal. The result feeds sde.sample_backward.
    """
    require_same_grid(prior_marginal_t1, rho1)
    value = kl_divergence(rho1, prior_marginal_t1)
    if not np.isfinite(value):
        raise InfiniteEntropy(
            f"divergence of the observed terminal density is {value!r}"
        )
    return HalfBridgeModel(
        backward_drift=prior_backward_drift,
        rho1=rho1,
        t0=t0,
        t1=t1,
        sigma2=sigma2,
        optimal_value=value,
    )


def time_reverse(sol: BridgeSolution) -> BridgeSolution:
    """Bridge from rho1 back to rho0: swap the roles of the two potentials.

    Valid for a symmetric reference kernel (Wiener), for which forward and
    backward propagation coincide; then exchanging the potential pair solves
    the reversed problem at the same residual.
    """
    p = sol.problem
    k = p.kernel
    unfolded = k.matrix / k.grid.weights[None, :]
    asym = float(np.max(np.abs(unfolded - unfolded.T)))
    if asym > 1e-10 * float(np.max(unfolded)):
        raise ValueError("time reversal requires a symmetric reference kernel")
    reversed_problem = BridgeProblem(
        rho0=p.rho1,
        rho1=p.rho0,
        kernel=k,
        sigma2=p.sigma2,
        prior_forward_drift=p.prior_forward_drift,
    )
    return BridgeSolution(
        problem=reversed_problem,
        log_phi1=sol.log_phihat0.copy(),
        log_phihat0=sol.log_phi1.copy(),
        iterations=sol.iterations,
        residual=sol.residual,
        residual_history=sol.residual_history,
        gauge_shift=-sol.gauge_shift,
    )


def bridge_drift_fields(sol: BridgeSolution, times) -> list[ScalarField]:
    """Forward-drift fields of the bridge at the given interior/endpoint times.

    Builds the Wiener sub-kernels [t, t1] internally; intended for feeding a
    time-indexed drift into the samplers.
    """
    from .kernels import heat_kernel

    p = sol.problem
    grid = p.kernel.grid
    span = max(1.0, abs(p.t1 - p.t0))
    fields = []
    for t in np.asarray(times, dtype=float):
        if abs(t - p.t1) <= 1e-12 * span or abs(t - p.t0) <= 1e-12 * span:
            fields.append(bridge_drift(sol, t))
        else:
            fields.append(bridge_drift(sol, t, heat_kernel(grid, t, p.t1, p.sigma2)))
    return fields


def wiener_marginal_flow(rho0: DensityField, times, sigma2: float) -> list[DensityField]:
    """Marginals of the Wiener prior started from rho0 along a time grid.

    Propagates step by step, reusing the one-step kernel while the spacing
    stays constant.
    """
    from .kernels import heat_kernel

    times = np.asarray(times, dtype=float)
    out = [rho0]
    step_kernel = None
    current = rho0
    for k in range(times.shape[0] - 1):
        dt = times[k + 1] - times[k]
        if step_kernel is None or abs((step_kernel.t - step_kernel.s) - dt) > 1e-12 * dt:
            step_kernel = heat_kernel(rho0.grid, 0.0, dt, sigma2)
        nxt = propagate_forward(step_kernel, current)
        current = DensityField(rho0.grid, np.maximum(nxt.values, 0.0), mass_tol=None)
        out.append(current)
    return out


def wiener_backward_drift_fields(rho0: DensityField, times, sigma2: float) -> list[ScalarField]:
    """Backward drifts -sigma2 * grad log rho(., t) of the Wiener prior from rho0.

    By the forward/backward duality with zero forward drift, this is the drift
    that a reverse-time sampler of the prior (or of a half bridge over it)
    must use.
    """
    from .grid import log_gradient

    flows = wiener_marginal_flow(rho0, times, sigma2)
    return [
        ScalarField(rho.grid, -sigma2 * log_gradient(rho).values) for rho in flows
    ]


# re-exported propagation helpers so callers need only this module for bridges
__all__ = [
    "BridgeProblem",
    "BridgeSolution",
    "HalfBridgeModel",
    "bridge_density",
    "bridge_drift",
    "floor_density",
    "half_bridge",
    "sinkhorn_potentials",
    "solve_schrodinger_system",
    "time_reverse",
    "propagate_forward",
    "propagate_backward",
    "bridge_drift_fields",
    "wiener_marginal_flow",
    "wiener_backward_drift_fields",
]
