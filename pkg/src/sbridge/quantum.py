"""Time-dependent Schrodinger solver and its stochastic-mechanics companions.

Evolution uses the implicit midpoint (Cayley/Crank-Nicolson) scheme with
homogeneous Dirichlet walls: it preserves the discrete norm exactly and a
negative step is exactly inverse to a positive one. On top of the evolved
wavefunctions sit the current/osmotic drift decomposition, the terminal
reconditioning of a wavefunction path on a new terminal density, the
log-ratio transport residual, the region-conditioning (collapse) operator,
and the gradient-action diagnostic.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    BoundaryMassWarning,
    GridMismatch,
    SingularSolve,
    SupportViolation,
    TerminalMismatch,
    ZeroProbabilityRegion,
)
from .grid import (
    ComplexField,
    DensityField,
    Grid1D,
    ScalarField,
    _gradient_values,
    integrate,
    write_field_csv,
)

#: relative probability-density floor below which a point counts as a node
NODE_FLOOR = 1e-12

#: per-step tolerance on relative probability mass at the walls
WALL_MASS_TOL = 1e-10


@dataclass(frozen=True)
class QuantumModel:
    """Particle of mass m in potential V(x) with action constant hbar."""

    hbar: float
    m: float
    potential: ScalarField
    grid: Grid1D

    def __post_init__(self):
        if not (self.hbar > 0 and self.m > 0):
            raise ValueError("need hbar > 0 and m > 0")
        if self.potential.grid != self.grid:
            raise GridMismatch("potential lives on a different grid")

    @property
    def sigma2(self) -> float:
        """Diffusion coefficient hbar/m of the associated diffusion."""
        return self.hbar / self.m

    @classmethod
    def free(cls, grid: Grid1D, hbar: float = 1.0, m: float = 1.0) -> "QuantumModel":
        return cls(hbar, m, ScalarField(grid, np.zeros(grid.n_points)), grid)

    def matches(self, other: "QuantumModel") -> bool:
        return (
            self.grid == other.grid
            and self.hbar == other.hbar
            and self.m == other.m
            and np.array_equal(self.potential.values, other.potential.values)
        )


def _dirichlet_apply_h(model: QuantumModel, values: np.ndarray) -> np.ndarray:
    """Hamiltonian action -(hbar^2/2m) L + V with zero ghost points at the walls.

    This is the same stencil the Cayley step factorizes, so the quadratic
    form <psi, H psi> is conserved exactly along the evolution.
    """
    h = model.grid.h
    c = model.hbar**2 / (2.0 * model.m * h**2)
    out = (2.0 * c + model.potential.values) * values
    out[:-1] -= c * values[1:]
    out[1:] -= c * values[:-1]
    return out


def crank_nicolson_step(psi: ComplexField, model: QuantumModel, dt: float) -> ComplexField:
    """One implicit-midpoint step of duration dt (negative dt runs backward).

    Solves (I + i dt/(2 hbar) H) psi' = (I - i dt/(2 hbar) H) psi with the
    tridiagonal Dirichlet Hamiltonian H; the step is exactly unitary in the
    uniform discrete norm and step(-dt) inverts step(+dt) exactly.
    """
    if psi.grid != model.grid:
        raise GridMismatch("state and model grids differ")
    if dt == 0:
        raise ValueError("need a nonzero time step")
    n = model.grid.n_points
    h = model.grid.h
    c = model.hbar**2 / (2.0 * model.m * h**2)
    theta = 1j * dt / (2.0 * model.hbar)
    diag_h = 2.0 * c + model.potential.values

    rhs = psi.values - theta * _dirichlet_apply_h(model, psi.values)

    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = theta * (-c)      # superdiagonal of (I + theta H)
    ab[1, :] = 1.0 + theta * diag_h
    ab[2, :-1] = theta * (-c)     # subdiagonal
    try:
        out = solve_banded((1, 1), ab, rhs)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - not reachable for dt real
        raise SingularSolve(str(exc)) from exc
    return ComplexField(model.grid, out)


@dataclass(frozen=True)
class WavefunctionPath:
    """Unit-norm states stored on an increasing time grid."""

    times: np.ndarray
    states: tuple
    model: QuantumModel

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.shape[0] != len(self.states):
            raise ValueError("need one state per time")
        if times.shape[0] > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        for k, s in enumerate(self.states):
            if s.grid != self.model.grid:
                raise GridMismatch("state grid differs from model grid")
            nrm = norm_l2(s)
            if abs(nrm - 1.0) > 1e-8:
                raise ValueError(f"state {k} has norm {nrm!r}, expected 1")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", tuple(self.states))

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t1(self) -> float:
        return float(self.times[-1])

    def state_at(self, t: float) -> ComplexField:
        span = max(self.times[-1] - self.times[0], 1.0)
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * span:
            raise ValueError(f"t={t} not stored on the path")
        return self.states[i]

    def density_at(self, t: float) -> DensityField:
        psi = self.state_at(t)
        return DensityField(self.model.grid, np.abs(psi.values) ** 2, mass_tol=1e-6)

    def export(self, directory) -> None:
        """Per-time CSV states plus a JSON manifest with norms and node counts."""
        os.makedirs(directory, exist_ok=True)
        node_counts, norms, files = [], [], []
        for k, (t, s) in enumerate(zip(self.times, self.states)):
            name = f"state_{k:04d}.csv"
            write_field_csv(os.path.join(directory, name), s)
            rho = np.abs(s.values) ** 2
            node_counts.append(int(np.count_nonzero(rho <= NODE_FLOOR * rho.max())))
            norms.append(norm_l2(s))
            files.append(name)
        manifest = {
            "times": self.times.tolist(),
            "hbar": self.model.hbar,
            "m": self.model.m,
            "grid": {
                "x_min": self.model.grid.x_min,
                "x_max": self.model.grid.x_max,
                "n_points": self.model.grid.n_points,
            },
            "norms": norms,
            "node_counts": node_counts,
            "files": files,
        }
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)


def norm_l2(psi: ComplexField) -> float:
    """Quadrature L2 norm sqrt(integral |psi|^2 dx)."""
    return float(np.sqrt(np.dot(psi.grid.weights, np.abs(psi.values) ** 2)))


def normalize_wavefunction(psi: ComplexField) -> ComplexField:
    nrm = norm_l2(psi)
    if nrm == 0:
        raise ZeroProbabilityRegion("cannot normalize the zero state")
    return ComplexField(psi.grid, psi.values / nrm)


def evolve(
    psi: ComplexField,
    model: QuantumModel,
    t_from: float,
    t_to: float,
    n_steps: int,
) -> WavefunctionPath:
    """Propagate over [t_from, t_to] storing all n_steps + 1 states.

    Direction follows the sign of t_to - t_from; states are stored in
    increasing-time order either way. A zero-duration request returns the
    input as a single-state path.
    """
    if n_steps < 1:
        raise ValueError("need n_steps >= 1")
    if t_to == t_from:
        return WavefunctionPath(np.array([t_from]), (psi,), model)
    dt = (t_to - t_from) / n_steps
    w0, w1 = model.grid.weights[0], model.grid.weights[-1]
    states = [psi]
    wall_warned = False
    for _ in range(n_steps):
        psi = crank_nicolson_step(psi, model, dt)
        if not wall_warned:
            wall = w0 * abs(psi.values[0]) ** 2 + w1 * abs(psi.values[-1]) ** 2
            if wall > WALL_MASS_TOL:
                warnings.warn(
                    f"probability mass {wall:.2e} at the walls exceeds "
                    f"{WALL_MASS_TOL:.0e}; reflections will contaminate the run",
                    BoundaryMassWarning,
                    stacklevel=2,
                )
                wall_warned = True
        states.append(psi)
    times = t_from + dt * np.arange(n_steps + 1)
    if dt < 0:
        times = times[::-1]
        states = states[::-1]
    return WavefunctionPath(times, tuple(states), model)


def _complex_gradient(values: np.ndarray, h: float) -> np.ndarray:
    return _gradient_values(values.real, h) + 1j * _gradient_values(values.imag, h)


@dataclass(frozen=True)
class DriftDecomposition:
    """Current (v) and osmotic (u) drifts with their combinations.

    beta = v + u and gamma = v - u are the forward/backward drifts; the
    complex drift is v - i u, stored as (vq_re, vq_im) = (v, -u). mask marks
    points safely away from nodes; flagged points carry zeros.
    """

    v: ScalarField
    u: ScalarField
    beta: ScalarField
    gamma: ScalarField
    vq_re: ScalarField
    vq_im: ScalarField
    mask: np.ndarray


def drifts(psi: ComplexField, model: QuantumModel, node_floor: float = NODE_FLOOR) -> DriftDecomposition:
    """Current/osmotic decomposition of the drift of the |psi|^2 diffusion.

    u = (hbar/2m) d/dx log|psi|^2 and v = (hbar/m) Im(psi'/psi); both are
    computed from derivatives of the state itself, never from an unwrapped
    phase. Points with |psi|^2 at or below node_floor times the peak are
    masked out and set to zero.
    """
    if psi.grid != model.grid:
        raise GridMismatch("state and model grids differ")
    grid = model.grid
    rho = np.abs(psi.values) ** 2
    mask = rho > node_floor * rho.max()

    log_rho = np.log(np.maximum(rho, np.finfo(float).tiny))
    u_vals = (model.hbar / (2.0 * model.m)) * _gradient_values(log_rho, grid.h)

    safe_psi = np.where(mask, psi.values, 1.0)
    grad_psi = _complex_gradient(psi.values, grid.h)
    v_vals = (model.hbar / model.m) * np.imag(grad_psi / safe_psi)

    u_vals = np.where(mask, u_vals, 0.0)
    v_vals = np.where(mask, v_vals, 0.0)
    mk = lambda a: ScalarField(grid, a)
    return DriftDecomposition(
        v=mk(v_vals),
        u=mk(u_vals),
        beta=mk(v_vals + u_vals),
        gamma=mk(v_vals - u_vals),
        vq_re=mk(v_vals),
        vq_im=mk(-u_vals),
        mask=mask,
    )


def quantum_bridge(path: WavefunctionPath, rho1: DensityField) -> WavefunctionPath:
    """Recondition a wavefunction path on a new terminal density.

    The terminal state is replaced by sqrt(rho1 / |psi(t1)|^2) * psi(t1) --
    same phase, new amplitude, with no phase ever extracted -- and evolved
    backward to t0 under the same model. SupportViolation is raised when
    rho1 places more than negligible mass (1e-10) over the node region of
    the reference state; points where the reference density is not
    representable at all contribute zero.
    """
    if rho1.grid != path.model.grid:
        raise GridMismatch("terminal density grid differs from model grid")
    grid = path.model.grid
    psi1 = path.states[-1]
    rho = np.abs(psi1.values) ** 2
    node = rho <= NODE_FLOOR * rho.max()
    stray_mass = float(np.dot(grid.weights[node], rho1.values[node])) if node.any() else 0.0
    if stray_mass > 1e-10:
        raise SupportViolation(
            f"terminal density carries mass {stray_mass:.3e} where the "
            "reference state vanishes"
        )
    # replace the amplitude pointwise wherever the reference density is
    # representable, so the identity case stays exact to roundoff
    dead = rho < 1e-250
    ratio = np.where(dead, 0.0, rho1.values / np.where(dead, 1.0, rho))
    tilde1 = ComplexField(grid, np.sqrt(ratio) * psi1.values)
    n_steps = max(len(path.times) - 1, 1)
    return evolve(tilde1, path.model, path.t1, path.t0, n_steps)


def hjb_residual(
    path: WavefunctionPath,
    tilde_path: WavefunctionPath,
    terminal_tol: float = 1e-10,
) -> float:
    """Space-time L2 residual of the log-ratio transport equation.

    With r = tilde_psi / psi, the log-ratio solves the verification equation
    exactly when (d/dt + v_q d/dx - i hbar/(2m) d2/dx2) r = 0; the residual
    of that identity, divided by r, is evaluated with central time
    differences and the grid's spatial stencils on interior points away from
    nodes of either state. Also asserts the terminal ratio is real positive
    (phase invariance at t1) within terminal_tol.
    """
    if not path.model.matches(tilde_path.model):
        raise GridMismatch("paths evolve under different models")
    if path.times.shape != tilde_path.times.shape or not np.allclose(
        path.times, tilde_path.times, rtol=0, atol=1e-12 * max(1.0, abs(path.t1))
    ):
        raise ValueError("paths must share the same time grid")
    model = path.model
    grid = model.grid
    h = grid.h
    n_times = path.times.shape[0]
    if n_times < 3:
        raise ValueError("need at least 3 stored times for the time stencil")

    def masked_ratio(k):
        pv = path.states[k].values
        tv = tilde_path.states[k].values
        rho_p = np.abs(pv) ** 2
        rho_t = np.abs(tv) ** 2
        mask = (rho_p > NODE_FLOOR * rho_p.max()) & (rho_t > NODE_FLOOR * rho_t.max())
        # divide wherever the reference is representable; the mask only decides
        # which points enter the norm, so stencils never see an artificial cliff
        live = rho_p > 0.0
        r = np.where(live, tv / np.where(live, pv, 1.0), 0.0)
        return r, mask & live

    # terminal condition: ratio real and positive where defined
    r_T, mask_T = masked_ratio(n_times - 1)
    phase_defect = float(np.max(np.abs(np.angle(r_T[mask_T])))) if mask_T.any() else 0.0
    if phase_defect > terminal_tol:
        raise TerminalMismatch(
            f"terminal log-ratio has imaginary part {phase_defect:.3e} "
            f"(tolerance {terminal_tol:.0e})"
        )

    coeff = 1j * model.hbar / (2.0 * model.m)
    total = 0.0
    interior = np.zeros(grid.n_points, dtype=bool)
    interior[1:-1] = True
    for k in range(1, n_times - 1):
        dt = 0.5 * (path.times[k + 1] - path.times[k - 1])
        r_prev, m_prev = masked_ratio(k - 1)
        r_here, m_here = masked_ratio(k)
        r_next, m_next = masked_ratio(k + 1)
        mask = m_prev & m_here & m_next & interior

        psi_v = path.states[k].values
        safe_psi = np.where(m_here, psi_v, 1.0)
        vq = -1j * (model.hbar / model.m) * _complex_gradient(psi_v, h) / safe_psi

        dr_dt = (r_next - r_prev) / (path.times[k + 1] - path.times[k - 1])
        dr_dx = _complex_gradient(r_here, h)
        d2 = np.empty_like(r_here)
        d2[1:-1] = (r_here[:-2] - 2 * r_here[1:-1] + r_here[2:]) / h**2
        d2[0] = d2[-1] = 0.0

        res = (dr_dt + vq * dr_dx - coeff * d2) / np.where(mask, r_here, 1.0)
        total += dt * float(np.dot(grid.weights[mask], np.abs(res[mask]) ** 2))
    return float(np.sqrt(total))


def _merge_regions(regions):
    regs = sorted((float(a), float(b)) for a, b in regions)
    merged = []
    for a, b in regs:
        if b < a:
            raise ValueError(f"region [{a}, {b}] is reversed")
        if merged and a <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], b))
        else:
            merged.append((a, b))
    return merged


def collapse(psi: ComplexField, regions) -> tuple[ComplexField, float]:
    """Condition a state on the region union D: (chi_D psi / ||chi_D psi||, p1).

    regions is one (a, b) pair or an iterable of pairs. p1, the probability
    of finding the particle in D, is the trapezoid integral of |psi|^2 over
    each region (region-edge grid points half-weighted); the collapsed state
    is exactly zero outside D and normalized in the grid's L2 norm.
    """
    if np.ndim(regions) == 1:
        regions = [tuple(regions)]
    merged = _merge_regions(regions)
    grid = psi.grid
    x = grid.points
    tol = 1e-9 * grid.h
    rho = np.abs(psi.values) ** 2

    mask = np.zeros(grid.n_points, dtype=bool)
    p1 = 0.0
    for a, b in merged:
        inside = (x >= a - tol) & (x <= b + tol)
        mask |= inside
        idx = np.nonzero(inside)[0]
        if idx.shape[0] >= 2:
            seg = rho[idx]
            p1 += grid.h * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
    if not mask.any() or p1 <= 0.0:
        raise ZeroProbabilityRegion(f"regions {merged} carry no probability mass")

    chi_psi = np.where(mask, psi.values, 0.0)
    nrm = np.sqrt(float(np.dot(grid.weights, np.abs(chi_psi) ** 2)))
    return ComplexField(grid, chi_psi / nrm), float(p1)


def gradient_norm_sq(psi: ComplexField) -> float:
    """Squared L2 norm of the spatial derivative, integral of |psi'|^2 dx."""
    g = _complex_gradient(psi.values, psi.grid.h)
    return float(np.dot(psi.grid.weights, np.abs(g) ** 2))


def finite_action(path: WavefunctionPath) -> float:
    """Time integral (trapezoid) of the gradient norm along the path.

    Always finite on a grid; its stability under refinement is the check
    that the underlying state has finite action.
    """
    values = np.array([gradient_norm_sq(s) for s in path.states])
    if path.times.shape[0] == 1:
        return float(values[0])
    return float(np.trapezoid(values, path.times))


def energy(psi: ComplexField, model: QuantumModel) -> float:
    """Expected energy <psi, H psi> with the evolution's own Dirichlet stencil.

    Using the same stencil the Cayley step factorizes makes this exactly
    conserved along evolve for a time-independent potential.
    """
    if psi.grid != model.grid:
        raise GridMismatch("state and model grids differ")
    h_re = _dirichlet_apply_h(model, psi.values.real)
    h_im = _dirichlet_apply_h(model, psi.values.imag)
    return float(np.dot(model.grid.weights,
                        psi.values.real * h_re + psi.values.imag * h_im))
