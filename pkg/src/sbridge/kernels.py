"""Discretized Markov transition kernels over the Wiener reference process.

A kernel over [s, t] stores the n x n matrix K[i, j] = p(s, x_j, t, x_i) * w_j
with the quadrature weight folded into the columns, so propagation is a plain
matrix-vector product and composition is a matrix product. The adjoint
(backward) action refolds the weights.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DegenerateDenominator,
    GridMismatch,
    InvalidInterval,
    TimeMismatch,
    TruncationWarning,
)
from .grid import Grid1D, ScalarField, require_same_grid

#: row-sum defect beyond which a kernel is considered truncated by the domain
TRUNCATION_BUDGET = 1e-4


@dataclass(frozen=True, eq=False)
class TransitionKernel:
    """Markov transition density over [s, t] with column quadrature weights folded in."""

    grid: Grid1D
    s: float
    t: float
    matrix: np.ndarray

    def __post_init__(self):
        if not self.t > self.s:
            raise InvalidInterval(f"need t > s, got [{self.s}, {self.t}]")
        matrix = np.asarray(self.matrix, dtype=float)
        n = self.grid.n_points
        if matrix.shape != (n, n):
            raise ValueError(f"kernel matrix must be {n}x{n}")
        matrix = matrix.copy()
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @cached_property
    def log_matrix(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            lm = np.log(self.matrix)
        lm.setflags(write=False)
        return lm

    def density(self, y: float, x: float) -> float:
        """Unfolded transition density p(s, y, t, x)."""
        j = self.grid.index_of(y)
        i = self.grid.index_of(x)
        return float(self.matrix[i, j] / self.grid.weights[j])

    def row_sums(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    def write_csv(self, path) -> None:
        """Debug dump: header row of grid points, then the folded matrix."""
        from .grid import FLOAT_FMT

        with open(path, "w") as fh:
            fh.write(",".join(FLOAT_FMT % x for x in self.grid.points) + "\n")
            for row in self.matrix:
                fh.write(",".join(FLOAT_FMT % v for v in row) + "\n")


def heat_kernel(grid: Grid1D, s: float, t: float, sigma2: float) -> TransitionKernel:
    """Gaussian kernel [2 pi sigma2 (t-s)]^(-1/2) exp(-(x-y)^2 / (2 sigma2 (t-s))).

    Emits TruncationWarning when rows with a full 6-sigma margin from the walls
    still lose more than TRUNCATION_BUDGET of their mass to the domain cut.
    """
    if not t > s:
        raise InvalidInterval(f"need t > s, got [{s}, {t}]")
    if not sigma2 > 0:
        raise ValueError(f"need sigma2 > 0, got {sigma2}")
    var = sigma2 * (t - s)
    x = grid.points
    diff = x[:, None] - x[None, :]
    dens = np.exp(-(diff**2) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
    kernel = TransitionKernel(grid, s, t, dens * grid.weights[None, :])
    _check_truncation(kernel, np.sqrt(var))
    return kernel


def _check_truncation(kernel: TransitionKernel, width: float) -> None:
    x = kernel.grid.points
    margin = 6.0 * width
    interior = (x >= x[0] + margin) & (x <= x[-1] - margin)
    if not interior.any():
        warnings.warn(
            f"domain [{x[0]}, {x[-1]}] is narrower than 12 kernel widths "
            f"({margin:.3g} each side); all rows are truncated",
            TruncationWarning,
            stacklevel=3,
        )
        return
    worst = kernel.row_sums()[interior].min()
    if worst < 1.0 - TRUNCATION_BUDGET:
        warnings.warn(
            f"interior kernel row sums down to {worst:.6f}; domain truncation "
            f"exceeds budget {TRUNCATION_BUDGET}",
            TruncationWarning,
            stacklevel=3,
        )


def compose(k1: TransitionKernel, k2: TransitionKernel) -> TransitionKernel:
    """Chapman-Kolmogorov composition of [s, t] and [t, u] into [s, u]."""
    if k1.grid != k2.grid:
        raise GridMismatch("kernels live on different grids")
    if abs(k1.t - k2.s) > 1e-12 * max(1.0, abs(k1.t)):
        raise TimeMismatch(f"k1 ends at {k1.t} but k2 starts at {k2.s}")
    return TransitionKernel(k1.grid, k1.s, k2.t, k2.matrix @ k1.matrix)


def propagate_forward(kernel: TransitionKernel, f: ScalarField) -> ScalarField:
    """Co-harmonic propagation: (K f)(x) = integral p(s, y, t, x) f(y) dy."""
    require_same_grid(kernel, f)
    return ScalarField(kernel.grid, kernel.matrix @ f.values)


def propagate_backward(kernel: TransitionKernel, g: ScalarField) -> ScalarField:
    """Harmonic propagation: (K* g)(x) = integral p(s, x, t, y) g(y) dy.

    Adjoint of propagate_forward under the quadrature pairing; the column
    weights are refolded accordingly.
    """
    require_same_grid(kernel, g)
    w = kernel.grid.weights
    return ScalarField(kernel.grid, (kernel.matrix.T @ (w * g.values)) / w)


def log_propagate_forward(kernel: TransitionKernel, log_f: np.ndarray) -> np.ndarray:
    """propagate_forward in the log domain (max-stabilized log-sum-exp)."""
    return logsumexp(kernel.log_matrix + log_f[None, :], axis=1)


def log_propagate_backward(kernel: TransitionKernel, log_g: np.ndarray) -> np.ndarray:
    """propagate_backward in the log domain."""
    logw = np.log(kernel.grid.weights)
    return logsumexp(kernel.log_matrix.T + (logw + log_g)[None, :], axis=1) - logw


def two_sided_profile(
    k_st: TransitionKernel, k_tu: TransitionKernel, x: float, z: float
) -> np.ndarray:
    """q(s, x; t, y; u, z) over the whole middle grid y for fixed pins x, z."""
    if k_st.grid != k_tu.grid:
        raise GridMismatch("kernels live on different grids")
    if abs(k_st.t - k_tu.s) > 1e-12 * max(1.0, abs(k_st.t)):
        raise TimeMismatch(f"kernels do not abut: {k_st.t} vs {k_tu.s}")
    g = k_st.grid
    jx = g.index_of(x)
    iz = g.index_of(z)
    w = g.weights
    # p(s,x,u,z) from the composed kernel, but only the single entry needed
    denom = float(k_tu.matrix[iz, :] @ k_st.matrix[:, jx]) / w[jx]
    if denom <= 0 or not np.isfinite(denom):
        raise DegenerateDenominator(f"p(s,{x},u,{z}) = {denom!r}")
    p_xy = k_st.matrix[:, jx] / w[jx]
    p_yz = k_tu.matrix[iz, :] / w
    return p_xy * p_yz / denom


def two_sided_density(
    k_st: TransitionKernel, k_tu: TransitionKernel, x: float, y: float, z: float
) -> float:
    """Pinned (reciprocal) transition density q(s, x; t, y; u, z)."""
    profile = two_sided_profile(k_st, k_tu, x, z)
    return float(profile[k_st.grid.index_of(y)])
