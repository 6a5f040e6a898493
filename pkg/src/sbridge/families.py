"""Named analytic families of densities and wavefunctions.

These cover everything the experiment configurations and the test batteries
need without external data files; CSV-backed fields are accepted through the
same descriptor interface.
"""

from __future__ import annotations

import numpy as np

from .grid import (
    ComplexField,
    DensityField,
    Grid1D,
    ScalarField,
    integrate,
    normalize,
    read_complex_field,
    read_scalar_field,
)
from .quantum import normalize_wavefunction


def gaussian_density(grid: Grid1D, mean: float, var: float) -> DensityField:
    if not var > 0:
        raise ValueError(f"need var > 0, got {var}")
    x = grid.points
    return normalize(ScalarField(grid, np.exp(-((x - mean) ** 2) / (2.0 * var))))


def indicator_density(grid: Grid1D, a: float, b: float) -> DensityField:
    if not b > a:
        raise ValueError(f"need b > a, got [{a}, {b}]")
    x = grid.points
    return normalize(ScalarField(grid, ((x >= a) & (x <= b)).astype(float)))


def mixture_density(grid: Grid1D, components) -> DensityField:
    """components: iterable of (weight, descriptor dict)."""
    total = np.zeros(grid.n_points)
    for weight, spec in components:
        if weight < 0:
            raise ValueError("mixture weights must be nonnegative")
        total += weight * make_density(grid, spec).values
    return normalize(ScalarField(grid, total))


def gaussian_packet(
    grid: Grid1D, center: float = 0.0, sigma0: float = 1.0, k0: float = 0.0
) -> ComplexField:
    """Minimum-uncertainty packet exp(-(x-c)^2/(4 sigma0^2) + i k0 x), unit norm.

    |psi|^2 is a Gaussian density with standard deviation sigma0; k0 is the
    carrier wavenumber (group velocity hbar k0 / m).
    """
    if not sigma0 > 0:
        raise ValueError(f"need sigma0 > 0, got {sigma0}")
    x = grid.points
    psi = np.exp(-((x - center) ** 2) / (4.0 * sigma0**2) + 1j * k0 * x)
    return normalize_wavefunction(ComplexField(grid, psi))


def box_mode(grid: Grid1D, n_mode: int = 1) -> ComplexField:
    """n-th Dirichlet eigenstate sin(n pi (x - x_min) / L) of the domain box."""
    if n_mode < 1:
        raise ValueError("need n_mode >= 1")
    x = grid.points
    length = grid.x_max - grid.x_min
    vals = np.sin(n_mode * np.pi * (x - grid.x_min) / length)
    return normalize_wavefunction(ComplexField(grid, vals.astype(complex)))


def box_mode_energy(grid: Grid1D, n_mode: int, hbar: float, m: float) -> float:
    k = n_mode * np.pi / (grid.x_max - grid.x_min)
    return hbar**2 * k**2 / (2.0 * m)


def make_density(grid: Grid1D, spec) -> DensityField:
    """Build a density from a descriptor dict (or pass one through)."""
    if isinstance(spec, DensityField):
        return spec
    kind = spec.get("kind")
    if kind == "gaussian":
        return gaussian_density(grid, spec["mean"], spec["var"])
    if kind == "indicator":
        return indicator_density(grid, spec["a"], spec["b"])
    if kind == "mixture":
        return mixture_density(
            grid, [(c["weight"], c["component"]) for c in spec["components"]]
        )
    if kind == "csv":
        f = read_scalar_field(spec["path"])
        if f.grid != grid:
            raise ValueError(f"{spec['path']}: grid does not match the configured domain")
        return normalize(f)
    raise ValueError(f"unknown density kind {kind!r}")


def make_wavefunction(grid: Grid1D, spec) -> ComplexField:
    if isinstance(spec, ComplexField):
        return spec
    kind = spec.get("kind")
    if kind == "gaussian_packet":
        return gaussian_packet(
            grid,
            center=spec.get("center", 0.0),
            sigma0=spec.get("sigma0", 1.0),
            k0=spec.get("k0", 0.0),
        )
    if kind == "box_mode":
        return box_mode(grid, spec.get("n_mode", 1))
    if kind == "csv":
        f = read_complex_field(spec["path"])
        if f.grid != grid:
            raise ValueError(f"{spec['path']}: grid does not match the configured domain")
        return normalize_wavefunction(f)
    raise ValueError(f"unknown wavefunction kind {kind!r}")


def make_potential(grid: Grid1D, spec) -> ScalarField:
    if spec is None:
        return ScalarField(grid, np.zeros(grid.n_points))
    if isinstance(spec, ScalarField):
        return spec
    kind = spec.get("kind")
    if kind == "zero":
        return ScalarField(grid, np.zeros(grid.n_points))
    if kind == "harmonic":
        x = grid.points
        return ScalarField(grid, 0.5 * spec.get("k", 1.0) * (x - spec.get("center", 0.0)) ** 2)
    if kind == "csv":
        f = read_scalar_field(spec["path"])
        if f.grid != grid:
            raise ValueError(f"{spec['path']}: grid does not match the configured domain")
        return f
    raise ValueError(f"unknown potential kind {kind!r}")


def make_drift(spec):
    """Analytic drift families: zero or affine const + slope * x."""
    if spec is None or spec.get("kind") == "zero":
        return lambda x, t: np.zeros_like(np.asarray(x, dtype=float))
    if spec.get("kind") == "affine":
        const = float(spec.get("const", 0.0))
        slope = float(spec.get("slope", 0.0))
        return lambda x, t: const + slope * np.asarray(x, dtype=float)
    raise ValueError(f"unknown drift kind {spec.get('kind')!r}")


def density_moments(rho: DensityField) -> tuple[float, float]:
    """(mean, variance) under trapezoid quadrature."""
    x = rho.grid.points
    mean = float(np.dot(rho.grid.weights, x * rho.values))
    var = float(np.dot(rho.grid.weights, (x - mean) ** 2 * rho.values))
    return mean, var
