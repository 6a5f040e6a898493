"""Forward and reverse-time Euler-Maruyama simulation and Monte Carlo checks.

Trajectories are generated from counter-based substreams (Philox keyed by the
master seed, one jump per path block) so ensembles are bit-reproducible and
blocks could run concurrently without changing the output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DriftBlowup,
    EmptyEnsemble,
    ExcessiveClamping,
    TimeNotStored,
)
from .grid import (
    DensityField,
    Grid1D,
    ScalarField,
    gradient,
    laplacian,
    log_gradient,
    normalize,
    require_same_grid,
)

#: paths per RNG substream block; fixed so results never depend on scheduling
BLOCK_SIZE = 16384

#: a run fails validation when more than this fraction of drift evaluations clamp
CLAMP_BUDGET = 1e-3


@dataclass(frozen=True)
class PathEnsemble:
    """Sampled trajectories on a common time grid.

    positions has shape (n_paths, n_times) and is stored in increasing-time
    order regardless of the simulation direction.
    """

    times: np.ndarray
    positions: np.ndarray
    sigma2: float
    seed: int
    direction: str

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.shape[0] < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be a strictly increasing grid")
        if self.positions.ndim != 2 or self.positions.shape[1] != times.shape[0]:
            raise ValueError("positions must be (n_paths, n_times)")
        if self.positions.shape[0] < 1:
            raise EmptyEnsemble("need n_paths >= 1")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("positions must be finite")
        if self.direction not in ("forward", "backward"):
            raise ValueError(f"unknown direction {self.direction!r}")
        object.__setattr__(self, "times", times)

    @property
    def n_paths(self) -> int:
        return self.positions.shape[0]

    def time_index(self, t: float) -> int:
        span = self.times[-1] - self.times[0]
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * span:
            raise TimeNotStored(f"t={t} not on the stored time grid")
        return i


class GridDrift:
    """Drift field sampled on a grid at stored times, evaluated by interpolation.

    Lookup is nearest-neighbor in time (the SDE step must line up with the
    storage grid) and linear in space. Positions outside the grid are clamped
    and counted; runs exceeding the clamp budget fail validation.
    """

    def __init__(self, times, fields):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.shape[0] != len(fields):
            raise ValueError("need one field per stored time")
        self.grid = require_same_grid(*fields)
        self.times = times
        self.table = np.stack([f.values for f in fields])
        self.n_eval = 0
        self.n_clamped = 0

    def _time_slot(self, t: float) -> int:
        if self.times.shape[0] == 1:
            return 0
        dt_store = np.min(np.diff(self.times))
        if t < self.times[0] - dt_store or t > self.times[-1] + dt_store:
            raise TimeNotStored(
                f"drift requested at t={t}, stored range "
                f"[{self.times[0]}, {self.times[-1]}]"
            )
        return int(np.argmin(np.abs(self.times - t)))

    def __call__(self, x, t):
        x = np.asarray(x, dtype=float)
        self.n_eval += x.size
        self.n_clamped += int(np.count_nonzero((x < self.grid.x_min) | (x > self.grid.x_max)))
        return np.interp(x, self.grid.points, self.table[self._time_slot(t)])

    @property
    def clamp_fraction(self) -> float:
        return self.n_clamped / self.n_eval if self.n_eval else 0.0


def _block_starts(n_paths: int):
    return range(0, n_paths, BLOCK_SIZE)


def _block_generator(seed: int, block_index: int) -> np.random.Generator:
    # jumped() advances the Philox counter by 2^128 per block: disjoint streams
    return np.random.Generator(np.random.Philox(key=seed).jumped(block_index + 1))


def _initial_positions(rho, u: np.ndarray) -> np.ndarray:
    """Inverse trapezoid-CDF sampling; piecewise-linear within cells."""
    grid = rho.grid
    cdf = np.concatenate([[0.0], np.cumsum(
        0.5 * grid.h * (rho.values[:-1] + rho.values[1:]))])
    cdf /= cdf[-1]
    return np.interp(u, cdf, grid.points)


def _drift_domain_width(drift):
    g = getattr(drift, "grid", None)
    return (g.x_max - g.x_min) if g is not None else None


def _check_clamping(drift, n_eval_before, n_clamped_before):
    if not isinstance(drift, GridDrift):
        return
    evals = drift.n_eval - n_eval_before
    clamped = drift.n_clamped - n_clamped_before
    if evals and clamped / evals > CLAMP_BUDGET:
        raise ExcessiveClamping(
            f"{clamped}/{evals} drift evaluations left the grid "
            f"(budget {CLAMP_BUDGET:.1e})"
        )


def _simulate(drift, rho_start, sigma2, times, n_paths, seed, backward: bool):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.shape[0] < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("times must be a strictly increasing grid")
    if n_paths < 1:
        raise EmptyEnsemble("need n_paths >= 1")
    sigma = np.sqrt(sigma2)
    n_times = times.shape[0]
    width = _drift_domain_width(drift)
    ev0 = getattr(drift, "n_eval", 0)
    cl0 = getattr(drift, "n_clamped", 0)

    positions = np.empty((n_paths, n_times))
    dts = np.diff(times)
    for b, start in enumerate(_block_starts(n_paths)):
        stop = min(start + BLOCK_SIZE, n_paths)
        rng = _block_generator(seed, b)
        x = _initial_positions(rho_start, rng.random(stop - start))
        if backward:
            positions[start:stop, -1] = x
            for k in range(n_times - 2, -1, -1):
                dt = dts[k]
                inc = -np.asarray(drift(x, times[k + 1]), dtype=float) * dt \
                    + sigma * np.sqrt(dt) * rng.standard_normal(x.shape[0])
                _check_increment(inc, width)
                x = x + inc
                positions[start:stop, k] = x
        else:
            positions[start:stop, 0] = x
            for k in range(n_times - 1):
                dt = dts[k]
                inc = np.asarray(drift(x, times[k]), dtype=float) * dt \
                    + sigma * np.sqrt(dt) * rng.standard_normal(x.shape[0])
                _check_increment(inc, width)
                x = x + inc
                positions[start:stop, k + 1] = x

    _check_clamping(drift, ev0, cl0)
    return PathEnsemble(
        times=times,
        positions=positions,
        sigma2=sigma2,
        seed=seed,
        direction="backward" if backward else "forward",
    )


def _check_increment(inc: np.ndarray, width):
    if not np.all(np.isfinite(inc)):
        raise DriftBlowup("non-finite Euler-Maruyama increment")
    if width is not None and float(np.max(np.abs(inc))) > width:
        raise DriftBlowup(
            f"increment {np.max(np.abs(inc)):.3g} exceeds domain width {width:.3g}"
        )


def sample_forward(beta, rho0: DensityField, sigma2, times, n_paths, seed) -> PathEnsemble:
    """Euler-Maruyama: x_{k+1} = x_k + beta(x_k, t_k) dt + sigma sqrt(dt) z_k.

    Initial positions are drawn from rho0 by inverting its trapezoid CDF.
    Identical arguments and seed give a bit-identical ensemble.
    """
    return _simulate(beta, rho0, sigma2, times, n_paths, seed, backward=False)


def sample_backward(gamma, rho1: DensityField, sigma2, times, n_paths, seed) -> PathEnsemble:
    """Reverse-time Euler-Maruyama from a terminal density.

    Steps x_k = x_{k+1} - gamma(x_{k+1}, t_{k+1}) dt + sigma sqrt(dt) z_k from
    the last time down to the first; positions are stored in increasing-time
    order with direction tag "backward".
    """
    return _simulate(gamma, rho1, sigma2, times, n_paths, seed, backward=True)


def empirical_density(ens: PathEnsemble, t: float, grid: Grid1D) -> DensityField:
    """Histogram over point-centered grid cells, normalized to unit trapezoid mass."""
    k = ens.time_index(t)
    x = np.clip(ens.positions[:, k], grid.x_min, grid.x_max)
    edges = np.concatenate([
        [grid.x_min - grid.h / 2],
        grid.points[:-1] + grid.h / 2,
        [grid.x_max + grid.h / 2],
    ])
    counts, _ = np.histogram(x, bins=edges)
    return normalize(ScalarField(grid, counts.astype(float)))


def duality_check(beta, gamma, rho: DensityField, sigma2, t: float = 0.0) -> float:
    """Sup-norm defect of beta - gamma = sigma2 * grad log rho over the density bulk.

    The bulk is where rho exceeds 1e-6 of its peak; the score is realized as
    the derivative of log rho, exact for Gaussian densities.
    """
    grid = rho.grid
    x = grid.points
    score = log_gradient(rho).values
    defect = (
        np.asarray(beta(x, t), dtype=float)
        - np.asarray(gamma(x, t), dtype=float)
        - sigma2 * score
    )
    bulk = rho.values > 1e-6 * rho.values.max()
    return float(np.max(np.abs(defect[bulk])))


@dataclass(frozen=True)
class GeneratorCheckResult:
    """Both sides of the Dynkin identity and their Monte Carlo discrepancy."""

    lhs: float
    rhs: float
    discrepancy: float
    std_error: float


def generator_check(f: ScalarField, ens: PathEnsemble, beta, sigma2) -> GeneratorCheckResult:
    """Dynkin/Ito consistency for a time-independent test function.

    Compares E[f(x(T)) - f(x(0))] against E of the time integral of
    (beta * f' + sigma2/2 * f''), both estimated on the same trajectories so
    the standard error applies to the per-path difference.
    """
    if ens.n_paths == 0:
        raise EmptyEnsemble("path ensemble has no trajectories")
    grid = f.grid
    fp = gradient(f).values
    fpp = laplacian(f).values
    xs = grid.points
    pos = ens.positions
    times = ens.times

    rhs_acc = np.zeros(ens.n_paths)
    for k in range(times.shape[0] - 1):
        dt = times[k + 1] - times[k]
        x = pos[:, k]
        drift = np.asarray(beta(x, times[k]), dtype=float)
        rhs_acc += (drift * np.interp(x, xs, fp)
                    + 0.5 * sigma2 * np.interp(x, xs, fpp)) * dt
    lhs_paths = np.interp(pos[:, -1], xs, f.values) - np.interp(pos[:, 0], xs, f.values)
    diff = lhs_paths - rhs_acc
    se = float(diff.std(ddof=1) / np.sqrt(ens.n_paths)) if ens.n_paths > 1 else float("nan")
    return GeneratorCheckResult(
        lhs=float(lhs_paths.mean()),
        rhs=float(rhs_acc.mean()),
        discrepancy=float(abs(diff.mean())),
        std_error=se,
    )


def empirical_energy(ens: PathEnsemble, drift) -> float:
    """Diagnostic E of the integral of drift^2 dt along the ensemble."""
    times = ens.times
    acc = np.zeros(ens.n_paths)
    for k in range(times.shape[0] - 1):
        dt = times[k + 1] - times[k]
        b = np.asarray(drift(ens.positions[:, k], times[k]), dtype=float)
        acc += b**2 * dt
    return float(acc.mean())
