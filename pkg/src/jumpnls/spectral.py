"""Periodic grids, the free Schrodinger propagator, and every norm used downstream.

The spatial domain is the periodic box [-L/2, L/2)^d with d in {1, 2}; it stands
in for the whole space at desk scale, so all estimates computed on it are
finite-horizon empirical quantities, not torus theorems.  The free group
S_t = exp(it*Laplacian) is realized exactly as the Fourier multiplier
exp(-i|k|^2 t), which makes it a grid isometry to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "Grid",
    "NormSeries",
    "AdmissiblePair",
    "make_grid",
    "free_propagate",
    "l2_norm",
    "lr_norm",
    "inner_product",
    "y_norm",
    "y_norm_series",
    "check_admissible",
    "admissible_p",
    "field_from_modes",
    "save_field",
    "load_field",
]

_TIME_TOL = 1e-12


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid: n nodes per dimension on a box of side box_length."""

    d: int
    n: int
    box_length: float

    @property
    def spacing(self) -> float:
        return self.box_length / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def n_nodes(self) -> int:
        return self.n**self.d

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Signed wavenumbers 2*pi*m/L per dimension, in FFT ordering."""
        return 2.0 * math.pi * np.fft.fftfreq(self.n, d=self.spacing)

    @cached_property
    def k_squared(self) -> np.ndarray:
        k2 = self.wavenumbers**2
        if self.d == 1:
            return k2
        return k2[:, None] + k2[None, :]

    @cached_property
    def coordinates(self) -> np.ndarray:
        """Node coordinates per dimension, centered: x_i = -L/2 + i*spacing."""
        return -0.5 * self.box_length + self.spacing * np.arange(self.n)

    def coordinate_arrays(self) -> tuple[np.ndarray, ...]:
        """Coordinate arrays broadcastable to a field's shape."""
        x = self.coordinates
        if self.d == 1:
            return (x,)
        return (x[:, None], x[None, :])

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape, dtype=np.complex128)


def make_grid(d: int, n: int, box_length: float) -> Grid:
    """Build a validated grid; n must be a power of two >= 8 and d in {1, 2}."""
    if d not in (1, 2):
        raise ValueError(f"dimension must be 1 or 2, got {d}")
    if not isinstance(n, (int, np.integer)) or n < 8 or (n & (n - 1)) != 0:
        raise ValueError(f"n must be a power of two >= 8, got {n}")
    if not (box_length > 0 and math.isfinite(box_length)):
        raise ValueError(f"box_length must be positive and finite, got {box_length}")
    return Grid(int(d), int(n), float(box_length))


def _require_finite(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u)
    if not np.all(np.isfinite(u)):
        raise ValueError("field contains non-finite entries")
    return u


def free_propagate(u: np.ndarray, t: float, grid: Grid) -> np.ndarray:
    """Apply S_t, the exact free flow, as the multiplier exp(-i|k|^2 t)."""
    u = _require_finite(u)
    if u.shape != grid.shape:
        raise ValueError(f"field shape {u.shape} does not match grid {grid.shape}")
    phase = np.exp(-1j * grid.k_squared * float(t))
    return np.fft.ifftn(np.fft.fftn(u) * phase)


def l2_norm(u: np.ndarray, grid: Grid) -> float:
    return math.sqrt(grid.spacing**grid.d * float(np.vdot(u, u).real))


def lr_norm(u: np.ndarray, r: float, grid: Grid) -> float:
    """Rectangle-rule spatial L^r norm; r = inf means max modulus.

    r >= 1 is accepted: conjugate exponents of admissible pairs land in [1, 2]
    and are needed by the inhomogeneous estimator denominators.
    """
    if math.isinf(r):
        return float(np.max(np.abs(u))) if np.size(u) else 0.0
    if r < 1:
        raise ValueError(f"r must be >= 1 or inf, got {r}")
    a = np.abs(np.asarray(u))
    return float((grid.spacing**grid.d * np.sum(a**r)) ** (1.0 / r))


def inner_product(u: np.ndarray, v: np.ndarray, grid: Grid) -> complex:
    """Discrete L^2 pairing <u, v> with conjugation on the first slot."""
    return complex(grid.spacing**grid.d * np.vdot(u, v))


@dataclass
class NormSeries:
    """Time-indexed L^2 and L^r norm samples of one trajectory.

    Times are nondecreasing; a repeated time carries the pre-jump value first
    and the post-jump value second, which is how cadlag trajectories are kept.
    """

    times: np.ndarray
    l2_values: np.ndarray
    lr_values: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.l2_values = np.asarray(self.l2_values, dtype=float)
        self.lr_values = np.asarray(self.lr_values, dtype=float)
        if not (len(self.times) == len(self.l2_values) == len(self.lr_values)):
            raise ValueError("times and value arrays must have equal length")
        if len(self.times) == 0:
            raise ValueError("empty series")
        if np.any(np.diff(self.times) < 0):
            raise ValueError("times must be nondecreasing")
        if np.any(self.l2_values < 0) or np.any(self.lr_values < 0):
            raise ValueError("norm values must be nonnegative")


def y_norm(series: NormSeries, t: float, p: float, r: float | None = None) -> float:
    """Discrete Y_t norm: sup of L^2 up to t plus the L^p-in-time L^r norm.

    The time integral uses the left-endpoint rule on the stored samples, the
    natural quadrature for piecewise-constant cadlag data.  `r` is metadata
    only; the spatial norm is whatever the series carries.
    """
    times = series.times
    tol = _TIME_TOL * max(1.0, abs(t))
    if t < times[0] - tol or t > times[-1] + tol:
        raise ValueError(f"t={t} outside stored series range [{times[0]}, {times[-1]}]")
    mask = times <= t + tol
    sup_l2 = float(np.max(series.l2_values[mask]))
    if math.isinf(p):
        return sup_l2 + float(np.max(series.lr_values[mask]))
    widths = np.clip(np.minimum(times[1:], t) - times[:-1], 0.0, None)
    integral = float(np.sum(series.lr_values[:-1] ** p * widths))
    return sup_l2 + integral ** (1.0 / p)


def y_norm_series(series: NormSeries, p: float) -> np.ndarray:
    """Running Y norm evaluated at every stored sample time (vectorized)."""
    sup_run = np.maximum.accumulate(series.l2_values)
    if math.isinf(p):
        return sup_run + np.maximum.accumulate(series.lr_values)
    widths = np.diff(series.times)
    acc = np.concatenate(([0.0], np.cumsum(series.lr_values[:-1] ** p * widths)))
    return sup_run + acc ** (1.0 / p)


def check_admissible(p: float, r: float, d: int, tol: float = 1e-9) -> bool:
    """True iff (p, r) satisfies the dispersive scaling relation for dimension d."""
    if not (p >= 2 - tol and r >= 2 - tol):
        return False
    if d == 2 and p == 2 and math.isinf(r):
        return False
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    inv_r = 0.0 if math.isinf(r) else 1.0 / r
    return abs(2.0 * inv_p + d * inv_r - d / 2.0) <= tol


def admissible_p(alpha: float, d: int) -> float:
    """Temporal exponent paired with r = alpha + 1 by the scaling relation."""
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    return 4.0 * (alpha + 1.0) / (d * (alpha - 1.0))


@dataclass(frozen=True)
class AdmissiblePair:
    """Exponent pair validated against the scaling relation at construction."""

    p: float
    r: float
    d: int

    def __post_init__(self) -> None:
        if not check_admissible(self.p, self.r, self.d):
            raise ValueError(f"({self.p}, {self.r}) is not admissible for d={self.d}")


def field_from_modes(grid: Grid, modes, coeffs) -> np.ndarray:
    """Synthesize sum_m c_m exp(i k_m . x) on centered coordinates.

    Mode indices are signed integers (tuples in 2-d); the synthesis is exact
    and independent of the grid resolution, which is what the refinement
    checks rely on.
    """
    xs = grid.coordinate_arrays()
    u = grid.zeros()
    base = 2.0 * math.pi / grid.box_length
    for m, c in zip(modes, coeffs):
        if grid.d == 1:
            m_tuple = (int(m),) if np.isscalar(m) else (int(m[0]),)
        else:
            m_tuple = (int(m[0]), int(m[1]))
        if any(abs(mi) > grid.n // 2 for mi in m_tuple):
            raise ValueError(f"mode {m_tuple} not representable on n={grid.n}")
        phase = sum(base * mi * xi for mi, xi in zip(m_tuple, xs))
        u = u + c * np.exp(1j * phase)
    return u


def save_field(path, u: np.ndarray, grid: Grid) -> None:
    """Write a field snapshot: header `d n box_length`, then `re im` per node."""
    u = np.asarray(u, dtype=np.complex128)
    if u.shape != grid.shape:
        raise ValueError("field shape does not match grid")
    flat = u.ravel(order="C")
    lines = [f"{grid.d} {grid.n} {grid.box_length:.17g}"]
    lines.extend(f"{z.real:.17g} {z.imag:.17g}" for z in flat)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_field(path) -> tuple[np.ndarray, Grid]:
    """Read a field snapshot written by save_field; returns (field, grid)."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise ValueError("malformed snapshot header")
        d, n, box_length = int(header[0]), int(header[1]), float(header[2])
        grid = make_grid(d, n, box_length)
        data = np.loadtxt(fh, dtype=float)
    data = np.atleast_2d(data)
    if data.shape != (grid.n_nodes, 2):
        raise ValueError(f"expected {grid.n_nodes} value pairs, got {data.shape}")
    u = (data[:, 0] + 1j * data[:, 1]).reshape(grid.shape, order="C")
    return u, grid
