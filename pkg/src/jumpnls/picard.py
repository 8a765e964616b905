"""Mild-form fixed-point solver on a frozen jump path.

The iteration realizes the Duhamel map

    Phi(Z)(t) = S_t x - i*lam * int_0^t S_{t-s} theta(Y_s(Z)/R) |Z(s)|^(alpha-1) Z(s) ds + M(t)

on the same time grid the split-step integrator uses, with the time integral
by the left-endpoint rule and the stochastic convolution M computed once and
shared across iterations.  A converged fixed point is an independent
realization of the same mild equation the differential integrator
approximates, which is what makes the two-method distance a meaningful
verification instrument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import SolverConfig, Trajectory, build_time_grid, theta_R
from .noise import JumpPath, NoiseModel, stochastic_convolution_series
from .spectral import Grid, l2_norm

__all__ = ["PicardReport", "picard_solve", "trajectory_y_distance"]


@dataclass
class PicardReport:
    """Residual history of one fixed-point run; converged means the last
    residual fell below tol in the space-time norm."""

    iterates_kept: int
    residuals: list[float]
    converged: bool
    trajectory: Trajectory

    @property
    def ratios(self) -> list[float]:
        return [
            self.residuals[i + 1] / self.residuals[i]
            for i in range(len(self.residuals) - 1)
            if self.residuals[i] > 0
        ]


def _row_norms(fields: np.ndarray, spacing_pow: float, r: float) -> tuple[np.ndarray, np.ndarray]:
    """L^2 and L^r norms of every time slice at once."""
    flat = fields.reshape(len(fields), -1)
    a2 = np.abs(flat) ** 2
    l2 = np.sqrt(spacing_pow * a2.sum(axis=1))
    if math.isinf(r):
        lr = np.abs(flat).max(axis=1)
    else:
        lr = (spacing_pow * (a2 ** (r / 2.0)).sum(axis=1)) ** (1.0 / r)
    return l2, lr


def _y_of_series(times: np.ndarray, l2: np.ndarray, lr: np.ndarray, p: float) -> np.ndarray:
    sup_run = np.maximum.accumulate(l2)
    if math.isinf(p):
        return sup_run + np.maximum.accumulate(lr)
    acc = np.concatenate(([0.0], np.cumsum(lr[:-1] ** p * np.diff(times))))
    return sup_run + acc ** (1.0 / p)


def _y_total(times: np.ndarray, l2: np.ndarray, lr: np.ndarray, p: float) -> float:
    if math.isinf(p):
        return float(np.max(l2) + np.max(lr))
    integral = float(np.sum(lr[:-1] ** p * np.diff(times)))
    return float(np.max(l2)) + integral ** (1.0 / p)


def picard_solve(
    x: np.ndarray,
    path: JumpPath,
    model: NoiseModel,
    cfg: SolverConfig,
    R: float | None = None,
    n_max: int = 40,
    tol: float | None = None,
) -> PicardReport:
    """Iterate the truncated Duhamel map from Z_0 = S_t x + M(t) until the
    successive space-time distance drops below tol (default scale-invariant
    1e-10 * (1 + ||x||)).

    Non-convergence within n_max iterations is reported, not raised; callers
    may shrink T and retry.
    """
    grid = model.grid
    p, r = cfg.pair_for(grid.d)
    if R is None:
        R = cfg.truncation_R
    if tol is None:
        tol = 1e-10 * (1.0 + l2_norm(x, grid))

    x = np.asarray(x, dtype=np.complex128)
    in_horizon = (path.times > 0) & (path.times <= cfg.T)
    times = build_time_grid(cfg.T, cfg.dt, path.times[in_horizon])
    m = len(times)
    widths = np.diff(times)
    spacing_pow = grid.spacing**grid.d
    k2 = grid.k_squared

    lin_cache: dict[float, np.ndarray] = {}

    def lin(h: float) -> np.ndarray:
        mult = lin_cache.get(h)
        if mult is None:
            mult = np.exp(-1j * k2 * h)
            lin_cache[h] = mult
        return mult

    # Free evolution of the initial state at every grid time, by recursion.
    sx = np.empty((m,) + grid.shape, dtype=np.complex128)
    sx[0] = x
    cur_hat = np.fft.fftn(x)
    for kdx, h in enumerate(widths):
        cur_hat = cur_hat * lin(h)
        sx[kdx + 1] = np.fft.ifftn(cur_hat)

    # Stochastic convolution: computed once, bit-identical across iterations.
    mconv = stochastic_convolution_series(path, model, times, grid)

    z = sx + mconv
    residuals: list[float] = []
    converged = False
    for _ in range(n_max):
        l2_z, lr_z = _row_norms(z, spacing_pow, r)
        y_z = _y_of_series(times, l2_z, lr_z, p)
        thetas = theta_R(y_z, R) if math.isfinite(R) else np.ones(m)

        # Duhamel integral by left-endpoint recursion:
        # G_{k+1} = S_h (G_k + g_k * dt_k), g = theta * |Z|^(alpha-1) Z.
        g_prev = None
        duh = np.zeros_like(z)
        acc_hat = np.zeros(grid.shape, dtype=np.complex128)
        for kdx, h in enumerate(widths):
            g_prev = thetas[kdx] * np.abs(z[kdx]) ** (cfg.alpha - 1.0) * z[kdx]
            acc_hat = (acc_hat + np.fft.fftn(g_prev) * h) * lin(h)
            duh[kdx + 1] = np.fft.ifftn(acc_hat)

        z_new = sx - 1j * cfg.lam * duh + mconv
        diff = z_new - z
        l2_d, lr_d = _row_norms(diff, spacing_pow, r)
        residual = _y_total(times, l2_d, lr_d, p)
        residuals.append(residual)
        z = z_new
        if residual <= tol:
            converged = True
            break

    l2_z, lr_z = _row_norms(z, spacing_pow, r)
    y_z = _y_of_series(times, l2_z, lr_z, p)
    jump_mask = np.isin(times, path.times[in_horizon])
    traj = Trajectory(
        grid=grid,
        p=p,
        r=r,
        times=times,
        l2=l2_z,
        lr=lr_z,
        y=y_z,
        post_jump=jump_mask,
        jump_times=path.times[in_horizon].copy(),
        jump_atoms=path.atom_indices[in_horizon].copy(),
        fields=z,
    )
    return PicardReport(
        iterates_kept=len(residuals),
        residuals=residuals,
        converged=converged,
        trajectory=traj,
    )


def trajectory_y_distance(a: Trajectory, b: Trajectory) -> float:
    """Space-time norm of the difference of two field-storing trajectories.

    Both must carry fields; samples are matched on the cadlag (post-jump)
    values at shared times, so a split-step trajectory with duplicated jump
    samples compares cleanly against a mild-form one without them.
    """
    if a.fields is None or b.fields is None:
        raise ValueError("both trajectories must store fields")
    if a.p != b.p or a.grid is not b.grid and a.grid != b.grid:
        raise ValueError("trajectories live on different discretizations")

    def dedup(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
        keep = np.ones(len(traj.times), dtype=bool)
        keep[:-1] = np.diff(traj.times) > 0  # keep last sample of each time
        return traj.times[keep], traj.fields[keep]

    ta, fa = dedup(a)
    tb, fb = dedup(b)
    if len(ta) != len(tb) or not np.allclose(ta, tb, rtol=0, atol=1e-12):
        raise ValueError("trajectories sample different time grids")
    diff = fa - fb
    spacing_pow = a.grid.spacing**a.grid.d
    l2_d, lr_d = _row_norms(diff, spacing_pow, a.r)
    return _y_total(ta, l2_d, lr_d, a.p)
