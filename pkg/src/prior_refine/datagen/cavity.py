"""Laminar lid-driven cavity on the unit square, streamfunction-vorticity form.

Semi-implicit finite differences on a uniform collocated grid: explicit
centered advection, backward-Euler diffusion, Thom's wall vorticity lagged by
one substep. Both elliptic solves (Poisson for psi, Helmholtz for the
implicit diffusion step) are diagonal in the type-I sine basis, so each
substep costs a pair of DSTs instead of an iterative solve.

Array convention: shape (n, n), axis 0 is y (row 0 = bottom wall, row -1 =
moving lid), axis 1 is x. Grid spacing h = 1/(n-1).
"""

from __future__ import annotations

import numpy as np
from scipy.fft import dstn, idstn

from ..errors import InvalidArgumentError, NumericalInstabilityError
from .signals import InputSignal
from .types import FieldVideo

# CFL safety factors: advective limit and the cell-transit bound that keeps
# explicit centered advection stable against the implicit diffusion
_ADV_SAFETY = 0.4
_DIFF_SAFETY = 0.8


def _sine_eigenvalues(m: int, h: float) -> np.ndarray:
    """Eigenvalues of the 1-D Dirichlet second-difference operator, DST-I basis."""
    k = np.arange(1, m + 1)
    return (2.0 * np.cos(np.pi * k / (m + 1)) - 2.0) / h**2


def poisson_dirichlet(rhs: np.ndarray, h: float) -> np.ndarray:
    """Solve lap(u) = rhs on the interior grid with u = 0 on the boundary.

    `rhs` holds interior nodes only, shape (m, m); returns same shape.
    """
    m = rhs.shape[0]
    lam = _sine_eigenvalues(m, h)
    rhs_hat = dstn(rhs, type=1)
    u_hat = rhs_hat / (lam[:, None] + lam[None, :])
    return idstn(u_hat, type=1)


def helmholtz_dirichlet(rhs: np.ndarray, h: float, alpha: float) -> np.ndarray:
    """Solve (I - alpha*lap) u = rhs on the interior grid, u = 0 boundary."""
    m = rhs.shape[0]
    lam = _sine_eigenvalues(m, h)
    rhs_hat = dstn(rhs, type=1)
    u_hat = rhs_hat / (1.0 - alpha * (lam[:, None] + lam[None, :]))
    return idstn(u_hat, type=1)


def streamfunction_from_velocity(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Recover psi on the unit square from collocated velocity samples.

    Solves lap(psi) = du/dy - dv/dx (centered differences on the interior)
    with psi = 0 Dirichlet walls; the defining relations are u = dpsi/dy,
    v = -dpsi/dx.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 2:
        raise InvalidArgumentError(f"u/v must be equal-shape 2-D grids, got {u.shape} vs {v.shape}")
    if u.shape[0] < 3 or u.shape[1] != u.shape[0]:
        raise InvalidArgumentError(f"need a square grid of at least 3 nodes, got {u.shape}")
    if not (np.isfinite(u).all() and np.isfinite(v).all()):
        raise InvalidArgumentError("velocity samples must be finite")
    n = u.shape[0]
    h = 1.0 / (n - 1)
    du_dy = (u[2:, 1:-1] - u[:-2, 1:-1]) / (2 * h)
    dv_dx = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * h)
    psi = np.zeros_like(u)
    psi[1:-1, 1:-1] = poisson_dirichlet(du_dy - dv_dx, h)
    return psi


def velocity_from_streamfunction(psi: np.ndarray, h: float, lid: float = 0.0):
    """Centered-difference velocities; walls no-slip except the lid row."""
    u = np.zeros_like(psi)
    v = np.zeros_like(psi)
    u[1:-1, 1:-1] = (psi[2:, 1:-1] - psi[:-2, 1:-1]) / (2 * h)
    v[1:-1, 1:-1] = -(psi[1:-1, 2:] - psi[1:-1, :-2]) / (2 * h)
    u[-1, 1:-1] = lid
    return u, v


def _thom_wall_vorticity(psi: np.ndarray, h: float, lid: float) -> np.ndarray:
    """Wall vorticity from the one-sided Taylor expansion of psi (Thom)."""
    omega = np.zeros_like(psi)
    omega[0, :] = -2.0 * psi[1, :] / h**2
    omega[-1, :] = -2.0 * psi[-2, :] / h**2 - 2.0 * lid / h
    omega[:, 0] = -2.0 * psi[:, 1] / h**2
    omega[:, -1] = -2.0 * psi[:, -2] / h**2
    return omega


def solve_cavity(signal: InputSignal, grid: int, reynolds: float, frames: int) -> FieldVideo:
    """Integrate the cavity flow driven by a time-varying lid velocity.

    Starts from rest, runs over the signal's [0, 1] s window, and returns the
    streamfunction subsampled to `frames` frames at times (k+1)/frames.
    psi is exactly zero on all four walls in every frame by construction.
    """
    if grid < 16:
        raise InvalidArgumentError(f"grid={grid}, need at least 16 nodes per side")
    if frames < 2:
        raise InvalidArgumentError(f"frames={frames}, need at least 2")
    if reynolds <= 0:
        raise InvalidArgumentError(f"reynolds={reynolds} must be positive")

    n = grid
    h = 1.0 / (n - 1)
    nu = 1.0 / reynolds
    t_end = float(signal.times[-1])
    frame_times = (np.arange(frames) + 1) / frames * t_end
    # at least two substeps per frame even when the flow is nearly at rest
    dt_cap = (t_end / frames) / 2.0

    psi = np.zeros((n, n))
    omega = np.zeros((n, n))
    frames_out = np.zeros((frames, n, n))

    t = 0.0
    step = 0
    for k, t_frame in enumerate(frame_times):
        while t < t_frame - 1e-12:
            lid = float(signal.resample(t))
            u, v = velocity_from_streamfunction(psi, h, lid)
            speed = max(np.abs(u).max(), np.abs(v).max(), abs(lid), 1e-9)
            dt = min(_ADV_SAFETY * h / speed, _DIFF_SAFETY * 2.0 * nu / speed**2, dt_cap, t_frame - t)
            if dt <= 1e-12:
                raise NumericalInstabilityError(
                    f"time step collapsed to {dt:.3e} at t={t:.6f}, substep {step} "
                    f"(speed {speed:.3e}, nu {nu:.3e})"
                )

            omega = _thom_wall_vorticity(psi, h, lid) + _pad(omega[1:-1, 1:-1])
            adv = (
                u[1:-1, 1:-1] * (omega[1:-1, 2:] - omega[1:-1, :-2])
                + v[1:-1, 1:-1] * (omega[2:, 1:-1] - omega[:-2, 1:-1])
            ) / (2 * h)
            rhs = omega[1:-1, 1:-1] - dt * adv
            # implicit diffusion sees the lagged wall vorticity as Dirichlet data
            c = dt * nu / h**2
            rhs[0, :] += c * omega[0, 1:-1]
            rhs[-1, :] += c * omega[-1, 1:-1]
            rhs[:, 0] += c * omega[1:-1, 0]
            rhs[:, -1] += c * omega[1:-1, -1]
            omega_int = helmholtz_dirichlet(rhs, h, dt * nu)

            if not np.isfinite(omega_int).all():
                raise NumericalInstabilityError(
                    f"non-finite vorticity after diffusion solve at t={t:.6f}, substep {step}"
                )
            omega = _pad(omega_int)
            psi = np.zeros((n, n))
            psi[1:-1, 1:-1] = poisson_dirichlet(-omega_int, h)
            if not np.isfinite(psi).all():
                raise NumericalInstabilityError(
                    f"non-finite streamfunction at t={t:.6f}, substep {step}"
                )
            t += dt
            step += 1
        frames_out[k] = psi

    return FieldVideo(data=frames_out, field_kind="streamfunction", units="m^2/s", dt=t_end / frames)


def _pad(interior: np.ndarray) -> np.ndarray:
    """Embed an interior grid in a zero-walled full grid."""
    full = np.zeros((interior.shape[0] + 2, interior.shape[1] + 2))
    full[1:-1, 1:-1] = interior
    return full
