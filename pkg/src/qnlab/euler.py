"""Pseudo-spectral 2D incompressible Euler in vorticity form on the unit torus."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, DataError, ParameterError
from .torus import (
    ScalarField,
    TensorField,
    VectorField,
    _derivative_symbols,
    _inverse_laplacian_symbol,
    biot_savart,
    from_fourier,
    gradient,
    jacobian,
    poisson_neg,
    to_fourier,
)

MEAN_TOL = 1e-12


@lru_cache(maxsize=None)
def dealias_mask(n: int) -> np.ndarray:
    """Two-thirds rule: keep modes with ``|k1|, |k2| < n/3``."""
    k = np.fft.fftfreq(n, d=1.0 / n)
    keep = np.abs(k) < n / 3.0
    mask = np.outer(keep, keep)
    mask.setflags(write=False)
    return mask


@dataclass(frozen=True, eq=False)
class EulerState:
    omega: ScalarField
    time: float
    u: VectorField

    @classmethod
    def from_vorticity(cls, omega: ScalarField, time: float = 0.0) -> "EulerState":
        """Project ``omega`` onto the dealiased band and cache its velocity."""
        m = omega.mean()
        if abs(m) > 1e-10:
            raise ParameterError(f"vorticity must have zero mean, got {m:.3e}")
        wh = to_fourier(omega.values) * dealias_mask(omega.grid.n)
        wh[0, 0] = 0.0
        w = ScalarField(omega.grid, from_fourier(wh))
        return cls(w, float(time), biot_savart(w))

    @property
    def grid(self):
        return self.omega.grid


def _rhs(wh: np.ndarray, n: int) -> np.ndarray:
    """Fourier coefficients of ``-u . grad(omega)``, dealiased."""
    d1, d2 = _derivative_symbols(n)
    psi_h = -_inverse_laplacian_symbol(n) * wh
    u1 = -from_fourier(d2 * psi_h)
    u2 = from_fourier(d1 * psi_h)
    w1 = from_fourier(d1 * wh)
    w2 = from_fourier(d2 * wh)
    out = -to_fourier(u1 * w1 + u2 * w2) * dealias_mask(n)
    out[0, 0] = 0.0
    return out


def cfl_limit(state: EulerState) -> float:
    umax = state.u.max_norm()
    return math.inf if umax == 0.0 else state.grid.h / (2.0 * umax)


def step_euler(state: EulerState, dt: float) -> EulerState:
    """Classical RK4 step of the dealiased vorticity equation."""
    limit = cfl_limit(state)
    if not 0 < dt <= limit * (1 + 1e-12):
        raise ConfigurationError(f"Euler step {dt:.4g} violates CFL bound {limit:.4g}")
    n = state.grid.n
    w0 = to_fourier(state.omega.values)
    k1 = _rhs(w0, n)
    k2 = _rhs(w0 + 0.5 * dt * k1, n)
    k3 = _rhs(w0 + 0.5 * dt * k2, n)
    k4 = _rhs(w0 + dt * k3, n)
    w1 = w0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    w1[0, 0] = 0.0
    omega = ScalarField(state.grid, from_fourier(w1))
    return EulerState(omega, state.time + dt, biot_savart(omega))


def advance(state: EulerState, dt: float) -> EulerState:
    """Advance by ``dt``, sub-stepping whenever the CFL bound is tighter."""
    target = state.time + dt
    remaining = dt
    while remaining > 1e-14 * dt:
        h = min(remaining, cfl_limit(state))
        state = step_euler(state, h)
        remaining -= h
    return replace(state, time=target)


class StrainField(TensorField):
    """Symmetric part of the velocity gradient, ``d(u) = (grad u + grad u^T) / 2``."""

    factor = 0.5


def strain(u: VectorField) -> StrainField:
    j = jacobian(u).values
    off = 0.5 * (j[0, 1] + j[1, 0])
    d = np.empty_like(j)
    d[0, 0] = j[0, 0]
    d[1, 1] = j[1, 1]
    d[0, 1] = off
    d[1, 0] = off
    return StrainField(u.grid, d, symmetric=True)


def material_accel(state: EulerState) -> VectorField:
    """``A(u) = du/dt + u.grad u``, evaluated as ``-grad p`` from the pressure equation.

    ``-Lap p = sum_ij d_i u_j d_j u_i``.
    """
    j = jacobian(state.u).values
    src = j[0, 0] ** 2 + 2.0 * j[0, 1] * j[1, 0] + j[1, 1] ** 2
    src = ScalarField(state.grid, src - src.mean())
    p = poisson_neg(src, 1.0)
    return VectorField(state.grid, -gradient(p).values)


def advective_derivative(u: VectorField, v: VectorField) -> VectorField:
    """``(u . grad) v``."""
    j = jacobian(v).values
    return VectorField(u.grid, np.einsum("ixy,ijxy->jxy", u.values, j))


def lp_norm(omega: ScalarField, p) -> float:
    if p not in (1, 2, 4, math.inf, "inf"):
        raise ParameterError(f"p must be one of 1, 2, 4, inf; got {p!r}")
    return omega.lp_norm(math.inf if p == "inf" else p)


def kinetic_energy(state: EulerState) -> float:
    return 0.5 * float(np.mean(np.sum(state.u.values**2, axis=0)))


def enstrophy(state: EulerState) -> float:
    return float(np.mean(state.omega.values**2))


DIAGNOSTIC_COLUMNS = ("t", "energy", "enstrophy", "L1", "L2", "L4", "Linf")


def diagnostics_row(state: EulerState) -> tuple[float, ...]:
    w = state.omega
    return (
        state.time,
        kinetic_energy(state),
        enstrophy(state),
        lp_norm(w, 1),
        lp_norm(w, 2),
        lp_norm(w, 4),
        lp_norm(w, math.inf),
    )


@dataclass(frozen=True)
class VelocityBoundRecord:
    lhs: float
    rhs: float
    constant: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-9)


def yudovich_velocity_bound_check(history, omega0_sup: float, constant: float) -> VelocityBoundRecord:
    """Compare ``sup_t max|u|`` along ``history`` with ``constant * ||omega0||_inf``."""
    history = list(history)
    if not history:
        raise DataError("velocity bound check needs a non-empty run history")
    lhs = max(s.u.max_norm() for s in history)
    return VelocityBoundRecord(lhs, constant * omega0_sup, constant)
