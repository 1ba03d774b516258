"""Particle-in-cell discretisation of the quasineutrally scaled Vlasov-Poisson system.

The electron density solves ``-eps * Lap(phi) = rho - 1`` and particles feel
the force ``-grad(phi)``. Deposition and force interpolation share one
bilinear (cloud-in-cell) kernel, and time integration is kick-drift-kick
leapfrog, so states returned by :func:`step` are always synchronised.
"""

from __future__ import annotations

import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError, FileFormatError, ParameterError
from .torus import (
    CICStencil,
    ScalarField,
    TorusGrid,
    VectorField,
    _atomic_write,
    gradient,
    poisson_neg,
    wrap_positions,
)

WEIGHT_SUM_TOL = 1e-12
DT_FACTOR = 0.2  # dt <= DT_FACTOR * sqrt(eps)
MIN_PPC = 4
# Fixed deposition chunk: partial grids are merged in chunk order, so the
# floating-point result does not depend on how many workers run the chunks.
DEPOSIT_CHUNK = 1 << 15

ENSEMBLE_MAGIC = b"QNP1"


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray
    initial_velocities: np.ndarray

    def __post_init__(self):
        pos = wrap_positions(np.array(self.positions, dtype=float))
        vel = np.array(self.velocities, dtype=float)
        w = np.array(self.weights, dtype=float)
        v0 = np.array(self.initial_velocities, dtype=float)
        n = w.shape[0]
        if w.ndim != 1 or pos.shape != (n, 2) or vel.shape != (n, 2) or v0.shape != (n, 2):
            raise ParameterError("ensemble arrays must have matching lengths and 2D vectors")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ParameterError("weights must be nonnegative and sum to 1")
        for name, arr in (("positions", pos), ("velocities", vel), ("weights", w), ("initial_velocities", v0)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_arrays(cls, positions, velocities, weights=None) -> "ParticleEnsemble":
        """New ensemble at t=0: initial velocities are a copy of ``velocities``."""
        velocities = np.asarray(velocities, dtype=float)
        if weights is None:
            weights = np.full(velocities.shape[0], 1.0 / velocities.shape[0])
        return cls(positions, velocities, weights, velocities.copy())

    def __len__(self) -> int:
        return self.weights.shape[0]

    def with_phase_space(self, positions, velocities) -> "ParticleEnsemble":
        return ParticleEnsemble(positions, velocities, self.weights, self.initial_velocities)


@dataclass(frozen=True)
class PICConfig:
    n: int
    ppc: int
    dt: float
    seed: int = 0
    deposition: str = "bilinear"

    def validate(self, eps: float) -> None:
        TorusGrid(self.n)
        if self.ppc < MIN_PPC:
            raise ConfigurationError(f"ppc must be >= {MIN_PPC}, got {self.ppc}")
        if self.deposition != "bilinear":
            raise ConfigurationError("only bilinear deposition is supported")
        check_time_step(self.dt, eps)
        if not 0 <= self.seed < 2**64:
            raise ConfigurationError("seed must fit in 64 unsigned bits")


def check_time_step(dt: float, eps: float) -> None:
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps!r}")
    limit = DT_FACTOR * math.sqrt(eps)
    if not 0 < dt <= limit * (1 + 1e-12):
        raise ConfigurationError(
            f"time step {dt:.4g} violates 0 < dt <= {DT_FACTOR}*sqrt(eps) = {limit:.4g}"
        )


# --- deposition ---------------------------------------------------------------


def _deposit(ens: ParticleEnsemble, grid: TorusGrid, amounts: np.ndarray, workers: int = 1) -> np.ndarray:
    """Cloud-in-cell deposition of ``amounts`` (shape (m, N)) divided by the cell area."""
    n_part = len(ens)
    bounds = [(a, min(a + DEPOSIT_CHUNK, n_part)) for a in range(0, n_part, DEPOSIT_CHUNK)]

    def one(bound):
        a, b = bound
        st = CICStencil.build(grid, ens.positions[a:b])
        return np.stack([st.scatter(grid.n, amt[a:b]) for amt in amounts])

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(one, bounds))
    else:
        parts = [one(b) for b in bounds]
    total = np.zeros((amounts.shape[0], grid.n, grid.n))
    for part in parts:
        total += part
    return total / grid.cell_area


def deposit_density(ens: ParticleEnsemble, grid: TorusGrid, workers: int = 1) -> ScalarField:
    return ScalarField(grid, _deposit(ens, grid, ens.weights[None, :], workers)[0])


def deposit_current(ens: ParticleEnsemble, grid: TorusGrid, workers: int = 1) -> VectorField:
    amounts = (ens.weights[:, None] * ens.velocities).T
    return VectorField(grid, _deposit(ens, grid, amounts, workers))


def deposit_moment(ens: ParticleEnsemble, grid: TorusGrid, k: int, workers: int = 1) -> ScalarField:
    """Partial velocity moment ``m_k(x) = int |xi|^k f dxi`` for k in 0..4."""
    if k not in (0, 1, 2, 3, 4):
        raise ParameterError(f"moment order must be in 0..4, got {k!r}")
    if k == 0:
        return deposit_density(ens, grid, workers)
    speed = np.hypot(ens.velocities[:, 0], ens.velocities[:, 1])
    return ScalarField(grid, _deposit(ens, grid, (ens.weights * speed**k)[None, :], workers)[0])


# --- state and dynamics -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VlasovState:
    ensemble: ParticleEnsemble
    time: float
    eps: float
    phi: ScalarField
    efield: VectorField  # -grad(phi)
    synchronized: bool = True

    @property
    def grid(self) -> TorusGrid:
        return self.phi.grid


def field_solve(state: VlasovState, workers: int = 1) -> VlasovState:
    phi, efield = _solve(state.ensemble, state.grid, state.eps, workers)
    return replace(state, phi=phi, efield=efield)


def _solve(ens: ParticleEnsemble, grid: TorusGrid, eps: float, workers: int = 1):
    rho = deposit_density(ens, grid, workers)
    # remove the round-off residue of the unit mean before the compatibility check
    source = ScalarField(grid, rho.values - rho.values.mean())
    phi = poisson_neg(source, eps)
    return phi, VectorField(grid, -gradient(phi).values)


def initial_state(ens: ParticleEnsemble, grid: TorusGrid, eps: float, workers: int = 1) -> VlasovState:
    phi, efield = _solve(ens, grid, eps, workers)
    return VlasovState(ens, 0.0, float(eps), phi, efield)


def particle_field(state: VlasovState) -> np.ndarray:
    """Electric field ``-grad(phi)`` interpolated to the particles, shape (N, 2)."""
    return CICStencil.build(state.grid, state.ensemble.positions).gather(state.efield.values).T


def step(state: VlasovState, dt: float, workers: int = 1) -> VlasovState:
    """One kick-drift-kick leapfrog step."""
    check_time_step(dt, state.eps)
    ens = state.ensemble
    v_half = ens.velocities + 0.5 * dt * particle_field(state)
    x_new = wrap_positions(ens.positions + dt * v_half)
    moved = ens.with_phase_space(x_new, v_half)
    phi, efield = _solve(moved, state.grid, state.eps, workers)
    mid = VlasovState(moved, state.time + dt, state.eps, phi, efield, synchronized=False)
    v_new = v_half + 0.5 * dt * particle_field(mid)
    return VlasovState(moved.with_phase_space(x_new, v_new), state.time + dt, state.eps, phi, efield)


# --- diagnostics --------------------------------------------------------------


@dataclass(frozen=True)
class EnergyScalar:
    kinetic: float
    field: float

    @property
    def total(self) -> float:
        return self.kinetic + self.field

    def __float__(self) -> float:
        return self.total


def field_energy(eps: float, efield: VectorField) -> float:
    return 0.5 * eps * efield.grid.cell_area * float(np.sum(efield.values**2))


def total_energy(state: VlasovState) -> EnergyScalar:
    if not state.synchronized:
        raise DataError("energy requested on an unsynchronised leapfrog state")
    ens = state.ensemble
    kinetic = 0.5 * float(np.sum(ens.weights * np.sum(ens.velocities**2, axis=1)))
    return EnergyScalar(kinetic, field_energy(state.eps, state.efield))


def q_star(state: VlasovState) -> float:
    """Largest velocity displacement since t=0 over the ensemble.

    A lower estimate of the phase-space supremum, since particles only sample it.
    """
    ens = state.ensemble
    d = ens.velocities - ens.initial_velocities
    return float(np.hypot(d[:, 0], d[:, 1]).max())


def velocity_moment(state_or_ensemble, k: int) -> float:
    """``M_k = sum_p w_p |xi_p|^k`` for k in 0..6."""
    if k not in range(7):
        raise ParameterError(f"moment order must be in 0..6, got {k!r}")
    ens = state_or_ensemble.ensemble if isinstance(state_or_ensemble, VlasovState) else state_or_ensemble
    if k == 0:
        return float(np.sum(ens.weights))
    speed = np.hypot(ens.velocities[:, 0], ens.velocities[:, 1])
    return float(np.sum(ens.weights * speed**k))


def total_momentum(state: VlasovState) -> np.ndarray:
    ens = state.ensemble
    return ens.weights @ ens.velocities


# --- checkpoint format --------------------------------------------------------

_ENSEMBLE_HEADER = struct.Struct("<4sQ")


def write_ensemble(path, ens: ParticleEnsemble) -> None:
    records = np.column_stack(
        [ens.positions, ens.velocities, ens.weights, ens.initial_velocities]
    ).astype("<f8")
    _atomic_write(Path(path), _ENSEMBLE_HEADER.pack(ENSEMBLE_MAGIC, len(ens)) + records.tobytes())


def read_ensemble(path) -> ParticleEnsemble:
    data = Path(path).read_bytes()
    if len(data) < _ENSEMBLE_HEADER.size:
        raise FileFormatError(f"{path}: truncated ensemble header")
    magic, count = _ENSEMBLE_HEADER.unpack_from(data)
    if magic != ENSEMBLE_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    rec = np.frombuffer(data, dtype="<f8", offset=_ENSEMBLE_HEADER.size)
    if rec.size != 7 * count:
        raise FileFormatError(f"{path}: payload size does not match particle count")
    rec = rec.reshape(count, 7)
    return ParticleEnsemble(rec[:, 0:2], rec[:, 2:4], rec[:, 4], rec[:, 5:7])
