"""Well-prepared Maxwellian initial data and a library of bounded vorticities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage, optimize

from .errors import HypothesisViolation, ParameterError
from .pic import ParticleEnsemble, initial_state, total_energy
from .torus import (
    CICStencil,
    ScalarField,
    TorusGrid,
    VectorField,
    biot_savart,
    divergence,
    interpolate,
)

WEIGHT_TOL = 1e-12
ENERGY_RTOL = 0.05


# --- vorticity library --------------------------------------------------------


class Vorticity(NamedTuple):
    field: ScalarField
    sup: float  # analytic bound on |omega0|


def _shear(grid: TorusGrid, amplitude: float = 1.0, mode: int = 1) -> Vorticity:
    x1, _ = grid.mesh()
    return Vorticity(ScalarField(grid, amplitude * np.sin(2 * math.pi * mode * x1)), abs(amplitude))


def _eigenpair(grid: TorusGrid, amplitude: float = 1.0, k1: int = 1, k2: int = 1) -> Vorticity:
    x1, x2 = grid.mesh()
    w = amplitude * np.sin(2 * math.pi * k1 * x1) * np.sin(2 * math.pi * k2 * x2)
    return Vorticity(ScalarField(grid, w), abs(amplitude))


def _smoothed_patch(
    grid: TorusGrid,
    amplitude: float = 1.0,
    radius: float = 0.2,
    c1: float = 0.0,
    c2: float = 0.0,
    edge: float | None = None,
) -> Vorticity:
    """Disc of height ``amplitude`` with a tanh edge of width ``edge`` (default 4h).

    The profile takes values in [0, a] and so does its mean, hence the
    mean-free field is bounded by |a|.
    """
    if not 0 < radius < 0.5:
        raise ParameterError("patch radius must lie in (0, 1/2)")
    width = 4 * grid.h if edge is None else float(edge)
    x1, x2 = grid.mesh()
    d1 = (x1 - c1 + 0.5) % 1.0 - 0.5
    d2 = (x2 - c2 + 0.5) % 1.0 - 0.5
    r = np.hypot(d1, d2)
    prof = 0.5 * amplitude * (1.0 - np.tanh((r - radius) / width))
    return Vorticity(ScalarField(grid, prof - prof.mean()), abs(amplitude))


def _random_bounded(
    grid: TorusGrid,
    amplitude: float = 1.0,
    blocks: int = 8,
    seed: int = 0,
    smoothing: float | None = None,
) -> Vorticity:
    """Blockwise uniform noise in [-a, a], periodically smoothed, mean removed.

    The reported bound is the exact maximum of the grid function.
    """
    n = grid.n
    if n % blocks:
        raise ParameterError("blocks must divide the grid size")
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(-amplitude, amplitude, size=(blocks, blocks))
    w = np.kron(coarse, np.ones((n // blocks, n // blocks)))
    sigma = n / (4.0 * blocks) if smoothing is None else float(smoothing)
    w = ndimage.gaussian_filter(w, sigma, mode="wrap")
    w -= w.mean()
    return Vorticity(ScalarField(grid, w), float(np.abs(w).max()))


_LIBRARY = {
    "shear": _shear,
    "eigenpair": _eigenpair,
    "smoothed_patch": _smoothed_patch,
    "random_bounded": _random_bounded,
}

VORTICITY_FAMILIES = tuple(_LIBRARY)


def vorticity_library(name: str, params: dict | None, grid: TorusGrid) -> Vorticity:
    """Build a mean-free bounded vorticity from a named family."""
    try:
        build = _LIBRARY[name]
    except KeyError:
        raise ParameterError(f"unknown vorticity family {name!r}; choose from {VORTICITY_FAMILIES}") from None
    try:
        return build(grid, **(params or {}))
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {name}: {exc}") from None


# --- well-prepared Maxwellian data --------------------------------------------


@dataclass(frozen=True, eq=False)
class WellPreparedSpec:
    eps: float
    beta: float
    u0: VectorField
    N: int
    seed: int = 0
    jitter: float = 0.05
    omega0: ScalarField | None = field(default=None)
    omega0_sup: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError("eps must be positive")
        if not self.beta > 0:
            raise ParameterError("beta must be positive")
        if not 0 <= self.jitter <= 1:
            raise ParameterError("jitter must lie in [0, 1]")
        if divergence(self.u0).max_abs() > 1e-8:
            raise ParameterError("u0 must be divergence free")

    @property
    def grid(self) -> TorusGrid:
        return self.u0.grid

    @property
    def temperature(self) -> float:
        return self.eps**self.beta

    @classmethod
    def from_vorticity(cls, eps: float, beta: float, vort: Vorticity, N: int, seed: int = 0, jitter: float = 0.05):
        return cls(eps, beta, biot_savart(vort.field), N, seed, jitter, vort.field, vort.sup)


def stratification(grid: TorusGrid, N: int) -> int:
    """Sub-lattice side ``q`` with ``q*q`` particles per cell."""
    ppc, rem = divmod(N, grid.n * grid.n)
    q = math.isqrt(ppc)
    if rem or ppc < 1 or q * q != ppc:
        raise ParameterError(
            f"N={N} must equal n^2 * q^2 for the {grid.n}x{grid.n} grid (q integer)"
        )
    return q


def quiet_start(grid: TorusGrid, q: int, jitter: float = 0.0, seed: int = 0) -> np.ndarray:
    """Stratified positions: a q x q sub-lattice in every cell, jittered within sub-cells.

    Rows of cells are independent blocks with their own generator stream.
    """
    n, h = grid.n, grid.h
    sub = (np.arange(q) + 0.5) / q
    a, b = np.meshgrid(sub, sub, indexing="ij")
    local = np.column_stack([a.ravel(), b.ravel()])  # (q*q, 2) in cell units
    out = np.empty((n, n, q * q, 2))
    for i in range(n):
        pts = np.broadcast_to(local, (n, q * q, 2)).copy()
        if jitter:
            rng = np.random.default_rng([seed, 0, i])
            pts += jitter / q * rng.uniform(-0.5, 0.5, size=pts.shape)
        out[i, :, :, 0] = i + pts[:, :, 0]
        out[i, :, :, 1] = np.arange(n)[:, None] + pts[:, :, 1]
    return -0.5 + h * out.reshape(-1, 2)


def sample_well_prepared(spec: WellPreparedSpec) -> ParticleEnsemble:
    """Sample the normalized Maxwellian of temperature eps**beta around u0."""
    grid = spec.grid
    q = stratification(grid, spec.N)
    pos = quiet_start(grid, q, spec.jitter, spec.seed)
    n = grid.n
    block = n * q * q
    eta = np.empty_like(pos)
    for i in range(n):
        rng = np.random.default_rng([spec.seed, 1, i])
        eta[i * block:(i + 1) * block] = rng.standard_normal((block, 2))
    vel = interpolate(spec.u0, pos).T + math.sqrt(spec.temperature) * eta
    return ParticleEnsemble.from_arrays(pos, vel)


def analytic_initial_energy(eps: float, beta: float) -> float:
    """Modulated energy of the well-prepared datum: exactly eps**beta."""
    return float(eps) ** float(beta)


def sample_initial_energy(ens: ParticleEnsemble, u0: VectorField, eps: float) -> tuple[float, float]:
    """(kinetic, field) parts of the modulated energy at t=0."""
    u = CICStencil.build(u0.grid, ens.positions).gather(u0.values).T
    kinetic = 0.5 * float(np.sum(ens.weights * np.sum((ens.velocities - u) ** 2, axis=1)))
    return kinetic, total_energy(initial_state(ens, u0.grid, eps)).field


# --- moment bound --------------------------------------------------------------


def moment_bound(eps: float, beta: float, k0: float, u_sup: float) -> float:
    """``max(sup (1+|xi|^k0) f0, sup_x int (1+|xi|^k0) f0 dxi)`` for the normalized Maxwellian.

    Both suprema are attained (or bounded) by a point where ``|u0| = u_sup``.
    The pointwise part is a one-dimensional maximisation in ``r = |xi|``; the
    integrated part uses tensor Gauss-Hermite quadrature.
    """
    theta = float(eps) ** float(beta)
    s = math.sqrt(theta)

    def neg_density(r):
        gap = max(r - u_sup, 0.0)
        return -(1.0 + r**k0) * math.exp(-gap * gap / (2 * theta)) / (2 * math.pi * theta)

    rs = np.linspace(0.0, u_sup + 12 * s + 10 * math.sqrt(k0 * theta), 4001)
    vals = np.array([neg_density(r) for r in rs])
    i = int(np.argmin(vals))
    lo, hi = rs[max(i - 1, 0)], rs[min(i + 1, rs.size - 1)]
    res = optimize.minimize_scalar(neg_density, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    sup_part = -min(res.fun, vals[i])

    nodes, wts = np.polynomial.hermite_e.hermegauss(80)
    wts = wts / wts.sum()
    e1, e2 = np.meshgrid(nodes, nodes, indexing="ij")
    speed = np.hypot(u_sup + s * e1, s * e2)
    l1_part = float(np.sum(np.outer(wts, wts) * (1.0 + speed**k0)))
    return max(sup_part, l1_part)


# --- hypotheses ------------------------------------------------------------------


@dataclass(frozen=True)
class HypothesisReport:
    h1_mass: bool
    weight_sum: float
    h2_bound: bool
    k0: float
    alpha: float
    Mbar: float
    Mbar_scaled: float  # Mbar * eps**beta
    h3_energy: bool
    energy_sampled: float
    energy_analytic: float
    energy_field: float
    h4_vorticity: bool
    omega0_sup: float
    biot_savart_residual: float

    @property
    def all_pass(self) -> bool:
        return self.h1_mass and self.h2_bound and self.h3_energy and self.h4_vorticity

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["all_pass"] = self.all_pass
        return d


def verify_hypotheses(ens: ParticleEnsemble, spec: WellPreparedSpec, k0: float, alpha: float) -> HypothesisReport:
    """Check the mass, moment, energy and vorticity hypotheses for sampled data."""
    if not k0 > 4:
        raise HypothesisViolation(f"moment order k0 must exceed 4, got {k0}")
    w = ens.weights
    wsum = float(w.sum())
    h1 = bool(np.all(w >= 0)) and abs(wsum - 1.0) <= WEIGHT_TOL

    u_sup = spec.u0.max_norm()
    mbar = moment_bound(spec.eps, spec.beta, k0, u_sup)
    # the family scales like eps**-beta, so the stated order alpha must not be smaller
    h2 = math.isfinite(mbar) and alpha >= spec.beta - 1e-12

    kinetic, fld = sample_initial_energy(ens, spec.u0, spec.eps)
    sampled = kinetic + fld
    analytic = analytic_initial_energy(spec.eps, spec.beta)
    h3 = abs(sampled - analytic) <= ENERGY_RTOL * analytic

    if spec.omega0 is None:
        sup, resid, h4 = math.nan, math.nan, False
    else:
        sup = spec.omega0_sup if spec.omega0_sup is not None else spec.omega0.max_abs()
        resid = (biot_savart(spec.omega0) - spec.u0).max_norm()
        h4 = math.isfinite(sup) and resid <= 1e-10
    return HypothesisReport(
        h1, wsum, h2, float(k0), float(alpha), mbar, mbar * spec.eps**spec.beta,
        h3, sampled, analytic, fld, h4, float(sup), float(resid),
    )
