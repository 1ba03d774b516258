"""Modulated energy between a particle plasma and an Euler flow, and the bounds around it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import DataError, ParameterError, SynchronizationError
from .euler import EulerState, material_accel, strain
from .harmonic import NormReport
from .pic import VlasovState, _deposit, deposit_density, field_energy
from .torus import CICStencil, TensorField, grad_v0_sup

DEFAULT_SKEW = 1e-9


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    field: float
    total: float = field(init=False)

    def __post_init__(self):
        if self.kinetic < 0 or self.field < 0:
            raise DataError("energy parts must be nonnegative")
        object.__setattr__(self, "total", self.kinetic + self.field)


@dataclass(frozen=True)
class DerivativeBreakdown:
    I1: float
    I2: float
    I3: float
    sum: float = field(init=False)
    # -int A(u) . J, the pressure work; vanishes when A(u) = 0 and is kept
    # apart so that ``sum`` is exactly I1 + I2 + I3
    pressure_work: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "sum", self.I1 + self.I2 + self.I3)


@dataclass(frozen=True)
class BoundInputs:
    eps: float
    alpha: float
    beta: float
    Mbar: float
    Mbold: float = field(init=False)

    def __post_init__(self):
        if not self.eps > 0 or not self.Mbar >= 0:
            raise ParameterError("eps must be positive and Mbar nonnegative")
        object.__setattr__(self, "Mbold", (1.0 + math.sqrt(self.Mbar)) / self.eps)


def _check_sync(vp: VlasovState, eu: EulerState, max_skew: float) -> None:
    if not vp.synchronized:
        raise SynchronizationError("plasma state is between leapfrog half steps")
    if abs(vp.time - eu.time) > max_skew:
        raise SynchronizationError(f"plasma time {vp.time!r} and flow time {eu.time!r} differ")


def _flow_at_particles(vp: VlasovState, eu: EulerState):
    st = CICStencil.build(vp.grid, vp.ensemble.positions)
    return st, st.gather(eu.u.values).T


def modulated_energy(vp: VlasovState, eu: EulerState, max_skew: float = DEFAULT_SKEW) -> EnergyBreakdown:
    """Kinetic energy relative to the flow plus electrostatic energy.

    ``max_skew`` is the largest tolerated time mismatch; pass half a step when
    comparing states on a shared time grid.
    """
    _check_sync(vp, eu, max_skew)
    _, u = _flow_at_particles(vp, eu)
    ens = vp.ensemble
    kinetic = 0.5 * float(np.sum(ens.weights * np.sum((ens.velocities - u) ** 2, axis=1)))
    return EnergyBreakdown(kinetic, field_energy(vp.eps, vp.efield))


def f_tensor(vp: VlasovState, eu: EulerState, workers: int = 1, max_skew: float = DEFAULT_SKEW) -> TensorField:
    """Deposited second moment of the velocity relative to the flow."""
    _check_sync(vp, eu, max_skew)
    _, u = _flow_at_particles(vp, eu)
    ens = vp.ensemble
    c = ens.velocities - u
    w = ens.weights
    amounts = np.stack([w * c[:, 0] ** 2, w * c[:, 0] * c[:, 1], w * c[:, 1] ** 2])
    d11, d12, d22 = _deposit(ens, vp.grid, amounts, workers)
    return TensorField(vp.grid, np.array([[d11, d12], [d12, d22]]), symmetric=True)


def i_terms(vp: VlasovState, eu: EulerState, workers: int = 1, max_skew: float = DEFAULT_SKEW) -> DerivativeBreakdown:
    """Strain, field-stress and acceleration terms of the energy derivative."""
    _check_sync(vp, eu, max_skew)
    st, u = _flow_at_particles(vp, eu)
    ens = vp.ensemble
    d = strain(eu.u)
    dp = st.gather(d.values.reshape(4, *d.values.shape[2:])).reshape(2, 2, -1)
    c = ens.velocities - u
    i1 = -float(np.sum(ens.weights * np.einsum("ijp,ip,jp->p", dp, c.T, c.T)))
    e = vp.efield.values
    i2 = vp.eps * float(np.mean(np.einsum("ijxy,ixy,jxy->xy", d.values, e, e)))
    a = material_accel(eu).values
    rho = deposit_density(ens, vp.grid, workers).values
    i3 = float(np.mean(np.sum(a * eu.u.values, axis=0) * (rho - 1.0)))
    ap = st.gather(a).T
    work = -float(np.sum(ens.weights * np.sum(ap * ens.velocities, axis=1)))
    return DerivativeBreakdown(i1, i2, i3, pressure_work=work)


# --- explicit bounds -------------------------------------------------------------


def gamma_bound(t: float, inputs: BoundInputs) -> float:
    """``Gamma(t) = M + M^3 t^2 (1 + log(1 + M t))`` with ``M = inputs.Mbold``."""
    if t < 0:
        raise ParameterError(f"time must be nonnegative, got {t!r}")
    m = inputs.Mbold
    return m + m**3 * t * t * (1.0 + math.log1p(m * t))


class ForceBound(NamedTuple):
    value: float  # at the requested l
    optimized: float  # at l = 1 / (1 + rho_inf)
    l_opt: float


def _force_rhs(rho_inf: float, rho_l2: float, eps: float, l: float, gv0: float) -> float:
    return (2.0 * gv0 + l * (rho_inf + 1.0) + math.sqrt(abs(math.log(l))) * (rho_l2 + 1.0)) / eps


def force_bound(rho_inf: float, rho_l2: float, eps: float, l: float | None = None) -> ForceBound:
    """Upper bound for ``max |grad phi|`` from the density norms."""
    if rho_inf < 0 or rho_l2 < 0:
        raise ParameterError("norms must be nonnegative")
    if not eps > 0:
        raise ParameterError("eps must be positive")
    l_opt = 1.0 / (1.0 + rho_inf)
    if l is None:
        l = l_opt
    if not 0 < l < 1:
        raise ParameterError(f"l must lie in (0, 1), got {l!r}")
    gv0 = grad_v0_sup()
    return ForceBound(_force_rhs(rho_inf, rho_l2, eps, l, gv0), _force_rhs(rho_inf, rho_l2, eps, l_opt, gv0), l_opt)


# --- audits along a run -------------------------------------------------------------


def _series(history: Mapping[str, Sequence[float]], *names: str) -> list[np.ndarray]:
    out = []
    for name in names:
        if name not in history or len(history[name]) == 0:
            raise DataError(f"run history is missing the {name!r} series")
        out.append(np.asarray(history[name], dtype=float))
    if len({a.shape for a in out}) != 1:
        raise DataError("run history series have different lengths")
    return out


def worst_ratio(lhs: np.ndarray, rhs: np.ndarray, constant: float) -> NormReport:
    """NormReport at the time where ``lhs / rhs`` is largest."""
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(rhs > 0, lhs / rhs, np.where(lhs > 0, np.inf, 0.0))
    r = np.where(np.isnan(lhs), -np.inf, r)
    i = int(np.argmax(r))
    return NormReport.evaluate(lhs[i], rhs[i], constant)


def _frozen(name: str) -> float:
    from .constants import FROZEN

    return FROZEN[name]


def density_bound_audit(history, inputs: BoundInputs, constants: Mapping[str, float] | None = None) -> dict[str, NormReport]:
    """Density and second-moment sup bounds, plus the L2 density bound, along a run.

    ``history`` maps series names to arrays: ``t``, ``rho_inf``, ``m2_inf``,
    ``Qstar``, ``rho_l2`` and ``M2``.
    """
    t, rho, m2, q, rho_l2, big_m2 = _series(history, "t", "rho_inf", "m2_inf", "Qstar", "rho_l2", "M2")
    c = {k: _frozen(k) for k in ("rho_gamma", "rho_qstar", "m2_gamma", "m2_qstar", "rho_l2")}
    c.update(constants or {})
    gam = np.array([gamma_bound(s, inputs) for s in t])
    mb = inputs.Mbar
    return {
        "rho_gamma": worst_ratio(rho, gam, c["rho_gamma"]),
        "rho_qstar": worst_ratio(rho, mb * (1 + q**2), c["rho_qstar"]),
        "m2_gamma": worst_ratio(m2, gam**2, c["m2_gamma"]),
        "m2_qstar": worst_ratio(m2, mb * (1 + q**4), c["m2_qstar"]),
        "rho_l2": worst_ratio(rho_l2, np.sqrt(big_m2 * mb), c["rho_l2"]),
    }


def force_bound_audit(history, eps: float) -> NormReport:
    """Measured ``max |grad phi|`` against the optimized force bound (constant 1)."""
    gphi, rho, rho_l2 = _series(history, "grad_phi_inf", "rho_inf", "rho_l2")
    rhs = np.array([force_bound(a, b, eps).optimized for a, b in zip(rho, rho_l2)])
    return worst_ratio(gphi, rhs, 1.0)


def moment_interpolation_audit(history, f_sup: float, ks=(2, 3, 4), constants=None) -> dict[str, NormReport]:
    """``||rho||_{1+k/2} <= C ||f||_inf^{k/(2+k)} M_k^{2/(2+k)}`` along a run."""
    out = {}
    for k in ks:
        name = f"interp_k{k}"
        lhs, mk = _series(history, f"rho_interp_k{k}", f"M{k}")
        rhs = f_sup ** (k / (2 + k)) * mk ** (2 / (2 + k))
        c = (constants or {}).get(name, _frozen(name))
        out[name] = worst_ratio(lhs, rhs, c)
    return out


def moment_growth_ratios(history, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference ``|dM_k/dt|`` and ``k ||grad phi||_{k+2} M_k^{(k+1)/(k+2)}``."""
    t, mk, gk = _series(history, "t", f"M{k}", f"grad_phi_l{k + 2}")
    if t.size < 3:
        raise DataError("moment growth audit needs at least three samples")
    lhs = np.abs(mk[2:] - mk[:-2]) / (t[2:] - t[:-2])
    rhs = k * gk[1:-1] * mk[1:-1] ** ((k + 1) / (k + 2))
    return lhs, rhs


def moment_growth_audit(history, ks=(2, 3), constants=None) -> dict[str, NormReport]:
    out = {}
    for k in ks:
        name = f"moment_ode_k{k}"
        lhs, rhs = moment_growth_ratios(history, k)
        out[name] = worst_ratio(lhs, rhs, (constants or {}).get(name, _frozen(name)))
    return out


def gronwall_rhs(eps: float, eta: float, gamma: np.ndarray, energy: np.ndarray) -> np.ndarray:
    g = np.asarray(gamma, dtype=float)
    logs = np.log(g * g + g) + np.log1p(g * g) + math.log(1.0 / eta)
    return eps + eta + logs * np.asarray(energy, dtype=float)


def gronwall_audit(history, inputs: BoundInputs, delta: float = 1.0, constant: float | None = None) -> NormReport:
    """Energy growth against the closed differential inequality with ``eta = eps**delta``."""
    t, e, de = _series(history, "t", "E_total", "dE_dt_fd")
    eta = inputs.eps**delta
    gam = np.array([gamma_bound(s, inputs) for s in t])
    rhs = gronwall_rhs(inputs.eps, eta, gam, e)
    return worst_ratio(de, rhs, _frozen("gronwall") if constant is None else constant)
