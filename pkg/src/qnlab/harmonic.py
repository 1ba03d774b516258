"""Discrete maximal functions, BMO norms and inequality audits on the torus grid.

Cubes are unions of grid cells. At level ``j`` the side is ``n / 2**j`` cells
and anchors sit on a lattice of stride ``side / refine`` (at least one cell),
so every grid point is covered at every level.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .torus import ScalarField, biot_savart, jacobian

MODES = ("BMO_torus", "bmo_local")


@dataclass(frozen=True)
class CubeFamily:
    n: int
    refine: int = 2  # anchors per side length; larger values give a finer family

    def __post_init__(self):
        if self.n < 1 or self.n & (self.n - 1):
            raise ParameterError("grid size must be a power of two")
        if self.refine < 1 or self.refine & (self.refine - 1):
            raise ParameterError("refine must be a power of two")

    def levels(self):
        """Yield ``(side, stride)`` in cells, from the whole torus down to single cells."""
        side = self.n
        while side >= 1:
            yield side, max(side // self.refine, 1)
            side //= 2

    def cubes(self):
        """All ``(a1, a2, side)`` anchor triples; used by brute-force oracles."""
        for side, stride in self.levels():
            for a1 in range(0, self.n, stride):
                for a2 in range(0, self.n, stride):
                    yield a1, a2, side


@dataclass(frozen=True)
class NormReport:
    lhs: float
    rhs: float
    fitted_constant: float
    passed: bool

    @classmethod
    def evaluate(cls, lhs: float, rhs: float, constant: float) -> "NormReport":
        lhs, rhs, constant = float(lhs), float(rhs), float(constant)
        return cls(lhs, rhs, constant, bool(lhs <= constant * rhs * (1 + 1e-9)))

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "constant": self.fitted_constant, "pass": self.passed}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _frozen(name: str) -> float:
    from .constants import FROZEN

    return FROZEN[name]


# --- box averages -------------------------------------------------------------


def _periodic_sat(values: np.ndarray) -> np.ndarray:
    """Summed-area table of the 2x2 periodic tiling, with a zero first row/column."""
    tiled = np.tile(values, (2, 2))
    sat = np.zeros((tiled.shape[0] + 1, tiled.shape[1] + 1))
    sat[1:, 1:] = tiled.cumsum(0).cumsum(1)
    return sat


def _box_means(sat: np.ndarray, anchors: np.ndarray, side: int) -> np.ndarray:
    a = anchors[:, None]
    b = anchors[None, :]
    s = sat[a + side, b + side] - sat[a, b + side] - sat[a + side, b] + sat[a, b]
    return s / (side * side)


def maximal(f: ScalarField, family: CubeFamily | None = None) -> ScalarField:
    """Square maximal function ``Mf(x) = max |mean_Q f|`` over family cubes containing x."""
    n = f.grid.n
    family = family or CubeFamily(n)
    sat = _periodic_sat(f.values)
    out = np.zeros((n, n))
    for side, stride in family.levels():
        anchors = np.arange(0, n, stride)
        avg = np.abs(_box_means(sat, anchors, side))
        # anchor k covers stride-blocks k .. k + side/stride - 1
        cover = avg.copy()
        span = side // stride
        for r1 in range(span):
            for r2 in range(span):
                if r1 or r2:
                    np.maximum(cover, np.roll(avg, (r1, r2), axis=(0, 1)), out=cover)
        np.maximum(out, np.repeat(np.repeat(cover, stride, 0), stride, 1), out=out)
    return ScalarField(f.grid, out)


def _oscillation_sup(values: np.ndarray, family: CubeFamily, clipped: bool) -> float:
    n = values.shape[0]
    best = 0.0
    if clipped:
        padded = np.full((2 * n, 2 * n), np.nan)
        padded[:n, :n] = values
    for side, stride in family.levels():
        m = n // side
        for s1 in range(0, side, stride):
            for s2 in range(0, side, stride):
                if clipped:
                    # the last block of a shifted tiling overhangs into NaN padding
                    blocks = padded[s1:s1 + n, s2:s2 + n].reshape(m, side, m, side)
                    means = np.nanmean(blocks, axis=(1, 3), keepdims=True)
                    osc = np.nanmean(np.abs(blocks - means), axis=(1, 3))
                else:
                    blocks = np.roll(values, (-s1, -s2), axis=(0, 1)).reshape(m, side, m, side)
                    means = blocks.mean(axis=(1, 3), keepdims=True)
                    osc = np.abs(blocks - means).mean(axis=(1, 3))
                best = max(best, float(np.nanmax(osc)))
    return best


def bmo_norm(f: ScalarField, mode: str = "BMO_torus", family: CubeFamily | None = None) -> float:
    """Mean-oscillation norm over the cube family.

    ``BMO_torus`` uses periodic cubes. ``bmo_local`` clips cubes to the
    fundamental square and adds the unit-scale average of ``|f|``; a square
    of half-side 1 centred in the domain covers all of it, so that term is the
    mean of ``|f|``.
    """
    if mode not in MODES:
        raise ParameterError(f"mode must be one of {MODES}, got {mode!r}")
    family = family or CubeFamily(f.grid.n)
    if mode == "BMO_torus":
        return _oscillation_sup(f.values, family, clipped=False)
    return _oscillation_sup(f.values, family, clipped=True) + float(np.mean(np.abs(f.values)))


# --- audits ---------------------------------------------------------------------


def cz_bound_check(omega: ScalarField, constant: float | None = None, mode: str = "BMO_torus") -> NormReport:
    """BMO size of the velocity gradient against the sup of the vorticity."""
    if abs(omega.mean()) > 1e-10:
        raise ParameterError("vorticity must have zero mean")
    grad = jacobian(biot_savart(omega)).values
    lhs = max(bmo_norm(ScalarField(omega.grid, grad[i, j]), mode) for i in range(2) for j in range(2))
    return NormReport.evaluate(lhs, omega.max_abs(), _frozen("cz") if constant is None else constant)


def duality_check(
    f: ScalarField,
    g: ScalarField,
    constant_torus: float | None = None,
    constant_local: float | None = None,
) -> dict[str, NormReport | None]:
    """Pairing bound ``|int f g| <= C ||Mf||_1 ||g||`` in both norm variants.

    The periodic variant only applies to mean-free ``g`` and is ``None`` otherwise.
    """
    lhs = abs(float(np.mean(f.values * g.values)))
    mf = float(np.mean(maximal(f).values))
    c_t = _frozen("duality_torus") if constant_torus is None else constant_torus
    c_l = _frozen("duality_local") if constant_local is None else constant_local
    out: dict[str, NormReport | None] = {
        "bmo_local": NormReport.evaluate(lhs, mf * bmo_norm(g, "bmo_local"), c_l),
        "BMO_torus": None,
    }
    if abs(g.mean()) <= 1e-10 * max(1.0, g.max_abs()):
        out["BMO_torus"] = NormReport.evaluate(lhs, mf * bmo_norm(g, "BMO_torus"), c_t)
    return out


def wiener_rhs(g: ScalarField, eta: float) -> float:
    a = np.abs(g.values)
    with np.errstate(divide="ignore"):
        llog = np.where(a > 1.0, a * np.log(np.where(a > 1.0, a, 1.0)), 0.0)
    return eta + float(np.mean(llog)) + math.log(1.0 / eta) * float(np.mean(a))


def wiener_check(g: ScalarField, eta: float, constant: float | None = None) -> NormReport:
    """``int Mg`` against ``eta + int |g| log+ |g| + log(1/eta) int |g|``."""
    if not 0 < eta <= 1:
        raise ParameterError(f"eta must lie in (0, 1], got {eta!r}")
    lhs = float(np.mean(maximal(g).values))
    return NormReport.evaluate(lhs, wiener_rhs(g, eta), _frozen("wiener") if constant is None else constant)


def local_vs_torus_check(f: ScalarField, constant: float | None = None) -> NormReport:
    """``bmo_local(f) <= C * BMO_torus(f)`` for mean-free ``f``."""
    if abs(f.mean()) > 1e-10 * max(1.0, f.max_abs()):
        raise ParameterError("local/torus comparison needs a mean-free field")
    return NormReport.evaluate(
        bmo_norm(f, "bmo_local"), bmo_norm(f, "BMO_torus"),
        _frozen("bmo_local_vs_torus") if constant is None else constant,
    )
