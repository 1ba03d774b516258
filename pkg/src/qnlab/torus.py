"""Fields on the periodic unit torus [-1/2, 1/2)^2 and their spectral calculus.

Nodes sit at ``x_i = -1/2 + i*h`` with ``h = 1/n``; arrays are indexed
``values[i, j]`` with ``i`` along x1 and ``j`` along x2. Fourier
coefficients are normalised so that ``f(x) = sum_k c_k exp(2*pi*i*k.x)``,
i.e. ``c = fft2(values) / n**2`` up to a unit-modulus phase coming from the
offset origin (irrelevant for every norm computed here).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import special

from .errors import (
    DataError,
    FileFormatError,
    IncompatibleSourceError,
    ParameterError,
    SingularPointError,
)

MEAN_TOL = 1e-10
SYMMETRY_TOL = 1e-12

FIELD_MAGIC = b"QNL1"
FIELD_KIND_TAGS = {"scalar": 0, "vector": 1, "tensor": 2}


@dataclass(frozen=True)
class TorusGrid:
    """Uniform node-centred grid with ``n`` cells per axis."""

    n: int

    def __post_init__(self):
        n = self.n
        if not isinstance(n, (int, np.integer)) or n < 8 or n & (n - 1):
            raise ParameterError(f"grid size must be a power of two >= 8, got {n!r}")
        object.__setattr__(self, "n", int(n))

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def coords(self) -> np.ndarray:
        return -0.5 + self.h * np.arange(self.n)

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.coords()
        return np.meshgrid(c, c, indexing="ij")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer mode indices ``(k1, k2)`` in FFT order, each in [-n/2, n/2)."""
        return _wavenumbers(self.n)


@lru_cache(maxsize=None)
def _wavenumbers(n: int) -> tuple[np.ndarray, np.ndarray]:
    k = np.fft.fftfreq(n, d=1.0 / n)
    k1, k2 = np.meshgrid(k, k, indexing="ij")
    k1.setflags(write=False)
    k2.setflags(write=False)
    return k1, k2


@lru_cache(maxsize=None)
def _inverse_laplacian_symbol(n: int) -> np.ndarray:
    """1 / (4 pi^2 |k|^2) with the k=0 entry set to 0."""
    k1, k2 = _wavenumbers(n)
    k2sum = k1 * k1 + k2 * k2
    out = np.zeros_like(k2sum)
    nz = k2sum > 0
    out[nz] = 1.0 / (4.0 * math.pi**2 * k2sum[nz])
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _derivative_symbols(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Spectral first-derivative multipliers ``2*pi*i*k`` with Nyquist zeroed."""
    k1, k2 = _wavenumbers(n)
    d1 = 2j * math.pi * k1
    d2 = 2j * math.pi * k2
    d1[k1 == -n // 2] = 0.0
    d2[k2 == -n // 2] = 0.0
    d1.setflags(write=False)
    d2.setflags(write=False)
    return d1, d2


def _frozen_array(values, shape) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise ParameterError(f"expected array of shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("field contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_array(self.values, (self.grid.n, self.grid.n)))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "ScalarField":
        x1, x2 = grid.mesh()
        return cls(grid, np.broadcast_to(fn(x1, x2), x1.shape))

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> "ScalarField":
        return cls(grid, np.full((grid.n, grid.n), float(c)))

    def mean(self) -> float:
        return float(self.values.mean())

    def integral(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def lp_norm(self, p: float) -> float:
        if p == math.inf:
            return self.max_abs()
        return float((np.abs(self.values) ** p).mean() ** (1.0 / p))

    def _coerce(self, other):
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise ParameterError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def __eq__(self, other):
        return (
            isinstance(other, ScalarField)
            and other.grid == self.grid
            and np.array_equal(other.values, self.values)
        )


@dataclass(frozen=True, eq=False)
class VectorField:
    grid: TorusGrid
    values: np.ndarray  # shape (2, n, n)

    def __post_init__(self):
        n = self.grid.n
        object.__setattr__(self, "values", _frozen_array(self.values, (2, n, n)))

    @classmethod
    def from_components(cls, a: ScalarField, b: ScalarField) -> "VectorField":
        if a.grid != b.grid:
            raise ParameterError("components must share one grid")
        return cls(a.grid, np.stack([a.values, b.values]))

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "VectorField":
        return cls(grid, np.zeros((2, grid.n, grid.n)))

    @property
    def components(self) -> tuple[ScalarField, ScalarField]:
        return ScalarField(self.grid, self.values[0]), ScalarField(self.grid, self.values[1])

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.values[0], self.values[1])

    def max_norm(self) -> float:
        return float(self.magnitude().max())

    def __sub__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.values - other.values)

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.grid, self.values + other.values)

    def __mul__(self, s: float) -> "VectorField":
        return VectorField(self.grid, self.values * s)

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class TensorField:
    grid: TorusGrid
    values: np.ndarray  # shape (2, 2, n, n)
    symmetric: bool = field(default=False)

    def __post_init__(self):
        n = self.grid.n
        object.__setattr__(self, "values", _frozen_array(self.values, (2, 2, n, n)))
        if self.symmetric and np.abs(self.values[0, 1] - self.values[1, 0]).max() > SYMMETRY_TOL:
            raise DataError("tensor flagged symmetric has |T12 - T21| above tolerance")

    def component(self, i: int, j: int) -> ScalarField:
        return ScalarField(self.grid, self.values[i, j])

    def trace(self) -> ScalarField:
        return ScalarField(self.grid, self.values[0, 0] + self.values[1, 1])

    def contract(self, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        """Pointwise ``T : a (x) b`` for grid vector arrays ``a``, ``b`` of shape (2, n, n)."""
        b = a if b is None else b
        return np.einsum("ijxy,ixy,jxy->xy", self.values, a, b)


# --- spectral operators -------------------------------------------------------


def to_fourier(values: np.ndarray) -> np.ndarray:
    n = values.shape[-1]
    return np.fft.fft2(values) / (n * n)


def from_fourier(coeffs: np.ndarray) -> np.ndarray:
    n = coeffs.shape[-1]
    return np.fft.ifft2(coeffs * (n * n)).real


def _require_zero_mean(f: ScalarField, what: str):
    m = f.mean()
    if abs(m) > MEAN_TOL:
        raise IncompatibleSourceError(f"incompatible source: {what} has mean {m:.3e}")


def laplacian(f: ScalarField) -> ScalarField:
    n = f.grid.n
    k1, k2 = f.grid.wavenumbers()
    symbol = -4.0 * math.pi**2 * (k1 * k1 + k2 * k2)
    return ScalarField(f.grid, from_fourier(symbol * to_fourier(f.values)))


def poisson_neg(rhs: ScalarField, eps: float) -> ScalarField:
    """Solve ``-eps * Lap(phi) = rhs`` with zero-mean ``phi``."""
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps!r}")
    _require_zero_mean(rhs, "Poisson right-hand side")
    symbol = _inverse_laplacian_symbol(rhs.grid.n) / eps
    return ScalarField(rhs.grid, from_fourier(symbol * to_fourier(rhs.values)))


def gradient(f: ScalarField) -> VectorField:
    d1, d2 = _derivative_symbols(f.grid.n)
    fh = to_fourier(f.values)
    return VectorField(f.grid, np.stack([from_fourier(d1 * fh), from_fourier(d2 * fh)]))


def jacobian(v: VectorField) -> TensorField:
    """``T[i, j] = d_i v_j``."""
    d1, d2 = _derivative_symbols(v.grid.n)
    out = np.empty((2, 2, v.grid.n, v.grid.n))
    for j in range(2):
        vh = to_fourier(v.values[j])
        out[0, j] = from_fourier(d1 * vh)
        out[1, j] = from_fourier(d2 * vh)
    return TensorField(v.grid, out)


def divergence(v: VectorField) -> ScalarField:
    d1, d2 = _derivative_symbols(v.grid.n)
    return ScalarField(
        v.grid, from_fourier(d1 * to_fourier(v.values[0]) + d2 * to_fourier(v.values[1]))
    )


def curl(v: VectorField) -> ScalarField:
    """Scalar curl ``d1 v2 - d2 v1``."""
    d1, d2 = _derivative_symbols(v.grid.n)
    return ScalarField(
        v.grid, from_fourier(d1 * to_fourier(v.values[1]) - d2 * to_fourier(v.values[0]))
    )


def stream_function(omega: ScalarField) -> ScalarField:
    """Zero-mean ``psi`` with ``Lap(psi) = omega``."""
    _require_zero_mean(omega, "vorticity")
    return -poisson_neg(omega, 1.0)


def biot_savart(omega: ScalarField) -> VectorField:
    """Velocity ``u = (grad psi)^perp`` with ``Lap(psi) = omega`` and ``v^perp = (-v2, v1)``."""
    _require_zero_mean(omega, "vorticity")
    d1, d2 = _derivative_symbols(omega.grid.n)
    psi_h = -_inverse_laplacian_symbol(omega.grid.n) * to_fourier(omega.values)
    u1 = -from_fourier(d2 * psi_h)
    u2 = from_fourier(d1 * psi_h)
    return VectorField(omega.grid, np.stack([u1, u2]))


def h_minus1_norm(f: ScalarField) -> float:
    """Homogeneous H^{-1} norm; the k=0 mode is excluded."""
    c = to_fourier(f.values)
    return float(math.sqrt(np.sum(np.abs(c) ** 2 * _inverse_laplacian_symbol(f.grid.n))))


def weak_gap(f: ScalarField, kmax: int) -> float:
    """Largest pairing ``|<f, exp(2 pi i k.x)>|`` over modes with ``|k|_inf <= kmax``."""
    n = f.grid.n
    if not isinstance(kmax, (int, np.integer)) or kmax < 0 or 3 * kmax > n:
        raise ParameterError(f"kmax must be an integer in [0, n/3], got {kmax!r} for n={n}")
    k1, k2 = f.grid.wavenumbers()
    window = (np.abs(k1) <= kmax) & (np.abs(k2) <= kmax)
    return float(np.abs(to_fourier(f.values))[window].max())


# --- Green function of -Lap on the torus --------------------------------------

EWALD_SPLIT = 0.01  # splitting "time" s0 of the heat-kernel representation
EWALD_KMAX = 12
LOG_PREFACTOR = -1.0 / (2.0 * math.pi)


@dataclass(frozen=True)
class GreenSplit:
    """Zero-mean periodic Green function ``V = V0 + V1`` with ``V1 = -(1/2pi) log|x|``.

    ``V`` is summed in Ewald form: a Gaussian-damped Fourier series
    (``coefficients``, indexed by ``modes``) plus exponential-integral image
    terms. The log singularity of the central image is removed analytically,
    so ``V0`` is evaluated without cancellation, including at ``x = 0``.
    """

    split: float = EWALD_SPLIT
    kmax: int = EWALD_KMAX
    log_prefactor: float = LOG_PREFACTOR

    @property
    def modes(self) -> np.ndarray:
        r = np.arange(-self.kmax, self.kmax + 1)
        k = np.stack(np.meshgrid(r, r, indexing="ij"), axis=-1).reshape(-1, 2)
        return k[np.any(k != 0, axis=1)].astype(float)

    @property
    def coefficients(self) -> np.ndarray:
        k2 = np.sum(self.modes**2, axis=1)
        return np.exp(-4.0 * math.pi**2 * k2 * self.split) / (4.0 * math.pi**2 * k2)

    def smooth_part(self, x: np.ndarray, with_gradient: bool = False):
        """``V0`` (and optionally its gradient) at points ``x`` of shape (..., 2)."""
        x = wrap_positions(np.asarray(x, dtype=float))
        s0 = self.split
        r2 = np.sum(x * x, axis=-1)
        z = r2 / (4.0 * s0)
        val = (_exp1_plus_log(z) + math.log(4.0 * s0)) / (4.0 * math.pi) - s0
        grad = None
        if with_gradient:
            # x (1 - e^{-z}) / (2 pi r^2) written to stay finite at r = 0
            ratio = np.where(z > 0, -np.expm1(-z) / np.where(z > 0, z, 1.0), 1.0)
            grad = x * (ratio / (8.0 * math.pi * s0))[..., None]
        for m1 in (-1, 0, 1):
            for m2 in (-1, 0, 1):
                if m1 == 0 and m2 == 0:
                    continue
                d = x - np.array([m1, m2], dtype=float)
                dr2 = np.sum(d * d, axis=-1)
                dz = dr2 / (4.0 * s0)
                val = val + special.exp1(dz) / (4.0 * math.pi)
                if with_gradient:
                    grad = grad - d * (np.exp(-dz) / (2.0 * math.pi * dr2))[..., None]
        phase = 2.0 * math.pi * (x @ self.modes.T)
        val = val + np.cos(phase) @ self.coefficients
        if with_gradient:
            weights = self.coefficients[:, None] * self.modes * (2.0 * math.pi)
            grad = grad - np.sin(phase) @ weights
            return val, grad
        return val

    def singular_part(self, x: np.ndarray) -> np.ndarray:
        x = wrap_positions(np.asarray(x, dtype=float))
        r = np.sqrt(np.sum(x * x, axis=-1))
        if np.any(r == 0.0):
            raise SingularPointError("log kernel evaluated at x = 0")
        return self.log_prefactor * np.log(r)


def _exp1_plus_log(z: np.ndarray) -> np.ndarray:
    """``E1(z) + log(z)``, an entire function equal to ``-gamma + Ein(z)``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = z < 0.5
    zs = z[small]
    # Ein(z) = sum_{k>=1} (-1)^{k+1} z^k / (k k!)
    term = np.ones_like(zs)
    ein = np.zeros_like(zs)
    for k in range(1, 25):
        term = term * zs / k
        ein += (-1) ** (k + 1) * term / k
    out[small] = -np.euler_gamma + ein
    zl = z[~small]
    out[~small] = special.exp1(zl) + np.log(zl)
    return out


def green_split_eval(x, split: GreenSplit | None = None) -> tuple[float, float, float]:
    """Return ``(V, V0, V1)`` at a single point ``x`` of the torus, ``x != 0``."""
    split = GreenSplit() if split is None else split
    x = np.asarray(x, dtype=float).reshape(2)
    v1 = float(split.singular_part(x))
    v0 = float(split.smooth_part(x))
    return v0 + v1, v0, v1


def green_fourier_sum(x, cutoff: int) -> float:
    """Plain truncated Fourier series of ``V`` over ``|k|_inf <= cutoff``.

    Slowly convergent near the origin; kept as an independent cross-check of
    the Ewald evaluation.
    """
    x = wrap_positions(np.asarray(x, dtype=float).reshape(2))
    r = np.arange(-cutoff, cutoff + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    k2sum = k1 * k1 + k2 * k2
    nz = k2sum > 0
    phase = 2.0 * math.pi * (k1[nz] * x[0] + k2[nz] * x[1])
    return float(np.sum(np.cos(phase) / (4.0 * math.pi**2 * k2sum[nz])))


@lru_cache(maxsize=None)
def grad_v0_sup(n: int = 512) -> float:
    """``max |grad V0|`` over the nodes of an ``n x n`` grid of the fundamental cell."""
    split = GreenSplit()
    c = TorusGrid(n).coords()
    x1, x2 = np.meshgrid(c, c, indexing="ij")
    pts = np.stack([x1, x2], axis=-1)
    # image terms only; the band-limited Fourier part is summed separably below
    _, grad = GreenSplit(split.split, kmax=0).smooth_part(pts, with_gradient=True)
    r = np.arange(-split.kmax, split.kmax + 1)
    kk1, kk2 = np.meshgrid(r, r, indexing="ij")
    k2sum = kk1 * kk1 + kk2 * kk2
    coef = np.zeros(k2sum.shape)
    nz = k2sum > 0
    coef[nz] = np.exp(-4.0 * math.pi**2 * k2sum[nz] * split.split) / (4.0 * math.pi**2 * k2sum[nz])
    e = np.exp(2j * math.pi * np.outer(c, r))  # (n, 2K+1)
    # grad of sum_k c_k exp(2 pi i k.x) = sum_k 2 pi i k c_k exp(...)
    g1 = (e @ (2j * math.pi * kk1 * coef) @ e.T).real
    g2 = (e @ (2j * math.pi * kk2 * coef) @ e.T).real
    grad = grad + np.stack([g1, g2], axis=-1)
    return float(np.sqrt(np.sum(grad * grad, axis=-1)).max())


# --- particle/grid transfer ---------------------------------------------------


def wrap_positions(x: np.ndarray) -> np.ndarray:
    """Map points into [-1/2, 1/2)."""
    w = np.mod(x + 0.5, 1.0) - 0.5
    return np.where(w >= 0.5, -0.5, w)


@dataclass(frozen=True)
class CICStencil:
    """Bilinear (cloud-in-cell) node indices and weights for a set of points."""

    i0: np.ndarray
    j0: np.ndarray
    i1: np.ndarray
    j1: np.ndarray
    w00: np.ndarray
    w01: np.ndarray
    w10: np.ndarray
    w11: np.ndarray

    @classmethod
    def build(cls, grid: TorusGrid, positions: np.ndarray) -> "CICStencil":
        n = grid.n
        s = (positions + 0.5) * n
        base = np.floor(s)
        frac = s - base
        base = base.astype(np.int64) % n
        i0, j0 = base[:, 0], base[:, 1]
        fx, fy = frac[:, 0], frac[:, 1]
        gx, gy = 1.0 - fx, 1.0 - fy
        return cls(i0, j0, (i0 + 1) % n, (j0 + 1) % n, gx * gy, gx * fy, fx * gy, fx * fy)

    def gather(self, values: np.ndarray) -> np.ndarray:
        """Interpolate grid arrays with trailing axes (..., n, n) to the points."""
        return (
            values[..., self.i0, self.j0] * self.w00
            + values[..., self.i0, self.j1] * self.w01
            + values[..., self.i1, self.j0] * self.w10
            + values[..., self.i1, self.j1] * self.w11
        )

    def scatter(self, n: int, amounts: np.ndarray) -> np.ndarray:
        """Accumulate per-point amounts onto an (n, n) array (no volume scaling)."""
        flat = np.zeros(n * n)
        for ii, jj, w in (
            (self.i0, self.j0, self.w00),
            (self.i0, self.j1, self.w01),
            (self.i1, self.j0, self.w10),
            (self.i1, self.j1, self.w11),
        ):
            flat += np.bincount(ii * n + jj, weights=w * amounts, minlength=n * n)
        return flat.reshape(n, n)


def interpolate(f: ScalarField | VectorField | TensorField, positions: np.ndarray) -> np.ndarray:
    return CICStencil.build(f.grid, positions).gather(f.values)


# --- binary field format ------------------------------------------------------

_FIELD_HEADER = struct.Struct("<4sQQ")


def write_field(path, f: ScalarField | VectorField | TensorField) -> None:
    kind = "tensor" if isinstance(f, TensorField) else "vector" if isinstance(f, VectorField) else "scalar"
    payload = _FIELD_HEADER.pack(FIELD_MAGIC, f.grid.n, FIELD_KIND_TAGS[kind])
    payload += np.ascontiguousarray(f.values, dtype="<f8").tobytes()
    _atomic_write(Path(path), payload)


def read_field(path):
    data = Path(path).read_bytes()
    if len(data) < _FIELD_HEADER.size:
        raise FileFormatError(f"{path}: truncated field header")
    magic, n, tag = _FIELD_HEADER.unpack_from(data)
    if magic != FIELD_MAGIC:
        raise FileFormatError(f"{path}: bad magic {magic!r}")
    grid = TorusGrid(int(n))
    shape = {0: (n, n), 1: (2, n, n), 2: (2, 2, n, n)}.get(tag)
    if shape is None:
        raise FileFormatError(f"{path}: unknown field kind tag {tag}")
    arr = np.frombuffer(data, dtype="<f8", offset=_FIELD_HEADER.size)
    if arr.size != int(np.prod(shape)):
        raise FileFormatError(f"{path}: payload size does not match header")
    arr = arr.reshape(shape)
    return {0: ScalarField, 1: VectorField, 2: TensorField}[tag](grid, arr)


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(payload)
    tmp.replace(path)
