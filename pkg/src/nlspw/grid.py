"""Periodic-box discretization: grids, lattice fields and spectral operators.

The box ``[-L, L)^d`` with ``n`` points per axis stands in for R^d.  All
operators are Fourier multipliers evaluated with :mod:`scipy.fft`; the
number of transform threads is capped by the ``NLSPW_THREADS`` environment
variable.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.fft as sfft


class GridMismatchError(ValueError):
    """Two fields defined on different grids were combined."""


class NonFiniteFieldError(ValueError):
    """A field contains NaN or Inf samples."""


class ParameterError(ValueError):
    """Model parameters outside the L2-supercritical / H1-subcritical window."""


def fft_workers() -> int:
    env = os.environ.get("NLSPW_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def fftn(a: np.ndarray) -> np.ndarray:
    return sfft.fftn(a, workers=fft_workers())


def ifftn(a: np.ndarray) -> np.ndarray:
    return sfft.ifftn(a, workers=fft_workers())


@dataclass(frozen=True)
class ModelParams:
    """Dimension ``d``, power ``p`` and frequency ``omega`` of the model.

    Construction validates ``1 + 4/d < p`` and, for ``d >= 3``,
    ``p < (d+2)/(d-2)``.
    """

    d: int
    p: float
    omega: float = 1.0

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ParameterError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not self.omega > 0:
            raise ParameterError(f"omega must be positive, got {self.omega}")
        lower = 1.0 + 4.0 / self.d
        if not self.p > lower:
            raise ParameterError(
                f"p={self.p} violates the L2-supercritical window p > 1 + 4/d = {lower:g}"
            )
        if self.d >= 3:
            upper = (self.d + 2.0) / (self.d - 2.0)
            if not self.p < upper:
                raise ParameterError(
                    f"p={self.p} violates the H1-subcritical window p < (d+2)/(d-2) = {upper:g}"
                )

    @property
    def s_p(self) -> float:
        return self.d / 2.0 - 2.0 / (self.p - 1.0)

    @property
    def dp(self) -> float:
        """d(p-1), the combination that appears in almost every exponent."""
        return self.d * (self.p - 1.0)

    @property
    def mass_exponent(self) -> float:
        """Power of ||f||_2 in N2, I and B: p + 1 - (d/2)(p-1)."""
        return self.p + 1.0 - 0.5 * self.dp

    @property
    def grad_exponent(self) -> float:
        """Power of ||grad f||_2 in N2: (d/2)(p-1) - 2."""
        return 0.5 * self.dp - 2.0

    @property
    def k_coefficient(self) -> float:
        """d(p-1)/(2(p+1)), the weight of the L^{p+1} term in K."""
        return self.dp / (2.0 * (self.p + 1.0))

    @property
    def critical_sobolev(self) -> float:
        """2* = 2d/(d-2) for d >= 3, infinity otherwise."""
        return np.inf if self.d <= 2 else 2.0 * self.d / (self.d - 2.0)

    def with_omega(self, omega: float) -> "ModelParams":
        return ModelParams(self.d, self.p, omega)

    def to_dict(self) -> dict:
        return {"d": self.d, "p": self.p, "omega": self.omega}


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic lattice on ``[-L, L)^d`` with ``n`` points per axis."""

    d: int
    n: int
    L: float
    dealias: bool = False

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n_per_axis must be a power of two >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"box half-length must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n ** self.d

    @property
    def cell_volume(self) -> float:
        return self.h ** self.d

    @property
    def k_max(self) -> float:
        return np.pi / self.h

    @cached_property
    def x_axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def k_axis(self) -> np.ndarray:
        """Lattice wavenumbers (pi/L){-n/2, ..., n/2-1} in FFT order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h)

    @cached_property
    def k_symbol(self) -> np.ndarray:
        """First-derivative symbol per axis: the lattice wavenumbers with the
        unpaired Nyquist mode zeroed, so that odd derivatives of real data
        stay real."""
        k = self.k_axis.copy()
        k[self.n // 2] = 0.0
        return k

    @cached_property
    def coords(self) -> tuple[np.ndarray, ...]:
        """Sparse (broadcastable) coordinate arrays, one per axis."""
        return tuple(np.meshgrid(*([self.x_axis] * self.d), indexing="ij", sparse=True))

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.k_symbol] * self.d), indexing="ij", sparse=True))

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 with the full lattice wavenumbers (Nyquist kept): the symbol
        of -Laplacian, of the free propagator and of ||grad f||^2."""
        raw = np.meshgrid(*([self.k_axis] * self.d), indexing="ij", sparse=True)
        return sum(k * k for k in raw)

    @cached_property
    def k2_index(self) -> np.ndarray:
        """Integer array with k2 = (pi/L)^2 * k2_index (sums of squared mode numbers)."""
        m = np.rint(self.k_axis * self.L / np.pi).astype(np.int64)
        raw = np.meshgrid(*([m] * self.d), indexing="ij", sparse=True)
        return sum(k * k for k in raw)

    @cached_property
    def r(self) -> np.ndarray:
        return np.sqrt(sum(x * x for x in self.coords))

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask: keeps modes with |k_j| < (2/3) k_max on every axis."""
        cut = (2.0 / 3.0) * self.k_max
        mask = np.ones(self.shape, dtype=bool)
        raw = np.meshgrid(*([self.k_axis] * self.d), indexing="ij", sparse=True)
        for k in raw:
            mask &= np.abs(k) < cut
        return mask

    def to_dict(self) -> dict:
        return {"d": self.d, "n_per_axis": self.n, "L": self.L, "dealias": self.dealias}

    @classmethod
    def from_dict(cls, data: dict) -> "GridSpec":
        return cls(int(data["d"]), int(data["n_per_axis"]), float(data["L"]),
                   bool(data.get("dealias", False)))


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on a :class:`GridSpec` lattice.

    Fields behave as values: the sample array is read-only and every
    operation returns a new field.
    """

    grid: GridSpec
    values: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.complex128, copy=True)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values of shape {vals.shape} do not fit grid {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "Field":
        return cls(grid, np.broadcast_to(fn(*grid.coords), grid.shape))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.shape))

    @property
    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def require_finite(self) -> "Field":
        if not self.is_finite:
            bad = int(np.count_nonzero(~np.isfinite(self.values)))
            raise NonFiniteFieldError(f"field has {bad} non-finite samples")
        return self

    def _check(self, other: "Field") -> None:
        if not isinstance(other, Field):
            raise TypeError(f"expected Field, got {type(other).__name__}")
        if other.grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return NotImplemented

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values * other.values)
        if np.isscalar(other):
            return Field(self.grid, self.values * other)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.grid, -self.values)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def spectrum(self) -> np.ndarray:
        return fftn(self.values)

    def allclose(self, other: "Field", atol: float = 0.0, rtol: float = 1e-12) -> bool:
        self._check(other)
        return bool(np.allclose(self.values, other.values, atol=atol, rtol=rtol))


def _same_grid(*fields: Field) -> GridSpec:
    grid = fields[0].grid
    for f in fields[1:]:
        fields[0]._check(f)
    return grid


def laplacian(f: Field) -> Field:
    """Spectral Laplacian: multiplier -|k|^2."""
    return Field(f.grid, ifftn(-f.grid.k2 * fftn(f.values)))


def gradient(f: Field) -> list[Field]:
    """Spectral gradient, one field per axis (multiplier i k_j)."""
    fh = fftn(f.values)
    return [Field(f.grid, ifftn(1j * k * fh)) for k in f.grid.wavenumbers]


def gradient_arrays(values: np.ndarray, grid: GridSpec) -> list[np.ndarray]:
    fh = fftn(values)
    return [ifftn(1j * k * fh) for k in grid.wavenumbers]


def free_propagate(f: Field, t: float) -> Field:
    """Apply the free group exp((i/2) t Laplacian) mode-wise."""
    if t == 0:
        return Field(f.grid, f.values)
    return Field(f.grid, ifftn(np.exp(-0.5j * t * f.grid.k2) * fftn(f.values)))


def inner(f: Field, g: Field) -> complex:
    """Lattice quadrature h^d sum f conj(g)."""
    grid = _same_grid(f, g)
    return complex(np.vdot(g.values, f.values) * grid.cell_volume)


def l2_norm_sq(f: Field) -> float:
    return float(np.vdot(f.values, f.values).real * f.grid.cell_volume)


def l2_norm_sq_spectral(f: Field) -> float:
    fh = fftn(f.values)
    return float(np.vdot(fh, fh).real * f.grid.cell_volume / f.grid.size)


def grad_norm_sq(f: Field) -> float:
    """||grad f||^2 = -<Laplacian f, f> via Parseval."""
    return grad_norm_sq_from_spectrum(fftn(f.values), f.grid)


def grad_norm_sq_from_spectrum(fh: np.ndarray, grid: GridSpec) -> float:
    return float(np.sum(grid.k2 * (fh.real ** 2 + fh.imag ** 2)) * grid.cell_volume / grid.size)


def h1_norm(f: Field) -> float:
    return float(np.sqrt(l2_norm_sq(f) + grad_norm_sq(f)))


def lq_norm(f: Field, q: float) -> float:
    vol = f.grid.cell_volume
    if np.isinf(q):
        return float(np.max(np.abs(f.values)))
    return float((np.sum(np.abs(f.values) ** q) * vol) ** (1.0 / q))


def evaluate_trig_interpolant(f: Field, points_per_axis: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``f`` on a tensor grid.

    ``points_per_axis`` gives the sample positions along each axis.  Points
    outside the fundamental cell wrap periodically.
    """
    grid = f.grid
    coeff = fftn(f.values) / grid.size
    k = grid.k_axis
    out = coeff
    for axis, pts in enumerate(points_per_axis):
        pts = np.asarray(pts, dtype=float)
        # exp(i k (x - x0)) with x0 = -L the first lattice point
        mat = np.exp(1j * np.outer(pts + grid.L, k))
        out = np.moveaxis(np.tensordot(mat, out, axes=([1], [axis])), 0, axis)
    return out


# --- serialization -------------------------------------------------------

_MAGIC = b"NLSPWFLD"


def save_field(f: Field, path: str | Path, fmt: str | None = None) -> Path:
    """Write ``f`` as flat binary (default) or CSV of (index, re, im).

    Both formats start with a JSON header ``{d, n_per_axis, L}``.
    """
    path = Path(path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "bin")
    header = json.dumps(f.grid.to_dict(), sort_keys=True)
    flat = np.ascontiguousarray(f.values).ravel()
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_MAGIC + b"\n" + header.encode() + b"\n")
            fh.write(flat.astype("<c16").tobytes())
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write("# " + header + "\n")
            fh.write("index,re,im\n")
            for i, z in enumerate(flat):
                fh.write(f"{i},{float(z.real)!r},{float(z.imag)!r}\n")
    else:
        raise ValueError(f"unknown field format {fmt!r}")
    return path


def load_field(path: str | Path) -> Field:
    path = Path(path)
    with open(path, "rb") as fh:
        first = fh.readline()
        if first.rstrip(b"\n") == _MAGIC:
            grid = GridSpec.from_dict(json.loads(fh.readline()))
            data = np.frombuffer(fh.read(), dtype="<c16")
            return Field(grid, data.reshape(grid.shape))
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path} is not a field file")
        grid = GridSpec.from_dict(json.loads(header[1:]))
        fh.readline()
        vals = np.empty(grid.size, dtype=np.complex128)
        for line in fh:
            i, re, im = line.split(",")
            vals[int(i)] = complex(float(re), float(im))
    return Field(grid, vals.reshape(grid.shape))
