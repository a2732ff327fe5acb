"""Sampled transverse fields, mode profiles and SLM transmission masks.

Lengths are in mm and transverse wavevectors in rad/mm everywhere. A grid of
``n`` samples per side covers ``[-width/2, width/2)`` with the origin on a
sample, so ``values[n//2, n//2]`` is the on-axis value. Arrays are indexed
``[iy, ix]``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import specfun
from .outputs import atomic_write_bytes

EDGE_TOLERANCE = 1e-6


class GridError(ValueError):
    """Fields live on incompatible grids."""


class NyquistError(ValueError):
    """A requested spatial frequency is not resolved by the grid."""


class WindowError(ValueError):
    """A Gaussian envelope is clipped by the edge of the window."""


@dataclass(frozen=True)
class GridSpec:
    n: int = 1024
    width: float = 4.0

    def __post_init__(self):
        if self.n < 64 or self.n & (self.n - 1):
            raise GridError(f"grid size must be a power of two >= 64, got {self.n}")
        if not self.width > 0:
            raise GridError("grid width must be positive")

    @property
    def dx(self) -> float:
        return self.width / self.n

    @property
    def nyquist(self) -> float:
        """Largest resolved angular spatial frequency, rad/mm."""
        return math.pi / self.dx

    @property
    def axis(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    def scaled(self, factor: float) -> "GridSpec":
        return GridSpec(self.n, self.width * abs(factor))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return _coords(self)

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        return _polar(self)

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Angular spatial frequencies (kx, ky) in FFT order, rad/mm."""
        k = 2 * math.pi * np.fft.fftfreq(self.n, self.dx)
        return k[None, :], k[:, None]


@lru_cache(maxsize=8)
def _coords(grid: GridSpec):
    a = grid.axis
    x, y = np.meshgrid(a, a)
    x.setflags(write=False)
    y.setflags(write=False)
    return x, y


@lru_cache(maxsize=8)
def _polar(grid: GridSpec):
    x, y = _coords(grid)
    r = np.hypot(x, y)
    phi = np.arctan2(y, x)
    r.setflags(write=False)
    phi.setflags(write=False)
    return r, phi


@lru_cache(maxsize=8)
def _radius_classes(grid: GridSpec):
    """Distinct radii on the grid and the inverse index back onto it."""
    i = np.arange(grid.n) - grid.n // 2
    s = i[None, :] ** 2 + i[:, None] ** 2
    uniq, inverse = np.unique(s, return_inverse=True)
    return np.sqrt(uniq.astype(float)) * grid.dx, inverse.reshape(s.shape)


def radial_function(grid: GridSpec, fn) -> np.ndarray:
    """Evaluate a radial function once per distinct radius and scatter it."""
    radii, inverse = _radius_classes(grid)
    return np.asarray(fn(radii))[inverse]


@dataclass(frozen=True, eq=False)
class Field:
    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.grid.n, self.grid.n):
            raise GridError(f"values shape {v.shape} does not match grid n={self.grid.n}")
        if v is self.values and v.flags.writeable:
            v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def power(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx**2)

    def normalized(self) -> "Field":
        p = self.power()
        if p == 0:
            return self
        return Field(self.grid, self.values / math.sqrt(p))

    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def inner(self, other: "Field") -> complex:
        """<self|other> = sum(conj(self) * other) dx^2."""
        check_same_grid(self, other)
        return complex(np.vdot(self.values, other.values) * self.grid.dx**2)

    def conj(self) -> "Field":
        return Field(self.grid, np.conj(self.values))

    def __mul__(self, other):
        if isinstance(other, Field):
            check_same_grid(self, other)
            return Field(self.grid, self.values * other.values)
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__

    def value_at(self, x: float, y: float) -> complex:
        """Sample nearest to the physical point (x, y)."""
        ix = int(round(x / self.grid.dx)) + self.grid.n // 2
        iy = int(round(y / self.grid.dx)) + self.grid.n // 2
        return complex(self.values[iy, ix])


def check_same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise GridError(f"grid mismatch: {a.grid} vs {b.grid}")


def relative_l2(a: Field, b: Field) -> float:
    """||a - b|| / max(||a||, ||b||), zero when both fields vanish."""
    check_same_grid(a, b)
    scale = max(np.linalg.norm(a.values), np.linalg.norm(b.values))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(a.values - b.values) / scale)


def _check_envelope(waist: float, grid: GridSpec) -> None:
    if not waist > 0:
        raise WindowError("waist must be positive")
    edge = math.exp(-((grid.width / 2) ** 2) / waist**2)
    if edge > EDGE_TOLERANCE:
        raise WindowError(
            f"waist {waist} mm is clipped by a {grid.width} mm window "
            f"(edge amplitude {edge:.2e} of peak)"
        )


def _check_nyquist(k: float, grid: GridSpec) -> None:
    if abs(k) >= grid.nyquist:
        raise NyquistError(
            f"spatial frequency {abs(k):g} rad/mm exceeds grid Nyquist {grid.nyquist:g} rad/mm"
        )


def gaussian_pump(w0: float, grid: GridSpec) -> Field:
    """(1/w0) sqrt(2/pi) exp(-r^2/w0^2); unit power by construction."""
    if not w0 < grid.width / 4:
        raise WindowError(f"pump waist {w0} mm does not fit a {grid.width} mm window")
    _check_envelope(w0, grid)
    r, _ = grid.polar()
    values = math.sqrt(2 / math.pi) / w0 * np.exp(-(r**2) / w0**2)
    return Field(grid, values)


def gaussian_mode(waist: float, grid: GridSpec) -> Field:
    """Unit-power fundamental Gaussian, same profile as the pump."""
    _check_envelope(waist, grid)
    r, _ = grid.polar()
    return Field(grid, math.sqrt(2 / math.pi) / waist * np.exp(-(r**2) / waist**2))


@dataclass(frozen=True)
class ModeParams:
    ell: int
    kr: float
    waist: float

    def __post_init__(self):
        if self.kr < 0:
            raise ValueError("kr must be non-negative")
        if not self.waist > 0:
            raise ValueError("waist must be positive")


def bg_radial(ell: int, kr: float, r):
    """Radial factor J_|ell|(kr r) of a Bessel-Gauss mode.

    The |ell| order makes the kr -> 0 limit of every normalized mode the
    ordinary p = 0 Laguerre-Gauss mode with a positive radial profile.
    """
    return specfun.bessel_j(abs(ell), kr * np.asarray(r))


def bg_mode(params: ModeParams, grid: GridSpec) -> Field:
    """Unit-power Bessel-Gauss mode J_|l|(kr r) exp(i l phi) exp(-r^2/w^2).

    For ``ell != 0`` and ``kr == 0`` the mode vanishes identically and the
    zero field is returned.
    """
    _check_nyquist(params.kr, grid)
    _check_envelope(params.waist, grid)
    _, phi = grid.polar()
    radial = radial_function(
        grid,
        lambda r: bg_radial(params.ell, params.kr, r) * np.exp(-(r**2) / params.waist**2),
    )
    return Field(grid, radial * np.exp(1j * params.ell * phi)).normalized()


def bg_mode_oracle(params: ModeParams, grid: GridSpec, n_beta: int = 256) -> Field:
    """Bessel-Gauss mode from the plane-wave generating function.

    Averages ``G(beta) = exp(i kr (y cos b - x sin b)) exp(-r^2/w^2)`` against
    ``exp(-i m beta)`` with the trapezoid rule on ``n_beta`` points. That
    projection carries azimuthal order ``-m``, so it is taken at ``m = -ell``;
    for negative ``ell`` the result is multiplied by ``(-1)^ell`` to land on
    the J_|l| convention of :func:`bg_mode`.
    """
    if n_beta < 64:
        raise ValueError("n_beta must be at least 64")
    _check_nyquist(params.kr, grid)
    _check_envelope(params.waist, grid)
    m = -params.ell
    beta = 2 * math.pi * np.arange(n_beta) / n_beta
    a = grid.axis
    # G separates in x and y, so the beta sum is a matrix product.
    ey = np.exp(1j * params.kr * np.outer(a, np.cos(beta)))
    ex = np.exp(-1j * params.kr * np.outer(a, np.sin(beta)))
    weights = np.exp(-1j * m * beta) / n_beta
    projected = (ey * weights) @ ex.T
    # a projection at rounding level is the exact zero (kr = 0, ell != 0)
    if np.max(np.abs(projected)) < 1e3 * np.finfo(float).eps:
        projected = np.zeros_like(projected)
    x, y = grid.coords()
    values = projected * np.exp(-(x**2 + y**2) / params.waist**2)
    if params.ell < 0 and params.ell % 2:
        values = -values
    return Field(grid, values).normalized()


# --------------------------------------------------------------------------
# Masks
# --------------------------------------------------------------------------


class MaskKind(enum.Enum):
    VORTEX = "vortex"
    BLAZED_AXICON = "blazed-axicon"
    BINARY_AXICON = "binary-axicon"
    BINARY_BESSEL = "binary-bessel"

    @classmethod
    def parse(cls, value) -> "MaskKind":
        if isinstance(value, cls):
            return value
        text = str(value).strip().lower().replace("_", "-")
        for kind in cls:
            if text in (kind.value, kind.name.lower().replace("_", "-")):
                return kind
        raise ValueError(f"unknown mask kind {value!r}")


def _sign(v: np.ndarray) -> np.ndarray:
    # sign(0) = +1
    return np.where(v >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class MaskSpec:
    """Analytic SLM transmission T(r, phi) = radial(r) exp(i l phi).

    A negative ``kr`` denotes the phase conjugate of the radial factor. The
    binary radial factors are real, so their conjugate is themselves.
    """

    kind: MaskKind
    ell: int = 0
    kr: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", MaskKind.parse(self.kind))
        object.__setattr__(self, "ell", int(self.ell))
        object.__setattr__(self, "kr", float(self.kr))

    @property
    def is_binary(self) -> bool:
        return self.kind in (MaskKind.BINARY_AXICON, MaskKind.BINARY_BESSEL)

    def radial(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        k = self.kr
        if self.kind is MaskKind.VORTEX:
            return np.ones_like(r, dtype=complex)
        if self.kind is MaskKind.BLAZED_AXICON:
            return np.exp(1j * k * r)
        if self.kind is MaskKind.BINARY_AXICON:
            return _sign(np.cos(abs(k) * r))
        return _sign(specfun.bessel_j(self.ell, abs(k) * r))

    def radial_phase(self, r) -> np.ndarray:
        """Phase of the radial factor, taken in [0, 2pi) for binary kinds."""
        r = np.asarray(r, dtype=float)
        if self.kind is MaskKind.VORTEX:
            return np.zeros_like(r)
        if self.kind is MaskKind.BLAZED_AXICON:
            return self.kr * r
        return np.where(self.radial(r) > 0, 0.0, math.pi)

    def transmission(self, r, phi) -> np.ndarray:
        return self.radial(r) * np.exp(1j * self.ell * np.asarray(phi))

    def phase(self, r, phi) -> np.ndarray:
        return np.mod(self.radial_phase(r) + self.ell * np.asarray(phi), 2 * math.pi)

    def conjugate(self) -> "MaskSpec":
        return MaskSpec(self.kind, -self.ell, -self.kr)

    def breakpoints(self, r_max: float) -> np.ndarray:
        """Radii in (0, r_max) where a binary radial factor flips sign."""
        k = abs(self.kr)
        if not self.is_binary or k == 0:
            return np.empty(0)
        if self.kind is MaskKind.BINARY_AXICON:
            j = np.arange(0, int(k * r_max / math.pi) + 2)
            z = (j + 0.5) * math.pi / k
            return z[z < r_max]
        return bessel_zeros(abs(self.ell), k * r_max) / k

    def label(self) -> str:
        return f"{self.kind.value}_l{self.ell}_kr{self.kr:g}"


def bessel_zeros(n: int, x_max: float) -> np.ndarray:
    """Positive zeros of J_n below x_max, by bracketing and bisection."""
    x = np.linspace(1e-9, x_max, max(64, int(8 * x_max) + 1))
    v = specfun.bessel_j(n, x)
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0)[0]
    lo = x[idx]
    hi = x[idx + 1]
    flo = v[idx]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = specfun.bessel_j(n, mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def check_mask_nyquist(spec: MaskSpec, grid: GridSpec, r_min: float = 0.05) -> None:
    """Local frequency |kr| + |l|/r_min must stay below the grid Nyquist."""
    local = abs(spec.kr) + abs(spec.ell) / r_min
    if local >= grid.nyquist:
        raise NyquistError(
            f"{spec.label()}: local frequency {local:.1f} rad/mm at r={r_min} mm "
            f"exceeds grid Nyquist {grid.nyquist:.1f} rad/mm"
        )


@dataclass(frozen=True, eq=False)
class Mask:
    spec: MaskSpec
    field: Field
    phase: np.ndarray

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    def value_at(self, x: float, y: float) -> complex:
        return self.field.value_at(x, y)


def make_mask(kind, ell: int, kr: float, grid: GridSpec, r_min: float = 0.05) -> Mask:
    """Unimodular SLM transmission sampled on ``grid``."""
    spec = MaskSpec(kind, ell, kr)
    check_mask_nyquist(spec, grid, r_min)
    return _sample_mask(spec, grid)


@lru_cache(maxsize=64)
def _sample_mask(spec: MaskSpec, grid: GridSpec) -> Mask:
    _, phi = grid.polar()
    phase = np.mod(radial_function(grid, spec.radial_phase) + spec.ell * phi, 2 * math.pi)
    phase.setflags(write=False)
    return Mask(spec, Field(grid, np.exp(1j * phase)), phase)


def mask_radial_factor(spec: MaskSpec, grid: GridSpec) -> np.ndarray:
    """The radial factor alone; real-valued (exactly +-1) for binary kinds."""
    return radial_function(grid, spec.radial)


def phase_to_gray(phase: np.ndarray) -> np.ndarray:
    """gray = round(((phase mod 2pi) / 2pi) * 255) as uint8."""
    wrapped = np.mod(phase, 2 * math.pi)
    return np.rint(wrapped / (2 * math.pi) * 255).astype(np.uint8)


def write_pgm(path, gray: np.ndarray) -> Path:
    """Binary (P5) 8-bit portable graymap; row i of the array is image row i."""
    gray = np.ascontiguousarray(gray, dtype=np.uint8)
    h, w = gray.shape
    return atomic_write_bytes(path, f"P5\n{w} {h}\n255\n".encode("ascii") + gray.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM file")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    if maxval != 255:
        raise ValueError("only 8-bit graymaps are supported")
    return np.frombuffer(parts[4][: w * h], dtype=np.uint8).reshape(h, w)


def mask_filename(spec: MaskSpec) -> str:
    return f"mask_{spec.label()}.pgm"


def export_mask(mask: Mask, directory) -> Path:
    return write_pgm(Path(directory) / mask_filename(mask.spec), phase_to_gray(mask.phase))
