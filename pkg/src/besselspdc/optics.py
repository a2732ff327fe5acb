"""Scalar paraxial optics: ray matrices, angular-spectrum propagation, relays.

Converging lenses have ``f > 0`` and imprint ``exp(-i pi r^2 / (lambda f))``.
Propagation drops the common carrier ``exp(i k z)``. Ray algebra acts on the
``(x, alpha)`` vector of one transverse axis.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Optional, Union

import numpy as np

from .fields import Field, GridSpec, check_same_grid, gaussian_mode

DEFAULT_WAVELENGTH_NM = 710.0


class AliasingWarning(UserWarning):
    """Field has spectral content close to the grid's frequency edge."""


# --------------------------------------------------------------------------
# Ray algebra
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class RayMatrix:
    a: float
    b: float
    c: float
    d: float

    @classmethod
    def identity(cls) -> "RayMatrix":
        return cls(1.0, 0.0, 0.0, 1.0)

    @property
    def det(self) -> float:
        return self.a * self.d - self.b * self.c

    def __matmul__(self, other: "RayMatrix") -> "RayMatrix":
        return RayMatrix(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]])


@dataclass(frozen=True)
class Ray:
    x: float
    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.alpha)):
            raise ValueError("ray components must be finite")


def apply(matrix: RayMatrix, ray: Ray) -> Ray:
    return Ray(matrix.a * ray.x + matrix.b * ray.alpha, matrix.c * ray.x + matrix.d * ray.alpha)


# --------------------------------------------------------------------------
# Elements
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FreeSpace:
    d: float

    def __post_init__(self):
        if self.d < 0:
            raise ValueError("free-space distance must be non-negative")

    def ray(self) -> RayMatrix:
        return RayMatrix(1.0, self.d, 0.0, 1.0)


@dataclass(frozen=True)
class ThinLens:
    f: float

    def __post_init__(self):
        if self.f == 0:
            raise ValueError("focal length must be nonzero")

    def ray(self) -> RayMatrix:
        return RayMatrix(1.0, 0.0, -1.0 / self.f, 1.0)


@dataclass(frozen=True, eq=False)
class PhaseMask:
    """Thin transmission element; the identity at ray level."""

    mask: Field

    def ray(self) -> RayMatrix:
        return RayMatrix.identity()


@dataclass(frozen=True)
class IdealRelay:
    """Perfect imaging with transverse magnification ``mag``.

    A negative ``mag`` is an inverting relay (a 4f system has ``mag = -1``).
    ``cutoff`` is an optional hard circular aperture in the relay's Fourier
    plane, given as the largest passed spatial frequency in rad/mm at the
    input plane.
    """

    mag: float
    cutoff: Optional[float] = None

    def __post_init__(self):
        if self.mag == 0:
            raise ValueError("relay magnification must be nonzero")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ValueError("cutoff must be positive")

    def ray(self) -> RayMatrix:
        return RayMatrix(self.mag, 0.0, 0.0, 1.0 / self.mag)


@dataclass(frozen=True)
class Reflection:
    """Mirror image across one transverse axis: ``axis="x"`` maps x to -x.

    Reverses the handedness of azimuthal phase, so it maps OAM l to -l.
    At ray level it acts on the x axis only.
    """

    axis: str = "x"

    def __post_init__(self):
        if self.axis not in ("x", "y"):
            raise ValueError("axis must be 'x' or 'y'")

    def ray(self) -> RayMatrix:
        s = -1.0 if self.axis == "x" else 1.0
        return RayMatrix(s, 0.0, 0.0, s)


OpticalElement = Union[FreeSpace, ThinLens, PhaseMask, IdealRelay, Reflection]


def ray_transfer(elements) -> RayMatrix:
    """Matrix of an element or a train listed in propagation order.

    The first element acts first, so the product is formed right to left.
    """
    if not isinstance(elements, (list, tuple)):
        return elements.ray()
    m = RayMatrix.identity()
    for el in elements:
        m = el.ray() @ m
    return m


# --------------------------------------------------------------------------
# Wave optics
# --------------------------------------------------------------------------


def _fft2(v):
    return np.fft.fft2(v, norm="ortho")


def _ifft2(v):
    return np.fft.ifft2(v, norm="ortho")


@lru_cache(maxsize=16)
def _kz_minus_k(grid: GridSpec, wavelength_nm: float):
    """kz - k on the FFT grid, with evanescent entries as imaginary kz."""
    k = 2 * math.pi / (wavelength_nm * 1e-6)
    kx, ky = grid.frequencies()
    kt2 = kx**2 + ky**2
    kz = np.sqrt((k**2 - kt2).astype(complex))
    # k - sqrt(k^2 - kt2) written without cancellation for propagating waves
    diff = np.where(kt2 < k**2, -kt2 / (k + kz), kz - k)
    diff.setflags(write=False)
    return diff


def spectral_edge_fraction(f: Field, edge: float = 0.9) -> float:
    """Power fraction with |kx| or |ky| above ``edge`` times Nyquist."""
    spec = np.abs(_fft2(f.values)) ** 2
    total = spec.sum()
    if total == 0:
        return 0.0
    kx, ky = f.grid.frequencies()
    lim = edge * f.grid.nyquist
    outer = (np.abs(kx) > lim) | (np.abs(ky) > lim)
    return float(spec[np.broadcast_to(outer, spec.shape)].sum() / total)


def propagate(
    f: Field,
    distance: float,
    wavelength: float = DEFAULT_WAVELENGTH_NM,
    alias_threshold: float = 1e-6,
) -> Field:
    """Angular-spectrum propagation by ``distance`` mm at ``wavelength`` nm.

    Warns with :class:`AliasingWarning` when more than ``alias_threshold`` of
    the power sits within 10% of the grid's frequency edge.
    """
    if distance == 0:
        return f
    frac = spectral_edge_fraction(f)
    if frac > alias_threshold:
        warnings.warn(
            f"{frac:.2e} of the power lies within 10% of the grid frequency edge",
            AliasingWarning,
            stacklevel=2,
        )
    kernel = np.exp(1j * _kz_minus_k(f.grid, float(wavelength)) * distance)
    return Field(f.grid, _ifft2(_fft2(f.values) * kernel))


def lens_phase(grid: GridSpec, focal: float, wavelength: float) -> np.ndarray:
    r, _ = grid.polar()
    return np.exp(-1j * math.pi * r**2 / (wavelength * 1e-6 * focal))


def _flip_about_origin(v: np.ndarray, axes) -> np.ndarray:
    # index i maps to n - i so the origin sample stays put
    return np.roll(np.flip(v, axis=axes), 1, axis=axes)


def low_pass(f: Field, cutoff: float) -> Field:
    """Zero every spatial frequency with |k| > cutoff (rad/mm)."""
    kx, ky = f.grid.frequencies()
    keep = kx**2 + ky**2 <= cutoff**2
    return Field(f.grid, _ifft2(_fft2(f.values) * keep))


def relay(f: Field, element: IdealRelay) -> Field:
    """out(x) = in(x/mag)/|mag| on a grid scaled by |mag|.

    Sample values are carried over unchanged (index-reversed for inverting
    relays), which makes the mapping exact and invertible.
    """
    if element.cutoff is not None:
        f = low_pass(f, element.cutoff)
    v = f.values
    if element.mag < 0:
        v = _flip_about_origin(v, (0, 1))
    return Field(f.grid.scaled(element.mag), v / abs(element.mag))


def apply_element(f: Field, element, wavelength: float = DEFAULT_WAVELENGTH_NM) -> Field:
    if isinstance(element, FreeSpace):
        return propagate(f, element.d, wavelength)
    if isinstance(element, ThinLens):
        return Field(f.grid, f.values * lens_phase(f.grid, element.f, wavelength))
    if isinstance(element, PhaseMask):
        check_same_grid(f, element.mask)
        return Field(f.grid, f.values * element.mask.values)
    if isinstance(element, IdealRelay):
        return relay(f, element)
    if isinstance(element, Reflection):
        axis = 1 if element.axis == "x" else 0
        return Field(f.grid, _flip_about_origin(f.values, axis))
    raise TypeError(f"not an optical element: {element!r}")


def apply_train(f: Field, elements: Iterable, wavelength: float = DEFAULT_WAVELENGTH_NM) -> Field:
    for el in elements:
        f = apply_element(f, el, wavelength)
    return f


def fresnel_4f(focal: float) -> list:
    """Free space f, lens f, free space 2f, lens f, free space f."""
    return [FreeSpace(focal), ThinLens(focal), FreeSpace(2 * focal), ThinLens(focal), FreeSpace(focal)]


def mode_overlap(a: Field, b: Field) -> float:
    """|<a|b>|^2 / (||a||^2 ||b||^2)."""
    pa, pb = a.power(), b.power()
    if pa == 0 or pb == 0:
        raise ValueError("overlap with a zero-power field")
    return abs(a.inner(b)) ** 2 / (pa * pb)


def fiber_coupling(f: Field, w_fiber_at_plane: float) -> float:
    """Coupling efficiency into a fundamental Gaussian of the given waist."""
    if not w_fiber_at_plane > 0:
        raise ValueError("fiber waist must be positive")
    if f.power() == 0:
        raise ValueError("cannot couple a zero-power field")
    return min(1.0, mode_overlap(gaussian_mode(w_fiber_at_plane, f.grid), f))


def distance_up_to_phase(a: Field, b: Field) -> float:
    """min over theta of ||a - exp(i theta) b|| / ||a||."""
    check_same_grid(a, b)
    ip = np.vdot(b.values, a.values)
    phase = ip / abs(ip) if ip != 0 else 1.0
    return float(np.linalg.norm(a.values - phase * b.values) / np.linalg.norm(a.values))


def second_moment_radius(f: Field) -> float:
    """Beam radius w = sqrt(2 <r^2>), equal to the 1/e^2 radius for a Gaussian."""
    r, _ = f.grid.polar()
    i = f.intensity()
    return math.sqrt(2 * float(np.sum(r**2 * i) / np.sum(i)))
