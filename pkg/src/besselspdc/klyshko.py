"""Back-projection single counts and SPDC coincidence predictions.

Mask parameters (``kr`` in particular) are given in SLM-plane units. The SLMs
are conjugate to the crystal through a relay of magnification
``crystal_to_slm`` (default -2), so a mask radius ``r`` corresponds to the
crystal radius ``r / 2``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import specfun
from .fields import (
    Field,
    GridError,
    GridSpec,
    MaskKind,
    MaskSpec,
    ModeParams,
    gaussian_mode,
    gaussian_pump,
    make_mask,
)
from .optics import (
    DEFAULT_WAVELENGTH_NM,
    IdealRelay,
    Reflection,
    apply_element,
    fiber_coupling,
    low_pass,
)
from .outputs import atomic_write_text
from .spectrum import SpectrumResult, parse_header

AXIS_KR = "kr"
AXIS_ELL = "ell"


# --------------------------------------------------------------------------
# Density matrices
# --------------------------------------------------------------------------


@dataclass
class DensityMatrix:
    """Coupling or coincidence values over (A label, B label).

    ``values[i, j]`` belongs to ``row_labels[i]`` on SLM A and
    ``col_labels[j]`` on SLM B.
    """

    row_labels: list
    col_labels: list
    values: np.ndarray
    axis_kind: str
    mask_kind: MaskKind
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.row_labels), len(self.col_labels)):
            raise ValueError("density matrix shape does not match its labels")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise ValueError("density matrix values must be finite and non-negative")
        if self.axis_kind not in (AXIS_KR, AXIS_ELL):
            raise ValueError(f"unknown axis kind {self.axis_kind!r}")
        self.mask_kind = MaskKind.parse(self.mask_kind)

    def value(self, a, b) -> float:
        return float(self.values[self.row_labels.index(a), self.col_labels.index(b)])

    def diagonal_mask(self, sign: int) -> np.ndarray:
        """Cells with b = sign * a."""
        a = np.asarray(self.row_labels, dtype=float)[:, None]
        b = np.asarray(self.col_labels, dtype=float)[None, :]
        return np.isclose(b, sign * a)

    def off_diagonal_sum(self, limit: float) -> float:
        """Sum over |a|, |b| <= limit excluding both b = a and b = -a."""
        a = np.abs(np.asarray(self.row_labels, dtype=float))[:, None] <= limit
        b = np.abs(np.asarray(self.col_labels, dtype=float))[None, :] <= limit
        keep = a & b & ~self.diagonal_mask(1) & ~self.diagonal_mask(-1)
        return float(self.values[keep].sum())

    def to_csv(self, header: Optional[dict] = None) -> str:
        buf = io.StringIO()
        meta = dict(self.meta)
        meta.update(axis_kind=self.axis_kind, mask_kind=self.mask_kind.value)
        if header:
            meta.update(header)
        for key in sorted(meta):
            buf.write(f"# {key}={meta[key]!r}\n" if isinstance(meta[key], float) else f"# {key}={meta[key]}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["A\\B"] + [_label(v) for v in self.col_labels])
        for lab, row in zip(self.row_labels, self.values):
            w.writerow([_label(lab)] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "DensityMatrix":
        lines = text.splitlines()
        meta = parse_header([l for l in lines if l.startswith("#")])
        rows = list(csv.reader(l for l in lines if not l.startswith("#")))
        axis = meta.pop("axis_kind")
        kind = meta.pop("mask_kind")
        conv = int if axis == AXIS_ELL else float
        return cls(
            row_labels=[conv(r[0]) for r in rows[1:]],
            col_labels=[conv(v) for v in rows[0][1:]],
            values=np.array([[float(v) for v in r[1:]] for r in rows[1:]]),
            axis_kind=axis,
            mask_kind=kind,
            meta=meta,
        )

    def write_csv(self, path, header: Optional[dict] = None):
        return atomic_write_text(path, self.to_csv(header))


def _label(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else repr(float(v))


# --------------------------------------------------------------------------
# Back-projection
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Slot:
    """Place in the element train where an SLM mask is applied."""

    name: str


@dataclass(frozen=True)
class BackProjectionSystem:
    """Unfolded back-projection train from fiber A to fiber B.

    ``elements`` are in propagation order and contain ``Slot("A")`` and
    ``Slot("B")`` exactly once each. Fiber waists are given at the fiber
    planes; ``input_grid`` samples the fiber A plane.
    """

    elements: tuple
    input_grid: GridSpec
    fiber_waist_a: float
    fiber_waist_b: float
    wavelength: float = DEFAULT_WAVELENGTH_NM

    def __post_init__(self):
        names = [e.name for e in self.elements if isinstance(e, Slot)]
        if sorted(names) != ["A", "B"]:
            raise ValueError("train needs exactly one slot for each of SLM A and SLM B")

    def _between_slots(self) -> list:
        names = [e.name if isinstance(e, Slot) else None for e in self.elements]
        i, j = sorted((names.index("A"), names.index("B")))
        return list(self.elements[i + 1 : j])

    @property
    def inversions(self) -> int:
        """Point inversions (negative-magnification relays) between the SLMs."""
        return sum(1 for e in self._between_slots() if isinstance(e, IdealRelay) and e.mag < 0)

    @property
    def reflections(self) -> int:
        return sum(1 for e in self._between_slots() if isinstance(e, Reflection))

    @property
    def parity(self) -> str:
        """'even' if the SLM A to SLM B image keeps its handedness.

        Point inversions keep handedness; one-axis reflections reverse it.
        Even parity couples l_A to l_B = -l_A; odd parity couples l_B = l_A.
        """
        return "even" if self.reflections % 2 == 0 else "odd"

    def slot_grid(self, name: str) -> GridSpec:
        grid = self.input_grid
        for e in self.elements:
            if isinstance(e, Slot) and e.name == name:
                return grid
            if isinstance(e, IdealRelay):
                grid = grid.scaled(e.mag)
        raise KeyError(name)

    def reversed(self) -> "BackProjectionSystem":
        """The same optics traversed from fiber B to fiber A."""
        grid = self.input_grid
        for e in self.elements:
            if isinstance(e, IdealRelay):
                grid = grid.scaled(e.mag)
        rev = []
        for e in reversed(self.elements):
            if isinstance(e, IdealRelay):
                cut = None if e.cutoff is None else e.cutoff / abs(e.mag)
                e = IdealRelay(1.0 / e.mag, cut)
            rev.append(e)
        return BackProjectionSystem(
            tuple(rev), grid, self.fiber_waist_b, self.fiber_waist_a, self.wavelength
        )


def default_system(
    grid: GridSpec = GridSpec(),
    fiber_waist_at_slm: float = 0.46,
    crystal_to_slm: float = -2.0,
    parity: str = "even",
    cutoff: Optional[float] = None,
    wavelength: float = DEFAULT_WAVELENGTH_NM,
) -> BackProjectionSystem:
    """Fiber A -> SLM A -> crystal mirror -> SLM B -> fiber B, all imaging.

    Fibers are imaged onto the SLMs at unit magnification, so the fiber
    waist equals its image at the SLM. ``parity="odd"`` adds a one-axis
    reflection at the crystal plane. ``cutoff`` (rad/mm, SLM-plane units)
    places a circular Fourier-plane aperture in both SLM-crystal relays.
    """
    if parity not in ("even", "odd"):
        raise ValueError("parity must be 'even' or 'odd'")
    m = crystal_to_slm
    into = IdealRelay(1.0 / m, cutoff)
    out = IdealRelay(m, None if cutoff is None else cutoff * abs(m))
    mirror = [Reflection("x")] if parity == "odd" else []
    elements = (IdealRelay(1.0), Slot("A"), into, *mirror, out, Slot("B"), IdealRelay(1.0))
    return BackProjectionSystem(elements, grid, fiber_waist_at_slm, fiber_waist_at_slm, wavelength)


def _mask_field(mask) -> Field:
    return mask.field if hasattr(mask, "field") else mask


def backproject_singles(system: BackProjectionSystem, mask_a, mask_b) -> float:
    """Fiber-B coupling of the fiber-A Gaussian through the masked train."""
    masks = {"A": _mask_field(mask_a), "B": _mask_field(mask_b)}
    f = gaussian_mode(system.fiber_waist_a, system.input_grid)
    for e in system.elements:
        if isinstance(e, Slot):
            m = masks[e.name]
            if m.grid != f.grid:
                raise GridError(f"mask {e.name} grid {m.grid} does not match slot grid {f.grid}")
            f = Field(f.grid, f.values * m.values)
        else:
            f = apply_element(f, e, system.wavelength)
    if f.power() == 0:
        return 0.0
    return fiber_coupling(f, system.fiber_waist_b)


def all_ones(grid: GridSpec) -> Field:
    return Field(grid, np.ones((grid.n, grid.n), dtype=complex))


def conjugate_ell(ell: int, system: BackProjectionSystem) -> int:
    """SLM B index that undoes SLM A's azimuthal phase for this parity."""
    return -ell if system.parity == "even" else ell


def scan_density(
    system: BackProjectionSystem,
    kind,
    axis: str,
    values_a: Sequence,
    values_b: Sequence,
    fixed: ModeParams,
) -> DensityMatrix:
    """Back-projection singles over a grid of mask settings.

    ``axis="kr"`` scans signed radial wavevectors on both SLMs with SLM A at
    ``fixed.ell`` and SLM B at the parity-conjugate index. ``axis="ell"``
    scans azimuthal indices with SLM A at ``+fixed.kr`` and SLM B at
    ``-fixed.kr``.
    """
    kind = MaskKind.parse(kind)
    if not len(values_a) or not len(values_b):
        raise ValueError("scan values must be non-empty")
    grid_a = system.slot_grid("A")
    grid_b = system.slot_grid("B")
    if axis == AXIS_KR:
        ma = [make_mask(kind, fixed.ell, k, grid_a) for k in values_a]
        mb = [make_mask(kind, conjugate_ell(fixed.ell, system), k, grid_b) for k in values_b]
    elif axis == AXIS_ELL:
        ma = [make_mask(kind, l, fixed.kr, grid_a) for l in values_a]
        mb = [make_mask(kind, l, -fixed.kr, grid_b) for l in values_b]
    else:
        raise ValueError(f"unknown axis {axis!r}")
    values = np.empty((len(ma), len(mb)))
    for i, a in enumerate(ma):
        for j, b in enumerate(mb):
            values[i, j] = backproject_singles(system, a, b)
    conv = int if axis == AXIS_ELL else float
    meta = {
        "parity": system.parity,
        "fixed_ell": fixed.ell,
        "fixed_kr": float(fixed.kr),
        "fiber_waist_mm": float(system.fiber_waist_a),
    }
    return DensityMatrix(
        [conv(v) for v in values_a], [conv(v) for v in values_b], values, axis, kind, meta
    )


# --------------------------------------------------------------------------
# SPDC coincidences
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BGProjector:
    """Ideal Bessel-Gauss projector: an amplitude-and-phase SLM transmission.

    ``J_|l|(kr r) exp(i l phi) / norm`` with ``norm`` chosen so that the
    fiber Gaussian of waist ``waist`` (SLM plane) times the transmission has
    unit power, i.e. the detected mode is a unit-power BG mode.
    """

    ell: int
    kr: float
    waist: float

    def _norm(self) -> float:
        k = abs(self.kr)
        if k == 0:
            return 1.0 if self.ell == 0 else 0.0
        n = abs(self.ell)
        w = self.waist

        def integrand(r):
            return specfun.bessel_j(n, k * r) ** 2 * np.exp(-2 * r**2 / w**2) * r

        p = 4 / w**2 * specfun.integrate_radial(integrand, w * (math.sqrt(n / 2) + 8))
        return math.sqrt(p)

    def radial(self, r):
        norm = self._norm()
        if norm == 0:
            return np.zeros_like(np.asarray(r, dtype=float))
        return specfun.bessel_j(abs(self.ell), abs(self.kr) * np.asarray(r)) / norm

    def breakpoints(self, r_max: float) -> np.ndarray:
        return np.empty(0)


def image_to_crystal(mask, r, phi, crystal_to_slm: float = -2.0):
    """SLM transmission seen at crystal coordinates (r, phi)."""
    m = crystal_to_slm
    shift = math.pi if m < 0 else 0.0
    return mask.radial(abs(m) * np.asarray(r)) * np.exp(1j * mask.ell * (np.asarray(phi) + shift))


def spdc_coincidence(
    pump: Field,
    mask_a: Field,
    mask_b: Field,
    fiber_waist_at_crystal: float,
    cutoff: Optional[float] = None,
) -> float:
    """|M|^2 of the three-mode overlap on a common crystal-plane grid.

    The detected modes are ``u = LP(g conj(T))`` with ``g`` the fiber
    Gaussian imaged to the crystal and ``LP`` the optional Fourier-plane
    aperture (rad/mm, crystal-plane units). ``M = sum m_p conj(u_A)
    conj(u_B) dx^2`` is multiplied by ``1/m_p(0)``, the shared constant of
    the spectrum module, so all-ones masks give ``x**2``.
    """
    mask_a, mask_b = _mask_field(mask_a), _mask_field(mask_b)
    if not (pump.grid == mask_a.grid == mask_b.grid):
        raise GridError("pump and masks must share the crystal-plane grid")
    g = gaussian_mode(fiber_waist_at_crystal, pump.grid)
    ua = Field(pump.grid, g.values * np.conj(mask_a.values))
    ub = Field(pump.grid, g.values * np.conj(mask_b.values))
    if cutoff is not None:
        ua, ub = low_pass(ua, cutoff), low_pass(ub, cutoff)
    m = np.sum(pump.values * np.conj(ua.values) * np.conj(ub.values)) * pump.grid.dx**2
    scale = 1 / abs(pump.value_at(0, 0))
    return float(abs(m * scale) ** 2)


def sample_on_crystal(mask, grid: GridSpec, crystal_to_slm: float = -2.0) -> Field:
    """Sample an analytic SLM transmission at the crystal plane."""
    r, phi = grid.polar()
    return Field(grid, image_to_crystal(mask, r, phi, crystal_to_slm))


def spdc_coincidence_polar(
    w0: float,
    mask_a,
    mask_b,
    fiber_waist_at_crystal: float,
    crystal_to_slm: float = -2.0,
    n_phi: int = 128,
    tol: float = 1e-12,
) -> float:
    """Same quantity as :func:`spdc_coincidence` by polar quadrature.

    The masks are analytic (``MaskSpec`` or :class:`BGProjector`). The
    azimuth uses ``n_phi`` uniform points, which integrate ``exp(i m phi)``
    to zero exactly for ``0 < |m| < n_phi``; the radius uses adaptive
    Gauss-Legendre panels split at the masks' sign changes.
    """
    if n_phi <= abs(mask_a.ell + mask_b.ell) and mask_a.ell + mask_b.ell != 0:
        raise ValueError("n_phi must exceed |l_A + l_B|")
    w1 = fiber_waist_at_crystal
    c = 1 / w0**2 + 2 / w1**2
    r_max = math.sqrt(80 / c)
    mag = abs(crystal_to_slm)
    phi = 2 * math.pi * np.arange(n_phi) / n_phi
    m = mask_a.ell + mask_b.ell
    shift = m * math.pi if crystal_to_slm < 0 else 0.0
    angular = 2 * math.pi * np.mean(np.exp(1j * (m * phi + shift)))
    breaks = np.concatenate(
        [mask_a.breakpoints(mag * r_max), mask_b.breakpoints(mag * r_max)]
    ) / mag
    # pump amplitude times g^2, already divided by the shared constant 1/m_p(0)
    amp = 2 / (math.pi * w1**2)

    def radial(r, part):
        t = mask_a.radial(mag * r) * mask_b.radial(mag * r)
        v = amp * np.exp(-c * r**2) * r * t
        return v.real if part == 0 else v.imag

    # absolute floor: tol times the all-ones integral, which bounds |M|
    floor = tol * amp / (2 * c)
    kw = dict(breakpoints=breaks, abs_tol=floor)
    re, _ = specfun.adaptive_gauss_legendre(lambda r: radial(r, 0), 0.0, r_max, tol, **kw)
    im, _ = specfun.adaptive_gauss_legendre(lambda r: radial(r, 1), 0.0, r_max, tol, **kw)
    return float(abs(angular * complex(re, im)) ** 2)


def _projector(kind, ell: int, kr: float, fiber_waist_at_slm: float):
    if kind == "bg-ideal":
        return BGProjector(ell, kr, fiber_waist_at_slm)
    return MaskSpec(MaskKind.parse(kind), ell, kr)


def spiral_bandwidth(
    kind,
    kr: float,
    ell_range,
    w0: float = 0.5,
    w1: float = 0.23,
    crystal_to_slm: float = -2.0,
    cutoff: Optional[float] = None,
    grid: Optional[GridSpec] = None,
) -> SpectrumResult:
    """Coincidence spectrum over l with SLM A at (l, kr) and SLM B at (-l, -kr).

    The B mask is the phase conjugate of the A mask, which is the setting
    that maximizes each coincidence. ``kind`` may be a :class:`MaskKind` or
    ``"bg-ideal"`` for :class:`BGProjector` masks. Without ``cutoff`` the
    polar route is used; with a Fourier-plane aperture (rad/mm, SLM-plane
    units) the masks are sampled on ``grid`` at the crystal plane.
    """
    ells = list(range(-int(ell_range), int(ell_range) + 1)) if np.isscalar(ell_range) else sorted(int(l) for l in ell_range)
    if sorted(ells) != sorted(-l for l in ells):
        raise ValueError("ell_range must be symmetric about 0")
    mag = abs(crystal_to_slm)
    w_slm = w1 * mag
    rates = []
    if cutoff is None:
        for l in ells:
            a = _projector(kind, l, kr, w_slm)
            b = _projector(kind, -l, -kr, w_slm)
            rates.append(spdc_coincidence_polar(w0, a, b, w1, crystal_to_slm))
    else:
        grid = grid or GridSpec(512, 4.0)
        pump = gaussian_pump(w0, grid)
        for l in ells:
            a = sample_on_crystal(_projector(kind, l, kr, w_slm), grid, crystal_to_slm)
            b = sample_on_crystal(_projector(kind, -l, -kr, w_slm), grid, crystal_to_slm)
            rates.append(spdc_coincidence(pump, a, b, w1, cutoff * mag))
    label = kind if isinstance(kind, str) else MaskKind.parse(kind).value
    return SpectrumResult.from_probs(
        ells, rates, kind=label, kr=float(kr), w0=w0, w1=w1,
        cutoff="none" if cutoff is None else float(cutoff),
    )


# --------------------------------------------------------------------------
# Grating efficiency
# --------------------------------------------------------------------------


def binary_efficiency_check(kind, kr: float = 21.0, samples: int = 4096) -> dict:
    """Power fraction per radial diffraction order of the mask profile.

    The radial factor is sampled at midpoints over one period ``2 pi/|kr|``
    and Fourier-decomposed; order ``m`` is the harmonic ``exp(i m |kr| r)``.
    Fractions over all returned orders sum to 1 (Parseval).
    """
    kind = MaskKind.parse(kind)
    if kind not in (MaskKind.BINARY_AXICON, MaskKind.BLAZED_AXICON):
        raise ValueError("efficiency check applies to binary or blazed axicons")
    if kr == 0:
        raise ValueError("kr must be nonzero")
    period = 2 * math.pi / abs(kr)
    r = (np.arange(samples) + 0.5) * period / samples
    t = MaskSpec(kind, 0, abs(kr)).radial(r)
    c = np.fft.fft(t) / samples
    power = np.abs(c) ** 2
    power /= np.sum(np.abs(t) ** 2) / samples
    orders = np.fft.fftfreq(samples, 1 / samples).astype(int)
    return {int(m): float(p) for m, p in sorted(zip(orders, power))}
