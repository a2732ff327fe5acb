"""OAM spectrum of the down-converted pair in the Bessel-Gauss and LG bases.

Coefficients are reported up to a shared constant that cancels in every
normalized quantity (probabilities, Schmidt number, FWHM). The constant is
fixed so that ``c_ell_lg(l) = x**(|l|+1)`` with
``x = 2 w0^2 / (2 w0^2 + w1^2)``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import specfun
from .outputs import atomic_write_text

MAX_ELL = 200
SCHMIDT_TAIL = 1e-10
SCAN_TAIL = 1e-6


class TruncationError(ValueError):
    """The requested l range does not contain the bulk of the spectrum."""


def _check_waists(w0: float, w1: float) -> None:
    if not (w0 > 0 and w1 > 0):
        raise specfun.DomainError(f"waists must be positive, got w0={w0}, w1={w1}")


def overlap_ratio(w0: float, w1: float) -> float:
    """x = 2 w0^2 / (2 w0^2 + w1^2)."""
    _check_waists(w0, w1)
    return 2 * w0**2 / (2 * w0**2 + w1**2)


def bessel_arguments(kr: float, w0: float, w1: float) -> tuple[float, float]:
    """Arguments (A, B) of the modified-Bessel ratio in the BG coefficient."""
    a = kr**2 * w0**2 * w1**2 / (2 * (2 * w0**2 + w1**2))
    b = kr**2 * w1**2 / 4
    return a, b


def c_ell_bg(ell: int, kr: float, w0: float, w1: float, signed: bool = False) -> float:
    """BG coefficient x * I_l(A)/I_l(B), evaluated with e^-x scaled Bessels.

    With ``Itilde(z) = exp(-z) I(z)`` the ratio of raw Bessels times the
    Gaussian prefactor is ``Itilde_l(A) / Itilde_l(B)`` exactly, so nothing
    overflows for any ``kr``. The ratio lies in (0, 1] because A < B.

    Parameters
    ----------
    ell : int
        Azimuthal index of the signal photon; the idler carries ``-ell``.
    kr : float
        Radial wavevector shared by both photons, rad/mm.
    w0, w1 : float
        Pump waist and detection-mode waist at the crystal, mm.
    signed : bool
        Include the ``(-1)**ell`` factor that appears when the modes are
        written with ``J_l`` rather than ``J_|l|``.
    """
    if kr < 0:
        raise specfun.DomainError("kr must be non-negative")
    ell = int(ell)
    if abs(ell) > MAX_ELL:
        raise specfun.DomainError(f"|ell| must be <= {MAX_ELL}")
    x = overlap_ratio(w0, w1)
    n = abs(ell)
    a, b = bessel_arguments(kr, w0, w1)
    if b == 0 or a == 0:
        ratio = x**n
    else:
        ratio = math.exp(
            float(specfun.log_bessel_i_scaled(n, a)) - float(specfun.log_bessel_i_scaled(n, b))
        )
    c = x * ratio
    if signed and ell % 2:
        c = -c
    return c


def bg_coefficients(kr: float, w0: float, w1: float, n_max: int = MAX_ELL) -> np.ndarray:
    """``c_ell_bg`` for l = 0..n_max in one pass (the spectrum is even in l)."""
    if kr < 0:
        raise specfun.DomainError("kr must be non-negative")
    x = overlap_ratio(w0, w1)
    a, b = bessel_arguments(kr, w0, w1)
    if a == 0 or b == 0:
        return x ** (np.arange(n_max + 1) + 1.0)
    log_ratio = specfun.log_bessel_i_scaled_orders(n_max, a) - specfun.log_bessel_i_scaled_orders(n_max, b)
    return x * np.exp(log_ratio)


def c_ell_lg(ell: int, w0: float, w1: float) -> float:
    """LG (p = 0) coefficient x**(|l| + 1)."""
    return overlap_ratio(w0, w1) ** (abs(int(ell)) + 1)


def c_ell_numeric(
    ell: int,
    kr: float,
    w0: float,
    w1: float,
    tol: float = 1e-12,
    signed: bool = False,
) -> float:
    """Coefficient from the spatial overlap integral by radial quadrature.

    The three-mode overlap of the Gaussian pump with unit-power BG modes of
    index ``l`` and ``-l`` loses its azimuthal dependence, leaving

        2 pi N^2 (sqrt(2/pi)/w0) int J_|l|(kr r)^2 exp(-c r^2) r dr,
        c = 2/w1^2 + 1/w0^2,

    with ``N`` the mode normalization, itself found by quadrature. The result
    is multiplied by ``w0 sqrt(pi/2)`` to share the constant of
    :func:`c_ell_bg`. At ``kr = 0`` the ``kr -> 0`` limiting profile
    ``r**|l|`` is used.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if kr < 0:
        raise specfun.DomainError("kr must be non-negative")
    _check_waists(w0, w1)
    n = abs(int(ell))
    c = 2 / w1**2 + 1 / w0**2
    # the integrands peak near w1*sqrt(n/2); 8 envelope radii past that is
    # far below double precision
    r_max = w1 * (math.sqrt(n / 2) + 8)

    if kr == 0:
        def radial(r):
            return (np.asarray(r) / w1) ** n
    else:
        def radial(r):
            return specfun.bessel_j(n, kr * np.asarray(r))

    def overlap(r):
        return radial(r) ** 2 * np.exp(-c * r**2) * r

    def norm(r):
        return radial(r) ** 2 * np.exp(-2 * r**2 / w1**2) * r

    num = specfun.integrate_radial(overlap, r_max, tol=tol)
    den = specfun.integrate_radial(norm, r_max, tol=tol)
    if den == 0:
        raise specfun.ConvergenceError(f"mode norm underflowed for ell={ell}, kr={kr}")
    # 2 pi N^2 = 1/den, and the pump amplitude sqrt(2/pi)/w0 cancels against
    # the w0 sqrt(pi/2) rescaling
    value = num / den
    if signed and n % 2:
        value = -value
    return value


def schmidt_number(coeffs: Sequence[float]) -> float:
    """K = (sum C^2)^2 / sum C^4 over the supplied coefficients."""
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0 or not np.any(c != 0):
        raise ValueError("schmidt_number needs at least one nonzero coefficient")
    # rescale first so C^4 cannot underflow or overflow
    p = (c / np.max(np.abs(c))) ** 2
    return float(np.sum(p) ** 2 / np.sum(p**2))


def schmidt_lg_closed_form(w0: float, w1: float) -> float:
    """(1 + a)^3 / ((1 - a)(1 + a^2)) with a = x^2, summed over all integer l."""
    a = overlap_ratio(w0, w1) ** 2
    return (1 + a) ** 3 / ((1 - a) * (1 + a**2))


def truncation_bound(coeffs, tail: float = SCHMIDT_TAIL) -> int:
    """Smallest L with |C_L|^2 / |C_0|^2 < tail.

    ``coeffs`` holds C_0..C_max for l >= 0. If the tail is not reached by
    the last entry but has fallen below ``SCAN_TAIL``, the last index is
    returned with a warning; otherwise :class:`TruncationError` is raised.
    """
    c = np.asarray(coeffs, dtype=float)
    ratio = (c / c[0]) ** 2
    below = np.nonzero(ratio[1:] < tail)[0]
    if below.size:
        return int(below[0]) + 1
    max_ell = len(c) - 1
    if ratio[-1] < SCAN_TAIL:
        warnings.warn(
            f"spectrum tail {ratio[-1]:.1e} at |ell| = {max_ell} exceeds {tail:g}; truncating there",
            stacklevel=2,
        )
        return max_ell
    raise TruncationError(f"spectrum tail {ratio[-1]:.1e} exceeds {SCAN_TAIL:g} at |ell| = {max_ell}")


def _symmetric_schmidt(c: np.ndarray, bound: int) -> float:
    half = c[: bound + 1]
    return schmidt_number(np.concatenate([half[:0:-1], half]))


def schmidt_bg(kr: float, w0: float, w1: float, tail: float = SCHMIDT_TAIL, return_bound: bool = False):
    """Schmidt number of the BG spectrum, summed over l in [-L*, L*]."""
    c = bg_coefficients(kr, w0, w1)
    bound = truncation_bound(c, tail)
    k = _symmetric_schmidt(c, bound)
    return (k, bound) if return_bound else k


def schmidt_lg(w0: float, w1: float, tail: float = SCHMIDT_TAIL) -> float:
    c = np.array([c_ell_lg(l, w0, w1) for l in range(MAX_ELL + 1)])
    return _symmetric_schmidt(c, truncation_bound(c, tail))


def fwhm(ell_values: Sequence[int], probs: Sequence[float]) -> float:
    """Full width at half of the l = 0 value, interpolating linearly in l.

    Each side is walked outwards from ``l = 0`` to the first sample below
    half maximum. A side that never drops below half gives ``inf``.
    """
    ells = np.asarray(ell_values, dtype=int)
    p = np.asarray(probs, dtype=float)
    zero = np.nonzero(ells == 0)[0]
    if zero.size != 1:
        raise ValueError("fwhm needs exactly one l = 0 sample")
    order = np.argsort(ells)
    ells, p = ells[order], p[order]
    i0 = int(np.nonzero(ells == 0)[0][0])
    half = p[i0] / 2
    if half <= 0:
        raise ValueError("spectrum vanishes at l = 0")

    def edge(step):
        i = i0
        while 0 <= i + step < len(ells):
            j = i + step
            if p[j] < half:
                t = (p[i] - half) / (p[i] - p[j])
                return ells[i] + t * (ells[j] - ells[i])
            i = j
        return math.inf * step

    return float(edge(1) - edge(-1))


@dataclass
class SpectrumResult:
    ell_values: list
    coeffs: list
    normalized_probs: list = field(default_factory=list)
    schmidt: float = math.nan
    fwhm: float = math.nan
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_coeffs(cls, ell_values, coeffs, **meta) -> "SpectrumResult":
        """Fill probabilities, K and FWHM from coefficients (or amplitudes)."""
        ell_values = [int(l) for l in ell_values]
        c = np.asarray(coeffs, dtype=float)
        p = c**2 / np.sum(c**2)
        return cls(
            ell_values=ell_values,
            coeffs=[float(v) for v in c],
            normalized_probs=[float(v) for v in p],
            schmidt=schmidt_number(c),
            fwhm=fwhm(ell_values, p),
            meta=dict(meta),
        )

    @classmethod
    def from_probs(cls, ell_values, probs, **meta) -> "SpectrumResult":
        """Build from non-negative rates; coefficients are their square roots."""
        return cls.from_coeffs(ell_values, np.sqrt(np.maximum(probs, 0.0)), **meta)

    def prob(self, ell: int) -> float:
        return self.normalized_probs[self.ell_values.index(ell)]


def _ell_list(ell_range) -> list:
    if isinstance(ell_range, (int, np.integer)):
        return list(range(-int(ell_range), int(ell_range) + 1))
    if isinstance(ell_range, tuple) and len(ell_range) == 2:
        lo, hi = ell_range
        ells = list(range(int(lo), int(hi) + 1))
    else:
        ells = [int(l) for l in ell_range]
    if sorted(ells) != sorted(-l for l in ells) or 0 not in ells:
        raise ValueError("ell_range must be symmetric about 0")
    return sorted(ells)


def spectrum_scan(basis: str, ell_range, w0: float, w1: float, kr: float = 0.0) -> SpectrumResult:
    """Coefficients, probabilities, Schmidt number and FWHM over ``ell_range``.

    Parameters
    ----------
    basis : {"lg", "bg"}
    ell_range : int, (lo, hi) or sequence of int
        Symmetric about zero. An int ``L`` means ``-L..L``.
    kr : float
        Radial wavevector for the BG basis; ignored for LG.

    Raises
    ------
    TruncationError
        If the edge probability exceeds 1e-6 of the l = 0 value.
    """
    basis = basis.lower()
    ells = _ell_list(ell_range)
    if basis == "lg":
        coeffs = [c_ell_lg(l, w0, w1) for l in ells]
        kr = 0.0
    elif basis == "bg":
        table = bg_coefficients(kr, w0, w1, max(abs(l) for l in ells))
        coeffs = [float(table[abs(l)]) for l in ells]
    else:
        raise ValueError(f"unknown basis {basis!r}")
    c0 = coeffs[ells.index(0)]
    edge = max(abs(coeffs[0]), abs(coeffs[-1]))
    if (edge / c0) ** 2 > SCAN_TAIL:
        raise TruncationError(
            f"|C_lmax|^2/|C_0|^2 = {(edge / c0) ** 2:.2e} > {SCAN_TAIL:g}; widen ell_range"
        )
    return SpectrumResult.from_coeffs(ells, coeffs, basis=basis, kr=kr, w0=w0, w1=w1)


# --------------------------------------------------------------------------
# Phase matching
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhaseMatchReport:
    zeta: float
    zeta_inv_sqrt: float
    pump_spectral_width: float
    detection_spectral_width: float
    max_kr: float
    valid: bool
    threshold_factor: float = 5.0


def phase_matching_check(
    lambda_p: float,
    L: float,
    n_o: float,
    w0: float,
    w1: float,
    max_kr: float,
    factor: float = 5.0,
) -> PhaseMatchReport:
    """Compare the sinc width 1/sqrt(zeta) with the transverse spectral widths.

    ``zeta = n_o lambda_p L / (8 pi^2)`` in mm^2 with ``lambda_p`` given in
    nm. The thin-crystal approximation is declared valid when
    ``1/sqrt(zeta)`` exceeds ``factor`` times the largest of 2/w0, 2/w1 and
    ``max_kr``.
    """
    if not (lambda_p > 0 and n_o > 0 and L >= 0):
        raise specfun.DomainError("lambda_p and n_o must be positive, L non-negative")
    _check_waists(w0, w1)
    zeta = n_o * lambda_p * 1e-6 * L / (8 * math.pi**2)
    inv = math.inf if zeta == 0 else 1 / math.sqrt(zeta)
    pump = 2 / w0
    det = 2 / w1
    valid = inv > factor * max(pump, det, abs(max_kr))
    return PhaseMatchReport(zeta, inv, pump, det, float(max_kr), bool(valid), factor)


# --------------------------------------------------------------------------
# CSV
# --------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def spectrum_to_csv(result: SpectrumResult, header: dict | None = None) -> str:
    """Header lines ``# key=value``, then columns ell, coeff, prob_normalized."""
    buf = io.StringIO()
    meta = dict(result.meta)
    meta["schmidt"] = result.schmidt
    meta["fwhm"] = result.fwhm
    if header:
        meta.update(header)
    for key in sorted(meta):
        buf.write(f"# {key}={_fmt(meta[key])}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ell", "coeff", "prob_normalized"])
    for l, c, p in zip(result.ell_values, result.coeffs, result.normalized_probs):
        w.writerow([l, repr(float(c)), repr(float(p))])
    return buf.getvalue()


def parse_header(lines) -> dict:
    meta = {}
    for line in lines:
        key, _, value = line[1:].strip().partition("=")
        meta[key] = value
    return meta


def spectrum_from_csv(text: str) -> SpectrumResult:
    lines = text.splitlines()
    head = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    meta = parse_header(head)
    rows = list(csv.reader(body))[1:]
    schmidt = float(meta.pop("schmidt", "nan"))
    width = float(meta.pop("fwhm", "nan"))
    return SpectrumResult(
        ell_values=[int(r[0]) for r in rows],
        coeffs=[float(r[1]) for r in rows],
        normalized_probs=[float(r[2]) for r in rows],
        schmidt=schmidt,
        fwhm=width,
        meta=meta,
    )


def write_spectrum_csv(path, result: SpectrumResult, header: dict | None = None) -> Path:
    return atomic_write_text(path, spectrum_to_csv(result, header))
