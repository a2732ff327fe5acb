"""Configuration, command-line interface and figure-data emission.

Every command writes CSV (or a graymap for ``mask-export``) into the output
directory: ``--out`` if given, else ``$BESSELSPDC_OUT``, else ``./out``.
Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 numerical error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import fields, klyshko, optics, specfun, spectrum
from .fields import GridSpec, MaskKind, MaskSpec, ModeParams
from .outputs import atomic_write_text

OUT_ENV = "BESSELSPDC_OUT"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4

NUMERIC_ERRORS = (
    specfun.DomainError,
    specfun.ConvergenceError,
    spectrum.TruncationError,
    fields.NyquistError,
    fields.WindowError,
    fields.GridError,
    FloatingPointError,
)


class ConfigError(ValueError):
    pass


def _default_kr():
    return [-35.0, -28.0, -21.0, -14.0, -7.0, 0.0, 7.0, 14.0, 21.0, 28.0, 35.0]


@dataclass(frozen=True)
class ExperimentConfig:
    """Physical and numerical settings of a run.

    ``kr_list`` and ``kr_fixed`` are SLM-plane radial wavevectors (rad/mm);
    the crystal-plane value is ``|crystal_to_slm|`` times larger. ``n_o`` is
    an assumed index for BBO at the pump wavelength.
    """

    lambda_pump_nm: float = 355.0
    lambda_down_nm: float = 710.0
    crystal_length_mm: float = 3.0
    n_o: float = 1.70
    w0_mm: float = 0.5
    w1_mm: float = 0.23
    grid_n: int = 1024
    grid_width_mm: float = 4.0
    kr_list: tuple = field(default_factory=lambda: tuple(_default_kr()))
    kr_fixed: float = 21.0
    ell_range: int = 15
    spectrum_ell_max: int = 150
    mask_kind: str = "blazed-axicon"
    parity: str = "even"
    crystal_to_slm: float = -2.0
    cutoff: Optional[float] = None
    r_min_mm: float = 0.05
    quad_tol: float = 1e-12
    phase_threshold: float = 5.0

    def __post_init__(self):
        positive = [
            "lambda_pump_nm", "lambda_down_nm", "crystal_length_mm", "n_o", "w0_mm",
            "w1_mm", "grid_width_mm", "r_min_mm", "quad_tol", "phase_threshold",
        ]
        for name in positive:
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive number, got {v!r}")
        if self.crystal_to_slm == 0:
            raise ConfigError("crystal_to_slm must be nonzero")
        if self.cutoff is not None and not self.cutoff > 0:
            raise ConfigError("cutoff must be positive or 'none'")
        if self.parity not in ("even", "odd"):
            raise ConfigError("parity must be 'even' or 'odd'")
        if self.ell_range < 0 or self.spectrum_ell_max < 1:
            raise ConfigError("ell ranges must be non-negative")
        try:
            MaskKind.parse(self.mask_kind)
            grid = self.grid
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        top = max(abs(k) for k in (*self.kr_list, self.kr_fixed))
        if top + self.ell_range / self.r_min_mm >= grid.nyquist:
            raise ConfigError(
                f"grid Nyquist {grid.nyquist:.1f} rad/mm does not resolve k_r={top} with "
                f"|l|={self.ell_range} at r_min={self.r_min_mm} mm"
            )

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.grid_n, self.grid_width_mm)

    @property
    def fiber_waist_slm_mm(self) -> float:
        """Fiber mode at the SLM: the crystal-plane waist w1 magnified."""
        return self.w1_mm * abs(self.crystal_to_slm)

    @property
    def ells(self) -> list:
        return list(range(-self.ell_range, self.ell_range + 1))

    def crystal_kr(self, kr_slm: float) -> float:
        return abs(kr_slm) * abs(self.crystal_to_slm)

    def canonical(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def system(self) -> klyshko.BackProjectionSystem:
        return klyshko.default_system(
            self.grid,
            self.fiber_waist_slm_mm,
            self.crystal_to_slm,
            self.parity,
            self.cutoff,
            self.lambda_down_nm,
        )


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, tuple):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(name: str, text: str, proto):
    text = text.strip()
    try:
        if name == "cutoff":
            return None if text.lower() in ("", "none", "off") else float(text)
        if isinstance(proto, tuple):
            return tuple(float(x) for x in text.split(",") if x.strip())
        if isinstance(proto, bool):
            return text.lower() in ("1", "true", "yes", "on")
        if isinstance(proto, int):
            return int(text)
        if isinstance(proto, float):
            return float(text)
        return text
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc


def load_config(path=None, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Read flat ``key = value`` lines; unknown keys are rejected."""
    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string("[config]\n" + Path(path).read_text())
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for key, text in parser["config"].items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = _parse_value(key, text, known[key])
    for key, v in (overrides or {}).items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = v
    return ExperimentConfig(**values)


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------


def output_dir(arg: Optional[str] = None) -> Path:
    return Path(arg or os.environ.get(OUT_ENV) or "out")


def header(config: ExperimentConfig, **extra) -> dict:
    h = {"config_hash": config.hash()}
    h.update(extra)
    return h


def write_table(path, columns, rows, meta: dict) -> Path:
    """CSV with ``# key=value`` header lines; floats written with repr."""
    buf = io.StringIO()
    for key in sorted(meta):
        v = meta[key]
        buf.write(f"# {key}={v!r}\n" if isinstance(v, float) else f"# {key}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return atomic_write_text(path, buf.getvalue())


def read_table(path) -> tuple[dict, list, list]:
    lines = Path(path).read_text().splitlines()
    meta = spectrum.parse_header([l for l in lines if l.startswith("#")])
    rows = list(csv.reader(l for l in lines if not l.startswith("#")))
    return meta, rows[0], rows[1:]


# --------------------------------------------------------------------------
# Pipelines
# --------------------------------------------------------------------------


def run_spectrum(config: ExperimentConfig, basis: str, kr: float, out: Path) -> Path:
    res = spectrum.spectrum_scan(basis, config.spectrum_ell_max, config.w0_mm, config.w1_mm, kr)
    name = f"spectrum_{basis}_kr{kr:g}.csv"
    return spectrum.write_spectrum_csv(out / name, res, header(config))


def schmidt_rows(config: ExperimentConfig, kr_values) -> list:
    rows = []
    for kr in kr_values:
        k, bound = spectrum.schmidt_bg(kr, config.w0_mm, config.w1_mm, return_bound=True)
        rows.append((float(kr), k, bound))
    return rows


def run_schmidt_scan(config: ExperimentConfig, kr_max: float, kr_step: float, out: Path) -> Path:
    krs = np.arange(0.0, kr_max + kr_step / 2, kr_step)
    meta = header(config, w0=config.w0_mm, w1=config.w1_mm,
                  schmidt_lg_closed_form=spectrum.schmidt_lg_closed_form(config.w0_mm, config.w1_mm))
    return write_table(out / "schmidt_scan.csv", ["kr", "schmidt", "ell_bound"], schmidt_rows(config, krs), meta)


def density(config: ExperimentConfig, kind, axis: str) -> klyshko.DensityMatrix:
    system = config.system()
    if axis == klyshko.AXIS_KR:
        vals = list(config.kr_list)
        fixed = ModeParams(0, 0.0, config.fiber_waist_slm_mm)
    else:
        vals = config.ells
        fixed = ModeParams(0, config.kr_fixed, config.fiber_waist_slm_mm)
    return klyshko.scan_density(system, kind, axis, vals, vals, fixed)


def run_backproject(config: ExperimentConfig, kind, axis: str, out: Path, name=None) -> Path:
    dm = density(config, kind, axis)
    name = name or f"density_{MaskKind.parse(kind).value}_{axis}.csv"
    return dm.write_csv(out / name, header(config))


def spiral(config: ExperimentConfig, kind, kr: float) -> spectrum.SpectrumResult:
    return klyshko.spiral_bandwidth(
        kind, kr, config.ell_range, config.w0_mm, config.w1_mm,
        config.crystal_to_slm, config.cutoff,
    )


def run_coincidence(config: ExperimentConfig, kind, kr: float, out: Path) -> Path:
    res = spiral(config, kind, kr)
    label = kind if isinstance(kind, str) else MaskKind.parse(kind).value
    return spectrum.write_spectrum_csv(out / f"spiral_{label}_kr{kr:g}.csv", res, header(config))


def run_mask_export(config: ExperimentConfig, kind, ell: int, kr: float, out: Path) -> Path:
    mask = fields.make_mask(kind, ell, kr, config.grid, config.r_min_mm)
    return fields.export_mask(mask, out)


def phase_report(config: ExperimentConfig) -> spectrum.PhaseMatchReport:
    """Check against the nominal k_r values of the config (not rescaled)."""
    top = max(abs(k) for k in (*config.kr_list, config.kr_fixed))
    return spectrum.phase_matching_check(
        config.lambda_pump_nm, config.crystal_length_mm, config.n_o,
        config.w0_mm, config.w1_mm, top, config.phase_threshold,
    )


def run_phasematch(config: ExperimentConfig, out: Path) -> Path:
    rep = phase_report(config)
    rows = [(k, v) for k, v in dataclasses.asdict(rep).items()]
    return write_table(out / "phasematch.csv", ["quantity", "value"], rows, header(config))


# --------------------------------------------------------------------------
# Figures
# --------------------------------------------------------------------------

FIGURES = ("fig1", "fig3c", "fig3d", "fig4c", "fig4d", "fig5c", "fig5d", "fig7", "fig8", "fig9")
_DENSITY_KINDS = {"3": MaskKind.BLAZED_AXICON, "4": MaskKind.BINARY_AXICON, "5": MaskKind.BINARY_BESSEL}


def emit_figure_data(figure_id: str, config: ExperimentConfig, out: Path) -> list:
    """Write plot-ready CSV for one figure and return the paths."""
    if figure_id not in FIGURES:
        raise ValueError(f"unknown figure {figure_id!r}; choose from {', '.join(FIGURES)}")
    out = Path(out)
    meta = header(config, figure=figure_id)
    w0, w1 = config.w0_mm, config.w1_mm

    if figure_id == "fig1":
        rows = []
        for kr in (0.0, 20.0, 40.0, 60.0, 80.0):
            res = spectrum.spectrum_scan("bg", config.spectrum_ell_max, w0, w1, kr)
            p0 = res.prob(0)
            for l, c, p in zip(res.ell_values, res.coeffs, res.normalized_probs):
                rows.append((kr, l, c, p, p / p0))
        return [write_table(out / "fig1.csv", ["kr", "ell", "coeff", "prob_normalized", "prob_rel0"], rows, meta)]

    if figure_id[:4] in ("fig3", "fig4", "fig5"):
        kind = _DENSITY_KINDS[figure_id[3]]
        axis = klyshko.AXIS_KR if figure_id.endswith("c") else klyshko.AXIS_ELL
        return [run_backproject(config, kind, axis, out, name=f"{figure_id}.csv")]

    if figure_id == "fig7":
        rows = []
        widths = {}
        for kind in MaskKind:
            res = spiral(config, kind, config.kr_fixed)
            widths[kind.value] = res.fwhm
            for l, c, p in zip(res.ell_values, res.coeffs, res.normalized_probs):
                rows.append((kind.value, l, c**2, p))
        meta.update({f"fwhm_{k}": v for k, v in widths.items()})
        meta["kr"] = float(config.kr_fixed)
        return [write_table(out / "fig7.csv", ["kind", "ell", "rate", "prob_normalized"], rows, meta)]

    if figure_id == "fig8":
        rows = []
        for kr in np.arange(0.0, 35.0 + 1e-9, 7.0):
            theory = spectrum.spectrum_scan("bg", config.spectrum_ell_max, w0, w1, config.crystal_kr(kr))
            sim = spiral(config, MaskKind.BINARY_BESSEL, float(kr))
            for l, p in zip(sim.ell_values, sim.normalized_probs):
                rows.append((float(kr), l, theory.prob(l) / theory.prob(0), sim.coeffs[sim.ell_values.index(l)] ** 2, p))
        return [write_table(out / "fig8.csv", ["kr", "ell", "theory_rel0", "sim_rate", "sim_prob"], rows, meta)]

    # fig9
    rows = schmidt_rows(config, np.arange(0.0, 100.0 + 1e-9, 1.0))
    meta["schmidt_lg_closed_form"] = spectrum.schmidt_lg_closed_form(w0, w1)
    return [write_table(out / "fig9.csv", ["kr", "schmidt", "ell_bound"], rows, meta)]


# --------------------------------------------------------------------------
# Validation suite
# --------------------------------------------------------------------------


def validation_checks(config: ExperimentConfig) -> list:
    """Fast oracle and invariant checks: list of (name, passed, detail)."""
    w0, w1 = config.w0_mm, config.w1_mm
    checks = []

    def check(name, fn):
        try:
            ok, detail = fn()
        except Exception as exc:  # a crash is a failed check, not a crash of the suite
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        checks.append((name, bool(ok), detail))

    def oracle():
        worst = max(
            abs(spectrum.c_ell_bg(l, kr, w0, w1) - spectrum.c_ell_numeric(l, kr, w0, w1, config.quad_tol))
            / spectrum.c_ell_bg(l, kr, w0, w1)
            for kr in (0, 7, 14, 21, 28, 35, 80)
            for l in range(-30, 31)
        )
        return worst < 1e-6, f"max rel err {worst:.2e}"

    def lg_limit():
        d = max(abs(spectrum.c_ell_bg(l, 1e-4, w0, w1) - spectrum.c_ell_lg(l, w0, w1)) for l in range(-30, 31))
        return d < 1e-6, f"max abs diff {d:.2e}"

    def schmidt():
        k = spectrum.schmidt_lg(w0, w1)
        ref = spectrum.schmidt_lg_closed_form(w0, w1)
        ks = [spectrum.schmidt_bg(kr, w0, w1) for kr in range(0, 101, 10)]
        inc = all(b > a for a, b in zip(ks, ks[1:]))
        return abs(k - ref) < 1e-4 and inc, f"K_LG={k:.6f} closed={ref:.6f} increasing={inc}"

    def flattening():
        lg = spectrum.spectrum_scan("lg", config.spectrum_ell_max, w0, w1)
        ratios = [lg.prob(10) / lg.prob(0)]
        for kr in (20, 40, 60, 80):
            r = spectrum.spectrum_scan("bg", config.spectrum_ell_max, w0, w1, kr)
            ratios.append(r.prob(10) / r.prob(0))
        inc = all(b > a for a, b in zip(ratios, ratios[1:]))
        return inc, "p10/p0 = " + ", ".join(f"{v:.4f}" for v in ratios)

    def selection():
        ref = klyshko.spdc_coincidence_polar(w0, MaskSpec("vortex", 3), MaskSpec("vortex", -3), w1)
        worst = max(
            klyshko.spdc_coincidence_polar(w0, MaskSpec("vortex", a), MaskSpec("vortex", b), w1)
            for a in range(-5, 6) for b in range(-5, 6) if a + b
        )
        return worst < 1e-10 * ref, f"max leak ratio {worst / ref:.1e}"

    def grating():
        b = klyshko.binary_efficiency_check(MaskKind.BINARY_AXICON, config.kr_fixed)
        z = klyshko.binary_efficiency_check(MaskKind.BLAZED_AXICON, config.kr_fixed)
        ok = abs(b[1] - (2 / math.pi) ** 2) < 0.01 and abs(b[-1] - (2 / math.pi) ** 2) < 0.01 and z[1] > 0.95
        return ok, f"binary +-1: {b[1]:.4f}, {b[-1]:.4f}; blazed +1: {z[1]:.4f}"

    def propagation():
        g = GridSpec(1024, 4.0)
        f = fields.gaussian_mode(0.5, g)
        p = optics.propagate(f, 100.0, config.lambda_down_nm)
        zr = math.pi * 0.25 / (config.lambda_down_nm * 1e-6)
        want = 0.5 * math.sqrt(1 + (100 / zr) ** 2)
        err = abs(optics.second_moment_radius(p) / want - 1)
        dp = abs(p.power() / f.power() - 1)
        return err < 5e-3 and dp < 1e-9, f"width err {err:.1e}, power err {dp:.1e}"

    def phasematch():
        rep = phase_report(config)
        return rep.valid and abs(rep.zeta_inv_sqrt - 209) < 1, f"1/sqrt(zeta)={rep.zeta_inv_sqrt:.2f} valid={rep.valid}"

    def bg_oracle():
        g = GridSpec(256, 2.0)
        worst = 0.0
        for l in (-3, 0, 2):
            for kr in (0.0, 21.0):
                p = ModeParams(l, kr, w1)
                worst = max(worst, fields.relative_l2(fields.bg_mode(p, g), fields.bg_mode_oracle(p, g)))
        return worst < 1e-6, f"max rel L2 {worst:.1e}"

    check("oracle_equivalence", oracle)
    check("lg_limit", lg_limit)
    check("schmidt_baseline", schmidt)
    check("spectrum_flattening", flattening)
    check("selection_rule", selection)
    check("grating_efficiency", grating)
    check("propagation_fidelity", propagation)
    check("phase_matching", phasematch)
    check("bg_mode_oracle", bg_oracle)
    return checks


def run_validate(config: ExperimentConfig, out: Path) -> tuple[Path, bool]:
    checks = validation_checks(config)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    path = write_table(out / "validate.csv", ["check", "passed", "detail"], checks, header(config))
    return path, all(ok for _, ok, _ in checks)


# --------------------------------------------------------------------------
# CLI
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="besselspdc", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectrum", help="OAM spectrum in the LG or BG basis")
    s.add_argument("--basis", choices=["lg", "bg"], default="bg")
    s.add_argument("--kr", type=float, default=0.0, help="crystal-plane radial wavevector, rad/mm")

    s = sub.add_parser("schmidt-scan", help="Schmidt number against k_r")
    s.add_argument("--kr-max", type=float, default=100.0)
    s.add_argument("--kr-step", type=float, default=10.0)

    kinds = [k.value for k in MaskKind]
    s = sub.add_parser("backproject", help="back-projection density matrix")
    s.add_argument("--kind", choices=kinds, default=None)
    s.add_argument("--axis", choices=[klyshko.AXIS_KR, klyshko.AXIS_ELL], default=klyshko.AXIS_KR)

    s = sub.add_parser("coincidence", help="predicted coincidence spectrum over l")
    s.add_argument("--kind", choices=kinds + ["bg-ideal"], default=None)
    s.add_argument("--kr", type=float, default=None, help="SLM-plane radial wavevector, rad/mm")

    s = sub.add_parser("mask-export", help="write an SLM phase mask as a graymap")
    s.add_argument("--kind", choices=kinds, required=True)
    s.add_argument("--ell", type=int, default=0)
    s.add_argument("--kr", type=float, default=0.0)

    sub.add_parser("phasematch", help="thin-crystal approximation check")
    sub.add_parser("validate", help="run the oracle and invariant checks")

    s = sub.add_parser("figure", help="emit plot data for a figure")
    s.add_argument("--id", dest="figure_id", choices=FIGURES, required=True)
    return p


def _overrides(items) -> dict:
    defaults = ExperimentConfig()
    known = {f.name: getattr(defaults, f.name) for f in dataclasses.fields(ExperimentConfig)}
    out = {}
    for item in items:
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep or key not in known:
            raise ConfigError(f"bad override {item!r}")
        out[key] = _parse_value(key, text, known[key])
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        config = load_config(args.config, _overrides(args.set))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = output_dir(args.out)
    start = time.perf_counter()
    try:
        cmd = args.command
        if cmd == "spectrum":
            paths = [run_spectrum(config, args.basis, args.kr, out)]
        elif cmd == "schmidt-scan":
            paths = [run_schmidt_scan(config, args.kr_max, args.kr_step, out)]
        elif cmd == "backproject":
            paths = [run_backproject(config, args.kind or config.mask_kind, args.axis, out)]
        elif cmd == "coincidence":
            kr = config.kr_fixed if args.kr is None else args.kr
            paths = [run_coincidence(config, args.kind or config.mask_kind, kr, out)]
        elif cmd == "mask-export":
            paths = [run_mask_export(config, args.kind, args.ell, args.kr, out)]
        elif cmd == "phasematch":
            paths = [run_phasematch(config, out)]
            rep = phase_report(config)
            print(f"zeta={rep.zeta:.4e} mm^2  1/sqrt(zeta)={rep.zeta_inv_sqrt:.1f} rad/mm  valid={rep.valid}")
        elif cmd == "validate":
            path, ok = run_validate(config, out)
            print(f"wrote {path}")
            return EXIT_OK if ok else EXIT_NUMERIC
        else:
            paths = emit_figure_data(args.figure_id, config, out)
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for p in paths:
        print(f"wrote {p}")
    print(f"done in {time.perf_counter() - start:.1f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
