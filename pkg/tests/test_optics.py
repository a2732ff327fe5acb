import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from besselspdc.fields import Field, GridSpec, gaussian_mode, make_mask
from besselspdc.optics import (
    AliasingWarning,
    FreeSpace,
    IdealRelay,
    PhaseMask,
    Ray,
    Reflection,
    ThinLens,
    apply,
    apply_element,
    apply_train,
    distance_up_to_phase,
    fiber_coupling,
    fresnel_4f,
    mode_overlap,
    propagate,
    ray_transfer,
    second_moment_radius,
)

LAM = 710.0


def mat(m):
    return np.array([[m.a, m.b], [m.c, m.d]])


# ray algebra


def test_freespace_lens_matrices():
    np.testing.assert_array_equal(mat(FreeSpace(5).ray()), [[1, 5], [0, 1]])
    np.testing.assert_array_equal(mat(ThinLens(4).ray()), [[1, 0], [-0.25, 1]])
    np.testing.assert_array_equal(mat(ray_transfer(FreeSpace(0))), np.eye(2))


def test_two_f_system_is_fourier():
    m = ray_transfer([FreeSpace(100), ThinLens(100), FreeSpace(100)])
    np.testing.assert_allclose(mat(m), [[0, 100], [-0.01, 0]], atol=1e-15)


def test_4f_is_inverting_unit_relay():
    m = ray_transfer(fresnel_4f(50))
    np.testing.assert_allclose(mat(m), -np.eye(2), atol=1e-13)
    np.testing.assert_array_equal(mat(ray_transfer(Reflection("x"))), -np.eye(2))
    np.testing.assert_array_equal(mat(ray_transfer(Reflection("y"))), np.eye(2))


def test_order_of_composition():
    # lens then space differs from space then lens
    a = ray_transfer([ThinLens(10), FreeSpace(5)])
    b = ray_transfer([FreeSpace(5), ThinLens(10)])
    np.testing.assert_allclose(mat(a), mat(FreeSpace(5).ray()) @ mat(ThinLens(10).ray()))
    assert not np.allclose(mat(a), mat(b))


def test_relay_matrix_and_ray():
    out = apply(ray_transfer(IdealRelay(-2)), Ray(1.0, 0.1))
    assert (out.x, out.alpha) == (-2.0, -0.05)


elements = st.one_of(
    st.floats(0, 1e3).map(FreeSpace),
    st.one_of(st.floats(-1e3, -1e-2), st.floats(1e-2, 1e3)).map(ThinLens),
    st.one_of(st.floats(-10, -0.1), st.floats(0.1, 10)).map(IdealRelay),
    st.sampled_from([Reflection("x"), Reflection("y")]),
)


@given(st.lists(elements, max_size=8))
def test_train_unimodular(train):
    m = ray_transfer(train)
    scale = max(1.0, np.abs(mat(m)).max()) ** 2
    assert abs(m.det - 1) <= 1e-9 * scale


def test_invalid_elements():
    with pytest.raises(ValueError):
        FreeSpace(-1)
    with pytest.raises(ValueError):
        ThinLens(0)
    with pytest.raises(ValueError):
        IdealRelay(0)
    with pytest.raises(ValueError):
        IdealRelay(1, cutoff=0)
    with pytest.raises(ValueError):
        Reflection("z")
    with pytest.raises(ValueError):
        Ray(math.nan, 0)
    with pytest.raises(TypeError):
        apply_element(gaussian_mode(0.5, GridSpec(64, 4.0)), object())


# wave propagation


@pytest.fixture(scope="module")
def g256():
    return GridSpec(256, 4.0)


def test_gaussian_spreading(grid):
    w0, z = 0.5, 100.0
    zr = math.pi * w0**2 / (LAM * 1e-6)
    out = propagate(gaussian_mode(w0, grid), z, LAM)
    assert second_moment_radius(out) == pytest.approx(w0 * math.sqrt(1 + (z / zr) ** 2), rel=1e-9)
    f = gaussian_mode(w0, grid)
    assert out.power() == pytest.approx(f.power(), rel=1e-12)


def test_propagation_zero_and_reversible(g256):
    f = gaussian_mode(0.3, g256)
    assert propagate(f, 0.0) is f
    back = propagate(propagate(f, 250.0), -250.0)
    assert np.max(np.abs(back.values - f.values)) < 1e-12


@given(st.floats(1, 500), st.floats(1, 500))
def test_propagation_semigroup(d1, d2):
    g = GridSpec(64, 4.0)
    f = gaussian_mode(0.4, g)
    a = propagate(propagate(f, d1), d2)
    b = propagate(f, d1 + d2)
    assert np.max(np.abs(a.values - b.values)) < 1e-10


def test_aliasing_warning(g256):
    x, _ = g256.coords()
    fast = Field(g256, np.exp(1j * 0.95 * g256.nyquist * x))
    with pytest.warns(AliasingWarning):
        propagate(fast, 10.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", AliasingWarning)
        propagate(gaussian_mode(0.5, g256), 10.0)


def test_lens_focus_waist():
    grid = GridSpec(1024, 8.0)
    w, f = 0.8, 100.0
    out = apply_train(gaussian_mode(w, grid), [ThinLens(f), FreeSpace(f)], LAM)
    w_focus = LAM * 1e-6 * f / (math.pi * w)
    assert second_moment_radius(out) == pytest.approx(w_focus, rel=1e-3)


def test_4f_matches_ideal_inverting_relay():
    grid = GridSpec(512, 8.0)
    x, y = grid.coords()
    f = Field(grid, np.exp(-((x - 0.3) ** 2 + y**2) / 0.5**2) * np.exp(1j * 3 * y))
    ideal = apply_element(f, IdealRelay(-1))
    errs = [distance_up_to_phase(apply_train(f, fresnel_4f(fl), LAM), ideal) for fl in (100.0, 300.0)]
    # residual is the aberration of a paraxial lens under exact propagation
    assert errs[1] < 2e-5
    assert errs[0] > 9 * errs[1]


def test_relay_mapping(g256):
    x, y = g256.coords()
    f = Field(g256, np.exp(-((x - 0.25) ** 2 + (y + 0.125) ** 2) / 0.3**2))
    out = apply_element(f, IdealRelay(-2))
    assert out.grid == GridSpec(256, 8.0)
    assert out.power() == pytest.approx(f.power(), rel=1e-14)
    # feature at (0.25, -0.125) lands at (-0.5, 0.25)
    iy, ix = np.unravel_index(np.argmax(np.abs(out.values)), out.values.shape)
    assert (out.grid.axis[ix], out.grid.axis[iy]) == pytest.approx((-0.5, 0.25))
    back = apply_element(out, IdealRelay(-0.5))
    assert back.grid == g256
    assert np.max(np.abs(back.values - f.values)) < 1e-15


def test_relay_cutoff_removes_high_frequencies(g256):
    x, _ = g256.coords()
    env = np.exp(-(x**2 + g256.coords()[1] ** 2) / 0.5**2)
    f = Field(g256, env * (1 + np.cos(60 * x)))
    out = apply_element(f, IdealRelay(1, cutoff=30))
    assert distance_up_to_phase(out, Field(g256, env)) < 1e-6


def test_reflection_reverses_oam(g256):
    for ell in (2, 3):
        m = make_mask("vortex", ell, 0.0, g256).field
        r = apply_element(m, Reflection())
        # x -> -x sends phi to pi - phi
        off_cut = np.ones(m.values.shape, bool)
        off_cut[:, 0] = off_cut[0, :] = off_cut[g256.n // 2, :] = False  # edge row and the phi = pi cut
        np.testing.assert_allclose(r.values[off_cut], (-1) ** ell * np.conj(m.values[off_cut]), atol=1e-12)


def test_phase_mask_element(g256):
    m = make_mask("vortex", 2, 0.0, g256).field
    f = gaussian_mode(0.5, g256)
    out = apply_element(f, PhaseMask(m))
    np.testing.assert_allclose(out.values, f.values * m.values)


# detection


def test_fiber_coupling_examples():
    g256 = GridSpec(256, 8.0)
    g = gaussian_mode(0.5, g256)
    assert fiber_coupling(g, 0.5) == pytest.approx(1, abs=1e-12)
    # (2 w1 w2 / (w1^2 + w2^2))^2 for w2 = 2 w1
    assert fiber_coupling(gaussian_mode(0.3, g256), 0.6) == pytest.approx(0.64, abs=1e-10)
    vortex = Field(g256, g.values * make_mask("vortex", 1, 0.0, g256).field.values)
    # only the on-axis sample, where the mask is 1, survives the azimuthal sum
    assert fiber_coupling(vortex, 0.5) < 1e-5
    with pytest.raises(ValueError):
        fiber_coupling(Field(g256, np.zeros((256, 256))), 0.5)
    with pytest.raises(ValueError):
        fiber_coupling(g, 0.0)


@given(st.floats(0, 2 * math.pi), st.floats(0.1, 0.6), st.floats(0.1, 0.6))
def test_overlap_symmetric_and_phase_blind(theta, wa, wb):
    g = GridSpec(64, 8.0)
    a = gaussian_mode(wa, g)
    b = Field(g, gaussian_mode(wb, g).values * np.exp(1j * theta))
    assert mode_overlap(a, b) == pytest.approx(mode_overlap(b, a), rel=1e-12)
    assert mode_overlap(a, b) == pytest.approx(mode_overlap(a, gaussian_mode(wb, g)), rel=1e-12)
    assert 0 <= mode_overlap(a, b) <= 1 + 1e-12


def lens_pair(f1, f2):
    # SLM A lens, inverting unit relay through the crystal mirror, SLM B lens
    return [ThinLens(f1), IdealRelay(-1), ThinLens(f2)]


def test_lens_pair_conjugate_is_inversion():
    m = ray_transfer(lens_pair(200.0, -200.0))
    np.testing.assert_allclose(mat(m), -np.eye(2), atol=1e-15)


@given(st.floats(1, 1e3), st.floats(1, 1e3))
def test_lens_pair_general_form(f1, f2):
    m = ray_transfer(lens_pair(f1, f2))
    np.testing.assert_allclose(mat(m), [[-1, 0], [1 / f1 + 1 / f2, -1]], rtol=1e-12, atol=1e-15)


def test_identical_lenses_diverge():
    m = ray_transfer(lens_pair(200.0, 200.0))
    assert m.c == pytest.approx(2 / 200.0)
    out = apply(m, Ray(1.0, 0.0))
    assert out.alpha != 0


@given(st.lists(st.one_of(st.floats(0, 1e3).map(FreeSpace), st.floats(1, 1e3).map(ThinLens)), max_size=6))
def test_lens_space_trains_det_one(train):
    m = ray_transfer(train)
    assert abs(m.det - 1) <= 1e-12 * max(1.0, abs(m.a * m.d), abs(m.b * m.c))


def test_phase_mask_all_ones_identity(g256):
    f = gaussian_mode(0.5, g256)
    out = apply_element(f, PhaseMask(Field(g256, np.ones((256, 256)))))
    np.testing.assert_array_equal(out.values, f.values)


def test_relay_doubles_gaussian_waist():
    f = gaussian_mode(0.23, GridSpec(512, 2.0))
    out = apply_element(f, IdealRelay(-2))
    assert out.power() == pytest.approx(f.power(), rel=1e-9)
    assert distance_up_to_phase(out, gaussian_mode(0.46, out.grid)) < 1e-12


def test_plane_wave_focus_within_five_airy_radii():
    grid = GridSpec(1024, 4.0)
    r, _ = grid.polar()
    aperture, focal = 2.0, 200.0
    pw = Field(grid, (r <= aperture / 2).astype(complex))
    with pytest.warns(AliasingWarning):
        out = apply_train(pw, [ThinLens(focal), FreeSpace(focal)], LAM)
    airy = 1.22 * LAM * 1e-6 * focal / aperture
    i = out.intensity()
    assert i[r <= 5 * airy].sum() / i.sum() > 0.95
