"""Lattice, spectral operators and field serialization."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nlspw.grid import (
    Field, GridMismatchError, GridSpec, ModelParams, NonFiniteFieldError, ParameterError,
    evaluate_trig_interpolant, free_propagate, grad_norm_sq, gradient, inner,
    l2_norm_sq, l2_norm_sq_spectral, laplacian, load_field, lq_norm, save_field,
)


def gaussian(grid, a=1.0, s2=1.0):
    return Field.from_function(grid, lambda *x: a * np.exp(-sum(c * c for c in x) / (2 * s2)))


@pytest.mark.parametrize("d,p", [(1, 5), (2, 3), (3, 5), (0, 3), (3, 1.2)])
def test_params_window_rejects(d, p):
    with pytest.raises(ParameterError):
        ModelParams(d, p)


@pytest.mark.parametrize("d,p", [(1, 7), (2, 4), (3, 3), (3, 4.9)])
def test_params_window_accepts(d, p):
    prm = ModelParams(d, p)
    assert 0 < prm.s_p < 1


def test_params_rejects_nonpositive_omega():
    with pytest.raises(ParameterError):
        ModelParams(3, 3, omega=0.0)


@pytest.mark.parametrize("n", [7, 12, 4])
def test_grid_requires_power_of_two(n):
    with pytest.raises(ValueError):
        GridSpec(1, n, 5.0)


def test_k2_index_matches_k2():
    g = GridSpec(2, 16, 3.0)
    assert np.allclose((np.pi / g.L) ** 2 * g.k2_index, g.k2, rtol=1e-14, atol=0)


def test_nyquist_zeroed_in_first_derivative_only():
    g = GridSpec(1, 16, 4.0)
    assert g.k_symbol[8] == 0.0
    assert g.k2[8] == pytest.approx(g.k_max ** 2)


def test_grid_dict_roundtrip():
    g = GridSpec(3, 32, 7.5)
    assert GridSpec.from_dict(g.to_dict()) == g


def test_field_is_read_only_and_shape_checked():
    g = GridSpec(1, 8, 1.0)
    f = Field.zeros(g)
    with pytest.raises(ValueError):
        f.values[0] = 1
    with pytest.raises(ValueError):
        Field(g, np.zeros(9))


def test_mismatched_grids_refused():
    a = Field.zeros(GridSpec(1, 8, 1.0))
    b = Field.zeros(GridSpec(1, 8, 2.0))
    with pytest.raises(GridMismatchError):
        a + b
    with pytest.raises(GridMismatchError):
        inner(a, b)


def test_nonfinite_detection():
    g = GridSpec(1, 8, 1.0)
    v = np.zeros(8)
    v[3] = np.nan
    with pytest.raises(NonFiniteFieldError):
        Field(g, v).require_finite()


def test_gaussian_norms_match_closed_forms():
    g = GridSpec(3, 64, 10.0)
    f = gaussian(g)
    assert l2_norm_sq(f) == pytest.approx(np.pi ** 1.5, rel=1e-12)
    assert grad_norm_sq(f) == pytest.approx(1.5 * np.pi ** 1.5, rel=1e-10)
    assert lq_norm(f, 4) ** 4 == pytest.approx((np.pi / 2) ** 1.5, rel=1e-12)
    assert lq_norm(f, np.inf) == pytest.approx(1.0)


def test_laplacian_of_gaussian():
    g = GridSpec(2, 64, 10.0)
    f = gaussian(g)
    r2 = g.r ** 2
    exact = (r2 - 2.0) * np.exp(-r2 / 2)
    assert np.max(np.abs(laplacian(f).values - exact)) < 1e-10


def test_gradient_is_real_and_exact_for_real_data():
    g = GridSpec(1, 64, 10.0)
    f = gaussian(g)
    (gx,) = gradient(f)
    x = g.x_axis
    assert np.max(np.abs(gx.values.imag)) < 1e-14
    assert np.max(np.abs(gx.values.real + x * np.exp(-x * x / 2))) < 1e-10


def test_free_propagator_matches_closed_form_gaussian():
    g = GridSpec(1, 512, 40.0)
    f = gaussian(g)
    t = 1.3
    x = g.x_axis
    exact = (1 + 1j * t) ** -0.5 * np.exp(-x * x / (2 * (1 + 1j * t)))
    assert np.max(np.abs(free_propagate(f, t).values - exact)) < 1e-12


def test_trig_interpolant_reproduces_samples_and_offgrid_values():
    g = GridSpec(1, 128, 12.0)
    f = gaussian(g)
    assert np.allclose(evaluate_trig_interpolant(f, [g.x_axis]), f.values, atol=1e-13)
    pts = np.array([0.05, 1.234, -2.5])
    assert np.allclose(evaluate_trig_interpolant(f, [pts]), np.exp(-pts ** 2 / 2), atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([1, 2]))
def test_parseval(seed, d):
    rng = np.random.default_rng(seed)
    g = GridSpec(d, 16, 3.0)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    assert l2_norm_sq_spectral(f) == pytest.approx(l2_norm_sq(f), rel=1e-12)
    # -<Lap f, f> = ||grad f||^2
    assert (-inner(laplacian(f), f)).real == pytest.approx(grad_norm_sq(f), rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(-5, 5))
def test_free_propagator_is_unitary_group(seed, t):
    rng = np.random.default_rng(seed)
    g = GridSpec(1, 32, 4.0)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    u = free_propagate(f, t)
    assert l2_norm_sq(u) == pytest.approx(l2_norm_sq(f), rel=1e-12)
    assert free_propagate(u, -t).allclose(f, atol=1e-12)


@pytest.mark.parametrize("suffix", [".bin", ".csv"])
def test_field_save_load_roundtrip(tmp_path, rng, suffix):
    g = GridSpec(2, 8, 2.5)
    f = Field(g, rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape))
    path = save_field(f, tmp_path / f"f{suffix}")
    back = load_field(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_load_rejects_foreign_file(tmp_path):
    p = tmp_path / "junk.txt"
    p.write_text("hello\n")
    with pytest.raises(ValueError):
        load_field(p)
