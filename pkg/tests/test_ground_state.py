"""Ground-state solver, constants, rescaling and persistence."""
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from conftest import soliton
from nlspw.classifier import scale_field
from nlspw.functionals import i_functional, n2_functional
from nlspw.grid import Field, GridSpec, ModelParams
from nlspw.ground_state import (
    GroundStateError, cache_key, cached_ground_state, elliptic_residual, gaussian_seed,
    load_ground_state, n1_from_n2, rescale_ground_state, save_ground_state, solve_ground_state,
    verify_variational_relations,
)


def radial_shooting_3d_cubic(rmax=14.0):
    """Positive radial solution of Q'' + 2Q'/r - Q + Q^3 = 0 by bisection on Q(0).

    Returns (Q(0), mass accumulated out to the last reliable radius).
    """
    def rhs(r, y):
        q, dq, _ = y
        return [dq, -2.0 / r * dq + q - q ** 3, 4 * np.pi * r * r * q * q]

    def shoot(a):
        r0 = 1e-6
        y0 = [a + r0 ** 2 / 6 * (a - a ** 3), r0 / 3 * (a - a ** 3), 0.0]

        def cross(r, y):
            return y[0]
        cross.terminal = True
        return solve_ivp(rhs, (r0, rmax), y0, events=[cross], rtol=1e-12, atol=1e-14)

    lo, hi = 4.0, 4.6
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if shoot(mid).t_events[0].size:
            hi = mid
        else:
            lo = mid
    return lo, shoot(lo).y[2, -1]


def test_1d_profile_matches_sech_formula(gs1):
    x = gs1.grid.x_axis
    err = np.max(np.abs(gs1.profile.values.real - soliton(x, 7.0)))
    assert err < 1e-8
    assert np.max(gs1.profile.values.real) == pytest.approx(4 ** (1 / 6), rel=1e-9)


def test_3d_cubic_matches_radial_shooting(gs3):
    peak, mass = radial_shooting_3d_cubic()
    assert gs3.report.mass == pytest.approx(mass, rel=1e-5)
    assert np.max(gs3.profile.values.real) == pytest.approx(peak, rel=1e-5)


def test_frozen_3d_mass(gs3):
    assert gs3.report.mass == pytest.approx(18.897254307, rel=1e-8)


@pytest.mark.parametrize("name", ["gs1", "gs2", "gs3"])
def test_solver_quality(name, request):
    gs = request.getfixturevalue(name)
    assert gs.residual < 1e-10
    assert gs.positive
    assert abs(gs.k_defect) < 1e-6
    assert max(gs.pohozaev_errors().values()) < 1e-6
    rel = verify_variational_relations(gs)
    assert rel["n1_n2_relation"] < 1e-6
    assert rel["n3_n2_relation"] < 1e-6
    assert rel["n3_over_n2"] == pytest.approx(gs.params.k_coefficient, rel=1e-6)


@pytest.mark.parametrize("name", ["gs1", "gs2", "gs3"])
def test_constants_are_the_functionals_at_q(name, request):
    gs = request.getfixturevalue(name)
    c = gs.constants
    assert c["N2"] == pytest.approx(n2_functional(gs.profile, gs.params), rel=1e-14)
    assert c["N3"] == pytest.approx(i_functional(gs.profile, gs.params), rel=1e-14)
    assert c["N1"] == pytest.approx(n1_from_n2(gs.params, c["N2"]), rel=1e-6)


def test_q_minimizes_i_among_trial_functions(gs2, rng):
    """Q attains the Gagliardo-Nirenberg infimum: perturbations raise I."""
    base = i_functional(gs2.profile, gs2.params)
    g = gs2.grid
    for _ in range(5):
        bump = Field(g, gaussian_seed(g, center=rng.uniform(-2, 2, 2), width=rng.uniform(0.5, 2)))
        trial = gs2.profile + 0.05 * bump
        assert i_functional(trial, gs2.params) > base


def test_different_seeds_reach_same_profile():
    prm, grid = ModelParams(2, 4.0), GridSpec(2, 128, 16.0)
    a = solve_ground_state(prm, grid, tol=1e-11)
    b = solve_ground_state(prm, grid, tol=1e-11, seed=3.0 * gaussian_seed(grid, width=0.7))
    assert np.max(np.abs(a.profile.values - b.profile.values)) < 1e-9
    assert a.constants["N2"] == pytest.approx(b.constants["N2"], rel=1e-10)


@pytest.mark.parametrize("omega", [0.5, 2.0, 4.0])
def test_rescaled_state_solves_the_omega_equation(gs1, omega):
    q = rescale_ground_state(gs1, omega)
    assert q.params.omega == omega
    assert elliptic_residual(q.profile, q.params) < 1e-9
    for key in ("N1", "N2", "N3", "N2_tilde"):
        assert q.constants[key] == pytest.approx(gs1.constants[key], rel=1e-8)
    assert np.max(q.profile.values.real) == pytest.approx(omega ** (1 / 6) * 4 ** (1 / 6), rel=1e-9)


def test_rescale_onto_given_grid(gs1):
    # sqrt(2) * 14 stays inside the source cell [-20, 20)
    q = rescale_ground_state(gs1, 2.0, grid=GridSpec(1, 1024, 14.0))
    assert q.residual < 1e-6
    assert q.constants["N2"] == pytest.approx(gs1.constants["N2"], rel=1e-6)


def test_rescale_refuses_underresolved_target(gs1):
    with pytest.raises(GroundStateError):
        rescale_ground_state(gs1, 400.0, grid=GridSpec(1, 64, 20.0))


def test_rescale_requires_unit_frequency_input(gs1):
    q = rescale_ground_state(gs1, 2.0)
    with pytest.raises(ValueError):
        rescale_ground_state(q, 3.0)


def test_critical_scaling_preserves_constants(gs3):
    q = scale_field(gs3.profile, 1.7, 3.0)
    assert n2_functional(q, gs3.params) == pytest.approx(gs3.constants["N2"], rel=1e-12)


def test_failure_carries_residual_history():
    with pytest.raises(GroundStateError) as exc:
        solve_ground_state(ModelParams(1, 7.0), GridSpec(1, 256, 20.0), tol=1e-13, max_iter=3)
    assert np.isfinite(exc.value.residual)
    assert len(exc.value.history) == 4


def test_zero_seed_collapses():
    grid = GridSpec(1, 64, 10.0)
    with pytest.raises(GroundStateError):
        solve_ground_state(ModelParams(1, 7.0), grid, seed=np.zeros(grid.shape))


def test_dimension_mismatch_rejected():
    with pytest.raises(ValueError):
        solve_ground_state(ModelParams(1, 7.0), GridSpec(2, 32, 10.0))


def test_save_load_roundtrip(gs1, tmp_path):
    fpath, spath = save_ground_state(gs1, tmp_path / "q")
    for path in (fpath, spath):
        back = load_ground_state(path)
        assert np.array_equal(back.profile.values, gs1.profile.values)
        assert back.constants == gs1.constants
        assert back.params == gs1.params


def test_cache_reuses_previous_solve(tmp_path):
    prm, grid = ModelParams(1, 7.0), GridSpec(1, 256, 20.0)
    a = cached_ground_state(prm, grid, 1e-10, cache_dir=tmp_path)
    stem = tmp_path / cache_key(prm, grid, 1e-10)
    assert stem.with_suffix(".bin").exists()
    before = stem.with_suffix(".json").stat().st_mtime_ns
    b = cached_ground_state(prm, grid, 1e-10, cache_dir=tmp_path)
    assert stem.with_suffix(".json").stat().st_mtime_ns == before
    assert np.array_equal(a.profile.values, b.profile.values)
    assert cache_key(prm, grid, 1e-10) != cache_key(prm, grid, 1e-11)
