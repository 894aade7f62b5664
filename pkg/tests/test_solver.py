import csv

import numpy as np
import pytest
import scipy.optimize as so
from hypothesis import given, strategies as st

from nsasym.bilinear import bilinear_Bs
from nsasym.field import ModeSetMismatch, SpectralField, stokes_apply, stokes_solve
from nsasym.modes import enumerate_modes
from nsasym.solver import (ContinuationRun, NoConvergence, SingularJacobian, StepPolicy, _lu,
                           continue_branch, jacobian, newton_solve, picard, residual, sinusoidal_force)

from oracles import fd_slope


@pytest.fixture(scope="module")
def mf(ms3):
    return sinusoidal_force(ms3)


def march(g, v, a0, a1):
    """Newton states from a0 to a1 in steps of 20 percent."""
    s = newton_solve(a0, g, v)
    while s.alpha < a1:
        s = newton_solve(min(a1, s.alpha * 1.2), g, s.v)
    return s


def test_manufactured_pair_is_exact(mf):
    assert residual(mf.v_start, 1.0, mf.g).znorm() <= 1e-15
    np.testing.assert_array_equal(stokes_apply(mf.u).coeffs, mf.u.coeffs)


def test_zero_state_residual(mf, ms3):
    np.testing.assert_array_equal(residual(SpectralField.zeros(ms3), 3.0, mf.g).coeffs, -mf.g.coeffs)


def test_linear_residual(mf, ms3, rng):
    v = SpectralField.random(ms3, rng)
    r = residual(v, 0.0, mf.g)
    np.testing.assert_allclose(r.coeffs, ms3.k_squared[:, None] * v.coeffs - mf.g.coeffs, atol=1e-15)


def test_residual_mode_set_mismatch(mf):
    v = SpectralField.zeros(enumerate_modes(3, 4))
    with pytest.raises(ModeSetMismatch):
        residual(v, 1.0, mf.g)


def test_newton_from_exact_root(mf):
    s = newton_solve(1.0, mf.g, mf.v_start)
    assert s.newton_iters <= 2
    assert (s.v - mf.v_start).znorm() <= 1e-14


def test_newton_linear_problem(mf, ms3, rng):
    s = newton_solve(0.0, mf.g, SpectralField.random(ms3, rng))
    assert s.newton_iters == 1
    assert (s.v - stokes_solve(mf.g)).znorm() <= 1e-14


@pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
def test_newton_matches_picard_oracle(mf, alpha):
    s = newton_solve(alpha, mf.g, stokes_solve(mf.g))
    assert (s.v - picard(alpha, mf.g)).znorm() <= 1e-12


def test_newton_at_ten_matches_derivative_free_solver(mf, ms3):
    # plain Picard does not contract at alpha = 10, so the oracle is MINPACK's hybrid method
    s9 = march(mf.g, mf.v_start, 1.0, 9.0)
    s10 = newton_solve(10.0, mf.g, s9.v)
    assert s10.residual_norm <= 1e-10
    x = so.fsolve(lambda x: residual(SpectralField.from_real(ms3, x), 10.0, mf.g).to_real(),
                  s9.v.to_real(), xtol=1e-14)
    assert (SpectralField.from_real(ms3, x) - s10.v).znorm() <= 1e-10


def test_newton_rejects_bad_tolerance(mf):
    with pytest.raises(ValueError):
        newton_solve(1.0, mf.g, mf.v_start, tol=0)


def test_newton_no_convergence_returns_last_iterate(mf, ms3):
    with pytest.raises(NoConvergence, match="no convergence") as info:
        newton_solve(1e4, mf.g, SpectralField.zeros(ms3), max_iter=1)
    assert not info.value.state.converged
    assert info.value.state.v.mode_set == ms3


def test_singular_jacobian_is_reported():
    J = np.diag([1.0, 1.0, 0.0])
    with pytest.raises(SingularJacobian, match="fold/bifurcation suspected"):
        _lu(J, 2.5)
    with pytest.raises(SingularJacobian):
        _lu(np.diag([1.0, 1e-17]), 2.5)


@given(st.integers(0, 10_000), st.floats(0.5, 50))
def test_jacobian_action(seed, alpha):
    ms = enumerate_modes(3, 4)
    rng = np.random.default_rng(seed)
    v, w = SpectralField.random(ms, rng), SpectralField.random(ms, rng)
    ref = stokes_apply(w) + alpha * bilinear_Bs(v, w)
    np.testing.assert_allclose(jacobian(v, alpha) @ w.to_real(), ref.to_real(), atol=1e-11 * alpha)


@pytest.mark.parametrize("seed", range(5))
def test_jacobian_finite_difference_slope(mf, ms3, seed):
    # measured at a steady state on the branch, where continuation uses the Jacobian;
    # far from a root the cancellation in r(v + eps w) - r(v) swamps eps = 1e-8
    v = march(mf.g, mf.v_start, 1.0, 10.0).v
    w = SpectralField.random(ms3, np.random.default_rng(seed))
    w = w / w.znorm()
    slope, err = fd_slope(v, w, 10.0, mf.g)
    assert abs(slope - 1.0) <= 0.1
    # the error is exactly the quadratic term alpha eps B(w, w)
    assert err[0] == pytest.approx(1e-4 * 10.0 * np.linalg.norm(bilinear_Bs(w, w).to_real()) / 2, rel=1e-6)


def test_short_range_two_states(mf):
    run = continue_branch(mf.g, 1.0, 1.0 + 1e-6, v_start=mf.v_start)
    assert len(run.states) == 2
    assert run.check_invariants() == []


def test_geometric_two_point_schedule(mf):
    run = continue_branch(mf.g, 1.0, 50.0, StepPolicy(spacing="geometric", n_points=2), mf.v_start)
    np.testing.assert_array_equal(run.alphas, [1.0, 50.0])
    assert run.check_invariants() == []


def test_geometric_schedule_points(mf):
    run = continue_branch(mf.g, 1.0, 100.0, StepPolicy(spacing="geometric", n_points=9), mf.v_start)
    np.testing.assert_allclose(run.alphas, np.geomspace(1, 100, 9), rtol=1e-15)


def test_bad_range(mf):
    with pytest.raises(ValueError):
        continue_branch(mf.g, 2.0, 1.0)


def test_single_pair_force_stays_bounded(ms3):
    g = SpectralField.from_modes(ms3, {(1, 1, 0): [1, -1, 2]})
    run = continue_branch(g, 1.0, 1e4, StepPolicy(spacing="geometric", n_points=30))
    assert not run.truncated
    assert all(s.v.hnorm() <= g.hnorm() * (1 + 1e-8) for s in run.states)


def test_sinusoidal_branch_shape(sinusoidal_branch):
    run = sinusoidal_branch
    assert not run.truncated
    assert run.alphas[0] == 1.0 and run.alphas[-1] == 2e5
    assert 300 <= len(run.states) <= 1000
    assert run.check_invariants() == []
    z = np.array([f.znorm() for f in run.fields])
    assert np.all(np.diff(z) < 0)


def test_grashof_metadata_tracks_force_scale(mf):
    a = continue_branch(mf.g, 1.0, 1.5, v_start=mf.v_start)
    b = continue_branch(2 * mf.g, 1.0, 1.5)
    assert b.meta["grashof_start"] == pytest.approx(2 * a.meta["grashof_start"], rel=1e-15)
    np.testing.assert_allclose(b.grashof[0], 2 * a.grashof[0], rtol=1e-15)


def test_branch_roundtrip_and_replay(mf, tmp_path):
    run = continue_branch(mf.g, 1.0, 3.0, v_start=mf.v_start)
    run.write(tmp_path / "a")
    continue_branch(mf.g, 1.0, 3.0, v_start=mf.v_start).write(tmp_path / "b")
    assert (tmp_path / "a" / "branch.csv").read_bytes() == (tmp_path / "b" / "branch.csv").read_bytes()
    with open(tmp_path / "a" / "branch.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["alpha", "znorm", "hnorm", "residual", "newton_iters"]
    back = ContinuationRun.read(tmp_path / "a")
    assert back.check_invariants() == []
    np.testing.assert_array_equal(back.alphas, run.alphas)
    for x, y in zip(back.fields, run.fields):
        np.testing.assert_array_equal(x.coeffs, y.coeffs)


def test_read_missing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        ContinuationRun.read(tmp_path / "nothing")


def test_invariant_checker_flags_problems(mf):
    run = continue_branch(mf.g, 1.0, 1.5, v_start=mf.v_start)
    bad = ContinuationRun(run.g, run.states[::-1], run.meta)
    assert any("increasing" in p for p in bad.check_invariants())
    assert any("residual" in p for p in run.check_invariants(tol=1e-300)) or \
        all(s.residual_norm == 0 for s in run.states)
