"""Torus solver: differentiation schemes, residual/linearization consistency,
continuity marching, manufactured recovery, and failure modes."""

import math

import numpy as np
import pytest
import scipy.linalg

from gma import solver
from gma.exceptions import (
    CompatibilityError,
    ConeBreachError,
    StepUnderflowError,
)
from gma.kernel import CoefficientSet
from gma.solver import (
    ClassPathReport,
    PotentialField,
    TorusGeometry,
    class_path_probe,
    cohomology_integrals,
    cone_margin_field,
    continuity_solve,
    eigenvalue_field,
    hessian_field,
    linearize,
    manufacture,
    newton_solve,
    potential_hessian,
    residual,
    trig_polynomial,
)

PI2 = math.pi**2


def geom1(nx=64):
    return TorusGeometry(1, (nx,), np.array([[1.0]]), np.array([[1.0]]))


def geom2(nx=32, chi=None, omega0=None):
    chi = np.eye(2) if chi is None else np.asarray(chi, dtype=float)
    omega0 = np.eye(2) if omega0 is None else np.asarray(omega0, dtype=float)
    return TorusGeometry(2, (nx, nx), chi, omega0)


def two_mode(shape, amp):
    n = len(shape)
    terms = []
    for axis in range(n):
        wave = [0] * n
        wave[axis] = 1
        terms.append({"amplitude": amp, "wave": wave})
    return trig_polynomial(shape, 0.0, terms)


# ---------------------------------------------------------------------------
# geometry and field plumbing
# ---------------------------------------------------------------------------

def test_geometry_validation():
    with pytest.raises(ValueError):
        TorusGeometry(4, (8, 8, 8, 8), np.eye(4), np.eye(4))
    with pytest.raises(ValueError):
        TorusGeometry(2, (8,), np.eye(2), np.eye(2))
    with pytest.raises(ValueError):
        TorusGeometry(1, (15,), np.eye(1), np.eye(1))
    with pytest.raises(ValueError):
        TorusGeometry(1, (6,), np.eye(1), np.eye(1))
    with pytest.raises(ValueError):
        TorusGeometry(2, (8, 8), np.array([[1.0, 2.0], [2.0, 1.0]]), np.eye(2))
    with pytest.raises(ValueError):
        TorusGeometry(2, (8, 8), np.eye(2), np.array([[1.0, 0.5], [0.4, 1.0]]))


def test_hessian_field_constant_background():
    chi = np.array([[2.0, 1.0], [1.0, 3.0]])
    omega0 = np.array([[1.5, 0.5], [0.5, 2.0]])
    geom = geom2(16, chi, omega0)
    A = hessian_field(geom, np.zeros(geom.grid_shape))
    expected = np.linalg.solve(chi, omega0)
    assert np.allclose(A, expected[None, None, :, :], rtol=1e-13, atol=1e-14)


def test_spectral_hessian_exact_on_cosine():
    geom = geom1(64)
    phi = trig_polynomial(geom.grid_shape, 0.0, [{"amplitude": 1.0, "wave": (1,)}])
    H = potential_hessian(geom, phi, scheme="spectral")
    x = geom.axes()[0]
    expected = -4.0 * PI2 * np.cos(2.0 * np.pi * x)
    assert np.max(np.abs(H[:, 0, 0] - expected)) <= 1e-10 * 4.0 * PI2


def test_fd_hessian_second_order_on_cosine():
    errs = []
    for nx in (16, 32, 64):
        geom = geom1(nx)
        phi = trig_polynomial(geom.grid_shape, 0.0, [{"amplitude": 1.0, "wave": (1,)}])
        H = potential_hessian(geom, phi, scheme="fd")
        x = geom.axes()[0]
        expected = -4.0 * PI2 * np.cos(2.0 * np.pi * x)
        errs.append(np.max(np.abs(H[:, 0, 0] - expected)))
    assert 3.8 <= errs[0] / errs[1] <= 4.2
    assert 3.8 <= errs[1] / errs[2] <= 4.2


def test_mixed_fd_stencil_second_order():
    errs = []
    for nx in (16, 32, 64):
        shape = (nx, nx)
        phi = trig_polynomial(shape, 0.0, [{"amplitude": 1.0, "wave": (1, 1)}])
        geom = geom2(nx)
        H = potential_hessian(geom, phi, scheme="fd")
        xs, ys = geom.mesh()
        expected = -4.0 * PI2 * np.cos(2.0 * np.pi * (xs + ys))
        errs.append(np.max(np.abs(H[..., 0, 1] - expected)))
    assert 3.8 <= errs[0] / errs[1] <= 4.2
    assert 3.8 <= errs[1] / errs[2] <= 4.2


def test_eigenvalue_field_matches_generalized_pointwise_solver():
    rng = np.random.default_rng(7)
    chi = np.array([[2.0, 0.3], [0.3, 1.0]])
    omega0 = np.array([[1.0, 0.2], [0.2, 1.5]])
    geom = geom2(16, chi, omega0)
    phi = trig_polynomial(
        geom.grid_shape,
        0.0,
        [
            {"amplitude": 0.01, "wave": (1, 0)},
            {"amplitude": 0.008, "wave": (0, 1), "phase": 0.4},
            {"amplitude": 0.005, "wave": (1, 1), "phase": 1.1},
        ],
    )
    lam = eigenvalue_field(geom, phi)
    H = potential_hessian(geom, phi)
    for _ in range(25):
        i, j = rng.integers(0, 16, size=2)
        pointwise = scipy.linalg.eigh(
            omega0 + 0.25 * H[i, j], chi, eigvals_only=True
        )
        assert np.allclose(lam[i, j], pointwise, rtol=1e-10, atol=1e-12)


def test_eigenvalue_field_three_dimensional_oracle():
    rng = np.random.default_rng(11)
    chi = np.diag([1.0, 2.0, 1.5])
    omega0 = np.array([[1.0, 0.1, 0.0], [0.1, 1.2, 0.05], [0.0, 0.05, 0.9]])
    geom = TorusGeometry(3, (8, 8, 8), chi, omega0)
    phi = trig_polynomial(
        geom.grid_shape,
        0.0,
        [
            {"amplitude": 0.004, "wave": (1, 0, 0)},
            {"amplitude": 0.003, "wave": (0, 1, 1), "phase": 0.7},
        ],
    )
    lam = eigenvalue_field(geom, phi)
    H = potential_hessian(geom, phi)
    for _ in range(10):
        i, j, k = rng.integers(0, 8, size=3)
        pointwise = scipy.linalg.eigh(
            omega0 + 0.25 * H[i, j, k], chi, eigvals_only=True
        )
        assert np.allclose(lam[i, j, k], pointwise, rtol=1e-10, atol=1e-12)


def test_gauge_invariance_is_bitwise_for_dyadic_data():
    rng = np.random.default_rng(3)
    geom = geom2(16)
    phi = rng.integers(0, 8, size=geom.grid_shape).astype(float) / 2.0**20
    shifted = phi + 0.5
    assert np.array_equal(
        PotentialField(phi).values, PotentialField(shifted).values
    )
    coeffs = CoefficientSet(2, (1.0,)).with_c0(1.0)
    f = np.zeros(geom.grid_shape)
    r1 = residual(geom, coeffs, f, 0.5, phi)
    r2 = residual(geom, coeffs, f, 0.5, shifted)
    assert np.array_equal(r1, r2)
    assert np.array_equal(
        hessian_field(geom, phi), hessian_field(geom, shifted)
    )


def test_potential_field_validation():
    with pytest.raises(ValueError):
        PotentialField(np.array([1.0, np.nan]))
    geom = geom1(16)
    with pytest.raises(ValueError):
        residual(
            geom, CoefficientSet(1, ()).with_c0(1.0),
            np.ones(16), 1.0, np.zeros(8),
        )
    with pytest.raises(ValueError):
        hessian_field(geom, np.zeros(16), scheme="compact")


def test_trig_polynomial_values_and_guards():
    vals = trig_polynomial((16,), 2.0)
    assert np.array_equal(vals, np.full(16, 2.0))
    with pytest.raises(ValueError):
        trig_polynomial((16,), 0.0, [{"amplitude": 1.0, "wave": (1, 1)}])


# ---------------------------------------------------------------------------
# residual, margins, linearization
# ---------------------------------------------------------------------------

def test_residual_requires_c0_before_endpoint():
    geom = geom2(16)
    f = np.zeros(geom.grid_shape)
    with pytest.raises(ValueError):
        residual(geom, CoefficientSet(2, (1.0,)), f, 0.5, np.zeros(geom.grid_shape))
    # the endpoint equation does not involve c0
    r = residual(geom, CoefficientSet(2, (1.0,)), f, 1.0, np.zeros(geom.grid_shape))
    assert np.allclose(r, 0.0, atol=1e-14)


def test_residual_detects_lost_positivity():
    geom = geom2(16)
    coeffs = CoefficientSet(2, (1.0,)).with_c0(1.0)
    phi = two_mode(geom.grid_shape, 1.0)
    with pytest.raises(ConeBreachError):
        residual(geom, coeffs, np.zeros(geom.grid_shape), 0.5, phi)


def test_cone_margin_frozen_values():
    geom = geom2(64)
    coeffs = CoefficientSet(2, (1.0,))
    flat = cone_margin_field(geom, coeffs, 1.0, np.zeros(geom.grid_shape))
    assert flat.min_margin == pytest.approx(0.5, rel=1e-14)
    amp = 2.0 / (7.0 * PI2)
    phi = two_mode(geom.grid_shape, amp)
    report = cone_margin_field(geom, coeffs, 1.0, phi)
    assert report.min_margin == pytest.approx(0.3, rel=1e-12)
    assert report.field.shape == geom.grid_shape
    # with no positive coefficients the load vanishes and the margin is 1
    trivial = cone_margin_field(geom1(16), CoefficientSet(1, ()), 1.0, np.zeros(16))
    assert trivial.min_margin == 1.0


def test_cone_margin_grid_refinement_agreement():
    coeffs = CoefficientSet(2, (1.0,))
    mins = []
    for nx in (32, 64):
        geom = geom2(nx)
        phi = two_mode(geom.grid_shape, 0.01)
        mins.append(cone_margin_field(geom, coeffs, 1.0, phi).min_margin)
    assert abs(mins[0] - mins[1]) <= 1e-3


@pytest.mark.parametrize("scheme", ["spectral", "fd"])
def test_linearize_matches_directional_difference(scheme):
    geom = geom2(16)
    coeffs = CoefficientSet(2, (0.8,))
    ints = cohomology_integrals(geom)
    coeffs = coeffs.with_c0(ints.c0)
    f = trig_polynomial(
        geom.grid_shape, 0.5, [{"amplitude": 0.1, "wave": (1, 0)}]
    )
    phi = trig_polynomial(
        geom.grid_shape,
        0.0,
        [
            {"amplitude": 0.02, "wave": (1, 0)},
            {"amplitude": 0.015, "wave": (1, 1), "phase": 0.3},
        ],
    )
    psi = trig_polynomial(
        geom.grid_shape,
        0.0,
        [
            {"amplitude": 0.01, "wave": (0, 1)},
            {"amplitude": 0.007, "wave": (2, 1), "phase": 0.9},
        ],
    )
    psi -= psi.mean()
    t = 0.7
    lin = linearize(geom, coeffs, f, t, phi, scheme=scheme)
    eps = 1e-5
    diff = (
        residual(geom, coeffs, f, t, phi + eps * psi, scheme=scheme)
        - residual(geom, coeffs, f, t, phi - eps * psi, scheme=scheme)
    ) / (2.0 * eps)
    applied = lin.apply(psi)
    rel = np.max(np.abs(diff - applied)) / np.max(np.abs(applied))
    assert rel <= 1e-6
    assert lin.slack_direction == -1.0
    sdiff = (
        residual(geom, coeffs, f, t, phi, slack=eps, scheme=scheme)
        - residual(geom, coeffs, f, t, phi, slack=-eps, scheme=scheme)
    ) / (2.0 * eps)
    assert np.allclose(sdiff, -1.0, rtol=0, atol=1e-11)


# ---------------------------------------------------------------------------
# class integrals and compatibility
# ---------------------------------------------------------------------------

def test_cohomology_integrals_frozen_diagonal_example():
    geom = geom2(16, np.eye(2), np.diag([1.0, 2.0]))
    ints = cohomology_integrals(geom)
    assert ints.values == (1.0, 1.5, 2.0)
    assert ints.c0 == 2.0
    coeffs = CoefficientSet(2, (1.0,))
    full = cohomology_integrals(geom, coeffs, np.zeros(geom.grid_shape))
    assert full.defect == pytest.approx(0.5, abs=1e-15)


def test_compatibility_defect_rejected():
    geom = geom2(16, np.eye(2), np.diag([1.0, 2.0]))
    coeffs = CoefficientSet(2, (1.0,))
    with pytest.raises(CompatibilityError) as err:
        continuity_solve(geom, coeffs, np.zeros(geom.grid_shape))
    assert err.value.defect == pytest.approx(0.5, abs=1e-12)


def test_source_below_floor_warns_but_still_solves():
    geom = geom2(16, np.eye(2), 0.6 * np.eye(2))
    coeffs = CoefficientSet(2, (1.0,))
    ints = cohomology_integrals(geom)
    f = np.full(geom.grid_shape, ints.c0 - ints.values[1])  # compatible but deep
    assert f.min() < -1.0 / 512.0
    with pytest.warns(UserWarning, match="floor"):
        state = continuity_solve(geom, coeffs, f)
    assert state.t == 1.0
    assert np.all(state.phi == 0.0)  # the flat potential already solves this one


def test_all_zero_regime_requires_positive_source():
    geom = geom1(16)
    coeffs = CoefficientSet(1, ())
    # mean 1.0 keeps the instance compatible, the dip below zero must reject it
    f = trig_polynomial((16,), 1.0, [{"amplitude": 1.5, "wave": (1,)}])
    with pytest.raises(ValueError, match="positive"):
        continuity_solve(geom, coeffs, f)


def test_all_zero_regime_positive_source_accepted():
    geom = geom1(16)
    coeffs = CoefficientSet(1, ())
    f = trig_polynomial((16,), 1.0, [{"amplitude": 0.3, "wave": (1,)}])
    state = continuity_solve(geom, coeffs, f)
    assert state.t == 1.0


# ---------------------------------------------------------------------------
# solves
# ---------------------------------------------------------------------------

def test_linear_problem_matches_closed_form():
    geom = geom1(64)
    coeffs = CoefficientSet(1, ())
    f = trig_polynomial((64,), 1.0, [{"amplitude": 0.3, "wave": (1,)}])
    state = continuity_solve(geom, coeffs, f)
    x = geom.axes()[0]
    expected = -(0.3 / PI2) * np.cos(2.0 * np.pi * x)
    expected -= expected.mean()
    assert np.max(np.abs(state.phi - expected)) <= 1e-9
    assert abs(state.slack) <= 1e-12
    assert state.stages[-1]["t"] == 1.0


def test_constant_background_path_is_exactly_trivial():
    geom = geom2(16)
    coeffs = CoefficientSet(2, (1.0,))
    ints = cohomology_integrals(geom, coeffs, np.zeros(geom.grid_shape))
    assert ints.c0 == 1.0
    assert ints.defect == 0.0
    state = continuity_solve(geom, coeffs, np.zeros(geom.grid_shape))
    assert np.all(state.phi == 0.0)
    assert state.slack == 0.0
    assert [s["t"] for s in state.stages] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert all(s["newton_iterations"] == 0 for s in state.stages)
    assert all(s["residual_sup"] == 0.0 for s in state.stages)


def test_manufactured_recovery_spectral():
    geom = geom2(32)
    coeffs = CoefficientSet(2, (1.0,))
    phi_star = two_mode(geom.grid_shape, 0.05)
    case = manufacture(geom, coeffs, phi_star)
    state = continuity_solve(geom, coeffs, case.f_grid)
    assert np.max(np.abs(state.phi - case.phi_star)) <= 1e-9
    assert abs(state.slack) <= 1e-8
    assert state.residual_sup <= 1e-10
    assert state.min_cone_margin > 0.0
    assert all(s["min_cone_margin"] > 0.0 for s in state.stages)


def test_manufactured_recovery_fd_second_order():
    coeffs = CoefficientSet(2, (1.0,))
    errs = []
    for nx in (16, 32, 64):
        geom = geom2(nx)
        phi_star = two_mode(geom.grid_shape, 0.02)
        case = manufacture(geom, coeffs, phi_star)  # exact discrete source
        state = continuity_solve(geom, coeffs, case.f_grid, scheme="fd")
        errs.append(np.max(np.abs(state.phi - case.phi_star)))
    assert 3.5 <= errs[0] / errs[1] <= 4.5
    assert 3.5 <= errs[1] / errs[2] <= 4.5


def test_newton_solve_rejects_bad_initial_states():
    geom = geom2(16)
    coeffs = CoefficientSet(2, (1.0,)).with_c0(1.0)
    f = np.zeros(geom.grid_shape)
    with pytest.raises(ConeBreachError):
        newton_solve(geom, coeffs, f, 0.5, phi0=two_mode(geom.grid_shape, 1.0))
    # positive eigenvalues but cone condition violated at the endpoint
    amp = 0.6 / PI2
    with pytest.raises(ConeBreachError):
        newton_solve(geom, coeffs, f, 1.0, phi0=two_mode(geom.grid_shape, amp))


def test_step_underflow_when_stages_keep_failing(monkeypatch):
    geom = geom2(16)
    coeffs = CoefficientSet(2, (1.0,))
    real = solver.newton_solve

    def flaky(geom_, coeffs_, f_, t, **kwargs):
        if t > 0.0:
            raise ConeBreachError("stage rejected")
        return real(geom_, coeffs_, f_, t, **kwargs)

    monkeypatch.setattr(solver, "newton_solve", flaky)
    with pytest.raises(StepUnderflowError):
        continuity_solve(geom, coeffs, np.zeros(geom.grid_shape))


def test_class_path_probe_reports_upward_closed_solvability():
    # class 0.45*[chi] sits below the cone threshold (load 0.5/0.45 > 1 at
    # t=1); scaling the class up past 0.5/0.45 - 1 makes the path reachable
    geom = geom2(16, np.eye(2), 0.45 * np.eye(2))
    coeffs = CoefficientSet(2, (1.0,))
    ints = cohomology_integrals(geom)
    f = np.full(geom.grid_shape, ints.c0 - ints.values[1])
    with pytest.warns(UserWarning):
        report = class_path_probe(geom, coeffs, f, [0.0, 0.05, 0.5])
    flags = [row["solvable"] for row in report.rows]
    assert flags == [False, False, True]
    assert report.rows[0]["error"] == "StepUnderflowError"
    assert report.rows[2]["min_cone_margin"] > 0.0
    assert report.upward_closed


def test_upward_closure_property_detects_violations():
    rows = (
        {"s": 0.0, "solvable": True},
        {"s": 1.0, "solvable": False},
    )
    assert not ClassPathReport(rows).upward_closed
