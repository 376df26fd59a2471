"""Continuity-method solver on flat tori.

Geometry: the torus [0,1)^n with two constant-coefficient positive
background forms given by SPD matrices chi (the reference) and omega0
(the unknown's class representative).  A periodic potential phi deforms
the class representative to

    Omega_phi(x) = omega0 + (1/4) Hess(phi)(x),

the 1/4 matching the complex-Hessian normalization of torus-invariant
data.  With lam(x) the generalized eigenvalues of Omega_phi against chi
and e_k elementary symmetric polynomials, the stage-t residual is

    r(x) = e_n(lam) - t [ sum_k c_k/C(n,k) e_k(lam) + f(x) ] - (1-t) c0 - slack.

The path starts at t = 0 (where phi = 0 solves the discrete problem
exactly, the backgrounds being constant) and marches to t = 1 with an
adaptive step, damped Newton corrections, and a scalar slack unknown that
absorbs the residual discrete incompatibility; the Newton system is
bordered with the mean-zero constraint on phi.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg

from .exceptions import (
    CompatibilityError,
    ConeBreachError,
    LinearSolveStallError,
    MaxIterationsError,
    StepUnderflowError,
)
from .kernel import CoefficientSet, source_floor

__all__ = [
    "TorusGeometry",
    "PotentialField",
    "trig_polynomial",
    "hessian_field",
    "potential_hessian",
    "eigenvalue_field",
    "residual",
    "ConeMarginReport",
    "cone_margin_field",
    "linearize",
    "SolveState",
    "newton_solve",
    "continuity_solve",
    "CohomologyIntegrals",
    "cohomology_integrals",
    "ManufacturedCase",
    "manufacture",
    "ClassPathReport",
    "class_path_probe",
]


def _check_spd(M, name):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name}: must be a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name}: non-finite entries")
    if not np.allclose(M, M.T, rtol=0, atol=1e-12):
        raise ValueError(f"{name}: must be symmetric")
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise ValueError(f"{name}: must be positive definite")
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class TorusGeometry:
    """Flat torus [0,1)^n with constant background matrices.

    grid_shape entries must be even and >= 8 (even sizes keep the real
    spectral derivatives well defined; 8 is the coarsest grid any scheme
    here is trusted on).
    """

    n: int
    grid_shape: tuple
    chi: np.ndarray
    omega0: np.ndarray

    def __post_init__(self):
        if not (1 <= self.n <= 3):
            raise ValueError("TorusGeometry: n must be 1, 2 or 3")
        shape = tuple(int(s) for s in self.grid_shape)
        if len(shape) != self.n:
            raise ValueError("TorusGeometry: grid_shape length must equal n")
        if any(s < 8 or s % 2 for s in shape):
            raise ValueError("TorusGeometry: grid sizes must be even and >= 8")
        object.__setattr__(self, "grid_shape", shape)
        chi = _check_spd(self.chi, "chi")
        omega0 = _check_spd(self.omega0, "omega0")
        if chi.shape[0] != self.n or omega0.shape[0] != self.n:
            raise ValueError("TorusGeometry: matrix size must equal n")
        object.__setattr__(self, "chi", chi)
        object.__setattr__(self, "omega0", omega0)

    @property
    def npoints(self):
        return int(np.prod(self.grid_shape))

    def axes(self):
        return tuple(
            np.arange(s, dtype=float) / s for s in self.grid_shape
        )

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def chol_inv(self):
        L = np.linalg.cholesky(self.chi)
        return np.linalg.inv(L)


def _canonical(values, shape=None):
    v = np.asarray(values, dtype=float)
    if shape is not None and v.shape != tuple(shape):
        raise ValueError("potential grid has wrong shape")
    if not np.all(np.isfinite(v)):
        raise ValueError("potential grid has non-finite values")
    return v - v.mean()


class PotentialField:
    """Mean-zero representative of a grid potential.

    Construction subtracts the grid mean, so two inputs differing by a
    constant map to the same representative; all solver entry points
    canonicalize the same way, making the residual gauge invariant.
    """

    def __init__(self, values):
        self.values = _canonical(values)
        if abs(self.values.mean()) > 1e-13:
            raise ValueError("PotentialField: mean-zero normalization failed")

    @property
    def shape(self):
        return self.values.shape


def _values_of(phi, geom):
    if isinstance(phi, PotentialField):
        return _canonical(phi.values, geom.grid_shape)
    return _canonical(phi, geom.grid_shape)


def trig_polynomial(grid_shape, constant=0.0, terms=()):
    """Sample  constant + sum_j amp_j cos(2 pi wave_j . x + phase_j)  on the grid."""
    shape = tuple(int(s) for s in grid_shape)
    mesh = np.meshgrid(*[np.arange(s) / s for s in shape], indexing="ij")
    out = np.full(shape, float(constant))
    for term in terms:
        amp = float(term["amplitude"])
        wave = tuple(int(w) for w in term["wave"])
        phase = float(term.get("phase", 0.0))
        if len(wave) != len(shape):
            raise ValueError("trig_polynomial: wave length must match dimension")
        arg = sum(w * x for w, x in zip(wave, mesh))
        out += amp * np.cos(2.0 * np.pi * arg + phase)
    return out


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def _freqs(shape):
    return [np.fft.fftfreq(s, d=1.0 / s) for s in shape]


def potential_hessian(geom, phi, scheme="spectral"):
    """Second derivative field of the potential, shape grid + (n, n)."""
    values = _values_of(phi, geom)
    n = geom.n
    shape = geom.grid_shape
    H = np.zeros(shape + (n, n))
    if scheme == "spectral":
        phat = np.fft.fftn(values)
        kk = np.meshgrid(*_freqs(shape), indexing="ij")
        for a in range(n):
            for b in range(a, n):
                mult = -((2.0 * np.pi) ** 2) * kk[a] * kk[b]
                dd = np.fft.ifftn(mult * phat).real
                H[..., a, b] = dd
                H[..., b, a] = dd
    elif scheme == "fd":
        # centered second-order stencils
        for a in range(n):
            h = 1.0 / shape[a]
            dd = (
                np.roll(values, -1, axis=a) - 2.0 * values + np.roll(values, 1, axis=a)
            ) / h**2
            H[..., a, a] = dd
        for a in range(n):
            for b in range(a + 1, n):
                ha, hb = 1.0 / shape[a], 1.0 / shape[b]
                pp = np.roll(np.roll(values, -1, axis=a), -1, axis=b)
                pm = np.roll(np.roll(values, -1, axis=a), 1, axis=b)
                mp = np.roll(np.roll(values, 1, axis=a), -1, axis=b)
                mm = np.roll(np.roll(values, 1, axis=a), 1, axis=b)
                dd = (pp - pm - mp + mm) / (4.0 * ha * hb)
                H[..., a, b] = dd
                H[..., b, a] = dd
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return H


def hessian_field(geom, phi, scheme="spectral"):
    """A(x) = chi^{-1} (omega0 + (1/4) Hess(phi)(x)), shape grid + (n, n)."""
    H = potential_hessian(geom, phi, scheme)
    omega = geom.omega0 + 0.25 * H
    chi_inv = np.linalg.inv(geom.chi)
    return np.einsum("ij,...jk->...ik", chi_inv, omega)


def _omega_field(geom, phi, scheme):
    return geom.omega0 + 0.25 * potential_hessian(geom, phi, scheme)


def _sym_eig(geom, omega, vectors=False):
    """Eigen-data of chi^{-1} omega via the symmetric reduction L^{-1} omega L^{-T}."""
    Linv = geom.chol_inv()
    M = np.einsum("ij,...jk,lk->...il", Linv, omega, Linv)
    M = 0.5 * (M + np.swapaxes(M, -1, -2))
    if vectors:
        return np.linalg.eigh(M)
    return np.linalg.eigvalsh(M)


def eigenvalue_field(geom, phi, scheme="spectral"):
    """Ascending generalized eigenvalues lam(x), shape grid + (n,)."""
    return _sym_eig(geom, _omega_field(geom, phi, scheme))


# ---------------------------------------------------------------------------
# batched symmetric polynomials
# ---------------------------------------------------------------------------

def _elem_sym_all(vals):
    """e_0..e_n of the last axis; output shape (..., n+1)."""
    n = vals.shape[-1]
    out = np.zeros(vals.shape[:-1] + (n + 1,))
    out[..., 0] = 1.0
    for idx in range(n):
        v = vals[..., idx]
        for k in range(idx + 1, 0, -1):
            out[..., k] += v * out[..., k - 1]
    return out


def _elem_sym_deleted_all(vals, e_all):
    """[..., i, m] = e_m with entry i deleted, m = 0..n-1.

    Uses e_{m; i} = e_m - v_i e_{m-1; i}; numerically benign since all
    quantities here are evaluated at positive entries.
    """
    n = vals.shape[-1]
    out = np.zeros(vals.shape[:-1] + (n, n))
    out[..., :, 0] = 1.0
    for m in range(1, n):
        out[..., :, m] = e_all[..., m][..., None] - vals * out[..., :, m - 1]
    return out


def _weights(n):
    return np.array([1.0 / math.comb(n, k) for k in range(n + 1)])


# ---------------------------------------------------------------------------
# residual / margin / linearization
# ---------------------------------------------------------------------------

def _positivity_or_none(geom, lam):
    """Index of the worst non-positive eigenvalue point, or None if positive."""
    lam_min = lam[..., 0]
    worst = np.unravel_index(np.argmin(lam_min), lam_min.shape)
    if lam_min[worst] <= 0.0:
        return worst
    return None


def _margin_field_from_lam(coeffs, t, lam):
    n = coeffs.n
    x = 1.0 / lam
    ex_all = _elem_sym_all(x)
    ex_del = _elem_sym_deleted_all(x, ex_all)
    load = np.zeros(lam.shape[:-1] + (n,))
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            load += t * ck * coeffs.weight(k) * ex_del[..., :, n - k]
    return 1.0 - load.max(axis=-1)


def _residual_from_lam(coeffs, t, f_grid, lam, slack):
    n = coeffs.n
    w = _weights(n)
    e_all = _elem_sym_all(lam)
    G = e_all[..., n].copy()
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            G -= t * ck * w[k] * e_all[..., k]
    c0 = coeffs.c0 if coeffs.c0 is not None else 0.0
    if t < 1.0 and coeffs.c0 is None:
        raise ValueError("residual: c0 required for t < 1 (attach via with_c0)")
    return G - t * f_grid - (1.0 - t) * c0 - slack


def _check_f_grid(geom, f_grid):
    f = np.asarray(f_grid, dtype=float)
    if f.shape != geom.grid_shape:
        raise ValueError("f grid has wrong shape")
    if not np.all(np.isfinite(f)):
        raise ValueError("f grid has non-finite values")
    return f


def residual(geom, coeffs, f_grid, t, phi, slack=0.0, scheme="spectral"):
    """Stage-t pointwise residual; raises ConeBreachError off the positive cone."""
    f = _check_f_grid(geom, f_grid)
    lam = eigenvalue_field(geom, phi, scheme)
    worst = _positivity_or_none(geom, lam)
    if worst is not None:
        raise ConeBreachError(
            "residual: deformed form lost positivity",
            worst_point=worst,
            value=float(lam[..., 0][worst]),
        )
    return _residual_from_lam(coeffs, t, f, lam, slack)


@dataclass(frozen=True)
class ConeMarginReport:
    min_margin: float
    argmin: tuple
    field: np.ndarray


def cone_margin_field(geom, coeffs, t, phi, scheme="spectral"):
    """Per-point cone margins 1 - max_i load_i for the stage-t loads.

    Returns the global minimum, the grid point attaining it, and the full
    margin field.
    """
    lam = eigenvalue_field(geom, phi, scheme)
    worst = _positivity_or_none(geom, lam)
    if worst is not None:
        raise ConeBreachError(
            "cone_margin_field: deformed form lost positivity",
            worst_point=worst,
            value=float(lam[..., 0][worst]),
        )
    margins = _margin_field_from_lam(coeffs, t, lam)
    argmin = np.unravel_index(np.argmin(margins), margins.shape)
    return ConeMarginReport(float(margins[argmin]), tuple(int(i) for i in argmin), margins)


class LinearizedResidual:
    """Frozen-coefficient derivative of the residual at an iterate.

    apply(psi) evaluates  (1/4) sum_ab Q_ab(x) (Hess psi)_ab(x)  where Q is
    the matrix derivative of the symmetric-function term; the derivative
    with respect to the slack unknown is the constant -1.
    """

    slack_direction = -1.0

    def __init__(self, geom, q_field, scheme):
        self.geom = geom
        self.q_field = q_field
        self.scheme = scheme

    def apply(self, psi):
        H = potential_hessian(self.geom, np.asarray(psi, dtype=float), self.scheme)
        return 0.25 * np.einsum("...ab,...ab->...", self.q_field, H)

    def mean_symbol(self):
        """Fourier symbol magnitude m(k) of the averaged-coefficient operator."""
        geom = self.geom
        qbar = self.q_field.reshape(-1, geom.n, geom.n).mean(axis=0)
        kk = np.meshgrid(*_freqs(geom.grid_shape), indexing="ij")
        m = np.zeros(geom.grid_shape)
        if self.scheme == "spectral":
            for a in range(geom.n):
                for b in range(geom.n):
                    m += qbar[a, b] * (2.0 * np.pi) ** 2 * kk[a] * kk[b]
        else:
            # exact symbol of the centered stencils; positive away from k=0
            shape = geom.grid_shape
            s = [np.sin(2.0 * np.pi * kk[a] / shape[a]) * shape[a] for a in range(geom.n)]
            for a in range(geom.n):
                ha = 1.0 / shape[a]
                m += qbar[a, a] * (4.0 / ha**2) * np.sin(np.pi * kk[a] * ha) ** 2
                for b in range(geom.n):
                    if b != a:
                        m += qbar[a, b] * s[a] * s[b]
        return 0.25 * m


def linearize(geom, coeffs, f_grid, t, phi, slack=0.0, scheme="spectral"):
    """Exact derivative of `residual` in (phi, slack) at the given iterate."""
    _check_f_grid(geom, f_grid)
    omega = _omega_field(geom, phi, scheme)
    lam, vec = _sym_eig(geom, omega, vectors=True)
    worst = _positivity_or_none(geom, lam)
    if worst is not None:
        raise ConeBreachError(
            "linearize: deformed form lost positivity",
            worst_point=worst,
            value=float(lam[..., 0][worst]),
        )
    n = geom.n
    w = _weights(n)
    e_all = _elem_sym_all(lam)
    e_del = _elem_sym_deleted_all(lam, e_all)
    g = e_del[..., :, n - 1].copy()
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            g -= t * ck * w[k] * e_del[..., :, k - 1]
    Linv = geom.chol_inv()
    middle = np.einsum("...ak,...k,...bk->...ab", vec, g, vec)
    q_field = np.einsum("ca,...cd,db->...ab", Linv, middle, Linv)
    return LinearizedResidual(geom, q_field, scheme)


# ---------------------------------------------------------------------------
# Newton with bordered mean-zero/slack system
# ---------------------------------------------------------------------------

def _gmres(op, rhs, M, rtol, restart, maxiter):
    try:
        sol, info = scipy.sparse.linalg.gmres(
            op, rhs, M=M, rtol=rtol, atol=0.0, restart=restart, maxiter=maxiter
        )
    except TypeError:  # older scipy spells the tolerance "tol"
        sol, info = scipy.sparse.linalg.gmres(
            op, rhs, M=M, tol=rtol, atol=0.0, restart=restart, maxiter=maxiter
        )
    return sol, info


def _newton_step(geom, lin, res):
    """Solve the bordered system J (dphi, ds) = (-res, 0), mean(dphi) = 0."""
    N = geom.npoints
    shape = geom.grid_shape

    def matvec(u):
        psi = u[:N].reshape(shape)
        ds = u[N]
        out_field = lin.apply(psi) + lin.slack_direction * ds
        return np.concatenate([out_field.ravel(), [psi.mean()]])

    symbol = lin.mean_symbol()
    flat_symbol = symbol.ravel()
    if np.any(flat_symbol[1:] <= 0):
        raise LinearSolveStallError(
            "preconditioner symbol lost positivity (averaged coefficients not elliptic)"
        )

    def precond(v):
        rho = v[:N].reshape(shape)
        beta = v[N]
        rho_mean = rho.mean()
        rho_hat = np.fft.fftn(rho - rho_mean)
        with np.errstate(divide="ignore", invalid="ignore"):
            psi_hat = np.where(symbol > 0, rho_hat / (-symbol), 0.0)
        psi_hat.flat[0] = beta * N
        psi = np.fft.ifftn(psi_hat).real
        return np.concatenate([psi.ravel(), [-rho_mean]])

    op = scipy.sparse.linalg.LinearOperator((N + 1, N + 1), matvec=matvec)
    pre = scipy.sparse.linalg.LinearOperator((N + 1, N + 1), matvec=precond)
    rhs = np.concatenate([(-res).ravel(), [0.0]])
    sol, info = _gmres(op, rhs, pre, rtol=1e-12, restart=64, maxiter=40)
    if info != 0:
        raise LinearSolveStallError(f"inner GMRES did not converge (info={info})")
    dphi = sol[:N].reshape(shape)
    dphi = dphi - dphi.mean()
    return dphi, float(sol[N])


@dataclass
class SolveState:
    phi: np.ndarray
    t: float
    slack: float
    residual_sup: float
    min_cone_margin: float
    newton_trace: list
    stages: list = field(default_factory=list)


def _diagnostics(geom, coeffs, f, t, phi, slack, scheme):
    """(residual, margin field) or (None, breach point) without raising."""
    lam = eigenvalue_field(geom, phi, scheme)
    worst = _positivity_or_none(geom, lam)
    if worst is not None:
        return None, None
    res = _residual_from_lam(coeffs, t, f, lam, slack)
    margin = _margin_field_from_lam(coeffs, t, lam)
    return res, margin


def newton_solve(
    geom,
    coeffs,
    f_grid,
    t,
    phi0=None,
    slack0=0.0,
    tol=1e-10,
    max_iter=50,
    scheme="spectral",
):
    """Damped Newton for the stage-t equation with slack and mean-zero phi.

    Step acceptance needs a residual decrease *and* a strictly positive
    cone margin at every grid point; the damping factor halves down to
    2**-20 before the step is declared inadmissible.
    """
    f = _check_f_grid(geom, f_grid)
    phi = (
        np.zeros(geom.grid_shape) if phi0 is None else _values_of(phi0, geom)
    )
    slack = float(slack0)
    res, margin = _diagnostics(geom, coeffs, f, t, phi, slack, scheme)
    if res is None:
        raise ConeBreachError("newton_solve: initial state off the positive cone")
    if margin.min() <= 0.0:
        raise ConeBreachError(
            "newton_solve: initial state violates the cone condition",
            value=float(margin.min()),
        )
    trace = []
    res_sup = float(np.abs(res).max())
    for it in range(max_iter):
        if res_sup <= tol:
            return SolveState(phi, t, slack, res_sup, float(margin.min()), trace)
        lin = linearize(geom, coeffs, f, t, phi, slack, scheme)
        dphi, ds = _newton_step(geom, lin, res)
        alpha = 1.0
        accepted = False
        cone_rejections = 0
        attempts = 0
        while alpha >= 2.0**-20:
            attempts += 1
            phi_try = _canonical(phi + alpha * dphi)
            slack_try = slack + alpha * ds
            res_try, margin_try = _diagnostics(
                geom, coeffs, f, t, phi_try, slack_try, scheme
            )
            if res_try is None or margin_try.min() <= 0.0:
                cone_rejections += 1
                alpha *= 0.5
                continue
            res_try_sup = float(np.abs(res_try).max())
            if res_try_sup <= (1.0 - 1e-4 * alpha) * res_sup:
                phi, slack = phi_try, slack_try
                res, margin, res_sup = res_try, margin_try, res_try_sup
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            if cone_rejections == attempts:
                raise ConeBreachError(
                    "newton_solve: no admissible damping preserves the cone condition"
                )
            raise MaxIterationsError(
                "newton_solve: line search failed to reduce the residual"
            )
        trace.append(
            {"iteration": it, "residual_sup": res_sup, "step_factor": alpha}
        )
    if res_sup <= tol:
        return SolveState(phi, t, slack, res_sup, float(margin.min()), trace)
    raise MaxIterationsError(
        f"newton_solve: residual {res_sup:.3e} above tol {tol:.1e} after {max_iter} iterations"
    )


# ---------------------------------------------------------------------------
# class integrals, compatibility, manufacturing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CohomologyIntegrals:
    values: tuple  # values[k] = integral of the k-th mixed power, chi-normalized
    c0: float
    defect: float | None


def cohomology_integrals(geom, coeffs=None, f_grid=None):
    """Mixed class integrals value_k = S_k(lam0) / C(n,k) of the flat data.

    lam0 are the generalized eigenvalues of omega0 against chi; value_n is
    the constant c0 fixed at the start of the continuity path.  When the
    coefficient set and source grid are supplied, the compatibility defect
      value_n - sum_k c_k value_k - mean(f)
    is reported as well (zero in the continuum; the grid mean of f stands
    in for its chi-normalized integral since chi is constant).
    """
    lam0 = np.linalg.eigvalsh(
        geom.chol_inv() @ geom.omega0 @ geom.chol_inv().T
    )
    n = geom.n
    e_all = _elem_sym_all(lam0)
    w = _weights(n)
    values = tuple(float(w[k] * e_all[k]) for k in range(n + 1))
    c0 = values[n]
    defect = None
    if coeffs is not None and f_grid is not None:
        f = _check_f_grid(geom, f_grid)
        acc = c0
        for k in range(1, n):
            acc -= coeffs.c[k - 1] * values[k]
        defect = float(acc - f.mean())
    return CohomologyIntegrals(values, c0, defect)


@dataclass(frozen=True)
class ManufacturedCase:
    phi_star: np.ndarray
    f_grid: np.ndarray


def manufacture(geom, coeffs, phi_star, scheme="spectral"):
    """Source grid for which phi_star solves the endpoint equation exactly:

        f := e_n(lam*) - sum_k c_k/C(n,k) e_k(lam*)

    evaluated with the same discrete operators used by the solver, so the
    endpoint residual of phi_star vanishes identically.
    """
    phi = _values_of(phi_star, geom)
    lam = eigenvalue_field(geom, phi, scheme)
    worst = _positivity_or_none(geom, lam)
    if worst is not None:
        raise ConeBreachError(
            "manufacture: phi_star leaves the positive cone", worst_point=worst
        )
    n = geom.n
    w = _weights(n)
    e_all = _elem_sym_all(lam)
    f = e_all[..., n].copy()
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            f -= ck * w[k] * e_all[..., k]
    return ManufacturedCase(phi, f)


# ---------------------------------------------------------------------------
# continuity path
# ---------------------------------------------------------------------------

def _validate_source_regime(coeffs, f, class_ratio):
    """Regime checks with a 1e-10 warning band.

    With all c_k = 0 a positive source is necessary for pointwise
    solvability, so a violation is fatal.  With some c_k > 0 the floor
    from `source_floor` is only the bound under which existence is
    guaranteed; sources below it (manufactured instances routinely are)
    get a warning and the path is attempted anyway, failing honestly if
    it actually breaks.
    """
    fmin = float(f.min())
    fmean = float(f.mean())
    if coeffs.regime == "AllZeroPositiveF":
        if fmin <= 0.0:
            raise ValueError(
                "continuity_solve: with all c_k = 0 the source must be positive"
            )
        if fmin <= 1e-10:
            warnings.warn("source minimum within 1e-10 of the positivity bound")
    else:
        floor = source_floor(coeffs, class_ratio).floor
        if fmin <= floor:
            warnings.warn(
                f"source minimum {fmin:.3e} is below the guaranteed floor "
                f"{floor:.3e}; existence is not covered, attempting the path anyway"
            )
        elif fmin <= floor + 1e-10:
            warnings.warn("source minimum within 1e-10 of its guaranteed floor")
        if fmean < -1e-10:
            warnings.warn(
                f"source integral {fmean:.3e} is negative; outside the guaranteed regime"
            )
        elif fmean < 0.0:
            warnings.warn("source integral within 1e-10 below zero")


def continuity_solve(
    geom,
    coeffs,
    f_grid,
    tol=1e-10,
    max_iter=50,
    scheme="spectral",
    dt_init=0.25,
    dt_min=1e-4,
    compat_tol=1e-8,
):
    """March the interpolation parameter from 0 to 1.

    The constant c0 comes from the class integrals; the discrete
    compatibility defect must not exceed compat_tol.  Step control: start
    at dt_init, halve on a failed stage, double after two consecutive
    successes, abort below dt_min.
    """
    f = _check_f_grid(geom, f_grid)
    integrals = cohomology_integrals(geom, coeffs, f)
    if abs(integrals.defect) > compat_tol:
        raise CompatibilityError(
            f"compatibility defect {integrals.defect:.3e} exceeds {compat_tol:.1e}",
            defect=integrals.defect,
        )
    coeffs = coeffs.with_c0(integrals.c0)
    _validate_source_regime(coeffs, f, integrals.c0)

    def stage_record(t_val, st):
        return {
            "t": t_val,
            "residual_sup": st.residual_sup,
            "min_cone_margin": st.min_cone_margin,
            "slack": st.slack,
            "newton_iterations": len(st.newton_trace),
        }

    state = newton_solve(
        geom, coeffs, f, 0.0, phi0=None, slack0=0.0, tol=tol,
        max_iter=max_iter, scheme=scheme,
    )
    stages = [stage_record(0.0, state)]
    t = 0.0
    dt = dt_init
    streak = 0
    while t < 1.0:
        t_try = min(t + dt, 1.0)
        try:
            trial = newton_solve(
                geom, coeffs, f, t_try, phi0=state.phi, slack0=state.slack,
                tol=tol, max_iter=max_iter, scheme=scheme,
            )
        except (ConeBreachError, MaxIterationsError, LinearSolveStallError):
            dt *= 0.5
            streak = 0
            if dt < dt_min:
                raise StepUnderflowError(
                    f"continuity_solve: step underflow at t = {t:.6f}"
                )
            continue
        state = trial
        t = t_try
        stages.append(stage_record(t, state))
        streak += 1
        if streak >= 2:
            dt = min(2.0 * dt, dt_init)
            streak = 0
    state.stages = stages
    return state


# ---------------------------------------------------------------------------
# class-path probe
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassPathReport:
    rows: tuple  # dicts with keys s, shift, solvable, min_cone_margin, residual_sup, error

    @property
    def upward_closed(self):
        """Solvable set is upward closed in s."""
        solvable_seen = False
        for row in sorted(self.rows, key=lambda r: r["s"]):
            if row["solvable"]:
                solvable_seen = True
            elif solvable_seen:
                return False
        return True


def class_path_probe(geom, coeffs, f_grid, s_list, tol=1e-10, scheme="spectral"):
    """Scale the unknown's class by (1+s) and retry the solve for each s.

    For each scale the additive constant a_s is recomputed from the class
    integrals so the scaled instance is exactly compatible; the source
    becomes f + a_s and the full continuity path is attempted.
    """
    f = _check_f_grid(geom, f_grid)
    rows = []
    for s in sorted(float(s) for s in s_list):
        if s <= -1.0:
            raise ValueError("class_path_probe: scale 1+s must stay positive")
        geom_s = TorusGeometry(
            geom.n, geom.grid_shape, geom.chi, (1.0 + s) * geom.omega0
        )
        ints = cohomology_integrals(geom_s, coeffs, f)
        a_s = ints.defect  # shift that restores exact compatibility
        f_s = f + a_s
        row = {"s": s, "shift": float(a_s)}
        try:
            state = continuity_solve(geom_s, coeffs, f_s, tol=tol, scheme=scheme)
            row.update(
                solvable=True,
                min_cone_margin=state.min_cone_margin,
                residual_sup=state.residual_sup,
                error=None,
            )
        except (ConeBreachError, MaxIterationsError, LinearSolveStallError,
                StepUnderflowError, ValueError) as exc:
            row.update(
                solvable=False,
                min_cone_margin=None,
                residual_sup=None,
                error=type(exc).__name__,
            )
        rows.append(row)
    return ClassPathReport(tuple(rows))
