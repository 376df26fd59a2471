"""Pointwise eigenvalue algebra for the generalised equation.

Throughout, ``lam`` is a vector of positive eigenvalues of a background
metric contraction and ``sigma_m`` denotes the elementary symmetric
polynomial S_m evaluated at the *reciprocal* eigenvalues 1/lam.  The
solvability bookkeeping at a point reduces to scalar functions of lam:

    value     V(t, f) = sum_k t c_k / C(n,k) * sigma_{n-k} + (t f + (1-t) c0) * sigma_n
    load_i    L_i(t)  = sum_k t c_k / C(n,k) * S_{n-k; i}(1/lam)

The cone condition at the point is  max_i L_i < 1,  and V == 1 encodes a
solved state of the interpolated equation at parameter t.

All scalar routines here are written for clarity and exactness, not
throughput; grid-sized batches live in :mod:`gma.solver`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "elem_sym",
    "elem_sym_deleted",
    "maclaurin_chain",
    "CoefficientSet",
    "EigenProfile",
    "ConeReport",
    "cone_margin",
    "operator_value",
    "operator_gradient",
    "euler_weighted_sum",
    "subset_avoidance_matrix",
    "min_avoidance_eigenvalue",
    "SourceFloorBudget",
    "source_floor",
    "RestrictedCoefficients",
    "restricted_coefficients",
    "wedge_density_oracle",
    "binomial_product_identity",
    "restriction_identity",
    "sample_cone_profiles",
]


# ---------------------------------------------------------------------------
# elementary symmetric polynomials
# ---------------------------------------------------------------------------

def elem_sym(values, k):
    """S_k(values): sum over k-element subsets of the entry products.

    Computed straight from the definition (subset enumeration) so it can
    serve as ground truth for the recurrence- and convolution-based paths
    used elsewhere.  S_0 = 1, S_k = 0 for k > len(values) or k < 0.
    """
    vals = [float(v) for v in np.atleast_1d(np.asarray(values, dtype=float))]
    if not np.all(np.isfinite(vals)):
        raise ValueError("elem_sym: non-finite entries")
    if k < 0 or k > len(vals):
        return 0.0
    if k == 0:
        return 1.0
    return float(sum(math.prod(c) for c in itertools.combinations(vals, k)))


def elem_sym_deleted(values, k, i, j=None):
    """S_{k; i}(values) or S_{k; i, j}: delete one or two indices first.

    The double deletion with i == j is 0 by convention (a repeated index
    cannot appear in a square-free monomial).
    """
    vals = list(np.atleast_1d(np.asarray(values, dtype=float)))
    n = len(vals)
    if not (0 <= i < n):
        raise ValueError("elem_sym_deleted: index out of range")
    drop = {i}
    if j is not None:
        if not (0 <= j < n):
            raise ValueError("elem_sym_deleted: index out of range")
        if j == i:
            return 0.0
        drop.add(j)
    rest = [v for idx, v in enumerate(vals) if idx not in drop]
    return elem_sym(rest, k)


def maclaurin_chain(values):
    """Normalized means m_k = (S_k / C(n,k))**(1/k), k = 1..n.

    For positive entries the chain is non-increasing; equality holds only
    on the diagonal.  Raises on non-positive input.
    """
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("maclaurin_chain: need a non-empty vector")
    if np.any(vals <= 0):
        raise ValueError("maclaurin_chain: entries must be positive")
    n = vals.size
    return tuple(
        (elem_sym(vals, k) / math.comb(n, k)) ** (1.0 / k) for k in range(1, n + 1)
    )


# ---------------------------------------------------------------------------
# coefficient / eigenvalue containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoefficientSet:
    """Dimension n plus the lower-order coefficients c_1..c_{n-1} (>= 0).

    regime:
      "AllZeroPositiveF"  all c_k vanish; the source term must be positive.
      "PositiveSum"       some c_k > 0.
    zeta is the largest index with c_zeta > 0 (None in the first regime).
    c0 is the constant fixed by the class integrals at the start of the
    continuity path; it may be attached later via `with_c0`.
    f_integral_sign, when supplied, records the sign of the source-term
    integral used for regime validation.
    """

    n: int
    c: tuple = ()
    c0: float | None = None
    f_integral_sign: float | None = None
    zeta: int | None = field(init=False, default=None)
    regime: str = field(init=False, default="AllZeroPositiveF")

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("CoefficientSet: n >= 1 required")
        c = tuple(float(x) for x in self.c)
        if len(c) != self.n - 1:
            raise ValueError(
                "CoefficientSet: need exactly n-1 coefficients c_1..c_{n-1}"
            )
        if any(not math.isfinite(x) or x < 0 for x in c):
            raise ValueError("CoefficientSet: coefficients must be finite and >= 0")
        object.__setattr__(self, "c", c)
        nz = [k for k in range(1, self.n) if c[k - 1] > 0]
        object.__setattr__(self, "zeta", nz[-1] if nz else None)
        object.__setattr__(
            self, "regime", "PositiveSum" if nz else "AllZeroPositiveF"
        )
        if self.f_integral_sign is not None:
            if self.regime == "AllZeroPositiveF" and self.f_integral_sign <= 0:
                raise ValueError(
                    "CoefficientSet: with all c_k = 0 the source integral must be positive"
                )
            if self.regime == "PositiveSum" and self.f_integral_sign < 0:
                raise ValueError(
                    "CoefficientSet: source integral must be >= 0 in PositiveSum regime"
                )

    def with_c0(self, c0):
        return CoefficientSet(self.n, self.c, float(c0), self.f_integral_sign)

    def weight(self, k):
        """1 / C(n, k), the normalization attached to c_k."""
        return 1.0 / math.comb(self.n, k)


@dataclass(frozen=True)
class EigenProfile:
    """Ascending positive eigenvalue vector."""

    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0:
            raise ValueError("EigenProfile: empty")
        if any(not math.isfinite(v) or v <= 0 for v in vals):
            raise ValueError("EigenProfile: entries must be finite and positive")
        if any(vals[i] > vals[i + 1] for i in range(len(vals) - 1)):
            raise ValueError("EigenProfile: entries must be ascending")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_values(cls, values):
        return cls(tuple(sorted(float(v) for v in np.atleast_1d(values))))


def _as_profile(coeffs, lam):
    prof = lam if isinstance(lam, EigenProfile) else EigenProfile.from_values(lam)
    if len(prof.values) != coeffs.n:
        raise ValueError("eigenvalue vector length does not match n")
    return prof


# ---------------------------------------------------------------------------
# cone condition, operator value, gradient
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConeReport:
    per_index_load: tuple
    margin: float
    satisfied: bool


def cone_margin(coeffs, t, lam):
    """Per-index loads L_i and the margin 1 - max_i L_i at scale t.

    L_i = sum_k t c_k / C(n,k) * S_{n-k; i}(1/lam).  margin > 0 is the
    pointwise cone condition for the t-interpolated equation.
    """
    prof = _as_profile(coeffs, lam)
    if not (0.0 <= t <= 1.0):
        raise ValueError("cone_margin: t must lie in [0, 1]")
    n = coeffs.n
    x = [1.0 / v for v in prof.values]
    loads = []
    for i in range(n):
        li = 0.0
        for k in range(1, n):
            ck = coeffs.c[k - 1]
            if ck:
                li += t * ck * coeffs.weight(k) * elem_sym_deleted(x, n - k, i)
        loads.append(li)
    margin = 1.0 - max(loads)
    return ConeReport(tuple(loads), margin, margin > 0.0)


def _require_c0(coeffs, t):
    if t < 1.0 and coeffs.c0 is None:
        raise ValueError("c0 is required for t < 1 (attach via with_c0)")
    return 0.0 if coeffs.c0 is None else coeffs.c0


def operator_value(coeffs, t, f_at_point, lam):
    """V(t, f) = sum_k t c_k/C(n,k) sigma_{n-k} + (t f + (1-t) c0) sigma_n.

    V == 1 encodes the solved state of the t-interpolated equation at the
    point; the admissible region is where the cone condition holds.
    """
    prof = _as_profile(coeffs, lam)
    c0 = _require_c0(coeffs, t)
    n = coeffs.n
    x = [1.0 / v for v in prof.values]
    val = 0.0
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            val += t * ck * coeffs.weight(k) * elem_sym(x, n - k)
    val += (t * f_at_point + (1.0 - t) * c0) * elem_sym(x, n)
    return val


def operator_gradient(coeffs, t, f_at_point, lam):
    """dV/dlam as a tuple.

    Closed form of the eigenvalue derivative:
      -dV/dlam_i = (1/lam_i) [ sum_k t c_k/C(n,k) (1/lam_i) S_{n-k-1; i}(1/lam)
                               + (t f + (1-t) c0) sigma_n ].
    On the cone region (with the source bounded below by the floor) every
    component is negative.
    """
    prof = _as_profile(coeffs, lam)
    c0 = _require_c0(coeffs, t)
    n = coeffs.n
    x = [1.0 / v for v in prof.values]
    sig_n = elem_sym(x, n)
    grad = []
    for i, li in enumerate(prof.values):
        inner = 0.0
        for k in range(1, n):
            ck = coeffs.c[k - 1]
            if ck:
                inner += (
                    t * ck * coeffs.weight(k) / li * elem_sym_deleted(x, n - k - 1, i)
                )
        inner += (t * f_at_point + (1.0 - t) * c0) * sig_n
        grad.append(-inner / li)
    return tuple(grad)


def euler_weighted_sum(coeffs, t, f_at_point, lam):
    """sum_i (-lam_i dV/dlam_i), via the closed form

      sum_k t (n-k) c_k/C(n,k) sigma_{n-k} + n (t f + (1-t) c0) sigma_n.

    Matches the direct gradient contraction to machine precision; used as
    a cross-check of `operator_gradient`.
    """
    prof = _as_profile(coeffs, lam)
    c0 = _require_c0(coeffs, t)
    n = coeffs.n
    x = [1.0 / v for v in prof.values]
    total = 0.0
    for k in range(1, n):
        ck = coeffs.c[k - 1]
        if ck:
            total += t * (n - k) * ck * coeffs.weight(k) * elem_sym(x, n - k)
    total += n * (t * f_at_point + (1.0 - t) * c0) * elem_sym(x, n)
    return total


# ---------------------------------------------------------------------------
# source-term floor
# ---------------------------------------------------------------------------

def subset_avoidance_matrix(n, zeta):
    """Sum over all zeta-subsets I of {0..n-1} of the 0/1 matrix E_I with
    (E_I)_{ij} = 1 iff neither i nor j lies in I.  Built by enumeration."""
    if not (1 <= zeta <= n - 1):
        raise ValueError("subset_avoidance_matrix: need 1 <= zeta <= n-1")
    M = np.zeros((n, n))
    for subset in itertools.combinations(range(n), zeta):
        mask = np.ones(n, dtype=bool)
        mask[list(subset)] = False
        M += np.outer(mask, mask)
    return M


def min_avoidance_eigenvalue(n, zeta):
    """Smallest eigenvalue of `subset_avoidance_matrix(n, zeta)`."""
    return float(np.linalg.eigvalsh(subset_avoidance_matrix(n, zeta))[0])


@dataclass(frozen=True)
class SourceFloorBudget:
    term_garding: float
    term_quadratic: float
    term_power: float
    term_class_ratio: float
    term_k: float
    k_constant: float
    floor: float

    def terms(self):
        return (
            self.term_garding,
            self.term_quadratic,
            self.term_power,
            self.term_class_ratio,
            self.term_k,
        )


def source_floor(coeffs, class_ratio, k_safety=0.99):
    """Negative lower bound for the source term: floor = -min(five terms).

    The five budget terms, with zeta the top nonzero coefficient index and
    K = k_safety * (smallest avoidance-matrix eigenvalue):

      garding      (1/16n) (zeta c_zeta / 2n)^{zeta/(n-zeta)} * c_zeta (n-zeta) / 2n
      quadratic    zeta c_zeta^2 / 4n
      power        c_zeta^{n/(n-zeta)} / 4n
      class ratio  class_ratio / 4
      K            (K/2n) (c_zeta / (2 C(n,zeta)))^{n/(n-zeta)}

    class_ratio is the top-power class integral of the unknown form divided
    by that of the reference form.  Only meaningful in the PositiveSum
    regime; with all c_k = 0 any positive source is admissible and the
    floor is 0.
    """
    if class_ratio <= 0:
        raise ValueError("source_floor: class_ratio must be positive")
    if coeffs.regime == "AllZeroPositiveF":
        return SourceFloorBudget(
            math.inf, math.inf, math.inf, class_ratio / 4.0, math.inf, 0.0, 0.0
        )
    n = coeffs.n
    zeta = coeffs.zeta
    cz = coeffs.c[zeta - 1]
    expo = n / (n - zeta)
    K = k_safety * min_avoidance_eigenvalue(n, zeta)
    term_garding = (
        (1.0 / (16.0 * n))
        * (zeta * cz / (2.0 * n)) ** (zeta / (n - zeta))
        * (cz * (n - zeta) / (2.0 * n))
    )
    term_quadratic = zeta * cz**2 / (4.0 * n)
    term_power = cz**expo / (4.0 * n)
    term_class_ratio = class_ratio / 4.0
    term_k = (K / (2.0 * n)) * (cz / (2.0 * math.comb(n, zeta))) ** expo
    floor = -min(term_garding, term_quadratic, term_power, term_class_ratio, term_k)
    return SourceFloorBudget(
        term_garding, term_quadratic, term_power, term_class_ratio, term_k, K, floor
    )


# ---------------------------------------------------------------------------
# restriction to submanifolds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RestrictedCoefficients:
    m: int
    b: tuple


def restricted_coefficients(coeffs, m):
    """Coefficients b_0..b_{m-1} of the induced m-dimensional equation:

        b_j = c_{j+n-m} * C(j+n-m, n-m) / C(n, m),  j = 0..m-1.

    Indices j + n - m outside 1..n-1 contribute 0 (there is no c_0 or c_n
    in the coefficient vector; the top coefficient is handled separately
    on the restricted equation).
    """
    n = coeffs.n
    if not (1 <= m <= n - 1):
        raise ValueError("restricted_coefficients: need 1 <= m <= n-1")
    b = []
    for j in range(m):
        src = j + n - m
        if 1 <= src <= n - 1:
            b.append(coeffs.c[src - 1] * math.comb(src, n - m) / math.comb(n, m))
        else:
            b.append(0.0)
    return RestrictedCoefficients(m, tuple(b))


# ---------------------------------------------------------------------------
# mixed-determinant density oracle
# ---------------------------------------------------------------------------

def _perm_det(M):
    # permutation expansion; n <= 4 keeps this cheap
    n = M.shape[0]
    total = 0.0
    for perm in itertools.permutations(range(n)):
        inv = sum(
            1 for a in range(n) for b in range(a + 1, n) if perm[a] > perm[b]
        )
        sign = -1.0 if inv % 2 else 1.0
        total += sign * math.prod(M[r, perm[r]] for r in range(n))
    return total


def wedge_density_oracle(A, X, k):
    """Density of the degree-k mixed power of two positive forms against
    the full power of the second: k!(n-k)!/n! * (mixed determinant) / det X.

    The mixed determinant is expanded column-by-column over all ways of
    taking k columns from A and n-k from X, each determinant evaluated by
    full permutation expansion.  Every route through eigenvalues must agree
    with this; the combinatorial path is the oracle.  Guarded to n <= 4.
    """
    A = np.asarray(A, dtype=float)
    X = np.asarray(X, dtype=float)
    if A.shape != X.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("wedge_density_oracle: A and X must be square, same shape")
    n = A.shape[0]
    if n > 4:
        raise ValueError("wedge_density_oracle: permutation expansion limited to n <= 4")
    if not (0 <= k <= n):
        raise ValueError("wedge_density_oracle: need 0 <= k <= n")
    if np.linalg.eigvalsh(0.5 * (X + X.T))[0] <= 0:
        raise ValueError("wedge_density_oracle: X must be positive definite")
    det_x = _perm_det(X)
    mixed = 0.0
    for cols in itertools.combinations(range(n), k):
        M = X.copy()
        M[:, list(cols)] = A[:, list(cols)]
        mixed += _perm_det(M)
    return math.factorial(k) * math.factorial(n - k) / math.factorial(n) * mixed / det_x


# ---------------------------------------------------------------------------
# exact binomial identities used by the restriction bookkeeping
# ---------------------------------------------------------------------------

def binomial_product_identity(n, l, p, q):
    """Return (lhs, rhs) of C(n,q) C(l,p) C(l-p, l-q) = C(n,p) C(n-p, n-q) C(l,q).

    Exact integers; the caller asserts equality.
    """
    lhs = math.comb(n, q) * math.comb(l, p) * math.comb(l - p, l - q)
    rhs = math.comb(n, p) * math.comb(n - p, n - q) * math.comb(l, q)
    return lhs, rhs


def restriction_identity(n, m, j, p):
    """Return integer pair (lhs_num * rhs_den, rhs_num * lhs_den) for

        b_j C(j,p) / C(m,p)  ==  c_k C(k, p+n-m) / C(n, p+n-m),  k = j+n-m,

    with the coefficient c_k divided out (both sides are c_k times a
    rational; the returned pair cross-multiplies the rationals so equality
    is an exact integer check).
    """
    k = j + n - m
    if not (0 <= p <= j < m < n and 1 <= k <= n - 1):
        raise ValueError("restriction_identity: index ranges violated")
    # lhs rational: C(k, n-m)/C(n,m) * C(j,p)/C(m,p)
    lhs_num = math.comb(k, n - m) * math.comb(j, p)
    lhs_den = math.comb(n, m) * math.comb(m, p)
    rhs_num = math.comb(k, p + n - m)
    rhs_den = math.comb(n, p + n - m)
    return lhs_num * rhs_den, rhs_num * lhs_den


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

def sample_cone_profiles(rng, coeffs, t, count, low=1e-2, high=1e2, max_tries=200000):
    """Rejection-sample `count` eigenvalue profiles inside the cone region.

    Entries are log-uniform in [low, high]; a draw is kept when the margin
    at scale t is strictly positive.
    """
    out = []
    tries = 0
    lo, hi = math.log10(low), math.log10(high)
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError("sample_cone_profiles: rejection sampling stalled")
        lam = np.sort(10.0 ** rng.uniform(lo, hi, size=coeffs.n))
        prof = EigenProfile(tuple(lam))
        if cone_margin(coeffs, t, prof).satisfied:
            out.append(prof)
    return out
