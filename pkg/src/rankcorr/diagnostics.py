"""Error-bound ingredients and rank-consistency certificates.

Everything here is evaluated at a known ground truth ``X_bar``: the tangent
space projections, the correction quality pair ``(a_m, b_m)``, the sampling
constants ``mu1``/``mu2``, the recommended penalty, and the dense linear
systems whose solutions decide rank consistency.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from .basis import MatrixSpace, make_basis
from .spectral import GAP_TOL, DegenerateSpectrumError, decompose, f_vector

__all__ = [
    "AssumptionViolated",
    "TangentSpace",
    "BoundProfile",
    "ConsistencyReport",
    "NondegeneracyReport",
    "tangent_projections",
    "compute_am_bm",
    "mu_constants",
    "rho_recipe",
    "bound_profile",
    "block_basis",
    "build_B1_B2",
    "ghat",
    "check_consistency_rect",
    "check_consistency_psd",
    "check_nondegeneracy",
    "write_report",
]

#: Largest dense operator matrix (in entries) the certificates will assemble.
DENSE_LIMIT = 4_000_000
#: Width of the inconclusive band around the strict certificate inequalities.
VERDICT_BAND = 1e-9
#: Relative singular value below which a map is declared not surjective.
NONDEGENERACY_TOL = 1e-10


class AssumptionViolated(ValueError):
    """A theorem's standing assumption fails for the given inputs."""


@dataclass(frozen=True, eq=False)
class TangentSpace:
    """Row/column spaces of ``X_bar`` split at rank ``r``.

    For the PSD case ``V1 = U1 = P1`` and ``V2 = U2 = P2``.
    """

    U1: np.ndarray
    U2: np.ndarray
    V1: np.ndarray
    V2: np.ndarray
    r: int
    psd: bool = False

    @property
    def shape(self):
        return self.U1.shape[0], self.V1.shape[0]

    @property
    def UV(self):
        return self.U1 @ self.V1.conj().T

    def P_T(self, X):
        """``U1U1^H X + X V1V1^H - U1U1^H X V1V1^H``."""
        return X - self.P_Tperp(X)

    def P_Tperp(self, X):
        """``U2U2^H X V2V2^H``."""
        return self.U2 @ (self.U2.conj().T @ X @ self.V2) @ self.V2.conj().T


def tangent_projections(X_bar, r, psd=False, hermitian=None):
    """Tangent space of ``X_bar`` at rank ``r``.

    Raises
    ------
    DegenerateSpectrumError
        If ``sigma_r`` and ``sigma_{r+1}`` are not separated.
    """
    X_bar = np.asarray(X_bar)
    dec = decompose(X_bar, hermitian if not psd else True)
    n = dec.sigma.size
    if not 0 <= r <= n:
        raise ValueError(f"rank {r} outside [0, {n}]")
    if r:
        nxt = dec.sigma[r] if r < n else 0.0
        if dec.sigma[0] == 0 or (dec.sigma[r - 1] - nxt) / dec.sigma[0] < GAP_TOL:
            raise DegenerateSpectrumError(f"no spectral gap after sigma_{r}")
    U, V = dec.U, dec.V
    if psd:
        if dec.lam is not None and r and dec.lam[r - 1] <= 0:
            raise ValueError("X_bar is not positive semidefinite at rank r")
        V = U
    return TangentSpace(U[:, :r], U[:, r:], V[:, :r], V[:, r:], int(r), psd)


def compute_am_bm(ts, correction):
    """``a_m = ||U1V1^H - P_T(G)||`` and ``b_m = 1 - ||P_Tperp(G)||``.

    ``correction`` is a :class:`CorrectionMatrix` or a plain matrix ``G``.
    Returns ``(a_m, b_m, assumption_ok)`` where ``assumption_ok`` records
    ``||P_Tperp(G)|| < 1``.
    """
    G = np.asarray(getattr(correction, "G", correction))
    if not G.any():
        # ||U1V1^H|| = 1 analytically; skip the rounding of the norm
        return 1.0, 1.0, True
    a = np.linalg.norm(ts.UV - ts.P_T(G), 2)
    perp = np.linalg.norm(ts.P_Tperp(G), 2) if G.size else 0.0
    b = 1.0 - perp
    return float(a), float(b), bool(perp < 1.0)


def mu_constants(scheme):
    """``mu1 = 1/(d2 min p)`` and ``mu2 = n max(||sum p ThTh^H||, ||sum p Th^HTh||)``."""
    basis = scheme.basis
    mu1 = 1.0 / (basis.d2 * scheme.p.min())
    left, right = basis.second_moments(scheme.p)
    n = min(basis.space.shape)
    mu2 = n * max(np.linalg.norm(left, 2), np.linalg.norm(right, 2))
    return float(mu1), float(mu2)


def rho_recipe(kappa, nu, b_m, mu2, m, n, n1, n2, C_star=1.0):
    """``(kappa nu / b_m) C* sqrt(2 mu2 log(n1+n2) / (m n))``.

    ``C_star`` is a theoretical constant with no known value; 1 by default.
    """
    if kappa <= 1:
        raise ValueError("kappa must exceed 1")
    if C_star <= 0:
        raise ValueError("C_star must be positive")
    if b_m <= 0:
        raise AssumptionViolated("b_m must be positive for the penalty recipe")
    if nu <= 0:
        raise ValueError("noise magnitude 0 gives rho = 0, which the solver cannot use")
    return float(kappa * nu / b_m * C_star * np.sqrt(2 * mu2 * np.log(n1 + n2) / (m * n)))


@dataclass(frozen=True)
class BoundProfile:
    """Order terms of the Frobenius error bound, unit numerical constant."""

    mu1: float
    mu2: float
    kappa: float
    rho_suggested: float
    am: float
    bm: float
    am_over_bm: float
    bound_order_term: float
    first_branch: float
    second_branch: float
    constant_note: str = "up to an unspecified numerical constant C'"

    def as_dict(self):
        return asdict(self)


def bound_profile(*, am, bm, mu1, mu2, kappa, nu, c, d2, r, m, n, n1, n2, C_star=1.0):
    """Evaluate both branches of the error bound with unit constants."""
    if bm <= 0:
        raise AssumptionViolated("b_m must be positive")
    if kappa <= 1:
        raise ValueError("kappa must exceed 1")
    ratio = am / bm
    log_term = np.log(n1 + n2)
    bracket = (1 + kappa * ratio) ** 2 * nu**2 + (kappa / (kappa - 1)) ** 2 * (1 + ratio) ** 2 * c**2
    first = bracket * mu1**2 * mu2 * d2 * r * log_term / (m * n)
    second = c**2 * mu1 * np.sqrt(log_term / m)
    rho = rho_recipe(kappa, nu, bm, mu2, m, n, n1, n2, C_star) if nu > 0 else float("nan")
    return BoundProfile(
        float(mu1), float(mu2), float(kappa), rho, float(am), float(bm), float(ratio),
        float(max(first, second)), float(first), float(second),
    )


# -- dense certificate systems ---------------------------------------------------


def block_basis(k, l, symmetric, complex_field):
    """Orthonormal coordinates for the ``k x l`` block space."""
    if symmetric:
        return make_basis(MatrixSpace.square(k, complex_field), "correlation-entrywise", [])
    return make_basis(MatrixSpace(k, l, "complex" if complex_field else "real", False), "rectangular-entrywise", [])


def _weights(scheme):
    w = np.zeros(scheme.basis.d)
    w[scheme.basis.d1:] = 1.0 / scheme.p
    return w


def _lift(basis, blocks, L, R):
    """Columns ``coeffs(L E_j R^H)`` for every block basis element ``E_j``."""
    cols = np.empty((basis.d, blocks.d))
    e = np.zeros(blocks.d)
    for j in range(blocks.d):
        e[j] = 1.0
        cols[:, j] = basis.coeffs(L @ blocks.synthesize(e) @ R.conj().T)
        e[j] = 0.0
    return cols


@dataclass(frozen=True, eq=False)
class BlockOperators:
    """Dense ``B1``/``B2`` in orthonormal block coordinates."""

    B1: np.ndarray
    B2: np.ndarray
    inner_blocks: object  # r x r coordinates (domain of B1)
    outer_blocks: object  # (n1-r) x (n2-r) coordinates
    W1: np.ndarray = field(repr=False)
    W2: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def apply_B1(self, Y):
        return self.outer_blocks.synthesize(self.B1 @ self.inner_blocks.coeffs(Y))

    def apply_B2(self, Z):
        return self.outer_blocks.synthesize(self.B2 @ self.outer_blocks.coeffs(Z))


def build_B1_B2(ts, scheme):
    """Assemble ``B1(Y) = U2^H Q^+(U1 Y V1^H) V2`` and ``B2(Z) = U2^H Q^+(U2 Z V2^H) V2``.

    ``Q^+`` weights the beta coefficients by ``1/p_k`` and drops alpha.
    Both are returned as matrices in orthonormal coordinates of their block
    spaces (symmetric/Hermitian blocks for a symmetric space).
    """
    basis = scheme.basis
    space = basis.space
    k, l = ts.U2.shape[1], ts.V2.shape[1]
    sym = space.symmetric
    outer = block_basis(k, l, sym, space.is_complex) if k and l else None
    inner = block_basis(ts.r, ts.r, sym, space.is_complex) if ts.r else None
    dim_out = outer.d if outer else 0
    dim_in = inner.d if inner else 0
    if dim_out * max(dim_out, dim_in) > DENSE_LIMIT:
        raise ValueError("certificate system exceeds the dense size guard")
    w = _weights(scheme)
    W2 = _lift(basis, outer, ts.U2, ts.V2) if outer else np.zeros((basis.d, 0))
    W1 = _lift(basis, inner, ts.U1, ts.V1) if inner else np.zeros((basis.d, 0))
    B2 = W2.T @ (w[:, None] * W2)
    B1 = W2.T @ (w[:, None] * W1)
    return BlockOperators(B1, (B2 + B2.T) / 2, inner, outer, W1, W2, w)


def apply_B2_columnwise(ts, scheme, blocks):
    """Reference assembly of ``B2`` by applying the operator to each coordinate."""
    basis = scheme.basis
    out = np.empty((blocks.d, blocks.d))
    e = np.zeros(blocks.d)
    for j in range(blocks.d):
        e[j] = 1.0
        M = basis.q_beta(scheme.p, ts.U2 @ blocks.synthesize(e) @ ts.V2.conj().T, dagger=True)
        out[:, j] = blocks.coeffs(ts.U2.conj().T @ M @ ts.V2)
        e[j] = 0.0
    return out


def ghat(X_bar, fn, r, hermitian=None):
    """``(1 - f_1, ..., 1 - f_r)`` at the spectrum of ``X_bar``."""
    sigma = decompose(X_bar, hermitian).sigma
    return 1.0 - f_vector(sigma, fn)[:r]


@dataclass(eq=False)
class ConsistencyReport:
    B1_matrix: np.ndarray = field(repr=False)
    B2_matrix: np.ndarray = field(repr=False)
    ghat: np.ndarray
    solution: np.ndarray = field(repr=False)
    certificate_value: float
    nondegenerate: bool
    nondegeneracy_margin: float
    b2_min_eig: float
    verdict: str
    kind: str

    def summary(self):
        return {
            "kind": self.kind,
            "certificate_value": self.certificate_value,
            "nondegenerate": self.nondegenerate,
            "nondegeneracy_margin": self.nondegeneracy_margin,
            "b2_min_eig": self.b2_min_eig,
            "verdict": self.verdict,
            "ghat": " ".join(f"{g:.6g}" for g in self.ghat),
        }


def _solve_block(ops, rhs):
    """Solve ``B2 z = rhs``; ``None`` when ``B2`` is singular."""
    B2 = ops.B2
    if B2.size == 0:
        return np.zeros(0), 0.0
    lam = np.linalg.eigvalsh(B2)
    scale = max(lam[-1], 1e-300)
    if lam[0] <= 1e-10 * scale:
        return None, float(lam[0])
    return np.linalg.solve(B2, rhs), float(lam[0])


def check_consistency_rect(X_bar, scheme, fn, r):
    """Solve ``B2(Gamma) = B1(Diag(ghat))`` and compare ``||Gamma||`` with 1."""
    basis = scheme.basis
    ts = tangent_projections(X_bar, r, psd=False, hermitian=basis.space.symmetric)
    ops = build_B1_B2(ts, scheme)
    g = ghat(X_bar, fn, r, basis.space.symmetric)
    nd = check_nondegeneracy(X_bar, basis, r, ts=ts)
    rhs = ops.B1 @ ops.inner_blocks.coeffs(np.diag(g).astype(basis.space.dtype)) if ts.r else np.zeros(ops.B2.shape[0])
    z, b2min = _solve_block(ops, rhs)
    if z is None:
        return ConsistencyReport(ops.B1, ops.B2, g, None, float("nan"), nd.nondegenerate, nd.margin, b2min, "singular", "rectangular")
    Gamma = ops.outer_blocks.synthesize(z) if ops.outer_blocks else np.zeros((0, 0))
    value = float(np.linalg.norm(Gamma, 2)) if Gamma.size else 0.0
    if value < 1 - VERDICT_BAND:
        verdict = "consistent"
    elif value <= 1 + VERDICT_BAND:
        verdict = "inconclusive"
    else:
        verdict = "violated"
    return ConsistencyReport(ops.B1, ops.B2, g, Gamma, value, nd.nondegenerate, nd.margin, b2min, verdict, "rectangular")


def check_consistency_psd(X_bar, scheme, fn, r):
    """``Lambda = I + B2^{-1} B1(Diag(ghat))`` and its smallest eigenvalue."""
    basis = scheme.basis
    ts = tangent_projections(X_bar, r, psd=True)
    ops = build_B1_B2(ts, scheme)
    g = ghat(X_bar, fn, r, True)
    nd = check_nondegeneracy(X_bar, basis, r, psd=True, ts=ts)
    rhs = ops.B1 @ ops.inner_blocks.coeffs(np.diag(g).astype(basis.space.dtype)) if ts.r else np.zeros(ops.B2.shape[0])
    z, b2min = _solve_block(ops, rhs)
    if z is None:
        return ConsistencyReport(ops.B1, ops.B2, g, None, float("nan"), nd.nondegenerate, nd.margin, b2min, "singular", "psd")
    k = ts.U2.shape[1]
    Lam = np.eye(k) + ops.outer_blocks.synthesize(z) if k else np.zeros((0, 0))
    value = float(np.linalg.eigvalsh(Lam)[0]) if k else float("inf")
    if value > VERDICT_BAND:
        verdict = "consistent"
    elif value >= -VERDICT_BAND:
        verdict = "inconclusive"
    else:
        verdict = "violated"
    return ConsistencyReport(ops.B1, ops.B2, g, Lam, value, nd.nondegenerate, nd.margin, b2min, verdict, "psd")


@dataclass(frozen=True)
class NondegeneracyReport:
    nondegenerate: bool
    margin: float


def check_nondegeneracy(X_bar, basis, r, psd=False, ts=None):
    """Surjectivity of ``R_alpha`` on ``{H : U2^H H V2 = 0}``.

    The margin is the smallest singular value of ``R_alpha`` restricted to
    that subspace, i.e. ``sqrt(lambda_min(M))`` with
    ``M_ij = <Theta_i, P_T(Theta_j)>`` over ``alpha``.
    """
    if basis.d1 == 0:
        return NondegeneracyReport(True, float("inf"))
    if ts is None:
        ts = tangent_projections(X_bar, r, psd=psd, hermitian=basis.space.symmetric)
    d1 = basis.d1
    if d1 * basis.d > DENSE_LIMIT:
        raise ValueError("nondegeneracy check exceeds the dense size guard")
    cols = np.stack([basis.coeffs(ts.P_T(basis.element(k)))[:d1] for k in range(d1)], axis=1)
    M = (cols + cols.T) / 2
    lam = np.linalg.eigvalsh(M)
    margin = float(np.sqrt(max(lam[0], 0.0)))
    return NondegeneracyReport(bool(margin >= NONDEGENERACY_TOL), margin)


def write_report(path, items):
    """Write ``key: value`` lines for one or more report dictionaries."""
    with open(path, "w") as fh:
        for key, value in items.items():
            fh.write(f"{key}: {value}\n")
