"""Two-block ADMM for the rank-correction problems.

Rectangular problem::

    min  1/(2m) ||y - R_Omega(X)||^2 + rho (||X||_* - <F, X> + gamma/2 ||X - Xt||^2)
    s.t. R_alpha(X) = b,  [ ||R_beta(X)||_inf <= c ]

PSD problem: ``||X||_*`` becomes ``<I, X>`` and ``X`` is restricted to the
PSD cone.  With ``F = 0`` and ``gamma = 0`` both reduce to nuclear-norm
penalized least squares.

The smooth block is diagonal in basis coefficients, so the X-update is a
closed-form coefficientwise formula; the Z-block is singular value soft
thresholding (rectangular) or a shifted PSD projection (PSD).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .spectral import CorrectionMatrix, decompose, is_hermitian, numerical_rank

#: Order from which the PSD prox asks LAPACK for a partial spectrum.
_SUBSET_MIN = 48

__all__ = [
    "SolverConfig",
    "RcsProblem",
    "SolveResult",
    "OptimalityReport",
    "svt",
    "psd_prox",
    "x_update",
    "solve",
    "objective_value",
    "check_optimality",
    "nuclear_norm",
]


@dataclass(frozen=True)
class SolverConfig:
    """ADMM settings.

    ``admm_sigma`` is measured in units of the mean data curvature ``1/d2``
    so that one default works across problem sizes.
    """

    max_iter: int = 2000
    tol_primal: float = 1e-7
    tol_dual: float = 1e-7
    admm_sigma: float = 1.0
    sigma_adapt: bool = True
    rank_tol: float = 1e-6
    history_every: int = 10
    relaxation: float = 1.6

    def __post_init__(self):
        if not 0 < self.relaxation < 2:
            raise ValueError("relaxation must lie in (0, 2)")
        for name in ("max_iter", "tol_primal", "tol_dual", "admm_sigma", "rank_tol", "history_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True, eq=False)
class RcsProblem:
    """One rank-correction (or nuclear-norm) problem instance.

    Parameters
    ----------
    observations : ObservationSet
    rho : float
        Penalty parameter, ``> 0``.
    correction : CorrectionMatrix or None
        ``None`` means ``F = 0`` and ``gamma = 0``.
    fixed_values : ndarray or None
        Values of the alpha coefficients.  ``None`` leaves them free.
    psd : bool
    bound_c : float or None
        Optional bound on the beta coefficients.
    """

    observations: object
    rho: float
    correction: CorrectionMatrix = None
    fixed_values: np.ndarray = None
    psd: bool = False
    bound_c: float = None

    def __post_init__(self):
        basis = self.observations.basis
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if self.fixed_values is not None:
            fv = np.asarray(self.fixed_values, dtype=float).reshape(-1)
            if fv.shape != (basis.d1,):
                raise ValueError(f"fixed_values has length {fv.size}, expected {basis.d1}")
            object.__setattr__(self, "fixed_values", fv)
        if self.psd and not basis.space.symmetric:
            raise ValueError("the PSD problem needs a symmetric/Hermitian space")
        if self.correction is not None:
            G = basis.space.check(self.correction.G, "correction")
            if self.psd and not is_hermitian(G, 1e-10):
                raise ValueError("PSD problems need a symmetric correction matrix")
        if self.bound_c is not None and self.bound_c <= 0:
            raise ValueError("bound_c must be positive")

    @property
    def basis(self):
        return self.observations.basis

    @property
    def space(self):
        return self.basis.space

    @property
    def gamma(self):
        return 0.0 if self.correction is None else self.correction.gamma

    @property
    def G(self):
        if self.correction is None:
            return self.space.zeros()
        return self.correction.G

    @property
    def F(self):
        if self.correction is None:
            return self.space.zeros()
        return self.correction.F

    @property
    def X_tilde(self):
        if self.correction is None:
            return self.space.zeros()
        return self.correction.X_tilde

    def with_rho(self, rho):
        return RcsProblem(self.observations, rho, self.correction, self.fixed_values, self.psd, self.bound_c)


@dataclass(eq=False)
class SolveResult:
    X_hat: np.ndarray
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    numerical_rank: int
    spectrum: np.ndarray
    converged: bool
    rho: float
    sigma: float
    Z: np.ndarray = field(repr=False)
    Y: np.ndarray = field(repr=False)
    history: list = field(default_factory=list, repr=False)
    psd: bool = False

    @property
    def best_objective(self):
        """Best-so-far objective at each recorded checkpoint."""
        vals = [h[1] for h in self.history]
        return np.minimum.accumulate(vals) if vals else np.array([])

    @property
    def subgradient(self):
        """Subgradient from the splitting dual.

        Rectangular: an element of the nuclear-norm subdifferential at ``Z``.
        PSD: the complementary slack matrix ``S / rho``.
        """
        if self.psd:
            n = self.Y.shape[0]
            return (self.rho * np.eye(n) - self.Y) / self.rho
        return self.Y / self.rho


# -- proximal maps -----------------------------------------------------------


def svt(X, t, hermitian=None):
    """Singular value soft-thresholding, the prox of ``t ||.||_*``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    X = np.asarray(X)
    if hermitian is None:
        hermitian = is_hermitian(X)
    if hermitian:
        lam, P = np.linalg.eigh((X + X.conj().T) / 2)
        shrunk = np.sign(lam) * np.maximum(np.abs(lam) - t, 0.0)
        keep = shrunk != 0
        Pk = P[:, keep]
        return (Pk * shrunk[keep]) @ Pk.conj().T
    U, s, Vh = np.linalg.svd(X, full_matrices=False)
    s = np.maximum(s - t, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vh[keep]


def psd_prox(X, t):
    """``Pi_{S+}(X - t I)``, the prox of ``t tr(.) + indicator(S+)``."""
    if t < 0:
        raise ValueError("threshold must be nonnegative")
    X = np.asarray(X)
    if not is_hermitian(X, 1e-10):
        raise ValueError("psd_prox needs a symmetric/Hermitian matrix")
    H = (X + X.conj().T) / 2
    if H.shape[0] >= _SUBSET_MIN:
        # only the eigenpairs above the shift are needed
        lam, P = scipy.linalg.eigh(H, subset_by_value=(t, np.inf), driver="evr", check_finite=False)
        lam = lam - t
    else:
        lam, P = np.linalg.eigh(H)
        lam = lam - t
        keep = lam > 0
        lam, P = lam[keep], P[:, keep]
    return (P * lam) @ P.conj().T


def nuclear_norm(X):
    X = np.asarray(X)
    if is_hermitian(X):
        return float(np.abs(np.linalg.eigvalsh((X + X.conj().T) / 2)).sum())
    return float(np.linalg.svd(X, compute_uv=False).sum())


# -- coefficient model --------------------------------------------------------


class _CoefficientModel:
    """Per-coefficient data of the smooth block."""

    def __init__(self, problem):
        basis = problem.basis
        obs = problem.observations
        m = obs.m
        self.d1 = basis.d1
        self.curv = obs.samples.multiplicity / m  # m_k / m
        self.lin = obs.sums / m  # s_k / m
        self.g = basis.coeffs(problem.G)
        self.rho = problem.rho
        self.gamma = problem.gamma
        self.fixed = problem.fixed_values
        self.c = problem.bound_c

    def update(self, v, sigma):
        x = (self.lin + self.rho * self.g + sigma * v) / (self.curv + self.rho * self.gamma + sigma)
        self.project(x)
        return x

    def project(self, x):
        """Project a coefficient vector onto the affine/box constraint set."""
        if self.c is not None:
            np.clip(x[self.d1:], -self.c, self.c, out=x[self.d1:])
        if self.fixed is not None:
            x[: self.d1] = self.fixed
        return x


def x_update(problem, v, sigma):
    """Closed-form smooth-block minimizer in coefficient space.

    Minimizes ``data(x) - rho <g, x> + rho gamma/2 |x|^2 + sigma/2 |x - v|^2``
    subject to the fixed coefficients and optional bound, where ``v`` holds
    the coefficients of ``Z - U``.
    """
    return _CoefficientModel(problem).update(np.asarray(v, dtype=float), sigma)


# -- objective ----------------------------------------------------------------


def objective_value(X, problem):
    """Exact objective of the rectangular or PSD problem at ``X``."""
    obs = problem.observations
    X = problem.space.check(X)
    r = obs.y - problem.basis.coeffs(X)[obs.samples.omega]
    data = float(r @ r) / (2 * obs.m)
    space = problem.space
    if problem.psd:
        pen = float(np.real(np.trace(X))) - space.inner(problem.F, X)
    else:
        pen = nuclear_norm(X) - space.inner(problem.F, X)
    if problem.gamma:
        D = X - problem.X_tilde
        pen += problem.gamma / 2 * space.inner(D, D)
    return data + problem.rho * pen


# -- solver ---------------------------------------------------------------------


def _polish(Z, problem, model, rank_tol):
    """Feasible estimate near the prox iterate ``Z``.

    Rectangular: restore the fixed coefficients (and bound) exactly.
    PSD: alternate between the cone and the affine/box set, ending on the
    latter; stops once the smallest eigenvalue is negligible.
    """
    basis = problem.basis
    x = model.project(basis.coeffs(Z))
    X = basis.synthesize(x)
    if not problem.psd:
        return X
    Y = _congruence_polish(Z, problem)
    if Y is not None:
        return Y
    scale = max(np.abs(X).max(initial=0.0), 1.0)
    for _ in range(500):
        lam = np.linalg.eigvalsh((X + X.conj().T) / 2)
        if lam[0] >= -1e-10 * scale:
            break
        X = psd_prox(X, 0.0)
        X = basis.synthesize(model.project(basis.coeffs(X)))
    return (X + X.conj().T) / 2


def _congruence_polish(Z, problem):
    """Feasible PSD point ``D Z D`` when every fixed coefficient is a diagonal
    entry (or the trace) with a positive target; ``None`` otherwise.

    A diagonal congruence keeps the PSD cone and the rank.
    """
    basis = problem.basis
    fv = problem.fixed_values
    if fv is None or basis.d1 == 0 or problem.bound_c is not None or np.any(fv <= 0):
        return None
    n = basis.space.n1
    if basis.is_pauli:
        tr = np.real(np.trace(Z))
        if basis.d1 != 1 or tr <= 0:
            return None
        Y = Z * (fv[0] * np.sqrt(n) / tr)
    else:
        rows, cols, parts = basis.rows[: basis.d1], basis.cols[: basis.d1], basis.parts[: basis.d1]
        if np.any(rows != cols) or np.any(parts != 0):
            return None
        dz = np.real(np.diag(Z))[rows]
        if np.any(dz <= 0):
            return None
        d = np.ones(n)
        d[rows] = np.sqrt(fv / dz)
        Y = d[:, None] * Z * d[None, :]
    Y = (Y + Y.conj().T) / 2
    x = basis.coeffs(Y)
    x[: basis.d1] = fv
    return basis.synthesize(x)


def solve(problem, cfg=SolverConfig(), warm=None):
    """Solve ``problem`` by ADMM.

    Parameters
    ----------
    problem : RcsProblem
    cfg : SolverConfig
    warm : SolveResult, optional
        Previous solution (typically at a neighbouring ``rho``) used as the
        starting point; its dual is rescaled to the new ``rho``.

    Returns
    -------
    SolveResult
        ``converged`` is ``False`` when ``max_iter`` was hit; the returned
        iterate is then the best feasible checkpoint seen.
    """
    basis = problem.basis
    space = problem.space
    model = _CoefficientModel(problem)
    rho = problem.rho
    hermitian = space.symmetric
    unit = 1.0 / max(basis.d2, 1)
    sig_lo, sig_hi = 1e-4 * unit, 1e4 * unit

    if warm is not None:
        Z = warm.Z.copy()
        Y = warm.Y * (rho / warm.rho)
        sigma = float(np.clip(warm.sigma, sig_lo, sig_hi))
    else:
        Z = basis.synthesize(model.project(np.zeros(basis.d)))
        if problem.psd:
            Z = psd_prox(Z, 0.0)
        Y = space.zeros()
        sigma = cfg.admm_sigma * unit

    def prox(V, t):
        return psd_prox(V, t) if problem.psd else svt(V, t, hermitian)

    data_scale = np.linalg.norm(model.lin)
    floor = 1e-14 * np.sqrt(basis.d)
    history = []
    best = None
    converged = False
    r_norm = s_norm = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        U = Y / sigma
        x = model.update(basis.coeffs(Z - U), sigma)
        X = basis.synthesize(x)
        Z_prev = Z
        Xr = cfg.relaxation * X + (1 - cfg.relaxation) * Z_prev
        Z = prox(Xr + U, rho / sigma)
        Y = Y + sigma * (Xr - Z)

        r_norm = np.linalg.norm(X - Z)
        s_norm = sigma * np.linalg.norm(Z - Z_prev)
        eps_pri = cfg.tol_primal * max(np.linalg.norm(X), np.linalg.norm(Z)) + floor
        eps_dual = cfg.tol_dual * max(np.linalg.norm(Y), data_scale) + floor

        if it % cfg.history_every == 0:
            obj = objective_value(X, problem)
            history.append((it, obj, r_norm))
            if r_norm <= 10 * eps_pri and (best is None or obj < best[1]):
                best = (it, obj, Z.copy(), Y.copy(), sigma)

        if r_norm <= eps_pri and s_norm <= eps_dual:
            converged = True
            break

        if cfg.sigma_adapt:
            rp, rd = r_norm / eps_pri, s_norm / eps_dual
            if rp > 10 * rd and sigma < sig_hi:
                sigma = min(2 * sigma, sig_hi)
            elif rd > 10 * rp and sigma > sig_lo:
                sigma = max(sigma / 2, sig_lo)

    if not converged and best is not None:
        _, _, Z, Y, sigma = best

    X_hat = _polish(Z, problem, model, cfg.rank_tol)
    dec = decompose(X_hat, hermitian)
    spectrum = dec.lam if (problem.psd and dec.lam is not None) else dec.sigma
    if problem.psd:
        spectrum = np.sort(spectrum)[::-1]
    return SolveResult(
        X_hat=X_hat,
        objective=objective_value(X_hat, problem),
        iterations=it,
        primal_residual=float(r_norm),
        dual_residual=float(s_norm),
        numerical_rank=numerical_rank(dec.sigma, cfg.rank_tol),
        spectrum=spectrum,
        converged=converged,
        rho=rho,
        sigma=sigma,
        Z=Z,
        Y=Y,
        history=history,
        psd=problem.psd,
    )


# -- optimality certificate ---------------------------------------------------------


@dataclass(frozen=True)
class OptimalityReport:
    """Residuals of the KKT system at a candidate solution.

    All quantities are in subgradient units (divided by ``rho``).
    """

    stationarity: float
    cone_violation: float
    complementarity: float
    rank: int
    passed: bool
    threshold: float


def check_optimality(X_hat, problem, tol=1e-7, subgradient=None, rank_tol=1e-6):
    """Independent KKT check for a candidate ``X_hat``.

    The multipliers of the fixed coefficients (and of active bounds) are
    fitted by least squares and the remaining stationarity residual is
    reported together with the nuclear-norm subgradient bound (rectangular)
    or the cone and complementarity conditions (PSD).  ``subgradient`` may
    supply the solver's own dual candidate instead of constructing one.
    PASS iff every residual is at most ``10 * tol``.
    """
    basis = problem.basis
    space = problem.space
    obs = problem.observations
    rho = problem.rho
    X_hat = space.check(X_hat)
    x = basis.coeffs(X_hat)
    grad = basis.synthesize((obs.samples.multiplicity * x - obs.sums) / obs.m)

    # indices carrying a multiplier, and the sign each multiplier must have
    free = np.arange(basis.d1) if problem.fixed_values is not None else np.arange(0)
    sign = np.zeros(free.size)
    if problem.bound_c is not None:
        beta_x = x[basis.d1:]
        # a bound counts as active within the certificate tolerance
        active = np.flatnonzero(np.abs(beta_x) >= problem.bound_c * (1 - max(1e-9, 10 * tol))) + basis.d1
        free = np.concatenate([free, active])
        sign = np.concatenate([sign, np.sign(x[active])])
    # rectangular: G = W + sum t_k Theta_k with t_k s_k <= 0; PSD: S = W + ..., t_k s_k >= 0
    orient = 1.0 if problem.psd else -1.0

    dec = decompose(X_hat, space.symmetric)
    r = numerical_rank(dec.sigma, rank_tol)
    U1, V1 = dec.U[:, :r], dec.V[:, :r]
    U2, V2 = dec.U[:, r:], dec.V[:, r:]

    def proj_T(M):
        return M - U2 @ (U2.conj().T @ M @ V2) @ V2.conj().T

    def sign_violation(t):
        return float(np.max(-orient * t * sign, initial=0.0))

    def fit(M):
        """Add the multiplier combination minimizing ``||P_T(.)||``."""
        if free.size == 0:
            return M, 0.0
        A = np.stack([_realvec(proj_T(basis.element(k))) for k in free], axis=1)
        t, *_ = np.linalg.lstsq(A, -_realvec(proj_T(M)), rcond=None)
        return M + basis.synthesize(t, free), sign_violation(t)

    def dual_residual(M):
        """Coefficients of ``M`` not absorbable by admissible multipliers."""
        c = basis.coeffs(M)
        t = -c[free]
        ok = (sign == 0) | (orient * t * sign >= 0)
        c[free[ok]] = 0.0
        return c

    if problem.psd:
        W = (grad + rho * (np.eye(space.n1) - problem.G + problem.gamma * X_hat)) / rho
        if subgradient is not None:
            S = np.asarray(subgradient)
            stat = np.linalg.norm(dual_residual(W - S))
            viol = 0.0
        else:
            S, viol = fit(W)
            stat = np.linalg.norm(proj_T(S))
        block = U2.conj().T @ S @ U2
        lam_min_S = np.linalg.eigvalsh((block + block.conj().T) / 2)[0] if block.size else 0.0
        lam_min_X = np.linalg.eigvalsh(X_hat)[0]
        cone = max(0.0, -lam_min_S, -lam_min_X / max(1.0, np.abs(X_hat).max()), viol)
        comp = abs(space.inner(X_hat, S)) / max(1.0, np.linalg.norm(X_hat))
    else:
        W = -(grad - rho * problem.G + rho * problem.gamma * X_hat) / rho
        target = U1 @ V1.conj().T
        if subgradient is not None:
            Gc = np.asarray(subgradient)
            stat = np.linalg.norm(dual_residual(W - Gc))
            viol = 0.0
        else:
            Gc, viol = fit(W - target)
            Gc = Gc + target
            stat = np.linalg.norm(proj_T(Gc) - target)
        tperp = np.linalg.norm(U2.conj().T @ Gc @ V2, 2) if U2.size and V2.size else 0.0
        cone = max(0.0, tperp - 1.0, viol)
        comp = 0.0
    threshold = 10 * tol
    passed = bool(stat <= threshold and cone <= threshold and comp <= threshold)
    return OptimalityReport(float(stat), float(cone), float(comp), r, passed, threshold)


def _realvec(M):
    M = np.asarray(M)
    if np.iscomplexobj(M):
        return np.concatenate([M.real.ravel(), M.imag.ravel()])
    return M.ravel()
