"""Ordered spectral decompositions and rank-correction spectral operators."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DegenerateSpectrumError",
    "SpectralDecomposition",
    "RankCorrectionFn",
    "CorrectionMatrix",
    "decompose",
    "is_hermitian",
    "phi",
    "f_vector",
    "apply_spectral",
    "known_rank_correction",
    "correction_matrix",
    "numerical_rank",
]

#: sigma_1 below this is treated as the zero matrix by the phi family.
ZERO_SPECTRUM = 1e-14
#: relative gap below which the known-rank correction is ill-defined.
GAP_TOL = 1e-10


class DegenerateSpectrumError(ValueError):
    """Raised when an operation needs a gap between sigma_r and sigma_{r+1}."""


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    """``X = U diag(sigma) V^H`` with nonincreasing ``sigma``.

    For Hermitian input ``lam`` holds the eigenvalues ordered by decreasing
    modulus, ``P`` the matching eigenvectors and ``s`` the sign vector, so
    that ``U = P`` and ``V = P diag(s)``.
    """

    sigma: np.ndarray
    U: np.ndarray
    V: np.ndarray
    lam: np.ndarray = None
    P: np.ndarray = None
    s: np.ndarray = None

    @property
    def hermitian(self):
        return self.lam is not None

    def reconstruct(self):
        k = self.sigma.size
        return (self.U[:, :k] * self.sigma) @ self.V[:, :k].conj().T


def is_hermitian(X, rtol=1e-12):
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        return False
    scale = max(np.abs(X).max(initial=0.0), 1.0)
    return bool(np.abs(X - X.conj().T).max(initial=0.0) <= rtol * scale)


def decompose(X, hermitian=None):
    """Ordered singular (or modulus-ordered eigen) decomposition of ``X``.

    ``hermitian=None`` detects symmetric/Hermitian input.  Eigenvalue ties
    in modulus put the positive value first, then keep the original order.
    """
    X = np.asarray(X)
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix has non-finite entries")
    if hermitian is None:
        hermitian = is_hermitian(X)
    if hermitian:
        lam, P = np.linalg.eigh((X + X.conj().T) / 2)
        order = np.lexsort((np.arange(lam.size), -lam, -np.abs(lam)))
        lam, P = lam[order], P[:, order]
        s = np.where(lam < 0, -1.0, 1.0)
        return SpectralDecomposition(np.abs(lam), P, P * s, lam, P, s)
    U, sigma, Vh = np.linalg.svd(X, full_matrices=True)
    return SpectralDecomposition(sigma, U, Vh.conj().T)


def numerical_rank(sigma, rank_tol=1e-6):
    """``#{i : sigma_i > rank_tol * sigma_1}``."""
    sigma = np.asarray(sigma)
    if sigma.size == 0 or sigma[0] <= 0:
        return 0
    return int(np.count_nonzero(sigma > rank_tol * sigma[0]))


def phi(t, tau, eps):
    """S-shaped scalar ``sgn(t) (1 + eps^tau) |t|^tau / (|t|^tau + eps^tau)``."""
    if tau <= 0 or eps <= 0:
        raise ValueError("tau and eps must be positive")
    t = np.asarray(t, dtype=float)
    a = np.abs(t) ** tau
    e = eps**tau
    out = np.sign(t) * (1.0 + e) * a / (a + e)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RankCorrectionFn:
    """Choice of spectral function for the correction term.

    ``kind`` is ``"zero"``, ``"known-rank"`` (with ``r``) or ``"phi"``
    (with ``tau`` and ``eps``).
    """

    kind: str = "phi"
    tau: float = 2.0
    eps: float = 0.02
    r: int = None

    def __post_init__(self):
        if self.kind == "phi":
            if self.tau <= 0 or self.eps <= 0:
                raise ValueError("phi family needs tau > 0 and eps > 0")
        elif self.kind == "known-rank":
            if self.r is None or self.r < 1:
                raise ValueError("known-rank correction needs r >= 1")
        elif self.kind != "zero":
            raise ValueError(f"unknown rank-correction kind {self.kind!r}")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def known_rank(cls, r):
        return cls("known-rank", r=int(r))

    @classmethod
    def phi_family(cls, tau=2.0, eps=0.02):
        return cls("phi", tau=float(tau), eps=float(eps))

    def __call__(self, X, hermitian=None):
        if self.kind == "known-rank":
            return known_rank_correction(X, self.r, hermitian)
        return apply_spectral(X, self, hermitian)

    def describe(self):
        if self.kind == "phi":
            return f"phi(tau={self.tau:g},eps={self.eps:g})"
        if self.kind == "known-rank":
            return f"known-rank(r={self.r})"
        return "zero"


def f_vector(sigma, fn):
    """Symmetric vector function ``f`` evaluated on a (nonnegative) spectrum."""
    sigma = np.asarray(sigma, dtype=float)
    if fn.kind == "zero":
        return np.zeros_like(sigma)
    if fn.kind == "known-rank":
        out = np.zeros_like(sigma)
        out[: fn.r] = 1.0
        return out
    top = np.abs(sigma).max(initial=0.0)
    if top < ZERO_SPECTRUM:
        return np.zeros_like(sigma)
    return phi(sigma / top, fn.tau, fn.eps)


def apply_spectral(X, fn, hermitian=None):
    """Spectral operator ``F(X) = U diag(f(sigma(X))) V^H``."""
    X = np.asarray(X)
    if fn.kind == "known-rank":
        raise ValueError("use known_rank_correction for the known-rank variant")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix has non-finite entries")
    if fn.kind == "zero":
        return np.zeros_like(X)
    dec = decompose(X, hermitian)
    f = f_vector(dec.sigma, fn)
    k = f.size
    return (dec.U[:, :k] * f) @ dec.V[:, :k].conj().T


def known_rank_correction(X, r, hermitian=None):
    """``U_1 V_1^H`` from the leading ``r`` singular pairs of ``X``."""
    X = np.asarray(X)
    dec = decompose(X, hermitian)
    n = dec.sigma.size
    if not 1 <= r <= n:
        raise ValueError(f"rank {r} outside [1, {n}]")
    sig = dec.sigma
    nxt = sig[r] if r < n else 0.0
    if sig[0] == 0 or (sig[r - 1] - nxt) / sig[0] < GAP_TOL:
        raise DegenerateSpectrumError(
            f"sigma_{r} and sigma_{r + 1} coincide; the rank-{r} correction is not well-defined"
        )
    return dec.U[:, :r] @ dec.V[:, :r].conj().T


@dataclass(frozen=True, eq=False)
class CorrectionMatrix:
    """``G = F(X_tilde) + gamma * X_tilde`` together with its pieces."""

    G: np.ndarray
    gamma: float
    F: np.ndarray
    X_tilde: np.ndarray


def correction_matrix(X_tilde, fn, gamma=0.0, hermitian=None):
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    X_tilde = np.asarray(X_tilde)
    F = fn(X_tilde, hermitian)
    return CorrectionMatrix(F + gamma * X_tilde, float(gamma), F, X_tilde)
