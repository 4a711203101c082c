"""Synthetic low-rank ground truths and recovery metrics."""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .sampling import RNG_ALGORITHM
from .spectral import decompose, numerical_rank

__all__ = [
    "KINDS",
    "GenSpec",
    "GroundTruth",
    "gen_truth",
    "relerr",
    "fidelity",
    "pattern_fix",
    "psd_sqrt",
]

KINDS = ("correlation", "covariance", "density")


@dataclass(frozen=True)
class GenSpec:
    """Parameters of the factor construction ``M M^H`` with a boosted block.

    The first ``k`` columns of the Gaussian factor are multiplied by
    ``weight`` before forming the product.
    """

    kind: str
    n: int
    r: int
    weight: float = 1.0
    k: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not 1 <= self.k <= self.r <= self.n:
            raise ValueError("need 1 <= k <= r <= n")
        if self.weight < 1:
            raise ValueError("weight must be at least 1")
        if self.kind == "density" and self.n & (self.n - 1):
            raise ValueError(f"density matrices need n = 2**l, got {self.n}")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    X_bar: np.ndarray
    r: int
    kind: str
    spec: GenSpec
    fixed_values: np.ndarray = None

    def with_basis(self, basis):
        """Copy with ``fixed_values = R_alpha(X_bar)`` for ``basis``."""
        fv = basis.coeffs(self.X_bar)[: basis.d1]
        return GroundTruth(self.X_bar, self.r, self.kind, self.spec, fv)

    def metadata(self):
        meta = asdict(self.spec)
        meta["rng"] = RNG_ALGORITHM
        return meta

    def dump(self, stem):
        """Write ``stem.csv`` (or ``stem.re.csv``/``stem.im.csv``) and ``stem.json``.

        Returns the list of written paths.
        """
        stem = str(stem)
        X = self.X_bar
        fmt = "%.17g"
        if np.iscomplexobj(X):
            paths = [stem + ".re.csv", stem + ".im.csv"]
            np.savetxt(paths[0], X.real, delimiter=",", fmt=fmt)
            np.savetxt(paths[1], X.imag, delimiter=",", fmt=fmt)
        else:
            paths = [stem + ".csv"]
            np.savetxt(paths[0], X, delimiter=",", fmt=fmt)
        with open(stem + ".json", "w") as fh:
            json.dump(self.metadata(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths + [stem + ".json"]

    @classmethod
    def load(cls, stem):
        stem = str(stem)
        with open(stem + ".json") as fh:
            meta = json.load(fh)
        meta.pop("rng", None)
        spec = GenSpec(**meta)
        if spec.kind == "density":
            X = np.loadtxt(stem + ".re.csv", delimiter=",", ndmin=2) + 1j * np.loadtxt(
                stem + ".im.csv", delimiter=",", ndmin=2
            )
        else:
            X = np.loadtxt(stem + ".csv", delimiter=",", ndmin=2)
        return cls(X, spec.r, spec.kind, spec)


def gen_truth(spec, basis=None):
    """Draw a rank-``r`` ground truth.

    correlation: ``D X D`` with ``D = diag(X)^{-1/2}``; covariance: ``X``
    itself; density: complex factor, normalized to unit trace.
    """
    rng = np.random.default_rng(spec.seed)
    M = rng.standard_normal((spec.n, spec.r))
    if spec.kind == "density":
        M = M + 1j * rng.standard_normal((spec.n, spec.r))
    M[:, : spec.k] *= spec.weight
    X = M @ M.conj().T
    if spec.kind == "correlation":
        dinv = 1.0 / np.sqrt(np.real(np.diag(X)))
        X = dinv[:, None] * X * dinv[None, :]
        np.fill_diagonal(X, 1.0)
    elif spec.kind == "density":
        X = X / np.real(np.trace(X))
    X = (X + X.conj().T) / 2
    truth = GroundTruth(X, spec.r, spec.kind, spec)
    return truth.with_basis(basis) if basis is not None else truth


def relerr(X, X_bar):
    """``||X - X_bar||_F / max(1e-8, ||X_bar||_F)``."""
    return float(np.linalg.norm(np.asarray(X) - X_bar) / max(1e-8, np.linalg.norm(X_bar)))


def psd_sqrt(X, clip=1e-9):
    """Principal square root; eigenvalues in ``[-clip, 0)`` are set to zero."""
    X = np.asarray(X)
    lam, P = np.linalg.eigh((X + X.conj().T) / 2)
    scale = max(1.0, np.abs(lam).max(initial=0.0))
    if lam.size and lam[0] < -clip * scale:
        raise ValueError(f"matrix is not positive semidefinite (lambda_min = {lam[0]:.3g})")
    return (P * np.sqrt(np.maximum(lam, 0.0))) @ P.conj().T


def fidelity(X_hat, X_bar):
    """``||X_hat^{1/2} X_bar^{1/2}||_*^2``."""
    A = psd_sqrt(X_hat) @ psd_sqrt(X_bar)
    return float(np.linalg.svd(A, compute_uv=False).sum() ** 2)


def true_rank(X, tol=1e-10):
    return numerical_rank(decompose(X).sigma, tol)


def pattern_fix(kind, n, diag_count, offdiag_count, seed):
    """Random fixed-entry pattern ``[(i, j), ...]``: diagonal picks first.

    Off-diagonal entries are drawn from the upper triangle (each names one
    symmetric basis element).  ``kind`` only guards the density case, where
    the trace rather than entries is fixed.
    """
    if kind == "density":
        raise ValueError("density problems fix the trace, not entries")
    n_off = n * (n - 1) // 2
    if not (0 <= diag_count <= n and 0 <= offdiag_count <= n_off):
        raise ValueError(f"counts must lie in [0, {n}] and [0, {n_off}]")
    rng = np.random.default_rng(seed)
    diag = np.sort(rng.choice(n, size=diag_count, replace=False))
    iu, ju = np.triu_indices(n, 1)
    off = np.sort(rng.choice(n_off, size=offdiag_count, replace=False))
    return [(int(i), int(i)) for i in diag] + [(int(iu[t]), int(ju[t])) for t in off]
