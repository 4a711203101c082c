"""Matrix spaces, orthonormal bases with a fixed/free index split, and the
coefficient operators built on them.

All spaces are treated as real inner-product spaces with
``<X, Y> = Re(trace(X^H Y))``.  Complex matrices are ordinary numpy complex
arrays; a Hermitian space of order ``n`` has real dimension ``n**2``.

Coefficients are always handled through full length-``d`` vectors in basis
order (fixed indices first), so nothing ever needs the ``d`` basis matrices
in memory.  Entrywise bases read and write matrix entries directly and the
Pauli basis uses a per-qubit tensor contraction.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MatrixSpace",
    "BasisSystem",
    "make_basis",
    "coeffs",
    "synthesize",
    "project",
    "q_beta",
    "MATERIALIZE_LIMIT",
]

#: Largest matrix order for which basis elements may be materialized.
MATERIALIZE_LIMIT = 64

_SQRT2 = np.sqrt(2.0)

# entry "parts" of entrywise basis elements
_ENTRY = 0  # e_i e_j^T  (diagonal entries of symmetric spaces too)
_SYM = 1  # (e_i e_j^T + e_j e_i^T) / sqrt(2)
_HERM_IM = 2  # sqrt(-1) (e_i e_j^T - e_j e_i^T) / sqrt(2)
_IMAG = 3  # sqrt(-1) e_i e_j^T

# 4 x 4 matrix with _PAULI[s, 2a + b] = sigma_s[a, b]
_PAULI = np.array(
    [
        [1, 0, 0, 1],
        [0, 1, 1, 0],
        [0, -1j, 1j, 0],
        [1, 0, 0, -1],
    ],
    dtype=complex,
)


@dataclass(frozen=True)
class MatrixSpace:
    """Real inner-product space of ``n1 x n2`` matrices.

    Parameters
    ----------
    n1, n2 : int
        Matrix shape.  Symmetric spaces require ``n1 == n2``.
    field : {"real", "complex"}
    symmetric : bool
        ``True`` selects S^n (real) or H^n (complex).
    """

    n1: int
    n2: int
    field: str = "real"
    symmetric: bool = False

    def __post_init__(self):
        if self.field not in ("real", "complex"):
            raise ValueError(f"field must be 'real' or 'complex', got {self.field!r}")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("matrix dimensions must be positive")
        if self.symmetric and self.n1 != self.n2:
            raise ValueError("symmetric/Hermitian spaces need n1 == n2")

    @classmethod
    def square(cls, n, complex_field=False):
        """Symmetric (or Hermitian) space of order ``n``."""
        return cls(n, n, "complex" if complex_field else "real", True)

    @classmethod
    def rectangular(cls, n1, n2, complex_field=False):
        return cls(n1, n2, "complex" if complex_field else "real", False)

    @property
    def is_complex(self):
        return self.field == "complex"

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def n(self):
        return min(self.n1, self.n2)

    @property
    def dtype(self):
        return np.complex128 if self.is_complex else np.float64

    @property
    def dim(self):
        """Real dimension of the space."""
        if self.symmetric:
            n = self.n1
            return n * n if self.is_complex else n * (n + 1) // 2
        return (2 if self.is_complex else 1) * self.n1 * self.n2

    def inner(self, X, Y):
        return float(np.real(np.vdot(X, Y)))

    def check(self, X, name="X"):
        """Return ``X`` as an array of this space, raising on shape mismatch."""
        X = np.asarray(X)
        if X.shape != self.shape:
            raise ValueError(f"{name} has shape {X.shape}, expected {self.shape}")
        if np.iscomplexobj(X) and not self.is_complex:
            if np.any(np.imag(X) != 0):
                raise ValueError(f"{name} is complex but the space is real")
            X = np.real(X)
        return X

    def zeros(self):
        return np.zeros(self.shape, dtype=self.dtype)

    def random(self, rng):
        """Gaussian element of the space (used by tests and oracles)."""
        X = rng.standard_normal(self.shape)
        if self.is_complex:
            X = X + 1j * rng.standard_normal(self.shape)
        if self.symmetric:
            X = (X + X.conj().T) / 2
        return X


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """Orthonormal basis of a :class:`MatrixSpace` with fixed indices first.

    Indices ``0 .. d1-1`` form ``alpha`` (fixed coefficients, in declaration
    order); the remaining indices form ``beta`` in row-major order.

    Use :func:`make_basis` to construct one.
    """

    space: MatrixSpace
    kind: str
    d1: int
    # entrywise layout (per basis index)
    rows: np.ndarray = field(repr=False, default=None)
    cols: np.ndarray = field(repr=False, default=None)
    parts: np.ndarray = field(repr=False, default=None)
    # pauli layout: basis index -> natural (base-4 string) index
    order: np.ndarray = field(repr=False, default=None)

    @property
    def d(self):
        return self.space.dim

    @property
    def d2(self):
        return self.d - self.d1

    @property
    def alpha(self):
        return np.arange(self.d1)

    @property
    def beta(self):
        return np.arange(self.d1, self.d)

    @property
    def is_pauli(self):
        return self.kind == "pauli"

    # -- coefficient maps ------------------------------------------------

    def coeffs(self, X, index=None):
        """``(<Theta_k, X>)_k`` over ``index`` (all indices by default)."""
        X = self.space.check(X)
        if self.is_pauli:
            full = _pauli_forward(X)[self.order]
        else:
            full = self._entry_coeffs(X)
        return full if index is None else full[_as_index(index, self.d)]

    def synthesize(self, v, index=None):
        """``sum_k v_k Theta_k`` over ``index`` (all indices by default)."""
        v = np.asarray(v, dtype=float)
        if index is None:
            if v.shape != (self.d,):
                raise ValueError(f"coefficient vector has length {v.shape}, expected {self.d}")
            full = v
        else:
            index = _as_index(index, self.d)
            if v.shape != index.shape:
                raise ValueError("coefficient vector and index set differ in length")
            full = np.zeros(self.d)
            full[index] = v
        if self.is_pauli:
            nat = np.empty(self.d)
            nat[self.order] = full
            return _pauli_inverse(nat, self.space.n1)
        return self._entry_synthesize(full)

    def project(self, X, index):
        """``P_pi(X) = sum_{k in pi} <Theta_k, X> Theta_k``."""
        index = _as_index(index, self.d)
        return self.synthesize(self.coeffs(X)[index], index)

    def q_beta(self, p, X, dagger=False):
        """Sampling-weighted projection onto span(beta).

        ``p`` is a probability vector of length ``d2`` (aligned with
        ``beta``) or ``d`` (zero on ``alpha``).  ``dagger`` selects the
        weights ``1/p_k``.
        """
        pb = self.beta_probabilities(p)
        c = self.coeffs(X)
        w = np.zeros(self.d)
        w[self.d1:] = 1.0 / pb if dagger else pb
        return self.synthesize(w * c)

    def beta_probabilities(self, p):
        p = np.asarray(p, dtype=float)
        if p.shape == (self.d,):
            if np.any(p[: self.d1] != 0):
                raise ValueError("sampling probabilities must vanish on fixed indices")
            p = p[self.d1:]
        elif p.shape != (self.d2,):
            raise ValueError(f"probability vector has length {p.shape[0]}, expected {self.d2} or {self.d}")
        if np.any(p <= 0):
            raise ValueError("sampling probabilities must be positive on beta")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("sampling probabilities must sum to one")
        return p

    # -- elements --------------------------------------------------------

    def element(self, k):
        """Basis matrix ``Theta_k``."""
        e = np.zeros(self.d)
        e[k] = 1.0
        return self.synthesize(e)

    def elements(self):
        """All basis matrices as an array of shape ``(d, n1, n2)``."""
        if max(self.space.shape) > MATERIALIZE_LIMIT:
            raise ValueError(
                f"refusing to materialize a basis of order > {MATERIALIZE_LIMIT}; "
                "use coeffs/synthesize instead"
            )
        return np.stack([self.element(k) for k in range(self.d)])

    def label(self, k):
        """Human-readable description of basis index ``k``."""
        if self.is_pauli:
            nat = int(self.order[k])
            l = int(np.log2(self.space.n1))
            digits = np.base_repr(nat, 4).rjust(l, "0") if l else ""
            return "sigma_" + digits
        names = {_ENTRY: "e", _SYM: "sym", _HERM_IM: "herm_im", _IMAG: "imag"}
        return f"{names[int(self.parts[k])]}({int(self.rows[k])},{int(self.cols[k])})"

    def second_moments(self, p):
        """``(sum p_k Theta_k Theta_k^H, sum p_k Theta_k^H Theta_k)`` over beta."""
        pb = self.beta_probabilities(p)
        n1, n2 = self.space.shape
        if self.is_pauli:
            # every normalized Pauli string satisfies Theta Theta^H = I/n
            s = pb.sum() / n1
            return s * np.eye(n1), s * np.eye(n2)
        left = np.zeros(n1)
        right = np.zeros(n2)
        r, c, t = self.rows[self.d1:], self.cols[self.d1:], self.parts[self.d1:]
        single = (t == _ENTRY) | (t == _IMAG)
        np.add.at(left, r[single], pb[single])
        np.add.at(right, c[single], pb[single])
        pair = ~single
        # (e_i e_j^T +- e_j e_i^T)/sqrt 2 squared gives (E_ii + E_jj)/2 on both sides
        for idx in (r[pair], c[pair]):
            np.add.at(left, idx, pb[pair] / 2)
            np.add.at(right, idx, pb[pair] / 2)
        return np.diag(left), np.diag(right)

    # -- entrywise internals --------------------------------------------

    def _entry_coeffs(self, X):
        r, c, t = self.rows, self.cols, self.parts
        out = np.empty(self.d)
        Xre = np.real(X)
        m = t == _ENTRY
        out[m] = Xre[r[m], c[m]]
        m = t == _SYM
        out[m] = (Xre[r[m], c[m]] + Xre[c[m], r[m]]) / _SQRT2
        if self.space.is_complex:
            Xim = np.imag(X)
            m = t == _HERM_IM
            out[m] = (Xim[r[m], c[m]] - Xim[c[m], r[m]]) / _SQRT2
            m = t == _IMAG
            out[m] = Xim[r[m], c[m]]
        return out

    def _entry_synthesize(self, v):
        r, c, t = self.rows, self.cols, self.parts
        out = self.space.zeros()
        m = t == _ENTRY
        out[r[m], c[m]] += v[m]
        m = t == _SYM
        out[r[m], c[m]] += v[m] / _SQRT2
        out[c[m], r[m]] += v[m] / _SQRT2
        if self.space.is_complex:
            m = t == _HERM_IM
            out[r[m], c[m]] += 1j * v[m] / _SQRT2
            out[c[m], r[m]] -= 1j * v[m] / _SQRT2
            m = t == _IMAG
            out[r[m], c[m]] += 1j * v[m]
        return out


def _as_index(index, d):
    index = np.asarray(index, dtype=np.intp).reshape(-1)
    if index.size and (index.min() < 0 or index.max() >= d):
        raise ValueError(f"basis index out of range [0, {d})")
    return index


# -- Pauli transforms -----------------------------------------------------


def _qubits(n):
    l = int(round(np.log2(n))) if n > 0 else -1
    if l < 1 or 2**l != n:
        raise ValueError(f"Pauli basis needs a dimension that is a power of two, got {n}")
    return l


def _pauli_forward(X):
    """Normalized Pauli coefficients ``Re tr(P_s X) / sqrt(n)`` in natural order."""
    n = X.shape[0]
    l = _qubits(n)
    # tr(P X) = sum_{a,b} P[a,b] X[b,a]; interleave (a_q, b_q) of X^T per qubit
    T = np.asarray(X, dtype=complex).T.reshape((2,) * (2 * l))
    perm = [ax for q in range(l) for ax in (q, l + q)]
    T = T.transpose(perm).reshape((4,) * l)
    for q in range(l):
        T = np.moveaxis(np.tensordot(_PAULI, T, axes=([1], [q])), 0, q)
    return np.real(T).reshape(-1) / np.sqrt(n)


def _pauli_inverse(c, n):
    """``sum_s c_s P_s / sqrt(n)`` for coefficients in natural order."""
    l = _qubits(n)
    T = np.asarray(c, dtype=complex).reshape((4,) * l)
    for q in range(l):
        T = np.moveaxis(np.tensordot(_PAULI.T, T, axes=([1], [q])), 0, q)
    T = T.reshape((2,) * (2 * l))
    perm = list(range(0, 2 * l, 2)) + list(range(1, 2 * l, 2))
    return T.transpose(perm).reshape(n, n) / np.sqrt(n)


# -- construction ----------------------------------------------------------


def _natural_entries(space):
    """Natural (row-major) ordering of an entrywise basis as (rows, cols, parts)."""
    n1, n2 = space.shape
    if space.symmetric:
        iu, ju = np.triu_indices(n1)
        if not space.is_complex:
            return iu, ju, np.where(iu == ju, _ENTRY, _SYM)
        counts = np.where(iu == ju, 1, 2)
        rows = np.repeat(iu, counts)
        cols = np.repeat(ju, counts)
        parts = np.repeat(np.where(iu == ju, _ENTRY, _SYM), counts)
        # the second element of each off-diagonal pair is the imaginary one
        second = np.zeros(rows.size, dtype=bool)
        starts = np.cumsum(counts) - counts
        second[starts[counts == 2] + 1] = True
        parts[second] = _HERM_IM
        return rows, cols, parts
    ii, jj = np.divmod(np.arange(n1 * n2), n2)
    if not space.is_complex:
        return ii, jj, np.full(ii.size, _ENTRY)
    rows = np.repeat(ii, 2)
    cols = np.repeat(jj, 2)
    parts = np.tile([_ENTRY, _IMAG], ii.size)
    return rows, cols, parts


def _fixed_natural(space, rows, cols, kind, fixed_pattern):
    """Natural indices selected by ``fixed_pattern``, in declaration order."""
    if fixed_pattern is None:
        return []
    n1, n2 = space.shape
    if isinstance(fixed_pattern, str):
        if fixed_pattern == "diagonal" and space.symmetric:
            fixed_pattern = [(i, i) for i in range(n1)]
        else:
            raise ValueError(f"unknown fixed pattern {fixed_pattern!r} for {kind}")
    lookup = {}
    for k, key in enumerate(zip(rows.tolist(), cols.tolist())):
        lookup.setdefault(key, []).append(k)
    out = []
    for entry in fixed_pattern:
        i, j = (int(x) for x in entry)
        if not (0 <= i < n1 and 0 <= j < n2):
            raise ValueError(f"fixed index {(i, j)} out of range for shape {space.shape}")
        if space.symmetric and i > j:
            i, j = j, i
        out.extend(lookup[(i, j)])
    if len(set(out)) != len(out):
        raise ValueError("fixed pattern lists an entry twice")
    return out


def make_basis(space, kind, fixed_pattern=None):
    """Build one of the standard orthonormal bases.

    Parameters
    ----------
    space : MatrixSpace
    kind : {"correlation-entrywise", "pauli", "rectangular-entrywise"}
        ``correlation-entrywise`` is the symmetric/Hermitian entry basis,
        ``pauli`` the normalized Pauli strings on H^n with ``n = 2**l``,
        ``rectangular-entrywise`` the entry basis of R^{n1 x n2} or
        C^{n1 x n2}.
    fixed_pattern : sequence of (i, j), "diagonal", "trace" or None
        Entries whose coefficients are fixed.  For symmetric spaces ``(i, j)``
        and ``(j, i)`` name the same entry, and a complex off-diagonal entry
        fixes both its real and imaginary element.  The Pauli basis fixes the
        identity element under ``"trace"`` (the default); pass ``[]`` for no
        fixed coefficients.

    Returns
    -------
    BasisSystem
    """
    if kind == "pauli":
        if not (space.symmetric and space.is_complex):
            raise ValueError("the Pauli basis lives on a Hermitian space")
        _qubits(space.n1)
        if fixed_pattern is None or fixed_pattern == "trace":
            d1 = 1
        elif len(fixed_pattern) == 0:
            d1 = 0
        else:
            raise ValueError("the Pauli basis only supports fixing the trace")
        return BasisSystem(space, kind, d1, order=np.arange(space.dim))

    if kind == "correlation-entrywise":
        if not space.symmetric:
            raise ValueError("correlation-entrywise needs a symmetric/Hermitian space")
    elif kind == "rectangular-entrywise":
        if space.symmetric:
            raise ValueError("rectangular-entrywise needs a rectangular space")
    else:
        raise ValueError(f"unknown basis kind {kind!r}")

    rows, cols, parts = _natural_entries(space)
    fixed = _fixed_natural(space, rows, cols, kind, fixed_pattern)
    free = np.setdiff1d(np.arange(rows.size), fixed, assume_unique=True)
    perm = np.concatenate([np.asarray(fixed, dtype=np.intp), free])
    return BasisSystem(
        space,
        kind,
        len(fixed),
        rows=rows[perm],
        cols=cols[perm],
        parts=parts[perm],
    )


# -- functional aliases ----------------------------------------------------


def coeffs(basis, X, index=None):
    """Coefficients ``R_pi(X)``; see :meth:`BasisSystem.coeffs`."""
    return basis.coeffs(X, index)


def synthesize(basis, v, index=None):
    """Adjoint ``R_pi^*(v)``; see :meth:`BasisSystem.synthesize`."""
    return basis.synthesize(v, index)


def project(basis, X, index):
    return basis.project(X, index)


def q_beta(basis, p, X, dagger=False):
    return basis.q_beta(p, X, dagger)
