"""Weighted sampling with replacement, noisy coefficient observations and the
sampling operator ``R_Omega``."""

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RNG_ALGORITHM",
    "SamplingScheme",
    "SampleSet",
    "ObservationSet",
    "derive_seed",
    "sample_indices",
    "observe",
    "observe_at_level",
    "apply_sampling",
    "adjoint_sampling",
    "depolarize",
]

#: Recorded in run metadata so that stored goldens can be traced to the generator.
RNG_ALGORITHM = "numpy.random.PCG64"


def derive_seed(seed, *keys):
    """Independent child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass(frozen=True, eq=False)
class SamplingScheme:
    """Distribution over basis indices: zero on ``alpha``, ``p`` on ``beta``."""

    basis: object
    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", self.basis.beta_probabilities(self.p))

    @classmethod
    def uniform(cls, basis):
        if basis.d2 == 0:
            raise ValueError("no free coefficients to sample")
        return cls(basis, np.full(basis.d2, 1.0 / basis.d2))

    @property
    def full_p(self):
        """Probabilities over all ``d`` indices."""
        out = np.zeros(self.basis.d)
        out[self.basis.d1:] = self.p
        return out


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Multiset ``Omega`` of sampled basis indices."""

    basis: object
    omega: np.ndarray
    multiplicity: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=np.intp)
        if omega.ndim != 1:
            raise ValueError("omega must be one-dimensional")
        if omega.size and (omega.min() < self.basis.d1 or omega.max() >= self.basis.d):
            raise ValueError("sampled indices must lie in beta")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "multiplicity", np.bincount(omega, minlength=self.basis.d))

    @property
    def m(self):
        return self.omega.size


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observations ``y = R_Omega(X) + nu * xi`` aggregated per basis index.

    ``sums[k]`` is the sum of all observations of coefficient ``k``; together
    with ``samples.multiplicity`` it is all the solver needs.
    """

    samples: SampleSet
    y: np.ndarray
    nu: float
    noise_kind: str = "gaussian"
    seed: object = None
    sums: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        if y.shape != (self.samples.m,):
            raise ValueError(f"y has shape {y.shape}, expected ({self.samples.m},)")
        if self.nu < 0:
            raise ValueError("noise magnitude must be nonnegative")
        object.__setattr__(self, "y", y)
        sums = np.bincount(self.samples.omega, weights=y, minlength=self.samples.basis.d)
        object.__setattr__(self, "sums", sums)

    @property
    def m(self):
        return self.samples.m

    @property
    def basis(self):
        return self.samples.basis

    def residual(self, X):
        """``y - R_Omega(X)``."""
        return self.y - apply_sampling(X, self.samples)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# m={self.m}\n# nu={self.nu!r}\n# seed={self.seed}\n")
            fh.write(f"# noise_kind={self.noise_kind}\n# rng={RNG_ALGORITHM}\n")
            w = csv.writer(fh)
            w.writerow(["sample_index", "basis_index", "y_value"])
            for i, (k, v) in enumerate(zip(self.samples.omega.tolist(), self.y.tolist())):
                w.writerow([i, k, repr(v)])

    @classmethod
    def from_csv(cls, path, basis):
        meta = {}
        omega, y = [], []
        with open(path, newline="") as fh:
            lines = []
            for line in fh:
                if line.startswith("#"):
                    key, _, value = line[1:].strip().partition("=")
                    meta[key.strip()] = value.strip()
                else:
                    lines.append(line)
        reader = csv.DictReader(lines)
        for row in reader:
            omega.append(int(row["basis_index"]))
            y.append(float(row["y_value"]))
        if int(meta.get("m", len(y))) != len(y):
            raise ValueError("row count does not match the m header")
        seed = meta.get("seed")
        seed = None if seed in (None, "None") else int(seed)
        return cls(
            SampleSet(basis, np.array(omega, dtype=np.intp)),
            np.array(y),
            float(meta.get("nu", 0.0)),
            meta.get("noise_kind", "gaussian"),
            seed,
        )


def sample_indices(scheme, m, rng_seed):
    """Draw ``m`` i.i.d. indices from ``scheme``."""
    if m < 1:
        raise ValueError("need at least one sample")
    if scheme.basis.d2 == 0:
        raise ValueError("no free coefficients to sample")
    rng = np.random.default_rng(rng_seed)
    draws = rng.choice(scheme.basis.d2, size=int(m), p=scheme.p)
    return SampleSet(scheme.basis, scheme.basis.d1 + draws)


def _draw_noise(noise_kind, rng, m):
    if noise_kind == "gaussian":
        return rng.standard_normal(m), "gaussian"
    if callable(noise_kind):
        xi = np.asarray(noise_kind(rng, m), dtype=float)
        if xi.shape != (m,):
            raise ValueError("custom noise must return a length-m vector")
        return xi, getattr(noise_kind, "__name__", "custom")
    raise ValueError(f"unknown noise kind {noise_kind!r}")


def observe(X, samples, nu, noise_kind="gaussian", rng_seed=None):
    """Noisy observations ``y_i = <Theta_{omega_i}, X> + nu * xi_i``.

    ``noise_kind`` is ``"gaussian"`` or a callable ``(rng, m) -> xi`` whose
    draws have mean zero and unit variance.
    """
    if nu < 0:
        raise ValueError("noise magnitude must be nonnegative")
    clean = apply_sampling(X, samples)
    rng = np.random.default_rng(rng_seed)
    xi, name = _draw_noise(noise_kind, rng, samples.m)
    return ObservationSet(samples, clean + nu * xi, float(nu), name, rng_seed)


def observe_at_level(X, samples, level, noise_kind="gaussian", rng_seed=None, reference=None):
    """Observations whose relative noise ``||y - R(ref)|| / ||R(ref)||`` is ``level``.

    ``nu`` is set from the realized draw.  ``reference`` (default ``X``)
    is the matrix the level is measured against, which lets a depolarized
    state be observed while the level refers to the original one.
    """
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    clean = apply_sampling(X, samples)
    ref = clean if reference is None else apply_sampling(reference, samples)
    rng = np.random.default_rng(rng_seed)
    xi, name = _draw_noise(noise_kind, rng, samples.m)
    nxi = np.linalg.norm(xi)
    nu = 0.0 if nxi == 0 else level * np.linalg.norm(ref) / nxi
    return ObservationSet(samples, clean + nu * xi, float(nu), name, rng_seed)


def apply_sampling(X, samples):
    """``R_Omega(X) = (<Theta_{omega_i}, X>)_i``."""
    return samples.basis.coeffs(X)[samples.omega]


def adjoint_sampling(v, samples):
    """``R_Omega^*(v) = sum_i v_i Theta_{omega_i}``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (samples.m,):
        raise ValueError(f"vector has shape {v.shape}, expected ({samples.m},)")
    c = np.bincount(samples.omega, weights=v, minlength=samples.basis.d)
    return samples.basis.synthesize(c)


def depolarize(X, strength):
    """Depolarizing channel ``(1 - p) X + p I / n``."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError("depolarizing strength must lie in [0, 1]")
    X = np.asarray(X)
    n = X.shape[0]
    return (1.0 - strength) * X + strength * np.eye(n) / n
