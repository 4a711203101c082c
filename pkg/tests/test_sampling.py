import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rankcorr.basis import MatrixSpace, make_basis
from rankcorr.sampling import (
    ObservationSet,
    SamplingScheme,
    adjoint_sampling,
    apply_sampling,
    depolarize,
    derive_seed,
    observe,
    observe_at_level,
    sample_indices,
)


@pytest.fixture
def corr_basis():
    return make_basis(MatrixSpace.square(5), "correlation-entrywise", "diagonal")


def test_multiplicity_concentration():
    # d2 = 3 free coefficients
    b = make_basis(MatrixSpace.square(2, True), "pauli")
    scheme = SamplingScheme.uniform(b)
    for seed in range(100):
        s = sample_indices(scheme, 3000, seed)
        mult = s.multiplicity[b.d1:]
        assert mult.sum() == 3000
        assert mult.min() >= 800 and mult.max() <= 1200


def test_sample_errors(corr_basis):
    scheme = SamplingScheme.uniform(corr_basis)
    with pytest.raises(ValueError):
        sample_indices(scheme, 0, 1)
    full = make_basis(MatrixSpace.square(1), "correlation-entrywise", "diagonal")
    with pytest.raises(ValueError):
        SamplingScheme.uniform(full)
    with pytest.raises(ValueError):
        SamplingScheme(corr_basis, np.ones(corr_basis.d2))


def test_same_seed_same_omega(corr_basis):
    scheme = SamplingScheme.uniform(corr_basis)
    a, b = sample_indices(scheme, 50, 7), sample_indices(scheme, 50, 7)
    assert np.array_equal(a.omega, b.omega)
    assert not np.array_equal(a.omega, sample_indices(scheme, 50, 8).omega)
    assert derive_seed(3, 1) == derive_seed(3, 1) != derive_seed(3, 2)


def test_noiseless_observations(corr_basis):
    rng = np.random.default_rng(0)
    X = corr_basis.space.random(rng)
    s = sample_indices(SamplingScheme.uniform(corr_basis), 40, 1)
    obs = observe(X, s, 0.0, rng_seed=2)
    assert np.array_equal(obs.y, corr_basis.coeffs(X)[s.omega])


def test_pure_noise_moments(corr_basis):
    s = sample_indices(SamplingScheme.uniform(corr_basis), 200_000, 3)
    obs = observe(np.zeros((5, 5)), s, 1.0, rng_seed=4)
    assert abs(obs.y.mean()) < 0.01
    assert abs(obs.y.var() - 1) < 0.01


def test_noise_reproducible(corr_basis):
    rng = np.random.default_rng(0)
    X = corr_basis.space.random(rng)
    s = sample_indices(SamplingScheme.uniform(corr_basis), 30, 1)
    a, b = observe(X, s, 0.3, rng_seed=9), observe(X, s, 0.3, rng_seed=9)
    assert np.array_equal(a.y, b.y) and np.array_equal(a.sums, b.sums)


def test_noise_level_is_exact(corr_basis):
    rng = np.random.default_rng(1)
    X = corr_basis.space.random(rng)
    s = sample_indices(SamplingScheme.uniform(corr_basis), 60, 1)
    obs = observe_at_level(X, s, 0.1, rng_seed=5)
    clean = apply_sampling(X, s)
    assert abs(np.linalg.norm(obs.y - clean) / np.linalg.norm(clean) - 0.1) < 1e-12


def test_custom_noise(corr_basis):
    def rademacher(rng, m):
        return rng.choice([-1.0, 1.0], size=m)

    s = sample_indices(SamplingScheme.uniform(corr_basis), 20, 1)
    obs = observe(np.zeros((5, 5)), s, 0.5, noise_kind=rademacher, rng_seed=1)
    assert obs.noise_kind == "rademacher"
    assert np.allclose(np.abs(obs.y), 0.5)
    with pytest.raises(ValueError):
        observe(np.zeros((5, 5)), s, 0.5, noise_kind="laplace")


def test_multiplicity_counting(corr_basis):
    rng = np.random.default_rng(2)
    X = corr_basis.space.random(rng)
    s = sample_indices(SamplingScheme.uniform(corr_basis), 25, 6)
    lhs = corr_basis.coeffs(adjoint_sampling(apply_sampling(X, s), s)) / s.m
    rhs = s.multiplicity / s.m * corr_basis.coeffs(X)
    assert np.abs(lhs - rhs).max() < 1e-12


def test_gradient_identity(corr_basis):
    rng = np.random.default_rng(3)
    X, Xbar = corr_basis.space.random(rng), corr_basis.space.random(rng)
    s = sample_indices(SamplingScheme.uniform(corr_basis), 40, 1)
    obs = observe(Xbar, s, 0.2, rng_seed=2)
    grad = adjoint_sampling(apply_sampling(X, s) - obs.y, s) / s.m
    x = corr_basis.coeffs(X)
    coef = (s.multiplicity * x - obs.sums) / s.m
    assert np.abs(corr_basis.coeffs(grad) - coef).max() < 1e-12


def test_law_of_large_numbers(corr_basis):
    rng = np.random.default_rng(4)
    X = corr_basis.space.random(rng)
    scheme = SamplingScheme.uniform(corr_basis)
    s = sample_indices(scheme, 100_000, 1)
    emp = adjoint_sampling(apply_sampling(X, s), s) / s.m
    Q = corr_basis.q_beta(scheme.p, X)
    assert np.linalg.norm(emp - Q) <= 0.05 * np.linalg.norm(Q)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_linearity_and_adjoint(seed):
    rng = np.random.default_rng(seed)
    b = make_basis(MatrixSpace.square(2 ** (1 + seed % 3), True), "pauli") if seed % 2 else make_basis(
        MatrixSpace.rectangular(3, 4), "rectangular-entrywise", [(0, 0)]
    )
    s = sample_indices(SamplingScheme.uniform(b), 17, seed)
    X, Y = b.space.random(rng), b.space.random(rng)
    a, c = rng.standard_normal(2)
    lhs = apply_sampling(a * X + c * Y, s)
    assert np.abs(lhs - a * apply_sampling(X, s) - c * apply_sampling(Y, s)).max() < 1e-12
    v = rng.standard_normal(s.m)
    assert abs(b.space.inner(adjoint_sampling(v, s), X) - v @ apply_sampling(X, s)) < 1e-12 * max(
        1.0, np.linalg.norm(v) * np.linalg.norm(X)
    )


def test_depolarize():
    X = np.diag([1.0, 0.0])
    assert np.array_equal(depolarize(X, 0.0), X)
    assert np.allclose(depolarize(X, 1.0), np.eye(2) / 2)
    assert np.allclose(depolarize(X, 0.5), np.diag([0.75, 0.25]))
    with pytest.raises(ValueError):
        depolarize(X, 1.5)


def test_csv_roundtrip(tmp_path, corr_basis):
    rng = np.random.default_rng(5)
    s = sample_indices(SamplingScheme.uniform(corr_basis), 12, 2)
    obs = observe(corr_basis.space.random(rng), s, 0.1, rng_seed=3)
    path = tmp_path / "obs.csv"
    obs.to_csv(path)
    head = path.read_text().splitlines()
    assert head[0].startswith("# m=12")
    assert "sample_index,basis_index,y_value" in head
    back = ObservationSet.from_csv(path, corr_basis)
    assert np.array_equal(back.samples.omega, s.omega)
    assert np.array_equal(back.y, obs.y)
    assert back.nu == obs.nu
