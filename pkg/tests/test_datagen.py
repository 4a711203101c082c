import numpy as np
import pytest

from rankcorr.basis import MatrixSpace, make_basis
from rankcorr.datagen import GenSpec, GroundTruth, fidelity, gen_truth, pattern_fix, psd_sqrt, relerr, true_rank


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("kind", ["correlation", "covariance", "density"])
def test_truth_properties(kind, seed):
    n = 16 if kind == "density" else 12
    spec = GenSpec(kind, n, 3, 2.0, 2, seed)
    X = gen_truth(spec).X_bar
    assert true_rank(X) == 3
    assert np.abs(X - X.conj().T).max() == 0
    assert np.linalg.eigvalsh(X)[0] >= -1e-12
    if kind == "correlation":
        assert np.abs(np.diag(X) - 1).max() <= 1e-12
    if kind == "density":
        assert np.iscomplexobj(X)
        assert abs(np.trace(X) - 1) <= 1e-12


def test_truth_deterministic():
    spec = GenSpec("covariance", 10, 2, 3.0, 1, 5)
    assert np.array_equal(gen_truth(spec).X_bar, gen_truth(spec).X_bar)
    assert not np.array_equal(gen_truth(spec).X_bar, gen_truth(GenSpec("covariance", 10, 2, 3.0, 1, 6)).X_bar)


def test_weight_boosts_leading_eigenvalue():
    def ratio(weight):
        vals = []
        for seed in range(30):
            lam = np.linalg.eigvalsh(gen_truth(GenSpec("covariance", 60, 4, weight, 1, seed)).X_bar)[::-1]
            vals.append(lam[0] / lam[1])
        return np.median(vals)

    unweighted = ratio(1.0)
    assert unweighted < 2.5
    assert ratio(5.0) > 5 * unweighted


def test_spec_validation():
    with pytest.raises(ValueError):
        GenSpec("density", 12, 2)
    with pytest.raises(ValueError):
        GenSpec("covariance", 5, 2, k=3)
    with pytest.raises(ValueError):
        GenSpec("covariance", 5, 2, weight=0.5)
    with pytest.raises(ValueError):
        GenSpec("market", 5, 2)


def test_fixed_values_from_basis():
    basis = make_basis(MatrixSpace.square(6), "correlation-entrywise", "diagonal")
    truth = gen_truth(GenSpec("correlation", 6, 2, seed=1), basis)
    assert np.allclose(truth.fixed_values, 1.0, atol=1e-12)


def test_dump_and_load(tmp_path):
    for kind, n in (("covariance", 6), ("density", 8)):
        truth = gen_truth(GenSpec(kind, n, 2, 2.0, 1, 3))
        paths = truth.dump(tmp_path / kind)
        assert len(paths) == (3 if kind == "density" else 2)
        back = GroundTruth.load(tmp_path / kind)
        assert np.array_equal(back.X_bar, truth.X_bar)
        assert back.spec == truth.spec


def test_relerr_examples():
    X = np.random.default_rng(0).standard_normal((3, 3))
    assert relerr(X, X) == 0
    assert abs(relerr(2 * X, X) - 1) < 1e-15
    E = np.zeros((2, 2))
    E[0, 0] = 1e-8
    assert relerr(E, np.zeros((2, 2))) == 1.0


def test_fidelity_examples():
    truth = gen_truth(GenSpec("density", 8, 2, seed=2)).X_bar
    assert abs(fidelity(truth, truth) - 1) < 1e-10
    e0, e1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    assert fidelity(e0, e1) < 1e-20
    p, q = np.array([0.5, 0.3, 0.2]), np.array([0.1, 0.6, 0.3])
    assert abs(fidelity(np.diag(p), np.diag(q)) - np.sum(np.sqrt(p * q)) ** 2) < 1e-12


def test_fidelity_symmetric_and_bounded():
    rng = np.random.default_rng(3)
    for _ in range(10):
        A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        B = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
        X, Y = A @ A.conj().T, B @ B.conj().T
        X, Y = X / np.trace(X).real, Y / np.trace(Y).real
        f = fidelity(X, Y)
        assert abs(f - fidelity(Y, X)) < 1e-10
        assert -1e-9 <= f <= 1 + 1e-9


def test_psd_sqrt():
    assert np.allclose(psd_sqrt(np.diag([4.0, -1e-12])), np.diag([2.0, 0.0]))
    with pytest.raises(ValueError):
        psd_sqrt(np.diag([1.0, -0.1]))


def test_pattern_fix():
    full = pattern_fix("correlation", 5, 5, 0, 0)
    assert full == [(i, i) for i in range(5)]
    assert pattern_fix("covariance", 5, 0, 0, 0) == []
    pat = pattern_fix("covariance", 6, 2, 3, 7)
    assert pat == pattern_fix("covariance", 6, 2, 3, 7)
    assert sum(i == j for i, j in pat) == 2 and sum(i < j for i, j in pat) == 3
    with pytest.raises(ValueError):
        pattern_fix("covariance", 4, 5, 0, 0)
    with pytest.raises(ValueError):
        pattern_fix("covariance", 4, 0, 7, 0)
    with pytest.raises(ValueError):
        pattern_fix("density", 4, 1, 0, 0)
