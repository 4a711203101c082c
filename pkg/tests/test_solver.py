import json
from pathlib import Path

import numpy as np
import pytest

from instances import N_TINY, tiny_problem
from rankcorr.basis import MatrixSpace, make_basis
from rankcorr.diagnostics import tangent_projections
from rankcorr.sampling import ObservationSet, SampleSet, SamplingScheme, observe, sample_indices
from rankcorr.solver import (
    RcsProblem,
    SolverConfig,
    check_optimality,
    nuclear_norm,
    objective_value,
    psd_prox,
    solve,
    svt,
    x_update,
)
from rankcorr.spectral import RankCorrectionFn, correction_matrix

GOLDENS = {row["seed"]: row for row in json.loads((Path(__file__).parent / "goldens" / "tiny_oracle.json").read_text())["instances"]}


@pytest.fixture(scope="module")
def tiny_solutions():
    out = {}
    for seed in range(N_TINY):
        problem = tiny_problem(seed)
        out[seed] = (problem, solve(problem))
    return out


# -- proximal maps ----------------------------------------------------------------


def test_svt_examples():
    assert np.allclose(svt(np.diag([3.0, 1.0]), 2.0), np.diag([1.0, 0.0]))
    X = np.random.default_rng(0).standard_normal((4, 3))
    assert np.allclose(svt(X, 0.0), X)
    with pytest.raises(ValueError):
        svt(X, -1.0)


@pytest.mark.parametrize("seed", range(5))
def test_svt_subgradient_condition(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((5, 4))
    t = float(np.median(np.linalg.svd(X, compute_uv=False)))
    Z = svt(X, t, hermitian=False)
    r = np.linalg.matrix_rank(Z, tol=1e-10)
    ts = tangent_projections(Z, r)
    D = X - Z
    assert np.linalg.norm(ts.P_Tperp(D), 2) <= t + 1e-9
    assert np.abs(ts.P_T(D) - t * ts.UV).max() < 1e-10


def test_psd_prox_examples():
    assert np.allclose(psd_prox(np.diag([2.0, -1.0]), 0.5), np.diag([1.5, 0.0]))
    M = np.random.default_rng(1).standard_normal((4, 4))
    P = M @ M.T
    assert np.allclose(psd_prox(P, 0.0), P)
    with pytest.raises(ValueError):
        psd_prox(M, 0.1)


@pytest.mark.parametrize("n", [5, 60])
def test_psd_prox_output_psd(n):
    rng = np.random.default_rng(n)
    for _ in range(5):
        A = rng.standard_normal((n, n))
        Z = psd_prox(A + A.T, 0.3)
        assert np.linalg.eigvalsh(Z)[0] >= -1e-10
        # matches the full eigendecomposition formula
        lam, P = np.linalg.eigh(A + A.T)
        assert np.abs(Z - (P * np.maximum(lam - 0.3, 0)) @ P.T).max() < 1e-10


# -- smooth block -----------------------------------------------------------------


def _problem(seed=0, rho=0.1, gamma=0.0, bound=None):
    rng = np.random.default_rng(seed)
    basis = make_basis(MatrixSpace.square(4), "correlation-entrywise", "diagonal")
    X_bar = basis.space.random(rng)
    obs = observe(X_bar, sample_indices(SamplingScheme.uniform(basis), 5, seed), 0.1, rng_seed=seed)
    corr = correction_matrix(X_bar, RankCorrectionFn.phi_family(), gamma=gamma)
    return RcsProblem(obs, rho, corr, basis.coeffs(X_bar)[: basis.d1], False, bound)


def test_x_update_unobserved_index():
    p = _problem()
    basis = p.basis
    unobserved = np.flatnonzero(p.observations.samples.multiplicity == 0)
    unobserved = unobserved[unobserved >= basis.d1]
    assert unobserved.size
    v = np.random.default_rng(2).standard_normal(basis.d)
    sigma = 0.7
    x = x_update(p, v, sigma)
    g = basis.coeffs(p.G)
    k = unobserved
    assert np.allclose(x[k], (p.rho * g[k] + sigma * v[k]) / sigma)
    assert np.array_equal(x[: basis.d1], p.fixed_values)


def test_x_update_large_sigma():
    p = _problem(gamma=0.2)
    v = np.random.default_rng(3).standard_normal(p.basis.d)
    x = x_update(p, v, 1e12)
    assert np.abs(x[p.basis.d1:] - v[p.basis.d1:]).max() < 1e-10


def test_x_update_block_stationarity():
    p = _problem(gamma=0.3)
    basis = p.basis
    obs = p.observations
    v = np.random.default_rng(4).standard_normal(basis.d)
    sigma = 0.5
    f = basis.coeffs(p.F)
    xt = basis.coeffs(p.X_tilde)

    def block(x):
        r = obs.y - x[obs.samples.omega]
        return (
            r @ r / (2 * obs.m)
            - p.rho * f @ x
            + p.rho * p.gamma / 2 * np.sum((x - xt) ** 2)
            + sigma / 2 * np.sum((x - v) ** 2)
        )

    x = x_update(p, v, sigma)
    h = 1e-6
    for k in range(basis.d1, basis.d):
        e = np.zeros(basis.d)
        e[k] = h
        assert abs((block(x + e) - block(x - e)) / (2 * h)) < 1e-8


def test_x_update_clamps_bound():
    p = _problem(bound=0.01)
    x = x_update(p, 10 * np.ones(p.basis.d), 1.0)
    assert np.abs(x[p.basis.d1:]).max() <= 0.01


# -- objective --------------------------------------------------------------------


def test_objective_at_anchor():
    p = _problem(gamma=0.5)
    X = p.X_tilde
    obs = p.observations
    r = obs.y - p.basis.coeffs(X)[obs.samples.omega]
    expected = r @ r / (2 * obs.m) + p.rho * (nuclear_norm(X) - np.sum(p.F * X))
    assert abs(objective_value(X, p) - expected) < 1e-12


def test_objective_reimplementation():
    rng = np.random.default_rng(5)
    for seed in range(N_TINY):
        p = tiny_problem(seed)
        X = p.space.random(rng)
        if p.psd:
            X = X @ X.conj().T
        E = p.basis.elements()
        coeffs = np.real(np.einsum("kij,ij->k", E.conj(), X))
        r = p.observations.y - coeffs[p.observations.samples.omega]
        pen = np.real(np.trace(X)) if p.psd else np.linalg.svd(X, compute_uv=False).sum()
        pen -= np.real(np.vdot(p.F, X))
        pen += p.gamma / 2 * np.linalg.norm(X - p.X_tilde) ** 2
        expected = r @ r / (2 * p.observations.m) + p.rho * pen
        assert abs(objective_value(X, p) - expected) < 1e-12 * max(1.0, abs(expected))


def test_objective_without_correction():
    p = _problem()
    q = RcsProblem(p.observations, p.rho, None, p.fixed_values)
    X = p.space.random(np.random.default_rng(6))
    obs = p.observations
    r = obs.y - p.basis.coeffs(X)[obs.samples.omega]
    assert abs(objective_value(X, q) - (r @ r / (2 * obs.m) + p.rho * nuclear_norm(X))) < 1e-12


# -- solver -----------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(N_TINY))
def test_matches_frozen_reference(tiny_solutions, seed):
    problem, res = tiny_solutions[seed]
    gold = GOLDENS[seed]
    assert abs(res.objective - gold["objective"]) <= 1e-6
    assert abs(np.linalg.norm(res.X_hat) - gold["fro_norm"]) <= 1e-5


@pytest.mark.parametrize("seed", range(N_TINY))
def test_feasibility(tiny_solutions, seed):
    problem, res = tiny_solutions[seed]
    x = problem.basis.coeffs(res.X_hat)
    if problem.fixed_values is not None:
        assert np.abs(x[: problem.basis.d1] - problem.fixed_values).max() <= 1e-9
    if problem.bound_c is not None:
        assert np.abs(x[problem.basis.d1:]).max() <= problem.bound_c + 1e-9
    if problem.psd:
        assert np.linalg.eigvalsh(res.X_hat)[0] >= -1e-9
    assert res.converged


@pytest.mark.parametrize("seed", range(N_TINY))
def test_certificate_passes_at_solution(tiny_solutions, seed):
    problem, res = tiny_solutions[seed]
    assert check_optimality(res.X_hat, problem, tol=1e-6).passed


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_certificate_fails_off_solution(tiny_solutions, seed):
    problem, res = tiny_solutions[seed]
    rng = np.random.default_rng(seed)
    D = problem.space.random(rng)
    D = problem.basis.project(D, problem.basis.beta)
    if problem.psd:
        D = D + D.conj().T
    bad = res.X_hat + 0.5 * D / np.linalg.norm(D)
    if problem.psd:
        bad = bad + abs(min(0.0, np.linalg.eigvalsh(bad)[0])) * np.eye(problem.space.n1)
    assert not check_optimality(bad, problem, tol=1e-6).passed


def test_nnpls_subgradient_norm(tiny_solutions):
    for seed in (0, 3, 4, 7):
        problem = tiny_solutions[seed][0]
        q = RcsProblem(problem.observations, problem.rho, None, problem.fixed_values, False, problem.bound_c)
        out = solve(q)
        W = out.subgradient
        if out.numerical_rank:
            W = tangent_projections(out.Z, out.numerical_rank).P_Tperp(W)
        assert np.linalg.norm(W, 2) <= 1 + 1e-8


def test_best_objective_monotone(tiny_solutions):
    for seed in range(N_TINY):
        best = tiny_solutions[seed][1].best_objective
        assert np.all(np.diff(best) <= 0)


def test_fully_observed_noiseless_limit():
    rng = np.random.default_rng(7)
    basis = make_basis(MatrixSpace.rectangular(4, 5), "rectangular-entrywise", [(0, 0)])
    X_bar = rng.standard_normal((4, 2)) @ rng.standard_normal((2, 5))
    samples = SampleSet(basis, basis.beta.copy())
    obs = ObservationSet(samples, basis.coeffs(X_bar)[basis.beta], 0.0)
    p = RcsProblem(obs, 1e-8, None, basis.coeffs(X_bar)[: basis.d1])
    res = solve(p, SolverConfig(max_iter=5000))
    assert np.linalg.norm(res.X_hat - X_bar) / np.linalg.norm(X_bar) <= 1e-4


def test_psd_large_rho_gives_min_trace_point():
    # only the off-diagonal entry is fixed; the cheapest PSD completion is a|[[1,1],[1,1]]|
    basis = make_basis(MatrixSpace.square(2), "correlation-entrywise", [(0, 1)])
    a = 0.4
    X_bar = np.array([[1.0, a], [a, 2.0]])
    samples = SampleSet(basis, basis.beta.copy())
    obs = ObservationSet(samples, basis.coeffs(X_bar)[basis.beta], 0.0)
    p = RcsProblem(obs, 1e6, None, basis.coeffs(X_bar)[: basis.d1], psd=True)
    res = solve(p, SolverConfig(max_iter=5000))
    assert np.abs(res.X_hat - a * np.ones((2, 2))).max() < 1e-5
    assert res.numerical_rank == 1


def test_warm_start_reaches_same_solution(tiny_solutions):
    for seed in (1, 4):
        problem, res = tiny_solutions[seed]
        q = problem.with_rho(1.3 * problem.rho)
        cold, warm = solve(q), solve(q, warm=res)
        assert abs(cold.objective - warm.objective) < 1e-7


def test_iteration_limit_flag():
    p = tiny_problem(1)
    res = solve(p, SolverConfig(max_iter=3, history_every=1))
    assert not res.converged
    assert res.iterations == 3
    assert np.isfinite(res.objective)


def test_invalid_problems():
    p = _problem()
    with pytest.raises(ValueError):
        RcsProblem(p.observations, 0.0)
    with pytest.raises(ValueError):
        RcsProblem(p.observations, 0.1, None, np.zeros(2))
    with pytest.raises(ValueError):
        RcsProblem(p.observations, 0.1, None, None, False, -1.0)
    rect = make_basis(MatrixSpace.rectangular(2, 3), "rectangular-entrywise", [])
    obs = observe(np.zeros((2, 3)), sample_indices(SamplingScheme.uniform(rect), 4, 0), 0.0)
    with pytest.raises(ValueError):
        RcsProblem(obs, 0.1, psd=True)
    with pytest.raises(ValueError):
        SolverConfig(relaxation=2.0)
    with pytest.raises(ValueError):
        SolverConfig(max_iter=0)
