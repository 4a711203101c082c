"""Experiment orchestration: instances, rho sweeps, bisection and chains."""

import configparser
import csv
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .basis import MatrixSpace, make_basis
from .datagen import GenSpec, fidelity, gen_truth, pattern_fix, relerr
from .diagnostics import compute_am_bm, tangent_projections
from .sampling import (
    SamplingScheme,
    adjoint_sampling,
    depolarize,
    derive_seed,
    observe_at_level,
    sample_indices,
)
from .solver import RcsProblem, SolverConfig, objective_value, solve
from .spectral import RankCorrectionFn, correction_matrix

__all__ = [
    "ConfigError",
    "PlateauError",
    "RunConfig",
    "Instance",
    "RunRecord",
    "CSV_COLUMNS",
    "build_instance",
    "rho_grid",
    "solve_stage",
    "run_sweep",
    "trace_pinned",
    "pick_initial",
    "bisect_step",
    "bisect_rho",
    "run_chain",
    "write_csv",
    "parse_fn",
    "read_csv",
    "markdown_table",
]

CSV_COLUMNS = ("stage", "rho", "gamma", "relerr", "rank", "fidelity", "a_m", "b_m", "iterations", "seconds")


class ConfigError(ValueError):
    """Invalid run configuration."""


class PlateauError(RuntimeError):
    """No rank plateau could be bracketed on the scanned rho range."""


def parse_fn(text):
    """``zero``, ``known-rank:r`` or ``phi:tau:eps`` into a :class:`RankCorrectionFn`."""
    parts = text.strip().split(":")
    try:
        if parts[0] == "zero":
            return RankCorrectionFn.zero()
        if parts[0] == "known-rank":
            return RankCorrectionFn.known_rank(int(parts[1]))
        if parts[0] == "phi":
            tau = float(parts[1]) if len(parts) > 1 else 2.0
            eps = float(parts[2]) if len(parts) > 2 else 0.02
            return RankCorrectionFn.phi_family(tau, eps)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad correction function {text!r}: {exc}") from exc
    raise ConfigError(f"unknown correction function {text!r}")


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one experiment.

    ``chain`` lists the stages: ``nnpls`` (or ``nnpls1`` for the
    unconstrained-trace variant), followed by ``rcs`` steps.  ``corrections``
    gives the spectral function for each ``rcs`` step (the last entry is
    reused when the chain is longer).
    """

    kind: str = "correlation"
    n: int = 40
    r: int = 3
    weight: float = 1.0
    k: int = 1
    diag_count: int = -1  # -1: every diagonal entry
    offdiag_count: int = 0
    fix_trace: bool = True
    sample_ratio: float = 0.2
    m: int = 0  # overrides sample_ratio when positive
    noise_level: float = 0.1
    depolarize: float = 0.0
    chain: tuple = ("nnpls", "rcs")
    corrections: tuple = ("phi:2:0.02",)
    n_rho: int = 40
    rho_lo: float = 1e-4
    rho_hi: float = 1.0
    bisect_width: float = 1e-2
    target_ratio: float = 0.1
    kappa: float = 2.0
    gamma: float = 0.0
    psd: bool = True
    max_iter: int = 2000
    tol: float = 1e-5
    seed: int = 0
    timing: bool = False

    def __post_init__(self):
        if self.kind not in ("correlation", "covariance", "density"):
            raise ConfigError(f"unknown kind {self.kind!r}")
        if self.n < 1 or not 1 <= self.k <= self.r <= self.n:
            raise ConfigError("need n >= 1 and 1 <= k <= r <= n")
        if self.kind == "density" and self.n & (self.n - 1):
            raise ConfigError("density experiments need n = 2**l")
        if self.m <= 0 and not 0 < self.sample_ratio <= 1:
            raise ConfigError("sample_ratio must lie in (0, 1]")
        if self.noise_level < 0 or not 0 <= self.depolarize <= 1:
            raise ConfigError("noise level must be >= 0 and depolarize in [0, 1]")
        if not self.chain:
            raise ConfigError("chain must contain at least one stage")
        if self.chain[0] not in ("nnpls", "nnpls1"):
            raise ConfigError("the chain must start with nnpls or nnpls1")
        if any(s != "rcs" for s in self.chain[1:]):
            raise ConfigError("stages after the first must be rcs")
        if self.n_rho < 1 or not 0 < self.rho_lo < self.rho_hi:
            raise ConfigError("need n_rho >= 1 and 0 < rho_lo < rho_hi")
        if self.kappa <= 1 or self.gamma < 0 or self.bisect_width <= 0:
            raise ConfigError("need kappa > 1, gamma >= 0 and bisect_width > 0")
        if self.max_iter < 1 or self.tol <= 0:
            raise ConfigError("need max_iter >= 1 and tol > 0")
        for text in self.corrections:
            parse_fn(text)

    @property
    def gen_spec(self):
        return GenSpec(self.kind, self.n, self.r, self.weight, self.k, derive_seed(self.seed, 1))

    @property
    def solver_config(self):
        return SolverConfig(max_iter=self.max_iter, tol_primal=self.tol, tol_dual=self.tol)

    def correction_fn(self, step):
        """Spectral function for RCS step ``step`` (0-based)."""
        return parse_fn(self.corrections[min(step, len(self.corrections) - 1)])

    # -- INI round trip ------------------------------------------------------

    @classmethod
    def from_ini(cls, path, section="run", **overrides):
        parser = configparser.ConfigParser()
        try:
            if not parser.read(path):
                raise ConfigError(f"cannot read config file {path}")
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if not parser.has_section(section):
            raise ConfigError(f"config file has no [{section}] section")
        return cls.from_mapping(dict(parser.items(section)), **overrides)

    @classmethod
    def from_mapping(cls, raw, **overrides):
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _convert(known[key], value)
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_ini(self, path, section="run"):
        parser = configparser.ConfigParser()
        parser[section] = {f.name: _format(getattr(self, f.name)) for f in fields(self)}
        with open(path, "w") as fh:
            parser.write(fh)


def _convert(f, value):
    default = f.default
    try:
        if isinstance(default, bool):
            low = str(value).strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(f"not a boolean: {value!r}")
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            return tuple(s.strip() for s in str(value).split(",") if s.strip())
        return str(value).strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {f.name}: {exc}") from exc


def _format(value):
    if isinstance(value, tuple):
        return ",".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# -- instances ------------------------------------------------------------------------


@dataclass(eq=False)
class Instance:
    config: RunConfig
    truth: object
    basis: object
    scheme: object
    observations: object
    tangent: object
    rho_scale: float

    @property
    def X_bar(self):
        return self.truth.X_bar

    @property
    def fixed_values(self):
        return self.truth.fixed_values

    def residual_ratio(self, X):
        obs = self.observations
        return float(np.linalg.norm(obs.residual(X)) / np.linalg.norm(obs.y))


def build_instance(cfg):
    """Ground truth, basis, sampled noisy observations and tangent space."""
    if cfg.kind == "density":
        space = MatrixSpace.square(cfg.n, complex_field=True)
        basis = make_basis(space, "pauli", "trace" if cfg.fix_trace else [])
    else:
        space = MatrixSpace.square(cfg.n)
        diag = cfg.n if cfg.diag_count < 0 else cfg.diag_count
        try:
            pattern = pattern_fix(cfg.kind, cfg.n, diag, cfg.offdiag_count, derive_seed(cfg.seed, 2))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        basis = make_basis(space, "correlation-entrywise", pattern)
    truth = gen_truth(cfg.gen_spec, basis)
    scheme = SamplingScheme.uniform(basis)
    m = cfg.m if cfg.m > 0 else max(1, int(round(cfg.sample_ratio * basis.d2)))
    samples = sample_indices(scheme, m, derive_seed(cfg.seed, 3))
    observed = depolarize(truth.X_bar, cfg.depolarize) if cfg.depolarize else truth.X_bar
    obs = observe_at_level(
        observed, samples, cfg.noise_level, rng_seed=derive_seed(cfg.seed, 4), reference=truth.X_bar
    )
    tangent = tangent_projections(truth.X_bar, cfg.r, psd=True)
    rho_scale = float(np.linalg.norm(adjoint_sampling(obs.y, samples) / m, 2))
    return Instance(cfg, truth, basis, scheme, obs, tangent, rho_scale)


def rho_grid(inst, n_rho=None, lo=None, hi=None):
    """Log-spaced penalties on ``[lo, hi] * ||R_Omega^*(y)/m||``, ascending."""
    cfg = inst.config
    n_rho = cfg.n_rho if n_rho is None else n_rho
    lo = cfg.rho_lo if lo is None else lo
    hi = cfg.rho_hi if hi is None else hi
    if n_rho < 1:
        raise ValueError("empty rho grid")
    if n_rho == 1:
        return np.array([hi * inst.rho_scale])
    return inst.rho_scale * np.logspace(np.log10(lo), np.log10(hi), n_rho)


# -- records ---------------------------------------------------------------------


@dataclass(eq=False)
class RunRecord:
    stage: str
    rho: float
    gamma: float
    relerr: float
    rank: int
    fidelity: float
    a_m: float
    b_m: float
    iterations: int
    seconds: float
    objective: float = float("nan")
    residual_ratio: float = float("nan")
    converged: bool = True
    error: str = ""
    note: str = ""
    X_hat: np.ndarray = field(default=None, repr=False)
    result: object = field(default=None, repr=False)

    def row(self, timing=False):
        def num(v):
            return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))

        return [
            self.stage,
            num(self.rho),
            num(self.gamma),
            num(self.relerr),
            str(self.rank),
            num(self.fidelity),
            num(self.a_m),
            num(self.b_m),
            str(self.iterations),
            num(self.seconds) if timing else "",
        ]

    @property
    def failed(self):
        return bool(self.error) or not self.converged


def _record(inst, stage, X, rho, correction, res=None, seconds=0.0, rank=None):
    G = None if correction is None else correction
    a, b, _ = compute_am_bm(inst.tangent, G if G is not None else np.zeros_like(inst.X_bar))
    fid = fidelity(X, inst.X_bar) if inst.config.kind == "density" else float("nan")
    return RunRecord(
        stage=stage,
        rho=rho,
        gamma=0.0 if correction is None else correction.gamma,
        relerr=relerr(X, inst.X_bar),
        rank=res.numerical_rank if rank is None else rank,
        fidelity=fid,
        a_m=a,
        b_m=b,
        iterations=0 if res is None else res.iterations,
        seconds=seconds,
        objective=float("nan") if res is None else res.objective,
        residual_ratio=inst.residual_ratio(X),
        converged=True if res is None else res.converged,
        X_hat=X,
        result=res,
    )


def _failed_record(stage, rho, gamma, exc):
    nan = float("nan")
    return RunRecord(stage, rho, gamma, nan, -1, nan, nan, nan, 0, 0.0, converged=False, error=str(exc))


def solve_stage(inst, stage, rho, correction=None, warm=None, cfg=None):
    """One solve of the stage's problem at ``rho``; returns a :class:`RunRecord`.

    ``nnpls1`` drops the fixed coefficients (the trace constraint for
    density problems).
    """
    cfg = inst.config.solver_config if cfg is None else cfg
    fixed = None if stage == "nnpls1" else inst.fixed_values
    problem = RcsProblem(inst.observations, rho, correction, fixed, psd=inst.config.psd)
    t0 = time.perf_counter()
    res = solve(problem, cfg, warm=warm)
    seconds = time.perf_counter() - t0
    return _record(inst, stage, res.X_hat, rho, correction, res, seconds)


def normalize_trace(inst, rec, stage="nnpls2"):
    """Trace-normalized copy of an unconstrained estimate."""
    X = rec.X_hat / np.real(np.trace(rec.X_hat))
    return _record(inst, stage, X, rec.rho, None, rec.result, rec.seconds, rank=rec.rank)


def _sweep_block(inst, stage, correction, rhos, warm_start):
    records, warm = [], None
    for rho in rhos:
        try:
            rec = solve_stage(inst, stage, float(rho), correction, warm if warm_start else None)
            warm = rec.result
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            rec = _failed_record(stage, float(rho), 0.0 if correction is None else correction.gamma, exc)
        records.append(rec)
    return records


def trace_pinned(inst, stage):
    """True when the fixed coefficients determine the trace of a PSD estimate.

    The NNPLS penalty ``rho * Tr(X)`` is then the same constant on the whole
    feasible set, so its minimizers do not depend on ``rho``.
    """
    if not inst.config.psd or stage == "nnpls1":
        return False
    basis = inst.basis
    if basis.is_pauli:
        return basis.d1 >= 1
    a = slice(0, basis.d1)
    diag = (basis.rows[a] == basis.cols[a]) & (basis.parts[a] == 0)
    return int(np.count_nonzero(diag)) == basis.space.n1


def _shared_sweep(inst, stage, rhos):
    """One solve reused on every grid point of a rho-independent problem."""
    try:
        first = solve_stage(inst, stage, rhos[0])
    except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return sorted((_failed_record(stage, rho, 0.0, exc) for rho in rhos), key=lambda r: r.rho)
    records = []
    for rho in rhos:
        problem = RcsProblem(inst.observations, rho, None, inst.fixed_values, psd=True)
        rec = replace(first, rho=rho, objective=objective_value(first.X_hat, problem))
        rec.note = "rho-independent problem; one shared solve"
        records.append(rec)
    return sorted(records, key=lambda r: r.rho)


def run_sweep(inst, stage="nnpls", correction=None, grid=None, warm_start=True, workers=1):
    """Solve on every grid point (largest penalty first, warm-started).

    Returns records sorted by ascending ``rho``.  Solver exceptions are
    recorded in the row and the sweep continues.  With ``workers > 1`` the
    grid is cut into that many contiguous blocks, each warm-started from its
    own largest penalty; the output depends on ``workers`` but not on thread
    scheduling.
    """
    grid = rho_grid(inst) if grid is None else np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty rho grid")
    rhos = sorted((float(g) for g in grid), reverse=True)
    if correction is None and trace_pinned(inst, stage):
        return _shared_sweep(inst, stage, rhos)
    if workers <= 1 or len(rhos) < 2:
        records = _sweep_block(inst, stage, correction, rhos, warm_start)
    else:
        blocks = [list(b) for b in np.array_split(rhos, min(workers, len(rhos)))]
        with ThreadPoolExecutor(max_workers=len(blocks)) as pool:
            parts = pool.map(lambda b: _sweep_block(inst, stage, correction, b, warm_start), blocks)
            records = [rec for part in parts for rec in part]
    return sorted(records, key=lambda r: r.rho)


def pick_initial(records, q=0.1):
    """Row whose residual ratio ``||y - R(X)|| / ||y||`` is closest to ``q``.

    Ties go to the smaller ``rho``; failed rows are skipped.
    """
    rows = [r for r in records if not r.error]
    if not rows:
        raise ValueError("no successful rows to choose from")
    return min(rows, key=lambda r: (abs(r.residual_ratio - q), r.rho))


def bisect_step(rank_at, rho_low, rho_high, plateau, rel_width=1e-2):
    """Smallest ``rho`` in ``[rho_low, rho_high]`` with ``rank_at(rho) == plateau``.

    Requires ``rank_at(rho_low) != plateau == rank_at(rho_high)``; bisects in
    log scale until ``rho_high / rho_low <= 1 + rel_width`` and returns the
    upper end.
    """
    if not 0 < rho_low < rho_high:
        raise ValueError("need 0 < rho_low < rho_high")
    lo, hi = float(rho_low), float(rho_high)
    while hi / lo > 1 + rel_width:
        mid = np.sqrt(lo * hi)
        if rank_at(mid) == plateau:
            hi = mid
        else:
            lo = mid
    return hi


def find_plateau(records):
    """Bracket ``(rho_low, rho_high, plateau_rank)`` from an ascending sweep.

    The plateau is the rank at the largest penalty; it must hold on at least
    two consecutive grid points and be preceded by a different rank.
    """
    rows = [r for r in sorted(records, key=lambda r: r.rho) if not r.error]
    if len(rows) < 3:
        raise PlateauError("need at least three successful sweep rows")
    plateau = rows[-1].rank
    i = len(rows) - 1
    while i > 0 and rows[i - 1].rank == plateau:
        i -= 1
    if i == len(rows) - 1:
        raise PlateauError("rank is not constant at the high end of the rho range")
    if i == 0:
        raise PlateauError(f"rank {plateau} on the whole rho range; nothing to bracket")
    return rows[i - 1].rho, rows[i].rho, plateau


def bisect_rho(inst, stage, correction, records, rel_width=None):
    """Smallest rank-stable ``rho`` near the plateau found in ``records``.

    Returns ``(rho_star, record_at_rho_star)``.
    """
    rel_width = inst.config.bisect_width if rel_width is None else rel_width
    lo, hi, plateau = find_plateau(records)
    cache = {r.rho: r for r in records if not r.error}

    def nearest(rho):
        return min(cache.values(), key=lambda r: abs(np.log(r.rho / rho))).result

    def rank_at(rho):
        if rho not in cache:
            cache[rho] = solve_stage(inst, stage, rho, correction, warm=nearest(rho))
        return cache[rho].rank

    rho_star = bisect_step(rank_at, lo, hi, plateau, rel_width)
    rank_at(rho_star)
    return rho_star, cache[rho_star]


@dataclass(eq=False)
class ChainResult:
    stages: list
    sweeps: dict

    def rows(self):
        return list(self.stages)


def run_chain(cfg, inst=None, grid=None, workers=1):
    """NNPLS (picked by residual ratio) followed by bisected RCS steps.

    For density problems with ``nnpls1`` the trace-normalized ``nnpls2``
    estimate is recorded too and used as the first initial estimator.
    """
    inst = build_instance(cfg) if inst is None else inst
    grid = rho_grid(inst) if grid is None else grid
    stages, sweeps = [], {}
    first = cfg.chain[0]
    sweep = run_sweep(inst, first, None, grid, workers=workers)
    sweeps[first] = sweep
    current = pick_initial(sweep, cfg.target_ratio)
    stages.append(current)
    if first == "nnpls1":
        current = normalize_trace(inst, current)
        stages.append(current)
    for step in range(len(cfg.chain) - 1):
        name = f"rcs{step + 1}"
        corr = correction_matrix(current.X_hat, cfg.correction_fn(step), cfg.gamma, hermitian=True)
        sweep = run_sweep(inst, name, corr, grid, workers=workers)
        sweeps[name] = sweep
        try:
            _, current = bisect_rho(inst, name, corr, sweep)
        except PlateauError:
            current = pick_initial(sweep, cfg.target_ratio)
            current.note = "no rank plateau; picked by residual ratio"
        stages.append(current)
    return ChainResult(stages, sweeps)


def write_csv(path, records, timing=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            w.writerow(rec.row(timing))


def read_csv(path):
    """Rows of a record CSV as dictionaries (values kept as strings)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        return list(reader)


def markdown_table(rows, title=None):
    """Markdown summary with one line per record (dicts or :class:`RunRecord`)."""
    cols = ("stage", "rho", "relerr", "rank", "fidelity", "a_m", "b_m", "iterations")
    lines = [] if title is None else [f"### {title}", ""]
    lines.append("| " + " | ".join(cols) + " |")
    lines.append("|" + "---|" * len(cols))
    for row in rows:
        if isinstance(row, RunRecord):
            row = dict(zip(CSV_COLUMNS, row.row()))
        cells = []
        for c in cols:
            v = row.get(c, "")
            if c in ("rho", "relerr", "fidelity", "a_m", "b_m") and v not in ("", None):
                v = f"{float(v):.4g}"
            cells.append(str(v) if v != "" else "-")
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"
