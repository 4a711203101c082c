"""Command-line front end: ``rankcorr <command> [--config FILE] ...``.

Exit codes: 0 success, 2 configuration error, 3 a solver failure in some
row, 4 certificate violated (``certify --expect-consistent``).
"""

import argparse
import configparser
import glob
import os
import sys
from dataclasses import replace

from .diagnostics import check_consistency_psd, check_consistency_rect, write_report
from .experiments import (
    ConfigError,
    PlateauError,
    RunConfig,
    bisect_rho,
    build_instance,
    markdown_table,
    parse_fn,
    pick_initial,
    read_csv,
    rho_grid,
    run_chain,
    run_sweep,
    solve_stage,
    write_csv,
)
from .solver import RcsProblem, check_optimality
from .spectral import correction_matrix
from .svg import panels

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CERTIFICATE = 0, 2, 3, 4
# a single solve is refined to SOLVE_TOL and its KKT residuals checked at CERT_TOL
SOLVE_TOL, SOLVE_MAX_ITER, CERT_TOL = 1e-8, 20000, 1e-6


def _parse_set(items):
    raw = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        raw[key.strip()] = value
    return raw


def load_config(args):
    """RunConfig from ``--config`` plus ``--set`` and ``--seed`` overrides."""
    raw = {}
    if args.config:
        parser = configparser.ConfigParser()
        try:
            if not parser.read(args.config):
                raise ConfigError(f"cannot read config file {args.config}")
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from exc
        if not parser.has_section("run"):
            raise ConfigError("config file has no [run] section")
        raw = dict(parser.items("run"))
    raw.update(_parse_set(args.set))
    overrides = {"seed": args.seed, "timing": True if args.timing else None}
    return RunConfig.from_mapping(raw, **overrides)


def _outdir(args):
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ConfigError(f"output directory {out} is not writable")
    return out


def _sweep_svg(path, inst, sweeps):
    """Relative error and rank against rho/rho_scale for each sweep."""
    first = next(iter(sweeps.values()))
    x = [r.rho / inst.rho_scale for r in first]
    rel = {name: [r.relerr for r in recs] for name, recs in sweeps.items()}
    rank = {name: [float(r.rank) if r.rank >= 0 else float("nan") for r in recs] for name, recs in sweeps.items()}
    panels(path, x, [("relative error", "relerr", rel), ("rank", "rank", rank)])


def _status(records):
    bad = [r for r in records if r.failed]
    for r in bad:
        why = r.error or "max_iter reached"
        print(f"warning: {r.stage} at rho={r.rho:.6g}: {why}", file=sys.stderr)
    return EXIT_SOLVER if bad else EXIT_OK


def _initial_sweep(cfg, inst, grid, workers):
    stage = cfg.chain[0]
    sweep = run_sweep(inst, stage, None, grid, workers=workers)
    return stage, sweep, pick_initial(sweep, cfg.target_ratio)


def _correction(cfg, X_tilde):
    return correction_matrix(X_tilde, cfg.correction_fn(0), cfg.gamma, hermitian=True)


# -- commands -------------------------------------------------------------------------


def cmd_generate(args, cfg):
    out = _outdir(args)
    inst = build_instance(cfg)
    paths = inst.truth.dump(os.path.join(out, "truth"))
    obs_path = os.path.join(out, "observations.csv")
    inst.observations.to_csv(obs_path)
    cfg.to_ini(os.path.join(out, "config.ini"))
    for p in paths + [obs_path]:
        print(p)
    return EXIT_OK


def cmd_solve(args, cfg):
    out = _outdir(args)
    inst = build_instance(cfg)
    rho = args.rho * inst.rho_scale
    correction = None
    stage = args.stage
    if stage == "rcs":
        base = solve_stage(inst, cfg.chain[0], rho)
        correction = _correction(cfg, base.X_hat)
        stage = "rcs1"
    tight = replace(cfg.solver_config, max_iter=max(cfg.max_iter, SOLVE_MAX_ITER),
                    tol_primal=min(cfg.tol, SOLVE_TOL), tol_dual=min(cfg.tol, SOLVE_TOL))
    rec = solve_stage(inst, stage, rho, correction, cfg=tight)
    write_csv(os.path.join(out, "solve.csv"), [rec], cfg.timing)
    fixed = None if stage == "nnpls1" else inst.fixed_values
    problem = RcsProblem(inst.observations, rho, correction, fixed, psd=cfg.psd)
    cert = check_optimality(rec.X_hat, problem, tol=CERT_TOL, subgradient=rec.result.subgradient)
    print(
        f"{stage}: rho={rec.rho:.6g} relerr={rec.relerr:.6g} rank={rec.rank} "
        f"iterations={rec.iterations} kkt={'PASS' if cert.passed else 'FAIL'}"
    )
    return _status([rec])


def cmd_sweep(args, cfg):
    out = _outdir(args)
    inst = build_instance(cfg)
    grid = rho_grid(inst)
    stage, sweep, init = _initial_sweep(cfg, inst, grid, args.threads)
    sweeps = {stage: sweep}
    if args.stage == "rcs":
        sweeps["rcs1"] = run_sweep(inst, "rcs1", _correction(cfg, init.X_hat), grid, workers=args.threads)
    records = []
    for name, recs in sweeps.items():
        write_csv(os.path.join(out, f"sweep_{name}.csv"), recs, cfg.timing)
        records += recs
    if args.svg:
        _sweep_svg(os.path.join(out, "sweep.svg"), inst, sweeps)
    for name, recs in sweeps.items():
        best = min((r for r in recs if not r.error), key=lambda r: r.relerr)
        print(f"{name}: {len(recs)} points, best relerr {best.relerr:.6g} at rank {best.rank}")
    return _status(records)


def cmd_bisect(args, cfg):
    out = _outdir(args)
    inst = build_instance(cfg)
    grid = rho_grid(inst)
    _, _, init = _initial_sweep(cfg, inst, grid, args.threads)
    corr = _correction(cfg, init.X_hat)
    sweep = run_sweep(inst, "rcs1", corr, grid, workers=args.threads)
    try:
        rho_star, rec = bisect_rho(inst, "rcs1", corr, sweep)
    except PlateauError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_csv(os.path.join(out, "bisect.csv"), [rec], cfg.timing)
    print(f"rho*={rho_star:.6g} ({rho_star / inst.rho_scale:.4g} x scale) rank={rec.rank} relerr={rec.relerr:.6g}")
    return _status(sweep + [rec])


def cmd_chain(args, cfg):
    out = _outdir(args)
    inst = build_instance(cfg)
    result = run_chain(cfg, inst, workers=args.threads)
    write_csv(os.path.join(out, "chain.csv"), result.stages, cfg.timing)
    records = list(result.stages)
    for name, recs in result.sweeps.items():
        write_csv(os.path.join(out, f"sweep_{name}.csv"), recs, cfg.timing)
        records += recs
    with open(os.path.join(out, "chain.md"), "w") as fh:
        fh.write(markdown_table(result.stages, title=f"{cfg.kind} n={cfg.n} r={cfg.r} seed={cfg.seed}"))
    if args.svg:
        _sweep_svg(os.path.join(out, "chain.svg"), inst, result.sweeps)
    for rec in result.stages:
        extra = f" ({rec.note})" if rec.note else ""
        print(f"{rec.stage}: rho={rec.rho:.6g} relerr={rec.relerr:.6g} rank={rec.rank}{extra}")
    return _status(records)


def cmd_certify(args, cfg):
    out = _outdir(args)
    inst = build_instance(cfg)
    fn = parse_fn(cfg.corrections[0])
    check = check_consistency_psd if cfg.psd else check_consistency_rect
    rep = check(inst.X_bar, inst.scheme, fn, cfg.r)
    summary = rep.summary()
    summary["nondegeneracy_margin"] = rep.nondegeneracy_margin
    ok = rep.verdict == "consistent" and rep.nondegenerate
    summary["result"] = "CONSISTENT" if ok else "NOT CONSISTENT"
    write_report(os.path.join(out, "certificate.txt"), summary)
    print(f"{summary['result']}: {rep.kind} certificate {rep.certificate_value:.6g}, "
          f"nondegeneracy margin {rep.nondegeneracy_margin:.3g}")
    if args.expect_consistent and not ok:
        return EXIT_CERTIFICATE
    return EXIT_OK


def cmd_report(args, cfg):
    out = _outdir(args)
    paths = args.files or sorted(glob.glob(os.path.join(out, "*.csv")))
    paths = [p for p in paths if os.path.basename(p) != "observations.csv"]
    if not paths:
        raise ConfigError(f"no record CSV files found in {out}")
    parts = []
    for path in paths:
        try:
            rows = read_csv(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        parts.append(markdown_table(rows, title=os.path.basename(path)))
        if args.svg and len(rows) > 1:
            x = [float(r["rho"]) for r in rows]
            rel = {"relerr": [float(r["relerr"]) if r["relerr"] else float("nan") for r in rows]}
            rank = {"rank": [float(r["rank"]) for r in rows]}
            svg = os.path.splitext(os.path.join(out, os.path.basename(path)))[0] + ".svg"
            panels(svg, x, [("relative error", "relerr", rel), ("rank", "rank", rank)])
    target = os.path.join(out, "report.md")
    with open(target, "w") as fh:
        fh.write("\n".join(parts))
    print(target)
    return EXIT_OK


COMMANDS = {
    "generate": (cmd_generate, "draw a ground truth and noisy observations"),
    "solve": (cmd_solve, "one solve at a given rho"),
    "sweep": (cmd_sweep, "warm-started solves over the rho grid"),
    "bisect": (cmd_bisect, "smallest rank-stable rho for the first RCS step"),
    "chain": (cmd_chain, "NNPLS followed by the configured RCS steps"),
    "certify": (cmd_certify, "consistency and nondegeneracy certificates at the truth"),
    "report": (cmd_report, "markdown (and optional SVG) summaries of record CSVs"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with a [run] section")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--seed", type=int, default=None, help="master seed")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--svg", action="store_true", help="also write SVG line charts")
    common.add_argument("--threads", type=int, default=1, help="parallel sweep blocks")
    common.add_argument("--timing", action="store_true", help="fill the seconds column")

    parser = argparse.ArgumentParser(prog="rankcorr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "solve":
            p.add_argument("--rho", type=float, default=0.1, help="penalty in units of ||R*(y)/m||")
            p.add_argument("--stage", choices=("nnpls", "nnpls1", "rcs"), default="nnpls")
        elif name == "sweep":
            p.add_argument("--stage", choices=("nnpls", "rcs"), default="nnpls")
        elif name == "certify":
            p.add_argument("--expect-consistent", action="store_true", help="exit 4 unless CONSISTENT")
        elif name == "report":
            p.add_argument("files", nargs="*", help="record CSVs (default: all in --out)")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args)
        return func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
