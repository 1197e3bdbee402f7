"""deadcore: command-line front end.

usage:
  deadcore VERB --config PATH [--out DIR] [--parallel N] [--seed S] [--subset J]

verbs:
  analyze     positivity components, surrounded flags, minimal gap
  solve       ground state (default) or the constrained minimizer for a subset
              J of components, e.g. ``--subset 1`` or ``--subset 1,2``
  sweep       mu ladder report (sweep.csv) plus one ground-state field per mu
  eigen       lambda_1 over the ladder and lambda_inf (eigen.csv)
  barrier     beta and the minimal A of the shell barrier
  extensions  q + r runs: nehari, r-eq-p or subsuper ([extensions] mode)

exit codes:
  0 success, 2 config/data error, 3 nonconvergence or invalid candidate,
  4 certificate refusal
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import energy as en
from .analysis import BarrierSpec, SweepOptions, barrier_check, sweep
from .config import ConfigError, RunConfig, load_config
from .eigen import coercivity_constant, first_eigenvalue, limit_eigenvalue
from .extensions import RefusalError, bump_solutions, nehari_ground_state, solve_r_eq_p, subsuper_solve
from .grid import GridError, detect_components, min_gap, write_field
from .solve import SolveResult, ground_state, minimize_constrained, positivity_pattern

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_REFUSED = 4

VERBS = ("analyze", "solve", "sweep", "eigen", "barrier", "extensions")
META_COLUMNS = ["mu", "p", "q", "energy", "res_sup", "valid", "converged", "pg_norm", "iterations"]


class CommandError(RuntimeError):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(v)
    return f"{v:.12e}" if math.isfinite(v) else str(v)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    path.write_text(buf.getvalue())


def _meta_row(res: SolveResult, cfg: RunConfig, mu: float) -> list:
    return [mu, cfg.p, cfg.q, res.energy, res.res_sup, res.valid, res.converged, res.pg_norm, res.iterations]


def _mu_tag(mu: float) -> str:
    return f"{mu:.6g}".replace("+", "")


def _outdir(cfg: RunConfig) -> Path:
    cfg.out.mkdir(parents=True, exist_ok=True)
    return cfg.out


def _parse_subset(text: str, n: int) -> tuple[int, ...] | None:
    if text == "ground":
        return None
    try:
        idx = sorted({int(v) - 1 for v in text.split(",") if v.strip()})
    except ValueError as exc:
        raise CommandError(f"bad subset {text!r}", EXIT_CONFIG) from exc
    if not idx or idx[0] < 0 or idx[-1] >= n:
        raise CommandError(f"subset {text!r} outside 1..{n}", EXIT_CONFIG)
    return tuple(idx)


# --------------------------------------------------------------------------- verbs


def cmd_analyze(cfg: RunConfig, args) -> int:
    grid, a, _ = cfg.build()
    comps = detect_components(grid, a)
    print(f"n = {comps.n_components}")
    for i, (w, ok) in enumerate(zip(comps.omega, comps.surrounded), start=1):
        print(f"omega_{i}: nodes = {int(w.sum())}, surrounded = {str(ok).lower()}")
    gap = min_gap(grid, comps.omega) if comps.n_components > 1 else math.inf
    print(f"min gap = {gap:.6g}")
    if comps.zero_components:
        print(f"zero components = {len(comps.zero_components)}")
    if not comps.holds_a1:
        raise CommandError("weight has no positivity component", EXIT_CONFIG)
    if not comps.holds_a2:
        print("warning: not every component is surrounded by {a < 0}", file=sys.stderr)
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    grid, a, model = cfg.build()
    comps = detect_components(grid, a)
    subset = _parse_subset(args.subset, comps.n_components)
    if subset is None:
        res = ground_state(model, cfg.solver, comps=comps if comps.n_components else None)
        tag, ok_pattern = "ground", True
    else:
        zero = np.zeros(grid.shape, dtype=bool)
        for i in range(comps.n_components):
            if i not in subset:
                zero |= comps.exclusion(i)
        res = minimize_constrained(model, zero, cfg.solver)
        tag = "J" + "-".join(str(i + 1) for i in subset)
        ok_pattern = positivity_pattern(res.u, comps) == subset
    out = _outdir(cfg)
    write_field(out / f"field_{tag}_mu{_mu_tag(cfg.mu)}.csv", res.u, grid)
    _write_csv(out / f"meta_{tag}_mu{_mu_tag(cfg.mu)}.csv", META_COLUMNS, [_meta_row(res, cfg, cfg.mu)])
    print(f"energy = {res.energy:.12e}, res_sup = {res.res_sup:.3e}, valid = {res.valid}")
    if not res.converged:
        raise CommandError(f"solver did not converge ({res.message or 'iteration limit'})", EXIT_SOLVER)
    if not (res.valid and ok_pattern):
        raise CommandError("candidate not a solution", EXIT_SOLVER)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    grid, a, model = cfg.build()
    comps = detect_components(grid, a)
    if comps.n_components < 1:
        raise CommandError("weight has no positivity component", EXIT_CONFIG)
    sopts = SweepOptions(warm=cfg.warm and args.parallel <= 1)
    report = sweep(model, list(cfg.ladder), comps, cfg.solver, sopts, parallel=args.parallel)
    out = _outdir(cfg)
    (out / "sweep.csv").write_text(report.to_csv())
    for row in report.rows:
        write_field(out / f"ground_mu{_mu_tag(row.mu)}.csv", row.ground, grid)
    last_one, first_full = report.transition()
    print(f"rows = {len(report.rows)}, last unique mu = {last_one}, first full mu = {first_full}")
    bad = [r.mu for r in report.rows if not r.converged]
    if bad:
        print(f"warning: unconverged rows at mu = {bad}", file=sys.stderr)
    return EXIT_OK


def cmd_eigen(cfg: RunConfig, args) -> int:
    _, _, model = cfg.build()
    rows = []
    for mu in cfg.ladder:
        res = first_eigenvalue(model.with_mu(mu), seed=cfg.seed)
        rows.append([mu, res.lam, res.converged])
    lim = limit_eigenvalue(model, seed=cfg.seed)
    _write_csv(_outdir(cfg) / "eigen.csv", ["mu", "lambda1", "converged"], rows)
    for mu, lam, _ in rows:
        print(f"mu = {mu:.6g}: lambda1 = {lam:.10g}")
    print(f"lambda_inf = {lim.lam:.10g}")
    mu_top, lam_top, _ = rows[-1]
    if lam_top > 0:
        fit = coercivity_constant(model.with_mu(mu_top), seed=cfg.seed)
        print(f"empirical C at mu = {mu_top:.6g}: {fit.C:.6g}")
    if not (lim.converged and all(r[2] for r in rows)):
        raise CommandError("eigenvalue iteration did not converge", EXIT_SOLVER)
    return EXIT_OK


def cmd_barrier(cfg: RunConfig, args) -> int:
    _, _, model = cfg.build()
    b = cfg.barrier
    try:
        spec = BarrierSpec.for_exponents(cfg.p, cfg.q, b.center, b.r_in, b.R, b.K)
        check = barrier_check(spec, b.A, model.with_mu(cfg.mu))
    except ValueError as exc:
        raise CommandError(str(exc), EXIT_CONFIG) from exc
    _write_csv(_outdir(cfg) / "barrier.csv", ["p", "q", "beta", "A0", "A", "holds"],
               [[cfg.p, cfg.q, check.beta, check.A0, b.A, check.holds]])
    print(f"beta = {check.beta:.10g}")
    print(f"A0 = {check.A0:.10g}")
    print(f"holds at A = {b.A:.6g}: {check.holds}")
    return EXIT_OK


def cmd_extensions(cfg: RunConfig, args) -> int:
    grid, a, model = cfg.build()
    comps = detect_components(grid, a)
    mode = cfg.extensions.mode
    if mode == "nehari":
        res = nehari_ground_state(model, cfg.solver, cfg.extensions.seeds, comps, cfg.extensions.gate_count)
    elif mode == "r-eq-p":
        if model.variant != "p-linear":
            model = en.Problem(grid, model.a_plus, model.a_minus, p=cfg.p, q=cfg.q, mu=cfg.mu, variant="p-linear")
        res = solve_r_eq_p(model, cfg.solver, comps)
    else:
        res = subsuper_solve(model, comps, cfg.solver).result
    out = _outdir(cfg)
    tag = f"{mode}_mu{_mu_tag(cfg.mu)}"
    write_field(out / f"field_{tag}.csv", res.u, grid)
    _write_csv(out / f"meta_{tag}.csv", META_COLUMNS, [_meta_row(res, cfg, cfg.mu)])
    sols = bump_solutions(grid, res.u, model, comps) if comps.n_components else []
    rows = [["+".join(str(i + 1) for i in s.subset), s.res_sup, s.valid] for s in sols]
    _write_csv(out / f"bumps_{tag}.csv", ["subset", "res_sup", "valid"], rows)
    n_valid = sum(s.valid for s in sols)
    print(f"energy = {res.energy:.12e}, res_sup = {res.res_sup:.3e}, valid = {res.valid}")
    print(f"bump combinations valid = {n_valid}/{len(sols)}")
    if not res.converged:
        raise CommandError("solver did not converge", EXIT_SOLVER)
    if not res.valid:
        raise CommandError("candidate not a solution", EXIT_SOLVER)
    return EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "eigen": cmd_eigen,
    "barrier": cmd_barrier,
    "extensions": cmd_extensions,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deadcore", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument("verb", choices=VERBS)
    parser.add_argument("--config", required=True, help="run configuration file")
    parser.add_argument("--out", default=None, help="output directory (overrides [run] out)")
    parser.add_argument("--parallel", type=int, default=1, help="worker processes for sweep")
    parser.add_argument("--seed", type=int, default=None, help="overrides [run] seed")
    parser.add_argument("--subset", default="ground", help="solve: 'ground' or 1-based components, e.g. 1,2")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.parallel < 1:
        print("error: --parallel must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config).with_overrides(out=args.out, seed=args.seed)
        return COMMANDS[args.verb](cfg, args)
    except (ConfigError, GridError, en.ModelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RefusalError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
