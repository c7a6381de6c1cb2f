"""Command-line front end: ``nkgame {simulate,exact,bounds,verify}``.

Exit codes:
    0   success
    1   verify found a violated bound or identity
    2   simulate: more than 10% of trials were truncated at --max-steps
    3   exact: lumped state space exceeds --cap
    64  bad arguments, population string or configuration
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from fractions import Fraction

from nkgame import exact, formulas
from nkgame.errors import (
    ConfigError,
    DegenerateVariance,
    DomainError,
    PreconditionError,
    StateSpaceTooLarge,
    UnsupportedMode,
)
from nkgame.model import GameConfig, Mode, RoleKind, parse_population
from nkgame.montecarlo import collect, Estimate
from nkgame.verify import COLUMNS, DEFAULT_GRID, run_grid

SCHEMA_VERSION = 1
EXIT_OK, EXIT_FAILED, EXIT_TRUNCATED, EXIT_CAP, EXIT_USAGE = 0, 1, 2, 3, 64
TRUNCATION_LIMIT = 0.10
EMBED_EXACT_STATES = 20_000

log = logging.getLogger("nkgame")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


# -- value formatting ----------------------------------------------------------

def num(x):
    """Round to 12 significant digits; non-finite values become None."""
    if x is None or isinstance(x, (bool, str)):
        return x
    x = float(x)
    if not math.isfinite(x):
        return None
    return float(f"{x:.12g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (int, float, Fraction)) and not isinstance(obj, bool):
        if isinstance(obj, int):
            return obj
        return num(obj)
    return obj


def flatten(obj, prefix="") -> dict:
    out = {}
    if isinstance(obj, dict):
        for k, v in obj.items():
            out.update(flatten(v, f"{prefix}{k}."))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            out.update(flatten(v, f"{prefix}{i}."))
    else:
        out[prefix[:-1]] = obj
    return out


def csv_cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.12g}"
    return str(v)


def render(summary: dict, fmt: str) -> str:
    summary = _clean(summary)
    if fmt == "json":
        return json.dumps(summary, indent=2) + "\n"
    flat = flatten(summary)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(flat.keys())
    w.writerow(csv_cell(v) for v in flat.values())
    return buf.getvalue()


def _emit(text: str, path):
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- shared pieces ---------------------------------------------------------------

def config_from_args(args) -> GameConfig:
    pop = parse_population(args.pop)
    return GameConfig(pop, args.k, Mode(args.mode), args.seed, args.max_steps)


def config_dict(cfg: GameConfig, **extra) -> dict:
    d = {
        "population": str(cfg.population),
        "n": cfg.n,
        "k": cfg.k,
        "mode": cfg.mode.value,
        "seed": cfg.master_seed,
        "max_steps": cfg.max_steps,
    }
    d.update(extra)
    return d


def _na(reason: str) -> dict:
    return {"value": None, "note": f"n/a: {reason}"}


def _val(v) -> dict:
    return {"value": v, "note": "vacuous" if formulas.is_vacuous(v) else ""}


def compute_bounds(cfg: GameConfig) -> dict:
    pop = cfg.population
    kinds = pop.kinds()
    n, k, n_r, n_c = pop.n, cfg.k, pop.n_r, pop.n_c
    is_async = cfg.mode is Mode.ASYNC
    out = {}

    if not kinds <= {RoleKind.REJECTOR, RoleKind.RANDOM} or RoleKind.RANDOM not in kinds:
        out["random_decision_bound"] = _na("needs rejectors and random followers only")
    elif not is_async:
        out["random_decision_bound"] = _na("asynchronous game only")
    else:
        try:
            out["random_decision_bound"] = _val(formulas.theorem1_bound(n, n_r, k))
        except DomainError as e:
            out["random_decision_bound"] = _na(str(e))

    if not kinds <= {RoleKind.REJECTOR, RoleKind.CONSENTOR, RoleKind.MAJORITY}:
        out["majority_no_decision_bound"] = _na("needs rejectors, consentors and majority followers only")
    elif not is_async:
        out["majority_no_decision_bound"] = _na("asynchronous game only")
    elif not n_c < k <= n - n_r:
        out["majority_no_decision_bound"] = _na(f"needs n_c < k <= n - n_r ({n_c} < {k} <= {n - n_r})")
    else:
        try:
            out["majority_no_decision_bound"] = _val(formulas.theorem2_bound(n, n_c, n_r))
        except (DomainError, PreconditionError) as e:
            out["majority_no_decision_bound"] = _na(str(e))

    if RoleKind.BERNOULLI in kinds:
        out["expected_w0"] = _na("followers must start as fair coins; found Bernoulli agents")
    else:
        w0 = formulas.expected_w0(n, n_c, n_r)
        out["expected_w0"] = {"value": w0, "note": ""}

    if pop.n_followers:
        out["geometric"] = _na("needs rejectors, consentors and Bernoulli agents only")
        out["normal_round_bounds"] = _na("needs rejectors, consentors and Bernoulli agents only")
    elif is_async:
        out["geometric"] = _na("synchronous game only")
        out["normal_round_bounds"] = _na("synchronous game only")
    else:
        law = exact.geometric_decision_law(cfg)
        out["geometric"] = {"p": law.p, "expected_T": law.expected_T,
                            "expected_rounds": law.expected_rounds, "note": ""}
        try:
            pmax, pmin = exact.lemma2_bounds(cfg)
            out["normal_round_bounds"] = {"p_max": pmax, "p_min": pmin, "rounds_low": 1 / pmax,
                             "rounds_high": 1 / pmin, "note": ""}
        except (DegenerateVariance, PreconditionError, ZeroDivisionError) as e:
            out["normal_round_bounds"] = _na(str(e) or "zero success probability")
    return out


def compute_exact(cfg: GameConfig, cap: int) -> dict:
    if cfg.mode is Mode.SYNC:
        law = exact.geometric_decision_law(cfg)
        return {
            "p_decision": exact.sync_decision_probability(cfg),
            "p_round": law.p,
            "expected_T": law.expected_T,
            "expected_rounds": law.expected_rounds,
        }
    chain = exact.build_chain(cfg, cap=cap)
    res = exact.absorption(chain)
    out = {
        "p_decision": res.p_decision,
        "p_no_decision": res.p_no_decision,
        "expected_steps": res.expected_steps,
        "residual": res.residual,
        "states": len(chain.states),
        "census": chain.census(),
    }
    try:
        out["majority_census"] = "pass" if exact.verify_lemma7(chain) else "FAIL"
    except PreconditionError:
        out["majority_census"] = "n/a"
    return out


# -- commands --------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = config_from_args(args)
    batch = collect(cfg, args.trials, workers=args.workers)
    est = Estimate.from_batch(batch)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "config": config_dict(cfg, trials=args.trials),
        "p_decision": est.p_decision_hat,
        "ci99": list(est.wilson_ci_99),
        "mean_decision_time": est.mean_decision_time,
        "truncation_rate": est.truncation_rate,
        "frozen_rate": est.frozen_rate,
        "mean_freeze_time": est.mean_freeze_time,
        "bounds": compute_bounds(cfg),
    }
    try:
        if cfg.mode is Mode.SYNC or exact.Lumping(cfg.population).n_states <= EMBED_EXACT_STATES:
            summary["exact"] = compute_exact(cfg, EMBED_EXACT_STATES)
    except (PreconditionError, UnsupportedMode, StateSpaceTooLarge):
        pass
    _emit(render(summary, args.format), args.out)
    if args.records:
        with open(args.records, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["trial", "decided", "decision_time", "frozen", "freeze_time",
                        "truncated", "final_z"])
            for j in range(len(batch)):
                o = batch.outcome(j)
                w.writerow([int(batch.trial_indices[j]), int(o.decided), csv_cell(o.decision_time),
                            int(o.frozen), csv_cell(o.freeze_time), int(o.truncated), o.final_z])
    if est.truncation_rate > TRUNCATION_LIMIT:
        print(f"warning: {100 * est.truncation_rate:.1f}% of trials truncated", file=sys.stderr)
        return EXIT_TRUNCATED
    return EXIT_OK


def cmd_exact(args) -> int:
    cfg = config_from_args(args)
    try:
        ex = compute_exact(cfg, args.cap)
        if args.dump_chain and cfg.mode is Mode.ASYNC:
            chain = exact.build_chain(cfg, cap=args.cap)
            with open(args.dump_chain, "w") as fh:
                fh.write(chain.to_json(indent=1))
    except StateSpaceTooLarge as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CAP
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "exact",
        "config": config_dict(cfg),
        "exact": ex,
    }
    _emit(render(summary, args.format), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = config_from_args(args)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "bounds",
        "config": config_dict(cfg),
        "bounds": compute_bounds(cfg),
    }
    _emit(render(summary, args.format), args.out)
    return EXIT_OK


def cmd_verify(args) -> int:
    grid = DEFAULT_GRID
    if args.grid:
        with open(args.grid) as fh:
            grid = json.load(fh)
    rows = run_grid(grid, workers=args.workers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow(csv_cell(num(v) if isinstance(v, (float, Fraction)) else v)
                   for v in r.as_dict().values())
    _emit(buf.getvalue(), args.out)
    bad = [r for r in rows if not r.passed]
    for r in bad:
        print(f"FAILED {r.check} {r.config}: exact={r.exact} bound={r.bound} "
              f"mc={r.mc} ci=({r.ci_lo}, {r.ci_hi})", file=sys.stderr)
    print(f"{len(rows) - len(bad)}/{len(rows)} checks passed", file=sys.stderr)
    return EXIT_FAILED if bad else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nkgame", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def game_args(p, trials=False):
        p.add_argument("--pop", required=True, help='e.g. "2*rejector,1*consentor,3*majority"')
        p.add_argument("--k", type=int, required=True, help="decision threshold")
        p.add_argument("--mode", choices=["sync", "async"], default="async")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--max-steps", type=int, default=None)
        p.add_argument("--format", choices=["json", "csv"], default="json")
        p.add_argument("--out", default=None, help="output path (default stdout)")
        if trials:
            p.add_argument("--trials", type=int, default=10_000)
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--records", default=None, help="write per-trial CSV here")

    p = sub.add_parser("simulate", help="Monte Carlo estimate")
    game_args(p, trials=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("exact", help="exact chain analysis")
    game_args(p)
    p.add_argument("--cap", type=int, default=exact.DEFAULT_STATE_CAP)
    p.add_argument("--dump-chain", default=None, help="write the chain as JSON here")
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("bounds", help="closed-form bounds for the population")
    game_args(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="cross-check exact, bounds and Monte Carlo over a grid")
    p.add_argument("--grid", default=None, help="JSON grid file (default: built-in grid)")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "trials", 1) < 1:
            raise ConfigError("--trials must be >= 1")
        return args.func(args)
    except (ConfigError, UnsupportedMode, PreconditionError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
