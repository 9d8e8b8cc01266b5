"""Command-line entry point: solve, verify, sweep, best-response, transform."""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
import warnings

import numpy as np

from .best_response import best_response, best_response_oracle
from .core import WageSchedule
from .io import ConfigError, config_from_dict, load_config, load_mechanism, save_mechanism, save_report, set_path, sweep_values
from .primitives import DomainError
from .solver import solve_example1, solve_example2
from .transforms import binary_transform, degenerate_transform
from .verify import verify
from .wages import monotonize

__all__ = ["main"]

SWEEP_COLUMNS = ("parameter", "theta", "action", "wage_gap", "revenue")


def _overrides(args) -> dict:
    out = {}
    if getattr(args, "grid_n", None) is not None:
        out["grid.output.n"] = args.grid_n
    if getattr(args, "type_n", None) is not None:
        out["grid.types.n"] = args.type_n
    if getattr(args, "seed", None) is not None:
        out["seed"] = args.seed
    return out


def _example(cfg) -> int:
    if cfg.example in (1, 2):
        return int(cfg.example)
    kernel = cfg.model.kernel
    if kernel.is_convex_on(cfg.outputs):
        return 1
    if kernel.is_concave_on(cfg.outputs):
        return 2
    raise ConfigError("kernel is neither convex nor concave; set solver.example", "solver.example")


def _solve(cfg, run_verify=True):
    if not cfg.utility.is_linear:
        raise ConfigError("the solver assumes linear utility", "primitives.utility", cfg.lines.get("primitives.utility"))
    if _example(cfg) == 1:
        return solve_example1(cfg.model, cfg.distribution, cfg.types, cfg.outputs, cfg.v_low, cfg.wage_mode, run_verify)
    return solve_example2(cfg.model, cfg.distribution, cfg.types, cfg.outputs, cfg.v_low, run_verify)


def _summary_table(result) -> str:
    mech = result.mechanism
    buf = _io.StringIO()
    if result.example == 1:
        buf.write(f"{'theta':>10} {'x_theta':>10} {'wage':>12} {'V':>12}\n")
        for i, t in enumerate(mech.types.points):
            k = int(mech.recommendation(i).support()[-1])
            buf.write(f"{t:10.4f} {result.actions[i]:10.4f} {mech.wages[i, k]:12.6f} {mech.promised_utility[i]:12.6f}\n")
    else:
        buf.write(f"{'theta':>10} {'p_theta':>10} {'w_low':>12} {'w_high':>12} {'V':>12}\n")
        for i, t in enumerate(mech.types.points):
            buf.write(
                f"{t:10.4f} {result.actions[i]:10.6f} {mech.wages[i, 0]:12.6f} "
                f"{mech.wages[i, -1]:12.6f} {mech.promised_utility[i]:12.6f}\n"
            )
    return buf.getvalue()


def cmd_solve(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    result = _solve(cfg)
    out = args.out or cfg.output.get("mechanism")
    if out:
        save_mechanism(result.mechanism, out)
    report_path = cfg.output.get("report")
    if report_path and result.report is not None:
        save_report(result.report, report_path)
    sys.stdout.write(_summary_table(result))
    d = result.revenue
    print(f"revenue: direct {d.direct:.10g}, virtual {d.virtual:.10g}")
    for note in result.notes:
        print(f"note: {note}")
    print(result.report.verdict_line())
    if not result.regular:
        return 2
    if not result.report.ic:
        print("error: solver output failed verification under a regular type distribution", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    if not args.mechanism:
        raise ConfigError("--mechanism is required")
    cfg = load_config(args.config, _overrides(args))
    mech = load_mechanism(args.mechanism)
    report = verify(mech, cfg.model, cfg.utility, obedience_tol=cfg.obedience_tol, brute_force_tol=cfg.brute_force_tol)
    out = args.out or cfg.output.get("report")
    if out:
        save_report(report, out)
    print(report.verdict_line())
    return 0 if report.ic else 1


def sweep_rows(cfg, param: str, values) -> list:
    rows = []
    for value in values:
        raw = json.loads(json.dumps(cfg.raw))
        set_path(raw, param, value)
        sub = config_from_dict(raw, cfg.lines)
        result = _solve(sub, run_verify=False)
        gaps = result.wage_gaps
        for i, t in enumerate(sub.types.points):
            rows.append((value, t, result.actions[i], gaps[i], result.revenue.direct))
    return rows


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    param, values = sweep_values(cfg)
    rows = sweep_rows(cfg, param, values)
    out = args.out or cfg.output.get("csv")
    handle = open(out, "w", newline="") if out else sys.stdout
    try:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow(["%.12g" % v for v in row])
    finally:
        if out:
            handle.close()
    if out:
        print(f"wrote {len(rows)} rows to {out}")
    return 0


def _parse_wage(text: str, n: int) -> np.ndarray:
    try:
        pay = np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"cannot parse wage {text!r}", "--wage") from None
    if pay.size != n:
        raise ConfigError(f"wage has {pay.size} entries, output grid has {n}", "--wage")
    return pay


def cmd_best_response(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    if args.mechanism:
        mech = load_mechanism(args.mechanism)
        if args.report is None:
            raise ConfigError("--report is required with --mechanism", "--report")
        wage = mech.wage(args.report)
    elif args.wage:
        wage = WageSchedule(cfg.outputs, _parse_wage(args.wage, len(cfg.outputs)))
    else:
        raise ConfigError("give --wage or --mechanism with --report", "--wage")
    br = best_response(wage, args.theta, cfg.model, cfg.utility)
    x = wage.grid.points
    for k in br.dist.support():
        print(f"x={x[k]:.6g} mass={br.dist.mass[k]:.9f}")
    print(f"value: {br.value:.12g}")
    if args.oracle:
        ref = best_response_oracle(wage, args.theta, cfg.model, cfg.utility, seed=cfg.seed)
        print(f"oracle value: {ref.value:.12g} (difference {br.value - ref.value:.3e})")
    return 0


def cmd_transform(args) -> int:
    if not args.mechanism:
        raise ConfigError("--mechanism is required")
    cfg = load_config(args.config, _overrides(args))
    mech = load_mechanism(args.mechanism)
    if args.kind == "monotonize":
        new = mech.replace(wages=np.vstack([monotonize(mech.wage(i)).pay for i in range(len(mech))]))
        slack = np.zeros(len(mech))
    else:
        fn = degenerate_transform if args.kind == "degenerate" else binary_transform
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            res = fn(mech, None, cfg.model, cfg.utility, details=True)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        new, slack = res.mechanism, res.kappa_slack
    if args.out:
        save_mechanism(new, args.out)
    print(f"max cost-level slack: {float(np.max(np.abs(slack))):.3e}")
    report = verify(new, cfg.model, cfg.utility, obedience_tol=cfg.obedience_tol, brute_force_tol=cfg.brute_force_tol)
    print(report.verdict_line())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexscreen", description="Screening with flexible hidden actions")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mechanism=False):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output path")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--grid-n", type=int, help="override the number of output grid points")
        p.add_argument("--type-n", type=int, help="override the number of type grid points")
        if mechanism:
            p.add_argument("--mechanism", help="mechanism JSON file")

    common(sub.add_parser("solve", help="compute the optimal mechanism"))
    common(sub.add_parser("verify", help="certify incentive compatibility"), mechanism=True)
    common(sub.add_parser("sweep", help="vary one primitive and tabulate the solution"))
    p = sub.add_parser("best-response", help="agent's best response to one wage")
    common(p, mechanism=True)
    p.add_argument("--theta", type=float, required=True)
    p.add_argument("--wage", help="comma or space separated wage per output point")
    p.add_argument("--report", type=int, help="use the wage of this type index from --mechanism")
    p.add_argument("--oracle", action="store_true", help="cross-check against the brute-force oracle")
    p = sub.add_parser("transform", help="rewrite a mechanism")
    common(p, mechanism=True)
    p.add_argument("kind", choices=("monotonize", "degenerate", "binary"))
    return parser


COMMANDS = {
    "solve": cmd_solve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "best-response": cmd_best_response,
    "transform": cmd_transform,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
