"""Batch command-line interface.

Subcommands: calibrate, evaluate, optimize, validate, classical. Records are
written as key=value lines (or a one-row CSV with --format csv) and always
include the resolved run configuration. Exit codes: 0 success, 2 input
error, 3 calibration degeneracy, 4 solver failure, 5 Monte Carlo failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from collections import OrderedDict

import numpy as np

from . import classical
from .errors import ConfigError, HeatpotError, InputError
from .heat_potentials import sharpe_and_duration
from .montecarlo import MCConfig, simulate_exits, simulate_trade
from .optimizer import maximize_sr
from .ou_model import OpportunitySeries, ScaledProblem, calibrate, horizon_of_upsilon, upsilon_of_horizon

CLASSICAL_VARIANTS = ("duration", "renewal", "value-discount", "value-opportunity", "value-jump",
                      "fredholm", "fredholm-curve")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _box(text):
    try:
        lo, hi, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI:STEP, got {text!r}") from None
    if not step > 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}")
    return lo, hi, step


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatpot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write the record here instead of stdout")
        p.add_argument("--format", choices=("text", "csv"), default="text")

    def horizon(p, required=True):
        g = p.add_mutually_exclusive_group(required=required)
        g.add_argument("--T", type=float, dest="T", help="dimensionless horizon")
        g.add_argument("--upsilon", type=float, help="Upsilon = (1 - exp(-2T))/2")

    def mc(p):
        p.add_argument("--paths", type=int, default=1_000_000)
        p.add_argument("--dt", type=float, default=1e-3)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("calibrate", help="OLS estimates of kappa and sigma from a price CSV")
    p.add_argument("input", help="CSV with header opportunity,step,price,target")
    p.add_argument("--obs-per-unit", type=float, default=None,
                   help="observations per unit time, to rescale the per-step estimates")
    common(p)

    p = sub.add_parser("evaluate", help="Sharpe ratio and duration of one rule")
    p.add_argument("--theta", type=float, required=True)
    horizon(p)
    p.add_argument("--pi-low", type=float, required=True)
    p.add_argument("--pi-high", type=float, required=True)
    p.add_argument("--n", type=int, default=400)
    common(p)

    p = sub.add_parser("optimize", help="maximize the Sharpe ratio over a rule grid")
    p.add_argument("--theta", type=float, required=True)
    horizon(p)
    p.add_argument("--box", type=_box, action="append", metavar="LO:HI:STEP",
                   help="pi_low range, then pi_high range (default -4:-0.1:0.1 and 0.1:4:0.1)")
    p.add_argument("--n", type=int, default=400)
    p.add_argument("--surface", help="also write the full surface CSV here")
    common(p)

    p = sub.add_parser("validate", help="compare heat potentials with Monte Carlo")
    p.add_argument("--theta", type=float, required=True)
    horizon(p)
    p.add_argument("--pi-low", type=float, required=True)
    p.add_argument("--pi-high", type=float, required=True)
    p.add_argument("--n", type=int, default=400)
    mc(p)
    common(p)

    p = sub.add_parser("classical", help="stationary and perpetual solvers")
    p.add_argument("variant", choices=CLASSICAL_VARIANTS)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--pi-low", type=float, help="stop-loss level l (or corridor lower bound)")
    p.add_argument("--pi-high", type=float, help="take-profit level u (or corridor upper bound)")
    p.add_argument("--lambda", type=float, dest="lam", default=0.1)
    p.add_argument("--omega", type=float, default=0.1)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.1)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--q-init", type=float, default=0.05)
    p.add_argument("--deltas", type=_box, default=(0.5, 2.0, 0.1), metavar="LO:HI:STEP")
    p.add_argument("--fee", type=float, default=0.0)
    p.add_argument("--rf", type=float, default=0.0)
    p.add_argument("--curve", help="write the sampled curve CSV here")
    p.add_argument("--mc-check", action="store_true", help="duration only: cross-check against Monte Carlo")
    mc(p)
    common(p)
    return parser


def resolved_config(args) -> OrderedDict:
    cfg = OrderedDict()
    for key in sorted(vars(args)):
        val = getattr(args, key)
        if isinstance(val, list):
            val = ";".join(":".join(_fmt(x) for x in b) for b in val)
        elif isinstance(val, tuple):
            val = ":".join(_fmt(x) for x in val)
        cfg["config." + key] = "" if val is None else val
    return cfg


def render(record: OrderedDict, fmt: str) -> str:
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(record.keys())
        w.writerow(_fmt(v) for v in record.values())
        return buf.getvalue()
    return "".join(f"{k}={_fmt(v)}\n" for k, v in record.items())


def _write(text, path):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _write_table(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(_fmt(v) for v in row)


def _upsilon(args):
    if args.upsilon is not None:
        horizon_of_upsilon(args.upsilon)
        return args.upsilon
    return upsilon_of_horizon(args.T)


def read_opportunities(path) -> OpportunitySeries:
    """Parse the calibration CSV; errors name the offending line."""
    groups = OrderedDict()
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["opportunity", "step", "price", "target"]:
            raise InputError(f"{path}:1: header must be opportunity,step,price,target")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise InputError(f"{path}:{line}: expected 4 fields, got {len(row)}")
            try:
                step, price, target = int(row[1]), float(row[2]), float(row[3])
            except ValueError:
                raise InputError(f"{path}:{line}: malformed number") from None
            if not (math.isfinite(price) and math.isfinite(target)):
                raise InputError(f"{path}:{line}: non-finite value")
            key = row[0].strip()
            g = groups.setdefault(key, {"steps": [], "prices": [], "target": target})
            if g["steps"] and step <= g["steps"][-1]:
                raise InputError(f"{path}:{line}: steps must ascend within an opportunity")
            if target != g["target"]:
                raise InputError(f"{path}:{line}: target changes within opportunity {key}")
            g["steps"].append(step)
            g["prices"].append(price)
    return OpportunitySeries([g["prices"] for g in groups.values()], [g["target"] for g in groups.values()])


def cmd_calibrate(args) -> OrderedDict:
    res = calibrate(read_opportunities(args.input))
    rec = OrderedDict(command="calibrate", kappa_hat=res.kappa_hat, sigma_hat=res.sigma_hat,
                      rows=len(res.residuals))
    if args.obs_per_unit:
        rec["kappa_per_unit_time"] = res.kappa_hat * args.obs_per_unit
        rec["sigma_per_sqrt_unit_time"] = res.sigma_hat * math.sqrt(args.obs_per_unit)
    return rec


def _reflect_problem(theta, T, lo, hi):
    problem = ScaledProblem(theta, T, lo, hi)
    return problem.reflected(), theta < 0


def cmd_evaluate(args) -> OrderedDict:
    ups = _upsilon(args)
    problem, flipped = _reflect_problem(args.theta, horizon_of_upsilon(ups), args.pi_low, args.pi_high)
    res = sharpe_and_duration(problem, n=args.n)
    return OrderedDict(command="evaluate", upsilon=ups, horizon=horizon_of_upsilon(ups), reflected=flipped,
                       E=res.mean, sigma=math.sqrt(res.variance_term), SR=res.sharpe, DUR=res.duration,
                       variance_clipped=res.variance_clipped)


def cmd_optimize(args) -> OrderedDict:
    ups = _upsilon(args)
    boxes = args.box or []
    if len(boxes) > 2:
        raise ConfigError("--box may be given at most twice")
    low = boxes[0] if len(boxes) > 0 else (-4.0, -0.1, 0.1)
    high = boxes[1] if len(boxes) > 1 else (0.1, 4.0, 0.1)
    if low[2] != high[2]:
        raise ConfigError("both boxes must use the same step")
    rule, surface = maximize_sr(args.theta, ups, low[:2], high[:2], low[2], n=args.n, return_surface=True)
    rec = OrderedDict(command="optimize", upsilon=ups, horizon=rule.horizon, pi_low_star=rule.pi_low_star,
                      pi_high_star=rule.pi_high_star, sr_star=rule.sr_star, tie_count=rule.tie_count,
                      failed_cells=int(np.sum(surface.flags != "")))
    if rule.reflected:
        rec["notice"] = "theta < 0: rule reflected from the theta > 0 solution"
    if args.surface:
        rows = surface.rows()
        if rule.reflected:
            rows = ((-hi, -lo, e, s, sr, d) for lo, hi, e, s, sr, d in rows)
        _write_table(args.surface, ("pi_low", "pi_high", "E", "sigma", "SR", "DUR"), rows)
    return rec


def cmd_validate(args) -> OrderedDict:
    ups = _upsilon(args)
    config = MCConfig(n_paths=args.paths, dt=args.dt, seed=args.seed)
    problem, flipped = _reflect_problem(args.theta, horizon_of_upsilon(ups), args.pi_low, args.pi_high)
    hp = sharpe_and_duration(problem, n=args.n)
    mc = simulate_trade(problem, config)
    rec = OrderedDict(command="validate", upsilon=ups, horizon=problem.horizon, reflected=flipped)
    verdict = True
    for name, hv, mv, se in (("E", hp.mean, mc.mean_ratio, mc.se_mean_ratio),
                             ("sigma", math.sqrt(hp.variance_term), mc.sigma, mc.se_sigma),
                             ("G", hp.duration, mc.mean_duration, mc.se_mean_duration),
                             ("SR", hp.sharpe, mc.sr, mc.se_sr)):
        z = (hv - mv) / se
        ok = abs(z) <= 3.0
        verdict &= ok
        rec[f"{name}.hp"] = hv
        rec[f"{name}.mc"] = mv
        rec[f"{name}.mc_se"] = se
        rec[f"{name}.z"] = z
        rec[f"{name}.within_3se"] = ok
    rec["verdict"] = "PASS" if verdict else "FAIL"
    return rec


def _duration_mc_check(args, moments) -> OrderedDict:
    # a horizon of 40 mean exit times makes truncation negligible
    config = MCConfig(n_paths=args.paths, dt=args.dt, seed=args.seed)
    _, t = simulate_exits(args.theta, 0.0, args.pi_low, args.pi_high, 40.0 * moments.mean, config)
    se_mean = float(np.std(t) / math.sqrt(t.size))
    dev = (t - t.mean()) ** 2
    se_var = float(np.std(dev) / math.sqrt(t.size))
    ok_mean = abs(t.mean() - moments.mean) <= 3.0 * se_mean
    ok_var = abs(t.var() - moments.variance) <= 3.0 * se_var
    return OrderedDict([("mc.mean", float(t.mean())), ("mc.mean_se", se_mean), ("mc.variance", float(t.var())),
                        ("mc.variance_se", se_var), ("mc.mean_within_3se", ok_mean),
                        ("mc.variance_within_3se", ok_var), ("mc.verdict", "PASS" if ok_mean and ok_var else "FAIL")])


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ConfigError(f"--{n.replace('_', '-')} is required for this variant")


def cmd_classical(args) -> OrderedDict:
    v = args.variant
    rec = OrderedDict(command="classical", variant=v)
    curve = None
    if v == "duration":
        _need(args, "pi_low", "pi_high")
        m = classical.duration_variance(args.theta, args.pi_low, args.pi_high)
        rec.update(mean=m.mean, second_moment=m.second_moment, variance=m.variance)
        if args.mc_check:
            rec.update(_duration_mc_check(args, m))
        xs = np.linspace(args.pi_low, args.pi_high, 201)
        curve = (("x", "mean_exit_time"), zip(xs, classical.exit_time_mean(xs, args.theta, args.pi_low, args.pi_high)))
    elif v == "renewal":
        _need(args, "pi_low", "pi_high")
        b = classical.bertram_sr(args.pi_low, args.pi_high, args.fee, args.rf)
        s = b.stats
        rec.update(eps_up=s.eps_up, eps_down=s.eps_down, eps_round=s.eps_round, var_up=s.var_up,
                   var_down=s.var_down, var_round=s.var_round, r=b.r, sr=b.sr)
    elif v in ("value-discount", "value-opportunity", "value-jump"):
        _need(args, "pi_low")
        if v == "value-discount":
            sol = classical.perpetual_value_discount(args.pi_low, args.lam)
        elif v == "value-opportunity":
            sol = classical.perpetual_value_opportunity(args.pi_low, args.lam)
        else:
            sol = classical.jump_value_shooting(args.pi_low, args.lam, args.omega, args.kappa)
            rec.update(c=sol.extras["c"], d=sol.extras["d"])
        rec.update(u_star=sol.u_star, a0=sol.a0, a1=sol.a1)
        rec.update(("residual." + k, r) for k, r in sol.residuals.items())
        curve = (("x", "V", "V_minus_x"), zip(sol.x, sol.value, sol.value - sol.x))
    elif v == "fredholm":
        sol = classical.fredholm_transaction(args.gamma, args.delta, args.q_init)
        rec.update(q_star=sol.q_star, root_class=sol.root_class, matching_residual=sol.matching_residual,
                   oddness_residual=sol.oddness_residual, iterations=sol.iterations)
        curve = (("x", "g"), zip(sol.nodes, sol.g))
    else:
        lo, hi, step = args.deltas
        deltas = np.round(np.arange(lo, hi + step / 2, step), 12)
        pts = classical.critical_boundary_curve(args.gamma, deltas)
        rec.update(points=len(pts), q_first=pts[0][1], q_last=pts[-1][1])
        curve = (("delta", "q_star", "root_class"), pts)
    if args.curve and curve is not None:
        _write_table(args.curve, *curve)
    return rec


COMMANDS = {"calibrate": cmd_calibrate, "evaluate": cmd_evaluate, "optimize": cmd_optimize,
            "validate": cmd_validate, "classical": cmd_classical}


def _glue_ranges(argv):
    # argparse takes "-2:-0.1:0.1" for an option; bind it to its flag
    out, it = [], iter(argv)
    for tok in it:
        if tok in ("--box", "--deltas"):
            out.append(f"{tok}={next(it, '')}")
        else:
            out.append(tok)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_ranges(sys.argv[1:] if argv is None else argv))
    try:
        record = COMMANDS[args.command](args)
    except HeatpotError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    record.update(resolved_config(args))
    _write(render(record, args.format), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
