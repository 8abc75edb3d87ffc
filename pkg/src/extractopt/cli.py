"""Batch command-line front end.

Commands: solve | curves | simulate | verify | reproduce.  Every run writes
machine-readable JSON artifacts plus a manifest; the manifest is written
last, so a run is complete iff its manifest exists.  All randomness is
keyed by an explicit master seed and artifacts (manifest aside) are
byte-identical across repeats and worker counts.

Exit codes: 0 ok, 1 verification failure, 2 bad config, 3 no admissible
root, 4 simulation overflow.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, sim, verify
from .model import example_model, load_config, validate
from .sim import Policy, SimConfig, SimOverflowError
from .solver import NoAdmissibleRootError, Solution, build_system, select_admissible, solve_all_roots

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2
EXIT_NO_ROOT = 3
EXIT_SIM_OVERFLOW = 4

_FIXTURES = {"example1": 1, "example2": 2}


class CliError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> Path:
    d = Path(args.out or os.environ.get("EXTRACTOPT_OUT", "out"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_json(path: Path, obj) -> Path:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _write_manifest(out: Path, command: str, args_echo: dict, outputs) -> Path:
    manifest = {
        "command": command,
        "arguments": args_echo,
        "tool_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": [str(p) for p in outputs],
    }
    return _write_json(out / "manifest.json", manifest)


def _load_model(args):
    if getattr(args, "fixture", None):
        if args.fixture not in _FIXTURES:
            raise CliError(EXIT_CONFIG, f"unknown fixture {args.fixture!r}")
        model, init, ref = example_model(_FIXTURES[args.fixture])
        return model, init, ref, args.fixture
    if getattr(args, "config", None):
        try:
            model, init = load_config(args.config)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as e:
            raise CliError(EXIT_CONFIG, f"cannot read config {args.config}: {e}")
        return model, init, None, str(args.config)
    raise CliError(EXIT_CONFIG, "either --config or --fixture is required")


def _check_model(model):
    rep = validate(model)
    if not rep.ok:
        raise CliError(EXIT_CONFIG, "invalid model: " + "; ".join(rep.violations))
    return rep


def _solve(model, mode, ref):
    if mode == "reference" and ref is None:
        raise CliError(EXIT_CONFIG, "reference mode is only available for the bundled fixtures")
    sys_ = build_system(model, mode=mode, reference=ref)
    roots = solve_all_roots(sys_)
    try:
        sol = select_admissible(roots, model)
    except NoAdmissibleRootError as e:
        raise CliError(EXIT_NO_ROOT, str(e))
    return sys_, roots, sol


def cmd_solve(args) -> int:
    model, init, ref, src = _load_model(args)
    rep = _check_model(model)
    _, roots, sol = _solve(model, args.mode, ref)
    out = _out_dir(args)
    paths = [
        _write_json(out / "solution.json", sol.to_dict()),
        _write_json(out / "roots.json", {
            "roots": [{"A": [[z.real, z.imag] for z in rv.A], "residual": rv.residual} for rv in roots],
            "warnings": list(sol.warnings) + rep.warnings,
        }),
    ]
    print("A =", list(sol.A))
    for i in range(1, sol.m + 1):
        print(f"u*(x,{i}) = {sol.kappa(i):.6g} * x per year "
              f"({sol.rate_at(1.0, i, 'daily'):.6g} * x per day)")
        print(f"V(x,y,{i}) = {sol.A[i - 1]:.6g} x^2 + {sol.B:.6g} y + {sol.C:.6g}")
    _write_manifest(out, "solve", {"source": src, "mode": args.mode}, paths)
    return EXIT_OK


def cmd_curves(args) -> int:
    try:
        with open(args.solution) as fh:
            d = json.load(fh)
        sol = Solution(A=tuple(d["A"]), B=d["B"], C=d["C"], impact=d["lambda"],
                       beta=d["beta"], theta=d["theta"], bigK=d["K"], r=d["r"])
    except (OSError, KeyError, json.JSONDecodeError) as e:
        raise CliError(EXIT_CONFIG, f"cannot read solution {args.solution}: {e}")
    if args.xmax < args.xmin or args.points < 1:
        raise CliError(EXIT_CONFIG, "empty price range")
    xs = np.linspace(args.xmin, args.xmax, args.points)
    regimes = args.regimes or list(range(1, sol.m + 1))
    out = _out_dir(args)
    path = out / "curves.csv"
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "regime", "value"])
        for i in regimes:
            for x in xs:
                w.writerow([repr(float(x)), i, repr(sol.value_at(float(x), args.y, i))])
    _write_manifest(out, "curves", {"solution": str(args.solution), "y": args.y,
                                    "range": [args.xmin, args.xmax], "points": args.points}, [path])
    print(f"wrote {path} ({len(regimes) * len(xs)} rows)")
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    return SimConfig(
        horizon=args.horizon,
        scheme="exact" if args.exact else "euler",
        dt=args.dt,
        grid_step=args.grid_step,
        eps=args.eps,
        n_paths=args.paths,
        master_seed=args.seed,
        workers=args.workers,
    )


def _policy(args, model, ref) -> Policy:
    clamp = tuple(args.clamp) if args.clamp else None
    if args.policy == "zero":
        return Policy.zero()
    if args.policy == "constant":
        return Policy.constant(args.u0, clamp=clamp)
    _, _, sol = _solve(model, args.mode, ref)
    return Policy.feedback(sol, clamp=clamp)


def cmd_simulate(args) -> int:
    model, init, ref, src = _load_model(args)
    _check_model(model)
    if init is None:
        raise CliError(EXIT_CONFIG, "config carries no initial state")
    cfg = _sim_config(args)
    policy = _policy(args, model, ref)
    try:
        est = sim.estimate_payoff(model, policy, init, cfg)
    except SimOverflowError as e:
        raise CliError(EXIT_SIM_OVERFLOW, str(e))
    out = _out_dir(args)
    payload = {
        "estimate": est.to_dict(),
        "config": {
            "source": src, "policy": args.policy, "mode": args.mode,
            "horizon": cfg.horizon, "scheme": cfg.scheme, "dt": cfg.dt,
            "grid_step": cfg.grid_step, "eps": cfg.eps,
            "n_paths": cfg.n_paths, "master_seed": cfg.master_seed,
        },
    }
    paths = [_write_json(out / "estimate.json", payload)]
    print(f"mean = {est.mean:.6f}  std_error = {est.std_error:.6f}  "
          f"ci95 = {est.ci95:.6f}  truncation_bound = {est.truncation_bound:.6g}")
    _write_manifest(out, "simulate", payload["config"], paths)
    return EXIT_OK


def cmd_verify(args) -> int:
    model, init, ref, src = _load_model(args)
    _check_model(model)
    _, _, sol = _solve(model, args.mode, ref)
    checks = []

    rows = verify.coefficient_crosscheck(model)
    coeff_ok = all(r["I_diff"] <= 1e-8 * max(1.0, abs(r["I_closed"])) for r in rows)
    checks.append(("coefficient_crosscheck", coeff_ok))

    residuals = {}
    res_ok = True
    for method in ("semi_analytic", "quadrature"):
        rep = verify.hjb_residual(model, sol, method=method)
        residuals[method] = {"max_abs": rep.max_abs, "max_scaled": rep.max_scaled(),
                             "y_gap": rep.y_gap}
        res_ok = res_ok and rep.max_scaled() <= 1e-6 and rep.y_gap <= 1e-12
    checks.append(("hjb_residual", res_ok))

    cfg = _sim_config(args)
    if init is None:
        init = example_model(1)[1]
    cmp_ = verify.mc_vs_value(model, sol, init, cfg)
    checks.append(("mc_vs_value", cmp_.passed))

    out = _out_dir(args)
    all_ok = all(ok for _, ok in checks)
    payload = {
        "checks": {name: ok for name, ok in checks},
        "coefficients": rows,
        "residuals": residuals,
        "mc_vs_value": cmp_.to_dict(),
        "passed": all_ok,
    }
    paths = [_write_json(out / "verify.json", payload)]
    lines = [f"{name}: {'PASS' if ok else 'FAIL'}" for name, ok in checks]
    text = "\n".join(lines + [f"overall: {'PASS' if all_ok else 'FAIL'}"])
    (out / "verify.txt").write_text(text + "\n")
    paths.append(out / "verify.txt")
    print(text)
    _write_manifest(out, "verify", {"source": src, "mode": args.mode, "paths": cfg.n_paths,
                                    "seed": cfg.master_seed}, paths)
    return EXIT_OK if all_ok else EXIT_VERIFY_FAIL


def cmd_reproduce(args) -> int:
    rep = verify.reference_report(args.n)
    out = _out_dir(args)
    paths = [_write_json(out / f"reproduce{args.n}.json", rep.to_dict())]
    text = rep.to_text()
    (out / f"reproduce{args.n}.txt").write_text(text + "\n")
    paths.append(out / f"reproduce{args.n}.txt")
    print(text)
    _write_manifest(out, "reproduce", {"example": args.n}, paths)
    return EXIT_OK


def _add_model_args(p):
    p.add_argument("--config", help="JSON model config path")
    p.add_argument("--fixture", choices=sorted(_FIXTURES), help="bundled example id")
    p.add_argument("--mode", choices=["formula", "reference"], default="formula",
                   help="coefficient source for the quadratic system")


def _add_sim_args(p):
    p.add_argument("--paths", type=int, default=20000)
    p.add_argument("--horizon", type=float, default=400.0)
    p.add_argument("--dt", type=float, default=0.01, help="euler step (years)")
    p.add_argument("--exact", action="store_true", default=True,
                   help="event-driven scheme (default)")
    p.add_argument("--euler", dest="exact", action="store_false")
    p.add_argument("--grid-step", type=float, default=0.1,
                   help="payoff sampling step of the exact scheme")
    p.add_argument("--eps", type=float, default=1e-3,
                   help="small-jump truncation (infinite-activity measures)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--clamp", type=float, nargs=2, metavar=("LO", "HI"))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="extractopt",
                                 description="closed-form extraction policies under "
                                             "regime-switching jump-diffusion prices")
    ap.add_argument("--out", help="output directory (default $EXTRACTOPT_OUT or ./out)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the coupled quadratic system")
    _add_model_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("curves", help="tabulate the value function as CSV")
    p.add_argument("--solution", required=True, help="solution.json from a solve run")
    p.add_argument("--xmin", type=float, default=0.0)
    p.add_argument("--xmax", type=float, default=5.0)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--y", type=float, default=0.0)
    p.add_argument("--regimes", type=int, nargs="*")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("simulate", help="Monte-Carlo payoff estimate")
    _add_model_args(p)
    _add_sim_args(p)
    p.add_argument("--policy", choices=["feedback", "zero", "constant"], default="feedback")
    p.add_argument("--u0", type=float, default=0.0, help="rate for the constant policy")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="coefficient, residual and Monte-Carlo checks")
    _add_model_args(p)
    _add_sim_args(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reproduce", help="reproduce a bundled reference example")
    p.add_argument("n", type=int, choices=[1, 2])
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
