"""Command-line front end for batch work: simulate experiment paths, fit
recorded files, run the verification pipelines, analyze level chains, and
serve the live-session HTTP API.

Exit codes: 0 for a completed run (a FAIL verdict inside a report is a
finding, not an error), 2 for usage or validation problems, 1 for I/O and
internal failures.
"""

import argparse
import io
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .chain import analyze_chain
from .designs import (
    Bruceton,
    ExperimentPath,
    MarkovLanglie,
    ReverseBruceton,
    RobbinsMonro,
    SimSeed,
    rule_to_dict,
    simulate_path,
)
from .dqm import sdqm_trend
from .inference import (
    FitStatus,
    ci_fieller,
    ci_wald,
    fit_mle,
    lan_remainder,
    quantile_point,
)
from .langlie import drift_check, interval_union, make_kernel
from .mc import McConfig, coverage, run_mc
from .models import Link, ModelSpec

_RULE_PARAMS = {
    "bruceton": ("x1", "d"),
    "reverse_bruceton": ("x1", "d"),
    "robbins_monro": ("x1", "c", "q"),
    "langlie": ("a", "b", "eps"),
}
_RULE_TYPES = {
    "bruceton": Bruceton,
    "reverse_bruceton": ReverseBruceton,
    "robbins_monro": RobbinsMonro,
    "langlie": MarkovLanglie,
}


def _make_rule(args):
    names = _RULE_PARAMS[args.design]
    missing = [f"--{n}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise ValueError(f"design '{args.design}' requires "
                         + ", ".join(missing))
    return _RULE_TYPES[args.design](
        **{n: float(getattr(args, n)) for n in names})


def _make_model(args) -> ModelSpec:
    return ModelSpec(Link(args.link), float(args.alpha), float(args.beta))


def _float_list(text, name, want=None):
    try:
        values = [float(v) for v in str(text).split(",")]
    except ValueError:
        raise ValueError(f"--{name} must be a comma-separated number list")
    if want is not None and len(values) != want:
        raise ValueError(f"--{name} needs exactly {want} entries")
    return values


def _int_list(text, name):
    try:
        return [int(v) for v in str(text).split(",")]
    except ValueError:
        raise ValueError(f"--{name} must be a comma-separated integer list")


def _check_unit(value, name):
    value = float(value)
    if not 0.0 < value < 1.0:
        raise ValueError(f"--{name} must lie in (0, 1)")
    return value


def _emit(payload, out_json=None, out_csv=None, csv_text=None):
    text = json.dumps(payload, indent=2)
    print(text)
    if out_json:
        Path(out_json).write_text(text + "\n")
    if out_csv and csv_text is not None:
        Path(out_csv).write_text(csv_text)


# --- config file -----------------------------------------------------------

def _strip_config(argv):
    rest, cfg, i = [], None, 0
    while i < len(argv):
        tok = argv[i]
        if tok == "--config":
            if i + 1 >= len(argv):
                raise ValueError("--config needs a file path")
            cfg, i = argv[i + 1], i + 2
        elif tok.startswith("--config="):
            cfg, i = tok.split("=", 1)[1], i + 1
        else:
            rest.append(tok)
            i += 1
    return cfg, rest


def _merge_config(argv):
    """Append config-file entries as flags, explicit flags taking precedence."""
    cfg, rest = _strip_config(argv)
    if cfg is None:
        return rest
    extra = []
    for lineno, raw in enumerate(Path(cfg).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(
                f"config line {lineno} is not 'key = value': {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        flag = "--" + key.replace("_", "-")
        if any(t == flag or t.startswith(flag + "=") for t in rest):
            continue
        extra += [flag, value]
    return rest + extra


# --- subcommands -----------------------------------------------------------

def _cmd_simulate(args):
    rule = _make_rule(args)
    model = _make_model(args)
    path = simulate_path(rule, model, int(args.n),
                         SimSeed(int(args.seed), int(args.stream)))
    path.to_csv(args.out)
    responses = int(path.ys.sum())
    print(f"n={path.n} final_level={float(path.xs[-1])!r} "
          f"responses={responses} nonresponses={path.n - responses} "
          f"wrote {args.out}")
    return 0


def _cmd_estimate(args):
    q = _check_unit(args.q, "q")
    level = _check_unit(args.level, "level")
    link = Link(args.link)
    path = ExperimentPath.from_csv(args.infile)
    est = fit_mle(path, link)
    payload = {"q": q, "level": level, "estimate": est.to_dict(),
               "gamma_hat": None, "wald": None, "fieller": None}
    if est.status is FitStatus.CONVERGED:
        try:
            payload["gamma_hat"] = quantile_point(est.theta_hat, link, q)
        except ValueError:
            pass
        try:
            payload["wald"] = asdict(ci_wald(est, link, q, level))
        except ValueError:
            pass
        try:
            payload["fieller"] = ci_fieller(est, link, q, level).to_dict()
        except ValueError:
            pass
    print(json.dumps(payload, indent=2))
    return 0


def _cmd_verify_sdqm(args):
    rule, model = _make_rule(args), _make_model(args)
    h = _float_list(args.h, "h", want=2)
    grid = _int_list(args.n_grid, "n-grid")
    report = sdqm_trend(rule, model, h, grid, int(args.reps), int(args.seed))
    payload = {"mode": "sdqm", "seed": int(args.seed),
               **json.loads(report.to_json())}
    buf = io.StringIO()
    report.to_csv(buf)
    _emit(payload, args.out_json, args.out_csv, buf.getvalue())
    return 0


def _cmd_verify_lan(args):
    rule, model = _make_rule(args), _make_model(args)
    h = np.asarray(_float_list(args.h, "h", want=2))
    grid = _int_list(args.n_grid, "n-grid")
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("--n-grid must be strictly increasing")
    reps, seed = int(args.reps), int(args.seed)
    if reps < 1:
        raise ValueError("--reps must be at least 1")
    remainders = np.empty((reps, len(grid)))
    for r in range(reps):
        full = simulate_path(rule, model, grid[-1], SimSeed(seed, r))
        for j, n in enumerate(grid):
            sub = ExperimentPath(
                rule=rule, xs=full.xs[:n], ys=full.ys[:n],
                noise=None if full.noise is None else full.noise[:n])
            remainders[r, j] = abs(
                lan_remainder(sub, model.theta, h, model.link).remainder)
    medians = [float(v) for v in np.median(remainders, axis=0)]
    passed = all(b < a for a, b in zip(medians, medians[1:]))
    payload = {"mode": "lan", "design": rule_to_dict(rule),
               "link": model.link.value, "theta": [model.alpha, model.beta],
               "h": [float(h[0]), float(h[1])], "n_grid": grid,
               "reps": reps, "seed": seed, "medians": medians,
               "passed": passed}
    csv_text = "n,median_abs_remainder\n" + "".join(
        f"{n},{m!r}\n" for n, m in zip(grid, medians))
    _emit(payload, args.out_json, args.out_csv, csv_text)
    return 0


def _mc_config(args):
    fit_link = Link(args.fit_link) if getattr(args, "fit_link", None) else None
    return McConfig(rule=_make_rule(args), model=_make_model(args),
                    n=int(args.n), reps=int(args.reps),
                    master_seed=int(args.seed), link_for_fit=fit_link)


def _cmd_verify_normality(args):
    report = run_mc(_mc_config(args), q=_check_unit(args.q, "q"))
    bound = float(args.ks_bound)
    # no reference law (e.g. a Robbins-Monro design) leaves the verdict open
    passed = None
    if report.ks is not None:
        passed = bool(not report.unreliable and max(report.ks) < bound)
    payload = report.to_dict()
    payload.pop("per_rep")  # lives in the CSV
    payload = {"mode": "normality", "ks_bound": bound, "passed": passed,
               **payload}
    buf = io.StringIO()
    report.to_csv(buf)
    _emit(payload, args.out_json, args.out_csv, buf.getvalue())
    return 0


def _cmd_verify_coverage(args):
    cfg = _mc_config(args)
    q = _check_unit(args.q, "q")
    level = _check_unit(args.level, "level")
    band = float(args.band)
    cov_w, cov_f = coverage(cfg, q=q, level=level)
    passed = abs(cov_w - level) <= band and abs(cov_f - level) <= band
    payload = {"mode": "coverage", "design": rule_to_dict(cfg.rule),
               "link": cfg.model.link.value,
               "theta": [cfg.model.alpha, cfg.model.beta],
               "n": cfg.n, "reps": cfg.reps, "seed": cfg.master_seed,
               "q": q, "level": level, "band": band,
               "wald": cov_w, "fieller": cov_f, "passed": passed}
    csv_text = f"method,coverage\nwald,{cov_w!r}\nfieller,{cov_f!r}\n"
    _emit(payload, args.out_json, args.out_csv, csv_text)
    return 0


def _cmd_chain_bruceton(args):
    model = _make_model(args)
    report = analyze_chain(model, float(args.d), float(args.x1), int(args.K),
                           x_max=int(args.x_max))
    payload = json.loads(report.to_json())
    _emit(payload, args.out_json)
    report.pi_to_csv(args.out_pi)
    return 0


def _cmd_chain_langlie(args):
    model = _make_model(args)
    rule = MarkovLanglie(a=float(args.a), b=float(args.b),
                         eps=float(args.eps))
    kernel = make_kernel(rule, model, grid_m=int(args.grid_m))
    drift = drift_check(kernel, m=args.m)
    x1_unit = (rule.x1 - rule.a) / (rule.b - rule.a)
    generations, first_single = [], None
    for i in range(1, int(args.generations) + 1):
        union = interval_union(i, kernel.eps, x1=x1_unit)
        single = len(union.intervals) == 1
        if first_single is None and i > 1 and single:
            first_single = i
        generations.append({
            "i": i,
            "intervals": [[lo, hi] for lo, hi in union.intervals],
            "raw_length": union.raw_length,
            "is_full": union.is_full,
            "single": single,
        })
    payload = {"mode": "langlie", "rule": rule_to_dict(rule),
               "link": model.link.value, "theta": [model.alpha, model.beta],
               "grid_m": int(args.grid_m),
               "drift": json.loads(drift.to_json()),
               "generations": generations,
               "first_single_generation": first_single}
    _emit(payload, args.out_json)
    return 0


def _cmd_serve(args):
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(args.data_dir), host=args.host,
                port=int(args.port))
    return 0


# --- parser ----------------------------------------------------------------

def _add_config_flag(p):
    p.add_argument("--config",
                   help="key = value file supplying defaults for any flag; "
                        "explicit flags win")


def _add_model_flags(p):
    p.add_argument("--link", choices=["logit", "probit"], default="logit")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=1.0)


def _add_design_flags(p, q_default=None):
    p.add_argument("--design", choices=sorted(_RULE_TYPES), required=True)
    p.add_argument("--d", type=float, help="staircase step size")
    p.add_argument("--x1", type=float, help="start level")
    p.add_argument("--c", type=float, help="stochastic-approximation gain")
    p.add_argument("--q", type=float, default=q_default,
                   help="target quantile")
    p.add_argument("--a", type=float, help="lower bound")
    p.add_argument("--b", type=float, help="upper bound")
    p.add_argument("--eps", type=float, help="perturbation half-width")


def _add_verify_outputs(p, mode):
    p.add_argument("--out-json", default=f"verify_{mode}.json")
    p.add_argument("--out-csv", default=f"verify_{mode}.csv")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="staircase",
        description="Sensitivity-experiment workflows: simulate, estimate, "
                    "verify, chain analysis, live-session server.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a design and write its CSV")
    _add_config_flag(p)
    _add_design_flags(p)
    _add_model_flags(p)
    p.add_argument("--n", type=int, required=True, help="number of trials")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", default="path.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", help="fit a recorded path CSV")
    _add_config_flag(p)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--link", choices=["logit", "probit"], default="logit")
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--level", type=float, default=0.95)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("verify", help="run a verification pipeline")
    modes = p.add_subparsers(dest="mode", required=True)

    v = modes.add_parser("sdqm", help="summed quadratic-mean remainder trend")
    _add_config_flag(v)
    _add_design_flags(v)
    _add_model_flags(v)
    v.add_argument("--h", required=True, help="direction, e.g. 1,1")
    v.add_argument("--n-grid", required=True, help="path lengths, e.g. 100,400")
    v.add_argument("--reps", type=int, required=True)
    v.add_argument("--seed", type=int, required=True)
    _add_verify_outputs(v, "sdqm")
    v.set_defaults(func=_cmd_verify_sdqm)

    v = modes.add_parser("lan", help="median log-ratio remainder trend")
    _add_config_flag(v)
    _add_design_flags(v)
    _add_model_flags(v)
    v.add_argument("--h", required=True)
    v.add_argument("--n-grid", required=True)
    v.add_argument("--reps", type=int, required=True)
    v.add_argument("--seed", type=int, required=True)
    _add_verify_outputs(v, "lan")
    v.set_defaults(func=_cmd_verify_lan)

    v = modes.add_parser("normality",
                         help="replicated fits against the limiting law")
    _add_config_flag(v)
    _add_design_flags(v, q_default=0.5)
    _add_model_flags(v)
    v.add_argument("--fit-link", choices=["logit", "probit"])
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--reps", type=int, required=True)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--ks-bound", type=float, default=0.05)
    _add_verify_outputs(v, "normality")
    v.set_defaults(func=_cmd_verify_normality)

    v = modes.add_parser("coverage", help="interval coverage of the quantile")
    _add_config_flag(v)
    _add_design_flags(v, q_default=0.5)
    _add_model_flags(v)
    v.add_argument("--fit-link", choices=["logit", "probit"])
    v.add_argument("--n", type=int, required=True)
    v.add_argument("--reps", type=int, required=True)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--level", type=float, default=0.95)
    v.add_argument("--band", type=float, default=0.02)
    _add_verify_outputs(v, "coverage")
    v.set_defaults(func=_cmd_verify_coverage)

    p = sub.add_parser("chain", help="exact finite-chain analysis")
    targets = p.add_subparsers(dest="target", required=True)

    c = targets.add_parser("bruceton", help="lattice chain: pi, J, drift")
    _add_config_flag(c)
    _add_model_flags(c)
    c.add_argument("--d", type=float, required=True)
    c.add_argument("--x1", type=float, default=0.0)
    c.add_argument("--K", type=int, required=True, help="truncation half-width")
    c.add_argument("--x-max", type=int, default=200)
    c.add_argument("--out-pi", default="chain_pi.csv")
    c.add_argument("--out-json")
    c.set_defaults(func=_cmd_chain_bruceton)

    c = targets.add_parser("langlie",
                           help="perturbed bisection: drift, interval unions")
    _add_config_flag(c)
    _add_model_flags(c)
    c.add_argument("--a", type=float, default=0.0)
    c.add_argument("--b", type=float, default=1.0)
    c.add_argument("--eps", type=float, required=True)
    c.add_argument("--generations", type=int, default=6)
    c.add_argument("--grid-m", type=int, default=1000)
    c.add_argument("--m", type=float, help="Lyapunov slope multiplier")
    c.add_argument("--out-json")
    c.set_defaults(func=_cmd_chain_langlie)

    p = sub.add_parser("serve", help="run the live-session HTTP API")
    p.add_argument("--host", default=os.environ.get("STAIRCASE_HOST",
                                                    "127.0.0.1"))
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("STAIRCASE_PORT", "8000")))
    p.add_argument("--data-dir",
                   default=os.environ.get("STAIRCASE_DATA_DIR", "./sessions"))
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    try:
        argv = _merge_config(argv)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if isinstance(exc.code, int):
            return exc.code
        return 0 if exc.code is None else 2
    try:
        return int(args.func(args) or 0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
