"""Command-line driver.

Every workflow is a subcommand writing CSV or JSON to ``--output`` (or
stdout). Exit codes: 0 success, 1 bad parameters, 2 numerical failure,
3 resource budget exceeded. When writing to a file, a JSON run manifest
(config, library version, wall time) is written next to it as
``<output>.manifest.json``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, channel, oracle, phase
from . import io as sio
from .channel import ChannelSettings
from .exceptions import NumericalError, ParameterError, ResourceError
from .potential import (
    Model,
    WignerSpec,
    WishartSpec,
    wigner_lambda,
    wigner_potential_many,
    wishart_lambda,
    wishart_potential_many,
)
from .prior import make_prior
from .varsolve import solve_wigner, solve_wishart

EXIT_OK, EXIT_PARAM, EXIT_NUMERICAL, EXIT_RESOURCE = 0, 1, 2, 3


@dataclass
class RunConfig:
    """Everything that determines a run's output."""

    subcommand: str
    params: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0
    threads: int = 1
    tolerances: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> RunConfig:
        return cls(**d)

    @classmethod
    def from_json(cls, s: str) -> RunConfig:
        return cls.from_dict(json.loads(s))

    def settings(self) -> ChannelSettings:
        return ChannelSettings(**self.tolerances)


# ------------------------------------------------------------------ parsing

def _real(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a real number: {text!r}") from None
    if not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARAM, f"{self.prog}: error: {message}\n")


def _common(p):
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--manifest", help="run manifest path (default: <output>.manifest.json)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")
    p.add_argument("--threads", type=_positive_int, default=os.cpu_count() or 1,
                   help="worker threads (default: available cores)")
    p.add_argument("--rtol", type=_real, default=ChannelSettings.rtol,
                   help="quadrature relative tolerance (default: %(default)s)")
    p.add_argument("--start-order", type=_positive_int, default=ChannelSettings.start_order,
                   help="initial Gauss-Hermite order (default: %(default)s)")
    p.add_argument("--max-order", type=_positive_int, default=ChannelSettings.max_order,
                   help="maximal Gauss-Hermite order (default: %(default)s)")
    p.add_argument("--quiet", action="store_true", help="no progress on stderr")


def _model_args(p, prior_default="ber"):
    p.add_argument("--model", choices=[m.value for m in Model], default="wigner",
                   help="wigner or wishart (default: %(default)s)")
    p.add_argument("--prior", choices=["ber", "berrad"], default=prior_default,
                   help="signal prior; for wishart the prior of V (default: %(default)s)")
    p.add_argument("--rho", type=_real, required=True, help="sparsity, e.g. 1e-8")
    p.add_argument("--alpha", type=_real, default=1.0, help="wishart aspect ratio (default: 1)")


def _strength_args(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--gamma", type=_real, help="lambda / lambda_c")
    g.add_argument("--lambda", dest="lam", type=_real, help="signal strength")


def _oracle_args(p):
    p.add_argument("--n", type=_positive_int, required=True, help="problem size")
    p.add_argument("--prior", choices=["ber", "berrad"], default="ber", help="(default: %(default)s)")
    p.add_argument("--rho", type=_real, required=True)
    p.add_argument("--lambda", dest="lam", type=_real, required=True)
    p.add_argument("--n-disorder", type=_positive_int, default=200, help="(default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sparsespike", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("channel", help="scalar channel mutual information and MMSE")
    _common(p)
    p.add_argument("--prior", choices=["ber", "berrad", "gaussian"], required=True)
    p.add_argument("--rho", type=_real, default=1.0, help="(default: 1)")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--snr", type=_real, nargs="+")
    g.add_argument("--snr-grid", type=_real, nargs=3, metavar=("MIN", "MAX", "NUM"),
                   help="log-spaced grid")

    p = sub.add_parser("potential", help="evaluate a potential on a grid")
    _common(p)
    _model_args(p)
    _strength_args(p)
    p.add_argument("--q", type=_real, nargs="+", help="wigner overlaps, or q_u for wishart")
    p.add_argument("--q-v", type=_real, nargs="+", help="wishart q_v values (paired with --q)")
    p.add_argument("--num", type=_positive_int, default=101, help="grid size without --q (default: 101)")

    p = sub.add_parser("solve", help="solve the variational problem")
    _common(p)
    _model_args(p)
    _strength_args(p)

    p = sub.add_parser("curve", help="phase-transition curve over gamma")
    _common(p)
    _model_args(p)
    p.add_argument("--gamma-min", type=_real, default=0.0, help="(default: 0)")
    p.add_argument("--gamma-max", type=_real, default=2.0, help="(default: 2)")
    p.add_argument("--n-points", type=_positive_int, default=81, help="(default: 81)")
    p.add_argument("--dense", type=_real, nargs=2, default=[0.9, 1.1], metavar=("LO", "HI"),
                   help="refined window (default: 0.9 1.1)")
    p.add_argument("--dense-step", type=_real, default=0.005, help="(default: 0.005)")

    p = sub.add_parser("threshold", help="locate the transition by bisection")
    _common(p)
    _model_args(p)
    p.add_argument("--bracket", type=_real, nargs=2, default=[0.5, 1.5], metavar=("LO", "HI"))
    p.add_argument("--tol", type=_real, default=1e-4, help="(default: 1e-4)")

    p = sub.add_parser("oracle", help="exact finite-n checks")
    _common(p)
    _oracle_args(p)
    p.add_argument("--checks", nargs="+", default=["mi", "nishimori", "fluctuation", "boundary"],
                   choices=["mi", "nishimori", "fluctuation", "boundary"])
    p.add_argument("--s-n", type=_real, default=0.05, help="(default: 0.05)")
    p.add_argument("--q-const", type=_real, help="constant overlap path (default: rho/2)")

    p = sub.add_parser("sumrule", help="sum-rule check along a constant overlap path")
    _common(p)
    _oracle_args(p)
    p.add_argument("--q-const", type=_real, required=True)
    p.add_argument("--s-n", type=_real, default=0.05, help="(default: 0.05)")
    p.add_argument("--n-time-nodes", type=_positive_int, default=16, help="(default: 16)")

    p = sub.add_parser("ode", help="adaptive interpolation path by Euler steps")
    _common(p)
    _oracle_args(p)
    p.add_argument("--epsilon", type=_real, default=0.05, help="(default: 0.05)")
    p.add_argument("--n-steps", type=_positive_int, default=32, help="(default: 32)")
    p.add_argument("--sensitivity", action="store_true",
                   help="report dR(1)/d eps between eps and 2 eps instead of the path")

    p = sub.add_parser("rate", help="error-bound decay rate (constant omitted)")
    _common(p)
    p.add_argument("--model", choices=[m.value for m in Model], default="wigner")
    p.add_argument("--n", type=_positive_int, required=True)
    p.add_argument("--beta", type=_real, required=True)
    return parser


_GLOBAL_KEYS = {"subcommand", "output", "manifest", "seed", "threads", "rtol", "start_order",
                "max_order", "quiet"}


def config_from_args(args) -> RunConfig:
    params = {k: v for k, v in vars(args).items() if k not in _GLOBAL_KEYS}
    tol = {"rtol": args.rtol, "start_order": args.start_order, "max_order": args.max_order}
    if args.start_order > args.max_order:
        raise ParameterError("--start-order must not exceed --max-order")
    if not 0 < args.rtol < 1:
        raise ParameterError("--rtol must lie in (0, 1)")
    return RunConfig(args.subcommand, params, args.output, args.seed, args.threads, tol)


# ------------------------------------------------------------------ subcommands

class _Result:
    def __init__(self, text, extra=None):
        self.text = text
        self.extra = extra or {}


def _csv(records, schema):
    return sio.csv_text(records, sio.SCHEMAS[schema])


def _strength(model, p):
    if p["lam"] is not None:
        return p["lam"], None
    if model is Model.WIGNER:
        return wigner_lambda(p["gamma"], p["rho"]), p["gamma"]
    return wishart_lambda(p["gamma"], p["rho"], p["alpha"]), p["gamma"]


def _spec(p):
    model = Model(p["model"])
    if model is Model.WISHART and p["prior"] != "berrad" and p["prior"] != "ber":
        raise ParameterError("unsupported V prior")
    if p.get("gamma") is not None and not 0 < p["rho"] < 1:
        raise ParameterError("--gamma needs 0 < rho < 1")
    lam, gamma = _strength(model, p)
    prior = make_prior(p["prior"], p["rho"])
    if model is Model.WIGNER:
        return model, WignerSpec(prior, lam), gamma
    return model, WishartSpec(make_prior("gaussian"), prior, lam, p["alpha"]), gamma


def _cmd_channel(cfg, log):
    p = cfg.params
    prior = make_prior(p["prior"], p["rho"])
    if p["snr"] is not None:
        snrs = np.asarray(p["snr"], dtype=float)
    else:
        lo, hi, num = p["snr_grid"]
        if not (0 < lo <= hi) or num < 1 or num != int(num):
            raise ParameterError("--snr-grid needs 0 < MIN <= MAX and an integer NUM >= 1")
        snrs = np.geomspace(lo, hi, int(num))
    if np.any(snrs < 0):
        raise ParameterError("snr must be >= 0")
    mi, mm, order, err = channel.channel_arrays(prior, snrs, cfg.settings())
    recs = [{"snr": float(s), "mutual_information": float(a), "mmse": float(b),
             "quadrature_order": int(o), "est_abs_error": float(e)}
            for s, a, b, o, e in zip(snrs, mi, mm, order, err)]
    return _Result(_csv(recs, "channel"))


def _cmd_potential(cfg, log):
    p = cfg.params
    model, spec, _ = _spec(p)
    settings = cfg.settings()
    if model is Model.WIGNER:
        qs = np.asarray(p["q"], dtype=float) if p["q"] else np.linspace(0.0, spec.rho, p["num"])
        vals = wigner_potential_many(spec, qs, settings)
        recs = [{"q": float(q), "value": float(v)} for q, v in zip(qs, vals)]
        return _Result(_csv(recs, "wigner_potential"))
    if p["q"] and p["q_v"]:
        q_u, q_v = np.asarray(p["q"], dtype=float), np.asarray(p["q_v"], dtype=float)
        if q_u.shape != q_v.shape:
            raise ParameterError("--q and --q-v must have the same length")
    else:
        gu, gv = np.meshgrid(np.linspace(0, spec.rho_u, p["num"]),
                             np.linspace(0, spec.rho_v, p["num"]), indexing="ij")
        q_u, q_v = gu.ravel(), gv.ravel()
    vals = wishart_potential_many(spec, q_u, q_v, settings)
    recs = [{"q_u": float(a), "q_v": float(b), "value": float(v)} for a, b, v in zip(q_u, q_v, vals)]
    return _Result(_csv(recs, "wishart_potential"))


def _cmd_solve(cfg, log):
    model, spec, gamma = _spec(cfg.params)
    sol = solve_wigner(spec, cfg.settings()) if model is Model.WIGNER else solve_wishart(spec, cfg.settings())
    out = sol.to_dict()
    out["lambda"] = spec.lam
    out["gamma"] = gamma
    return _Result(sio.dumps_json(out))


def _cmd_curve(cfg, log):
    p = cfg.params
    model = Model(p["model"])
    if p["gamma_min"] < 0 or p["gamma_max"] < p["gamma_min"] or p["dense_step"] <= 0:
        raise ParameterError("need 0 <= gamma-min <= gamma-max and dense-step > 0")
    grid = phase.default_gamma_grid(p["gamma_min"], p["gamma_max"], p["n_points"],
                                    tuple(p["dense"]), p["dense_step"])

    def progress(k, total):
        log(f"curve: {k}/{total}")

    if model is Model.WIGNER:
        phase.lambda_critical(model, p["rho"])
        rows = phase.wigner_curve(p["prior"], p["rho"], grid, cfg.settings(), cfg.threads, progress)
        schema = "wigner_curve"
    else:
        if p["prior"] != "berrad":
            raise ParameterError("the wishart curve uses a Bernoulli-Rademacher V prior (--prior berrad)")
        rows = phase.wishart_curve(p["rho"], p["alpha"], grid, cfg.settings(), cfg.threads, progress)
        schema = "wishart_curve"
    failed = [{"gamma": r.gamma, "error": r.error} for r in rows if r.error]
    return _Result(_csv([r.as_record() for r in rows], schema), {"failed_rows": failed})


def _cmd_threshold(cfg, log):
    p = cfg.params
    model = Model(p["model"])
    alpha = p["alpha"] if model is Model.WISHART else None
    res = phase.locate_threshold(model, p["rho"], alpha, tuple(p["bracket"]), p["prior"],
                                 p["tol"], cfg.settings())
    return _Result(sio.dumps_json({"gamma_c": res.gamma_c, "certificate": list(res.certificate),
                                   "lambda_c": phase.lambda_critical(model, p["rho"], alpha)}))


def _check(name, params, stat, value, err, passed):
    return oracle.CheckRow(name, params, stat, value, err, bool(passed)).as_record()


def _oracle_common(cfg):
    p = cfg.params
    prior = make_prior(p["prior"], p["rho"])
    base = {"n": p["n"], "prior": p["prior"], "rho": p["rho"], "lambda": p["lam"],
            "n_disorder": p["n_disorder"], "seed": cfg.seed}
    if p["lam"] < 0:
        raise ParameterError("lambda must be >= 0")
    oracle._check_budget(prior, p["n"])
    return p, prior, base


def _cmd_oracle(cfg, log):
    p, prior, base = _oracle_common(cfg)
    n, lam, nd, seed = p["n"], p["lam"], p["n_disorder"], cfg.seed
    q_const = p["q_const"] if p["q_const"] is not None else 0.5 * p["rho"]
    if nd < 2:
        raise ParameterError("--n-disorder must be >= 2")
    rows = []
    if "mi" in p["checks"]:
        log("oracle: mutual information")
        est = oracle.mutual_information_mc(n, prior, lam, nd, seed, cfg.threads)
        rows.append(_check("mutual_information", base, "mi_per_n", est.value, est.std_err,
                           math.isfinite(est.value) and est.value >= -3 * est.std_err))
    if "nishimori" in p["checks"]:
        log("oracle: nishimori")
        res = oracle.nishimori_check(oracle.sample_batch(n, prior, lam, nd, seed))
        rows.append(_check("nishimori", base, "violation", res.violation, res.std_err,
                           res.violation <= 3 * res.std_err))
    if "fluctuation" in p["checks"]:
        log("oracle: overlap fluctuation")
        res = oracle.overlap_fluctuation(oracle.sample_batch(n, prior, lam, nd, seed))
        rows.append(_check("overlap_fluctuation", base, "thermal_var", res.thermal_var, math.nan,
                           res.thermal_var >= 0))
        rows.append(_check("overlap_fluctuation", base, "quenched_var", res.quenched_var, math.nan,
                           res.quenched_var >= 0))
    if "boundary" in p["checks"]:
        log("oracle: boundary values")
        params = dict(base, s_n=p["s_n"], q_const=q_const)
        res = oracle.boundary_values_check(n, prior, lam, p["s_n"], nd, seed, q_const,
                                           threads=cfg.threads)
        rows.append(_check("boundary_values", params, "gap_t0", res.gap_t0, res.mc_err_t0, True))
        rows.append(_check("boundary_values", params, "gap_t1", res.gap_t1, res.mc_err_t1, True))
        rows.append(_check("boundary_values", params, "c_emp", res.c_emp, math.nan, True))
    return _Result(_csv(rows, "checks"))


def _cmd_sumrule(cfg, log):
    p, prior, base = _oracle_common(cfg)
    params = dict(base, q_const=p["q_const"], s_n=p["s_n"], n_time_nodes=p["n_time_nodes"])
    log("sumrule: enumerating")
    res = oracle.sum_rule_check(p["n"], prior, p["lam"], p["q_const"], p["s_n"], p["n_disorder"],
                                p["n_time_nodes"], cfg.seed, threads=cfg.threads)
    bound = 10 * (p["rho"] * p["s_n"] + p["lam"] / p["n"]) + 3 * res.mc_err
    rows = [
        _check("sum_rule", params, "residual", res.residual, res.mc_err, abs(res.residual) <= bound),
        _check("sum_rule", params, "remainder_r1", res.remainder_r1, 0.0, res.remainder_r1 == 0.0),
        _check("sum_rule", params, "remainder_r2", res.remainder_r2, math.nan, res.remainder_r2 >= 0),
        _check("sum_rule", params, "remainder_r3", res.remainder_r3, math.nan, res.remainder_r3 >= 0),
        _check("sum_rule", params, "c_emp", res.c_emp, math.nan, res.c_emp <= 10),
    ]
    return _Result(_csv(rows, "checks"))


def _cmd_ode(cfg, log):
    p, prior, base = _oracle_common(cfg)
    eps = p["epsilon"]
    if p["sensitivity"]:
        log("ode: epsilon sensitivity")
        est = oracle.epsilon_sensitivity(p["n"], prior, p["lam"], eps, p["n_steps"],
                                         p["n_disorder"], cfg.seed, threads=cfg.threads)
        params = dict(base, s_n=eps, n_steps=p["n_steps"])
        rows = [_check("ode_jacobian", params, "dR1_deps", est.value, est.std_err,
                       est.value >= 1 - 3 * est.std_err)]
        return _Result(_csv(rows, "checks"))
    log("ode: integrating")
    path = oracle.adaptive_ode_solve(p["n"], prior, p["lam"], eps, p["n_steps"], p["n_disorder"],
                                     cfg.seed, threads=cfg.threads)
    qs = dict(path.q_path)
    recs = [{"t": t, "R": r, "q": qs.get(t)} for t, r in path.R_path]
    return _Result(_csv(recs, "ode_path"))


def _cmd_rate(cfg, log):
    p = cfg.params
    bound = phase.theorem_rate_bound(p["model"], p["n"], p["beta"])
    return _Result(sio.dumps_json({"model": p["model"], "n": p["n"], "beta": p["beta"],
                                   "rate": bound}))


COMMANDS = {
    "channel": _cmd_channel, "potential": _cmd_potential, "solve": _cmd_solve,
    "curve": _cmd_curve, "threshold": _cmd_threshold, "oracle": _cmd_oracle,
    "sumrule": _cmd_sumrule, "ode": _cmd_ode, "rate": _cmd_rate,
}


def execute(cfg: RunConfig, log=lambda msg: None) -> _Result:
    """Run a validated configuration and return its serialized output."""
    if cfg.subcommand not in COMMANDS:
        raise ParameterError(f"unknown subcommand {cfg.subcommand!r}")
    return COMMANDS[cfg.subcommand](cfg, log)


def _write(path, text):
    Path(path).write_text(text, encoding="utf-8", newline="")


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_PARAM

    def log(msg):
        if not args.quiet:
            print(msg, file=sys.stderr, flush=True)

    start = time.perf_counter()
    try:
        cfg = config_from_args(args)
        result = execute(cfg, log)
    except ParameterError as exc:
        print(f"parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(sio.dumps_json(exc.diagnostics), file=sys.stderr, end="")
        return EXIT_NUMERICAL
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    wall = time.perf_counter() - start
    if cfg.output:
        _write(cfg.output, result.text)
    else:
        sys.stdout.write(result.text)
        sys.stdout.flush()
    manifest_path = args.manifest or (f"{cfg.output}.manifest.json" if cfg.output else None)
    if manifest_path:
        _write(manifest_path, sio.dumps_json(sio.manifest(cfg.to_dict(), __version__, wall, result.extra)))
    return EXIT_OK


def main() -> None:
    sys.exit(run())
