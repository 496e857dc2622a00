"""Command-line interface: ``compatkit <subcommand> ...``.

Payloads go to stdout (JSON envelope, or CSV for ``curve``); diagnostics go
to stderr.  Exit status is 0 on success, 2 for invalid input, and 3 when a
fit fails to converge or meets a singular matrix.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import math
import os
import sys
from typing import Any, Callable

import numpy as np

from compatkit import __version__
from compatkit.compat import compatibility_interval, normal_mean_engine, pvalue_function
from compatkit.errors import ConvergenceError, InvalidInputError, SingularError
from compatkit.families import GlmFamily
from compatkit.glmgeom import GlmProblem, fit, fit_statistics, nested_compare, scheffe_simultaneous
from compatkit.hypotest import (
    GaussianSummary,
    HypothesisRegion,
    bf_lower_bound,
    coin_toss_equivalent,
    hl_umpu_p,
    interval_divergence_p,
    nonequivalence_divergence_p,
    point_p,
    svalue,
    tost_p,
)
from compatkit.numfmt import format_float
from compatkit.simlab import (
    DEFAULT_THRESHOLDS,
    SimConfig,
    calibrate_alternative,
    power_comparison,
    sample_p_distribution,
    size_power,
)

SCHEMA_VERSION = "1"
SEED_ENV = "COMPATKIT_SEED"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


# -- output -------------------------------------------------------------------

def _format_float(x: float) -> str:
    text = format_float(x)
    if text == "nan":
        return "null"
    return f'"{text}"' if "inf" in text else text


def to_json(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to at least 10 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {to_json(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [f"{pad}{to_json(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return to_json(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _format_float(float(obj))
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _envelope(command: str, inputs: dict, result: dict, quiet: bool) -> dict:
    env = {"schema_version": SCHEMA_VERSION, "command": command}
    if not quiet:
        env["inputs"] = inputs
    env["result"] = result
    return env


# -- input helpers ------------------------------------------------------------

def _load_matrix(path: str) -> np.ndarray:
    try:
        m = np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)
    except (OSError, ValueError) as exc:
        raise InvalidInputError(f"cannot read numeric CSV {path!r}: {exc}") from exc
    return m


def _load_vector(path: str) -> np.ndarray:
    m = _load_matrix(path)
    if m.shape[0] == 1 or m.shape[1] == 1:
        return m.ravel()
    raise InvalidInputError(f"{path!r} must hold a single row or column")


def _parse_list(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in str(text).split(",") if v.strip()], dtype=float)
    except ValueError as exc:
        raise InvalidInputError(f"expected comma-separated numbers, got {text!r}") from exc


def _summary(inp: dict) -> GaussianSummary:
    return GaussianSummary(float(inp["mean"]), float(inp["sigma"]), int(inp["n"]))


def _family(inp: dict, n_rows: int | None = None) -> GlmFamily:
    kind = inp["family"]
    if kind == "gaussian":
        if inp.get("covariance"):
            return GlmFamily.gaussian(_load_matrix(inp["covariance"]))
        if n_rows is None:
            raise InvalidInputError("gaussian family needs --covariance")
        return GlmFamily.gaussian(np.eye(n_rows))
    if kind == "poisson":
        return GlmFamily.poisson()
    if kind == "binomial":
        if not inp.get("trials"):
            raise InvalidInputError("binomial family needs --trials")
        return GlmFamily.binomial(_load_vector(inp["trials"]))
    raise InvalidInputError(f"unknown family {kind!r}")


def _problem(inp: dict, design_key: str) -> GlmProblem:
    x = _load_matrix(inp[design_key])
    y = _load_vector(inp["response"])
    if x.shape[0] != y.shape[0]:
        raise InvalidInputError(f"design has {x.shape[0]} rows but response has {y.shape[0]}")
    offset = _load_vector(inp["offset"]) if inp.get("offset") else None
    return GlmProblem(_family(inp, x.shape[0]), x, y, offset)


def _fit_dict(f) -> dict:
    return {
        "beta": f.beta,
        "mu": f.mu,
        "principle": f.principle,
        "iterations": f.iterations,
        "converged": f.converged,
        "score_norm": f.score_norm,
    }


# -- command handlers: inputs dict -> result dict ------------------------------

def cmd_point(inp: dict) -> dict:
    return point_p(_summary(inp), float(inp["m"])).to_dict()


def cmd_interval(inp: dict) -> dict:
    s = _summary(inp)
    h = HypothesisRegion.interval(float(inp["lo"]), float(inp["hi"]))
    if inp["method"] == "hl":
        return hl_umpu_p(s, h).to_dict()
    return interval_divergence_p(s, h).to_dict()


def cmd_equivalence(inp: dict) -> dict:
    s = _summary(inp)
    lo, hi = float(inp["lo"]), float(inp["hi"])
    if inp["method"] == "tost":
        return tost_p(s, (lo, hi)).to_dict()
    return nonequivalence_divergence_p(s, HypothesisRegion.nonequivalence(lo, hi)).to_dict()


def cmd_svalue(inp: dict) -> dict:
    s = svalue(float(inp["p"]), float(inp["base"]))
    out = {"s": s, "base": float(inp["base"])}
    if math.isfinite(s) and float(inp["base"]) == 2.0:
        out["coin_tosses"] = coin_toss_equivalent(s)
    return out


def cmd_bfbound(inp: dict) -> dict:
    return {"bf_lower": bf_lower_bound(float(inp["p"]))}


def cmd_glm_fit(inp: dict) -> dict:
    problem = _problem(inp, "design")
    f = fit(problem, inp["principle"])
    baseline = _load_vector(inp["baseline"]) if inp.get("baseline") else None
    out = {"fit": _fit_dict(f)}
    try:
        out["statistics"] = fit_statistics(problem, f, baseline).to_dict()
    except InvalidInputError as exc:
        print(f"compatkit: fit statistics unavailable: {exc}", file=sys.stderr)
        out["statistics"] = None
    return out


def cmd_glm_compare(inp: dict) -> dict:
    pa = _problem(inp, "design_a")
    pm = _problem(inp, "design_m")
    fa = fit(pa, inp["principle"])
    fm = fit(pm, inp["principle"])
    cmp_ = nested_compare(fa, fm, inp["method"], inp["wald_anchor"])
    return {
        "statistic": cmp_.statistic,
        "df": cmp_.df,
        "p": cmp_.p,
        "method": inp["method"],
        "fit_a": _fit_dict(fa),
        "fit_m": _fit_dict(fm),
    }


def cmd_scheffe(inp: dict) -> dict:
    ybar = _parse_list(inp["ybar"])
    res = scheffe_simultaneous(ybar, _load_matrix(inp["sigma"]), int(inp["n"]))
    return {"statistic": res.statistic, "p_joint": res.p_joint, "p_components": res.p_components}


def cmd_curve(inp: dict) -> dict:
    s = _summary(inp)
    engine = normal_mean_engine(s.mean_hat, s.se)
    curve = pvalue_function(engine, float(inp["lo"]), float(inp["hi"]), int(inp["steps"]))
    out: dict = {"curve": curve}
    if inp.get("pi") is not None:
        out["interval"] = compatibility_interval(engine, float(inp["pi"]), s.mean_hat, s.se).to_dict()
    return out


def _resolve_seed(inp: dict, cfg: dict) -> int:
    for source in (inp.get("seed"), cfg.get("seed"), os.environ.get(SEED_ENV)):
        if source is not None and source != "":
            try:
                return int(source)
            except (TypeError, ValueError) as exc:
                raise InvalidInputError(f"seed must be an integer, got {source!r}") from exc
    raise InvalidInputError(f"no seed: pass --seed, set 'seed' in the config, or set {SEED_ENV}")


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise InvalidInputError("config must be a JSON object")
    return cfg


def cmd_simulate(inp: dict) -> dict:
    cfg = _load_config(inp["config"])
    seed = _resolve_seed(inp, cfg)
    inp["seed"] = seed
    workers = int(inp.get("workers") or 1)
    thresholds = cfg.get("thresholds", list(DEFAULT_THRESHOLDS))
    mode = inp["mode"]
    if mode == "pdist":
        report = sample_p_distribution(SimConfig.from_dict(cfg, seed=seed), thresholds, workers)
        return report.to_dict()
    if mode == "size":
        cells = cfg.get("cells")
        if cells is None:
            base = cfg.get("base", cfg)
            vary = cfg.get("vary", {})
            cells = [base]
            for key, values in vary.items():
                cells = [{**c, key: v} for c in cells for v in values]
        configs = [SimConfig.from_dict(c, seed=seed) for c in cells]
        rows = size_power(configs, thresholds, workers)
        for row in rows:
            row["rejection_rates"] = {repr(k): v for k, v in row["rejection_rates"].items()}
            row["mc_se"] = {repr(k): v for k, v in row["mc_se"].items()}
        return {"cells": rows}
    if mode == "power":
        h = HypothesisRegion.from_dict(cfg["hypothesis"])
        sigma = float(cfg.get("sigma", 1.0))
        n = int(cfg.get("n", 1))
        alpha = float(cfg.get("alpha", 0.05))
        alt = cfg.get("alt")
        if alt is None:
            alt = calibrate_alternative(h, sigma, n, float(cfg.get("power_target", 0.80)), alpha)
        res = power_comparison(float(alt), h, n, int(cfg.get("reps", 10_000)), seed, sigma, alpha, workers)
        return {"alt": float(alt), "alpha": alpha, **res._asdict()}
    raise InvalidInputError(f"unknown simulation mode {mode!r}")


# -- argument parsing ---------------------------------------------------------

def _add_summary(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mean", type=float, required=True, help="sample mean")
    p.add_argument("--sigma", type=float, required=True, help="known standard deviation")
    p.add_argument("--n", type=int, required=True, help="sample size")


def _add_glm_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=["gaussian", "poisson", "binomial"], required=True)
    p.add_argument("--response", required=True, help="CSV response column")
    p.add_argument("--trials", help="CSV trials per row (binomial)")
    p.add_argument("--covariance", help="CSV known covariance (gaussian; default identity)")
    p.add_argument("--offset", help="CSV offset column")


HANDLERS: dict[str, Callable[[dict], dict]] = {
    "point": cmd_point,
    "interval": cmd_interval,
    "equivalence": cmd_equivalence,
    "svalue": cmd_svalue,
    "bfbound": cmd_bfbound,
    "glm fit": cmd_glm_fit,
    "glm compare": cmd_glm_compare,
    "scheffe": cmd_scheffe,
    "curve": cmd_curve,
    "simulate": cmd_simulate,
}

# argparse bookkeeping that is not part of a command's inputs
_META = {"command", "glm_command", "quiet", "format", "from_json"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compatkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--quiet", action="store_true", help="omit the echoed-input block")
    parser.add_argument("--format", choices=["json", "csv"], help="output format")
    parser.add_argument("--from-json", metavar="FILE", help="re-run the command recorded in a JSON payload")
    # the same output flags are accepted after the subcommand as well
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    common.add_argument("--format", choices=["json", "csv"], default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("point", parents=[common], help="two-sided P-value for mu = m")
    _add_summary(p)
    p.add_argument("--m", type=float, required=True)

    p = sub.add_parser("interval", parents=[common], help="interval hypothesis lo <= mu <= hi")
    _add_summary(p)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--method", choices=["divergence", "hl"], default="divergence")

    p = sub.add_parser("equivalence", parents=[common], help="nonequivalence hypothesis mu <= lo or mu >= hi")
    _add_summary(p)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--method", choices=["tost", "divergence"], default="tost")

    p = sub.add_parser("svalue", parents=[common], help="surprisal of a P-value")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--base", type=float, default=2.0)

    p = sub.add_parser("bfbound", parents=[common], help="Bayes-factor lower bound -e p ln p")
    p.add_argument("--p", type=float, required=True)

    g = sub.add_parser("glm", parents=[common], help="GLM fits and nested comparisons")
    gsub = g.add_subparsers(dest="glm_command")
    p = gsub.add_parser("fit", parents=[common])
    _add_glm_common(p)
    p.add_argument("--design", required=True, help="CSV design matrix, no header")
    p.add_argument("--principle", choices=["ml", "pearson", "gls"], default="ml")
    p.add_argument("--baseline", help="CSV positive saturated reference replacing y")
    p = gsub.add_parser("compare", parents=[common])
    _add_glm_common(p)
    p.add_argument("--design-a", dest="design_a", required=True)
    p.add_argument("--design-m", dest="design_m", required=True)
    p.add_argument("--method", choices=["lr", "score", "wald"], default="lr")
    p.add_argument("--principle", choices=["ml", "pearson", "gls"], default="ml")
    p.add_argument("--wald-anchor", dest="wald_anchor", choices=["A", "M"], default="A")

    p = sub.add_parser("scheffe", parents=[common], help="simultaneous P-value for a zero mean vector")
    p.add_argument("--ybar", required=True, help="comma-separated mean vector")
    p.add_argument("--sigma", required=True, help="CSV covariance matrix")
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("curve", parents=[common], help="P-value function and compatibility interval")
    _add_summary(p)
    p.add_argument("--lo", type=float, required=True)
    p.add_argument("--hi", type=float, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--pi", type=float)

    p = sub.add_parser("simulate", parents=[common], help="seeded Monte Carlo of random P-values")
    p.add_argument("mode", choices=["pdist", "size", "power"])
    p.add_argument("--config", required=True, help="JSON simulation config")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    return parser


def _command_name(ns: argparse.Namespace) -> str | None:
    if ns.command == "glm":
        return f"glm {ns.glm_command}" if ns.glm_command else None
    return ns.command


def _emit(command: str, inputs: dict, result: dict, fmt: str | None, quiet: bool, out, err) -> None:
    if command == "curve" and (fmt or "csv") == "csv":
        out.write(result["curve"].to_csv())
        if "interval" in result:
            print("compatkit: the interval is included only with --format json", file=err)
        return
    if fmt == "csv":
        raise InvalidInputError(f"CSV output is only available for 'curve', not {command!r}")
    if "curve" in result:
        result = {**result, "curve": result["curve"].to_dict()}
    out.write(to_json(_envelope(command, inputs, result, quiet)) + "\n")


def run(argv: list[str] | None = None, out=None, err=None) -> int:
    """Execute one command; returns the process exit status."""
    out = sys.stdout if out is None else out
    err = sys.stderr if err is None else err
    # argparse and the handlers report on sys.stderr; route that to ``err``
    with contextlib.redirect_stderr(err):
        return _run(argv, out, err)


def _run(argv: list[str] | None, out, err) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    fmt = getattr(ns, "format", None)
    quiet = getattr(ns, "quiet", False)
    try:
        if ns.from_json:
            try:
                with open(ns.from_json, encoding="utf-8") as fh:
                    payload = json.load(fh)
                command = payload["command"]
                inputs = dict(payload["inputs"])
            except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
                raise InvalidInputError(f"cannot replay {ns.from_json!r}: {exc}") from exc
        else:
            command = _command_name(ns)
            inputs = {k: v for k, v in vars(ns).items() if k not in _META}
        if command not in HANDLERS:
            parser.print_usage(err)
            print("compatkit: a subcommand is required", file=err)
            return EXIT_INPUT
        result = HANDLERS[command](inputs)
        _emit(command, inputs, result, fmt, quiet, out, err)
    except InvalidInputError as exc:
        print(f"compatkit: invalid input: {exc}", file=err)
        return EXIT_INPUT
    except (SingularError, ConvergenceError) as exc:
        print(f"compatkit: numerical failure: {exc}", file=err)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
