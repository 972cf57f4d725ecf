"""Command-line interface: ``solve``, ``curves``, ``sweep``, ``voi`` and ``verify``.

Configuration is an INI file with the sections ``model``, ``game``,
``solver``, ``mc`` and ``output``.  Every key can be overridden by an
environment variable ``STOPPING_GAME_<SECTION>_<KEY>`` (upper case), and
``--seed``, ``--out`` and ``--format`` override the file and environment.

Exit codes: 0 success, 1 solver or verification failure, 2 configuration
error, 3 inconclusive Monte Carlo checks.
"""

from __future__ import annotations

import argparse
import configparser
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .equilibrium import (GameSpec, solve_equilibrium, sweep_lambda, v_c, v_p,
                          value_of_information)
from .exceptions import NoBracket, StoppingGameError
from .montecarlo import SimConfig, empirical_best_response_scan, simulate_game
from .verify import verify_equilibrium

log = logging.getLogger("stopping_game")

ENV_PREFIX = "STOPPING_GAME_"
EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_INCONCLUSIVE = 0, 1, 2, 3

_bool = lambda s: {"1": True, "true": True, "yes": True, "on": True,
                   "0": False, "false": False, "no": False, "off": False}[s.strip().lower()]

SCHEMA = {
    "model": {"mu": (float, 0.31333), "nu": (float, 0.2), "alpha": (float, 1.0),
              "beta": (float, 2.0)},
    "game": {"q": (float, 0.05), "lambda": (float, 1.0), "k_c": (float, 50.0),
             "k_p": (float, 60.0)},
    "solver": {"grid_size": (int, 2000), "eps": (float, 1e-9), "voi_tol": (float, 1e-6),
               "workers": (int, 1)},
    "mc": {"dt": (float, 1e-3), "horizon": (float, 200.0), "paths": (int, 100_000),
           "seed": (int, 20240607), "scheme": (str, "exact"), "antithetic": (_bool, False),
           "workers": (int, 1), "block_size": (int, 8192), "scan_paths": (int, 20_000),
           "scan_grid": (int, 11)},
    "output": {"directory": (str, ""), "format": (str, "csv")},
}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    values: dict

    def get(self, section, key):
        return self.values[section][key]

    def spec(self) -> GameSpec:
        m, g = self.values["model"], self.values["game"]
        return GameSpec.case_study(mu=m["mu"], nu=m["nu"], alpha=m["alpha"], beta=m["beta"],
                                       q=g["q"], lam=g["lambda"], k_c=g["k_c"], k_p=g["k_p"])

    def sim(self, paths=None) -> SimConfig:
        mc = self.values["mc"]
        return SimConfig(dt=mc["dt"], horizon=mc["horizon"], paths=paths or mc["paths"],
                         seed=mc["seed"], scheme=mc["scheme"], antithetic=mc["antithetic"],
                         workers=mc["workers"], block_size=mc["block_size"])


def _line_of(text, section, key):
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
        elif current == section and line.split("=", 1)[0].split(":", 1)[0].strip().lower() == key:
            return i
    return None


def load_config(path=None, env=None, overrides=None) -> RunConfig:
    """Defaults, then the INI file, then environment variables, then ``overrides``."""
    env = os.environ if env is None else env
    raw = {s: {k: None for k in keys} for s, keys in SCHEMA.items()}
    sources = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            name = section.lower()
            if name not in SCHEMA:
                raise ConfigError(f"{path}:{_line_of(text, name, '') or '?'}: unknown section [{section}]")
            for key, value in parser.items(section):
                if key not in SCHEMA[name]:
                    raise ConfigError(f"{path}:{_line_of(text, name, key)}: unknown key "
                                      f"'{key}' in [{section}]")
                raw[name][key] = value
                sources[(name, key)] = f"{path}:{_line_of(text, name, key)}"
    for section, keys in SCHEMA.items():
        for key in keys:
            var = f"{ENV_PREFIX}{section}_{key}".upper()
            if var in env:
                raw[section][key] = env[var]
                sources[(section, key)] = f"environment {var}"
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            raw[section][key] = str(value)
            sources[(section, key)] = f"--{key}"
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (kind, default) in keys.items():
            text_value = raw[section][key]
            if text_value is None:
                values[section][key] = default
                continue
            try:
                values[section][key] = kind(text_value)
            except (ValueError, KeyError) as exc:
                where = sources.get((section, key), "")
                raise ConfigError(f"{where}: [{section}] {key} = {text_value!r} is not a valid "
                                  f"{getattr(kind, '__name__', 'boolean')}") from exc
    cfg = RunConfig(values)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    if cfg.get("output", "format") not in ("csv", "json"):
        raise ConfigError(f"[output] format must be csv or json, got {cfg.get('output', 'format')!r}")
    if cfg.get("solver", "grid_size") < 2:
        raise ConfigError("[solver] grid_size must be >= 2")
    try:
        spec = cfg.spec()
        cfg.sim().check_discount(spec.q)
    except StoppingGameError as exc:
        raise ConfigError(f"invalid parameters: {exc}") from exc
    for key in ("scan_paths", "scan_grid"):
        if cfg.get("mc", key) < 1:
            raise ConfigError(f"[mc] {key} must be >= 1")


# --- output ---------------------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def to_json(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _emit(cfg: RunConfig, name: str, text: str, stdout):
    directory = cfg.get("output", "directory")
    if directory:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)
        log.info("wrote %s", out / name)
    else:
        stdout.write(text)


def _parse_floats(text, what):
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"{what}: expected comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise ConfigError(f"{what}: empty list")
    return vals


# --- commands -------------------------------------------------------------------------------------

def cmd_solve(cfg: RunConfig, args, stdout) -> int:
    spec = cfg.spec()
    eq = solve_equilibrium(spec, grid_size=cfg.get("solver", "grid_size"),
                           eps=cfg.get("solver", "eps"))
    fields = [("a_star", eq.a_star), ("l_star", eq.l_star),
              ("exp_a_star", math.exp(eq.a_star)), ("exp_l_star", math.exp(eq.l_star)),
              ("i_residual", eq.i_residual), ("j_residual", eq.j_residual),
              ("c_l_residual", spec.f_p.f(eq.l_star) - v_p(spec, eq.l_star, eq.a_star, eq.l_star)),
              ("n_roots", len(eq.all_roots)), ("pareto_minimal", eq.pareto_minimal)]
    if cfg.get("output", "format") == "json":
        doc = dict(fields)
        doc["all_roots"] = list(eq.all_roots)
        text = to_json(doc)
    else:
        rows = fields + [(f"root_{i}", r) for i, r in enumerate(eq.all_roots)]
        text = to_csv(["field", "value"], rows)
    _emit(cfg, f"solve.{cfg.get('output', 'format')}", text, stdout)
    return EXIT_OK


def _curve_rows(spec, eq, prices):
    xs = np.log(prices)
    vc = v_c(spec, xs, eq.a_star, eq.l_star)
    vp = v_p(spec, xs, eq.a_star, eq.l_star)
    return [(p, x, c, pv, spec.f_c.f(x), spec.f_p.f(x))
            for p, x, c, pv in zip(prices, xs, vc, vp)]


def cmd_curves(cfg: RunConfig, args, stdout) -> int:
    spec = cfg.spec()
    eq = solve_equilibrium(spec, grid_size=cfg.get("solver", "grid_size"),
                           eps=cfg.get("solver", "eps"))
    if not 0 < args.price_min < args.price_max or args.points < 2:
        raise ConfigError("need 0 < price-min < price-max and points >= 2")
    prices = np.linspace(args.price_min, args.price_max, args.points)
    rows = _curve_rows(spec, eq, prices)
    header = ["price", "x", "v_c", "v_p", "f_c", "f_p"]
    if cfg.get("output", "format") == "json":
        text = to_json({"a_star": eq.a_star, "l_star": eq.l_star,
                        "rows": [dict(zip(header, r)) for r in rows]})
    else:
        text = to_csv(header, rows)
    _emit(cfg, f"curves.{cfg.get('output', 'format')}", text, stdout)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args, stdout) -> int:
    lambdas = _parse_floats(args.lambdas, "--lambdas")
    if lambdas != sorted(lambdas):
        raise ConfigError("--lambdas must be sorted ascending")
    spec = cfg.spec()
    prices = np.linspace(args.price_min, args.price_max, args.points)
    result = sweep_lambda(spec, lambdas, x_grid=np.log(prices),
                          workers=cfg.get("solver", "workers"))
    header = ["lambda", "a_star", "l_star", "exp_a_star", "exp_l_star"]
    rows = [(r.lam, r.a_star, r.l_star, math.exp(r.a_star), math.exp(r.l_star)) for r in result.rows]
    curve_header = ["lambda", "price", "x", "v_c", "v_p"]
    curve_rows = [(r.lam, p, x, c, pv) for r in result.rows
                  for p, x, c, pv in zip(prices, r.x, r.v_c, r.v_p)]
    fmt = cfg.get("output", "format")
    if fmt == "json":
        text = to_json({"v_c_monotone_in_lambda": result.v_c_monotone,
                        "rows": [dict(zip(header, r)) for r in rows],
                        "curves": [dict(zip(curve_header, r)) for r in curve_rows]})
        _emit(cfg, "sweep.json", text, stdout)
    else:
        _emit(cfg, "sweep.csv", to_csv(header, rows), stdout)
        if cfg.get("output", "directory"):
            _emit(cfg, "sweep_curves.csv", to_csv(curve_header, curve_rows), stdout)
    if not result.v_c_monotone:
        log.warning("v_c is not monotone in lambda on the price grid")
    return EXIT_OK


def cmd_voi(cfg: RunConfig, args, stdout) -> int:
    prices = _parse_floats(args.prices, "--prices")
    lambdas = _parse_floats(args.lambdas, "--lambdas")
    spec = cfg.spec()
    rows = []
    for lam in lambdas:
        s = spec.with_lambda(lam)
        for price in prices:
            try:
                delta = value_of_information(s, math.log(price), tol=cfg.get("solver", "voi_tol"))
                rows.append((lam, price, delta, "ok"))
            except NoBracket as exc:
                log.warning("no bracket at lambda=%s price=%s: %s", lam, price, exc)
                rows.append((lam, price, float("nan"), "no_bracket"))
    header = ["lambda", "price", "delta", "status"]
    if cfg.get("output", "format") == "json":
        text = to_json({"rows": [dict(zip(header, r)) for r in rows]})
    else:
        text = to_csv(header, rows)
    _emit(cfg, f"voi.{cfg.get('output', 'format')}", text, stdout)
    return EXIT_OK


# relative precision a Monte Carlo comparison must reach to count as conclusive
_CONCLUSIVE_RELATIVE = 0.05


def _mc_check(name, estimate, exact, checks):
    scale = max(abs(exact), 1.0)
    conclusive = 3 * estimate.stderr <= _CONCLUSIVE_RELATIVE * scale
    ok = estimate.within(exact, k=3.0, bias=0.005)
    status = "PASS" if ok and conclusive else ("INCONCLUSIVE" if not conclusive else "FAIL")
    checks.append((name, status, exact, estimate.mean, estimate.stderr))


def cmd_verify(cfg: RunConfig, args, stdout) -> int:
    spec = cfg.spec()
    eq = solve_equilibrium(spec, grid_size=cfg.get("solver", "grid_size"),
                           eps=cfg.get("solver", "eps"))
    if args.a_star is not None or args.l_star is not None:
        eq = replace(eq, a_star=eq.a_star if args.a_star is None else args.a_star,
                     l_star=eq.l_star if args.l_star is None else args.l_star)
    report = verify_equilibrium(spec, eq)

    mc_checks = []
    sim = cfg.sim()
    a, l = eq.a_star, eq.l_star
    for label, x in (("between", 0.5 * (a + l)), ("above", l + 0.2)):
        est_c, est_p = simulate_game(spec, x, a, l, sim)
        _mc_check(f"mc_v_c_{label}", est_c, v_c(spec, x, a, l), mc_checks)
        _mc_check(f"mc_v_p_{label}", est_p, v_p(spec, x, a, l), mc_checks)
    scan_x = l + 0.2
    scan = empirical_best_response_scan(spec, eq, scan_x, cfg.get("mc", "scan_grid"),
                                        cfg.sim(paths=cfg.get("mc", "scan_paths")))
    for who, part in (("c", scan.c), ("p", scan.p)):
        conclusive = 3 * part.gap_stderr <= _CONCLUSIVE_RELATIVE * max(abs(part.optimum_mean), 1.0)
        status = "PASS" if part.consistent and conclusive else (
            "INCONCLUSIVE" if not conclusive else "FAIL")
        mc_checks.append((f"mc_scan_{who}", status, part.optimum_mean, part.best_mean,
                          part.gap_stderr))

    statuses = [c.passed for c in report.checks]
    mc_status = [c[1] for c in mc_checks]
    if not all(statuses) or "FAIL" in mc_status:
        code = EXIT_FAILURE
    elif "INCONCLUSIVE" in mc_status:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_OK

    fmt = cfg.get("output", "format")
    if fmt == "json":
        doc = report.to_dict()
        doc["monte_carlo"] = [dict(zip(["name", "status", "expected", "mean", "stderr"], c))
                              for c in mc_checks]
        doc["exit_code"] = code
        text = to_json(doc)
    else:
        rows = [(c.name, "PASS" if c.passed else "FAIL", c.value, c.tolerance, "")
                for c in report.checks]
        rows += [(name, status, expected, mean, se) for name, status, expected, mean, se in mc_checks]
        text = to_csv(["check", "status", "value", "reference", "stderr"],
                      [("a_star", "", a, "", ""), ("l_star", "", l, "", "")] + rows)
    _emit(cfg, f"verify.{fmt}", text, stdout)
    return code


COMMANDS = {"solve": cmd_solve, "curves": cmd_curves, "sweep": cmd_sweep, "voi": cmd_voi,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI configuration file")
    common.add_argument("--out", metavar="DIR", help="write results to DIR instead of stdout")
    common.add_argument("--seed", type=int, help="Monte Carlo seed")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="stopping-game", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve for the equilibrium thresholds")
    p = sub.add_parser("curves", parents=[common], help="equilibrium value curves")
    p.add_argument("--price-min", type=float, default=20.0)
    p.add_argument("--price-max", type=float, default=100.0)
    p.add_argument("--points", type=int, default=161)
    p = sub.add_parser("sweep", parents=[common], help="equilibria over observation rates")
    p.add_argument("--lambdas", default="0.1,0.5,1,2,5,10,50,100,500")
    p.add_argument("--price-min", type=float, default=20.0)
    p.add_argument("--price-max", type=float, default=100.0)
    p.add_argument("--points", type=int, default=81)
    p = sub.add_parser("voi", parents=[common], help="value of information")
    p.add_argument("--prices", default="40,50,60,70,80")
    p.add_argument("--lambdas", default="1")
    p = sub.add_parser("verify", parents=[common], help="optimality and Monte Carlo checks")
    p.add_argument("--a-star", type=float, default=None, help=argparse.SUPPRESS)
    p.add_argument("--l-star", type=float, default=None, help=argparse.SUPPRESS)
    return parser


def main(argv=None, stdout=None, env=None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, env=env,
                          overrides={("mc", "seed"): args.seed, ("output", "directory"): args.out,
                                     ("output", "format"): args.format})
        return COMMANDS[args.command](cfg, args, stdout)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StoppingGameError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
