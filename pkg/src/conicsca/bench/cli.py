"""Command-line harness: ``conicsca <subcommand> [flags]``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines, then explicit flags.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .experiments import APP_PARAMS, ExperimentConfig, run_experiment, write_csv

__all__ = ["main", "build_parser", "read_config", "ConfigError"]

_COMMON = {"seed": int, "trials": int, "out": str, "max_iter": int, "tol": float, "jobs": int}
_SURROGATES = ("app1", "app2", "app3", "app4", "app5", "app6")


class ConfigError(ValueError):
    """A malformed config file or an invalid setting."""


def _type_of(default):
    return type(default) if not isinstance(default, bool) else bool


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conicsca",
                                     description="Seeded SCA experiments with CSV traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        # SUPPRESS keeps unset flags out of the namespace so the config file can fill them
        S = argparse.SUPPRESS
        p.add_argument("--config", default=S, help="key = value settings file")
        p.add_argument("--seed", type=int, default=S, help="base seed (default 0)")
        p.add_argument("--trials", type=int, default=S, help="number of trials")
        p.add_argument("--out", default=S, help="output directory (default runs)")
        p.add_argument("--max-iter", dest="max_iter", type=int, default=S,
                       help="SCA iteration cap (default 200)")
        p.add_argument("--tol", type=float, default=S,
                       help="stop when the objective moves less than this over 5 iterations")

    for app, params in APP_PARAMS.items():
        p = sub.add_parser(app, help=f"run the {app} experiment")
        common(p)
        p.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                       help="worker processes (default 1)")
        p.add_argument("--no-timing", dest="timing", action="store_false",
                       default=argparse.SUPPRESS,
                       help="leave solve_ms empty so reruns are byte-identical")
        for key, default in params.items():
            kw = {"default": argparse.SUPPRESS, "dest": key, "help": f"default {default}"}
            if key == "formulation":
                kw["choices"] = ("wsr-socp", "wsr-gm", "wsr-qp")
            elif key == "rho":
                kw["choices"] = ("provable", "adaptive")
            elif key == "shadow_scale":
                kw["choices"] = ("db", "natural")
            elif key == "restarts":
                kw.update(type=int, help="random starts per trial, best run reported (default 1)")
            else:
                kw["type"] = _type_of(default)
            p.add_argument(_flag(key), **kw)

    p = sub.add_parser("check-surrogates", help="numerical check of the surrogate conditions")
    common(p)
    p.add_argument("--samples", type=int, default=argparse.SUPPRESS,
                   help="sample points per instance (default 200)")
    p.add_argument("--kinds", default=argparse.SUPPRESS,
                   help="comma-separated subset of " + ",".join(_SURROGATES))
    return parser


def read_config(path: str, allowed: dict) -> dict:
    """Parse ``key = value`` lines. ``#`` starts a comment; keys may use dashes.

    ``allowed`` maps keys to converters. Errors name the file and line.
    """
    out = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected 'key = value', got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise ConfigError(f"{path}:{no}: unknown setting {key!r}; "
                              f"known: {', '.join(sorted(allowed))}")
        try:
            out[key] = allowed[key](val)
        except ValueError:
            raise ConfigError(f"{path}:{no}: bad value {val!r} for {key}") from None
    return out


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def _settings(command: str, ns: argparse.Namespace) -> dict:
    if command == "check-surrogates":
        allowed = {**_COMMON, "samples": int, "kinds": str}
        allowed.pop("jobs")
    else:
        allowed = {**_COMMON, "timing": _parse_bool}
        for key, default in APP_PARAMS[command].items():
            allowed[key] = _type_of(default)
    given = vars(ns).copy()
    given.pop("command")
    path = given.pop("config", None)
    merged = read_config(path, allowed) if path else {}
    merged.update(given)
    return merged


def _run_app(command: str, s: dict) -> int:
    params = {k: s.pop(k) for k in list(s) if k in APP_PARAMS[command]}
    try:
        cfg = ExperimentConfig(app=command, params=params, **s)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    results, trace_path, summary_path = run_experiment(cfg)
    failed = [r for r in results if r.failed]
    print(f"wrote {trace_path} and {summary_path}")
    finals = [r.records[-1].objective for r in results if not r.failed]
    if finals:
        print(f"{len(finals)}/{len(results)} trials ok, mean final objective "
              f"{np.mean(finals):.6g}")
    for r in failed:
        print(f"trial {r.trial} failed: {r.message}", file=sys.stderr)
    return 1 if failed else 0


def _check_surrogates(s: dict) -> int:
    from ..surrogates import random_surrogate, verify_conditions

    kinds = s.get("kinds", ",".join(_SURROGATES)).split(",")
    bad = [k for k in kinds if k not in _SURROGATES]
    if bad:
        raise ConfigError(f"unknown surrogate kinds: {', '.join(bad)}")
    trials, seed, samples = s.get("trials", 100), s.get("seed", 0), s.get("samples", 200)
    rows, failures = [], 0
    for kind in kinds:
        worst = np.zeros(3)
        passed = 0
        for t in range(trials):
            rng = np.random.default_rng([seed, _SURROGATES.index(kind), t])
            rep = verify_conditions(random_surrogate(kind, rng), samples=samples, rng=rng)
            ok = rep.passes()
            passed += ok
            worst = np.maximum(worst, [rep.upper_violation, rep.anchor_gap, rep.grad_mismatch])
            rows.append([kind, t, repr(rep.upper_violation), repr(rep.anchor_gap),
                         repr(rep.grad_mismatch), int(ok)])
        failures += trials - passed
        print(f"{kind}: {passed}/{trials} pass; worst upper {worst[0]:.1e}, "
              f"anchor {worst[1]:.1e}, gradient {worst[2]:.1e}")
    out = s.get("out", "runs")
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "surrogate_check.csv")
    write_csv(path, ("kind", "instance", "upper_violation", "anchor_gap", "grad_mismatch",
                     "passes"), rows)
    print(f"wrote {path}")
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        s = _settings(ns.command, ns)
        if ns.command == "check-surrogates":
            return _check_surrogates(s)
        return _run_app(ns.command, s)
    except ConfigError as exc:
        print(f"conicsca: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
