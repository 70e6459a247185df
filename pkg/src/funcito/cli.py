"""``funcito`` command line.

Exit codes: 0 all metrics pass, 1 a tolerance failed, 2 bad configuration,
3 a modelling assumption was violated during simulation.
"""
from __future__ import annotations

import argparse
import json
import sys

from .derivatives import FDConfig
from .errors import AssumptionViolation, ContractError, DomainError
from .experiments import SLOPE_RANGE, ExperimentSpec, run, study_report, worker_count
from .simulation import SIGMA_MODELS, SimulationConfig

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ASSUMPTION = 0, 1, 2, 3

DEFAULT_FUNCTIONAL = {
    "ito-check": "quadratic_martingale",
    "hedge": "terminal:x2",
    "ibp": "terminal:x",
    "lifting": "terminal:x2",
    "approx": "",
    "jet-check": "smooth:x2",
    "study": "doleans",
}

# hedges default to finite differences so payoffs without a jet still work
DEFAULT_JETS = {"hedge": "fd"}

DEFAULTS = {
    "seed": 0,
    "paths": 1000,
    "steps": 256,
    "horizon": 1.0,
    "dimension": 1,
    "model": "brownian",
    "sigma": None,
    "mode": "instantaneous",
    "jets": None,
    "eps": None,
    "h": None,
    "scheme": "central",
    "nondiff_tol": 1e-3,
    "partner": None,
    "checkpoints": 8,
    "levels": "1,2,3,4,5,6,7,8",
    "path": "single_jump",
    "grid": "256,1024,4096",
    "study_kind": "ito-check",
    "slope_range": list(SLOPE_RANGE),
    "tol": None,
    "tolerances": {},
    "out": None,
    "format": "csv",
    "experimental": False,
    "chunk": 1000,
}


class ConfigError(ValueError):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", help="JSON file of flat key/value settings; flags override it")
    g.add_argument("--seed", type=int)
    g.add_argument("--paths", type=int, help="number of simulated paths")
    g.add_argument("--steps", type=int, help="time steps per path")
    g.add_argument("--horizon", type=float)
    g.add_argument("--dimension", type=int)
    g.add_argument("--model", choices=["brownian", "scaled_brownian", "state_dependent"])
    g.add_argument("--sigma", help="scale for scaled_brownian, or one of: " + ", ".join(SIGMA_MODELS))
    g.add_argument("--functional", help="functional or martingale id")
    g.add_argument("--partner", help="second martingale id for ibp")
    g.add_argument("--mode", choices=["instantaneous", "realized"], help="quadratic variation mode")
    g.add_argument("--jets", choices=["analytic", "fd"], help="jet source")
    g.add_argument("--eps", type=float, help="vertical bump size")
    g.add_argument("--h", type=float, help="horizontal step")
    g.add_argument("--scheme", choices=["central", "forward"])
    g.add_argument("--tol", type=float, help="tolerance of the primary metric")
    g.add_argument("--checkpoints", help="count, or comma-separated times")
    g.add_argument("--levels", help="comma-separated approximation levels N")
    g.add_argument("--path", help="builtin path name or path CSV file")
    g.add_argument("--grid", help="comma-separated grid sizes for study")
    g.add_argument("--study-kind", dest="study_kind", choices=["ito-check", "hedge"])
    g.add_argument("--chunk", type=int, help="paths per work unit")
    g.add_argument("--out", help="report file (stdout when omitted)")
    g.add_argument("--format", choices=["csv", "json"])
    g.add_argument("--experimental", action="store_true", default=None, help="enable experimental payoffs")

    parser = argparse.ArgumentParser(prog="funcito", description="Functional Ito calculus experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ito-check", "hedge", "ibp", "lifting", "approx", "jet-check", "study"):
        sub.add_parser(name, parents=[common])
    return parser


def _ints(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def settings(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    out = dict(DEFAULTS)
    out["functional"] = DEFAULT_FUNCTIONAL[args.command]
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(doc) - set(out)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        out.update(doc)
    for key, val in vars(args).items():
        if key not in ("command", "config") and val is not None:
            out[key] = val
    return out


def _sigma(model, sigma):
    if model == "scaled_brownian":
        return 1.0 if sigma is None else float(sigma)
    if model == "state_dependent":
        name = sigma or "tanh"
        if name not in SIGMA_MODELS:
            raise ConfigError(f"unknown sigma model {name!r}")
        return SIGMA_MODELS[name]
    return None


def _checkpoints(val):
    if isinstance(val, (list, tuple)):
        return [float(v) for v in val]
    text = str(val)
    if "," in text or "." in text:
        return [float(v) for v in text.split(",") if v.strip()]
    return int(text)


def spec_from_settings(kind: str, s: dict) -> ExperimentSpec:
    sim = SimulationConfig(
        model=s["model"],
        dimension=int(s["dimension"]),
        horizon=float(s["horizon"]),
        steps=int(s["steps"]),
        seed=int(s["seed"]),
        path_count=int(s["paths"]),
        sigma=_sigma(s["model"], s["sigma"]),
    )
    fd = FDConfig(eps_vertical=s["eps"], h_horizontal=s["h"], scheme=s["scheme"], nondiff_tol=float(s["nondiff_tol"]))
    tolerances = dict(s["tolerances"])
    if s["tol"] is not None:
        primary = {"ito-check": "residual", "hedge": "residual", "ibp": "z_score", "lifting": "discrepancy", "approx": "sup_error"}
        if kind == "jet-check":
            tolerances.setdefault("gradient", float(s["tol"]))
        elif kind in primary:
            tolerances[primary[kind]] = float(s["tol"])
    return ExperimentSpec(
        kind=kind,
        functional_id=s["functional"],
        sim=sim,
        fd=fd,
        qv_mode=s["mode"],
        jet_source=s["jets"] or DEFAULT_JETS.get(kind, "analytic"),
        partner_id=s["partner"],
        checkpoints=_checkpoints(s["checkpoints"]),
        levels=tuple(_ints(s["levels"])),
        path=s["path"],
        tolerances=tolerances,
        output=s["out"],
        format=s["format"],
        experimental=bool(s["experimental"]),
        workers=worker_count(),
        chunk=int(s["chunk"]),
    )


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        s = settings(args)
        if args.command == "study":
            spec = spec_from_settings(s["study_kind"], s)
            rep = study_report(spec, _ints(s["grid"]), tuple(s["slope_range"]))
        else:
            spec = spec_from_settings(args.command, s)
            rep = run(spec)
    except AssumptionViolation as exc:
        print(f"assumption violated: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except (ConfigError, DomainError, ContractError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if spec.output is None:
        sys.stdout.write(rep.csv_body() if spec.format == "csv" else rep.json_body())
        stream = sys.stderr
    else:
        stream = sys.stdout
    for line in rep.summary_lines():
        print(line, file=stream)
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
