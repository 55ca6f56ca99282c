"""
Command-line front end: ``relaydof simulate | bounds | verify``.

Run settings come from an optional JSON config file; command-line flags
override it. Results are deterministic: the same settings always produce
byte-identical output.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from dataclasses import dataclass
from fractions import Fraction
from statistics import fmean

from . import analysis
from .checks import verify_scenario
from .errors import RelayDofError
from .network import FeedbackMode
from .schemes import SCHEMES, run_scheme
from .schemes.common import DECODE_TOL

SCHEMA_VERSION = 1
TRIAL_FIELDS = ("seed", "slots", "messages", "dof", "dof_decimal", "max_residual", "redraws", "decoded")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUN_ERROR = 0, 1, 2, 3


class ConfigError(ValueError):
    kind = "config"


@dataclass(frozen=True)
class ExperimentConfig:
    layers: int = 3
    users: int = 3
    scheme: str = "onehop-33"
    feedback: str | None = None  # None: the scheme's native mode
    rounds: int = 1
    trials: int = 1
    seed: int = 0
    noise: bool = False
    power: float = 1e6
    format: str = "json"
    out: str | None = None

    @property
    def feedback_mode(self) -> FeedbackMode:
        return FeedbackMode(self.feedback) if self.feedback else SCHEMES[self.scheme].feedback

    def validate(self) -> "ExperimentConfig":
        info = SCHEMES.get(self.scheme)
        if info is None:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {', '.join(sorted(SCHEMES))}")
        if not info.users_ok(self.users):
            raise ConfigError(f"{self.scheme} needs {info.users_text}, got users={self.users}")
        if self.layers < info.min_layers:
            raise ConfigError(f"{self.scheme} needs layers >= {info.min_layers}, got {self.layers}")
        if self.feedback not in (None, "global", "onehop"):
            raise ConfigError(f"feedback must be 'global' or 'onehop', got {self.feedback!r}")
        for name in ("rounds", "trials"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if not self.power > 0:
            raise ConfigError("power must be positive")
        if self.format not in ("json", "csv"):
            raise ConfigError(f"format must be json or csv, got {self.format!r}")
        return self

    def public(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d["feedback"] = self.feedback_mode.value
        return d


_RUN_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    values = {}
    if args.config:
        try:
            with open(args.config) as fh:
                values = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(values) - _RUN_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    for key in _RUN_KEYS:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    try:
        return ExperimentConfig(**values).validate()
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def _frac(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def _float(x: float) -> float:
    return float(x)


def trial_row(report) -> dict:
    dof = Fraction(report.messages_delivered, report.slots_used)
    return {
        "seed": report.seed,
        "slots": report.slots_used,
        "messages": report.messages_delivered,
        "dof": _frac(dof),
        "dof_decimal": _float(dof),
        "max_residual": _float(report.max_residual),
        "redraws": report.redraw_count,
        "decoded": report.decoded,
    }


def aggregate(cfg: ExperimentConfig, reports) -> dict:
    res = [r.max_residual for r in reports]
    dof = Fraction(sum(r.messages_delivered for r in reports), sum(r.slots_used for r in reports))
    target = analysis.scheme_asymptote(cfg.scheme, cfg.users).exact
    return {
        "min_residual": _float(min(res)),
        "max_residual": _float(max(res)),
        "mean_residual": _float(fmean(res)),
        "redraws": sum(r.redraw_count for r in reports),
        "dof": _frac(dof),
        "dof_decimal": _float(dof),
        "asymptote": _frac(target),
        "asymptote_decimal": _float(target),
        "gap": _frac(target - dof),
        "gap_decimal": _float(target - dof),
        "all_decoded": all(r.decoded for r in reports),
    }


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def render(cfg: ExperimentConfig, rows, agg) -> str:
    if cfg.format == "json":
        return _json({"schema_version": SCHEMA_VERSION, "config": cfg.public(),
                      "trials": rows, "aggregate": agg})
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TRIAL_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def error_record(exc: Exception, **context) -> dict:
    rec = {"kind": getattr(exc, "kind", "error"), "message": str(exc)}
    for attr in ("slot", "layer", "node", "hop", "queried_slot"):
        v = getattr(exc, attr, None)
        if v is not None:
            rec[attr] = v
    rec.update(context)
    return {"schema_version": SCHEMA_VERSION, "error": rec}


def _run_kwargs(cfg: ExperimentConfig) -> dict:
    return dict(noise=cfg.noise, power=cfg.power, feedback=cfg.feedback_mode)


def cmd_simulate(cfg: ExperimentConfig) -> int:
    reports = []
    for i in range(cfg.trials):
        seed = cfg.seed + i
        try:
            reports.append(run_scheme(cfg.scheme, cfg.layers, cfg.users, cfg.rounds, seed,
                                      **_run_kwargs(cfg)))
        except RelayDofError as exc:
            _emit(_json(error_record(exc, trial=i, seed=seed)), cfg.out)
            return EXIT_RUN_ERROR
    rows = [trial_row(r) for r in reports]
    agg = aggregate(cfg, reports)
    _emit(render(cfg, rows, agg), cfg.out)
    return EXIT_OK if agg["all_decoded"] else EXIT_FAILED


def bounds_rows(users) -> list[dict]:
    rows = []
    for K in users:
        lo, hi = analysis.theorem2_bounds(K)
        casc = analysis.cascade_dof(K)
        rows.append({"K": K, "cascade": casc, "lower": lo, "upper": hi})
    return rows


def cmd_bounds(users, fmt: str = "text", out: str | None = None) -> int:
    rows = bounds_rows(users)
    cols = ("cascade", "lower", "upper")
    if fmt == "json":
        data = [{"K": r["K"], **{c: _frac(r[c].exact) for c in cols},
                 **{c + "_decimal": r[c].approx for c in cols}} for r in rows]
        _emit(_json({"schema_version": SCHEMA_VERSION, "bounds": data}), out)
        return EXIT_OK
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["K", *cols, *(c + "_decimal" for c in cols)])
        for r in rows:
            w.writerow([r["K"], *(_frac(r[c].exact) for c in cols), *(repr(r[c].approx) for c in cols)])
        _emit(buf.getvalue(), out)
        return EXIT_OK
    lines = [f"{'K':>4}  {'cascade':>18}  {'lower':>18}  {'upper':>22}"]
    for r in rows:
        cells = [f"{_frac(r[c].exact):>9} {r[c].approx:8.5f}" for c in cols]
        lines.append(f"{r['K']:>4}  {cells[0]:>18}  {cells[1]:>18}  {cells[2]:>22}")
    _emit("\n".join(lines) + "\n", out)
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, tol: float = DECODE_TOL, fault: bool = False) -> int:
    if fault and cfg.scheme == "global-k2":
        raise ConfigError("--inject-fault needs a one-hop scheme")
    failed = False
    lines = []
    for i in range(cfg.trials):
        seed = cfg.seed + i
        results = verify_scenario(cfg.scheme, cfg.layers, cfg.users, cfg.rounds, seed,
                                  noise=cfg.noise, power=cfg.power, feedback=cfg.feedback_mode,
                                  decode_tol=tol, fault=fault)
        lines.append(f"seed {seed}")
        for r in results:
            lines.append(f"  {r.name:<17} {r.status:<5} {r.detail}")
            failed |= r.passed is False
    lines.append("all invariants hold" if not failed else "invariant failures detected")
    _emit("\n".join(lines) + "\n", cfg.out)
    return EXIT_FAILED if failed else EXIT_OK


def _run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON file with any subset of the run settings")
    p.add_argument("--layers", type=int, help="number of layers N (source and destinations included)")
    p.add_argument("--users", type=int, help="users per layer K")
    p.add_argument("--scheme", choices=sorted(SCHEMES))
    p.add_argument("--feedback", choices=("global", "onehop"),
                   help="CSIT feedback range; defaults to the scheme's own")
    p.add_argument("--rounds", type=int, help="rounds (blocks for global-k2)")
    p.add_argument("--trials", type=int, help="independent trials; seeds are seed, seed+1, ...")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--noise", action="store_true", default=None, help="add receiver noise")
    p.add_argument("--power", type=float, help="transmit power P in noise mode")
    p.add_argument("--out", help="write here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relaydof", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run seeded trials and write a result file")
    _run_flags(sim)
    sim.add_argument("--format", choices=("json", "csv"))

    b = sub.add_parser("bounds", help="print closed-form DoF bounds")
    b.add_argument("--users", type=int, nargs="+", help="K values (default 2..10)")
    b.add_argument("--k-max", type=int, default=10, help="largest K when --users is absent")
    b.add_argument("--format", choices=("text", "json", "csv"), default="text")
    b.add_argument("--out")

    v = sub.add_parser("verify", help="run the invariant suite on a scenario")
    _run_flags(v)
    v.add_argument("--tol", type=float, default=DECODE_TOL, help="decode residual tolerance")
    v.add_argument("--inject-fault", action="store_true",
                   help="corrupt one swap slot so the formability check must trip")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            users = args.users or list(range(2, args.k_max + 1))
            if min(users) < 2:
                raise ConfigError("K values must be >= 2")
            return cmd_bounds(users, args.format, args.out)
        cfg = load_config(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        return cmd_verify(cfg, args.tol, args.inject_fault)
    except ConfigError as exc:
        sys.stderr.write(_json(error_record(exc)))
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
